//! Endogenous-operation model.
//!
//! Switching miners operate only when the fees waiting in the pool plus the
//! block reward cover their flow cost, so in equilibrium they follow a
//! threshold rule: suspend while pool time is below `t*`, operate after it.
//! A mass `eta` of committed miners operates throughout.
//!
//! For `eta = 0` every object has a closed form on `t* in [0, K)`; the
//! general case evaluates the bid integral by quadrature.

use alloc::vec::Vec;
use core::cell::Cell;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::numerics::{bisect, integrate_with_breaks, Tolerance};
use crate::uc::{rate_for, uc_bid, uc_w, MAX_POOL_TIME};
use crate::{Error, MarketParams, Result};

/// Pool time at which switching miners start operating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdTime {
    /// Miners operate at every pool time (`t* = -inf`).
    NeverSuspend,
    Finite(f64),
    /// Miners never operate (`t* = +inf`).
    NeverOperate,
}

impl ThresholdTime {
    pub fn finite(value: f64) -> Result<Self> {
        if value >= 0.0 && value.is_finite() {
            Ok(Self::Finite(value))
        } else {
            Err(Error::Domain("finite threshold must be a nonnegative real"))
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Self::Finite(_))
    }

    /// Threshold as an extended real.
    pub fn as_extended(&self) -> f64 {
        match self {
            Self::NeverSuspend => f64::NEG_INFINITY,
            Self::Finite(v) => *v,
            Self::NeverOperate => f64::INFINITY,
        }
    }
}

impl fmt::Display for ThresholdTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NeverSuspend => f.write_str("never_suspend"),
            Self::Finite(v) => write!(f, "{v}"),
            Self::NeverOperate => f.write_str("never_operate"),
        }
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for ThresholdTime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Self::NeverSuspend => s.serialize_str("never_suspend"),
            Self::Finite(v) => s.serialize_f64(*v),
            Self::NeverOperate => s.serialize_str("never_operate"),
        }
    }
}

/// Validation probability when the request has `s` mass of higher bids ahead
/// and switching miners start operating `l` time units from now.
pub fn eo_w(s: f64, l: f64, p: &MarketParams) -> f64 {
    if l < 0.0 {
        return uc_w(s, p);
    }
    let room = (p.capacity - s).max(0.0);
    if room <= l {
        -(-p.eta * p.lambda * room).exp_m1()
    } else {
        -(-p.eta * p.lambda * l - p.lambda * (room - l)).exp_m1()
    }
}

/// Partial derivative of [`eo_w`] with respect to `s`.
pub fn eo_w_ds(s: f64, l: f64, p: &MarketParams) -> f64 {
    let room = p.capacity - s;
    if room <= 0.0 {
        return 0.0;
    }
    if l < 0.0 {
        -p.lambda * (-p.lambda * room).exp()
    } else if room <= l {
        -p.eta * p.lambda * (-p.eta * p.lambda * room).exp()
    } else {
        -p.lambda * (-p.eta * p.lambda * l - p.lambda * (room - l)).exp()
    }
}

/// Equilibrium bid of the time-`t` user when the threshold is `tstar`.
///
/// Uses the closed form for `eta = 0` (which requires `tstar < K`) and the
/// quadrature of the hazard integral otherwise.
pub fn eo_bid(t: f64, tstar: ThresholdTime, p: &MarketParams) -> Result<f64> {
    let t = t.clamp(0.0, MAX_POOL_TIME);
    match tstar {
        ThresholdTime::NeverSuspend => Ok(uc_bid(t, p)),
        ThresholdTime::NeverOperate => {
            if p.eta <= 0.0 {
                return Err(Error::Domain("no blocks ever arrive when eta = 0 and miners never operate"));
            }
            Ok(-(-rate_for(p.eta * p.lambda, p.capacity) * t).exp_m1())
        }
        ThresholdTime::Finite(ts) => {
            if !(ts >= 0.0) {
                return Err(Error::Domain("threshold must be >= 0"));
            }
            if p.eta == 0.0 {
                if ts >= p.capacity {
                    return Err(Error::Domain("closed-form bid needs threshold < capacity when eta = 0"));
                }
                Ok(bid_closed_form(t, ts, p))
            } else {
                eo_bid_quadrature(t, tstar, p)
            }
        }
    }
}

fn bid_closed_form(t: f64, ts: f64, p: &MarketParams) -> f64 {
    let lam = p.lambda;
    let k = p.capacity;
    if t < ts {
        // e^{-lam(K - ts)} (1 - e^{-lam t}) / (1 - e^{-lam(K + t - ts)})
        let num = (-lam * (k - ts)).exp() * -(-lam * t).exp_m1();
        num / -(-lam * (k + t - ts)).exp_m1()
    } else {
        let log_a = (-(-lam * (k - ts)).exp_m1()).ln();
        let log_w0 = (-(-lam * k).exp_m1()).ln();
        // `+ 0.0` turns the -0 at t = t* = 0 into 0
        -(log_a - log_w0 - rate_for(lam, k) * (t - ts)).exp_m1() + 0.0
    }
}

/// Equilibrium bid from the hazard integral
/// `1 - exp(int_0^t W_s(0, t* - tau) / W(0, t* - tau) dtau)`, by quadrature.
///
/// Valid for any `eta > 0`, and for `eta = 0` when `t* < K`.
pub fn eo_bid_quadrature(t: f64, tstar: ThresholdTime, p: &MarketParams) -> Result<f64> {
    let t = t.clamp(0.0, MAX_POOL_TIME);
    let ts = tstar.as_extended();
    if p.eta == 0.0 && ts >= p.capacity {
        return Err(Error::Domain("hazard integral undefined for threshold >= capacity when eta = 0"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let hazard = |tau: f64| {
        let l = ts - tau;
        eo_w_ds(0.0, l, p) / eo_w(0.0, l, p)
    };
    let breaks = [ts - p.capacity, ts];
    let integral = integrate_with_breaks(hazard, 0.0, t, &breaks, Tolerance::default())?;
    Ok(-integral.exp_m1())
}

/// Fees collected by a block arriving at pool time `t`: the integral of bids
/// over the top `capacity` of the pool.
pub fn block_fee_income(t: f64, tstar: ThresholdTime, p: &MarketParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain("pool time must be >= 0"));
    }
    let lo = (t - p.capacity).max(0.0);
    let mut failure = None;
    let breaks: Vec<f64> = tstar.value().into_iter().collect();
    let v = integrate_with_breaks(
        |tau| match eo_bid(tau, tstar, p) {
            Ok(b) => b,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        lo,
        t,
        &breaks,
        Tolerance::default(),
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Miner surplus `M*(t*)`: fees collected by a block produced exactly at the
/// threshold time.
///
/// Closed form for `eta = 0` and `t* in [0, K]`; quadrature otherwise.
pub fn miner_surplus(tstar: f64, p: &MarketParams) -> Result<f64> {
    if !(tstar >= 0.0) || !tstar.is_finite() {
        return Err(Error::Domain("threshold must be a finite real >= 0"));
    }
    if p.eta == 0.0 {
        if tstar > p.capacity {
            return Err(Error::Domain("miner surplus needs threshold <= capacity when eta = 0"));
        }
        Ok(miner_surplus_closed_form(tstar, p))
    } else {
        miner_surplus_quadrature(tstar, p)
    }
}

fn miner_surplus_closed_form(ts: f64, p: &MarketParams) -> f64 {
    let lam = p.lambda;
    let gap = p.capacity - ts;
    let e = (-lam * gap).exp();
    let a = -(-lam * gap).exp_m1();
    let w0 = -(-lam * p.capacity).exp_m1();
    let log_term = if a > 0.0 { a * (a.ln() - w0.ln()) / lam } else { 0.0 };
    e * ts + log_term
}

/// `M*(t*)` by adaptive quadrature of [`eo_bid`] over `[(t* - K)+, t*]`.
pub fn miner_surplus_quadrature(tstar: f64, p: &MarketParams) -> Result<f64> {
    if !(tstar >= 0.0) || !tstar.is_finite() {
        return Err(Error::Domain("threshold must be a finite real >= 0"));
    }
    if p.eta == 0.0 && tstar >= p.capacity {
        // bids reach 1 at the upper end, so the integral is the full window
        if tstar == p.capacity {
            return Ok(miner_surplus_closed_form(tstar, p));
        }
        return Err(Error::Domain("miner surplus needs threshold <= capacity when eta = 0"));
    }
    block_fee_income(tstar, ThresholdTime::Finite(tstar), p)
}

/// Equilibrium threshold, with `M*` from [`miner_surplus`].
pub fn equilibrium_threshold(p: &MarketParams) -> Result<ThresholdTime> {
    solve_threshold(p, |t| miner_surplus(t, p))
}

/// Equilibrium threshold, with `M*` from [`miner_surplus_quadrature`].
pub fn equilibrium_threshold_quadrature(p: &MarketParams) -> Result<ThresholdTime> {
    solve_threshold(p, |t| miner_surplus_quadrature(t, p))
}

fn solve_threshold<M>(p: &MarketParams, surplus: M) -> Result<ThresholdTime>
where
    M: Fn(f64) -> Result<f64>,
{
    p.validate()?;
    let (lam, c, y, k) = (p.lambda, p.cost, p.reward, p.capacity);
    if lam * y > c {
        return Ok(ThresholdTime::NeverSuspend);
    }
    if lam * (k + y) <= c {
        return Ok(ThresholdTime::NeverOperate);
    }
    let failure: Cell<Option<Error>> = Cell::new(None);
    let profit = |t: f64| match surplus(t) {
        Ok(m) => lam * (m + y) - c,
        Err(e) => {
            let first = failure.take().unwrap_or(e);
            failure.set(Some(first));
            f64::NAN
        }
    };
    if profit(0.0) >= 0.0 {
        return Ok(ThresholdTime::Finite(0.0));
    }
    let hi = if p.eta == 0.0 {
        k - 1e-12
    } else {
        let mut hi = k;
        let mut doublings = 0;
        while !(profit(hi) >= 0.0) {
            if doublings == 60 || has_failed(&failure) {
                break;
            }
            hi *= 2.0;
            doublings += 1;
        }
        hi
    };
    let root = bisect(profit, 0.0, hi, Tolerance::tight());
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(ThresholdTime::Finite(root?))
}

fn has_failed(failure: &Cell<Option<Error>>) -> bool {
    let f = failure.take();
    let failed = f.is_some();
    failure.set(f);
    failed
}

fn require_eta_zero(p: &MarketParams) -> Result<()> {
    if p.eta == 0.0 {
        Ok(())
    } else {
        Err(Error::Domain("welfare analysis assumes eta = 0"))
    }
}

fn require_threshold_below_capacity(tstar: f64, p: &MarketParams) -> Result<()> {
    if tstar >= 0.0 && tstar < p.capacity {
        Ok(())
    } else {
        Err(Error::Domain("threshold must lie in [0, capacity)"))
    }
}

/// Stationary density of pool time under threshold `tstar` (`eta = 0`).
///
/// Flat at `lambda / (1 + lambda t*)` before the threshold, exponential decay
/// at rate `lambda` after it. The flat level is the one that makes the
/// density integrate to one, consistent with `psi(0) = lambda (1 - Psi(t*))`.
pub fn stationary_density(t: f64, tstar: f64, p: &MarketParams) -> Result<f64> {
    require_eta_zero(p)?;
    require_threshold_below_capacity(tstar, p)?;
    let lam = p.lambda;
    let norm = 1.0 + lam * tstar;
    Ok(if t < 0.0 {
        0.0
    } else if t < tstar {
        lam / norm
    } else {
        lam * (-lam * (t - tstar)).exp() / norm
    })
}

/// CDF matching [`stationary_density`].
pub fn stationary_cdf(t: f64, tstar: f64, p: &MarketParams) -> Result<f64> {
    require_eta_zero(p)?;
    require_threshold_below_capacity(tstar, p)?;
    let lam = p.lambda;
    let norm = 1.0 + lam * tstar;
    Ok(if t <= 0.0 {
        0.0
    } else if t < tstar {
        lam * t / norm
    } else {
        (lam * tstar - (-lam * (t - tstar)).exp_m1()) / norm
    })
}

/// Stationary social welfare: validated flow surplus minus operating cost.
pub fn social_welfare(tstar: f64, p: &MarketParams) -> Result<f64> {
    require_eta_zero(p)?;
    if !(tstar >= 0.0 && tstar <= p.capacity) {
        return Err(Error::Domain("threshold must lie in [0, capacity]"));
    }
    let lam = p.lambda;
    Ok(1.0 - ((-lam * (p.capacity - tstar)).exp() + p.cost) / (1.0 + lam * tstar))
}

/// Stationary expected payoff of users under threshold `tstar` (`eta = 0`).
pub fn eo_user_welfare(tstar: f64, p: &MarketParams) -> Result<f64> {
    require_eta_zero(p)?;
    require_threshold_below_capacity(tstar, p)?;
    let lam = p.lambda;
    // W(0, t* - t) (1 - beta(t, t*)) is constant before the threshold
    let a = -(-lam * (p.capacity - tstar)).exp_m1();
    let r = rate_for(lam, p.capacity);
    Ok(lam * a * (tstar + 1.0 / (r + lam)) / (1.0 + lam * tstar))
}

/// Welfare-maximizing threshold: root of `t e^{-lambda (K - t)} = c / lambda`.
pub fn efficient_threshold(p: &MarketParams) -> Result<ThresholdTime> {
    p.validate()?;
    require_eta_zero(p)?;
    let (lam, k, c) = (p.lambda, p.capacity, p.cost);
    if lam * k <= c {
        return Ok(ThresholdTime::NeverOperate);
    }
    let root = bisect(
        |t| t * (-lam * (k - t)).exp() - c / lam,
        0.0,
        k,
        Tolerance::tight(),
    )?;
    Ok(ThresholdTime::Finite(root))
}

/// Block reward under which the equilibrium threshold equals the efficient one.
pub fn optimal_block_reward(p: &MarketParams) -> Result<f64> {
    p.validate()?;
    require_eta_zero(p)?;
    if p.throughput() <= p.cost {
        return Err(Error::Domain("optimal reward needs lambda * capacity > cost"));
    }
    let t_o = match efficient_threshold(p)? {
        ThresholdTime::Finite(v) => v,
        _ => return Err(Error::Domain("efficient threshold is not finite")),
    };
    Ok(t_o * (-p.lambda * (p.capacity - t_o)).exp() - miner_surplus(t_o, p)?)
}

/// Welfare summary at the equilibrium and efficient thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct WelfareReport {
    pub t_e: ThresholdTime,
    pub t_o: ThresholdTime,
    pub y_o: f64,
    pub sw_at_te: f64,
    pub sw_at_to: f64,
    pub user_welfare: f64,
    pub miner_surplus_at_te: f64,
}

/// Social welfare of an arbitrary threshold (`eta = 0`); a miner that never
/// operates yields zero, one that never suspends matches `t* = 0`.
pub fn social_welfare_at(tstar: ThresholdTime, p: &MarketParams) -> Result<f64> {
    match tstar {
        ThresholdTime::NeverSuspend => social_welfare(0.0, p),
        ThresholdTime::Finite(v) => social_welfare(v, p),
        ThresholdTime::NeverOperate => {
            require_eta_zero(p)?;
            Ok(0.0)
        }
    }
}

pub fn welfare_report(p: &MarketParams) -> Result<WelfareReport> {
    p.validate()?;
    require_eta_zero(p)?;
    let t_e = equilibrium_threshold(p)?;
    let t_o = efficient_threshold(p)?;
    // with lambda K <= c the efficient outcome is no operation, which a zero
    // reward already implements
    let y_o = if t_o.is_finite() { optimal_block_reward(p)? } else { 0.0 };
    let (user_welfare, miner_surplus_at_te) = match t_e {
        ThresholdTime::NeverSuspend => (eo_user_welfare(0.0, p)?, 0.0),
        ThresholdTime::Finite(v) => (eo_user_welfare(v, p)?, miner_surplus(v, p)?),
        ThresholdTime::NeverOperate => (0.0, 0.0),
    };
    Ok(WelfareReport {
        t_e,
        t_o,
        y_o,
        sw_at_te: social_welfare_at(t_e, p)?,
        sw_at_to: social_welfare_at(t_o, p)?,
        user_welfare,
        miner_surplus_at_te,
    })
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SweepParameter {
    Lambda,
    Capacity,
    Cost,
    Reward,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::Capacity => "capacity",
            Self::Cost => "cost",
            Self::Reward => "reward",
        }
    }

    pub fn apply(&self, p: &MarketParams, value: f64) -> MarketParams {
        let mut q = *p;
        match self {
            Self::Lambda => q.lambda = value,
            Self::Capacity => q.capacity = value,
            Self::Cost => q.cost = value,
            Self::Reward => q.reward = value,
        }
        q
    }
}

impl core::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(Self::Lambda),
            "capacity" => Ok(Self::Capacity),
            "cost" => Ok(Self::Cost),
            "reward" => Ok(Self::Reward),
            _ => Err(Error::BadConfig("sweep parameter must be lambda, capacity, cost or reward")),
        }
    }
}

/// Solutions at one sweep point. Welfare fields are `None` when `eta > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub t_e: ThresholdTime,
    pub t_o: Option<ThresholdTime>,
    pub y_o: Option<f64>,
    pub sw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: core::result::Result<SweepPoint, Error>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub base: MarketParams,
    pub rows: Vec<SweepRow>,
}

/// Solves one sweep point.
pub fn sweep_point(p: &MarketParams, parameter: SweepParameter, value: f64) -> core::result::Result<SweepPoint, Error> {
    let q = parameter.apply(p, value);
    q.validate()?;
    if q.eta == 0.0 {
        let r = welfare_report(&q)?;
        Ok(SweepPoint {
            t_e: r.t_e,
            t_o: Some(r.t_o),
            y_o: Some(r.y_o),
            sw: Some(r.sw_at_te),
        })
    } else {
        Ok(SweepPoint {
            t_e: equilibrium_threshold(&q)?,
            t_o: None,
            y_o: None,
            sw: None,
        })
    }
}

/// Checks that a sweep grid is finite and strictly increasing.
pub fn check_sweep_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::BadConfig("sweep grid must be nonempty, finite and strictly increasing"));
    }
    Ok(())
}

/// Solves every grid point; failing points become invalid rows instead of
/// aborting the sweep.
pub fn sweep(p: &MarketParams, parameter: SweepParameter, grid: &[f64]) -> Result<SweepTable> {
    check_sweep_grid(grid)?;
    let rows = grid
        .iter()
        .map(|&value| SweepRow {
            value,
            outcome: sweep_point(p, parameter, value),
        })
        .collect();
    Ok(SweepTable {
        parameter,
        base: *p,
        rows,
    })
}

impl SweepTable {
    /// `(value, t_E)` for rows with a finite equilibrium threshold.
    pub fn finite_t_e(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| match &r.outcome {
                Ok(SweepPoint {
                    t_e: ThresholdTime::Finite(v),
                    ..
                }) => Some((r.value, *v)),
                _ => None,
            })
            .collect()
    }

    /// Sign changes in the first differences of the finite `t_E` column.
    pub fn t_e_sign_changes(&self, dead_band: f64) -> usize {
        let ys: Vec<f64> = self.finite_t_e().into_iter().map(|(_, y)| y).collect();
        count_sign_changes(&ys, dead_band)
    }

    /// True when no first difference of the finite `t_E` column exceeds `dead_band`.
    pub fn t_e_nonincreasing(&self, dead_band: f64) -> bool {
        let ys: Vec<f64> = self.finite_t_e().into_iter().map(|(_, y)| y).collect();
        ys.windows(2).all(|w| w[1] - w[0] <= dead_band)
    }
}

/// Number of sign changes among first differences whose magnitude exceeds
/// `dead_band`; smaller differences are ignored.
pub fn count_sign_changes(values: &[f64], dead_band: f64) -> usize {
    let mut last = 0i8;
    let mut changes = 0;
    for w in values.windows(2) {
        let d = w[1] - w[0];
        let sign = if d > dead_band {
            1
        } else if d < -dead_band {
            -1
        } else {
            0
        };
        if sign != 0 {
            if last != 0 && sign != last {
                changes += 1;
            }
            last = sign;
        }
    }
    changes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig() -> MarketParams {
        MarketParams::new(1.2, 1.0).with_cost(0.3)
    }

    #[test]
    fn w_branches() {
        let p = fig();
        assert!((eo_w(0.0, -1.0, &p) - 0.698806).abs() < 1e-6);
        assert!((eo_w(0.0, 0.5, &p) - 0.451188).abs() < 1e-6);
        assert_eq!(eo_w(0.2, 0.9, &p), 0.0);
        assert_eq!(eo_w(0.3, f64::INFINITY, &p), 0.0);
        let p1 = p.with_eta(1.0);
        for (s, l) in [(0.0, 0.3), (0.4, 0.7), (-0.5, 2.0)] {
            assert!((eo_w(s, l, &p1) - uc_w(s, &p1)).abs() < 1e-15);
        }
    }

    #[test]
    fn w_derivative_matches_finite_difference() {
        let p = fig().with_eta(0.3);
        for (s, l) in [(0.0, 0.3), (0.1, 2.0), (-0.4, -1.0), (0.5, 0.2)] {
            let fd = crate::numerics::central_difference(|x| eo_w(x, l, &p), s, 1e-6);
            assert!((fd - eo_w_ds(s, l, &p)).abs() < 1e-7, "s={s} l={l}");
        }
    }

    #[test]
    fn bid_values() {
        let p = fig();
        let half = ThresholdTime::Finite(0.5);
        assert_eq!(eo_bid(0.0, half, &p).unwrap(), 0.0);
        assert!((eo_bid(0.5, half, &p).unwrap() - 0.354343).abs() < 1e-5);
        let at_zero = eo_bid(1.0, ThresholdTime::Finite(0.0), &p).unwrap();
        assert!((at_zero - 0.40382).abs() < 1e-5);
        assert!((at_zero - uc_bid(1.0, &p)).abs() < 1e-14);
    }

    #[test]
    fn bid_domain_errors() {
        let p = fig();
        assert!(matches!(eo_bid(0.3, ThresholdTime::Finite(1.0), &p), Err(Error::Domain(_))));
        assert!(matches!(eo_bid(0.3, ThresholdTime::NeverOperate, &p), Err(Error::Domain(_))));
        assert!(eo_bid(0.3, ThresholdTime::NeverOperate, &p.with_eta(0.5)).is_ok());
    }

    #[test]
    fn bid_closed_form_matches_integral_form_near_zero_eta() {
        let p = fig();
        let q = p.with_eta(1e-8);
        for ts in [0.1, 0.5, 0.9] {
            for t in [0.05, 0.3, 0.5, 0.8, 2.0] {
                let closed = eo_bid(t, ThresholdTime::Finite(ts), &p).unwrap();
                let quad = eo_bid(t, ThresholdTime::Finite(ts), &q).unwrap();
                assert!((closed - quad).abs() < 1e-6, "ts={ts} t={t}: {closed} vs {quad}");
            }
        }
    }

    #[test]
    fn branch_continuity_at_threshold() {
        let p = fig();
        for ts in [0.1, 0.4714, 0.8] {
            let left = bid_closed_form(ts * (1.0 - 1e-14), ts, &p);
            let right = bid_closed_form(ts, ts, &p);
            assert!((left - right).abs() < 1e-10);
        }
    }

    #[test]
    fn surplus_values() {
        let p = fig();
        assert_eq!(miner_surplus(0.0, &p).unwrap(), 0.0);
        assert!((miner_surplus(0.5, &p).unwrap() - 0.109917).abs() < 1e-5);
        assert!((miner_surplus(0.4714, &p).unwrap() - 0.09448).abs() < 2e-4);
        assert!((miner_surplus(1.0, &p).unwrap() - 1.0).abs() < 1e-15);
        assert!(miner_surplus(1.2, &p).is_err());
    }

    #[test]
    fn threshold_cases() {
        let p = fig();
        assert_eq!(equilibrium_threshold(&p.with_reward(0.5)).unwrap(), ThresholdTime::NeverSuspend);
        assert_eq!(equilibrium_threshold(&p.with_cost(2.7)).unwrap(), ThresholdTime::NeverOperate);
        let t_e = equilibrium_threshold(&p).unwrap().value().unwrap();
        assert!((t_e - 0.676).abs() < 0.005);
        // lambda y == c sits on the boundary and starts operating at once
        let edge = p.with_reward(0.25);
        assert_eq!(equilibrium_threshold(&edge).unwrap(), ThresholdTime::Finite(0.0));
    }

    #[test]
    fn efficient_threshold_cases() {
        let p = fig();
        assert_eq!(
            efficient_threshold(&MarketParams::new(1.0, 1.0).with_cost(1.5)).unwrap(),
            ThresholdTime::NeverOperate
        );
        let t_o = efficient_threshold(&p).unwrap().value().unwrap();
        assert!((t_o - 0.4714).abs() < 0.002);
        let tiny = efficient_threshold(&p.with_cost(1e-9)).unwrap().value().unwrap();
        assert!(tiny < 1e-8);
    }

    #[test]
    fn welfare_values() {
        let p = fig();
        assert!((social_welfare(0.0, &p).unwrap() - 0.398806).abs() < 1e-6);
        assert!((social_welfare(1.0, &p).unwrap() - 0.409091).abs() < 1e-6);
        assert!((social_welfare(0.4714, &p).unwrap() - 0.46969).abs() < 2e-4);
        assert!(social_welfare(1.1, &p).is_err());
        assert!(social_welfare(0.5, &p.with_eta(0.1)).is_err());
    }

    #[test]
    fn density_values() {
        let p = fig();
        assert!((stationary_density(0.25, 0.5, &p).unwrap() - 0.75).abs() < 1e-15);
        for t in [0.0, 0.3, 2.0] {
            let d = stationary_density(t, 0.0, &p).unwrap();
            assert!((d - 1.2 * (-1.2 * t).exp()).abs() < 1e-15);
        }
        assert!(stationary_density(0.1, 1.0, &p).is_err());
        assert!(stationary_density(0.1, -0.1, &p).is_err());
    }

    #[test]
    fn reward_values() {
        let p = fig();
        let y = optimal_block_reward(&p).unwrap();
        assert!((y - 0.1555).abs() < 0.003);
        assert!(optimal_block_reward(&p.with_cost(1.2)).is_err());
    }

    #[test]
    fn user_welfare_reduces_to_uc() {
        let p = fig();
        let u = eo_user_welfare(0.0, &p).unwrap();
        assert!((u - crate::uc::uc_user_welfare(&p)).abs() < 1e-14);
    }

    #[test]
    fn report_never_operate_when_unprofitable() {
        let p = MarketParams::new(1.0, 1.0).with_cost(1.5);
        let r = welfare_report(&p).unwrap();
        assert_eq!(r.t_e, ThresholdTime::NeverOperate);
        assert_eq!(r.t_o, ThresholdTime::NeverOperate);
        assert_eq!(r.y_o, 0.0);
        assert_eq!(r.sw_at_te, 0.0);
    }

    #[test]
    fn sign_change_counting() {
        assert_eq!(count_sign_changes(&[3.0, 2.0, 1.0, 2.0, 3.0], 1e-6), 1);
        assert_eq!(count_sign_changes(&[3.0, 2.0, 2.0 + 1e-9, 1.0], 1e-6), 0);
        assert_eq!(count_sign_changes(&[1.0, 2.0, 1.0, 2.0], 1e-6), 2);
    }

    #[test]
    fn sweep_marks_invalid_rows() {
        let p = fig();
        let t = sweep(&p, SweepParameter::Lambda, &[-1.0, 1.2]).unwrap();
        assert!(t.rows[0].outcome.is_err());
        assert!(t.rows[1].outcome.is_ok());
        assert!(sweep(&p, SweepParameter::Lambda, &[1.0, 1.0]).is_err());
    }
}
