//! Discrete-event simulation of the fee market.
//!
//! Pool time grows at unit rate and resets at each block, so the simulator
//! draws a sequence of independent cycle lengths. Within a cycle the user
//! continuum is cut into cells of mass `dt`, each carrying the analytic bid at
//! its arrival time. A block validates the most recent (highest bidding)
//! cells that fit into the capacity. Cycles are i.i.d., so flow quantities are
//! ratio estimators with regenerative standard errors.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::eo::{eo_bid, ThresholdTime};
use crate::numerics::{Exponential, RandomSource};
use crate::{Error, MarketParams, Result};

/// Simulation controls.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SimConfig {
    /// Blocks recorded after burn-in.
    pub n_blocks: usize,
    /// Mass of one user cell.
    pub dt: f64,
    /// Blocks simulated and discarded before recording.
    pub burn_in: usize,
    pub seed: u64,
    pub stream_id: u64,
    /// Width of the stationary histogram bins; `None` uses `capacity / 20`.
    pub hist_bin_width: Option<f64>,
}

impl SimConfig {
    pub fn new(n_blocks: usize, dt: f64, seed: u64) -> Self {
        Self {
            n_blocks,
            dt,
            burn_in: 100,
            seed,
            stream_id: 0,
            hist_bin_width: None,
        }
    }

    pub fn with_stream(mut self, stream_id: u64) -> Self {
        self.stream_id = stream_id;
        self
    }

    pub fn validate(&self, p: &MarketParams) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(Error::BadConfig("n_blocks must be >= 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::BadConfig("dt must be a positive real"));
        }
        if self.dt > p.capacity / 100.0 {
            return Err(Error::BadConfig("dt must not exceed capacity / 100"));
        }
        if let Some(w) = self.hist_bin_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::BadConfig("histogram bin width must be a positive real"));
            }
        }
        Ok(())
    }

    fn bin_width(&self, p: &MarketParams) -> f64 {
        self.hist_bin_width.unwrap_or(p.capacity / 20.0)
    }
}

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Relative deviation from a reference value.
    pub fn rel_error(&self, reference: f64) -> f64 {
        ((self.value - reference) / reference).abs()
    }
}

/// Time-average histogram of pool time; bin `i` covers `[i w, (i + 1) w)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Histogram {
    pub bin_width: f64,
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn edges(&self, i: usize) -> (f64, f64) {
        (i as f64 * self.bin_width, (i + 1) as f64 * self.bin_width)
    }

    pub fn density(&self, i: usize) -> f64 {
        self.mass[i] / self.bin_width
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SimStats {
    pub n_blocks: usize,
    pub tstar: ThresholdTime,
    pub stationary_hist: Histogram,
    /// Users' payoff per unit time (= per arriving user).
    pub user_welfare_hat: Estimate,
    /// Fee income per unit time.
    pub miner_revenue_hat: Estimate,
    /// Fees plus rewards minus operating cost, per unit time.
    pub miner_profit_flow_hat: Estimate,
    /// Fee income per block.
    pub block_fee_hat: Estimate,
    pub mean_cycle_length: Estimate,
    /// Sup distance between the empirical and analytic stationary CDFs.
    pub ks_distance: f64,
    pub seed: u64,
    pub stream_id: u64,
}

/// Block arrival law within one cycle: rate `early_rate` before the
/// threshold, `late_rate` from it on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalLaw {
    pub early_rate: f64,
    pub late_rate: f64,
    pub threshold: f64,
    /// Mass of committed miners, for cost accounting.
    pub eta: f64,
}

impl ArrivalLaw {
    pub fn new(tstar: ThresholdTime, p: &MarketParams) -> Result<Self> {
        let (threshold, eta) = match tstar {
            ThresholdTime::NeverSuspend => (0.0, p.eta),
            ThresholdTime::Finite(v) if v >= 0.0 => (v, p.eta),
            ThresholdTime::Finite(_) => return Err(Error::Domain("threshold must be >= 0")),
            ThresholdTime::NeverOperate => {
                if p.eta <= 0.0 {
                    return Err(Error::Domain("no blocks ever arrive when eta = 0 and miners never operate"));
                }
                (f64::INFINITY, p.eta)
            }
        };
        Ok(Self {
            early_rate: eta * p.lambda,
            late_rate: p.lambda,
            threshold,
            eta,
        })
    }

    /// Cycle length from a unit-rate exponential variate (inversion of the
    /// integrated hazard).
    pub fn cycle_length(&self, unit_exp: f64) -> f64 {
        let early_mass = if self.threshold.is_finite() {
            self.early_rate * self.threshold
        } else {
            f64::INFINITY
        };
        if unit_exp < early_mass {
            unit_exp / self.early_rate
        } else {
            self.threshold + (unit_exp - early_mass) / self.late_rate
        }
    }

    fn survival_integral(&self, x: f64) -> f64 {
        let a = self.early_rate;
        let early = |u: f64| if a > 0.0 { -(-a * u).exp_m1() / a } else { u };
        if x <= self.threshold {
            early(x)
        } else {
            early(self.threshold) + (-a * self.threshold).exp() * -(-self.late_rate * (x - self.threshold)).exp_m1() / self.late_rate
        }
    }

    pub fn mean_cycle_length(&self) -> f64 {
        self.survival_integral(f64::INFINITY)
    }

    /// Stationary (time-average) CDF of pool time.
    pub fn stationary_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.survival_integral(x) / self.mean_cycle_length()
        }
    }

    /// Mass-time of operating miners during a cycle of length `b`.
    pub fn operating_time(&self, b: f64) -> f64 {
        self.eta * b + (1.0 - self.eta) * (b - self.threshold).max(0.0)
    }
}

/// Cells validated by one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    /// Number of complete cells in the pool.
    pub full_cells: usize,
    /// Mass of the newest, incomplete cell (always validated).
    pub partial_mass: f64,
    /// Complete cells validated, counted from the newest.
    pub validated_cells: usize,
    pub validated_mass: f64,
}

impl Validation {
    /// Index of the oldest validated complete cell.
    pub fn first_validated_cell(&self) -> usize {
        self.full_cells - self.validated_cells
    }
}

/// Greedy validation of a pool of mass `pool` split into cells of mass `dt`.
///
/// Bids increase with arrival time, so the highest bids are the newest cells.
/// Cells are taken from the newest while they fit entirely into `capacity`.
pub fn greedy_validate(pool: f64, capacity: f64, dt: f64) -> Validation {
    let full = (pool / dt).floor();
    let partial = (pool - full * dt).max(0.0);
    let full_cells = full as usize;
    let partial_mass = partial.min(capacity);
    let room = ((capacity - partial_mass) / dt + 1e-9).floor().max(0.0) as usize;
    let validated_cells = room.min(full_cells);
    Validation {
        full_cells,
        partial_mass,
        validated_cells,
        validated_mass: partial_mass + validated_cells as f64 * dt,
    }
}

/// Cumulative bid mass over cells, extended on demand.
struct BidTable<'a> {
    dt: f64,
    tstar: ThresholdTime,
    p: &'a MarketParams,
    // prefix[n] = sum over cells i < n of bid(cell midpoint) * dt
    prefix: Vec<f64>,
}

impl<'a> BidTable<'a> {
    fn new(dt: f64, tstar: ThresholdTime, p: &'a MarketParams) -> Self {
        let mut prefix = Vec::with_capacity(4096);
        prefix.push(0.0);
        Self { dt, tstar, p, prefix }
    }

    fn bid(&self, t: f64) -> Result<f64> {
        eo_bid(t, self.tstar, self.p)
    }

    fn ensure(&mut self, cells: usize) -> Result<()> {
        while self.prefix.len() <= cells {
            let i = self.prefix.len() - 1;
            let b = self.bid((i as f64 + 0.5) * self.dt)?;
            let last = self.prefix[i];
            self.prefix.push(last + b * self.dt);
        }
        Ok(())
    }

    /// Fees of a validated block arriving at pool time `pool`.
    fn fee(&mut self, pool: f64, v: &Validation) -> Result<f64> {
        self.ensure(v.full_cells)?;
        let partial = if v.partial_mass > 0.0 {
            let top = v.full_cells as f64 * self.dt;
            v.partial_mass * self.bid(top + 0.5 * (pool - top))?
        } else {
            0.0
        };
        Ok(partial + self.prefix[v.full_cells] - self.prefix[v.first_validated_cell()])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct RatioSums {
    x: f64,
    xx: f64,
    xb: f64,
}

impl RatioSums {
    fn push(&mut self, x: f64, b: f64) {
        self.x += x;
        self.xx += x * x;
        self.xb += x * b;
    }

    fn merge(&mut self, o: &Self) {
        self.x += o.x;
        self.xx += o.xx;
        self.xb += o.xb;
    }
}

/// Running sums over simulated cycles. Merging is associative, so ensembles
/// over independent streams can be combined in any fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleAccumulator {
    n: usize,
    b: f64,
    bb: f64,
    surplus: RatioSums,
    fee: RatioSums,
    profit: RatioSums,
    lengths: Vec<f64>,
}

impl CycleAccumulator {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn push(&mut self, b: f64, surplus: f64, fee: f64, profit: f64) {
        self.n += 1;
        self.b += b;
        self.bb += b * b;
        self.surplus.push(surplus, b);
        self.fee.push(fee, b);
        self.profit.push(profit, b);
        self.lengths.push(b);
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.b += other.b;
        self.bb += other.bb;
        self.surplus.merge(&other.surplus);
        self.fee.merge(&other.fee);
        self.profit.merge(&other.profit);
        self.lengths.extend_from_slice(&other.lengths);
    }

    fn ratio(&self, s: &RatioSums) -> Estimate {
        let r = s.x / self.b;
        let ss = (s.xx - 2.0 * r * s.xb + r * r * self.bb).max(0.0);
        Estimate {
            value: r,
            std_error: ss.sqrt() / self.b,
        }
    }

    fn mean(n: usize, sum: f64, sum_sq: f64) -> Estimate {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            value: mean,
            std_error: (var / nf).sqrt(),
        }
    }

    /// Turns the sums into statistics.
    pub fn finish(mut self, p: &MarketParams, tstar: ThresholdTime, cfg: &SimConfig) -> Result<SimStats> {
        if self.n == 0 {
            return Err(Error::BadConfig("no cycles recorded"));
        }
        let law = ArrivalLaw::new(tstar, p)?;
        self.lengths
            .sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        let ecdf = TimeAverageCdf::new(&self.lengths);
        let ks_distance = ecdf.sup_distance(|x| law.stationary_cdf(x), law.threshold);
        let stationary_hist = ecdf.histogram(cfg.bin_width(p));
        let stats = SimStats {
            n_blocks: self.n,
            tstar,
            stationary_hist,
            user_welfare_hat: self.ratio(&self.surplus),
            miner_revenue_hat: self.ratio(&self.fee),
            miner_profit_flow_hat: self.ratio(&self.profit),
            block_fee_hat: Self::mean(self.n, self.fee.x, self.fee.xx),
            mean_cycle_length: Self::mean(self.n, self.b, self.bb),
            ks_distance,
            seed: cfg.seed,
            stream_id: cfg.stream_id,
        };
        let finite = [
            stats.user_welfare_hat,
            stats.miner_revenue_hat,
            stats.miner_profit_flow_hat,
            stats.block_fee_hat,
            stats.mean_cycle_length,
        ]
        .iter()
        .all(|e| e.value.is_finite() && e.std_error.is_finite())
            && stats.ks_distance.is_finite();
        if !finite {
            return Err(Error::Domain("simulation produced non-finite estimates"));
        }
        Ok(stats)
    }
}

/// Time-average CDF of pool time from sorted cycle lengths: each cycle of
/// length `b` spends one unit of time at every pool time in `[0, b)`.
struct TimeAverageCdf<'a> {
    sorted: &'a [f64],
    // cumulative[i] = sum of sorted[..i]
    cumulative: Vec<f64>,
    total: f64,
}

impl<'a> TimeAverageCdf<'a> {
    fn new(sorted: &'a [f64]) -> Self {
        let mut cumulative = Vec::with_capacity(sorted.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for &b in sorted {
            acc += b;
            cumulative.push(acc);
        }
        Self {
            sorted,
            cumulative,
            total: acc,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let below = self.sorted.partition_point(|&b| b <= x);
        let longer = (self.sorted.len() - below) as f64;
        ((self.cumulative[below] + x * longer) / self.total).min(1.0)
    }

    /// Exact sup distance to a CDF that is concave or linear between the
    /// kink and the sample points: the distance is then convex between
    /// consecutive breakpoints, so its maximum sits on one of them.
    fn sup_distance<F: Fn(f64) -> f64>(&self, cdf: F, kink: f64) -> f64 {
        let n = self.sorted.len();
        let mut d = 0.0f64;
        for (i, &x) in self.sorted.iter().enumerate() {
            let emp = (self.cumulative[i + 1] + x * (n - i - 1) as f64) / self.total;
            d = d.max((emp - cdf(x)).abs());
        }
        if kink.is_finite() && kink > 0.0 {
            d = d.max((self.eval(kink) - cdf(kink)).abs());
        }
        d
    }

    fn histogram(&self, width: f64) -> Histogram {
        let max = self.sorted.last().copied().unwrap_or(0.0);
        let bins = ((max / width).ceil() as usize).max(1);
        let mut mass = Vec::with_capacity(bins);
        let mut prev = 0.0;
        for i in 1..=bins {
            let next = if i == bins { 1.0 } else { self.eval(i as f64 * width) };
            mass.push(next - prev);
            prev = next;
        }
        Histogram { bin_width: width, mass }
    }
}

/// Simulates `cfg.burn_in + cfg.n_blocks` cycles under threshold `tstar` and
/// returns the sums over the recorded ones.
pub fn accumulate(p: &MarketParams, tstar: ThresholdTime, cfg: &SimConfig) -> Result<CycleAccumulator> {
    p.validate()?;
    cfg.validate(p)?;
    let law = ArrivalLaw::new(tstar, p)?;
    let mut bids = BidTable::new(cfg.dt, tstar, p);
    // surface domain errors before running
    bids.bid(0.0)?;
    let unit = Exponential::new(1.0)?;
    let mut rs = RandomSource::new(cfg.seed, cfg.stream_id);
    let mut acc = CycleAccumulator::default();
    acc.lengths.reserve(cfg.n_blocks);
    for i in 0..cfg.burn_in + cfg.n_blocks {
        let b = law.cycle_length(unit.sample(&mut rs));
        if i < cfg.burn_in {
            continue;
        }
        let v = greedy_validate(b, p.capacity, cfg.dt);
        let fee = bids.fee(b, &v)?;
        let surplus = v.validated_mass - fee;
        let profit = fee + p.reward - p.cost * law.operating_time(b);
        acc.push(b, surplus, fee, profit);
    }
    Ok(acc)
}

/// User-competition market: miners always operate.
pub fn simulate_uc(p: &MarketParams, cfg: &SimConfig) -> Result<SimStats> {
    let uc = p.with_eta(0.0);
    simulate_eo(&uc, ThresholdTime::NeverSuspend, cfg)
}

/// Endogenous-operation market with switching miners starting at `tstar`.
pub fn simulate_eo(p: &MarketParams, tstar: ThresholdTime, cfg: &SimConfig) -> Result<SimStats> {
    accumulate(p, tstar, cfg)?.finish(p, tstar, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec;

    #[test]
    fn greedy_never_exceeds_capacity() {
        for &(pool, k, dt) in &[(0.5, 1.0, 0.01), (3.2371, 1.0, 0.001), (1.0, 1.0, 0.01), (0.0, 1.0, 0.01), (0.0049, 1.0, 0.01)] {
            let v = greedy_validate(pool, k, dt);
            assert!(v.validated_mass <= k + 1e-12, "{pool}");
            assert!(v.validated_mass <= pool + 1e-12);
            assert!(v.validated_cells <= v.full_cells);
        }
        let v = greedy_validate(0.5, 1.0, 0.01);
        assert_eq!(v.validated_cells, v.full_cells);
        assert!((v.validated_mass - 0.5).abs() < 1e-12);
        let v = greedy_validate(2.0, 1.0, 0.01);
        assert!((v.validated_mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn marginal_cell_dropped_when_it_does_not_fit() {
        // partial 0.005 leaves room 0.995: only 99 full cells of 0.01 fit
        let v = greedy_validate(2.005, 1.0, 0.01);
        assert_eq!(v.validated_cells, 99);
        assert!((v.validated_mass - 0.995).abs() < 1e-9);
    }

    #[test]
    fn arrival_law_inversion() {
        let p = MarketParams::new(1.2, 1.0);
        let law = ArrivalLaw::new(ThresholdTime::Finite(0.5), &p).unwrap();
        assert_eq!(law.cycle_length(0.0), 0.5);
        assert!((law.cycle_length(1.2) - 1.5).abs() < 1e-15);
        assert!((law.mean_cycle_length() - (0.5 + 1.0 / 1.2)).abs() < 1e-15);
        let eo = crate::eo::stationary_cdf(0.8, 0.5, &p).unwrap();
        assert!((law.stationary_cdf(0.8) - eo).abs() < 1e-15);
        assert!(ArrivalLaw::new(ThresholdTime::NeverOperate, &p).is_err());
    }

    #[test]
    fn time_average_cdf_small_sample() {
        let lengths = vec![1.0, 3.0];
        let c = TimeAverageCdf::new(&lengths);
        assert_eq!(c.eval(0.5), 0.25);
        assert_eq!(c.eval(2.0), 0.75);
        assert_eq!(c.eval(5.0), 1.0);
        let h = c.histogram(1.0);
        assert_eq!(h.mass, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn bad_configs() {
        let p = MarketParams::new(1.2, 1.0);
        assert!(SimConfig::new(0, 1e-3, 0).validate(&p).is_err());
        assert!(SimConfig::new(10, 0.02, 0).validate(&p).is_err());
        assert!(SimConfig::new(10, -1.0, 0).validate(&p).is_err());
        assert!(simulate_uc(&p, &SimConfig::new(0, 1e-3, 0)).is_err());
    }

    #[test]
    fn deterministic() {
        let p = MarketParams::new(1.2, 1.0);
        let cfg = SimConfig::new(2000, 1e-2, 9);
        assert_eq!(simulate_uc(&p, &cfg).unwrap(), simulate_uc(&p, &cfg).unwrap());
    }
}
