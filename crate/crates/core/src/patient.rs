//! Patient users: unvalidated requests stay in the pool and payoffs are
//! discounted at rate `rho`.
//!
//! `W̃(s)` is the expected discount factor `E[exp(-rho T)]` until validation
//! for a request with `s` mass of higher bids ahead of it. It has no closed
//! form beyond its first piece, so it is estimated by Monte Carlo and then
//! checked against its delay ODE
//!
//! ```text
//! W̃'(s) = (rho + lambda) W̃(s) - lambda W̃*(s - K),   W̃*(x) = W̃(x) if x >= 0 else 1.
//! ```
//!
//! Each path draws block gaps `B_n ~ Exp(lambda)` with partial sums `S_n`.
//! After `n` blocks the request at offset `s` has been validated iff
//! `nK - S_n > s` for some earlier or current `n`, so one path serves every
//! grid point at once (common random numbers): when the running maximum of
//! `nK - S_n` sets a new record, all grid points between the old and the new
//! record are validated at time `S_n`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::best_response::DeviationScan;
use crate::numerics::{Exponential, RandomSource};
use crate::{Error, MarketParams, Result};

/// Paths are cut after this many blocks; the dropped contribution is at most
/// `(lambda / (rho + lambda))^MAX_BLOCKS`.
pub const MAX_BLOCKS: usize = 200;

/// Paths per deterministic chunk. Chunk `i` uses stream `base + i`, so the
/// estimate does not depend on how chunks are scheduled.
pub const CHUNK_PATHS: usize = 1 << 16;

/// Default grid: `[-12K, 4K]` with spacing `K / 50`.
pub fn default_grid(capacity: f64) -> Vec<f64> {
    uniform_grid(-12.0 * capacity, 4.0 * capacity, 800)
}

/// `intervals + 1` evenly spaced points over `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, intervals: usize) -> Vec<f64> {
    let h = (hi - lo) / intervals as f64;
    (0..=intervals)
        .map(|i| if i == intervals { hi } else { lo + i as f64 * h })
        .collect()
}

/// Grid spacing if the grid is uniform.
pub fn uniform_spacing(grid: &[f64]) -> Option<f64> {
    let n = grid.len();
    if n < 2 {
        return None;
    }
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    let uniform = grid.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.max(1.0));
    uniform.then_some(h)
}

/// Lags, in grid steps, whose cross moments the ODE residual needs: the
/// central difference spans lags 1 and 2, and the delayed term sits `K / h`
/// steps back (only tracked when that is a whole number of steps).
pub fn residual_lags(grid: &[f64], capacity: f64) -> Vec<usize> {
    let mut lags = vec![1, 2];
    if let Some(h) = uniform_spacing(grid) {
        let m = capacity / h;
        if (m - m.round()).abs() <= 1e-6 && m.round() >= 2.0 {
            let m = m.round() as usize;
            lags.extend([m - 1, m, m + 1]);
        }
    }
    lags.sort_unstable();
    lags.dedup();
    lags
}

/// Per-point sums of `exp(-rho T)`, its square and lagged products;
/// merging is a commutative monoid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountAccumulator {
    n_paths: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    lags: Vec<usize>,
    // cross[k][i] = sum over paths of X_i X_{i + lags[k]}
    cross: Vec<Vec<f64>>,
}

impl DiscountAccumulator {
    pub fn new(points: usize, lags: Vec<usize>) -> Self {
        Self {
            n_paths: 0,
            sum: vec![0.0; points],
            sum_sq: vec![0.0; points],
            cross: lags.iter().map(|_| vec![0.0; points]).collect(),
            lags,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn merge(&mut self, other: &Self) {
        debug_assert_eq!(self.lags, other.lags);
        self.n_paths += other.n_paths;
        add_into(&mut self.sum, &other.sum);
        add_into(&mut self.sum_sq, &other.sum_sq);
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            add_into(a, b);
        }
    }

    pub fn finish(self, p: &MarketParams, grid: Vec<f64>) -> Result<DiscountCurve> {
        if self.n_paths == 0 || grid.len() != self.sum.len() {
            return Err(Error::BadConfig("accumulator does not match the grid"));
        }
        let n = self.n_paths as f64;
        let mut estimates = Vec::with_capacity(grid.len());
        let mut std_errors = Vec::with_capacity(grid.len());
        for (&s, &ss) in self.sum.iter().zip(&self.sum_sq) {
            let mean = s / n;
            let var = if self.n_paths > 1 {
                ((ss - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            estimates.push(mean);
            std_errors.push((var / n).sqrt());
        }
        let lag_moments = self
            .lags
            .iter()
            .zip(self.cross)
            .map(|(&lag, sums)| LagMoment {
                lag,
                mean: sums.into_iter().map(|v| v / n).collect(),
            })
            .collect();
        Ok(DiscountCurve {
            lambda: p.lambda,
            capacity: p.capacity,
            rho: p.rho,
            grid,
            estimates,
            std_errors,
            n_paths: self.n_paths,
            lag_moments,
        })
    }
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Mean of `X_i X_{i + lag}` over paths, per grid index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagMoment {
    pub lag: usize,
    pub mean: Vec<f64>,
}

/// Monte Carlo estimate of `W̃` on a grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DiscountCurve {
    pub lambda: f64,
    pub capacity: f64,
    pub rho: f64,
    pub grid: Vec<f64>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_paths: usize,
    /// Lagged cross moments used for the residual noise; empty for curves
    /// not produced by the estimator.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub lag_moments: Vec<LagMoment>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::BadConfig("grid needs at least two points"));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::BadConfig("grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// Adds `X_i X_{i + lag}` of one path to a difference array. The path is a
/// step function: `X_i = value[k]` for `i` in `[end[k-1], end[k])`, zero after
/// the last end.
fn add_lagged_products(ends: &[usize], values: &[f64], lag: usize, diff: &mut [f64]) {
    let Some(&last) = ends.last() else { return };
    let stop = last.saturating_sub(lag);
    let (mut a, mut b, mut i) = (0, 0, 0);
    while i < stop {
        while ends[a] <= i {
            a += 1;
        }
        while ends[b] <= i + lag {
            b += 1;
        }
        let next = ends[a].min(ends[b] - lag).min(stop);
        let prod = values[a] * values[b];
        diff[i] += prod;
        diff[next] -= prod;
        i = next;
    }
}

fn prefix_sums(diff: &[f64], out: &mut [f64]) {
    let mut acc = 0.0;
    for (o, d) in out.iter_mut().zip(diff) {
        acc += d;
        *o = acc;
    }
}

/// Simulates `n_paths` paths on one stream and returns the sums.
pub fn simulate_chunk(p: &MarketParams, grid: &[f64], n_paths: usize, rs: &mut RandomSource) -> Result<DiscountAccumulator> {
    let gap = Exponential::new(p.lambda)?;
    let n = grid.len();
    let top = grid[n - 1];
    let lags = residual_lags(grid, p.capacity);
    // difference arrays over grid indices
    let mut d_sum = vec![0.0; n + 1];
    let mut d_sq = vec![0.0; n + 1];
    let mut d_cross = vec![vec![0.0; n + 1]; lags.len()];
    let mut ends = Vec::with_capacity(64);
    let mut values = Vec::with_capacity(64);
    for _ in 0..n_paths {
        ends.clear();
        values.clear();
        let mut elapsed = 0.0;
        let mut covered = 0usize;
        for k in 1..=MAX_BLOCKS {
            elapsed += gap.sample(rs);
            let margin = k as f64 * p.capacity - elapsed;
            // grid points with s < margin are validated by now
            let reach = grid.partition_point(|&s| s < margin);
            if reach > covered {
                let disc = (-p.rho * elapsed).exp();
                d_sum[covered] += disc;
                d_sum[reach] -= disc;
                d_sq[covered] += disc * disc;
                d_sq[reach] -= disc * disc;
                ends.push(reach);
                values.push(disc);
                covered = reach;
            }
            if margin > top {
                break;
            }
        }
        for (&lag, diff) in lags.iter().zip(d_cross.iter_mut()) {
            add_lagged_products(&ends, &values, lag, diff);
        }
    }
    let mut acc = DiscountAccumulator::new(n, lags);
    acc.n_paths = n_paths;
    prefix_sums(&d_sum, &mut acc.sum);
    prefix_sums(&d_sq, &mut acc.sum_sq);
    for (diff, out) in d_cross.iter().zip(acc.cross.iter_mut()) {
        prefix_sums(diff, out);
    }
    Ok(acc)
}

/// Sizes of the fixed chunks covering `n_paths`.
pub fn chunk_sizes(n_paths: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n_paths / CHUNK_PATHS + 1);
    let mut left = n_paths;
    while left > 0 {
        let c = left.min(CHUNK_PATHS);
        out.push(c);
        left -= c;
    }
    out
}

/// Sums for chunk `index`; `rs` only supplies the seed and base stream.
pub fn estimate_chunk(p: &MarketParams, grid: &[f64], index: usize, size: usize, rs: &RandomSource) -> Result<DiscountAccumulator> {
    let mut chunk_rs = RandomSource::new(rs.seed(), rs.stream_id().wrapping_add(index as u64));
    simulate_chunk(p, grid, size, &mut chunk_rs)
}

pub fn check_inputs(p: &MarketParams, grid: &[f64], n_paths: usize) -> Result<()> {
    p.validate()?;
    if n_paths == 0 {
        return Err(Error::BadConfig("n_paths must be >= 1"));
    }
    check_grid(grid)
}

/// Estimates `W̃` on `grid` from `n_paths` paths, chunk by chunk.
pub fn estimate_wtilde(p: &MarketParams, grid: &[f64], n_paths: usize, rs: &RandomSource) -> Result<DiscountCurve> {
    check_inputs(p, grid, n_paths)?;
    let mut acc = DiscountAccumulator::new(grid.len(), residual_lags(grid, p.capacity));
    for (i, &size) in chunk_sizes(n_paths).iter().enumerate() {
        acc.merge(&estimate_chunk(p, grid, i, size, rs)?);
    }
    acc.finish(p, grid.to_vec())
}

impl DiscountCurve {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn params(&self) -> MarketParams {
        MarketParams::new(self.lambda, self.capacity).with_rho(self.rho)
    }

    /// Upper bound `(lambda / (rho + lambda))^(n + 1)` on `W̃(s)` for `s >= nK`.
    pub fn ladder_bound(&self, n: u32) -> f64 {
        (self.lambda / (self.rho + self.lambda)).powi(n as i32 + 1)
    }

    /// Checks the bound ladder for `n = 0..=max_n` with `sigmas` standard
    /// errors of slack.
    pub fn ladder_holds(&self, max_n: u32, sigmas: f64) -> bool {
        (0..=max_n).all(|n| {
            let from = n as f64 * self.capacity;
            self.grid
                .iter()
                .zip(self.estimates.iter().zip(&self.std_errors))
                .filter(|(&s, _)| s >= from)
                .all(|(_, (&w, &se))| w <= self.ladder_bound(n) + sigmas * se)
        })
    }

    /// Nonincreasing in `s` up to `sigmas` combined standard errors.
    pub fn nonincreasing(&self, sigmas: f64) -> bool {
        (1..self.len()).all(|i| {
            let slack = sigmas * (self.std_errors[i].powi(2) + self.std_errors[i - 1].powi(2)).sqrt();
            self.estimates[i] <= self.estimates[i - 1] + slack
        })
    }

    fn spacing(&self) -> Option<f64> {
        uniform_spacing(&self.grid)
    }

    /// Sample covariance of the per-path values at grid indices `a` and `b`,
    /// when the estimator recorded that lag.
    fn covariance(&self, a: usize, b: usize) -> Option<f64> {
        let n = self.n_paths as f64;
        if a == b {
            return Some(self.std_errors[a].powi(2) * n);
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let m = self.lag_moments.iter().find(|m| m.lag == hi - lo)?;
        let cross = m.mean[lo] - self.estimates[lo] * self.estimates[hi];
        Some(cross * n / (n - 1.0).max(1.0))
    }

    /// Standard error of `sum_k c_k X_{i_k}` from the covariances.
    fn combination_se(&self, terms: &[(usize, f64)]) -> Option<f64> {
        let mut var = 0.0;
        for &(a, ca) in terms {
            for &(b, cb) in terms {
                var += ca * cb * self.covariance(a, b)?;
            }
        }
        Some((var.max(0.0) / self.n_paths as f64).sqrt())
    }

    fn index_of(&self, s: f64) -> Option<usize> {
        let h = self.spacing()?;
        let i = ((s - self.grid[0]) / h).round();
        if i < 0.0 || i as usize >= self.len() {
            return None;
        }
        let i = i as usize;
        ((self.grid[i] - s).abs() <= 1e-9 * h).then_some(i)
    }

    /// Linear interpolation of the estimate and its standard error.
    pub fn interpolate(&self, s: f64) -> Option<(f64, f64)> {
        let n = self.len();
        if n == 0 || s < self.grid[0] || s > self.grid[n - 1] {
            return None;
        }
        let j = self.grid.partition_point(|&g| g <= s);
        if j == n {
            return Some((self.estimates[n - 1], self.std_errors[n - 1]));
        }
        let (a, b) = (j - 1, j);
        let w = (s - self.grid[a]) / (self.grid[b] - self.grid[a]);
        Some((
            self.estimates[a] + w * (self.estimates[b] - self.estimates[a]),
            self.std_errors[a] + w * (self.std_errors[b] - self.std_errors[a]),
        ))
    }

    /// `W̃*(x)` with its standard error: 1 (exactly) for `x < 0`.
    fn delayed(&self, x: f64) -> Option<(f64, f64)> {
        if x < 0.0 {
            Some((1.0, 0.0))
        } else {
            self.interpolate(x)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ResidualPoint {
    pub s: f64,
    pub residual: f64,
    /// Propagated Monte Carlo noise of the residual.
    pub sigma: f64,
}

impl ResidualPoint {
    pub fn passes(&self, sigmas: f64) -> bool {
        self.residual.abs() <= sigmas * self.sigma
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OdeResidualReport {
    pub points: Vec<ResidualPoint>,
    /// Median of the per-point noise.
    pub noise_floor: f64,
    pub kink_guard: f64,
    /// Share of points with `|residual| <= 5 sigma`.
    pub pass_fraction: f64,
    pub passed: bool,
}

/// Required share of points within five sigma.
pub const RESIDUAL_PASS_SHARE: f64 = 0.95;

/// Central-difference residuals of the delay ODE at interior grid points at
/// least `kink_guard` away from every multiple of `K`.
///
/// The noise of each residual is the standard error of the same linear
/// combination of per-path values. Grid points share paths, so neighbouring
/// estimates are strongly correlated and the covariances matter.
pub fn wtilde_ode_residual(curve: &DiscountCurve, kink_guard: f64) -> Result<OdeResidualReport> {
    let h = curve
        .spacing()
        .ok_or(Error::BadConfig("residuals need a uniform grid"))?;
    let k = curve.capacity;
    let limit = k / 20.0;
    if h > limit * (1.0 + 1e-12) {
        return Err(Error::GridTooCoarse { spacing: h, limit });
    }
    if !(kink_guard > h) {
        return Err(Error::BadConfig("kink_guard must exceed the grid spacing"));
    }
    let (lambda, rho) = (curve.lambda, curve.rho);
    let mut points = Vec::new();
    for i in 1..curve.len() - 1 {
        let s = curve.grid[i];
        let nearest = (s / k).round() * k;
        if (s - nearest).abs() < kink_guard {
            continue;
        }
        let Some((wd, sed)) = curve.delayed(s - k) else {
            continue;
        };
        let (wp, wm) = (curve.estimates[i + 1], curve.estimates[i - 1]);
        let (sep, sem) = (curve.std_errors[i + 1], curve.std_errors[i - 1]);
        let (w, se) = (curve.estimates[i], curve.std_errors[i]);
        let slope = (wp - wm) / (2.0 * h);
        let residual = slope - (rho + lambda) * w + lambda * wd;
        let mut terms = vec![(i + 1, 0.5 / h), (i - 1, -0.5 / h), (i, -(rho + lambda))];
        let delayed_index = if s - k >= 0.0 { curve.index_of(s - k) } else { None };
        if let Some(j) = delayed_index {
            terms.push((j, lambda));
        }
        let exact = if s - k >= 0.0 && delayed_index.is_none() {
            None
        } else {
            curve.combination_se(&terms)
        };
        // without lagged moments, propagate as if the points were independent
        let sigma = exact.unwrap_or_else(|| (sep * sep + sem * sem).sqrt() / (2.0 * h) + (rho + lambda) * se + lambda * sed);
        points.push(ResidualPoint { s, residual, sigma });
    }
    if points.is_empty() {
        return Err(Error::InsufficientCurve("no grid points away from the kinks"));
    }
    let mut sigmas: Vec<f64> = points.iter().map(|r| r.sigma).collect();
    sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let noise_floor = sigmas[sigmas.len() / 2];
    let pass = points.iter().filter(|r| r.passes(5.0)).count();
    let pass_fraction = pass as f64 / points.len() as f64;
    Ok(OdeResidualReport {
        points,
        noise_floor,
        kink_guard,
        pass_fraction,
        passed: pass_fraction >= RESIDUAL_PASS_SHARE,
    })
}

/// Exponent of the candidate bid `1 - exp(rate t)`, `rate = W̃'(0) / W̃(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BidRate {
    pub rate: f64,
    /// Central-difference step used for `W̃'(0)`.
    pub step: f64,
    /// Rate from twice the step.
    pub rate_double_step: f64,
}

impl BidRate {
    /// Relative change of the rate when the step is halved.
    pub fn halving_change(&self) -> f64 {
        ((self.rate - self.rate_double_step) / self.rate).abs()
    }
}

/// Minimum central-difference step for `W̃'(0)`.
pub fn derivative_step(capacity: f64) -> f64 {
    capacity / 200.0
}

/// Estimates the bid rate from the curve around `s = 0`. The step is the
/// smallest multiple of the grid spacing that is at least `K / 200`.
pub fn bid_rate(curve: &DiscountCurve) -> Result<BidRate> {
    let h = curve
        .spacing()
        .ok_or(Error::InsufficientCurve("grid is not uniform"))?;
    let zero = curve
        .index_of(0.0)
        .ok_or(Error::InsufficientCurve("grid does not contain s = 0"))?;
    let m = ((derivative_step(curve.capacity) / h) - 1e-9).ceil().max(1.0) as usize;
    let rate_at = |m: usize| -> Result<f64> {
        if zero < m || zero + m >= curve.len() {
            return Err(Error::InsufficientCurve("grid does not surround s = 0"));
        }
        let d = (curve.estimates[zero + m] - curve.estimates[zero - m]) / (2.0 * m as f64 * h);
        let w0 = curve.estimates[zero];
        if !(w0 > 0.0) {
            return Err(Error::InsufficientCurve("estimate at s = 0 is not positive"));
        }
        let rate = d / w0;
        if !(rate < 0.0) {
            return Err(Error::InsufficientCurve("estimated slope at s = 0 is not negative"));
        }
        Ok(rate)
    };
    Ok(BidRate {
        rate: rate_at(m)?,
        step: m as f64 * h,
        rate_double_step: rate_at(2 * m)?,
    })
}

/// Candidate equilibrium bid of the time-`t` patient user.
pub fn patient_bid(t: f64, curve: &DiscountCurve) -> Result<f64> {
    let rate = bid_rate(curve)?.rate;
    Ok(bid_with_rate(t, rate))
}

fn bid_with_rate(t: f64, rate: f64) -> f64 {
    -(rate * t.max(0.0)).exp_m1()
}

/// Deviation payoff of a patient user with its Monte Carlo noise.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PatientScan {
    pub t: f64,
    pub scan: DeviationScan,
    pub std_errors: Vec<f64>,
}

impl PatientScan {
    /// Peak within one grid step of zero, or tied with the value next to zero
    /// within three combined standard errors.
    pub fn peaks_at_zero(&self) -> bool {
        let a = self.scan.argmax;
        let z = self.scan.zero_index();
        let tie = 3.0 * (self.std_errors[a].powi(2) + self.std_errors[z].powi(2)).sqrt();
        self.scan.peaks_at_zero(tie)
    }
}

/// Tabulates `W̃(s) (1 - bid(t - s))` over `s` in `[-t, s_max]`.
pub fn patient_payoff_scan(t: f64, curve: &DiscountCurve, n_points: usize) -> Result<PatientScan> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParam {
            name: "t",
            reason: "must be a finite nonnegative time",
        });
    }
    let n = curve.len();
    if n == 0 || curve.grid[0] > -t {
        return Err(Error::InsufficientCurve("curve does not reach s = -t"));
    }
    let rate = bid_rate(curve)?.rate;
    let hi = curve.grid[n - 1];
    let mut ses = Vec::with_capacity(n_points);
    let scan = DeviationScan::tabulate(-t, hi, n_points, |s| {
        let (w, se) = curve
            .interpolate(s)
            .ok_or(Error::InsufficientCurve("scan point outside the curve"))?;
        let keep = 1.0 - bid_with_rate(t - s, rate);
        ses.push(se * keep);
        Ok(w * keep)
    })?;
    Ok(PatientScan {
        t,
        scan,
        std_errors: ses,
    })
}
