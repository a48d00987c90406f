//! Shared numerical kernels: bracketed root finding, adaptive quadrature,
//! finite differences and a seeded random source.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Convergence controls shared by [`bisect`] and [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iter: usize) -> Result<Self> {
        if !(abs_tol > 0.0) {
            return Err(Error::BadConfig("abs_tol must be > 0"));
        }
        if !(rel_tol >= 0.0) {
            return Err(Error::BadConfig("rel_tol must be >= 0"));
        }
        if max_iter == 0 {
            return Err(Error::BadConfig("max_iter must be >= 1"));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_iter,
        })
    }

    /// Tight settings used by the threshold solvers.
    pub fn tight() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 0.0,
            max_iter: 200,
        }
    }
}

/// Root of `f` on `[lo, hi]` by bisection.
///
/// Stops when the bracket is narrower than `abs_tol + rel_tol * |x|` or `f`
/// hits zero exactly. Requires `f(lo) * f(hi) <= 0`.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoBracket { lo, hi });
    }
    for _ in 0..tol.max_iter {
        let mid = lo + 0.5 * (hi - lo);
        if hi - lo <= tol.abs_tol + tol.rel_tol * mid.abs() || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::MaxIter(tol.max_iter))
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod quadrature of `f` over `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_with_breaks(f, a, b, &[], tol)
}

/// Like [`integrate`], but the interval is first split at every breakpoint
/// strictly inside `(a, b)`. Callers pass the kinks of the integrand.
pub fn integrate_with_breaks<F>(mut f: F, a: f64, b: f64, breaks: &[f64], tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    if !(a < b) {
        return Err(Error::Domain("integration bounds must satisfy a <= b"));
    }
    let mut cuts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    cuts.push(a);
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|x| *x > a && *x < b).collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
    inner.dedup();
    cuts.extend(inner);
    cuts.push(b);

    // (lo, hi, estimate, error)
    let mut pieces: Vec<(f64, f64, f64, f64)> = cuts
        .windows(2)
        .map(|w| {
            let (v, e) = gauss_kronrod(&mut f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();

    for _ in 0..=tol.max_iter {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::Domain("integrand is not finite"));
        }
        if err <= tol.abs_tol.max(tol.rel_tol * total.abs()) {
            return Ok(total);
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap_or(core::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod(&mut f, lo, mid);
        let (v2, e2) = gauss_kronrod(&mut f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
    Err(Error::MaxIter(tol.max_iter))
}

/// Symmetric difference quotient `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Discrete second differences `v[i-1] - 2 v[i] + v[i+1]`.
pub fn second_differences(values: &[f64]) -> Vec<f64> {
    values.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
}

/// Seeded, splittable random source.
///
/// A ChaCha8 stream keyed by `seed`; `stream_id` selects one of 2^64
/// independent streams, so parallel runs never share variates.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform variate in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Exponential distribution sampled by inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    rate: f64,
}

impl Exponential {
    pub fn new(rate: f64) -> Result<Self> {
        if rate > 0.0 && rate.is_finite() {
            Ok(Self { rate })
        } else {
            Err(Error::BadRate(rate))
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    #[inline]
    pub fn sample(&self, rs: &mut RandomSource) -> f64 {
        // 1 - u lies in (0, 1], so the log is finite.
        -(1.0 - rs.uniform()).ln() / self.rate
    }
}

/// One exponential variate with the given rate.
pub fn sample_exponential(rs: &mut RandomSource, rate: f64) -> Result<f64> {
    Ok(Exponential::new(rate)?.sample(rs))
}
