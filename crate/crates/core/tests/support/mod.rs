//! Independent reference implementations used as test oracles. Nothing here
//! calls into the solvers under test.

#![allow(dead_code)]

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2));
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Equilibrium bid at eta = 0, written out from the two branch formulas.
pub fn bid_eta0(t: f64, tstar: f64, lambda: f64, k: f64) -> f64 {
    if t < tstar {
        let num = (-lambda * (k - tstar)).exp() * (1.0 - (-lambda * t).exp());
        num / (1.0 - (-lambda * (k + t - tstar)).exp())
    } else {
        let a = 1.0 - (-lambda * (k - tstar)).exp();
        let w0 = 1.0 - (-lambda * k).exp();
        let r = lambda * (-lambda * k).exp() / w0;
        1.0 - a / w0 * (-r * (t - tstar)).exp()
    }
}

/// Fees collected by a block at pool time `t`: the newest `k` mass of bids.
pub fn block_fees_eta0(t: f64, tstar: f64, lambda: f64, k: f64) -> f64 {
    let lo = (t - k).max(0.0);
    if t <= tstar || lo >= tstar {
        simpson(|u| bid_eta0(u, tstar, lambda, k), lo, t, 2000)
    } else {
        simpson(|u| bid_eta0(u, tstar, lambda, k), lo, tstar, 2000)
            + simpson(|u| bid_eta0(u, tstar, lambda, k), tstar, t, 2000)
    }
}

/// Miner surplus by Simpson quadrature of the bid over `[max(t*-K, 0), t*]`.
pub fn miner_surplus_simpson(tstar: f64, lambda: f64, k: f64) -> f64 {
    simpson(|u| bid_eta0(u, tstar, lambda, k), (tstar - k).max(0.0), tstar, 20_000)
}

/// Validation probability with `room = K - s` and threshold lag `l`.
pub fn w_eta0(l: f64, lambda: f64, k: f64) -> f64 {
    if l < 0.0 {
        1.0 - (-lambda * k).exp()
    } else if l >= k {
        0.0
    } else {
        1.0 - (-lambda * (k - l)).exp()
    }
}

/// Normalized stationary density at eta = 0.
pub fn density_eta0(t: f64, tstar: f64, lambda: f64) -> f64 {
    let z = 1.0 + lambda * tstar;
    if t < tstar {
        lambda / z
    } else {
        lambda * (-lambda * (t - tstar)).exp() / z
    }
}

/// Social welfare by quadrature of (validation probability - cost) against
/// the stationary density.
pub fn social_welfare_simpson(tstar: f64, lambda: f64, k: f64, c: f64) -> f64 {
    let before = simpson(|t| w_eta0(tstar - t, lambda, k) * density_eta0(t, tstar, lambda), 0.0, tstar, 4000);
    let tail = tstar + 60.0 / lambda;
    let after = simpson(|t| (w_eta0(tstar - t, lambda, k) - c) * density_eta0(t, tstar, lambda), tstar, tail, 40_000);
    before + after
}

/// Smallest grid point where `f` changes sign from negative to nonnegative.
pub fn grid_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64) -> Option<f64> {
    let n = ((hi - lo) / step).floor() as usize;
    let mut prev = f(lo);
    for i in 1..=n {
        let x = lo + i as f64 * step;
        let v = f(x);
        if prev < 0.0 && v >= 0.0 {
            return Some(x - 0.5 * step);
        }
        prev = v;
    }
    None
}

// Values frozen from the oracles above and cross-checked in extended
// precision, for lambda = 1.2, K = 1, c = 0.3, y = 0.
pub const M_STAR_HALF: f64 = 0.1099146;
pub const T_E: f64 = 0.6756704;
pub const T_O: f64 = 0.4714223;
pub const Y_O: f64 = 0.1555066;
pub const BID_HALF_HALF: f64 = 0.3543437;
pub const UC_BID_ONE: f64 = 0.4038216;
pub const UC_USER_WELFARE: f64 = 0.4883295;
pub const UC_MINER_REVENUE: f64 = 0.2104763;
