//! Deviation scans: the payoff of a time-`t` user who reports offset `s`
//! instead of the truthful `s = 0`.

use alloc::vec::Vec;

use crate::eo::{eo_bid, eo_w, ThresholdTime};
use crate::{Error, MarketParams, Result};

/// Payoff tabulated over reported offsets.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DeviationScan {
    pub s: Vec<f64>,
    pub payoff: Vec<f64>,
    /// First index attaining the maximum payoff.
    pub argmax: usize,
    pub step: f64,
}

impl DeviationScan {
    /// Evenly spaced scan of `payoff` over `[lo, hi]`.
    pub fn tabulate<F>(lo: f64, hi: f64, n_points: usize, mut payoff: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        if n_points < 3 {
            return Err(Error::BadConfig("a deviation scan needs at least 3 points"));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::BadConfig("deviation range must be a nonempty finite interval"));
        }
        let step = (hi - lo) / (n_points - 1) as f64;
        let s: Vec<f64> = (0..n_points)
            .map(|i| if i + 1 == n_points { hi } else { lo + i as f64 * step })
            .collect();
        let payoff = s.iter().map(|&x| payoff(x)).collect::<Result<Vec<_>>>()?;
        let mut argmax = 0;
        for (i, &v) in payoff.iter().enumerate() {
            if v > payoff[argmax] {
                argmax = i;
            }
        }
        Ok(Self { s, payoff, argmax, step })
    }

    pub fn argmax_s(&self) -> f64 {
        self.s[self.argmax]
    }

    pub fn max_payoff(&self) -> f64 {
        self.payoff[self.argmax]
    }

    /// Grid index closest to the truthful report `s = 0`.
    pub fn zero_index(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.s.iter().enumerate() {
            if x.abs() < self.s[best].abs() {
                best = i;
            }
        }
        best
    }

    /// True when the maximum sits within one grid step of `s = 0`, or the
    /// payoff next to zero ties the maximum within `tie`.
    pub fn peaks_at_zero(&self, tie: f64) -> bool {
        self.argmax_s().abs() <= self.step * (1.0 + 1e-9)
            || self.payoff[self.zero_index()] >= self.max_payoff() - tie
    }

    /// Nondecreasing up to `s = 0` and nonincreasing after it, with `slack`.
    pub fn single_peaked(&self, slack: f64) -> bool {
        self.s.windows(2).zip(self.payoff.windows(2)).all(|(s, v)| {
            if s[1] <= 0.0 {
                v[1] >= v[0] - slack
            } else if s[0] >= 0.0 {
                v[1] <= v[0] + slack
            } else {
                true
            }
        })
    }
}

/// Payoff of a time-`t` user reporting offset `s` against equilibrium bids.
pub fn deviation_payoff(s: f64, t: f64, tstar: ThresholdTime, p: &MarketParams) -> Result<f64> {
    let l = tstar.as_extended() - t;
    let bid = eo_bid((t - s).max(0.0), tstar, p)?;
    Ok(eo_w(s, l, p) * (1.0 - bid))
}

/// Scans reports `s` over `[-t, K]`. Under the equilibrium bid the maximum
/// sits at `s = 0`.
pub fn best_response_scan(t: f64, tstar: ThresholdTime, p: &MarketParams, n_points: usize) -> Result<DeviationScan> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParam {
            name: "t",
            reason: "must be a finite nonnegative time",
        });
    }
    p.validate()?;
    DeviationScan::tabulate(-t, p.capacity, n_points, |s| deviation_payoff(s, t, tstar, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uc::uc_w;

    #[test]
    fn uc_scan_peaks_at_zero() {
        let p = MarketParams::new(1.2, 1.0);
        let scan = best_response_scan(1.0, ThresholdTime::NeverSuspend, &p, 2001).unwrap();
        assert!(scan.peaks_at_zero(1e-9));
        assert!(scan.single_peaked(1e-9));
    }

    #[test]
    fn eo_scan_peaks_at_zero() {
        let p = MarketParams::new(1.2, 1.0);
        let scan = best_response_scan(0.3, ThresholdTime::Finite(0.5), &p, 2001).unwrap();
        assert!(scan.peaks_at_zero(1e-9));
    }

    #[test]
    fn zero_time_user() {
        let p = MarketParams::new(1.2, 1.0);
        let scan = best_response_scan(0.0, ThresholdTime::NeverSuspend, &p, 101).unwrap();
        assert_eq!(scan.argmax, 0);
        assert_eq!(scan.payoff[0], uc_w(0.0, &p));
    }

    #[test]
    fn rejects_bad_input() {
        let p = MarketParams::new(1.2, 1.0);
        assert!(best_response_scan(1.0, ThresholdTime::NeverSuspend, &p, 2).is_err());
        assert!(best_response_scan(-1.0, ThresholdTime::NeverSuspend, &p, 11).is_err());
    }
}
