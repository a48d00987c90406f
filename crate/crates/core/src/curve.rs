//! Sampled bid curves for export. Analytic code paths evaluate bids lazily
//! from their closed forms and never go through a [`BidCurve`].

use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BidCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl BidCurve {
    /// Builds a curve, checking that the grid is strictly increasing and
    /// nonnegative and that bids are nondecreasing inside `[0, 1]`.
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.is_empty() {
            return Err(Error::BadConfig("grid and values must be nonempty and of equal length"));
        }
        if grid[0] < 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::BadConfig("grid must be nonnegative and strictly increasing"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("bids must lie in [0, 1]"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Domain("bids must be nondecreasing"));
        }
        Ok(Self { grid, values })
    }

    /// Samples `bid` on `points` evenly spaced times over `[0, t_max]`.
    pub fn sample<F: FnMut(f64) -> f64>(mut bid: F, t_max: f64, points: usize) -> Result<Self> {
        if !(t_max > 0.0) || points < 2 {
            return Err(Error::BadConfig("need t_max > 0 and at least two points"));
        }
        let step = t_max / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|i| i as f64 * step).collect();
        let values = grid.iter().map(|&t| bid(t)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.iter().copied().zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}
