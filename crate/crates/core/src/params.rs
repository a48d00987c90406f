use crate::{Error, Result};

/// Primitive constants of the market.
///
/// The user arrival rate is normalized to one, so `capacity` is measured in
/// units of time as well as transaction mass.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarketParams {
    /// Block arrival rate while miners operate.
    pub lambda: f64,
    /// Mass of transactions a block can carry.
    pub capacity: f64,
    /// Flow cost of operating.
    pub cost: f64,
    /// Block reward paid per block on top of fees.
    pub reward: f64,
    /// Mass of committed (always operating) miners.
    pub eta: f64,
    /// Discount rate of patient users.
    pub rho: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            lambda: 1.2,
            capacity: 1.0,
            cost: 0.3,
            reward: 0.0,
            eta: 0.0,
            rho: 1.0,
        }
    }
}

impl MarketParams {
    /// Parameters with the given arrival rate and capacity, no cost, no reward,
    /// no committed miners and unit discount rate.
    pub fn new(lambda: f64, capacity: f64) -> Self {
        Self {
            lambda,
            capacity,
            cost: 0.0,
            reward: 0.0,
            eta: 0.0,
            rho: 1.0,
        }
    }

    pub fn with_cost(mut self, cost: f64) -> Self {
        self.cost = cost;
        self
    }

    pub fn with_reward(mut self, reward: f64) -> Self {
        self.reward = reward;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, name: &'static str, reason: &'static str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParam { name, reason })
            }
        }
        check(self.lambda.is_finite() && self.lambda > 0.0, "lambda", "must be finite and > 0")?;
        check(
            self.capacity.is_finite() && self.capacity > 0.0,
            "capacity",
            "must be finite and > 0",
        )?;
        check(self.cost.is_finite() && self.cost >= 0.0, "cost", "must be finite and >= 0")?;
        check(self.reward.is_finite() && self.reward >= 0.0, "reward", "must be finite and >= 0")?;
        check((0.0..=1.0).contains(&self.eta), "eta", "must lie in [0, 1]")?;
        check(self.rho.is_finite() && self.rho > 0.0, "rho", "must be finite and > 0")?;
        Ok(())
    }

    /// Throughput `lambda * capacity`.
    pub fn throughput(&self) -> f64 {
        self.lambda * self.capacity
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        assert!(MarketParams::default().validate().is_ok());
    }

    #[test]
    fn rejects_bad_fields() {
        let bad = [
            MarketParams::new(0.0, 1.0),
            MarketParams::new(1.0, -1.0),
            MarketParams::new(1.0, 1.0).with_cost(-0.1),
            MarketParams::new(1.0, 1.0).with_reward(f64::NAN),
            MarketParams::new(1.0, 1.0).with_eta(1.5),
            MarketParams::new(1.0, 1.0).with_rho(0.0),
        ];
        let names = ["lambda", "capacity", "cost", "reward", "eta", "rho"];
        for (p, name) in bad.iter().zip(names) {
            match p.validate() {
                Err(Error::InvalidParam { name: n, .. }) => assert_eq!(n, name),
                other => panic!("expected error for {name}, got {other:?}"),
            }
        }
    }
}
