//! User-competition model: miners always operate and blocks arrive at rate
//! `lambda`. Everything here is a closed form.

#[allow(unused_imports)]
use num_traits::Float;

use crate::MarketParams;

/// Pool times are capped here before evaluating `exp(-r t)`.
pub const MAX_POOL_TIME: f64 = 1e6;

/// Validation probability of a request with `s` mass of higher bids ahead of it.
pub fn uc_w(s: f64, p: &MarketParams) -> f64 {
    let room = (p.capacity - s).max(0.0);
    -(-p.lambda * room).exp_m1()
}

/// Hazard rate of the equilibrium bid, `-W'(0) / W(0)`.
pub fn uc_bid_rate(p: &MarketParams) -> f64 {
    rate_for(p.lambda, p.capacity)
}

pub(crate) fn rate_for(lambda: f64, capacity: f64) -> f64 {
    let mu = lambda * capacity;
    // lambda e^{-mu} / (1 - e^{-mu}) = lambda / (e^{mu} - 1)
    lambda / mu.exp_m1()
}

/// Equilibrium bid of the user arriving at pool time `t`.
pub fn uc_bid(t: f64, p: &MarketParams) -> f64 {
    let t = t.clamp(0.0, MAX_POOL_TIME);
    -(-uc_bid_rate(p) * t).exp_m1()
}

/// Probability that a block lands within `capacity` of a user's arrival.
pub fn uc_validation_probability(p: &MarketParams) -> f64 {
    uc_w(0.0, p)
}

/// Expected equilibrium payoff of the time-`t` user.
pub fn uc_user_payoff(t: f64, p: &MarketParams) -> f64 {
    let t = t.clamp(0.0, MAX_POOL_TIME);
    uc_validation_probability(p) * (-uc_bid_rate(p) * t).exp()
}

/// Users' welfare, the stationary average of [`uc_user_payoff`].
pub fn uc_user_welfare(p: &MarketParams) -> f64 {
    let w = uc_validation_probability(p);
    w * w
}

/// Expected payment of the time-`t` user.
pub fn uc_miner_revenue_flow(t: f64, p: &MarketParams) -> f64 {
    uc_validation_probability(p) * uc_bid(t, p)
}

/// Average fee revenue per unit time.
pub fn uc_miner_revenue(p: &MarketParams) -> f64 {
    let q = (-p.throughput()).exp();
    q * (1.0 - q)
}

/// Stationary CDF of pool time: exponential with rate `lambda`.
pub fn uc_stationary_cdf(t: f64, p: &MarketParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    -(-p.lambda * t).exp_m1()
}

/// Stationary density of pool time.
pub fn uc_stationary_density(t: f64, p: &MarketParams) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    p.lambda * (-p.lambda * t).exp()
}
