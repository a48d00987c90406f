//! Dynamic equilibrium of a pay-as-bid transaction fee market.
//!
//! Users arrive continuously at unit rate, so pool time `t` doubles as the
//! pending mass. Blocks arrive as a Poisson process and validate up to a
//! capacity `K` of the highest bids. This crate computes:
//!
//! * the user-competition model ([`uc`]): validation probability, equilibrium
//!   bids, payoffs, revenue and the stationary law of `t`;
//! * the endogenous-operation model ([`eo`]): threshold miners, the miner
//!   surplus `M*`, the equilibrium and efficient thresholds, social welfare,
//!   the welfare-optimal block reward and parameter sweeps;
//! * a discrete-event simulator ([`sim`]) and deviation scans
//!   ([`best_response`]) used as independent checks of the closed forms;
//! * the patient-user model ([`patient`]): Monte Carlo estimation of the
//!   expected discount function, its delay-ODE residuals and candidate bid.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod best_response;
pub mod curve;
pub mod eo;
mod error;
pub mod numerics;
mod params;
pub mod patient;
pub mod sim;
pub mod uc;

pub use error::{Error, Result};
pub use params::MarketParams;
