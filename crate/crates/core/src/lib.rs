#![no_std]
// comparisons are negated so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Two-sector investment dynamics on an adaptive acquaintance network.
//!
//! Households invest their savings in a clean or a dirty production sector
//! and copy the strategy of better-off acquaintances. The crate contains the
//! market-clearing economy, an event-driven agent-based engine, a reduced
//! macroscopic ODE description obtained by pair approximation and moment
//! closure, and a numerical continuation engine for its steady states.

extern crate alloc;

pub mod abm;
pub mod continuation;
pub mod economy;
pub mod error;
pub mod macro_approx;
pub mod math;
pub mod network;
pub mod ode;
pub mod params;
pub mod trajectory;

pub use economy::{solve_market, EconomyStocks, MarketOutcome};
pub use error::{Error, Result};
pub use params::Params;
