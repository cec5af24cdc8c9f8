//! Collateral portfolio optimization and failure-risk simulation for
//! crypto-backed stablecoins.

pub mod backtest;
pub mod cli;
pub mod error;
pub mod ledger;
pub mod market_data;
pub mod portfolio_opt;
pub mod qp;
pub mod risk_sim;
pub mod synthetic;
pub mod universe;

pub use error::{Error, Result};
