//! Scenario runner and sweep driver for the tdswanson library.

pub mod config;
pub mod error;
pub mod output;
pub mod range;
pub mod run;
pub mod sweep;
