pub mod error;
pub mod fock_su11;
pub mod linalg;
pub mod lr_solver;
pub mod metric_flow;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod ode;
pub mod spline;
pub mod static_metric;

pub use error::{Error, Result};
