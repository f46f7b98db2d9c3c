//! Optimal selling of a club good with network effects: the direct
//! mechanism, its verification, and implementable indirect pricing games.

pub mod allocation;
pub mod cli;
pub mod economy;
pub mod error;
pub mod indirect;
pub mod payments;
pub mod quadrature;
pub mod report;
pub mod suite;
pub mod verification;

pub use error::{Error, Result};
pub use report::VerificationReport;
