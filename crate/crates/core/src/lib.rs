//! Online brokerage for bilateral trade and joint ads.

pub mod env;
pub mod error;
pub mod fixed;
pub mod grid;
pub mod harness;
pub mod joint_ads;
pub mod learner;
pub mod mechanism;
pub mod simplify;

pub use error::{Error, Result};
pub use fixed::{Amount, Coord};
pub use mechanism::{Mechanism, Valuation};
