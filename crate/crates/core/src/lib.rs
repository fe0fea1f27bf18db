//! Next-activity prediction with a small multi-head self-attention model and
//! attention-based global explanations for process event logs.

pub mod attnstats;
pub mod error;
pub mod eventlog;
pub mod explain;
pub mod metrics;
pub mod prestudy;
pub mod seed;
pub mod transformer;

pub use error::{Error, Result};
