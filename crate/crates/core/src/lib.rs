pub mod channel;
pub mod error;
pub mod harness;
pub mod learning;
pub mod model;
pub mod sca;
pub mod selection;

pub use error::{Error, Result};
