pub mod error;
pub mod harness;
pub mod hierarchy;
pub mod neural;
pub mod ppo;
pub mod sim;

pub use error::{Error, Result};
