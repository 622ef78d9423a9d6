pub mod bct_store;
pub mod codec;
pub mod error;
pub mod features;
pub mod gfpoly;
pub mod harness;
pub mod keytools;
pub mod security;
pub mod vault;

pub use error::{Error, Result};
