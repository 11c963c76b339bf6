pub mod error;
pub mod filter;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod offline;
pub mod policy;
pub mod sdpsolve;
pub mod vectorize;

pub use error::{Error, Result};
