pub mod dirk;
pub mod error;
pub mod heat;
pub mod krylov;
pub mod lbfp;
pub mod linalg;
pub mod lowrank;

pub use error::{Error, Result};
