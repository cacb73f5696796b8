pub mod bounds;
pub mod carleman;
pub mod emulator;
pub mod error;
pub mod linalg;
pub mod matrix;
pub mod mmio;
pub mod reference;
pub mod sparse;
pub mod taylor;

pub use error::{Error, Result};
pub use matrix::MatrixHandle;
