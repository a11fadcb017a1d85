//! Semiclassical propagation of wave packets with the Herman–Kluk
//! approximation, plus exact and split-step references.

pub mod coherent;
pub mod error;
pub mod flow;
pub mod hamiltonians;
pub mod hk;
pub mod linalg;
pub mod reference;
pub mod wave;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
