//! Numerical tools for second-moment spectral gaps, design errors and
//! censoring comparisons of random quantum circuit architectures.

pub mod arch;
pub mod censoring;
pub mod channel;
pub mod closedform;
pub mod error;
pub mod graphs;
pub mod krylov;
pub mod perm2;
pub mod pigment;
pub mod search;

pub use arch::{Architecture, Builder, BuilderParams, Gate};
pub use error::{Error, Result};
