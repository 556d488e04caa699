//! Symmetric f-divergence regularized policy optimization.

pub mod distribution;
pub mod divergence;
pub mod error;
pub mod gaussfit;
pub mod loss;
pub mod offline;
pub mod policy;
pub mod quadrature;

pub use distribution::{total_variation, DiscreteDistribution};
pub use divergence::DivergenceFamily;
pub use error::{Error, Result};
