//! Certification toolkit for norm-based recurrent-network capacity bounds.
//!
//! Computes complexity and generalization bounds for vanilla, MGU, LSTM, and
//! convolutional RNN cells from concrete weights and data, and empirically
//! verifies the supporting inequalities at small scale.

pub mod audit;
pub mod bounds;
pub mod cells;
pub mod data;
pub mod error;
pub mod io;
pub mod linalg;
pub mod margin;
pub mod report;
pub mod scalar;
pub mod train;
pub mod verify;

pub use error::{Error, Result};

/// Concrete f64 aliases for the generic numerical types.
pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type ActivationSpec64 = cells::ActivationSpec<f64>;
pub type ModelWeights64 = cells::ModelWeights<f64>;
pub type Trajectory64 = cells::Trajectory<f64>;
