//! Tensorized least-squares support vector machines for multitask
//! regression.
//!
//! Tasks are the cells of a grid `T_1 × … × T_N`. Every task's weight
//! vector is a slice of one CP-factorized tensor, `w_t = L u_t` with
//! `u_t = U^1[t_1,:] ⊙ … ⊙ U^N[t_N,:]`: the shared factor `L` couples all
//! tasks while the mode factors `U^n` carry task-specific loadings along
//! each index. Fitting alternates between convex subproblems, each solved
//! through a dual saddle-point linear system, so linear and RBF kernels are
//! both supported.
//!
//! ```no_run
//! use tlssvm::dataset::{generate_synthetic, SyntheticSpec};
//! use tlssvm::solver::{fit, FitConfig};
//! use tlssvm::model::TrainedModel;
//!
//! let data = generate_synthetic(&SyntheticSpec::default()).unwrap();
//! let state = fit(&data.train, &FitConfig::default()).unwrap();
//! let model = TrainedModel::from_fit(&state).unwrap();
//! let predictions = model.predict_dataset(&data.test).unwrap();
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cv;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod par;
pub mod solver;
pub mod student;
pub mod tensor;

pub use error::{Error, Result};
