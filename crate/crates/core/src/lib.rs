//! Dictionary learning with a convex whole-dictionary update.
//!
//! The update recasts `D X` on a fixed sparsity pattern as a sum of rank-one
//! blocks, one per atom, and minimizes the sum of their nuclear norms under
//! the data-fit constraint with ADMM. OMP handles sparse coding; MOD and
//! K-SVD are provided as baseline updates, together with the synthetic
//! benchmark generators and the experiment harness.

pub mod baselines;
pub mod cg;
pub mod error;
pub mod harness;
pub mod learner;
pub mod linalg;
pub mod metrics;
pub mod omp;
pub mod romd;
pub mod support;
pub mod synth;

pub use error::{Result, RomdError};
pub use linalg::DenseMatrix;
