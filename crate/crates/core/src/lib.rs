//! Black-box eigenvector perturbations for image-to-image models.
//!
//! A model is reached only through an [`OracleHandle`]. Around a base input
//! the model's Jacobian is available implicitly through central-difference
//! Jacobian-vector products ([`JvpOperator`]); a thick-restart Krylov solver
//! ([`solve_largest_magnitude`]) extracts its dominant eigenvectors, which are
//! then scaled and added to the input ([`attack::generate`]). [`metrics`]
//! scores the result with SSIM and Dice.

pub mod attack;
pub mod eigen;
pub mod error;
pub mod io;
pub mod jvp;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use attack::{
    blend_modes, broadcast_adapter, generate, penetration_check, uniform_baseline, AttackConfig,
    PenetrationCheck, PerturbationResult,
};
pub use eigen::{
    dense_eig_reference, penetration_residual, solve_largest_magnitude, DenseEigenpair,
    DenseOperator, EigConfig, EigPair, EigResult, LinearOperator, SolverMode,
};
pub use error::{Error, Result};
pub use io::{decode_tensor, encode_tensor, read_tensor, write_pgm, write_tensor};
pub use jvp::{fd_jacobian_dense, Adapter, Epsilon, JvpOperator};
pub use metrics::{dice, ssim, summarize, MetricReport, Summary};
pub use oracle::{OracleBackend, OracleHandle, OracleInfo, OracleKind, QueryCounter};
pub use rng::{derive_seed, Rng};
pub use synth::blob_image;
pub use tensor::Tensor;
