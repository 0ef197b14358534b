//! Hierarchical sparse, approximately nonlinear matrix decomposition.
//!
//! An input `I` (rows are samples, columns are features) is factored as
//! `I ≈ X_1·X_2·…·X_k·N(Y_k) + S_k` for every depth `k`, where `N` is an
//! elementwise activation and `S_k` is a sparse background. Layer sizes are
//! picked by a pivoted-QR rank estimator, and the stack grows until the
//! estimated rank reaches 1.
//!
//! ```
//! use demand::{decompose, DemandConfig, DenseMatrix};
//!
//! let input = DenseMatrix::from_fn(20, 30, |i, j| ((i * j) % 7) as f64).unwrap();
//! let cfg = DemandConfig { max_iters_per_layer: 50, ..DemandConfig::default() };
//! let result = decompose(&input, &cfg).unwrap();
//! assert!(result.depth() >= 1);
//! ```

pub mod activation;
pub mod config;
pub mod decomposer;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod matrix;
pub mod mbp;
pub mod optimizer;
pub mod rank;
pub mod synthgen;

pub use activation::ActivationKind;
pub use decomposer::{
    components, decompose, layer_loss, reconstruct, weight_product, DecompositionResult, DemandConfig, LayerFactors,
};
pub use error::{DemandError, Result};
pub use evaluation::{
    hausdorff, match_components, pearson, reproducibility, ComponentSet, Matching, ReproducibilityReport,
};
pub use matrix::{qr_pivoted, DenseMatrix, PivotedQr};
pub use mbp::{backpropagate, MbpConfig, MbpReport};
pub use optimizer::{adam_step, grad_layer, shrinkage, AdamConfig, AdamState};
pub use rank::{estimate_rank, RankConfig, RankEstimate};
pub use synthgen::{generate, GroundTruth, SynthSpec};
