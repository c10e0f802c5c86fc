//! Subspace clustering with dual self-expressive layers.
//!
//! An auto-encoder maps samples to a latent code `Z`. An attribute layer
//! learns `C_A` with `Z ≈ Z·C_A`, and a structure layer learns `C_S` on a
//! symmetric matrix `Z_S` built from `C_A`. An attention module mixes the
//! two coefficient graphs row by row into `C_F`, which is clustered with
//! normalized-cut spectral clustering.
//!
//! ```
//! use dualse::datasets::synthesize_subspaces;
//! use dualse::pipeline::{FusionMode, RunConfig, DatasetSource};
//!
//! let mut cfg = RunConfig::synthetic_default();
//! cfg.train.pretrain_epochs = 5;
//! cfg.train.finetune_epochs = 5;
//! if let DatasetSource::Synthetic(s) = &mut cfg.source {
//!     s.per_cluster = 6;
//! }
//! cfg.fusion = FusionMode::Adaptive;
//! let out = dualse::pipeline::run(&cfg).unwrap();
//! assert!((0.0..=1.0).contains(&out.report().acc));
//! # let _ = synthesize_subspaces;
//! ```

pub mod datasets;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod spectral;
pub mod trainer;

pub use datasets::DataSet;
pub use error::{Error, Result};
pub use metrics::ClusterReport;
pub use model::{Hyperparams, ModelState, StructureGradient, StructureVariant};
pub use numerics::Matrix;
pub use spectral::AffinityGraph;
pub use trainer::TrainConfig;
