//! Degree-debiased signed graph neural networks.
//!
//! A balance-theory signed GCN encoder with a plug-in that estimates the
//! neighborhood information a low-degree node is missing, trained jointly
//! with a head/tail fairness term. Includes a small reverse-mode autodiff
//! engine, dataset ingestion, and degree-group fairness metrics.
//!
//! Typical use goes through [`experiment::run_seed`]:
//!
//! ```
//! use ddsgnn_core::{experiment, synthetic, ModelConfig};
//!
//! let g = synthetic::generate(&synthetic::SyntheticConfig::small(60, 150, 0)).unwrap();
//! let cfg = ModelConfig { d_in: 8, hidden_dim: 8, classifier_hidden: 8, epochs: 2, ..Default::default() };
//! let run = experiment::run_seed(&g, "toy", &cfg, 0).unwrap();
//! assert_eq!(run.trained.log.len(), 2);
//! ```

pub mod autodiff;
pub mod backbone;
pub mod config;
pub mod data;
pub mod experiment;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod plugin;
pub mod rng;
pub mod synthetic;
pub mod train;

pub use autodiff::{EngineError, Matrix, ParamId, ParamStore, Tape, Var};
pub use config::{Ablation, ConfigError, KPolicy, ModelConfig};
pub use data::{DataError, IdMap, IngestStats, LoadedDataset};
pub use graph::{ConflictPolicy, DegreePartition, GraphError, NodeId, Sign, SignedEdge, SignedGraph, TripletGroup};
pub use losses::{LossConfig, LossError};
pub use metrics::{EvalReport, F1Variant, MetricsError};
pub use model::{Checkpoint, DdSgnn, ModelSpec};
pub use plugin::PluginMode;
pub use train::{EpochLog, RunContext, RunError, TrainedModel};
