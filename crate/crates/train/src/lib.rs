//! Training objectives and loops for unsupervised (denoising plus
//! backtranslation) and supervised graph/text conversion.

pub mod ablation;
pub mod adam;
pub mod config;
pub mod eval;
pub mod pools;
pub mod run;
pub mod trainer;

pub use config::{ConfigError, Mode, TrainConfig};
pub use pools::{CorpusPools, SupervisedPool};
pub use run::{run_unsupervised, EvalSets, IterationRecord, RunError, RunOptions, ValSets};
pub use trainer::{Example, TrainError, Trainer};
