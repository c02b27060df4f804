//! Disentangled interest/conformity embeddings trained with
//! popularity-weighted contrastive objectives, plus the data preparation,
//! evaluation and out-of-distribution tooling around them.

pub mod config;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod trainer;

pub use dataio::{
    compute_popularity, InteractionDataset, IntervenedTest, PopularityStats, SplitDataset,
};
pub use error::{Error, Result};
pub use eval::{evaluate, MetricsReport};
pub use losses::LossMode;
pub use model::{Backbone, Checkpoint, DisentangledEmbeddings, EmbeddingTable, TableId};
pub use trainer::{train, TrainConfig, TrainOutcome};
