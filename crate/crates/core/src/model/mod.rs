//! Sequence-to-sequence transformer that maps a source molecule to a
//! transformation rule, with training and a binary checkpoint format.

pub mod checkpoint;
pub mod tape;
pub mod tokenizer;
pub mod train;
pub mod transformer;
pub mod vocab;

pub use checkpoint::{Checkpoint, CheckpointError, FORMAT_VERSION};
pub use tokenizer::{detokenize, tokenize, TokenError};
pub use train::{train, EpochStats, TrainConfig, TrainError, TrainOutcome};
pub use transformer::{Example, ModelConfig, ShapeError, Transformer};
pub use vocab::Vocabulary;
