//! Two-stage extraction of (entity, aspect, opinion, polarity) quadruples.
//!
//! Stage one tags opinion spans with their polarity. Stage two re-reads the
//! sentence with one opinion appended as a trigger and tags its entity and
//! aspect. Both stages share the same tagger: a linear emission layer over
//! per-token features with an optional BIO-constrained linear-chain CRF.
//!
//! ```
//! use easqe::model::Sentence;
//! use easqe::encoder::frame_stage2;
//! use easqe::model::Span;
//!
//! let s = Sentence::from_text("1", "the sushi was delicious").unwrap();
//! let framed = frame_stage2(&s, Span::new(3, 4)).unwrap();
//! assert_eq!(framed.len(), 4 + 1 + 3);
//! ```

pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod parallel;
pub mod pipeline;
pub mod synthetic;
pub mod tagger;
pub mod tags;

pub use data::{read_dataset, write_dataset, Annotations, Dataset, Record};
pub use error::{Error, Result};
pub use eval::{evaluate, exact_match_prf, score, EvalReport};
pub use model::{Pair, Polarity, Quadruple, Sentence, Span, Triple};
pub use parallel::Parallelism;
pub use pipeline::{predict, predict_batch, TaskKind};
pub use tagger::{train_pipeline, Mode, Stage, TaggerModel, TrainConfig};
pub use tags::{TagScheme, TagSequence};
