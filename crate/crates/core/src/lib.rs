//! Detection of shortcut inference patterns in text classifiers.
//!
//! The pipeline mines candidate `(trigger, label)` patterns from IID examples by
//! attribution-guided input reduction, measures how each pattern behaves on an
//! out-of-distribution corpus, and keeps the ones that look like shortcuts:
//! patterns that fire often, are mostly right in-distribution, and hurt F1
//! out of distribution.

pub mod adapter;
pub mod corpus;
pub mod error;
pub mod identify;
pub mod matchindex;
pub mod metrics;
pub mod miner;
pub mod pipeline;
pub mod reduction;
pub mod synthbench;

pub use adapter::{ModelAdapter, Prediction, RemoteAdapter, RemoteConfig, ToyLexiconModel};
pub use corpus::{Corpus, LabeledExample, SplitTag};
pub use error::{Error, Result};
pub use identify::{identify, ShortcutReport, Thresholds};
pub use matchindex::{build_index, contains_trigger, MatchMode, TriggerIndex};
pub use metrics::{F1Variant, PatternStats, Scorer};
pub use miner::{mine, CandidateSet, InferencePattern, MineOptions};
pub use reduction::{reduce, ExtractionResult};
