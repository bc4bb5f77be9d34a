//! Conditional maximum-entropy language models over (previous word, topic)
//! histories, trained by generalized or improved iterative scaling.
//!
//! The per-iteration partition functions and scaling coefficients come from
//! one of two engines: a direct sum over the vocabulary, or a cluster
//! expansion that only walks the sparse constraint lists.

// `!(x <= tol)` is used deliberately so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod eval;
pub mod exec;
pub mod hexfloat;
pub mod history;
pub mod model;
mod numeric;
pub mod persist;
pub mod pipeline;
pub mod scaling;
pub mod synth;

pub use corpus::{
    build_vocabulary, extract_counts, load_corpus, mutual_information, parse_corpus, select_topic_words, Corpus,
    EmpiricalCounts, Event, LoadOptions, TopicWordSets, Utterance, Vocabulary, WordId, TopicId,
};
pub use engine::{make_engine, CoefficientTable, ClusterEngine, DirectEngine, Engine, EngineKind};
pub use error::{Error, Result};
pub use eval::{perplexity, residual_report, EvalReport, Mixture, Residual};
pub use exec::Exec;
pub use history::HistoryTable;
pub use model::{
    add_slack_feature, build_feature_set, empirical_targets, Context, Feature, FeatureId, FeatureSet, Params,
    TargetVector, M_MAX,
};
pub use persist::{load_model, save_model, TrainedModel};
pub use pipeline::{prepare, FeatureConfig, Problem};
pub use scaling::{gis_step, iis_step, log_likelihood, solve_update, train, train_with, Algorithm, TrainConfig, TrainResult};
