//! Corpus to training problem: vocabulary, counts, topic words, features,
//! targets and the history table.

use crate::corpus::{build_vocabulary, extract_counts, select_topic_words, Corpus, EmpiricalCounts, TopicWordSets, Vocabulary};
use crate::error::{Error, Result};
use crate::history::HistoryTable;
use crate::model::{build_feature_set, empirical_targets, FeatureSet, TargetVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    /// Words seen fewer times become the unknown word.
    pub vocab_min_count: u64,
    /// `u64::MAX` disables bigram features.
    pub bigram_min_count: u64,
    /// Topic words per topic; zero gives the bigram-only model.
    pub topic_words_k: usize,
    pub topic_words_min_count: u64,
    pub slack: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            vocab_min_count: 2,
            bigram_min_count: 3,
            topic_words_k: 8,
            topic_words_min_count: 5,
            slack: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub vocab: Vocabulary,
    pub counts: EmpiricalCounts,
    pub topic_words: TopicWordSets,
    /// Features with positive targets only.
    pub features: FeatureSet,
    pub targets: TargetVector,
    pub hist: HistoryTable,
}

pub fn prepare(corpus: &Corpus, cfg: &FeatureConfig) -> Result<Problem> {
    let vocab = build_vocabulary(corpus, cfg.vocab_min_count);
    prepare_with_vocab(corpus, vocab, cfg)
}

/// Like [`prepare`] but with a fixed vocabulary.
pub fn prepare_with_vocab(corpus: &Corpus, vocab: Vocabulary, cfg: &FeatureConfig) -> Result<Problem> {
    let counts = extract_counts(corpus, &vocab);
    if counts.total() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let topic_words = if cfg.topic_words_k == 0 {
        TopicWordSets::empty(counts.num_topics())
    } else {
        select_topic_words(&counts, cfg.topic_words_k, cfg.topic_words_min_count)
    };
    let mut fs = build_feature_set(&counts, &topic_words, cfg.bigram_min_count);
    if cfg.slack {
        fs = fs.with_slack()?;
    }
    let (features, targets) = empirical_targets(&counts, &fs)?;
    let hist = HistoryTable::from_counts(&counts);
    Ok(Problem { vocab, counts, topic_words, features, targets, hist })
}
