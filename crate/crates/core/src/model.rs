//! Feature family, parameters and empirical targets of the topic-dependent
//! bigram model
//!
//! ```text
//! p(j | i, t) = exp(λ_j + λ_ij + λ_tj) / Z(i, t)
//! ```
//!
//! where each λ is present only if the corresponding constraint was
//! retained. Feature ids are dense and canonical: unigrams by `j`, bigrams
//! by `(i, j)`, topic unigrams by `(t, j)`, then the optional slack feature.
//! Because of that ordering the successor list `B(i)` and the topic-word
//! list `T(t)` each own a contiguous range of feature ids.

use std::ops::Range;

use crate::corpus::{EmpiricalCounts, TopicId, TopicWordSets, WordId};
use crate::error::{Error, Result};

pub type FeatureId = usize;

/// Largest number of binary features that can fire at one `(h, w)`.
pub const M_MAX: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    Unigram(WordId),
    Bigram(WordId, WordId),
    TopicUnigram(TopicId, WordId),
    /// Takes the value `M_MAX - multiplicity(h, w)`.
    Slack,
}

/// The history of a prediction: predecessor word and topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Context {
    pub prev: WordId,
    pub topic: TopicId,
}

impl Context {
    pub fn new(prev: WordId, topic: TopicId) -> Self {
        Context { prev, topic }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSet {
    vocab_size: usize,
    num_topics: usize,
    features: Vec<Feature>,
    unigram: Vec<Option<FeatureId>>,
    bigram_base: usize,
    bigram_offsets: Vec<usize>,
    bigram_words: Vec<WordId>,
    topic_base: usize,
    topic_offsets: Vec<usize>,
    topic_words: Vec<WordId>,
    slack: Option<FeatureId>,
}

impl FeatureSet {
    /// Builds the registry and its inverted lists from an arbitrary list of
    /// features. Duplicates and out-of-range indices are rejected.
    pub fn new(vocab_size: usize, num_topics: usize, mut features: Vec<Feature>) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::Domain(format!("vocabulary size {vocab_size} < 2")));
        }
        features.sort_unstable();
        if let Some(w) = features.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Domain(format!("duplicate feature {:?}", w[0])));
        }
        let word_ok = |w: WordId| (w as usize) < vocab_size;
        let topic_ok = |t: TopicId| (t as usize) < num_topics;
        for f in &features {
            let ok = match *f {
                Feature::Unigram(j) => word_ok(j),
                Feature::Bigram(i, j) => word_ok(i) && word_ok(j),
                Feature::TopicUnigram(t, j) => topic_ok(t) && word_ok(j),
                Feature::Slack => true,
            };
            if !ok {
                return Err(Error::Domain(format!("feature {f:?} outside V={vocab_size}, T={num_topics}")));
            }
        }

        let mut unigram = vec![None; vocab_size];
        let mut bigram_offsets = vec![0usize; vocab_size + 1];
        let mut topic_offsets = vec![0usize; num_topics + 1];
        let mut bigram_words = Vec::new();
        let mut topic_words = Vec::new();
        let mut bigram_base = None;
        let mut topic_base = None;
        let mut slack = None;
        for (id, f) in features.iter().enumerate() {
            match *f {
                Feature::Unigram(j) => unigram[j as usize] = Some(id),
                Feature::Bigram(i, j) => {
                    bigram_base.get_or_insert(id);
                    bigram_offsets[i as usize + 1] += 1;
                    bigram_words.push(j);
                }
                Feature::TopicUnigram(t, j) => {
                    topic_base.get_or_insert(id);
                    topic_offsets[t as usize + 1] += 1;
                    topic_words.push(j);
                }
                Feature::Slack => slack = Some(id),
            }
        }
        for k in 1..bigram_offsets.len() {
            bigram_offsets[k] += bigram_offsets[k - 1];
        }
        for k in 1..topic_offsets.len() {
            topic_offsets[k] += topic_offsets[k - 1];
        }
        let num_unigrams = unigram.iter().flatten().count();
        let bigram_base = bigram_base.unwrap_or(num_unigrams);
        let topic_base = topic_base.unwrap_or(bigram_base + bigram_words.len());
        Ok(FeatureSet {
            vocab_size,
            num_topics,
            features,
            unigram,
            bigram_base,
            bigram_offsets,
            bigram_words,
            topic_base,
            topic_offsets,
            topic_words,
            slack,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    /// Number of features `F`, slack included.
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, id: FeatureId) -> Feature {
        self.features[id]
    }

    pub fn unigram(&self, j: WordId) -> Option<FeatureId> {
        self.unigram.get(j as usize).copied().flatten()
    }

    pub fn num_unigrams(&self) -> usize {
        self.bigram_base
    }

    pub fn num_bigrams(&self) -> usize {
        self.bigram_words.len()
    }

    pub fn num_topic_features(&self) -> usize {
        self.topic_words.len()
    }

    /// `B(i)`: constrained successors of `i` (ascending) and their feature ids.
    pub fn successors(&self, i: WordId) -> (&[WordId], Range<FeatureId>) {
        let (lo, hi) = (self.bigram_offsets[i as usize], self.bigram_offsets[i as usize + 1]);
        (&self.bigram_words[lo..hi], self.bigram_base + lo..self.bigram_base + hi)
    }

    /// `T(t)`: topic words of `t` (ascending) and their feature ids.
    pub fn topic_list(&self, t: TopicId) -> (&[WordId], Range<FeatureId>) {
        let (lo, hi) = (self.topic_offsets[t as usize], self.topic_offsets[t as usize + 1]);
        (&self.topic_words[lo..hi], self.topic_base + lo..self.topic_base + hi)
    }

    pub fn bigram(&self, i: WordId, j: WordId) -> Option<FeatureId> {
        let (words, ids) = self.successors(i);
        words.binary_search(&j).ok().map(|k| ids.start + k)
    }

    pub fn topic_feature(&self, t: TopicId, j: WordId) -> Option<FeatureId> {
        let (words, ids) = self.topic_list(t);
        words.binary_search(&j).ok().map(|k| ids.start + k)
    }

    pub fn bigram_range(&self) -> Range<FeatureId> {
        self.bigram_base..self.bigram_base + self.bigram_words.len()
    }

    pub fn topic_range(&self) -> Range<FeatureId> {
        self.topic_base..self.topic_base + self.topic_words.len()
    }

    pub fn slack(&self) -> Option<FeatureId> {
        self.slack
    }

    /// Features active at `(h, w)`, excluding slack, in id order.
    pub fn active(&self, h: Context, w: WordId) -> impl Iterator<Item = FeatureId> {
        [self.unigram(w), self.bigram(h.prev, w), self.topic_feature(h.topic, w)]
            .into_iter()
            .flatten()
    }

    /// `M(h, w)`: number of (non-slack) features firing at `(h, w)`.
    pub fn multiplicity(&self, h: Context, w: WordId) -> u32 {
        self.active(h, w).count() as u32
    }

    /// Value of the slack feature at `(h, w)`, if the set carries one.
    pub fn slack_value(&self, h: Context, w: WordId) -> Option<u32> {
        self.slack.map(|_| M_MAX - self.multiplicity(h, w))
    }

    pub fn with_slack(&self) -> Result<FeatureSet> {
        if self.slack.is_some() {
            return Err(Error::SlackPresent);
        }
        let mut features = self.features.clone();
        features.push(Feature::Slack);
        FeatureSet::new(self.vocab_size, self.num_topics, features)
    }

    /// Keeps the features for which `keep(id)` holds; ids are reassigned.
    pub fn retain(&self, mut keep: impl FnMut(FeatureId) -> bool) -> FeatureSet {
        let features = (0..self.len()).filter(|&id| keep(id)).map(|id| self.features[id]).collect();
        FeatureSet::new(self.vocab_size, self.num_topics, features).expect("subset of a valid set")
    }
}

/// Adds the slack feature that makes the total feature sum the constant
/// [`M_MAX`] at every `(h, w)`.
pub fn add_slack_feature(fs: &FeatureSet) -> Result<FeatureSet> {
    fs.with_slack()
}

/// Unigrams for every word, bigrams whose count reaches `bigram_min_count`,
/// and topic unigrams for the selected topic words that occur under their
/// topic. Bigrams are drawn from the observed pairs only, so a threshold of
/// zero behaves like one (unobserved pairs would be dropped as zero-target).
pub fn build_feature_set(
    counts: &EmpiricalCounts,
    topics: &TopicWordSets,
    bigram_min_count: u64,
) -> FeatureSet {
    let v = counts.vocab_size();
    let mut features: Vec<Feature> = (0..v as WordId).map(Feature::Unigram).collect();
    features.extend(
        counts
            .bigrams()
            .iter()
            .filter(|&(_, &c)| c >= bigram_min_count.max(1))
            .map(|(&(i, j), _)| Feature::Bigram(i, j)),
    );
    for t in 0..counts.num_topics().min(topics.num_topics()) as TopicId {
        features.extend(
            topics
                .words(t)
                .iter()
                .filter(|&&(j, _)| counts.topic_word_count(t, j) >= 1)
                .map(|&(j, _)| Feature::TopicUnigram(t, j)),
        );
    }
    FeatureSet::new(v, counts.num_topics(), features).expect("indices come from the counts")
}

/// Per-feature λ with the cached change of variables `φ = e^λ − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    lambda: Vec<f64>,
    phi: Vec<f64>,
}

impl Params {
    pub fn zeros(len: usize) -> Self {
        Params { lambda: vec![0.0; len], phi: vec![0.0; len] }
    }

    pub fn from_lambda(lambda: Vec<f64>) -> Self {
        let phi = lambda.iter().map(|l| l.exp_m1()).collect();
        Params { lambda, phi }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn set(&mut self, id: FeatureId, lambda: f64) {
        self.lambda[id] = lambda;
        self.phi[id] = lambda.exp_m1();
    }

    pub fn add(&mut self, id: FeatureId, delta: f64) {
        self.set(id, self.lambda[id] + delta);
    }
}

/// Empirical feature expectations `c_α = p̃[f_α]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector(pub Vec<f64>);

impl TargetVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Empirical expectation of every feature in `fs` (no pruning).
pub fn targets_for(counts: &EmpiricalCounts, fs: &FeatureSet) -> TargetVector {
    let mut mass = vec![0u64; fs.len()];
    for &(ev, c) in counts.events() {
        let h = Context::new(ev.prev, ev.topic);
        let mut m = 0;
        for id in fs.active(h, ev.word) {
            mass[id] += c;
            m += 1;
        }
        if let Some(s) = fs.slack() {
            mass[s] += c * u64::from(M_MAX - m);
        }
    }
    let n = counts.total() as f64;
    TargetVector(mass.into_iter().map(|m| m as f64 / n).collect())
}

/// Drops zero-target features from `fs` and returns the pruned set together
/// with its targets.
pub fn empirical_targets(counts: &EmpiricalCounts, fs: &FeatureSet) -> Result<(FeatureSet, TargetVector)> {
    if counts.total() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let raw = targets_for(counts, fs);
    let pruned = fs.retain(|id| raw.0[id] > 0.0 || fs.feature(id) == Feature::Slack);
    let targets = targets_for(counts, &pruned);
    if let Some(s) = pruned.slack() {
        if targets.0[s] <= 0.0 {
            return Err(Error::Config("slack feature has a zero target: every event has multiplicity 3".into()));
        }
    }
    Ok((pruned, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Event, EmpiricalCounts};

    fn toy_counts() -> EmpiricalCounts {
        let ev = |prev, topic, word| Event { prev, topic, word };
        EmpiricalCounts::from_events(
            5,
            2,
            [ev(0, 0, 2), ev(2, 0, 3), ev(3, 0, 0), ev(0, 1, 2), ev(2, 1, 2), ev(2, 1, 4), ev(4, 1, 0)],
        )
        .unwrap()
    }

    #[test]
    fn canonical_order_and_lists() {
        let fs = FeatureSet::new(
            4,
            2,
            vec![
                Feature::TopicUnigram(1, 3),
                Feature::Bigram(2, 3),
                Feature::Unigram(1),
                Feature::Bigram(2, 0),
                Feature::Slack,
                Feature::Unigram(3),
                Feature::TopicUnigram(0, 1),
            ],
        )
        .unwrap();
        assert_eq!(fs.features()[0], Feature::Unigram(1));
        assert_eq!(fs.slack(), Some(6));
        let (words, ids) = fs.successors(2);
        assert_eq!(words, &[0, 3]);
        assert_eq!(ids, 2..4);
        assert_eq!(fs.successors(1).0, &[] as &[WordId]);
        assert_eq!(fs.topic_list(1).0, &[3]);
        assert_eq!(fs.bigram(2, 3), Some(3));
        assert_eq!(fs.topic_feature(0, 1), Some(4));
        assert_eq!(fs.unigram(0), None);
    }

    #[test]
    fn rejects_duplicates_and_bad_indices() {
        assert!(FeatureSet::new(3, 1, vec![Feature::Unigram(1), Feature::Unigram(1)]).is_err());
        assert!(FeatureSet::new(3, 1, vec![Feature::Bigram(0, 3)]).is_err());
        assert!(FeatureSet::new(3, 1, vec![Feature::TopicUnigram(1, 0)]).is_err());
    }

    #[test]
    fn multiplicity_counts_active_features() {
        let fs = FeatureSet::new(
            4,
            1,
            vec![
                Feature::Unigram(1),
                Feature::Unigram(2),
                Feature::Bigram(0, 2),
                Feature::TopicUnigram(0, 2),
            ],
        )
        .unwrap();
        let h = Context::new(0, 0);
        assert_eq!(fs.multiplicity(h, 1), 1);
        assert_eq!(fs.multiplicity(h, 2), 3);
        assert_eq!(fs.slack_value(h, 2), None);
        let slack = add_slack_feature(&fs).unwrap();
        assert_eq!(slack.slack_value(h, 2), Some(0));
        assert_eq!(slack.slack_value(h, 1), Some(2));
        assert!(matches!(add_slack_feature(&slack), Err(Error::SlackPresent)));
    }

    #[test]
    fn bigram_only_configuration() {
        let counts = toy_counts();
        let fs = build_feature_set(&counts, &TopicWordSets::empty(2), 1);
        assert_eq!(fs.num_unigrams(), 5);
        assert_eq!(fs.num_bigrams(), counts.bigrams().len());
        assert_eq!(fs.num_topic_features(), 0);
        let none = build_feature_set(&counts, &TopicWordSets::empty(2), u64::MAX);
        assert_eq!(none.len(), 5);
    }

    #[test]
    fn targets_match_marginals() {
        let counts = toy_counts();
        let topics = crate::corpus::select_topic_words(&counts, 2, 1);
        let fs = build_feature_set(&counts, &topics, 1);
        let (pruned, c) = empirical_targets(&counts, &fs).unwrap();
        let n = counts.total() as f64;
        // Word 1 never occurs, so its unigram is dropped.
        assert_eq!(pruned.unigram(1), None);
        assert!(c.as_slice().iter().all(|&x| x > 0.0));
        for (id, f) in pruned.features().iter().enumerate() {
            let expected = match *f {
                Feature::Unigram(j) => counts.word_count(j),
                Feature::Bigram(i, j) => counts.bigram_count(i, j),
                Feature::TopicUnigram(t, j) => counts.topic_word_count(t, j),
                Feature::Slack => unreachable!(),
            } as f64
                / n;
            assert_eq!(c.0[id], expected, "{f:?}");
        }
        let unigram_total: f64 = (0..pruned.num_unigrams()).map(|id| c.0[id]).sum();
        assert!((unigram_total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn slack_target_complements_multiplicity() {
        let counts = toy_counts();
        let fs = build_feature_set(&counts, &TopicWordSets::empty(2), 1);
        let (fs, _) = empirical_targets(&counts, &fs).unwrap();
        let fs = add_slack_feature(&fs).unwrap();
        let c = targets_for(&counts, &fs);
        let s = fs.slack().unwrap();
        let real: f64 = c.0[..s].iter().sum();
        assert!((real + c.0[s] - f64::from(M_MAX)).abs() < 1e-15);
    }

    #[test]
    fn phi_cache_tracks_lambda() {
        let mut p = Params::zeros(3);
        p.set(0, 2.0f64.ln());
        p.add(1, -0.5);
        assert_eq!(p.phi()[0], 2.0f64.ln().exp_m1());
        assert_eq!(p.phi()[1], (-0.5f64).exp_m1());
        assert_eq!(p.phi()[2], 0.0);
    }
}
