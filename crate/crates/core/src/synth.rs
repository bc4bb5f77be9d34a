//! Seeded generators: a topic-labeled toy corpus and random engine instances.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, TopicId, Utterance, WordId, BOUNDARY};
use crate::error::{Error, Result};
use crate::history::HistoryTable;
use crate::model::{Context, Feature, FeatureSet, Params};

/// Parameters of the synthetic corpus.
///
/// Words follow a Zipf law, boosted inside each topic's own word block; a
/// word is followed by one of its preferred successors with probability
/// `successor_rate`. Rare tokens are unique strings that fall below any
/// vocabulary threshold of two or more and so feed the unknown word.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub words: usize,
    pub topics: usize,
    pub utterances: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub zipf: f64,
    pub topic_words: usize,
    pub topic_boost: f64,
    pub successors: usize,
    pub successor_rate: f64,
    pub rare_rate: f64,
}

impl Default for SynthConfig {
    /// The bundled corpus: 48 words (50 with boundary and unknown), 3 topics,
    /// about 2000 events.
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            words: 48,
            topics: 3,
            utterances: 250,
            min_len: 3,
            max_len: 11,
            zipf: 0.8,
            topic_words: 8,
            topic_boost: 4.0,
            successors: 3,
            successor_rate: 0.3,
            rare_rate: 0.03,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("synthetic corpus: {msg}")));
        if self.words == 0 || self.topics == 0 || self.utterances == 0 {
            return bad("words, topics and utterances must be positive");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("need 1 <= min_len <= max_len");
        }
        if self.topic_words > self.words || self.successors > self.words {
            return bad("topic_words and successors cannot exceed words");
        }
        if ![self.successor_rate, self.rare_rate].iter().all(|p| (0.0..=1.0).contains(p)) {
            return bad("rates must lie in [0, 1]");
        }
        if !(self.topic_boost > 0.0 && self.zipf >= 0.0) {
            return bad("topic_boost must be positive and zipf nonnegative");
        }
        Ok(())
    }
}

pub fn word_token(k: usize) -> String {
    format!("w{k:02}")
}

pub fn synth_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base: Vec<f64> = (1..=cfg.words).map(|r| (r as f64).powf(-cfg.zipf)).collect();

    let mut topic_dists = Vec::with_capacity(cfg.topics);
    for _ in 0..cfg.topics {
        let mut w = base.clone();
        for k in sample(&mut rng, cfg.words, cfg.topic_words) {
            w[k] *= cfg.topic_boost;
        }
        topic_dists.push(WeightedIndex::new(&w).map_err(|e| Error::Config(e.to_string()))?);
    }
    let preferred: Vec<Vec<usize>> =
        (0..cfg.words).map(|_| sample(&mut rng, cfg.words, cfg.successors).into_vec()).collect();

    let mut rare = 0usize;
    let mut utterances = Vec::with_capacity(cfg.utterances);
    for _ in 0..cfg.utterances {
        let topic = rng.random_range(0..cfg.topics);
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let mut tokens = Vec::with_capacity(len);
        let mut prev: Option<usize> = None;
        for _ in 0..len {
            if rng.random::<f64>() < cfg.rare_rate {
                rare += 1;
                tokens.push(format!("r{rare:04}"));
                prev = None;
                continue;
            }
            let w = match prev {
                Some(p) if !preferred[p].is_empty() && rng.random::<f64>() < cfg.successor_rate => {
                    preferred[p][rng.random_range(0..preferred[p].len())]
                }
                _ => topic_dists[topic].sample(&mut rng),
            };
            tokens.push(word_token(w));
            prev = Some(w);
        }
        utterances.push(Utterance { topic: topic as TopicId, tokens });
    }
    Corpus::new(utterances)
}

/// A generated corpus as file text, with a comment line naming the seed.
pub fn corpus_text(cfg: &SynthConfig) -> Result<String> {
    let corpus = synth_corpus(cfg)?;
    Ok(format!("# synthetic topic-labeled corpus, seed {}\n{}", cfg.seed, corpus.to_text()))
}

/// The bundled synthetic corpus as file text.
pub fn bundled_corpus_text() -> String {
    corpus_text(&SynthConfig::default()).expect("default configuration is valid")
}

/// A feature set, a parameter vector and a history table for exercising
/// the engines directly.
#[derive(Debug, Clone)]
pub struct Instance {
    pub features: FeatureSet,
    pub params: Params,
    pub hist: HistoryTable,
}

/// Shape of a generated engine instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceShape {
    pub vocab: usize,
    pub topics: usize,
    pub topic_words: usize,
    /// Predecessors that carry bigram constraints.
    pub predecessors: usize,
    pub successors: usize,
    /// Topics each predecessor is seen with (one history each).
    pub topics_per_prev: usize,
    /// λ is drawn uniformly from `[-lambda, lambda]`.
    pub lambda: f64,
    pub slack: bool,
}

impl InstanceShape {
    /// V = 20000 with 1% bigram density over 500 predecessors and
    /// 50 topics of 200 words: 2000 histories.
    pub fn large() -> Self {
        InstanceShape {
            vocab: 20_000,
            topics: 50,
            topic_words: 200,
            predecessors: 500,
            successors: 200,
            topics_per_prev: 4,
            lambda: 1.0,
            slack: false,
        }
    }

    /// A few hundred words; fast enough for the direct engine in tests.
    pub fn small() -> Self {
        InstanceShape {
            vocab: 300,
            topics: 5,
            topic_words: 20,
            predecessors: 60,
            successors: 15,
            topics_per_prev: 3,
            lambda: 1.0,
            slack: false,
        }
    }
}

/// Draws an instance of the given shape. Constraint lists are sampled from
/// a shared pool of frequent words half the time, so bigram and topic lists
/// intersect often.
pub fn generate_instance(shape: &InstanceShape, seed: u64) -> Result<Instance> {
    let v = shape.vocab;
    if v < 2 || shape.topics == 0 || shape.predecessors == 0 || shape.predecessors > v {
        return Err(Error::Config(format!("bad instance shape {shape:?}")));
    }
    if shape.successors > v || shape.topic_words > v || shape.topics_per_prev == 0 || shape.topics_per_prev > shape.topics {
        return Err(Error::Config(format!("bad instance shape {shape:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = (v / 4).max(shape.successors.max(shape.topic_words));

    let draw = |rng: &mut ChaCha8Rng, k: usize| -> Vec<WordId> {
        let n = if rng.random::<bool>() { pool.min(v) } else { v };
        sample(rng, n, k).into_iter().map(|j| j as WordId).collect()
    };

    let mut features: Vec<Feature> = (0..v as WordId).map(Feature::Unigram).collect();
    let prevs = sample(&mut rng, v, shape.predecessors).into_vec();
    for &i in &prevs {
        for j in draw(&mut rng, shape.successors) {
            features.push(Feature::Bigram(i as WordId, j));
        }
    }
    for t in 0..shape.topics as TopicId {
        for j in draw(&mut rng, shape.topic_words) {
            features.push(Feature::TopicUnigram(t, j));
        }
    }
    let mut fs = FeatureSet::new(v, shape.topics, features)?;
    if shape.slack {
        fs = fs.with_slack()?;
    }
    let lambda = (0..fs.len()).map(|_| rng.random_range(-shape.lambda..=shape.lambda)).collect();

    let mut entries = Vec::new();
    for &i in &prevs {
        for t in sample(&mut rng, shape.topics, shape.topics_per_prev) {
            entries.push((Context::new(i as WordId, t as TopicId), rng.random_range(0.1..1.0)));
        }
    }
    let hist = HistoryTable::from_weights(shape.topics, entries)?;
    Ok(Instance { features: fs, params: Params::from_lambda(lambda), hist })
}

/// A small random instance: V in [50, 500], 2 to 10 topics, λ uniform in
/// [-2, 2], some words without a unigram feature, and histories whose
/// predecessor may or may not carry bigram constraints.
pub fn random_instance(seed: u64, slack: bool) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = rng.random_range(50..=500usize);
    let topics = rng.random_range(2..=10usize);
    let pool = rng.random_range(10..=v / 2);

    let mut features = Vec::new();
    for j in 0..v as WordId {
        if j == BOUNDARY || rng.random::<f64>() < 0.9 {
            features.push(Feature::Unigram(j));
        }
    }
    let num_prevs = rng.random_range(1..=v / 3);
    let prevs = sample(&mut rng, v, num_prevs).into_vec();
    for &i in &prevs {
        let n = if rng.random::<bool>() { pool } else { v };
        let k = rng.random_range(1..=n.min(25));
        for j in sample(&mut rng, n, k) {
            features.push(Feature::Bigram(i as WordId, j as WordId));
        }
    }
    for t in 0..topics as TopicId {
        let n = if rng.random::<bool>() { pool } else { v };
        let k = rng.random_range(0..=n.min(30));
        for j in sample(&mut rng, n, k) {
            features.push(Feature::TopicUnigram(t, j as WordId));
        }
    }
    let mut fs = FeatureSet::new(v, topics, features)?;
    if slack {
        fs = fs.with_slack()?;
    }
    let lambda = (0..fs.len()).map(|_| rng.random_range(-2.0..=2.0)).collect();

    let mut entries = Vec::new();
    let candidates: Vec<usize> = prevs.iter().copied().chain(sample(&mut rng, v, 10)).collect();
    for i in candidates {
        for t in 0..topics {
            if rng.random::<f64>() < 0.4 && !entries.iter().any(|(h, _): &(Context, f64)| h.prev == i as WordId && h.topic == t as TopicId) {
                entries.push((Context::new(i as WordId, t as TopicId), rng.random_range(0.05..1.0)));
            }
        }
    }
    if entries.is_empty() {
        entries.push((Context::new(prevs[0] as WordId, 0), 1.0));
    }
    let hist = HistoryTable::from_weights(topics, entries)?;
    Ok(Instance { features: fs, params: Params::from_lambda(lambda), hist })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, extract_counts, parse_corpus, LoadOptions};

    #[test]
    fn bundled_corpus_shape() {
        let text = bundled_corpus_text();
        let corpus = parse_corpus(&text, LoadOptions::default()).unwrap();
        let vocab = build_vocabulary(&corpus, 2);
        let counts = extract_counts(&corpus, &vocab);
        assert_eq!(vocab.len(), 50);
        assert_eq!(corpus.num_topics(), 3);
        assert!((1800..=2200).contains(&counts.total()), "{}", counts.total());
        assert!(counts.word_count(crate::corpus::UNKNOWN) > 0);
    }

    #[test]
    fn bundled_file_matches_generator() {
        let shipped = include_str!("../../../data/synthetic.txt");
        assert_eq!(bundled_corpus_text(), shipped);
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(bundled_corpus_text(), bundled_corpus_text());
        let a = random_instance(7, true).unwrap();
        let b = random_instance(7, true).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.params, b.params);
        assert_eq!(a.hist, b.hist);
        let s = generate_instance(&InstanceShape::small(), 3).unwrap();
        assert_eq!(s.hist.len(), 60 * 3);
    }
}
