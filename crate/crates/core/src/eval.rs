//! Held-out perplexity and constraint residuals of a trained model.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::corpus::{utterance_events, Corpus, EmpiricalCounts, TopicId, WordId};
use crate::engine::{make_engine, ClusterEngine, EngineKind};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::history::HistoryTable;
use crate::numeric::Neumaier;
use crate::model::{targets_for, Context, Feature, FeatureId, FeatureSet, Params, M_MAX};
use crate::persist::TrainedModel;

/// How the topic of a held-out event is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mixture {
    /// Condition on the utterance's own topic label.
    #[default]
    TrueTopic,
    /// Ignore the label and average `p(w | i, t)` over topics, weighted by
    /// the training topic priors.
    Uniform,
}

impl fmt::Display for Mixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mixture::TrueTopic => "true-topic",
            Mixture::Uniform => "uniform",
        })
    }
}

impl FromStr for Mixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true-topic" => Ok(Mixture::TrueTopic),
            "uniform" => Ok(Mixture::Uniform),
            other => Err(Error::Config(format!("unknown mixture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Predicted events, one per word plus one end-of-utterance per utterance.
    pub tokens: u64,
    /// Natural-log probability of all events.
    pub logprob: f64,
    pub perplexity: f64,
    /// Fraction of corpus words outside the model vocabulary.
    pub oov_rate: f64,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tokens={} logprob={} ppl={} oov={}",
            self.tokens, self.logprob, self.perplexity, self.oov_rate
        )
    }
}

fn score(fs: &FeatureSet, params: &Params, h: Context, w: WordId) -> f64 {
    let lambda = params.lambda();
    let mut s = 0.0;
    let mut m = 0;
    for id in fs.active(h, w) {
        s += lambda[id];
        m += 1;
    }
    if let Some(sl) = fs.slack() {
        s += lambda[sl] * f64::from(M_MAX - m);
    }
    s
}

/// Perplexity of `model` on the event stream of `corpus`.
pub fn perplexity(model: &TrainedModel, corpus: &Corpus, mixture: Mixture, exec: Exec) -> Result<EvalReport> {
    let fs = &model.features;
    let num_topics = fs.num_topics();
    if corpus.utterances().is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(u) = corpus.utterances().iter().find(|u| u.topic as usize >= num_topics) {
        return Err(Error::Domain(format!("corpus topic {} but the model has T={num_topics}", u.topic)));
    }

    let mut oov = 0u64;
    let mut words = 0u64;
    let encoded: Vec<(TopicId, Vec<WordId>)> = corpus
        .utterances()
        .iter()
        .map(|u| {
            let ids = u
                .tokens
                .iter()
                .map(|tok| {
                    words += 1;
                    model.vocab.get(tok).unwrap_or_else(|| {
                        oov += 1;
                        model.vocab.id(tok)
                    })
                })
                .collect();
            (u.topic, ids)
        })
        .collect();

    let topics: Vec<(TopicId, f64)> = match mixture {
        Mixture::TrueTopic => Vec::new(),
        Mixture::Uniform => (0..num_topics as TopicId)
            .map(|t| (t, model.topic_priors[t as usize]))
            .filter(|&(_, p)| p > 0.0)
            .collect(),
    };
    if mixture == Mixture::Uniform && topics.is_empty() {
        return Err(Error::Domain("model has no topic with positive prior".into()));
    }

    let mut index: BTreeMap<Context, usize> = BTreeMap::new();
    for (topic, ids) in &encoded {
        for ev in utterance_events(*topic, ids) {
            match mixture {
                Mixture::TrueTopic => {
                    index.entry(Context::new(ev.prev, ev.topic)).or_insert(0);
                }
                Mixture::Uniform => {
                    for &(t, _) in &topics {
                        index.entry(Context::new(ev.prev, t)).or_insert(0);
                    }
                }
            }
        }
    }
    let contexts: Vec<Context> = index.keys().copied().collect();
    for (k, slot) in index.values_mut().enumerate() {
        *slot = k;
    }
    let (z, _) = ClusterEngine::new(fs, exec).z_for(&model.params, &contexts)?;
    let log_z: Vec<f64> = z.iter().map(|z| z.ln()).collect();

    // Each event yields ln p and a directly computed 1/p.
    let event = |prev: WordId, topic: TopicId, word: WordId| -> (f64, f64) {
        match mixture {
            Mixture::TrueTopic => {
                let h = Context::new(prev, topic);
                let k = index[&h];
                let s = score(fs, &model.params, h, word);
                (s - log_z[k], z[k] * (-s).exp())
            }
            Mixture::Uniform => {
                let p: f64 = topics
                    .iter()
                    .map(|&(t, prior)| {
                        let h = Context::new(prev, t);
                        prior * (score(fs, &model.params, h, word) - log_z[index[&h]]).exp()
                    })
                    .sum();
                (p.ln(), 1.0 / p)
            }
        }
    };
    let per_utterance = exec.map(&encoded, |(topic, ids)| {
        utterance_events(*topic, ids).map(|ev| event(ev.prev, ev.topic, ev.word)).collect::<Vec<_>>()
    });

    // Perplexity is taken relative to the first event, so a corpus whose
    // events all have the same probability gets exactly 1/p back instead of
    // exp(-ln p).
    let (ref_lp, ref_inv) = per_utterance[0][0];
    let mut logprob = Neumaier::default();
    let mut excess = Neumaier::default();
    let mut tokens = 0u64;
    for (lp, _) in per_utterance.iter().flatten() {
        logprob.add(*lp);
        excess.add(ref_lp - lp);
        tokens += 1;
    }
    Ok(EvalReport {
        tokens,
        logprob: logprob.value(),
        perplexity: ref_inv * (excess.value() / tokens as f64).exp(),
        oov_rate: oov as f64 / words as f64,
    })
}

/// One row of a residual report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub id: FeatureId,
    pub feature: Feature,
    pub target: f64,
    pub expectation: f64,
    /// `|E − c| / c`.
    pub relative: f64,
}

impl fmt::Display for Residual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.feature {
            Feature::Unigram(j) => format!("U {j}"),
            Feature::Bigram(i, j) => format!("B {i} {j}"),
            Feature::TopicUnigram(t, j) => format!("T {t} {j}"),
            Feature::Slack => "S".to_owned(),
        };
        write!(
            f,
            "feature={name} target={} expectation={} rel={}",
            self.target, self.expectation, self.relative
        )
    }
}

/// Targets, model expectations and relative residuals of every feature,
/// largest residual first.
pub fn residual_report(model: &TrainedModel, counts: &EmpiricalCounts, engine: EngineKind) -> Result<Vec<Residual>> {
    let fs = &model.features;
    if counts.vocab_size() != fs.vocab_size() || counts.num_topics() > fs.num_topics() {
        return Err(Error::Domain(format!(
            "counts over V={}, T={} do not fit a model with V={}, T={}",
            counts.vocab_size(),
            counts.num_topics(),
            fs.vocab_size(),
            fs.num_topics()
        )));
    }
    let targets = targets_for(counts, fs);
    let hist = HistoryTable::from_counts(counts);
    let (_, coef) = make_engine(engine, fs, Exec::SEQUENTIAL).pass(&model.params, &hist)?;
    let mut rows: Vec<Residual> = coef
        .table
        .expectations()
        .into_iter()
        .zip(targets.as_slice())
        .enumerate()
        .map(|(id, (e, &c))| Residual {
            id,
            feature: fs.feature(id),
            target: c,
            expectation: e,
            relative: if c > 0.0 {
                (e - c).abs() / c
            } else if e == 0.0 {
                0.0
            } else {
                f64::INFINITY
            },
        })
        .collect();
    rows.sort_by(|a, b| b.relative.total_cmp(&a.relative).then(a.id.cmp(&b.id)));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, extract_counts, parse_corpus, LoadOptions, TopicWordSets, Vocabulary};
    use crate::model::{build_feature_set, empirical_targets};

    fn uniform_model(text: &str) -> (TrainedModel, Corpus) {
        let corpus = parse_corpus(text, LoadOptions::default()).unwrap();
        let vocab = build_vocabulary(&corpus, 0);
        let counts = extract_counts(&corpus, &vocab);
        let topics = TopicWordSets::empty(counts.num_topics());
        let (fs, _) = empirical_targets(&counts, &build_feature_set(&counts, &topics, 1)).unwrap();
        let params = Params::zeros(fs.len());
        let priors = TrainedModel::topic_priors_from(&counts);
        (TrainedModel::new(fs, params, vocab, priors).unwrap(), corpus)
    }

    #[test]
    fn uniform_model_has_perplexity_v() {
        let (model, corpus) = uniform_model("0\ta b c\n1\tb b a\n0\tc\n");
        for mixture in [Mixture::TrueTopic, Mixture::Uniform] {
            let r = perplexity(&model, &corpus, mixture, Exec::SEQUENTIAL).unwrap();
            assert_eq!(r.tokens, 10);
            assert_eq!(r.perplexity, 5.0, "{mixture}");
            assert!((r.logprob + 10.0 * 5f64.ln()).abs() < 1e-13);
            assert_eq!(r.oov_rate, 0.0);
        }
    }

    #[test]
    fn single_utterance_hand_computed() {
        // V = {<s>, <unk>, a}; unigram a with λ = ln 2 and bigram (<s>, a) with λ = ln 3.
        let fs = FeatureSet::new(3, 1, vec![Feature::Unigram(2), Feature::Bigram(0, 2)]).unwrap();
        let params = Params::from_lambda(vec![2f64.ln(), 3f64.ln()]);
        let vocab = Vocabulary::from_words(vec!["<s>".into(), "<unk>".into(), "a".into()]).unwrap();
        let model = TrainedModel::new(fs, params, vocab, vec![1.0]).unwrap();
        let corpus = parse_corpus("0\ta\n", LoadOptions::default()).unwrap();
        let r = perplexity(&model, &corpus, Mixture::TrueTopic, Exec::SEQUENTIAL).unwrap();
        // p(a | <s>) = 6/8, p(<s> | a) = 1/4.
        let expect = (0.75f64).ln() + (0.25f64).ln();
        assert_eq!(r.tokens, 2);
        assert!((r.logprob - expect).abs() < 1e-14, "{}", r.logprob);
        assert!((r.perplexity - (-expect / 2.0).exp()).abs() < 1e-13);
    }

    #[test]
    fn oov_and_errors() {
        let (model, _) = uniform_model("0\ta b\n");
        let held = parse_corpus("0\ta zz\n", LoadOptions::default()).unwrap();
        let r = perplexity(&model, &held, Mixture::TrueTopic, Exec::SEQUENTIAL).unwrap();
        assert_eq!(r.oov_rate, 0.5);
        let bad_topic = parse_corpus("3\ta\n", LoadOptions::default()).unwrap();
        assert!(matches!(
            perplexity(&model, &bad_topic, Mixture::TrueTopic, Exec::SEQUENTIAL),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn residuals_of_uniform_model() {
        let (model, corpus) = uniform_model("0\ta b c\n1\tb b a\n");
        let counts = extract_counts(&corpus, &model.vocab);
        let v = model.features.vocab_size() as f64;
        let report = residual_report(&model, &counts, EngineKind::Direct).unwrap();
        assert!(report.windows(2).all(|w| w[0].relative >= w[1].relative));
        for r in &report {
            if let Feature::Unigram(_) = r.feature {
                let expect = (1.0 / v - r.target).abs() / r.target;
                assert!((r.relative - expect).abs() < 1e-12, "{r} {expect} v={v}");
            }
        }
        let mut direct = report.clone();
        let mut cluster = residual_report(&model, &counts, EngineKind::Cluster).unwrap();
        direct.sort_by_key(|r| r.id);
        cluster.sort_by_key(|r| r.id);
        for (a, b) in direct.iter().zip(&cluster) {
            assert_eq!(a.id, b.id);
            assert!((a.expectation - b.expectation).abs() <= 1e-10 * a.expectation.abs());
        }
    }
}
