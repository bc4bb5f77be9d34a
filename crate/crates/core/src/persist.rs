//! Versioned text model files.
//!
//! ```text
//! maxent-cluster v1 V=<n> T=<n> F=<n>
//! U <j> <lambda>            one line per feature, in feature-id order
//! B <i> <j> <lambda>
//! T <t> <j> <lambda>
//! S <lambda>
//! vocab
//! <id> <word>               V lines
//! topics
//! <t> <prior>               T lines
//! end
//! ```
//!
//! λ values and priors are hexadecimal floats, so a save/load round trip is
//! bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{EmpiricalCounts, Vocabulary};
use crate::error::{Error, Result};
use crate::hexfloat;
use crate::model::{Feature, FeatureSet, Params};

pub const MAGIC: &str = "maxent-cluster";
pub const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub features: FeatureSet,
    pub params: Params,
    pub vocab: Vocabulary,
    /// Empirical topic distribution of the training events.
    pub topic_priors: Vec<f64>,
}

impl TrainedModel {
    pub fn new(features: FeatureSet, params: Params, vocab: Vocabulary, topic_priors: Vec<f64>) -> Result<Self> {
        if features.len() != params.len() {
            return Err(Error::Format(format!("{} features but {} parameters", features.len(), params.len())));
        }
        if features.vocab_size() != vocab.len() {
            return Err(Error::Format(format!(
                "feature set expects V={} but vocabulary has {} words",
                features.vocab_size(),
                vocab.len()
            )));
        }
        if topic_priors.len() != features.num_topics() {
            return Err(Error::Format(format!("{} topic priors for T={}", topic_priors.len(), features.num_topics())));
        }
        Ok(TrainedModel { features, params, vocab, topic_priors })
    }

    pub fn topic_priors_from(counts: &EmpiricalCounts) -> Vec<f64> {
        let n = counts.total() as f64;
        (0..counts.num_topics() as u32).map(|t| counts.topic_count(t) as f64 / n).collect()
    }

    pub fn to_text(&self) -> String {
        let fs = &self.features;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION} V={} T={} F={}", fs.vocab_size(), fs.num_topics(), fs.len());
        for (f, &l) in fs.features().iter().zip(self.params.lambda()) {
            let l = hexfloat::format(l);
            let _ = match *f {
                Feature::Unigram(j) => writeln!(out, "U {j} {l}"),
                Feature::Bigram(i, j) => writeln!(out, "B {i} {j} {l}"),
                Feature::TopicUnigram(t, j) => writeln!(out, "T {t} {j} {l}"),
                Feature::Slack => writeln!(out, "S {l}"),
            };
        }
        out.push_str("vocab\n");
        for (id, w) in self.vocab.words().iter().enumerate() {
            let _ = writeln!(out, "{id} {w}");
        }
        out.push_str("topics\n");
        for (t, &p) in self.topic_priors.iter().enumerate() {
            let _ = writeln!(out, "{t} {}", hexfloat::format(p));
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::Truncated(format!("expected {what}")));

        let header = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(Error::Format(format!("not a model file (header {header:?})")));
        }
        match parts.next() {
            Some(VERSION) => {}
            other => {
                return Err(Error::Version { found: other.unwrap_or("").to_owned(), expected: VERSION });
            }
        }
        let mut field = |key: &str| -> Result<usize> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(key))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format(format!("header is missing {key}<n>")))
        };
        let (v, t, f) = (field("V=")?, field("T=")?, field("F=")?);

        let mut features = Vec::with_capacity(f);
        let mut lambda = Vec::with_capacity(f);
        for k in 0..f {
            let line = next("feature line")?;
            let bad = || Error::Format(format!("bad feature line {}: {line:?}", k + 1));
            let tok: Vec<&str> = line.split_whitespace().collect();
            let idx = |s: &str| s.parse::<u32>().map_err(|_| bad());
            let (feat, l) = match tok.as_slice() {
                ["U", j, l] => (Feature::Unigram(idx(j)?), *l),
                ["B", i, j, l] => (Feature::Bigram(idx(i)?, idx(j)?), *l),
                ["T", t, j, l] => (Feature::TopicUnigram(idx(t)?, idx(j)?), *l),
                ["S", l] => (Feature::Slack, *l),
                _ => return Err(bad()),
            };
            features.push(feat);
            lambda.push(hexfloat::parse(l).ok_or_else(bad)?);
        }
        if features.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("features are not in canonical order".into()));
        }

        if next("vocab section")? != "vocab" {
            return Err(Error::Format("expected vocab section".into()));
        }
        let mut words = Vec::with_capacity(v);
        for id in 0..v {
            let line = next("vocabulary line")?;
            let (k, w) = line
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("bad vocabulary line {line:?}")))?;
            if k.parse::<usize>().ok() != Some(id) {
                return Err(Error::Format(format!("vocabulary line {line:?} out of order")));
            }
            words.push(w.to_owned());
        }

        if next("topics section")? != "topics" {
            return Err(Error::Format("expected topics section".into()));
        }
        let mut priors = Vec::with_capacity(t);
        for topic in 0..t {
            let line = next("topic line")?;
            let bad = || Error::Format(format!("bad topic line {line:?}"));
            let (k, p) = line.split_once(' ').ok_or_else(bad)?;
            if k.parse::<usize>().ok() != Some(topic) {
                return Err(bad());
            }
            priors.push(hexfloat::parse(p).ok_or_else(bad)?);
        }
        if next("end marker")? != "end" {
            return Err(Error::Format("expected end marker".into()));
        }

        let fs = FeatureSet::new(v, t, features)?;
        TrainedModel::new(fs, Params::from_lambda(lambda), Vocabulary::from_words(words)?, priors)
    }
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_text()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    TrainedModel::from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(slack: bool) -> TrainedModel {
        let mut feats = vec![Feature::Unigram(0), Feature::Unigram(2), Feature::Bigram(2, 0), Feature::TopicUnigram(1, 2)];
        if slack {
            feats.push(Feature::Slack);
        }
        let fs = FeatureSet::new(3, 2, feats).unwrap();
        let lambda = (0..fs.len()).map(|k| (k as f64 + 0.1).sin() / 3.0).collect();
        let vocab = Vocabulary::from_words(vec!["<s>".into(), "<unk>".into(), "hi".into()]).unwrap();
        TrainedModel::new(fs, Params::from_lambda(lambda), vocab, vec![0.25, 0.75]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for slack in [false, true] {
            let m = sample(slack);
            let back = TrainedModel::from_text(&m.to_text()).unwrap();
            assert_eq!(back, m);
            let bits = |p: &Params| p.lambda().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back.params), bits(&m.params));
        }
    }

    #[test]
    fn header_line() {
        let text = sample(false).to_text();
        assert!(text.starts_with("maxent-cluster v1 V=3 T=2 F=4\n"));
        assert!(text.contains("\nB 2 0 "));
    }

    #[test]
    fn unknown_version() {
        let text = sample(false).to_text().replacen("v1", "v9", 1);
        assert!(matches!(TrainedModel::from_text(&text), Err(Error::Version { .. })));
    }

    #[test]
    fn truncated_file() {
        let text = sample(false).to_text();
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(matches!(TrainedModel::from_text(&cut), Err(Error::Truncated(_))));
        assert!(matches!(TrainedModel::from_text(""), Err(Error::Truncated(_))));
    }
}
