use std::collections::HashMap;

use super::{CoefPass, CoefficientTable, Engine, EngineKind, ZPass, OVERFLOW_BOUND};
use crate::corpus::WordId;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::history::HistoryTable;
use crate::model::{Context, Feature, FeatureId, FeatureSet, Params, M_MAX};

/// Reference engine: for every history, hashes every `(h, w)` pair to find
/// its features and sums `exp(Σ λ f)` over the full vocabulary.
pub struct DirectEngine<'a> {
    fs: &'a FeatureSet,
    unigram: HashMap<WordId, FeatureId>,
    bigram: HashMap<(WordId, WordId), FeatureId>,
    topic: HashMap<(u32, WordId), FeatureId>,
    exec: Exec,
}

struct Firing {
    score: f64,
    active: [Option<FeatureId>; 3],
    multiplicity: u32,
}

impl<'a> DirectEngine<'a> {
    pub fn new(fs: &'a FeatureSet, exec: Exec) -> Self {
        let mut unigram = HashMap::new();
        let mut bigram = HashMap::new();
        let mut topic = HashMap::new();
        for (id, f) in fs.features().iter().enumerate() {
            match *f {
                Feature::Unigram(j) => {
                    unigram.insert(j, id);
                }
                Feature::Bigram(i, j) => {
                    bigram.insert((i, j), id);
                }
                Feature::TopicUnigram(t, j) => {
                    topic.insert((t, j), id);
                }
                Feature::Slack => {}
            }
        }
        DirectEngine { fs, unigram, bigram, topic, exec }
    }

    fn fire(&self, params: &Params, h: Context, w: WordId) -> Result<Firing> {
        let active = [
            self.unigram.get(&w).copied(),
            self.bigram.get(&(h.prev, w)).copied(),
            self.topic.get(&(h.topic, w)).copied(),
        ];
        let lambda = params.lambda();
        let mut score = 0.0;
        let mut multiplicity = 0;
        for id in active.iter().flatten() {
            score += lambda[*id];
            multiplicity += 1;
        }
        if let Some(s) = self.fs.slack() {
            score += lambda[s] * f64::from(M_MAX - multiplicity);
        }
        if score > OVERFLOW_BOUND {
            return Err(Error::Overflow { exponent: score });
        }
        Ok(Firing { score, active, multiplicity })
    }

    pub fn z(&self, params: &Params, h: Context) -> Result<f64> {
        let mut z = 0.0;
        for w in 0..self.fs.vocab_size() as WordId {
            z += self.fire(params, h, w)?.score.exp();
        }
        Ok(z)
    }

    pub fn conditional_prob(&self, params: &Params, h: Context, w: WordId) -> Result<f64> {
        Ok(self.fire(params, h, w)?.score.exp() / self.z(params, h)?)
    }

    /// `E[α] = Σ_h p̃(h) Σ_w p(w|h) f_α(h, w)`.
    pub fn expectations(&self, params: &Params, hist: &HistoryTable) -> Result<Vec<f64>> {
        let mut e = vec![0.0; self.fs.len()];
        for (h, weight) in hist.iter() {
            let z = self.z(params, h)?;
            for w in 0..self.fs.vocab_size() as WordId {
                let f = self.fire(params, h, w)?;
                let mass = weight * f.score.exp() / z;
                for id in f.active.iter().flatten() {
                    e[*id] += mass;
                }
                if let Some(s) = self.fs.slack() {
                    e[s] += mass * f64::from(M_MAX - f.multiplicity);
                }
            }
        }
        Ok(e)
    }
}

impl Engine for DirectEngine<'_> {
    fn kind(&self) -> EngineKind {
        EngineKind::Direct
    }

    fn feature_set(&self) -> &FeatureSet {
        self.fs
    }

    fn partition_functions(&self, params: &Params, hist: &HistoryTable) -> Result<ZPass> {
        super::check_contexts(self.fs, hist.contexts())?;
        let z = self
            .exec
            .map(hist.contexts(), |&h| self.z(params, h))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(ZPass { z, ops: (hist.len() * self.fs.vocab_size()) as u64 })
    }

    fn coefficients(&self, params: &Params, hist: &HistoryTable, z: &ZPass) -> Result<CoefPass> {
        let mut table = CoefficientTable::zeros(self.fs.len());
        let slack = self.fs.slack();
        for ((h, weight), &zh) in hist.iter().zip(&z.z) {
            for w in 0..self.fs.vocab_size() as WordId {
                let f = self.fire(params, h, w)?;
                let mass = weight * f.score.exp() / zh;
                // With slack every feature sum is M_MAX, so the exponent is constant.
                let m = if slack.is_some() { M_MAX } else { f.multiplicity };
                for id in f.active.iter().flatten() {
                    table.row_mut(*id)[m as usize - 1] += mass;
                }
                if let Some(s) = slack {
                    table.row_mut(s)[M_MAX as usize - 1] += mass * f64::from(M_MAX - f.multiplicity);
                }
            }
        }
        Ok(CoefPass { table, ops: (hist.len() * self.fs.vocab_size()) as u64 })
    }
}

/// `Z(h)` by explicit summation over the vocabulary.
pub fn z_direct(params: &Params, fs: &FeatureSet, h: Context) -> Result<f64> {
    DirectEngine::new(fs, Exec::SEQUENTIAL).z(params, h)
}

pub fn conditional_prob(params: &Params, fs: &FeatureSet, h: Context, w: WordId) -> Result<f64> {
    DirectEngine::new(fs, Exec::SEQUENTIAL).conditional_prob(params, h, w)
}

pub fn expectations_direct(params: &Params, fs: &FeatureSet, hist: &HistoryTable) -> Result<Vec<f64>> {
    DirectEngine::new(fs, Exec::SEQUENTIAL).expectations(params, hist)
}
