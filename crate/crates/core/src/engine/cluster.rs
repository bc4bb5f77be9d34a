//! Cluster expansion of the topic-bigram partition function.
//!
//! With `φ_α = e^{λ_α} − 1` (zero for absent features),
//!
//! ```text
//! Z(i, t) = Σ_j (1 + φ_j)(1 + φ_tj)(1 + φ_ij) = b0 + b1 + b2 + b3
//!   b0 = V
//!   b1 = S0 + A(t) + B1(i)
//!   b2 = AU(t) + BU(i) + Σ_{j ∈ B(i) ∩ T(t)} φ_tj φ_ij
//!   b3 =                 Σ_{j ∈ B(i) ∩ T(t)} φ_j φ_tj φ_ij
//! ```
//!
//! `S0`, `A`, `AU`, `B1`, `BU` depend on a single list each and are shared by
//! all histories; only the intersections are history specific, and those are
//! linear merges of two sorted lists.
//!
//! A slack feature contributes `e^{λ_s (M_MAX − M)} = e^{M_MAX λ_s} Π e^{−λ_s}`,
//! so it is absorbed by shifting every other λ by `−λ_s` and carrying the
//! constant factor `e^{M_MAX λ_s}` separately.

use std::borrow::Cow;

use super::{CoefPass, CoefficientTable, Engine, EngineKind, ZPass, OVERFLOW_BOUND};
use crate::corpus::WordId;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::history::HistoryTable;
use crate::model::{Context, FeatureSet, Params, M_MAX};

const M: usize = M_MAX as usize;

/// History-independent partial sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedSums {
    /// `S0 = Σ_j φ_j`
    pub s0: f64,
    /// `A(t) = Σ_{j∈T(t)} φ_tj`
    pub a: Vec<f64>,
    /// `AU(t) = Σ_{j∈T(t)} φ_j φ_tj`
    pub au: Vec<f64>,
    /// `B1(i) = Σ_{j∈B(i)} φ_ij`
    pub b1: Vec<f64>,
    /// `BU(i) = Σ_{j∈B(i)} φ_j φ_ij`
    pub bu: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterTerms {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl ClusterTerms {
    pub fn total(&self) -> f64 {
        self.b0 + self.b1 + self.b2 + self.b3
    }
}

/// Effective φ values for one parameter vector.
struct Weights<'p> {
    phi: Cow<'p, [f64]>,
    /// Unigram φ per word, zero where the word has no unigram feature.
    uni: Vec<f64>,
    has_uni: Vec<bool>,
    /// `M_MAX · λ_slack`, zero without slack.
    log_scale: f64,
}

impl<'p> Weights<'p> {
    fn new(fs: &FeatureSet, params: &'p Params) -> Result<Self> {
        let (phi, log_scale) = match fs.slack() {
            None => (Cow::Borrowed(params.phi()), 0.0),
            Some(s) => {
                let ls = params.lambda()[s];
                let phi = params
                    .lambda()
                    .iter()
                    .enumerate()
                    .map(|(id, &l)| if id == s { 0.0 } else { (l - ls).exp_m1() })
                    .collect();
                (Cow::Owned(phi), f64::from(M_MAX) * ls)
            }
        };
        if log_scale > OVERFLOW_BOUND {
            return Err(Error::Overflow { exponent: log_scale });
        }
        let v = fs.vocab_size();
        let mut uni = vec![0.0; v];
        let mut has_uni = vec![false; v];
        for j in 0..v {
            if let Some(id) = fs.unigram(j as WordId) {
                uni[j] = phi[id];
                has_uni[j] = true;
            }
        }
        Ok(Weights { phi, uni, has_uni, log_scale })
    }
}

/// Calls `f(j, position in b, position in t)` for every word of `b ∪ t`
/// in ascending order; returns the number of merge steps.
#[inline]
fn merge_union(b: &[WordId], t: &[WordId], mut f: impl FnMut(WordId, Option<usize>, Option<usize>)) -> u64 {
    let (mut p, mut q) = (0, 0);
    let mut steps = 0;
    while p < b.len() && q < t.len() {
        let (x, y) = (b[p], t[q]);
        if x == y {
            f(x, Some(p), Some(q));
            p += 1;
            q += 1;
        } else if x < y {
            f(x, Some(p), None);
            p += 1;
        } else {
            f(y, None, Some(q));
            q += 1;
        }
        steps += 1;
    }
    for (k, &x) in b.iter().enumerate().skip(p) {
        f(x, Some(k), None);
    }
    for (k, &y) in t.iter().enumerate().skip(q) {
        f(y, None, Some(k));
    }
    steps + (b.len() - p + t.len() - q) as u64
}

pub struct ClusterEngine<'a> {
    fs: &'a FeatureSet,
    exec: Exec,
}

struct PrevPartial {
    coef: Vec<[f64; M]>,
    weight: f64,
    count: usize,
    slack_mass: f64,
    ops: u64,
}

struct TopicPartial {
    coef: Vec<[f64; M]>,
    /// Mass, weight and history count of the histories where the topic
    /// word is not also a constrained successor.
    lone_mass: Vec<f64>,
    lone_weight: Vec<f64>,
    lone_count: Vec<usize>,
    ops: u64,
}

impl<'a> ClusterEngine<'a> {
    pub fn new(fs: &'a FeatureSet, exec: Exec) -> Self {
        ClusterEngine { fs, exec }
    }

    fn shared(&self, w: &Weights) -> (SharedSums, u64) {
        let fs = self.fs;
        let s0 = w.uni.iter().sum();
        let topic = self.exec.map_range(fs.num_topics(), |t| {
            let (words, ids) = fs.topic_list(t as u32);
            let phi = &w.phi[ids];
            let a: f64 = phi.iter().sum();
            let au: f64 = words.iter().zip(phi).map(|(&j, &p)| w.uni[j as usize] * p).sum();
            (a, au)
        });
        let bigram = self.exec.map_range(fs.vocab_size(), |i| {
            let (words, ids) = fs.successors(i as WordId);
            let phi = &w.phi[ids];
            let b1: f64 = phi.iter().sum();
            let bu: f64 = words.iter().zip(phi).map(|(&j, &p)| w.uni[j as usize] * p).sum();
            (b1, bu)
        });
        let (a, au) = topic.into_iter().unzip();
        let (b1, bu) = bigram.into_iter().unzip();
        let ops = (fs.vocab_size() + fs.num_bigrams() + fs.num_topic_features()) as u64;
        (SharedSums { s0, a, au, b1, bu }, ops)
    }

    fn terms(&self, w: &Weights, shared: &SharedSums, h: Context) -> (ClusterTerms, u64) {
        let (bw, bids) = self.fs.successors(h.prev);
        let (tw, tids) = self.fs.topic_list(h.topic);
        let (bphi, tphi) = (&w.phi[bids], &w.phi[tids]);
        let (mut pair, mut triple) = (0.0, 0.0);
        let (mut p, mut q) = (0, 0);
        let mut steps = 0u64;
        while p < bw.len() && q < tw.len() {
            steps += 1;
            match bw[p].cmp(&tw[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    let prod = tphi[q] * bphi[p];
                    pair += prod;
                    triple += w.uni[bw[p] as usize] * prod;
                    p += 1;
                    q += 1;
                }
            }
        }
        let (t, i) = (h.topic as usize, h.prev as usize);
        let terms = ClusterTerms {
            b0: self.fs.vocab_size() as f64,
            b1: shared.s0 + shared.a[t] + shared.b1[i],
            b2: shared.au[t] + shared.bu[i] + pair,
            b3: triple,
        };
        (terms, steps)
    }

    /// Shared sums for `params`.
    pub fn precompute(&self, params: &Params) -> Result<SharedSums> {
        let w = Weights::new(self.fs, params)?;
        Ok(self.shared(&w).0)
    }

    /// Cluster terms of `Z(h)` (without the slack scale factor).
    pub fn cluster_terms(&self, params: &Params, shared: &SharedSums, h: Context) -> Result<ClusterTerms> {
        let w = Weights::new(self.fs, params)?;
        Ok(self.terms(&w, shared, h).0)
    }

    /// `Z(h)` for an arbitrary list of contexts.
    pub fn z_for(&self, params: &Params, contexts: &[Context]) -> Result<(Vec<f64>, u64)> {
        super::check_contexts(self.fs, contexts)?;
        let w = Weights::new(self.fs, params)?;
        let (shared, mut ops) = self.shared(&w);
        let scale = w.log_scale.exp();
        let per = self.exec.map(contexts, |&h| self.terms(&w, &shared, h));
        let mut z = Vec::with_capacity(per.len());
        for (&h, (terms, steps)) in contexts.iter().zip(per) {
            let total = terms.total();
            if !total.is_finite() {
                return Err(Error::Overflow { exponent: f64::INFINITY });
            }
            if total <= 0.0 {
                return Err(Error::Domain(format!("non-positive partition function at {h:?}")));
            }
            z.push(total * scale);
            ops += steps;
        }
        Ok((z, ops))
    }

    fn prev_partial(&self, w: &Weights, hist: &HistoryTable, rho: &[f64], i: WordId, range: std::ops::Range<usize>, g: f64) -> PrevPartial {
        let fs = self.fs;
        let slack = fs.slack().is_some();
        let (bw, bids) = fs.successors(i);
        let bphi = &w.phi[bids];
        let mut part = PrevPartial {
            coef: vec![[0.0; M]; bw.len()],
            weight: 0.0,
            count: range.len(),
            slack_mass: 0.0,
            ops: 0,
        };
        for k in range {
            let h = hist.contexts()[k];
            let r = rho[k];
            part.weight += r;
            let (tw, tids) = fs.topic_list(h.topic);
            let tphi = &w.phi[tids];
            let mut listed = 0.0;
            let coef = &mut part.coef;
            part.ops += merge_union(bw, tw, |j, bp, tq| {
                let u = w.has_uni[j as usize];
                let base = 1.0 + w.uni[j as usize];
                let mut e = base;
                let mut m = u as usize;
                if let Some(p) = bp {
                    e *= 1.0 + bphi[p];
                    m += 1;
                }
                if let Some(q) = tq {
                    e *= 1.0 + tphi[q];
                    m += 1;
                }
                if let Some(p) = bp {
                    coef[p][m - 1] += r * e;
                }
                if slack {
                    listed += e * (M - m) as f64 - base * (M - u as usize) as f64;
                }
            });
            if slack {
                part.slack_mass += r * (g + listed);
            }
        }
        part
    }

    fn topic_partial(&self, w: &Weights, hist: &HistoryTable, rho: &[f64], t: usize) -> TopicPartial {
        let fs = self.fs;
        let (tw, tids) = fs.topic_list(t as u32);
        let tphi = &w.phi[tids];
        let n = tw.len();
        let mut part = TopicPartial {
            coef: vec![[0.0; M]; n],
            lone_mass: vec![0.0; n],
            lone_weight: vec![0.0; n],
            lone_count: vec![0; n],
            ops: 0,
        };
        if n == 0 || t >= hist.num_topics() {
            return part;
        }
        for &k in hist.with_topic(t) {
            let h = hist.contexts()[k];
            let r = rho[k];
            let (bw, bids) = fs.successors(h.prev);
            let bphi = &w.phi[bids];
            let TopicPartial { coef, lone_mass, lone_weight, lone_count, ops } = &mut part;
            *ops += merge_union(bw, tw, |j, bp, tq| {
                let Some(q) = tq else { return };
                let mut e = (1.0 + w.uni[j as usize]) * (1.0 + tphi[q]);
                let mut m = w.has_uni[j as usize] as usize + 1;
                match bp {
                    Some(p) => {
                        e *= 1.0 + bphi[p];
                        m += 1;
                    }
                    None => {
                        lone_mass[q] += r * e;
                        lone_weight[q] += r;
                        lone_count[q] += 1;
                    }
                }
                coef[q][m - 1] += r * e;
            });
        }
        part
    }
}

impl Engine for ClusterEngine<'_> {
    fn kind(&self) -> EngineKind {
        EngineKind::Cluster
    }

    fn feature_set(&self) -> &FeatureSet {
        self.fs
    }

    fn partition_functions(&self, params: &Params, hist: &HistoryTable) -> Result<ZPass> {
        let (z, ops) = self.z_for(params, hist.contexts())?;
        Ok(ZPass { z, ops })
    }

    fn coefficients(&self, params: &Params, hist: &HistoryTable, z: &ZPass) -> Result<CoefPass> {
        let fs = self.fs;
        let w = Weights::new(fs, params)?;
        let inv_scale = (-w.log_scale).exp();
        // ρ(h) = p̃(h) / Z(h), in the slack-shifted φ domain.
        let rho: Vec<f64> = hist.weights().iter().zip(&z.z).map(|(&p, &zh)| p / (zh * inv_scale)).collect();
        let total_rho: f64 = rho.iter().sum();

        // Σ_w (1 + φ_w)(M_MAX − u_w): the slack mass of an all-bulk history.
        let g: f64 = if fs.slack().is_some() {
            (0..fs.vocab_size()).map(|j| (1.0 + w.uni[j]) * (M - w.has_uni[j] as usize) as f64).sum()
        } else {
            0.0
        };

        let prev = self.exec.map(hist.by_prev(), |(i, range)| self.prev_partial(&w, hist, &rho, *i, range.clone(), g));
        let topic = self.exec.map_range(fs.num_topics(), |t| self.topic_partial(&w, hist, &rho, t));

        let mut table = CoefficientTable::zeros(fs.len());
        let v = fs.vocab_size();
        let mut uni = vec![[0.0; M]; v];
        let mut covered_weight = vec![0.0; v];
        let mut covered = vec![0usize; v];
        let mut ops = (v + fs.len()) as u64;
        let mut slack_mass = 0.0;

        for ((i, _), part) in hist.by_prev().iter().zip(&prev) {
            let (bw, bids) = fs.successors(*i);
            for ((&j, id), c) in bw.iter().zip(bids).zip(&part.coef) {
                *table.row_mut(id) = *c;
                let acc = &mut uni[j as usize];
                for m in 0..M {
                    acc[m] += c[m];
                }
                covered_weight[j as usize] += part.weight;
                covered[j as usize] += part.count;
            }
            slack_mass += part.slack_mass;
            ops += part.ops;
        }
        for (t, part) in topic.iter().enumerate() {
            let (tw, tids) = fs.topic_list(t as u32);
            for (q, (&j, id)) in tw.iter().zip(tids).enumerate() {
                *table.row_mut(id) = part.coef[q];
                let j = j as usize;
                uni[j][w.has_uni[j] as usize] += part.lone_mass[q];
                covered_weight[j] += part.lone_weight[q];
                covered[j] += part.lone_count[q];
            }
            ops += part.ops;
        }
        // Histories where j is in neither list see only the unigram factor.
        for (j, acc) in uni.iter_mut().enumerate() {
            let Some(id) = fs.unigram(j as WordId) else { continue };
            if covered[j] < hist.len() {
                acc[0] += (1.0 + w.uni[j]) * (total_rho - covered_weight[j]).max(0.0);
            }
            *table.row_mut(id) = *acc;
        }

        if let Some(s) = fs.slack() {
            for id in 0..fs.len() {
                let row = table.row_mut(id);
                let sum = row.iter().sum();
                *row = [0.0; M];
                row[M - 1] = if id == s { slack_mass } else { sum };
            }
        }
        Ok(CoefPass { table, ops })
    }
}

pub fn precompute_shared(params: &Params, fs: &FeatureSet) -> Result<SharedSums> {
    ClusterEngine::new(fs, Exec::SEQUENTIAL).precompute(params)
}

pub fn cluster_terms(params: &Params, fs: &FeatureSet, shared: &SharedSums, h: Context) -> Result<ClusterTerms> {
    ClusterEngine::new(fs, Exec::SEQUENTIAL).cluster_terms(params, shared, h)
}

/// `Z(h)` for every history, aligned with `hist.contexts()`.
pub fn z_cluster_all(params: &Params, fs: &FeatureSet, hist: &HistoryTable) -> Result<Vec<f64>> {
    Ok(ClusterEngine::new(fs, Exec::SEQUENTIAL).z_for(params, hist.contexts())?.0)
}
