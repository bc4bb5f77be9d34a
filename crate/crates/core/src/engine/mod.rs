//! Two interchangeable ways of computing the per-iteration quantities of
//! iterative scaling: the partition function `Z(h)` of every history and the
//! coefficient table of the scaling polynomials.
//!
//! [`DirectEngine`] sums over the whole vocabulary for every history.
//! [`ClusterEngine`] expands `Z(h)` into cluster terms over the sparse
//! constraint lists and never scans the vocabulary per history.

mod cluster;
mod direct;

use std::fmt;
use std::str::FromStr;

pub use cluster::{cluster_terms, precompute_shared, z_cluster_all, ClusterEngine, ClusterTerms, SharedSums};
pub use direct::{conditional_prob, expectations_direct, z_direct, DirectEngine};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::history::HistoryTable;
use crate::model::{FeatureId, FeatureSet, Params, M_MAX};

/// Largest exponent either engine will evaluate before reporting overflow.
pub const OVERFLOW_BOUND: f64 = 700.0;

/// Polynomial coefficients of the scaling equation
/// `Σ_m a[α][m] · x^m = c_α`, for `m = 1..=M_MAX`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    rows: Vec<[f64; M_MAX as usize]>,
}

impl CoefficientTable {
    pub fn zeros(len: usize) -> Self {
        CoefficientTable { rows: vec![[0.0; M_MAX as usize]; len] }
    }

    pub fn from_rows(rows: Vec<[f64; M_MAX as usize]>) -> Self {
        CoefficientTable { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[[f64; M_MAX as usize]] {
        &self.rows
    }

    pub fn row(&self, id: FeatureId) -> &[f64; M_MAX as usize] {
        &self.rows[id]
    }

    pub(crate) fn row_mut(&mut self, id: FeatureId) -> &mut [f64; M_MAX as usize] {
        &mut self.rows[id]
    }

    /// Coefficient of `x^m`, `1 <= m <= M_MAX`.
    pub fn get(&self, id: FeatureId, m: u32) -> f64 {
        self.rows[id][m as usize - 1]
    }

    /// Model expectation of every feature: the row sums.
    pub fn expectations(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZPass {
    /// `Z(h)` aligned with the history table.
    pub z: Vec<f64>,
    pub ops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefPass {
    pub table: CoefficientTable,
    pub ops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Direct,
    Cluster,
}

impl EngineKind {
    pub fn short(self) -> &'static str {
        match self {
            EngineKind::Direct => "d",
            EngineKind::Cluster => "c",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::Direct => "direct",
            EngineKind::Cluster => "cluster",
        })
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" | "d" => Ok(EngineKind::Direct),
            "cluster" | "c" => Ok(EngineKind::Cluster),
            other => Err(Error::Config(format!("unknown engine {other:?}"))),
        }
    }
}

pub trait Engine: Sync {
    fn kind(&self) -> EngineKind;

    fn feature_set(&self) -> &FeatureSet;

    fn partition_functions(&self, params: &Params, hist: &HistoryTable) -> Result<ZPass>;

    /// Coefficient table given the partition functions from
    /// [`Engine::partition_functions`] at the same parameters.
    fn coefficients(&self, params: &Params, hist: &HistoryTable, z: &ZPass) -> Result<CoefPass>;

    fn pass(&self, params: &Params, hist: &HistoryTable) -> Result<(ZPass, CoefPass)> {
        let z = self.partition_functions(params, hist)?;
        let coef = self.coefficients(params, hist, &z)?;
        Ok((z, coef))
    }
}

pub fn make_engine<'a>(kind: EngineKind, fs: &'a FeatureSet, exec: Exec) -> Box<dyn Engine + 'a> {
    match kind {
        EngineKind::Direct => Box::new(DirectEngine::new(fs, exec)),
        EngineKind::Cluster => Box::new(ClusterEngine::new(fs, exec)),
    }
}

pub(crate) fn check_contexts(fs: &FeatureSet, contexts: &[crate::model::Context]) -> Result<()> {
    match contexts
        .iter()
        .find(|h| h.prev as usize >= fs.vocab_size() || h.topic as usize >= fs.num_topics())
    {
        Some(h) => Err(Error::Domain(format!(
            "history {h:?} outside V={}, T={}",
            fs.vocab_size(),
            fs.num_topics()
        ))),
        None => Ok(()),
    }
}

/// Relative difference with an absolute floor: values both below `floor`
/// in magnitude compare equal.
pub fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    if a == b || (a.abs() < floor && b.abs() < floor) {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

pub fn max_rel_diff(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| rel_diff(x, y, floor)).fold(0.0, f64::max)
}

pub fn max_rel_diff_tables(a: &CoefficientTable, b: &CoefficientTable, floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.rows()
        .iter()
        .zip(b.rows())
        .flat_map(|(x, y)| x.iter().zip(y))
        .map(|(&x, &y)| rel_diff(x, y, floor))
        .fold(0.0, f64::max)
}
