//! Generalized iterative scaling (constant feature sum, via the slack
//! feature) and improved iterative scaling (per-event multiplicity).
//!
//! Both update every λ_α by `ln x_α`, where `x_α > 0` solves
//!
//! ```text
//! Σ_m a[α][m] · x^m = c_α
//! ```
//!
//! With a slack feature all coefficient mass sits at `m = M_MAX` and the
//! root is the closed-form GIS step `(c_α / E_α)^{1/M_MAX}`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::corpus::EmpiricalCounts;
use crate::engine::{make_engine, CoefficientTable, DirectEngine, Engine, EngineKind};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::history::HistoryTable;
use crate::numeric::Neumaier;
use crate::model::{Context, FeatureSet, Params, TargetVector, M_MAX};

/// Largest tolerated log-likelihood decrease between iterations.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Gis,
    Iis,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Gis => "gis",
            Algorithm::Iis => "iis",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gis" => Ok(Algorithm::Gis),
            "iis" => Ok(Algorithm::Iis),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { newton_tol: 1e-12, max_newton: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub engine: EngineKind,
    pub max_iters: usize,
    /// Stop once the largest relative constraint residual drops below this.
    pub tol: f64,
    pub solver: SolverConfig,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Iis,
            engine: EngineKind::Cluster,
            max_iters: 1000,
            tol: 1e-4,
            solver: SolverConfig::default(),
            exec: Exec::SEQUENTIAL,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("all coefficients are zero")]
    Inactive,
    #[error("target must be positive and finite")]
    BadTarget,
    #[error("coefficients must be finite and nonnegative")]
    BadCoefficients,
    #[error("no bracket found for the root")]
    NoBracket,
}

/// Unique positive root of `Σ_m coeffs[m-1] · x^m = target`.
///
/// Nonnegative coefficients make the polynomial increasing and convex on
/// `x > 0`. Newton steps are clipped to a bracket that is expanded
/// geometrically until it straddles the root; a step that leaves the
/// bracket falls back to bisection.
pub fn solve_update(coeffs: &[f64; M_MAX as usize], target: f64, cfg: &SolverConfig) -> Result<f64, SolveError> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(SolveError::BadTarget);
    }
    if coeffs.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
        return Err(SolveError::BadCoefficients);
    }
    let total: f64 = coeffs.iter().sum();
    if total <= 0.0 {
        return Err(SolveError::Inactive);
    }
    let poly = |x: f64| ((coeffs[2] * x + coeffs[1]) * x + coeffs[0]) * x;
    let slope = |x: f64| (3.0 * coeffs[2] * x + 2.0 * coeffs[1]) * x + coeffs[0];
    let tol = cfg.newton_tol;

    let mut lo = 0.0;
    let mut hi = (target / total).max(1.0);
    let mut expansions = 0;
    while poly(hi) < target {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 2100 || !hi.is_finite() {
            return Err(SolveError::NoBracket);
        }
    }

    let top = coeffs.iter().rposition(|&a| a > 0.0).unwrap() + 1;
    let mut x = (target / total).powf(1.0 / top as f64).clamp(lo, hi);
    if x <= 0.0 {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..cfg.max_newton {
        let f = poly(x) - target;
        if f.abs() <= tol * target {
            return Ok(x);
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - f / slope(x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= tol * next {
            return Ok(next);
        }
        x = next;
    }
    // Newton budget exhausted: finish by bisection.
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if poly(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Relative constraint residuals `|E − c| / c`, slack excluded.
fn residual_stats(fs: &FeatureSet, expect: &[f64], targets: &[f64]) -> (f64, f64) {
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (id, (&e, &c)) in expect.iter().zip(targets).enumerate() {
        if Some(id) == fs.slack() {
            continue;
        }
        let r = (e - c).abs() / c;
        max = max.max(r);
        sum += r;
        n += 1;
    }
    (max, if n == 0 { 0.0 } else { sum / n as f64 })
}

fn iis_deltas(table: &CoefficientTable, targets: &[f64], solver: &SolverConfig, exec: Exec) -> Result<Vec<f64>> {
    exec.map_range(table.len(), |id| match solve_update(table.row(id), targets[id], solver) {
        Ok(x) => Ok(x.ln()),
        Err(SolveError::Inactive) => Err(Error::FeatureInactive { feature: id }),
        Err(e) => Err(Error::Solver { feature: id, msg: e.to_string() }),
    })
    .into_iter()
    .collect()
}

fn gis_deltas(fs: &FeatureSet, table: &CoefficientTable, targets: &[f64]) -> Result<Vec<f64>> {
    if fs.slack().is_none() {
        return Err(Error::Config("GIS needs a slack feature (constant feature sum)".into()));
    }
    let m = f64::from(M_MAX);
    table
        .expectations()
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(id, (&e, &c))| {
            if e > 0.0 {
                Ok((c / e).ln() / m)
            } else {
                Err(Error::FeatureInactive { feature: id })
            }
        })
        .collect()
}

fn apply(params: &mut Params, deltas: &[f64]) {
    for (id, &d) in deltas.iter().enumerate() {
        if d != 0.0 {
            params.add(id, d);
        }
    }
}

/// One generalized iterative scaling update: `Δλ_α = ln(c_α / E_α) / M_MAX`.
pub fn gis_step(params: &mut Params, engine: &dyn Engine, hist: &HistoryTable, targets: &TargetVector) -> Result<()> {
    let (_, coef) = engine.pass(params, hist)?;
    let deltas = gis_deltas(engine.feature_set(), &coef.table, targets.as_slice())?;
    apply(params, &deltas);
    Ok(())
}

/// One improved iterative scaling update: `Δλ_α = ln x_α` with `x_α` the
/// positive root of the feature's scaling polynomial.
pub fn iis_step(
    params: &mut Params,
    engine: &dyn Engine,
    hist: &HistoryTable,
    targets: &TargetVector,
    solver: &SolverConfig,
) -> Result<()> {
    let (_, coef) = engine.pass(params, hist)?;
    let deltas = iis_deltas(&coef.table, targets.as_slice(), solver, Exec::SEQUENTIAL)?;
    apply(params, &deltas);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    /// Number of updates applied before this evaluation.
    pub iter: usize,
    pub log_likelihood: f64,
    pub max_resid: f64,
    pub mean_resid: f64,
    pub secs: f64,
    pub ops: u64,
}

impl fmt::Display for IterationStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} ll={} max_resid={} mean_resid={} secs={}",
            self.iter, self.log_likelihood, self.max_resid, self.mean_resid, self.secs
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: Vec<IterationStats>,
}

impl Diagnostics {
    pub fn last(&self) -> Option<&IterationStats> {
        self.iterations.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub params: Params,
    pub diagnostics: Diagnostics,
    pub converged: bool,
    /// Number of parameter updates performed.
    pub steps: usize,
    /// Model expectations at the returned parameters.
    pub expectations: Vec<f64>,
}

pub fn train(config: &TrainConfig, fs: &FeatureSet, targets: &TargetVector, hist: &HistoryTable) -> Result<TrainResult> {
    train_with(config, fs, targets, hist, |_| {})
}

/// Iterates from the uniform model until the largest relative residual is
/// below `config.tol` or `config.max_iters` updates have been made, calling
/// `on_iter` after every evaluation.
pub fn train_with(
    config: &TrainConfig,
    fs: &FeatureSet,
    targets: &TargetVector,
    hist: &HistoryTable,
    mut on_iter: impl FnMut(&IterationStats),
) -> Result<TrainResult> {
    config.validate()?;
    if targets.len() != fs.len() {
        return Err(Error::Config(format!("{} targets for {} features", targets.len(), fs.len())));
    }
    if config.algorithm == Algorithm::Gis && fs.slack().is_none() {
        return Err(Error::Config("GIS needs a slack feature (constant feature sum)".into()));
    }
    let engine = make_engine(config.engine, fs, config.exec);
    let c = targets.as_slice();
    let mut params = Params::zeros(fs.len());
    let mut diagnostics = Diagnostics::default();
    let mut steps = 0;
    loop {
        let start = Instant::now();
        let (z, coef) = engine.pass(&params, hist)?;
        let expectations = coef.table.expectations();
        let ll = ll_from_pass(&params, c, hist, &z.z);
        let (max_resid, mean_resid) = residual_stats(fs, &expectations, c);

        if let Some(prev) = diagnostics.last() {
            if ll < prev.log_likelihood - MONOTONE_SLACK {
                return Err(Error::NonMonotone { iter: steps, prev: prev.log_likelihood, cur: ll });
            }
        }
        let converged = max_resid < config.tol;
        let done = converged || steps >= config.max_iters;
        if !done {
            let deltas = match config.algorithm {
                Algorithm::Iis => iis_deltas(&coef.table, c, &config.solver, config.exec)?,
                Algorithm::Gis => gis_deltas(fs, &coef.table, c)?,
            };
            apply(&mut params, &deltas);
        }
        let stats = IterationStats {
            iter: steps,
            log_likelihood: ll,
            max_resid,
            mean_resid,
            secs: start.elapsed().as_secs_f64(),
            ops: z.ops + coef.ops,
        };
        on_iter(&stats);
        diagnostics.iterations.push(stats);
        if done {
            return Ok(TrainResult { params, diagnostics, converged, steps, expectations });
        }
        steps += 1;
    }
}

/// `Σ_α λ_α c_α − Σ_h p̃(h) ln Z(h)`: the training log-likelihood per event,
/// using that `Σ_{h,w} p̃(h,w) Σ_α λ_α f_α(h,w) = Σ_α λ_α c_α`.
fn ll_from_pass(params: &Params, targets: &[f64], hist: &HistoryTable, z: &[f64]) -> f64 {
    let linear: f64 = params.lambda().iter().zip(targets).map(|(l, c)| l * c).sum();
    let log_norm: f64 = hist.weights().iter().zip(z).map(|(p, z)| p * z.ln()).sum();
    linear - log_norm
}

/// Mean per-event log-likelihood `(1/N) Σ count(i,t,j) · ln p(j | i, t)`,
/// evaluated event by event with explicit normalization. Events are grouped
/// by their log-probability, so a model that gives every event the same
/// probability returns exactly that log-probability.
pub fn log_likelihood(params: &Params, fs: &FeatureSet, counts: &EmpiricalCounts) -> Result<f64> {
    let engine = DirectEngine::new(fs, Exec::SEQUENTIAL);
    let lambda = params.lambda();
    let mut groups: BTreeMap<u64, u64> = BTreeMap::new();
    let mut current: Option<(Context, f64)> = None;
    for &(ev, count) in counts.events() {
        let h = Context::new(ev.prev, ev.topic);
        let log_z = match current {
            Some((ctx, lz)) if ctx == h => lz,
            _ => {
                let lz = engine.z(params, h)?.ln();
                current = Some((h, lz));
                lz
            }
        };
        let mut score = 0.0;
        let mut m = 0;
        for id in fs.active(h, ev.word) {
            score += lambda[id];
            m += 1;
        }
        if let Some(s) = fs.slack() {
            score += lambda[s] * f64::from(M_MAX - m);
        }
        *groups.entry((score - log_z).to_bits()).or_default() += count;
    }
    let n = counts.total() as f64;
    let mut total = Neumaier::default();
    for (bits, count) in groups {
        total.add(count as f64 / n * f64::from_bits(bits));
    }
    Ok(total.value())
}
