//! Timed engine passes and the checked direct-vs-cluster comparison.

use std::fmt;
use std::time::Instant;

use crate::engine::{make_engine, max_rel_diff, max_rel_diff_tables, CoefficientTable, EngineKind};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::history::HistoryTable;
use crate::model::{FeatureSet, Params};

/// Relative tolerance for declaring the two engines equivalent.
pub const EQUIV_TOL: f64 = 1e-10;
/// Magnitudes below this compare as equal.
pub const EQUIV_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Z,
    Coef,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Z => "z",
            Phase::Coef => "coef",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTiming {
    pub engine: EngineKind,
    pub phase: Phase,
    pub seconds: f64,
    pub ops: u64,
}

impl fmt::Display for PhaseTiming {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "engine={} phase={} seconds={} ops={}",
            self.engine.short(),
            self.phase,
            self.seconds,
            self.ops
        )
    }
}

/// Outputs and timings of one full Z + coefficients pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PassReport {
    pub z: Vec<f64>,
    pub table: CoefficientTable,
    pub z_timing: PhaseTiming,
    pub coef_timing: PhaseTiming,
}

impl PassReport {
    pub fn seconds(&self) -> f64 {
        self.z_timing.seconds + self.coef_timing.seconds
    }

    pub fn lines(&self) -> [String; 2] {
        [self.z_timing.to_string(), self.coef_timing.to_string()]
    }
}

/// Runs one pass with `engine`; with `repeats > 1` keeps the fastest time
/// of each phase.
pub fn bench_pass(
    params: &Params,
    fs: &FeatureSet,
    hist: &HistoryTable,
    engine: EngineKind,
    exec: Exec,
    repeats: usize,
) -> Result<PassReport> {
    let eng = make_engine(engine, fs, exec);
    let mut best: Option<PassReport> = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let z = eng.partition_functions(params, hist)?;
        let z_secs = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let coef = eng.coefficients(params, hist, &z)?;
        let coef_secs = start.elapsed().as_secs_f64();
        match &mut best {
            Some(b) => {
                b.z_timing.seconds = b.z_timing.seconds.min(z_secs);
                b.coef_timing.seconds = b.coef_timing.seconds.min(coef_secs);
            }
            None => {
                best = Some(PassReport {
                    z_timing: PhaseTiming { engine, phase: Phase::Z, seconds: z_secs, ops: z.ops },
                    coef_timing: PhaseTiming { engine, phase: Phase::Coef, seconds: coef_secs, ops: coef.ops },
                    z: z.z,
                    table: coef.table,
                });
            }
        }
    }
    Ok(best.expect("at least one repeat"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub direct: PassReport,
    pub cluster: PassReport,
    pub z_rel: f64,
    pub coef_rel: f64,
}

impl Comparison {
    /// Direct pass time over cluster pass time.
    pub fn speedup(&self) -> f64 {
        self.direct.seconds() / self.cluster.seconds()
    }
}

/// Checks the cluster pass against the direct pass and only then hands back
/// timings. Disagreement beyond [`EQUIV_TOL`] is an error.
pub fn compare_engines(
    params: &Params,
    fs: &FeatureSet,
    hist: &HistoryTable,
    direct_exec: Exec,
    cluster_exec: Exec,
    repeats: usize,
) -> Result<Comparison> {
    let direct = bench_pass(params, fs, hist, EngineKind::Direct, direct_exec, repeats)?;
    let cluster = bench_pass(params, fs, hist, EngineKind::Cluster, cluster_exec, repeats)?;
    let z_rel = max_rel_diff(&direct.z, &cluster.z, EQUIV_FLOOR);
    if !(z_rel <= EQUIV_TOL) {
        return Err(Error::Mismatch { what: "partition functions", max_rel: z_rel });
    }
    let coef_rel = max_rel_diff_tables(&direct.table, &cluster.table, EQUIV_FLOOR);
    if !(coef_rel <= EQUIV_TOL) {
        return Err(Error::Mismatch { what: "coefficient tables", max_rel: coef_rel });
    }
    Ok(Comparison { direct, cluster, z_rel, coef_rel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_instance, InstanceShape};

    #[test]
    fn tiny_instance_reports_both_engines() {
        let inst = generate_instance(&InstanceShape::small(), 11).unwrap();
        let cmp = compare_engines(&inst.params, &inst.features, &inst.hist, Exec::SEQUENTIAL, Exec::SEQUENTIAL, 1)
            .unwrap();
        assert!(cmp.z_rel <= EQUIV_TOL && cmp.coef_rel <= EQUIV_TOL);
        assert!(cmp.speedup() > 0.0);
        let line = cmp.cluster.lines()[0].clone();
        assert!(line.starts_with("engine=c phase=z seconds="), "{line}");
        // The cluster engine never loops over histories times the vocabulary.
        let hv = (inst.hist.len() * inst.features.vocab_size()) as u64;
        assert_eq!(cmp.direct.z_timing.ops, hv);
        assert!(cmp.cluster.z_timing.ops < hv);
    }
}
