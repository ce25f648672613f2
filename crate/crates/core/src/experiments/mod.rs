//! Monte Carlo drivers that turn qualitative statements into ladder-style
//! statistical verdicts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::LatticeGrid;
use crate::initial::InitialMeasure;
use crate::noise::hex;
use crate::solver::{SimParams, Simulation};
use crate::stats::Ci;

mod approx;
mod comparison;
mod holder;
mod moments;
mod refine;
mod simulate;
mod smallball;
mod weak_trace;

pub use approx::{approx_initialdata_experiment, approx_noise_experiment, ApproxInitialParams, ApproxNoiseParams};
pub use comparison::{comparison_experiment, ComparisonParams, Window};
pub use holder::{holder_experiment, Direction, HolderParams};
pub use moments::{moment_bounds_experiment, moments_experiment, MomentsParams};
pub use refine::{oracle_check_experiment, OracleCheckParams};
pub use simulate::{simulate_experiment, SimulateParams};
pub use smallball::{smallball_experiment, SmallballParams};
pub use weak_trace::{weak_trace_experiment, TestFunction, WeakTraceParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    /// Fail dominates inconclusive, which dominates pass.
    pub fn combine(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub criterion: String,
    pub verdict: Verdict,
    pub detail: String,
}

/// A CSV table: header and rows of already formatted cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip formatting for CSV cells.
/// Shortest round-trip form; exponent notation outside `[1e-5, 1e16)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub config_digest: String,
    pub seed: u64,
    pub replicas: u64,
    /// Fingerprint of the base noise shared by every coupled run.
    pub noise_hash: String,
    pub tables: Vec<Table>,
    pub verdicts: Vec<VerdictEntry>,
}

impl ExperimentResult {
    fn new(experiment: &str, setup: &Setup) -> Self {
        Self::bare(experiment, &setup.digest, setup.sim.seed, setup.replicas)
    }

    /// A result with no simulation behind it (e.g. the kernel checks).
    pub fn bare(experiment: &str, digest: &str, seed: u64, replicas: u64) -> Self {
        Self {
            experiment: experiment.into(),
            config_digest: digest.into(),
            seed,
            replicas,
            noise_hash: String::new(),
            tables: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn verdict(&mut self, criterion: &str, verdict: Verdict, detail: impl Into<String>) {
        self.verdicts.push(VerdictEntry { criterion: criterion.into(), verdict, detail: detail.into() });
    }

    pub fn overall(&self) -> Verdict {
        self.verdicts.iter().fold(Verdict::Pass, |acc, v| acc.combine(v.verdict))
    }

    pub fn verdict_of(&self, criterion: &str) -> Option<&VerdictEntry> {
        self.verdicts.iter().find(|v| v.criterion == criterion)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Everything an experiment needs besides its own parameters.
#[derive(Debug, Clone)]
pub struct Setup {
    pub sim: SimParams,
    pub initial: InitialMeasure,
    pub replicas: u64,
    pub batches: usize,
    /// Digest of the originating configuration (or of the parameters when built in code).
    pub digest: String,
}

impl Setup {
    pub fn new(sim: SimParams, initial: InitialMeasure, replicas: u64) -> Self {
        let digest = {
            let mut h = Sha256::new();
            h.update(serde_json::to_vec(&sim).unwrap_or_default());
            h.update(serde_json::to_vec(&initial).unwrap_or_default());
            h.update(replicas.to_le_bytes());
            hex(&h.finalize())
        };
        Self { sim, initial, replicas, batches: crate::stats::MIN_BATCHES, digest }
    }

    pub fn with_digest(mut self, digest: String) -> Self {
        self.digest = digest;
        self
    }
}

/// Hash of the model hash, seed, replica count and the first slices of the
/// first replicas: identical for every run that shares the base noise.
pub(crate) fn noise_fingerprint(sim: &Simulation, replicas: u64) -> String {
    let synth = sim.synthesizer();
    let mut h = Sha256::new();
    h.update(synth.model_hash().as_bytes());
    h.update(synth.seed().to_le_bytes());
    h.update(replicas.to_le_bytes());
    let steps = sim.steps().min(16);
    for r in 0..replicas.min(4) {
        h.update(synth.realize(r, steps).hash().as_bytes());
    }
    hex(&h.finalize())
}

/// Outcome of one replica: `None` when the blow-up guard fired.
pub(crate) fn ensemble<T: Send>(replicas: u64, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<Option<T>>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| match f(r) {
            Ok(v) => Ok(Some(v)),
            Err(Error::BlowUp { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Batch-means interval of `values`, falling back to fewer batches for tiny ensembles.
pub(crate) fn ci_of(values: &[f64], batches: usize) -> Ci {
    let b = batches.min(values.len());
    if b >= crate::stats::MIN_BATCHES {
        if let Ok(c) = crate::stats::batch_mean(values, b) {
            return c;
        }
    }
    // small ensembles: plain normal interval
    let n = values.len().max(1) as f64;
    let m = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::INFINITY
    };
    let se = sd / n.sqrt();
    Ci { value: m, se, lo: m - 1.96 * se, hi: m + 1.96 * se }
}

/// Verdict for a quantity that must not exceed `limit`.
pub(crate) fn at_most(ci: &Ci, limit: f64) -> Verdict {
    if ci.hi <= limit {
        Verdict::Pass
    } else if ci.lo > limit {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

/// Verdict for a strictly decreasing ladder from the intervals of the
/// consecutive drops `v_k - v_{k+1}`.
pub(crate) fn ladder_verdict(drops: &[Ci]) -> Verdict {
    if drops.iter().any(|d| d.hi < 0.0) {
        Verdict::Fail
    } else if drops.iter().all(|d| d.lo > 0.0) {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

/// Drop intervals for independent estimates.
pub(crate) fn unpaired_drops(values: &[Ci]) -> Vec<Ci> {
    values
        .windows(2)
        .map(|w| {
            let d = w[0].value - w[1].value;
            let se = w[0].se.hypot(w[1].se);
            Ci { value: d, se, lo: d - 1.96 * se, hi: d + 1.96 * se }
        })
        .collect()
}

/// Node nearest to the point `(x, 0)` (first axis only in two dimensions).
pub(crate) fn point_node(grid: &LatticeGrid, x: f64, what: &str) -> Result<usize> {
    let i = grid.nearest_node(x).ok_or_else(|| Error::Validation(vec![format!("{what}: {x} outside the domain")]))?;
    let j = grid.nearest_node(0.0).unwrap_or(0);
    Ok(grid.flatten([i, j]))
}

/// Intervals for paired per-replica drops `a_r - b_r`.
pub(crate) fn paired_drop(a: &[f64], b: &[f64], batches: usize) -> Ci {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    ci_of(&d, batches)
}

pub(crate) fn blowup_note(blowups: usize, replicas: u64) -> Option<String> {
    (blowups > 0).then(|| format!("{blowups} of {replicas} replicas hit the blow-up guard and were excluded"))
}

/// Small white-noise PAM setup on `[-L, L)` for unit tests.
#[cfg(test)]
pub(crate) fn test_setup(lambda: f64, initial: InitialMeasure, t_end: f64, replicas: u64) -> Setup {
    use crate::correlation::CorrelationModel;
    use crate::solver::{RhoModel, Scheme};
    let grid = LatticeGrid::new(1, 2.56, 128).unwrap();
    let sim = SimParams::new(grid, CorrelationModel::white(), RhoModel::Linear { lambda }, Scheme::ExpEuler, 2e-3, t_end, 11);
    Setup::new(sim, initial, replicas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_logic() {
        use Verdict::*;
        assert_eq!(Pass.combine(Inconclusive), Inconclusive);
        assert_eq!(Inconclusive.combine(Fail), Fail);
        let c = |v: f64, se: f64| Ci { value: v, se, lo: v - 2.0 * se, hi: v + 2.0 * se };
        assert_eq!(at_most(&c(0.5, 0.1), 1.0), Pass);
        assert_eq!(at_most(&c(1.5, 0.1), 1.0), Fail);
        assert_eq!(at_most(&c(0.95, 0.1), 1.0), Inconclusive);
        assert_eq!(ladder_verdict(&unpaired_drops(&[c(3.0, 0.1), c(2.0, 0.1), c(1.0, 0.1)])), Pass);
        assert_eq!(ladder_verdict(&unpaired_drops(&[c(3.0, 0.1), c(4.0, 0.1)])), Fail);
        assert_eq!(ladder_verdict(&unpaired_drops(&[c(3.0, 1.0), c(2.9, 1.0)])), Inconclusive);
    }

    #[test]
    fn table_csv() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![num(1.0), num(0.1)]);
        assert_eq!(t.to_csv(), "a,b\n1,0.1\n");
    }

    #[test]
    fn paired_drop_cancels_common_noise() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64).sin() * 10.0 + 1.0).collect();
        let b: Vec<f64> = a.iter().map(|v| v - 1.0).collect();
        let d = paired_drop(&a, &b, 30);
        assert!((d.value - 1.0).abs() < 1e-12 && d.se < 1e-12);
    }

    #[test]
    fn point_node_uses_first_axis() {
        let g = LatticeGrid::new(2, 1.0, 8).unwrap();
        let j = point_node(&g, 0.5, "x").unwrap();
        assert_eq!(g.position(j), [0.5, 0.0]);
        assert!(point_node(&g, 3.0, "x").is_err());
    }
}
