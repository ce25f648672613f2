use serde::{Deserialize, Serialize};

use super::{at_most, blowup_note, ci_of, ensemble, ladder_verdict, noise_fingerprint, num, unpaired_drops, ExperimentResult, Setup, Table, Verdict};
use crate::error::{Error, Result};
use crate::grid::LatticeGrid;
use crate::initial::InitialMeasure;
use crate::solver::{dirac_t_min, Member, Simulation};
use crate::stats::Ci;

/// Space-time window `[t0, t1] × [x0, x1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t: [f64; 2],
    pub x: [f64; 2],
}

impl Window {
    pub(crate) fn nodes(&self, grid: &LatticeGrid) -> Vec<usize> {
        (0..grid.cells())
            .filter(|&i| {
                let p = grid.position(i);
                p[..grid.dim()].iter().all(|c| *c >= self.x[0] - 1e-12 && *c <= self.x[1] + 1e-12)
            })
            .collect()
    }

    pub(crate) fn steps(&self, dt: f64) -> std::ops::RangeInclusive<usize> {
        let a = (self.t[0] / dt - 1e-9).ceil() as usize;
        let b = (self.t[1] / dt + 1e-9).floor() as usize;
        a.max(1)..=b
    }

    pub(crate) fn validate(&self, what: &str, t_end: f64, errs: &mut Vec<String>) {
        if !(self.t[0] > 0.0 && self.t[0] <= self.t[1] && self.t[1] <= t_end) {
            errs.push(format!("{what}.t must satisfy 0 < t0 <= t1 <= T"));
        }
        if !(self.x[0] <= self.x[1]) {
            errs.push(format!("{what}.x must satisfy x0 <= x1"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonParams {
    /// The dominating measure `μ₂`; `setup.initial` is `μ₁`.
    pub upper: InitialMeasure,
    /// Strictly decreasing step sizes.
    pub dt_ladder: Vec<f64>,
    pub tol_num: f64,
    /// Times at which node-replica pairs are checked; empty means `T`.
    pub eval_times: Vec<f64>,
    /// Largest acceptable violation fraction at the finest step.
    pub final_limit: f64,
    /// Window for the strict-positivity check on `u₂ - u₁`.
    pub strict_window: Option<Window>,
}

struct ReplicaOutcome {
    violation_fraction: f64,
    violating: usize,
    strict_min_gap: Option<f64>,
}

/// Coupled runs from `μ₁ ≤ μ₂` under identical noise, across a step-size ladder.
pub fn comparison_experiment(setup: &Setup, params: &ComparisonParams) -> Result<ExperimentResult> {
    let lower = &setup.initial;
    let upper = &params.upper;
    let mut errs = Vec::new();
    if !lower.dominated_by(upper) {
        errs.push("initial: the measures are not ordered (need μ₁ ≤ μ₂ atomwise and densitywise)".to_string());
    }
    if params.dt_ladder.is_empty() || params.dt_ladder.windows(2).any(|w| !(w[1] < w[0])) {
        errs.push("experiment.dt_ladder must be non-empty and strictly decreasing".into());
    }
    let t_end = setup.sim.t_end;
    let eval_times = if params.eval_times.is_empty() { vec![t_end] } else { params.eval_times.clone() };
    if lower.has_atoms() || upper.has_atoms() {
        let coarsest = params.dt_ladder.first().copied().unwrap_or(setup.sim.dt);
        if eval_times.iter().any(|t| *t < dirac_t_min(coarsest)) {
            errs.push(format!("experiment.eval_times: atomic data needs t >= {}", dirac_t_min(coarsest)));
        }
    }
    if let Some(w) = &params.strict_window {
        w.validate("experiment.strict_window", t_end, &mut errs);
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }

    let mut res = ExperimentResult::new("compare", setup);
    let mut table = Table::new("violations", &["dt", "violation_fraction", "ci_lo", "ci_hi", "se", "pairs", "violating_pairs", "blowups"]);
    let mut strict_table =
        Table::new("strict", &["dt", "positive_fraction", "replicas", "gap_min", "gap_q01", "gap_q50"]);
    let mut fractions: Vec<Ci> = Vec::new();
    let mut strict_last: Option<(usize, usize)> = None;
    let mut notes = Vec::new();
    for (level, &dt) in params.dt_ladder.iter().enumerate() {
        let mut sp = setup.sim.clone();
        sp.dt = dt;
        let sim = Simulation::new(sp)?;
        let grid = *sim.grid();
        let eval_steps: Vec<usize> = eval_times.iter().map(|&t| sim.step_of(t)).collect::<Result<_>>()?;
        let window_nodes = params.strict_window.map(|w| w.nodes(&grid));
        let window_steps = params.strict_window.map(|w| w.steps(dt));
        let last = eval_steps.iter().copied().chain(window_steps.clone().map(|r| *r.end())).max().unwrap();
        let u1 = lower.grid_project(&grid)?.values;
        let u2 = upper.grid_project(&grid)?.values;
        if level == params.dt_ladder.len() - 1 {
            res.noise_hash = noise_fingerprint(&sim, setup.replicas);
        }
        let pairs_per_replica = grid.cells() * eval_steps.len();
        let out = ensemble(setup.replicas, |r| {
            let mut members = [Member::new(u1.clone()), Member::new(u2.clone())];
            let mut violating = 0usize;
            let mut gap = f64::INFINITY;
            sim.run_members(r, &mut members, Some(last), |k, m| {
                if eval_steps.contains(&k) {
                    violating +=
                        m[0].values.iter().zip(&m[1].values).filter(|(a, b)| **b < **a - params.tol_num).count();
                }
                if let (Some(nodes), Some(steps)) = (&window_nodes, &window_steps) {
                    if steps.contains(&k) {
                        for &i in nodes {
                            gap = gap.min(m[1].values[i] - m[0].values[i]);
                        }
                    }
                }
                true
            })?;
            Ok(ReplicaOutcome {
                violation_fraction: violating as f64 / pairs_per_replica as f64,
                violating,
                strict_min_gap: window_nodes.as_ref().map(|_| gap),
            })
        })?;
        let blowups = out.iter().filter(|o| o.is_none()).count();
        if let Some(n) = blowup_note(blowups, setup.replicas) {
            notes.push(format!("dt={dt}: {n}"));
        }
        let ok: Vec<ReplicaOutcome> = out.into_iter().flatten().collect();
        let fr: Vec<f64> = ok.iter().map(|o| o.violation_fraction).collect();
        let ci = ci_of(&fr, setup.batches);
        let violating: usize = ok.iter().map(|o| o.violating).sum();
        table.push(vec![
            num(dt),
            num(ci.value),
            num(ci.lo.max(0.0)),
            num(ci.hi),
            num(ci.se),
            (pairs_per_replica * ok.len()).to_string(),
            violating.to_string(),
            blowups.to_string(),
        ]);
        fractions.push(ci);
        if params.strict_window.is_some() {
            let mut gaps: Vec<f64> = ok.iter().filter_map(|o| o.strict_min_gap).collect();
            gaps.sort_by(|a, b| a.total_cmp(b));
            let positive = gaps.iter().filter(|g| **g > 0.0).count();
            let q = |f: f64| gaps[((gaps.len() as f64 - 1.0) * f).round() as usize];
            strict_table.push(vec![
                num(dt),
                num(positive as f64 / gaps.len() as f64),
                gaps.len().to_string(),
                num(q(0.0)),
                num(q(0.01)),
                num(q(0.5)),
            ]);
            strict_last = Some((positive, gaps.len()));
        }
    }
    let finest = *fractions.last().unwrap();
    let values: Vec<String> = fractions.iter().map(|c| format!("{:.3e}", c.value)).collect();
    if fractions.len() > 1 {
        res.verdict(
            "comparison.ladder_decreasing",
            ladder_verdict(&unpaired_drops(&fractions)),
            format!("violation fractions {}", values.join(" > ")),
        );
    }
    let mut fin = at_most(&finest, params.final_limit);
    if !notes.is_empty() {
        fin = fin.combine(Verdict::Inconclusive);
    }
    res.verdict(
        "comparison.final_fraction",
        fin,
        format!(
            "finest violation fraction {:.3e} (95% CI [{:.3e}, {:.3e}]) vs limit {:e}{}",
            finest.value,
            finest.lo.max(0.0),
            finest.hi,
            params.final_limit,
            if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
        ),
    );
    if let Some((positive, n)) = strict_last {
        let v = if positive as f64 >= 0.99 * n as f64 { Verdict::Pass } else { Verdict::Fail };
        res.verdict(
            "comparison.strict_positive",
            v,
            format!("min over window of u₂ - u₁ positive in {positive} of {n} replicas"),
        );
    }
    res.tables.push(table);
    if params.strict_window.is_some() {
        res.tables.push(strict_table);
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::test_setup;
    use crate::initial::InitialMeasure;

    fn params(upper: InitialMeasure) -> ComparisonParams {
        ComparisonParams {
            upper,
            dt_ladder: vec![4e-3, 2e-3],
            tol_num: 0.0,
            eval_times: vec![],
            final_limit: 1e-3,
            strict_window: Some(Window { t: [0.2, 0.4], x: [-0.5, 0.5] }),
        }
    }

    #[test]
    fn unordered_measures_are_rejected() {
        let s = test_setup(1.0, InitialMeasure::lebesgue(1, 2.0), 0.4, 4);
        let r = comparison_experiment(&s, &params(InitialMeasure::lebesgue(1, 1.0)));
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn mild_noise_never_violates() {
        let lower = InitialMeasure::dirac(1, &[0.0], 1.0);
        let upper = lower.plus(&InitialMeasure::lebesgue(1, 1.0)).unwrap();
        let s = test_setup(0.5, lower, 0.4, 40);
        let r = comparison_experiment(&s, &params(upper)).unwrap();
        assert_eq!(r.verdict_of("comparison.final_fraction").unwrap().verdict, Verdict::Pass);
        assert_eq!(r.verdict_of("comparison.strict_positive").unwrap().verdict, Verdict::Pass);
        // zero violations at every level cannot show a strict decrease
        assert_eq!(r.verdict_of("comparison.ladder_decreasing").unwrap().verdict, Verdict::Inconclusive);
        assert!(!r.noise_hash.is_empty());
    }
}
