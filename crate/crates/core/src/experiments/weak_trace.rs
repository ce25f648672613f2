use serde::{Deserialize, Serialize};

use super::{at_most, blowup_note, ci_of, ensemble, ladder_verdict, noise_fingerprint, num, paired_drop, ExperimentResult, Setup, Table, Verdict};
use crate::error::{Error, Result};
use crate::grid::LatticeGrid;
use crate::solver::{dirac_t_min, Member, Simulation};

/// Product triangle `φ(x) = ∏ (1 - |x_i - c_i| / h)_+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: [f64; 2],
    pub half_width: f64,
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(v, c)| (1.0 - (v - c).abs() / self.half_width).max(0.0)).product()
    }

    fn sampled(&self, grid: &LatticeGrid) -> Vec<f64> {
        (0..grid.cells()).map(|i| self.eval(&grid.position(i)[..grid.dim()])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakTraceParams {
    pub phi: TestFunction,
    /// Strictly decreasing observation times.
    pub t_ladder: Vec<f64>,
    /// Final mean-square gap must be at most `tol · φ(c)²`.
    pub tol: f64,
}

impl Default for WeakTraceParams {
    fn default() -> Self {
        Self { phi: TestFunction { center: [0.0; 2], half_width: 1.0 }, t_ladder: vec![0.2, 0.1, 0.05, 0.02], tol: 0.1 }
    }
}

/// `E[(Σ u(t,x_j) φ(x_j) Δx^d - ∫φ dμ)²]` as `t → 0`.
pub fn weak_trace_experiment(setup: &Setup, params: &WeakTraceParams) -> Result<ExperimentResult> {
    let mut errs = Vec::new();
    if !(params.phi.half_width > 0.0) {
        errs.push("experiment.phi.half_width must be > 0".to_string());
    }
    if params.t_ladder.is_empty() || params.t_ladder.windows(2).any(|w| !(w[1] < w[0])) || params.t_ladder.iter().any(|t| !(*t > 0.0)) {
        errs.push("experiment.t_ladder must be positive and strictly decreasing".into());
    }
    if !(params.tol > 0.0) {
        errs.push("experiment.tol must be > 0".into());
    }
    if setup.initial.has_atoms() && params.t_ladder.iter().any(|t| *t < dirac_t_min(setup.sim.dt)) {
        errs.push(format!("experiment.t_ladder: atomic data needs t >= {}", dirac_t_min(setup.sim.dt)));
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let sim = Simulation::new(setup.sim.clone())?;
    let grid = *sim.grid();
    let phi = params.phi.sampled(&grid);
    let u0 = setup.initial.grid_project(&grid)?.values;
    let cell = grid.cell_volume();
    let pair = |u: &[f64]| u.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() * cell;
    // lattice pairing with the projected data, exact for atoms on nodes
    let target = pair(&u0);
    let steps: Vec<usize> = params.t_ladder.iter().map(|&t| sim.step_of(t)).collect::<Result<_>>()?;
    let last = steps[0];
    let out = ensemble(setup.replicas, |r| {
        let mut gaps = vec![0.0; steps.len()];
        let mut members = [Member::filtered(u0.clone(), sim.default_filter())];
        sim.run_members(r, &mut members, Some(last), |k, m| {
            if let Some(i) = steps.iter().position(|&s| s == k) {
                gaps[i] = (pair(&m[0].values) - target).powi(2);
            }
            true
        })?;
        Ok(gaps)
    })?;
    let blowups = out.iter().filter(|o| o.is_none()).count();
    let ok: Vec<Vec<f64>> = out.into_iter().flatten().collect();
    let col = |i: usize| ok.iter().map(|r| r[i]).collect::<Vec<f64>>();

    let mut res = ExperimentResult::new("weak-trace", setup);
    res.noise_hash = noise_fingerprint(&sim, setup.replicas);
    let mut table = Table::new("weak_trace", &["t", "mean_square_gap", "ci_lo", "ci_hi", "se", "target"]);
    let mut cis = Vec::new();
    for (i, &t) in params.t_ladder.iter().enumerate() {
        let c = ci_of(&col(i), setup.batches);
        table.push(vec![num(t), num(c.value), num(c.lo), num(c.hi), num(c.se), num(target)]);
        cis.push(c);
    }
    res.tables.push(table);
    if cis.len() > 1 {
        let drops: Vec<_> = (0..cis.len() - 1).map(|i| paired_drop(&col(i), &col(i + 1), setup.batches)).collect();
        let values: Vec<String> = cis.iter().map(|c| format!("{:.4e}", c.value)).collect();
        res.verdict(
            "weak_trace.ladder_decreasing",
            ladder_verdict(&drops),
            format!("mean-square gaps {} along t = {:?}", values.join(" > "), params.t_ladder),
        );
    }
    let phi_c = params.phi.eval(&params.phi.center[..grid.dim()]);
    let limit = params.tol * phi_c * phi_c;
    let fin = cis.last().unwrap();
    let mut v = at_most(fin, limit);
    let mut detail = format!("final gap {:.4e} (95% CI [{:.4e}, {:.4e}]) vs {limit:.4e}", fin.value, fin.lo, fin.hi);
    if let Some(n) = blowup_note(blowups, setup.replicas) {
        v = v.combine(Verdict::Inconclusive);
        detail.push_str(&format!("; {n}"));
    }
    res.verdict("weak_trace.final", v, detail);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::test_setup;
    use crate::initial::InitialMeasure;

    #[test]
    fn zero_noise_lebesgue_matches_exactly() {
        let s = test_setup(0.0, InitialMeasure::lebesgue(1, 1.0), 0.2, 30);
        let p = WeakTraceParams { t_ladder: vec![0.2, 0.1, 0.05, 0.02], ..Default::default() };
        let r = weak_trace_experiment(&s, &p).unwrap();
        for row in &r.table("weak_trace").unwrap().rows {
            assert!(row[1].parse::<f64>().unwrap() < 1e-20);
            assert!((row[5].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(r.verdict_of("weak_trace.final").unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn dirac_target_is_phi_at_zero() {
        let s = test_setup(1.0, InitialMeasure::dirac(1, &[0.0], 1.0), 0.2, 30);
        let r = weak_trace_experiment(&s, &WeakTraceParams::default()).unwrap();
        assert_eq!(r.table("weak_trace").unwrap().rows[0][5], "1");
    }
}
