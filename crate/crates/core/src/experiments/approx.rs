use serde::{Deserialize, Serialize};

use super::{
    at_most, blowup_note, ci_of, ensemble, ladder_verdict, noise_fingerprint, num, paired_drop, point_node, ExperimentResult,
    Setup, Table, Verdict,
};
use crate::correlation::Mollifier;
use crate::error::{Error, Result};
use crate::noise::NoiseFilter;
use crate::solver::{dirac_t_min, Member, Simulation};
use crate::stats::Ci;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxInitialParams {
    /// Strictly decreasing truncation/mollification scales.
    pub eps_ladder: Vec<f64>,
    pub t: f64,
    pub x: f64,
    /// Final difference must sit below this multiple of the noise floor.
    pub floor_factor: f64,
}

impl Default for ApproxInitialParams {
    fn default() -> Self {
        Self { eps_ladder: vec![1.0, 0.3, 0.1, 0.03], t: 1.0, x: 0.0, floor_factor: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxNoiseParams {
    /// Strictly decreasing mollifier widths.
    pub eps_ladder: Vec<f64>,
    pub t: f64,
    pub floor_factor: f64,
}

fn check_ladder(eps: &[f64], errs: &mut Vec<String>) {
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| !(w[1] < w[0])) {
        errs.push("experiment.eps_ladder must be positive and strictly decreasing".into());
    }
}

fn sqrt_ci(c: Ci) -> Ci {
    c.map_increasing(|v| v.max(0.0).sqrt())
}

/// Shared tail of both experiments: distance table, ladder and floor verdicts.
fn ladder_verdicts(
    res: &mut ExperimentResult,
    prefix: &str,
    eps: &[f64],
    dist: &[Ci],
    drops: &[Ci],
    floor: f64,
    factor: f64,
    blowups: usize,
    replicas: u64,
) {
    let values: Vec<String> = dist.iter().map(|c| format!("{:.4e}", c.value)).collect();
    if dist.len() > 1 {
        res.verdict(
            &format!("{prefix}.ladder_decreasing"),
            ladder_verdict(drops),
            format!("L² differences {} along ε = {:?}", values.join(" > "), eps),
        );
    }
    let last = dist.last().unwrap();
    let mut v = at_most(last, factor * floor);
    let mut detail = format!(
        "final difference {:.4e} (95% CI [{:.4e}, {:.4e}]) vs limit {:.4e} = {factor} x noise floor {:.4e}",
        last.value,
        last.lo,
        last.hi,
        factor * floor,
        floor
    );
    if let Some(n) = blowup_note(blowups, replicas) {
        v = v.combine(Verdict::Inconclusive);
        detail.push_str(&format!("; {n}"));
    }
    res.verdict(&format!("{prefix}.final_at_floor"), v, detail);
}

/// `‖u(t,x) - u_ε(t,x)‖₂` where `u_ε` starts from the truncated, mollified data.
pub fn approx_initialdata_experiment(setup: &Setup, params: &ApproxInitialParams) -> Result<ExperimentResult> {
    let mut errs = Vec::new();
    check_ladder(&params.eps_ladder, &mut errs);
    if !(params.floor_factor > 0.0) {
        errs.push("experiment.floor_factor must be > 0".into());
    }
    if setup.initial.has_atoms() && params.t < dirac_t_min(setup.sim.dt) {
        errs.push(format!("experiment.t: atomic data needs t >= {}", dirac_t_min(setup.sim.dt)));
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let sim = Simulation::new(setup.sim.clone())?;
    let grid = *sim.grid();
    let step = sim.step_of(params.t)?;
    let node = point_node(&grid, params.x, "experiment.x")?;
    let mut starts = vec![setup.initial.grid_project(&grid)?.values];
    for &e in &params.eps_ladder {
        starts.push(setup.initial.truncate_mollify(e)?.grid_project(&grid)?.values);
    }
    let filter = sim.default_filter();
    let out = ensemble(setup.replicas, |r| {
        let mut members: Vec<Member> = starts.iter().map(|u| Member::filtered(u.clone(), filter.clone())).collect();
        sim.run_members(r, &mut members, Some(step), |_, _| true)?;
        let u = members[0].values[node];
        let mut rec = vec![u * u];
        rec.extend(members[1..].iter().map(|m| (u - m.values[node]).powi(2)));
        Ok(rec)
    })?;
    let blowups = out.iter().filter(|o| o.is_none()).count();
    let ok: Vec<Vec<f64>> = out.into_iter().flatten().collect();
    let col = |i: usize| ok.iter().map(|r| r[i]).collect::<Vec<f64>>();

    let mut res = ExperimentResult::new("converge-initial", setup);
    res.noise_hash = noise_fingerprint(&sim, setup.replicas);
    let floor = sqrt_ci(ci_of(&col(0), setup.batches)).se;
    let mut table = Table::new("convergence", &["eps", "t", "x", "l2_diff", "ci_lo", "ci_hi", "se", "noise_floor"]);
    let mut dist = Vec::new();
    for (k, &e) in params.eps_ladder.iter().enumerate() {
        let c = sqrt_ci(ci_of(&col(k + 1), setup.batches));
        table.push(vec![num(e), num(params.t), num(params.x), num(c.value), num(c.lo), num(c.hi), num(c.se), num(floor)]);
        dist.push(c);
    }
    let drops: Vec<Ci> = (1..params.eps_ladder.len()).map(|k| paired_drop(&col(k), &col(k + 1), setup.batches)).collect();
    res.tables.push(table);
    ladder_verdicts(&mut res, "approx_initial", &params.eps_ladder, &dist, &drops, floor, params.floor_factor, blowups, setup.replicas);
    Ok(res)
}

/// `sup_x ‖u(t,x) - u_ε(t,x)‖₂` where `u_ε` is driven by the triangle-mollified noise.
pub fn approx_noise_experiment(setup: &Setup, params: &ApproxNoiseParams) -> Result<ExperimentResult> {
    let mut errs = Vec::new();
    check_ladder(&params.eps_ladder, &mut errs);
    if setup.initial.has_atoms() {
        errs.push("initial: the noise approximation needs a bounded density (no atoms)".into());
    }
    if !(params.floor_factor > 0.0) {
        errs.push("experiment.floor_factor must be > 0".into());
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let sim = Simulation::new(setup.sim.clone())?;
    let grid = *sim.grid();
    let step = sim.step_of(params.t)?;
    let u0 = setup.initial.grid_project(&grid)?.values;
    let filters: Vec<NoiseFilter> =
        params.eps_ladder.iter().map(|&e| Mollifier::triangle(e).map(NoiseFilter::Mollify)).collect::<Result<_>>()?;
    let cells = grid.cells();
    let out = ensemble(setup.replicas, |r| {
        let mut members = vec![Member::filtered(u0.clone(), sim.default_filter())];
        members.extend(filters.iter().map(|f| Member::filtered(u0.clone(), f.clone())));
        sim.run_members(r, &mut members, Some(step), |_, _| true)?;
        let base = &members[0].values;
        // [u², (u-u_ε)² per ε] node by node
        let mut rec = base.iter().map(|v| v * v).collect::<Vec<f64>>();
        for m in &members[1..] {
            rec.extend(base.iter().zip(&m.values).map(|(a, b)| (a - b).powi(2)));
        }
        Ok(rec)
    })?;
    let blowups = out.iter().filter(|o| o.is_none()).count();
    let ok: Vec<Vec<f64>> = out.into_iter().flatten().collect();
    let n = ok.len().max(1) as f64;
    let col = |i: usize| ok.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let argmax = |block: usize| {
        (0..cells)
            .map(|j| (j, ok.iter().map(|r| r[block * cells + j]).sum::<f64>() / n))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j)
            .unwrap_or(0)
    };

    let mut res = ExperimentResult::new("converge-noise", setup);
    res.noise_hash = noise_fingerprint(&sim, setup.replicas);
    let mut table = Table::new("convergence", &["eps", "t", "argmax_x", "max_l2_diff", "ci_lo", "ci_hi", "se", "noise_floor"]);
    let mut dist = Vec::new();
    let mut picks = Vec::new();
    let mut floor: f64 = 0.0;
    for (k, &e) in params.eps_ladder.iter().enumerate() {
        let j = argmax(k + 1);
        let c = sqrt_ci(ci_of(&col((k + 1) * cells + j), setup.batches));
        let f = sqrt_ci(ci_of(&col(j), setup.batches)).se;
        floor = f;
        let x = grid.position(j)[0];
        table.push(vec![num(e), num(params.t), num(x), num(c.value), num(c.lo), num(c.hi), num(c.se), num(f)]);
        dist.push(c);
        picks.push((k + 1) * cells + j);
    }
    // both levels at the finer level's maximizing node: a lower bound on the drop of the maxima
    let drops: Vec<Ci> = picks
        .windows(2)
        .map(|w| paired_drop(&col(w[1] - cells), &col(w[1]), setup.batches))
        .collect();
    res.tables.push(table);
    ladder_verdicts(&mut res, "approx_noise", &params.eps_ladder, &dist, &drops, floor, params.floor_factor, blowups, setup.replicas);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::test_setup;
    use crate::initial::InitialMeasure;

    #[test]
    fn zero_noise_paths_coincide() {
        let s = test_setup(0.0, InitialMeasure::lebesgue(1, 1.0), 0.2, 31);
        let p = ApproxNoiseParams { eps_ladder: vec![0.16, 0.08], t: 0.2, floor_factor: 3.0 };
        let r = approx_noise_experiment(&s, &p).unwrap();
        for row in &r.table("convergence").unwrap().rows {
            assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_noise_initial_ladder_is_deterministic() {
        let s = test_setup(0.0, InitialMeasure::dirac(1, &[0.0], 1.0), 0.5, 31);
        let r = approx_initialdata_experiment(&s, &ApproxInitialParams { t: 0.5, ..Default::default() }).unwrap();
        let rows = &r.table("convergence").unwrap().rows;
        let d: Vec<f64> = rows.iter().map(|row| row[3].parse().unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
        // J_0 of δ and of its ε-smoothing differ by G(t) - G(t+ε) at the origin
        let g = |t: f64| (2.0 * std::f64::consts::PI * t).sqrt().recip();
        assert!((d[0] - (g(0.5) - g(1.5))).abs() < 0.02 * d[0], "{} vs {}", d[0], g(0.5) - g(1.5));
    }

    #[test]
    fn noise_ladder_needs_bounded_data() {
        let s = test_setup(1.0, InitialMeasure::dirac(1, &[0.0], 1.0), 0.2, 2);
        let p = ApproxNoiseParams { eps_ladder: vec![0.1], t: 0.2, floor_factor: 3.0 };
        assert!(matches!(approx_noise_experiment(&s, &p), Err(Error::Validation(_))));
    }
}
