use serde::{Deserialize, Serialize};

use super::{blowup_note, ensemble, noise_fingerprint, num, ExperimentResult, Setup, Table, Verdict, Window};
use crate::error::{Error, Result};
use crate::solver::{dirac_t_min, Member, Simulation};
use crate::stats::{linear_fit, wilson};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallballParams {
    pub window: Window,
    /// Thresholds, strictly decreasing.
    pub eps_list: Vec<f64>,
    pub min_positive_fraction: f64,
    pub min_r2: f64,
}

impl Default for SmallballParams {
    fn default() -> Self {
        Self {
            window: Window { t: [0.5, 1.0], x: [-1.0, 1.0] },
            eps_list: vec![1e-1, 1e-2, 1e-3, 1e-4],
            min_positive_fraction: 0.99,
            min_r2: 0.9,
        }
    }
}

/// `|log ε|^α (log|log ε|)^{1+α}`.
pub(crate) fn smallball_abscissa(eps: f64, alpha: f64) -> f64 {
    let l = eps.ln().abs();
    l.powf(alpha) * l.ln().powf(1.0 + alpha)
}

/// Empirical `P(inf_K u < ε)` and its decay in `|log ε|`.
pub fn smallball_experiment(setup: &Setup, params: &SmallballParams) -> Result<ExperimentResult> {
    let mu = &setup.initial;
    let mut errs = Vec::new();
    if setup.sim.rho.at_zero() != 0.0 {
        errs.push("rho: the small-ball experiment needs ρ(0) = 0".to_string());
    }
    if !mu.is_nonnegative() {
        errs.push("initial: the small-ball experiment needs μ >= 0".into());
    }
    if mu.atoms.iter().all(|a| a.mass == 0.0) && mu.density.is_none() {
        errs.push("initial: μ must not vanish".into());
    }
    if params.eps_list.is_empty() || params.eps_list.windows(2).any(|w| !(w[1] < w[0])) || params.eps_list.iter().any(|e| !(*e > 0.0)) {
        errs.push("experiment.eps_list must be positive and strictly decreasing".into());
    }
    params.window.validate("experiment.window", setup.sim.t_end, &mut errs);
    if mu.has_atoms() && params.window.t[0] < dirac_t_min(setup.sim.dt) {
        errs.push(format!("experiment.window.t: atomic data needs t >= {}", dirac_t_min(setup.sim.dt)));
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let sim = Simulation::new(setup.sim.clone())?;
    let grid = *sim.grid();
    let nodes = params.window.nodes(&grid);
    let steps = params.window.steps(setup.sim.dt);
    if nodes.is_empty() || steps.is_empty() {
        return Err(Error::Validation(vec!["experiment.window contains no lattice points".into()]));
    }
    let u0 = mu.grid_project(&grid)?.values;
    let out = ensemble(setup.replicas, |r| {
        let mut inf = f64::INFINITY;
        let mut members = [Member::new(u0.clone())];
        sim.run_members(r, &mut members, Some(*steps.end()), |k, m| {
            if steps.contains(&k) {
                for &i in &nodes {
                    inf = inf.min(m[0].values[i]);
                }
            }
            true
        })?;
        Ok(inf)
    })?;
    let blowups = out.iter().filter(|o| o.is_none()).count();
    let mut infs: Vec<f64> = out.into_iter().flatten().collect();
    infs.sort_by(|a, b| a.total_cmp(b));
    let n = infs.len();
    let alpha = setup.sim.model.dalang_alpha();

    let mut res = ExperimentResult::new("smallball", setup);
    res.noise_hash = noise_fingerprint(&sim, setup.replicas);
    let positive = infs.iter().filter(|v| **v > 0.0).count();
    let pos_ci = wilson(positive, n);
    let q = |f: f64| infs[((n as f64 - 1.0) * f).round() as usize];
    let mut pos_table = Table::new("positivity", &["replicas", "positive", "fraction", "ci_lo", "ci_hi", "inf_q01", "inf_q50"]);
    pos_table.push(vec![n.to_string(), positive.to_string(), num(pos_ci.value), num(pos_ci.lo), num(pos_ci.hi), num(q(0.01)), num(q(0.5))]);

    let mut table = Table::new(
        "smallball",
        &["eps", "count_below", "replicas", "probability", "ci_lo", "ci_hi", "abscissa", "neg_log_p"],
    );
    let counts: Vec<usize> = params.eps_list.iter().map(|&e| infs.partition_point(|v| *v < e)).collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&e, &c) in params.eps_list.iter().zip(&counts) {
        let ci = wilson(c, n);
        let x = smallball_abscissa(e, alpha);
        let y = if c > 0 { -(c as f64 / n as f64).ln() } else { f64::INFINITY };
        if c > 0 && x.is_finite() && e < (-1.0f64).exp() {
            xs.push(x);
            ys.push(y);
        }
        table.push(vec![num(e), c.to_string(), n.to_string(), num(ci.value), num(ci.lo), num(ci.hi), num(x), num(y)]);
    }

    let frac_ok = positive as f64 >= params.min_positive_fraction * n as f64;
    let mut detail = format!("inf over window positive in {positive} of {n} replicas");
    if let Some(b) = blowup_note(blowups, setup.replicas) {
        detail.push_str(&format!("; {b}"));
    }
    res.verdict(
        "smallball.positive",
        if blowups > 0 { Verdict::Inconclusive } else if frac_ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    );

    // nested events: the drop between thresholds is the count in [ε_{k+1}, ε_k)
    let tail = if counts.windows(2).any(|w| w[0] == 0 && w[1] == 0) {
        (Verdict::Inconclusive, "all-zero tail counts; only upper CI bounds are available".to_string())
    } else {
        let drops_ok = counts.windows(2).all(|w| wilson(w[0] - w[1], n).lo > 0.0);
        (
            if drops_ok { Verdict::Pass } else { Verdict::Fail },
            format!("counts below ε: {:?}", counts),
        )
    };
    res.verdict("smallball.tail_decreasing", tail.0, tail.1);

    if xs.len() >= 3 {
        let fit = linear_fit(&xs, &ys)?;
        let v = if fit.slope > 0.0 && fit.r2 >= params.min_r2 { Verdict::Pass } else { Verdict::Fail };
        res.verdict(
            "smallball.fit",
            v,
            format!("slope {:.4} ± {:.4}, R² {:.4} over {} thresholds (shape only)", fit.slope, fit.slope_se, fit.r2, fit.n),
        );
        let mut ft = Table::new("smallball_fit", &["alpha", "slope", "slope_se", "intercept", "r2", "points"]);
        ft.push(vec![num(alpha), num(fit.slope), num(fit.slope_se), num(fit.intercept), num(fit.r2), fit.n.to_string()]);
        res.tables.push(ft);
    } else {
        res.verdict("smallball.fit", Verdict::Inconclusive, format!("only {} thresholds with nonzero counts", xs.len()));
    }
    res.tables.push(pos_table);
    res.tables.push(table);
    Ok(res)
}
