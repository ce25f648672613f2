use serde::{Deserialize, Serialize};

use super::{blowup_note, ci_of, ensemble, noise_fingerprint, num, ExperimentResult, Setup, Table, Verdict};
use crate::error::{Error, Result};
use crate::solver::{dirac_t_min, Member, Simulation};
use crate::stats::{linear_fit, Ci};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Space,
    Time,
}

impl Direction {
    fn as_str(&self) -> &'static str {
        match self {
            Direction::Space => "space",
            Direction::Time => "time",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderParams {
    pub direction: Direction,
    /// Observation time (the base time for temporal lags).
    pub t_obs: f64,
    /// Lags in units of `Δx` (space) or `Δt` (time).
    pub lags: Vec<usize>,
    /// Accepted exponent range, if a verdict is wanted.
    pub expected: Option<[f64; 2]>,
}

/// Variogram regression for the Hölder exponent in space or time.
pub fn holder_experiment(setup: &Setup, params: &HolderParams) -> Result<ExperimentResult> {
    let mut errs = Vec::new();
    let mut lags = params.lags.clone();
    lags.sort_unstable();
    lags.dedup();
    if lags.contains(&0) {
        errs.push("experiment.lags must be positive".to_string());
    }
    let dt = setup.sim.dt;
    let grid = setup.sim.grid;
    let horizon = match params.direction {
        Direction::Space => params.t_obs,
        Direction::Time => params.t_obs + lags.last().copied().unwrap_or(0) as f64 * dt,
    };
    if !(params.t_obs > 0.0) || horizon > setup.sim.t_end * (1.0 + 1e-12) {
        errs.push(format!("experiment.t_obs plus the largest lag must lie in (0, T = {}]", setup.sim.t_end));
    }
    if setup.initial.has_atoms() && params.t_obs < dirac_t_min(dt) {
        errs.push(format!("experiment.t_obs: atomic data needs t >= {}", dirac_t_min(dt)));
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let mut res = ExperimentResult::new("holder", setup);
    let dir = params.direction.as_str();
    // lags beyond a quarter period see the torus, not the field
    let usable: Vec<usize> = match params.direction {
        Direction::Space => lags.iter().copied().filter(|&l| l < grid.points() / 4).collect(),
        Direction::Time => lags.clone(),
    };
    if usable.len() < 3 {
        res.verdict(
            &format!("holder.{dir}_exponent"),
            Verdict::Inconclusive,
            format!("fit window collapses: {} usable lags", usable.len()),
        );
        return Ok(res);
    }
    let sim = Simulation::new(setup.sim.clone())?;
    let base = sim.step_of(params.t_obs)?;
    let last = match params.direction {
        Direction::Space => base,
        Direction::Time => base + usable.last().unwrap(),
    };
    let u0 = setup.initial.grid_project(&grid)?.values;
    let n = grid.points();
    let out = ensemble(setup.replicas, |r| {
        let mut v = vec![0.0; usable.len()];
        let mut at_base: Vec<f64> = Vec::new();
        let mut members = [Member::new(u0.clone())];
        sim.run_members(r, &mut members, Some(last), |k, m| {
            let u = &m[0].values;
            match params.direction {
                Direction::Space if k == base => {
                    for (slot, &lag) in v.iter_mut().zip(&usable) {
                        // offsets along the first axis, periodic wrap
                        let mut s = 0.0;
                        for (idx, a) in u.iter().enumerate() {
                            let (row, col) = (idx / n, idx % n);
                            let j = if grid.dim() == 1 { (idx + lag) % n } else { ((row + lag) % n) * n + col };
                            s += (u[j] - a).powi(2);
                        }
                        *slot = s / u.len() as f64;
                    }
                }
                Direction::Time => {
                    if k == base {
                        at_base = u.clone();
                    } else if k > base {
                        if let Some(i) = usable.iter().position(|&l| base + l == k) {
                            v[i] = u.iter().zip(&at_base).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / u.len() as f64;
                        }
                    }
                }
                _ => {}
            }
            true
        })?;
        Ok(v)
    })?;
    res.noise_hash = noise_fingerprint(&sim, setup.replicas);
    let blowups = out.iter().filter(|o| o.is_none()).count();
    let ok: Vec<Vec<f64>> = out.into_iter().flatten().collect();
    let unit = match params.direction {
        Direction::Space => grid.spacing(),
        Direction::Time => dt,
    };
    let hs: Vec<f64> = usable.iter().map(|&l| l as f64 * unit).collect();
    let mut vt = Table::new("variogram", &["direction", "lag_steps", "h", "variogram", "ci_lo", "ci_hi", "se"]);
    let mut means = Vec::new();
    for (i, (&lag, &h)) in usable.iter().zip(&hs).enumerate() {
        let samples: Vec<f64> = ok.iter().map(|r| r[i]).collect();
        let ci = ci_of(&samples, setup.batches);
        vt.push(vec![dir.into(), lag.to_string(), num(h), num(ci.value), num(ci.lo), num(ci.hi), num(ci.se)]);
        means.push(ci.value);
    }
    res.tables.push(vt);
    let deterministic = setup.sim.rho.lipschitz() == 0.0 && setup.sim.rho.at_zero() == 0.0;
    if means.iter().any(|m| !(*m > 0.0)) {
        res.verdict(&format!("holder.{dir}_exponent"), Verdict::Inconclusive, "variogram vanishes at some lag");
        return Ok(res);
    }
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let fit = linear_fit(&lx, &means.iter().map(|m| m.ln()).collect::<Vec<_>>())?;
    // spread of the exponent from per-batch fits
    let batches = setup.batches.min(ok.len() / 2).max(2);
    let per_batch: Vec<f64> = (0..batches)
        .filter_map(|b| {
            let (lo, hi) = (b * ok.len() / batches, (b + 1) * ok.len() / batches);
            let ly: Vec<f64> = (0..usable.len())
                .map(|i| (ok[lo..hi].iter().map(|r| r[i]).sum::<f64>() / (hi - lo) as f64).ln())
                .collect();
            linear_fit(&lx, &ly).ok().map(|f| f.slope / 2.0)
        })
        .collect();
    let exponent = fit.slope / 2.0;
    let sd = {
        let m = per_batch.iter().sum::<f64>() / per_batch.len() as f64;
        (per_batch.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (per_batch.len() - 1).max(1) as f64).sqrt()
    };
    let se = sd / (per_batch.len() as f64).sqrt();
    let ci = Ci { value: exponent, se, lo: exponent - 1.96 * se, hi: exponent + 1.96 * se };
    let alpha = setup.sim.model.dalang_alpha();
    let mut ft = Table::new("holder_fit", &["direction", "exponent", "ci_lo", "ci_hi", "se", "r2", "lags_used", "alpha"]);
    ft.push(vec![dir.into(), num(ci.value), num(ci.lo), num(ci.hi), num(ci.se), num(fit.r2), usable.len().to_string(), num(alpha)]);
    res.tables.push(ft);
    if deterministic {
        // smooth deterministic field: the slope only shows the fit window's ceiling
        return Ok(res);
    }
    if let Some([a, b]) = params.expected {
        let mut v = if ci.lo >= a && ci.hi <= b {
            Verdict::Pass
        } else if ci.hi < a || ci.lo > b {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        };
        let mut detail = format!("exponent {:.4} (95% CI [{:.4}, {:.4}]) vs [{a}, {b}]", ci.value, ci.lo, ci.hi);
        if let Some(note) = blowup_note(blowups, setup.replicas) {
            v = v.combine(Verdict::Inconclusive);
            detail.push_str(&format!("; {note}"));
        }
        res.verdict(&format!("holder.{dir}_exponent"), v, detail);
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::test_setup;
    use crate::initial::InitialMeasure;

    fn params(lags: Vec<usize>) -> HolderParams {
        HolderParams { direction: Direction::Space, t_obs: 0.2, lags, expected: Some([0.4, 0.6]) }
    }

    #[test]
    fn collapsed_window_is_inconclusive() {
        let s = test_setup(1.0, InitialMeasure::lebesgue(1, 1.0), 0.2, 4);
        let r = holder_experiment(&s, &params(vec![16, 32, 64])).unwrap();
        assert_eq!(r.overall(), Verdict::Inconclusive);
    }

    #[test]
    fn deterministic_field_is_report_only() {
        let s = test_setup(0.0, InitialMeasure::dirac(1, &[0.0], 1.0), 0.2, 2);
        let r = holder_experiment(&s, &params(vec![1, 2, 4, 8])).unwrap();
        assert!(r.verdicts.is_empty());
        let fit = r.table("holder_fit").unwrap();
        // a smooth profile has variogram slope 2, exponent 1
        let e: f64 = fit.rows[0][1].parse().unwrap();
        assert!((e - 1.0).abs() < 0.05, "{e}");
    }

    #[test]
    fn temporal_lags_must_fit() {
        let s = test_setup(1.0, InitialMeasure::lebesgue(1, 1.0), 0.2, 2);
        let p = HolderParams { direction: Direction::Time, t_obs: 0.2, lags: vec![1, 2, 4], expected: None };
        assert!(matches!(holder_experiment(&s, &p), Err(Error::Validation(_))));
    }
}
