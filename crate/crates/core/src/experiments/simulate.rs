use serde::{Deserialize, Serialize};

use super::{blowup_note, noise_fingerprint, num, oracle_check_experiment, ExperimentResult, OracleCheckParams, Setup, Table, Verdict};
use crate::error::Result;
use crate::solver::{simulate, Simulation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateParams {
    /// Empty means `T` only.
    pub snapshot_times: Vec<f64>,
    /// Also compare flat-data PAM against the exact second moment.
    pub oracle: Option<OracleCheckParams>,
}

/// Plain ensemble run: per-node mean and second moment at each snapshot time.
pub fn simulate_experiment(setup: &Setup, params: &SimulateParams) -> Result<ExperimentResult> {
    let times = if params.snapshot_times.is_empty() { vec![setup.sim.t_end] } else { params.snapshot_times.clone() };
    let out = simulate(&setup.sim, &setup.initial, &times, setup.replicas)?;
    let grid = setup.sim.grid;
    let mut res = ExperimentResult::new("simulate", setup);
    res.noise_hash = noise_fingerprint(&Simulation::new(setup.sim.clone())?, setup.replicas);
    let mut table = Table::new("field_moments", &["t", "node", "x", "y", "mean", "second_moment", "replicas"]);
    for set in &out.snapshots {
        let n = set.fields.len().max(1) as f64;
        for node in 0..grid.cells() {
            let (m1, m2) = set.fields.iter().fold((0.0, 0.0), |(a, b), f| (a + f.values[node], b + f.values[node].powi(2)));
            let p = grid.position(node);
            table.push(vec![
                num(set.t),
                node.to_string(),
                num(p[0]),
                num(p[1]),
                num(m1 / n),
                num(m2 / n),
                set.fields.len().to_string(),
            ]);
        }
    }
    let mut log = Table::new("replicas", &["replica", "seed", "stream", "blowup_step"]);
    for r in &out.replicas {
        log.push(vec![
            r.replica.to_string(),
            r.seed.to_string(),
            r.stream.to_string(),
            r.blowup_step.map(|s| s.to_string()).unwrap_or_default(),
        ]);
    }
    res.tables.push(table);
    res.tables.push(log);
    let blowups = out.blowups();
    res.verdict(
        "simulate.no_blowup",
        if blowups == 0 { Verdict::Pass } else { Verdict::Inconclusive },
        blowup_note(blowups, setup.replicas).unwrap_or_else(|| "no replica hit the blow-up guard".into()),
    );
    if let Some(p) = &params.oracle {
        let check = oracle_check_experiment(setup, p)?;
        res.tables.extend(check.tables);
        res.verdicts.extend(check.verdicts);
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::test_setup;
    use crate::initial::InitialMeasure;

    #[test]
    fn zero_noise_moments_are_deterministic() {
        let s = test_setup(0.0, InitialMeasure::lebesgue(1, 3.0), 0.1, 5);
        let p = SimulateParams { snapshot_times: vec![0.05, 0.1], oracle: None };
        let r = simulate_experiment(&s, &p).unwrap();
        let t = r.table("field_moments").unwrap();
        assert_eq!(t.rows.len(), 2 * 128);
        for row in &t.rows {
            assert!((row[4].parse::<f64>().unwrap() - 3.0).abs() < 1e-12);
            assert!((row[5].parse::<f64>().unwrap() - 9.0).abs() < 1e-10);
        }
        assert_eq!(r.overall(), Verdict::Pass);
    }
}
