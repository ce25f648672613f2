use std::path::Path;

use she_lab_core::config::{parse_config_str, run_experiment, ExperimentConfig, Overrides};
use she_lab_core::experiments::Verdict;
use she_lab_core::persist::{persist_result, read_manifest};

const WEAK_TRACE: &str = r#"
seed = 5
replicas = 60

[grid]
L = 2.56
N = 128

[model]
kind = "riesz"
beta = 0.5

[initial]
atoms = [{ x = [0.0], mass = 1.0 }]

[rho]
kind = "linear"
lambda = 0.5

[scheme]
dt = 2e-3
T = 0.2

[experiment]
name = "weak-trace"
[experiment.params]
t_ladder = [0.2, 0.1, 0.05]
"#;

fn parse(text: &str, o: &Overrides) -> she_lab_core::config::RunConfig {
    parse_config_str(text, Path::new("."), o).unwrap()
}

#[test]
fn config_to_manifest_round_trip() {
    let cfg = parse(WEAK_TRACE, &Overrides::default());
    assert!(matches!(cfg.experiment, ExperimentConfig::WeakTrace(_)));
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.config_digest, cfg.digest);
    assert!(!result.noise_hash.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let manifest = read_manifest(&persist_result(&result, dir.path()).unwrap()).unwrap();
    assert_eq!(manifest.config_digest, cfg.digest);
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.verdicts.len(), result.verdicts.len());
    let csv = std::fs::read_to_string(dir.path().join(&manifest.tables[0])).unwrap();
    assert!(csv.starts_with("t,mean_square_gap,ci_lo,ci_hi,se,target\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn same_seed_same_numbers_other_seed_other_numbers() {
    let a = run_experiment(&parse(WEAK_TRACE, &Overrides::default())).unwrap();
    let b = run_experiment(&parse(WEAK_TRACE, &Overrides::default())).unwrap();
    assert_eq!(a, b);
    let c = run_experiment(&parse(WEAK_TRACE, &Overrides { seed: Some(6), ..Default::default() })).unwrap();
    assert_ne!(a.tables, c.tables);
    assert_ne!(a.noise_hash, c.noise_hash);
}

#[test]
fn kernels_check_runs_without_a_lattice() {
    let cfg = parse("[experiment]\nname = \"kernels-check\"\n", &Overrides::default());
    let r = run_experiment(&cfg).unwrap();
    assert_eq!(r.verdict_of("kernels.lemmas").unwrap().verdict, Verdict::Pass);
    assert!(r.table("lemmas").unwrap().rows.len() > 100);
}
