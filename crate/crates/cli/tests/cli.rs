use std::path::Path;
use std::process::{Command, Output};

fn she_lab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_she-lab")).args(args).current_dir(cwd).output().unwrap()
}

const SMALL: &str = r#"
seed = 3
replicas = 40
output_dir = "results"

[grid]
L = 2.56
N = 64

[model]
kind = "white"

[initial]
density = { kind = "constant", value = 1.0 }

[rho]
kind = "linear"
lambda = 1.0

[scheme]
dt = 2e-3
T = 0.1

[experiment]
name = "simulate"
[experiment.params]
snapshot_times = [0.05, 0.1]
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn simulate_passes_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let out = she_lab(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let manifest = dir.path().join("results/simulate_manifest.json");
    let csv = dir.path().join("results/simulate_field_moments.csv");
    let (m1, c1) = (std::fs::read(&manifest).unwrap(), std::fs::read(&csv).unwrap());
    assert!(c1.starts_with(b"t,node,x,y,mean,second_moment,replicas\n"));

    she_lab(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(m1, std::fs::read(&manifest).unwrap());
    assert_eq!(c1, std::fs::read(&csv).unwrap());

    // a different seed changes the digest and the numbers
    let out = she_lab(&["simulate", "--config", &cfg, "--seed", "4", "--out", "other"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let m2 = std::fs::read_to_string(dir.path().join("other/simulate_manifest.json")).unwrap();
    assert!(m2.contains("\"seed\": 4"));
    assert_ne!(std::fs::read(dir.path().join("other/simulate_field_moments.csv")).unwrap(), c1);
}

#[test]
fn invalid_config_lists_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("N = 64", "N = 60").replace("lambda = 1.0", "lambda = \"x\"");
    let cfg = write_config(dir.path(), "bad.toml", &bad);
    let out = she_lab(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid.N") && err.contains("rho.lambda"), "{err}");
    assert!(!dir.path().join("results").exists());
}

#[test]
fn subcommand_must_match_the_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let out = she_lab(&["holder", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment.name"));
}

#[test]
fn missing_config_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = she_lab(&["smallball", "--config", "nope.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
}

#[test]
fn inconclusive_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // every lag is beyond a quarter period, so the fit window collapses
    let text = SMALL.replace("name = \"simulate\"", "name = \"holder\"").replace(
        "snapshot_times = [0.05, 0.1]",
        "direction = \"space\"\nt_obs = 0.1\nlags = [16, 20, 24]\nexpected = [0.4, 0.6]",
    );
    let cfg = write_config(dir.path(), "h.toml", &text);
    let out = she_lab(&["holder", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("INCONCLUSIVE"));
}

#[test]
fn kernels_check_writes_the_lemma_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = she_lab(&["kernels-check", "--out", "k"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("k/kernels_check_lemmas.csv")).unwrap();
    assert!(csv.starts_with("lemma_id,sweep_point,lhs,rhs,fitted_C,pass\n"));
    assert!(!csv.contains(",false\n"));
}

#[test]
fn moment_bounds_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = she_lab(&["moments", "--model", "white", "--gamma", "1", "--p", "2", "--t-grid", "0.5,1", "--out", "m"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("m/moments_bounds.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,gamma_p,H,bound,oracle_second_moment,error_estimate,ln_H,ln_bound");
    let last: Vec<&str> = lines.last().unwrap().split(',').collect();
    assert_eq!(last[1], "64");
    assert!((last[4].parse::<f64>().unwrap() - 1.95237).abs() < 1e-4);

    let out = she_lab(&["moments", "--model", "cauchy", "--t-grid", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bundled_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            she_lab_core::config::parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 9);
}
