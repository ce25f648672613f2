//! Run configuration: strict TOML parsing with every error reported by key path.
//!
//! ```toml
//! seed = 7
//! replicas = 1000
//! output_dir = "out"
//!
//! [grid]
//! d = 1
//! L = 5.12
//! N = 256
//!
//! [model]
//! kind = "white"            # riesz { beta }, gaussian { ell }, tabulated { file }
//!
//! [initial]
//! atoms = [{ x = [0.0], mass = 1.0 }]
//! density = { kind = "constant", value = 1.0 }
//!
//! [rho]
//! kind = "linear"
//! lambda = 1.0
//!
//! [scheme]
//! kind = "exp_euler"
//! dt = 1e-3
//! T = 1.0
//!
//! [experiment]
//! name = "moments"
//! [experiment.params]
//! times = [0.25, 0.5, 1.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::correlation::{CorrelationModel, TabulatedSpectrum};
use crate::error::{Error, Result};
use crate::experiments::{
    ApproxInitialParams, ApproxNoiseParams, ComparisonParams, Direction, HolderParams, MomentsParams, OracleCheckParams,
    Setup, SimulateParams, SmallballParams, TestFunction, WeakTraceParams, Window,
};
use crate::experiments::ExperimentResult;
use crate::grid::LatticeGrid;
use crate::kernels::lemmas::LemmaSuite;
use crate::initial::{Atom, Density, InitialMeasure};
use crate::noise::hex;
use crate::solver::{RhoModel, Scheme, SimParams, DEFAULT_BLOWUP_GUARD};

pub const EXPERIMENTS: [&str; 9] = [
    "simulate",
    "moments",
    "compare",
    "smallball",
    "holder",
    "converge-initial",
    "converge-noise",
    "weak-trace",
    "kernels-check",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Simulate(SimulateParams),
    Moments(MomentsParams),
    Compare(ComparisonParams),
    Smallball(SmallballParams),
    Holder(HolderParams),
    ConvergeInitial(ApproxInitialParams),
    ConvergeNoise(ApproxNoiseParams),
    WeakTrace(WeakTraceParams),
    KernelsCheck,
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::Simulate(_) => "simulate",
            ExperimentConfig::Moments(_) => "moments",
            ExperimentConfig::Compare(_) => "compare",
            ExperimentConfig::Smallball(_) => "smallball",
            ExperimentConfig::Holder(_) => "holder",
            ExperimentConfig::ConvergeInitial(_) => "converge-initial",
            ExperimentConfig::ConvergeNoise(_) => "converge-noise",
            ExperimentConfig::WeakTrace(_) => "weak-trace",
            ExperimentConfig::KernelsCheck => "kernels-check",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// `None` only for `kernels-check`, which needs no lattice.
    pub sim: Option<SimParams>,
    pub initial: Option<InitialMeasure>,
    pub experiment: ExperimentConfig,
    pub seed: u64,
    pub replicas: u64,
    pub output_dir: PathBuf,
    /// SHA-256 of the canonical form (sorted keys, no comments, overrides applied).
    pub digest: String,
}

impl RunConfig {
    pub fn setup(&self) -> Result<Setup> {
        match (&self.sim, &self.initial) {
            (Some(sim), Some(initial)) => {
                Ok(Setup::new(sim.clone(), initial.clone(), self.replicas).with_digest(self.digest.clone()))
            }
            _ => Err(Error::Validation(vec!["grid, model, initial, rho and scheme blocks are required".into()])),
        }
    }
}

/// Command-line values that replace the file's.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    parse_config_with(path, &Overrides::default())
}

pub fn parse_config_with(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base, overrides)
}

/// `base` resolves relative file references (tables, spectra).
pub fn parse_config_str(text: &str, base: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut root: Table = text.parse().map_err(|e: toml::de::Error| Error::Validation(vec![format!("syntax: {}", e.message())]))?;
    if let Some(s) = overrides.seed {
        root.insert("seed".into(), Value::Integer(s as i64));
    }
    if let Some(r) = overrides.replicas {
        root.insert("replicas".into(), Value::Integer(r as i64));
    }
    let digest = config_digest(&root);
    let mut r = Reader { errs: Vec::new(), base: base.to_path_buf() };
    let cfg = r.run_config(&root, digest);
    if !r.errs.is_empty() {
        return Err(Error::Validation(r.errs));
    }
    let mut cfg = cfg.expect("no errors implies a config");
    if let Some(dir) = &overrides.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

/// Digest over sorted keys; `output_dir` is excluded since it does not affect results.
pub fn config_digest(root: &Table) -> String {
    let mut t = root.clone();
    t.remove("output_dir");
    let canonical: serde_json::Value = serde_json::to_value(&t).unwrap_or_default();
    digest_str(&canonical.to_string())
}

/// SHA-256 hex of a canonical description.
pub fn digest_str(s: &str) -> String {
    hex(&Sha256::digest(s.as_bytes()))
}

/// Runs the configured experiment.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentResult> {
    use crate::experiments::*;
    if let ExperimentConfig::KernelsCheck = cfg.experiment {
        let suite = crate::kernels::lemmas::run_all(cfg.seed)?;
        let mut res = ExperimentResult::bare("kernels-check", &cfg.digest, cfg.seed, cfg.replicas);
        let header: Vec<&str> = LemmaSuite::csv_header().split(',').collect();
        let mut t = Table::new("lemmas", &header);
        for line in suite.to_csv().lines().skip(1) {
            t.push(line.split(',').map(str::to_string).collect());
        }
        res.tables.push(t);
        let failed: Vec<String> = suite.failures().map(|r| format!("{} at {}", r.lemma_id, r.sweep_point)).collect();
        let v = if failed.is_empty() { Verdict::Pass } else { Verdict::Fail };
        let detail =
            if failed.is_empty() { format!("{} rows, none failed", suite.rows.len()) } else { format!("failed: {}", failed.join("; ")) };
        res.verdict("kernels.lemmas", v, detail);
        return Ok(res);
    }
    let setup = cfg.setup()?;
    match &cfg.experiment {
        ExperimentConfig::Simulate(p) => simulate_experiment(&setup, p),
        ExperimentConfig::Moments(p) => moments_experiment(&setup, p),
        ExperimentConfig::Compare(p) => comparison_experiment(&setup, p),
        ExperimentConfig::Smallball(p) => smallball_experiment(&setup, p),
        ExperimentConfig::Holder(p) => holder_experiment(&setup, p),
        ExperimentConfig::ConvergeInitial(p) => approx_initialdata_experiment(&setup, p),
        ExperimentConfig::ConvergeNoise(p) => approx_noise_experiment(&setup, p),
        ExperimentConfig::WeakTrace(p) => weak_trace_experiment(&setup, p),
        ExperimentConfig::KernelsCheck => unreachable!(),
    }
}

struct Reader {
    errs: Vec<String>,
    base: PathBuf,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

impl Reader {
    fn err(&mut self, msg: String) {
        self.errs.push(msg);
    }

    fn check_keys(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(format!("{}: unknown key (allowed: {})", join(path, k), allowed.join(", ")));
            }
        }
    }

    fn table<'a>(&mut self, t: &'a Table, key: &str, path: &str, required: bool) -> Option<&'a Table> {
        match t.get(key) {
            Some(Value::Table(x)) => Some(x),
            Some(v) => {
                self.err(format!("{}: expected a table, got {}", join(path, key), type_name(v)));
                None
            }
            None => {
                if required {
                    self.err(format!("{}: missing required block", join(path, key)));
                }
                None
            }
        }
    }

    fn num(&mut self, v: &Value, p: &str) -> Option<f64> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.err(format!("{p}: expected a number, got {}", type_name(other)));
                None
            }
        }
    }

    fn f64(&mut self, t: &Table, key: &str, path: &str, default: Option<f64>) -> Option<f64> {
        let p = join(path, key);
        match t.get(key) {
            Some(v) => {
                let x = self.num(v, &p)?;
                if !x.is_finite() {
                    self.err(format!("{p}: must be finite"));
                    return None;
                }
                Some(x)
            }
            None if default.is_some() => default,
            None => {
                self.err(format!("{p}: missing required key"));
                None
            }
        }
    }

    fn positive(&mut self, t: &Table, key: &str, path: &str, default: Option<f64>) -> Option<f64> {
        let x = self.f64(t, key, path, default)?;
        if x > 0.0 {
            Some(x)
        } else {
            self.err(format!("{}: must be > 0, got {x}", join(path, key)));
            None
        }
    }

    fn int(&mut self, t: &Table, key: &str, path: &str, default: Option<u64>) -> Option<u64> {
        let p = join(path, key);
        match t.get(key) {
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(Value::Integer(i)) => {
                self.err(format!("{p}: must be non-negative, got {i}"));
                None
            }
            Some(v) => {
                self.err(format!("{p}: expected an integer, got {}", type_name(v)));
                None
            }
            None if default.is_some() => default,
            None => {
                self.err(format!("{p}: missing required key"));
                None
            }
        }
    }

    fn boolean(&mut self, t: &Table, key: &str, path: &str, default: bool) -> Option<bool> {
        match t.get(key) {
            Some(Value::Boolean(b)) => Some(*b),
            Some(v) => {
                self.err(format!("{}: expected a boolean, got {}", join(path, key), type_name(v)));
                None
            }
            None => Some(default),
        }
    }

    fn string<'a>(&mut self, t: &'a Table, key: &str, path: &str) -> Option<&'a str> {
        match t.get(key) {
            Some(Value::String(s)) => Some(s),
            Some(v) => {
                self.err(format!("{}: expected a string, got {}", join(path, key), type_name(v)));
                None
            }
            None => {
                self.err(format!("{}: missing required key", join(path, key)));
                None
            }
        }
    }

    fn nums(&mut self, t: &Table, key: &str, path: &str, default: Option<Vec<f64>>) -> Option<Vec<f64>> {
        let p = join(path, key);
        match t.get(key) {
            Some(Value::Array(a)) => {
                let before = self.errs.len();
                let out: Vec<f64> = a.iter().enumerate().filter_map(|(i, v)| self.num(v, &format!("{p}[{i}]"))).collect();
                (self.errs.len() == before).then_some(out)
            }
            Some(v) => {
                self.err(format!("{p}: expected an array, got {}", type_name(v)));
                None
            }
            None if default.is_some() => default,
            None => {
                self.err(format!("{p}: missing required key"));
                None
            }
        }
    }

    fn ints(&mut self, t: &Table, key: &str, path: &str) -> Option<Vec<usize>> {
        let p = join(path, key);
        match t.get(key) {
            Some(Value::Array(a)) => {
                let mut out = Vec::new();
                for (i, v) in a.iter().enumerate() {
                    match v {
                        Value::Integer(x) if *x > 0 => out.push(*x as usize),
                        other => self.err(format!("{p}[{i}]: expected a positive integer, got {other}")),
                    }
                }
                (out.len() == a.len()).then_some(out)
            }
            Some(v) => {
                self.err(format!("{p}: expected an array, got {}", type_name(v)));
                None
            }
            None => {
                self.err(format!("{p}: missing required key"));
                None
            }
        }
    }

    fn pair(&mut self, t: &Table, key: &str, path: &str) -> Option<[f64; 2]> {
        let v = self.nums(t, key, path, None)?;
        if v.len() == 2 {
            Some([v[0], v[1]])
        } else {
            self.err(format!("{}: expected two numbers, got {}", join(path, key), v.len()));
            None
        }
    }

    fn file(&self, s: &str) -> PathBuf {
        let p = Path::new(s);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn absorb<T>(&mut self, r: Result<T>, path: &str) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(Error::Validation(v)) => {
                self.errs.extend(v);
                None
            }
            Err(e) => {
                self.err(format!("{path}: {e}"));
                None
            }
        }
    }

    fn run_config(&mut self, root: &Table, digest: String) -> Option<RunConfig> {
        self.check_keys(root, "", &["seed", "replicas", "output_dir", "grid", "model", "initial", "rho", "scheme", "experiment"]);
        let seed = self.int(root, "seed", "", Some(0));
        let replicas = self.int(root, "replicas", "", Some(1000));
        if replicas == Some(0) {
            self.err("replicas: must be >= 1".into());
        }
        let output_dir = match root.get("output_dir") {
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(v) => {
                self.err(format!("output_dir: expected a string, got {}", type_name(v)));
                None
            }
            None => Some(PathBuf::from("out")),
        };
        let exp = self.table(root, "experiment", "", true);
        let name = exp.and_then(|e| self.string(e, "name", "experiment")).map(str::to_string);
        if let Some(n) = &name {
            if !EXPERIMENTS.contains(&n.as_str()) {
                self.err(format!("experiment.name: unknown experiment {n:?} (expected one of {})", EXPERIMENTS.join(", ")));
            }
        }
        let needs_sim = name.as_deref() != Some("kernels-check");
        let grid_t = self.table(root, "grid", "", needs_sim);
        let grid = grid_t.and_then(|g| self.grid(g));
        let dim = grid.map(|g| g.dim());
        let model_t = self.table(root, "model", "", needs_sim);
        let model = match (model_t, dim) {
            (Some(m), Some(d)) => self.model(m, d),
            (Some(m), None) => {
                // still report key errors without a grid
                self.check_model_keys(m);
                None
            }
            _ => None,
        };
        let initial_t = self.table(root, "initial", "", needs_sim);
        let initial = match initial_t {
            Some(t) => self.initial(t, "initial", dim.unwrap_or(1)),
            None => None,
        };
        let rho_t = self.table(root, "rho", "", needs_sim);
        let rho = rho_t.and_then(|t| self.rho(t));
        let scheme_t = self.table(root, "scheme", "", needs_sim);
        let scheme = scheme_t.and_then(|t| self.scheme(t));
        let experiment = match (exp, &name) {
            (Some(e), Some(n)) if EXPERIMENTS.contains(&n.as_str()) => {
                self.check_keys(e, "experiment", &["name", "params"]);
                let empty = Table::new();
                let params = self.table(e, "params", "experiment", false).unwrap_or(&empty);
                self.experiment(n, params, dim.unwrap_or(1), grid.map(|g| g.spacing()))
            }
            _ => None,
        };
        let sim = match (grid, model, rho, scheme) {
            (Some(g), Some(m), Some(r), Some((scheme, dt, t_end, guard, fallback))) => {
                let mut p = SimParams::new(g, m, r, scheme, dt, t_end, seed.unwrap_or(0));
                p.blowup_guard = guard;
                p.synthesis.cholesky_fallback = fallback;
                Some(p)
            }
            _ => None,
        };
        if needs_sim && (sim.is_none() || initial.is_none()) {
            // errors have been recorded block by block
            return None;
        }
        Some(RunConfig {
            sim,
            initial,
            experiment: experiment?,
            seed: seed?,
            replicas: replicas?,
            output_dir: output_dir?,
            digest,
        })
    }

    fn grid(&mut self, t: &Table) -> Option<LatticeGrid> {
        self.check_keys(t, "grid", &["d", "L", "N"]);
        let d = self.int(t, "d", "grid", Some(1));
        let l = self.positive(t, "L", "grid", None);
        let n = self.int(t, "N", "grid", None);
        if let Some(d) = d {
            if !(1..=2).contains(&d) {
                self.err(format!("grid.d: must be 1 or 2, got {d}"));
                return None;
            }
        }
        if let Some(n) = n {
            if n < 4 || !n.is_power_of_two() {
                self.err(format!("grid.N: must be a power of two >= 4, got {n}"));
                return None;
            }
        }
        let g = LatticeGrid::new(d? as usize, l?, n? as usize);
        self.absorb(g, "grid")
    }

    fn check_model_keys(&mut self, t: &Table) {
        self.check_keys(t, "model", &["kind", "beta", "ell", "file"]);
    }

    fn model(&mut self, t: &Table, dim: usize) -> Option<CorrelationModel> {
        self.check_model_keys(t);
        let kind = self.string(t, "kind", "model")?;
        let m = match kind {
            "white" => {
                if dim != 1 {
                    self.err(format!(
                        "model.kind: white noise requires grid.d = 1 (no random-field solution in d = {dim}); use a colored model"
                    ));
                    return None;
                }
                Ok(CorrelationModel::white())
            }
            "riesz" => CorrelationModel::riesz(dim, self.f64(t, "beta", "model", None)?),
            "gaussian" => CorrelationModel::gaussian(dim, self.positive(t, "ell", "model", None)?),
            "tabulated" => {
                let s = self.string(t, "file", "model")?;
                let f = self.file(s);
                TabulatedSpectrum::from_file(&f).and_then(|s| CorrelationModel::tabulated(dim, s))
            }
            other => {
                self.err(format!("model.kind: unknown model {other:?} (white, riesz, gaussian, tabulated)"));
                return None;
            }
        };
        self.absorb(m, "model")
    }

    fn density(&mut self, t: &Table, path: &str, dim: usize) -> Option<Density> {
        let kind = self.string(t, "kind", path)?;
        match kind {
            "constant" => {
                self.check_keys(t, path, &["kind", "value"]);
                Some(Density::Constant { value: self.f64(t, "value", path, None)? })
            }
            "box" => {
                self.check_keys(t, path, &["kind", "lo", "hi", "value"]);
                let lo = self.nums(t, "lo", path, None);
                let hi = self.nums(t, "hi", path, None);
                let value = self.f64(t, "value", path, Some(1.0));
                let (lo, hi) = (lo?, hi?);
                if lo.len() != dim || hi.len() != dim {
                    self.err(format!("{path}: lo and hi need {dim} coordinates"));
                    return None;
                }
                let mut a = [0.0; 2];
                let mut b = [0.0; 2];
                a[..dim].copy_from_slice(&lo);
                b[..dim].copy_from_slice(&hi);
                if a.iter().zip(&b).any(|(x, y)| x > y) {
                    self.err(format!("{path}: lo must not exceed hi"));
                    return None;
                }
                Some(Density::Box { lo: a, hi: b, value: value? })
            }
            "table" => {
                self.check_keys(t, path, &["kind", "file", "x", "v"]);
                let r = if t.contains_key("file") {
                    let s = self.string(t, "file", path)?;
                    let f = self.file(s);
                    Density::table_from_file(&f)
                } else {
                    let x = self.nums(t, "x", path, None);
                    let v = self.nums(t, "v", path, None);
                    Density::table(x?, v?)
                };
                self.absorb(r, path)
            }
            other => {
                self.err(format!("{path}.kind: unknown density {other:?} (constant, box, table)"));
                None
            }
        }
    }

    fn initial(&mut self, t: &Table, path: &str, dim: usize) -> Option<InitialMeasure> {
        self.check_keys(t, path, &["atoms", "density"]);
        let mut atoms = Vec::new();
        let mut ok = true;
        match t.get("atoms") {
            Some(Value::Array(list)) => {
                for (i, a) in list.iter().enumerate() {
                    let p = format!("{path}.atoms[{i}]");
                    let Value::Table(a) = a else {
                        self.err(format!("{p}: expected a table {{ x, mass }}"));
                        ok = false;
                        continue;
                    };
                    self.check_keys(a, &p, &["x", "mass"]);
                    let x = self.nums(a, "x", &p, None);
                    let mass = self.f64(a, "mass", &p, Some(1.0));
                    match (x, mass) {
                        (Some(x), Some(mass)) if x.len() == dim => {
                            let mut c = [0.0; 2];
                            c[..dim].copy_from_slice(&x);
                            atoms.push(Atom { x: c, mass });
                        }
                        (Some(x), Some(_)) => {
                            self.err(format!("{p}.x: expected {dim} coordinates, got {}", x.len()));
                            ok = false;
                        }
                        _ => ok = false,
                    }
                }
            }
            Some(v) => {
                self.err(format!("{path}.atoms: expected an array, got {}", type_name(v)));
                ok = false;
            }
            None => {}
        }
        let density = match self.table(t, "density", path, false) {
            Some(d) => {
                let r = self.density(d, &format!("{path}.density"), dim);
                ok &= r.is_some();
                r
            }
            None => None,
        };
        if !ok {
            return None;
        }
        let m = InitialMeasure::new(dim, atoms, density);
        self.absorb(m, path)
    }

    fn rho(&mut self, t: &Table) -> Option<RhoModel> {
        let kind = self.string(t, "kind", "rho")?;
        let r = match kind {
            "linear" => {
                self.check_keys(t, "rho", &["kind", "lambda"]);
                RhoModel::Linear { lambda: self.f64(t, "lambda", "rho", None)? }
            }
            "affine" => {
                self.check_keys(t, "rho", &["kind", "a", "lambda"]);
                let a = self.f64(t, "a", "rho", None);
                let lambda = self.f64(t, "lambda", "rho", None);
                RhoModel::Affine { a: a?, lambda: lambda? }
            }
            "clipped_linear" => {
                self.check_keys(t, "rho", &["kind", "lambda", "cap"]);
                let lambda = self.f64(t, "lambda", "rho", None);
                let cap = self.positive(t, "cap", "rho", None);
                RhoModel::ClippedLinear { lambda: lambda?, cap: cap? }
            }
            "sine" => {
                self.check_keys(t, "rho", &["kind", "lambda"]);
                RhoModel::Sine { lambda: self.f64(t, "lambda", "rho", None)? }
            }
            other => {
                self.err(format!("rho.kind: unknown nonlinearity {other:?} (linear, affine, clipped_linear, sine)"));
                return None;
            }
        };
        let v = r.validate();
        self.absorb(v, "rho").map(|_| r)
    }

    fn scheme(&mut self, t: &Table) -> Option<(Scheme, f64, f64, f64, bool)> {
        self.check_keys(t, "scheme", &["kind", "eps", "dt", "T", "blowup_guard", "cholesky_fallback"]);
        let kind = match t.get("kind") {
            None => Some("exp_euler"),
            Some(_) => self.string(t, "kind", "scheme"),
        };
        let dt = self.positive(t, "dt", "scheme", Some(1e-3));
        let t_end = self.positive(t, "T", "scheme", Some(1.0));
        let guard = self.positive(t, "blowup_guard", "scheme", Some(DEFAULT_BLOWUP_GUARD));
        let fallback = self.boolean(t, "cholesky_fallback", "scheme", true);
        let scheme = match kind? {
            "exp_euler" => {
                if t.contains_key("eps") {
                    self.err("scheme.eps: only meaningful for kind = \"jump\"".into());
                }
                Scheme::ExpEuler
            }
            "jump" => {
                let eps = self.positive(t, "eps", "scheme", None)?;
                if let Some(dt) = dt {
                    if dt > eps {
                        self.err(format!("scheme.dt: the jump scheme needs dt <= eps, got dt = {dt}, eps = {eps}"));
                        return None;
                    }
                }
                Scheme::Jump { eps }
            }
            other => {
                self.err(format!("scheme.kind: unknown scheme {other:?} (exp_euler, jump)"));
                return None;
            }
        };
        let (dt, t_end) = (dt?, t_end?);
        let ratio = t_end / dt;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            self.err(format!("scheme.T: {t_end} is not a whole number of steps of dt = {dt}"));
            return None;
        }
        Some((scheme, dt, t_end, guard?, fallback?))
    }

    fn window(&mut self, t: &Table, key: &str, path: &str) -> Option<Window> {
        let p = join(path, key);
        let w = self.table(t, key, path, true)?;
        self.check_keys(w, &p, &["t", "x"]);
        let tw = self.pair(w, "t", &p);
        let xw = self.pair(w, "x", &p);
        Some(Window { t: tw?, x: xw? })
    }

    fn experiment(&mut self, name: &str, p: &Table, dim: usize, dx: Option<f64>) -> Option<ExperimentConfig> {
        let path = "experiment.params";
        let e = match name {
            "simulate" => {
                self.check_keys(p, path, &["snapshot_times", "oracle", "rel_tol", "refine_replicas", "t"]);
                let times = self.nums(p, "snapshot_times", path, Some(vec![]));
                let oracle = self.boolean(p, "oracle", path, false);
                let d = OracleCheckParams::default();
                let t = self.positive(p, "t", path, Some(d.t));
                let rel_tol = self.positive(p, "rel_tol", path, Some(d.rel_tol));
                let refine = self.int(p, "refine_replicas", path, Some(d.refine_replicas));
                let oracle = oracle?.then(|| -> Option<OracleCheckParams> {
                    Some(OracleCheckParams { t: t?, rel_tol: rel_tol?, refine_replicas: refine? })
                });
                let oracle = match oracle {
                    Some(None) => return None,
                    Some(Some(o)) => Some(o),
                    None => None,
                };
                ExperimentConfig::Simulate(SimulateParams { snapshot_times: times?, oracle })
            }
            "moments" => {
                self.check_keys(p, path, &["p_list", "times", "x_points", "trim"]);
                let d = MomentsParams::default();
                let p_list = self.nums(p, "p_list", path, Some(d.p_list));
                let times = self.nums(p, "times", path, Some(d.times));
                let x_points = self.nums(p, "x_points", path, Some(d.x_points));
                let trim = self.f64(p, "trim", path, Some(d.trim));
                if let Some(tr) = trim {
                    if !(0.0..0.5).contains(&tr) {
                        self.err(format!("{path}.trim: must lie in [0, 0.5), got {tr}"));
                    }
                }
                ExperimentConfig::Moments(MomentsParams { p_list: p_list?, times: times?, x_points: x_points?, trim: trim? })
            }
            "compare" => {
                self.check_keys(p, path, &["upper", "dt_ladder", "tol_num", "eval_times", "final_limit", "strict_window"]);
                let upper = self.table(p, "upper", path, true).and_then(|u| self.initial(u, &format!("{path}.upper"), dim));
                let dt_ladder = self.nums(p, "dt_ladder", path, Some(vec![4e-3, 2e-3, 1e-3]));
                let tol_num = self.f64(p, "tol_num", path, Some(0.0));
                let eval_times = self.nums(p, "eval_times", path, Some(vec![]));
                let final_limit = self.positive(p, "final_limit", path, Some(1e-3));
                let strict_window =
                    if p.contains_key("strict_window") { Some(self.window(p, "strict_window", path)?) } else { None };
                ExperimentConfig::Compare(ComparisonParams {
                    upper: upper?,
                    dt_ladder: dt_ladder?,
                    tol_num: tol_num?,
                    eval_times: eval_times?,
                    final_limit: final_limit?,
                    strict_window,
                })
            }
            "smallball" => {
                self.check_keys(p, path, &["window", "eps_list", "min_positive_fraction", "min_r2"]);
                let d = SmallballParams::default();
                let window = if p.contains_key("window") { self.window(p, "window", path) } else { Some(d.window) };
                let eps_list = self.nums(p, "eps_list", path, Some(d.eps_list));
                let frac = self.positive(p, "min_positive_fraction", path, Some(d.min_positive_fraction));
                let r2 = self.f64(p, "min_r2", path, Some(d.min_r2));
                ExperimentConfig::Smallball(SmallballParams {
                    window: window?,
                    eps_list: eps_list?,
                    min_positive_fraction: frac?,
                    min_r2: r2?,
                })
            }
            "holder" => {
                self.check_keys(p, path, &["direction", "t_obs", "lags", "expected"]);
                let direction = match self.string(p, "direction", path) {
                    Some("space") => Some(Direction::Space),
                    Some("time") => Some(Direction::Time),
                    Some(other) => {
                        self.err(format!("{path}.direction: expected \"space\" or \"time\", got {other:?}"));
                        None
                    }
                    None => None,
                };
                let t_obs = self.positive(p, "t_obs", path, None);
                let lags = self.ints(p, "lags", path);
                let expected = if p.contains_key("expected") { Some(self.pair(p, "expected", path)?) } else { None };
                ExperimentConfig::Holder(HolderParams { direction: direction?, t_obs: t_obs?, lags: lags?, expected })
            }
            "converge-initial" => {
                self.check_keys(p, path, &["eps_ladder", "t", "x", "floor_factor"]);
                let d = ApproxInitialParams::default();
                let eps = self.nums(p, "eps_ladder", path, Some(d.eps_ladder));
                let t = self.positive(p, "t", path, Some(d.t));
                let x = self.f64(p, "x", path, Some(d.x));
                let f = self.positive(p, "floor_factor", path, Some(d.floor_factor));
                ExperimentConfig::ConvergeInitial(ApproxInitialParams { eps_ladder: eps?, t: t?, x: x?, floor_factor: f? })
            }
            "converge-noise" => {
                self.check_keys(p, path, &["eps_ladder", "eps_ladder_dx", "t", "floor_factor"]);
                let eps = match (p.contains_key("eps_ladder"), p.contains_key("eps_ladder_dx")) {
                    (true, false) => self.nums(p, "eps_ladder", path, None),
                    (false, true) => self.nums(p, "eps_ladder_dx", path, None).and_then(|v| dx.map(|h| v.iter().map(|m| m * h).collect())),
                    (false, false) => dx.map(|h| vec![8.0 * h, 4.0 * h, 2.0 * h]),
                    (true, true) => {
                        self.err(format!("{path}: give eps_ladder or eps_ladder_dx, not both"));
                        None
                    }
                };
                let t = self.positive(p, "t", path, Some(0.5));
                let f = self.positive(p, "floor_factor", path, Some(3.0));
                ExperimentConfig::ConvergeNoise(ApproxNoiseParams { eps_ladder: eps?, t: t?, floor_factor: f? })
            }
            "weak-trace" => {
                self.check_keys(p, path, &["phi", "t_ladder", "tol"]);
                let d = WeakTraceParams::default();
                let phi = match self.table(p, "phi", path, false) {
                    Some(ph) => {
                        let pp = format!("{path}.phi");
                        self.check_keys(ph, &pp, &["center", "half_width"]);
                        let c = self.nums(ph, "center", &pp, Some(vec![0.0; dim]));
                        let h = self.positive(ph, "half_width", &pp, Some(1.0));
                        match (c, h) {
                            (Some(c), Some(h)) if c.len() == dim => {
                                let mut center = [0.0; 2];
                                center[..dim].copy_from_slice(&c);
                                Some(TestFunction { center, half_width: h })
                            }
                            (Some(_), Some(_)) => {
                                self.err(format!("{pp}.center: expected {dim} coordinates"));
                                None
                            }
                            _ => None,
                        }
                    }
                    None => Some(d.phi),
                };
                let t_ladder = self.nums(p, "t_ladder", path, Some(d.t_ladder));
                let tol = self.positive(p, "tol", path, Some(d.tol));
                ExperimentConfig::WeakTrace(WeakTraceParams { phi: phi?, t_ladder: t_ladder?, tol: tol? })
            }
            "kernels-check" => {
                self.check_keys(p, path, &[]);
                ExperimentConfig::KernelsCheck
            }
            _ => return None,
        };
        Some(e)
    }
}
