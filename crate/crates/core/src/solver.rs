//! Path-wise time stepping on the lattice.
//!
//! Exponential Euler on the mild form, `u⁺ = G(Δt) ⋆ (u + ρ(u) ΔM)`, and the
//! explicit jump-generator scheme `u⁺ = u + Δt Δ^ε u + ρ(u) ΔM^ε`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationModel;
use crate::error::{Error, Result};
use crate::grid::{FieldState, LatticeGrid};
use crate::initial::InitialMeasure;
use crate::kernels::heat_symbol;
use crate::noise::{NoiseFilter, NoiseSynthesizer, SynthesisOptions};
use crate::spectral::{plan_for, SpectralPlan, Workspace};

pub const DEFAULT_BLOWUP_GUARD: f64 = 1e12;

/// Globally Lipschitz nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoModel {
    /// `λu` (parabolic Anderson model).
    Linear { lambda: f64 },
    /// `a + λu`.
    Affine { a: f64, lambda: f64 },
    /// `λ · clamp(u, -cap, cap)`.
    ClippedLinear { lambda: f64, cap: f64 },
    /// `λ sin u`.
    Sine { lambda: f64 },
}

impl RhoModel {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let (lambda, extra) = match *self {
            RhoModel::Linear { lambda } | RhoModel::Sine { lambda } => (lambda, None),
            RhoModel::Affine { a, lambda } => (lambda, Some(("a", a))),
            RhoModel::ClippedLinear { lambda, cap } => {
                if !(cap > 0.0) {
                    errs.push(format!("rho.cap must be > 0, got {cap}"));
                }
                (lambda, None)
            }
        };
        if !lambda.is_finite() {
            errs.push("rho.lambda must be finite".into());
        }
        if let Some((k, v)) = extra {
            if !v.is_finite() {
                errs.push(format!("rho.{k} must be finite"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            RhoModel::Linear { lambda } => lambda * u,
            RhoModel::Affine { a, lambda } => a + lambda * u,
            RhoModel::ClippedLinear { lambda, cap } => lambda * u.clamp(-cap, cap),
            RhoModel::Sine { lambda } => lambda * u.sin(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            RhoModel::Linear { lambda }
            | RhoModel::Affine { lambda, .. }
            | RhoModel::ClippedLinear { lambda, .. }
            | RhoModel::Sine { lambda } => lambda.abs(),
        }
    }

    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, RhoModel::Linear { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    ExpEuler,
    Jump { eps: f64 },
}

fn check_blowup(values: &[f64], guard: f64, replica: u64, step: usize) -> Result<()> {
    let mut max_abs = 0.0f64;
    for v in values {
        if !v.is_finite() {
            return Err(Error::BlowUp { replica, step, max_abs: f64::INFINITY });
        }
        max_abs = max_abs.max(v.abs());
    }
    if max_abs > guard {
        return Err(Error::BlowUp { replica, step, max_abs });
    }
    Ok(())
}

/// One scheme on one grid with its precomputed symbol.
#[derive(Debug, Clone)]
pub struct Stepper {
    plan: std::sync::Arc<SpectralPlan>,
    scheme: Scheme,
    dt: f64,
    symbol: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: &LatticeGrid, scheme: Scheme, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::domain(format!("Δt must be > 0, got {dt}")));
        }
        let plan = plan_for(grid)?;
        let symbol = match scheme {
            Scheme::ExpEuler => heat_symbol(&plan, dt),
            Scheme::Jump { eps } => {
                if !(eps > 0.0) {
                    return Err(Error::domain(format!("ε must be > 0, got {eps}")));
                }
                if dt > eps {
                    return Err(Error::Stability(format!(
                        "explicit jump scheme needs Δt ≤ ε, got Δt = {dt}, ε = {eps}"
                    )));
                }
                heat_symbol(&plan, eps)
            }
        };
        Ok(Self { plan, scheme, dt, symbol })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn plan(&self) -> &std::sync::Arc<SpectralPlan> {
        &self.plan
    }

    /// Advances `u` in place by one step with noise slice `dm`.
    pub fn step(&self, u: &mut [f64], dm: &[f64], rho: &RhoModel, scratch: &mut Vec<f64>, ws: &mut Workspace) {
        match self.scheme {
            Scheme::ExpEuler => {
                for (v, d) in u.iter_mut().zip(dm) {
                    *v += rho.eval(*v) * d;
                }
                self.plan.apply_symbol(u, &self.symbol, ws);
            }
            Scheme::Jump { eps } => {
                scratch.clear();
                scratch.extend_from_slice(u);
                self.plan.apply_symbol(scratch, &self.symbol, ws);
                let a = self.dt / eps;
                for ((v, g), d) in u.iter_mut().zip(scratch.iter()).zip(dm) {
                    let noise = rho.eval(*v) * d;
                    *v += a * (g - *v) + noise;
                }
            }
        }
    }
}

fn check_slice(u: &FieldState, dm: &[f64]) -> Result<()> {
    if dm.len() != u.values.len() {
        return Err(Error::Shape(format!("noise slice has {} values, field has {}", dm.len(), u.values.len())));
    }
    Ok(())
}

/// `u⁺ = G(Δt) ⋆ (u + ρ(u) ΔM)`.
pub fn step_exp_euler(u: &FieldState, dm: &[f64], rho: &RhoModel, dt: f64) -> Result<FieldState> {
    check_slice(u, dm)?;
    let stepper = Stepper::new(&u.grid, Scheme::ExpEuler, dt)?;
    let mut out = u.clone();
    stepper.step(&mut out.values, dm, rho, &mut Vec::new(), &mut Workspace::default());
    out.time_index += 1;
    check_blowup(&out.values, f64::INFINITY, u.replica, out.time_index)?;
    Ok(out)
}

/// `u⁺ = u + Δt Δ^ε u + ρ(u) ΔM^ε`.
pub fn step_jump_semigroup(u: &FieldState, dm_eps: &[f64], rho: &RhoModel, dt: f64, eps: f64) -> Result<FieldState> {
    check_slice(u, dm_eps)?;
    let stepper = Stepper::new(&u.grid, Scheme::Jump { eps }, dt)?;
    let mut out = u.clone();
    stepper.step(&mut out.values, dm_eps, rho, &mut Vec::new(), &mut Workspace::default());
    out.time_index += 1;
    check_blowup(&out.values, f64::INFINITY, u.replica, out.time_index)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub grid: LatticeGrid,
    pub model: CorrelationModel,
    pub rho: RhoModel,
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub blowup_guard: f64,
    pub synthesis: SynthesisOptions,
}

impl SimParams {
    pub fn new(grid: LatticeGrid, model: CorrelationModel, rho: RhoModel, scheme: Scheme, dt: f64, t_end: f64, seed: u64) -> Self {
        Self {
            grid,
            model,
            rho,
            scheme,
            dt,
            t_end,
            seed,
            blowup_guard: DEFAULT_BLOWUP_GUARD,
            synthesis: SynthesisOptions::default(),
        }
    }
}

/// Fields evolved side by side under one noise realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub values: Vec<f64>,
    pub filter: NoiseFilter,
}

impl Member {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, filter: NoiseFilter::None }
    }

    pub fn filtered(values: Vec<f64>, filter: NoiseFilter) -> Self {
        Self { values, filter }
    }
}

/// A configured run: grid, scheme, nonlinearity and the noise source.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: SimParams,
    stepper: Stepper,
    synth: NoiseSynthesizer,
    steps: usize,
}

impl Simulation {
    pub fn new(params: SimParams) -> Result<Self> {
        params.rho.validate()?;
        if !(params.t_end > 0.0) {
            return Err(Error::Validation(vec![format!("scheme.T must be > 0, got {}", params.t_end)]));
        }
        let stepper = Stepper::new(&params.grid, params.scheme, params.dt)?;
        let ratio = params.t_end / params.dt;
        let steps = ratio.round() as usize;
        if (ratio - steps as f64).abs() > 1e-6 * ratio.max(1.0) || steps == 0 {
            return Err(Error::Validation(vec![format!(
                "scheme.T = {} is not a whole number of steps of Δt = {}",
                params.t_end, params.dt
            )]));
        }
        let synth = NoiseSynthesizer::with_options(&params.model, &params.grid, params.dt, params.seed, params.synthesis)?;
        Ok(Self { params, stepper, synth, steps })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn synthesizer(&self) -> &NoiseSynthesizer {
        &self.synth
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.params.grid
    }

    /// Step index of time `t` (must sit on the step lattice within round-off).
    pub fn step_of(&self, t: f64) -> Result<usize> {
        let r = t / self.params.dt;
        let k = r.round();
        if !(t > 0.0 && t <= self.params.t_end * (1.0 + 1e-12)) {
            return Err(Error::Validation(vec![format!("time {t} outside (0, {}]", self.params.t_end)]));
        }
        if (r - k).abs() > 1e-6 * r.max(1.0) {
            return Err(Error::Validation(vec![format!("time {t} is not a multiple of Δt = {}", self.params.dt)]));
        }
        Ok(k as usize)
    }

    /// Noise filter the scheme applies by default: `G(ε)` smoothing for the jump scheme.
    pub fn default_filter(&self) -> NoiseFilter {
        match self.params.scheme {
            Scheme::ExpEuler => NoiseFilter::None,
            Scheme::Jump { eps } => NoiseFilter::HeatSmooth(eps),
        }
    }

    /// Runs one replica for `steps` steps (or to `T`), calling `observe(k, members)`
    /// after every step `k = 1, 2, ...`. Returning `false` stops early.
    pub fn run_members<F>(&self, replica: u64, members: &mut [Member], steps: Option<usize>, mut observe: F) -> Result<()>
    where
        F: FnMut(usize, &[Member]) -> bool,
    {
        let cells = self.params.grid.cells();
        for m in members.iter() {
            if m.values.len() != cells {
                return Err(Error::Shape(format!("member field has {} values, grid has {cells}", m.values.len())));
            }
        }
        // distinct filters share one filtered slice per step
        let mut filters: Vec<NoiseFilter> = Vec::new();
        let mut which = Vec::with_capacity(members.len());
        for m in members.iter() {
            let f = match (&m.filter, self.params.scheme) {
                (NoiseFilter::None, Scheme::Jump { .. }) => self.default_filter(),
                (f, _) => f.clone(),
            };
            let i = filters.iter().position(|g| *g == f).unwrap_or_else(|| {
                filters.push(f);
                filters.len() - 1
            });
            which.push(i);
        }
        let plan = self.stepper.plan().clone();
        let symbols: Vec<Option<Vec<f64>>> = filters.iter().map(|f| f.symbol(&plan)).collect::<Result<_>>()?;
        let mut raw = vec![0.0; cells];
        let mut slices = vec![vec![0.0; cells]; filters.len()];
        let mut ws = Workspace::default();
        let mut scratch = Vec::with_capacity(cells);
        let total = steps.unwrap_or(self.steps);
        for k in 0..total {
            self.synth.fill_slice(replica, k, &mut raw, &mut ws);
            for (slot, sym) in slices.iter_mut().zip(&symbols) {
                slot.copy_from_slice(&raw);
                if let Some(s) = sym {
                    plan.apply_symbol(slot, s, &mut ws);
                }
            }
            for (m, &w) in members.iter_mut().zip(&which) {
                self.stepper.step(&mut m.values, &slices[w], &self.params.rho, &mut scratch, &mut ws);
                check_blowup(&m.values, self.params.blowup_guard, replica, k + 1)?;
            }
            if !observe(k + 1, members) {
                break;
            }
        }
        Ok(())
    }

    /// Single-field convenience wrapper around [`Simulation::run_members`].
    pub fn run<F>(&self, replica: u64, u0: &[f64], mut observe: F) -> Result<Vec<f64>>
    where
        F: FnMut(usize, &[f64]) -> bool,
    {
        let mut members = [Member::new(u0.to_vec())];
        self.run_members(replica, &mut members, None, |k, m| observe(k, &m[0].values))?;
        let [m] = members;
        Ok(m.values)
    }
}

/// Snapshot of every replica at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSet {
    pub t: f64,
    pub step: usize,
    pub fields: Vec<FieldState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaLog {
    pub replica: u64,
    pub seed: u64,
    /// Keystream id of the replica.
    pub stream: u64,
    /// Step at which the blow-up guard fired, if it did.
    pub blowup_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub snapshots: Vec<SnapshotSet>,
    pub replicas: Vec<ReplicaLog>,
}

impl SimOutput {
    pub fn blowups(&self) -> usize {
        self.replicas.iter().filter(|r| r.blowup_step.is_some()).count()
    }
}

/// Runs `replicas` independent replicas from `initial` and records every
/// replica at `snapshot_times`. Replicas that hit the blow-up guard are
/// logged and excluded from the snapshots.
pub fn simulate(params: &SimParams, initial: &InitialMeasure, snapshot_times: &[f64], replicas: u64) -> Result<SimOutput> {
    let mut errs = Vec::new();
    for &t in snapshot_times {
        if !(t > 0.0 && t <= params.t_end) {
            errs.push(format!("scheme.snapshot_times: {t} outside (0, {}]", params.t_end));
        }
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let sim = Simulation::new(params.clone())?;
    let steps: Vec<usize> = snapshot_times.iter().map(|&t| sim.step_of(t)).collect::<Result<_>>()?;
    let u0 = initial.grid_project(&params.grid)?;
    let per_replica: Vec<Result<(ReplicaLog, Vec<Vec<f64>>)>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut snaps = vec![Vec::new(); steps.len()];
            let last = steps.iter().copied().max().unwrap_or(sim.steps());
            let mut members = [Member::new(u0.values.clone())];
            let outcome = sim.run_members(r, &mut members, Some(last), |k, m| {
                for (slot, &s) in snaps.iter_mut().zip(&steps) {
                    if s == k {
                        *slot = m[0].values.clone();
                    }
                }
                true
            });
            let blowup_step = match outcome {
                Ok(()) => None,
                Err(Error::BlowUp { step, .. }) => Some(step),
                Err(e) => return Err(e),
            };
            Ok((ReplicaLog { replica: r, seed: params.seed, stream: r, blowup_step }, snaps))
        })
        .collect();
    let mut logs = Vec::new();
    let mut snapshots: Vec<SnapshotSet> = snapshot_times
        .iter()
        .zip(&steps)
        .map(|(&t, &step)| SnapshotSet { t, step, fields: Vec::new() })
        .collect();
    for res in per_replica {
        let (log, snaps) = res?;
        if log.blowup_step.is_none() {
            for (set, values) in snapshots.iter_mut().zip(snaps) {
                set.fields.push(FieldState { grid: params.grid, time_index: set.step, replica: log.replica, values });
            }
        }
        logs.push(log);
    }
    Ok(SimOutput { snapshots, replicas: logs })
}

/// Exact `E[u_k(x)²]` of the exponential Euler lattice scheme for PAM with
/// flat unit data and white noise in d = 1: `C⁺ = G·G ⋆ (C + λ²Δt/Δx C(0) δ)`.
pub fn lattice_flat_second_moment(grid: &LatticeGrid, dt: f64, t: f64, lambda: f64) -> Result<f64> {
    if grid.dim() != 1 {
        return Err(Error::domain("the lattice second-moment recursion is one-dimensional"));
    }
    let plan = plan_for(grid)?;
    let s2: Vec<f64> = heat_symbol(&plan, dt).iter().map(|v| v * v).collect();
    let mut c = vec![1.0; grid.cells()];
    let mut ws = Workspace::default();
    for _ in 0..(t / dt).round() as usize {
        c[0] += lambda * lambda * dt / grid.spacing() * c[0];
        plan.apply_symbol(&mut c, &s2, &mut ws);
    }
    Ok(c[0])
}

/// Earliest time at which statistics from atomic initial data are taken.
pub fn dirac_t_min(dt: f64) -> f64 {
    10.0 * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gauss, jump_semigroup_apply};
    use crate::noise::synthesize;
    use crate::volterra::{pam_second_moment_oracle, OracleGrids};

    fn white_params(l: f64, n: usize, dt: f64, t_end: f64, lambda: f64) -> SimParams {
        SimParams::new(
            LatticeGrid::new(1, l, n).unwrap(),
            CorrelationModel::white(),
            RhoModel::Linear { lambda },
            Scheme::ExpEuler,
            dt,
            t_end,
            2024,
        )
    }

    #[test]
    fn rho_models() {
        let r = RhoModel::ClippedLinear { lambda: 2.0, cap: 1.5 };
        assert_eq!(r.eval(3.0), 3.0);
        assert_eq!(r.eval(-0.5), -1.0);
        assert_eq!(r.at_zero(), 0.0);
        assert_eq!(RhoModel::Affine { a: 0.3, lambda: 1.0 }.at_zero(), 0.3);
        assert_eq!(RhoModel::Sine { lambda: -2.0 }.lipschitz(), 2.0);
        assert!(RhoModel::ClippedLinear { lambda: 1.0, cap: 0.0 }.validate().is_err());
    }

    #[test]
    fn zero_noise_keeps_flat_field() {
        let grid = LatticeGrid::new(1, 2.0, 64).unwrap();
        let u = FieldState::constant(grid, 2.5);
        let dm = vec![0.3; 64];
        let e = step_exp_euler(&u, &dm, &RhoModel::Linear { lambda: 0.0 }, 0.01).unwrap();
        assert!(e.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let j = step_jump_semigroup(&u, &dm, &RhoModel::Linear { lambda: 0.0 }, 0.01, 0.02).unwrap();
        assert!(j.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
        assert!(matches!(
            step_jump_semigroup(&u, &dm, &RhoModel::Linear { lambda: 0.0 }, 0.03, 0.02),
            Err(Error::Stability(_))
        ));
        assert!(matches!(step_exp_euler(&u, &dm[..10], &RhoModel::Linear { lambda: 1.0 }, 0.01), Err(Error::Shape(_))));
    }

    #[test]
    fn jump_drift_matches_exponential_formula() {
        let grid = LatticeGrid::new(1, 6.0, 256).unwrap();
        let eps = 0.05;
        let t = 0.5;
        let u0 = FieldState::from_fn(grid, |p| (-p[0] * p[0]).exp());
        let exact = jump_semigroup_apply(&u0, t, eps, &grid).unwrap();
        let zero = vec![0.0; 256];
        let rho = RhoModel::Linear { lambda: 1.0 };
        let mut errs = Vec::new();
        for steps in [50usize, 100, 200] {
            let dt = t / steps as f64;
            let mut u = u0.clone();
            for _ in 0..steps {
                u = step_jump_semigroup(&u, &zero, &rho, dt, eps).unwrap();
            }
            errs.push(u.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        // first order in Δt
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.8..2.2).contains(&ratio), "{errs:?}");
        }
    }

    #[test]
    fn zero_noise_from_dirac_is_heat_kernel() {
        let p = white_params(6.0, 512, 0.01, 0.5, 0.0);
        let out = simulate(&p, &InitialMeasure::dirac(1, &[0.0], 1.0), &[0.5], 1).unwrap();
        let f = &out.snapshots[0].fields[0];
        for (j, v) in f.values.iter().enumerate().step_by(16) {
            let x = p.grid.coord(j);
            assert!((v - gauss(0.5, x * x, 1)).abs() < 1e-4, "{x}");
        }
    }

    #[test]
    fn simulate_is_deterministic_and_validates_times() {
        let p = white_params(1.0, 64, 0.01, 0.1, 1.0);
        let mu = InitialMeasure::lebesgue(1, 1.0);
        let a = simulate(&p, &mu, &[0.05, 0.1], 3).unwrap();
        let b = simulate(&p, &mu, &[0.05, 0.1], 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.snapshots[1].fields[0].values, a.snapshots[1].fields[1].values);
        assert!(matches!(simulate(&p, &mu, &[0.0], 1), Err(Error::Validation(_))));
        assert!(matches!(simulate(&p, &mu, &[0.2], 1), Err(Error::Validation(_))));
    }

    #[test]
    fn blowup_is_logged() {
        let mut p = white_params(1.0, 32, 0.01, 0.5, 40.0);
        p.blowup_guard = 10.0;
        let out = simulate(&p, &InitialMeasure::lebesgue(1, 1.0), &[0.5], 4).unwrap();
        assert!(out.blowups() > 0);
        assert_eq!(out.snapshots[0].fields.len(), 4 - out.blowups());
    }

    #[test]
    fn pam_mean_equals_j0() {
        let p = white_params(2.56, 128, 0.01, 0.5, 1.0);
        let sim = Simulation::new(p.clone()).unwrap();
        let mu = InitialMeasure::new(1, vec![], Some(crate::initial::Density::Box { lo: [-0.5, 0.0], hi: [0.5, 0.0], value: 1.0 }))
            .unwrap();
        let u0 = mu.grid_project(&p.grid).unwrap().values;
        let c = p.grid.nearest_node(0.0).unwrap();
        let reps = 2000;
        let vals: Vec<f64> = (0..reps).map(|r| sim.run(r, &u0, |_, _| true).unwrap()[c]).collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        // deterministic part of the lattice scheme is G(t) on the projected data
        let j0 = crate::kernels::semigroup_apply(&mu.grid_project(&p.grid).unwrap(), 0.5, &p.grid).unwrap().values[c];
        assert!((mean - j0).abs() < 3.0 * sd / (reps as f64).sqrt(), "{mean} vs {j0}");
        let cont = mu.j0(0.5, &[0.0]).unwrap().value.value;
        assert!((j0 - cont).abs() < 1e-2);
    }

    /// `E u(t,0)²` of the lattice scheme for flat data, from the exact
    /// covariance recursion `C⁺ = G ⋆ G ⋆ (C + λ² Δt/Δx C(0) δ)`.
    #[test]
    fn second_moment_matches_lattice_and_oracle() {
        let p = white_params(5.12, 256, 2e-3, 1.0, 1.0);
        let exact = lattice_flat_second_moment(&p.grid, p.dt, 1.0, 1.0).unwrap();
        let oracle = pam_second_moment_oracle(&CorrelationModel::white(), 1.0, 1.0, &OracleGrids::default())
            .unwrap()
            .terminal
            .value;
        assert!((exact - oracle).abs() < 0.05 * oracle, "{exact} vs {oracle}");
        // smaller Δt moves the lattice value toward the continuum
        let finer = lattice_flat_second_moment(&p.grid, 1e-3, 1.0, 1.0).unwrap();
        assert!((finer - oracle).abs() < (exact - oracle).abs());
        // flat data is translation invariant, so every node is a sample
        let sim = Simulation::new(p.clone()).unwrap();
        let u0 = vec![1.0; 256];
        let reps = 1000u64;
        let per: Vec<f64> = (0..reps)
            .map(|r| {
                let u = sim.run(r, &u0, |_, _| true).unwrap();
                u.iter().map(|v| v * v).sum::<f64>() / u.len() as f64
            })
            .collect();
        let n = reps as f64;
        let m2 = per.iter().sum::<f64>() / n;
        let se = (per.iter().map(|v| (v - m2).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
        assert!((m2 - exact).abs() < 3.0 * se, "{m2} ± {se} vs {exact}");
    }

    #[test]
    fn coupled_jump_runs_stay_ordered() {
        let grid = LatticeGrid::new(1, 2.56, 128).unwrap();
        let eps = 0.02;
        let dt = 2e-3;
        let mut p = SimParams::new(grid, CorrelationModel::white(), RhoModel::Sine { lambda: 1.0 }, Scheme::Jump { eps }, dt, 0.2, 5);
        p.blowup_guard = 1e6;
        let sim = Simulation::new(p).unwrap();
        let lo = InitialMeasure::dirac(1, &[0.0], 1.0).grid_project(&grid).unwrap().values;
        let hi: Vec<f64> = lo.iter().map(|v| v + 0.5).collect();
        for r in 0..200 {
            let mut members = [Member::new(lo.clone()), Member::new(hi.clone())];
            sim.run_members(r, &mut members, None, |_, m| {
                assert!(m[0].values.iter().zip(&m[1].values).all(|(a, b)| a <= b));
                true
            })
            .unwrap();
        }
        // sanity check on the step-size premise
        let real = synthesize(&CorrelationModel::white(), &grid, dt, 100, 5, 0).unwrap().smooth_gepsilon(eps).unwrap();
        assert!(real.increments.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 0.5);
    }

    #[test]
    fn pam_is_linear_in_initial_data() {
        let p = white_params(2.56, 128, 0.01, 0.3, 1.5);
        let sim = Simulation::new(p.clone()).unwrap();
        let a = InitialMeasure::dirac(1, &[0.3], 1.0).grid_project(&p.grid).unwrap().values;
        let b = InitialMeasure::lebesgue(1, 0.7).grid_project(&p.grid).unwrap().values;
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let mut members = [Member::new(a), Member::new(b), Member::new(ab)];
        sim.run_members(9, &mut members, None, |_, _| true).unwrap();
        for j in 0..128 {
            let s = members[0].values[j] + members[1].values[j];
            assert!((s - members[2].values[j]).abs() < 1e-10 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn filtered_member_sees_filtered_noise() {
        let p = white_params(2.56, 128, 0.01, 0.1, 0.0);
        let sim = Simulation::new(p).unwrap();
        let u0 = vec![1.0; 128];
        let mut members = [Member::new(u0.clone()), Member::filtered(u0, NoiseFilter::HeatSmooth(0.01))];
        sim.run_members(0, &mut members, None, |_, _| true).unwrap();
        assert_eq!(members[0].values, members[1].values);
    }
}
