//! Heat-kernel values, lattice heat semigroup and the jump-semigroup operators
//! `Δ^ε`, `G^ε`, `R^ε`.

pub mod lemmas;

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{FieldState, LatticeGrid};
use crate::special::{ln_gamma, upper_incomplete_gamma};
use crate::spectral::{plan_for, SpectralPlan, Workspace};

/// Default Poisson tail tolerance for the `R^ε` series.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Arguments of `G(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelQuery {
    pub t: f64,
    pub x: [f64; 2],
    pub dim: usize,
}

impl KernelQuery {
    pub fn new(t: f64, x: &[f64]) -> Self {
        let mut p = [0.0; 2];
        p[..x.len()].copy_from_slice(x);
        Self { t, x: p, dim: x.len() }
    }

    fn norm_sq(&self) -> f64 {
        self.x[..self.dim].iter().map(|v| v * v).sum()
    }
}

/// `(2πt)^{-d/2} exp(-|x|²/2t)`.
pub fn heat_kernel(q: KernelQuery) -> Result<f64> {
    if !(q.t > 0.0) {
        return Err(Error::domain(format!("heat kernel needs t > 0, got {}", q.t)));
    }
    if !(1..=2).contains(&q.dim) {
        return Err(Error::domain(format!("dimension {} unsupported", q.dim)));
    }
    Ok(gauss(q.t, q.norm_sq(), q.dim))
}

/// `ln G(t, x)`, finite where `G` itself underflows.
pub fn ln_heat_kernel(q: KernelQuery) -> Result<f64> {
    if !(q.t > 0.0) {
        return Err(Error::domain(format!("heat kernel needs t > 0, got {}", q.t)));
    }
    Ok(-0.5 * q.dim as f64 * (2.0 * PI * q.t).ln() - q.norm_sq() / (2.0 * q.t))
}

#[inline]
pub(crate) fn gauss(t: f64, r2: f64, dim: usize) -> f64 {
    (2.0 * PI * t).powf(-0.5 * dim as f64) * (-r2 / (2.0 * t)).exp()
}

#[inline]
pub(crate) fn gauss1(t: f64, x: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Lattice symbol of `G(t)` along one axis: the DFT of the periodized,
/// grid-sampled kernel normalized to unit mass. Nonnegative kernel, exact
/// mass, and equal to `exp(-tξ²/2)` up to aliasing of order `exp(-π²t/2Δx²)`.
fn heat_symbol_1d(grid: &LatticeGrid, t: f64) -> Vec<f64> {
    let n = grid.points();
    if t == 0.0 {
        return vec![1.0; n];
    }
    let line = LatticeGrid::new(1, grid.half_width(), n).expect("axis of a valid grid");
    let plan = SpectralPlan::new(line);
    let period = 2.0 * grid.half_width();
    let images = (10.0 * t.sqrt() / period).ceil() as i64 + 1;
    let mut kernel = plan.offsets(|[x, _]| {
        (-images..=images).map(|m| gauss1(t, x + m as f64 * period)).sum::<f64>()
    });
    let mass: f64 = kernel.iter().sum::<f64>() * line.spacing();
    if !(mass > 0.0) || !mass.is_finite() {
        // kernel narrower than the lattice resolves: the identity
        return vec![1.0; n];
    }
    kernel.iter_mut().for_each(|k| *k /= mass);
    let mut ws = Workspace::default();
    plan.kernel_symbol(&kernel, &mut ws)
}

/// Lattice symbol of the heat semigroup `G(t)` on `grid`.
pub fn heat_symbol(plan: &SpectralPlan, t: f64) -> Vec<f64> {
    let grid = plan.grid();
    let axis = heat_symbol_1d(grid, t);
    match grid.dim() {
        1 => axis,
        _ => {
            let n = grid.points();
            (0..grid.cells()).map(|idx| axis[idx / n] * axis[idx % n]).collect()
        }
    }
}

/// Precomputed lattice heat semigroup `G(t)` for a fixed `t`.
#[derive(Debug, Clone)]
pub struct HeatSemigroup {
    plan: Arc<SpectralPlan>,
    t: f64,
    symbol: Vec<f64>,
}

impl HeatSemigroup {
    pub fn new(grid: &LatticeGrid, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("semigroup time must be >= 0, got {t}")));
        }
        let plan = plan_for(grid)?;
        let symbol = heat_symbol(&plan, t);
        Ok(Self { plan, t, symbol })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn plan(&self) -> &Arc<SpectralPlan> {
        &self.plan
    }

    pub fn apply(&self, values: &mut [f64], ws: &mut Workspace) {
        if self.t == 0.0 {
            return;
        }
        self.plan.apply_symbol(values, &self.symbol, ws);
    }
}

/// Periodic convolution of a lattice field with `G(t, ·)`.
pub fn semigroup_apply(field: &FieldState, t: f64, grid: &LatticeGrid) -> Result<FieldState> {
    field.grid.ensure_same(grid)?;
    let sg = HeatSemigroup::new(grid, t)?;
    let mut out = field.clone();
    sg.apply(&mut out.values, &mut Workspace::default());
    Ok(out)
}

/// `g(t, r) = ∫_0^t G(s, r e_1) ds` through the incomplete-gamma closed form.
pub fn g_weight(t: f64, r: f64, dim: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("g(t, r) needs t > 0, got {t}")));
    }
    if !(r >= 0.0) {
        return Err(Error::domain(format!("g(t, r) needs r >= 0, got {r}")));
    }
    match dim {
        1 if r == 0.0 => Ok((2.0 * t / PI).sqrt()),
        1 => Ok(g_weight_1d(t, r)),
        2 if r == 0.0 => Err(Error::Pole("g(t, 0) diverges for d = 2".into())),
        2 => {
            let z = r * r / (2.0 * t);
            Ok(upper_incomplete_gamma(0.0, z) / (2.0 * PI))
        }
        _ => Err(Error::domain(format!("dimension {dim} unsupported"))),
    }
}

/// `d = 1` form `√(2t/π) e^{-r²/2t} - |r| erfc(|r|/√(2t))`, stable for all r.
pub(crate) fn g_weight_1d(t: f64, r: f64) -> f64 {
    let r = r.abs();
    if r == 0.0 {
        return (2.0 * t / PI).sqrt();
    }
    let z = r * r / (2.0 * t);
    if z < 30.0 {
        r * upper_incomplete_gamma(-0.5, z) / (2.0 * PI.sqrt())
    } else {
        // asymptotic series of Γ(-1/2, z) avoids the cancellation
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut a = -0.5 - 1.0;
        for _ in 0..30 {
            term *= a / z;
            sum += term;
            a -= 1.0;
            if term.abs() < 1e-17 {
                break;
            }
        }
        r * z.powf(-1.5) * (-z).exp() * sum / (2.0 * PI.sqrt())
    }
}

/// Poisson weights `e^{-λ} λ^n / n!` for `n ≥ 1`, truncated once the
/// cumulative mass (including `n = 0`) reaches `1 - tail_tol`.
pub fn poisson_terms(lambda: f64, tail_tol: f64) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    if lambda <= 0.0 {
        return out;
    }
    let mut cumulative = (-lambda).exp();
    let mut n = 1usize;
    let ln_l = lambda.ln();
    while cumulative < 1.0 - tail_tol {
        let w = (-lambda + n as f64 * ln_l - ln_gamma(n as f64 + 1.0)).exp();
        cumulative += w;
        out.push((n, w));
        n += 1;
        if n as f64 > lambda + 50.0 * lambda.sqrt() + 100.0 {
            break;
        }
    }
    out
}

/// Density of `R^ε(t) = e^{-t/ε} Σ_{n≥1} (t/ε)^n/n! G(nε)` at `x`.
pub fn r_epsilon_density(t: f64, x: &[f64], eps: f64, tail_tol: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::domain(format!("ε must be > 0, got {eps}")));
    }
    if !(t >= 0.0) {
        return Err(Error::domain(format!("t must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok(poisson_terms(t / eps, tail_tol)
        .into_iter()
        .map(|(n, w)| w * gauss(n as f64 * eps, r2, x.len()))
        .sum())
}

/// Lattice symbol of `Δ^ε = (G(ε) - I)/ε`.
pub fn delta_epsilon_symbol(plan: &SpectralPlan, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::domain(format!("ε must be > 0, got {eps}")));
    }
    Ok(heat_symbol(plan, eps).into_iter().map(|s| (s - 1.0) / eps).collect())
}

/// `Δ^ε u = (G(ε) u - u)/ε` on the lattice.
pub fn delta_epsilon_apply(field: &FieldState, eps: f64, grid: &LatticeGrid) -> Result<FieldState> {
    field.grid.ensure_same(grid)?;
    if !(eps > 0.0) {
        return Err(Error::domain(format!("ε must be > 0, got {eps}")));
    }
    let sg = HeatSemigroup::new(grid, eps)?;
    let mut out = field.clone();
    sg.apply(&mut out.values, &mut Workspace::default());
    for (o, u) in out.values.iter_mut().zip(&field.values) {
        *o = (*o - u) / eps;
    }
    Ok(out)
}

/// Lattice symbol of `G^ε(t) = exp(tΔ^ε) = e^{-t/ε} I + R^ε(t)`.
pub fn jump_semigroup_symbol(plan: &SpectralPlan, t: f64, eps: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("t must be >= 0, got {t}")));
    }
    Ok(delta_epsilon_symbol(plan, eps)?.into_iter().map(|s| (t * s).exp()).collect())
}

/// `G^ε(t) u` on the lattice.
pub fn jump_semigroup_apply(field: &FieldState, t: f64, eps: f64, grid: &LatticeGrid) -> Result<FieldState> {
    field.grid.ensure_same(grid)?;
    let plan = plan_for(grid)?;
    let symbol = jump_semigroup_symbol(&plan, t, eps)?;
    let mut out = field.clone();
    plan.apply_symbol(&mut out.values, &symbol, &mut Workspace::default());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, Tolerance};

    fn grid1(l: f64, n: usize) -> LatticeGrid {
        LatticeGrid::new(1, l, n).unwrap()
    }

    #[test]
    fn heat_kernel_values() {
        let v = heat_kernel(KernelQuery::new(1.0, &[0.0])).unwrap();
        assert!((v - 0.398_942_3).abs() < 1e-7);
        let v = heat_kernel(KernelQuery::new(2.0, &[0.0, 0.0])).unwrap();
        assert!((v - 0.079_577_5).abs() < 1e-7);
        let v = heat_kernel(KernelQuery::new(1.0, &[1.0])).unwrap();
        assert!((v - 0.241_970_7).abs() < 1e-7);
        let a = heat_kernel(KernelQuery::new(0.7, &[0.3, -1.1])).unwrap();
        let b = heat_kernel(KernelQuery::new(0.7, &[-0.3, 1.1])).unwrap();
        assert_eq!(a, b);
        assert!(heat_kernel(KernelQuery::new(0.0, &[0.0])).is_err());
        assert!(heat_kernel(KernelQuery::new(-1.0, &[0.0])).is_err());
    }

    #[test]
    fn semigroup_identity_and_constants() {
        let g = grid1(4.0, 64);
        let f = FieldState::from_fn(g, |[x, _]| (-x * x).exp() + 0.2 * x);
        let same = semigroup_apply(&f, 0.0, &g).unwrap();
        assert_eq!(same.values, f.values);
        let c = FieldState::constant(g, 3.5);
        let out = semigroup_apply(&c, 0.37, &g).unwrap();
        assert!(out.values.iter().all(|v| (v - 3.5).abs() < 1e-12));
    }

    #[test]
    fn semigroup_maps_gaussian_to_gaussian() {
        // √(s+t) ≤ L/6
        let g = grid1(6.0, 512);
        let (s, t) = (0.3, 0.5);
        let f = FieldState::from_fn(g, |[x, _]| gauss1(s, x));
        let out = semigroup_apply(&f, t, &g).unwrap();
        let expect = FieldState::from_fn(g, |[x, _]| gauss1(s + t, x));
        let scale = expect.max_abs();
        for (a, b) in out.values.iter().zip(&expect.values) {
            assert!((a - b).abs() <= 1e-8 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn semigroup_law_mass_and_positivity() {
        let g = grid1(3.0, 128);
        let f = FieldState::from_fn(g, |[x, _]| if x.abs() < 0.5 { 1.0 } else { 0.0 });
        let a = semigroup_apply(&semigroup_apply(&f, 0.05, &g).unwrap(), 0.1, &g).unwrap();
        let b = semigroup_apply(&f, 0.15, &g).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.mass() - f.mass()).abs() < 1e-12);
        // nonnegative up to FFT round-off, including very short times
        for t in [1e-6, 1e-4, 0.01] {
            let o = semigroup_apply(&f, t, &g).unwrap();
            assert!(o.values.iter().all(|v| *v > -1e-14), "t={t}");
        }
    }

    #[test]
    fn semigroup_rejects_mismatched_grid() {
        let f = FieldState::constant(grid1(1.0, 16), 1.0);
        assert!(matches!(semigroup_apply(&f, 0.1, &grid1(1.0, 32)), Err(Error::Shape(_))));
    }

    #[test]
    fn semigroup_2d_gaussian() {
        let g = LatticeGrid::new(2, 6.0, 64).unwrap();
        let f = FieldState::from_fn(g, |[x, y]| gauss(0.4, x * x + y * y, 2));
        let out = semigroup_apply(&f, 0.3, &g).unwrap();
        let expect = FieldState::from_fn(g, |[x, y]| gauss(0.7, x * x + y * y, 2));
        let scale = expect.max_abs();
        for (a, b) in out.values.iter().zip(&expect.values) {
            assert!((a - b).abs() < 1e-8 * scale);
        }
    }

    fn g_weight_quad(t: f64, r: f64, d: usize) -> f64 {
        integrate(|s| gauss(s, r * r, d), 0.0, t, Tolerance::new(1e-14, 1e-13)).unwrap().value
    }

    #[test]
    fn g_weight_values() {
        assert!((g_weight(1.0, 0.0, 1).unwrap() - 0.797_884_6).abs() < 1e-7);
        for &(t, r) in &[(1.0, 1.0), (0.5, 0.2), (2.0, 3.0), (1.0, 10.0), (0.01, 1.0)] {
            let closed = g_weight(t, r, 1).unwrap();
            let quad = g_weight_quad(t, r, 1);
            assert!((closed - quad).abs() <= 1e-8 * quad.max(1e-300), "t={t} r={r}: {closed} vs {quad}");
        }
        for &(t, r) in &[(1.0, 1.0), (0.5, 0.2), (2.0, 3.0)] {
            let closed = g_weight(t, r, 2).unwrap();
            let quad = g_weight_quad(t, r, 2);
            assert!((closed - quad).abs() <= 1e-8 * quad, "t={t} r={r}: {closed} vs {quad}");
        }
    }

    #[test]
    fn g_weight_monotone_and_poles() {
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let r = i as f64 * 0.05;
            let v = g_weight(1.0, r, 1).unwrap();
            assert!(v <= (2.0 / PI).sqrt() + 1e-15);
            if i > 0 {
                assert!(v < prev);
            }
            prev = v;
        }
        let mut last = 0.0;
        for k in 1..=6 {
            let v = g_weight(1.0, 10f64.powi(-k), 2).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(matches!(g_weight(1.0, 0.0, 2), Err(Error::Pole(_))));
        assert!(g_weight(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn r_epsilon_basics() {
        assert_eq!(r_epsilon_density(0.0, &[0.3], 0.1, DEFAULT_TAIL_TOL).unwrap(), 0.0);
        assert!(r_epsilon_density(1.0, &[0.0], 0.0, DEFAULT_TAIL_TOL).is_err());
        let eps = 0.1;
        let mass = integrate(
            |x| r_epsilon_density(1.0, &[x], eps, DEFAULT_TAIL_TOL).unwrap(),
            -15.0,
            15.0,
            Tolerance::new(1e-12, 1e-12),
        )
        .unwrap()
        .value;
        assert!((mass - (1.0 - (-10.0f64).exp())).abs() < 1e-6, "{mass}");
        assert!(r_epsilon_density(0.5, &[2.0], 0.2, DEFAULT_TAIL_TOL).unwrap() > 0.0);
    }

    #[test]
    fn delta_epsilon_constants_and_mode() {
        let g = grid1(2.0, 256);
        let c = FieldState::constant(g, 7.0);
        let z = delta_epsilon_apply(&c, 0.1, &g).unwrap();
        assert!(z.values.iter().all(|v| v.abs() < 1e-10));
        let xi = PI / 2.0;
        let eps = 0.1;
        let f = FieldState::from_fn(g, |[x, _]| (xi * x).cos());
        let out = delta_epsilon_apply(&f, eps, &g).unwrap();
        let factor = ((-eps * xi * xi / 2.0).exp() - 1.0) / eps;
        for (o, u) in out.values.iter().zip(&f.values) {
            assert!((o - factor * u).abs() < 1e-10);
        }
        assert!(delta_epsilon_apply(&f, 0.0, &g).is_err());
    }

    #[test]
    fn delta_epsilon_first_order_to_half_laplacian() {
        let g = grid1(4.0, 1024);
        let dx = g.spacing();
        let u = FieldState::from_fn(g, |[x, _]| (-x * x).exp());
        let n = u.values.len();
        let lap: Vec<f64> = (0..n)
            .map(|j| 0.5 * (u.values[(j + 1) % n] - 2.0 * u.values[j] + u.values[(j + n - 1) % n]) / (dx * dx))
            .collect();
        let err = |eps: f64| {
            let d = delta_epsilon_apply(&u, eps, &g).unwrap();
            d.values.iter().zip(&lap).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(0.02), err(0.01), err(0.005));
        // first order: halving ε halves the error
        assert!(e2 < e1 && e3 < e2);
        assert!((e1 / e2 - 2.0).abs() < 0.3, "{e1} {e2}");
        assert!((e2 / e3 - 2.0).abs() < 0.3, "{e2} {e3}");
    }

    #[test]
    fn jump_semigroup_matches_poisson_series() {
        // e^{-t/ε} u + R^ε(t) * u on a Gaussian bump
        let g = grid1(12.0, 1024);
        let (t, eps) = (0.3, 0.1);
        let u = FieldState::from_fn(g, |[x, _]| gauss1(0.2, x));
        let out = jump_semigroup_apply(&u, t, eps, &g).unwrap();
        let lam: f64 = t / eps;
        for j in (0..1024).step_by(17) {
            let x = g.coord(j);
            let series: f64 = (-lam).exp() * gauss1(0.2, x)
                + poisson_terms(lam, 1e-15).iter().map(|(n, w)| w * gauss1(0.2 + *n as f64 * eps, x)).sum::<f64>();
            assert!((out.values[j] - series).abs() < 1e-10, "{} vs {series}", out.values[j]);
        }
    }
}
