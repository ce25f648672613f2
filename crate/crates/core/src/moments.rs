//! `h_n`, `H(t;γ)`, the renewal growth rate and the p-th moment upper bound.

use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationModel, CorrelationVariant};
use crate::error::{Error, Result};
use crate::quad::{Estimate, Tolerance};

/// Product-integration settings for the weakly singular convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HConfig {
    /// Panels of the graded mesh `s_i = t (i/M)²` (the fine solve uses `2M`).
    pub panels: usize,
    pub richardson: bool,
    pub n_max: usize,
    pub tol: Tolerance,
}

impl Default for HConfig {
    fn default() -> Self {
        Self { panels: 512, richardson: true, n_max: 600, tol: Tolerance::default() }
    }
}

/// `k(τ) = τ^{-a} m(τ)` with `m` bounded near `τ = 0`.
pub struct KernelFactor {
    pub a: f64,
    m: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for KernelFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelFactor").field("a", &self.a).finish_non_exhaustive()
    }
}

impl KernelFactor {
    pub fn new(a: f64, m: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { a, m: Box::new(m) }
    }

    pub fn m(&self, tau: f64) -> f64 {
        (self.m)(tau)
    }

    /// The factorization of `k` for `model`. Tabulated spectra tabulate `m`
    /// in `log τ` once.
    pub fn for_model(model: &CorrelationModel) -> Result<Self> {
        let a = model.k_singularity();
        let d = model.dim() as f64;
        Ok(match model.variant() {
            CorrelationVariant::White => Self::new(0.5, |_| (2.0 * std::f64::consts::PI).powf(-0.5)),
            CorrelationVariant::Riesz { .. } => {
                let c = model.k_of_t(1.0)?;
                Self::new(a, move |_| c)
            }
            CorrelationVariant::Gaussian { ell } => {
                let l2 = ell * ell;
                Self::new(0.0, move |tau| (l2 / (tau + l2)).powf(d / 2.0))
            }
            CorrelationVariant::Tabulated(_) => {
                const LO: f64 = -12.0;
                const HI: f64 = 4.0;
                const PER_DECADE: usize = 12;
                let n = ((HI - LO) as usize) * PER_DECADE + 1;
                let logs: Vec<f64> = (0..n).map(|i| LO + i as f64 / PER_DECADE as f64).collect();
                let vals = logs
                    .iter()
                    .map(|&l| {
                        let tau = 10f64.powf(l);
                        Ok(tau.powf(a) * model.k_spectral(tau)?.value)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Self::new(a, move |tau| {
                    let l = tau.max(1e-300).log10().clamp(LO, HI);
                    let x = (l - LO) * PER_DECADE as f64;
                    let i = (x.floor() as usize).min(n - 2);
                    let w = x - i as f64;
                    vals[i] * (1.0 - w) + vals[i + 1] * w
                })
            }
        })
    }
}

/// Lower-triangular product-integration operator on the graded mesh:
/// `(Bφ)(s_i) ≈ ∫_0^{s_i} k(s_i - s) φ(s) ds` with exact moments of `τ^{-a}`
/// on each panel and linear interpolation of `φ·m`.
#[derive(Debug, Clone)]
pub struct ProductIntegration {
    pub mesh: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

fn power_moments(a: f64, lo: f64, hi: f64) -> (f64, f64) {
    let a0 = (hi.powf(1.0 - a) - lo.powf(1.0 - a)) / (1.0 - a);
    let a1 = (hi.powf(2.0 - a) - lo.powf(2.0 - a)) / (2.0 - a);
    (a0, a1)
}

impl ProductIntegration {
    pub fn graded(kernel: &KernelFactor, t: f64, panels: usize) -> Self {
        let mesh: Vec<f64> = (0..=panels).map(|i| t * (i as f64 / panels as f64).powi(2)).collect();
        Self::on_mesh(kernel, mesh)
    }

    pub fn on_mesh(kernel: &KernelFactor, mesh: Vec<f64>) -> Self {
        let a = kernel.a;
        let mut rows = Vec::with_capacity(mesh.len());
        for i in 0..mesh.len() {
            let mut row = vec![0.0; i + 1];
            for j in 0..i {
                let lo = mesh[i] - mesh[j + 1];
                let hi = mesh[i] - mesh[j];
                let (a0, a1) = power_moments(a, lo, hi);
                let slope = (a1 - lo * a0) / (hi - lo);
                row[j + 1] += kernel.m(lo) * (a0 - slope);
                row[j] += kernel.m(hi) * slope;
            }
            rows.push(row);
        }
        Self { mesh, rows }
    }

    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().zip(phi).map(|(w, p)| w * p).sum()).collect()
    }

    /// Solves `y = 1 + γ B y` by forward substitution.
    pub fn solve_renewal(&self, gamma: f64) -> Vec<f64> {
        let mut y: Vec<f64> = Vec::with_capacity(self.mesh.len());
        for row in &self.rows {
            let i = row.len() - 1;
            let known: f64 = row[..i].iter().zip(&y).map(|(w, v)| w * v).sum();
            y.push((1.0 + gamma * known) / (1.0 - gamma * row[i]));
        }
        y
    }
}

/// `[h_0(s_i), h_1(s_i), …]` on the graded mesh of `[0, t]`.
pub fn h_on_mesh(kernel: &KernelFactor, t: f64, n_max: usize, panels: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let pi = ProductIntegration::graded(kernel, t, panels);
    let mut out = vec![vec![1.0; pi.mesh.len()]];
    for _ in 0..n_max {
        let next = pi.apply(out.last().unwrap());
        out.push(next);
    }
    (pi.mesh, out)
}

fn richardson(coarse: f64, fine: f64) -> Estimate {
    let diff = fine - coarse;
    Estimate::new(fine + diff / 3.0, diff.abs() / 3.0)
}

/// `h_0(t), …, h_{n_max}(t)` with `h_n = h_{n-1} * k`, each with an error estimate.
pub fn h_sequence(model: &CorrelationModel, t: f64, n_max: usize, cfg: &HConfig) -> Result<Vec<Estimate>> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("h_n(t) needs t > 0, got {t}")));
    }
    let kernel = KernelFactor::for_model(model)?;
    let fine = h_on_mesh(&kernel, t, n_max, 2 * cfg.panels).1;
    let out: Vec<Estimate> = if cfg.richardson {
        let coarse = h_on_mesh(&kernel, t, n_max, cfg.panels).1;
        coarse.iter().zip(&fine).map(|(c, f)| richardson(*c.last().unwrap(), *f.last().unwrap())).collect()
    } else {
        fine.iter().map(|f| Estimate::new(*f.last().unwrap(), f64::NAN)).collect()
    };
    if let Some(bad) = out.iter().position(|e| !e.value.is_finite()) {
        return Err(Error::Numeric { what: format!("h_{bad}({t})"), value: out[bad].value, error: out[bad].error });
    }
    Ok(out)
}

/// `H(t;γ) = Σ γ^n h_n(t)`, summed until a term drops below `tol.rel × partial`.
#[allow(non_snake_case)]
pub fn H_series(model: &CorrelationModel, t: f64, gamma: f64, cfg: &HConfig) -> Result<Estimate> {
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("H(t;γ) needs γ >= 0, got {gamma}")));
    }
    if !(t >= 0.0) {
        return Err(Error::domain(format!("H(t;γ) needs t >= 0, got {t}")));
    }
    if gamma == 0.0 || t == 0.0 {
        return Ok(Estimate::exact(1.0));
    }
    let kernel = KernelFactor::for_model(model)?;
    let run = |panels: usize| -> Result<(f64, usize)> {
        let pi = ProductIntegration::graded(&kernel, t, panels);
        let mut h = vec![1.0; pi.mesh.len()];
        let mut partial = 1.0;
        let mut scale = 1.0;
        for n in 1..=cfg.n_max {
            h = pi.apply(&h);
            scale *= gamma;
            let term = scale * h.last().unwrap();
            partial += term;
            if !partial.is_finite() {
                return Err(Error::Truncation { terms: n, partial, last_term: term });
            }
            if term < cfg.tol.rel * partial && n >= 2 {
                return Ok((partial, n));
            }
        }
        let term = scale * h.last().unwrap();
        Err(Error::Truncation { terms: cfg.n_max, partial, last_term: term })
    };
    let (fine, n) = run(2 * cfg.panels)?;
    if !cfg.richardson {
        return Ok(Estimate::new(fine, fine * cfg.tol.rel));
    }
    let (coarse, _) = run(cfg.panels)?;
    let r = richardson(coarse, fine);
    let _ = n;
    Ok(Estimate::new(r.value, r.error + fine * cfg.tol.rel))
}

/// `H(t;γ)` from the renewal equation `H = 1 + γ k * H`, solved directly.
pub fn h_renewal(model: &CorrelationModel, t: f64, gamma: f64, cfg: &HConfig) -> Result<Estimate> {
    if t == 0.0 || gamma == 0.0 {
        return Ok(Estimate::exact(1.0));
    }
    let kernel = KernelFactor::for_model(model)?;
    let fine = *ProductIntegration::graded(&kernel, t, 2 * cfg.panels).solve_renewal(gamma).last().unwrap();
    let coarse = *ProductIntegration::graded(&kernel, t, cfg.panels).solve_renewal(gamma).last().unwrap();
    Ok(richardson(coarse, fine))
}

/// `inf{β > 0 : Υ(β) < 1/γ}` by bisection on the strictly decreasing `Υ`.
pub fn growth_rate_bound(model: &CorrelationModel, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("growth rate needs γ >= 0, got {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    if let CorrelationVariant::White = model.variant() {
        return Ok(gamma * gamma / 4.0);
    }
    let target = 1.0 / gamma;
    let mut hi = 1.0;
    while model.upsilon(hi)? >= target {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Convergence("Υ(β) never drops below 1/γ".into()));
        }
    }
    let mut lo = hi / 2.0;
    let mut halvings = 0;
    while model.upsilon(lo)? < target {
        lo /= 2.0;
        halvings += 1;
        if halvings > 200 {
            return Ok(0.0);
        }
    }
    // bisect in log β
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if model.upsilon(mid)? < target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok(hi)
}

/// Exponential rate `θ` of `H(t;γ)`: the root of `γ k̂(θ) = 1`, i.e.
/// half of `growth_rate_bound(model, 2γ)`.
pub fn renewal_rate(model: &CorrelationModel, gamma: f64) -> Result<f64> {
    Ok(growth_rate_bound(model, 2.0 * gamma)? / 2.0)
}

/// `ln H(t;γ)`: the series while it is summable in `f64`, otherwise the
/// renewal asymptotic `θt - ln(θ γ (-k̂'(θ)))`.
pub fn ln_h(model: &CorrelationModel, t: f64, gamma: f64, cfg: &HConfig) -> Result<Estimate> {
    if gamma == 0.0 || t == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let theta = renewal_rate(model, gamma)?;
    if theta * t < 30.0 {
        match H_series(model, t, gamma, cfg) {
            Ok(h) => return Ok(Estimate::new(h.value.ln(), h.error / h.value)),
            Err(Error::Truncation { .. }) if theta * t >= 10.0 => {}
            Err(e) => return Err(e),
        }
    }
    // -k̂'(θ) = 4 (2π)^{-d} ∫ f̂ / (2θ + |ξ|²)²
    let slope = match model.variant() {
        CorrelationVariant::White => (2.0 * theta).powf(-1.5),
        _ => {
            4.0 * model
                .radial_spectral_integral(|r| (2.0 * theta + r * r).powi(-2), Tolerance::new(1e-300, 1e-11))?
                .value
        }
    };
    let value = theta * t - (theta * gamma * slope).ln();
    Ok(Estimate::new(value, (1.0 + theta * t) * (-theta * t).exp()))
}

/// Lipschitz data of `ρ` entering the moment bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoParams {
    pub lip: f64,
    pub rho0: f64,
}

impl RhoParams {
    pub fn new(lip: f64, rho0: f64) -> Result<Self> {
        if !(lip > 0.0 && lip.is_finite()) {
            return Err(Error::Validation(vec![format!("rho: Lipschitz constant must be > 0, got {lip}")]));
        }
        Ok(Self { lip, rho0 })
    }

    /// `v = |ρ(0)| / Lip_ρ`.
    pub fn v(&self) -> f64 {
        self.rho0.abs() / self.lip
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBound {
    pub p: f64,
    pub gamma_p: f64,
    pub ln_h: Estimate,
    /// `ln(√2 (v + √2 j0) H^{1/2})`.
    pub ln_bound: f64,
    /// `exp(ln_bound)`; infinite when it overflows.
    pub bound: f64,
    /// `C` in `exp(C p^{1/α} t)` from the renewal rate (reported only).
    pub exp_form_c: f64,
}

/// `√2 [v + √2 j0_abs] H(t; 32 p Lip_ρ²)^{1/2}`.
pub fn moment_upper_bound(
    p: f64,
    rho: RhoParams,
    j0_abs: f64,
    t: f64,
    model: &CorrelationModel,
    cfg: &HConfig,
) -> Result<MomentBound> {
    if !(p >= 2.0) {
        return Err(Error::domain(format!("moment bound needs p >= 2, got {p}")));
    }
    if !(j0_abs >= 0.0) {
        return Err(Error::domain(format!("|μ|*G must be >= 0, got {j0_abs}")));
    }
    let gamma_p = 32.0 * p * rho.lip * rho.lip;
    let lh = ln_h(model, t, gamma_p, cfg)?;
    let prefactor = std::f64::consts::SQRT_2 * (rho.v() + std::f64::consts::SQRT_2 * j0_abs);
    let ln_bound = prefactor.ln() + 0.5 * lh.value;
    let alpha = model.dalang_alpha();
    let exp_form_c = renewal_rate(model, gamma_p)? / (2.0 * p.powf(1.0 / alpha));
    Ok(MomentBound { p, gamma_p, ln_h: lh, ln_bound, bound: ln_bound.exp(), exp_form_c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{gamma as gamma_fn, ln_mittag_leffler_half, mittag_leffler_half};
    use proptest::prelude::*;

    fn white_h(n: usize, t: f64) -> f64 {
        (t / 2.0).powf(n as f64 / 2.0) / gamma_fn(1.0 + n as f64 / 2.0)
    }

    #[test]
    fn white_h_closed_form() {
        let w = CorrelationModel::white();
        let h = h_sequence(&w, 1.0, 6, &HConfig::default()).unwrap();
        assert_eq!(h[0].value, 1.0);
        assert!((h[1].value - 0.797_884_6).abs() < 1e-7);
        assert!((h[2].value - 0.5).abs() < 1e-9);
        for (n, e) in h.iter().enumerate() {
            let exact = white_h(n, 1.0);
            assert!((e.value - exact).abs() < 1e-9, "n={n}: {} vs {exact}", e.value);
            assert!((e.value - exact).abs() <= 10.0 * e.error + 1e-12, "n={n}: estimate {}", e.error);
        }
    }

    #[test]
    fn riesz_h1_closed_form() {
        let r = CorrelationModel::riesz(1, 0.5).unwrap();
        let h = h_sequence(&r, 1.0, 3, &HConfig::default()).unwrap();
        let k1 = r.k_of_t(1.0).unwrap();
        assert!((h[1].value - k1 / 0.75).abs() < 1e-9);
        assert!((h[1].value - 2.29343).abs() < 1e-5);
        // h_n = (c Γ(1-b))^n t^{n(1-b)} / Γ(1 + n(1-b)) with b = β/2
        let b: f64 = 0.25;
        let h2 = k1 * k1 * gamma_fn(1.0 - b).powi(2) / gamma_fn(3.0 - 2.0 * b);
        assert!((h[2].value - h2).abs() < 1e-8 * h2);
    }

    #[test]
    fn gaussian_h1_closed_form() {
        // ∫_0^t (1+s)^{-1/2} ds = 2(√(1+t) - 1)
        let g = CorrelationModel::gaussian(1, 1.0).unwrap();
        let h = h_sequence(&g, 2.0, 1, &HConfig::default()).unwrap();
        assert!((h[1].value - 2.0 * (3f64.sqrt() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn h_nondecreasing_in_t() {
        let k = KernelFactor::for_model(&CorrelationModel::riesz(1, 0.5).unwrap()).unwrap();
        let (_, h) = h_on_mesh(&k, 2.0, 5, 64);
        for hn in &h {
            assert!(hn.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn h_series_mittag_leffler() {
        let w = CorrelationModel::white();
        let cfg = HConfig::default();
        let h = H_series(&w, 2.0, 1.0, &cfg).unwrap();
        let exact = std::f64::consts::E * crate::special::erfc(-1.0);
        assert!((h.value - exact).abs() < 1e-6, "{} vs {exact}", h.value);
        assert!((exact - 5.00898).abs() < 1e-5);
        let h1 = H_series(&w, 1.0, 1.0, &cfg).unwrap();
        let ml = mittag_leffler_half(0.5f64.sqrt());
        assert!((h1.value - ml).abs() < 1e-8, "{} vs {ml}", h1.value);
        assert_eq!(H_series(&w, 1.0, 0.0, &cfg).unwrap().value, 1.0);
    }

    #[test]
    fn renewal_route_matches_series() {
        let cfg = HConfig::default();
        for m in [CorrelationModel::white(), CorrelationModel::riesz(1, 0.5).unwrap(), CorrelationModel::gaussian(2, 0.5).unwrap()] {
            let a = H_series(&m, 1.0, 2.0, &cfg).unwrap().value;
            let b = h_renewal(&m, 1.0, 2.0, &cfg).unwrap().value;
            assert!((a - b).abs() < 1e-8 * a, "{m:?}: {a} vs {b}");
        }
    }

    #[test]
    fn h_series_truncation_error() {
        let cfg = HConfig { n_max: 50, ..HConfig::default() };
        let err = H_series(&CorrelationModel::white(), 1.0, 64.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn growth_rate_values() {
        let w = CorrelationModel::white();
        assert_eq!(growth_rate_bound(&w, 2.0).unwrap(), 1.0);
        assert_eq!(growth_rate_bound(&w, 0.0).unwrap(), 0.0);
        let r = CorrelationModel::riesz(1, 0.5).unwrap();
        let root = growth_rate_bound(&r, 1.0).unwrap();
        assert!((r.upsilon(root).unwrap() - 1.0).abs() < 1e-8);
        let g = CorrelationModel::gaussian(1, 1.0).unwrap();
        let root = growth_rate_bound(&g, 3.0).unwrap();
        assert!((g.upsilon(root).unwrap() * 3.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ln_h_matches_mittag_leffler_for_large_gamma() {
        let w = CorrelationModel::white();
        let cfg = HConfig::default();
        for (t, g) in [(1.0, 64.0), (0.25, 128.0), (1.0, 8.0), (1.0, 2.0)] {
            let z = g * (t / 2.0f64).sqrt();
            let exact = ln_mittag_leffler_half(z);
            let got = ln_h(&w, t, g, &cfg).unwrap();
            assert!((got.value - exact).abs() < 1e-6 * exact.max(1.0), "t={t} γ={g}: {} vs {exact}", got.value);
        }
    }

    #[test]
    fn ln_h_asymptotic_continuous_for_riesz() {
        // both routes near the switch point agree
        let r = CorrelationModel::riesz(1, 0.5).unwrap();
        let cfg = HConfig::default();
        let gamma = 6.0;
        let theta = renewal_rate(&r, gamma).unwrap();
        let t = 25.0 / theta;
        let series = H_series(&r, t, gamma, &cfg).unwrap().value.ln();
        let k = KernelFactor::for_model(&r).unwrap();
        let _ = k;
        let slope = 4.0
            * r.radial_spectral_integral(|x| (2.0 * theta + x * x).powi(-2), Tolerance::new(1e-300, 1e-11))
                .unwrap()
                .value;
        let asym = theta * t - (theta * gamma * slope).ln();
        assert!((series - asym).abs() < 1e-6 * series, "{series} vs {asym}");
    }

    #[test]
    fn log_h_rate_tracks_renewal_rate() {
        let w = CorrelationModel::white();
        let cfg = HConfig::default();
        for lambda in [0.5f64, 1.0, 1.5] {
            let gamma = lambda * lambda;
            let rate = ln_h(&w, 400.0, gamma, &cfg).unwrap().value / 400.0;
            let bound = growth_rate_bound(&w, 2.0 * gamma).unwrap();
            assert!(rate < bound + 0.05, "λ={lambda}: {rate} vs {bound}");
            assert!((rate - renewal_rate(&w, gamma).unwrap()).abs() < 0.01);
        }
    }

    #[test]
    fn growth_rate_bound_is_off_by_factor_two_for_white_noise() {
        // lim (1/t) ln H(t;γ) = γ²/2 for white noise, while inf{β : Υ(β) < 1/γ} = γ²/4
        let w = CorrelationModel::white();
        let gamma: f64 = 2.0;
        let rate = ln_h(&w, 200.0, gamma, &HConfig::default()).unwrap().value / 200.0;
        assert!((rate - gamma * gamma / 2.0).abs() < 0.01);
        assert!(rate > growth_rate_bound(&w, gamma).unwrap() * 1.9);
    }

    #[test]
    fn moment_bound_values() {
        let w = CorrelationModel::white();
        let cfg = HConfig::default();
        let pam = RhoParams::new(1.0, 0.0).unwrap();
        let b = moment_upper_bound(2.0, pam, 1.0, 1.0, &w, &cfg).unwrap();
        assert_eq!(b.gamma_p, 64.0);
        let z = 64.0 / 2f64.sqrt();
        let expect = 2f64.ln() + 0.5 * ln_mittag_leffler_half(z);
        assert!((b.ln_bound - expect).abs() < 1e-6 * expect);
        let b0 = moment_upper_bound(2.0, RhoParams::new(2.0, 1.0).unwrap(), 0.3, 0.0, &w, &cfg).unwrap();
        assert!((b0.bound - 2f64.sqrt() * (0.5 + 2f64.sqrt() * 0.3)).abs() < 1e-14);
        assert!(moment_upper_bound(1.5, pam, 1.0, 1.0, &w, &cfg).is_err());
        // white noise: θ(γ_p) = γ_p²/2 so C = 32²/4 = 256, independent of p
        let b4 = moment_upper_bound(4.0, pam, 1.0, 1.0, &w, &cfg).unwrap();
        assert!((b.exp_form_c - 256.0).abs() < 1e-9 && (b4.exp_form_c - 256.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn h_monotone_in_t_and_gamma(t in 0.05f64..2.0, dt in 0.01f64..1.0, g in 0.0f64..3.0, dg in 0.01f64..1.0) {
            let m = CorrelationModel::riesz(1, 0.5).unwrap();
            let cfg = HConfig { panels: 64, ..HConfig::default() };
            let base = H_series(&m, t, g, &cfg).unwrap().value;
            prop_assert!(base >= 1.0);
            prop_assert!(H_series(&m, t + dt, g, &cfg).unwrap().value >= base);
            prop_assert!(H_series(&m, t, g + dg, &cfg).unwrap().value >= base);
        }

        #[test]
        fn upsilon_gamma_consistency(g in 0.1f64..20.0, f in 0.5f64..2.0) {
            let m = CorrelationModel::riesz(1, 0.5).unwrap();
            let root = growth_rate_bound(&m, g).unwrap();
            let beta = root * f;
            if (f - 1.0).abs() > 1e-6 {
                prop_assert_eq!(m.upsilon(beta).unwrap() * g < 1.0, beta > root);
            }
        }
    }
}
