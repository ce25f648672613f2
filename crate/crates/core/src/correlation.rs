//! Spatial correlation models `f` with their spectral densities `f̂`, the
//! Dalang functionals `Υ(β)` and `k(t)`, and mollified correlations.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, Estimate, Tolerance};
use crate::special::{gamma, unit_sphere_area};

/// Points used by the power-tail fit of a tabulated spectrum.
const TAIL_FIT_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedSpectrum {
    xi: Vec<f64>,
    fhat: Vec<f64>,
    /// `f̂(ξ) ≈ fhat_last (ξ/ξ_last)^tail_power` beyond the table.
    tail_power: f64,
}

impl TabulatedSpectrum {
    pub fn new(xi: Vec<f64>, fhat: Vec<f64>) -> Result<Self> {
        let mut errs = Vec::new();
        if xi.len() != fhat.len() {
            errs.push(format!("model.table: {} xi values but {} fhat values", xi.len(), fhat.len()));
        }
        if xi.len() < 2 {
            errs.push("model.table: need at least two rows".into());
        }
        if xi.first().is_some_and(|x| *x < 0.0) {
            errs.push("model.table: xi must be >= 0".into());
        }
        if xi.windows(2).any(|w| !(w[1] > w[0])) {
            errs.push("model.table: xi must be strictly increasing".into());
        }
        if fhat.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            errs.push("model.table: fhat must be finite and nonnegative".into());
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let tail: Vec<(f64, f64)> = xi
            .iter()
            .zip(&fhat)
            .rev()
            .take(TAIL_FIT_POINTS)
            .filter(|(x, f)| **x > 0.0 && **f > 0.0)
            .map(|(x, f)| (x.ln(), f.ln()))
            .collect();
        let tail_power = if fhat.last() == Some(&0.0) || tail.len() < 2 {
            f64::NEG_INFINITY
        } else {
            least_squares_slope(&tail)
        };
        Ok(Self { xi, fhat, tail_power })
    }

    /// Two-column text table `xi fhat` (whitespace or comma separated, `#` comments).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut xi = Vec::new();
        let mut fhat = Vec::new();
        let mut errs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            match cols.as_slice() {
                [a, b] => match (a.parse::<f64>(), b.parse::<f64>()) {
                    (Ok(a), Ok(b)) => {
                        xi.push(a);
                        fhat.push(b);
                    }
                    _ => errs.push(format!("{}:{}: not two numbers", path.display(), lineno + 1)),
                },
                _ => errs.push(format!("{}:{}: expected two columns", path.display(), lineno + 1)),
            }
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        Self::new(xi, fhat)
    }

    pub fn tail_power(&self) -> f64 {
        self.tail_power
    }

    pub fn eval(&self, r: f64) -> f64 {
        let n = self.xi.len();
        if r <= self.xi[0] {
            return self.fhat[0];
        }
        if r >= self.xi[n - 1] {
            if self.tail_power == f64::NEG_INFINITY {
                return 0.0;
            }
            return self.fhat[n - 1] * (r / self.xi[n - 1]).powf(self.tail_power);
        }
        let i = self.xi.partition_point(|x| *x <= r) - 1;
        let (x0, x1, f0, f1) = (self.xi[i], self.xi[i + 1], self.fhat[i], self.fhat[i + 1]);
        if x0 > 0.0 && f0 > 0.0 && f1 > 0.0 {
            let w = (r / x0).ln() / (x1 / x0).ln();
            (f0.ln() * (1.0 - w) + f1.ln() * w).exp()
        } else {
            f0 + (f1 - f0) * (r - x0) / (x1 - x0)
        }
    }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum CorrelationVariant {
    White,
    Riesz { beta: f64 },
    Gaussian { ell: f64 },
    Tabulated(TabulatedSpectrum),
}

/// Isotropic correlation `f` on `ℝ^d`, described by its radial spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModel {
    variant: CorrelationVariant,
    dim: usize,
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=2).contains(&dim) {
        Ok(())
    } else {
        Err(Error::Validation(vec![format!("model.dimension must be 1 or 2, got {dim}")]))
    }
}

impl CorrelationModel {
    pub fn white() -> Self {
        Self { variant: CorrelationVariant::White, dim: 1 }
    }

    pub fn white_in(dim: usize) -> Result<Self> {
        if dim != 1 {
            return Err(Error::Validation(vec![
                "model: white noise needs dimension 1 (no random-field solution for d >= 2)".into(),
            ]));
        }
        Ok(Self::white())
    }

    pub fn riesz(dim: usize, beta: f64) -> Result<Self> {
        check_dim(dim)?;
        let upper = (dim as f64).min(2.0);
        if !(beta > 0.0 && beta < upper) {
            return Err(Error::Validation(vec![format!("model.beta must lie in (0, {upper}), got {beta}")]));
        }
        Ok(Self { variant: CorrelationVariant::Riesz { beta }, dim })
    }

    pub fn gaussian(dim: usize, ell: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::Validation(vec![format!("model.ell must be > 0, got {ell}")]));
        }
        Ok(Self { variant: CorrelationVariant::Gaussian { ell }, dim })
    }

    pub fn tabulated(dim: usize, table: TabulatedSpectrum) -> Result<Self> {
        check_dim(dim)?;
        if table.tail_power + dim as f64 >= 2.0 {
            return Err(Error::Validation(vec![format!(
                "model.table: fitted tail |ξ|^{:.3} violates Dalang's condition in d = {dim}",
                table.tail_power
            )]));
        }
        Ok(Self { variant: CorrelationVariant::Tabulated(table), dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variant(&self) -> &CorrelationVariant {
        &self.variant
    }

    /// Canonical text description, used for hashing realizations.
    pub fn describe(&self) -> String {
        match &self.variant {
            CorrelationVariant::White => "white;d=1".into(),
            CorrelationVariant::Riesz { beta } => format!("riesz;d={};beta={beta:e}", self.dim),
            CorrelationVariant::Gaussian { ell } => format!("gaussian;d={};ell={ell:e}", self.dim),
            CorrelationVariant::Tabulated(t) => {
                let mut s = format!("tabulated;d={}", self.dim);
                for (x, f) in t.xi.iter().zip(&t.fhat) {
                    s.push_str(&format!(";{x:e}:{f:e}"));
                }
                s
            }
        }
    }

    /// `c_{d,β}` in `F|x|^{-β} = c_{d,β} |ξ|^{β-d}`.
    pub fn riesz_constant(dim: usize, beta: f64) -> f64 {
        let d = dim as f64;
        2f64.powf(d - beta) * PI.powf(d / 2.0) * gamma((d - beta) / 2.0) / gamma(beta / 2.0)
    }

    /// Radial spectral density `f̂(|ξ|)`.
    pub fn fhat(&self, r: f64) -> f64 {
        let d = self.dim as f64;
        match &self.variant {
            CorrelationVariant::White => 1.0,
            CorrelationVariant::Riesz { beta } => Self::riesz_constant(self.dim, *beta) * r.powf(beta - d),
            CorrelationVariant::Gaussian { ell } => (2.0 * PI * ell * ell).powf(d / 2.0) * (-ell * ell * r * r / 2.0).exp(),
            CorrelationVariant::Tabulated(t) => t.eval(r),
        }
    }

    /// Real-space correlation `f(|x|)`; `None` for white noise (a δ) and tabulated spectra.
    pub fn f_real(&self, r: f64) -> Option<f64> {
        match &self.variant {
            CorrelationVariant::Riesz { beta } => Some(r.powf(-beta)),
            CorrelationVariant::Gaussian { ell } => Some((-r * r / (2.0 * ell * ell)).exp()),
            _ => None,
        }
    }

    /// Exponent `e` of `f̂(r) ~ r^e` as `r → ∞`.
    pub fn spectral_tail_power(&self) -> f64 {
        match &self.variant {
            CorrelationVariant::White => 0.0,
            CorrelationVariant::Riesz { beta } => beta - self.dim as f64,
            CorrelationVariant::Gaussian { .. } => f64::NEG_INFINITY,
            CorrelationVariant::Tabulated(t) => t.tail_power,
        }
    }

    /// Exponent `s` of `f̂(r) r^{d-1} ~ r^s` as `r → 0`.
    fn head_power(&self) -> f64 {
        match &self.variant {
            CorrelationVariant::White => 0.0,
            CorrelationVariant::Riesz { beta } => beta - 1.0,
            _ => self.dim as f64 - 1.0,
        }
    }

    /// `a` in `k(τ) = τ^{-a} m(τ)` with `m` bounded near 0.
    pub fn k_singularity(&self) -> f64 {
        ((self.spectral_tail_power() + self.dim as f64) / 2.0).max(0.0)
    }

    /// `(2π)^{-d} |S^{d-1}| ∫_0^∞ f̂(r) g(r) r^{d-1} dr` for radial `g`.
    pub fn radial_spectral_integral(&self, g: impl Fn(f64) -> f64, tol: Tolerance) -> Result<Estimate> {
        let d = self.dim as f64;
        let s = self.head_power();
        let p = 1.0 / (s + 1.0);
        // r = u^p on [0,1] flattens the r^s head; r = 1/u on [1, ∞)
        let head = integrate(
            |u: f64| {
                if u <= 0.0 {
                    return 0.0;
                }
                let r = u.powf(p);
                // f̂(r) r^{d-1} dr = f̂(r) r^{d-1} p u^{p-1} du = p f̂(r) r^{d-1-s} du
                p * self.fhat(r) * r.powf(d - 1.0 - s) * g(r)
            },
            0.0,
            1.0,
            tol,
        )?;
        let tail = integrate(
            |u: f64| {
                if u <= 0.0 {
                    return 0.0;
                }
                let r = 1.0 / u;
                let v = self.fhat(r) * g(r) * r.powf(d + 1.0);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            },
            0.0,
            1.0,
            tol,
        )?;
        let scale = unit_sphere_area(self.dim) / (2.0 * PI).powf(d);
        Ok((head + tail) * scale)
    }

    /// `Υ(β) = (2π)^{-d} ∫ f̂(ξ) / (β + |ξ|²) dξ`.
    pub fn upsilon(&self, beta: f64) -> Result<f64> {
        if !(beta > 0.0) {
            return Err(Error::domain(format!("Υ(β) needs β > 0, got {beta}")));
        }
        match &self.variant {
            CorrelationVariant::White => Ok(0.5 / beta.sqrt()),
            CorrelationVariant::Riesz { beta: br } => {
                let d = self.dim as f64;
                let c = Self::riesz_constant(self.dim, *br);
                Ok(c * unit_sphere_area(self.dim) / (2.0 * PI).powf(d) * (PI / 2.0) * beta.powf(br / 2.0 - 1.0)
                    / (PI * br / 2.0).sin())
            }
            _ => Ok(self.upsilon_quadrature(beta)?.value),
        }
    }

    /// Quadrature evaluation of `Υ(β)` regardless of closed forms.
    pub fn upsilon_quadrature(&self, beta: f64) -> Result<Estimate> {
        if !(beta > 0.0) {
            return Err(Error::domain(format!("Υ(β) needs β > 0, got {beta}")));
        }
        self.radial_spectral_integral(|r| 1.0 / (beta + r * r), Tolerance::new(1e-13, 1e-11))
    }

    /// Laplace transform `∫_0^∞ e^{-λt} k(t) dt = 2Υ(2λ)`.
    pub fn k_laplace(&self, lambda: f64) -> Result<f64> {
        Ok(2.0 * self.upsilon(2.0 * lambda)?)
    }

    /// Supremal α with `∫ (1+|ξ|²)^{α-1} f̂(dξ) < ∞`, clipped to (0, 1].
    pub fn dalang_alpha(&self) -> f64 {
        let a = 1.0 - (self.spectral_tail_power() + self.dim as f64) / 2.0;
        a.min(1.0)
    }

    /// `k(t) = ∫ f(z) G(t, z) dz`.
    pub fn k_of_t(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("k(t) needs t > 0, got {t}")));
        }
        let d = self.dim as f64;
        match &self.variant {
            CorrelationVariant::White => Ok((2.0 * PI * t).powf(-0.5)),
            CorrelationVariant::Riesz { beta } => {
                Ok(t.powf(-beta / 2.0) * 2f64.powf(-beta / 2.0) * gamma((d - beta) / 2.0) / gamma(d / 2.0))
            }
            CorrelationVariant::Gaussian { ell } => Ok((ell * ell / (t + ell * ell)).powf(d / 2.0)),
            CorrelationVariant::Tabulated(_) => Ok(self.k_spectral(t)?.value),
        }
    }

    /// `k(t) = (2π)^{-d} ∫ f̂(ξ) e^{-t|ξ|²/2} dξ` by quadrature.
    pub fn k_spectral(&self, t: f64) -> Result<Estimate> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("k(t) needs t > 0, got {t}")));
        }
        self.radial_spectral_integral(|r| (-t * r * r / 2.0).exp(), Tolerance::new(1e-13, 1e-10))
    }

    /// `k(t) = |S^{d-1}| ∫_0^∞ f(r) G(t, r) r^{d-1} dr` by quadrature; `None`
    /// when no real-space form is available.
    pub fn k_real_space(&self, t: f64) -> Result<Option<Estimate>> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("k(t) needs t > 0, got {t}")));
        }
        if self.f_real(1.0).is_none() {
            return Ok(None);
        }
        let d = self.dim as f64;
        // r = √t·u^2 removes the r^{-β} head singularity
        let sq = t.sqrt();
        let v = integrate(
            |u: f64| {
                if u <= 0.0 {
                    return 0.0;
                }
                let r = sq * u * u;
                let f = self.f_real(r).unwrap();
                f * crate::kernels::gauss(t, r * r, self.dim) * r.powf(d - 1.0) * 2.0 * sq * u
            },
            0.0,
            8.0,
            Tolerance::new(1e-13, 1e-10),
        )?;
        Ok(Some(v * unit_sphere_area(self.dim)))
    }
}

/// Mollifier shapes. The triangle has product form; tables give a radial `φ̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum MollifierShape {
    Triangle,
    Tabulated { xi: Vec<f64>, phihat: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub shape: MollifierShape,
    pub eps: f64,
}

/// `2(1 - cos ξ)/ξ²`, with the removable singularity filled in.
fn triangle_hat_1d(xi: f64) -> f64 {
    if xi.abs() < 1e-4 {
        // series 1 - ξ²/12 + ξ⁴/360
        let x2 = xi * xi;
        1.0 - x2 / 12.0 + x2 * x2 / 360.0
    } else {
        // 1 - cos ξ = 2 sin²(ξ/2) avoids cancellation
        let s = (xi / 2.0).sin();
        4.0 * s * s / (xi * xi)
    }
}

/// `(φ(x), φ̂(ξ))` for the product triangle `φ(x) = ∏ (1 - |x_i|)_+`.
pub fn triangle_mollifier_eval(x: &[f64], xi: &[f64]) -> (f64, f64) {
    let phi = x.iter().map(|v| (1.0 - v.abs()).max(0.0)).product();
    let hat = xi.iter().map(|v| triangle_hat_1d(*v)).product();
    (phi, hat)
}

impl Mollifier {
    pub fn triangle(eps: f64) -> Result<Self> {
        Self::new(MollifierShape::Triangle, eps)
    }

    pub fn new(shape: MollifierShape, eps: f64) -> Result<Self> {
        let mut errs = Vec::new();
        if !(eps > 0.0) {
            errs.push(format!("mollifier.eps must be > 0, got {eps}"));
        }
        if let MollifierShape::Tabulated { xi, phihat } = &shape {
            if xi.len() != phihat.len() || xi.len() < 2 {
                errs.push("mollifier.table: xi and phihat need equal length >= 2".into());
            } else {
                if xi[0] != 0.0 || (phihat[0] - 1.0).abs() > 1e-12 {
                    errs.push("mollifier.table: must start at xi = 0 with phihat = 1 (unit mass)".into());
                }
                if xi.windows(2).any(|w| !(w[1] > w[0])) {
                    errs.push("mollifier.table: xi must be strictly increasing".into());
                }
                if phihat.iter().any(|v| !(*v >= 0.0)) {
                    errs.push("mollifier.table: phihat must be nonnegative (nonnegative-definite mollifier)".into());
                }
            }
        }
        if errs.is_empty() {
            Ok(Self { shape, eps })
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// `φ̂(εξ)`.
    pub fn hat(&self, xi: &[f64]) -> f64 {
        match &self.shape {
            MollifierShape::Triangle => xi.iter().map(|v| triangle_hat_1d(self.eps * v)).product(),
            MollifierShape::Tabulated { xi: grid, phihat } => {
                let r = self.eps * xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                let n = grid.len();
                if r >= grid[n - 1] {
                    return 0.0;
                }
                let i = grid.partition_point(|x| *x <= r) - 1;
                let w = (r - grid[i]) / (grid[i + 1] - grid[i]);
                phihat[i] * (1.0 - w) + phihat[i + 1] * w
            }
        }
    }

    fn is_radial(&self) -> bool {
        matches!(self.shape, MollifierShape::Tabulated { .. })
    }
}

/// The pair `f^ε = φ_ε * f` and `f^{ε,ε} = φ_ε * φ_ε * f`, held spectrally.
#[derive(Debug, Clone)]
pub struct MollifiedCorrelation {
    pub model: CorrelationModel,
    pub mollifier: Mollifier,
}

pub fn mollified_correlation(model: &CorrelationModel, m: &Mollifier) -> Result<MollifiedCorrelation> {
    let m = Mollifier::new(m.shape.clone(), m.eps)?;
    Ok(MollifiedCorrelation { model: model.clone(), mollifier: m })
}

impl MollifiedCorrelation {
    /// `f̂(ξ) φ̂_ε(ξ)`.
    pub fn fhat_eps(&self, xi: &[f64]) -> f64 {
        self.model.fhat(norm(xi)) * self.mollifier.hat(xi)
    }

    /// `f̂(ξ) φ̂_ε(ξ)²`.
    pub fn fhat_eps_eps(&self, xi: &[f64]) -> f64 {
        let h = self.mollifier.hat(xi);
        self.model.fhat(norm(xi)) * h * h
    }

    /// `k_ε(t) = (2π)^{-d} ∫ f̂ φ̂_ε² e^{-t|ξ|²/2} dξ`.
    pub fn k_eps(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("k_ε(t) needs t > 0, got {t}")));
        }
        let tol = Tolerance::new(1e-12, 1e-9);
        let heat = |r: f64| (-t * r * r / 2.0).exp();
        if self.model.dim == 1 || self.mollifier.is_radial() {
            let v = self.model.radial_spectral_integral(
                |r| {
                    let probe = [r, 0.0];
                    let h = self.mollifier.hat(&probe[..self.model.dim]);
                    h * h * heat(r)
                },
                tol,
            )?;
            return Ok(v.value);
        }
        // product-form φ̂ in d = 2: average over angle, then the radial integral
        let v = self.model.radial_spectral_integral(
            |r| {
                let ang = integrate(
                    |th: f64| {
                        let h = self.mollifier.hat(&[r * th.cos(), r * th.sin()]);
                        h * h
                    },
                    0.0,
                    PI / 2.0,
                    Tolerance::new(1e-13, 1e-10),
                )
                .map(|e| e.value)
                .unwrap_or(f64::NAN);
                ang / (PI / 2.0) * heat(r)
            },
            tol,
        )?;
        Ok(v.value)
    }
}

fn norm(xi: &[f64]) -> f64 {
    xi.iter().map(|v| v * v).sum::<f64>().sqrt()
}
