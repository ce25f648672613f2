//! Measure-valued initial data (finite atoms plus a bounded density), the
//! homogeneous solution `J_0 = μ * G(t)`, truncate-and-mollify, and lattice
//! projection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldState, LatticeGrid};
use crate::kernels::gauss;
use crate::quad::{integrate, Estimate, GaussLegendre, Tolerance};
use crate::special::erf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: [f64; 2],
    pub mass: f64,
}

/// Bounded densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density {
    Constant { value: f64 },
    /// `value · 1_{lo ≤ x ≤ hi}` (per axis).
    Box { lo: [f64; 2], hi: [f64; 2], value: f64 },
    /// Piecewise-linear table on strictly increasing nodes, zero outside (d = 1).
    Table { x: Vec<f64>, v: Vec<f64> },
    /// `((μψ_ε) * G(ε))(x)`.
    TruncMollified { source: Box<InitialMeasure>, eps: f64 },
    /// `max(±ρ, 0)` of another density.
    Part { inner: Box<Density>, positive: bool },
    /// `|ρ|`.
    Abs { inner: Box<Density> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialMeasure {
    pub dim: usize,
    pub atoms: Vec<Atom>,
    pub density: Option<Density>,
}

/// Truncation profile `1_{|x|≤1/ε} + (1 + 1/ε - |x|) 1_{1/ε<|x|≤1+1/ε}`.
pub fn psi(eps: f64, x: &[f64]) -> f64 {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let plateau = 1.0 / eps;
    if r <= plateau {
        1.0
    } else if r <= plateau + 1.0 {
        1.0 + plateau - r
    } else {
        0.0
    }
}

fn norm_cdf_diff(t: f64, x: f64, lo: f64, hi: f64) -> f64 {
    // ∫_lo^hi G(t, x - y) dy
    let s = (2.0 * t).sqrt();
    0.5 * (erf((hi - x) / s) - erf((lo - x) / s))
}

/// `J_0(t,x)` and `(|μ| * G(t))(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct J0Value {
    pub value: Estimate,
    pub abs: Estimate,
}

impl Density {
    pub fn table(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let mut errs = Vec::new();
        if x.len() != v.len() || x.len() < 2 {
            errs.push("initial.density.table: need two equal-length columns with >= 2 rows".into());
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            errs.push("initial.density.table: x must be strictly increasing".into());
        }
        if v.iter().any(|a| !a.is_finite()) {
            errs.push("initial.density.table: density must be bounded (finite values)".into());
        }
        if errs.is_empty() {
            Ok(Density::Table { x, v })
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn table_from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Validation(vec![format!("{}:{}: not numeric", path.display(), n + 1)]))?;
            if cols.len() != 2 {
                return Err(Error::Validation(vec![format!("{}:{}: expected two columns", path.display(), n + 1)]));
            }
            xs.push(cols[0]);
            vs.push(cols[1]);
        }
        Self::table(xs, vs)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            Density::Constant { value } => *value,
            Density::Box { lo, hi, value } => {
                if y.iter().enumerate().all(|(i, v)| *v >= lo[i] && *v <= hi[i]) {
                    *value
                } else {
                    0.0
                }
            }
            Density::Table { x, v } => {
                let p = y[0];
                let n = x.len();
                if p < x[0] || p > x[n - 1] {
                    return 0.0;
                }
                let i = (x.partition_point(|a| *a <= p)).clamp(1, n - 1) - 1;
                let w = (p - x[i]) / (x[i + 1] - x[i]);
                v[i] * (1.0 - w) + v[i + 1] * w
            }
            Density::TruncMollified { source, eps } => source.truncated_mollified_density(*eps, y),
            Density::Part { inner, positive } => {
                let r = inner.eval(y);
                if *positive {
                    r.max(0.0)
                } else {
                    (-r).max(0.0)
                }
            }
            Density::Abs { inner } => inner.eval(y).abs(),
        }
    }

    fn is_nonnegative(&self) -> bool {
        match self {
            Density::Constant { value } | Density::Box { value, .. } => *value >= 0.0,
            Density::Table { v, .. } => v.iter().all(|a| *a >= 0.0),
            Density::TruncMollified { source, .. } => source.is_nonnegative(),
            Density::Part { .. } | Density::Abs { .. } => true,
        }
    }

    /// Points where the density has kinks or jumps (d = 1), for quadrature splitting.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Density::Box { lo, hi, .. } => vec![lo[0], hi[0]],
            Density::Table { x, .. } => vec![x[0], x[x.len() - 1]],
            Density::TruncMollified { .. } => vec![],
            Density::Part { inner, .. } | Density::Abs { inner } => inner.breakpoints(),
            Density::Constant { .. } => vec![],
        }
    }

    /// A box outside of which the density vanishes.
    fn support(&self, dim: usize) -> Option<([f64; 2], [f64; 2])> {
        match self {
            Density::Constant { .. } => None,
            Density::Box { lo, hi, .. } => Some((*lo, *hi)),
            Density::Table { x, .. } => Some(([x[0], 0.0], [x[x.len() - 1], 0.0])),
            Density::TruncMollified { source, eps } => {
                let r = 1.0 + 1.0 / eps + 14.0 * eps.sqrt();
                let _ = source;
                Some(([-r; 2], [r; 2])).map(|(a, b)| if dim == 1 { ([a[0], 0.0], [b[0], 0.0]) } else { (a, b) })
            }
            Density::Part { inner, .. } | Density::Abs { inner } => inner.support(dim),
        }
    }
}

impl InitialMeasure {
    pub fn new(dim: usize, atoms: Vec<Atom>, density: Option<Density>) -> Result<Self> {
        let mut errs = Vec::new();
        if !(1..=2).contains(&dim) {
            errs.push(format!("initial: dimension must be 1 or 2, got {dim}"));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !a.mass.is_finite() || a.x.iter().any(|v| !v.is_finite()) {
                errs.push(format!("initial.atoms[{i}]: non-finite location or mass"));
            }
        }
        if matches!(density, Some(Density::Table { .. })) && dim != 1 {
            errs.push("initial.density.table: tables are one-dimensional".into());
        }
        if errs.is_empty() {
            Ok(Self { dim, atoms, density })
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn dirac(dim: usize, x: &[f64], mass: f64) -> Self {
        let mut p = [0.0; 2];
        p[..x.len()].copy_from_slice(x);
        Self { dim, atoms: vec![Atom { x: p, mass }], density: None }
    }

    pub fn lebesgue(dim: usize, c: f64) -> Self {
        Self { dim, atoms: vec![], density: Some(Density::Constant { value: c }) }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, atoms: vec![], density: None }
    }

    /// `self + other`, with densities combined only when at most one is present.
    pub fn plus(&self, other: &InitialMeasure) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Shape("measures of different dimension".into()));
        }
        let density = match (&self.density, &other.density) {
            (None, d) | (d, None) => d.clone(),
            (Some(Density::Constant { value: a }), Some(Density::Constant { value: b })) => {
                Some(Density::Constant { value: a + b })
            }
            _ => return Err(Error::domain("sum of two non-constant densities is not representable")),
        };
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Ok(Self { dim: self.dim, atoms, density })
    }

    pub fn is_nonnegative(&self) -> bool {
        self.atoms.iter().all(|a| a.mass >= 0.0) && self.density.as_ref().is_none_or(|d| d.is_nonnegative())
    }

    pub fn has_atoms(&self) -> bool {
        self.atoms.iter().any(|a| a.mass != 0.0)
    }

    pub fn positive_part(&self) -> Self {
        self.part(true)
    }

    pub fn negative_part(&self) -> Self {
        self.part(false)
    }

    fn part(&self, positive: bool) -> Self {
        let sign = if positive { 1.0 } else { -1.0 };
        let atoms = self
            .atoms
            .iter()
            .filter(|a| sign * a.mass > 0.0)
            .map(|a| Atom { x: a.x, mass: sign * a.mass })
            .collect();
        let density = self.density.as_ref().map(|d| Density::Part { inner: Box::new(d.clone()), positive });
        Self { dim: self.dim, atoms, density }
    }

    /// `|μ|`.
    pub fn total_variation(&self) -> Self {
        let atoms = self.atoms.iter().map(|a| Atom { x: a.x, mass: a.mass.abs() }).collect();
        let density = self.density.as_ref().map(|d| {
            if d.is_nonnegative() {
                d.clone()
            } else {
                Density::Abs { inner: Box::new(d.clone()) }
            }
        });
        Self { dim: self.dim, atoms, density }
    }

    /// Checks `self ≤ other` atom by atom and on the densities (sampled).
    pub fn dominated_by(&self, other: &InitialMeasure) -> bool {
        if self.dim != other.dim {
            return false;
        }
        let mut locs: Vec<[f64; 2]> = self.atoms.iter().chain(&other.atoms).map(|a| a.x).collect();
        locs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        locs.dedup();
        let mass_at = |m: &InitialMeasure, x: [f64; 2]| m.atoms.iter().filter(|a| a.x == x).map(|a| a.mass).sum::<f64>();
        if locs.iter().any(|&x| mass_at(other, x) < mass_at(self, x)) {
            return false;
        }
        let dens = |m: &InitialMeasure, y: &[f64]| m.density.as_ref().map_or(0.0, |d| d.eval(y));
        let probe = |y: &[f64]| dens(other, y) >= dens(self, y) - 1e-14;
        let pts: Vec<f64> = (-4000..=4000).map(|i| i as f64 * 0.005).collect();
        match self.dim {
            1 => pts.iter().all(|&y| probe(&[y])),
            _ => pts.iter().step_by(20).all(|&a| pts.iter().step_by(20).all(|&b| probe(&[a, b]))),
        }
    }

    /// Density of `(μψ_ε) * G(ε)` at `x`.
    fn truncated_mollified_density(&self, eps: f64, x: &[f64]) -> f64 {
        let d = self.dim;
        let atoms: f64 = self
            .atoms
            .iter()
            .map(|a| {
                let r2: f64 = x.iter().zip(&a.x).map(|(p, q)| (p - q).powi(2)).sum();
                a.mass * psi(eps, &a.x[..d]) * gauss(eps, r2, d)
            })
            .sum();
        let dens = match &self.density {
            None => 0.0,
            Some(den) => self.smoothed_density(den, eps, x, Some(eps)).value,
        };
        atoms + dens
    }

    /// `∫ ρ(y) ψ_ε(y) G(t, x-y) dy` (no truncation when `trunc` is None).
    fn smoothed_density(&self, den: &Density, t: f64, x: &[f64], trunc: Option<f64>) -> Estimate {
        let weight = |y: &[f64]| den.eval(y) * trunc.map_or(1.0, |e| psi(e, y));
        let reach = 12.0 * t.sqrt();
        match self.dim {
            1 => {
                let x0 = x[0];
                let (mut a, mut b) = (x0 - reach, x0 + reach);
                if let Some((lo, hi)) = den.support(1) {
                    a = a.max(lo[0]);
                    b = b.min(hi[0]);
                }
                if let Some(e) = trunc {
                    let r = 1.0 + 1.0 / e;
                    a = a.max(-r);
                    b = b.min(r);
                }
                if !(b > a) {
                    return Estimate::exact(0.0);
                }
                let mut cuts = vec![a, b, x0];
                cuts.extend(den.breakpoints());
                if let Some(e) = trunc {
                    cuts.extend([-1.0 / e, 1.0 / e]);
                }
                cuts.retain(|c| *c >= a && *c <= b);
                cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
                cuts.dedup();
                let mut total = Estimate::exact(0.0);
                for seg in cuts.windows(2) {
                    let est = integrate(|y| weight(&[y]) * gauss(t, (x0 - y).powi(2), 1), seg[0], seg[1], Tolerance::new(1e-13, 1e-10))
                        .unwrap_or(Estimate::new(f64::NAN, f64::INFINITY));
                    total = total + est;
                }
                total
            }
            _ => {
                // tensor Gauss-Legendre on the window, error from a coarser rule
                let (mut lo, mut hi) = ([x[0] - reach, x[1] - reach], [x[0] + reach, x[1] + reach]);
                if let Some((a, b)) = den.support(2) {
                    for i in 0..2 {
                        lo[i] = lo[i].max(a[i]);
                        hi[i] = hi[i].min(b[i]);
                    }
                }
                if !(hi[0] > lo[0] && hi[1] > lo[1]) {
                    return Estimate::exact(0.0);
                }
                let rule = |n: usize| {
                    let gl = GaussLegendre::new(n);
                    let mut s = 0.0;
                    for (y0, w0) in gl.mapped(lo[0], hi[0]) {
                        for (y1, w1) in gl.mapped(lo[1], hi[1]) {
                            let r2 = (x[0] - y0).powi(2) + (x[1] - y1).powi(2);
                            s += w0 * w1 * weight(&[y0, y1]) * gauss(t, r2, 2);
                        }
                    }
                    s
                };
                let (fine, coarse) = (rule(96), rule(64));
                Estimate::new(fine, (fine - coarse).abs())
            }
        }
    }

    /// `∫ ρ(y) G(t, x-y) dy` with closed forms where available.
    fn density_j0(&self, den: &Density, t: f64, x: &[f64]) -> Estimate {
        match den {
            Density::Constant { value } => Estimate::exact(*value),
            Density::Box { lo, hi, value } => {
                let p: f64 = (0..self.dim).map(|i| norm_cdf_diff(t, x[i], lo[i], hi[i])).product();
                Estimate::new(value * p, 1e-15 * value.abs())
            }
            // (μψ_ε) * G(ε) * G(t) = (μψ_ε) * G(t+ε)
            Density::TruncMollified { source, eps } => {
                let atoms: f64 = source
                    .atoms
                    .iter()
                    .map(|a| {
                        let r2: f64 = x.iter().zip(&a.x).map(|(p, q)| (p - q).powi(2)).sum();
                        a.mass * psi(*eps, &a.x[..self.dim]) * gauss(t + eps, r2, self.dim)
                    })
                    .sum();
                let dens = source
                    .density
                    .as_ref()
                    .map_or(Estimate::exact(0.0), |d| source.smoothed_density(d, t + eps, x, Some(*eps)));
                Estimate::new(atoms, 0.0) + dens
            }
            _ => self.smoothed_density(den, t, x, None),
        }
    }

    /// `J_0(t,x) = (μ * G(t))(x)` and `(|μ| * G(t))(x)`.
    pub fn j0(&self, t: f64, x: &[f64]) -> Result<J0Value> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("J_0 needs t > 0, got {t}")));
        }
        if x.len() != self.dim {
            return Err(Error::Shape(format!("point has {} coordinates, measure is {}-dimensional", x.len(), self.dim)));
        }
        let mut value = Estimate::exact(0.0);
        let mut abs = Estimate::exact(0.0);
        for a in &self.atoms {
            let r2: f64 = x.iter().zip(&a.x).map(|(p, q)| (p - q).powi(2)).sum();
            let g = gauss(t, r2, self.dim);
            value.value += a.mass * g;
            abs.value += a.mass.abs() * g;
        }
        if let Some(den) = &self.density {
            let v = self.density_j0(den, t, x);
            value = value + v;
            if den.is_nonnegative() {
                abs = abs + v;
            } else {
                let pos = self.density_j0(&Density::Part { inner: Box::new(den.clone()), positive: true }, t, x);
                let neg = self.density_j0(&Density::Part { inner: Box::new(den.clone()), positive: false }, t, x);
                abs = abs + pos + neg;
            }
        }
        if !value.value.is_finite() {
            return Err(Error::Numeric { what: "J_0 density quadrature".into(), value: value.value, error: value.error });
        }
        Ok(J0Value { value, abs })
    }

    /// `(μψ_ε) * G(ε)` as a bounded density.
    pub fn truncate_mollify(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::domain(format!("truncate_mollify needs ε > 0, got {eps}")));
        }
        Ok(Self {
            dim: self.dim,
            atoms: vec![],
            density: Some(Density::TruncMollified { source: Box::new(self.clone()), eps }),
        })
    }

    /// Atoms to the nearest node (mass/Δx^d), density sampled at the nodes.
    pub fn grid_project(&self, grid: &LatticeGrid) -> Result<FieldState> {
        if grid.dim() != self.dim {
            return Err(Error::Shape(format!("grid is {}-dimensional, measure is {}-dimensional", grid.dim(), self.dim)));
        }
        let mut field = match &self.density {
            Some(den) => FieldState::from_fn(*grid, |p| den.eval(&p[..self.dim])),
            None => FieldState::constant(*grid, 0.0),
        };
        let cell = grid.cell_volume();
        for (k, a) in self.atoms.iter().enumerate() {
            let mut ij = [0usize; 2];
            for axis in 0..self.dim {
                ij[axis] = grid.nearest_node(a.x[axis]).ok_or_else(|| {
                    Error::Placement(format!(
                        "atom {k} at {:?} lies outside the domain (-{L}, {L})^{d}",
                        &a.x[..self.dim],
                        L = grid.half_width(),
                        d = self.dim
                    ))
                })?;
            }
            let idx = grid.flatten(ij);
            field.values[idx] += a.mass / cell;
        }
        Ok(field)
    }
}
