//! Lattice increments of the noise `M`: white in time, correlated in space by
//! the cell-regularized, periodized correlation `f̄`.
//!
//! Every (seed, replica, step) triple addresses its own position in a ChaCha
//! keystream, so slices can be generated in any order and replicas in parallel.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correlation::{CorrelationModel, CorrelationVariant, Mollifier};
use crate::error::{Error, Result};
use crate::grid::LatticeGrid;
use crate::kernels::heat_symbol;
use crate::quad::GaussLegendre;
use crate::spectral::{plan_for, SpectralPlan, Workspace};

const DUMP_MAGIC: &[u8; 8] = b"SHENOISE";
const DUMP_VERSION: u32 = 1;
/// Keystream words reserved per time step.
const STEP_SHIFT: u32 = 36;
const CHOLESKY_MAX_CELLS: usize = 2048;

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Keystream generator for one (seed, replica) pair.
pub fn replica_rng(seed: u64, replica: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng.set_word_pos((step as u128) << STEP_SHIFT);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Use an exact (non-periodic) Cholesky factor when circulant weights go negative.
    pub cholesky_fallback: bool,
    /// Negative weights above `-clip_rel · max(w)` are treated as round-off and zeroed.
    pub clip_rel: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { cholesky_fallback: true, clip_rel: 1e-10 }
    }
}

#[derive(Debug, Clone)]
enum Method {
    White { sd: f64 },
    Circulant { sqrt_weights: Vec<f64> },
    Cholesky { lower: Vec<f64> },
}

/// Generates slices `ΔM_k` for any replica and step.
#[derive(Debug, Clone)]
pub struct NoiseSynthesizer {
    grid: LatticeGrid,
    dt: f64,
    seed: u64,
    model_hash: String,
    plan: Arc<SpectralPlan>,
    method: Method,
    negative_weight: Option<f64>,
}

/// `∫ f(z + s) Λ(s) ds` per axis, `Λ` the normalized tent of half-width `h`
/// (the covariance of two cell averages at offset `z`).
fn tent_average_1d(f: impl Fn(f64) -> f64, z: f64, h: f64) -> f64 {
    let gl = GaussLegendre::new(24);
    let left = gl.integrate(|s| f(z + s) * (h + s), -h, 0.0);
    let right = gl.integrate(|s| f(z + s) * (h - s), 0.0, h);
    (left + right) / (h * h)
}

/// Cell-averaged Riesz kernel `|x|^{-β}` at offset `z` in one dimension (closed form).
fn riesz_cell_1d(beta: f64, z: f64, h: f64) -> f64 {
    // ∫_a^b |w|^{-β} (c0 + c1 w) dw from the odd/even antiderivatives
    let f1 = |w: f64| w.signum() * w.abs().powf(1.0 - beta) / (1.0 - beta);
    let f2 = |w: f64| w.abs().powf(2.0 - beta) / (2.0 - beta);
    let piece = |a: f64, b: f64, c0: f64, c1: f64| c0 * (f1(b) - f1(a)) + c1 * (f2(b) - f2(a));
    (piece(z - h, z, h - z, 1.0) + piece(z, z + h, h + z, -1.0)) / (h * h)
}

/// Cell-averaged Riesz kernel in two dimensions, by polar quadrature about the
/// singularity with `u = r^{2-β}` absorbing the `r^{1-β}` weight.
fn riesz_cell_2d(beta: f64, z: [f64; 2], h: f64) -> f64 {
    let tent = |s: f64| (h - s.abs()).max(0.0) / (h * h);
    let zr = z[0].hypot(z[1]);
    let reach = std::f64::consts::SQRT_2 * h;
    let (r_lo, r_hi) = ((zr - reach).max(0.0), zr + reach);
    let q = 2.0 - beta;
    let (u_lo, u_hi) = (r_lo.powf(q), r_hi.powf(q));
    let gu = GaussLegendre::new(32);
    let gt = GaussLegendre::new(32);
    let pieces_u = 8;
    let pieces_t = 16;
    let mut total = 0.0;
    for pu in 0..pieces_u {
        let a = u_lo + (u_hi - u_lo) * pu as f64 / pieces_u as f64;
        let b = u_lo + (u_hi - u_lo) * (pu + 1) as f64 / pieces_u as f64;
        for (u, wu) in gu.mapped(a, b) {
            let r = u.powf(1.0 / q);
            let mut ang = 0.0;
            for pt in 0..pieces_t {
                let ta = std::f64::consts::TAU * pt as f64 / pieces_t as f64;
                let tb = std::f64::consts::TAU * (pt + 1) as f64 / pieces_t as f64;
                for (th, wt) in gt.mapped(ta, tb) {
                    ang += wt * tent(r * th.cos() - z[0]) * tent(r * th.sin() - z[1]);
                }
            }
            total += wu * ang;
        }
    }
    total / q
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl NoiseSynthesizer {
    pub fn new(model: &CorrelationModel, grid: &LatticeGrid, dt: f64, seed: u64) -> Result<Self> {
        Self::with_options(model, grid, dt, seed, SynthesisOptions::default())
    }

    pub fn with_options(
        model: &CorrelationModel,
        grid: &LatticeGrid,
        dt: f64,
        seed: u64,
        opts: SynthesisOptions,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::domain(format!("noise time step must be > 0, got {dt}")));
        }
        if model.dim() != grid.dim() {
            return Err(Error::Shape(format!(
                "model is {}-dimensional, grid is {}-dimensional",
                model.dim(),
                grid.dim()
            )));
        }
        let plan = plan_for(grid)?;
        let model_hash = {
            let mut h = Sha256::new();
            h.update(model.describe().as_bytes());
            h.update(serde_json::to_vec(grid).map_err(|e| Error::Serde(e.to_string()))?);
            h.update(dt.to_le_bytes());
            hex(&h.finalize())
        };
        let mut me = Self { grid: *grid, dt, seed, model_hash, plan, method: Method::White { sd: 0.0 }, negative_weight: None };
        if let CorrelationVariant::White = model.variant() {
            me.method = Method::White { sd: (dt / grid.cell_volume()).sqrt() };
            return Ok(me);
        }
        let mut weights = me.circulant_weights(model);
        let max = weights.iter().cloned().fold(0.0, f64::max);
        let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -opts.clip_rel * max {
            me.negative_weight = Some(min);
            if !opts.cholesky_fallback {
                return Err(Error::Synthesis(format!(
                    "discrete spectral weight {min:e} is negative (max {max:e}) and the Cholesky fallback is disabled"
                )));
            }
            me.method = Method::Cholesky { lower: me.cholesky(model)? };
            return Ok(me);
        }
        for w in weights.iter_mut() {
            *w = w.max(0.0).sqrt();
        }
        me.method = Method::Circulant { sqrt_weights: weights };
        Ok(me)
    }

    /// `Δt · f̄(z)` at a minimum-image offset (real-space models only).
    fn cell_covariance(&self, model: &CorrelationModel, z: [f64; 2]) -> Option<f64> {
        let h = self.grid.spacing();
        let period = 2.0 * self.grid.half_width();
        let d = self.grid.dim();
        let v = match model.variant() {
            CorrelationVariant::Riesz { beta } => match d {
                1 => riesz_cell_1d(*beta, z[0], h),
                _ => riesz_cell_2d(*beta, z, h),
            },
            CorrelationVariant::Gaussian { ell } => {
                let axis = |c: f64| {
                    (-4..=4)
                        .map(|m| tent_average_1d(|x| (-x * x / (2.0 * ell * ell)).exp(), c + m as f64 * period, h))
                        .sum::<f64>()
                };
                (0..d).map(|i| axis(z[i])).product()
            }
            _ => return None,
        };
        Some(self.dt * v)
    }

    /// Eigenvalues of the circulant covariance, in FFT order.
    fn circulant_weights(&self, model: &CorrelationModel) -> Vec<f64> {
        let d = self.grid.dim();
        if let CorrelationVariant::Tabulated(_) = model.variant() {
            // aliased spectral density of the cell averages
            let h = self.grid.spacing();
            let m_max: i64 = if d == 1 { 16 } else { 6 };
            let shift = std::f64::consts::TAU / h;
            let scale = self.dt / self.grid.cell_volume();
            return self.plan.symbol(|xi| {
                let mut s = 0.0;
                let range = -m_max..=m_max;
                let m2: Vec<i64> = if d == 1 { vec![0] } else { range.clone().collect() };
                for m0 in range.clone() {
                    for &m1 in &m2 {
                        let k0 = xi[0] + m0 as f64 * shift;
                        let k1 = if d == 1 { 0.0 } else { xi[1] + m1 as f64 * shift };
                        let r = k0.hypot(k1);
                        let mut w = sinc(k0 * h / 2.0).powi(2);
                        if d == 2 {
                            w *= sinc(k1 * h / 2.0).powi(2);
                        }
                        s += model.fhat(r) * w;
                    }
                }
                scale * s
            });
        }
        let row = self.plan.offsets(|z| self.cell_covariance(model, z).unwrap_or(0.0));
        let mut ws = Workspace::default();
        let vol = self.grid.cell_volume();
        // kernel_symbol weights by Δx^d; undo that to get the plain DFT of the row
        self.plan.kernel_symbol(&row, &mut ws).into_iter().map(|w| w / vol).collect()
    }

    fn cholesky(&self, model: &CorrelationModel) -> Result<Vec<f64>> {
        let n = self.grid.cells();
        if n > CHOLESKY_MAX_CELLS {
            return Err(Error::Synthesis(format!(
                "negative circulant weight and {n} cells exceed the Cholesky fallback limit {CHOLESKY_MAX_CELLS}"
            )));
        }
        let pos: Vec<[f64; 2]> = (0..n).map(|i| self.grid.position(i)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let z = [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]];
                let c = self
                    .cell_covariance(model, z)
                    .ok_or_else(|| Error::Synthesis("Cholesky fallback needs a real-space correlation".into()))?;
                a[i * n + j] = c;
            }
        }
        for j in 0..n {
            let mut diag = a[j * n + j];
            for k in 0..j {
                diag -= a[j * n + k] * a[j * n + k];
            }
            if !(diag > 0.0) {
                return Err(Error::Synthesis(format!("covariance not positive definite at row {j}")));
            }
            let ljj = diag.sqrt();
            a[j * n + j] = ljj;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / ljj;
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                a[i * n + j] = 0.0;
            }
        }
        Ok(a)
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    /// Most negative circulant weight, when the Cholesky fallback was taken.
    pub fn negative_weight(&self) -> Option<f64> {
        self.negative_weight
    }

    pub fn uses_cholesky(&self) -> bool {
        matches!(self.method, Method::Cholesky { .. })
    }

    /// Per-node variance of one increment.
    pub fn node_variance(&self) -> f64 {
        match &self.method {
            Method::White { sd } => sd * sd,
            Method::Circulant { sqrt_weights } => {
                sqrt_weights.iter().map(|s| s * s).sum::<f64>() / sqrt_weights.len() as f64
            }
            Method::Cholesky { lower } => {
                let n = self.grid.cells();
                let mid = self.grid.flatten([self.grid.points() / 2; 2]);
                (0..n).map(|k| lower[mid * n + k].powi(2)).sum()
            }
        }
    }

    /// Writes `ΔM_step` for `replica` into `out`.
    pub fn fill_slice(&self, replica: u64, step: usize, out: &mut [f64], ws: &mut Workspace) {
        let mut rng = replica_rng(self.seed, replica, step);
        match &self.method {
            Method::White { sd } => {
                for v in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = sd * z;
                }
            }
            Method::Circulant { sqrt_weights } => {
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                self.plan.apply_symbol(out, sqrt_weights, ws);
            }
            Method::Cholesky { lower } => {
                let n = out.len();
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                for (i, v) in out.iter_mut().enumerate() {
                    *v = lower[i * n..i * n + i + 1].iter().zip(&z).map(|(l, x)| l * x).sum();
                }
            }
        }
    }

    pub fn realize(&self, replica: u64, steps: usize) -> NoiseRealization {
        let cells = self.grid.cells();
        let mut increments = vec![0.0; cells * steps];
        let mut ws = Workspace::default();
        for (k, slice) in increments.chunks_exact_mut(cells).enumerate() {
            self.fill_slice(replica, k, slice, &mut ws);
        }
        NoiseRealization {
            grid: self.grid,
            dt: self.dt,
            steps,
            increments,
            seed: self.seed,
            replica,
            model_hash: self.model_hash.clone(),
        }
    }
}

/// A spatial filter applied slice by slice to a base realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseFilter {
    None,
    /// Convolution with `φ_ε`.
    Mollify(Mollifier),
    /// Convolution with `G(ε, ·)`.
    HeatSmooth(f64),
}

impl NoiseFilter {
    /// Spectral multiplier, or `None` for the identity.
    pub fn symbol(&self, plan: &SpectralPlan) -> Result<Option<Vec<f64>>> {
        let d = plan.grid().dim();
        match self {
            NoiseFilter::None => Ok(None),
            NoiseFilter::Mollify(m) => Ok(Some(plan.symbol(|xi| m.hat(&xi[..d])))),
            NoiseFilter::HeatSmooth(eps) => {
                if !(*eps > 0.0) {
                    return Err(Error::domain(format!("G(ε) smoothing needs ε > 0, got {eps}")));
                }
                Ok(Some(heat_symbol(plan, *eps)))
            }
        }
    }
}

/// Increments `ΔM_k(x_j)` for one replica, row-major by step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub grid: LatticeGrid,
    pub dt: f64,
    pub steps: usize,
    pub increments: Vec<f64>,
    pub seed: u64,
    pub replica: u64,
    pub model_hash: String,
}

pub fn synthesize(
    model: &CorrelationModel,
    grid: &LatticeGrid,
    dt: f64,
    steps: usize,
    seed: u64,
    replica: u64,
) -> Result<NoiseRealization> {
    Ok(NoiseSynthesizer::new(model, grid, dt, seed)?.realize(replica, steps))
}

impl NoiseRealization {
    pub fn slice(&self, k: usize) -> &[f64] {
        let c = self.grid.cells();
        &self.increments[k * c..(k + 1) * c]
    }

    /// SHA-256 of the header fields and payload, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.header_bytes());
        for v in &self.increments {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }

    fn header_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(128);
        b.extend_from_slice(DUMP_MAGIC);
        b.extend_from_slice(&DUMP_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.grid.dim() as u32).to_le_bytes());
        b.extend_from_slice(&(self.grid.points() as u64).to_le_bytes());
        b.extend_from_slice(&self.grid.half_width().to_le_bytes());
        b.extend_from_slice(&self.dt.to_le_bytes());
        b.extend_from_slice(&(self.steps as u64).to_le_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&self.replica.to_le_bytes());
        let mh = self.model_hash.as_bytes();
        b.extend_from_slice(&(mh.len() as u32).to_le_bytes());
        b.extend_from_slice(mh);
        b
    }

    /// Binary dump: header (grid, dt, steps, seed, replica, model hash), then
    /// little-endian `f64` slices in row-major order.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut body = self.header_bytes();
        body.reserve(self.increments.len() * 8);
        for v in &self.increments {
            body.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&body).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn read_dump(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Serde(format!("{}: {m}", path.display()));
        let mut at = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(at..at + n).ok_or_else(|| bad("truncated dump"))?;
            at += n;
            Ok(s)
        };
        if take(8)? != DUMP_MAGIC {
            return Err(bad("not a noise dump"));
        }
        let u32_ = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        let u64_ = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());
        let f64_ = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
        if u32_(take(4)?) != DUMP_VERSION {
            return Err(bad("unsupported dump version"));
        }
        let dim = u32_(take(4)?) as usize;
        let points = u64_(take(8)?) as usize;
        let half = f64_(take(8)?);
        let dt = f64_(take(8)?);
        let steps = u64_(take(8)?) as usize;
        let seed = u64_(take(8)?);
        let replica = u64_(take(8)?);
        let mlen = u32_(take(4)?) as usize;
        let model_hash = String::from_utf8(take(mlen)?.to_vec()).map_err(|_| bad("model hash is not UTF-8"))?;
        let grid = LatticeGrid::new(dim, half, points)?;
        let count = steps * grid.cells();
        let payload = take(count * 8)?;
        let increments = payload.chunks_exact(8).map(f64_).collect();
        if at != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self { grid, dt, steps, increments, seed, replica, model_hash })
    }

    /// Applies a spatial filter to every slice; the result is a deterministic
    /// function of `self`, so couplings are preserved.
    pub fn filtered(&self, filter: &NoiseFilter) -> Result<Self> {
        let plan = plan_for(&self.grid)?;
        let Some(symbol) = filter.symbol(&plan)? else {
            return Ok(self.clone());
        };
        let mut out = self.clone();
        let mut ws = Workspace::default();
        for slice in out.increments.chunks_exact_mut(self.grid.cells()) {
            plan.apply_symbol(slice, &symbol, &mut ws);
        }
        Ok(out)
    }

    pub fn mollify_phi(&self, m: &Mollifier) -> Result<Self> {
        self.filtered(&NoiseFilter::Mollify(m.clone()))
    }

    pub fn smooth_gepsilon(&self, eps: f64) -> Result<Self> {
        self.filtered(&NoiseFilter::HeatSmooth(eps))
    }

    /// Sums `factor` consecutive slices: the same path seen with step `factor·Δt`.
    pub fn coarsen_time(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::domain(format!("cannot coarsen {} steps by {factor}", self.steps)));
        }
        let c = self.grid.cells();
        let steps = self.steps / factor;
        let mut increments = vec![0.0; steps * c];
        for k in 0..self.steps {
            let dst = &mut increments[(k / factor) * c..(k / factor + 1) * c];
            for (d, s) in dst.iter_mut().zip(self.slice(k)) {
                *d += s;
            }
        }
        Ok(Self { dt: self.dt * factor as f64, steps, increments, ..self.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, Tolerance};

    fn node_series(real: &NoiseRealization, node: usize) -> Vec<f64> {
        (0..real.steps).map(|k| real.slice(k)[node]).collect()
    }

    fn cov(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn white_variance_per_node() {
        let grid = LatticeGrid::new(1, 0.32, 64).unwrap();
        assert!((grid.spacing() - 0.01).abs() < 1e-15);
        let real = synthesize(&CorrelationModel::white(), &grid, 0.01, 2000, 7, 0).unwrap();
        let n = real.increments.len() as f64;
        let var = real.increments.iter().map(|v| v * v).sum::<f64>() / n;
        // sd of the sample variance is sqrt(2/n)
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "{var}");
    }

    #[test]
    fn reproducible_and_order_free() {
        let grid = LatticeGrid::new(1, 1.0, 32).unwrap();
        let model = CorrelationModel::riesz(1, 0.5).unwrap();
        let s = NoiseSynthesizer::new(&model, &grid, 0.01, 42).unwrap();
        let a = s.realize(3, 20);
        let b = s.realize(3, 20);
        assert_eq!(a.hash(), b.hash());
        let mut one = vec![0.0; 32];
        s.fill_slice(3, 17, &mut one, &mut Workspace::default());
        assert_eq!(one.as_slice(), a.slice(17));
        assert_ne!(s.realize(4, 20).hash(), a.hash());
        let other_seed = NoiseSynthesizer::new(&model, &grid, 0.01, 43).unwrap().realize(3, 20);
        assert_ne!(other_seed.hash(), a.hash());
    }

    #[test]
    fn gaussian_far_nodes_uncorrelated() {
        let grid = LatticeGrid::new(1, 8.0, 64).unwrap();
        let real = synthesize(&CorrelationModel::gaussian(1, 1.0).unwrap(), &grid, 1.0, 100_000, 1, 0).unwrap();
        let i = 20;
        let j = i + 24; // 24 Δx = 6ℓ
        let (a, b) = (node_series(&real, i), node_series(&real, j));
        let r = cov(&a, &b) / (cov(&a, &a) * cov(&b, &b)).sqrt();
        assert!(r.abs() < 3.0 / (a.len() as f64).sqrt(), "{r}");
    }

    #[test]
    fn riesz_covariance_matches_periodized_target() {
        let beta = 0.5;
        let grid = LatticeGrid::new(1, 0.64, 32).unwrap();
        let h = grid.spacing();
        let model = CorrelationModel::riesz(1, beta).unwrap();
        let s = NoiseSynthesizer::new(&model, &grid, 1.0, 11).unwrap();
        assert!(!s.uses_cholesky());
        let real = s.realize(0, 10_000);
        // target: cell-averaged |x|^{-β} at the minimum-image offset, by adaptive quadrature
        let target = |z: f64| {
            let f = |s: f64| (z + s).abs().powf(-beta);
            let tol = Tolerance::new(1e-12, 1e-10);
            let mut cuts = vec![-h, 0.0, h, -z];
            cuts.retain(|c| *c >= -h && *c <= h);
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cuts.dedup();
            cuts.windows(2)
                .map(|w| integrate(|s| f(s) * (h - s.abs()) / (h * h), w[0], w[1], tol).unwrap().value)
                .sum::<f64>()
        };
        // translation-averaged lag covariance, σ from 40 independent time batches
        let batches = 40;
        let per = real.steps / batches;
        for lag in [0usize, 1, 2, 5, 11, 16, 24, 31] {
            let means: Vec<f64> = (0..batches)
                .map(|b| {
                    let mut acc = 0.0;
                    for k in b * per..(b + 1) * per {
                        let sl = real.slice(k);
                        acc += (0..32).map(|i| sl[i] * sl[(i + lag) % 32]).sum::<f64>() / 32.0;
                    }
                    acc / per as f64
                })
                .collect();
            let est = means.iter().sum::<f64>() / batches as f64;
            let sd = (means.iter().map(|m| (m - est).powi(2)).sum::<f64>() / (batches - 1) as f64).sqrt();
            let sigma = sd / (batches as f64).sqrt();
            let t = target(grid.wrapped_offset(lag));
            assert!((est - t).abs() < 3.0 * sigma, "lag {lag}: {est} vs {t} ± {sigma}");
        }
    }

    #[test]
    fn riesz_closed_form_cell_average() {
        let h = 0.05;
        for z in [0.0, 0.05, 0.1, 0.37] {
            let q = tent_average_1d(|x: f64| x.abs().powf(-0.5), z, h);
            let c = riesz_cell_1d(0.5, z, h);
            if z >= 0.1 {
                assert!((q - c).abs() < 1e-8 * c, "{z}: {q} vs {c}");
            }
            assert!(c.is_finite() && c > 0.0);
        }
        // 2D polar rule against a Monte Carlo-free far-field value
        let far = riesz_cell_2d(1.0, [1.0, 0.5], 0.05);
        let direct = (1.0f64 + 0.25).sqrt().recip();
        assert!((far - direct).abs() < 1e-3 * direct, "{far} vs {direct}");
        let near = riesz_cell_2d(1.0, [0.0, 0.0], 0.05);
        assert!(near > riesz_cell_2d(1.0, [0.05, 0.0], 0.05));
    }

    #[test]
    fn kurtosis_is_gaussian() {
        let grid = LatticeGrid::new(1, 1.28, 128).unwrap();
        let real = synthesize(&CorrelationModel::gaussian(1, 0.5).unwrap(), &grid, 0.01, 800, 5, 2).unwrap();
        let x = node_series(&real, 40);
        // pool many nodes spaced beyond the correlation length for 10⁵ samples
        let mut pool = x;
        for node in (0..128).step_by(8).skip(1) {
            pool.extend(node_series(&real, node));
        }
        let m2 = pool.iter().map(|v| v * v).sum::<f64>() / pool.len() as f64;
        let m4 = pool.iter().map(|v| v.powi(4)).sum::<f64>() / pool.len() as f64;
        let k = m4 / (m2 * m2);
        assert!((k - 3.0).abs() < 0.1, "{k}");
    }

    #[test]
    fn cholesky_fallback_and_rejection() {
        // a torus far narrower than the Riesz tail makes the periodic row indefinite
        let grid = LatticeGrid::new(1, 0.08, 16).unwrap();
        let model = CorrelationModel::riesz(1, 0.9).unwrap();
        let s = NoiseSynthesizer::new(&model, &grid, 1.0, 0).unwrap();
        if s.uses_cholesky() {
            assert!(s.negative_weight().unwrap() < 0.0);
            let strict = SynthesisOptions { cholesky_fallback: false, ..Default::default() };
            assert!(matches!(
                NoiseSynthesizer::with_options(&model, &grid, 1.0, 0, strict),
                Err(Error::Synthesis(_))
            ));
        }
        // the fallback produces the non-periodic covariance at the center
        let real = s.realize(0, 4000);
        let c = real.slice(0).len() / 2;
        let var = node_series(&real, c).iter().map(|v| v * v).sum::<f64>() / 4000.0;
        let target = riesz_cell_1d(0.9, 0.0, grid.spacing());
        assert!((var - target).abs() < 4.0 * target * (2.0f64 / 4000.0).sqrt(), "{var} vs {target}");
    }

    #[test]
    fn mollified_noise() {
        let grid = LatticeGrid::new(1, 1.28, 256).unwrap();
        let base = synthesize(&CorrelationModel::white(), &grid, 0.01, 4000, 9, 0).unwrap();
        let eps = 8.0 * grid.spacing();
        let m = Mollifier::triangle(eps).unwrap();
        let out = base.mollify_phi(&m).unwrap();
        let var_in = base.increments.iter().map(|v| v * v).sum::<f64>();
        let var_out = out.increments.iter().map(|v| v * v).sum::<f64>();
        assert!(var_out <= var_in);
        // per node target Δt (2π)^{-1} ∫ φ̂_ε² dξ = Δt · 2/(3ε)
        let target = 0.01 * 2.0 / (3.0 * eps);
        let n = out.increments.len() as f64;
        let est = var_out / n;
        // nodes are correlated over ~2ε/Δx cells; widen σ by that factor
        let sigma = target * (2.0 / n).sqrt() * (2.0 * eps / grid.spacing()).sqrt();
        assert!((est - target).abs() < 3.0 * sigma + 0.01 * target, "{est} vs {target}");
        // unresolved mollifier is nearly the identity
        let tiny = base.mollify_phi(&Mollifier::triangle(1e-6).unwrap()).unwrap();
        let diff = tiny.increments.iter().zip(&base.increments).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6);
    }

    #[test]
    fn heat_smoothing() {
        let grid = LatticeGrid::new(1, 2.56, 512).unwrap();
        let eps = 0.01;
        let base = synthesize(&CorrelationModel::white(), &grid, 1.0, 400, 3, 0).unwrap();
        let sm = base.smooth_gepsilon(eps).unwrap();
        let n = sm.increments.len() as f64;
        let var = sm.increments.iter().map(|v| v * v).sum::<f64>() / n;
        let target = (4.0 * std::f64::consts::PI * eps).powf(-0.5);
        assert!((target - 2.820_95).abs() < 1e-5);
        assert!((var - target).abs() < 0.03 * target, "{var} vs {target}");
        let coarser = base.smooth_gepsilon(0.04).unwrap();
        let var2 = coarser.increments.iter().map(|v| v * v).sum::<f64>() / n;
        assert!(var2 < var);
        // single spike
        let mut spike = base.clone();
        spike.steps = 1;
        spike.increments = vec![0.0; grid.cells()];
        let c = grid.nearest_node(0.0).unwrap();
        spike.increments[c] = 3.0;
        let out = spike.smooth_gepsilon(eps).unwrap();
        for j in (c - 20..c + 20).step_by(5) {
            let x = grid.coord(j);
            let g = (-x * x / (2.0 * eps)).exp() / (2.0 * std::f64::consts::PI * eps).sqrt();
            assert!((out.increments[j] - 3.0 * g * grid.spacing()).abs() < 1e-6, "{j}");
        }
    }

    #[test]
    fn dump_roundtrip_and_coarsening() {
        let grid = LatticeGrid::new(2, 1.0, 8).unwrap();
        let real = synthesize(&CorrelationModel::gaussian(2, 0.3).unwrap(), &grid, 0.02, 6, 99, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.bin");
        real.write_dump(&p).unwrap();
        let back = NoiseRealization::read_dump(&p).unwrap();
        assert_eq!(back, real);
        assert_eq!(back.hash(), real.hash());
        let c = real.coarsen_time(3).unwrap();
        assert_eq!(c.steps, 2);
        let s: f64 = (0..3).map(|k| real.slice(k)[5]).sum();
        assert!((c.slice(0)[5] - s).abs() < 1e-15);
        assert!(real.coarsen_time(4).is_err());
    }
}
