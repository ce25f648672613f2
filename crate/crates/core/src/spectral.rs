//! FFT plans and spectral multipliers on a periodic lattice.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::grid::LatticeGrid;

/// Immutable FFT plans for one lattice; cheap to clone and share across threads.
#[derive(Clone)]
pub struct SpectralPlan {
    grid: LatticeGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("grid", &self.grid).finish()
    }
}

/// Scratch buffers reused across transforms by one thread.
#[derive(Debug, Default)]
pub struct Workspace {
    buf: Vec<Complex64>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SpectralPlan {
    pub fn new(grid: LatticeGrid) -> Self {
        let n = grid.points();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let dk = std::f64::consts::PI / grid.half_width();
        let wavenumbers = (0..n)
            .map(|k| if k <= n / 2 { k as f64 * dk } else { (k as f64 - n as f64) * dk })
            .collect();
        Self { grid, forward, inverse, wavenumbers }
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    /// Angular wavenumbers `ξ_k = π k / L` in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Wavevector of a flat spectral index.
    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.grid.unflatten(idx);
        match self.grid.dim() {
            1 => [self.wavenumbers[i], 0.0],
            _ => [self.wavenumbers[i], self.wavenumbers[j]],
        }
    }

    /// Evaluates a symbol at every lattice wavevector.
    pub fn symbol(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.grid.cells()).map(|i| f(self.wavevector(i))).collect()
    }

    fn transform(&self, data: &mut [Complex64], ws: &mut Workspace, inverse: bool) {
        let fft = if inverse { &self.inverse } else { &self.forward };
        let n = self.grid.points();
        let need = fft.get_inplace_scratch_len();
        if ws.scratch.len() < need {
            ws.scratch.resize(need, Complex64::default());
        }
        // rows (last axis)
        for row in data.chunks_exact_mut(n) {
            fft.process_with_scratch(row, &mut ws.scratch[..need]);
        }
        if self.grid.dim() == 2 {
            ws.line.resize(n, Complex64::default());
            for col in 0..n {
                for r in 0..n {
                    ws.line[r] = data[r * n + col];
                }
                fft.process_with_scratch(&mut ws.line, &mut ws.scratch[..need]);
                for r in 0..n {
                    data[r * n + col] = ws.line[r];
                }
            }
        }
    }

    /// Unnormalized forward DFT in place.
    pub fn forward(&self, data: &mut [Complex64], ws: &mut Workspace) {
        self.transform(data, ws, false);
    }

    /// Normalized inverse DFT in place.
    pub fn inverse(&self, data: &mut [Complex64], ws: &mut Workspace) {
        self.transform(data, ws, true);
        let scale = 1.0 / self.grid.cells() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Multiplies the DFT of a real field by a real symbol, in place.
    pub fn apply_symbol(&self, values: &mut [f64], symbol: &[f64], ws: &mut Workspace) {
        debug_assert_eq!(values.len(), symbol.len());
        let mut buf = std::mem::take(&mut ws.buf);
        buf.clear();
        buf.extend(values.iter().map(|&v| Complex64::new(v, 0.0)));
        self.forward(&mut buf, ws);
        for (b, s) in buf.iter_mut().zip(symbol) {
            *b *= *s;
        }
        self.inverse(&mut buf, ws);
        for (v, b) in values.iter_mut().zip(&buf) {
            *v = b.re;
        }
        ws.buf = buf;
    }

    /// Real symbol of convolution (`Δx^d`-weighted) with an even real kernel
    /// given by its values at the lattice offsets in FFT order.
    pub fn kernel_symbol(&self, kernel: &[f64], ws: &mut Workspace) -> Vec<f64> {
        let mut buf: Vec<Complex64> = kernel.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf, ws);
        let vol = self.grid.cell_volume();
        buf.iter().map(|c| c.re * vol).collect()
    }

    /// Evaluates `f` at the minimum-image offsets of the lattice, in FFT order.
    pub fn offsets(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.grid.cells())
            .map(|idx| {
                let [i, j] = self.grid.unflatten(idx);
                let x = self.grid.wrapped_offset(i);
                let y = if self.grid.dim() == 2 { self.grid.wrapped_offset(j) } else { 0.0 };
                f([x, y])
            })
            .collect()
    }
}

/// Shared plan cache keyed by grid.
pub fn plan_for(grid: &LatticeGrid) -> Result<Arc<SpectralPlan>> {
    use std::collections::HashMap;
    use std::sync::Mutex;
    static CACHE: Mutex<Option<HashMap<(usize, u64, usize), Arc<SpectralPlan>>>> = Mutex::new(None);
    let key = (grid.dim(), grid.half_width().to_bits(), grid.points());
    let mut guard = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    let map = guard.get_or_insert_with(HashMap::new);
    Ok(map.entry(key).or_insert_with(|| Arc::new(SpectralPlan::new(*grid))).clone())
}
