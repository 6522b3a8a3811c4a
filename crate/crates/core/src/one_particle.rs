//! Step-function elements of the truncated one-particle space
//! `L²([0,T], G)`.

use crate::error::{FfError, Result};
use crate::grid::{Filter, GridSpec};
use num_complex::Complex64;

/// A step function `u` with one complex amplitude per (cell, color) pair.
/// Component `u^(k)` is the step function over the cells of color k.
///
/// The inner product carries the cell width: `⟨u,v⟩ = Σ Δ·conj(u)·v`, so the
/// orthonormal-mode amplitude of a coefficient is `value·√Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneParticleVector {
    pub n_cells: usize,
    pub n_colors: usize,
    pub dt: f64,
    coeffs: Vec<Complex64>,
}

impl OneParticleVector {
    pub fn zero(grid: &GridSpec) -> Self {
        OneParticleVector {
            n_cells: grid.n_cells,
            n_colors: grid.n_colors,
            dt: grid.dt(),
            coeffs: vec![Complex64::ZERO; grid.one_particle_dim()],
        }
    }

    /// `χ_[0,t] ⊗ e_k` with value 1 on the first `cells` cells of color k.
    pub fn indicator(grid: &GridSpec, cells: usize, color: usize) -> Result<Self> {
        grid.check_color(color)?;
        if cells > grid.n_cells {
            return Err(FfError::OffGridTime { t: grid.time_at(cells), dt: grid.dt() });
        }
        let mut u = Self::zero(grid);
        for c in 0..cells {
            u.coeffs[grid.mode(c, color)] = Complex64::ONE;
        }
        Ok(u)
    }

    pub fn matches(&self, grid: &GridSpec) -> bool {
        self.n_cells == grid.n_cells && self.n_colors == grid.n_colors
    }

    pub fn set(&mut self, cell: usize, color: usize, value: Complex64) -> Result<()> {
        if cell >= self.n_cells || color == 0 || color > self.n_colors {
            return Err(FfError::DimensionMismatch(format!(
                "(cell {cell}, color {color}) outside {}x{}",
                self.n_cells, self.n_colors
            )));
        }
        self.coeffs[cell * self.n_colors + (color - 1)] = value;
        Ok(())
    }

    pub fn get(&self, cell: usize, color: usize) -> Complex64 {
        self.coeffs[cell * self.n_colors + (color - 1)]
    }

    pub fn mode_value(&self, mode: usize) -> Complex64 {
        self.coeffs[mode]
    }

    /// Amplitude of the mode in the orthonormal basis, `value·√Δ`.
    pub fn mode_amplitude(&self, mode: usize) -> Complex64 {
        self.coeffs[mode] * self.dt.sqrt()
    }

    pub fn inner(&self, other: &OneParticleVector) -> Complex64 {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        let mut acc = Complex64::ZERO;
        for (a, b) in self.coeffs.iter().zip(&other.coeffs) {
            acc += a.conj() * b;
        }
        acc * self.dt
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.dt
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Largest color with a nonzero component; 0 for the zero vector.
    pub fn color_support(&self) -> usize {
        let mut max = 0;
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.norm_sqr() > 0.0 {
                max = max.max(i % self.n_colors + 1);
            }
        }
        max
    }

    /// Apply the one-particle color projection `Π^V`.
    pub fn restrict_colors(&self, filter: &Filter) -> OneParticleVector {
        let mut out = self.clone();
        for (i, a) in out.coeffs.iter_mut().enumerate() {
            if !filter.contains(i % self.n_colors + 1) {
                *a = Complex64::ZERO;
            }
        }
        out
    }

    /// Keep cells in `[from, to)`, zero elsewhere.
    pub fn restrict_cells(&self, from: usize, to: usize) -> OneParticleVector {
        let mut out = self.clone();
        for (i, a) in out.coeffs.iter_mut().enumerate() {
            let cell = i / self.n_colors;
            if cell < from || cell >= to {
                *a = Complex64::ZERO;
            }
        }
        out
    }

    pub fn add(&self, other: &OneParticleVector) -> OneParticleVector {
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> OneParticleVector {
        let mut out = self.clone();
        for a in out.coeffs.iter_mut() {
            *a *= s;
        }
        out
    }

    /// Density `Σ_k |u^(k)(s)|²` per cell, used by `ν_u`.
    pub fn abs_sq_density(&self) -> Vec<f64> {
        let mut cells = vec![0.0; self.n_cells];
        for (i, a) in self.coeffs.iter().enumerate() {
            cells[i / self.n_colors] += a.norm_sqr();
        }
        cells
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|a| a.norm_sqr() == 0.0)
    }
}
