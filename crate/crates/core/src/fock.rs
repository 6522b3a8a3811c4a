//! Truncated multiple symmetric Fock space over the one-particle grid.
//!
//! Basis states are occupation multisets over the (cell, color) modes with
//! total particle number at most `n_max`, ordered degree-major then
//! lexicographically. The truncated exponential vector of `u` has the exact
//! property `⟨ε(u), ε(v)⟩ = Σ_{n ≤ n_max} ⟨u,v⟩ⁿ/n!`.

use crate::error::{FfError, Result};
use crate::grid::GridSpec;
use crate::one_particle::OneParticleVector;
use num_complex::Complex64;
use std::collections::HashMap;
use std::fmt::Write as _;

/// Occupation multiset: sorted mode indices with repetition.
pub type Occ = Vec<u16>;

/// Enumerated basis of `h0 ⊗ Γ_{≤n_max}(H)` for one grid.
#[derive(Debug)]
pub struct FockBasis {
    pub grid: GridSpec,
    states: Vec<Occ>,
    index: HashMap<Occ, usize>,
    degree_offsets: Vec<usize>,
}

impl FockBasis {
    pub fn new(grid: GridSpec) -> Self {
        let d = grid.one_particle_dim();
        let mut states: Vec<Occ> = Vec::new();
        let mut degree_offsets = Vec::with_capacity(grid.n_max + 2);
        for n in 0..=grid.n_max {
            degree_offsets.push(states.len());
            let mut occ: Occ = Vec::with_capacity(n);
            enumerate_multisets(d as u16, n, 0, &mut occ, &mut states);
        }
        degree_offsets.push(states.len());
        let index = states.iter().cloned().zip(0..).collect();
        FockBasis { grid, states, index, degree_offsets }
    }

    /// Number of Fock basis states.
    pub fn fock_dim(&self) -> usize {
        self.states.len()
    }

    /// Dimension of `h0 ⊗ Γ_{≤n_max}`.
    pub fn total_dim(&self) -> usize {
        self.grid.h0_dim * self.fock_dim()
    }

    pub fn occ(&self, i: usize) -> &Occ {
        &self.states[i]
    }

    pub fn lookup(&self, occ: &Occ) -> Option<usize> {
        self.index.get(occ).copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.states[i].len()
    }

    /// Index range of the given particle-number sector.
    pub fn sector(&self, n: usize) -> std::ops::Range<usize> {
        self.degree_offsets[n]..self.degree_offsets[n + 1]
    }

    /// Flat coordinate of (h0 component, Fock state).
    pub fn coord(&self, h0: usize, fock: usize) -> usize {
        h0 * self.fock_dim() + fock
    }

    /// Largest color occupied by the state; 0 for the vacuum.
    pub fn max_color(&self, i: usize) -> usize {
        self.states[i]
            .iter()
            .map(|&m| self.grid.mode_color(m as usize))
            .max()
            .unwrap_or(0)
    }

    /// Amplitudes of the truncated exponential vector of `u` (Fock part
    /// only): `∏ c_mode^{m}/√(m!)` with `c = value·√Δ`, vacuum amplitude 1.
    pub fn exponential_amplitudes(&self, u: &OneParticleVector) -> Result<Vec<Complex64>> {
        if !u.matches(&self.grid) {
            return Err(FfError::DimensionMismatch(
                "one-particle vector does not match the grid".into(),
            ));
        }
        let mut out = vec![Complex64::ZERO; self.fock_dim()];
        for (i, occ) in self.states.iter().enumerate() {
            let mut amp = Complex64::ONE;
            let mut j = 0;
            while j < occ.len() {
                let mode = occ[j];
                let mut mult = 0usize;
                while j < occ.len() && occ[j] == mode {
                    mult += 1;
                    j += 1;
                }
                let c = u.mode_amplitude(mode as usize);
                if c == Complex64::ZERO {
                    amp = Complex64::ZERO;
                    break;
                }
                amp *= c.powu(mult as u32) / factorial(mult).sqrt();
            }
            out[i] = amp;
        }
        Ok(out)
    }

    /// Text dump of a Fock-part amplitude vector: one line per state,
    /// `degree | mode multiset | re | im`.
    pub fn dump_fock_vector(&self, amplitudes: &[Complex64]) -> String {
        let mut s = String::new();
        for (i, occ) in self.states.iter().enumerate() {
            let a = amplitudes[i];
            if a == Complex64::ZERO {
                continue;
            }
            let modes: Vec<String> = occ.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(s, "{} | [{}] | {:.12e} | {:.12e}", occ.len(), modes.join(","), a.re, a.im);
        }
        s
    }
}

fn enumerate_multisets(d: u16, remaining: usize, min_mode: u16, occ: &mut Occ, out: &mut Vec<Occ>) {
    if remaining == 0 {
        out.push(occ.clone());
        return;
    }
    for mode in min_mode..d {
        occ.push(mode);
        enumerate_multisets(d, remaining - 1, mode, occ, out);
        occ.pop();
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Degree-`≤ n` partial sum of `exp(z)`.
pub fn partial_exp(z: Complex64, n: usize) -> Complex64 {
    let mut term = Complex64::ONE;
    let mut acc = Complex64::ONE;
    for k in 1..=n {
        term *= z / k as f64;
        acc += term;
    }
    acc
}

/// ℓ²-mass of the sectors of `ε(u)` dropped by the cutoff:
/// `sqrt(Σ_{n > n_max} ‖u‖²ⁿ/n!)`.
pub fn dropped_mass(norm_sq: f64, n_max: usize) -> f64 {
    let mut term = 1.0;
    for k in 1..=n_max {
        term *= norm_sq / k as f64;
    }
    // tail Σ_{n>n_max} a^n/n! summed forward until it stops changing
    let mut tail = 0.0;
    let mut k = n_max + 1;
    term *= norm_sq / k as f64;
    loop {
        let new = tail + term;
        if new == tail || k > n_max + 200 {
            break;
        }
        tail = new;
        k += 1;
        term *= norm_sq / k as f64;
    }
    tail.max(0.0).sqrt()
}

/// A vector in the truncated `h0 ⊗ Γ` space, flat h0-major coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub data: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(dim: usize) -> Self {
        StateVector { data: vec![Complex64::ZERO; dim] }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn add_scaled(&mut self, other: &StateVector, s: Complex64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn scale(&self, s: Complex64) -> StateVector {
        StateVector { data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        StateVector {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// A pure exponential state `w ε(u)` kept in symbolic form, so measure
/// tables and splits can reach `u` directly.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialState {
    pub w: Vec<Complex64>,
    pub u: OneParticleVector,
}

impl ExponentialState {
    pub fn new(w: Vec<Complex64>, u: OneParticleVector) -> Self {
        ExponentialState { w, u }
    }

    pub fn vacuum(grid: &GridSpec, w: Vec<Complex64>) -> Self {
        ExponentialState { w, u: OneParticleVector::zero(grid) }
    }

    pub fn materialize(&self, basis: &FockBasis) -> Result<StateVector> {
        if self.w.len() != basis.grid.h0_dim {
            return Err(FfError::DimensionMismatch(format!(
                "initial component has dim {}, expected {}",
                self.w.len(),
                basis.grid.h0_dim
            )));
        }
        let amps = basis.exponential_amplitudes(&self.u)?;
        let mut out = StateVector::zero(basis.total_dim());
        for (a, &wa) in self.w.iter().enumerate() {
            if wa == Complex64::ZERO {
                continue;
            }
            for (i, &v) in amps.iter().enumerate() {
                out.data[basis.coord(a, i)] = wa * v;
            }
        }
        Ok(out)
    }

    /// Exact inner product of the truncated states:
    /// `⟨w,z⟩ · Σ_{n ≤ n_max} ⟨u,v⟩ⁿ/n!`.
    pub fn inner_truncated(&self, other: &ExponentialState, n_max: usize) -> Complex64 {
        let wz: Complex64 = self.w.iter().zip(&other.w).map(|(a, b)| a.conj() * b).sum();
        wz * partial_exp(self.u.inner(&other.u), n_max)
    }

    /// Past/future factorization at a grid time: `wε(u) ↦ (wε(u_{t]}), ε(u_{[t}))`.
    pub fn split(&self, grid: &GridSpec, t: f64) -> Result<(ExponentialState, ExponentialState)> {
        let j = grid.cells_at_time(t)?;
        let past = ExponentialState {
            w: self.w.clone(),
            u: self.u.restrict_cells(0, j),
        };
        let future = ExponentialState {
            w: vec![Complex64::ONE],
            u: self.u.restrict_cells(j, grid.n_cells),
        };
        Ok((past, future))
    }

    /// Recombine a split pair; exact for step functions on grid points.
    pub fn recombine(past: &ExponentialState, future: &ExponentialState) -> ExponentialState {
        ExponentialState { w: past.w.clone(), u: past.u.add(&future.u) }
    }
}
