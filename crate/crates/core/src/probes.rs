//! Probe catalog for sup-norm checks on the exponential domain.
//!
//! All estimates of the calculus are stated on states `wε(u)`; the catalog
//! provides 16 fixed pairs of small norm plus seeded-random pairs.

use crate::fock::ExponentialState;
use crate::grid::GridSpec;
use crate::one_particle::OneParticleVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded random exponential state with `‖u‖ ≤ max_norm`.
pub fn random_exponential<R: Rng>(grid: &GridSpec, rng: &mut R, max_norm: f64) -> ExponentialState {
    let mut u = OneParticleVector::zero(grid);
    for cell in 0..grid.n_cells {
        for color in 1..=grid.n_colors {
            u.set(
                cell,
                color,
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            )
            .unwrap();
        }
    }
    let n = u.norm();
    if n > 0.0 {
        let target = rng.gen_range(0.3 * max_norm..max_norm);
        u = u.scale(Complex64::new(target / n, 0.0));
    }
    let mut w: Vec<Complex64> = (0..grid.h0_dim)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let wn: f64 = w.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if wn > 0.0 {
        for a in w.iter_mut() {
            *a /= wn;
        }
    } else {
        w[0] = Complex64::ONE;
    }
    ExponentialState::new(w, u)
}

/// The fixed catalog: unit initial vectors combined with single-mode and
/// two-color step functions, all with `‖u‖ ≤ 0.5`.
pub fn fixed_catalog(grid: &GridSpec) -> Vec<ExponentialState> {
    let mut out = Vec::new();
    let e0 = {
        let mut w = vec![Complex64::ZERO; grid.h0_dim];
        w[0] = Complex64::ONE;
        w
    };
    let mixed = {
        let mut w = vec![Complex64::ZERO; grid.h0_dim];
        w[0] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        w[grid.h0_dim - 1] += Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
        w
    };
    let amplitudes = [
        Complex64::new(0.4, 0.0),
        Complex64::new(0.0, 0.35),
        Complex64::new(-0.3, 0.2),
        Complex64::new(0.25, -0.25),
    ];
    for (i, &a) in amplitudes.iter().enumerate() {
        for (j, w) in [e0.clone(), mixed.clone()].into_iter().enumerate() {
            // one single-mode pulse and one two-color pulse per (i, j)
            let cell = (i * 2 + j) % grid.n_cells;
            let color = i % grid.n_colors + 1;
            let mut u = OneParticleVector::zero(grid);
            u.set(cell, color, a).unwrap();
            out.push(ExponentialState::new(w.clone(), u));
            let mut u2 = OneParticleVector::zero(grid);
            u2.set(cell, color, a.scale(0.7)).unwrap();
            u2.set((cell + 3) % grid.n_cells, (color % grid.n_colors) + 1, a.scale(0.5)).unwrap();
            out.push(ExponentialState::new(w, u2));
        }
    }
    debug_assert_eq!(out.len(), 16);
    out
}

/// Fixed catalog plus `n_random` seeded-random pairs.
pub fn probe_catalog(grid: &GridSpec, n_random: usize, seed: u64) -> Vec<ExponentialState> {
    let mut out = fixed_catalog(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        out.push(random_exponential(grid, &mut rng, 0.5));
    }
    out
}
