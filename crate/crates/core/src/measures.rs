//! Complex measures of the multivariate boson calculus and their filtered
//! variants.
//!
//! All measures are absolutely continuous with piecewise-constant densities
//! on the grid, so interval masses are exact cell sums. The 0-1 color
//! multipliers follow the rules: filters right of `dA^(k)` must contain k,
//! filters left of `dA^(k)*` must contain k, filters on both sides of
//! `dA^(k)∘` must contain k.

use crate::grid::Filter;
use crate::one_particle::OneParticleVector;
use crate::processes::ProcessKind;
use num_complex::Complex64;

/// Piecewise-constant complex density on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureDensity {
    pub dt: f64,
    pub cells: Vec<Complex64>,
}

impl MeasureDensity {
    pub fn zero(n_cells: usize, dt: f64) -> Self {
        MeasureDensity { dt, cells: vec![Complex64::ZERO; n_cells] }
    }

    pub fn constant(n_cells: usize, dt: f64, v: Complex64) -> Self {
        MeasureDensity { dt, cells: vec![v; n_cells] }
    }

    /// Mass of `[from, to)` in cells: `Σ density · Δ`.
    pub fn mass(&self, from_cell: usize, to_cell: usize) -> Complex64 {
        self.cells[from_cell..to_cell].iter().sum::<Complex64>() * self.dt
    }

    /// Total variation of `[from, to)`.
    pub fn variation_mass(&self, from_cell: usize, to_cell: usize) -> f64 {
        self.cells[from_cell..to_cell].iter().map(|v| v.norm()).sum::<f64>() * self.dt
    }

    /// Cell-wise absolute value |µ|.
    pub fn variation(&self) -> MeasureDensity {
        MeasureDensity {
            dt: self.dt,
            cells: self.cells.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect(),
        }
    }

    pub fn add(&self, other: &MeasureDensity) -> MeasureDensity {
        MeasureDensity {
            dt: self.dt,
            cells: self.cells.iter().zip(&other.cells).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> MeasureDensity {
        MeasureDensity { dt: self.dt, cells: self.cells.iter().map(|a| a * s).collect() }
    }
}

/// The boson measures `µ^η` for a pair `u, v` of one-particle vectors:
/// densities `v^(k)`, `conj(u^(k))`, `conj(u^(k))·v^(k)` and 1.
pub fn mu(eta: ProcessKind, u: &OneParticleVector, v: &OneParticleVector) -> MeasureDensity {
    let n = u.n_cells;
    let dt = u.dt;
    let cells = match eta {
        ProcessKind::Annihilation(k) => (0..n).map(|c| v.get(c, k)).collect(),
        ProcessKind::Creation(k) => (0..n).map(|c| u.get(c, k).conj()).collect(),
        ProcessKind::Number(k) => (0..n).map(|c| u.get(c, k).conj() * v.get(c, k)).collect(),
        ProcessKind::Time => vec![Complex64::ONE; n],
    };
    MeasureDensity { dt, cells }
}

/// The 0-1 color multiplier `1^η_{D,E}`.
pub fn multiplier(eta: ProcessKind, d: &Filter, e: &Filter) -> f64 {
    let hit = |f: &Filter, k: usize| if f.contains(k) { 1.0 } else { 0.0 };
    match eta {
        ProcessKind::Annihilation(k) => hit(e, k),
        ProcessKind::Creation(k) => hit(d, k),
        ProcessKind::Number(k) => hit(&d.intersect(e), k),
        ProcessKind::Time => 1.0,
    }
}

/// `µ^η_{D,E} = 1^η_{D,E} · µ^η`.
pub fn mu_filtered(
    eta: ProcessKind,
    d: &Filter,
    e: &Filter,
    u: &OneParticleVector,
    v: &OneParticleVector,
) -> MeasureDensity {
    mu(eta, u, v).scale(Complex64::new(multiplier(eta, d, e), 0.0))
}

/// Filter quadruple of a pair of integrals; the index convention is
/// `(-2, -1, 1, 2) = (E₁, D₁, D₂, E₂)`.
#[derive(Debug, Clone)]
pub struct FilterQuad {
    pub e1: Filter,
    pub d1: Filter,
    pub d2: Filter,
    pub e2: Filter,
}

impl FilterQuad {
    pub fn full() -> Self {
        FilterQuad { e1: Filter::Full, d1: Filter::Full, d2: Filter::Full, e2: Filter::Full }
    }

    fn ind(&self, slots: &[i8], k: usize) -> Complex64 {
        let ok = slots.iter().all(|s| match s {
            -2 => self.e1.contains(k),
            -1 => self.d1.contains(k),
            1 => self.d2.contains(k),
            2 => self.e2.contains(k),
            _ => unreachable!(),
        });
        if ok {
            Complex64::ONE
        } else {
            Complex64::ZERO
        }
    }
}

/// `µ₁` of the second fundamental lemma, keyed by the first integrator.
pub fn mu1(
    eta1: ProcessKind,
    q: &FilterQuad,
    u: &OneParticleVector,
    v: &OneParticleVector,
) -> MeasureDensity {
    match eta1 {
        ProcessKind::Annihilation(k) => {
            mu(ProcessKind::Creation(k), u, v).scale(q.ind(&[-2], k))
        }
        ProcessKind::Creation(k) => {
            mu(ProcessKind::Annihilation(k), u, v).scale(q.ind(&[-1, 1, 2], k))
        }
        ProcessKind::Number(k) => {
            mu(ProcessKind::Number(k), u, v).scale(q.ind(&[-2, -1, 1, 2], k))
        }
        ProcessKind::Time => mu(ProcessKind::Time, u, v),
    }
}

/// `µ₂` of the second fundamental lemma, keyed by the second integrator.
pub fn mu2(
    eta2: ProcessKind,
    q: &FilterQuad,
    u: &OneParticleVector,
    v: &OneParticleVector,
) -> MeasureDensity {
    match eta2 {
        ProcessKind::Annihilation(k) => {
            mu(ProcessKind::Annihilation(k), u, v).scale(q.ind(&[2], k))
        }
        ProcessKind::Creation(k) => {
            mu(ProcessKind::Creation(k), u, v).scale(q.ind(&[-2, -1, 1], k))
        }
        ProcessKind::Number(k) => {
            mu(ProcessKind::Number(k), u, v).scale(q.ind(&[-2, -1, 1, 2], k))
        }
        ProcessKind::Time => mu(ProcessKind::Time, u, v),
    }
}

/// The Itô measure `µ₁,₂`: nonzero only on the four nontrivial cells of the
/// table and only for matching colors.
pub fn mu12(
    eta1: ProcessKind,
    eta2: ProcessKind,
    q: &FilterQuad,
    u: &OneParticleVector,
    v: &OneParticleVector,
) -> MeasureDensity {
    let zero = MeasureDensity::zero(u.n_cells, u.dt);
    let (k1, k2) = match (eta1.color(), eta2.color()) {
        (Some(a), Some(b)) => (a, b),
        _ => return zero,
    };
    if k1 != k2 {
        return zero;
    }
    match (eta1, eta2) {
        (ProcessKind::Creation(_), ProcessKind::Creation(_)) => {
            mu(ProcessKind::Time, u, v).scale(q.ind(&[-1, 1], k1))
        }
        (ProcessKind::Creation(_), ProcessKind::Number(_)) => {
            mu(ProcessKind::Annihilation(k1), u, v).scale(q.ind(&[-1, 1, 2], k1))
        }
        (ProcessKind::Number(_), ProcessKind::Creation(_)) => {
            mu(ProcessKind::Creation(k1), u, v).scale(q.ind(&[-2, -1, 1], k1))
        }
        (ProcessKind::Number(_), ProcessKind::Number(_)) => {
            mu(ProcessKind::Number(k1), u, v).scale(q.ind(&[-2, -1, 1, 2], k1))
        }
        _ => zero,
    }
}

/// `σ^η_{D,E}` of the norm estimate, built on the diagonal pair `(u,u)`.
pub fn sigma(eta: ProcessKind, d: &Filter, e: &Filter, u: &OneParticleVector) -> MeasureDensity {
    let on = |f: bool| if f { Complex64::ONE } else { Complex64::ZERO };
    match eta {
        ProcessKind::Annihilation(k) => {
            mu(ProcessKind::Annihilation(k), u, u).scale(on(e.contains(k)))
        }
        ProcessKind::Creation(k) => {
            mu(ProcessKind::Creation(k), u, u).scale(on(d.intersect(e).contains(k)))
        }
        ProcessKind::Number(k) => {
            mu(ProcessKind::Number(k), u, u).scale(on(d.intersect(e).contains(k)))
        }
        ProcessKind::Time => mu(ProcessKind::Time, u, u),
    }
}

/// `ν^η_{D,E}` of the norm estimate (nonzero for creation and number only).
pub fn nu(eta: ProcessKind, d: &Filter, e: &Filter, u: &OneParticleVector) -> MeasureDensity {
    let on = |f: bool| if f { Complex64::ONE } else { Complex64::ZERO };
    match eta {
        ProcessKind::Creation(k) => mu(ProcessKind::Time, u, u).scale(on(d.contains(k))),
        ProcessKind::Number(k) => {
            mu(ProcessKind::Number(k), u, u).scale(on(d.intersect(e).contains(k)))
        }
        _ => MeasureDensity::zero(u.n_cells, u.dt),
    }
}

/// `ξ^η_{D,E} = |σ| + ν`; with the diagonal pair both parts are nonnegative.
pub fn xi(eta: ProcessKind, d: &Filter, e: &Filter, u: &OneParticleVector) -> MeasureDensity {
    sigma(eta, d, e, u).variation().add(&nu(eta, d, e, u))
}

/// `ν_u`: density `Σ_k |u^(k)(s)|² + 1`.
pub fn nu_u(u: &OneParticleVector) -> MeasureDensity {
    MeasureDensity {
        dt: u.dt,
        cells: u.abs_sq_density().iter().map(|&a| Complex64::new(a + 1.0, 0.0)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid() -> GridSpec {
        GridSpec::new(1.0, 8, 3, 3, 1).unwrap()
    }

    #[test]
    fn time_measure_mass() {
        let g = grid();
        let u = OneParticleVector::zero(&g);
        let v = OneParticleVector::zero(&g);
        // [0, 0.5] has time mass 0.5
        assert_eq!(mu(ProcessKind::Time, &u, &v).mass(0, 4), c(0.5, 0.0));
    }

    #[test]
    fn annihilation_measure_vanishes_without_component() {
        let g = grid();
        let u = OneParticleVector::indicator(&g, 8, 1).unwrap();
        let v = OneParticleVector::zero(&g);
        let m = mu(ProcessKind::Annihilation(2), &u, &v);
        assert_eq!(m.mass(0, 8), Complex64::ZERO);
        assert_eq!(m.variation_mass(0, 8), 0.0);
    }

    #[test]
    fn number_measure_unit_mass() {
        let g = grid();
        let u = OneParticleVector::indicator(&g, 8, 2).unwrap();
        // ∫₀¹ 1·1 = 1
        assert_eq!(mu(ProcessKind::Number(2), &u, &u).mass(0, 8), Complex64::ONE);
    }

    #[test]
    fn multiplier_table() {
        let d = Filter::from_colors([1]);
        let full = Filter::Full;
        let empty = Filter::empty();
        assert_eq!(multiplier(ProcessKind::Creation(2), &d, &full), 0.0);
        assert_eq!(multiplier(ProcessKind::Time, &empty, &empty), 1.0);
        assert_eq!(
            multiplier(
                ProcessKind::Number(1),
                &Filter::from_colors([1, 2]),
                &Filter::from_colors([1])
            ),
            1.0
        );
        assert_eq!(multiplier(ProcessKind::Annihilation(3), &full, &d), 0.0);
    }

    #[test]
    fn ito_measure_needs_matching_colors() {
        let g = grid();
        let u = OneParticleVector::indicator(&g, 8, 1).unwrap();
        let q = FilterQuad::full();
        let m = mu12(ProcessKind::Creation(1), ProcessKind::Creation(2), &q, &u, &u);
        assert_eq!(m.mass(0, 8), Complex64::ZERO);
        // creation-creation at equal colors carries the time measure
        let m = mu12(ProcessKind::Creation(1), ProcessKind::Creation(1), &q, &u, &u);
        assert_eq!(m.mass(2, 6), c(0.5, 0.0));
    }

    #[test]
    fn nu_u_density() {
        let g = grid();
        let u = OneParticleVector::indicator(&g, 8, 1).unwrap();
        // density |1|² + 1 = 2 on every cell
        assert_eq!(nu_u(&u).mass(0, 8), c(2.0, 0.0));
    }
}
