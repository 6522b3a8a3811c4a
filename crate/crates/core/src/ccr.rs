//! CCR operators and color projections on the truncated Fock space.
//!
//! Creation is the compression of true creation to the cutoff space, and
//! annihilation is constructed as its exact adjoint, so mutual adjointness
//! holds to the last bit. Number operators and all projections are diagonal
//! in the occupation basis.

use crate::error::Result;
use crate::fock::FockBasis;
use crate::grid::Filter;
use crate::one_particle::OneParticleVector;
use crate::sparse::SparseOperator;
use num_complex::Complex64;

/// `a*(f)` on the Fock factor, degree > n_max dropped.
pub fn creation_op(basis: &FockBasis, f: &OneParticleVector) -> SparseOperator {
    let dim = basis.fock_dim();
    let mut triplets = Vec::new();
    let d = basis.grid.one_particle_dim();
    let amps: Vec<Complex64> = (0..d).map(|m| f.mode_amplitude(m)).collect();
    for src in 0..dim {
        let occ = basis.occ(src);
        if occ.len() >= basis.grid.n_max {
            continue;
        }
        for (mode, &amp) in amps.iter().enumerate() {
            if amp == Complex64::ZERO {
                continue;
            }
            let mut target = occ.clone();
            let pos = target.partition_point(|&m| (m as usize) < mode);
            target.insert(pos, mode as u16);
            let mult = target.iter().filter(|&&m| m as usize == mode).count();
            let row = basis.lookup(&target).expect("target within cutoff");
            triplets.push((row as u32, src as u32, amp * (mult as f64).sqrt()));
        }
    }
    SparseOperator::from_triplets(dim, triplets, 0.0)
}

/// `a(f)`, the exact adjoint of the compressed creation.
pub fn annihilation_op(basis: &FockBasis, f: &OneParticleVector) -> SparseOperator {
    creation_op(basis, f).adjoint()
}

/// `λ(I_[0,cells·Δ] ⊗ |e_k⟩⟨e_k|)`: counts quanta of color k in the cells
/// below the cut.
pub fn number_op(basis: &FockBasis, cells: usize, color: usize) -> SparseOperator {
    let diag: Vec<Complex64> = (0..basis.fock_dim())
        .map(|i| {
            let count = basis
                .occ(i)
                .iter()
                .filter(|&&m| {
                    basis.grid.mode_cell(m as usize) < cells
                        && basis.grid.mode_color(m as usize) == color
                })
                .count();
            Complex64::new(count as f64, 0.0)
        })
        .collect();
    SparseOperator::from_diagonal(&diag)
}

/// `P^(V)`: keeps a state iff every occupied mode's color passes the filter.
/// `P^(∅)` is the vacuum projection, `P^(FULL)` the identity.
pub fn color_projection(basis: &FockBasis, filter: &Filter) -> Result<SparseOperator> {
    filter.validate(&basis.grid)?;
    if filter.is_full() {
        return Ok(SparseOperator::identity(basis.fock_dim()));
    }
    let diag: Vec<Complex64> = (0..basis.fock_dim())
        .map(|i| {
            let keep = basis
                .occ(i)
                .iter()
                .all(|&m| filter.contains(basis.grid.mode_color(m as usize)));
            if keep { Complex64::ONE } else { Complex64::ZERO }
        })
        .collect();
    Ok(SparseOperator::from_diagonal(&diag))
}

/// `P^[k]`: largest occupied color exactly k; `P^[0]` is the vacuum
/// projection.
pub fn band_projection(basis: &FockBasis, k: usize) -> Result<SparseOperator> {
    if k > basis.grid.n_colors {
        return Err(crate::error::FfError::BandOutOfRange { k, n_colors: basis.grid.n_colors });
    }
    let diag: Vec<Complex64> = (0..basis.fock_dim())
        .map(|i| {
            if basis.max_color(i) == k { Complex64::ONE } else { Complex64::ZERO }
        })
        .collect();
    Ok(SparseOperator::from_diagonal(&diag))
}

/// Color projection acting on the future factor only: modes in cells
/// `≥ from_cell` must pass the filter.
pub fn future_color_projection(
    basis: &FockBasis,
    filter: &Filter,
    from_cell: usize,
) -> Result<SparseOperator> {
    filter.validate(&basis.grid)?;
    if filter.is_full() {
        return Ok(SparseOperator::identity(basis.fock_dim()));
    }
    let diag: Vec<Complex64> = (0..basis.fock_dim())
        .map(|i| {
            let keep = basis.occ(i).iter().all(|&m| {
                basis.grid.mode_cell(m as usize) < from_cell
                    || filter.contains(basis.grid.mode_color(m as usize))
            });
            if keep { Complex64::ONE } else { Complex64::ZERO }
        })
        .collect();
    Ok(SparseOperator::from_diagonal(&diag))
}

/// Color projection acting on the past factor only: modes in cells
/// `< before_cell` must pass the filter.
pub fn past_color_projection(
    basis: &FockBasis,
    filter: &Filter,
    before_cell: usize,
) -> Result<SparseOperator> {
    filter.validate(&basis.grid)?;
    if filter.is_full() {
        return Ok(SparseOperator::identity(basis.fock_dim()));
    }
    let diag: Vec<Complex64> = (0..basis.fock_dim())
        .map(|i| {
            let keep = basis.occ(i).iter().all(|&m| {
                basis.grid.mode_cell(m as usize) >= before_cell
                    || filter.contains(basis.grid.mode_color(m as usize))
            });
            if keep { Complex64::ONE } else { Complex64::ZERO }
        })
        .collect();
    Ok(SparseOperator::from_diagonal(&diag))
}

/// Ampliation `1_{h0} ⊗ M` onto the full coordinates.
pub fn ampliate(basis: &FockBasis, fock_op: &SparseOperator) -> SparseOperator {
    SparseOperator::ampliate(fock_op, basis.grid.h0_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{partial_exp, ExponentialState, FockBasis};
    use crate::grid::GridSpec;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn setup() -> FockBasis {
        FockBasis::new(GridSpec::new(1.0, 8, 3, 3, 1).unwrap())
    }

    fn random_u(basis: &FockBasis, seed: u64) -> OneParticleVector {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = &basis.grid;
        let mut u = OneParticleVector::zero(g);
        for cell in 0..g.n_cells {
            for color in 1..=g.n_colors {
                u.set(cell, color, c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
                    .unwrap();
            }
        }
        u
    }

    #[test]
    fn annihilation_eigenrelation_on_exponentials() {
        // a(f) ε(u) = ⟨f,u⟩ ε(u) up to the dropped top sector
        let basis = setup();
        let g = basis.grid;
        let f = OneParticleVector::indicator(&g, 4, 2).unwrap();
        let u = random_u(&basis, 7);
        let a = annihilation_op(&basis, &f);
        let eps = basis.exponential_amplitudes(&u).unwrap();
        let applied = a.apply(&eps);
        let eig = f.inner(&u);
        // Compare on sectors below the cutoff (the top sector of a·ε needs
        // the dropped n_max+1 sector of ε).
        for i in basis.sector(0).chain(basis.sector(1)).chain(basis.sector(2)) {
            let expect = eig * eps[i];
            assert!(
                (applied[i] - expect).norm() < 1e-12,
                "state {i}: {} vs {}",
                applied[i],
                expect
            );
        }
    }

    #[test]
    fn creation_matrix_element_is_density_integral() {
        // ⟨ε(u), a*(χ_[0,t] e_k) ε(v)⟩ ≈ (∫₀ᵗ conj u^(k)) ⟨ε(u), ε(v)⟩
        let basis = setup();
        let g = basis.grid;
        let u = random_u(&basis, 1);
        let v = random_u(&basis, 2);
        let f = OneParticleVector::indicator(&g, 6, 1).unwrap();
        let astar = creation_op(&basis, &f);
        let eu = basis.exponential_amplitudes(&u).unwrap();
        let ev = basis.exponential_amplitudes(&v).unwrap();
        let lhs = astar.matrix_element(&eu, &ev);
        let integral = f.inner(&u).conj();
        let rhs = integral * partial_exp(u.inner(&v), g.n_max);
        // truncation-level agreement
        assert!((lhs - rhs).norm() < 2e-3, "{lhs} vs {rhs}");
    }

    #[test]
    fn number_annihilates_vacuum_and_counts() {
        let basis = setup();
        let n = number_op(&basis, 8, 2);
        let mut vac = vec![Complex64::ZERO; basis.fock_dim()];
        vac[0] = Complex64::ONE;
        assert!(n.apply(&vac).iter().all(|z| *z == Complex64::ZERO));
        // two quanta of color 2 in cell 0
        let occ = vec![basis.grid.mode(0, 2) as u16, basis.grid.mode(0, 2) as u16];
        let i = basis.lookup(&occ).unwrap();
        let mut x = vec![Complex64::ZERO; basis.fock_dim()];
        x[i] = Complex64::ONE;
        assert_eq!(n.apply(&x)[i], c(2.0, 0.0));
    }

    #[test]
    fn projections_algebra() {
        let basis = setup();
        let g = basis.grid;
        // P^(V) P^(W) = P^(V∩W), exhaustively over C = 3
        for v in Filter::all_subsets(g.n_colors) {
            let pv = color_projection(&basis, &v).unwrap();
            // idempotent and self-adjoint
            assert_eq!(pv.mul(&pv), pv);
            assert_eq!(pv.adjoint(), pv);
            for w in Filter::all_subsets(g.n_colors) {
                let pw = color_projection(&basis, &w).unwrap();
                let pvw = color_projection(&basis, &v.intersect(&w)).unwrap();
                assert_eq!(pv.mul(&pw), pvw);
            }
        }
        // P^(∅) ε(u) = Ω
        let u = random_u(&basis, 3);
        let eps = basis.exponential_amplitudes(&u).unwrap();
        let p0 = color_projection(&basis, &Filter::empty()).unwrap();
        let projected = p0.apply(&eps);
        assert_eq!(projected[0], Complex64::ONE);
        assert!(projected[1..].iter().all(|z| *z == Complex64::ZERO));
        // P^(V) ε(u) = ε(Π^V u) exactly
        let filt = Filter::from_colors([1]);
        let pv = color_projection(&basis, &filt).unwrap();
        let lhs = pv.apply(&eps);
        let rhs = basis.exponential_amplitudes(&u.restrict_colors(&filt)).unwrap();
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn bands_partition_colors() {
        let basis = setup();
        let g = basis.grid;
        // P^[0] = P_Ω
        let b0 = band_projection(&basis, 0).unwrap();
        let p_empty = color_projection(&basis, &Filter::empty()).unwrap();
        assert_eq!(b0, p_empty);
        // orthogonality and the resolution Σ_k P^[k] = P^({1..C})
        let mut sum = SparseOperator::zero(basis.fock_dim());
        for k in 0..=g.n_colors {
            let bk = band_projection(&basis, k).unwrap();
            for l in 0..k {
                let bl = band_projection(&basis, l).unwrap();
                assert!(bk.mul(&bl).is_zero());
            }
            sum = sum.add(&bk);
        }
        let full_range = color_projection(&basis, &Filter::range(g.n_colors)).unwrap();
        assert_eq!(sum, full_range);
        // difference formula P^[k] = P^({1..k}) − P^({1..k−1})
        for k in 1..=g.n_colors {
            let lhs = band_projection(&basis, k).unwrap();
            let rhs = color_projection(&basis, &Filter::range(k))
                .unwrap()
                .sub(&color_projection(&basis, &Filter::range(k - 1)).unwrap());
            assert_eq!(lhs, rhs);
        }
        assert!(band_projection(&basis, g.n_colors + 1).is_err());
    }

    #[test]
    fn filtered_commutation_identity() {
        // P^(V) a*(χ e_k) = 1_V(k) a*(χ e_k) P^(V), exact sparse equality
        let basis = setup();
        let g = basis.grid;
        for k in 1..=g.n_colors {
            let f = OneParticleVector::indicator(&g, 5, k).unwrap();
            let astar = creation_op(&basis, &f);
            for v in Filter::all_subsets(g.n_colors) {
                let pv = color_projection(&basis, &v).unwrap();
                let lhs = pv.mul(&astar);
                let rhs = if v.contains(k) {
                    astar.mul(&pv)
                } else {
                    SparseOperator::zero(basis.fock_dim())
                };
                assert_eq!(lhs, rhs, "k={k} V={v}");
            }
        }
    }

    #[test]
    fn number_and_time_commute_with_projections() {
        let basis = setup();
        let g = basis.grid;
        let n = number_op(&basis, 4, 2);
        for v in Filter::all_subsets(g.n_colors) {
            let pv = color_projection(&basis, &v).unwrap();
            assert_eq!(pv.mul(&n), n.mul(&pv));
        }
    }

    #[test]
    fn adjointness_of_ladder_pair() {
        let basis = setup();
        let g = basis.grid;
        let f = OneParticleVector::indicator(&g, 3, 1).unwrap();
        let astar = creation_op(&basis, &f);
        let a = annihilation_op(&basis, &f);
        assert_eq!(astar.adjoint(), a);
        assert_eq!(a.adjoint(), astar);
    }

    #[test]
    fn split_factorizes_matrix_elements() {
        // mid-grid: ⟨x,y⟩ = ⟨x_t], y_t]⟩ ⟨x_[t, y_[t⟩ for truncated states
        // evaluated through the shared cutoff; exact at the one-particle
        // level, truncation-level for the exponentials.
        let g = GridSpec::new(1.0, 4, 2, 4, 1).unwrap();
        let basis = FockBasis::new(g);
        let mut u = OneParticleVector::zero(&g);
        u.set(0, 1, c(0.4, 0.1)).unwrap();
        u.set(3, 2, c(0.2, -0.3)).unwrap();
        let x = ExponentialState::new(vec![Complex64::ONE], u);
        let mut v = OneParticleVector::zero(&g);
        v.set(1, 2, c(0.3, 0.0)).unwrap();
        v.set(2, 1, c(-0.1, 0.2)).unwrap();
        let y = ExponentialState::new(vec![Complex64::ONE], v);
        let (xp, xf) = x.split(&g, 0.5).unwrap();
        let (yp, yf) = y.split(&g, 0.5).unwrap();
        let whole = x.materialize(&basis).unwrap().inner(&y.materialize(&basis).unwrap());
        let p = xp.materialize(&basis).unwrap().inner(&yp.materialize(&basis).unwrap());
        let f = xf.materialize(&basis).unwrap().inner(&yf.materialize(&basis).unwrap());
        assert!((whole - p * f).norm() < 1e-4, "{whole} vs {}", p * f);
    }
}
