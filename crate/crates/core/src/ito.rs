//! Itô multiplication: the boson table, the filtered Itô correction, m-free
//! integrals and their measure formulas, the m-free Itô table and the
//! partial-trace corrections.

use crate::biprocess::{rewrite_with_projection, LegValue, SimpleBiprocess};
use crate::ccr::{ampliate, band_projection, color_projection};
use crate::error::Result;
use crate::fock::{ExponentialState, FockBasis, StateVector};
use crate::grid::{Filter, GridSpec, Projection};
use crate::integrate::{
    cell_increments, integral_apply, integral_operator, ito_inner, tail_bound_pair, ItoInner,
};
use crate::measures;
use crate::processes::{expansion, mfree_increment, MFreeSort, ProcessKind};
use crate::sparse::SparseOperator;
use num_complex::Complex64;

/// Nontrivial boson Itô table with the color-match condition applied:
/// `dA^(k)dA^(k)* = dA^(0)`, `dA^(k)dA^(k)∘ = dA^(k)`,
/// `dA^(k)∘dA^(k)* = dA^(k)*`, `dA^(k)∘dA^(k)∘ = dA^(k)∘`.
pub fn boson_table(eta1: ProcessKind, eta2: ProcessKind) -> Option<ProcessKind> {
    let (k1, k2) = (eta1.color()?, eta2.color()?);
    if k1 != k2 {
        return None;
    }
    match (eta1, eta2) {
        (ProcessKind::Annihilation(_), ProcessKind::Creation(_)) => Some(ProcessKind::Time),
        (ProcessKind::Annihilation(_), ProcessKind::Number(_)) => {
            Some(ProcessKind::Annihilation(k1))
        }
        (ProcessKind::Number(_), ProcessKind::Creation(_)) => Some(ProcessKind::Creation(k1)),
        (ProcessKind::Number(_), ProcessKind::Number(_)) => Some(ProcessKind::Number(k1)),
        _ => None,
    }
}

/// The filtered Itô correction `dI₁dI₂` for differentials
/// `dI₁ = G₁ dA^{η₁} F₁` and `dI₂ = F₂ dA^{η₂} G₂`: integrator from the
/// boson table, integrand `ρ(F₁F₂) = 1_{D₁∩D₂}(k₁)·F₁F₂` placed either
/// right of the tensor (against G₂) or left (against G₁).
pub struct ItoCorrection {
    pub integrator: Option<ProcessKind>,
    /// `G₁ ⊗ ρ(F₁F₂)G₂`.
    pub placement_a: Option<SimpleBiprocess>,
    /// `G₁ρ(F₁F₂) ⊗ G₂`.
    pub placement_b: Option<SimpleBiprocess>,
}

/// Build the correction from `x1 = G₁⊗F₁ ∈ A(E₁,D₁)` and
/// `x2 = F₂⊗G₂ ∈ A(D₂,E₂)`. A structurally zero product (trivial table cell
/// or `k₁ ∉ D₁∩D₂`) is reported as an explicit `None` integrator.
pub fn ito_correction(
    grid: &GridSpec,
    x1: &SimpleBiprocess,
    eta1: ProcessKind,
    x2: &SimpleBiprocess,
    eta2: ProcessKind,
) -> ItoCorrection {
    let none = ItoCorrection { integrator: None, placement_a: None, placement_b: None };
    let out = match boson_table(eta1, eta2) {
        Some(out) => out,
        None => return none,
    };
    // x1 ∈ A(E₁, D₁): left leg G₁ with E₁, right leg F₁ with D₁
    let (e1_filter, d1_filter) = (&x1.d, &x1.e);
    let (d2_filter, e2_filter) = (&x2.d, &x2.e);
    let k1 = eta1.color().expect("table rows carry colors");
    if !d1_filter.intersect(d2_filter).contains(k1) {
        return none;
    }
    // merged partition
    let mut partition: Vec<usize> = x1.partition.iter().chain(&x2.partition).copied().collect();
    partition.sort_unstable();
    partition.dedup();
    let dd = d1_filter.intersect(d2_filter);
    let mut left_a = Vec::new();
    let mut right_a = Vec::new();
    let mut left_b = Vec::new();
    let mut right_b = Vec::new();
    for &start in &partition {
        let s1 = x1.segment_for_cell(start);
        let s2 = x2.segment_for_cell(start);
        let g1 = &x1.left[s1];
        let f1 = &x1.right[s1];
        let f2 = &x2.left[s2];
        let g2 = &x2.right[s2];
        let f1f2 = f1.product(d1_filter, f2, d2_filter, grid.h0_dim, start);
        // placement A: G₁ ⊗ ρ(F₁F₂)G₂
        left_a.push(g1.clone());
        right_a.push(f1f2.product(&dd, g2, e2_filter, grid.h0_dim, start));
        // placement B: G₁ρ(F₁F₂) ⊗ G₂
        left_b.push(g1.product(e1_filter, &f1f2, &dd, grid.h0_dim, start));
        right_b.push(g2.clone());
    }
    let a = SimpleBiprocess {
        d: e1_filter.clone(),
        e: dd.intersect(e2_filter),
        partition: partition.clone(),
        left: left_a,
        right: right_a,
    };
    let b = SimpleBiprocess {
        d: e1_filter.intersect(&dd),
        e: e2_filter.clone(),
        partition,
        left: left_b,
        right: right_b,
    };
    ItoCorrection { integrator: Some(out), placement_a: Some(a), placement_b: Some(b) }
}

/// One evaluation of the filtered Itô formula at matrix-element level.
#[derive(Debug)]
pub struct ItoIdentityReport {
    /// `⟨x, I₁(t)I₂(t) y⟩`.
    pub lhs: Complex64,
    /// The three decomposition terms (dI₁I₂, I₁dI₂, dI₁dI₂).
    pub inner: ItoInner,
    pub error: f64,
    pub tau: f64,
    /// Exact matrix gap between the two ρ placements of the correction.
    pub placement_gap: f64,
}

/// Verify `d(I₁I₂) = I₁dI₂ + dI₁I₂ + dI₁dI₂` in matrix elements at a grid
/// time. The left side and all running integrals use the defining sums; the
/// decomposition comes from applying the second fundamental lemma to the
/// adjoint pair `(I₁†, I₂)`, so the measures are keyed by `(η₁†, η₂)`.
pub fn ito_identity_check(
    basis: &FockBasis,
    x1: &SimpleBiprocess,
    eta1: ProcessKind,
    x2: &SimpleBiprocess,
    eta2: ProcessKind,
    t_cells: usize,
    x: &ExponentialState,
    y: &ExponentialState,
) -> Result<ItoIdentityReport> {
    let grid = &basis.grid;
    let adj1 = x1.adjoint(grid.h0_dim);
    let inner = ito_inner(basis, x, &adj1, eta1.dual(), x2, eta2, t_cells, y)?;
    let tau = tail_bound_pair(grid, x, &adj1, eta1.dual(), x2, eta2, t_cells, y);
    let error = (inner.lhs - inner.rhs()).norm();
    // both ρ placements must produce the same integral operator
    let placement_gap = match ito_correction(grid, x1, eta1, x2, eta2) {
        ItoCorrection { integrator: Some(out), placement_a: Some(a), placement_b: Some(b) } => {
            let ia = integral_operator(basis, &a, out, t_cells)?;
            let ib = integral_operator(basis, &b, out, t_cells)?;
            ia.sub(&ib).norm_max()
        }
        _ => 0.0,
    };
    Ok(ItoIdentityReport { lhs: inner.lhs, inner, error, tau, placement_gap })
}

/// The identity error at every grid time in a single pass: running sums of
/// the three decomposition terms compared against `⟨I₁†(t_j)x, I₂(t_j)y⟩`.
/// Returns `(error at t_j, tau at t_j)` for `j = 1..=t_cells`, plus the
/// placement gap at the end time.
pub fn ito_identity_profile(
    basis: &FockBasis,
    x1: &SimpleBiprocess,
    eta1: ProcessKind,
    x2: &SimpleBiprocess,
    eta2: ProcessKind,
    t_cells: usize,
    x: &ExponentialState,
    y: &ExponentialState,
) -> Result<(Vec<(f64, f64)>, f64)> {
    let grid = &basis.grid;
    let adj1 = x1.adjoint(grid.h0_dim);
    let e1d = eta1.dual();
    let quad = crate::measures::FilterQuad {
        e1: adj1.e.clone(),
        d1: adj1.d.clone(),
        d2: x2.d.clone(),
        e2: x2.e.clone(),
    };
    let ops1 = adj1.materialize(basis)?;
    let ops2 = x2.materialize(basis)?;
    let inc1 = cell_increments(basis, e1d, t_cells)?;
    let inc2 = cell_increments(basis, eta2, t_cells)?;
    let xv = x.materialize(basis)?;
    let yv = y.materialize(basis)?;
    let i1x = crate::integrate::integral_apply_cumulative(&ops1, &inc1, t_cells, &xv);
    let i2y = crate::integrate::integral_apply_cumulative(&ops2, &inc2, t_cells, &yv);
    let m1 = measures::mu1(e1d, &quad, &x.u, &y.u);
    let m2 = measures::mu2(eta2, &quad, &x.u, &y.u);
    let m12 = measures::mu12(e1d, eta2, &quad, &x.u, &y.u);
    let mut rhs = Complex64::ZERO;
    let mut profile = Vec::with_capacity(t_cells);
    for cell in 0..t_cells {
        let b1x = StateVector { data: ops1.b_at_cell(cell).apply(&xv.data) };
        let b2y = StateVector { data: ops2.b_at_cell(cell).apply(&yv.data) };
        let pairing = b1x.inner(&b2y);
        let wedge = 0.5 * m1.dt * m2.dt * m1.cells[cell] * m2.cells[cell] * pairing;
        rhs += m1.cells[cell] * m1.dt * b1x.inner(&i2y[cell]) + wedge;
        rhs += m2.cells[cell] * m2.dt * i1x[cell].inner(&b2y) + wedge;
        rhs += m12.cells[cell] * m12.dt * pairing;
        let lhs = i1x[cell + 1].inner(&i2y[cell + 1]);
        let tau = tail_bound_pair(grid, x, &adj1, e1d, x2, eta2, cell + 1, y);
        profile.push(((lhs - rhs).norm(), tau));
    }
    let placement_gap = match ito_correction(grid, x1, eta1, x2, eta2) {
        ItoCorrection { integrator: Some(out), placement_a: Some(a), placement_b: Some(b) } => {
            let ia = integral_operator(basis, &a, out, t_cells)?;
            let ib = integral_operator(basis, &b, out, t_cells)?;
            ia.sub(&ib).norm_max()
        }
        _ => 0.0,
    };
    Ok((profile, placement_gap))
}

/// The rewritten CCR-integrator terms of `∫ X # dl^α` at finite level m
/// (the defining sum of the m-free integral).
pub fn mfree_integral_terms(
    x: &SimpleBiprocess,
    sort: MFreeSort,
    m: usize,
) -> Vec<(ProcessKind, SimpleBiprocess)> {
    let mut out = Vec::new();
    for (eta, proj) in expansion(sort, m) {
        for term in rewrite_with_projection(x, eta, &proj) {
            out.push((eta, term));
        }
    }
    out
}

/// m-free integral as an operator.
pub fn mfree_integral_operator(
    basis: &FockBasis,
    x: &SimpleBiprocess,
    sort: MFreeSort,
    m: usize,
    t_cells: usize,
) -> Result<SparseOperator> {
    let mut acc = SparseOperator::zero(basis.total_dim());
    for (eta, term) in mfree_integral_terms(x, sort, m) {
        acc = acc.add(&integral_operator(basis, &term, eta, t_cells)?);
    }
    Ok(acc)
}

/// m-free integral at the free limit: the expansion is truncated at the
/// stabilization level implied by the color-support bound of the target
/// vectors.
pub fn mfree_integral_operator_inf(
    basis: &FockBasis,
    x: &SimpleBiprocess,
    sort: MFreeSort,
    support_bound: usize,
    t_cells: usize,
) -> Result<SparseOperator> {
    let m = crate::processes::effective_level(
        crate::processes::Level::Inf,
        sort,
        Some(support_bound),
        basis.grid.n_colors,
    )?;
    mfree_integral_operator(basis, x, sort, m, t_cells)
}

/// m-free integral applied to a state.
pub fn mfree_integral_apply(
    basis: &FockBasis,
    x: &SimpleBiprocess,
    sort: MFreeSort,
    m: usize,
    t_cells: usize,
    y: &StateVector,
) -> Result<StateVector> {
    let mut acc = StateVector::zero(basis.total_dim());
    for (eta, term) in mfree_integral_terms(x, sort, m) {
        let ops = term.materialize(basis)?;
        let inc = cell_increments(basis, eta, t_cells)?;
        acc.add_scaled(&integral_apply(&ops, &inc, t_cells, y), Complex64::ONE);
    }
    Ok(acc)
}

/// Analytic matrix element of the m-free integral:
/// `∫ (x, F⊗G y) # dν̂^α` with band pairings `⟨x, F P^[k−1] G y⟩` over the
/// color windows `D(m) = D ∩ {1..m}`, `E(m) = E ∩ {1..m}`.
pub fn mfree_matrix_element(
    basis: &FockBasis,
    x: &ExponentialState,
    xp: &SimpleBiprocess,
    sort: MFreeSort,
    m: usize,
    t_cells: usize,
    y: &ExponentialState,
) -> Result<Complex64> {
    let ops = xp.materialize(basis)?;
    let xv = x.materialize(basis)?;
    let yv = y.materialize(basis)?;
    let window = |f: &Filter| -> Vec<usize> { (1..=m).filter(|&k| f.contains(k)).collect() };
    let mut acc = Complex64::ZERO;
    if let MFreeSort::Time = sort {
        // ⟨⟨I, P^(m)⟩⟩ µ^(0): the filter projection {1..m−1}
        let q = ampliate(basis, &color_projection(basis, &Filter::range(m - 1))?);
        let density = measures::mu(ProcessKind::Time, &x.u, &y.u);
        for cell in 0..t_cells {
            let seg = ops.segment_for_cell(cell);
            let mid = ops.f[seg].mul(&q).mul(&ops.g[seg]);
            acc += density.cells[cell] * density.dt * mid.matrix_element(&xv.data, &yv.data);
        }
        return Ok(acc);
    }
    // (color k, band index of the pairing, density kind)
    let summands: Vec<(usize, usize, ProcessKind)> = match sort {
        MFreeSort::Annihilation => window(&xp.e)
            .into_iter()
            .map(|k| (k, k - 1, ProcessKind::Annihilation(k)))
            .collect(),
        MFreeSort::Creation => window(&xp.d)
            .into_iter()
            .map(|k| (k, k - 1, ProcessKind::Creation(k)))
            .collect(),
        MFreeSort::Number => window(&xp.d.intersect(&xp.e))
            .into_iter()
            .map(|k| (k, k, ProcessKind::Number(k)))
            .collect(),
        MFreeSort::Time => unreachable!(),
    };
    for (_, band, density_kind) in summands {
        let q = ampliate(basis, &band_projection(basis, band)?);
        let density = measures::mu(density_kind, &x.u, &y.u);
        for cell in 0..t_cells {
            if density.cells[cell] == Complex64::ZERO {
                continue;
            }
            let seg = ops.segment_for_cell(cell);
            let mid = ops.f[seg].mul(&q).mul(&ops.g[seg]);
            acc += density.cells[cell] * density.dt * mid.matrix_element(&xv.data, &yv.data);
        }
    }
    Ok(acc)
}

/// Partial-trace tags of the m-free Itô corrections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// `Σ_{k∈V} P^[k−1] H P^[k−1]` — includes the vacuum band when 1 ∈ V.
    Ip0,
    /// `Σ_{k∈V} P^[k] H P^[k]`.
    Ip1,
}

/// Nontrivial m-free Itô table with the partial-trace tag of the correction.
pub fn mfree_table(a1: MFreeSort, a2: MFreeSort) -> Option<(MFreeSort, TraceKind)> {
    match (a1, a2) {
        (MFreeSort::Annihilation, MFreeSort::Creation) => Some((MFreeSort::Time, TraceKind::Ip0)),
        (MFreeSort::Annihilation, MFreeSort::Number) => {
            Some((MFreeSort::Annihilation, TraceKind::Ip1))
        }
        (MFreeSort::Number, MFreeSort::Creation) => Some((MFreeSort::Creation, TraceKind::Ip1)),
        (MFreeSort::Number, MFreeSort::Number) => Some((MFreeSort::Number, TraceKind::Ip1)),
        _ => None,
    }
}

/// Band-sandwiched compression of an operator over the colors of V.
pub fn partial_trace_op(
    basis: &FockBasis,
    h: &SparseOperator,
    v: &Filter,
    which: TraceKind,
) -> Result<SparseOperator> {
    let mut acc = SparseOperator::zero(h.dim());
    for k in v.colors_within(basis.grid.n_colors) {
        let band = match which {
            TraceKind::Ip0 => k - 1,
            TraceKind::Ip1 => k,
        };
        let p = ampliate(basis, &band_projection(basis, band)?);
        acc = acc.add(&p.mul(h).mul(&p));
    }
    Ok(acc)
}

/// Band sandwich of a leg value as a filtered combination:
/// `P^[b] · leg · P^[b]` split into plain-filter terms. Returns
/// (value, filter) pairs whose filters replace the original `leg_filter`.
pub fn band_sandwich_leg(
    leg: &LegValue,
    leg_filter: &Filter,
    band: usize,
) -> Vec<(LegValue, Filter)> {
    let parts = |b: usize| -> Vec<(Filter, f64)> {
        if b == 0 {
            vec![(Filter::empty(), 1.0)]
        } else {
            vec![(Filter::range(b), 1.0), (Filter::range(b - 1), -1.0)]
        }
    };
    let mut out = Vec::new();
    for (fa, sa) in parts(band) {
        for (fb, sb) in parts(band) {
            let v = leg
                .project_left(&fa)
                .project_right(&fb)
                .scale(Complex64::new(sa * sb, 0.0));
            out.push((v, leg_filter.intersect(&fa).intersect(&fb)));
        }
    }
    out
}

/// Matrix-level check of one m-free Itô table cell on one grid cell:
/// the band-projected sum of boson-table increments against the claimed
/// m-free output increment. Both sides are exact sparse operators.
pub fn mfree_table_check(
    basis: &FockBasis,
    a1: MFreeSort,
    a2: MFreeSort,
    m: usize,
    cell: usize,
) -> Result<(SparseOperator, SparseOperator)> {
    let mut lhs = SparseOperator::zero(basis.total_dim());
    for (eta1, p1) in expansion(a1, m) {
        for (eta2, p2) in expansion(a2, m) {
            let out = match boson_table(eta1, eta2) {
                Some(out) => out,
                None => continue,
            };
            let left = ampliate(basis, &projection_operator(basis, &p1)?);
            let right = ampliate(basis, &projection_operator(basis, &p2)?);
            let inc = crate::processes::fundamental_increment(basis, out, cell, cell + 1)?;
            lhs = lhs.add(&left.mul(&inc).mul(&right));
        }
    }
    let rhs = match mfree_table(a1, a2) {
        Some((out, _)) => mfree_increment(basis, out, m, cell, cell + 1)?,
        None => SparseOperator::zero(basis.total_dim()),
    };
    Ok((lhs, rhs))
}

fn projection_operator(basis: &FockBasis, p: &Projection) -> Result<SparseOperator> {
    match p {
        Projection::Filter(v) => color_projection(basis, v),
        Projection::Band(k) => band_projection(basis, *k),
    }
}

/// Matrix-element check of the m-free Itô correction: expansion into
/// filtered corrections on the left, the partial-traced integrand
/// integrated against the output m-free differential on the right.
pub struct MFreeCorrectionReport {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub error: f64,
    pub tau: f64,
    /// true when the table cell is trivial and both sides must vanish.
    pub trivial: bool,
}

pub fn mfree_correction_check(
    basis: &FockBasis,
    x1: &SimpleBiprocess,
    a1: MFreeSort,
    x2: &SimpleBiprocess,
    a2: MFreeSort,
    m: usize,
    t_cells: usize,
    x: &ExponentialState,
    y: &ExponentialState,
) -> Result<MFreeCorrectionReport> {
    let grid = &basis.grid;
    let xv = x.materialize(basis)?;
    let yv = y.materialize(basis)?;
    // LHS: Σ over expansion pairs of the filtered Itô corrections
    let mut lhs = Complex64::ZERO;
    let mut tau = 0.0;
    for (eta1, p1) in expansion(a1, m) {
        for (eta2, p2) in expansion(a2, m) {
            for s1 in rewrite_with_projection(x1, eta1, &p1) {
                for s2 in rewrite_with_projection(x2, eta2, &p2) {
                    let corr = ito_correction(grid, &s1, eta1, &s2, eta2);
                    if let ItoCorrection {
                        integrator: Some(out), placement_a: Some(a), ..
                    } = corr
                    {
                        let ops = a.materialize(basis)?;
                        let inc = cell_increments(basis, out, t_cells)?;
                        let v = integral_apply(&ops, &inc, t_cells, &yv);
                        lhs += xv.inner(&v);
                    }
                    tau += tail_bound_pair(
                        grid,
                        x,
                        &s1.adjoint(grid.h0_dim),
                        eta1.dual(),
                        &s2,
                        eta2,
                        t_cells,
                        y,
                    );
                }
            }
        }
    }
    // RHS: G₁ ⊗ P_{α₁,α₂}(F₁F₂) G₂ # d[[l^{α₁}, l^{α₂}]]
    let (out_sort, trace) = match mfree_table(a1, a2) {
        Some(pair) => pair,
        None => {
            return Ok(MFreeCorrectionReport {
                lhs,
                rhs: Complex64::ZERO,
                error: lhs.norm(),
                tau: tau.max(1e-12),
                trivial: true,
            })
        }
    };
    let (e1f, d1f) = (&x1.d, &x1.e);
    let (d2f, e2f) = (&x2.d, &x2.e);
    let dd = d1f.intersect(d2f);
    let mut partition: Vec<usize> = x1.partition.iter().chain(&x2.partition).copied().collect();
    partition.sort_unstable();
    partition.dedup();
    let mut rhs = Complex64::ZERO;
    for k in dd.colors_within(grid.n_colors) {
        let band = match trace {
            TraceKind::Ip0 => k - 1,
            TraceKind::Ip1 => k,
        };
        // assemble G₁ ⊗ (band-sandwiched F₁F₂)·G₂ per merged segment; each
        // sandwich splits into up to four filtered terms sharing the
        // partition
        let mut per_term: Vec<(Vec<LegValue>, Vec<LegValue>, Filter, Filter)> = Vec::new();
        for &start in &partition {
            let s1 = x1.segment_for_cell(start);
            let s2 = x2.segment_for_cell(start);
            let g1 = &x1.left[s1];
            let f1 = &x1.right[s1];
            let f2 = &x2.left[s2];
            let g2 = &x2.right[s2];
            let f1f2 = f1.product(d1f, f2, d2f, grid.h0_dim, start);
            for (ti, (val, vfilter)) in
                band_sandwich_leg(&f1f2, &dd, band).into_iter().enumerate()
            {
                let right = val.product(&vfilter, g2, e2f, grid.h0_dim, start);
                if per_term.len() <= ti {
                    per_term.push((Vec::new(), Vec::new(), e1f.clone(), vfilter.intersect(e2f)));
                }
                per_term[ti].0.push(g1.clone());
                per_term[ti].1.push(right);
            }
        }
        for (left, right, df, ef) in per_term {
            let term =
                SimpleBiprocess { d: df, e: ef, partition: partition.clone(), left, right };
            for (eta, s) in mfree_integral_terms(&term, out_sort, m) {
                let ops = s.materialize(basis)?;
                let inc = cell_increments(basis, eta, t_cells)?;
                let v = integral_apply(&ops, &inc, t_cells, &yv);
                rhs += xv.inner(&v);
            }
        }
    }
    let error = (lhs - rhs).norm();
    Ok(MFreeCorrectionReport { lhs, rhs, error, tau: tau.max(1e-12), trivial: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biprocess::random_simple_biprocess;
    use crate::integrate::integral_operator;
    use crate::probes::random_exponential;
    use rand::SeedableRng;

    fn setup() -> FockBasis {
        FockBasis::new(GridSpec::new(1.0, 8, 3, 3, 2).unwrap())
    }

    #[test]
    fn boson_table_cells() {
        use ProcessKind::*;
        assert_eq!(boson_table(Annihilation(2), Creation(2)), Some(Time));
        assert_eq!(boson_table(Annihilation(1), Creation(2)), None);
        assert_eq!(boson_table(Annihilation(1), Number(1)), Some(Annihilation(1)));
        assert_eq!(boson_table(Number(3), Creation(3)), Some(Creation(3)));
        assert_eq!(boson_table(Number(2), Number(2)), Some(Number(2)));
        assert_eq!(boson_table(Creation(1), Annihilation(1)), None);
        assert_eq!(boson_table(Creation(1), Creation(1)), None);
        assert_eq!(boson_table(Time, Creation(1)), None);
        assert_eq!(boson_table(Annihilation(1), Time), None);
    }

    #[test]
    fn correction_zeroes_outside_filters() {
        let basis = setup();
        let g = basis.grid;
        // k ∉ D₁∩D₂ → explicit None
        let x1 = SimpleBiprocess::identity(&g, Filter::Full, Filter::from_colors([2]));
        let x2 = SimpleBiprocess::identity(&g, Filter::from_colors([3]), Filter::Full);
        let corr =
            ito_correction(&g, &x1, ProcessKind::Annihilation(2), &x2, ProcessKind::Number(2));
        assert!(corr.integrator.is_none());
        // k ∈ D₁∩D₂ with the same shape: correction present
        let x2 = SimpleBiprocess::identity(&g, Filter::from_colors([2]), Filter::Full);
        let corr =
            ito_correction(&g, &x1, ProcessKind::Annihilation(2), &x2, ProcessKind::Number(2));
        assert_eq!(corr.integrator, Some(ProcessKind::Annihilation(2)));
        let _ = basis;
    }

    #[test]
    fn ito_identity_on_random_pairs() {
        let basis = setup();
        let g = basis.grid;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let x = random_exponential(&g, &mut rng, 0.5);
        let y = random_exponential(&g, &mut rng, 0.5);
        let pairs = [
            (ProcessKind::Annihilation(1), ProcessKind::Creation(1)),
            (ProcessKind::Annihilation(2), ProcessKind::Number(2)),
            (ProcessKind::Number(1), ProcessKind::Creation(1)),
            (ProcessKind::Number(3), ProcessKind::Number(3)),
            (ProcessKind::Creation(1), ProcessKind::Annihilation(1)),
            (ProcessKind::Time, ProcessKind::Creation(2)),
        ];
        for (trial, (e1, e2)) in pairs.iter().enumerate() {
            let subsets = Filter::all_subsets(3);
            let x1 = random_simple_biprocess(
                &g,
                &mut rng,
                subsets[(trial * 2 + 1) % 8].clone(),
                Filter::Full,
            );
            let x2 = random_simple_biprocess(
                &g,
                &mut rng,
                Filter::Full,
                subsets[(trial * 3 + 2) % 8].clone(),
            );
            let rep = ito_identity_check(&basis, &x1, *e1, &x2, *e2, 8, &x, &y).unwrap();
            assert!(
                rep.error <= rep.tau,
                "pair {e1},{e2}: error {} > tau {}",
                rep.error,
                rep.tau
            );
            assert!(rep.placement_gap < 1e-12, "placement gap {}", rep.placement_gap);
        }
    }

    #[test]
    fn mfree_table_matrix_identities() {
        let basis = setup();
        let sorts =
            [MFreeSort::Annihilation, MFreeSort::Creation, MFreeSort::Number, MFreeSort::Time];
        for m in 1..=3 {
            for a1 in sorts {
                for a2 in sorts {
                    let (lhs, rhs) = mfree_table_check(&basis, a1, a2, m, 3).unwrap();
                    let gap = lhs.sub(&rhs).norm_max();
                    assert!(gap <= 1e-12, "m={m} {a1:?} {a2:?}: gap {gap}");
                }
            }
        }
    }

    #[test]
    fn partial_traces_on_bands_and_identity() {
        let basis = setup();
        let g = basis.grid;
        let v = Filter::range(g.n_colors);
        // IP₀(Id) = Σ_{k∈V} P^[k−1]
        let id = SparseOperator::identity(basis.total_dim());
        let ip0 = partial_trace_op(&basis, &id, &v, TraceKind::Ip0).unwrap();
        let mut expect = SparseOperator::zero(basis.total_dim());
        for k in 1..=g.n_colors {
            expect = expect.add(&ampliate(&basis, &band_projection(&basis, k - 1).unwrap()));
        }
        assert_eq!(ip0, expect);
        // IP₁(P^[j]) = P^[j] if j in band range, else 0
        let p2 = ampliate(&basis, &band_projection(&basis, 2).unwrap());
        let ip1 = partial_trace_op(&basis, &p2, &v, TraceKind::Ip1).unwrap();
        assert_eq!(ip1, p2);
        let p0 = ampliate(&basis, &band_projection(&basis, 0).unwrap());
        let ip1 = partial_trace_op(&basis, &p0, &v, TraceKind::Ip1).unwrap();
        assert!(ip1.is_zero());
        // IP₀ and IP₁ differ exactly by the vacuum band when 1 ∈ V
        let h = SparseOperator::identity(basis.total_dim());
        let d0 = partial_trace_op(&basis, &h, &Filter::from_colors([1]), TraceKind::Ip0).unwrap();
        let d1 = partial_trace_op(&basis, &h, &Filter::from_colors([1]), TraceKind::Ip1).unwrap();
        let vac = ampliate(&basis, &band_projection(&basis, 0).unwrap());
        let band1 = ampliate(&basis, &band_projection(&basis, 1).unwrap());
        assert_eq!(d0, vac);
        assert_eq!(d1, band1);
    }

    #[test]
    fn boolean_mfree_integral_reduces_to_vacuum_projected_creation() {
        // m = 1, α = (1)*: ∫ F ⊗ P^(∅)G # dA^(1)*
        let basis = setup();
        let g = basis.grid;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let xp = random_simple_biprocess(&g, &mut rng, Filter::Full, Filter::Full);
        let lhs = mfree_integral_operator(&basis, &xp, MFreeSort::Creation, 1, 6).unwrap();
        let rewritten =
            rewrite_with_projection(&xp, ProcessKind::Creation(1), &Projection::Band(0));
        assert_eq!(rewritten.len(), 1);
        let rhs = integral_operator(&basis, &rewritten[0], ProcessKind::Creation(1), 6).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn mfree_time_integral_of_identity() {
        // X = identity, α = (m)·: t-weighted P^(m) ampliation
        let basis = setup();
        let g = basis.grid;
        let xp = SimpleBiprocess::identity(&g, Filter::Full, Filter::Full);
        for m in 1..=3 {
            let op = mfree_integral_operator(&basis, &xp, MFreeSort::Time, m, 4).unwrap();
            let p = ampliate(&basis, &color_projection(&basis, &Filter::range(m - 1)).unwrap());
            let expect = p.scale(Complex64::new(0.5, 0.0));
            assert!(op.sub(&expect).norm_max() < 1e-14, "m={m}");
        }
    }

    #[test]
    fn mfree_matrix_element_matches_oracle() {
        let basis = setup();
        let g = basis.grid;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
        let x = random_exponential(&g, &mut rng, 0.5);
        let y = random_exponential(&g, &mut rng, 0.5);
        let xv = x.materialize(&basis).unwrap();
        let yv = y.materialize(&basis).unwrap();
        for m in 1..=3usize {
            for sort in
                [MFreeSort::Annihilation, MFreeSort::Creation, MFreeSort::Number, MFreeSort::Time]
            {
                let subsets = Filter::all_subsets(3);
                let d = subsets[(m * 2 + 1) % 8].clone();
                let e = subsets[(m + 5) % 8].clone();
                let xp = random_simple_biprocess(&g, &mut rng, d, e);
                let fast = mfree_matrix_element(&basis, &x, &xp, sort, m, 8, &y).unwrap();
                let oracle =
                    xv.inner(&mfree_integral_apply(&basis, &xp, sort, m, 8, &yv).unwrap());
                let err = (fast - oracle).norm();
                assert!(err < 2e-2, "m={m} {sort:?}: {err} (fast {fast} oracle {oracle})");
            }
        }
        // E(m) empty: annihilation element identically zero
        let xp = random_simple_biprocess(&g, &mut rng, Filter::Full, Filter::empty());
        let v = mfree_matrix_element(&basis, &x, &xp, MFreeSort::Annihilation, 2, 8, &y).unwrap();
        assert_eq!(v, Complex64::ZERO);
    }

    #[test]
    fn mfree_correction_against_partial_trace() {
        let basis = setup();
        let g = basis.grid;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(91);
        let x = random_exponential(&g, &mut rng, 0.4);
        let y = random_exponential(&g, &mut rng, 0.4);
        let m = 2;
        let x1 = random_simple_biprocess(&g, &mut rng, Filter::Full, Filter::from_colors([1, 2]));
        let x2 = random_simple_biprocess(&g, &mut rng, Filter::from_colors([1, 2]), Filter::Full);
        let rep = mfree_correction_check(
            &basis,
            &x1,
            MFreeSort::Annihilation,
            &x2,
            MFreeSort::Creation,
            m,
            8,
            &x,
            &y,
        )
        .unwrap();
        assert!(!rep.trivial);
        assert!(rep.error <= rep.tau, "error {} tau {}", rep.error, rep.tau);
        // trivial cell: both sides vanish
        let rep = mfree_correction_check(
            &basis,
            &x1,
            MFreeSort::Creation,
            &x2,
            MFreeSort::Annihilation,
            m,
            8,
            &x,
            &y,
        )
        .unwrap();
        assert!(rep.trivial);
        assert!(rep.lhs.norm() <= 1e-12);
    }
}
