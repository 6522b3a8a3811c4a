//! Stochastic integration of simple filtered-adapted biprocesses.
//!
//! Two independent routes are kept side by side: the defining finite sum
//! over grid cells (the oracle) and the analytic matrix-element formulas
//! driven by the measure tables (the fast path). The two agree up to the
//! truncation tail bound [`tail_bound`].
//!
//! The defining sum is always decomposed into single-cell increments before
//! summation, so a refinement of the partition with unchanged values
//! produces the identical floating-point result.

use crate::biprocess::{BiprocessOps, SimpleBiprocess};
use crate::error::Result;
use crate::fock::{dropped_mass, ExponentialState, FockBasis, StateVector};
use crate::grid::GridSpec;
use crate::measures::{self, FilterQuad};
use crate::processes::{fundamental_increment, ProcessKind};
use crate::sparse::SparseOperator;
use num_complex::Complex64;

/// Slack constant of the truncation tail bound; covers the bounded number
/// of dropped-sector pairings produced per increment chain.
const TAIL_SLACK: f64 = 16.0;

/// The increment `A^η_{t_{c+1}} − A^η_{t_c}` of one grid cell.
pub fn cell_increment(basis: &FockBasis, eta: ProcessKind, cell: usize) -> Result<SparseOperator> {
    fundamental_increment(basis, eta, cell, cell + 1)
}

/// All cell increments needed to integrate up to `t_cells`.
pub fn cell_increments(
    basis: &FockBasis,
    eta: ProcessKind,
    t_cells: usize,
) -> Result<Vec<SparseOperator>> {
    (0..t_cells).map(|c| cell_increment(basis, eta, c)).collect()
}

/// Defining sum as an operator:
/// `Σ_cells F(cell)·(A^η increment)·G(cell)` on the truncated space.
pub fn integral_operator(
    basis: &FockBasis,
    x: &SimpleBiprocess,
    eta: ProcessKind,
    t_cells: usize,
) -> Result<SparseOperator> {
    let ops = x.materialize(basis)?;
    let mut acc = SparseOperator::zero(basis.total_dim());
    for cell in 0..t_cells {
        let seg = ops.segment_for_cell(cell);
        let inc = cell_increment(basis, eta, cell)?;
        acc = acc.add(&ops.f[seg].mul(&inc).mul(&ops.g[seg]));
    }
    Ok(acc)
}

/// Defining sum against a filtered integrator `dA^(η,V)`; used to check the
/// rewrite identity `∫X # dA^(η,V) = ∫X[η,V] # dA^η` directly.
pub fn integral_operator_filtered(
    basis: &FockBasis,
    x: &SimpleBiprocess,
    fk: &crate::processes::FilteredKind,
    t_cells: usize,
) -> Result<SparseOperator> {
    let ops = x.materialize(basis)?;
    let mut acc = SparseOperator::zero(basis.total_dim());
    for cell in 0..t_cells {
        let seg = ops.segment_for_cell(cell);
        let inc = crate::processes::filtered_increment(basis, fk, cell, cell + 1)?;
        acc = acc.add(&ops.f[seg].mul(&inc).mul(&ops.g[seg]));
    }
    Ok(acc)
}

/// Defining sum applied to a vector: cheaper than materializing the
/// operator and identical in exact arithmetic.
pub fn integral_apply(
    ops: &BiprocessOps,
    increments: &[SparseOperator],
    t_cells: usize,
    y: &StateVector,
) -> StateVector {
    let mut acc = StateVector::zero(y.dim());
    for cell in 0..t_cells {
        let seg = ops.segment_for_cell(cell);
        let v = ops.g[seg].apply(&y.data);
        let v = increments[cell].apply(&v);
        let mut v = StateVector { data: ops.f[seg].apply(&v) };
        std::mem::swap(&mut acc, &mut v);
        acc.add_scaled(&v, Complex64::ONE);
    }
    acc
}

/// Trajectory `I(t_j)·y` for every grid point `j = 0..=t_cells`.
pub fn integral_apply_cumulative(
    ops: &BiprocessOps,
    increments: &[SparseOperator],
    t_cells: usize,
    y: &StateVector,
) -> Vec<StateVector> {
    let mut out = Vec::with_capacity(t_cells + 1);
    out.push(StateVector::zero(y.dim()));
    for cell in 0..t_cells {
        let seg = ops.segment_for_cell(cell);
        let v = ops.g[seg].apply(&y.data);
        let v = increments[cell].apply(&v);
        let v = StateVector { data: ops.f[seg].apply(&v) };
        let mut next = out[cell].clone();
        next.add_scaled(&v, Complex64::ONE);
        out.push(next);
    }
    out
}

/// Oracle matrix element `⟨x, I^η(t) y⟩` via the defining sum.
pub fn matrix_element_oracle(
    basis: &FockBasis,
    x: &ExponentialState,
    xp: &SimpleBiprocess,
    eta: ProcessKind,
    t_cells: usize,
    y: &ExponentialState,
) -> Result<Complex64> {
    let ops = xp.materialize(basis)?;
    let increments = cell_increments(basis, eta, t_cells)?;
    let xv = x.materialize(basis)?;
    let yv = y.materialize(basis)?;
    let iy = integral_apply(&ops, &increments, t_cells, &yv);
    Ok(xv.inner(&iy))
}

/// Fast matrix element via the first fundamental lemma:
/// `1^η_{D,E} · Σ_cells ⟨x, F(s)G(s)y⟩ µ^η(cell)`.
pub fn matrix_element_fast(
    basis: &FockBasis,
    x: &ExponentialState,
    xp: &SimpleBiprocess,
    eta: ProcessKind,
    t_cells: usize,
    y: &ExponentialState,
) -> Result<Complex64> {
    let m = measures::multiplier(eta, &xp.d, &xp.e);
    if m == 0.0 {
        return Ok(Complex64::ZERO);
    }
    let density = measures::mu(eta, &x.u, &y.u);
    let ops = xp.materialize(basis)?;
    let xv = x.materialize(basis)?;
    let yv = y.materialize(basis)?;
    let mut acc = Complex64::ZERO;
    for cell in 0..t_cells {
        let w = density.cells[cell] * density.dt;
        if w == Complex64::ZERO {
            continue;
        }
        let b = ops.b_at_cell(cell);
        acc += w * b.matrix_element(&xv.data, &yv.data);
    }
    Ok(acc * m)
}

/// Analytic truncation tail bound for `|fast − oracle|`:
///
/// `τ = 1^η_{D,E} · |µ^η|([0,t]) · Γ_X(n_max+1) · g(n_max) · ‖w_x‖‖w_y‖ ·
///      (d_u·E_v + d_v·E_u + d_u·d_v) · slack`
///
/// where `d_u` is the ℓ²-mass of the exponential sectors dropped by the
/// cutoff, `E_u = e^{‖u‖²/2}`, `Γ_X` the analytic leg-norm gain of the
/// biprocess and `g` the ladder sector gain. Identically zero exactly when
/// both routes are structurally equal: vanishing color multiplier, vanishing
/// measure variation, or the time integrator.
pub fn tail_bound(
    grid: &GridSpec,
    x: &ExponentialState,
    xp: &SimpleBiprocess,
    eta: ProcessKind,
    t_cells: usize,
    y: &ExponentialState,
) -> f64 {
    if measures::multiplier(eta, &xp.d, &xp.e) == 0.0 {
        return 0.0;
    }
    if matches!(eta, ProcessKind::Time) {
        return 0.0;
    }
    let var = measures::mu(eta, &x.u, &y.u).variation_mass(0, t_cells);
    if var == 0.0 {
        return 0.0;
    }
    if degree_chain_bound(xp, eta, grid.n_cells).map_or(false, |d| d <= grid.n_max) {
        return 0.0;
    }
    let n = grid.n_max;
    let gains = xp.gain_bound(n + 1, grid).max(1e-300);
    let sector_gain = (n + 2) as f64;
    let wx: f64 = x.w.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let wy: f64 = y.w.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let (du, dv) = (dropped_mass(x.u.norm_sq(), n), dropped_mass(y.u.norm_sq(), n));
    let (ex, ey) = ((x.u.norm_sq() / 2.0).exp(), (y.u.norm_sq() / 2.0).exp());
    TAIL_SLACK * var * gains * sector_gain * wx * wy * (du * ey + dv * ex + du * dv)
}

/// Upper bound on the particle degree reachable anywhere in the exact
/// evaluation of `⟨x, F ΔA^η G y⟩`, when one exists: a vacuum-capped leg
/// (empty filter, all values anchored at 0) pins the incoming degree to 0
/// and only creation-type factors can raise it afterwards. If the bound
/// stays at or below the cutoff, truncation never acts and both evaluation
/// routes agree to rounding.
pub fn degree_chain_bound(xp: &SimpleBiprocess, eta: ProcessKind, n_cells: usize) -> Option<usize> {
    use crate::biprocess::{LegValue, WordFactor};
    // Output-degree bound of one leg: factors apply right to left after the
    // future projection of the filter. Once the accumulated projections kill
    // every cell, the state is a vacuum multiple and only Create factors
    // raise the degree again; a later full kill resets the bound to zero.
    let leg_cap = |leg: &LegValue, filter: &crate::grid::Filter, n_cells: usize| -> Option<usize> {
        let mut killed = vec![false; n_cells];
        if filter.is_empty_set() {
            for k in killed.iter_mut().skip(leg.anchor) {
                *k = true;
            }
        }
        let mut bound = if killed.iter().all(|&b| b) { Some(0) } else { None };
        for f in leg.word.iter().rev() {
            match f {
                WordFactor::WindowProj { filter, from, to } if filter.is_empty_set() => {
                    for k in killed.iter_mut().take(*to).skip(*from) {
                        *k = true;
                    }
                    if killed.iter().all(|&b| b) {
                        bound = Some(0);
                    }
                }
                WordFactor::Create { .. } => {
                    bound = bound.map(|b| b + 1);
                }
                // projections, counting and annihilation never raise
                _ => {}
            }
        }
        bound
    };
    let creates = |legs: &[LegValue]| -> usize {
        legs.iter()
            .map(|v| v.word.iter().filter(|f| matches!(f, WordFactor::Create { .. })).count())
            .max()
            .unwrap_or(0)
    };
    let eta_raise = usize::from(matches!(eta, ProcessKind::Creation(_)));
    // disjoint leg filters anchored at zero: every pre-existing quantum must
    // pass both color filters, so only the vacuum component survives the
    // pipeline; dropped sectors are killed on the exact route as well
    if xp.d.intersect(&xp.e).is_empty_set()
        && xp.left.iter().chain(&xp.right).all(|v| v.anchor == 0)
    {
        return Some(creates(&xp.right) + eta_raise + creates(&xp.left));
    }
    // capped G leg: the chain degree grows only through the integrator and
    // the F word
    let g_cap = xp
        .right
        .iter()
        .map(|v| leg_cap(v, &xp.e, n_cells))
        .collect::<Option<Vec<_>>>()
        .map(|caps| caps.into_iter().max().unwrap_or(0));
    if let Some(bg) = g_cap {
        return Some(
            bg + eta_raise + creates(&xp.left),
        );
    }
    // capped F leg: everything the middle chain feeds in is projected to the
    // vacuum before the F word acts, so dropped middle sectors contribute
    // nothing on either route
    let f_cap = xp
        .left
        .iter()
        .map(|v| leg_cap(v, &xp.d, n_cells))
        .collect::<Option<Vec<_>>>()
        .map(|caps| caps.into_iter().max().unwrap_or(0));
    f_cap
}

/// Truncation tail bound for pair identities (second fundamental lemma and
/// the Itô formula): the same dropped-mass structure as [`tail_bound`],
/// scaled by both legs' gains and the total measure masses involved.
pub fn tail_bound_pair(
    grid: &GridSpec,
    x: &ExponentialState,
    x1: &SimpleBiprocess,
    eta1: ProcessKind,
    x2: &SimpleBiprocess,
    eta2: ProcessKind,
    t_cells: usize,
    y: &ExponentialState,
) -> f64 {
    let n = grid.n_max;
    let quad = FilterQuad {
        e1: x1.e.clone(),
        d1: x1.d.clone(),
        d2: x2.d.clone(),
        e2: x2.e.clone(),
    };
    let v1 = measures::mu1(eta1, &quad, &x.u, &y.u).variation_mass(0, t_cells);
    let v2 = measures::mu2(eta2, &quad, &x.u, &y.u).variation_mass(0, t_cells);
    let v12 = measures::mu12(eta1, eta2, &quad, &x.u, &y.u).variation_mass(0, t_cells);
    let masses = (1.0 + v1) * (1.0 + v2) + v12;
    let gains = (x1.gain_bound(n + 1, grid) * x2.gain_bound(n + 1, grid)).max(1e-300);
    let sector_gain = ((n + 2) as f64).powi(2);
    let wx: f64 = x.w.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let wy: f64 = y.w.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let (du, dv) = (dropped_mass(x.u.norm_sq(), n), dropped_mass(y.u.norm_sq(), n));
    let (ex, ey) = ((x.u.norm_sq() / 2.0).exp(), (y.u.norm_sq() / 2.0).exp());
    TAIL_SLACK * masses * gains * sector_gain * wx * wy * (du * ey + dv * ex + du * dv)
}

/// Tail bound for the oracle-isolated Itô mass of an increment pair,
/// normalized by the base pairing: the same dropped-mass structure as the
/// integral bounds, scaled by the window masses of the four measures that
/// enter the pairing products.
pub fn delta_pair_tail_bound(
    grid: &GridSpec,
    eta1: ProcessKind,
    eta2: ProcessKind,
    x: &ExponentialState,
    y: &ExponentialState,
    s_cells: usize,
    t_cells: usize,
    base_norm: f64,
) -> f64 {
    let n = grid.n_max;
    let window = |eta: ProcessKind| -> f64 {
        measures::mu(eta, &x.u, &y.u).variation_mass(s_cells, t_cells)
            + measures::mu(eta.dual(), &x.u, &y.u).variation_mass(s_cells, t_cells)
    };
    let masses = (1.0 + window(eta1)) * (1.0 + window(eta2))
        + ((t_cells - s_cells) as f64) * grid.dt();
    let sector_gain = ((n + 2) as f64).powi(2);
    let wx: f64 = x.w.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let wy: f64 = y.w.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let (du, dv) = (dropped_mass(x.u.norm_sq(), n), dropped_mass(y.u.norm_sq(), n));
    let (ex, ey) = ((x.u.norm_sq() / 2.0).exp(), (y.u.norm_sq() / 2.0).exp());
    2.0 * TAIL_SLACK * masses * sector_gain * wx * wy * (du * ey + dv * ex + du * dv)
        / base_norm.max(1e-300)
}

/// Both sides of the increment-pair identity of the measure table.
#[derive(Debug, Clone)]
pub struct DeltaPair {
    /// `Δ₁,₂ = ⟨P₁ΔA₁Q₁x, P₂ΔA₂Q₂y⟩` from the operator oracle.
    pub full: Complex64,
    /// The factorized product term (the κ part), from the oracle.
    pub product_term: Complex64,
    /// `⟨P₁Q₁x, P₂Q₂y⟩`.
    pub base: Complex64,
    /// Oracle-isolated Itô mass `(Δ₁,₂ − product)/base`.
    pub ito_mass_oracle: Complex64,
    /// Analytic `µ₁,₂([s,t])` from the measure table.
    pub ito_mass_analytic: Complex64,
}

/// Evaluate the nontrivial part of the measure table on an increment window
/// `[s, t)` in cells.
pub fn delta_pair(
    basis: &FockBasis,
    eta1: ProcessKind,
    eta2: ProcessKind,
    quad: &FilterQuad,
    x: &ExponentialState,
    y: &ExponentialState,
    s_cells: usize,
    t_cells: usize,
) -> Result<DeltaPair> {
    let proj = |f: &crate::grid::Filter| -> Result<SparseOperator> {
        Ok(crate::ccr::ampliate(basis, &crate::ccr::color_projection(basis, f)?))
    };
    let p1 = proj(&quad.d1)?;
    let q1 = proj(&quad.e1)?;
    let p2 = proj(&quad.d2)?;
    let q2 = proj(&quad.e2)?;
    let da1 = fundamental_increment(basis, eta1, s_cells, t_cells)?;
    let da2 = fundamental_increment(basis, eta2, s_cells, t_cells)?;
    let xv = x.materialize(basis)?;
    let yv = y.materialize(basis)?;
    let ax = StateVector { data: p1.apply(&da1.apply(&q1.apply(&xv.data))) };
    let by = StateVector { data: p2.apply(&da2.apply(&q2.apply(&yv.data))) };
    let bx = StateVector { data: p1.apply(&q1.apply(&xv.data)) };
    let cy = StateVector { data: p2.apply(&q2.apply(&yv.data)) };
    let full = ax.inner(&by);
    let base = bx.inner(&cy);
    let left = ax.inner(&cy);
    let right = bx.inner(&by);
    let product_term = if base.norm() > 1e-300 { left * right / base } else { Complex64::ZERO };
    let ito_mass_oracle =
        if base.norm() > 1e-300 { (full - product_term) / base } else { Complex64::ZERO };
    let ito_mass_analytic = measures::mu12(eta1, eta2, quad, &x.u, &y.u).mass(s_cells, t_cells);
    Ok(DeltaPair { full, product_term, base, ito_mass_oracle, ito_mass_analytic })
}

/// The three-integral decomposition of `⟨I₁(t)x, I₂(t)y⟩`.
#[derive(Debug, Clone)]
pub struct ItoInner {
    pub lhs: Complex64,
    pub term_b1_i2: Complex64,
    pub term_i1_b2: Complex64,
    pub term_b1_b2: Complex64,
}

impl ItoInner {
    pub fn rhs(&self) -> Complex64 {
        self.term_b1_i2 + self.term_i1_b2 + self.term_b1_b2
    }
}

/// Second fundamental lemma: the inner product of two integrals decomposes
/// into three integrals against `µ₁`, `µ₂`, `µ₁,₂`.
///
/// The first two integrands contain the running integrals `I(s)`, which grow
/// inside each grid cell; their exact cell evaluation is the left-endpoint
/// value plus the wedge `½·µ₁(cell)·µ₂(cell)·⟨B₁x, B₂y⟩` from the within-cell
/// growth (step densities make the wedge weight exact). With the wedges in
/// place the identity holds up to truncation only.
pub fn ito_inner(
    basis: &FockBasis,
    x: &ExponentialState,
    x1: &SimpleBiprocess,
    eta1: ProcessKind,
    x2: &SimpleBiprocess,
    eta2: ProcessKind,
    t_cells: usize,
    y: &ExponentialState,
) -> Result<ItoInner> {
    let quad = FilterQuad {
        e1: x1.e.clone(),
        d1: x1.d.clone(),
        d2: x2.d.clone(),
        e2: x2.e.clone(),
    };
    let ops1 = x1.materialize(basis)?;
    let ops2 = x2.materialize(basis)?;
    let inc1 = cell_increments(basis, eta1, t_cells)?;
    let inc2 = cell_increments(basis, eta2, t_cells)?;
    let xv = x.materialize(basis)?;
    let yv = y.materialize(basis)?;
    let i1x = integral_apply_cumulative(&ops1, &inc1, t_cells, &xv);
    let i2y = integral_apply_cumulative(&ops2, &inc2, t_cells, &yv);
    let m1 = measures::mu1(eta1, &quad, &x.u, &y.u);
    let m2 = measures::mu2(eta2, &quad, &x.u, &y.u);
    let m12 = measures::mu12(eta1, eta2, &quad, &x.u, &y.u);
    let mut t_b1_i2 = Complex64::ZERO;
    let mut t_i1_b2 = Complex64::ZERO;
    let mut t_b1_b2 = Complex64::ZERO;
    for cell in 0..t_cells {
        let b1x = StateVector { data: ops1.b_at_cell(cell).apply(&xv.data) };
        let b2y = StateVector { data: ops2.b_at_cell(cell).apply(&yv.data) };
        let pairing = b1x.inner(&b2y);
        // µ₁ already carries the bra-side conjugation through its table
        let wedge = 0.5 * m1.dt * m2.dt * m1.cells[cell] * m2.cells[cell] * pairing;
        t_b1_i2 += m1.cells[cell] * m1.dt * b1x.inner(&i2y[cell]) + wedge;
        t_i1_b2 += m2.cells[cell] * m2.dt * i1x[cell].inner(&b2y) + wedge;
        t_b1_b2 += m12.cells[cell] * m12.dt * pairing;
    }
    let lhs = i1x[t_cells].inner(&i2y[t_cells]);
    Ok(ItoInner { lhs, term_b1_i2: t_b1_i2, term_i1_b2: t_i1_b2, term_b1_b2: t_b1_b2 })
}

/// Norm estimate: `actual = ‖I^η(t)x‖²` against the bound
/// `e^{|σ|([0,t])} ∫₀ᵗ ‖B(s)x‖² ξ^η_{D,E}(ds)`.
pub fn norm_estimate(
    basis: &FockBasis,
    xp: &SimpleBiprocess,
    eta: ProcessKind,
    t_cells: usize,
    x: &ExponentialState,
) -> Result<(f64, f64)> {
    let ops = xp.materialize(basis)?;
    let increments = cell_increments(basis, eta, t_cells)?;
    let xv = x.materialize(basis)?;
    let ix = integral_apply(&ops, &increments, t_cells, &xv);
    let actual = ix.norm_sq();
    let sigma = measures::sigma(eta, &xp.d, &xp.e, &x.u);
    let xi = measures::xi(eta, &xp.d, &xp.e, &x.u);
    let c = sigma.variation_mass(0, t_cells).exp();
    let mut integral = 0.0;
    for cell in 0..t_cells {
        let w = xi.cells[cell].re * xi.dt;
        if w == 0.0 {
            continue;
        }
        let bx = ops.b_at_cell(cell).apply(&xv.data);
        integral += w * bx.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    Ok((c * integral, actual))
}

/// Squared seminorm `‖X‖²_{x,t,η} = ∫₀ᵗ ‖B(s)x‖² ξ^η(ds)` with the
/// unfiltered `ξ^η = ξ^η_{FULL,FULL}`.
pub fn seminorm_sq(
    basis: &FockBasis,
    xp: &SimpleBiprocess,
    x: &ExponentialState,
    t_cells: usize,
    eta: ProcessKind,
) -> Result<f64> {
    let ops = xp.materialize(basis)?;
    let xv = x.materialize(basis)?;
    let xi = measures::xi(eta, &crate::grid::Filter::Full, &crate::grid::Filter::Full, &x.u);
    let mut acc = 0.0;
    for cell in 0..t_cells {
        let w = xi.cells[cell].re * xi.dt;
        if w == 0.0 {
            continue;
        }
        let bx = ops.b_at_cell(cell).apply(&xv.data);
        acc += w * bx.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    Ok(acc)
}

/// Report of a (possibly large) family sum `Σ_η ∫ X^η # dA^η` applied to a
/// probe.
#[derive(Debug)]
pub struct SumIntegralsReport {
    pub result: StateVector,
    /// For each color cutoff n: sup over grid times of the deviation of the
    /// partial sum over 𝒯(n) from the full sum.
    pub partial_deviations: Vec<(usize, f64)>,
    pub actual_norm_sq: f64,
    pub bound: f64,
    pub bound_ok: bool,
}

/// Sum of integrals over a family indexed by process kinds, with the
/// stability bound `‖I(t)x‖² ≤ 2e^{ν_u(t)} Σ_{η∈𝒯(u)} ∫‖B^η(s)x‖²dν_u`.
pub fn sum_integrals(
    basis: &FockBasis,
    family: &[(ProcessKind, SimpleBiprocess)],
    t_cells: usize,
    x: &ExponentialState,
) -> Result<SumIntegralsReport> {
    let xv = x.materialize(basis)?;
    let n_colors = basis.grid.n_colors;
    // per-term cumulative trajectories
    let mut trajectories = Vec::new();
    for (eta, xp) in family {
        let ops = xp.materialize(basis)?;
        let inc = cell_increments(basis, *eta, t_cells)?;
        trajectories.push(integral_apply_cumulative(&ops, &inc, t_cells, &xv));
    }
    let mut full = vec![StateVector::zero(basis.total_dim()); t_cells + 1];
    for traj in &trajectories {
        for (j, v) in traj.iter().enumerate() {
            full[j].add_scaled(v, Complex64::ONE);
        }
    }
    let mut partial_deviations = Vec::new();
    for n in 1..=n_colors {
        let mut partial = vec![StateVector::zero(basis.total_dim()); t_cells + 1];
        for ((eta, _), traj) in family.iter().zip(&trajectories) {
            let include = eta.color().map_or(true, |k| k <= n);
            if include {
                for (j, v) in traj.iter().enumerate() {
                    partial[j].add_scaled(v, Complex64::ONE);
                }
            }
        }
        let dev = (0..=t_cells)
            .map(|j| partial[j].sub(&full[j]).norm())
            .fold(0.0, f64::max);
        partial_deviations.push((n, dev));
    }
    // bound: η ranges over 𝒯(u) = annihilation/number up to N(u), all
    // creation colors, time; terms outside contribute exactly zero.
    let nu = measures::nu_u(&x.u);
    let n_u = x.u.color_support();
    let mut bound_sum = 0.0;
    for (eta, xp) in family {
        let in_t_u = match eta {
            ProcessKind::Annihilation(k) | ProcessKind::Number(k) => *k <= n_u,
            _ => true,
        };
        if !in_t_u {
            continue;
        }
        let ops = xp.materialize(basis)?;
        for cell in 0..t_cells {
            let w = nu.cells[cell].re * nu.dt;
            let bx = ops.b_at_cell(cell).apply(&xv.data);
            bound_sum += w * bx.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    let bound = 2.0 * nu.mass(0, t_cells).re.exp() * bound_sum;
    let actual_norm_sq = full[t_cells].norm_sq();
    let bound_ok = actual_norm_sq <= bound * (1.0 + 1e-9) + 1e-300;
    Ok(SumIntegralsReport {
        result: full.swap_remove(t_cells),
        partial_deviations,
        actual_norm_sq,
        bound,
        bound_ok,
    })
}
