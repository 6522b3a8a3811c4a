//! (D,E)-adapted simple biprocesses and filtered-adapted combinations.
//!
//! A leg value is a product `(h0 matrix) ⊗ (word in past operators)` followed
//! by the color projection of its filter on the future factor, anchored at
//! the grid time where the value was created. This restricted class is
//! closed under leg products, adjoints and projection rewrites, which is all
//! the calculus ever does to integrands.

use crate::ccr::{annihilation_op, creation_op, future_color_projection, number_op};
use crate::error::{FfError, Result};
use crate::fock::FockBasis;
use crate::grid::{Filter, GridSpec, Projection};
use crate::one_particle::OneParticleVector;
use crate::processes::ProcessKind;
use crate::sparse::{dense_norm2, SparseOperator};
use num_complex::Complex64;

/// Elementary factor of a leg word. Ladder factors use `χ_[0, cells·Δ]` of a
/// single color; a window projection restricts colors on the cells of
/// `[from, to)` only.
#[derive(Debug, Clone, PartialEq)]
pub enum WordFactor {
    Create { color: usize, cells: usize },
    Annihilate { color: usize, cells: usize },
    Count { color: usize, cells: usize },
    WindowProj { filter: Filter, from: usize, to: usize },
}

impl WordFactor {
    pub fn adjoint(&self) -> WordFactor {
        match self {
            WordFactor::Create { color, cells } => {
                WordFactor::Annihilate { color: *color, cells: *cells }
            }
            WordFactor::Annihilate { color, cells } => {
                WordFactor::Create { color: *color, cells: *cells }
            }
            other => other.clone(),
        }
    }

    fn fock_op(&self, basis: &FockBasis) -> Result<SparseOperator> {
        Ok(match self {
            WordFactor::Create { color, cells } => {
                let f = OneParticleVector::indicator(&basis.grid, *cells, *color)?;
                creation_op(basis, &f)
            }
            WordFactor::Annihilate { color, cells } => {
                let f = OneParticleVector::indicator(&basis.grid, *cells, *color)?;
                annihilation_op(basis, &f)
            }
            WordFactor::Count { color, cells } => number_op(basis, *cells, *color),
            WordFactor::WindowProj { filter, from, to } => {
                filter.validate(&basis.grid)?;
                let diag: Vec<Complex64> = (0..basis.fock_dim())
                    .map(|i| {
                        let keep = basis.occ(i).iter().all(|&m| {
                            let cell = basis.grid.mode_cell(m as usize);
                            cell < *from
                                || cell >= *to
                                || filter.contains(basis.grid.mode_color(m as usize))
                        });
                        if keep { Complex64::ONE } else { Complex64::ZERO }
                    })
                    .collect();
                SparseOperator::from_diagonal(&diag)
            }
        })
    }

    /// Highest grid cell the factor can touch; projections are harmless.
    fn latest_cell(&self) -> usize {
        match self {
            WordFactor::Create { cells, .. }
            | WordFactor::Annihilate { cells, .. }
            | WordFactor::Count { cells, .. } => *cells,
            WordFactor::WindowProj { .. } => 0,
        }
    }

    /// Norm gain on sectors of degree at most `n`.
    fn gain(&self, n: usize, dt: f64) -> f64 {
        match self {
            WordFactor::Create { cells, .. } | WordFactor::Annihilate { cells, .. } => {
                ((n + 1) as f64).sqrt() * ((*cells as f64) * dt).sqrt().max(1e-300)
            }
            WordFactor::Count { .. } => (n + 1) as f64,
            WordFactor::WindowProj { .. } => 1.0,
        }
    }
}

/// One biprocess leg value: `(h0 ⊗ word) · P^(filter on future from anchor)`.
/// The filter itself lives on the owning [`SimpleBiprocess`].
#[derive(Debug, Clone, PartialEq)]
pub struct LegValue {
    /// Dense row-major `h0_dim × h0_dim` matrix.
    pub h0: Vec<Complex64>,
    pub word: Vec<WordFactor>,
    /// Grid cell at which the past/future split of this value is anchored.
    pub anchor: usize,
}

impl LegValue {
    pub fn identity(grid: &GridSpec) -> Self {
        let mut h0 = vec![Complex64::ZERO; grid.h0_dim * grid.h0_dim];
        for i in 0..grid.h0_dim {
            h0[i * grid.h0_dim + i] = Complex64::ONE;
        }
        LegValue { h0, word: Vec::new(), anchor: 0 }
    }

    pub fn scalar(grid: &GridSpec, s: Complex64) -> Self {
        let mut v = Self::identity(grid);
        for a in v.h0.iter_mut() {
            *a *= s;
        }
        v
    }

    pub fn from_h0(h0: Vec<Complex64>) -> Self {
        LegValue { h0, word: Vec::new(), anchor: 0 }
    }

    pub fn scale(&self, s: Complex64) -> LegValue {
        let mut out = self.clone();
        for a in out.h0.iter_mut() {
            *a *= s;
        }
        out
    }

    /// All ladder factors must live at or before the anchor.
    pub fn is_past_supported(&self) -> bool {
        self.word.iter().all(|f| f.latest_cell() <= self.anchor)
    }

    /// Adjoint value: conjugate-transposed h0, reversed word of adjoint
    /// factors; exact for past-supported words.
    pub fn adjoint(&self, h0_dim: usize) -> LegValue {
        let mut h0 = vec![Complex64::ZERO; h0_dim * h0_dim];
        for r in 0..h0_dim {
            for c in 0..h0_dim {
                h0[c * h0_dim + r] = self.h0[r * h0_dim + c].conj();
            }
        }
        let word = self.word.iter().rev().map(|f| f.adjoint()).collect();
        LegValue { h0, word, anchor: self.anchor }
    }

    /// Operator product of two leg values carrying filters `d1`, `d2`,
    /// re-anchored at `anchor ≥ both anchors`. The combined filter is
    /// `d1 ∩ d2`, tracked by the caller.
    pub fn product(
        &self,
        d1: &Filter,
        other: &LegValue,
        d2: &Filter,
        h0_dim: usize,
        anchor: usize,
    ) -> LegValue {
        debug_assert!(anchor >= self.anchor && anchor >= other.anchor);
        let mut h0 = vec![Complex64::ZERO; h0_dim * h0_dim];
        for r in 0..h0_dim {
            for c in 0..h0_dim {
                let mut acc = Complex64::ZERO;
                for k in 0..h0_dim {
                    acc += self.h0[r * h0_dim + k] * other.h0[k * h0_dim + c];
                }
                h0[r * h0_dim + c] = acc;
            }
        }
        let mut word = self.word.clone();
        if !d1.is_full() && anchor > self.anchor {
            word.push(WordFactor::WindowProj { filter: d1.clone(), from: self.anchor, to: anchor });
        }
        word.extend(other.word.iter().cloned());
        if !d2.is_full() && anchor > other.anchor {
            word.push(WordFactor::WindowProj {
                filter: d2.clone(),
                from: other.anchor,
                to: anchor,
            });
        }
        LegValue { h0, word, anchor }
    }

    /// Multiply by a global color projection `P^(V)` on the right
    /// (`leg · P^(V)`); the future part of `P^(V)` is absorbed by the caller
    /// into the leg filter.
    pub fn project_right(&self, v: &Filter) -> LegValue {
        let mut out = self.clone();
        if !v.is_full() && self.anchor > 0 {
            out.word.push(WordFactor::WindowProj { filter: v.clone(), from: 0, to: self.anchor });
        }
        out
    }

    /// Multiply by a global color projection on the left (`P^(V) · leg`).
    pub fn project_left(&self, v: &Filter) -> LegValue {
        let mut out = self.clone();
        if !v.is_full() && self.anchor > 0 {
            out.word
                .insert(0, WordFactor::WindowProj { filter: v.clone(), from: 0, to: self.anchor });
        }
        out
    }

    /// Materialize `(h0 ⊗ word) · P^(filter)_future` on the full space.
    pub fn operator(&self, basis: &FockBasis, filter: &Filter) -> Result<SparseOperator> {
        let mut acc = future_color_projection(basis, filter, self.anchor)?;
        for f in self.word.iter().rev() {
            acc = f.fock_op(basis)?.mul(&acc);
        }
        Ok(SparseOperator::kron_dense(&self.h0, basis.grid.h0_dim, &acc))
    }

    /// Analytic bound on the operator norm over sectors of degree ≤ n.
    pub fn gain_bound(&self, n: usize, dt: f64, h0_dim: usize) -> f64 {
        let mut g = dense_norm2(&self.h0, h0_dim);
        for f in &self.word {
            g *= f.gain(n, dt);
        }
        g
    }

    pub fn is_zero(&self) -> bool {
        self.h0.iter().all(|a| *a == Complex64::ZERO)
    }
}

/// An elementary simple (D,E)-adapted biprocess: step values on a grid
/// partition, left leg carrying filter D, right leg carrying filter E.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleBiprocess {
    pub d: Filter,
    pub e: Filter,
    /// Strictly increasing cell indices starting at 0; segment j covers
    /// cells `[partition[j], partition[j+1])`, the last one up to `n_cells`.
    pub partition: Vec<usize>,
    pub left: Vec<LegValue>,
    pub right: Vec<LegValue>,
}

impl SimpleBiprocess {
    pub fn new(
        d: Filter,
        e: Filter,
        partition: Vec<usize>,
        left: Vec<LegValue>,
        right: Vec<LegValue>,
    ) -> Result<Self> {
        if partition.is_empty() || partition[0] != 0 {
            return Err(FfError::Invalid("partition must start at cell 0".into()));
        }
        if !partition.windows(2).all(|w| w[0] < w[1]) {
            return Err(FfError::Invalid("partition must be strictly increasing".into()));
        }
        if left.len() != partition.len() || right.len() != partition.len() {
            return Err(FfError::Invalid("one leg value pair per partition segment".into()));
        }
        for v in left.iter().chain(right.iter()) {
            if !v.is_past_supported() {
                return Err(FfError::Invalid(
                    "leg word reaches beyond its anchor (not past-supported)".into(),
                ));
            }
        }
        Ok(SimpleBiprocess { d, e, partition, left, right })
    }

    /// Constant biprocess `F ⊗ G` anchored at 0.
    pub fn constant(d: Filter, e: Filter, f: LegValue, g: LegValue) -> Self {
        SimpleBiprocess { d, e, partition: vec![0], left: vec![f], right: vec![g] }
    }

    /// Identity biprocess `(I|D) ⊗ (I|E)`.
    pub fn identity(grid: &GridSpec, d: Filter, e: Filter) -> Self {
        Self::constant(d, e, LegValue::identity(grid), LegValue::identity(grid))
    }

    /// Index of the partition segment containing the cell.
    pub fn segment_for_cell(&self, cell: usize) -> usize {
        match self.partition.binary_search(&cell) {
            Ok(j) => j,
            Err(j) => j - 1,
        }
    }

    pub fn n_segments(&self) -> usize {
        self.partition.len()
    }

    pub fn scale(&self, s: Complex64) -> SimpleBiprocess {
        let mut out = self.clone();
        out.left = out.left.iter().map(|v| v.scale(s)).collect();
        out
    }

    /// Swap legs and adjoint both: `F ⊗ G ∈ A(D,E) ↦ G* ⊗ F* ∈ A(E,D)`, the
    /// biprocess of the adjoint integral for the dual integrator.
    pub fn adjoint(&self, h0_dim: usize) -> SimpleBiprocess {
        SimpleBiprocess {
            d: self.e.clone(),
            e: self.d.clone(),
            partition: self.partition.clone(),
            left: self.right.iter().map(|v| v.adjoint(h0_dim)).collect(),
            right: self.left.iter().map(|v| v.adjoint(h0_dim)).collect(),
        }
    }

    /// Refine the partition by inserting extra cut cells, values unchanged.
    pub fn refine(&self, cuts: &[usize]) -> SimpleBiprocess {
        let mut partition = self.partition.clone();
        let mut left = self.left.clone();
        let mut right = self.right.clone();
        for &cut in cuts {
            if cut == 0 {
                continue;
            }
            if let Err(pos) = partition.binary_search(&cut) {
                partition.insert(pos, cut);
                left.insert(pos, left[pos - 1].clone());
                right.insert(pos, right[pos - 1].clone());
            }
        }
        SimpleBiprocess { d: self.d.clone(), e: self.e.clone(), partition, left, right }
    }

    /// Materialize the per-segment leg operators.
    pub fn materialize(&self, basis: &FockBasis) -> Result<BiprocessOps> {
        let f = self
            .left
            .iter()
            .map(|v| v.operator(basis, &self.d))
            .collect::<Result<Vec<_>>>()?;
        let g = self
            .right
            .iter()
            .map(|v| v.operator(basis, &self.e))
            .collect::<Result<Vec<_>>>()?;
        Ok(BiprocessOps { partition: self.partition.clone(), f, g })
    }

    /// Analytic gain bound `max_j ‖F_j‖·‖G_j‖` over sectors ≤ n.
    pub fn gain_bound(&self, n: usize, grid: &GridSpec) -> f64 {
        self.left
            .iter()
            .zip(&self.right)
            .map(|(f, g)| {
                f.gain_bound(n, grid.dt(), grid.h0_dim) * g.gain_bound(n, grid.dt(), grid.h0_dim)
            })
            .fold(0.0, f64::max)
    }
}

/// Per-segment materialized leg operators of a simple biprocess.
pub struct BiprocessOps {
    pub partition: Vec<usize>,
    pub f: Vec<SparseOperator>,
    pub g: Vec<SparseOperator>,
}

impl BiprocessOps {
    pub fn segment_for_cell(&self, cell: usize) -> usize {
        match self.partition.binary_search(&cell) {
            Ok(j) => j,
            Err(j) => j - 1,
        }
    }

    pub fn f_at_cell(&self, cell: usize) -> &SparseOperator {
        &self.f[self.segment_for_cell(cell)]
    }

    pub fn g_at_cell(&self, cell: usize) -> &SparseOperator {
        &self.g[self.segment_for_cell(cell)]
    }

    /// Pointwise product `B(cell) = F(cell)·G(cell)`.
    pub fn b_at_cell(&self, cell: usize) -> SparseOperator {
        let j = self.segment_for_cell(cell);
        self.f[j].mul(&self.g[j])
    }
}

/// A finite linear combination of simple terms with possibly distinct
/// filter pairs — a filtered-adapted stochastic biprocess.
pub type Biprocess = Vec<SimpleBiprocess>;

/// The D∩E-adapted process `B ⊨ X`: pointwise products per grid cell.
pub struct AdaptedProcess {
    pub filter: Filter,
    /// One operator per grid cell.
    pub ops: Vec<SparseOperator>,
}

/// `B ⊨ X` for a single simple term.
pub fn pointwise_product(basis: &FockBasis, x: &SimpleBiprocess) -> Result<AdaptedProcess> {
    let ops = x.materialize(basis)?;
    let per_cell = (0..basis.grid.n_cells).map(|c| ops.b_at_cell(c)).collect();
    Ok(AdaptedProcess { filter: x.d.intersect(&x.e), ops: per_cell })
}

/// `B ⊨ X` for a combination: `Σ_i F_i(t)G_i(t)` per cell, with the
/// intersection of all term filters.
pub fn pointwise_sum(basis: &FockBasis, terms: &[SimpleBiprocess]) -> Result<AdaptedProcess> {
    let mut filter = Filter::Full;
    let mut per_cell = vec![SparseOperator::zero(basis.total_dim()); basis.grid.n_cells];
    for x in terms {
        let p = pointwise_product(basis, x)?;
        filter = filter.intersect(&p.filter);
        for (acc, op) in per_cell.iter_mut().zip(&p.ops) {
            *acc = acc.add(op);
        }
    }
    Ok(AdaptedProcess { filter, ops: per_cell })
}

/// Rewrite of a filtered-integrator integral into CCR-integrator form:
/// `∫X # dA^(η,V) = ∫X[η,V] # dA^η`. The projection multiplies the left leg
/// on the right for annihilation, number (with `V ∪ {k}`) and time, and the
/// right leg on the left for creation; term filters are intersected.
pub fn rewrite_filtered(x: &SimpleBiprocess, eta: ProcessKind, v: &Filter) -> Vec<SimpleBiprocess> {
    let v_eff = match eta {
        ProcessKind::Number(k) => v.with_color(k),
        _ => v.clone(),
    };
    vec![apply_projection_to_term(x, eta, &v_eff)]
}

/// Rewrite a filtered-adapted combination term by term.
pub fn rewrite_filtered_biprocess(x: &Biprocess, eta: ProcessKind, v: &Filter) -> Biprocess {
    x.iter().flat_map(|term| rewrite_filtered(term, eta, v)).collect()
}

/// Rewrite against a projection descriptor; a band `P^[b]` splits into the
/// difference `P^({1..b}) − P^({1..b−1})` of plain-filter terms (only
/// `P^[0] = P^(∅)` stays a single term).
pub fn rewrite_with_projection(
    x: &SimpleBiprocess,
    eta: ProcessKind,
    proj: &Projection,
) -> Vec<SimpleBiprocess> {
    match proj {
        Projection::Filter(vf) => vec![apply_projection_to_term(x, eta, vf)],
        Projection::Band(0) => vec![apply_projection_to_term(x, eta, &Filter::empty())],
        Projection::Band(b) => {
            let plus = apply_projection_to_term(x, eta, &Filter::range(*b));
            let minus =
                apply_projection_to_term(x, eta, &Filter::range(*b - 1)).scale(-Complex64::ONE);
            vec![plus, minus]
        }
    }
}

fn apply_projection_to_term(x: &SimpleBiprocess, eta: ProcessKind, v: &Filter) -> SimpleBiprocess {
    let mut out = x.clone();
    match eta {
        ProcessKind::Creation(_) => {
            out.e = x.e.intersect(v);
            out.right = x.right.iter().map(|g| g.project_left(v)).collect();
        }
        _ => {
            out.d = x.d.intersect(v);
            out.left = x.left.iter().map(|f| f.project_right(v)).collect();
        }
    }
    out
}

/// Result of the numeric (t,V)-factorization check of a single operator.
#[derive(Debug, Clone)]
pub struct AdaptednessReport {
    pub adapted: bool,
    /// Flat coordinate of a state exhibiting the failure and its defect.
    pub witness: Option<(usize, f64)>,
}

/// Verify that `op = H̃ ⊗ P^(filter)` across the past/future split at the
/// grid cell `t_cells`. The past component is reconstructed from the action
/// on past ⊗ vacuum states; comparisons are restricted to split states
/// leaving `headroom` particle slots for intermediate excursions of the
/// operator's internal word.
pub fn check_operator_adapted(
    basis: &FockBasis,
    op: &SparseOperator,
    t_cells: usize,
    filter: &Filter,
    headroom: usize,
) -> AdaptednessReport {
    let tol = 1e-12;
    let g = &basis.grid;
    let fdim = basis.fock_dim();
    let h0 = g.h0_dim;
    let adj = op.adjoint();
    let scale = op.norm_max().max(1.0);

    let is_past = |i: usize| basis.occ(i).iter().all(|&m| g.mode_cell(m as usize) < t_cells);
    let split = |i: usize| -> (usize, usize) {
        let occ = basis.occ(i);
        let (p, f): (Vec<u16>, Vec<u16>) =
            occ.iter().partition(|&&m| g.mode_cell(m as usize) < t_cells);
        (basis.lookup(&p).unwrap(), basis.lookup(&f).unwrap())
    };
    let merge = |p: usize, f: usize| -> usize {
        let mut occ: Vec<u16> = basis.occ(p).iter().chain(basis.occ(f)).copied().collect();
        occ.sort_unstable();
        basis.lookup(&occ).unwrap()
    };

    // column j of op = conj(row j of op†)
    let column = |j: usize| -> Vec<Complex64> {
        let e_j: Vec<Complex64> = (0..op.dim())
            .map(|i| if i == j { Complex64::ONE } else { Complex64::ZERO })
            .collect();
        adj.apply(&e_j).iter().map(|v| v.conj()).collect()
    };

    let past_states: Vec<usize> = (0..fdim).filter(|&i| is_past(i)).collect();
    // H̃ columns indexed by (h0 in, past state)
    let mut htilde: Vec<Option<Vec<Complex64>>> = vec![None; h0 * fdim];
    for &p in &past_states {
        for a in 0..h0 {
            let col = column(basis.coord(a, p));
            // the reconstructed past component must not touch the future
            for (i, v) in col.iter().enumerate() {
                let fock = i % fdim;
                if !is_past(fock) && v.norm() > tol * scale {
                    return AdaptednessReport { adapted: false, witness: Some((i, v.norm())) };
                }
            }
            htilde[a * fdim + p] = Some(col);
        }
    }

    // compare op on mixed states against H̃ ⊗ P^(filter)
    for i in 0..fdim {
        if is_past(i) || basis.degree(i) + headroom > g.n_max {
            continue;
        }
        let (p, f) = split(i);
        let passes = basis
            .occ(f)
            .iter()
            .all(|&m| filter.contains(g.mode_color(m as usize)));
        for a in 0..h0 {
            let actual = column(basis.coord(a, i));
            let mut expected = vec![Complex64::ZERO; op.dim()];
            if passes {
                let hcol = htilde[a * fdim + p].as_ref().unwrap();
                for (j, v) in hcol.iter().enumerate() {
                    if *v == Complex64::ZERO {
                        continue;
                    }
                    let (b, q) = (j / fdim, j % fdim);
                    if basis.degree(q) + basis.degree(f) <= g.n_max {
                        expected[basis.coord(b, merge(q, f))] += v;
                    }
                }
            }
            for j in 0..op.dim() {
                let diff = (actual[j] - expected[j]).norm();
                if diff > tol * scale {
                    return AdaptednessReport {
                        adapted: false,
                        witness: Some((basis.coord(a, i), diff)),
                    };
                }
            }
        }
    }
    AdaptednessReport { adapted: true, witness: None }
}

/// Smallest filter (by the subset lattice, cardinality-ascending) for which
/// the factorization check passes; None if no subset of `{1..C}` works.
pub fn minimal_filter(
    basis: &FockBasis,
    op: &SparseOperator,
    t_cells: usize,
    headroom: usize,
) -> Option<Filter> {
    Filter::all_subsets(basis.grid.n_colors)
        .into_iter()
        .find(|v| check_operator_adapted(basis, op, t_cells, v, headroom).adapted)
}

/// Check both legs of a simple biprocess at a grid time: the left leg must
/// factorize with D, the right leg with E.
pub fn check_biprocess_adapted(
    basis: &FockBasis,
    x: &SimpleBiprocess,
    t_cells: usize,
    headroom: usize,
) -> Result<bool> {
    let seg = x.segment_for_cell(t_cells.min(basis.grid.n_cells.saturating_sub(1)));
    let f = x.left[seg].operator(basis, &x.d)?;
    let g = x.right[seg].operator(basis, &x.e)?;
    Ok(check_operator_adapted(basis, &f, t_cells, &x.d, headroom).adapted
        && check_operator_adapted(basis, &g, t_cells, &x.e, headroom).adapted)
}

/// Deterministic pseudo-random simple biprocess for the verification suites.
pub fn random_simple_biprocess<R: rand::Rng>(
    grid: &GridSpec,
    rng: &mut R,
    d: Filter,
    e: Filter,
) -> SimpleBiprocess {
    let n_segments = rng.gen_range(1..=3.min(grid.n_cells));
    let mut cuts: Vec<usize> = vec![0];
    while cuts.len() < n_segments {
        let c = rng.gen_range(1..grid.n_cells);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &anchor in &cuts {
        left.push(random_leg(grid, rng, anchor));
        right.push(random_leg(grid, rng, anchor));
    }
    SimpleBiprocess { d, e, partition: cuts, left, right }
}

pub fn random_leg<R: rand::Rng>(grid: &GridSpec, rng: &mut R, anchor: usize) -> LegValue {
    let h0 = (0..grid.h0_dim * grid.h0_dim)
        .map(|_| Complex64::new(rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)))
        .collect();
    let mut word = Vec::new();
    if anchor > 0 {
        for _ in 0..rng.gen_range(0..=2usize) {
            let cells = rng.gen_range(1..=anchor);
            let color = rng.gen_range(1..=grid.n_colors);
            word.push(match rng.gen_range(0..4u8) {
                0 => WordFactor::Create { color, cells },
                1 => WordFactor::Annihilate { color, cells },
                2 => WordFactor::Count { color, cells },
                _ => WordFactor::WindowProj {
                    filter: Filter::from_colors((1..=grid.n_colors).filter(|_| rng.gen_bool(0.6))),
                    from: 0,
                    to: cells,
                },
            });
        }
    }
    LegValue { h0, word, anchor }
}
