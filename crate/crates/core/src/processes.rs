//! Filtered and m-free fundamental processes as time-indexed operator
//! families on the truncated space.
//!
//! All process values are assembled from per-cell increments, so additivity
//! in t holds bit-exactly and refinements cost nothing.

use crate::ccr::{ampliate, annihilation_op, band_projection, color_projection, creation_op, number_op};
use crate::error::{FfError, Result};
use crate::fock::FockBasis;
use crate::grid::{Filter, Projection};
use crate::one_particle::OneParticleVector;
use crate::sparse::SparseOperator;
use num_complex::Complex64;
use std::fmt;

/// Index set of the CCR fundamental processes: annihilation, creation and
/// number carry a color, time does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProcessKind {
    Annihilation(usize),
    Creation(usize),
    Number(usize),
    Time,
}

impl ProcessKind {
    pub fn color(&self) -> Option<usize> {
        match self {
            ProcessKind::Annihilation(k) | ProcessKind::Creation(k) | ProcessKind::Number(k) => {
                Some(*k)
            }
            ProcessKind::Time => None,
        }
    }

    /// `A^{η†}`: swaps creation and annihilation, fixes number and time.
    pub fn dual(&self) -> ProcessKind {
        match self {
            ProcessKind::Annihilation(k) => ProcessKind::Creation(*k),
            ProcessKind::Creation(k) => ProcessKind::Annihilation(*k),
            other => *other,
        }
    }

    pub fn validate(&self, basis: &FockBasis) -> Result<()> {
        if let Some(k) = self.color() {
            basis.grid.check_color(k)?;
        }
        Ok(())
    }

    /// All kinds with colors up to `n` plus time — the index set 𝒯(n).
    pub fn all_up_to(n: usize) -> Vec<ProcessKind> {
        let mut out = Vec::new();
        for k in 1..=n {
            out.push(ProcessKind::Annihilation(k));
            out.push(ProcessKind::Creation(k));
            out.push(ProcessKind::Number(k));
        }
        out.push(ProcessKind::Time);
        out
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessKind::Annihilation(k) => write!(f, "dA({k})"),
            ProcessKind::Creation(k) => write!(f, "dA*({k})"),
            ProcessKind::Number(k) => write!(f, "dN({k})"),
            ProcessKind::Time => write!(f, "dT"),
        }
    }
}

/// A fundamental process composed with a color filter (Eqs. of the filtered
/// calculus): creation takes the projection on the right, annihilation on
/// the left, number uses the filter joined with its own color, time scales
/// the projection.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredKind {
    pub kind: ProcessKind,
    pub filter: Filter,
}

/// m-free process sorts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MFreeSort {
    Annihilation,
    Creation,
    Number,
    Time,
}

impl MFreeSort {
    pub fn dual(&self) -> MFreeSort {
        match self {
            MFreeSort::Annihilation => MFreeSort::Creation,
            MFreeSort::Creation => MFreeSort::Annihilation,
            other => *other,
        }
    }
}

/// Level of an m-free process: finite m or the free limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Finite(usize),
    Inf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MFreeKind {
    pub level: Level,
    pub sort: MFreeSort,
}

impl MFreeKind {
    pub fn new(level: Level, sort: MFreeSort) -> Self {
        MFreeKind { level, sort }
    }

    pub fn dual(&self) -> MFreeKind {
        MFreeKind { level: self.level, sort: self.sort.dual() }
    }
}

impl fmt::Display for MFreeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.level {
            Level::Finite(m) => m.to_string(),
            Level::Inf => "inf".to_string(),
        };
        match self.sort {
            MFreeSort::Annihilation => write!(f, "l({m})"),
            MFreeSort::Creation => write!(f, "l*({m})"),
            MFreeSort::Number => write!(f, "lN({m})"),
            MFreeSort::Time => write!(f, "lT({m})"),
        }
    }
}

/// Summands of the m-free process at finite level m: the list of
/// (CCR kind, projection) pairs. Bands are kept as bands; only the time sort
/// carries a plain filter `{1..m−1}`.
pub fn expansion(sort: MFreeSort, m: usize) -> Vec<(ProcessKind, Projection)> {
    match sort {
        MFreeSort::Creation => (1..=m)
            .map(|k| (ProcessKind::Creation(k), Projection::Band(k - 1)))
            .collect(),
        MFreeSort::Annihilation => (1..=m)
            .map(|k| (ProcessKind::Annihilation(k), Projection::Band(k - 1)))
            .collect(),
        MFreeSort::Number => (1..=m)
            .map(|k| (ProcessKind::Number(k), Projection::Band(k)))
            .collect(),
        MFreeSort::Time => vec![(ProcessKind::Time, Projection::Filter(Filter::range(m - 1)))],
    }
}

/// Resolve a level against a color-support bound: finite m stays m, the
/// free limit expands until the bound stabilizes the sum.
pub fn effective_level(level: Level, sort: MFreeSort, support_bound: Option<usize>, n_colors: usize) -> Result<usize> {
    match level {
        Level::Finite(m) => {
            if m == 0 || m > n_colors {
                return Err(FfError::LevelOutOfRange { m, n_colors });
            }
            Ok(m)
        }
        Level::Inf => {
            let r = support_bound.ok_or(FfError::UnboundedLevel)?;
            let m = match sort {
                MFreeSort::Creation => r + 1,
                _ => r.max(1),
            };
            Ok(m.min(n_colors))
        }
    }
}

/// Materialize a projection descriptor on the Fock factor.
pub fn projection_op(basis: &FockBasis, proj: &Projection) -> Result<SparseOperator> {
    match proj {
        Projection::Filter(v) => color_projection(basis, v),
        Projection::Band(k) => band_projection(basis, *k),
    }
}

/// Increment `A^η_{t(to)} − A^η_{t(from)}` of the unfiltered CCR process,
/// ampliated to `h0 ⊗ Γ`. Built directly from the cells of `[from, to)`.
pub fn fundamental_increment(
    basis: &FockBasis,
    eta: ProcessKind,
    from_cell: usize,
    to_cell: usize,
) -> Result<SparseOperator> {
    eta.validate(basis)?;
    let g = &basis.grid;
    if to_cell > g.n_cells || from_cell > to_cell {
        return Err(FfError::OffGridTime { t: g.time_at(to_cell), dt: g.dt() });
    }
    let fock = match eta {
        ProcessKind::Creation(k) | ProcessKind::Annihilation(k) => {
            let mut f = OneParticleVector::zero(g);
            for c in from_cell..to_cell {
                f.set(c, k, Complex64::ONE)?;
            }
            if matches!(eta, ProcessKind::Creation(_)) {
                creation_op(basis, &f)
            } else {
                annihilation_op(basis, &f)
            }
        }
        ProcessKind::Number(k) => number_op(basis, to_cell, k).sub(&number_op(basis, from_cell, k)),
        ProcessKind::Time => {
            let dt = ((to_cell - from_cell) as f64) * g.dt();
            SparseOperator::scaled_identity(basis.fock_dim(), Complex64::new(dt, 0.0))
        }
    };
    Ok(ampliate(basis, &fock))
}

/// `A^η_t` at a grid time given as a cell count.
pub fn fundamental(basis: &FockBasis, eta: ProcessKind, t_cells: usize) -> Result<SparseOperator> {
    fundamental_increment(basis, eta, 0, t_cells)
}

/// Increment of the filtered process over `[from, to)` in cells; the
/// projection is constant in time, so the increment is the projected CCR
/// increment.
pub fn filtered_increment(
    basis: &FockBasis,
    fk: &FilteredKind,
    from_cell: usize,
    to_cell: usize,
) -> Result<SparseOperator> {
    fk.filter.validate(&basis.grid)?;
    let plain = fundamental_increment(basis, fk.kind, from_cell, to_cell)?;
    let proj = |v: &Filter| -> Result<SparseOperator> {
        Ok(ampliate(basis, &color_projection(basis, v)?))
    };
    Ok(match fk.kind {
        ProcessKind::Creation(_) => plain.mul(&proj(&fk.filter)?),
        ProcessKind::Annihilation(_) => proj(&fk.filter)?.mul(&plain),
        ProcessKind::Number(k) => plain.mul(&proj(&fk.filter.with_color(k))?),
        ProcessKind::Time => plain.mul(&proj(&fk.filter)?),
    })
}

/// Filtered process value per the defining products: `A*P^(V)`, `P^(V)A`,
/// `A∘P^(V∪{k})`, `t·P^(V)`.
pub fn filtered(basis: &FockBasis, fk: &FilteredKind, t_cells: usize) -> Result<SparseOperator> {
    filtered_increment(basis, fk, 0, t_cells)
}

/// Increment of the extended m-free process over `[from, to)` in cells at a
/// finite level.
pub fn mfree_increment(
    basis: &FockBasis,
    sort: MFreeSort,
    m: usize,
    from_cell: usize,
    to_cell: usize,
) -> Result<SparseOperator> {
    if m == 0 || m > basis.grid.n_colors {
        return Err(FfError::LevelOutOfRange { m, n_colors: basis.grid.n_colors });
    }
    let mut acc = SparseOperator::zero(basis.total_dim());
    for (eta, proj) in expansion(sort, m) {
        let p = ampliate(basis, &projection_op(basis, &proj)?);
        let a = fundamental_increment(basis, eta, from_cell, to_cell)?;
        // sides per the defining sums: creation carries its band on the
        // right, annihilation and number on the left, time on the left;
        // number and time commute with every color projection.
        let term = match eta {
            ProcessKind::Creation(_) => a.mul(&p),
            _ => p.mul(&a),
        };
        acc = acc.add(&term);
    }
    Ok(acc)
}

/// Extended m-free process value at a grid time. For the free limit a
/// color-support bound of the target vectors must be supplied.
pub fn mfree(
    basis: &FockBasis,
    mk: &MFreeKind,
    t_cells: usize,
    support_bound: Option<usize>,
) -> Result<SparseOperator> {
    let m = effective_level(mk.level, mk.sort, support_bound, basis.grid.n_colors)?;
    mfree_increment(basis, mk.sort, m, 0, t_cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{ExponentialState, FockBasis};
    use crate::grid::GridSpec;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn setup() -> FockBasis {
        FockBasis::new(GridSpec::new(1.0, 8, 3, 3, 2).unwrap())
    }

    #[test]
    fn duals() {
        assert_eq!(ProcessKind::Creation(2).dual(), ProcessKind::Annihilation(2));
        assert_eq!(ProcessKind::Annihilation(2).dual().dual(), ProcessKind::Annihilation(2));
        assert_eq!(ProcessKind::Number(1).dual(), ProcessKind::Number(1));
        assert_eq!(ProcessKind::Time.dual(), ProcessKind::Time);
    }

    #[test]
    fn time_process_is_scaled_identity() {
        let basis = setup();
        let a = fundamental(&basis, ProcessKind::Time, 4).unwrap();
        assert_eq!(a, SparseOperator::scaled_identity(basis.total_dim(), c(0.5, 0.0)));
        // filtered: t·P^(V)
        let fk = FilteredKind { kind: ProcessKind::Time, filter: Filter::from_colors([2]) };
        let f = filtered(&basis, &fk, 4).unwrap();
        let p = ampliate(&basis, &color_projection(&basis, &fk.filter).unwrap());
        assert_eq!(f, p.scale(c(0.5, 0.0)));
    }

    #[test]
    fn annihilation_kills_vacuum() {
        let basis = setup();
        let a = fundamental(&basis, ProcessKind::Annihilation(1), 8).unwrap();
        let vac = ExponentialState::vacuum(&basis.grid, vec![c(1.0, 0.0), c(0.0, 0.0)])
            .materialize(&basis)
            .unwrap();
        assert!(a.apply(&vac.data).iter().all(|z| *z == Complex64::ZERO));
        // number also annihilates the vacuum
        let n = fundamental(&basis, ProcessKind::Number(2), 8).unwrap();
        assert!(n.apply(&vac.data).iter().all(|z| *z == Complex64::ZERO));
        // A^η_0 = 0 for η ≠ time
        assert!(fundamental(&basis, ProcessKind::Creation(1), 0).unwrap().is_zero());
    }

    #[test]
    fn increments_are_additive_bit_exactly() {
        let basis = setup();
        for eta in [ProcessKind::Annihilation(2), ProcessKind::Creation(1), ProcessKind::Number(3), ProcessKind::Time] {
            let inc = fundamental_increment(&basis, eta, 2, 6).unwrap();
            let head = fundamental_increment(&basis, eta, 0, 2).unwrap();
            let total = fundamental_increment(&basis, eta, 0, 6).unwrap();
            // increments built from cells: equality holds to the last bit
            assert_eq!(head.add(&inc), total, "{eta}");
        }
    }

    #[test]
    fn adjoint_pairing_filtered_and_mfree() {
        let basis = setup();
        let v = Filter::from_colors([1, 3]);
        let cre = filtered(
            &basis,
            &FilteredKind { kind: ProcessKind::Creation(1), filter: v.clone() },
            5,
        )
        .unwrap();
        let ann = filtered(
            &basis,
            &FilteredKind { kind: ProcessKind::Annihilation(1), filter: v },
            5,
        )
        .unwrap();
        assert_eq!(cre.adjoint(), ann);
        for m in 1..=3 {
            let l = mfree(&basis, &MFreeKind::new(Level::Finite(m), MFreeSort::Annihilation), 5, None).unwrap();
            let lstar = mfree(&basis, &MFreeKind::new(Level::Finite(m), MFreeSort::Creation), 5, None).unwrap();
            assert_eq!(lstar.adjoint(), l);
            let lnum = mfree(&basis, &MFreeKind::new(Level::Finite(m), MFreeSort::Number), 5, None).unwrap();
            assert_eq!(lnum.adjoint(), lnum);
        }
    }

    #[test]
    fn expansion_matches_defining_sums() {
        // (m=2, creation) → creation(1) with band 0, creation(2) with band 1
        let e = expansion(MFreeSort::Creation, 2);
        assert_eq!(
            e,
            vec![
                (ProcessKind::Creation(1), Projection::Band(0)),
                (ProcessKind::Creation(2), Projection::Band(1)),
            ]
        );
        // (m=1, time): l^(1)· = P_Ω · t
        let e = expansion(MFreeSort::Time, 1);
        assert_eq!(e, vec![(ProcessKind::Time, Projection::Filter(Filter::empty()))]);
        // (m=2, number) carries bands, not plain filters
        let e = expansion(MFreeSort::Number, 2);
        assert_eq!(
            e,
            vec![
                (ProcessKind::Number(1), Projection::Band(1)),
                (ProcessKind::Number(2), Projection::Band(2)),
            ]
        );
    }

    #[test]
    fn boolean_creation_is_vacuum_projected() {
        let basis = setup();
        let l1 = mfree(&basis, &MFreeKind::new(Level::Finite(1), MFreeSort::Creation), 4, None).unwrap();
        let astar = fundamental(&basis, ProcessKind::Creation(1), 4).unwrap();
        let pvac = ampliate(&basis, &color_projection(&basis, &Filter::empty()).unwrap());
        assert_eq!(l1, astar.mul(&pvac));
        // l^(m) Ω = 0 for all m
        let vac = ExponentialState::vacuum(&basis.grid, vec![c(1.0, 0.0), c(0.0, 0.0)])
            .materialize(&basis)
            .unwrap();
        for m in 1..=3 {
            let l = mfree(&basis, &MFreeKind::new(Level::Finite(m), MFreeSort::Annihilation), 8, None).unwrap();
            assert!(l.apply(&vac.data).iter().all(|z| *z == Complex64::ZERO));
        }
    }

    #[test]
    fn free_limit_stabilizes_on_bounded_support() {
        let basis = setup();
        let g = basis.grid;
        // x with color support ≤ 1: creation stabilizes from m = 2 on
        let mut u = OneParticleVector::zero(&g);
        u.set(2, 1, c(0.4, 0.0)).unwrap();
        let x = ExponentialState::new(vec![c(1.0, 0.0), c(0.0, 0.0)], u).materialize(&basis).unwrap();
        let linf = mfree(&basis, &MFreeKind::new(Level::Inf, MFreeSort::Creation), 6, Some(1)).unwrap();
        for m in 2..=3 {
            let lm = mfree(&basis, &MFreeKind::new(Level::Finite(m), MFreeSort::Creation), 6, None).unwrap();
            let d: f64 = lm
                .apply(&x.data)
                .iter()
                .zip(linf.apply(&x.data).iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            assert!(d == 0.0, "m = {m} differs from stabilized free limit");
        }
        assert!(mfree(&basis, &MFreeKind::new(Level::Inf, MFreeSort::Creation), 6, None).is_err());
        assert!(mfree(&basis, &MFreeKind::new(Level::Finite(9), MFreeSort::Creation), 6, None).is_err());
    }
}
