//! Time grid, color set and filters.

use crate::error::{FfError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Relative tolerance used to snap a floating time onto the grid.
const GRID_SNAP: f64 = 1e-9;

/// Finite model parameters: horizon `[0,T]` split into equal cells, a finite
/// color set `{1..C}`, a particle-number cutoff and an initial-space
/// dimension.
///
/// The one-particle space is spanned by step functions on the grid, one
/// complex amplitude per (cell, color) pair, so its dimension is
/// `n_cells * n_colors`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub horizon: f64,
    pub n_cells: usize,
    pub n_colors: usize,
    pub n_max: usize,
    pub h0_dim: usize,
}

impl GridSpec {
    pub fn new(
        horizon: f64,
        n_cells: usize,
        n_colors: usize,
        n_max: usize,
        h0_dim: usize,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(FfError::InvalidGrid(format!("horizon {horizon} must be positive")));
        }
        if n_cells == 0 || n_colors == 0 || h0_dim == 0 {
            return Err(FfError::InvalidGrid(
                "n_cells, n_colors and h0_dim must be positive".into(),
            ));
        }
        if n_colors > 62 {
            return Err(FfError::InvalidGrid(format!("n_colors {n_colors} exceeds 62")));
        }
        Ok(GridSpec { horizon, n_cells, n_colors, n_max, h0_dim })
    }

    /// Cell width.
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_cells as f64
    }

    /// Dimension of the one-particle space.
    pub fn one_particle_dim(&self) -> usize {
        self.n_cells * self.n_colors
    }

    /// Flat mode index of a (cell, 1-based color) pair.
    pub fn mode(&self, cell: usize, color: usize) -> usize {
        debug_assert!(cell < self.n_cells && color >= 1 && color <= self.n_colors);
        cell * self.n_colors + (color - 1)
    }

    pub fn mode_cell(&self, mode: usize) -> usize {
        mode / self.n_colors
    }

    /// 1-based color of a mode.
    pub fn mode_color(&self, mode: usize) -> usize {
        mode % self.n_colors + 1
    }

    pub fn time_at(&self, cells: usize) -> f64 {
        cells as f64 * self.dt()
    }

    /// Snap `t` onto the grid, returning the cell count `j` with `t = j·Δ`.
    pub fn cells_at_time(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        let j = (t / dt).round();
        if j < 0.0
            || j > self.n_cells as f64
            || (t - j * dt).abs() > GRID_SNAP * self.horizon.max(1.0)
        {
            return Err(FfError::OffGridTime { t, dt });
        }
        Ok(j as usize)
    }

    pub fn check_color(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.n_colors {
            return Err(FfError::ColorOutOfRange { k, n_colors: self.n_colors });
        }
        Ok(())
    }
}

/// A color filter: either the distinguished FULL token (the untruncated
/// color set, on which every color test passes) or a finite subset of
/// `{1..C}` stored as a bitmask.
///
/// FULL is deliberately not identified with `{1..C}`: "contains color k"
/// stays true for every k even if the truncation C grows, and the associated
/// projection is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Filter {
    Full,
    Set(u64),
}

impl Filter {
    pub fn empty() -> Self {
        Filter::Set(0)
    }

    pub fn from_colors<I: IntoIterator<Item = usize>>(colors: I) -> Self {
        let mut mask = 0u64;
        for k in colors {
            assert!(k >= 1 && k <= 62, "color out of representable range");
            mask |= 1 << k;
        }
        Filter::Set(mask)
    }

    /// `{1, …, r}`; `r = 0` gives the empty filter.
    pub fn range(r: usize) -> Self {
        Filter::from_colors(1..=r)
    }

    pub fn contains(&self, k: usize) -> bool {
        match self {
            Filter::Full => true,
            Filter::Set(mask) => k >= 1 && k <= 62 && (mask >> k) & 1 == 1,
        }
    }

    pub fn intersect(&self, other: &Filter) -> Filter {
        match (self, other) {
            (Filter::Full, f) => f.clone(),
            (f, Filter::Full) => f.clone(),
            (Filter::Set(a), Filter::Set(b)) => Filter::Set(a & b),
        }
    }

    pub fn union(&self, other: &Filter) -> Filter {
        match (self, other) {
            (Filter::Full, _) | (_, Filter::Full) => Filter::Full,
            (Filter::Set(a), Filter::Set(b)) => Filter::Set(a | b),
        }
    }

    /// Union with a single color.
    pub fn with_color(&self, k: usize) -> Filter {
        self.union(&Filter::from_colors([k]))
    }

    pub fn is_full(&self) -> bool {
        matches!(self, Filter::Full)
    }

    pub fn is_empty_set(&self) -> bool {
        matches!(self, Filter::Set(0))
    }

    /// Proper subset test; FULL strictly contains every finite set.
    pub fn is_proper_subset_of(&self, other: &Filter) -> bool {
        match (self, other) {
            (Filter::Full, _) => false,
            (Filter::Set(_), Filter::Full) => true,
            (Filter::Set(a), Filter::Set(b)) => a & b == *a && a != b,
        }
    }

    pub fn is_subset_of(&self, other: &Filter) -> bool {
        self == other || self.is_proper_subset_of(other)
    }

    pub fn colors(&self) -> Vec<usize> {
        match self {
            Filter::Full => Vec::new(),
            Filter::Set(mask) => (1..=62).filter(|k| (mask >> k) & 1 == 1).collect(),
        }
    }

    /// Colors the filter passes through, with FULL resolved to `{1..C}`.
    pub fn colors_within(&self, n_colors: usize) -> Vec<usize> {
        match self {
            Filter::Full => (1..=n_colors).collect(),
            Filter::Set(_) => self.colors(),
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if let Filter::Set(_) = self {
            for k in self.colors() {
                if k > grid.n_colors {
                    return Err(FfError::FilterOutOfRange {
                        filter: self.to_string(),
                        n_colors: grid.n_colors,
                    });
                }
            }
        }
        Ok(())
    }

    /// All subsets of `{1..C}` (no FULL), ordered by cardinality then mask.
    pub fn all_subsets(n_colors: usize) -> Vec<Filter> {
        let full_mask: u64 = ((1u64 << n_colors) - 1) << 1;
        let mut masks: Vec<u64> = (0..=full_mask)
            .filter(|m| m & !full_mask == 0 && m & 1 == 0)
            .collect();
        masks.sort_by_key(|m| (m.count_ones(), *m));
        masks.into_iter().map(Filter::Set).collect()
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Filter::Full => write!(f, "FULL"),
            Filter::Set(_) => {
                let colors = self.colors();
                write!(f, "{{")?;
                for (i, k) in colors.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{k}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// A projection descriptor attached to an expansion summand: either a plain
/// color filter `P^(V)` or a band `P^[k]` (largest color exactly k, vacuum at
/// k = 0).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Projection {
    Filter(Filter),
    Band(usize),
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Projection::Filter(v) => write!(f, "P{v}"),
            Projection::Band(k) => write!(f, "P[{k}]"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = GridSpec::new(1.0, 8, 3, 3, 2).unwrap();
        assert_eq!(g.dt(), 0.125);
        assert_eq!(g.one_particle_dim(), 24);
        assert_eq!(g.mode(0, 1), 0);
        assert_eq!(g.mode(1, 3), 5);
        assert_eq!(g.mode_cell(5), 1);
        assert_eq!(g.mode_color(5), 3);
        assert_eq!(g.cells_at_time(0.5).unwrap(), 4);
        assert!(g.cells_at_time(0.3).is_err());
        assert!(g.cells_at_time(1.5).is_err());
    }

    #[test]
    fn filter_lattice() {
        let v = Filter::from_colors([1, 2]);
        let w = Filter::from_colors([2, 3]);
        assert_eq!(v.intersect(&w), Filter::from_colors([2]));
        assert_eq!(v.union(&w), Filter::from_colors([1, 2, 3]));
        assert_eq!(v.intersect(&Filter::Full), v);
        assert!(Filter::Full.contains(17));
        assert!(!v.contains(3));
        assert!(v.is_proper_subset_of(&Filter::Full));
        assert!(Filter::empty().is_proper_subset_of(&v));
        assert_eq!(Filter::range(0), Filter::empty());
        assert_eq!(Filter::range(2), v);
        assert_eq!(Filter::all_subsets(2).len(), 4);
        assert_eq!(format!("{}", v), "{1,2}");
        assert_eq!(format!("{}", Filter::Full), "FULL");
    }
}
