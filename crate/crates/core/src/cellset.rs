use std::fmt;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::space::{Aabb, Grid};

/// A union of grid cells plus an optional OUTSIDE marker for the part of
/// the phase space beyond the window.
#[derive(Clone, PartialEq)]
pub struct CellSet {
    grid: Arc<Grid>,
    bits: FixedBitSet,
    includes_outside: bool,
}

impl CellSet {
    pub fn empty(grid: &Arc<Grid>) -> Self {
        CellSet { grid: grid.clone(), bits: FixedBitSet::with_capacity(grid.n_cells()), includes_outside: false }
    }

    /// Every cell of the grid; OUTSIDE not included.
    pub fn full(grid: &Arc<Grid>) -> Self {
        let mut s = Self::empty(grid);
        s.bits.insert_range(..);
        s
    }

    pub fn from_cells(grid: &Arc<Grid>, cells: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(grid);
        for c in cells {
            s.insert(c);
        }
        s
    }

    pub fn from_predicate(grid: &Arc<Grid>, mut pred: impl FnMut(usize) -> bool) -> Self {
        let mut s = Self::empty(grid);
        for c in 0..grid.n_cells() {
            if pred(c) {
                s.bits.insert(c);
            }
        }
        s
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn includes_outside(&self) -> bool {
        self.includes_outside
    }

    pub fn set_outside(&mut self, yes: bool) {
        self.includes_outside = yes;
    }

    pub fn with_outside(mut self, yes: bool) -> Self {
        self.includes_outside = yes;
        self
    }

    pub fn insert(&mut self, cell: usize) {
        assert!(cell < self.grid.n_cells(), "cell {cell} out of range");
        self.bits.insert(cell);
    }

    pub fn remove(&mut self, cell: usize) {
        self.bits.set(cell, false);
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.bits.contains(cell)
    }

    /// Number of member cells (OUTSIDE not counted).
    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    /// True when no cell and no OUTSIDE marker.
    pub fn is_void(&self) -> bool {
        self.is_empty() && !self.includes_outside
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.grid.n_cells()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.ones()
    }

    pub fn cells(&self) -> Vec<usize> {
        self.iter().collect()
    }

    fn check_same(&self, other: &CellSet) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch("cell sets live on different grids".into()))
        }
    }

    pub fn union(&self, other: &CellSet) -> Result<CellSet> {
        self.check_same(other)?;
        let mut bits = self.bits.clone();
        bits.union_with(&other.bits);
        Ok(CellSet { grid: self.grid.clone(), bits, includes_outside: self.includes_outside || other.includes_outside })
    }

    pub fn union_with(&mut self, other: &CellSet) -> Result<()> {
        self.check_same(other)?;
        self.bits.union_with(&other.bits);
        self.includes_outside |= other.includes_outside;
        Ok(())
    }

    pub fn intersection(&self, other: &CellSet) -> Result<CellSet> {
        self.check_same(other)?;
        let mut bits = self.bits.clone();
        bits.intersect_with(&other.bits);
        Ok(CellSet { grid: self.grid.clone(), bits, includes_outside: self.includes_outside && other.includes_outside })
    }

    pub fn difference(&self, other: &CellSet) -> Result<CellSet> {
        self.check_same(other)?;
        let mut bits = self.bits.clone();
        bits.difference_with(&other.bits);
        Ok(CellSet { grid: self.grid.clone(), bits, includes_outside: self.includes_outside && !other.includes_outside })
    }

    /// Complement relative to the grid, toggling OUTSIDE.
    pub fn complement(&self) -> CellSet {
        let mut bits = self.bits.clone();
        bits.toggle_range(..);
        CellSet { grid: self.grid.clone(), bits, includes_outside: !self.includes_outside }
    }

    /// Cell-wise inclusion; the OUTSIDE marker is ignored.
    pub fn cells_subset(&self, other: &CellSet) -> Result<bool> {
        self.check_same(other)?;
        Ok(self.bits.is_subset(&other.bits))
    }

    /// Inclusion including the OUTSIDE marker.
    pub fn is_subset(&self, other: &CellSet) -> Result<bool> {
        Ok(self.cells_subset(other)? && (!self.includes_outside || other.includes_outside))
    }

    /// Adds every cell within Chebyshev index radius `r`. When OUTSIDE is a
    /// member, the ring of cells within `r` of the window edge is added too.
    pub fn dilate(&self, r: usize) -> CellSet {
        if r == 0 {
            return self.clone();
        }
        let mut out = self.clone();
        for c in self.bits.ones() {
            self.grid.neighbors(c, r, |n| out.bits.insert(n));
        }
        if self.includes_outside {
            for c in 0..self.grid.n_cells() {
                if self.grid.depth_from_edge(c) < r {
                    out.bits.insert(c);
                }
            }
        }
        out
    }

    /// Dual of [`dilate`](Self::dilate).
    pub fn erode(&self, r: usize) -> CellSet {
        self.complement().dilate(r).complement()
    }

    /// Euclidean distance from `p` to the union of member cell boxes
    /// (`+inf` for an empty set).
    pub fn distance(&self, p: &[f64]) -> f64 {
        self.iter().map(|c| self.grid.cell_box(c).dist_point(p)).fold(f64::INFINITY, f64::min)
    }

    /// Smallest distance between the box and any member cell.
    pub fn box_distance(&self, b: &Aabb) -> f64 {
        self.iter().map(|c| self.grid.cell_box(c).dist(b)).fold(f64::INFINITY, f64::min)
    }

    /// An upper bound for `max_{x in b} d(x, S)`: no point of `b` is farther
    /// from `S` than from the best single member cell.
    pub fn box_distance_upper(&self, b: &Aabb) -> f64 {
        self.iter().map(|c| b.farthest_dist(&self.grid.cell_box(c))).fold(f64::INFINITY, f64::min)
    }

    /// Sorted multi-indices of the members.
    pub fn multi_indices(&self) -> Vec<Vec<usize>> {
        self.iter().map(|c| self.grid.multi(c).to_vec()).collect()
    }
}

impl fmt::Debug for CellSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CellSet")
            .field("cells", &self.len())
            .field("includes_outside", &self.includes_outside)
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct CellSetRepr {
    grid: Grid,
    includes_outside: bool,
    cells: Vec<Vec<usize>>,
}

impl Serialize for CellSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        // multi-indices are emitted in flat order, which is lexicographic in
        // reversed axis order; sort for a stable lexicographic listing.
        let mut cells = self.multi_indices();
        cells.sort();
        CellSetRepr { grid: (*self.grid).clone(), includes_outside: self.includes_outside, cells }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CellSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = CellSetRepr::deserialize(d)?;
        let grid = Arc::new(r.grid);
        let mut s = CellSet::empty(&grid);
        for idx in r.cells {
            if idx.len() != grid.dim() || idx.iter().zip(grid.subdivisions()).any(|(k, n)| k >= n) {
                return Err(serde::de::Error::custom(format!("cell {idx:?} not in grid")));
            }
            s.insert(grid.flat(&idx));
        }
        s.includes_outside = r.includes_outside;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Window;

    fn grid1(lo: f64, hi: f64, n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(Window::new(vec![lo], vec![hi]).unwrap(), n).unwrap())
    }

    #[test]
    fn dilate_empty_is_empty() {
        let g = grid1(0.0, 1.0, 8);
        assert!(CellSet::empty(&g).dilate(3).is_void());
    }

    #[test]
    fn complement_of_full_is_outside_only() {
        let g = grid1(0.0, 1.0, 8);
        let c = CellSet::full(&g).complement();
        assert!(c.is_empty());
        assert!(c.includes_outside());
    }

    #[test]
    fn distance_to_upper_half() {
        let g = grid1(0.0, 1.0, 4);
        let s = CellSet::from_cells(&g, [2, 3]);
        assert_eq!(s.distance(&[0.0]), 0.5);
        assert_eq!(CellSet::empty(&g).distance(&[0.0]), f64::INFINITY);
    }

    #[test]
    fn dilate_and_erode() {
        let g = grid1(0.0, 1.0, 10);
        let s = CellSet::from_cells(&g, [4, 5]);
        assert_eq!(s.dilate(1).cells(), vec![3, 4, 5, 6]);
        assert_eq!(s.dilate(1).erode(1).cells(), vec![4, 5]);
        let with_out = CellSet::empty(&g).with_outside(true);
        assert_eq!(with_out.dilate(2).cells(), vec![0, 1, 8, 9]);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = CellSet::empty(&grid1(0.0, 1.0, 4));
        let b = CellSet::empty(&grid1(0.0, 1.0, 8));
        assert!(matches!(a.union(&b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn json_shape() {
        let g = grid1(0.0, 1.0, 4);
        let s = CellSet::from_cells(&g, [3, 1]);
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["cells"], serde_json::json!([[1], [3]]));
        let back: CellSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }

    proptest::proptest! {
        #[test]
        fn complement_is_involutive(cells in proptest::collection::vec(0usize..36, 0..20), out in proptest::bool::ANY) {
            let g = Arc::new(Grid::uniform(Window::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), 6).unwrap());
            let s = CellSet::from_cells(&g, cells).with_outside(out);
            proptest::prop_assert_eq!(s.complement().complement(), s.clone());
            let d = s.dilate(1);
            proptest::prop_assert!(s.is_subset(&d).unwrap());
            proptest::prop_assert!(s.erode(1).is_subset(&s).unwrap());
        }
    }
}
