//! Windowed phase space: the bounded box we compute on, axis-aligned boxes,
//! and the uniform cubical grid over the window.
//!
//! Distances are Euclidean throughout. Cells are half-open boxes
//! `[lo + k·w, lo + (k+1)·w)` for point location; for set intersection
//! tests we treat them as closed.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type Point = SmallVec<[f64; 4]>;
pub type MultiIndex = SmallVec<[usize; 4]>;

/// Axis-aligned box of the phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Window {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::InvalidWindow("dimension must be at least 1".into()));
        }
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidWindow(format!("axis {i}: need lo < hi, got [{a}, {b}]")));
            }
        }
        Ok(Window { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn as_box(&self) -> Aabb {
        Aabb::new(&self.lo, &self.hi)
    }

    /// Closed containment.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| *a <= *x && *x <= *b)
    }
}

/// Closed axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct Aabb {
    pub lo: Point,
    pub hi: Point,
}

impl Aabb {
    pub fn new(lo: &[f64], hi: &[f64]) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Aabb { lo: lo.iter().copied().collect(), hi: hi.iter().copied().collect() }
    }

    pub fn point(p: &[f64]) -> Self {
        Aabb::new(p, p)
    }

    /// Bounding box of a nonempty point cloud.
    pub fn hull<'a, I: IntoIterator<Item = &'a [f64]>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Aabb::point(first);
        for p in it {
            b.expand_to(p);
        }
        Some(b)
    }

    pub fn expand_to(&mut self, p: &[f64]) {
        for ((lo, hi), &x) in self.lo.iter_mut().zip(self.hi.iter_mut()).zip(p) {
            *lo = lo.min(x);
            *hi = hi.max(x);
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Point {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn half_diameter(&self) -> f64 {
        0.5 * self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|x| x.is_finite())
    }

    pub fn inflate(&self, r: f64) -> Aabb {
        Aabb {
            lo: self.lo.iter().map(|x| x - r).collect(),
            hi: self.hi.iter().map(|x| x + r).collect(),
        }
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= p[i] && p[i] <= self.hi[i])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Closed intersection test.
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.hi[i] && other.lo[i] <= self.hi[i])
    }

    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        if !self.intersects(other) {
            return None;
        }
        Some(Aabb {
            lo: (0..self.dim()).map(|i| self.lo[i].max(other.lo[i])).collect(),
            hi: (0..self.dim()).map(|i| self.hi[i].min(other.hi[i])).collect(),
        })
    }

    /// Smallest distance between a point of `self` and a point of `other`.
    pub fn dist(&self, other: &Aabb) -> f64 {
        (0..self.dim())
            .map(|i| {
                let gap = (other.lo[i] - self.hi[i]).max(self.lo[i] - other.hi[i]).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest distance between a point of `self` and a point of `other`.
    pub fn max_dist(&self, other: &Aabb) -> f64 {
        (0..self.dim())
            .map(|i| {
                let span = (other.hi[i] - self.lo[i]).max(self.hi[i] - other.lo[i]);
                span * span
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `max_{x in self} d(x, other)`.
    pub fn farthest_dist(&self, other: &Aabb) -> f64 {
        (0..self.dim())
            .map(|i| {
                let gap = |x: f64| (other.lo[i] - x).max(x - other.hi[i]).max(0.0);
                let g = gap(self.lo[i]).max(gap(self.hi[i]));
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn dist_point(&self, p: &[f64]) -> f64 {
        (0..self.dim())
            .map(|i| {
                let gap = (self.lo[i] - p[i]).max(p[i] - self.hi[i]).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_dist_point(&self, p: &[f64]) -> f64 {
        (0..self.dim())
            .map(|i| {
                let span = (p[i] - self.lo[i]).abs().max((self.hi[i] - p[i]).abs());
                span * span
            })
            .sum::<f64>()
            .sqrt()
    }

    /// The `3^dim` lattice of corners, face centers and center.
    pub fn lattice3(&self) -> Vec<Point> {
        self.lattice(&[0.0, 0.5, 1.0])
    }

    /// Product lattice with the given relative offsets along every axis.
    pub fn lattice(&self, offsets: &[f64]) -> Vec<Point> {
        let d = self.dim();
        let m = offsets.len();
        let total = m.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        for mut code in 0..total {
            let mut p = Point::with_capacity(d);
            for i in 0..d {
                let t = offsets[code % m];
                code /= m;
                p.push(if t == 0.0 {
                    self.lo[i]
                } else if t == 1.0 {
                    self.hi[i]
                } else {
                    self.lo[i] + t * (self.hi[i] - self.lo[i])
                });
            }
            out.push(p);
        }
        out
    }
}

/// Uniform cubical grid over a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid {
    window: Window,
    subdivisions: Vec<usize>,
    widths: Vec<f64>,
    strides: Vec<usize>,
    n_cells: usize,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    lo: Vec<f64>,
    hi: Vec<f64>,
    subdivisions: Vec<usize>,
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        Grid::new(Window::new(r.lo, r.hi)?, r.subdivisions)
    }
}

impl From<Grid> for GridRepr {
    fn from(g: Grid) -> Self {
        GridRepr { lo: g.window.lo, hi: g.window.hi, subdivisions: g.subdivisions }
    }
}

impl Grid {
    pub fn new(window: Window, subdivisions: Vec<usize>) -> Result<Self> {
        if subdivisions.len() != window.dim() {
            return Err(Error::DimensionMismatch { expected: window.dim(), got: subdivisions.len() });
        }
        if subdivisions.contains(&0) {
            return Err(Error::InvalidGrid("subdivisions must be positive".into()));
        }
        let n_cells = subdivisions
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .filter(|&n| n < u32::MAX as usize)
            .ok_or_else(|| Error::InvalidGrid("too many cells".into()))?;
        let widths = (0..window.dim())
            .map(|i| (window.hi[i] - window.lo[i]) / subdivisions[i] as f64)
            .collect();
        let mut strides = Vec::with_capacity(subdivisions.len());
        let mut s = 1;
        for &n in &subdivisions {
            strides.push(s);
            s *= n;
        }
        Ok(Grid { window, subdivisions, widths, strides, n_cells })
    }

    pub fn uniform(window: Window, n: usize) -> Result<Self> {
        let d = window.dim();
        Grid::new(window, vec![n; d])
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn subdivisions(&self) -> &[usize] {
        &self.subdivisions
    }

    pub fn cell_widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_diam(&self) -> f64 {
        self.widths.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Grid line `k` along `axis`; the last line is pinned to the window edge.
    #[inline]
    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        if k >= self.subdivisions[axis] {
            self.window.hi[axis]
        } else {
            self.window.lo[axis] + k as f64 * self.widths[axis]
        }
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn multi(&self, mut flat: usize) -> MultiIndex {
        let mut out = MultiIndex::with_capacity(self.dim());
        for &n in &self.subdivisions {
            out.push(flat % n);
            flat /= n;
        }
        out
    }

    pub fn cell_box(&self, flat: usize) -> Aabb {
        let idx = self.multi(flat);
        let lo: Point = (0..self.dim()).map(|i| self.coord(i, idx[i])).collect();
        let hi: Point = (0..self.dim()).map(|i| self.coord(i, idx[i] + 1)).collect();
        Aabb { lo, hi }
    }

    pub fn cell_center(&self, flat: usize) -> Point {
        self.cell_box(flat).center()
    }

    fn axis_index(&self, axis: usize, x: f64) -> Option<usize> {
        let n = self.subdivisions[axis];
        if !(x >= self.window.lo[axis] && x < self.window.hi[axis]) {
            return None;
        }
        let mut k = (((x - self.window.lo[axis]) / self.widths[axis]).floor() as usize).min(n - 1);
        if x < self.coord(axis, k) {
            k -= 1;
        } else if k + 1 < n && x >= self.coord(axis, k + 1) {
            k += 1;
        }
        Some(k)
    }

    /// Locate a point: `Ok(Some(cell))` inside the window, `Ok(None)` for OUTSIDE.
    pub fn cell_of(&self, p: &[f64]) -> Result<Option<usize>> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: p.len() });
        }
        let mut flat = 0;
        for (i, &x) in p.iter().enumerate() {
            match self.axis_index(i, x) {
                Some(k) => flat += k * self.strides[i],
                None => return Ok(None),
            }
        }
        Ok(Some(flat))
    }

    /// Per-axis inclusive index ranges of cells whose closed box can meet `b`.
    /// `None` when `b` misses the window.
    pub fn index_ranges(&self, b: &Aabb) -> Option<SmallVec<[(usize, usize); 4]>> {
        let mut out = SmallVec::new();
        for i in 0..self.dim() {
            let n = self.subdivisions[i];
            let (lo, hi) = (b.lo[i], b.hi[i]);
            if hi < self.window.lo[i] || lo > self.window.hi[i] || lo.is_nan() || hi.is_nan() {
                return None;
            }
            let w = self.widths[i];
            let a = ((lo - self.window.lo[i]) / w).floor() - 1.0;
            let z = ((hi - self.window.lo[i]) / w).floor() + 1.0;
            let a = a.max(0.0).min((n - 1) as f64) as usize;
            let z = z.max(0.0).min((n - 1) as f64) as usize;
            out.push((a, z));
        }
        Some(out)
    }

    /// Calls `f` for every cell whose closed box meets the closed box `b`.
    pub fn for_each_cell_meeting(&self, b: &Aabb, mut f: impl FnMut(usize)) {
        self.for_each_cell_in_ranges(b, |c, cb| {
            if cb.intersects(b) {
                f(c)
            }
        });
    }

    /// Calls `f(cell, cell_box)` for every cell in the candidate index ranges of `b`.
    pub fn for_each_cell_in_ranges(&self, b: &Aabb, mut f: impl FnMut(usize, &Aabb)) {
        let Some(ranges) = self.index_ranges(b) else { return };
        let d = self.dim();
        let mut idx: MultiIndex = ranges.iter().map(|r| r.0).collect();
        let mut cb = Aabb { lo: Point::from_elem(0.0, d), hi: Point::from_elem(0.0, d) };
        loop {
            for i in 0..d {
                cb.lo[i] = self.coord(i, idx[i]);
                cb.hi[i] = self.coord(i, idx[i] + 1);
            }
            f(self.flat(&idx), &cb);
            let mut axis = 0;
            loop {
                if axis == d {
                    return;
                }
                if idx[axis] < ranges[axis].1 {
                    idx[axis] += 1;
                    break;
                }
                idx[axis] = ranges[axis].0;
                axis += 1;
            }
        }
    }

    /// Cells within Chebyshev index radius `r` of `flat` (including itself).
    pub fn neighbors(&self, flat: usize, r: usize, mut f: impl FnMut(usize)) {
        let center = self.multi(flat);
        let d = self.dim();
        let ranges: SmallVec<[(usize, usize); 4]> = (0..d)
            .map(|i| (center[i].saturating_sub(r), (center[i] + r).min(self.subdivisions[i] - 1)))
            .collect();
        let mut idx: MultiIndex = ranges.iter().map(|r| r.0).collect();
        loop {
            f(self.flat(&idx));
            let mut axis = 0;
            loop {
                if axis == d {
                    return;
                }
                if idx[axis] < ranges[axis].1 {
                    idx[axis] += 1;
                    break;
                }
                idx[axis] = ranges[axis].0;
                axis += 1;
            }
        }
    }

    /// True when the cell touches the window boundary.
    pub fn on_boundary(&self, flat: usize) -> bool {
        let idx = self.multi(flat);
        idx.iter().zip(&self.subdivisions).any(|(&k, &n)| k == 0 || k + 1 == n)
    }

    /// Chebyshev index distance from the cell to the outside of the window
    /// (0 for boundary cells).
    pub fn depth_from_edge(&self, flat: usize) -> usize {
        let idx = self.multi(flat);
        idx.iter().zip(&self.subdivisions).map(|(&k, &n)| k.min(n - 1 - k)).min().unwrap_or(0)
    }

    /// The grid refined by an integer factor per axis.
    pub fn refined(&self, factor: usize) -> Result<Grid> {
        Grid::new(self.window.clone(), self.subdivisions.iter().map(|n| n * factor).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Grid {
        Grid::uniform(Window::new(vec![0.0], vec![1.0]).unwrap(), n).unwrap()
    }

    #[test]
    fn cell_of_examples() {
        let g = unit_grid(4);
        assert_eq!(g.cell_of(&[0.3]).unwrap(), Some(1));
        assert_eq!(g.cell_of(&[1.7]).unwrap(), None);
        assert_eq!(g.cell_of(&[0.25]).unwrap(), Some(1));
        assert_eq!(g.cell_of(&[1.0]).unwrap(), None);

        let g2 = Grid::uniform(Window::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(), 4).unwrap();
        let c = g2.cell_of(&[0.0, 0.0]).unwrap().unwrap();
        assert_eq!(g2.multi(c).as_slice(), &[2, 2]);
    }

    #[test]
    fn cell_of_dimension_mismatch() {
        let g = unit_grid(4);
        assert!(matches!(g.cell_of(&[0.1, 0.2]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_window_rejected() {
        assert!(Window::new(vec![1.0], vec![0.0]).is_err());
        assert!(Window::new(vec![], vec![]).is_err());
    }

    #[test]
    fn box_distances() {
        let a = Aabb::new(&[0.0], &[0.5]);
        let b = Aabb::new(&[0.75], &[1.0]);
        assert_eq!(a.dist(&b), 0.25);
        assert_eq!(a.max_dist(&b), 1.0);
        assert_eq!(Aabb::new(&[0.5], &[1.0]).dist_point(&[0.0]), 0.5);
    }

    #[test]
    fn cells_meeting_touching_box() {
        let g = unit_grid(4);
        let mut got = vec![];
        g.for_each_cell_meeting(&Aabb::new(&[0.25], &[0.3]), |c| got.push(c));
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn lattice_has_expected_size() {
        let b = Aabb::new(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]);
        assert_eq!(b.lattice3().len(), 27);
    }

    proptest::proptest! {
        #[test]
        fn cell_of_partitions_window(x in -1.0f64..1.0, y in -1.0f64..1.0, n in 1usize..17) {
            let g = Grid::uniform(Window::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(), n).unwrap();
            let c = g.cell_of(&[x, y]).unwrap().unwrap();
            let b = g.cell_box(c);
            // half-open membership in exactly the located cell
            proptest::prop_assert!(b.lo[0] <= x && x < b.hi[0] && b.lo[1] <= y && y < b.hi[1]);
            let mut hits = 0;
            for k in 0..g.n_cells() {
                let b = g.cell_box(k);
                if b.lo[0] <= x && x < b.hi[0] && b.lo[1] <= y && y < b.hi[1] {
                    hits += 1;
                }
            }
            proptest::prop_assert_eq!(hits, 1);
        }
    }
}
