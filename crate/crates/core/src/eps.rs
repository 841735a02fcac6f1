//! Strictly positive continuous functions on the window, with per-box
//! lower/upper bounds.
//!
//! Bounds for `Constant`, `Radial`, `EtaFromSets` and `Scaled` are exact
//! enclosures (up to floating-point rounding). `Expression` bounds come from
//! interval evaluation; if that enclosure touches zero while every sample is
//! positive, the lower bound falls back to the sampled minimum minus a
//! Lipschitz margin when a constant was supplied, and to the bare sampled
//! minimum otherwise (not rigorous).

use rayon::prelude::*;

use crate::cellset::CellSet;
use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr};
use crate::interval::Interval;
use crate::space::{Aabb, Grid};

#[derive(Clone, Debug)]
pub enum EpsKind {
    Constant(f64),
    /// `sum_k coefficients[k] * |x - center|^k`
    Radial { center: Vec<f64>, coefficients: Vec<f64> },
    Expression { expr: Expr, source: String, lipschitz: Option<f64> },
    /// `½ (d(x, T) + d(x, X \ U))`
    EtaFromSets { u: CellSet, t: CellSet },
    Scaled { base: Box<EpsFunction>, factor: f64 },
}

#[derive(Clone, Debug)]
pub struct EpsFunction {
    kind: EpsKind,
    dim: usize,
}

impl EpsFunction {
    pub fn constant(dim: usize, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::EpsNotPositive(format!("constant {c}")));
        }
        Ok(EpsFunction { kind: EpsKind::Constant(c), dim })
    }

    pub fn radial(center: Vec<f64>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::EpsNotPositive("radial coefficients must be finite and nonempty".into()));
        }
        let dim = center.len();
        Ok(EpsFunction { kind: EpsKind::Radial { center, coefficients }, dim })
    }

    pub fn expression(src: &str, dim: usize, lipschitz: Option<f64>) -> Result<Self> {
        let expr = parse_expr(src, dim)?;
        Ok(EpsFunction { kind: EpsKind::Expression { expr, source: src.to_string(), lipschitz }, dim })
    }

    pub fn kind(&self) -> &EpsKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            EpsKind::Constant(c) => format!("constant({c})"),
            EpsKind::Radial { center, coefficients } => format!("radial(center={center:?}, coefficients={coefficients:?})"),
            EpsKind::Expression { source, .. } => format!("expression({source})"),
            EpsKind::EtaFromSets { u, t } => format!("eta(U: {} cells, T: {} cells)", u.len(), t.len()),
            EpsKind::Scaled { base, factor } => format!("{factor} * {}", base.describe()),
        }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        match &self.kind {
            EpsKind::Constant(c) => *c,
            EpsKind::Radial { center, coefficients } => {
                let r = center.iter().zip(p).map(|(c, x)| (x - c) * (x - c)).sum::<f64>().sqrt();
                coefficients.iter().rev().fold(0.0, |acc, a| acc * r + a)
            }
            EpsKind::Expression { expr, .. } => expr.eval(p),
            EpsKind::EtaFromSets { u, t } => 0.5 * (t.distance(p) + complement_distance(u, p)),
            EpsKind::Scaled { base, factor } => factor * base.eval(p),
        }
    }

    /// `(lower, upper)` with `lower <= eps(x) <= upper` on `b ∩ window`.
    pub fn bounds(&self, b: &Aabb) -> Result<(f64, f64)> {
        if b.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: b.dim() });
        }
        if let EpsKind::Constant(c) = self.kind {
            return Ok((c, c));
        }
        if let EpsKind::Scaled { base, factor } = &self.kind {
            let (lo, hi) = base.bounds(b)?;
            return Ok((lo * factor, hi * factor));
        }
        let (mut smin, mut smax) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in b.lattice3() {
            let v = self.eval(&p);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::EpsNotPositive(format!("{} evaluates to {v} at {:?}", self.describe(), p.as_slice())));
            }
            smin = smin.min(v);
            smax = smax.max(v);
        }
        let (lo, hi) = match &self.kind {
            EpsKind::Radial { center, coefficients } => {
                let r = Interval::new(b.dist_point(center), b.max_dist_point(center));
                let v = coefficients.iter().rev().fold(Interval::point(0.0), |acc, a| acc * r + Interval::point(*a));
                (v.lo, v.hi)
            }
            EpsKind::Expression { expr, lipschitz, .. } => {
                let iv: Vec<Interval> = (0..self.dim).map(|i| Interval::new(b.lo[i], b.hi[i])).collect();
                let v = expr.eval_interval(&iv);
                let lo = if v.lo > 0.0 {
                    v.lo
                } else {
                    match lipschitz {
                        Some(l) if smin - l * b.half_diameter() > 0.0 => smin - l * b.half_diameter(),
                        _ => smin,
                    }
                };
                let hi = if v.hi.is_finite() {
                    v.hi
                } else {
                    match lipschitz {
                        Some(l) => smax + l * b.half_diameter(),
                        None => smax,
                    }
                };
                (lo, hi)
            }
            EpsKind::EtaFromSets { u, t } => {
                let lo = 0.5 * (t.box_distance(b) + complement_box_distance(u, b));
                let hi = 0.5 * (t.box_distance_upper(b) + complement_box_distance_upper(u, b));
                (lo, hi)
            }
            EpsKind::Constant(_) | EpsKind::Scaled { .. } => unreachable!(),
        };
        let lo = lo.min(smin);
        let hi = hi.max(smax);
        // also rejects NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(lo > 0.0) {
            return Err(Error::EpsNotPositive(format!(
                "{} has lower bound {lo} on box {:?}..{:?}",
                self.describe(),
                b.lo.as_slice(),
                b.hi.as_slice()
            )));
        }
        Ok((lo, hi))
    }

    /// Bounds over `b` clipped to the window (or over `b` itself when it
    /// misses the window).
    pub fn bounds_in(&self, b: &Aabb, grid: &Grid) -> Result<(f64, f64)> {
        match b.intersection(&grid.window().as_box()) {
            Some(c) => self.bounds(&c),
            None => self.bounds(b),
        }
    }

    /// Per-cell bounds over the whole grid.
    pub fn cell_bounds(&self, grid: &Grid) -> Result<Vec<(f64, f64)>> {
        (0..grid.n_cells()).into_par_iter().map(|c| self.bounds(&grid.cell_box(c))).collect()
    }
}

fn outside_distance(u: &CellSet, p: &[f64]) -> f64 {
    if u.includes_outside() {
        return f64::INFINITY;
    }
    let w = u.grid().window();
    (0..p.len())
        .map(|i| (p[i] - w.lo()[i]).min(w.hi()[i] - p[i]))
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

fn complement_distance(u: &CellSet, p: &[f64]) -> f64 {
    let grid = u.grid();
    let cells = (0..grid.n_cells())
        .filter(|&c| !u.contains(c))
        .map(|c| grid.cell_box(c).dist_point(p))
        .fold(f64::INFINITY, f64::min);
    cells.min(outside_distance(u, p))
}

fn complement_box_distance(u: &CellSet, b: &Aabb) -> f64 {
    let grid = u.grid();
    let cells = (0..grid.n_cells())
        .filter(|&c| !u.contains(c))
        .map(|c| grid.cell_box(c).dist(b))
        .fold(f64::INFINITY, f64::min);
    let out = if u.includes_outside() {
        f64::INFINITY
    } else {
        let w = grid.window();
        (0..b.dim())
            .map(|i| (b.lo[i] - w.lo()[i]).min(w.hi()[i] - b.hi[i]))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    };
    cells.min(out)
}

fn complement_box_distance_upper(u: &CellSet, b: &Aabb) -> f64 {
    let grid = u.grid();
    let cells = (0..grid.n_cells())
        .filter(|&c| !u.contains(c))
        .map(|c| b.farthest_dist(&grid.cell_box(c)))
        .fold(f64::INFINITY, f64::min);
    let out = if u.includes_outside() {
        f64::INFINITY
    } else {
        let w = grid.window();
        (0..b.dim())
            .map(|i| (b.hi[i] - w.lo()[i]).min(w.hi()[i] - b.lo[i]).max(0.0))
            .fold(f64::INFINITY, f64::min)
    };
    cells.min(out)
}

/// The function `½ (d(x, T) + d(x, X \ U))` for grid sets `T ⊆ U`.
///
/// Here `X \ U` is the set of window cells outside `U`, together with the
/// region beyond the window unless `U` carries the OUTSIDE marker.
pub fn eta_from_sets(u: &CellSet, t: &CellSet) -> Result<EpsFunction> {
    if !t.cells_subset(u)? {
        return Err(Error::InvalidEta("T is not contained in U".into()));
    }
    if u.is_empty() {
        return Err(Error::InvalidEta("U is empty".into()));
    }
    if u.is_full() {
        return Err(Error::InvalidEta("U is the whole grid".into()));
    }
    Ok(EpsFunction { kind: EpsKind::EtaFromSets { u: u.clone(), t: t.clone() }, dim: u.grid().dim() })
}

const MAX_SHRINK: u32 = 40;

/// Builds `δ = c·ε` with `δ < ε/2`, certified cell by cell so that
/// `ε(y) > ε(x)/2` whenever `d(y, x) < δ(x)`.
///
/// Starting from `c = 1/4`, each cell halves its own factor until
/// `c·ε_upper(cell) < ε_lower(cell)/2` and `ε_lower(cell ⊕ c·ε_upper) > ε_upper(cell)/2`;
/// the global factor is the minimum over cells, which keeps `δ` continuous.
pub fn delta_refine(eps: &EpsFunction, grid: &Grid) -> Result<EpsFunction> {
    let factors: Vec<f64> = (0..grid.n_cells())
        .into_par_iter()
        .map(|cell| {
            let b = grid.cell_box(cell);
            let (lo, hi) = eps.bounds(&b)?;
            let mut c = 0.25;
            for _ in 0..MAX_SHRINK {
                if c * hi < lo / 2.0 {
                    let (dlo, _) = eps.bounds_in(&b.inflate(c * hi), grid)?;
                    if dlo > hi / 2.0 {
                        return Ok(c);
                    }
                }
                c *= 0.5;
            }
            Err(Error::Certification(format!("cell {cell}: ε varies too fast at grid scale")))
        })
        .collect::<Result<_>>()?;
    let c = factors.into_iter().fold(0.25, f64::min);
    Ok(match eps.kind {
        EpsKind::Constant(v) => EpsFunction { kind: EpsKind::Constant(c * v), dim: eps.dim },
        _ => EpsFunction { kind: EpsKind::Scaled { base: Box::new(eps.clone()), factor: c }, dim: eps.dim },
    })
}

/// Checks the two certified properties of a `δ` returned by [`delta_refine`]
/// against `ε` on every cell.
pub fn certify_delta(eps: &EpsFunction, delta: &EpsFunction, grid: &Grid) -> Result<bool> {
    (0..grid.n_cells()).into_par_iter().try_fold(
        || true,
        |ok, cell| {
            let b = grid.cell_box(cell);
            let (elo, ehi) = eps.bounds(&b)?;
            let (_, dhi) = delta.bounds(&b)?;
            let (dilated_lo, _) = eps.bounds_in(&b.inflate(dhi), grid)?;
            Ok(ok && dhi < elo / 2.0 && dilated_lo > ehi / 2.0)
        },
    ).try_reduce(|| true, |a, b| Ok(a && b))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::space::Window;

    fn grid1(lo: f64, hi: f64, n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(Window::new(vec![lo], vec![hi]).unwrap(), n).unwrap())
    }

    #[test]
    fn constant_bounds() {
        let e = EpsFunction::constant(2, 0.05).unwrap();
        assert_eq!(e.bounds(&Aabb::new(&[0.0, 0.0], &[3.0, 1.0])).unwrap(), (0.05, 0.05));
        assert!(EpsFunction::constant(1, 0.0).is_err());
    }

    #[test]
    fn expression_bounds_by_interval() {
        let e = EpsFunction::expression("0.01*(1+x*x)", 1, None).unwrap();
        let (lo, hi) = e.bounds(&Aabb::new(&[1.0], &[2.0])).unwrap();
        assert!((lo - 0.02).abs() < 1e-15, "{lo}");
        assert!((hi - 0.05).abs() < 1e-15, "{hi}");
    }

    #[test]
    fn vanishing_expression_rejected() {
        let e = EpsFunction::expression("x1*x1", 1, None).unwrap();
        assert!(matches!(e.bounds(&Aabb::new(&[-0.1], &[0.1])), Err(Error::EpsNotPositive(_))));
    }

    #[test]
    fn radial_bounds() {
        let e = EpsFunction::radial(vec![0.0, 0.0], vec![0.1, 0.05]).unwrap();
        let (lo, hi) = e.bounds(&Aabb::new(&[3.0, 4.0], &[3.0, 4.0])).unwrap();
        assert!((lo - 0.35).abs() < 1e-12 && (hi - 0.35).abs() < 1e-12);
    }

    #[test]
    fn eta_point_value() {
        // window [0,1], U covers [0,0.5], T covers [0,0.25]
        let g = grid1(0.0, 1.0, 8);
        let u = CellSet::from_cells(&g, 0..4);
        let t = CellSet::from_cells(&g, 0..2);
        let eta = eta_from_sets(&u, &t).unwrap();
        assert!((eta.eval(&[0.4]) - 0.125).abs() < 1e-12);
        let (lo, hi) = eta.bounds(&Aabb::point(&[0.4])).unwrap();
        assert!((lo - 0.125).abs() < 1e-12 && (hi - 0.125).abs() < 1e-12);
    }

    #[test]
    fn eta_outside_t() {
        // window [0,2]: U covers [0,1], T covers [0.25,0.5]
        let g = grid1(0.0, 2.0, 8);
        let u = CellSet::from_cells(&g, 0..4);
        let t = CellSet::from_cells(&g, [1]);
        let eta = eta_from_sets(&u, &t).unwrap();
        assert!((eta.eval(&[0.75]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn eta_with_t_equal_u() {
        let g = grid1(0.0, 2.0, 8);
        let u = CellSet::from_cells(&g, 2..6);
        let eta = eta_from_sets(&u, &u).unwrap();
        for x in [0.6, 0.8, 1.0, 1.3] {
            assert!((eta.eval(&[x]) - 0.5 * complement_distance(&u, &[x])).abs() < 1e-15);
        }
    }

    #[test]
    fn eta_errors() {
        let g = grid1(0.0, 1.0, 8);
        let u = CellSet::from_cells(&g, 0..4);
        let t = CellSet::from_cells(&g, 3..6);
        assert!(matches!(eta_from_sets(&u, &t), Err(Error::InvalidEta(_))));
        assert!(eta_from_sets(&CellSet::empty(&g), &CellSet::empty(&g)).is_err());
        assert!(eta_from_sets(&CellSet::full(&g), &u).is_err());
    }

    #[test]
    fn delta_of_constant() {
        let g = grid1(0.0, 1.0, 8);
        let e = EpsFunction::constant(1, 0.1).unwrap();
        let d = delta_refine(&e, &g).unwrap();
        assert!(matches!(d.kind, EpsKind::Constant(v) if (v - 0.025).abs() < 1e-15));
        assert!(certify_delta(&e, &d, &g).unwrap());
    }

    #[test]
    fn delta_of_lipschitz_expression() {
        let g = grid1(0.0, 1.0, 16);
        let e = EpsFunction::expression("0.01+0.01*|x|", 1, Some(0.01)).unwrap();
        let d = delta_refine(&e, &g).unwrap();
        // ε is 0.01-Lipschitz with ε >= 0.01, so the first factor certifies
        assert!(matches!(d.kind, EpsKind::Scaled { factor, .. } if factor == 0.25));
        assert!(certify_delta(&e, &d, &g).unwrap());
    }

    #[test]
    fn delta_of_vanishing_eps_fails() {
        let g = grid1(-1.0, 1.0, 8);
        let e = EpsFunction::expression("x*x", 1, None).unwrap();
        assert!(delta_refine(&e, &g).is_err());
    }
}
