//! Executable checks of the decomposition `X ∖ CR(G) = ⋃_A [B(A) ∖ A]` and
//! of the invariance, closedness and conjugacy statements for CR(G).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attractor::AttractorRecord;
use crate::cellset::CellSet;
use crate::chaingraph::{cr_approx, ApproxMode, Budget};
use crate::eps::EpsFunction;
use crate::error::{Error, Result};
use crate::semigroup::{Enclosure, EnclosureMode, GeneratorMap, Semigroup, Word};
use crate::space::{Grid, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Consistent,
    Violation,
    Inconclusive,
}

impl Verdict {
    /// Process exit code: 0 consistent, 2 violation, 3 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Consistent => 0,
            Verdict::Violation => 2,
            Verdict::Inconclusive => 3,
        }
    }
}

/// Inputs besides the sets themselves that can downgrade a failure to
/// INCONCLUSIVE.
#[derive(Clone, Debug, Default)]
pub struct Unresolved {
    /// Cells whose recurrence hinges on orbits leaving the window.
    pub escape_unknown: Option<CellSet>,
    /// Candidate regions that could be neither verified nor refuted.
    pub unknown_regions: usize,
}

#[derive(Clone, Debug)]
pub struct ConleyReport {
    pub cr_outer: CellSet,
    pub cr_inner: CellSet,
    pub union_bminus_a: CellSet,
    /// `complement(cr_outer) Δ ⋃(B∖A)`, cells only.
    pub symmetric_difference: CellSet,
    pub band_width_cells: usize,
    pub verdict: Verdict,
    /// Cells of `cr_inner` inside the band-eroded union.
    pub inner_violations: CellSet,
    /// Cells outside `cr_outer` and outside the band-dilated union.
    pub outer_violations: CellSet,
    /// Smallest band at which the verdict would be CONSISTENT (searched up
    /// to the largest grid dimension).
    pub required_band: Option<usize>,
    pub notes: Vec<String>,
}

fn violations(cr_outer: &CellSet, cr_inner: &CellSet, union: &CellSet, band: usize) -> Result<(CellSet, CellSet)> {
    let inner = cr_inner.intersection(&union.erode(band))?.with_outside(false);
    let outer = cr_outer.complement().difference(&union.dilate(band))?.with_outside(false);
    Ok((inner, outer))
}

pub fn conley_complement(
    records: &[AttractorRecord],
    cr_outer: &CellSet,
    cr_inner: &CellSet,
    unresolved: &Unresolved,
    band: usize,
) -> Result<ConleyReport> {
    let grid = cr_outer.grid();
    let mut union = CellSet::empty(grid);
    for r in records {
        union.union_with(&r.basin.difference(&r.a)?)?;
    }
    // cells only; a flagged basin also claims the region beyond the window
    let comp = cr_outer.complement().with_outside(false);
    let plain_union = union.clone().with_outside(false);
    let symmetric_difference = comp.difference(&plain_union)?.union(&plain_union.difference(&comp)?)?;

    let (inner_violations, outer_violations) = violations(cr_outer, cr_inner, &union, band)?;
    let mut notes = Vec::new();
    let verdict = if !inner_violations.is_empty() {
        notes.push(format!("{} inner-recurrent cells lie inside the union of B(A)∖A", inner_violations.len()));
        Verdict::Violation
    } else if !outer_violations.is_empty() {
        let all_unknown = match &unresolved.escape_unknown {
            Some(u) => outer_violations.cells_subset(u)?,
            None => false,
        };
        notes.push(format!("{} non-recurrent cells are not covered by any B(A)∖A", outer_violations.len()));
        if unresolved.unknown_regions > 0 || all_unknown {
            if unresolved.unknown_regions > 0 {
                notes.push(format!("{} trapping regions are UNKNOWN", unresolved.unknown_regions));
            }
            if all_unknown {
                notes.push("every uncovered cell has an orbit leaving the window".into());
            }
            Verdict::Inconclusive
        } else {
            Verdict::Violation
        }
    } else {
        Verdict::Consistent
    };
    let max_band = grid.subdivisions().iter().copied().max().unwrap_or(1);
    let mut required_band = None;
    for b in 0..=max_band {
        let (i, o) = violations(cr_outer, cr_inner, &union, b)?;
        if i.is_empty() && o.is_empty() {
            required_band = Some(b);
            break;
        }
    }
    Ok(ConleyReport {
        cr_outer: cr_outer.clone(),
        cr_inner: cr_inner.clone(),
        union_bminus_a: union,
        symmetric_difference,
        band_width_cells: band,
        verdict,
        inner_violations,
        outer_violations,
        required_band,
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInvariance {
    pub generator: String,
    pub fraction: f64,
    pub failing_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub dilation: usize,
    pub generators: Vec<GeneratorInvariance>,
    pub pass: bool,
}

/// For each generator, the fraction of cells of `cr` whose image meets the
/// `dilation`-cell dilation of `cr`. Refuses to run unless the semigroup
/// carries the (spot-checked) abelian flag.
pub fn check_invariance(
    cr: &CellSet,
    sg: &Semigroup,
    dilation: usize,
    enclosure: EnclosureMode,
) -> Result<InvarianceReport> {
    if !sg.is_abelian() {
        return Err(Error::Hypothesis("invariance requires a semigroup declared abelian".into()));
    }
    let grid = cr.grid();
    let target = cr.dilate(dilation);
    let mut generators = Vec::new();
    for g in 0..sg.gen_count() {
        let w = Word::letter(g);
        let mut failing = 0;
        for c in cr.iter() {
            let hit = match sg.image_enclosure(&w, &grid.cell_box(c), enclosure)? {
                Enclosure::Escaped => target.includes_outside(),
                Enclosure::Box(e) => {
                    let mut hit = target.includes_outside() && !grid.window().as_box().contains_box(&e.bbox);
                    grid.for_each_cell_in_ranges(&e.bbox, |t, tb| hit |= target.contains(t) && e.meets(tb));
                    hit
                }
            };
            if !hit {
                failing += 1;
            }
        }
        let total = cr.len();
        let fraction = if total == 0 { 1.0 } else { (total - failing) as f64 / total as f64 };
        generators.push(GeneratorInvariance { generator: sg.generators()[g].name().to_string(), fraction, failing_cells: failing });
    }
    let pass = generators.iter().all(|g| g.failing_cells == 0);
    Ok(InvarianceReport { dilation, generators, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestingReport {
    pub factor: usize,
    pub fine_cells: usize,
    pub offending_cells: usize,
    pub pass: bool,
}

/// Every fine cell of `cr_fine` must lie in the one-coarse-cell dilation of
/// `cr_coarse`, the fine grid being the coarse one refined by `factor`.
pub fn check_refinement_nesting(cr_coarse: &CellSet, cr_fine: &CellSet, factor: usize) -> Result<NestingReport> {
    let coarse = cr_coarse.grid();
    let fine = cr_fine.grid();
    if factor == 0 || **fine != coarse.refined(factor)? {
        return Err(Error::GridMismatch(format!("fine grid is not the coarse grid refined by {factor}")));
    }
    let allowed = cr_coarse.dilate(1);
    let offending = cr_fine
        .iter()
        .filter(|&c| {
            let idx: Vec<usize> = fine.multi(c).iter().map(|k| k / factor).collect();
            !allowed.contains(coarse.flat(&idx))
        })
        .count();
    Ok(NestingReport { factor, fine_cells: cr_fine.len(), offending_cells: offending, pass: offending == 0 })
}

/// A semigroup together with the grid its chain recurrent set is computed on.
#[derive(Clone, Debug)]
pub struct GriddedSystem {
    pub sg: Semigroup,
    pub grid: Arc<Grid>,
    pub eps_list: Vec<EpsFunction>,
}

#[derive(Clone, Debug)]
pub struct ConjugacyParams {
    /// Tested words, read in both systems through the generator correspondence.
    pub g_list: Vec<Word>,
    pub connector_max_len: usize,
    pub enclosure: EnclosureMode,
    pub band: usize,
    pub samples: usize,
    pub seed: u64,
    pub budget: Budget,
}

#[derive(Clone, Debug)]
pub struct ConjugacyReport {
    pub cr_x: CellSet,
    pub cr_y: CellSet,
    /// Cells of CR(G) whose center maps outside the band-dilated CR(G̃).
    pub forward_misses: usize,
    pub backward_misses: usize,
    pub band: usize,
    pub pass: bool,
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs())))
}

fn sample(grid: &Grid, rng: &mut ChaCha8Rng) -> Point {
    let w = grid.window();
    (0..grid.dim()).map(|i| rng.random_range(w.lo()[i]..w.hi()[i])).collect()
}

/// Spot-checks `ρ∘ρ⁻¹ = id`, `ρ⁻¹∘ρ = id` and `ρ∘g_i = g̃_i∘ρ`; any
/// counterexample means the conjugacy hypothesis fails.
fn spot_check(x: &GriddedSystem, y: &GriddedSystem, rho: &GeneratorMap, rho_inv: &GeneratorMap, p: &ConjugacyParams) -> Result<()> {
    if x.sg.gen_count() != y.sg.gen_count() {
        return Err(Error::Hypothesis("systems have different numbers of generators".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let finite = |v: &[f64]| v.iter().all(|t| t.is_finite());
    for _ in 0..p.samples {
        let a = sample(&x.grid, &mut rng);
        let ra = rho.eval(&a);
        if finite(&ra) && !close(&rho_inv.eval(&ra), &a) {
            return Err(Error::Hypothesis(format!("rho^-1(rho(x)) != x at {:?}", a.as_slice())));
        }
        for g in 0..x.sg.gen_count() {
            let lhs = rho.eval(&x.sg.generators()[g].eval(&a));
            let rhs = y.sg.generators()[g].eval(&ra);
            if finite(&lhs) && finite(&rhs) && !close(&lhs, &rhs) {
                return Err(Error::Hypothesis(format!(
                    "rho∘{} != {}∘rho at {:?}",
                    x.sg.generators()[g].name(),
                    y.sg.generators()[g].name(),
                    a.as_slice()
                )));
            }
        }
        let b = sample(&y.grid, &mut rng);
        let rb = rho_inv.eval(&b);
        if finite(&rb) && !close(&rho.eval(&rb), &b) {
            return Err(Error::Hypothesis(format!("rho(rho^-1(y)) != y at {:?}", b.as_slice())));
        }
    }
    Ok(())
}

fn misses(from: &CellSet, map: &GeneratorMap, to: &CellSet) -> Result<usize> {
    let mut n = 0;
    for c in from.iter() {
        let q = map.eval(&from.grid().cell_center(c));
        match to.grid().cell_of(&q)? {
            Some(t) if to.contains(t) => {}
            None if to.includes_outside() => {}
            _ => n += 1,
        }
    }
    Ok(n)
}

/// Compares `ρ(CR(G))` with `CR(G̃)` (outer approximations, cell centers
/// mapped both ways into the band-dilated other set).
pub fn check_conjugacy(
    x: &GriddedSystem,
    y: &GriddedSystem,
    rho: &GeneratorMap,
    rho_inv: &GeneratorMap,
    p: &ConjugacyParams,
) -> Result<ConjugacyReport> {
    spot_check(x, y, rho, rho_inv, p)?;
    let cr = |s: &GriddedSystem| {
        cr_approx(&s.grid, &s.sg, &s.eps_list, &p.g_list, p.connector_max_len, ApproxMode::Outer, p.enclosure, &p.budget)
            .map(|c| c.cells)
    };
    let (cr_x, cr_y) = (cr(x)?, cr(y)?);
    let forward_misses = misses(&cr_x, rho, &cr_y.dilate(p.band))?;
    let backward_misses = misses(&cr_y, rho_inv, &cr_x.dilate(p.band))?;
    Ok(ConjugacyReport {
        pass: forward_misses == 0 && backward_misses == 0,
        cr_x,
        cr_y,
        forward_misses,
        backward_misses,
        band: p.band,
    })
}
