//! Trapping regions, attractors and basins on the grid.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cellset::CellSet;
use crate::chaingraph::{connector_words, on_cycle, tarjan_scc, Budget};
use crate::error::{Error, Result};
use crate::semigroup::{enumerate_words, Enclosure, EnclosureMode, ImageBox, Semigroup, UnboundedFilter, Word};
use crate::space::{Aabb, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrapStatus {
    Verified,
    Refuted,
    Unknown,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrappingRegion {
    pub u: CellSet,
    pub h: Word,
    pub connector_max_len: usize,
    pub status: TrapStatus,
    /// Outer approximation of the image set `{f h(x) : x ∈ U, f ∈ Ĝ}`.
    pub tilde_outer: CellSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TrappingRegion {
    pub fn is_verified(&self) -> bool {
        self.status == TrapStatus::Verified
    }
}

/// Cells meeting the enclosures of `h` then `f` over `U`, for every `f` in
/// Ĝ with `|f| ≤ l`. OUTSIDE is flagged when an enclosure escapes or leaves
/// the window.
pub fn tilde_set(
    u: &CellSet,
    h: &Word,
    sg: &Semigroup,
    l: usize,
    enclosure: EnclosureMode,
    budget: &Budget,
) -> Result<CellSet> {
    if h.is_identity() {
        return Err(Error::InvalidWord("h must be an element of G, not the identity".into()));
    }
    let words: Vec<Word> = connector_words(sg, l, budget)?.iter().map(|f| h.then(f)).collect();
    image_union(u, &words, sg, enclosure, budget)
}

/// Union of cells meeting `w(c)` over member cells `c` and the given words,
/// for the window-clipped dynamics (OUTSIDE absorbs).
fn image_union(
    u: &CellSet,
    words: &[Word],
    sg: &Semigroup,
    enclosure: EnclosureMode,
    budget: &Budget,
) -> Result<CellSet> {
    let grid = u.grid();
    let work = u.len() as u64 * words.len() as u64;
    if work > budget.max_enclosures {
        return Err(Error::Budget { what: "cell enclosures", needed: work, cap: budget.max_enclosures });
    }
    let cells = u.cells();
    cells
        .par_iter()
        .try_fold(
            || CellSet::empty(grid),
            |mut acc, &c| -> Result<CellSet> {
                let cb = grid.cell_box(c);
                for w in words {
                    let (e, left) = sg.clipped_enclosure(w, &cb, enclosure)?;
                    if left {
                        acc.set_outside(true);
                    }
                    if let Some(e) = e {
                        meeting_cells(grid, &e, |t| acc.insert(t));
                    }
                }
                Ok(acc)
            },
        )
        .try_reduce(
            || CellSet::empty(grid),
            |mut a, b| {
                a.union_with(&b)?;
                Ok(a)
            },
        )
}

/// Calls `f` for every cell the image bound can meet.
fn meeting_cells(grid: &Grid, e: &ImageBox, mut f: impl FnMut(usize)) {
    if e.misses(&grid.window().as_box()) {
        return;
    }
    grid.for_each_cell_in_ranges(&e.bbox, |t, tb| {
        if e.meets(tb) {
            f(t)
        }
    });
}

/// Checks `cl(Ũ) ⊂ U` with the one-cell dilation standing in for closure.
/// The image set is taken over connectors of length at most `l` and then
/// closed under the generators, so VERIFIED holds for every `f ∈ Ĝ`.
///
/// REFUTED needs a sampled interior point of `U` whose image lies outside
/// the closed union of `U`'s cells; escaping orbits never count as evidence.
pub fn verify_trapping(
    u: &CellSet,
    h: &Word,
    sg: &Semigroup,
    l: usize,
    enclosure: EnclosureMode,
    budget: &Budget,
) -> Result<TrappingRegion> {
    let tilde = tilde_set(u, h, sg, l, enclosure, budget)?;
    let outside_ok = !tilde.includes_outside() || u.includes_outside();
    let bounded_ok = !u.is_empty() && tilde.dilate(1).cells_subset(u)? && outside_ok;
    // connectors longer than l must not carry Ũ out of U either
    let full = if bounded_ok { forward_closure(&tilde, sg, enclosure, budget, u)? } else { None };
    let full_ok = match &full {
        Some(f) => f.dilate(1).cells_subset(u)? && (!f.includes_outside() || u.includes_outside()),
        None => false,
    };
    let (status, note) = if full_ok {
        let note = full.as_ref().is_some_and(CellSet::includes_outside).then(|| "escape-absorbed".to_string());
        (TrapStatus::Verified, note)
    } else if let Some(msg) = refutation(u, h, sg, l, budget)? {
        (TrapStatus::Refuted, Some(msg))
    } else if !outside_ok {
        (TrapStatus::Unknown, Some("images leave the window but U is not marked unbounded".into()))
    } else if bounded_ok {
        (TrapStatus::Unknown, Some(format!("words longer than {l} connectors carry the image set out of U")))
    } else {
        (TrapStatus::Unknown, None)
    };
    Ok(TrappingRegion { u: u.clone(), h: h.clone(), connector_max_len: l, status, tilde_outer: tilde, note })
}

/// Closes `start` under single generator steps; `None` once a cell outside
/// `bound` is reached.
fn forward_closure(
    start: &CellSet,
    sg: &Semigroup,
    enclosure: EnclosureMode,
    budget: &Budget,
    bound: &CellSet,
) -> Result<Option<CellSet>> {
    let letters: Vec<Word> = (0..sg.gen_count()).map(Word::letter).collect();
    let mut closed = start.clone();
    let mut frontier = start.clone().with_outside(false);
    while !frontier.is_empty() {
        let img = image_union(&frontier, &letters, sg, enclosure, budget)?;
        if img.includes_outside() {
            closed.set_outside(true);
        }
        let fresh = img.with_outside(false).difference(&closed)?.with_outside(false);
        if !fresh.cells_subset(bound)? {
            return Ok(None);
        }
        closed.union_with(&fresh)?;
        frontier = fresh;
    }
    Ok(Some(closed))
}

fn refutation(u: &CellSet, h: &Word, sg: &Semigroup, l: usize, budget: &Budget) -> Result<Option<String>> {
    let grid = u.grid();
    let words: Vec<Word> = connector_words(sg, l, budget)?.iter().map(|f| h.then(f)).collect();
    let window = grid.window();
    let cells = u.cells();
    let found = cells.par_iter().find_map_first(|&c| {
        let cb = grid.cell_box(c);
        for x in cb.lattice(&[0.25, 0.5, 0.75]) {
            for w in &words {
                let Some(y) = sg.try_eval(w, &x) else { continue };
                let outside_u = if window.contains(&y) {
                    let Ok(Some(t)) = grid.cell_of(&y) else { continue };
                    !u.contains(t) && !touches_member(u, t, &y)
                } else {
                    !u.includes_outside()
                };
                if outside_u {
                    return Some(format!(
                        "{} maps {:?} to {:?} outside U",
                        sg.word_name(w),
                        x.as_slice(),
                        y.as_slice()
                    ));
                }
            }
        }
        None
    });
    Ok(found)
}

fn touches_member(u: &CellSet, t: usize, y: &[f64]) -> bool {
    let grid = u.grid();
    let mut hit = false;
    grid.neighbors(t, 1, |n| {
        if !hit && u.contains(n) && grid.cell_box(n).contains_point(y) {
            hit = true;
        }
    });
    hit
}

/// `⋂_{n=1..N} S_n`, where `S_n` collects the cells meeting `w(h(U))` over
/// words `w` with at least `n` letters equal to a pivot and length at most
/// `l + n`; the union is taken over pivots. `N = 0` gives the one-cell
/// dilation of the tilde set.
pub fn attractor_of(
    region: &TrappingRegion,
    sg: &Semigroup,
    pivots: &[usize],
    depth: usize,
    l: usize,
    enclosure: EnclosureMode,
    budget: &Budget,
) -> Result<CellSet> {
    if !region.is_verified() {
        return Err(Error::NotVerified(format!("status is {:?}", region.status)));
    }
    if pivots.is_empty() {
        return Err(Error::InvalidWord("at least one pivot generator is required".into()));
    }
    let grid = region.u.grid();
    if depth == 0 {
        return Ok(region.tilde_outer.dilate(1).with_outside(false));
    }
    let mut result = CellSet::empty(grid);
    for &pivot in pivots {
        let mut a = CellSet::full(grid);
        for n in 1..=depth {
            let filter = UnboundedFilter { pivot, min_count: n };
            let words: Vec<Word> = enumerate_words(sg.gen_count(), l + n, Some(filter), false, budget.max_words)?
                .iter()
                .map(|w| region.h.then(w))
                .collect();
            let s = image_union(&region.u, &words, sg, enclosure, budget)?.with_outside(false);
            a = a.intersection(&s)?;
            if a.is_empty() {
                break;
            }
        }
        result = result.union(&a)?;
    }
    Ok(result)
}

/// Cells sent into `U` by some word of length `1..=word_len`, as a backward
/// closure over single generator steps, together with `U` itself. When `U`
/// is marked unbounded, leaving the window counts as entering `U`.
pub fn basin_of(
    region: &TrappingRegion,
    sg: &Semigroup,
    word_len: usize,
    enclosure: EnclosureMode,
) -> Result<CellSet> {
    let u = &region.u;
    let grid = u.grid();
    let window = grid.window().as_box();
    // one-step successor lists per cell (cells met, and whether it leaves)
    let steps: Vec<(Vec<u32>, bool)> = (0..grid.n_cells())
        .into_par_iter()
        .map(|c| -> Result<(Vec<u32>, bool)> {
            let cb = grid.cell_box(c);
            let mut hits = Vec::new();
            let mut out = false;
            for g in 0..sg.gen_count() {
                match sg.image_enclosure(&Word::letter(g), &cb, enclosure)? {
                    Enclosure::Escaped => out = true,
                    Enclosure::Box(e) => {
                        out |= !window.contains_box(&e.bbox);
                        meeting_cells(grid, &e, |t| hits.push(t as u32));
                    }
                }
            }
            hits.sort_unstable();
            hits.dedup();
            Ok((hits, out))
        })
        .collect::<Result<_>>()?;
    let mut basin = u.clone();
    for _ in 0..word_len {
        let added: Vec<usize> = (0..grid.n_cells())
            .into_par_iter()
            .filter(|&c| {
                let (hits, out) = &steps[c];
                !basin.contains(c)
                    && ((*out && u.includes_outside()) || hits.iter().any(|&t| basin.contains(t as usize)))
            })
            .collect();
        if added.is_empty() {
            break;
        }
        for c in added {
            basin.insert(c);
        }
    }
    Ok(basin)
}

/// A verified region with its attractor and basin.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttractorRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub region: TrappingRegion,
    pub pivots: Vec<usize>,
    pub depth: usize,
    #[serde(rename = "A")]
    pub a: CellSet,
    pub basin: CellSet,
    pub basin_word_len: usize,
}

impl AttractorRecord {
    /// `A ⊆ U` and `U ⊆ basin`, as exact cell inclusions.
    pub fn check_containments(&self) -> Result<bool> {
        Ok(self.a.cells_subset(&self.region.u)? && self.region.u.cells_subset(&self.basin)?)
    }
}

/// Every cell met by a generator image of `A` lies in the one-cell dilation of `A`.
pub fn attractor_invariant(a: &CellSet, sg: &Semigroup, enclosure: EnclosureMode) -> Result<bool> {
    let dil = a.dilate(1);
    let words: Vec<Word> = (0..sg.gen_count()).map(Word::letter).collect();
    let img = image_union(a, &words, sg, enclosure, &Budget::default())?;
    img.cells_subset(&dil)
}

#[derive(Clone, Debug)]
pub struct Candidates {
    pub regions: Vec<TrappingRegion>,
    pub truncated: bool,
}

/// Searches for verified trapping regions.
///
/// For each `h`, the one-step relation `c → cells meeting f h(c)` is
/// condensed; recurrent sink components (and, when `allow_unbounded`, the
/// window edge together with OUTSIDE) seed candidates, which are dilated by
/// growing radii, closed forward to a fixpoint and verified; the first
/// verified region per seed is kept.
#[allow(clippy::too_many_arguments)]
pub fn trapping_candidates(
    grid: &Arc<Grid>,
    sg: &Semigroup,
    h_list: &[Word],
    l: usize,
    max_candidates: usize,
    allow_unbounded: bool,
    enclosure: EnclosureMode,
    budget: &Budget,
) -> Result<Candidates> {
    if h_list.is_empty() {
        return Err(Error::InvalidWord("h_list must be nonempty".into()));
    }
    let mut regions: Vec<TrappingRegion> = Vec::new();
    let mut truncated = false;
    let n = grid.n_cells();
    let max_dim = grid.subdivisions().iter().copied().max().unwrap_or(1);
    let radii: Vec<usize> = std::iter::successors(Some(0usize), |&r| {
        Some(match r {
            0..=3 => r + 1,
            _ if r.is_power_of_two() => r + r / 2,
            _ => (r / 3) * 4,
        })
    })
    .take_while(|&r| r <= max_dim)
    .collect();

    'outer: for h in h_list {
        let words: Vec<Word> = connector_words(sg, l, budget)?.iter().map(|f| h.then(f)).collect();
        let full = CellSet::full(grid);
        let rel = relation(&full, &words, sg, enclosure)?;
        let (offsets, targets) = to_csr(&rel, n);
        let (comp, n_comp) = tarjan_scc(n + 1, &offsets, &targets);
        let cyc = on_cycle(n + 1, &offsets, &targets);
        let mut is_sink = vec![true; n_comp];
        for v in 0..=n {
            for &t in &targets[offsets[v] as usize..offsets[v + 1] as usize] {
                if comp[t as usize] != comp[v] {
                    is_sink[comp[v] as usize] = false;
                }
            }
        }
        let mut seeds: Vec<CellSet> = Vec::new();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
        for c in 0..n {
            members[comp[c] as usize].push(c);
        }
        for (k, cells) in members.iter().enumerate() {
            if is_sink[k] && !cells.is_empty() && cyc[cells[0]] {
                seeds.push(CellSet::from_cells(grid, cells.iter().copied()));
            }
        }
        if allow_unbounded {
            seeds.push(CellSet::empty(grid).with_outside(true).dilate(1));
        }
        for seed in seeds {
            for &r in &radii {
                let mut u = seed.dilate(r);
                if u.is_full() {
                    break;
                }
                // forward closure U ← U ∪ dilate(Ũ, 1)
                let grown = loop {
                    let t = image_union(&u, &words, sg, enclosure, budget)?;
                    let next = u.union(&t.dilate(1))?;
                    if next == u {
                        break Some(u);
                    }
                    if next.is_full() {
                        break None;
                    }
                    u = next;
                };
                let Some(u) = grown else { continue };
                if u.includes_outside() && !allow_unbounded {
                    continue;
                }
                if regions.iter().any(|r| r.u == u && r.h == *h) {
                    continue;
                }
                let region = verify_trapping(&u, h, sg, l, enclosure, budget)?;
                if region.is_verified() {
                    if regions.len() == max_candidates {
                        truncated = true;
                        break 'outer;
                    }
                    regions.push(region);
                    // the smallest verified dilation represents this seed
                    break;
                }
            }
        }
    }
    Ok(Candidates { regions, truncated })
}

/// One-step successor lists over all cells; OUTSIDE is node `n_cells`.
fn relation(u: &CellSet, words: &[Word], sg: &Semigroup, enclosure: EnclosureMode) -> Result<Vec<Vec<u32>>> {
    let grid = u.grid();
    let n = grid.n_cells() as u32;
    (0..grid.n_cells())
        .into_par_iter()
        .map(|c| -> Result<Vec<u32>> {
            let cb: Aabb = grid.cell_box(c);
            let mut hits = Vec::new();
            for w in words {
                let (e, left) = sg.clipped_enclosure(w, &cb, enclosure)?;
                if left {
                    hits.push(n);
                }
                if let Some(e) = e {
                    meeting_cells(grid, &e, |t| hits.push(t as u32));
                }
            }
            hits.sort_unstable();
            hits.dedup();
            Ok(hits)
        })
        .collect()
}

fn to_csr(rel: &[Vec<u32>], n: usize) -> (Vec<u64>, Vec<u32>) {
    let mut offsets = Vec::with_capacity(n + 2);
    let mut targets = Vec::new();
    offsets.push(0);
    for hits in rel {
        targets.extend_from_slice(hits);
        offsets.push(targets.len() as u64);
    }
    offsets.push(targets.len() as u64);
    (offsets, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::GeneratorMap;
    use crate::space::Window;

    fn halving(n: usize) -> (Arc<Grid>, Semigroup) {
        let w = Window::new(vec![-1.0], vec![1.0]).unwrap();
        let g = GeneratorMap::parse("halve", "x1/2", 1).unwrap().with_lipschitz(Some(0.5));
        (Arc::new(Grid::uniform(w.clone(), n).unwrap()), Semigroup::new(vec![g], w, false).unwrap())
    }

    const I: EnclosureMode = EnclosureMode::Interval;

    #[test]
    fn tilde_of_full_window_under_halving() {
        let (grid, sg) = halving(8);
        let t = tilde_set(&CellSet::full(&grid), &Word::letter(0), &sg, 0, I, &Budget::default()).unwrap();
        // [-0.5, 0.5] meets cells 1..=6 (closed boxes)
        assert_eq!(t.cells(), vec![1, 2, 3, 4, 5, 6]);
        assert!(!t.includes_outside());
        let e = tilde_set(&CellSet::empty(&grid), &Word::letter(0), &sg, 0, I, &Budget::default()).unwrap();
        assert!(e.is_void());
        assert!(tilde_set(&CellSet::full(&grid), &Word::identity(), &sg, 0, I, &Budget::default()).is_err());
    }

    #[test]
    fn halving_intervals_trap() {
        let (grid, sg) = halving(16);
        let u = CellSet::from_cells(&grid, 4..12);
        let r = verify_trapping(&u, &Word::letter(0), &sg, 1, I, &Budget::default()).unwrap();
        assert_eq!(r.status, TrapStatus::Verified);
        let a = attractor_of(&r, &sg, &[0], 4, 1, I, &Budget::default()).unwrap();
        assert_eq!(a.cells(), vec![7, 8]);
        assert!(a.cells_subset(&u).unwrap());
        let b = basin_of(&r, &sg, 8, I).unwrap();
        assert!(b.is_full());
    }

    #[test]
    fn expanding_map_refutes_small_interval() {
        let w = Window::new(vec![-1.0], vec![1.0]).unwrap();
        let g = GeneratorMap::parse("dbl", "2*x1", 1).unwrap();
        let sg = Semigroup::new(vec![g], w.clone(), false).unwrap();
        let grid = Arc::new(Grid::uniform(w, 16).unwrap());
        let u = CellSet::from_cells(&grid, 6..10);
        let r = verify_trapping(&u, &Word::letter(0), &sg, 0, I, &Budget::default()).unwrap();
        assert_eq!(r.status, TrapStatus::Refuted);
        assert!(attractor_of(&r, &sg, &[0], 2, 0, I, &Budget::default()).is_err());
        let c = trapping_candidates(&grid, &sg, &[Word::letter(0)], 0, 10, false, I, &Budget::default()).unwrap();
        assert!(c.regions.is_empty());
    }

    #[test]
    fn translation_has_no_candidates() {
        let w = Window::new(vec![-1.0], vec![1.0]).unwrap();
        let g = GeneratorMap::parse("push", "2*x1 + 3", 1).unwrap();
        let sg = Semigroup::new(vec![g], w.clone(), false).unwrap();
        let grid = Arc::new(Grid::uniform(w, 10).unwrap());
        let c = trapping_candidates(&grid, &sg, &[Word::letter(0)], 1, 10, false, I, &Budget::default()).unwrap();
        assert!(c.regions.is_empty());
        assert!(!c.truncated);
    }

    #[test]
    fn full_window_region() {
        let (grid, sg) = halving(8);
        let u = CellSet::full(&grid);
        let r = verify_trapping(&u, &Word::letter(0), &sg, 0, I, &Budget::default()).unwrap();
        assert!(r.is_verified());
        assert!(basin_of(&r, &sg, 3, I).unwrap().is_full());
    }

    /// Exact trapping test on a 10-cell grid of [-5, 5] for the halving map, over all
    /// subsets: the closed images `[a/2, b/2]` of U's cells under h and the
    /// connectors, dilated by one cell, must stay inside U.
    fn brute_trapping_family(l: usize) -> Vec<Vec<usize>> {
        let n = 10usize;
        let w = 1.0;
        let lo = |c: usize| -5.0 + w * c as f64;
        let mut out = Vec::new();
        for mask in 1u32..(1 << n) - 1 {
            let u: Vec<usize> = (0..n).filter(|&c| mask >> c & 1 == 1).collect();
            let mut ok = true;
            'check: for &c in &u {
                for k in 1..=l + 1 {
                    let s = 0.5f64.powi(k as i32);
                    let (a, b) = (lo(c) * s, (lo(c) + w) * s);
                    for t in 0..n {
                        let (ta, tb) = (lo(t), lo(t) + w);
                        let meets = ta <= b && a <= tb;
                        if meets {
                            for d in t.saturating_sub(1)..=(t + 1).min(n - 1) {
                                if mask >> d & 1 == 0 {
                                    ok = false;
                                    break 'check;
                                }
                            }
                        }
                    }
                }
            }
            if ok {
                out.push(u);
            }
        }
        out
    }

    #[test]
    fn candidates_for_halving_are_brute_force_trapping_regions() {
        // unit cells on [-5, 5] keep every grid line and image endpoint exact
        let w = Window::new(vec![-5.0], vec![5.0]).unwrap();
        let g = GeneratorMap::parse("halve", "x1/2", 1).unwrap();
        let (grid, sg) = (Arc::new(Grid::uniform(w.clone(), 10).unwrap()), Semigroup::new(vec![g], w, false).unwrap());
        let family = brute_trapping_family(1);
        assert!(!family.is_empty());
        let c = trapping_candidates(&grid, &sg, &[Word::letter(0)], 1, 20, false, I, &Budget::default()).unwrap();
        assert!(!c.regions.is_empty());
        let mut prev: Option<Vec<usize>> = None;
        for r in &c.regions {
            let cells = r.u.cells();
            assert!(family.contains(&cells), "{cells:?} is not trapping");
            assert!(cells.contains(&4) && cells.contains(&5), "not around 0: {cells:?}");
            if let Some(p) = &prev {
                assert!(p.iter().all(|x| cells.contains(x)), "not nested");
            }
            prev = Some(cells);
        }
        // every region verified by the grid check is in the exact family
        for u in &family {
            let set = CellSet::from_cells(&grid, u.iter().copied());
            let r = verify_trapping(&set, &Word::letter(0), &sg, 1, I, &Budget::default()).unwrap();
            assert!(r.is_verified(), "{u:?}");
        }
    }

    #[test]
    fn short_connector_bound_does_not_verify_leaky_regions() {
        // h = constant 0.428 keeps U = its neighborhood for connectors of
        // length 0, but g = x/2 then maps 0.428 to 0.214, outside U
        let w = Window::new(vec![-1.0], vec![1.0]).unwrap();
        let grid = Arc::new(Grid::uniform(w.clone(), 16).unwrap());
        let h = GeneratorMap::parse("h", "0 * x + 0.428", 1).unwrap();
        let g = GeneratorMap::parse("g", "0.5 * x", 1).unwrap();
        let sg = Semigroup::new(vec![h, g], w, false).unwrap();
        let u = CellSet::from_cells(&grid, 10..=12);
        let r = verify_trapping(&u, &Word::letter(0), &sg, 0, I, &Budget::default()).unwrap();
        assert_eq!(r.status, TrapStatus::Unknown);
        let found = trapping_candidates(&grid, &sg, &[Word::letter(0)], 0, 4, false, I, &Budget::default()).unwrap();
        for region in &found.regions {
            for depth in 1..=3 {
                let a = attractor_of(region, &sg, &[0], depth, 1, I, &Budget::default()).unwrap();
                assert!(a.cells_subset(&region.u).unwrap());
            }
        }
    }

    #[test]
    fn candidate_cap_sets_truncation() {
        // the sink at 0 and the escape region each give one candidate
        let window = Window::new(vec![-1.5], vec![1.5]).unwrap();
        let grid = Arc::new(Grid::uniform(window.clone(), 24).unwrap());
        let f = GeneratorMap::parse("f", "x^3", 1).unwrap();
        let sg = Semigroup::new(vec![f], window, false).unwrap();
        let all = trapping_candidates(&grid, &sg, &[Word::letter(0)], 1, 8, true, I, &Budget::default()).unwrap();
        assert_eq!(all.regions.len(), 2);
        assert!(!all.truncated);
        assert!(all.regions[1].u.includes_outside());
        let c = trapping_candidates(&grid, &sg, &[Word::letter(0)], 1, 1, true, I, &Budget::default()).unwrap();
        assert_eq!(c.regions.len(), 1);
        assert!(c.truncated);
    }

    #[test]
    fn attractor_depth_is_monotone_and_invariant() {
        let (grid, sg) = halving(32);
        let u = CellSet::from_cells(&grid, 8..24);
        let r = verify_trapping(&u, &Word::letter(0), &sg, 1, I, &Budget::default()).unwrap();
        let mut prev = attractor_of(&r, &sg, &[0], 0, 1, I, &Budget::default()).unwrap();
        for n in 1..6 {
            let a = attractor_of(&r, &sg, &[0], n, 1, I, &Budget::default()).unwrap();
            assert!(a.cells_subset(&prev).unwrap(), "depth {n}");
            assert!(a.cells_subset(&u).unwrap());
            prev = a;
        }
        assert!(attractor_invariant(&prev, &sg, I).unwrap());
    }

    #[test]
    fn basin_grows_with_word_length() {
        let w = Window::new(vec![-2.0], vec![2.0]).unwrap();
        let g = GeneratorMap::parse("sq", "x1*x1", 1).unwrap();
        let sg = Semigroup::new(vec![g], w.clone(), false).unwrap();
        let grid = Arc::new(Grid::uniform(w, 40).unwrap());
        let u = CellSet::from_predicate(&grid, |c| grid.cell_box(c).max_dist_point(&[0.0]) < 0.5);
        let r = verify_trapping(&u, &Word::letter(0), &sg, 1, I, &Budget::default()).unwrap();
        assert!(r.is_verified());
        let mut prev = u.clone();
        for k in 1..6 {
            let b = basin_of(&r, &sg, k, I).unwrap();
            assert!(prev.cells_subset(&b).unwrap());
            prev = b;
        }
        // |x| < 1 is the true basin; the band near 1 is at most a few cells
        for c in prev.iter() {
            assert!(grid.cell_box(c).dist_point(&[0.0]) < 1.0 + 0.1, "cell {c}");
        }
        for c in 0..40 {
            if grid.cell_box(c).max_dist_point(&[0.0]) <= 0.9 {
                assert!(prev.contains(c));
            }
        }
    }
}
