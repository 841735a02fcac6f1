//! Cell graphs of (ε,g)-chain steps and their recurrent cells.
//!
//! Node `n_cells` is the OUTSIDE sink. An edge `c → c'` labeled with the
//! connector `w` says that some point of `c`, moved by `g` then `w`, lands
//! within ε of some point of `c'` (outer mode), or that every such pair does
//! (inner mode).

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cellset::CellSet;
use crate::eps::EpsFunction;
use crate::error::{Error, Result};
use crate::semigroup::{enumerate_words, Enclosure, EnclosureMode, Semigroup, Word};
use crate::space::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApproxMode {
    #[default]
    Outer,
    Inner,
}

impl fmt::Display for ApproxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApproxMode::Outer => "outer",
            ApproxMode::Inner => "inner",
        })
    }
}

/// Work limits for graph construction and word enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    /// cells × connector words
    pub max_enclosures: u64,
    pub max_edges: u64,
    pub max_words: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_enclosures: 1 << 32, max_edges: 1 << 31, max_words: 1 << 20 }
    }
}

#[derive(Clone, Debug)]
pub struct ChainSpec {
    pub g: Word,
    pub eps: EpsFunction,
    pub connector_max_len: usize,
    pub mode: ApproxMode,
    pub enclosure: EnclosureMode,
}

/// Compressed adjacency over cells plus the OUTSIDE node.
#[derive(Clone, Debug)]
pub struct ChainGraph {
    grid: Arc<Grid>,
    spec: ChainSpec,
    connectors: Vec<Word>,
    offsets: Vec<u64>,
    targets: Vec<u32>,
    labels: Vec<u16>,
}

impl ChainGraph {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    /// Connector words in enumeration order (identity first).
    pub fn connectors(&self) -> &[Word] {
        &self.connectors
    }

    pub fn outside(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn node_count(&self) -> usize {
        self.grid.n_cells() + 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// `(target, connector index)` pairs sorted by target.
    pub fn successors(&self, node: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (a, b) = (self.offsets[node] as usize, self.offsets[node + 1] as usize);
        self.targets[a..b].iter().zip(&self.labels[a..b]).map(|(&t, &l)| (t as usize, l as usize))
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (s, e) = (self.offsets[a] as usize, self.offsets[a + 1] as usize);
        self.targets[s..e].binary_search(&(b as u32)).is_ok()
    }

    /// Edge set as sorted `(source, target)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.node_count()).flat_map(|a| self.successors(a).map(move |(b, _)| (a, b))).collect()
    }

    /// Text export, one `a -> b [word]` line per edge; OUTSIDE is written as `OUTSIDE`.
    pub fn write_edge_list<W: Write>(&self, sg: &Semigroup, mut out: W) -> Result<()> {
        let name = |n: usize| if n == self.outside() { "OUTSIDE".to_string() } else { n.to_string() };
        for a in 0..self.node_count() {
            for (b, l) in self.successors(a) {
                writeln!(out, "{} -> {} [{}]", name(a), name(b), sg.word_name(&self.connectors[l]))?;
            }
        }
        Ok(())
    }

    /// Binary CSR export: node count, `node count + 1` offsets, then targets,
    /// all as little-endian u64.
    pub fn write_csr<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.node_count() as u64).to_le_bytes())?;
        for &o in &self.offsets {
            out.write_all(&o.to_le_bytes())?;
        }
        for &t in &self.targets {
            out.write_all(&(t as u64).to_le_bytes())?;
        }
        Ok(())
    }
}

/// Connector words of length at most `l`, identity first.
pub fn connector_words(sg: &Semigroup, l: usize, budget: &Budget) -> Result<Vec<Word>> {
    enumerate_words(sg.gen_count(), l, None, true, budget.max_words)
}

pub fn build_chain_graph(grid: &Arc<Grid>, sg: &Semigroup, spec: &ChainSpec, budget: &Budget) -> Result<ChainGraph> {
    if grid.dim() != sg.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: sg.dim() });
    }
    if spec.eps.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: spec.eps.dim() });
    }
    if spec.g.is_identity() {
        return Err(Error::InvalidWord("the tested map g must be a nonempty word".into()));
    }
    let connectors = connector_words(sg, spec.connector_max_len, budget)?;
    if connectors.len() > u16::MAX as usize {
        return Err(Error::Budget { what: "connector words", needed: connectors.len() as u64, cap: u16::MAX as u64 });
    }
    let n = grid.n_cells();
    if n >= u32::MAX as usize {
        return Err(Error::Budget { what: "grid cells", needed: n as u64, cap: u32::MAX as u64 - 1 });
    }
    let work = n as u64 * connectors.len() as u64;
    if work > budget.max_enclosures {
        return Err(Error::Budget { what: "cell enclosures", needed: work, cap: budget.max_enclosures });
    }
    let words: Vec<Word> = connectors.iter().map(|w| spec.g.then(w)).collect();
    let window = grid.window().as_box();
    let outside = n as u32;
    let edge_count = AtomicU64::new(0);

    let per_cell: Vec<Vec<(u32, u16)>> = (0..n)
        .into_par_iter()
        .map(|c| -> Result<Vec<(u32, u16)>> {
            let cb = grid.cell_box(c);
            let mut out: Vec<(u32, u16)> = Vec::new();
            for (k, w) in words.iter().enumerate() {
                let k = k as u16;
                let e = match sg.image_enclosure(w, &cb, spec.enclosure)? {
                    Enclosure::Escaped => {
                        out.push((outside, k));
                        continue;
                    }
                    Enclosure::Box(e) => e,
                };
                if !window.contains_box(&e.bbox) {
                    out.push((outside, k));
                }
                // an image beyond the window can still lie within ε of edge cells
                let (lo, hi) = spec.eps.bounds_in(&e.bbox, grid)?;
                match spec.mode {
                    ApproxMode::Outer => grid.for_each_cell_in_ranges(&e.bbox.inflate(hi), |t, tb| {
                        if e.dist(tb) < hi {
                            out.push((t as u32, k));
                        }
                    }),
                    ApproxMode::Inner => grid.for_each_cell_in_ranges(&e.bbox.inflate(lo), |t, tb| {
                        if e.max_dist(tb) < lo {
                            out.push((t as u32, k));
                        }
                    }),
                }
            }
            // keep the earliest connector (shortest, then lexicographic) per target
            out.sort_unstable();
            out.dedup_by_key(|e| e.0);
            let total = edge_count.fetch_add(out.len() as u64, Ordering::Relaxed) + out.len() as u64;
            if total > budget.max_edges {
                return Err(Error::Budget { what: "graph edges", needed: total, cap: budget.max_edges });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let total: usize = per_cell.iter().map(Vec::len).sum();
    let mut offsets = Vec::with_capacity(n + 2);
    let mut targets = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    offsets.push(0u64);
    for edges in per_cell {
        for (t, l) in edges {
            targets.push(t);
            labels.push(l);
        }
        offsets.push(targets.len() as u64);
    }
    offsets.push(targets.len() as u64);
    Ok(ChainGraph { grid: grid.clone(), spec: spec.clone(), connectors, offsets, targets, labels })
}

/// Strongly connected components of a CSR graph (iterative Tarjan).
/// Returns the component id of every node and the number of components.
pub fn tarjan_scc(node_count: usize, offsets: &[u64], targets: &[u32]) -> (Vec<u32>, usize) {
    const UNSEEN: u32 = u32::MAX;
    let mut index = vec![UNSEEN; node_count];
    let mut low = vec![0u32; node_count];
    let mut on_stack = vec![false; node_count];
    let mut comp = vec![UNSEEN; node_count];
    let mut stack: Vec<u32> = Vec::new();
    let mut call: Vec<(u32, usize)> = Vec::new();
    let mut next_index = 0u32;
    let mut n_comp = 0usize;

    for root in 0..node_count {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root as u32, offsets[root] as usize));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root as u32);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let v = v as usize;
            let end = offsets[v + 1] as usize;
            if *pos < end {
                let w = targets[*pos] as usize;
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w as u32);
                    on_stack[w] = true;
                    call.push((w as u32, offsets[w] as usize));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                let p = parent as usize;
                low[p] = low[p].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow") as usize;
                    on_stack[w] = false;
                    comp[w] = n_comp as u32;
                    if w == v {
                        break;
                    }
                }
                n_comp += 1;
            }
        }
    }
    (comp, n_comp)
}

/// Nodes lying on a directed cycle: members of a nontrivial SCC or carrying
/// a self-loop. Index `i` answers for node `i`.
pub fn on_cycle(node_count: usize, offsets: &[u64], targets: &[u32]) -> Vec<bool> {
    let (comp, n_comp) = tarjan_scc(node_count, offsets, targets);
    let mut size = vec![0usize; n_comp];
    for &c in &comp {
        size[c as usize] += 1;
    }
    (0..node_count)
        .map(|v| {
            size[comp[v] as usize] >= 2
                || targets[offsets[v] as usize..offsets[v + 1] as usize].contains(&(v as u32))
        })
        .collect()
}

/// Cells lying on some directed cycle; OUTSIDE never included.
pub fn chain_recurrent_cells(graph: &ChainGraph) -> CellSet {
    let flags = on_cycle(graph.node_count(), &graph.offsets, &graph.targets);
    CellSet::from_predicate(&graph.grid, |c| flags[c])
}

/// Cells from which OUTSIDE is reachable.
pub fn reaches_outside(graph: &ChainGraph) -> CellSet {
    let n = graph.node_count();
    let mut rev_off = vec![0usize; n + 1];
    for &t in &graph.targets {
        rev_off[t as usize + 1] += 1;
    }
    for i in 0..n {
        rev_off[i + 1] += rev_off[i];
    }
    let mut fill = rev_off.clone();
    let mut rev = vec![0u32; graph.targets.len()];
    for a in 0..n {
        for (b, _) in graph.successors(a) {
            rev[fill[b]] = a as u32;
            fill[b] += 1;
        }
    }
    let mut seen = vec![false; n];
    let out = graph.outside();
    seen[out] = true;
    let mut queue = VecDeque::from([out]);
    while let Some(v) = queue.pop_front() {
        for &u in &rev[rev_off[v]..rev_off[v + 1]] {
            if !seen[u as usize] {
                seen[u as usize] = true;
                queue.push_back(u as usize);
            }
        }
    }
    CellSet::from_predicate(&graph.grid, |c| seen[c])
}

/// Per-stage summary recorded in [`CrMeta`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageInfo {
    pub eps: String,
    pub g: Vec<String>,
    pub edges: usize,
    pub recurrent_cells: usize,
    pub unknown_cells: usize,
}

/// Record of how the quantifiers over ε and g were truncated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrMeta {
    pub mode: ApproxMode,
    pub enclosure: EnclosureMode,
    pub connector_max_len: usize,
    pub connector_words: Vec<Vec<String>>,
    pub eps_list: Vec<String>,
    pub g_list: Vec<Vec<String>>,
    /// Smallest lower bound of any listed ε over the window.
    pub smallest_eps: f64,
    pub stages: Vec<StageInfo>,
}

#[derive(Clone, Debug)]
pub struct CrApprox {
    pub cells: CellSet,
    /// Cells recurrent-or-escaping in every stage but not recurrent in all
    /// of them: their status hinges on the window truncation.
    pub unknown: CellSet,
    pub meta: CrMeta,
}

/// Intersection over `eps_list × g_list` of the recurrent cells.
#[allow(clippy::too_many_arguments)]
pub fn cr_approx(
    grid: &Arc<Grid>,
    sg: &Semigroup,
    eps_list: &[EpsFunction],
    g_list: &[Word],
    l: usize,
    mode: ApproxMode,
    enclosure: EnclosureMode,
    budget: &Budget,
) -> Result<CrApprox> {
    if eps_list.is_empty() || g_list.is_empty() {
        return Err(Error::InvalidWord("eps_list and g_list must be nonempty".into()));
    }
    let mut cells = CellSet::full(grid);
    let mut maybe = CellSet::full(grid);
    let mut stages = Vec::new();
    let mut smallest = f64::INFINITY;
    for eps in eps_list {
        let (lo, _) = eps.bounds(&grid.window().as_box())?;
        smallest = smallest.min(lo);
        for g in g_list {
            let spec = ChainSpec { g: g.clone(), eps: eps.clone(), connector_max_len: l, mode, enclosure };
            let graph = build_chain_graph(grid, sg, &spec, budget)?;
            let rec = chain_recurrent_cells(&graph);
            let unk = reaches_outside(&graph).difference(&rec)?;
            log::debug!(
                "stage eps={} g={}: {} edges, {} recurrent, {} unknown",
                eps.describe(),
                sg.word_name(g),
                graph.edge_count(),
                rec.len(),
                unk.len()
            );
            stages.push(StageInfo {
                eps: eps.describe(),
                g: sg.word_names(g),
                edges: graph.edge_count(),
                recurrent_cells: rec.len(),
                unknown_cells: unk.len(),
            });
            maybe = maybe.intersection(&rec.union(&unk)?)?;
            cells = cells.intersection(&rec)?;
        }
    }
    let unknown = maybe.difference(&cells)?;
    let meta = CrMeta {
        mode,
        enclosure,
        connector_max_len: l,
        connector_words: connector_words(sg, l, budget)?.iter().map(|w| sg.word_names(w)).collect(),
        eps_list: eps_list.iter().map(|e| e.describe()).collect(),
        g_list: g_list.iter().map(|g| sg.word_names(g)).collect(),
        smallest_eps: smallest,
        stages,
    };
    Ok(CrApprox { cells, unknown, meta })
}

/// A concrete chain through cell centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessChain {
    pub cells: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    pub connectors: Vec<Vec<String>>,
    /// `ε(y_i) − d(y_i, x_{i+1})` with `y_i` the image of `x_i` under `g` then `h_i`;
    /// `None` when the image escapes.
    pub slacks: Vec<Option<f64>>,
    /// Set when some slack is not positive (possible for outer-mode edges).
    pub outer_only: bool,
}

fn fmt_point(p: &[f64]) -> String {
    if p.len() == 1 {
        format!("{:.6}", p[0])
    } else {
        format!("({})", p.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", "))
    }
}

impl fmt::Display for WitnessChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pts: Vec<String> = self.points.iter().map(|p| fmt_point(p)).collect();
        let hs: Vec<String> =
            self.connectors.iter().map(|w| if w.is_empty() { "id".to_string() } else { w.join("·") }).collect();
        write!(f, "({}; {})", pts.join(", "), hs.join(", "))
    }
}

/// Shortest path `a → … → b` in the graph (a shortest cycle when `a == b`),
/// as points at cell centers with recomputed slacks. `None` when absent.
pub fn find_chain(graph: &ChainGraph, sg: &Semigroup, a: usize, b: usize) -> Result<Option<WitnessChain>> {
    let n = graph.grid.n_cells();
    if a >= n || b >= n {
        return Err(Error::InvalidGrid(format!("cell index out of range (have {n} cells)")));
    }
    const NONE: usize = usize::MAX;
    let mut parent = vec![(NONE, 0usize); n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    let mut found = false;
    for (t, l) in graph.successors(a) {
        if t < n && !seen[t] {
            seen[t] = true;
            parent[t] = (a, l);
            if t == b {
                found = true;
                break;
            }
            queue.push_back(t);
        }
    }
    while !found {
        let Some(v) = queue.pop_front() else { break };
        for (t, l) in graph.successors(v) {
            if t < n && !seen[t] {
                seen[t] = true;
                parent[t] = (v, l);
                if t == b {
                    found = true;
                    break;
                }
                queue.push_back(t);
            }
        }
    }
    if !found {
        return Ok(None);
    }
    let mut path = vec![b];
    let mut labels = Vec::new();
    let mut cur = b;
    loop {
        let (p, l) = parent[cur];
        labels.push(l);
        path.push(p);
        if p == a {
            break;
        }
        cur = p;
    }
    path.reverse();
    labels.reverse();

    let grid = &graph.grid;
    let eps = &graph.spec.eps;
    let points: Vec<Vec<f64>> = path.iter().map(|&c| grid.cell_center(c).to_vec()).collect();
    let mut slacks = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        let w = graph.spec.g.then(&graph.connectors[l]);
        slacks.push(sg.try_eval(&w, &points[i]).map(|y| {
            let d = y.iter().zip(&points[i + 1]).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
            eps.eval(&y) - d
        }));
    }
    let outer_only = slacks.iter().any(|s| !matches!(s, Some(v) if *v > 0.0));
    Ok(Some(WitnessChain {
        cells: path,
        points,
        connectors: labels.iter().map(|&l| sg.word_names(&graph.connectors[l])).collect(),
        slacks,
        outer_only,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::GeneratorMap;
    use crate::space::{Aabb, Window};

    fn halving(n: usize) -> (Arc<Grid>, Semigroup) {
        let w = Window::new(vec![-1.0], vec![1.0]).unwrap();
        let g = GeneratorMap::parse("halve", "x1/2", 1).unwrap().with_lipschitz(Some(0.5));
        (Arc::new(Grid::uniform(w.clone(), n).unwrap()), Semigroup::new(vec![g], w, false).unwrap())
    }

    fn spec(eps: f64, l: usize, mode: ApproxMode) -> ChainSpec {
        ChainSpec {
            g: Word::letter(0),
            eps: EpsFunction::constant(1, eps).unwrap(),
            connector_max_len: l,
            mode,
            enclosure: EnclosureMode::Interval,
        }
    }

    /// Relation by dense sampling: some x in c, y in c' with |x/2 - y| < eps.
    fn sampled_relation(grid: &Grid, eps: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..grid.n_cells() {
            let ab = grid.cell_box(a);
            for b in 0..grid.n_cells() {
                let bb = grid.cell_box(b);
                let mut best = f64::INFINITY;
                for i in 0..=200 {
                    let x = ab.lo[0] + (ab.hi[0] - ab.lo[0]) * i as f64 / 200.0;
                    for j in 0..=200 {
                        let y = bb.lo[0] + (bb.hi[0] - bb.lo[0]) * j as f64 / 200.0;
                        best = best.min((x / 2.0 - y).abs());
                    }
                }
                if best < eps {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Every node with a path back to itself, by DFS from each node.
    fn brute_cycles(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
        (0..n)
            .filter(|&s| {
                let mut seen = vec![false; n];
                let mut stack: Vec<usize> = edges.iter().filter(|e| e.0 == s).map(|e| e.1).collect();
                while let Some(v) = stack.pop() {
                    if v == s {
                        return true;
                    }
                    if v < n && !seen[v] {
                        seen[v] = true;
                        stack.extend(edges.iter().filter(|e| e.0 == v).map(|e| e.1));
                    }
                }
                false
            })
            .collect()
    }

    #[test]
    fn halving_graph_matches_sampled_relation() {
        let (grid, sg) = halving(8);
        let g = build_chain_graph(&grid, &sg, &spec(0.3, 0, ApproxMode::Outer), &Budget::default()).unwrap();
        assert_eq!(g.edges(), sampled_relation(&grid, 0.3));
        // top cell [0.75,1] maps onto [0.375,0.5]
        let succ: Vec<usize> = g.successors(7).map(|s| s.0).collect();
        assert_eq!(succ, vec![4, 5, 6, 7]);
        let rec = chain_recurrent_cells(&g);
        assert_eq!(rec.cells(), brute_cycles(8, &g.edges()));
    }

    #[test]
    fn huge_eps_gives_complete_graph() {
        let (grid, sg) = halving(6);
        let g = build_chain_graph(&grid, &sg, &spec(10.0, 1, ApproxMode::Outer), &Budget::default()).unwrap();
        for a in 0..6 {
            assert_eq!(g.successors(a).map(|s| s.0).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
        }
        assert_eq!(chain_recurrent_cells(&g).len(), 6);
    }

    #[test]
    fn dag_has_no_recurrent_nodes() {
        let offsets = [0u64, 2, 3, 3, 3];
        let targets = [1u32, 2, 3];
        assert!(on_cycle(4, &offsets, &targets).iter().all(|&f| !f));
        let offsets = [0u64, 1, 2, 3];
        let targets = [1u32, 0, 2];
        assert_eq!(on_cycle(3, &offsets, &targets), vec![true, true, true]);
    }

    #[test]
    fn shrinking_eps_isolates_the_fixed_point() {
        let (grid, sg) = halving(64);
        let eps: Vec<EpsFunction> = [0.1, 0.03, 0.01].iter().map(|&e| EpsFunction::constant(1, e).unwrap()).collect();
        let cr = cr_approx(
            &grid,
            &sg,
            &eps,
            &[Word::letter(0)],
            1,
            ApproxMode::Outer,
            EnclosureMode::Interval,
            &Budget::default(),
        )
        .unwrap();
        // zero sits on the boundary between cells 31 and 32
        let cells = cr.cells.cells();
        assert!(cells.contains(&31) && cells.contains(&32));
        assert!(cells.iter().all(|&c| (29..=34).contains(&c)), "{cells:?}");
        assert!(cr.unknown.is_empty());
        assert_eq!(cr.meta.smallest_eps, 0.01);
        assert_eq!(cr.meta.stages.len(), 3);
    }

    #[test]
    fn inner_edges_are_outer_edges() {
        let (grid, sg) = halving(16);
        for eps in [0.05, 0.2, 0.6] {
            let outer = build_chain_graph(&grid, &sg, &spec(eps, 2, ApproxMode::Outer), &Budget::default()).unwrap();
            let inner = build_chain_graph(&grid, &sg, &spec(eps, 2, ApproxMode::Inner), &Budget::default()).unwrap();
            let o = outer.edges();
            assert!(inner.edges().iter().all(|e| o.binary_search(e).is_ok()));
        }
    }

    #[test]
    fn self_loop_witness_has_length_one() {
        let (grid, sg) = halving(8);
        let g = build_chain_graph(&grid, &sg, &spec(0.3, 0, ApproxMode::Outer), &Budget::default()).unwrap();
        let w = find_chain(&g, &sg, 4, 4).unwrap().unwrap();
        assert_eq!(w.cells, vec![4, 4]);
        assert_eq!(w.connectors, vec![Vec::<String>::new()]);
        assert!(!w.outer_only);
        assert!(w.to_string().starts_with("(0.125000, 0.125000; id)"));
    }

    #[test]
    fn missing_path_is_absent() {
        let (grid, sg) = halving(16);
        let g = build_chain_graph(&grid, &sg, &spec(0.01, 0, ApproxMode::Outer), &Budget::default()).unwrap();
        // from the center nothing climbs back out to the edge
        assert!(find_chain(&g, &sg, 8, 15).unwrap().is_none());
        assert!(find_chain(&g, &sg, 15, 8).unwrap().is_some());
    }

    #[test]
    fn image_beyond_the_window_still_links_nearby_cells() {
        // x ↦ x + 1.2 sends [0.75, 1] to [1.95, 2.2], outside [-1, 1] but
        // within 1.0 of the last cell
        let w = Window::new(vec![-1.0], vec![1.0]).unwrap();
        let grid = Arc::new(Grid::uniform(w.clone(), 8).unwrap());
        let sg = Semigroup::new(vec![GeneratorMap::parse("s", "x + 1.2", 1).unwrap()], w, false).unwrap();
        let g = build_chain_graph(&grid, &sg, &spec(1.0, 0, ApproxMode::Outer), &Budget::default()).unwrap();
        assert!(g.has_edge(7, 7));
        assert!(g.has_edge(7, grid.n_cells()));
        assert!(!g.has_edge(7, 6));
    }

    #[test]
    fn escaping_images_reach_outside() {
        let w = Window::new(vec![-1.0], vec![1.0]).unwrap();
        let g = GeneratorMap::parse("dbl", "2*x1", 1).unwrap();
        let sg = Semigroup::new(vec![g], w.clone(), false).unwrap();
        let grid = Arc::new(Grid::uniform(w, 8).unwrap());
        let graph = build_chain_graph(&grid, &sg, &spec(0.05, 0, ApproxMode::Outer), &Budget::default()).unwrap();
        let out = reaches_outside(&graph);
        assert!(out.contains(0) && out.contains(7));
        assert_eq!(graph.successors(graph.outside()).count(), 0);
        let rec = chain_recurrent_cells(&graph);
        // cells touching the repelling point 0 or its closed neighbours
        assert_eq!(rec.cells(), vec![2, 3, 4, 5]);
        assert_eq!(rec.cells(), brute_cycles(9, &graph.edges()));
    }

    #[test]
    fn budget_is_enforced() {
        let (grid, sg) = halving(8);
        let b = Budget { max_enclosures: 10, ..Budget::default() };
        assert!(matches!(
            build_chain_graph(&grid, &sg, &spec(0.3, 2, ApproxMode::Outer), &b),
            Err(Error::Budget { needed: 24, .. })
        ));
    }

    #[test]
    fn csr_and_edge_list_export() {
        let (grid, sg) = halving(4);
        let g = build_chain_graph(&grid, &sg, &spec(0.3, 0, ApproxMode::Outer), &Budget::default()).unwrap();
        let mut buf = Vec::new();
        g.write_csr(&mut buf).unwrap();
        let words: Vec<u64> = buf.chunks(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(words[0], 5);
        assert_eq!(words.len(), 1 + 6 + g.edge_count());
        let mut txt = Vec::new();
        g.write_edge_list(&sg, &mut txt).unwrap();
        let txt = String::from_utf8(txt).unwrap();
        assert_eq!(txt.lines().count(), g.edge_count());
        assert!(txt.lines().next().unwrap().ends_with("[id]"));
    }

    #[test]
    fn enclosure_box_helpers_agree_with_grid() {
        let (grid, _) = halving(8);
        let e = Aabb::new(&[0.375], &[0.5]);
        let mut hits = Vec::new();
        grid.for_each_cell_meeting(&e, |c| hits.push(c));
        assert_eq!(hits, vec![5, 6]);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn monotone_in_eps_and_l(e1 in 0.01f64..0.5, scale in 1.0f64..3.0, l in 0usize..2) {
            let (grid, sg) = halving(12);
            let small = build_chain_graph(&grid, &sg, &spec(e1, l, ApproxMode::Outer), &Budget::default()).unwrap();
            let big = build_chain_graph(&grid, &sg, &spec(e1 * scale, l, ApproxMode::Outer), &Budget::default()).unwrap();
            let longer = build_chain_graph(&grid, &sg, &spec(e1, l + 1, ApproxMode::Outer), &Budget::default()).unwrap();
            let s = small.edges();
            let (b, lg) = (big.edges(), longer.edges());
            proptest::prop_assert!(s.iter().all(|e| b.binary_search(e).is_ok()));
            proptest::prop_assert!(s.iter().all(|e| lg.binary_search(e).is_ok()));
            let r = chain_recurrent_cells(&small);
            proptest::prop_assert!(r.is_subset(&chain_recurrent_cells(&big)).unwrap());
        }
    }
}
