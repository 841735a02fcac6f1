//! Subcommand drivers: compute, then write every output single-threaded.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::attractor::{attractor_of, basin_of, trapping_candidates, verify_trapping, AttractorRecord, TrapStatus};
use crate::cellset::CellSet;
use crate::chaingraph::{build_chain_graph, cr_approx, find_chain, ApproxMode, ChainSpec, CrApprox, CrMeta, WitnessChain};
use crate::config::{build_eps, build_semigroup, region_cells, RunConfig, System};
use crate::conley::{
    check_conjugacy, check_invariance, conley_complement, ConjugacyParams, ConleyReport, GriddedSystem,
    InvarianceReport, Unresolved, Verdict,
};
use crate::error::{Error, Result};
use crate::io::{write_json, write_pgm};
use crate::semigroup::GeneratorMap;
use crate::space::{Grid, Window};

/// Runs `f` on a dedicated pool of `n` threads, or on the global pool.
pub fn with_workers<T: Send>(n: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match n {
        None => Ok(f()),
        Some(0) => Err(Error::config("workers", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("workers", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Per-phase wall times, written to `timing.json` (the only output that
/// differs between identical runs).
#[derive(Default, Serialize)]
struct Timing {
    phases: Vec<(String, f64)>,
}

impl Timing {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f()?;
        let s = t.elapsed().as_secs_f64();
        log::info!("{name}: {s:.2}s");
        self.phases.push((name.to_string(), s));
        Ok(r)
    }

    fn write(&self, out: &Path, hash: &str) -> Result<()> {
        write_json(&out.join("timing.json"), hash, self)
    }
}

struct Ctx {
    cfg: RunConfig,
    sys: System,
    hash: String,
    out: PathBuf,
    timing: Timing,
}

impl Ctx {
    fn new(cfg: &RunConfig, out: &Path) -> Result<Self> {
        let sys = cfg.build()?;
        std::fs::create_dir_all(out)?;
        Ok(Ctx { cfg: cfg.clone(), sys, hash: cfg.hash(), out: out.to_path_buf(), timing: Timing::default() })
    }

    fn cr(&mut self, mode: ApproxMode) -> Result<CrApprox> {
        let (sys, cfg) = (&self.sys, &self.cfg);
        self.timing.time(&format!("cr_{mode}"), || {
            cr_approx(&sys.grid, &sys.sg, &sys.eps, &sys.g_list, cfg.connector_max_len, mode, cfg.enclosure, &cfg.budget)
        })
    }

    fn set_file(&self, file: &str, set: &CellSet) -> Result<()> {
        write_json(&self.out.join(file), &self.hash, &SetDoc { set })
    }

    fn pgm(&self, file: &str, set: &CellSet) -> Result<()> {
        write_pgm(&self.out.join(file), set, &self.hash).map(|_| ())
    }

    fn finish(self) -> Result<()> {
        self.timing.write(&self.out, &self.hash)
    }
}

#[derive(Serialize)]
struct SetDoc<'a> {
    set: &'a CellSet,
}

#[derive(Serialize)]
struct CrDoc<'a> {
    mode: ApproxMode,
    set: &'a CellSet,
    /// Cells whose status depends on orbits leaving the window.
    unknown: &'a CellSet,
}

#[derive(Serialize)]
struct MetaDoc<'a> {
    name: &'a str,
    grid: &'a Grid,
    cell_diam: f64,
    outer: Option<&'a CrMeta>,
    inner: Option<&'a CrMeta>,
}

/// Outer and/or inner approximations of the chain recurrent set.
#[derive(Clone, Debug)]
pub struct CrRun {
    pub outer: Option<CrApprox>,
    pub inner: Option<CrApprox>,
}

fn write_cr(ctx: &Ctx, run: &CrRun) -> Result<()> {
    for (file, approx) in [("cr_outer.json", &run.outer), ("cr_inner.json", &run.inner)] {
        if let Some(a) = approx {
            write_json(&ctx.out.join(file), &ctx.hash, &CrDoc { mode: a.meta.mode, set: &a.cells, unknown: &a.unknown })?;
        }
    }
    if let Some(a) = run.outer.as_ref().or(run.inner.as_ref()) {
        ctx.pgm("cr.pgm", &a.cells)?;
    }
    if let (Some(_), Some(i)) = (&run.outer, &run.inner) {
        ctx.pgm("cr_inner.pgm", &i.cells)?;
    }
    let meta = MetaDoc {
        name: &ctx.cfg.name,
        grid: &ctx.sys.grid,
        cell_diam: ctx.sys.grid.cell_diam(),
        outer: run.outer.as_ref().map(|a| &a.meta),
        inner: run.inner.as_ref().map(|a| &a.meta),
    };
    write_json(&ctx.out.join("meta.json"), &ctx.hash, &meta)
}

/// Writes `cr_outer.json`, `cr_inner.json` (as selected by the mode),
/// `cr.pgm`, `meta.json` and `timing.json`.
pub fn run_cr(cfg: &RunConfig, out: &Path) -> Result<CrRun> {
    let mut ctx = Ctx::new(cfg, out)?;
    let mut run = CrRun { outer: None, inner: None };
    for mode in cfg.mode.modes() {
        let a = ctx.cr(mode)?;
        match mode {
            ApproxMode::Outer => run.outer = Some(a),
            ApproxMode::Inner => run.inner = Some(a),
        }
    }
    write_cr(&ctx, &run)?;
    ctx.finish()?;
    Ok(run)
}

/// A region that did not verify, kept for the report.
#[derive(Clone, Debug, Serialize)]
pub struct RegionOutcome {
    pub name: String,
    pub status: TrapStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug)]
pub struct AttractorRun {
    pub records: Vec<AttractorRecord>,
    /// Given regions that came out REFUTED or UNKNOWN.
    pub unverified: Vec<RegionOutcome>,
    pub truncated: bool,
}

impl AttractorRun {
    pub fn unknown_regions(&self) -> usize {
        self.unverified.iter().filter(|r| r.status == TrapStatus::Unknown).count()
    }
}

#[derive(Serialize)]
struct AttractorsDoc<'a> {
    records: &'a [AttractorRecord],
    unverified: &'a [RegionOutcome],
    candidates_truncated: bool,
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn compute_attractors(ctx: &mut Ctx) -> Result<AttractorRun> {
    let a = ctx
        .cfg
        .attractors
        .clone()
        .ok_or_else(|| Error::config("attractors", "this subcommand needs an `attractors` section"))?;
    let (sys, cfg) = (&ctx.sys, &ctx.cfg);
    let sg = &sys.sg;
    let pivots: Vec<usize> = a.pivots.iter().map(|p| sg.index_of(p).expect("validated")).collect();
    let mut named = Vec::new();
    let mut unverified = Vec::new();
    let mut truncated = false;
    if a.regions.is_empty() {
        let search = a.search.clone().expect("validated");
        let h_list = a.h_list.iter().map(|h| sg.word_from_names(h)).collect::<Result<Vec<_>>>()?;
        let found = ctx.timing.time("trapping_candidates", || {
            trapping_candidates(
                &sys.grid,
                sg,
                &h_list,
                a.trap_connector_max_len,
                search.max_candidates,
                search.allow_unbounded,
                cfg.enclosure,
                &cfg.budget,
            )
        })?;
        truncated = found.truncated;
        for (i, r) in found.regions.into_iter().enumerate() {
            named.push((format!("candidate_{i}"), r));
        }
    } else {
        for r in &a.regions {
            let u = region_cells(&sys.grid, r)?;
            let h = sg.word_from_names(&r.h)?;
            let region = ctx.timing.time(&format!("verify_{}", r.name), || {
                verify_trapping(&u, &h, sg, a.trap_connector_max_len, cfg.enclosure, &cfg.budget)
            })?;
            log::info!("region {}: {:?}", r.name, region.status);
            if region.is_verified() {
                named.push((r.name.clone(), region));
            } else {
                unverified.push(RegionOutcome { name: r.name.clone(), status: region.status, note: region.note.clone() });
            }
        }
    }
    let mut records = Vec::new();
    for (name, region) in named {
        let att = ctx.timing.time(&format!("attractor_{name}"), || {
            attractor_of(&region, sg, &pivots, a.depth, a.word_slack, cfg.enclosure, &cfg.budget)
        })?;
        let basin =
            ctx.timing.time(&format!("basin_{name}"), || basin_of(&region, sg, a.basin_word_len, cfg.enclosure))?;
        records.push(AttractorRecord {
            name: Some(name),
            region,
            pivots: pivots.clone(),
            depth: a.depth,
            a: att,
            basin,
            basin_word_len: a.basin_word_len,
        });
    }
    Ok(AttractorRun { records, unverified, truncated })
}

fn write_attractors(ctx: &Ctx, run: &AttractorRun) -> Result<()> {
    let doc = AttractorsDoc { records: &run.records, unverified: &run.unverified, candidates_truncated: run.truncated };
    write_json(&ctx.out.join("attractors.json"), &ctx.hash, &doc)?;
    for r in &run.records {
        let stem = file_stem(r.name.as_deref().unwrap_or("region"));
        ctx.pgm(&format!("{stem}_U.pgm"), &r.region.u)?;
        ctx.pgm(&format!("{stem}_A.pgm"), &r.a)?;
        ctx.pgm(&format!("{stem}_basin.pgm"), &r.basin)?;
    }
    Ok(())
}

/// Verifies the given regions (or searches for some), then computes the
/// attractor and basin of each verified one. Writes `attractors.json` and
/// per-region `U`, `A` and basin rasters.
pub fn run_attractors(cfg: &RunConfig, out: &Path) -> Result<AttractorRun> {
    let mut ctx = Ctx::new(cfg, out)?;
    let run = compute_attractors(&mut ctx)?;
    write_attractors(&ctx, &run)?;
    ctx.finish()?;
    Ok(run)
}

/// Test hooks for the Conley run.
#[derive(Clone, Copy, Debug, Default)]
pub struct ConleyOptions {
    /// Enlarges the first record's attractor into the interior of its basin
    /// (`A ← A ∪ erode(basin, 2)`), which must produce a VIOLATION.
    pub corrupt_record: bool,
}

#[derive(Serialize)]
struct ConleyFiles {
    cr_outer: &'static str,
    cr_inner: &'static str,
    attractors: &'static str,
    union_bminus_a: &'static str,
    symmetric_difference: &'static str,
    inner_violations: &'static str,
    outer_violations: &'static str,
}

#[derive(Serialize)]
struct ConleyCounts {
    cr_outer: usize,
    cr_inner: usize,
    union_bminus_a: usize,
    symmetric_difference: usize,
    inner_violations: usize,
    outer_violations: usize,
    escape_unknown: usize,
}

#[derive(Serialize)]
struct ConleyParams<'a> {
    smallest_eps: f64,
    eps_list: &'a [String],
    g_list: &'a [Vec<String>],
    connector_max_len: usize,
    depth: usize,
    pivots: &'a [String],
    basin_word_len: usize,
    records: usize,
    unknown_regions: usize,
    corrupted: bool,
}

#[derive(Serialize)]
struct ConleyDoc<'a> {
    verdict: Verdict,
    band_width_cells: usize,
    required_band: Option<usize>,
    counts: ConleyCounts,
    files: ConleyFiles,
    parameters: ConleyParams<'a>,
    notes: &'a [String],
}

#[derive(Clone, Debug)]
pub struct ConleyRun {
    pub report: ConleyReport,
    pub attractors: AttractorRun,
    pub cr: CrRun,
}

impl ConleyRun {
    pub fn verdict(&self) -> Verdict {
        self.report.verdict
    }
}

/// Full pipeline: both CR approximations, attractors and basins, and the
/// complement check. `conley_report.json` refers to the set files by name.
pub fn run_conley(cfg: &RunConfig, out: &Path, opts: ConleyOptions) -> Result<ConleyRun> {
    let mut ctx = Ctx::new(cfg, out)?;
    let a = cfg.attractors.clone().ok_or_else(|| Error::config("attractors", "conley needs an `attractors` section"))?;
    let outer = ctx.cr(ApproxMode::Outer)?;
    let inner = ctx.cr(ApproxMode::Inner)?;
    let mut att = compute_attractors(&mut ctx)?;
    if opts.corrupt_record {
        if let Some(r) = att.records.first_mut() {
            r.a = r.a.union(&r.basin.erode(2))?.with_outside(false);
        }
    }
    let unresolved = Unresolved { escape_unknown: Some(outer.unknown.clone()), unknown_regions: att.unknown_regions() };
    let mut report = ctx.timing.time("conley_complement", || {
        conley_complement(&att.records, &outer.cells, &inner.cells, &unresolved, a.band)
    })?;
    report.notes.push(format!(
        "evidence at the smallest tested eps ({}), not a limit statement",
        outer.meta.smallest_eps
    ));
    let cr = CrRun { outer: Some(outer), inner: Some(inner) };
    write_cr(&ctx, &cr)?;
    write_attractors(&ctx, &att)?;
    let files = ConleyFiles {
        cr_outer: "cr_outer.json",
        cr_inner: "cr_inner.json",
        attractors: "attractors.json",
        union_bminus_a: "union_bminus_a.json",
        symmetric_difference: "symmetric_difference.json",
        inner_violations: "inner_violations.json",
        outer_violations: "outer_violations.json",
    };
    ctx.set_file(files.union_bminus_a, &report.union_bminus_a)?;
    ctx.set_file(files.symmetric_difference, &report.symmetric_difference)?;
    ctx.set_file(files.inner_violations, &report.inner_violations)?;
    ctx.set_file(files.outer_violations, &report.outer_violations)?;
    ctx.pgm("union_bminus_a.pgm", &report.union_bminus_a)?;
    let meta = &cr.outer.as_ref().expect("computed").meta;
    let doc = ConleyDoc {
        verdict: report.verdict,
        band_width_cells: report.band_width_cells,
        required_band: report.required_band,
        counts: ConleyCounts {
            cr_outer: report.cr_outer.len(),
            cr_inner: report.cr_inner.len(),
            union_bminus_a: report.union_bminus_a.len(),
            symmetric_difference: report.symmetric_difference.len(),
            inner_violations: report.inner_violations.len(),
            outer_violations: report.outer_violations.len(),
            escape_unknown: unresolved.escape_unknown.as_ref().map_or(0, CellSet::len),
        },
        files,
        parameters: ConleyParams {
            smallest_eps: meta.smallest_eps,
            eps_list: &meta.eps_list,
            g_list: &meta.g_list,
            connector_max_len: meta.connector_max_len,
            depth: a.depth,
            pivots: &a.pivots,
            basin_word_len: a.basin_word_len,
            records: att.records.len(),
            unknown_regions: unresolved.unknown_regions,
            corrupted: opts.corrupt_record,
        },
        notes: &report.notes,
    };
    write_json(&ctx.out.join("conley_report.json"), &ctx.hash, &doc)?;
    ctx.finish()?;
    Ok(ConleyRun { report, attractors: att, cr })
}

#[derive(Serialize)]
struct ChainDoc<'a> {
    found: bool,
    from: &'a [f64],
    to: &'a [f64],
    from_cell: Vec<usize>,
    to_cell: Vec<usize>,
    eps: String,
    g: Vec<String>,
    mode: ApproxMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<&'a WitnessChain>,
    #[serde(skip_serializing_if = "Option::is_none")]
    echo: Option<String>,
}

/// Searches for a chain between the cells containing `from` and `to` at the
/// configured (or smallest) ε and the configured (or first) g. Writes
/// `chain.json`; `None` means no chain exists in the graph.
pub fn run_chain(cfg: &RunConfig, out: &Path, from: &[f64], to: &[f64]) -> Result<Option<WitnessChain>> {
    let mut ctx = Ctx::new(cfg, out)?;
    let (sys, cfg) = (&ctx.sys, &ctx.cfg);
    let chain = cfg.chain.clone().unwrap_or(crate::config::ChainConfig { eps_index: None, g: None, mode: ApproxMode::Outer });
    let eps = sys.eps[chain.eps_index.unwrap_or(sys.eps.len() - 1)].clone();
    let g = match &chain.g {
        Some(names) => sys.sg.word_from_names(names)?,
        None => sys.g_list[0].clone(),
    };
    let cell = |p: &[f64], what: &str| -> Result<usize> {
        sys.grid.cell_of(p)?.ok_or_else(|| Error::config(what, format!("point {p:?} lies outside the window")))
    };
    let (a, b) = (cell(from, "from")?, cell(to, "to")?);
    let spec = ChainSpec {
        g: g.clone(),
        eps: eps.clone(),
        connector_max_len: cfg.connector_max_len,
        mode: chain.mode,
        enclosure: cfg.enclosure,
    };
    let witness = ctx.timing.time("chain", || {
        let graph = build_chain_graph(&sys.grid, &sys.sg, &spec, &cfg.budget)?;
        find_chain(&graph, &sys.sg, a, b)
    })?;
    let doc = ChainDoc {
        found: witness.is_some(),
        from,
        to,
        from_cell: sys.grid.multi(a).to_vec(),
        to_cell: sys.grid.multi(b).to_vec(),
        eps: eps.describe(),
        g: sys.sg.word_names(&g),
        mode: chain.mode,
        witness: witness.as_ref(),
        echo: witness.as_ref().map(|w| w.to_string()),
    };
    write_json(&ctx.out.join("chain.json"), &ctx.hash, &doc)?;
    ctx.finish()?;
    Ok(witness)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugacyOutcome {
    pub pass: bool,
    pub forward_misses: usize,
    pub backward_misses: usize,
    pub cr_cells: usize,
    pub target_cr_cells: usize,
    pub band: usize,
}

/// Results of the theorem checks; a refusal carries the unmet hypothesis.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyRun {
    pub regions: Vec<RegionOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariance: Option<InvarianceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariance_refused: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conjugacy: Option<ConjugacyOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conjugacy_refused: Option<String>,
    pub pass: bool,
}

/// Trapping status of every given region, invariance of the outer CR set
/// (abelian systems) and, if configured, the conjugacy comparison. Writes
/// `verify.json`.
pub fn run_verify(cfg: &RunConfig, out: &Path) -> Result<VerifyRun> {
    let mut ctx = Ctx::new(cfg, out)?;
    let mut run = VerifyRun {
        regions: Vec::new(),
        invariance: None,
        invariance_refused: None,
        conjugacy: None,
        conjugacy_refused: None,
        pass: true,
    };
    if let Some(a) = cfg.attractors.clone() {
        for r in &a.regions {
            let u = region_cells(&ctx.sys.grid, r)?;
            let h = ctx.sys.sg.word_from_names(&r.h)?;
            let region = verify_trapping(&u, &h, &ctx.sys.sg, a.trap_connector_max_len, cfg.enclosure, &cfg.budget)?;
            run.pass &= region.is_verified();
            run.regions.push(RegionOutcome { name: r.name.clone(), status: region.status, note: region.note });
        }
    }
    if ctx.sys.sg.is_abelian() {
        let cr = ctx.cr(ApproxMode::Outer)?;
        let dilation = cfg.invariance_dilation.unwrap_or(1);
        let rep = ctx.timing.time("invariance", || check_invariance(&cr.cells, &ctx.sys.sg, dilation, cfg.enclosure))?;
        run.pass &= rep.pass;
        run.invariance = Some(rep);
    } else {
        run.invariance_refused = Some("the generators are not declared abelian".into());
    }
    if let Some(c) = &cfg.conjugacy {
        let x = GriddedSystem { sg: ctx.sys.sg.clone(), grid: Arc::clone(&ctx.sys.grid), eps_list: ctx.sys.eps.clone() };
        let window = Window::new(c.window.lo.clone(), c.window.hi.clone())
            .map_err(|e| Error::config("conjugacy.window", e.to_string()))?;
        let grid = Arc::new(
            Grid::new(window.clone(), c.subdivisions.clone())
                .map_err(|e| Error::config("conjugacy.subdivisions", e.to_string()))?,
        );
        let sg = build_semigroup(&c.generators, &window, cfg.abelian, "conjugacy.generators")?;
        let eps = build_eps(c.eps_schedule.as_ref().unwrap_or(&cfg.eps_schedule), window.dim(), &window, "conjugacy.eps_schedule")?;
        let y = GriddedSystem { sg, grid, eps_list: eps };
        let rho = GeneratorMap::parse("rho", &c.rho, window.dim()).map_err(|e| Error::config("conjugacy.rho", e.to_string()))?;
        let rho_inv = GeneratorMap::parse("rho_inv", &c.rho_inv, ctx.sys.grid.dim())
            .map_err(|e| Error::config("conjugacy.rho_inv", e.to_string()))?;
        let params = ConjugacyParams {
            g_list: ctx.sys.g_list.clone(),
            connector_max_len: cfg.connector_max_len,
            enclosure: cfg.enclosure,
            band: c.band,
            samples: c.samples,
            seed: 0x5eed,
            budget: cfg.budget,
        };
        match ctx.timing.time("conjugacy", || match check_conjugacy(&x, &y, &rho, &rho_inv, &params) {
            Err(Error::Hypothesis(m)) => Ok(Err(m)),
            other => other.map(Ok),
        })? {
            Ok(rep) => {
                run.pass &= rep.pass;
                run.conjugacy = Some(ConjugacyOutcome {
                    pass: rep.pass,
                    forward_misses: rep.forward_misses,
                    backward_misses: rep.backward_misses,
                    cr_cells: rep.cr_x.len(),
                    target_cr_cells: rep.cr_y.len(),
                    band: rep.band,
                });
            }
            Err(m) => {
                run.pass = false;
                run.conjugacy_refused = Some(m);
            }
        }
    }
    write_json(&ctx.out.join("verify.json"), &ctx.hash, &run)?;
    ctx.finish()?;
    Ok(run)
}
