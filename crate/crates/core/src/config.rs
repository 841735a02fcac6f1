//! Run configuration: one JSON file per run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cellset::CellSet;
use crate::chaingraph::{ApproxMode, Budget};
use crate::eps::EpsFunction;
use crate::error::{Error, Result};
use crate::semigroup::{EnclosureMode, GeneratorMap, Semigroup, Word};
use crate::space::{Grid, Window};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub name: String,
    /// Coordinate expressions separated by `;`, or `complex_pow:n`, `affine:a,b`.
    pub map: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsConfig {
    Constant(f64),
    Radial { center: Vec<f64>, coefficients: Vec<f64> },
    Expression {
        source: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    Outer,
    Inner,
    #[default]
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<ApproxMode> {
        match self {
            ModeSelection::Outer => vec![ApproxMode::Outer],
            ModeSelection::Inner => vec![ApproxMode::Inner],
            ModeSelection::Both => vec![ApproxMode::Outer, ApproxMode::Inner],
        }
    }
}

/// Region shapes, as unions of the cells that lie entirely inside the shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// `|x - center| < radius`
    Disk { center: Vec<f64>, radius: f64 },
    /// `|x - center| > radius`
    Exterior { center: Vec<f64>, radius: f64 },
    /// `inner < |x - center| < outer`
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
    /// open box `lo < x < hi`
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// explicit cell multi-indices
    Cells(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub name: String,
    pub shape: Shape,
    pub h: Vec<String>,
    /// Marks the region as containing everything beyond the window.
    #[serde(default)]
    pub unbounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSearch {
    pub max_candidates: usize,
    #[serde(default)]
    pub allow_unbounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractorConfig {
    /// Words `h` tried by the candidate search.
    pub h_list: Vec<Vec<String>>,
    /// Connector length in the trapping check `f ∈ Ĝ, |f| ≤ L`.
    pub trap_connector_max_len: usize,
    pub pivots: Vec<String>,
    pub depth: usize,
    /// Words in stage `n` have length at most `word_slack + n`.
    pub word_slack: usize,
    pub basin_word_len: usize,
    /// Given regions; when empty the candidate search runs instead.
    #[serde(default)]
    pub regions: Vec<RegionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<CandidateSearch>,
    pub band: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Index into the eps schedule; defaults to the last (smallest) entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_index: Option<usize>,
    /// Tested word; defaults to the first entry of `g_list`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<String>>,
    #[serde(default)]
    pub mode: ApproxMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugacyConfig {
    pub window: WindowConfig,
    pub subdivisions: Vec<usize>,
    /// Generators of the conjugate system, in correspondence with `generators`.
    pub generators: Vec<GeneratorConfig>,
    /// Defaults to the main schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_schedule: Option<Vec<EpsConfig>>,
    pub rho: String,
    pub rho_inv: String,
    pub band: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub window: WindowConfig,
    pub subdivisions: Vec<usize>,
    pub generators: Vec<GeneratorConfig>,
    #[serde(default)]
    pub abelian: bool,
    pub eps_schedule: Vec<EpsConfig>,
    pub g_list: Vec<Vec<String>>,
    pub connector_max_len: usize,
    #[serde(default)]
    pub enclosure: EnclosureMode,
    #[serde(default)]
    pub mode: ModeSelection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attractors: Option<AttractorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conjugacy: Option<ConjugacyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariance_dilation: Option<usize>,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl RunConfig {
    /// Parses JSON; errors name the offending field path.
    pub fn from_json(src: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(src);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the canonical JSON of everything that affects results
    /// (worker count and output directory excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        c.output_dir = None;
        let v = serde_json::to_value(&c).expect("config serializes");
        hex::encode(Sha256::digest(serde_json::to_vec(&v).expect("value serializes")))
    }

    /// The z², z³ system on `[-1.5, 1.5]²` with the disk and exterior regions.
    pub fn zn_preset(n: usize) -> Self {
        RunConfig {
            name: "zn".into(),
            window: WindowConfig { lo: vec![-1.5, -1.5], hi: vec![1.5, 1.5] },
            subdivisions: vec![n, n],
            generators: vec![
                GeneratorConfig { name: "g2".into(), map: "complex_pow:2".into(), lipschitz: None },
                GeneratorConfig { name: "g3".into(), map: "complex_pow:3".into(), lipschitz: None },
            ],
            abelian: true,
            eps_schedule: vec![EpsConfig::Constant(0.08), EpsConfig::Constant(0.04), EpsConfig::Constant(0.02)],
            g_list: vec![vec!["g2".into()], vec!["g3".into()], vec!["g2".into(), "g3".into()]],
            connector_max_len: 1,
            enclosure: EnclosureMode::Interval,
            mode: ModeSelection::Both,
            attractors: Some(AttractorConfig {
                h_list: vec![vec!["g2".into()]],
                trap_connector_max_len: 2,
                pivots: vec!["g2".into()],
                depth: 6,
                word_slack: 1,
                basin_word_len: 12,
                regions: vec![
                    RegionConfig {
                        name: "disk".into(),
                        shape: Shape::Disk { center: vec![0.0, 0.0], radius: 0.5 },
                        h: vec!["g2".into()],
                        unbounded: false,
                    },
                    RegionConfig {
                        name: "exterior".into(),
                        shape: Shape::Exterior { center: vec![0.0, 0.0], radius: 1.2 },
                        h: vec!["g2".into()],
                        unbounded: true,
                    },
                ],
                search: None,
                band: 3,
            }),
            chain: None,
            conjugacy: None,
            invariance_dilation: Some(1),
            budget: Budget::default(),
            output_dir: None,
            workers: None,
        }
    }

    /// Checks ranges and cross-references and builds the runtime objects.
    pub fn build(&self) -> Result<System> {
        let window = Window::new(self.window.lo.clone(), self.window.hi.clone())
            .map_err(|e| Error::config("window", e.to_string()))?;
        let dim = window.dim();
        if self.subdivisions.len() != dim {
            return Err(Error::config("subdivisions", format!("expected {dim} entries")));
        }
        let grid = Arc::new(
            Grid::new(window.clone(), self.subdivisions.clone()).map_err(|e| Error::config("subdivisions", e.to_string()))?,
        );
        let sg = build_semigroup(&self.generators, &window, self.abelian, "generators")?;
        if self.eps_schedule.is_empty() {
            return Err(Error::config("eps_schedule", "must be nonempty"));
        }
        let eps = build_eps(&self.eps_schedule, dim, &window, "eps_schedule")?;
        if self.g_list.is_empty() {
            return Err(Error::config("g_list", "must be nonempty"));
        }
        let g_list = self
            .g_list
            .iter()
            .enumerate()
            .map(|(i, w)| word(&sg, w, &format!("g_list[{i}]"), false))
            .collect::<Result<Vec<_>>>()?;
        if let Some(a) = &self.attractors {
            if a.depth < 1 {
                return Err(Error::config("attractors.depth", "must be at least 1"));
            }
            if a.pivots.is_empty() {
                return Err(Error::config("attractors.pivots", "must be nonempty"));
            }
            for (i, p) in a.pivots.iter().enumerate() {
                sg.index_of(p).ok_or_else(|| Error::config(format!("attractors.pivots[{i}]"), format!("unknown generator `{p}`")))?;
            }
            for (i, h) in a.h_list.iter().enumerate() {
                word(&sg, h, &format!("attractors.h_list[{i}]"), false)?;
            }
            if a.regions.is_empty() && a.search.is_none() {
                return Err(Error::config("attractors", "give `regions` or a `search` section"));
            }
            if a.regions.is_empty() && a.h_list.is_empty() {
                return Err(Error::config("attractors.h_list", "candidate search needs at least one word"));
            }
            for (i, r) in a.regions.iter().enumerate() {
                word(&sg, &r.h, &format!("attractors.regions[{i}].h"), false)?;
                region_cells(&grid, r).map_err(|e| Error::config(format!("attractors.regions[{i}].shape"), e.to_string()))?;
            }
        }
        if let Some(c) = &self.chain {
            if let Some(i) = c.eps_index {
                if i >= eps.len() {
                    return Err(Error::config("chain.eps_index", "out of range"));
                }
            }
            if let Some(g) = &c.g {
                word(&sg, g, "chain.g", false)?;
            }
        }
        Ok(System { grid, sg, eps, g_list })
    }
}

/// Runtime objects built from a [`RunConfig`].
#[derive(Clone, Debug)]
pub struct System {
    pub grid: Arc<Grid>,
    pub sg: Semigroup,
    pub eps: Vec<EpsFunction>,
    pub g_list: Vec<Word>,
}

pub(crate) fn build_semigroup(gens: &[GeneratorConfig], window: &Window, abelian: bool, path: &str) -> Result<Semigroup> {
    if gens.is_empty() {
        return Err(Error::config(path, "at least one generator is required"));
    }
    let mut maps = Vec::new();
    for (i, g) in gens.iter().enumerate() {
        if gens[..i].iter().any(|o| o.name == g.name) {
            return Err(Error::config(format!("{path}[{i}].name"), format!("duplicate name `{}`", g.name)));
        }
        if let Some(l) = g.lipschitz {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::config(format!("{path}[{i}].lipschitz"), "must be finite and nonnegative"));
            }
        }
        let m = GeneratorMap::parse(&g.name, &g.map, window.dim())
            .map_err(|e| Error::config(format!("{path}[{i}].map"), e.to_string()))?
            .with_lipschitz(g.lipschitz);
        maps.push(m);
    }
    Semigroup::new(maps, window.clone(), abelian).map_err(|e| Error::config("abelian", e.to_string()))
}

pub(crate) fn build_eps(list: &[EpsConfig], dim: usize, window: &Window, path: &str) -> Result<Vec<EpsFunction>> {
    let mut out: Vec<EpsFunction> = Vec::new();
    let mut prev_lo = f64::INFINITY;
    for (i, e) in list.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let f = match e {
            EpsConfig::Constant(c) => EpsFunction::constant(dim, *c),
            EpsConfig::Radial { center, coefficients } => {
                if center.len() != dim {
                    return Err(Error::config(format!("{p}.radial.center"), format!("expected {dim} coordinates")));
                }
                EpsFunction::radial(center.clone(), coefficients.clone())
            }
            EpsConfig::Expression { source, lipschitz } => EpsFunction::expression(source, dim, *lipschitz),
        }
        .map_err(|err| Error::config(p.clone(), err.to_string()))?;
        let (lo, _) = f.bounds(&window.as_box()).map_err(|err| Error::config(p.clone(), err.to_string()))?;
        if lo > prev_lo {
            return Err(Error::config(p, "eps schedule must be non-increasing (by lower bound over the window)"));
        }
        prev_lo = lo;
        out.push(f);
    }
    Ok(out)
}

fn word(sg: &Semigroup, names: &[String], path: &str, allow_identity: bool) -> Result<Word> {
    if names.is_empty() && !allow_identity {
        return Err(Error::config(path, "the identity is not an element of G"));
    }
    sg.word_from_names(names).map_err(|e| Error::config(path, e.to_string()))
}

/// Cells lying entirely inside the region's shape, with OUTSIDE set for
/// unbounded regions.
pub fn region_cells(grid: &Arc<Grid>, r: &RegionConfig) -> Result<CellSet> {
    let d = grid.dim();
    let check = |c: &[f64]| {
        if c.len() != d {
            Err(Error::DimensionMismatch { expected: d, got: c.len() })
        } else {
            Ok(())
        }
    };
    let set = match &r.shape {
        Shape::Disk { center, radius } => {
            check(center)?;
            CellSet::from_predicate(grid, |c| grid.cell_box(c).max_dist_point(center) < *radius)
        }
        Shape::Exterior { center, radius } => {
            check(center)?;
            CellSet::from_predicate(grid, |c| grid.cell_box(c).dist_point(center) > *radius)
        }
        Shape::Annulus { center, inner, outer } => {
            check(center)?;
            CellSet::from_predicate(grid, |c| {
                let b = grid.cell_box(c);
                b.dist_point(center) > *inner && b.max_dist_point(center) < *outer
            })
        }
        Shape::Box { lo, hi } => {
            check(lo)?;
            check(hi)?;
            CellSet::from_predicate(grid, |c| {
                let b = grid.cell_box(c);
                (0..d).all(|i| b.lo[i] > lo[i] && b.hi[i] < hi[i])
            })
        }
        Shape::Cells(idx) => {
            let mut s = CellSet::empty(grid);
            for k in idx {
                if k.len() != d || k.iter().zip(grid.subdivisions()).any(|(a, n)| a >= n) {
                    return Err(Error::InvalidGrid(format!("cell {k:?} not in grid")));
                }
                s.insert(grid.flat(k));
            }
            s
        }
    };
    Ok(set.with_outside(r.unbounded))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_round_trips() {
        let c = RunConfig::zn_preset(64);
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_json(&back.to_json()).unwrap(), back);
        assert_eq!(c.hash(), back.hash());
        c.build().unwrap();
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let mut c = RunConfig::zn_preset(64);
        let h = c.hash();
        c.workers = Some(8);
        c.output_dir = Some("elsewhere".into());
        assert_eq!(c.hash(), h);
        c.connector_max_len = 2;
        assert_ne!(c.hash(), h);
        assert_eq!(h.len(), 64);
    }

    #[test]
    fn negative_connector_length_names_the_field() {
        let mut v = serde_json::to_value(RunConfig::zn_preset(8)).unwrap();
        v["connector_max_len"] = serde_json::json!(-1);
        let err = RunConfig::from_json(&v.to_string()).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "connector_max_len"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn validation_errors_carry_paths() {
        let mut c = RunConfig::zn_preset(8);
        c.eps_schedule = vec![EpsConfig::Constant(0.01), EpsConfig::Constant(0.02)];
        assert!(matches!(c.build(), Err(Error::Config { path, .. }) if path == "eps_schedule[1]"));

        let mut c = RunConfig::zn_preset(8);
        c.g_list[1] = vec!["g9".into()];
        assert!(matches!(c.build(), Err(Error::Config { path, .. }) if path == "g_list[1]"));

        let mut c = RunConfig::zn_preset(8);
        c.attractors.as_mut().unwrap().depth = 0;
        assert!(matches!(c.build(), Err(Error::Config { path, .. }) if path == "attractors.depth"));

        let mut c = RunConfig::zn_preset(8);
        c.generators[0].map = "x1 +".into();
        assert!(matches!(c.build(), Err(Error::Config { path, .. }) if path == "generators[0].map"));

        let mut v = serde_json::to_value(RunConfig::zn_preset(8)).unwrap();
        v["attractors"]["bogus"] = serde_json::json!(1);
        assert!(matches!(RunConfig::from_json(&v.to_string()), Err(Error::Config { .. })));
    }

    #[test]
    fn region_shapes() {
        let grid = Arc::new(Grid::uniform(Window::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(), 8).unwrap());
        let disk = RegionConfig {
            name: "d".into(),
            shape: Shape::Disk { center: vec![0.0, 0.0], radius: 0.5 },
            h: vec!["g".into()],
            unbounded: false,
        };
        // only the four central cells (max distance 0.354) fit; the next ring reaches 0.559
        assert_eq!(region_cells(&grid, &disk).unwrap().len(), 4);
        let ext = RegionConfig { shape: Shape::Exterior { center: vec![0.0, 0.0], radius: 0.9 }, unbounded: true, ..disk.clone() };
        let e = region_cells(&grid, &ext).unwrap();
        assert!(e.includes_outside());
        assert!(e.contains(0) && !e.contains(grid.flat(&[3, 3])));
        let cells = RegionConfig { shape: Shape::Cells(vec![vec![1, 2]]), ..disk.clone() };
        assert_eq!(region_cells(&grid, &cells).unwrap().cells(), vec![grid.flat(&[1, 2])]);
        let bad = RegionConfig { shape: Shape::Cells(vec![vec![9, 2]]), ..disk };
        assert!(region_cells(&grid, &bad).is_err());
    }
}
