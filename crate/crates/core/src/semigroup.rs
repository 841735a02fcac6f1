//! Finitely generated semigroups of self-maps of ℝ^d.
//!
//! A [`Word`] lists generator indices in the order they act: `letters[0]`
//! is applied first. In right-to-left composition notation the word
//! `[a, b, c]` is `c ∘ b ∘ a`. The empty word is the identity and is only
//! used where the identity is adjoined (connectors, `Ĝ`).

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_list, Expr};
use crate::interval::Interval;
use crate::space::{Aabb, Point, Window};

#[derive(Clone, Debug, PartialEq)]
pub enum MapBody {
    Expr(Vec<Expr>),
    /// `z ↦ z^n` on ℂ ≅ ℝ²
    ComplexPow(u32),
    /// `x ↦ a·x + b` on ℝ
    Affine { a: f64, b: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMap {
    name: String,
    dim: usize,
    body: MapBody,
    source: String,
    lipschitz: Option<f64>,
}

impl GeneratorMap {
    /// Parses either a built-in (`complex_pow:n`, `affine:a,b`) or a
    /// semicolon-separated list of `dim` coordinate expressions.
    pub fn parse(name: &str, src: &str, dim: usize) -> Result<Self> {
        let body = if let Some(n) = src.trim().strip_prefix("complex_pow:") {
            if dim != 2 {
                return Err(Error::Arity { expected: dim, got: 2 });
            }
            let n: u32 = n.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| Error::Syntax {
                offset: src.find(':').map_or(0, |i| i + 1),
                message: format!("complex_pow expects a positive integer, got `{n}`"),
            })?;
            MapBody::ComplexPow(n)
        } else if let Some(rest) = src.trim().strip_prefix("affine:") {
            if dim != 1 {
                return Err(Error::Arity { expected: dim, got: 1 });
            }
            let parts: Vec<f64> = rest.split(',').map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(
                |_| Error::Syntax { offset: src.find(':').map_or(0, |i| i + 1), message: "affine expects `a,b`".into() },
            )?;
            match parts.as_slice() {
                [a, b] => MapBody::Affine { a: *a, b: *b },
                _ => {
                    return Err(Error::Syntax {
                        offset: src.find(':').map_or(0, |i| i + 1),
                        message: "affine expects `a,b`".into(),
                    })
                }
            }
        } else {
            let exprs = parse_list(src, dim)?;
            if exprs.len() != dim {
                return Err(Error::Arity { expected: dim, got: exprs.len() });
            }
            MapBody::Expr(exprs)
        };
        Ok(GeneratorMap { name: name.to_string(), dim, body, source: src.to_string(), lipschitz: None })
    }

    pub fn with_lipschitz(mut self, l: Option<f64>) -> Self {
        self.lipschitz = l;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn body(&self) -> &MapBody {
        &self.body
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Source text that parses back to an equivalent map.
    pub fn to_source(&self) -> String {
        match &self.body {
            MapBody::Expr(es) => es.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "),
            MapBody::ComplexPow(n) => format!("complex_pow:{n}"),
            MapBody::Affine { a, b } => format!("affine:{a:?},{b:?}"),
        }
    }

    pub fn declared_lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    /// Declared Lipschitz constant, or one derived for built-ins on the window.
    pub fn lipschitz_on(&self, window: &Window) -> Option<f64> {
        if self.lipschitz.is_some() {
            return self.lipschitz;
        }
        match self.body {
            MapBody::Affine { a, .. } => Some(a.abs()),
            MapBody::ComplexPow(n) => {
                let b = window.as_box();
                let r = b.max_dist_point(&[0.0, 0.0]);
                Some(n as f64 * r.powi(n as i32 - 1))
            }
            MapBody::Expr(_) => None,
        }
    }

    #[inline]
    pub fn apply(&self, p: &[f64], out: &mut Point) {
        out.clear();
        match &self.body {
            MapBody::Expr(es) => out.extend(es.iter().map(|e| e.eval(p))),
            MapBody::ComplexPow(n) => {
                let z = Complex64::new(p[0], p[1]).powu(*n);
                out.push(z.re);
                out.push(z.im);
            }
            MapBody::Affine { a, b } => out.push(a * p[0] + b),
        }
    }

    pub fn eval(&self, p: &[f64]) -> Point {
        let mut out = Point::new();
        self.apply(p, &mut out);
        out
    }

    /// A box containing the image of `b` (interval extension; exact polar
    /// sector bounds for `complex_pow`, exact for affine maps).
    pub fn image_box(&self, b: &Aabb) -> Aabb {
        match &self.body {
            MapBody::Expr(es) => {
                let iv: Vec<Interval> = (0..self.dim).map(|i| Interval::new(b.lo[i], b.hi[i])).collect();
                let mut out = Aabb { lo: Point::new(), hi: Point::new() };
                for e in es {
                    let r = e.eval_interval(&iv);
                    out.lo.push(r.lo);
                    out.hi.push(r.hi);
                }
                out
            }
            MapBody::ComplexPow(n) => complex_pow_box(*n, b),
            MapBody::Affine { a, b: c } => {
                let (x, y) = (a * b.lo[0] + c, a * b.hi[0] + c);
                Aabb::new(&[x.min(y)], &[x.max(y)])
            }
        }
    }
}

fn polar(x: f64, y: f64) -> (f64, f64) {
    (x.hypot(y), y.atan2(x))
}

/// Bounding box of the annular sector `{r^n e^{inθ}}` over the polar hull of `b`.
fn complex_pow_box(n: u32, b: &Aabb) -> Aabb {
    let rmin = b.dist_point(&[0.0, 0.0]);
    let rmax = b.max_dist_point(&[0.0, 0.0]);
    let big = rmax.powi(n as i32);
    if rmin == 0.0 {
        return Aabb::new(&[-big, -big], &[big, big]);
    }
    let small = rmin.powi(n as i32);
    let c = b.center();
    let (_, tc) = polar(c[0], c[1]);
    let (mut t0, mut t1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in [(b.lo[0], b.lo[1]), (b.lo[0], b.hi[1]), (b.hi[0], b.lo[1]), (b.hi[0], b.hi[1])] {
        let (_, t) = polar(x, y);
        let mut d = t - tc;
        while d > PI {
            d -= TAU;
        }
        while d <= -PI {
            d += TAU;
        }
        t0 = t0.min(tc + d);
        t1 = t1.max(tc + d);
    }
    let (p0, p1) = (n as f64 * t0, n as f64 * t1);
    if p1 - p0 >= TAU {
        return Aabb::new(&[-big, -big], &[big, big]);
    }
    let mut out = Aabb::point(&[small * p0.cos(), small * p0.sin()]);
    for (r, t) in [(small, p1), (big, p0), (big, p1)] {
        out.expand_to(&[r * t.cos(), r * t.sin()]);
    }
    let mut k = (p0 / FRAC_PI_2).ceil() as i64;
    while k as f64 * FRAC_PI_2 <= p1 {
        let (s, c) = match k.rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        };
        out.expand_to(&[big * c, big * s]);
        k += 1;
    }
    out
}

/// A finite composition of generators; `letters[0]` acts first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(letters: Vec<usize>) -> Self {
        Word(letters)
    }

    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn letter(g: usize) -> Self {
        Word(vec![g])
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    /// `self` first, then `then`.
    pub fn then(&self, then: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&then.0);
        Word(v)
    }

    pub fn count(&self, letter: usize) -> usize {
        self.0.iter().filter(|&&l| l == letter).count()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "id");
        }
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Words restricted to at least `min_count` occurrences of `pivot`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnboundedFilter {
    pub pivot: usize,
    pub min_count: usize,
}

/// Default cap on the number of enumerated words.
pub const DEFAULT_WORD_CAP: u64 = 1 << 20;

/// All words of length `1..=max_len` (plus the identity first when asked),
/// shortest first, lexicographic within a length.
pub fn enumerate_words(
    gen_count: usize,
    max_len: usize,
    filter: Option<UnboundedFilter>,
    include_identity: bool,
    cap: u64,
) -> Result<Vec<Word>> {
    if let Some(f) = filter {
        if f.min_count > max_len {
            return Err(Error::InvalidWord(format!("filter needs {} pivots but max_len is {max_len}", f.min_count)));
        }
        if f.pivot >= gen_count {
            return Err(Error::InvalidWord(format!("pivot {} out of range", f.pivot)));
        }
    }
    let mut total: u64 = include_identity as u64;
    let mut layer: u64 = 1;
    for _ in 0..max_len {
        layer = layer.saturating_mul(gen_count as u64);
        total = total.saturating_add(layer);
    }
    if total > cap {
        return Err(Error::Budget { what: "word enumeration", needed: total, cap });
    }
    let mut out = Vec::new();
    if include_identity && filter.is_none_or(|f| f.min_count == 0) {
        out.push(Word::identity());
    }
    if gen_count == 0 {
        return Ok(out);
    }
    let mut prev: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(prev.len() * gen_count);
        for w in &prev {
            for g in 0..gen_count {
                let mut v = w.clone();
                v.push(g);
                next.push(v);
            }
        }
        for w in &next {
            if filter.is_none_or(|f| w.iter().filter(|&&l| l == f.pivot).count() >= f.min_count) {
                out.push(Word(w.clone()));
            }
        }
        prev = next;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnclosureMode {
    /// Bounding box of the 3^d sample lattice image, padded by a local
    /// Lipschitz estimate times the box half-diameter.
    #[default]
    Sampled,
    /// Image of the center inflated by the product of generator Lipschitz
    /// constants times the half-diameter.
    Lipschitz,
    /// Letter-by-letter interval images.
    Interval,
}

/// A box containing an image set, with bounds on the Euclidean norm of its
/// points. The norm bounds are sharper than the box only after
/// `complex_pow` letters in interval mode, where the image is an annular
/// sector.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBox {
    pub bbox: Aabb,
    pub min_norm: f64,
    pub max_norm: f64,
}

impl ImageBox {
    pub fn plain(bbox: Aabb) -> Self {
        ImageBox { bbox, min_norm: 0.0, max_norm: f64::INFINITY }
    }

    /// Whether the image bound can meet the closed box `b`.
    pub fn meets(&self, b: &Aabb) -> bool {
        self.bbox.intersects(b) && max_norm(b) >= self.min_norm && min_norm(b) <= self.max_norm
    }

    /// Lower bound for the distance from the image to `b`.
    pub fn dist(&self, b: &Aabb) -> f64 {
        self.bbox.dist(b).max(self.min_norm - max_norm(b)).max(min_norm(b) - self.max_norm)
    }

    /// Upper bound for the distance between any image point and any point of `b`.
    pub fn max_dist(&self, b: &Aabb) -> f64 {
        self.bbox.max_dist(b)
    }

    /// True when no image point can lie in `b`.
    pub fn misses(&self, b: &Aabb) -> bool {
        !self.meets(b)
    }
}

/// Largest Euclidean norm over a box.
pub fn max_norm(b: &Aabb) -> f64 {
    b.lo.iter().zip(&b.hi).map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum::<f64>().sqrt()
}

fn min_norm(b: &Aabb) -> f64 {
    b.lo.iter().zip(&b.hi).map(|(l, h)| if *l > 0.0 { l * l } else if *h < 0.0 { h * h } else { 0.0 }).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Enclosure {
    Box(ImageBox),
    /// Some image is non-finite; maps to OUTSIDE.
    Escaped,
}

#[derive(Clone, Debug)]
pub struct Semigroup {
    gens: Vec<GeneratorMap>,
    dim: usize,
    window: Window,
    abelian: bool,
}

impl Semigroup {
    /// Generators acting on the given window. When `abelian` is claimed,
    /// commutativity is spot-checked on random points and the claim is
    /// refused on a counterexample.
    pub fn new(gens: Vec<GeneratorMap>, window: Window, abelian: bool) -> Result<Self> {
        let dim = window.dim();
        if gens.is_empty() {
            return Err(Error::InvalidWord("semigroup needs at least one generator".into()));
        }
        if let Some(g) = gens.iter().find(|g| g.dim != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: g.dim });
        }
        let s = Semigroup { gens, dim, window, abelian };
        if abelian {
            s.spot_check_commutative(256, 0x5eed)?;
        }
        Ok(s)
    }

    pub fn generators(&self) -> &[GeneratorMap] {
        &self.gens
    }

    pub fn gen_count(&self) -> usize {
        self.gens.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn is_abelian(&self) -> bool {
        self.abelian
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.gens.iter().position(|g| g.name == name)
    }

    pub fn word_from_names<S: AsRef<str>>(&self, names: &[S]) -> Result<Word> {
        names
            .iter()
            .map(|n| self.index_of(n.as_ref()).ok_or_else(|| Error::InvalidWord(format!("unknown generator `{}`", n.as_ref()))))
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }

    pub fn word_name(&self, w: &Word) -> String {
        if w.is_identity() {
            return "id".into();
        }
        w.0.iter().map(|&l| self.gens[l].name.as_str()).collect::<Vec<_>>().join("·")
    }

    pub fn word_names(&self, w: &Word) -> Vec<String> {
        w.0.iter().map(|&l| self.gens[l].name.clone()).collect()
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        match w.0.iter().find(|&&l| l >= self.gens.len()) {
            Some(l) => Err(Error::InvalidWord(format!("letter {l} out of range"))),
            None => Ok(()),
        }
    }

    fn spot_check_commutative(&self, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (self.window.lo(), self.window.hi());
        for _ in 0..samples {
            let p: Point = (0..self.dim).map(|i| rng.random_range(lo[i]..hi[i])).collect();
            for i in 0..self.gens.len() {
                for j in i + 1..self.gens.len() {
                    let a = self.gens[j].eval(&self.gens[i].eval(&p));
                    let b = self.gens[i].eval(&self.gens[j].eval(&p));
                    if a.iter().chain(&b).any(|v| !v.is_finite()) {
                        continue;
                    }
                    let close = a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs())));
                    if !close {
                        return Err(Error::NotAbelian(format!(
                            "{} and {} do not commute at {:?}",
                            self.gens[i].name,
                            self.gens[j].name,
                            p.as_slice()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies the letters in order; errors on a non-finite intermediate value.
    pub fn eval_word(&self, w: &Word, p: &[f64]) -> Result<Point> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: p.len() });
        }
        self.check_word(w)?;
        let mut cur: Point = p.iter().copied().collect();
        let mut next = Point::new();
        for &l in &w.0 {
            self.gens[l].apply(&cur, &mut next);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Like [`eval_word`](Self::eval_word) but returns `None` on escape.
    #[inline]
    pub fn try_eval(&self, w: &Word, p: &[f64]) -> Option<Point> {
        let mut cur: Point = p.iter().copied().collect();
        let mut next = Point::new();
        for &l in &w.0 {
            self.gens[l].apply(&cur, &mut next);
            if next.iter().any(|v| !v.is_finite()) {
                return None;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Some(cur)
    }

    pub fn word_lipschitz(&self, w: &Word) -> Result<f64> {
        w.0.iter().try_fold(1.0, |acc, &l| {
            self.gens[l]
                .lipschitz_on(&self.window)
                .map(|c| acc * c)
                .ok_or_else(|| Error::MissingLipschitz(self.gens[l].name.clone()))
        })
    }

    /// A box containing `w(b)` (exactly so in `Interval` and, with valid
    /// constants, `Lipschitz` mode).
    pub fn image_enclosure(&self, w: &Word, b: &Aabb, mode: EnclosureMode) -> Result<Enclosure> {
        self.check_word(w)?;
        if w.is_identity() {
            return Ok(Enclosure::Box(ImageBox::plain(b.clone())));
        }
        let mut norm_lo: f64 = 0.0;
        let mut norm_hi = f64::INFINITY;
        let out = match mode {
            EnclosureMode::Interval => {
                let mut cur = b.clone();
                for &l in &w.0 {
                    let (lo, hi) = (norm_lo.max(min_norm(&cur)), norm_hi.min(max_norm(&cur)));
                    cur = self.gens[l].image_box(&cur);
                    if !cur.is_finite() {
                        return Ok(Enclosure::Escaped);
                    }
                    (norm_lo, norm_hi) = match self.gens[l].body {
                        MapBody::ComplexPow(n) => (lo.powi(n as i32), hi.powi(n as i32)),
                        _ => (0.0, f64::INFINITY),
                    };
                }
                cur
            }
            EnclosureMode::Lipschitz => {
                let l = self.word_lipschitz(w)?;
                let Some(c) = self.try_eval(w, &b.center()) else { return Ok(Enclosure::Escaped) };
                Aabb::point(&c).inflate(l * b.half_diameter())
            }
            EnclosureMode::Sampled => {
                let pts = b.lattice3();
                let mut imgs = Vec::with_capacity(pts.len());
                for p in &pts {
                    match self.try_eval(w, p) {
                        Some(q) => imgs.push(q),
                        None => return Ok(Enclosure::Escaped),
                    }
                }
                let hull = Aabb::hull(imgs.iter().map(|q| q.as_slice())).expect("nonempty lattice");
                let l = local_lipschitz(&pts, &imgs, self.dim);
                hull.inflate(l * b.half_diameter())
            }
        };
        if out.is_finite() && norm_lo.is_finite() {
            Ok(Enclosure::Box(ImageBox { bbox: out, min_norm: norm_lo, max_norm: norm_hi }))
        } else {
            Ok(Enclosure::Escaped)
        }
    }

    /// Enclosure of `w` for the window-clipped dynamics: after every letter
    /// the part of the image beyond the window is absorbed, as by the OUTSIDE
    /// sink. Returns what is left (`None` when nothing is) and whether any
    /// part of some intermediate image left the window.
    pub fn clipped_enclosure(&self, w: &Word, b: &Aabb, mode: EnclosureMode) -> Result<(Option<ImageBox>, bool)> {
        self.check_word(w)?;
        let window = self.window.as_box();
        let Some(start) = b.intersection(&window) else { return Ok((None, true)) };
        let mut cur = ImageBox::plain(start);
        let mut left = false;
        for &l in &w.0 {
            let e = match mode {
                EnclosureMode::Interval => {
                    let lo = cur.min_norm.max(min_norm(&cur.bbox));
                    let hi = cur.max_norm.min(max_norm(&cur.bbox));
                    let bbox = self.gens[l].image_box(&cur.bbox);
                    if !bbox.is_finite() {
                        return Ok((None, true));
                    }
                    let (min_norm, max_norm) = match self.gens[l].body {
                        MapBody::ComplexPow(n) => (lo.powi(n as i32), hi.powi(n as i32)),
                        _ => (0.0, f64::INFINITY),
                    };
                    ImageBox { bbox, min_norm, max_norm }
                }
                _ => match self.image_enclosure(&Word::letter(l), &cur.bbox, mode)? {
                    Enclosure::Escaped => return Ok((None, true)),
                    Enclosure::Box(e) => e,
                },
            };
            if !window.contains_box(&e.bbox) {
                left = true;
            }
            if e.misses(&window) {
                return Ok((None, true));
            }
            let Some(bbox) = e.bbox.intersection(&window) else { return Ok((None, true)) };
            cur = ImageBox { bbox, ..e };
        }
        Ok((Some(cur), left))
    }
}

/// Largest difference quotient along lattice edges of the 3^d sample grid.
fn local_lipschitz(pts: &[Point], imgs: &[Point], dim: usize) -> f64 {
    let mut best: f64 = 0.0;
    let mut stride = 1;
    for _ in 0..dim {
        for k in 0..pts.len() {
            if (k / stride) % 3 == 2 {
                continue;
            }
            let j = k + stride;
            let dx = dist(&pts[k], &pts[j]);
            if dx > 0.0 {
                best = best.max(dist(&imgs[k], &imgs[j]) / dx);
            }
        }
        stride *= 3;
    }
    best
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
