//! Symbol bands, itineraries, atom covers of the Markov partitions, the
//! coding map Θ and the measurements of its regularity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_core::{apply, apply_inverse, in_r4_image, theta_point, Branch, MapParams, Point};

/// Subset of the three symbols, as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BandSet(pub u8);

impl BandSet {
    pub const EMPTY: BandSet = BandSet(0);

    pub fn single(s: u8) -> BandSet {
        BandSet(1 << s)
    }

    pub fn contains(self, s: u8) -> bool {
        self.0 & (1 << s) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersect(self, o: BandSet) -> BandSet {
        BandSet(self.0 & o.0)
    }

    pub fn symbols(self) -> Vec<u8> {
        (0..3).filter(|&s| self.contains(s)).collect()
    }

    /// Smallest symbol, the canonical choice at the tangency.
    pub fn lowest(self) -> Option<u8> {
        (0..3).find(|&s| self.contains(s))
    }
}

fn band_slack(p: &MapParams) -> f64 {
    4.0 * f64::EPSILON * (1.0 + p.c * p.w_max * p.w_max)
}

/// Bands containing `pt`: band 0 is R1′, band 1 is R5′ with the right half
/// of R4′ and band 2 is R3′ with the left half. Only the tangency point lies
/// in two bands.
pub fn band_of(p: &MapParams, pt: Point) -> Result<BandSet> {
    let (x, y) = (pt.x, pt.y);
    let slack = band_slack(p);
    if !(-slack..=1.0 + slack).contains(&y) || !(-slack..=1.0 + slack).contains(&x) {
        return Err(Error::NotInBands);
    }
    let third = 1.0 / 3.0;
    let mut set = 0u8;
    if x <= p.lambda {
        set |= 1;
    }
    let parabola = in_r4_image(p, pt) && y >= -slack;
    if (x >= 1.0 - p.lambda && y >= third) || (parabola && x >= p.q) {
        set |= 2;
    }
    if (x >= p.r3_a - p.lambda && x <= p.r3_a && y >= third) || (parabola && x <= p.q) {
        set |= 4;
    }
    if set == 0 {
        Err(Error::NotInBands)
    } else {
        Ok(BandSet(set))
    }
}

/// Finite word over {0,1,2} with a marked time-zero position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    pub symbols: Vec<u8>,
    pub center: usize,
}

impl Word {
    /// Centered word `s_{-n} .. s_n` from `2n + 1` symbols.
    pub fn centered(symbols: Vec<u8>) -> Result<Word> {
        if symbols.len() % 2 == 0 {
            return Err(Error::InvalidInput(format!("centered word needs odd length, got {}", symbols.len())));
        }
        if let Some(s) = symbols.iter().find(|&&s| s > 2) {
            return Err(Error::InvalidInput(format!("symbol {s} outside {{0,1,2}}")));
        }
        let center = symbols.len() / 2;
        Ok(Word { symbols, center })
    }

    pub fn constant(symbol: u8, n: usize) -> Word {
        Word { symbols: vec![symbol; 2 * n + 1], center: n }
    }

    pub fn random<R: rand::Rng>(rng: &mut R, n: usize) -> Word {
        Word { symbols: (0..2 * n + 1).map(|_| rng.gen_range(0..3)).collect(), center: n }
    }

    /// Largest `n` such that positions `-n..=n` are all present.
    pub fn level(&self) -> usize {
        self.center.min(self.symbols.len() - 1 - self.center)
    }

    pub fn at(&self, k: isize) -> Option<u8> {
        let i = self.center as isize + k;
        (i >= 0 && (i as usize) < self.symbols.len()).then(|| self.symbols[i as usize])
    }

    /// The symbols `s_{-n+1} .. s_n` that determine the level-`n` atom.
    pub fn key(&self) -> Vec<u8> {
        let n = self.level() as isize;
        (-n + 1..=n).filter_map(|k| self.at(k)).collect()
    }

    /// Word of `f(P)` at one level lower: `s_{-n+2} .. s_n` centered at `s_1`.
    pub fn shift(&self) -> Option<Word> {
        let n = self.level() as isize;
        if n == 0 {
            return None;
        }
        let symbols = (-n + 2..=n).filter_map(|k| self.at(k)).collect();
        Some(Word { symbols, center: n as usize - 1 })
    }

    pub fn extended(&self, left: u8, right: u8) -> Word {
        let n = self.level() as isize;
        let mut symbols = vec![left];
        symbols.extend((-n..=n).filter_map(|k| self.at(k)));
        symbols.push(right);
        Word { symbols, center: n as usize + 1 }
    }

    /// Index of the first disagreement `min |k|`, if any, over common positions.
    pub fn first_disagreement(&self, other: &Word) -> Option<usize> {
        let n = self.level().min(other.level()) as isize;
        (0..=n).find(|&m| self.at(m) != other.at(m) || self.at(-m) != other.at(-m)).map(|m| m as usize)
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, s) in self.symbols.iter().enumerate() {
            if i == self.center {
                write!(f, ".")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Word {
    type Err = Error;

    fn from_str(text: &str) -> Result<Word> {
        let text = text.trim();
        let center = text.find('.').ok_or_else(|| Error::InvalidInput(format!("word {text:?} has no center mark")))?;
        let mut symbols = Vec::with_capacity(text.len());
        for ch in text.chars().filter(|&c| c != '.') {
            match ch.to_digit(10) {
                Some(d) if d < 3 => symbols.push(d as u8),
                _ => return Err(Error::InvalidInput(format!("bad symbol {ch:?} in word {text:?}"))),
            }
        }
        if center >= symbols.len() || text.matches('.').count() != 1 {
            return Err(Error::InvalidInput(format!("bad center mark in {text:?}")));
        }
        Ok(Word { symbols, center })
    }
}

/// Itinerary of a point, with the times at which it sat on the tangency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Itinerary {
    pub word: Word,
    pub tangency: Vec<isize>,
}

impl Itinerary {
    pub fn flagged(&self) -> bool {
        !self.tangency.is_empty()
    }
}

/// Symbols `s_k` = band of `f^k(P)` for `|k| <= n`. At the tangency point
/// the lower symbol is chosen and the time is recorded.
pub fn itinerary(p: &MapParams, pt: Point, n: usize) -> Result<Itinerary> {
    let mut points = vec![pt];
    let mut cur = pt;
    for k in 1..=n {
        cur = apply(p, cur).ok_or(Error::Escaped(k as isize))?;
        points.push(cur);
    }
    let mut past = Vec::with_capacity(n);
    cur = pt;
    for k in 1..=n {
        cur = apply_inverse(p, cur).ok_or(Error::Escaped(-(k as isize)))?;
        past.push(cur);
    }
    let mut symbols = vec![0u8; 2 * n + 1];
    let mut tangency = Vec::new();
    let times = (0..=n as isize).map(|k| (k, points[k as usize])).chain((1..=n as isize).map(|k| (-k, past[k as usize - 1])));
    for (k, z) in times {
        let set = band_of(p, z).map_err(|_| Error::Escaped(k))?;
        if set.symbols().len() > 1 {
            tangency.push(k);
        }
        symbols[(k + n as isize) as usize] = set.lowest().expect("nonempty band set");
    }
    tangency.sort_unstable();
    Ok(Itinerary { word: Word { symbols, center: n }, tangency })
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
        Rect { x0: x0.min(x1), y0: y0.min(y1), x1: x0.max(x1), y1: y0.max(y1) }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn contains(&self, pt: Point) -> bool {
        (self.x0..=self.x1).contains(&pt.x) && (self.y0..=self.y1).contains(&pt.y)
    }

    pub fn hull(&self, o: &Rect) -> Rect {
        Rect { x0: self.x0.min(o.x0), y0: self.y0.min(o.y0), x1: self.x1.max(o.x1), y1: self.y1.max(o.y1) }
    }

    fn padded(&self, d: f64) -> Rect {
        Rect { x0: self.x0 - d, y0: self.y0 - d, x1: self.x1 + d, y1: self.y1 + d }
    }

    fn quarters(&self) -> [Rect; 4] {
        let (xm, ym) = (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1));
        [
            Rect { x0: self.x0, y0: self.y0, x1: xm, y1: ym },
            Rect { x0: xm, y0: self.y0, x1: self.x1, y1: ym },
            Rect { x0: self.x0, y0: ym, x1: xm, y1: self.y1 },
            Rect { x0: xm, y0: ym, x1: self.x1, y1: self.y1 },
        ]
    }
}

const CLIP_EPS: f64 = 1e-12;

/// Intersection with `r` (with slack) and whether `h` lies strictly inside `r`.
fn clip(h: &Rect, r: &Rect) -> Option<(Rect, bool)> {
    let x0 = h.x0.max(r.x0);
    let x1 = h.x1.min(r.x1);
    let y0 = h.y0.max(r.y0);
    let y1 = h.y1.min(r.y1);
    if x0 > x1 + CLIP_EPS || y0 > y1 + CLIP_EPS {
        return None;
    }
    let inside = h.x0 >= r.x0 + CLIP_EPS && h.x1 <= r.x1 - CLIP_EPS && h.y0 >= r.y0 + CLIP_EPS && h.y1 <= r.y1 - CLIP_EPS;
    Some((Rect::new(x0, y0, x1.max(x0), y1.max(y0)), inside))
}

fn square_range(a: f64, b: f64) -> (f64, f64) {
    let hi = (a * a).max(b * b);
    let lo = if a <= 0.0 && b >= 0.0 { 0.0 } else { (a * a).min(b * b) };
    (lo, hi)
}

/// Intersection with one half of the parabolic band R4′.
fn clip_wing(p: &MapParams, h: &Rect, right: bool) -> Option<(Rect, bool)> {
    let (xa, xb) = if right { (p.q, p.q + p.w_max) } else { (p.q - p.w_max, p.q) };
    let x0 = h.x0.max(xa);
    let x1 = h.x1.min(xb);
    if x0 > x1 + CLIP_EPS {
        return None;
    }
    let x1 = x1.max(x0);
    let (m, mm) = square_range(x0 - p.q, x1 - p.q);
    let (vlo, vhi) = (p.c * m, p.c * mm);
    if vlo > h.y1 + p.lambda + CLIP_EPS || vhi < h.y0 - CLIP_EPS {
        return None;
    }
    let y0 = h.y0.max(vlo - p.lambda).max(0.0);
    let y1 = h.y1.min(vhi).min(1.0);
    if y0 > y1 + CLIP_EPS {
        return None;
    }
    let (hm, hmm) = square_range(h.x0 - p.q, h.x1 - p.q);
    let inside = h.x0 >= xa + CLIP_EPS
        && h.x1 <= xb - CLIP_EPS
        && h.y0 >= CLIP_EPS
        && h.y0 >= p.c * hmm - p.lambda + CLIP_EPS
        && h.y1 <= p.c * hm - CLIP_EPS;
    Some((Rect::new(x0, y0, x1, y1.max(y0)), inside))
}

#[derive(Clone, Copy)]
enum Piece {
    Box(Rect),
    Wing(bool),
}

/// Pieces of band `s` and the inverse branch on each.
fn band_pieces(p: &MapParams, s: u8) -> Vec<(Piece, Branch)> {
    let third = 1.0 / 3.0;
    match s {
        0 => vec![(Piece::Box(Rect::new(0.0, 0.0, p.lambda, 1.0)), Branch::R1)],
        1 => vec![
            (Piece::Box(Rect::new(1.0 - p.lambda, third, 1.0, 1.0)), Branch::R5),
            (Piece::Wing(true), Branch::R4Up),
        ],
        _ => vec![
            (Piece::Box(Rect::new(p.r3_a - p.lambda, third, p.r3_a, 1.0)), Branch::R3),
            (Piece::Wing(false), Branch::R4Lo),
        ],
    }
}

fn clip_piece(p: &MapParams, h: &Rect, piece: Piece) -> Option<(Rect, bool)> {
    match piece {
        Piece::Box(r) => clip(h, &r),
        Piece::Wing(right) => clip_wing(p, h, right),
    }
}

/// Branches whose image lies in band `s`.
fn branches_into(s: u8) -> &'static [Branch] {
    match s {
        0 => &[Branch::R1],
        1 => &[Branch::R4Up, Branch::R5],
        _ => &[Branch::R3, Branch::R4Lo],
    }
}

fn strip_rect(p: &MapParams, b: Branch) -> Rect {
    let (y0, y1) = match b {
        Branch::R1 => (0.0, p.r1_top()),
        Branch::R3 => (p.r3_y0, p.r3_top()),
        Branch::R4Lo => (p.r4_bottom(), p.t),
        Branch::R4Up => (p.t, p.r4_top()),
        Branch::R5 => (p.r5_bottom(), 1.0),
    };
    Rect::new(0.0, y0, 1.0, y1)
}

fn rounding_pad(p: &MapParams) -> f64 {
    16.0 * f64::EPSILON * p.sigma.max(1.0 / p.lambda)
}

/// Box hull of the image of `r` under branch `b` (exact up to rounding).
fn forward_hull(p: &MapParams, b: Branch, r: &Rect) -> Rect {
    let (l, s) = (p.lambda, p.sigma);
    let out = match b {
        Branch::R1 => Rect::new(l * r.x0, s * r.y0, l * r.x1, s * r.y1),
        Branch::R5 => Rect::new(l * r.x0 + 1.0 - l, s * r.y0 - s + 1.0, l * r.x1 + 1.0 - l, s * r.y1 - s + 1.0),
        Branch::R3 => Rect::new(p.r3_a - l * r.x1, 1.0 - s * (r.y1 - p.r3_y0), p.r3_a - l * r.x0, 1.0 - s * (r.y0 - p.r3_y0)),
        Branch::R4Lo | Branch::R4Up => {
            let (wa, wb) = (s * (r.y0 - p.t), s * (r.y1 - p.t));
            let (m, mm) = square_range(wa, wb);
            Rect::new(p.q + wa, p.c * m - l * r.x1, p.q + wb, p.c * mm - l * r.x0)
        }
    };
    out.padded(rounding_pad(p))
}

/// Box hull of the preimage of `r` (a subset of the image of `b`).
fn inverse_hull(p: &MapParams, b: Branch, r: &Rect) -> Option<Rect> {
    let (l, s) = (p.lambda, p.sigma);
    let out = match b {
        Branch::R1 => Rect::new(r.x0 / l, r.y0 / s, r.x1 / l, r.y1 / s),
        Branch::R5 => Rect::new((r.x0 - 1.0 + l) / l, (r.y0 + s - 1.0) / s, (r.x1 - 1.0 + l) / l, (r.y1 + s - 1.0) / s),
        Branch::R3 => Rect::new((p.r3_a - r.x1) / l, p.r3_y0 + (1.0 - r.y1) / s, (p.r3_a - r.x0) / l, p.r3_y0 + (1.0 - r.y0) / s),
        Branch::R4Lo | Branch::R4Up => {
            let (wa, wb) = (r.x0 - p.q, r.x1 - p.q);
            let (m, mm) = square_range(wa, wb);
            let u0 = (p.c * m - r.y1).max(0.0);
            let u1 = (p.c * mm - r.y0).min(l);
            if u0 > u1 + CLIP_EPS {
                return None;
            }
            Rect::new(u0 / l, p.t + wa / s, u1.max(u0) / l, p.t + wb / s)
        }
    };
    Some(out.padded(rounding_pad(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fit {
    Out,
    Inside,
    Partial,
}

/// Tests a box against the level-`n` constraints `s_{-n+1} .. s_n`
/// (`key[k + n - 1] = s_k`). Images are tracked as lists of box hulls, one
/// per branch sequence.
fn classify(p: &MapParams, bx: &Rect, key: &[u8], n: usize) -> Fit {
    if n == 0 {
        return Fit::Inside;
    }
    let s = |k: isize| key[(k + n as isize - 1) as usize];
    let mut inside = true;
    let mut start = Vec::new();
    let mut any_inside = false;
    for (piece, b) in band_pieces(p, s(0)) {
        if let Some((r, cont)) = clip_piece(p, bx, piece) {
            start.push((r, b));
            any_inside |= cont;
        }
    }
    if start.is_empty() {
        return Fit::Out;
    }
    inside &= any_inside;

    let mut cur: Vec<Rect> = start.iter().map(|&(r, _)| r).collect();
    for k in 0..n as isize {
        let mut next = Vec::new();
        for h in &cur {
            let mut contained = false;
            for &b in branches_into(s(k + 1)) {
                if let Some((piece, cont)) = clip(h, &strip_rect(p, b)) {
                    if let Some((img, in_q)) = clip(&forward_hull(p, b, &piece), &Rect::UNIT) {
                        contained |= cont && in_q;
                        next.push(img);
                    }
                }
            }
            inside &= contained;
        }
        if next.is_empty() {
            return Fit::Out;
        }
        cur = next;
    }

    let mut cur = start;
    for k in (-(n as isize) + 1..=0).rev() {
        let mut next = Vec::new();
        for (h, b) in &cur {
            if let Some(pre) = inverse_hull(p, *b, h).and_then(|r| clip(&r, &Rect::UNIT)).map(|(r, _)| r) {
                if k - 1 >= -(n as isize) + 1 {
                    let mut contained = false;
                    for (piece, nb) in band_pieces(p, s(k - 1)) {
                        if let Some((r, cont)) = clip_piece(p, &pre, piece) {
                            contained |= cont;
                            next.push((r, nb));
                        }
                    }
                    inside &= contained;
                } else {
                    next.push((pre, *b));
                }
            } else {
                inside = false;
            }
        }
        if next.is_empty() {
            return Fit::Out;
        }
        cur = next;
    }
    if inside {
        Fit::Inside
    } else {
        Fit::Partial
    }
}

/// Box cover of the level-`n` atom of a centered word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub word: Word,
    pub level: usize,
    pub resolution: u32,
    pub boxes: Vec<Rect>,
    pub diameter_ub: f64,
    pub empty: bool,
}

impl Atom {
    pub fn bounding_box(&self) -> Option<Rect> {
        self.boxes.iter().copied().reduce(|a, b| a.hull(&b))
    }

    /// Area-weighted centroid of the cover.
    pub fn centroid(&self) -> Option<Point> {
        let area: f64 = self.boxes.iter().map(Rect::area).sum();
        if self.empty {
            return None;
        }
        if area <= 0.0 {
            return self.bounding_box().map(|r| r.center());
        }
        let (sx, sy) = self.boxes.iter().fold((0.0, 0.0), |(sx, sy), r| {
            let c = r.center();
            (sx + r.area() * c.x, sy + r.area() * c.y)
        });
        Some(Point::new(sx / area, sy / area))
    }

    pub fn contains(&self, pt: Point) -> bool {
        self.boxes.iter().any(|r| r.contains(pt))
    }

    pub fn csv_header() -> &'static str {
        "word,box_xmin,box_ymin,box_xmax,box_ymax"
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.boxes.iter().map(|r| format!("{},{:.17e},{:.17e},{:.17e},{:.17e}", self.word, r.x0, r.y0, r.x1, r.y1)).collect()
    }
}

pub const DEFAULT_RESOLUTION: u32 = 14;

/// Quadtree refinement of the unit square: boxes failing some constraint
/// are dropped, boxes certainly inside are kept whole, the rest are split
/// down to depth `resolution`.
pub fn atom(p: &MapParams, word: &Word, resolution: u32) -> Atom {
    let n = word.level();
    let key = word.key();
    let mut frontier = vec![Rect::UNIT];
    let mut kept = Vec::new();
    for depth in 0..=resolution {
        let fits: Vec<Fit> = if frontier.len() >= 256 {
            use rayon::prelude::*;
            frontier.par_iter().map(|b| classify(p, b, &key, n)).collect()
        } else {
            frontier.iter().map(|b| classify(p, b, &key, n)).collect()
        };
        let mut next = Vec::new();
        for (b, fit) in frontier.iter().zip(fits) {
            match fit {
                Fit::Out => {}
                Fit::Inside => kept.push(*b),
                Fit::Partial if depth == resolution => kept.push(*b),
                Fit::Partial => next.extend(b.quarters()),
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    kept.sort_by(|a, b| (a.x0, a.y0, a.x1, a.y1).partial_cmp(&(b.x0, b.y0, b.x1, b.y1)).expect("finite boxes"));
    let diameter_ub = kept
        .iter()
        .copied()
        .reduce(|a, b| a.hull(&b))
        .map_or(0.0, |r| r.width().hypot(r.height()));
    Atom { word: word.clone(), level: n, resolution, empty: kept.is_empty(), boxes: kept, diameter_ub }
}

/// All `3^(2n)` level-`n` atoms, indexed by their determining symbols
/// `s_{-n+1} .. s_n`; the listed word carries `s_{-n} = 0`.
pub fn atoms_at_level(p: &MapParams, n: usize, resolution: u32) -> Vec<Atom> {
    use rayon::prelude::*;
    let count = 3usize.pow(2 * n as u32);
    (0..count)
        .into_par_iter()
        .map(|mut idx| {
            let mut symbols = vec![0u8; 2 * n + 1];
            for slot in symbols.iter_mut().skip(1).rev() {
                *slot = (idx % 3) as u8;
                idx /= 3;
            }
            atom(p, &Word { symbols, center: n }, resolution)
        })
        .collect()
}

/// Counts over all `3^(2n+1)` centered words of level `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomCount {
    pub level: usize,
    pub words: usize,
    pub nonempty_words: usize,
    pub distinct_atoms: usize,
}

pub fn count_atoms(p: &MapParams, n: usize, resolution: u32) -> AtomCount {
    let atoms = atoms_at_level(p, n, resolution);
    let distinct = atoms.iter().filter(|a| !a.empty).count();
    AtomCount { level: n, words: 3usize.pow(2 * n as u32 + 1), nonempty_words: 3 * distinct, distinct_atoms: distinct }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub point: Point,
    pub radius: f64,
}

/// Θ of a finite centered word: centroid of its atom cover.
pub fn theta(p: &MapParams, word: &Word, resolution: u32) -> Result<ThetaPoint> {
    let a = atom(p, word, resolution);
    theta_of_atom(&a)
}

pub fn theta_of_atom(a: &Atom) -> Result<ThetaPoint> {
    a.centroid()
        .map(|point| ThetaPoint { point, radius: a.diameter_ub })
        .ok_or_else(|| Error::EmptyAtom(a.word.to_string()))
}

/// Atom covers memoized by determining symbols.
#[derive(Debug, Default)]
pub struct AtomCache {
    resolution: u32,
    map: std::collections::HashMap<Vec<u8>, Atom>,
}

impl AtomCache {
    pub fn new(resolution: u32) -> Self {
        AtomCache { resolution, map: Default::default() }
    }

    pub fn get(&mut self, p: &MapParams, word: &Word) -> &Atom {
        let key = word.key();
        let resolution = self.resolution;
        self.map.entry(key).or_insert_with(|| atom(p, word, resolution))
    }

    pub fn theta(&mut self, p: &MapParams, word: &Word) -> Result<ThetaPoint> {
        theta_of_atom(self.get(p, word))
    }
}

/// `|f(Θ(w)) − Θ(shift w)|` and the bound `radius(w) + radius(shift w)`.
pub fn semiconjugacy_defect(p: &MapParams, word: &Word, cache: &mut AtomCache) -> Result<(f64, f64)> {
    let shifted = word.shift().ok_or_else(|| Error::InvalidInput("shift needs a word of level >= 1".into()))?;
    let a = cache.theta(p, word)?;
    let b = cache.theta(p, &shifted)?;
    let image = apply(p, a.point).ok_or(Error::Escaped(1))?;
    Ok((image.dist(b.point), a.radius + b.radius))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub n: usize,
    pub max_diameter: f64,
    pub atoms: usize,
    /// `max_diameter / (λ^{n/2} + σ^{-n/2})`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    pub rows: Vec<DecayRow>,
    pub rate: f64,
    pub reference_rate: f64,
}

impl DecayTable {
    pub fn csv_header() -> &'static str {
        "n,max_diameter,atoms,ratio"
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows.iter().map(|r| format!("{},{:.17e},{},{:.17e}", r.n, r.max_diameter, r.atoms, r.ratio)).collect()
    }

    /// Largest `diameter / (λ^{n/2} + σ^{-n/2})` over rows with `1 <= n <= n_max`.
    pub fn constant(&self, n_max: usize) -> f64 {
        self.rows.iter().filter(|r| r.n >= 1 && r.n <= n_max).map(|r| r.ratio).fold(0.0, f64::max)
    }
}

pub fn diameter_scale(p: &MapParams, n: usize) -> f64 {
    p.lambda.powf(n as f64 / 2.0) + p.sigma.powf(-(n as f64) / 2.0)
}

/// Least-squares slope of `ln y` against `x`.
fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(_, y)| *y > 0.0 && y.is_finite()).map(|&(x, y)| (x, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Maximum atom diameter for `n = 0..=n_max` and its exponential rate,
/// fitted over `n >= 1`.
pub fn decay_table(p: &MapParams, n_max: usize, resolution: u32) -> Result<DecayTable> {
    let mut rows = Vec::new();
    for n in 0..=n_max {
        let atoms = atoms_at_level(p, n, resolution);
        let nonempty: Vec<&Atom> = atoms.iter().filter(|a| !a.empty).collect();
        let max_diameter = nonempty.iter().map(|a| a.diameter_ub).fold(0.0, f64::max);
        rows.push(DecayRow { n, max_diameter, atoms: nonempty.len(), ratio: max_diameter / diameter_scale(p, n) });
    }
    let fit: Vec<(f64, f64)> = rows.iter().filter(|r| r.n >= 1).map(|r| (r.n as f64, r.max_diameter)).collect();
    let slope = log_slope(&fit).ok_or_else(|| Error::InsufficientSamples("decay fit needs n_max >= 2".into()))?;
    Ok(DecayTable { rows, rate: slope.exp(), reference_rate: p.lambda.sqrt().max(1.0 / p.sigma.sqrt()) })
}

/// Hölder exponent of Θ for the metric `2^-n`:
/// `min(−ln√λ / ln 2, ln√σ / ln 2)`.
pub fn theta_gamma(p: &MapParams) -> f64 {
    let l2 = std::f64::consts::LN_2;
    (-(p.lambda.sqrt()).ln() / l2).min(p.sigma.sqrt().ln() / l2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaHolderSample {
    pub n: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaHolderFit {
    pub gamma_est: f64,
    pub gamma: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
    pub samples: Vec<ThetaHolderSample>,
}

impl ThetaHolderFit {
    pub fn passes(&self) -> bool {
        self.gamma_est >= 0.8 * self.gamma
    }

    pub fn csv_header() -> &'static str {
        "n,distance"
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.samples.iter().map(|s| format!("{},{:.17e}", s.n, s.distance)).collect()
    }
}

/// Random pairs of centered words of level `half` whose first
/// disagreement index is uniform in `1..=n_max`.
pub fn random_word_pairs<R: rand::Rng>(rng: &mut R, half: usize, n_max: usize, count: usize) -> Vec<(Word, Word)> {
    let n_max = n_max.min(half).max(1);
    (0..count)
        .map(|_| {
            let a = Word::random(rng, half);
            let n = rng.gen_range(1..=n_max) as isize;
            let mut b = Word::random(rng, half);
            for k in -n + 1..n {
                b.symbols[(half as isize + k) as usize] = a.at(k).expect("inside word");
            }
            let sides: &[isize] = match rng.gen_range(0..3) {
                0 => &[-1],
                1 => &[1],
                _ => &[-1, 1],
            };
            for &side in sides {
                let i = (half as isize + side * n) as usize;
                b.symbols[i] = (a.symbols[i] + rng.gen_range(1..3)) % 3;
            }
            for &side in &[-1isize, 1] {
                let i = (half as isize + side * n) as usize;
                if !sides.contains(&side) {
                    b.symbols[i] = a.symbols[i];
                }
            }
            (a, b)
        })
        .collect()
}

/// Like [`random_word_pairs`], keeping only pairs whose both codes are
/// realized by orbits of the map. Gives up after `50 * count` draws.
pub fn realizable_word_pairs<R: rand::Rng>(p: &MapParams, rng: &mut R, half: usize, n_max: usize, count: usize) -> Vec<(Word, Word)> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..50 * count {
        if out.len() == count {
            break;
        }
        let pair = random_word_pairs(rng, half, n_max, 1).remove(0);
        if theta_point(p, &pair.0.symbols, pair.0.center).is_ok() && theta_point(p, &pair.1.symbols, pair.1.center).is_ok() {
            out.push(pair);
        }
    }
    out
}

/// Pooled least-squares fit of `ln|Θ(ξ) − Θ(ξ′)|` against `n ln(1/2)`,
/// with Θ evaluated on the orbit coded by each word. Pairs whose codes are
/// not realizable by the map are skipped.
pub fn theta_holder_fit(p: &MapParams, pairs: &[(Word, Word)]) -> Result<ThetaHolderFit> {
    use rayon::prelude::*;
    let results: Vec<Option<ThetaHolderSample>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let n = a.first_disagreement(b)?;
            let pa = theta_point(p, &a.symbols, a.center).ok()?;
            let pb = theta_point(p, &b.symbols, b.center).ok()?;
            let distance = pa.dist(pb);
            (n > 0 && distance > 0.0).then_some(ThetaHolderSample { n, distance })
        })
        .collect();
    let samples: Vec<ThetaHolderSample> = results.iter().flatten().cloned().collect();
    let skipped = pairs.len() - samples.len();
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.n as f64 * 0.5f64.ln(), s.distance)).collect();
    let gamma_est = log_slope(&pts).ok_or_else(|| Error::InsufficientSamples(format!("{} usable pairs", samples.len())))?;
    if samples.len() < 10 {
        return Err(Error::InsufficientSamples(format!("{} usable pairs (need 10)", samples.len())));
    }
    Ok(ThetaHolderFit { gamma_est, gamma: theta_gamma(p), pairs_used: samples.len(), pairs_skipped: skipped, samples })
}
