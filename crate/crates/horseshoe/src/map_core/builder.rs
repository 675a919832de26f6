//! Accurate orbit segments of the invariant set from branch words.
//!
//! Plain iteration is useless for strongly hyperbolic parameters: with
//! σ = 1e5 the vertical coordinate loses all precision after a few steps.
//! Here the horizontal coordinate is propagated forward (where it
//! contracts) and the vertical one backward (where it contracts), which is
//! well conditioned in both directions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geom::Point;
use super::map::{apply_branch, branch_of, Branch};
use super::params::MapParams;
use crate::error::{Error, Result};

/// Orbit segment `z_{-origin} .. z_{len-1-origin}`; `branches[i]` is the
/// branch containing `points[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub points: Vec<Point>,
    pub branches: Vec<Branch>,
    pub origin: usize,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn center(&self) -> Point {
        self.points[self.origin]
    }

    /// Point at time `k` relative to the origin.
    pub fn at(&self, k: isize) -> Option<Point> {
        self.index(k).map(|i| self.points[i])
    }

    pub fn index(&self, k: isize) -> Option<usize> {
        let i = self.origin as isize + k;
        (i >= 0 && (i as usize) < self.points.len()).then_some(i as usize)
    }

    /// Band symbol of `points[i]`, known for every point but the first.
    pub fn symbol(&self, i: usize) -> Option<u8> {
        (i > 0).then(|| self.branches[i - 1].symbol())
    }

    /// Copy re-centered at index `i`.
    pub fn recentered(&self, i: usize) -> Orbit {
        Orbit { points: self.points.clone(), branches: self.branches.clone(), origin: i }
    }
}

fn rel_change(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

fn strip(p: &MapParams, b: Branch) -> (f64, f64) {
    match b {
        Branch::R1 => (0.0, p.r1_top()),
        Branch::R3 => (p.r3_y0, p.r3_top()),
        Branch::R4Lo => (p.r4_bottom(), p.t),
        Branch::R4Up => (p.t, p.r4_top()),
        Branch::R5 => (p.r5_bottom(), 1.0),
    }
}

/// Midpoint of the horizontal strip of branch `b`.
pub fn strip_mid(p: &MapParams, b: Branch) -> f64 {
    let (a, c) = strip(p, b);
    0.5 * (a + c)
}

fn strip_distance(p: &MapParams, b: Branch, y: f64) -> f64 {
    let (a, c) = strip(p, b);
    (a - y).max(y - c).max(0.0)
}

/// Builds the orbit whose `k`-th point lies in branch `word[k]`, with the
/// first horizontal coordinate `x_start` and last vertical coordinate
/// `y_end` prescribed.
pub fn build_orbit(p: &MapParams, word: &[Branch], origin: usize, x_start: f64, y_end: f64) -> Result<Orbit> {
    let n = word.len();
    if n == 0 || origin >= n {
        return Err(Error::Builder("empty word or origin out of range".into()));
    }
    for k in 0..n - 1 {
        if !word[k].allows(word[k + 1]) {
            return Err(Error::Builder(format!("inadmissible transition {:?} -> {:?} at {k}", word[k], word[k + 1])));
        }
    }
    let (l, s) = (p.lambda, p.sigma);
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    x[0] = x_start;
    y[n - 1] = y_end;
    for k in 0..n - 1 {
        x[k + 1] = p.q;
    }
    let backward = |x: &[f64], y: &mut [f64]| {
        for k in (0..n - 1).rev() {
            let yn = y[k + 1];
            y[k] = match word[k] {
                Branch::R1 => yn / s,
                Branch::R5 => (yn + s - 1.0) / s,
                Branch::R3 => p.r3_y0 + (1.0 - yn) / s,
                Branch::R4Lo | Branch::R4Up => p.t + (x[k + 1] - p.q) / s,
            };
        }
    };
    backward(&x, &mut y);
    for _ in 0..200 {
        let mut change: f64 = 0.0;
        for k in 0..n - 1 {
            let xn = match word[k] {
                Branch::R1 => l * x[k],
                Branch::R5 => l * x[k] + 1.0 - l,
                Branch::R3 => p.r3_a - l * x[k],
                b => {
                    let w = ((y[k + 1] + l * x[k]) / p.c).max(0.0).sqrt();
                    if b == Branch::R4Lo {
                        p.q - w
                    } else {
                        p.q + w
                    }
                }
            };
            change = change.max(rel_change(xn, x[k + 1]));
            x[k + 1] = xn;
        }
        let old = y.clone();
        backward(&x, &mut y);
        for k in 0..n {
            change = change.max(rel_change(old[k], y[k]));
        }
        if change <= 1e-15 {
            break;
        }
    }
    let points: Vec<Point> = x.iter().zip(&y).map(|(&a, &b)| Point::new(a, b)).collect();
    verify(p, word, &points)?;
    Ok(Orbit { points, branches: word.to_vec(), origin })
}

fn verify(p: &MapParams, word: &[Branch], points: &[Point]) -> Result<()> {
    let tol = 1e-13;
    for (k, (&b, &z)) in word.iter().zip(points).enumerate() {
        if !(z.x >= -tol && z.x <= 1.0 + tol) || !z.is_finite() {
            return Err(Error::Builder(format!("point {k} outside the square")));
        }
        if strip_distance(p, b, z.y) > tol * (1.0 + p.t) {
            return Err(Error::Builder(format!("point {k} not in strip of {b:?} (y = {})", z.y)));
        }
        if k + 1 < points.len() && b.is_r4() {
            let w = points[k + 1].x - p.q;
            if w.abs() > p.w_max * (1.0 + 1e-12) {
                return Err(Error::Builder(format!("wing overflow at step {k} (|w| = {})", w.abs())));
            }
        }
    }
    Ok(())
}

/// Branch words of a full-shift symbol sequence. `symbols[k]` is the band
/// of the `k`-th point; `tail` is the symbol following the last one.
/// Returns the branch of every point except the first, which is unknown
/// from the symbols: the returned vector has `symbols.len()` entries where
/// entry `k` is the branch of point `k` (`k + 1` and `k + 2` symbols).
pub fn branches_from_symbols(symbols: &[u8], tail: u8) -> Vec<Branch> {
    let n = symbols.len();
    let get = |i: usize| if i < n { symbols[i] } else { tail };
    (0..n).map(|k| Branch::from_symbols(get(k + 1), get(k + 2))).collect()
}

/// Point coded by the bi-infinite sequence `…0 0 symbols 0 0…`, with
/// `symbols[center]` at time zero.
pub fn theta_point(p: &MapParams, symbols: &[u8], center: usize) -> Result<Point> {
    let pad = 2;
    let mut seq = vec![0u8; pad];
    seq.extend_from_slice(symbols);
    seq.extend(std::iter::repeat(0u8).take(pad));
    let word = branches_from_symbols(&seq, 0);
    let orbit = build_orbit(p, &word, center + pad, 0.0, 0.0)?;
    Ok(orbit.center())
}

/// Same as [`theta_point`] but returns the formal solution even when a
/// parabola wing overflows R4, together with a flag.
pub fn theta_point_lenient(p: &MapParams, symbols: &[u8], center: usize) -> (Point, bool) {
    match theta_point(p, symbols, center) {
        Ok(pt) => (pt, false),
        Err(_) => {
            let mut q = *p;
            q.w_max = 1.0;
            let pt = theta_point(&q, symbols, center).unwrap_or(Point::new(f64::NAN, f64::NAN));
            (pt, true)
        }
    }
}

/// Random admissible branch word of length `len`. `p_stay` is the
/// probability of remaining in R1 from R1; R1 runs are capped at `max_run`.
pub fn random_branch_word<R: Rng>(rng: &mut R, len: usize, p_stay: f64, max_run: usize) -> Vec<Branch> {
    let mut word = Vec::with_capacity(len);
    let mut cur = Branch::ALL[rng.gen_range(0..5)];
    let mut run = 0;
    for _ in 0..len {
        word.push(cur);
        run = if cur == Branch::R1 { run + 1 } else { 0 };
        cur = match cur {
            Branch::R4Lo | Branch::R4Up => Branch::R1,
            Branch::R3 | Branch::R5 => [Branch::R3, Branch::R4Lo, Branch::R4Up, Branch::R5][rng.gen_range(0..4)],
            Branch::R1 => {
                if run < max_run && rng.gen::<f64>() < p_stay {
                    Branch::R1
                } else {
                    [Branch::R3, Branch::R4Lo, Branch::R4Up, Branch::R5][rng.gen_range(0..4)]
                }
            }
        };
    }
    word
}

/// Builds an orbit from a word, using a generic start abscissa and the
/// midpoint of the last strip.
pub fn build_generic(p: &MapParams, word: &[Branch], origin: usize) -> Result<Orbit> {
    let last = *word.last().ok_or_else(|| Error::Builder("empty word".into()))?;
    build_orbit(p, word, origin, 0.5, strip_mid(p, last))
}

/// Random orbit of `2 * half + 1` points centered at index `half`.
pub fn random_orbit<R: Rng>(p: &MapParams, rng: &mut R, half: usize, p_stay: f64) -> Result<Orbit> {
    let word = random_branch_word(rng, 2 * half + 1, p_stay, 40);
    build_generic(p, &word, half)
}

/// Consistency of an orbit with the forward formulas, measured in the
/// horizontal coordinate (exact for well-built orbits).
pub fn forward_defect(p: &MapParams, orbit: &Orbit) -> f64 {
    (0..orbit.len() - 1)
        .map(|i| (apply_branch(p, orbit.branches[i], orbit.points[i]).x - orbit.points[i + 1].x).abs())
        .fold(0.0, f64::max)
}

/// Checks that each point is classified into its branch (up to the
/// `y = t` side of R4 at the fold).
pub fn classification_agrees(p: &MapParams, orbit: &Orbit) -> bool {
    orbit.points.iter().zip(&orbit.branches).all(|(&z, &b)| match branch_of(p, z) {
        Some(c) => c == b || (c.is_r4() && b.is_r4() && (z.y - p.t).abs() < 1e-12),
        None => false,
    })
}
