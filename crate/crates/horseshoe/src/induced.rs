//! The induced map F, escape and approach times, polygonal us-balls,
//! kergodic charts, distortion probes and the u-crossing certificates.
//!
//! Everything that works near the tangency takes an [`Orbit`] from the
//! builder and moves offsets along it, so that F̂_M(0) = 0 holds exactly and
//! the wing coordinate is never recomputed from a rounded ordinate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_core::builder::Orbit;
use crate::map_core::{
    apply, apply_branch, apply_inverse, branch_of, in_a, inverse_branch_of, offset_backward_wing, offset_forward_wing, Branch,
    Certificate, Constant, MapParams, Mat2, Point,
};
use crate::splitting::{direction_field_on, orbit_jacobian, orbit_length_scale, orbit_wing, sample_return_orbit, SplitFrame};

/// Orbit depth used for frames in this module.
pub const FRAME_DEPTH: usize = 30;
const FRAME_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InducedCase {
    /// `M ∈ R3 ∪ R5`: F = f.
    Linear,
    /// `M ∈ R4 ∩ (R3′ ∪ R5′)`: F = f.
    Wing,
    /// `M ∈ A`, escaping into R3 or R5 at the escape time n: F = fⁿ.
    Escape,
    /// `M ∈ A`, escaping into R4 at the escape time n: F = fⁿ⁺¹.
    EscapeThroughWing,
    /// `M ∈ A` on the bottom side: F(M) = (0,0).
    BottomToOrigin,
    /// F((0,0)) = (0,0).
    Origin,
}

/// One step of F. `k` is the number of f-steps, 0 for the two cases that
/// send a point to the origin by convention. `extended` marks points outside
/// the domain of the five cases that are handled by the nearest rule
/// (R1 ∩ (R3′ ∪ R5′) by the escape rule, R4 ∩ (R1′ ∪ R4′) by F = f).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InducedStep {
    pub source: Point,
    pub target: Point,
    pub k: usize,
    pub case: InducedCase,
    pub extended: bool,
}

fn r1_check(p: &MapParams, m: Point) -> Result<()> {
    if m.x == p.q && m.y == 0.0 {
        return Err(Error::TangencyOrbit);
    }
    if branch_of(p, m) != Some(Branch::R1) {
        return Err(Error::Precondition("M in R1"));
    }
    Ok(())
}

fn tangency_check(p: &MapParams, m: Point) -> Result<()> {
    if m.x == p.q && m.y == 0.0 {
        return Err(Error::TangencyOrbit);
    }
    if !in_a(p, m) {
        return Err(Error::Precondition("M in A"));
    }
    Ok(())
}

/// Smallest `n >= 1` with `fⁿ(M) ∉ R1`; `None` on the bottom side, which
/// never leaves R1. Defined on all of R1, A being the case of interest.
pub fn escape_time(p: &MapParams, m: Point) -> Result<Option<usize>> {
    r1_check(p, m)?;
    if m.y == 0.0 {
        return Ok(None);
    }
    let mut y = m.y;
    let mut n = 0;
    loop {
        y *= p.sigma;
        n += 1;
        if y > p.r1_top() {
            return Ok(Some(n));
        }
    }
}

/// Smallest `n >= 1` with `f⁻ⁿ(M) ∉ R1′`; `None` if the backward orbit
/// stays in R1′ (only the left side does).
pub fn approach_time(p: &MapParams, m: Point) -> Result<Option<usize>> {
    r1_check(p, m)?;
    let mut z = m;
    for n in 1..10_000 {
        z = apply_inverse(p, z).ok_or(Error::OrbitEscapes { direction: "backward", step: n - 1 })?;
        if z.x > p.lambda {
            return Ok(Some(n));
        }
        if z.x == 0.0 {
            return Ok(None);
        }
    }
    Ok(None)
}

/// The two quantities `σ^(n1-1) c l²` and `λ^(-n2+1) c l²`, at least 1/3 at
/// every point of A under the sufficient conditions.
pub fn phase_bounds(p: &MapParams, l: f64, n1: usize, n2: usize) -> (f64, f64) {
    let l2 = l * l;
    (p.sigma.powi(n1 as i32 - 1) * p.c * l2, p.lambda.powi(1 - n2 as i32) * p.c * l2)
}

/// Escape time of `orbit.points[i]` read from the branch word.
pub fn escape_time_on(orbit: &Orbit, i: usize) -> Option<usize> {
    (1..orbit.len() - i).find(|&j| orbit.branches[i + j] != Branch::R1)
}

/// Approach time of `orbit.points[i]` read from the orbit abscissas.
pub fn approach_time_on(p: &MapParams, orbit: &Orbit, i: usize) -> Option<usize> {
    (1..=i).find(|&j| orbit.points[i - j].x > p.lambda)
}

/// F at a point by direct iteration of f.
pub fn induced_map(p: &MapParams, m: Point) -> Result<InducedStep> {
    let origin = Point::new(0.0, 0.0);
    let step = |target, k, case, extended| Ok(InducedStep { source: m, target, k, case, extended });
    if m == origin {
        return step(origin, 0, InducedCase::Origin, false);
    }
    let b = branch_of(p, m).ok_or(Error::OutOfDomain)?;
    match b {
        Branch::R3 | Branch::R5 => step(apply_branch(p, b, m), 1, InducedCase::Linear, false),
        Branch::R4Lo | Branch::R4Up => {
            let pre = inverse_branch_of(p, m);
            let extended = !matches!(pre, Some(Branch::R3) | Some(Branch::R5));
            step(apply_branch(p, b, m), 1, InducedCase::Wing, extended)
        }
        Branch::R1 => {
            let a = in_a(p, m);
            if !a {
                if m.x <= p.lambda || !matches!(inverse_branch_of(p, m), Some(Branch::R3) | Some(Branch::R5)) {
                    return Err(Error::OutOfDomain);
                }
            } else if m.y == 0.0 {
                return step(origin, 0, InducedCase::BottomToOrigin, false);
            }
            let mut z = m;
            let mut n = 0;
            while z.y <= p.r1_top() {
                if z.y == 0.0 {
                    return Err(Error::OutOfDomain);
                }
                z = apply_branch(p, Branch::R1, z);
                n += 1;
            }
            match branch_of(p, z) {
                Some(Branch::R3) | Some(Branch::R5) => step(z, n, InducedCase::Escape, !a),
                Some(w) if w.is_r4() => step(apply_branch(p, w, z), n + 1, InducedCase::EscapeThroughWing, !a),
                _ => Err(Error::OrbitEscapes { direction: "forward", step: n }),
            }
        }
    }
}

/// Number of f-steps of F from `orbit.points[i]`, read from the branch
/// word, or `None` if the orbit ends first.
pub fn induced_length(p: &MapParams, orbit: &Orbit, i: usize) -> Option<usize> {
    match orbit.branches[i] {
        Branch::R3 | Branch::R5 | Branch::R4Lo | Branch::R4Up => (i + 1 < orbit.len()).then_some(1),
        Branch::R1 => {
            if !in_a(p, orbit.points[i]) && !(i > 0 && matches!(orbit.branches[i - 1], Branch::R3 | Branch::R5)) {
                return None;
            }
            let n = (1..orbit.len() - i).find(|&j| orbit.branches[i + j] != Branch::R1)?;
            let k = if orbit.branches[i + n].is_r4() { n + 1 } else { n };
            (i + k < orbit.len()).then_some(k)
        }
    }
}

/// Indices of the F-orbit of `orbit.points[start]` within the segment.
pub fn induced_indices(p: &MapParams, orbit: &Orbit, start: usize) -> Vec<usize> {
    let mut out = vec![start];
    let mut i = start;
    while let Some(k) = induced_length(p, orbit, i) {
        i += k;
        out.push(i);
    }
    out
}

/// Polygonal ball `center + a e_u + b e_s`, `|a| <= radius_u`, `|b| <= radius_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolygonalBall {
    pub center: Point,
    pub frame: SplitFrame,
    pub radius_u: f64,
    pub radius_s: f64,
}

impl PolygonalBall {
    /// Vertices counter-clockwise from the top right one.
    pub fn vertices(&self) -> [Point; 4] {
        let (u, s) = (self.radius_u * self.frame.e_u, self.radius_s * self.frame.e_s);
        [self.center + u + s, self.center + u - s, self.center - u - s, self.center - u + s]
    }

    /// Vertex positions relative to the center, in the same order.
    pub fn vertex_offsets(&self) -> [Point; 4] {
        let (u, s) = (self.radius_u * self.frame.e_u, self.radius_s * self.frame.e_s);
        [u + s, u - s, -u - s, -u + s]
    }

    pub fn contains_offset(&self, d: Point) -> bool {
        let c = self.frame.coords(d);
        c.x.abs() <= self.radius_u && c.y.abs() <= self.radius_s
    }
}

fn frame_at(p: &MapParams, orbit: &Orbit, i: usize) -> SplitFrame {
    direction_field_on(p, orbit, i, FRAME_DEPTH, FRAME_TOL)
}

/// `min(1/3, l(M_{-k}) |Df^k e_u(M_{-k})|)` for the last visit `M_{-k}` to
/// A within `FRAME_DEPTH` steps, if any.
fn t_u(p: &MapParams, orbit: &Orbit, i: usize) -> Option<f64> {
    let k = (1..=i.min(FRAME_DEPTH)).find(|&k| in_a(p, orbit.points[i - k]))?;
    let j = i - k;
    let mut v = frame_at(p, orbit, j).e_u;
    for m in j..i {
        v = orbit_jacobian(p, orbit, m).apply(v);
    }
    Some((orbit_length_scale(p, orbit, j) * v.norm()).min(1.0 / 3.0))
}

fn t_s(p: &MapParams, orbit: &Orbit, i: usize) -> Option<f64> {
    let max = (orbit.len() - 1 - i).min(FRAME_DEPTH);
    let k = (1..=max).find(|&k| in_a(p, orbit.points[i + k]))?;
    let mut v = frame_at(p, orbit, i + k).e_s;
    for m in (i..i + k).rev() {
        v = crate::splitting::orbit_inverse_jacobian(p, orbit, m).apply(v);
    }
    Some((orbit_length_scale(p, orbit, i + k) * v.norm()).min(1.0 / 3.0))
}

/// The us-ball `B^us(M, ρ)` at `orbit.points[i]` for the constant `c3`.
/// Visits to A are searched within `FRAME_DEPTH` steps of the orbit.
pub fn us_ball(p: &MapParams, orbit: &Orbit, i: usize, rho: f64, c3: f64) -> Result<PolygonalBall> {
    let m = orbit.points[i];
    if m.x == p.q && m.y == 0.0 {
        return Err(Error::TangencyOrbit);
    }
    let frame = frame_at(p, orbit, i);
    let (ru, rs) = if in_a(p, m) {
        let l = orbit_length_scale(p, orbit, i);
        (rho * c3 * l, rho * c3 * l)
    } else {
        let third = 1.0 / 3.0;
        (rho * c3 * t_u(p, orbit, i).unwrap_or(third), rho * c3 * t_s(p, orbit, i).unwrap_or(third))
    };
    if !(ru > 0.0 && rs > 0.0) {
        return Err(Error::TangencyOrbit);
    }
    Ok(PolygonalBall { center: m, frame, radius_u: ru, radius_s: rs })
}

/// Kergodic chart `Φ_M(ξ) = M + l(M)(ξ_u e_u + ξ_s e_s)` with its domain
/// `|ξ_u| <= domain_u`, `|ξ_s| <= domain_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartFrame {
    pub m: Point,
    pub frame: SplitFrame,
    pub l: f64,
    pub domain_u: f64,
    pub domain_s: f64,
}

impl ChartFrame {
    pub fn from_ball(ball: &PolygonalBall, l: f64) -> ChartFrame {
        ChartFrame { m: ball.center, frame: ball.frame, l, domain_u: ball.radius_u / l, domain_s: ball.radius_s / l }
    }

    /// `Φ_M(ξ) - M`.
    pub fn offset(&self, xi: Point) -> Point {
        self.l * (xi.x * self.frame.e_u + xi.y * self.frame.e_s)
    }

    pub fn phi(&self, xi: Point) -> Point {
        self.m + self.offset(xi)
    }

    /// `Φ_M⁻¹(M + d)`.
    pub fn coords(&self, d: Point) -> Point {
        let c = self.frame.coords(d);
        Point::new(c.x / self.l, c.y / self.l)
    }

    pub fn in_domain(&self, xi: Point) -> bool {
        xi.x.abs() <= self.domain_u * (1.0 + 1e-12) && xi.y.abs() <= self.domain_s * (1.0 + 1e-12)
    }

    /// Matrix of `DΦ_M`.
    pub fn matrix(&self) -> Mat2 {
        let b = self.frame.basis();
        Mat2::new(self.l * b.a, self.l * b.b, self.l * b.c, self.l * b.d)
    }
}

/// Chart at `orbit.points[i]` with domain `Φ_M⁻¹(B^us(M, ρ))`.
pub fn chart(p: &MapParams, orbit: &Orbit, i: usize, rho: f64, c3: f64) -> Result<ChartFrame> {
    let ball = us_ball(p, orbit, i, rho, c3)?;
    Ok(ChartFrame::from_ball(&ball, orbit_length_scale(p, orbit, i)))
}

/// The kergodic map `F̂_M = Φ_{F(M)}⁻¹ ∘ F ∘ Φ_M` for one step of F along
/// an orbit, stored as the branch sequence and the image wing coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KergodicMap {
    pub from: ChartFrame,
    pub to: ChartFrame,
    pub k: usize,
    pub branches: Vec<Branch>,
    pub wings: Vec<f64>,
}

impl KergodicMap {
    pub fn new(p: &MapParams, orbit: &Orbit, i: usize, rho: f64, c3: f64) -> Result<KergodicMap> {
        let k = induced_length(p, orbit, i).ok_or(Error::NoReturn(orbit.len() - i))?;
        let from = chart(p, orbit, i, rho, c3)?;
        let to = chart(p, orbit, i + k, rho, c3)?;
        let branches = orbit.branches[i..i + k].to_vec();
        let wings = (i..i + k).map(|j| orbit_wing(p, orbit, j + 1).unwrap_or(0.0)).collect();
        Ok(KergodicMap { from, to, k, branches, wings })
    }

    /// Offset of `F(M + d)` from `F(M)`.
    pub fn forward_offset(&self, p: &MapParams, d: Point) -> Point {
        self.branches.iter().zip(&self.wings).fold(d, |d, (&b, &w)| offset_forward_wing(p, b, w, d))
    }

    pub fn backward_offset(&self, p: &MapParams, d: Point) -> Point {
        self.branches.iter().zip(&self.wings).rev().fold(d, |d, (&b, &w)| offset_backward_wing(p, b, w, d))
    }

    pub fn apply(&self, p: &MapParams, xi: Point) -> Point {
        self.to.coords(self.forward_offset(p, self.from.offset(xi)))
    }

    pub fn apply_inverse(&self, p: &MapParams, eta: Point) -> Point {
        self.from.coords(self.backward_offset(p, self.to.offset(eta)))
    }

    /// `DF` at `M + d` in the ambient coordinates.
    pub fn ambient_derivative(&self, p: &MapParams, d: Point) -> Mat2 {
        let mut j = Mat2::identity();
        let mut d = d;
        for (&b, &w) in self.branches.iter().zip(&self.wings) {
            let next = offset_forward_wing(p, b, w, d);
            let step = if b.is_r4() {
                Mat2::new(0.0, p.sigma, -p.lambda, 2.0 * p.c * (w + next.x) * p.sigma)
            } else {
                crate::map_core::jacobian_branch(p, b, Point::new(0.0, 0.0))
            };
            j = step.mul(&j);
            d = next;
        }
        j
    }

    /// `DF̂_M⁻¹` at `F̂_M(0)`, as the product of inverse step Jacobians. The
    /// stable side is only well conditioned in this direction.
    pub fn inverse_derivative(&self, p: &MapParams) -> Mat2 {
        let mut j = Mat2::identity();
        let mut d = Point::new(0.0, 0.0);
        for (&b, &w) in self.branches.iter().zip(&self.wings) {
            let next = offset_forward_wing(p, b, w, d);
            let step = if b.is_r4() {
                Mat2::new(0.0, p.sigma, -p.lambda, 2.0 * p.c * (w + next.x) * p.sigma)
            } else {
                crate::map_core::jacobian_branch(p, b, Point::new(0.0, 0.0))
            };
            j = j.mul(&step.inverse().expect("branch Jacobians are invertible"));
            d = next;
        }
        let from_inv = self.from.matrix().inverse().expect("chart frames are non-degenerate");
        from_inv.mul(&j).mul(&self.to.matrix())
    }

    /// `DF̂_M` at `ξ` in chart coordinates.
    pub fn derivative(&self, p: &MapParams, xi: Point) -> Mat2 {
        let j = self.ambient_derivative(p, self.from.offset(xi));
        let to_inv = self.to.matrix().inverse().expect("chart frames are non-degenerate");
        to_inv.mul(&j).mul(&self.from.matrix())
    }
}

fn max_norm(v: Point) -> f64 {
    v.x.abs().max(v.y.abs())
}

/// Operator norm for the max norm on both sides.
fn max_operator_norm(m: &Mat2) -> f64 {
    (m.a.abs() + m.b.abs()).max(m.c.abs() + m.d.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    /// Largest `|F̂(ξ) - F̂(ξ′) - DF̂(0)(ξ - ξ′)| / |DF̂(0)(ξ - ξ′)|`.
    pub worst_ratio: f64,
    /// Largest `l(F(M)) |DF_ξ - DF_ξ′|_{F(M)} / |F(ξ) - F(ξ′)|_{F(M)}`.
    pub c5_est: f64,
    pub pairs_used: usize,
    pub component_cells: usize,
}

/// Distortion of `F̂_M` over the connected component of
/// `B_M(0, ρ) ∩ F̂⁻¹(B_{F(M)}(0, ρ))` containing 0, found by flood fill on a
/// `grid × grid` lattice of the chart domain.
pub fn distortion_probe(p: &MapParams, km: &KergodicMap, grid: usize, pairs: usize, seed: u64) -> Result<DistortionReport> {
    let g = grid.max(3) | 1;
    let cell = |a: usize, b: usize| {
        let t = |i: usize| 2.0 * i as f64 / (g - 1) as f64 - 1.0;
        Point::new(t(a) * km.from.domain_u, t(b) * km.from.domain_s)
    };
    let inside: Vec<bool> = (0..g * g).map(|n| km.to.in_domain(km.apply(p, cell(n % g, n / g)))).collect();
    let mut comp = vec![false; g * g];
    let start = (g / 2) * g + g / 2;
    let mut stack = vec![start];
    comp[start] = inside[start];
    if !inside[start] {
        return Err(Error::InsufficientSamples("chart center not in the overlap".into()));
    }
    while let Some(n) = stack.pop() {
        let (a, b) = ((n % g) as isize, (n / g) as isize);
        for (da, db) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (x, y) = (a + da, b + db);
            if x < 0 || y < 0 || x >= g as isize || y >= g as isize {
                continue;
            }
            let m = y as usize * g + x as usize;
            if inside[m] && !comp[m] {
                comp[m] = true;
                stack.push(m);
            }
        }
    }
    let cells: Vec<Point> = (0..g * g).filter(|&n| comp[n]).map(|n| cell(n % g, n / g)).collect();
    if cells.len() < 2 {
        return Err(Error::InsufficientSamples("degenerate overlap component".into()));
    }
    let d0 = km.derivative(p, Point::new(0.0, 0.0));
    let basis_to = km.to.frame.basis().inverse().expect("non-degenerate frame");
    let basis_from = km.from.frame.basis();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut c5, mut used) = (0.0f64, 0.0f64, 0);
    for _ in 0..pairs {
        let a = cells[rng.gen_range(0..cells.len())];
        let b = cells[rng.gen_range(0..cells.len())];
        if a == b {
            continue;
        }
        let (fa, fb) = (km.apply(p, a), km.apply(p, b));
        let lin = d0.apply(a - b);
        let den = max_norm(lin);
        if den == 0.0 {
            continue;
        }
        worst = worst.max(max_norm(fa - fb - lin) / den);
        let dj = km.ambient_derivative(p, km.from.offset(a)).sub(&km.ambient_derivative(p, km.from.offset(b)));
        let op = max_operator_norm(&basis_to.mul(&dj).mul(&basis_from));
        let img = km.to.l * max_norm(fa - fb);
        if img > 0.0 {
            c5 = c5.max(km.to.l * op / img);
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::InsufficientSamples("no valid sample pairs".into()));
    }
    Ok(DistortionReport { worst_ratio: worst, c5_est: c5, pairs_used: used, component_cells: cells.len() })
}

/// Values of `ΔK(u, v) = c u (2w + u) - v` (the parabola constant relative
/// to a reference point with wing coordinate `w`) along the segment
/// `a + s (b - a)`, as a quadratic `α s² + β s + γ`.
fn dk_quadratic(p: &MapParams, w: f64, a: Point, b: Point) -> (f64, f64, f64) {
    let d = b - a;
    let alpha = p.c * d.x * d.x;
    let beta = p.c * d.x * (2.0 * w + 2.0 * a.x) - d.y;
    let gamma = p.c * a.x * (2.0 * w + a.x) - a.y;
    (alpha, beta, gamma)
}

/// Relative parabola constant of the offset `d`.
pub fn delta_k(p: &MapParams, w: f64, d: Point) -> f64 {
    p.c * d.x * (2.0 * w + d.x) - d.y
}

/// Parameters `s ∈ [0, 1]` where the local parabola `ΔK = dk` meets the
/// segment `[a, b]`. Grazing contact counts as a crossing.
pub fn parabola_segment_roots(p: &MapParams, w: f64, dk: f64, a: Point, b: Point) -> Vec<f64> {
    let (al, be, ga) = dk_quadratic(p, w, a, b);
    let ga = ga - dk;
    let scale = al.abs() + be.abs() + ga.abs() + dk.abs();
    let tol = 1e-12;
    let mut roots = Vec::new();
    if al.abs() <= 1e-14 * scale {
        if be != 0.0 {
            roots.push(-ga / be);
        }
    } else {
        let disc = be * be - 4.0 * al * ga;
        if disc < -tol * (be * be + (4.0 * al * ga).abs()) {
            return roots;
        }
        let sq = disc.max(0.0).sqrt();
        let q = -0.5 * (be + be.signum() * sq);
        if q != 0.0 {
            roots.push(q / al);
            roots.push(ga / q);
        } else {
            roots.push(-be / (2.0 * al));
        }
    }
    roots.into_iter().filter(|s| (-tol..=1.0 + tol).contains(s)).map(|s| s.clamp(0.0, 1.0)).collect()
}

fn crosses(p: &MapParams, w: f64, dk: f64, a: Point, b: Point) -> bool {
    !parabola_segment_roots(p, w, dk, a, b).is_empty()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossReport {
    pub m: Point,
    pub rho: f64,
    pub c0_ok: bool,
    pub eps0_ok: bool,
    pub eta_ok: bool,
    pub n_return: usize,
}

impl CrossReport {
    pub fn passes(&self) -> bool {
        self.c0_ok && self.eps0_ok && self.eta_ok
    }

    pub fn csv_header() -> &'static str {
        "x,y,rho,c0_ok,eps0_ok,eta_ok,n_return"
    }

    pub fn csv_row(&self) -> String {
        format!("{:e},{:e},{},{},{},{},{}", self.m.x, self.m.y, self.rho, self.c0_ok, self.eps0_ok, self.eta_ok, self.n_return)
    }
}

/// Precomputed data of a sample point of A with a first return.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingSample {
    pub m: Point,
    pub w: f64,
    pub frame: SplitFrame,
    pub n: usize,
    pub w_n: f64,
    pub frame_n: SplitFrame,
    /// Absolute x and y multipliers of the `n - 1` linear steps.
    pub lx: f64,
    pub ly: f64,
}

impl CrossingSample {
    pub fn new(p: &MapParams, orbit: &Orbit, i: usize) -> Result<CrossingSample> {
        let m = orbit.points[i];
        tangency_check(p, m)?;
        let w = orbit_wing(p, orbit, i).unwrap_or(m.x - p.q);
        let n = (1..orbit.len() - i).find(|&k| in_a(p, orbit.points[i + k])).ok_or(Error::NoReturn(orbit.len() - i))?;
        if !orbit.branches[i + n - 1].is_r4() {
            return Err(Error::Precondition("first return through R4"));
        }
        let w_n = orbit_wing(p, orbit, i + n).unwrap();
        let (mut lx, mut ly) = (1.0, 1.0);
        for j in i..i + n - 1 {
            if !orbit.branches[j].is_linear() {
                return Err(Error::Precondition("linear steps before the return"));
            }
            lx *= p.lambda;
            ly *= p.sigma;
        }
        Ok(CrossingSample {
            m,
            w,
            frame: frame_at(p, orbit, i),
            n,
            w_n,
            frame_n: frame_at(p, orbit, i + n),
            lx,
            ly,
        })
    }

    /// Every local parabola through `S1(l̃)(1/4)` crosses `S0(l̃)` and `S2(l̃)`.
    pub fn c0_ok(&self, p: &MapParams, lt: f64) -> bool {
        let (eu, es) = (self.frame.e_u, self.frame.e_s);
        let (top, bot) = (lt * eu, -lt * eu);
        [0.25 * lt * es, -0.25 * lt * es].iter().all(|&v| {
            let dk = delta_k(p, self.w, v);
            crosses(p, self.w, dk, top - lt * es, top + lt * es) && crosses(p, self.w, dk, bot - lt * es, bot + lt * es)
        })
    }

    /// The local parabolas through the vertices of `B(M, ε0 l̃)` cross
    /// `S1(l̃)(1/4)`.
    pub fn eps0_ok(&self, p: &MapParams, lt: f64, eps0: f64) -> bool {
        let (eu, es) = (self.frame.e_u, self.frame.e_s);
        let r = eps0 * lt;
        let (a, b) = (-0.25 * lt * es, 0.25 * lt * es);
        [r * (eu + es), r * (eu - es), -r * (eu + es), -r * (eu - es)]
            .iter()
            .all(|&v| crosses(p, self.w, delta_k(p, self.w, v), a, b))
    }

    /// The image of the rectangle `R(M, l̃, ε0 l̃)` under the first return
    /// u-crosses `B(M′, l̃′)` and `B(M′, ε0 l̃′)` for the target `M′ = M_n`
    /// and the four extreme targets with `M_n` on a vertex of
    /// `B(M′, η ε0 ρ C0 l(M′))`. Targets use the frame of `M_n`.
    pub fn eta_ok(&self, p: &MapParams, rho_c0: f64, eps0: f64, eta: f64) -> bool {
        let lt = rho_c0 * self.w.abs();
        let (eu, es) = (self.frame.e_u, self.frame.e_s);
        let v = [lt * (eu + es), lt * (eu - es), -lt * (eu + es), -lt * (eu - es)];
        let xs = v.iter().map(|z| z.x);
        let d_h = xs.clone().fold(f64::NEG_INFINITY, f64::max) - xs.fold(f64::INFINITY, f64::min);
        let d_v = eps0 * ((v[0].y - v[2].y).abs()).min((v[1].y - v[3].y).abs());
        let dk_side = p.lambda * self.lx * 0.5 * d_h;
        let u_half = p.sigma * self.ly * 0.5 * d_v;
        let (fu, fs) = (self.frame_n.e_u, self.frame_n.e_s);
        let r_eta = eta * eps0 * rho_c0 * self.w_n.abs();
        let targets = [Point::new(0.0, 0.0), r_eta * (fu + fs), r_eta * (fu - fs), -r_eta * (fu + fs), -r_eta * (fu - fs)];
        targets.iter().all(|&t| {
            let l_target = (self.w_n + t.x).abs();
            [rho_c0 * l_target, eps0 * rho_c0 * l_target].iter().all(|&r| {
                let sides = [(t + r * fu - r * fs, t + r * fu + r * fs), (t - r * fu - r * fs, t - r * fu + r * fs)];
                [dk_side, -dk_side].iter().all(|&dk| {
                    sides.iter().all(|&(a, b)| {
                        let roots = parabola_segment_roots(p, self.w_n, dk, a, b);
                        !roots.is_empty() && roots.iter().any(|&s| (a.x + s * (b.x - a.x)).abs() <= u_half)
                    })
                })
            })
        })
    }

    pub fn report(&self, p: &MapParams, rho: f64, cert: &Certificate) -> CrossReport {
        let rho_c0 = rho * cert.c0.value;
        let lt = rho_c0 * self.w.abs();
        CrossReport {
            m: self.m,
            rho,
            c0_ok: self.c0_ok(p, lt),
            eps0_ok: self.eps0_ok(p, lt, cert.eps0.value),
            eta_ok: self.eta_ok(p, rho_c0, cert.eps0.value, cert.eta.value),
            n_return: self.n,
        }
    }
}

/// The three u-crossing checks at `orbit.points[i] ∈ A`.
pub fn u_crossing_certificate(p: &MapParams, orbit: &Orbit, i: usize, rho: f64, cert: &Certificate) -> Result<CrossReport> {
    Ok(CrossingSample::new(p, orbit, i)?.report(p, rho, cert))
}

/// Largest value in `[1e-8, 1]` (bisection in log scale) for which `ok`
/// holds, assuming `ok` is monotone.
fn bisect_largest(name: &str, ok: impl Fn(f64) -> bool) -> Result<f64> {
    let (mut lo, mut hi) = (1e-8f64, 1.0f64);
    if ok(hi) {
        return Ok(hi);
    }
    if !ok(lo) {
        return Err(Error::SearchFailed(format!("{name}: no passing value in [1e-8, 1]")));
    }
    for _ in 0..48 {
        let mid = (lo * hi).sqrt();
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Samples of points of A with first returns, each paired with its orbit.
pub fn crossing_samples(p: &MapParams, count: usize, seed: u64, max_middle: usize) -> Vec<(Orbit, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 100 * count {
        attempts += 1;
        if let Ok(s) = sample_return_orbit(p, &mut rng, FRAME_DEPTH, max_middle) {
            out.push(s);
        }
    }
    out
}

/// Threshold on the distortion ratio of property 3.1 that fixes `ρ1`.
pub const DISTORTION_THRESHOLD: f64 = 0.1;

/// Calibrates `C0`, `ε0`, `η`, `ρ1`, `C3`, `C5` and `χ1` on `budget` seeded
/// samples of A. The remaining constants keep their closed-form or initial
/// values.
pub fn calibrate_certificate(p: &MapParams, budget: usize, seed: u64) -> Result<Certificate> {
    let mut cert = Certificate::initial(p);
    let orbits = crossing_samples(p, budget, seed, 2);
    let samples: Vec<CrossingSample> = orbits.par_iter().filter_map(|(o, i)| CrossingSample::new(p, o, *i).ok()).collect();
    if samples.is_empty() {
        return Err(Error::InsufficientSamples("no crossing samples".into()));
    }
    let c0 = bisect_largest("C0", |c0| samples.par_iter().all(|s| s.c0_ok(p, c0 * s.w.abs())))?;
    let eps0 = bisect_largest("eps0", |e| samples.par_iter().all(|s| s.eps0_ok(p, c0 * s.w.abs(), e)))?;
    let eta = bisect_largest("eta", |h| samples.par_iter().all(|s| s.eta_ok(p, c0, eps0, h)))?;
    cert.c0 = Constant::estimated(c0);
    cert.eps0 = Constant::estimated(eps0);
    cert.eta = Constant::estimated(eta);

    let direct = crossing_samples(p, budget.min(200), seed ^ 0x5eed, 0);
    let maps = |c3: f64| -> Vec<KergodicMap> {
        direct.par_iter().filter_map(|(o, i)| KergodicMap::new(p, o, *i, 1.0, c3).ok()).collect()
    };
    let worst = |c3: f64| -> f64 {
        maps(c3)
            .par_iter()
            .enumerate()
            .filter_map(|(n, km)| distortion_probe(p, km, 17, 64, seed.wrapping_add(n as u64)).ok())
            .map(|r| r.worst_ratio)
            .reduce(|| 0.0, f64::max)
    };
    let rho1 = bisect_largest("rho1", |r| worst(r * c0) <= DISTORTION_THRESHOLD)?;
    let c3 = rho1 * c0;
    cert.rho1 = Constant::estimated(rho1);
    cert.c3 = Constant::estimated(c3);
    let c5 = maps(c3)
        .par_iter()
        .enumerate()
        .filter_map(|(n, km)| distortion_probe(p, km, 17, 64, seed.wrapping_add(n as u64)).ok())
        .map(|r| r.c5_est)
        .reduce(|| 0.0, f64::max);
    if c5 > 0.0 && c5.is_finite() {
        cert.c5 = Constant::estimated(c5);
    }
    cert.chi1 = Constant::estimated(estimate_chi1(p, &orbits));
    Ok(cert)
}

/// Empirical minimum of `‖v‖ / (l(M) |v|_M)` over sampled points of A and
/// 64 directions each.
pub fn estimate_chi1(p: &MapParams, orbits: &[(Orbit, usize)]) -> f64 {
    orbits
        .par_iter()
        .map(|(o, i)| {
            let f = frame_at(p, o, *i);
            (0..64)
                .map(|k| {
                    let a = std::f64::consts::PI * k as f64 / 64.0;
                    let v = Point::new(a.cos(), a.sin());
                    let c = f.coords(v);
                    v.norm() / (f.l * c.x.abs().max(c.y.abs()))
                })
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// F along an orbit agrees with direct iteration of f from its start.
pub fn induced_matches_iteration(p: &MapParams, m: Point, steps: usize) -> Result<f64> {
    let mut z = m;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let s = induced_map(p, z)?;
        let mut y = z;
        for _ in 0..s.k {
            y = apply(p, y).ok_or(Error::OrbitEscapes { direction: "forward", step: 0 })?;
        }
        if s.k > 0 {
            worst = worst.max(y.max_abs_diff(s.target));
        }
        z = s.target;
    }
    Ok(worst)
}
