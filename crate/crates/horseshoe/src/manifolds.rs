//! Local stable and unstable leaves by graph transform on the kergodic
//! maps, global leaves by iteration, the ε1-verticality of curves crossing
//! R4, the bracket of local leaves, mixing times and a non-expansive pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coding::{band_of, BandSet};
use crate::error::{Error, Result};
use crate::induced::{chart, induced_indices, induced_length, us_ball, ChartFrame, KergodicMap};
use crate::map_core::builder::{build_orbit, Orbit};
use crate::map_core::{
    apply_branch, apply_inverse_branch, branch_of, classify, inverse_branch_of, offset_backward_wing, offset_forward_wing,
    Branch, MapParams, Point, RegionLabel,
};
use crate::splitting::orbit_wing;

pub const DEFAULT_GRID: usize = 257;
pub const MAX_DEPTH: usize = 60;
pub const DEFAULT_TOL: f64 = 1e-10;
/// Smallest chart radius tried when the graph transform fails to be monotone.
pub const RHO_MIN: f64 = 1.0 / 1_048_576.0;
/// Slope bound of converged leaves in chart coordinates.
pub const LEAF_LIPSCHITZ: f64 = 1.0 / 3.0;
/// Default ε1 for the verticality checks.
pub const DEFAULT_EPS1: f64 = 0.1;
/// Segment length of resampled global leaves.
pub const SEGMENT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphAxis {
    /// `ξ_s = s(ξ_u)`, used for unstable leaves.
    UToS,
    /// `ξ_u = s(ξ_s)`, used for stable leaves.
    SToU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafKind {
    Stable,
    Unstable,
}

/// Graph over one chart axis, sampled on a uniform grid symmetric about 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipGraph {
    pub base: ChartFrame,
    pub axis: GraphAxis,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub lip_bound: f64,
}

fn uniform_grid(half: f64, n: usize) -> Vec<f64> {
    let m = (n / 2) as f64;
    (0..n).map(|i| if i == n / 2 { 0.0 } else { half * (i as f64 - m) / m }).collect()
}

fn lipschitz(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| ((v[1] - v[0]) / (g[1] - g[0])).abs())
        .fold(0.0, f64::max)
}

impl LipGraph {
    fn half_width_of(base: &ChartFrame, axis: GraphAxis) -> f64 {
        match axis {
            GraphAxis::UToS => base.domain_u,
            GraphAxis::SToU => base.domain_s,
        }
    }

    pub fn from_values(base: ChartFrame, axis: GraphAxis, grid: Vec<f64>, values: Vec<f64>) -> LipGraph {
        let lip_bound = lipschitz(&grid, &values);
        LipGraph { base, axis, grid, values, lip_bound }
    }

    pub fn zero(base: ChartFrame, axis: GraphAxis, n: usize) -> LipGraph {
        let grid = uniform_grid(Self::half_width_of(&base, axis), n);
        let values = vec![0.0; n];
        LipGraph::from_values(base, axis, grid, values)
    }

    /// Random graph through 0 with slopes uniform in `[-max_slope, max_slope]`.
    pub fn random<R: Rng>(base: ChartFrame, axis: GraphAxis, n: usize, max_slope: f64, rng: &mut R) -> LipGraph {
        let grid = uniform_grid(Self::half_width_of(&base, axis), n);
        let c = n / 2;
        let mut values = vec![0.0; n];
        for i in c + 1..n {
            values[i] = values[i - 1] + rng.gen_range(-max_slope..=max_slope) * (grid[i] - grid[i - 1]);
        }
        for i in (0..c).rev() {
            values[i] = values[i + 1] - rng.gen_range(-max_slope..=max_slope) * (grid[i + 1] - grid[i]);
        }
        LipGraph::from_values(base, axis, grid, values)
    }

    pub fn half_width(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// Linear interpolation, extended by the end slopes.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.grid.len();
        let i = match self.grid.binary_search_by(|g| g.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i.clamp(1, n - 1),
        };
        let (x0, x1) = (self.grid[i - 1], self.grid[i]);
        let (y0, y1) = (self.values[i - 1], self.values[i]);
        let slope = (y1 - y0) / (x1 - x0);
        // anchored at the nearer node, so that s(x) = s'(0) x holds to full
        // relative precision next to the center
        if (x - x0).abs() <= (x - x1).abs() {
            y0 + slope * (x - x0)
        } else {
            y1 + slope * (x - x1)
        }
    }

    pub fn value_at_zero(&self) -> f64 {
        self.values[self.grid.len() / 2]
    }

    pub fn sup_diff(&self, o: &LipGraph) -> f64 {
        if self.grid == o.grid {
            self.values.iter().zip(&o.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        } else {
            self.grid.iter().zip(&self.values).map(|(&x, &v)| (v - o.eval(x)).abs()).fold(0.0, f64::max)
        }
    }

    /// `sup_{x≠0} |s(x) - o(x)| / |x|`, the norm in which the graph transform
    /// contracts.
    pub fn ratio_diff(&self, o: &LipGraph) -> f64 {
        self.grid
            .iter()
            .zip(&self.values)
            .filter(|(&x, _)| x != 0.0)
            .map(|(&x, &v)| (v - o.eval(x)).abs() / x.abs())
            .fold(0.0, f64::max)
    }

    /// Chart coordinates `(ξ_u, ξ_s)` of the node `i`.
    pub fn chart_point(&self, i: usize) -> Point {
        match self.axis {
            GraphAxis::UToS => Point::new(self.grid[i], self.values[i]),
            GraphAxis::SToU => Point::new(self.values[i], self.grid[i]),
        }
    }

    /// Offsets from the chart center of all nodes.
    pub fn offsets(&self) -> Vec<Point> {
        (0..self.grid.len()).map(|i| self.base.offset(self.chart_point(i))).collect()
    }
}

/// Polyline leaf with its cumulative arclength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCurve {
    pub kind: LeafKind,
    pub points: Vec<Point>,
    pub arclength: Vec<f64>,
}

impl ManifoldCurve {
    pub fn new(kind: LeafKind, points: Vec<Point>) -> ManifoldCurve {
        let mut arclength = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for (i, z) in points.iter().enumerate() {
            if i > 0 {
                acc += z.dist(points[i - 1]);
            }
            arclength.push(acc);
        }
        ManifoldCurve { kind, points, arclength }
    }

    pub fn length(&self) -> f64 {
        self.arclength.last().copied().unwrap_or(0.0)
    }

    /// No two non-adjacent segments meet.
    pub fn is_simple(&self) -> bool {
        let n = self.points.len();
        for i in 0..n.saturating_sub(1) {
            for j in i + 2..n - 1 {
                if segment_intersection(self.points[i], self.points[i + 1], self.points[j], self.points[j + 1]).is_some() {
                    return false;
                }
            }
        }
        true
    }

    pub fn csv_header() -> &'static str {
        "idx,x,y,arclen"
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.points
            .iter()
            .zip(&self.arclength)
            .enumerate()
            .map(|(i, (z, a))| format!("{i},{:e},{:e},{:e}", z.x, z.y, a))
            .collect()
    }
}

fn in_square(z: Point, tol: f64) -> bool {
    z.x >= -tol && z.x <= 1.0 + tol && z.y >= -tol && z.y <= 1.0 + tol
}

/// Longest run of `points` inside the closed unit square that contains
/// index `center`.
fn clip_run(points: &[Point], center: usize, keep: impl Fn(usize, Point) -> bool) -> Vec<Point> {
    if !keep(center, points[center]) {
        return vec![points[center]];
    }
    let mut a = center;
    while a > 0 && keep(a - 1, points[a - 1]) {
        a -= 1;
    }
    let mut b = center;
    while b + 1 < points.len() && keep(b + 1, points[b + 1]) {
        b += 1;
    }
    points[a..=b].to_vec()
}

/// Number of samples used to confirm monotonicity on the preimage interval.
const MONOTONE_SAMPLES: usize = 1024;

fn bisect_to(img: &impl Fn(f64) -> Point, mut lo: f64, mut hi: f64, target_x: f64, increasing: bool) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (img(mid).x < target_x) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (img(lo).x - target_x).abs() <= (img(hi).x - target_x).abs() {
        lo
    } else {
        hi
    }
}

fn transform_along(
    map: impl Fn(Point) -> Point,
    s: &LipGraph,
    target: ChartFrame,
    axis: GraphAxis,
    out_half: f64,
) -> Result<LipGraph> {
    let n = s.grid.len();
    let half = s.half_width();
    let img = |a: f64| map(Point::new(a, s.eval(a)));
    let x0 = img(0.0).x;
    // far below any preimage radius met in practice, far above underflow
    let delta = half * 2f64.powi(-900);
    let increasing = img(delta).x > img(-delta).x;
    // preimage of [-out_half, out_half]: geometric walk from the center on
    // each side, then bisection in the last step
    let mut ends = [0.0; 2];
    for (k, side) in [-1.0, 1.0].into_iter().enumerate() {
        let want = if (side > 0.0) == increasing { out_half } else { -out_half };
        let past = |x: f64| if want > 0.0 { x >= want } else { x <= want };
        let (mut prev, mut a) = (0.0, delta);
        loop {
            let a_side = side * a.min(half);
            let x = img(a_side).x;
            if !x.is_finite() {
                return Err(Error::GraphTransform("image is not finite".into()));
            }
            if past(x) {
                ends[k] = bisect_to(&img, (side * prev).min(a_side), (side * prev).max(a_side), want, increasing);
                break;
            }
            if a >= half {
                return Err(Error::GraphTransform("image does not cover the target domain".into()));
            }
            prev = a.min(half);
            a *= 2.0;
        }
    }
    let (lo, hi) = (ends[0], ends[1]);
    let mut last = img(lo).x;
    for m in 1..=MONOTONE_SAMPLES {
        let x = img(lo + (hi - lo) * m as f64 / MONOTONE_SAMPLES as f64).x;
        if (x > last) != increasing || x == last {
            return Err(Error::GraphTransform("projection is not monotone".into()));
        }
        last = x;
    }
    let grid = uniform_grid(out_half, n);
    let values = grid
        .iter()
        .map(|&tx| if tx == 0.0 && x0 == 0.0 { img(0.0).y } else { img(bisect_to(&img, lo, hi, tx, increasing)).y })
        .collect();
    Ok(LipGraph::from_values(target, axis, grid, values))
}

/// One step of the graph transform. Unstable graphs live on `km.from` and
/// are pushed to `km.to`; stable graphs live on `km.to` and are pulled back
/// to `km.from` by the inverse kergodic map.
pub fn graph_transform(p: &MapParams, km: &KergodicMap, s: &LipGraph) -> Result<LipGraph> {
    match s.axis {
        GraphAxis::UToS => transform_along(|xi| km.apply(p, xi), s, km.to, GraphAxis::UToS, km.to.domain_u),
        GraphAxis::SToU => transform_along(
            |z| {
                let back = km.apply_inverse(p, Point::new(z.y, z.x));
                Point::new(back.y, back.x)
            },
            s,
            km.from,
            GraphAxis::SToU,
            km.from.domain_s,
        ),
    }
}

/// Parameters of the local leaf computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldOptions {
    pub rho: f64,
    pub c3: f64,
    pub tol: f64,
    pub grid: usize,
    pub max_depth: usize,
    /// Random Lipschitz-1 seed graph instead of the zero graph.
    pub seed: Option<u64>,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        ManifoldOptions { rho: 1.0, c3: 0.3, tol: DEFAULT_TOL, grid: DEFAULT_GRID, max_depth: MAX_DEPTH, seed: None }
    }
}

/// A local leaf: the plane curve, the chart graph when the point is in the
/// domain of the induced map, and convergence data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLeaf {
    pub kind: LeafKind,
    pub center: Point,
    pub graph: Option<LipGraph>,
    pub curve: ManifoldCurve,
    pub depth: usize,
    pub rho: f64,
    pub last_change: f64,
}

/// Longest chain of induced-map visits along the orbit that ends at `i`.
pub fn chain_to(p: &MapParams, orbit: &Orbit, i: usize) -> Vec<usize> {
    for s in 0..i {
        let c = induced_indices(p, orbit, s);
        if let Some(pos) = c.iter().position(|&j| j == i) {
            return c[..=pos].to_vec();
        }
    }
    vec![i]
}

fn seed_graph(base: ChartFrame, axis: GraphAxis, opts: &ManifoldOptions, salt: usize) -> LipGraph {
    match opts.seed {
        None => LipGraph::zero(base, axis, opts.grid),
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (salt as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            LipGraph::random(base, axis, opts.grid, 1.0, &mut rng)
        }
    }
}

/// Slope of the probe seed that bounds the seed dependence of a result.
const PROBE_SLOPE: f64 = 0.5;

fn pull_graph(p: &MapParams, kms: &[KergodicMap], axis: GraphAxis, d: usize, seed: LipGraph) -> Result<LipGraph> {
    let m = kms.len();
    let mut g = seed;
    match axis {
        GraphAxis::UToS => {
            for km in &kms[m - d..] {
                g = graph_transform(p, km, &g)?;
            }
        }
        GraphAxis::SToU => {
            for km in kms[..d].iter().rev() {
                g = graph_transform(p, km, &g)?;
            }
        }
    }
    Ok(g)
}

/// Fixed-point iteration of the graph transform along `kms`, seeded at
/// increasing depth until successive results agree within `tol` and the
/// result agrees within `tol / 2` with the one from a sloped probe seed.
/// The zero graph is invariant under linear steps, so the successive
/// change alone stalls on runs of R3 and R5.
fn iterate_graphs(p: &MapParams, kms: &[KergodicMap], axis: GraphAxis, opts: &ManifoldOptions) -> Result<(LipGraph, usize, f64)> {
    let m = kms.len();
    let target = match axis {
        GraphAxis::UToS => kms[m - 1].to,
        GraphAxis::SToU => kms[0].from,
    };
    let seed_base = |d: usize| match axis {
        GraphAxis::UToS => kms[m - d].from,
        GraphAxis::SToU => kms[d - 1].to,
    };
    let mut prev = seed_graph(target, axis, opts, 0);
    let mut last_change = f64::INFINITY;
    for d in 1..=m.min(opts.max_depth) {
        let g = pull_graph(p, kms, axis, d, seed_graph(seed_base(d), axis, opts, d))?;
        last_change = g.sup_diff(&prev);
        if last_change < opts.tol {
            let base = seed_base(d);
            let zero = LipGraph::zero(base, axis, opts.grid);
            let probe_values = zero.grid.iter().map(|x| PROBE_SLOPE * x).collect();
            let probe = LipGraph::from_values(base, axis, zero.grid, probe_values);
            let probe = pull_graph(p, kms, axis, d, probe)?;
            if g.sup_diff(&probe) < 0.5 * opts.tol {
                return Ok((g, d, last_change));
            }
        }
        prev = g;
    }
    Err(Error::NoConvergence { iterations: m.min(opts.max_depth), last_change })
}

fn kergodic_chain(p: &MapParams, orbit: &Orbit, chain: &[usize], rho: f64, c3: f64) -> Result<Vec<KergodicMap>> {
    chain[..chain.len() - 1].iter().map(|&j| KergodicMap::new(p, orbit, j, rho, c3)).collect()
}

fn leaf_from_graph(kind: LeafKind, g: LipGraph, depth: usize, rho: f64, last_change: f64) -> LocalLeaf {
    let m = g.base.m;
    let pts: Vec<Point> = g.offsets().into_iter().map(|d| m + d).collect();
    let center = g.grid.len() / 2;
    let run = clip_run(&pts, center, |_, z| in_square(z, 1e-15));
    LocalLeaf { kind, center: m, curve: ManifoldCurve::new(kind, run), graph: Some(g), depth, rho, last_change }
}

fn graph_leaf(p: &MapParams, orbit: &Orbit, chain: &[usize], kind: LeafKind, opts: &ManifoldOptions) -> Result<LocalLeaf> {
    let axis = if kind == LeafKind::Unstable { GraphAxis::UToS } else { GraphAxis::SToU };
    let mut rho = opts.rho;
    loop {
        let kms = kergodic_chain(p, orbit, chain, rho, opts.c3)?;
        match iterate_graphs(p, &kms, axis, &ManifoldOptions { rho, ..*opts }) {
            // the fold bends leaves at A points by ~ρ in chart units, so
            // the 1/3 slope bound needs ρ small enough there as well
            Ok((g, _, _)) if g.lip_bound > LEAF_LIPSCHITZ && rho / 2.0 >= RHO_MIN => rho /= 2.0,
            Ok((g, depth, change)) => return Ok(leaf_from_graph(kind, g, depth, rho, change)),
            Err(Error::GraphTransform(_)) if rho / 2.0 >= RHO_MIN => rho /= 2.0,
            Err(e) => return Err(e),
        }
    }
}

fn linear_leaf(p: &MapParams, orbit: &Orbit, i: usize, kind: LeafKind, opts: &ManifoldOptions) -> Result<LocalLeaf> {
    let ch = chart(p, orbit, i, opts.rho, opts.c3)?;
    let axis = if kind == LeafKind::Unstable { GraphAxis::UToS } else { GraphAxis::SToU };
    Ok(leaf_from_graph(kind, LipGraph::zero(ch, axis, opts.grid), 0, opts.rho, 0.0))
}

/// Moves a leaf along the orbit by exact offset propagation, keeping the
/// part inside the us-ball at the destination.
fn transport_leaf(p: &MapParams, orbit: &Orbit, leaf: &LocalLeaf, from: usize, to: usize, opts: &ManifoldOptions) -> Result<LocalLeaf> {
    let m0 = orbit.points[from];
    let mut offsets: Vec<Point> = leaf.curve.points.iter().map(|&z| z - m0).collect();
    let center = offsets.iter().enumerate().min_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap()).map(|(i, _)| i).unwrap();
    offsets[center] = Point::new(0.0, 0.0);
    if to > from {
        for t in from..to {
            let w = orbit_wing(p, orbit, t + 1).unwrap_or(0.0);
            for d in offsets.iter_mut() {
                *d = offset_forward_wing(p, orbit.branches[t], w, *d);
            }
        }
    } else {
        for t in (to..from).rev() {
            let w = orbit_wing(p, orbit, t + 1).unwrap_or(0.0);
            for d in offsets.iter_mut() {
                *d = offset_backward_wing(p, orbit.branches[t], w, *d);
            }
        }
    }
    let ball = us_ball(p, orbit, to, opts.rho, opts.c3)?;
    let m = orbit.points[to];
    let pts: Vec<Point> = offsets.iter().map(|&d| m + d).collect();
    let run = clip_run(&pts, center, |k, z| ball.contains_offset(offsets[k]) && in_square(z, 1e-15));
    Ok(LocalLeaf { center: m, graph: None, curve: ManifoldCurve::new(leaf.kind, run), ..leaf.clone() })
}

/// Local unstable leaf `W^u_ρ` of `orbit.points[i]`.
///
/// Points in the domain of the induced map get a graph-transform leaf;
/// points in escape phase get the image of the leaf at their last visit to
/// the induced domain; orbits that are linear throughout get the exact
/// straight leaf.
pub fn local_unstable(p: &MapParams, orbit: &Orbit, i: usize, opts: &ManifoldOptions) -> Result<LocalLeaf> {
    let chain = chain_to(p, orbit, i);
    if chain.len() >= 2 {
        return graph_leaf(p, orbit, &chain, LeafKind::Unstable, opts);
    }
    if orbit.branches[..=i].iter().all(|b| b.is_linear()) {
        return linear_leaf(p, orbit, i, LeafKind::Unstable, opts);
    }
    let j = (0..i)
        .rev()
        .find(|&j| chain_to(p, orbit, j).len() >= 2)
        .ok_or_else(|| Error::Unsupported("backward orbit never enters the induced domain".into()))?;
    let leaf = graph_leaf(p, orbit, &chain_to(p, orbit, j), LeafKind::Unstable, opts)?;
    transport_leaf(p, orbit, &leaf, j, i, opts)
}

/// Local stable leaf `W^s_ρ` of `orbit.points[i]`, symmetric to
/// [`local_unstable`] with the inverse kergodic maps.
pub fn local_stable(p: &MapParams, orbit: &Orbit, i: usize, opts: &ManifoldOptions) -> Result<LocalLeaf> {
    let chain = induced_indices(p, orbit, i);
    if chain.len() >= 2 {
        return graph_leaf(p, orbit, &chain, LeafKind::Stable, opts);
    }
    if orbit.branches[i..].iter().all(|b| b.is_linear()) {
        return linear_leaf(p, orbit, i, LeafKind::Stable, opts);
    }
    let j = (i + 1..orbit.len())
        .find(|&j| induced_length(p, orbit, j).is_some() && induced_indices(p, orbit, j).len() >= 2)
        .ok_or_else(|| Error::Unsupported("forward orbit never enters the induced domain".into()))?;
    let leaf = graph_leaf(p, orbit, &induced_indices(p, orbit, j), LeafKind::Stable, opts)?;
    transport_leaf(p, orbit, &leaf, j, i, opts)
}

fn region_key(p: &MapParams, z: Point, forward: bool) -> i8 {
    if forward {
        let code = match classify(p, z) {
            RegionLabel::R1 => 0,
            RegionLabel::R3 => 1,
            RegionLabel::R4 => 2,
            RegionLabel::R5 => 3,
            RegionLabel::R2 => return -1,
            RegionLabel::GapLower => return -2,
            RegionLabel::GapUpper => return -3,
            RegionLabel::Outside => return -4,
        };
        match step(p, z, true) {
            Some(_) => code,
            None => -5 - code,
        }
    } else {
        match inverse_branch_of(p, z) {
            None => -1,
            Some(b) => {
                let code = match b {
                    Branch::R1 => 0,
                    Branch::R3 => 1,
                    Branch::R4Lo | Branch::R4Up => 2,
                    Branch::R5 => 3,
                };
                if step(p, z, false).is_some() {
                    code
                } else {
                    -5 - code
                }
            }
        }
    }
}

fn step(p: &MapParams, z: Point, forward: bool) -> Option<Point> {
    let w = if forward {
        apply_branch(p, branch_of(p, z)?, z)
    } else {
        let b = inverse_branch_of(p, z)?;
        apply_inverse_branch(p, b, z)
    };
    in_square(w, 1e-12).then_some(w)
}

struct PolyMapper<'a> {
    p: &'a MapParams,
    forward: bool,
    seg: f64,
    feature: f64,
    pieces: Vec<Vec<Point>>,
    cur: Vec<Point>,
    budget: usize,
    used: usize,
}

impl PolyMapper<'_> {
    fn flush(&mut self) {
        if self.cur.len() >= 2 {
            self.pieces.push(std::mem::take(&mut self.cur));
        } else {
            self.cur.clear();
        }
    }

    fn push(&mut self, z: Point) -> Result<()> {
        self.used += 1;
        if self.used > self.budget {
            return Err(Error::SearchFailed("polyline point budget exhausted".into()));
        }
        self.cur.push(z);
        Ok(())
    }

    /// Maps the open-closed segment `(a, b]`, `a` already handled.
    fn segment(&mut self, a: Point, b: Point, depth: usize) -> Result<()> {
        let (ka, kb) = (region_key(self.p, a, self.forward), region_key(self.p, b, self.forward));
        if ka == kb {
            if ka < 0 {
                if a.dist(b) > self.feature && depth < 60 {
                    let m = 0.5 * (a + b);
                    self.segment(a, m, depth + 1)?;
                    return self.segment(m, b, depth + 1);
                }
                return Ok(());
            }
            let (fa, fb) = (step(self.p, a, self.forward).unwrap(), step(self.p, b, self.forward).unwrap());
            if fa.dist(fb) > self.seg && depth < 60 {
                let m = 0.5 * (a + b);
                self.segment(a, m, depth + 1)?;
                return self.segment(m, b, depth + 1);
            }
            return self.push(fb);
        }
        let (mut lo, mut hi) = (a, b);
        for _ in 0..80 {
            let m = 0.5 * (lo + hi);
            if m == lo || m == hi {
                break;
            }
            if region_key(self.p, m, self.forward) == ka {
                lo = m;
            } else {
                hi = m;
            }
        }
        if ka >= 0 {
            self.segment(a, lo, depth + 1)?;
            self.flush();
        }
        if region_key(self.p, hi, self.forward) >= 0 {
            self.cur.clear();
            self.push(step(self.p, hi, self.forward).unwrap())?;
        }
        if hi != b {
            self.segment(hi, b, depth + 1)?;
        }
        Ok(())
    }
}

/// Images of polylines under `f` (or `f⁻¹`), cut where they leave the
/// domain, with exact boundary points found by bisection and segments
/// refined so that image segments are at most `seg` long.
pub fn map_polylines(p: &MapParams, pieces: &[Vec<Point>], forward: bool, seg: f64, budget: usize) -> Result<Vec<Vec<Point>>> {
    let feature = 0.25 * p.lambda.min(1.0 / p.sigma);
    let mut m = PolyMapper { p, forward, seg, feature, pieces: Vec::new(), cur: Vec::new(), budget, used: 0 };
    for piece in pieces {
        if piece.is_empty() {
            continue;
        }
        m.cur.clear();
        if region_key(p, piece[0], forward) >= 0 {
            m.push(step(p, piece[0], forward).unwrap())?;
        }
        for w in piece.windows(2) {
            m.segment(w[0], w[1], 0)?;
        }
        m.flush();
    }
    Ok(m.pieces)
}

fn nearest_piece(pieces: Vec<Vec<Point>>, m: Point) -> Option<Vec<Point>> {
    pieces.into_iter().min_by(|a, b| {
        let da = a.iter().map(|z| z.dist(m)).fold(f64::INFINITY, f64::min);
        let db = b.iter().map(|z| z.dist(m)).fold(f64::INFINITY, f64::min);
        da.partial_cmp(&db).unwrap()
    })
}

const GLOBAL_BUDGET: usize = 4_000_000;

/// `f^n` image of the local unstable leaf at `orbit.points[i - n]`: the
/// connected piece through `orbit.points[i]`, resampled to segments of at
/// most [`SEGMENT`].
pub fn global_unstable(p: &MapParams, orbit: &Orbit, i: usize, n: usize, opts: &ManifoldOptions) -> Result<ManifoldCurve> {
    if n > i {
        return Err(Error::InvalidInput("orbit too short in the past".into()));
    }
    let leaf = local_unstable(p, orbit, i - n, opts)?;
    let mut pieces = vec![leaf.curve.points];
    for _ in 0..n {
        pieces = map_polylines(p, &pieces, true, SEGMENT, GLOBAL_BUDGET)?;
    }
    let piece = nearest_piece(pieces, orbit.points[i]).ok_or(Error::OrbitEscapes { direction: "forward", step: n })?;
    Ok(ManifoldCurve::new(LeafKind::Unstable, piece))
}

/// `f^{-n}` image of the local stable leaf at `orbit.points[i + n]`.
pub fn global_stable(p: &MapParams, orbit: &Orbit, i: usize, n: usize, opts: &ManifoldOptions) -> Result<ManifoldCurve> {
    if i + n >= orbit.len() {
        return Err(Error::InvalidInput("orbit too short in the future".into()));
    }
    let leaf = local_stable(p, orbit, i + n, opts)?;
    let mut pieces = vec![leaf.curve.points];
    for _ in 0..n {
        pieces = map_polylines(p, &pieces, false, SEGMENT, GLOBAL_BUDGET)?;
    }
    let piece = nearest_piece(pieces, orbit.points[i]).ok_or(Error::OrbitEscapes { direction: "backward", step: n })?;
    Ok(ManifoldCurve::new(LeafKind::Stable, piece))
}

/// Finite-difference verticality of a curve `x = g(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalityReport {
    pub pass: bool,
    pub max_d1: f64,
    pub max_d2: f64,
}

pub fn eps1_vertical_check(points: &[Point], eps1: f64) -> Result<VerticalityReport> {
    if points.len() < 3 {
        return Err(Error::InvalidInput("need at least three points".into()));
    }
    let up = points[1].y > points[0].y;
    if !points.windows(2).all(|w| (w[1].y > w[0].y) == up && w[1].y != w[0].y) {
        return Err(Error::InvalidInput("curve is not a graph over y".into()));
    }
    let slope = |a: Point, b: Point| (b.x - a.x) / (b.y - a.y);
    let mut max_d1: f64 = 0.0;
    let mut max_d2: f64 = 0.0;
    for w in points.windows(3) {
        let (s0, s1) = (slope(w[0], w[1]), slope(w[1], w[2]));
        max_d1 = max_d1.max(slope(w[0], w[2]).abs());
        max_d2 = max_d2.max((2.0 * (s1 - s0) / (w[2].y - w[0].y)).abs());
    }
    max_d1 = max_d1.max(slope(points[0], points[1]).abs()).max(slope(points[points.len() - 2], points[points.len() - 1]).abs());
    Ok(VerticalityReport { pass: max_d1 <= eps1 && max_d2 <= eps1, max_d1, max_d2 })
}

/// Curve `x = g(y)` sampled over the R4 strip, stored as offsets
/// `y = t + eta`, `x = x0 + dx` so that finite differences on the thin
/// strip stay meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerticalCurve {
    pub t: f64,
    pub eta: Vec<f64>,
    pub x0: f64,
    pub dx: Vec<f64>,
}

impl VerticalCurve {
    /// `g(t + eta) - x0` by linear interpolation.
    fn offset_at(&self, eta: f64) -> f64 {
        let n = self.eta.len();
        let i = self.eta.partition_point(|&v| v < eta).clamp(1, n - 1);
        let (e0, e1) = (self.eta[i - 1], self.eta[i]);
        let slope = (self.dx[i] - self.dx[i - 1]) / (e1 - e0);
        if (eta - e0).abs() <= (eta - e1).abs() {
            self.dx[i - 1] + slope * (eta - e0)
        } else {
            self.dx[i] + slope * (eta - e1)
        }
    }

    pub fn points(&self) -> Vec<Point> {
        self.dx.iter().zip(&self.eta).map(|(&d, &e)| Point::new(self.x0 + d, self.t + e)).collect()
    }

    /// The curve translated so that `(x0, t)` is the origin; derivatives of
    /// `g` are read on these.
    pub fn local_points(&self) -> Vec<Point> {
        self.dx.iter().zip(&self.eta).map(|(&d, &e)| Point::new(d, e)).collect()
    }
}

fn r4_offsets(p: &MapParams, n: usize) -> Vec<f64> {
    let h = p.r4_half_height();
    let m = (n / 2) as f64;
    (0..n).map(|i| if i == n / 2 { 0.0 } else { h * (i as f64 - m) / m }).collect()
}

/// Quadratic curve `x = x0 + a (y - t) + b (y - t)²` over the R4 strip with
/// `|a|, |2b| <= eps1 / 2` and `x0` away from the sides.
pub fn seeded_vertical_curve<R: Rng>(p: &MapParams, eps1: f64, n: usize, rng: &mut R) -> VerticalCurve {
    let x0 = rng.gen_range(0.05..0.95);
    let a = rng.gen_range(-0.5..=0.5) * eps1;
    let b = rng.gen_range(-0.25..=0.25) * eps1;
    let eta = r4_offsets(p, n | 1);
    let dx = eta.iter().map(|&e| a * e + b * e * e).collect();
    VerticalCurve { t: p.t, eta, x0, dx }
}

/// Route from the R4 strip back to it: the wing side, the number of R1
/// steps after the parabola, and the linear branches (R3 or R5) taken
/// before re-entering R4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub right_wing: bool,
    pub r1_steps: usize,
    pub linear: Vec<Branch>,
}

impl Passage {
    pub fn random<R: Rng>(rng: &mut R) -> Passage {
        let m = rng.gen_range(0..3);
        Passage {
            right_wing: rng.gen(),
            r1_steps: rng.gen_range(1..4),
            linear: (0..m).map(|_| if rng.gen() { Branch::R3 } else { Branch::R5 }).collect(),
        }
    }
}

fn wing_root(p: &MapParams, sign: f64, rhs: impl Fn(f64) -> f64) -> f64 {
    let mut w = sign * (rhs(0.0).max(0.0) / p.c).sqrt();
    for _ in 0..200 {
        let next = sign * (rhs(w).max(0.0) / p.c).sqrt();
        if next == w {
            break;
        }
        w = next;
    }
    w
}

/// The piece of `f^n(curve)` inside the R4 strip along `route`, sampled on
/// the same ordinates. Each output ordinate is pulled back exactly through
/// the linear steps and R1, then the wing equation
/// `c w² = y₀ + λ g(t + w/σ)` is solved by fixed-point iteration, in
/// offsets from the center sample.
pub fn r4_passage(p: &MapParams, g: &VerticalCurve, route: &Passage) -> Result<VerticalCurve> {
    let (l, s) = (p.lambda, p.sigma);
    let n = route.r1_steps as i32;
    // pull back the center ordinate, and the scale of offsets
    let mut yc = g.t;
    let mut scale = 1.0;
    for &b in route.linear.iter().rev() {
        yc = apply_inverse_branch(p, b, Point::new(0.5, yc)).y;
        scale /= if b == Branch::R3 { -s } else { s };
    }
    let y0c = yc / s.powi(n);
    scale /= s.powi(n);
    if !(0.0..=p.r1_top()).contains(&y0c) {
        return Err(Error::InvalidInput("route does not reach the strip".into()));
    }
    let sign = if route.right_wing { 1.0 } else { -1.0 };
    let wc = wing_root(p, sign, |w| y0c + l * (g.x0 + g.offset_at(w / s)));
    if wc.abs() > p.w_max || wc == 0.0 {
        return Err(Error::InvalidInput("wing overflow".into()));
    }
    let ac = p.c * wc * wc;
    let gc = g.offset_at(wc / s);
    let mut dw = Vec::with_capacity(g.eta.len());
    for &e in &g.eta {
        // c (w² - wc²) = e·scale + λ (g(w/σ) - g(wc/σ))
        let mut d = 0.0;
        for _ in 0..200 {
            let da = e * scale + l * (g.offset_at((wc + d) / s) - gc);
            let a = ac + da;
            if a <= 0.0 {
                return Err(Error::InvalidInput("ordinate below the parabola vertex".into()));
            }
            let next = sign * da / (a.sqrt() + ac.sqrt()) / p.c.sqrt();
            if next == d {
                break;
            }
            d = next;
        }
        if (wc + d).abs() > p.w_max {
            return Err(Error::InvalidInput("wing overflow".into()));
        }
        dw.push(d);
    }
    let mut x0 = l.powi(n) * (p.q + wc);
    let mut factor = l.powi(n);
    for &b in &route.linear {
        x0 = apply_branch(p, b, Point::new(x0, 0.5)).x;
        factor *= if b == Branch::R3 { -l } else { l };
    }
    Ok(VerticalCurve { t: g.t, eta: g.eta.clone(), x0, dx: dw.iter().map(|d| factor * d).collect() })
}

/// Segment intersection point, if any.
pub fn segment_intersection(a: Point, b: Point, c: Point, d: Point) -> Option<Point> {
    let r = b - a;
    let s = d - c;
    let den = r.cross(s);
    if den == 0.0 {
        return None;
    }
    let t = (c - a).cross(s) / den;
    let u = (c - a).cross(r) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| a + t * r)
}

/// Intersection of two polylines with the angle between the crossing
/// segments.
pub fn polyline_crossings(a: &[Point], b: &[Point]) -> Vec<(Point, f64)> {
    let bbox = |u: Point, v: Point| (u.x.min(v.x), u.x.max(v.x), u.y.min(v.y), u.y.max(v.y));
    let mut out: Vec<(Point, f64)> = Vec::new();
    for w in a.windows(2) {
        let ba = bbox(w[0], w[1]);
        for z in b.windows(2) {
            let bb = bbox(z[0], z[1]);
            if ba.1 < bb.0 || bb.1 < ba.0 || ba.3 < bb.2 || bb.3 < ba.2 {
                continue;
            }
            if let Some(x) = segment_intersection(w[0], w[1], z[0], z[1]) {
                let (r, s) = ((w[1] - w[0]).normalized(), (z[1] - z[0]).normalized());
                let angle = r.cross(s).abs().asin();
                if !out.iter().any(|(y, _)| y.dist(x) <= 1e-12 * (1.0 + x.norm())) {
                    out.push((x, angle));
                }
            }
        }
    }
    out
}

/// The bracket `⟦M, M′⟧` with the transversality angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketPoint {
    pub point: Point,
    pub angle: f64,
    pub near_tangent: bool,
}

/// Minimal crossing angle accepted as transversal.
pub const TRANSVERSALITY_FLOOR: f64 = 1e-6;

/// Intersection of a stable leaf with an unstable leaf.
pub fn bracket_curves(stable: &ManifoldCurve, unstable: &ManifoldCurve) -> Result<BracketPoint> {
    let hits = polyline_crossings(&stable.points, &unstable.points);
    match hits.len() {
        0 => Err(Error::NoIntersection),
        1 => Ok(BracketPoint { point: hits[0].0, angle: hits[0].1, near_tangent: hits[0].1 < TRANSVERSALITY_FLOOR }),
        _ => Err(Error::NonUnique),
    }
}

/// `W^s_loc(M) ∩ W^u_loc(M′)` for `M = a.points[i]`, `M′ = b.points[j]`.
pub fn bracket(p: &MapParams, a: &Orbit, i: usize, b: &Orbit, j: usize, opts: &ManifoldOptions) -> Result<BracketPoint> {
    let (m, mp) = (a.points[i], b.points[j]);
    if m == mp {
        return Ok(BracketPoint { point: m, angle: std::f64::consts::FRAC_PI_2, near_tangent: false });
    }
    let ws = local_stable(p, a, i, opts)?;
    let wu = local_unstable(p, b, j, opts)?;
    bracket_curves(&ws.curve, &wu.curve)
}

/// Open disk in the square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

/// Mixing times of a disk, `None` when the budget was exhausted; spans are
/// the largest vertical (resp. horizontal) extents reached inside a band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub n_plus: Option<usize>,
    pub n_minus: Option<usize>,
    pub span_plus: f64,
    pub span_minus: f64,
}

const JOIN_TOL: f64 = 1e-9;
const MIXING_BUDGET: usize = 2_000_000;

fn seed_arc(u: &Disk, vertical: bool) -> Vec<Point> {
    let r = 0.9 * u.radius;
    let (a, b) = if vertical {
        (Point::new(u.center.x, (u.center.y - r).max(0.0)), Point::new(u.center.x, (u.center.y + r).min(1.0)))
    } else {
        (Point::new((u.center.x - r).max(0.0), u.center.y), Point::new((u.center.x + r).min(1.0), u.center.y))
    };
    vec![a, b]
}

fn forward_band(p: &MapParams, z: Point) -> BandSet {
    band_of(p, z).unwrap_or(BandSet::EMPTY)
}

fn backward_band(p: &MapParams, z: Point) -> BandSet {
    branch_of(p, z).map(|b| BandSet::single(b.symbol())).unwrap_or(BandSet::EMPTY)
}

/// Span of the longest piece that stays in a single band; the full span
/// 1 means the piece joins the two opposite sides of the square.
fn best_span(p: &MapParams, pieces: &[Vec<Point>], vertical: bool) -> (f64, Option<Vec<Point>>) {
    let mut best = 0.0;
    let mut winner = None;
    for piece in pieces {
        for s in 0..3u8 {
            let inside = |z: &Point| if vertical { forward_band(p, *z) } else { backward_band(p, *z) }.contains(s);
            // maximal runs inside band s
            let mut k = 0;
            while k < piece.len() {
                if !inside(&piece[k]) {
                    k += 1;
                    continue;
                }
                let start = k;
                while k < piece.len() && inside(&piece[k]) {
                    k += 1;
                }
                let run = &piece[start..k];
                let coord = |z: &Point| if vertical { z.y } else { z.x };
                let lo = run.iter().map(coord).fold(f64::INFINITY, f64::min);
                let hi = run.iter().map(coord).fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                if span > best {
                    best = span;
                    if lo <= JOIN_TOL && hi >= 1.0 - JOIN_TOL {
                        winner = Some(run.to_vec());
                    }
                }
            }
        }
    }
    (best, winner)
}

fn grow(p: &MapParams, u: &Disk, vertical: bool, budget: usize) -> Result<(Option<usize>, f64, Option<Vec<Point>>)> {
    let arc = seed_arc(u, vertical);
    let parts = (arc[0].dist(arc[1]) / SEGMENT).ceil().max(1.0) as usize;
    let mut pieces = vec![(0..=parts).map(|k| arc[0] + (k as f64 / parts as f64) * (arc[1] - arc[0])).collect::<Vec<_>>()];
    let mut best = 0.0;
    for n in 0..=budget {
        let (span, winner) = best_span(p, &pieces, vertical);
        best = f64::max(best, span);
        if winner.is_some() {
            return Ok((Some(n), best, winner));
        }
        if n == budget {
            break;
        }
        pieces = match map_polylines(p, &pieces, vertical, SEGMENT, MIXING_BUDGET) {
            Ok(x) => x,
            Err(_) => break,
        };
        if pieces.is_empty() {
            break;
        }
    }
    Ok((None, best, None))
}

/// `n⁺`: first iterate at which the image of an unstable arc in `u` has a
/// piece joining the bottom to the top inside one band; `n⁻` symmetric with
/// stable arcs, backward iterates and the sides.
pub fn mixing_times(p: &MapParams, u: &Disk, budget: usize) -> Result<MixingReport> {
    let (n_plus, span_plus, _) = grow(p, u, true, budget)?;
    let (n_minus, span_minus, _) = grow(p, u, false, budget)?;
    Ok(MixingReport { n_plus, n_minus, span_plus, span_minus })
}

/// A point `P` of `f^{n⁺}(U) ∩ f^{-n⁻}(V)`, which shows
/// `f^{n⁺+n⁻}(U) ∩ V ≠ ∅`.
pub fn mixing_witness(p: &MapParams, u: &Disk, v: &Disk, budget: usize) -> Result<Option<(usize, Point)>> {
    let (np, _, up) = grow(p, u, true, budget)?;
    let (nm, _, down) = grow(p, v, false, budget)?;
    match (np, nm, up, down) {
        (Some(a), Some(b), Some(cu), Some(cs)) => Ok(polyline_crossings(&cu, &cs).first().map(|&(z, _)| (a + b, z))),
        _ => Ok(None),
    }
}

/// Two distinct points whose whole orbits stay within `sup_dist`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonExpansivePair {
    pub a: Point,
    pub b: Point,
    pub distance: f64,
    pub sup_dist: f64,
    pub horizon: usize,
}

/// Sup distance along two orbit segments centered at their origins.
pub fn pair_distance(a: &Orbit, b: &Orbit, horizon: usize) -> Result<f64> {
    if a.center() == b.center() {
        return Err(Error::InvalidInput("the two points must differ".into()));
    }
    let h = horizon as isize;
    let mut sup: f64 = 0.0;
    for k in -h..=h {
        let (x, y) = (a.at(k).ok_or(Error::InvalidInput("orbit too short".into()))?, b.at(k).ok_or(Error::InvalidInput("orbit too short".into()))?);
        sup = sup.max(x.dist(y));
    }
    Ok(sup)
}

/// Searches a pair `A ≠ B` on one local parabola, symmetric about `x = q`,
/// on the bottom side (so that they share the stable leaf `y = 0`) and with
/// a common past up to the parabola. Their forward orbits approach at rate
/// λ and their backward orbits at rate 1/σ. Of 500 candidates, the most
/// separated pair within `delta` is returned.
pub fn nonexpansive_pair(p: &MapParams, delta: f64, horizon: usize, seed: u64) -> Result<NonExpansivePair> {
    if delta <= 0.0 {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = None;
    for _ in 0..500 {
        let run = rng.gen_range(0..6).min(horizon.saturating_sub(1));
        let mut prefix = crate::map_core::builder::random_branch_word(&mut rng, horizon - 1 - run, 0.3, 4);
        while prefix.last().is_some_and(|b| b.is_r4()) {
            prefix.pop();
            prefix.insert(0, Branch::R5);
        }
        prefix.extend(std::iter::repeat(Branch::R1).take(run));
        let build = |wing: Branch| {
            let mut word = prefix.clone();
            word.push(wing);
            word.extend(std::iter::repeat(Branch::R1).take(horizon + 1));
            build_orbit(p, &word, horizon, 0.5, 0.0)
        };
        let (Ok(oa), Ok(ob)) = (build(Branch::R4Lo), build(Branch::R4Up)) else { continue };
        let (a, b) = (oa.center(), ob.center());
        if a == b {
            continue;
        }
        let sup = pair_distance(&oa, &ob, horizon)?;
        if sup <= delta && best.as_ref().map_or(true, |x: &NonExpansivePair| a.dist(b) > x.distance) {
            best = Some(NonExpansivePair { a, b, distance: a.dist(b), sup_dist: sup, horizon });
        }
    }
    best.ok_or_else(|| Error::SearchFailed(format!("no pair within {delta:e}")))
}

/// `F(W^u_ρ(M)) ⊃ W^u_ρ(F(M))`: largest distance, in the plane, from the
/// leaf at `F(M)` to the image of the leaf at `M`, on the common domain.
pub fn unstable_invariance_defect(p: &MapParams, orbit: &Orbit, i: usize, opts: &ManifoldOptions) -> Result<f64> {
    let k = induced_length(p, orbit, i).ok_or(Error::NoReturn(orbit.len() - i))?;
    let here = local_unstable(p, orbit, i, opts)?;
    let there = local_unstable(p, orbit, i + k, opts)?;
    let (Some(g), Some(h)) = (here.graph, there.graph) else {
        return Err(Error::Unsupported("invariance is checked on graph leaves".into()));
    };
    let km = KergodicMap::new(p, orbit, i, here.rho, opts.c3)?;
    let image = graph_transform(p, &km, &g)?;
    let half = image.half_width();
    Ok(h.grid
        .iter()
        .zip(&h.values)
        .filter(|(x, _)| x.abs() <= half)
        .map(|(&x, &v)| (v - image.eval(x)).abs() * h.base.l)
        .fold(0.0, f64::max))
}

/// `F⁻¹(W^s_ρ(F(M))) ⊃ W^s_ρ(M)`, measured as in
/// [`unstable_invariance_defect`].
pub fn stable_invariance_defect(p: &MapParams, orbit: &Orbit, i: usize, opts: &ManifoldOptions) -> Result<f64> {
    let k = induced_length(p, orbit, i).ok_or(Error::NoReturn(orbit.len() - i))?;
    let here = local_stable(p, orbit, i, opts)?;
    let there = local_stable(p, orbit, i + k, opts)?;
    let (Some(g), Some(h)) = (here.graph, there.graph) else {
        return Err(Error::Unsupported("invariance is checked on graph leaves".into()));
    };
    let km = KergodicMap::new(p, orbit, i, there.rho, opts.c3)?;
    let image = graph_transform(p, &km, &h)?;
    let half = image.half_width();
    Ok(g.grid
        .iter()
        .zip(&g.values)
        .filter(|(x, _)| x.abs() <= half)
        .map(|(&x, &v)| (v - image.eval(x)).abs() * g.base.l)
        .fold(0.0, f64::max))
}

/// Distances `d(fⁿx, fⁿM)` for `samples` points `x` of `W^s_ρ(M)`, at the
/// return times `n <= max_n` of the induced orbit of `M`.
///
/// Each image is moved back onto the computed stable leaf of the next
/// return point before the following step: forward iteration amplifies the
/// leaf's own error in the unstable direction by `σ` per step, while the
/// true image lies on the next leaf by invariance.
pub fn stable_decay(
    p: &MapParams,
    orbit: &Orbit,
    i: usize,
    samples: usize,
    max_n: usize,
    opts: &ManifoldOptions,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let chain = induced_indices(p, orbit, i);
    let chain: Vec<usize> = chain.into_iter().take_while(|&j| j - i <= max_n).collect();
    let mut leaves = Vec::with_capacity(chain.len());
    for &j in &chain {
        let leaf = local_stable(p, orbit, j, opts)?;
        leaves.push(leaf.graph.ok_or_else(|| Error::Unsupported("decay is measured on graph leaves".into()))?);
    }
    let kms = kergodic_chain(p, orbit, &chain, opts.rho, opts.c3)?;
    let h = 0.9 * leaves[0].half_width();
    let mut out = Vec::with_capacity(samples);
    for m in 0..samples {
        let frac = (m / 2 + 1) as f64 / (samples / 2 + 1) as f64;
        let xs = if m % 2 == 0 { h * frac } else { -h * frac };
        let mut xi = Point::new(leaves[0].eval(xs), xs);
        let mut n = 0;
        let mut row = vec![(0, leaves[0].base.offset(xi).norm())];
        for (km, next) in kms.iter().zip(&leaves[1..]) {
            let eta = km.apply(p, xi);
            xi = Point::new(next.eval(eta.y), eta.y);
            n += km.k;
            row.push((n, next.base.offset(xi).norm()));
        }
        out.push(row);
    }
    Ok(out)
}

/// Least-squares decay exponent `-d ln d / dn` over all samples.
pub fn decay_exponent(rows: &[Vec<(usize, f64)>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        rows.iter().flatten().filter(|(_, d)| *d > 0.0).map(|&(n, d)| (n as f64, d.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / k, pts.iter().map(|p| p.1).sum::<f64>() / k);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}
