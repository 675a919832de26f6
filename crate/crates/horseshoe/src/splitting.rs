//! Cone fields, the unit stable/unstable directions, the length scale
//! `l(M)`, the adapted norm, and checks of the expansion lemma.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use rand::Rng;

use crate::map_core::builder::{build_generic, random_branch_word, Orbit};
use crate::map_core::Branch;
use crate::map_core::{apply, apply_inverse, branch_of, in_a, inverse_branch_of, jacobian_branch, jacobian_inverse_branch, offset_backward_wing, offset_forward_wing, MapParams, Mat2, Point};

const DEFAULT_SLOPE: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
const INFLATION: f64 = 1.0 + 1e-9;

/// `l(M) = |x - q|` on A, the supremum of that quantity elsewhere. The flag
/// is set at the tangency point, where the value is 0 by convention.
pub fn length_scale(p: &MapParams, m: Point) -> (f64, bool) {
    if m.x == p.q && m.y == 0.0 {
        return (0.0, true);
    }
    if in_a(p, m) {
        ((m.x - p.q).abs(), false)
    } else {
        (p.l_sup(), false)
    }
}

/// Double cone `{v : |<v, axis⊥>| <= slope |<v, axis>|}` around a unit axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub axis: Point,
    pub slope: f64,
}

impl Cone {
    pub fn vertical(slope: f64) -> Cone {
        Cone { axis: Point::new(0.0, 1.0), slope }
    }

    pub fn horizontal(slope: f64) -> Cone {
        Cone { axis: Point::new(1.0, 0.0), slope }
    }

    pub fn default_unstable() -> Cone {
        Cone::vertical(DEFAULT_SLOPE)
    }

    pub fn default_stable() -> Cone {
        Cone::horizontal(DEFAULT_SLOPE)
    }

    pub fn contains(&self, v: Point) -> bool {
        v.dot(self.axis.perp()).abs() <= self.slope * v.dot(self.axis).abs()
    }

    pub fn half_angle(&self) -> f64 {
        self.slope.atan()
    }

    /// The two boundary rays, on the positive side of the axis.
    pub fn boundary(&self) -> [Point; 2] {
        let n = self.axis.perp();
        [(self.axis + self.slope * n).normalized(), (self.axis - self.slope * n).normalized()]
    }

    /// Unit vectors spread across the cone, boundary included.
    pub fn samples(&self, count: usize) -> Vec<Point> {
        let a = self.half_angle();
        let n = self.axis.perp();
        (0..count)
            .map(|i| {
                let th = -a + 2.0 * a * i as f64 / (count - 1).max(1) as f64;
                (th.cos() * self.axis + th.sin() * n).normalized()
            })
            .collect()
    }

    /// Smallest cone containing the image of this cone under `m`.
    pub fn image(&self, m: &Mat2) -> Cone {
        let [r1, r2] = self.boundary();
        let a = m.apply(r1).normalized();
        let b = m.apply(r2).normalized();
        let axis = (a + b).normalized();
        let half = 0.5 * a.cross(b).abs().atan2(a.dot(b));
        Cone { axis, slope: half.tan() }
    }

    pub fn inflated(&self, factor: f64) -> Cone {
        Cone { axis: self.axis, slope: self.slope * factor }
    }

    /// Whether `self` lies inside `other`, boundary rays tested.
    pub fn inside(&self, other: &Cone) -> bool {
        self.boundary().iter().all(|&r| other.contains(r)) && other.contains(self.axis)
    }
}

/// Signed wing coordinate `x - q` of `orbit.points[k]` when it is the image
/// of an R4 step, recovered as `±sqrt((y + λ x_prev) / c)`. Near the
/// tangency this keeps full relative precision where `x - q` rounds to 0.
pub fn orbit_wing(p: &MapParams, orbit: &Orbit, k: usize) -> Option<f64> {
    if k == 0 || !orbit.branches[k - 1].is_r4() {
        return None;
    }
    let w = ((orbit.points[k].y + p.lambda * orbit.points[k - 1].x) / p.c).max(0.0).sqrt();
    Some(if orbit.branches[k - 1] == Branch::R4Lo { -w } else { w })
}

/// `l` at an orbit point, using [`orbit_wing`] when available.
pub fn orbit_length_scale(p: &MapParams, orbit: &Orbit, k: usize) -> f64 {
    let z = orbit.points[k];
    match orbit_wing(p, orbit, k) {
        Some(w) if in_a(p, z) => w.abs(),
        _ => length_scale(p, z).0,
    }
}

/// Jacobian at `orbit.points[k]`. For R4 steps the wing coordinate is
/// taken from [`orbit_wing`] of the next point, which is far more accurate
/// than `σ (y - t)` near the tangency.
pub fn orbit_jacobian(p: &MapParams, orbit: &Orbit, k: usize) -> Mat2 {
    let b = orbit.branches[k];
    if b.is_r4() && k + 1 < orbit.len() {
        let w = orbit_wing(p, orbit, k + 1).unwrap();
        Mat2::new(0.0, p.sigma, -p.lambda, 2.0 * p.c * w * p.sigma)
    } else {
        jacobian_branch(p, b, orbit.points[k])
    }
}

/// Derivative of the inverse of step `k -> k + 1`, with the wing
/// coordinate of `orbit.points[k + 1]` taken from [`orbit_wing`].
pub fn orbit_inverse_jacobian(p: &MapParams, orbit: &Orbit, k: usize) -> Mat2 {
    let b = orbit.branches[k];
    if b.is_r4() {
        let w = orbit_wing(p, orbit, k + 1).unwrap();
        Mat2::new(2.0 * p.c * w / p.lambda, -1.0 / p.lambda, 1.0 / p.sigma, 0.0)
    } else {
        jacobian_inverse_branch(p, b, orbit.points[k + 1])
    }
}

/// Image offset of `orbit.points[k] + d` relative to `orbit.points[k + 1]`.
pub fn orbit_offset_forward(p: &MapParams, orbit: &Orbit, k: usize, d: Point) -> Point {
    let w0 = orbit_wing(p, orbit, k + 1).unwrap_or(0.0);
    offset_forward_wing(p, orbit.branches[k], w0, d)
}

/// Preimage offset of `orbit.points[k + 1] + d` relative to `orbit.points[k]`.
pub fn orbit_offset_backward(p: &MapParams, orbit: &Orbit, k: usize, d: Point) -> Point {
    let w0 = orbit_wing(p, orbit, k + 1).unwrap_or(0.0);
    offset_backward_wing(p, orbit.branches[k], w0, d)
}

/// Unstable cone at a point of A: vertical with slope `2 / (c l(M))`.
pub fn unstable_cone(p: &MapParams, m: Point) -> Result<Cone> {
    if !in_a(p, m) {
        return Err(Error::Precondition("unstable_cone (M in A)"));
    }
    let l = (m.x - p.q).abs();
    Ok(Cone::vertical(4.0 / (2.0 * p.c * l)))
}

/// Stable cone at a point of A: the closure of the complement of the
/// unstable cone, horizontal with slope `c l(M) / 2`.
pub fn stable_cone(p: &MapParams, m: Point) -> Result<Cone> {
    if !in_a(p, m) {
        return Err(Error::Precondition("stable_cone (M in A)"));
    }
    let l = (m.x - p.q).abs();
    Ok(Cone::horizontal(p.c * l / 2.0))
}

/// Unstable cones along an orbit segment. Cones are pushed forward with a
/// slight inflation between visits to A, replaced by the unstable cone at
/// each visit and by the default cone once the pushed cone fits inside it.
/// The flag reports whether every pushed cone entered the next cone.
pub fn cone_at(p: &MapParams, orbit: &Orbit) -> (Vec<Cone>, bool) {
    let mut cones = Vec::with_capacity(orbit.len());
    let mut nested = true;
    let first = orbit.points[0];
    cones.push(if in_a(p, first) { Cone::vertical(2.0 / (p.c * orbit_length_scale(p, orbit, 0))) } else { Cone::default_unstable() });
    for i in 1..orbit.len() {
        let j = orbit_jacobian(p, orbit, i - 1);
        let pushed = cones[i - 1].image(&j).inflated(INFLATION);
        let z = orbit.points[i];
        let next = if in_a(p, z) {
            let cu = Cone::vertical(2.0 / (p.c * orbit_length_scale(p, orbit, i)));
            nested &= pushed.inside(&cu);
            cu
        } else if pushed.inside(&Cone::default_unstable()) {
            Cone::default_unstable()
        } else {
            pushed
        };
        cones.push(next);
    }
    (cones, nested)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFrame {
    pub m: Point,
    pub e_u: Point,
    pub e_s: Point,
    pub depth_u: usize,
    pub depth_s: usize,
    pub l: f64,
    pub residual_u: f64,
    pub residual_s: f64,
}

impl SplitFrame {
    pub fn residual(&self) -> f64 {
        self.residual_u.max(self.residual_s)
    }

    /// Matrix with columns `e_u`, `e_s`.
    pub fn basis(&self) -> Mat2 {
        Mat2::from_cols(self.e_u, self.e_s)
    }

    /// Coordinates `(v_u, v_s)` of `v` in the basis `(e_u, e_s)`.
    pub fn coords(&self, v: Point) -> Point {
        let det = self.e_u.cross(self.e_s);
        Point::new(v.cross(self.e_s) / det, self.e_u.cross(v) / det)
    }
}

/// `|v|_M = max(|v_u|, |v_s|)`.
pub fn adapted_norm(frame: &SplitFrame, v: Point) -> Result<f64> {
    let det = frame.e_u.cross(frame.e_s);
    if det.abs() < 1e-300 || !det.is_finite() {
        return Err(Error::InvalidInput("degenerate frame".into()));
    }
    let c = frame.coords(v);
    Ok(c.x.abs().max(c.y.abs()))
}

fn fix_sign_u(v: Point) -> Point {
    if v.y < 0.0 || (v.y == 0.0 && v.x < 0.0) {
        -v
    } else {
        v
    }
}

fn fix_sign_s(v: Point) -> Point {
    if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
        -v
    } else {
        v
    }
}

/// Stable cones along an orbit segment, pulled back from its last point
/// with the same rules as [`cone_at`].
pub fn stable_cone_at(p: &MapParams, orbit: &Orbit) -> (Vec<Cone>, bool) {
    let n = orbit.len();
    let mut cones = vec![Cone::default_stable(); n];
    let mut nested = true;
    let last = orbit.points[n - 1];
    if in_a(p, last) {
        cones[n - 1] = Cone::horizontal(p.c * orbit_length_scale(p, orbit, n - 1) / 2.0);
    }
    for i in (0..n - 1).rev() {
        let j = orbit_inverse_jacobian(p, orbit, i);
        let pulled = cones[i + 1].image(&j).inflated(INFLATION);
        let z = orbit.points[i];
        cones[i] = if in_a(p, z) {
            let cs = Cone::horizontal(p.c * orbit_length_scale(p, orbit, i) / 2.0);
            nested &= pulled.inside(&cs);
            cs
        } else if pulled.inside(&Cone::default_stable()) {
            Cone::default_stable()
        } else {
            pulled
        };
    }
    (cones, nested)
}

fn sub_orbit(orbit: &Orbit, a: usize, b: usize) -> Orbit {
    Orbit { points: orbit.points[a..=b].to_vec(), branches: orbit.branches[a..=b].to_vec(), origin: 0 }
}

/// Splitting at `orbit.points[i]` from at most `depth` steps of the orbit in
/// each direction, stopping early once both residuals are below `tol`.
pub fn direction_field_on(p: &MapParams, orbit: &Orbit, i: usize, depth: usize, tol: f64) -> SplitFrame {
    let m = orbit.points[i];
    let max_u = depth.min(i);
    let mut e_u = Point::new(0.0, 1.0);
    let mut res_u = Cone::default_unstable().half_angle();
    let mut depth_u = 0;
    let chain_u = cone_at(p, &sub_orbit(orbit, 0, i)).0;
    for d in 1..=max_u {
        let start = i - d;
        let mut v = Point::new(0.0, 1.0);
        let mut cone = chain_u[i - d];
        for k in start..i {
            let j = orbit_jacobian(p, orbit, k);
            v = fix_sign_u(j.apply(v).normalized());
            cone = cone.image(&j);
        }
        e_u = v;
        depth_u = d;
        res_u = res_u.min(cone.half_angle());
        if res_u < tol {
            break;
        }
    }
    let max_s = depth.min(orbit.len() - 1 - i);
    let mut e_s = Point::new(1.0, 0.0);
    let mut res_s = Cone::default_stable().half_angle();
    let mut depth_s = 0;
    let chain_s = stable_cone_at(p, &sub_orbit(orbit, i, orbit.len() - 1)).0;
    for d in 1..=max_s {
        let end = i + d;
        let mut v = Point::new(1.0, 0.0);
        let mut cone = chain_s[d];
        for k in (i..end).rev() {
            let j = orbit_inverse_jacobian(p, orbit, k);
            v = fix_sign_s(j.apply(v).normalized());
            cone = cone.image(&j);
        }
        e_s = v;
        depth_s = d;
        res_s = res_s.min(cone.half_angle());
        if res_s < tol {
            break;
        }
    }
    SplitFrame { m, e_u, e_s, depth_u, depth_s, l: orbit_length_scale(p, orbit, i), residual_u: res_u, residual_s: res_s }
}

/// Splitting at `M` by iterating the map itself `depth` steps each way.
pub fn direction_field(p: &MapParams, m: Point, depth: usize) -> Result<SplitFrame> {
    let mut back = vec![m];
    for step in 0..depth {
        let z = *back.last().unwrap();
        match apply_inverse(p, z) {
            Some(pre) => back.push(pre),
            None => return Err(Error::OrbitEscapes { direction: "backward", step }),
        }
    }
    let mut fwd = vec![m];
    for step in 0..depth {
        let z = *fwd.last().unwrap();
        match apply(p, z) {
            Some(nx) => fwd.push(nx),
            None => return Err(Error::OrbitEscapes { direction: "forward", step }),
        }
    }
    back.reverse();
    let mut points = back;
    points.extend_from_slice(&fwd[1..]);
    let mut branches = Vec::with_capacity(points.len());
    for (k, &z) in points.iter().enumerate() {
        let b = if k + 1 < points.len() {
            // the branch of z is the inverse branch of its successor
            inverse_branch_of(p, points[k + 1]).or_else(|| branch_of(p, z))
        } else {
            branch_of(p, z)
        };
        branches.push(b.ok_or(Error::OrbitEscapes { direction: "forward", step: k })?);
    }
    let orbit = Orbit { points, branches, origin: depth };
    Ok(direction_field_on(p, &orbit, depth, depth, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnReport {
    pub m: Point,
    pub n: usize,
    pub inclusion: bool,
    pub min_expansion_u: f64,
    pub bound_u: f64,
    pub inclusion_s: bool,
    pub min_contraction_s: f64,
    pub bound_s: f64,
}

impl ReturnReport {
    pub fn passes(&self) -> bool {
        self.inclusion && self.inclusion_s && self.min_expansion_u >= self.bound_u && self.min_contraction_s >= self.bound_s
    }

    pub fn csv_header() -> &'static str {
        "x,y,n,inclusion,min_exp_u,bound_u,min_con_s,bound_s"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{},{},{:e},{:e},{:e},{:e}",
            self.m.x,
            self.m.y,
            self.n,
            self.inclusion && self.inclusion_s,
            self.min_expansion_u,
            self.bound_u,
            self.min_contraction_s,
            self.bound_s
        )
    }
}

fn same_nappe(cone: &Cone, vs: &[Point]) -> bool {
    let signs: Vec<bool> = vs.iter().map(|v| v.dot(cone.axis) > 0.0).collect();
    signs.iter().all(|&s| s == signs[0])
}

/// Checks the expansion lemma at `orbit.points[i]` (a point of A) up to its
/// first return to A along the orbit.
pub fn verify_cone_return(p: &MapParams, orbit: &Orbit, i: usize) -> Result<ReturnReport> {
    let m = orbit.points[i];
    if !in_a(p, m) {
        return Err(Error::Precondition("verify_cone_return (M in A)"));
    }
    let cu = Cone::vertical(2.0 / (p.c * orbit_length_scale(p, orbit, i)));
    let n = (1..orbit.len() - i).find(|&k| in_a(p, orbit.points[i + k])).ok_or(Error::NoReturn(orbit.len() - i))?;
    let mut d = Mat2::identity();
    for k in i..i + n {
        d = orbit_jacobian(p, orbit, k).mul(&d);
    }
    let l_n = orbit_length_scale(p, orbit, i + n);
    let cu_n = Cone::vertical(2.0 / (p.c * l_n));
    let samples = cu.samples(35);
    let images: Vec<Point> = samples.iter().map(|&v| d.apply(v)).collect();
    let inclusion = images.iter().all(|&w| cu_n.contains(w)) && same_nappe(&cu_n, &images);
    let min_expansion_u = images.iter().map(|w| w.norm()).fold(f64::INFINITY, f64::min);

    let cs_n = Cone::horizontal(p.c * l_n / 2.0);
    let cs = Cone::horizontal(p.c * orbit_length_scale(p, orbit, i) / 2.0);
    let mut dinv = Mat2::identity();
    for k in i..i + n {
        dinv = dinv.mul(&orbit_inverse_jacobian(p, orbit, k));
    }
    let back: Vec<Point> = cs_n.samples(35).iter().map(|&v| dinv.apply(v)).collect();
    let inclusion_s = back.iter().all(|&w| cs.contains(w)) && same_nappe(&cs, &back);
    let min_contraction_s = back.iter().map(|w| w.norm()).fold(f64::INFINITY, f64::min);
    Ok(ReturnReport {
        m,
        n,
        inclusion,
        min_expansion_u,
        bound_u: p.sigma.powf(n as f64 / 2.0),
        inclusion_s,
        min_contraction_s,
        bound_s: p.lambda.powf(-(n as f64) / 2.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderBin {
    pub k: u32,
    pub mean_log_dist: f64,
    pub mean_dir_gap: f64,
    pub mean_log_gap: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub c_est: f64,
    pub alpha_est: f64,
    pub bins: Vec<HolderBin>,
    pub pairs_used: usize,
}

/// Least-squares slope of `ln gap` against `ln distance` over dyadic
/// distance bins `2^-k`, `k = 4..=20`. Gaps below `1e-12` are discarded.
pub fn holder_fit_raw(samples: &[(f64, f64)]) -> Result<HolderFit> {
    let floor = 1e-12;
    let mut acc: Vec<(f64, f64, f64, usize)> = vec![(0.0, 0.0, 0.0, 0); 21];
    let mut used = 0;
    for &(d, gap) in samples {
        if !(d > 0.0) || gap < floor || !gap.is_finite() {
            continue;
        }
        let k = (-d.log2()).floor();
        if !(4.0..=20.0).contains(&k) {
            continue;
        }
        let e = &mut acc[k as usize];
        e.0 += d.ln();
        e.1 += gap.ln();
        e.2 += gap;
        e.3 += 1;
        used += 1;
    }
    let bins: Vec<HolderBin> = acc
        .iter()
        .enumerate()
        .filter(|(_, e)| e.3 > 0)
        .map(|(k, e)| HolderBin {
            k: k as u32,
            mean_log_dist: e.0 / e.3 as f64,
            mean_log_gap: e.1 / e.3 as f64,
            mean_dir_gap: e.2 / e.3 as f64,
            count: e.3,
        })
        .collect();
    if bins.len() < 2 {
        return Err(Error::InsufficientSamples(format!("{} populated distance bins", bins.len())));
    }
    let n = bins.len() as f64;
    let mx = bins.iter().map(|b| b.mean_log_dist).sum::<f64>() / n;
    let my = bins.iter().map(|b| b.mean_log_gap).sum::<f64>() / n;
    let sxy: f64 = bins.iter().map(|b| (b.mean_log_dist - mx) * (b.mean_log_gap - my)).sum();
    let sxx: f64 = bins.iter().map(|b| (b.mean_log_dist - mx).powi(2)).sum();
    let alpha = sxy / sxx;
    let intercept = my - alpha * mx;
    Ok(HolderFit { c_est: intercept.exp(), alpha_est: alpha, bins, pairs_used: used })
}

/// Hölder fits of `e_u` and `e_s` over pairs of frames. Pairs whose
/// residual exceeds `1e-8` or whose points coincide are rejected.
pub fn holder_fit(pairs: &[(SplitFrame, SplitFrame)]) -> Result<(HolderFit, HolderFit)> {
    let resolved: Vec<&(SplitFrame, SplitFrame)> =
        pairs.iter().filter(|(a, b)| a.residual() <= 1e-8 && b.residual() <= 1e-8 && a.m != b.m).collect();
    if resolved.len() < 100 {
        return Err(Error::InsufficientSamples(format!("{} resolved pairs (need 100)", resolved.len())));
    }
    let u: Vec<(f64, f64)> = resolved.iter().map(|(a, b)| (a.m.dist(b.m), (a.e_u - b.e_u).norm())).collect();
    let s: Vec<(f64, f64)> = resolved.iter().map(|(a, b)| (a.m.dist(b.m), (a.e_s - b.e_s).norm())).collect();
    Ok((holder_fit_raw(&u)?, holder_fit_raw(&s)?))
}

/// Outcome of a Hölder check for one direction field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldHolder {
    Fitted(HolderFit),
    /// Every gap is below the fit floor: the field is constant to
    /// `max_gap` on the sample, which any exponent bounds for `d > 1e-20`.
    Flat { max_gap: f64 },
}

impl FieldHolder {
    pub fn passes(&self, alpha_min: f64) -> bool {
        match self {
            FieldHolder::Fitted(f) => f.alpha_est >= alpha_min,
            FieldHolder::Flat { max_gap } => *max_gap < 1e-12,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            FieldHolder::Fitted(f) => Some(f.alpha_est),
            FieldHolder::Flat { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHolder {
    pub resolved: usize,
    pub u: FieldHolder,
    pub s: FieldHolder,
}

impl SplitHolder {
    pub fn passes(&self, alpha_min: f64, min_pairs: usize) -> bool {
        self.resolved >= min_pairs && self.u.passes(alpha_min) && self.s.passes(alpha_min)
    }
}

fn field_holder(samples: &[(f64, f64)]) -> Result<FieldHolder> {
    let max_gap = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    if max_gap < 1e-12 {
        return Ok(FieldHolder::Flat { max_gap });
    }
    holder_fit_raw(samples).map(FieldHolder::Fitted)
}

/// Like [`holder_fit`], but a field that does not vary above the fit floor
/// is reported as flat instead of failing.
pub fn split_holder(pairs: &[(SplitFrame, SplitFrame)]) -> Result<SplitHolder> {
    let resolved: Vec<&(SplitFrame, SplitFrame)> =
        pairs.iter().filter(|(a, b)| a.residual() <= 1e-8 && b.residual() <= 1e-8 && a.m != b.m).collect();
    if resolved.len() < 100 {
        return Err(Error::InsufficientSamples(format!("{} resolved pairs (need 100)", resolved.len())));
    }
    let u: Vec<(f64, f64)> = resolved.iter().map(|(a, b)| (a.m.dist(b.m), (a.e_u - b.e_u).norm())).collect();
    let s: Vec<(f64, f64)> = resolved.iter().map(|(a, b)| (a.m.dist(b.m), (a.e_s - b.e_s).norm())).collect();
    Ok(SplitHolder { resolved: resolved.len(), u: field_holder(&u)?, s: field_holder(&s)? })
}

/// Random orbit with a point of A at the returned index, followed by a
/// first return to A: `R4, R1^n1, (R3|R5)^n2, R4, R1` with `n2 <= max_middle`, padded with random
/// admissible words of length `pad` on both sides.
pub fn sample_return_orbit<R: Rng>(p: &MapParams, rng: &mut R, pad: usize, max_middle: usize) -> Result<(Orbit, usize)> {
    let mut word = random_branch_word(rng, pad, 0.5, 40);
    while word.last().map_or(false, |b| !b.allows(Branch::R4Lo)) {
        word.pop();
    }
    let lo = |rng: &mut R| if rng.gen::<bool>() { Branch::R4Lo } else { Branch::R4Up };
    word.push(lo(rng));
    let i = word.len();
    word.push(Branch::R1);
    for _ in 0..rng.gen_range(0..6) {
        word.push(Branch::R1);
    }
    for _ in 0..rng.gen_range(0..=max_middle) {
        word.push(if rng.gen::<bool>() { Branch::R3 } else { Branch::R5 });
    }
    word.push(lo(rng));
    word.push(Branch::R1);
    let tail = random_branch_word(rng, pad, 0.5, 40);
    let start = tail.iter().position(|b| Branch::R1.allows(*b)).unwrap_or(tail.len());
    word.extend_from_slice(&tail[start..]);
    let orbit = build_generic(p, &word, i)?;
    if !in_a(p, orbit.points[i]) {
        return Err(Error::Builder("sampled point is not in A".into()));
    }
    Ok((orbit, i))
}

/// Pairs of frames at points of A sharing part of their branch word. The
/// second orbit keeps the word from `n` steps behind to `n` steps ahead of
/// the first point on one side (`n` uniform in `0..=max_n`) and draws the
/// rest at random; `n = 0` keeps only the R4 step into the point and the
/// step out of it. Frames use `depth` steps each way.
pub fn sample_a_pairs<R: Rng>(p: &MapParams, rng: &mut R, count: usize, max_n: usize, depth: usize) -> Vec<(SplitFrame, SplitFrame)> {
    let mut out = Vec::with_capacity(count);
    let pad = depth + max_n + 4;
    let mut attempts = 0;
    while out.len() < count && attempts < 50 * count {
        attempts += 1;
        let Ok((o, i)) = sample_return_orbit(p, rng, pad, 2) else { continue };
        let word = &o.branches;
        let n = rng.gen_range(0..=max_n);
        let (keep_back, keep_fwd) = match (n, rng.gen::<bool>()) {
            (0, _) => (1, 1),
            (n, true) => (i, n),
            (n, false) => (n.max(1), word.len() - 1 - i),
        };
        if keep_back > i || i + keep_fwd >= word.len() {
            continue;
        }
        let mut head = random_branch_word(rng, pad + 2, 0.5, 40);
        let first = word[i - keep_back];
        if keep_back < i {
            while head.last().is_some_and(|b| !b.allows(first)) {
                head.pop();
            }
        } else {
            head.clear();
        }
        let origin = head.len() + keep_back;
        let mut twin = head;
        twin.extend_from_slice(&word[i - keep_back..=i + keep_fwd]);
        if i + keep_fwd + 1 < word.len() {
            let last = twin[twin.len() - 1];
            let tail = random_branch_word(rng, pad + 2, 0.5, 40);
            let start = tail.iter().position(|b| last.allows(*b)).unwrap_or(tail.len());
            twin.extend_from_slice(&tail[start..]);
        }
        let Ok(o2) = build_generic(p, &twin, origin) else { continue };
        if !in_a(p, o2.points[origin]) || o2.points[origin] == o.points[i] {
            continue;
        }
        let a = direction_field_on(p, &o, i, depth, 1e-12);
        let b = direction_field_on(p, &o2, origin, depth, 1e-12);
        out.push((a, b));
    }
    out
}
