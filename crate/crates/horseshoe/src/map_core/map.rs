use serde::{Deserialize, Serialize};

use super::geom::{Mat2, Point};
use super::params::MapParams;

/// Horizontal-strip classification of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    R1,
    R2,
    R3,
    R4,
    R5,
    /// Between R3 and R4.
    GapLower,
    /// Between R4 and R5.
    GapUpper,
    Outside,
}

impl RegionLabel {
    pub fn is_branch(self) -> bool {
        matches!(self, RegionLabel::R1 | RegionLabel::R3 | RegionLabel::R4 | RegionLabel::R5)
    }
}

/// One smooth piece of the map. R4 is split at `y = t` so that every
/// branch has a single symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Branch {
    R1,
    R3,
    R4Lo,
    R4Up,
    R5,
}

impl Branch {
    pub const ALL: [Branch; 5] = [Branch::R1, Branch::R3, Branch::R4Lo, Branch::R4Up, Branch::R5];

    /// Band symbol of the image of this branch.
    pub fn symbol(self) -> u8 {
        match self {
            Branch::R1 => 0,
            Branch::R4Up | Branch::R5 => 1,
            Branch::R3 | Branch::R4Lo => 2,
        }
    }

    pub fn region(self) -> RegionLabel {
        match self {
            Branch::R1 => RegionLabel::R1,
            Branch::R3 => RegionLabel::R3,
            Branch::R4Lo | Branch::R4Up => RegionLabel::R4,
            Branch::R5 => RegionLabel::R5,
        }
    }

    pub fn is_r4(self) -> bool {
        matches!(self, Branch::R4Lo | Branch::R4Up)
    }

    pub fn is_linear(self) -> bool {
        !self.is_r4()
    }

    /// Whether `next` may follow `self` along an orbit of the invariant set.
    pub fn allows(self, next: Branch) -> bool {
        match self {
            Branch::R1 => true,
            Branch::R3 | Branch::R5 => next != Branch::R1,
            Branch::R4Lo | Branch::R4Up => next == Branch::R1,
        }
    }

    /// Branch taken at time k given the symbols at times k+1 and k+2.
    pub fn from_symbols(s1: u8, s2: u8) -> Branch {
        match (s1, s2) {
            (0, _) => Branch::R1,
            (1, 0) => Branch::R4Up,
            (1, _) => Branch::R5,
            (_, 0) => Branch::R4Lo,
            _ => Branch::R3,
        }
    }
}

pub fn classify(p: &MapParams, pt: Point) -> RegionLabel {
    let (x, y) = (pt.x, pt.y);
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return RegionLabel::Outside;
    }
    if y <= p.r1_top() {
        RegionLabel::R1
    } else if y < p.r3_y0 {
        RegionLabel::R2
    } else if y <= p.r3_top() {
        RegionLabel::R3
    } else if y < p.r4_bottom() {
        RegionLabel::GapLower
    } else if y <= p.r4_top() {
        RegionLabel::R4
    } else if y < p.r5_bottom() {
        RegionLabel::GapUpper
    } else {
        RegionLabel::R5
    }
}

/// Branch containing `pt`, or `None` when the point leaves the domain.
pub fn branch_of(p: &MapParams, pt: Point) -> Option<Branch> {
    match classify(p, pt) {
        RegionLabel::R1 => Some(Branch::R1),
        RegionLabel::R3 => Some(Branch::R3),
        RegionLabel::R5 => Some(Branch::R5),
        RegionLabel::R4 => Some(if pt.y < p.t { Branch::R4Lo } else { Branch::R4Up }),
        _ => None,
    }
}

/// Evaluates the formula of branch `b` without checking membership.
pub fn apply_branch(p: &MapParams, b: Branch, pt: Point) -> Point {
    let (l, s) = (p.lambda, p.sigma);
    match b {
        Branch::R1 => Point::new(l * pt.x, s * pt.y),
        Branch::R5 => Point::new(l * pt.x + 1.0 - l, s * pt.y - s + 1.0),
        Branch::R3 => Point::new(p.r3_a - l * pt.x, 1.0 - s * (pt.y - p.r3_y0)),
        Branch::R4Lo | Branch::R4Up => {
            let u = l * pt.x;
            let w = s * (pt.y - p.t);
            Point::new(p.q + w, p.c * w * w - u)
        }
    }
}

/// Evaluates the inverse formula of branch `b` without checking membership.
pub fn apply_inverse_branch(p: &MapParams, b: Branch, pt: Point) -> Point {
    let (l, s) = (p.lambda, p.sigma);
    match b {
        Branch::R1 => Point::new(pt.x / l, pt.y / s),
        Branch::R5 => Point::new((pt.x - 1.0 + l) / l, (pt.y + s - 1.0) / s),
        Branch::R3 => Point::new((p.r3_a - pt.x) / l, p.r3_y0 + (1.0 - pt.y) / s),
        Branch::R4Lo | Branch::R4Up => {
            let w = pt.x - p.q;
            let u = p.c * w * w - pt.y;
            Point::new(u / l, p.t + w / s)
        }
    }
}

/// `f(pt)`, or `None` if `pt` is in R2, a gap, or outside the square.
pub fn apply(p: &MapParams, pt: Point) -> Option<Point> {
    branch_of(p, pt).map(|b| apply_branch(p, b, pt))
}

/// Offset `K` of the parabola `y = c (x - q)^2 - K` through `pt`.
pub fn parabola_offset(p: &MapParams, pt: Point) -> f64 {
    let w = pt.x - p.q;
    p.c * w * w - pt.y
}

fn offset_slack(p: &MapParams) -> f64 {
    4.0 * f64::EPSILON * (1.0 + p.c * p.w_max * p.w_max)
}

/// Whether `pt` lies in the image of R4 (the parabolic region).
pub fn in_r4_image(p: &MapParams, pt: Point) -> bool {
    let w = pt.x - p.q;
    if w.abs() > p.w_max {
        return false;
    }
    let k = parabola_offset(p, pt);
    let slack = offset_slack(p);
    k >= -slack && k <= p.lambda + slack
}

/// Branch whose image contains `pt`. The tangency point resolves to R4Up.
pub fn inverse_branch_of(p: &MapParams, pt: Point) -> Option<Branch> {
    let (x, y) = (pt.x, pt.y);
    let third = 1.0 / 3.0;
    if (0.0..=p.lambda).contains(&x) && (0.0..=1.0).contains(&y) {
        return Some(Branch::R1);
    }
    if (p.r3_a - p.lambda..=p.r3_a).contains(&x) && (third..=1.0).contains(&y) {
        return Some(Branch::R3);
    }
    if (1.0 - p.lambda..=1.0).contains(&x) && (third..=1.0).contains(&y) {
        return Some(Branch::R5);
    }
    if in_r4_image(p, pt) {
        return Some(if x < p.q { Branch::R4Lo } else { Branch::R4Up });
    }
    None
}

/// `f^{-1}(pt)`, or `None` if `pt` is not in the image of any branch.
pub fn apply_inverse(p: &MapParams, pt: Point) -> Option<Point> {
    inverse_branch_of(p, pt).map(|b| {
        let mut pre = apply_inverse_branch(p, b, pt);
        if b.is_r4() {
            pre.x = pre.x.clamp(0.0, 1.0);
        }
        pre
    })
}

pub fn jacobian_branch(p: &MapParams, b: Branch, pt: Point) -> Mat2 {
    let (l, s) = (p.lambda, p.sigma);
    match b {
        Branch::R1 | Branch::R5 => Mat2::diag(l, s),
        Branch::R3 => Mat2::diag(-l, -s),
        Branch::R4Lo | Branch::R4Up => {
            let w = s * (pt.y - p.t);
            Mat2::new(0.0, s, -l, 2.0 * p.c * s * w)
        }
    }
}

pub fn jacobian(p: &MapParams, pt: Point) -> Option<Mat2> {
    branch_of(p, pt).map(|b| jacobian_branch(p, b, pt))
}

/// Derivative of the inverse branch at the image point `pt`.
pub fn jacobian_inverse_branch(p: &MapParams, b: Branch, pt: Point) -> Mat2 {
    let (l, s) = (p.lambda, p.sigma);
    match b {
        Branch::R1 | Branch::R5 => Mat2::diag(1.0 / l, 1.0 / s),
        Branch::R3 => Mat2::diag(-1.0 / l, -1.0 / s),
        Branch::R4Lo | Branch::R4Up => {
            let w = pt.x - p.q;
            Mat2::new(2.0 * p.c * w / l, -1.0 / l, 1.0 / s, 0.0)
        }
    }
}

pub fn jacobian_inverse(p: &MapParams, pt: Point) -> Option<Mat2> {
    inverse_branch_of(p, pt).map(|b| jacobian_inverse_branch(p, b, pt))
}

/// Exact image of an offset `d` attached to `base` under branch `b`:
/// returns `f_b(base + d) - f_b(base)` without cancellation.
pub fn offset_forward(p: &MapParams, b: Branch, base: Point, d: Point) -> Point {
    let (l, s) = (p.lambda, p.sigma);
    match b {
        Branch::R1 | Branch::R5 => Point::new(l * d.x, s * d.y),
        Branch::R3 => Point::new(-l * d.x, -s * d.y),
        Branch::R4Lo | Branch::R4Up => {
            let w0 = s * (base.y - p.t);
            let dw = s * d.y;
            Point::new(dw, p.c * dw * (2.0 * w0 + dw) - l * d.x)
        }
    }
}

/// [`offset_forward`] with the wing coordinate `x - q` of the base image
/// given explicitly (ignored for linear branches).
pub fn offset_forward_wing(p: &MapParams, b: Branch, w0: f64, d: Point) -> Point {
    match b {
        Branch::R4Lo | Branch::R4Up => {
            let dw = p.sigma * d.y;
            Point::new(dw, p.c * dw * (2.0 * w0 + dw) - p.lambda * d.x)
        }
        _ => offset_forward(p, b, Point::new(0.0, 0.0), d),
    }
}

/// [`offset_backward`] with the wing coordinate of the image given explicitly.
pub fn offset_backward_wing(p: &MapParams, b: Branch, w0: f64, d: Point) -> Point {
    match b {
        Branch::R4Lo | Branch::R4Up => {
            let dw = d.x;
            let du = p.c * dw * (2.0 * w0 + dw) - d.y;
            Point::new(du / p.lambda, dw / p.sigma)
        }
        _ => offset_backward(p, b, Point::new(0.0, 0.0), d),
    }
}

/// Inverse of [`offset_forward`]: `image` is the image of the base point.
pub fn offset_backward(p: &MapParams, b: Branch, image: Point, d: Point) -> Point {
    let (l, s) = (p.lambda, p.sigma);
    match b {
        Branch::R1 | Branch::R5 => Point::new(d.x / l, d.y / s),
        Branch::R3 => Point::new(-d.x / l, -d.y / s),
        Branch::R4Lo | Branch::R4Up => {
            let w0 = image.x - p.q;
            let dw = d.x;
            let du = p.c * dw * (2.0 * w0 + dw) - d.y;
            Point::new(du / l, dw / s)
        }
    }
}

/// Whether `pt` is in `A = R4' ∩ R1 \ {Q}`.
pub fn in_a(p: &MapParams, pt: Point) -> bool {
    pt.y >= 0.0 && pt.y <= p.r1_top() && in_r4_image(p, pt) && !(pt.x == p.q && pt.y == 0.0)
}

/// Unit tangent of the local parabola through `pt`, or `None` outside R4'.
pub fn leaf_tangent(p: &MapParams, pt: Point) -> Option<Point> {
    if !in_r4_image(p, pt) {
        return None;
    }
    Some(Point::new(1.0, 2.0 * p.c * (pt.x - p.q)).normalized())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OrbitRecord {
    /// `forward[k] = f^k(P)`.
    pub forward: Vec<Point>,
    pub forward_labels: Vec<RegionLabel>,
    /// `backward[k] = f^{-k}(P)`.
    pub backward: Vec<Point>,
    pub backward_labels: Vec<RegionLabel>,
    /// Step at which forward iteration stopped, if it did.
    pub forward_escape: Option<usize>,
    pub backward_escape: Option<usize>,
}

pub fn orbit(p: &MapParams, pt: Point, n_fwd: usize, n_bwd: usize) -> OrbitRecord {
    let mut forward = vec![pt];
    let mut forward_labels = vec![classify(p, pt)];
    let mut forward_escape = None;
    for k in 0..n_fwd {
        match apply(p, forward[k]) {
            Some(nx) => {
                forward_labels.push(classify(p, nx));
                forward.push(nx);
            }
            None => {
                forward_escape = Some(k);
                break;
            }
        }
    }
    let mut backward = vec![pt];
    let mut backward_labels = vec![classify(p, pt)];
    let mut backward_escape = None;
    for k in 0..n_bwd {
        match apply_inverse(p, backward[k]) {
            Some(pr) => {
                backward_labels.push(classify(p, pr));
                backward.push(pr);
            }
            None => {
                backward_escape = Some(k);
                break;
            }
        }
    }
    OrbitRecord { forward, forward_labels, backward, backward_labels, forward_escape, backward_escape }
}
