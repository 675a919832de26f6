use serde::{Deserialize, Serialize};

use super::params::MapParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Hard,
    Soft,
}

/// One evaluated constraint. `value` is the measured quantity and `bound`
/// the threshold it is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResult {
    pub constraint: String,
    pub kind: ConstraintKind,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Valid,
    Warnings,
    Invalid,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Valid => 0,
            Verdict::Warnings => 1,
            Verdict::Invalid => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub constraints: Vec<ConstraintResult>,
}

impl ValidationReport {
    pub fn get(&self, id: &str) -> Option<&ConstraintResult> {
        self.constraints.iter().find(|c| c.constraint == id)
    }

    pub fn hard_ok(&self) -> bool {
        self.constraints.iter().filter(|c| c.kind == ConstraintKind::Hard).all(|c| c.pass)
    }

    pub fn all_ok(&self) -> bool {
        self.constraints.iter().all(|c| c.pass)
    }
}

struct Collector(Vec<ConstraintResult>);

impl Collector {
    fn push(&mut self, id: &str, kind: ConstraintKind, pass: bool, value: f64, bound: f64) {
        self.0.push(ConstraintResult { constraint: id.into(), kind, pass, value, bound, note: None });
    }

    /// `value < bound`
    fn below(&mut self, id: &str, kind: ConstraintKind, value: f64, bound: f64) {
        self.push(id, kind, value < bound, value, bound);
    }

    /// `value > bound`
    fn above(&mut self, id: &str, kind: ConstraintKind, value: f64, bound: f64) {
        self.push(id, kind, value > bound, value, bound);
    }

    fn note(&mut self, text: &str) {
        if let Some(last) = self.0.last_mut() {
            last.note = Some(text.into());
        }
    }
}

/// Largest `chi` such that `tan γ < chi tan α` implies
/// `γ < arctan(6/5 tan α) - α` for every leaf angle α occurring in A.
pub fn angle_constant(p: &MapParams) -> f64 {
    let tan_max = 2.0 * (p.c * (p.lambda + 1.0 / p.sigma)).sqrt();
    let a_max = tan_max.atan();
    let n = 4096;
    (1..=n)
        .map(|i| {
            let a = a_max * i as f64 / n as f64;
            let ta = a.tan();
            ((1.2 * ta).atan() - a).tan() / ta
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn validate(p: &MapParams) -> ValidationReport {
    use ConstraintKind::{Hard, Soft};
    let mut c = Collector(Vec::new());
    let third = 1.0 / 3.0;

    c.above("lambda_positive", Hard, p.lambda, 0.0);
    c.below("lambda_below_third", Hard, p.lambda, third);
    c.above("sigma_above_3", Hard, p.sigma, 3.0);
    c.above("q_above_two_thirds", Hard, p.q, 2.0 / 3.0);
    c.below("q_below_1", Hard, p.q, 1.0);
    c.above("t_above_third", Hard, p.t, third);
    c.below("t_below_1", Hard, p.t, 1.0);
    c.above("c_positive", Hard, p.c, 0.0);
    c.above("b_above_1", Hard, p.b, 1.0);

    let ratio = if p.lambda > 0.0 && p.sigma > 1.0 { -p.lambda.ln() / p.sigma.ln() } else { f64::NAN };
    c.above("exponent_ratio_lower", Hard, ratio, 1.0 / p.b);
    c.below("exponent_ratio_upper", Hard, ratio, p.b);

    let wing = p.c * p.w_max * p.w_max;
    c.above("wing_height_lower", Hard, wing, 1.0 / p.sigma);
    c.below("wing_height_upper", Hard, wing, third);
    c.above("wing_left_inside", Hard, p.q - p.w_max, 0.0);
    c.below("wing_right_inside", Hard, p.q + p.w_max, 1.0);
    c.above("w_max_positive", Hard, p.w_max, 0.0);

    c.above("gap_r1_r3", Hard, p.r3_y0, p.r1_top());
    c.push("r3_above_third", Hard, p.r3_y0 >= third, p.r3_y0, third);
    c.below("gap_r3_r4", Hard, p.r3_top(), p.r4_bottom());
    c.below("gap_r4_r5", Hard, p.r4_top(), p.r5_bottom());

    c.below("image_r1_left_of_r3", Hard, p.lambda, p.r3_a - p.lambda);
    c.below("image_r3_left_of_wings", Hard, p.r3_a, p.q - p.w_max);
    c.below("image_r1_left_of_wings", Hard, p.lambda, p.q - p.w_max);
    c.below("image_r3_left_of_r5", Hard, p.r3_a, 1.0 - p.lambda);

    let tan10 = 2.0 * (p.c * (p.lambda + 1.0 / p.sigma)).sqrt();
    c.below("tan10", Soft, tan10, (std::f64::consts::PI / 10.0).atan());
    c.note("bound read literally as arctan(pi/10); tan(pi/10) = 0.3249 would be the dimensional reading");

    c.above("wing_tips_clear_r1", Soft, wing - p.lambda, 1.0 / p.sigma);
    c.note("every parabola wing of R4' leaves R1 through its top side");

    let chi = angle_constant(p);
    let x = p.lambda;
    let lhs = (3.0 * p.c * x * x).powf(1.0 + 1.0 / p.b);
    c.below("cone_sufficient", Soft, lhs, p.c * chi * x * x);
    c.note("(3 c x^2)^(1+1/b) < c chi x^2 at the worst case x = lambda");

    let constraints = c.0;
    let hard = constraints.iter().filter(|r| r.kind == Hard).all(|r| r.pass);
    let soft = constraints.iter().filter(|r| r.kind == Soft).all(|r| r.pass);
    let verdict = match (hard, soft) {
        (false, _) => Verdict::Invalid,
        (true, false) => Verdict::Warnings,
        (true, true) => Verdict::Valid,
    };
    ValidationReport { verdict, constraints }
}
