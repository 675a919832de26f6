//! The acceptance suite behind `verify-all`.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use horseshoe::coding::*;
use horseshoe::induced::induced_indices;
use horseshoe::manifolds::*;
use horseshoe::map_core::builder::{build_generic, random_branch_word, random_orbit, Orbit};
use horseshoe::map_core::*;
use horseshoe::splitting::{sample_a_pairs, sample_return_orbit, split_holder, verify_cone_return};
use horseshoe::thermo::*;
use horseshoe::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub status: Status,
    pub measured: String,
    pub tolerance: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!("[{}] {:>2} {}: {} (tolerance: {})", self.status.label(), self.id, self.name, self.measured, self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub params: MapParams,
    pub seed: u64,
    pub strict_like: bool,
    pub criteria: Vec<CriterionResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.status != Status::Fail)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("id,name,status,measured,tolerance\n");
        for c in &self.criteria {
            let _ = writeln!(s, "{},{},{},\"{}\",\"{}\"", c.id, c.name, c.status.label(), c.measured, c.tolerance);
        }
        s
    }
}

pub const CRITERIA: [&str; 12] = [
    "parameter validation",
    "map correctness",
    "cone return",
    "graph transform",
    "stable contraction",
    "vertical curves",
    "splitting regularity",
    "coding",
    "thermodynamics",
    "mixing and non-expansiveness",
    "lyapunov anchors",
    "determinism",
];

fn result(id: u8, ok: bool, measured: String, tolerance: &str) -> CriterionResult {
    CriterionResult {
        id,
        name: CRITERIA[id as usize - 1].to_string(),
        status: if ok { Status::Pass } else { Status::Fail },
        measured,
        tolerance: tolerance.to_string(),
    }
}

fn skipped(id: u8, why: &str) -> CriterionResult {
    CriterionResult {
        id,
        name: CRITERIA[id as usize - 1].to_string(),
        status: Status::Skip,
        measured: why.to_string(),
        tolerance: String::new(),
    }
}

fn failed(id: u8, e: &Error, tolerance: &str) -> CriterionResult {
    result(id, false, format!("error: {e}"), tolerance)
}

/// Criteria 3, 6 and 7 rest on the sufficient conditions; they are skipped
/// for parameters that do not satisfy every constraint.
pub fn strict_like(p: &MapParams) -> bool {
    validate(p).verdict == Verdict::Valid
}

fn rng(seed: u64, id: u8) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(id as u64))
}

/// Orbits of `2 * half + 1` points whose center is in A.
pub fn a_orbits(p: &MapParams, count: usize, half: usize, seed: u64) -> Vec<Orbit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < 1000 * count {
        attempts += 1;
        let mut word = random_branch_word(&mut rng, half, 0.4, 6);
        while word.last().is_some_and(|b| !b.allows(Branch::R4Lo)) {
            word.pop();
        }
        word.push(if out.len() % 2 == 0 { Branch::R4Lo } else { Branch::R4Up });
        let origin = word.len();
        word.push(Branch::R1);
        let tail = random_branch_word(&mut rng, half, 0.4, 6);
        let start = tail.iter().position(|b| Branch::R1.allows(*b)).unwrap_or(tail.len());
        word.extend_from_slice(&tail[start..]);
        let Ok(o) = build_generic(p, &word, origin) else { continue };
        if in_a(p, o.center()) {
            out.push(o);
        }
    }
    out
}

pub fn manifold_options() -> ManifoldOptions {
    ManifoldOptions { c3: 0.3, ..Default::default() }
}

pub fn validation(p: &MapParams) -> CriterionResult {
    let strict = validate(&MapParams::ref_strict());
    let ex = validate(&MapParams::ref_ex());
    let tan = strict.get("tan10").map(|c| (c.value, c.bound, c.pass));
    let ex_tan = ex.get("tan10").map(|c| c.pass);
    let own = validate(p);
    let ok = strict.all_ok() && ex.hard_ok() && ex.verdict == Verdict::Warnings && ex_tan == Some(false) && tan.is_some_and(|t| t.2);
    let (v, b) = tan.map_or((f64::NAN, f64::NAN), |t| (t.0, t.1));
    let measured = format!(
        "REF-STRICT {:?} (tan10 {v:.4} < {b:.4}), REF-EX {:?} (tan10 warning: {}), config {:?}",
        strict.verdict,
        ex.verdict,
        ex_tan == Some(false),
        own.verdict
    );
    result(1, ok, measured, "exact predicates")
}

fn region_sample(p: &MapParams, rng: &mut ChaCha8Rng) -> Point {
    let (lo, hi) = match rng.gen_range(0..4) {
        0 => (0.0, p.r1_top()),
        1 => (p.r3_y0, p.r3_top()),
        2 => (p.r4_bottom(), p.r4_top()),
        _ => (p.r5_bottom(), 1.0),
    };
    Point::new(rng.gen::<f64>(), lo + rng.gen::<f64>() * (hi - lo))
}

/// Round trips are checked both ways. `f(f⁻¹(z)) = z` is well conditioned
/// and held to 1e-12. `f⁻¹(f(P))` divides by λ, so its floor is about
/// `ε/λ`; it is held to `max(1e-12, 64ε/λ)`. Central differences use a step
/// of 1e-4, which is exact for the quadratic branches up to rounding.
pub fn map_correctness(p: &MapParams, seed: u64) -> CriterionResult {
    let mut rng = rng(seed, 2);
    let h = 1e-4;
    let back_tol = 1e-12f64.max(64.0 * f64::EPSILON / p.lambda);
    let (mut forward, mut back, mut fd, mut law) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    while count < 100_000 {
        let pt = region_sample(p, &mut rng);
        let Some(img) = apply(p, pt) else { continue };
        let Some(pre) = apply_inverse(p, img) else {
            back = f64::INFINITY;
            break;
        };
        back = back.max(pre.max_abs_diff(pt));
        match apply(p, pre) {
            Some(z) => forward = forward.max(z.max_abs_diff(img)),
            None => forward = f64::INFINITY,
        }
        let b = branch_of(p, pt).expect("sampled in a strip");
        let j = jacobian_branch(p, b, pt);
        let dx = 0.5 / h * (apply_branch(p, b, pt + Point::new(h, 0.0)) - apply_branch(p, b, pt - Point::new(h, 0.0)));
        let dy = 0.5 / h * (apply_branch(p, b, pt + Point::new(0.0, h)) - apply_branch(p, b, pt - Point::new(0.0, h)));
        fd = fd.max((j.a - dx.x).abs()).max((j.c - dx.y).abs()).max((j.b - dy.x).abs()).max((j.d - dy.y).abs());
        let x0 = rng.gen::<f64>();
        let v = Point::new(x0, p.t + (2.0 * rng.gen::<f64>() - 1.0) * p.r4_half_height());
        if let Some(w) = apply(p, v) {
            law = law.max((w.y - (p.c * (w.x - p.q).powi(2) - p.lambda * x0)).abs());
        }
        count += 1;
    }
    let ok = forward <= 1e-12 && back <= back_tol && fd <= 1e-5 && law <= 1e-12;
    result(
        2,
        ok,
        format!("{count} points: f(f^-1) {forward:.2e}, f^-1(f) {back:.2e} (floor {back_tol:.1e}), jacobian {fd:.2e}, parabola law {law:.2e}"),
        "1e-12 / max(1e-12, 64 eps/lambda) / 1e-5 / 1e-12",
    )
}

pub fn cone_return(p: &MapParams, seed: u64) -> CriterionResult {
    let mut rng = rng(seed, 3);
    let (mut checked, mut passed) = (0, 0);
    let mut worst_u = f64::INFINITY;
    let mut attempts = 0;
    while checked < 1000 && attempts < 100_000 {
        attempts += 1;
        let Ok((o, i)) = sample_return_orbit(p, &mut rng, 6, 2) else { continue };
        match verify_cone_return(p, &o, i) {
            Ok(r) => {
                worst_u = worst_u.min(r.min_expansion_u / r.bound_u);
                passed += r.passes() as usize;
            }
            Err(_) => {}
        }
        checked += 1;
    }
    let ok = checked >= 1000 && passed == checked;
    result(3, ok, format!("{passed}/{checked} first returns pass, min expansion/bound {worst_u:.3e}"), "100% of >= 1000 samples")
}

pub fn graph_transform_check(p: &MapParams, seed: u64) -> CriterionResult {
    let opts = manifold_options();
    let mut rng = rng(seed, 4);
    let per_step = (p.lambda / p.sigma).sqrt();
    let (mut steps, mut worst_factor) = (0, 0.0f64);
    let mut errors = Vec::new();
    for o in a_orbits(p, 40, 20, seed.wrapping_add(41)) {
        let chain = induced_indices(p, &o, o.origin);
        for w in chain.windows(2) {
            if !(in_a(p, o.points[w[0]]) && in_a(p, o.points[w[1]])) {
                continue;
            }
            let mut rho = 1.0;
            let measured = loop {
                if rho < RHO_MIN {
                    break None;
                }
                let Ok(km) = horseshoe::induced::KergodicMap::new(p, &o, w[0], rho, opts.c3) else { break None };
                let s1 = LipGraph::random(km.from, GraphAxis::UToS, 129, 1.0, &mut rng);
                let s2 = LipGraph::random(km.from, GraphAxis::UToS, 129, 1.0, &mut rng);
                match (graph_transform(p, &km, &s1), graph_transform(p, &km, &s2)) {
                    (Ok(a), Ok(b)) => break Some((a.ratio_diff(&b) / s1.ratio_diff(&s2), km.k)),
                    _ => rho /= 2.0,
                }
            };
            match measured {
                Some((ratio, k)) => {
                    worst_factor = worst_factor.max(ratio / (per_step.powi(k as i32) * 1.05));
                    steps += 1;
                }
                None => errors.push("graph transform failed above the minimal radius".to_string()),
            }
        }
    }
    let (mut lip, mut center, mut leaves) = (0.0f64, 0.0f64, 0);
    for o in a_orbits(p, 20, 40, seed.wrapping_add(42)) {
        for stable in [false, true] {
            let leaf = if stable { local_stable(p, &o, o.origin, &opts) } else { local_unstable(p, &o, o.origin, &opts) };
            match leaf {
                Ok(l) => match &l.graph {
                    Some(g) => {
                        lip = lip.max(g.lip_bound);
                        center = center.max(g.value_at_zero().abs());
                        leaves += 1;
                    }
                    None => errors.push("leaf without chart graph".into()),
                },
                Err(e) => errors.push(e.to_string()),
            }
        }
    }
    let mut invariance = 0.0f64;
    for o in a_orbits(p, 50, 40, seed.wrapping_add(43)) {
        match (unstable_invariance_defect(p, &o, o.origin, &opts), stable_invariance_defect(p, &o, o.origin, &opts)) {
            (Ok(u), Ok(s)) => invariance = invariance.max(u).max(s),
            (Err(e), _) | (_, Err(e)) => errors.push(e.to_string()),
        }
    }
    let mut seed_gap = 0.0f64;
    for (n, o) in a_orbits(p, 10, 50, seed.wrapping_add(44)).iter().enumerate() {
        let seeded = ManifoldOptions { seed: Some(seed.wrapping_add(n as u64)), ..opts };
        for stable in [false, true] {
            let pair = if stable {
                (local_stable(p, o, o.origin, &opts), local_stable(p, o, o.origin, &seeded))
            } else {
                (local_unstable(p, o, o.origin, &opts), local_unstable(p, o, o.origin, &seeded))
            };
            match pair {
                (Ok(a), Ok(b)) => match (a.graph, b.graph) {
                    (Some(a), Some(b)) => seed_gap = seed_gap.max(a.sup_diff(&b)),
                    _ => errors.push("leaf without chart graph".into()),
                },
                (Err(e), _) | (_, Err(e)) => errors.push(e.to_string()),
            }
        }
    }
    let ok = errors.is_empty()
        && steps >= 20
        && worst_factor <= 1.0
        && leaves == 40
        && lip <= LEAF_LIPSCHITZ
        && center <= 1e-10
        && invariance <= 1e-6
        && seed_gap <= 2.0 * opts.tol;
    let mut measured = format!(
        "{steps} A-to-A steps, worst factor/bound {worst_factor:.3e}; {leaves} leaves, lip {lip:.3e}, |s(0)| {center:.1e}; invariance {invariance:.2e}; seed gap {seed_gap:.2e}"
    );
    if let Some(e) = errors.first() {
        let _ = write!(measured, "; {} errors, first: {e}", errors.len());
    }
    result(4, ok, measured, "factor <= sqrt(lambda/sigma)^n * 1.05, lip <= 1/3, s(0) <= 1e-10, invariance <= 1e-6, seed gap <= 2 tol")
}

pub fn stable_contraction(p: &MapParams, seed: u64) -> CriterionResult {
    let opts = manifold_options();
    let floor = 0.9 * 0.5 * p.lambda.ln().abs();
    let mut worst = f64::INFINITY;
    let mut done = 0;
    let mut error = None;
    for o in a_orbits(p, 20, 45, seed.wrapping_add(51)) {
        match stable_decay(p, &o, o.origin, 10, 30, &opts).map(|rows| decay_exponent(&rows)) {
            Ok(Some(rate)) => {
                worst = worst.min(rate);
                done += 1;
            }
            Ok(None) => error = Some("no decay samples".to_string()),
            Err(e) => error = Some(e.to_string()),
        }
    }
    let mut measured = format!("{done} base points, min fitted exponent {worst:.4} (floor {floor:.4})");
    if let Some(e) = &error {
        let _ = write!(measured, "; {e}");
    }
    result(5, error.is_none() && done == 20 && worst >= floor, measured, "exponent >= 0.9 * |ln lambda| / 2")
}

pub fn vertical_curves(p: &MapParams, seed: u64) -> CriterionResult {
    let mut rng = rng(seed, 6);
    let (mut d1, mut d2) = (0.0f64, 0.0f64);
    let (mut passages, mut bad) = (0, 0);
    let mut error = None;
    'curves: for _ in 0..20 {
        let mut g = seeded_vertical_curve(p, DEFAULT_EPS1, 129, &mut rng);
        for _ in 0..20 {
            let route = Passage::random(&mut rng);
            g = match r4_passage(p, &g, &route) {
                Ok(h) => h,
                Err(e) => {
                    error = Some(e.to_string());
                    break 'curves;
                }
            };
            match eps1_vertical_check(&g.local_points(), DEFAULT_EPS1) {
                Ok(r) => {
                    d1 = d1.max(r.max_d1);
                    d2 = d2.max(r.max_d2);
                    bad += (!r.pass) as usize;
                }
                Err(_) => bad += 1,
            }
            passages += 1;
        }
    }
    let mut measured = format!("{passages} passages, {bad} not vertical, max |g'| {d1:.3e}, max |g''| {d2:.3e}");
    if let Some(e) = &error {
        let _ = write!(measured, "; {e}");
    }
    result(6, error.is_none() && passages == 400 && bad == 0, measured, "|g'|, |g''| <= eps1 = 0.1")
}

pub fn splitting_regularity(p: &MapParams, seed: u64) -> CriterionResult {
    let mut rng = rng(seed, 7);
    let pairs = sample_a_pairs(p, &mut rng, 1000, 3, 30);
    match split_holder(&pairs) {
        Ok(h) => {
            let describe = |f: &horseshoe::splitting::FieldHolder| match f {
                horseshoe::splitting::FieldHolder::Fitted(fit) => format!("alpha {:.3} ({} binned pairs)", fit.alpha_est, fit.pairs_used),
                horseshoe::splitting::FieldHolder::Flat { max_gap } => format!("flat (max gap {max_gap:.1e})"),
            };
            let measured = format!("{} resolved pairs; e_u {}; e_s {}", h.resolved, describe(&h.u), describe(&h.s));
            result(7, h.passes(0.45, 1000), measured, "alpha >= 0.45 over >= 1000 resolved pairs")
        }
        Err(e) => failed(7, &e, "alpha >= 0.45 over >= 1000 resolved pairs"),
    }
}

pub fn coding(seed: u64) -> CriterionResult {
    let p = MapParams::ref_ex();
    let tol = "counts 9, 81; diam <= K scale (n <= 3); round trip and shift within atom radii; rate within 20%; theta-holder >= 0.8 gamma";
    let counts: Vec<usize> = [1, 2].iter().map(|&n| count_atoms(&p, n, DEFAULT_RESOLUTION).distinct_atoms).collect();
    let table = match decay_table(&p, 4, DEFAULT_RESOLUTION) {
        Ok(t) => t,
        Err(e) => return failed(8, &e, tol),
    };
    let k = table.constant(2);
    let within_k = table.rows.iter().filter(|r| (1..=3).contains(&r.n)).all(|r| r.max_diameter <= k * diameter_scale(&p, r.n) * (1.0 + 1e-12));
    let rel_rate = table.rate / table.reference_rate;

    let mut rng = rng(seed, 8);
    let mut cache = AtomCache::new(DEFAULT_RESOLUTION);
    let (mut trips, mut trip_fail, mut attempts) = (0, 0, 0);
    while trips < 1000 && attempts < 100_000 {
        attempts += 1;
        let Ok(orbit) = random_orbit(&p, &mut rng, 8, 0.5) else { continue };
        let pt = orbit.center();
        let Ok(it) = itinerary(&p, pt, 3) else { continue };
        let a = cache.get(&p, &it.word).clone();
        match theta_of_atom(&a) {
            Ok(t) if a.contains(pt) && t.point.dist(pt) <= t.radius => {}
            _ => trip_fail += 1,
        }
        trips += 1;
    }
    let (mut shifts, mut shift_fail) = (0, 0);
    for i in 0..300 {
        let word = Word::random(&mut rng, 1 + i % 3);
        match semiconjugacy_defect(&p, &word, &mut cache) {
            Ok((defect, bound)) => {
                shifts += 1;
                shift_fail += (defect > bound) as usize;
            }
            Err(Error::EmptyAtom(_)) => {}
            Err(_) => shift_fail += 1,
        }
    }
    let pairs = realizable_word_pairs(&p, &mut rng, 14, 10, 1000);
    let fit = theta_holder_fit(&p, &pairs);
    let (gamma_est, gamma, fit_ok) = match &fit {
        Ok(f) => (f.gamma_est, f.gamma, f.passes() && f.pairs_used >= 1000),
        Err(_) => (f64::NAN, theta_gamma(&p), false),
    };
    let ok = counts == [9, 81]
        && within_k
        && trips == 1000
        && trip_fail == 0
        && shift_fail == 0
        && shifts > 250
        && (0.8..=1.2).contains(&rel_rate)
        && fit_ok;
    let measured = format!(
        "REF-EX atoms {counts:?}; K {k:.3}, diameters within K: {within_k}; round trip {}/{trips}; shift {}/{shifts}; rate {:.4} vs {:.4} (ratio {rel_rate:.3}); theta-holder {gamma_est:.3} vs gamma {gamma:.3}",
        trips - trip_fail,
        shifts - shift_fail,
        table.rate,
        table.reference_rate
    );
    result(8, ok, measured, tol)
}

pub fn thermodynamics() -> CriterionResult {
    let p = MapParams::ref_ex();
    let tol = "1e-10 closed forms; |P_{m+1}-P_m| <= 2 var(m); gap <= 2 var(m); masses > 0; spread <= 1e-10";
    let mut notes = Vec::new();
    let zero = match pull_back(&p, &Potential::zero(), 4, DEFAULT_RESOLUTION).and_then(|c| pressure(&c)) {
        Ok(r) => r.pressure,
        Err(e) => return failed(9, &e, tol),
    };
    let zero_err = (zero - 3f64.ln()).abs();
    let a: [f64; 3] = [0.3, -1.2, 2.0];
    let z: f64 = a.iter().map(|v| v.exp()).sum();
    let cyl = CylinderPotential::bernoulli(a);
    let mut bern_err = 0.0f64;
    match (pressure(&cyl), gibbs_measure(&cyl)) {
        (Ok(pr), Ok(mu)) => {
            bern_err = bern_err.max((pr.pressure - z.ln()).abs());
            let probs: Vec<f64> = a.iter().map(|v| v.exp() / z).collect();
            for (x, q) in mu.masses.iter().zip(&probs) {
                bern_err = bern_err.max((x - q).abs());
            }
            let h: f64 = probs.iter().map(|q| -q * q.ln()).sum();
            bern_err = bern_err.max((entropy(&mu) - h).abs());
        }
        (Err(e), _) | (_, Err(e)) => return failed(9, &e, tol),
    }
    let potentials = [Potential::zero(), Potential::affine(1.0, 0.0, 0.0), Potential::cosine(0.3)];
    let (mut cauchy_ok, mut worst_cauchy) = (true, 0.0f64);
    let (mut gap_ok, mut worst_gap) = (true, 0.0f64);
    let (mut positive, mut spread) = (true, 0.0f64);
    for phi in &potentials {
        match pressure_sweep(&p, phi, 7, DEFAULT_RESOLUTION) {
            Ok(rows) => {
                for w in rows.windows(2) {
                    let ratio = if w[0].variation_bound > 0.0 { w[1].delta / (2.0 * w[0].variation_bound) } else { w[1].delta };
                    worst_cauchy = worst_cauchy.max(ratio);
                    cauchy_ok &= w[1].delta <= 2.0 * w[0].variation_bound + 1e-12;
                }
            }
            Err(e) => notes.push(format!("{}: {e}", phi.name)),
        }
        for m in [3, 5] {
            match equilibrium_state(&p, phi, m, DEFAULT_RESOLUTION) {
                Ok((mu, report)) => {
                    worst_gap = worst_gap.max(report.variational_gap());
                    gap_ok &= report.variational_gap() <= 2.0 * report.variation_bound + 1e-10;
                    positive &= mu.masses.iter().all(|&x| x > 0.0);
                    spread = spread.max(mu.perron_spread);
                }
                Err(e) => notes.push(format!("{}: {e}", phi.name)),
            }
        }
    }
    let ok = notes.is_empty() && zero_err <= 1e-10 && bern_err <= 1e-10 && cauchy_ok && gap_ok && positive && spread <= 1e-10;
    let mut measured = format!(
        "P(0) - ln 3 = {zero_err:.1e}; bernoulli {bern_err:.1e}; worst cauchy ratio {worst_cauchy:.3}; worst variational gap {worst_gap:.1e}; masses positive: {positive}; spread {spread:.1e}"
    );
    if let Some(n) = notes.first() {
        let _ = write!(measured, "; {n}");
    }
    result(9, ok, measured, tol)
}

pub fn mixing_and_nonexpansive(p: &MapParams, seed: u64, strict: bool) -> CriterionResult {
    let ex = MapParams::ref_ex();
    let mut rng = rng(seed, 10);
    let (mut disks, mut worst) = (0, 0usize);
    let mut missing = 0;
    let mut attempts = 0;
    while disks < 10 && attempts < 10_000 {
        attempts += 1;
        let Ok(o) = random_orbit(&ex, &mut rng, 10, 0.5) else { continue };
        let u = Disk { center: o.center(), radius: 0.05 };
        match mixing_times(&ex, &u, 50) {
            Ok(r) => match r.n_plus {
                Some(n) => worst = worst.max(n),
                None => missing += 1,
            },
            Err(_) => missing += 1,
        }
        disks += 1;
    }
    let mut ok = disks == 10 && missing == 0 && worst <= 50;
    let mut measured = format!("REF-EX: {disks} disks, max n+ {worst}, {missing} without n+");
    if strict {
        match nonexpansive_pair(p, 1e-3, 50, seed) {
            Ok(r) => {
                ok &= r.a != r.b && r.distance >= 1e-6 && r.sup_dist <= 1e-3;
                let _ = write!(measured, "; pair at distance {:.3e}, sup over |n| <= 50 {:.3e}", r.distance, r.sup_dist);
            }
            Err(e) => {
                ok = false;
                let _ = write!(measured, "; non-expansive pair: {e}");
            }
        }
    } else {
        measured.push_str("; non-expansive pair skipped (not all constraints hold)");
    }
    result(10, ok, measured, "n+ <= 50; |A-B| >= 1e-6, sup distance <= 1e-3")
}

pub fn lyapunov_anchors(p: &MapParams, seed: u64, strict: bool) -> CriterionResult {
    let mut fixed = 0.0f64;
    for m in [Point::new(0.0, 0.0), Point::new(1.0, 1.0)] {
        match lyapunov(p, m, 100) {
            Ok(l) => fixed = fixed.max((l.chi_u - p.sigma.ln()).abs()).max((l.chi_s - p.lambda.ln()).abs()),
            Err(e) => return failed(11, &e, "1e-12; chi_u >= 0.45 ln sigma"),
        }
    }
    let mut ok = fixed <= 1e-12;
    let mut measured = format!("fixed points {fixed:.1e}");
    if strict {
        let mut rng = rng(seed, 11);
        let (mut done, mut worst) = (0, f64::INFINITY);
        let mut attempts = 0;
        while done < 10 && attempts < 1000 {
            attempts += 1;
            let Ok(orbit) = random_orbit(p, &mut rng, 1001, 0.5) else { continue };
            if let Ok(l) = lyapunov_on_orbit(p, &orbit, 1000) {
                worst = worst.min(l.chi_u / p.sigma.ln());
                done += 1;
            }
        }
        ok &= done == 10 && worst >= 0.45;
        let _ = write!(measured, "; {done} sampled orbits, min chi_u / ln sigma {worst:.4}");
    } else {
        measured.push_str("; sampled orbits skipped (not all constraints hold)");
    }
    result(11, ok, measured, "1e-12; chi_u >= 0.45 ln sigma")
}

/// Criteria 1 to 11 with the runtime of each.
pub fn run_criteria(p: &MapParams, seed: u64, mut progress: impl FnMut(&CriterionResult, f64)) -> SuiteReport {
    let strict = strict_like(p);
    let mut criteria = Vec::new();
    let mut timed = |f: &mut dyn FnMut() -> CriterionResult| {
        let t = Instant::now();
        let r = f();
        progress(&r, t.elapsed().as_secs_f64());
        criteria.push(r);
    };
    let why = "strict-only: the parameters do not satisfy every constraint";
    timed(&mut || validation(p));
    timed(&mut || map_correctness(p, seed));
    timed(&mut || if strict { cone_return(p, seed) } else { skipped(3, why) });
    timed(&mut || graph_transform_check(p, seed));
    timed(&mut || stable_contraction(p, seed));
    timed(&mut || if strict { vertical_curves(p, seed) } else { skipped(6, why) });
    timed(&mut || if strict { splitting_regularity(p, seed) } else { skipped(7, why) });
    timed(&mut || coding(seed));
    timed(&mut || thermodynamics());
    timed(&mut || mixing_and_nonexpansive(p, seed, strict));
    timed(&mut || lyapunov_anchors(p, seed, strict));
    SuiteReport { params: *p, seed, strict_like: strict, criteria }
}

/// Full suite: criteria 1 to 11, then a second pass whose serialized
/// report must match the first byte for byte.
pub fn verify_all(p: &MapParams, seed: u64, mut progress: impl FnMut(&CriterionResult, f64)) -> SuiteReport {
    let t = Instant::now();
    let mut report = run_criteria(p, seed, &mut progress);
    let first = serde_json::to_string(&report).expect("report serializes");
    let second = serde_json::to_string(&run_criteria(p, seed, |_, _| {})).expect("report serializes");
    let same = first == second;
    let r = result(12, same, format!("second pass {} ({} bytes)", if same { "identical" } else { "differs" }, first.len()), "byte-identical");
    progress(&r, t.elapsed().as_secs_f64());
    report.criteria.push(r);
    report
}
