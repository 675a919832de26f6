//! Hölder potentials pulled back to the full 3-shift, finite-memory
//! transfer matrices, pressure, Gibbs and equilibrium measures, entropy and
//! Lyapunov exponents.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{atom, Word};
use crate::error::{Error, Result};
use crate::map_core::builder::Orbit;
use crate::map_core::{apply, apply_inverse, jacobian, jacobian_inverse, theta_point, MapParams, Point};
use crate::splitting::{orbit_inverse_jacobian, orbit_jacobian};

/// Real function on the square with declared Hölder data
/// `|φ(a) − φ(b)| <= holder_c · |a − b|^holder_theta`.
#[derive(Clone)]
pub struct Potential {
    pub name: String,
    pub holder_c: f64,
    pub holder_theta: f64,
    eval: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("holder_c", &self.holder_c)
            .field("holder_theta", &self.holder_theta)
            .finish()
    }
}

impl Potential {
    pub fn new(name: &str, holder_c: f64, holder_theta: f64, eval: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Potential { name: name.into(), holder_c, holder_theta, eval: Arc::new(eval) }
    }

    pub fn zero() -> Self {
        Potential::new("zero", 0.0, 1.0, |_| 0.0)
    }

    /// `a x + b y + k`.
    pub fn affine(a: f64, b: f64, k: f64) -> Self {
        Potential::new(&format!("{a}*x+{b}*y+{k}"), a.hypot(b), 1.0, move |pt| a * pt.x + b * pt.y + k)
    }

    /// `amp · cos(2π x)`.
    pub fn cosine(amp: f64) -> Self {
        let c = amp.abs() * 2.0 * std::f64::consts::PI;
        Potential::new(&format!("{amp}*cos(2*pi*x)"), c, 1.0, move |pt| amp * (2.0 * std::f64::consts::PI * pt.x).cos())
    }

    /// Parses `zero`, `x`, `y`, `affine:a,b,k` or `cos:amp`.
    pub fn named(spec: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unknown potential {spec:?}"));
        match spec {
            "zero" | "0" => return Ok(Potential::zero()),
            "x" => return Ok(Potential::affine(1.0, 0.0, 0.0)),
            "y" => return Ok(Potential::affine(0.0, 1.0, 0.0)),
            _ => {}
        }
        let (kind, args) = spec.split_once(':').ok_or_else(bad)?;
        let vals: Vec<f64> = args.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        match (kind, vals.as_slice()) {
            ("affine", [a, b, k]) => Ok(Potential::affine(*a, *b, *k)),
            ("cos", [amp]) => Ok(Potential::cosine(*amp)),
            _ => Err(bad()),
        }
    }

    pub fn eval(&self, pt: Point) -> f64 {
        (self.eval)(pt)
    }

    /// Spot-checks the declared Hölder bound on random pairs of the square.
    pub fn check_holder(&self, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let a = Point::new(rng.gen(), rng.gen());
            let scale = 10f64.powf(-rng.gen_range(0.0..6.0));
            let b = Point::new((a.x + scale * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0), (a.y + scale * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0));
            let d = a.dist(b);
            let gap = (self.eval(a) - self.eval(b)).abs();
            if gap > self.holder_c * d.powf(self.holder_theta) * (1.0 + 1e-9) + 1e-15 {
                return Err(Error::InvalidInput(format!(
                    "potential {} violates its Hölder bound at {a:?}, {b:?}: {gap:e}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Potential depending on the first `m` symbols: `values[idx]` for the
/// word with base-3 digits `idx` (first symbol most significant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderPotential {
    pub m: usize,
    pub values: Vec<f64>,
    pub variation_bound: f64,
    /// Words whose code is not realized by the map; they take the value of
    /// the nearest realized word.
    pub flagged: Vec<usize>,
}

impl CylinderPotential {
    /// Potential depending on the first symbol only.
    pub fn bernoulli(a: [f64; 3]) -> Self {
        CylinderPotential { m: 1, values: a.to_vec(), variation_bound: 0.0, flagged: Vec::new() }
    }

    pub fn constant(m: usize, value: f64) -> Self {
        CylinderPotential { m, values: vec![value; 3usize.pow(m as u32)], variation_bound: 0.0, flagged: Vec::new() }
    }
}

pub fn word_digits(mut idx: usize, m: usize) -> Vec<u8> {
    let mut out = vec![0u8; m];
    for slot in out.iter_mut().rev() {
        *slot = (idx % 3) as u8;
        idx /= 3;
    }
    out
}

pub fn word_index(symbols: &[u8]) -> usize {
    symbols.iter().fold(0, |acc, &s| acc * 3 + s as usize)
}

/// The centered word of a one-sided `m`-word: time zero sits at position
/// `⌊(m−1)/2⌋` and the left side is padded with zeros to symmetric length.
pub fn centered_padding(symbols: &[u8]) -> Word {
    let m = symbols.len();
    let mid = (m - 1) / 2;
    let level = m - 1 - mid;
    let mut padded = vec![0u8; level - mid];
    padded.extend_from_slice(symbols);
    Word { symbols: padded, center: level }
}

/// `φ∘Θ` on `m`-cylinders. Θ of a word is the orbit point coded by the
/// zero-padded word; the variation bound uses the diameter of the atom
/// cover containing the cylinder.
pub fn pull_back(p: &MapParams, phi: &Potential, m: usize, resolution: u32) -> Result<CylinderPotential> {
    if m == 0 {
        return Err(Error::InvalidInput("memory must be at least 1".into()));
    }
    let count = 3usize.pow(m as u32);
    let words: Vec<Word> = (0..count).map(|i| centered_padding(&word_digits(i, m))).collect();
    let points: Vec<Option<Point>> = words.par_iter().map(|w| theta_point(p, &w.symbols, w.center).ok()).collect();

    let mut keys: Vec<(Vec<u8>, Word)> = words.iter().map(|w| (w.key(), w.clone())).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0));
    keys.dedup_by(|a, b| a.0 == b.0);
    let radii: Vec<(Vec<u8>, f64)> = keys.par_iter().map(|(k, w)| (k.clone(), atom(p, w, resolution).diameter_ub)).collect();
    let radius_of = |w: &Word| {
        let k = w.key();
        radii.binary_search_by(|e| e.0.cmp(&k)).map(|i| radii[i].1).expect("key present")
    };
    let variation_bound = words.iter().map(|w| phi.holder_c * radius_of(w).powf(phi.holder_theta)).fold(0.0, f64::max);

    let realized: Vec<usize> = (0..count).filter(|&i| points[i].is_some()).collect();
    if realized.is_empty() {
        return Err(Error::EmptyAtom(format!("no realized word of length {m}")));
    }
    let mut values = vec![0.0; count];
    let mut flagged = Vec::new();
    for i in 0..count {
        let pt = match points[i] {
            Some(pt) => pt,
            None => {
                flagged.push(i);
                let digits = word_digits(i, m);
                let nearest = realized
                    .iter()
                    .min_by_key(|&&j| word_digits(j, m).iter().zip(&digits).filter(|(a, b)| a != b).count())
                    .expect("nonempty");
                points[*nearest].expect("realized")
            }
        };
        values[i] = phi.eval(pt);
    }
    Ok(CylinderPotential { m, values, variation_bound, flagged })
}

const POWER_TOL: f64 = 1e-12;
const POWER_BUDGET: usize = 100_000;

/// `(A v)(w) = Σ_a exp(value(w a)) v(tail(w a))` on `(m−1)`-word states.
fn apply_transfer(weights: &[f64], v: &[f64]) -> Vec<f64> {
    let states = v.len();
    (0..states).into_par_iter().map(|s| (0..3).map(|a| weights[s * 3 + a] * v[(s * 3 + a) % states]).sum()).collect()
}

/// `(u A)(w′) = Σ_{w → w′} u(w) exp(value(w a))`.
fn apply_transfer_transpose(weights: &[f64], u: &[f64]) -> Vec<f64> {
    let states = u.len();
    let mut out = vec![0.0; states];
    for s in 0..states {
        for a in 0..3 {
            out[(s * 3 + a) % states] += u[s] * weights[s * 3 + a];
        }
    }
    out
}

fn weights_of(cyl: &CylinderPotential) -> Result<Vec<f64>> {
    let vmax = cyl.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !vmax.is_finite() {
        return Err(Error::InvalidInput("non-finite potential values".into()));
    }
    Ok(cyl.values.iter().map(|v| (v - vmax).exp()).collect())
}

fn shift_of(cyl: &CylinderPotential) -> f64 {
    cyl.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

struct Perron {
    rho: f64,
    vec: Vec<f64>,
    iterations: usize,
}

fn power_iteration(start: Vec<f64>, step: impl Fn(&[f64]) -> Vec<f64>) -> Result<Perron> {
    let mut v = start;
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    let mut rho = 0.0;
    let mut last_change = f64::INFINITY;
    for it in 1..=POWER_BUDGET {
        let w = step(&v);
        let new_rho: f64 = w.iter().sum();
        let next: Vec<f64> = w.iter().map(|x| x / new_rho).collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs() / b.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
        let rho_change = (new_rho - rho).abs() / new_rho;
        v = next;
        rho = new_rho;
        last_change = change.max(rho_change);
        if change <= POWER_TOL && rho_change <= POWER_TOL {
            return Ok(Perron { rho, vec: v, iterations: it });
        }
    }
    Err(Error::NoConvergence { iterations: POWER_BUDGET, last_change })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureResult {
    pub pressure: f64,
    pub iterations: usize,
}

/// `ln` of the leading eigenvalue of the transfer matrix.
pub fn pressure(cyl: &CylinderPotential) -> Result<PressureResult> {
    let weights = weights_of(cyl)?;
    let states = 3usize.pow(cyl.m as u32 - 1);
    let perron = power_iteration(vec![1.0; states], |v| apply_transfer(&weights, v))?;
    Ok(PressureResult { pressure: perron.rho.ln() + shift_of(cyl), iterations: perron.iterations })
}

/// Markov measure on the full shift built from the left and right Perron
/// vectors of the transfer matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderMeasure {
    pub m: usize,
    /// Mass of every `m`-word, indexed like [`CylinderPotential::values`].
    pub masses: Vec<f64>,
    pub pressure: f64,
    pub integral: f64,
    /// Transition probabilities between `(m−1)`-word states: `trans[s*3+a]`.
    pub transitions: Vec<f64>,
    /// Largest spread between normalized right eigenvectors from random starts.
    pub perron_spread: f64,
}

impl CylinderMeasure {
    fn states(&self) -> usize {
        3usize.pow(self.m as u32 - 1)
    }

    /// Mass of an arbitrary finite word, extending the measure as a Markov
    /// chain beyond length `m`.
    pub fn mass(&self, word: &[u8]) -> f64 {
        let m = self.m;
        if word.len() <= m {
            let free = m - word.len();
            let base = word_index(word) * 3usize.pow(free as u32);
            return self.masses[base..base + 3usize.pow(free as u32)].iter().sum();
        }
        let states = self.states();
        let mut mass = self.masses[word_index(&word[..m])];
        for k in m..word.len() {
            let s = word_index(&word[k + 1 - m..k]) % states;
            mass *= self.transitions[s * 3 + word[k] as usize];
        }
        mass
    }

    /// Masses of all `k`-words.
    pub fn block_masses(&self, k: usize) -> Vec<f64> {
        (0..3usize.pow(k as u32)).map(|i| self.mass(&word_digits(i, k))).collect()
    }

    /// Block entropy `−Σ μ[w] ln μ[w]` over `k`-words.
    pub fn block_entropy(&self, k: usize) -> f64 {
        self.block_masses(k).iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
    }

    /// Largest `|μ[w₂..w_m] − Σ_a μ[a w₂..w_m]|`.
    pub fn invariance_defect(&self) -> f64 {
        let m = self.m;
        if m == 1 {
            return 0.0;
        }
        let shorter = self.block_masses(m - 1);
        let states = self.states();
        (0..states)
            .map(|s| {
                let left: f64 = (0..3).map(|a| self.masses[a * states + s]).sum();
                (left - shorter[s]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn csv_header() -> &'static str {
        "word,mass"
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let w: String = word_digits(i, self.m).iter().map(|s| char::from(b'0' + s)).collect();
                format!("{w},{x:.17e}")
            })
            .collect()
    }
}

/// Gibbs measure of a cylinder potential.
pub fn gibbs_measure(cyl: &CylinderPotential) -> Result<CylinderMeasure> {
    let weights = weights_of(cyl)?;
    let states = 3usize.pow(cyl.m as u32 - 1);
    let right = power_iteration(vec![1.0; states], |v| apply_transfer(&weights, v))?;
    let left = power_iteration(vec![1.0; states], |u| apply_transfer_transpose(&weights, u))?;
    let rho = right.rho;
    let (u, v) = (&left.vec, &right.vec);
    let norm: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * rho;
    let masses: Vec<f64> = (0..states * 3).map(|i| u[i / 3] * weights[i] * v[i % states] / norm).collect();
    let transitions: Vec<f64> = (0..states * 3).map(|i| weights[i] * v[i % states] / (rho * v[i / 3])).collect();
    let integral = masses.iter().zip(&cyl.values).map(|(a, b)| a * b).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut spread: f64 = 0.0;
    for _ in 0..3 {
        let start: Vec<f64> = (0..states).map(|_| rng.gen_range(0.1..1.0)).collect();
        let other = power_iteration(start, |x| apply_transfer(&weights, x))?;
        spread = other.vec.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(spread, f64::max);
    }
    Ok(CylinderMeasure {
        m: cyl.m,
        masses,
        pressure: rho.ln() + shift_of(cyl),
        integral,
        transitions,
        perron_spread: spread,
    })
}

/// `H_{m+1} − H_m` of the measure (its exact entropy as a Markov chain).
pub fn entropy(measure: &CylinderMeasure) -> f64 {
    measure.block_entropy(measure.m + 1) - measure.block_entropy(measure.m)
}

/// Bounds of `μ[w] / exp(−|w| P + Σ values)` over random words: returns
/// the constant `C_g` with every ratio in `[1/C_g, C_g]`.
pub fn gibbs_constant(cyl: &CylinderMeasure, potential: &CylinderPotential, words: usize, max_len: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = cyl.m;
    let mut worst: f64 = 1.0;
    for _ in 0..words {
        let len = rng.gen_range(m..=max_len.max(m));
        let w: Vec<u8> = (0..len).map(|_| rng.gen_range(0..3)).collect();
        let sum: f64 = (0..=len - m).map(|k| potential.values[word_index(&w[k..k + m])]).sum();
        let ratio = cyl.mass(&w) / (sum - len as f64 * cyl.pressure).exp();
        worst = worst.max(ratio).max(1.0 / ratio);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomMass {
    pub atom: String,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub m: usize,
    pub pressure: f64,
    pub entropy: f64,
    pub integral: f64,
    pub variation_bound: f64,
    #[serde(rename = "gibbs_C")]
    pub gibbs_c: f64,
    pub atom_level: usize,
    pub atom_masses: Vec<AtomMass>,
    /// Mass of the length-21 cylinders coding the tangency point.
    pub tangency_mass: f64,
    pub flagged_words: usize,
    pub perron_spread: f64,
}

impl EquilibriumReport {
    /// `|h + ∫φ dμ − P|`.
    pub fn variational_gap(&self) -> f64 {
        (self.entropy + self.integral - self.pressure).abs()
    }
}

/// Equilibrium state at memory `m`, with masses of the level
/// `⌊(m−1)/2⌋` atoms. An atom is named by its determining symbols
/// `s_{−n+1} .. s_n`, printed with the center mark.
pub fn equilibrium_state(p: &MapParams, phi: &Potential, m: usize, resolution: u32) -> Result<(CylinderMeasure, EquilibriumReport)> {
    let cyl = pull_back(p, phi, m, resolution)?;
    let measure = gibbs_measure(&cyl)?;
    let report = equilibrium_report(&cyl, &measure);
    Ok((measure, report))
}

pub fn equilibrium_report(cyl: &CylinderPotential, measure: &CylinderMeasure) -> EquilibriumReport {
    let m = cyl.m;
    let level = (m - 1) / 2;
    let mut atom_masses = vec![0.0; 3usize.pow(2 * level as u32)];
    for (i, mass) in measure.masses.iter().enumerate() {
        let digits = word_digits(i, m);
        atom_masses[word_index(&digits[1..1 + 2 * level])] += mass;
    }
    let atom_masses = atom_masses
        .into_iter()
        .enumerate()
        .map(|(i, mass)| {
            let digits = word_digits(i, 2 * level);
            let mut name = if level == 0 { ".".to_string() } else { String::new() };
            for (k, s) in digits.iter().enumerate() {
                if k + 1 == level {
                    name.push('.');
                }
                name.push(char::from(b'0' + s));
            }
            AtomMass { atom: name, mass }
        })
        .collect();
    let tangency = |s: u8| {
        let mut w = vec![0u8; 21];
        w[10] = s;
        measure.mass(&w)
    };
    EquilibriumReport {
        m,
        pressure: measure.pressure,
        entropy: entropy(measure),
        integral: measure.integral,
        variation_bound: cyl.variation_bound,
        gibbs_c: gibbs_constant(measure, cyl, 500, 4 * m + 8, 7),
        atom_level: level,
        atom_masses,
        tangency_mass: tangency(1).max(tangency(2)),
        flagged_words: cyl.flagged.len(),
        perron_spread: measure.perron_spread,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub pressure: f64,
    pub variation_bound: f64,
    /// `|P_m − P_{m−1}|`, zero on the first row.
    pub delta: f64,
}

/// Pressures for memories `1..=m_max`.
pub fn pressure_sweep(p: &MapParams, phi: &Potential, m_max: usize, resolution: u32) -> Result<Vec<SweepRow>> {
    let mut rows: Vec<SweepRow> = Vec::new();
    for m in 1..=m_max {
        let cyl = pull_back(p, phi, m, resolution)?;
        let pr = pressure(&cyl)?.pressure;
        let delta = rows.last().map_or(0.0, |r| (pr - r.pressure).abs());
        rows.push(SweepRow { m, pressure: pr, variation_bound: cyl.variation_bound, delta });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lyapunov {
    pub chi_u: f64,
    pub chi_s: f64,
    pub steps: usize,
}

/// Exponents along the plain orbit of `m`: a vertical vector pushed
/// forward and a horizontal one pulled back, renormalized each step.
pub fn lyapunov(p: &MapParams, m: Point, n: usize) -> Result<Lyapunov> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one step".into()));
    }
    let (mut z, mut u, mut sum_u) = (m, Point::new(0.0, 1.0), 0.0);
    for k in 0..n {
        let jac = jacobian(p, z).ok_or(Error::Escaped(k as isize))?;
        let img = jac.apply(u);
        sum_u += img.norm().ln();
        u = img.normalized();
        z = apply(p, z).ok_or(Error::Escaped(k as isize + 1))?;
    }
    let (mut z, mut s, mut sum_s) = (m, Point::new(1.0, 0.0), 0.0);
    for k in 0..n {
        let jac = jacobian_inverse(p, z).ok_or(Error::Escaped(-(k as isize)))?;
        let img = jac.apply(s);
        sum_s += img.norm().ln();
        s = img.normalized();
        z = apply_inverse(p, z).ok_or(Error::Escaped(-(k as isize) - 1))?;
    }
    Ok(Lyapunov { chi_u: sum_u / n as f64, chi_s: -sum_s / n as f64, steps: n })
}

/// Exponents along a built orbit, forward from the origin and backward
/// to it, `n` steps each.
pub fn lyapunov_on_orbit(p: &MapParams, orbit: &Orbit, n: usize) -> Result<Lyapunov> {
    let o = orbit.origin;
    if n == 0 || o < n || o + n >= orbit.len() {
        return Err(Error::InvalidInput(format!("orbit too short for {n} steps each way")));
    }
    let (mut u, mut sum_u) = (Point::new(0.0, 1.0), 0.0);
    for k in o..o + n {
        let img = orbit_jacobian(p, orbit, k).apply(u);
        sum_u += img.norm().ln();
        u = img.normalized();
    }
    let (mut s, mut sum_s) = (Point::new(1.0, 0.0), 0.0);
    for k in (o - n..o).rev() {
        let img = orbit_inverse_jacobian(p, orbit, k).apply(s);
        sum_s += img.norm().ln();
        s = img.normalized();
    }
    Ok(Lyapunov { chi_u: sum_u / n as f64, chi_s: -sum_s / n as f64, steps: n })
}
