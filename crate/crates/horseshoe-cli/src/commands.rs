use std::collections::BTreeMap;
use std::fmt::Write as _;

use clap::{Args, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use horseshoe::coding::*;
use horseshoe::induced::calibrate_certificate;
use horseshoe::manifolds::*;
use horseshoe::map_core::builder::{build_generic, random_branch_word, random_orbit};
use horseshoe::map_core::{in_a, orbit, validate, MapParams, Point};
use horseshoe::splitting::{sample_a_pairs, sample_return_orbit, split_holder, verify_cone_return, FieldHolder, ReturnReport};
use horseshoe::thermo::*;
use horseshoe::{Error, Result};

use crate::suite::{a_orbits, manifold_options};

/// Files produced by one command, keyed by file name, plus the one-line
/// summary printed on success.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub files: BTreeMap<String, String>,
    pub summary: String,
    pub exit_code: i32,
}

impl Artifacts {
    fn add(&mut self, name: &str, content: String) {
        self.files.insert(name.to_string(), content);
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut s = serde_json::to_string_pretty(value).expect("result serializes");
        s.push('\n');
        self.add(name, s);
    }

    fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) {
        let mut s = format!("{header}\n");
        for r in rows {
            s.push_str(&r);
            s.push('\n');
        }
        self.add(name, s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LeafChoice {
    Unstable,
    Stable,
}

#[derive(Debug, Clone, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Check the parameter constraints (exit 0 valid, 1 warnings, 2 invalid).
    Validate,
    /// Forward and backward orbit of a point by plain iteration.
    Orbit(OrbitArgs),
    /// Cone inclusion and expansion along sampled first returns to A.
    Cones(ConesArgs),
    /// Hölder fit of the splitting directions over pairs of points of A.
    Holder(HolderArgs),
    /// Local (and optionally global) invariant leaf of a sampled point of A.
    Manifold(ManifoldArgs),
    /// Bracket of two nearby sampled points of A.
    Bracket(BracketArgs),
    /// Mixing times of a disk.
    Mixing(MixingArgs),
    /// Two distinct points whose orbits stay close.
    Nonexp(NonexpArgs),
    /// Box covers of all level-n atoms.
    Atoms(AtomsArgs),
    /// Itinerary of a point.
    Code(CodeArgs),
    /// Point coded by a word.
    Decode(DecodeArgs),
    /// Maximal atom diameter per level and its fitted decay rate.
    Decay(DecayArgs),
    /// Hölder fit of the coding map.
    ThetaHolder(ThetaHolderArgs),
    /// Pressure of a potential pulled back to m-cylinders.
    Pressure(ThermoArgs),
    /// Equilibrium state of a potential.
    Equilibrium(ThermoArgs),
    /// Lyapunov exponents at a point or along sampled orbits.
    Lyapunov(LyapunovArgs),
    /// Numerical calibration of the construction constants.
    Calibrate(CalibrateArgs),
    /// Run the acceptance suite.
    VerifyAll,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct OrbitArgs {
    /// Starting point as "x,y".
    #[arg(long)]
    pub point: String,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct ConesArgs {
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Longest run of R3/R5 steps between the two R4 visits.
    #[arg(long, default_value_t = 2)]
    pub max_middle: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct HolderArgs {
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    /// Longest shared word on one side of the pair.
    #[arg(long, default_value_t = 3)]
    pub max_n: usize,
    #[arg(long, default_value_t = 30)]
    pub depth: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct ManifoldArgs {
    #[arg(long, value_enum, default_value_t = LeafChoice::Unstable)]
    pub kind: LeafChoice,
    /// Which sampled point of A to use.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Continue the local leaf for this many steps (0: local leaf only).
    #[arg(long, default_value_t = 0)]
    pub global: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct BracketArgs {
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Steps of the shared word on each side of the two points.
    #[arg(long, default_value_t = 4)]
    pub shared: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct MixingArgs {
    /// Disk center as "x,y".
    #[arg(long)]
    pub center: String,
    #[arg(long, default_value_t = 0.05)]
    pub radius: f64,
    #[arg(long, default_value_t = 50)]
    pub budget: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct NonexpArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    #[arg(long, default_value_t = 50)]
    pub horizon: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct AtomsArgs {
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct CodeArgs {
    #[arg(long)]
    pub point: String,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct DecodeArgs {
    /// Centered word such as "01.20".
    #[arg(long)]
    pub word: String,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct DecayArgs {
    #[arg(long, default_value_t = 3)]
    pub nmax: usize,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct ThetaHolderArgs {
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    /// Largest index of first disagreement.
    #[arg(long, default_value_t = 10)]
    pub nmax: usize,
    /// Half length of the sampled words.
    #[arg(long, default_value_t = 14)]
    pub half: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct ThermoArgs {
    /// zero, x, y, affine:a,b,k or cos:amp.
    #[arg(long, default_value = "zero")]
    pub phi: String,
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct LyapunovArgs {
    /// Point as "x,y"; without it, orbits are sampled.
    #[arg(long)]
    pub point: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Args)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = 300)]
    pub budget: usize,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Orbit(_) => "orbit",
            Command::Cones(_) => "cones",
            Command::Holder(_) => "holder",
            Command::Manifold(_) => "manifold",
            Command::Bracket(_) => "bracket",
            Command::Mixing(_) => "mixing",
            Command::Nonexp(_) => "nonexp",
            Command::Atoms(_) => "atoms",
            Command::Code(_) => "code",
            Command::Decode(_) => "decode",
            Command::Decay(_) => "decay",
            Command::ThetaHolder(_) => "theta-holder",
            Command::Pressure(_) => "pressure",
            Command::Equilibrium(_) => "equilibrium",
            Command::Lyapunov(_) => "lyapunov",
            Command::Calibrate(_) => "calibrate",
            Command::VerifyAll => "verify-all",
        }
    }

    /// Whether results are worth caching.
    pub fn cacheable(&self) -> bool {
        !matches!(self, Command::Validate | Command::Orbit(_) | Command::Code(_))
    }
}

pub fn parse_point(s: &str) -> Result<Point> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [x, y] = parts.as_slice() else {
        return Err(Error::InvalidInput(format!("expected \"x,y\", got {s:?}")));
    };
    let num = |v: &str| v.parse::<f64>().map_err(|_| Error::InvalidInput(format!("not a number: {v:?}")));
    let pt = Point::new(num(x)?, num(y)?);
    if !pt.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite point {s:?}")));
    }
    Ok(pt)
}

fn e17(v: f64) -> String {
    format!("{v:.17e}")
}

/// Runs one command. `verify-all` is handled by the caller.
pub fn run(p: &MapParams, seed: u64, cmd: &Command) -> Result<Artifacts> {
    let mut out = Artifacts::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match cmd {
        Command::Validate => {
            let report = validate(p);
            out.json("validation.json", &report);
            let failing: Vec<&str> = report.constraints.iter().filter(|c| !c.pass).map(|c| c.constraint.as_str()).collect();
            out.summary = format!("{:?}; failing: {}", report.verdict, if failing.is_empty() { "none".into() } else { failing.join(", ") });
            out.exit_code = report.verdict.exit_code();
        }
        Command::Orbit(a) => {
            let pt = parse_point(&a.point)?;
            let rec = orbit(p, pt, a.n, a.n);
            let mut rows = Vec::new();
            for k in (1..rec.backward.len()).rev() {
                let z = rec.backward[k];
                rows.push(format!("-{k},{},{},{:?}", e17(z.x), e17(z.y), rec.backward_labels[k]));
            }
            for (k, z) in rec.forward.iter().enumerate() {
                rows.push(format!("{k},{},{},{:?}", e17(z.x), e17(z.y), rec.forward_labels[k]));
            }
            out.csv("orbit.csv", "k,x,y,region", rows);
            out.summary = format!(
                "{} forward and {} backward points (escape forward: {:?}, backward: {:?})",
                rec.forward.len() - 1,
                rec.backward.len() - 1,
                rec.forward_escape,
                rec.backward_escape
            );
        }
        Command::Cones(a) => {
            let mut reports = Vec::new();
            let mut attempts = 0;
            while reports.len() < a.samples && attempts < 100 * a.samples.max(1) {
                attempts += 1;
                let Ok((o, i)) = sample_return_orbit(p, &mut rng, 6, a.max_middle) else { continue };
                reports.push(verify_cone_return(p, &o, i)?);
            }
            let passed = reports.iter().filter(|r| r.passes()).count();
            out.csv("cones.csv", ReturnReport::csv_header(), reports.iter().map(|r| r.csv_row()));
            out.summary = format!("{passed}/{} first returns satisfy cone inclusion and expansion", reports.len());
            out.exit_code = (passed != reports.len()) as i32;
        }
        Command::Holder(a) => {
            let pairs = sample_a_pairs(p, &mut rng, a.pairs, a.max_n, a.depth);
            let h = split_holder(&pairs)?;
            out.csv(
                "holder_pairs.csv",
                "distance,gap_u,gap_s,residual",
                pairs.iter().map(|(x, y)| {
                    format!("{},{},{},{}", e17(x.m.dist(y.m)), e17((x.e_u - y.e_u).norm()), e17((x.e_s - y.e_s).norm()), e17(x.residual().max(y.residual())))
                }),
            );
            out.json("holder.json", &h);
            let show = |f: &FieldHolder| f.alpha().map_or("flat".to_string(), |a| format!("{a:.4}"));
            out.summary = format!("{} resolved pairs; alpha_u {}; alpha_s {}", h.resolved, show(&h.u), show(&h.s));
        }
        Command::Manifold(a) => {
            let orbits = a_orbits(p, a.index + 1, 40, seed);
            let o = orbits.get(a.index).ok_or_else(|| Error::SearchFailed("no point of A sampled".into()))?;
            let opts = manifold_options();
            let leaf = match a.kind {
                LeafChoice::Unstable => local_unstable(p, o, o.origin, &opts)?,
                LeafChoice::Stable => local_stable(p, o, o.origin, &opts)?,
            };
            out.csv("manifold_local.csv", ManifoldCurve::csv_header(), leaf.curve.csv_rows());
            if a.global > 0 {
                let curve = match a.kind {
                    LeafChoice::Unstable => global_unstable(p, o, o.origin, a.global, &opts)?,
                    LeafChoice::Stable => global_stable(p, o, o.origin, a.global, &opts)?,
                };
                out.csv("manifold_global.csv", ManifoldCurve::csv_header(), curve.csv_rows());
            }
            #[derive(Serialize)]
            struct Summary {
                center: Point,
                kind: LeafChoice,
                depth: usize,
                rho: f64,
                last_change: f64,
                lip_bound: Option<f64>,
                length: f64,
            }
            let s = Summary {
                center: leaf.center,
                kind: a.kind,
                depth: leaf.depth,
                rho: leaf.rho,
                last_change: leaf.last_change,
                lip_bound: leaf.graph.as_ref().map(|g| g.lip_bound),
                length: leaf.curve.length(),
            };
            out.json("manifold.json", &s);
            out.summary = format!("{:?} leaf at ({:.6}, {:.6}): depth {}, rho {:.3e}, last change {:.2e}", a.kind, s.center.x, s.center.y, s.depth, s.rho, s.last_change);
        }
        Command::Bracket(a) => {
            let orbits = a_orbits(p, a.index + 1, 40, seed);
            let o = orbits.get(a.index).ok_or_else(|| Error::SearchFailed("no point of A sampled".into()))?;
            let i = o.origin;
            let lo = i.checked_sub(a.shared).ok_or_else(|| Error::InvalidInput("shared word longer than the orbit".into()))?;
            let hi = (i + a.shared).min(o.len() - 1);
            // a twin orbit: same central word, fresh past and future
            let twin = loop {
                let mut head = random_branch_word(&mut rng, 40, 0.4, 6);
                while head.last().is_some_and(|b| !b.allows(o.branches[lo])) {
                    head.pop();
                }
                let origin = head.len() + (i - lo);
                let mut word = head;
                word.extend_from_slice(&o.branches[lo..=hi]);
                let tail = random_branch_word(&mut rng, 40, 0.4, 6);
                let start = tail.iter().position(|b| o.branches[hi].allows(*b)).unwrap_or(tail.len());
                word.extend_from_slice(&tail[start..]);
                if let Ok(t) = build_generic(p, &word, origin) {
                    if in_a(p, t.center()) && t.center() != o.center() {
                        break t;
                    }
                }
            };
            let b = bracket(p, o, i, &twin, twin.origin, &manifold_options())?;
            #[derive(Serialize)]
            struct Summary {
                m: Point,
                m_prime: Point,
                bracket: BracketPoint,
            }
            out.json("bracket.json", &Summary { m: o.center(), m_prime: twin.center(), bracket: b });
            out.summary = format!("bracket at ({:.9}, {:.9}), angle {:.3e}", b.point.x, b.point.y, b.angle);
        }
        Command::Mixing(a) => {
            let u = Disk { center: parse_point(&a.center)?, radius: a.radius };
            let r = mixing_times(p, &u, a.budget)?;
            out.json("mixing.json", &r);
            out.summary = format!("n+ {:?}, n- {:?}", r.n_plus, r.n_minus);
            out.exit_code = r.n_plus.is_none() as i32;
        }
        Command::Nonexp(a) => {
            let r = nonexpansive_pair(p, a.delta, a.horizon, seed)?;
            out.json("nonexp.json", &r);
            out.summary = format!("distance {:.3e}, sup distance {:.3e} over |n| <= {}", r.distance, r.sup_dist, r.horizon);
        }
        Command::Atoms(a) => {
            let atoms = atoms_at_level(p, a.n, a.resolution);
            let count = count_atoms(p, a.n, a.resolution);
            out.csv("atoms.csv", Atom::csv_header(), atoms.iter().flat_map(|x| x.csv_rows()));
            #[derive(Serialize)]
            struct Row {
                word: String,
                boxes: usize,
                diameter_ub: f64,
                empty: bool,
            }
            let rows: Vec<Row> = atoms
                .iter()
                .map(|x| Row { word: x.word.to_string(), boxes: x.boxes.len(), diameter_ub: x.diameter_ub, empty: x.empty })
                .collect();
            out.json("atoms.json", &serde_json::json!({ "count": count, "atoms": rows }));
            out.summary = format!("level {}: {} distinct nonempty atoms", a.n, count.distinct_atoms);
        }
        Command::Code(a) => {
            let it = itinerary(p, parse_point(&a.point)?, a.n)?;
            out.add("code.txt", format!("{}\n", it.word));
            out.json("code.json", &it);
            out.summary = format!("word {}{}", it.word, if it.flagged() { " (tangency)" } else { "" });
        }
        Command::Decode(a) => {
            let word: Word = a.word.parse()?;
            let t = theta(p, &word, a.resolution)?;
            out.json("decode.json", &serde_json::json!({ "word": word.to_string(), "theta": t }));
            out.summary = format!("({:.9}, {:.9}) within {:.3e}", t.point.x, t.point.y, t.radius);
        }
        Command::Decay(a) => {
            let t = decay_table(p, a.nmax, a.resolution)?;
            let rate = e17(t.rate);
            out.csv("decay.csv", &format!("{},rate", DecayTable::csv_header()), t.csv_rows().into_iter().map(|r| format!("{r},{rate}")));
            out.json("decay.json", &t);
            out.summary = format!("fitted rate {:.4} (reference {:.4})", t.rate, t.reference_rate);
        }
        Command::ThetaHolder(a) => {
            let pairs = realizable_word_pairs(p, &mut rng, a.half, a.nmax, a.pairs);
            let fit = theta_holder_fit(p, &pairs)?;
            out.csv("theta_holder.csv", ThetaHolderFit::csv_header(), fit.csv_rows());
            out.json(
                "theta_holder.json",
                &serde_json::json!({ "gamma_est": fit.gamma_est, "gamma": fit.gamma, "pairs_used": fit.pairs_used, "pairs_skipped": fit.pairs_skipped, "passes": fit.passes() }),
            );
            out.summary = format!("gamma_est {:.4} vs gamma {:.4} ({} pairs)", fit.gamma_est, fit.gamma, fit.pairs_used);
            out.exit_code = (!fit.passes()) as i32;
        }
        Command::Pressure(a) => {
            let phi = Potential::named(&a.phi)?;
            let cyl = pull_back(p, &phi, a.m, a.resolution)?;
            let r = pressure(&cyl)?;
            out.json(
                "pressure.json",
                &serde_json::json!({ "phi": a.phi, "m": a.m, "pressure": r.pressure, "iterations": r.iterations, "variation_bound": cyl.variation_bound }),
            );
            out.summary = format!("pressure {:.15} (m = {}, variation bound {:.3e})", r.pressure, a.m, cyl.variation_bound);
        }
        Command::Equilibrium(a) => {
            let phi = Potential::named(&a.phi)?;
            let (mu, report) = equilibrium_state(p, &phi, a.m, a.resolution)?;
            out.csv("measure.csv", CylinderMeasure::csv_header(), mu.csv_rows());
            out.json("equilibrium.json", &report);
            out.summary = format!(
                "pressure {:.12}, entropy {:.12}, integral {:.12}, gap {:.2e}",
                report.pressure,
                report.entropy,
                report.integral,
                report.variational_gap()
            );
        }
        Command::Lyapunov(a) => {
            let results = match &a.point {
                Some(s) => vec![lyapunov(p, parse_point(s)?, a.n)?],
                None => {
                    let mut v = Vec::new();
                    let mut attempts = 0;
                    while v.len() < a.samples && attempts < 100 * a.samples.max(1) {
                        attempts += 1;
                        let Ok(o) = random_orbit(p, &mut rng, a.n + 1, 0.5) else { continue };
                        v.push(lyapunov_on_orbit(p, &o, a.n)?);
                    }
                    v
                }
            };
            out.json("lyapunov.json", &results);
            let mut s = String::new();
            for l in results.iter().take(3) {
                let _ = write!(s, "({:.6}, {:.6}) ", l.chi_u, l.chi_s);
            }
            out.summary = format!("{} estimates (chi_u, chi_s): {}", results.len(), s.trim_end());
        }
        Command::Calibrate(a) => {
            let cert = calibrate_certificate(p, a.budget, seed)?;
            out.json("certificate.json", &cert);
            out.summary = format!("{} constants calibrated", cert.entries().len());
        }
        Command::VerifyAll => return Err(Error::Unsupported("verify-all is run by the suite".into())),
    }
    Ok(out)
}
