use horseshoe::coding::{decay_table, diameter_scale, DEFAULT_RESOLUTION};
use horseshoe::map_core::builder::random_orbit;
use horseshoe::map_core::{MapParams, Point};
use horseshoe::thermo::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LN3: f64 = 1.0986122886681098;

fn test_potentials() -> Vec<Potential> {
    vec![Potential::zero(), Potential::affine(1.0, 0.0, 0.0), Potential::cosine(0.3)]
}

#[test]
fn zero_potential_gives_the_uniform_measure() {
    for m in 1..=5 {
        let cyl = CylinderPotential::constant(m, 0.0);
        assert!((pressure(&cyl).unwrap().pressure - LN3).abs() < 1e-12);
        let mu = gibbs_measure(&cyl).unwrap();
        let uniform = 3f64.powi(-(m as i32));
        assert!(mu.masses.iter().all(|x| (x - uniform).abs() < 1e-15));
        assert!((entropy(&mu) - LN3).abs() < 1e-10);
    }
}

#[test]
fn bernoulli_closed_forms() {
    let a = [0.3, -1.2, 2.0];
    let cyl = CylinderPotential::bernoulli(a);
    let z: f64 = a.iter().map(|v| v.exp()).sum();
    assert!((pressure(&cyl).unwrap().pressure - z.ln()).abs() < 1e-10);
    let mu = gibbs_measure(&cyl).unwrap();
    let probs: Vec<f64> = a.iter().map(|v| v.exp() / z).collect();
    for (x, q) in mu.masses.iter().zip(&probs) {
        assert!((x - q).abs() < 1e-10);
    }
    let h: f64 = probs.iter().map(|q| -q * q.ln()).sum();
    assert!((entropy(&mu) - h).abs() < 1e-10);
    // The same potential seen with memory 3 is still Bernoulli.
    let values = (0..27).map(|i| a[word_digits(i, 3)[0] as usize]).collect();
    let wide = CylinderPotential { m: 3, values, variation_bound: 0.0, flagged: vec![] };
    assert!((pressure(&wide).unwrap().pressure - z.ln()).abs() < 1e-10);
    let mu3 = gibbs_measure(&wide).unwrap();
    assert!((mu3.mass(&[2, 0, 1]) - probs[2] * probs[0] * probs[1]).abs() < 1e-10);
}

#[test]
fn words_and_padding() {
    assert_eq!(word_digits(5, 3), vec![0, 1, 2]);
    assert_eq!(word_index(&[0, 1, 2]), 5);
    assert_eq!(centered_padding(&[1]).to_string(), ".1");
    assert_eq!(centered_padding(&[1, 2]).to_string(), "0.12");
    assert_eq!(centered_padding(&[1, 2, 0]).to_string(), "1.20");
    assert_eq!(centered_padding(&[1, 2, 0, 2]).to_string(), "01.202");
}

#[test]
fn pull_back_of_the_abscissa() {
    let p = MapParams::ref_ex();
    let zero = pull_back(&p, &Potential::zero(), 3, DEFAULT_RESOLUTION).unwrap();
    assert!(zero.values.iter().all(|&v| v == 0.0) && zero.variation_bound == 0.0);
    let cyl = pull_back(&p, &Potential::affine(1.0, 0.0, 0.0), 1, DEFAULT_RESOLUTION).unwrap();
    assert!(cyl.values[0].abs() < 1e-12);
    assert!((cyl.values[1] - p.q).abs() < 1e-12);
    assert!((cyl.values[2] - p.q).abs() < 1e-12);
}

#[test]
fn variation_bounds_decay() {
    let p = MapParams::ref_ex();
    let phi = Potential::affine(1.0, 0.0, 0.0);
    let table = decay_table(&p, 3, DEFAULT_RESOLUTION).unwrap();
    let k = table.rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let mut last = f64::INFINITY;
    for m in 1..=7 {
        let cyl = pull_back(&p, &phi, m, DEFAULT_RESOLUTION).unwrap();
        let level = (m - 1) / 2;
        assert!(cyl.variation_bound <= phi.holder_c * (k * diameter_scale(&p, level)).powf(phi.holder_theta) * (1.0 + 1e-12));
        assert!(cyl.variation_bound <= last);
        last = cyl.variation_bound;
    }
    assert!(last < 0.1);
}

#[test]
fn pressure_approximants_are_cauchy() {
    let p = MapParams::ref_ex();
    for phi in test_potentials() {
        let rows = pressure_sweep(&p, &phi, 7, DEFAULT_RESOLUTION).unwrap();
        for pair in rows.windows(2) {
            assert!(pair[1].delta <= 2.0 * pair[0].variation_bound + 1e-12, "{}: {:?}", phi.name, pair);
        }
    }
}

#[test]
fn variational_identity_and_positivity() {
    let p = MapParams::ref_ex();
    for phi in test_potentials() {
        for m in [3, 5] {
            let (mu, report) = equilibrium_state(&p, &phi, m, DEFAULT_RESOLUTION).unwrap();
            assert!(report.variational_gap() <= 2.0 * report.variation_bound + 1e-10, "{}: {report:?}", phi.name);
            assert!(mu.masses.iter().all(|&x| x > 0.0));
            assert!((mu.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(mu.invariance_defect() < 1e-10);
            assert!(mu.perron_spread <= 1e-10);
            assert!(report.gibbs_c.is_finite() && report.gibbs_c >= 1.0);
            assert!(report.atom_masses.iter().all(|a| a.mass > 0.0));
            assert!((report.atom_masses.iter().map(|a| a.mass).sum::<f64>() - 1.0).abs() < 1e-12);
            let shorter = mu.block_masses(m - 1);
            let next = mu.block_masses(m + 1);
            for (i, x) in mu.masses.iter().enumerate() {
                let ext: f64 = (0..3).map(|a| next[i * 3 + a]).sum();
                assert!((ext - x).abs() < 1e-10);
            }
            for (i, x) in shorter.iter().enumerate() {
                let ext: f64 = (0..3).map(|a| mu.masses[i * 3 + a]).sum();
                assert!((ext - x).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn zero_potential_on_atoms() {
    let p = MapParams::ref_ex();
    let (_, report) = equilibrium_state(&p, &Potential::zero(), 3, DEFAULT_RESOLUTION).unwrap();
    assert_eq!(report.atom_level, 1);
    assert_eq!(report.atom_masses.len(), 9);
    assert!(report.atom_masses.iter().all(|a| (a.mass - 1.0 / 9.0).abs() < 1e-10));
    assert_eq!(report.atom_masses[5].atom, ".12");
    assert!((report.entropy - LN3).abs() < 1e-10);
    assert!(report.tangency_mass < 1e-8);
}

#[test]
fn potentials_check_their_bounds() {
    for phi in test_potentials() {
        phi.check_holder(2000, 1).unwrap();
    }
    let liar = Potential::new("liar", 0.1, 1.0, |pt| pt.x);
    assert!(liar.check_holder(2000, 1).is_err());
    assert!(Potential::named("cos:0.3").is_ok());
    assert!(Potential::named("affine:1,0,0").is_ok());
    assert!(Potential::named("exp").is_err());
}

#[test]
fn lyapunov_at_fixed_points() {
    for p in [MapParams::ref_ex(), MapParams::ref_strict()] {
        for m in [Point::new(0.0, 0.0), Point::new(1.0, 1.0)] {
            let l = lyapunov(&p, m, 100).unwrap();
            assert!((l.chi_u - p.sigma.ln()).abs() < 1e-12);
            assert!((l.chi_s - p.lambda.ln()).abs() < 1e-12);
        }
    }
    assert!(lyapunov(&MapParams::ref_ex(), Point::new(0.3, 0.25), 5).is_err());
}

#[test]
fn lyapunov_on_sampled_orbits() {
    let p = MapParams::ref_strict();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut done = 0;
    while done < 10 {
        let Ok(orbit) = random_orbit(&p, &mut rng, 1001, 0.5) else { continue };
        let l = lyapunov_on_orbit(&p, &orbit, 1000).unwrap();
        assert!(l.chi_u >= 0.45 * p.sigma.ln(), "{l:?}");
        assert!(l.chi_s <= 0.45 * p.lambda.ln(), "{l:?}");
        done += 1;
    }
}

proptest! {
    #[test]
    fn bernoulli_pressure_matches(a0 in -3.0f64..3.0, a1 in -3.0f64..3.0, a2 in -3.0f64..3.0) {
        let cyl = CylinderPotential::bernoulli([a0, a1, a2]);
        let z = a0.exp() + a1.exp() + a2.exp();
        prop_assert!((pressure(&cyl).unwrap().pressure - z.ln()).abs() < 1e-10);
    }

    #[test]
    fn random_cylinder_measures_are_invariant(vals in proptest::collection::vec(-2.0f64..2.0, 9)) {
        let cyl = CylinderPotential { m: 2, values: vals, variation_bound: 0.0, flagged: vec![] };
        let mu = gibbs_measure(&cyl).unwrap();
        prop_assert!(mu.invariance_defect() < 1e-12);
        let report = equilibrium_report(&cyl, &mu);
        prop_assert!(report.variational_gap() < 1e-10);
    }
}
