use approx::assert_abs_diff_eq;
use horseshoe::map_core::builder::random_orbit;
use horseshoe::map_core::*;
use horseshoe::splitting::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn length_scale_examples() {
    let p = MapParams::ref_ex();
    assert_abs_diff_eq!(length_scale(&p, Point::new(0.79, 0.005)).0, 0.04, epsilon = 1e-15);
    assert_abs_diff_eq!(length_scale(&p, Point::new(0.5, 0.5)).0, 0.06f64.sqrt(), epsilon = 1e-15);
    assert_eq!(length_scale(&p, p.tangency()), (0.0, true));
}

#[test]
fn unstable_cone_examples() {
    let p = MapParams::ref_ex();
    let c = unstable_cone(&p, Point::new(0.79, 0.005)).unwrap();
    assert_abs_diff_eq!(c.slope, 10.0, epsilon = 1e-12);
    assert!(c.contains(Point::new(0.0, 1.0)));
    assert!(!c.contains(Point::new(1.0, 0.0)));
    assert!(unstable_cone(&p, Point::new(0.5, 0.5)).is_err());

    let p = MapParams::ref_strict();
    let m = Point::new(p.q + 1e-4, p.c * 1e-8);
    let c = unstable_cone(&p, m).unwrap();
    assert_abs_diff_eq!(c.slope, 2.0 / 648e-4, epsilon = 1e-9);
    assert_abs_diff_eq!(c.slope, 30.864, epsilon = 1e-3);
}

#[test]
fn cones_away_from_a_are_default() {
    let p = MapParams::ref_ex();
    // the fixed points (0,0) and (1,1) never meet A
    for z in [Point::new(0.0, 0.0), Point::new(1.0, 1.0)] {
        let b = branch_of(&p, z).unwrap();
        let o = builder::Orbit { points: vec![z; 6], branches: vec![b; 6], origin: 0 };
        let (cones, nested) = cone_at(&p, &o);
        assert!(nested);
        assert!(cones.iter().all(|c| *c == Cone::default_unstable()));
    }
}

#[test]
fn r1_step_scales_slope() {
    let p = MapParams::ref_ex();
    let c = Cone::vertical(0.3);
    let img = c.image(&jacobian_branch(&p, Branch::R1, Point::new(0.1, 0.1)));
    assert_abs_diff_eq!(img.slope, 0.3 * p.lambda / p.sigma, epsilon = 1e-15);
}

#[test]
fn frames_at_fixed_points() {
    let p = MapParams::ref_ex();
    for z in [Point::new(0.0, 0.0), Point::new(1.0, 1.0)] {
        let f = direction_field(&p, z, 10).unwrap();
        assert_eq!(f.e_u, Point::new(0.0, 1.0));
        assert_eq!(f.e_s, Point::new(1.0, 0.0));
        assert!(f.residual() < 1e-12);
    }
    assert!(matches!(direction_field(&p, Point::new(0.5, 0.25), 3), Err(horseshoe::Error::OrbitEscapes { .. })));
}

#[test]
fn adapted_norm_examples() {
    let p = MapParams::ref_ex();
    let f = direction_field(&p, Point::new(0.0, 0.0), 2).unwrap();
    assert_abs_diff_eq!(adapted_norm(&f, Point::new(1.0, 1.0)).unwrap(), 1.0);
    let mut g = f;
    g.e_u = Point::new(0.6, 0.8);
    assert_abs_diff_eq!(adapted_norm(&g, 3.0 * g.e_u).unwrap(), 3.0, epsilon = 1e-15);
    g.e_s = g.e_u;
    assert!(adapted_norm(&g, Point::new(1.0, 0.0)).is_err());
}

#[test]
fn cone_return_holds_on_strict_samples() {
    let p = MapParams::ref_strict();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 1000 {
        let Ok((o, i)) = sample_return_orbit(&p, &mut rng, 6, 2) else { continue };
        let r = verify_cone_return(&p, &o, i).unwrap();
        assert!(r.passes(), "{r:?}");
        checked += 1;
    }
}

#[test]
fn unstable_direction_lies_in_cone_at_a() {
    let p = MapParams::ref_strict();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 200 {
        let Ok((o, i)) = sample_return_orbit(&p, &mut rng, 30, 2) else { continue };
        let f = direction_field_on(&p, &o, i, 30, 1e-12);
        let cu = unstable_cone(&p, o.points[i]).unwrap();
        assert!(cu.contains(f.e_u), "{f:?}");
        assert!(f.e_u.y > 0.0 && f.e_s.x > 0.0);
        let t = leaf_tangent(&p, o.points[i]).unwrap();
        // e_u is transverse to the leaf through M
        assert!(f.e_u.cross(t).abs() > 0.0);
        checked += 1;
    }
}

#[test]
fn norm_equivalence_with_estimated_constant() {
    let p = MapParams::ref_strict();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ratios = Vec::new();
    let mut frames = Vec::new();
    while frames.len() < 1000 {
        let Ok((o, i)) = sample_return_orbit(&p, &mut rng, 30, 2) else { continue };
        let f = direction_field_on(&p, &o, i, 30, 1e-12);
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let v = Point::new(a.cos(), a.sin());
        let n = adapted_norm(&f, v).unwrap();
        ratios.push(v.norm() / (f.l * n));
        frames.push((f, v, n));
    }
    let chi1 = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(chi1 > 0.0);
    for (f, v, n) in frames {
        assert!(chi1 * f.l * n <= v.norm() * (1.0 + 1e-12));
        assert!(v.norm() <= 2.0 * n);
    }
}

#[test]
fn splitting_is_invariant_and_residual_monotone() {
    let p = MapParams::ref_ex();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let Ok(o) = random_orbit(&p, &mut rng, 40, 0.5) else { continue };
        let i = 20;
        let f = direction_field_on(&p, &o, i, 20, 0.0);
        let g = direction_field_on(&p, &o, i + 1, 20, 0.0);
        let j = jacobian_branch(&p, o.branches[i], o.points[i]);
        let pushed = j.apply(f.e_u).normalized();
        assert!(pushed.cross(g.e_u).abs() <= f.residual_u + g.residual_u + 1e-12);
        let mut prev = f64::INFINITY;
        for d in 1..20 {
            let h = direction_field_on(&p, &o, i, d, 0.0);
            assert!(h.residual_u <= prev);
            prev = h.residual_u;
        }
    }
}

#[test]
fn holder_fit_recovers_known_exponent() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<(f64, f64)> = (0..2000)
        .map(|_| {
            let d = 2f64.powf(-rng.gen_range(4.0..20.0));
            (d, 0.7 * d.powf(0.5))
        })
        .collect();
    let fit = holder_fit_raw(&samples).unwrap();
    assert_abs_diff_eq!(fit.alpha_est, 0.5, epsilon = 1e-9);
    assert_abs_diff_eq!(fit.c_est, 0.7, epsilon = 1e-9);
    // constant fields fall under the variation floor
    let flat: Vec<(f64, f64)> = samples.iter().map(|&(d, _)| (d, 0.0)).collect();
    assert!(holder_fit_raw(&flat).is_err());
}

#[test]
fn holder_fit_rejects_identical_points() {
    let p = MapParams::ref_ex();
    let f = direction_field(&p, Point::new(0.0, 0.0), 2).unwrap();
    assert!(holder_fit(&vec![(f, f); 200]).is_err());
}

#[test]
fn splitting_is_holder_on_strict_pairs() {
    let p = MapParams::ref_strict();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let pairs = sample_a_pairs(&p, &mut rng, 1000, 3, 30);
    let h = split_holder(&pairs).unwrap();
    assert!(h.resolved >= 1000);
    assert!(h.u.alpha().unwrap() >= 0.45);
    // the stable field is horizontal to rounding at these contraction rates
    assert!(matches!(h.s, FieldHolder::Flat { .. }));
    assert!(h.passes(0.45, 1000));
}

#[test]
fn splitting_is_holder_on_ex_pairs() {
    let p = MapParams::ref_ex();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let pairs = sample_a_pairs(&p, &mut rng, 1000, 3, 30);
    let (u, s) = holder_fit(&pairs).unwrap();
    assert!(u.alpha_est >= 0.45);
    assert!(s.alpha_est >= 0.45);
}

proptest! {
    #[test]
    fn image_cone_contains_images(slope in 0.01f64..5.0, a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0) {
        let m = Mat2::new(a, b, c, d);
        prop_assume!(m.det().abs() > 1e-3);
        let cone = Cone::vertical(slope);
        // image directions carry rounding of order eps times the condition number
        let cond = (a * a + b * b + c * c + d * d) / m.det().abs();
        let img = cone.image(&m);
        // widen in angle, not slope: near a half-turn the slope is ill-conditioned
        let ang = img.slope.atan() + 1e-12 * cond;
        let wide = if ang >= std::f64::consts::FRAC_PI_2 { f64::MAX } else { ang.tan() };
        let img = Cone { slope: wide, ..img };
        for v in cone.samples(21) {
            prop_assert!(img.contains(m.apply(v)));
        }
    }
}
