use approx::assert_abs_diff_eq;
use horseshoe::map_core::builder::{build_generic, random_orbit, theta_point};
use horseshoe::map_core::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ex() -> MapParams {
    MapParams::ref_ex()
}

#[test]
fn classify_examples() {
    let p = ex();
    assert_eq!(classify(&p, Point::new(0.5, 0.1)), RegionLabel::R1);
    assert_eq!(classify(&p, Point::new(0.2, 0.70)), RegionLabel::R4);
    assert_eq!(classify(&p, Point::new(0.5, 0.5)), RegionLabel::R3);
    assert_eq!(classify(&p, Point::new(0.5, 0.25)), RegionLabel::R2);
    assert_eq!(classify(&p, Point::new(0.5, 0.6)), RegionLabel::GapLower);
    assert_eq!(classify(&p, Point::new(0.5, 0.8)), RegionLabel::GapUpper);
    assert_eq!(classify(&p, Point::new(0.5, 0.9)), RegionLabel::R5);
    assert_eq!(classify(&p, Point::new(1.5, 0.5)), RegionLabel::Outside);
    // closed strips: the top edge of R1 belongs to R1
    assert_eq!(classify(&p, Point::new(0.5, 0.2)), RegionLabel::R1);
}

#[test]
fn apply_examples() {
    let p = ex();
    let close = |a: Point, b: Point| a.max_abs_diff(b) < 1e-15;
    assert!(close(apply(&p, Point::new(0.5, 0.1)).unwrap(), Point::new(0.05, 0.5)));
    assert!(close(apply(&p, Point::new(1.0, 1.0)).unwrap(), Point::new(1.0, 1.0)));
    assert!(close(apply(&p, Point::new(0.0, 0.7)).unwrap(), Point::new(0.75, 0.0)));
    assert!(close(apply(&p, Point::new(0.5, 0.5)).unwrap(), Point::new(0.45, 0.5)));
    assert!(apply(&p, Point::new(0.5, 0.25)).is_none());
    assert!(apply(&p, Point::new(-0.1, 0.1)).is_none());
}

#[test]
fn inverse_examples() {
    let p = ex();
    let pre = apply_inverse(&p, Point::new(0.05, 0.5)).unwrap();
    assert!(pre.max_abs_diff(Point::new(0.5, 0.1)) < 1e-15);
    let pre = apply_inverse(&p, Point::new(0.75, 0.0)).unwrap();
    assert!(pre.max_abs_diff(Point::new(0.0, 0.7)) < 1e-15);
    assert!(apply_inverse(&p, Point::new(0.3, 0.5)).is_none());
    // the R5 image only reaches down to y = 1/3
    assert!(apply_inverse(&p, Point::new(0.99, 0.2)).is_none());
    let pre = apply_inverse(&p, Point::new(0.99, 0.5)).unwrap();
    assert!(pre.max_abs_diff(Point::new(0.9, 0.9)) < 1e-12);
}

#[test]
fn jacobian_examples() {
    let p = ex();
    assert_eq!(jacobian(&p, Point::new(0.5, 0.1)).unwrap(), Mat2::diag(0.1, 5.0));
    let j = jacobian(&p, Point::new(0.0, 0.7)).unwrap();
    assert_abs_diff_eq!(j.a, 0.0);
    assert_abs_diff_eq!(j.b, 5.0);
    assert_abs_diff_eq!(j.c, -0.1);
    assert_abs_diff_eq!(j.d, 0.0, epsilon = 1e-14);
    let j = jacobian(&p, Point::new(0.3, 0.72)).unwrap();
    assert_abs_diff_eq!(j.det().abs(), 0.5, epsilon = 1e-12);
    assert!(jacobian(&p, Point::new(0.3, 0.3)).is_none());
}

#[test]
fn orbit_examples() {
    let p = ex();
    let o = orbit(&p, Point::new(0.0, 0.0), 5, 0);
    assert!(o.forward.iter().all(|&z| z == Point::new(0.0, 0.0)));
    assert!(o.forward_labels.iter().all(|&l| l == RegionLabel::R1));
    let o = orbit(&p, Point::new(1.0, 1.0), 5, 0);
    assert!(o.forward.iter().all(|&z| z == Point::new(1.0, 1.0)));
    assert!(o.forward_labels.iter().all(|&l| l == RegionLabel::R5));
    let o = orbit(&p, Point::new(0.5, 0.25), 1, 0);
    assert_eq!(o.forward_escape, Some(0));
}

#[test]
fn parabola_and_tangent_examples() {
    let p = ex();
    assert_abs_diff_eq!(parabola_offset(&p, Point::new(0.75, 0.0)), 0.0);
    assert_abs_diff_eq!(parabola_offset(&p, Point::new(0.85, 0.05)), 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(parabola_offset(&p, Point::new(0.75, -0.1)), 0.1);
    let t = leaf_tangent(&p, Point::new(0.75, 0.0)).unwrap();
    assert_eq!(t, Point::new(1.0, 0.0));
    let t = leaf_tangent(&p, Point::new(0.79, 0.0)).unwrap();
    assert_abs_diff_eq!(t.y / t.x, 0.4, epsilon = 1e-12);
    let t = leaf_tangent(&p, Point::new(0.71, 0.0)).unwrap();
    assert_abs_diff_eq!(t.y / t.x, -0.4, epsilon = 1e-12);
}

#[test]
fn validation_reference_sets() {
    let r = validate(&MapParams::ref_strict());
    assert_eq!(r.verdict, Verdict::Valid, "{:#?}", r.constraints.iter().filter(|c| !c.pass).collect::<Vec<_>>());
    let tan10 = r.get("tan10").unwrap();
    // 2 sqrt(648 * 2e-5) by hand
    assert_abs_diff_eq!(tan10.value, 0.227684, epsilon = 1e-6);
    assert_abs_diff_eq!(tan10.bound, 0.304396, epsilon = 1e-6);

    let r = validate(&ex());
    assert_eq!(r.verdict, Verdict::Warnings);
    assert!(r.hard_ok());
    let tan10 = r.get("tan10").unwrap();
    assert!(!tan10.pass);
    assert_abs_diff_eq!(tan10.value, 2.0 * 1.5f64.sqrt(), epsilon = 1e-12);

    let mut bad = ex();
    bad.lambda = 0.4;
    let r = validate(&bad);
    assert_eq!(r.verdict, Verdict::Invalid);
    assert!(!r.get("lambda_below_third").unwrap().pass);
}

#[test]
fn params_json_roundtrip() {
    let p = MapParams::ref_strict();
    let q = MapParams::from_json(&p.to_json()).unwrap();
    assert_eq!(p, q);
    assert!(MapParams::from_json("{\"lambda\": 0.1}").is_err());
}

#[test]
fn gamma_closed_form() {
    assert_abs_diff_eq!(ex().gamma(), 1.160964, epsilon = 1e-6);
}

#[test]
fn builder_orbits_are_consistent() {
    for p in [MapParams::ref_ex(), MapParams::ref_strict()] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let o = match random_orbit(&p, &mut rng, 20, 0.5) {
                Ok(o) => o,
                Err(_) => continue,
            };
            assert!(builder::classification_agrees(&p, &o));
            // the R4 abscissa is reconstructed from y = t + w/σ, which costs σ ulps
            assert!(builder::forward_defect(&p, &o) < 16.0 * p.sigma * f64::EPSILON);
            // vertical coordinate consistency through the inverse formulas
            for i in 0..o.len() - 1 {
                let pre = apply_inverse_branch(&p, o.branches[i], o.points[i + 1]);
                assert!((pre.y - o.points[i].y).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn theta_point_of_fixed_points() {
    let p = ex();
    let z = theta_point(&p, &[0, 0, 0], 1).unwrap();
    assert_eq!(z, Point::new(0.0, 0.0));
    // the tangency orbit ...0 1 0... and ...0 2 0... both code Q
    for s in [1u8, 2] {
        let z = theta_point(&p, &[0, s, 0], 1).unwrap();
        assert!(z.max_abs_diff(p.tangency()) < 1e-15, "{z:?}");
    }
}

#[test]
fn builder_rejects_inadmissible_words() {
    let p = ex();
    assert!(build_generic(&p, &[Branch::R4Up, Branch::R5], 0).is_err());
    assert!(build_generic(&p, &[Branch::R5, Branch::R1], 0).is_err());
}

fn region_point(p: &MapParams) -> impl Strategy<Value = Point> {
    let p = *p;
    (0usize..4, 0.0f64..1.0, 0.0f64..1.0).prop_map(move |(r, x, v)| {
        let (lo, hi) = match r {
            0 => (0.0, p.r1_top()),
            1 => (p.r3_y0, p.r3_top()),
            2 => (p.r4_bottom(), p.r4_top()),
            _ => (p.r5_bottom(), 1.0),
        };
        Point::new(x, lo + v * (hi - lo))
    })
}

proptest! {
    #[test]
    fn forward_inverse_roundtrip(pt in region_point(&MapParams::ref_ex())) {
        let p = ex();
        let img = apply(&p, pt).unwrap();
        let back = apply_inverse(&p, img).unwrap();
        prop_assert!(back.max_abs_diff(pt) < 1e-12, "{pt:?} -> {img:?} -> {back:?}");
    }

    #[test]
    fn jacobian_matches_central_differences(pt in region_point(&MapParams::ref_ex())) {
        let p = ex();
        let h = 1e-6;
        let b = branch_of(&p, pt).unwrap();
        let j = jacobian_branch(&p, b, pt);
        let dx = 0.5 / h * (apply_branch(&p, b, pt + Point::new(h, 0.0)) - apply_branch(&p, b, pt - Point::new(h, 0.0)));
        let dy = 0.5 / h * (apply_branch(&p, b, pt + Point::new(0.0, h)) - apply_branch(&p, b, pt - Point::new(0.0, h)));
        prop_assert!((j.a - dx.x).abs() < 1e-5 && (j.c - dx.y).abs() < 1e-5);
        prop_assert!((j.b - dy.x).abs() < 1e-5 && (j.d - dy.y).abs() < 1e-5);
        prop_assert!((j.det().abs() - p.lambda * p.sigma).abs() < 1e-12);
    }

    #[test]
    fn vertical_lines_map_to_parabolas(x0 in 0.0f64..1.0, v in -1.0f64..1.0) {
        for p in [MapParams::ref_ex(), MapParams::ref_strict()] {
            let pt = Point::new(x0, p.t + v * p.r4_half_height());
            let img = apply(&p, pt).unwrap();
            let law = p.c * (img.x - p.q).powi(2) - p.lambda * x0;
            prop_assert!((img.y - law).abs() < 1e-12);
        }
    }

    #[test]
    fn offsets_match_differences(pt in region_point(&MapParams::ref_ex()), dx in -1e-3f64..1e-3, dy in -1e-3f64..1e-3) {
        let p = ex();
        let b = branch_of(&p, pt).unwrap();
        let d = Point::new(dx, dy);
        let direct = apply_branch(&p, b, pt + d) - apply_branch(&p, b, pt);
        let off = offset_forward(&p, b, pt, d);
        prop_assert!(direct.max_abs_diff(off) < 1e-13);
        let back = offset_backward(&p, b, apply_branch(&p, b, pt), off);
        prop_assert!(back.max_abs_diff(d) < 1e-12);
    }

    #[test]
    fn classification_is_a_partition(x in -0.5f64..1.5, y in -0.5f64..1.5) {
        let p = ex();
        let l = classify(&p, Point::new(x, y));
        let inside = (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y);
        prop_assert_eq!(l == RegionLabel::Outside, !inside);
        prop_assert_eq!(apply(&p, Point::new(x, y)).is_some(), l.is_branch());
    }
}
