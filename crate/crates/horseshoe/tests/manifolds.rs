use horseshoe::induced::*;
use horseshoe::manifolds::*;
use horseshoe::map_core::builder::{build_generic, build_orbit, random_branch_word, Orbit};
use horseshoe::map_core::*;
use horseshoe::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ex() -> MapParams {
    MapParams::ref_ex()
}

fn strict() -> MapParams {
    MapParams::ref_strict()
}

fn opts() -> ManifoldOptions {
    ManifoldOptions { c3: 0.3, ..Default::default() }
}

/// Orbits of `2 * half + 1` points whose center is a point of A.
fn a_orbits(p: &MapParams, count: usize, half: usize, seed: u64) -> Vec<Orbit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
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

fn linear_orbit(p: &MapParams) -> Orbit {
    build_generic(p, &[Branch::R3, Branch::R5, Branch::R3, Branch::R3, Branch::R5, Branch::R3], 2).unwrap()
}

#[test]
fn linear_graph_transform_examples() {
    let p = ex();
    let o = linear_orbit(&p);
    let km = KergodicMap::new(&p, &o, 2, 1.0, 0.3).unwrap();
    let zero = LipGraph::zero(km.from, GraphAxis::UToS, 65);
    let g = graph_transform(&p, &km, &zero).unwrap();
    assert!(g.values.iter().all(|&v| v.abs() < 1e-15));
    let eps = 0.5;
    let sloped = LipGraph::from_values(km.from, GraphAxis::UToS, zero.grid.clone(), zero.grid.iter().map(|x| eps * x).collect());
    let g = graph_transform(&p, &km, &sloped).unwrap();
    let d = km.derivative(&p, Point::new(0.0, 0.0));
    let expected = eps * d.d / d.a;
    assert!((expected.abs() - eps * p.lambda / p.sigma).abs() < 1e-12);
    for (x, v) in g.grid.iter().zip(&g.values) {
        assert!((v - expected * x).abs() <= 1e-12 * (1.0 + x.abs()), "{v} {}", expected * x);
    }
    assert_eq!(g.value_at_zero(), 0.0);
}

#[test]
fn graph_transform_contracts_on_random_pairs() {
    let p = strict();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bound_per_step = (p.lambda / p.sigma).sqrt();
    let (mut steps, mut worst) = (0, 0.0f64);
    for o in a_orbits(&p, 40, 20, 1) {
        let i = o.origin;
        let chain = induced_indices(&p, &o, i);
        for w in chain.windows(2) {
            if !(in_a(&p, o.points[w[0]]) && in_a(&p, o.points[w[1]])) {
                continue;
            }
            let mut rho = 1.0;
            let (ratio, k) = loop {
                let km = KergodicMap::new(&p, &o, w[0], rho, 0.3).unwrap();
                let s1 = LipGraph::random(km.from, GraphAxis::UToS, 129, 1.0, &mut rng);
                let s2 = LipGraph::random(km.from, GraphAxis::UToS, 129, 1.0, &mut rng);
                match (graph_transform(&p, &km, &s1), graph_transform(&p, &km, &s2)) {
                    (Ok(a), Ok(b)) => break (a.ratio_diff(&b) / s1.ratio_diff(&s2), km.k),
                    _ => rho /= 2.0,
                }
                assert!(rho > RHO_MIN);
            };
            let bound = bound_per_step.powi(k as i32) * 1.05;
            worst = worst.max(ratio / bound);
            assert!(ratio <= bound, "factor {ratio:e} > {bound:e} at k={k}");
            steps += 1;
        }
    }
    assert!(steps >= 20, "{steps} A-to-A steps");
    println!("{steps} A-to-A steps, worst factor/bound {worst:.3e}");
}

#[test]
fn converged_leaves_are_flat_and_centered() {
    let p = strict();
    let mut done = 0;
    for o in a_orbits(&p, 20, 40, 2) {
        for kind in [LeafKind::Unstable, LeafKind::Stable] {
            let leaf = match kind {
                LeafKind::Unstable => local_unstable(&p, &o, o.origin, &opts()),
                LeafKind::Stable => local_stable(&p, &o, o.origin, &opts()),
            };
            let leaf = leaf.unwrap();
            let g = leaf.graph.as_ref().unwrap();
            assert!(g.lip_bound <= 1.0 / 3.0, "{kind:?} lip {}", g.lip_bound);
            assert!(g.value_at_zero().abs() <= 1e-10);
            assert!(leaf.last_change < opts().tol);
            assert!(leaf.curve.is_simple());
            assert!(leaf.curve.points.contains(&o.center()));
            done += 1;
        }
    }
    assert_eq!(done, 40);
}

#[test]
fn leaves_do_not_depend_on_the_seed() {
    let p = ex();
    for o in a_orbits(&p, 10, 50, 3) {
        let zero = local_unstable(&p, &o, o.origin, &opts()).unwrap().graph.unwrap();
        let seeded = local_unstable(&p, &o, o.origin, &ManifoldOptions { seed: Some(9), ..opts() }).unwrap().graph.unwrap();
        assert!(zero.sup_diff(&seeded) <= 2.0 * opts().tol, "{}", zero.sup_diff(&seeded));
        let zero = local_stable(&p, &o, o.origin, &opts()).unwrap().graph.unwrap();
        let seeded = local_stable(&p, &o, o.origin, &ManifoldOptions { seed: Some(5), ..opts() }).unwrap().graph.unwrap();
        assert!(zero.sup_diff(&seeded) <= 2.0 * opts().tol);
    }
}

#[test]
fn leaves_are_invariant() {
    let p = strict();
    let mut worst = 0.0f64;
    for o in a_orbits(&p, 50, 40, 4) {
        let du = unstable_invariance_defect(&p, &o, o.origin, &opts()).unwrap();
        let ds = stable_invariance_defect(&p, &o, o.origin, &opts()).unwrap();
        worst = worst.max(du).max(ds);
    }
    assert!(worst <= 1e-6, "{worst:e}");
}

#[test]
fn axis_leaves_at_the_fixed_points() {
    let p = ex();
    let o = build_orbit(&p, &[Branch::R1; 21], 10, 0.0, 0.0).unwrap();
    assert_eq!(o.center(), Point::new(0.0, 0.0));
    let u = local_unstable(&p, &o, 10, &opts()).unwrap();
    assert!(u.curve.points.iter().all(|z| z.x == 0.0 && z.y >= 0.0));
    assert!(u.curve.length() > 0.0);
    let s = local_stable(&p, &o, 10, &opts()).unwrap();
    assert!(s.curve.points.iter().all(|z| z.y == 0.0 && z.x >= 0.0));

    let o = build_orbit(&p, &[Branch::R5; 21], 10, 1.0, 1.0).unwrap();
    assert_eq!(o.center(), Point::new(1.0, 1.0));
    let u = local_unstable(&p, &o, 10, &opts()).unwrap();
    assert!(u.curve.points.iter().all(|z| (z.x - 1.0).abs() < 1e-15 && z.y <= 1.0));
    let s = local_stable(&p, &o, 10, &opts()).unwrap();
    assert!(s.curve.points.iter().all(|z| (z.y - 1.0).abs() < 1e-15 && z.x <= 1.0));
}

#[test]
fn global_leaves_of_the_origin_are_the_edges() {
    let p = ex();
    let o = build_orbit(&p, &[Branch::R1; 41], 20, 0.0, 0.0).unwrap();
    let u = global_unstable(&p, &o, 20, 6, &opts()).unwrap();
    assert!(u.points.iter().all(|z| z.x == 0.0));
    let ys: Vec<f64> = u.points.iter().map(|z| z.y).collect();
    assert!(ys.iter().cloned().fold(f64::INFINITY, f64::min) <= 1e-12);
    assert!(ys.iter().cloned().fold(0.0, f64::max) >= 1.0 - 1e-9);
    assert!(u.points.windows(2).all(|w| w[0].dist(w[1]) <= SEGMENT * (1.0 + 1e-9)));
    let s = global_stable(&p, &o, 20, 6, &opts()).unwrap();
    assert!(s.points.iter().all(|z| z.y == 0.0));
    assert!(s.points.iter().map(|z| z.x).fold(0.0, f64::max) >= 1.0 - 1e-9);

    // the local leaves of the two corners are too short to meet
    let o1 = build_orbit(&p, &[Branch::R5; 41], 20, 1.0, 1.0).unwrap();
    assert_eq!(bracket(&p, &o, 20, &o1, 20, &opts()), Err(Error::NoIntersection));
    // the bottom edge meets the right edge, the line of W^u_loc(1, 1), at (1, 0)
    let right = ManifoldCurve::new(LeafKind::Unstable, vec![Point::new(1.0, 0.0), Point::new(1.0, 1.0)]);
    let b = bracket_curves(&s, &right).unwrap();
    assert!(b.point.dist(Point::new(1.0, 0.0)) < 1e-9, "{b:?}");
    assert!(!b.near_tangent);
}

#[test]
fn bracket_of_a_point_with_itself() {
    let p = ex();
    let o = a_orbits(&p, 1, 30, 5).remove(0);
    let b = bracket(&p, &o, o.origin, &o, o.origin, &opts()).unwrap();
    assert_eq!(b.point, o.center());
}

#[test]
fn bracket_of_nearby_points_is_transversal() {
    let p = ex();
    let mut found = 0;
    for o in a_orbits(&p, 20, 30, 6) {
        // a neighbour sharing a long past
        let i = o.origin;
        let Some(j) = (i + 1..o.len()).find(|&j| in_a(&p, o.points[j])) else { continue };
        let r = bracket(&p, &o, i, &o, i, &opts()).unwrap();
        assert_eq!(r.point, o.points[i]);
        match bracket(&p, &o, j, &o, j, &opts()) {
            Ok(b) => assert_eq!(b.point, o.points[j]),
            Err(e) => panic!("{e}"),
        }
        found += 1;
    }
    assert!(found > 0);
}

#[test]
fn segment_intersections() {
    let a = Point::new(0.0, 0.0);
    let b = Point::new(1.0, 1.0);
    let c = Point::new(0.0, 1.0);
    let d = Point::new(1.0, 0.0);
    assert_eq!(segment_intersection(a, b, c, d), Some(Point::new(0.5, 0.5)));
    assert_eq!(segment_intersection(a, c, b, d), None);
    let s = ManifoldCurve::new(LeafKind::Stable, vec![Point::new(0.0, 0.5), Point::new(1.0, 0.5)]);
    let u = ManifoldCurve::new(LeafKind::Unstable, vec![Point::new(0.5, 0.0), Point::new(0.5, 1.0)]);
    let r = bracket_curves(&s, &u).unwrap();
    assert_eq!(r.point, Point::new(0.5, 0.5));
    assert!((r.angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    let far = ManifoldCurve::new(LeafKind::Unstable, vec![Point::new(2.0, 0.0), Point::new(2.0, 1.0)]);
    assert_eq!(bracket_curves(&s, &far), Err(Error::NoIntersection));
    let zig = ManifoldCurve::new(
        LeafKind::Unstable,
        vec![Point::new(0.2, 0.0), Point::new(0.3, 1.0), Point::new(0.4, 0.0)],
    );
    assert_eq!(bracket_curves(&s, &zig), Err(Error::NonUnique));
    assert!(!ManifoldCurve::new(
        LeafKind::Stable,
        vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]
    )
    .is_simple());
}

#[test]
fn verticality_examples() {
    let seg: Vec<Point> = (0..11).map(|i| Point::new(0.3, i as f64 / 10.0)).collect();
    let r = eps1_vertical_check(&seg, 0.01).unwrap();
    assert!(r.pass && r.max_d1 == 0.0 && r.max_d2 == 0.0);
    let c = 5.0;
    let arc: Vec<Point> = (0..101).map(|i| {
        let y = -0.1 + 0.002 * i as f64;
        Point::new(c * y * y, y)
    }).collect();
    let r = eps1_vertical_check(&arc, 1.0).unwrap();
    assert!(!r.pass);
    assert!((r.max_d2 - 2.0 * c).abs() < 1e-6);
    let horizontal = vec![Point::new(0.0, 0.0), Point::new(0.5, 0.0), Point::new(1.0, 0.0)];
    assert!(eps1_vertical_check(&horizontal, 0.1).is_err());
}

#[test]
fn vertical_curves_stay_vertical_through_the_fold() {
    let p = strict();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let mut g = seeded_vertical_curve(&p, DEFAULT_EPS1, 129, &mut rng);
        assert!(eps1_vertical_check(&g.local_points(), DEFAULT_EPS1).unwrap().pass);
        for _ in 0..20 {
            let route = Passage::random(&mut rng);
            g = r4_passage(&p, &g, &route).unwrap();
            let r = eps1_vertical_check(&g.local_points(), DEFAULT_EPS1).unwrap();
            worst = (worst.0.max(r.max_d1), worst.1.max(r.max_d2));
            assert!(r.pass, "{r:?} after {route:?}");
        }
    }
    println!("max |g'| = {:.3e}, max |g''| = {:.3e}", worst.0, worst.1);
}

#[test]
fn passage_agrees_with_the_map() {
    let p = ex();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = seeded_vertical_curve(&p, DEFAULT_EPS1, 33, &mut rng);
    let route = Passage { right_wing: true, r1_steps: 1, linear: vec![] };
    let h = r4_passage(&p, &g, &route).unwrap();
    // each output point comes from a point of g through the wing and one R1 step
    for z in h.points() {
        let back = apply_inverse_branch(&p, Branch::R1, z);
        let w = apply_inverse_branch(&p, Branch::R4Up, back);
        let x_on_g = {
            let pts = g.points();
            let k = pts.partition_point(|q| q.y < w.y).clamp(1, pts.len() - 1);
            let (a, b) = (pts[k - 1], pts[k]);
            a.x + (b.x - a.x) * (w.y - a.y) / (b.y - a.y)
        };
        assert!((w.x - x_on_g).abs() < 1e-9, "{} {}", w.x, x_on_g);
    }
}

#[test]
fn mixing_on_the_example_parameters() {
    let p = ex();
    let u = Disk { center: Point::new(0.05, 0.5), radius: 0.05 };
    let r = mixing_times(&p, &u, 50).unwrap();
    let n = r.n_plus.expect("n_plus within budget");
    assert!(n <= 50);
    assert!(r.n_minus.is_some());
    let edge = Disk { center: Point::new(0.0, 0.5), radius: 0.6 };
    assert_eq!(mixing_times(&p, &edge, 5).unwrap().n_plus, Some(0));
    let v = Disk { center: Point::new(0.48, 0.45), radius: 0.05 };
    let (n, z) = mixing_witness(&p, &u, &v, 50).unwrap().expect("crossing");
    assert!(n > 0 && z.x >= 0.0 && z.x <= 1.0 && z.y >= 0.0 && z.y <= 1.0);
}

#[test]
fn nonexpansive_pair_on_strict_parameters() {
    let p = strict();
    let r = nonexpansive_pair(&p, 1e-3, 50, 1).unwrap();
    assert!(r.a != r.b);
    assert!(r.distance >= 1e-6, "{r:?}");
    assert!(r.sup_dist <= 1e-3);
    assert!((r.a.x + r.b.x - 2.0 * p.q).abs() < 1e-12 && r.a.y == r.b.y);
    // a huge delta accepts the first symmetric pair
    assert!(nonexpansive_pair(&p, 2.0, 50, 2).is_ok());
    assert!(nonexpansive_pair(&p, 0.0, 50, 2).is_err());
    let o = build_orbit(&p, &[Branch::R1; 11], 5, 0.0, 0.0).unwrap();
    assert!(pair_distance(&o, &o, 3).is_err());
}

#[test]
fn stable_leaves_contract_at_the_half_rate() {
    let p = strict();
    let floor = 0.9 * 0.5 * p.lambda.ln().abs();
    for o in a_orbits(&p, 20, 45, 7) {
        let rows = stable_decay(&p, &o, o.origin, 10, 30, &opts()).unwrap();
        let rate = decay_exponent(&rows).unwrap();
        assert!(rate >= floor, "rate {rate} < {floor}");
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn transform_keeps_the_center_fixed(seed in 0u64..1000, idx in 0usize..8) {
            let p = strict();
            let orbits = a_orbits(&p, 8, 12, 77);
            let o = &orbits[idx];
            let km = KergodicMap::new(&p, o, o.origin, 0.25, 0.3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = LipGraph::random(km.from, GraphAxis::UToS, 65, 1.0, &mut rng);
            if let Ok(g) = graph_transform(&p, &km, &s) {
                prop_assert!(g.value_at_zero().abs() <= 1e-10);
                prop_assert!(g.lip_bound <= 1.0);
            }
        }

        #[test]
        fn crossing_segments_meet_on_both(ax in 0.0f64..1.0, ay in 0.0f64..1.0, bx in 0.0f64..1.0, by in 0.0f64..1.0,
                                          cx in 0.0f64..1.0, cy in 0.0f64..1.0, dx in 0.0f64..1.0, dy in 0.0f64..1.0) {
            let (a, b, c, d) = (Point::new(ax, ay), Point::new(bx, by), Point::new(cx, cy), Point::new(dx, dy));
            if let Some(z) = segment_intersection(a, b, c, d) {
                let on = |u: Point, v: Point| ((z - u).cross(v - u)).abs() <= 1e-9 * (v - u).norm().max(1e-300);
                prop_assert!(on(a, b) && on(c, d));
                let w = segment_intersection(c, d, a, b).unwrap();
                prop_assert!(w.dist(z) <= 1e-9);
            }
        }

        #[test]
        fn straight_curves_have_their_slope(slope in -1.0f64..1.0, x0 in 0.0f64..1.0) {
            let pts: Vec<Point> = (0..20).map(|i| Point::new(x0 + slope * i as f64 * 0.05, i as f64 * 0.05)).collect();
            let r = eps1_vertical_check(&pts, 0.5).unwrap();
            prop_assert!((r.max_d1 - slope.abs()).abs() < 1e-9);
            prop_assert!(r.max_d2 < 1e-6);
            prop_assert_eq!(r.pass, slope.abs() <= 0.5);
        }
    }
}
