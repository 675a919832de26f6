use horseshoe::coding::*;
use horseshoe::map_core::builder::random_orbit;
use horseshoe::map_core::{apply, MapParams, Point};
use horseshoe::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn w(text: &str) -> Word {
    text.parse().unwrap()
}

#[test]
fn band_examples() {
    let p = MapParams::ref_ex();
    assert_eq!(band_of(&p, Point::new(0.05, 0.3)).unwrap().symbols(), vec![0]);
    assert_eq!(band_of(&p, Point::new(1.0, 1.0)).unwrap().symbols(), vec![1]);
    assert_eq!(band_of(&p, Point::new(p.q, 0.0)).unwrap().symbols(), vec![1, 2]);
    assert_eq!(band_of(&p, Point::new(0.3, 0.9)), Err(Error::NotInBands));
}

#[test]
fn word_strings() {
    let word = w("010.210");
    assert_eq!(word.symbols, vec![0, 1, 0, 2, 1, 0]);
    assert_eq!(word.center, 3);
    assert_eq!(word.to_string(), "010.210");
    let c = Word::centered(vec![0, 1, 2, 1, 0]).unwrap();
    assert_eq!(c.to_string(), "01.210");
    assert_eq!(c.level(), 2);
    assert_eq!(c.shift().unwrap().to_string(), "2.10");
    assert!("0102".parse::<Word>().is_err());
    assert!("01.3".parse::<Word>().is_err());
    assert!(Word::centered(vec![0, 1]).is_err());
}

#[test]
fn itinerary_examples() {
    for p in [MapParams::ref_ex(), MapParams::ref_strict()] {
        let it = itinerary(&p, Point::new(0.0, 0.0), 3).unwrap();
        assert_eq!(it.word.to_string(), "000.0000");
        assert!(!it.flagged());
        assert_eq!(itinerary(&p, Point::new(1.0, 1.0), 3).unwrap().word.to_string(), "111.1111");
        let it = itinerary(&p, Point::new(p.q, 0.0), 1).unwrap();
        assert_eq!(it.word.to_string(), "0.10");
        assert_eq!(it.tangency, vec![0]);
    }
    let p = MapParams::ref_ex();
    assert!(matches!(itinerary(&p, Point::new(0.3, 0.9), 1), Err(Error::Escaped(_))));
}

#[test]
fn corner_atom_is_small() {
    let p = MapParams::ref_ex();
    let a = atom(&p, &Word::constant(0, 1), 12);
    assert!(!a.empty);
    assert!(a.contains(Point::new(0.0, 0.0)));
    let bb = a.bounding_box().unwrap();
    let cell = 2f64.powi(-12);
    assert!(bb.x1 <= p.lambda + cell && bb.y1 <= 1.0 / p.sigma + cell, "{bb:?}");
}

#[test]
fn atom_counts_on_example_parameters() {
    let p = MapParams::ref_ex();
    for (n, expected) in [(1, 9), (2, 81)] {
        let count = count_atoms(&p, n, DEFAULT_RESOLUTION);
        assert_eq!(count.distinct_atoms, expected);
        assert_eq!(count.words, 3 * expected);
    }
}

#[test]
fn atom_counts_on_strict_parameters() {
    let p = MapParams::ref_strict();
    assert_eq!(count_atoms(&p, 1, DEFAULT_RESOLUTION).distinct_atoms, 9);
    assert_eq!(count_atoms(&p, 2, DEFAULT_RESOLUTION).distinct_atoms, 81);
}

#[test]
fn tangency_atoms_share_the_fold() {
    let p = MapParams::ref_ex();
    let q = Point::new(p.q, 0.0);
    let a = atom(&p, &w("0.10"), DEFAULT_RESOLUTION);
    let b = atom(&p, &w("0.20"), DEFAULT_RESOLUTION);
    assert!(a.contains(q) && b.contains(q));
    let far = Point::new(p.q + 0.1, p.c * 0.01 - 0.5 * p.lambda);
    assert!(a.contains(far) && !b.contains(far));
}

#[test]
fn diameters_decay_at_the_predicted_rate() {
    let p = MapParams::ref_ex();
    let table = decay_table(&p, 4, DEFAULT_RESOLUTION).unwrap();
    assert!((table.rows[0].max_diameter - 2f64.sqrt()).abs() < 1e-12);
    for pair in table.rows.windows(2) {
        assert!(pair[1].max_diameter < pair[0].max_diameter);
    }
    let rel = table.rate / table.reference_rate;
    assert!((0.8..=1.2).contains(&rel), "rate {} vs {}", table.rate, table.reference_rate);
    let k = table.constant(2);
    assert!(table.rows[3].max_diameter <= k * diameter_scale(&p, 3), "{:?}", table.rows);
}

#[test]
fn fixed_points_are_coded_by_constant_words() {
    let p = MapParams::ref_ex();
    for (s, pt) in [(0, Point::new(0.0, 0.0)), (1, Point::new(1.0, 1.0))] {
        for n in 1..=3 {
            let t = theta(&p, &Word::constant(s, n), DEFAULT_RESOLUTION).unwrap();
            assert!(t.point.dist(pt) <= t.radius);
        }
    }
}

#[test]
fn round_trip_through_the_coding() {
    let p = MapParams::ref_ex();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cache = AtomCache::new(DEFAULT_RESOLUTION);
    let (mut checked, mut escaped) = (0, 0);
    while checked < 1000 {
        let Ok(orbit) = random_orbit(&p, &mut rng, 8, 0.5) else { continue };
        let pt = orbit.center();
        match itinerary(&p, pt, 3) {
            Ok(it) => {
                let a = cache.get(&p, &it.word).clone();
                assert!(a.contains(pt), "{pt:?} not in cover of {}", it.word);
                let t = theta_of_atom(&a).unwrap();
                assert!(t.point.dist(pt) <= t.radius);
                checked += 1;
            }
            Err(_) => escaped += 1,
        }
    }
    assert!(escaped < 50, "{escaped} escapes");
}

#[test]
fn theta_commutes_with_the_shift() {
    let p = MapParams::ref_ex();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cache = AtomCache::new(DEFAULT_RESOLUTION);
    let mut tested = 0;
    for _ in 0..300 {
        let n = 1 + tested % 3;
        let word = Word::random(&mut rng, n);
        match semiconjugacy_defect(&p, &word, &mut cache) {
            Ok((defect, bound)) => {
                assert!(defect <= bound, "{word}: {defect} > {bound}");
                tested += 1;
            }
            Err(Error::EmptyAtom(_)) => {}
            Err(e) => panic!("{word}: {e}"),
        }
    }
    assert!(tested > 250);
}

#[test]
fn extensions_refine_the_cover() {
    let p = MapParams::ref_ex();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let parent = Word::random(&mut rng, 1);
        let child = parent.extended(rand::Rng::gen_range(&mut rng, 0..3), rand::Rng::gen_range(&mut rng, 0..3));
        let a = atom(&p, &parent, 12);
        let b = atom(&p, &child, 12);
        for r in &b.boxes {
            assert!(a.contains(r.center()), "{child} box outside {parent}");
        }
        if let (Ok(tp), Ok(tc)) = (theta_of_atom(&a), theta_of_atom(&b)) {
            assert!(tc.point.dist(tp.point) <= tp.radius);
        }
    }
}

#[test]
fn theta_is_holder_continuous() {
    let p = MapParams::ref_ex();
    assert!((theta_gamma(&p) - 1.161).abs() < 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let raw = random_word_pairs(&mut rng, 14, 10, 200);
    assert!(raw.iter().all(|(a, b)| a.first_disagreement(b).is_some_and(|n| (1..=10).contains(&n))));
    let pairs = realizable_word_pairs(&p, &mut rng, 14, 10, 1000);
    assert_eq!(pairs.len(), 1000);
    let fit = theta_holder_fit(&p, &pairs).unwrap();
    assert_eq!(fit.pairs_used, 1000);
    assert!(fit.gamma_est >= 0.93, "gamma_est {}", fit.gamma_est);
    assert!(fit.passes());
}

#[test]
fn empty_atoms_are_reported() {
    let p = MapParams::ref_ex();
    let mut found = None;
    for a in atoms_at_level(&p, 3, 12) {
        if a.empty {
            found = Some(a.word);
            break;
        }
    }
    let word = found.expect("some level-3 code is not realizable on the example parameters");
    assert!(matches!(theta(&p, &word, 12), Err(Error::EmptyAtom(_))));
}

#[test]
fn atoms_csv() {
    let p = MapParams::ref_ex();
    let a = atom(&p, &w("0.00"), 6);
    let rows = a.csv_rows();
    assert_eq!(Atom::csv_header(), "word,box_xmin,box_ymin,box_xmax,box_ymax");
    assert_eq!(rows.len(), a.boxes.len());
    assert!(rows[0].starts_with("0.00,"));
}

#[test]
fn images_of_atoms_stay_in_bands() {
    let p = MapParams::ref_ex();
    let a = atom(&p, &w("1.21"), DEFAULT_RESOLUTION);
    let inner: Vec<Point> = a.boxes.iter().map(|r| r.center()).collect();
    let mut hits = 0;
    for pt in inner {
        if let Some(img) = apply(&p, pt) {
            if band_of(&p, img).is_ok_and(|s| s.contains(1)) {
                hits += 1;
            }
        }
    }
    assert!(hits > 0);
}

proptest! {
    #[test]
    fn words_round_trip_through_text(symbols in proptest::collection::vec(0u8..3, 1..20), c in 0usize..20) {
        let center = c % symbols.len();
        let word = Word { symbols, center };
        let back: Word = word.to_string().parse().unwrap();
        prop_assert_eq!(back, word);
    }

    #[test]
    fn shift_drops_a_level(symbols in proptest::collection::vec(0u8..3, 1..6)) {
        let mut s = symbols.clone();
        s.extend(symbols.iter().rev());
        s.push(0);
        let word = Word::centered(s).unwrap();
        let shifted = word.shift().unwrap();
        prop_assert_eq!(shifted.level() + 1, word.level());
        prop_assert_eq!(shifted.at(0), word.at(1));
        prop_assert_eq!(shifted.key(), word.key()[2..].to_vec());
    }

    #[test]
    fn points_of_the_invariant_set_lie_in_their_atom(seed in 0u64..1000) {
        let p = MapParams::ref_ex();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Ok(orbit) = random_orbit(&p, &mut rng, 6, 0.5) {
            if let Ok(it) = itinerary(&p, orbit.center(), 2) {
                let a = atom(&p, &it.word, 12);
                prop_assert!(a.contains(orbit.center()));
            }
        }
    }
}
