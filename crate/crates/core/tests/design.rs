use approx::assert_abs_diff_eq;
use gdoe_core::design::{encode_design, EncodingRule};
use gdoe_core::synthetic::{cnn_constraints, cnn_factors, two_level_factorial};
use gdoe_core::*;
use proptest::prelude::*;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn constrained_cnn() -> Design {
    let f = cnn_factors();
    filter_by_constraints(&build_full_factorial(&f).unwrap(), &cnn_constraints(&f).unwrap()).unwrap()
}

#[test]
fn two_by_two_is_four_trials_first_factor_outermost() {
    let f = vec![
        FactorSpec::discrete("a", &[1.0, 2.0]).unwrap(),
        FactorSpec::categorical("b", &["x", "y"]).unwrap(),
    ];
    let d = build_full_factorial(&f).unwrap();
    assert_eq!(d.len(), 4);
    assert_eq!(d.provenance(), Provenance::InitialFull);
    assert_eq!(d.trials()[1], vec![Level::Number(1.0), Level::from("y")]);
    assert_eq!(d.trials()[2], vec![Level::Number(2.0), Level::from("x")]);
    assert_eq!(d.trial_ids(), &[0, 1, 2, 3]);
}

#[test]
fn cnn_space_counts() {
    let f = cnn_factors();
    let full = build_full_factorial(&f).unwrap();
    assert_eq!(full.len(), 7200);
    let d = filter_by_constraints(&full, &cnn_constraints(&f).unwrap()).unwrap();
    assert_eq!(d.len(), 1920);
    assert_eq!(d.provenance(), Provenance::InitialConstrained);
    // n1 > n2 holds for 10 of the 25 filter pairs, k1 >= k2 for 6 of 9 kernel pairs
    let pairs = |a: &[f64], strict: bool| {
        a.iter()
            .flat_map(|x| a.iter().map(move |y| (*x, *y)))
            .filter(|(x, y)| if strict { x > y } else { x >= y })
            .count()
    };
    let n = pairs(&[8.0, 32.0, 128.0, 512.0, 2048.0], true);
    let k = pairs(&[3.0, 5.0, 7.0], false);
    assert_eq!((n, k), (10, 6));
    assert_eq!(7200 * n / 25 * k / 9, 1920);
}

#[test]
fn four_two_level_factors_give_sixteen_trials() {
    assert_eq!(two_level_factorial(4).unwrap().len(), 16);
}

#[test]
fn filtering_keeps_ids_and_order() {
    let full = build_full_factorial(&cnn_factors()).unwrap();
    let d = constrained_cnn();
    assert!(d.trial_ids().windows(2).all(|w| w[0] < w[1]));
    for (id, t) in d.trial_ids().iter().zip(d.trials()) {
        assert_eq!(full.trial(*id).unwrap(), t.as_slice());
    }
    let same = filter_by_constraints(&full, &[]).unwrap();
    assert_eq!(same.trials(), full.trials());
    assert_eq!(same.trial_ids(), full.trial_ids());
}

#[test]
fn filtering_is_idempotent() {
    let f = cnn_factors();
    let c = cnn_constraints(&f).unwrap();
    let once = constrained_cnn();
    let twice = filter_by_constraints(&once, &c).unwrap();
    assert_eq!(once, twice);
}

#[test]
fn unknown_factor_in_constraint_is_rejected() {
    let f = cnn_factors();
    assert!(matches!(parse_constraint("n3 > n2", &f), Err(Error::UnknownFactor(n)) if n == "n3"));
}

#[test]
fn size_cap_and_duplicate_names() {
    let f: Vec<FactorSpec> = (0..4)
        .map(|i| FactorSpec::discrete(&format!("f{i}"), &[1.0, 2.0, 3.0]).unwrap())
        .collect();
    match gdoe_core::design::build_full_factorial_capped(&f, 80) {
        Err(Error::Size { product, cap }) => assert_eq!((product, cap), (81, 80)),
        other => panic!("expected a size error, got {other:?}"),
    }
    let dup = vec![f[0].clone(), f[0].clone()];
    assert!(matches!(build_full_factorial(&dup), Err(Error::Validation(_))));
}

#[test]
fn factor_spec_validation() {
    assert!(FactorSpec::discrete("x", &[1.0]).is_err());
    assert!(FactorSpec::discrete("x", &[2.0, 1.0]).is_err());
    assert!(FactorSpec::discrete("x", &[1.0, 1.0]).is_err());
    assert!(FactorSpec::discrete("x", &[0.0, 1.0]).unwrap().with_transform(Transform::Log10).is_err());
    assert!(FactorSpec::categorical("x", &["a", "b"]).unwrap().with_transform(Transform::Log10).is_err());
    assert!(FactorSpec::discrete("1x", &[0.0, 1.0]).is_err());
}

#[test]
fn log_filters_encode_on_a_geometric_scale() {
    let f = cnn_factors();
    let map = ColumnMap::new(&f).unwrap();
    let n1 = &map.blocks()[0];
    let enc = |v: f64| {
        let mut trial: Vec<Level> = f.iter().map(|s| s.levels[0].clone()).collect();
        trial[0] = Level::Number(v);
        let mut out = vec![0.0f64; map.width()];
        map.encode_into(&trial, &mut out).unwrap();
        out[n1.start]
    };
    assert_abs_diff_eq!(enc(8.0), 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(enc(2048.0), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(enc(128.0), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(
        enc(128.0),
        (128f64.log10() - 8f64.log10()) / (2048f64.log10() - 8f64.log10()),
        epsilon = 1e-15
    );
}

#[test]
fn column_layout_of_the_reference_spaces() {
    let map = ColumnMap::new(&cnn_factors()).unwrap();
    assert_eq!(map.width(), 9);
    assert!(map.blocks().iter().any(|b| b.rule == EncodingRule::Binary));
    let e = encode_design::<f64>(&two_level_factorial(4).unwrap()).unwrap();
    assert_eq!(e.width(), 4);
    let three = vec![FactorSpec::categorical("c", &["u", "v", "w"]).unwrap()];
    let m = ColumnMap::new(&three).unwrap();
    assert_eq!(m.width(), 3);
    assert_eq!(m.blocks()[0].rule, EncodingRule::OneHot);
}

#[test]
fn decode_examples() {
    let f = cnn_factors();
    let map = ColumnMap::new(&f).unwrap();
    let zeros = vec![0.0f64; map.width()];
    let first: Vec<Level> = f.iter().map(|s| s.levels[0].clone()).collect();
    assert_eq!(decode_vector(&zeros, &map, true).unwrap(), first);
    let mut v = zeros.clone();
    v[0] = 0.5;
    assert_eq!(decode_vector(&v, &map, true).unwrap()[0], Level::Number(128.0));
    // continuous factors keep off-level values without snapping
    v[0] = 0.6;
    let raw = decode_vector(&v, &map, false).unwrap()[0].as_number().unwrap();
    assert!((raw - 10f64.powf(8f64.log10() + 0.6 * (2048f64.log10() - 8f64.log10()))).abs() < 1e-9);
    assert!(decode_vector(&zeros[..3], &map, true).is_err());

    let kf = vec![FactorSpec::categorical("k", &["3", "5", "7"]).unwrap()];
    let km = ColumnMap::new(&kf).unwrap();
    assert_eq!(decode_vector(&[0.2, 0.7, 0.1], &km, true).unwrap()[0], Level::from("5"));
    assert_eq!(decode_vector(&[0.4, 0.4, 0.2], &km, true).unwrap()[0], Level::from("3"));

    let a = vec![FactorSpec::categorical("a", &["relu", "tanh"]).unwrap()];
    let am = ColumnMap::new(&a).unwrap();
    assert_eq!(decode_vector(&[0.5], &am, true).unwrap()[0], Level::from("tanh"));
    assert_eq!(decode_vector(&[0.49], &am, true).unwrap()[0], Level::from("relu"));
    let d = Design::with_sequential_ids(a, vec![vec![Level::from("relu")]], Provenance::InitialFull).unwrap();
    assert_eq!(encode_design::<f64>(&d).unwrap().rows.row(0), &[0.0]);
}

#[test]
fn snapping_ties_go_to_the_lower_level() {
    let f = vec![FactorSpec::discrete("x", &[0.0, 1.0]).unwrap()];
    let m = ColumnMap::new(&f).unwrap();
    assert_eq!(decode_vector(&[0.5], &m, true).unwrap()[0], Level::Number(0.0));
}

#[test]
fn round_trip_on_the_sixteen_trial_design() {
    let d = two_level_factorial(4).unwrap();
    let e = encode_design::<f64>(&d).unwrap();
    for (row, t) in e.rows.iter_rows().zip(d.trials()) {
        assert_eq!(&decode_vector(row, &e.column_map, true).unwrap(), t);
    }
}

#[test]
fn round_trip_on_random_samples_of_the_constrained_design() {
    let d = constrained_cnn();
    let e = encode_design::<f64>(&d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        for i in index::sample(&mut rng, d.len(), 100) {
            let back = decode_vector(e.rows.row(i), &e.column_map, true).unwrap();
            assert_eq!(back, d.trials()[i]);
        }
    }
}

#[test]
fn duplication_counts_and_determinism() {
    let d = two_level_factorial(4).unwrap();
    let e = encode_design::<f64>(&d).unwrap();
    let (tr, te) = duplicate_and_split(&e, 50, 30, NoiseConfig::disabled(), 1).unwrap();
    assert_eq!((tr.rows(), te.rows()), (800, 480));
    for r in tr.iter_rows() {
        assert!(e.rows.iter_rows().any(|s| s == r));
    }
    let again = duplicate_and_split(&e, 50, 30, NoiseConfig::disabled(), 1).unwrap();
    assert_eq!(tr, again.0);
    let other = duplicate_and_split(&e, 50, 30, NoiseConfig::disabled(), 2).unwrap();
    assert_ne!(tr, other.0);
    // each source row appears exactly train_dup times
    for s in e.rows.iter_rows() {
        assert_eq!(tr.iter_rows().filter(|r| *r == s).count(), 50);
    }

    let big = encode_design::<f64>(&constrained_cnn()).unwrap();
    let (tr, te) = duplicate_and_split(&big, 5, 3, NoiseConfig::disabled(), 0).unwrap();
    assert_eq!((tr.rows(), te.rows()), (9600, 5760));

    let (noisy, _) = duplicate_and_split(&e, 2, 1, NoiseConfig::gaussian(0.3), 0).unwrap();
    assert!(noisy.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(noisy.as_slice().iter().any(|v| *v != 0.0 && *v != 1.0));
    let (zero_alpha, _) = duplicate_and_split(&e, 2, 1, NoiseConfig::gaussian(0.0), 0).unwrap();
    let (plain, _) = duplicate_and_split(&e, 2, 1, NoiseConfig::disabled(), 0).unwrap();
    assert_eq!(zero_alpha, plain);
    assert!(duplicate_and_split(&e, 0, 1, NoiseConfig::disabled(), 0).is_err());
}

#[test]
fn csv_round_trip_with_reordered_columns() {
    let d = constrained_cnn();
    let mut buf = Vec::new();
    d.write_csv(&mut buf, true).unwrap();
    let back = Design::read_csv(buf.as_slice(), d.factors(), Provenance::InitialConstrained).unwrap();
    assert_eq!(back, d);

    let text = "a2,trial_id,n1,k1,a1,p1,n2,k2,p2,d\ntanh,5,32,5,relu,2,8,3,4,0.5\n";
    let r = Design::read_csv(text.as_bytes(), &cnn_factors(), Provenance::InitialFull).unwrap();
    assert_eq!(r.trial_ids(), &[5]);
    assert_eq!(r.trials()[0][6], Level::from("tanh"));
    let bad = "n1,zz\n8,1\n";
    assert!(Design::read_csv(bad.as_bytes(), &cnn_factors(), Provenance::InitialFull).is_err());
}

#[test]
fn off_level_values_need_generated_provenance() {
    let f = vec![FactorSpec::continuous("x", &[1.0, 3.0]).unwrap()];
    let t = vec![vec![Level::Number(2.0)]];
    assert!(Design::with_sequential_ids(f.clone(), t.clone(), Provenance::InitialFull).is_err());
    assert!(Design::with_sequential_ids(f, t, Provenance::GeneratedGrid).is_ok());
    let g = vec![FactorSpec::discrete("x", &[1.0, 3.0]).unwrap()];
    assert!(Design::with_sequential_ids(g, vec![vec![Level::Number(2.0)]], Provenance::GeneratedGrid).is_err());
    let ids = Design::new(
        vec![FactorSpec::discrete("x", &[1.0, 3.0]).unwrap()],
        vec![vec![Level::Number(1.0)], vec![Level::Number(3.0)]],
        vec![4, 4],
        Provenance::InitialFull,
    );
    assert!(ids.is_err());
}

fn factor_specs() -> impl Strategy<Value = Vec<FactorSpec>> {
    prop::collection::vec((2usize..5, any::<bool>()), 1..6).prop_map(|shape| {
        shape
            .iter()
            .enumerate()
            .map(|(i, &(levels, categorical))| {
                if categorical {
                    let names: Vec<String> = (0..levels).map(|l| format!("L{l}")).collect();
                    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                    FactorSpec::categorical(&format!("f{i}"), &refs).unwrap()
                } else {
                    let lv: Vec<f64> = (0..levels).map(|l| 1.0 + l as f64 * 1.5).collect();
                    FactorSpec::discrete(&format!("f{i}"), &lv).unwrap()
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn full_factorial_size_is_the_level_product(f in factor_specs()) {
        let d = build_full_factorial(&f).unwrap();
        let product: usize = f.iter().map(|s| s.level_count()).product();
        prop_assert_eq!(d.len(), product);
        let e = encode_design::<f64>(&d).unwrap();
        prop_assert!(e.rows.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let widths: usize = e.column_map.blocks().iter().map(|b| b.width).sum();
        prop_assert_eq!(e.width(), widths);
        for (row, t) in e.rows.iter_rows().zip(d.trials()) {
            prop_assert_eq!(&decode_vector(row, &e.column_map, true).unwrap(), t);
        }
    }

    #[test]
    fn decoding_any_vector_gives_declared_levels(v in prop::collection::vec(0.0f64..=1.0, 9)) {
        let f = cnn_factors();
        let map = ColumnMap::new(&f).unwrap();
        let t = decode_vector(&v, &map, true).unwrap();
        for (s, l) in f.iter().zip(&t) {
            prop_assert!(s.level_index(l).is_some());
        }
    }
}
