use std::sync::OnceLock;

use approx::assert_abs_diff_eq;
use gdoe_core::design::encode_design;
use gdoe_core::generator::*;
use gdoe_core::synthetic::{cnn_constraints, cnn_factors, two_level_factorial};
use gdoe_core::*;
use proptest::prelude::*;

fn two_level(names: &[&str]) -> Vec<FactorSpec> {
    names.iter().map(|n| FactorSpec::discrete(n, &[-1.0, 1.0]).unwrap()).collect()
}

fn numeric_design(names: &[&str], rows: &[&[f64]]) -> Design {
    let trials = rows.iter().map(|r| r.iter().map(|&v| Level::Number(v)).collect()).collect();
    Design::with_sequential_ids(two_level(names), trials, Provenance::InitialFull).unwrap()
}

#[test]
fn two_by_two_is_perfect() {
    let d = two_level_factorial(2).unwrap();
    let g = diagnose(&d, &[]).unwrap();
    assert_eq!((g.n_trials, g.n_unique), (4, 4));
    assert_eq!(g.orthogonality, 0.0);
    assert!(g.balance.iter().all(|b| b.value == 0.0));
    assert!(g.level_coverage.iter().all(|c| c.value == 1.0));
    assert!(g.confounded_pairs.is_empty() && g.violations.is_empty());
    assert_eq!(g.density_uniformity, None);
    assert!(!g.is_flagged());
}

#[test]
fn identical_columns_are_confounded() {
    let d = numeric_design(&["F1", "F2"], &[&[-1.0, -1.0], &[1.0, 1.0], &[-1.0, -1.0], &[1.0, 1.0]]);
    let g = diagnose(&d, &[]).unwrap();
    assert_eq!(g.confounded_pairs, vec![("F1".to_string(), "F2".to_string())]);
    assert_abs_diff_eq!(g.orthogonality, 1.0, epsilon = 1e-12);
    assert_eq!(g.n_unique, 2);
    assert!(g.is_flagged());
}

#[test]
fn half_fraction_is_orthogonal_and_balanced() {
    // D = ABC
    let rows: Vec<Vec<f64>> = (0..8)
        .map(|i| {
            let a = if i & 4 == 0 { -1.0 } else { 1.0 };
            let b = if i & 2 == 0 { -1.0 } else { 1.0 };
            let c = if i & 1 == 0 { -1.0 } else { 1.0 };
            vec![a, b, c, a * b * c]
        })
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let d = numeric_design(&["F1", "F2", "F3", "F4"], &refs);
    let g = diagnose(&d, &[]).unwrap();
    assert_eq!(g.orthogonality, 0.0);
    assert!(g.balance.iter().all(|b| b.value == 0.0));
    assert!(g.confounded_pairs.is_empty());
}

#[test]
fn single_level_factors_are_degenerate() {
    let one = numeric_design(&["F1", "F2"], &[&[1.0, -1.0], &[-1.0, -1.0]]);
    let g = diagnose(&one, &[]).unwrap();
    assert_eq!(g.degenerate_factors, vec!["F2".to_string()]);
    assert!(g.confounded_pairs.is_empty());
    assert_eq!(g.level_coverage[1].value, 0.5);
    let both = numeric_design(&["F1", "F2"], &[&[1.0, -1.0], &[1.0, -1.0]]);
    let g = diagnose(&both, &[]).unwrap();
    assert_eq!(g.confounded_pairs, vec![("F1".to_string(), "F2".to_string())]);
}

#[test]
fn violations_match_direct_evaluation() {
    let f = cnn_factors();
    let c = cnn_constraints(&f).unwrap();
    let full = build_full_factorial(&f).unwrap();
    let sample = random_subset(&full, 300, 4).unwrap();
    let g = diagnose(&sample, &c).unwrap();
    let mut expected = Vec::new();
    for (id, t) in sample.trial_ids().iter().zip(sample.trials()) {
        for expr in &c {
            if !expr.evaluate(&(f.as_slice(), t.as_slice())).unwrap() {
                expected.push((*id, expr.source().to_string()));
            }
        }
    }
    let got: Vec<(u64, String)> = g.violations.iter().map(|v| (v.trial_id, v.constraint.clone())).collect();
    assert_eq!(got, expected);
    let bad: std::collections::BTreeSet<u64> = expected.iter().map(|e| e.0).collect();
    assert_abs_diff_eq!(g.violation_fraction(), bad.len() as f64 / 300.0, epsilon = 1e-12);
}

#[test]
fn random_subset_examples() {
    let f = cnn_factors();
    let full = filter_by_constraints(&build_full_factorial(&f).unwrap(), &cnn_constraints(&f).unwrap()).unwrap();
    let s = random_subset(&full, 64, 0).unwrap();
    assert_eq!(s.len(), 64);
    assert_eq!(s.provenance(), Provenance::RandomSubset);
    assert_eq!(s, random_subset(&full, 64, 0).unwrap());
    assert_ne!(s.trial_ids(), random_subset(&full, 64, 1).unwrap().trial_ids());
    for (id, t) in s.trial_ids().iter().zip(s.trials()) {
        assert_eq!(full.trial(*id).unwrap(), t.as_slice());
    }
    let all = random_subset(&full, full.len(), 3).unwrap();
    let mut ids = all.trial_ids().to_vec();
    ids.sort_unstable();
    assert_eq!(ids, full.trial_ids());
    assert!(random_subset(&full, 0, 0).is_err());
    assert!(random_subset(&full, 1921, 0).is_err());
}

#[test]
fn helpers() {
    assert_abs_diff_eq!(correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0, epsilon = 1e-12);
    assert_eq!(correlation(&[1.0, 1.0], &[2.0, 3.0]), None);
    assert_eq!(partition_chi_square(&[[0.1, 0.1], [0.9, 0.9]], 1), 0.0);
    let even: Vec<[f64; 2]> = (0..16).map(|i| [((i % 4) as f64 + 0.5) / 4.0, ((i / 4) as f64 + 0.5) / 4.0]).collect();
    assert_eq!(partition_chi_square(&even, 4), 0.0);
    let clumped = vec![[0.1, 0.1]; 16];
    assert_abs_diff_eq!(partition_chi_square(&clumped, 4), 240.0, epsilon = 1e-9);
}

fn level_sets(max_levels: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(2usize..=max_levels, 1..=5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn any_full_factorial_is_orthogonal_and_balanced(levels in level_sets(3)) {
        let f: Vec<FactorSpec> = levels
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let lv: Vec<f64> = (0..k).map(|l| l as f64 * 2.0 + 1.0).collect();
                FactorSpec::discrete(&format!("f{i}"), &lv).unwrap()
            })
            .collect();
        let d = build_full_factorial(&f).unwrap();
        let g = diagnose(&d, &[]).unwrap();
        prop_assert!(g.orthogonality < 1e-12);
        prop_assert!(g.balance.iter().all(|b| b.value.abs() < 1e-12));
        prop_assert_eq!(g.n_unique, d.len());
    }
}

fn desk_model() -> &'static (Vae, Encoded) {
    static M: OnceLock<(Vae, Encoded)> = OnceLock::new();
    M.get_or_init(|| {
        let e = encode_design::<f64>(&two_level_factorial(4).unwrap()).unwrap();
        let (m, _) = vae::train(&e, &TrainingConfig::default()).unwrap();
        (m, e)
    })
}

#[test]
fn desk_scale_grids() {
    let (model, _) = desk_model();
    let sq = generate(model, &GridSpec::square(3, 3), &[], true).unwrap();
    // exact duplicates are merged, so nine points may give fewer trials
    assert_eq!(sq.design.len() + sq.collapsed.len(), 9);
    let levels_seen = |d: &Design, f: usize| {
        let mut v: Vec<String> = d.trials().iter().map(|t| t[f].to_string()).collect();
        v.sort();
        v.dedup();
        v.len()
    };
    for f in 0..4 {
        assert_eq!(levels_seen(&sq.design, f), 2);
        assert!(sq.design.trials().iter().all(|t| matches!(t[f], Level::Number(v) if v == -1.0 || v == 1.0)));
    }
    assert_eq!(sq.locations.len(), sq.design.len());
    assert!(sq.diagnostics.density_uniformity.is_some());
    let polar = generate(model, &GridSpec::polar(2, 3), &[], true).unwrap();
    assert_eq!(polar.design.len() + polar.collapsed.len(), 7);
    assert_eq!(polar.design.provenance(), Provenance::GeneratedGrid);
}

#[test]
fn generating_at_embeddings_matches_the_round_trip() {
    let (model, e) = desk_model();
    let emb = model.embed(e).unwrap();
    let g = generate_at(model, &emb.uniformed, LatentSpace::Uniformed, &[], true, Provenance::GeneratedGrid).unwrap();
    let decoded = model.decode_trials(&emb.uniformed, LatentSpace::Uniformed, true).unwrap();
    let mut kept: Vec<Vec<Level>> = Vec::new();
    for t in &decoded {
        if !kept.contains(t) {
            kept.push(t.clone());
        }
    }
    assert_eq!(g.design.trials(), kept.as_slice());
    assert_eq!(g.collapsed.len(), decoded.len() - kept.len());
    for c in &g.collapsed {
        assert_eq!(&decoded[c.point_index], g.design.trial(c.kept_trial_id).unwrap());
    }
    assert!(generate_at(model, &emb.uniformed, LatentSpace::Uniformed, &[], true, Provenance::InitialFull).is_err());
    assert!(generate_at::<f64>(model, &[], LatentSpace::Uniformed, &[], true, Provenance::GeneratedGrid).is_err());
}
