use approx::assert_abs_diff_eq;
use gdoe_core::design::encode_design;
use gdoe_core::stats::{normal_cdf, normal_quantile};
use gdoe_core::synthetic::{cnn_constraints, cnn_factors, two_level_factorial};
use gdoe_core::vae::*;
use gdoe_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

// Largest relative gap between test and train loss seen on the 2^4 design
// with default settings, widened slightly for seed spread.
const CONVERGENCE_GAP: f64 = 0.15;

#[test]
fn kl_closed_form_examples() {
    assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    assert_abs_diff_eq!(kl_divergence(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5, epsilon = 1e-12);
    let l4 = 4f64.ln();
    assert_abs_diff_eq!(kl_divergence(&[0.0, 0.0], &[l4, l4]).unwrap(), 3.0 - l4, epsilon = 1e-12);
    assert!(kl_divergence(&[0.0], &[0.0, 1.0]).is_err());
    assert!(kl_divergence(&[f64::NAN], &[0.0]).is_err());
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let mu: [f64; 2] = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let lv: [f64; 2] = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            // log q(z) - log p(z) with z = mu + sigma * e
            let mut r = 0.0;
            for k in 0..2 {
                let e: f64 = StandardNormal.sample(&mut rng);
                let z = mu[k] + (0.5 * lv[k]).exp() * e;
                r += -0.5 * e * e - 0.5 * lv[k] + 0.5 * z * z;
            }
            acc += r;
        }
        let mc = acc / n as f64;
        let exact = kl_divergence(&mu, &lv).unwrap();
        assert!((mc - exact).abs() <= 0.02 * exact, "mu {mu:?} lv {lv:?}: {mc} vs {exact}");
    }
}

#[test]
fn uniformized_normal_samples_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut u: Vec<f64> = (0..10_000)
        .map(|_| normal_cdf(StandardNormal.sample(&mut rng)))
        .collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let ks = u
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS statistic {ks}");
}

#[test]
fn normal_cdf_and_quantile_match_a_reference() {
    let reference = Normal::new(0.0, 1.0).unwrap();
    for i in 1..1000 {
        let p = i as f64 / 1000.0;
        assert_abs_diff_eq!(normal_quantile(p), reference.inverse_cdf(p), epsilon = 1e-9);
    }
    for p in [1e-9, 1e-6, 1.0 - 1e-6] {
        assert_abs_diff_eq!(normal_quantile(p), reference.inverse_cdf(p), epsilon = 1e-8);
    }
    assert_abs_diff_eq!(normal_cdf(-2.0), 0.022_750_131_948_179_2, epsilon = 1e-16);
    for i in -80..=80 {
        let x = i as f64 / 10.0;
        assert_abs_diff_eq!(normal_cdf(x), reference.cdf(x), epsilon = 1e-10);
    }
    assert_eq!(uniformize([0.0, 0.0]), [0.5, 0.5]);
    let back = deuniformize(uniformize([0.3, -1.2]));
    assert_abs_diff_eq!(back[0], 0.3, epsilon = 1e-9);
    assert_abs_diff_eq!(back[1], -1.2, epsilon = 1e-9);
}

fn quick(seed: u64) -> TrainingConfig {
    TrainingConfig {
        seed,
        epochs: 3,
        hidden: vec![16, 8],
        train_dup: 4,
        test_dup: 2,
        batch_size: 32,
        ..Default::default()
    }
}

#[test]
fn history_length_and_determinism() {
    let e = encode_design::<f64>(&two_level_factorial(4).unwrap()).unwrap();
    let (a, ha) = train(&e, &quick(4)).unwrap();
    let (b, hb) = train(&e, &quick(4)).unwrap();
    assert_eq!(ha.len(), 3);
    assert_eq!(ha, hb);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let (c, _) = train(&e, &quick(5)).unwrap();
    assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    let back = Vae::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
    let mut seen = 0;
    train_with(&e, &quick(4), |r| {
        assert_eq!(r.epoch, seen);
        seen += 1;
    })
    .unwrap();
    assert_eq!(seen, 3);
}

#[test]
fn beta_zero_contributes_no_kl() {
    let e = encode_design::<f64>(&two_level_factorial(4).unwrap()).unwrap();
    let cfg = TrainingConfig { beta: 0.0, ..quick(1) };
    let (model, hist) = train(&e, &cfg).unwrap();
    let (loss, bce, kl) = model.evaluate(&e.rows).unwrap();
    assert!(kl > 0.0);
    assert_eq!(loss, e.width() as f64 * bce);
    let last = hist.last().unwrap();
    assert_eq!(last.test_loss, e.width() as f64 * last.test_bce);
}

#[test]
fn training_preconditions() {
    let e = encode_design::<f64>(&two_level_factorial(4).unwrap()).unwrap();
    for bad in [
        TrainingConfig { beta: -1.0, ..quick(0) },
        TrainingConfig { batch_size: 0, ..quick(0) },
        TrainingConfig { epochs: 0, ..quick(0) },
        TrainingConfig { learning_rate: 0.0, ..quick(0) },
    ] {
        assert!(train(&e, &bad).is_err());
    }
    let one = encode_design::<f64>(&two_level_factorial(1).unwrap()).unwrap();
    assert!(train(&one, &quick(0)).is_err());
    let diverge = TrainingConfig { learning_rate: 1e12, ..quick(0) };
    if let Err(err) = train(&e, &diverge) {
        assert!(matches!(err, Error::Diverged { .. }), "{err:?}");
    }
}

fn untrained_cnn() -> (Vae, Encoded) {
    let f = cnn_factors();
    let d = filter_by_constraints(&build_full_factorial(&f).unwrap(), &cnn_constraints(&f).unwrap()).unwrap();
    let e = encode_design::<f64>(&d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = TrainingConfig { hidden: vec![16, 8], ..Default::default() };
    (VaeModel::new(e.column_map.clone(), cfg, &mut rng).unwrap(), e)
}

#[test]
fn embedding_and_decoding_shapes() {
    let (model, e) = untrained_cnn();
    let emb = model.embed(&e).unwrap();
    assert_eq!(emb.len(), 1920);
    assert_eq!(emb.trial_ids, e.trial_ids);
    for (m, u) in emb.mu.iter().zip(&emb.uniformed) {
        assert_eq!(*u, uniformize(*m));
    }
    let twice = model.embed(&e).unwrap();
    assert_eq!(emb, twice);

    let one = model.decode_latent(&[[0.6, 0.8]], LatentSpace::Uniformed, true).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one.provenance(), Provenance::GeneratedGrid);
    let centre = model.decode_trials(&[[0.5, 0.5]], LatentSpace::Uniformed, false).unwrap();
    let origin = model.decode_trials(&[[0.0, 0.0]], LatentSpace::Original, false).unwrap();
    assert_eq!(centre, origin);
    let lattice = gdoe_core::geometry::lattice_points::<f64>(gdoe_core::geometry::Resolution::square(100));
    assert_eq!(model.decode_trials(&lattice, LatentSpace::Uniformed, true).unwrap().len(), 10_000);

    assert!(model.decode_trials(&[[1.0, 0.5]], LatentSpace::Uniformed, true).is_err());
    assert!(model.decode_trials(&[[0.5, -0.1]], LatentSpace::Uniformed, true).is_err());
    assert!(model.decode_trials(&[[f64::INFINITY, 0.0]], LatentSpace::Original, true).is_err());
    let narrow = encode_design::<f64>(&two_level_factorial(4).unwrap()).unwrap();
    assert!(model.embed(&narrow).is_err());
}

#[test]
fn desk_scale_convergence_envelope() {
    let d = two_level_factorial(4).unwrap();
    let e = encode_design::<f64>(&d).unwrap();
    let mut within = 0;
    for seed in 0..5 {
        let (model, hist) = train(&e, &TrainingConfig { seed, ..Default::default() }).unwrap();
        let last = hist.last().unwrap();
        assert!(last.test_bce < 0.35, "seed {seed}: test bce {}", last.test_bce);
        let gap = (last.test_loss - last.train_loss).abs() / last.train_loss;
        if gap <= CONVERGENCE_GAP {
            within += 1;
        }
        let emb = model.embed(&e).unwrap();
        for k in 0..2 {
            let mean = emb.mu.iter().map(|m| m[k]).sum::<f64>() / emb.len() as f64;
            assert!(mean.abs() < 0.5, "seed {seed}: mean mu[{k}] = {mean}");
        }
    }
    assert!(within >= 4, "{within}/5 seeds within the convergence gap");
}
