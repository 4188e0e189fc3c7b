use approx::assert_abs_diff_eq;
use gdoe_core::nn::*;
use gdoe_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn single(w: f64, b: f64, act: Activation) -> Net {
    DenseNet::from_layers(vec![Dense {
        weights: Matrix::from_vec(1, 1, vec![w]).unwrap(),
        bias: vec![b],
        activation: act,
        regularization: Regularization::default(),
    }])
    .unwrap()
}

fn col(v: &[f64]) -> Matrix<f64> {
    Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
}

#[test]
fn forward_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net: Net = DenseNet::build(3, &[LayerSpec::new(4, Activation::Sigmoid)], Init::FanIn, &mut rng).unwrap();
    for l in net.layers_mut() {
        l.weights.as_mut_slice().fill(0.0);
        l.bias.fill(0.0);
    }
    let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.1, 0.2, 0.3]]).unwrap();
    assert!(net.predict(&x).unwrap().as_slice().iter().all(|&v| v == 0.5));

    let id: Net = DenseNet::from_layers(vec![Dense {
        weights: Matrix::identity(3),
        bias: vec![0.0; 3],
        activation: Activation::Linear,
        regularization: Regularization::default(),
    }])
    .unwrap();
    assert_eq!(id.predict(&x).unwrap(), x);

    assert_eq!(single(2.0, 1.0, Activation::Relu).predict(&col(&[-3.0])).unwrap().as_slice(), &[0.0]);
    assert!(net.predict(&col(&[1.0])).is_err());
}

#[test]
fn backward_examples() {
    let net = single(0.7, -0.2, Activation::Linear);
    let (_, cache) = net.forward(&col(&[3.0])).unwrap();
    let g = net.backward(&cache, &col(&[1.0])).unwrap();
    assert_abs_diff_eq!(g.layers[0].weights.as_slice()[0], 3.0);
    assert_abs_diff_eq!(g.layers[0].bias[0], 1.0);
    assert_abs_diff_eq!(g.input.as_slice()[0], 0.7);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let specs = [LayerSpec::new(8, Activation::Tanh), LayerSpec::new(2, Activation::Sigmoid)];
    let net: Net = DenseNet::build(4, &specs, Init::FanIn, &mut rng).unwrap();
    let x = Matrix::from_rows(&[[0.1, 0.2, 0.3, 0.4]]).unwrap();
    let (_, cache) = net.forward(&x).unwrap();
    let g = net.backward(&cache, &Matrix::zeros(1, 2)).unwrap();
    for l in &g.layers {
        assert!(l.weights.as_slice().iter().chain(&l.bias).all(|&v| v == 0.0));
    }

    let other: Net = DenseNet::build(4, &[LayerSpec::new(6, Activation::Tanh), LayerSpec::new(2, Activation::Sigmoid)], Init::FanIn, &mut rng).unwrap();
    assert!(other.backward(&cache, &Matrix::zeros(1, 2)).is_err());
    assert!(net.backward(&cache, &Matrix::zeros(2, 2)).is_err());
}

#[test]
fn loss_examples() {
    let h = col(&[0.5]);
    let (bce, _) = binary_crossentropy(&h, &h).unwrap();
    assert_abs_diff_eq!(bce, std::f64::consts::LN_2, epsilon = 1e-12);
    let (m, g) = mse(&h, &h).unwrap();
    assert_eq!(m, 0.0);
    assert_eq!(g.as_slice(), &[0.0]);
    assert_eq!(mse(&col(&[1.0]), &col(&[0.0])).unwrap().0, 1.0);
    assert!(mse(&col(&[1.0]), &col(&[0.0, 1.0])).is_err());
    // clamped predictions stay finite
    let (v, _) = binary_crossentropy(&col(&[0.0, 1.0]), &col(&[1.0, 0.0])).unwrap();
    assert_abs_diff_eq!(v, -(1e-7f64).ln(), epsilon = 1e-6);
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..0.95)).collect();
    let t: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
    let (pm, tm) = (Matrix::from_vec(2, 3, p.clone()).unwrap(), Matrix::from_vec(2, 3, t).unwrap());
    for f in [binary_crossentropy::<f64>, mse::<f64>] {
        let (_, g) = f(&pm, &tm).unwrap();
        for i in 0..6 {
            let mut up = pm.clone();
            let mut dn = pm.clone();
            up.as_mut_slice()[i] += 1e-6;
            dn.as_mut_slice()[i] -= 1e-6;
            let fd = (f(&up, &tm).unwrap().0 - f(&dn, &tm).unwrap().0) / 2e-6;
            assert_abs_diff_eq!(g.as_slice()[i], fd, epsilon = 1e-7);
        }
    }
}

fn slot(v: &mut [f64], g: &[f64]) -> f64 {
    let mut state = AdamState::<f64>::default();
    let before = v[0];
    let mut slots = [ParamSlot { owner: "p", layer: 0, is_bias: false, values: v, grads: g }];
    state.step(&mut slots).unwrap();
    before - v[0]
}

#[test]
fn adam_examples() {
    let mut v = [0.3];
    assert_eq!(slot(&mut v, &[0.0]), 0.0);
    assert_eq!(v[0], 0.3);

    let mut v = [0.0];
    assert_abs_diff_eq!(slot(&mut v, &[1.0]), 0.001 / (1.0 + 1e-8), epsilon = 1e-15);

    let mut state = AdamState::<f64>::new(0.001);
    let mut p = [0.0];
    for expected_step in 1..=2u64 {
        let before = p[0];
        let mut slots = [ParamSlot { owner: "p", layer: 0, is_bias: false, values: &mut p, grads: &[1.0] }];
        adam_step(&mut slots, &mut state).unwrap();
        assert_eq!(state.step, expected_step);
        assert_abs_diff_eq!(before - p[0], 0.001, epsilon = 1e-10);
    }

    let mut p = [1.0, 2.0];
    let mut slots = [ParamSlot { owner: "decoder", layer: 2, is_bias: true, values: &mut p, grads: &[0.1, f64::NAN] }];
    match AdamState::<f64>::default().step(&mut slots) {
        Err(Error::NonFinite { parameter }) => assert_eq!(parameter, "decoder layer 2 bias"),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
    assert_eq!(p, [1.0, 2.0]);
}

fn random_reg(rng: &mut ChaCha8Rng) -> Regularization {
    let mut c = || if rng.random_bool(0.5) { rng.random_range(0.0..0.05) } else { 0.0 };
    Regularization {
        kernel_l1: c(),
        kernel_l2: c(),
        bias_l1: c(),
        bias_l2: c(),
        activity_l1: c(),
        activity_l2: c(),
    }
}

fn total_loss(net: &Net, x: &Matrix<f64>, y: &Matrix<f64>) -> f64 {
    let (out, cache) = net.forward(x).unwrap();
    mse(&out, y).unwrap().0 + net.regularization_loss(Some(&cache))
}

fn near_kink(net: &Net, x: &Matrix<f64>) -> bool {
    let (_, cache) = net.forward(x).unwrap();
    net.layers().iter().zip(&cache.pre).any(|(l, p)| {
        (l.activation == Activation::Relu || l.regularization.activity_l1 > 0.0)
            && p.as_slice().iter().any(|v| v.abs() < 1e-4)
    })
}

#[test]
fn gradients_match_finite_differences_on_random_nets() {
    let acts = [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::Linear];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 50 {
        let inputs = rng.random_range(1..=16);
        let depth = rng.random_range(1..=3);
        let specs: Vec<LayerSpec> = (0..depth)
            .map(|_| LayerSpec::new(rng.random_range(1..=16), acts[rng.random_range(0..4)]).regularized(random_reg(&mut rng)))
            .collect();
        let net: Net = DenseNet::build(inputs, &specs, Init::FanIn, &mut rng).unwrap();
        let batch = rng.random_range(1..=5);
        let normal = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(rng)).collect() };
        let x = Matrix::from_vec(batch, inputs, normal(&mut rng, batch * inputs)).unwrap();
        let y = Matrix::from_vec(batch, net.outputs(), normal(&mut rng, batch * net.outputs())).unwrap();
        if near_kink(&net, &x) {
            continue;
        }
        checked += 1;
        let (out, cache) = net.forward(&x).unwrap();
        let grads = net.backward(&cache, &mse(&out, &y).unwrap().1).unwrap();
        let h = 1e-5;
        for li in 0..net.layers().len() {
            let nw = net.layers()[li].weights.as_slice().len();
            let nb = net.layers()[li].bias.len();
            for k in 0..nw + nb {
                let probe = |delta: f64| {
                    let mut n = net.clone();
                    let l = &mut n.layers_mut()[li];
                    if k < nw {
                        l.weights.as_mut_slice()[k] += delta;
                    } else {
                        l.bias[k - nw] += delta;
                    }
                    total_loss(&n, &x, &y)
                };
                let layer = &net.layers()[li];
                let (value, l1) = if k < nw {
                    (layer.weights.as_slice()[k], layer.regularization.kernel_l1)
                } else {
                    (layer.bias[k - nw], layer.regularization.bias_l1)
                };
                if l1 > 0.0 && value.abs() < 1e-4 {
                    continue;
                }
                let fd = (probe(h) - probe(-h)) / (2.0 * h);
                let an = if k < nw {
                    grads.layers[li].weights.as_slice()[k]
                } else {
                    grads.layers[li].bias[k - nw]
                };
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

fn train(seed: u64, steps: usize) -> Net {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = [LayerSpec::new(6, Activation::Relu), LayerSpec::new(1, Activation::Linear)];
    let mut net: Net = DenseNet::build(2, &specs, Init::FanIn, &mut rng).unwrap();
    let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [1.0, 1.0]]).unwrap();
    let y = col(&[1.0, -1.0, 0.0, 0.5]);
    let mut state = AdamState::new(0.01);
    for _ in 0..steps {
        let (out, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &mse(&out, &y).unwrap().1).unwrap();
        state.step(&mut net.param_slots(&g, "net")).unwrap();
    }
    net
}

#[test]
fn training_is_deterministic_and_serializes() {
    let a = train(9, 200);
    let b = train(9, 200);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_ne!(a.to_json().unwrap(), train(10, 200).to_json().unwrap());
    let back = Net::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back.to_json().unwrap(), a.to_json().unwrap());
}

#[test]
fn regularized_loss_is_at_least_the_plain_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let reg = random_reg(&mut rng);
        let specs = [LayerSpec::new(5, Activation::Tanh).regularized(reg), LayerSpec::new(2, Activation::Sigmoid).regularized(reg)];
        let net: Net = DenseNet::build(3, &specs, Init::FanIn, &mut rng).unwrap();
        let x = Matrix::from_vec(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let y = Matrix::from_vec(4, 2, (0..8).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let (out, cache) = net.forward(&x).unwrap();
        let plain = binary_crossentropy(&out, &y).unwrap().0;
        assert!(plain + net.regularization_loss(Some(&cache)) >= plain);
    }
}

#[test]
fn invalid_networks_are_rejected() {
    let bad = Dense {
        weights: Matrix::from_vec(1, 1, vec![f64::NAN]).unwrap(),
        bias: vec![0.0],
        activation: Activation::Linear,
        regularization: Regularization::default(),
    };
    assert!(matches!(DenseNet::from_layers(vec![bad]), Err(Error::NonFinite { .. })));
    let a = single(1.0, 0.0, Activation::Linear).layers()[0].clone();
    let wide = Dense {
        weights: Matrix::zeros(2, 1),
        bias: vec![0.0],
        activation: Activation::Linear,
        regularization: Regularization::default(),
    };
    assert!(DenseNet::from_layers(vec![a, wide]).is_err());
    assert!(DenseNet::<f64>::from_layers(vec![]).is_err());
}

#[test]
fn single_precision_forward_matches_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net: Net = DenseNet::build(3, &[LayerSpec::new(4, Activation::Tanh), LayerSpec::new(2, Activation::Sigmoid)], Init::FanIn, &mut rng).unwrap();
    let small: DenseNet<f32> = DenseNet::from_layers(
        net.layers()
            .iter()
            .map(|l| Dense {
                weights: l.weights.cast(),
                bias: l.bias.iter().map(|&b| b as f32).collect(),
                activation: l.activation,
                regularization: l.regularization,
            })
            .collect(),
    )
    .unwrap();
    let x = Matrix::from_rows(&[[0.2, -0.4, 0.9]]).unwrap();
    let a = net.predict(&x).unwrap();
    let b = small.predict(&x.cast()).unwrap();
    for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
        assert_abs_diff_eq!(*p, *q as f64, epsilon = 1e-5);
    }
}
