use m2dl_cnn::{backward, forward, loss, Activation, LayerSpec, NetworkSpec, NetworkState};
use m2dl_core::{Matrix, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor4 {
    let len = shape.iter().product();
    Tensor4::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn param(s: &mut NetworkState, layer: usize, which: usize, k: usize) -> &mut f64 {
    if which == 0 {
        &mut s.layers[layer].weights[k]
    } else {
        &mut s.layers[layer].bias[k]
    }
}

/// Checks every weight and bias against central differences; returns the worst error.
fn check_all(spec: &NetworkSpec, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = NetworkState::init(spec, seed).unwrap();
    // nonzero biases so no unit sits exactly at a kink
    for l in &mut state.layers {
        l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
    }
    let (c, h, w) = spec.input;
    let x = random_tensor(&mut rng, [3, c, h, w]);
    let y = Matrix::from_fn(3, spec.output_dim(), |_, _| rng.gen_range(-1.0..1.0));
    let (_, cache) = forward(spec, &state, &x).unwrap();
    let grads = backward(spec, &state, &cache, &y).unwrap();

    let eval = |s: &NetworkState| loss(&forward(spec, s, &x).unwrap().0, &y);
    let mut worst: f64 = 0.0;
    for li in 0..state.layers.len() {
        for which in 0..2 {
            let len = if which == 0 { state.layers[li].weights.len() } else { state.layers[li].bias.len() };
            for k in 0..len {
                let mut s = state.clone();
                let orig = *param(&mut s, li, which, k);
                *param(&mut s, li, which, k) = orig + H;
                let plus = eval(&s);
                *param(&mut s, li, which, k) = orig - H;
                let minus = eval(&s);
                let numeric = (plus - minus) / (2.0 * H);
                let analytic = if which == 0 { grads[li].weights[k] } else { grads[li].bias[k] };
                let e = rel_err(analytic, numeric);
                assert!(e < 1e-4, "layer {li} {} {k}: {analytic} vs {numeric}", ["w", "b"][which]);
                worst = worst.max(e);
            }
        }
    }
    worst
}

fn small_spec(activation: Activation) -> NetworkSpec {
    NetworkSpec {
        input: (2, 10, 10),
        layers: vec![
            LayerSpec::conv(3, 3, activation),
            LayerSpec::pool(),
            LayerSpec::conv(2, 3, activation),
            LayerSpec::pool(),
            LayerSpec::fc(5, activation),
            LayerSpec::output(2),
        ],
    }
}

#[test]
fn every_layer_and_activation_matches_finite_differences() {
    for (i, a) in Activation::ALL.into_iter().enumerate() {
        let worst = check_all(&small_spec(a), 100 + i as u64);
        assert!(worst < 1e-4, "{a}: {worst}");
    }
}

#[test]
fn rectangular_kernels_and_stacked_dense_layers() {
    for a in Activation::ALL {
        let spec = NetworkSpec {
            input: (1, 6, 7),
            layers: vec![
                LayerSpec {
                    kind: m2dl_cnn::LayerKind::Conv {
                        out_channels: 2,
                        kernel_h: 3,
                        kernel_w: 2,
                    },
                    activation: a,
                },
                LayerSpec::pool(),
                LayerSpec::fc(4, a),
                LayerSpec::fc(3, a),
                LayerSpec::output(3),
            ],
        };
        check_all(&spec, 7);
    }
}

#[test]
fn output_only_network_is_linear_regression() {
    let spec = NetworkSpec {
        input: (1, 1, 3),
        layers: vec![LayerSpec::output(1)],
    };
    let mut state = NetworkState::zeros(&spec).unwrap();
    state.layers[0].weights = vec![0.5, -1.0, 2.0];
    state.layers[0].bias = vec![0.25];
    let x = Tensor4::from_vec([1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
    let y = Matrix::from_rows(&[[4.0]]);
    let (pred, cache) = forward(&spec, &state, &x).unwrap();
    let yhat = 0.5 - 2.0 + 6.0 + 0.25;
    assert_eq!(pred[(0, 0)], yhat);
    let g = backward(&spec, &state, &cache, &y).unwrap();
    // ∂/∂W ½(y − ŷ)² = −(y − ŷ)·xᵀ
    let r = 4.0 - yhat;
    assert_eq!(g[0].weights, vec![-r, -r * 2.0, -r * 3.0]);
    assert_eq!(g[0].bias, vec![-r]);
}

#[test]
fn exact_predictions_give_zero_gradients() {
    let spec = small_spec(Activation::Tanh);
    let state = NetworkState::init(&spec, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, [4, 2, 10, 10]);
    let (pred, cache) = forward(&spec, &state, &x).unwrap();
    let g = backward(&spec, &state, &cache, &pred).unwrap();
    assert!(g.iter().all(|l| l.weights.iter().chain(&l.bias).all(|&v| v == 0.0)));
}
