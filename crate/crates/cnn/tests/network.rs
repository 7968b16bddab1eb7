use m2dl_cnn::checkpoint::{read_checkpoint, write_checkpoint};
use m2dl_cnn::{
    backward, conv_forward, extract_features, forward, maxpool_forward, sgd_step, train, train_epoch, Activation,
    Error, LayerSpec, NetworkSpec, NetworkState, Shape, TrainOpts,
};
use m2dl_core::{Matrix, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor4 {
    let len = shape.iter().product();
    Tensor4::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn conv_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let x = random_tensor(&mut rng, [2, 3, 6, 5]);
        let w = random_tensor(&mut rng, [4, 3, 3, 2]);
        let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for act in Activation::ALL {
            let out = conv_forward(&x, &w, &b, act).unwrap();
            assert_eq!(out.shape(), [2, 4, 4, 4]);
            for n in 0..2 {
                for k in 0..4 {
                    for i in 0..4 {
                        for j in 0..4 {
                            let mut s = b[k];
                            for c in 0..3 {
                                for p in 0..3 {
                                    for q in 0..2 {
                                        s += x.get(n, c, i + p, j + q) * w.get(k, c, p, q);
                                    }
                                }
                            }
                            assert!((out.get(n, k, i, j) - act.apply(s)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn conv_trivial_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(&mut rng, [1, 1, 4, 4]);
    let w = random_tensor(&mut rng, [1, 1, 2, 2]);
    let b = [0.3];
    let out = conv_forward(&x, &w, &b, Activation::ReLU).unwrap();
    assert_eq!(out.shape(), [1, 1, 3, 3]);

    let zero = conv_forward(&x, &Tensor4::zeros(2, 1, 3, 3), &[0.0, 0.0], Activation::ReLU).unwrap();
    assert!(zero.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn maxpool_matches_window_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, [3, 2, 6, 8]);
    let (out, argmax) = maxpool_forward(&x).unwrap();
    assert_eq!(out.shape(), [3, 2, 3, 4]);
    for n in 0..3 {
        for c in 0..2 {
            for i in 0..3 {
                for j in 0..4 {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for (p, q) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let v = x.get(n, c, 2 * i + p, 2 * j + q);
                        if v > best {
                            best = v;
                            at = x.offset(n, c, 2 * i + p, 2 * j + q);
                        }
                    }
                    assert_eq!(out.get(n, c, i, j), best);
                    assert_eq!(argmax[out.offset(n, c, i, j)], at);
                }
            }
        }
    }
    let flat = Tensor4::from_vec([1, 1, 4, 4], vec![2.5; 16]).unwrap();
    assert!(maxpool_forward(&flat).unwrap().0.as_slice().iter().all(|&v| v == 2.5));
}

#[test]
fn default_spec_shapes() {
    let shapes = NetworkSpec::default().shapes().unwrap();
    let expect = [
        Shape::Spatial { c: 1, h: 64, w: 64 },
        Shape::Spatial { c: 32, h: 60, w: 60 },
        Shape::Spatial { c: 32, h: 30, w: 30 },
        Shape::Spatial { c: 32, h: 28, w: 28 },
        Shape::Spatial { c: 32, h: 14, w: 14 },
        Shape::Spatial { c: 24, h: 12, w: 12 },
        Shape::Spatial { c: 24, h: 6, w: 6 },
        Shape::Flat(512),
        Shape::Flat(2),
    ];
    assert_eq!(shapes, expect);
    // flattened input to the fully connected layer
    assert_eq!(shapes[6].len(), 864);
}

#[test]
fn zero_weights_predict_biases() {
    let spec = NetworkSpec::standard(32, 2, Activation::ReLU);
    let mut state = NetworkState::zeros(&spec).unwrap();
    state.layers.last_mut().unwrap().bias = vec![1.5, -7.0];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (pred, _) = forward(&spec, &state, &random_tensor(&mut rng, [3, 1, 32, 32])).unwrap();
    for i in 0..3 {
        assert_eq!(pred.row(i), &[1.5, -7.0]);
    }
}

#[test]
fn mismatched_input_is_reported() {
    let spec = NetworkSpec::standard(32, 2, Activation::ReLU);
    let state = NetworkState::init(&spec, 0).unwrap();
    let err = forward(&spec, &state, &Tensor4::zeros(1, 1, 30, 32)).unwrap_err();
    assert_eq!(
        err,
        Error::InputShape {
            expected: [1, 32, 32],
            got: [1, 30, 32]
        }
    );
}

#[test]
fn extract_features_properties() {
    let spec = NetworkSpec::default();
    let state = NetworkState::init(&spec, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_tensor(&mut rng, [4, 1, 64, 64]);
    let f = extract_features(&spec, &state, &x).unwrap();
    assert_eq!(f.shape(), (4, 512));
    assert_eq!(f, extract_features(&spec, &state, &x).unwrap());

    let perm = [2, 0, 3, 1];
    let fp = extract_features(&spec, &state, &x.select(&perm)).unwrap();
    assert_eq!(fp, f.select_rows(&perm));

    let no_fc = NetworkSpec {
        input: (1, 4, 4),
        layers: vec![LayerSpec::pool(), LayerSpec::output(1)],
    };
    let st = NetworkState::init(&no_fc, 0).unwrap();
    assert_eq!(extract_features(&no_fc, &st, &Tensor4::zeros(1, 1, 4, 4)).unwrap_err(), Error::NoFeatureLayer);
}

#[test]
fn relu_features_are_positively_homogeneous() {
    let spec = NetworkSpec::default();
    let state = NetworkState::init(&spec, 6).unwrap(); // biases start at zero
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_tensor(&mut rng, [2, 1, 64, 64]);
    let c = 3.5;
    let mut xc = x.clone();
    xc.as_mut_slice().iter_mut().for_each(|v| *v *= c);
    let f = extract_features(&spec, &state, &x).unwrap();
    let fc = extract_features(&spec, &state, &xc).unwrap();
    assert!(fc.sub(&f.scale(c)).unwrap().max_abs() < 1e-10 * fc.max_abs().max(1.0));
}

#[test]
fn sgd_step_edge_cases() {
    let spec = NetworkSpec::standard(24, 2, Activation::Tanh);
    let mut state = NetworkState::init(&spec, 7).unwrap();
    let before = state.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_tensor(&mut rng, [2, 1, 24, 24]);
    let y = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
    let (_, cache) = forward(&spec, &state, &x).unwrap();
    let mut grads = backward(&spec, &state, &cache, &y).unwrap();

    sgd_step(&mut state, &grads, 0.0).unwrap();
    assert_eq!(state, before);
    let zeros: Vec<_> = grads
        .iter()
        .map(|g| m2dl_cnn::LayerParams {
            weights: vec![0.0; g.weights.len()],
            bias: vec![0.0; g.bias.len()],
        })
        .collect();
    sgd_step(&mut state, &zeros, 0.1).unwrap();
    assert_eq!(state, before);

    grads[2].weights[0] = f64::NAN;
    assert_eq!(sgd_step(&mut state, &grads, 0.1).unwrap_err(), Error::NonFiniteGradient { layer: 2 });
    assert_eq!(state, before);
    assert!(sgd_step(&mut state, &grads, -1.0).is_err());
}

#[test]
fn sgd_converges_on_quadratic() {
    // ½(w·1 + b − 3)²: the minimizers are the line w + b = 3
    let spec = NetworkSpec {
        input: (1, 1, 1),
        layers: vec![LayerSpec::output(1)],
    };
    let mut state = NetworkState::zeros(&spec).unwrap();
    let x = Tensor4::from_vec([1, 1, 1, 1], vec![1.0]).unwrap();
    let y = Matrix::from_rows(&[[3.0]]);
    for _ in 0..200 {
        let (_, cache) = forward(&spec, &state, &x).unwrap();
        let g = backward(&spec, &state, &cache, &y).unwrap();
        sgd_step(&mut state, &g, 0.1).unwrap();
    }
    let sum = state.layers[0].weights[0] + state.layers[0].bias[0];
    assert!((sum - 3.0).abs() < 1e-6);
}

fn small_spec() -> NetworkSpec {
    NetworkSpec::with_widths((1, 24, 24), [4, 4, 4], 16, 2, Activation::ReLU)
}

/// Bright square whose position encodes the two targets.
fn blob_dataset(n: usize, seed: u64) -> (Tensor4, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Tensor4::zeros(n, 1, 24, 24);
    let mut y = Matrix::zeros(n, 2);
    for s in 0..n {
        let (cy, cx) = (rng.gen_range(4..20), rng.gen_range(4..20));
        y[(s, 0)] = (cx as f64 - 12.0) / 8.0;
        y[(s, 1)] = (cy as f64 - 12.0) / 8.0;
        for i in cy - 3..cy + 3 {
            for j in cx - 3..cx + 3 {
                x.set(s, 0, i, j, 1.0);
            }
        }
    }
    (x, y)
}

#[test]
fn zero_targets_with_zero_output_layer_is_a_no_op() {
    let spec = small_spec();
    let mut state = NetworkState::init(&spec, 8).unwrap();
    let last = state.layers.last_mut().unwrap();
    last.weights.fill(0.0);
    let before = state.clone();
    let (x, _) = blob_dataset(10, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let l = train_epoch(&spec, &mut state, &x, &Matrix::zeros(10, 2), 0.05, 4, &mut rng).unwrap();
    assert_eq!(l, 0.0);
    assert_eq!(state, before);
}

#[test]
fn single_sample_is_memorized() {
    let spec = small_spec();
    let mut state = NetworkState::init(&spec, 9).unwrap();
    let (x, y) = blob_dataset(1, 9);
    let opts = TrainOpts {
        eta: 0.05,
        batch_size: 1,
        epochs: 300,
        seed: 9,
    };
    let losses = train(&spec, &mut state, &x, &y, &opts).unwrap();
    let (pred, _) = forward(&spec, &state, &x).unwrap();
    assert!(m2dl_cnn::loss(&pred, &y) < 1e-3, "{:?}", losses.last());
}

#[test]
fn epoch_losses_mostly_decrease() {
    let spec = small_spec();
    let mut state = NetworkState::init(&spec, 10).unwrap();
    let (x, y) = blob_dataset(200, 10);
    let opts = TrainOpts {
        epochs: 11,
        seed: 10,
        ..TrainOpts::default()
    };
    let losses = train(&spec, &mut state, &x, &y, &opts).unwrap();
    let down = losses.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(down >= 8, "{losses:?}");
    assert!(state.is_finite());
}

#[test]
fn training_is_deterministic() {
    let spec = small_spec();
    let (x, y) = blob_dataset(40, 11);
    let opts = TrainOpts {
        epochs: 2,
        seed: 11,
        ..TrainOpts::default()
    };
    let run = || {
        let mut s = NetworkState::init(&spec, 11).unwrap();
        let l = train(&spec, &mut s, &x, &y, &opts).unwrap();
        (s, l)
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    for a in Activation::ALL {
        let spec = small_spec().with_activation(a);
        let mut state = NetworkState::init(&spec, 12).unwrap();
        state.eta = 0.0123;
        state.layers[0].bias[1] = 1.0 / 3.0;
        let mut buf = Vec::new();
        write_checkpoint(&spec, &state, &mut buf).unwrap();
        let (spec2, state2) = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(spec2, spec);
        assert_eq!(state2, state);
    }
    let bad = "m2dl-cnn-checkpoint,1\ninput,1,2,2\neta,0.1\nlayer,output,1\nparams,0,4,1\n1,2,3\n0\nend\n";
    assert!(matches!(read_checkpoint(bad.as_bytes()).unwrap_err(), Error::Parse { line: 6, .. }));
}
