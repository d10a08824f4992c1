use facewarp_tensor::{spectral_normalize, Adam, Graph, ParamStore, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn conv_identity_kernel_is_identity() {
    let mut r = rng(1);
    let x = Tensor::<f64>::randn(&[2, 3, 5, 4], 1.0, &mut r);
    let w = Tensor::from_fn(&[3, 3, 1, 1], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
    let mut g = Graph::new();
    let (xv, wv) = (g.constant(x.clone()), g.constant(w));
    let y = g.conv2d(xv, wv, None, 1, 0).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn conv_all_ones_center_is_nine() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
    let w = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
    let b = g.constant(Tensor::zeros(&[1]));
    let y = g.conv2d(x, w, Some(b), 1, 1).unwrap();
    assert_eq!(g.value(y).data()[4], 9.0);
    assert_eq!(g.value(y).data()[0], 4.0);
}

#[test]
fn conv_bias_length_is_checked() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(&[1, 1, 3, 3]));
    let w = g.constant(Tensor::zeros(&[2, 1, 3, 3]));
    let b = g.constant(Tensor::zeros(&[3]));
    assert!(g.conv2d(x, w, Some(b), 1, 1).is_err());
}

#[test]
fn strided_conv_output_size_floors() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 64, 64]));
    let w = g.constant(Tensor::zeros(&[4, 2, 3, 3]));
    let y = g.conv2d(x, w, None, 2, 1).unwrap();
    assert_eq!(g.shape(y), &[1, 4, 32, 32]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn conv_is_linear(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let x = Tensor::<f64>::randn(&[2, 3, 6, 5], 1.0, &mut r);
        let y = Tensor::<f64>::randn(&[2, 3, 6, 5], 1.0, &mut r);
        let w = Tensor::<f64>::randn(&[4, 3, 3, 3], 1.0, &mut r);
        let mix = Tensor::from_vec(x.shape().to_vec(), x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let mut g = Graph::new();
        let wv = g.constant(w);
        let (xv, yv, mv) = (g.constant(x), g.constant(y), g.constant(mix));
        let cx = g.conv2d(xv, wv, None, 1, 1).unwrap();
        let cy = g.conv2d(yv, wv, None, 1, 1).unwrap();
        let cm = g.conv2d(mv, wv, None, 1, 1).unwrap();
        for ((m, p), q) in g.value(cm).data().iter().zip(g.value(cx).data()).zip(g.value(cy).data()) {
            let expect = a * p + b * q;
            prop_assert!((m - expect).abs() <= 1e-5 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn zero_displacement_warp_is_bit_exact(seed in 0u64..10_000, h in 1usize..9, w in 1usize..9) {
        let mut r = rng(seed);
        let x = Tensor::<f32>::randn(&[2, 3, h, w], 1.0, &mut r);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let d = g.constant(Tensor::zeros(&[2, 2, h, w]));
        let y = g.grid_warp(xv, d).unwrap();
        prop_assert_eq!(g.value(y), &x);
    }
}

#[test]
fn integral_shift_takes_right_neighbour() {
    let (h, w) = (3, 6);
    let x = Tensor::<f64>::from_fn(&[1, 1, h, w], |i| (i % w) as f64);
    let disp = Tensor::from_fn(&[1, 2, h, w], |i| if i < h * w { 1.0 } else { 0.0 });
    let mut g = Graph::new();
    let (xv, dv) = (g.constant(x), g.constant(disp));
    let y = g.grid_warp(xv, dv).unwrap();
    for (i, &v) in g.value(y).data().iter().enumerate() {
        let col = i % w;
        assert_eq!(v, (col + 1).min(w - 1) as f64);
    }
}

#[test]
fn warp_shape_mismatch_is_rejected() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(&[1, 3, 4, 4]));
    let d = g.constant(Tensor::zeros(&[1, 2, 4, 5]));
    assert!(g.grid_warp(x, d).is_err());
}

/// Scalar align-corners-false bilinear sample of a single plane.
fn bilinear_oracle(src: &[f64], h: usize, w: usize, oh: usize, ow: usize, oy: usize, ox: usize) -> f64 {
    let sy = ((oy as f64 + 0.5) * h as f64 / oh as f64 - 0.5).max(0.0);
    let sx = ((ox as f64 + 0.5) * w as f64 / ow as f64 - 0.5).max(0.0);
    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ly, lx) = (sy - y0 as f64, sx - x0 as f64);
    let at = |y: usize, x: usize| src[y * w + x];
    (1.0 - ly) * ((1.0 - lx) * at(y0, x0) + lx * at(y0, x1)) + ly * ((1.0 - lx) * at(y1, x0) + lx * at(y1, x1))
}

#[test]
fn resize_checkerboard_matches_scalar_oracle() {
    let board = vec![0.0, 1.0, 1.0, 0.0];
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::from_vec(vec![1, 1, 2, 2], board.clone()).unwrap());
    let y = g.resize_bilinear(x, 4, 4).unwrap();
    for oy in 0..4 {
        for ox in 0..4 {
            let v = g.value(y).data()[oy * 4 + ox];
            assert!((v - bilinear_oracle(&board, 2, 2, 4, 4, oy, ox)).abs() < 1e-15);
        }
    }
    // Cross-checked against torch.nn.functional.interpolate(align_corners=False).
    let frozen = [0.0, 0.25, 0.75, 1.0, 0.25, 0.375, 0.625, 0.75];
    assert_eq!(&g.value(y).data()[..8], &frozen);
}

#[test]
fn resize_identity_and_constant() {
    let mut r = rng(5);
    let x = Tensor::<f64>::randn(&[2, 2, 5, 7], 1.0, &mut r);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let same = g.resize_bilinear(xv, 5, 7).unwrap();
    assert_eq!(g.value(same), &x);
    let c = g.constant(Tensor::full(&[1, 3, 4, 4], 0.3));
    for &(h, w) in &[(1, 1), (3, 7), (16, 9)] {
        let y = g.resize_bilinear(c, h, w).unwrap();
        assert!(g.value(y).data().iter().all(|v| (v - 0.3).abs() < 1e-15));
    }
}

#[test]
fn random_resize_matches_scalar_oracle() {
    let mut r = rng(6);
    let x = Tensor::<f64>::randn(&[1, 1, 5, 3], 1.0, &mut r);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let y = g.resize_bilinear(xv, 7, 8).unwrap();
    for oy in 0..7 {
        for ox in 0..8 {
            let expect = bilinear_oracle(x.data(), 5, 3, 7, 8, oy, ox);
            assert!((g.value(y).data()[oy * 8 + ox] - expect).abs() < 1e-14);
        }
    }
}

#[test]
fn channel_norm_statistics() {
    let mut r = rng(9);
    let x = Tensor::<f64>::randn(&[3, 4, 6, 5], 2.5, &mut r).map(|v| v + 1.7);
    let mut g = Graph::new();
    let xv = g.constant(x);
    let y = g.channel_norm(xv).unwrap();
    let v = g.value(y);
    for c in 0..4 {
        let vals: Vec<f64> = (0..3).flat_map(|n| v.data()[(n * 4 + c) * 30..(n * 4 + c + 1) * 30].to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-5, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-4, "var {var}");
    }
}

/// Independent scalar ADAM used to freeze the expected trajectory below.
fn scalar_adam(x0: f64, lr: f64, steps: usize) -> Vec<f64> {
    let (b1, b2, eps) = (0.5f64, 0.999f64, 1e-8);
    let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
    (1..=steps)
        .map(|t| {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + eps);
            x
        })
        .collect()
}

#[test]
fn adam_on_parabola_matches_reference() {
    let reference = scalar_adam(1.0, 0.1, 10);
    assert!((reference[9] - 0.2082441097738899).abs() < 1e-12);
    let mut r = rng(0);
    let mut store = ParamStore::<f64>::new();
    let id = store.add("x", Tensor::scalar(1.0), false, &mut r);
    let mut adam = Adam::new(0.1);
    let mut prev = 1.0f64;
    for expect in reference {
        let mut g = Graph::new();
        let bound = store.bind(&mut g, true).unwrap();
        let x = bound.get(id);
        let sq = g.mul(x, x).unwrap();
        g.backward(sq).unwrap();
        let grads = store.grads(&g, &bound);
        adam.step(&mut store, &grads);
        let now = store.get(id).value.data()[0];
        assert!(now.abs() < prev.abs());
        assert!((now - expect).abs() < 1e-12);
        prev = now;
    }
}

#[test]
fn spectral_norm_of_scaled_identity_converges() {
    let mut r = rng(2);
    let mut store = ParamStore::<f64>::new();
    let id = store.add("w", Tensor::from_fn(&[5, 5], |i| if i % 6 == 0 { 3.0 } else { 0.0 }), true, &mut r);
    let mut out = Tensor::zeros(&[5, 5]);
    for _ in 0..20 {
        out = spectral_normalize(store.get_mut(id)).unwrap();
    }
    for (i, v) in out.data().iter().enumerate() {
        let expect = if i % 6 == 0 { 1.0 } else { 0.0 };
        assert!((v - expect).abs() < 1e-9);
    }
}

#[test]
fn spectral_norm_estimate_matches_svd() {
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let w = Tensor::<f64>::randn(&[8, 8], 1.0, &mut r);
        let sigma_true = nalgebra::DMatrix::from_row_slice(8, 8, w.data()).singular_values().max();
        let mut store = ParamStore::new();
        let id = store.add("w", w, true, &mut r);
        for _ in 0..20 {
            spectral_normalize(store.get_mut(id)).unwrap();
        }
        let est = store.get(id).sigma_estimate().unwrap();
        assert!((est - sigma_true).abs() / sigma_true < 0.05, "seed {seed}: {est} vs {sigma_true}");
    }
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut r = rng(77);
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::randn(&[2, 3, 8, 8], 1.0, &mut r), true);
        let w = g.leaf(Tensor::randn(&[4, 3, 3, 3], 0.3, &mut r), true);
        let d = g.leaf(Tensor::randn(&[2, 2, 8, 8], 0.8, &mut r), true);
        let y = g.conv2d(x, w, None, 1, 1).unwrap();
        let y = g.leaky_relu(y, 0.2).unwrap();
        let y = g.grid_warp(y, d).unwrap();
        let l = g.mean_abs(y).unwrap();
        g.backward(l).unwrap();
        (g.grad(x).unwrap().clone(), g.grad(w).unwrap().clone(), g.grad(d).unwrap().clone())
    };
    assert_eq!(run(), run());
}
