//! Analytic gradients against central finite differences, layer by layer and end to end.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgfcn::net::ops::{self, Crop};
use sgfcn::net::{backward, build_sgf, forward, NetScale, ParamStore, Tensor, Variant};
use sgfcn::ScalarField;

const STEP: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

/// Checks every coordinate of `x` for the scalar `f`.
fn check_all(x: &Tensor, analytic: &Tensor, tol: f64, f: impl Fn(&Tensor) -> f64) {
    assert_eq!(x.shape(), analytic.shape());
    for i in 0..x.len() {
        let mut p = x.clone();
        p.data_mut()[i] += STEP;
        let mut m = x.clone();
        m.data_mut()[i] -= STEP;
        let num = (f(&p) - f(&m)) / (2.0 * STEP);
        let e = rel_err(analytic.data()[i], num);
        assert!(e < tol, "coordinate {i}: analytic {} numeric {num} rel {e}", analytic.data()[i]);
    }
}

#[test]
fn conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (c, o, h, w, k, s, p) in [(1, 1, 4, 4, 3, 1, 1), (2, 3, 5, 7, 3, 1, 1), (3, 2, 6, 6, 3, 2, 1), (2, 2, 5, 5, 2, 2, 0), (4, 1, 3, 8, 1, 1, 0)] {
        let x = random(&[c, h, w], &mut rng, 1.0);
        let wt = random(&[o, c, k, k], &mut rng, 1.0);
        let b = random(&[o], &mut rng, 1.0);
        let y0 = ops::conv_forward(&x, &wt, &b, s, p).unwrap();
        let cw = random(y0.shape(), &mut rng, 1.0);
        let g = ops::conv_backward(&x, &wt, &b, &cw, s, p, true).unwrap();
        let loss = |x: &Tensor, wt: &Tensor, b: &Tensor| ops::conv_forward(x, wt, b, s, p).unwrap().dot(&cw);
        check_all(&x, g.input.as_ref().unwrap(), 1e-4, |t| loss(t, &wt, &b));
        check_all(&wt, &g.weight, 1e-4, |t| loss(&x, t, &b));
        check_all(&b, &g.bias, 1e-4, |t| loss(&x, &wt, t));
    }
}

#[test]
fn deconv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for (c, o, h, w, s, crop) in [
        (1, 1, 2, 2, 2, Crop::uniform(1)),
        (2, 3, 3, 2, 4, Crop::uniform(2)),
        (3, 1, 2, 3, 8, Crop { top: 4, bottom: 5, left: 3, right: 4 }),
        (2, 2, 4, 4, 1, Crop::default()),
        (1, 2, 1, 1, 2, Crop { top: 0, bottom: 1, left: 1, right: 0 }),
    ] {
        let k = 2 * s;
        let x = random(&[c, h, w], &mut rng, 1.0);
        let wt = random(&[c, o, k, k], &mut rng, 1.0);
        let b = random(&[o], &mut rng, 1.0);
        let y0 = ops::deconv_forward(&x, &wt, Some(&b), s, crop).unwrap();
        let cw = random(y0.shape(), &mut rng, 1.0);
        let g = ops::deconv_backward(&x, &wt, &cw, s, crop).unwrap();
        let loss = |x: &Tensor, wt: &Tensor, b: &Tensor| ops::deconv_forward(x, wt, Some(b), s, crop).unwrap().dot(&cw);
        check_all(&x, &g.input, 1e-4, |t| loss(t, &wt, &b));
        check_all(&wt, &g.weight, 1e-4, |t| loss(&x, t, &b));
        check_all(&b, &g.bias, 1e-4, |t| loss(&x, &wt, t));
    }
}

#[test]
fn pool_relu_sigmoid_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for shape in [[1, 2, 2], [2, 4, 4], [3, 5, 7], [1, 1, 3], [2, 6, 5]] {
        // continuous random inputs: ties and kinks have probability zero
        let x = random(&shape, &mut rng, 1.0);

        let (y, arg) = ops::maxpool_forward(&x, 2, 2).unwrap();
        let cw = random(y.shape(), &mut rng, 1.0);
        let g = ops::maxpool_backward(&cw, &arg, x.shape()).unwrap();
        check_all(&x, &g, 1e-4, |t| ops::maxpool_forward(t, 2, 2).unwrap().0.dot(&cw));

        let cw = random(x.shape(), &mut rng, 1.0);
        let g = ops::relu_backward(&ops::relu_forward(&x), &cw);
        check_all(&x, &g, 1e-6, |t| ops::relu_forward(t).dot(&cw));

        let g = ops::sigmoid_backward(&ops::sigmoid_forward(&x), &cw);
        check_all(&x, &g, 1e-6, |t| ops::sigmoid_forward(t).dot(&cw));

        let b = random(x.shape(), &mut rng, 1.0);
        let (_, mask) = ops::eltwise_max_forward(&x, &b).unwrap();
        let (ga, gb) = ops::eltwise_max_backward(&cw, &mask);
        check_all(&x, &ga, 1e-6, |t| ops::eltwise_max_forward(t, &b).unwrap().0.dot(&cw));
        check_all(&b, &gb, 1e-6, |t| ops::eltwise_max_forward(&x, t).unwrap().0.dot(&cw));
    }
}

/// Small-width network with weights large enough that every layer carries signal.
fn lively_params(variant: Variant, seed: u64) -> (sgfcn::net::NetworkSpec, ParamStore) {
    let scale = NetScale { height: 16, width: 16, block_widths: [3, 4, 4, 5, 5], deconv_width: 3 };
    let spec = build_sgf(variant, scale).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamStore::init(&spec, &mut rng).unwrap();
    for q in p.iter_mut() {
        let scale = if q.name.starts_with("deconv") { 0.4 } else { 0.1 };
        if q.name.ends_with(".b") || q.name.starts_with("deconv") {
            for v in q.value.data_mut() {
                *v = rng.random_range(-scale..scale) + if q.name.ends_with(".b") { 0.05 } else { 0.0 };
            }
        }
    }
    (spec, p)
}

#[test]
fn whole_network_gradients() {
    for (vi, variant) in Variant::ALL.into_iter().enumerate() {
        let (spec, params) = lively_params(variant, 100 + vi as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(7 + vi as u64);
        let x = Tensor::from_vec(
            &[spec.input_channels, 16, 16],
            (0..spec.input_channels * 256).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let aux = (variant == Variant::Sgfe).then(|| ScalarField::from_fn(16, 16, |r, c| ((r * 3 + c * 5) % 17) as f64 / 17.0));
        let cw = ScalarField::from_fn(16, 16, |_, _| rng.random_range(-1.0..1.0));
        let run = |p: &ParamStore| forward(&spec, p, &x, aux.as_ref()).unwrap();
        let loss = |c: &sgfcn::net::ForwardCache| -> f64 {
            c.prediction().values().iter().zip(cw.values()).map(|(a, b)| a * b).sum()
        };
        let cache = run(&params);
        let grads = backward(&spec, &params, &cache, &cw).unwrap();
        assert!(grads.is_finite());

        // Finite differences are only meaningful where +-STEP stays on one linear piece, so
        // coordinates whose perturbation flips a ReLU, pooling winner or max route are redrawn.
        let sizes: Vec<usize> = params.iter().map(|p| p.value.len()).collect();
        let (mut worst, mut checked, mut nonzero, mut attempts) = (0.0f64, 0, 0, 0);
        while checked < 100 {
            attempts += 1;
            assert!(attempts < 2000, "{variant}: too many coordinates sit on a kink");
            let pi = rng.random_range(0..sizes.len());
            let ei = rng.random_range(0..sizes[pi]);
            let mut plus = params.clone();
            plus.iter_mut().nth(pi).unwrap().value.data_mut()[ei] += STEP;
            let mut minus = params.clone();
            minus.iter_mut().nth(pi).unwrap().value.data_mut()[ei] -= STEP;
            let (cp, cm) = (run(&plus), run(&minus));
            if !cp.same_branches(&cache) || !cm.same_branches(&cache) {
                continue;
            }
            let analytic = grads.tensors[pi].data()[ei];
            let num = (loss(&cp) - loss(&cm)) / (2.0 * STEP);
            if analytic.abs() > 1e-6 {
                nonzero += 1;
            }
            checked += 1;
            worst = worst.max(rel_err(analytic, num));
        }
        assert!(worst < 1e-3, "{variant}: worst relative error {worst}");
        assert!(nonzero > 30, "{variant}: only {nonzero} informative coordinates");
    }
}

proptest! {
    #[test]
    fn eltwise_max_dominates_and_partitions(
        a in proptest::collection::vec(-5.0f64..5.0, 1..40),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = a.len();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let ta = Tensor::from_vec(&[n], a.clone()).unwrap();
        let tb = Tensor::from_vec(&[n], b.clone()).unwrap();
        let (y, mask) = ops::eltwise_max_forward(&ta, &tb).unwrap();
        let (ga, gb) = ops::eltwise_max_backward(&Tensor::from_vec(&[n], g.clone()).unwrap(), &mask);
        for i in 0..n {
            prop_assert!(y.data()[i] >= a[i] && y.data()[i] >= b[i]);
            prop_assert_eq!(ga.data()[i] + gb.data()[i], g[i]);
            prop_assert!(ga.data()[i] == 0.0 || gb.data()[i] == 0.0);
        }
    }

    #[test]
    fn first_conv_ignores_zero_slice(seed in any::<u64>()) {
        use sgfcn::net::assemble_sgfe_input;
        use sgfcn::RgbFrame;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = RgbFrame::from_fn(6, 7, |_, _| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
        let prev = ScalarField::from_fn(6, 7, |_, _| rng.random_range(0.0..1.0));
        let w3 = random(&[2, 3, 3, 3], &mut rng, 1.0);
        let mut w4 = Tensor::zeros(&[2, 4, 3, 3]);
        for o in 0..2 {
            w4.data_mut()[o * 36..o * 36 + 27].copy_from_slice(&w3.data()[o * 27..o * 27 + 27]);
        }
        let b = random(&[2], &mut rng, 1.0);
        let y4 = ops::conv_forward(&assemble_sgfe_input(&f, &prev).unwrap(), &w4, &b, 1, 1).unwrap();
        let y3 = ops::conv_forward(&sgfcn::net::frame_tensor(&f), &w3, &b, 1, 1).unwrap();
        for (p, q) in y4.data().iter().zip(y3.data()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }
}
