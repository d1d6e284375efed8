mod common;

use common::fd::check;
use common::gradcheck::max_error;
use cota_core::autodiff::nn::Linear;
use cota_core::autodiff::{AdamConfig, AdamState, AutodiffError, Graph, ParamStore, Tensor, OP_REGISTRY};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn every_registered_op_matches_finite_differences() {
    for op in OP_REGISTRY {
        let err = max_error(op);
        assert!(err < 1e-4, "{op}: relative error {err:e}");
    }
}

#[test]
fn identity_matmul() {
    let mut g = Graph::<f64>::new(false, 0);
    let eye = g.input(Tensor::from_f64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap());
    let a = g.leaf(Tensor::from_f64(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let p = g.matmul(eye, a).unwrap();
    assert_eq!(g.value(p), g.value(a));
    let s = g.sum(p).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(a).unwrap().data(), &[1.0; 6]);
    assert!(g.grad(eye).is_none());
}

#[test]
fn uniform_logits() {
    for c in [2usize, 5, 17] {
        let mut g = Graph::<f64>::new(false, 0);
        let z = g.leaf(Tensor::zeros(&[3, c]));
        let p = g.softmax(z).unwrap();
        assert!(g.value(p).data().iter().all(|&v| (v - 1.0 / c as f64).abs() < 1e-15));
        let l = g.cross_entropy(z, &[0, 1, c - 1], None, None).unwrap();
        assert!((g.value(l).item() - (c as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn identity_and_fan_out() {
    let mut g = Graph::<f64>::new(false, 0);
    let x = g.leaf(Tensor::scalar(3.0));
    g.backward(x).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 1.0);

    let mut g = Graph::<f64>::new(false, 0);
    let x = g.leaf(Tensor::scalar(3.0));
    let y = g.add(x, x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 2.0);
}

#[test]
fn three_layer_mlp() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut s = ParamStore::<f64>::new();
    let l1 = Linear::new(&mut s, "l1", 4, 6, &mut rng);
    let l2 = Linear::new(&mut s, "l2", 6, 5, &mut rng);
    let l3 = Linear::new(&mut s, "l3", 5, 3, &mut rng);
    for (_, p) in s.clone().iter() {
        let id = s.id(&p.name).unwrap();
        s.get_mut(id).data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
    let x = Tensor::from_f64(&[5, 4], &(0..20).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>()).unwrap();
    let build = move |g: &mut Graph<f64>, st: &ParamStore<f64>| {
        let x = g.input(x.clone());
        let h = l1.forward(g, st, x)?;
        let h = g.tanh(h)?;
        let h = l2.forward(g, st, h)?;
        let h = g.relu(h)?;
        let z = l3.forward(g, st, h)?;
        g.cross_entropy(z, &[0, 1, 2, 1, 0], None, None)
    };
    let err = check(&s, &build, false, 1);
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn adam_quadratic_converges() {
    let mut s = ParamStore::<f64>::new();
    let w = s.add("w", Tensor::scalar(0.0));
    let mut adam = AdamState::new(AdamConfig { learning_rate: 0.1, ..Default::default() });
    for _ in 0..500 {
        let mut g = Graph::<f64>::new(true, 0);
        let wv = g.param(&s, w);
        let three = g.input(Tensor::scalar(3.0));
        let d = g.sub(wv, three).unwrap();
        let sq = g.mul(d, d).unwrap();
        g.backward(sq).unwrap();
        adam.step(&mut s, &g.param_grads());
    }
    assert!((s.get(w).item() - 3.0).abs() < 1e-2, "{}", s.get(w).item());
    assert_eq!(adam.step, 500);
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let mut s = ParamStore::<f64>::new();
        let w = s.add("w", Tensor::from_f64(&[3], &[0.1, -0.2, 0.3]).unwrap());
        let mut adam = AdamState::new(AdamConfig::default());
        for k in 0..10 {
            let g = Tensor::from_f64(&[3], &[k as f64, -1.0, 0.5]).unwrap();
            adam.step(&mut s, &[(w, g)]);
        }
        s.get(w).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn dropout_modes() {
    let x = Tensor::full(&[1000, 100], 1.0);
    let mut g = Graph::<f64>::new(false, 3);
    let v = g.input(x.clone());
    let d = g.dropout(v, 0.35).unwrap();
    assert_eq!(g.value(d), &x);

    let mut g = Graph::<f64>::new(true, 3);
    let v = g.input(x);
    let d = g.dropout(v, 0.35).unwrap();
    let mean = g.value(d).data().iter().sum::<f64>() / 1e5;
    assert!((mean - 1.0).abs() < 0.01, "{mean}");
    let zeros = g.value(d).data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
    assert!((zeros - 0.35).abs() < 0.01);
}

#[test]
fn batch_norm_standardizes_in_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, d) = (64, 7);
    let mut s = ParamStore::<f64>::new();
    let gamma = s.add("gamma", Tensor::full(&[d], 1.0));
    let beta = s.add("beta", Tensor::zeros(&[d]));
    let rm = s.add_buffer("rm", Tensor::zeros(&[d]));
    let rv = s.add_buffer("rv", Tensor::full(&[d], 1.0));
    let data: Vec<f64> = (0..n * d).map(|j| 5.0 + (j % d) as f64 + rng.random_range(-2.0..2.0)).collect();
    let x = Tensor::from_f64(&[n, d], &data).unwrap();

    let mut g = Graph::<f64>::new(true, 0);
    let xv = g.input(x.clone());
    let (gv, bv) = (g.param(&s, gamma), g.param(&s, beta));
    let y = g.batch_norm(xv, gv, bv, &s, (rm, rv), 0.1, 1e-5).unwrap();
    for c in 0..d {
        let col: Vec<f64> = (0..n).map(|r| g.value(y).at(r, c)).collect();
        let mu = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
        assert!(mu.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }
    for (id, t) in g.take_buffer_updates() {
        s.set(id, t).unwrap();
    }
    assert!(s.get(rm).data().iter().all(|&m| m > 0.4));

    // Evaluation mode uses the running statistics, not the batch.
    let mut g = Graph::<f64>::new(false, 0);
    let xv = g.input(x);
    let (gv, bv) = (g.param(&s, gamma), g.param(&s, beta));
    let y = g.batch_norm(xv, gv, bv, &s, (rm, rv), 0.1, 1e-5).unwrap();
    let expected = (data[0] - s.get(rm).data()[0]) / (s.get(rv).data()[0] + 1e-5).sqrt();
    assert!((g.value(y).at(0, 0) - expected).abs() < 1e-12);
    assert!(g.take_buffer_updates().is_empty());
}

#[test]
fn constant_column_normalizes_to_zero() {
    let mut s = ParamStore::<f64>::new();
    let gamma = s.add("gamma", Tensor::full(&[1], 1.0));
    let beta = s.add("beta", Tensor::zeros(&[1]));
    let rm = s.add_buffer("rm", Tensor::zeros(&[1]));
    let rv = s.add_buffer("rv", Tensor::full(&[1], 1.0));
    let mut g = Graph::<f64>::new(true, 0);
    let x = g.input(Tensor::full(&[5, 1], 42.0));
    let (gv, bv) = (g.param(&s, gamma), g.param(&s, beta));
    let y = g.batch_norm(x, gv, bv, &s, (rm, rv), 0.1, 1e-5).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn loss_weight_is_linear_in_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let grad_for = |w: f64| {
        let mut g = Graph::<f64>::new(false, 0);
        let zv = g.leaf(Tensor::from_f64(&[4, 3], &z).unwrap());
        let l = g.cross_entropy(zv, &[0, 2, 1, 1], None, None).unwrap();
        let t = g.weighted_sum(&[(l, w)]).unwrap();
        g.backward(t).unwrap();
        g.grad(zv).unwrap().clone()
    };
    let base = grad_for(1.0);
    let scaled = grad_for(2.5);
    for (a, b) in base.data().iter().zip(scaled.data()) {
        assert!((2.5 * a - b).abs() < 1e-15);
    }
}

#[test]
fn errors_name_op_and_shapes() {
    let mut g = Graph::<f64>::new(false, 0);
    let a = g.leaf(Tensor::zeros(&[2, 3]));
    let b = g.leaf(Tensor::zeros(&[2, 3]));
    let msg = g.matmul(a, b).unwrap_err().to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
    assert!(matches!(g.backward(a), Err(AutodiffError::NonScalarLoss(_))));

    let mut g = Graph::<f64>::new(false, 0).with_finite_checks();
    let x = g.leaf(Tensor::scalar(f64::MAX));
    assert!(matches!(g.scale(x, 10.0), Err(AutodiffError::NonFinite("scale"))));
}

#[test]
fn single_precision_agrees_with_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut g64 = Graph::<f64>::new(false, 0);
    let (x, y) = (g64.leaf(Tensor::from_f64(&[3, 4], &a).unwrap()), g64.input(Tensor::from_f64(&[4, 2], &b).unwrap()));
    let p = g64.matmul(x, y).unwrap();
    let p = g64.tanh(p).unwrap();
    let s = g64.sum(p).unwrap();
    g64.backward(s).unwrap();
    let mut g32 = Graph::<f32>::new(false, 0);
    let (x32, y32) = (g32.leaf(Tensor::from_f64(&[3, 4], &a).unwrap()), g32.input(Tensor::from_f64(&[4, 2], &b).unwrap()));
    let p = g32.matmul(x32, y32).unwrap();
    let p = g32.tanh(p).unwrap();
    let s = g32.sum(p).unwrap();
    g32.backward(s).unwrap();
    for (u, v) in g64.grad(x).unwrap().data().iter().zip(g32.grad(x32).unwrap().data()) {
        assert!((u - *v as f64).abs() < 1e-5);
    }
}
