//! Central finite-difference gradient oracle over the trainable entries of
//! a parameter store.

use cota_core::autodiff::{AutodiffError, Graph, ParamId, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

/// Relative error with a floor on the denominator so that gradients near
/// zero are compared on an absolute scale of 1e-3.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Builds a scalar from the graph. Non-scalar outputs are reduced with a
/// fixed random projection so every output element matters.
pub type Build<'a> = dyn Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var, AutodiffError> + 'a;

fn scalar_of(g: &mut Graph<f64>, v: Var, seed: u64) -> Var {
    if g.value(v).len() == 1 {
        return v;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let shape = g.value(v).shape().to_vec();
    let n = g.value(v).len();
    let r = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let r = g.input(r);
    let p = g.mul(v, r).unwrap();
    g.sum(p).unwrap()
}

fn evaluate(store: &ParamStore<f64>, build: &Build, train: bool, seed: u64) -> f64 {
    let mut g = Graph::new(train, seed);
    let out = build(&mut g, store).unwrap();
    let s = scalar_of(&mut g, out, seed);
    g.value(s).item()
}

/// Maximum relative error between analytic and central-difference
/// gradients over every trainable scalar in `store`.
pub fn check(store: &ParamStore<f64>, build: &Build, train: bool, seed: u64) -> f64 {
    let mut g = Graph::new(train, seed);
    let out = build(&mut g, store).unwrap();
    let s = scalar_of(&mut g, out, seed);
    g.backward(s).unwrap();
    let analytic: Vec<(ParamId, Tensor<f64>)> = g.param_grads();
    let mut worst = 0.0f64;
    let mut probe = store.clone();
    for (id, p) in store.iter() {
        if !p.trainable {
            continue;
        }
        let grad = analytic.iter().find(|(a, _)| *a == id).map(|(_, t)| t.clone());
        for j in 0..p.value.len() {
            let orig = p.value.data()[j];
            probe.get_mut(id).data_mut()[j] = orig + STEP;
            let up = evaluate(&probe, build, train, seed);
            probe.get_mut(id).data_mut()[j] = orig - STEP;
            let down = evaluate(&probe, build, train, seed);
            probe.get_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = grad.as_ref().map_or(0.0, |t| t.data()[j]);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    worst
}
