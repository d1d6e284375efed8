//! One randomized gradient-check case per registered operator.

use cota_core::autodiff::nn::{CellType, RnnCell};
use cota_core::autodiff::{ParamStore, SeqLayout, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fd::{check, Build};

pub const DRAWS: usize = 20;

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn rand_m(rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let shape = [dim(rng), dim(rng)];
    rand_t(rng, &shape)
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=4)
}

fn seq(rng: &mut ChaCha8Rng) -> SeqLayout {
    let b = rng.random_range(1..=3);
    SeqLayout::new((0..b).map(|_| rng.random_range(0..=5)).collect())
}

fn seed_of(name: &str, draw: usize) -> u64 {
    name.bytes().fold(draw as u64 * 7919, |h, b| h.wrapping_mul(31).wrapping_add(b as u64))
}

/// Maximum relative gradient error of `op` over `DRAWS` random instances.
pub fn max_error(op: &str) -> f64 {
    (0..DRAWS).map(|d| run_case(op, d)).fold(0.0, f64::max)
}

pub fn run_case(op: &str, draw: usize) -> f64 {
    let seed = seed_of(op, draw);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::<f64>::new();
    let mut train = false;
    let build: Box<Build> = match op {
        "matmul" => {
            let (m, k, n) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
            let a = s.add("a", rand_t(&mut rng, &[m, k]));
            let b = s.add("b", rand_t(&mut rng, &[k, n]));
            Box::new(move |g, st| {
                let (a, b) = (g.param(st, a), g.param(st, b));
                g.matmul(a, b)
            })
        }
        "add" | "sub" | "mul" => {
            let shape = [dim(&mut rng), dim(&mut rng)];
            let a = s.add("a", rand_t(&mut rng, &shape));
            let b = s.add("b", rand_t(&mut rng, &shape));
            let op = op.to_string();
            Box::new(move |g, st| {
                let (a, b) = (g.param(st, a), g.param(st, b));
                match op.as_str() {
                    "add" => g.add(a, b),
                    "sub" => g.sub(a, b),
                    _ => g.mul(a, b),
                }
            })
        }
        "add_bias" => {
            let (m, n) = (dim(&mut rng), dim(&mut rng));
            let x = s.add("x", rand_t(&mut rng, &[m, n]));
            let b = s.add("b", rand_t(&mut rng, &[n]));
            Box::new(move |g, st| {
                let (x, b) = (g.param(st, x), g.param(st, b));
                g.add_bias(x, b)
            })
        }
        "scale" => {
            let x = s.add("x", rand_m(&mut rng));
            let c = rng.random_range(-3.0..3.0);
            Box::new(move |g, st| {
                let x = g.param(st, x);
                g.scale(x, c)
            })
        }
        "concat" => {
            let axis = rng.random_range(0..2);
            let fixed = dim(&mut rng);
            let ids: Vec<_> = (0..3)
                .map(|i| {
                    let shape = if axis == 0 { [dim(&mut rng), fixed] } else { [fixed, dim(&mut rng)] };
                    s.add(&format!("x{i}"), rand_t(&mut rng, &shape))
                })
                .collect();
            Box::new(move |g, st| {
                let vs: Vec<Var> = ids.iter().map(|&id| g.param(st, id)).collect();
                g.concat(&vs, axis)
            })
        }
        "slice_cols" => {
            let n = rng.random_range(2..=5);
            let start = rng.random_range(0..n - 1);
            let end = rng.random_range(start + 1..=n);
            let m = dim(&mut rng);
            let x = s.add("x", rand_t(&mut rng, &[m, n]));
            Box::new(move |g, st| {
                let x = g.param(st, x);
                g.slice_cols(x, start, end)
            })
        }
        "reshape" => {
            let (m, n) = (dim(&mut rng), dim(&mut rng));
            let x = s.add("x", rand_t(&mut rng, &[m, n]));
            Box::new(move |g, st| {
                let x = g.param(st, x);
                let r = g.reshape(x, vec![n * m, 1])?;
                // Follow with a non-elementwise op so layout matters.
                let w = g.input(Tensor::from_f64(&[1, 2], &[0.5, -1.5]).unwrap());
                g.matmul(r, w)
            })
        }
        "embedding" => {
            let (v, d) = (dim(&mut rng) + 1, dim(&mut rng));
            let table = s.add("table", rand_t(&mut rng, &[v, d]));
            let n = rng.random_range(1..=6);
            let idx: Vec<Option<usize>> =
                (0..n).map(|_| if rng.random_bool(0.2) { None } else { Some(rng.random_range(0..v)) }).collect();
            Box::new(move |g, st| {
                let t = g.param(st, table);
                g.embedding(t, &idx)
            })
        }
        "conv1d" => {
            let layout = seq(&mut rng);
            let (din, dout, width) = (dim(&mut rng), dim(&mut rng), rng.random_range(1..=5));
            let x = s.add("x", rand_t(&mut rng, &[layout.rows(), din]));
            let w = s.add("w", rand_t(&mut rng, &[width * din, dout]));
            let b = s.add("b", rand_t(&mut rng, &[dout]));
            Box::new(move |g, st| {
                let (x, w, b) = (g.param(st, x), g.param(st, w), g.param(st, b));
                g.conv1d(x, w, b, &layout, width)
            })
        }
        "max_pool_over_time" | "time_step" | "reverse_seq" => {
            let layout = seq(&mut rng);
            let d = dim(&mut rng);
            let x = s.add("x", rand_t(&mut rng, &[layout.rows(), d]));
            let t = rng.random_range(0..layout.max_len);
            let op = op.to_string();
            Box::new(move |g, st| {
                let x = g.param(st, x);
                match op.as_str() {
                    "max_pool_over_time" => g.max_pool_over_time(x, &layout),
                    "time_step" => g.time_step(x, &layout, t),
                    _ => g.reverse_seq(x, &layout),
                }
            })
        }
        "where_rows" => {
            let shape = [dim(&mut rng), dim(&mut rng)];
            let mask: Vec<bool> = (0..shape[0]).map(|_| rng.random_bool(0.5)).collect();
            let a = s.add("a", rand_t(&mut rng, &shape));
            let b = s.add("b", rand_t(&mut rng, &shape));
            Box::new(move |g, st| {
                let (a, b) = (g.param(st, a), g.param(st, b));
                g.where_rows(&mask, a, b)
            })
        }
        "sigmoid" | "tanh" | "relu" | "softmax" => {
            let x = s.add("x", rand_m(&mut rng).map(|v| v * 3.0));
            let op = op.to_string();
            Box::new(move |g, st| {
                let x = g.param(st, x);
                match op.as_str() {
                    "sigmoid" => g.sigmoid(x),
                    "tanh" => g.tanh(x),
                    "relu" => g.relu(x),
                    _ => g.softmax(x),
                }
            })
        }
        "dropout" => {
            train = true;
            let p = rng.random_range(0.1..0.6);
            let x = s.add("x", rand_m(&mut rng));
            Box::new(move |g, st| {
                let x = g.param(st, x);
                g.dropout(x, p)
            })
        }
        "batch_norm" => {
            train = rng.random_bool(0.5);
            let (n, d) = (rng.random_range(3..=6), dim(&mut rng));
            let x = s.add("x", rand_t(&mut rng, &[n, d]));
            let gamma = s.add("gamma", rand_t(&mut rng, &[d]));
            let beta = s.add("beta", rand_t(&mut rng, &[d]));
            let rm = s.add_buffer("mean", rand_t(&mut rng, &[d]));
            let rv = s.add_buffer("var", rand_t(&mut rng, &[d]).map(|v| v.abs() + 0.5));
            Box::new(move |g, st| {
                let (x, gm, bt) = (g.param(st, x), g.param(st, gamma), g.param(st, beta));
                g.batch_norm(x, gm, bt, st, (rm, rv), 0.1, 1e-5)
            })
        }
        "cross_entropy" => {
            let (n, c) = (dim(&mut rng), dim(&mut rng) + 1);
            let logits = s.add("z", rand_t(&mut rng, &[n, c]).map(|v| v * 2.0));
            let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let masked = rng.random_bool(0.5);
            let allowed: Vec<bool> =
                (0..n * c).map(|j| !masked || targets[j / c] == j % c || rng.random_bool(0.6)).collect();
            let weighted = rng.random_bool(0.5);
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
            Box::new(move |g, st| {
                let z = g.param(st, logits);
                g.cross_entropy(z, &targets, masked.then_some(&allowed[..]), weighted.then_some(&weights[..]))
            })
        }
        "binary_cross_entropy" => {
            let n = dim(&mut rng);
            let logits = s.add("z", rand_t(&mut rng, &[n, 1]).map(|v| v * 3.0));
            let targets: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
            Box::new(move |g, st| {
                let z = g.param(st, logits);
                g.binary_cross_entropy(z, &targets, Some(&weights))
            })
        }
        "mean_squared_error" => {
            let shape = [dim(&mut rng), dim(&mut rng)];
            let p = s.add("p", rand_t(&mut rng, &shape));
            let targets = rand_t(&mut rng, &shape).into_data();
            Box::new(move |g, st| {
                let p = g.param(st, p);
                g.mean_squared_error(p, &targets)
            })
        }
        "sum" => {
            let x = s.add("x", rand_m(&mut rng));
            Box::new(move |g, st| {
                let x = g.param(st, x);
                let sq = g.mul(x, x)?;
                g.sum(sq)
            })
        }
        "weighted_sum" => {
            let a = s.add("a", rand_m(&mut rng));
            let nb = dim(&mut rng);
            let b = s.add("b", rand_t(&mut rng, &[nb]));
            let (wa, wb) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
            Box::new(move |g, st| {
                let (a, b) = (g.param(st, a), g.param(st, b));
                let a2 = g.mul(a, a)?;
                let sa = g.sum(a2)?;
                let tb = g.tanh(b)?;
                let sb = g.sum(tb)?;
                g.weighted_sum(&[(sa, wa), (sb, wb)])
            })
        }
        "rnn_simple" | "rnn_lstm" | "rnn_gru" => {
            let kind = match op {
                "rnn_simple" => CellType::Simple,
                "rnn_lstm" => CellType::Lstm,
                _ => CellType::Gru,
            };
            let layout = seq(&mut rng);
            let (din, hidden) = (dim(&mut rng), dim(&mut rng));
            let cell = RnnCell::new(&mut s, "cell", kind, din, hidden, &mut rng);
            // Move the biases off their initial constants.
            let b = s.get_mut(cell.b);
            b.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
            let x = s.add("x", rand_t(&mut rng, &[layout.rows(), din]));
            let reverse = rng.random_bool(0.5);
            let r1 = rand_t(&mut rng, &[layout.batch(), hidden]);
            let r2 = rand_t(&mut rng, &[layout.rows(), hidden]);
            Box::new(move |g, st| {
                let x = g.param(st, x);
                let (last, all) = cell.run(g, st, x, &layout, reverse)?;
                let r1 = g.input(r1.clone());
                let r2 = g.input(r2.clone());
                let p1 = g.mul(last, r1)?;
                let p1 = g.sum(p1)?;
                let p2 = g.mul(all, r2)?;
                let p2 = g.sum(p2)?;
                g.weighted_sum(&[(p1, 1.0), (p2, 1.0)])
            })
        }
        other => panic!("no gradient-check case for operator {other}"),
    };
    check(&s, build.as_ref(), train, seed)
}
