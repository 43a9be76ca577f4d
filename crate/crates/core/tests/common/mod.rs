#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trustpc_core::{Activation, ActivityState, Batch, NetworkSpec, WeightSet};

pub const ACTIVATIONS: [Activation; 3] = [Activation::Linear, Activation::Tanh, Activation::Relu];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random MLP with `1..=max_depth` weight layers and widths in `1..=max_width`.
pub fn random_spec(rng: &mut ChaCha8Rng, max_depth: usize, max_width: usize, act: Activation) -> NetworkSpec {
    let depth = rng.random_range(1..=max_depth);
    let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=max_width)).collect();
    NetworkSpec::new(widths, vec![act; depth]).unwrap()
}

/// Like [`random_spec`] but with at least one hidden layer.
pub fn random_hidden_spec(rng: &mut ChaCha8Rng, max_depth: usize, max_width: usize, act: Activation) -> NetworkSpec {
    let depth = rng.random_range(2..=max_depth.max(2));
    let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=max_width)).collect();
    NetworkSpec::new(widths, vec![act; depth]).unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng, spec: &NetworkSpec, bound: f64) -> WeightSet {
    WeightSet::uniform(spec, bound, rng)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

pub fn random_batch(rng: &mut ChaCha8Rng, spec: &NetworkSpec, n: usize) -> Batch {
    let x = DMatrix::from_fn(spec.input_width(), n, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(spec.output_width(), n, |_, _| rng.random_range(-1.0..1.0));
    Batch::new(x, y).unwrap()
}

/// Central difference of `f` at `x` along every coordinate.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian of `f` at `x`.
pub fn fd_hessian(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> DMatrix<f64> {
    let n = x.len();
    let mut p = x.to_vec();
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut eval = |di: f64, dj: f64| {
                p[i] += di;
                p[j] += dj;
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            hess[(i, j)] = (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / (4.0 * h * h);
        }
    }
    hess
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute gap when both are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| x - y)).norm();
    let scale = DVector::from_column_slice(a).norm().max(DVector::from_column_slice(b).norm());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Fourth-order Runge–Kutta for `ẇ = g(w)`.
pub fn rk4<const N: usize>(w0: [f64; N], t: f64, steps: usize, g: impl Fn(&[f64; N]) -> [f64; N]) -> [f64; N] {
    let h = t / steps as f64;
    let add = |a: &[f64; N], b: &[f64; N], s: f64| std::array::from_fn::<f64, N, _>(|i| a[i] + s * b[i]);
    let mut w = w0;
    for _ in 0..steps {
        let k1 = g(&w);
        let k2 = g(&add(&w, &k1, h / 2.0));
        let k3 = g(&add(&w, &k2, h / 2.0));
        let k4 = g(&add(&w, &k3, h));
        w = std::array::from_fn(|i| w[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    w
}

/// Grid search over `t` for the point `(t, m/t)` on the manifold `w1·w2 = m`
/// closest to `(w1, w2)`; every grid-local minimum is refined by golden-section
/// search.
pub fn brute_force_manifold_point(w1: f64, w2: f64, m: f64) -> [f64; 2] {
    let dist = |t: f64| (t - w1).powi(2) + (m / t - w2).powi(2);
    let n = 400_000;
    let span = 10.0;
    let ts: Vec<f64> = (0..=n).map(|k| -span + 2.0 * span * k as f64 / n as f64).collect();
    let ds: Vec<f64> = ts.iter().map(|&t| if t == 0.0 { f64::INFINITY } else { dist(t) }).collect();
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut best = (f64::INFINITY, f64::NAN);
    for k in 1..n {
        if !(ds[k] <= ds[k - 1] && ds[k] <= ds[k + 1]) {
            continue;
        }
        let (mut a, mut b) = (ts[k - 1], ts[k + 1]);
        if a * b <= 0.0 {
            continue;
        }
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if dist(c) < dist(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let t = 0.5 * (a + b);
        if dist(t) < best.0 {
            best = (dist(t), t);
        }
    }
    [best.1, m / best.1]
}

/// MLP with `min_hidden..=max_hidden` hidden layers of `activation` and a linear readout.
pub fn random_mlp(rng: &mut ChaCha8Rng, min_hidden: usize, max_hidden: usize, max_width: usize, activation: Activation) -> NetworkSpec {
    let hidden: Vec<usize> = (0..rng.random_range(min_hidden..=max_hidden)).map(|_| rng.random_range(1..=max_width)).collect();
    NetworkSpec::mlp(rng.random_range(1..=max_width), &hidden, rng.random_range(1..=max_width), activation).unwrap()
}

/// Smallest `|W_l z_{l−1}|` over ReLU layers of `state`; infinite without ReLUs.
pub fn min_relu_preactivation(spec: &NetworkSpec, w: &WeightSet, state: &ActivityState) -> f64 {
    (1..=spec.depth())
        .filter(|&l| spec.activation(l) == Activation::Relu)
        .flat_map(|l| (w.layer(l) * state.layer(l - 1)).iter().map(|a| a.abs()).collect::<Vec<_>>())
        .fold(f64::INFINITY, f64::min)
}
