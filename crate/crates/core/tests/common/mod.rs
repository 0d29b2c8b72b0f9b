#![allow(dead_code)]

use neuronal::nn::{self, Params};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn unit_vectors<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| unit_vector(rng, d)).collect()
}

fn inner(params: &Params, x: &[f64], upstream: &[f64]) -> f64 {
    nn::predict(params, x)
        .unwrap()
        .iter()
        .zip(upstream)
        .map(|(a, b)| a * b)
        .sum()
}

/// Central differences of `⟨upstream, f(x; θ)⟩`, flattened like `Params::to_flat`.
pub fn finite_difference(params: &Params, x: &[f64], upstream: &[f64], step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.config().num_params());
    let mut p = params.clone();
    for l in 0..params.layers().len() {
        for i in 0..params.layers()[l].data().len() {
            let orig = p.layers()[l].data()[i];
            p.layer_mut(l).data_mut()[i] = orig + step;
            let plus = inner(&p, x, upstream);
            p.layer_mut(l).data_mut()[i] = orig - step;
            let minus = inner(&p, x, upstream);
            p.layer_mut(l).data_mut()[i] = orig;
            out.push((plus - minus) / (2.0 * step));
        }
    }
    out
}

/// `‖g - g_fd‖ / max(‖g‖, ‖g_fd‖)` for the analytic gradient of `⟨upstream, f⟩`.
pub fn gradient_relative_error(params: &Params, x: &[f64], upstream: &[f64]) -> f64 {
    let (_, cache) = nn::forward(params, x).unwrap();
    let g = nn::backward(params, &cache, upstream).unwrap().to_flat();
    let fd = finite_difference(params, x, upstream, 1e-5);
    let diff = g
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = norm(&g).max(norm(&fd));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
