//! Neural tangent kernel diagnostics.
//!
//! For unit-norm inputs the kernel is built by the layerwise recursion
//!
//! ```text
//! Σ⁰ᵢⱼ = H⁰ᵢⱼ = ⟨xᵢ, xⱼ⟩
//! Σˡᵢⱼ = 2 E[σ(a) σ(b)],   Hˡᵢⱼ = 2 Hˡ⁻¹ᵢⱼ E[σ'(a) σ'(b)] + Σˡᵢⱼ,   (a, b) ~ N(0, Aˡ⁻¹ᵢⱼ)
//! H = (Hᴸ + Σᴸ) / 2
//! ```
//!
//! with the ReLU expectations in closed form (arc-cosine kernels): for
//! correlation `cos θ`, `2 E[σ(a)σ(b)] = sqrt(A₁₁ A₂₂) (sin θ + (π - θ) cos θ) / π`
//! and `2 E[σ'(a)σ'(b)] = (π - θ) / π`.
//!
//! [`mc_gram_oracle`] estimates the same matrix from finite-width gradients.
//! A depth-`L` kernel matches a network with `L` hidden layers (that is
//! `L + 1` weight matrices) and one output, so the oracle builds networks of
//! that depth.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{norm, UNIT_NORM_TOL};
use crate::error::{Error, Result};
use crate::nn::{self, NetConfig};

/// Closed-form `(2 E[σ(a)σ(b)], 2 E[σ'(a)σ'(b)])` for `(a, b) ~ N(0, [[s_aa, s_ab], [s_ab, s_bb]])`.
pub fn relu_expectations(s_aa: f64, s_bb: f64, s_ab: f64) -> (f64, f64) {
    let scale = (s_aa * s_bb).sqrt();
    if scale == 0.0 {
        return (0.0, 0.0);
    }
    let cos = (s_ab / scale).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let sigma = scale * (theta.sin() + (PI - theta) * cos) / PI;
    let dot = (PI - theta) / PI;
    (sigma, dot)
}

/// Kernel entry for one pair of inputs given their Gram entries.
pub fn ntk_entry(x_ii: f64, x_jj: f64, x_ij: f64, depth: usize) -> f64 {
    let (mut s_ii, mut s_jj, mut s_ij) = (x_ii, x_jj, x_ij);
    let mut h_ij = x_ij;
    for _ in 0..depth {
        let (sigma_ij, dot_ij) = relu_expectations(s_ii, s_jj, s_ij);
        s_ii = relu_expectations(s_ii, s_ii, s_ii).0;
        s_jj = relu_expectations(s_jj, s_jj, s_jj).0;
        h_ij = h_ij * dot_ij + sigma_ij;
        s_ij = sigma_ij;
    }
    (h_ij + s_ij) / 2.0
}

fn check_unit(xs: &[Vec<f64>]) -> Result<usize> {
    let d = xs.first().map_or(0, Vec::len);
    for (row, x) in xs.iter().enumerate() {
        if x.len() != d {
            return Err(Error::shape("kernel input", d, x.len()));
        }
        let n = norm(x);
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NotNormalized { row, norm: n });
        }
    }
    Ok(d)
}

/// `T × T` kernel for unit-norm inputs.
pub fn ntk_matrix(xs: &[Vec<f64>], depth: usize) -> Result<DMatrix<f64>> {
    check_unit(xs)?;
    let t = xs.len();
    let mut h = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in i..t {
            let v = ntk_entry(
                nn::dot(&xs[i], &xs[i]),
                nn::dot(&xs[j], &xs[j]),
                nn::dot(&xs[i], &xs[j]),
                depth,
            );
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// Block expansion `H_{(i,k),(j,k')} = δ_{kk'} H[i, j]`, indexed `i K + k`.
pub fn expand_multiclass(h: &DMatrix<f64>, num_classes: usize) -> DMatrix<f64> {
    h.kronecker(&DMatrix::identity(num_classes, num_classes))
}

/// Jitter ladder for the factorisation behind `S`.
pub const JITTER_LADDER: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub size: usize,
    /// `λ₀`, the smallest eigenvalue of `H`.
    pub lambda0: f64,
    /// `S = sqrt(hᵀ H⁻¹ h)`.
    pub s: f64,
    /// Jitter added to the diagonal to factor `H` for `S`.
    pub jitter: f64,
    /// `L_H = log det(I + H)`.
    pub l_h: f64,
    /// `TK log(1 + λ₀)`.
    pub lower_bound: f64,
    pub bound_holds: bool,
    /// `L_H / log(1 + TK)`.
    pub effective_dimension: f64,
}

/// Slack allowed in the lower-bound check.
pub const BOUND_SLACK: f64 = 1e-9;

pub fn complexity_terms(h_mat: &DMatrix<f64>, h_vec: &[f64]) -> Result<ComplexityReport> {
    let n = h_mat.nrows();
    if h_mat.ncols() != n {
        return Err(Error::shape("kernel columns", n, h_mat.ncols()));
    }
    if h_vec.len() != n {
        return Err(Error::shape("h vector", n, h_vec.len()));
    }
    let scale = h_mat.amax().max(1.0);
    if (h_mat - h_mat.transpose()).amax() > 1e-9 * scale {
        return Err(Error::InvalidConfig(
            "kernel matrix is not symmetric".into(),
        ));
    }
    let sym = (h_mat + h_mat.transpose()) * 0.5;
    let lambda0 = SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    let shifted = DMatrix::identity(n, n) + &sym;
    let l_h = shifted
        .cholesky()
        .ok_or(Error::Conditioning { jitter: 0.0 })?
        .l()
        .diagonal()
        .iter()
        .map(|d| 2.0 * d.ln())
        .sum::<f64>();

    let h = DVector::from_column_slice(h_vec);
    let (s, jitter) = if h.iter().all(|&v| v == 0.0) {
        (0.0, 0.0)
    } else {
        rkhs_norm(&sym, &h)?
    };

    let lower_bound = n as f64 * lambda0.ln_1p();
    Ok(ComplexityReport {
        size: n,
        lambda0,
        s,
        jitter,
        l_h,
        lower_bound,
        bound_holds: l_h >= lower_bound - BOUND_SLACK,
        effective_dimension: l_h / (n as f64).ln_1p(),
    })
}

/// `sqrt(hᵀ H⁻¹ h)` via Cholesky, adding jitter until `H` factors.
fn rkhs_norm(h_mat: &DMatrix<f64>, h: &DVector<f64>) -> Result<(f64, f64)> {
    let n = h_mat.nrows();
    for &jitter in &JITTER_LADDER {
        let m = h_mat + DMatrix::identity(n, n) * jitter;
        if let Some(chol) = m.cholesky() {
            let z = chol
                .l()
                .solve_lower_triangular(h)
                .ok_or(Error::Conditioning { jitter })?;
            return Ok((z.norm(), jitter));
        }
    }
    Err(Error::Conditioning {
        jitter: *JITTER_LADDER.last().expect("nonempty ladder"),
    })
}

/// Monte-Carlo estimate of `⟨∇θ f(xᵢ)[k], ∇θ f(xⱼ)[k']⟩ / m` at initialisation.
#[derive(Debug, Clone)]
pub struct McGram {
    pub mean: DMatrix<f64>,
    /// Standard error of each entry of `mean`.
    pub std_err: DMatrix<f64>,
    pub n_nets: usize,
}

/// Averages finite-width gradient Gram matrices over `n_nets` random networks
/// with `depth` hidden layers, width `m` and `K` outputs.
pub fn mc_gram_oracle(
    xs: &[Vec<f64>],
    depth: usize,
    width: usize,
    num_classes: usize,
    n_nets: usize,
    seed: u64,
) -> Result<McGram> {
    if width < 2 {
        return Err(Error::InvalidConfig(
            "oracle width must be at least 2".into(),
        ));
    }
    if n_nets == 0 {
        return Err(Error::InvalidConfig(
            "oracle needs at least one network".into(),
        ));
    }
    let d = check_unit(xs)?;
    let cfg = NetConfig::new(d, width, depth + 1, num_classes)?;
    let grams: Vec<DMatrix<f64>> = (0..n_nets)
        .into_par_iter()
        .map(|net| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(net as u64);
            let params = nn::init_params_with(&cfg, &mut rng);
            finite_width_gram(&params, xs)
        })
        .collect::<Result<_>>()?;

    let n = xs.len() * num_classes;
    let count = n_nets as f64;
    let mut mean = DMatrix::zeros(n, n);
    for g in &grams {
        mean += g;
    }
    mean /= count;
    let mut var = DMatrix::zeros(n, n);
    for g in &grams {
        let diff = g - &mean;
        var += diff.component_mul(&diff);
    }
    let std_err = if n_nets > 1 {
        (var / (count - 1.0)).map(|v| (v / count).sqrt())
    } else {
        DMatrix::zeros(n, n)
    };
    Ok(McGram {
        mean,
        std_err,
        n_nets,
    })
}

/// Gradient Gram of one network, using the rank-one structure of each layer's
/// gradient: `⟨δ ⊗ a, δ' ⊗ a'⟩ = ⟨δ, δ'⟩ ⟨a, a'⟩`.
pub fn finite_width_gram(params: &nn::Params, xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = params.config().output_dim();
    let m = params.config().width() as f64;
    let mut caches = Vec::with_capacity(xs.len());
    let mut factors = Vec::with_capacity(xs.len() * k);
    for x in xs {
        let (_, cache) = nn::forward(params, x)?;
        for c in 0..k {
            let mut e = vec![0.0; k];
            e[c] = 1.0;
            factors.push(nn::backward_factors(params, &cache, &e)?);
        }
        caches.push(cache);
    }
    let depth = params.config().depth();
    let t = xs.len();
    // ⟨a_l(xᵢ), a_l(xⱼ)⟩ for every layer input.
    let act = |cache: &nn::ForwardCache, l: usize| -> Vec<f64> {
        if l == 0 {
            cache.input().to_vec()
        } else {
            cache.hidden(l).to_vec()
        }
    };
    let mut act_gram = vec![DMatrix::zeros(t, t); depth];
    for (l, g) in act_gram.iter_mut().enumerate() {
        let acts: Vec<Vec<f64>> = caches.iter().map(|c| act(c, l)).collect();
        for i in 0..t {
            for j in i..t {
                let v = nn::dot(&acts[i], &acts[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
    }
    let n = t * k;
    let mut gram = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let (i, j) = (a / k, b / k);
            let v: f64 = (0..depth)
                .map(|l| nn::dot(&factors[a][l], &factors[b][l]) * act_gram[l][(i, j)])
                .sum::<f64>()
                / m;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    Ok(gram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_inputs_give_half_depth_plus_two() {
        let x = vec![vec![0.6, 0.8], vec![0.6, 0.8]];
        for depth in 1..5 {
            let h = ntk_matrix(&x, depth).unwrap();
            let want = (depth as f64 + 2.0) / 2.0;
            assert_relative_eq!(h[(0, 0)], want, epsilon = 1e-12);
            assert_relative_eq!(h[(0, 1)], want, epsilon = 1e-7);
        }
    }

    #[test]
    fn orthogonal_inputs_depth_two() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let h = ntk_matrix(&x, 2).unwrap();
        // Hand recursion: Σ¹ = 1/π, H¹ = 1/π, θ₁ = acos(1/π), then average.
        let s1 = 1.0 / PI;
        let t1 = s1.acos();
        let s2 = (t1.sin() + (PI - t1) * s1) / PI;
        let h2 = s1 * (PI - t1) / PI + s2;
        assert_relative_eq!(h[(0, 1)], (h2 + s2) / 2.0, epsilon = 1e-14);
        assert_relative_eq!(h[(0, 1)], 0.5897, epsilon = 1e-4);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn rejects_non_unit_inputs() {
        assert!(matches!(
            ntk_matrix(&[vec![1.0, 1.0]], 2),
            Err(Error::NotNormalized { row: 0, .. })
        ));
    }

    #[test]
    fn expansion_is_block_diagonal() {
        let h = DMatrix::from_row_slice(1, 1, &[2.0]);
        assert_eq!(
            expand_multiclass(&h, 2),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0])
        );
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0]);
        assert_eq!(expand_multiclass(&h, 1), h);
        let e = expand_multiclass(&h, 3);
        assert_eq!(e[(0, 3)], 0.5);
        assert_eq!(e[(0, 4)], 0.0);
        assert_eq!(e[(4, 1)], 0.5);
    }

    #[test]
    fn one_by_one_complexity() {
        let h = DMatrix::from_row_slice(1, 1, &[2.0]);
        let r = complexity_terms(&h, &[1.0]).unwrap();
        assert_relative_eq!(r.s, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(r.l_h, 3f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(r.lower_bound, 3f64.ln(), epsilon = 1e-15);
        assert!(r.bound_holds);
        assert_eq!(complexity_terms(&h, &[0.0]).unwrap().s, 0.0);
    }

    #[test]
    fn singular_kernel_is_a_conditioning_error() {
        // Indefinite: I + H still factors but H does not, at any jitter.
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(matches!(
            complexity_terms(&h, &[1.0, 0.0]),
            Err(Error::Conditioning { jitter }) if jitter == 1e-6
        ));
    }

    #[test]
    fn asymmetric_kernel_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(complexity_terms(&h, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn single_point_gram_is_positive() {
        let g = mc_gram_oracle(&[vec![0.0, 1.0]], 2, 16, 1, 2, 0).unwrap();
        assert_eq!(g.mean.shape(), (1, 1));
        assert!(g.mean[(0, 0)] > 0.0);
    }

    #[test]
    fn factored_gram_matches_explicit_gradients() {
        let cfg = NetConfig::new(3, 6, 3, 2).unwrap();
        let p = nn::init_params(&cfg, 4);
        let xs = vec![vec![0.6, 0.0, 0.8], vec![0.0, 1.0, 0.0]];
        let gram = finite_width_gram(&p, &xs).unwrap();
        let mut grads = Vec::new();
        for x in &xs {
            let (_, cache) = nn::forward(&p, x).unwrap();
            for k in 0..2 {
                let mut e = vec![0.0; 2];
                e[k] = 1.0;
                grads.push(nn::backward(&p, &cache, &e).unwrap().to_flat());
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                assert_relative_eq!(
                    gram[(a, b)],
                    nn::dot(&grads[a], &grads[b]) / 6.0,
                    epsilon = 1e-12
                );
            }
        }
    }
}
