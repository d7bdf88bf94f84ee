//! Synthetic problems with exactly known constants.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::objectives::{Loss, Objective, ProblemConstants};

/// Least squares `f_i(w) = (⟨x_i, w⟩ − y_i)²` built from an orthonormal basis
/// `q_1..q_d`: for every direction `j` there are two rows `s_j q_j` with
/// targets `y_j + δ` and `y_j − δ`.
///
/// The Hessian of `F` is `Σ_j (2s_j²/d) q_j q_jᵀ`, so `μ = 2 min s_j²/d`,
/// component smoothness is `L = 2 max s_j²`, the optimum is
/// `w∗ = Σ_j (y_j/s_j) q_j`, and `N = 8δ² · mean(s_j²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeastSquaresSpec {
    pub dim: usize,
    /// Target `μ`; `s_min² = μd/2`.
    pub mu: f64,
    /// Target `L`; `s_max² = L/2`. Requires `L ≥ μd`.
    pub l: f64,
    /// Half-gap `δ` between the two targets of a direction.
    pub delta: f64,
    /// Rotate the basis randomly; `false` uses the identity design.
    pub rotate: bool,
    pub seed: u64,
}

impl Default for LeastSquaresSpec {
    fn default() -> Self {
        LeastSquaresSpec {
            dim: 10,
            mu: 0.1,
            l: 1.0,
            delta: 0.5,
            rotate: true,
            seed: 0,
        }
    }
}

/// Random sparse logistic problem with a planted separator and label noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseLogisticSpec {
    pub n: usize,
    pub dim: usize,
    /// Nonzeros per example.
    pub nnz: usize,
    /// `‖x_i‖²` of every example.
    pub norm_sq: f64,
    /// Probability of flipping the planted label.
    pub flip: f64,
    pub seed: u64,
}

impl Default for SparseLogisticSpec {
    fn default() -> Self {
        SparseLogisticSpec {
            n: 5000,
            dim: 20,
            nnz: 10,
            norm_sq: 0.24,
            flip: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub objective: Objective,
    pub constants: ProblemConstants,
}

fn orthonormal_basis(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

fn identity_basis(dim: usize) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|j| (0..dim).map(|k| if j == k { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn dense_example(label: f64, x: &[f64]) -> Result<Example> {
    let (indices, values) = x
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(j, &v)| (j, v))
        .unzip();
    Example::new(label, indices, values)
}

/// Scales `s_j²` are spaced geometrically from `μd/2` to `L/2`; targets are
/// drawn uniformly from `[-1, 1]`.
pub fn least_squares_problem(spec: &LeastSquaresSpec) -> Result<SyntheticProblem> {
    let d = spec.dim;
    if d == 0 {
        return Err(Error::invalid("dim must be >= 1"));
    }
    if !(spec.mu > 0.0) || !(spec.l >= spec.mu * d as f64) {
        return Err(Error::invalid(format!(
            "need 0 < mu and L >= mu*dim (mu={}, L={}, dim={d})",
            spec.mu, spec.l
        )));
    }
    if !(spec.delta >= 0.0) {
        return Err(Error::invalid("delta must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let basis = if spec.rotate {
        orthonormal_basis(d, &mut rng)
    } else {
        identity_basis(d)
    };
    let lo = spec.mu * d as f64 / 2.0;
    let hi = spec.l / 2.0;
    let scales_sq: Vec<f64> = (0..d)
        .map(|j| {
            if d == 1 {
                lo
            } else {
                lo * (hi / lo).powf(j as f64 / (d - 1) as f64)
            }
        })
        .collect();
    let targets: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut examples = Vec::with_capacity(2 * d);
    let mut w_star = vec![0.0; d];
    for j in 0..d {
        let s = scales_sq[j].sqrt();
        let x: Vec<f64> = basis[j].iter().map(|q| s * q).collect();
        examples.push(dense_example(targets[j] + spec.delta, &x)?);
        examples.push(dense_example(targets[j] - spec.delta, &x)?);
        for (w, q) in w_star.iter_mut().zip(&basis[j]) {
            *w += targets[j] / s * q;
        }
    }
    let data = Dataset::new(d, examples)?;
    let objective = Objective::new(Loss::LeastSquares, data, 0.0)?;
    let mean_s2 = scales_sq.iter().sum::<f64>() / d as f64;
    let f_star = spec.delta * spec.delta;
    let noise = 8.0 * spec.delta * spec.delta * mean_s2;
    let mu = 2.0 * scales_sq[0] / d as f64;
    let l = 2.0 * scales_sq[d - 1];
    let constants = ProblemConstants::new(mu, l)?.with_optimum(w_star, f_star, noise);
    Ok(SyntheticProblem { objective, constants })
}

/// Sparse logistic data with `λ` left to the caller.
pub fn sparse_logistic_dataset(spec: &SparseLogisticSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::EmptyDataset);
    }
    if spec.nnz == 0 || spec.nnz > spec.dim {
        return Err(Error::invalid(format!(
            "nnz must lie in 1..={}, got {}",
            spec.dim, spec.nnz
        )));
    }
    if !(spec.norm_sq > 0.0) || !(0.0..=0.5).contains(&spec.flip) {
        return Err(Error::invalid("need norm_sq > 0 and flip in [0, 0.5]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let planted: Vec<f64> = (0..spec.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let magnitude = (spec.norm_sq / spec.nnz as f64).sqrt();
    let mut examples = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let mut indices = index::sample(&mut rng, spec.dim, spec.nnz).into_vec();
        indices.sort_unstable();
        let values: Vec<f64> = indices
            .iter()
            .map(|_| if rng.gen_bool(0.5) { magnitude } else { -magnitude })
            .collect();
        let margin: f64 = indices.iter().zip(&values).map(|(&j, v)| planted[j] * v).sum();
        let mut label = if margin >= 0.0 { 1.0 } else { -1.0 };
        if rng.gen_bool(spec.flip) {
            label = -label;
        }
        examples.push(Example::new(label, indices, values)?);
    }
    Dataset::new(spec.dim, examples)
}

/// The 1-d pair `f₁(w) = ½w²`, `f₂(w) = w` with `F(w) = ½(½w² + w)`.
///
/// `F` is `½`-strongly convex with `w∗ = −1`, yet `∇f₂ ≡ 1` and
/// `∇f₁(w) = w`, so `E‖∇f(w; ξ)‖² = (w² + 1)/2` is unbounded in `w`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TwoFunction;

impl TwoFunction {
    pub const W_STAR: f64 = -1.0;
    pub const MU: f64 = 0.5;
    pub const L: f64 = 1.0;
    /// `N = 2 · ½(1 + 1)`.
    pub const NOISE: f64 = 2.0;

    pub fn component(&self, i: usize, w: f64) -> f64 {
        if i == 0 {
            0.5 * w * w
        } else {
            w
        }
    }

    pub fn component_grad(&self, i: usize, w: f64) -> f64 {
        if i == 0 {
            w
        } else {
            1.0
        }
    }

    pub fn value(&self, w: f64) -> f64 {
        0.5 * (0.5 * w * w + w)
    }

    pub fn grad(&self, w: f64) -> f64 {
        0.5 * (w + 1.0)
    }

    pub fn second_moment(&self, w: f64) -> f64 {
        0.5 * (w * w + 1.0)
    }

    /// SGD path from `w0` with `η_t = eta(t)`; returns `w_0, …, w_T`.
    pub fn sgd_path(&self, w0: f64, iterations: u64, eta: impl Fn(u64) -> f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut path = Vec::with_capacity(iterations as usize + 1);
        let mut w = w0;
        path.push(w);
        for t in 0..iterations {
            let i = rng.gen_range(0..2);
            w -= eta(t) * self.component_grad(i, w);
            path.push(w);
        }
        path
    }
}
