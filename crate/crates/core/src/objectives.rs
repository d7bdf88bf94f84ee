//! Loss families over a sparse dataset, their component gradients, and the
//! problem constants (μ, L, κ, N, w∗) that step-size schedules and bounds need.

use crate::data::{Dataset, Example};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// `log(1 + exp(-y⟨x, w⟩))`
    Logistic,
    /// `(⟨x, w⟩ - y)²`
    LeastSquares,
}

/// Which coordinates the `(λ/2)‖·‖²` penalty of a component covers.
///
/// `Support` penalizes only the coordinates in the example's support, so every
/// component gradient is supported on `support(x_i)`. `Dense` is the plain
/// ridge penalty on all coordinates; its component gradients are dense
/// whenever `λ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegScope {
    #[default]
    Support,
    Dense,
}

/// A sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j] = v;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Objective {
    loss: Loss,
    data: Dataset,
    lambda: f64,
    scope: RegScope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    pub mu: f64,
    pub l: f64,
    pub kappa: f64,
    /// `N = 2 E‖∇f(w∗; ξ)‖²`, present when `w_star` is.
    pub noise: Option<f64>,
    pub w_star: Option<Vec<f64>>,
    pub f_star: Option<f64>,
}

impl ProblemConstants {
    pub fn new(mu: f64, l: f64) -> Result<Self> {
        if !(mu > 0.0) || !(l >= mu) {
            return Err(Error::invalid(format!(
                "constants need 0 < mu <= L (mu={mu}, L={l})"
            )));
        }
        Ok(ProblemConstants {
            mu,
            l,
            kappa: l / mu,
            noise: None,
            w_star: None,
            f_star: None,
        })
    }

    pub fn with_optimum(mut self, w_star: Vec<f64>, f_star: f64, noise: f64) -> Self {
        self.w_star = Some(w_star);
        self.f_star = Some(f_star);
        self.noise = Some(noise);
        self
    }
}

/// Settings for [`Objective::solve_reference`].
#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_dim(w: &[f64], dim: usize) -> Result<()> {
    if w.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: w.len(),
        });
    }
    Ok(())
}

impl Objective {
    pub fn new(loss: Loss, data: Dataset, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Objective {
            loss,
            data,
            lambda,
            scope: RegScope::default(),
        })
    }

    pub fn with_scope(mut self, scope: RegScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn scope(&self) -> RegScope {
        self.scope
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    fn data_loss(&self, e: &Example, margin: f64) -> f64 {
        match self.loss {
            Loss::Logistic => log1p_exp(-e.label * margin),
            Loss::LeastSquares => {
                let r = margin - e.label;
                r * r
            }
        }
    }

    /// Derivative of the data term with respect to the margin `⟨x, w⟩`.
    fn data_slope(&self, e: &Example, margin: f64) -> f64 {
        match self.loss {
            Loss::Logistic => -e.label * sigmoid(-e.label * margin),
            Loss::LeastSquares => 2.0 * (margin - e.label),
        }
    }

    /// `f_i(w)` including this objective's share of the penalty.
    pub fn component_value(&self, w: &[f64], i: usize) -> Result<f64> {
        check_dim(w, self.dim())?;
        let e = self.data.example(i);
        let reg = match self.scope {
            RegScope::Dense => w.iter().map(|v| v * v).sum::<f64>(),
            RegScope::Support => e.indices.iter().map(|&j| w[j] * w[j]).sum(),
        };
        Ok(self.data_loss(e, e.dot(w)) + 0.5 * self.lambda * reg)
    }

    /// `F(w) = (1/n) Σ f_i(w)`.
    pub fn full_objective(&self, w: &[f64]) -> Result<f64> {
        check_dim(w, self.dim())?;
        let n = self.n() as f64;
        let data: f64 = self
            .data
            .examples()
            .iter()
            .map(|e| self.data_loss(e, e.dot(w)))
            .sum::<f64>()
            / n;
        let reg = match self.scope {
            RegScope::Dense => w.iter().map(|v| v * v).sum::<f64>(),
            RegScope::Support => {
                self.data
                    .examples()
                    .iter()
                    .map(|e| e.indices.iter().map(|&j| w[j] * w[j]).sum::<f64>())
                    .sum::<f64>()
                    / n
            }
        };
        Ok(data + 0.5 * self.lambda * reg)
    }

    /// Dense `∇f_i(w)`.
    pub fn component_grad(&self, w: &[f64], i: usize) -> Result<Vec<f64>> {
        check_dim(w, self.dim())?;
        let e = self.data.example(i);
        let s = self.data_slope(e, e.dot(w));
        let mut g = match self.scope {
            RegScope::Dense => w.iter().map(|v| self.lambda * v).collect(),
            RegScope::Support => {
                let mut g = vec![0.0; self.dim()];
                for &j in &e.indices {
                    g[j] = self.lambda * w[j];
                }
                g
            }
        };
        for (j, x) in e.iter() {
            g[j] += s * x;
        }
        Ok(g)
    }

    /// The gradient the update engines apply: data term plus the penalty,
    /// listed on every coordinate the component can touch. Under
    /// `RegScope::Support` that is `support(x_i)`; under `RegScope::Dense`
    /// with `λ > 0` it is every coordinate.
    ///
    /// Only the coordinates of `w` inside that set are read, so callers may
    /// pass a partially materialized read vector.
    pub fn sparse_grad(&self, w: &[f64], i: usize) -> SparseVec {
        let e = self.data.example(i);
        let s = self.data_slope(e, e.dot(w));
        if self.scope == RegScope::Dense && self.lambda > 0.0 {
            let mut values: Vec<f64> = w.iter().map(|v| self.lambda * v).collect();
            for (j, x) in e.iter() {
                values[j] += s * x;
            }
            return SparseVec {
                indices: (0..self.dim()).collect(),
                values,
            };
        }
        let values = e
            .iter()
            .map(|(j, x)| s * x + self.lambda * w[j])
            .collect();
        SparseVec {
            indices: e.indices.clone(),
            values,
        }
    }

    /// Coordinates `sparse_grad` reads from and writes to for example `i`.
    pub fn grad_support(&self, i: usize) -> GradSupport<'_> {
        if self.scope == RegScope::Dense && self.lambda > 0.0 {
            GradSupport::All(self.dim())
        } else {
            GradSupport::Sparse(&self.data.example(i).indices)
        }
    }

    /// Average of the component gradients over `batch` (indices may repeat).
    pub fn batch_grad(&self, w: &[f64], batch: &[usize]) -> Result<SparseVec> {
        check_dim(w, self.dim())?;
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let dim = self.dim();
        let mut acc = vec![0.0; dim];
        let mut touched = vec![false; dim];
        for &i in batch {
            if i >= self.n() {
                return Err(Error::invalid(format!("example index {i} out of range")));
            }
            let g = self.sparse_grad(w, i);
            for (&j, &v) in g.indices.iter().zip(&g.values) {
                acc[j] += v;
                touched[j] = true;
            }
        }
        let k = batch.len() as f64;
        let indices: Vec<usize> = (0..dim).filter(|&j| touched[j]).collect();
        let values = indices.iter().map(|&j| acc[j] / k).collect();
        Ok(SparseVec { indices, values })
    }

    /// `∇F(w)`.
    pub fn full_grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_dim(w, self.dim())?;
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.n() {
            let gi = self.sparse_grad(w, i);
            for (&j, &v) in gi.indices.iter().zip(&gi.values) {
                g[j] += v;
            }
        }
        let n = self.n() as f64;
        for v in &mut g {
            *v /= n;
        }
        Ok(g)
    }

    /// Componentwise smoothness bound: `max_i ‖x_i‖²/4 + λ` (logistic) or
    /// `max_i 2‖x_i‖² + λ` (least squares).
    pub fn estimate_l(&self) -> f64 {
        let max_sq = self
            .data
            .examples()
            .iter()
            .map(Example::norm_sq)
            .fold(0.0, f64::max);
        let curvature = match self.loss {
            Loss::Logistic => max_sq / 4.0,
            Loss::LeastSquares => 2.0 * max_sq,
        };
        curvature + self.lambda
    }

    /// Certified strong-convexity constant from the penalty alone.
    ///
    /// Dense scope gives `μ = λ`. Support scope gives `λ · min_j p_j`, where
    /// `p_j` is the fraction of examples whose support contains `j`, taken
    /// over coordinates that appear at least once (the others are never
    /// touched and stay at their initial value).
    pub fn estimate_mu(&self) -> Result<f64> {
        if self.lambda <= 0.0 {
            return Err(Error::NotStronglyConvex(
                "lambda = 0 gives no certified curvature".into(),
            ));
        }
        match self.scope {
            RegScope::Dense => Ok(self.lambda),
            RegScope::Support => {
                let counts = self.coordinate_counts();
                let min = counts.iter().copied().filter(|&c| c > 0).min();
                match min {
                    Some(c) => Ok(self.lambda * c as f64 / self.n() as f64),
                    None => Err(Error::NotStronglyConvex("no feature appears".into())),
                }
            }
        }
    }

    pub(crate) fn coordinate_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.dim()];
        for e in self.data.examples() {
            for &j in &e.indices {
                counts[j] += 1;
            }
        }
        counts
    }

    /// Upper estimate of the largest eigenvalue of `(1/n) Σ x_i x_iᵀ` by power
    /// iteration.
    fn gram_top_eig(&self) -> f64 {
        let dim = self.dim();
        let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
        let mut eig = 0.0;
        for _ in 0..200 {
            let mut next = vec![0.0; dim];
            for e in self.data.examples() {
                let z = e.dot(&v);
                for (j, x) in e.iter() {
                    next[j] += z * x;
                }
            }
            for x in &mut next {
                *x /= self.n() as f64;
            }
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            eig = norm;
            for (a, b) in v.iter_mut().zip(&next) {
                *a = b / norm;
            }
        }
        eig
    }

    /// Deterministic accelerated gradient descent with gradient-based restart
    /// until `‖∇F(w)‖ ≤ tol`, starting from zero.
    pub fn solve_reference(&self, settings: SolverSettings) -> Result<(Vec<f64>, f64)> {
        let dim = self.dim();
        let curvature = match self.loss {
            Loss::Logistic => 0.25,
            Loss::LeastSquares => 2.0,
        };
        let lf = (curvature * self.gram_top_eig() * 1.05 + self.lambda).max(1e-12);
        let step = 1.0 / lf;

        let mut x = vec![0.0; dim];
        let mut y = x.clone();
        let mut theta = 1.0_f64;
        let mut best = x.clone();
        let mut best_norm = f64::INFINITY;

        for iter in 0..settings.max_iter {
            let gx = self.full_grad(&x)?;
            let gnorm = gx.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !gnorm.is_finite() {
                break;
            }
            if gnorm < best_norm {
                best_norm = gnorm;
                best.clone_from(&x);
            }
            if gnorm <= settings.tol {
                let f = self.full_objective(&x)?;
                return Ok((x, f));
            }
            let gy = if iter == 0 { gx } else { self.full_grad(&y)? };
            let next: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - step * g).collect();
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_next;
            // restart when the momentum direction opposes descent
            let restart = gy
                .iter()
                .zip(next.iter().zip(&x))
                .map(|(g, (a, b))| g * (a - b))
                .sum::<f64>()
                > 0.0;
            if restart {
                theta = 1.0;
                y.clone_from(&next);
            } else {
                y = next
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| a + beta * (a - b))
                    .collect();
                theta = theta_next;
            }
            x = next;
        }
        Err(Error::NoConvergence {
            iterations: settings.max_iter,
            grad_norm: best_norm,
            best,
        })
    }

    /// `N = (2/n) Σ_i ‖∇f_i(w∗)‖²`.
    pub fn estimate_noise(&self, w_star: &[f64]) -> Result<f64> {
        check_dim(w_star, self.dim())?;
        let total: f64 = (0..self.n())
            .map(|i| self.sparse_grad(w_star, i).norm_sq())
            .sum();
        Ok(2.0 * total / self.n() as f64)
    }

    /// μ, L and the optimum-dependent constants in one go.
    pub fn constants(&self, settings: SolverSettings) -> Result<ProblemConstants> {
        let mu = self.estimate_mu()?;
        let l = self.estimate_l();
        let (w_star, f_star) = self.solve_reference(settings)?;
        let noise = self.estimate_noise(&w_star)?;
        Ok(ProblemConstants::new(mu, l)?.with_optimum(w_star, f_star, noise))
    }
}

/// Coordinate set touched by one component gradient.
#[derive(Debug, Clone, Copy)]
pub enum GradSupport<'a> {
    All(usize),
    Sparse(&'a [usize]),
}

impl GradSupport<'_> {
    pub fn len(&self) -> usize {
        match self {
            GradSupport::All(d) => *d,
            GradSupport::Sparse(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn for_each(&self, mut f: impl FnMut(usize)) {
        match self {
            GradSupport::All(d) => (0..*d).for_each(f),
            GradSupport::Sparse(s) => s.iter().for_each(|&j| f(j)),
        }
    }
}
