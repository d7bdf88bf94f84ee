//! Closed-form quantities from the convergence results: sparsity statistics,
//! expected-error bounds, thresholds, and the large-stepsize integrals
//! `M(t) = ∫₀ᵗ n(x) dx` and `C(t) = e^{−M(t)} ∫₀ᵗ e^{M(x)} n(x)² dx` with
//! `n(t) = μ η_t`.

pub mod quadrature;

use crate::data::Dataset;
use crate::engine::Trace;
use crate::error::{Error, Result};
use crate::schedules::{AlphaRule, Family, StepSchedule};

pub use quadrature::{integrate, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityStats {
    /// `Δ̄ = max_ξ |D_ξ|`
    pub delta_bar: usize,
    /// `Δ̄_D = D · E⌈|D_ξ|/D⌉`
    pub delta_bar_d: f64,
    /// `Δ = max_i P(i ∈ D_ξ)`
    pub collision: f64,
    /// `E|D_ξ|`
    pub mean_support: f64,
    /// Exact expected writes per iteration of the partition filter,
    /// `E[|D_ξ| / min(D, |D_ξ|)]`.
    pub writes_per_iter: f64,
    pub d: usize,
}

impl SparsityStats {
    pub fn from_supports<'s>(
        supports: impl IntoIterator<Item = &'s [usize]>,
        dim: usize,
        d: usize,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("D must be >= 1"));
        }
        let mut counts = vec![0usize; dim];
        let mut n = 0usize;
        let mut delta_bar = 0usize;
        let mut ceil_sum = 0usize;
        let mut len_sum = 0usize;
        let mut writes = 0.0;
        for s in supports {
            n += 1;
            delta_bar = delta_bar.max(s.len());
            ceil_sum += s.len().div_ceil(d);
            len_sum += s.len();
            if !s.is_empty() {
                writes += s.len() as f64 / d.min(s.len()) as f64;
            }
            for &j in s {
                counts[j] += 1;
            }
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let nf = n as f64;
        Ok(SparsityStats {
            delta_bar,
            delta_bar_d: d as f64 * ceil_sum as f64 / nf,
            collision: counts.iter().copied().max().unwrap_or(0) as f64 / nf,
            mean_support: len_sum as f64 / nf,
            writes_per_iter: writes / nf,
            d,
        })
    }

    pub fn of_dataset(data: &Dataset, d: usize) -> Result<Self> {
        Self::from_supports(data.examples().iter().map(|e| e.support()), data.dim(), d)
    }
}

/// Expected-error bound for plain SGD with `η_t = 2/(μ(t+E))`, `E = 4L/μ`:
/// `16N/μ² · 1/(t − T + E)` for `t ≥ T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Bound {
    pub mu: f64,
    pub l: f64,
    pub noise: f64,
    pub w0_dist_sq: f64,
}

impl Theorem2Bound {
    pub const ALPHA: f64 = 2.0;

    pub fn offset(&self) -> f64 {
        4.0 * self.l / self.mu
    }

    /// `T = (4L/μ) max{(Lμ/N)‖w₀ − w∗‖², 1} − 4L/μ`.
    pub fn start(&self) -> f64 {
        let e = self.offset();
        if self.noise == 0.0 {
            return if self.w0_dist_sq == 0.0 { 0.0 } else { f64::INFINITY };
        }
        e * (self.l * self.mu / self.noise * self.w0_dist_sq).max(1.0) - e
    }

    /// The bound at `t`; for `t < T` the value at `T` is returned.
    pub fn eval(&self, t: f64) -> f64 {
        if self.noise == 0.0 {
            return 0.0;
        }
        let start = self.start();
        let t = t.max(start);
        4.0 * Self::ALPHA * Self::ALPHA * self.noise / (self.mu * self.mu) / (t - start + self.offset())
    }
}

pub fn theorem2_bound(t: f64, mu: f64, l: f64, noise: f64, w0_dist_sq: f64) -> f64 {
    Theorem2Bound { mu, l, noise, w0_dist_sq }.eval(t)
}

/// Leading term `4α²DN/μ² · t/(t+E−1)²` of the asynchronous bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HogwildBound {
    pub alpha: f64,
    pub mu: f64,
    pub noise: f64,
    pub d: f64,
    pub e: f64,
}

impl HogwildBound {
    pub fn eval(&self, t: f64) -> f64 {
        let s = t + self.e - 1.0;
        4.0 * self.alpha * self.alpha * self.d * self.noise / (self.mu * self.mu) * t / (s * s)
    }

    /// `c · ln t / (t+E−1)²`, the shape of the higher-order remainder. The
    /// constant `c` is a fit parameter.
    pub fn remainder(&self, t: f64, c: f64) -> f64 {
        let s = t + self.e - 1.0;
        c * t.max(1.0).ln() / (s * s)
    }
}

pub fn hogwild_bound(t: f64, alpha: f64, mu: f64, noise: f64, d: f64, e: f64) -> f64 {
    HogwildBound { alpha, mu, noise, d, e }.eval(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundCurve {
    Sgd(Theorem2Bound),
    Hogwild(HogwildBound),
}

impl BoundCurve {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            BoundCurve::Sgd(b) => b.eval(t),
            BoundCurve::Hogwild(b) => b.eval(t),
        }
    }
}

/// `(T₀, T₁)` with `T₀ = exp[2√Δ(1 + (L+μ)α/μ)]` and
/// `T₁ = μ²/(α²ND) ‖w₀ − w∗‖²`.
pub fn thresholds(
    alpha: f64,
    mu: f64,
    l: f64,
    noise: f64,
    d: f64,
    collision: f64,
    w0_dist_sq: f64,
) -> (f64, f64) {
    let t0 = (2.0 * collision.sqrt() * (1.0 + (l + mu) * alpha / mu)).exp();
    let t1 = if w0_dist_sq == 0.0 {
        0.0
    } else {
        mu * mu / (alpha * alpha * noise * d) * w0_dist_sq
    };
    (t0, t1)
}

/// Exact `∫₀ᵗ η(x) dx` for the dyadic-block families.
fn stepped_integral(mu: f64, e: f64, t: f64) -> f64 {
    // η = 4/(μ 2^h) on t + E ∈ [2^h, 2^{h+1})
    let mut total = 0.0;
    let mut x = e;
    let end = t + e;
    while x < end {
        let h = x.log2().floor();
        let block_end = h.exp2() * 2.0;
        let upper = block_end.min(end);
        total += (upper - x) * 4.0 / (mu * h.exp2());
        x = upper;
    }
    total
}

/// `M(t) = μ ∫₀ᵗ η(x) dx`, in closed form where available.
pub fn m_of_t(schedule: &StepSchedule, mu: f64, t: f64) -> Result<f64> {
    if let Some(v) = schedule.integral(t) {
        return Ok(mu * v);
    }
    match *schedule.family() {
        Family::Stepped { mu: m, e }
        | Family::HogwildExpected {
            mu: m,
            e,
            alpha_t: AlphaRule::Stepped,
        } => Ok(mu * stepped_integral(m, e, t)),
        _ => Ok(mu * integrate(|x| schedule.eta_real(x), 0.0, t, &[], Tolerance::default())?),
    }
}

/// `n(t) = μ η_t`.
pub fn n_of_t(schedule: &StepSchedule, mu: f64, t: f64) -> f64 {
    mu * schedule.eta_real(t)
}

/// `C(t) = ∫₀ᵗ exp(M(x) − M(t)) n(x)² dx`, accumulated with the exponent
/// already shifted so nothing overflows.
pub fn c_of_t(schedule: &StepSchedule, mu: f64, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let mt = m_of_t(schedule, mu, t)?;
    // the integrand concentrates near x = t, so break geometrically towards it
    let breaks: Vec<f64> = (1..60).map(|k| t - t * 0.5f64.powi(k)).collect();
    let integrand = |x: f64| -> f64 {
        let n = n_of_t(schedule, mu, x);
        match m_of_t(schedule, mu, x) {
            Ok(m) => (m - mt).exp() * n * n,
            Err(_) => f64::NAN,
        }
    };
    let tol = Tolerance {
        abs: 1e-9 * n_of_t(schedule, mu, t).min(1.0) * 1e-3,
        rel: 1e-10,
        max_intervals: 20_000,
    };
    integrate(integrand, 0.0, t, &breaks, tol)
}

/// Points of the grid where `C − n` changes sign (first grid point after the
/// change).
pub fn crossings(schedule: &StepSchedule, mu: f64, grid: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut prev: Option<bool> = None;
    for &t in grid {
        let above = c_of_t(schedule, mu, t)? > n_of_t(schedule, mu, t);
        if prev.is_some_and(|p| p != above) {
            out.push(t);
        }
        prev = Some(above);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaceRow {
    pub t: f64,
    pub c: Vec<f64>,
    pub n: Vec<f64>,
    /// Index of the schedule with the smallest `C(t)`.
    pub winner: usize,
}

/// Evaluates `C(t)` of every schedule on the grid and names the smallest.
pub fn schedule_race(schedules: &[StepSchedule], mu: f64, grid: &[f64]) -> Result<Vec<RaceRow>> {
    if schedules.is_empty() {
        return Err(Error::invalid("no schedules to race"));
    }
    grid.iter()
        .map(|&t| {
            let c = schedules
                .iter()
                .map(|s| c_of_t(s, mu, t))
                .collect::<Result<Vec<_>>>()?;
            let n = schedules.iter().map(|s| n_of_t(s, mu, t)).collect();
            let winner = c
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            Ok(RaceRow { t, c, n, winner })
        })
        .collect()
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| match k {
            0 => lo,
            k if k == points - 1 => hi,
            k => (a + (b - a) * k as f64 / (points - 1) as f64).exp(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateCount {
    pub t: u64,
    pub actual: u64,
    /// `t · Δ̄_D / D`.
    pub expected: f64,
    /// `t · E[|D_ξ|/d_ξ]`, the exact mean of the partition filter.
    pub exact_mean: f64,
}

/// Cumulative single-coordinate writes of a trace next to their expectations.
pub fn coordinate_update_count(trace: &Trace, stats: &SparsityStats) -> Vec<UpdateCount> {
    trace
        .rows
        .iter()
        .map(|r| UpdateCount {
            t: r.t,
            actual: r.t_prime,
            expected: r.t as f64 * stats.delta_bar_d / stats.d as f64,
            exact_mean: r.t as f64 * stats.writes_per_iter,
        })
        .collect()
}
