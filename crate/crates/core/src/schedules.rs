//! Diminishing step-size families.
//!
//! A [`StepSchedule`] is an immutable value; `eta(t)` is a pure function of
//! the schedule and the iteration index (starting at 0), so parallel workers
//! evaluate it without coordination. Every constructor checks the admissible
//! initial step of its convergence result and records it as `cap`.

use crate::error::{Error, Result};

/// How `α_t` is chosen for the `α_t / (μ(t + E))` family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    Constant(f64),
    /// `α_t = 4(t + E) / 2^h` for `t + E ∈ [2^h, 2^{h+1})`, i.e. a step that is
    /// constant on dyadic blocks.
    Stepped,
}

/// Delay as a function of the iteration index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauGrowth {
    Constant(u64),
    /// `max(floor, ⌊√(t·L(t))⌋)` with `L(t) = 1/ln t − 1/(ln t)²`, evaluated
    /// at `t = 3` for smaller `t`.
    SqrtLog { floor: u64 },
}

impl TauGrowth {
    pub fn tau(&self, t: u64) -> u64 {
        match *self {
            TauGrowth::Constant(tau) => tau,
            TauGrowth::SqrtLog { floor } => floor.max(sqrt_log_tau(t.max(3) as f64) as u64),
        }
    }

    fn tau_real(&self, t: f64) -> f64 {
        match *self {
            TauGrowth::Constant(tau) => tau as f64,
            TauGrowth::SqrtLog { floor } => (floor as f64).max(sqrt_log_tau(t.max(3.0))),
        }
    }
}

/// `⌊√(t·L(t))⌋` for `t ≥ 3`.
pub fn sqrt_log_tau(t: f64) -> f64 {
    let ln = t.ln();
    let l = 1.0 / ln - 1.0 / (ln * ln);
    (t * l).sqrt().floor()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `η₀ t₀ / (t₀ + t)`
    Classic { eta0: f64, t0: f64 },
    /// `α / (μ(t + E))`, `E = 2αL/μ`
    TheoremSgd { alpha: f64, mu: f64, e: f64 },
    /// `α_t / (μ(t + E))`, `E = max{2τ, 4LαD/μ}`
    HogwildExpected { mu: f64, e: f64, alpha_t: AlphaRule },
    /// `1 / (L D (2 + β)(k + t))`
    HogwildAs { ld: f64, beta: f64, k: f64 },
    /// `1 / (K + t)^q`
    Power { q: f64, k: f64 },
    /// `4 / (μ 2^h)` for `t + E ∈ [2^h, 2^{h+1})`
    Stepped { mu: f64, e: f64 },
    Constant { eta: f64 },
    /// `α / (μ(t + 2τ(t)))`
    GrowingTau { mu: f64, alpha: f64, tau: TauGrowth },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    family: Family,
    cap: f64,
}

fn dyadic_floor(x: f64) -> f64 {
    x.log2().floor().exp2()
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Schedule(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Replaces `L` by `Lκ` when component functions may be non-convex.
fn effective_l(mu: f64, l: f64, nonconvex: bool) -> f64 {
    if nonconvex {
        l * l / mu
    } else {
        l
    }
}

impl StepSchedule {
    fn checked(family: Family, cap: f64) -> Result<Self> {
        let s = StepSchedule { family, cap };
        let eta0 = s.eta(0);
        if !(eta0 > 0.0) || !eta0.is_finite() {
            return Err(Error::Schedule(format!("initial step {eta0} is not positive")));
        }
        // relative slack for the closed forms that hit the cap exactly
        if eta0 > cap * (1.0 + 1e-12) {
            return Err(Error::Schedule(format!(
                "initial step {eta0} exceeds admissible cap {cap}"
            )));
        }
        Ok(s)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// Step size at iteration `t`.
    pub fn eta(&self, t: u64) -> f64 {
        self.eta_real(t as f64)
    }

    /// Continuous extension of the same closed form to a real argument.
    pub fn eta_real(&self, t: f64) -> f64 {
        match self.family {
            Family::Classic { eta0, t0 } => eta0 * t0 / (t0 + t),
            Family::TheoremSgd { alpha, mu, e } => alpha / (mu * (t + e)),
            Family::HogwildExpected { mu, e, alpha_t } => match alpha_t {
                AlphaRule::Constant(a) => a / (mu * (t + e)),
                AlphaRule::Stepped => 4.0 / (mu * dyadic_floor(t + e)),
            },
            Family::HogwildAs { ld, beta, k } => 1.0 / (ld * (2.0 + beta) * (k + t)),
            Family::Power { q, k } => (k + t).powf(-q),
            Family::Stepped { mu, e } => 4.0 / (mu * dyadic_floor(t + e)),
            Family::Constant { eta } => eta,
            Family::GrowingTau { mu, alpha, tau } => {
                alpha / (mu * (t + 2.0 * tau.tau_real(t)))
            }
        }
    }

    /// The offset `E` of the `α/(μ(t+E))` families at iteration `t`.
    pub fn offset(&self, t: u64) -> Option<f64> {
        match self.family {
            Family::TheoremSgd { e, .. }
            | Family::HogwildExpected { e, .. }
            | Family::Stepped { e, .. } => Some(e),
            Family::GrowingTau { tau, .. } => Some(2.0 * tau.tau(t) as f64),
            _ => None,
        }
    }

    /// `α_t` for the families of the form `α_t / (μ(t + E))`.
    pub fn alpha_at(&self, t: u64) -> Option<f64> {
        let tf = t as f64;
        match self.family {
            Family::TheoremSgd { alpha, .. } => Some(alpha),
            Family::HogwildExpected { mu, e, .. } | Family::Stepped { mu, e } => {
                Some(self.eta(t) * mu * (tf + e))
            }
            Family::GrowingTau { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Closed form of `∫₀ᵗ η(x) dx` where one exists.
    pub fn integral(&self, t: f64) -> Option<f64> {
        match self.family {
            Family::Classic { eta0, t0 } => Some(eta0 * t0 * ((t0 + t) / t0).ln()),
            Family::TheoremSgd { alpha, mu, e } => Some(alpha / mu * ((t + e) / e).ln()),
            Family::HogwildExpected {
                mu,
                e,
                alpha_t: AlphaRule::Constant(a),
            } => Some(a / mu * ((t + e) / e).ln()),
            Family::HogwildAs { ld, beta, k } => Some(((k + t) / k).ln() / (ld * (2.0 + beta))),
            Family::Power { q, k } => {
                if (q - 1.0).abs() < 1e-15 {
                    Some(((k + t) / k).ln())
                } else {
                    Some(((k + t).powf(1.0 - q) - k.powf(1.0 - q)) / (1.0 - q))
                }
            }
            Family::Constant { eta } => Some(eta * t),
            _ => None,
        }
    }
}

/// `η_t = η₀ t₀/(t₀ + t)`; the admissible cap is `1/(2L)`.
pub fn classic_schedule(eta0: f64, t0: f64, l: f64) -> Result<StepSchedule> {
    positive("eta0", eta0)?;
    positive("t0", t0)?;
    positive("L", l)?;
    StepSchedule::checked(Family::Classic { eta0, t0 }, 1.0 / (2.0 * l))
}

/// `η_t = α/(μ(t+E))` with `E = 2αL/μ`, so that `η₀ = 1/(2L)`.
pub fn theorem_sgd_schedule(mu: f64, l: f64, alpha: f64, nonconvex: bool) -> Result<StepSchedule> {
    positive("mu", mu)?;
    positive("L", l)?;
    if l < mu {
        return Err(Error::Schedule(format!("need L >= mu (L={l}, mu={mu})")));
    }
    if !(alpha >= 2.0) {
        return Err(Error::Schedule(format!("alpha must be >= 2, got {alpha}")));
    }
    let l = effective_l(mu, l, nonconvex);
    let e = 2.0 * alpha * l / mu;
    StepSchedule::checked(Family::TheoremSgd { alpha, mu, e }, 1.0 / (2.0 * l))
}

/// `η_t = α_t/(μ(t+E))` with `E = max{2τ, 4LαD/μ}` and `4 ≤ α_t ≤ α`.
pub fn hogwild_schedule(
    mu: f64,
    l: f64,
    d: usize,
    tau: u64,
    alpha: f64,
    alpha_t: AlphaRule,
    nonconvex: bool,
) -> Result<StepSchedule> {
    positive("mu", mu)?;
    positive("L", l)?;
    if d == 0 {
        return Err(Error::Schedule("D must be >= 1".into()));
    }
    if !(alpha >= 4.0) {
        return Err(Error::Schedule(format!("alpha must be >= 4, got {alpha}")));
    }
    match alpha_t {
        AlphaRule::Constant(a) if !(4.0..=alpha).contains(&a) => {
            return Err(Error::Schedule(format!("alpha_t = {a} outside [4, {alpha}]")));
        }
        AlphaRule::Stepped if alpha < 8.0 => {
            return Err(Error::Schedule(
                "stepped alpha_t ranges over [4, 8); alpha must be >= 8".into(),
            ));
        }
        _ => {}
    }
    let l = effective_l(mu, l, nonconvex);
    let d = d as f64;
    let e = (2.0 * tau as f64).max(4.0 * l * alpha * d / mu);
    StepSchedule::checked(
        Family::HogwildExpected { mu, e, alpha_t },
        1.0 / (4.0 * l * d),
    )
}

/// `η_t = 1/(LD(2+β)(k+t))` with `k ≥ 3τ`; requires `η₀ < 1/(4LD)`.
pub fn hogwild_as_schedule(
    mu: f64,
    l: f64,
    d: usize,
    beta: f64,
    k_offset: f64,
    tau: u64,
    nonconvex: bool,
) -> Result<StepSchedule> {
    positive("L", l)?;
    positive("beta", beta)?;
    if d == 0 {
        return Err(Error::Schedule("D must be >= 1".into()));
    }
    if k_offset < 3.0 * tau as f64 {
        return Err(Error::Schedule(format!(
            "k_offset = {k_offset} must be >= 3*tau = {}",
            3 * tau
        )));
    }
    if nonconvex {
        positive("mu", mu)?;
    }
    let ld = effective_l(mu, l, nonconvex) * d as f64;
    let cap = 1.0 / (4.0 * ld);
    let s = StepSchedule::checked(Family::HogwildAs { ld, beta, k: k_offset }, cap)?;
    if s.eta(0) >= cap {
        return Err(Error::Schedule(format!(
            "eta_0 = {} must be strictly below 1/(4LD) = {cap}; increase k_offset",
            s.eta(0)
        )));
    }
    Ok(s)
}

/// `η_t = 1/(K+t)^q` with `K^{-q} ≤ 1/(2L)`.
pub fn power_schedule(q: f64, k: f64, l: f64) -> Result<StepSchedule> {
    positive("q", q)?;
    positive("K", k)?;
    positive("L", l)?;
    StepSchedule::checked(Family::Power { q, k }, 1.0 / (2.0 * l))
}

/// `η_t = 4/(μ 2^h)` for `t+E ∈ [2^h, 2^{h+1})`.
pub fn stepped_schedule(mu: f64, e: f64) -> Result<StepSchedule> {
    positive("mu", mu)?;
    if !(e >= 1.0) {
        return Err(Error::Schedule(format!("E must be >= 1, got {e}")));
    }
    StepSchedule::checked(Family::Stepped { mu, e }, f64::INFINITY)
}

/// Fixed step; `cap` is whatever the caller certifies (use infinity for none).
pub fn constant_schedule(eta: f64, cap: f64) -> Result<StepSchedule> {
    positive("eta", eta)?;
    StepSchedule::checked(Family::Constant { eta }, cap)
}

/// `η_t = α/(μ(t + 2τ(t)))` with `α ≥ 12` for a delay that grows with `t`.
///
/// The floor of `tau` is raised to `⌈2LαD/μ⌉` so that `2τ(t)` always
/// dominates `4LαD/μ`.
pub fn growing_tau_schedule(
    mu: f64,
    l: f64,
    d: usize,
    alpha: f64,
    tau: TauGrowth,
) -> Result<StepSchedule> {
    positive("mu", mu)?;
    positive("L", l)?;
    if !(alpha >= 12.0) {
        return Err(Error::Schedule(format!("alpha must be >= 12, got {alpha}")));
    }
    if d == 0 {
        return Err(Error::Schedule("D must be >= 1".into()));
    }
    let min_tau = (2.0 * l * alpha * d as f64 / mu).ceil() as u64;
    let tau = match tau {
        TauGrowth::Constant(t) => TauGrowth::Constant(t.max(min_tau)),
        TauGrowth::SqrtLog { floor } => TauGrowth::SqrtLog {
            floor: floor.max(min_tau),
        },
    };
    StepSchedule::checked(
        Family::GrowingTau { mu, alpha, tau },
        1.0 / (4.0 * l * d as f64),
    )
}
