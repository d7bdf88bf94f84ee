//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a flat `Float64Array` of rows; the row layout is
//! given on each function. The plain Rust functions underneath are what the
//! native tests call.

use std::sync::OnceLock;

use hogwild_core::engine::{run_delay_sim, MaskPolicy, RunSpec};
use hogwild_core::harness::{self, SparseLogisticSpec};
use hogwild_core::objectives::{Loss, Objective, ProblemConstants, SolverSettings};
use hogwild_core::schedules::{hogwild_schedule, power_schedule, AlphaRule};
use hogwild_core::theory::{c_of_t, log_grid, n_of_t, HogwildBound, Theorem2Bound};
use hogwild_core::Error;
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Rows `[t, theorem2, hogwild]` on a log grid from 1 to `t_max`.
#[allow(clippy::too_many_arguments)]
pub fn bound_rows(
    mu: f64,
    l: f64,
    noise: f64,
    d: f64,
    alpha: f64,
    dist0: f64,
    t_max: f64,
    points: usize,
) -> Result<Vec<f64>, Error> {
    if !(mu > 0.0 && l >= mu && noise >= 0.0 && d >= 1.0 && alpha >= 4.0 && t_max >= 1.0) {
        return Err(Error::InvalidArgument(
            "need 0 < mu <= L, N >= 0, D >= 1, alpha >= 4, t_max >= 1".into(),
        ));
    }
    let sgd = Theorem2Bound {
        mu,
        l,
        noise,
        w0_dist_sq: dist0,
    };
    let hog = HogwildBound {
        alpha,
        mu,
        noise,
        d,
        e: 4.0 * l * alpha * d / mu,
    };
    Ok(log_grid(1.0, t_max, points.max(2))
        .into_iter()
        .flat_map(|t| [t, sgd.eval(t), hog.eval(t)])
        .collect())
}

/// Rows `[t, C_1, n_1, C_2, n_2, …]` for `η_t = 1/(K+t)^q`, `K = (2L)^{1/q}`,
/// one pair per entry of `qs`, with `μ = 1`.
pub fn race_rows(qs: &[f64], l: f64, t_max: f64, points: usize) -> Result<Vec<f64>, Error> {
    let schedules = qs
        .iter()
        .map(|&q| power_schedule(q, (2.0 * l).powf(1.0 / q), l))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for t in log_grid(1.0, t_max, points.max(2)) {
        out.push(t);
        for s in &schedules {
            out.push(c_of_t(s, 1.0, t)?);
            out.push(n_of_t(s, 1.0, t));
        }
    }
    Ok(out)
}

struct DemoProblem {
    objective: Objective,
    constants: ProblemConstants,
}

fn demo_problem() -> Result<&'static DemoProblem, Error> {
    static PROBLEM: OnceLock<Result<DemoProblem, String>> = OnceLock::new();
    let p = PROBLEM.get_or_init(|| {
        let build = || -> Result<DemoProblem, Error> {
            let ds = harness::sparse_logistic_dataset(&SparseLogisticSpec {
                n: 1000,
                dim: 20,
                nnz: 10,
                norm_sq: 0.05,
                flip: 0.1,
                seed: 1,
            })?;
            let objective = Objective::new(Loss::Logistic, ds, 1e-3)?;
            let constants = objective.constants(SolverSettings::default())?;
            Ok(DemoProblem { objective, constants })
        };
        build().map_err(|e| e.to_string())
    });
    p.as_ref().map_err(|e| Error::Config(e.clone()))
}

/// Delay simulation on a fixed 1000-example sparse logistic problem. Rows
/// `[epoch, F(w_t), ‖w_t − w∗‖²]`, ten per epoch.
pub fn delay_rows(tau: u32, d: u32, mask_p: f64, epochs: u32, seed: u64) -> Result<Vec<f64>, Error> {
    if !(0.0..=1.0).contains(&mask_p) || d == 0 || epochs == 0 || epochs > 200 {
        return Err(Error::InvalidArgument(
            "need mask_p in [0, 1], D >= 1 and 1 <= epochs <= 200".into(),
        ));
    }
    let p = demo_problem()?;
    let c = &p.constants;
    let n = p.objective.n();
    let schedule = hogwild_schedule(c.mu, c.l, d as usize, tau as u64, 4.0, AlphaRule::Constant(4.0), false)?;
    let mut spec = RunSpec::new(&p.objective, schedule, epochs as u64 * n as u64, seed);
    spec.filter = hogwild_core::engine::FilterMode::Partition(d as usize);
    spec.record_every = (n / 10) as u64;
    spec.w_star = c.w_star.as_deref();
    spec.wall_time = false;
    let trace = run_delay_sim(&spec, tau as u64, MaskPolicy::Bernoulli(mask_p))?;
    Ok(trace
        .rows
        .iter()
        .flat_map(|r| [r.t as f64 / n as f64, r.loss, r.dist_sq.unwrap_or(f64::NAN)])
        .collect())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn bound_curves(
    mu: f64,
    l: f64,
    noise: f64,
    d: f64,
    alpha: f64,
    dist0: f64,
    t_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsValue> {
    bound_rows(mu, l, noise, d, alpha, dist0, t_max, points).map_err(js)
}

#[wasm_bindgen]
pub fn schedule_race(qs: &[f64], l: f64, t_max: f64, points: usize) -> Result<Vec<f64>, JsValue> {
    race_rows(qs, l, t_max, points).map_err(js)
}

#[wasm_bindgen]
pub fn delay_sim_curve(tau: u32, d: u32, mask_p: f64, epochs: u32, seed: u32) -> Result<Vec<f64>, JsValue> {
    delay_rows(tau, d, mask_p, epochs, seed as u64).map_err(js)
}
