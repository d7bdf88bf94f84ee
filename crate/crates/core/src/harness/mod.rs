//! Config-driven experiment runs: problem setup, schedule construction,
//! multi-seed execution and aggregation.

pub mod config;
pub mod csv;
pub mod synthetic;

use std::path::Path;

pub use config::{parse_override, RunConfig};
pub use csv::{emit_csv, parse_csv, to_csv_string};
pub use synthetic::{
    least_squares_problem, sparse_logistic_dataset, LeastSquaresSpec, SparseLogisticSpec, SyntheticProblem,
    TwoFunction,
};

use config::{
    AlphaRuleKind, BoundKind, EngineKind, LossKind, MaskKind, SamplingKind, ScheduleKind, ScopeKind, SyntheticKind,
    TauGrowthKind,
};

use crate::data::load;
use crate::engine::{
    dist_sq, run_delay_sim, run_delay_sim_growing_tau, run_parallel, run_sequential, BatchSampling, FilterMode,
    MaskPolicy, RunSpec, SeqMode, Trace,
};
use crate::engine::seq::check_batch_cap;
use crate::error::{Error, Result};
use crate::objectives::{Loss, Objective, ProblemConstants, RegScope, SolverSettings};
use crate::schedules::{
    classic_schedule, constant_schedule, growing_tau_schedule, hogwild_as_schedule, hogwild_schedule,
    power_schedule, stepped_schedule, theorem_sgd_schedule, AlphaRule, StepSchedule, TauGrowth,
};
use crate::theory::{BoundCurve, HogwildBound, Theorem2Bound};

/// An objective with its constants (and `w∗`, `N` when solved).
#[derive(Debug, Clone)]
pub struct Problem {
    pub objective: Objective,
    pub constants: ProblemConstants,
}

/// Loads or generates the problem and computes its constants.
pub fn prepare_problem(cfg: &RunConfig) -> Result<Problem> {
    let loss = match cfg.objective {
        LossKind::Logistic => Loss::Logistic,
        LossKind::LeastSquares => Loss::LeastSquares,
    };
    let scope = match cfg.reg_scope {
        ScopeKind::Support => RegScope::Support,
        ScopeKind::Dense => RegScope::Dense,
    };
    let data = match (&cfg.dataset, cfg.synthetic) {
        (_, Some(SyntheticKind::LeastSquares)) => {
            if cfg.lambda.is_some_and(|l| l != 0.0) {
                return Err(Error::Config("synthetic least_squares has lambda = 0".into()));
            }
            let p = least_squares_problem(&LeastSquaresSpec {
                dim: cfg.syn_dim,
                mu: cfg.syn_mu,
                l: cfg.syn_l,
                delta: cfg.syn_delta,
                rotate: cfg.syn_rotate,
                seed: cfg.syn_seed,
            })?;
            return Ok(Problem {
                objective: p.objective,
                constants: p.constants,
            });
        }
        (_, Some(SyntheticKind::SparseLogistic)) => sparse_logistic_dataset(&SparseLogisticSpec {
            n: cfg.syn_n,
            dim: cfg.syn_dim,
            nnz: cfg.syn_nnz,
            norm_sq: cfg.syn_norm_sq,
            flip: cfg.syn_flip,
            seed: cfg.syn_seed,
        })?,
        (Some(path), None) => load(Path::new(path), cfg.dim)?,
        (None, None) => return Err(Error::Config("no problem source".into())),
    };
    let data = match cfg.subsample {
        Some(m) => data.subsample(m, cfg.subsample_seed)?,
        None => data,
    };
    let lambda = cfg.lambda.unwrap_or(1.0 / data.n() as f64);
    let objective = Objective::new(loss, data, lambda)?.with_scope(scope);
    let constants = objective.constants(SolverSettings {
        tol: cfg.solver_tol,
        max_iter: cfg.solver_max_iter,
    })?;
    Ok(Problem { objective, constants })
}

fn tau_growth(cfg: &RunConfig) -> TauGrowth {
    match cfg.tau_growth {
        TauGrowthKind::Constant => TauGrowth::Constant(cfg.tau),
        TauGrowthKind::SqrtLog => TauGrowth::SqrtLog { floor: cfg.tau },
    }
}

fn mask_policy(cfg: &RunConfig) -> MaskPolicy {
    match cfg.mask {
        MaskKind::AllIn => MaskPolicy::AllIn,
        MaskKind::NoneIn => MaskPolicy::NoneIn,
        MaskKind::Bernoulli => MaskPolicy::Bernoulli(cfg.mask_p),
        MaskKind::Prefix => MaskPolicy::Prefix,
    }
}

fn hogwild_alpha(cfg: &RunConfig) -> f64 {
    match cfg.alpha_rule {
        AlphaRuleKind::Constant => cfg.alpha.unwrap_or(4.0),
        AlphaRuleKind::Stepped => cfg.alpha.unwrap_or(8.0),
    }
}

/// Builds the configured schedule from the problem constants and checks the
/// engine-specific cap.
pub fn build_schedule(cfg: &RunConfig, c: &ProblemConstants) -> Result<StepSchedule> {
    let (mu, l, d, tau) = (c.mu, c.l, cfg.d, cfg.tau);
    let s = match cfg.schedule {
        ScheduleKind::Classic => classic_schedule(cfg.eta0.unwrap_or(1.0 / (2.0 * l)), cfg.t0.unwrap_or(1.0), l)?,
        ScheduleKind::TheoremSgd => theorem_sgd_schedule(mu, l, cfg.alpha.unwrap_or(2.0), cfg.nonconvex)?,
        ScheduleKind::Hogwild => {
            let alpha = hogwild_alpha(cfg);
            let rule = match cfg.alpha_rule {
                AlphaRuleKind::Constant => AlphaRule::Constant(cfg.alpha_t.unwrap_or(alpha)),
                AlphaRuleKind::Stepped => AlphaRule::Stepped,
            };
            hogwild_schedule(mu, l, d, tau, alpha, rule, cfg.nonconvex)?
        }
        ScheduleKind::HogwildAs => {
            let beta = cfg.beta.unwrap_or(1.0);
            let k = cfg.k_offset.unwrap_or_else(|| (3.0 * tau as f64).max(4.0 / (2.0 + beta) + 1.0));
            hogwild_as_schedule(mu, l, d, beta, k, tau, cfg.nonconvex)?
        }
        ScheduleKind::Power => {
            let q = cfg.q.unwrap_or(1.0);
            power_schedule(q, cfg.k.unwrap_or_else(|| (2.0 * l).powf(1.0 / q)), l)?
        }
        ScheduleKind::Stepped => {
            let e = cfg
                .e
                .unwrap_or_else(|| (2.0 * tau as f64).max(16.0 * l * d as f64 / mu));
            stepped_schedule(mu, e)?
        }
        ScheduleKind::Constant => constant_schedule(cfg.eta.unwrap_or(1.0 / (2.0 * l)), 1.0 / (2.0 * l))?,
        ScheduleKind::GrowingTau => growing_tau_schedule(mu, l, d, cfg.alpha.unwrap_or(12.0), tau_growth(cfg))?,
    };
    if cfg.engine == EngineKind::Batch {
        check_batch_cap(&s, l, d)?;
    }
    Ok(s)
}

/// The configured bound curve, when requested and computable.
pub fn build_bound(cfg: &RunConfig, c: &ProblemConstants, s: &StepSchedule) -> Result<Option<BoundCurve>> {
    let need = |what: &str| Error::Config(format!("bound needs {what}"));
    match cfg.bound {
        BoundKind::None => Ok(None),
        BoundKind::Theorem2 => {
            let w_star = c.w_star.as_deref().ok_or_else(|| need("w*"))?;
            let w0 = vec![0.0; w_star.len()];
            Ok(Some(BoundCurve::Sgd(Theorem2Bound {
                mu: c.mu,
                l: c.l,
                noise: c.noise.ok_or_else(|| need("N"))?,
                w0_dist_sq: dist_sq(&w0, w_star),
            })))
        }
        BoundKind::Hogwild => {
            let alpha = match cfg.alpha_rule {
                AlphaRuleKind::Constant => cfg.alpha_t.unwrap_or_else(|| hogwild_alpha(cfg)),
                AlphaRuleKind::Stepped => hogwild_alpha(cfg),
            };
            Ok(Some(BoundCurve::Hogwild(HogwildBound {
                alpha,
                mu: c.mu,
                noise: c.noise.ok_or_else(|| need("N"))?,
                d: cfg.d as f64,
                e: s.offset(0).ok_or_else(|| need("a schedule with an offset E"))?,
            })))
        }
    }
}

pub fn iterations(cfg: &RunConfig, n: usize) -> u64 {
    match (cfg.iterations, cfg.epochs) {
        (Some(t), _) => t,
        (None, Some(e)) => (e * n as f64).round() as u64,
        (None, None) => 0,
    }
}

fn filter_mode(cfg: &RunConfig) -> FilterMode {
    match cfg.fraction {
        Some(v) => FilterMode::Fraction(v),
        None => FilterMode::Partition(cfg.d),
    }
}

/// One engine run for one seed.
pub fn run_seed(cfg: &RunConfig, problem: &Problem, schedule: StepSchedule, seed: u64) -> Result<Trace> {
    let obj = &problem.objective;
    let mut spec = RunSpec::new(obj, schedule, iterations(cfg, obj.n()), seed);
    spec.filter = filter_mode(cfg);
    spec.record_every = cfg.record_every;
    spec.w_star = problem.constants.w_star.as_deref();
    spec.divergence_limit = cfg.divergence_limit;
    let sampling = match cfg.batch_sampling {
        SamplingKind::Iid => BatchSampling::Iid,
        SamplingKind::Enumerate => BatchSampling::Enumerate,
    };
    match cfg.engine {
        EngineKind::Seq => run_sequential(&spec, SeqMode::Sgd),
        EngineKind::Filtered => run_sequential(&spec, SeqMode::Filtered),
        EngineKind::Batch => run_sequential(
            &spec,
            SeqMode::Batch {
                k: cfg.batch_k,
                sampling,
            },
        ),
        EngineKind::Parallel => run_parallel(&spec, cfg.workers),
        EngineKind::DelaySim => run_delay_sim(&spec, cfg.tau, mask_policy(cfg)),
        EngineKind::DelaySimGrowing => run_delay_sim_growing_tau(&spec, tau_growth(cfg), mask_policy(cfg)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub trace: Option<Trace>,
    pub diverged: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub t: u64,
    /// Mean cumulative coordinate writes across seeds.
    pub t_prime: f64,
    pub epoch: f64,
    pub loss_mean: f64,
    pub loss_std: f64,
    pub dist_mean: Option<f64>,
    pub dist_std: Option<f64>,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<AggregateRow>,
    pub seeds: Vec<SeedOutcome>,
    pub n: usize,
    pub constants: ProblemConstants,
    pub schedule: StepSchedule,
    pub bound: Option<BoundCurve>,
    pub config_hash: u64,
}

/// Sample mean and standard deviation (`n − 1` denominator; 0 for one value).
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aligns surviving seeds on their recorded `t` and averages.
pub fn aggregate(seeds: &[SeedOutcome], n: usize, bound: Option<&BoundCurve>) -> Result<Vec<AggregateRow>> {
    let traces: Vec<&Trace> = seeds.iter().filter_map(|s| s.trace.as_ref()).collect();
    let Some(first) = traces.first() else {
        return Err(Error::Diverged {
            t: 0,
            reason: "all seeds diverged".into(),
        });
    };
    for tr in &traces {
        if tr.rows.len() != first.rows.len() || tr.rows.iter().zip(&first.rows).any(|(a, b)| a.t != b.t) {
            return Err(Error::invalid("seeds recorded different iteration grids"));
        }
    }
    let rows = (0..first.rows.len())
        .map(|k| {
            let t = first.rows[k].t;
            let col = |f: &dyn Fn(&crate::engine::TraceRow) -> f64| -> Vec<f64> {
                traces.iter().map(|tr| f(&tr.rows[k])).collect()
            };
            let (t_prime, _) = mean_std(&col(&|r| r.t_prime as f64));
            let (loss_mean, loss_std) = mean_std(&col(&|r| r.loss));
            let (dist_mean, dist_std) = if first.rows[k].dist_sq.is_some() {
                let (m, s) = mean_std(&col(&|r| r.dist_sq.unwrap_or(f64::NAN)));
                (Some(m), Some(s))
            } else {
                (None, None)
            };
            AggregateRow {
                t,
                t_prime,
                epoch: t as f64 / n as f64,
                loss_mean,
                loss_std,
                dist_mean,
                dist_std,
                bound: bound.map(|b| b.eval(t as f64)),
            }
        })
        .collect();
    Ok(rows)
}

/// Runs every seed (concurrently unless the engine is itself parallel) and
/// aggregates. Diverged seeds are marked and skipped; if all diverge the run
/// fails.
pub fn run_prepared(cfg: &RunConfig, problem: &Problem) -> Result<RunOutput> {
    let schedule = build_schedule(cfg, &problem.constants)?;
    let bound = build_bound(cfg, &problem.constants, &schedule)?;
    let lanes = if cfg.engine == EngineKind::Parallel {
        1
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    };
    let mut results: Vec<(u64, Result<Trace>)> = Vec::with_capacity(cfg.seeds.len());
    for chunk in cfg.seeds.chunks(lanes) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| s.spawn(move || (seed, run_seed(cfg, problem, schedule, seed))))
                .collect();
            results.extend(handles.into_iter().map(|h| h.join().expect("seed run panicked")));
        });
    }
    let mut seeds = Vec::with_capacity(results.len());
    for (seed, r) in results {
        match r {
            Ok(trace) => seeds.push(SeedOutcome {
                seed,
                trace: Some(trace),
                diverged: None,
            }),
            Err(e @ Error::Diverged { .. }) => seeds.push(SeedOutcome {
                seed,
                trace: None,
                diverged: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    let n = problem.objective.n();
    let rows = aggregate(&seeds, n, bound.as_ref())?;
    Ok(RunOutput {
        rows,
        seeds,
        n,
        constants: problem.constants.clone(),
        schedule,
        bound,
        config_hash: cfg.hash(),
    })
}

pub fn run_config(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let problem = prepare_problem(cfg)?;
    run_prepared(cfg, &problem)
}

/// Writes `<label>.csv`, `<label>_seeds.csv` and `<label>_meta.toml` into
/// `dir`.
pub fn write_run(dir: &Path, label: &str, cfg: &RunConfig, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    emit_csv(&out.rows, &dir.join(format!("{label}.csv")))?;
    std::fs::write(
        dir.join(format!("{label}_seeds.csv")),
        csv::seeds_to_csv_string(&out.seeds, true),
    )?;
    let c = &out.constants;
    let opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| x.to_string());
    let meta = format!(
        "# config hash {:016x}\n# mu = {}\n# L = {}\n# kappa = {}\n# N = {}\n# F* = {}\n# n = {}\n# diverged seeds = {}\n{}",
        out.config_hash,
        c.mu,
        c.l,
        c.kappa,
        opt(c.noise),
        opt(c.f_star),
        out.n,
        out.seeds.iter().filter(|s| s.trace.is_none()).count(),
        cfg.dump()
    );
    std::fs::write(dir.join(format!("{label}_meta.toml")), meta)?;
    Ok(())
}
