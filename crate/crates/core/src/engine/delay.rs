//! Deterministic single-threaded model of inconsistent reads with delay τ.
//!
//! `committed` holds `w_{t−τ}`: every update from iterations before `t − τ`.
//! The last `τ` updates wait in a FIFO. A read of coordinate `j` at iteration
//! `t` starts from `committed[j]` and adds the pending updates selected by the
//! mask policy, so
//!
//! ```text
//! ŵ_t = w_{t−τ} − Σ_{j=t−τ}^{t−1} η_j d_j Σ_{t,j} S_j ∇f(ŵ_j; ξ_j)
//! w_t = w_{t−τ} − Σ_{j=t−τ}^{t−1} η_j d_j S_j ∇f(ŵ_j; ξ_j)
//! ```
//!
//! With an empty FIFO (τ = 0) the simulator performs exactly the floating
//! point operations of the sequential filtered engine.

use std::collections::VecDeque;

use rand::Rng;

use super::{check_value, select, FilterMode, RunSpec, Stopwatch, Streams, Trace};
use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::schedules::{StepSchedule, TauGrowth};

/// Which pending coordinate updates a read observes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskPolicy {
    /// `Σ = I`: every pending update is visible, so `ŵ_t = w_t`.
    AllIn,
    /// `Σ = 0`: nothing pending is visible, so `ŵ_t = w_{t−τ}`.
    NoneIn,
    /// Each pending coordinate update is visible independently with
    /// probability `p`.
    Bernoulli(f64),
    /// Each coordinate is read at a uniformly random moment: it observes a
    /// uniformly sized prefix (oldest first) of its pending updates.
    Prefix,
}

impl Default for MaskPolicy {
    fn default() -> Self {
        MaskPolicy::Bernoulli(0.5)
    }
}

#[derive(Debug, Clone)]
struct PendingUpdate {
    coeff: f64,
    indices: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DelaySim<'a> {
    obj: &'a Objective,
    schedule: StepSchedule,
    filter: FilterMode,
    mask: MaskPolicy,
    tau: TauGrowth,
    committed: Vec<f64>,
    pending: VecDeque<PendingUpdate>,
    shadow: Vec<f64>,
    read: Vec<f64>,
    stamp: Vec<u64>,
    cutoff: Vec<usize>,
    generation: u64,
    last_example: Option<usize>,
    t: u64,
    coord_updates: u64,
    streams: Streams,
    divergence_limit: f64,
}

impl<'a> DelaySim<'a> {
    pub fn new(
        obj: &'a Objective,
        schedule: StepSchedule,
        filter: FilterMode,
        tau: TauGrowth,
        mask: MaskPolicy,
        w0: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        filter.validate()?;
        if w0.len() != obj.dim() {
            return Err(Error::DimensionMismatch {
                expected: obj.dim(),
                got: w0.len(),
            });
        }
        if let MaskPolicy::Bernoulli(p) = mask {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("mask probability {p} outside [0, 1]")));
            }
        }
        let dim = obj.dim();
        Ok(DelaySim {
            obj,
            schedule,
            filter,
            mask,
            tau,
            committed: w0.clone(),
            pending: VecDeque::new(),
            shadow: w0.clone(),
            read: w0,
            stamp: vec![0; dim],
            cutoff: vec![0; dim],
            generation: 0,
            last_example: None,
            t: 0,
            coord_updates: 0,
            streams: Streams::new(seed),
            divergence_limit: 1e150,
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn coord_updates(&self) -> u64 {
        self.coord_updates
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// `w_{t−τ}`.
    pub fn committed(&self) -> &[f64] {
        &self.committed
    }

    /// Independently accumulated `w_t`.
    pub fn shadow(&self) -> &[f64] {
        &self.shadow
    }

    /// `w_t` rebuilt from `committed` plus every pending update, oldest first.
    pub fn true_w(&self) -> Vec<f64> {
        let mut w = self.committed.clone();
        for u in &self.pending {
            for (&j, &g) in u.indices.iter().zip(&u.values) {
                w[j] -= u.coeff * g;
            }
        }
        w
    }

    /// The read vector `ŵ` of the last step, on the coordinates it touched.
    pub fn last_read(&self) -> Option<Vec<(usize, f64)>> {
        let i = self.last_example?;
        let mut out = Vec::new();
        self.obj.grad_support(i).for_each(|j| out.push((j, self.read[j])));
        Some(out)
    }

    fn commit_oldest(&mut self) {
        if let Some(u) = self.pending.pop_front() {
            for (&j, &g) in u.indices.iter().zip(&u.values) {
                self.committed[j] -= u.coeff * g;
            }
        }
    }

    fn include(&mut self, j: usize, age: usize) -> bool {
        match self.mask {
            MaskPolicy::AllIn => true,
            MaskPolicy::NoneIn => false,
            MaskPolicy::Bernoulli(p) => self.streams.masks.gen::<f64>() < p,
            MaskPolicy::Prefix => age < self.cutoff[j],
        }
    }

    /// Builds `ŵ_t` on the support of example `i`.
    fn form_read(&mut self, i: usize) {
        self.generation += 1;
        let generation = self.generation;
        let pending_len = self.pending.len();
        let obj = self.obj;
        let support = obj.grad_support(i);
        support.for_each(|j| {
            self.read[j] = self.committed[j];
            self.stamp[j] = generation;
        });
        if pending_len == 0 {
            return;
        }
        if self.mask == MaskPolicy::Prefix {
            let masks = &mut self.streams.masks;
            let cutoff = &mut self.cutoff;
            support.for_each(|j| cutoff[j] = masks.gen_range(0..=pending_len));
        }
        for age in 0..pending_len {
            for k in 0..self.pending[age].indices.len() {
                let j = self.pending[age].indices[k];
                if self.stamp[j] != generation {
                    continue;
                }
                if self.include(j, age) {
                    let u = &self.pending[age];
                    self.read[j] -= u.coeff * u.values[k];
                }
            }
        }
    }

    /// One iteration of the recursion.
    pub fn step(&mut self) -> Result<()> {
        let tau = self.tau.tau(self.t) as usize;
        while self.pending.len() > tau {
            self.commit_oldest();
        }
        let i = self.streams.examples.gen_range(0..self.obj.n());
        self.last_example = Some(i);
        self.form_read(i);
        let g = self.obj.sparse_grad(&self.read, i);
        if g.is_empty() {
            self.t += 1;
            return Ok(());
        }
        let (sel, mult) = select(g.len(), self.filter, &mut self.streams.filters);
        let coeff = self.schedule.eta(self.t) * mult;
        let mut update = PendingUpdate {
            coeff,
            indices: Vec::with_capacity(sel.len()),
            values: Vec::with_capacity(sel.len()),
        };
        let mut bad = None;
        sel.for_each(|pos| {
            let j = g.indices[pos];
            update.indices.push(j);
            update.values.push(g.values[pos]);
            self.shadow[j] -= coeff * g.values[pos];
            if bad.is_none() {
                bad = check_value(self.shadow[j], self.divergence_limit, self.t).err();
            }
        });
        if let Some(e) = bad {
            return Err(e);
        }
        self.coord_updates += update.indices.len() as u64;
        self.pending.push_back(update);
        self.t += 1;
        Ok(())
    }

    pub fn run(mut self, spec: &RunSpec<'_>) -> Result<Trace> {
        self.divergence_limit = spec.divergence_limit;
        let clock = Stopwatch::start(spec.wall_time);
        let mut rows = vec![spec.row(0, 0, &self.shadow, clock.seconds())?];
        while self.t < spec.iterations {
            self.step()?;
            if spec.is_record_point(self.t) {
                rows.push(spec.row(self.t, self.coord_updates, &self.shadow, clock.seconds())?);
            }
        }
        Ok(Trace {
            seed: spec.seed,
            rows,
            consistent: true,
        })
    }
}

/// Runs the simulator with a constant delay `tau`.
pub fn run_delay_sim(spec: &RunSpec<'_>, tau: u64, mask: MaskPolicy) -> Result<Trace> {
    DelaySim::new(
        spec.objective,
        spec.schedule,
        spec.filter,
        TauGrowth::Constant(tau),
        mask,
        spec.initial_point()?,
        spec.seed,
    )?
    .run(spec)
}

/// Runs the simulator with a delay `τ(t)` that may grow with `t`.
pub fn run_delay_sim_growing_tau(spec: &RunSpec<'_>, tau: TauGrowth, mask: MaskPolicy) -> Result<Trace> {
    DelaySim::new(
        spec.objective,
        spec.schedule,
        spec.filter,
        tau,
        mask,
        spec.initial_point()?,
        spec.seed,
    )?
    .run(spec)
}
