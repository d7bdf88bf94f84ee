//! Single-threaded baselines: plain SGD, filtered SGD and batch mode.

use rand::Rng;

use super::{check_value, select, FilterMode, RunSpec, Stopwatch, Streams, Trace};
use crate::error::{Error, Result};
use crate::objectives::{Objective, SparseVec};
use crate::schedules::StepSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSampling {
    /// `k` examples drawn uniformly with replacement.
    Iid,
    /// Every example once, in order (a deterministic full-gradient step).
    Enumerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeqMode {
    Sgd,
    Filtered,
    Batch { k: usize, sampling: BatchSampling },
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub w: Vec<f64>,
    pub t: u64,
    pub coord_updates: u64,
    pub streams: Streams,
    pub divergence_limit: f64,
}

impl RunState {
    pub fn new(w: Vec<f64>, seed: u64) -> Self {
        RunState {
            w,
            t: 0,
            coord_updates: 0,
            streams: Streams::new(seed),
            divergence_limit: 1e150,
        }
    }

    fn draw_example(&mut self, obj: &Objective) -> usize {
        self.streams.examples.gen_range(0..obj.n())
    }

    /// Subtracts `coeff · g` on the positions chosen by `sel`.
    fn apply(&mut self, g: &SparseVec, positions: impl IntoIterator<Item = usize>, coeff: f64) -> Result<u64> {
        let mut written = 0;
        for pos in positions {
            let j = g.indices[pos];
            self.w[j] -= coeff * g.values[pos];
            check_value(self.w[j], self.divergence_limit, self.t)?;
            written += 1;
        }
        Ok(written)
    }

    fn finish(&mut self, written: u64) {
        self.t += 1;
        self.coord_updates += written;
    }

    /// `w_{t+1} = w_t − η_t ∇f(w_t; ξ_t)` with `ξ_t` uniform.
    pub fn sgd_step(&mut self, obj: &Objective, schedule: &StepSchedule) -> Result<()> {
        let i = self.draw_example(obj);
        let g = obj.sparse_grad(&self.w, i);
        let eta = schedule.eta(self.t);
        let written = self.apply(&g, 0..g.len(), eta)?;
        self.finish(written);
        Ok(())
    }

    /// `w_{t+1} = w_t − η_t d S_u ∇f(w_t; ξ_t)`.
    pub fn filtered_step(&mut self, obj: &Objective, schedule: &StepSchedule, filter: FilterMode) -> Result<()> {
        let i = self.draw_example(obj);
        let g = obj.sparse_grad(&self.w, i);
        self.filtered_apply(&g, schedule, filter)
    }

    fn filtered_apply(&mut self, g: &SparseVec, schedule: &StepSchedule, filter: FilterMode) -> Result<()> {
        if g.is_empty() {
            self.finish(0);
            return Ok(());
        }
        let (sel, mult) = select(g.len(), filter, &mut self.streams.filters);
        let coeff = schedule.eta(self.t) * mult;
        let mut positions = Vec::with_capacity(sel.len());
        sel.for_each(|p| positions.push(p));
        let written = self.apply(g, positions, coeff)?;
        self.finish(written);
        Ok(())
    }

    /// Filtered step on the averaged gradient of a batch; the partition is
    /// built on the union of the batch supports.
    pub fn batch_step(
        &mut self,
        obj: &Objective,
        schedule: &StepSchedule,
        k: usize,
        sampling: BatchSampling,
        filter: FilterMode,
    ) -> Result<()> {
        let batch: Vec<usize> = match sampling {
            BatchSampling::Iid => {
                if k == 0 || k > obj.n() {
                    return Err(Error::invalid(format!("batch size {k} out of range 1..={}", obj.n())));
                }
                (0..k).map(|_| self.draw_example(obj)).collect()
            }
            BatchSampling::Enumerate => (0..obj.n()).collect(),
        };
        let g = obj.batch_grad(&self.w, &batch)?;
        self.filtered_apply(&g, schedule, filter)
    }

    pub fn step(&mut self, obj: &Objective, schedule: &StepSchedule, mode: SeqMode, filter: FilterMode) -> Result<()> {
        match mode {
            SeqMode::Sgd => self.sgd_step(obj, schedule),
            SeqMode::Filtered => self.filtered_step(obj, schedule, filter),
            SeqMode::Batch { k, sampling } => self.batch_step(obj, schedule, k, sampling, filter),
        }
    }
}

/// Admissibility of a schedule for batch mode: `η_t ≤ 1/(2LD)`.
pub fn check_batch_cap(schedule: &StepSchedule, l: f64, d: usize) -> Result<()> {
    let cap = 1.0 / (2.0 * l * d as f64);
    let eta0 = schedule.eta(0);
    if eta0 > cap * (1.0 + 1e-12) {
        return Err(Error::Schedule(format!(
            "batch mode needs eta_0 <= 1/(2LD) = {cap}, got {eta0}"
        )));
    }
    Ok(())
}

pub fn run_sequential(spec: &RunSpec<'_>, mode: SeqMode) -> Result<Trace> {
    spec.filter.validate()?;
    let clock = Stopwatch::start(spec.wall_time);
    let mut state = RunState::new(spec.initial_point()?, spec.seed);
    state.divergence_limit = spec.divergence_limit;
    let mut rows = vec![spec.row(0, 0, &state.w, clock.seconds())?];
    while state.t < spec.iterations {
        state.step(spec.objective, &spec.schedule, mode, spec.filter)?;
        if spec.is_record_point(state.t) {
            rows.push(spec.row(state.t, state.coord_updates, &state.w, clock.seconds())?);
        }
    }
    Ok(Trace {
        seed: spec.seed,
        rows,
        consistent: true,
    })
}
