//! Update engines for `w ← w − η_t d S_u ∇f(ŵ_t; ξ_t)`.
//!
//! All engines share one seed discipline: a master seed spawns independent
//! ChaCha streams for example draws, filter draws and mask draws. Two engines
//! that consume the same streams in the same order therefore produce
//! bit-identical trajectories, which is what the reduction tests rely on.

pub mod delay;
pub mod parallel;
pub mod seq;
pub mod shared;

use std::ops::Range;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::partition::{fraction_size, sample_set, set_count, slice_range};
use crate::schedules::StepSchedule;

pub use delay::{run_delay_sim, run_delay_sim_growing_tau, DelaySim, MaskPolicy};
pub use parallel::{run_parallel, run_parallel_on};
pub use seq::{check_batch_cap, run_sequential, BatchSampling, RunState, SeqMode};
pub use shared::{AtomicF64, SharedModel};

const EXAMPLE_STREAM: u64 = 0;
const FILTER_STREAM: u64 = 1;
const MASK_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone)]
pub struct Streams {
    pub examples: ChaCha8Rng,
    pub filters: ChaCha8Rng,
    pub masks: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Streams {
            examples: stream(seed, EXAMPLE_STREAM),
            filters: stream(seed, FILTER_STREAM),
            masks: stream(seed, MASK_STREAM),
        }
    }

    /// Streams for parallel worker `p`; worker 0 matches [`Streams::new`].
    pub fn for_worker(seed: u64, p: u64) -> Self {
        Streams {
            examples: stream(seed, 3 * p + EXAMPLE_STREAM),
            filters: stream(seed, 3 * p + FILTER_STREAM),
            masks: stream(seed, 3 * p + MASK_STREAM),
        }
    }
}

/// How the written coordinates are chosen from a gradient's support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterMode {
    /// Uniform set of the contiguous `D`-way partition, multiplier `d`.
    Partition(usize),
    /// Uniform subset of size `v|S|`, multiplier `|S|/k`.
    Fraction(f64),
}

impl FilterMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterMode::Partition(0) => Err(Error::invalid("D must be >= 1")),
            FilterMode::Fraction(v) if !(v > 0.0 && v <= 1.0) => {
                Err(Error::invalid(format!("fraction must lie in (0, 1], got {v}")))
            }
            _ => Ok(()),
        }
    }
}

/// Positions (into a gradient's index list) selected for writing.
#[derive(Debug, Clone)]
pub(crate) enum Selection {
    Range(Range<usize>),
    Positions(Vec<usize>),
}

impl Selection {
    pub(crate) fn for_each(&self, mut f: impl FnMut(usize)) {
        match self {
            Selection::Range(r) => r.clone().for_each(f),
            Selection::Positions(p) => p.iter().for_each(|&x| f(x)),
        }
    }

    pub(crate) fn len(&self) -> usize {
        match self {
            Selection::Range(r) => r.len(),
            Selection::Positions(p) => p.len(),
        }
    }
}

/// Draws the filter for a support of length `len` (> 0). Returns the chosen
/// positions and the multiplier.
pub(crate) fn select<R: Rng + ?Sized>(len: usize, mode: FilterMode, rng: &mut R) -> (Selection, f64) {
    match mode {
        FilterMode::Partition(target) => {
            let d = set_count(len, target);
            let u = sample_set(d, rng);
            (Selection::Range(slice_range(len, target, u)), d as f64)
        }
        FilterMode::Fraction(v) => {
            let k = fraction_size(len, v);
            if k == len {
                return (Selection::Range(0..len), 1.0);
            }
            let mut pos = index::sample(rng, len, k).into_vec();
            pos.sort_unstable();
            (Selection::Positions(pos), len as f64 / k as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    /// Cumulative single-coordinate writes.
    pub t_prime: u64,
    pub loss: f64,
    pub dist_sq: Option<f64>,
    pub wall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    /// False when metrics were read from a concurrently written vector.
    pub consistent: bool,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

/// Shared settings of one engine run.
#[derive(Debug, Clone)]
pub struct RunSpec<'a> {
    pub objective: &'a Objective,
    pub schedule: StepSchedule,
    pub filter: FilterMode,
    pub iterations: u64,
    /// 0 selects `max(1, n/10)`.
    pub record_every: u64,
    pub seed: u64,
    pub w0: Option<Vec<f64>>,
    pub w_star: Option<&'a [f64]>,
    /// Abort once any coordinate's magnitude exceeds this.
    pub divergence_limit: f64,
    pub wall_time: bool,
}

impl<'a> RunSpec<'a> {
    pub fn new(objective: &'a Objective, schedule: StepSchedule, iterations: u64, seed: u64) -> Self {
        RunSpec {
            objective,
            schedule,
            filter: FilterMode::Partition(1),
            iterations,
            record_every: 0,
            seed,
            w0: None,
            w_star: None,
            divergence_limit: 1e150,
            wall_time: true,
        }
    }

    pub fn record_interval(&self) -> u64 {
        if self.record_every > 0 {
            self.record_every
        } else {
            (self.objective.n() as u64 / 10).max(1)
        }
    }

    pub(crate) fn is_record_point(&self, t: u64) -> bool {
        t.is_multiple_of(self.record_interval()) || t == self.iterations
    }

    pub(crate) fn initial_point(&self) -> Result<Vec<f64>> {
        let dim = self.objective.dim();
        match &self.w0 {
            Some(w) if w.len() != dim => Err(Error::DimensionMismatch {
                expected: dim,
                got: w.len(),
            }),
            Some(w) => Ok(w.clone()),
            None => Ok(vec![0.0; dim]),
        }
    }

    pub(crate) fn row(&self, t: u64, t_prime: u64, w: &[f64], wall: f64) -> Result<TraceRow> {
        let loss = self.objective.full_objective(w)?;
        let dist_sq = self.w_star.map(|ws| dist_sq(w, ws));
        Ok(TraceRow {
            t,
            t_prime,
            loss,
            dist_sq,
            wall,
        })
    }
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_value(v: f64, limit: f64, t: u64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Diverged {
            t,
            reason: format!("non-finite coordinate {v}"),
        });
    }
    if v.abs() > limit {
        return Err(Error::Diverged {
            t,
            reason: format!("coordinate magnitude {v:e} exceeds {limit:e}"),
        });
    }
    Ok(())
}

/// Clock that reads zero when wall time is disabled (e.g. in the browser).
pub(crate) struct Stopwatch(Option<std::time::Instant>);

impl Stopwatch {
    pub(crate) fn start(enabled: bool) -> Self {
        Stopwatch(enabled.then(std::time::Instant::now))
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.0.map_or(0.0, |s| s.elapsed().as_secs_f64())
    }
}
