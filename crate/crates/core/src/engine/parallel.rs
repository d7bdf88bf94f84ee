//! Lock-free multi-worker execution of the filtered recursion.
//!
//! Each worker reads the coordinates it needs one cell at a time, computes a
//! filtered gradient, then takes the next global iteration index from an
//! atomic counter and adds `−η_t d g_h` to every selected cell. The global
//! index fixes `η_t`. A worker that completes a record-point iteration takes
//! the trace snapshot; snapshots are read cell by cell while other workers
//! keep writing, so the trace is marked inconsistent. The last row is taken
//! after all workers have joined.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use rand::Rng;

use super::{check_value, select, RunSpec, Selection, SharedModel, Stopwatch, Streams, Trace, TraceRow};
use crate::error::{Error, Result};

pub fn run_parallel(spec: &RunSpec<'_>, workers: usize) -> Result<Trace> {
    run_parallel_on(spec, workers, &SharedModel::new(&spec.initial_point()?))
}

/// Runs on a caller-provided model (useful for inspecting it afterwards).
pub fn run_parallel_on(spec: &RunSpec<'_>, workers: usize, model: &SharedModel) -> Result<Trace> {
    if workers == 0 {
        return Err(Error::invalid("need at least one worker"));
    }
    spec.filter.validate()?;
    let obj = spec.objective;
    if model.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: model.len(),
        });
    }
    let clock = Stopwatch::start(spec.wall_time);
    let counter = AtomicU64::new(0);
    let writes = AtomicU64::new(0);
    let abort = AtomicBool::new(false);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let rows: Mutex<Vec<TraceRow>> = Mutex::new(vec![spec.row(0, 0, &model.snapshot(), 0.0)?]);

    let worker = |p: usize| -> Result<()> {
        let mut streams = Streams::for_worker(spec.seed, p as u64);
        let mut read = vec![0.0; obj.dim()];
        loop {
            if abort.load(Ordering::Relaxed) {
                return Ok(());
            }
            let i = streams.examples.gen_range(0..obj.n());
            let support = obj.grad_support(i);
            support.for_each(|j| read[j] = model.read(j));
            let g = obj.sparse_grad(&read, i);
            let picked = (!g.is_empty()).then(|| select(g.len(), spec.filter, &mut streams.filters));

            let t = counter.fetch_add(1, Ordering::AcqRel);
            if t >= spec.iterations {
                return Ok(());
            }
            let mut written = 0u64;
            if let Some((sel, mult)) = picked {
                let coeff = spec.schedule.eta(t) * mult;
                let mut bad = None;
                let apply = |pos: usize| {
                    let j = g.indices[pos];
                    let v = model.add(j, -(coeff * g.values[pos]));
                    if bad.is_none() {
                        bad = check_value(v, spec.divergence_limit, t).err();
                    }
                };
                match &sel {
                    Selection::Range(r) => r.clone().for_each(apply),
                    Selection::Positions(ps) => ps.iter().copied().for_each(apply),
                }
                written = sel.len() as u64;
                if let Some(e) = bad {
                    abort.store(true, Ordering::Relaxed);
                    return Err(e);
                }
            }
            let t_prime = writes.fetch_add(written, Ordering::AcqRel) + written;
            let done = t + 1;
            // the final row is taken after every worker has finished
            if done < spec.iterations && spec.is_record_point(done) {
                let row = spec.row(done, t_prime, &model.snapshot(), clock.seconds())?;
                rows.lock().unwrap().push(row);
            }
        }
    };

    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|p| {
                let worker = &worker;
                s.spawn(move || worker(p))
            })
            .collect();
        for h in handles {
            if let Err(e) = h.join().expect("worker panicked") {
                failure.lock().unwrap().get_or_insert(e);
            }
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut rows = rows.into_inner().unwrap();
    rows.sort_by_key(|r| r.t);
    if spec.iterations > 0 {
        let w = model.snapshot();
        rows.push(spec.row(spec.iterations, writes.into_inner(), &w, clock.seconds())?);
    }
    Ok(Trace {
        seed: spec.seed,
        rows,
        consistent: workers == 1,
    })
}
