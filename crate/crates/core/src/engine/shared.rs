//! Lock-free shared parameter vector.

use std::sync::atomic::{AtomicU64, Ordering};

/// An `f64` cell with indivisible loads, stores and adds.
///
/// Adds are a compare-and-swap loop on the bit pattern, so concurrent adds
/// are never lost.
#[derive(Debug, Default)]
pub struct AtomicF64 {
    bits: AtomicU64,
}

impl AtomicF64 {
    pub fn new(v: f64) -> Self {
        AtomicF64 {
            bits: AtomicU64::new(v.to_bits()),
        }
    }

    pub fn load(&self) -> f64 {
        f64::from_bits(self.bits.load(Ordering::Relaxed))
    }

    pub fn store(&self, v: f64) {
        self.bits.store(v.to_bits(), Ordering::Relaxed);
    }

    /// Adds `delta` and returns the new value.
    pub fn add(&self, delta: f64) -> f64 {
        let mut old = self.bits.load(Ordering::Relaxed);
        loop {
            let new = (f64::from_bits(old) + delta).to_bits();
            match self
                .bits
                .compare_exchange_weak(old, new, Ordering::AcqRel, Ordering::Relaxed)
            {
                Ok(_) => return f64::from_bits(new),
                Err(current) => old = current,
            }
        }
    }
}

/// Shared model vector. Single cells are atomic; the vector as a whole has no
/// consistency guarantee.
#[derive(Debug)]
pub struct SharedModel {
    cells: Vec<AtomicF64>,
}

impl SharedModel {
    pub fn new(w: &[f64]) -> Self {
        SharedModel {
            cells: w.iter().map(|&v| AtomicF64::new(v)).collect(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        SharedModel {
            cells: (0..dim).map(|_| AtomicF64::new(0.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn read(&self, j: usize) -> f64 {
        self.cells[j].load()
    }

    pub fn add(&self, j: usize, delta: f64) -> f64 {
        self.cells[j].add(delta)
    }

    /// Reads every cell one at a time; concurrent writers may interleave.
    pub fn snapshot(&self) -> Vec<f64> {
        self.cells.iter().map(AtomicF64::load).collect()
    }
}
