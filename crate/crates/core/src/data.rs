//! Sparse labeled datasets and the `<label> <idx>:<val> ...` text format.
//!
//! Indices are 1-based in files and 0-based in memory. Stored zeros are
//! dropped while parsing, so `Example::indices` is exactly the support of the
//! feature vector.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub label: f64,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Example {
    /// Builds an example, dropping explicit zeros. Indices must be strictly
    /// increasing.
    pub fn new(label: f64, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::invalid("indices and values differ in length"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("indices must be strictly increasing"));
        }
        let (indices, values) = indices
            .into_iter()
            .zip(values)
            .filter(|&(_, v)| v != 0.0)
            .unzip();
        Ok(Example {
            label,
            indices,
            values,
        })
    }

    /// The set of possibly non-zero coordinates of this example's features.
    pub fn support(&self) -> &[usize] {
        &self.indices
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&j, &v)| w[j] * v)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(dim: usize, examples: Vec<Example>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        for e in &examples {
            if let Some(&last) = e.indices.last() {
                if last >= dim {
                    return Err(Error::invalid(format!(
                        "feature index {last} out of range for dimension {dim}"
                    )));
                }
            }
        }
        Ok(Dataset { dim, examples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn example(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    /// Widens the coordinate space, e.g. so a subset shares the feature space
    /// of the full file.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        let needed = self
            .examples
            .iter()
            .filter_map(|e| e.indices.last())
            .max()
            .map_or(1, |&j| j + 1);
        if dim < needed {
            return Err(Error::invalid(format!(
                "dimension override {dim} smaller than max index + 1 = {needed}"
            )));
        }
        self.dim = dim;
        Ok(self)
    }

    /// Uniform sample of `m` examples without replacement, reproducible per
    /// seed. Dimension is preserved.
    pub fn subsample(&self, m: usize, seed: u64) -> Result<Dataset> {
        if m == 0 || m > self.n() {
            return Err(Error::invalid(format!(
                "subsample size {m} out of range 1..={}",
                self.n()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.shuffle(&mut rng);
        let examples = order[..m]
            .iter()
            .map(|&i| self.examples[i].clone())
            .collect();
        Ok(Dataset {
            dim: self.dim,
            examples,
        })
    }

    /// Writes the dataset back in the sparse text format (1-based indices).
    pub fn to_sparse_text(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            write!(out, "{}", e.label).unwrap();
            for (j, v) in e.iter() {
                write!(out, " {}:{}", j + 1, v).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the sparse text format. `dim` overrides the inferred dimension
/// (max index + 1) when given.
pub fn parse_sparse_text<R: BufRead>(reader: R, dim: Option<usize>) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut max_index: Option<usize> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad label {label_tok:?}"),
        })?;

        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut prev: Option<usize> = None;
        for tok in tokens {
            let bad = || Error::Parse {
                line: lineno,
                msg: format!("malformed feature {tok:?}"),
            };
            let (idx, val) = tok.split_once(':').ok_or_else(bad)?;
            let idx: usize = idx.parse().map_err(|_| bad())?;
            let val: f64 = val.parse().map_err(|_| bad())?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "feature indices are 1-based".into(),
                });
            }
            let idx = idx - 1;
            if prev.is_some_and(|p| idx <= p) {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-increasing index {}", idx + 1),
                });
            }
            prev = Some(idx);
            max_index = Some(max_index.map_or(idx, |m: usize| m.max(idx)));
            if val != 0.0 {
                indices.push(idx);
                values.push(val);
            }
        }
        examples.push(Example {
            label,
            indices,
            values,
        });
    }

    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let inferred = max_index.map_or(1, |m| m + 1);
    let ds = Dataset {
        dim: inferred,
        examples,
    };
    match dim {
        Some(d) => ds.with_dim(d),
        None => Ok(ds),
    }
}

pub fn parse_str(text: &str, dim: Option<usize>) -> Result<Dataset> {
    parse_sparse_text(text.as_bytes(), dim)
}

/// Loads a dataset file; names ending in `.gz` are decompressed on the fly.
pub fn load(path: &Path, dim: Option<usize>) -> Result<Dataset> {
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_sparse_text(BufReader::new(reader), dim)
}
