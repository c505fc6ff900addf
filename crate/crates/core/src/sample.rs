use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n × d` table of observations stored row-major, with column labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    labels: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl Sample {
    /// Builds a sample from row-major data. `data.len()` must be a multiple of
    /// `labels.len()`.
    pub fn from_rows(labels: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let dim = labels.len();
        if dim == 0 {
            return Err(Error::param("labels", "at least one column is required"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension {
                expected: format!("a multiple of {dim} values"),
                found: data.len(),
            });
        }
        if data.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(Self { labels, dim, data })
    }

    /// Convenience constructor with default labels `x1..xd`.
    pub fn with_default_labels(dim: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_rows(default_labels("x", dim), data)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rejects negative or non-finite cells, naming the first offender
    /// (1-based row and column).
    pub fn ensure_nonnegative(&self) -> Result<()> {
        for (i, row) in self.rows().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::Cell {
                        row: i + 1,
                        col: j + 1,
                        reason: format!("value {x} is not a finite nonnegative number"),
                    });
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn default_labels(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|j| format!("{prefix}{j}")).collect()
}
