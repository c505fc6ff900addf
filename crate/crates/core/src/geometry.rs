//! L_p polar decomposition and marginal rank standardization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{default_labels, Sample};

/// Exponent of an L_p (quasi-)norm. Any `p > 0` is accepted; for `p < 1` the
/// map is only a quasi-norm and nothing downstream relies on the triangle
/// inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormSpec(f64);

impl NormSpec {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 0.0 {
            Ok(Self(p))
        } else {
            Err(Error::param(
                "p",
                format!("norm exponent must be positive, got {p}"),
            ))
        }
    }

    pub const L1: NormSpec = NormSpec(1.0);

    pub fn p(self) -> f64 {
        self.0
    }

    /// `(Σ |x_j|^p)^{1/p}`, evaluated relative to the largest coordinate so
    /// large `p` cannot overflow.
    pub fn norm(self, x: &[f64]) -> f64 {
        let p = self.0;
        if p == 1.0 {
            return x.iter().map(|v| v.abs()).sum();
        }
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return scale;
        }
        if p == 2.0 {
            return scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt();
        }
        scale
            * x.iter()
                .map(|v| (v.abs() / scale).powf(p))
                .sum::<f64>()
                .powf(1.0 / p)
    }
}

impl Default for NormSpec {
    fn default() -> Self {
        Self::L1
    }
}

/// Radii and unit-norm angles of a sample, rows in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarSample {
    radii: Vec<f64>,
    /// Row-major `n × d`.
    angles: Vec<f64>,
    norm: NormSpec,
    dim: usize,
}

impl PolarSample {
    /// Assembles a polar sample from precomputed parts (e.g. read back from a
    /// polar CSV). Radii must be positive and finite.
    pub fn from_parts(
        radii: Vec<f64>,
        angles: Vec<f64>,
        dim: usize,
        norm: NormSpec,
    ) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::EmptySample);
        }
        if dim == 0 || angles.len() != radii.len() * dim {
            return Err(Error::Dimension {
                expected: format!("{} angle values", radii.len() * dim.max(1)),
                found: angles.len(),
            });
        }
        if let Some(i) = radii.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Cell {
                row: i + 1,
                col: 1,
                reason: format!("radius {} is not positive", radii[i]),
            });
        }
        Ok(Self {
            radii,
            angles,
            norm,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> NormSpec {
        self.norm
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn angle(&self, i: usize) -> &[f64] {
        &self.angles[i * self.dim..(i + 1) * self.dim]
    }

    /// Indices with `R_i > threshold`, in row order.
    pub fn exceedances(&self, threshold: f64) -> Vec<usize> {
        self.radii
            .iter()
            .enumerate()
            .filter_map(|(i, &r)| (r > threshold).then_some(i))
            .collect()
    }
}

/// `X ↦ (‖X‖_p, X/‖X‖_p)` row by row.
pub fn to_polar(sample: &Sample, norm: NormSpec) -> Result<PolarSample> {
    let dim = sample.dim();
    let mut radii = Vec::with_capacity(sample.len());
    let mut angles = Vec::with_capacity(sample.len() * dim);
    for (i, row) in sample.rows().enumerate() {
        let r = norm.norm(row);
        if r == 0.0 {
            return Err(Error::ZeroRow { row: i + 1 });
        }
        if !r.is_finite() {
            return Err(Error::Cell {
                row: i + 1,
                col: 1,
                reason: "row norm is not finite".into(),
            });
        }
        radii.push(r);
        angles.extend(row.iter().map(|x| x / r));
    }
    Ok(PolarSample {
        radii,
        angles,
        norm,
        dim,
    })
}

/// Column-wise `Z = 1 / log(n / (rank − 0.5))` with ascending ranks
/// (smallest value gets rank 1). Ties are ranked by first occurrence.
pub fn rank_transform(sample: &Sample) -> Result<Sample> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::InsufficientData { n, min: 2 });
    }
    let dim = sample.dim();
    let nf = n as f64;
    let mut out = vec![0.0; n * dim];
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..dim {
        let col = sample.column(j);
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        // Stable sort keeps tied values in first-occurrence order.
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        for (pos, &i) in order.iter().enumerate() {
            let rank = (pos + 1) as f64;
            out[i * dim + j] = 1.0 / (nf / (rank - 0.5)).ln();
        }
    }
    Sample::from_rows(sample.labels().to_vec(), out)
}

/// `X₁/(X₁+X₂)` per row of a bivariate L1 polar sample.
pub fn pseudo_angle_2d(polar: &PolarSample) -> Result<Vec<f64>> {
    if polar.dim() != 2 {
        return Err(Error::Dimension {
            expected: "2 columns".into(),
            found: polar.dim(),
        });
    }
    if polar.norm().p() != 1.0 {
        return Err(Error::param(
            "p",
            format!(
                "the pseudo-angle is defined for the L1 norm, got p = {}",
                polar.norm().p()
            ),
        ));
    }
    Ok(polar.angles.chunks_exact(2).map(|a| a[0]).collect())
}

/// Column labels used when writing a polar sample: `r, theta_1..theta_d`.
pub fn polar_labels(dim: usize) -> Vec<String> {
    std::iter::once("r".to_string())
        .chain(default_labels("theta_", dim))
        .collect()
}
