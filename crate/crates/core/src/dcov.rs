//! Empirical distance covariance with the κ = 1 weight measure.
//!
//! For pairs `(u_i, v_i)`, `u` scalar and `v ∈ ℝ^d`, with `a_ij = |u_i − u_j|`
//! and `b_ij = ‖v_i − v_j‖₂`,
//!
//! ```text
//! T_n = 1/n² Σ_ij a_ij b_ij + 1/n⁴ Σ_ij a_ij Σ_kl b_kl − 2/n³ Σ_ijk a_ij b_ik
//! ```
//!
//! [`dcov_naive`] evaluates these sums literally and serves as the oracle.
//! [`dcov_fast`] uses the double-centering identity: the three sums collapse to
//! one pass over the pairs `i < j` that accumulates `Σ a_ij b_ij` and the row
//! sums of `a` and `b`, which is `O(n²)` time and `O(n)` memory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PolarSample;

/// Largest sample the literal oracle accepts.
pub const NAIVE_MAX_N: usize = 2000;

/// Paired sample: `u` has `n` entries, `v` is row-major `n × dim`.
#[derive(Debug, Clone, Copy)]
pub struct DCovInput<'a> {
    u: &'a [f64],
    v: &'a [f64],
    dim: usize,
}

impl<'a> DCovInput<'a> {
    pub fn new(u: &'a [f64], v: &'a [f64], dim: usize) -> Result<Self> {
        let n = u.len();
        if dim == 0 || v.len() != n * dim {
            return Err(Error::Dimension {
                expected: format!("{} vector entries ({n} rows of dimension {dim})", n * dim),
                found: v.len(),
            });
        }
        if n < 2 {
            return Err(Error::InsufficientData { n, min: 2 });
        }
        if u.iter().chain(v).any(|x| !x.is_finite()) {
            return Err(Error::param("input", "all entries must be finite"));
        }
        Ok(Self { u, v, dim })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DCovValue {
    /// The statistic, clamped at zero.
    pub t_n: f64,
    pub n: usize,
    /// Magnitude of a negative raw value removed by clamping (0 if none).
    pub clamped: f64,
    /// `mean(a) · mean(b)`: the natural size of the three sums.
    pub scale: f64,
}

impl DCovValue {
    fn from_raw(raw: f64, n: usize, scale: f64) -> Self {
        Self {
            t_n: raw.max(0.0),
            n,
            clamped: if raw < 0.0 { -raw } else { 0.0 },
            scale,
        }
    }
}

/// Literal evaluation of the three sums. Oracle use only: `n ≤ 2000`, and the
/// last sum is `O(n³)`.
pub fn dcov_naive(input: DCovInput<'_>) -> Result<DCovValue> {
    let n = input.len();
    if n > NAIVE_MAX_N {
        return Err(Error::param(
            "n",
            format!("the literal evaluation is limited to {NAIVE_MAX_N} rows, got {n}"),
        ));
    }
    let dim = input.dim;
    let a: Vec<f64> = (0..n * n)
        .map(|k| (input.u[k / n] - input.u[k % n]).abs())
        .collect();
    let b: Vec<f64> = (0..n * n)
        .map(|k| {
            euclidean(
                &input.v[(k / n) * dim..][..dim],
                &input.v[(k % n) * dim..][..dim],
            )
        })
        .collect();

    let nf = n as f64;
    let mut first = 0.0;
    for ij in 0..n * n {
        first += a[ij] * b[ij];
    }
    let sum_a: f64 = a.iter().sum();
    let sum_b: f64 = b.iter().sum();
    let mut third = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                third += a[i * n + j] * b[i * n + k];
            }
        }
    }
    let raw = first / (nf * nf) + sum_a * sum_b / nf.powi(4) - 2.0 * third / nf.powi(3);
    Ok(DCovValue::from_raw(raw, n, sum_a * sum_b / nf.powi(4)))
}

/// `O(n²)` evaluation via double centering.
pub fn dcov_fast(input: DCovInput<'_>) -> Result<DCovValue> {
    let mut kernel = DCovKernel::default();
    Ok(kernel.evaluate_rows(input.u, input.v, input.dim))
}

/// Reusable scratch space for repeated statistic evaluations. Holds the angle
/// columns (column-major) and the two row-sum vectors.
#[derive(Debug, Default, Clone)]
pub struct DCovKernel {
    columns: Vec<f64>,
    row_a: Vec<f64>,
    row_b: Vec<f64>,
}

impl DCovKernel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Evaluates the statistic for row-major `v`. No validation beyond debug
    /// assertions; callers go through [`DCovInput`] or own their buffers.
    pub fn evaluate_rows(&mut self, u: &[f64], v: &[f64], dim: usize) -> DCovValue {
        let n = u.len();
        let mut cols = std::mem::take(&mut self.columns);
        cols.clear();
        cols.resize(n * dim, 0.0);
        for (i, row) in v.chunks_exact(dim).enumerate() {
            for (c, &x) in row.iter().enumerate() {
                cols[c * n + i] = x;
            }
        }
        let out = self.evaluate_columns(u, &cols, dim);
        self.columns = cols;
        out
    }

    /// Evaluates the statistic for column-major `v` (`dim` blocks of `n`).
    pub fn evaluate_columns(&mut self, u: &[f64], cols: &[f64], dim: usize) -> DCovValue {
        let n = u.len();
        debug_assert!(n >= 2);
        debug_assert_eq!(cols.len(), n * dim);
        self.row_a.clear();
        self.row_a.resize(n, 0.0);
        self.row_b.clear();
        self.row_b.resize(n, 0.0);

        let mut cross = 0.0;
        for i in 0..n - 1 {
            let (ra_head, ra_tail) = self.row_a.split_at_mut(i + 1);
            let (rb_head, rb_tail) = self.row_b.split_at_mut(i + 1);
            let (sab, sa, sb) = match dim {
                1 => pairs_1(u[i], &u[i + 1..], cols[i], &cols[i + 1..], ra_tail, rb_tail),
                2 => pairs_2(
                    u[i],
                    &u[i + 1..],
                    [cols[i], cols[n + i]],
                    [&cols[i + 1..n], &cols[n + i + 1..]],
                    ra_tail,
                    rb_tail,
                ),
                _ => pairs_d(u, cols, n, dim, i, ra_tail, rb_tail),
            };
            cross += sab;
            ra_head[i] += sa;
            rb_head[i] += sb;
        }

        let nf = n as f64;
        let sum_a: f64 = self.row_a.iter().sum();
        let sum_b: f64 = self.row_b.iter().sum();
        let row_dot: f64 = self.row_a.iter().zip(&self.row_b).map(|(a, b)| a * b).sum();
        let n2 = nf * nf;
        let raw = 2.0 * cross / n2 - 2.0 * row_dot / (n2 * nf) + sum_a * sum_b / (n2 * n2);
        DCovValue::from_raw(raw, n, sum_a * sum_b / (n2 * n2))
    }
}

const LANES: usize = 4;

#[inline]
fn fold_lanes(l: [f64; LANES]) -> f64 {
    (l[0] + l[1]) + (l[2] + l[3])
}

#[inline]
fn pairs_1(
    ui: f64,
    u: &[f64],
    vi: f64,
    v: &[f64],
    ra: &mut [f64],
    rb: &mut [f64],
) -> (f64, f64, f64) {
    let mut sab = [0.0; LANES];
    let mut sa = [0.0; LANES];
    let mut sb = [0.0; LANES];
    let split = u.len() / LANES * LANES;
    for (((uc, vc), rac), rbc) in u[..split]
        .chunks_exact(LANES)
        .zip(v[..split].chunks_exact(LANES))
        .zip(ra[..split].chunks_exact_mut(LANES))
        .zip(rb[..split].chunks_exact_mut(LANES))
    {
        for l in 0..LANES {
            let a = (ui - uc[l]).abs();
            let b = (vi - vc[l]).abs();
            sab[l] += a * b;
            sa[l] += a;
            sb[l] += b;
            rac[l] += a;
            rbc[l] += b;
        }
    }
    let (mut tab, mut ta, mut tb) = (fold_lanes(sab), fold_lanes(sa), fold_lanes(sb));
    for j in split..u.len() {
        let a = (ui - u[j]).abs();
        let b = (vi - v[j]).abs();
        tab += a * b;
        ta += a;
        tb += b;
        ra[j] += a;
        rb[j] += b;
    }
    (tab, ta, tb)
}

#[inline]
fn pairs_2(
    ui: f64,
    u: &[f64],
    vi: [f64; 2],
    v: [&[f64]; 2],
    ra: &mut [f64],
    rb: &mut [f64],
) -> (f64, f64, f64) {
    let mut sab = [0.0; LANES];
    let mut sa = [0.0; LANES];
    let mut sb = [0.0; LANES];
    let split = u.len() / LANES * LANES;
    for ((((uc, xc), yc), rac), rbc) in u[..split]
        .chunks_exact(LANES)
        .zip(v[0][..split].chunks_exact(LANES))
        .zip(v[1][..split].chunks_exact(LANES))
        .zip(ra[..split].chunks_exact_mut(LANES))
        .zip(rb[..split].chunks_exact_mut(LANES))
    {
        for l in 0..LANES {
            let a = (ui - uc[l]).abs();
            let dx = vi[0] - xc[l];
            let dy = vi[1] - yc[l];
            let b = (dx * dx + dy * dy).sqrt();
            sab[l] += a * b;
            sa[l] += a;
            sb[l] += b;
            rac[l] += a;
            rbc[l] += b;
        }
    }
    let (mut tab, mut ta, mut tb) = (fold_lanes(sab), fold_lanes(sa), fold_lanes(sb));
    for j in split..u.len() {
        let a = (ui - u[j]).abs();
        let dx = vi[0] - v[0][j];
        let dy = vi[1] - v[1][j];
        let b = (dx * dx + dy * dy).sqrt();
        tab += a * b;
        ta += a;
        tb += b;
        ra[j] += a;
        rb[j] += b;
    }
    (tab, ta, tb)
}

fn pairs_d(
    u: &[f64],
    cols: &[f64],
    n: usize,
    dim: usize,
    i: usize,
    ra: &mut [f64],
    rb: &mut [f64],
) -> (f64, f64, f64) {
    let (mut tab, mut ta, mut tb) = (0.0, 0.0, 0.0);
    for (off, j) in (i + 1..n).enumerate() {
        let a = (u[i] - u[j]).abs();
        let mut ss = 0.0;
        for c in 0..dim {
            let d = cols[c * n + i] - cols[c * n + j];
            ss += d * d;
        }
        let b = ss.sqrt();
        tab += a * b;
        ta += a;
        tb += b;
        ra[off] += a;
        rb[off] += b;
    }
    (tab, ta, tb)
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Statistic restricted to the strict exceedances of `radius_threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDCov {
    pub value: DCovValue,
    pub threshold: f64,
    pub exceedances: usize,
}

impl ConditionalDCov {
    /// `N · T_n`, the exceedance count times the statistic.
    pub fn scaled(&self) -> f64 {
        self.exceedances as f64 * self.value.t_n
    }
}

/// Distance covariance of `(log(R/r), Θ)` over the rows with `R > r`.
pub fn conditional_dcov(polar: &PolarSample, radius_threshold: f64) -> Result<ConditionalDCov> {
    let idx = polar.exceedances(radius_threshold);
    if idx.len() < 2 {
        return Err(Error::InsufficientExceedances {
            count: idx.len(),
            required: 2,
        });
    }
    let r = radius_threshold.max(0.0);
    let u: Vec<f64> = idx
        .iter()
        .map(|&i| log_ratio(polar.radii()[i], r))
        .collect();
    let mut v = Vec::with_capacity(idx.len() * polar.dim());
    for &i in &idx {
        v.extend_from_slice(polar.angle(i));
    }
    let value = dcov_fast(DCovInput::new(&u, &v, polar.dim())?)?;
    Ok(ConditionalDCov {
        value,
        threshold: radius_threshold,
        exceedances: idx.len(),
    })
}

/// `log(R/r)`; a nonpositive threshold contributes no shift (the statistic is
/// translation invariant in `u` anyway).
pub(crate) fn log_ratio(radius: f64, threshold: f64) -> f64 {
    if threshold > 0.0 {
        (radius / threshold).ln()
    } else {
        radius.ln()
    }
}
