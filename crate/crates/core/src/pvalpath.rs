//! Subsampled permutation p-values along a grid of radial thresholds.
//!
//! For each upper-quantile level `q_k` the strict exceedances of the empirical
//! radius quantile `r_k` form the pool. One subsample p-value draws `n_k`
//! pairs from the pool and compares its statistic with `L` replicates whose
//! radii and angles are drawn independently from the pool's two marginals.
//! Averaging `m` such p-values gives the mean p-value at level `k`.
//!
//! Every draw for `(level k, subsample j, replicate l)` comes from its own
//! stream (`l = 0` is the observed subsample), so the path is bit-identical at
//! any thread count.

use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcov::{log_ratio, DCovKernel};
use crate::error::{Error, Result};
use crate::geometry::PolarSample;
use crate::rng::{
    path_stream_id, Domain, StreamFamily, MAX_LEVELS, MAX_REPLICATES, MAX_SUBSAMPLES,
};

/// Smallest subsample the statistic is evaluated on.
pub const MIN_SUBSAMPLE: usize = 10;
/// Fewest null replicates accepted.
pub const MIN_REPLICATES: usize = 19;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// iid draws from the pool's empirical distribution.
    #[default]
    WithReplacement,
    WithoutReplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Upper-tail levels, strictly increasing inside (0, 1).
    pub levels: Vec<f64>,
    /// Base subsample size; level `k` uses `round(n0 · q_k)`, floored at
    /// [`MIN_SUBSAMPLE`].
    pub n0: usize,
    /// Subsamples per level (`m`).
    pub subsamples: usize,
    /// Null replicates per subsample (`L`).
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
}

impl PathConfig {
    pub fn new(
        levels: Vec<f64>,
        n0: usize,
        subsamples: usize,
        replicates: usize,
        seed: u64,
    ) -> Self {
        Self {
            levels,
            n0,
            subsamples,
            replicates,
            seed,
            sampling: Sampling::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::param("levels", "at least one level is required"));
        }
        if self.levels.len() >= MAX_LEVELS {
            return Err(Error::param(
                "levels",
                format!("at most {} levels", MAX_LEVELS - 1),
            ));
        }
        if let Some(q) = self.levels.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return Err(Error::param(
                "levels",
                format!("level {q} is outside (0, 1)"),
            ));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("levels", "levels must be strictly increasing"));
        }
        if self.n0 == 0 {
            return Err(Error::param("n0", "must be positive"));
        }
        if self.subsamples == 0 || self.subsamples >= MAX_SUBSAMPLES {
            return Err(Error::param(
                "m",
                format!("must lie in 1..{MAX_SUBSAMPLES}, got {}", self.subsamples),
            ));
        }
        if self.replicates < MIN_REPLICATES || self.replicates > MAX_REPLICATES {
            return Err(Error::param(
                "L",
                format!(
                    "must lie in {MIN_REPLICATES}..={MAX_REPLICATES}, got {}",
                    self.replicates
                ),
            ));
        }
        Ok(())
    }

    pub fn subsample_size(&self, level: f64) -> usize {
        ((self.n0 as f64 * level).round() as usize).max(MIN_SUBSAMPLE)
    }
}

/// `k` equally spaced levels from `q_min` to `q_max` inclusive.
pub fn quantile_grid(q_min: f64, q_max: f64, k: usize) -> Result<Vec<f64>> {
    if !(q_min > 0.0 && q_min < q_max && q_max < 1.0) {
        return Err(Error::param(
            "grid",
            format!("need 0 < q_min < q_max < 1, got {q_min}:{q_max}"),
        ));
    }
    if k < 2 {
        return Err(Error::param("grid", "at least two levels are required"));
    }
    let step = (q_max - q_min) / (k - 1) as f64;
    Ok((0..k)
        .map(|i| {
            if i + 1 == k {
                q_max
            } else {
                q_min + step * i as f64
            }
        })
        .collect())
}

/// The `⌈n·q⌉`-th largest radius. Exceedance downstream is strict (`R > r`).
pub fn empirical_upper_quantile(radii: &[f64], q: f64) -> Result<f64> {
    if radii.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    upper_quantile_sorted_desc(&sorted, q)
}

fn upper_quantile_sorted_desc(desc: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", format!("level {q} is outside (0, 1)")));
    }
    let n = desc.len();
    // Guard against n·q landing a hair above an integer.
    let rank = ((n as f64 * q - 1e-9).ceil() as usize).clamp(1, n);
    Ok(desc[rank - 1])
}

/// The exceedance pool at one threshold: `log(R/r)` and the angles stored
/// column-major.
///
/// Bivariate L1 angles lie on the segment `θ₂ = 1 − θ₁`, where the Euclidean
/// angle distance is `√2 |Δθ₁|`; such pools keep only `θ₁` and rescale the
/// statistic, which is linear in the angle distance.
#[derive(Debug, Clone)]
pub struct ExceedancePool {
    log_r: Vec<f64>,
    columns: Vec<f64>,
    dim: usize,
    scale: f64,
}

impl ExceedancePool {
    pub fn new(polar: &PolarSample, threshold: f64) -> Self {
        let idx = polar.exceedances(threshold);
        let n = idx.len();
        let on_segment = polar.dim() == 2 && polar.norm().p() == 1.0;
        let dim = if on_segment { 1 } else { polar.dim() };
        let scale = if on_segment {
            std::f64::consts::SQRT_2
        } else {
            1.0
        };
        let log_r = idx
            .iter()
            .map(|&i| log_ratio(polar.radii()[i], threshold))
            .collect();
        let mut columns = vec![0.0; n * dim];
        for (pos, &i) in idx.iter().enumerate() {
            for (c, &x) in polar.angle(i)[..dim].iter().enumerate() {
                columns[c * n + pos] = x;
            }
        }
        Self {
            log_r,
            columns,
            dim,
            scale,
        }
    }

    pub fn len(&self) -> usize {
        self.log_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_r.is_empty()
    }
}

/// Outcome of one subsample test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsampleTest {
    pub pvalue: f64,
    pub statistic: f64,
}

/// The random streams owned by one `(level, subsample)` task.
#[derive(Debug, Clone, Copy)]
pub struct SubsampleStreams<'a> {
    pub family: &'a StreamFamily,
    pub level: usize,
    pub subsample: usize,
}

impl SubsampleStreams<'_> {
    fn replicate(&self, l: usize) -> ChaCha8Rng {
        self.family
            .stream(path_stream_id(self.level, self.subsample, l))
    }
}

/// Scratch buffers for repeated subsample tests on one thread.
#[derive(Debug, Default)]
pub struct Workspace {
    kernel: DCovKernel,
    u: Vec<f64>,
    cols: Vec<f64>,
    idx_r: Vec<usize>,
    idx_theta: Vec<usize>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn statistic(&mut self, pool: &ExceedancePool) -> f64 {
        let n = self.idx_r.len();
        let pool_n = pool.len();
        self.u.clear();
        self.u.extend(self.idx_r.iter().map(|&i| pool.log_r[i]));
        self.cols.clear();
        for c in 0..pool.dim {
            let col = &pool.columns[c * pool_n..(c + 1) * pool_n];
            self.cols.extend(self.idx_theta.iter().map(|&i| col[i]));
        }
        debug_assert_eq!(self.cols.len(), n * pool.dim);
        self.kernel
            .evaluate_columns(&self.u, &self.cols, pool.dim)
            .t_n
            * pool.scale
    }
}

fn draw_indices<R: Rng>(
    rng: &mut R,
    pool: usize,
    size: usize,
    sampling: Sampling,
    out: &mut Vec<usize>,
) {
    out.clear();
    match sampling {
        Sampling::WithReplacement => out.extend((0..size).map(|_| rng.random_range(0..pool))),
        Sampling::WithoutReplacement => out.extend(index::sample(rng, pool, size).iter()),
    }
}

/// One subsample p-value `(1 + #{T̃ ≥ T}) / (L + 1)`.
pub fn subsample_test(
    pool: &ExceedancePool,
    size: usize,
    replicates: usize,
    sampling: Sampling,
    streams: SubsampleStreams<'_>,
    ws: &mut Workspace,
) -> Result<SubsampleTest> {
    let required = size.max(MIN_SUBSAMPLE);
    if pool.len() < required {
        return Err(Error::InsufficientExceedances {
            count: pool.len(),
            required,
        });
    }

    let mut rng = streams.replicate(0);
    draw_indices(&mut rng, pool.len(), size, sampling, &mut ws.idx_r);
    ws.idx_theta.clone_from(&ws.idx_r);
    let observed = ws.statistic(pool);

    let mut at_least = 0usize;
    for l in 1..=replicates {
        let mut rng = streams.replicate(l);
        draw_indices(&mut rng, pool.len(), size, sampling, &mut ws.idx_r);
        draw_indices(&mut rng, pool.len(), size, sampling, &mut ws.idx_theta);
        if ws.statistic(pool) >= observed {
            at_least += 1;
        }
    }
    Ok(SubsampleTest {
        pvalue: (1 + at_least) as f64 / (replicates + 1) as f64,
        statistic: observed,
    })
}

/// Convenience wrapper: builds the pool for upper level `q` of `polar` and
/// runs one subsample test on stream `(level_index, subsample)` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn subsample_pvalue(
    polar: &PolarSample,
    q: f64,
    size: usize,
    replicates: usize,
    seed: u64,
    level_index: usize,
    subsample: usize,
) -> Result<SubsampleTest> {
    let r = empirical_upper_quantile(polar.radii(), q)?;
    let pool = ExceedancePool::new(polar, r);
    let family = StreamFamily::new(seed, Domain::Path);
    subsample_test(
        &pool,
        size,
        replicates,
        Sampling::WithReplacement,
        SubsampleStreams {
            family: &family,
            level: level_index,
            subsample,
        },
        &mut Workspace::new(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum LevelFlag {
    Usable,
    InsufficientExceedances { count: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
    pub threads: usize,
}

/// The mean p-value path with everything needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValuePath {
    pub config: PathConfig,
    pub levels: Vec<f64>,
    /// Empirical upper-`q_k` radius quantiles.
    pub radii: Vec<f64>,
    pub subsample_sizes: Vec<usize>,
    pub exceedance_counts: Vec<usize>,
    /// `None` for unusable levels.
    pub mean_pvalues: Vec<Option<f64>>,
    /// `K × m`; empty rows for unusable levels.
    pub raw_pvalues: Vec<Vec<f64>>,
    pub flags: Vec<LevelFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl PValuePath {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Grid indices and mean p-values of the usable levels.
    pub fn usable(&self) -> (Vec<usize>, Vec<f64>) {
        self.mean_pvalues
            .iter()
            .enumerate()
            .filter_map(|(k, m)| m.map(|m| (k, m)))
            .unzip()
    }
}

/// Computes the mean p-value path. Levels whose pool is smaller than their
/// subsample size are flagged, not dropped.
pub fn compute_path(polar: &PolarSample, config: &PathConfig) -> Result<PValuePath> {
    config.validate()?;
    let started = Instant::now();
    let mut desc = polar.radii().to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));

    let radii = config
        .levels
        .iter()
        .map(|&q| upper_quantile_sorted_desc(&desc, q))
        .collect::<Result<Vec<_>>>()?;
    let pools: Vec<ExceedancePool> = radii
        .par_iter()
        .map(|&r| ExceedancePool::new(polar, r))
        .collect();
    let sizes: Vec<usize> = config
        .levels
        .iter()
        .map(|&q| config.subsample_size(q))
        .collect();
    let flags: Vec<LevelFlag> = pools
        .iter()
        .zip(&sizes)
        .map(|(pool, &size)| {
            if pool.len() >= size {
                LevelFlag::Usable
            } else {
                LevelFlag::InsufficientExceedances {
                    count: pool.len(),
                    required: size,
                }
            }
        })
        .collect();

    let m = config.subsamples;
    let tasks: Vec<(usize, usize)> = (0..config.levels.len())
        .filter(|&k| flags[k] == LevelFlag::Usable)
        .flat_map(|k| (0..m).map(move |j| (k, j)))
        .collect();
    let family = StreamFamily::new(config.seed, Domain::Path);
    let pvalues: Vec<f64> = tasks
        .par_iter()
        .map_init(Workspace::new, |ws, &(k, j)| {
            subsample_test(
                &pools[k],
                sizes[k],
                config.replicates,
                config.sampling,
                SubsampleStreams {
                    family: &family,
                    level: k,
                    subsample: j,
                },
                ws,
            )
            .map(|t| t.pvalue)
        })
        .collect::<Result<_>>()?;

    let mut raw_pvalues = vec![Vec::new(); config.levels.len()];
    for (chunk, &(k, _)) in pvalues.chunks_exact(m).zip(tasks.iter().step_by(m)) {
        raw_pvalues[k] = chunk.to_vec();
    }
    let mean_pvalues = raw_pvalues
        .iter()
        .map(|row| (!row.is_empty()).then(|| row.iter().sum::<f64>() / row.len() as f64))
        .collect();

    Ok(PValuePath {
        config: config.clone(),
        levels: config.levels.clone(),
        radii,
        subsample_sizes: sizes,
        exceedance_counts: pools.iter().map(ExceedancePool::len).collect(),
        mean_pvalues,
        raw_pvalues,
        flags,
        timing: Some(Timing {
            elapsed_seconds: started.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        }),
    })
}
