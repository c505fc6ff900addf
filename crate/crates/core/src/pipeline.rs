//! End-to-end run: ingest or simulate, transform, path, fit, select, angular.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::angular::{angular_ecdf, angular_kde, AngularEstimate, Bandwidth};
use crate::changepoint::{
    select_threshold, wbs_fit, Outcome, Rule, SegmentedFit, SelectionResult, WbsParams,
    DEFAULT_CUTOFF,
};
use crate::datagen::GeneratorSpec;
use crate::error::{Error, Result};
use crate::geometry::{rank_transform, to_polar, NormSpec, PolarSample};
use crate::io::{ingest_csv, read_json, write_json};
use crate::pvalpath::{compute_path, quantile_grid, PValuePath, PathConfig, Sampling, Timing};
use crate::sample::Sample;

pub const MIN_GRID_LEVELS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum Input {
    Csv { path: PathBuf },
    Generate { generator: GeneratorSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub q_min: f64,
    pub q_max: f64,
    pub k: usize,
}

impl Grid {
    pub fn levels(&self) -> Result<Vec<f64>> {
        if self.k < MIN_GRID_LEVELS {
            return Err(Error::param(
                "grid",
                format!("K must be at least {MIN_GRID_LEVELS}, got {}", self.k),
            ));
        }
        quantile_grid(self.q_min, self.q_max, self.k)
    }
}

impl std::str::FromStr for Grid {
    type Err = Error;

    /// `q_min:q_max:K`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("grid", format!("expected q_min:q_max:K, got `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Grid {
            q_min: parts[0].trim().parse().map_err(|_| bad())?,
            q_max: parts[1].trim().parse().map_err(|_| bad())?,
            k: parts[2].trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: Input,
    /// Replace each margin by `1/log(n/(rank − 0.5))` before the polar map.
    #[serde(default)]
    pub rank: bool,
    pub norm_p: f64,
    pub grid: Grid,
    pub n0: usize,
    pub m: usize,
    #[serde(rename = "L")]
    pub replicates: usize,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub wbs: WbsParams,
    pub rule: Rule,
    pub cutoff: f64,
    /// Seeds the p-value path. No default: runs are never seeded from the clock.
    pub seed: u64,
    /// Kernel density of the angle at the selected threshold, if set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kde: Option<Bandwidth>,
}

impl RunConfig {
    /// Protocol used for the simulated examples: K levels on `[q_min, q_max]`,
    /// `n0 = 500`, L1 norm, liberal rule at 0.45.
    pub fn simulated(
        generator: GeneratorSpec,
        grid: Grid,
        m: usize,
        replicates: usize,
        seed: u64,
    ) -> Self {
        Self {
            input: Input::Generate { generator },
            rank: false,
            norm_p: 1.0,
            grid,
            n0: 500,
            m,
            replicates,
            sampling: Sampling::default(),
            wbs: WbsParams {
                seed,
                ..WbsParams::default()
            },
            rule: Rule::Liberal,
            cutoff: DEFAULT_CUTOFF,
            seed,
            kde: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        NormSpec::new(self.norm_p)?;
        self.grid.levels()?;
        self.path_config()?.validate()?;
        if self.wbs.intervals == 0 {
            return Err(Error::param("wbs.intervals", "must be positive"));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::param(
                "cutoff",
                format!("must lie in (0, 1), got {}", self.cutoff),
            ));
        }
        if let Input::Generate { generator } = &self.input {
            generator.model.validate()?;
        }
        Ok(())
    }

    pub fn path_config(&self) -> Result<PathConfig> {
        let mut cfg = PathConfig::new(
            self.grid.levels()?,
            self.n0,
            self.m,
            self.replicates,
            self.seed,
        );
        cfg.sampling = self.sampling;
        Ok(cfg)
    }

    /// The raw sample named by `input`, before any transform.
    pub fn load_sample(&self) -> Result<Sample> {
        match &self.input {
            Input::Csv { path } => ingest_csv(path),
            Input::Generate { generator } => generator.generate(),
        }
    }
}

/// Rank transform (optional), nonnegativity check, polar map.
pub fn prepare(sample: &Sample, rank: bool, norm: NormSpec) -> Result<PolarSample> {
    let ranked;
    let sample = if rank {
        ranked = rank_transform(sample)?;
        &ranked
    } else {
        sample
    };
    sample.ensure_nonnegative()?;
    to_polar(sample, norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub path: PValuePath,
    pub fit: SegmentedFit,
    pub selection: SelectionResult,
    /// Present when a threshold was selected with enough exceedances.
    pub angular: Option<AngularEstimate>,
}

pub fn run_pipeline(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let sample = config.load_sample()?;
    run_on_sample(&sample, config)
}

/// As [`run_pipeline`] with the input already in memory; `config.input` is
/// ignored.
pub fn run_on_sample(sample: &Sample, config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let polar = prepare(sample, config.rank, NormSpec::new(config.norm_p)?)?;
    run_on_polar(&polar, config)
}

pub fn run_on_polar(polar: &PolarSample, config: &RunConfig) -> Result<RunOutput> {
    let path = compute_path(polar, &config.path_config()?)?;
    let fit = wbs_fit(&path, &config.wbs)?;
    let selection = select_threshold(&fit, &path, config.rule, config.cutoff)?;
    let angular = match (selection.selected_radius, selection.selected_level) {
        (Some(r), Some(q)) => {
            let est = match config.kde {
                Some(bw) => angular_kde(polar, r, bw),
                None => angular_ecdf(polar, r),
            };
            match est {
                Ok(e) => Some(e.with_level(q)),
                Err(Error::InsufficientExceedances { .. }) => None,
                Err(e) => return Err(e),
            }
        }
        _ => None,
    };
    Ok(RunOutput {
        path,
        fit,
        selection,
        angular,
    })
}

pub const PATH_FILE: &str = "path.json";
pub const FIT_FILE: &str = "fit.json";
pub const SELECTION_FILE: &str = "selection.json";
pub const ANGULAR_FILE: &str = "angular.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Run record. Rerunning `config` reproduces every other output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
    /// Wall-clock diagnostics; the only nondeterministic field of a run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

/// Writes the output files into `dir` (created if missing). Timing goes to
/// the manifest only, so `path.json` is byte-identical across reruns and
/// thread counts.
pub fn write_outputs(
    dir: impl AsRef<Path>,
    config: &RunConfig,
    out: &RunOutput,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut path = out.path.clone();
    let timing = path.timing.take();
    write_json(&path, dir.join(PATH_FILE))?;
    write_json(&out.fit, dir.join(FIT_FILE))?;
    write_json(&out.selection, dir.join(SELECTION_FILE))?;
    let mut outputs = vec![PATH_FILE, FIT_FILE, SELECTION_FILE];
    if let Some(a) = &out.angular {
        write_json(a, dir.join(ANGULAR_FILE))?;
        outputs.push(ANGULAR_FILE);
    } else {
        // A stale file from an earlier run would contradict the selection.
        let stale = dir.join(ANGULAR_FILE);
        if stale.exists() {
            std::fs::remove_file(stale)?;
        }
    }
    let manifest = Manifest {
        tool: "tailgate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        outputs: outputs.into_iter().map(String::from).collect(),
        timing,
    };
    write_json(&manifest, dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    read_json(path)
}

/// One row of a norm-sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub norm_p: f64,
    pub outcome: Outcome,
    pub selected_level: Option<f64>,
    pub selected_radius: Option<f64>,
    pub levels: Vec<f64>,
    pub radii: Vec<f64>,
    pub mean_pvalues: Vec<Option<f64>>,
    /// `(grid index, fitted value)`.
    pub fitted: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub base: RunConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Fixed-width comparison table, one line per norm.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:>8}  {:>10}  {:>12}  {}\n",
            "p", "level", "radius", "outcome"
        );
        for r in &self.rows {
            let fmt = |v: Option<f64>, prec: usize| {
                v.map_or_else(|| "none".to_string(), |x| format!("{x:.prec$}"))
            };
            s.push_str(&format!(
                "{:>8}  {:>10}  {:>12}  {:?}\n",
                r.norm_p,
                fmt(r.selected_level, 4),
                fmt(r.selected_radius, 4),
                r.outcome
            ));
        }
        s
    }
}

/// Runs the pipeline once per norm exponent on the same data and seed.
pub fn norm_sensitivity(base: &RunConfig, p_list: &[f64]) -> Result<SweepReport> {
    if p_list.is_empty() {
        return Err(Error::param(
            "p_list",
            "at least one norm exponent is required",
        ));
    }
    base.validate()?;
    let sample = base.load_sample()?;
    let rows = p_list
        .iter()
        .map(|&p| {
            let cfg = RunConfig {
                norm_p: p,
                kde: None,
                ..base.clone()
            };
            let out = run_on_sample(&sample, &cfg)?;
            Ok(SweepRow {
                norm_p: p,
                outcome: out.selection.outcome,
                selected_level: out.selection.selected_level,
                selected_radius: out.selection.selected_radius,
                levels: out.path.levels.clone(),
                radii: out.path.radii.clone(),
                mean_pvalues: out.path.mean_pvalues.clone(),
                fitted: out.fit.fitted(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        base: base.clone(),
        rows,
    })
}
