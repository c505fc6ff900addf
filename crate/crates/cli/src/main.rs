use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tailgate_core::angular::{angular_ecdf, angular_kde, Bandwidth};
use tailgate_core::changepoint::{select_threshold, wbs_fit, Rule, Threshold, WbsParams};
use tailgate_core::changepoint::{DEFAULT_CUTOFF, DEFAULT_INTERVALS, DEFAULT_PENALTY};
use tailgate_core::datagen::{GeneratorSpec, Model};
use tailgate_core::dcov::conditional_dcov;
use tailgate_core::geometry::NormSpec;
use tailgate_core::io::{
    ingest_csv, read_json, read_polar_csv, write_json, write_polar_csv, write_sample_csv,
};
use tailgate_core::pipeline::{
    norm_sensitivity, prepare, run_pipeline, write_outputs, Grid, Input, Manifest, RunConfig,
};
use tailgate_core::pvalpath::{compute_path, empirical_upper_quantile, PValuePath, Sampling};

/// Exit status when the pipeline completes without selecting a threshold.
const EXIT_NO_THRESHOLD: u8 = 3;
const EXIT_ERROR: u8 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "tailgate",
    version,
    about = "Threshold selection for multivariate heavy tails"
)]
struct Cli {
    /// Worker threads for the p-value path (0 = all cores).
    #[arg(long, global = true, env = "TAILGATE_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a sample from a simulated model and write it as CSV.
    Simulate(SimulateArgs),
    /// Rank-standardize (optionally) and write `r, theta_1..d` as CSV.
    Transform(TransformArgs),
    /// Distance covariance of (log R, angle) above one threshold.
    Dcov(DcovArgs),
    /// Mean p-value path over a grid of threshold levels.
    Path(PathArgs),
    /// Fit WBS to a saved path and apply the selection rule.
    Select(SelectArgs),
    /// Angular ecdf (and optional kernel density) above one threshold.
    Angular(AngularArgs),
    /// Full pipeline; writes path, fit, selection, angular and manifest JSON.
    Run(RunArgs),
    /// Run the pipeline once per norm exponent on the same data.
    Sweep(SweepArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModelName {
    MixtureThreshold,
    BivariateLogistic,
    ParetoAlternating,
    ArPareto,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: Option<ModelName>,
    #[arg(long)]
    n: Option<usize>,
    /// Logistic dependence parameter in (0, 1).
    #[arg(long)]
    gamma: Option<f64>,
    /// AR coefficient, |phi| < 1.
    #[arg(long)]
    phi: Option<f64>,
}

impl ModelArgs {
    fn spec(&self, seed: u64) -> Result<GeneratorSpec> {
        let Some(name) = self.model else {
            bail!("--model is required");
        };
        let need = |v: Option<f64>, flag: &str| {
            v.with_context(|| format!("--{flag} is required for this model"))
        };
        let model = match name {
            ModelName::MixtureThreshold => Model::MixtureThreshold,
            ModelName::BivariateLogistic => Model::BivariateLogistic {
                gamma: need(self.gamma, "gamma")?,
            },
            ModelName::ParetoAlternating => Model::ParetoAlternating,
            ModelName::ArPareto => Model::ArPareto {
                phi: need(self.phi, "phi")?,
            },
        };
        model.validate()?;
        Ok(GeneratorSpec {
            model,
            n: self.n.context("--n is required")?,
            seed,
        })
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    norm_p: f64,
    /// Replace margins by `1/log(n/(rank − 0.5))` first.
    #[arg(long)]
    rank: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DcovArgs {
    /// Polar CSV as written by `transform`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Norm the polar file was computed under (recorded only).
    #[arg(long, default_value_t = 1.0)]
    norm_p: f64,
    #[arg(long)]
    threshold_quantile: f64,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Headered numeric CSV, one observation per row.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    norm_p: f64,
    #[arg(long)]
    rank: bool,
}

#[derive(Args, Debug)]
struct PathArgs {
    #[command(flatten)]
    sample: SampleArgs,
    /// `q_min:q_max:K`.
    #[arg(long, default_value = "0.01:0.4:150")]
    grid: Grid,
    #[arg(long, default_value_t = 500)]
    n0: usize,
    #[arg(long, default_value_t = 60)]
    m: usize,
    #[arg(long = "L", default_value_t = 200)]
    replicates: usize,
    #[arg(long)]
    without_replacement: bool,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Copy)]
struct SelectionFlags {
    #[arg(long, default_value = "liberal")]
    rule: Rule,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: f64,
    #[arg(long, default_value_t = DEFAULT_INTERVALS)]
    wbs_intervals: usize,
    /// Fixed WBS detection threshold; default is `C · σ̂ · √(2 log K)`.
    #[arg(long)]
    wbs_threshold: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_PENALTY)]
    wbs_c: f64,
}

impl SelectionFlags {
    fn wbs(&self, seed: u64) -> WbsParams {
        WbsParams {
            intervals: self.wbs_intervals,
            threshold: match self.wbs_threshold {
                Some(value) => Threshold::Fixed { value },
                None => Threshold::Auto { c: self.wbs_c },
            },
            seed,
        }
    }
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    path: PathBuf,
    #[command(flatten)]
    flags: SelectionFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the selection here; it is always printed to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    fit_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AngularArgs {
    #[command(flatten)]
    sample: SampleArgs,
    #[arg(long)]
    threshold_quantile: f64,
    #[arg(long)]
    kde: bool,
    /// `auto` (Silverman) or a positive number.
    #[arg(long, default_value = "auto")]
    bandwidth: String,
    #[arg(long)]
    out: PathBuf,
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth> {
    if s == "auto" {
        return Ok(Bandwidth::Auto);
    }
    let value: f64 = s
        .parse()
        .with_context(|| format!("bandwidth must be `auto` or a number, got `{s}`"))?;
    Ok(Bandwidth::Fixed { value })
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Run config or manifest JSON; other pipeline flags are ignored.
    #[arg(long, conflicts_with_all = ["input", "model"])]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Generator seed; defaults to `--seed`.
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    rank: bool,
    #[arg(long, default_value_t = 1.0)]
    norm_p: f64,
    #[arg(long, default_value = "0.01:0.4:150")]
    grid: Grid,
    #[arg(long, default_value_t = 500)]
    n0: usize,
    #[arg(long, default_value_t = 60)]
    m: usize,
    #[arg(long = "L", default_value_t = 200)]
    replicates: usize,
    #[command(flatten)]
    flags: SelectionFlags,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kde: bool,
    #[arg(long, default_value = "auto")]
    bandwidth: String,
}

impl PipelineArgs {
    fn config(&self) -> Result<RunConfig> {
        if let Some(path) = &self.config {
            return load_config(path);
        }
        let seed = self.seed.context("--seed is required")?;
        let input = match (&self.input, self.model.model) {
            (Some(path), None) => Input::Csv { path: path.clone() },
            (None, Some(_)) => Input::Generate {
                generator: self.model.spec(self.data_seed.unwrap_or(seed))?,
            },
            (Some(_), Some(_)) => bail!("give either --in or --model, not both"),
            (None, None) => bail!("one of --in, --model or --config is required"),
        };
        let config = RunConfig {
            input,
            rank: self.rank,
            norm_p: self.norm_p,
            grid: self.grid,
            n0: self.n0,
            m: self.m,
            replicates: self.replicates,
            sampling: Sampling::default(),
            wbs: self.flags.wbs(seed),
            rule: self.flags.rule,
            cutoff: self.flags.cutoff,
            seed,
            kde: if self.kde {
                Some(parse_bandwidth(&self.bandwidth)?)
            } else {
                None
            },
        };
        config.validate()?;
        Ok(config)
    }
}

/// Accepts either a bare run config or a manifest written by `run`.
fn load_config(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
        return Ok(m.config);
    }
    serde_json::from_str::<RunConfig>(&text)
        .with_context(|| format!("parsing run config {}", path.display()))
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value = "tailgate-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Comma-separated norm exponents.
    #[arg(long, value_delimiter = ',', default_value = "0.2,1,5")]
    p_list: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_polar(args: &SampleArgs) -> Result<tailgate_core::PolarSample> {
    let sample =
        ingest_csv(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    Ok(prepare(&sample, args.rank, NormSpec::new(args.norm_p)?)?)
}

#[derive(Serialize)]
struct DcovReport {
    threshold_quantile: f64,
    threshold_radius: f64,
    exceedances: usize,
    t_n: f64,
    n_p_hat_t_n: f64,
    clamped: f64,
}

/// `Ok(true)` when a threshold was selected (or the command has no such notion).
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(a) => {
            let sample = a.model.spec(a.seed)?.generate()?;
            write_sample_csv(&sample, &a.out)?;
        }
        Command::Transform(a) => {
            let polar = load_polar(&SampleArgs {
                input: a.input,
                norm_p: a.norm_p,
                rank: a.rank,
            })?;
            write_polar_csv(&polar, &a.out)?;
        }
        Command::Dcov(a) => {
            let polar = read_polar_csv(&a.input, NormSpec::new(a.norm_p)?)
                .with_context(|| format!("reading {}", a.input.display()))?;
            let r = empirical_upper_quantile(polar.radii(), a.threshold_quantile)?;
            let c = conditional_dcov(&polar, r)?;
            print_json(&DcovReport {
                threshold_quantile: a.threshold_quantile,
                threshold_radius: r,
                exceedances: c.exceedances,
                t_n: c.value.t_n,
                n_p_hat_t_n: c.scaled(),
                clamped: c.value.clamped,
            })?;
        }
        Command::Path(a) => {
            let polar = load_polar(&a.sample)?;
            let mut cfg =
                tailgate_core::PathConfig::new(a.grid.levels()?, a.n0, a.m, a.replicates, a.seed);
            if a.without_replacement {
                cfg.sampling = Sampling::WithoutReplacement;
            }
            let mut path = compute_path(&polar, &cfg)?;
            if let Some(t) = path.timing.take() {
                eprintln!(
                    "path: {} levels in {:.2}s on {} threads",
                    path.len(),
                    t.elapsed_seconds,
                    t.threads
                );
            }
            write_json(&path, &a.out)?;
        }
        Command::Select(a) => {
            let path: PValuePath =
                read_json(&a.path).with_context(|| format!("reading {}", a.path.display()))?;
            let fit = wbs_fit(&path, &a.flags.wbs(a.seed))?;
            let sel = select_threshold(&fit, &path, a.flags.rule, a.flags.cutoff)?;
            if let Some(p) = &a.fit_out {
                write_json(&fit, p)?;
            }
            if let Some(p) = &a.out {
                write_json(&sel, p)?;
            }
            print_json(&sel)?;
            return Ok(!sel.is_none());
        }
        Command::Angular(a) => {
            let polar = load_polar(&a.sample)?;
            let r = empirical_upper_quantile(polar.radii(), a.threshold_quantile)?;
            let est = if a.kde {
                angular_kde(&polar, r, parse_bandwidth(&a.bandwidth)?)?
            } else {
                angular_ecdf(&polar, r)?
            };
            write_json(&est.with_level(a.threshold_quantile), &a.out)?;
        }
        Command::Run(a) => {
            let config = a.pipeline.config()?;
            let out = run_pipeline(&config)?;
            write_outputs(&a.out_dir, &config, &out)?;
            match out.selection.selected_level {
                Some(q) => eprintln!("selected level {q:.4} ({:?})", out.selection.outcome),
                None => eprintln!("no threshold selected ({:?})", out.selection.outcome),
            }
            return Ok(!out.selection.is_none());
        }
        Command::Sweep(a) => {
            let config = a.pipeline.config()?;
            let report = norm_sensitivity(&config, &a.p_list)?;
            write_json(&report, &a.out)?;
            print!("{}", report.table());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NO_THRESHOLD),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
