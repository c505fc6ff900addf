//! Piecewise-constant fit of the mean p-value path by wild binary
//! segmentation, and the cutoff rules that turn the fit into a threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pvalpath::PValuePath;
use crate::rng::{Domain, StreamFamily};
use crate::stats::mad;

pub const DEFAULT_INTERVALS: usize = 5000;
pub const DEFAULT_PENALTY: f64 = 1.3;
pub const DEFAULT_CUTOFF: f64 = 0.45;
/// Statistics at or below this are rounding noise, whatever the threshold.
const STAT_FLOOR: f64 = 1e-9;

/// Balanced two-sample CUSUM contrast of `x` split after position `b`
/// (1-based, `1 ≤ b < x.len()`).
pub fn cusum_statistic(x: &[f64], b: usize) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InsufficientData { n: x.len(), min: 2 });
    }
    if b == 0 || b >= x.len() {
        return Err(Error::param(
            "b",
            format!("split must satisfy 1 <= b < {}, got {b}", x.len()),
        ));
    }
    let prefix = Prefix::new(x);
    Ok(prefix.contrast(0, x.len() - 1, b - 1))
}

/// Location (1-based) and value of the largest CUSUM contrast; ties go to
/// the earliest split.
pub fn cusum_argmax(x: &[f64]) -> Result<(usize, f64)> {
    if x.len() < 2 {
        return Err(Error::InsufficientData { n: x.len(), min: 2 });
    }
    let (b, stat) = Prefix::new(x).best_split(0, x.len() - 1);
    Ok((b + 1, stat))
}

struct Prefix(Vec<f64>);

impl Prefix {
    fn new(x: &[f64]) -> Self {
        let mut p = Vec::with_capacity(x.len() + 1);
        p.push(0.0);
        let mut acc = 0.0;
        for v in x {
            acc += v;
            p.push(acc);
        }
        Prefix(p)
    }

    /// Contrast on `s..=e` (0-based) with the left part `s..=b`.
    fn contrast(&self, s: usize, e: usize, b: usize) -> f64 {
        let n = (e - s + 1) as f64;
        let nl = (b - s + 1) as f64;
        let nr = (e - b) as f64;
        let left = self.0[b + 1] - self.0[s];
        let right = self.0[e + 1] - self.0[b + 1];
        ((nr / (n * nl)).sqrt() * left - (nl / (n * nr)).sqrt() * right).abs()
    }

    /// 0-based split with the largest contrast on `s..=e` (`e > s`).
    fn best_split(&self, s: usize, e: usize) -> (usize, f64) {
        let mut best = (s, self.contrast(s, e, s));
        for b in s + 1..e {
            let c = self.contrast(s, e, b);
            if c > best.1 {
                best = (b, c);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Threshold {
    /// `C · σ̂ · √(2 log K)` with `σ̂ = MAD(first differences) / √2`.
    Auto {
        c: f64,
    },
    Fixed {
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WbsParams {
    pub intervals: usize,
    pub threshold: Threshold,
    pub seed: u64,
}

impl Default for WbsParams {
    fn default() -> Self {
        Self {
            intervals: DEFAULT_INTERVALS,
            threshold: Threshold::Auto { c: DEFAULT_PENALTY },
            seed: 0,
        }
    }
}

/// A constant piece of the fit, inclusive grid indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub mean: f64,
}

/// Fit of a plain series. Positions are 0-based; a breakpoint is the last
/// position before a change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFit {
    pub breakpoints: Vec<usize>,
    pub segments: Vec<Segment>,
    pub threshold: f64,
    pub sigma: f64,
}

impl SeriesFit {
    pub fn fitted(&self) -> Vec<f64> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.mean, s.end - s.start + 1))
            .collect()
    }
}

/// Wild binary segmentation of an arbitrary series (`len ≥ 4`).
pub fn wbs_fit_series(x: &[f64], params: &WbsParams) -> Result<SeriesFit> {
    let k = x.len();
    if k < 4 {
        return Err(Error::PathTooShort { len: k });
    }
    if params.intervals == 0 {
        return Err(Error::param(
            "intervals",
            "at least one random interval is required",
        ));
    }
    let diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let sigma = mad(&diffs).unwrap_or(0.0) / std::f64::consts::SQRT_2;
    let threshold = match params.threshold {
        Threshold::Auto { c } => c * sigma * (2.0 * (k as f64).ln()).sqrt(),
        Threshold::Fixed { value } => value,
    };
    let floor = STAT_FLOOR * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));

    let prefix = Prefix::new(x);
    let mut rng = StreamFamily::new(params.seed, Domain::Segmentation).stream(k as u64);
    let candidates: Vec<Candidate> = (0..params.intervals)
        .map(|_| {
            let (s, e) = random_interval(&mut rng, k);
            let (b, stat) = prefix.best_split(s, e);
            Candidate { s, e, b, stat }
        })
        .collect();

    let mut breakpoints = Vec::new();
    let mut stack = vec![(0usize, k - 1)];
    while let Some((s, e)) = stack.pop() {
        if e <= s {
            continue;
        }
        let (b, stat) = prefix.best_split(s, e);
        let mut best = Candidate { s, e, b, stat };
        for c in candidates.iter().filter(|c| c.s >= s && c.e <= e) {
            if c.stat > best.stat {
                best = *c;
            }
        }
        if best.stat > threshold && best.stat > floor {
            breakpoints.push(best.b);
            stack.push((best.b + 1, e));
            stack.push((s, best.b));
        }
    }
    breakpoints.sort_unstable();

    let mut segments = Vec::with_capacity(breakpoints.len() + 1);
    let mut start = 0;
    for &end in breakpoints.iter().chain(std::iter::once(&(k - 1))) {
        let seg = &x[start..=end];
        segments.push(Segment {
            start,
            end,
            mean: seg.iter().sum::<f64>() / seg.len() as f64,
        });
        start = end + 1;
    }
    Ok(SeriesFit {
        breakpoints,
        segments,
        threshold,
        sigma,
    })
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    s: usize,
    e: usize,
    b: usize,
    stat: f64,
}

fn random_interval<R: Rng>(rng: &mut R, k: usize) -> (usize, usize) {
    loop {
        let a = rng.random_range(0..k);
        let b = rng.random_range(0..k);
        if a != b {
            return (a.min(b), a.max(b));
        }
    }
}

/// WBS fit of a p-value path over its usable levels, indexed by grid level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedFit {
    /// Length of the path's level grid.
    pub n_levels: usize,
    /// Grid indices the fit covers (the usable levels, in order).
    pub grid_indices: Vec<usize>,
    /// Grid index of the last level before each change.
    pub breakpoints: Vec<usize>,
    /// Segments in grid indices; each mean is the arithmetic mean of the path
    /// over the segment's usable levels.
    pub segments: Vec<Segment>,
    pub params: WbsParams,
    pub threshold: f64,
    pub sigma: f64,
}

impl SegmentedFit {
    /// Fitted value at every covered grid index, in order.
    pub fn fitted(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.grid_indices.len());
        let mut seg = self.segments.iter().peekable();
        for &g in &self.grid_indices {
            while let Some(s) = seg.peek() {
                if g > s.end {
                    seg.next();
                } else {
                    break;
                }
            }
            if let Some(s) = seg.peek() {
                out.push((g, s.mean));
            }
        }
        out
    }
}

pub fn wbs_fit(path: &PValuePath, params: &WbsParams) -> Result<SegmentedFit> {
    let (grid, values) = path.usable();
    let series = wbs_fit_series(&values, params)?;
    Ok(SegmentedFit {
        n_levels: path.len(),
        breakpoints: series.breakpoints.iter().map(|&b| grid[b]).collect(),
        segments: series
            .segments
            .iter()
            .map(|s| Segment {
                start: grid[s.start],
                end: grid[s.end],
                mean: s.mean,
            })
            .collect(),
        grid_indices: grid,
        params: *params,
        threshold: series.threshold,
        sigma: series.sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// Smallest level beyond which the fit stays below the cutoff.
    Liberal,
    /// End of the initial run of levels whose fit stays above the cutoff.
    Conservative,
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "liberal" => Ok(Rule::Liberal),
            "conservative" => Ok(Rule::Conservative),
            other => Err(Error::param("rule", format!("unknown rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// A level strictly inside the grid was chosen.
    Selected,
    /// The fit never drops below the cutoff; the largest level is used.
    NoDrop,
    /// The fit is below the cutoff at every level: no threshold.
    AllBelowCutoff,
    /// Conservative rule only: the fit starts below the cutoff.
    NoLeadingRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected_level: Option<f64>,
    pub selected_index: Option<usize>,
    pub selected_radius: Option<f64>,
    /// Exceedance count at the selected radius.
    pub selected_exceedances: Option<usize>,
    pub rule: Rule,
    pub cutoff: f64,
    pub outcome: Outcome,
    pub segments: Vec<Segment>,
    pub trace: Vec<String>,
}

impl SelectionResult {
    pub fn is_none(&self) -> bool {
        self.selected_level.is_none()
    }
}

/// Applies the cutoff rule to the fitted step function.
pub fn select_threshold(
    fit: &SegmentedFit,
    path: &PValuePath,
    rule: Rule,
    cutoff: f64,
) -> Result<SelectionResult> {
    if fit.n_levels != path.len() {
        return Err(Error::GridMismatch(format!(
            "fit covers {} levels, path has {}",
            fit.n_levels,
            path.len()
        )));
    }
    if fit.grid_indices != path.usable().0 {
        return Err(Error::GridMismatch(
            "fit was computed on a different set of usable levels".into(),
        ));
    }
    let fitted = fit.fitted();
    if fitted.is_empty() {
        return Err(Error::PathTooShort { len: 0 });
    }

    let mut trace: Vec<String> = fit
        .segments
        .iter()
        .map(|s| {
            format!(
                "levels {:.4}..{:.4}: fitted {:.4} ({} cutoff {cutoff})",
                path.levels[s.start],
                path.levels[s.end],
                s.mean,
                if s.mean < cutoff {
                    "below"
                } else {
                    "not below"
                }
            )
        })
        .collect();

    let (pick, outcome) = match rule {
        Rule::Liberal => {
            if fitted.iter().all(|&(_, v)| v >= cutoff) {
                (fitted.last().map(|f| f.0), Outcome::NoDrop)
            } else {
                match fitted.iter().rposition(|&(_, v)| v >= cutoff) {
                    Some(p) => (Some(fitted[p].0), Outcome::Selected),
                    None => (None, Outcome::AllBelowCutoff),
                }
            }
        }
        Rule::Conservative => match fitted.iter().position(|&(_, v)| v <= cutoff) {
            None => (fitted.last().map(|f| f.0), Outcome::NoDrop),
            Some(0) if fitted.iter().all(|&(_, v)| v < cutoff) => (None, Outcome::AllBelowCutoff),
            Some(0) => (None, Outcome::NoLeadingRun),
            Some(p) => (Some(fitted[p - 1].0), Outcome::Selected),
        },
    };

    trace.push(match pick {
        Some(k) => format!(
            "{rule:?} rule selects level {:.4} ({outcome:?})",
            path.levels[k]
        ),
        None => format!("{rule:?} rule selects no threshold ({outcome:?})"),
    });

    Ok(SelectionResult {
        selected_level: pick.map(|k| path.levels[k]),
        selected_index: pick,
        selected_radius: pick.map(|k| path.radii[k]),
        selected_exceedances: pick.map(|k| path.exceedance_counts[k]),
        rule,
        cutoff,
        outcome,
        segments: fit.segments.clone(),
        trace,
    })
}
