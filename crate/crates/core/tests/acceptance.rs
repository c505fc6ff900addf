//! Acceptance gate. Runs every criterion and prints one PASS/FAIL line each.
//!
//! `cargo test -p tailgate-core --test acceptance` runs all of them;
//! `cargo test -p tailgate-core --test acceptance -- 3 7` runs a subset.

use std::io::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use tailgate_core::angular::LogisticAngular;
use tailgate_core::changepoint::{cusum_argmax, wbs_fit_series, Outcome, WbsParams};
use tailgate_core::datagen::{gen_mixture_threshold, GeneratorSpec, Model};
use tailgate_core::dcov::{conditional_dcov, dcov_fast, dcov_naive, DCovInput};
use tailgate_core::geometry::{rank_transform, to_polar, NormSpec, PolarSample};
use tailgate_core::io::{ingest_csv, write_sample_csv};
use tailgate_core::pipeline::{
    run_pipeline, write_outputs, Grid, Input, RunConfig, RunOutput, PATH_FILE, SELECTION_FILE,
};
use tailgate_core::pvalpath::{compute_path, quantile_grid, PathConfig};
use tailgate_core::stats::{ks_distance, ks_pvalue, median};
use tailgate_core::Sample;

const SEEDS: u64 = 10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn full_grid(q_max: f64) -> Grid {
    Grid {
        q_min: 0.01,
        q_max,
        k: 150,
    }
}

fn simulated(model: Model, n: usize, grid: Grid, m: usize, l: usize, seed: u64) -> RunConfig {
    RunConfig::simulated(GeneratorSpec { model, n, seed }, grid, m, l, seed)
}

/// Runs one config per seed (seeds in parallel, results in seed order).
fn per_seed<F>(make: F) -> Vec<RunOutput>
where
    F: Fn(u64) -> RunConfig + Sync,
{
    (0..SEEDS)
        .into_par_iter()
        .map(|seed| run_pipeline(&make(seed)).expect("pipeline run"))
        .collect()
}

fn levels(outs: &[RunOutput]) -> Vec<Option<f64>> {
    outs.iter().map(|o| o.selection.selected_level).collect()
}

fn count_in(sel: &[Option<f64>], lo: f64, hi: f64) -> usize {
    sel.iter()
        .filter(|s| s.is_some_and(|q| (lo..=hi).contains(&q)))
        .count()
}

fn show(sel: &[Option<f64>]) -> String {
    let parts: Vec<String> = sel
        .iter()
        .map(|s| s.map_or_else(|| "none".into(), |q| format!("{q:.3}")))
        .collect();
    parts.join(" ")
}

/// Relative agreement of the O(n²) fast statistic with the literal triple sum.
fn criterion_1() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for i in 0..500 {
        let n = rng.random_range(2..=50);
        let d = [1, 2, 5][i % 3];
        let u: Vec<f64> = (0..n)
            .map(|_| (1.0 - rng.random::<f64>()).ln() * -2.0)
            .collect();
        let v: Vec<f64> = (0..n * d)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        let input = DCovInput::new(&u, &v, d).unwrap();
        let naive = dcov_naive(input).unwrap().t_n;
        let fast = dcov_fast(input).unwrap().t_n;
        let rel = (naive - fast).abs() / naive.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        if rel > 1e-10 {
            failures += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        failures == 0 && secs < 10.0,
        format!(
            "500 instances, max relative error {worst:.2e}, {failures} above 1e-10, {secs:.2}s"
        ),
    )
}

/// Radius Pareto(1), angle uniform on the L1 simplex, independent.
fn product_measure(n: usize, seed: u64) -> PolarSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let r = 1.0 / (1.0 - rng.random::<f64>());
        let t: f64 = rng.random();
        data.extend([r * t, r * (1.0 - t)]);
    }
    to_polar(&Sample::with_default_labels(2, data).unwrap(), NormSpec::L1).unwrap()
}

/// Null calibration on independent radius and angle. 17 levels × m = 60
/// gives 1020 raw p-values; the same path supplies the per-level means.
fn criterion_2() -> Verdict {
    let started = Instant::now();
    let polar = product_measure(100_000, 2);
    let cfg = PathConfig::new(quantile_grid(0.02, 0.5, 17).unwrap(), 500, 60, 99, 0);
    let path = compute_path(&polar, &cfg).unwrap();
    let mut raw: Vec<f64> = path.raw_pvalues.concat();
    raw.sort_by(f64::total_cmp);
    let d = ks_distance(&raw, |x| x.clamp(0.0, 1.0));
    let ks_p = ks_pvalue(raw.len(), d);
    let means: Vec<f64> = path.mean_pvalues.iter().map(|m| m.unwrap()).collect();
    let outside: Vec<String> = means
        .iter()
        .filter(|m| (**m - 0.5).abs() > 0.05)
        .map(|m| format!("{m:.3}"))
        .collect();
    let secs = started.elapsed().as_secs_f64();
    verdict(
        ks_p >= 0.01 && outside.is_empty() && secs < 120.0,
        format!(
            "{} p-values, KS D={d:.4} p={ks_p:.3}; {}/{} level means outside 0.5±0.05 [{}]; {secs:.1}s",
            raw.len(),
            outside.len(),
            means.len(),
            outside.join(" ")
        ),
    )
}

fn criterion_3() -> Verdict {
    let full = per_seed(|s| simulated(Model::MixtureThreshold, 10_000, full_grid(0.4), 60, 200, s));
    let full_sel = levels(&full);
    let full_ok = count_in(&full_sel, 0.15, 0.28);

    let started = Instant::now();
    let desk = per_seed(|s| {
        simulated(
            Model::MixtureThreshold,
            10_000,
            Grid {
                k: 30,
                ..full_grid(0.4)
            },
            20,
            99,
            s,
        )
    });
    let desk_secs = started.elapsed().as_secs_f64();
    let desk_sel = levels(&desk);
    let desk_ok = count_in(&desk_sel, 0.12, 0.32);
    verdict(
        full_ok >= 8 && desk_ok >= 8 && desk_secs < 300.0,
        format!(
            "full scale {full_ok}/10 in [0.15,0.28] ({}); desk {desk_ok}/10 in [0.12,0.32] ({}) in {desk_secs:.1}s on {} threads",
            show(&full_sel),
            show(&desk_sel),
            rayon::current_num_threads()
        ),
    )
}

fn criterion_4() -> Verdict {
    let gamma = 0.8;
    let outs = per_seed(|s| {
        simulated(
            Model::BivariateLogistic { gamma },
            10_000,
            full_grid(0.3),
            60,
            200,
            s,
        )
    });
    let limit = LogisticAngular::new(gamma).unwrap();
    let sel = levels(&outs);
    let ks: Vec<Option<f64>> = outs
        .iter()
        .map(|o| {
            o.angular
                .as_ref()
                .map(|a| a.marginals[0].ks_distance(|x| limit.cdf(x)))
        })
        .collect();
    let good = sel
        .iter()
        .zip(&ks)
        .filter(|(s, k)| {
            s.is_some_and(|q| (0.03..=0.15).contains(&q)) && k.is_some_and(|d| d <= 0.1)
        })
        .count();
    let ks_txt: Vec<String> = ks
        .iter()
        .map(|k| k.map_or_else(|| "-".into(), |d| format!("{d:.3}")))
        .collect();
    verdict(
        good >= 7,
        format!(
            "{good}/10 select in [0.03,0.15] with angular KS <= 0.1; levels {}; KS {}",
            show(&sel),
            ks_txt.join(" ")
        ),
    )
}

fn criterion_5() -> Verdict {
    let outs =
        per_seed(|s| simulated(Model::ParetoAlternating, 20_000, full_grid(0.2), 60, 200, s));
    let none = outs
        .iter()
        .filter(|o| o.selection.is_none() && o.selection.outcome == Outcome::AllBelowCutoff)
        .count();
    verdict(
        none >= 8,
        format!(
            "{none}/10 runs select no threshold; {}",
            show(&levels(&outs))
        ),
    )
}

fn criterion_6() -> Verdict {
    let gamma = 0.95;
    let run = |p: f64| {
        levels(&per_seed(|s| {
            let mut c = simulated(
                Model::BivariateLogistic { gamma },
                10_000,
                full_grid(0.3),
                60,
                200,
                s,
            );
            c.norm_p = p;
            c
        }))
    };
    let low = run(0.2);
    let one = run(1.0);
    let five = run(5.0);
    let none = low.iter().filter(|s| s.is_none()).count();
    let one_ok = count_in(&one, 0.02, 0.10);
    let five_ok = count_in(&five, 0.06, 0.20);
    verdict(
        none >= 7 && one_ok >= 7 && five_ok >= 7,
        format!(
            "p=0.2 none {none}/10 ({}); p=1 {one_ok}/10 in [0.02,0.10] ({}); p=5 {five_ok}/10 in [0.06,0.20] ({})",
            show(&low),
            show(&one),
            show(&five)
        ),
    )
}

fn criterion_7() -> Verdict {
    let k = 150;
    let truth = k / 2 - 1;
    let mut hits = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let noise = rand_distr::Normal::new(0.0, 0.03).unwrap();
        let x: Vec<f64> = (0..k)
            .map(|i| if i <= truth { 0.5 } else { 0.2 } + rng.sample(noise))
            .collect();
        let fit = wbs_fit_series(
            &x,
            &WbsParams {
                seed: trial,
                ..WbsParams::default()
            },
        )
        .unwrap();
        if fit.breakpoints.iter().any(|&b| b.abs_diff(truth) <= 3) {
            hits += 1;
        }
    }
    let (argmax, _) = cusum_argmax(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    verdict(
        hits >= 95 && argmax == 3,
        format!(
            "breakpoint within ±3 in {hits}/100 trials; CUSUM argmax on (0,0,0,1,1,1) = {argmax}"
        ),
    )
}

/// Exceedance-style data with a Pareto(1) radius. Dependent: the angle's
/// location moves with log R. Independent: uniform angle.
fn exceedance_data(n: usize, seed: u64, dependent: bool) -> PolarSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let r = 1.0 / (1.0 - rng.random::<f64>());
        let u: f64 = rng.random();
        let t = if dependent {
            0.5 * (u + r.ln().min(2.0) / 2.0)
        } else {
            u
        };
        data.extend([r * t, r * (1.0 - t)]);
    }
    to_polar(&Sample::with_default_labels(2, data).unwrap(), NormSpec::L1).unwrap()
}

fn criterion_8() -> Verdict {
    let median_scaled = |n: usize, dependent: bool| {
        let vals: Vec<f64> = (0..50u64)
            .map(|s| {
                let polar = exceedance_data(n, 7000 + s, dependent);
                conditional_dcov(&polar, 0.0).unwrap().scaled()
            })
            .collect();
        median(&vals).unwrap()
    };
    let dep = median_scaled(1600, true) / median_scaled(400, true);
    let ind = median_scaled(1600, false) / median_scaled(400, false);
    verdict(
        dep >= 2.0 && ind < 1.5,
        format!("median n·T_n ratio 1600/400: dependent {dep:.2}, independent {ind:.2}"),
    )
}

fn criterion_9() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("user.csv");
    // Margins on arbitrary scales, one of them taking negative values.
    let base = gen_mixture_threshold(5000, 21).unwrap();
    let data: Vec<f64> = base
        .rows()
        .flat_map(|r| [(r[0] + 0.01).ln() * 3.0 - 1.0, (r[1] * 100.0).sqrt()])
        .collect();
    let sample = Sample::from_rows(vec!["ret_a".into(), "ret_b".into()], data).unwrap();
    write_sample_csv(&sample, &csv).unwrap();

    let ingested = ingest_csv(&csv).unwrap();
    let ranked = rank_transform(&ingested).unwrap();
    let frechet = |z: f64| if z > 0.0 { (-1.0 / z).exp() } else { 0.0 };
    let mut worst_p = 1.0f64;
    for j in 0..ranked.dim() {
        let mut col = ranked.column(j);
        col.sort_by(f64::total_cmp);
        worst_p = worst_p.min(ks_pvalue(col.len(), ks_distance(&col, frechet)));
    }

    let mut cfg = simulated(
        Model::MixtureThreshold,
        0,
        Grid {
            k: 30,
            ..full_grid(0.4)
        },
        20,
        99,
        3,
    );
    cfg.input = Input::Csv { path: csv };
    cfg.rank = true;
    let out = run_pipeline(&cfg);
    let (completed, what) = match &out {
        Ok(o) => (
            true,
            match o.selection.selected_level {
                Some(q) => format!("selected {q:.3}"),
                None => format!("explicit none ({:?})", o.selection.outcome),
            },
        ),
        Err(e) => (false, format!("error: {e}")),
    };
    verdict(
        worst_p >= 0.01 && completed,
        format!("rank-transformed margins KS p >= {worst_p:.3}; pipeline {what}"),
    )
}

fn criterion_10() -> Verdict {
    let cfg = simulated(
        Model::MixtureThreshold,
        10_000,
        Grid {
            k: 30,
            ..full_grid(0.4)
        },
        20,
        99,
        42,
    );
    let dir = tempfile::tempdir().unwrap();
    let mut files: Vec<(String, Vec<u8>, Vec<u8>)> = Vec::new();
    for threads in [1usize, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        for rep in 0..2 {
            let out_dir = dir.path().join(format!("t{threads}-{rep}"));
            pool.install(|| {
                let out = run_pipeline(&cfg).unwrap();
                write_outputs(&out_dir, &cfg, &out).unwrap();
            });
            files.push((
                format!("{threads} threads run {rep}"),
                std::fs::read(out_dir.join(PATH_FILE)).unwrap(),
                std::fs::read(out_dir.join(SELECTION_FILE)).unwrap(),
            ));
        }
    }
    let differing: Vec<&str> = files
        .iter()
        .filter(|(_, p, s)| *p != files[0].1 || *s != files[0].2)
        .map(|(name, _, _)| name.as_str())
        .collect();
    verdict(
        differing.is_empty(),
        format!(
            "{} runs at 1/4/8 threads; path.json {} bytes; {} differ from the first{}",
            files.len(),
            files[0].1.len(),
            differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" ({})", differing.join(", "))
            }
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 10] = [
    (1, "fast dcov matches naive", criterion_1),
    (2, "null calibration", criterion_2),
    (3, "mixture threshold recovery", criterion_3),
    (4, "logistic selection and angular limit", criterion_4),
    (5, "pareto-alternating gives none", criterion_5),
    (6, "norm sensitivity", criterion_6),
    (7, "WBS localization", criterion_7),
    (8, "divergence vs boundedness", criterion_8),
    (9, "rank transform on user CSV", criterion_9),
    (10, "thread-count determinism", criterion_10),
];

fn main() {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut stderr = std::io::stderr();
    let mut failed = Vec::new();
    for (id, name, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let v = run();
        let status = if v.pass { "PASS" } else { "FAIL" };
        let line = format!(
            "criterion {id:>2} {status} [{name}] {} ({:.1}s)",
            v.detail,
            started.elapsed().as_secs_f64()
        );
        println!("{line}");
        let _ = stderr.flush();
        if !v.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
