//! Seedable generators for the simulated examples.
//!
//! Rows are produced in fixed-size chunks, each drawn from its own stream of
//! the [`Domain::Generate`] family, so output is bit-identical for a given
//! `(model, n, seed)` at any thread count.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Domain, StreamFamily};
use crate::sample::Sample;

const CHUNK_ROWS: usize = 1024;
const AR_BURN_IN: usize = 1000;

/// Which simulated model to draw from, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    /// |t₂| radius; uniform angle above the upper 20% radius quantile,
    /// Beta(3,3) angle below it.
    MixtureThreshold,
    /// Symmetric logistic dependence with unit Fréchet margins.
    BivariateLogistic { gamma: f64 },
    /// Standard Pareto radius whose angle flips half-interval with the parity
    /// of `⌊log R⌋`. Not regularly varying.
    ParetoAlternating,
    /// Bivariate AR(1) with Pareto(2) innovations, floored at zero.
    ArPareto { phi: f64 },
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::MixtureThreshold => "mixture-threshold",
            Model::BivariateLogistic { .. } => "bivariate-logistic",
            Model::ParetoAlternating => "pareto-alternating",
            Model::ArPareto { .. } => "ar-pareto",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Model::BivariateLogistic { gamma } if !(gamma > 0.0 && gamma < 1.0) => {
                Err(Error::param(
                    "gamma",
                    format!("must lie strictly inside (0, 1), got {gamma}"),
                ))
            }
            Model::ArPareto { phi } if !(phi.abs() < 1.0) => Err(Error::param(
                "phi",
                format!("must satisfy |phi| < 1, got {phi}"),
            )),
            _ => Ok(()),
        }
    }
}

/// A fully specified simulation request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub model: Model,
    pub n: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<Sample> {
        match self.model {
            Model::MixtureThreshold => gen_mixture_threshold(self.n, self.seed),
            Model::BivariateLogistic { gamma } => gen_bivariate_logistic(self.n, gamma, self.seed),
            Model::ParetoAlternating => gen_pareto_alternating(self.n, self.seed),
            Model::ArPareto { phi } => gen_ar_pareto(self.n, phi, self.seed),
        }
    }
}

/// Upper `q` quantile of `|T|` for `T ~ t₂`, i.e. the `r` with `P(|T| > r) = q`.
///
/// `P(|T| ≤ r) = r / √(2 + r²)` for two degrees of freedom, which inverts to
/// `r = √(2p² / (1 − p²))` with `p = 1 − q`.
pub fn abs_t2_upper_quantile(q: f64) -> f64 {
    let p = 1.0 - q;
    (2.0 * p * p / (1.0 - p * p)).sqrt()
}

/// The true independence boundary of [`gen_mixture_threshold`].
pub fn mixture_boundary_radius() -> f64 {
    abs_t2_upper_quantile(0.2)
}

pub fn gen_mixture_threshold(n: usize, seed: u64) -> Result<Sample> {
    let boundary = mixture_boundary_radius();
    let beta = Beta::new(3.0, 3.0).expect("valid beta parameters");
    chunked(n, seed, Model::MixtureThreshold, move |rng, out| {
        let z: f64 = rng.sample(StandardNormal);
        let radius = z.abs() / std_exp(rng).sqrt();
        let theta = if radius > boundary {
            rng.random::<f64>()
        } else {
            beta.sample(rng)
        };
        out[0] = radius * theta;
        out[1] = radius * (1.0 - theta);
    })
}

pub fn gen_bivariate_logistic(n: usize, gamma: f64, seed: u64) -> Result<Sample> {
    let model = Model::BivariateLogistic { gamma };
    model.validate()?;
    chunked(n, seed, model, move |rng, out| {
        let s = positive_stable(rng, gamma);
        for x in out.iter_mut() {
            *x = (s / std_exp(rng)).powf(gamma);
        }
    })
}

pub fn gen_pareto_alternating(n: usize, seed: u64) -> Result<Sample> {
    chunked(n, seed, Model::ParetoAlternating, |rng, out| {
        let u: f64 = rng.sample(Open01);
        let radius = 1.0 / u;
        let half = if (radius.ln().floor() as i64) % 2 == 0 {
            0.0
        } else {
            0.5
        };
        let theta = half + 0.5 * rng.random::<f64>();
        out[0] = radius * theta;
        out[1] = radius * (1.0 - theta);
    })
}

pub fn gen_ar_pareto(n: usize, phi: f64, seed: u64) -> Result<Sample> {
    let model = Model::ArPareto { phi };
    model.validate()?;
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng = StreamFamily::new(seed, Domain::Generate).stream(stream_tag(model) << 32);
    let mut state = [0.0f64; 2];
    let mut data = Vec::with_capacity(2 * n);
    for t in 0..AR_BURN_IN + n {
        for x in state.iter_mut() {
            let u: f64 = rng.sample(Open01);
            *x = (phi * *x + u.powf(-0.5)).max(0.0);
        }
        if t >= AR_BURN_IN {
            data.extend_from_slice(&state);
        }
    }
    Sample::with_default_labels(2, data)
}

/// Positive stable variate with Laplace transform `exp(-t^alpha)`,
/// `0 < alpha < 1` (Chambers–Mallows–Stuck / Kanter form).
pub fn positive_stable<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> f64 {
    let u = PI * rng.sample::<f64, _>(Open01);
    let w = std_exp(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * u).sin() / w;
    a * b.powf((1.0 - alpha) / alpha)
}

fn std_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -rng.sample::<f64, _>(Open01).ln()
}

fn stream_tag(model: Model) -> u64 {
    match model {
        Model::MixtureThreshold => 1,
        Model::BivariateLogistic { .. } => 2,
        Model::ParetoAlternating => 3,
        Model::ArPareto { .. } => 4,
    }
}

fn chunked<F>(n: usize, seed: u64, model: Model, row: F) -> Result<Sample>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let family = StreamFamily::new(seed, Domain::Generate);
    let tag = stream_tag(model) << 32;
    let mut data = vec![0.0; 2 * n];
    data.par_chunks_mut(2 * CHUNK_ROWS)
        .enumerate()
        .for_each(|(c, chunk)| {
            let mut rng = family.stream(tag | c as u64);
            for out in chunk.chunks_exact_mut(2) {
                row(&mut rng, out);
            }
        });
    Sample::with_default_labels(2, data)
}
