//! Angular distribution above a radial threshold, and the closed-form
//! limiting angular density of the symmetric logistic model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PolarSample;
use crate::stats::{sorted_quantile, std_dev};

/// Fewest exceedances an angular estimate is computed from.
pub const MIN_EXCEEDANCES: usize = 10;
const GRID_POINTS: usize = 201;

/// Empirical distribution of one angular coordinate over the exceedances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularMarginal {
    /// 0-based angle coordinate. For bivariate data only coordinate 0 (the
    /// pseudo-angle under L1) is reported.
    pub coordinate: usize,
    /// Exceedance angles, ascending.
    pub sorted: Vec<f64>,
    /// Right-continuous ecdf at each grid point.
    pub ecdf: Vec<f64>,
}

impl AngularMarginal {
    /// Right-continuous ecdf at `x`.
    pub fn ecdf_at(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&t| t <= x) as f64 / self.sorted.len() as f64
    }

    /// `sup |F_n − F|` against a continuous cdf.
    pub fn ks_distance<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        crate::stats::ks_distance(&self.sorted, cdf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularEstimate {
    /// Evaluation grid on [0, 1].
    pub grid: Vec<f64>,
    pub marginals: Vec<AngularMarginal>,
    /// Kernel density of the first marginal on `grid`, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    pub n_used: usize,
    pub threshold_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_level: Option<f64>,
}

impl AngularEstimate {
    pub fn with_level(mut self, q: f64) -> Self {
        self.threshold_level = Some(q);
        self
    }
}

fn unit_grid() -> Vec<f64> {
    (0..GRID_POINTS)
        .map(|i| i as f64 / (GRID_POINTS - 1) as f64)
        .collect()
}

/// Empirical cdf of the angles of the strict exceedances of
/// `radius_threshold`: the first coordinate for bivariate data, every
/// coordinate's marginal otherwise.
pub fn angular_ecdf(polar: &PolarSample, radius_threshold: f64) -> Result<AngularEstimate> {
    let idx = polar.exceedances(radius_threshold);
    if idx.len() < MIN_EXCEEDANCES {
        return Err(Error::InsufficientExceedances {
            count: idx.len(),
            required: MIN_EXCEEDANCES,
        });
    }
    let coords = if polar.dim() == 2 { 1 } else { polar.dim() };
    let grid = unit_grid();
    let marginals = (0..coords)
        .map(|c| {
            let mut sorted: Vec<f64> = idx.iter().map(|&i| polar.angle(i)[c]).collect();
            sorted.sort_by(f64::total_cmp);
            let mut m = AngularMarginal {
                coordinate: c,
                sorted,
                ecdf: Vec::new(),
            };
            m.ecdf = grid.iter().map(|&x| m.ecdf_at(x)).collect();
            m
        })
        .collect();
    Ok(AngularEstimate {
        grid,
        marginals,
        density: None,
        bandwidth: None,
        n_used: idx.len(),
        threshold_radius: radius_threshold,
        threshold_level: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Bandwidth {
    /// Silverman's rule of thumb.
    Auto,
    Fixed {
        value: f64,
    },
}

/// Silverman's rule `0.9 · min(sd, IQR/1.34) · n^{-1/5}`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let sd = std_dev(values);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (values.len() as f64).powf(-0.2)
}

/// Gaussian kernel density on [0, 1] with reflection at both ends.
pub fn reflected_kde(values: &[f64], bandwidth: f64, at: f64) -> f64 {
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * PI).sqrt());
    let k = |z: f64| (-0.5 * z * z).exp();
    values
        .iter()
        .map(|&t| {
            k((at - t) / bandwidth) + k((at + t) / bandwidth) + k((at - (2.0 - t)) / bandwidth)
        })
        .sum::<f64>()
        * norm
}

/// Angular ecdf plus a boundary-reflected Gaussian kernel density of the
/// first angle coordinate.
pub fn angular_kde(
    polar: &PolarSample,
    radius_threshold: f64,
    bandwidth: Bandwidth,
) -> Result<AngularEstimate> {
    let mut est = angular_ecdf(polar, radius_threshold)?;
    let values = &est.marginals[0].sorted;
    let h = match bandwidth {
        Bandwidth::Auto => silverman_bandwidth(values),
        Bandwidth::Fixed { value } => value,
    };
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::param(
            "bandwidth",
            format!("must be positive, got {h} (degenerate angles need a fixed bandwidth)"),
        ));
    }
    est.density = Some(
        est.grid
            .iter()
            .map(|&x| reflected_kde(values, h, x))
            .collect(),
    );
    est.bandwidth = Some(h);
    Ok(est)
}

/// Limiting angular law of the symmetric logistic model under the L1
/// pseudo-polar map.
///
/// The unnormalized shape is
/// `(1−γ)/γ · (θ(1−θ))^{−(γ+1)/γ} · (θ^{−1/γ} + (1−θ)^{−1/γ})^{γ−2}`;
/// the normalizing constant is computed by quadrature at construction.
#[derive(Debug, Clone, Copy)]
pub struct LogisticAngular {
    gamma: f64,
    /// Exponent of the substitution `θ = s^power` that smooths the endpoint
    /// singularity `θ^{(1−2γ)/γ}`.
    power: f64,
    mass: f64,
}

impl LogisticAngular {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::param(
                "gamma",
                format!("must lie strictly inside (0, 1), got {gamma}"),
            ));
        }
        let power = (4.0 * gamma / (1.0 - gamma)).ceil().max(1.0);
        let mut me = Self {
            gamma,
            power,
            mass: 1.0,
        };
        me.mass = 2.0 * me.raw_integral(0.5, 40_000);
        Ok(me)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Integral of the unnormalized shape over (0, 1).
    pub fn normalizing_constant(&self) -> f64 {
        self.mass
    }

    /// Unnormalized shape in log space so extreme θ neither overflows nor
    /// produces `inf · 0`.
    fn log_shape(&self, theta: f64) -> f64 {
        let g = self.gamma;
        let (lt, l1t) = (theta.ln(), (1.0 - theta).ln());
        let (x, y) = (-lt / g, -l1t / g);
        let lse = x.max(y) + (-(x - y).abs()).exp().ln_1p();
        ((1.0 - g) / g).ln() - (g + 1.0) / g * (lt + l1t) + (g - 2.0) * lse
    }

    fn shape(&self, theta: f64) -> f64 {
        if theta <= 0.0 || theta >= 1.0 {
            return 0.0;
        }
        self.log_shape(theta).exp()
    }

    /// `∫_0^x shape(θ) dθ` for `x ≤ 1/2`, composite Simpson in `s = θ^{1/power}`.
    fn raw_integral(&self, x: f64, panels: usize) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let panels = panels + panels % 2;
        let p = self.power;
        let top = x.powf(1.0 / p);
        let h = top / panels as f64;
        let f = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let theta = s.powf(p);
            if theta <= 0.0 {
                return 0.0;
            }
            self.shape(theta) * p * s.powf(p - 1.0)
        };
        let mut acc = f(0.0) + f(top);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    /// Normalized density; `theta` must lie strictly inside (0, 1).
    pub fn density(&self, theta: f64) -> Result<f64> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::param(
                "theta",
                format!("density is only evaluated on the open interval (0, 1), got {theta}"),
            ));
        }
        Ok(self.shape(theta) / self.mass)
    }

    /// Limiting angular cdf by quadrature of the normalized density.
    pub fn cdf(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            0.0
        } else if theta >= 1.0 {
            1.0
        } else if theta <= 0.5 {
            self.raw_integral(theta, 4000) / self.mass
        } else {
            1.0 - self.raw_integral(1.0 - theta, 4000) / self.mass
        }
    }
}

/// Normalized limiting angular density of the logistic model at `theta`.
pub fn logistic_angular_density(theta: f64, gamma: f64) -> Result<f64> {
    LogisticAngular::new(gamma)?.density(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{to_polar, NormSpec};
    use crate::sample::Sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Closed-form total-mass-2 spectral cdf of the logistic model,
    /// `H[0,w] = (1−w)^{1−1/γ} S^{γ−1} + 1 − w^{1−1/γ} S^{γ−1}` with
    /// `S = w^{−1/γ} + (1−w)^{−1/γ}`. Independent of the quadrature.
    fn spectral_cdf_oracle(w: f64, g: f64) -> f64 {
        let s = w.powf(-1.0 / g) + (1.0 - w).powf(-1.0 / g);
        let t = s.powf(g - 1.0);
        0.5 * ((1.0 - w).powf(1.0 - 1.0 / g) * t + 1.0 - w.powf(1.0 - 1.0 / g) * t)
    }

    fn direct_shape(t: f64, g: f64) -> f64 {
        (1.0 - g) / g
            * (t * (1.0 - t)).powf(-(g + 1.0) / g)
            * (t.powf(-1.0 / g) + (1.0 - t).powf(-1.0 / g)).powf(g - 2.0)
    }

    #[test]
    fn density_symmetry_and_direct_value() {
        for g in [0.2, 0.5, 0.8, 0.95] {
            let la = LogisticAngular::new(g).unwrap();
            for t in [0.01, 0.1, 0.3, 0.45] {
                let a = la.density(t).unwrap();
                let b = la.density(1.0 - t).unwrap();
                assert!((a - b).abs() <= 1e-12 * a, "gamma {g} theta {t}");
            }
        }
        let la = LogisticAngular::new(0.8).unwrap();
        let expected = direct_shape(0.5, 0.8) / la.normalizing_constant();
        assert!((la.density(0.5).unwrap() - expected).abs() < 1e-12);
        assert!((logistic_angular_density(0.5, 0.8).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn normalizing_constant_matches_closed_form_mass() {
        // The closed-form spectral measure has total mass 2.
        for g in [0.1, 0.3, 0.5, 0.8, 0.95] {
            let c = LogisticAngular::new(g).unwrap().normalizing_constant();
            assert!((c - 2.0).abs() < 1e-8, "gamma {g}: {c}");
        }
    }

    #[test]
    fn trapezoid_integral_is_one() {
        // 10^5 trapezoid panels in the smoothing variable s = θ^{1/p}.
        for g in [0.3, 0.8] {
            let la = LogisticAngular::new(g).unwrap();
            let p = la.power;
            let f = |s: f64| {
                if s <= 0.0 || s >= 1.0 {
                    return 0.0;
                }
                let t = s.powf(p);
                if t <= 0.0 {
                    return 0.0;
                }
                la.density(t).unwrap() * p * s.powf(p - 1.0)
            };
            let top = 0.5f64.powf(1.0 / p);
            let panels = 100_000;
            let h = top / panels as f64;
            let mut acc = 0.5 * (f(0.0) + f(top));
            for i in 1..panels {
                acc += f(i as f64 * h);
            }
            let total = 2.0 * acc * h;
            assert!((total - 1.0).abs() < 1e-6, "gamma {g}: {total}");
        }
    }

    #[test]
    fn cdf_matches_closed_form() {
        for g in [0.3, 0.8, 0.95] {
            let la = LogisticAngular::new(g).unwrap();
            for w in [0.001, 0.05, 0.2, 0.5, 0.7, 0.99] {
                let oracle = spectral_cdf_oracle(w, g);
                assert!((la.cdf(w) - oracle).abs() < 1e-7, "gamma {g} w {w}");
            }
        }
    }

    #[test]
    fn density_domain_errors() {
        let la = LogisticAngular::new(0.5).unwrap();
        assert!(la.density(0.0).is_err());
        assert!(la.density(1.0).is_err());
        assert!(LogisticAngular::new(1.0).is_err());
    }

    fn polar_from_angles(angles: &[f64], radii: &[f64]) -> PolarSample {
        let data: Vec<f64> = angles
            .iter()
            .zip(radii)
            .flat_map(|(t, r)| [r * t, r * (1.0 - t)])
            .collect();
        to_polar(&Sample::with_default_labels(2, data).unwrap(), NormSpec::L1).unwrap()
    }

    #[test]
    fn ecdf_degenerate_and_full_sample() {
        let radii: Vec<f64> = (1..=20).map(f64::from).collect();
        let polar = polar_from_angles(&[0.3; 20], &radii);
        let est = angular_ecdf(&polar, 0.0).unwrap();
        assert_eq!(est.n_used, 20);
        let m = &est.marginals[0];
        assert_eq!(m.ecdf_at(0.29), 0.0);
        assert_eq!(m.ecdf_at(0.3), 1.0);
        assert!(matches!(
            angular_ecdf(&polar, 15.0),
            Err(Error::InsufficientExceedances {
                count: 5,
                required: 10
            })
        ));
    }

    #[test]
    fn ecdf_is_monotone_and_ends_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 500;
        let angles: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let radii: Vec<f64> = (0..n).map(|_| 1.0 + 10.0 * rng.random::<f64>()).collect();
        let polar = polar_from_angles(&angles, &radii);
        let est = angular_ecdf(&polar, 3.0).unwrap();
        let e = &est.marginals[0].ecdf;
        assert!(e.windows(2).all(|w| w[0] <= w[1]));
        assert!(e.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(*e.last().unwrap(), 1.0);
        // Higher threshold: subset of exceedances.
        let hi = polar.exceedances(6.0);
        let lo = polar.exceedances(3.0);
        assert!(hi.iter().all(|i| lo.binary_search(i).is_ok()));
    }

    #[test]
    fn kde_uniform_is_flat_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 5000;
        let angles: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let radii = vec![2.0; n];
        let polar = polar_from_angles(&angles, &radii);
        let est = angular_kde(&polar, 1.0, Bandwidth::Auto).unwrap();
        let dens = est.density.as_ref().unwrap();
        for (x, d) in est.grid.iter().zip(dens) {
            if *x > 0.1 && *x < 0.9 {
                assert!((d - 1.0).abs() < 0.2, "density {d} at {x}");
            }
            assert!(*d >= 0.0);
        }
        let values = &est.marginals[0].sorted;
        let h = est.bandwidth.unwrap();
        let panels = 20_000;
        let total: f64 = (0..panels)
            .map(|i| reflected_kde(values, h, (i as f64 + 0.5) / panels as f64))
            .sum::<f64>()
            / panels as f64;
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn kde_oversmoothing_flattens() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let angles: Vec<f64> = (0..400)
            .map(|_| 0.5 + 0.1 * (rng.random::<f64>() - 0.5))
            .collect();
        let polar = polar_from_angles(&angles, &vec![3.0; 400]);
        let var = |est: &AngularEstimate| {
            let d = est.density.as_ref().unwrap();
            let m = d.iter().sum::<f64>() / d.len() as f64;
            d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / d.len() as f64
        };
        let narrow = angular_kde(&polar, 1.0, Bandwidth::Fixed { value: 0.02 }).unwrap();
        let wide = angular_kde(&polar, 1.0, Bandwidth::Fixed { value: 2.0 }).unwrap();
        assert!(var(&wide) < 0.01 * var(&narrow));
    }
}
