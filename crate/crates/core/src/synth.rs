//! Simulated samples with known extremal dependence, and a brute-force
//! survival oracle.
//!
//! - bivariate logistic with dependence α: asymptotically dependent for
//!   α < 1 with `χ = 2 - 2^α`;
//! - Gaussian copula with correlation ρ: asymptotically independent,
//!   `η = (1 + ρ) / 2`;
//! - independent unit-Fréchet pairs: `η = 1/2`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BivariateSample, Scale};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BivariateLogistic { alpha: f64 },
    GaussianCopula { rho: f64 },
    IndependentFrechet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Margins {
    FrechetUnit,
    Uniform,
    /// Standard Gumbel, i.e. the logarithm of a unit-Fréchet variable.
    Gumbel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthModel {
    pub family: Family,
    pub margins: Margins,
}

impl SynthModel {
    pub fn validate(&self) -> Result<()> {
        match self.family {
            Family::BivariateLogistic { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                Err(Error::invalid(format!("logistic alpha must lie in (0, 1], got {alpha}")))
            }
            Family::GaussianCopula { rho } if !(rho > -1.0 && rho < 1.0) => {
                Err(Error::invalid(format!("Gaussian correlation must lie in (-1, 1), got {rho}")))
            }
            _ => Ok(()),
        }
    }

    /// Exact χ where available in closed form.
    pub fn chi(&self) -> f64 {
        match self.family {
            Family::BivariateLogistic { alpha } => 2.0 - 2f64.powf(alpha),
            _ => 0.0,
        }
    }

    /// Coefficient of tail dependence.
    pub fn eta(&self) -> f64 {
        match self.family {
            Family::BivariateLogistic { alpha } if alpha < 1.0 => 1.0,
            Family::BivariateLogistic { .. } | Family::IndependentFrechet => 0.5,
            Family::GaussianCopula { rho } => (1.0 + rho) / 2.0,
        }
    }
}

/// Positive stable variable with Laplace transform `exp(-t^α)`,
/// `0 < α < 1` (Kanter's representation).
fn positive_stable<R: Rng>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = PI * open01(rng);
    let w: f64 = Exp1.sample(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * u).sin() / w;
    a * b.powf((1.0 - alpha) / alpha)
}

fn open01<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Unit-Fréchet value of `Φ(x)`, i.e. `-1 / ln Φ(x)`, without cancellation.
fn frechet_of_normal(x: f64) -> f64 {
    let log_cdf = if x > 0.0 { (-stats::norm_sf(x)).ln_1p() } else { stats::norm_cdf(x).ln() };
    -1.0 / log_cdf
}

fn frechet_pair<R: Rng>(family: Family, rng: &mut R) -> [f64; 2] {
    match family {
        Family::IndependentFrechet => {
            let e1: f64 = Exp1.sample(rng);
            let e2: f64 = Exp1.sample(rng);
            [1.0 / e1, 1.0 / e2]
        }
        Family::BivariateLogistic { alpha } => {
            let e1: f64 = Exp1.sample(rng);
            let e2: f64 = Exp1.sample(rng);
            if alpha == 1.0 {
                return [1.0 / e1, 1.0 / e2];
            }
            let s = positive_stable(alpha, rng);
            [(s / e1).powf(alpha), (s / e2).powf(alpha)]
        }
        Family::GaussianCopula { rho } => {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            let c = rho * a + (1.0 - rho * rho).sqrt() * b;
            [frechet_of_normal(a), frechet_of_normal(c)]
        }
    }
}

fn apply_margin(z: f64, margins: Margins) -> f64 {
    match margins {
        Margins::FrechetUnit => z,
        Margins::Uniform => (-1.0 / z).exp(),
        Margins::Gumbel => z.ln(),
    }
}

/// Draw `n` pairs; identical `seed` gives identical output.
pub fn generate(model: &SynthModel, n: usize, seed: u64) -> Result<BivariateSample> {
    model.validate()?;
    if n < 2 {
        return Err(Error::invalid("simulation needs n >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    for _ in 0..n {
        let [z1, z2] = frechet_pair(model.family, &mut rng);
        x1.push(apply_margin(z1, model.margins));
        x2.push(apply_margin(z2, model.margins));
    }
    let scale = if model.margins == Margins::FrechetUnit { Scale::Frechet } else { Scale::Original };
    BivariateSample::from_columns(x1, x2, scale)
}

/// Fraction of observations at or beyond `x` in both coordinates.
pub fn brute_survival(sample: &BivariateSample, x: [f64; 2]) -> f64 {
    let mut hits = 0usize;
    for t in 0..sample.len() {
        if sample.x1()[t] >= x[0] && sample.x2()[t] >= x[1] {
            hits += 1;
        }
    }
    hits as f64 / sample.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnose::exceedance_count;
    use crate::taildep::chi_curve;

    #[test]
    fn deterministic_given_seed() {
        let m = SynthModel {
            family: Family::BivariateLogistic { alpha: 0.4 },
            margins: Margins::Gumbel,
        };
        assert_eq!(generate(&m, 500, 3).unwrap(), generate(&m, 500, 3).unwrap());
        assert_ne!(generate(&m, 500, 3).unwrap(), generate(&m, 500, 4).unwrap());
    }

    #[test]
    fn parameter_ranges() {
        let bad = [
            Family::BivariateLogistic { alpha: 0.0 },
            Family::BivariateLogistic { alpha: 1.5 },
            Family::GaussianCopula { rho: 1.0 },
        ];
        for family in bad {
            let m = SynthModel {
                family,
                margins: Margins::Uniform,
            };
            assert!(generate(&m, 10, 0).is_err());
        }
    }

    #[test]
    fn independent_chi_near_one_minus_u() {
        let m = SynthModel {
            family: Family::IndependentFrechet,
            margins: Margins::FrechetUnit,
        };
        let s = generate(&m, 100_000, 17).unwrap();
        let c = chi_curve(&s, &[0.95]).unwrap();
        assert!((c.chi_hat[0].unwrap() - 0.05).abs() < 0.01);
    }

    #[test]
    fn uncorrelated_gaussian_copula_has_uniform_margins() {
        let m = SynthModel {
            family: Family::GaussianCopula { rho: 0.0 },
            margins: Margins::Uniform,
        };
        let s = generate(&m, 100_000, 5).unwrap();
        for k in 0..2 {
            let sorted = stats::sorted_copy(s.coord(k));
            let n = sorted.len() as f64;
            let ks = sorted
                .iter()
                .enumerate()
                .map(|(i, &u)| (u - i as f64 / n).abs().max(((i + 1) as f64 / n - u).abs()))
                .fold(0.0, f64::max);
            assert!(ks < 0.01, "KS {ks}");
        }
    }

    #[test]
    fn logistic_unit_frechet_margins() {
        let m = SynthModel {
            family: Family::BivariateLogistic { alpha: 0.3 },
            margins: Margins::Uniform,
        };
        let s = generate(&m, 50_000, 8).unwrap();
        let sorted = stats::sorted_copy(s.x2());
        assert!((stats::quantile_sorted(&sorted, 0.5) - 0.5).abs() < 0.01);
        assert!((stats::quantile_sorted(&sorted, 0.99) - 0.99).abs() < 0.002);
    }

    #[test]
    fn logistic_chi_matches_closed_form() {
        let m = SynthModel {
            family: Family::BivariateLogistic { alpha: 0.5 },
            margins: Margins::FrechetUnit,
        };
        let s = generate(&m, 1_000_000, 21).unwrap();
        let c = chi_curve(&s, &[0.99]).unwrap();
        assert!((c.chi_hat[0].unwrap() - m.chi()).abs() < 0.05, "{:?}", c.chi_hat);
        assert!((m.chi() - 0.5858).abs() < 1e-4);
    }

    #[test]
    fn gaussian_copula_chi_decays() {
        let m = SynthModel {
            family: Family::GaussianCopula { rho: 0.6 },
            margins: Margins::Uniform,
        };
        let s = generate(&m, 400_000, 2).unwrap();
        let c = chi_curve(&s, &[0.9, 0.99, 0.999]).unwrap();
        let v: Vec<f64> = c.chi_hat.iter().map(|x| x.unwrap()).collect();
        assert!(v[0] > v[1] && v[1] > v[2], "{v:?}");
    }

    #[test]
    fn brute_survival_extremes_and_agreement() {
        let m = SynthModel {
            family: Family::GaussianCopula { rho: 0.3 },
            margins: Margins::Gumbel,
        };
        let s = generate(&m, 2000, 4).unwrap();
        let min = [s.x1().iter().cloned().fold(f64::MAX, f64::min), s.x2().iter().cloned().fold(f64::MAX, f64::min)];
        let max = [s.x1().iter().cloned().fold(f64::MIN, f64::max), s.x2().iter().cloned().fold(f64::MIN, f64::max)];
        assert_eq!(brute_survival(&s, [min[0] - 1.0, min[1] - 1.0]), 1.0);
        assert_eq!(brute_survival(&s, [max[0] + 1.0, max[1] + 1.0]), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..1000 {
            let x = [
                min[0] + rng.random::<f64>() * (max[0] - min[0]),
                min[1] + rng.random::<f64>() * (max[1] - min[1]),
            ];
            assert_eq!(brute_survival(&s, x), exceedance_count(&s, x) as f64 / s.len() as f64);
        }
    }
}
