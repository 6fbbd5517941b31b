//! Generalized Pareto fit for threshold excesses.
//!
//! `H(y; σ, ξ) = 1 - (1 + ξ y / σ)^(-1/ξ)`, with the exponential law
//! `1 - exp(-y / σ)` at ξ = 0. Maximum likelihood runs a bounded
//! Nelder–Mead search over `(ln σ, ξ)` started from probability-weighted
//! moments; the PWM estimate is the fallback when the search does not
//! settle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Shape parameter search range.
pub const XI_BOUNDS: (f64, f64) = (-0.9, 1.0);
pub const MIN_EXCEEDANCES: usize = 10;

const XI_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    MaximumLikelihood,
    /// Probability-weighted moments, used after the likelihood search failed.
    WeightedMoments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    /// Threshold in original units; the fit describes `X - threshold | X > threshold`.
    pub threshold: f64,
    pub sigma: f64,
    pub xi: f64,
    pub n_exceed: usize,
    pub neg_log_lik: f64,
    pub method: FitMethod,
    /// The shape estimate sits on a search bound.
    pub at_bound: bool,
}

impl GpdFit {
    /// `P(Y <= y)` for the excess `Y`.
    pub fn cdf(&self, y: f64) -> f64 {
        -self.sf(y) + 1.0
    }

    /// `P(Y > y)`.
    pub fn sf(&self, y: f64) -> f64 {
        gpd_sf(y, self.sigma, self.xi)
    }

    /// Excess with `P(Y > y) = tail`.
    pub fn isf(&self, tail: f64) -> f64 {
        if self.xi.abs() < XI_ZERO {
            -self.sigma * tail.ln()
        } else {
            self.sigma / self.xi * (tail.powf(-self.xi) - 1.0)
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.isf(1.0 - p)
    }

    /// Upper end of the support in original units (finite only for ξ < 0).
    pub fn upper_endpoint(&self) -> f64 {
        if self.xi < -XI_ZERO {
            self.threshold - self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }
}

pub(crate) fn gpd_sf(y: f64, sigma: f64, xi: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    if xi.abs() < XI_ZERO {
        return (-y / sigma).exp();
    }
    let t = xi * y / sigma;
    if t <= -1.0 {
        return 0.0;
    }
    (-t.ln_1p() / xi).exp()
}

/// GPD negative log-likelihood; `+inf` outside the parameter space.
pub fn neg_log_likelihood(excesses: &[f64], sigma: f64, xi: f64) -> f64 {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return f64::INFINITY;
    }
    let n = excesses.len() as f64;
    if xi.abs() < XI_ZERO {
        return n * sigma.ln() + excesses.iter().sum::<f64>() / sigma;
    }
    let mut acc = 0.0;
    for &y in excesses {
        let t = xi * y / sigma;
        if t <= -1.0 {
            return f64::INFINITY;
        }
        acc += t.ln_1p();
    }
    n * sigma.ln() + (1.0 + 1.0 / xi) * acc
}

/// Probability-weighted-moment estimate `(σ, ξ)`.
pub fn pwm_estimate(excesses: &[f64]) -> (f64, f64) {
    let sorted = stats::sorted_copy(excesses);
    let n = sorted.len() as f64;
    let a0 = stats::mean(&sorted);
    // a1 = E[Y (1 - F(Y))], plotting position (i - 0.35) / n
    let a1 = sorted
        .iter()
        .enumerate()
        .map(|(i, y)| y * (1.0 - (i as f64 + 0.65) / n))
        .sum::<f64>()
        / n;
    let k = a0 / (a0 - 2.0 * a1) - 2.0;
    let sigma = 2.0 * a0 * a1 / (a0 - 2.0 * a1);
    (sigma, -k)
}

struct Minimum {
    point: [f64; 2],
    value: f64,
    converged: bool,
}

fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], step: [f64; 2]) -> Minimum {
    const MAX_ITER: usize = 5000;
    let mut simplex = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut values = simplex.map(&f);
    for _ in 0..MAX_ITER {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);

        let spread = (values[2] - values[0]).abs();
        let size = (0..2)
            .map(|d| (simplex[1][d] - simplex[0][d]).abs().max((simplex[2][d] - simplex[0][d]).abs()))
            .fold(0.0, f64::max);
        if values[0].is_finite() && spread <= 1e-12 * (1.0 + values[0].abs()) && size < 1e-9 {
            return Minimum {
                point: simplex[0],
                value: values[0],
                converged: true,
            };
        }

        let centroid = [
            (simplex[0][0] + simplex[1][0]) / 2.0,
            (simplex[0][1] + simplex[1][1]) / 2.0,
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] { along(-0.5) } else { along(0.5) };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                let best = simplex[0];
                for i in 1..3 {
                    for (v, b) in simplex[i].iter_mut().zip(best) {
                        *v = b + 0.5 * (*v - b);
                    }
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    Minimum {
        point: simplex[best],
        value: values[best],
        converged: false,
    }
}

/// Fit a GPD to `excesses` (values already reduced by `threshold`).
pub fn fit_gpd(excesses: &[f64], threshold: f64) -> Result<GpdFit> {
    fit_gpd_with_floor(excesses, threshold, MIN_EXCEEDANCES)
}

pub fn fit_gpd_with_floor(excesses: &[f64], threshold: f64, min_exceed: usize) -> Result<GpdFit> {
    if excesses.len() < min_exceed {
        return Err(Error::TooFewExceedances {
            found: excesses.len(),
            needed: min_exceed,
        });
    }
    if excesses.iter().any(|&y| !(y > 0.0) || !y.is_finite()) {
        return Err(Error::invalid("GPD excesses must be positive and finite"));
    }
    let (lo, hi) = XI_BOUNDS;
    let objective = |p: [f64; 2]| {
        if p[1] < lo || p[1] > hi {
            f64::INFINITY
        } else {
            neg_log_likelihood(excesses, p[0].exp(), p[1])
        }
    };

    let (pwm_sigma, pwm_xi) = pwm_estimate(excesses);
    let mean = stats::mean(excesses);
    let mut start = [mean.ln(), 0.0];
    if pwm_sigma > 0.0 && pwm_xi.is_finite() {
        let candidate = [pwm_sigma.ln(), pwm_xi.clamp(lo + 0.05, hi - 0.05)];
        if objective(candidate).is_finite() {
            start = candidate;
        }
    }
    let step = [0.1, if start[1] + 0.1 < hi { 0.1 } else { -0.1 }];
    let min = nelder_mead(objective, start, step);
    if min.converged && min.value.is_finite() {
        let xi = min.point[1];
        return Ok(GpdFit {
            threshold,
            sigma: min.point[0].exp(),
            xi,
            n_exceed: excesses.len(),
            neg_log_lik: min.value,
            method: FitMethod::MaximumLikelihood,
            at_bound: (xi - lo).abs() < 1e-4 || (hi - xi).abs() < 1e-4,
        });
    }

    let nll = neg_log_likelihood(excesses, pwm_sigma, pwm_xi);
    if pwm_sigma > 0.0 && nll.is_finite() {
        return Ok(GpdFit {
            threshold,
            sigma: pwm_sigma,
            xi: pwm_xi,
            n_exceed: excesses.len(),
            neg_log_lik: nll,
            method: FitMethod::WeightedMoments,
            at_bound: false,
        });
    }
    Err(Error::GpdFit(format!(
        "likelihood search did not converge (best -logL {:.6} at sigma={:.6}, xi={:.6}) and the \
         weighted-moment fallback (sigma={pwm_sigma:.6}, xi={pwm_xi:.6}) is infeasible",
        min.value,
        min.point[0].exp(),
        min.point[1]
    )))
}
