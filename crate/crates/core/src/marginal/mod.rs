//! Marginal distribution estimates and the unit-Fréchet transform.
//!
//! Each margin is an interpolated empirical CDF up to a threshold `a`,
//! a generalized Pareto tail above `b`, and a sine-weighted blend of the
//! two on `(a, b)`:
//!
//! ```text
//! w(x) = (sin(π (x - a) / (b - a) - π/2) + 1) / 2
//! F(x) = (1 - w(x)) F_emp(x) + w(x) F_tail(x)
//! F_tail(x) = 1 - (1 - F_emp(a)) (1 - H(x - a; σ, ξ))
//! ```
//!
//! The Fréchet transform is `T(x) = -1 / ln F(x)`.

mod gpd;

pub use gpd::{fit_gpd, fit_gpd_with_floor, neg_log_likelihood, pwm_estimate, FitMethod, GpdFit, MIN_EXCEEDANCES, XI_BOUNDS};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BivariateSample, Scale};

/// Points in the monotonicity check grid.
pub const CHECK_GRID_POINTS: usize = 10_000;

/// Default blend window quantiles.
pub const DEFAULT_Q_THOLD: f64 = 0.97;
pub const DEFAULT_Q_THOLD_PLUS: f64 = 0.98;

/// Blended empirical/GPD distribution function for one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTransform {
    /// Sorted unique data values.
    pub knots_x: Vec<f64>,
    /// `#{x_t <= knot} / (n + 1)` at each knot.
    pub knots_p: Vec<f64>,
    pub n_obs: usize,
    pub gpd: GpdFit,
    /// Blend window start (the GPD threshold).
    pub x_thold: f64,
    /// Blend window end.
    pub x_thold_plus: f64,
    pub q_thold: f64,
    pub q_thold_plus: f64,
    pub monotone_verified: bool,
}

/// Result of inverting the Fréchet transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverted {
    pub x: f64,
    /// The target lay at (or numerically beyond) a finite upper endpoint.
    pub clipped: bool,
}

impl MarginalTransform {
    pub fn data_min(&self) -> f64 {
        self.knots_x[0]
    }

    pub fn data_max(&self) -> f64 {
        *self.knots_x.last().unwrap()
    }

    /// Sine blend weight: 0 up to `x_thold`, 1 from `x_thold_plus`.
    pub fn weight(&self, x: f64) -> f64 {
        blend_weight(x, self.x_thold, self.x_thold_plus)
    }

    /// Decay length of the exponential continuation below the sample
    /// minimum, matched to the slope of the first ECDF segment.
    fn lower_scale(&self) -> f64 {
        let (x0, x1) = (self.knots_x[0], self.knots_x[1]);
        let (p0, p1) = (self.knots_p[0], self.knots_p[1]);
        p0 * (x1 - x0) / (p1 - p0)
    }

    /// Interpolated empirical CDF.
    pub fn empirical_cdf(&self, x: f64) -> f64 {
        let xs = &self.knots_x;
        let ps = &self.knots_p;
        if x < xs[0] {
            return ps[0] * ((x - xs[0]) / self.lower_scale()).exp();
        }
        let last = xs.len() - 1;
        if x >= xs[last] {
            return ps[last];
        }
        let j = xs.partition_point(|&k| k <= x);
        let (xa, xb) = (xs[j - 1], xs[j]);
        let (pa, pb) = (ps[j - 1], ps[j]);
        pa + (pb - pa) * (x - xa) / (xb - xa)
    }

    /// Conditional GPD tail, `1 - F_tail(x)`.
    fn tail_sf(&self, x: f64) -> f64 {
        (1.0 - self.q_thold) * self.gpd.sf(x - self.x_thold)
    }

    /// `(F(x), 1 - F(x))`, each computed directly for precision.
    fn cdf_sf(&self, x: f64) -> (f64, f64) {
        if x <= self.x_thold {
            let f = self.empirical_cdf(x);
            return (f, 1.0 - f);
        }
        let tail = self.tail_sf(x);
        if x >= self.x_thold_plus {
            return (1.0 - tail, tail);
        }
        let w = self.weight(x);
        let emp = self.empirical_cdf(x);
        let sf = (1.0 - w) * (1.0 - emp) + w * tail;
        ((1.0 - w) * emp + w * (1.0 - tail), sf)
    }

    /// Blended distribution function.
    pub fn blended_cdf(&self, x: f64) -> f64 {
        self.cdf_sf(x).0
    }

    pub fn blended_sf(&self, x: f64) -> f64 {
        self.cdf_sf(x).1
    }

    /// `ln F(x)` without cancellation at either end.
    pub fn log_cdf(&self, x: f64) -> f64 {
        if x < self.knots_x[0] {
            return self.knots_p[0].ln() + (x - self.knots_x[0]) / self.lower_scale();
        }
        let (f, s) = self.cdf_sf(x);
        if f < 0.5 {
            f.ln()
        } else {
            (-s).ln_1p()
        }
    }

    /// `T(x) = -1 / ln F(x)`.
    pub fn to_frechet(&self, x: f64) -> f64 {
        -1.0 / self.log_cdf(x)
    }

    /// Inverse of [`to_frechet`](Self::to_frechet) by bisection on `ln F`.
    pub fn from_frechet(&self, z: f64) -> Result<Inverted> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::invalid(format!("Fréchet value must be positive and finite, got {z}")));
        }
        let target = -1.0 / z;
        let (x0, p0) = (self.knots_x[0], self.knots_p[0]);
        if target <= p0.ln() {
            return Ok(Inverted {
                x: x0 + self.lower_scale() * (target - p0.ln()),
                clipped: false,
            });
        }

        let mut lo = x0;
        let endpoint = self.gpd.upper_endpoint();
        let mut hi = self.data_max().max(self.x_thold_plus);
        let mut clipped = false;
        if self.log_cdf(hi) < target {
            if endpoint.is_finite() {
                hi = endpoint;
            } else {
                let mut width = hi - self.x_thold;
                loop {
                    lo = hi;
                    width *= 2.0;
                    hi = self.x_thold + width;
                    if !hi.is_finite() {
                        return Err(Error::invalid(format!("Fréchet value {z} beyond representable range")));
                    }
                    if self.log_cdf(hi) >= target {
                        break;
                    }
                }
            }
        }
        for _ in 0..2000 {
            let mid = lo + (hi - lo) / 2.0;
            if mid <= lo || mid >= hi {
                break;
            }
            if self.log_cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = if self.log_cdf(hi) - target <= target - self.log_cdf(lo) { hi } else { lo };
        if endpoint.is_finite() && (endpoint - x).abs() <= 1e-12 * endpoint.abs().max(1.0) {
            clipped = true;
        }
        Ok(Inverted { x, clipped })
    }

    /// Upper end of the monotonicity check grid.
    pub fn check_upper(&self) -> f64 {
        let excess = self.gpd.isf(1e-6 / (1.0 - self.q_thold));
        self.data_max().max(self.x_thold + excess)
    }

    /// Strict increase of `F` on [`CHECK_GRID_POINTS`] equally spaced points
    /// spanning `[data min, check_upper()]`.
    pub fn verify_monotone(&self) -> Result<()> {
        let lo = self.data_min();
        let hi = self.check_upper();
        let step = (hi - lo) / (CHECK_GRID_POINTS - 1) as f64;
        let mut prev = self.log_cdf(lo);
        for i in 1..CHECK_GRID_POINTS {
            let x = if i == CHECK_GRID_POINTS - 1 { hi } else { lo + step * i as f64 };
            let cur = self.log_cdf(x);
            if !(cur > prev) || !(cur < 0.0) {
                return Err(Error::NotMonotone { x });
            }
            prev = cur;
        }
        Ok(())
    }
}

pub fn blend_weight(x: f64, a: f64, b: f64) -> f64 {
    if x <= a {
        0.0
    } else if x >= b {
        1.0
    } else {
        ((PI * (x - a) / (b - a) - PI / 2.0).sin() + 1.0) / 2.0
    }
}

/// Quantile of the interpolated ECDF (inverse of the piecewise-linear map).
fn ecdf_quantile(xs: &[f64], ps: &[f64], q: f64) -> Option<f64> {
    if q < ps[0] || q > *ps.last()? {
        return None;
    }
    let j = ps.partition_point(|&p| p < q);
    if ps[j] == q || j == 0 {
        return Some(xs[j]);
    }
    let (pa, pb) = (ps[j - 1], ps[j]);
    Some(xs[j - 1] + (xs[j] - xs[j - 1]) * (q - pa) / (pb - pa))
}

/// Fit the blended marginal for one coordinate.
pub fn fit_marginal(values: &[f64], q_thold: f64, q_thold_plus: f64) -> Result<MarginalTransform> {
    if !(0.5 < q_thold && q_thold < q_thold_plus && q_thold_plus < 1.0) {
        return Err(Error::invalid(format!(
            "need 0.5 < q_thold < q_thold_plus < 1, got ({q_thold}, {q_thold_plus})"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("marginal values must be finite"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let denom = (n + 1) as f64;
    let mut knots_x = Vec::new();
    let mut knots_p = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        if i + 1 < n && sorted[i + 1] == v {
            continue;
        }
        knots_x.push(v);
        knots_p.push((i + 1) as f64 / denom);
    }
    if knots_x.len() < 2 {
        return Err(Error::DegenerateSpread("margin has a single distinct value".into()));
    }

    let too_few = |found| Error::TooFewExceedances {
        found,
        needed: MIN_EXCEEDANCES,
    };
    let x_thold = ecdf_quantile(&knots_x, &knots_p, q_thold).ok_or_else(|| too_few(0))?;
    let x_thold_plus = ecdf_quantile(&knots_x, &knots_p, q_thold_plus).ok_or_else(|| too_few(0))?;
    if !(x_thold < x_thold_plus) {
        return Err(Error::invalid(format!(
            "blend window collapses: q{q_thold} and q{q_thold_plus} quantiles both equal {x_thold}"
        )));
    }
    let excesses: Vec<f64> = sorted.iter().filter(|&&v| v > x_thold).map(|v| v - x_thold).collect();
    if excesses.len() < MIN_EXCEEDANCES {
        return Err(too_few(excesses.len()));
    }
    let gpd = fit_gpd(&excesses, x_thold)?;

    let mut mt = MarginalTransform {
        knots_x,
        knots_p,
        n_obs: n,
        gpd,
        x_thold,
        x_thold_plus,
        q_thold,
        q_thold_plus,
        monotone_verified: false,
    };
    mt.verify_monotone()?;
    mt.monotone_verified = true;
    Ok(mt)
}

/// Marginal fits for both coordinates of a sample.
pub fn fit_marginals(sample: &BivariateSample, q_thold: f64, q_thold_plus: f64) -> Result<[MarginalTransform; 2]> {
    Ok([
        fit_marginal(sample.x1(), q_thold, q_thold_plus)?,
        fit_marginal(sample.x2(), q_thold, q_thold_plus)?,
    ])
}

/// `Z_t = T(X_t)` coordinate-wise.
pub fn to_frechet_sample(margins: &[MarginalTransform; 2], sample: &BivariateSample) -> Result<BivariateSample> {
    if sample.scale() != Scale::Original {
        return Err(Error::invalid("sample is already on the Fréchet scale"));
    }
    let z1 = sample.x1().iter().map(|&x| margins[0].to_frechet(x)).collect();
    let z2 = sample.x2().iter().map(|&x| margins[1].to_frechet(x)).collect();
    sample.with_values(z1, z2, Scale::Frechet)
}
