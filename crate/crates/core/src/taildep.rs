//! Extremal dependence summaries: the rank-based χ(u) curve and the Hill
//! estimate of the coefficient of tail dependence η from `min(Z1, Z2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BivariateSample, Scale};
use crate::stats;

pub const MIN_HILL_EXCEEDANCES: usize = 10;
pub const DEFAULT_ETA_QUANTILE: f64 = 0.98;
/// The Hill trace runs out to the exceedance count of this quantile.
pub const HILL_TRACE_QUANTILE: f64 = 0.90;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiCurve {
    pub u_grid: Vec<f64>,
    /// `None` where no observation has its second rank above `u`.
    pub chi_hat: Vec<Option<f64>>,
    /// `(joint, conditioning)` exceedance counts per `u`.
    pub counts: Vec<(usize, usize)>,
}

impl ChiCurve {
    pub fn at(&self, u: f64) -> Option<f64> {
        let k = self.u_grid.iter().position(|&g| g == u)?;
        self.chi_hat[k]
    }
}

/// `χ̂(u) = #{r1/(n+1) > u, r2/(n+1) > u} / #{r2/(n+1) > u}`.
pub fn chi_curve(sample: &BivariateSample, u_grid: &[f64]) -> Result<ChiCurve> {
    let n = sample.len();
    if n < 20 {
        return Err(Error::invalid(format!("chi curve needs at least 20 observations, got {n}")));
    }
    if u_grid.windows(2).any(|w| !(w[0] < w[1])) || u_grid.iter().any(|u| !(0.0..1.0).contains(u)) {
        return Err(Error::invalid("u grid must be increasing within [0, 1)"));
    }
    let denom = (n + 1) as f64;
    let r1: Vec<f64> = stats::average_ranks(sample.x1()).iter().map(|r| r / denom).collect();
    let r2: Vec<f64> = stats::average_ranks(sample.x2()).iter().map(|r| r / denom).collect();
    let mut chi_hat = Vec::with_capacity(u_grid.len());
    let mut counts = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let cond = r2.iter().filter(|&&r| r > u).count();
        let joint = r1.iter().zip(&r2).filter(|&(&a, &b)| a > u && b > u).count();
        chi_hat.push((cond > 0).then(|| joint as f64 / cond as f64));
        counts.push((joint, cond));
    }
    Ok(ChiCurve {
        u_grid: u_grid.to_vec(),
        chi_hat,
        counts,
    })
}

/// Evenly spaced `u` values from `lo` to `hi` inclusive.
pub fn u_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1).max(1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailDependenceEstimate {
    pub eta_hat: f64,
    pub threshold_quantile: f64,
    /// Threshold on the Fréchet scale (the `k+1`-th largest `z_min`).
    pub threshold: f64,
    pub k_exceed: usize,
    /// `(k, η̂_k)` for `k` from 10 to the trace limit.
    pub hill_trace: Vec<(usize, f64)>,
}

/// Hill estimate from the `k` largest values of a descending-sorted slice,
/// using the `k+1`-th largest as threshold.
fn hill_at(desc: &[f64], k: usize) -> f64 {
    let u = desc[k];
    desc[..k].iter().map(|z| (z / u).ln()).sum::<f64>() / k as f64
}

/// [`hill_at`] for every `k` in `lo..=hi` from running sums of logs.
fn hill_trace(desc: &[f64], lo: usize, hi: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(hi.saturating_sub(lo) + 1);
    let mut log_sum = 0.0;
    for k in 1..=hi {
        log_sum += desc[k - 1].ln();
        if k >= lo {
            out.push((k, log_sum / k as f64 - desc[k].ln()));
        }
    }
    out
}

/// `⌊n (1 - q)⌋`, guarded against `1 - q` rounding just below a multiple
/// of `1/n`.
fn exceedances(n: usize, q: f64) -> usize {
    (n as f64 * (1.0 - q) + 1e-9).floor() as usize
}

/// Hill estimator of η applied to `z_min = min(z1, z2)` above its
/// `threshold_quantile` empirical quantile.
///
/// With `k = ⌊n (1 - q)⌋` exceedances and `u` the `k+1`-th largest
/// value, `η̂ = k⁻¹ Σ_{i≤k} ln(z_(n-i+1) / u)`.
pub fn hill_eta(sample: &BivariateSample, threshold_quantile: f64) -> Result<TailDependenceEstimate> {
    if sample.scale() != Scale::Frechet {
        return Err(Error::invalid("Hill estimate of eta needs a Fréchet-scale sample"));
    }
    let zmin: Vec<f64> = sample.points().map(|p| p[0].min(p[1])).collect();
    hill_eta_from_min(&zmin, threshold_quantile)
}

/// As [`hill_eta`], starting from precomputed structure-variable values.
pub fn hill_eta_from_min(zmin: &[f64], threshold_quantile: f64) -> Result<TailDependenceEstimate> {
    if !(0.0 < threshold_quantile && threshold_quantile < 1.0) {
        return Err(Error::invalid(format!("threshold quantile {threshold_quantile} outside (0, 1)")));
    }
    if zmin.iter().any(|&z| !(z > 0.0) || !z.is_finite()) {
        return Err(Error::invalid("structure variable must be positive and finite"));
    }
    let n = zmin.len();
    let k = exceedances(n, threshold_quantile);
    if k < MIN_HILL_EXCEEDANCES || k >= n {
        return Err(Error::TooFewExceedances {
            found: k,
            needed: MIN_HILL_EXCEEDANCES,
        });
    }
    let mut desc = zmin.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    let eta_hat = hill_at(&desc, k);
    let k_max = exceedances(n, HILL_TRACE_QUANTILE)
        .min(n - 1)
        .max(k);
    let mut hill_trace = hill_trace(&desc, MIN_HILL_EXCEEDANCES, k_max);
    // the reported estimate and its trace entry agree exactly
    if let Some(entry) = hill_trace.iter_mut().find(|(j, _)| *j == k) {
        entry.1 = eta_hat;
    }
    Ok(TailDependenceEstimate {
        eta_hat,
        threshold_quantile,
        threshold: desc[k],
        k_exceed: k,
        hill_trace,
    })
}
