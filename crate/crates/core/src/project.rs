//! Projection of a Fréchet-scale base isoline to smaller exceedance
//! probabilities.
//!
//! With `s = p_base / p`:
//!
//! - asymptotic dependence: `z ↦ s z`;
//! - asymptotic independence: `z_i ↦ s^{η_i(z)} z_i`, where
//!   `m_i = 1 - (z_i / (z_1 + z_2))^β` and `η_i = m_i η̂ + (1 - m_i)`.
//!
//! For `η̂ ≤ 1`, `η_1` grows with the share of the first coordinate and
//! `η_2` shrinks, which keeps consecutive slopes of the projected polyline
//! strictly negative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Scale;
use crate::marginal::MarginalTransform;
use crate::surface::{first_slope_violation, Isoline, Provenance};

pub const DEFAULT_BETA: f64 = 200.0;
/// Candidate smoothing values to compare with the diagnostic plot.
pub const BETA_SEARCH_GRID: [f64; 6] = [10.0, 50.0, 100.0, 200.0, 500.0, 1000.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Asymptotic dependence: pure scaling.
    Ad,
    /// Asymptotic independence: β-smoothed η scaling.
    Ai,
}

impl std::str::FromStr for ProjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ad" => Ok(ProjectionMode::Ad),
            "ai" => Ok(ProjectionMode::Ai),
            other => Err(Error::invalid(format!("mode: expected ad|ai, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub p_base: f64,
    pub p_proj: Vec<f64>,
    pub mode: ProjectionMode,
    pub beta: f64,
    /// Required in `Ai` mode.
    pub eta_hat: Option<f64>,
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_base > 0.0 && self.p_base < 1.0) {
            return Err(Error::invalid(format!("p_base {} outside (0, 1)", self.p_base)));
        }
        if let Some(p) = self.p_proj.iter().find(|&&p| !(p > 0.0 && p <= self.p_base)) {
            return Err(Error::invalid(format!("projected level {p} must lie in (0, p_base]")));
        }
        if self.mode == ProjectionMode::Ai {
            if !(self.beta > 0.0) {
                return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
            }
            match self.eta_hat {
                Some(e) if e > 0.0 && e <= 1.0 => {}
                other => return Err(Error::invalid(format!("eta_hat must lie in (0, 1], got {other:?}"))),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingExponents {
    pub m: [f64; 2],
    pub eta: [f64; 2],
}

/// Per-point exponents `η_i(z)` for the smoothed projection.
pub fn smoothed_exponents(z_base: [f64; 2], eta_hat: f64, beta: f64) -> Result<ScalingExponents> {
    let [z1, z2] = z_base;
    if !(z1 >= 0.0 && z2 >= 0.0) {
        return Err(Error::invalid(format!("base point {z_base:?} has a negative coordinate")));
    }
    let total = z1 + z2;
    if !(total > 0.0) {
        return Err(Error::invalid("base point is the origin"));
    }
    let m = [1.0 - (z1 / total).powf(beta), 1.0 - (z2 / total).powf(beta)];
    // 1 - m (1 - η̂) equals m η̂ + (1 - m) and is exactly 1 when η̂ = 1 or m = 0
    let eta = m.map(|mi| 1.0 - mi * (1.0 - eta_hat));
    Ok(ScalingExponents { m, eta })
}

fn check_projection_input(isoline: &Isoline, s: f64) -> Result<()> {
    if isoline.scale != Scale::Frechet {
        return Err(Error::invalid("projection needs a Fréchet-scale isoline"));
    }
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::invalid(format!("scaling factor must exceed 1, got {s}")));
    }
    Ok(())
}

/// Multiply every vertex by `s`; the level becomes `level / s`.
pub fn scale_ad(isoline: &Isoline, s: f64) -> Result<Isoline> {
    check_projection_input(isoline, s)?;
    let points = isoline.points().iter().map(|p| [p[0] * s, p[1] * s]).collect();
    Isoline::new(isoline.level / s, points, Scale::Frechet, Provenance::ProjectedAd, isoline.clipped)
}

/// Smoothed hidden-regular-variation projection.
pub fn scale_ai(isoline: &Isoline, s: f64, eta_hat: f64, beta: f64) -> Result<Isoline> {
    check_projection_input(isoline, s)?;
    if !(eta_hat > 0.0 && eta_hat <= 1.0) {
        return Err(Error::invalid(format!("eta_hat must lie in (0, 1], got {eta_hat}")));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let points = isoline
        .points()
        .iter()
        .map(|&p| {
            let e = smoothed_exponents(p, eta_hat, beta)?;
            Ok([s.powf(e.eta[0]) * p[0], s.powf(e.eta[1]) * p[1]])
        })
        .collect::<Result<Vec<_>>>()?;
    Isoline::new(isoline.level / s, points, Scale::Frechet, Provenance::ProjectedAi, isoline.clipped)
}

/// Map an original-scale isoline onto Fréchet margins vertex by vertex.
/// Vertices at or beyond a finite upper endpoint (where the kernel surface
/// has smoothed past the fitted support) are dropped and flagged as clipped.
pub fn isoline_to_frechet(isoline: &Isoline, margins: &[MarginalTransform; 2]) -> Result<Isoline> {
    if isoline.scale != Scale::Original {
        return Err(Error::invalid("isoline is already on the Fréchet scale"));
    }
    let mut clipped = isoline.clipped;
    let mut points = Vec::with_capacity(isoline.len());
    for p in isoline.points() {
        let z = [margins[0].to_frechet(p[0]), margins[1].to_frechet(p[1])];
        if !z[0].is_finite() {
            clipped[0] = true;
        } else if !z[1].is_finite() {
            clipped[1] = true;
        } else {
            points.push(z);
        }
    }
    Isoline::new(isoline.level, points, Scale::Frechet, isoline.provenance, clipped)
}

/// Map a Fréchet-scale isoline back to original units. Vertices landing on
/// a finite upper endpoint of a fitted margin are dropped and the
/// corresponding end is flagged as clipped.
pub fn isoline_from_frechet(isoline: &Isoline, margins: &[MarginalTransform; 2]) -> Result<Isoline> {
    if isoline.scale != Scale::Frechet {
        return Err(Error::invalid("isoline is not on the Fréchet scale"));
    }
    let mut clipped = isoline.clipped;
    let mut points = Vec::with_capacity(isoline.len());
    let n = isoline.len();
    for (k, p) in isoline.points().iter().enumerate() {
        let a = margins[0].from_frechet(p[0])?;
        let b = margins[1].from_frechet(p[1])?;
        if a.clipped || b.clipped {
            // x descends along the line: large-x clips sit at the start
            if a.clipped || k < n / 2 {
                clipped[0] = true;
            }
            if b.clipped || k >= n / 2 {
                clipped[1] = true;
            }
            continue;
        }
        points.push([a.x, b.x]);
    }
    Isoline::new(isoline.level, points, Scale::Original, isoline.provenance, clipped)
}

/// Project an original-scale base isoline to every level in
/// `config.p_proj`, returning original-scale isolines in the same order.
pub fn project_pipeline(base: &Isoline, margins: &[MarginalTransform; 2], config: &ProjectionConfig) -> Result<Vec<Isoline>> {
    config.validate()?;
    if base.scale != Scale::Original {
        return Err(Error::invalid("base isoline must be on the original scale"));
    }
    let z_base = isoline_to_frechet(base, margins)?;
    config
        .p_proj
        .iter()
        .map(|&p| {
            let s = config.p_base / p;
            let projected = if s == 1.0 {
                z_base.clone()
            } else {
                match config.mode {
                    ProjectionMode::Ad => scale_ad(&z_base, s)?,
                    ProjectionMode::Ai => scale_ai(&z_base, s, config.eta_hat.unwrap_or(1.0), config.beta)?,
                }
            };
            let mut line = isoline_from_frechet(&projected, margins)?;
            line.level = p;
            if let Some(index) = first_slope_violation(line.points()) {
                return Err(Error::SlopeViolation { index });
            }
            Ok(line)
        })
        .collect()
}
