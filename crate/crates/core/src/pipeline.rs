//! End-to-end isoline estimation: marginals, base isoline, optional η,
//! projection. Shared by the CLI and every bootstrap replicate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BivariateSample;
use crate::marginal::{self, MarginalTransform};
use crate::project::{self, ProjectionConfig, ProjectionMode};
use crate::surface::{self, GridSpec, Isoline, SurvivalGrid};
use crate::taildep::{self, TailDependenceEstimate};

/// χ̂ at this `u` drives the automatic dependence-class choice.
pub const AUTO_CHI_U: f64 = 0.98;
pub const AUTO_CHI_CUTOFF: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    Ad,
    Ai,
    Auto,
}

impl std::str::FromStr for ModeChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ad" => Ok(ModeChoice::Ad),
            "ai" => Ok(ModeChoice::Ai),
            "auto" => Ok(ModeChoice::Auto),
            other => Err(Error::invalid(format!("mode: expected ad|ai|auto, got {other:?}"))),
        }
    }
}

impl std::fmt::Display for ModeChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModeChoice::Ad => "ad",
            ModeChoice::Ai => "ai",
            ModeChoice::Auto => "auto",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub q_thold: f64,
    pub q_thold_plus: f64,
    /// `None` uses the normal-reference rule per coordinate.
    pub bandwidths: Option<[f64; 2]>,
    pub grid: GridSpec,
    pub p_base: f64,
    pub p_proj: Vec<f64>,
    pub mode: ModeChoice,
    pub beta: f64,
    pub eta_quantile: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            q_thold: marginal::DEFAULT_Q_THOLD,
            q_thold_plus: marginal::DEFAULT_Q_THOLD_PLUS,
            bandwidths: None,
            grid: GridSpec::default(),
            p_base: 0.01,
            p_proj: vec![0.005, 0.001, 0.0005, 0.0001],
            mode: ModeChoice::Ad,
            beta: project::DEFAULT_BETA,
            eta_quantile: taildep::DEFAULT_ETA_QUANTILE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub margins: [MarginalTransform; 2],
    pub grid: SurvivalGrid,
    pub base: Isoline,
    pub mode: ProjectionMode,
    /// χ̂(0.98), computed when the mode was chosen automatically.
    pub chi_auto: Option<f64>,
    pub eta: Option<TailDependenceEstimate>,
    /// Original-scale isolines, one per `p_proj` entry.
    pub projected: Vec<Isoline>,
}

impl PipelineOutput {
    /// Base line followed by the projected ones.
    pub fn all_isolines(&self) -> Vec<Isoline> {
        std::iter::once(self.base.clone()).chain(self.projected.iter().cloned()).collect()
    }
}

fn resolve_mode(sample: &BivariateSample, choice: ModeChoice) -> Result<(ProjectionMode, Option<f64>)> {
    match choice {
        ModeChoice::Ad => Ok((ProjectionMode::Ad, None)),
        ModeChoice::Ai => Ok((ProjectionMode::Ai, None)),
        ModeChoice::Auto => {
            let chi = taildep::chi_curve(sample, &[AUTO_CHI_U])?.chi_hat[0].unwrap_or(0.0);
            let mode = if chi < AUTO_CHI_CUTOFF {
                log::warn!("chi({AUTO_CHI_U}) = {chi:.4} < {AUTO_CHI_CUTOFF}: using asymptotic independence; inspect the chi curve");
                ProjectionMode::Ai
            } else {
                log::warn!("chi({AUTO_CHI_U}) = {chi:.4}: using asymptotic dependence; inspect the chi curve");
                ProjectionMode::Ad
            };
            Ok((mode, Some(chi)))
        }
    }
}

/// Run the full estimation on `sample` (original scale).
pub fn run(sample: &BivariateSample, config: &PipelineConfig) -> Result<PipelineOutput> {
    run_with_margins(sample, config, None)
}

/// As [`run`], reusing previously fitted marginals when given.
pub fn run_with_margins(
    sample: &BivariateSample,
    config: &PipelineConfig,
    margins: Option<[MarginalTransform; 2]>,
) -> Result<PipelineOutput> {
    let (mode, chi_auto) = resolve_mode(sample, config.mode)?;
    let margins = match margins {
        Some(m) => m,
        None => marginal::fit_marginals(sample, config.q_thold, config.q_thold_plus)?,
    };
    let grid = surface::survival_grid(sample, config.bandwidths, &config.grid)?;
    let base = surface::extract_isoline(&grid, config.p_base)?;

    let eta = if mode == ProjectionMode::Ai {
        let z = marginal::to_frechet_sample(&margins, sample)?;
        Some(taildep::hill_eta(&z, config.eta_quantile)?)
    } else {
        None
    };
    let eta_hat = eta.as_ref().map(|e| {
        if e.eta_hat > 1.0 {
            log::warn!("eta estimate {:.4} above 1, using 1", e.eta_hat);
        }
        e.eta_hat.min(1.0)
    });
    let projection = ProjectionConfig {
        p_base: config.p_base,
        p_proj: config.p_proj.clone(),
        mode,
        beta: config.beta,
        eta_hat,
    };
    let projected = project::project_pipeline(&base, &margins, &projection)?;
    Ok(PipelineOutput {
        margins,
        grid,
        base,
        mode,
        chi_auto,
        eta,
        projected,
    })
}

/// Single isoline at `level`: the base line when `level == p_base`,
/// otherwise its projection.
pub fn isoline_at(sample: &BivariateSample, config: &PipelineConfig, level: f64) -> Result<Isoline> {
    let mut cfg = config.clone();
    cfg.p_proj = if level == config.p_base { Vec::new() } else { vec![level] };
    let out = run(sample, &cfg)?;
    Ok(out.projected.into_iter().next().unwrap_or(out.base))
}
