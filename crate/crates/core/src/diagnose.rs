//! Empirical checks of isolines and block-bootstrap uncertainty.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::ingest::{format_f64, BivariateSample, Scale};
use crate::pipeline::{self, PipelineConfig};
use crate::surface::Isoline;

pub const DEFAULT_PROBES: usize = 20;
pub const DEFAULT_COVERAGE: f64 = 0.95;

/// `B(x) = #{t : x_t ≥ x componentwise}`.
pub fn exceedance_count(sample: &BivariateSample, x: [f64; 2]) -> usize {
    sample.points().filter(|p| p[0] >= x[0] && p[1] >= x[1]).count()
}

/// Binomial(n, p) probability masses for `0..=n`.
fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=n)
        .map(|k| (ln_binomial(n, k) + k as f64 * lp + (n - k) as f64 * lq).exp())
        .collect()
}

/// Narrowest integer interval `[n1, n2]` holding at least `coverage` of
/// the Binomial(n, p) mass; ties go to the lowest `n1`.
pub fn binomial_interval(n: u64, p: f64, coverage: f64) -> Result<(u64, u64)> {
    if n == 0 {
        return Err(Error::invalid("binomial interval needs n >= 1"));
    }
    if !(p > 0.0 && p < 1.0) || !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::invalid(format!("need p in (0,1) and coverage in (0,1], got {p}, {coverage}")));
    }
    let pmf = binomial_pmf(n, p);
    let mut prefix = Vec::with_capacity(pmf.len() + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for v in &pmf {
        acc += v;
        prefix.push(acc);
    }
    let total = acc;
    // mass in [a, b]; renormalised so rounding in the pmf cannot push the
    // full range below coverage
    let mass = |a: usize, b: usize| (prefix[b + 1] - prefix[a]) / total;
    let last = n as usize;
    let mut best: Option<(usize, usize)> = None;
    let mut hi = 0usize;
    for lo in 0..=last {
        hi = hi.max(lo);
        while hi <= last && mass(lo, hi) < coverage {
            hi += 1;
        }
        if hi > last {
            break;
        }
        if best.is_none_or(|(a, b)| hi - lo < b - a) {
            best = Some((lo, hi));
        }
    }
    let (a, b) = best.unwrap_or((0, last));
    Ok((a as u64, b as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeFlag {
    Inside,
    Below,
    Above,
}

impl ProbeFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProbeFlag::Inside => "inside",
            ProbeFlag::Below => "below",
            ProbeFlag::Above => "above",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// Vertex index on the isoline.
    pub vertex: usize,
    pub x: [f64; 2],
    pub count: usize,
    pub emp_prob: f64,
    pub flag: ProbeFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub level: f64,
    pub n: usize,
    pub interval: (u64, u64),
    pub lower: f64,
    pub upper: f64,
    pub probes: Vec<Probe>,
    /// Overlapping exceedance regions make neighbouring counts dependent;
    /// the interval is pointwise.
    pub caveat: String,
}

impl DiagnosticReport {
    pub fn inside(&self) -> usize {
        self.probes.iter().filter(|p| p.flag == ProbeFlag::Inside).count()
    }

    /// `probe_index,x,y,count,emp_prob,lower,upper,flag`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["probe_index", "x", "y", "count", "emp_prob", "lower", "upper", "flag"])?;
        for (k, p) in self.probes.iter().enumerate() {
            w.write_record([
                k.to_string(),
                format_f64(p.x[0]),
                format_f64(p.x[1]),
                p.count.to_string(),
                format_f64(p.emp_prob),
                format_f64(self.lower),
                format_f64(self.upper),
                p.flag.as_str().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("diagnostic output", e))?;
        Ok(())
    }
}

/// Vertex indices for `n_probes` probes spread evenly by index over the
/// unclipped part of the polyline.
pub fn probe_vertices(isoline: &Isoline, n_probes: usize) -> Result<Vec<usize>> {
    let len = isoline.len();
    let first = usize::from(isoline.clipped[0]);
    let last = if isoline.clipped[1] { len - 2 } else { len - 1 };
    if len < 2 || first > last || (first == last && isoline.clipped.iter().all(|&c| c)) {
        return Err(Error::Diagnostic("isoline is entirely clipped".into()));
    }
    let span = last - first;
    let mut idx: Vec<usize> = (0..n_probes)
        .map(|k| first + ((k as f64 * span as f64) / (n_probes - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    Ok(idx)
}

/// Empirical survival at probes along an original-scale isoline with the
/// 95% binomial band of the target level.
pub fn diagnostic_report(sample: &BivariateSample, isoline: &Isoline, n_probes: usize) -> Result<DiagnosticReport> {
    diagnostic_report_with(sample, isoline, n_probes, DEFAULT_COVERAGE)
}

pub fn diagnostic_report_with(sample: &BivariateSample, isoline: &Isoline, n_probes: usize, coverage: f64) -> Result<DiagnosticReport> {
    if n_probes < 3 {
        return Err(Error::invalid(format!("need at least 3 probes, got {n_probes}")));
    }
    if isoline.scale != Scale::Original || sample.scale() != Scale::Original {
        return Err(Error::invalid("diagnostics compare original-scale data and isolines"));
    }
    let n = sample.len();
    let interval = binomial_interval(n as u64, isoline.level, coverage)?;
    let probes = probe_vertices(isoline, n_probes)?
        .into_iter()
        .map(|v| {
            let x = isoline.points()[v];
            let count = exceedance_count(sample, x);
            let flag = if (count as u64) < interval.0 {
                ProbeFlag::Below
            } else if (count as u64) > interval.1 {
                ProbeFlag::Above
            } else {
                ProbeFlag::Inside
            };
            Probe {
                vertex: v,
                x,
                count,
                emp_prob: count as f64 / n as f64,
                flag,
            }
        })
        .collect();
    Ok(DiagnosticReport {
        level: isoline.level,
        n,
        interval,
        lower: interval.0 as f64 / n as f64,
        upper: interval.1 as f64 / n as f64,
        probes,
        caveat: "neighbouring probes share observations; the band does not account for this dependence".into(),
    })
}

/// Row indices of a circular block resample with the given block starts.
pub fn block_indices(n: usize, block_len: usize, starts: &[usize]) -> Vec<usize> {
    let mut rows = Vec::with_capacity(n);
    'outer: for &s in starts {
        for k in 0..block_len {
            if rows.len() == n {
                break 'outer;
            }
            rows.push((s + k) % n);
        }
    }
    rows
}

/// `⌈n / b⌉` uniformly drawn block starts.
pub fn draw_block_starts<R: Rng>(n: usize, block_len: usize, rng: &mut R) -> Vec<usize> {
    (0..n.div_ceil(block_len)).map(|_| rng.random_range(0..n)).collect()
}

/// Random stream for replicate `r` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub level: f64,
    pub block_len: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Surviving replicates as `(replicate index, isoline)`.
    pub isolines: Vec<(usize, Isoline)>,
    /// Replicates whose pipeline failed, with the error message.
    pub failures: Vec<(usize, String)>,
}

impl BootstrapResult {
    /// Isoline schema with a leading `replicate` column.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replicate", "level", "scale", "provenance", "x", "y"])?;
        for (r, line) in &self.isolines {
            for p in line.points() {
                w.write_record([
                    r.to_string(),
                    format_f64(line.level),
                    line.scale.as_str().to_string(),
                    line.provenance.as_str().to_string(),
                    format_f64(p[0]),
                    format_f64(p[1]),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("bootstrap output", e))?;
        Ok(())
    }
}

/// Circular block bootstrap: each replicate reruns the whole pipeline on a
/// resample of `⌈n/b⌉` length-`b` blocks truncated to `n` rows.
///
/// Replicates run on the current rayon pool; results depend only on
/// `seed`, not on the number of threads.
pub fn block_bootstrap(
    sample: &BivariateSample,
    block_len: usize,
    iterations: usize,
    config: &PipelineConfig,
    level: f64,
    seed: u64,
) -> Result<BootstrapResult> {
    let n = sample.len();
    if block_len == 0 || block_len > n {
        return Err(Error::invalid(format!("block length {block_len} outside 1..={n}")));
    }
    if iterations == 0 {
        return Err(Error::invalid("need at least one bootstrap iteration"));
    }
    let outcomes: Vec<Result<Isoline>> = (0..iterations)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let starts = draw_block_starts(n, block_len, &mut rng);
            let resample = sample.resample(&block_indices(n, block_len, &starts))?;
            pipeline::isoline_at(&resample, config, level)
        })
        .collect();
    let mut isolines = Vec::new();
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(line) => isolines.push((r, line)),
            Err(e) => failures.push((r, format!("{}: {e}", e.code()))),
        }
    }
    Ok(BootstrapResult {
        level,
        block_len,
        iterations,
        seed,
        isolines,
        failures,
    })
}
