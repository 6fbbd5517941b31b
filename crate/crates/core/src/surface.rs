//! Kernel-smoothed joint survival surface and level-set extraction.
//!
//! The surface at grid node `(x_i, y_j)` is
//!
//! ```text
//! S(x_i, y_j) = n⁻¹ Σ_t Φ((x_{t,1} - x_i) / σ₁) · Φ((x_{t,2} - y_j) / σ₂)
//! ```
//!
//! i.e. the survival function of the data convolved with a product
//! Gaussian kernel. Each term is non-increasing in both grid coordinates,
//! so the surface is monotone without any post-processing. The kernel
//! standard deviation is a quarter of the normal-reference bandwidth
//! returned by [`nrd_bandwidth`], the same convention two-dimensional
//! kernel density tools apply to that bandwidth.

use std::collections::HashMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BivariateSample, Scale};
use crate::stats;

pub const MIN_RESOLUTION: usize = 16;

/// Consecutive isoline vertices must differ by more than this fraction of
/// the grid span in both coordinates.
pub const AXIS_PARALLEL_TOL: f64 = 1e-9;
const SOFT_MIN_OBS: usize = 50;

/// Normal-reference bandwidth `4 · 1.06 · min(s, IQR / 1.34) · n^(-1/5)`.
pub fn nrd_bandwidth(values: &[f64]) -> Result<f64> {
    if values.len() < 4 {
        return Err(Error::invalid(format!("bandwidth needs at least 4 values, got {}", values.len())));
    }
    let sorted = stats::sorted_copy(values);
    let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
    let sd = stats::std_dev(values);
    let h = 4.0 * 1.06 * sd.min(iqr / 1.34) * (values.len() as f64).powf(-0.2);
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::DegenerateSpread(format!("sd {sd}, IQR {iqr}")));
    }
    Ok(h)
}

/// Grid layout: `resolution` lines per axis spanning
/// `[min - lower_pad·h, max + upper_pad·h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: usize,
    pub lower_pad: f64,
    pub upper_pad: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolution: 400,
            lower_pad: 1.0,
            upper_pad: 3.0,
        }
    }
}

/// Joint survival probabilities on a rectilinear grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalGrid {
    x: Vec<f64>,
    y: Vec<f64>,
    /// `values[[i, j]]` is the survival probability at `(x[i], y[j])`.
    values: Array2<f64>,
    bandwidths: [f64; 2],
}

impl SurvivalGrid {
    /// Wrap precomputed values, checking the grid invariants.
    pub fn from_values(x: Vec<f64>, y: Vec<f64>, values: Array2<f64>, bandwidths: [f64; 2]) -> Result<Self> {
        if values.dim() != (x.len(), y.len()) {
            return Err(Error::invalid("grid values do not match coordinate lengths"));
        }
        if x.len() < 2 || y.len() < 2 {
            return Err(Error::invalid("grid needs at least two lines per axis"));
        }
        if x.windows(2).any(|w| !(w[0] < w[1])) || y.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("grid lines must be strictly increasing"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("survival values outside [0, 1]"));
        }
        let (nx, ny) = values.dim();
        for i in 0..nx {
            for j in 0..ny {
                let v = values[[i, j]];
                if (i + 1 < nx && values[[i + 1, j]] > v) || (j + 1 < ny && values[[i, j + 1]] > v) {
                    return Err(Error::invalid(format!("survival grid increases at node ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            x,
            y,
            values,
            bandwidths,
        })
    }

    pub fn x_coords(&self) -> &[f64] {
        &self.x
    }

    pub fn y_coords(&self) -> &[f64] {
        &self.y
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn bandwidths(&self) -> [f64; 2] {
        self.bandwidths
    }

    /// Bilinear interpolation, clamped to the grid rectangle.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let locate = |lines: &[f64], v: f64| {
            let k = lines.partition_point(|&l| l <= v).clamp(1, lines.len() - 1) - 1;
            let t = ((v - lines[k]) / (lines[k + 1] - lines[k])).clamp(0.0, 1.0);
            (k, t)
        };
        let (i, tx) = locate(&self.x, x);
        let (j, ty) = locate(&self.y, y);
        let v = &self.values;
        let bottom = v[[i, j]] + tx * (v[[i + 1, j]] - v[[i, j]]);
        let top = v[[i, j + 1]] + tx * (v[[i + 1, j + 1]] - v[[i, j + 1]]);
        bottom + ty * (top - bottom)
    }

    /// Rows of `x,y,survival` for debugging dumps.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "survival"])?;
        for (i, &x) in self.x.iter().enumerate() {
            for (j, &y) in self.y.iter().enumerate() {
                w.write_record([x.to_string(), y.to_string(), self.values[[i, j]].to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("grid output", e))?;
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect()
}

/// Kernel survival surface on a padded grid. `bandwidths` defaults to the
/// normal-reference rule per coordinate.
pub fn survival_grid(sample: &BivariateSample, bandwidths: Option<[f64; 2]>, spec: &GridSpec) -> Result<SurvivalGrid> {
    if spec.resolution < MIN_RESOLUTION {
        return Err(Error::invalid(format!(
            "grid resolution {} below minimum {MIN_RESOLUTION}",
            spec.resolution
        )));
    }
    if sample.len() < SOFT_MIN_OBS {
        log::warn!("kernel surface from only {} observations", sample.len());
    }
    let h = match bandwidths {
        Some(h) if h.iter().all(|&v| v > 0.0 && v.is_finite()) => h,
        Some(h) => return Err(Error::invalid(format!("bandwidths must be positive, got {h:?}"))),
        None => [nrd_bandwidth(sample.x1())?, nrd_bandwidth(sample.x2())?],
    };
    let axis = |k: usize| {
        let v = sample.coord(k);
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        linspace(lo - spec.lower_pad * h[k], hi + spec.upper_pad * h[k], spec.resolution)
    };
    let xs = axis(0);
    let ys = axis(1);
    let kernel = |lines: &[f64], obs: &[f64], bw: f64| {
        let sd = bw / 4.0;
        let mut flat = vec![0.0; lines.len() * obs.len()];
        flat.par_chunks_mut(obs.len().max(1))
            .zip(lines.par_iter())
            .for_each(|(row, &g)| {
                for (r, &o) in row.iter_mut().zip(obs) {
                    *r = stats::norm_cdf((o - g) / sd);
                }
            });
        Array2::from_shape_vec((lines.len(), obs.len()), flat).expect("kernel matrix shape")
    };
    let a = kernel(&xs, sample.x1(), h[0]);
    let b = kernel(&ys, sample.x2(), h[1]);
    let mut values = a.dot(&b.t());
    let inv_n = 1.0 / sample.len() as f64;
    values.mapv_inplace(|v| (v * inv_n).clamp(0.0, 1.0));
    // summation order in the product can introduce last-bit wiggles
    enforce_monotone(&mut values);
    Ok(SurvivalGrid {
        x: xs,
        y: ys,
        values,
        bandwidths: h,
    })
}

/// Running minimum along both axes; a no-op on exactly monotone input.
fn enforce_monotone(values: &mut Array2<f64>) {
    let (nx, ny) = values.dim();
    for i in 0..nx {
        for j in 0..ny {
            let mut v = values[[i, j]];
            if i > 0 {
                v = v.min(values[[i - 1, j]]);
            }
            if j > 0 {
                v = v.min(values[[i, j - 1]]);
            }
            values[[i, j]] = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    BaseNonparametric,
    ProjectedAd,
    ProjectedAi,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::BaseNonparametric => "base_nonparametric",
            Provenance::ProjectedAd => "projected_ad",
            Provenance::ProjectedAi => "projected_ai",
        }
    }
}

/// Polyline of equal joint survival probability, ordered with `x`
/// strictly decreasing and `y` strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isoline {
    pub level: f64,
    points: Vec<[f64; 2]>,
    pub scale: Scale,
    pub provenance: Provenance,
    /// The first / last vertex was cut off by a window boundary rather than
    /// reaching the margin.
    pub clipped: [bool; 2],
}

/// Index of the first consecutive pair without a strictly negative slope.
pub fn first_slope_violation(points: &[[f64; 2]]) -> Option<usize> {
    points.windows(2).position(|w| !(w[1][0] < w[0][0] && w[1][1] > w[0][1]))
}

impl Isoline {
    pub fn new(level: f64, points: Vec<[f64; 2]>, scale: Scale, provenance: Provenance, clipped: [bool; 2]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::ShortIsoline(points.len()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("isoline vertex is not finite"));
        }
        if let Some(index) = first_slope_violation(&points) {
            return Err(Error::SlopeViolation { index });
        }
        Ok(Self {
            level,
            points,
            scale,
            provenance,
            clipped,
        })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Write isolines as `level,scale,provenance,x,y` rows in polyline order.
pub fn write_isolines_csv<W: std::io::Write>(lines: &[Isoline], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "scale", "provenance", "x", "y"])?;
    for line in lines {
        for p in line.points() {
            w.write_record([
                line.level.to_string(),
                line.scale.as_str().to_string(),
                line.provenance.as_str().to_string(),
                crate::ingest::format_f64(p[0]),
                crate::ingest::format_f64(p[1]),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("isoline output", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    /// `(x_i, y_j)`–`(x_{i+1}, y_j)`
    H(usize, usize),
    /// `(x_i, y_j)`–`(x_i, y_{j+1})`
    V(usize, usize),
}

/// Level set `S = p` by marching squares with linear interpolation along
/// cell edges, chained into a single polyline.
pub fn extract_isoline(grid: &SurvivalGrid, p: f64) -> Result<Isoline> {
    let v = &grid.values;
    let (nx, ny) = v.dim();
    let (min, max) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let empty = || Error::EmptyLevelSet { level: p, min, max };
    if !(p > min && p < max) {
        return Err(empty());
    }

    let above = |i: usize, j: usize| v[[i, j]] > p;
    let cross = |e: Edge| -> [f64; 2] {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (a, b) = (v[[i0, j0]], v[[i1, j1]]);
        let t = ((a - p) / (a - b)).clamp(0.0, 1.0);
        [
            grid.x[i0] + t * (grid.x[i1] - grid.x[i0]),
            grid.y[j0] + t * (grid.y[j1] - grid.y[j0]),
        ]
    };

    let mut segments: Vec<[Edge; 2]> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let (c00, c10, c11, c01) = (above(i, j), above(i + 1, j), above(i + 1, j + 1), above(i, j + 1));
            let bottom = Edge::H(i, j);
            let top = Edge::H(i, j + 1);
            let left = Edge::V(i, j);
            let right = Edge::V(i + 1, j);
            let mut crossed = Vec::with_capacity(4);
            if c00 != c10 {
                crossed.push(bottom);
            }
            if c10 != c11 {
                crossed.push(right);
            }
            if c11 != c01 {
                crossed.push(top);
            }
            if c01 != c00 {
                crossed.push(left);
            }
            match crossed.len() {
                0 => {}
                2 => segments.push([crossed[0], crossed[1]]),
                _ => {
                    let centre = (v[[i, j]] + v[[i + 1, j]] + v[[i + 1, j + 1]] + v[[i, j + 1]]) / 4.0 > p;
                    // isolate the two corners whose state differs from the centre
                    if c00 != centre {
                        segments.push([left, bottom]);
                        segments.push([right, top]);
                    } else {
                        segments.push([bottom, right]);
                        segments.push([top, left]);
                    }
                }
            }
        }
    }
    if segments.is_empty() {
        return Err(empty());
    }

    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, s) in segments.iter().enumerate() {
        for e in s {
            by_edge.entry(*e).or_default().push(k);
        }
    }
    let mut used = vec![false; segments.len()];
    let mut pieces: Vec<Vec<Edge>> = Vec::new();
    // open chains first, starting from edges shared by a single segment
    let mut starts: Vec<(Edge, usize)> = by_edge
        .iter()
        .filter(|(_, segs)| segs.len() == 1)
        .map(|(e, segs)| (*e, segs[0]))
        .collect();
    starts.sort_by_key(|(e, _)| match *e {
        Edge::H(i, j) => (0, i, j),
        Edge::V(i, j) => (1, i, j),
    });
    let walk = |start_edge: Edge, start_seg: usize, used: &mut Vec<bool>| {
        let mut chain = vec![start_edge];
        let mut edge = start_edge;
        let mut seg = start_seg;
        loop {
            used[seg] = true;
            let s = segments[seg];
            let next = if s[0] == edge { s[1] } else { s[0] };
            chain.push(next);
            edge = next;
            match by_edge[&edge].iter().find(|&&k| !used[k]) {
                Some(&k) => seg = k,
                None => break,
            }
        }
        chain
    };
    for (e, s) in starts {
        if !used[s] {
            pieces.push(walk(e, s, &mut used));
        }
    }
    while let Some(s) = used.iter().position(|u| !u) {
        let e = segments[s][0];
        pieces.push(walk(e, s, &mut used));
    }
    if pieces.len() > 1 {
        return Err(Error::FragmentedLevelSet {
            level: p,
            pieces: pieces.len(),
        });
    }

    let chain = pieces.pop().unwrap();
    let is_clipped = |e: Edge| match e {
        Edge::H(_, j) => j == ny - 1,
        Edge::V(i, _) => i == nx - 1,
    };
    let mut ends = [is_clipped(chain[0]), is_clipped(*chain.last().unwrap())];
    let mut points: Vec<[f64; 2]> = chain.iter().map(|&e| cross(e)).collect();
    if points[0][0] < points[points.len() - 1][0] {
        points.reverse();
        ends.swap(0, 1);
    }
    let span = [
        grid.x[nx - 1] - grid.x[0],
        grid.y[ny - 1] - grid.y[0],
    ];
    points.dedup_by(|b, a| (a[0] - b[0]).abs() <= 1e-12 * span[0] && (a[1] - b[1]).abs() <= 1e-12 * span[1]);
    // far from the data the kernel factors saturate and whole grid columns
    // (or rows) carry identical or nearly identical values, so the level set
    // there runs parallel to an axis; keep only vertices that continue the
    // descent by a margin the marginal transforms can resolve
    let step = [AXIS_PARALLEL_TOL * span[0], AXIS_PARALLEL_TOL * span[1]];
    let before = points.len();
    points.dedup_by(|b, a| !(a[0] - b[0] > step[0] && b[1] - a[1] > step[1]));
    if points.len() < before {
        log::debug!("dropped {} axis-parallel isoline vertices", before - points.len());
    }
    Isoline::new(p, points, Scale::Original, Provenance::BaseNonparametric, ends)
}
