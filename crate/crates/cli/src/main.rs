//! `isolines`: joint-exceedance isolines from the command line.
//!
//! Every subcommand writes its CSV outputs, a `run.conf` that replays the
//! run via `--config`, and a `manifest.json` into the output directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod settings;
mod svg;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use isoline::diagnose::{self, ProbeFlag};
use isoline::ingest::{self, format_f64, ColumnSpec};
use isoline::pipeline::{self, ModeChoice, PipelineConfig};
use isoline::surface::{self, GridSpec, Isoline};
use isoline::synth::{self, Family, Margins, SynthModel};
use isoline::{marginal, taildep, BivariateSample, MarginalTransform, Orientation};

use settings::{Bandwidth, ProbList, Settings};
use svg::{Layer, Plot};

#[derive(Debug)]
pub enum CliError {
    Core(isoline::Error),
    Config(String),
    Usage(String),
    Io(String, std::io::Error),
    Json(String),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Config(_) => "cli.config",
            CliError::Usage(_) => "cli.usage",
            CliError::Io(..) => "cli.io",
            CliError::Json(_) => "cli.json",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(m) | CliError::Usage(m) | CliError::Json(m) => f.write_str(m),
            CliError::Io(path, e) => write!(f, "{path}: {e}"),
        }
    }
}

impl From<isoline::Error> for CliError {
    fn from(e: isoline::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// `println!` that tolerates a closed stdout, e.g. when piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "isolines", version, about = "Isolines of equal joint-exceedance probability")]
struct Cli {
    /// key = value file; flags given on the command line override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Headed CSV file
    #[arg(long, value_name = "PATH")]
    input: Option<String>,
    /// First coordinate column (name or 0-based index)
    #[arg(long)]
    col1: Option<String>,
    /// Second coordinate column (name or 0-based index)
    #[arg(long)]
    col2: Option<String>,
    /// Time column, or `none` for row numbers [default: none]
    #[arg(long)]
    time: Option<String>,
    /// Sign flips: none|1|2|both [default: none]
    #[arg(long)]
    negate: Option<String>,
    /// Month subset such as `9,10,11` or `4-10` [default: all]
    #[arg(long)]
    months: Option<String>,
}

#[derive(Args)]
struct MarginArgs {
    /// GPD threshold quantile [default: 0.97]
    #[arg(long)]
    q_thold: Option<String>,
    /// End of the ECDF-to-GPD blend [default: 0.98]
    #[arg(long)]
    q_thold_plus: Option<String>,
    /// Reuse marginals written by `fit-marginals`
    #[arg(long, value_name = "PATH")]
    marginals: Option<String>,
}

#[derive(Args)]
struct SurfaceArgs {
    /// `auto` or `h1,h2` [default: auto]
    #[arg(long)]
    bandwidth: Option<String>,
    /// Grid nodes per axis [default: 400]
    #[arg(long)]
    resolution: Option<String>,
    /// Probability of the nonparametric base isoline [default: 0.01]
    #[arg(long)]
    pbase: Option<String>,
}

#[derive(Args)]
struct ProjectArgs {
    /// Comma-separated projection probabilities [default: 0.005,0.001,0.0005,0.0001]
    #[arg(long = "p", value_name = "LIST")]
    p: Option<String>,
    /// ad|ai|auto [default: ad]
    #[arg(long)]
    mode: Option<String>,
    /// Axis-transition smoothing [default: 200]
    #[arg(long)]
    beta: Option<String>,
    /// Threshold quantile of min(z1, z2) for the eta estimate [default: 0.98]
    #[arg(long)]
    eta_quantile: Option<String>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory [default: out]
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Also write SVG quick-looks
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the blended ECDF/GPD marginal transforms
    FitMarginals {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        margin: MarginArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Base isoline plus projections to smaller probabilities
    Isolines {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        margin: MarginArgs,
        #[command(flatten)]
        surface: SurfaceArgs,
        #[command(flatten)]
        project: ProjectArgs,
        /// Also write the survival grid
        #[arg(long)]
        dump_grid: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Empirical chi(u) curve
    Chi {
        #[command(flatten)]
        input: InputArgs,
        /// [default: 0.5]
        #[arg(long)]
        u_min: Option<String>,
        /// [default: 0.99]
        #[arg(long)]
        u_max: Option<String>,
        /// [default: 50]
        #[arg(long)]
        u_steps: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Hill estimate of eta with its trace over k
    Hill {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        margin: MarginArgs,
        /// [default: 0.98]
        #[arg(long)]
        eta_quantile: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare an isoline with empirical exceedance counts
    Diagnose {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        margin: MarginArgs,
        #[command(flatten)]
        surface: SurfaceArgs,
        #[command(flatten)]
        project: ProjectArgs,
        /// Isoline probability to check [default: pbase]
        #[arg(long)]
        level: Option<String>,
        /// Number of probe vertices [default: 20]
        #[arg(long)]
        probes: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Circular block bootstrap of one isoline
    Bootstrap {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        surface: SurfaceArgs,
        #[command(flatten)]
        project: ProjectArgs,
        /// GPD threshold quantile, refitted per replicate [default: 0.97]
        #[arg(long)]
        q_thold: Option<String>,
        /// [default: 0.98]
        #[arg(long)]
        q_thold_plus: Option<String>,
        /// Isoline probability [default: pbase]
        #[arg(long)]
        level: Option<String>,
        /// Block length
        #[arg(long)]
        block: Option<String>,
        /// [default: 200]
        #[arg(long)]
        replicates: Option<String>,
        /// [default: 0]
        #[arg(long)]
        seed: Option<String>,
        /// Worker threads, 0 for all cores [default: 0]
        #[arg(long)]
        threads: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Simulate a sample with known tail behaviour
    Simulate {
        /// logistic|gaussian|indep
        #[arg(long)]
        family: Option<String>,
        /// Logistic alpha or Gaussian correlation
        #[arg(long)]
        param: Option<String>,
        /// frechet|uniform|gumbel [default: frechet]
        #[arg(long)]
        margins: Option<String>,
        #[arg(long)]
        n: Option<String>,
        /// [default: 0]
        #[arg(long)]
        seed: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::FitMarginals { .. } => "fit-marginals",
            Command::Isolines { .. } => "isolines",
            Command::Chi { .. } => "chi",
            Command::Hill { .. } => "hill",
            Command::Diagnose { .. } => "diagnose",
            Command::Bootstrap { .. } => "bootstrap",
            Command::Simulate { .. } => "simulate",
        }
    }
}

/// Output directory plus the bookkeeping for the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    svg: bool,
}

impl Outputs {
    fn new(s: &Settings, a: &OutputArgs) -> Result<Self> {
        let dir: String = s.get("out", &a.out, Some("out"))?;
        let svg = s.switch("svg", a.svg)?;
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(dir.clone(), e))?;
        Ok(Self {
            dir: PathBuf::from(dir),
            files: Vec::new(),
            svg,
        })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let io = |e| CliError::Io(path.display().to_string(), e);
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        body(&mut w)?;
        w.flush().map_err(io)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_str(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        self.write(name, |w| {
            w.write_all(text.as_bytes())
                .map_err(|e| CliError::Io(path.display().to_string(), e))
        })
    }

    fn plot(&mut self, name: &str, plot: impl FnOnce() -> Plot) -> Result<()> {
        if self.svg {
            self.write_str(name, &plot().render())?;
        }
        Ok(())
    }

    fn finish(mut self, command: &str, s: &Settings, seed: Option<u64>, summary: Value) -> Result<()> {
        let resolved = s.resolved();
        let conf = format!(
            "# replay with: isolines {command} --config run.conf\n{}",
            settings::render_config(&resolved)
        );
        self.write_str("run.conf", &conf)?;
        let manifest = json!({
            "command": command,
            "versions": { "isolines": env!("CARGO_PKG_VERSION"), "isoline-core": isoline::VERSION },
            "seed": seed,
            "config": resolved,
            "outputs": self.files,
            "summary": summary,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Json(e.to_string()))?;
        self.write_str("manifest.json", &(text + "\n"))?;
        say!("wrote {} files to {}", self.files.len(), self.dir.display());
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> CliError {
    CliError::Core(isoline::Error::Csv(e))
}

fn load_input(s: &Settings, a: &InputArgs) -> Result<(BivariateSample, Value)> {
    let path: String = s.get("input", &a.input, None)?;
    let col1: String = s.get("col1", &a.col1, None)?;
    let col2: String = s.get("col2", &a.col2, None)?;
    let time: String = s.get("time", &a.time, Some("none"))?;
    let negate: Orientation = s.get("negate", &a.negate, Some("none"))?;
    let months: String = s.get("months", &a.months, Some("all"))?;
    let spec = ColumnSpec {
        col1,
        col2,
        time: (time != "none").then_some(time),
    };
    let path = s.absolute("input", &path);
    let (sample, report) = ingest::load_series(&path, &spec, negate)?;
    let sample = ingest::subset_months(&sample, &ingest::parse_months(&months)?)?;
    log::info!("{}: {} rows read, {} dropped, {} kept", path, report.rows_read, report.rows_dropped, sample.len());
    let report = json!({
        "rows_read": report.rows_read,
        "rows_dropped": report.rows_dropped,
        "rows_used": sample.len(),
    });
    Ok((sample, report))
}

fn quantiles(s: &Settings, q_thold: &Option<String>, q_thold_plus: &Option<String>) -> Result<(f64, f64)> {
    Ok((
        s.get("q-thold", q_thold, Some(&marginal::DEFAULT_Q_THOLD.to_string()))?,
        s.get("q-thold-plus", q_thold_plus, Some(&marginal::DEFAULT_Q_THOLD_PLUS.to_string()))?,
    ))
}

fn pipeline_config(s: &Settings, q: (f64, f64), g: &SurfaceArgs, p: &ProjectArgs) -> Result<PipelineConfig> {
    let d = PipelineConfig::default();
    let p_default = d.p_proj.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let bandwidth: Bandwidth = s.get("bandwidth", &g.bandwidth, Some("auto"))?;
    Ok(PipelineConfig {
        q_thold: q.0,
        q_thold_plus: q.1,
        bandwidths: bandwidth.0,
        grid: GridSpec {
            resolution: s.get("resolution", &g.resolution, Some(&d.grid.resolution.to_string()))?,
            ..d.grid
        },
        p_base: s.get("pbase", &g.pbase, Some(&d.p_base.to_string()))?,
        p_proj: s.get::<ProbList>("p", &p.p, Some(&p_default))?.0,
        mode: s.get::<ModeChoice>("mode", &p.mode, Some("ad"))?,
        beta: s.get("beta", &p.beta, Some(&d.beta.to_string()))?,
        eta_quantile: s.get("eta-quantile", &p.eta_quantile, Some(&d.eta_quantile.to_string()))?,
    })
}

/// Fitted marginals, read from `--marginals` when given.
fn margins(s: &Settings, m: &MarginArgs, sample: &BivariateSample) -> Result<([MarginalTransform; 2], bool)> {
    let q = quantiles(s, &m.q_thold, &m.q_thold_plus)?;
    match s.opt::<String>("marginals", &m.marginals)? {
        Some(path) => {
            let path = s.absolute("marginals", &path);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(path.clone(), e))?;
            let fitted: [MarginalTransform; 2] =
                serde_json::from_str(&text).map_err(|e| CliError::Json(format!("{path}: {e}")))?;
            if fitted.iter().any(|t| (t.q_thold, t.q_thold_plus) != q) {
                log::warn!("{path}: stored quantiles differ from q-thold/q-thold-plus; using the stored fit");
            }
            Ok((fitted, true))
        }
        None => Ok((marginal::fit_marginals(sample, q.0, q.1)?, false)),
    }
}

fn margin_summary(m: &[MarginalTransform; 2]) -> Value {
    Value::Array(
        m.iter()
            .map(|t| {
                json!({
                    "x_thold": t.x_thold,
                    "x_thold_plus": t.x_thold_plus,
                    "gpd_sigma": t.gpd.sigma,
                    "gpd_xi": t.gpd.xi,
                    "monotone_verified": t.monotone_verified,
                })
            })
            .collect(),
    )
}

fn write_margins(out: &mut Outputs, m: &[MarginalTransform; 2]) -> Result<()> {
    let text = serde_json::to_string_pretty(m).map_err(|e| CliError::Json(e.to_string()))?;
    out.write_str("marginals.json", &(text + "\n"))
}

fn scatter(sample: &BivariateSample) -> Layer {
    Layer::Points {
        xy: svg::thin(sample.points(), sample.len()),
        colour: "#555555",
    }
}

fn line_layer(line: &Isoline, k: usize, dashed: bool) -> Layer {
    Layer::Line {
        xy: line.points().to_vec(),
        colour: svg::palette(k),
        dashed,
        label: Some(format!("p = {}", line.level)),
    }
}

fn labelled_plot(title: String, sample: &BivariateSample, layers: Vec<Layer>) -> Plot {
    let [l1, l2] = sample.labels().clone();
    let mut all = vec![scatter(sample)];
    all.extend(layers);
    Plot {
        title,
        x_label: l1,
        y_label: l2,
        layers: all,
    }
}

fn fit_marginals_cmd(s: &Settings, input: &InputArgs, margin: &MarginArgs, output: &OutputArgs) -> Result<()> {
    let (sample, report) = load_input(s, input)?;
    let (fitted, _) = margins(s, margin, &sample)?;
    let mut out = Outputs::new(s, output)?;
    write_margins(&mut out, &fitted)?;
    out.finish(
        "fit-marginals",
        s,
        None,
        json!({ "input": report, "marginals": margin_summary(&fitted) }),
    )
}

#[allow(clippy::too_many_arguments)]
fn isolines_cmd(
    s: &Settings,
    input: &InputArgs,
    margin: &MarginArgs,
    surface_args: &SurfaceArgs,
    project: &ProjectArgs,
    dump_grid: bool,
    output: &OutputArgs,
) -> Result<()> {
    let (sample, report) = load_input(s, input)?;
    let cfg = pipeline_config(s, quantiles(s, &margin.q_thold, &margin.q_thold_plus)?, surface_args, project)?;
    let (fitted, reused) = margins(s, margin, &sample)?;
    let dump_grid = s.switch("dump-grid", dump_grid)?;
    let run = pipeline::run_with_margins(&sample, &cfg, Some(fitted))?;
    let lines = run.all_isolines();

    let mut out = Outputs::new(s, output)?;
    out.write("isolines.csv", |w| Ok(surface::write_isolines_csv(&lines, w)?))?;
    if !reused {
        write_margins(&mut out, &run.margins)?;
    }
    if dump_grid {
        out.write("grid.csv", |w| Ok(run.grid.write_csv(w)?))?;
    }
    out.plot("isolines.svg", || {
        let layers = lines.iter().enumerate().map(|(k, l)| line_layer(l, k, k > 0)).collect();
        labelled_plot(format!("isolines ({})", mode_name(run.mode)), &sample, layers)
    })?;
    for l in &lines {
        say!("p = {:<8} {:>4} vertices  {}", l.level, l.len(), l.provenance.as_str());
    }
    let summary = json!({
        "input": report,
        "mode": mode_name(run.mode),
        "chi_auto": run.chi_auto,
        "eta_hat": run.eta.as_ref().map(|e| e.eta_hat),
        "bandwidths": run.grid.bandwidths(),
        "isolines": lines.iter().map(|l| json!({
            "level": l.level,
            "provenance": l.provenance.as_str(),
            "vertices": l.len(),
            "clipped": l.clipped,
        })).collect::<Vec<_>>(),
        "marginals": margin_summary(&run.margins),
    });
    out.finish("isolines", s, None, summary)
}

fn mode_name(m: isoline::ProjectionMode) -> &'static str {
    match m {
        isoline::ProjectionMode::Ad => "ad",
        isoline::ProjectionMode::Ai => "ai",
    }
}

fn chi_cmd(
    s: &Settings,
    input: &InputArgs,
    u: [&Option<String>; 3],
    output: &OutputArgs,
) -> Result<()> {
    let (sample, report) = load_input(s, input)?;
    let lo: f64 = s.get("u-min", u[0], Some("0.5"))?;
    let hi: f64 = s.get("u-max", u[1], Some("0.99"))?;
    let steps: usize = s.get("u-steps", u[2], Some("50"))?;
    if steps < 2 {
        return Err(CliError::Config("u-steps must be at least 2".into()));
    }
    let curve = taildep::chi_curve(&sample, &taildep::u_grid(lo, hi, steps))?;

    let mut out = Outputs::new(s, output)?;
    out.write("chi.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["u", "chi", "joint", "conditioning"]).map_err(csv_io)?;
        for ((u, chi), (joint, cond)) in curve.u_grid.iter().zip(&curve.chi_hat).zip(&curve.counts) {
            let chi = chi.map(format_f64).unwrap_or_default();
            c.write_record([format_f64(*u), chi, joint.to_string(), cond.to_string()])
                .map_err(csv_io)?;
        }
        c.flush().map_err(|e| CliError::Io("chi.csv".into(), e))
    })?;
    out.plot("chi.svg", || Plot {
        title: "empirical chi(u)".into(),
        x_label: "u".into(),
        y_label: "chi".into(),
        layers: vec![Layer::Line {
            xy: curve
                .u_grid
                .iter()
                .zip(&curve.chi_hat)
                .filter_map(|(&u, c)| c.map(|c| [u, c]))
                .collect(),
            colour: svg::palette(1),
            dashed: false,
            label: None,
        }],
    })?;
    let last = curve.chi_hat.iter().rev().find_map(|c| *c);
    out.finish("chi", s, None, json!({ "input": report, "chi_at_u_max": last }))
}

fn hill_cmd(
    s: &Settings,
    input: &InputArgs,
    margin: &MarginArgs,
    eta_quantile: &Option<String>,
    output: &OutputArgs,
) -> Result<()> {
    let (sample, report) = load_input(s, input)?;
    let q: f64 = s.get(
        "eta-quantile",
        eta_quantile,
        Some(&taildep::DEFAULT_ETA_QUANTILE.to_string()),
    )?;
    let (fitted, _) = margins(s, margin, &sample)?;
    let z = marginal::to_frechet_sample(&fitted, &sample)?;
    let est = taildep::hill_eta(&z, q)?;
    say!("eta = {:.4} (k = {}, threshold {:.4})", est.eta_hat, est.k_exceed, est.threshold);

    let mut out = Outputs::new(s, output)?;
    out.write("hill.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["k", "eta"]).map_err(csv_io)?;
        for (k, eta) in &est.hill_trace {
            c.write_record([k.to_string(), format_f64(*eta)]).map_err(csv_io)?;
        }
        c.flush().map_err(|e| CliError::Io("hill.csv".into(), e))
    })?;
    out.plot("hill.svg", || {
        let kmax = est.hill_trace.last().map_or(est.k_exceed, |t| t.0) as f64;
        Plot {
            title: format!("Hill trace, eta = {:.3} at k = {}", est.eta_hat, est.k_exceed),
            x_label: "k".into(),
            y_label: "eta".into(),
            layers: vec![
                Layer::Line {
                    xy: est.hill_trace.iter().map(|&(k, e)| [k as f64, e]).collect(),
                    colour: svg::palette(1),
                    dashed: false,
                    label: None,
                },
                Layer::Line {
                    xy: vec![[0.0, est.eta_hat], [kmax, est.eta_hat]],
                    colour: svg::palette(0),
                    dashed: true,
                    label: Some(format!("eta = {:.3}", est.eta_hat)),
                },
            ],
        }
    })?;
    let summary = json!({
        "input": report,
        "eta_hat": est.eta_hat,
        "k_exceed": est.k_exceed,
        "threshold": est.threshold,
        "threshold_quantile": est.threshold_quantile,
    });
    out.finish("hill", s, None, summary)
}

/// The isoline at `level`: the base line, or its projection.
fn line_at(
    sample: &BivariateSample,
    cfg: &PipelineConfig,
    fitted: [MarginalTransform; 2],
    level: f64,
) -> Result<Isoline> {
    let mut cfg = cfg.clone();
    cfg.p_proj = if level == cfg.p_base { Vec::new() } else { vec![level] };
    let run = pipeline::run_with_margins(sample, &cfg, Some(fitted))?;
    Ok(run.projected.into_iter().next().unwrap_or(run.base))
}

#[allow(clippy::too_many_arguments)]
fn diagnose_cmd(
    s: &Settings,
    input: &InputArgs,
    margin: &MarginArgs,
    surface_args: &SurfaceArgs,
    project: &ProjectArgs,
    level: &Option<String>,
    probes: &Option<String>,
    output: &OutputArgs,
) -> Result<()> {
    let (sample, report) = load_input(s, input)?;
    let cfg = pipeline_config(s, quantiles(s, &margin.q_thold, &margin.q_thold_plus)?, surface_args, project)?;
    let level: f64 = s.get("level", level, Some(&cfg.p_base.to_string()))?;
    let n_probes: usize = s.get("probes", probes, Some(&diagnose::DEFAULT_PROBES.to_string()))?;
    let (fitted, _) = margins(s, margin, &sample)?;
    let line = line_at(&sample, &cfg, fitted, level)?;
    let diag = diagnose::diagnostic_report(&sample, &line, n_probes)?;
    say!(
        "{} of {} probes inside [{}, {}] (n = {}, p = {})",
        diag.inside(),
        diag.probes.len(),
        diag.interval.0,
        diag.interval.1,
        diag.n,
        diag.level
    );

    let mut out = Outputs::new(s, output)?;
    out.write("diagnose.csv", |w| Ok(diag.write_csv(w)?))?;
    out.write("isoline.csv", |w| Ok(surface::write_isolines_csv(std::slice::from_ref(&line), w)?))?;
    out.plot("diagnose.svg", || {
        let mut layers = vec![line_layer(&line, 0, false)];
        for (flag, colour) in [(ProbeFlag::Inside, "#2ca02c"), (ProbeFlag::Below, "#1f77b4"), (ProbeFlag::Above, "#d62728")] {
            layers.push(Layer::Points {
                xy: diag.probes.iter().filter(|p| p.flag == flag).map(|p| p.x).collect(),
                colour,
            });
        }
        labelled_plot(
            format!("{}/{} probes inside the binomial band", diag.inside(), diag.probes.len()),
            &sample,
            layers,
        )
    })?;
    let summary = json!({
        "input": report,
        "level": diag.level,
        "n": diag.n,
        "interval": [diag.interval.0, diag.interval.1],
        "probes": diag.probes.len(),
        "inside": diag.inside(),
        "caveat": diag.caveat,
    });
    out.finish("diagnose", s, None, summary)
}

struct BootstrapArgs<'a> {
    q: [&'a Option<String>; 2],
    level: &'a Option<String>,
    block: &'a Option<String>,
    replicates: &'a Option<String>,
    seed: &'a Option<String>,
    threads: &'a Option<String>,
}

fn bootstrap_cmd(
    s: &Settings,
    input: &InputArgs,
    surface_args: &SurfaceArgs,
    project: &ProjectArgs,
    b: BootstrapArgs<'_>,
    output: &OutputArgs,
) -> Result<()> {
    let (sample, report) = load_input(s, input)?;
    let cfg = pipeline_config(s, quantiles(s, b.q[0], b.q[1])?, surface_args, project)?;
    let level: f64 = s.get("level", b.level, Some(&cfg.p_base.to_string()))?;
    let block: usize = s.get("block", b.block, None)?;
    let replicates: usize = s.get("replicates", b.replicates, Some("200"))?;
    let seed: u64 = s.get("seed", b.seed, Some("0"))?;
    let threads: usize = s.get("threads", b.threads, Some("0"))?;

    let fitted = marginal::fit_marginals(&sample, cfg.q_thold, cfg.q_thold_plus)?;
    let estimate = line_at(&sample, &cfg, fitted, level)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let boot = pool.install(|| diagnose::block_bootstrap(&sample, block, replicates, &cfg, level, seed))?;
    for (r, msg) in &boot.failures {
        log::warn!("replicate {r} failed: {msg}");
    }
    say!(
        "{} of {} replicates succeeded (block {}, seed {})",
        boot.isolines.len(),
        replicates,
        block,
        seed
    );

    let mut out = Outputs::new(s, output)?;
    out.write("bootstrap.csv", |w| Ok(boot.write_csv(w)?))?;
    out.write("isoline.csv", |w| Ok(surface::write_isolines_csv(std::slice::from_ref(&estimate), w)?))?;
    out.plot("bootstrap.svg", || {
        let mut layers: Vec<Layer> = boot
            .isolines
            .iter()
            .map(|(_, l)| Layer::Line {
                xy: l.points().to_vec(),
                colour: "#aaaaaa",
                dashed: false,
                label: None,
            })
            .collect();
        layers.push(line_layer(&estimate, 0, false));
        labelled_plot(format!("{} bootstrap replicates", boot.isolines.len()), &sample, layers)
    })?;
    let summary = json!({
        "input": report,
        "level": level,
        "replicates": replicates,
        "succeeded": boot.isolines.len(),
        "failures": boot.failures.iter().map(|(r, m)| json!({ "replicate": r, "error": m })).collect::<Vec<_>>(),
    });
    out.finish("bootstrap", s, Some(seed), summary)
}

#[allow(clippy::too_many_arguments)]
fn simulate_cmd(
    s: &Settings,
    family: &Option<String>,
    param: &Option<String>,
    margins: &Option<String>,
    n: &Option<String>,
    seed: &Option<String>,
    output: &OutputArgs,
) -> Result<()> {
    let family_name: String = s.get("family", family, None)?;
    let family = match family_name.as_str() {
        "logistic" => Family::BivariateLogistic {
            alpha: s.get("param", param, None)?,
        },
        "gaussian" => Family::GaussianCopula {
            rho: s.get("param", param, None)?,
        },
        "indep" => {
            if s.opt::<String>("param", param)?.is_some() {
                return Err(CliError::Config("family indep takes no param".into()));
            }
            Family::IndependentFrechet
        }
        other => return Err(CliError::Config(format!("family: expected logistic|gaussian|indep, got {other:?}"))),
    };
    let margins = match s.get::<String>("margins", margins, Some("frechet"))?.as_str() {
        "frechet" => Margins::FrechetUnit,
        "uniform" => Margins::Uniform,
        "gumbel" => Margins::Gumbel,
        other => return Err(CliError::Config(format!("margins: expected frechet|uniform|gumbel, got {other:?}"))),
    };
    let n: usize = s.get("n", n, None)?;
    let seed: u64 = s.get("seed", seed, Some("0"))?;
    let model = SynthModel { family, margins };
    let sample = synth::generate(&model, n, seed)?;

    let mut out = Outputs::new(s, output)?;
    out.write("sample.csv", |w| Ok(sample.write_csv(w)?))?;
    out.plot("sample.svg", || labelled_plot(format!("{family_name}, n = {n}"), &sample, Vec::new()))?;
    let summary = json!({ "n": n, "chi": model.chi(), "eta": model.eta() });
    out.finish("simulate", s, Some(seed), summary)
}

fn run(cli: Cli) -> Result<()> {
    let s = Settings::load(cli.config.as_deref())?;
    let name = cli.command.name();
    log::debug!("running {name}");
    match &cli.command {
        Command::FitMarginals { input, margin, output } => fit_marginals_cmd(&s, input, margin, output),
        Command::Isolines {
            input,
            margin,
            surface,
            project,
            dump_grid,
            output,
        } => isolines_cmd(&s, input, margin, surface, project, *dump_grid, output),
        Command::Chi {
            input,
            u_min,
            u_max,
            u_steps,
            output,
        } => chi_cmd(&s, input, [u_min, u_max, u_steps], output),
        Command::Hill {
            input,
            margin,
            eta_quantile,
            output,
        } => hill_cmd(&s, input, margin, eta_quantile, output),
        Command::Diagnose {
            input,
            margin,
            surface,
            project,
            level,
            probes,
            output,
        } => diagnose_cmd(&s, input, margin, surface, project, level, probes, output),
        Command::Bootstrap {
            input,
            surface,
            project,
            q_thold,
            q_thold_plus,
            level,
            block,
            replicates,
            seed,
            threads,
            output,
        } => bootstrap_cmd(
            &s,
            input,
            surface,
            project,
            BootstrapArgs {
                q: [q_thold, q_thold_plus],
                level,
                block,
                replicates,
                seed,
                threads,
            },
            output,
        ),
        Command::Simulate {
            family,
            param,
            margins,
            n,
            seed,
            output,
        } => simulate_cmd(&s, family, param, margins, n, seed, output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return fail(&CliError::Usage(first));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    let msg = e.to_string().replace('\n', " ");
    eprintln!("error[{}]: {msg}", e.code());
    ExitCode::from(e.exit_code())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_flag_is_a_config_key() {
        use clap::CommandFactory;
        let cmd = Cli::command();
        for sub in cmd.get_subcommands() {
            for arg in sub.get_arguments() {
                let Some(long) = arg.get_long() else { continue };
                if long == "config" || long == "help" || long == "version" {
                    continue;
                }
                assert!(
                    settings::KNOWN_KEYS.contains(&long),
                    "{} --{long} missing from the config keys",
                    sub.get_name()
                );
            }
        }
    }

    #[test]
    fn error_codes_are_prefixed() {
        assert_eq!(CliError::Config("x".into()).code(), "cli.config");
        let core = CliError::from(isoline::Error::ColumnNotFound("a".into()));
        assert_eq!(core.code(), "ingest.column_not_found");
        assert_eq!(core.exit_code(), 1);
    }
}
