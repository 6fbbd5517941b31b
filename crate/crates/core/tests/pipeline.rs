use isoline::diagnose::{self, binomial_interval, exceedance_count};
use isoline::ingest::{self, ColumnSpec};
use isoline::pipeline::{self, ModeChoice, PipelineConfig};
use isoline::surface::{self, GridSpec};
use isoline::synth::{self, Family, Margins, SynthModel};
use isoline::{marginal, MarginalTransform, Orientation, Provenance, Scale};
use proptest::prelude::*;
use statrs::distribution::{Binomial, Discrete};

fn small_config() -> PipelineConfig {
    PipelineConfig {
        grid: GridSpec {
            resolution: 150,
            ..GridSpec::default()
        },
        ..PipelineConfig::default()
    }
}

fn logistic(n: usize, seed: u64) -> isoline::BivariateSample {
    let model = SynthModel {
        family: Family::BivariateLogistic { alpha: 0.5 },
        margins: Margins::Gumbel,
    };
    synth::generate(&model, n, seed).unwrap()
}

#[test]
fn dated_csv_with_months_and_sign_flip() {
    let csv = "date,temp,rh\n\
               2001-01-15,10.0,40\n\
               2001-02-15,11.0,NA\n\
               2001-09-15,30.5,12\n\
               2001-10-15,28.0,15\n\
               2001-11-15,20.0,30\n";
    let cols = ColumnSpec {
        col1: "temp".into(),
        col2: "rh".into(),
        time: Some("date".into()),
    };
    let (sample, report) = ingest::read_series(csv.as_bytes(), &cols, "2".parse::<Orientation>().unwrap()).unwrap();
    assert_eq!((report.rows_read, report.rows_dropped), (5, 1));
    assert_eq!(sample.x2(), &[-40.0, -12.0, -15.0, -30.0]);
    let fall = ingest::subset_months(&sample, &ingest::parse_months("9-11").unwrap()).unwrap();
    assert_eq!(fall.x1(), &[30.5, 28.0, 20.0]);
    assert!(ingest::subset_months(&sample, &[6]).is_err());
}

#[test]
fn written_sample_reads_back_identically() {
    let sample = logistic(500, 4);
    let mut buf = Vec::new();
    sample.write_csv(&mut buf).unwrap();
    let cols = ColumnSpec {
        col1: "x1".into(),
        col2: "x2".into(),
        time: Some("time".into()),
    };
    let (back, _) = ingest::read_series(buf.as_slice(), &cols, Orientation::default()).unwrap();
    assert_eq!(back.x1(), sample.x1());
    assert_eq!(back.x2(), sample.x2());
}

#[test]
fn pipeline_ladder_on_simulated_data() {
    let sample = logistic(4000, 21);
    let cfg = small_config();
    let out = pipeline::run(&sample, &cfg).unwrap();
    let lines = out.all_isolines();
    assert_eq!(lines.len(), 1 + cfg.p_proj.len());
    assert_eq!(lines[0].provenance, Provenance::BaseNonparametric);
    for w in lines.windows(2) {
        assert!(w[1].level < w[0].level);
        assert_eq!(w[1].provenance, Provenance::ProjectedAd);
        assert_eq!(w[1].scale, Scale::Original);
        assert!(surface::first_slope_violation(w[1].points()).is_none());
    }
    // the rarer line lies further out: its interior vertices exceed fewer points
    let mid = |l: &isoline::Isoline| l.points()[l.len() / 2];
    let counts: Vec<usize> = lines.iter().map(|l| exceedance_count(&sample, mid(l))).collect();
    assert!(counts.windows(2).all(|c| c[1] <= c[0]), "{counts:?}");

    let mut csv = Vec::new();
    surface::write_isolines_csv(&lines, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("level,scale,provenance,x,y\n"));
    assert_eq!(text.lines().count(), 1 + lines.iter().map(|l| l.len()).sum::<usize>());
}

#[test]
fn ai_mode_reports_eta_and_reuses_marginals() {
    let model = SynthModel {
        family: Family::GaussianCopula { rho: 0.6 },
        margins: Margins::Uniform,
    };
    let sample = synth::generate(&model, 4000, 5).unwrap();
    let cfg = PipelineConfig {
        mode: ModeChoice::Ai,
        ..small_config()
    };
    let fresh = pipeline::run(&sample, &cfg).unwrap();
    let eta = fresh.eta.as_ref().unwrap().eta_hat;
    assert!((eta - 0.8).abs() < 0.15, "eta {eta}");
    assert!(fresh.projected.iter().all(|l| l.provenance == Provenance::ProjectedAi));

    let json = serde_json::to_string(&fresh.margins).unwrap();
    let margins: [MarginalTransform; 2] = serde_json::from_str(&json).unwrap();
    assert_eq!(margins, fresh.margins);
    let reused = pipeline::run_with_margins(&sample, &cfg, Some(margins)).unwrap();
    assert_eq!(reused.all_isolines(), fresh.all_isolines());
}

#[test]
fn diagnostic_of_base_line_on_its_own_sample() {
    let sample = logistic(4000, 8);
    let cfg = small_config();
    let base = pipeline::run(&sample, &cfg).unwrap().base;
    let report = diagnose::diagnostic_report(&sample, &base, 10).unwrap();
    assert_eq!(report.probes.len(), 10);
    assert_eq!(report.interval, binomial_interval(4000, 0.01, 0.95).unwrap());
    assert!(report.inside() >= 8, "{} inside", report.inside());
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 11);
}

#[test]
fn frechet_transform_is_increasing_across_the_blend() {
    let sample = logistic(3000, 2);
    let m = marginal::fit_marginals(&sample, 0.97, 0.98).unwrap();
    for t in &m {
        let lo = t.data_min() - 1.0;
        let hi = t.check_upper();
        let mut prev = 0.0;
        for k in 0..=2000 {
            let x = lo + (hi - lo) * k as f64 / 2000.0;
            let z = t.to_frechet(x);
            assert!(z > prev, "not increasing at {x}");
            prev = z;
        }
    }
}

fn pmf(n: u64, p: f64) -> Vec<f64> {
    let d = Binomial::new(p, n).unwrap();
    (0..=n).map(|k| d.pmf(k)).collect()
}

fn exhaustive_width(n: u64, p: f64, coverage: f64) -> u64 {
    let pmf = pmf(n, p);
    let total: f64 = pmf.iter().sum();
    let mut best = n;
    for a in 0..=n as usize {
        let mut acc = 0.0;
        for (w, v) in pmf[a..].iter().enumerate() {
            acc += v;
            if acc / total >= coverage {
                best = best.min(w as u64);
                break;
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binomial_interval_is_shortest_with_coverage(n in 1u64..150, p in 0.001f64..0.999, cov in 0.5f64..0.99) {
        let (a, b) = binomial_interval(n, p, cov).unwrap();
        let pmf = pmf(n, p);
        let total: f64 = pmf.iter().sum();
        let mass: f64 = pmf[a as usize..=b as usize].iter().sum::<f64>() / total;
        prop_assert!(mass >= cov);
        prop_assert_eq!(b - a, exhaustive_width(n, p, cov));
    }
}
