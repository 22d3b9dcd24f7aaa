//! `analyze`, `meta` and `confseq`.

use std::io::Write;
use std::path::{Path, PathBuf};

use safelogrank::adaptive::{confidence_sequence, NumeratorStrategy, ThetaGrid};
use safelogrank::gaussian::{obf_boundary, BoundaryKind, BoundarySpec, LogrankSummary, Side};
use safelogrank::sim::{DesignSpec, Sidedness, TestKind};
use safelogrank::{
    read_dataset, ConfidenceSequence, EProcess, HazardRatio, ParseOptions, PriorSpec, TrialDataset,
};
use serde::Serialize;

use crate::args::{
    parse_options, AnalyzeArgs, Config, ConfseqArgs, GridSettings, MetaArgs, TestArg, TestSettings,
};
use crate::error::{CliError, CliResult};
use crate::table::{write_json, Table};

pub const ANALYZE_COLUMNS: [&str; 13] = [
    "n",
    "event_time_index",
    "time",
    "y1",
    "y0",
    "o",
    "o1",
    "log10_e",
    "z",
    "gaussian_boundary",
    "obf_boundary",
    "ci_lower",
    "ci_upper",
];

pub const CONFSEQ_COLUMNS: [&str; 6] = [
    "n",
    "event_time_index",
    "lower",
    "upper",
    "lower_bracketed",
    "upper_bracketed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Continue,
    Reject,
}

impl Decision {
    pub fn label(self) -> &'static str {
        match self {
            Decision::Continue => "continue",
            Decision::Reject => "reject",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisRow {
    pub n: u64,
    pub event_time_index: u64,
    pub time: f64,
    pub y1: u64,
    pub y0: u64,
    pub o: u64,
    pub o1: u64,
    pub log_e: f64,
    pub log10_e: f64,
    pub z: Option<f64>,
    pub gaussian_boundary: Option<f64>,
    pub obf_boundary: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetaEntry {
    pub file: String,
    pub n_events: u64,
    pub log_e: f64,
    pub log10_e: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSummary {
    pub final_log_e: f64,
    pub final_log10_e: f64,
    pub threshold_log10_e: f64,
    /// Event count at the first crossing of `1/α`.
    pub first_rejection_n: Option<u64>,
    pub final_ci: Option<(f64, f64)>,
    /// Other trials combined by `--meta`; the decision then uses the product.
    pub meta: Vec<MetaEntry>,
    pub combined_log10_e: Option<f64>,
    pub decision: Decision,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub design: DesignSpec,
    pub m1: u64,
    pub m0: u64,
    pub rows: Vec<AnalysisRow>,
    pub summary: AnalysisSummary,
}

pub fn load(path: &Path, opts: ParseOptions) -> CliResult<TrialDataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Input(path.to_path_buf(), e))?;
    Ok(read_dataset(file, opts)?)
}

fn numerator(settings: &TestSettings) -> CliResult<NumeratorStrategy<f64>> {
    let d = &settings.design;
    Ok(match d.test {
        TestKind::BayesSafe => NumeratorStrategy::Bayes(match &d.prior {
            Some(p) => p.clone(),
            None => PriorSpec::default_for(HazardRatio::new(d.theta1)?),
        }),
        _ => NumeratorStrategy::PlugIn,
    })
}

fn theta_grid(grid: &GridSettings) -> CliResult<ThetaGrid<f64>> {
    Ok(ThetaGrid::log_spaced(grid.lo, grid.hi, grid.points)?)
}

fn boundary_spec(
    kind: BoundaryKind,
    d: &DesignSpec,
    n_max: Option<u64>,
    m1: u64,
    m0: u64,
) -> Option<BoundarySpec<f64>> {
    let side = match d.side {
        Sidedness::Left => Side::Left,
        Sidedness::Right => Side::Right,
        Sidedness::TwoSided => return None,
    };
    let spec = BoundarySpec {
        kind,
        alpha: d.alpha,
        side,
        theta1: HazardRatio::new(d.theta1).ok(),
        n_max,
        m1,
        m0,
    };
    spec.validate().ok().map(|_| spec)
}

/// Runs the selected e-process over the dataset and collects the full trace.
pub fn analyze_dataset(
    ds: &TrialDataset,
    settings: &TestSettings,
    grid: &GridSettings,
) -> CliResult<AnalysisReport> {
    let d = &settings.design;
    let init = ds.initial_risk();
    let (m1, m0) = (init.y1, init.y0);
    settings.check_gaussian(m1, m0)?;
    let mut process = d.process(m1.max(1), m0.max(1))?;
    let timed = ds.timed_batches();
    let batches = ds.batches();
    let cs = confidence_sequence(
        &batches,
        d.alpha,
        &numerator(settings)?,
        &theta_grid(grid)?,
        grid.intersect,
    )?;
    let gaussian = boundary_spec(BoundaryKind::GaussianSafe, d, None, m1, m0);
    let obf = settings
        .nmax
        .and_then(|n| boundary_spec(BoundaryKind::ObrienFleming, d, Some(n), m1, m0));
    let log_thr = -d.alpha.ln();
    let mut summary = LogrankSummary::<f64>::new();
    let mut rows = Vec::with_capacity(timed.len());
    let mut first_rejection_n = None;
    for (i, tb) in timed.iter().enumerate() {
        let b = &tb.batch;
        let log_e = process.observe(b)?;
        summary.push(b);
        let n = summary.n_events;
        if first_rejection_n.is_none() && log_e >= log_thr {
            first_rejection_n = Some(n);
        }
        let ci = cs.intervals[i + 1].bounds;
        rows.push(AnalysisRow {
            n,
            event_time_index: i as u64 + 1,
            time: tb.time,
            y1: b.risk().y1,
            y0: b.risk().y0,
            o: b.o(),
            o1: b.o1(),
            log_e,
            log10_e: log_e / std::f64::consts::LN_10,
            z: summary.z().ok(),
            gaussian_boundary: gaussian.as_ref().and_then(|s| s.threshold(n).ok()),
            obf_boundary: obf.as_ref().and_then(|s| obf_boundary(n, s).ok()),
            ci_lower: ci.map(|c| c.0),
            ci_upper: ci.map(|c| c.1),
        });
    }
    let final_log_e = process.log_e();
    let final_ci = cs.intervals.last().and_then(|iv| iv.bounds);
    let decision = if first_rejection_n.is_some() {
        Decision::Reject
    } else {
        Decision::Continue
    };
    Ok(AnalysisReport {
        design: d.clone(),
        m1,
        m0,
        rows,
        summary: AnalysisSummary {
            final_log_e,
            final_log10_e: final_log_e / std::f64::consts::LN_10,
            threshold_log10_e: log_thr / std::f64::consts::LN_10,
            first_rejection_n,
            final_ci,
            meta: Vec::new(),
            combined_log10_e: None,
            decision,
        },
    })
}

pub fn analysis_table(report: &AnalysisReport) -> Table {
    let mut t = Table::new(&ANALYZE_COLUMNS);
    for r in &report.rows {
        t.push(vec![
            r.n.into(),
            r.event_time_index.into(),
            r.time.into(),
            r.y1.into(),
            r.y0.into(),
            r.o.into(),
            r.o1.into(),
            r.log10_e.into(),
            r.z.into(),
            r.gaussian_boundary.into(),
            r.obf_boundary.into(),
            r.ci_lower.into(),
            r.ci_upper.into(),
        ]);
    }
    t
}

/// Final e-value of one trial, for meta-analysis.
fn final_entry(path: &Path, settings: &TestSettings, opts: ParseOptions) -> CliResult<MetaEntry> {
    let ds = load(path, opts)?;
    let init = ds.initial_risk();
    settings.check_gaussian(init.y1, init.y0)?;
    let mut p = settings.design.process(init.y1.max(1), init.y0.max(1))?;
    for b in ds.batches() {
        p.observe(&b)?;
    }
    Ok(MetaEntry {
        file: path.display().to_string(),
        n_events: p.n_events(),
        log_e: p.log_e(),
        log10_e: p.log_e() / std::f64::consts::LN_10,
    })
}

fn print_summary(s: &AnalysisSummary, alpha: f64) {
    eprintln!(
        "final log10 e-value {:.4} (threshold {:.4} at alpha {alpha})",
        s.final_log10_e, s.threshold_log10_e
    );
    if let Some(n) = s.first_rejection_n {
        eprintln!("1/alpha first crossed after {n} events");
    }
    if let Some((lo, hi)) = s.final_ci {
        eprintln!("final confidence interval [{lo:.4}, {hi:.4}]");
    }
    if let Some(c) = s.combined_log10_e {
        eprintln!(
            "combined over {} trials: log10 e-value {c:.4}",
            s.meta.len() + 1
        );
    }
    eprintln!("decision: {}", s.decision.label());
}

pub fn cmd_analyze(
    args: &AnalyzeArgs,
    cfg: &Config,
    json: Option<&Path>,
    out: impl Write,
) -> CliResult<Decision> {
    let settings = args.test.resolve(cfg, args.test.learns(cfg))?;
    let grid = args.grid.resolve(cfg);
    let opts = parse_options(args.input.delimiter.as_deref(), cfg)?;
    let ds = load(&args.input.data, opts)?;
    let mut report = analyze_dataset(&ds, &settings, &grid)?;
    if !args.meta.is_empty() {
        let mut total = report.summary.final_log_e;
        for path in &args.meta {
            let entry = final_entry(path, &settings, opts)?;
            total += entry.log_e;
            report.summary.meta.push(entry);
        }
        report.summary.combined_log10_e = Some(total / std::f64::consts::LN_10);
        report.summary.decision = if total >= -settings.design.alpha.ln() {
            Decision::Reject
        } else {
            Decision::Continue
        };
    }
    analysis_table(&report).write_csv(out)?;
    if let Some(path) = json {
        write_json(path, &report)?;
    }
    print_summary(&report.summary, settings.design.alpha);
    Ok(report.summary.decision)
}

#[derive(Serialize)]
struct MetaReport {
    design: DesignSpec,
    trials: Vec<MetaEntry>,
    combined_log_e: f64,
    combined_log10_e: f64,
    decision: Decision,
}

pub fn cmd_meta(
    args: &MetaArgs,
    cfg: &Config,
    json: Option<&Path>,
    out: impl Write,
) -> CliResult<Decision> {
    let settings = args.test.resolve(cfg, args.test.learns(cfg))?;
    let opts = parse_options(args.delimiter.as_deref(), cfg)?;
    let trials = args
        .files
        .iter()
        .map(|p: &PathBuf| final_entry(p, &settings, opts))
        .collect::<CliResult<Vec<_>>>()?;
    let combined: f64 = trials.iter().map(|t| t.log_e).sum();
    let decision = if combined >= -settings.design.alpha.ln() {
        Decision::Reject
    } else {
        Decision::Continue
    };
    let mut t = Table::new(&["file", "n_events", "log10_e"]);
    for e in &trials {
        t.push(vec![
            e.file.clone().into(),
            e.n_events.into(),
            e.log10_e.into(),
        ]);
    }
    let total_events: u64 = trials.iter().map(|t| t.n_events).sum();
    t.push(vec![
        "combined".into(),
        total_events.into(),
        (combined / std::f64::consts::LN_10).into(),
    ]);
    t.write_csv(out)?;
    let report = MetaReport {
        design: settings.design,
        trials,
        combined_log_e: combined,
        combined_log10_e: combined / std::f64::consts::LN_10,
        decision,
    };
    if let Some(path) = json {
        write_json(path, &report)?;
    }
    eprintln!(
        "combined log10 e-value {:.4}; decision: {}",
        report.combined_log10_e,
        decision.label()
    );
    Ok(decision)
}

pub fn confseq_table(cs: &ConfidenceSequence<f64>) -> Table {
    let mut t = Table::new(&CONFSEQ_COLUMNS);
    for iv in &cs.intervals {
        t.push(vec![
            iv.n_events.into(),
            iv.n_event_times.into(),
            iv.bounds.map(|b| b.0).into(),
            iv.bounds.map(|b| b.1).into(),
            iv.lower_bracketed.into(),
            iv.upper_bracketed.into(),
        ]);
    }
    t
}

pub fn cmd_confseq(
    args: &ConfseqArgs,
    cfg: &Config,
    json: Option<&Path>,
    out: impl Write,
) -> CliResult<()> {
    let mut test = args.test.clone();
    match test.test.or(cfg.test) {
        None => test.test = Some(TestArg::Plugin),
        Some(TestArg::Plugin | TestArg::Bayes) => {}
        Some(other) => {
            return Err(CliError::Usage(
                format!(
                "confseq needs a learned numerator (--test plugin or --test bayes), not {other:?}"
            )
                .to_lowercase(),
            ))
        }
    }
    if test.nmax.is_some() || test.two_sided || test.allow_unbalanced_gaussian {
        return Err(CliError::Usage(
            "confseq takes none of --nmax, --two-sided, --allow-unbalanced-gaussian".into(),
        ));
    }
    let settings = test.resolve(cfg, test.learns(cfg))?;
    let grid = args.grid.resolve(cfg);
    let ds = load(
        &args.input.data,
        parse_options(args.input.delimiter.as_deref(), cfg)?,
    )?;
    let cs = confidence_sequence(
        &ds.batches(),
        settings.design.alpha,
        &numerator(&settings)?,
        &theta_grid(&grid)?,
        grid.intersect,
    )?;
    confseq_table(&cs).write_csv(out)?;
    if let Some(path) = json {
        write_json(path, &cs)?;
    }
    let unbracketed = cs
        .intervals
        .iter()
        .skip(1)
        .filter(|iv| !iv.lower_bracketed || !iv.upper_bracketed)
        .count();
    if unbracketed > 0 {
        eprintln!(
            "{unbracketed} event times have a bound at the grid edge; widen --grid-lo/--grid-hi"
        );
    }
    if let Some(last) = cs.intervals.last() {
        match last.bounds {
            Some((lo, hi)) => eprintln!(
                "final interval [{lo:.4}, {hi:.4}] after {} events",
                last.n_events
            ),
            None => eprintln!("final interval empty after {} events", last.n_events),
        }
    }
    Ok(())
}
