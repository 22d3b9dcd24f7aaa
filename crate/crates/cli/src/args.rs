//! Command-line flags, the TOML config file, and their merge.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use safelogrank::sim::{DesignSpec, Sidedness, TestKind, TieModel};
use safelogrank::{HazardRatio, ParseOptions, PriorSpec, SimScenario};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "safelogrank",
    version,
    about = "Anytime-valid logrank tests, confidence sequences and trial design"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// TOML config file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Also write the full report as JSON to this path.
    #[arg(long, global = true)]
    pub json: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-event-time e-values, Z statistic, boundaries and confidence bounds.
    Analyze(AnalyzeArgs),
    /// Multiply the final e-values of several independent trials.
    Meta(MetaArgs),
    /// Anytime-valid confidence sequence for the hazard ratio.
    Confseq(ConfseqArgs),
    /// Design quantities: Schoenfeld size, simulated n_max, means, O'Brien-Fleming, Wald.
    Design(ScenarioArgs),
    /// Raw stopping times of simulated trials.
    Simulate(ScenarioArgs),
    /// Z-scale rejection boundaries per event count.
    Boundary(BoundaryArgs),
    /// Plot data for the figures of the method description.
    Figure(FigureArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideArg {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestArg {
    Exact,
    Gaussian,
    Plugin,
    Bayes,
}

impl From<TestArg> for TestKind {
    fn from(t: TestArg) -> Self {
        match t {
            TestArg::Exact => TestKind::ExactSafe,
            TestArg::Gaussian => TestKind::GaussianSafe,
            TestArg::Plugin => TestKind::PlugInSafe,
            TestArg::Bayes => TestKind::BayesSafe,
        }
    }
}

/// Flags shared by every command that runs a test.
#[derive(Args, Debug, Clone, Default)]
pub struct TestArgs {
    /// Significance level [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Null hazard ratio [default: 1].
    #[arg(long)]
    pub theta0: Option<f64>,
    /// Design alternative; the minimal relevant hazard ratio for two-sided tests.
    #[arg(long, visible_alias = "theta-min")]
    pub theta1: Option<f64>,
    /// Direction of the alternative [default: from theta1 versus theta0].
    #[arg(long, value_enum)]
    pub side: Option<SideArg>,
    /// Equal mixture of theta_min and 1/theta_min (exact test only).
    #[arg(long)]
    pub two_sided: bool,
    /// Numerator of the e-process [default: exact].
    #[arg(long, value_enum)]
    pub test: Option<TestArg>,
    /// Prior for --test bayes: normal:MEAN_LOG,SD[,NODES] | grid:THETA=W,... | point:THETA.
    #[arg(long)]
    pub prior: Option<String>,
    /// Target power 1 - beta [default: 0.8].
    #[arg(long)]
    pub power: Option<f64>,
    /// Maximum number of events, for the O'Brien-Fleming boundary.
    #[arg(long)]
    pub nmax: Option<u64>,
    /// Run the Gaussian test on an unbalanced design or with theta1 outside [0.5, 2].
    #[arg(long)]
    pub allow_unbalanced_gaussian: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GridArgs {
    /// Number of grid points for confidence sequences [default: 400].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Smallest grid hazard ratio [default: 0.001].
    #[arg(long)]
    pub grid_lo: Option<f64>,
    /// Largest grid hazard ratio [default: 1000].
    #[arg(long)]
    pub grid_hi: Option<f64>,
    /// Report the running intersection of the intervals.
    #[arg(long)]
    pub intersect: bool,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Delimited survival data with header columns time|exit, group, status[, entry].
    pub data: PathBuf,
    /// Field delimiter: comma, tab, semicolon or a single character [default: detect].
    #[arg(long)]
    pub delimiter: Option<String>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Further datasets whose final e-values are multiplied with this one's.
    #[arg(long, num_args = 1..)]
    pub meta: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MetaArgs {
    /// Datasets of independent trials.
    #[arg(required = true, num_args = 1..)]
    pub files: Vec<PathBuf>,
    #[command(flatten)]
    pub test: TestArgs,
    /// Field delimiter: comma, tab, semicolon or a single character [default: detect].
    #[arg(long)]
    pub delimiter: Option<String>,
}

#[derive(Args, Debug)]
pub struct ConfseqArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SimArgs {
    /// Initial treatment group size [default: 5000].
    #[arg(long)]
    pub m1: Option<u64>,
    /// Initial control group size [default: 5000].
    #[arg(long)]
    pub m0: Option<u64>,
    /// Hazard ratio generating the data [default: theta1].
    #[arg(long)]
    pub theta_true: Option<f64>,
    /// Number of replications [default: 10000; figures 1000, figure 3 100].
    #[arg(long)]
    pub reps: Option<u64>,
    /// Base seed; every replication gets its own stream [default: 1].
    #[arg(long, env = "SAFELOGRANK_SEED")]
    pub seed: Option<u64>,
    /// Simulate ties with this per-unit-time baseline hazard.
    #[arg(long)]
    pub tie_h0: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Bootstrap rounds for an n_max interval (design only) [default: 0].
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BoundaryArgs {
    #[command(flatten)]
    pub test: TestArgs,
    /// First event count [default: 1].
    #[arg(long)]
    pub from: Option<u64>,
    /// Last event count [default: nmax, or 500].
    #[arg(long)]
    pub to: Option<u64>,
    /// Treatment allocation used for the Gaussian drift [default: 1].
    #[arg(long)]
    pub m1: Option<u64>,
    /// Control allocation used for the Gaussian drift [default: 1].
    #[arg(long)]
    pub m0: Option<u64>,
}

#[derive(Args, Debug)]
pub struct FigureArgs {
    /// Figure number, 1 to 6.
    #[arg(value_parser = clap::value_parser!(u8).range(1..=6))]
    pub number: u8,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Significance level [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// O'Brien-Fleming n_max for figure 4 [default: 205].
    #[arg(long)]
    pub nmax: Option<u64>,
}

/// Contents of the `--config` file. Keys mirror the long flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Config {
    pub alpha: Option<f64>,
    pub theta0: Option<f64>,
    #[serde(alias = "theta-min")]
    pub theta1: Option<f64>,
    pub side: Option<SideArg>,
    pub two_sided: Option<bool>,
    pub test: Option<TestArg>,
    pub prior: Option<String>,
    pub power: Option<f64>,
    pub nmax: Option<u64>,
    pub allow_unbalanced_gaussian: Option<bool>,
    pub grid: Option<usize>,
    pub grid_lo: Option<f64>,
    pub grid_hi: Option<f64>,
    pub intersect: Option<bool>,
    pub delimiter: Option<String>,
    pub m1: Option<u64>,
    pub m0: Option<u64>,
    pub theta_true: Option<f64>,
    pub reps: Option<u64>,
    pub seed: Option<u64>,
    pub tie_h0: Option<f64>,
    pub bootstrap: Option<usize>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Input(path.to_path_buf(), e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Test settings after merging flags, config and defaults.
#[derive(Debug, Clone)]
pub struct TestSettings {
    pub design: DesignSpec,
    pub nmax: Option<u64>,
    pub allow_unbalanced_gaussian: bool,
}

impl TestArgs {
    /// Whether a learned numerator was selected, so that `theta1` only
    /// fixes the side.
    pub fn learns(&self, cfg: &Config) -> bool {
        match self.test.or(cfg.test) {
            Some(TestArg::Plugin) => true,
            Some(TestArg::Bayes) => self.prior.is_some() || cfg.prior.is_some(),
            _ => false,
        }
    }

    /// Without `theta1_optional` a missing `theta1` is a usage error.
    pub fn resolve(&self, cfg: &Config, theta1_optional: bool) -> CliResult<TestSettings> {
        let alpha = self.alpha.or(cfg.alpha).unwrap_or(0.05);
        let theta0 = self.theta0.or(cfg.theta0).unwrap_or(1.0);
        let test = self.test.or(cfg.test).unwrap_or(TestArg::Exact);
        let theta1 = match self.theta1.or(cfg.theta1) {
            Some(t) => t,
            None if theta1_optional => theta0 * 0.5,
            None => return Err(CliError::Usage("--theta1 is required for this test".into())),
        };
        let two_sided = self.two_sided || cfg.two_sided.unwrap_or(false);
        let side = match (two_sided, self.side.or(cfg.side)) {
            (true, Some(_)) => {
                return Err(CliError::Usage(
                    "--side and --two-sided are mutually exclusive".into(),
                ))
            }
            (true, None) => Sidedness::TwoSided,
            (false, Some(SideArg::Left)) => Sidedness::Left,
            (false, Some(SideArg::Right)) => Sidedness::Right,
            (false, None) if theta1 < theta0 => Sidedness::Left,
            (false, None) => Sidedness::Right,
        };
        let prior = match self.prior.as_ref().or(cfg.prior.as_ref()) {
            Some(s) => Some(parse_prior(s)?),
            None => None,
        };
        if prior.is_some() && test != TestArg::Bayes {
            return Err(CliError::Usage(
                "--prior applies to --test bayes only".into(),
            ));
        }
        let design = DesignSpec {
            theta0,
            theta1,
            alpha,
            power: self.power.or(cfg.power).unwrap_or(0.8),
            side,
            test: test.into(),
            prior,
        };
        design.validate()?;
        Ok(TestSettings {
            design,
            nmax: self.nmax.or(cfg.nmax),
            allow_unbalanced_gaussian: self.allow_unbalanced_gaussian
                || cfg.allow_unbalanced_gaussian.unwrap_or(false),
        })
    }
}

impl TestSettings {
    /// Refuses the Gaussian test outside the regime where it keeps its level.
    pub fn check_gaussian(&self, m1: u64, m0: u64) -> CliResult<()> {
        if self.design.test != TestKind::GaussianSafe || self.allow_unbalanced_gaussian {
            return Ok(());
        }
        let t = self.design.theta1;
        if m1 != m0 || !(0.5..=2.0).contains(&t) {
            return Err(CliError::Usage(format!(
                "the Gaussian approximation is not an e-process for unbalanced designs or theta1 outside [0.5, 2] \
                 (m1={m1}, m0={m0}, theta1={t}); the exact test is recommended instead. \
                 Pass --allow-unbalanced-gaussian to proceed anyway"
            )));
        }
        Ok(())
    }
}

pub struct GridSettings {
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
    pub intersect: bool,
}

impl GridArgs {
    pub fn resolve(&self, cfg: &Config) -> GridSettings {
        GridSettings {
            points: self.grid.or(cfg.grid).unwrap_or(400),
            lo: self.grid_lo.or(cfg.grid_lo).unwrap_or(1e-3),
            hi: self.grid_hi.or(cfg.grid_hi).unwrap_or(1e3),
            intersect: self.intersect || cfg.intersect.unwrap_or(false),
        }
    }
}

pub fn parse_options(flag: Option<&str>, cfg: &Config) -> CliResult<ParseOptions> {
    let delimiter = match flag.or(cfg.delimiter.as_deref()) {
        None => None,
        Some("comma") | Some(",") => Some(b','),
        Some("tab") | Some("\t") | Some("\\t") => Some(b'\t'),
        Some("semicolon") | Some(";") => Some(b';'),
        Some(s) if s.len() == 1 => Some(s.as_bytes()[0]),
        Some(s) => return Err(CliError::Usage(format!("unknown delimiter '{s}'"))),
    };
    Ok(ParseOptions { delimiter })
}

#[derive(Debug, Clone, Copy)]
pub struct SimSettings {
    pub m1: u64,
    pub m0: u64,
    pub theta_true: Option<f64>,
    pub reps: u64,
    pub seed: u64,
    pub ties: TieModel,
}

impl SimArgs {
    pub fn resolve(&self, cfg: &Config, default_reps: u64) -> SimSettings {
        SimSettings {
            m1: self.m1.or(cfg.m1).unwrap_or(5000),
            m0: self.m0.or(cfg.m0).unwrap_or(5000),
            theta_true: self.theta_true.or(cfg.theta_true),
            reps: self.reps.or(cfg.reps).unwrap_or(default_reps),
            seed: self.seed.or(cfg.seed).unwrap_or(1),
            ties: match self.tie_h0.or(cfg.tie_h0) {
                Some(h0) => TieModel::UnitTime { h0 },
                None => TieModel::None,
            },
        }
    }
}

impl SimSettings {
    pub fn scenario(&self, design: DesignSpec) -> CliResult<SimScenario> {
        let sc = SimScenario {
            m1: self.m1,
            m0: self.m0,
            theta_true: self.theta_true.unwrap_or(design.theta1),
            design,
            ties: self.ties,
            replications: self.reps,
            seed: self.seed,
        };
        sc.validate()?;
        Ok(sc)
    }
}

fn parse_prior(s: &str) -> CliResult<PriorSpec<f64>> {
    let bad = || CliError::Usage(format!("cannot parse prior '{s}'"));
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "normal" | "lognormal" => {
            let parts: Vec<&str> = rest.split(',').collect();
            let nodes = match parts.get(2) {
                Some(n) => n.trim().parse::<usize>().map_err(|_| bad())?,
                None => 201,
            };
            if parts.len() < 2 || parts.len() > 3 {
                return Err(bad());
            }
            Ok(PriorSpec::log_normal(
                num(parts[0])?,
                num(parts[1])?,
                nodes,
            )?)
        }
        "grid" => {
            let mut thetas = Vec::new();
            let mut weights = Vec::new();
            for pair in rest.split(',') {
                let (t, w) = pair.split_once('=').ok_or_else(bad)?;
                thetas.push(num(t)?);
                weights.push(num(w)?);
            }
            Ok(PriorSpec::grid(&thetas, &weights)?)
        }
        "point" => Ok(PriorSpec::point_mass(HazardRatio::new(num(rest)?)?)),
        _ => Err(bad()),
    }
}
