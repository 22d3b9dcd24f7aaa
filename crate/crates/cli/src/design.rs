//! `design`, `simulate` and `boundary`.

use std::io::Write;
use std::path::Path;

use safelogrank::gaussian::{BoundaryKind, BoundarySpec, Side};
use safelogrank::sim::{design_report, simulate_stopping, Sidedness, TestKind};
use safelogrank::HazardRatio;
use serde::Serialize;

use crate::args::{BoundaryArgs, Config, ScenarioArgs, TestSettings};
use crate::error::{CliError, CliResult};
use crate::table::{write_json, Cell, Table};

pub const BOUNDARY_COLUMNS: [&str; 4] = ["n", "gaussian_safe", "obrien_fleming", "fixed"];

fn scenario_settings(args: &ScenarioArgs, cfg: &Config) -> CliResult<TestSettings> {
    if args.test.theta1.or(cfg.theta1).is_none() {
        return Err(CliError::Usage(
            "--theta1 is required for design and simulate".into(),
        ));
    }
    let settings = args.test.resolve(cfg, false)?;
    if args.test.nmax.is_some() {
        return Err(CliError::Usage(
            "--nmax has no effect here; n_max is estimated by simulation".into(),
        ));
    }
    Ok(settings)
}

pub fn cmd_design(
    args: &ScenarioArgs,
    cfg: &Config,
    json: Option<&Path>,
    out: impl Write,
) -> CliResult<()> {
    let settings = scenario_settings(args, cfg)?;
    let sim = args.sim.resolve(cfg, 10_000);
    settings.check_gaussian(sim.m1, sim.m0)?;
    let scenario = sim.scenario(settings.design)?;
    let rounds = args.bootstrap.or(cfg.bootstrap).unwrap_or(0);
    let report = design_report(&scenario, rounds)?;
    let safe = report.safe.as_ref();
    let ratio = |x: f64| x / report.schoenfeld_n as f64;
    let rows: Vec<(&str, Cell)> = vec![
        ("schoenfeld_n", report.schoenfeld_n.into()),
        ("replications", scenario.replications.into()),
        ("n_max", safe.map(|s| s.n_max).into()),
        ("n_max_ratio", safe.map(|s| ratio(s.n_max as f64)).into()),
        ("mean_tau_prime", safe.map(|s| s.mean_tau_prime).into()),
        ("mean_ratio", safe.map(|s| ratio(s.mean_tau_prime)).into()),
        (
            "conditional_mean",
            safe.and_then(|s| s.conditional_mean).into(),
        ),
        (
            "conditional_mean_ratio",
            safe.and_then(|s| s.conditional_mean).map(ratio).into(),
        ),
        ("power", safe.map(|s| s.power).into()),
        ("obf_n_max", report.obf_n_max.into()),
        ("wald_expected", report.wald_expected.into()),
        ("bootstrap_lower", report.bootstrap.map(|b| b.lower).into()),
        ("bootstrap_upper", report.bootstrap.map(|b| b.upper).into()),
        ("unattainable", Cell::Text(report.unattainable.join("; "))),
    ];
    let mut t = Table::new(&["quantity", "value"]);
    for (k, v) in rows {
        t.push(vec![k.into(), v]);
    }
    t.write_csv(out)?;
    if let Some(path) = json {
        write_json(path, &report)?;
    }
    for u in &report.unattainable {
        eprintln!("unattainable: {u}");
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport {
    scenario: safelogrank::SimScenario,
    stopping_times: Vec<Option<u64>>,
}

pub fn cmd_simulate(
    args: &ScenarioArgs,
    cfg: &Config,
    json: Option<&Path>,
    out: impl Write,
) -> CliResult<()> {
    let settings = scenario_settings(args, cfg)?;
    if args.bootstrap.is_some() {
        return Err(CliError::Usage("--bootstrap applies to design only".into()));
    }
    let sim = args.sim.resolve(cfg, 10_000);
    settings.check_gaussian(sim.m1, sim.m0)?;
    let scenario = sim.scenario(settings.design)?;
    let taus = simulate_stopping(&scenario)?;
    let mut t = Table::new(&["rep", "tau"]);
    for (rep, tau) in taus.iter().enumerate() {
        t.push(vec![(rep as u64).into(), (*tau).into()]);
    }
    t.write_csv(out)?;
    let stopped = taus.iter().filter(|t| t.is_some()).count();
    eprintln!("{stopped} of {} replications crossed 1/alpha", taus.len());
    if let Some(path) = json {
        write_json(
            path,
            &SimulateReport {
                scenario,
                stopping_times: taus,
            },
        )?;
    }
    Ok(())
}

/// Thresholds on the `Z` scale for event counts `from..=to`. The kind of
/// `base` is ignored; every family is tabulated.
pub fn boundary_table(base: &BoundarySpec<f64>, from: u64, to: u64) -> CliResult<Table> {
    let spec = |kind| BoundarySpec { kind, ..*base };
    let gaussian = spec(BoundaryKind::GaussianSafe);
    let obf = spec(BoundaryKind::ObrienFleming);
    let n_max = base.n_max;
    let fixed = spec(BoundaryKind::FixedClassical).threshold(1)?;
    let mut t = Table::new(&BOUNDARY_COLUMNS);
    for n in from..=to {
        t.push(vec![
            n.into(),
            gaussian.threshold(n).ok().into(),
            n_max
                .filter(|&m| n <= m)
                .and_then(|_| obf.threshold(n).ok())
                .into(),
            fixed.into(),
        ]);
    }
    Ok(t)
}

pub fn cmd_boundary(
    args: &BoundaryArgs,
    cfg: &Config,
    json: Option<&Path>,
    out: impl Write,
) -> CliResult<()> {
    let settings = args.test.resolve(cfg, false)?;
    let d = &settings.design;
    if d.test != TestKind::ExactSafe && d.test != TestKind::GaussianSafe {
        return Err(CliError::Usage(
            "boundary tables exist for the Gaussian safe test only".into(),
        ));
    }
    if d.theta0 != 1.0 {
        return Err(CliError::Usage(
            "boundary tables are defined for theta0 = 1".into(),
        ));
    }
    let side = match d.side {
        Sidedness::Left => Side::Left,
        Sidedness::Right => Side::Right,
        Sidedness::TwoSided => return Err(CliError::Usage("boundary tables are one-sided".into())),
    };
    let from = args.from.unwrap_or(1);
    let to = args.to.or(settings.nmax).unwrap_or(500);
    if from == 0 || from > to {
        return Err(CliError::Usage(format!(
            "need 1 <= --from <= --to, got {from} and {to}"
        )));
    }
    let m1 = args.m1.or(cfg.m1).unwrap_or(1);
    let m0 = args.m0.or(cfg.m0).unwrap_or(1);
    let base = BoundarySpec {
        kind: BoundaryKind::GaussianSafe,
        alpha: d.alpha,
        side,
        theta1: Some(HazardRatio::new(d.theta1)?),
        n_max: settings.nmax,
        m1,
        m0,
    };
    let t = boundary_table(&base, from, to)?;
    t.write_csv(out)?;
    if let Some(path) = json {
        write_json(path, &t.to_json())?;
    }
    Ok(())
}
