//! Plot data for the six figures. Each figure has a fixed column contract,
//! documented in the README.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use safelogrank::gaussian::{
    gaussian_increment, per_event_z, BoundaryKind, BoundarySpec, GaussianProcess, Side,
};
use safelogrank::sim::{
    estimate_nmax, estimate_obf_nmax, schoenfeld_sample_size, simulate_obf_stopping,
    simulate_stopping, summarize_stopping, DesignSpec, SimScenario, StoppingReport, TestKind,
    MIN_OBF_REPLICATIONS,
};
use safelogrank::{
    evalue_increment, null_expectation_audit, EProcess, EventBatch, ExactProcess, HazardRatio,
    RiskSet,
};

use crate::args::{Config, FigureArgs, SimSettings};
use crate::design::boundary_table;
use crate::error::CliResult;
use crate::table::{write_json, Cell, Table};

const DESIGN_THETAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const MISSPECIFIED_THETAS: [f64; 6] = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8];

fn hr(x: f64) -> CliResult<HazardRatio<f64>> {
    Ok(HazardRatio::new(x)?)
}

fn log_thetas(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Null expectation of the single-event Gaussian e-value by allocation.
fn figure1() -> CliResult<Table> {
    let mut t = Table::new(&["theta1", "allocation", "m1", "m0", "expectation"]);
    for (k, label) in [(1u64, "1:1"), (2, "2:1"), (3, "3:1")] {
        let (m1, m0) = (100 * k, 100);
        for theta1 in log_thetas(0.1, 10.0, 41) {
            let e = null_expectation_audit(hr(theta1)?, m1, m0, RiskSet::new(m1, m0))?;
            t.push(vec![
                theta1.into(),
                label.into(),
                m1.into(),
                m0.into(),
                e.into(),
            ]);
        }
    }
    Ok(t)
}

/// Exact against Gaussian e-values for one event in a balanced risk set.
fn figure2() -> CliResult<Table> {
    let mut t = Table::new(&[
        "theta1",
        "treated_event",
        "exact_log10_e",
        "gaussian_log10_e",
    ]);
    let risk = RiskSet::new(100, 100);
    let null = hr(1.0)?;
    for theta1 in log_thetas(0.1, 10.0, 41) {
        let mu1 = safelogrank::schoenfeld_mu(hr(theta1)?, 100, 100);
        for treated in [true, false] {
            let b = EventBatch::single(risk, treated)?;
            let exact = evalue_increment(hr(theta1)?, null, &b);
            let z = per_event_z::<f64>(&b).expect("both groups at risk");
            let gauss = gaussian_increment(mu1, z, 1);
            t.push(vec![
                theta1.into(),
                treated.into(),
                exact.log10().into(),
                gauss.log10().into(),
            ]);
        }
    }
    Ok(t)
}

/// Paired stopping times of the exact and Gaussian tests on shared data.
fn figure3(sim: &SimSettings, alpha: f64) -> CliResult<Table> {
    let mut t = Table::new(&["theta1", "rep", "tau_exact", "tau_gaussian"]);
    let log_thr = -alpha.ln();
    for theta1 in [0.5, 0.6, 0.7, 0.8, 0.9] {
        let scenario = sim.scenario(DesignSpec::exact(theta1, alpha, 0.8))?;
        let t1 = hr(theta1)?;
        let null = hr(1.0)?;
        let pairs: Vec<(Option<u64>, Option<u64>)> = (0..scenario.replications)
            .into_par_iter()
            .map(|rep| {
                let mut exact = ExactProcess::new(t1, null);
                let mut gauss = GaussianProcess::new(t1, scenario.m1, scenario.m0);
                let (mut te, mut tg) = (None, None);
                for b in scenario.stream(rep) {
                    if te.is_none() && exact.observe(&b)? >= log_thr {
                        te = Some(exact.n_events());
                    }
                    if tg.is_none() && gauss.observe(&b)? >= log_thr {
                        tg = Some(gauss.n_events());
                    }
                    if te.is_some() && tg.is_some() {
                        break;
                    }
                }
                Ok((te, tg))
            })
            .collect::<safelogrank::Result<_>>()?;
        for (rep, (te, tg)) in pairs.into_iter().enumerate() {
            t.push(vec![
                theta1.into(),
                (rep as u64).into(),
                te.into(),
                tg.into(),
            ]);
        }
    }
    Ok(t)
}

fn figure4(alpha: f64, n_max: u64) -> CliResult<Table> {
    let base = BoundarySpec {
        kind: BoundaryKind::GaussianSafe,
        alpha,
        side: Side::Left,
        theta1: Some(hr(0.7)?),
        n_max: Some(n_max),
        m1: 1,
        m0: 1,
    };
    boundary_table(&base, 1, 500)
}

/// n_max and mean summaries of an e-process, or `None` if power is unattainable.
fn safe_summary(scenario: &SimScenario) -> CliResult<Option<StoppingReport>> {
    let samples = simulate_stopping(scenario)?;
    match estimate_nmax(&samples, scenario.design.beta()) {
        Ok(n) => Ok(Some(summarize_stopping(&samples, n)?)),
        Err(safelogrank::Error::UnattainablePower(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn obf_summary(scenario: &SimScenario) -> CliResult<Option<StoppingReport>> {
    if scenario.replications < MIN_OBF_REPLICATIONS {
        return Ok(None);
    }
    let obf = SimScenario {
        design: scenario.design.clone().with_test(TestKind::ObfContinuous),
        ..scenario.clone()
    };
    match estimate_obf_nmax(&obf, obf.design.power, None) {
        Ok(n) => Ok(Some(summarize_stopping(
            &simulate_obf_stopping(&obf, n)?,
            n,
        )?)),
        Err(safelogrank::Error::UnattainablePower(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Sample sizes relative to Schoenfeld's fixed-sample count.
fn figure5(sim: &SimSettings, alpha: f64) -> CliResult<Table> {
    let mut t = Table::new(&[
        "theta1",
        "method",
        "n_max_ratio",
        "conditional_mean_ratio",
        "mean_ratio",
    ]);
    for theta1 in DESIGN_THETAS {
        let design = DesignSpec::exact(theta1, alpha, 0.8);
        let n_fixed = schoenfeld_sample_size(theta1, alpha, design.beta())? as f64;
        let data = SimSettings {
            theta_true: Some(theta1),
            ..*sim
        };
        let rows = [
            ("exact", safe_summary(&data.scenario(design.clone())?)?),
            (
                "gaussian",
                safe_summary(&data.scenario(design.clone().with_test(TestKind::GaussianSafe))?)?,
            ),
            (
                "obrien_fleming",
                obf_summary(&data.scenario(design.clone())?)?,
            ),
        ];
        t.push(vec![
            theta1.into(),
            "classical".into(),
            1.0.into(),
            1.0.into(),
            1.0.into(),
        ]);
        for (method, r) in rows {
            let ratio = |x: f64| Cell::Num(x / n_fixed);
            t.push(vec![
                theta1.into(),
                method.into(),
                r.as_ref().map_or(Cell::Empty, |r| ratio(r.n_max as f64)),
                r.as_ref()
                    .and_then(|r| r.conditional_mean)
                    .map_or(Cell::Empty, ratio),
                r.as_ref().map_or(Cell::Empty, |r| ratio(r.mean_tau_prime)),
            ]);
        }
    }
    Ok(t)
}

/// n_max under a misspecified design alternative of 0.8.
fn figure6(sim: &SimSettings, alpha: f64) -> CliResult<Table> {
    let mut t = Table::new(&["theta", "method", "n_max"]);
    let grow = DesignSpec::exact(0.8, alpha, 0.8);
    for theta in MISSPECIFIED_THETAS {
        let data = SimSettings {
            theta_true: Some(theta),
            ..*sim
        };
        let rows = [
            ("grow_0.8", safe_summary(&data.scenario(grow.clone())?)?),
            (
                "plugin",
                safe_summary(&data.scenario(grow.clone().with_test(TestKind::PlugInSafe))?)?,
            ),
            (
                "oracle",
                safe_summary(&data.scenario(DesignSpec::exact(theta, alpha, 0.8))?)?,
            ),
            (
                "obrien_fleming",
                obf_summary(&data.scenario(grow.clone())?)?,
            ),
        ];
        for (method, r) in rows {
            t.push(vec![theta.into(), method.into(), r.map(|r| r.n_max).into()]);
        }
    }
    Ok(t)
}

pub fn cmd_figure(
    args: &FigureArgs,
    cfg: &Config,
    json: Option<&Path>,
    out: impl Write,
) -> CliResult<()> {
    let alpha = args.alpha.or(cfg.alpha).unwrap_or(0.05);
    safelogrank::EvidenceThreshold::new(alpha)?;
    let default_reps = match args.number {
        3 => 100,
        _ => 1000,
    };
    let sim = args.sim.resolve(cfg, default_reps);
    let table = match args.number {
        1 => figure1()?,
        2 => figure2()?,
        3 => figure3(&sim, alpha)?,
        4 => figure4(alpha, args.nmax.or(cfg.nmax).unwrap_or(205))?,
        5 => figure5(&sim, alpha)?,
        _ => figure6(&sim, alpha)?,
    };
    table.write_csv(out)?;
    if let Some(path) = json {
        write_json(path, &table.to_json())?;
    }
    Ok(())
}
