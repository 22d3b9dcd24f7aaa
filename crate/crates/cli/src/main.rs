mod analyze;
mod args;
mod design;
mod error;
mod figure;
mod table;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::analyze::Decision;
use crate::args::{Cli, Command, Config};
use crate::error::{CliError, CliResult, EXIT_REJECT, EXIT_USAGE};

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SAFELOGRANK_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| {
        CliError::Usage(format!(
            "SAFELOGRANK_THREADS must be a positive integer, got '{v}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: &Cli) -> CliResult<Decision> {
    init_threads()?;
    let cfg = Config::load(cli.config.as_deref())?;
    let json = cli.json.as_deref();
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let decision = match &cli.command {
        Command::Analyze(a) => analyze::cmd_analyze(a, &cfg, json, &mut out)?,
        Command::Meta(a) => analyze::cmd_meta(a, &cfg, json, &mut out)?,
        Command::Confseq(a) => {
            analyze::cmd_confseq(a, &cfg, json, &mut out).map(|_| Decision::Continue)?
        }
        Command::Design(a) => {
            design::cmd_design(a, &cfg, json, &mut out).map(|_| Decision::Continue)?
        }
        Command::Simulate(a) => {
            design::cmd_simulate(a, &cfg, json, &mut out).map(|_| Decision::Continue)?
        }
        Command::Boundary(a) => {
            design::cmd_boundary(a, &cfg, json, &mut out).map(|_| Decision::Continue)?
        }
        Command::Figure(a) => {
            figure::cmd_figure(a, &cfg, json, &mut out).map(|_| Decision::Continue)?
        }
    };
    out.flush()?;
    Ok(decision)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE as u8),
            };
        }
    };
    match run(&cli) {
        Ok(Decision::Continue) => ExitCode::SUCCESS,
        Ok(Decision::Reject) => ExitCode::from(EXIT_REJECT as u8),
        Err(e) => {
            eprintln!("safelogrank: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
