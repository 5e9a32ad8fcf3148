use std::process::ExitCode;

use clap::Parser;
use parapat_cli::app::RunSpec;
use parapat_cli::args::{Cli, Command};
use parapat_cli::launch::{run_worker, Launch};
use parapat_cli::report::{bench, run, write_bench_csv, RunReport};
use parapat_cli::{exit_code, write_json, CliError};
use parapat_core::Backend;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn launcher(procs: usize, backend: Backend) -> Result<Launch, CliError> {
    let mut how = Launch::new(procs, backend);
    if backend == Backend::Sockets {
        how.worker_exe =
            Some(std::env::current_exe().map_err(|e| CliError::Usage(format!("locating own executable: {e}")))?);
    }
    Ok(how)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { app } => {
            let (app, common) = app.into_parts();
            if common.procs_list.is_some() {
                return Err(CliError::Usage("--procs-list belongs to `bench`; use --procs with `run`".into()));
            }
            let spec = common.spec(app, common.csv.clone());
            let mut report = run(&spec, &launcher(common.procs, common.backend)?)?;
            if let Some(path) = &common.baseline {
                let base = RunReport::read(path)?;
                if base.ranks != 1 {
                    return Err(CliError::Usage(format!("baseline report has {} ranks, expected 1", base.ranks)));
                }
                report = report.with_baseline(base.time_s);
            }
            write_json(&report, common.out.as_deref())?;
            if common.out.is_some() {
                println!("{}: {} ranks, {:.3} s", report.app, report.ranks, report.time_s);
            }
            Ok(())
        }
        Command::Bench { app } => {
            let (app, common) = app.into_parts();
            let Some(list) = common.procs_list.clone() else {
                return Err(CliError::Usage("bench needs --procs-list, e.g. --procs-list 1,2,4".into()));
            };
            if common.baseline.is_some() {
                return Err(CliError::Usage("bench measures its own baseline; drop --baseline".into()));
            }
            let spec = common.spec(app, None);
            let table = bench(&spec, &list, &launcher(1, common.backend)?)?;
            if let Some(path) = &common.csv {
                let file = std::fs::File::create(path).map_err(|source| CliError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                write_bench_csv(file, &table.rows).map_err(|source| CliError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
            write_json(&table, common.out.as_deref())?;
            if common.out.is_some() {
                for r in &table.rows {
                    println!(
                        "P={:<3} T={:.3} s  speedup {:.2}  efficiency {:.2}",
                        r.procs, r.time_s, r.speedup, r.efficiency
                    );
                }
            }
            Ok(())
        }
        Command::Worker { rank, bootstrap, spec } => {
            let spec: RunSpec =
                serde_json::from_str(&spec).map_err(|e| CliError::Usage(format!("worker spec: {e}")))?;
            run_worker(rank, &bootstrap, &spec)?;
            Ok(())
        }
    }
}
