//! Command-line front end for the simulation framework.
//!
//! Exit codes: 0 success, 1 internal/IO error, 2 validation error,
//! 3 causality violation or deadlock, 4 transport failure. `diff`
//! additionally exits 1 when the traces differ.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use dms_core::model::ActivityModel;
use dms_core::partition::{cut_weight, map_to_workstations, partition};
use dms_core::run::{
    run_scenario, run_worker, trace_diff, RunConfig, RunError, RunMode, TraceFile,
    DEFAULT_WATCHDOG,
};
use dms_core::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "dms-sim",
    version,
    about = "Distributed discrete-event simulation of linked manufacturing models"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Whole model flattened into one kernel.
    Seq,
    /// One thread per LP, in-process queues.
    Local,
    /// One worker process per LP, TCP queues.
    Remote,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and print its report.
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "seq")]
        mode: ModeArg,
        /// Override the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write an event trace here (plus data-message and departure
        /// trailers usable by `diff`).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the statistics report here as CSV records.
        #[arg(long)]
        report: Option<PathBuf>,
        /// LP-to-bind-address map file for remote mode: one "<lp> <host:port>"
        /// per line. LPs not listed bind 127.0.0.1 on an ephemeral port.
        #[arg(long)]
        hosts: Option<PathBuf>,
        /// Deadlock watchdog window in seconds.
        #[arg(long, default_value_t = DEFAULT_WATCHDOG.as_secs())]
        watchdog: u64,
    },
    /// Split an activity model's leaves into k LPs minimizing cut arcs.
    Partition {
        model: PathBuf,
        #[arg(short)]
        k: usize,
        /// Workstation addresses to map the resulting LPs onto, in block
        /// order.
        #[arg(long, value_delimiter = ',')]
        hosts: Vec<String>,
    },
    /// Check a scenario file and report problems and lookahead warnings.
    Validate { scenario: PathBuf },
    /// Compare two trace files; silent and zero when equivalent.
    Diff {
        trace_a: PathBuf,
        trace_b: PathBuf,
    },
    /// Internal: run one LP as a worker process (spawned by remote mode).
    #[command(hide = true)]
    Worker {
        #[arg(long)]
        lp: String,
        #[arg(long, default_value = "127.0.0.1:0")]
        bind: String,
    },
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run {
            scenario,
            mode,
            seed,
            trace,
            report,
            hosts,
            watchdog,
        } => cmd_run(&scenario, mode, seed, trace, report, hosts, watchdog),
        Cmd::Partition { model, k, hosts } => cmd_partition(&model, k, &hosts),
        Cmd::Validate { scenario } => cmd_validate(&scenario),
        Cmd::Diff { trace_a, trace_b } => cmd_diff(&trace_a, &trace_b),
        Cmd::Worker { lp, bind } => ExitCode::from(run_worker(&lp, &bind) as u8),
    }
}

fn fail(code: i32, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code as u8)
}

fn cmd_run(
    path: &Path,
    mode: ModeArg,
    seed: Option<u64>,
    trace: Option<PathBuf>,
    report: Option<PathBuf>,
    hosts: Option<PathBuf>,
    watchdog: u64,
) -> ExitCode {
    let scenario = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => {
            let err = RunError::Scenario(e);
            return fail(err.exit_code(), err);
        }
    };
    for w in scenario.effective_lookahead_check() {
        eprintln!("warning: {w}");
    }
    let run_mode = match mode {
        ModeArg::Seq => RunMode::Sequential,
        ModeArg::Local => RunMode::DistributedLocal,
        ModeArg::Remote => {
            let binds = match &hosts {
                Some(p) => match read_hosts_file(p) {
                    Ok(m) => m,
                    Err(e) => return fail(2, e),
                },
                None => BTreeMap::new(),
            };
            RunMode::DistributedRemote { binds }
        }
    };
    let config = RunConfig {
        seed_override: seed,
        trace: trace.is_some(),
        watchdog: Duration::from_secs(watchdog.max(1)),
    };
    let worker_exe = std::env::current_exe().ok();
    let runs = match run_scenario(&scenario, &run_mode, &config, worker_exe.as_deref()) {
        Ok(r) => r,
        Err(e) => return fail(e.exit_code(), e),
    };

    let mut report_out = String::new();
    for (rep, artifacts) in runs.iter().enumerate() {
        if runs.len() > 1 {
            println!("replication {rep}:");
        }
        print!("{}", artifacts.report.to_text());
        report_out.push_str(&artifacts.report.to_records());
        if let Some(base) = &trace {
            let path = rep_path(base, rep);
            if let Err(e) = TraceFile::from_artifacts(artifacts).write(&path) {
                return fail(1, format!("writing {}: {e}", path.display()));
            }
        }
    }
    if let Some(p) = &report {
        if let Err(e) = std::fs::write(p, report_out) {
            return fail(1, format!("writing {}: {e}", p.display()));
        }
    }
    ExitCode::SUCCESS
}

fn rep_path(base: &Path, rep: usize) -> PathBuf {
    if rep == 0 {
        base.to_path_buf()
    } else {
        let mut os = base.as_os_str().to_owned();
        os.push(format!(".rep{rep}"));
        PathBuf::from(os)
    }
}

fn read_hosts_file(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("reading {}: {e}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        match (it.next(), it.next(), it.next()) {
            (Some(lp), Some(addr), None) => {
                map.insert(lp.to_string(), addr.to_string());
            }
            _ => {
                return Err(format!(
                    "{}:{}: expected '<lp> <host:port>'",
                    path.display(),
                    i + 1
                ))
            }
        }
    }
    Ok(map)
}

fn cmd_partition(path: &Path, k: usize, hosts: &[String]) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(1, format!("reading {}: {e}", path.display())),
    };
    let model = match ActivityModel::parse(&text) {
        Ok(m) => m,
        Err(e) => return fail(2, e),
    };
    let p = match partition(&model, k, &BTreeMap::new()) {
        Ok(p) => p,
        Err(e) => return fail(2, e),
    };
    print!("{p}");
    println!("cut {}", cut_weight(&model, &p));
    if !hosts.is_empty() {
        match map_to_workstations(&p, hosts) {
            Ok(m) => print!("{m}"),
            Err(e) => return fail(2, e),
        }
    }
    ExitCode::SUCCESS
}

fn cmd_validate(path: &Path) -> ExitCode {
    match Scenario::load(path) {
        Ok(s) => {
            let warnings = s.effective_lookahead_check();
            for w in &warnings {
                println!("warning: {w}");
            }
            println!(
                "ok: {} lps, {} links, end_time {}h{}",
                s.lps.len(),
                s.links.len(),
                s.end_time,
                if warnings.is_empty() {
                    ""
                } else {
                    " (with warnings)"
                }
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(2, e),
    }
}

fn cmd_diff(a: &Path, b: &Path) -> ExitCode {
    let ta = match TraceFile::read(a) {
        Ok(t) => t,
        Err(e) => return fail(1, format!("{}: {e}", a.display())),
    };
    let tb = match TraceFile::read(b) {
        Ok(t) => t,
        Err(e) => return fail(1, format!("{}: {e}", b.display())),
    };
    let diff = trace_diff(&ta, &tb);
    if diff.is_empty() {
        ExitCode::SUCCESS
    } else {
        for line in &diff {
            println!("{line}");
        }
        ExitCode::from(1)
    }
}
