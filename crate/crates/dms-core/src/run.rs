//! Run orchestration.
//!
//! A scenario executes in one of three modes that must produce identical
//! results for identical seeds:
//!
//! * [`RunMode::Sequential`] - every LP flattened into one kernel, cross-LP
//!   links simulated as internal delays. No synchronization protocol at
//!   all, which is what makes this mode the oracle the distributed modes
//!   are judged against.
//! * [`RunMode::DistributedLocal`] - one thread per LP, in-process queues.
//! * [`RunMode::DistributedRemote`] - one worker subprocess per LP,
//!   TCP queues, a JSON-line control protocol on stdin/stdout.
//!
//! Equivalence rests on every mode deriving RNG streams from the same
//! (seed, LP id, block name) keys, ordering same-time events by the same
//! (class, LP index, per-LP key) tuple, and folding link transfer times
//! into message timestamps the same way.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write as IoWrite};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{port_release_key, BuildError, Kernel, KernelError, SendRequest, TraceRecord};
use crate::report::{EndStatus, GlobalReport, LinkStats, LocalReport, ReportError};
use crate::rng::replication_seed;
use crate::scenario::{Scenario, ScenarioError};
use crate::sync::{
    DataRecord, EngineSpec, InChannelSpec, LinkAccount, OutLinkSpec, Progress, SyncEngine,
    SyncError,
};
use crate::time::SimTime;
use crate::transport::inproc::{Broker, Notifier, Receiver};
use crate::transport::tcp::{TcpConnection, TcpEndpoint};
use crate::transport::TransportError;

/// How many events an LP may execute between null-message rounds while it
/// is not blocked.
pub const DEFAULT_NULL_QUANTUM: u64 = 100;

/// Default wall-clock window after which a run with no progress anywhere
/// is declared deadlocked.
pub const DEFAULT_WATCHDOG: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunMode {
    Sequential,
    DistributedLocal,
    /// Worker processes over localhost TCP. Binds default to 127.0.0.1:0;
    /// the map overrides the bind address per LP id.
    DistributedRemote { binds: BTreeMap<String, String> },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed_override: Option<u64>,
    pub trace: bool,
    pub watchdog: Duration,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed_override: None,
            trace: false,
            watchdog: DEFAULT_WATCHDOG,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("LP {lp}: {source}")]
    Sync { lp: String, source: SyncError },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("no progress for {stalled_ms} ms; per-LP state:\n{}", .details.join("\n"))]
    Deadlock {
        stalled_ms: u64,
        details: Vec<String>,
    },
    #[error(transparent)]
    Conservation(#[from] ReportError),
    #[error("worker {lp} failed: {message}")]
    Worker {
        lp: String,
        kind: FailureKind,
        message: String,
    },
    #[error("{0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse failure class carried across the worker control channel; it
/// decides the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Validation,
    Causality,
    Deadlock,
    Transport,
    Internal,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Validation => 2,
            FailureKind::Causality | FailureKind::Deadlock => 3,
            FailureKind::Transport => 4,
            FailureKind::Internal => 1,
        }
    }
}

fn sync_failure_kind(e: &SyncError) -> FailureKind {
    match e {
        SyncError::CausalityViolation { .. }
        | SyncError::SequenceRegression { .. }
        | SyncError::LookaheadViolation { .. }
        | SyncError::Kernel(_) => FailureKind::Causality,
        SyncError::Transport(_) | SyncError::MalformedBody { .. } | SyncError::UnknownLabel { .. } => {
            FailureKind::Transport
        }
        SyncError::UnknownLink { .. } => FailureKind::Validation,
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Scenario(_) | RunError::Build(_) => 2,
            RunError::Sync { source, .. } => sync_failure_kind(source).exit_code(),
            RunError::Kernel(_) => 3,
            RunError::Deadlock { .. } => 3,
            RunError::Transport(_) | RunError::Conservation(_) => 4,
            RunError::Worker { kind, .. } => kind.exit_code(),
            RunError::Internal(_) | RunError::Io(_) => 1,
        }
    }
}

/// Everything one completed run yields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub report: GlobalReport,
    /// Every cross-LP data message, sorted; the equivalence multiset.
    pub data_log: Vec<DataRecord>,
    /// Executed events sorted by (time, lp, per-LP seq); empty when the
    /// run was not traced.
    pub trace: Vec<TraceRecord>,
    pub sent_accounts: Vec<LinkAccount>,
    pub received_accounts: Vec<LinkAccount>,
}

impl RunArtifacts {
    /// Total disposed-entity count per LP.
    pub fn departures(&self) -> BTreeMap<String, u64> {
        self.report
            .lps
            .iter()
            .map(|r| {
                (
                    r.lp_id.clone(),
                    r.departures.iter().map(|d| d.count).sum(),
                )
            })
            .collect()
    }

    /// Per-link unit totals must agree between sender and receiver
    /// tallies; message counts are checked by the report itself.
    pub fn check_unit_conservation(&self) -> Result<(), RunError> {
        let recv: HashMap<(&str, &str), &LinkAccount> = self
            .received_accounts
            .iter()
            .map(|a| ((a.from.as_str(), a.to.as_str()), a))
            .collect();
        for s in &self.sent_accounts {
            match recv.get(&(s.from.as_str(), s.to.as_str())) {
                Some(r) if r.units == s.units && r.messages == s.messages => {}
                Some(r) => {
                    return Err(RunError::Internal(format!(
                        "link {}->{}: sent {} messages / {} units, received {} / {}",
                        s.from, s.to, s.messages, s.units, r.messages, r.units
                    )))
                }
                None => {
                    return Err(RunError::Internal(format!(
                        "link {}->{} has no receive tally",
                        s.from, s.to
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Runs every replication of a scenario. Replication r uses a seed
/// derived from the master seed (replication 0 uses it unchanged).
pub fn run_scenario(
    scenario: &Scenario,
    mode: &RunMode,
    config: &RunConfig,
    worker_exe: Option<&Path>,
) -> Result<Vec<RunArtifacts>, RunError> {
    scenario.validate()?;
    let master = config.seed_override.unwrap_or(scenario.master_seed);
    let mut out = Vec::with_capacity(scenario.replications as usize);
    for rep in 0..scenario.replications {
        let seed = replication_seed(master, rep);
        let artifacts = match mode {
            RunMode::Sequential => run_sequential(scenario, seed, config.trace)?,
            RunMode::DistributedLocal => run_local(scenario, seed, config)?,
            RunMode::DistributedRemote { binds } => {
                let exe = worker_exe.ok_or_else(|| {
                    RunError::Internal("remote mode needs a worker executable path".into())
                })?;
                run_remote(scenario, seed, config, exe, binds)?
            }
        };
        out.push(artifacts);
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Sequential oracle
// ---------------------------------------------------------------------

/// Flattened single-kernel run. Cross-LP sends loop straight back into
/// the kernel as port releases after the link's transfer time, using the
/// same message-identity keys as real delivery, so the event order within
/// each LP is bit-identical to the distributed modes.
pub fn run_sequential(
    scenario: &Scenario,
    seed: u64,
    trace: bool,
) -> Result<RunArtifacts, RunError> {
    let started = Instant::now();
    let model = scenario.to_kernel_model();
    let mut kernel = Kernel::build(&model, seed, trace)?;
    kernel.init_sources();

    // Route table: sender id -> (dest index, dest port block, transfer).
    let mut routes: HashMap<(String, String), RouteEntry> = HashMap::new();
    for link in &scenario.links {
        let to_index = scenario.lp_index(&link.to).expect("validated");
        let port_block = model.lps[to_index as usize]
            .blocks
            .iter()
            .position(|b| {
                matches!(&b.kind, crate::kernel::BlockKind::CreatePort { source, .. }
                         if *source == link.from)
            })
            .expect("validated: one port per incoming link") as u32;
        routes.insert(
            (link.from.clone(), link.to.clone()),
            RouteEntry {
                to_index,
                port_block,
                transfer: link.transfer,
                seq: 0,
                units: 0,
            },
        );
    }

    let mut data_log: Vec<DataRecord> = Vec::new();
    let mut sends: Vec<SendRequest> = Vec::new();
    loop {
        match kernel.peek_time() {
            Some(t) if t <= scenario.end_time => {}
            _ => break,
        }
        kernel.execute_next(&mut sends)?;
        for req in sends.drain(..) {
            let from_id = kernel
                .lp_id(req.from_lp)
                .expect("sender exists")
                .to_string();
            let route = routes
                .get_mut(&(from_id.clone(), req.dest.clone()))
                .ok_or_else(|| RunError::Sync {
                    lp: from_id.clone(),
                    source: SyncError::UnknownLink {
                        lp: from_id.clone(),
                        dest: req.dest.clone(),
                    },
                })?;
            let ts = req.at + route.transfer;
            route.seq += 1;
            route.units += req.units;
            data_log.push(DataRecord::new(&from_id, &req.dest, ts, req.units));
            kernel.release_port_entity(
                route.to_index,
                route.port_block,
                ts,
                port_release_key(req.from_lp, route.seq),
            )?;
        }
    }

    let mut lps = Vec::new();
    let mut statuses = Vec::new();
    for (i, lp) in scenario.lps.iter().enumerate() {
        lps.push(
            kernel
                .report(i as u32, scenario.end_time)
                .expect("every LP was built"),
        );
        statuses.push((lp.id.clone(), EndStatus::Finished));
    }
    let mut links = Vec::new();
    let mut sent_accounts = Vec::new();
    let mut received_accounts = Vec::new();
    for l in &scenario.links {
        let r = &routes[&(l.from.clone(), l.to.clone())];
        links.push(LinkStats {
            from: l.from.clone(),
            to: l.to.clone(),
            sent: r.seq,
            received: r.seq,
        });
        let account = LinkAccount {
            from: l.from.clone(),
            to: l.to.clone(),
            messages: r.seq,
            units: r.units,
        };
        sent_accounts.push(account.clone());
        received_accounts.push(account);
    }

    let mut trace_records = kernel.take_trace();
    sort_trace(&mut trace_records);
    data_log.sort();
    Ok(RunArtifacts {
        report: GlobalReport {
            lps,
            links,
            statuses,
            wall_clock_ms: started.elapsed().as_millis() as u64,
        },
        data_log,
        trace: trace_records,
        sent_accounts,
        received_accounts,
    })
}

struct RouteEntry {
    to_index: u32,
    port_block: u32,
    transfer: SimTime,
    seq: u64,
    units: u64,
}

fn sort_trace(trace: &mut [TraceRecord]) {
    trace.sort_by(|a, b| (a.t, &a.lp, a.seq).cmp(&(b.t, &b.lp, b.seq)));
}

// ---------------------------------------------------------------------
// Shared LP driver (local threads and remote workers)
// ---------------------------------------------------------------------

/// Result of driving one LP to completion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpOutcome {
    pub lp_id: String,
    pub report: LocalReport,
    pub sent: Vec<LinkAccount>,
    pub received: Vec<LinkAccount>,
    pub data_log: Vec<DataRecord>,
    pub trace: Vec<TraceRecord>,
}

/// Feeds everything currently visible in the queues to the engine. Data
/// drains first, and drains again before each sync message: a promise is
/// only safe to apply after every data message sent ahead of it, and
/// those are guaranteed visible by the time the promise is.
fn drain_queues(
    engine: &mut SyncEngine,
    data_rx: &Receiver,
    sync_rx: &Receiver,
) -> Result<(), SyncError> {
    loop {
        let mut moved = false;
        while let Some(m) = data_rx.poll() {
            engine.on_receive(&m)?;
            moved = true;
        }
        if let Some(m) = sync_rx.poll() {
            while let Some(d) = data_rx.poll() {
                engine.on_receive(&d)?;
            }
            engine.on_receive(&m)?;
            moved = true;
        }
        if !moved {
            return Ok(());
        }
    }
}

struct DriverHooks<'a> {
    abort: Option<&'a AtomicBool>,
    endpoint: Option<&'a TcpEndpoint>,
    watchdog: Option<Duration>,
    progress: Arc<AtomicU64>,
}

enum DriverEnd {
    Done(Box<LpOutcome>),
    Aborted,
}

/// Runs one LP until it finishes and all inputs are end-marked, waiting
/// on the notifier between bursts.
fn drive_lp(
    mut engine: SyncEngine,
    data_rx: Receiver,
    sync_rx: Receiver,
    notifier: Arc<Notifier>,
    hooks: DriverHooks<'_>,
) -> Result<DriverEnd, SyncError> {
    let mut last_counter = hooks.progress.load(Ordering::Relaxed);
    let mut last_move = Instant::now();
    loop {
        if let Some(abort) = hooks.abort {
            if abort.load(Ordering::SeqCst) {
                return Ok(DriverEnd::Aborted);
            }
        }
        if let Some(ep) = hooks.endpoint {
            if let Some(e) = ep.take_error() {
                return Err(SyncError::Transport(e));
            }
        }
        let gen = notifier.snapshot();
        drain_queues(&mut engine, &data_rx, &sync_rx)?;
        let progress = engine.run_available()?;
        if matches!(progress, Progress::Finished) && engine.all_inputs_ended() {
            break;
        }
        // Per-LP stall detection, used by remote workers where no
        // shared-memory watchdog exists. A finished LP still waiting for
        // upstream end markers is subject to it too.
        if let Some(window) = hooks.watchdog {
            let counter = hooks.progress.load(Ordering::Relaxed);
            if counter != last_counter {
                last_counter = counter;
                last_move = Instant::now();
            } else if last_move.elapsed() >= window {
                return Err(SyncError::Transport(TransportError::Io(
                    std::io::Error::new(
                        std::io::ErrorKind::TimedOut,
                        driver_stall_message(&engine, window),
                    ),
                )));
            }
        }
        notifier.wait_newer(gen, Duration::from_millis(50));
    }
    let lp_id = engine.lp_id().to_string();
    let report = engine.local_report();
    let sent = engine.sent_accounts();
    let received = engine.received_accounts();
    let data_log = engine.take_data_log();
    let trace = engine.take_trace();
    Ok(DriverEnd::Done(Box::new(LpOutcome {
        lp_id,
        report,
        sent,
        received,
        data_log,
        trace,
    })))
}

fn driver_stall_message(engine: &SyncEngine, window: Duration) -> String {
    format!(
        "LP {} made no progress for {:?}; safe time {:?}, {} events executed, finished={}",
        engine.lp_id(),
        window,
        engine.safe_time(),
        engine.executed_events(),
        engine.finished(),
    )
}

// ---------------------------------------------------------------------
// Distributed, one thread per LP
// ---------------------------------------------------------------------

pub fn run_local(
    scenario: &Scenario,
    seed: u64,
    config: &RunConfig,
) -> Result<RunArtifacts, RunError> {
    let started = Instant::now();
    let broker = Broker::new();
    let abort = Arc::new(AtomicBool::new(false));

    // All queues first, then engines, so every sender finds its target.
    let mut plumbing = Vec::new();
    for lp in &scenario.lps {
        let notifier = Notifier::new();
        let data_rx = broker.create_queue(&crate::transport::data_queue_name(&lp.id), notifier.clone())?;
        let sync_rx = broker.create_queue(&crate::transport::sync_queue_name(&lp.id), notifier.clone())?;
        plumbing.push((notifier, data_rx, sync_rx));
    }

    let mut handles = Vec::new();
    let mut progresses = Vec::new();
    for (i, lp) in scenario.lps.iter().enumerate() {
        let (notifier, data_rx, sync_rx) = {
            let (n, d, s) = plumbing.remove(0);
            (n, d, s)
        };
        let progress = Arc::new(AtomicU64::new(0));
        progresses.push((lp.id.clone(), progress.clone()));
        let model = scenario.kernel_model_for(i as u32);
        let in_channels: Vec<InChannelSpec> = scenario
            .links_into(&lp.id)
            .map(|l| InChannelSpec {
                from: l.from.clone(),
                from_index: scenario.lp_index(&l.from).expect("validated"),
            })
            .collect();
        let mut out_links: Vec<OutLinkSpec> = Vec::new();
        for l in scenario.links_out_of(&lp.id) {
            out_links.push(OutLinkSpec {
                dest: l.to.clone(),
                transfer: l.transfer,
                data: Box::new(broker.sender(&crate::transport::data_queue_name(&l.to))?),
                sync: Box::new(broker.sender(&crate::transport::sync_queue_name(&l.to))?),
            });
        }
        let engine = SyncEngine::new(
            &model,
            EngineSpec {
                lp_index: i as u32,
                lp_id: lp.id.clone(),
                lookahead: lp.lookahead,
                end_time: scenario.end_time,
                quantum_running: DEFAULT_NULL_QUANTUM,
                master_seed: seed,
                trace: config.trace,
                progress: progress.clone(),
            },
            in_channels,
            out_links,
        )
        .map_err(|e| RunError::Sync {
            lp: lp.id.clone(),
            source: e,
        })?;

        let abort = abort.clone();
        let lp_id = lp.id.clone();
        handles.push(
            std::thread::Builder::new()
                .name(format!("lp-{lp_id}"))
                .spawn(move || {
                    let hooks = DriverHooks {
                        abort: Some(&abort),
                        endpoint: None,
                        watchdog: None,
                        progress,
                    };
                    let r = drive_lp(engine, data_rx, sync_rx, notifier, hooks);
                    if r.is_err() {
                        // Wake the others promptly instead of letting
                        // them wait out the watchdog.
                        abort.store(true, Ordering::SeqCst);
                    }
                    (lp_id, r)
                })
                .expect("spawn LP thread"),
        );
    }

    // Watchdog: abort when the sum of per-LP progress counters stops
    // moving for the configured window while threads are still running.
    let watchdog = {
        let abort = abort.clone();
        let counters: Vec<Arc<AtomicU64>> = progresses.iter().map(|(_, c)| c.clone()).collect();
        let window = config.watchdog;
        let running = Arc::new(AtomicBool::new(true));
        let running_flag = running.clone();
        let handle = std::thread::spawn(move || {
            let mut last_total = u64::MAX;
            let mut last_move = Instant::now();
            while running_flag.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_millis(25));
                let total: u64 = counters.iter().map(|c| c.load(Ordering::Relaxed)).sum();
                if total != last_total {
                    last_total = total;
                    last_move = Instant::now();
                } else if last_move.elapsed() >= window {
                    abort.store(true, Ordering::SeqCst);
                    return true; // fired
                }
            }
            false
        });
        (running, handle)
    };

    let mut outcomes: Vec<LpOutcome> = Vec::new();
    let mut statuses: Vec<(String, EndStatus)> = Vec::new();
    let mut first_error: Option<RunError> = None;
    let mut aborted_lps: Vec<String> = Vec::new();
    for h in handles {
        match h.join() {
            Ok((lp_id, Ok(DriverEnd::Done(outcome)))) => {
                statuses.push((lp_id, EndStatus::Finished));
                outcomes.push(*outcome);
            }
            Ok((lp_id, Ok(DriverEnd::Aborted))) => {
                statuses.push((lp_id.clone(), EndStatus::Aborted));
                aborted_lps.push(lp_id);
            }
            Ok((lp_id, Err(e))) => {
                statuses.push((lp_id.clone(), EndStatus::Failed(e.to_string())));
                if first_error.is_none() {
                    first_error = Some(RunError::Sync { lp: lp_id, source: e });
                }
            }
            Err(_) => {
                if first_error.is_none() {
                    first_error = Some(RunError::Internal("an LP thread panicked".into()));
                }
            }
        }
    }
    watchdog.0.store(false, Ordering::SeqCst);
    let _ = watchdog.1.join();

    if let Some(e) = first_error {
        return Err(e);
    }
    // A fired watchdog only matters if some thread was actually still
    // stuck when it fired; a late spurious fire after everyone finished
    // leaves this list empty.
    if !aborted_lps.is_empty() {
        let details = progresses
            .iter()
            .map(|(lp, c)| format!("LP {lp}: progress counter {}", c.load(Ordering::Relaxed)))
            .collect();
        return Err(RunError::Deadlock {
            stalled_ms: config.watchdog.as_millis() as u64,
            details,
        });
    }

    assemble(scenario, outcomes, statuses, started.elapsed())
}

// ---------------------------------------------------------------------
// Distributed, one worker process per LP
// ---------------------------------------------------------------------

/// Orchestrator-to-worker control messages, one JSON object per line.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum OrchToWorker {
    Go {
        scenario: String,
        seed: u64,
        trace: bool,
        watchdog_ms: u64,
        /// LP id -> "host:port" of its listener.
        hosts: BTreeMap<String, String>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum WorkerToOrch {
    Ready { lp: String, addr: String },
    Finished { outcome: Box<LpOutcome> },
    Failed { kind: FailureKind, message: String },
}

pub fn run_remote(
    scenario: &Scenario,
    seed: u64,
    config: &RunConfig,
    worker_exe: &Path,
    binds: &BTreeMap<String, String>,
) -> Result<RunArtifacts, RunError> {
    use std::process::{Child, Command, Stdio};
    let started = Instant::now();

    struct WorkerProc {
        lp_id: String,
        child: Child,
        stdout: std::io::BufReader<std::process::ChildStdout>,
    }

    let kill_all = |workers: &mut [WorkerProc]| {
        for w in workers.iter_mut() {
            let _ = w.child.kill();
            let _ = w.child.wait();
        }
    };

    let mut workers: Vec<WorkerProc> = Vec::new();
    for lp in &scenario.lps {
        let bind = binds
            .get(&lp.id)
            .map(String::as_str)
            .unwrap_or("127.0.0.1:0");
        let spawned = Command::new(worker_exe)
            .args(["worker", "--lp", &lp.id, "--bind", bind])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn();
        match spawned {
            Ok(mut child) => {
                let stdout = std::io::BufReader::new(child.stdout.take().expect("piped"));
                workers.push(WorkerProc {
                    lp_id: lp.id.clone(),
                    child,
                    stdout,
                });
            }
            Err(e) => {
                kill_all(&mut workers);
                return Err(RunError::Io(e));
            }
        }
    }

    // Phase 1: each worker binds its listener and reports the address.
    let mut hosts: BTreeMap<String, String> = BTreeMap::new();
    for w in workers.iter_mut() {
        match read_worker_line(&mut w.stdout) {
            Ok(WorkerToOrch::Ready { lp, addr }) if lp == w.lp_id => {
                hosts.insert(lp, addr);
            }
            Ok(other) => {
                let msg = format!("expected a ready line from {}, got {other:?}", w.lp_id);
                kill_all(&mut workers);
                return Err(RunError::Internal(msg));
            }
            Err(e) => {
                let lp = w.lp_id.clone();
                kill_all(&mut workers);
                return Err(RunError::Worker {
                    lp,
                    kind: FailureKind::Internal,
                    message: e,
                });
            }
        }
    }

    // Phase 2: broadcast the full map; workers connect and run.
    let go = OrchToWorker::Go {
        scenario: scenario.to_text(),
        seed,
        trace: config.trace,
        watchdog_ms: config.watchdog.as_millis() as u64,
        hosts,
    };
    let go_line = serde_json::to_string(&go).expect("control messages serialize");
    for w in workers.iter_mut() {
        let stdin = w.child.stdin.as_mut().expect("piped");
        if let Err(e) = writeln!(stdin, "{go_line}").and_then(|_| stdin.flush()) {
            kill_all(&mut workers);
            return Err(RunError::Io(e));
        }
    }

    // Phase 3: collect outcomes.
    let mut outcomes = Vec::new();
    let mut statuses = Vec::new();
    let mut first_error: Option<RunError> = None;
    for i in 0..workers.len() {
        let lp_id = workers[i].lp_id.clone();
        match read_worker_line(&mut workers[i].stdout) {
            Ok(WorkerToOrch::Finished { outcome }) => {
                statuses.push((lp_id, EndStatus::Finished));
                outcomes.push(*outcome);
                let _ = workers[i].child.wait();
            }
            Ok(WorkerToOrch::Failed { kind, message }) => {
                statuses.push((lp_id.clone(), EndStatus::Failed(message.clone())));
                if first_error.is_none() {
                    first_error = Some(RunError::Worker {
                        lp: lp_id,
                        kind,
                        message,
                    });
                }
                kill_all(&mut workers[i + 1..]);
                let _ = workers[i].child.wait();
                break;
            }
            Ok(WorkerToOrch::Ready { .. }) => {
                statuses.push((lp_id.clone(), EndStatus::Failed("protocol error".into())));
                if first_error.is_none() {
                    first_error = Some(RunError::Internal(format!(
                        "worker {lp_id} sent a second ready line"
                    )));
                }
                kill_all(&mut workers[i..]);
                break;
            }
            Err(e) => {
                statuses.push((lp_id.clone(), EndStatus::Failed(e.clone())));
                if first_error.is_none() {
                    first_error = Some(RunError::Worker {
                        lp: lp_id,
                        kind: FailureKind::Internal,
                        message: e,
                    });
                }
                kill_all(&mut workers[i..]);
                break;
            }
        }
    }

    if let Some(e) = first_error {
        return Err(e);
    }
    assemble(scenario, outcomes, statuses, started.elapsed())
}

fn read_worker_line(
    r: &mut impl BufRead,
) -> Result<WorkerToOrch, String> {
    let mut line = String::new();
    match r.read_line(&mut line) {
        Ok(0) => Err("worker closed its control channel".into()),
        Ok(_) => serde_json::from_str(&line)
            .map_err(|e| format!("bad control line {line:?}: {e}")),
        Err(e) => Err(format!("control channel read failed: {e}")),
    }
}

/// Worker-process entry point: binds a listener, reports it, waits for
/// the go message, runs its LP, and writes the outcome. Returns the
/// process exit code.
pub fn run_worker(lp_id: &str, bind: &str) -> i32 {
    let stdout = std::io::stdout();
    let emit = |msg: &WorkerToOrch| {
        let mut h = stdout.lock();
        let line = serde_json::to_string(msg).expect("control messages serialize");
        let _ = writeln!(h, "{line}");
        let _ = h.flush();
    };
    let fail = |kind: FailureKind, message: String| -> i32 {
        emit(&WorkerToOrch::Failed {
            kind,
            message,
        });
        kind.exit_code()
    };

    let notifier = Notifier::new();
    let (endpoint, data_rx, sync_rx) = match TcpEndpoint::bind(lp_id, bind, notifier.clone()) {
        Ok(t) => t,
        Err(e) => return fail(FailureKind::Transport, e.to_string()),
    };
    emit(&WorkerToOrch::Ready {
        lp: lp_id.to_string(),
        addr: endpoint.local_addr().to_string(),
    });

    let mut line = String::new();
    if std::io::stdin().lock().read_line(&mut line).is_err() || line.is_empty() {
        return fail(FailureKind::Internal, "no go message".into());
    }
    let OrchToWorker::Go {
        scenario,
        seed,
        trace,
        watchdog_ms,
        hosts,
    } = match serde_json::from_str(&line) {
        Ok(m) => m,
        Err(e) => return fail(FailureKind::Internal, format!("bad go message: {e}")),
    };

    let scenario = match Scenario::parse(&scenario).and_then(|s| {
        s.validate()?;
        Ok(s)
    }) {
        Ok(s) => s,
        Err(e) => return fail(FailureKind::Validation, e.to_string()),
    };
    let Some(lp_index) = scenario.lp_index(lp_id) else {
        return fail(
            FailureKind::Validation,
            format!("scenario has no LP {lp_id:?}"),
        );
    };
    let lp = &scenario.lps[lp_index as usize];

    let mut out_links = Vec::new();
    for l in scenario.links_out_of(lp_id) {
        let Some(addr) = hosts.get(&l.to) else {
            return fail(FailureKind::Validation, format!("no host for LP {:?}", l.to));
        };
        let conn = match TcpConnection::connect(addr, 40, Duration::from_millis(250)) {
            Ok(c) => c,
            Err(e) => return fail(FailureKind::Transport, e.to_string()),
        };
        out_links.push(OutLinkSpec {
            dest: l.to.clone(),
            transfer: l.transfer,
            data: Box::new(conn.clone()),
            sync: Box::new(conn),
        });
    }
    let in_channels: Vec<InChannelSpec> = scenario
        .links_into(lp_id)
        .map(|l| InChannelSpec {
            from: l.from.clone(),
            from_index: scenario.lp_index(&l.from).expect("validated"),
        })
        .collect();

    let progress = Arc::new(AtomicU64::new(0));
    let engine = match SyncEngine::new(
        &scenario.kernel_model_for(lp_index),
        EngineSpec {
            lp_index,
            lp_id: lp.id.clone(),
            lookahead: lp.lookahead,
            end_time: scenario.end_time,
            quantum_running: DEFAULT_NULL_QUANTUM,
            master_seed: seed,
            trace,
            progress: progress.clone(),
        },
        in_channels,
        out_links,
    ) {
        Ok(e) => e,
        Err(e) => return fail(sync_failure_kind(&e), e.to_string()),
    };

    let hooks = DriverHooks {
        abort: None,
        endpoint: Some(&endpoint),
        watchdog: Some(Duration::from_millis(watchdog_ms.max(1))),
        progress,
    };
    match drive_lp(engine, data_rx, sync_rx, notifier, hooks) {
        Ok(DriverEnd::Done(outcome)) => {
            emit(&WorkerToOrch::Finished { outcome });
            0
        }
        Ok(DriverEnd::Aborted) => fail(FailureKind::Internal, "aborted".into()),
        Err(e) => {
            // Stalls are surfaced through a timeout error by the driver.
            let kind = match &e {
                SyncError::Transport(TransportError::Io(io))
                    if io.kind() == std::io::ErrorKind::TimedOut =>
                {
                    FailureKind::Deadlock
                }
                other => sync_failure_kind(other),
            };
            fail(kind, e.to_string())
        }
    }
}

// ---------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------

fn assemble(
    scenario: &Scenario,
    mut outcomes: Vec<LpOutcome>,
    mut statuses: Vec<(String, EndStatus)>,
    wall: Duration,
) -> Result<RunArtifacts, RunError> {
    let order: HashMap<&str, usize> = scenario
        .lps
        .iter()
        .enumerate()
        .map(|(i, lp)| (lp.id.as_str(), i))
        .collect();
    outcomes.sort_by_key(|o| order.get(o.lp_id.as_str()).copied().unwrap_or(usize::MAX));
    statuses.sort_by_key(|(lp, _)| order.get(lp.as_str()).copied().unwrap_or(usize::MAX));

    let mut sent: HashMap<(String, String), LinkAccount> = HashMap::new();
    let mut received: HashMap<(String, String), LinkAccount> = HashMap::new();
    let mut data_log = Vec::new();
    let mut trace = Vec::new();
    let mut lps = Vec::new();
    for mut o in outcomes {
        for a in o.sent.drain(..) {
            sent.insert((a.from.clone(), a.to.clone()), a);
        }
        for a in o.received.drain(..) {
            received.insert((a.from.clone(), a.to.clone()), a);
        }
        data_log.append(&mut o.data_log);
        trace.append(&mut o.trace);
        lps.push(o.report);
    }
    data_log.sort();
    sort_trace(&mut trace);

    let mut links = Vec::new();
    let mut sent_accounts = Vec::new();
    let mut received_accounts = Vec::new();
    for l in &scenario.links {
        let key = (l.from.clone(), l.to.clone());
        let s = sent.remove(&key).unwrap_or(LinkAccount {
            from: l.from.clone(),
            to: l.to.clone(),
            messages: 0,
            units: 0,
        });
        let r = received.remove(&key).unwrap_or(LinkAccount {
            from: l.from.clone(),
            to: l.to.clone(),
            messages: 0,
            units: 0,
        });
        links.push(LinkStats {
            from: l.from.clone(),
            to: l.to.clone(),
            sent: s.messages,
            received: r.messages,
        });
        sent_accounts.push(s);
        received_accounts.push(r);
    }

    let artifacts = RunArtifacts {
        report: GlobalReport {
            lps,
            links,
            statuses,
            wall_clock_ms: wall.as_millis() as u64,
        },
        data_log,
        trace,
        sent_accounts,
        received_accounts,
    };
    artifacts.report.check_conservation()?;
    artifacts.check_unit_conservation()?;
    Ok(artifacts)
}

// ---------------------------------------------------------------------
// Trace files and diffing
// ---------------------------------------------------------------------

/// On-disk form of a traced run: one line per executed event, then
/// comment-style trailer lines carrying the data-message log and per-LP
/// departure totals, which is what the diff actually compares.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceFile {
    pub events: Vec<TraceRecord>,
    pub msgs: Vec<DataRecord>,
    pub departed: BTreeMap<String, u64>,
}

impl TraceFile {
    pub fn from_artifacts(a: &RunArtifacts) -> TraceFile {
        TraceFile {
            events: a.trace.clone(),
            msgs: a.data_log.clone(),
            departed: a.departures(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        for m in &self.msgs {
            out.push_str(&format!(
                "# msg t={} from={} to={} units={}\n",
                m.time().to_trace_field(),
                m.from,
                m.to,
                m.units
            ));
        }
        for (lp, n) in &self.departed {
            out.push_str(&format!("# departed lp={lp} count={n}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<TraceFile, String> {
        let mut tf = TraceFile::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# msg ") {
                let mut t = None;
                let mut from = None;
                let mut to = None;
                let mut units = None;
                for w in rest.split_whitespace() {
                    match w.split_once('=') {
                        Some(("t", v)) => t = v.parse::<f64>().ok(),
                        Some(("from", v)) => from = Some(v.to_string()),
                        Some(("to", v)) => to = Some(v.to_string()),
                        Some(("units", v)) => units = v.parse::<u64>().ok(),
                        _ => {}
                    }
                }
                match (t, from, to, units) {
                    (Some(t), Some(from), Some(to), Some(units)) if t.is_finite() && t >= 0.0 => {
                        tf.msgs
                            .push(DataRecord::new(&from, &to, SimTime::new(t), units));
                    }
                    _ => return Err(format!("line {}: bad msg trailer", i + 1)),
                }
            } else if let Some(rest) = line.strip_prefix("# departed ") {
                let mut lp = None;
                let mut count = None;
                for w in rest.split_whitespace() {
                    match w.split_once('=') {
                        Some(("lp", v)) => lp = Some(v.to_string()),
                        Some(("count", v)) => count = v.parse::<u64>().ok(),
                        _ => {}
                    }
                }
                match (lp, count) {
                    (Some(lp), Some(count)) => {
                        tf.departed.insert(lp, count);
                    }
                    _ => return Err(format!("line {}: bad departed trailer", i + 1)),
                }
            } else if line.starts_with('#') {
                continue;
            } else if let Some(rec) = TraceRecord::parse_line(line) {
                tf.events.push(rec);
            } else {
                return Err(format!("line {}: not a trace line", i + 1));
            }
        }
        Ok(tf)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn read(path: &Path) -> Result<TraceFile, RunError> {
        let text = std::fs::read_to_string(path)?;
        TraceFile::parse(&text).map_err(RunError::Internal)
    }
}

/// Compares two traced runs. Empty result means the data-message
/// multisets and the per-LP departure totals agree exactly.
pub fn trace_diff(a: &TraceFile, b: &TraceFile) -> Vec<String> {
    let mut diff = Vec::new();

    let mut ma = a.msgs.clone();
    let mut mb = b.msgs.clone();
    ma.sort();
    mb.sort();
    if ma != mb {
        if ma.len() != mb.len() {
            diff.push(format!(
                "data message counts differ: {} vs {}",
                ma.len(),
                mb.len()
            ));
        }
        for i in 0..ma.len().min(mb.len()) {
            if ma[i] != mb[i] {
                diff.push(format!(
                    "first divergent data message (sorted position {i}):",
                ));
                diff.push(format!(
                    "  a: {} -> {} t={} units={}",
                    ma[i].from,
                    ma[i].to,
                    ma[i].time().to_trace_field(),
                    ma[i].units
                ));
                diff.push(format!(
                    "  b: {} -> {} t={} units={}",
                    mb[i].from,
                    mb[i].to,
                    mb[i].time().to_trace_field(),
                    mb[i].units
                ));
                break;
            }
        }
        if diff.is_empty() {
            // Same prefix, one side longer.
            let (longer, name) = if ma.len() > mb.len() {
                (&ma, "a")
            } else {
                (&mb, "b")
            };
            let extra = &longer[ma.len().min(mb.len())];
            diff.push(format!(
                "extra message only in {name}: {} -> {} t={} units={}",
                extra.from,
                extra.to,
                extra.time().to_trace_field(),
                extra.units
            ));
        }
    }

    let lps: std::collections::BTreeSet<&String> =
        a.departed.keys().chain(b.departed.keys()).collect();
    for lp in lps {
        let ca = a.departed.get(lp).copied().unwrap_or(0);
        let cb = b.departed.get(lp).copied().unwrap_or(0);
        if ca != cb {
            diff.push(format!("LP {lp}: {ca} departures vs {cb}"));
        }
    }

    diff
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_case_study;

    fn tiny_scenario() -> Scenario {
        Scenario::parse(
            "end_time 200\nseed 9\nlp U lookahead=0.5\nlp D lookahead=0.5\n\
             resource U.m capacity=1\nresource D.m capacity=1\n\
             block U.gen create kind=X inter=const(3) -> work\n\
             block U.work process resource=m service=const(1) -> batchup\n\
             block U.batchup batch size=4 -> ship\n\
             block U.ship portsend dest=D\n\
             block D.recv createport source=U kind=X -> sep\n\
             block D.sep separate add=3 -> fin\n\
             block D.fin process resource=m service=const(0.5) -> done\n\
             block D.done dispose\n\
             link U -> D transfer=2\n",
        )
        .unwrap()
    }

    #[test]
    fn sequential_and_local_agree_on_a_small_model() {
        let s = tiny_scenario();
        let cfg = RunConfig {
            trace: true,
            ..RunConfig::default()
        };
        let seq = run_sequential(&s, 9, true).unwrap();
        let loc = run_local(&s, 9, &cfg).unwrap();
        assert_eq!(seq.data_log, loc.data_log);
        assert_eq!(seq.departures(), loc.departures());
        assert_eq!(seq.trace, loc.trace);
        assert!(trace_diff(
            &TraceFile::from_artifacts(&seq),
            &TraceFile::from_artifacts(&loc)
        )
        .is_empty());
    }

    #[test]
    fn different_seeds_show_up_in_the_diff() {
        let s = build_case_study();
        let a = run_sequential(&s, 1, false).unwrap();
        let b = run_sequential(&s, 2, false).unwrap();
        let d = trace_diff(&TraceFile::from_artifacts(&a), &TraceFile::from_artifacts(&b));
        assert!(!d.is_empty());
    }

    #[test]
    fn conservation_holds_on_the_case_study() {
        let s = build_case_study();
        let a = run_sequential(&s, 42, false).unwrap();
        a.report.check_conservation().unwrap();
        a.check_unit_conservation().unwrap();
        // Batches of 1000 reconstituted by +999: units = messages x 1000.
        for acc in &a.sent_accounts {
            assert_eq!(acc.units, acc.messages * 1000, "{}->{}", acc.from, acc.to);
        }
    }

    #[test]
    fn trace_file_round_trips() {
        let s = tiny_scenario();
        let art = run_sequential(&s, 9, true).unwrap();
        let tf = TraceFile::from_artifacts(&art);
        let back = TraceFile::parse(&tf.to_text()).unwrap();
        assert_eq!(back, tf);
        assert!(trace_diff(&tf, &back).is_empty());
    }

    #[test]
    fn watchdog_stays_silent_while_progress_continues() {
        // The window is tighter than the likely total runtime, but the
        // watchdog measures stall, not duration, so a healthy run must
        // complete without tripping it.
        let s = build_case_study();
        let cfg = RunConfig {
            trace: false,
            watchdog: Duration::from_millis(250),
            ..RunConfig::default()
        };
        let art = run_local(&s, 42, &cfg).unwrap();
        assert!(art
            .report
            .statuses
            .iter()
            .all(|(_, st)| *st == EndStatus::Finished));
    }

    #[test]
    fn replications_produce_independent_artifacts() {
        // The tiny scenario is fully deterministic, so swap in a random
        // interarrival to give the replication seeds something to vary.
        let mut s = Scenario::parse(
            &tiny_scenario()
                .to_text()
                .replace("inter=const(3)", "inter=exp(3)"),
        )
        .unwrap();
        s.replications = 2;
        let runs = run_scenario(&s, &RunMode::Sequential, &RunConfig::default(), None).unwrap();
        assert_eq!(runs.len(), 2);
        assert_ne!(runs[0].data_log, runs[1].data_log);
    }
}
