//! Iteration driver: runs a catalog test against the simulated peer or a UDP
//! target, replays recorded traces and aggregates reports.

pub mod report;
pub mod sim;
pub mod trace;

use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, CatalogError, TestSpec};
use crate::engine::{
    end_of_iteration, ingest_datagram, is_probing_packet, AddressPolicy, ConnectionState, Datagram, Direction, Goal,
    Registry, RequirementId, Role, Verdict,
};
use crate::gen::{app_ready, build_app_packet, close_packet, handshake_flight, has_work, packet, GenerationPlan, LocalProfile};
use crate::wire::{encode_datagram, error_codes, CloseKind, Frame, PnSpace};

pub use report::{emit_report, format_ratio, render, EndReason, Finding, IterationResult, Outcome, Report, ReportFormat};
pub use sim::{Defect, SimPeer, SimPeerConfig};
pub use trace::{Trace, TraceError, TraceIteration};

/// Simulated time between tester turns.
pub const STEP_MS: u64 = 10;
/// Silence after which an iteration ends.
pub const IDLE_MS: u64 = 3_000;
pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const DEFAULT_ITERATIONS: u32 = 100;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("target {target} unreachable: {reason}")]
    Unreachable { target: String, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Udp(String),
    Sim(SimPeerConfig),
}

impl Target {
    pub fn describe(&self) -> String {
        match self {
            Target::Udp(a) => format!("udp:{a}"),
            Target::Sim(c) => format!("sim:{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub test: String,
    /// Role of the implementation under test.
    pub role: Role,
    pub target: Target,
    pub iterations: u32,
    pub seed: u64,
    pub policy: AddressPolicy,
    pub timeout_ms: u64,
    /// Worker threads; `None` lets the pool decide, `Some(1)` runs inline.
    pub workers: Option<usize>,
    pub include_advisory: bool,
}

impl RunConfig {
    pub fn new(test: &str, role: Role, target: Target) -> Self {
        RunConfig {
            test: test.to_string(),
            role,
            target,
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
            policy: AddressPolicy::default(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            workers: None,
            include_advisory: false,
        }
    }

    pub fn iteration_seed(&self, index: u32) -> u64 {
        self.seed ^ index as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Data-parallel over iterations when built with the `parallel` feature,
    /// sequential otherwise.
    Parallel,
}

/// The other end of an iteration.
pub trait Link {
    /// Delivers `sent`, if any, and returns what came back by the end of the
    /// step.
    fn exchange(&mut self, sent: Option<&Datagram>, now_ms: u64) -> Result<Vec<Datagram>, HarnessError>;
    /// Source address the link actually sends from, if it overrides the
    /// tester's choice.
    fn local_addr(&self) -> Option<SocketAddr> {
        None
    }
    /// Wall-clock milliseconds since the iteration began, for real links.
    fn clock_ms(&self) -> Option<u64> {
        None
    }
}

pub struct SimLink {
    pub peer: SimPeer,
}

impl Link for SimLink {
    fn exchange(&mut self, sent: Option<&Datagram>, now_ms: u64) -> Result<Vec<Datagram>, HarnessError> {
        Ok(match sent {
            Some(d) => self.peer.on_datagram(d),
            None => self.peer.poll(now_ms),
        })
    }
}

/// Best-effort adapter for a live endpoint speaking the null-cipher framing.
pub struct UdpLink {
    socket: UdpSocket,
    local: SocketAddr,
    target: SocketAddr,
    start: Instant,
}

impl UdpLink {
    pub fn connect(target: &str) -> Result<UdpLink, HarnessError> {
        let unreachable = |reason: String| HarnessError::Unreachable { target: target.to_string(), reason };
        let addr = target
            .to_socket_addrs()
            .map_err(|e| unreachable(e.to_string()))?
            .next()
            .ok_or_else(|| unreachable("no address".into()))?;
        let bind: SocketAddr = if addr.is_ipv4() { "0.0.0.0:0".parse().unwrap() } else { "[::]:0".parse().unwrap() };
        let socket = UdpSocket::bind(bind)?;
        socket.connect(addr).map_err(|e| unreachable(e.to_string()))?;
        socket.set_read_timeout(Some(Duration::from_millis(STEP_MS)))?;
        let local = socket.local_addr()?;
        Ok(UdpLink { socket, local, target: addr, start: Instant::now() })
    }
}

impl Link for UdpLink {
    fn exchange(&mut self, sent: Option<&Datagram>, _now_ms: u64) -> Result<Vec<Datagram>, HarnessError> {
        if let Some(d) = sent {
            // Refused sends surface again as silence.
            let _ = self.socket.send(&d.bytes);
        }
        let mut out = Vec::new();
        let mut buf = [0u8; 65_535];
        loop {
            match self.socket.recv(&mut buf) {
                Ok(n) => out.push(Datagram {
                    dir: Direction::FromPeer,
                    src: self.target,
                    dst: self.local,
                    at_ms: self.start.elapsed().as_millis() as u64,
                    bytes: buf[..n].to_vec(),
                }),
                Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => break,
                Err(e) if e.kind() == std::io::ErrorKind::ConnectionRefused => break,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(out)
    }

    fn local_addr(&self) -> Option<SocketAddr> {
        Some(self.local)
    }

    fn clock_ms(&self) -> Option<u64> {
        Some(self.start.elapsed().as_millis() as u64)
    }
}

/// Fresh monitor state for the tester side of `spec`.
pub fn tester_state(spec: &TestSpec, policy: AddressPolicy, registry: Arc<Registry>) -> ConnectionState {
    let mut state = ConnectionState::new(spec.tester_role(), registry).with_policy(policy);
    state.armed = spec.target().map(RequirementId::from);
    state.pinned_version = spec.params.version;
    state
}

/// End-of-iteration verdicts, appended once the clock has stopped at `end_ms`.
pub fn finish(state: &mut ConnectionState, spec: &TestSpec, end_ms: u64) -> Vec<Verdict> {
    state.now_ms = state.now_ms.max(end_ms);
    end_of_iteration(state, &spec.goal, &spec.expected)
}

pub fn end_reason(state: &ConnectionState, spec: &TestSpec) -> EndReason {
    match (&state.peer.close, &state.tester.close) {
        (Some(c), _) => {
            let transport = matches!(c.kind, CloseKind::Transport { .. });
            if transport && spec.expected.error_codes().contains(&c.error_code) {
                EndReason::ExpectedError
            } else if transport && c.error_code == error_codes::NO_ERROR {
                EndReason::CleanClose
            } else {
                EndReason::UnexpectedError
            }
        }
        (None, Some(_)) => EndReason::CleanClose,
        (None, None) => EndReason::Timeout,
    }
}

fn addresses(spec: &TestSpec) -> (SocketAddr, SocketAddr) {
    match spec.tester_role() {
        Role::Client => (spec.params.client_addr, spec.params.server_addr),
        Role::Server => (spec.params.server_addr, spec.params.client_addr),
    }
}

/// Requests after which a non-adversarial test winds down.
fn request_goal(spec: &TestSpec) -> u32 {
    match spec.goal {
        Goal::RequestsServed { count } => count,
        _ => spec.params.requests,
    }
}

/// The driven endpoint.
struct Tester<'a> {
    spec: &'a TestSpec,
    state: ConnectionState,
    profile: LocalProfile,
    plan: GenerationPlan,
    rng: ChaCha8Rng,
    local: SocketAddr,
    remote: SocketAddr,
    migrated: bool,
    app_sent: u32,
}

impl<'a> Tester<'a> {
    fn new(spec: &'a TestSpec, policy: AddressPolicy, registry: Arc<Registry>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut profile = LocalProfile::new(spec.tester_role(), spec.params.requests, 8, &mut rng);
        profile.unknown_tp = spec.unknown_tp;
        let (local, remote) = addresses(spec);
        Tester {
            spec,
            state: tester_state(spec, policy, registry),
            profile,
            plan: spec.plan(),
            rng,
            local,
            remote,
            migrated: false,
            app_sent: 0,
        }
    }

    fn wants_close(&self) -> bool {
        !self.spec.expected.expects_error()
            && self.state.tester.close.is_none()
            && app_ready(&self.state)
            && crate::engine::outcome::requests_served(&self.state) >= request_goal(self.spec)
    }

    fn migration_due(&self, can_migrate: bool) -> bool {
        can_migrate && self.spec.migration && !self.migrated && self.app_sent >= 2 && self.state.confirmed(Direction::FromTester)
    }

    fn next_datagram(&mut self, now: u64, can_migrate: bool) -> Option<Datagram> {
        if self.state.closed() {
            return None;
        }
        let pkts = if self.wants_close() {
            vec![close_packet(&self.state, &self.profile, error_codes::NO_ERROR, "")]
        } else if let Some(f) = handshake_flight(&self.state, &self.profile, &self.plan, &mut self.rng) {
            f
        } else if self.migration_due(can_migrate) {
            self.migrated = true;
            self.local.set_port(self.local.port().wrapping_add(1));
            let mut p = build_app_packet(&self.state, &self.profile, &self.plan, &mut self.rng)
                .unwrap_or_else(|| packet(PnSpace::Application, &self.state, &self.profile, Vec::new()));
            if p.frames.is_empty() || is_probing_packet(&p) {
                p.frames.push(Frame::Ping);
            }
            self.app_sent += 1;
            vec![p]
        } else if has_work(&self.state, &self.profile, &self.plan) {
            let p = build_app_packet(&self.state, &self.profile, &self.plan, &mut self.rng)?;
            self.app_sent += 1;
            vec![p]
        } else {
            return None;
        };
        let bytes = encode_datagram(&pkts).ok()?;
        Some(Datagram { dir: Direction::FromTester, src: self.local, dst: self.remote, at_ms: now, bytes })
    }
}

/// Runs one iteration over `link`. Returns the judged result and the
/// recorded datagrams.
pub fn run_iteration(
    spec: &TestSpec,
    cfg: &RunConfig,
    registry: Arc<Registry>,
    index: u32,
    link: &mut dyn Link,
) -> Result<(IterationResult, TraceIteration), HarnessError> {
    let seed = cfg.iteration_seed(index);
    let mut tester = Tester::new(spec, cfg.policy, registry, seed);
    if let Some(a) = link.local_addr() {
        tester.local = a;
    }
    let can_migrate = link.local_addr().is_none();
    let mut verdicts = Vec::new();
    let mut record = Vec::new();
    let mut now = 0;
    let mut last_activity = 0;
    let (end_ms, timed_out) = loop {
        if let Some(t) = link.clock_ms() {
            now = t;
        }
        if now >= cfg.timeout_ms {
            break (now, true);
        }
        let sent = tester.next_datagram(now, can_migrate);
        if let Some(dg) = &sent {
            verdicts.extend(ingest_datagram(&mut tester.state, dg).verdicts);
            record.push(dg.clone());
        }
        let replies = link.exchange(sent.as_ref(), now)?;
        let active = sent.is_some() || !replies.is_empty();
        for mut r in replies {
            r.at_ms = r.at_ms.max(now);
            verdicts.extend(ingest_datagram(&mut tester.state, &r).verdicts);
            record.push(r);
        }
        if active {
            last_activity = now;
        }
        match link.clock_ms() {
            // Nothing is timer driven in simulation, so one quiet step means
            // every later step is quiet too.
            None if !active => break (now + IDLE_MS, false),
            Some(t) if t.saturating_sub(last_activity) >= IDLE_MS => break (t, false),
            _ => {}
        }
        now += STEP_MS;
    };
    verdicts.extend(finish(&mut tester.state, spec, end_ms));
    let end = if timed_out { EndReason::Timeout } else { end_reason(&tester.state, spec) };
    let result = IterationResult::judge(index, seed, end_ms, verdicts, cfg.include_advisory, end);
    Ok((result, TraceIteration { index, seed, datagrams: record, end_ms }))
}

fn make_link(spec: &TestSpec, cfg: &RunConfig, registry: &Arc<Registry>, index: u32) -> Result<Box<dyn Link>, HarnessError> {
    Ok(match &cfg.target {
        Target::Udp(a) => Box::new(UdpLink::connect(a)?),
        Target::Sim(c) => {
            let (tester, peer) = addresses(spec);
            Box::new(SimLink {
                peer: SimPeer::new(spec.role, peer, tester, spec.params.requests, c.clone(), registry.clone(), cfg.iteration_seed(index)),
            })
        }
    })
}

fn one(spec: &TestSpec, cfg: &RunConfig, registry: &Arc<Registry>, index: u32) -> Result<(IterationResult, TraceIteration), HarnessError> {
    let mut link = make_link(spec, cfg, registry, index)?;
    run_iteration(spec, cfg, registry.clone(), index, link.as_mut())
}

fn run_all(
    spec: &TestSpec,
    cfg: &RunConfig,
    registry: &Arc<Registry>,
    exec: Execution,
) -> Result<Vec<(IterationResult, TraceIteration)>, HarnessError> {
    let sequential = || (0..cfg.iterations).map(|i| one(spec, cfg, registry, i)).collect();
    if exec == Execution::Sequential || cfg.workers == Some(1) {
        return sequential();
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers.unwrap_or(0))
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        pool.install(|| (0..cfg.iterations).into_par_iter().map(|i| one(spec, cfg, registry, i)).collect())
    }
    #[cfg(not(feature = "parallel"))]
    sequential()
}

/// Runs `spec` under `cfg`, returning the report and the recorded trace.
pub fn run_spec(spec: &TestSpec, cfg: &RunConfig, registry: Arc<Registry>, exec: Execution) -> Result<(Report, Trace), HarnessError> {
    if cfg.iterations == 0 {
        return Err(HarnessError::Config("iterations must be at least 1".into()));
    }
    if let Target::Udp(a) = &cfg.target {
        UdpLink::connect(a)?;
    }
    let (results, iterations) = run_all(spec, cfg, &registry, exec)?.into_iter().unzip();
    let report = Report::aggregate(&spec.name, spec.role, cfg.target.describe(), cfg.policy, cfg.seed, results);
    Ok((report, Trace { iterations }))
}

/// Looks the test up in `catalog` and runs it.
pub fn run_test(cfg: &RunConfig, catalog: &Catalog, registry: Arc<Registry>) -> Result<Report, HarnessError> {
    let spec = catalog.get_test(&cfg.test, cfg.role)?;
    Ok(run_spec(spec, cfg, registry, Execution::Parallel)?.0)
}

/// Re-judges recorded datagrams. Verdicts match the live run that produced
/// the trace when `policy` is the same.
pub fn replay_trace(trace: &Trace, spec: &TestSpec, policy: AddressPolicy, registry: Arc<Registry>, include_advisory: bool) -> Report {
    let results = trace
        .iterations
        .iter()
        .map(|it| {
            let (r, _) = replay_iteration(it, spec, policy, registry.clone(), include_advisory);
            r
        })
        .collect();
    let base = trace.iterations.first().map_or(0, |it| it.seed ^ it.index as u64);
    Report::aggregate(&spec.name, spec.role, "trace".into(), policy, base, results)
}

/// Replays one recorded iteration, also returning the final monitor state.
pub fn replay_iteration(
    it: &TraceIteration,
    spec: &TestSpec,
    policy: AddressPolicy,
    registry: Arc<Registry>,
    include_advisory: bool,
) -> (IterationResult, ConnectionState) {
    let mut state = tester_state(spec, policy, registry);
    let mut verdicts = Vec::new();
    for d in &it.datagrams {
        verdicts.extend(ingest_datagram(&mut state, d).verdicts);
    }
    verdicts.extend(finish(&mut state, spec, it.end_ms));
    let end = end_reason(&state, spec);
    (IterationResult::judge(it.index, it.seed, it.end_ms, verdicts, include_advisory, end), state)
}

#[cfg(test)]
mod tests;
