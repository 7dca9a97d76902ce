//! Command-line front end: `run`, `list`, `replay` and `validate`.
//!
//! Exit status is 0 when every iteration passed or an informational command
//! succeeded, 1 when at least one iteration failed or the catalog has
//! defects, and 2 for usage and configuration errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::catalog::{validate_catalog, Catalog};
use crate::engine::{AddressPolicy, Registry, Role};
use crate::harness::{
    emit_report, render, replay_trace, run_spec, Defect, Execution, Report, ReportFormat, RunConfig, SimPeerConfig, Target, Trace,
    DEFAULT_ITERATIONS, DEFAULT_TIMEOUT_MS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "quicheck", version, about = "Conformance tester for QUIC draft-29 endpoints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a catalog test for a number of iterations.
    Run(RunArgs),
    /// List catalog tests.
    List {
        #[arg(long, value_enum)]
        role: Option<RoleArg>,
    },
    /// Re-judge a recorded trace.
    Replay(ReplayArgs),
    /// Check the catalog against the requirement registry.
    Validate {
        /// Requirement registry to validate against instead of the builtin one.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Client,
    Server,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Role {
        match r {
            RoleArg::Client => Role::Client,
            RoleArg::Server => Role::Server,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    AllLevels,
    AppLevel,
}

impl From<PolicyArg> for AddressPolicy {
    fn from(p: PolicyArg) -> AddressPolicy {
        match p {
            PolicyArg::AllLevels => AddressPolicy::AllLevels,
            PolicyArg::AppLevel => AddressPolicy::AppLevelOnly,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the report here as well as to standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    /// Let advisory findings fail iterations.
    #[arg(long)]
    pub include_advisory: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub test: String,
    /// Role of the implementation under test.
    #[arg(long, value_enum, default_value_t = RoleArg::Server)]
    pub role: RoleArg,
    /// UDP endpoint speaking the null-cipher framing.
    #[arg(long, value_name = "HOST:PORT", conflicts_with = "sim")]
    pub target: Option<String>,
    /// Built-in peer: `conformant` or `defect:<name>[+<name>...]`.
    #[arg(long, value_name = "SPEC", value_parser = parse_sim)]
    pub sim: Option<SimPeerConfig>,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS, value_parser = clap::value_parser!(u32).range(1..))]
    pub iterations: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyArg::AppLevel)]
    pub policy: PolicyArg,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    pub timeout_ms: u64,
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub workers: Option<u16>,
    /// Record every datagram to this trace file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub trace: PathBuf,
    #[arg(long)]
    pub test: String,
    #[arg(long, value_enum, default_value_t = RoleArg::Server)]
    pub role: RoleArg,
    #[arg(long, value_enum, default_value_t = PolicyArg::AppLevel)]
    pub policy: PolicyArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn parse_sim(s: &str) -> Result<SimPeerConfig, String> {
    if s == "conformant" {
        return Ok(SimPeerConfig::conformant());
    }
    let Some(list) = s.strip_prefix("defect:") else {
        return Err(format!("expected `conformant` or `defect:<name>`, got `{s}`"));
    };
    let defects = list.split('+').map(str::parse::<Defect>).collect::<Result<_, _>>()?;
    Ok(SimPeerConfig { defects })
}

impl RunArgs {
    pub fn config(&self) -> RunConfig {
        let target = match (&self.target, &self.sim) {
            (Some(a), _) => Target::Udp(a.clone()),
            (None, Some(s)) => Target::Sim(s.clone()),
            (None, None) => Target::Sim(SimPeerConfig::conformant()),
        };
        let mut cfg = RunConfig::new(&self.test, self.role.into(), target);
        cfg.iterations = self.iterations;
        cfg.seed = self.seed;
        cfg.policy = self.policy.into();
        cfg.timeout_ms = self.timeout_ms;
        cfg.workers = self.workers.map(usize::from);
        cfg.include_advisory = self.output.include_advisory;
        cfg
    }
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn fail(&mut self, msg: impl std::fmt::Display) -> i32 {
        let _ = writeln!(self.err, "error: {msg}");
        EXIT_USAGE
    }
}

fn publish(io: &mut Io<'_>, report: &Report, output: &OutputArgs) -> Result<(), i32> {
    let _ = write!(io.out, "{}", render(report, output.format));
    if let Some(p) = &output.report {
        emit_report(report, output.format, p).map_err(|e| io.fail(format!("--report {}: {e}", p.display())))?;
    }
    Ok(())
}

fn verdict_code(report: &Report) -> i32 {
    if report.passes == report.iterations && !report.degenerate {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn load_catalog(io: &mut Io<'_>) -> Result<Arc<Catalog>, i32> {
    Catalog::from_env().map_err(|e| io.fail(e))
}

fn cmd_run(io: &mut Io<'_>, args: &RunArgs) -> i32 {
    let catalog = match load_catalog(io) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let cfg = args.config();
    let spec = match catalog.get_test(&cfg.test, cfg.role) {
        Ok(s) => s,
        Err(e) => return io.fail(format!("--test: {e}")),
    };
    let (report, trace) = match run_spec(spec, &cfg, Registry::builtin(), Execution::Parallel) {
        Ok(r) => r,
        Err(e) => return io.fail(e),
    };
    if let Some(p) = &args.trace {
        if let Err(e) = std::fs::write(p, trace.to_text()) {
            return io.fail(format!("--trace {}: {e}", p.display()));
        }
    }
    match publish(io, &report, &args.output) {
        Ok(()) => verdict_code(&report),
        Err(code) => code,
    }
}

fn cmd_list(io: &mut Io<'_>, role: Option<RoleArg>) -> i32 {
    let catalog = match load_catalog(io) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match role {
        Some(r) => {
            for n in catalog.list_tests(r.into()) {
                let _ = writeln!(io.out, "{n}");
            }
        }
        None => {
            for r in [Role::Server, Role::Client] {
                let _ = writeln!(io.out, "[{r}]");
                for n in catalog.list_tests(r) {
                    let _ = writeln!(io.out, "{n}");
                }
            }
        }
    }
    EXIT_OK
}

fn cmd_replay(io: &mut Io<'_>, args: &ReplayArgs) -> i32 {
    let catalog = match load_catalog(io) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let spec = match catalog.get_test(&args.test, args.role.into()) {
        Ok(s) => s,
        Err(e) => return io.fail(format!("--test: {e}")),
    };
    let text = match std::fs::read_to_string(&args.trace) {
        Ok(t) => t,
        Err(e) => return io.fail(format!("{}: {e}", args.trace.display())),
    };
    let trace = match Trace::parse(&text) {
        Ok(t) => t,
        Err(e) => return io.fail(format!("{}: {e}", args.trace.display())),
    };
    let report = replay_trace(&trace, spec, args.policy.into(), Registry::builtin(), args.output.include_advisory);
    match publish(io, &report, &args.output) {
        Ok(()) => verdict_code(&report),
        Err(code) => code,
    }
}

fn cmd_validate(io: &mut Io<'_>, registry: Option<&Path>) -> i32 {
    let catalog = match load_catalog(io) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let registry = match registry {
        Some(p) => match Registry::load(p) {
            Ok(r) => Arc::new(r),
            Err(e) => return io.fail(format!("--registry {}: {e}", p.display())),
        },
        None => Registry::builtin(),
    };
    let defects = validate_catalog(&catalog, &registry);
    for d in &defects {
        let _ = writeln!(io.out, "{d}");
    }
    let _ = writeln!(io.out, "{} tests, {} defects", catalog.tests.len(), defects.len());
    if defects.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

/// Runs the command line with explicit output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let use_stderr = e.use_stderr();
            let _ = if use_stderr { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return if use_stderr { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut io = Io { out, err };
    match &cli.command {
        Command::Run(a) => cmd_run(&mut io, a),
        Command::List { role } => cmd_list(&mut io, *role),
        Command::Replay(a) => cmd_replay(&mut io, a),
        Command::Validate { registry } => cmd_validate(&mut io, registry.as_deref()),
    }
}

pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("quicheck").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn list_client() {
        let (code, out, _) = run(&["list", "--role", "client"]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(out.lines().count(), 14);
        assert!(out.lines().any(|l| l == "tp_prefadd_error"));
    }

    #[test]
    fn run_conformant() {
        let (code, out, err) = run(&["run", "--test", "stream", "--role", "server", "--sim", "conformant", "--iterations", "5", "--seed", "7"]);
        assert_eq!(code, EXIT_OK, "{err}");
        assert!(out.starts_with("stream"));
        assert!(out.lines().next().unwrap().ends_with("100%"));
    }

    #[test]
    fn failing_run_exits_one() {
        let (code, _, _) = run(&["run", "--test", "stream", "--sim", "defect:decreasing-pn", "--iterations", "2"]);
        assert_eq!(code, EXIT_FAILED);
    }

    #[test]
    fn usage_errors_exit_two() {
        let (code, _, err) = run(&["run", "--test", "nonsense"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--test"));
        assert_eq!(run(&["run", "--test", "stream", "--iterations", "0"]).0, EXIT_USAGE);
        assert_eq!(run(&["run", "--test", "stream", "--sim", "defect:gremlins"]).0, EXIT_USAGE);
        assert_eq!(run(&["run", "--test", "stream", "--sim", "conformant", "--target", "127.0.0.1:1"]).0, EXIT_USAGE);
        assert_eq!(run(&["run", "--test", "stream", "--policy", "sideways"]).0, EXIT_USAGE);
        assert_eq!(run(&["list", "--role", "proxy"]).0, EXIT_USAGE);
        assert_eq!(run(&[]).0, EXIT_USAGE);
        assert_eq!(run(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn validate_shipped_catalog() {
        let (code, out, _) = run(&["validate"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("37 tests, 0 defects"));
    }

    #[test]
    fn run_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let trace = dir.path().join("t.trace");
        let report = dir.path().join("r.json");
        let t = trace.to_str().unwrap();
        let (code, _, err) = run(&["run", "--test", "max", "--role", "client", "--iterations", "2", "--trace", t, "--format", "structured"]);
        assert_eq!(code, EXIT_OK, "{err}");
        let (code, _, err) = run(&["replay", t, "--test", "max", "--role", "client", "--report", report.to_str().unwrap(), "--format", "structured"]);
        assert_eq!(code, EXIT_OK, "{err}");
        let r = Report::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(r.iterations, 2);
        assert_eq!(r.success_ratio, 100.0);
    }

    #[test]
    fn malformed_trace_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let trace = dir.path().join("bad.trace");
        std::fs::write(&trace, "iteration 0 0\nX 1 2 3\n").unwrap();
        let (code, _, err) = run(&["replay", trace.to_str().unwrap(), "--test", "stream"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("line 2"), "{err}");
    }
}
