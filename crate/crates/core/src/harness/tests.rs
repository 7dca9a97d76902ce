use super::*;
use crate::engine::ids;

fn spec(name: &str, role: Role) -> TestSpec {
    Catalog::builtin().get_test(name, role).unwrap().clone()
}

fn cfg(name: &str, role: Role, target: Target, n: u32) -> RunConfig {
    let mut c = RunConfig::new(name, role, target);
    c.iterations = n;
    c.seed = 7;
    c.workers = Some(1);
    c
}

fn run(name: &str, role: Role, sim: SimPeerConfig, n: u32) -> (Report, Trace) {
    let s = spec(name, role);
    run_spec(&s, &cfg(name, role, Target::Sim(sim), n), Registry::builtin(), Execution::Sequential).unwrap()
}

#[test]
fn stream_passes_against_conformant_peer() {
    let (r, trace) = run("stream", Role::Server, SimPeerConfig::conformant(), 5);
    assert_eq!(r.success_ratio, 100.0, "{}", r.to_json());
    for it in &r.results {
        assert_eq!(it.end_reason, EndReason::CleanClose);
        assert!(it.tester_findings.is_empty(), "{:?}", it.tester_findings);
    }
    for it in &trace.iterations {
        let ports: std::collections::BTreeSet<u16> =
            it.datagrams.iter().filter(|d| d.dir == Direction::FromTester).map(|d| d.src.port()).collect();
        assert_eq!(ports.len(), 2, "tester migrated once");
        let migrated = *ports.iter().max().unwrap();
        assert!(it.datagrams.iter().any(|d| d.dir == Direction::FromPeer && d.dst.port() == migrated));
    }
}

#[test]
fn error_test_gets_expected_close() {
    let (r, _) = run("new_token_err", Role::Server, SimPeerConfig::conformant(), 3);
    assert_eq!(r.success_ratio, 100.0, "{}", r.to_json());
    assert!(r.results.iter().all(|it| it.end_reason == EndReason::ExpectedError));
}

#[test]
fn decreasing_pn_is_caught() {
    let (r, _) = run("stream", Role::Server, SimPeerConfig::with_defect(Defect::DecreasingPn), 3);
    assert_eq!(r.passes, 0);
    assert_eq!(r.top_violation().unwrap().0, ids::PKT_PN_MONOTONIC);
}

#[test]
fn replay_matches_live() {
    let s = spec("stream", Role::Server);
    let (live, trace) = run("stream", Role::Server, SimPeerConfig::conformant(), 2);
    let parsed = Trace::parse(&trace.to_text()).unwrap();
    let replayed = replay_trace(&parsed, &s, AddressPolicy::AppLevelOnly, Registry::builtin(), false);
    for (a, b) in live.results.iter().zip(&replayed.results) {
        assert_eq!(a.verdicts, b.verdicts);
    }
    assert_eq!(replayed.histogram, live.histogram);
}

#[test]
fn same_seed_same_report() {
    let a = run("max", Role::Client, SimPeerConfig::conformant(), 3).0;
    let b = run("max", Role::Client, SimPeerConfig::conformant(), 3).0;
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn zero_iterations_rejected() {
    let s = spec("stream", Role::Server);
    let c = cfg("stream", Role::Server, Target::Sim(SimPeerConfig::conformant()), 0);
    assert!(matches!(run_spec(&s, &c, Registry::builtin(), Execution::Sequential), Err(HarnessError::Config(_))));
}

#[test]
fn unresolvable_udp_target() {
    let s = spec("stream", Role::Server);
    let c = cfg("stream", Role::Server, Target::Udp("no-such-host.invalid:4443".into()), 1);
    assert!(matches!(run_spec(&s, &c, Registry::builtin(), Execution::Sequential), Err(HarnessError::Unreachable { .. })));
}

#[test]
fn silent_udp_target_times_out() {
    let sink = std::net::UdpSocket::bind("127.0.0.1:0").unwrap();
    let s = spec("stream", Role::Server);
    let mut c = cfg("stream", Role::Server, Target::Udp(sink.local_addr().unwrap().to_string()), 1);
    c.timeout_ms = 150;
    let (r, _) = run_spec(&s, &c, Registry::builtin(), Execution::Sequential).unwrap();
    assert_eq!(r.passes, 0);
    assert_eq!(r.results[0].end_reason, EndReason::Timeout);
}
