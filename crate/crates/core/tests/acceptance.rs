//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any failed.

mod common;

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use proptest::test_runner::{Config, TestRunner};
use quicheck::catalog::Catalog;
use quicheck::engine::{AddressPolicy, Datagram, Direction, Registry, Role};
use quicheck::gen::{sample_frame_kind, GenerationPlan};
use quicheck::harness::{replay_iteration, run_spec, Defect, Execution, Report, RunConfig, SimPeerConfig, Target, TraceIteration};
use quicheck::wire::transport_params::ids as tp;
use quicheck::wire::{
    decode_frame, decode_packet, encode_datagram, encode_frame, encode_packet, encode_varint, ConnectionId, DecodeContext, Frame,
    FrameKind, HandshakeMessage, Header, Packet, PnSpace, TransportParameterSet, VarInt, QUIC_VERSION_DRAFT29,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SERVER_TESTS: [&str; 23] = [
    "stream",
    "max",
    "reset_stream",
    "connection_close",
    "stop_sending",
    "accept_maxdata",
    "unknown",
    "unkown_tp",
    "double_tp_err",
    "tp_err",
    "tp_acticoid_err",
    "no_icid_err",
    "token_err",
    "new_token_err",
    "handshake_done_err",
    "newcid_err",
    "max_limit_err",
    "blocked_err",
    "retirecid_err",
    "stream_limit_err",
    "newcid_length_err",
    "newcid_rtp_err",
    "max_err",
];

const CLIENT_TESTS: [&str; 14] = [
    "stream",
    "max",
    "accept_maxdata",
    "unkown",
    "tp_unkown",
    "double_tp_error",
    "tp_error",
    "tp_acticoid_error",
    "no_ocid",
    "tp_prefadd_error",
    "blocked_error",
    "retirecoid_error",
    "new_token_error",
    "limit_max_error",
];

fn run(name: &str, role: Role, sim: SimPeerConfig, iterations: u32, seed: u64) -> Report {
    let cat = Catalog::builtin();
    let spec = cat.get_test(name, role).unwrap();
    let mut cfg = RunConfig::new(name, role, Target::Sim(sim));
    cfg.iterations = iterations;
    cfg.seed = seed;
    run_spec(spec, &cfg, Registry::builtin(), Execution::Parallel).unwrap().0
}

fn codec_soundness() -> String {
    const FRAMES: u32 = 10_000;
    const PACKETS: u32 = 2_000;
    let mut runner = TestRunner::new(Config { cases: FRAMES, ..Config::default() });
    runner
        .run(&common::frame(), |f| {
            let bytes = encode_frame(&f).unwrap();
            let (back, n) = decode_frame(&bytes).unwrap();
            assert_eq!(n, bytes.len());
            assert_eq!(back, f);
            assert_eq!(encode_frame(&back).unwrap(), bytes);
            Ok(())
        })
        .unwrap();
    let mut runner = TestRunner::new(Config { cases: PACKETS, ..Config::default() });
    runner
        .run(&common::packet(), |p| {
            let bytes = encode_packet(&p).unwrap();
            let mut ctx = DecodeContext::new(common::SHORT_DCID_LEN);
            ctx.largest_pn[p.space().index()] = p.packet_number.checked_sub(1);
            let d = decode_packet(&bytes, &ctx).unwrap();
            assert_eq!(d.len, bytes.len());
            assert_eq!(d.packet, p);
            assert_eq!(encode_packet(&d.packet).unwrap(), bytes);
            Ok(())
        })
        .unwrap();
    for v in 0..(1u64 << 14) {
        let minimal = if v < 64 { 1 } else { 2 };
        assert_eq!(encode_varint(VarInt::new(v).unwrap()).len(), minimal, "{v}");
    }
    format!("{FRAMES} frames, {PACKETS} packets, varints below 2^14")
}

fn conformant_baseline() -> String {
    let cat = Catalog::builtin();
    let benign: Vec<_> = cat.tests.iter().filter(|t| !t.is_adversarial()).collect();
    let names = |role| benign.iter().filter(|t| t.role == role).map(|t| t.name.as_str()).collect::<Vec<_>>();
    assert_eq!(names(Role::Server), ["stream", "max", "reset_stream", "connection_close", "stop_sending", "accept_maxdata", "unkown_tp"]);
    assert_eq!(names(Role::Client), ["stream", "max", "accept_maxdata", "tp_unkown"]);
    for t in &benign {
        let r = run(&t.name, t.role, SimPeerConfig::conformant(), 100, 0xacce);
        assert_eq!(r.success_ratio, 100.0, "{} ({}):\n{}", t.name, t.role, r.to_text());
    }
    format!("{} tests at 100 iterations, all 100%", benign.len())
}

fn defect_detection() -> String {
    let defects = [Defect::DecreasingPn, Defect::NeverPathChallenge, "wrong-error-code".parse().unwrap(), Defect::SilentClose, Defect::WrongLevelClose];
    let mut seen = BTreeSet::new();
    for d in &defects {
        let (test, req) = d.showcase();
        let r = run(test, Role::Server, SimPeerConfig::with_defect(*d), 100, 0xdefe);
        assert_eq!(r.success_ratio, 0.0, "{d:?}:\n{}", r.to_text());
        assert_eq!(r.top_violation().map(|t| t.0), Some(req), "{d:?}:\n{}", r.to_text());
        seen.insert(req);
    }
    assert_eq!(seen.len(), defects.len(), "verdicts must be distinct");
    format!("{} defects, distinct top verdicts {:?}", seen.len(), seen)
}

fn duality() -> String {
    let cat = Catalog::builtin();
    let mut n = 0;
    for t in cat.tests.iter().filter(|t| t.is_adversarial()) {
        let target = t.target().unwrap();
        let r = run(&t.name, t.role, SimPeerConfig::conformant(), 20, 0xd0a1);
        for it in &r.results {
            assert!(!it.tester_findings.is_empty(), "{} ({}): stimulus not flagged", t.name, t.role);
            for f in &it.tester_findings {
                assert_eq!(f.requirement, target, "{} ({}): {f:?}", t.name, t.role);
            }
        }
        n += 1;
    }
    format!("{n} mutation tests flag only their target")
}

fn weight_semantics() -> String {
    const DRAWS: u64 = 80_000;
    let kinds = [FrameKind::Stream, FrameKind::Ack, FrameKind::PathResponse, FrameKind::Crypto];
    let mut plan = GenerationPlan::new(kinds.to_vec());
    plan.weights.insert(FrameKind::PathResponse, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let hits = (0..DRAWS).filter(|_| sample_frame_kind(&plan, &kinds, &mut rng) == Some(FrameKind::PathResponse)).count() as f64;
    let n = DRAWS as f64;
    let (e1, e0) = (n * 5.0 / 8.0, n * 3.0 / 8.0);
    let stat = (hits - e1).powi(2) / e1 + (n - hits - e0).powi(2) / e0;
    let critical = ChiSquared::new(1.0).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi2 {stat:.3} >= {critical:.3}, frequency {:.4}", hits / n);
    format!("frequency {:.4}, chi2 {stat:.3} < {critical:.3}", hits / n)
}

fn addr(s: &str) -> SocketAddr {
    s.parse().unwrap()
}

fn cid(b: u8) -> ConnectionId {
    ConnectionId::new(&[b; 8]).unwrap()
}

fn hello_params(role: Role) -> TransportParameterSet {
    let mut s = TransportParameterSet::new();
    s.push_int(tp::INITIAL_MAX_DATA, 10_000)
        .push_int(tp::INITIAL_MAX_STREAM_DATA_BIDI_LOCAL, 4_000)
        .push_int(tp::INITIAL_MAX_STREAM_DATA_BIDI_REMOTE, 4_000)
        .push_int(tp::INITIAL_MAX_STREAMS_BIDI, 4)
        .push_cid(tp::INITIAL_SOURCE_CONNECTION_ID, &cid(if role == Role::Client { 1 } else { 2 }));
    if role == Role::Server {
        s.push_cid(tp::ORIGINAL_DESTINATION_CONNECTION_ID, &cid(9));
    }
    s
}

fn crypto(m: HandshakeMessage) -> Frame {
    Frame::Crypto { offset: 0, data: m.encode().unwrap() }
}

fn ack(pn: u64) -> Frame {
    Frame::Ack { largest: pn, delay: 0, first_range: 0, ranges: vec![], ecn: None }
}

fn long(space: PnSpace, dcid: u8, scid: u8, pn: u64, frames: Vec<Frame>) -> Packet {
    let header = match space {
        PnSpace::Initial => Header::Initial { version: QUIC_VERSION_DRAFT29, dcid: cid(dcid), scid: cid(scid), token: vec![] },
        _ => Header::Handshake { version: QUIC_VERSION_DRAFT29, dcid: cid(dcid), scid: cid(scid) },
    };
    Packet { header, packet_number: pn, frames }
}

fn short(dcid: u8, pn: u64, frames: Vec<Frame>) -> Packet {
    Packet { header: Header::Short { dcid: cid(dcid) }, packet_number: pn, frames }
}

/// Tester is the client at A, migrating to B after a Handshake packet with a
/// high packet number. The server answers at B.
fn migration_trace() -> TraceIteration {
    let (a, b, s) = ("127.0.0.1:4987", "127.0.0.1:4988", "127.0.0.1:4443");
    type Step<'a> = (Direction, &'a str, &'a str, Vec<Packet>);
    let steps: Vec<Step> = vec![
        (Direction::FromTester, a, s, vec![long(PnSpace::Initial, 9, 1, 0, vec![crypto(HandshakeMessage::ClientHello(hello_params(Role::Client)))])]),
        (
            Direction::FromPeer,
            s,
            a,
            vec![
                long(PnSpace::Initial, 1, 2, 0, vec![ack(0), crypto(HandshakeMessage::ServerHello(hello_params(Role::Server)))]),
                long(PnSpace::Handshake, 1, 2, 0, vec![crypto(HandshakeMessage::Finished)]),
            ],
        ),
        (Direction::FromTester, a, s, vec![long(PnSpace::Handshake, 2, 1, 9, vec![ack(0), crypto(HandshakeMessage::Finished)])]),
        (Direction::FromPeer, s, a, vec![long(PnSpace::Handshake, 1, 2, 1, vec![ack(9)]), short(1, 0, vec![Frame::HandshakeDone])]),
        (Direction::FromTester, b, s, vec![short(2, 3, vec![ack(0), Frame::Ping])]),
        (Direction::FromPeer, s, b, vec![short(1, 1, vec![Frame::PathChallenge { data: [7; 8] }])]),
        (Direction::FromPeer, s, b, vec![short(1, 2, vec![ack(3)])]),
        (Direction::FromTester, b, s, vec![short(2, 4, vec![Frame::PathResponse { data: [7; 8] }])]),
    ];
    let datagrams = steps
        .into_iter()
        .enumerate()
        .map(|(i, (dir, src, dst, pkts))| Datagram { dir, src: addr(src), dst: addr(dst), at_ms: 10 * (i as u64 + 1), bytes: encode_datagram(&pkts).unwrap() })
        .collect();
    TraceIteration { index: 0, seed: 0, datagrams, end_ms: 3_100 }
}

/// Independent reading of the rule: among the tester's non-probing packets,
/// the highest packet number wins, either over every space or over 1-RTT only.
fn oracle_target(sent: &[(PnSpace, u64, SocketAddr)], all_levels: bool) -> SocketAddr {
    sent.iter()
        .filter(|(sp, _, _)| all_levels || *sp == PnSpace::Application)
        .max_by_key(|(sp, pn, _)| (*pn, sp.index()))
        .map(|(_, _, a)| *a)
        .unwrap()
}

fn ambiguity() -> String {
    let trace = migration_trace();
    let tester_sent = [
        (PnSpace::Initial, 0, addr("127.0.0.1:4987")),
        (PnSpace::Handshake, 9, addr("127.0.0.1:4987")),
        (PnSpace::Application, 3, addr("127.0.0.1:4988")),
    ];
    let ack_dst = addr("127.0.0.1:4988");
    let cat = Catalog::builtin();
    let spec = cat.get_test("stream", Role::Server).unwrap();
    let mut outcome = Vec::new();
    for (policy, all) in [(AddressPolicy::AppLevelOnly, false), (AddressPolicy::AllLevels, true)] {
        let (r, _) = replay_iteration(&trace, spec, policy, Registry::builtin(), false);
        let flagged = r.violations.iter().any(|f| f.requirement == "MIG_ADDR_TARGET");
        let expected = oracle_target(&tester_sent, all) != ack_dst;
        assert_eq!(flagged, expected, "{policy:?}: {:?}", r.violations);
        let others: Vec<_> = r.violations.iter().filter(|f| f.requirement != "MIG_ADDR_TARGET" && f.requirement != "GOAL_REACHED").collect();
        assert!(others.is_empty(), "{policy:?}: {others:?}");
        outcome.push(flagged);
    }
    assert_ne!(outcome[0], outcome[1], "policies must disagree");
    format!("AppLevelOnly violation={}, AllLevels violation={}", outcome[0], outcome[1])
}

fn reproducibility() -> String {
    let cases = [("stream", Role::Server, SimPeerConfig::conformant()), ("max", Role::Client, SimPeerConfig::conformant()), ("new_token_err", Role::Server, SimPeerConfig::with_defect(Defect::SilentClose))];
    for (name, role, sim) in &cases {
        let a = run(name, *role, sim.clone(), 25, 42).to_json();
        let b = run(name, *role, sim.clone(), 25, 42).to_json();
        assert_eq!(a, b, "{name} ({role})");
    }
    format!("{} tests byte-identical", cases.len())
}

fn catalog_fidelity() -> String {
    let cat = Catalog::builtin();
    assert_eq!(cat.list_tests(Role::Server), SERVER_TESTS);
    assert_eq!(cat.list_tests(Role::Client), CLIENT_TESTS);
    assert_eq!(cat.defaults.client_addr.port(), 4987);
    assert_eq!(cat.defaults.server_addr.port(), 4443);
    assert_eq!(cat.defaults.version, 0xff00_001d);
    format!("{} server, {} client, ports 4987/4443, version 0xff00001d", SERVER_TESTS.len(), CLIENT_TESTS.len())
}

fn main() {
    type Criterion = (&'static str, fn() -> String);
    let criteria: [Criterion; 8] = [
        ("codec soundness", codec_soundness),
        ("conformant baseline", conformant_baseline),
        ("defect detection", defect_detection),
        ("generator/checker duality", duality),
        ("weight semantics", weight_semantics),
        ("address policy ambiguity", ambiguity),
        ("reproducibility", reproducibility),
        ("catalog fidelity", catalog_fidelity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f));
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS  {}. {name} ({secs:.1}s): {detail}", i + 1),
            Err(e) => {
                failed += 1;
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
                println!("FAIL  {}. {name} ({secs:.1}s): {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
