//! The built-in simulated peer: a deterministic endpoint that runs its own
//! monitor with the roles mirrored, plus optional defects.

use std::collections::BTreeSet;
use std::fmt;
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    expected_address, ids, ingest_datagram, AddressPolicy, ConnectionState, Datagram, Direction, Registry, Role, Severity,
    Verdict,
};
use crate::gen::{
    app_ready, close_packet, handshake_flight, next_request, next_response_chunk, owed_ack, packet, pending_path_challenge,
    pending_path_response, pending_reset, GenerationPlan, LocalProfile, UNKNOWN_TP_ID,
};
use crate::wire::{encode_datagram, error_codes, Frame, Packet, PnSpace};

/// Datagrams the peer may emit in one step.
const BURST: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Defect {
    /// One 1-RTT packet reuses an older packet number.
    DecreasingPn,
    /// Never validates a migrated address.
    NeverPathChallenge,
    /// Closes with `code` instead of the error it detected.
    WrongErrorCode { code: u64 },
    /// Detects the error and stops sending without a CONNECTION_CLOSE.
    SilentClose,
    /// Closes at an encryption level it may not use.
    WrongLevelClose,
    /// Treats an unknown transport parameter as an error.
    RejectUnknownTp,
    /// Carries on as if nothing happened.
    NoReaction,
}

impl Defect {
    pub const NAMES: [&'static str; 7] = [
        "decreasing-pn",
        "never-path-challenge",
        "wrong-error-code",
        "silent-close",
        "wrong-level-close",
        "reject-unknown-tp",
        "no-reaction",
    ];

    pub fn name(self) -> &'static str {
        match self {
            Defect::DecreasingPn => "decreasing-pn",
            Defect::NeverPathChallenge => "never-path-challenge",
            Defect::WrongErrorCode { .. } => "wrong-error-code",
            Defect::SilentClose => "silent-close",
            Defect::WrongLevelClose => "wrong-level-close",
            Defect::RejectUnknownTp => "reject-unknown-tp",
            Defect::NoReaction => "no-reaction",
        }
    }

    /// Server-facing test that exposes the defect, and the requirement it
    /// should be caught by.
    pub fn showcase(self) -> (&'static str, &'static str) {
        match self {
            Defect::DecreasingPn => ("stream", ids::PKT_PN_MONOTONIC),
            Defect::NeverPathChallenge => ("stream", ids::MIG_NO_PATH_VALIDATION),
            Defect::WrongErrorCode { .. } => ("new_token_err", ids::ERR_CODE_EXPECTED),
            Defect::SilentClose => ("unknown", ids::ERR_SILENT),
            Defect::WrongLevelClose => ("tp_err", ids::ERR_WRONG_LEVEL),
            Defect::RejectUnknownTp => ("unkown_tp", ids::ERR_UNEXPECTED_CLOSE),
            Defect::NoReaction => ("retirecid_err", ids::ERR_NO_REACTION),
        }
    }
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::WrongErrorCode { code } => write!(f, "wrong-error-code={}", error_codes::describe(*code)),
            d => f.write_str(d.name()),
        }
    }
}

impl FromStr for Defect {
    type Err = String;

    /// `wrong-error-code` takes an optional `=CODE`, by name or number.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once('=') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let d = match name {
            "decreasing-pn" => Defect::DecreasingPn,
            "never-path-challenge" => Defect::NeverPathChallenge,
            "wrong-error-code" => {
                let code = match arg {
                    None => error_codes::INTERNAL_ERROR,
                    Some(a) => error_codes::by_name(a)
                        .or_else(|| parse_code(a))
                        .ok_or_else(|| format!("unknown error code `{a}`"))?,
                };
                return Ok(Defect::WrongErrorCode { code });
            }
            "silent-close" => Defect::SilentClose,
            "wrong-level-close" => Defect::WrongLevelClose,
            "reject-unknown-tp" => Defect::RejectUnknownTp,
            "no-reaction" => Defect::NoReaction,
            _ => return Err(format!("unknown defect `{s}` (one of {})", Defect::NAMES.join(", "))),
        };
        match arg {
            Some(_) => Err(format!("defect `{name}` takes no argument")),
            None => Ok(d),
        }
    }
}

fn parse_code(s: &str) -> Option<u64> {
    match s.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16).ok(),
        None => s.parse().ok(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimPeerConfig {
    pub defects: BTreeSet<Defect>,
}

impl SimPeerConfig {
    pub fn conformant() -> Self {
        SimPeerConfig::default()
    }

    pub fn with_defect(d: Defect) -> Self {
        SimPeerConfig { defects: [d].into() }
    }

    pub fn is_conformant(&self) -> bool {
        self.defects.is_empty()
    }

    fn has(&self, name: &str) -> bool {
        self.defects.iter().any(|d| d.name() == name)
    }

    fn wrong_code(&self) -> Option<u64> {
        self.defects.iter().find_map(|d| match d {
            Defect::WrongErrorCode { code } => Some(*code),
            _ => None,
        })
    }
}

impl fmt::Display for SimPeerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.defects.is_empty() {
            return f.write_str("conformant");
        }
        let names: Vec<String> = self.defects.iter().map(|d| d.to_string()).collect();
        write!(f, "defect:{}", names.join("+"))
    }
}

pub struct SimPeer {
    pub state: ConnectionState,
    profile: LocalProfile,
    plan: GenerationPlan,
    config: SimPeerConfig,
    rng: ChaCha8Rng,
    addr: SocketAddr,
    /// Where the driven endpoint was last known to be before any packet
    /// arrived from it.
    initial_remote: SocketAddr,
    silent: bool,
    pn_skewed: bool,
    app_packets: u64,
}

impl SimPeer {
    /// A peer playing `role` at `addr`, talking to `remote`.
    pub fn new(role: Role, addr: SocketAddr, remote: SocketAddr, requests: u32, config: SimPeerConfig, registry: Arc<Registry>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9ee4);
        let profile = LocalProfile::new(role, requests, 4, &mut rng);
        SimPeer {
            state: ConnectionState::new(role, registry).with_policy(AddressPolicy::AppLevelOnly),
            profile,
            plan: GenerationPlan::new(Vec::new()),
            config,
            rng,
            addr,
            initial_remote: remote,
            silent: false,
            pn_skewed: false,
            app_packets: 0,
        }
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Consumes one datagram from the driven endpoint and returns the
    /// peer's replies.
    pub fn on_datagram(&mut self, dg: &Datagram) -> Vec<Datagram> {
        if self.silent {
            return Vec::new();
        }
        let mut incoming = dg.clone();
        incoming.dir = Direction::FromPeer;
        let out = ingest_datagram(&mut self.state, &incoming);
        if !self.state.closed() {
            if let Some(code) = self.detected_error(&out.verdicts) {
                return self.react(code, dg.at_ms);
            }
        }
        self.poll(dg.at_ms)
    }

    fn detected_error(&self, verdicts: &[Verdict]) -> Option<u64> {
        let reg = &self.state.registry;
        let hit = verdicts
            .iter()
            .filter(|v| v.is_violation() && v.direction == Direction::FromPeer && v.severity == Severity::Error)
            .filter(|v| v.requirement != ids::CODEC_FAILURE)
            .find_map(|v| reg.error_code(v.requirement.as_str()));
        if hit.is_some() {
            return hit;
        }
        let greased = self.state.peer.tp.as_ref().is_some_and(|t| t.contains(UNKNOWN_TP_ID));
        (greased && self.config.has("reject-unknown-tp")).then_some(error_codes::TRANSPORT_PARAMETER_ERROR)
    }

    fn react(&mut self, code: u64, now: u64) -> Vec<Datagram> {
        if self.config.has("no-reaction") {
            return self.poll(now);
        }
        if self.config.has("silent-close") {
            self.silent = true;
            return Vec::new();
        }
        let code = self.config.wrong_code().unwrap_or(code);
        let mut p = close_packet(&self.state, &self.profile, code, "");
        if self.config.has("wrong-level-close") {
            let space = if self.state.tester.finished_sent { PnSpace::Initial } else { PnSpace::Application };
            p = packet(space, &self.state, &self.profile, p.frames);
        }
        self.emit(vec![p], self.target(), now).into_iter().collect()
    }

    /// Whatever the peer wants to send without new input.
    pub fn poll(&mut self, now: u64) -> Vec<Datagram> {
        let mut out = Vec::new();
        while out.len() < BURST && !self.silent && !self.state.closed() {
            let Some((pkts, dst)) = self.next_flight() else { break };
            match self.emit(pkts, dst, now) {
                Some(dg) => out.push(dg),
                None => break,
            }
        }
        out
    }

    fn target(&self) -> SocketAddr {
        expected_address(&self.state, Direction::FromTester, AddressPolicy::AppLevelOnly)
            .ok()
            .or(self.state.peer.address)
            .unwrap_or(self.initial_remote)
    }

    fn next_flight(&mut self) -> Option<(Vec<Packet>, SocketAddr)> {
        if let Some(f) = handshake_flight(&self.state, &self.profile, &self.plan, &mut self.rng) {
            return Some((f, self.target()));
        }
        if !app_ready(&self.state) {
            return None;
        }
        if !self.config.has("never-path-challenge") {
            if let Some(addr) = pending_path_challenge(&self.state) {
                let data = self.rng.gen();
                let p = packet(PnSpace::Application, &self.state, &self.profile, vec![Frame::PathChallenge { data }]);
                return Some((vec![p], addr));
            }
        }
        let mut frames: Vec<Frame> = Vec::new();
        frames.extend(pending_path_response(&self.state));
        frames.extend(pending_reset(&self.state));
        frames.extend(owed_ack(&self.state, PnSpace::Application));
        let data = match self.profile.role {
            Role::Client => next_request(&self.state, &self.profile),
            Role::Server => next_response_chunk(&self.state),
        };
        frames.extend(data);
        if frames.is_empty() {
            return None;
        }
        let mut p = packet(PnSpace::Application, &self.state, &self.profile, frames);
        self.app_packets += 1;
        if self.config.has("decreasing-pn") && !self.pn_skewed && self.app_packets >= 4 && p.packet_number >= 2 {
            p.packet_number -= 2;
            self.pn_skewed = true;
        }
        Some((vec![p], self.target()))
    }

    fn emit(&mut self, pkts: Vec<Packet>, dst: SocketAddr, now: u64) -> Option<Datagram> {
        let bytes = encode_datagram(&pkts).ok()?;
        let dg = Datagram { dir: Direction::FromTester, src: self.addr, dst, at_ms: now, bytes };
        ingest_datagram(&mut self.state, &dg);
        Some(Datagram { dir: Direction::FromPeer, ..dg })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defect_names_parse() {
        for n in Defect::NAMES {
            let d: Defect = n.parse().unwrap();
            assert_eq!(d.name(), n);
        }
        assert_eq!(
            "wrong-error-code=FLOW_CONTROL_ERROR".parse::<Defect>().unwrap(),
            Defect::WrongErrorCode { code: error_codes::FLOW_CONTROL_ERROR }
        );
        assert_eq!("wrong-error-code=0x3".parse::<Defect>().unwrap(), Defect::WrongErrorCode { code: 3 });
        assert!("wrong-error-code=NOPE".parse::<Defect>().is_err());
        assert!("silent-close=1".parse::<Defect>().is_err());
        assert!("gremlins".parse::<Defect>().is_err());
    }

    #[test]
    fn showcase_targets_are_registered() {
        let reg = Registry::builtin();
        for n in Defect::NAMES {
            let (_, req) = n.parse::<Defect>().unwrap().showcase();
            assert!(reg.contains(req));
        }
    }

    #[test]
    fn config_display() {
        assert_eq!(SimPeerConfig::conformant().to_string(), "conformant");
        assert_eq!(SimPeerConfig::with_defect(Defect::SilentClose).to_string(), "defect:silent-close");
    }
}
