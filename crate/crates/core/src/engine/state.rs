//! The connection mirror.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::sync::Arc;

use crate::wire::transport_params::ids as tp;
use crate::wire::{CloseKind, ConnectionId, PnSpace, TransportParameterSet, QUIC_VERSION_DRAFT29};

use super::{AddressPolicy, Direction, Registry, RequirementId, Role, Severity, Status, Verdict};

/// What one endpoint sent in one packet, kept for ACK checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentPacket {
    pub ack_eliciting: bool,
    pub ack_only: bool,
}

/// Packet-number bookkeeping for one space of one sender.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpaceLedger {
    pub largest: Option<u64>,
    pub packets: BTreeMap<u64, SentPacket>,
}

impl SpaceLedger {
    pub fn next_pn(&self) -> u64 {
        self.largest.map_or(0, |l| l + 1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SendStream {
    /// Highest offset + length seen.
    pub max_end: u64,
    pub final_size: Option<u64>,
    pub reset: bool,
}

/// Data an endpoint sent and limits it granted to the other side.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowLedger {
    pub sent: BTreeMap<u64, SendStream>,
    pub data_sent: u64,
    pub max_data: u64,
    /// MAX_STREAM_DATA updates, overriding transport parameter defaults.
    pub max_stream_data: BTreeMap<u64, u64>,
    /// `[bidi, uni]` stream count limits.
    pub max_streams: [u64; 2],
    pub stop_sending: BTreeSet<u64>,
}

/// Connection IDs one endpoint issued for the other to use.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CidLedger {
    pub issued: BTreeMap<u64, ConnectionId>,
    pub retire_prior_to: u64,
    pub retired: BTreeSet<u64>,
}

impl CidLedger {
    pub fn active(&self) -> usize {
        self.issued
            .keys()
            .filter(|s| **s >= self.retire_prior_to && !self.retired.contains(s))
            .count()
    }

    pub fn next_sequence(&self) -> u64 {
        self.issued.keys().next_back().map_or(0, |s| s + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloseObservation {
    pub space: PnSpace,
    pub packet_number: u64,
    pub kind: CloseKind,
    pub error_code: u64,
    pub at_ms: u64,
    pub event_index: u64,
    pub sender_finished: bool,
    pub sender_confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingValidation {
    /// Endpoint that must validate the path.
    pub validator: Direction,
    pub address: SocketAddr,
    pub since_event: u64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointView {
    pub role: Role,
    pub spaces: [SpaceLedger; 3],
    /// This endpoint's packet numbers acknowledged by the other side.
    pub acked: [BTreeSet<u64>; 3],
    /// Source address of each non-probing packet this endpoint sent.
    pub origins: [BTreeMap<u64, SocketAddr>; 3],
    pub address: Option<SocketAddr>,
    pub addresses: Vec<SocketAddr>,
    pub tp: Option<TransportParameterSet>,
    pub hello_sent: bool,
    pub finished_sent: bool,
    pub handshake_done_sent: bool,
    pub first_scid: Option<ConnectionId>,
    pub cids: CidLedger,
    pub flow: FlowLedger,
    pub challenges: Vec<([u8; 8], SocketAddr)>,
    pub responses: Vec<[u8; 8]>,
    pub tokens_issued: Vec<Vec<u8>>,
    pub sent_token: bool,
    pub close: Option<CloseObservation>,
    pub datagrams: u64,
}

impl EndpointView {
    pub fn new(role: Role) -> Self {
        EndpointView {
            role,
            spaces: Default::default(),
            acked: Default::default(),
            origins: Default::default(),
            address: None,
            addresses: Vec::new(),
            tp: None,
            hello_sent: false,
            finished_sent: false,
            handshake_done_sent: false,
            first_scid: None,
            cids: CidLedger::default(),
            flow: FlowLedger::default(),
            challenges: Vec::new(),
            responses: Vec::new(),
            tokens_issued: Vec::new(),
            sent_token: false,
            close: None,
            datagrams: 0,
        }
    }

    pub fn space(&self, s: PnSpace) -> &SpaceLedger {
        &self.spaces[s.index()]
    }

    /// Whether `stream_id` was opened by this endpoint.
    pub fn initiated(&self, stream_id: u64) -> bool {
        stream_id & 1 == self.role.stream_initiator_bit()
    }

    /// Limit this endpoint granted for data the other side sends on `stream_id`.
    pub fn stream_data_limit(&self, stream_id: u64) -> u64 {
        if let Some(m) = self.flow.max_stream_data.get(&stream_id) {
            return *m;
        }
        let Some(t) = &self.tp else { return 0 };
        let id = if stream_id & 2 != 0 {
            tp::INITIAL_MAX_STREAM_DATA_UNI
        } else if self.initiated(stream_id) {
            tp::INITIAL_MAX_STREAM_DATA_BIDI_LOCAL
        } else {
            tp::INITIAL_MAX_STREAM_DATA_BIDI_REMOTE
        };
        t.int_or(id, 0)
    }

    /// Seeds the flow-control grants from this endpoint's own parameters.
    pub fn apply_own_params(&mut self, t: &TransportParameterSet) {
        self.flow.max_data = self.flow.max_data.max(t.initial_max_data());
        self.flow.max_streams[0] = self.flow.max_streams[0].max(t.initial_max_streams(true));
        self.flow.max_streams[1] = self.flow.max_streams[1].max(t.initial_max_streams(false));
        if self.tp.is_none() {
            self.tp = Some(t.clone());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusRecord {
    pub requirement: RequirementId,
    pub event_index: u64,
    pub at_ms: u64,
}

#[derive(Debug, Clone)]
pub struct ConnectionState {
    /// Role of the endpoint the caller drives.
    pub role: Role,
    pub registry: Arc<Registry>,
    pub tester: EndpointView,
    pub peer: EndpointView,
    pub policy: AddressPolicy,
    pub short_dcid_len: usize,
    pub pinned_version: u32,
    pub next_event: u64,
    pub now_ms: u64,
    /// Requirement the tester will violate on purpose, if any.
    pub armed: Option<RequirementId>,
    pub stimulus: Option<StimulusRecord>,
    pub peer_datagrams_after_stimulus: u64,
    pub last_peer_datagram_ms: Option<u64>,
    pub validations: Vec<PendingValidation>,
    pub is_invalid_token: bool,
    pub original_dcid: Option<ConnectionId>,
}

impl ConnectionState {
    pub fn new(role: Role, registry: Arc<Registry>) -> Self {
        ConnectionState {
            role,
            registry,
            tester: EndpointView::new(role),
            peer: EndpointView::new(role.other()),
            policy: AddressPolicy::default(),
            short_dcid_len: 8,
            pinned_version: QUIC_VERSION_DRAFT29,
            next_event: 0,
            now_ms: 0,
            armed: None,
            stimulus: None,
            peer_datagrams_after_stimulus: 0,
            last_peer_datagram_ms: None,
            validations: Vec::new(),
            is_invalid_token: false,
            original_dcid: None,
        }
    }

    pub fn with_policy(mut self, policy: AddressPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn endpoint(&self, dir: Direction) -> &EndpointView {
        match dir {
            Direction::FromTester => &self.tester,
            Direction::FromPeer => &self.peer,
        }
    }

    pub fn endpoint_mut(&mut self, dir: Direction) -> &mut EndpointView {
        match dir {
            Direction::FromTester => &mut self.tester,
            Direction::FromPeer => &mut self.peer,
        }
    }

    /// Sender and receiver of traffic flowing in `dir`.
    pub fn pair_mut(&mut self, dir: Direction) -> (&mut EndpointView, &mut EndpointView) {
        match dir {
            Direction::FromTester => (&mut self.tester, &mut self.peer),
            Direction::FromPeer => (&mut self.peer, &mut self.tester),
        }
    }

    pub fn direction_of(&self, role: Role) -> Direction {
        if role == self.role {
            Direction::FromTester
        } else {
            Direction::FromPeer
        }
    }

    pub fn client(&self) -> &EndpointView {
        self.endpoint(self.direction_of(Role::Client))
    }

    pub fn server(&self) -> &EndpointView {
        self.endpoint(self.direction_of(Role::Server))
    }

    /// Both Finished messages have been sent.
    pub fn handshake_complete(&self) -> bool {
        self.tester.finished_sent && self.peer.finished_sent
    }

    /// Handshake confirmation for the endpoint sending in `dir`.
    pub fn confirmed(&self, dir: Direction) -> bool {
        match self.endpoint(dir).role {
            Role::Server => self.handshake_complete(),
            Role::Client => self.server().handshake_done_sent,
        }
    }

    pub fn closed(&self) -> bool {
        self.tester.close.is_some() || self.peer.close.is_some()
    }

    pub fn verdict(&self, id: &str, status: Status, dir: Direction, event_index: u64, detail: impl Into<String>) -> Verdict {
        Verdict {
            requirement: RequirementId::from(id),
            status,
            severity: self.registry.severity(id),
            direction: dir,
            event_index,
            at_ms: self.now_ms,
            detail: detail.into(),
            stimulus: false,
        }
    }

    pub fn violation(&self, id: &str, dir: Direction, event_index: u64, detail: impl Into<String>) -> Verdict {
        self.verdict(id, Status::Violation, dir, event_index, detail)
    }

    pub fn severity(&self, id: &str) -> Severity {
        self.registry.severity(id)
    }

    /// Acknowledgement the endpoint sending in `dir` owes for `space`:
    /// ack-eliciting packets received from the other side and not yet covered.
    pub fn owed_acks(&self, dir: Direction, space: PnSpace) -> BTreeSet<u64> {
        let other = self.endpoint(dir.reverse());
        let acked = &other.acked[space.index()];
        other.spaces[space.index()]
            .packets
            .iter()
            .filter(|(pn, p)| p.ack_eliciting && !acked.contains(pn))
            .map(|(pn, _)| *pn)
            .collect()
    }

    /// Every packet number received from the other side in `space`.
    pub fn received(&self, dir: Direction, space: PnSpace) -> BTreeSet<u64> {
        self.endpoint(dir.reverse()).spaces[space.index()].packets.keys().copied().collect()
    }
}
