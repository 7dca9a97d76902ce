//! State-legal frame synthesis and packet assembly for the driven endpoint.

use std::collections::BTreeSet;
use std::net::SocketAddr;

use rand::seq::IteratorRandom;
use rand::Rng;

use crate::engine::{ConnectionState, Direction, Role};
use crate::wire::transport_params::ids as tp;
use crate::wire::{
    encode_packet, CloseKind, ConnectionId, Frame, FrameKind, HandshakeMessage, Header, Packet, PnSpace,
    TransportParameterSet,
};

use super::{mutate_params, random_cid, sample_frame_kind, GenerationPlan, LocalProfile, Mutation, UNKNOWN_TP_ID};

const MAX_DATAGRAM: usize = 1200;
const MAX_CHUNK: u64 = 1000;

pub fn request_bytes(index: u64) -> Vec<u8> {
    format!("GET /file{index}.html\r\n").into_bytes()
}

/// Size of the response body served on a request stream.
pub fn response_len(stream_id: u64) -> u64 {
    300 + ((stream_id / 4) * 389) % 1001
}

/// Connection ID to put in outgoing headers.
pub fn remote_cid(state: &ConnectionState, profile: &LocalProfile) -> ConnectionId {
    state.peer.first_scid.clone().unwrap_or_else(|| profile.initial_dcid.clone())
}

fn client_bidi(id: u64) -> bool {
    id & 3 == 0
}

/// Next request a client opens: a new bidirectional stream with a short
/// request and FIN.
pub fn next_request(state: &ConnectionState, profile: &LocalProfile) -> Option<Frame> {
    if profile.role != Role::Client {
        return None;
    }
    let opened = state.tester.flow.sent.keys().filter(|id| client_bidi(**id)).count() as u64;
    if opened >= profile.requests as u64 || opened >= state.peer.flow.max_streams[0] {
        return None;
    }
    let data = request_bytes(opened);
    let id = opened * 4;
    let credit = state.peer.flow.max_data.saturating_sub(state.tester.flow.data_sent);
    if (data.len() as u64) > credit.min(state.peer.stream_data_limit(id)) {
        return None;
    }
    Some(Frame::Stream { stream_id: id, offset: 0, fin: true, data })
}

/// Next chunk of a response a server owes on a complete request stream.
pub fn next_response_chunk(state: &ConnectionState) -> Option<Frame> {
    if state.role != Role::Server {
        return None;
    }
    let me = &state.tester;
    let peer = &state.peer;
    let conn_credit = peer.flow.max_data.saturating_sub(me.flow.data_sent);
    for (id, req) in &peer.flow.sent {
        if !client_bidi(*id) || req.reset || req.final_size != Some(req.max_end) || peer.flow.stop_sending.contains(id) {
            continue;
        }
        let sent = me.flow.sent.get(id);
        if sent.is_some_and(|s| s.reset || s.final_size.is_some()) {
            continue;
        }
        let offset = sent.map_or(0, |s| s.max_end);
        let total = response_len(*id);
        let stream_credit = peer.stream_data_limit(*id).saturating_sub(offset);
        let n = (total - offset).min(MAX_CHUNK).min(stream_credit).min(conn_credit);
        if n == 0 && offset < total {
            continue;
        }
        let fin = offset + n == total;
        let data = (0..n).map(|i| b'a' + ((offset + i) % 26) as u8).collect();
        return Some(Frame::Stream { stream_id: *id, offset, fin, data });
    }
    None
}

/// RESET_STREAM owed after a STOP_SENDING from the other side.
pub fn pending_reset(state: &ConnectionState) -> Option<Frame> {
    let me = &state.tester;
    for id in &state.peer.flow.stop_sending {
        let sendable = *id & 2 == 0 || me.initiated(*id);
        let st = me.flow.sent.get(id);
        if !sendable || st.is_some_and(|s| s.reset) {
            continue;
        }
        let final_size = st.map_or(0, |s| s.max_end);
        return Some(Frame::ResetStream { stream_id: *id, error_code: 0, final_size });
    }
    None
}

/// PATH_RESPONSE for the oldest unanswered challenge.
pub fn pending_path_response(state: &ConnectionState) -> Option<Frame> {
    state
        .peer
        .challenges
        .iter()
        .find(|(d, _)| !state.tester.responses.contains(d))
        .map(|(d, _)| Frame::PathResponse { data: *d })
}

/// Address the driven endpoint still has to validate after a peer migration.
pub fn pending_path_challenge(state: &ConnectionState) -> Option<SocketAddr> {
    state
        .validations
        .iter()
        .find(|v| v.validator == Direction::FromTester && !v.satisfied)
        .map(|v| v.address)
}

/// ACK for everything received in `space`, when something is owed.
pub fn owed_ack(state: &ConnectionState, space: PnSpace) -> Option<Frame> {
    if state.owed_acks(Direction::FromTester, space).is_empty() {
        return None;
    }
    Frame::ack_for(&state.received(Direction::FromTester, space), 0)
}

/// Streams whose incoming data the driven endpoint could ask to stop.
fn stop_candidates(state: &ConnectionState) -> BTreeSet<u64> {
    let me = &state.tester;
    let peer = &state.peer;
    let mut out = BTreeSet::new();
    let ids: BTreeSet<u64> = me.flow.sent.keys().chain(peer.flow.sent.keys()).copied().collect();
    for id in ids {
        let receivable = id & 2 == 0 || !me.initiated(id);
        let done = peer.flow.sent.get(&id).is_some_and(|s| s.reset || s.final_size == Some(s.max_end));
        if receivable && !done && !me.flow.stop_sending.contains(&id) {
            out.insert(id);
        }
    }
    out
}

fn known_streams(state: &ConnectionState) -> BTreeSet<u64> {
    state.tester.flow.sent.keys().chain(state.peer.flow.sent.keys()).copied().collect()
}

/// Whether `kind` can be synthesised right now.
pub fn is_legal(kind: FrameKind, state: &ConnectionState, profile: &LocalProfile) -> bool {
    let me = &state.tester;
    let peer = &state.peer;
    match kind {
        FrameKind::Padding | FrameKind::Ping | FrameKind::MaxData | FrameKind::MaxStreams => true,
        FrameKind::DataBlocked | FrameKind::StreamsBlocked | FrameKind::PathChallenge => true,
        FrameKind::Ack => !state.owed_acks(Direction::FromTester, PnSpace::Application).is_empty(),
        FrameKind::Stream => match profile.role {
            Role::Client => next_request(state, profile).is_some(),
            Role::Server => next_response_chunk(state).is_some(),
        },
        FrameKind::ResetStream => pending_reset(state).is_some() || me.flow.sent.values().any(|s| !s.reset),
        FrameKind::StopSending => !stop_candidates(state).is_empty(),
        FrameKind::NewToken => profile.role == Role::Server,
        FrameKind::MaxStreamData => !known_streams(state).is_empty(),
        FrameKind::StreamDataBlocked => !me.flow.sent.is_empty(),
        FrameKind::NewConnectionId => {
            let limit = peer.tp.as_ref().map_or(2, |t| t.active_connection_id_limit());
            peer.tp.is_some() && (me.cids.active() as u64) < limit
        }
        FrameKind::RetireConnectionId => peer.cids.issued.keys().any(|s| *s > 0 && !peer.cids.retired.contains(s)),
        FrameKind::PathResponse => pending_path_response(state).is_some(),
        FrameKind::Crypto | FrameKind::HandshakeDone | FrameKind::ConnectionClose | FrameKind::Unknown => false,
    }
}

/// Produces a state-legal frame of `kind`, or `None` when none exists.
pub fn synthesize_frame<R: Rng>(kind: FrameKind, state: &ConnectionState, profile: &LocalProfile, rng: &mut R) -> Option<Frame> {
    if !is_legal(kind, state, profile) {
        return None;
    }
    let me = &state.tester;
    let peer = &state.peer;
    Some(match kind {
        FrameKind::Padding => Frame::Padding { len: rng.gen_range(1..=16) },
        FrameKind::Ping => Frame::Ping,
        FrameKind::Ack => {
            let mut f = owed_ack(state, PnSpace::Application)?;
            if let Frame::Ack { delay, .. } = &mut f {
                *delay = rng.gen_range(0..=1000);
            }
            f
        }
        FrameKind::Stream => match profile.role {
            Role::Client => next_request(state, profile)?,
            Role::Server => next_response_chunk(state)?,
        },
        FrameKind::ResetStream => match pending_reset(state) {
            Some(f) => f,
            None => {
                let (id, st) = me.flow.sent.iter().filter(|(_, s)| !s.reset).choose(rng)?;
                Frame::ResetStream { stream_id: *id, error_code: rng.gen_range(0..=0xff), final_size: st.max_end }
            }
        },
        FrameKind::StopSending => {
            let id = stop_candidates(state).into_iter().choose(rng)?;
            Frame::StopSending { stream_id: id, error_code: rng.gen_range(0..=0xff) }
        }
        FrameKind::NewToken => Frame::NewToken { token: (0..rng.gen_range(16..=32)).map(|_| rng.gen()).collect() },
        FrameKind::MaxData => Frame::MaxData { max: me.flow.max_data + rng.gen_range(1..=1 << 16) },
        FrameKind::MaxStreamData => {
            let id = known_streams(state).into_iter().choose(rng)?;
            Frame::MaxStreamData { stream_id: id, max: me.stream_data_limit(id) + rng.gen_range(1..=1 << 16) }
        }
        FrameKind::MaxStreams => {
            let bidi = rng.gen();
            Frame::MaxStreams { bidi, max: me.flow.max_streams[usize::from(!bidi)] + rng.gen_range(1..=10) }
        }
        FrameKind::DataBlocked => Frame::DataBlocked { limit: peer.flow.max_data },
        FrameKind::StreamDataBlocked => {
            let id = *me.flow.sent.keys().choose(rng)?;
            Frame::StreamDataBlocked { stream_id: id, limit: peer.stream_data_limit(id) }
        }
        FrameKind::StreamsBlocked => {
            let bidi = rng.gen();
            Frame::StreamsBlocked { bidi, limit: peer.flow.max_streams[usize::from(!bidi)] }
        }
        FrameKind::NewConnectionId => Frame::NewConnectionId {
            sequence: me.cids.next_sequence(),
            retire_prior_to: me.cids.retire_prior_to,
            cid: random_cid(rng),
            reset_token: rng.gen(),
        },
        FrameKind::RetireConnectionId => {
            let seq = peer.cids.issued.keys().filter(|s| **s > 0 && !peer.cids.retired.contains(s)).choose(rng)?;
            Frame::RetireConnectionId { sequence: *seq }
        }
        FrameKind::PathChallenge => Frame::PathChallenge { data: rng.gen() },
        FrameKind::PathResponse => pending_path_response(state)?,
        FrameKind::Crypto | FrameKind::HandshakeDone | FrameKind::ConnectionClose | FrameKind::Unknown => return None,
    })
}

/// Transport parameters for the driven endpoint's hello, mutation applied.
fn hello_params<R: Rng>(state: &ConnectionState, profile: &LocalProfile, plan: &GenerationPlan, rng: &mut R) -> TransportParameterSet {
    let mut set = profile.params.clone();
    set.push_cid(tp::INITIAL_SOURCE_CONNECTION_ID, &profile.scid);
    if profile.role == Role::Server {
        let ocid = state.original_dcid.clone().unwrap_or_default();
        set.push_cid(tp::ORIGINAL_DESTINATION_CONNECTION_ID, &ocid);
    }
    if profile.unknown_tp {
        set.push_raw(UNKNOWN_TP_ID, rng.gen::<[u8; 6]>().to_vec());
    }
    if let Some(m) = plan.mutation {
        if m.on_params() && m.tester_role().is_none_or(|r| r == profile.role) {
            mutate_params(m, &mut set, rng);
        }
    }
    set
}

fn long_header(space: PnSpace, state: &ConnectionState, profile: &LocalProfile) -> Header {
    let version = state.pinned_version;
    let dcid = remote_cid(state, profile);
    let scid = profile.scid.clone();
    match space {
        PnSpace::Initial => Header::Initial { version, dcid, scid, token: Vec::new() },
        PnSpace::Handshake => Header::Handshake { version, dcid, scid },
        PnSpace::Application => Header::Short { dcid },
    }
}

pub fn packet(space: PnSpace, state: &ConnectionState, profile: &LocalProfile, frames: Vec<Frame>) -> Packet {
    Packet {
        header: long_header(space, state, profile),
        packet_number: state.tester.space(space).next_pn(),
        frames,
    }
}

fn crypto(m: HandshakeMessage) -> Frame {
    Frame::Crypto { offset: 0, data: m.encode().expect("handshake message encodes") }
}

/// Packets that move the handshake forward, if any are due.
pub fn handshake_flight<R: Rng>(state: &ConnectionState, profile: &LocalProfile, plan: &GenerationPlan, rng: &mut R) -> Option<Vec<Packet>> {
    if state.closed() {
        return None;
    }
    let me = &state.tester;
    let peer = &state.peer;
    match profile.role {
        Role::Client if !me.hello_sent => {
            let hello = HandshakeMessage::ClientHello(hello_params(state, profile, plan, rng));
            let mut p = packet(PnSpace::Initial, state, profile, vec![crypto(hello)]);
            if plan.mutation == Some(Mutation::InitialToken) {
                *p.token_mut().expect("initial has a token") = rng.gen::<[u8; 16]>().to_vec();
            }
            let len = encode_packet(&p).map(|b| b.len()).unwrap_or(MAX_DATAGRAM);
            if len < MAX_DATAGRAM {
                p.frames.push(Frame::Padding { len: MAX_DATAGRAM - len });
            }
            Some(vec![p])
        }
        Role::Client if peer.finished_sent && !me.finished_sent => {
            let mut out = Vec::new();
            if let Some(ack) = owed_ack(state, PnSpace::Initial) {
                out.push(packet(PnSpace::Initial, state, profile, vec![ack]));
            }
            let mut frames: Vec<Frame> = owed_ack(state, PnSpace::Handshake).into_iter().collect();
            frames.push(crypto(HandshakeMessage::Finished));
            out.push(packet(PnSpace::Handshake, state, profile, frames));
            Some(out)
        }
        Role::Server if peer.hello_sent && !me.hello_sent => {
            let hello = HandshakeMessage::ServerHello(hello_params(state, profile, plan, rng));
            let mut frames: Vec<Frame> = owed_ack(state, PnSpace::Initial).into_iter().collect();
            frames.push(crypto(hello));
            Some(vec![
                packet(PnSpace::Initial, state, profile, frames),
                packet(PnSpace::Handshake, state, profile, vec![crypto(HandshakeMessage::Finished)]),
            ])
        }
        Role::Server if peer.finished_sent && me.finished_sent && !me.handshake_done_sent => {
            let mut out = Vec::new();
            if let Some(ack) = owed_ack(state, PnSpace::Handshake) {
                out.push(packet(PnSpace::Handshake, state, profile, vec![ack]));
            }
            out.push(packet(PnSpace::Application, state, profile, vec![Frame::HandshakeDone]));
            Some(out)
        }
        _ => None,
    }
}

/// 1-RTT traffic may flow.
pub fn app_ready(state: &ConnectionState) -> bool {
    match state.role {
        Role::Client => state.tester.finished_sent,
        Role::Server => state.tester.handshake_done_sent,
    }
}

fn mutation_pending(state: &ConnectionState, plan: &GenerationPlan) -> Option<Mutation> {
    let m = plan.mutation?;
    (state.stimulus.is_none() && !m.on_params() && m != Mutation::InitialToken).then_some(m)
}

/// Whether the driven endpoint has anything worth sending.
pub fn has_work(state: &ConnectionState, profile: &LocalProfile, plan: &GenerationPlan) -> bool {
    if state.closed() {
        return false;
    }
    let handshake_due = match profile.role {
        Role::Client => !state.tester.hello_sent || (state.peer.finished_sent && !state.tester.finished_sent),
        Role::Server => {
            (state.peer.hello_sent && !state.tester.hello_sent)
                || (state.peer.finished_sent && state.tester.finished_sent && !state.tester.handshake_done_sent)
        }
    };
    if handshake_due {
        return true;
    }
    if !app_ready(state) {
        return false;
    }
    mutation_pending(state, plan).is_some()
        || (plan.allows(FrameKind::Ack) && is_legal(FrameKind::Ack, state, profile))
        || (plan.allows(FrameKind::Stream) && is_legal(FrameKind::Stream, state, profile))
        || (plan.allows(FrameKind::PathResponse) && is_legal(FrameKind::PathResponse, state, profile))
        || (plan.allows(FrameKind::ResetStream) && pending_reset(state).is_some())
}

/// A 1-RTT packet of one to four sampled frames, carrying the pending
/// mutation when it applies.
pub fn build_app_packet<R: Rng>(state: &ConnectionState, profile: &LocalProfile, plan: &GenerationPlan, rng: &mut R) -> Option<Packet> {
    if state.closed() || !app_ready(state) {
        return None;
    }
    let mut frames = Vec::new();
    let mutated = mutation_pending(state, plan).and_then(|m| super::apply_mutation(m, state, rng));
    let slots = rng.gen_range(1..=4);
    let mut used: BTreeSet<FrameKind> = BTreeSet::new();
    let mut size = 16 + mutated.as_ref().map_or(0, frame_len);
    let mut attempts = 0;
    while used.len() < slots && attempts < plan.max_retries {
        attempts += 1;
        let legal: Vec<FrameKind> = plan
            .allowed
            .iter()
            .copied()
            .filter(|k| !used.contains(k) && is_legal(*k, state, profile))
            .collect();
        let Some(kind) = sample_frame_kind(plan, &legal, rng) else { break };
        used.insert(kind);
        let Some(f) = synthesize_frame(kind, state, profile, rng) else { continue };
        let n = frame_len(&f);
        if size + n > MAX_DATAGRAM {
            continue;
        }
        size += n;
        frames.push(f);
    }
    frames.extend(mutated);
    if frames.is_empty() {
        return None;
    }
    Some(packet(PnSpace::Application, state, profile, frames))
}

fn frame_len(f: &Frame) -> usize {
    crate::wire::encode_frame(f).map(|b| b.len()).unwrap_or(MAX_DATAGRAM)
}

/// CONNECTION_CLOSE at the highest level the driven endpoint may use.
pub fn close_packet(state: &ConnectionState, profile: &LocalProfile, code: u64, reason: &str) -> Packet {
    let f = Frame::ConnectionClose { kind: CloseKind::Transport { frame_type: 0 }, error_code: code, reason: reason.as_bytes().to_vec() };
    let space = if state.tester.finished_sent { PnSpace::Application } else { PnSpace::Initial };
    packet(space, state, profile, vec![f])
}
