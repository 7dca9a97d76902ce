//! Per-datagram, per-packet and per-frame monitoring.

use std::net::SocketAddr;

use crate::wire::frame::{MAX_STREAMS_LIMIT, MAX_STREAM_SIZE};
use crate::wire::{
    decode_datagram, error_codes, CloseKind, DecodeContext, DecodedPacket, Frame, FrameKind, HandshakeMessage,
    HeaderAnnotation, PacketType, PnSpace,
};

use super::migration::{self, is_probing_packet};
use super::registry::ids;
use super::state::{CloseObservation, SentPacket, StimulusRecord};
use super::tparams::check_transport_params;
use super::{ConnectionState, Datagram, Direction, EventPayload, ProtocolEvent, Role, Status, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketContext {
    pub dir: Direction,
    pub packet_type: PacketType,
    pub space: PnSpace,
    pub packet_number: u64,
    pub src: SocketAddr,
    pub dst: SocketAddr,
    pub event_index: u64,
    /// The carrying packet holds only ACK and PADDING frames.
    pub ack_only: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestOutcome {
    pub events: Vec<ProtocolEvent>,
    pub verdicts: Vec<Verdict>,
}

fn bump(state: &mut ConnectionState) -> u64 {
    let ev = state.next_event;
    state.next_event += 1;
    ev
}

fn is_ack_only(frames: &[Frame]) -> bool {
    frames.iter().any(|f| f.kind() == FrameKind::Ack)
        && frames.iter().all(|f| matches!(f.kind(), FrameKind::Ack | FrameKind::Padding))
}

/// Decodes one datagram, updates `state` and returns the events and verdicts
/// it produced. Undecodable input yields a single CODEC_FAILURE verdict and
/// leaves the state untouched.
pub fn ingest_datagram(state: &mut ConnectionState, dg: &Datagram) -> IngestOutcome {
    let mut ctx = DecodeContext::new(state.short_dcid_len);
    ctx.pinned_version = state.pinned_version;
    let sender = state.endpoint(dg.dir);
    for s in PnSpace::ALL {
        ctx.largest_pn[s.index()] = sender.spaces[s.index()].largest;
    }
    let decoded = match decode_datagram(&dg.bytes, &ctx) {
        Ok(d) => d,
        Err(e) => {
            let mut v = state.violation(ids::CODEC_FAILURE, dg.dir, state.next_event, format!("{} byte datagram: {e}", dg.bytes.len()));
            v.at_ms = dg.at_ms;
            return IngestOutcome { events: Vec::new(), verdicts: vec![v] };
        }
    };

    state.now_ms = state.now_ms.max(dg.at_ms);
    let mut out = IngestOutcome::default();
    let dev = bump(state);
    let event = |index, payload| ProtocolEvent { index, at_ms: dg.at_ms, dir: dg.dir, src: dg.src, dst: dg.dst, payload };
    out.events.push(event(dev, EventPayload::Datagram { len: dg.bytes.len() }));
    state.endpoint_mut(dg.dir).datagrams += 1;
    if dg.dir == Direction::FromPeer {
        state.last_peer_datagram_ms = Some(dg.at_ms);
        if state.stimulus.is_some() {
            state.peer_datagrams_after_stimulus += 1;
        }
    }

    let mut non_probing = false;
    for d in &decoded {
        let p = &d.packet;
        let pev = bump(state);
        out.events.push(event(
            pev,
            EventPayload::Packet {
                packet_type: p.packet_type(),
                space: p.space(),
                packet_number: p.packet_number,
                frames: p.frames.len(),
            },
        ));
        let pctx = PacketContext {
            dir: dg.dir,
            packet_type: p.packet_type(),
            space: p.space(),
            packet_number: p.packet_number,
            src: dg.src,
            dst: dg.dst,
            event_index: pev,
            ack_only: is_ack_only(&p.frames),
        };
        out.verdicts.extend(packet_event(state, d, &pctx));
        for f in &p.frames {
            let fev = bump(state);
            out.events.push(event(fev, EventPayload::Frame { space: p.space(), packet_number: p.packet_number, frame: f.clone() }));
            out.verdicts.extend(frame_event(state, f, &PacketContext { event_index: fev, ..pctx }));
        }
        out.verdicts.extend(migration::track_packet(state, p, dg.dir, dg.src, pev));
        non_probing |= !is_probing_packet(p);
    }
    if non_probing {
        out.verdicts.extend(migration::check_target(state, dg.dir, dg.dst, dev));
    }
    for v in out.verdicts.iter_mut() {
        v.at_ms = dg.at_ms;
    }
    mark_stimulus(state, &mut out.verdicts);
    out
}

fn mark_stimulus(state: &mut ConnectionState, verdicts: &mut [Verdict]) {
    let Some(armed) = state.armed.clone() else { return };
    for v in verdicts.iter_mut() {
        if v.direction == Direction::FromTester && v.status == Status::Violation && v.requirement == armed {
            v.stimulus = true;
            if state.stimulus.is_none() {
                state.stimulus = Some(StimulusRecord { requirement: armed.clone(), event_index: v.event_index, at_ms: v.at_ms });
            }
        }
    }
}

/// Frame types permitted in each packet type.
pub fn frame_allowed(packet_type: PacketType, f: &Frame) -> bool {
    use FrameKind::*;
    match packet_type {
        PacketType::Initial | PacketType::Handshake => match f {
            Frame::ConnectionClose { kind, .. } => matches!(kind, CloseKind::Transport { .. }),
            _ => matches!(f.kind(), Padding | Ping | Ack | Crypto),
        },
        PacketType::ZeroRtt => !matches!(f.kind(), Ack | Crypto | HandshakeDone | NewToken | PathResponse | RetireConnectionId),
        PacketType::Short => true,
    }
}

/// Header-level checks and packet-number bookkeeping. Never touches flow
/// control state.
pub fn packet_event(state: &mut ConnectionState, d: &DecodedPacket, ctx: &PacketContext) -> Vec<Verdict> {
    let p = &d.packet;
    let dir = ctx.dir;
    let ev = ctx.event_index;
    let mut hits: Vec<(&str, String)> = Vec::new();

    for a in &d.annotations {
        match a {
            HeaderAnnotation::FixedBitClear => hits.push((ids::PKT_RESERVED_BITS, "fixed bit is zero".into())),
            HeaderAnnotation::ReservedBitsSet => hits.push((ids::PKT_RESERVED_BITS, "reserved bits set".into())),
            HeaderAnnotation::VersionMismatch(v) => hits.push((ids::PKT_VERSION, format!("version 0x{v:08x}"))),
            HeaderAnnotation::PacketNumberLength(_) => {}
        }
    }
    for (what, cid) in [("destination", Some(p.dcid())), ("source", p.scid())] {
        if let Some(c) = cid {
            if c.len() > crate::wire::MAX_CID_LEN {
                hits.push((ids::CID_LEN_MAX, format!("{what} connection id is {} bytes", c.len())));
            }
        }
    }

    let sender = state.endpoint(dir);
    let receiver = state.endpoint(dir.reverse());
    if let Some(l) = sender.spaces[ctx.space.index()].largest {
        if p.packet_number <= l {
            hits.push((ids::PKT_PN_MONOTONIC, format!("{} packet number {} after {l}", ctx.space, p.packet_number)));
        }
    }
    if let Some(token) = p.token() {
        if !token.is_empty() {
            match sender.role {
                Role::Server => hits.push((ids::INIT_TOKEN_UNEXPECTED, "server Initial carries a token".into())),
                Role::Client if !receiver.tokens_issued.iter().any(|t| t == token) => {
                    hits.push((ids::INIT_TOKEN_UNEXPECTED, format!("{} byte Initial token was never issued", token.len())))
                }
                Role::Client => {}
            }
        }
    }
    for f in &p.frames {
        if f.kind() != FrameKind::Unknown && !frame_allowed(ctx.packet_type, f) {
            hits.push((ids::FRAME_LEVEL_ILLEGAL, format!("{} in {:?} packet", f.kind().name(), ctx.packet_type)));
        }
    }
    if sender.close.is_some() || receiver.close.is_some() {
        let extra = p
            .frames
            .iter()
            .any(|f| !matches!(f.kind(), FrameKind::ConnectionClose | FrameKind::Padding));
        if extra {
            hits.push((ids::DRAIN_AFTER_CLOSE, format!("{} packet {} sent after CONNECTION_CLOSE", ctx.space, p.packet_number)));
        }
    }

    let verdicts = hits.into_iter().map(|(id, d)| state.violation(id, dir, ev, d)).collect();

    if p.packet_type() == PacketType::Initial && state.original_dcid.is_none() && state.endpoint(dir).role == Role::Client {
        state.original_dcid = Some(p.dcid().clone());
    }
    let token_sent = p.token().is_some_and(|t| !t.is_empty());
    let sender = state.endpoint_mut(dir);
    if token_sent {
        sender.sent_token = true;
    }
    if let Some(scid) = p.scid() {
        if sender.first_scid.is_none() {
            sender.first_scid = Some(scid.clone());
            sender.cids.issued.entry(0).or_insert_with(|| scid.clone());
        }
    }
    let ack_eliciting = p.frames.iter().any(|f| f.kind().is_ack_eliciting());
    let ledger = &mut sender.spaces[ctx.space.index()];
    ledger.largest = Some(ledger.largest.map_or(p.packet_number, |l| l.max(p.packet_number)));
    ledger
        .packets
        .entry(p.packet_number)
        .or_insert(SentPacket { ack_eliciting, ack_only: ctx.ack_only });
    verdicts
}

/// Frame-level checks and bookkeeping of flow control, streams, connection
/// IDs, handshake progress and acknowledgements. Never touches packet-number
/// bookkeeping.
pub fn frame_event(state: &mut ConnectionState, f: &Frame, ctx: &PacketContext) -> Vec<Verdict> {
    let dir = ctx.dir;
    let ev = ctx.event_index;
    let mut hits: Vec<(&str, String)> = Vec::new();
    let mut extra: Vec<Verdict> = Vec::new();
    let sender_role = state.endpoint(dir).role;

    match f {
        Frame::Padding { .. } | Frame::Ping | Frame::DataBlocked { .. } | Frame::StreamDataBlocked { .. } => {}
        Frame::Unknown { frame_type, .. } => {
            hits.push((ids::FRAME_TYPE_UNKNOWN, format!("frame type 0x{frame_type:x}")));
        }
        Frame::HandshakeDone => {
            if sender_role == Role::Client {
                hits.push((ids::ROLE_ILLEGAL_FRAME, "client sent HANDSHAKE_DONE".into()));
            } else {
                state.endpoint_mut(dir).handshake_done_sent = true;
            }
        }
        Frame::NewToken { token } => {
            if sender_role == Role::Client {
                hits.push((ids::ROLE_ILLEGAL_FRAME, "client sent NEW_TOKEN".into()));
            }
            if token.is_empty() {
                hits.push((ids::NEW_TOKEN_EMPTY, "NEW_TOKEN with empty token".into()));
            } else {
                state.endpoint_mut(dir).tokens_issued.push(token.clone());
            }
        }
        Frame::Crypto { data, .. } => {
            if let Ok(msgs) = HandshakeMessage::decode_all(data) {
                for m in msgs {
                    match m {
                        HandshakeMessage::ClientHello(tp) | HandshakeMessage::ServerHello(tp) => {
                            extra.extend(check_transport_params(state, &tp, dir));
                            let sender = state.endpoint_mut(dir);
                            sender.hello_sent = true;
                            sender.apply_own_params(&tp);
                        }
                        HandshakeMessage::Finished => state.endpoint_mut(dir).finished_sent = true,
                        HandshakeMessage::Opaque { .. } => {}
                    }
                }
            }
        }
        Frame::ConnectionClose { kind, error_code, .. } => {
            let obs = CloseObservation {
                space: ctx.space,
                packet_number: ctx.packet_number,
                kind: *kind,
                error_code: *error_code,
                at_ms: state.now_ms,
                event_index: ev,
                sender_finished: state.endpoint(dir).finished_sent,
                sender_confirmed: state.confirmed(dir),
            };
            let token_rejected = sender_role == Role::Server
                && state.endpoint(dir.reverse()).sent_token
                && matches!(kind, CloseKind::Transport { .. })
                && matches!(*error_code, error_codes::INVALID_TOKEN | error_codes::PROTOCOL_VIOLATION);
            if token_rejected {
                state.is_invalid_token = true;
            }
            let sender = state.endpoint_mut(dir);
            if sender.close.is_none() {
                sender.close = Some(obs);
            }
        }
        Frame::Ack { .. } => {
            let si = ctx.space.index();
            let receiver = state.endpoint(dir.reverse());
            let sent = &receiver.spaces[si].packets;
            let mut newly = Vec::new();
            for (lo, hi) in f.ack_ranges().unwrap_or_default() {
                let present = sent.range(lo..=hi).count() as u64;
                if present != hi - lo + 1 {
                    hits.push((ids::ACK_UNSENT_PN, format!("{} ACK covers {lo}..={hi}, only {present} sent", ctx.space)));
                }
                newly.extend(sent.range(lo..=hi).map(|(pn, _)| *pn).filter(|pn| !receiver.acked[si].contains(pn)));
            }
            if ctx.ack_only && !newly.is_empty() && newly.iter().all(|pn| sent[pn].ack_only) {
                hits.push((ids::ACK_OF_ACK, format!("ACK-only packet acknowledges only ACK-only packets {newly:?}")));
            }
            state.endpoint_mut(dir.reverse()).acked[si].extend(newly);
        }
        Frame::Stream { stream_id, offset, fin, data } => {
            stream_frame(state, dir, *stream_id, *offset, data.len() as u64, *fin, &mut hits);
        }
        Frame::ResetStream { stream_id, final_size, .. } => {
            reset_stream(state, dir, *stream_id, *final_size, &mut hits);
        }
        Frame::StopSending { stream_id, .. } => {
            state.endpoint_mut(dir).flow.stop_sending.insert(*stream_id);
        }
        Frame::MaxData { max } => {
            let flow = &mut state.endpoint_mut(dir).flow;
            flow.max_data = flow.max_data.max(*max);
        }
        Frame::MaxStreamData { stream_id, max } => {
            let sender = state.endpoint_mut(dir);
            let current = sender.stream_data_limit(*stream_id);
            sender.flow.max_stream_data.insert(*stream_id, current.max(*max));
        }
        Frame::MaxStreams { bidi, max } => {
            if *max > MAX_STREAMS_LIMIT {
                hits.push((ids::MAX_STREAMS_RANGE, format!("MAX_STREAMS {max} exceeds 2^60")));
            } else {
                let slot = &mut state.endpoint_mut(dir).flow.max_streams[usize::from(!*bidi)];
                *slot = (*slot).max(*max);
            }
        }
        Frame::StreamsBlocked { limit, .. } => {
            if *limit > MAX_STREAMS_LIMIT {
                hits.push((ids::STREAMS_BLOCKED_RANGE, format!("STREAMS_BLOCKED {limit} exceeds 2^60")));
            }
        }
        Frame::NewConnectionId { sequence, retire_prior_to, cid, .. } => {
            if cid.is_empty() || cid.len() > 20 {
                hits.push((ids::NCID_LEN, format!("NEW_CONNECTION_ID length {}", cid.len())));
            } else if retire_prior_to > sequence {
                hits.push((ids::NCID_RTP, format!("retire_prior_to {retire_prior_to} > sequence {sequence}")));
            } else {
                let limit = state.endpoint(dir.reverse()).tp.as_ref().map_or(2, |t| t.active_connection_id_limit());
                let cids = &mut state.endpoint_mut(dir).cids;
                match cids.issued.get(sequence) {
                    Some(existing) if existing != cid => hits.push((
                        ids::NCID_SEQ_CONFLICT,
                        format!("sequence {sequence} reissued as {cid}, was {existing}"),
                    )),
                    Some(_) => {}
                    None => {
                        cids.issued.insert(*sequence, cid.clone());
                        cids.retire_prior_to = cids.retire_prior_to.max(*retire_prior_to);
                        let active = cids.active() as u64;
                        if active > limit {
                            hits.push((ids::CID_LIMIT, format!("{active} active connection ids, limit {limit}")));
                        }
                    }
                }
            }
        }
        Frame::RetireConnectionId { sequence } => {
            let cids = &mut state.endpoint_mut(dir.reverse()).cids;
            if *sequence >= cids.next_sequence() {
                hits.push((ids::RCID_UNKNOWN, format!("retired sequence {sequence} was never issued")));
            } else {
                cids.retired.insert(*sequence);
            }
        }
        Frame::PathChallenge { data } => {
            state.endpoint_mut(dir).challenges.push((*data, ctx.dst));
            migration::note_challenge(state, dir, ctx.dst);
        }
        Frame::PathResponse { data } => {
            if !state.endpoint(dir.reverse()).challenges.iter().any(|(d, _)| d == data) {
                hits.push((ids::PATH_RESPONSE_UNSOLICITED, format!("PATH_RESPONSE {} matches no challenge", hex::encode(data))));
            }
            state.endpoint_mut(dir).responses.push(*data);
        }
    }

    let mut out: Vec<Verdict> = hits.into_iter().map(|(id, d)| state.violation(id, dir, ev, d)).collect();
    for mut v in extra {
        v.event_index = ev;
        out.push(v);
    }
    out
}

fn stream_frame(state: &mut ConnectionState, dir: Direction, id: u64, offset: u64, len: u64, fin: bool, hits: &mut Vec<(&str, String)>) {
    let end = match offset.checked_add(len) {
        Some(e) if e < MAX_STREAM_SIZE => e,
        _ => {
            hits.push((ids::STREAM_OFFSET_MAX, format!("stream {id} offset {offset} + {len} reaches 2^62")));
            return;
        }
    };
    if !stream_usable(state, dir, id, hits) {
        return;
    }
    let (sender, receiver) = state.pair_mut(dir);
    let limit = receiver.stream_data_limit(id);
    if end > limit {
        hits.push((ids::FC_MAX_STREAM_DATA, format!("stream {id} reaches {end}, limit {limit}")));
    }
    let max_data = receiver.flow.max_data;
    let flow = &mut sender.flow;
    let st = flow.sent.entry(id).or_default();
    match st.final_size {
        Some(fs) if end > fs || (fin && end != fs) => {
            hits.push((ids::FINAL_SIZE, format!("stream {id} data to {end} against final size {fs}")))
        }
        None if fin && end < st.max_end => {
            hits.push((ids::FINAL_SIZE, format!("stream {id} final size {end} below {} already sent", st.max_end)))
        }
        _ => {}
    }
    let new = end.saturating_sub(st.max_end);
    st.max_end = st.max_end.max(end);
    if fin && st.final_size.is_none() {
        st.final_size = Some(end);
    }
    flow.data_sent += new;
    if new > 0 && flow.data_sent > max_data {
        hits.push((ids::FC_MAX_DATA, format!("{} bytes sent, max_data {max_data}", flow.data_sent)));
    }
}

fn reset_stream(state: &mut ConnectionState, dir: Direction, id: u64, final_size: u64, hits: &mut Vec<(&str, String)>) {
    if !stream_usable(state, dir, id, hits) {
        return;
    }
    let (sender, receiver) = state.pair_mut(dir);
    let max_data = receiver.flow.max_data;
    let flow = &mut sender.flow;
    let st = flow.sent.entry(id).or_default();
    if final_size < st.max_end {
        hits.push((ids::FINAL_SIZE, format!("stream {id} reset at {final_size} below {} already sent", st.max_end)));
    }
    if let Some(fs) = st.final_size {
        if fs != final_size {
            hits.push((ids::FINAL_SIZE, format!("stream {id} reset at {final_size}, final size was {fs}")));
        }
    }
    let new = final_size.saturating_sub(st.max_end);
    st.max_end = st.max_end.max(final_size);
    st.final_size.get_or_insert(final_size);
    st.reset = true;
    flow.data_sent += new;
    if new > 0 && flow.data_sent > max_data {
        hits.push((ids::FC_MAX_DATA, format!("{} bytes sent, max_data {max_data}", flow.data_sent)));
    }
}

/// Stream-direction and stream-count checks shared by STREAM and RESET_STREAM.
fn stream_usable(state: &ConnectionState, dir: Direction, id: u64, hits: &mut Vec<(&str, String)>) -> bool {
    let sender = state.endpoint(dir);
    let receiver = state.endpoint(dir.reverse());
    let uni = id & 2 != 0;
    if !sender.initiated(id) {
        if uni {
            hits.push((ids::STREAM_STATE, format!("{} sent on receive-only stream {id}", sender.role)));
            return false;
        }
        return true;
    }
    let limit = receiver.flow.max_streams[usize::from(uni)];
    if id >> 2 >= limit {
        hits.push((ids::STREAM_LIMIT, format!("stream {id} opened, limit {limit} {} streams", if uni { "uni" } else { "bidi" })));
        return false;
    }
    true
}

/// Notes that the caller stopped waiting at `at_ms`.
pub fn timeout_event(state: &mut ConnectionState, at_ms: u64, local: SocketAddr, remote: SocketAddr) -> ProtocolEvent {
    state.now_ms = state.now_ms.max(at_ms);
    let index = bump(state);
    ProtocolEvent { index, at_ms, dir: Direction::FromTester, src: local, dst: remote, payload: EventPayload::Timeout }
}
