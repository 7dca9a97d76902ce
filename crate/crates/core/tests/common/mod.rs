#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::collection::{btree_set, vec};
use proptest::prelude::*;
use quicheck::wire::frame::{EcnCounts, MAX_STREAM_SIZE};
use quicheck::wire::varint::MAX_VARINT;
use quicheck::wire::{CloseKind, ConnectionId, Frame, Header, Packet, QUIC_VERSION_DRAFT29};

pub const SHORT_DCID_LEN: usize = 8;

/// Values spread over all four varint length classes.
pub fn varint() -> impl Strategy<Value = u64> {
    prop_oneof![0..64u64, 64..16_384u64, 16_384..(1u64 << 30), (1u64 << 30)..=MAX_VARINT]
}

fn bytes(max: usize) -> impl Strategy<Value = Vec<u8>> {
    vec(any::<u8>(), 0..=max)
}

fn cid(min: usize, max: usize) -> impl Strategy<Value = ConnectionId> {
    vec(any::<u8>(), min..=max).prop_map(|b| ConnectionId::new(&b).unwrap())
}

fn ack() -> impl Strategy<Value = Frame> {
    let base = prop_oneof![Just(0u64), 0..1_000_000u64, (1u64 << 40)..(1u64 << 41)];
    let ecn = proptest::option::of((varint(), varint(), varint()).prop_map(|(ect0, ect1, ce)| EcnCounts { ect0, ect1, ce }));
    (base, btree_set(0..200u64, 1..24), varint(), ecn).prop_map(|(base, offs, delay, ecn)| {
        let pns: BTreeSet<u64> = offs.into_iter().map(|o| base + o).collect();
        let mut f = Frame::ack_for(&pns, delay).expect("non-empty set");
        if let Frame::Ack { ecn: e, .. } = &mut f {
            *e = ecn;
        }
        f
    })
}

pub fn frame() -> impl Strategy<Value = Frame> {
    prop_oneof![
        (1..64usize).prop_map(|len| Frame::Padding { len }),
        Just(Frame::Ping),
        ack(),
        (varint(), varint(), varint()).prop_map(|(stream_id, error_code, final_size)| Frame::ResetStream { stream_id, error_code, final_size }),
        (varint(), varint()).prop_map(|(stream_id, error_code)| Frame::StopSending { stream_id, error_code }),
        (varint(), bytes(64)).prop_map(|(offset, data)| Frame::Crypto { offset, data }),
        bytes(64).prop_map(|token| Frame::NewToken { token }),
        (varint(), 0..MAX_STREAM_SIZE, any::<bool>(), bytes(64))
            .prop_map(|(stream_id, offset, fin, data)| Frame::Stream { stream_id, offset, fin, data }),
        varint().prop_map(|max| Frame::MaxData { max }),
        (varint(), varint()).prop_map(|(stream_id, max)| Frame::MaxStreamData { stream_id, max }),
        (any::<bool>(), varint()).prop_map(|(bidi, max)| Frame::MaxStreams { bidi, max }),
        varint().prop_map(|limit| Frame::DataBlocked { limit }),
        (varint(), varint()).prop_map(|(stream_id, limit)| Frame::StreamDataBlocked { stream_id, limit }),
        (any::<bool>(), varint()).prop_map(|(bidi, limit)| Frame::StreamsBlocked { bidi, limit }),
        (varint(), varint(), cid(0, 16), any::<[u8; 16]>())
            .prop_map(|(sequence, retire_prior_to, cid, reset_token)| Frame::NewConnectionId { sequence, retire_prior_to, cid, reset_token }),
        varint().prop_map(|sequence| Frame::RetireConnectionId { sequence }),
        any::<[u8; 8]>().prop_map(|data| Frame::PathChallenge { data }),
        any::<[u8; 8]>().prop_map(|data| Frame::PathResponse { data }),
        (proptest::option::of(varint()), varint(), bytes(32)).prop_map(|(ft, error_code, reason)| Frame::ConnectionClose {
            kind: ft.map_or(CloseKind::Application, |frame_type| CloseKind::Transport { frame_type }),
            error_code,
            reason,
        }),
        Just(Frame::HandshakeDone),
        (0x1fu64..=MAX_VARINT, bytes(32)).prop_map(|(frame_type, body)| Frame::Unknown { frame_type, body }),
    ]
}

/// Adjacent PADDING frames decode as one run, so they are merged.
fn merge_padding(frames: Vec<Frame>) -> Vec<Frame> {
    let mut out: Vec<Frame> = Vec::with_capacity(frames.len());
    for f in frames {
        match (out.last_mut(), &f) {
            (Some(Frame::Padding { len: a }), Frame::Padding { len: b }) => *a += b,
            _ => out.push(f),
        }
    }
    out
}

pub fn header() -> impl Strategy<Value = Header> {
    let version = prop_oneof![3 => Just(QUIC_VERSION_DRAFT29), 1 => 1..=u32::MAX];
    prop_oneof![
        (version.clone(), cid(0, 16), cid(0, 16), bytes(24)).prop_map(|(version, dcid, scid, token)| Header::Initial { version, dcid, scid, token }),
        (version.clone(), cid(0, 16), cid(0, 16)).prop_map(|(version, dcid, scid)| Header::ZeroRtt { version, dcid, scid }),
        (version, cid(0, 16), cid(0, 16)).prop_map(|(version, dcid, scid)| Header::Handshake { version, dcid, scid }),
        cid(SHORT_DCID_LEN, SHORT_DCID_LEN).prop_map(|dcid| Header::Short { dcid }),
    ]
}

pub fn packet() -> impl Strategy<Value = Packet> {
    (header(), 0..(1u64 << 40), vec(frame(), 1..8))
        .prop_map(|(header, packet_number, frames)| Packet { header, packet_number, frames: merge_padding(frames) })
}
