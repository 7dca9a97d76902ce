//! Targeted mutations: the single deliberate violation a test commits.

use std::fmt;
use std::net::{Ipv4Addr, Ipv6Addr};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{ids, ConnectionState, Role};
use crate::wire::frame::{is_assigned, MAX_STREAMS_LIMIT, MAX_STREAM_SIZE};
use crate::wire::transport_params::ids as tp;
use crate::wire::{ConnectionId, Frame, PreferredAddress, TransportParameterSet};

use super::random_cid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    /// Non-empty token in the client's first Initial.
    InitialToken,
    /// NEW_TOKEN sent by a client.
    ClientNewToken,
    /// HANDSHAKE_DONE sent by a client.
    ClientHandshakeDone,
    /// NEW_TOKEN with a zero-length token.
    EmptyNewToken,
    NewCidZeroLength,
    NewCidRetireGreater,
    /// Reuses an issued sequence number with a different connection ID.
    NewCidSeqConflict,
    RetireUnknownSeq,
    StreamOffsetOverflow,
    StreamIdBeyondLimit,
    MaxStreamsTooLarge,
    StreamsBlockedTooLarge,
    UnknownFrameType,
    DuplicateTp,
    InvalidAckDelayExponent,
    ActiveCidLimitTooLow,
    MissingIcid,
    MissingOcid,
    PrefAddrZeroCid,
}

impl Mutation {
    pub const ALL: [Mutation; 19] = [
        Mutation::InitialToken,
        Mutation::ClientNewToken,
        Mutation::ClientHandshakeDone,
        Mutation::EmptyNewToken,
        Mutation::NewCidZeroLength,
        Mutation::NewCidRetireGreater,
        Mutation::NewCidSeqConflict,
        Mutation::RetireUnknownSeq,
        Mutation::StreamOffsetOverflow,
        Mutation::StreamIdBeyondLimit,
        Mutation::MaxStreamsTooLarge,
        Mutation::StreamsBlockedTooLarge,
        Mutation::UnknownFrameType,
        Mutation::DuplicateTp,
        Mutation::InvalidAckDelayExponent,
        Mutation::ActiveCidLimitTooLow,
        Mutation::MissingIcid,
        Mutation::MissingOcid,
        Mutation::PrefAddrZeroCid,
    ];

    /// Requirement the mutated output violates.
    pub fn target(self) -> &'static str {
        match self {
            Mutation::InitialToken => ids::INIT_TOKEN_UNEXPECTED,
            Mutation::ClientNewToken | Mutation::ClientHandshakeDone => ids::ROLE_ILLEGAL_FRAME,
            Mutation::EmptyNewToken => ids::NEW_TOKEN_EMPTY,
            Mutation::NewCidZeroLength => ids::NCID_LEN,
            Mutation::NewCidRetireGreater => ids::NCID_RTP,
            Mutation::NewCidSeqConflict => ids::NCID_SEQ_CONFLICT,
            Mutation::RetireUnknownSeq => ids::RCID_UNKNOWN,
            Mutation::StreamOffsetOverflow => ids::STREAM_OFFSET_MAX,
            Mutation::StreamIdBeyondLimit => ids::STREAM_LIMIT,
            Mutation::MaxStreamsTooLarge => ids::MAX_STREAMS_RANGE,
            Mutation::StreamsBlockedTooLarge => ids::STREAMS_BLOCKED_RANGE,
            Mutation::UnknownFrameType => ids::FRAME_TYPE_UNKNOWN,
            Mutation::DuplicateTp => ids::TP_DUP,
            Mutation::InvalidAckDelayExponent | Mutation::ActiveCidLimitTooLow => ids::TP_INVALID_VALUE,
            Mutation::MissingIcid => ids::TP_MISSING_ICID,
            Mutation::MissingOcid => ids::TP_MISSING_OCID,
            Mutation::PrefAddrZeroCid => ids::TP_PREFADD_CID,
        }
    }

    /// Role the tester must play for the mutation to make sense.
    pub fn tester_role(self) -> Option<Role> {
        match self {
            Mutation::InitialToken | Mutation::ClientNewToken | Mutation::ClientHandshakeDone => Some(Role::Client),
            Mutation::EmptyNewToken | Mutation::MissingOcid | Mutation::PrefAddrZeroCid => Some(Role::Server),
            _ => None,
        }
    }

    /// Applied to the tester's transport parameters rather than to a frame.
    pub fn on_params(self) -> bool {
        matches!(
            self,
            Mutation::DuplicateTp
                | Mutation::InvalidAckDelayExponent
                | Mutation::ActiveCidLimitTooLow
                | Mutation::MissingIcid
                | Mutation::MissingOcid
                | Mutation::PrefAddrZeroCid
        )
    }

    pub fn name(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Applies a parameter mutation in place. Returns false for frame mutations.
pub fn mutate_params<R: Rng>(m: Mutation, set: &mut TransportParameterSet, rng: &mut R) -> bool {
    match m {
        Mutation::DuplicateTp => {
            let v = set.ack_delay_exponent();
            if !set.contains(tp::ACK_DELAY_EXPONENT) {
                set.push_int(tp::ACK_DELAY_EXPONENT, v);
            }
            set.push_int(tp::ACK_DELAY_EXPONENT, v);
        }
        Mutation::InvalidAckDelayExponent => {
            set.set_int(tp::ACK_DELAY_EXPONENT, rng.gen_range(21..=63));
        }
        Mutation::ActiveCidLimitTooLow => {
            set.set_int(tp::ACTIVE_CONNECTION_ID_LIMIT, rng.gen_range(0..=1));
        }
        Mutation::MissingIcid => {
            set.remove(tp::INITIAL_SOURCE_CONNECTION_ID);
        }
        Mutation::MissingOcid => {
            set.remove(tp::ORIGINAL_DESTINATION_CONNECTION_ID);
        }
        Mutation::PrefAddrZeroCid => {
            let pa = PreferredAddress {
                ip4: Ipv4Addr::LOCALHOST,
                port4: rng.gen_range(1024..=u16::MAX),
                ip6: Ipv6Addr::LOCALHOST,
                port6: rng.gen_range(1024..=u16::MAX),
                cid: ConnectionId::empty(),
                reset_token: rng.gen(),
            };
            set.remove(tp::PREFERRED_ADDRESS);
            set.push_raw(tp::PREFERRED_ADDRESS, pa.encode().expect("empty cid encodes"));
        }
        _ => return false,
    }
    true
}

/// Builds the mutated frame for the tester's next 1-RTT packet, or `None`
/// when the mutation does not apply in the current state.
pub fn apply_mutation<R: Rng>(m: Mutation, state: &ConnectionState, rng: &mut R) -> Option<Frame> {
    if m.on_params() || m == Mutation::InitialToken {
        return None;
    }
    if m.tester_role().is_some_and(|r| r != state.role) {
        return None;
    }
    let me = &state.tester;
    let peer = &state.peer;
    let bit = state.role.stream_initiator_bit();
    Some(match m {
        Mutation::ClientNewToken => Frame::NewToken { token: rng.gen::<[u8; 16]>().to_vec() },
        Mutation::ClientHandshakeDone => Frame::HandshakeDone,
        Mutation::EmptyNewToken => Frame::NewToken { token: Vec::new() },
        Mutation::NewCidZeroLength => Frame::NewConnectionId {
            sequence: me.cids.next_sequence(),
            retire_prior_to: me.cids.retire_prior_to,
            cid: ConnectionId::empty(),
            reset_token: rng.gen(),
        },
        Mutation::NewCidRetireGreater => {
            let seq = me.cids.next_sequence();
            Frame::NewConnectionId {
                sequence: seq,
                retire_prior_to: seq + rng.gen_range(1..=8),
                cid: random_cid(rng),
                reset_token: rng.gen(),
            }
        }
        Mutation::NewCidSeqConflict => {
            let (&seq, existing) = me.cids.issued.iter().next_back()?;
            let mut cid = random_cid(rng);
            while &cid == existing {
                cid = random_cid(rng);
            }
            Frame::NewConnectionId { sequence: seq, retire_prior_to: me.cids.retire_prior_to.min(seq), cid, reset_token: rng.gen() }
        }
        Mutation::RetireUnknownSeq => Frame::RetireConnectionId { sequence: peer.cids.next_sequence() + rng.gen_range(0..=16) },
        Mutation::StreamOffsetOverflow => {
            let len = rng.gen_range(1..=8usize);
            Frame::Stream {
                stream_id: bit,
                offset: MAX_STREAM_SIZE - rng.gen_range(1..=len as u64),
                fin: false,
                data: vec![0x5a; len],
            }
        }
        Mutation::StreamIdBeyondLimit => {
            let limit = peer.flow.max_streams[0];
            let index = limit + rng.gen_range(0..4);
            Frame::Stream { stream_id: index * 4 + bit, offset: 0, fin: false, data: b"x".to_vec() }
        }
        Mutation::MaxStreamsTooLarge => Frame::MaxStreams { bidi: rng.gen(), max: MAX_STREAMS_LIMIT + rng.gen_range(1..=1 << 20) },
        Mutation::StreamsBlockedTooLarge => {
            Frame::StreamsBlocked { bidi: rng.gen(), limit: MAX_STREAMS_LIMIT + rng.gen_range(1..=1 << 20) }
        }
        Mutation::UnknownFrameType => {
            let mut t = rng.gen_range(0x1f..=0x3fff);
            while is_assigned(t) {
                t += 1;
            }
            let len = rng.gen_range(0..=8);
            Frame::Unknown { frame_type: t, body: (0..len).map(|_| rng.gen()).collect() }
        }
        _ => return None,
    })
}
