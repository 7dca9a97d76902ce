//! Constrained random generation of tester traffic.
//!
//! Frames are drawn from a per-test [`GenerationPlan`]: a frame-kind alphabet
//! with weights, renormalised at every draw over the kinds that are legal in
//! the current [`ConnectionState`]. Each legal kind is then synthesised with
//! field values the monitor would accept. At most one [`Mutation`] per test
//! turns one output into a deliberate violation.

pub mod mutation;
pub mod synth;

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::Role;
use crate::wire::transport_params::ids as tp;
use crate::wire::{ConnectionId, FrameKind, TransportParameterSet};

pub use mutation::{apply_mutation, mutate_params, Mutation};
pub use synth::{
    app_ready, build_app_packet, close_packet, handshake_flight, has_work, is_legal, next_request, next_response_chunk,
    owed_ack, packet, pending_path_challenge, pending_path_response, pending_reset, remote_cid, request_bytes, response_len,
    synthesize_frame,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationPlan {
    pub allowed: Vec<FrameKind>,
    /// Relative weights; kinds not listed weigh 1.
    pub weights: BTreeMap<FrameKind, u32>,
    pub mutation: Option<Mutation>,
    /// Draws per frame slot before giving up on an empty legal set.
    pub max_retries: u32,
}

impl GenerationPlan {
    pub fn new(allowed: Vec<FrameKind>) -> Self {
        GenerationPlan { allowed, weights: BTreeMap::new(), mutation: None, max_retries: 64 }
    }

    pub fn weight(&self, k: FrameKind) -> u32 {
        self.weights.get(&k).copied().unwrap_or(1)
    }

    pub fn allows(&self, k: FrameKind) -> bool {
        self.allowed.contains(&k)
    }
}

/// Draws a frame kind from the plan, restricted to `legal`. `None` when no
/// allowed kind is legal.
pub fn sample_frame_kind<R: Rng>(plan: &GenerationPlan, legal: &[FrameKind], rng: &mut R) -> Option<FrameKind> {
    let choices: Vec<(FrameKind, u32)> = plan
        .allowed
        .iter()
        .filter(|k| legal.contains(k))
        .map(|k| (*k, plan.weight(*k)))
        .filter(|(_, w)| *w > 0)
        .collect();
    if choices.is_empty() {
        return None;
    }
    let dist = WeightedIndex::new(choices.iter().map(|(_, w)| *w)).ok()?;
    Some(choices[dist.sample(rng)].0)
}

pub fn random_cid<R: Rng>(rng: &mut R) -> ConnectionId {
    ConnectionId::new(&rng.gen::<[u8; 8]>()).expect("8 byte cid")
}

/// Greased transport parameter id (31 * N + 27) used for unknown-parameter tests.
pub const UNKNOWN_TP_ID: u64 = 31 * 137 + 27;

/// Static description of the endpoint being driven.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalProfile {
    pub role: Role,
    pub scid: ConnectionId,
    /// Destination ID of the first client Initial.
    pub initial_dcid: ConnectionId,
    /// Parameters without the connection ID entries, which are filled in at
    /// hello time.
    pub params: TransportParameterSet,
    pub unknown_tp: bool,
    /// Requests a client issues.
    pub requests: u32,
}

impl LocalProfile {
    pub fn new<R: Rng>(role: Role, requests: u32, active_cid_limit: u64, rng: &mut R) -> Self {
        LocalProfile {
            role,
            scid: random_cid(rng),
            initial_dcid: random_cid(rng),
            params: default_params(active_cid_limit),
            unknown_tp: false,
            requests,
        }
    }
}

pub fn default_params(active_cid_limit: u64) -> TransportParameterSet {
    let mut s = TransportParameterSet::new();
    s.push_int(tp::MAX_IDLE_TIMEOUT, 30_000)
        .push_int(tp::MAX_UDP_PAYLOAD_SIZE, 1452)
        .push_int(tp::INITIAL_MAX_DATA, 1 << 20)
        .push_int(tp::INITIAL_MAX_STREAM_DATA_BIDI_LOCAL, 1 << 18)
        .push_int(tp::INITIAL_MAX_STREAM_DATA_BIDI_REMOTE, 1 << 18)
        .push_int(tp::INITIAL_MAX_STREAM_DATA_UNI, 1 << 18)
        .push_int(tp::INITIAL_MAX_STREAMS_BIDI, 100)
        .push_int(tp::INITIAL_MAX_STREAMS_UNI, 100)
        .push_int(tp::ACK_DELAY_EXPONENT, 3)
        .push_int(tp::MAX_ACK_DELAY, 25)
        .push_int(tp::ACTIVE_CONNECTION_ID_LIMIT, active_cid_limit);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn renormalises_over_legal_subset() {
        let mut plan = GenerationPlan::new(vec![FrameKind::Stream, FrameKind::Ack, FrameKind::PathResponse]);
        plan.weights.insert(FrameKind::PathResponse, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let k = sample_frame_kind(&plan, &[FrameKind::Ack, FrameKind::Stream], &mut rng).unwrap();
            assert_ne!(k, FrameKind::PathResponse);
        }
        assert_eq!(sample_frame_kind(&plan, &[FrameKind::Crypto], &mut rng), None);
    }

    #[test]
    fn same_seed_same_draws() {
        let plan = GenerationPlan::new(FrameKind::ALL.to_vec());
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_frame_kind(&plan, &FrameKind::ALL, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }
}
