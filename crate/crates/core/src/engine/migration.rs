//! Connection migration: address tracking, the post-migration target address
//! and path validation.

use std::net::SocketAddr;

use crate::wire::{Packet, PnSpace};

use super::registry::ids;
use super::state::PendingValidation;
use super::{AddressPolicy, ConnectionState, Direction, EngineError, Verdict};

/// A packet is probing when every frame in it is a probing frame.
pub fn is_probing_packet(p: &Packet) -> bool {
    p.frames.iter().all(|f| f.kind().is_probing())
}

/// Address packets sent in `dir` should go to: the source of the
/// highest-numbered non-probing packet received from the other endpoint.
///
/// Under [`AddressPolicy::AllLevels`] candidates from every space compete on
/// packet number, ties going to the later space.
pub fn expected_address(state: &ConnectionState, dir: Direction, policy: AddressPolicy) -> Result<SocketAddr, EngineError> {
    let other = state.endpoint(dir.reverse());
    let best = match policy {
        AddressPolicy::AppLevelOnly => other.origins[PnSpace::Application.index()]
            .iter()
            .next_back()
            .map(|(_, a)| *a),
        AddressPolicy::AllLevels => PnSpace::ALL
            .iter()
            .filter_map(|s| other.origins[s.index()].iter().next_back().map(|(pn, a)| ((*pn, s.index()), *a)))
            .max_by_key(|(k, _)| *k)
            .map(|(_, a)| a),
    };
    best.ok_or(EngineError::UndefinedAddress(other.role))
}

/// Address bookkeeping for one packet sent in `dir` from `src`. Flags
/// migrations that happen too early or against the peer's wishes and opens a
/// path validation obligation for the receiver.
pub(crate) fn track_packet(state: &mut ConnectionState, p: &Packet, dir: Direction, src: SocketAddr, ev: u64) -> Vec<Verdict> {
    let mut out = Vec::new();
    if is_probing_packet(p) {
        return out;
    }
    let confirmed = state.confirmed(dir);
    let migration_disabled = state
        .endpoint(dir.reverse())
        .tp
        .as_ref()
        .is_some_and(|t| t.disable_active_migration());
    let sender = state.endpoint_mut(dir);
    sender.origins[p.space().index()].insert(p.packet_number, src);
    let migrated = match sender.address {
        Some(a) => a != src && !sender.addresses.contains(&src),
        None => false,
    };
    if !sender.addresses.contains(&src) {
        sender.addresses.push(src);
    }
    sender.address = Some(src);
    if migrated {
        if !confirmed {
            out.push(state.violation(ids::MIG_BEFORE_CONFIRMED, dir, ev, format!("migrated to {src} before handshake confirmation")));
        }
        if migration_disabled {
            out.push(state.violation(ids::MIG_DISABLED, dir, ev, format!("migrated to {src} although the peer disabled active migration")));
        }
        state.validations.push(PendingValidation { validator: dir.reverse(), address: src, since_event: ev, satisfied: false });
    }
    out
}

/// A PATH_CHALLENGE sent in `dir` towards `dst` satisfies any open
/// validation of that address.
pub(crate) fn note_challenge(state: &mut ConnectionState, dir: Direction, dst: SocketAddr) {
    for v in state.validations.iter_mut() {
        if v.validator == dir && v.address == dst {
            v.satisfied = true;
        }
    }
}

/// Checks the destination of a datagram carrying non-probing packets.
pub(crate) fn check_target(state: &ConnectionState, dir: Direction, dst: SocketAddr, ev: u64) -> Option<Verdict> {
    let expected = expected_address(state, dir, state.policy).ok()?;
    (expected != dst).then(|| {
        state.violation(ids::MIG_ADDR_TARGET, dir, ev, format!("non-probing packet sent to {dst}, expected {expected} ({:?})", state.policy))
    })
}

/// Open path validations at the end of an iteration.
pub fn check_path_validation(state: &ConnectionState) -> Vec<Verdict> {
    state
        .validations
        .iter()
        .filter(|v| !v.satisfied)
        .map(|v| {
            state.violation(
                ids::MIG_NO_PATH_VALIDATION,
                v.validator,
                v.since_event,
                format!("no PATH_CHALLENGE sent to migrated address {}", v.address),
            )
        })
        .collect()
}
