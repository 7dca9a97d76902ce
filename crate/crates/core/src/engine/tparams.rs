//! Transport parameter validity.

use crate::wire::transport_params::ids as tp;
use crate::wire::TransportParameterSet;

use super::registry::ids;
use super::{ConnectionState, Direction, Role, Verdict};

/// Judges the parameters carried in a hello sent in `dir`.
pub fn check_transport_params(state: &ConnectionState, set: &TransportParameterSet, dir: Direction) -> Vec<Verdict> {
    let ev = state.next_event.saturating_sub(1);
    let role = state.endpoint(dir).role;
    let mut out = Vec::new();
    let mut bad = |id: &str, detail: String| out.push(state.violation(id, dir, ev, detail));

    for dup in set.duplicate_ids() {
        bad(ids::TP_DUP, format!("transport parameter 0x{dup:x} appears {} times", set.count(dup)));
    }

    for (id, raw) in &set.entries {
        if tp::is_integer(*id) {
            if let Some(Err(())) = set.int(*id) {
                bad(ids::TP_INVALID_VALUE, format!("transport parameter 0x{id:x} is not a single varint ({} bytes)", raw.len()));
            }
        }
        if matches!(*id, tp::DISABLE_ACTIVE_MIGRATION) && !raw.is_empty() {
            bad(ids::TP_INVALID_VALUE, "disable_active_migration carries a value".into());
        }
        if matches!(*id, tp::STATELESS_RESET_TOKEN) && raw.len() != 16 {
            bad(ids::TP_INVALID_VALUE, format!("stateless_reset_token is {} bytes", raw.len()));
        }
    }

    let int = |id| match set.int(id) {
        Some(Ok(v)) => Some(v),
        _ => None,
    };
    if let Some(v) = int(tp::ACK_DELAY_EXPONENT) {
        if v > 20 {
            bad(ids::TP_INVALID_VALUE, format!("ack_delay_exponent {v} exceeds 20"));
        }
    }
    if let Some(v) = int(tp::MAX_ACK_DELAY) {
        if v >= 1 << 14 {
            bad(ids::TP_INVALID_VALUE, format!("max_ack_delay {v} is 2^14 or more"));
        }
    }
    if let Some(v) = int(tp::ACTIVE_CONNECTION_ID_LIMIT) {
        if v < 2 {
            bad(ids::TP_INVALID_VALUE, format!("active_connection_id_limit {v} is below 2"));
        }
    }
    if let Some(v) = int(tp::MAX_UDP_PAYLOAD_SIZE) {
        if v < 1200 {
            bad(ids::TP_INVALID_VALUE, format!("max_udp_payload_size {v} is below 1200"));
        }
    }
    for id in [tp::INITIAL_MAX_STREAMS_BIDI, tp::INITIAL_MAX_STREAMS_UNI] {
        if let Some(v) = int(id) {
            if v > 1 << 60 {
                bad(ids::TP_INVALID_VALUE, format!("initial_max_streams 0x{id:x} = {v} exceeds 2^60"));
            }
        }
    }

    if !set.contains(tp::INITIAL_SOURCE_CONNECTION_ID) {
        bad(ids::TP_MISSING_ICID, "initial_source_connection_id absent".into());
    }

    match role {
        Role::Server => {
            if !set.contains(tp::ORIGINAL_DESTINATION_CONNECTION_ID) {
                bad(ids::TP_MISSING_OCID, "original_destination_connection_id absent".into());
            }
            match set.preferred_address() {
                Some(Err(e)) => bad(ids::TP_INVALID_VALUE, format!("preferred_address malformed: {e}")),
                Some(Ok(pa)) if pa.cid.is_empty() => {
                    bad(ids::TP_PREFADD_CID, "preferred_address carries a zero-length connection id".into())
                }
                _ => {}
            }
        }
        Role::Client => {
            for id in [
                tp::ORIGINAL_DESTINATION_CONNECTION_ID,
                tp::STATELESS_RESET_TOKEN,
                tp::PREFERRED_ADDRESS,
                tp::RETRY_SOURCE_CONNECTION_ID,
            ] {
                if set.contains(id) {
                    bad(ids::TP_ROLE_ILLEGAL, format!("client sent server-only transport parameter 0x{id:x}"));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Registry;
    use crate::wire::{ConnectionId, PreferredAddress};
    use std::net::{Ipv4Addr, Ipv6Addr};

    fn base(role: Role) -> TransportParameterSet {
        let mut s = TransportParameterSet::new();
        let cid = ConnectionId::new(&[1; 8]).unwrap();
        s.push_int(tp::INITIAL_MAX_DATA, 1 << 20)
            .push_int(tp::ACK_DELAY_EXPONENT, 3)
            .push_int(tp::ACTIVE_CONNECTION_ID_LIMIT, 4)
            .push_cid(tp::INITIAL_SOURCE_CONNECTION_ID, &cid);
        if role == Role::Server {
            s.push_cid(tp::ORIGINAL_DESTINATION_CONNECTION_ID, &cid);
        }
        s
    }

    fn ids_of(v: &[Verdict]) -> Vec<&str> {
        v.iter().map(|v| v.requirement.as_str()).collect()
    }

    fn judge(sender: Role, set: &TransportParameterSet) -> Vec<Verdict> {
        let state = ConnectionState::new(Role::Client, Registry::builtin());
        check_transport_params(&state, set, state.direction_of(sender))
    }

    #[test]
    fn clean_sets_pass() {
        assert!(judge(Role::Client, &base(Role::Client)).is_empty());
        assert!(judge(Role::Server, &base(Role::Server)).is_empty());
    }

    #[test]
    fn unknown_ids_are_ignored() {
        let mut s = base(Role::Client);
        s.push_raw(0x1f3a, vec![1, 2, 3]);
        assert!(judge(Role::Client, &s).is_empty());
    }

    #[test]
    fn each_defect_maps_to_one_requirement() {
        let mut s = base(Role::Client);
        s.push_int(tp::ACK_DELAY_EXPONENT, 3);
        assert_eq!(ids_of(&judge(Role::Client, &s)), [ids::TP_DUP]);

        let mut s = base(Role::Client);
        s.set_int(tp::ACK_DELAY_EXPONENT, 21);
        assert_eq!(ids_of(&judge(Role::Client, &s)), [ids::TP_INVALID_VALUE]);

        let mut s = base(Role::Client);
        s.set_int(tp::ACTIVE_CONNECTION_ID_LIMIT, 1);
        assert_eq!(ids_of(&judge(Role::Client, &s)), [ids::TP_INVALID_VALUE]);

        let mut s = base(Role::Client);
        s.remove(tp::INITIAL_SOURCE_CONNECTION_ID);
        assert_eq!(ids_of(&judge(Role::Client, &s)), [ids::TP_MISSING_ICID]);

        let mut s = base(Role::Server);
        s.remove(tp::ORIGINAL_DESTINATION_CONNECTION_ID);
        assert_eq!(ids_of(&judge(Role::Server, &s)), [ids::TP_MISSING_OCID]);

        let s = base(Role::Server);
        assert_eq!(ids_of(&judge(Role::Client, &s)), [ids::TP_ROLE_ILLEGAL]);
    }

    #[test]
    fn preferred_address_zero_cid() {
        let pa = PreferredAddress {
            ip4: Ipv4Addr::LOCALHOST,
            port4: 1,
            ip6: Ipv6Addr::LOCALHOST,
            port6: 2,
            cid: ConnectionId::empty(),
            reset_token: [0; 16],
        };
        let mut s = base(Role::Server);
        s.push_raw(tp::PREFERRED_ADDRESS, pa.encode().unwrap());
        assert_eq!(ids_of(&judge(Role::Server, &s)), [ids::TP_PREFADD_CID]);
    }
}
