//! Transport parameter TLV codec.
//!
//! The set is a plain ordered list of `(id, raw value)` entries. Duplicates and
//! unknown ids are kept as they arrived; judging them is the monitor's job.

use std::net::{Ipv4Addr, Ipv6Addr};

use serde::{Deserialize, Serialize};

use super::varint::{decode_varint, put_u64, Reader};
use super::{ConnectionId, Result, WireError};

pub mod ids {
    pub const ORIGINAL_DESTINATION_CONNECTION_ID: u64 = 0x00;
    pub const MAX_IDLE_TIMEOUT: u64 = 0x01;
    pub const STATELESS_RESET_TOKEN: u64 = 0x02;
    pub const MAX_UDP_PAYLOAD_SIZE: u64 = 0x03;
    pub const INITIAL_MAX_DATA: u64 = 0x04;
    pub const INITIAL_MAX_STREAM_DATA_BIDI_LOCAL: u64 = 0x05;
    pub const INITIAL_MAX_STREAM_DATA_BIDI_REMOTE: u64 = 0x06;
    pub const INITIAL_MAX_STREAM_DATA_UNI: u64 = 0x07;
    pub const INITIAL_MAX_STREAMS_BIDI: u64 = 0x08;
    pub const INITIAL_MAX_STREAMS_UNI: u64 = 0x09;
    pub const ACK_DELAY_EXPONENT: u64 = 0x0a;
    pub const MAX_ACK_DELAY: u64 = 0x0b;
    pub const DISABLE_ACTIVE_MIGRATION: u64 = 0x0c;
    pub const PREFERRED_ADDRESS: u64 = 0x0d;
    pub const ACTIVE_CONNECTION_ID_LIMIT: u64 = 0x0e;
    pub const INITIAL_SOURCE_CONNECTION_ID: u64 = 0x0f;
    pub const RETRY_SOURCE_CONNECTION_ID: u64 = 0x10;

    pub fn is_known(id: u64) -> bool {
        id <= RETRY_SOURCE_CONNECTION_ID
    }

    /// Ids whose value is a single varint.
    pub fn is_integer(id: u64) -> bool {
        matches!(
            id,
            MAX_IDLE_TIMEOUT
                | MAX_UDP_PAYLOAD_SIZE
                | INITIAL_MAX_DATA
                | INITIAL_MAX_STREAM_DATA_BIDI_LOCAL
                | INITIAL_MAX_STREAM_DATA_BIDI_REMOTE
                | INITIAL_MAX_STREAM_DATA_UNI
                | INITIAL_MAX_STREAMS_BIDI
                | INITIAL_MAX_STREAMS_UNI
                | ACK_DELAY_EXPONENT
                | MAX_ACK_DELAY
                | ACTIVE_CONNECTION_ID_LIMIT
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferredAddress {
    pub ip4: Ipv4Addr,
    pub port4: u16,
    pub ip6: Ipv6Addr,
    pub port6: u16,
    pub cid: ConnectionId,
    pub reset_token: [u8; 16],
}

impl PreferredAddress {
    pub fn encode(&self) -> Result<Vec<u8>> {
        self.cid.check_encodable()?;
        let mut out = Vec::with_capacity(41 + self.cid.len());
        out.extend_from_slice(&self.ip4.octets());
        out.extend_from_slice(&self.port4.to_be_bytes());
        out.extend_from_slice(&self.ip6.octets());
        out.extend_from_slice(&self.port6.to_be_bytes());
        out.push(self.cid.len() as u8);
        out.extend_from_slice(self.cid.as_bytes());
        out.extend_from_slice(&self.reset_token);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let ip4 = Ipv4Addr::from(r.array::<4>("preferred_address ipv4")?);
        let port4 = r.u16("preferred_address ipv4 port")?;
        let ip6 = Ipv6Addr::from(r.array::<16>("preferred_address ipv6")?);
        let port6 = r.u16("preferred_address ipv6 port")?;
        let len = r.u8("preferred_address cid length")?;
        let cid = ConnectionId::from_wire(r.bytes(len as usize, "preferred_address cid")?);
        let reset_token = r.array::<16>("preferred_address reset token")?;
        Ok(PreferredAddress { ip4, port4, ip6, port6, cid, reset_token })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransportParameterSet {
    pub entries: Vec<(u64, Vec<u8>)>,
}

impl TransportParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_raw(&mut self, id: u64, value: Vec<u8>) -> &mut Self {
        self.entries.push((id, value));
        self
    }

    pub fn push_int(&mut self, id: u64, value: u64) -> &mut Self {
        let mut v = Vec::new();
        put_u64(&mut v, "transport parameter value", value).expect("transport parameter value in varint range");
        self.push_raw(id, v)
    }

    pub fn push_cid(&mut self, id: u64, cid: &ConnectionId) -> &mut Self {
        self.push_raw(id, cid.as_bytes().to_vec())
    }

    pub fn push_flag(&mut self, id: u64) -> &mut Self {
        self.push_raw(id, Vec::new())
    }

    /// Replaces every entry for `id` by a single integer entry, keeping the
    /// position of the first occurrence.
    pub fn set_int(&mut self, id: u64, value: u64) -> &mut Self {
        let mut v = Vec::new();
        put_u64(&mut v, "transport parameter value", value).expect("transport parameter value in varint range");
        match self.entries.iter().position(|(i, _)| *i == id) {
            Some(pos) => {
                self.entries[pos].1 = v;
                let mut seen = false;
                self.entries.retain(|(i, _)| {
                    if *i != id {
                        return true;
                    }
                    let keep = !seen;
                    seen = true;
                    keep
                });
            }
            None => {
                self.entries.push((id, v));
            }
        }
        self
    }

    pub fn remove(&mut self, id: u64) -> &mut Self {
        self.entries.retain(|(i, _)| *i != id);
        self
    }

    pub fn contains(&self, id: u64) -> bool {
        self.entries.iter().any(|(i, _)| *i == id)
    }

    pub fn count(&self, id: u64) -> usize {
        self.entries.iter().filter(|(i, _)| *i == id).count()
    }

    /// First raw value for `id`.
    pub fn raw(&self, id: u64) -> Option<&[u8]> {
        self.entries.iter().find(|(i, _)| *i == id).map(|(_, v)| v.as_slice())
    }

    /// Integer view of the first entry for `id`. `Some(Err)` when the value
    /// is not exactly one varint.
    pub fn int(&self, id: u64) -> Option<std::result::Result<u64, ()>> {
        self.raw(id).map(|v| match decode_varint(v) {
            Ok((x, n)) if n == v.len() => Ok(x.value()),
            _ => Err(()),
        })
    }

    /// Integer value or the protocol default when absent or malformed.
    pub fn int_or(&self, id: u64, default: u64) -> u64 {
        match self.int(id) {
            Some(Ok(v)) => v,
            _ => default,
        }
    }

    pub fn cid(&self, id: u64) -> Option<ConnectionId> {
        self.raw(id).map(ConnectionId::from_wire)
    }

    pub fn preferred_address(&self) -> Option<Result<PreferredAddress>> {
        self.raw(ids::PREFERRED_ADDRESS).map(PreferredAddress::decode)
    }

    pub fn ack_delay_exponent(&self) -> u64 {
        self.int_or(ids::ACK_DELAY_EXPONENT, 3)
    }

    pub fn active_connection_id_limit(&self) -> u64 {
        self.int_or(ids::ACTIVE_CONNECTION_ID_LIMIT, 2)
    }

    pub fn disable_active_migration(&self) -> bool {
        self.contains(ids::DISABLE_ACTIVE_MIGRATION)
    }

    pub fn initial_max_data(&self) -> u64 {
        self.int_or(ids::INITIAL_MAX_DATA, 0)
    }

    pub fn initial_max_streams(&self, bidi: bool) -> u64 {
        self.int_or(if bidi { ids::INITIAL_MAX_STREAMS_BIDI } else { ids::INITIAL_MAX_STREAMS_UNI }, 0)
    }

    /// Ids that appear more than once, in first-repeat order.
    pub fn duplicate_ids(&self) -> Vec<u64> {
        let mut seen = std::collections::BTreeSet::new();
        let mut dups = Vec::new();
        for (id, _) in &self.entries {
            if !seen.insert(*id) && !dups.contains(id) {
                dups.push(*id);
            }
        }
        dups
    }
}

pub fn encode_transport_params(set: &TransportParameterSet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (id, value) in &set.entries {
        put_u64(&mut out, "transport parameter id", *id)?;
        put_u64(&mut out, "transport parameter length", value.len() as u64)?;
        out.extend_from_slice(value);
    }
    Ok(out)
}

pub fn decode_transport_params(bytes: &[u8]) -> Result<TransportParameterSet> {
    let mut r = Reader::new(bytes);
    let mut set = TransportParameterSet::new();
    while !r.is_empty() {
        let id = r.varint("transport parameter id")?;
        let value = r.length_prefixed("transport parameter value")?;
        set.entries.push((id, value.to_vec()));
    }
    Ok(set)
}

impl TryFrom<&[u8]> for TransportParameterSet {
    type Error = WireError;

    fn try_from(bytes: &[u8]) -> Result<Self> {
        decode_transport_params(bytes)
    }
}
