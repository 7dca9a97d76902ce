//! Bit-level codecs for the draft-29 wire image: varints, frames, packet
//! headers, transport parameters and the mock handshake messages carried in
//! CRYPTO frames.
//!
//! Packets are handled in null-cipher mode: no header or payload protection,
//! and a fixed two-byte packet number field.

pub mod frame;
pub mod handshake;
pub mod packet;
pub mod transport_params;
pub mod varint;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use frame::{decode_frame, encode_frame, CloseKind, Frame, FrameKind};
pub use handshake::HandshakeMessage;
pub use packet::{
    encode_datagram, DecodedPacket, Header, expand_packet_number,
    decode_datagram, decode_packet, encode_packet, DecodeContext, HeaderAnnotation, Packet, PacketType,
    PnSpace,
};
pub use transport_params::{
    decode_transport_params, encode_transport_params, PreferredAddress, TransportParameterSet,
};
pub use varint::{decode_varint, encode_varint, VarInt};

/// The only version this tool speaks.
pub const QUIC_VERSION_DRAFT29: u32 = 0xff00_001d;

/// Maximum connection ID length this tool accepts when building packets.
pub const MAX_CID_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated input reading {field} at byte offset {offset}")]
    Truncated { field: &'static str, offset: usize },
    #[error("value {value} out of range for {field}")]
    Range { field: &'static str, value: u64 },
    #[error("malformed {field} at byte offset {offset}: {detail}")]
    Malformed {
        field: &'static str,
        offset: usize,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, WireError>;

/// An opaque connection identifier.
///
/// Locally constructed IDs are at most 16 bytes. IDs parsed off the wire keep
/// whatever length the sender claimed (up to 255) so the monitor can judge
/// them; such IDs cannot be re-encoded.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct ConnectionId(Vec<u8>);

impl ConnectionId {
    pub fn new(bytes: &[u8]) -> Result<Self> {
        if bytes.len() > MAX_CID_LEN {
            return Err(WireError::Range {
                field: "connection id length",
                value: bytes.len() as u64,
            });
        }
        Ok(ConnectionId(bytes.to_vec()))
    }

    pub fn from_wire(bytes: &[u8]) -> Self {
        ConnectionId(bytes.to_vec())
    }

    pub fn empty() -> Self {
        ConnectionId(Vec::new())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn check_encodable(&self) -> Result<()> {
        if self.0.len() > MAX_CID_LEN {
            return Err(WireError::Range {
                field: "connection id length",
                value: self.0.len() as u64,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for ConnectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConnectionId({})", hex::encode(&self.0))
    }
}

impl fmt::Display for ConnectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(&self.0))
    }
}

/// Transport error codes.
pub mod error_codes {
    pub const NO_ERROR: u64 = 0x0;
    pub const INTERNAL_ERROR: u64 = 0x1;
    pub const CONNECTION_REFUSED: u64 = 0x2;
    pub const FLOW_CONTROL_ERROR: u64 = 0x3;
    pub const STREAM_LIMIT_ERROR: u64 = 0x4;
    pub const STREAM_STATE_ERROR: u64 = 0x5;
    pub const FINAL_SIZE_ERROR: u64 = 0x6;
    pub const FRAME_ENCODING_ERROR: u64 = 0x7;
    pub const TRANSPORT_PARAMETER_ERROR: u64 = 0x8;
    pub const CONNECTION_ID_LIMIT_ERROR: u64 = 0x9;
    pub const PROTOCOL_VIOLATION: u64 = 0xa;
    pub const INVALID_TOKEN: u64 = 0xb;
    pub const APPLICATION_ERROR: u64 = 0xc;
    pub const CRYPTO_BUFFER_EXCEEDED: u64 = 0xd;

    const NAMES: &[(&str, u64)] = &[
        ("NO_ERROR", NO_ERROR),
        ("INTERNAL_ERROR", INTERNAL_ERROR),
        ("CONNECTION_REFUSED", CONNECTION_REFUSED),
        ("FLOW_CONTROL_ERROR", FLOW_CONTROL_ERROR),
        ("STREAM_LIMIT_ERROR", STREAM_LIMIT_ERROR),
        ("STREAM_STATE_ERROR", STREAM_STATE_ERROR),
        ("FINAL_SIZE_ERROR", FINAL_SIZE_ERROR),
        ("FRAME_ENCODING_ERROR", FRAME_ENCODING_ERROR),
        ("TRANSPORT_PARAMETER_ERROR", TRANSPORT_PARAMETER_ERROR),
        ("CONNECTION_ID_LIMIT_ERROR", CONNECTION_ID_LIMIT_ERROR),
        ("PROTOCOL_VIOLATION", PROTOCOL_VIOLATION),
        ("INVALID_TOKEN", INVALID_TOKEN),
        ("APPLICATION_ERROR", APPLICATION_ERROR),
        ("CRYPTO_BUFFER_EXCEEDED", CRYPTO_BUFFER_EXCEEDED),
    ];

    pub fn name(code: u64) -> Option<&'static str> {
        NAMES.iter().find(|(_, c)| *c == code).map(|(n, _)| *n)
    }

    pub fn by_name(name: &str) -> Option<u64> {
        NAMES.iter().find(|(n, _)| *n == name).map(|(_, c)| *c)
    }

    /// Known transport error, including the CRYPTO_ERROR range.
    pub fn is_known(code: u64) -> bool {
        name(code).is_some() || (0x100..=0x1ff).contains(&code)
    }

    pub fn describe(code: u64) -> String {
        match name(code) {
            Some(n) => n.to_string(),
            None if (0x100..=0x1ff).contains(&code) => format!("CRYPTO_ERROR(0x{:x})", code - 0x100),
            None => format!("0x{code:x}"),
        }
    }
}
