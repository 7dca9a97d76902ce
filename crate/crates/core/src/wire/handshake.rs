//! Stand-in handshake messages carried in CRYPTO frames.
//!
//! There is no TLS here. Each message is `type (1 byte) | varint length |
//! body`. Hello messages carry the sender's transport parameters as their
//! body; Finished is empty. Anything else is opaque and ignored.

use super::transport_params::{decode_transport_params, encode_transport_params, TransportParameterSet};
use super::varint::{put_u64, Reader};
use super::Result;

pub const CLIENT_HELLO: u8 = 0x01;
pub const SERVER_HELLO: u8 = 0x02;
pub const NEW_SESSION_TICKET: u8 = 0x04;
pub const FINISHED: u8 = 0x14;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandshakeMessage {
    ClientHello(TransportParameterSet),
    ServerHello(TransportParameterSet),
    Finished,
    Opaque { msg_type: u8, body: Vec<u8> },
}

impl HandshakeMessage {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let (t, body) = match self {
            HandshakeMessage::ClientHello(tp) => (CLIENT_HELLO, encode_transport_params(tp)?),
            HandshakeMessage::ServerHello(tp) => (SERVER_HELLO, encode_transport_params(tp)?),
            HandshakeMessage::Finished => (FINISHED, Vec::new()),
            HandshakeMessage::Opaque { msg_type, body } => (*msg_type, body.clone()),
        };
        let mut out = vec![t];
        put_u64(&mut out, "handshake message length", body.len() as u64)?;
        out.extend(body);
        Ok(out)
    }

    /// Parses every message in a CRYPTO payload.
    pub fn decode_all(bytes: &[u8]) -> Result<Vec<HandshakeMessage>> {
        let mut r = Reader::new(bytes);
        let mut out = Vec::new();
        while !r.is_empty() {
            let t = r.u8("handshake message type")?;
            let body = r.length_prefixed("handshake message body")?;
            out.push(match t {
                CLIENT_HELLO => HandshakeMessage::ClientHello(decode_transport_params(body)?),
                SERVER_HELLO => HandshakeMessage::ServerHello(decode_transport_params(body)?),
                FINISHED => HandshakeMessage::Finished,
                other => HandshakeMessage::Opaque { msg_type: other, body: body.to_vec() },
            });
        }
        Ok(out)
    }

    pub fn transport_params(&self) -> Option<&TransportParameterSet> {
        match self {
            HandshakeMessage::ClientHello(tp) | HandshakeMessage::ServerHello(tp) => Some(tp),
            _ => None,
        }
    }

    pub fn transport_params_mut(&mut self) -> Option<&mut TransportParameterSet> {
        match self {
            HandshakeMessage::ClientHello(tp) | HandshakeMessage::ServerHello(tp) => Some(tp),
            _ => None,
        }
    }
}
