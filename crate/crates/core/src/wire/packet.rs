//! Long and short packet headers in null-cipher mode.
//!
//! Nothing is protected: the first byte, packet number and payload travel in
//! the clear. Encoders always write a two-byte packet number; decoders honour
//! whatever length the first byte announces and expand it against the largest
//! packet number seen so far in the space.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::frame::{decode_frame_at, put_frame, Frame};
use super::varint::{put_u64, Reader};
use super::{ConnectionId, Result, WireError, QUIC_VERSION_DRAFT29};

const PN_LEN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PacketType {
    Initial,
    ZeroRtt,
    Handshake,
    Short,
}

/// Packet number space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PnSpace {
    Initial,
    Handshake,
    Application,
}

impl PnSpace {
    pub const ALL: [PnSpace; 3] = [PnSpace::Initial, PnSpace::Handshake, PnSpace::Application];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PnSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PnSpace::Initial => "initial",
            PnSpace::Handshake => "handshake",
            PnSpace::Application => "application",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Header {
    Initial {
        version: u32,
        dcid: ConnectionId,
        scid: ConnectionId,
        token: Vec<u8>,
    },
    ZeroRtt {
        version: u32,
        dcid: ConnectionId,
        scid: ConnectionId,
    },
    Handshake {
        version: u32,
        dcid: ConnectionId,
        scid: ConnectionId,
    },
    Short {
        dcid: ConnectionId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub header: Header,
    pub packet_number: u64,
    pub frames: Vec<Frame>,
}

impl Packet {
    pub fn packet_type(&self) -> PacketType {
        match self.header {
            Header::Initial { .. } => PacketType::Initial,
            Header::ZeroRtt { .. } => PacketType::ZeroRtt,
            Header::Handshake { .. } => PacketType::Handshake,
            Header::Short { .. } => PacketType::Short,
        }
    }

    pub fn space(&self) -> PnSpace {
        match self.header {
            Header::Initial { .. } => PnSpace::Initial,
            Header::Handshake { .. } => PnSpace::Handshake,
            Header::ZeroRtt { .. } | Header::Short { .. } => PnSpace::Application,
        }
    }

    pub fn is_long(&self) -> bool {
        !matches!(self.header, Header::Short { .. })
    }

    pub fn version(&self) -> Option<u32> {
        match &self.header {
            Header::Initial { version, .. } | Header::ZeroRtt { version, .. } | Header::Handshake { version, .. } => {
                Some(*version)
            }
            Header::Short { .. } => None,
        }
    }

    pub fn dcid(&self) -> &ConnectionId {
        match &self.header {
            Header::Initial { dcid, .. }
            | Header::ZeroRtt { dcid, .. }
            | Header::Handshake { dcid, .. }
            | Header::Short { dcid } => dcid,
        }
    }

    pub fn scid(&self) -> Option<&ConnectionId> {
        match &self.header {
            Header::Initial { scid, .. } | Header::ZeroRtt { scid, .. } | Header::Handshake { scid, .. } => Some(scid),
            Header::Short { .. } => None,
        }
    }

    pub fn token(&self) -> Option<&[u8]> {
        match &self.header {
            Header::Initial { token, .. } => Some(token),
            _ => None,
        }
    }

    pub fn token_mut(&mut self) -> Option<&mut Vec<u8>> {
        match &mut self.header {
            Header::Initial { token, .. } => Some(token),
            _ => None,
        }
    }
}

/// Non-fatal header oddities surfaced to the monitor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeaderAnnotation {
    FixedBitClear,
    ReservedBitsSet,
    VersionMismatch(u32),
    PacketNumberLength(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeContext {
    /// DCID length for short headers, fixed per connection.
    pub short_dcid_len: usize,
    pub pinned_version: u32,
    /// Largest packet number already processed per space, for expansion.
    pub largest_pn: [Option<u64>; 3],
}

impl DecodeContext {
    pub fn new(short_dcid_len: usize) -> Self {
        DecodeContext { short_dcid_len, pinned_version: QUIC_VERSION_DRAFT29, largest_pn: [None; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedPacket {
    pub packet: Packet,
    /// Bytes consumed from the datagram.
    pub len: usize,
    pub annotations: Vec<HeaderAnnotation>,
}

/// Reconstructs a full packet number from its truncated form.
pub fn expand_packet_number(largest: Option<u64>, truncated: u64, pn_len: usize) -> u64 {
    let expected = largest.map_or(0, |l| l + 1);
    let win = 1u64 << (pn_len * 8);
    let hwin = win / 2;
    let mask = win - 1;
    let candidate = (expected & !mask) | truncated;
    if candidate + hwin <= expected && candidate < (1 << 62) - win {
        candidate + win
    } else if candidate > expected + hwin && candidate >= win {
        candidate - win
    } else {
        candidate
    }
}

fn long_type_bits(h: &Header) -> u8 {
    match h {
        Header::Initial { .. } => 0,
        Header::ZeroRtt { .. } => 1,
        Header::Handshake { .. } => 2,
        Header::Short { .. } => unreachable!(),
    }
}

pub fn encode_packet(p: &Packet) -> Result<Vec<u8>> {
    if p.frames.is_empty() {
        return Err(WireError::Malformed {
            field: "packet payload",
            offset: 0,
            detail: "packet carries no frames".into(),
        });
    }
    if p.packet_number > super::varint::MAX_VARINT {
        return Err(WireError::Range { field: "packet number", value: p.packet_number });
    }
    let mut payload = Vec::new();
    for f in &p.frames {
        put_frame(&mut payload, f)?;
    }
    let pn = (p.packet_number & 0xffff) as u16;
    let mut out = Vec::with_capacity(payload.len() + 64);
    match &p.header {
        Header::Short { dcid } => {
            dcid.check_encodable()?;
            out.push(0x40 | (PN_LEN as u8 - 1));
            out.extend_from_slice(dcid.as_bytes());
        }
        long => {
            let (version, dcid, scid) = match long {
                Header::Initial { version, dcid, scid, .. }
                | Header::ZeroRtt { version, dcid, scid }
                | Header::Handshake { version, dcid, scid } => (*version, dcid, scid),
                Header::Short { .. } => unreachable!(),
            };
            dcid.check_encodable()?;
            scid.check_encodable()?;
            out.push(0xc0 | (long_type_bits(long) << 4) | (PN_LEN as u8 - 1));
            out.extend_from_slice(&version.to_be_bytes());
            out.push(dcid.len() as u8);
            out.extend_from_slice(dcid.as_bytes());
            out.push(scid.len() as u8);
            out.extend_from_slice(scid.as_bytes());
            if let Header::Initial { token, .. } = long {
                put_u64(&mut out, "token length", token.len() as u64)?;
                out.extend_from_slice(token);
            }
            put_u64(&mut out, "packet length", (PN_LEN + payload.len()) as u64)?;
        }
    }
    out.extend_from_slice(&pn.to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

fn read_pn(r: &mut Reader<'_>, pn_len: usize) -> Result<u64> {
    let b = r.bytes(pn_len, "packet number")?;
    Ok(b.iter().fold(0u64, |acc, x| (acc << 8) | u64::from(*x)))
}

fn decode_payload(payload: &[u8], base: usize) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    let mut pos = 0;
    while pos < payload.len() {
        let (f, n) = decode_frame_at(&payload[pos..], base + pos)?;
        frames.push(f);
        pos += n;
    }
    if frames.is_empty() {
        return Err(WireError::Malformed {
            field: "packet payload",
            offset: base,
            detail: "packet carries no frames".into(),
        });
    }
    Ok(frames)
}

/// Decodes one packet from the front of `bytes`. Long-header packets consume
/// exactly their length field; a short-header packet consumes the rest.
pub fn decode_packet(bytes: &[u8], ctx: &DecodeContext) -> Result<DecodedPacket> {
    let mut r = Reader::new(bytes);
    let first = r.u8("header form")?;
    let mut annotations = Vec::new();
    if first & 0x40 == 0 {
        annotations.push(HeaderAnnotation::FixedBitClear);
    }
    let pn_len = usize::from(first & 0x03) + 1;
    if pn_len != PN_LEN {
        annotations.push(HeaderAnnotation::PacketNumberLength(pn_len));
    }
    if first & 0x80 == 0 {
        if first & 0x18 != 0 {
            annotations.push(HeaderAnnotation::ReservedBitsSet);
        }
        let dcid = ConnectionId::from_wire(r.bytes(ctx.short_dcid_len, "short header dcid")?);
        let truncated = read_pn(&mut r, pn_len)?;
        let packet_number =
            expand_packet_number(ctx.largest_pn[PnSpace::Application.index()], truncated, pn_len);
        let base = r.offset();
        let frames = decode_payload(r.rest(), base)?;
        return Ok(DecodedPacket {
            packet: Packet { header: Header::Short { dcid }, packet_number, frames },
            len: bytes.len(),
            annotations,
        });
    }

    if first & 0x0c != 0 {
        annotations.push(HeaderAnnotation::ReservedBitsSet);
    }
    let version = r.u32("version")?;
    if version == 0 {
        return Err(WireError::Malformed {
            field: "version",
            offset: 1,
            detail: "version negotiation packets are not supported".into(),
        });
    }
    if version != ctx.pinned_version {
        annotations.push(HeaderAnnotation::VersionMismatch(version));
    }
    let dcid_len = r.u8("dcid length")?;
    let dcid = ConnectionId::from_wire(r.bytes(dcid_len as usize, "dcid")?);
    let scid_len = r.u8("scid length")?;
    let scid = ConnectionId::from_wire(r.bytes(scid_len as usize, "scid")?);
    let type_bits = (first >> 4) & 0x03;
    let header = match type_bits {
        0 => {
            let token = r.length_prefixed("token")?.to_vec();
            Header::Initial { version, dcid, scid, token }
        }
        1 => Header::ZeroRtt { version, dcid, scid },
        2 => Header::Handshake { version, dcid, scid },
        _ => {
            return Err(WireError::Malformed {
                field: "long packet type",
                offset: 0,
                detail: "retry packets are not supported".into(),
            })
        }
    };
    let length = r.varint("packet length")? as usize;
    let start = r.offset();
    let body = r.bytes(length, "packet payload")?;
    if length < pn_len {
        return Err(WireError::Malformed {
            field: "packet length",
            offset: start,
            detail: format!("length {length} shorter than packet number"),
        });
    }
    let truncated = body[..pn_len].iter().fold(0u64, |acc, x| (acc << 8) | u64::from(*x));
    let space = match header {
        Header::Initial { .. } => PnSpace::Initial,
        Header::Handshake { .. } => PnSpace::Handshake,
        _ => PnSpace::Application,
    };
    let packet_number = expand_packet_number(ctx.largest_pn[space.index()], truncated, pn_len);
    let frames = decode_payload(&body[pn_len..], start + pn_len)?;
    Ok(DecodedPacket { packet: Packet { header, packet_number, frames }, len: r.position(), annotations })
}

/// Splits a datagram into its coalesced packets. Packet numbers decoded
/// earlier in the datagram feed the expansion of later ones.
pub fn decode_datagram(bytes: &[u8], ctx: &DecodeContext) -> Result<Vec<DecodedPacket>> {
    let mut ctx = ctx.clone();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let mut d = decode_packet(&bytes[pos..], &ctx).map_err(|e| shift(e, pos))?;
        let space = d.packet.space().index();
        let pn = d.packet.packet_number;
        ctx.largest_pn[space] = Some(ctx.largest_pn[space].map_or(pn, |l| l.max(pn)));
        pos += d.len;
        d.len = d.len.max(1);
        out.push(d);
    }
    if out.is_empty() {
        return Err(WireError::Truncated { field: "datagram", offset: 0 });
    }
    Ok(out)
}

fn shift(e: WireError, by: usize) -> WireError {
    match e {
        WireError::Truncated { field, offset } => WireError::Truncated { field, offset: offset + by },
        WireError::Malformed { field, offset, detail } => WireError::Malformed { field, offset: offset + by, detail },
        other => other,
    }
}

/// Concatenates packets into one datagram.
pub fn encode_datagram(packets: &[Packet]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (i, p) in packets.iter().enumerate() {
        if !p.is_long() && i + 1 != packets.len() {
            return Err(WireError::Malformed {
                field: "datagram",
                offset: out.len(),
                detail: "short header packet must be last in a datagram".into(),
            });
        }
        out.extend(encode_packet(p)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::frame::Frame;

    fn cid(n: u8, len: usize) -> ConnectionId {
        ConnectionId::new(&vec![n; len]).unwrap()
    }

    fn initial(token: Vec<u8>) -> Packet {
        Packet {
            header: Header::Initial { version: QUIC_VERSION_DRAFT29, dcid: cid(1, 8), scid: cid(2, 8), token },
            packet_number: 0,
            frames: vec![Frame::Crypto { offset: 0, data: vec![1, 2, 3] }, Frame::Padding { len: 20 }],
        }
    }

    #[test]
    fn initial_round_trip_keeps_version_and_token() {
        let p = initial(vec![7; 7]);
        let bytes = encode_packet(&p).unwrap();
        assert_eq!(bytes[0], 0xc1);
        assert_eq!(&bytes[1..5], &[0xff, 0x00, 0x00, 0x1d]);
        let d = decode_packet(&bytes, &DecodeContext::new(8)).unwrap();
        assert_eq!(d.packet, p);
        assert_eq!(d.len, bytes.len());
        assert!(d.annotations.is_empty());
        assert_eq!(d.packet.token().unwrap().len(), 7);
    }

    #[test]
    fn empty_token_is_zero_length_field() {
        let bytes = encode_packet(&initial(vec![])).unwrap();
        // first byte, version, dcid len + 8, scid len + 8, then token length
        assert_eq!(bytes[1 + 4 + 9 + 9], 0x00);
    }

    #[test]
    fn short_header_uses_context_dcid_len() {
        let p = Packet { header: Header::Short { dcid: cid(3, 8) }, packet_number: 5, frames: vec![Frame::Ping] };
        let bytes = encode_packet(&p).unwrap();
        let d = decode_packet(&bytes, &DecodeContext::new(8)).unwrap();
        assert_eq!(d.packet.dcid().len(), 8);
        assert_eq!(d.packet, p);
    }

    #[test]
    fn oversized_cid_rejected_on_encode() {
        let mut p = initial(vec![]);
        if let Header::Initial { dcid, .. } = &mut p.header {
            *dcid = ConnectionId::from_wire(&[0; 17]);
        }
        assert!(matches!(encode_packet(&p), Err(WireError::Range { .. })));
    }

    #[test]
    fn wide_cid_decodes_for_judgement() {
        let mut bytes = vec![0xe1];
        bytes.extend_from_slice(&QUIC_VERSION_DRAFT29.to_be_bytes());
        bytes.push(17);
        bytes.extend_from_slice(&[5; 17]);
        bytes.push(0);
        bytes.push(3);
        bytes.extend_from_slice(&[0, 0, 1]);
        let d = decode_packet(&bytes, &DecodeContext::new(8)).unwrap();
        assert_eq!(d.packet.dcid().len(), 17);
        assert_eq!(d.packet.packet_type(), PacketType::Handshake);
    }

    #[test]
    fn empty_payload_is_malformed() {
        let p = Packet { header: Header::Short { dcid: cid(3, 8) }, packet_number: 0, frames: vec![] };
        assert!(encode_packet(&p).is_err());
        assert!(decode_packet(&[0x41, 3, 3, 3, 3, 3, 3, 3, 3, 0, 0], &DecodeContext::new(8)).is_err());
    }

    #[test]
    fn reserved_bits_and_version_are_annotations() {
        let mut p = initial(vec![]);
        if let Header::Initial { version, .. } = &mut p.header {
            *version = 0xff00_001c;
        }
        let mut bytes = encode_packet(&p).unwrap();
        bytes[0] |= 0x0c;
        let d = decode_packet(&bytes, &DecodeContext::new(8)).unwrap();
        assert!(d.annotations.contains(&HeaderAnnotation::ReservedBitsSet));
        assert!(d.annotations.contains(&HeaderAnnotation::VersionMismatch(0xff00_001c)));
    }

    #[test]
    fn truncated_header() {
        let bytes = encode_packet(&initial(vec![])).unwrap();
        assert!(matches!(decode_packet(&bytes[..10], &DecodeContext::new(8)), Err(WireError::Truncated { .. })));
    }

    #[test]
    fn packet_number_expansion() {
        assert_eq!(expand_packet_number(Some(0xa82f30ea), 0x9b32, 2), 0xa82f9b32);
        assert_eq!(expand_packet_number(None, 3, 2), 3);
        assert_eq!(expand_packet_number(Some(7), 5, 2), 5);
        assert_eq!(expand_packet_number(Some(65_534), 1, 2), 65_537);
    }

    #[test]
    fn coalesced_datagram() {
        let a = initial(vec![]);
        let b = Packet {
            header: Header::Handshake { version: QUIC_VERSION_DRAFT29, dcid: cid(1, 8), scid: cid(2, 8) },
            packet_number: 0,
            frames: vec![Frame::Crypto { offset: 0, data: vec![0x14, 0] }],
        };
        let c = Packet { header: Header::Short { dcid: cid(1, 8) }, packet_number: 0, frames: vec![Frame::HandshakeDone] };
        let bytes = encode_datagram(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let ps: Vec<Packet> =
            decode_datagram(&bytes, &DecodeContext::new(8)).unwrap().into_iter().map(|d| d.packet).collect();
        assert_eq!(ps, vec![a, b, c.clone()]);
        assert!(encode_datagram(&[c.clone(), c]).is_err());
    }
}
