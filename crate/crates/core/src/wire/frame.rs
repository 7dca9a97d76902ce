//! Frame codec.
//!
//! Unassigned frame types decode to [`Frame::Unknown`]. Their body follows
//! this tool's greased-frame convention: a varint body length followed by that
//! many bytes. The generator emits unknown frames in the same shape, so they
//! round-trip byte for byte.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::varint::{put_u64, Reader};
use super::{ConnectionId, Result, WireError};

/// Maximum stream offset plus one; `offset + len` must stay below it.
pub const MAX_STREAM_SIZE: u64 = 1 << 62;

/// Largest legal MAX_STREAMS / STREAMS_BLOCKED value.
pub const MAX_STREAMS_LIMIT: u64 = 1 << 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FrameKind {
    Padding,
    Ping,
    Ack,
    ResetStream,
    StopSending,
    Crypto,
    NewToken,
    Stream,
    MaxData,
    MaxStreamData,
    MaxStreams,
    DataBlocked,
    StreamDataBlocked,
    StreamsBlocked,
    NewConnectionId,
    RetireConnectionId,
    PathChallenge,
    PathResponse,
    ConnectionClose,
    HandshakeDone,
    Unknown,
}

impl FrameKind {
    pub const ALL: [FrameKind; 21] = [
        FrameKind::Padding,
        FrameKind::Ping,
        FrameKind::Ack,
        FrameKind::ResetStream,
        FrameKind::StopSending,
        FrameKind::Crypto,
        FrameKind::NewToken,
        FrameKind::Stream,
        FrameKind::MaxData,
        FrameKind::MaxStreamData,
        FrameKind::MaxStreams,
        FrameKind::DataBlocked,
        FrameKind::StreamDataBlocked,
        FrameKind::StreamsBlocked,
        FrameKind::NewConnectionId,
        FrameKind::RetireConnectionId,
        FrameKind::PathChallenge,
        FrameKind::PathResponse,
        FrameKind::ConnectionClose,
        FrameKind::HandshakeDone,
        FrameKind::Unknown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FrameKind::Padding => "PADDING",
            FrameKind::Ping => "PING",
            FrameKind::Ack => "ACK",
            FrameKind::ResetStream => "RESET_STREAM",
            FrameKind::StopSending => "STOP_SENDING",
            FrameKind::Crypto => "CRYPTO",
            FrameKind::NewToken => "NEW_TOKEN",
            FrameKind::Stream => "STREAM",
            FrameKind::MaxData => "MAX_DATA",
            FrameKind::MaxStreamData => "MAX_STREAM_DATA",
            FrameKind::MaxStreams => "MAX_STREAMS",
            FrameKind::DataBlocked => "DATA_BLOCKED",
            FrameKind::StreamDataBlocked => "STREAM_DATA_BLOCKED",
            FrameKind::StreamsBlocked => "STREAMS_BLOCKED",
            FrameKind::NewConnectionId => "NEW_CONNECTION_ID",
            FrameKind::RetireConnectionId => "RETIRE_CONNECTION_ID",
            FrameKind::PathChallenge => "PATH_CHALLENGE",
            FrameKind::PathResponse => "PATH_RESPONSE",
            FrameKind::ConnectionClose => "CONNECTION_CLOSE",
            FrameKind::HandshakeDone => "HANDSHAKE_DONE",
            FrameKind::Unknown => "UNKNOWN",
        }
    }

    /// Probing frames may be sent on an unvalidated path without signalling
    /// migration.
    pub fn is_probing(self) -> bool {
        matches!(
            self,
            FrameKind::PathChallenge | FrameKind::PathResponse | FrameKind::NewConnectionId | FrameKind::Padding
        )
    }

    pub fn is_ack_eliciting(self) -> bool {
        !matches!(self, FrameKind::Ack | FrameKind::Padding | FrameKind::ConnectionClose)
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AckRange {
    pub gap: u64,
    pub len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcnCounts {
    pub ect0: u64,
    pub ect1: u64,
    pub ce: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CloseKind {
    /// Type 0x1c; carries the type of the frame that triggered the error.
    Transport { frame_type: u64 },
    /// Type 0x1d.
    Application,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// A run of consecutive 0x00 bytes.
    Padding { len: usize },
    Ping,
    Ack {
        largest: u64,
        delay: u64,
        first_range: u64,
        ranges: Vec<AckRange>,
        ecn: Option<EcnCounts>,
    },
    ResetStream { stream_id: u64, error_code: u64, final_size: u64 },
    StopSending { stream_id: u64, error_code: u64 },
    Crypto { offset: u64, data: Vec<u8> },
    NewToken { token: Vec<u8> },
    Stream { stream_id: u64, offset: u64, fin: bool, data: Vec<u8> },
    MaxData { max: u64 },
    MaxStreamData { stream_id: u64, max: u64 },
    MaxStreams { bidi: bool, max: u64 },
    DataBlocked { limit: u64 },
    StreamDataBlocked { stream_id: u64, limit: u64 },
    StreamsBlocked { bidi: bool, limit: u64 },
    NewConnectionId {
        sequence: u64,
        retire_prior_to: u64,
        cid: ConnectionId,
        reset_token: [u8; 16],
    },
    RetireConnectionId { sequence: u64 },
    PathChallenge { data: [u8; 8] },
    PathResponse { data: [u8; 8] },
    ConnectionClose { kind: CloseKind, error_code: u64, reason: Vec<u8> },
    HandshakeDone,
    Unknown { frame_type: u64, body: Vec<u8> },
}

impl Frame {
    pub fn kind(&self) -> FrameKind {
        match self {
            Frame::Padding { .. } => FrameKind::Padding,
            Frame::Ping => FrameKind::Ping,
            Frame::Ack { .. } => FrameKind::Ack,
            Frame::ResetStream { .. } => FrameKind::ResetStream,
            Frame::StopSending { .. } => FrameKind::StopSending,
            Frame::Crypto { .. } => FrameKind::Crypto,
            Frame::NewToken { .. } => FrameKind::NewToken,
            Frame::Stream { .. } => FrameKind::Stream,
            Frame::MaxData { .. } => FrameKind::MaxData,
            Frame::MaxStreamData { .. } => FrameKind::MaxStreamData,
            Frame::MaxStreams { .. } => FrameKind::MaxStreams,
            Frame::DataBlocked { .. } => FrameKind::DataBlocked,
            Frame::StreamDataBlocked { .. } => FrameKind::StreamDataBlocked,
            Frame::StreamsBlocked { .. } => FrameKind::StreamsBlocked,
            Frame::NewConnectionId { .. } => FrameKind::NewConnectionId,
            Frame::RetireConnectionId { .. } => FrameKind::RetireConnectionId,
            Frame::PathChallenge { .. } => FrameKind::PathChallenge,
            Frame::PathResponse { .. } => FrameKind::PathResponse,
            Frame::ConnectionClose { .. } => FrameKind::ConnectionClose,
            Frame::HandshakeDone => FrameKind::HandshakeDone,
            Frame::Unknown { .. } => FrameKind::Unknown,
        }
    }

    /// Wire type code as it would be encoded.
    pub fn type_code(&self) -> u64 {
        match self {
            Frame::Padding { .. } => 0x00,
            Frame::Ping => 0x01,
            Frame::Ack { ecn, .. } => {
                if ecn.is_some() {
                    0x03
                } else {
                    0x02
                }
            }
            Frame::ResetStream { .. } => 0x04,
            Frame::StopSending { .. } => 0x05,
            Frame::Crypto { .. } => 0x06,
            Frame::NewToken { .. } => 0x07,
            Frame::Stream { offset, fin, .. } => 0x08 | if *offset != 0 { 0x04 } else { 0 } | 0x02 | u64::from(*fin),
            Frame::MaxData { .. } => 0x10,
            Frame::MaxStreamData { .. } => 0x11,
            Frame::MaxStreams { bidi, .. } => if *bidi { 0x12 } else { 0x13 },
            Frame::DataBlocked { .. } => 0x14,
            Frame::StreamDataBlocked { .. } => 0x15,
            Frame::StreamsBlocked { bidi, .. } => if *bidi { 0x16 } else { 0x17 },
            Frame::NewConnectionId { .. } => 0x18,
            Frame::RetireConnectionId { .. } => 0x19,
            Frame::PathChallenge { .. } => 0x1a,
            Frame::PathResponse { .. } => 0x1b,
            Frame::ConnectionClose { kind, .. } => match kind {
                CloseKind::Transport { .. } => 0x1c,
                CloseKind::Application => 0x1d,
            },
            Frame::HandshakeDone => 0x1e,
            Frame::Unknown { frame_type, .. } => *frame_type,
        }
    }

    /// Builds an ACK frame acknowledging exactly `pns` (must be non-empty).
    pub fn ack_for(pns: &BTreeSet<u64>, delay: u64) -> Option<Frame> {
        // contiguous (high, low) runs, highest first
        let mut runs: Vec<(u64, u64)> = Vec::new();
        for pn in pns.iter().rev().copied() {
            match runs.last_mut() {
                Some((_, lo)) if pn + 1 == *lo => *lo = pn,
                _ => runs.push((pn, pn)),
            }
        }
        let (largest, first_lo) = *runs.first()?;
        let mut prev_lo = first_lo;
        let mut ranges = Vec::with_capacity(runs.len() - 1);
        for &(hi, lo) in &runs[1..] {
            ranges.push(AckRange { gap: prev_lo - hi - 2, len: hi - lo });
            prev_lo = lo;
        }
        Some(Frame::Ack { largest, delay, first_range: largest - first_lo, ranges, ecn: None })
    }

    /// Packet numbers covered by an ACK frame as inclusive `(low, high)`
    /// ranges, highest first. `None` for non-ACK frames or ranges that would
    /// underflow.
    pub fn ack_ranges(&self) -> Option<Vec<(u64, u64)>> {
        let Frame::Ack { largest, first_range, ranges, .. } = self else {
            return None;
        };
        let mut out = Vec::with_capacity(ranges.len() + 1);
        let mut lo = largest.checked_sub(*first_range)?;
        out.push((lo, *largest));
        for r in ranges {
            let hi = lo.checked_sub(r.gap)?.checked_sub(2)?;
            lo = hi.checked_sub(r.len)?;
            out.push((lo, hi));
        }
        Some(out)
    }

    /// Every acknowledged packet number. Intended for the small ranges this
    /// tool deals with.
    pub fn acked_packets(&self) -> BTreeSet<u64> {
        let mut set = BTreeSet::new();
        if let Some(ranges) = self.ack_ranges() {
            for (lo, hi) in ranges {
                let hi = hi.min(lo.saturating_add(1 << 16));
                set.extend(lo..=hi);
            }
        }
        set
    }
}

fn malformed(field: &'static str, offset: usize, detail: impl Into<String>) -> WireError {
    WireError::Malformed { field, offset, detail: detail.into() }
}

/// Decodes one frame from the front of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<(Frame, usize)> {
    decode_frame_at(bytes, 0)
}

/// Same as [`decode_frame`], reporting offsets relative to `base`.
pub fn decode_frame_at(bytes: &[u8], base: usize) -> Result<(Frame, usize)> {
    let mut r = Reader::with_base(bytes, base);
    let frame_type = r.varint("frame type")?;
    let frame = match frame_type {
        0x00 => {
            let mut len = 1;
            while r.rest().first() == Some(&0) {
                r.u8("padding")?;
                len += 1;
            }
            Frame::Padding { len }
        }
        0x01 => Frame::Ping,
        0x02 | 0x03 => {
            let largest = r.varint("ack largest acknowledged")?;
            let delay = r.varint("ack delay")?;
            let count = r.varint("ack range count")?;
            let first_range = r.varint("ack first range")?;
            let mut ranges = Vec::new();
            for _ in 0..count {
                let gap = r.varint("ack gap")?;
                let len = r.varint("ack range length")?;
                ranges.push(AckRange { gap, len });
            }
            let ecn = if frame_type == 0x03 {
                Some(EcnCounts {
                    ect0: r.varint("ack ect0 count")?,
                    ect1: r.varint("ack ect1 count")?,
                    ce: r.varint("ack ce count")?,
                })
            } else {
                None
            };
            let f = Frame::Ack { largest, delay, first_range, ranges, ecn };
            if f.ack_ranges().is_none() {
                return Err(malformed("ack ranges", base, "range extends below packet number 0"));
            }
            f
        }
        0x04 => Frame::ResetStream {
            stream_id: r.varint("reset_stream stream id")?,
            error_code: r.varint("reset_stream error code")?,
            final_size: r.varint("reset_stream final size")?,
        },
        0x05 => Frame::StopSending {
            stream_id: r.varint("stop_sending stream id")?,
            error_code: r.varint("stop_sending error code")?,
        },
        0x06 => {
            let offset = r.varint("crypto offset")?;
            let data = r.length_prefixed("crypto data")?.to_vec();
            Frame::Crypto { offset, data }
        }
        0x07 => Frame::NewToken { token: r.length_prefixed("new_token token")?.to_vec() },
        0x08..=0x0f => {
            let stream_id = r.varint("stream id")?;
            let offset = if frame_type & 0x04 != 0 { r.varint("stream offset")? } else { 0 };
            let data = if frame_type & 0x02 != 0 {
                r.length_prefixed("stream data")?.to_vec()
            } else {
                let rest = r.rest().to_vec();
                r.bytes(rest.len(), "stream data")?;
                rest
            };
            Frame::Stream { stream_id, offset, fin: frame_type & 0x01 != 0, data }
        }
        0x10 => Frame::MaxData { max: r.varint("max_data maximum")? },
        0x11 => Frame::MaxStreamData {
            stream_id: r.varint("max_stream_data stream id")?,
            max: r.varint("max_stream_data maximum")?,
        },
        0x12 | 0x13 => Frame::MaxStreams { bidi: frame_type == 0x12, max: r.varint("max_streams maximum")? },
        0x14 => Frame::DataBlocked { limit: r.varint("data_blocked limit")? },
        0x15 => Frame::StreamDataBlocked {
            stream_id: r.varint("stream_data_blocked stream id")?,
            limit: r.varint("stream_data_blocked limit")?,
        },
        0x16 | 0x17 => Frame::StreamsBlocked {
            bidi: frame_type == 0x16,
            limit: r.varint("streams_blocked limit")?,
        },
        0x18 => {
            let sequence = r.varint("new_connection_id sequence")?;
            let retire_prior_to = r.varint("new_connection_id retire prior to")?;
            let len = r.u8("new_connection_id length")?;
            let cid = ConnectionId::from_wire(r.bytes(len as usize, "new_connection_id cid")?);
            let reset_token = r.array::<16>("new_connection_id reset token")?;
            Frame::NewConnectionId { sequence, retire_prior_to, cid, reset_token }
        }
        0x19 => Frame::RetireConnectionId { sequence: r.varint("retire_connection_id sequence")? },
        0x1a => Frame::PathChallenge { data: r.array::<8>("path_challenge data")? },
        0x1b => Frame::PathResponse { data: r.array::<8>("path_response data")? },
        0x1c | 0x1d => {
            let error_code = r.varint("connection_close error code")?;
            let kind = if frame_type == 0x1c {
                CloseKind::Transport { frame_type: r.varint("connection_close frame type")? }
            } else {
                CloseKind::Application
            };
            let reason = r.length_prefixed("connection_close reason")?.to_vec();
            Frame::ConnectionClose { kind, error_code, reason }
        }
        0x1e => Frame::HandshakeDone,
        other => Frame::Unknown { frame_type: other, body: r.length_prefixed("unknown frame body")?.to_vec() },
    };
    Ok((frame, r.position()))
}

pub fn encode_frame(f: &Frame) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    put_frame(&mut out, f)?;
    Ok(out)
}

fn put_bytes(out: &mut Vec<u8>, field: &'static str, data: &[u8]) -> Result<()> {
    put_u64(out, field, data.len() as u64)?;
    out.extend_from_slice(data);
    Ok(())
}

/// Appends the canonical encoding of `f` to `out`.
pub fn put_frame(out: &mut Vec<u8>, f: &Frame) -> Result<()> {
    if let Frame::Padding { len } = f {
        if *len == 0 {
            return Err(WireError::Range { field: "padding length", value: 0 });
        }
        out.resize(out.len() + len, 0);
        return Ok(());
    }
    put_u64(out, "frame type", f.type_code())?;
    match f {
        Frame::Padding { .. } | Frame::Ping | Frame::HandshakeDone => {}
        Frame::Ack { largest, delay, first_range, ranges, ecn } => {
            put_u64(out, "ack largest acknowledged", *largest)?;
            put_u64(out, "ack delay", *delay)?;
            put_u64(out, "ack range count", ranges.len() as u64)?;
            put_u64(out, "ack first range", *first_range)?;
            for r in ranges {
                put_u64(out, "ack gap", r.gap)?;
                put_u64(out, "ack range length", r.len)?;
            }
            if let Some(e) = ecn {
                put_u64(out, "ack ect0 count", e.ect0)?;
                put_u64(out, "ack ect1 count", e.ect1)?;
                put_u64(out, "ack ce count", e.ce)?;
            }
        }
        Frame::ResetStream { stream_id, error_code, final_size } => {
            put_u64(out, "reset_stream stream id", *stream_id)?;
            put_u64(out, "reset_stream error code", *error_code)?;
            put_u64(out, "reset_stream final size", *final_size)?;
        }
        Frame::StopSending { stream_id, error_code } => {
            put_u64(out, "stop_sending stream id", *stream_id)?;
            put_u64(out, "stop_sending error code", *error_code)?;
        }
        Frame::Crypto { offset, data } => {
            put_u64(out, "crypto offset", *offset)?;
            put_bytes(out, "crypto data", data)?;
        }
        Frame::NewToken { token } => put_bytes(out, "new_token token", token)?,
        Frame::Stream { stream_id, offset, data, .. } => {
            put_u64(out, "stream id", *stream_id)?;
            if *offset != 0 {
                put_u64(out, "stream offset", *offset)?;
            }
            put_bytes(out, "stream data", data)?;
        }
        Frame::MaxData { max } => put_u64(out, "max_data maximum", *max)?,
        Frame::MaxStreamData { stream_id, max } => {
            put_u64(out, "max_stream_data stream id", *stream_id)?;
            put_u64(out, "max_stream_data maximum", *max)?;
        }
        Frame::MaxStreams { max, .. } => put_u64(out, "max_streams maximum", *max)?,
        Frame::DataBlocked { limit } => put_u64(out, "data_blocked limit", *limit)?,
        Frame::StreamDataBlocked { stream_id, limit } => {
            put_u64(out, "stream_data_blocked stream id", *stream_id)?;
            put_u64(out, "stream_data_blocked limit", *limit)?;
        }
        Frame::StreamsBlocked { limit, .. } => put_u64(out, "streams_blocked limit", *limit)?,
        Frame::NewConnectionId { sequence, retire_prior_to, cid, reset_token } => {
            put_u64(out, "new_connection_id sequence", *sequence)?;
            put_u64(out, "new_connection_id retire prior to", *retire_prior_to)?;
            cid.check_encodable()?;
            out.push(cid.len() as u8);
            out.extend_from_slice(cid.as_bytes());
            out.extend_from_slice(reset_token);
        }
        Frame::RetireConnectionId { sequence } => put_u64(out, "retire_connection_id sequence", *sequence)?,
        Frame::PathChallenge { data } | Frame::PathResponse { data } => out.extend_from_slice(data),
        Frame::ConnectionClose { kind, error_code, reason } => {
            put_u64(out, "connection_close error code", *error_code)?;
            if let CloseKind::Transport { frame_type } = kind {
                put_u64(out, "connection_close frame type", *frame_type)?;
            }
            put_bytes(out, "connection_close reason", reason)?;
        }
        Frame::Unknown { frame_type, body } => {
            if is_assigned(*frame_type) {
                return Err(WireError::Range { field: "unknown frame type", value: *frame_type });
            }
            put_bytes(out, "unknown frame body", body)?;
        }
    }
    Ok(())
}

/// Whether `code` is a draft-29 frame type.
pub fn is_assigned(code: u64) -> bool {
    code <= 0x1e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rt(f: Frame) {
        let bytes = encode_frame(&f).unwrap();
        let (back, n) = decode_frame(&bytes).unwrap();
        assert_eq!(n, bytes.len(), "{f:?}");
        assert_eq!(back, f);
    }

    #[test]
    fn single_byte_frames() {
        assert_eq!(decode_frame(&[0x00]).unwrap(), (Frame::Padding { len: 1 }, 1));
        assert_eq!(decode_frame(&[0x01]).unwrap(), (Frame::Ping, 1));
        assert_eq!(encode_frame(&Frame::Padding { len: 1 }).unwrap(), [0x00]);
        assert_eq!(decode_frame(&[0x1e, 0x01]).unwrap(), (Frame::HandshakeDone, 1));
    }

    #[test]
    fn padding_run_is_one_frame() {
        assert_eq!(decode_frame(&[0, 0, 0, 1]).unwrap(), (Frame::Padding { len: 3 }, 3));
    }

    #[test]
    fn unknown_type_is_lossless() {
        let (f, n) = decode_frame(&[0x21, 0x02, 0xaa, 0xbb, 0x01]).unwrap();
        assert_eq!(n, 4);
        assert_eq!(f, Frame::Unknown { frame_type: 0x21, body: vec![0xaa, 0xbb] });
        assert_eq!(encode_frame(&f).unwrap(), [0x21, 0x02, 0xaa, 0xbb]);
        assert!(encode_frame(&Frame::Unknown { frame_type: 0x10, body: vec![] }).is_err());
    }

    #[test]
    fn empty_new_token_has_zero_length_field() {
        assert_eq!(encode_frame(&Frame::NewToken { token: vec![] }).unwrap(), [0x07, 0x00]);
    }

    #[test]
    fn stream_round_trip() {
        let f = Frame::Stream { stream_id: 0, offset: 0, fin: true, data: b"hi".to_vec() };
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(bytes, [0x0b, 0x00, 0x02, b'h', b'i']);
        rt(f);
        rt(Frame::Stream { stream_id: 4, offset: 1000, fin: false, data: vec![7; 300] });
    }

    #[test]
    fn stream_without_length_runs_to_end() {
        let (f, n) = decode_frame(&[0x08, 0x04, 1, 2, 3]).unwrap();
        assert_eq!(n, 5);
        assert_eq!(f, Frame::Stream { stream_id: 4, offset: 0, fin: false, data: vec![1, 2, 3] });
    }

    #[test]
    fn ack_from_set() {
        let set: BTreeSet<u64> = [0, 1, 2, 5].into_iter().collect();
        let f = Frame::ack_for(&set, 3).unwrap();
        assert_eq!(f.acked_packets(), set);
        assert_eq!(f.ack_ranges().unwrap(), vec![(5, 5), (0, 2)]);
        rt(f);
        let single: BTreeSet<u64> = [9].into_iter().collect();
        assert_eq!(Frame::ack_for(&single, 0).unwrap().acked_packets(), single);
        assert!(Frame::ack_for(&BTreeSet::new(), 0).is_none());
    }

    #[test]
    fn ack_underflow_rejected() {
        // largest 1, first range 5
        assert!(matches!(decode_frame(&[0x02, 0x01, 0x00, 0x00, 0x05]), Err(WireError::Malformed { .. })));
    }

    #[test]
    fn truncated_frames_name_field() {
        match decode_frame(&[0x18, 0x01, 0x00, 0x08, 1, 2]) {
            Err(WireError::Truncated { field, .. }) => assert_eq!(field, "new_connection_id cid"),
            other => panic!("{other:?}"),
        }
        assert!(decode_frame(&[0x1a, 1, 2, 3]).is_err());
    }

    #[test]
    fn misc_round_trips() {
        rt(Frame::NewConnectionId {
            sequence: 3,
            retire_prior_to: 1,
            cid: ConnectionId::new(&[9; 8]).unwrap(),
            reset_token: [1; 16],
        });
        rt(Frame::ConnectionClose {
            kind: CloseKind::Transport { frame_type: 0x07 },
            error_code: 0xa,
            reason: b"bad".to_vec(),
        });
        rt(Frame::ConnectionClose { kind: CloseKind::Application, error_code: 3, reason: vec![] });
        rt(Frame::MaxStreams { bidi: false, max: 1 << 60 });
        rt(Frame::StreamsBlocked { bidi: true, limit: 7 });
        rt(Frame::Ack {
            largest: 100,
            delay: 2,
            first_range: 3,
            ranges: vec![AckRange { gap: 1, len: 4 }],
            ecn: Some(EcnCounts { ect0: 1, ect1: 2, ce: 3 }),
        });
    }

    #[test]
    fn oversized_cid_cannot_be_encoded() {
        let f = Frame::NewConnectionId {
            sequence: 1,
            retire_prior_to: 0,
            cid: ConnectionId::from_wire(&[0; 17]),
            reset_token: [0; 16],
        };
        assert!(encode_frame(&f).is_err());
    }
}
