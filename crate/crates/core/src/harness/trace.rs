//! Recorded datagram traces.
//!
//! One record per line:
//!
//! ```text
//! # comment
//! iteration <index> <seed>
//! T <ms> <src> <dst> <hex>     datagram sent by the tester
//! P <ms> <src> <dst> <hex>     datagram sent by the peer
//! end <ms>
//! ```

use std::fmt::Write as _;
use std::net::SocketAddr;

use crate::engine::{Datagram, Direction};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceIteration {
    pub index: u32,
    pub seed: u64,
    pub datagrams: Vec<Datagram>,
    pub end_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub iterations: Vec<TraceIteration>,
}

impl Trace {
    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut out = Vec::new();
        let mut open: Option<(TraceIteration, usize)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| TraceError { line, message };
            let rec = raw.trim();
            if rec.is_empty() || rec.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = rec.split_whitespace().collect();
            match fields[0] {
                "iteration" => {
                    if let Some((it, at)) = open.take() {
                        return Err(TraceError { line: at, message: format!("iteration {} has no end record", it.index) });
                    }
                    let [_, index, seed] = fields[..] else {
                        return Err(err("expected `iteration <index> <seed>`".into()));
                    };
                    let index = index.parse().map_err(|_| err(format!("bad iteration index `{index}`")))?;
                    let seed = seed.parse().map_err(|_| err(format!("bad seed `{seed}`")))?;
                    open = Some((TraceIteration { index, seed, datagrams: Vec::new(), end_ms: 0 }, line));
                }
                "T" | "P" => {
                    let Some((it, _)) = open.as_mut() else {
                        return Err(err("datagram outside an iteration".into()));
                    };
                    let [dir, ms, src, dst, hex] = fields[..] else {
                        return Err(err("expected `T|P <ms> <src> <dst> <hex>`".into()));
                    };
                    let dir = if dir == "T" { Direction::FromTester } else { Direction::FromPeer };
                    let at_ms = ms.parse().map_err(|_| err(format!("bad timestamp `{ms}`")))?;
                    let src: SocketAddr = src.parse().map_err(|_| err(format!("bad address `{src}`")))?;
                    let dst: SocketAddr = dst.parse().map_err(|_| err(format!("bad address `{dst}`")))?;
                    let bytes = hex::decode(hex).map_err(|e| err(format!("bad hex: {e}")))?;
                    it.datagrams.push(Datagram { dir, src, dst, at_ms, bytes });
                }
                "end" => {
                    let Some((mut it, _)) = open.take() else {
                        return Err(err("end outside an iteration".into()));
                    };
                    let [_, ms] = fields[..] else {
                        return Err(err("expected `end <ms>`".into()));
                    };
                    it.end_ms = ms.parse().map_err(|_| err(format!("bad timestamp `{ms}`")))?;
                    out.push(it);
                }
                other => return Err(err(format!("unknown record `{other}`"))),
            }
        }
        if let Some((it, at)) = open {
            return Err(TraceError { line: at, message: format!("iteration {} has no end record", it.index) });
        }
        Ok(Trace { iterations: out })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# quicheck trace v1\n");
        for it in &self.iterations {
            let _ = writeln!(s, "iteration {} {}", it.index, it.seed);
            for d in &it.datagrams {
                let tag = if d.dir == Direction::FromTester { 'T' } else { 'P' };
                let _ = writeln!(s, "{tag} {} {} {} {}", d.at_ms, d.src, d.dst, hex::encode(&d.bytes));
            }
            let _ = writeln!(s, "end {}", it.end_ms);
        }
        s
    }
}
