//! Model-based conformance testing for QUIC draft-29 endpoints.
//!
//! The crate is split along the path a test takes:
//!
//! * [`wire`] encodes and decodes varints, frames, packets and transport
//!   parameters.
//! * [`engine`] is the monitor. It consumes datagrams in both directions,
//!   keeps per-connection state and emits [`engine::Verdict`]s against a
//!   registry of requirements.
//! * [`gen`] draws weighted random frames and packets that respect the
//!   monitored state, and applies mutations that break exactly one
//!   requirement.
//! * [`catalog`] holds the server- and client-facing test definitions.
//! * [`harness`] runs iterations against a simulated peer or a UDP target,
//!   replays recorded traces and aggregates reports.
//! * [`cli`] is the command-line front end.

pub mod catalog;
pub mod cli;
pub mod engine;
pub mod gen;
pub mod harness;
pub mod wire;
