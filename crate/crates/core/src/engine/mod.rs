//! The specification engine: a passive monitor over decoded traffic.
//!
//! [`ConnectionState`] mirrors one connection as seen from the wire. Every
//! datagram, in either direction, goes through [`ingest_datagram`], which
//! updates the mirror and returns [`Verdict`]s citing entries of the
//! requirement [`Registry`]. The same state drives generation (only
//! state-legal frames are produced) and the end-of-run judgement in
//! [`outcome`].
//!
//! The engine is perspective-neutral. "Tester" is whichever endpoint the
//! caller drives; the simulated peer in the harness runs its own instance with
//! the roles swapped.

pub mod migration;
pub mod monitor;
pub mod outcome;
pub mod registry;
pub mod state;
pub mod tparams;

use std::fmt;
use std::net::SocketAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::{Frame, PacketType, PnSpace};

pub use migration::{check_path_validation, expected_address, is_probing_packet};
pub use monitor::{frame_event, ingest_datagram, packet_event, IngestOutcome, PacketContext};
pub use outcome::{check_error_response, end_of_iteration, finalize_check, ExpectedOutcome, Goal};
pub use registry::{ids, Registry, Requirement, RequirementId, Severity};
pub use state::{CloseObservation, ConnectionState, EndpointView, SendStream};
pub use tparams::check_transport_params;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("requirement registry: {0}")]
    Registry(String),
    #[error("no non-probing packet has been received from the {0}; peer address undefined")]
    UndefinedAddress(Role),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Client,
    Server,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::Client => Role::Server,
            Role::Server => Role::Client,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Client => "client",
            Role::Server => "server",
        }
    }

    /// Low bit of stream ids this role initiates.
    pub fn stream_initiator_bit(self) -> u64 {
        match self {
            Role::Client => 0,
            Role::Server => 1,
        }
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "client" => Ok(Role::Client),
            "server" => Ok(Role::Server),
            other => Err(format!("unknown role `{other}` (expected client or server)")),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    FromTester,
    FromPeer,
}

impl Direction {
    pub fn reverse(self) -> Direction {
        match self {
            Direction::FromTester => Direction::FromPeer,
            Direction::FromPeer => Direction::FromTester,
        }
    }
}

/// How the destination of outgoing packets is chosen after migration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AddressPolicy {
    /// Highest-numbered non-probing packet across all packet number spaces.
    AllLevels,
    /// Highest-numbered non-probing 1-RTT packet only.
    #[default]
    AppLevelOnly,
}

/// One UDP datagram on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datagram {
    pub dir: Direction,
    pub src: SocketAddr,
    pub dst: SocketAddr,
    pub at_ms: u64,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventPayload {
    Datagram { len: usize },
    Packet { packet_type: PacketType, space: PnSpace, packet_number: u64, frames: usize },
    Frame { space: PnSpace, packet_number: u64, frame: Frame },
    Timeout,
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolEvent {
    pub index: u64,
    pub at_ms: u64,
    pub dir: Direction,
    pub src: SocketAddr,
    pub dst: SocketAddr,
    pub payload: EventPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub requirement: RequirementId,
    pub status: Status,
    pub severity: Severity,
    /// Whose behaviour is judged.
    pub direction: Direction,
    pub event_index: u64,
    pub at_ms: u64,
    pub detail: String,
    /// Violation the tester committed on purpose as the test stimulus.
    #[serde(default)]
    pub stimulus: bool,
}

impl Verdict {
    pub fn is_violation(&self) -> bool {
        self.status == Status::Violation
    }

    /// Violation that counts against the peer.
    pub fn counts_against_peer(&self, include_advisory: bool) -> bool {
        self.is_violation()
            && !self.stimulus
            && self.direction == Direction::FromPeer
            && (include_advisory || self.severity == Severity::Error)
    }
}
