//! End-of-iteration judgement: how the peer reacted to the stimulus and
//! whether the test goal was reached.

use serde::{Deserialize, Serialize};

use crate::wire::{error_codes, CloseKind, PnSpace};

use super::migration::check_path_validation;
use super::registry::ids;
use super::state::CloseObservation;
use super::{ConnectionState, Direction, Status, Verdict};

/// What a conformant peer does when the test runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpectedOutcome {
    /// The connection completes without a transport error.
    CleanClose,
    /// The stimulus is ignored and the connection continues.
    Ignored,
    /// The peer closes with one of `codes`; the first is the primary one.
    TransportError { codes: Vec<String> },
    /// Either the handshake never completes or the peer closes with one of `codes`.
    HandshakeFailureOrError { codes: Vec<String> },
}

impl ExpectedOutcome {
    pub fn error_codes(&self) -> Vec<u64> {
        match self {
            ExpectedOutcome::TransportError { codes } | ExpectedOutcome::HandshakeFailureOrError { codes } => {
                codes.iter().filter_map(|c| error_codes::by_name(c)).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn expects_error(&self) -> bool {
        !self.error_codes().is_empty()
    }
}

/// End-of-run predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Goal {
    /// At least `count` client requests were answered or cancelled.
    RequestsServed { count: u32 },
    /// The tester closed the connection.
    ConnectionClosed,
    /// The tester committed the armed violation.
    StimulusDelivered,
    /// The server rejected the token, or the handshake never completed.
    InvalidTokenOrNoHandshake,
}

/// Client-initiated bidirectional streams that got a full response or were
/// reset by either side.
pub fn requests_served(state: &ConnectionState) -> u32 {
    let client = state.client();
    let server = state.server();
    client
        .flow
        .sent
        .iter()
        .filter(|(id, st)| {
            if **id & 3 != 0 {
                return false;
            }
            let answered = server
                .flow
                .sent
                .get(id)
                .is_some_and(|r| r.reset || r.final_size.is_some_and(|fs| fs == r.max_end));
            answered || st.reset
        })
        .count() as u32
}

fn close_level(c: &CloseObservation) -> Result<(), String> {
    match c.space {
        PnSpace::Application if !c.sender_finished => Err("1-RTT CONNECTION_CLOSE before the sender's Finished".into()),
        PnSpace::Initial | PnSpace::Handshake if c.sender_confirmed => {
            Err(format!("{} CONNECTION_CLOSE after handshake confirmation", c.space))
        }
        _ => Ok(()),
    }
}

fn describe_close(c: &CloseObservation) -> String {
    let kind = match c.kind {
        CloseKind::Transport { .. } => "transport",
        CloseKind::Application => "application",
    };
    format!("{kind} close {} in {} packet {}", error_codes::describe(c.error_code), c.space, c.packet_number)
}

/// Classifies the peer's reaction against `expected`.
pub fn check_error_response(state: &ConnectionState, expected: &ExpectedOutcome) -> Verdict {
    let peer = Direction::FromPeer;
    let close = state.peer.close.as_ref();
    let at = |id: &str, status, ev: u64, detail: String| {
        let mut v = state.verdict(id, status, peer, ev, detail);
        v.at_ms = state.now_ms;
        v
    };
    let ev = state.next_event;

    let codes = expected.error_codes();
    if codes.is_empty() {
        return match close {
            Some(c) if matches!(c.kind, CloseKind::Transport { .. }) && c.error_code != error_codes::NO_ERROR => {
                at(ids::ERR_UNEXPECTED_CLOSE, Status::Violation, c.event_index, describe_close(c))
            }
            _ => at(ids::ERR_UNEXPECTED_CLOSE, Status::Pass, ev, "no transport error".into()),
        };
    }

    let Some(stim) = &state.stimulus else {
        return at(ids::ERR_NO_REACTION, Status::Pass, ev, "stimulus never delivered".into());
    };
    match close {
        Some(c) => {
            let primary = codes[0];
            if matches!(c.kind, CloseKind::Application) || !codes.contains(&c.error_code) {
                let want: Vec<String> = codes.iter().map(|c| error_codes::describe(*c)).collect();
                return at(
                    ids::ERR_CODE_EXPECTED,
                    Status::Violation,
                    c.event_index,
                    format!("{}; expected one of {}", describe_close(c), want.join(", ")),
                );
            }
            if let Err(why) = close_level(c) {
                return at(ids::ERR_WRONG_LEVEL, Status::Violation, c.event_index, format!("{}: {why}", describe_close(c)));
            }
            let which = if c.error_code == primary { "primary" } else { "alternative" };
            at(ids::ERR_CODE_EXPECTED, Status::Pass, c.event_index, format!("{} ({which})", describe_close(c)))
        }
        None => {
            if matches!(expected, ExpectedOutcome::HandshakeFailureOrError { .. }) && !state.handshake_complete() {
                return at(ids::ERR_CODE_EXPECTED, Status::Pass, ev, "handshake did not complete".into());
            }
            if state.peer_datagrams_after_stimulus == 0 {
                at(ids::ERR_SILENT, Status::Violation, stim.event_index, format!("peer went silent after {}", stim.requirement))
            } else {
                at(
                    ids::ERR_NO_REACTION,
                    Status::Violation,
                    stim.event_index,
                    format!("peer sent {} datagrams after {} without closing", state.peer_datagrams_after_stimulus, stim.requirement),
                )
            }
        }
    }
}

/// Evaluates the test goal.
pub fn finalize_check(state: &ConnectionState, goal: &Goal) -> Verdict {
    let (ok, detail) = match goal {
        Goal::RequestsServed { count } => {
            let n = requests_served(state);
            (n >= *count, format!("{n} of {count} requests served"))
        }
        Goal::ConnectionClosed => (state.tester.close.is_some(), "tester closed the connection".into()),
        Goal::StimulusDelivered => match &state.stimulus {
            Some(s) => (true, format!("{} delivered at event {}", s.requirement, s.event_index)),
            None => (false, "stimulus never delivered".into()),
        },
        Goal::InvalidTokenOrNoHandshake => {
            if state.is_invalid_token {
                (true, "token rejected".into())
            } else {
                (!state.handshake_complete(), format!("handshake complete: {}", state.handshake_complete()))
            }
        }
    };
    let status = if ok { Status::Pass } else { Status::Violation };
    let mut v = state.verdict(ids::GOAL_REACHED, status, Direction::FromPeer, state.next_event, detail);
    v.at_ms = state.now_ms;
    v
}

/// Every end-of-run verdict: open path validations, the reaction to the
/// stimulus and the goal.
pub fn end_of_iteration(state: &ConnectionState, goal: &Goal, expected: &ExpectedOutcome) -> Vec<Verdict> {
    let mut out = check_path_validation(state);
    out.push(check_error_response(state, expected));
    out.push(finalize_check(state, goal));
    out
}
