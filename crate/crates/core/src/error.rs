use thiserror::Error;

use crate::channel::{FrameKind, NodeId};
use crate::kernel::SimTime;
use crate::traffic::PacketId;

/// Fatal errors that abort a simulation run.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled in the past (at {at}, clock {now})")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error(
        "node {node} started a transmission at {at} while still transmitting until {busy_until}"
    )]
    OverlappingSelfTransmission {
        node: NodeId,
        at: SimTime,
        busy_until: SimTime,
    },

    #[error("transmission at {at} precedes an already registered start at {last}")]
    TransmissionOutOfOrder { at: SimTime, last: SimTime },

    #[error("unknown transmission id {0}")]
    UnknownTransmission(u64),

    #[error("{protocol} cannot handle {kind:?} frames")]
    UnexpectedFrame {
        protocol: &'static str,
        kind: FrameKind,
    },

    #[error("packet {0} finalized twice")]
    DoubleFinalize(PacketId),

    #[error("protocol logic error: {0}")]
    ProtocolLogic(String),
}

/// Problems with a scenario or configuration, reported before any simulation
/// starts.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },

    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),

    #[error("invalid value {value:?} for {key}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("urgent node count {n_urgent} plus normal node count {n_normal} exceeds the {sensors} sensors")]
    TooManyNodes {
        n_urgent: usize,
        n_normal: usize,
        sensors: usize,
    },

    #[error("fragment size {frag_size} outside [2, {packet_length}]")]
    FragSizeOutOfRange { frag_size: u32, packet_length: u32 },

    #[error("inter-fragment gap {gap_us}us does not exceed urgent access time {needed_us}us; urgent traffic could not preempt")]
    GapTooShort { gap_us: u64, needed_us: u64 },

    #[error("{what} ({needed_us}us) does not fit in {slot}={slot_us}us")]
    SlotTooShort {
        what: &'static str,
        needed_us: u64,
        slot: &'static str,
        slot_us: u64,
    },

    #[error("{0}")]
    Invalid(String),
}

/// Failures of the experiment harness and CLI.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("simulation of {scenario} failed: {source}")]
    Sim {
        scenario: String,
        #[source]
        source: SimError,
    },

    #[error("conservation check failed in {scenario}: {detail}")]
    Conservation { scenario: String, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
