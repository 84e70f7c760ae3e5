//! Shared half-duplex broadcast medium of a single-hop star.
//!
//! Every node hears every other node with zero propagation delay, so carrier
//! sense is globally consistent. A frame reaches its receivers intact iff no
//! other transmission overlapped its half-open airtime interval. Emergency
//! indications are detected by energy on an OR-channel and survive overlap.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::SimError;
use crate::kernel::SimTime;
use crate::traffic::PacketId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u16);

impl NodeId {
    pub const SINK: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    Node(NodeId),
    Broadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FrameKind {
    Data,
    Fragment,
    Rts,
    Cts,
    Ack,
    EisInd,
    RrpReq,
    DspBcast,
}

impl FrameKind {
    pub const ALL: [FrameKind; 8] = [
        FrameKind::Data,
        FrameKind::Fragment,
        FrameKind::Rts,
        FrameKind::Cts,
        FrameKind::Ack,
        FrameKind::EisInd,
        FrameKind::RrpReq,
        FrameKind::DspBcast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Data => "DATA",
            FrameKind::Fragment => "FRAGMENT",
            FrameKind::Rts => "RTS",
            FrameKind::Cts => "CTS",
            FrameKind::Ack => "ACK",
            FrameKind::EisInd => "EIS_IND",
            FrameKind::RrpReq => "RRP_REQ",
            FrameKind::DspBcast => "DSP_BCAST",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// One controller grant: DTP slot `rank` (1-based) belongs to `node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaoEntry {
    pub node: NodeId,
    pub deadline: SimTime,
    pub rank: u32,
}

/// Kind-specific frame contents.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum FrameMeta {
    #[default]
    None,
    /// RTS/CTS/DATA: medium reserved for everyone until `nav_until`.
    Reservation { nav_until: SimTime },
    /// One fragment of a normal packet. `nav_until` covers its ACK;
    /// `soft_nav_until` keeps other normal senders off the following
    /// inter-fragment gap while leaving it open to urgent traffic.
    Fragment {
        index: u16,
        count: u16,
        nav_until: SimTime,
        soft_nav_until: Option<SimTime>,
    },
    /// Acknowledgement; for fragments, repeats the fragment's soft reservation.
    Ack { soft_nav_until: Option<SimTime> },
    /// Reservation request carrying the head packet's absolute deadline.
    Request { deadline: SimTime },
    /// Channel allocation order broadcast by the controller.
    Schedule(Arc<Vec<CaoEntry>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub src: NodeId,
    pub dst: Dest,
    pub length_bytes: u32,
    pub packet: Option<PacketId>,
    pub meta: FrameMeta,
}

impl Frame {
    pub fn new(kind: FrameKind, src: NodeId, dst: Dest, length_bytes: u32) -> Self {
        Frame {
            kind,
            src,
            dst,
            length_bytes,
            packet: None,
            meta: FrameMeta::None,
        }
    }

    pub fn with_packet(mut self, packet: PacketId) -> Self {
        self.packet = Some(packet);
        self
    }

    pub fn with_meta(mut self, meta: FrameMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn is_for(&self, node: NodeId) -> bool {
        match self.dst {
            Dest::Node(d) => d == node,
            Dest::Broadcast => self.src != node,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarrierState {
    Idle,
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId(pub u64);

#[derive(Debug, Clone)]
struct Transmission {
    id: TxId,
    src: NodeId,
    start: SimTime,
    end: SimTime,
    frame: Frame,
    corrupted: bool,
    completed: bool,
}

/// A finished transmission as seen by the receivers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub id: TxId,
    pub src: NodeId,
    pub start: SimTime,
    pub end: SimTime,
    pub frame: Frame,
    pub intact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelConfig {
    /// Airtime of one byte; 32us is 250 kbit/s.
    pub byte_time_us: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig { byte_time_us: 32 }
    }
}

/// Per-kind frame and collision counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub sent: [u64; 8],
    pub corrupted: [u64; 8],
}

impl ChannelStats {
    pub fn sent(&self, kind: FrameKind) -> u64 {
        self.sent[kind.slot()]
    }

    pub fn corrupted(&self, kind: FrameKind) -> u64 {
        self.corrupted[kind.slot()]
    }
}

// Completed transmissions are kept this long for idle-time and OR-channel
// queries.
const HISTORY_US: u64 = 20_000;

pub struct Channel {
    config: ChannelConfig,
    // Ordered by start time; includes recently completed transmissions.
    log: Vec<Transmission>,
    next_id: u64,
    last_start: SimTime,
    stats: ChannelStats,
}

impl Channel {
    pub fn new(config: ChannelConfig) -> Self {
        Channel {
            config,
            log: Vec::new(),
            next_id: 0,
            last_start: SimTime::ZERO,
            stats: ChannelStats::default(),
        }
    }

    pub fn config(&self) -> ChannelConfig {
        self.config
    }

    pub fn airtime(&self, length_bytes: u32) -> u64 {
        length_bytes as u64 * self.config.byte_time_us
    }

    pub fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    /// Registers a transmission of `frame` by `src` over `[at, at + airtime)`
    /// and returns its id and end time. Starts must be registered in
    /// non-decreasing time order.
    pub fn transmit(
        &mut self,
        src: NodeId,
        frame: Frame,
        at: SimTime,
    ) -> Result<(TxId, SimTime), SimError> {
        if at < self.last_start {
            return Err(SimError::TransmissionOutOfOrder {
                at,
                last: self.last_start,
            });
        }
        assert!(frame.length_bytes >= 1, "zero-length frame");
        self.last_start = at;
        self.prune(at);

        if let Some(own) = self.log.iter().find(|tx| tx.src == src && tx.end > at) {
            return Err(SimError::OverlappingSelfTransmission {
                node: src,
                at,
                busy_until: own.end,
            });
        }
        let end = at + self.airtime(frame.length_bytes);
        let mut corrupted = false;
        for tx in self.log.iter_mut().filter(|tx| tx.end > at) {
            if !tx.corrupted {
                tx.corrupted = true;
                self.stats.corrupted[tx.frame.kind.slot()] += 1;
            }
            corrupted = true;
        }
        if corrupted {
            self.stats.corrupted[frame.kind.slot()] += 1;
        }
        self.stats.sent[frame.kind.slot()] += 1;

        let id = TxId(self.next_id);
        self.next_id += 1;
        self.log.push(Transmission {
            id,
            src,
            start: at,
            end,
            frame,
            corrupted,
            completed: false,
        });
        Ok((id, end))
    }

    /// Finalizes a transmission once its end time is reached and reports
    /// whether receivers got it intact.
    pub fn complete(&mut self, id: TxId) -> Result<Delivery, SimError> {
        let tx = self
            .log
            .iter_mut()
            .find(|tx| tx.id == id && !tx.completed)
            .ok_or(SimError::UnknownTransmission(id.0))?;
        tx.completed = true;
        Ok(Delivery {
            id,
            src: tx.src,
            start: tx.start,
            end: tx.end,
            frame: tx.frame.clone(),
            intact: !tx.corrupted,
        })
    }

    fn prune(&mut self, now: SimTime) {
        let horizon = now.saturating_since(SimTime(HISTORY_US));
        if self
            .log
            .first()
            .is_some_and(|tx| tx.completed && tx.end.0 < horizon)
        {
            self.log.retain(|tx| !(tx.completed && tx.end.0 < horizon));
        }
    }

    fn others(&self, node: NodeId) -> impl Iterator<Item = &Transmission> {
        self.log.iter().filter(move |tx| tx.src != node)
    }

    /// Physical carrier sense: busy iff another node's transmission covers
    /// `at` (intervals are half-open).
    pub fn carrier_sense(&self, node: NodeId, at: SimTime) -> CarrierState {
        if self.others(node).any(|tx| tx.start <= at && at < tx.end) {
            CarrierState::Busy
        } else {
            CarrierState::Idle
        }
    }

    /// End of the current busy period as seen by `node`, or `None` if idle.
    pub fn busy_until(&self, node: NodeId, at: SimTime) -> Option<SimTime> {
        self.others(node)
            .filter(|tx| tx.start <= at && at < tx.end)
            .map(|tx| tx.end)
            .max()
    }

    /// Latest end of another node's transmission at or before `at`.
    pub fn idle_since(&self, node: NodeId, at: SimTime) -> SimTime {
        self.others(node)
            .filter(|tx| tx.end <= at)
            .map(|tx| tx.end)
            .max()
            .unwrap_or(SimTime::ZERO)
    }

    /// Whether any other node's transmission overlapped `window`.
    pub fn activity_in(&self, node: NodeId, window: Range<SimTime>) -> bool {
        self.others(node)
            .any(|tx| tx.start < window.end && window.start < tx.end)
    }

    /// Energy detection of emergency indications: true iff at least one
    /// EIS_IND transmission overlapped `window`, regardless of collisions.
    pub fn or_channel_sense(&self, _controller: NodeId, window: Range<SimTime>) -> bool {
        self.log.iter().any(|tx| {
            tx.frame.kind == FrameKind::EisInd && tx.start < window.end && window.start < tx.end
        })
    }

    pub fn is_transmitting(&self, node: NodeId, at: SimTime) -> bool {
        self.transmitting_until(node, at).is_some()
    }

    /// End of `node`'s own transmission covering `at`, if any.
    pub fn transmitting_until(&self, node: NodeId, at: SimTime) -> Option<SimTime> {
        self.log
            .iter()
            .find(|tx| tx.src == node && tx.start <= at && at < tx.end)
            .map(|tx| tx.end)
    }
}
