//! Per-packet lifecycle records and their aggregation into delay and loss
//! statistics.

use std::fmt::Write as _;

use crate::error::SimError;
use crate::kernel::SimTime;
use crate::traffic::{DropReason, Packet, PacketId, PriorityClass};

/// Owns every packet generated in a run and closes each lifecycle exactly
/// once.
#[derive(Debug, Default, Clone)]
pub struct PacketLedger {
    packets: Vec<Packet>,
}

impl PacketLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&self) -> PacketId {
        PacketId(self.packets.len() as u32)
    }

    pub fn insert(&mut self, packet: Packet) -> PacketId {
        debug_assert_eq!(packet.id, self.next_id());
        let id = packet.id;
        self.packets.push(packet);
        id
    }

    pub fn get(&self, id: PacketId) -> &Packet {
        &self.packets[id.0 as usize]
    }

    pub fn all(&self) -> &[Packet] {
        &self.packets
    }

    pub fn is_finalized(&self, id: PacketId) -> bool {
        self.get(id).is_finalized()
    }

    /// Reception of the packet's final DATA frame at the sink.
    pub fn record_delivery(&mut self, id: PacketId, at: SimTime) -> Result<(), SimError> {
        let p = &mut self.packets[id.0 as usize];
        if p.is_finalized() {
            return Err(SimError::DoubleFinalize(id));
        }
        if at <= p.generated_at {
            return Err(SimError::ProtocolLogic(format!(
                "{id} received at {at}, not after generation at {}",
                p.generated_at
            )));
        }
        p.delivered_at = Some(at);
        Ok(())
    }

    pub fn record_drop(&mut self, id: PacketId, reason: DropReason) -> Result<(), SimError> {
        let p = &mut self.packets[id.0 as usize];
        if p.is_finalized() {
            return Err(SimError::DoubleFinalize(id));
        }
        p.drop_reason = Some(reason);
        Ok(())
    }
}

/// Aggregated statistics of one priority class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassStats {
    pub generated: u64,
    pub delivered: u64,
    pub dropped_deadline: u64,
    pub dropped_retry: u64,
    pub dropped_overflow: u64,
    pub mean_delay_us: Option<f64>,
    pub p95_delay_us: Option<u64>,
    pub max_delay_us: Option<u64>,
}

impl ClassStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_deadline + self.dropped_retry + self.dropped_overflow
    }

    /// Packets neither delivered nor dropped when the run ended.
    pub fn residual(&self) -> u64 {
        self.generated - self.delivered - self.dropped()
    }

    /// dropped / generated; `None` when nothing was generated.
    pub fn loss_rate(&self) -> Option<f64> {
        (self.generated > 0).then(|| self.dropped() as f64 / self.generated as f64)
    }
}

/// p95 by the nearest-rank method over an ascending sample.
fn nearest_rank_p95(sorted: &[u64]) -> u64 {
    let rank = (sorted.len() * 95).div_ceil(100).max(1);
    sorted[rank - 1]
}

/// Aggregates the packets of `class`. Delay fields are `None` when nothing
/// was delivered.
pub fn aggregate_class<'a, I>(packets: I, class: PriorityClass) -> ClassStats
where
    I: IntoIterator<Item = &'a Packet>,
{
    let mut stats = ClassStats::default();
    let mut delays = Vec::new();
    for p in packets.into_iter().filter(|p| p.class == class) {
        stats.generated += 1;
        if let Some(d) = p.delay_us() {
            stats.delivered += 1;
            delays.push(d);
        }
        match p.drop_reason {
            Some(DropReason::DeadlineExpired) => stats.dropped_deadline += 1,
            Some(DropReason::RetryLimit) => stats.dropped_retry += 1,
            Some(DropReason::QueueOverflow) => stats.dropped_overflow += 1,
            None => {}
        }
    }
    if !delays.is_empty() {
        delays.sort_unstable();
        let sum: u128 = delays.iter().map(|&d| d as u128).sum();
        stats.mean_delay_us = Some(sum as f64 / delays.len() as f64);
        stats.p95_delay_us = Some(nearest_rank_p95(&delays));
        stats.max_delay_us = delays.last().copied();
    }
    stats
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    SsMac,
    FrogMac,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::SsMac => "ssmac",
            Protocol::FrogMac => "frogmac",
        }
    }

    pub fn parse(s: &str) -> Option<Protocol> {
        match s.to_ascii_lowercase().as_str() {
            "ssmac" | "ss-mac" => Some(Protocol::SsMac),
            "frogmac" | "frog-mac" => Some(Protocol::FrogMac),
            _ => None,
        }
    }
}

/// Identifies one simulated configuration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScenarioKey {
    pub preset: String,
    pub protocol: Protocol,
    pub n_urgent: usize,
    pub frag_size: u32,
    pub seed: u64,
}

impl ScenarioKey {
    pub fn id(&self) -> String {
        format!(
            "{}-{}-n{}-f{}-s{}",
            self.preset,
            self.protocol.as_str(),
            self.n_urgent,
            self.frag_size,
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub key: ScenarioKey,
    pub urgent: ClassStats,
    pub normal: ClassStats,
}

impl ScenarioResult {
    pub fn from_packets(key: ScenarioKey, packets: &[Packet]) -> Self {
        ScenarioResult {
            key,
            urgent: aggregate_class(packets, PriorityClass::Urgent),
            normal: aggregate_class(packets, PriorityClass::Normal),
        }
    }

    pub fn class(&self, class: PriorityClass) -> &ClassStats {
        match class {
            PriorityClass::Urgent => &self.urgent,
            PriorityClass::Normal => &self.normal,
        }
    }
}

pub const CSV_HEADER: &str = "scenario_id,protocol,n_urgent,frag_size,seed,class,generated,delivered,dropped_deadline,dropped_retry,dropped_overflow,mean_delay_us,p95_delay_us,max_delay_us";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV line (no trailing newline) for `class` of `result`.
pub fn csv_row(result: &ScenarioResult, class: PriorityClass) -> String {
    let s = result.class(class);
    let k = &result.key;
    let mut line = String::new();
    write!(
        line,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        k.id(),
        k.protocol.as_str(),
        k.n_urgent,
        k.frag_size,
        k.seed,
        class.as_str(),
        s.generated,
        s.delivered,
        s.dropped_deadline,
        s.dropped_retry,
        s.dropped_overflow,
        opt(s.mean_delay_us.map(|m| format!("{m:.3}"))),
        opt(s.p95_delay_us),
        opt(s.max_delay_us),
    )
    .expect("write to String");
    line
}

/// Full CSV document: header plus urgent and normal rows per result, in the
/// given order.
pub fn to_csv(results: &[ScenarioResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in results {
        for class in PriorityClass::ALL {
            out.push_str(&csv_row(r, class));
            out.push('\n');
        }
    }
    out
}
