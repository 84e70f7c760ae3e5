//! Application traffic: two priority classes generated periodically with a
//! random per-node phase.

use std::fmt;

use crate::channel::NodeId;
use crate::kernel::{RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketId(pub u32);

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Urgent (time-critical) or normal (best-effort) traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PriorityClass {
    Urgent,
    Normal,
}

impl PriorityClass {
    pub const ALL: [PriorityClass; 2] = [PriorityClass::Urgent, PriorityClass::Normal];

    pub fn as_str(self) -> &'static str {
        match self {
            PriorityClass::Urgent => "urgent",
            PriorityClass::Normal => "normal",
        }
    }

    pub fn index(self) -> usize {
        match self {
            PriorityClass::Urgent => 0,
            PriorityClass::Normal => 1,
        }
    }
}

impl fmt::Display for PriorityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    DeadlineExpired,
    RetryLimit,
    QueueOverflow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub id: PacketId,
    pub class: PriorityClass,
    pub src: NodeId,
    pub length_bytes: u32,
    pub generated_at: SimTime,
    pub deadline_at: Option<SimTime>,
    pub delivered_at: Option<SimTime>,
    pub drop_reason: Option<DropReason>,
}

impl Packet {
    pub fn is_finalized(&self) -> bool {
        self.delivered_at.is_some() || self.drop_reason.is_some()
    }

    pub fn delay_us(&self) -> Option<u64> {
        self.delivered_at.map(|d| d - self.generated_at)
    }
}

/// Periodic generation pattern of one class at one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficSpec {
    pub class: PriorityClass,
    pub interval_us: u64,
    pub phase_us: u64,
}

impl TrafficSpec {
    /// Draws the phase uniformly in `[0, interval)`.
    pub fn with_random_phase(class: PriorityClass, interval_us: u64, rng: &mut RngStream) -> Self {
        assert!(interval_us > 0, "traffic interval must be positive");
        TrafficSpec {
            class,
            interval_us,
            phase_us: rng.below(interval_us),
        }
    }
}

/// Generation instants `phase, phase + interval, ...` strictly before
/// `horizon`.
pub fn arrivals(spec: &TrafficSpec, horizon: SimTime) -> Vec<SimTime> {
    assert!(spec.interval_us > 0, "traffic interval must be positive");
    let mut out = Vec::new();
    let mut t = spec.phase_us;
    while t < horizon.as_micros() {
        out.push(SimTime(t));
        t += spec.interval_us;
    }
    out
}

/// Packet-construction parameters shared by all nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketTemplate {
    pub length_bytes: u32,
    pub urgent_deadline_us: u64,
}

impl Default for PacketTemplate {
    fn default() -> Self {
        PacketTemplate {
            length_bytes: 34,
            urgent_deadline_us: 100_000,
        }
    }
}

pub fn make_packet(
    id: PacketId,
    class: PriorityClass,
    src: NodeId,
    at: SimTime,
    template: &PacketTemplate,
) -> Packet {
    let deadline_at = match class {
        PriorityClass::Urgent => Some(at + template.urgent_deadline_us),
        PriorityClass::Normal => None,
    };
    Packet {
        id,
        class,
        src,
        length_bytes: template.length_bytes,
        generated_at: at,
        deadline_at,
        delivered_at: None,
        drop_reason: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(interval_s: u64, phase: u64) -> TrafficSpec {
        TrafficSpec {
            class: PriorityClass::Normal,
            interval_us: interval_s * 1_000_000,
            phase_us: phase,
        }
    }

    #[test]
    fn arithmetic_progression() {
        let a = arrivals(&spec(10, 0), SimTime::from_secs(35));
        let secs: Vec<u64> = a.iter().map(|t| t.as_micros() / 1_000_000).collect();
        assert_eq!(secs, vec![0, 10, 20, 30]);
    }

    #[test]
    fn urgent_count_over_full_horizon() {
        // Enumeration oracle: count k >= 0 with k * 120 < 5000.
        let expected = (0u64..).take_while(|k| k * 120 < 5000).count();
        assert_eq!(expected, 42);
        let a = arrivals(&spec(120, 0), SimTime::from_secs(5000));
        assert_eq!(a.len(), expected);
    }

    #[test]
    fn zero_horizon_is_empty() {
        assert!(arrivals(&spec(10, 0), SimTime::ZERO).is_empty());
    }

    #[test]
    fn urgent_packet_gets_deadline() {
        let tpl = PacketTemplate::default();
        let p = make_packet(
            PacketId(1),
            PriorityClass::Urgent,
            NodeId(3),
            SimTime::from_millis(100),
            &tpl,
        );
        assert_eq!(p.deadline_at, Some(SimTime::from_millis(200)));
        assert_eq!(p.length_bytes, 34);
    }

    #[test]
    fn normal_packet_has_no_deadline() {
        let tpl = PacketTemplate::default();
        let p = make_packet(
            PacketId(2),
            PriorityClass::Normal,
            NodeId(3),
            SimTime(77),
            &tpl,
        );
        assert_eq!(p.deadline_at, None);
    }

    #[test]
    fn length_override_passes_through() {
        let tpl = PacketTemplate {
            length_bytes: 68,
            ..PacketTemplate::default()
        };
        let p = make_packet(
            PacketId(3),
            PriorityClass::Normal,
            NodeId(1),
            SimTime(0),
            &tpl,
        );
        assert_eq!(p.length_bytes, 68);
    }

    #[test]
    fn random_phase_is_within_interval() {
        let mut rng = RngStream::new(1, 1);
        for _ in 0..1000 {
            let s = TrafficSpec::with_random_phase(PriorityClass::Urgent, 120_000_000, &mut rng);
            assert!(s.phase_us < 120_000_000);
        }
    }
}
