//! Contract shared by the MAC implementations, the per-node transmit queues,
//! and the run loop that ties kernel, channel, traffic and metrics together.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;

use crate::channel::{Channel, ChannelConfig, ChannelStats, Delivery, Frame, NodeId, TxId};
use crate::config::SimConfig;
use crate::error::SimError;
use crate::kernel::{EventHandle, RngStream, Scheduler, SimTime};
use crate::metrics::PacketLedger;
use crate::traffic::{
    arrivals, make_packet, DropReason, Packet, PacketId, PacketTemplate, PriorityClass, TrafficSpec,
};

pub type SimResult<T = ()> = Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    SinkController,
    Sensor,
}

/// Per-node transmit queues: one FIFO per class, urgent always served first.
#[derive(Debug, Clone)]
pub struct TxQueue {
    urgent: VecDeque<PacketId>,
    normal: VecDeque<PacketId>,
    capacity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueOverflow;

impl TxQueue {
    pub fn new(capacity: usize) -> Self {
        TxQueue {
            urgent: VecDeque::new(),
            normal: VecDeque::new(),
            capacity,
        }
    }

    fn lane(&self, class: PriorityClass) -> &VecDeque<PacketId> {
        match class {
            PriorityClass::Urgent => &self.urgent,
            PriorityClass::Normal => &self.normal,
        }
    }

    fn lane_mut(&mut self, class: PriorityClass) -> &mut VecDeque<PacketId> {
        match class {
            PriorityClass::Urgent => &mut self.urgent,
            PriorityClass::Normal => &mut self.normal,
        }
    }

    /// Tail-drop: a full lane rejects the arriving packet.
    pub fn push(&mut self, class: PriorityClass, id: PacketId) -> Result<(), QueueOverflow> {
        let cap = self.capacity;
        let lane = self.lane_mut(class);
        if lane.len() >= cap {
            return Err(QueueOverflow);
        }
        lane.push_back(id);
        Ok(())
    }

    /// Head of the highest-priority non-empty lane.
    pub fn head(&self) -> Option<(PriorityClass, PacketId)> {
        self.urgent
            .front()
            .map(|&p| (PriorityClass::Urgent, p))
            .or_else(|| self.normal.front().map(|&p| (PriorityClass::Normal, p)))
    }

    pub fn head_of(&self, class: PriorityClass) -> Option<PacketId> {
        self.lane(class).front().copied()
    }

    /// Removes and returns the head, urgent lane first.
    pub fn pop_next(&mut self) -> Option<(PriorityClass, PacketId)> {
        if let Some(p) = self.urgent.pop_front() {
            return Some((PriorityClass::Urgent, p));
        }
        self.normal.pop_front().map(|p| (PriorityClass::Normal, p))
    }

    pub fn remove(&mut self, id: PacketId) -> bool {
        for class in PriorityClass::ALL {
            let lane = self.lane_mut(class);
            if let Some(pos) = lane.iter().position(|&p| p == id) {
                lane.remove(pos);
                return true;
            }
        }
        false
    }

    pub fn len(&self, class: PriorityClass) -> usize {
        self.lane(class).len()
    }

    pub fn is_empty(&self, class: PriorityClass) -> bool {
        self.lane(class).is_empty()
    }

    pub fn contains(&self, id: PacketId) -> bool {
        self.urgent.contains(&id) || self.normal.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = PacketId> + '_ {
        self.urgent.iter().chain(self.normal.iter()).copied()
    }
}

/// Kernel events of a run. `T` is the protocol's own timer vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event<T> {
    Arrival { source: usize },
    TxEnd(TxId),
    Deadline(PacketId),
    Timer { node: NodeId, timer: T },
}

impl<T: fmt::Debug> Event<T> {
    fn trace_target(&self, world_src: Option<NodeId>) -> String {
        match self {
            Event::Timer { node, .. } => node.to_string(),
            _ => world_src
                .map(|n| n.to_string())
                .unwrap_or_else(|| "channel".into()),
        }
    }

    fn trace_kind(&self) -> String {
        match self {
            Event::Arrival { .. } => "arrival".into(),
            Event::TxEnd(_) => "tx_end".into(),
            Event::Deadline(_) => "deadline".into(),
            Event::Timer { timer, .. } => format!("timer:{timer:?}"),
        }
    }
}

/// Counters and samples gathered while a run executes; checked by tests and
/// the acceptance suite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// SS-MAC: generation to start of the first EIS at or after generation.
    pub eis_waits_us: Vec<u64>,
    /// SS-MAC: delivered urgent packets faster than EIS wait + RRP + DSP.
    pub eis_bound_violations: u64,
    /// SS-MAC: CAO tables that were not a deadline-ordered permutation.
    pub cao_violations: u64,
    /// SS-MAC: critical cycles inserted into the non-critical schedule.
    pub critical_cycles: u64,
    /// SS-MAC: DTP grants announced by each critical cycle, in order.
    pub cycle_grants: Vec<u32>,
    /// FROG-MAC: gaps that started with a lone urgent contender able to fit.
    pub preemption_opportunities: u64,
    /// FROG-MAC: of those, gaps where the next fragment still went first.
    pub preemption_violations: u64,
    /// FROG-MAC: normal packets suspended mid-train.
    pub suspensions: u64,
    /// FROG-MAC: fragments accepted in order at the sink.
    pub fragments_accepted: u64,
    /// FROG-MAC: retransmitted fragments the sink had already accepted.
    pub duplicate_fragments: u64,
    /// FROG-MAC: fragments arriving ahead of the expected index.
    pub reassembly_violations: u64,
    /// DATA that reached the sink after its packet had been dropped.
    pub late_receptions: u64,
}

struct ArrivalPlan {
    node: NodeId,
    class: PriorityClass,
    times: Vec<SimTime>,
    next: usize,
}

/// Everything a MAC implementation may touch during a run.
pub struct World<T> {
    pub sched: Scheduler<Event<T>>,
    pub channel: Channel,
    pub ledger: PacketLedger,
    pub queues: Vec<TxQueue>,
    pub roles: Vec<NodeRole>,
    pub urgent_nodes: Vec<NodeId>,
    pub normal_nodes: Vec<NodeId>,
    pub backoff_rng: Vec<RngStream>,
    pub diag: Diagnostics,
    pub config: SimConfig,
    template: PacketTemplate,
    plans: Vec<ArrivalPlan>,
}

impl<T: Copy + fmt::Debug> World<T> {
    pub fn new(config: SimConfig) -> Self {
        let total = config.total_nodes;
        let urgent_nodes = config.urgent_node_ids();
        let normal_nodes = config.normal_node_ids();
        let mut roles = vec![NodeRole::Sensor; total];
        roles[0] = NodeRole::SinkController;
        let horizon = SimTime(config.duration_us);
        let seed = config.seed;

        let mut plans = Vec::new();
        let mut add_plan = |node: NodeId, class: PriorityClass, interval: u64| {
            let stream = node.0 as u64 * 4 + class.index() as u64;
            let mut rng = RngStream::new(seed, stream);
            let spec = TrafficSpec::with_random_phase(class, interval, &mut rng);
            plans.push(ArrivalPlan {
                node,
                class,
                times: arrivals(&spec, horizon),
                next: 0,
            });
        };
        for &n in &urgent_nodes {
            add_plan(n, PriorityClass::Urgent, config.traffic.urgent_interval_us);
        }
        for &n in &normal_nodes {
            add_plan(n, PriorityClass::Normal, config.traffic.normal_interval_us);
        }

        World {
            sched: Scheduler::new(),
            channel: Channel::new(ChannelConfig {
                byte_time_us: config.radio.byte_time_us,
            }),
            ledger: PacketLedger::new(),
            queues: vec![TxQueue::new(config.traffic.queue_capacity); total],
            roles,
            backoff_rng: (0..total)
                .map(|n| RngStream::new(seed, n as u64 * 4 + 2))
                .collect(),
            urgent_nodes,
            normal_nodes,
            diag: Diagnostics::default(),
            template: PacketTemplate {
                length_bytes: config.traffic.packet_length,
                urgent_deadline_us: config.traffic.urgent_deadline_us,
            },
            plans,
            config,
        }
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn node_count(&self) -> usize {
        self.roles.len()
    }

    pub fn sensors(&self) -> impl Iterator<Item = NodeId> {
        (1..self.roles.len()).map(|i| NodeId(i as u16))
    }

    pub fn airtime(&self, bytes: u32) -> u64 {
        self.channel.airtime(bytes)
    }

    /// Starts a transmission now and schedules its end.
    pub fn transmit(&mut self, src: NodeId, frame: Frame) -> SimResult<SimTime> {
        let now = self.now();
        let (id, end) = self.channel.transmit(src, frame, now)?;
        self.sched.schedule(end, Event::TxEnd(id))?;
        Ok(end)
    }

    pub fn set_timer(&mut self, node: NodeId, at: SimTime, timer: T) -> SimResult<EventHandle> {
        self.sched.schedule(at, Event::Timer { node, timer })
    }

    pub fn timer_in(&mut self, node: NodeId, delay_us: u64, timer: T) -> SimResult<EventHandle> {
        self.sched
            .schedule_in(delay_us, Event::Timer { node, timer })
    }

    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.sched.cancel(handle)
    }

    pub fn packet(&self, id: PacketId) -> &Packet {
        self.ledger.get(id)
    }

    /// Sink-side reception of a packet's final DATA frame. Returns false if
    /// the packet had already been dropped at its source.
    pub fn deliver(&mut self, id: PacketId) -> SimResult<bool> {
        let p = self.ledger.get(id);
        if p.drop_reason.is_some() {
            self.diag.late_receptions += 1;
            return Ok(false);
        }
        self.ledger.record_delivery(id, self.now())?;
        Ok(true)
    }

    /// Source gives up on a packet. A packet the sink already received is
    /// only dequeued, never counted as lost.
    pub fn drop_packet(
        &mut self,
        node: NodeId,
        id: PacketId,
        reason: DropReason,
    ) -> SimResult<bool> {
        self.queues[node.index()].remove(id);
        if self.ledger.is_finalized(id) {
            return Ok(false);
        }
        self.ledger.record_drop(id, reason)?;
        Ok(true)
    }

    /// Source learned (by ACK) that the packet arrived.
    pub fn complete_packet(&mut self, node: NodeId, id: PacketId) {
        self.queues[node.index()].remove(id);
    }

    fn schedule_next_arrival(&mut self, source: usize) -> SimResult {
        let plan = &mut self.plans[source];
        if let Some(&t) = plan.times.get(plan.next) {
            plan.next += 1;
            self.sched.schedule(t, Event::Arrival { source })?;
        }
        Ok(())
    }
}

/// Dispatch points every MAC implementation provides.
pub trait MacProtocol {
    type Timer: Copy + fmt::Debug;

    fn name(&self) -> &'static str;

    fn start(&mut self, w: &mut World<Self::Timer>) -> SimResult;

    /// Called after `packet` was enqueued at `node`.
    fn on_packet_arrival(
        &mut self,
        w: &mut World<Self::Timer>,
        node: NodeId,
        packet: PacketId,
    ) -> SimResult;

    /// Intact frame heard by `node` (addressed to it or overheard).
    fn on_frame_received(
        &mut self,
        w: &mut World<Self::Timer>,
        node: NodeId,
        frame: &Frame,
    ) -> SimResult;

    /// The sender's own transmission finished (intact or not).
    fn on_tx_end(&mut self, _w: &mut World<Self::Timer>, _delivery: &Delivery) -> SimResult {
        Ok(())
    }

    fn on_timer(
        &mut self,
        w: &mut World<Self::Timer>,
        node: NodeId,
        timer: Self::Timer,
    ) -> SimResult;

    /// An urgent packet's deadline passed; it is already dropped and dequeued.
    fn on_packet_expired(
        &mut self,
        w: &mut World<Self::Timer>,
        node: NodeId,
        packet: PacketId,
    ) -> SimResult;
}

/// What a finished run hands back to the harness.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub protocol: &'static str,
    pub packets: Vec<Packet>,
    pub channel: ChannelStats,
    pub diag: Diagnostics,
    pub events: u64,
    /// (node, class) pairs where unfinalized packets did not match the
    /// packets still held in the node's queue.
    pub conservation_errors: Vec<String>,
}

pub struct Simulation<M: MacProtocol> {
    world: World<M::Timer>,
    mac: M,
}

impl<M: MacProtocol> Simulation<M> {
    pub fn new(config: SimConfig, mac: M) -> Self {
        Simulation {
            world: World::new(config),
            mac,
        }
    }

    pub fn world(&self) -> &World<M::Timer> {
        &self.world
    }

    pub fn run(self) -> SimResult<RunOutput> {
        self.run_traced(None)
    }

    /// Runs to the configured duration. With `trace`, writes one
    /// `time_us,seq,target,kind` line per processed event.
    pub fn run_traced(mut self, mut trace: Option<&mut dyn Write>) -> SimResult<RunOutput> {
        let end = SimTime(self.world.config.duration_us);
        for source in 0..self.world.plans.len() {
            self.world.schedule_next_arrival(source)?;
        }
        self.mac.start(&mut self.world)?;

        while let Some(ev) = self.world.sched.pop_until(end) {
            if let Some(out) = trace.as_deref_mut() {
                let src = match ev.payload {
                    Event::Arrival { source } => Some(self.world.plans[source].node),
                    Event::Deadline(p) => Some(self.world.packet(p).src),
                    _ => None,
                };
                writeln!(
                    out,
                    "{},{},{},{}",
                    ev.at.as_micros(),
                    ev.seq,
                    ev.payload.trace_target(src),
                    ev.payload.trace_kind()
                )
                .map_err(|e| SimError::ProtocolLogic(format!("trace write failed: {e}")))?;
            }
            self.dispatch(ev.payload)?;
        }

        let conservation_errors = self.conservation_errors();
        let w = self.world;
        Ok(RunOutput {
            protocol: self.mac.name(),
            channel: w.channel.stats().clone(),
            events: w.sched.processed(),
            diag: w.diag,
            packets: w.ledger.all().to_vec(),
            conservation_errors,
        })
    }

    fn dispatch(&mut self, ev: Event<M::Timer>) -> SimResult {
        let w = &mut self.world;
        match ev {
            Event::Arrival { source } => {
                let (node, class) = (w.plans[source].node, w.plans[source].class);
                let now = w.now();
                let id = w.ledger.next_id();
                let packet = make_packet(id, class, node, now, &w.template);
                let deadline = packet.deadline_at;
                w.ledger.insert(packet);
                w.schedule_next_arrival(source)?;
                if w.queues[node.index()].push(class, id).is_err() {
                    w.ledger.record_drop(id, DropReason::QueueOverflow)?;
                    return Ok(());
                }
                if let Some(d) = deadline {
                    w.sched.schedule(d, Event::Deadline(id))?;
                }
                self.mac.on_packet_arrival(w, node, id)
            }
            Event::Deadline(id) => {
                if w.ledger.is_finalized(id) {
                    return Ok(());
                }
                let node = w.packet(id).src;
                w.drop_packet(node, id, DropReason::DeadlineExpired)?;
                self.mac.on_packet_expired(w, node, id)
            }
            Event::TxEnd(tx) => {
                let delivery = w.channel.complete(tx)?;
                self.mac.on_tx_end(w, &delivery)?;
                if delivery.intact {
                    for i in 0..w.node_count() {
                        let node = NodeId(i as u16);
                        if node != delivery.src {
                            self.mac.on_frame_received(w, node, &delivery.frame)?;
                        }
                    }
                }
                Ok(())
            }
            Event::Timer { node, timer } => self.mac.on_timer(w, node, timer),
        }
    }

    fn conservation_errors(&self) -> Vec<String> {
        let w = &self.world;
        let mut errors = Vec::new();
        for (i, q) in w.queues.iter().enumerate() {
            for class in PriorityClass::ALL {
                let unfinalized = w
                    .ledger
                    .all()
                    .iter()
                    .filter(|p| p.src.index() == i && p.class == class && !p.is_finalized())
                    .count();
                let queued_open = q
                    .iter()
                    .filter(|&id| {
                        let p = w.packet(id);
                        p.class == class && !p.is_finalized()
                    })
                    .count();
                if unfinalized != queued_open {
                    errors.push(format!(
                        "node {i} {class}: {unfinalized} unfinalized but {queued_open} queued"
                    ));
                }
            }
        }
        errors
    }
}
