//! Slot-stealing priority MAC.
//!
//! Normal traffic runs on a synchronous TDMA schedule, one dedicated slot per
//! normal node. Emergency Indication Subslots (EIS) sit in the schedule; an
//! urgent node that hears nothing but its own queue transmits an indication
//! there. The controller detects it by energy and inserts a critical cycle:
//! reservation requests in per-node subslots (RRP), a deadline-ordered
//! schedule broadcast (DSP), and one DATA slot per grant (DTP). The
//! non-critical schedule resumes afterwards, shifted by the inserted cycle.
//!
//! The schedule is evaluated lazily: the controller only wakes up at EIS
//! starts when an indication is pending, and at NC slots whose owner has
//! something to send.

use std::sync::Arc;

use crate::channel::{CaoEntry, Dest, Frame, FrameKind, FrameMeta, NodeId};
use crate::config::{RadioConfig, SimConfig};
use crate::error::{ConfigError, SimError};
use crate::kernel::{EventHandle, SimTime};
use crate::mac::{MacProtocol, SimResult, World};
use crate::traffic::{PacketId, PriorityClass};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperframeConfig {
    pub nc_slot_us: u64,
    pub eis_us: u64,
    pub rrp_subslot_us: u64,
    pub dsp_us: u64,
    /// An EIS after every NC slot instead of once per cycle.
    pub eis_per_slot: bool,
}

impl Default for SuperframeConfig {
    fn default() -> Self {
        SuperframeConfig {
            nc_slot_us: 2000,
            eis_us: 352,
            rrp_subslot_us: 352,
            dsp_us: 1000,
            eis_per_slot: true,
        }
    }
}

impl SuperframeConfig {
    /// NC slots between two consecutive EIS windows.
    pub fn slots_per_period(&self, nc_slots: usize) -> usize {
        match (nc_slots, self.eis_per_slot) {
            (0, _) => 0,
            (_, true) => 1,
            (n, false) => n,
        }
    }

    /// Distance between consecutive EIS starts when no critical cycle is
    /// inserted.
    pub fn eis_period_us(&self, nc_slots: usize) -> u64 {
        self.slots_per_period(nc_slots) as u64 * self.nc_slot_us + self.eis_us
    }

    /// Length of the NC cycle: every normal node's slot once, plus its EIS
    /// windows.
    pub fn cycle_us(&self, nc_slots: usize) -> u64 {
        let eis_count = if self.eis_per_slot {
            nc_slots.max(1)
        } else {
            1
        };
        nc_slots as u64 * self.nc_slot_us + eis_count as u64 * self.eis_us
    }

    pub fn rrp_total_us(&self, n_urgent: usize) -> u64 {
        n_urgent as u64 * self.rrp_subslot_us
    }

    /// Air time the schedule inserts for `grants` DTP slots.
    pub fn critical_cycle_us(&self, n_urgent: usize, grants: usize) -> u64 {
        self.rrp_total_us(n_urgent) + self.dsp_us + grants as u64 * self.nc_slot_us
    }

    pub fn validate(
        &self,
        radio: &RadioConfig,
        packet_length: u32,
        n_urgent: usize,
    ) -> Result<(), ConfigError> {
        let slot_need =
            radio.airtime(packet_length) + radio.sifs_us + radio.airtime(radio.ack_bytes);
        let checks = [
            (
                "DATA + SIFS + ACK",
                slot_need,
                "nc_slot_us",
                self.nc_slot_us,
            ),
            (
                "EIS indication",
                radio.airtime(radio.eis_ind_bytes),
                "eis_us",
                self.eis_us,
            ),
            (
                "RRP request",
                radio.airtime(radio.rrp_req_bytes),
                "rrp_subslot_us",
                self.rrp_subslot_us,
            ),
            (
                "DSP broadcast",
                radio.airtime(radio.dsp_bytes(n_urgent)),
                "dsp_us",
                self.dsp_us,
            ),
        ];
        for (what, needed_us, slot, slot_us) in checks {
            if slot_us < needed_us || slot_us == 0 {
                return Err(ConfigError::SlotTooShort {
                    what,
                    needed_us: needed_us.max(1),
                    slot,
                    slot_us,
                });
            }
        }
        Ok(())
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Time from `offset` (measured from the start of an undisturbed schedule)
/// to the start of the next EIS window.
pub fn next_eis_wait(offset_us: u64, config: &SuperframeConfig, nc_slots: usize) -> u64 {
    let period = config.eis_period_us(nc_slots);
    let eis_off = period - config.eis_us;
    let m = ceil_div(offset_us.saturating_sub(eis_off), period);
    eis_off + m * period - offset_us
}

/// Deadline-ordered DTP grants.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CaoTable(pub Vec<CaoEntry>);

impl CaoTable {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn rank_of(&self, node: NodeId) -> Option<u32> {
        self.0.iter().find(|e| e.node == node).map(|e| e.rank)
    }

    /// Ranks are 1..=k in table order and deadlines never decrease, with
    /// ties in ascending node order.
    pub fn is_valid(&self) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(i, e)| e.rank == i as u32 + 1)
            && self
                .0
                .windows(2)
                .all(|w| (w[0].deadline, w[0].node) < (w[1].deadline, w[1].node))
    }
}

/// Ranks requests by ascending deadline, ties by ascending node id.
pub fn assign_cao(requests: &[(NodeId, SimTime)]) -> CaoTable {
    let mut sorted = requests.to_vec();
    sorted.sort_by_key(|&(node, deadline)| (deadline, node));
    CaoTable(
        sorted
            .into_iter()
            .enumerate()
            .map(|(i, (node, deadline))| CaoEntry {
                node,
                deadline,
                rank: i as u32 + 1,
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsNodeState {
    Idle,
    AwaitEis,
    SentInd,
    AwaitRrpSubslot,
    AwaitCao,
    AwaitDtp(u32),
    TxData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerPhase {
    NcCycle,
    EisWindow,
    Rrp,
    Dsp,
    Dtp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsTimer {
    /// Controller: an EIS start or NC slot start of the lazy schedule.
    Wake,
    EisEnd,
    RrpSend,
    RrpEnd,
    Dsp,
    DtpSend,
    CycleEnd,
    SinkReply,
}

/// Position of the undisturbed NC schedule after the last re-anchoring.
#[derive(Debug, Clone, Copy)]
struct Anchor {
    at: SimTime,
    /// Global NC slot index (mod normal node count) of the first slot.
    first_slot: usize,
}

#[derive(Debug, Clone)]
struct NodeState {
    state: SsNodeState,
    urgent: Option<PacketId>,
    nc_busy: Option<PacketId>,
}

pub struct SsMac {
    cfg: SuperframeConfig,
    radio: RadioConfig,
    packet_length: u32,
    n_urgent: usize,
    normal_nodes: Vec<NodeId>,
    urgent_nodes: Vec<NodeId>,
    nodes: Vec<NodeState>,
    phase: ControllerPhase,
    anchor: Anchor,
    cursor: SimTime,
    wake: Option<(SimTime, EventHandle)>,
    eis_start: SimTime,
    requests: Vec<(NodeId, SimTime)>,
    dtp_start: SimTime,
    /// Urgent packets whose first EIS is not yet fixed.
    deferred_waits: Vec<(PacketId, SimTime)>,
    waits: Vec<Option<u64>>,
    replies: Vec<(SimTime, Frame)>,
}

type W = World<SsTimer>;

impl SsMac {
    pub fn new(config: &SimConfig) -> Self {
        let n = config.total_nodes;
        SsMac {
            cfg: config.ssmac.clone(),
            radio: config.radio.clone(),
            packet_length: config.traffic.packet_length,
            n_urgent: config.n_urgent,
            urgent_nodes: config.urgent_node_ids(),
            normal_nodes: config.normal_node_ids(),
            nodes: vec![
                NodeState {
                    state: SsNodeState::Idle,
                    urgent: None,
                    nc_busy: None,
                };
                n
            ],
            phase: ControllerPhase::NcCycle,
            anchor: Anchor {
                at: SimTime::ZERO,
                first_slot: 0,
            },
            cursor: SimTime::ZERO,
            wake: None,
            eis_start: SimTime::ZERO,
            requests: Vec::new(),
            dtp_start: SimTime::ZERO,
            deferred_waits: Vec::new(),
            waits: Vec::new(),
            replies: Vec::new(),
        }
    }

    pub fn phase(&self) -> ControllerPhase {
        self.phase
    }

    pub fn node_state(&self, node: NodeId) -> SsNodeState {
        self.nodes[node.index()].state
    }

    fn n_normal(&self) -> usize {
        self.normal_nodes.len()
    }

    fn period(&self) -> u64 {
        self.cfg.eis_period_us(self.n_normal())
    }

    fn eis_offset(&self) -> u64 {
        self.period() - self.cfg.eis_us
    }

    /// First EIS start at or after `t` under the current anchor.
    fn next_eis_start(&self, t: SimTime) -> SimTime {
        let t = t.max(self.anchor.at);
        let off = t - self.anchor.at;
        self.anchor.at + off + next_eis_wait(off, &self.cfg, self.n_normal())
    }

    fn eis_unit(&self, eis_start: SimTime) -> u64 {
        (eis_start - self.anchor.at - self.eis_offset()) / self.period()
    }

    fn slot_start(&self, g: u64) -> SimTime {
        let spu = self.cfg.slots_per_period(self.n_normal()) as u64;
        self.anchor.at + (g / spu) * self.period() + (g % spu) * self.cfg.nc_slot_us
    }

    fn slot_owner(&self, g: u64) -> NodeId {
        let n = self.n_normal() as u64;
        self.normal_nodes[((self.anchor.first_slot as u64 + g) % n) as usize]
    }

    /// Global index of the first NC slot starting at or after `t`.
    fn next_slot_index(&self, t: SimTime) -> u64 {
        let spu = self.cfg.slots_per_period(self.n_normal()) as u64;
        let off = t.max(self.anchor.at) - self.anchor.at;
        let (j, r) = (off / self.period(), off % self.period());
        let w = ceil_div(r, self.cfg.nc_slot_us);
        if w >= spu {
            (j + 1) * spu
        } else {
            j * spu + w
        }
    }

    fn nc_eligible(&self, w: &W, node: NodeId) -> bool {
        self.nodes[node.index()].nc_busy.is_none()
            && !w.queues[node.index()].is_empty(PriorityClass::Normal)
    }

    fn next_nc_slot(&self, w: &W, t: SimTime) -> Option<(SimTime, NodeId)> {
        if self.normal_nodes.iter().all(|&n| !self.nc_eligible(w, n)) {
            return None;
        }
        let g0 = self.next_slot_index(t);
        (g0..g0 + self.n_normal() as u64)
            .map(|g| (self.slot_start(g), self.slot_owner(g)))
            .find(|&(_, owner)| self.nc_eligible(w, owner))
    }

    fn replan(&mut self, w: &mut W) -> SimResult {
        if self.phase != ControllerPhase::NcCycle {
            return Ok(());
        }
        let t = w.now().max(self.cursor);
        let eis = self
            .nodes
            .iter()
            .any(|s| s.state == SsNodeState::AwaitEis)
            .then(|| self.next_eis_start(t));
        let slot = self.next_nc_slot(w, t).map(|(s, _)| s);
        let next = match (eis, slot) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        if self.wake.map(|(at, _)| at) == next {
            return Ok(());
        }
        if let Some((_, h)) = self.wake.take() {
            w.cancel(h);
        }
        if let Some(at) = next {
            let h = w.set_timer(NodeId::SINK, at, SsTimer::Wake)?;
            self.wake = Some((at, h));
        }
        Ok(())
    }

    fn record_wait(&mut self, packet: PacketId, generated: SimTime, eis: SimTime) {
        let i = packet.0 as usize;
        if self.waits.len() <= i {
            self.waits.resize(i + 1, None);
        }
        self.waits[i] = Some(eis - generated);
    }

    fn resolve_deferred(&mut self, w: &mut W) {
        for (p, gen) in std::mem::take(&mut self.deferred_waits) {
            let eis = self.next_eis_start(gen);
            self.record_wait(p, gen, eis);
            w.diag.eis_waits_us.push(eis - gen);
        }
    }

    fn send_indication(&mut self, w: &mut W, node: NodeId) -> SimResult {
        let frame = Frame::new(
            FrameKind::EisInd,
            node,
            Dest::Node(NodeId::SINK),
            self.radio.eis_ind_bytes,
        );
        w.transmit(node, frame)?;
        self.nodes[node.index()].state = SsNodeState::SentInd;
        Ok(())
    }

    fn send_data(&mut self, w: &mut W, node: NodeId, packet: PacketId) -> SimResult {
        let frame = Frame::new(
            FrameKind::Data,
            node,
            Dest::Node(NodeId::SINK),
            self.packet_length,
        )
        .with_packet(packet);
        w.transmit(node, frame)?;
        Ok(())
    }

    /// Next urgent job for `node`, if any: it waits for the next EIS.
    fn next_urgent(&mut self, w: &W, node: NodeId) {
        let s = &mut self.nodes[node.index()];
        s.urgent = w.queues[node.index()].head_of(PriorityClass::Urgent);
        s.state = if s.urgent.is_some() {
            SsNodeState::AwaitEis
        } else {
            SsNodeState::Idle
        };
    }

    fn on_wake(&mut self, w: &mut W) -> SimResult {
        let now = w.now();
        self.wake = None;
        self.cursor = now + 1;
        if self.next_eis_start(now) == now {
            return self.start_eis(w, now);
        }
        if self.n_normal() > 0 {
            let g = self.next_slot_index(now);
            if self.slot_start(g) == now {
                let owner = self.slot_owner(g);
                if self.nc_eligible(w, owner) {
                    let p = w.queues[owner.index()]
                        .head_of(PriorityClass::Normal)
                        .expect("eligible owner has a packet");
                    self.nodes[owner.index()].nc_busy = Some(p);
                    self.send_data(w, owner, p)?;
                }
            }
        }
        self.replan(w)
    }

    fn start_eis(&mut self, w: &mut W, now: SimTime) -> SimResult {
        let waiting: Vec<NodeId> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].state == SsNodeState::AwaitEis)
            .map(|i| NodeId(i as u16))
            .collect();
        if waiting.is_empty() {
            return self.replan(w);
        }
        self.phase = ControllerPhase::EisWindow;
        self.eis_start = now;
        for n in waiting {
            self.send_indication(w, n)?;
        }
        w.set_timer(NodeId::SINK, now + self.cfg.eis_us, SsTimer::EisEnd)?;
        Ok(())
    }

    fn on_eis_end(&mut self, w: &mut W) -> SimResult {
        let now = w.now();
        let indicated = w
            .channel
            .or_channel_sense(NodeId::SINK, self.eis_start..now);
        if !indicated {
            self.phase = ControllerPhase::NcCycle;
            self.cursor = now;
            self.resolve_deferred(w);
            return self.replan(w);
        }
        w.diag.critical_cycles += 1;
        self.phase = ControllerPhase::Rrp;
        self.requests.clear();
        for (i, &n) in self.urgent_nodes.iter().enumerate() {
            if self.nodes[n.index()].state == SsNodeState::SentInd {
                self.nodes[n.index()].state = SsNodeState::AwaitRrpSubslot;
                let at = now + i as u64 * self.cfg.rrp_subslot_us;
                w.set_timer(n, at, SsTimer::RrpSend)?;
            }
        }
        let rrp_end = now + self.cfg.rrp_total_us(self.n_urgent);
        w.set_timer(NodeId::SINK, rrp_end, SsTimer::RrpEnd)?;
        Ok(())
    }

    fn on_rrp_send(&mut self, w: &mut W, node: NodeId) -> SimResult {
        let s = &self.nodes[node.index()];
        let (SsNodeState::AwaitRrpSubslot, Some(p)) = (s.state, s.urgent) else {
            return Ok(());
        };
        let deadline = w
            .packet(p)
            .deadline_at
            .ok_or_else(|| SimError::ProtocolLogic(format!("urgent {p} without deadline")))?;
        let frame = Frame::new(
            FrameKind::RrpReq,
            node,
            Dest::Node(NodeId::SINK),
            self.radio.rrp_req_bytes,
        )
        .with_packet(p)
        .with_meta(FrameMeta::Request { deadline });
        w.transmit(node, frame)?;
        self.nodes[node.index()].state = SsNodeState::AwaitCao;
        Ok(())
    }

    fn on_dsp(&mut self, w: &mut W) -> SimResult {
        let now = w.now();
        self.phase = ControllerPhase::Dsp;
        let table = assign_cao(&self.requests);
        if !table.is_valid() {
            w.diag.cao_violations += 1;
        }
        let grants = table.len();
        w.diag.cycle_grants.push(grants as u32);
        let frame = Frame::new(
            FrameKind::DspBcast,
            NodeId::SINK,
            Dest::Broadcast,
            self.radio.dsp_bytes(grants),
        )
        .with_meta(FrameMeta::Schedule(Arc::new(table.0)));
        w.transmit(NodeId::SINK, frame)?;
        self.dtp_start = now + self.cfg.dsp_us;
        let end = self.dtp_start + grants as u64 * self.cfg.nc_slot_us;
        w.set_timer(NodeId::SINK, end, SsTimer::CycleEnd)?;
        Ok(())
    }

    fn on_schedule(&mut self, w: &mut W, node: NodeId, table: &[CaoEntry]) -> SimResult {
        if self.nodes[node.index()].state != SsNodeState::AwaitCao {
            return Ok(());
        }
        match table.iter().find(|e| e.node == node) {
            Some(e) => {
                self.nodes[node.index()].state = SsNodeState::AwaitDtp(e.rank);
                let at = self.dtp_start + (e.rank as u64 - 1) * self.cfg.nc_slot_us;
                w.set_timer(node, at, SsTimer::DtpSend)?;
            }
            None => self.nodes[node.index()].state = SsNodeState::AwaitEis,
        }
        Ok(())
    }

    fn on_dtp_send(&mut self, w: &mut W, node: NodeId) -> SimResult {
        self.phase = ControllerPhase::Dtp;
        let s = &self.nodes[node.index()];
        let (SsNodeState::AwaitDtp(_), Some(p)) = (s.state, s.urgent) else {
            return Ok(());
        };
        self.nodes[node.index()].state = SsNodeState::TxData;
        self.send_data(w, node, p)
    }

    fn on_cycle_end(&mut self, w: &mut W) -> SimResult {
        let now = w.now();
        let n = self.n_normal();
        if n > 0 {
            let spu = self.cfg.slots_per_period(n) as u64;
            let unit = self.eis_unit(self.eis_start);
            self.anchor.first_slot =
                ((self.anchor.first_slot as u64 + (unit + 1) * spu) % n as u64) as usize;
        }
        self.anchor.at = now;
        self.cursor = now;
        self.phase = ControllerPhase::NcCycle;
        // Granted nodes whose DATA never went out (expired) are already reset;
        // nodes left waiting for a schedule retry at the next EIS.
        for s in &mut self.nodes {
            if matches!(
                s.state,
                SsNodeState::AwaitCao | SsNodeState::AwaitRrpSubslot
            ) {
                s.state = SsNodeState::AwaitEis;
            }
        }
        self.resolve_deferred(w);
        self.replan(w)
    }

    fn sink_receive(&mut self, w: &mut W, frame: &Frame) -> SimResult {
        match frame.kind {
            FrameKind::RrpReq => {
                let FrameMeta::Request { deadline } = frame.meta else {
                    return Err(SimError::ProtocolLogic(
                        "RRP request without deadline".into(),
                    ));
                };
                let slot = self
                    .urgent_nodes
                    .iter()
                    .position(|&n| n == frame.src)
                    .ok_or_else(|| {
                        SimError::ProtocolLogic(format!("{} has no RRP subslot", frame.src))
                    })?;
                let expected = self.eis_start
                    + self.cfg.eis_us
                    + slot as u64 * self.cfg.rrp_subslot_us
                    + self.radio.airtime(self.radio.rrp_req_bytes);
                if w.now() != expected {
                    return Err(SimError::ProtocolLogic(format!(
                        "{} sent its request outside its subslot",
                        frame.src
                    )));
                }
                self.requests.push((frame.src, deadline));
                Ok(())
            }
            FrameKind::Data => {
                let p = frame.packet.expect("DATA carries its packet");
                if w.deliver(p)? && w.packet(p).class == PriorityClass::Urgent {
                    let delay = w.packet(p).delay_us().expect("just delivered");
                    let wait = self.waits.get(p.0 as usize).copied().flatten();
                    let bound = self.cfg.rrp_total_us(self.n_urgent) + self.cfg.dsp_us;
                    if wait.is_none_or(|wt| delay < wt + bound) {
                        w.diag.eis_bound_violations += 1;
                    }
                }
                let ack = Frame::new(
                    FrameKind::Ack,
                    NodeId::SINK,
                    Dest::Node(frame.src),
                    self.radio.ack_bytes,
                )
                .with_packet(p);
                let at = w.now() + self.radio.sifs_us;
                self.replies.push((at, ack));
                w.set_timer(NodeId::SINK, at, SsTimer::SinkReply)?;
                Ok(())
            }
            FrameKind::EisInd => Ok(()),
            kind => Err(SimError::UnexpectedFrame {
                protocol: "ssmac",
                kind,
            }),
        }
    }

    fn on_ack(&mut self, w: &mut W, node: NodeId, packet: PacketId) -> SimResult {
        let s = &mut self.nodes[node.index()];
        if s.nc_busy == Some(packet) {
            s.nc_busy = None;
            w.complete_packet(node, packet);
            return self.replan(w);
        }
        if s.urgent == Some(packet) && s.state == SsNodeState::TxData {
            w.complete_packet(node, packet);
            self.next_urgent(w, node);
            return self.replan(w);
        }
        Ok(())
    }
}

impl MacProtocol for SsMac {
    type Timer = SsTimer;

    fn name(&self) -> &'static str {
        "ssmac"
    }

    fn start(&mut self, w: &mut W) -> SimResult {
        self.replan(w)
    }

    fn on_packet_arrival(&mut self, w: &mut W, node: NodeId, packet: PacketId) -> SimResult {
        let now = w.now();
        match w.packet(packet).class {
            PriorityClass::Normal => self.replan(w),
            PriorityClass::Urgent => {
                match self.phase {
                    ControllerPhase::NcCycle => {
                        let eis = self.next_eis_start(now.max(self.cursor));
                        self.record_wait(packet, now, eis);
                        w.diag.eis_waits_us.push(eis - now);
                    }
                    ControllerPhase::EisWindow if self.eis_start == now => {
                        self.record_wait(packet, now, now);
                        w.diag.eis_waits_us.push(0);
                    }
                    _ => self.deferred_waits.push((packet, now)),
                }
                if self.nodes[node.index()].state != SsNodeState::Idle {
                    return Ok(());
                }
                self.next_urgent(w, node);
                if self.phase == ControllerPhase::EisWindow && self.eis_start == now {
                    return self.send_indication(w, node);
                }
                self.replan(w)
            }
        }
    }

    fn on_frame_received(&mut self, w: &mut W, node: NodeId, frame: &Frame) -> SimResult {
        if node == NodeId::SINK {
            return if frame.is_for(node) {
                self.sink_receive(w, frame)
            } else {
                Ok(())
            };
        }
        match (&frame.kind, &frame.meta) {
            (FrameKind::DspBcast, FrameMeta::Schedule(table)) => self.on_schedule(w, node, table),
            (FrameKind::Ack, _) if frame.is_for(node) => {
                let p = frame.packet.expect("ACK names its packet");
                self.on_ack(w, node, p)
            }
            _ => Ok(()),
        }
    }

    fn on_timer(&mut self, w: &mut W, node: NodeId, timer: SsTimer) -> SimResult {
        match timer {
            SsTimer::Wake => self.on_wake(w),
            SsTimer::EisEnd => self.on_eis_end(w),
            SsTimer::RrpSend => self.on_rrp_send(w, node),
            // Re-armed at the same instant so the last request, which ends
            // exactly now, is received first.
            SsTimer::RrpEnd => w.timer_in(NodeId::SINK, 0, SsTimer::Dsp).map(|_| ()),
            SsTimer::Dsp => self.on_dsp(w),
            SsTimer::DtpSend => self.on_dtp_send(w, node),
            SsTimer::CycleEnd => self.on_cycle_end(w),
            SsTimer::SinkReply => {
                let now = w.now();
                let (due, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.replies)
                    .into_iter()
                    .partition(|(at, _)| *at == now);
                self.replies = rest;
                for (_, frame) in due {
                    w.transmit(NodeId::SINK, frame)?;
                }
                Ok(())
            }
        }
    }

    fn on_packet_expired(&mut self, w: &mut W, node: NodeId, packet: PacketId) -> SimResult {
        if self.nodes[node.index()].urgent != Some(packet) {
            return Ok(());
        }
        self.next_urgent(w, node);
        self.replan(w)
    }
}
