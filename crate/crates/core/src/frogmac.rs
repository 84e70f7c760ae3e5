//! Fragmentation-based priority MAC.
//!
//! Asynchronous CSMA/CA with an RTS/CTS handshake. Urgent packets go out as a
//! single DATA frame. Normal packets are cut into fragments, each
//! acknowledged, with an idle gap after every fragment ACK. The gap is long
//! enough for an urgent node (shorter IFS, counting down its backoff) to send
//! an RTS, which suspends the fragment train until the normal sender wins the
//! medium again.
//!
//! Backoff counters freeze while the medium is busy and resume afterwards, so
//! a node that started contending earlier is closer to zero. Third parties
//! honour a hard NAV from RTS/CTS/DATA/fragment frames. Fragments and their
//! ACKs additionally carry a soft NAV covering the following gap, which only
//! normal-class contenders respect.

use std::collections::VecDeque;

use crate::channel::{Dest, Frame, FrameKind, FrameMeta, NodeId};
use crate::config::RadioConfig;
use crate::error::{ConfigError, SimError};
use crate::kernel::{EventHandle, SimTime};
use crate::mac::{MacProtocol, SimResult, World};
use crate::traffic::{DropReason, PacketId, PriorityClass};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrogParams {
    /// Fragment payload size in bytes.
    pub frag_size: u32,
    pub ifs_urgent_us: u64,
    pub ifs_normal_us: u64,
    pub gap_frag_us: u64,
    pub backoff_slot_us: u64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    pub header_bytes: u32,
    pub ack_timeout_us: u64,
    pub cts_timeout_us: u64,
    /// Replaces every backoff draw with this slot count (test hook).
    pub force_backoff: Option<u32>,
}

impl Default for FrogParams {
    fn default() -> Self {
        FrogParams {
            frag_size: 16,
            ifs_urgent_us: 192,
            ifs_normal_us: 640,
            // ifs_urgent + cw_min * backoff_slot: the largest first urgent
            // draw (cw_min - 1 slots) still starts its RTS inside the gap.
            gap_frag_us: 2752,
            backoff_slot_us: 320,
            cw_min: 8,
            cw_max: 64,
            retry_limit: 5,
            header_bytes: 5,
            // 2 x SIFS + ACK airtime + 64us guard
            ack_timeout_us: 800,
            cts_timeout_us: 800,
            force_backoff: None,
        }
    }
}

impl FrogParams {
    /// Longest time an urgent node with a fresh contention window needs from
    /// the start of an idle period until its RTS begins.
    pub fn urgent_access_bound_us(&self) -> u64 {
        self.ifs_urgent_us + (self.cw_min as u64 - 1) * self.backoff_slot_us
    }

    pub fn validate(&self, radio: &RadioConfig, packet_length: u32) -> Result<(), ConfigError> {
        if self.frag_size < 2 || self.frag_size > packet_length {
            return Err(ConfigError::FragSizeOutOfRange {
                frag_size: self.frag_size,
                packet_length,
            });
        }
        if self.cw_min == 0 || self.cw_max < self.cw_min {
            return Err(ConfigError::Invalid(format!(
                "contention window bounds invalid: cw_min={} cw_max={}",
                self.cw_min, self.cw_max
            )));
        }
        if self.backoff_slot_us == 0 {
            return Err(ConfigError::Invalid(
                "backoff_slot_us must be positive".into(),
            ));
        }
        if !(self.ifs_urgent_us < self.ifs_normal_us && self.ifs_normal_us < self.gap_frag_us) {
            return Err(ConfigError::Invalid(format!(
                "need ifs_urgent < ifs_normal < gap_frag, got {} / {} / {}",
                self.ifs_urgent_us, self.ifs_normal_us, self.gap_frag_us
            )));
        }
        let needed = self.urgent_access_bound_us();
        if self.gap_frag_us <= needed {
            return Err(ConfigError::GapTooShort {
                gap_us: self.gap_frag_us,
                needed_us: needed,
            });
        }
        let ack_min = radio.sifs_us + radio.airtime(radio.ack_bytes);
        if self.ack_timeout_us < ack_min {
            return Err(ConfigError::SlotTooShort {
                what: "SIFS + ACK",
                needed_us: ack_min,
                slot: "ack_timeout_us",
                slot_us: self.ack_timeout_us,
            });
        }
        let cts_min = radio.sifs_us + radio.airtime(radio.cts_bytes);
        if self.cts_timeout_us < cts_min {
            return Err(ConfigError::SlotTooShort {
                what: "SIFS + CTS",
                needed_us: cts_min,
                slot: "cts_timeout_us",
                slot_us: self.cts_timeout_us,
            });
        }
        Ok(())
    }
}

/// How a normal packet is cut up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentPlan {
    pub parent: Option<PacketId>,
    /// Payload bytes per fragment, in transmission order.
    pub sizes: Vec<u32>,
    pub header_bytes: u32,
}

impl FragmentPlan {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// On-air length of fragment `i` including its header.
    pub fn frame_bytes(&self, i: usize) -> u32 {
        self.sizes[i] + self.header_bytes
    }
}

/// Splits `length` bytes into `ceil(length / frag_size)` fragments; all are
/// `frag_size` except a shorter remainder at the end.
pub fn fragment_packet(length: u32, frag_size: u32) -> Result<Vec<u32>, ConfigError> {
    if frag_size < 2 {
        return Err(ConfigError::FragSizeOutOfRange {
            frag_size,
            packet_length: length,
        });
    }
    let mut sizes = vec![frag_size; (length / frag_size) as usize];
    if !length.is_multiple_of(frag_size) {
        sizes.push(length % frag_size);
    }
    Ok(sizes)
}

/// Channel time of a normal packet sent by a lone node: from the start of
/// contention to reception of the last fragment, for backoff draw `draw`.
pub fn normal_service_time_us(
    params: &FrogParams,
    radio: &RadioConfig,
    length: u32,
    draw: u32,
) -> Result<u64, ConfigError> {
    let sizes = fragment_packet(length, params.frag_size)?;
    let air = |b: u32| radio.airtime(b);
    let mut t = params.ifs_normal_us + draw as u64 * params.backoff_slot_us;
    t += air(radio.rts_bytes) + radio.sifs_us + air(radio.cts_bytes) + radio.sifs_us;
    for (i, s) in sizes.iter().enumerate() {
        t += air(s + params.header_bytes);
        if i + 1 < sizes.len() {
            t += radio.sifs_us + air(radio.ack_bytes) + params.gap_frag_us;
        }
    }
    Ok(t)
}

/// Total channel occupancy (frames plus the gaps they reserve) of one normal
/// packet including its final ACK.
pub fn normal_occupancy_us(
    params: &FrogParams,
    radio: &RadioConfig,
    length: u32,
) -> Result<u64, ConfigError> {
    let sizes = fragment_packet(length, params.frag_size)?;
    let mut t = normal_service_time_us(params, radio, length, 0)? - params.ifs_normal_us;
    t += radio.sifs_us + radio.airtime(radio.ack_bytes);
    debug_assert!(!sizes.is_empty());
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrogNodeState {
    Idle,
    Backoff,
    SentRts,
    AwaitCts,
    TxData,
    TxFragment,
    AwaitAck,
    GapWait,
    Suspended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrogTimer {
    /// Re-evaluate the backoff of a contending node.
    Contend,
    CtsTimeout,
    AckTimeout,
    /// SIFS after CTS: send DATA or the next fragment.
    SendData,
    GapEnd,
    /// SIFS after a received frame: sink sends its queued CTS/ACK.
    SinkReply,
}

#[derive(Debug, Clone)]
struct Job {
    packet: PacketId,
    class: PriorityClass,
    plan: Option<FragmentPlan>,
    next_frag: usize,
    cw: u32,
    retries: u32,
}

#[derive(Debug, Clone)]
struct Contention {
    ifs: u64,
    remaining: u32,
    since: SimTime,
    // Start of slot counting in the current idle period.
    count_from: Option<SimTime>,
    timer: Option<EventHandle>,
}

#[derive(Debug, Clone)]
struct NodeState {
    state: FrogNodeState,
    job: Option<Job>,
    parked: Option<Job>,
    contention: Option<Contention>,
    nav_hard: SimTime,
    nav_soft: SimTime,
    timeout: Option<EventHandle>,
    gap_start: SimTime,
    gap_watch: bool,
}

impl NodeState {
    fn new() -> Self {
        NodeState {
            state: FrogNodeState::Idle,
            job: None,
            parked: None,
            contention: None,
            nav_hard: SimTime::ZERO,
            nav_soft: SimTime::ZERO,
            timeout: None,
            gap_start: SimTime::ZERO,
            gap_watch: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Reassembly {
    packet: PacketId,
    next_index: u16,
    done: bool,
}

pub struct FrogMac {
    params: FrogParams,
    radio: RadioConfig,
    packet_length: u32,
    nodes: Vec<NodeState>,
    reassembly: Vec<Option<Reassembly>>,
    last_whole: Vec<Option<PacketId>>,
    replies: VecDeque<(SimTime, Frame)>,
}

type W = World<FrogTimer>;

impl FrogMac {
    pub fn new(config: &crate::config::SimConfig) -> Self {
        let n = config.total_nodes;
        FrogMac {
            params: config.frogmac.clone(),
            radio: config.radio.clone(),
            packet_length: config.traffic.packet_length,
            nodes: vec![NodeState::new(); n],
            reassembly: vec![None; n],
            last_whole: vec![None; n],
            replies: VecDeque::new(),
        }
    }

    pub fn state(&self, node: NodeId) -> FrogNodeState {
        self.nodes[node.index()].state
    }

    fn air(&self, bytes: u32) -> u64 {
        self.radio.airtime(bytes)
    }

    fn node(&mut self, n: NodeId) -> &mut NodeState {
        &mut self.nodes[n.index()]
    }

    // ---- medium view -------------------------------------------------

    fn honours_soft_nav(&self, n: NodeId) -> bool {
        self.nodes[n.index()]
            .job
            .as_ref()
            .is_some_and(|j| j.class == PriorityClass::Normal)
    }

    fn busy_until(&self, w: &W, n: NodeId, now: SimTime) -> Option<SimTime> {
        let s = &self.nodes[n.index()];
        let mut until = w.channel.busy_until(n, now);
        if s.nav_hard > now {
            until = until.max(Some(s.nav_hard));
        }
        if self.honours_soft_nav(n) && s.nav_soft > now {
            until = until.max(Some(s.nav_soft));
        }
        until
    }

    fn idle_since(&self, w: &W, n: NodeId, now: SimTime) -> SimTime {
        let s = &self.nodes[n.index()];
        let mut since = w.channel.idle_since(n, now).max(s.nav_hard);
        if self.honours_soft_nav(n) {
            since = since.max(s.nav_soft);
        }
        since
    }

    // ---- transmission helpers ----------------------------------------

    /// Starts a transmission and freezes every other contender.
    fn send(&mut self, w: &mut W, src: NodeId, frame: Frame) -> SimResult<SimTime> {
        let end = w.transmit(src, frame)?;
        let now = w.now();
        for i in 0..self.nodes.len() {
            let n = NodeId(i as u16);
            if n != src && self.nodes[i].contention.is_some() {
                self.freeze(w, n, now)?;
            }
        }
        Ok(end)
    }

    fn freeze(&mut self, w: &mut W, n: NodeId, now: SimTime) -> SimResult {
        let slot = self.params.backoff_slot_us;
        let Some(c) = self.nodes[n.index()].contention.as_mut() else {
            return Ok(());
        };
        if let Some(from) = c.count_from {
            let expiry = from + c.remaining as u64 * slot;
            if expiry == now {
                // Its own RTS goes out in this same instant and collides.
                return Ok(());
            }
            if now > from {
                let elapsed = ((now - from) / slot).min(c.remaining as u64) as u32;
                c.remaining -= elapsed;
            }
            c.count_from = None;
        }
        if let Some(t) = c.timer.take() {
            w.cancel(t);
        }
        self.contend_check(w, n)
    }

    fn begin_contention(&mut self, w: &mut W, n: NodeId) -> SimResult {
        let now = w.now();
        let (class, cw) = {
            let job = self.nodes[n.index()]
                .job
                .as_ref()
                .expect("contending without a job");
            (job.class, job.cw)
        };
        let draw = match self.params.force_backoff {
            Some(b) => b,
            None => w.backoff_rng[n.index()].below(cw as u64) as u32,
        };
        let ifs = match class {
            PriorityClass::Urgent => self.params.ifs_urgent_us,
            PriorityClass::Normal => self.params.ifs_normal_us,
        };
        let s = self.node(n);
        s.state = FrogNodeState::Backoff;
        s.contention = Some(Contention {
            ifs,
            remaining: draw,
            since: now,
            count_from: None,
            timer: None,
        });
        self.contend_check(w, n)
    }

    fn contend_check(&mut self, w: &mut W, n: NodeId) -> SimResult {
        let now = w.now();
        let slot = self.params.backoff_slot_us;
        if let Some(t) = self.nodes[n.index()]
            .contention
            .as_mut()
            .and_then(|c| c.timer.take())
        {
            w.cancel(t);
        }
        let own_tx = w.channel.transmitting_until(n, now);
        let busy = self.busy_until(w, n, now);
        let idle_since = self.idle_since(w, n, now);
        let Some(c) = self.nodes[n.index()].contention.as_mut() else {
            return Ok(());
        };
        if let Some(until) = own_tx.max(busy) {
            c.count_from = None;
            c.timer = Some(w.set_timer(n, until, FrogTimer::Contend)?);
            return Ok(());
        }
        let from = idle_since.max(c.since) + c.ifs;
        c.count_from = Some(from);
        let expiry = from + c.remaining as u64 * slot;
        if now < expiry {
            c.timer = Some(w.set_timer(n, expiry, FrogTimer::Contend)?);
            return Ok(());
        }
        self.node(n).contention = None;
        self.send_rts(w, n)
    }

    fn current_unit_bytes(&self, job: &Job) -> u32 {
        match &job.plan {
            Some(plan) => plan.frame_bytes(job.next_frag),
            None => self.packet_length,
        }
    }

    fn send_rts(&mut self, w: &mut W, n: NodeId) -> SimResult {
        let now = w.now();
        let job = self.nodes[n.index()]
            .job
            .clone()
            .expect("RTS without a job");
        let data = self.air(self.current_unit_bytes(&job));
        let sifs = self.radio.sifs_us;
        let rts_air = self.air(self.radio.rts_bytes);
        let nav = now
            + rts_air
            + sifs
            + self.air(self.radio.cts_bytes)
            + sifs
            + data
            + sifs
            + self.air(self.radio.ack_bytes);
        let frame = Frame::new(
            FrameKind::Rts,
            n,
            Dest::Node(NodeId::SINK),
            self.radio.rts_bytes,
        )
        .with_packet(job.packet)
        .with_meta(FrameMeta::Reservation { nav_until: nav });
        self.node(n).state = FrogNodeState::SentRts;
        self.send(w, n, frame)?;
        Ok(())
    }

    fn send_data_unit(&mut self, w: &mut W, n: NodeId) -> SimResult {
        let now = w.now();
        let job = self.nodes[n.index()]
            .job
            .clone()
            .expect("DATA without a job");
        let sifs = self.radio.sifs_us;
        let ack_air = self.air(self.radio.ack_bytes);
        let frame = match &job.plan {
            None => {
                let end = now + self.air(self.packet_length);
                self.node(n).state = FrogNodeState::TxData;
                Frame::new(
                    FrameKind::Data,
                    n,
                    Dest::Node(NodeId::SINK),
                    self.packet_length,
                )
                .with_packet(job.packet)
                .with_meta(FrameMeta::Reservation {
                    nav_until: end + sifs + ack_air,
                })
            }
            Some(plan) => {
                let bytes = plan.frame_bytes(job.next_frag);
                let ack_end = now + self.air(bytes) + sifs + ack_air;
                let last = job.next_frag + 1 == plan.count();
                self.node(n).state = FrogNodeState::TxFragment;
                Frame::new(FrameKind::Fragment, n, Dest::Node(NodeId::SINK), bytes)
                    .with_packet(job.packet)
                    .with_meta(FrameMeta::Fragment {
                        index: job.next_frag as u16,
                        count: plan.count() as u16,
                        nav_until: ack_end,
                        soft_nav_until: (!last).then_some(ack_end + self.params.gap_frag_us),
                    })
            }
        };
        self.send(w, n, frame)?;
        Ok(())
    }

    // ---- job management ----------------------------------------------

    fn new_job(&self, w: &W, packet: PacketId, class: PriorityClass) -> Job {
        let plan = match class {
            PriorityClass::Urgent => None,
            PriorityClass::Normal => Some(FragmentPlan {
                parent: Some(packet),
                sizes: fragment_packet(w.packet(packet).length_bytes, self.params.frag_size)
                    .expect("fragment size validated at config load"),
                header_bytes: self.params.header_bytes,
            }),
        };
        Job {
            packet,
            class,
            plan,
            next_frag: 0,
            cw: self.params.cw_min,
            retries: 0,
        }
    }

    /// Picks the next job for an idle node: urgent head, then a suspended
    /// normal packet, then the normal head.
    fn start_next_job(&mut self, w: &mut W, n: NodeId) -> SimResult {
        debug_assert!(self.nodes[n.index()].job.is_none());
        let q = &w.queues[n.index()];
        let job = if let Some(p) = q.head_of(PriorityClass::Urgent) {
            Some(self.new_job(w, p, PriorityClass::Urgent))
        } else if let Some(job) = self.node(n).parked.take() {
            Some(job)
        } else {
            q.head_of(PriorityClass::Normal)
                .map(|p| self.new_job(w, p, PriorityClass::Normal))
        };
        match job {
            Some(job) => {
                self.node(n).job = Some(job);
                self.begin_contention(w, n)
            }
            None => {
                self.node(n).state = FrogNodeState::Idle;
                Ok(())
            }
        }
    }

    fn finish_job(&mut self, w: &mut W, n: NodeId) -> SimResult {
        let s = self.node(n);
        s.job = None;
        s.state = FrogNodeState::Idle;
        self.start_next_job(w, n)
    }

    fn cancel_timeout(&mut self, w: &mut W, n: NodeId) {
        if let Some(t) = self.node(n).timeout.take() {
            w.cancel(t);
        }
    }

    fn attempt_failed(&mut self, w: &mut W, n: NodeId) -> SimResult {
        let limit = self.params.retry_limit;
        let cw_max = self.params.cw_max;
        let job = self.node(n).job.as_mut().expect("timeout without a job");
        job.retries += 1;
        if job.retries > limit {
            let packet = job.packet;
            w.drop_packet(n, packet, DropReason::RetryLimit)?;
            return self.finish_job(w, n);
        }
        job.cw = (job.cw * 2).min(cw_max);
        self.begin_contention(w, n)
    }

    /// Parks the fragment train of `n`; only legal from a gap.
    fn suspend(&mut self, w: &mut W, n: NodeId) -> SimResult {
        let s = self.node(n);
        if s.state != FrogNodeState::GapWait {
            return Err(SimError::ProtocolLogic(format!(
                "{n} suspended from {:?}",
                s.state
            )));
        }
        if let Some(t) = s.timeout.take() {
            w.cancel(t);
        }
        s.parked = s.job.take();
        s.state = FrogNodeState::Suspended;
        w.diag.suspensions += 1;
        Ok(())
    }

    fn on_ack(&mut self, w: &mut W, n: NodeId) -> SimResult {
        self.cancel_timeout(w, n);
        let now = w.now();
        let job = self.node(n).job.as_mut().expect("ACK without a job");
        let packet = job.packet;
        let more = match &job.plan {
            None => false,
            Some(plan) => {
                job.next_frag += 1;
                job.next_frag < plan.count()
            }
        };
        if !more {
            w.complete_packet(n, packet);
            return self.finish_job(w, n);
        }
        let s = self.node(n);
        s.state = FrogNodeState::GapWait;
        s.gap_start = now;
        // Own urgent traffic takes the gap straight away.
        if !w.queues[n.index()].is_empty(PriorityClass::Urgent) {
            self.suspend(w, n)?;
            return self.start_next_job(w, n);
        }
        let watch = self.lone_urgent_contender_fits(n);
        if watch {
            w.diag.preemption_opportunities += 1;
        }
        self.node(n).gap_watch = watch;
        let t = w.set_timer(n, now + self.params.gap_frag_us, FrogTimer::GapEnd)?;
        self.node(n).timeout = Some(t);
        Ok(())
    }

    /// Exactly one other node contends with an urgent packet, and its
    /// remaining backoff fits inside the gap.
    fn lone_urgent_contender_fits(&self, except: NodeId) -> bool {
        let mut fits = None;
        for (i, s) in self.nodes.iter().enumerate() {
            if i == except.index() {
                continue;
            }
            let urgent = s
                .job
                .as_ref()
                .is_some_and(|j| j.class == PriorityClass::Urgent);
            if let (true, Some(c)) = (urgent, s.contention.as_ref()) {
                if fits.is_some() {
                    return false;
                }
                let need = c.ifs + c.remaining as u64 * self.params.backoff_slot_us;
                fits = Some(need < self.params.gap_frag_us);
            }
        }
        fits.unwrap_or(false)
    }

    fn on_gap_end(&mut self, w: &mut W, n: NodeId) -> SimResult {
        let now = w.now();
        let (start, watch) = {
            let s = self.node(n);
            s.timeout = None;
            (s.gap_start, s.gap_watch)
        };
        let seized = w.channel.activity_in(n, start..now) || self.busy_until(w, n, now).is_some();
        if seized {
            self.suspend(w, n)?;
            return self.start_next_job(w, n);
        }
        if watch {
            w.diag.preemption_violations += 1;
        }
        self.send_data_unit(w, n)
    }

    fn update_nav(
        &mut self,
        w: &mut W,
        n: NodeId,
        hard: Option<SimTime>,
        soft: Option<SimTime>,
    ) -> SimResult {
        let now = w.now();
        let s = self.node(n);
        let mut changed = false;
        if let Some(h) = hard {
            if h > s.nav_hard {
                s.nav_hard = h;
                changed = true;
            }
        }
        if let Some(sf) = soft {
            if sf > s.nav_soft {
                s.nav_soft = sf;
                changed = true;
            }
        }
        if changed && self.nodes[n.index()].contention.is_some() {
            self.freeze(w, n, now)?;
        }
        Ok(())
    }

    // ---- sink --------------------------------------------------------

    fn queue_reply(&mut self, w: &mut W, frame: Frame) -> SimResult {
        let at = w.now() + self.radio.sifs_us;
        self.replies.push_back((at, frame));
        w.set_timer(NodeId::SINK, at, FrogTimer::SinkReply)?;
        Ok(())
    }

    fn sink_receive(&mut self, w: &mut W, frame: &Frame) -> SimResult {
        let src = frame.src;
        let ack_air = self.air(self.radio.ack_bytes);
        let sifs = self.radio.sifs_us;
        match frame.kind {
            FrameKind::Rts => {
                let FrameMeta::Reservation { nav_until } = frame.meta else {
                    return Err(SimError::ProtocolLogic("RTS without reservation".into()));
                };
                let cts = Frame::new(
                    FrameKind::Cts,
                    NodeId::SINK,
                    Dest::Node(src),
                    self.radio.cts_bytes,
                )
                .with_meta(FrameMeta::Reservation { nav_until });
                let cts = match frame.packet {
                    Some(p) => cts.with_packet(p),
                    None => cts,
                };
                self.queue_reply(w, cts)
            }
            FrameKind::Data => {
                let packet = frame.packet.expect("DATA carries its packet");
                if self.last_whole[src.index()] != Some(packet) {
                    self.last_whole[src.index()] = Some(packet);
                    w.deliver(packet)?;
                }
                let ack = Frame::new(
                    FrameKind::Ack,
                    NodeId::SINK,
                    Dest::Node(src),
                    self.radio.ack_bytes,
                )
                .with_packet(packet)
                .with_meta(FrameMeta::Ack {
                    soft_nav_until: None,
                });
                self.queue_reply(w, ack)
            }
            FrameKind::Fragment => {
                let packet = frame.packet.expect("fragment carries its packet");
                let FrameMeta::Fragment {
                    index,
                    count,
                    soft_nav_until,
                    ..
                } = frame.meta
                else {
                    return Err(SimError::ProtocolLogic("fragment without header".into()));
                };
                let slot = &mut self.reassembly[src.index()];
                let entry = match slot {
                    Some(r) if r.packet == packet => r,
                    _ => {
                        if index != 0 {
                            w.diag.reassembly_violations += 1;
                            return Ok(());
                        }
                        *slot = Some(Reassembly {
                            packet,
                            next_index: 0,
                            done: false,
                        });
                        slot.as_mut().expect("just set")
                    }
                };
                if index == entry.next_index && !entry.done {
                    entry.next_index += 1;
                    w.diag.fragments_accepted += 1;
                    if entry.next_index == count {
                        entry.done = true;
                        w.deliver(packet)?;
                    }
                } else if index < entry.next_index {
                    w.diag.duplicate_fragments += 1;
                } else {
                    w.diag.reassembly_violations += 1;
                    return Ok(());
                }
                let _ = (ack_air, sifs);
                let ack = Frame::new(
                    FrameKind::Ack,
                    NodeId::SINK,
                    Dest::Node(src),
                    self.radio.ack_bytes,
                )
                .with_packet(packet)
                .with_meta(FrameMeta::Ack { soft_nav_until });
                self.queue_reply(w, ack)
            }
            FrameKind::Cts | FrameKind::Ack => Ok(()),
            kind => Err(SimError::UnexpectedFrame {
                protocol: "frogmac",
                kind,
            }),
        }
    }
}

impl MacProtocol for FrogMac {
    type Timer = FrogTimer;

    fn name(&self) -> &'static str {
        "frogmac"
    }

    fn start(&mut self, _w: &mut W) -> SimResult {
        Ok(())
    }

    fn on_packet_arrival(&mut self, w: &mut W, node: NodeId, packet: PacketId) -> SimResult {
        let s = &self.nodes[node.index()];
        let class = w.packet(packet).class;
        match (s.state, s.job.as_ref()) {
            (FrogNodeState::Idle, None) => self.start_next_job(w, node),
            (FrogNodeState::GapWait, _) if class == PriorityClass::Urgent => {
                self.suspend(w, node)?;
                self.start_next_job(w, node)
            }
            // A normal packet that has not put anything on air yet yields to
            // a new urgent one.
            (FrogNodeState::Backoff, Some(job))
                if class == PriorityClass::Urgent
                    && job.class == PriorityClass::Normal
                    && job.next_frag == 0
                    && job.retries == 0 =>
            {
                let s = self.node(node);
                if let Some(t) = s.contention.take().and_then(|c| c.timer) {
                    w.cancel(t);
                }
                s.job = None;
                self.start_next_job(w, node)
            }
            _ => Ok(()),
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
        if !frame.is_for(node) {
            return match &frame.meta {
                FrameMeta::Reservation { nav_until } => {
                    self.update_nav(w, node, Some(*nav_until), None)
                }
                FrameMeta::Fragment {
                    nav_until,
                    soft_nav_until,
                    ..
                } => self.update_nav(w, node, Some(*nav_until), *soft_nav_until),
                FrameMeta::Ack { soft_nav_until } => {
                    self.update_nav(w, node, None, *soft_nav_until)
                }
                FrameMeta::None => Ok(()),
                _ => Err(SimError::UnexpectedFrame {
                    protocol: "frogmac",
                    kind: frame.kind,
                }),
            };
        }
        let s = &self.nodes[node.index()];
        let expected = s.job.as_ref().map(|j| j.packet) == frame.packet;
        match (frame.kind, s.state) {
            (FrameKind::Cts, FrogNodeState::AwaitCts) if expected => {
                self.cancel_timeout(w, node);
                let t = w.timer_in(node, self.radio.sifs_us, FrogTimer::SendData)?;
                self.node(node).timeout = Some(t);
                Ok(())
            }
            (FrameKind::Ack, FrogNodeState::AwaitAck) if expected => self.on_ack(w, node),
            (FrameKind::Cts | FrameKind::Ack, _) => Ok(()),
            (kind, _) => Err(SimError::UnexpectedFrame {
                protocol: "frogmac",
                kind,
            }),
        }
    }

    fn on_tx_end(&mut self, w: &mut W, d: &crate::channel::Delivery) -> SimResult {
        let n = d.src;
        if n == NodeId::SINK {
            return Ok(());
        }
        let state = self.nodes[n.index()].state;
        let (timer, delay, next) = match (d.frame.kind, state) {
            (FrameKind::Rts, FrogNodeState::SentRts) => (
                FrogTimer::CtsTimeout,
                self.params.cts_timeout_us,
                FrogNodeState::AwaitCts,
            ),
            (FrameKind::Data, FrogNodeState::TxData)
            | (FrameKind::Fragment, FrogNodeState::TxFragment) => (
                FrogTimer::AckTimeout,
                self.params.ack_timeout_us,
                FrogNodeState::AwaitAck,
            ),
            // The job was abandoned (deadline) while the frame was on air.
            _ => return Ok(()),
        };
        if self.nodes[n.index()].job.as_ref().map(|j| j.packet) != d.frame.packet {
            return Ok(());
        }
        let t = w.timer_in(n, delay, timer)?;
        let s = self.node(n);
        s.state = next;
        s.timeout = Some(t);
        Ok(())
    }

    fn on_timer(&mut self, w: &mut W, node: NodeId, timer: FrogTimer) -> SimResult {
        match timer {
            FrogTimer::Contend => {
                if let Some(c) = self.node(node).contention.as_mut() {
                    c.timer = None;
                    self.contend_check(w, node)?;
                }
                Ok(())
            }
            FrogTimer::CtsTimeout | FrogTimer::AckTimeout => {
                self.node(node).timeout = None;
                self.attempt_failed(w, node)
            }
            FrogTimer::SendData => {
                self.node(node).timeout = None;
                self.send_data_unit(w, node)
            }
            FrogTimer::GapEnd => self.on_gap_end(w, node),
            FrogTimer::SinkReply => {
                let now = w.now();
                while let Some(&(at, _)) = self.replies.front() {
                    if at > now {
                        break;
                    }
                    let (_, frame) = self.replies.pop_front().expect("peeked");
                    if at == now && !w.channel.is_transmitting(NodeId::SINK, now) {
                        self.send(w, NodeId::SINK, frame)?;
                    }
                }
                Ok(())
            }
        }
    }

    fn on_packet_expired(&mut self, w: &mut W, node: NodeId, packet: PacketId) -> SimResult {
        let s = self.node(node);
        if s.job.as_ref().map(|j| j.packet) != Some(packet) {
            return Ok(());
        }
        if let Some(t) = s.contention.take().and_then(|c| c.timer) {
            w.cancel(t);
        }
        self.cancel_timeout(w, node);
        self.finish_job(w, node)
    }
}
