//! Reference implementations checked against the simulator building blocks.
//! Shared by the oracle tests and the acceptance run; failures panic.

use priomac::channel::{Channel, ChannelConfig, Dest, Frame, FrameKind, NodeId};
use priomac::frogmac::fragment_packet;
use priomac::kernel::{RngStream, Scheduler, SimTime};
use priomac::metrics::aggregate_class;
use priomac::traffic::{arrivals, DropReason, Packet, PacketId, PriorityClass, TrafficSpec};

pub fn kernel_matches_stable_sort_oracle() {
    const EVENTS: usize = 10_000;
    for trial in 0..100u64 {
        let mut rng = RngStream::new(0xC0FFEE, trial);
        let mut sched = Scheduler::new();
        // (time, insertion index, cancelled)
        let mut reference = Vec::with_capacity(EVENTS);
        let mut handles = Vec::with_capacity(EVENTS);
        for i in 0..EVENTS {
            // Narrow range so equal timestamps are common.
            let at = rng.below(2_000);
            handles.push(sched.schedule(SimTime(at), i).unwrap());
            reference.push((at, i, false));
        }
        for _ in 0..EVENTS / 10 {
            let i = rng.below(EVENTS as u64) as usize;
            let was_live = !reference[i].2;
            assert_eq!(sched.cancel(handles[i]), was_live);
            reference[i].2 = true;
        }
        reference.sort_by_key(|&(at, i, _)| (at, i));
        let expected: Vec<(u64, usize)> = reference
            .iter()
            .filter(|r| !r.2)
            .map(|&(at, i, _)| (at, i))
            .collect();

        let mut got = Vec::with_capacity(expected.len());
        let mut last = SimTime::ZERO;
        while let Some(ev) = sched.pop_until(SimTime(10_000)) {
            assert!(ev.at >= last, "clock went backwards");
            assert_eq!(sched.now(), ev.at);
            last = ev.at;
            got.push((ev.at.as_micros(), ev.payload));
        }
        assert_eq!(got, expected, "trial {trial}");
        assert_eq!(sched.now(), SimTime(10_000));
    }
}

pub fn channel_verdicts_match_pairwise_overlap() {
    for set in 0..100u64 {
        let mut rng = RngStream::new(77, set);
        let n = 2 + rng.below(40) as usize;
        // (start, end), one source per transmission.
        let mut txs: Vec<(u64, u64)> = (0..n)
            .map(|_| {
                let start = rng.below(15_000);
                let len = 1 + rng.below(40) as u32;
                (start, start + len as u64 * 32)
            })
            .collect();
        txs.sort();

        let mut ch = Channel::new(ChannelConfig::default());
        let mut ids = Vec::new();
        for (k, &(start, end)) in txs.iter().enumerate() {
            let src = NodeId(k as u16 + 1);
            let bytes = ((end - start) / 32) as u32;
            let frame = Frame::new(FrameKind::Data, src, Dest::Node(NodeId::SINK), bytes);
            let (id, e) = ch.transmit(src, frame, SimTime(start)).unwrap();
            assert_eq!(e, SimTime(end));
            ids.push(id);
        }
        let mut corrupted = 0;
        for (k, id) in ids.into_iter().enumerate() {
            let d = ch.complete(id).unwrap();
            let (s, e) = txs[k];
            let overlaps = txs
                .iter()
                .enumerate()
                .any(|(j, &(s2, e2))| j != k && s < e2 && s2 < e);
            assert_eq!(d.intact, !overlaps, "set {set} tx {k} [{s}, {e})");
            corrupted += u64::from(overlaps);
        }
        assert_eq!(ch.stats().corrupted(FrameKind::Data), corrupted);
        assert_eq!(ch.stats().sent(FrameKind::Data), n as u64);
    }
}

fn random_packets(rng: &mut RngStream, n: usize) -> Vec<Packet> {
    (0..n)
        .map(|i| {
            let class = if rng.below(3) == 0 {
                PriorityClass::Urgent
            } else {
                PriorityClass::Normal
            };
            let generated = rng.below(1_000_000_000);
            let (delivered_at, drop_reason) = match rng.below(6) {
                0 => (None, Some(DropReason::DeadlineExpired)),
                1 => (None, Some(DropReason::RetryLimit)),
                2 => (None, Some(DropReason::QueueOverflow)),
                3 => (None, None),
                _ => (Some(SimTime(generated + rng.below(200_000))), None),
            };
            Packet {
                id: PacketId(i as u32),
                class,
                src: NodeId(1 + rng.below(19) as u16),
                length_bytes: 34,
                generated_at: SimTime(generated),
                deadline_at: None,
                delivered_at,
                drop_reason,
            }
        })
        .collect()
}

pub fn metrics_match_naive_pass() {
    let mut rng = RngStream::new(5, 5);
    let packets = random_packets(&mut rng, 10_000);
    for class in PriorityClass::ALL {
        let got = aggregate_class(&packets, class);

        let mine: Vec<&Packet> = packets.iter().filter(|p| p.class == class).collect();
        let count = |r: DropReason| mine.iter().filter(|p| p.drop_reason == Some(r)).count() as u64;
        let mut delays: Vec<u64> = mine
            .iter()
            .filter_map(|p| {
                p.delivered_at
                    .map(|d| d.as_micros() - p.generated_at.as_micros())
            })
            .collect();
        delays.sort();
        let mean = delays.iter().map(|&d| d as f64).sum::<f64>() / delays.len() as f64;
        // Nearest rank: smallest r with r / n >= 0.95.
        let n = delays.len();
        let rank = (1..=n).find(|r| r * 100 >= 95 * n).unwrap();

        assert_eq!(got.generated, mine.len() as u64);
        assert_eq!(got.delivered, n as u64);
        assert_eq!(got.dropped_deadline, count(DropReason::DeadlineExpired));
        assert_eq!(got.dropped_retry, count(DropReason::RetryLimit));
        assert_eq!(got.dropped_overflow, count(DropReason::QueueOverflow));
        assert_eq!(
            got.residual(),
            mine.iter().filter(|p| !p.is_finalized()).count() as u64
        );
        assert!((got.mean_delay_us.unwrap() - mean).abs() < 1e-6 * mean);
        assert_eq!(got.p95_delay_us, Some(delays[rank - 1]));
        assert_eq!(got.max_delay_us, delays.last().copied());
    }
}

pub fn empty_class_has_no_delay_statistics() {
    let got = aggregate_class(&[], PriorityClass::Urgent);
    assert_eq!(got.generated, 0);
    assert_eq!(got.mean_delay_us, None);
    assert_eq!(got.p95_delay_us, None);
    assert_eq!(got.loss_rate(), None);
}

pub fn fragment_plans_match_ceiling_arithmetic() {
    let length = 34u32;
    for frag in 2..=34u32 {
        let sizes = fragment_packet(length, frag).unwrap();
        let count = (length as f64 / frag as f64).ceil() as usize;
        assert_eq!(sizes.len(), count, "frag_size {frag}");
        assert_eq!(sizes.iter().sum::<u32>(), length);
        assert!(sizes[..count - 1].iter().all(|&s| s == frag));
        assert_eq!(sizes[count - 1], length - frag * (count as u32 - 1));
    }
    assert!(fragment_packet(length, 1).is_err());
    assert!(fragment_packet(length, 0).is_err());
}

pub fn arrival_counts_match_closed_form() {
    let mut rng = RngStream::new(9, 9);
    for _ in 0..1_000 {
        let interval = 1 + rng.below(5_000_000);
        let phase = rng.below(interval);
        let horizon = rng.below(50_000_000);
        let spec = TrafficSpec {
            class: PriorityClass::Normal,
            interval_us: interval,
            phase_us: phase,
        };
        let got = arrivals(&spec, SimTime(horizon));
        let expected = if phase >= horizon {
            0
        } else {
            ((horizon - phase) as f64 / interval as f64).ceil() as usize
        };
        assert_eq!(got.len(), expected);
        for (k, t) in got.iter().enumerate() {
            assert_eq!(t.as_micros(), phase + k as u64 * interval);
        }
    }
}
