//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

#![allow(clippy::field_reassign_with_default)]

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, UnwindSafe};
use std::process::ExitCode;

use priomac::channel::FrameKind;
use priomac::harness::{
    run_many, run_scenario, Figure, Scenario, SweepConfig, BASELINE_PRESET, STRESS_PRESET,
};
use priomac::metrics::{to_csv, ClassStats, Protocol, ScenarioResult};
use priomac::traffic::PriorityClass;
use priomac::SimConfig;

const SS_GROWTH_MIN: f64 = 1.5;
const FROG_GROWTH_MAX: f64 = 0.25;
const FROG_FRAG_SPREAD_MAX: f64 = 0.25;
const LOSS_INVERSION_MAX: f64 = 0.01;
const EIS_WAIT_TOLERANCE: f64 = 0.02;
const EIS_MIN_CYCLES: usize = 200;
const FORCED_DRAWS: [u32; 3] = [0, 1, 7];

type Verdict = Result<String, String>;

/// Results of a batch plus the per-run facts criterion 7 needs.
struct Batch {
    results: Vec<ScenarioResult>,
    ssmac_data_collisions: u64,
    runs: usize,
}

fn run_batch(scenarios: &[Scenario]) -> Result<Batch, String> {
    let mut batch = Batch {
        results: Vec::with_capacity(scenarios.len()),
        ssmac_data_collisions: 0,
        runs: 0,
    };
    for s in scenarios {
        let report = run_scenario(s).map_err(|e| e.to_string())?;
        if s.protocol == Protocol::SsMac {
            batch.ssmac_data_collisions += report.output.channel.corrupted(FrameKind::Data);
        }
        for class in PriorityClass::ALL {
            let c = report.result.class(class);
            let open = report
                .output
                .packets
                .iter()
                .filter(|p| p.class == class && !p.is_finalized())
                .count() as u64;
            if c.generated != c.delivered + c.dropped() + open {
                return Err(format!("{}: {class} packets not conserved", s.key().id()));
            }
        }
        batch.runs += 1;
        batch.results.push(report.result);
    }
    batch.results.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(batch)
}

fn means(
    results: &[ScenarioResult],
    f: impl Fn(&ClassStats) -> Option<f64>,
) -> BTreeMap<(Protocol, usize, u32), f64> {
    priomac::harness::seed_means(results, PriorityClass::Urgent, f)
}

fn curve(m: &BTreeMap<(Protocol, usize, u32), f64>, p: Protocol) -> Vec<(usize, f64)> {
    m.iter()
        .filter(|((q, _, _), _)| *q == p)
        .map(|((_, n, _), v)| (*n, *v))
        .collect()
}

fn mean_delay(c: &ClassStats) -> Option<f64> {
    c.mean_delay_us
}

fn loss(c: &ClassStats) -> Option<f64> {
    c.loss_rate()
}

fn fmt_curve(c: &[(usize, f64)], scale: f64, digits: usize, unit: &str) -> String {
    let parts: Vec<String> = c
        .iter()
        .map(|(n, v)| format!("{n}:{:.digits$}", v * scale))
        .collect();
    format!("[{}] {unit}", parts.join(" "))
}

fn criterion_delay_trend(batch: &Batch) -> Verdict {
    let m = means(&batch.results, mean_delay);
    let ss = curve(&m, Protocol::SsMac);
    let frog = curve(&m, Protocol::FrogMac);
    if ss.len() < 2 || ss.len() != frog.len() {
        return Err("missing sweep points".into());
    }
    let below = ss.iter().zip(&frog).all(|(s, f)| f.1 < s.1);
    let ss_ratio = ss.last().unwrap().1 / ss[0].1;
    let frog_growth = frog.last().unwrap().1 / frog[0].1 - 1.0;
    let detail = format!(
        "ssmac {} frogmac {}; ssmac x{ss_ratio:.3} (>= {SS_GROWTH_MIN}), frogmac {:+.2}% (<= {:.0}%), frogmac below everywhere: {below}",
        fmt_curve(&ss, 1e-3, 3, "ms"),
        fmt_curve(&frog, 1e-3, 3, "ms"),
        frog_growth * 100.0,
        FROG_GROWTH_MAX * 100.0
    );
    if below && ss_ratio >= SS_GROWTH_MIN && frog_growth <= FROG_GROWTH_MAX {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_fragment_trend(batch: &Batch) -> Verdict {
    let m = means(&batch.results, mean_delay);
    let mut worst_spread: f64 = 0.0;
    let mut ss_above = true;
    let mut points = 0;
    let ns: BTreeSet<usize> = m.keys().map(|k| k.1).collect();
    for &n in &ns {
        let frog: Vec<(u32, f64)> = m
            .iter()
            .filter(|((p, k, _), _)| *p == Protocol::FrogMac && *k == n)
            .map(|((_, _, f), v)| (*f, *v))
            .collect();
        let lo = frog.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let hi = frog.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        worst_spread = worst_spread.max((hi - lo) / lo);
        for (f, v) in &frog {
            points += 1;
            match m.get(&(Protocol::SsMac, n, *f)) {
                Some(ss) if ss > v => {}
                _ => ss_above = false,
            }
        }
    }
    // SS-MAC per seed must not depend on the fragment size at all.
    let mut by_seed: BTreeMap<(usize, u64), Vec<&ScenarioResult>> = BTreeMap::new();
    for r in batch
        .results
        .iter()
        .filter(|r| r.key.protocol == Protocol::SsMac)
    {
        by_seed
            .entry((r.key.n_urgent, r.key.seed))
            .or_default()
            .push(r);
    }
    let constant = by_seed.values().all(|rs| {
        rs.iter()
            .all(|r| r.urgent == rs[0].urgent && r.normal == rs[0].normal)
    });
    let detail = format!(
        "{points} points; worst frogmac spread {:.2}% (<= {:.0}%); ssmac above everywhere: {ss_above}; ssmac constant per seed: {constant}",
        worst_spread * 100.0,
        FROG_FRAG_SPREAD_MAX * 100.0
    );
    if points > 0 && worst_spread <= FROG_FRAG_SPREAD_MAX && ss_above && constant {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Non-decreasing apart from at most one drop no larger than the tolerance.
fn nearly_monotone(c: &[(usize, f64)]) -> bool {
    let drops: Vec<f64> = c
        .windows(2)
        .map(|w| w[0].1 - w[1].1)
        .filter(|d| *d > 0.0)
        .collect();
    drops.len() <= 1 && drops.iter().all(|d| *d <= LOSS_INVERSION_MAX)
}

fn criterion_loss_trend(batch: &Batch) -> Verdict {
    let m = means(&batch.results, loss);
    let ss = curve(&m, Protocol::SsMac);
    let frog = curve(&m, Protocol::FrogMac);
    if ss.len() < 2 || ss.len() != frog.len() {
        return Err("missing sweep points".into());
    }
    let mono = nearly_monotone(&ss) && nearly_monotone(&frog);
    let ss_above = ss.iter().zip(&frog).all(|(s, f)| s.1 >= f.1);
    let ss_rise = ss.last().unwrap().1 - ss[0].1;
    let frog_rise = frog.last().unwrap().1 - frog[0].1;
    let detail = format!(
        "ssmac {} frogmac {}; monotone: {mono}; ssmac >= frogmac: {ss_above}; rise {:.5} vs {:.5}",
        fmt_curve(&ss, 1.0, 5, "loss"),
        fmt_curve(&frog, 1.0, 5, "loss"),
        ss_rise,
        frog_rise
    );
    if mono && ss_above && ss_rise > frog_rise {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_frog_closed_form() -> Verdict {
    let mut parts = Vec::new();
    let mut all = true;
    for b in FORCED_DRAWS {
        let mut c = SimConfig::default();
        c.n_urgent = 1;
        c.n_normal = Some(0);
        c.frogmac.force_backoff = Some(b);
        c.duration_us = 5_000_000_000;
        let r = c.radio.clone();
        let f = c.frogmac.clone();
        let expected = f.ifs_urgent_us
            + r.airtime(r.rts_bytes)
            + r.sifs_us
            + r.airtime(r.cts_bytes)
            + r.sifs_us
            + r.airtime(c.traffic.packet_length)
            + b as u64 * f.backoff_slot_us;
        let report = run_scenario(&Scenario::new("closed-form", Protocol::FrogMac, c))
            .map_err(|e| e.to_string())?;
        let delays: Vec<u64> = report
            .output
            .packets
            .iter()
            .filter_map(|p| p.delay_us())
            .collect();
        let exact = !delays.is_empty()
            && delays.len() as u64 == report.result.urgent.generated
            && delays.iter().all(|&d| d == expected);
        all &= exact && expected == 2_368 + 320 * b as u64;
        parts.push(format!(
            "b={b}: {} samples == {expected} us: {exact}",
            delays.len()
        ));
    }
    let detail = parts.join("; ");
    if all {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_ssmac_closed_form() -> Verdict {
    let mut waits = Vec::new();
    let mut violations = 0;
    let mut period = 0;
    for seed in 1..=10 {
        let mut c = SimConfig::default();
        c.n_urgent = 1;
        c.seed = seed;
        c.duration_us = 5_000_000_000;
        c.traffic.urgent_interval_us = 1_000_000;
        period = c.ssmac.eis_period_us(c.effective_normal_nodes());
        let report =
            run_scenario(&Scenario::new("eis", Protocol::SsMac, c)).map_err(|e| e.to_string())?;
        violations += report.output.diag.eis_bound_violations;
        waits.extend(report.output.diag.eis_waits_us.iter().copied());
    }
    let mean = waits.iter().sum::<u64>() as f64 / waits.len().max(1) as f64;
    let half = period as f64 / 2.0;
    let err = (mean - half).abs() / half;
    let cycles = waits.len();
    let detail = format!(
        "{cycles} waits; mean {mean:.1} us vs P/2 = {half:.1} us ({:.2}% <= {:.0}%); bound violations {violations}",
        err * 100.0,
        EIS_WAIT_TOLERANCE * 100.0
    );
    if cycles >= EIS_MIN_CYCLES && err <= EIS_WAIT_TOLERANCE && violations == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn guarded(name: &str, f: impl FnOnce() + UnwindSafe) -> Result<(), String> {
    catch_unwind(f).map_err(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        format!("{name}: {msg}")
    })
}

fn criterion_oracles() -> Verdict {
    let suites: [(&str, fn()); 6] = [
        ("kernel vs sort", common::kernel_matches_stable_sort_oracle),
        (
            "channel vs pairwise overlap",
            common::channel_verdicts_match_pairwise_overlap,
        ),
        ("metrics vs naive pass", common::metrics_match_naive_pass),
        (
            "metrics on an empty class",
            common::empty_class_has_no_delay_statistics,
        ),
        (
            "fragment plans vs ceiling",
            common::fragment_plans_match_ceiling_arithmetic,
        ),
        ("arrival counts", common::arrival_counts_match_closed_form),
    ];
    let failures: Vec<String> = suites
        .iter()
        .filter_map(|(name, f)| guarded(name, *f).err())
        .collect();
    if failures.is_empty() {
        Ok(format!("{} suites, zero mismatches", suites.len()))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_conservation(batches: &[&Batch], cfg: &SweepConfig) -> Verdict {
    let runs: usize = batches.iter().map(|b| b.runs).sum();
    let collisions: u64 = batches.iter().map(|b| b.ssmac_data_collisions).sum();
    // Re-run the baseline delay sweep on the threaded path and compare bytes.
    let scenarios = cfg.scenarios(Figure::Delay, BASELINE_PRESET);
    let again = run_many(&scenarios, cfg.worker_count()).map_err(|e| e.to_string())?;
    let identical = to_csv(&again) == to_csv(&batches[0].results);
    let detail = format!(
        "{runs} runs conserved; re-run CSV byte-identical: {identical}; ssmac DATA collisions: {collisions}"
    );
    if identical && collisions == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn report(n: u32, title: &str, v: &Verdict) -> bool {
    match v {
        Ok(d) => println!("PASS criterion {n} ({title}): {d}"),
        Err(d) => println!("FAIL criterion {n} ({title}): {d}"),
    }
    v.is_ok()
}

fn main() -> ExitCode {
    let cfg = SweepConfig::default();
    let batch = |fig: Figure, preset: &str| run_batch(&cfg.scenarios(fig, preset));
    let (fig3, fig4, fig5) = match (
        batch(Figure::Delay, BASELINE_PRESET),
        batch(Figure::FragmentDelay, BASELINE_PRESET),
        batch(Figure::Loss, STRESS_PRESET),
    ) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (a, b, c) => {
            for e in [a.err(), b.err(), c.err()].into_iter().flatten() {
                println!("FAIL sweep: {e}");
            }
            return ExitCode::FAILURE;
        }
    };

    let verdicts = [
        report(1, "delay vs urgent nodes", &criterion_delay_trend(&fig3)),
        report(
            2,
            "delay vs fragment size",
            &criterion_fragment_trend(&fig4),
        ),
        report(
            3,
            "stress loss vs urgent nodes",
            &criterion_loss_trend(&fig5),
        ),
        report(
            4,
            "single-node FROG-MAC delay",
            &criterion_frog_closed_form(),
        ),
        report(5, "SS-MAC wait to EIS", &criterion_ssmac_closed_form()),
        report(6, "oracle suites", &criterion_oracles()),
        report(
            7,
            "conservation and determinism",
            &criterion_conservation(&[&fig3, &fig4, &fig5], &cfg),
        ),
    ];
    let passed = verdicts.iter().filter(|v| **v).count();
    println!("acceptance: {passed}/{} criteria passed", verdicts.len());
    if passed == verdicts.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
