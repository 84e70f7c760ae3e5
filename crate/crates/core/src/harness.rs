//! Scenario runner and figure sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::{parse_entries, parse_list, parse_u64, SimConfig};
use crate::error::{ConfigError, HarnessError};
use crate::frogmac::FrogMac;
use crate::mac::{RunOutput, Simulation};
use crate::metrics::{to_csv, Protocol, ScenarioKey, ScenarioResult};
use crate::plot::{render_svg, Chart, PointSummary, Series};
use crate::ssmac::SsMac;
use crate::traffic::PriorityClass;

pub const BASELINE_PRESET: &str = "baseline";
pub const STRESS_PRESET: &str = "stress";

/// One protocol run on one fully specified configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub preset: String,
    pub protocol: Protocol,
    pub config: SimConfig,
}

impl Scenario {
    pub fn new(preset: impl Into<String>, protocol: Protocol, config: SimConfig) -> Self {
        Scenario {
            preset: preset.into(),
            protocol,
            config,
        }
    }

    pub fn key(&self) -> ScenarioKey {
        ScenarioKey {
            preset: self.preset.clone(),
            protocol: self.protocol,
            n_urgent: self.config.n_urgent,
            frag_size: self.config.frogmac.frag_size,
            seed: self.config.seed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.config.validate()
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub result: ScenarioResult,
    pub output: RunOutput,
}

pub fn run_scenario(s: &Scenario) -> Result<RunReport, HarnessError> {
    run_scenario_traced(s, None)
}

/// Validates, runs and aggregates one scenario. A conservation mismatch is
/// reported as an error.
pub fn run_scenario_traced(
    s: &Scenario,
    trace: Option<&mut dyn Write>,
) -> Result<RunReport, HarnessError> {
    s.validate()?;
    let key = s.key();
    let config = s.config.clone();
    let output = match s.protocol {
        Protocol::SsMac => {
            let mac = SsMac::new(&config);
            Simulation::new(config, mac).run_traced(trace)
        }
        Protocol::FrogMac => {
            let mac = FrogMac::new(&config);
            Simulation::new(config, mac).run_traced(trace)
        }
    }
    .map_err(|source| HarnessError::Sim {
        scenario: key.id(),
        source,
    })?;
    if !output.conservation_errors.is_empty() {
        return Err(HarnessError::Conservation {
            scenario: key.id(),
            detail: output.conservation_errors.join("; "),
        });
    }
    let result = ScenarioResult::from_packets(key, &output.packets);
    Ok(RunReport { result, output })
}

/// Runs every scenario on up to `threads` workers; results come back sorted
/// by scenario key whatever the completion order.
pub fn run_many(
    scenarios: &[Scenario],
    threads: usize,
) -> Result<Vec<ScenarioResult>, HarnessError> {
    for s in scenarios {
        s.validate()?;
    }
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(scenarios.len()));
    let first_error = Mutex::new(None);
    let workers = threads.clamp(1, scenarios.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(s) = scenarios.get(i) else { break };
                match run_scenario(s) {
                    Ok(r) => results.lock().expect("results lock").push(r.result),
                    Err(e) => {
                        first_error.lock().expect("error lock").get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().expect("error lock") {
        return Err(e);
    }
    let mut results = results.into_inner().expect("results lock");
    results.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Urgent mean delay against urgent node count.
    Delay,
    /// Urgent mean delay against fragment size.
    FragmentDelay,
    /// Urgent loss rate against urgent node count.
    Loss,
}

impl Figure {
    pub fn from_number(n: u32) -> Option<Figure> {
        match n {
            3 => Some(Figure::Delay),
            4 => Some(Figure::FragmentDelay),
            5 => Some(Figure::Loss),
            _ => None,
        }
    }

    pub fn number(self) -> u32 {
        match self {
            Figure::Delay => 3,
            Figure::FragmentDelay => 4,
            Figure::Loss => 5,
        }
    }
}

/// Base parameters plus the sweep axes and the stress preset overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: SimConfig,
    pub seeds: Vec<u64>,
    pub urgent_nodes: Vec<usize>,
    pub frag_sizes: Vec<u32>,
    pub stress_urgent_interval_us: u64,
    pub stress_urgent_deadline_us: u64,
    /// 0 = one worker per available core.
    pub threads: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let mut c = SweepConfig {
            base: SimConfig::default(),
            seeds: (1..=10).collect(),
            urgent_nodes: vec![2, 4, 6, 8, 10],
            frag_sizes: vec![2, 4, 8, 16, 32],
            stress_urgent_interval_us: 2_000_000,
            stress_urgent_deadline_us: 7_500,
            threads: 0,
        };
        c.fix_normal_population();
        c
    }
}

impl SweepConfig {
    /// Parses a configuration file. Keys not known to the sweep are applied
    /// to the base run parameters; unknown keys are an error.
    pub fn parse(text: &str) -> Result<SweepConfig, ConfigError> {
        let mut c = SweepConfig::default();
        for (_, key, value) in parse_entries(text)? {
            let (k, v) = (key.as_str(), value.as_str());
            match k {
                "seeds" => c.seeds = parse_list(k, v)?,
                "urgent_nodes_sweep" | "sweep_urgent_nodes" => {
                    c.urgent_nodes = parse_list(k, v)?.into_iter().map(|n| n as usize).collect()
                }
                "frag_sizes" => {
                    c.frag_sizes = parse_list(k, v)?
                        .into_iter()
                        .map(|n| {
                            u32::try_from(n).map_err(|_| ConfigError::BadValue {
                                key: k.into(),
                                value: v.into(),
                                reason: "too large".into(),
                            })
                        })
                        .collect::<Result<_, _>>()?
                }
                "stress_urgent_interval_s" => {
                    c.stress_urgent_interval_us = parse_u64(k, v)? * 1_000_000
                }
                "stress_urgent_interval_us" => c.stress_urgent_interval_us = parse_u64(k, v)?,
                "stress_urgent_deadline_ms" => {
                    c.stress_urgent_deadline_us = parse_u64(k, v)? * 1_000
                }
                "stress_urgent_deadline_us" => c.stress_urgent_deadline_us = parse_u64(k, v)?,
                "threads" => c.threads = parse_u64(k, v)? as usize,
                _ => {
                    if !c.base.set(k, v)? {
                        return Err(ConfigError::UnknownKey(key));
                    }
                }
            }
        }
        c.fix_normal_population();
        Ok(c)
    }

    /// Without an explicit `n_normal`, the normal population is the sensors
    /// left over at the largest sweep point, so it stays constant while the
    /// urgent count varies.
    pub fn fix_normal_population(&mut self) {
        if self.base.n_normal.is_none() {
            let max_urgent = self.urgent_nodes.iter().copied().max().unwrap_or(0);
            self.base.n_normal = Some(self.base.sensors().saturating_sub(max_urgent));
        }
    }

    pub fn load(path: &Path) -> Result<SweepConfig, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(SweepConfig::parse(&text)?)
    }

    pub fn presets(&self) -> [&'static str; 2] {
        [BASELINE_PRESET, STRESS_PRESET]
    }

    pub fn preset(&self, name: &str) -> SimConfig {
        let mut c = self.base.clone();
        if name == STRESS_PRESET {
            c.traffic.urgent_interval_us = self.stress_urgent_interval_us;
            c.traffic.urgent_deadline_us = self.stress_urgent_deadline_us;
        }
        c
    }

    fn frag_axis(&self, figure: Figure) -> Vec<u32> {
        match figure {
            Figure::FragmentDelay => self.frag_sizes.clone(),
            _ => vec![self.base.frogmac.frag_size],
        }
    }

    /// Every scenario a figure needs, for one preset.
    pub fn scenarios(&self, figure: Figure, preset: &str) -> Vec<Scenario> {
        let mut out = Vec::new();
        for protocol in [Protocol::SsMac, Protocol::FrogMac] {
            for &n in &self.urgent_nodes {
                for &f in &self.frag_axis(figure) {
                    for &seed in &self.seeds {
                        let mut c = self.preset(preset);
                        c.n_urgent = n;
                        c.frogmac.frag_size = f;
                        c.seed = seed;
                        out.push(Scenario::new(preset, protocol, c));
                    }
                }
            }
        }
        out
    }

    /// Checks every scenario of the figure before anything runs.
    pub fn validate(&self, figure: Figure) -> Result<usize, ConfigError> {
        if self.seeds.is_empty() || self.urgent_nodes.is_empty() || self.frag_sizes.is_empty() {
            return Err(ConfigError::Invalid("sweep axes must not be empty".into()));
        }
        let mut count = 0;
        for preset in self.presets() {
            for s in self.scenarios(figure, preset) {
                s.validate()?;
                count += 1;
            }
        }
        Ok(count)
    }

    pub fn worker_count(&self) -> usize {
        match self.threads {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }
}

/// Results of one figure, per preset, each sorted by scenario key.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub figure: Figure,
    pub results: BTreeMap<String, Vec<ScenarioResult>>,
}

pub fn run_sweep(config: &SweepConfig, figure: Figure) -> Result<SweepOutput, HarnessError> {
    config.validate(figure)?;
    let mut results = BTreeMap::new();
    for preset in config.presets() {
        let scenarios = config.scenarios(figure, preset);
        results.insert(
            preset.to_string(),
            run_many(&scenarios, config.worker_count())?,
        );
    }
    Ok(SweepOutput { figure, results })
}

/// Urgent mean delay in ms; loss rate in percent.
fn metric(r: &ScenarioResult, figure: Figure) -> Option<f64> {
    let u = &r.urgent;
    match figure {
        Figure::Delay | Figure::FragmentDelay => u.mean_delay_us.map(|d| d / 1000.0),
        Figure::Loss => u.loss_rate().map(|l| l * 100.0),
    }
}

/// Seed statistics per (series, x) for one figure.
pub fn chart_for(figure: Figure, preset: &str, results: &[ScenarioResult]) -> Chart {
    let mut groups: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in results {
        let (label, x) = match figure {
            Figure::Delay | Figure::Loss => {
                (r.key.protocol.as_str().to_string(), r.key.n_urgent as u64)
            }
            Figure::FragmentDelay => (
                format!("{} n={:02}", r.key.protocol.as_str(), r.key.n_urgent),
                r.key.frag_size as u64,
            ),
        };
        let entry = groups.entry((label, x)).or_default();
        if let Some(v) = metric(r, figure) {
            entry.push(v);
        }
    }
    let mut series: Vec<Series> = Vec::new();
    for ((label, x), samples) in groups {
        let Some(p) = PointSummary::from_samples(x as f64, &samples) else {
            continue;
        };
        match series.last_mut() {
            Some(s) if s.label == label => s.points.push(p),
            _ => series.push(Series {
                label,
                points: vec![p],
            }),
        }
    }
    let (title, x_label, y_label) = match figure {
        Figure::Delay => (
            "Urgent delay vs. urgent nodes",
            "urgent nodes",
            "urgent mean delay (ms)",
        ),
        Figure::FragmentDelay => (
            "Urgent delay vs. fragment size",
            "fragment size (bytes)",
            "urgent mean delay (ms)",
        ),
        Figure::Loss => (
            "Urgent packet loss vs. urgent nodes",
            "urgent nodes",
            "urgent loss rate (%)",
        ),
    };
    Chart {
        title: format!("{title} [{preset}]"),
        x_label: x_label.into(),
        y_label: y_label.into(),
        series,
    }
}

fn file_stem(figure: Figure, preset: &str) -> String {
    if preset == BASELINE_PRESET {
        format!("fig{}", figure.number())
    } else {
        format!("fig{}_{preset}", figure.number())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Effective parameters, axes and outputs of a sweep. Contains nothing
/// time- or host-dependent.
pub fn manifest(config: &SweepConfig, figure: Figure, outputs: &[(String, usize)]) -> String {
    let join = |v: &[String]| v.join(",");
    let mut m = String::new();
    let _ = writeln!(m, "# priomac run manifest");
    let _ = writeln!(m, "tool = priomac {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "figure = {}", figure.number());
    let _ = writeln!(
        m,
        "seeds = {}",
        join(&config.seeds.iter().map(u64::to_string).collect::<Vec<_>>())
    );
    let _ = writeln!(
        m,
        "urgent_nodes_sweep = {}",
        join(
            &config
                .urgent_nodes
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
        )
    );
    let _ = writeln!(
        m,
        "frag_sizes = {}",
        join(
            &config
                .frag_axis(figure)
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
        )
    );
    let _ = writeln!(m, "rng = xorshift64* seeded by splitmix64(seed, stream)");
    for preset in config.presets() {
        let _ = writeln!(m, "\n[preset {preset}]");
        for (k, v) in config.preset(preset).to_entries() {
            let _ = writeln!(m, "{k} = {v}");
        }
    }
    let _ = writeln!(m, "\n[outputs]");
    for (name, rows) in outputs {
        let _ = writeln!(m, "{name} = {rows} scenarios");
    }
    m
}

/// Runs a figure sweep and writes per-preset CSV and SVG files plus
/// `manifest.txt` into `dir`. Returns the written paths.
pub fn write_sweep(
    config: &SweepConfig,
    figure: Figure,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let out = run_sweep(config, figure)?;
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    let mut listed = Vec::new();
    for (preset, results) in &out.results {
        let stem = file_stem(figure, preset);
        let csv = dir.join(format!("{stem}.csv"));
        write_file(&csv, &to_csv(results))?;
        let svg = dir.join(format!("{stem}.svg"));
        write_file(&svg, &render_svg(&chart_for(figure, preset, results)))?;
        listed.push((format!("{stem}.csv"), results.len()));
        written.push(csv);
        written.push(svg);
    }
    let path = dir.join("manifest.txt");
    write_file(&path, &manifest(config, figure, &listed))?;
    written.push(path);
    Ok(written)
}

/// Seed-averaged urgent statistic per (protocol, n_urgent, frag_size).
pub fn seed_means(
    results: &[ScenarioResult],
    class: PriorityClass,
    f: impl Fn(&crate::metrics::ClassStats) -> Option<f64>,
) -> BTreeMap<(Protocol, usize, u32), f64> {
    let mut acc: BTreeMap<(Protocol, usize, u32), Vec<f64>> = BTreeMap::new();
    for r in results {
        if let Some(v) = f(r.class(class)) {
            acc.entry((r.key.protocol, r.key.n_urgent, r.key.frag_size))
                .or_default()
                .push(v);
        }
    }
    acc.into_iter()
        .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}
