use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use priomac::config::parse_entries;
use priomac::harness::{run_scenario_traced, write_sweep, Figure, Scenario, SweepConfig};
use priomac::metrics::{to_csv, Protocol};
use priomac::SimConfig;

#[derive(Parser)]
#[command(
    name = "priomac",
    version,
    about = "Priority MAC simulator (SS-MAC vs FROG-MAC)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Ssmac,
    Frogmac,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Ssmac => Protocol::SsMac,
            ProtocolArg::Frogmac => Protocol::FrogMac,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its per-class CSV rows.
    Simulate {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        #[arg(long = "urgent-nodes")]
        urgent_nodes: usize,
        #[arg(long = "frag-size")]
        frag_size: Option<u32>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "duration-s", default_value_t = 5000)]
        duration_s: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write an event trace next to the CSV (`<out>.trace.csv`).
        #[arg(long)]
        trace: bool,
        /// Parameter overrides in the `key = value` format.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a figure sweep and write CSV, SVG and a manifest.
    Sweep {
        #[arg(long, value_parser = clap::value_parser!(u32).range(3..=5))]
        figure: u32,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Check a configuration file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    out.with_file_name(name)
}

fn load_overrides(path: &Path) -> Result<SimConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut c = SimConfig::default();
    for (line, key, value) in parse_entries(&text)? {
        if !c.set(&key, &value)? {
            bail!("{}:{line}: unknown key {key:?}", path.display());
        }
    }
    Ok(c)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    protocol: Protocol,
    urgent_nodes: usize,
    frag_size: Option<u32>,
    seed: u64,
    duration_s: u64,
    out: &Path,
    trace: bool,
    config: Option<&Path>,
) -> Result<()> {
    let mut c = match config {
        Some(p) => load_overrides(p)?,
        None => SimConfig::default(),
    };
    c.n_urgent = urgent_nodes;
    if let Some(f) = frag_size {
        c.frogmac.frag_size = f;
    }
    c.seed = seed;
    c.duration_us = duration_s * 1_000_000;
    let scenario = Scenario::new("cli", protocol, c);
    scenario.validate()?;

    let report = if trace {
        let path = sibling(out, ".trace.csv");
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "time_us,seq,target,kind")?;
        let r = run_scenario_traced(&scenario, Some(&mut w))?;
        w.flush()?;
        r
    } else {
        run_scenario_traced(&scenario, None)?
    };
    std::fs::write(out, to_csv(std::slice::from_ref(&report.result)))
        .with_context(|| format!("writing {}", out.display()))?;

    let mut manifest = String::from("# priomac run manifest\n");
    manifest.push_str(&format!("tool = priomac {}\n", env!("CARGO_PKG_VERSION")));
    manifest.push_str(&format!("protocol = {}\n", protocol.as_str()));
    for (k, v) in scenario.config.to_entries() {
        manifest.push_str(&format!("{k} = {v}\n"));
    }
    manifest.push_str(&format!("events = {}\n", report.output.events));
    let path = sibling(out, ".manifest.txt");
    std::fs::write(&path, manifest).with_context(|| format!("writing {}", path.display()))?;

    let u = &report.result.urgent;
    let n = &report.result.normal;
    eprintln!(
        "{}: urgent {}/{} delivered, mean {} us; normal {}/{} delivered",
        report.result.key.id(),
        u.delivered,
        u.generated,
        u.mean_delay_us.map_or("-".into(), |m| format!("{m:.1}")),
        n.delivered,
        n.generated
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            protocol,
            urgent_nodes,
            frag_size,
            seed,
            duration_s,
            out,
            trace,
            config,
        } => simulate(
            protocol.into(),
            urgent_nodes,
            frag_size,
            seed,
            duration_s,
            &out,
            trace,
            config.as_deref(),
        ),
        Command::Sweep {
            figure,
            config,
            out_dir,
        } => {
            let figure = Figure::from_number(figure).context("figure must be 3, 4 or 5")?;
            let sweep = SweepConfig::load(&config)?;
            for path in write_sweep(&sweep, figure, &out_dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Validate { config } => {
            let sweep = SweepConfig::load(&config)?;
            let mut total = 0;
            for n in 3..=5 {
                let figure = Figure::from_number(n).expect("valid figure number");
                total += sweep.validate(figure)?;
            }
            println!(
                "{}: ok ({total} scenarios across figures 3-5)",
                config.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
