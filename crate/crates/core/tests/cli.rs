use std::path::Path;
use std::process::{Command, Output};

fn priomac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_priomac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &str = "\
# tiny sweep
seeds = 1..2
urgent_nodes_sweep = 2, 4
frag_sizes = 4, 16
duration_s = 20
stress_urgent_interval_s = 1
";

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("sweep.conf");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_csv_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let args = [
        "simulate",
        "--protocol",
        "frogmac",
        "--urgent-nodes",
        "3",
        "--frag-size",
        "8",
        "--seed",
        "7",
        "--duration-s",
        "30",
        "--out",
        out.to_str().unwrap(),
        "--trace",
    ];
    ok(&priomac(&args));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("scenario_id,protocol,n_urgent,frag_size,seed,class"));
    assert!(lines[1].contains(",frogmac,3,8,7,urgent,"));
    assert!(lines[2].contains(",normal,"));

    let trace = std::fs::read_to_string(dir.path().join("run.trace.csv")).unwrap();
    assert!(trace.starts_with("time_us,seq,target,kind\n"));
    assert!(trace.lines().count() > 10);
    let manifest = std::fs::read_to_string(dir.path().join("run.manifest.txt")).unwrap();
    assert!(manifest.contains("frag_size = 8"));
    assert!(manifest.contains("seed = 7"));

    // Same seed, same bytes.
    let again = dir.path().join("again.csv");
    let mut args2 = args;
    args2[12] = again.to_str().unwrap();
    ok(&priomac(&args2[..13]));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn simulate_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();
    let too_many = priomac(&[
        "simulate",
        "--protocol",
        "ssmac",
        "--urgent-nodes",
        "25",
        "--out",
        out,
    ]);
    assert!(!too_many.status.success());
    assert!(String::from_utf8_lossy(&too_many.stderr).contains("error"));
    let bad_frag = priomac(&[
        "simulate",
        "--protocol",
        "frogmac",
        "--urgent-nodes",
        "2",
        "--frag-size",
        "1",
        "--out",
        out,
    ]);
    assert!(!bad_frag.status.success());
    let bad_proto = priomac(&[
        "simulate",
        "--protocol",
        "csma",
        "--urgent-nodes",
        "2",
        "--out",
        out,
    ]);
    assert!(!bad_proto.status.success());
}

#[test]
fn validate_counts_scenarios_and_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), SMALL);
    let out = priomac(&["validate", "--config", &good]);
    ok(&out);
    // fig3 and fig5: 2 protocols x 2 points x 2 seeds x 2 presets; fig4 adds frag sizes.
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok (64 scenarios"));

    let bad = write_config(dir.path(), "seeds = 1..2\nno_such_key = 3\n");
    let out = priomac(&["validate", "--config", &bad]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let short_gap = write_config(dir.path(), "gap_frag_us = 1344\n");
    assert!(!priomac(&["validate", "--config", &short_gap])
        .status
        .success());
}

#[test]
fn sweep_writes_csv_svg_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    ok(&priomac(&[
        "sweep",
        "--figure",
        "3",
        "--config",
        &config,
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]));
    for name in [
        "fig3.csv",
        "fig3.svg",
        "fig3_stress.csv",
        "fig3_stress.svg",
        "manifest.txt",
    ] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let csv = std::fs::read_to_string(out_dir.join("fig3.csv")).unwrap();
    // 2 protocols x 2 points x 2 seeds, two class rows each.
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2 * 2);
    assert_eq!(csv.lines().filter(|l| l.contains(",urgent,")).count(), 8);
    let svg = std::fs::read_to_string(out_dir.join("fig3.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(">ssmac</text>") && svg.contains(">frogmac</text>"));
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("[preset stress]"));
    assert!(manifest.contains("fig3.csv"));

    let bad = priomac(&[
        "sweep",
        "--figure",
        "6",
        "--config",
        &config,
        "--out-dir",
        "x",
    ]);
    assert!(!bad.status.success());
}
