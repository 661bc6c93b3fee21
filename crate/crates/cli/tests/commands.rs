use std::fs;
use std::path::Path;
use std::process::Command as Process;

use clap::Parser;
use csam_cli::{run, Cli, Command, RunArgs};
use csam_core::{GraphStore, NodeId, SampleTable};

const TOY: &str = "0 1\n0 2\n1 0\n2 0\n2 3\n3 2\n";

fn exec(argv: &[&str]) -> anyhow::Result<String> {
    let cli = Cli::try_parse_from(std::iter::once("csam").chain(argv.iter().copied()))?;
    let mut out = Vec::new();
    run(cli, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    let needle = format!("{key}=");
    text.split_whitespace()
        .find_map(|tok| tok.strip_prefix(needle.as_str()))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn toy_bin(dir: &Path) -> std::path::PathBuf {
    let txt = dir.join("toy.txt");
    let bin = dir.join("toy.bin");
    fs::write(&txt, TOY).unwrap();
    exec(&["convert", "--input", p(&txt), "--output", p(&bin)]).unwrap();
    bin
}

#[test]
fn defaults_match_flag_defaults() {
    let cli = Cli::try_parse_from(["csam", "simulate"]).unwrap();
    let Command::Simulate(args) = cli.command else { unreachable!() };
    assert_eq!(args, RunArgs::default());
}

#[test]
fn convert_toy_and_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let txt = dir.path().join("toy.txt");
    let bin = dir.path().join("graph.bin");
    fs::write(&txt, TOY).unwrap();
    let out = exec(&["convert", "--input", p(&txt), "--output", p(&bin)]).unwrap();
    assert_eq!(field(&out, "num_edges"), "6");
    assert_eq!(field(&out, "num_nodes"), "4");
    let bytes = fs::read(&bin).unwrap();
    assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 6);

    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let out = exec(&["convert", "--input", p(&empty), "--num-nodes", "3", "--output", p(&bin)]).unwrap();
    assert_eq!(field(&out, "num_nodes"), "3");
    assert_eq!(GraphStore::load(&bin).unwrap().degree_list(), &[0, 0, 0]);

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "0 1\na b c\n").unwrap();
    let err = exec(&["convert", "--input", p(&bad), "--output", p(&bin)]).unwrap_err();
    assert!(format!("{err:#}").contains("line 2"), "{err:#}");

    let und = dir.path().join("und.txt");
    fs::write(&und, "0 1\n").unwrap();
    exec(&["convert", "--input", p(&und), "--undirected", "--output", p(&bin)]).unwrap();
    assert_eq!(GraphStore::load(&bin).unwrap().num_edges(), 2);
}

#[test]
fn sample_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let bin = toy_bin(dir.path());
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    for out in [&a, &b] {
        exec(&["sample", "--input", p(&bin), "--num-neighbors", "2", "--seed", "0x1234", "--output", p(out)])
            .unwrap();
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let t = SampleTable::load(&a).unwrap();
    assert_eq!(t.seed(), 0x1234);
    t.check_against(&GraphStore::load(&bin).unwrap()).unwrap();

    let out = exec(&["sample", "--input", p(&bin), "--num-neighbors", "2", "--batch", "0,2", "--depth", "2",
        "--output", p(&a)])
    .unwrap();
    assert!(out.contains("record=computational_graph root=0 depth=2 layer_sizes=1,2,4"), "{out}");
}

#[test]
fn sample_large_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.bin");
    let t = dir.path().join("t.bin");
    exec(&["generate", "--nodes", "100000", "--degree", "6", "--output", p(&g)]).unwrap();
    exec(&["sample", "--input", p(&g), "--num-neighbors", "15", "--output", p(&t)]).unwrap();
    let table = SampleTable::load(&t).unwrap();
    assert_eq!(table.num_nodes(), 100_000);
    assert!(table.rows().all(|r| r.len() == 15));
}

#[test]
fn stochastic_fanouts_bound_layers() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.bin");
    exec(&["generate", "--nodes", "2000", "--degree", "40", "--output", p(&g)]).unwrap();
    for sampler in ["stochastic", "importance"] {
        let out = exec(&["sample", "--input", p(&g), "--sampler", sampler, "--depth", "2", "--fanouts", "25,10",
            "--batch", "3,9"])
        .unwrap();
        assert!(out.contains("layer_sizes=1,25,250"), "{out}");
        assert!(out.contains("fanouts=25,10"));
    }
}

#[test]
fn simulate_metadata_mode() {
    let out = exec(&["simulate", "--nodes", "2708", "--num-neighbors", "15"]).unwrap();
    let ms: f64 = field(&out, "time_ms").parse().unwrap();
    assert!((ms - 0.16248).abs() < 1e-9, "{out}");
    assert_eq!(field(&out, "cycles"), "40620");
    assert_eq!(field(&out, "mode"), "small");

    let out = exec(&["simulate", "--nodes", "169343", "--num-neighbors", "15", "--record"]).unwrap();
    assert!(out.starts_with("record=cycle_report"));
    let ms: f64 = field(&out, "time_ms").parse().unwrap();
    assert!((ms - 10.16058).abs() < 1e-9);

    let out = exec(&["simulate", "--nodes", "1", "--num-neighbors", "0"]).unwrap();
    assert_eq!(field(&out, "cycles"), "0");

    let err = exec(&["simulate", "--nodes", "232965", "--edges", "114615892", "--bus-bits", "32"]).unwrap_err();
    assert!(format!("{err:#}").contains("bus"), "{err:#}");
    assert!(exec(&["simulate", "--nodes", "10", "--segments", "17"]).is_err());
    assert!(Cli::try_parse_from(["csam", "simulate", "--seed", "0"]).is_err());
}

#[test]
fn simulate_graph_matches_sample() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.bin");
    let hw = dir.path().join("hw.bin");
    let sw = dir.path().join("sw.bin");
    exec(&["generate", "--nodes", "3000", "--degree", "5", "--output", p(&g)]).unwrap();
    let out = exec(&["simulate", "--input", p(&g), "--output", p(&hw)]).unwrap();
    assert_eq!(field(&out, "cycles"), "45000");
    exec(&["sample", "--input", p(&g), "--output", p(&sw)]).unwrap();
    assert_eq!(fs::read(&hw).unwrap(), fs::read(&sw).unwrap());

    let out = exec(&["simulate", "--input", p(&g), "--segments", "16"]).unwrap();
    assert_eq!(field(&out, "cycles"), (188 * 15).to_string());
    assert_eq!(field(&out, "segments_used"), "16");

    let out = exec(&["simulate", "--input", p(&g), "--budget-bytes", "0"]).unwrap();
    assert_eq!(field(&out, "mode"), "large");
}

#[test]
fn bench_record() {
    let dir = tempfile::tempdir().unwrap();
    let bin = toy_bin(dir.path());
    for reps in ["1", "9"] {
        let out = exec(&["bench", "--input", p(&bin), "--repetitions", reps, "--label", "toy"]).unwrap();
        let bench = out.lines().find(|l| l.starts_with("record=bench")).unwrap();
        let sw: f64 = field(bench, "software_ms").parse().unwrap();
        let hw: f64 = field(bench, "hardware_ms").parse().unwrap();
        let speedup: f64 = field(bench, "speedup").parse().unwrap();
        assert_eq!(speedup, sw / hw);
        assert_eq!(field(bench, "dataset"), "toy");
        assert_eq!(field(bench, "repetitions"), reps);
        assert_eq!(field(bench, "speedup_note"), "host-dependent");
    }
}

#[test]
fn stats_checks() {
    let dir = tempfile::tempdir().unwrap();
    let bin = toy_bin(dir.path());
    let out = exec(&["stats", "--input", p(&bin)]).unwrap();
    assert!(out.contains("name=chi_square"));
    assert!(!out.contains("status=fail"), "{out}");
    assert!(out.contains("record=stats"));
    assert_eq!(field(out.lines().last().unwrap(), "failed"), "0");

    let out = exec(&["stats", "--input", p(&bin), "--cap", "1"]).unwrap();
    let trunc = out.lines().find(|l| l.contains("name=truncation")).unwrap();
    assert_eq!(field(trunc, "truncated_fraction"), "0.5");
}

#[test]
fn stats_rejects_rigged_table() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.bin");
    exec(&["generate", "--nodes", "64", "--degree", "8", "--output", p(&g)]).unwrap();
    let graph = GraphStore::load(&g).unwrap();

    // A straight table passes the pooled check for distinct-neighbor nodes.
    let good = dir.path().join("good.bin");
    exec(&["sample", "--input", p(&g), "--num-neighbors", "200", "--output", p(&good)]).unwrap();
    let out = exec(&["stats", "--input", p(&g), "--table", p(&good), "--probes", "1"]).unwrap();
    assert!(out.contains("name=table_membership detail=ok status=pass"), "{out}");

    // Every row always picks the first stored neighbor.
    let rows: Vec<Vec<NodeId>> = (0..64u32)
        .map(|v| vec![graph.neighbor_at(NodeId(v), 0).unwrap(); 200])
        .collect();
    let rigged = dir.path().join("rigged.bin");
    SampleTable::from_rows(200, 1, rows).unwrap().save(&rigged).unwrap();
    let err = exec(&["stats", "--input", p(&g), "--table", p(&rigged), "--probes", "1"]).unwrap_err();
    assert!(format!("{err}").contains("failed"));
}

#[test]
fn binary_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_csam");
    let ok = Process::new(exe).args(["simulate", "--nodes", "2708"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("cycles=40620"));

    let missing = dir.path().join("missing.bin");
    let bad = Process::new(exe).args(["sample", "--input", p(&missing)]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error:"));
}
