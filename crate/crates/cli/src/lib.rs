//! Command implementations behind the `csam` binary.
//!
//! Every command writes its report to the given writer as `key=value`
//! records, one per line, so the binary and the tests share one code path.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use csam_core::hw_model::{self, CycleReport, HwConfig};
use csam_core::report::{median, BenchRecord, Record};
use csam_core::rng::{parse_seed, residue_proportions, DEFAULT_SEED};
use csam_core::sampler::{self, ComputationalGraph, SampleTable};
use csam_core::validate::{self, FrequencyTable, ToyFeatures, P_THRESHOLD};
use csam_core::{synth, Adjacency, GraphStore, Lfsr16, NodeId};

#[derive(Debug, Parser)]
#[command(name = "csam", version, about = "CONCAT neighbor sampling and accelerator cycle model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a text edge index into graph.bin.
    Convert(RunArgs),
    /// Build the 1-hop sample table (and optional expansions).
    Sample(RunArgs),
    /// Run the accelerator model and print its cycle report.
    Simulate(RunArgs),
    /// Time the software sampler against the modeled hardware.
    Bench(RunArgs),
    /// Run the statistical and structural checks.
    Stats(RunArgs),
    /// Write a synthetic graph.
    Generate(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplerKind {
    Concat,
    Stochastic,
    Importance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GraphKind {
    Uniform,
    PowerLaw,
}

/// Flags shared by every command; each command reads the ones it needs.
#[derive(Clone, Debug, PartialEq, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    pub num_neighbors: usize,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// 16-bit hex seed; 0 is rejected.
    #[arg(long, value_parser = seed_arg, default_value = "0xACE1")]
    pub seed: u16,
    #[arg(long, default_value_t = 1)]
    pub segments: usize,
    #[arg(long, default_value_t = 250.0)]
    pub clock_mhz: f64,
    #[arg(long, default_value_t = 1024)]
    pub bus_bits: u32,
    #[arg(long, default_value_t = 16)]
    pub degree_field_bits: u32,
    #[arg(long, default_value_t = 4 << 20)]
    pub budget_bytes: u64,
    #[arg(long, value_enum, default_value_t = SamplerKind::Concat)]
    pub sampler: SamplerKind,
    #[arg(long)]
    pub undirected: bool,
    /// Node count for metadata-only simulation, or for `generate`.
    #[arg(long)]
    pub nodes: Option<u64>,
    /// Edge count for metadata-only mode selection.
    #[arg(long)]
    pub edges: Option<u64>,
    /// Node count for `convert` when it is not implied by the edge IDs.
    #[arg(long)]
    pub num_nodes: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 56)]
    pub cap: usize,
    /// Per-level fanouts for the stochastic and importance samplers.
    #[arg(long, value_delimiter = ',')]
    pub fanouts: Vec<usize>,
    /// Roots to expand after sampling.
    #[arg(long, value_delimiter = ',')]
    pub batch: Vec<u32>,
    /// Dataset label for bench records; defaults to the input file stem.
    #[arg(long)]
    pub label: Option<String>,
    /// Sample table to check in `stats`.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Probe nodes for the goodness-of-fit checks in `stats`.
    #[arg(long, default_value_t = 4)]
    pub probes: usize,
    /// Draws per probe node; defaults to max(100 x degree, 20000).
    #[arg(long)]
    pub trials: Option<u64>,
    /// Print the cycle report as a single record line.
    #[arg(long)]
    pub record: bool,
    #[arg(long, value_enum, default_value_t = GraphKind::Uniform)]
    pub kind: GraphKind,
    #[arg(long, default_value_t = 8)]
    pub degree: usize,
    #[arg(long, default_value_t = 500)]
    pub max_degree: usize,
    #[arg(long, default_value_t = 2.1)]
    pub exponent: f64,
}

fn seed_arg(s: &str) -> Result<u16, String> {
    parse_seed(s).map_err(|e| e.to_string())
}

impl Default for RunArgs {
    fn default() -> Self {
        RunArgs {
            input: None,
            output: None,
            num_neighbors: 15,
            depth: 2,
            seed: DEFAULT_SEED,
            segments: 1,
            clock_mhz: 250.0,
            bus_bits: 1024,
            degree_field_bits: 16,
            budget_bytes: 4 << 20,
            sampler: SamplerKind::Concat,
            undirected: false,
            nodes: None,
            edges: None,
            num_nodes: None,
            repetitions: 5,
            cap: 56,
            fanouts: Vec::new(),
            batch: Vec::new(),
            label: None,
            table: None,
            probes: 4,
            trials: None,
            record: false,
            kind: GraphKind::Uniform,
            degree: 8,
            max_degree: 500,
            exponent: 2.1,
        }
    }
}

impl RunArgs {
    pub fn hw_config(&self) -> Result<HwConfig> {
        ensure!(
            self.clock_mhz.is_finite() && self.clock_mhz > 0.0,
            "--clock-mhz must be positive"
        );
        let cfg = HwConfig {
            clock_hz: (self.clock_mhz * 1e6).round() as u64,
            bus_bits: self.bus_bits,
            degree_field_bits: self.degree_field_bits,
            onchip_budget_bytes: self.budget_bytes,
            segments: self.segments,
            ..HwConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn input(&self) -> Result<&Path> {
        self.input.as_deref().context("--input is required")
    }

    fn load_graph(&self) -> Result<GraphStore> {
        let path = self.input()?;
        GraphStore::load(path).with_context(|| format!("loading graph {}", path.display()))
    }

    fn fanouts(&self) -> Vec<usize> {
        if self.fanouts.is_empty() {
            vec![self.num_neighbors; self.depth]
        } else {
            self.fanouts.clone()
        }
    }

    fn batch(&self) -> Vec<NodeId> {
        self.batch.iter().copied().map(NodeId).collect()
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Convert(a) => cmd_convert(&a, out),
        Command::Sample(a) => cmd_sample(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out).map(|_| ()),
        Command::Bench(a) => cmd_bench(&a, out).map(|_| ()),
        Command::Stats(a) => cmd_stats(&a, out),
        Command::Generate(a) => cmd_generate(&a, out),
    }
}

pub fn cmd_convert(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let input = args.input()?;
    let reader = BufReader::new(File::open(input).with_context(|| format!("opening {}", input.display()))?);
    let g = GraphStore::from_edge_text(reader, args.num_nodes, args.undirected)
        .with_context(|| format!("parsing {}", input.display()))?;
    let output = args.output.clone().unwrap_or_else(|| PathBuf::from("graph.bin"));
    g.save(&output).with_context(|| format!("writing {}", output.display()))?;
    writeln!(
        out,
        "{}",
        Record::new("convert")
            .field("num_nodes", g.num_nodes())
            .field("num_edges", g.num_edges())
            .field("output", output.display())
    )?;
    Ok(())
}

fn layer_sizes(cg: &ComputationalGraph) -> String {
    cg.layers()
        .iter()
        .map(|l| l.len().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn cmd_sample(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    ensure!(args.num_neighbors >= 1, "--num-neighbors must be at least 1");
    ensure!(args.depth >= 1, "--depth must be at least 1");
    let g = args.load_graph()?;
    let mut rng = Lfsr16::new(args.seed)?;
    let batch = args.batch();

    let start = Instant::now();
    match args.sampler {
        SamplerKind::Concat => {
            let table = sampler::sample_one_hop(&g, &mut rng, args.num_neighbors)?;
            let graphs = if batch.is_empty() {
                Vec::new()
            } else {
                sampler::minibatch(&g, &table, &batch, args.depth)?
            };
            let elapsed = start.elapsed();
            let output = args.output.clone().unwrap_or_else(|| PathBuf::from("table.bin"));
            table.save(&output).with_context(|| format!("writing {}", output.display()))?;
            for cg in &graphs {
                writeln!(out, "{}", graph_record(cg))?;
            }
            writeln!(
                out,
                "{}",
                Record::new("sample")
                    .field("sampler", "concat")
                    .field("num_nodes", g.num_nodes())
                    .field("num_neighbors", args.num_neighbors)
                    .field("total_samples", table.total_samples())
                    .field("seed", format!("{:#06x}", args.seed))
                    .field("elapsed_ms", elapsed.as_secs_f64() * 1e3)
                    .field("output", output.display())
            )?;
        }
        kind => {
            let roots = if batch.is_empty() { vec![NodeId(0)] } else { batch };
            let fanouts = args.fanouts();
            let mut fallbacks = 0;
            let mut graphs = Vec::with_capacity(roots.len());
            for &v in &roots {
                if kind == SamplerKind::Stochastic {
                    graphs.push(sampler::stochastic_expand(&g, &mut rng, v, &fanouts)?);
                } else {
                    let e = sampler::importance_expand(&g, &mut rng, v, &fanouts, |u| g.degree(u) as f64)?;
                    fallbacks += e.uniform_fallbacks;
                    graphs.push(e.graph);
                }
            }
            let elapsed = start.elapsed();
            for cg in &graphs {
                writeln!(out, "{}", graph_record(cg))?;
            }
            let name = if kind == SamplerKind::Stochastic { "stochastic" } else { "importance" };
            let mut rec = Record::new("sample")
                .field("sampler", name)
                .field("num_nodes", g.num_nodes())
                .field(
                    "fanouts",
                    fanouts.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
                )
                .field("seed", format!("{:#06x}", args.seed))
                .field("elapsed_ms", elapsed.as_secs_f64() * 1e3);
            if kind == SamplerKind::Importance {
                rec = rec.field("uniform_fallbacks", fallbacks);
            }
            writeln!(out, "{rec}")?;
        }
    }
    Ok(())
}

fn graph_record(cg: &ComputationalGraph) -> Record {
    Record::new("computational_graph")
        .field("root", cg.root())
        .field("depth", cg.depth())
        .field("layer_sizes", layer_sizes(cg))
}

/// Runs the accelerator model. With `--nodes`, only the cycle law is
/// evaluated; otherwise the graph is sampled and `--output` receives the table.
pub fn cmd_simulate(args: &RunArgs, out: &mut dyn Write) -> Result<CycleReport> {
    let cfg = args.hw_config()?;
    let n = args.num_neighbors;
    let report = if let Some(nodes) = args.nodes {
        hw_model::estimate(nodes, args.edges.unwrap_or(0), n as u64, &cfg)?
    } else {
        let g = args.load_graph()?;
        let (table, report) = simulate_graph(&g, args.seed, n, &cfg)?;
        if let Some(path) = &args.output {
            table.save(path).with_context(|| format!("writing {}", path.display()))?;
        }
        report
    };
    if args.record {
        writeln!(out, "{}", Record::from(&report))?;
    } else {
        write!(out, "{}", report.to_kv_lines())?;
    }
    Ok(report)
}

fn simulate_graph(g: &GraphStore, seed: u16, n: usize, cfg: &HwConfig) -> Result<(SampleTable, CycleReport)> {
    Ok(if cfg.segments > 1 {
        hw_model::simulate_parallel(g, seed, n, cfg)?
    } else {
        hw_model::simulate(g, &mut Lfsr16::new(seed)?, n, cfg)?
    })
}

// Software path: the 1-hop table plus CONCAT expansion of every node.
fn software_pass(g: &GraphStore, seed: u16, n: usize, depth: usize) -> Result<usize> {
    let table = sampler::sample_one_hop(g, &mut Lfsr16::new(seed)?, n)?;
    let mut touched = 0;
    for v in 0..g.num_nodes() as u32 {
        touched += sampler::concat_expand(&table, NodeId(v), depth)?.size();
    }
    Ok(touched)
}

pub fn cmd_bench(args: &RunArgs, out: &mut dyn Write) -> Result<BenchRecord> {
    ensure!(args.num_neighbors >= 1, "--num-neighbors must be at least 1");
    ensure!(args.repetitions >= 1, "--repetitions must be at least 1");
    let cfg = args.hw_config()?;
    let g = args.load_graph()?;
    let label = args.label.clone().unwrap_or_else(|| {
        args.input
            .as_deref()
            .and_then(Path::file_stem)
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "graph".into())
    });

    let mut times = Vec::with_capacity(args.repetitions);
    for _ in 0..args.repetitions {
        let start = Instant::now();
        std::hint::black_box(software_pass(&g, args.seed, args.num_neighbors, args.depth.max(1))?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let software_ms = median(&mut times).expect("at least one repetition");

    let (_, report) = simulate_graph(&g, args.seed, args.num_neighbors, &cfg)?;
    let record = BenchRecord::new(label, g.num_nodes(), g.num_edges(), software_ms, report.time_ms());
    writeln!(out, "{}", Record::from(&report))?;
    writeln!(out, "{}", Record::from(&record).field("repetitions", args.repetitions))?;
    Ok(record)
}

struct CheckLog<'a> {
    out: &'a mut dyn Write,
    passed: usize,
    failed: usize,
}

impl CheckLog<'_> {
    fn emit(&mut self, rec: Record, ok: Option<bool>) -> Result<()> {
        let status = match ok {
            Some(true) => {
                self.passed += 1;
                "pass"
            }
            Some(false) => {
                self.failed += 1;
                "fail"
            }
            None => "info",
        };
        writeln!(self.out, "{}", rec.field("status", status))?;
        Ok(())
    }
}

/// Pooled offset frequencies of a table, grouped by node degree. Nodes with
/// repeated neighbors are skipped since their offsets are ambiguous.
pub fn table_offset_frequencies(g: &GraphStore, table: &SampleTable) -> Vec<(usize, FrequencyTable)> {
    let mut by_degree: std::collections::BTreeMap<usize, Vec<u64>> = Default::default();
    for (v, row) in table.rows().enumerate() {
        let nbrs = g.neighbors(NodeId(v as u32));
        let d = nbrs.len();
        if d < 2 || row.is_empty() {
            continue;
        }
        let mut sorted = nbrs.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        let counts = by_degree.entry(d).or_insert_with(|| vec![0; d]);
        for u in row {
            if let Some(pos) = nbrs.iter().position(|x| x == u) {
                counts[pos] += 1;
            }
        }
    }
    by_degree
        .into_iter()
        .map(|(d, counts)| (d, FrequencyTable::new(NodeId(0), counts)))
        .collect()
}

// Recursive mean over the explicit tree, walking child ranges depth first.
fn recursive_mean(cg: &ComputationalGraph, feats: &ToyFeatures, j: usize, pos: usize) -> Vec<f64> {
    let u = cg.layer(j)[pos];
    let mut acc = feats.get(u).expect("features cover the graph").to_vec();
    let kids = cg.child_range(j, pos);
    for c in kids.clone() {
        for (a, x) in acc.iter_mut().zip(recursive_mean(cg, feats, j + 1, c)) {
            *a += x;
        }
    }
    let n = (kids.len() + 1) as f64;
    acc.into_iter().map(|a| a / n).collect()
}

pub fn cmd_stats(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    ensure!(args.num_neighbors >= 1, "--num-neighbors must be at least 1");
    ensure!(args.depth >= 1, "--depth must be at least 1");
    let g = args.load_graph()?;
    let mut log = CheckLog { out, passed: 0, failed: 0 };

    // Goodness of fit on the highest-degree nodes.
    let mut probes: Vec<NodeId> = (0..g.num_nodes() as u32)
        .map(NodeId)
        .filter(|&v| g.degree(v) >= 2)
        .collect();
    probes.sort_by_key(|&v| (std::cmp::Reverse(g.degree(v)), v));
    probes.truncate(args.probes);
    for (i, &v) in probes.iter().enumerate() {
        let d = g.degree(v);
        let trials = args.trials.unwrap_or((100 * d as u64).max(20_000));
        let f = validate::fresh_seed_frequencies(v, d, trials, args.seed as u64 + i as u64)?;
        let (stat, p) = validate::chi_square_uniform(&f, &residue_proportions(d))?;
        let rec = Record::new("check")
            .field("name", "chi_square")
            .field("node", v)
            .field("degree", d)
            .field("trials", f.trials)
            .field("statistic", stat)
            .field("p_value", p);
        log.emit(rec, Some(p > P_THRESHOLD && f.has_sufficient_trials()))?;
    }

    if let Some(path) = &args.table {
        let table = SampleTable::load(path).with_context(|| format!("loading table {}", path.display()))?;
        let member = table.check_against(&g);
        log.emit(
            Record::new("check")
                .field("name", "table_membership")
                .field("detail", member.as_ref().err().map(|e| e.to_string()).unwrap_or_else(|| "ok".into())),
            Some(member.is_ok()),
        )?;
        for (d, f) in table_offset_frequencies(&g, &table) {
            if !f.has_sufficient_trials() {
                continue;
            }
            let (stat, p) = validate::chi_square_uniform(&f, &residue_proportions(d))?;
            let rec = Record::new("check")
                .field("name", "table_uniformity")
                .field("degree", d)
                .field("trials", f.trials)
                .field("statistic", stat)
                .field("p_value", p);
            log.emit(rec, Some(p > P_THRESHOLD))?;
        }
    }

    let t = validate::truncation_stats(&g, args.cap)?;
    log.emit(
        Record::new("check")
            .field("name", "truncation")
            .field("cap", args.cap)
            .field("truncated_nodes", t.truncated_nodes)
            .field("discarded_edges", t.discarded_edges)
            .field("truncated_fraction", t.truncated_fraction)
            .field("discarded_edge_fraction", t.discarded_edge_fraction),
        None,
    )?;

    if g.num_nodes() > 0 {
        let table = sampler::sample_one_hop(&g, &mut Lfsr16::new(args.seed)?, args.num_neighbors)?;
        let root = probes.first().copied().unwrap_or(NodeId(0));
        let cg = sampler::concat_expand(&table, root, args.depth)?;

        let c = [0.5, -2.0, 1.25, 3.0, 0.0, 7.5, -0.125, 1.0];
        let constant = validate::mean_aggregate(&cg, &ToyFeatures::constant(g.num_nodes(), &c))?;
        let worst = constant
            .iter()
            .flat_map(|a| a.iter().zip(&c).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        log.emit(
            Record::new("check")
                .field("name", "aggregate_fixed_point")
                .field("root", root)
                .field("max_error", worst),
            Some(worst <= 1e-12),
        )?;

        let feats = ToyFeatures::random(g.num_nodes(), 8, args.seed as u64);
        let agg = validate::mean_aggregate(&cg, &feats)?;
        let oracle = recursive_mean(&cg, &feats, 0, 0);
        let worst = agg[cg.depth()]
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        log.emit(
            Record::new("check")
                .field("name", "aggregate_recursive")
                .field("root", root)
                .field("depth", cg.depth())
                .field("max_error", worst),
            Some(worst <= 1e-12),
        )?;
    }

    let (passed, failed) = (log.passed, log.failed);
    writeln!(log.out, "{}", Record::new("stats").field("passed", passed).field("failed", failed))?;
    if failed > 0 {
        bail!("{failed} check(s) failed");
    }
    Ok(())
}

pub fn cmd_generate(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let nodes = args.nodes.context("--nodes is required")? as usize;
    let seed = args.seed as u64;
    let g = match args.kind {
        GraphKind::Uniform => synth::uniform_degree(nodes, args.degree, seed)?,
        GraphKind::PowerLaw => synth::power_law(nodes, args.exponent, 1, args.max_degree, seed)?,
    };
    let output = args.output.clone().unwrap_or_else(|| PathBuf::from("graph.bin"));
    g.save(&output).with_context(|| format!("writing {}", output.display()))?;
    let max_degree = g.degree_list().iter().copied().max().unwrap_or(0);
    writeln!(
        out,
        "{}",
        Record::new("generate")
            .field("kind", format!("{:?}", args.kind).to_lowercase())
            .field("num_nodes", g.num_nodes())
            .field("num_edges", g.num_edges())
            .field("max_degree", max_degree)
            .field("output", output.display())
    )?;
    Ok(())
}
