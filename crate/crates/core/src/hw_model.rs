//! Behavioral and cycle model of the FPGA sampling accelerator.
//!
//! Small graphs are served entirely from on-chip memory: every sample is an
//! LFSR draw, reduced modulo the node degree by the 8-lane pipeline, and used
//! as an offset from the node's edge-list base address. Large graphs stream
//! one bus beat per node holding the degree and the first `ids_per_beat`
//! neighbor IDs; sampling only sees those IDs. Both paths retire one sample
//! per clock, so a run costs `num_nodes * num_neighbors` cycles.

use std::fmt;

use crate::error::{Error, Result};
use crate::graph_store::{Adjacency, GraphStore, NodeId};
use crate::rng::{segment_seed, Lfsr16, ModuloPipeline};
use crate::sampler::{RowBuilder, SampleTable};

/// Upper bound on parallel sampling modules.
pub const MAX_SEGMENTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Small,
    Large,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Small => "small",
            Mode::Large => "large",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HwConfig {
    pub clock_hz: u64,
    /// Width of one transfer into the device.
    pub bus_bits: u32,
    /// Bits of each beat reserved for the node degree.
    pub degree_field_bits: u32,
    /// On-chip capacity used to choose between small and large mode.
    pub onchip_budget_bytes: u64,
    pub segments: usize,
    /// Cycles each modulo unit spends on one reduction.
    pub modulo_latency: u64,
    /// One-off cycles charged per run for pipeline fill.
    pub pipeline_fill_cycles: u64,
    /// Extra cycles charged per node for its beat load in large mode.
    pub beat_load_cycles: u64,
}

impl Default for HwConfig {
    fn default() -> Self {
        HwConfig {
            clock_hz: 250_000_000,
            bus_bits: 1024,
            degree_field_bits: 16,
            onchip_budget_bytes: 4 << 20,
            segments: 1,
            modulo_latency: ModuloPipeline::LANES as u64,
            pipeline_fill_cycles: 0,
            beat_load_cycles: 0,
        }
    }
}

impl HwConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clock_hz == 0 {
            return Err(Error::Config("clock must be positive".into()));
        }
        if !(1..=MAX_SEGMENTS).contains(&self.segments) {
            return Err(Error::Config(format!(
                "segments must be in 1..={MAX_SEGMENTS}, got {}",
                self.segments
            )));
        }
        if self.degree_field_bits == 0 || self.degree_field_bits > 32 {
            return Err(Error::Config(format!(
                "degree field must be 1..=32 bits, got {}",
                self.degree_field_bits
            )));
        }
        if self.modulo_latency == 0 {
            return Err(Error::Config("modulo latency must be at least one cycle".into()));
        }
        Ok(())
    }

    fn degree_field_max(&self) -> u64 {
        (1u64 << self.degree_field_bits) - 1
    }
}

/// Modeled cost of one accelerator run.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleReport {
    pub cycles: u64,
    pub time_seconds: f64,
    pub mode: Mode,
    pub truncated_nodes: usize,
    pub segments_used: usize,
}

impl CycleReport {
    pub fn new(cycles: u64, clock_hz: u64, mode: Mode, truncated_nodes: usize, segments_used: usize) -> Self {
        CycleReport {
            cycles,
            time_seconds: cycles as f64 / clock_hz as f64,
            mode,
            truncated_nodes,
            segments_used,
        }
    }

    pub fn time_ms(&self) -> f64 {
        self.time_seconds * 1e3
    }

    /// `key=value` lines, one field per line.
    pub fn to_kv_lines(&self) -> String {
        format!(
            "mode={}\ncycles={}\ntime_seconds={}\ntime_ms={}\ntruncated_nodes={}\nsegments_used={}\n",
            self.mode,
            self.cycles,
            self.time_seconds,
            self.time_ms(),
            self.truncated_nodes,
            self.segments_used
        )
    }
}

/// Bits needed to address `num_nodes` distinct IDs.
pub fn id_bits(num_nodes: u64) -> Result<u32> {
    if num_nodes < 2 {
        return Err(Error::InvalidArgument(format!(
            "id width needs at least 2 nodes, got {num_nodes}"
        )));
    }
    Ok(64 - (num_nodes - 1).leading_zeros())
}

/// Neighbor IDs that fit in one beat next to the degree field.
pub fn ids_per_beat(cfg: &HwConfig, num_nodes: u64) -> Result<usize> {
    let width = id_bits(num_nodes)?;
    let free = cfg.bus_bits.saturating_sub(cfg.degree_field_bits);
    if free < width {
        return Err(Error::Config(format!(
            "{}-bit bus leaves {free} bits after the {}-bit degree field, \
             fewer than one {width}-bit node ID",
            cfg.bus_bits, cfg.degree_field_bits
        )));
    }
    Ok((free / width) as usize)
}

pub fn select_mode(g: &GraphStore, cfg: &HwConfig) -> Mode {
    select_mode_for_bytes(g.onchip_bytes(), cfg)
}

/// Small iff degree list plus edge list (32-bit words) fit the budget.
pub fn select_mode_for_bytes(bytes: u64, cfg: &HwConfig) -> Mode {
    if bytes <= cfg.onchip_budget_bytes {
        Mode::Small
    } else {
        Mode::Large
    }
}

/// Cycles for `num_nodes` nodes split over `segments` modules: the largest
/// segment's `nodes * n`, plus configured fill and beat-load overheads.
pub fn cycle_law(num_nodes: u64, n: u64, segments: u64, mode: Mode, cfg: &HwConfig) -> u64 {
    let widest = num_nodes.div_ceil(segments.max(1));
    let load = match mode {
        Mode::Small => 0,
        Mode::Large => widest * cfg.beat_load_cycles,
    };
    let fill = if widest * n > 0 { cfg.pipeline_fill_cycles } else { 0 };
    widest * n + load + fill
}

/// Cycle report from graph size alone, without sampling anything.
pub fn estimate(num_nodes: u64, num_edges: u64, n: u64, cfg: &HwConfig) -> Result<CycleReport> {
    cfg.validate()?;
    let mode = select_mode_for_bytes(4 * (num_nodes + num_edges), cfg);
    if mode == Mode::Large {
        check_large_config(cfg, num_nodes)?;
    }
    let cycles = cycle_law(num_nodes, n, cfg.segments as u64, mode, cfg);
    Ok(CycleReport::new(cycles, cfg.clock_hz, mode, 0, cfg.segments))
}

/// One bus transfer: the clamped degree followed by packed neighbor IDs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Beat {
    words: Vec<u64>,
}

impl Beat {
    /// Packs the first `ids_per_beat` neighbors of a node and its degree.
    pub fn pack(neighbors: &[NodeId], cfg: &HwConfig, id_width: u32, per_beat: usize) -> Beat {
        let mut words = vec![0u64; cfg.bus_bits.div_ceil(64) as usize];
        let degree = (neighbors.len() as u64).min(cfg.degree_field_max());
        put_bits(&mut words, 0, cfg.degree_field_bits, degree);
        for (i, id) in neighbors.iter().take(per_beat).enumerate() {
            let at = cfg.degree_field_bits as usize + i * id_width as usize;
            put_bits(&mut words, at, id_width, id.0 as u64);
        }
        Beat { words }
    }

    pub fn degree_field(&self, cfg: &HwConfig) -> u64 {
        get_bits(&self.words, 0, cfg.degree_field_bits)
    }

    /// Register-array slot `i`.
    pub fn id(&self, cfg: &HwConfig, id_width: u32, i: usize) -> NodeId {
        let at = cfg.degree_field_bits as usize + i * id_width as usize;
        NodeId(get_bits(&self.words, at, id_width) as u32)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

fn put_bits(words: &mut [u64], at: usize, width: u32, value: u64) {
    for b in 0..width as usize {
        if value >> b & 1 == 1 {
            let pos = at + b;
            words[pos / 64] |= 1 << (pos % 64);
        }
    }
}

fn get_bits(words: &[u64], at: usize, width: u32) -> u64 {
    (0..width as usize).fold(0, |acc, b| {
        let pos = at + b;
        acc | ((words[pos / 64] >> (pos % 64)) & 1) << b
    })
}

fn check_large_config(cfg: &HwConfig, num_nodes: u64) -> Result<usize> {
    let per_beat = ids_per_beat(cfg, num_nodes.max(2))?;
    if cfg.degree_field_max() < per_beat as u64 {
        return Err(Error::Config(format!(
            "{}-bit degree field cannot express {per_beat} loaded neighbors",
            cfg.degree_field_bits
        )));
    }
    Ok(per_beat)
}

/// Feeds `n` draws per entry of `degrees` through the modulo pipeline and
/// returns the retired offsets in order.
fn reduce_stream<I>(degrees: I, rng: &mut Lfsr16, n: usize, latency: u64) -> Result<Vec<u32>>
where
    I: IntoIterator<Item = usize>,
{
    let mut pipe = ModuloPipeline::new(latency)?;
    let mut feeds = degrees
        .into_iter()
        .filter(|&d| d > 0)
        .flat_map(|d| std::iter::repeat_n(d, n));
    let mut offsets = Vec::new();
    let mut pending: Option<(u16, usize)> = None;
    loop {
        if pending.is_none() {
            pending = feeds.next().map(|d| (rng.next_value(), d));
        }
        if pending.is_none() && pipe.is_idle() {
            break;
        }
        let step = pipe.step(pending)?;
        if step.accepted {
            pending = None;
        }
        if let Some(off) = step.output {
            offsets.push(off as u32);
        }
    }
    Ok(offsets)
}

// Samples every node of `view` through the small-mode datapath.
fn sample_small_view<A: Adjacency>(view: &A, rng: &mut Lfsr16, n: usize, cfg: &HwConfig) -> Result<RowBuilder> {
    let nodes = view.node_range();
    let degrees = nodes.clone().map(|v| view.degree(NodeId(v as u32)));
    let offsets = reduce_stream(degrees, rng, n, cfg.modulo_latency)?;
    let mut rows = RowBuilder::with_capacity(nodes.len(), offsets.len());
    let mut next = offsets.iter();
    for v in nodes {
        let nbrs = view.neighbors(NodeId(v as u32));
        if !nbrs.is_empty() {
            for &off in next.by_ref().take(n) {
                rows.push(nbrs[off as usize]);
            }
        }
        rows.end_row();
    }
    Ok(rows)
}

// Samples every node of `view` from its loaded beat. Returns the rows and the
// number of nodes whose degree exceeded the beat capacity.
fn sample_large_view<A: Adjacency>(
    view: &A,
    rng: &mut Lfsr16,
    n: usize,
    cfg: &HwConfig,
    num_nodes: u64,
) -> Result<(RowBuilder, usize)> {
    let per_beat = check_large_config(cfg, num_nodes)?;
    let width = id_bits(num_nodes.max(2))?;
    let nodes = view.node_range();

    let effective = nodes
        .clone()
        .map(|v| view.degree(NodeId(v as u32)).min(per_beat));
    let offsets = reduce_stream(effective, rng, n, cfg.modulo_latency)?;

    let mut rows = RowBuilder::with_capacity(nodes.len(), offsets.len());
    let mut truncated = 0;
    let mut next = offsets.iter();
    let mut registers: Vec<NodeId> = Vec::with_capacity(per_beat);
    for v in nodes {
        let nbrs = view.neighbors(NodeId(v as u32));
        if nbrs.len() > per_beat {
            truncated += 1;
        }
        if !nbrs.is_empty() {
            let beat = Beat::pack(nbrs, cfg, width, per_beat);
            let loaded = (beat.degree_field(cfg) as usize).min(per_beat);
            registers.clear();
            registers.extend((0..loaded).map(|i| beat.id(cfg, width, i)));
            for &off in next.by_ref().take(n) {
                rows.push(registers[off as usize]);
            }
        }
        rows.end_row();
    }
    Ok((rows, truncated))
}

fn ensure_mode(g: &GraphStore, cfg: &HwConfig, want: Mode) -> Result<()> {
    cfg.validate()?;
    let have = select_mode(g, cfg);
    if have != want {
        return Err(Error::Config(format!(
            "graph needs {have} mode ({} bytes against a {}-byte budget), not {want}",
            g.onchip_bytes(),
            cfg.onchip_budget_bytes
        )));
    }
    Ok(())
}

/// Small-dataset path. The table equals [`crate::sampler::sample_one_hop`]
/// for the same LFSR state.
pub fn simulate_small(
    g: &GraphStore,
    rng: &mut Lfsr16,
    n: usize,
    cfg: &HwConfig,
) -> Result<(SampleTable, CycleReport)> {
    ensure_mode(g, cfg, Mode::Small)?;
    let seed = rng.state();
    let rows = sample_small_view(g, rng, n, cfg)?;
    let cycles = cycle_law(g.num_nodes() as u64, n as u64, 1, Mode::Small, cfg);
    Ok((
        rows.finish(n, seed),
        CycleReport::new(cycles, cfg.clock_hz, Mode::Small, 0, 1),
    ))
}

/// Large-dataset path with first-`ids_per_beat` truncation.
pub fn simulate_large(
    g: &GraphStore,
    rng: &mut Lfsr16,
    n: usize,
    cfg: &HwConfig,
) -> Result<(SampleTable, CycleReport)> {
    ensure_mode(g, cfg, Mode::Large)?;
    let seed = rng.state();
    let (rows, truncated) = sample_large_view(g, rng, n, cfg, g.num_nodes() as u64)?;
    let cycles = cycle_law(g.num_nodes() as u64, n as u64, 1, Mode::Large, cfg);
    Ok((
        rows.finish(n, seed),
        CycleReport::new(cycles, cfg.clock_hz, Mode::Large, truncated, 1),
    ))
}

/// Runs whichever of [`simulate_small`] / [`simulate_large`] the graph needs.
pub fn simulate(g: &GraphStore, rng: &mut Lfsr16, n: usize, cfg: &HwConfig) -> Result<(SampleTable, CycleReport)> {
    cfg.validate()?;
    match select_mode(g, cfg) {
        Mode::Small => simulate_small(g, rng, n, cfg),
        Mode::Large => simulate_large(g, rng, n, cfg),
    }
}

/// Segmented sampling: `cfg.segments` modules each own a contiguous node
/// range and an LFSR seeded with [`segment_seed`]. Segment outputs are
/// concatenated in node order.
pub fn simulate_parallel(
    g: &GraphStore,
    base_seed: u16,
    n: usize,
    cfg: &HwConfig,
) -> Result<(SampleTable, CycleReport)> {
    cfg.validate()?;
    Lfsr16::new(base_seed)?;
    let mode = select_mode(g, cfg);
    let num_nodes = g.num_nodes() as u64;
    if g.num_nodes() == 0 {
        let cycles = cycle_law(0, n as u64, cfg.segments as u64, mode, cfg);
        let table = RowBuilder::default().finish(n, base_seed);
        return Ok((table, CycleReport::new(cycles, cfg.clock_hz, mode, 0, cfg.segments)));
    }
    let split = g.split_segments(cfg.segments)?;

    let results: Vec<Result<(RowBuilder, usize)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = split
            .segments()
            .iter()
            .enumerate()
            .map(|(k, seg)| {
                scope.spawn(move || {
                    let mut rng = Lfsr16::new(segment_seed(base_seed, k))?;
                    match mode {
                        Mode::Small => sample_small_view(seg, &mut rng, n, cfg).map(|r| (r, 0)),
                        Mode::Large => sample_large_view(seg, &mut rng, n, cfg, num_nodes),
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("segment worker panicked"))
            .collect()
    });

    let mut rows = RowBuilder::with_capacity(g.num_nodes(), g.num_nodes() * n);
    let mut truncated = 0;
    for r in results {
        let (part, t) = r?;
        rows.append(part);
        truncated += t;
    }
    let cycles = cycle_law(num_nodes, n as u64, cfg.segments as u64, mode, cfg);
    Ok((
        rows.finish(n, base_seed),
        CycleReport::new(cycles, cfg.clock_hz, mode, truncated, cfg.segments),
    ))
}
