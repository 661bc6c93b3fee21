//! Neighbor samplers producing layered computational graphs.
//!
//! The CONCAT sampler draws every node's 1-hop sample set once into a
//! [`SampleTable`] and grows deeper computational graphs by attaching, for
//! each frontier occurrence `u`, the stored row of `u`. The baseline
//! stochastic and importance samplers instead draw fresh children for every
//! occurrence.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph_store::{read_u32, read_u64, read_u8, Adjacency, GraphStore, NodeId};
use crate::rng::{bounded, Lfsr16};

pub const TABLE_MAGIC: [u8; 4] = *b"CTBL";
pub const TABLE_FORMAT_VERSION: u32 = 1;

/// Per-node fixed 1-hop sample sets.
///
/// Rows of nodes with degree >= 1 hold exactly `num_neighbors` IDs drawn with
/// replacement; rows of degree-0 nodes are empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleTable {
    num_neighbors: usize,
    seed: u16,
    offsets: Vec<usize>,
    samples: Vec<NodeId>,
}

impl SampleTable {
    /// Builds a table from explicit rows. Every row must be empty or hold
    /// exactly `num_neighbors` entries.
    pub fn from_rows<I, R>(num_neighbors: usize, seed: u16, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = NodeId>,
    {
        let mut builder = RowBuilder::default();
        for (v, row) in rows.into_iter().enumerate() {
            let before = builder.samples.len();
            builder.samples.extend(row);
            let len = builder.samples.len() - before;
            if len != 0 && len != num_neighbors {
                return Err(Error::InvalidArgument(format!(
                    "row {v} has {len} entries, expected 0 or {num_neighbors}"
                )));
            }
            builder.offsets.push(builder.samples.len());
        }
        Ok(builder.finish(num_neighbors, seed))
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_neighbors(&self) -> usize {
        self.num_neighbors
    }

    pub fn seed(&self) -> u16 {
        self.seed
    }

    /// Sampled 1-hop neighbors of `v`.
    pub fn row(&self, v: NodeId) -> &[NodeId] {
        &self.samples[self.offsets[v.index()]..self.offsets[v.index() + 1]]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[NodeId]> + '_ {
        self.offsets.windows(2).map(|w| &self.samples[w[0]..w[1]])
    }

    pub fn total_samples(&self) -> usize {
        self.samples.len()
    }

    /// Checks that the table covers `g` and that every entry is a stored
    /// neighbor of its row's node.
    pub fn check_against(&self, g: &GraphStore) -> Result<()> {
        if self.num_nodes() != g.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "table covers {} nodes, graph has {}",
                self.num_nodes(),
                g.num_nodes()
            )));
        }
        for (v, row) in self.rows().enumerate() {
            let v = NodeId(v as u32);
            let nbrs = g.neighbors(v);
            if nbrs.is_empty() != row.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "row {v} has {} entries for degree {}",
                    row.len(),
                    nbrs.len()
                )));
            }
            if let Some(bad) = row.iter().find(|u| !nbrs.contains(u)) {
                return Err(Error::InvalidArgument(format!(
                    "row {v} holds {bad}, which is not a neighbor"
                )));
            }
        }
        Ok(())
    }

    /// Writes the `table.bin` encoding. Rows are length-prefixed by a byte,
    /// so `num_neighbors` must not exceed 255.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        if self.num_neighbors > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "table.bin rows hold at most 255 samples, table has {}",
                self.num_neighbors
            )));
        }
        w.write_all(&TABLE_MAGIC)?;
        w.write_all(&TABLE_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.num_nodes() as u64).to_le_bytes())?;
        w.write_all(&(self.num_neighbors as u32).to_le_bytes())?;
        w.write_all(&(self.seed as u32).to_le_bytes())?;
        for row in self.rows() {
            w.write_all(&[row.len() as u8])?;
            for id in row {
                w.write_all(&id.0.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = Vec::with_capacity(24 + self.num_nodes() + 4 * self.samples.len());
        self.write_to(&mut bytes)?;
        Ok(bytes)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Format("unexpected end of file".into()),
            _ => Error::Io(e),
        })?;
        if magic != TABLE_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"CTBL\"")));
        }
        let version = read_u32(&mut r)?;
        if version != TABLE_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported table format version {version}")));
        }
        let num_nodes = read_u64(&mut r)? as usize;
        let num_neighbors = read_u32(&mut r)? as usize;
        let seed = read_u32(&mut r)?;
        if seed > u16::MAX as u32 {
            return Err(Error::Format(format!("seed field {seed:#x} exceeds 16 bits")));
        }
        let mut builder = RowBuilder::default();
        for v in 0..num_nodes {
            let count = read_u8(&mut r)? as usize;
            if count != 0 && count != num_neighbors {
                return Err(Error::Format(format!(
                    "row {v} has {count} entries, expected 0 or {num_neighbors}"
                )));
            }
            for _ in 0..count {
                builder.samples.push(NodeId(read_u32(&mut r)?));
            }
            builder.offsets.push(builder.samples.len());
        }
        Ok(builder.finish(num_neighbors, seed as u16))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Accumulates table rows in node order.
#[derive(Debug)]
pub(crate) struct RowBuilder {
    offsets: Vec<usize>,
    samples: Vec<NodeId>,
}

impl Default for RowBuilder {
    fn default() -> Self {
        RowBuilder {
            offsets: vec![0],
            samples: Vec::new(),
        }
    }
}

impl RowBuilder {
    pub(crate) fn with_capacity(nodes: usize, samples: usize) -> Self {
        let mut offsets = Vec::with_capacity(nodes + 1);
        offsets.push(0);
        RowBuilder {
            offsets,
            samples: Vec::with_capacity(samples),
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, id: NodeId) {
        self.samples.push(id);
    }

    #[inline]
    pub(crate) fn end_row(&mut self) {
        self.offsets.push(self.samples.len());
    }

    pub(crate) fn append(&mut self, other: RowBuilder) {
        let base = self.samples.len();
        self.offsets.extend(other.offsets[1..].iter().map(|o| o + base));
        self.samples.extend(other.samples);
    }

    pub(crate) fn finish(self, num_neighbors: usize, seed: u16) -> SampleTable {
        SampleTable {
            num_neighbors,
            seed,
            offsets: self.offsets,
            samples: self.samples,
        }
    }
}

/// Draws `n` neighbors with replacement for every node of `adj`, in
/// ascending ID order. Degree-0 nodes get an empty row and consume no draws.
pub(crate) fn sample_rows<A: Adjacency>(adj: &A, rng: &mut Lfsr16, n: usize) -> RowBuilder {
    let nodes = adj.node_range();
    let mut rows = RowBuilder::with_capacity(nodes.len(), nodes.len() * n);
    for v in nodes {
        let nbrs = adj.neighbors(NodeId(v as u32));
        if !nbrs.is_empty() {
            for _ in 0..n {
                let r = rng.next_value();
                rows.push(nbrs[r as usize % nbrs.len()]);
            }
        }
        rows.end_row();
    }
    rows
}

/// Builds the reusable 1-hop sample table for every node of `g`.
pub fn sample_one_hop(g: &GraphStore, rng: &mut Lfsr16, n: usize) -> Result<SampleTable> {
    if n == 0 {
        return Err(Error::InvalidArgument("num_neighbors must be at least 1".into()));
    }
    let seed = rng.state();
    Ok(sample_rows(g, rng, n).finish(n, seed))
}

/// Layered computational graph rooted at one node.
///
/// Layer 0 is `[root]`. The children of position `p` in layer `j` are a
/// contiguous run of layer `j + 1`, so duplicate occurrences of a node are
/// kept apart by position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComputationalGraph {
    root: NodeId,
    layers: Vec<Vec<NodeId>>,
    // child_offsets[j] has layers[j].len() + 1 entries indexing layers[j + 1].
    child_offsets: Vec<Vec<usize>>,
}

impl ComputationalGraph {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layers(&self) -> &[Vec<NodeId>] {
        &self.layers
    }

    pub fn layer(&self, j: usize) -> &[NodeId] {
        &self.layers[j]
    }

    /// Positions in layer `j + 1` of the children of position `pos` in layer `j`.
    pub fn child_range(&self, j: usize, pos: usize) -> Range<usize> {
        if j >= self.depth() {
            return 0..0;
        }
        self.child_offsets[j][pos]..self.child_offsets[j][pos + 1]
    }

    pub fn children(&self, j: usize, pos: usize) -> &[NodeId] {
        if j >= self.depth() {
            return &[];
        }
        &self.layers[j + 1][self.child_range(j, pos)]
    }

    /// `(child position in layer j, parent position in layer j - 1)` pairs.
    pub fn edges(&self, j: usize) -> Vec<(usize, usize)> {
        assert!(j >= 1 && j <= self.depth(), "level {j} outside 1..={}", self.depth());
        self.child_offsets[j - 1]
            .windows(2)
            .enumerate()
            .flat_map(|(parent, w)| (w[0]..w[1]).map(move |child| (child, parent)))
            .collect()
    }

    /// Total node occurrences over all layers.
    pub fn size(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }
}

// Expands `depth` levels below `root`; `draw(level, u, out)` appends the
// children of one occurrence of `u` at `level` (1-based level of the children).
fn grow<F>(root: NodeId, depth: usize, mut draw: F) -> Result<ComputationalGraph>
where
    F: FnMut(usize, NodeId, &mut Vec<NodeId>) -> Result<()>,
{
    let mut layers = Vec::with_capacity(depth + 1);
    let mut child_offsets = Vec::with_capacity(depth);
    layers.push(vec![root]);
    for level in 1..=depth {
        let parents = &layers[level - 1];
        let mut next = Vec::new();
        let mut offsets = Vec::with_capacity(parents.len() + 1);
        offsets.push(0);
        for &u in parents {
            draw(level, u, &mut next)?;
            offsets.push(next.len());
        }
        child_offsets.push(offsets);
        layers.push(next);
    }
    Ok(ComputationalGraph {
        root,
        layers,
        child_offsets,
    })
}

/// CONCAT expansion: every occurrence of `u` in layer `j - 1` contributes the
/// table row of `u` to layer `j`.
pub fn concat_expand(t: &SampleTable, v: NodeId, k: usize) -> Result<ComputationalGraph> {
    if k == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if v.index() >= t.num_nodes() {
        return Err(Error::NodeOutOfRange {
            node: v.0 as u64,
            num_nodes: t.num_nodes(),
        });
    }
    grow(v, k, |_, u, out| {
        out.extend_from_slice(t.row(u));
        Ok(())
    })
}

/// Traditional K-neighborhood sampler: each frontier occurrence draws
/// `fanouts[j - 1]` fresh children at level `j`.
pub fn stochastic_expand(
    g: &GraphStore,
    rng: &mut Lfsr16,
    v: NodeId,
    fanouts: &[usize],
) -> Result<ComputationalGraph> {
    check_expand_args(g, v, fanouts)?;
    grow(v, fanouts.len(), |level, u, out| {
        let nbrs = g.neighbors(u);
        if !nbrs.is_empty() {
            for _ in 0..fanouts[level - 1] {
                out.push(nbrs[bounded(rng.next_value(), nbrs.len())?]);
            }
        }
        Ok(())
    })
}

/// Result of [`importance_expand`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImportanceExpansion {
    pub graph: ComputationalGraph,
    /// Frontier occurrences whose neighbors all had zero weight and were
    /// sampled uniformly instead.
    pub uniform_fallbacks: usize,
}

/// Like [`stochastic_expand`], but children are drawn from the categorical
/// distribution proportional to `weight` over the stored neighbors.
///
/// Equal weights take the same modulo path as [`stochastic_expand`], so the
/// two agree draw for draw.
pub fn importance_expand<W>(
    g: &GraphStore,
    rng: &mut Lfsr16,
    v: NodeId,
    fanouts: &[usize],
    weight: W,
) -> Result<ImportanceExpansion>
where
    W: Fn(NodeId) -> f64,
{
    check_expand_args(g, v, fanouts)?;
    let mut uniform_fallbacks = 0;
    let mut cumulative = Vec::new();
    let graph = grow(v, fanouts.len(), |level, u, out| {
        let nbrs = g.neighbors(u);
        if nbrs.is_empty() {
            return Ok(());
        }
        cumulative.clear();
        let mut total = 0.0;
        let mut equal = true;
        let first = weight(nbrs[0]);
        for &x in nbrs {
            let w = weight(x);
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "weight of node {x} is {w}, expected a finite nonnegative value"
                )));
            }
            equal &= w == first;
            total += w;
            cumulative.push(total);
        }
        let uniform = equal || total == 0.0;
        if total == 0.0 {
            uniform_fallbacks += 1;
        }
        for _ in 0..fanouts[level - 1] {
            let r = rng.next_value();
            let pick = if uniform {
                bounded(r, nbrs.len())?
            } else {
                // (r - 1) / 65535 is uniform over [0, 1) across a full period.
                let target = (r - 1) as f64 / Lfsr16::PERIOD as f64 * total;
                cumulative
                    .iter()
                    .position(|&c| c > target)
                    .unwrap_or_else(|| cumulative.iter().rposition(|&c| c > 0.0).unwrap())
            };
            out.push(nbrs[pick]);
        }
        Ok(())
    })?;
    Ok(ImportanceExpansion {
        graph,
        uniform_fallbacks,
    })
}

fn check_expand_args(g: &GraphStore, v: NodeId, fanouts: &[usize]) -> Result<()> {
    if fanouts.is_empty() {
        return Err(Error::InvalidArgument("fanouts must not be empty".into()));
    }
    g.check_node(v)
}

/// CONCAT expansion of every batch node against one shared table.
pub fn minibatch(
    g: &GraphStore,
    t: &SampleTable,
    batch: &[NodeId],
    k: usize,
) -> Result<Vec<ComputationalGraph>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("batch must not be empty".into()));
    }
    if t.num_nodes() != g.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "table covers {} nodes, graph has {}",
            t.num_nodes(),
            g.num_nodes()
        )));
    }
    batch
        .iter()
        .map(|&v| {
            g.check_node(v)?;
            concat_expand(t, v, k)
        })
        .collect()
}
