//! Degree-list / edge-list graph storage.
//!
//! A [`GraphStore`] keeps the per-node out-degrees indexed by node ID and the
//! destination column of the source-sorted edge index. The neighbors of node
//! `v` occupy `edge_list[prefix[v]..prefix[v + 1]]`, so a sampled neighbor is
//! always addressed as a base address plus an offset drawn below the degree.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

/// Magic bytes opening a `graph.bin` file.
pub const GRAPH_MAGIC: [u8; 4] = *b"CSAM";
/// Current `graph.bin` format version.
pub const GRAPH_FORMAT_VERSION: u32 = 1;

/// Index of a node in a [`GraphStore`]. Stored as 32 bits in memory and on disk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Read access to a contiguous block of nodes and their stored neighbors.
///
/// Implemented by the full [`GraphStore`] and by each [`Segment`] of a split
/// store, so the same sampling code runs on either.
pub trait Adjacency {
    /// Global node IDs covered by this view.
    fn node_range(&self) -> Range<usize>;

    /// Stored neighbors of `v`, in edge-list order.
    ///
    /// Panics if `v` is outside [`Adjacency::node_range`].
    fn neighbors(&self, v: NodeId) -> &[NodeId];

    fn degree(&self, v: NodeId) -> usize {
        self.neighbors(v).len()
    }
}

/// Immutable CSR-style graph: degree list, exclusive prefix sums, edge list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphStore {
    degree_list: Vec<u32>,
    prefix: Vec<usize>,
    edge_list: Vec<NodeId>,
}

impl GraphStore {
    /// Builds the store from an edge index.
    ///
    /// Edges are stably sorted by source. With `undirected`, every input edge
    /// `(a, b)` is followed by `(b, a)` before sorting. Duplicates and
    /// self-loops are kept.
    pub fn build_from_edge_index<I>(edges: I, num_nodes: usize, undirected: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        if num_nodes > u32::MAX as usize + 1 {
            return Err(Error::InvalidArgument(format!(
                "{num_nodes} nodes do not fit 32-bit node IDs"
            )));
        }

        let mut directed = Vec::new();
        for (index, (src, dst)) in edges.into_iter().enumerate() {
            if src.index() >= num_nodes || dst.index() >= num_nodes {
                return Err(Error::EdgeOutOfRange {
                    index,
                    src: src.0 as u64,
                    dst: dst.0 as u64,
                    num_nodes,
                });
            }
            directed.push((src, dst));
            if undirected {
                directed.push((dst, src));
            }
        }

        let mut degree_list = vec![0u32; num_nodes];
        for &(src, _) in &directed {
            degree_list[src.index()] = degree_list[src.index()]
                .checked_add(1)
                .ok_or_else(|| Error::InvalidArgument(format!("degree of node {src} overflows u32")))?;
        }
        let prefix = prefix_sums(&degree_list);

        // Counting sort keeps input order among edges with the same source.
        let mut cursor = prefix[..num_nodes].to_vec();
        let mut edge_list = vec![NodeId(0); directed.len()];
        for (src, dst) in directed {
            edge_list[cursor[src.index()]] = dst;
            cursor[src.index()] += 1;
        }

        Ok(GraphStore {
            degree_list,
            prefix,
            edge_list,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.degree_list.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_list.len()
    }

    pub fn degree_list(&self) -> &[u32] {
        &self.degree_list
    }

    /// Exclusive prefix sums of the degree list, `num_nodes + 1` entries.
    pub fn prefix(&self) -> &[usize] {
        &self.prefix
    }

    pub fn edge_list(&self) -> &[NodeId] {
        &self.edge_list
    }

    /// Degree word at `degree base + node id`.
    pub fn degree(&self, v: NodeId) -> usize {
        self.degree_list[v.index()] as usize
    }

    /// Edge-list positions `[start, end)` holding the neighbors of `v`.
    pub fn neighbor_slice(&self, v: NodeId) -> (usize, usize) {
        (self.prefix[v.index()], self.prefix[v.index() + 1])
    }

    /// The neighbor stored at offset `r` from `v`'s base address.
    pub fn neighbor_at(&self, v: NodeId, r: usize) -> Result<NodeId> {
        self.check_node(v)?;
        let (start, end) = self.neighbor_slice(v);
        if r >= end - start {
            return Err(Error::OffsetOutOfRange {
                node: v.0,
                offset: r,
                degree: end - start,
            });
        }
        Ok(self.edge_list[start + r])
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        if v.index() < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                node: v.0 as u64,
                num_nodes: self.num_nodes(),
            })
        }
    }

    /// Iterates `(src, dst)` over the stored edges in edge-list order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes()).flat_map(move |v| {
            let v = NodeId(v as u32);
            self.neighbors(v).iter().map(move |&u| (v, u))
        })
    }

    /// Splits the node range into `s` contiguous segments whose sizes differ
    /// by at most one node.
    pub fn split_segments(&self, s: usize) -> Result<SegmentedStore<'_>> {
        let n = self.num_nodes();
        if s == 0 || s > n {
            return Err(Error::InvalidArgument(format!(
                "segment count {s} must be in 1..={n}"
            )));
        }
        let base = n / s;
        let extra = n % s;
        let mut segments = Vec::with_capacity(s);
        let mut start = 0;
        for k in 0..s {
            let len = base + usize::from(k < extra);
            segments.push(self.segment(start..start + len));
            start += len;
        }
        Ok(SegmentedStore { segments })
    }

    fn segment(&self, nodes: Range<usize>) -> Segment<'_> {
        let prefix = &self.prefix[nodes.start..=nodes.end];
        let edges = &self.edge_list[prefix[0]..prefix[prefix.len() - 1]];
        Segment {
            nodes,
            prefix,
            edges,
        }
    }

    /// Bytes of the degree list plus edge list at 32-bit words.
    pub fn onchip_bytes(&self) -> u64 {
        4 * (self.num_nodes() as u64 + self.num_edges() as u64)
    }

    /// Writes the `graph.bin` encoding.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&GRAPH_MAGIC)?;
        w.write_all(&GRAPH_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.num_nodes() as u64).to_le_bytes())?;
        w.write_all(&(self.num_edges() as u64).to_le_bytes())?;
        for d in &self.degree_list {
            w.write_all(&d.to_le_bytes())?;
        }
        for e in &self.edge_list {
            w.write_all(&e.0.to_le_bytes())?;
        }
        w.flush()
    }

    /// Reads a `graph.bin` encoding, recomputing prefix sums.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if magic != GRAPH_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"CSAM\"")));
        }
        let version = read_u32(&mut r)?;
        if version != GRAPH_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported graph format version {version}")));
        }
        let num_nodes = read_u64(&mut r)?;
        let edge_count = read_u64(&mut r)?;
        if num_nodes > u32::MAX as u64 + 1 {
            return Err(Error::Format(format!("num_nodes {num_nodes} exceeds 32-bit IDs")));
        }
        let num_nodes = num_nodes as usize;

        let mut degree_list = Vec::with_capacity(num_nodes.min(1 << 20));
        for _ in 0..num_nodes {
            degree_list.push(read_u32(&mut r)?);
        }
        let prefix = prefix_sums(&degree_list);
        if prefix[num_nodes] as u64 != edge_count {
            return Err(Error::Format(format!(
                "degree list sums to {} but edge_count is {edge_count}",
                prefix[num_nodes]
            )));
        }

        let mut edge_list = Vec::with_capacity((edge_count as usize).min(1 << 20));
        for index in 0..edge_count as usize {
            let dst = read_u32(&mut r)?;
            if dst as usize >= num_nodes {
                return Err(Error::Format(format!(
                    "edge {index} points to node {dst} outside 0..{num_nodes}"
                )));
            }
            edge_list.push(NodeId(dst));
        }

        Ok(GraphStore {
            degree_list,
            prefix,
            edge_list,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Parses a two-column text edge index and builds the store.
    ///
    /// When `num_nodes` is `None` it is one past the largest ID seen.
    pub fn from_edge_text<R: BufRead>(
        reader: R,
        num_nodes: Option<usize>,
        undirected: bool,
    ) -> Result<Self> {
        let edges = parse_edge_text(reader)?;
        let inferred = edges
            .iter()
            .map(|&(a, b)| a.index().max(b.index()) + 1)
            .max()
            .unwrap_or(0);
        Self::build_from_edge_index(edges, num_nodes.unwrap_or(inferred), undirected)
    }
}

impl Adjacency for GraphStore {
    fn node_range(&self) -> Range<usize> {
        0..self.num_nodes()
    }

    fn neighbors(&self, v: NodeId) -> &[NodeId] {
        let (start, end) = self.neighbor_slice(v);
        &self.edge_list[start..end]
    }
}

/// The store split into contiguous node ranges.
#[derive(Clone, Debug)]
pub struct SegmentedStore<'a> {
    segments: Vec<Segment<'a>>,
}

impl<'a> SegmentedStore<'a> {
    pub fn segments(&self) -> &[Segment<'a>] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// A borrowed node range of a [`GraphStore`] with its slice of the edge list.
#[derive(Clone, Debug)]
pub struct Segment<'a> {
    nodes: Range<usize>,
    // Global prefix values for nodes.start..=nodes.end.
    prefix: &'a [usize],
    edges: &'a [NodeId],
}

impl<'a> Segment<'a> {
    pub fn nodes(&self) -> Range<usize> {
        self.nodes.clone()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// This segment's part of the parent edge list.
    pub fn edge_list(&self) -> &'a [NodeId] {
        self.edges
    }
}

impl Adjacency for Segment<'_> {
    fn node_range(&self) -> Range<usize> {
        self.nodes.clone()
    }

    fn neighbors(&self, v: NodeId) -> &[NodeId] {
        assert!(
            self.nodes.contains(&v.index()),
            "node {v} outside segment {:?}",
            self.nodes
        );
        let local = v.index() - self.nodes.start;
        let base = self.prefix[0];
        &self.edges[self.prefix[local] - base..self.prefix[local + 1] - base]
    }
}

/// Parses whitespace- or comma-separated `src dst` lines. Blank lines and
/// lines starting with `#` are skipped.
pub fn parse_edge_text<R: BufRead>(reader: R) -> Result<Vec<(NodeId, NodeId)>> {
    let mut edges = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected two columns, found {} in {trimmed:?}", fields.len()),
            });
        }
        let parse = |f: &str| {
            f.parse::<u32>().map(NodeId).map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad node id {f:?}: {e}"),
            })
        };
        edges.push((parse(fields[0])?, parse(fields[1])?));
    }
    Ok(edges)
}

fn prefix_sums(degrees: &[u32]) -> Vec<usize> {
    let mut prefix = Vec::with_capacity(degrees.len() + 1);
    let mut acc = 0usize;
    prefix.push(0);
    for &d in degrees {
        acc += d as usize;
        prefix.push(acc);
    }
    prefix
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("unexpected end of file".into())
    } else {
        Error::Io(e)
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf[0])
}

#[cfg(test)]
pub(crate) fn toy_graph() -> GraphStore {
    let edges = [(0, 1), (0, 2), (1, 0), (2, 0), (2, 3), (3, 2)];
    GraphStore::build_from_edge_index(edges.map(|(a, b)| (NodeId(a), NodeId(b))), 4, false).unwrap()
}
