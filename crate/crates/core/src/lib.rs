//! CONCAT neighbor sampling for sample-and-aggregate GNNs, with a behavioral
//! and cycle model of an FPGA sampling accelerator.
//!
//! * [`graph_store`]: degree-list / edge-list graphs and node-range segments.
//! * [`rng`]: the 16-bit LFSR random source and the modulo pipeline.
//! * [`sampler`]: the CONCAT sampler and the stochastic / importance baselines.
//! * [`hw_model`]: small, large and segmented accelerator paths with cycle reports.
//! * [`validate`]: goodness-of-fit, truncation statistics and toy aggregation.

pub mod error;
pub mod graph_store;
pub mod hw_model;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod validate;

pub use error::{Error, Result};
pub use graph_store::{Adjacency, GraphStore, NodeId, Segment, SegmentedStore};
pub use hw_model::{CycleReport, HwConfig, Mode};
pub use report::{BenchRecord, Record};
pub use rng::{Lfsr16, ModuloPipeline};
pub use sampler::{ComputationalGraph, SampleTable};
pub use validate::{FrequencyTable, ToyFeatures, TruncationStats};
