//! Invariant percolation on the 4-regular tree whose noised version has no
//! anchored expansion.
//!
//! The crate samples the decorated canopy tree, embeds copies of it into the
//! 4-regular tree lazily, perturbs edges with insertion/deletion noise, and
//! builds the explicit witness sets whose boundary-to-volume ratio tends to
//! zero. The `harness` module turns all of it into reproducible Monte Carlo
//! checks.

pub mod analysis;
pub mod construction;
pub mod error;
pub mod exact;
pub mod graph;
pub mod gw;
pub mod harness;
pub mod noise;
pub mod rng;
pub mod stats;
pub mod unimod;
pub mod witness;

pub use construction::{build_t0, build_window, ConstructionParams, RootLaw, TailMode, Window};
pub use error::{Error, Result};
pub use graph::{EdgeId, EdgeMarkSet, MarkedGraph, VertexId, VertexMeta};
pub use noise::{apply_noise, NoiseParams};
