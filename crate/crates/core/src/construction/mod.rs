//! The decorated canopy tree and the layered construction of the
//! percolation on the 4-regular tree.

mod position;
mod sample;
mod window;

pub use position::{CanopyPos, Position, MAX_DIGITS};
pub use sample::{
    compute_m, sample_root_level, sample_tail_levels, ChainTail, ConstructionParams, RootLaw, Sample, TailMode,
    XiChain,
};
pub use window::{canopy_of, Site, SlotKind, Window, WindowSignature};

use crate::error::Result;

/// The decorated canopy tree around the root: the block below the ray
/// vertex at the level cap, every leaf of the decorated tree left as a
/// frontier vertex.
pub fn build_t0(params: &ConstructionParams) -> Result<Window> {
    let mut w = Window::from_params(params)?;
    w.expand_canopy_block()?;
    Ok(w)
}

/// [`build_t0`] extended by the layered construction to every vertex within
/// `params.window_radius` of the root.
pub fn build_window(params: &ConstructionParams) -> Result<Window> {
    let mut w = build_t0(params)?;
    let root = w.root();
    w.expand_ball(root, params.window_radius, crate::graph::filter::all)?;
    Ok(w)
}
