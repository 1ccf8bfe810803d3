//! Independent insertion/deletion noise on the edges of a window.

use serde::{Deserialize, Serialize};

use crate::construction::Window;
use crate::error::{Error, Result};
use crate::graph::EdgeMarkSet;
use crate::rng::{tag, Keyed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub eps: f64,
    pub delta: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn new(eps: f64, delta: f64, seed: u64) -> Result<Self> {
        let p = Self { eps, delta, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("eps", self.eps), ("delta", self.delta)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidParameter(format!("{name} = {x} is not in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Noise flags of the edge whose key is `edge_key`.
    ///
    /// Each flag compares one keyed uniform against its rate, so for a fixed
    /// seed the added (deleted) set is monotone in `eps` (`delta`).
    #[inline]
    pub fn flags(&self, edge_key: u64) -> EdgeMarkSet {
        let keyed = Keyed::new(self.seed);
        let mut out = EdgeMarkSet::empty();
        if keyed.uniform(edge_key, tag::ADD) < self.eps {
            out |= EdgeMarkSet::NOISE_ADDED;
        }
        if keyed.uniform(edge_key, tag::DEL) < self.delta {
            out |= EdgeMarkSet::NOISE_DELETED;
        }
        out
    }
}

/// Flags every materialized edge and makes the window flag every edge it
/// creates later with the same keying. Re-applying replaces earlier flags.
pub fn apply_noise(window: &mut Window, p: NoiseParams) -> Result<()> {
    p.validate()?;
    window.set_noise(Some(p));
    Ok(())
}
