//! Positions in the single decorated-canopy sample.
//!
//! Canopy vertices are addressed relative to the *ray*: the ancestors of
//! the sampled root's canopy anchor, one per level starting at the floor
//! level. A canopy position is a ray vertex (`anchor`) plus the child
//! digits taken on the way down from it. Ternary-tree vertices only record
//! their canopy leaf, depth and the tree height; siblings inside a ternary
//! tree are structurally identical, so distinct vertices are told apart by
//! their path keys, not by their positions.

use crate::error::{Error, Result};
use crate::rng::mix_all;

/// Maximum number of digits below a ray vertex.
pub const MAX_DIGITS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanopyPos {
    /// Level of the ray vertex this position descends from.
    pub anchor: u32,
    /// Number of digits below the anchor.
    pub depth: u32,
    /// Two bits per digit, first step in the lowest bits.
    pub digits: u128,
}

impl CanopyPos {
    pub const fn ray(level: u32) -> Self {
        Self {
            anchor: level,
            depth: 0,
            digits: 0,
        }
    }

    #[inline]
    pub fn level(&self) -> u32 {
        self.anchor - self.depth
    }

    #[inline]
    pub fn on_ray(&self) -> bool {
        self.depth == 0
    }

    pub fn digit(&self, i: u32) -> u8 {
        ((self.digits >> (2 * i)) & 3) as u8
    }

    /// Deterministic label for keyed randomness.
    pub fn key(&self) -> u64 {
        mix_all(&[
            self.anchor as u64,
            self.depth as u64,
            self.digits as u64,
            (self.digits >> 64) as u64,
        ])
    }

    /// Canopy parent (one level up).
    pub fn parent(&self) -> Self {
        if self.depth == 0 {
            return Self::ray(self.anchor + 1);
        }
        let depth = self.depth - 1;
        Self {
            anchor: self.anchor,
            depth,
            digits: self.digits & low_mask(depth),
        }
    }

    /// Child `j in 0..3`. Below a ray vertex above the floor, child 0 is the
    /// next ray vertex.
    pub fn child(&self, j: u8, floor: u32) -> Result<Self> {
        debug_assert!(j < 3 && self.level() >= 1);
        if self.depth == 0 && self.anchor > floor && j == 0 {
            return Ok(Self::ray(self.anchor - 1));
        }
        if self.depth >= MAX_DIGITS {
            return Err(Error::DepthOverflow(self.depth + 1));
        }
        Ok(Self {
            anchor: self.anchor,
            depth: self.depth + 1,
            digits: self.digits | ((j as u128) << (2 * self.depth)),
        })
    }

    /// Which child of its parent this position is.
    pub fn digit_under_parent(&self) -> u8 {
        if self.depth == 0 {
            0
        } else {
            self.digit(self.depth - 1)
        }
    }

    /// Ancestor at `level >= self.level()`.
    pub fn ancestor_at(&self, level: u32) -> Self {
        debug_assert!(level >= self.level());
        if level >= self.anchor {
            return Self::ray(level);
        }
        let depth = self.anchor - level;
        Self {
            anchor: self.anchor,
            depth,
            digits: self.digits & low_mask(depth),
        }
    }
}

#[inline]
fn low_mask(depth: u32) -> u128 {
    if depth >= 64 {
        u128::MAX
    } else {
        (1u128 << (2 * depth)) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    Canopy(CanopyPos),
    /// Vertex at `depth >= 1` of the ternary tree of depth `height` hanging
    /// below the level-0 canopy vertex `base`.
    Ternary { base: CanopyPos, depth: u32, height: u32 },
}

impl Position {
    pub fn canopy_level(&self) -> Option<u32> {
        match self {
            Position::Canopy(c) => Some(c.level()),
            Position::Ternary { .. } => None,
        }
    }

    /// The level-0 canopy vertex owning this position, if any.
    pub fn base(&self) -> Option<CanopyPos> {
        match *self {
            Position::Canopy(c) if c.level() == 0 => Some(c),
            Position::Canopy(_) => None,
            Position::Ternary { base, .. } => Some(base),
        }
    }
}
