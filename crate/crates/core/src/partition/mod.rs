//! Transform-unit partitions and the guided maps derived from them.
//!
//! A [`TuPartition`] is the quadtree leaf tiling of one frame. From it we
//! derive three frame-sized maps: per-pixel TU depth, a one-pixel boundary
//! mask, and the per-TU mean of the decoded frame (the map fed to the
//! enhancement network).

mod guided;
mod sidecar;

pub use guided::{boundary_map, depth_map, guided_maps, mean_map, GuidedMapSet};
pub use sidecar::{parse_tu_file, parse_tu_str, write_tu_file, write_tu_string, TuSequence};

use std::fmt;

use crate::error::{Error, Result};

pub const CTU_SIZE: usize = 64;
pub const TU_SIZES: [usize; 4] = [4, 8, 16, 32];

/// One transform unit: top-left corner and edge length in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tu {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

impl Tu {
    pub fn new(x: usize, y: usize, size: usize) -> Self {
        Tu { x, y, size }
    }

    /// Quadtree depth below the 64×64 CTU: 32 → 1, 16 → 2, 8 → 3, 4 → 4.
    pub fn depth(&self) -> u8 {
        (CTU_SIZE / self.size).trailing_zeros() as u8
    }

    pub fn contains(&self, px: usize, py: usize) -> bool {
        px >= self.x && px < self.x + self.size && py >= self.y && py < self.y + self.size
    }
}

/// The first structural problem found in a partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    UnsupportedSize { tu: usize, size: usize },
    Misaligned { tu: usize, x: usize, y: usize, size: usize },
    OutOfFrame { tu: usize, x: usize, y: usize, size: usize },
    Overlap { tu: usize, other: usize, x: usize, y: usize },
    CoverageGap { x: usize, y: usize },
}

impl Violation {
    /// Index of the offending TU, if the violation belongs to one.
    pub fn tu(&self) -> Option<usize> {
        match *self {
            Violation::UnsupportedSize { tu, .. }
            | Violation::Misaligned { tu, .. }
            | Violation::OutOfFrame { tu, .. }
            | Violation::Overlap { tu, .. } => Some(tu),
            Violation::CoverageGap { .. } => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::UnsupportedSize { size, .. } => {
                write!(f, "unsupported TU size {size} (expected 4, 8, 16 or 32)")
            }
            Violation::Misaligned { x, y, size, .. } => {
                write!(f, "alignment violation: {size}x{size} TU at ({x},{y}) is not on its quadtree grid")
            }
            Violation::OutOfFrame { x, y, size, .. } => {
                write!(f, "{size}x{size} TU at ({x},{y}) extends outside the frame")
            }
            Violation::Overlap { other, x, y, .. } => {
                write!(f, "overlap at ({x},{y}) with TU #{other}")
            }
            Violation::CoverageGap { x, y } => write!(f, "coverage gap at ({x},{y})"),
        }
    }
}

/// Transform-unit tiling of one frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TuPartition {
    pub width: usize,
    pub height: usize,
    pub tus: Vec<Tu>,
}

impl TuPartition {
    /// Builds and validates.
    pub fn new(width: usize, height: usize, tus: Vec<Tu>) -> Result<Self> {
        let p = TuPartition { width, height, tus };
        p.validate().map_err(|v| Error::Invariant(v.to_string()))?;
        Ok(p)
    }

    /// Checks size, alignment, disjointness and full coverage by exact pixel
    /// ownership counting.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        self.owner_map().map(|_| ())
    }

    /// Index of the TU covering each pixel (row-major).
    pub fn owner_map(&self) -> std::result::Result<Vec<u32>, Violation> {
        const FREE: u32 = u32::MAX;
        let mut owner = vec![FREE; self.width * self.height];
        for (i, tu) in self.tus.iter().enumerate() {
            if !TU_SIZES.contains(&tu.size) {
                return Err(Violation::UnsupportedSize { tu: i, size: tu.size });
            }
            if tu.x % tu.size != 0 || tu.y % tu.size != 0 {
                return Err(Violation::Misaligned { tu: i, x: tu.x, y: tu.y, size: tu.size });
            }
            if tu.x + tu.size > self.width || tu.y + tu.size > self.height {
                return Err(Violation::OutOfFrame { tu: i, x: tu.x, y: tu.y, size: tu.size });
            }
            for py in tu.y..tu.y + tu.size {
                for px in tu.x..tu.x + tu.size {
                    let slot = &mut owner[py * self.width + px];
                    if *slot != FREE {
                        return Err(Violation::Overlap { tu: i, other: *slot as usize, x: px, y: py });
                    }
                    *slot = i as u32;
                }
            }
        }
        if let Some(pos) = owner.iter().position(|&o| o == FREE) {
            return Err(Violation::CoverageGap { x: pos % self.width, y: pos / self.width });
        }
        Ok(owner)
    }

    /// Quadtree partition of a `width × height` frame. `split(x, y, size)` is
    /// asked for every block from 32 down to 8; blocks crossing the frame
    /// border are always split. Frame dims must be multiples of 4.
    pub fn quadtree(
        width: usize,
        height: usize,
        mut split: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        if width == 0 || height == 0 || width % 4 != 0 || height % 4 != 0 {
            return Err(Error::invalid(format!(
                "frame {width}x{height} must be a non-empty multiple of 4 in each axis"
            )));
        }
        let mut tus = Vec::new();
        for cy in (0..height).step_by(CTU_SIZE) {
            for cx in (0..width).step_by(CTU_SIZE) {
                for (dx, dy) in [(0, 0), (32, 0), (0, 32), (32, 32)] {
                    descend(cx + dx, cy + dy, 32, width, height, &mut split, &mut tus);
                }
            }
        }
        TuPartition::new(width, height, tus)
    }

    /// Every TU of the given size on a uniform grid.
    pub fn uniform(width: usize, height: usize, size: usize) -> Result<Self> {
        if !TU_SIZES.contains(&size) || width % size != 0 || height % size != 0 {
            return Err(Error::invalid(format!(
                "{width}x{height} cannot be tiled by {size}x{size} TUs"
            )));
        }
        let tus = (0..height)
            .step_by(size)
            .flat_map(|y| (0..width).step_by(size).map(move |x| Tu::new(x, y, size)))
            .collect();
        TuPartition::new(width, height, tus)
    }

    /// Crops to a window aligned to 32 pixels (so no TU is cut).
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        let tus = self
            .tus
            .iter()
            .filter(|t| t.x >= x0 && t.y >= y0 && t.x + t.size <= x0 + w && t.y + t.size <= y0 + h)
            .map(|t| Tu::new(t.x - x0, t.y - y0, t.size))
            .collect();
        TuPartition::new(w, h, tus)
    }
}

fn descend(
    x: usize,
    y: usize,
    size: usize,
    width: usize,
    height: usize,
    split: &mut impl FnMut(usize, usize, usize) -> bool,
    out: &mut Vec<Tu>,
) {
    if x >= width || y >= height {
        return;
    }
    let crosses = x + size > width || y + size > height;
    if size > 4 && (crosses || split(x, y, size)) {
        let h = size / 2;
        for (dx, dy) in [(0, 0), (h, 0), (0, h), (h, h)] {
            descend(x + dx, y + dy, h, width, height, split, out);
        }
    } else {
        out.push(Tu::new(x, y, size));
    }
}
