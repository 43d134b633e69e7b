//! Boundary filtering experiment on the 8×8 block grid.
//!
//! Every interior 8×8 block boundary is cut into four-sample segments. Each
//! segment can be left alone or filtered with the normal or strong luma
//! filter. [`oracle_decide`] picks, per segment, whichever mode lands closest
//! to the original frame; [`hevc_rule_decide`] reproduces the signal-adaptive
//! decision a standard decoder would make, so the two can be compared with
//! [`agreement`]. [`bd_rate`] is the rate-distortion summary used to report
//! coding gains.

mod bdrate;
mod filter;
mod hevc_rule;

pub use bdrate::{bd_rate, RdCurve};
pub use filter::{filter_line, filter_segment, FilterMode, Line, Segment};
pub use hevc_rule::{hevc_rule_decide, BETA_TABLE, TC_TABLE};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::frame::LumaFrame;

pub const GRID: usize = 8;
pub const SEGMENT_LEN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// Boundary between horizontally adjacent blocks (a vertical edge).
    Vertical,
    Horizontal,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Vertical => "vertical",
            Orientation::Horizontal => "horizontal",
        }
    }
}

/// One four-line piece of an interior block boundary. `boundary` counts
/// edges from 1 (edge at pixel `8·boundary`), `segment` counts four-sample
/// runs along the edge from 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoundarySegment {
    pub orientation: Orientation,
    pub boundary: usize,
    pub segment: usize,
}

impl BoundarySegment {
    /// Frame coordinates of sample `i` (0 = p3 … 7 = q3) on line `l`.
    #[inline]
    pub fn sample_xy(&self, line: usize, i: usize) -> (usize, usize) {
        let edge = self.boundary * GRID;
        let along = self.segment * SEGMENT_LEN + line;
        match self.orientation {
            Orientation::Vertical => (edge - 4 + i, along),
            Orientation::Horizontal => (along, edge - 4 + i),
        }
    }

    pub fn read(&self, f: &LumaFrame) -> Segment {
        let mut seg = [[0u8; 8]; 4];
        for (l, line) in seg.iter_mut().enumerate() {
            for (i, s) in line.iter_mut().enumerate() {
                let (x, y) = self.sample_xy(l, i);
                *s = f.get(x, y);
            }
        }
        seg
    }

    pub fn write(&self, f: &mut LumaFrame, seg: &Segment) {
        for (l, line) in seg.iter().enumerate() {
            for (i, &s) in line.iter().enumerate() {
                let (x, y) = self.sample_xy(l, i);
                f.set(x, y, s);
            }
        }
    }
}

/// All segments of a `width × height` frame: vertical edges first (edge-major),
/// then horizontal edges.
pub fn segments(width: usize, height: usize) -> Vec<BoundarySegment> {
    let mut out = Vec::new();
    for boundary in 1..width.div_ceil(GRID) {
        for segment in 0..height / SEGMENT_LEN {
            out.push(BoundarySegment { orientation: Orientation::Vertical, boundary, segment });
        }
    }
    for boundary in 1..height.div_ceil(GRID) {
        for segment in 0..width / SEGMENT_LEN {
            out.push(BoundarySegment { orientation: Orientation::Horizontal, boundary, segment });
        }
    }
    out
}

/// Per-segment filter decisions, in [`segments`] order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeMap {
    pub width: usize,
    pub height: usize,
    pub modes: Vec<FilterMode>,
}

impl ModeMap {
    pub fn uniform(width: usize, height: usize, mode: FilterMode) -> Self {
        ModeMap { width, height, modes: vec![mode; segments(width, height).len()] }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BoundarySegment, FilterMode)> + '_ {
        segments(self.width, self.height).into_iter().zip(self.modes.iter().copied())
    }

    /// `orientation,boundary,segment,mode` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("orientation,boundary,segment,mode\n");
        for (seg, mode) in self.iter() {
            let _ = writeln!(s, "{},{},{},{}", seg.orientation.as_str(), seg.boundary, seg.segment, mode);
        }
        s
    }

    pub fn count(&self, mode: FilterMode) -> usize {
        self.modes.iter().filter(|&&m| m == mode).count()
    }
}

fn check_grid(f: &LumaFrame) -> Result<()> {
    if f.width() % GRID != 0 || f.height() % GRID != 0 || f.width() == 0 || f.height() == 0 {
        return Err(Error::shape(format!(
            "frame {}x{} is not a positive multiple of {GRID} in both axes",
            f.width(),
            f.height()
        )));
    }
    Ok(())
}

/// Sum of squared differences over the whole frame.
pub fn sse(a: &LumaFrame, b: &LumaFrame) -> Result<u64> {
    a.expect_same_dims(b, "sse")?;
    Ok(a.samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum())
}

/// SSE over the samples a strong filter may modify (p2..q2 on all four lines).
pub fn segment_sse(candidate: &Segment, original: &Segment) -> u64 {
    let mut acc = 0u64;
    for (c, o) in candidate.iter().zip(original) {
        for i in 1..7 {
            let d = c[i] as i64 - o[i] as i64;
            acc += (d * d) as u64;
        }
    }
    acc
}

/// Filters `decoded` with the given decisions (vertical pass, then
/// horizontal pass on the result).
pub fn apply_modes(decoded: &LumaFrame, modes: &ModeMap) -> Result<LumaFrame> {
    check_grid(decoded)?;
    if decoded.dims() != (modes.width, modes.height) {
        return Err(Error::shape("mode map does not match frame"));
    }
    let mut out = decoded.clone();
    for (seg, mode) in modes.iter() {
        if mode != FilterMode::None {
            let filtered = filter_segment(&seg.read(&out), mode);
            seg.write(&mut out, &filtered);
        }
    }
    Ok(out)
}

/// Output of [`oracle_decide`].
#[derive(Clone, Debug)]
pub struct OracleDecision {
    pub modes: ModeMap,
    pub filtered: LumaFrame,
    /// Segment SSE against the original for `[none, normal, strong]`,
    /// evaluated on the frame state the segment's pass saw.
    pub costs: Vec<[u64; 3]>,
}

/// Chooses, per segment, the mode with least SSE against `original`.
/// Ties go to the earlier of none, normal, strong. Vertical edges are
/// decided and applied before horizontal ones.
pub fn oracle_decide(decoded: &LumaFrame, original: &LumaFrame) -> Result<OracleDecision> {
    decoded.expect_same_dims(original, "oracle_decide")?;
    check_grid(decoded)?;
    let (w, h) = decoded.dims();
    let segs = segments(w, h);
    let mut out = decoded.clone();
    let mut modes = Vec::with_capacity(segs.len());
    let mut costs = Vec::with_capacity(segs.len());
    for seg in segs {
        let cur = seg.read(&out);
        let reference = seg.read(original);
        let mut best = (FilterMode::None, u64::MAX, cur);
        let mut c = [0u64; 3];
        for (k, mode) in FilterMode::ALL.into_iter().enumerate() {
            let cand = filter_segment(&cur, mode);
            c[k] = segment_sse(&cand, &reference);
            if c[k] < best.1 {
                best = (mode, c[k], cand);
            }
        }
        if best.0 != FilterMode::None {
            seg.write(&mut out, &best.2);
        }
        modes.push(best.0);
        costs.push(c);
    }
    Ok(OracleDecision { modes: ModeMap { width: w, height: h, modes }, filtered: out, costs })
}

/// Fraction of segments on which two decisions agree.
pub fn agreement(a: &ModeMap, b: &ModeMap) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("mode maps have {} and {} segments", a.len(), b.len())));
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    let same = a.modes.iter().zip(&b.modes).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}
