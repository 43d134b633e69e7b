use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Boundary filtering mode of one four-line segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterMode {
    None,
    Normal,
    Strong,
}

impl FilterMode {
    /// Candidate order; earlier modes win ties.
    pub const ALL: [FilterMode; 3] = [FilterMode::None, FilterMode::Normal, FilterMode::Strong];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterMode::None => "none",
            FilterMode::Normal => "normal",
            FilterMode::Strong => "strong",
        }
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(FilterMode::None),
            "normal" => Ok(FilterMode::Normal),
            "strong" => Ok(FilterMode::Strong),
            other => Err(Error::invalid(format!("unknown filter mode {other:?}"))),
        }
    }
}

/// Samples of one line across a boundary: `[p3, p2, p1, p0, q0, q1, q2, q3]`.
pub type Line = [u8; 8];

/// Four consecutive lines crossing the same boundary.
pub type Segment = [Line; 4];

#[inline]
fn clip(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

/// Filters one line. Strong touches p2..q2, normal touches p1..q1.
pub fn filter_line(line: Line, mode: FilterMode) -> Line {
    let [p3, p2, p1, p0, q0, q1, q2, q3] = line.map(i32::from);
    match mode {
        FilterMode::None => line,
        FilterMode::Strong => [
            line[0],
            clip((2 * p3 + 3 * p2 + p1 + p0 + q0 + 4) >> 3),
            clip((p2 + p1 + p0 + q0 + 2) >> 2),
            clip((p2 + 2 * p1 + 2 * p0 + 2 * q0 + q1 + 4) >> 3),
            clip((p1 + 2 * p0 + 2 * q0 + 2 * q1 + q2 + 4) >> 3),
            clip((p0 + q0 + q1 + q2 + 2) >> 2),
            clip((p0 + q0 + q1 + 3 * q2 + 2 * q3 + 4) >> 3),
            line[7],
        ],
        FilterMode::Normal => {
            let delta = (9 * (q0 - p0) - 3 * (q1 - p1) + 8) >> 4;
            let half = delta >> 1;
            [
                line[0],
                line[1],
                clip(p1 + half),
                clip(p0 + delta),
                clip(q0 - delta),
                clip(q1 - half),
                line[6],
                line[7],
            ]
        }
    }
}

pub fn filter_segment(seg: &Segment, mode: FilterMode) -> Segment {
    seg.map(|l| filter_line(l, mode))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn none_is_identity() {
        let l = [1, 50, 3, 200, 7, 0, 255, 9];
        assert_eq!(filter_line(l, FilterMode::None), l);
    }

    #[test]
    fn flat_lines_are_fixed_points() {
        for v in [0u8, 17, 128, 255] {
            for m in FilterMode::ALL {
                assert_eq!(filter_line([v; 8], m), [v; 8]);
            }
        }
    }

    #[test]
    fn strong_step_example() {
        let out = filter_line([100, 100, 100, 100, 120, 120, 120, 120], FilterMode::Strong);
        assert_eq!(out[3], 108);
        // p1' = (100+100+100+120+2)>>2 = 105, p2' = (200+300+100+100+120+4)>>3 = 103
        assert_eq!(&out[..4], &[100, 103, 105, 108]);
        assert_eq!(&out[4..], &[113, 115, 118, 120]);
    }

    #[test]
    fn normal_step_example() {
        // Δ = (9·20 − 3·20 + 8) >> 4 = 8, Δ/2 = 4
        let out = filter_line([100, 100, 100, 100, 120, 120, 120, 120], FilterMode::Normal);
        assert_eq!(out, [100, 100, 104, 108, 112, 116, 120, 120]);
    }

    #[test]
    fn mode_parse() {
        assert_eq!("strong".parse::<FilterMode>().unwrap(), FilterMode::Strong);
        assert!("weak".parse::<FilterMode>().is_err());
        assert_eq!(FilterMode::Normal.to_string(), "normal");
    }
}
