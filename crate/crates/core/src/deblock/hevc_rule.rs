use super::{check_grid, filter_segment, segments, FilterMode, ModeMap, Segment};
use crate::error::{Error, Result};
use crate::frame::LumaFrame;

/// β′ threshold by QP.
#[rustfmt::skip]
pub const BETA_TABLE: [u8; 52] = [
     0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,
     6,  7,  8,  9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 20, 22, 24,
    26, 28, 30, 32, 34, 36, 38, 40, 42, 44, 46, 48, 50, 52, 54, 56,
    58, 60, 62, 64,
];

/// tC′ threshold by `QP + 2·(bS − 1)`.
#[rustfmt::skip]
pub const TC_TABLE: [u8; 54] = [
     0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,
     0,  0,  1,  1,  1,  1,  1,  1,  1,  1,  1,  2,  2,  2,  2,  3,
     3,  3,  3,  4,  4,  4,  5,  5,  6,  6,  7,  8,  9, 10, 11, 13,
    14, 16, 18, 20, 22, 24,
];

/// Intra boundaries always get the highest strength.
const BOUNDARY_STRENGTH: i32 = 2;

fn decide(seg: &Segment, beta: i32, tc: i32) -> FilterMode {
    if tc == 0 {
        return FilterMode::None;
    }
    let s = |l: usize, i: usize| seg[l][i] as i32;
    // Second differences on lines 0 and 3; p side is indices 1..3, q side 4..6.
    let dp = |l| (s(l, 1) - 2 * s(l, 2) + s(l, 3)).abs();
    let dq = |l| (s(l, 6) - 2 * s(l, 5) + s(l, 4)).abs();
    let (dpq0, dpq3) = (dp(0) + dq(0), dp(3) + dq(3));
    if dpq0 + dpq3 >= beta {
        return FilterMode::None;
    }
    let strong_line = |l: usize, dpq: i32| {
        2 * dpq < (beta >> 2)
            && (s(l, 0) - s(l, 3)).abs() + (s(l, 4) - s(l, 7)).abs() < (beta >> 3)
            && (s(l, 3) - s(l, 4)).abs() < ((5 * tc + 1) >> 1)
    };
    if strong_line(0, dpq0) && strong_line(3, dpq3) {
        FilterMode::Strong
    } else {
        FilterMode::Normal
    }
}

/// Mode decisions of the standard signal-adaptive rule at a fixed `qp`,
/// evaluated sequentially on the partially filtered frame.
pub fn hevc_rule_decide(decoded: &LumaFrame, qp: u32) -> Result<ModeMap> {
    check_grid(decoded)?;
    if qp > 51 {
        return Err(Error::invalid(format!("qp {qp} outside 0..=51")));
    }
    let beta = BETA_TABLE[qp as usize] as i32;
    let tc = TC_TABLE[(qp as i32 + 2 * (BOUNDARY_STRENGTH - 1)).min(53) as usize] as i32;
    let (w, h) = decoded.dims();
    let mut frame = decoded.clone();
    let mut modes = Vec::new();
    for seg in segments(w, h) {
        let cur = seg.read(&frame);
        let mode = decide(&cur, beta, tc);
        if mode != FilterMode::None {
            seg.write(&mut frame, &filter_segment(&cur, mode));
        }
        modes.push(mode);
    }
    Ok(ModeMap { width: w, height: h, modes })
}
