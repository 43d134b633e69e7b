use super::TuPartition;
use crate::error::{Error, Result};
use crate::frame::LumaFrame;

/// Depth, boundary and mean maps of one frame. All three are frame-sized
/// 8-bit planes; `depth` holds 1..=4, `boundary` holds 0/1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GuidedMapSet {
    pub depth: LumaFrame,
    pub boundary: LumaFrame,
    pub mean: LumaFrame,
}

/// Per-pixel quadtree depth of the enclosing TU.
pub fn depth_map(p: &TuPartition) -> LumaFrame {
    let mut out = LumaFrame::filled(p.width, p.height, 0);
    for tu in &p.tus {
        let d = tu.depth();
        for y in tu.y..tu.y + tu.size {
            out.samples_mut()[y * p.width + tu.x..y * p.width + tu.x + tu.size].fill(d);
        }
    }
    out
}

/// 1 on the first row and first column of each TU, except where that edge
/// lies on the frame border.
pub fn boundary_map(p: &TuPartition) -> LumaFrame {
    let mut out = LumaFrame::filled(p.width, p.height, 0);
    for tu in &p.tus {
        if tu.y > 0 {
            out.samples_mut()[tu.y * p.width + tu.x..tu.y * p.width + tu.x + tu.size].fill(1);
        }
        if tu.x > 0 {
            for y in tu.y..tu.y + tu.size {
                out.set(tu.x, y, 1);
            }
        }
    }
    out
}

/// Each TU filled with the rounded (half-up) mean of its decoded pixels.
pub fn mean_map(frame: &LumaFrame, p: &TuPartition) -> Result<LumaFrame> {
    if frame.dims() != (p.width, p.height) {
        return Err(Error::shape(format!(
            "frame {}x{} vs partition {}x{}",
            frame.width(),
            frame.height(),
            p.width,
            p.height
        )));
    }
    let mut out = LumaFrame::filled(p.width, p.height, 0);
    for tu in &p.tus {
        let mut sum = 0u64;
        for y in tu.y..tu.y + tu.size {
            sum += frame.samples()[y * p.width + tu.x..y * p.width + tu.x + tu.size]
                .iter()
                .map(|&v| v as u64)
                .sum::<u64>();
        }
        let n = (tu.size * tu.size) as u64;
        let mean = ((2 * sum + n) / (2 * n)) as u8;
        for y in tu.y..tu.y + tu.size {
            out.samples_mut()[y * p.width + tu.x..y * p.width + tu.x + tu.size].fill(mean);
        }
    }
    Ok(out)
}

pub fn guided_maps(frame: &LumaFrame, p: &TuPartition) -> Result<GuidedMapSet> {
    Ok(GuidedMapSet { depth: depth_map(p), boundary: boundary_map(p), mean: mean_map(frame, p)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::Tu;

    #[test]
    fn single_tu_has_no_boundary() {
        let p = TuPartition::new(32, 32, vec![Tu::new(0, 0, 32)]).unwrap();
        assert!(boundary_map(&p).samples().iter().all(|&v| v == 0));
        assert!(depth_map(&p).samples().iter().all(|&v| v == 1));
    }

    #[test]
    fn four_quadrants_give_a_cross() {
        let p = TuPartition::uniform(64, 64, 32).unwrap();
        let b = boundary_map(&p);
        for y in 0..64 {
            for x in 0..64 {
                let want = u8::from(x == 32 || y == 32);
                assert_eq!(b.get(x, y), want, "({x},{y})");
            }
        }
    }

    #[test]
    fn four_by_four_tu_is_depth_four() {
        let p = TuPartition::uniform(8, 8, 4).unwrap();
        assert!(depth_map(&p).samples().iter().all(|&v| v == 4));
    }

    #[test]
    fn mean_of_constant_frame() {
        let f = LumaFrame::filled(64, 64, 77);
        let p = TuPartition::quadtree(64, 64, |x, _, s| s > 8 && x < 32).unwrap();
        assert_eq!(mean_map(&f, &p).unwrap(), f);
    }

    #[test]
    fn mean_rounds_half_up() {
        // A 4x4 TU whose pixels average 25 exactly, and one averaging 24.5.
        let mut f = LumaFrame::filled(8, 4, 0);
        for (i, v) in [10u8, 20, 30, 40].iter().cycle().take(16).enumerate() {
            f.set(i % 4, i / 4, *v);
        }
        for i in 0..16 {
            f.set(4 + i % 4, i / 4, if i < 8 { 24 } else { 25 });
        }
        let p = TuPartition::uniform(8, 4, 4).unwrap();
        let m = mean_map(&f, &p).unwrap();
        assert_eq!(m.get(0, 0), 25);
        assert_eq!(m.get(4, 0), 25);
    }

    #[test]
    fn mean_map_dims_must_match() {
        let p = TuPartition::uniform(8, 8, 4).unwrap();
        assert!(mean_map(&LumaFrame::filled(8, 4, 0), &p).is_err());
    }
}
