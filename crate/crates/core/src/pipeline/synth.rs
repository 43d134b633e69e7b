use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::{clip_u8, LumaFrame};

struct Wave {
    fx: f64,
    fy: f64,
    amp: f64,
    phase: f64,
}

enum Shape {
    Disc { r: f64 },
    Rect { hw: f64, hh: f64 },
}

struct Object {
    shape: Shape,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    level: f64,
}

impl Object {
    fn covers(&self, px: f64, py: f64, t: f64) -> bool {
        let (dx, dy) = (px - (self.x + self.vx * t), py - (self.y + self.vy * t));
        match self.shape {
            Shape::Disc { r } => dx * dx + dy * dy <= r * r,
            Shape::Rect { hw, hh } => dx.abs() <= hw && dy.abs() <= hh,
        }
    }
}

/// A deterministic clip of a panning smooth background (sum of plane
/// waves) with a few hard-edged discs and rectangles moving across it.
pub fn synth_clip(width: usize, height: usize, frames: usize, seed: u64) -> Vec<LumaFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<Wave> = (0..3)
        .map(|_| Wave {
            fx: rng.gen_range(-0.25..0.25),
            fy: rng.gen_range(-0.25..0.25),
            amp: rng.gen_range(10.0..35.0),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        })
        .collect();
    let base = rng.gen_range(90.0..160.0);
    let (pan_x, pan_y) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
    let n_obj = 2 + (width * height) / 1500;
    let objects: Vec<Object> = (0..n_obj)
        .map(|_| {
            let shape = if rng.gen_bool(0.5) {
                Shape::Disc { r: rng.gen_range(3.0..(width.min(height) as f64 / 4.0).max(4.0)) }
            } else {
                Shape::Rect {
                    hw: rng.gen_range(2.0..(width as f64 / 5.0).max(3.0)),
                    hh: rng.gen_range(2.0..(height as f64 / 5.0).max(3.0)),
                }
            };
            Object {
                shape,
                x: rng.gen_range(0.0..width as f64),
                y: rng.gen_range(0.0..height as f64),
                vx: rng.gen_range(-2.0..2.0),
                vy: rng.gen_range(-2.0..2.0),
                level: rng.gen_range(0.0..255.0),
            }
        })
        .collect();
    (0..frames)
        .map(|t| {
            let t = t as f64;
            LumaFrame::from_fn(width, height, |x, y| {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let (bx, by) = (px + pan_x * t, py + pan_y * t);
                let mut v = base + waves.iter().map(|w| w.amp * (w.fx * bx + w.fy * by + w.phase).sin()).sum::<f64>();
                for o in &objects {
                    if o.covers(px, py, t) {
                        v = o.level;
                    }
                }
                clip_u8(v)
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_moving() {
        let a = synth_clip(32, 24, 3, 9);
        assert_eq!(a, synth_clip(32, 24, 3, 9));
        assert_ne!(a, synth_clip(32, 24, 3, 10));
        assert_ne!(a[0], a[1]);
        assert_eq!(a[0].dims(), (32, 24));
    }
}
