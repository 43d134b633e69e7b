//! 8-bit luma planes.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// One 8-bit luma plane, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LumaFrame {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl LumaFrame {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width * height != samples.len() {
            return Err(Error::shape(format!(
                "{width}x{height} frame needs {} samples, got {}",
                width * height,
                samples.len()
            )));
        }
        Ok(LumaFrame { width, height, samples })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        LumaFrame { width, height, samples: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        LumaFrame { width, height, samples }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.samples[y * self.width + x] = v;
    }

    pub fn expect_same_dims(&self, other: &LumaFrame, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Sub-rectangle `[x0, x0+w) × [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<LumaFrame> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::shape(format!(
                "crop {w}x{h} at ({x0},{y0}) outside {}x{}",
                self.width, self.height
            )));
        }
        Ok(LumaFrame::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }

    /// Extends the frame to `w × h` by replicating the last row and column.
    pub fn pad_replicate(&self, w: usize, h: usize) -> LumaFrame {
        LumaFrame::from_fn(w, h, |x, y| {
            self.get(x.min(self.width - 1), y.min(self.height - 1))
        })
    }

    /// Samples scaled to `[0, 1]` as a `1×1×H×W` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let scale = T::cast(1.0 / 255.0);
        let data = self.samples.iter().map(|&v| T::cast(v as f64) * scale).collect();
        Tensor::new([1, 1, self.height, self.width], data).expect("frame dims")
    }

    /// Inverse of [`to_tensor`](Self::to_tensor): rescale, round, clip.
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<LumaFrame> {
        let [n, c, h, w] = t.shape();
        if n != 1 || c != 1 {
            return Err(Error::shape(format!("expected 1x1xHxW, got {:?}", t.shape())));
        }
        let samples = t.data().iter().map(|&v| quantize_unit(v.as_f64())).collect();
        LumaFrame::new(w, h, samples)
    }
}

/// Maps a `[0, 1]` value back to an 8-bit sample.
#[inline]
pub fn quantize_unit(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Round-half-away-from-zero then clip to the 8-bit range.
#[inline]
pub fn clip_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_is_exact() {
        let f = LumaFrame::from_fn(7, 5, |x, y| (x * 37 + y * 11) as u8);
        let t: Tensor<f32> = f.to_tensor();
        assert_eq!(t.shape(), [1, 1, 5, 7]);
        assert_eq!(LumaFrame::from_tensor(&t).unwrap(), f);
    }

    #[test]
    fn pad_and_crop() {
        let f = LumaFrame::from_fn(3, 2, |x, y| (x + 10 * y) as u8);
        let p = f.pad_replicate(5, 4);
        assert_eq!(p.get(4, 3), 12);
        assert_eq!(p.crop(0, 0, 3, 2).unwrap(), f);
        assert!(LumaFrame::new(2, 2, vec![0; 3]).is_err());
    }
}
