use crate::error::{Error, Result};
use crate::frame::LumaFrame;

/// Per-pixel non-negative statistic over a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl NoiseMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        NoiseMap { width, height, values: vec![0.0; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Min-max scaling to 8 bits; returns the frame and the `(min, max)`
    /// needed to map a sample `s` back to `min + s / 255 · (max − min)`.
    pub fn to_u8_scaled(&self) -> (LumaFrame, f64, f64) {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
        let span = hi - lo;
        let samples = self
            .values
            .iter()
            .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
            .collect();
        (LumaFrame::new(self.width, self.height, samples).expect("map dims"), lo, hi)
    }
}

/// Integral image with a zero top row and left column.
fn integral(values: &[i64], w: usize, h: usize) -> Vec<i64> {
    let mut s = vec![0i64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0i64;
        for x in 0..w {
            row += values[y * w + x];
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

/// Standard deviation of the compression error `decoded − original` over the
/// `(2r+1)²` window centred at each pixel, clipped at frame borders.
///
/// Window sums are accumulated exactly in integers, so a window whose error
/// is constant reports exactly zero.
pub fn noise_std_map(decoded: &LumaFrame, original: &LumaFrame, radius: usize) -> Result<NoiseMap> {
    decoded.expect_same_dims(original, "noise_std_map")?;
    let (w, h) = decoded.dims();
    let err: Vec<i64> = decoded
        .samples()
        .iter()
        .zip(original.samples())
        .map(|(&d, &o)| d as i64 - o as i64)
        .collect();
    let sq: Vec<i64> = err.iter().map(|e| e * e).collect();
    let s1 = integral(&err, w, h);
    let s2 = integral(&sq, w, h);
    let rect = |s: &[i64], x0: usize, y0: usize, x1: usize, y1: usize| {
        s[y1 * (w + 1) + x1] - s[y0 * (w + 1) + x1] - s[y1 * (w + 1) + x0] + s[y0 * (w + 1) + x0]
    };
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(radius), (y + radius + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(radius), (x + radius + 1).min(w));
            let n = ((x1 - x0) * (y1 - y0)) as i64;
            let a = rect(&s1, x0, y0, x1, y1);
            let b = rect(&s2, x0, y0, x1, y1);
            // n²·var = n·Σe² − (Σe)², exact in i64.
            let scaled = (n * b - a * a) as f64;
            values.push((scaled.max(0.0)).sqrt() / n as f64);
        }
    }
    Ok(NoiseMap { width: w, height: h, values })
}

/// Per-pixel absolute difference of two noise maps.
pub fn temporal_noise_diff(a: &NoiseMap, b: &NoiseMap) -> Result<NoiseMap> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::shape(format!(
            "noise maps {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let values = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).collect();
    Ok(NoiseMap { width: a.width, height: a.height, values })
}
