//! Block-transform quantization simulator and quantization-noise analysis.
//!
//! Compression is modelled as per-block orthonormal DCT, uniform
//! quantization with a flat step matrix, inverse DCT and clipping. There is
//! no prediction and no entropy coding: quantization is the only lossy step.

mod dct;
mod noise;

pub use dct::{dct2, idct2, BlockSpectrum, BLOCK_SIZES};
pub use noise::{noise_std_map, temporal_noise_diff, NoiseMap};

use crate::error::{Error, Result};
use crate::frame::{clip_u8, LumaFrame};
use crate::partition::TuPartition;

/// Quantization step of a QP: `2^((qp − 4) / 6)`, never below 1.
pub fn qp_to_step(qp: u32) -> f64 {
    2f64.powf((qp as f64 - 4.0) / 6.0).max(1.0)
}

/// `p × p` quantization steps.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantMatrix {
    size: usize,
    steps: Vec<f64>,
}

impl QuantMatrix {
    pub fn new(size: usize, steps: Vec<f64>) -> Result<Self> {
        if !BLOCK_SIZES.contains(&size) || steps.len() != size * size {
            return Err(Error::shape(format!(
                "quantization matrix must be p×p with p in {BLOCK_SIZES:?}, got p={size} with {} entries",
                steps.len()
            )));
        }
        if let Some(s) = steps.iter().find(|&&s| !(s >= 1.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("quantization step {s} must be finite and >= 1")));
        }
        Ok(QuantMatrix { size, steps })
    }

    pub fn flat(size: usize, step: f64) -> Result<Self> {
        QuantMatrix::new(size, vec![step; size * size])
    }

    pub fn from_qp(size: usize, qp: u32) -> Result<Self> {
        QuantMatrix::flat(size, qp_to_step(qp))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }
}

/// `round(c / q) · q` per coefficient, rounding half away from zero.
pub fn quantize_spectrum(spec: &BlockSpectrum, q: &QuantMatrix) -> Result<BlockSpectrum> {
    if spec.size() != q.size() {
        return Err(Error::shape(format!(
            "spectrum is {0}x{0}, quantization matrix is {1}x{1}",
            spec.size(),
            q.size()
        )));
    }
    let coeffs = spec
        .coeffs()
        .iter()
        .zip(q.steps())
        .map(|(&c, &s)| (c / s).round() * s)
        .collect();
    BlockSpectrum::new(spec.size(), coeffs)
}

fn code_block(src: &LumaFrame, dst: &mut LumaFrame, x0: usize, y0: usize, q: &QuantMatrix) -> Result<()> {
    let p = q.size();
    let mut block = Vec::with_capacity(p * p);
    for y in y0..y0 + p {
        block.extend(src.samples()[y * src.width() + x0..y * src.width() + x0 + p].iter().map(|&v| v as f64));
    }
    let rec = idct2(&quantize_spectrum(&dct2(&block, p)?, q)?);
    for (i, v) in rec.into_iter().enumerate() {
        dst.set(x0 + i % p, y0 + i / p, clip_u8(v));
    }
    Ok(())
}

/// Codes every `p × p` block of `frame` with steps `q`. Frames whose
/// dimensions are not multiples of `p` are edge-replicated for coding and
/// cropped back afterwards.
pub fn compress_frame(frame: &LumaFrame, q: &QuantMatrix) -> Result<LumaFrame> {
    let p = q.size();
    let pw = frame.width().div_ceil(p) * p;
    let ph = frame.height().div_ceil(p) * p;
    let padded = if (pw, ph) == frame.dims() { frame.clone() } else { frame.pad_replicate(pw, ph) };
    let mut out = padded.clone();
    for y0 in (0..ph).step_by(p) {
        for x0 in (0..pw).step_by(p) {
            code_block(&padded, &mut out, x0, y0, q)?;
        }
    }
    if (pw, ph) == frame.dims() {
        Ok(out)
    } else {
        out.crop(0, 0, frame.width(), frame.height())
    }
}

/// Codes each TU of `partition` with a flat step derived from `qp`.
pub fn compress_with_partition(frame: &LumaFrame, partition: &TuPartition, qp: u32) -> Result<LumaFrame> {
    if frame.dims() != (partition.width, partition.height) {
        return Err(Error::shape(format!(
            "frame {}x{} vs partition {}x{}",
            frame.width(),
            frame.height(),
            partition.width,
            partition.height
        )));
    }
    let step = qp_to_step(qp);
    let mats: Vec<QuantMatrix> = BLOCK_SIZES
        .iter()
        .map(|&p| QuantMatrix::flat(p, step))
        .collect::<Result<_>>()?;
    let mut out = frame.clone();
    for tu in &partition.tus {
        let q = &mats[BLOCK_SIZES.iter().position(|&s| s == tu.size).expect("validated size")];
        code_block(frame, &mut out, tu.x, tu.y, q)?;
    }
    Ok(out)
}

/// Variance-driven quadtree: a block is split while its sample standard
/// deviation exceeds a quarter of the quantization step, so flat regions get
/// large TUs and detailed regions small ones.
pub fn plan_partition(frame: &LumaFrame, qp: u32) -> Result<TuPartition> {
    let threshold = qp_to_step(qp) / 4.0;
    TuPartition::quadtree(frame.width(), frame.height(), |x0, y0, size| {
        let n = (size * size) as f64;
        let (mut s, mut s2) = (0.0, 0.0);
        for y in y0..y0 + size {
            for x in x0..x0 + size {
                let v = frame.get(x, y) as f64;
                s += v;
                s2 += v * v;
            }
        }
        let var = (s2 / n - (s / n).powi(2)).max(0.0);
        var.sqrt() > threshold
    })
}

/// Plans a partition for `frame`, then codes with it.
pub fn simulate(frame: &LumaFrame, qp: u32) -> Result<(LumaFrame, TuPartition)> {
    let partition = plan_partition(frame, qp)?;
    let decoded = compress_with_partition(frame, &partition, qp)?;
    Ok((decoded, partition))
}
