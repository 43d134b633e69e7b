use std::fmt::Write as _;

use crate::deblock::{bd_rate, RdCurve};
use crate::error::{Error, Result};
use crate::frame::LumaFrame;

/// Reported for identical frames instead of infinity.
pub const PSNR_CAP: f64 = 99.0;

pub fn mse(a: &LumaFrame, b: &LumaFrame) -> Result<f64> {
    a.expect_same_dims(b, "mse")?;
    let n = a.samples().len().max(1) as f64;
    let s: u64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(s as f64 / n)
}

/// `10·log10(255² / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(a: &LumaFrame, b: &LumaFrame) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (255.0f64 * 255.0 / m).log10()).min(PSNR_CAP))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameEval {
    pub index: usize,
    pub psnr_compressed: f64,
    pub psnr_enhanced: f64,
}

impl FrameEval {
    pub fn delta(&self) -> f64 {
        self.psnr_enhanced - self.psnr_compressed
    }
}

/// Per-frame quality of a compressed sequence and its enhancement.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub frames: Vec<FrameEval>,
}

impl EvalReport {
    fn mean(&self, f: impl Fn(&FrameEval) -> f64) -> f64 {
        self.frames.iter().map(f).sum::<f64>() / self.frames.len().max(1) as f64
    }

    pub fn mean_psnr_compressed(&self) -> f64 {
        self.mean(|f| f.psnr_compressed)
    }

    pub fn mean_psnr_enhanced(&self) -> f64 {
        self.mean(|f| f.psnr_enhanced)
    }

    pub fn mean_delta(&self) -> f64 {
        self.mean(FrameEval::delta)
    }

    /// `frame,psnr_compressed,psnr_enhanced,delta_psnr`, then a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,psnr_compressed,psnr_enhanced,delta_psnr\n");
        for f in &self.frames {
            let _ = writeln!(s, "{},{:.6},{:.6},{:.6}", f.index, f.psnr_compressed, f.psnr_enhanced, f.delta());
        }
        let _ = writeln!(
            s,
            "mean,{:.6},{:.6},{:.6}",
            self.mean_psnr_compressed(),
            self.mean_psnr_enhanced(),
            self.mean_delta()
        );
        s
    }
}

pub fn eval_sequence(raw: &[LumaFrame], compressed: &[LumaFrame], enhanced: &[LumaFrame]) -> Result<EvalReport> {
    if raw.len() != compressed.len() || raw.len() != enhanced.len() {
        return Err(Error::shape(format!(
            "sequence lengths differ: raw {}, compressed {}, enhanced {}",
            raw.len(),
            compressed.len(),
            enhanced.len()
        )));
    }
    let frames = raw
        .iter()
        .zip(compressed)
        .zip(enhanced)
        .enumerate()
        .map(|(index, ((r, c), e))| {
            Ok(FrameEval { index, psnr_compressed: psnr(r, c)?, psnr_enhanced: psnr(r, e)? })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport { frames })
}

/// Mean ΔPSNR of one model across test sets compressed at several QPs.
#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessReport {
    /// `(qp, frames evaluated, mean PSNR compressed, mean PSNR enhanced)`.
    pub rows: Vec<(u32, usize, f64, f64)>,
}

impl RobustnessReport {
    pub fn mean_delta(&self, qp: u32) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == qp).map(|r| r.3 - r.2)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("qp,frames,psnr_compressed,psnr_enhanced,delta_psnr\n");
        for &(qp, n, c, e) in &self.rows {
            let _ = writeln!(s, "{qp},{n},{c:.6},{e:.6},{:.6}", e - c);
        }
        s
    }
}

/// `label,bd_rate_percent` rows comparing each test curve to the anchor.
pub fn bd_rate_csv(anchor: &RdCurve, tests: &[(String, RdCurve)]) -> Result<String> {
    let mut s = String::from("label,bd_rate_percent\n");
    for (label, curve) in tests {
        let _ = writeln!(s, "{label},{:.6}", bd_rate(anchor, curve)?);
    }
    Ok(s)
}
