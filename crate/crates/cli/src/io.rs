use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use vqe_core::deblock::RdCurve;
use vqe_core::pipeline::{read_yuv420, write_yuv420, YuvFrame};
use vqe_core::LumaFrame;

use crate::commands::UsageError;
use crate::Common;

pub fn dims(c: &Common) -> Result<(usize, usize)> {
    match (c.width, c.height) {
        (Some(w), Some(h)) => Ok((w, h)),
        _ => Err(UsageError("--width and --height are required for YUV input".into()).into()),
    }
}

/// Frames `[start, start + count)` of a YUV file; `count` defaults to the rest.
pub fn read_range(path: &Path, w: usize, h: usize, start: usize, count: Option<usize>) -> Result<Vec<YuvFrame>> {
    let all = read_yuv420(path, w, h)?;
    let end = count.map_or(all.len(), |n| start + n);
    if start >= all.len() || end > all.len() {
        return Err(UsageError(format!(
            "{}: frames {start}..{end} requested, file holds {}",
            path.display(),
            all.len()
        ))
        .into());
    }
    Ok(all[start..end].to_vec())
}

pub fn lumas(frames: &[YuvFrame]) -> Vec<LumaFrame> {
    frames.iter().map(|f| f.luma.clone()).collect()
}

pub fn write_yuv(frames: &[YuvFrame], path: &Path) -> Result<()> {
    write_yuv420(frames, path)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `rate,psnr` rows; a header line and `#` comments are skipped.
pub fn read_rd_csv(path: &Path) -> Result<RdCurve> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (Some(r), Some(q)) = (cols.next(), cols.next()) else {
            return Err(vqe_core::Error::Parse { line: i + 1, reason: format!("expected `rate,psnr`, found {line:?}") }.into());
        };
        match (r.parse::<f64>(), q.parse::<f64>()) {
            (Ok(r), Ok(q)) => points.push((r, q)),
            _ if points.is_empty() && i == 0 => continue,
            _ => {
                return Err(vqe_core::Error::Parse { line: i + 1, reason: format!("non-numeric RD point {line:?}") }.into())
            }
        }
    }
    RdCurve::new(points).with_context(|| format!("RD curve {}", path.display()))
}
