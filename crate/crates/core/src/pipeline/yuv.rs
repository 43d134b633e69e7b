use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::LumaFrame;

/// One planar 4:2:0 frame. Only luma is processed; the two chroma planes
/// are carried through untouched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct YuvFrame {
    pub luma: LumaFrame,
    /// U plane followed by V plane, each `(w/2)·(h/2)` bytes.
    pub chroma: Vec<u8>,
}

impl YuvFrame {
    /// Luma with neutral (128) chroma.
    pub fn from_luma(luma: LumaFrame) -> Self {
        let n = 2 * chroma_plane(luma.width(), luma.height());
        YuvFrame { luma, chroma: vec![128; n] }
    }

    pub fn with_luma(&self, luma: LumaFrame) -> Result<Self> {
        luma.expect_same_dims(&self.luma, "replacement luma")?;
        Ok(YuvFrame { luma, chroma: self.chroma.clone() })
    }
}

fn chroma_plane(w: usize, h: usize) -> usize {
    (w / 2) * (h / 2)
}

/// Bytes per frame of an 8-bit 4:2:0 file.
pub fn yuv420_frame_bytes(width: usize, height: usize) -> usize {
    width * height + 2 * chroma_plane(width, height)
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        return Err(Error::invalid(format!("4:2:0 needs positive even dimensions, got {width}x{height}")));
    }
    Ok(())
}

pub fn parse_yuv420(bytes: &[u8], width: usize, height: usize) -> Result<Vec<YuvFrame>> {
    check_dims(width, height)?;
    let fb = yuv420_frame_bytes(width, height);
    if bytes.is_empty() || bytes.len() % fb != 0 {
        let frames = bytes.len().div_ceil(fb).max(1);
        return Err(Error::Format(format!(
            "{} bytes is not a whole number of {width}x{height} 4:2:0 frames ({fb} bytes each); \
             expected {} bytes for {frames} frame(s), short by {}",
            bytes.len(),
            frames * fb,
            frames * fb - bytes.len()
        )));
    }
    bytes
        .chunks_exact(fb)
        .map(|c| {
            let luma = LumaFrame::new(width, height, c[..width * height].to_vec())?;
            Ok(YuvFrame { luma, chroma: c[width * height..].to_vec() })
        })
        .collect()
}

pub fn read_yuv420(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Vec<YuvFrame>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_yuv420(&bytes, width, height)
}

pub fn encode_yuv420(frames: &[YuvFrame]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for f in frames {
        let (w, h) = f.luma.dims();
        check_dims(w, h)?;
        if f.chroma.len() != 2 * chroma_plane(w, h) {
            return Err(Error::shape(format!("chroma of {w}x{h} frame has {} bytes", f.chroma.len())));
        }
        out.extend_from_slice(f.luma.samples());
        out.extend_from_slice(&f.chroma);
    }
    Ok(out)
}

pub fn write_yuv420(frames: &[YuvFrame], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_yuv420(frames)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_small_frames() {
        let bytes: Vec<u8> = (0..768).map(|i| (i % 251) as u8).collect();
        let frames = parse_yuv420(&bytes, 16, 16).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(encode_yuv420(&frames).unwrap(), bytes);
    }

    #[test]
    fn truncated_names_deficit() {
        let err = parse_yuv420(&[0u8; 700], 16, 16).unwrap_err().to_string();
        assert!(err.contains("short by 68"), "{err}");
        assert!(parse_yuv420(&[0u8; 384], 15, 16).is_err());
    }
}
