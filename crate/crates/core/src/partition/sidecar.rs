//! Text sidecar carrying per-frame TU partitions:
//!
//! ```text
//! # vqe-tu v1
//! dims <width> <height>
//! frame <index>
//! <x> <y> <size>
//! ```
//!
//! Blank lines and further `#` comments are ignored. Frames must be listed in
//! display order starting at 0.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Tu, TuPartition};
use crate::error::{Error, Result};

pub const HEADER: &str = "# vqe-tu v1";

/// All partitions of one sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TuSequence {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<TuPartition>,
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { line, reason: reason.into() }
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| parse_err(line, format!("{what}: expected a non-negative integer, got {tok:?}")))
}

struct OpenFrame {
    header_line: usize,
    tus: Vec<Tu>,
    lines: Vec<usize>,
}

fn close_frame(open: OpenFrame, width: usize, height: usize) -> Result<TuPartition> {
    let p = TuPartition { width, height, tus: open.tus };
    match p.validate() {
        Ok(()) => Ok(p),
        Err(v) => {
            let line = v.tu().map(|i| open.lines[i]).unwrap_or(open.header_line);
            Err(parse_err(line, v.to_string()))
        }
    }
}

pub fn parse_tu_str(text: &str) -> Result<TuSequence> {
    let mut dims: Option<(usize, usize)> = None;
    let mut frames = Vec::new();
    let mut open: Option<OpenFrame> = None;
    let mut seen_header = false;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if !seen_header {
            if line.is_empty() {
                continue;
            }
            if line != HEADER {
                return Err(parse_err(lineno, format!("expected header {HEADER:?}")));
            }
            seen_header = true;
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "dims" => {
                if dims.is_some() {
                    return Err(parse_err(lineno, "duplicate dims line"));
                }
                if toks.len() != 3 {
                    return Err(parse_err(lineno, "dims takes <width> <height>"));
                }
                let w = parse_usize(toks[1], lineno, "width")?;
                let h = parse_usize(toks[2], lineno, "height")?;
                if w == 0 || h == 0 {
                    return Err(parse_err(lineno, "frame dimensions must be positive"));
                }
                dims = Some((w, h));
            }
            "frame" => {
                let (w, h) = dims.ok_or_else(|| parse_err(lineno, "frame before dims"))?;
                if toks.len() != 2 {
                    return Err(parse_err(lineno, "frame takes <index>"));
                }
                let idx = parse_usize(toks[1], lineno, "frame index")?;
                if let Some(prev) = open.take() {
                    frames.push(close_frame(prev, w, h)?);
                }
                if idx != frames.len() {
                    return Err(parse_err(
                        lineno,
                        format!("frame {idx} out of order, expected {}", frames.len()),
                    ));
                }
                open = Some(OpenFrame { header_line: lineno, tus: Vec::new(), lines: Vec::new() });
            }
            _ => {
                let cur = open.as_mut().ok_or_else(|| parse_err(lineno, "TU line before any frame"))?;
                if toks.len() != 3 {
                    return Err(parse_err(lineno, format!("malformed TU line {line:?}")));
                }
                let x = parse_usize(toks[0], lineno, "x")?;
                let y = parse_usize(toks[1], lineno, "y")?;
                let size = parse_usize(toks[2], lineno, "size")?;
                cur.tus.push(Tu::new(x, y, size));
                cur.lines.push(lineno);
            }
        }
    }
    if !seen_header {
        return Err(parse_err(1, format!("missing header {HEADER:?}")));
    }
    let (width, height) = dims.ok_or_else(|| parse_err(text.lines().count().max(1), "missing dims line"))?;
    if let Some(last) = open.take() {
        frames.push(close_frame(last, width, height)?);
    }
    Ok(TuSequence { width, height, frames })
}

pub fn parse_tu_file(path: impl AsRef<Path>) -> Result<TuSequence> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tu_str(&text)
}

pub fn write_tu_string(seq: &TuSequence) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "dims {} {}", seq.width, seq.height);
    for (i, p) in seq.frames.iter().enumerate() {
        let _ = writeln!(s, "frame {i}");
        for tu in &p.tus {
            let _ = writeln!(s, "{} {} {}", tu.x, tu.y, tu.size);
        }
    }
    s
}

pub fn write_tu_file(seq: &TuSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_tu_string(seq)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_ctu_split_into_four() {
        let text = "# vqe-tu v1\ndims 64 64\nframe 0\n0 0 32\n32 0 32\n0 32 32\n32 32 32\n";
        let seq = parse_tu_str(text).unwrap();
        assert_eq!(seq.frames.len(), 1);
        assert_eq!(seq.frames[0].tus.len(), 4);
        assert!(seq.frames[0].tus.iter().all(|t| t.depth() == 1));
        assert_eq!(write_tu_string(&seq), text);
    }

    #[test]
    fn overlap_names_the_line() {
        let text = "# vqe-tu v1\ndims 8 8\nframe 0\n0 0 8\n4 4 4\n";
        match parse_tu_str(text) {
            Err(Error::Parse { line, reason }) => {
                assert_eq!(line, 5);
                assert!(reason.contains("overlap"), "{reason}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn gap_points_at_frame_header() {
        let text = "# vqe-tu v1\ndims 8 4\nframe 0\n0 0 4\n";
        match parse_tu_str(text) {
            Err(Error::Parse { line, reason }) => {
                assert_eq!(line, 3);
                assert_eq!(reason, "coverage gap at (4,0)");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_lines() {
        for (text, line) in [
            ("dims 4 4\n", 1),
            ("# vqe-tu v1\nframe 0\n", 2),
            ("# vqe-tu v1\ndims 4 4\n0 0 4\n", 3),
            ("# vqe-tu v1\ndims 4 4\nframe 0\n0 0\n", 4),
            ("# vqe-tu v1\ndims 4 4\nframe 1\n", 3),
            ("# vqe-tu v1\ndims 4 4\nframe 0\n0 x 4\n", 4),
        ] {
            match parse_tu_str(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
