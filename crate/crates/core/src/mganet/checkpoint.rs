use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{MganetConfig, Params};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VQEC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Layout, all integers little-endian:
///
/// ```text
/// magic "VQEC" | u32 version | u32 len | config echo (UTF-8) | u32 count
/// count × { u32 len | name (UTF-8) | 4 × u32 shape | f32 × numel }
/// ```
pub fn write_checkpoint(params: &Params<f32>, w: &mut impl Write) -> std::io::Result<()> {
    let echo = params.config.to_echo();
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(echo.len() as u32).to_le_bytes())?;
    w.write_all(echo.as_bytes())?;
    w.write_all(&(params.names().len() as u32).to_le_bytes())?;
    for (name, t) in params.names().iter().zip(params.tensors()) {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        for d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("checkpoint truncated reading {what} at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        String::from_utf8(self.take(n, what)?.to_vec())
            .map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Params<f32>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::Format(format!("reading checkpoint: {e}")))?;
    let mut rd = Reader { buf: &buf, pos: 0 };
    if rd.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = rd.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let config = MganetConfig::from_echo(&rd.string("config")?)?;
    let count = rd.u32("record count")? as usize;
    let mut names = Vec::with_capacity(count.min(4096));
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name = rd.string("parameter name")?;
        let mut shape = [0usize; 4];
        for d in &mut shape {
            *d = rd.u32("shape")? as usize;
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| {
            Error::Format(format!("parameter {name} shape overflows"))
        })?;
        let bytes = rd.take(n.checked_mul(4).unwrap_or(usize::MAX), &name)?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        names.push(name);
        tensors.push(Tensor::new(shape, data)?);
    }
    if rd.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes after last record", buf.len() - rd.pos)));
    }
    Params::from_parts(config, names, tensors)
}

pub fn save_checkpoint(params: &Params<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf).expect("writing to memory");
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Params<f32>> {
    let path = path.as_ref();
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut f)
}
