use super::{forward, MganetConfig, Params, SPATIAL_ALIGN};
use crate::error::{Error, Result};
use crate::frame::{quantize_unit, LumaFrame};
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Debug)]
pub struct EnhanceOutput {
    /// Rounded and clipped to 8 bits.
    pub frame: LumaFrame,
    /// Unclipped model output in `[0, 1]` units, `1×1×H×W`.
    pub values: Tensor<f32>,
}

/// Context in pixels each tile carries on every side; enough to cover the
/// receptive field and aligned to the stride grid.
pub fn tile_margin(cfg: &MganetConfig) -> usize {
    cfg.receptive_radius().div_ceil(SPATIAL_ALIGN) * SPATIAL_ALIGN
}

fn check_inputs(cfg: &MganetConfig, frames: &[&LumaFrame], guide: Option<&LumaFrame>) -> Result<(usize, usize)> {
    if frames.len() != cfg.window() {
        return Err(Error::shape(format!("model expects {} frames, got {}", cfg.window(), frames.len())));
    }
    let dims = frames[cfg.radius].dims();
    if frames.iter().any(|f| f.dims() != dims) || guide.is_some_and(|g| g.dims() != dims) {
        return Err(Error::shape("window frames and guide map differ in size"));
    }
    if cfg.guidance && guide.is_none() {
        return Err(Error::invalid("model uses guidance but no guide map was given"));
    }
    if dims.0 == 0 || dims.1 == 0 {
        return Err(Error::shape("empty frame"));
    }
    Ok(dims)
}

/// Window and guide as tensors, edge-padded to the stride grid.
fn prepare(frames: &[&LumaFrame], guide: Option<&LumaFrame>, dims: (usize, usize)) -> Result<(Tensor<f32>, Option<Tensor<f32>>)> {
    let pw = dims.0.div_ceil(SPATIAL_ALIGN) * SPATIAL_ALIGN;
    let ph = dims.1.div_ceil(SPATIAL_ALIGN) * SPATIAL_ALIGN;
    let pad = |f: &LumaFrame| if f.dims() == (pw, ph) { f.to_tensor() } else { f.pad_replicate(pw, ph).to_tensor() };
    let ts: Vec<Tensor<f32>> = frames.iter().map(|f| pad(f)).collect();
    let refs: Vec<&Tensor<f32>> = ts.iter().collect();
    Ok((Tensor::concat_channels(&refs)?, guide.map(pad)))
}

fn run(params: &Params<f32>, window: Tensor<f32>, guide: Option<Tensor<f32>>) -> Result<Tensor<f32>> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape, false);
    let w = tape.constant(window);
    let g = guide.map(|g| tape.constant(g));
    let out = forward(&mut tape, &b, &params.config, w, g)?;
    Ok(tape.value(out.enhanced).clone())
}

fn finish(values: Tensor<f32>, dims: (usize, usize)) -> Result<EnhanceOutput> {
    let values = if (values.width(), values.height()) == dims { values } else { values.crop(0, 0, dims.1, dims.0)? };
    if !values.all_finite() {
        return Err(Error::NonFinite("model output".into()));
    }
    let samples = values.data().iter().map(|&v| quantize_unit(v as f64)).collect();
    Ok(EnhanceOutput { frame: LumaFrame::new(dims.0, dims.1, samples)?, values })
}

/// Enhances the centre frame of `frames` in one pass.
pub fn enhance_window(params: &Params<f32>, frames: &[&LumaFrame], guide: Option<&LumaFrame>) -> Result<EnhanceOutput> {
    let dims = check_inputs(&params.config, frames, guide)?;
    let (w, g) = prepare(frames, guide, dims)?;
    finish(run(params, w, g)?, dims)
}

/// Same result as [`enhance_window`], computed on `tile × tile` blocks
/// (plus [`tile_margin`] of context) to bound memory.
pub fn enhance_window_tiled(
    params: &Params<f32>,
    frames: &[&LumaFrame],
    guide: Option<&LumaFrame>,
    tile: usize,
) -> Result<EnhanceOutput> {
    if tile == 0 || tile % SPATIAL_ALIGN != 0 {
        return Err(Error::invalid(format!("tile size {tile} must be a positive multiple of {SPATIAL_ALIGN}")));
    }
    let dims = check_inputs(&params.config, frames, guide)?;
    let (window, g) = prepare(frames, guide, dims)?;
    let (ph, pw) = (window.height(), window.width());
    let margin = tile_margin(&params.config);
    let mut out = Tensor::<f32>::zeros([1, 1, ph, pw]);
    for ty in (0..ph).step_by(tile) {
        for tx in (0..pw).step_by(tile) {
            let (y0, x0) = (ty.saturating_sub(margin), tx.saturating_sub(margin));
            let (y1, x1) = ((ty + tile + margin).min(ph), (tx + tile + margin).min(pw));
            let sub_w = window.crop(y0, x0, y1 - y0, x1 - x0)?;
            let sub_g = g.as_ref().map(|g| g.crop(y0, x0, y1 - y0, x1 - x0)).transpose()?;
            let res = run(params, sub_w, sub_g)?;
            for y in ty..(ty + tile).min(ph) {
                for x in tx..(tx + tile).min(pw) {
                    out.set(0, 0, y, x, res.at(0, 0, y - y0, x - x0));
                }
            }
        }
    }
    finish(out, dims)
}
