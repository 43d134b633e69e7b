//! Data handling, training, sequence enhancement and evaluation.

pub mod config;
pub mod data;
pub mod metrics;
pub mod pgm;
pub mod synth;
pub mod train;
pub mod yuv;

pub use config::{parse_train_config, read_train_config};
pub use data::{clamp_index, sample_patches, stack, FramePairSet, PatchSample};
pub use metrics::{eval_sequence, psnr, EvalReport, FrameEval, RobustnessReport, PSNR_CAP};
pub use synth::synth_clip;
pub use train::{evaluate_loss, log_csv, train, train_step, LogRow, TrainConfig, TrainOutcome};
pub use yuv::{read_yuv420, write_yuv420, YuvFrame};

use crate::error::{Error, Result};
use crate::frame::LumaFrame;
use crate::mganet::{enhance_window, enhance_window_tiled, Params};
use crate::partition::{mean_map, TuPartition};

/// Enhances every frame of `compressed` with a sliding window of `2T+1`
/// frames (end frames repeated). Guide maps are built from `partitions`;
/// they are required when the model uses guidance. `tile` bounds memory.
pub fn enhance_sequence(
    params: &Params<f32>,
    compressed: &[LumaFrame],
    partitions: Option<&[TuPartition]>,
    tile: Option<usize>,
) -> Result<Vec<LumaFrame>> {
    let cfg = params.config;
    if compressed.is_empty() {
        return Err(Error::invalid("empty sequence"));
    }
    if cfg.guidance && partitions.is_none() {
        return Err(Error::invalid("model uses guidance; TU partitions are required"));
    }
    if let Some(p) = partitions {
        if p.len() != compressed.len() {
            return Err(Error::shape(format!("{} partitions for {} frames", p.len(), compressed.len())));
        }
    }
    let r = cfg.radius as isize;
    (0..compressed.len())
        .map(|t| {
            let window: Vec<&LumaFrame> =
                (-r..=r).map(|o| &compressed[clamp_index(t, o, compressed.len())]).collect();
            let guide = match (cfg.guidance, partitions) {
                (true, Some(p)) => Some(mean_map(&compressed[t], &p[t])?),
                _ => None,
            };
            let out = match tile {
                Some(s) => enhance_window_tiled(params, &window, guide.as_ref(), s)?,
                None => enhance_window(params, &window, guide.as_ref())?,
            };
            Ok(out.frame)
        })
        .collect()
}

/// Compresses each raw clip at every QP with the simulator, enhances it and
/// averages PSNR over all frames per QP.
pub fn robustness_sweep(
    params: &Params<f32>,
    clips: &[Vec<LumaFrame>],
    qps: &[u32],
    tile: Option<usize>,
) -> Result<RobustnessReport> {
    let mut rows = Vec::with_capacity(qps.len());
    for &qp in qps {
        let (mut n, mut c, mut e) = (0usize, 0.0, 0.0);
        for clip in clips {
            let set = FramePairSet::simulate(clip.clone(), qp)?;
            let enhanced = enhance_sequence(params, set.compressed(), set.partitions(), tile)?;
            let report = eval_sequence(set.raw(), set.compressed(), &enhanced)?;
            for f in &report.frames {
                c += f.psnr_compressed;
                e += f.psnr_enhanced;
            }
            n += report.frames.len();
        }
        let d = n.max(1) as f64;
        rows.push((qp, n, c / d, e / d));
    }
    Ok(RobustnessReport { rows })
}
