use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::simulate;
use crate::error::{Error, Result};
use crate::frame::LumaFrame;
use crate::partition::{mean_map, TuPartition};
use crate::tensor::Tensor;

/// Aligned raw and compressed frames of one sequence, with optional TU
/// partitions of the compressed frames.
#[derive(Clone, Debug)]
pub struct FramePairSet {
    raw: Vec<LumaFrame>,
    compressed: Vec<LumaFrame>,
    partitions: Option<Vec<TuPartition>>,
    pub qp: Option<u32>,
}

impl FramePairSet {
    pub fn new(
        raw: Vec<LumaFrame>,
        compressed: Vec<LumaFrame>,
        partitions: Option<Vec<TuPartition>>,
        qp: Option<u32>,
    ) -> Result<Self> {
        if raw.len() != compressed.len() || raw.is_empty() {
            return Err(Error::shape(format!(
                "need equal non-zero frame counts, got raw {} and compressed {}",
                raw.len(),
                compressed.len()
            )));
        }
        let dims = raw[0].dims();
        if raw.iter().chain(&compressed).any(|f| f.dims() != dims) {
            return Err(Error::shape("frames differ in size"));
        }
        if let Some(parts) = &partitions {
            if parts.len() != raw.len() {
                return Err(Error::shape(format!("{} partitions for {} frames", parts.len(), raw.len())));
            }
            for (i, p) in parts.iter().enumerate() {
                if (p.width, p.height) != dims {
                    return Err(Error::shape(format!("partition of frame {i} is {}x{}", p.width, p.height)));
                }
                p.validate().map_err(|v| Error::Invariant(format!("frame {i}: {v}")))?;
            }
        }
        Ok(FramePairSet { raw, compressed, partitions, qp })
    }

    /// Compresses every frame of `raw` with the simulator at `qp`.
    pub fn simulate(raw: Vec<LumaFrame>, qp: u32) -> Result<Self> {
        let mut compressed = Vec::with_capacity(raw.len());
        let mut parts = Vec::with_capacity(raw.len());
        for f in &raw {
            let (d, p) = simulate(f, qp)?;
            compressed.push(d);
            parts.push(p);
        }
        FramePairSet::new(raw, compressed, Some(parts), Some(qp))
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.raw[0].dims()
    }

    pub fn raw(&self) -> &[LumaFrame] {
        &self.raw
    }

    pub fn compressed(&self) -> &[LumaFrame] {
        &self.compressed
    }

    pub fn partitions(&self) -> Option<&[TuPartition]> {
        self.partitions.as_deref()
    }

    /// Per-TU mean map of compressed frame `t`, if partitions are known.
    pub fn guide_map(&self, t: usize) -> Result<Option<LumaFrame>> {
        self.partitions.as_ref().map(|p| mean_map(&self.compressed[t], &p[t])).transpose()
    }
}

/// Index of the frame `offset` steps from `t`, repeating the end frames.
pub fn clamp_index(t: usize, offset: isize, len: usize) -> usize {
    (t as isize + offset).clamp(0, len as isize - 1) as usize
}

/// One co-located training example.
#[derive(Clone, Debug)]
pub struct PatchSample {
    pub frame: usize,
    pub x: usize,
    pub y: usize,
    /// `1 × (2T+1) × p × p` compressed patches, centre frame at index `T`.
    pub window: Tensor<f32>,
    pub guide: Option<Tensor<f32>>,
    pub truth: Tensor<f32>,
}

/// Draws `count` patches uniformly over frames and positions.
pub fn sample_patches(
    set: &FramePairSet,
    radius: usize,
    patch: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<PatchSample>> {
    let (w, h) = set.dims();
    if patch == 0 || patch > w || patch > h {
        return Err(Error::invalid(format!("patch {patch} does not fit a {w}x{h} frame")));
    }
    if set.len() < 2 * radius + 1 {
        return Err(Error::invalid(format!(
            "sequence of {} frames is shorter than the {}-frame window",
            set.len(),
            2 * radius + 1
        )));
    }
    let guides: Option<Vec<LumaFrame>> = match set.partitions() {
        Some(_) => Some((0..set.len()).map(|t| set.guide_map(t).map(|g| g.expect("partitions"))).collect::<Result<_>>()?),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let t = rng.gen_range(0..set.len());
        let x = rng.gen_range(0..=w - patch);
        let y = rng.gen_range(0..=h - patch);
        let crops: Vec<Tensor<f32>> = (-(radius as isize)..=radius as isize)
            .map(|o| Ok(set.compressed()[clamp_index(t, o, set.len())].crop(x, y, patch, patch)?.to_tensor()))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor<f32>> = crops.iter().collect();
        out.push(PatchSample {
            frame: t,
            x,
            y,
            window: Tensor::concat_channels(&refs)?,
            guide: guides.as_ref().map(|g| g[t].crop(x, y, patch, patch).map(|c| c.to_tensor())).transpose()?,
            truth: set.raw()[t].crop(x, y, patch, patch)?.to_tensor(),
        });
    }
    Ok(out)
}

/// Batches samples along the first axis: `(window, guide, truth)`.
pub fn stack(samples: &[&PatchSample]) -> Result<(Tensor<f32>, Option<Tensor<f32>>, Tensor<f32>)> {
    if samples.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let windows: Vec<&Tensor<f32>> = samples.iter().map(|s| &s.window).collect();
    let truths: Vec<&Tensor<f32>> = samples.iter().map(|s| &s.truth).collect();
    let guide = if samples.iter().all(|s| s.guide.is_some()) {
        let g: Vec<&Tensor<f32>> = samples.iter().map(|s| s.guide.as_ref().expect("checked")).collect();
        Some(Tensor::concat_batch(&g)?)
    } else if samples.iter().any(|s| s.guide.is_some()) {
        return Err(Error::invalid("batch mixes samples with and without guide maps"));
    } else {
        None
    };
    Ok((Tensor::concat_batch(&windows)?, guide, Tensor::concat_batch(&truths)?))
}
