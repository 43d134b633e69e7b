use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{stack, PatchSample};
use crate::error::{Error, Result};
use crate::mganet::{forward, loss, save_checkpoint, LossBreakdown, MganetConfig, Params};
use crate::tensor::{Adam, AdamConfig, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: MganetConfig,
    pub patch_size: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// The learning rate is multiplied by `lr_decay` once this many epochs
    /// have completed.
    pub lr_decay_epoch: usize,
    pub lr_decay: f64,
    pub epochs: usize,
    /// Patches drawn from the training data per epoch.
    pub samples_per_epoch: usize,
    pub seed: u64,
    pub qp: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: MganetConfig::default(),
            patch_size: 96,
            batch_size: 8,
            lr: 1e-4,
            lr_decay_epoch: 15,
            lr_decay: 0.1,
            epochs: 30,
            samples_per_epoch: 64,
            seed: 0,
            qp: 37,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.patch_size == 0 || self.patch_size % 16 != 0 {
            return Err(Error::invalid(format!("patch size {} must be a positive multiple of 16", self.patch_size)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() || !(self.lr_decay > 0.0) {
            return Err(Error::invalid("learning rate and decay must be finite, lr >= 0, decay > 0"));
        }
        if self.qp > 51 {
            return Err(Error::invalid(format!("qp {} outside 0..=51", self.qp)));
        }
        Ok(())
    }

    /// Learning rate in effect during (0-based) `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_decay_epoch {
            self.lr * self.lr_decay
        } else {
            self.lr
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("epoch,step,lr,total,final,h1,h2,h3\n");
    for r in rows {
        let l = &r.loss;
        let _ = writeln!(
            s,
            "{},{},{:e},{:.9},{:.9},{:.9},{:.9},{:.9}",
            r.epoch, r.step, r.lr, l.total, l.final_term, l.intermediate[0], l.intermediate[1], l.intermediate[2]
        );
    }
    s
}

/// Loss of `params` on a batch, without updating anything.
pub fn evaluate_loss(params: &Params<f32>, batch: &[&PatchSample]) -> Result<LossBreakdown> {
    let (w, g, t) = stack(batch)?;
    let mut tape = Tape::new();
    let b = params.bind(&mut tape, false);
    let (w, t) = (tape.constant(w), tape.constant(t));
    let g = g.filter(|_| params.config.guidance).map(|g| tape.constant(g));
    let out = forward(&mut tape, &b, &params.config, w, g)?;
    Ok(loss(&mut tape, &out, t)?.1)
}

/// One optimiser update on `batch`; returns the loss before the update.
pub fn train_step(params: &mut Params<f32>, adam: &mut Adam<f32>, batch: &[&PatchSample]) -> Result<LossBreakdown> {
    let (w, g, t) = stack(batch)?;
    let mut tape = Tape::new();
    let b = params.bind(&mut tape, true);
    let (w, t) = (tape.constant(w), tape.constant(t));
    let g = g.filter(|_| params.config.guidance).map(|g| tape.constant(g));
    let out = forward(&mut tape, &b, &params.config, w, g)?;
    let (total, breakdown) = loss(&mut tape, &out, t)?;
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite(format!("training loss {}", breakdown.total)));
    }
    let mut grads = tape.backward(total)?;
    let gs: Vec<_> = b.vars.iter().map(|&v| grads.take(v)).collect();
    let names = params.names().to_vec();
    adam.step(params.tensors_mut(), &gs, &names)?;
    Ok(breakdown)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: Params<f32>,
    pub log: Vec<LogRow>,
}

/// Trains from a fresh initialisation. `draw(epoch)` supplies that epoch's
/// samples; they are shuffled with the configured seed and split into
/// batches. When `checkpoint_dir` is set, `epoch_NNN.vqec` and `last.vqec`
/// are written after every epoch. A non-finite loss aborts with the last
/// completed epoch's checkpoint left in place.
pub fn train(
    cfg: &TrainConfig,
    mut draw: impl FnMut(usize) -> Result<Vec<PatchSample>>,
    checkpoint_dir: Option<&PathBuf>,
    mut on_step: impl FnMut(&LogRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = Params::<f32>::init(cfg.model, cfg.seed)?;
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..Default::default() }, &params.shapes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c);
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        adam.set_lr(lr);
        let samples = draw(epoch)?;
        if samples.is_empty() {
            return Err(Error::invalid("no training samples"));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PatchSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let loss = train_step(&mut params, &mut adam, &batch).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!(
                    "{m} at epoch {epoch} step {step}; last good checkpoint is from epoch {}",
                    epoch.saturating_sub(1)
                )),
                other => other,
            })?;
            let row = LogRow { epoch, step, lr, loss };
            on_step(&row);
            log.push(row);
            step += 1;
        }
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(&params, dir.join(format!("epoch_{epoch:03}.vqec")))?;
            save_checkpoint(&params, dir.join("last.vqec"))?;
        }
    }
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::data::{sample_patches, FramePairSet};
    use crate::pipeline::synth::synth_clip;

    fn tiny() -> (TrainConfig, Vec<PatchSample>) {
        let cfg = TrainConfig {
            model: MganetConfig { width_div: 16, ..Default::default() },
            patch_size: 16,
            batch_size: 2,
            epochs: 2,
            lr_decay_epoch: 1,
            ..Default::default()
        };
        let set = FramePairSet::simulate(synth_clip(32, 32, 3, 1), 37).unwrap();
        (cfg, sample_patches(&set, 1, 16, 4, 2).unwrap())
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let (mut cfg, samples) = tiny();
        cfg.lr = 0.0;
        cfg.epochs = 3;
        let one = vec![samples[0].clone()];
        let out = train(&cfg, |_| Ok(one.clone()), None, |_| {}).unwrap();
        assert_eq!(out.params, Params::<f32>::init(cfg.model, cfg.seed).unwrap());
        let first = out.log[0].loss.total;
        assert!(out.log.iter().all(|r| r.loss.total == first));
    }

    #[test]
    fn schedule_and_determinism() {
        let (cfg, samples) = tiny();
        let a = train(&cfg, |_| Ok(samples.clone()), None, |_| {}).unwrap();
        let b = train(&cfg, |_| Ok(samples.clone()), None, |_| {}).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log[0].lr, 1e-4);
        assert!((a.log.last().unwrap().lr - 1e-5).abs() < 1e-18);
        assert!(log_csv(&a.log).starts_with("epoch,step,lr,total"));
    }
}
