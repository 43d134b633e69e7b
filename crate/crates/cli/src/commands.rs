use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use vqe_core::codec::{noise_std_map, simulate, temporal_noise_diff, NoiseMap};
use vqe_core::deblock::{agreement, bd_rate, hevc_rule_decide, oracle_decide, sse, FilterMode};
use vqe_core::mganet::{load_checkpoint, model_grad_check, Fusion, MganetConfig, MODEL_CHECK_FLOOR};
use vqe_core::partition::{guided_maps, parse_tu_file, write_tu_file, TuSequence};
use vqe_core::pipeline::metrics::bd_rate_csv;
use vqe_core::pipeline::pgm::write_pgm;
use vqe_core::pipeline::{
    enhance_sequence, eval_sequence, log_csv, read_train_config, robustness_sweep, sample_patches, synth_clip,
    FramePairSet, TrainConfig, YuvFrame,
};
use vqe_core::LumaFrame;

use crate::io::{dims, lumas, read_range, read_rd_csv, write_text, write_yuv};
use crate::Common;

/// Bad or missing command-line input not caught by the parser.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_qp(c: &Common) -> Result<u32> {
    let qp = c.qp.ok_or_else(|| usage("--qp is required"))?;
    if qp > 51 {
        return Err(usage(format!("--qp {qp} outside 0..=51")));
    }
    Ok(qp)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_tu(path: &Path, w: usize, h: usize, start: usize, count: usize) -> Result<TuSequence> {
    let seq = parse_tu_file(path)?;
    if (seq.width, seq.height) != (w, h) {
        return Err(vqe_core::Error::shape(format!(
            "sidecar {} is {}x{}, video is {w}x{h}",
            path.display(),
            seq.width,
            seq.height
        ))
        .into());
    }
    if seq.frames.len() < start + count {
        return Err(vqe_core::Error::shape(format!(
            "sidecar {} has {} frames, need {}",
            path.display(),
            seq.frames.len(),
            start + count
        ))
        .into());
    }
    Ok(TuSequence { width: w, height: h, frames: seq.frames[start..start + count].to_vec() })
}

fn write_noise(map: &NoiseMap, path: &Path) -> Result<()> {
    let (img, lo, hi) = map.to_u8_scaled();
    write_pgm(&img, path)?;
    let scale = path.with_extension("scale.txt");
    write_text(
        &scale,
        &format!("# value = min + sample / 255 * (max - min)\nmin = {lo:.17e}\nmax = {hi:.17e}\n"),
    )
}

#[derive(Args, Debug)]
pub struct AnalyzeNoise {
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    compressed: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Window radius; windows are (2r+1)² and clipped at borders
    #[arg(long, default_value_t = 2)]
    radius: usize,
    /// Also map |noise(t) − noise(t+k)| for this frame offset
    #[arg(long)]
    offset: Option<usize>,
    /// Output PGM; the min/max scaling goes to `<name>.scale.txt`
    #[arg(long)]
    output: PathBuf,
}

pub fn analyze_noise(c: &Common, a: AnalyzeNoise) -> Result<()> {
    let (w, h) = dims(c)?;
    let count = a.offset.unwrap_or(0) + 1;
    let raw = read_range(&a.raw, w, h, a.frame, Some(count))?;
    let comp = read_range(&a.compressed, w, h, a.frame, Some(count))?;
    let noise = noise_std_map(&comp[0].luma, &raw[0].luma, a.radius)?;
    write_noise(&noise, &a.output)?;
    println!("frame {}: mean std {:.4}, max std {:.4}", a.frame, noise.mean(), noise.max());
    if let Some(k) = a.offset {
        let later = noise_std_map(&comp[k].luma, &raw[k].luma, a.radius)?;
        let diff = temporal_noise_diff(&noise, &later)?;
        let stem = a.output.file_stem().and_then(|s| s.to_str()).unwrap_or("noise");
        let path = a.output.with_file_name(format!("{stem}_diff{k}.pgm"));
        write_noise(&diff, &path)?;
        println!("frames {} and {}: mean |difference| {:.4} -> {}", a.frame, a.frame + k, diff.mean(), path.display());
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct GenGuidedMap {
    /// Compressed YUV (its luma fills the mean map)
    #[arg(long)]
    compressed: PathBuf,
    #[arg(long)]
    tu: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Writes depth.pgm, boundary.pgm and mean.pgm here
    #[arg(long)]
    out_dir: PathBuf,
    /// Stretch depth (1..4) and boundary (0/1) to the full 8-bit range
    #[arg(long)]
    stretch: bool,
}

pub fn gen_guided_map(c: &Common, a: GenGuidedMap) -> Result<()> {
    let seq = parse_tu_file(&a.tu)?;
    let (w, h) = (c.width.unwrap_or(seq.width), c.height.unwrap_or(seq.height));
    let tus = read_tu(&a.tu, w, h, a.frame, 1)?;
    let comp = read_range(&a.compressed, w, h, a.frame, Some(1))?;
    let maps = guided_maps(&comp[0].luma, &tus.frames[0])?;
    let stretch = |f: &LumaFrame, k: u8| LumaFrame::from_fn(f.width(), f.height(), |x, y| f.get(x, y).saturating_mul(k));
    let (depth, boundary) =
        if a.stretch { (stretch(&maps.depth, 63), stretch(&maps.boundary, 255)) } else { (maps.depth, maps.boundary) };
    create_dir(&a.out_dir)?;
    write_pgm(&depth, a.out_dir.join("depth.pgm"))?;
    write_pgm(&boundary, a.out_dir.join("boundary.pgm"))?;
    write_pgm(&maps.mean, a.out_dir.join("mean.pgm"))?;
    println!("frame {}: {} TUs -> {}", a.frame, tus.frames[0].tus.len(), a.out_dir.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct DeblockOracle {
    #[arg(long)]
    raw: PathBuf,
    /// Decoded (unfiltered) YUV
    #[arg(long)]
    decoded: PathBuf,
    #[arg(long, default_value_t = 0)]
    start_frame: usize,
    #[arg(long)]
    frames: Option<usize>,
    /// Mode map CSV of all processed frames
    #[arg(long)]
    modes: Option<PathBuf>,
    /// YUV of oracle-filtered frames
    #[arg(long)]
    filtered: Option<PathBuf>,
    /// Anchor RD curve (`rate,psnr` CSV) for a BD-rate report
    #[arg(long, requires = "rd_test")]
    rd_anchor: Option<PathBuf>,
    /// Test RD curve(s) compared against the anchor
    #[arg(long, requires = "rd_anchor")]
    rd_test: Vec<PathBuf>,
    #[arg(long)]
    bd_output: Option<PathBuf>,
}

pub fn deblock_oracle(c: &Common, a: DeblockOracle) -> Result<()> {
    let (w, h) = dims(c)?;
    let raw = read_range(&a.raw, w, h, a.start_frame, a.frames)?;
    let dec = read_range(&a.decoded, w, h, a.start_frame, Some(raw.len()))?;
    let mut csv = String::from("frame,orientation,boundary,segment,mode\n");
    let mut filtered = Vec::with_capacity(raw.len());
    let (mut before, mut after, mut counts) = (0u64, 0u64, [0usize; 3]);
    let mut agree = Vec::new();
    for (t, (r, d)) in raw.iter().zip(&dec).enumerate() {
        let o = oracle_decide(&d.luma, &r.luma)?;
        before += sse(&d.luma, &r.luma)?;
        after += sse(&o.filtered, &r.luma)?;
        for (k, m) in FilterMode::ALL.into_iter().enumerate() {
            counts[k] += o.modes.count(m);
        }
        if let Some(qp) = c.qp {
            agree.push(agreement(&o.modes, &hevc_rule_decide(&d.luma, qp)?)?);
        }
        for line in o.modes.to_csv().lines().skip(1) {
            csv.push_str(&format!("{},{line}\n", a.start_frame + t));
        }
        filtered.push(d.with_luma(o.filtered)?);
    }
    println!("frames {}: SSE unfiltered {before}, oracle {after}", raw.len());
    println!("segments none {} normal {} strong {}", counts[0], counts[1], counts[2]);
    if !agree.is_empty() {
        println!("agreement with standard rule: {:.4}", agree.iter().sum::<f64>() / agree.len() as f64);
    }
    if let Some(p) = &a.modes {
        write_text(p, &csv)?;
    }
    if let Some(p) = &a.filtered {
        write_yuv(&filtered, p)?;
    }
    if let Some(anchor_path) = &a.rd_anchor {
        let anchor = read_rd_csv(anchor_path)?;
        let tests = a
            .rd_test
            .iter()
            .map(|p| Ok((p.file_stem().and_then(|s| s.to_str()).unwrap_or("test").to_string(), read_rd_csv(p)?)))
            .collect::<Result<Vec<_>>>()?;
        let report = bd_rate_csv(&anchor, &tests)?;
        for (label, curve) in &tests {
            println!("BD-rate {label}: {:+.4}%", bd_rate(&anchor, curve)?);
        }
        if let Some(p) = &a.bd_output {
            write_text(p, &report)?;
        }
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SimulateCompress {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// TU sidecar of the simulator's partitions
    #[arg(long)]
    tu: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    start_frame: usize,
    #[arg(long)]
    frames: Option<usize>,
}

pub fn simulate_compress(c: &Common, a: SimulateCompress) -> Result<()> {
    let (w, h) = dims(c)?;
    let qp = require_qp(c)?;
    let raw = read_range(&a.input, w, h, a.start_frame, a.frames)?;
    let mut out = Vec::with_capacity(raw.len());
    let mut parts = Vec::with_capacity(raw.len());
    for f in &raw {
        let (d, p) = simulate(&f.luma, qp)?;
        out.push(f.with_luma(d)?);
        parts.push(p);
    }
    write_yuv(&out, &a.output)?;
    if let Some(p) = &a.tu {
        write_tu_file(&TuSequence { width: w, height: h, frames: parts }, p)?;
    }
    let report = eval_sequence(&lumas(&raw), &lumas(&out), &lumas(&out))?;
    println!("{} frames at QP {qp}: mean PSNR {:.4} dB", out.len(), report.mean_psnr_compressed());
    Ok(())
}

fn train_config(c: &Common) -> Result<TrainConfig> {
    let mut cfg = match &c.config {
        Some(p) => read_train_config(p, TrainConfig::default())?,
        None => TrainConfig::default(),
    };
    if let Some(qp) = c.qp {
        cfg.qp = qp;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Args, Debug)]
pub struct Train {
    /// Raw YUV training sequence(s)
    #[arg(long, required = true)]
    raw: Vec<PathBuf>,
    /// Compressed counterparts, in the same order; simulated at the config
    /// QP when omitted
    #[arg(long)]
    compressed: Vec<PathBuf>,
    /// TU sidecars of the compressed sequences
    #[arg(long)]
    tu: Vec<PathBuf>,
    /// Checkpoints (`epoch_NNN.vqec`, `last.vqec`) and `log.csv`
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn train(c: &Common, a: Train) -> Result<()> {
    let (w, h) = dims(c)?;
    let cfg = train_config(c)?;
    if !a.compressed.is_empty() && a.compressed.len() != a.raw.len() {
        return Err(usage("give one --compressed per --raw, or none"));
    }
    if !a.tu.is_empty() && a.tu.len() != a.raw.len() {
        return Err(usage("give one --tu per --raw, or none"));
    }
    let mut sets = Vec::new();
    for (i, raw_path) in a.raw.iter().enumerate() {
        let raw = lumas(&read_range(raw_path, w, h, 0, None)?);
        let set = match a.compressed.get(i) {
            None => FramePairSet::simulate(raw, cfg.qp)?,
            Some(p) => {
                let comp = lumas(&read_range(p, w, h, 0, Some(raw.len()))?);
                let parts = a.tu.get(i).map(|t| read_tu(t, w, h, 0, raw.len())).transpose()?.map(|s| s.frames);
                if cfg.model.guidance && parts.is_none() {
                    return Err(usage("guidance is enabled: give --tu for every compressed sequence"));
                }
                FramePairSet::new(raw, comp, parts, None)?
            }
        };
        sets.push(set);
    }
    create_dir(&a.out_dir)?;
    let per_set = cfg.samples_per_epoch.div_ceil(sets.len());
    let draw = |epoch: usize| {
        let mut out = Vec::new();
        for (i, set) in sets.iter().enumerate() {
            let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add((epoch * sets.len() + i) as u64);
            out.extend(sample_patches(set, cfg.model.radius, cfg.patch_size, per_set, seed)?);
        }
        out.truncate(cfg.samples_per_epoch);
        Ok(out)
    };
    println!("training {} for {} epochs on {} sequence(s)", cfg.model.to_echo(), cfg.epochs, sets.len());
    let start = Instant::now();
    let mut last_epoch = usize::MAX;
    let result = vqe_core::pipeline::train(&cfg, draw, Some(&a.out_dir), |row| {
        if row.epoch != last_epoch {
            last_epoch = row.epoch;
            println!("epoch {:>3} step {:>6} lr {:.1e} loss {:.6}", row.epoch, row.step, row.lr, row.loss.total);
        }
    })?;
    write_text(&a.out_dir.join("log.csv"), &log_csv(&result.log))?;
    let last = result.log.last().map_or(f64::NAN, |r| r.loss.total);
    println!("done in {:.1}s, final batch loss {last:.6}", start.elapsed().as_secs_f64());
    Ok(())
}

#[derive(Args, Debug)]
pub struct Enhance {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Compressed YUV
    #[arg(long)]
    input: PathBuf,
    /// TU sidecar of the input; required by guided models
    #[arg(long)]
    tu: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    start_frame: usize,
    #[arg(long)]
    frames: Option<usize>,
    /// Process frames in tiles of this size (bounded memory, same output)
    #[arg(long)]
    tile: Option<usize>,
}

pub fn enhance(c: &Common, a: Enhance) -> Result<()> {
    let (w, h) = dims(c)?;
    let params = load_checkpoint(&a.checkpoint)?;
    let input = read_range(&a.input, w, h, a.start_frame, a.frames)?;
    let tus = a.tu.as_ref().map(|p| read_tu(p, w, h, a.start_frame, input.len())).transpose()?;
    let start = Instant::now();
    let out = enhance_sequence(&params, &lumas(&input), tus.as_ref().map(|s| s.frames.as_slice()), a.tile)?;
    let frames: Vec<YuvFrame> = input.iter().zip(out).map(|(f, l)| f.with_luma(l)).collect::<vqe_core::Result<_>>()?;
    write_yuv(&frames, &a.output)?;
    let secs = start.elapsed().as_secs_f64();
    println!("{} frames enhanced in {secs:.2}s ({:.1} ms/frame)", frames.len(), 1e3 * secs / frames.len() as f64);
    Ok(())
}

#[derive(Args, Debug)]
pub struct Evaluate {
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    compressed: PathBuf,
    #[arg(long)]
    enhanced: PathBuf,
    /// First frame of `raw`/`compressed` matching frame 0 of `enhanced`
    #[arg(long, default_value_t = 0)]
    start_frame: usize,
    #[arg(long)]
    frames: Option<usize>,
    /// Per-frame CSV
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn evaluate(c: &Common, a: Evaluate) -> Result<()> {
    let (w, h) = dims(c)?;
    let enh = lumas(&read_range(&a.enhanced, w, h, 0, a.frames)?);
    let raw = lumas(&read_range(&a.raw, w, h, a.start_frame, Some(enh.len()))?);
    let comp = lumas(&read_range(&a.compressed, w, h, a.start_frame, Some(enh.len()))?);
    let report = eval_sequence(&raw, &comp, &enh)?;
    if let Some(p) = &a.output {
        write_text(p, &report.to_csv())?;
    }
    println!(
        "{} frames: PSNR compressed {:.4} dB, enhanced {:.4} dB, mean delta {:+.4} dB",
        report.frames.len(),
        report.mean_psnr_compressed(),
        report.mean_psnr_enhanced(),
        report.mean_delta()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct Robustness {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Raw test sequences; with none, synthetic clips are generated
    #[arg(long)]
    raw: Vec<PathBuf>,
    /// Number of synthetic clips when no --raw is given
    #[arg(long, default_value_t = 4)]
    synthetic: usize,
    /// Frames per synthetic clip (and per raw clip, if set)
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "35,36,37,38,39")]
    qps: Vec<u32>,
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn robustness(c: &Common, a: Robustness) -> Result<()> {
    let params = load_checkpoint(&a.checkpoint)?;
    if let Some(&qp) = a.qps.iter().find(|&&q| q > 51) {
        return Err(usage(format!("QP {qp} outside 0..=51")));
    }
    let clips: Vec<Vec<LumaFrame>> = if a.raw.is_empty() {
        let (w, h) = (c.width.unwrap_or(64), c.height.unwrap_or(64));
        let seed = c.seed.unwrap_or(900);
        (0..a.synthetic as u64).map(|k| synth_clip(w, h, a.frames.unwrap_or(4), seed + k)).collect()
    } else {
        let (w, h) = dims(c)?;
        a.raw.iter().map(|p| Ok(lumas(&read_range(p, w, h, 0, a.frames)?))).collect::<Result<_>>()?
    };
    let report = robustness_sweep(&params, &clips, &a.qps, a.tile)?;
    for &(qp, n, pc, pe) in &report.rows {
        println!("QP {qp}: {n} frames, PSNR {pc:.4} -> {pe:.4} dB, delta {:+.4} dB", pe - pc);
    }
    if let Some(p) = &a.output {
        write_text(p, &report.to_csv())?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct Gradcheck {
    #[arg(long, default_value = "brclstm")]
    fusion: Fusion,
    #[arg(long)]
    no_guidance: bool,
    /// Patch side (multiple of 16)
    #[arg(long, default_value_t = 16)]
    size: usize,
    /// Coordinates probed per parameter tensor
    #[arg(long, default_value_t = 12)]
    per_tensor: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Maximum accepted relative error
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

pub fn gradcheck(c: &Common, a: Gradcheck) -> Result<()> {
    let cfg = MganetConfig { width_div: 16, radius: 1, lstm_layers: 2, fusion: a.fusion, guidance: !a.no_guidance };
    let start = Instant::now();
    let r = model_grad_check(cfg, a.size, c.seed.unwrap_or(21), a.per_tensor, a.eps)?;
    println!(
        "{}: {} coordinates checked, {} skipped at ReLU kinks, {} below the {MODEL_CHECK_FLOOR:e} floor",
        cfg.to_echo(),
        r.checked,
        r.skipped,
        r.below_floor
    );
    println!(
        "max relative error {:.3e} at {} (analytic {:.6e}, numeric {:.6e}); {:.1}s",
        r.max_rel_error,
        r.worst,
        r.worst_pair.0,
        r.worst_pair.1,
        start.elapsed().as_secs_f64()
    );
    if r.max_rel_error >= a.tolerance {
        return Err(vqe_core::Error::Invariant(format!(
            "gradient check failed: {:.3e} >= {:.1e}",
            r.max_rel_error, a.tolerance
        ))
        .into());
    }
    Ok(())
}
