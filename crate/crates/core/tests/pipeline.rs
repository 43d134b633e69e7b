mod common;

use proptest::prelude::*;
use rand::Rng;
use vqe_core::mganet::{Fusion, MganetConfig, Params};
use vqe_core::pipeline::yuv::{encode_yuv420, parse_yuv420, yuv420_frame_bytes};
use vqe_core::pipeline::{
    enhance_sequence, eval_sequence, parse_train_config, psnr, sample_patches, synth_clip, train, FramePairSet,
    TrainConfig, YuvFrame, PSNR_CAP,
};
use vqe_core::frame::quantize_unit;
use vqe_core::{Error, LumaFrame};

fn random_frame(g: &mut impl Rng, w: usize, h: usize) -> LumaFrame {
    LumaFrame::from_fn(w, h, |_, _| g.gen())
}

/// PSNR straight from its definition, for 8-bit samples.
fn psnr_reference(a: &LumaFrame, b: &LumaFrame) -> f64 {
    let n = a.samples().len() as f64;
    let sse: f64 = a.samples().iter().zip(b.samples()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    if sse == 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (255.0f64.powi(2) / (sse / n)).log10()).min(PSNR_CAP)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn yuv_round_trip(w in 1usize..20, h in 1usize..20, n in 1usize..4, seed in any::<u64>()) {
        let (w, h) = (2 * w, 2 * h);
        let mut g = common::rng(seed);
        let frames: Vec<YuvFrame> = (0..n)
            .map(|_| {
                let luma = random_frame(&mut g, w, h);
                let chroma = (0..w * h / 2).map(|_| g.gen()).collect();
                YuvFrame { luma, chroma }
            })
            .collect();
        let bytes = encode_yuv420(&frames).unwrap();
        prop_assert_eq!(bytes.len(), n * yuv420_frame_bytes(w, h));
        prop_assert_eq!(parse_yuv420(&bytes, w, h).unwrap(), frames);
    }

    #[test]
    fn psnr_matches_definition(seed in any::<u64>(), noise in 0u8..40) {
        let mut g = common::rng(seed);
        let a = random_frame(&mut g, 24, 16);
        let b = LumaFrame::from_fn(24, 16, |x, y| a.get(x, y).saturating_add(g.gen_range(0..=noise)));
        let got = psnr(&a, &b).unwrap();
        prop_assert!((got - psnr_reference(&a, &b)).abs() < 1e-9);
    }
}

#[test]
fn short_yuv_reports_the_deficit() {
    let frame = YuvFrame::from_luma(LumaFrame::filled(8, 6, 16));
    let mut bytes = encode_yuv420(&[frame.clone(), frame]).unwrap();
    bytes.truncate(bytes.len() - 5);
    match parse_yuv420(&bytes, 8, 6) {
        Err(Error::Format(m)) => assert!(m.contains("short by 5"), "{m}"),
        other => panic!("expected a format error, got {other:?}"),
    }
    assert!(parse_yuv420(&[0; 72], 7, 6).is_err());
}

fn sample(v: f32) -> u8 {
    quantize_unit(v as f64)
}

#[test]
fn patches_are_co_located() {
    let raw = synth_clip(48, 40, 5, 3);
    let set = FramePairSet::simulate(raw, 32).unwrap();
    let radius = 2;
    for s in sample_patches(&set, radius, 16, 40, 4).unwrap() {
        for (c, o) in (-(radius as isize)..=radius as isize).enumerate() {
            let t = (s.frame as isize + o).clamp(0, set.len() as isize - 1) as usize;
            for dy in 0..16 {
                for dx in 0..16 {
                    assert_eq!(sample(s.window.at(0, c, dy, dx)), set.compressed()[t].get(s.x + dx, s.y + dy));
                }
            }
        }
        let guide = set.guide_map(s.frame).unwrap().unwrap();
        for dy in 0..16 {
            for dx in 0..16 {
                assert_eq!(sample(s.truth.at(0, 0, dy, dx)), set.raw()[s.frame].get(s.x + dx, s.y + dy));
                assert_eq!(sample(s.guide.as_ref().unwrap().at(0, 0, dy, dx)), guide.get(s.x + dx, s.y + dy));
            }
        }
    }
}

#[test]
fn training_is_deterministic() {
    let cfg = TrainConfig {
        model: MganetConfig { width_div: 16, fusion: Fusion::Brclstm, ..Default::default() },
        patch_size: 16,
        batch_size: 3,
        epochs: 2,
        lr: 1e-3,
        ..Default::default()
    };
    let set = FramePairSet::simulate(synth_clip(32, 32, 4, 8), 37).unwrap();
    let draw = |e: usize| sample_patches(&set, 1, 16, 6, 100 + e as u64);
    let a = train(&cfg, draw, None, |_| {}).unwrap();
    let b = train(&cfg, draw, None, |_| {}).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log, b.log);
    assert_eq!(a.log.len(), 4);
    assert_ne!(a.params, Params::<f32>::init(cfg.model, cfg.seed).unwrap());
}

#[test]
fn eval_deltas_match_recomputed_psnr() {
    let mut g = common::rng(9);
    let raw: Vec<LumaFrame> = (0..3).map(|_| random_frame(&mut g, 32, 16)).collect();
    let comp: Vec<LumaFrame> =
        raw.iter().map(|f| LumaFrame::from_fn(32, 16, |x, y| f.get(x, y).saturating_add(g.gen_range(0..9)))).collect();
    let enh: Vec<LumaFrame> =
        raw.iter().map(|f| LumaFrame::from_fn(32, 16, |x, y| f.get(x, y).saturating_add(g.gen_range(0..3)))).collect();
    let report = eval_sequence(&raw, &comp, &enh).unwrap();
    let mut total = 0.0;
    for (k, f) in report.frames.iter().enumerate() {
        let d = psnr_reference(&raw[k], &enh[k]) - psnr_reference(&raw[k], &comp[k]);
        assert!((f.delta() - d).abs() < 1e-9);
        total += d;
    }
    assert!((report.mean_delta() - total / 3.0).abs() < 1e-9);
    assert!(report.mean_delta() > 0.0);
    assert!(report.to_csv().lines().count() >= 4);
}

#[test]
fn fresh_model_leaves_a_sequence_unchanged() {
    let set = FramePairSet::simulate(synth_clip(40, 24, 3, 5), 35).unwrap();
    let p = Params::<f32>::init(MganetConfig { width_div: 16, ..Default::default() }, 2).unwrap();
    let out = enhance_sequence(&p, set.compressed(), set.partitions(), None).unwrap();
    assert_eq!(out, set.compressed());
    assert!(enhance_sequence(&p, set.compressed(), None, None).is_err());
}

#[test]
fn config_file_overrides_defaults() {
    let text = "# toy run\nformat = 1\nlr = 5e-4\nepochs = 3 # short\n\nfusion = early\nguidance = false\nwidth_div = 8\n";
    let cfg = parse_train_config(text, TrainConfig::default()).unwrap();
    assert_eq!(cfg.lr, 5e-4);
    assert_eq!(cfg.epochs, 3);
    assert_eq!(cfg.model.fusion, Fusion::Early);
    assert!(!cfg.model.guidance);
    assert_eq!(cfg.model.width_div, 8);
    assert_eq!(cfg.batch_size, TrainConfig::default().batch_size);

    for (text, line) in [("lr = 1\nlr = 2\n", 2), ("\n\nbogus = 1\n", 3), ("patch_size = big\n", 1), ("format = 2\n", 1), ("no equals\n", 1)] {
        match parse_train_config(text, TrainConfig::default()) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    assert!(parse_train_config("patch_size = 20\n", TrainConfig::default()).is_err());
}
