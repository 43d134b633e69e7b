#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vqe_core::codec::{dct2, idct2, quantize_spectrum, QuantMatrix, BLOCK_SIZES};
use vqe_core::deblock::{oracle_decide, segment_sse, segments, sse, FilterMode};
use vqe_core::partition::{boundary_map, mean_map, parse_tu_str, write_tu_string, TuPartition, TuSequence};
use vqe_core::tensor::{grad_check, Tape, Tensor, Var};
use vqe_core::{LumaFrame, Result};

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const OP_CASES: usize = 50;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(lo..hi))
}

/// Values in `±[0.05, 1]`, away from the ReLU kink.
pub fn off_kink(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| {
        let m = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// `Σ y ⊙ r` for a fixed random `r`, so every output element reaches the loss
/// with a distinct weight.
fn project(t: &mut Tape<f64>, y: Var, r: &Tensor<f64>) -> Result<Var> {
    let rv = t.constant(r.clone());
    let prod = t.mul(y, rv)?;
    Ok(t.sum(prod))
}

fn small_shape(rng: &mut ChaCha8Rng) -> [usize; 4] {
    [rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=5), rng.gen_range(1..=5)]
}

#[derive(Clone, Debug)]
pub struct OpResult {
    pub op: &'static str,
    pub cases: usize,
    pub max_rel_error: f64,
}

struct Acc {
    op: &'static str,
    cases: usize,
    max: f64,
}

impl Acc {
    fn new(op: &'static str) -> Self {
        Acc { op, cases: 0, max: 0.0 }
    }

    fn check<F>(&mut self, f: F, x: &Tensor<f64>) -> Result<()>
    where
        F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
    {
        let r = grad_check(f, x, GRAD_EPS)?;
        self.cases += 1;
        self.max = self.max.max(r.max_rel_error);
        Ok(())
    }

    fn done(self) -> OpResult {
        OpResult { op: self.op, cases: self.cases, max_rel_error: self.max }
    }
}

/// Central-difference checks of every differentiable tape operation on
/// random small tensors, `cases` per operand.
pub fn op_gradient_suite(cases: usize, seed: u64) -> Result<Vec<OpResult>> {
    let mut g = rng(seed);
    let mut out = Vec::new();

    let mut acc = Acc::new("conv2d");
    while acc.cases < cases {
        let k = [1, 3, 4, 7][g.gen_range(0..4)];
        let stride = g.gen_range(1..=2);
        let pad = g.gen_range(0..=k / 2);
        let (cin, cout) = (g.gen_range(1..=3), g.gen_range(1..=3));
        let (h, w) = (g.gen_range(k..k + 4), g.gen_range(k..k + 4));
        let n = g.gen_range(1..=2);
        let x = uniform(&mut g, [n, cin, h, w], -1.0, 1.0);
        let wt = uniform(&mut g, [cout, cin, k, k], -1.0, 1.0);
        let b = uniform(&mut g, [1, cout, 1, 1], -1.0, 1.0);
        let mut probe = Tape::new();
        let (xv, wv, bv) = (probe.constant(x.clone()), probe.constant(wt.clone()), probe.constant(b.clone()));
        let y = probe.conv2d(xv, wv, Some(bv), stride, pad)?;
        let r = uniform(&mut g, probe.shape(y), -1.0, 1.0);
        let (wc, bc, xc) = (wt.clone(), b.clone(), x.clone());
        acc.check(
            |t, v| {
                let (w, b) = (t.constant(wc.clone()), t.constant(bc.clone()));
                let y = t.conv2d(v, w, Some(b), stride, pad)?;
                project(t, y, &r)
            },
            &x,
        )?;
        acc.check(
            |t, v| {
                let (x, b) = (t.constant(xc.clone()), t.constant(bc.clone()));
                let y = t.conv2d(x, v, Some(b), stride, pad)?;
                project(t, y, &r)
            },
            &wt,
        )?;
        acc.check(
            |t, v| {
                let (x, w) = (t.constant(xc.clone()), t.constant(wc.clone()));
                let y = t.conv2d(x, w, Some(v), stride, pad)?;
                project(t, y, &r)
            },
            &b,
        )?;
    }
    out.push(acc.done());

    let mut acc = Acc::new("conv2d_transpose");
    while acc.cases < cases {
        let k = [2, 3, 4][g.gen_range(0..3)];
        let stride = g.gen_range(1..=2);
        let pad = g.gen_range(0..k / 2 + 1).min(k - 1);
        let (cin, cout) = (g.gen_range(1..=3), g.gen_range(1..=3));
        let (h, w) = (g.gen_range(1..5), g.gen_range(1..5));
        if (h.min(w) - 1) * stride + k <= 2 * pad {
            continue;
        }
        let n = g.gen_range(1..=2);
        let x = uniform(&mut g, [n, cin, h, w], -1.0, 1.0);
        let wt = uniform(&mut g, [cin, cout, k, k], -1.0, 1.0);
        let b = uniform(&mut g, [1, cout, 1, 1], -1.0, 1.0);
        let mut probe = Tape::new();
        let (xv, wv, bv) = (probe.constant(x.clone()), probe.constant(wt.clone()), probe.constant(b.clone()));
        let y = probe.conv2d_transpose(xv, wv, Some(bv), stride, pad)?;
        let r = uniform(&mut g, probe.shape(y), -1.0, 1.0);
        let (wc, bc, xc) = (wt.clone(), b.clone(), x.clone());
        acc.check(
            |t, v| {
                let (w, b) = (t.constant(wc.clone()), t.constant(bc.clone()));
                let y = t.conv2d_transpose(v, w, Some(b), stride, pad)?;
                project(t, y, &r)
            },
            &x,
        )?;
        acc.check(
            |t, v| {
                let (x, b) = (t.constant(xc.clone()), t.constant(bc.clone()));
                let y = t.conv2d_transpose(x, v, Some(b), stride, pad)?;
                project(t, y, &r)
            },
            &wt,
        )?;
        acc.check(
            |t, v| {
                let (x, w) = (t.constant(xc.clone()), t.constant(wc.clone()));
                let y = t.conv2d_transpose(x, w, Some(v), stride, pad)?;
                project(t, y, &r)
            },
            &b,
        )?;
    }
    out.push(acc.done());

    for op in ["sigmoid", "tanh", "relu"] {
        let mut acc = Acc::new(op);
        while acc.cases < cases {
            let shape = small_shape(&mut g);
            let x = if op == "relu" { off_kink(&mut g, shape) } else { uniform(&mut g, shape, -3.0, 3.0) };
            let r = uniform(&mut g, shape, -1.0, 1.0);
            acc.check(
                |t, v| {
                    let y = match op {
                        "sigmoid" => t.sigmoid(v),
                        "tanh" => t.tanh(v),
                        _ => t.relu(v),
                    };
                    project(t, y, &r)
                },
                &x,
            )?;
        }
        out.push(acc.done());
    }

    for op in ["add", "sub", "mul", "mse"] {
        let mut acc = Acc::new(op);
        while acc.cases < cases {
            let shape = small_shape(&mut g);
            let a = uniform(&mut g, shape, -2.0, 2.0);
            let b = uniform(&mut g, shape, -2.0, 2.0);
            let r = uniform(&mut g, shape, -1.0, 1.0);
            let apply = |t: &mut Tape<f64>, x: Var, y: Var| -> Result<Var> {
                let z = match op {
                    "add" => t.add(x, y)?,
                    "sub" => t.sub(x, y)?,
                    "mul" => t.mul(x, y)?,
                    _ => return t.mse(x, y),
                };
                project(t, z, &r)
            };
            let (ac, bc) = (a.clone(), b.clone());
            acc.check(
                |t, v| {
                    let other = t.constant(bc.clone());
                    apply(t, v, other)
                },
                &a,
            )?;
            acc.check(
                |t, v| {
                    let other = t.constant(ac.clone());
                    apply(t, other, v)
                },
                &b,
            )?;
        }
        out.push(acc.done());
    }

    let mut acc = Acc::new("scale");
    while acc.cases < cases {
        let shape = small_shape(&mut g);
        let x = uniform(&mut g, shape, -2.0, 2.0);
        let r = uniform(&mut g, shape, -1.0, 1.0);
        let f = g.gen_range(-3.0..3.0);
        acc.check(
            |t, v| {
                let y = t.scale(v, f);
                project(t, y, &r)
            },
            &x,
        )?;
    }
    out.push(acc.done());

    let mut acc = Acc::new("sum");
    while acc.cases < cases {
        let shape = small_shape(&mut g);
        let x = uniform(&mut g, shape, -2.0, 2.0);
        acc.check(|t, v| Ok(t.sum(v)), &x)?;
    }
    out.push(acc.done());

    let mut acc = Acc::new("concat_channels");
    while acc.cases < cases {
        let [n, _, h, w] = small_shape(&mut g);
        let parts: Vec<Tensor<f64>> =
            (0..g.gen_range(2..=3)).map(|_| { let c = g.gen_range(1..=3); uniform(&mut g, [n, c, h, w], -2.0, 2.0) }).collect();
        let which = g.gen_range(0..parts.len());
        let total: usize = parts.iter().map(|p| p.channels()).sum();
        let r = uniform(&mut g, [n, total, h, w], -1.0, 1.0);
        acc.check(
            |t, v| {
                let vars: Vec<Var> =
                    parts.iter().enumerate().map(|(i, p)| if i == which { v } else { t.constant(p.clone()) }).collect();
                let y = t.concat_channels(&vars)?;
                project(t, y, &r)
            },
            &parts[which],
        )?;
    }
    out.push(acc.done());

    let mut acc = Acc::new("slice_channels");
    while acc.cases < cases {
        let [n, _, h, w] = small_shape(&mut g);
        let c = g.gen_range(2..=5);
        let x = uniform(&mut g, [n, c, h, w], -2.0, 2.0);
        let start = g.gen_range(0..c);
        let len = g.gen_range(1..=c - start);
        let r = uniform(&mut g, [n, len, h, w], -1.0, 1.0);
        acc.check(
            |t, v| {
                let y = t.slice_channels(v, start, len)?;
                project(t, y, &r)
            },
            &x,
        )?;
    }
    out.push(acc.done());

    let mut acc = Acc::new("upsample");
    while acc.cases < cases {
        let [n, c, h, w] = small_shape(&mut g);
        let factor = g.gen_range(1..=4);
        let x = uniform(&mut g, [n, c, h, w], -2.0, 2.0);
        let r = uniform(&mut g, [n, c, h * factor, w * factor], -1.0, 1.0);
        acc.check(
            |t, v| {
                let y = t.upsample(v, factor)?;
                project(t, y, &r)
            },
            &x,
        )?;
    }
    out.push(acc.done());

    Ok(out)
}

/// Largest `|⟨conv(x), y⟩ − ⟨x, deconv(y)⟩|` relative to the operand norms,
/// over random conformable shapes.
pub fn adjoint_gap(cases: usize, seed: u64) -> Result<f64> {
    let mut g = rng(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < cases {
        let k = [3, 4, 7][g.gen_range(0..3)];
        let stride = g.gen_range(1..=2);
        let pad = g.gen_range(0..=k / 2);
        let (cin, cout) = (g.gen_range(1..=3), g.gen_range(1..=3));
        let h = g.gen_range(k..k + 6);
        // the adjoint pairs exactly only when the strided grid covers the
        // input, i.e. (h + 2p − k) divisible by the stride
        if (h + 2 * pad - k) % stride != 0 {
            continue;
        }
        let x = uniform(&mut g, [1, cin, h, h], -1.0, 1.0);
        let w = uniform(&mut g, [cout, cin, k, k], -1.0, 1.0);
        let mut t = Tape::new();
        let (xv, wv) = (t.constant(x.clone()), t.constant(w.clone()));
        let cx = t.conv2d(xv, wv, None, stride, pad)?;
        let y = uniform(&mut g, t.shape(cx), -1.0, 1.0);
        // conv weights (cout, cin, k, k) read as a deconv from cout to cin
        let yv = t.constant(y.clone());
        let dy = t.conv2d_transpose(yv, wv, None, stride, pad)?;
        let lhs = t.value(cx).dot(&y)?;
        let rhs = x.dot(t.value(dy))?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
        done += 1;
    }
    Ok(worst)
}

#[derive(Clone, Debug, Default)]
pub struct CodecStats {
    pub blocks: usize,
    pub max_round_trip: f64,
    pub max_parseval: f64,
    pub idempotence_failures: usize,
    pub bound_failures: usize,
}

/// Transform and quantizer properties over `per_size` random blocks of each
/// transform size, with random flat and non-flat step matrices.
pub fn codec_suite(per_size: usize, seed: u64) -> Result<CodecStats> {
    let mut g = rng(seed);
    let mut s = CodecStats::default();
    for &p in &BLOCK_SIZES {
        for _ in 0..per_size {
            let block: Vec<f64> = (0..p * p).map(|_| g.gen_range(0..=255) as f64 + g.gen_range(-0.5..0.5)).collect();
            let spec = dct2(&block, p)?;
            let back = idct2(&spec);
            let rt = block.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            s.max_round_trip = s.max_round_trip.max(rt);
            let e_px: f64 = block.iter().map(|v| v * v).sum();
            let e_co: f64 = spec.coeffs().iter().map(|v| v * v).sum();
            s.max_parseval = s.max_parseval.max((e_px - e_co).abs() / e_px.max(1.0));

            let steps: Vec<f64> = if g.gen_bool(0.5) {
                vec![g.gen_range(1.0..120.0); p * p]
            } else {
                (0..p * p).map(|_| g.gen_range(1.0..120.0)).collect()
            };
            let q = QuantMatrix::new(p, steps)?;
            let once = quantize_spectrum(&spec, &q)?;
            let twice = quantize_spectrum(&once, &q)?;
            if once != twice {
                s.idempotence_failures += 1;
            }
            let over = spec
                .coeffs()
                .iter()
                .zip(once.coeffs())
                .zip(q.steps())
                .any(|((c, r), st)| (c - r).abs() > st / 2.0);
            if over {
                s.bound_failures += 1;
            }
            s.blocks += 1;
        }
    }
    Ok(s)
}

/// A random frame, or a smooth frame coded in 8×8 blocks with coarse DC
/// offsets so every grid edge carries a step.
pub fn oracle_frames(count: usize, seed: u64) -> Vec<(LumaFrame, LumaFrame)> {
    let mut g = rng(seed);
    let mut out = Vec::with_capacity(2 * count);
    for _ in 0..count {
        let original = LumaFrame::from_fn(64, 64, |_, _| g.gen());
        let decoded = LumaFrame::from_fn(64, 64, |_, _| g.gen());
        out.push((decoded, original));
    }
    for _ in 0..count {
        let (fx, fy, phase) = (g.gen_range(0.02..0.2), g.gen_range(0.02..0.2), g.gen_range(0.0..6.3));
        let original = LumaFrame::from_fn(64, 64, |x, y| {
            (128.0 + 80.0 * ((x as f64 * fx + y as f64 * fy + phase).sin())).round() as u8
        });
        let step = g.gen_range(4.0..24.0);
        let offsets: Vec<f64> = (0..64).map(|_| g.gen_range(-1.0..1.0) * step).collect();
        let decoded = LumaFrame::from_fn(64, 64, |x, y| {
            let b = (y / 8) * 8 + x / 8;
            let block_mean = original.get(x / 8 * 8 + 3, y / 8 * 8 + 3) as f64;
            let v = block_mean + offsets[b] + 0.3 * (original.get(x, y) as f64 - block_mean);
            v.round().clamp(0.0, 255.0) as u8
        });
        out.push((decoded, original));
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct OracleStats {
    pub frames: usize,
    pub segments: usize,
    /// Segments whose chosen cost is not the minimum of the three modes, or
    /// whose recorded costs disagree with a recomputation.
    pub not_min: usize,
    /// Frames where the oracle's total SSE exceeds the unfiltered SSE.
    pub worse_than_none: usize,
}

/// Replays each oracle decision on a fresh copy of the decoded frame and
/// recomputes every candidate cost from scratch.
pub fn oracle_suite(frames: &[(LumaFrame, LumaFrame)]) -> Result<OracleStats> {
    let mut s = OracleStats::default();
    for (decoded, original) in frames {
        let d = oracle_decide(decoded, original)?;
        let segs = segments(decoded.width(), decoded.height());
        let mut state = decoded.clone();
        for (k, seg) in segs.iter().enumerate() {
            let cur = seg.read(&state);
            let reference = seg.read(original);
            let costs: Vec<u64> = FilterMode::ALL
                .iter()
                .map(|&m| segment_sse(&vqe_core::deblock::filter_segment(&cur, m), &reference))
                .collect();
            let chosen = d.modes.modes[k];
            let idx = FilterMode::ALL.iter().position(|&m| m == chosen).expect("mode");
            if costs[idx] != *costs.iter().min().expect("three") || costs[..] != d.costs[k][..] {
                s.not_min += 1;
            }
            seg.write(&mut state, &vqe_core::deblock::filter_segment(&cur, chosen));
            s.segments += 1;
        }
        if state != d.filtered || sse(&d.filtered, original)? > sse(decoded, original)? {
            s.worse_than_none += 1;
        }
        s.frames += 1;
    }
    Ok(s)
}

/// A random valid quadtree partition of a random frame size.
pub fn random_partition(g: &mut ChaCha8Rng) -> Result<TuPartition> {
    let w = 4 * g.gen_range(1..=40);
    let h = 4 * g.gen_range(1..=40);
    let bias = g.gen_range(0.1..0.9);
    TuPartition::quadtree(w, h, |_, _, _| g.gen_bool(bias))
}

#[derive(Clone, Debug, Default)]
pub struct GuidedStats {
    pub partitions: usize,
    pub mean_not_constant: usize,
    pub max_mean_gap: f64,
    pub boundary_mismatch: usize,
    pub round_trip_failures: usize,
}

/// Checks the mean and boundary maps against brute force, and the sidecar
/// format round trip, on `count` random partitions.
pub fn guided_suite(count: usize, seed: u64) -> Result<GuidedStats> {
    let mut g = rng(seed);
    let mut s = GuidedStats::default();
    for _ in 0..count {
        let p = random_partition(&mut g)?;
        let frame = LumaFrame::from_fn(p.width, p.height, |_, _| g.gen());
        let jm = mean_map(&frame, &p)?;
        for tu in &p.tus {
            let mut sum = 0.0;
            let first = jm.get(tu.x, tu.y);
            let mut constant = true;
            for y in tu.y..tu.y + tu.size {
                for x in tu.x..tu.x + tu.size {
                    sum += frame.get(x, y) as f64;
                    constant &= jm.get(x, y) == first;
                }
            }
            if !constant {
                s.mean_not_constant += 1;
            }
            let mean = sum / (tu.size * tu.size) as f64;
            s.max_mean_gap = s.max_mean_gap.max((first as f64 - mean).abs());
        }

        let owner = p.owner_map().expect("valid partition");
        let jg = boundary_map(&p);
        let mismatch = (0..p.height).any(|y| {
            (0..p.width).any(|x| {
                let o = owner[y * p.width + x];
                let left = x > 0 && owner[y * p.width + x - 1] != o;
                let up = y > 0 && owner[(y - 1) * p.width + x] != o;
                (jg.get(x, y) == 1) != (left || up)
            })
        });
        if mismatch {
            s.boundary_mismatch += 1;
        }

        let seq = TuSequence { width: p.width, height: p.height, frames: vec![p.clone(), p] };
        let text = write_tu_string(&seq);
        let parsed = parse_tu_str(&text)?;
        if parsed != seq || write_tu_string(&parsed) != text {
            s.round_trip_failures += 1;
        }
        s.partitions += 1;
    }
    Ok(s)
}
