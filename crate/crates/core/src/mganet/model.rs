use super::params::Bound;
use super::{Fusion, MganetConfig, SPATIAL_ALIGN};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tape, Var};

/// Supervision weights of the three coarse predictions, coarsest first.
pub const LAMBDAS: [f64; 3] = [0.5, 0.25, 0.125];

/// The four gate maps of one ConvLSTM step.
#[derive(Clone, Copy, Debug)]
pub struct GateStack {
    pub forget: Var,
    pub input: Var,
    pub output: Var,
    pub candidate: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct CellOutput {
    pub gates: GateStack,
    pub cell: Var,
    pub hidden: Var,
}

fn conv<T: Real>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
    let w = p.var(&format!("{name}.w"))?;
    tape.conv2d(x, w, p.opt(&format!("{name}.b")), stride, pad)
}

fn conv_relu<T: Real>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
    let y = conv(tape, p, name, x, stride, pad)?;
    Ok(tape.relu(y))
}

fn deconv<T: Real>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{name}.w"))?;
    tape.conv2d_transpose(x, w, p.opt(&format!("{name}.b")), 2, 1)
}

/// One ConvLSTM step of direction `prefix` (e.g. `lstm0.fwd`). Gates are
/// laid out F, I, O, C̃ along the channel axis. A missing previous state is
/// the zero state.
pub fn cell_step<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    prefix: &str,
    z: Var,
    prev: Option<(Var, Var)>,
) -> Result<CellOutput> {
    let mut pre = conv(tape, p, &format!("{prefix}.u"), z, 1, 1)?;
    if let Some((_, h)) = prev {
        let rec = conv(tape, p, &format!("{prefix}.v"), h, 1, 1)?;
        pre = tape.add(pre, rec)?;
    }
    let c4 = tape.shape(pre)[1];
    if c4 % 4 != 0 {
        return Err(Error::shape(format!("gate stack has {c4} channels, not a multiple of 4")));
    }
    let hid = c4 / 4;
    let slice = |tape: &mut Tape<T>, k: usize| tape.slice_channels(pre, k * hid, hid);
    let (f, i, o, g) = (slice(tape, 0)?, slice(tape, 1)?, slice(tape, 2)?, slice(tape, 3)?);
    let gates = GateStack {
        forget: tape.sigmoid(f),
        input: tape.sigmoid(i),
        output: tape.sigmoid(o),
        candidate: tape.tanh(g),
    };
    let mut cell = tape.mul(gates.input, gates.candidate)?;
    if let Some((c_prev, _)) = prev {
        let keep = tape.mul(gates.forget, c_prev)?;
        cell = tape.add(keep, cell)?;
    }
    let squashed = tape.tanh(cell);
    let hidden = tape.mul(gates.output, squashed)?;
    Ok(CellOutput { gates, cell, hidden })
}

/// Runs layer `l` forward and backward over `seq`; each output is the
/// concatenated hidden states, plus the input when `residual`.
pub fn brclstm_layer<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    l: usize,
    seq: &[Var],
    residual: bool,
) -> Result<Vec<Var>> {
    if seq.is_empty() {
        return Err(Error::invalid("empty sequence"));
    }
    let shape = tape.shape(seq[0]);
    if seq.iter().any(|&z| tape.shape(z) != shape) {
        return Err(Error::shape("sequence tensors differ in shape"));
    }
    let run = |tape: &mut Tape<T>, dir: &str, order: &mut dyn Iterator<Item = usize>| -> Result<Vec<(usize, Var)>> {
        let mut state = None;
        let mut out = Vec::new();
        for t in order {
            let step = cell_step(tape, p, &format!("lstm{l}.{dir}"), seq[t], state)?;
            state = Some((step.cell, step.hidden));
            out.push((t, step.hidden));
        }
        Ok(out)
    };
    let fwd = run(tape, "fwd", &mut (0..seq.len()))?;
    let mut bwd = run(tape, "bwd", &mut (0..seq.len()).rev())?;
    bwd.reverse();
    let mut out = Vec::with_capacity(seq.len());
    for t in 0..seq.len() {
        let h = tape.concat_channels(&[fwd[t].1, bwd[t].1])?;
        out.push(if residual { tape.add(h, seq[t])? } else { h });
    }
    Ok(out)
}

/// Fuses the `2T+1` frames (channels of `window`, centre at index `T`) into
/// centre-time features.
pub fn temporal_encoder<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &MganetConfig,
    window: Var,
) -> Result<Var> {
    let n = tape.shape(window)[1];
    if n % 2 == 0 {
        return Err(Error::invalid(format!("temporal window must be odd, got {n} frames")));
    }
    if n != cfg.window() {
        return Err(Error::shape(format!("model expects {} frames, got {n}", cfg.window())));
    }
    let frame = |tape: &mut Tape<T>, t| tape.slice_channels(window, t, 1);
    match cfg.fusion {
        Fusion::Brclstm | Fusion::Bclstm => {
            let mut seq = Vec::with_capacity(n);
            for t in 0..n {
                let f = frame(tape, t)?;
                seq.push(conv_relu(tape, p, "net_i", f, 1, 1)?);
            }
            for l in 0..cfg.lstm_layers {
                seq = brclstm_layer(tape, p, l, &seq, cfg.fusion == Fusion::Brclstm)?;
            }
            Ok(seq[cfg.radius])
        }
        Fusion::Early => {
            let x = conv_relu(tape, p, "early0", window, 1, 1)?;
            conv_relu(tape, p, "early1", x, 1, 1)
        }
        Fusion::Slow => {
            let mut seq = Vec::with_capacity(n);
            for t in 0..n {
                let f = frame(tape, t)?;
                seq.push(conv_relu(tape, p, "net_i", f, 1, 1)?);
            }
            let mut level = 0;
            while seq.len() > 1 {
                let mut next = Vec::with_capacity(seq.len() - 1);
                for pair in seq.windows(2) {
                    let x = tape.concat_channels(pair)?;
                    next.push(conv_relu(tape, p, &format!("slow{level}"), x, 1, 1)?);
                }
                seq = next;
                level += 1;
            }
            Ok(seq[0])
        }
    }
}

/// Per-scale activations of both encoder channels.
#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    /// `G1..G5`: the projected guide map, then the guide channel after each
    /// strided layer. Empty without guidance.
    pub guided: Vec<Var>,
    /// Main channel input (features plus `G1`) followed by the eight
    /// encoder layer outputs.
    pub main: Vec<Var>,
}

/// Runs the eight shared encoder layers on `x`. When `inject` holds four
/// maps, the k-th is added after the k-th strided layer's activation.
fn encode<T: Real>(tape: &mut Tape<T>, p: &Bound, x: Var, inject: Option<&[Var]>) -> Result<Vec<Var>> {
    let mut outs = Vec::with_capacity(8);
    let mut h = x;
    for k in 0..8 {
        let (stride, pad) = if k % 2 == 0 { (2, if k == 0 { 3 } else { 1 }) } else { (1, 1) };
        h = conv_relu(tape, p, &format!("enc{}", k + 1), h, stride, pad)?;
        if let (Some(g), true) = (inject, k % 2 == 0) {
            h = tape.add(h, g[k / 2])?;
        }
        outs.push(h);
    }
    Ok(outs)
}

/// The two-channel encoder. Without guidance (`guide` is `None`) only the
/// main channel runs.
pub fn shared_guided_encoder<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    main_in: Var,
    guide: Option<Var>,
) -> Result<FeaturePyramid> {
    let [_, _, h, w] = tape.shape(main_in);
    let Some(g) = guide else {
        let mut main = vec![main_in];
        main.extend(encode(tape, p, main_in, None)?);
        return Ok(FeaturePyramid { guided: Vec::new(), main });
    };
    let gs = tape.shape(g);
    if gs[1] != 1 || gs[2] != h || gs[3] != w || gs[0] != tape.shape(main_in)[0] {
        return Err(Error::shape(format!("guide map {gs:?} does not match features {:?}", tape.shape(main_in))));
    }
    let g1 = conv(tape, p, "guide", g, 1, 1)?;
    let guide_layers = encode(tape, p, g1, None)?;
    let mut guided = vec![g1];
    guided.extend(guide_layers.iter().step_by(2).copied());
    let x = tape.add(main_in, g1)?;
    let mut main = vec![x];
    main.extend(encode(tape, p, x, Some(&guided[1..]))?);
    Ok(FeaturePyramid { guided, main })
}

/// Model outputs on one batch.
#[derive(Clone, Debug)]
pub struct Outputs {
    /// Enhanced centre frame (compressed frame plus residual), unclipped.
    pub enhanced: Var,
    /// Predictions at 1/4, 1/2 and full resolution.
    pub intermediates: [Var; 3],
    pub pyramid: FeaturePyramid,
    pub temporal: Var,
}

fn decode<T: Real>(tape: &mut Tape<T>, p: &Bound, pyr: &FeaturePyramid) -> Result<(Var, [Var; 3])> {
    let e = |k: usize| pyr.main[k];
    let d1 = deconv(tape, p, "dec1", e(8))?;
    let d1 = tape.relu(d1);
    let x1 = tape.concat_channels(&[d1, e(6)])?;
    let p1 = deconv(tape, p, "head1", x1)?;
    let d2 = deconv(tape, p, "dec2", x1)?;
    let d2 = tape.relu(d2);
    let x2 = tape.concat_channels(&[d2, e(4), p1])?;
    let p2 = deconv(tape, p, "head2", x2)?;
    let d3 = deconv(tape, p, "dec3", x2)?;
    let d3 = tape.relu(d3);
    let x3 = tape.concat_channels(&[d3, e(2), p2])?;
    let p3 = deconv(tape, p, "head3", x3)?;
    let d4 = deconv(tape, p, "dec4", x3)?;
    let d4 = tape.relu(d4);
    let x4 = tape.concat_channels(&[d4, e(0), p3])?;
    let residual = conv(tape, p, "final", x4, 1, 1)?;
    Ok((residual, [p1, p2, p3]))
}

/// Full forward pass. `window` is `N × (2T+1) × H × W` in `[0, 1]`;
/// `guide` is `N × 1 × H × W` and required exactly when the model uses
/// guidance.
pub fn forward<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &MganetConfig,
    window: Var,
    guide: Option<Var>,
) -> Result<Outputs> {
    let [_, _, h, w] = tape.shape(window);
    if h % SPATIAL_ALIGN != 0 || w % SPATIAL_ALIGN != 0 || h == 0 || w == 0 {
        return Err(Error::shape(format!("input {w}x{h} is not a positive multiple of {SPATIAL_ALIGN}")));
    }
    match (cfg.guidance, guide.is_some()) {
        (true, false) => return Err(Error::invalid("model uses guidance but no guide map was given")),
        (false, true) => return Err(Error::invalid("model was built without guidance")),
        _ => {}
    }
    let temporal = temporal_encoder(tape, p, cfg, window)?;
    let pyramid = shared_guided_encoder(tape, p, temporal, guide)?;
    let (residual, intermediates) = decode(tape, p, &pyramid)?;
    let centre = tape.slice_channels(window, cfg.radius, 1)?;
    let enhanced = tape.add(centre, residual)?;
    Ok(Outputs { enhanced, intermediates, pyramid, temporal })
}

/// Loss terms; `total = final_term + Σ LAMBDAS[i]·intermediate[i]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub final_term: f64,
    pub intermediate: [f64; 3],
}

/// Multi-supervised objective: per-pixel mean squared error of the final
/// output, plus down-weighted errors of the coarse predictions after
/// bilinear upsampling to full resolution.
pub fn loss<T: Real>(tape: &mut Tape<T>, out: &Outputs, truth: Var) -> Result<(Var, LossBreakdown)> {
    let full = tape.shape(truth)[2];
    let l0 = tape.mse(out.enhanced, truth)?;
    let mut total = l0;
    let mut terms = [0.0; 3];
    for (i, &pred) in out.intermediates.iter().enumerate() {
        let h = tape.shape(pred)[2];
        if h == 0 || full % h != 0 {
            return Err(Error::shape(format!("prediction height {h} does not divide {full}")));
        }
        let up = tape.upsample(pred, full / h)?;
        let hi = tape.mse(up, truth)?;
        terms[i] = tape.value(hi).item().as_f64();
        let weighted = tape.scale(hi, T::cast(LAMBDAS[i]));
        total = tape.add(total, weighted)?;
    }
    let breakdown = LossBreakdown {
        total: tape.value(total).item().as_f64(),
        final_term: tape.value(l0).item().as_f64(),
        intermediate: terms,
    };
    Ok((total, breakdown))
}
