use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{forward, loss, MganetConfig, Params, LAMBDAS};
use crate::error::Result;
use crate::tensor::{Tape, Tensor};

/// Result of [`model_grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGradCheck {
    pub max_rel_error: f64,
    /// `name[index]` of the worst coordinate.
    pub worst: String,
    /// Analytic and numeric gradient at the worst coordinate.
    pub worst_pair: (f64, f64),
    pub checked: usize,
    /// Checked coordinates whose gradient magnitude is below the floor.
    pub below_floor: usize,
    /// Coordinates whose ±eps probes crossed a ReLU kink.
    pub skipped: usize,
}

/// Denominator floor of the relative error. Rounding in the perturbed
/// forward passes limits central differences at `eps = 1e-5` to a few
/// `1e-10` absolute on this network, so gradients smaller than the floor
/// are held to an absolute `1e-4 * floor` rather than a ratio of noise.
pub const MODEL_CHECK_FLOOR: f64 = 1e-5;

struct Problem {
    window: Tensor<f64>,
    guide: Option<Tensor<f64>>,
    truth: Tensor<f64>,
}

/// The loss's prediction terms, each `(weight, values at full resolution)`.
type Predictions = Vec<(f64, Vec<f64>)>;

fn evaluate(params: &Params<f64>, pb: &Problem) -> Result<(Predictions, u64)> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape, false);
    let w = tape.constant(pb.window.clone());
    let g = pb.guide.clone().map(|g| tape.constant(g));
    let out = forward(&mut tape, &b, &params.config, w, g)?;
    let full = pb.truth.shape()[2];
    let mut preds = vec![(1.0, tape.value(out.enhanced).data().to_vec())];
    for (&pred, lambda) in out.intermediates.iter().zip(LAMBDAS) {
        let up = tape.upsample(pred, full / tape.shape(pred)[2])?;
        preds.push((lambda, tape.value(up).data().to_vec()));
    }
    Ok((preds, tape.kink_signature()))
}

/// `L(+) - L(-)` for the squared-error loss, summed per pixel as
/// `(a - b)(a + b - 2t)` so the large common part of the two losses never
/// has to cancel in floating point.
fn loss_difference(plus: &Predictions, minus: &Predictions, truth: &[f64]) -> f64 {
    let n = truth.len() as f64;
    plus.iter()
        .zip(minus)
        .map(|((lambda, a), (_, b))| {
            let s: f64 = a.iter().zip(b).zip(truth).map(|((a, b), t)| (a - b) * (a + b - 2.0 * t)).sum();
            lambda * s / n
        })
        .sum()
}

/// Compares the analytic gradient of the full training loss with central
/// differences in double precision, on a random `size × size` problem.
///
/// Parameters are moved off the training init so every one carries a
/// measurable gradient. `per_tensor` coordinates are probed in each
/// parameter tensor (all of them when the tensor is smaller); a probe whose
/// `±eps` evaluations change any ReLU's on/off state is skipped, since the
/// loss is not differentiable across that kink. Errors use
/// [`MODEL_CHECK_FLOOR`].
pub fn model_grad_check(cfg: MganetConfig, size: usize, seed: u64, per_tensor: usize, eps: f64) -> Result<ModelGradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::<f64>::init(cfg, seed)?;
    let names = params.names().to_vec();
    // At the training init the signal decays through the ReLU stack and the
    // deepest gradients fall to ~1e-8, below what central differences can
    // resolve. Conv weights get a variance-preserving gain, zero-initialised
    // heads a standard draw; the saturating LSTM gates keep their init.
    let gain = 6f64.sqrt();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        if name.ends_with(".b") {
            for v in t.data_mut() {
                *v = rng.gen_range(-0.05..0.05);
            }
        } else if t.data().iter().all(|&v| v == 0.0) {
            // heads are (cin, cout, 4, 4) deconvs; `final` is a conv
            let [a, b, kh, kw] = t.shape();
            let fan_in = if name.starts_with("head") { a * 4 } else { b * kh * kw };
            let bound = (1.0 / fan_in as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        } else if !name.starts_with("lstm") {
            for v in t.data_mut() {
                *v *= gain;
            }
        }
    }
    let n = cfg.window();
    let window = Tensor::from_fn([1, n, size, size], |_, _, _, _| rng.gen_range(0.0..1.0));
    let guide = cfg.guidance.then(|| Tensor::from_fn([1, 1, size, size], |_, _, _, _| rng.gen_range(0.0..1.0)));
    let truth = Tensor::from_fn([1, 1, size, size], |_, _, _, _| rng.gen_range(0.0..1.0));
    let pb = Problem { window, guide, truth };

    let mut tape = Tape::new();
    let b = params.bind(&mut tape, true);
    let w = tape.constant(pb.window.clone());
    let g = pb.guide.clone().map(|g| tape.constant(g));
    let t = tape.constant(pb.truth.clone());
    let out = forward(&mut tape, &b, &cfg, w, g)?;
    let (total, _) = loss(&mut tape, &out, t)?;
    let base_sig = tape.kink_signature();
    let mut grads = tape.backward(total)?;
    let analytic: Vec<Tensor<f64>> = b.vars.iter().map(|&v| grads.take(v)).collect();

    let mut report = ModelGradCheck { max_rel_error: 0.0, worst: String::new(), worst_pair: (0.0, 0.0), checked: 0, below_floor: 0, skipped: 0 };
    for k in 0..names.len() {
        let len = params.tensors()[k].len();
        let picks: Vec<usize> = if len <= per_tensor { (0..len).collect() } else { sample(&mut rng, len, per_tensor).into_vec() };
        for i in picks {
            let orig = params.tensors()[k].data()[i];
            params.tensors_mut()[k].data_mut()[i] = orig + eps;
            let (yp, sp) = evaluate(&params, &pb)?;
            params.tensors_mut()[k].data_mut()[i] = orig - eps;
            let (ym, sm) = evaluate(&params, &pb)?;
            params.tensors_mut()[k].data_mut()[i] = orig;
            if sp != base_sig || sm != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = loss_difference(&yp, &ym, pb.truth.data()) / (2.0 * eps);
            let a = analytic[k].data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(MODEL_CHECK_FLOOR);
            report.checked += 1;
            report.below_floor += usize::from(a.abs().max(numeric.abs()) < MODEL_CHECK_FLOOR);
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = err;
                report.worst = format!("{}[{i}]", names[k]);
                report.worst_pair = (a, numeric);
            }
        }
    }
    Ok(report)
}
