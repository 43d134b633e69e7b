use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Fusion, MganetConfig};
use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tape, Tensor, Var};

/// Name, shape and initial scale of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    /// Uniform half-width; 0 means zero-initialised.
    pub init_bound: f64,
}

fn conv(specs: &mut Vec<ParamSpec>, name: &str, cout: usize, cin: usize, k: usize, bias: bool, zero: bool) {
    let bound = if zero { 0.0 } else { (1.0 / (cin * k * k) as f64).sqrt() };
    specs.push(ParamSpec { name: format!("{name}.w"), shape: [cout, cin, k, k], init_bound: bound });
    if bias {
        specs.push(ParamSpec { name: format!("{name}.b"), shape: [1, cout, 1, 1], init_bound: 0.0 });
    }
}

/// Transposed conv, weights laid out `(cin, cout, k, k)`. Each output of a
/// stride-2 4×4 deconv sums `cin·(k/2)²` products.
fn deconv(specs: &mut Vec<ParamSpec>, name: &str, cin: usize, cout: usize, zero: bool) {
    let bound = if zero { 0.0 } else { (1.0 / (cin * 4) as f64).sqrt() };
    specs.push(ParamSpec { name: format!("{name}.w"), shape: [cin, cout, 4, 4], init_bound: bound });
    specs.push(ParamSpec { name: format!("{name}.b"), shape: [1, cout, 1, 1], init_bound: 0.0 });
}

/// Every parameter of a configuration, in checkpoint order.
pub fn specs(cfg: &MganetConfig) -> Vec<ParamSpec> {
    let mut s = Vec::new();
    let feat = cfg.feature_channels();
    let hid = cfg.hidden_channels();
    match cfg.fusion {
        Fusion::Brclstm | Fusion::Bclstm => {
            conv(&mut s, "net_i", feat, 1, 3, true, false);
            for l in 0..cfg.lstm_layers {
                for dir in ["fwd", "bwd"] {
                    conv(&mut s, &format!("lstm{l}.{dir}.u"), 4 * hid, feat, 3, true, false);
                    conv(&mut s, &format!("lstm{l}.{dir}.v"), 4 * hid, hid, 3, false, false);
                }
            }
        }
        Fusion::Early => {
            conv(&mut s, "early0", feat, cfg.window(), 3, true, false);
            conv(&mut s, "early1", feat, feat, 3, true, false);
        }
        Fusion::Slow => {
            conv(&mut s, "net_i", feat, 1, 3, true, false);
            for level in 0..2 * cfg.radius {
                conv(&mut s, &format!("slow{level}"), feat, 2 * feat, 3, true, false);
            }
        }
    }
    if cfg.guidance {
        conv(&mut s, "guide", feat, 1, 3, true, false);
    }
    let enc = cfg.encoder_channels();
    let mut cin = feat;
    for (k, &cout) in enc.iter().enumerate() {
        let ks = if k == 0 { 7 } else { 3 };
        conv(&mut s, &format!("enc{}", k + 1), cout, cin, ks, true, false);
        cin = cout;
    }
    let dec = cfg.decoder_channels();
    // stage inputs: enc8; then stage output + matching skip (+ prediction)
    let stage_in = [enc[7], dec[0] + enc[5], dec[1] + enc[3] + 1, dec[2] + enc[1] + 1];
    for k in 0..4 {
        deconv(&mut s, &format!("dec{}", k + 1), stage_in[k], dec[k], false);
        if k < 3 {
            deconv(&mut s, &format!("head{}", k + 1), stage_in[k + 1], 1, true);
        }
    }
    conv(&mut s, "final", 1, dec[3] + feat + 1, 3, true, true);
    s
}

/// Named parameter tensors of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub config: MganetConfig,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Params<T> {
    /// Uniform `±sqrt(1/fan_in)` weights, zero biases, zero prediction heads.
    pub fn init(config: MganetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = specs(&config);
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in &specs {
            let n: usize = spec.shape.iter().product();
            let data = if spec.init_bound > 0.0 {
                (0..n).map(|_| T::cast(rng.gen_range(-spec.init_bound..spec.init_bound))).collect()
            } else {
                vec![T::zero(); n]
            };
            tensors.push(Tensor::new(spec.shape, data)?);
        }
        Params::from_parts(config, specs.into_iter().map(|s| s.name).collect(), tensors)
    }

    /// Assembles a parameter set, checking names and shapes against the
    /// configuration.
    pub fn from_parts(config: MganetConfig, names: Vec<String>, tensors: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let expected = specs(&config);
        if names.len() != expected.len() || tensors.len() != expected.len() {
            return Err(Error::Format(format!(
                "configuration needs {} parameter tensors, got {}",
                expected.len(),
                names.len().max(tensors.len())
            )));
        }
        for ((spec, name), t) in expected.iter().zip(&names).zip(&tensors) {
            if &spec.name != name || spec.shape != t.shape() {
                return Err(Error::Format(format!(
                    "parameter {name} {:?} does not match expected {} {:?}",
                    t.shape(),
                    spec.name,
                    spec.shape
                )));
            }
        }
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Params { config, names, tensors, index })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn shapes(&self) -> Vec<Shape> {
        self.tensors.iter().map(|t| t.shape()).collect()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            config: self.config,
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
            index: self.index.clone(),
        }
    }

    /// Records every tensor on `tape`; as leaves when `trainable`,
    /// otherwise as constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        Bound { vars, index: self.index.clone() }
    }
}

/// Tape handles of a bound parameter set, addressable by name.
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::invalid(format!("model has no parameter {name:?}")))
    }

    pub fn opt(&self, name: &str) -> Option<Var> {
        self.index.get(name).map(|&i| self.vars[i])
    }
}
