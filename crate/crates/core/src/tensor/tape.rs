use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::conv;
use super::{Real, Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { x: usize, w: usize, b: Option<usize>, stride: usize, pad: usize },
    ConvTranspose2d { x: usize, w: usize, b: Option<usize>, stride: usize, pad: usize },
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Concat(Vec<usize>),
    SliceChannels { x: usize, start: usize },
    Sum(usize),
    Mse(usize, usize),
    Upsample { x: usize, factor: usize },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Elementwise nonlinearity applied by [`Tape::pointwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Linear,
}

/// Records a forward computation so a single reverse sweep can produce
/// gradients. Nodes are appended in evaluation order, so the node vector is
/// already a topological order.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input (parameter or checked variable).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let out = conv::conv2d_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        let mut inputs = vec![x.0, w.0];
        inputs.extend(b.map(|b| b.0));
        Ok(self.push(out, Op::Conv2d { x: x.0, w: w.0, b: b.map(|b| b.0), stride, pad }, &inputs))
    }

    pub fn conv2d_transpose(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let out = conv::conv2d_transpose_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        let mut inputs = vec![x.0, w.0];
        inputs.extend(b.map(|b| b.0));
        Ok(self.push(
            out,
            Op::ConvTranspose2d { x: x.0, w: w.0, b: b.map(|b| b.0), stride, pad },
            &inputs,
        ))
    }

    pub fn pointwise(&mut self, x: Var, kind: Activation) -> Var {
        let v = self.value(x);
        match kind {
            Activation::Linear => x,
            Activation::Sigmoid => {
                let out = v.map(sigmoid);
                self.push(out, Op::Sigmoid(x.0), &[x.0])
            }
            Activation::Tanh => {
                let out = v.map(|a| a.tanh());
                self.push(out, Op::Tanh(x.0), &[x.0])
            }
            Activation::Relu => {
                let out = v.map(|a| a.max(T::zero()));
                self.push(out, Op::Relu(x.0), &[x.0])
            }
        }
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.pointwise(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.pointwise(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.pointwise(x, Activation::Relu)
    }

    fn zip_with(&self, a: Var, b: Var, op: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        ta.expect_same_shape(tb, op)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a.0, b.0), &[a.0, b.0]))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x.0, factor), &[x.0])
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_channels(&values)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(out, Op::Concat(ids.clone()), &ids))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).slice_channels(start, len)?;
        Ok(self.push(out, Op::SliceChannels { x: x.0, start }, &[x.0]))
    }

    /// Sum of every element, as a 1×1×1×1 scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x.0), &[x.0])
    }

    /// Mean squared difference over every element, as a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        ta.expect_same_shape(tb, "mse")?;
        let n = T::cast(ta.len() as f64);
        let s: T = ta.data().iter().zip(tb.data()).map(|(&x, &y)| (x - y) * (x - y)).sum();
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(a.0, b.0), &[a.0, b.0]))
    }

    /// Bilinear upsampling by an integer factor.
    pub fn upsample(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(Error::invalid("upsample factor must be >= 1"));
        }
        if factor == 1 {
            return Ok(x);
        }
        let out = conv::upsample_bilinear_forward(self.value(x), factor);
        Ok(self.push(out, Op::Upsample { x: x.0, factor }, &[x.0]))
    }

    /// Hash of the on/off pattern of every ReLU on the tape. Two evaluations
    /// with equal signatures lie in the same linear region of the network.
    pub fn kink_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                for &v in self.nodes[x].value.data() {
                    (v > T::zero()).hash(&mut h);
                }
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        let loss_shape = self.shape(loss);
        if loss_shape != [1, 1, 1, 1] {
            return Err(Error::shape(format!(
                "backward requires a scalar loss, got {loss_shape:?}"
            )));
        }
        let shapes: Vec<Shape> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let nodes = &self.nodes;
            let val = |j: usize| &nodes[j].value;
            let wants = |j: usize| nodes[j].requires_grad;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Conv2d { x, w, b, stride, pad } => {
                    let (dx, dw, db) =
                        conv::conv2d_backward(val(*x), val(*w), b.is_some(), *stride, *pad, &g);
                    accumulate(&mut grads, *x, dx, wants(*x));
                    accumulate(&mut grads, *w, dw, wants(*w));
                    if let (Some(b), Some(db)) = (b, db) {
                        accumulate(&mut grads, *b, db, wants(*b));
                    }
                }
                Op::ConvTranspose2d { x, w, b, stride, pad } => {
                    let (dx, dw, db) = conv::conv2d_transpose_backward(
                        val(*x),
                        val(*w),
                        b.is_some(),
                        *stride,
                        *pad,
                        &g,
                    );
                    accumulate(&mut grads, *x, dx, wants(*x));
                    accumulate(&mut grads, *w, dw, wants(*w));
                    if let (Some(b), Some(db)) = (b, db) {
                        accumulate(&mut grads, *b, db, wants(*b));
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let d = zip(&g, y, |gv, yv| gv * yv * (T::one() - yv));
                    accumulate(&mut grads, *x, d, wants(*x));
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let d = zip(&g, y, |gv, yv| gv * (T::one() - yv * yv));
                    accumulate(&mut grads, *x, d, wants(*x));
                }
                Op::Relu(x) => {
                    let d = zip(&g, val(*x), |gv, xv| if xv > T::zero() { gv } else { T::zero() });
                    accumulate(&mut grads, *x, d, wants(*x));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone(), wants(*b));
                    accumulate(&mut grads, *a, g, wants(*a));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v), wants(*b));
                    accumulate(&mut grads, *a, g, wants(*a));
                }
                Op::Mul(a, b) => {
                    let da = zip(&g, val(*b), |gv, bv| gv * bv);
                    let db = zip(&g, val(*a), |gv, av| gv * av);
                    accumulate(&mut grads, *a, da, wants(*a));
                    accumulate(&mut grads, *b, db, wants(*b));
                }
                Op::Scale(x, f) => {
                    let f = *f;
                    accumulate(&mut grads, *x, g.map(|v| v * f), wants(*x));
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let c = shapes[p][1];
                        let d = g.slice_channels(start, c).expect("concat layout");
                        accumulate(&mut grads, p, d, wants(p));
                        start += c;
                    }
                }
                Op::SliceChannels { x, start } => {
                    let d = unslice(&g, shapes[*x], *start);
                    accumulate(&mut grads, *x, d, wants(*x));
                }
                Op::Sum(x) => {
                    accumulate(&mut grads, *x, Tensor::full(shapes[*x], g.item()), wants(*x));
                }
                Op::Mse(a, b) => {
                    let scale = g.item() * T::cast(2.0 / val(*a).len() as f64);
                    let da = zip(val(*a), val(*b), |x, y| (x - y) * scale);
                    let db = da.map(|v| -v);
                    accumulate(&mut grads, *a, da, wants(*a));
                    accumulate(&mut grads, *b, db, wants(*b));
                }
                Op::Upsample { x, factor } => {
                    let d = conv::upsample_bilinear_backward(shapes[*x], *factor, &g);
                    accumulate(&mut grads, *x, d, wants(*x));
                }
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

#[inline]
fn sigmoid<T: Real>(a: T) -> T {
    if a >= T::zero() {
        T::one() / (T::one() + (-a).exp())
    } else {
        let e = a.exp();
        e / (T::one() + e)
    }
}

fn zip<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], i: usize, g: Tensor<T>, wanted: bool) {
    if !wanted {
        return;
    }
    match &mut grads[i] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + *b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn unslice<T: Real>(g: &Tensor<T>, full: Shape, start: usize) -> Tensor<T> {
    let [n, c, h, w] = full;
    let len = g.channels();
    let plane = h * w;
    let mut out = Tensor::zeros(full);
    for in_ in 0..n {
        let src = &g.data()[in_ * len * plane..(in_ + 1) * len * plane];
        let dst = (in_ * c + start) * plane;
        out.data_mut()[dst..dst + len * plane].copy_from_slice(src);
    }
    out
}

/// Result of [`Tape::backward`]: one gradient per recorded node that
/// required one.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Shape>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros if the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        self.grads[v.0].clone().unwrap_or_else(|| Tensor::zeros(self.shapes[v.0]))
    }

    pub fn take(&mut self, v: Var) -> Tensor<T> {
        self.grads[v.0].take().unwrap_or_else(|| Tensor::zeros(self.shapes[v.0]))
    }
}
