//! Small neural layers on top of the tape: affine maps, perceptrons and the
//! linear → standardize → ReLU head.

use crate::error::{Error, Result};
use crate::numkern::array::DenseArray;
use crate::numkern::tape::{Tape, Var};
use crate::rng::SceneRng;
use crate::scalar::Real;

/// Epsilon inside the standardization denominator.
pub const NORM_EPS: f64 = 1e-5;

/// Named view over every tensor of a parameter structure, in a fixed order.
pub trait ParamSet<T: Real> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a DenseArray<T>)>);

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut DenseArray<T>)>);

    fn named_tensors(&self) -> Vec<(String, &DenseArray<T>)> {
        let mut out = Vec::new();
        self.tensors("", &mut out);
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut DenseArray<T>)> {
        let mut out = Vec::new();
        self.tensors_mut("", &mut out);
        out
    }

    fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform `±1/sqrt(fan_in)` initialization.
pub fn uniform_init<T: Real>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut SceneRng,
) -> DenseArray<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.range(-bound, bound)))
        .collect();
    DenseArray::from_raw(vec![rows, cols], data)
}

/// Affine map `x · W + b` with `W: in×out`, `b: 1×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: DenseArray<T>,
    pub bias: DenseArray<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl<T: Real> Linear<T> {
    pub fn new(weight: DenseArray<T>, bias: DenseArray<T>) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [1, weight.cols()] {
            return Err(Error::Shape {
                op: "Linear::new",
                lhs: weight.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        Ok(Self { weight, bias })
    }

    /// Random weights, zero bias.
    pub fn init(inp: usize, out: usize, rng: &mut SceneRng) -> Self {
        Self {
            weight: uniform_init(inp, out, inp, rng),
            bias: DenseArray::zeros(1, out),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: DenseArray::identity(dim),
            bias: DenseArray::zeros(1, dim),
        }
    }

    pub fn zeros(inp: usize, out: usize) -> Self {
        Self {
            weight: DenseArray::zeros(inp, out),
            bias: DenseArray::zeros(1, out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn trace(&self, tape: &Tape<T>) -> LinearVars {
        LinearVars {
            weight: tape.param(self.weight.clone()),
            bias: tape.param(self.bias.clone()),
        }
    }
}

impl LinearVars {
    pub fn forward<T: Real>(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        let h = tape.matmul(x, self.weight)?;
        tape.add_row(h, self.bias)
    }

    pub fn vars(&self, out: &mut Vec<Var>) {
        out.push(self.weight);
        out.push(self.bias);
    }
}

impl<T: Real> ParamSet<T> for Linear<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a DenseArray<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut DenseArray<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

/// Perceptron: ReLU between layers, identity after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<Linear<T>>,
}

#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<LinearVars>,
}

impl<T: Real> MlpParams<T> {
    pub fn new(layers: Vec<Linear<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter(
                "perceptron needs at least one layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape {
                    op: "MlpParams::new",
                    lhs: pair[0].weight.shape().to_vec(),
                    rhs: pair[1].weight.shape().to_vec(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Random perceptron with layer widths `dims[0] → dims[1] → … → dims[last]`.
    pub fn init(dims: &[usize], rng: &mut SceneRng) -> Self {
        assert!(dims.len() >= 2, "need input and output widths");
        Self {
            layers: dims
                .windows(2)
                .map(|w| Linear::init(w[0], w[1], rng))
                .collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn trace(&self, tape: &Tape<T>) -> MlpVars {
        MlpVars {
            layers: self.layers.iter().map(|l| l.trace(tape)).collect(),
        }
    }

    /// Untraced forward on a private tape.
    pub fn forward(&self, x: &DenseArray<T>) -> Result<DenseArray<T>> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape {
                op: "mlp_forward",
                lhs: x.shape().to_vec(),
                rhs: self.layers[0].weight.shape().to_vec(),
            });
        }
        let tape = Tape::new();
        let vars = self.trace(&tape);
        let xv = tape.constant(x.clone());
        let out = vars.forward(&tape, xv)?;
        Ok(tape.value_cloned(out))
    }
}

impl MlpVars {
    pub fn forward<T: Real>(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    pub fn vars(&self, out: &mut Vec<Var>) {
        self.layers.iter().for_each(|l| l.vars(out));
    }
}

impl<T: Real> ParamSet<T> for MlpParams<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a DenseArray<T>)>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.tensors(&join(prefix, &i.to_string()), out);
        }
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut DenseArray<T>)>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.tensors_mut(&join(prefix, &i.to_string()), out);
        }
    }
}

/// Linear map, per-feature standardization over the points of one cloud,
/// learnable per-feature scale/shift, then ReLU. No running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NormActHead<T> {
    pub linear: Linear<T>,
    pub scale: DenseArray<T>,
    pub shift: DenseArray<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct NormActVars {
    pub linear: LinearVars,
    pub scale: Var,
    pub shift: Var,
}

impl<T: Real> NormActHead<T> {
    pub fn init(dim: usize, rng: &mut SceneRng) -> Self {
        Self {
            linear: Linear::init(dim, dim, rng),
            scale: DenseArray::filled(1, dim, T::one()),
            shift: DenseArray::zeros(1, dim),
        }
    }

    pub fn with_linear(linear: Linear<T>) -> Self {
        let d = linear.out_dim();
        Self {
            linear,
            scale: DenseArray::filled(1, d, T::one()),
            shift: DenseArray::zeros(1, d),
        }
    }

    pub fn trace(&self, tape: &Tape<T>) -> NormActVars {
        NormActVars {
            linear: self.linear.trace(tape),
            scale: tape.param(self.scale.clone()),
            shift: tape.param(self.shift.clone()),
        }
    }

    pub fn forward(&self, x: &DenseArray<T>) -> Result<DenseArray<T>> {
        let tape = Tape::new();
        let vars = self.trace(&tape);
        let xv = tape.constant(x.clone());
        let out = vars.forward(&tape, xv)?;
        Ok(tape.value_cloned(out))
    }
}

impl NormActVars {
    pub fn forward<T: Real>(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        let n = tape.value(x).rows();
        if n < 2 {
            return Err(Error::Precondition(format!(
                "normalization head needs at least 2 points, got {n}"
            )));
        }
        let h = self.linear.forward(tape, x)?;
        let z = tape.standardize_cols(h, T::lit(NORM_EPS))?;
        let z = tape.mul_row(z, self.scale)?;
        let z = tape.add_row(z, self.shift)?;
        tape.relu(z)
    }

    pub fn vars(&self, out: &mut Vec<Var>) {
        self.linear.vars(out);
        out.push(self.scale);
        out.push(self.shift);
    }
}

impl<T: Real> ParamSet<T> for NormActHead<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a DenseArray<T>)>) {
        self.linear.tensors(&join(prefix, "linear"), out);
        out.push((join(prefix, "scale"), &self.scale));
        out.push((join(prefix, "shift"), &self.shift));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut DenseArray<T>)>) {
        self.linear.tensors_mut(&join(prefix, "linear"), out);
        out.push((join(prefix, "scale"), &mut self.scale));
        out.push((join(prefix, "shift"), &mut self.shift));
    }
}
