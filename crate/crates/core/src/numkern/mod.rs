//! Dense arrays, reverse-mode differentiation and small neural layers.

mod array;
mod finite_diff;
mod layers;
mod tape;

pub use array::DenseArray;
pub use finite_diff::{finite_diff_grad, relative_discrepancy, FD_EPS};
pub(crate) use layers::join;
pub use layers::{
    uniform_init, Linear, LinearVars, MlpParams, MlpVars, NormActHead, NormActVars, ParamSet,
    NORM_EPS,
};
pub use tape::{Gradients, Tape, Var};

use crate::error::Result;
use crate::scalar::Real;

pub fn matmul<T: Real>(a: &DenseArray<T>, b: &DenseArray<T>) -> Result<DenseArray<T>> {
    a.matmul(b)
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows<T: Real>(m: &DenseArray<T>) -> DenseArray<T> {
    tape::softmax_rows(m)
}

pub fn mlp_forward<T: Real>(p: &MlpParams<T>, x: &DenseArray<T>) -> Result<DenseArray<T>> {
    p.forward(x)
}

pub fn norm_act_head<T: Real>(p: &NormActHead<T>, x: &DenseArray<T>) -> Result<DenseArray<T>> {
    p.forward(x)
}
