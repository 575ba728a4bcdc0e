use crate::error::{Error, Result};
use crate::numkern::DenseArray;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let OptimizerKind::Adam { beta1, beta2, eps } = *self {
            let ok = (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0;
            if !ok {
                return Err(Error::Config(format!(
                    "adam needs beta1, beta2 in [0, 1) and eps > 0, got {beta1}, {beta2}, {eps}"
                )));
            }
        }
        Ok(())
    }
}

/// Plain SGD or Adam over a fixed list of tensors. Tensors flagged as frozen
/// are never touched.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    frozen: Vec<bool>,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, shapes: &[usize], frozen: Vec<bool>) -> Self {
        let zeros: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
        Self {
            kind,
            lr,
            frozen,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(
        &mut self,
        params: &mut [&mut DenseArray<f64>],
        grads: &[DenseArray<f64>],
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Usage(format!(
                "optimizer tracks {} tensors, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        for (t, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            p.require_same_shape(g, "optimizer step")?;
            if self.frozen[t] {
                continue;
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, &gi) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= self.lr * gi;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(self.step);
                    let c2 = 1.0 - beta2.powi(self.step);
                    let (m, v) = (&mut self.m[t], &mut self.v[t]);
                    for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        *w -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
