//! Output activations paired with their losses. The head receives raw
//! logits and returns the mean loss over the batch with `dL/dlogits`.

use nalgebra::DMatrix;

use crate::activation::{sigmoid, softmax_columns};
use crate::error::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Softmax,
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    BinaryCrossEntropy,
    MeanSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputHead {
    pub activation: OutputActivation,
    pub loss: LossKind,
}

/// `ln max(p, floor)`, letting NaN through so divergence stays visible.
fn floored_ln(p: f64) -> f64 {
    if p < PROB_FLOOR {
        PROB_FLOOR.ln()
    } else {
        p.ln()
    }
}

/// `−Σ y ln max(p, floor)`.
pub fn cross_entropy(target: &[f64], prob: &[f64]) -> f64 {
    -target.iter().zip(prob).map(|(y, &p)| y * floored_ln(p)).sum::<f64>()
}

pub fn binary_cross_entropy(y: f64, p: f64) -> f64 {
    -(y * floored_ln(p) + (1.0 - y) * floored_ln(1.0 - p))
}

pub fn mean_squared_error(target: &[f64], pred: &[f64]) -> f64 {
    target.iter().zip(pred).map(|(y, p)| (y - p).powi(2)).sum::<f64>() / target.len() as f64
}

impl OutputHead {
    pub fn new(activation: OutputActivation, loss: LossKind) -> Result<Self> {
        use LossKind::*;
        use OutputActivation::*;
        match (activation, loss) {
            (Softmax, CrossEntropy) | (Sigmoid, BinaryCrossEntropy) | (Sigmoid, MeanSquared) | (Linear, MeanSquared) => {
                Ok(Self { activation, loss })
            }
            _ => Err(Error::InvalidParameter(format!("{activation:?} output cannot be trained with {loss:?}"))),
        }
    }

    /// Output units for a task with `classes` classes (`classes` ignored for
    /// regression).
    pub fn units(&self, classes: usize) -> usize {
        match self.loss {
            LossKind::CrossEntropy => classes,
            LossKind::BinaryCrossEntropy | LossKind::MeanSquared => 1,
        }
    }

    pub fn is_classification(&self) -> bool {
        self.loss != LossKind::MeanSquared
    }

    pub fn predict(&self, logits: &DMatrix<f64>) -> DMatrix<f64> {
        match self.activation {
            OutputActivation::Softmax => softmax_columns(logits),
            OutputActivation::Sigmoid => logits.map(sigmoid),
            OutputActivation::Linear => logits.clone(),
        }
    }

    /// Mean loss over the batch and `dL/dlogits`. `target` has the same
    /// shape as `logits` (one-hot rows for cross-entropy).
    pub fn loss_and_grad(&self, logits: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        if logits.shape() != target.shape() {
            return Err(Error::Shape(format!(
                "targets {:?} vs outputs {:?}",
                target.shape(),
                logits.shape()
            )));
        }
        let batch = logits.ncols() as f64;
        let p = self.predict(logits);
        Ok(match self.loss {
            LossKind::CrossEntropy => {
                let mut total = 0.0;
                for (j, col) in logits.column_iter().enumerate() {
                    let max = col.max();
                    let lse = max + col.map(|z| (z - max).exp()).sum().ln();
                    for (k, &z) in col.iter().enumerate() {
                        let log_p = z - lse;
                        let floor = PROB_FLOOR.ln();
                        total -= target[(k, j)] * if log_p < floor { floor } else { log_p };
                    }
                }
                (total / batch, (&p - target) / batch)
            }
            LossKind::BinaryCrossEntropy => {
                let n = logits.len() as f64;
                let total: f64 = target.iter().zip(&p).map(|(&y, &q)| binary_cross_entropy(y, q)).sum();
                (total / n, (&p - target) / n)
            }
            LossKind::MeanSquared => {
                let n = logits.len() as f64;
                let diff = &p - target;
                let loss = diff.norm_squared() / n;
                let mut grad = diff * (2.0 / n);
                if self.activation == OutputActivation::Sigmoid {
                    grad.zip_apply(&p, |g, q| *g *= q * (1.0 - q));
                }
                (loss, grad)
            }
        })
    }
}
