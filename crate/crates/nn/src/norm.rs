//! Batch normalization and inverted dropout. Both operate on a sequence of
//! `D × B` matrices; a single matrix is a sequence of length one.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::param::{join, Module, Param};

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPS: f64 = 1e-3;

/// Per-feature standardization pooled over batch and time, with a learned
/// scale/shift and running statistics for evaluation.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: DMatrix<f64>,
    pub running_var: DMatrix<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<(Vec<DMatrix<f64>>, DVector<f64>, bool)>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Param::new(DMatrix::from_element(dim, 1, 1.0)),
            beta: Param::zeros(dim, 1),
            running_mean: DMatrix::zeros(dim, 1),
            running_var: DMatrix::from_element(dim, 1, 1.0),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
            cache: None,
        }
    }

    pub fn forward(&mut self, xs: &[DMatrix<f64>], train: bool) -> Result<Vec<DMatrix<f64>>> {
        let dim = self.gamma.value.nrows();
        if xs.iter().any(|x| x.nrows() != dim) {
            return Err(Error::Shape(format!("batch norm expects {dim} features")));
        }
        let count: usize = xs.iter().map(|x| x.ncols()).sum();
        let (mean, var) = if train {
            if count == 0 {
                return Err(Error::Shape("batch norm over an empty batch".into()));
            }
            let mut mean = DVector::zeros(dim);
            for x in xs {
                mean += x.column_sum();
            }
            mean /= count as f64;
            let mut var = DVector::zeros(dim);
            for x in xs {
                for col in x.column_iter() {
                    var += (col - &mean).map(|d| d * d);
                }
            }
            var /= count as f64;
            let m = self.momentum;
            self.running_mean = &self.running_mean * m + DMatrix::from_column_slice(dim, 1, mean.as_slice()) * (1.0 - m);
            self.running_var = &self.running_var * m + DMatrix::from_column_slice(dim, 1, var.as_slice()) * (1.0 - m);
            (mean, var)
        } else {
            (self.running_mean.column(0).into_owned(), self.running_var.column(0).into_owned())
        };
        let inv_std = var.map(|v| 1.0 / (v + self.eps).sqrt());
        let mut xhat = Vec::with_capacity(xs.len());
        let mut out = Vec::with_capacity(xs.len());
        for x in xs {
            let mut xh = x.clone();
            for mut col in xh.column_iter_mut() {
                col -= &mean;
                col.component_mul_assign(&inv_std);
            }
            let mut y = xh.clone();
            for mut col in y.column_iter_mut() {
                col.component_mul_assign(&self.gamma.value.column(0));
                col += self.beta.value.column(0);
            }
            xhat.push(xh);
            out.push(y);
        }
        self.cache = Some((xhat, inv_std, train));
        Ok(out)
    }

    pub fn backward(&mut self, dys: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let (xhat, inv_std, train) = self.cache.as_ref().expect("backward before forward");
        let dim = inv_std.len();
        let count: usize = dys.iter().map(|d| d.ncols()).sum();
        let mut sum_dy = DVector::zeros(dim);
        let mut sum_dy_xhat = DVector::zeros(dim);
        for (dy, xh) in dys.iter().zip(xhat) {
            sum_dy += dy.column_sum();
            sum_dy_xhat += dy.component_mul(xh).column_sum();
        }
        self.beta.grad += &sum_dy;
        self.gamma.grad += &sum_dy_xhat;
        let g = self.gamma.value.column(0);
        let m = count as f64;
        dys.iter()
            .zip(xhat)
            .map(|(dy, xh)| {
                DMatrix::from_fn(dim, dy.ncols(), |r, c| {
                    let k = g[r] * inv_std[r];
                    if *train {
                        k * (dy[(r, c)] - sum_dy[r] / m - xh[(r, c)] * sum_dy_xhat[r] / m)
                    } else {
                        k * dy[(r, c)]
                    }
                })
            })
            .collect()
    }
}

impl Module for BatchNorm {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut DMatrix<f64>)) {
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

/// Inverted dropout: in training each entry is zeroed with probability
/// `rate` and survivors are scaled by `1/(1−rate)`; evaluation is identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
    masks: Vec<DMatrix<f64>>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidParameter(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate, rng: ChaCha8Rng::seed_from_u64(seed), masks: Vec::new() })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&mut self, xs: &[DMatrix<f64>], train: bool) -> Vec<DMatrix<f64>> {
        self.masks.clear();
        if !train || self.rate == 0.0 {
            return xs.to_vec();
        }
        let keep = 1.0 / (1.0 - self.rate);
        xs.iter()
            .map(|x| {
                let mask = DMatrix::from_fn(x.nrows(), x.ncols(), |_, _| {
                    if self.rng.random::<f64>() < self.rate {
                        0.0
                    } else {
                        keep
                    }
                });
                let y = x.component_mul(&mask);
                self.masks.push(mask);
                y
            })
            .collect()
    }

    pub fn backward(&mut self, dys: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        if self.masks.is_empty() {
            return dys.to_vec();
        }
        dys.iter().zip(&self.masks).map(|(d, m)| d.component_mul(m)).collect()
    }
}

/// Stateless inverted dropout of a single vector.
pub fn dropout<R: Rng>(x: &DVector<f64>, rate: f64, rng: &mut R, train: bool) -> Result<DVector<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidParameter(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !train || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(x.map(|v| if rng.random::<f64>() < rate { 0.0 } else { v * keep }))
}
