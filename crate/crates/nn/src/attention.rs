//! Soft attention pooling over a sequence of hidden states.
//!
//! `u_i = tanh(W h_i + b)`. In [`AttentionMode::Scalar`] the score of step
//! `i` is the sum of the components of `u_i` and `α = softmax_i(score)`;
//! the context is `v = Σ α_i h_i`. In [`AttentionMode::PerComponent`] the
//! softmax over steps runs separately for every component and
//! `v = Σ α_i ⊙ h_i`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::param::{join, Module, Param};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionMode {
    #[default]
    Scalar,
    PerComponent,
}

#[derive(Debug, Clone)]
pub struct Attention {
    pub w: Param,
    pub b: Param,
    pub mode: AttentionMode,
    cache: Option<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)>,
}

/// Softmax across the sequence, independently for every entry position.
pub fn softmax_over_steps(scores: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let first = &scores[0];
    let mut max = first.clone();
    for s in &scores[1..] {
        max.zip_apply(s, |m, v| *m = m.max(v));
    }
    let exps: Vec<DMatrix<f64>> = scores.iter().map(|s| s.zip_map(&max, |v, m| (v - m).exp())).collect();
    let mut total = DMatrix::zeros(first.nrows(), first.ncols());
    for e in &exps {
        total += e;
    }
    exps.into_iter().map(|e| e.component_div(&total)).collect()
}

impl Attention {
    pub fn new<R: Rng>(rng: &mut R, hidden: usize, mode: AttentionMode) -> Self {
        Self {
            w: Param::glorot(rng, hidden, hidden, hidden, hidden),
            b: Param::zeros(hidden, 1),
            mode,
            cache: None,
        }
    }

    /// Context `v` (`H × B`) and the attention weights per step
    /// (`1 × B` or `H × B` depending on the mode).
    pub fn forward(&mut self, hs: &[DMatrix<f64>]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let nh = self.w.value.nrows();
        let Some(first) = hs.first() else {
            return Err(Error::Shape("attention over an empty sequence".into()));
        };
        let batch = first.ncols();
        let mut us = Vec::with_capacity(hs.len());
        for h in hs {
            if h.nrows() != nh || h.ncols() != batch {
                return Err(Error::Shape(format!("attention expects {nh} × {batch} states")));
            }
            let mut a = &self.w.value * h;
            for mut col in a.column_iter_mut() {
                col += self.b.value.column(0);
            }
            us.push(a.map(f64::tanh));
        }
        let scores: Vec<DMatrix<f64>> = match self.mode {
            AttentionMode::Scalar => us.iter().map(column_sums).collect(),
            AttentionMode::PerComponent => us.clone(),
        };
        let alphas = softmax_over_steps(&scores);
        let mut v = DMatrix::zeros(nh, batch);
        for (h, a) in hs.iter().zip(&alphas) {
            v += weight(h, a);
        }
        self.cache = Some((hs.to_vec(), us, alphas.clone()));
        Ok((v, alphas))
    }

    /// Accumulates parameter gradients and returns `dL/dh_i`.
    pub fn backward(&mut self, dv: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let (hs, us, alphas) = self.cache.as_ref().expect("backward before forward");
        let mut dhs: Vec<DMatrix<f64>> = hs.iter().zip(alphas).map(|(_, a)| weight(dv, a)).collect();
        let dalphas: Vec<DMatrix<f64>> = hs
            .iter()
            .map(|h| {
                let p = dv.component_mul(h);
                match self.mode {
                    AttentionMode::Scalar => column_sums(&p),
                    AttentionMode::PerComponent => p,
                }
            })
            .collect();
        let mut mean = DMatrix::zeros(dalphas[0].nrows(), dalphas[0].ncols());
        for (a, d) in alphas.iter().zip(&dalphas) {
            mean += a.component_mul(d);
        }
        for (i, h) in hs.iter().enumerate() {
            let ds = alphas[i].component_mul(&(&dalphas[i] - &mean));
            let du = match self.mode {
                AttentionMode::Scalar => DMatrix::from_fn(h.nrows(), h.ncols(), |_, j| ds[(0, j)]),
                AttentionMode::PerComponent => ds,
            };
            let dpre = du.zip_map(&us[i], |d, u| d * (1.0 - u * u));
            self.w.grad += &dpre * h.transpose();
            self.b.grad += dpre.column_sum();
            dhs[i] += self.w.value.transpose() * dpre;
        }
        dhs
    }
}

/// `1 × B` row of column sums.
fn column_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(1, m.ncols(), |_, j| m.column(j).sum())
}

/// `a ⊙ h` with a single-row `a` broadcast over the rows of `h`.
fn weight(h: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 1 {
        DMatrix::from_fn(h.nrows(), h.ncols(), |r, c| h[(r, c)] * a[(0, c)])
    } else {
        h.component_mul(a)
    }
}

impl Module for Attention {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "w"), &mut self.w);
        f(&join(prefix, "b"), &mut self.b);
    }
}
