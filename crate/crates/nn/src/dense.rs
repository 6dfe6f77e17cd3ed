use nalgebra::DMatrix;
use rand::Rng;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::param::{join, Module, Param};

/// Fully connected layer on a batch stored column-wise (`in × B → out × B`).
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
    pub activation: Activation,
    cache: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)>,
}

impl Dense {
    pub fn new<R: Rng>(rng: &mut R, input: usize, output: usize, activation: Activation) -> Self {
        Self {
            w: Param::glorot(rng, output, input, input, output),
            b: Param::zeros(output, 1),
            activation,
            cache: None,
        }
    }

    pub fn input_len(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn output_len(&self) -> usize {
        self.w.value.nrows()
    }

    fn pre(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_len() {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.input_len(),
                x.nrows()
            )));
        }
        let mut z = &self.w.value * x;
        for mut col in z.column_iter_mut() {
            col += self.b.value.column(0);
        }
        Ok(z)
    }

    pub fn forward(&mut self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let z = self.pre(x)?;
        let y = self.activation.apply(&z);
        self.cache = Some((x.clone(), z, y.clone()));
        Ok(y)
    }

    /// Forward pass without keeping a cache.
    pub fn infer(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.activation.apply(&self.pre(x)?))
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, dy: &DMatrix<f64>) -> DMatrix<f64> {
        let (x, z, y) = self.cache.as_ref().expect("backward before forward");
        let dz = self.activation.backward(z, y, dy);
        self.w.grad += &dz * x.transpose();
        self.b.grad += dz.column_sum();
        self.w.value.transpose() * dz
    }
}

impl Module for Dense {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "w"), &mut self.w);
        f(&join(prefix, "b"), &mut self.b);
    }
}
