use nalgebra::DMatrix;

use crate::param::Module;

/// Adam with bias-corrected moments. Moment buffers are allocated lazily
/// on the first step in the module's visiting order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<DMatrix<f64>>,
    pub v: Vec<DMatrix<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step(&mut self, module: &mut dyn Module) {
        if self.m.is_empty() {
            module.visit_params("", &mut |_, p| {
                self.m.push(DMatrix::zeros(p.value.nrows(), p.value.ncols()));
                self.v.push(DMatrix::zeros(p.value.nrows(), p.value.ncols()));
            });
        }
        self.t += 1;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let mut k = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        module.visit_params("", &mut |_, p| {
            let (m, v) = (&mut ms[k], &mut vs[k]);
            assert_eq!(m.shape(), p.value.shape(), "optimizer state does not match parameters");
            for ((w, &g), (mi, vi)) in p.value.iter_mut().zip(p.grad.iter()).zip(m.iter_mut().zip(v.iter_mut())) {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
            k += 1;
        });
    }
}
