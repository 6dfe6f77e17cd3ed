use nalgebra::DMatrix;
use rand::Rng;

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: DMatrix<f64>,
    pub grad: DMatrix<f64>,
}

impl Param {
    pub fn new(value: DMatrix<f64>) -> Self {
        let grad = DMatrix::zeros(value.nrows(), value.ncols());
        Self { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(DMatrix::zeros(rows, cols))
    }

    /// Glorot uniform in `±√(6/(fan_in+fan_out))`.
    pub fn glorot<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::new(DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit)))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything holding parameters. Visiting order is fixed and defines the
/// layout used by the optimizer, gradient checks and checkpoints.
pub trait Module {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));

    /// Non-trainable state that still belongs in a checkpoint.
    fn visit_buffers(&mut self, _prefix: &str, _f: &mut dyn FnMut(&str, &mut DMatrix<f64>)) {}

    fn zero_grad(&mut self) {
        self.visit_params("", &mut |_, p| p.zero_grad());
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, p| n += p.value.len());
        n
    }

    fn grad_norm(&mut self) -> f64 {
        let mut s = 0.0;
        self.visit_params("", &mut |_, p| s += p.grad.norm_squared());
        s.sqrt()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Scales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(module: &mut dyn Module, max_norm: f64) -> f64 {
    let norm = module.grad_norm();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        module.visit_params("", &mut |_, p| p.grad *= scale);
    }
    norm
}
