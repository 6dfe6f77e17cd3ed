use nalgebra::DMatrix;

pub const LEAKY_SLOPE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Activation {
    #[default]
    Identity,
    Tanh,
    LeakyRelu(f64),
    Sigmoid,
    /// Column-wise softmax.
    Softmax,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of every column.
pub fn softmax_columns(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z.clone();
    for mut col in out.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let sum = col.sum();
        col /= sum;
    }
    out
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu(LEAKY_SLOPE)
    }

    pub fn apply(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        match *self {
            Activation::Identity => z.clone(),
            Activation::Tanh => z.map(f64::tanh),
            Activation::LeakyRelu(a) => z.map(|v| if v < 0.0 { a * v } else { v }),
            Activation::Sigmoid => z.map(sigmoid),
            Activation::Softmax => softmax_columns(z),
        }
    }

    /// `dL/dz` from the pre-activation `z`, output `y` and `dL/dy`.
    pub fn backward(&self, z: &DMatrix<f64>, y: &DMatrix<f64>, dy: &DMatrix<f64>) -> DMatrix<f64> {
        match *self {
            Activation::Identity => dy.clone(),
            Activation::Tanh => dy.zip_map(y, |d, t| d * (1.0 - t * t)),
            Activation::LeakyRelu(a) => dy.zip_map(z, |d, v| if v < 0.0 { a * d } else { d }),
            Activation::Sigmoid => dy.zip_map(y, |d, s| d * s * (1.0 - s)),
            Activation::Softmax => {
                let mut dz = dy.component_mul(y);
                for (j, mut col) in dz.column_iter_mut().enumerate() {
                    let dot = y.column(j).dot(&dy.column(j));
                    col -= y.column(j) * dot;
                }
                dz
            }
        }
    }
}
