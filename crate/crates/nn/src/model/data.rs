use nalgebra::{DMatrix, DVector};

use super::network::InputDims;
use crate::error::{Error, Result};
use crate::loss::{LossKind, OutputHead};

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Real(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Target matrix for the given rows, shaped like the head's logits.
    pub fn matrix(&self, head: &OutputHead, units: usize, rows: &[usize]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(units, rows.len());
        match (self, head.loss) {
            (Targets::Classes(c), LossKind::CrossEntropy) => {
                for (j, &i) in rows.iter().enumerate() {
                    if c[i] >= units {
                        return Err(Error::Shape(format!("class {} with {units} outputs", c[i])));
                    }
                    m[(c[i], j)] = 1.0;
                }
            }
            (Targets::Classes(c), LossKind::BinaryCrossEntropy) => {
                for (j, &i) in rows.iter().enumerate() {
                    if c[i] > 1 {
                        return Err(Error::Shape(format!("class {} in a binary task", c[i])));
                    }
                    m[(0, j)] = c[i] as f64;
                }
            }
            (Targets::Real(y), LossKind::MeanSquared) => {
                for (j, &i) in rows.iter().enumerate() {
                    m[(0, j)] = y[i];
                }
            }
            _ => return Err(Error::InvalidParameter(format!("{:?} targets do not fit {:?}", self, head.loss))),
        }
        Ok(m)
    }
}

/// One row per trial: a `L × F` feature sequence, a tangent vector and a
/// target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub temporal: Vec<DMatrix<f64>>,
    pub spatial: Vec<DVector<f64>>,
    pub targets: Targets,
}

/// Network input: `L` matrices of `F × B` and one `S × B` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub temporal: Vec<DMatrix<f64>>,
    pub spatial: DMatrix<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn windows(&self) -> usize {
        self.temporal.first().map_or(0, |t| t.nrows())
    }

    pub fn check(&self, dims: InputDims) -> Result<()> {
        let n = self.len();
        if self.temporal.len() != n || self.spatial.len() != n {
            return Err(Error::Shape(format!(
                "{} sequences, {} spatial vectors, {} targets",
                self.temporal.len(),
                self.spatial.len(),
                n
            )));
        }
        let l = self.windows();
        for (i, t) in self.temporal.iter().enumerate() {
            if t.nrows() != l || t.ncols() != dims.features {
                return Err(Error::Shape(format!(
                    "trial {i}: sequence {} × {}, expected {l} × {}",
                    t.nrows(),
                    t.ncols(),
                    dims.features
                )));
            }
        }
        for (i, s) in self.spatial.iter().enumerate() {
            if s.len() != dims.spatial {
                return Err(Error::Shape(format!("trial {i}: spatial length {}, expected {}", s.len(), dims.spatial)));
            }
        }
        Ok(())
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            temporal: rows.iter().map(|&i| self.temporal[i].clone()).collect(),
            spatial: rows.iter().map(|&i| self.spatial[i].clone()).collect(),
            targets: match &self.targets {
                Targets::Classes(c) => Targets::Classes(rows.iter().map(|&i| c[i]).collect()),
                Targets::Real(y) => Targets::Real(rows.iter().map(|&i| y[i]).collect()),
            },
        }
    }

    pub fn batch(&self, rows: &[usize], norm: &Standardizer) -> Batch {
        let l = self.windows();
        let f = self.temporal.first().map_or(0, |t| t.ncols());
        let s = self.spatial.first().map_or(0, |v| v.len());
        let temporal = (0..l)
            .map(|step| {
                DMatrix::from_fn(f, rows.len(), |k, j| {
                    (self.temporal[rows[j]][(step, k)] - norm.temporal_mean[k]) / norm.temporal_scale[k]
                })
            })
            .collect();
        let spatial = DMatrix::from_fn(s, rows.len(), |k, j| {
            (self.spatial[rows[j]][k] - norm.spatial_mean[k]) / norm.spatial_scale[k]
        });
        Batch { temporal, spatial }
    }
}

/// Per-feature z-scoring fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub temporal_mean: DMatrix<f64>,
    pub temporal_scale: DMatrix<f64>,
    pub spatial_mean: DMatrix<f64>,
    pub spatial_scale: DMatrix<f64>,
}

const SCALE_FLOOR: f64 = 1e-12;

impl Standardizer {
    pub fn identity(dims: InputDims) -> Self {
        Self {
            temporal_mean: DMatrix::zeros(dims.features, 1),
            temporal_scale: DMatrix::from_element(dims.features, 1, 1.0),
            spatial_mean: DMatrix::zeros(dims.spatial, 1),
            spatial_scale: DMatrix::from_element(dims.spatial, 1, 1.0),
        }
    }

    /// Temporal statistics pool all windows of all trials.
    pub fn fit(data: &Dataset, dims: InputDims) -> Result<Self> {
        data.check(dims)?;
        if data.is_empty() {
            return Err(Error::InvalidParameter("cannot standardize an empty dataset".into()));
        }
        let moments = |rows: &mut dyn Iterator<Item = Vec<f64>>, width: usize| {
            let (mut sum, mut sq, mut n) = (vec![0.0; width], vec![0.0; width], 0.0);
            for r in rows {
                for k in 0..width {
                    sum[k] += r[k];
                    sq[k] += r[k] * r[k];
                }
                n += 1.0;
            }
            let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
            let scale: Vec<f64> = (0..width)
                .map(|k| {
                    let sd = (sq[k] / n - mean[k] * mean[k]).max(0.0).sqrt();
                    if sd > SCALE_FLOOR { sd } else { 1.0 }
                })
                .collect();
            (DMatrix::from_vec(width, 1, mean), DMatrix::from_vec(width, 1, scale))
        };
        let (temporal_mean, temporal_scale) = moments(
            &mut data.temporal.iter().flat_map(|t| t.row_iter().map(|r| r.iter().copied().collect()).collect::<Vec<_>>()),
            dims.features,
        );
        let (spatial_mean, spatial_scale) =
            moments(&mut data.spatial.iter().map(|v| v.as_slice().to_vec()), dims.spatial);
        Ok(Self { temporal_mean, temporal_scale, spatial_mean, spatial_scale })
    }

    pub(crate) fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut DMatrix<f64>)) {
        f(&format!("{prefix}.temporal_mean"), &mut self.temporal_mean);
        f(&format!("{prefix}.temporal_scale"), &mut self.temporal_scale);
        f(&format!("{prefix}.spatial_mean"), &mut self.spatial_mean);
        f(&format!("{prefix}.spatial_scale"), &mut self.spatial_scale);
    }
}
