use super::geometry::{airm_distance, riemannian_mean, MeanOptions};
use super::matrix::SpdMatrix;
use crate::error::{Error, Result};

/// Minimum distance to Riemannian mean classifier.
#[derive(Debug, Clone)]
pub struct Mdrm {
    means: Vec<SpdMatrix>,
}

impl Mdrm {
    /// One Riemannian mean per class `0..classes`.
    pub fn fit(covs: &[SpdMatrix], labels: &[usize], classes: usize, opts: MeanOptions) -> Result<Self> {
        if covs.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} covariances, {} labels",
                covs.len(),
                labels.len()
            )));
        }
        let means = (0..classes)
            .map(|k| {
                let members: Vec<SpdMatrix> = covs
                    .iter()
                    .zip(labels)
                    .filter(|(_, &l)| l == k)
                    .map(|(c, _)| c.clone())
                    .collect();
                if members.is_empty() {
                    return Err(Error::EmptyClass(k));
                }
                Ok(riemannian_mean(&members, opts)?.mean)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { means })
    }

    pub fn from_means(means: Vec<SpdMatrix>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::Empty("MDRM"));
        }
        Ok(Self { means })
    }

    pub fn means(&self) -> &[SpdMatrix] {
        &self.means
    }

    pub fn distances(&self, c: &SpdMatrix) -> Result<Vec<f64>> {
        self.means.iter().map(|m| airm_distance(m, c)).collect()
    }

    /// Nearest class mean; ties go to the lowest class index.
    pub fn predict(&self, c: &SpdMatrix) -> Result<usize> {
        let d = self.distances(c)?;
        let mut best = 0;
        for (k, &v) in d.iter().enumerate().skip(1) {
            if v < d[best] {
                best = k;
            }
        }
        Ok(best)
    }
}
