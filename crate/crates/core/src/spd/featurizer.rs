use nalgebra::DVector;

use super::geometry::{euclidean_mean, pca_spatial_filter, riemannian_mean, upper_len, MeanOptions, SpatialFilter, TangentSpace};
use super::matrix::SpdMatrix;
use crate::error::{Error, Result};

/// Reference point used when projecting held-out covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferencePolicy {
    /// Reuse the training-set Riemannian mean.
    TrainMean,
    /// Riemannian mean of the batch being projected.
    #[default]
    BatchMean,
}

/// Whether each band gets its own PCA filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterScope {
    #[default]
    PerBand,
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentConfig {
    pub rank: usize,
    pub scope: FilterScope,
    /// Optional `γ` for a `γ·trace/R·I` ridge on reduced covariances.
    pub ridge: Option<f64>,
    pub mean: MeanOptions,
}

impl TangentConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            scope: FilterScope::PerBand,
            ridge: None,
            mean: MeanOptions::default(),
        }
    }
}

/// Per-band PCA reduction followed by tangent-space projection at a
/// Riemannian mean; one sample is a list of per-band covariances.
#[derive(Debug, Clone)]
pub struct TangentFeaturizer {
    config: TangentConfig,
    filters: Vec<SpatialFilter>,
    references: Vec<TangentSpace>,
}

fn check_bands(samples: &[Vec<SpdMatrix>]) -> Result<usize> {
    let bands = samples.first().ok_or(Error::Empty("tangent featurizer"))?.len();
    if bands == 0 || samples.iter().any(|s| s.len() != bands) {
        return Err(Error::Shape("samples disagree on band count".into()));
    }
    Ok(bands)
}

impl TangentFeaturizer {
    pub fn fit(samples: &[Vec<SpdMatrix>], config: TangentConfig) -> Result<Self> {
        let bands = check_bands(samples)?;
        let band_covs = |b: usize| -> Vec<SpdMatrix> { samples.iter().map(|s| s[b].clone()).collect() };
        let filters = match config.scope {
            FilterScope::PerBand => (0..bands)
                .map(|b| pca_spatial_filter(&band_covs(b), config.rank))
                .collect::<Result<Vec<_>>>()?,
            FilterScope::Shared => {
                let band_means = (0..bands)
                    .map(|b| euclidean_mean(&band_covs(b)))
                    .collect::<Result<Vec<_>>>()?;
                vec![pca_spatial_filter(&band_means, config.rank)?; bands]
            }
        };
        let mut me = Self {
            config,
            filters,
            references: Vec::new(),
        };
        me.references = me.batch_references(samples)?;
        Ok(me)
    }

    /// Rebuilds a fitted featurizer from stored filters and references.
    pub fn from_parts(config: TangentConfig, filters: Vec<SpatialFilter>, references: Vec<SpdMatrix>) -> Result<Self> {
        if filters.len() != references.len() || filters.is_empty() {
            return Err(Error::Shape("filters and references disagree".into()));
        }
        let references = references
            .into_iter()
            .map(TangentSpace::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            filters,
            references,
        })
    }

    pub fn config(&self) -> &TangentConfig {
        &self.config
    }

    pub fn filters(&self) -> &[SpatialFilter] {
        &self.filters
    }

    pub fn references(&self) -> Vec<&SpdMatrix> {
        self.references.iter().map(TangentSpace::reference).collect()
    }

    pub fn bands(&self) -> usize {
        self.filters.len()
    }

    /// `H · R(R+1)/2`.
    pub fn feature_len(&self) -> usize {
        self.filters.iter().map(|f| upper_len(f.rank())).sum()
    }

    fn reduce(&self, band: usize, c: &SpdMatrix) -> Result<SpdMatrix> {
        let r = self.filters[band].reduce(c)?;
        match self.config.ridge {
            Some(gamma) => r.with_ridge(gamma),
            None => Ok(r),
        }
    }

    fn batch_references(&self, samples: &[Vec<SpdMatrix>]) -> Result<Vec<TangentSpace>> {
        let bands = check_bands(samples)?;
        if bands != self.filters.len() {
            return Err(Error::Shape(format!(
                "{bands} bands given, featurizer has {}",
                self.filters.len()
            )));
        }
        (0..bands)
            .map(|b| {
                let reduced = samples
                    .iter()
                    .map(|s| self.reduce(b, &s[b]))
                    .collect::<Result<Vec<_>>>()?;
                TangentSpace::new(riemannian_mean(&reduced, self.config.mean)?.mean)
            })
            .collect()
    }

    fn project(&self, sample: &[SpdMatrix], refs: &[TangentSpace]) -> Result<DVector<f64>> {
        if sample.len() != refs.len() {
            return Err(Error::Shape(format!(
                "{} bands given, featurizer has {}",
                sample.len(),
                refs.len()
            )));
        }
        let mut out = Vec::with_capacity(self.feature_len());
        for (b, (c, space)) in sample.iter().zip(refs).enumerate() {
            let v = space.vectorize(&self.reduce(b, c)?)?;
            out.extend(v.values.iter());
        }
        Ok(DVector::from_vec(out))
    }

    /// Projects one sample at the training references.
    pub fn transform(&self, sample: &[SpdMatrix]) -> Result<DVector<f64>> {
        self.project(sample, &self.references)
    }

    /// Projects a batch, re-estimating the references from the batch itself
    /// under [`ReferencePolicy::BatchMean`].
    pub fn transform_batch(&self, samples: &[Vec<SpdMatrix>], policy: ReferencePolicy) -> Result<Vec<DVector<f64>>> {
        let batch_refs;
        let refs = match policy {
            ReferencePolicy::TrainMean => &self.references,
            ReferencePolicy::BatchMean => {
                batch_refs = self.batch_references(samples)?;
                &batch_refs
            }
        };
        samples.iter().map(|s| self.project(s, refs)).collect()
    }
}
