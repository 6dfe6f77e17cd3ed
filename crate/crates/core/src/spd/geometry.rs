use std::f64::consts::SQRT_2;

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::matrix::{expm, symmetrize, SpdMatrix};
use crate::error::{Error, Result};
use crate::segment::EegSegment;

/// Spatial covariance `X Xᵀ / (T − 1)` of a segment.
pub fn scm(segment: &EegSegment) -> Result<SpdMatrix> {
    scm_of(&segment.samples)
}

pub fn scm_of(x: &DMatrix<f64>) -> Result<SpdMatrix> {
    let t = x.ncols();
    if t < 2 {
        return Err(Error::Length {
            what: "covariance estimate",
            needed: 2,
            actual: t,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("segment samples"));
    }
    SpdMatrix::new(x * x.transpose() / (t - 1) as f64)
}

fn check_dims(covs: &[SpdMatrix], what: &'static str) -> Result<usize> {
    let first = covs.first().ok_or(Error::Empty(what))?;
    let n = first.dim();
    if covs.iter().any(|c| c.dim() != n) {
        return Err(Error::Shape(format!("{what}: matrices differ in dimension")));
    }
    Ok(n)
}

/// Arithmetic mean of the inputs.
pub fn euclidean_mean(covs: &[SpdMatrix]) -> Result<SpdMatrix> {
    let n = check_dims(covs, "euclidean mean")?;
    let sum = covs
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, c| acc + c.matrix());
    SpdMatrix::new(sum / covs.len() as f64)
}

/// Affine-invariant distance `‖log(C₁^{-1/2} C₂ C₁^{-1/2})‖_F`.
pub fn airm_distance(c1: &SpdMatrix, c2: &SpdMatrix) -> Result<f64> {
    Ok(TangentSpace::new(c1.clone())?.whitened_log(c2)?.norm())
}

/// `Log_{C_ref}(C) = C_ref^{1/2} log(C_ref^{-1/2} C C_ref^{-1/2}) C_ref^{1/2}`.
pub fn log_map(c_ref: &SpdMatrix, c: &SpdMatrix) -> Result<DMatrix<f64>> {
    TangentSpace::new(c_ref.clone())?.log_map(c)
}

/// `Exp_{C_ref}(T) = C_ref^{1/2} exp(C_ref^{-1/2} T C_ref^{-1/2}) C_ref^{1/2}`.
pub fn exp_map(c_ref: &SpdMatrix, t: &DMatrix<f64>) -> Result<SpdMatrix> {
    TangentSpace::new(c_ref.clone())?.exp_map(t)
}

/// Norm of a tangent vector at `c`: `[tr(T C⁻¹ T C⁻¹)]^{1/2}`.
pub fn tangent_norm(c: &SpdMatrix, t: &DMatrix<f64>) -> Result<f64> {
    let inv = c.inverse()?;
    let m = t * &inv;
    Ok((&m * &m).trace().max(0.0).sqrt())
}

/// Tangent space at a reference point with its square roots cached.
#[derive(Debug, Clone)]
pub struct TangentSpace {
    reference: SpdMatrix,
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
}

impl TangentSpace {
    pub fn new(reference: SpdMatrix) -> Result<Self> {
        let inv_sqrt = reference.invsqrtm()?;
        let sqrt = reference.sqrtm();
        Ok(Self {
            reference,
            sqrt,
            inv_sqrt,
        })
    }

    pub fn reference(&self) -> &SpdMatrix {
        &self.reference
    }

    fn check(&self, dim: usize) -> Result<()> {
        if dim != self.reference.dim() {
            return Err(Error::Shape(format!(
                "{dim}x{dim} matrix against {0}x{0} reference",
                self.reference.dim()
            )));
        }
        Ok(())
    }

    /// `S = log(C_ref^{-1/2} C C_ref^{-1/2})`.
    pub fn whitened_log(&self, c: &SpdMatrix) -> Result<DMatrix<f64>> {
        self.check(c.dim())?;
        let w = symmetrize(&self.inv_sqrt * c.matrix() * &self.inv_sqrt);
        SpdMatrix::new(w)?.logm()
    }

    pub fn log_map(&self, c: &SpdMatrix) -> Result<DMatrix<f64>> {
        let s = self.whitened_log(c)?;
        Ok(symmetrize(&self.sqrt * s * &self.sqrt))
    }

    pub fn exp_map(&self, t: &DMatrix<f64>) -> Result<SpdMatrix> {
        self.check(t.nrows())?;
        let w = symmetrize(&self.inv_sqrt * t * &self.inv_sqrt);
        self.exp_whitened(&w)
    }

    /// `C_ref^{1/2} exp(S) C_ref^{1/2}` for a whitened tangent matrix `S`.
    pub fn exp_whitened(&self, s: &DMatrix<f64>) -> Result<SpdMatrix> {
        let e = expm(s)?;
        SpdMatrix::new(symmetrize(&self.sqrt * e.matrix() * &self.sqrt))
    }

    /// Half-vectorised whitened log with √2-weighted off-diagonals; its
    /// Euclidean norm equals the geodesic distance to the reference.
    pub fn vectorize(&self, c: &SpdMatrix) -> Result<TangentVector> {
        Ok(TangentVector {
            values: upper(&self.whitened_log(c)?),
        })
    }
}

/// Half-vectorised tangent-space image of one covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub values: DVector<f64>,
}

impl TangentVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }
}

/// `R(R+1)/2`.
pub fn upper_len(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Row-major upper triangle `(S₁₁, √2S₁₂, …, √2S₁R, S₂₂, …, S_RR)`.
pub fn upper(s: &DMatrix<f64>) -> DVector<f64> {
    let r = s.nrows();
    let mut out = Vec::with_capacity(upper_len(r));
    for i in 0..r {
        out.push(s[(i, i)]);
        for j in i + 1..r {
            out.push(SQRT_2 * s[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`upper`].
pub fn unupper(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let r = ((((8 * v.len() + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    if upper_len(r) != v.len() {
        return Err(Error::Shape(format!("{} is not a triangular number", v.len())));
    }
    let mut s = DMatrix::zeros(r, r);
    let mut k = 0;
    for i in 0..r {
        s[(i, i)] = v[k];
        k += 1;
        for j in i + 1..r {
            s[(i, j)] = v[k] / SQRT_2;
            s[(j, i)] = s[(i, j)];
            k += 1;
        }
    }
    Ok(s)
}

/// `upper(log(C_ref^{-1/2} C C_ref^{-1/2}))`.
pub fn tangent_vectorize(c_ref: &SpdMatrix, c: &SpdMatrix) -> Result<TangentVector> {
    TangentSpace::new(c_ref.clone())?.vectorize(c)
}

/// Stopping rule of the Riemannian mean iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanOptions {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for MeanOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiemannianMean {
    pub mean: SpdMatrix,
    pub iterations: usize,
    /// `‖J‖_F` of the last step taken.
    pub step_norm: f64,
    pub converged: bool,
}

/// Fixed-point iteration for the Karcher mean under the affine-invariant
/// metric, started from the arithmetic mean:
///
/// `J = (1/P) Σ Log_{C}(Cᵢ)`, `C ← Exp_{C}(J)`, until `‖J‖_F < tol`.
///
/// Takes the full tangent step each iteration. Hitting `max_iter` returns the
/// current estimate with `converged == false`.
pub fn riemannian_mean(covs: &[SpdMatrix], opts: MeanOptions) -> Result<RiemannianMean> {
    let n = check_dims(covs, "riemannian mean")?;
    for c in covs {
        c.require_definite()?;
    }
    let mut current = euclidean_mean(covs)?;
    let p = covs.len() as f64;
    let mut step_norm = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let space = TangentSpace::new(current)?;
        let mut mean_log = DMatrix::zeros(n, n);
        for c in covs {
            mean_log += space.whitened_log(c)?;
        }
        mean_log /= p;
        let j = symmetrize(&space.sqrt * &mean_log * &space.sqrt);
        step_norm = j.norm();
        current = space.exp_whitened(&mean_log)?;
        if step_norm < opts.tolerance {
            return Ok(RiemannianMean {
                mean: current,
                iterations: iter,
                step_norm,
                converged: true,
            });
        }
    }
    warn!(
        "riemannian mean did not converge in {} iterations (|J| = {:e})",
        opts.max_iter, step_norm
    );
    Ok(RiemannianMean {
        mean: current,
        iterations: opts.max_iter,
        step_norm,
        converged: false,
    })
}

/// PCA spatial filter: the top-`R` eigenvectors of the arithmetic mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFilter {
    /// `N × R`, orthonormal columns.
    pub w: DMatrix<f64>,
    /// All eigenvalues of the averaged covariance, descending.
    pub spectrum: DVector<f64>,
}

impl SpatialFilter {
    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn channels(&self) -> usize {
        self.w.nrows()
    }

    pub fn retained_variance(&self) -> f64 {
        let total: f64 = self.spectrum.iter().sum();
        self.spectrum.iter().take(self.rank()).sum::<f64>() / total
    }

    /// `Wᵀ C W`.
    pub fn reduce(&self, c: &SpdMatrix) -> Result<SpdMatrix> {
        c.congruence(&self.w)
    }

    /// `Wᵀ X`.
    pub fn reduce_segment(&self, segment: &EegSegment) -> Result<EegSegment> {
        if segment.channels() != self.channels() {
            return Err(Error::Shape(format!(
                "filter for {} channels applied to {}",
                self.channels(),
                segment.channels()
            )));
        }
        EegSegment::new(self.w.transpose() * &segment.samples, segment.fs, segment.label)
    }
}

pub fn pca_spatial_filter(covs: &[SpdMatrix], rank: usize) -> Result<SpatialFilter> {
    let mean = euclidean_mean(covs)?;
    let n = mean.dim();
    if rank == 0 || rank > n {
        return Err(Error::Rank { rank, max: n });
    }
    Ok(SpatialFilter {
        w: mean.eigenvectors().columns(0, rank).into_owned(),
        spectrum: mean.eigenvalues().clone(),
    })
}
