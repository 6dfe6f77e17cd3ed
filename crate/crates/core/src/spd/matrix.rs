use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below `SINGULAR_RTOL × λ_max` make a matrix near-singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// Relative asymmetry tolerated before symmetrisation is refused.
const SYMMETRY_RTOL: f64 = 1e-8;

/// Symmetric positive (semi-)definite matrix with a cached eigendecomposition
/// (eigenvalues descending, orthonormal eigenvectors as columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    definite: bool,
}

impl SpdMatrix {
    /// Accepts a symmetric PSD matrix; `is_definite()` tells SPD from SPSD.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let sym = symmetrize_checked(m)?;
        let (eigenvalues, eigenvectors) = sorted_eigen(&sym);
        let lmax = eigenvalues[0].max(0.0);
        let lmin = eigenvalues[eigenvalues.len() - 1];
        if lmin < -1e-10 * lmax.max(f64::MIN_POSITIVE) {
            return Err(Error::Shape(format!(
                "matrix is not positive semi-definite (eigenvalue {lmin:e})"
            )));
        }
        let definite = lmax > 0.0 && lmin > SINGULAR_RTOL * lmax;
        Ok(Self {
            entries: sym,
            eigenvalues,
            eigenvectors,
            definite,
        })
    }

    /// Like [`SpdMatrix::new`] but fails unless the matrix is SPD.
    pub fn definite(m: DMatrix<f64>) -> Result<Self> {
        let s = Self::new(m)?;
        s.require_definite()?;
        Ok(s)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
            eigenvalues: DVector::from_element(n, 1.0),
            eigenvectors: DMatrix::identity(n, n),
            definite: true,
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn is_definite(&self) -> bool {
        self.definite
    }

    pub fn require_definite(&self) -> Result<()> {
        if self.definite {
            return Ok(());
        }
        Err(Error::NearSingular {
            eigenvalue: self.eigenvalues[self.dim() - 1],
            threshold: SINGULAR_RTOL * self.eigenvalues[0].max(0.0),
        })
    }

    pub fn determinant(&self) -> f64 {
        self.eigenvalues.iter().product()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// `V f(Λ) Vᵀ`.
    pub fn apply<F: Fn(f64) -> f64>(&self, f: F) -> DMatrix<f64> {
        let d = self.eigenvalues.map(f);
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&d);
        symmetrize(&scaled * self.eigenvectors.transpose())
    }

    pub fn logm(&self) -> Result<DMatrix<f64>> {
        self.require_definite()?;
        Ok(self.apply(f64::ln))
    }

    pub fn sqrtm(&self) -> DMatrix<f64> {
        self.apply(|l| l.max(0.0).sqrt())
    }

    pub fn invsqrtm(&self) -> Result<DMatrix<f64>> {
        self.require_definite()?;
        Ok(self.apply(|l| 1.0 / l.sqrt()))
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.require_definite()?;
        Ok(self.apply(|l| 1.0 / l))
    }

    /// Adds `gamma · trace / R · I`.
    pub fn with_ridge(&self, gamma: f64) -> Result<Self> {
        let n = self.dim();
        let shift = gamma * self.trace() / n as f64;
        Self::new(&self.entries + DMatrix::identity(n, n) * shift)
    }

    /// `Wᵀ C W`.
    pub fn congruence(&self, w: &DMatrix<f64>) -> Result<Self> {
        if w.nrows() != self.dim() {
            return Err(Error::Shape(format!(
                "congruence by {}x{} on {}x{}",
                w.nrows(),
                w.ncols(),
                self.dim(),
                self.dim()
            )));
        }
        Self::new(w.transpose() * &self.entries * w)
    }
}

/// Matrix exponential of a symmetric matrix; always SPD.
pub fn expm(sym: &DMatrix<f64>) -> Result<SpdMatrix> {
    let s = symmetrize_checked(sym.clone())?;
    let (vals, vecs) = sorted_eigen(&s);
    let d = vals.map(f64::exp);
    let m = symmetrize(&vecs * DMatrix::from_diagonal(&d) * vecs.transpose());
    SpdMatrix::new(m)
}

/// Matrix logarithm of an SPD matrix.
pub fn logm(c: &SpdMatrix) -> Result<DMatrix<f64>> {
    c.logm()
}

pub fn invsqrtm(c: &SpdMatrix) -> Result<DMatrix<f64>> {
    c.invsqrtm()
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn symmetrize_checked(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Shape(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let asym = (&m - m.transpose()).norm();
    if asym > SYMMETRY_RTOL * scale {
        return Err(Error::Shape(format!(
            "matrix is not symmetric (relative asymmetry {:e})",
            asym / scale
        )));
    }
    Ok(symmetrize(m))
}

fn sorted_eigen(sym: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym.clone());
    let n = sym.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}
