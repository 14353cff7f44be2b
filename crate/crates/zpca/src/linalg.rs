//! Dense matrix primitives: norms, Gram matrices, top-k right singular
//! subspaces, and projection errors.
//!
//! Everything here is sized for the tall-and-skinny regime (n ≫ d): the only
//! factorization ever performed is a symmetric eigendecomposition of a d×d
//! Gram matrix, so no O(n²) memory or O(n·d²)-beyond-one-pass work appears.
//! All operations are pure value computations over finite doubles; inputs
//! with NaN or infinite entries are rejected at construction, which keeps
//! every downstream energy identity meaningful.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// A validated dense real matrix (n ≥ 1, d ≥ 1, all entries finite).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    data: Array2<f64>,
}

impl DenseMatrix {
    /// Wraps an array after checking shape and finiteness.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be at least 1×1, got {n}×{d}"
            )));
        }
        if let Some(((i, j), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("matrix entry ({i}, {j})"),
            });
        }
        Ok(Self { data })
    }

    /// Builds from row vectors of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::DimensionMismatch("no rows given".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let mut data = Array2::zeros((rows.len(), d));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[[i, j]] = v;
            }
        }
        Self::new(data)
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    /// Read access to the underlying array.
    pub fn array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }
}

/// Squared Frobenius norm: `Σ_{i,j} M_{i,j}²`.
pub fn frobenius_sq(m: &DenseMatrix) -> f64 {
    frobenius_sq_view(&m.view())
}

/// Squared Frobenius norm of a raw view (for intermediates that are not
/// themselves validated protocol inputs).
pub fn frobenius_sq_view(m: &ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Gram matrix `MᵀM` (d×d, symmetric positive semidefinite).
pub fn gram(m: &DenseMatrix) -> DenseMatrix {
    let g = m.data.t().dot(&m.data);
    DenseMatrix { data: g }
}

/// A rank-k orthogonal projection onto the span of `k` orthonormal columns,
/// stored as its d×k basis `V`; the projection itself is `P = VVᵀ`.
#[derive(Clone, Debug)]
pub struct Projection {
    basis: Array2<f64>,
}

impl Projection {
    /// Wraps a basis after verifying `‖VᵀV − I‖_F ≤ 1e−10`.
    pub fn new(basis: Array2<f64>) -> Result<Self> {
        let (d, k) = basis.dim();
        if k == 0 || k > d {
            return Err(Error::InvalidParameter(format!(
                "projection rank {k} must lie in [1, {d}]"
            )));
        }
        if basis.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "projection basis".into(),
            });
        }
        let gram = basis.t().dot(&basis);
        let mut dev = 0.0;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                dev += (gram[[i, j]] - target).powi(2);
            }
        }
        if dev.sqrt() > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "basis columns not orthonormal: ‖VᵀV − I‖_F = {:e}",
                dev.sqrt()
            )));
        }
        Ok(Self { basis })
    }

    /// Ambient dimension d.
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Projection rank k.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// The orthonormal basis `V` (d×k).
    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    /// Applies `P = VVᵀ` from the right: returns `M·V·Vᵀ`.
    pub fn apply(&self, m: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if m.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} columns, projection lives in dimension {}",
                m.ncols(),
                self.dim()
            )));
        }
        Ok(m.dot(&self.basis).dot(&self.basis.t()))
    }
}

/// Eigen-pairs of a symmetric matrix, sorted by descending eigenvalue.
fn symmetric_eigen_sorted(g: &DenseMatrix) -> (Vec<f64>, Array2<f64>) {
    let d = g.nrows();
    let mat = DMatrix::from_row_iterator(d, d, g.data.iter().copied());
    let eig = nalgebra::linalg::SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Array2::zeros((d, d));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..d {
            vectors[[row, col]] = eig.eigenvectors[(row, src)];
        }
    }
    (values, vectors)
}

/// Top-k right singular subspace of `M`, as a [`Projection`].
///
/// Computed from the symmetric eigendecomposition of the d×d Gram matrix;
/// when singular values tie, any orthonormal basis of the corresponding
/// invariant subspace is a valid answer, so callers should compare energies
/// rather than bases.
pub fn top_k_right_singular(m: &DenseMatrix, k: usize) -> Result<Projection> {
    let d = m.ncols();
    if k == 0 || k > d {
        return Err(Error::InvalidParameter(format!(
            "requested rank {k} outside [1, {d}]"
        )));
    }
    let (_, vectors) = symmetric_eigen_sorted(&gram(m));
    let basis = vectors.slice(ndarray::s![.., 0..k]).to_owned();
    Projection::new(basis)
}

/// Energy of the best rank-k approximation error: `‖M − [M]_k‖_F² = Σ_{i>k} σ_i²`.
pub fn rank_k_error(m: &DenseMatrix, k: usize) -> Result<f64> {
    let d = m.ncols();
    if k == 0 || k > d {
        return Err(Error::InvalidParameter(format!(
            "requested rank {k} outside [1, {d}]"
        )));
    }
    let (values, _) = symmetric_eigen_sorted(&gram(m));
    // Tiny negative eigenvalues are roundoff from the Gram product.
    Ok(values[k..].iter().map(|&v| v.max(0.0)).sum())
}

/// Residual energy `‖M − M·V·Vᵀ‖_F²` of projecting onto `P`.
pub fn projection_error(m: &DenseMatrix, p: &Projection) -> Result<f64> {
    let projected = p.apply(&m.view())?;
    let mut err = 0.0;
    for (a, b) in m.data.iter().zip(projected.iter()) {
        let r = a - b;
        err += r * r;
    }
    Ok(err)
}
