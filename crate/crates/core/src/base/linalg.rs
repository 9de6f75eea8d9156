//! Symmetric matrices and linear subspaces with orthonormal bases.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Singular triplets with `s > 0`, largest first: `M = U diag(s) V^T`.
///
/// Computed from the symmetric eigenproblem of `[0 M; M^T 0]`, whose
/// eigenpairs are `±s_i` with `(u_i, ±v_i) / √2`. nalgebra's bidiagonal SVD
/// occasionally returns factors that do not reproduce rank-deficient inputs.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: Matrix,
    pub s: Vector,
    pub v: Matrix,
}

impl ThinSvd {
    pub fn new(m: &Matrix) -> Self {
        let (r, c) = m.shape();
        let mut aug = Matrix::zeros(r + c, r + c);
        aug.view_mut((0, r), (r, c)).copy_from(m);
        aug.view_mut((r, 0), (c, r)).copy_from(&m.transpose());
        let eig = SymmetricEigen::new(aug);
        let mut idx: Vec<usize> = (0..r + c).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        idx.truncate(r.min(c));
        let col = |i: usize, top: bool| {
            let e = eig.eigenvectors.column(i);
            let part: Vector = if top { e.rows(0, r).into_owned() } else { e.rows(r, c).into_owned() };
            let norm = part.norm();
            if norm > 0.0 {
                part / norm
            } else {
                part
            }
        };
        let u: Vec<Vector> = idx.iter().map(|&i| col(i, true)).collect();
        let v: Vec<Vector> = idx.iter().map(|&i| col(i, false)).collect();
        ThinSvd {
            u: if u.is_empty() { Matrix::zeros(r, 0) } else { Matrix::from_columns(&u) },
            s: Vector::from_iterator(idx.len(), idx.iter().map(|&i| eig.eigenvalues[i])),
            v: if v.is_empty() { Matrix::zeros(c, 0) } else { Matrix::from_columns(&v) },
        }
    }

    /// Number of leading singular values above `cutoff`.
    pub fn rank(&self, cutoff: f64) -> usize {
        self.s.iter().take_while(|&&s| s > cutoff).count()
    }

    /// Moore-Penrose inverse treating singular values `<= eps` as zero.
    pub fn pseudo_inverse(&self, eps: f64) -> Matrix {
        let k = self.rank(eps);
        let mut out = Matrix::zeros(self.v.nrows(), self.u.nrows());
        for i in 0..k {
            out += self.v.column(i) * self.u.column(i).transpose() / self.s[i];
        }
        out
    }

    /// Orthonormal basis of the span of the first `k` left singular vectors.
    fn left_basis(&self, k: usize) -> Matrix {
        if k == 0 {
            return Matrix::zeros(self.u.nrows(), 0);
        }
        let qr = self.u.columns(0, k).into_owned().qr();
        qr.q()
    }
}

/// Relative singular-value cutoff used when no tolerance is supplied.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// A symmetric matrix. The constructor symmetrizes its input and keeps the
/// Frobenius norm of `A - A^T` measured before symmetrization.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: Matrix,
    asym_defect: f64,
}

impl SymMatrix {
    pub fn new(a: Matrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::argument(format!(
                "symmetric matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("matrix has non-finite entries"));
        }
        let asym_defect = (&a - a.transpose()).norm();
        let m = (&a + a.transpose()) * 0.5;
        Ok(SymMatrix { m, asym_defect })
    }

    pub fn from_row_major(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::argument(format!(
                "expected {} entries for order {n}, got {}",
                n * n,
                entries.len()
            )));
        }
        SymMatrix::new(Matrix::from_row_slice(n, n, entries))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            m: Matrix::zeros(n, n),
            asym_defect: 0.0,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        SymMatrix {
            m: Matrix::identity(n, n) * c,
            asym_defect: 0.0,
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix {
            m: Matrix::from_diagonal(&Vector::from_column_slice(d)),
            asym_defect: 0.0,
        }
    }

    pub fn order(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn into_matrix(self) -> Matrix {
        self.m
    }

    pub fn asym_defect(&self) -> f64 {
        self.asym_defect
    }

    /// `<x, A x>`
    pub fn quad(&self, x: &Vector) -> f64 {
        x.dot(&(&self.m * x))
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        self.m.clone().symmetric_eigen()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.order() == 0 {
            return f64::INFINITY;
        }
        self.eigen().eigenvalues.min()
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        if self.order() == 0 {
            return 0.0;
        }
        self.eigen().eigenvalues.amax()
    }

    pub fn frobenius(&self) -> f64 {
        self.m.norm()
    }

    pub fn dist(&self, other: &SymMatrix) -> f64 {
        (&self.m - &other.m).norm()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            m: &self.m + &other.m,
            asym_defect: 0.0,
        }
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix {
            m: &self.m * c,
            asym_defect: 0.0,
        }
    }

    pub fn row_major(&self) -> Vec<f64> {
        let n = self.order();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }
}

/// A linear subspace of `R^n`, stored as an orthonormal basis (`n x m`).
#[derive(Clone, Debug)]
pub struct Subspace {
    basis: Matrix,
    rank_tol: f64,
}

impl Subspace {
    /// The span of the columns of `spanning`, canonicalized by an SVD.
    ///
    /// Left singular vectors whose singular value exceeds
    /// `rank_tol * max(sigma_max, 1e-300)` are kept; a zero matrix spans `{0}`.
    pub fn from_spanning(spanning: &Matrix, rank_tol: f64) -> Self {
        let n = spanning.nrows();
        if spanning.ncols() == 0 || spanning.norm() == 0.0 {
            return Subspace::zero(n).with_rank_tol(rank_tol);
        }
        let svd = ThinSvd::new(spanning);
        let smax = svd.s.iter().copied().fold(0.0, f64::max);
        let basis = svd.left_basis(svd.rank(rank_tol * smax));
        Subspace { basis, rank_tol }
    }

    /// Like [`Subspace::from_spanning`] but with an absolute singular-value cutoff.
    pub fn from_spanning_abs(spanning: &Matrix, abs_tol: f64) -> Self {
        let n = spanning.nrows();
        if spanning.ncols() == 0 {
            return Subspace::zero(n);
        }
        let svd = ThinSvd::new(spanning);
        let basis = svd.left_basis(svd.rank(abs_tol));
        Subspace {
            basis,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }

    pub fn span(n: usize, vectors: &[Vector]) -> Self {
        if vectors.is_empty() {
            return Subspace::zero(n);
        }
        Subspace::from_spanning(&Matrix::from_columns(vectors), DEFAULT_RANK_TOL)
    }

    pub fn zero(n: usize) -> Self {
        Subspace {
            basis: Matrix::zeros(n, 0),
            rank_tol: DEFAULT_RANK_TOL,
        }
    }

    pub fn full(n: usize) -> Self {
        Subspace {
            basis: Matrix::identity(n, n),
            rank_tol: DEFAULT_RANK_TOL,
        }
    }

    /// Takes an already orthonormal basis; rejects it when `B^T B` is off `I`.
    pub fn from_orthonormal(basis: Matrix) -> Result<Self> {
        let m = basis.ncols();
        let defect = (basis.transpose() * &basis - Matrix::identity(m, m)).norm();
        if defect > 1e-12 {
            return Err(Error::numeric(format!(
                "basis is not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Subspace {
            basis,
            rank_tol: DEFAULT_RANK_TOL,
        })
    }

    pub fn with_rank_tol(mut self, rank_tol: f64) -> Self {
        self.rank_tol = rank_tol;
        self
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient_dim()
    }

    /// `P = B B^T`
    pub fn projector(&self) -> Matrix {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, x: &Vector) -> Vector {
        &self.basis * (self.basis.transpose() * x)
    }

    /// Euclidean distance from `x` to the subspace.
    pub fn dist(&self, x: &Vector) -> f64 {
        (x - self.project(x)).norm()
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.dist(x) <= tol * (1.0 + x.norm())
    }

    /// Orthogonal complement, with an orthonormal basis of dimension `n - m`.
    pub fn complement(&self) -> Subspace {
        let n = self.ambient_dim();
        let m = self.dim();
        if m == 0 {
            return Subspace::full(n);
        }
        if m == n {
            return Subspace::zero(n);
        }
        let q = Matrix::identity(n, n) - self.projector();
        let eig = SymmetricEigen::new(q);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let cols: Vec<Vector> = idx[..n - m]
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        Subspace {
            basis: Matrix::from_columns(&cols),
            rank_tol: self.rank_tol,
        }
    }

    /// Frobenius distance between the orthogonal projectors.
    pub fn projector_distance(&self, other: &Subspace) -> f64 {
        (self.projector() - other.projector()).norm()
    }
}

/// Rank-`k` subspace spanned by the leading eigenvectors of a symmetric matrix.
///
/// Used to snap an averaged or extrapolated projector back onto the set of
/// rank-`k` projectors.
pub fn leading_eigenspace(p: &Matrix, k: usize) -> Subspace {
    let n = p.nrows();
    if k == 0 {
        return Subspace::zero(n);
    }
    let sym = (p + p.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let cols: Vec<Vector> = idx[..k]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    Subspace {
        basis: Matrix::from_columns(&cols),
        rank_tol: DEFAULT_RANK_TOL,
    }
}

/// Wire format for a symmetric matrix: order plus row-major entries.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SymMatrixRecord {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl From<&SymMatrix> for SymMatrixRecord {
    fn from(a: &SymMatrix) -> Self {
        SymMatrixRecord {
            n: a.order(),
            entries: a.row_major(),
        }
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SymMatrixRecord::from(self).serialize(s)
    }
}
