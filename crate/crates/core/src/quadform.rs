//! Generalized quadratic forms `q = ½<x, Ax> + δ_L`.
//!
//! Graph subspaces, the constrained solve, eigenvalue-floor extension, the
//! closed-form Moreau envelope of a form and its inverse (recovering a form
//! from an envelope Hessian), and epi-limits of sequences of forms.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::base::linalg::leading_eigenspace;
use crate::base::{ExtReal, Matrix, SymMatrix, Subspace, ThinSvd, Vector, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};

/// Tolerance for `<x, v'> = <x', v>` on a graph subspace.
pub const SELF_ADJOINT_TOL: f64 = 1e-9;
/// Two forms are equal when their graph projectors are this close.
pub const FORM_EQ_TOL: f64 = 1e-6;
/// Cauchy tolerance on graph projectors in [`gqf_epi_limit`].
pub const EPI_LIMIT_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GeneralizedQuadraticForm {
    a: SymMatrix,
    l: Subspace,
}

impl GeneralizedQuadraticForm {
    pub fn new(a: SymMatrix, l: Subspace) -> Result<Self> {
        if a.order() != l.ambient_dim() {
            return Err(Error::argument(format!(
                "matrix order {} differs from subspace ambient dimension {}",
                a.order(),
                l.ambient_dim()
            )));
        }
        Ok(GeneralizedQuadraticForm { a, l })
    }

    /// `½<x, Ax>` on all of `R^n`.
    pub fn quadratic(a: SymMatrix) -> Self {
        let n = a.order();
        GeneralizedQuadraticForm { a, l: Subspace::full(n) }
    }

    /// `δ_{0}` on `R^n`.
    pub fn indicator_origin(n: usize) -> Self {
        GeneralizedQuadraticForm {
            a: SymMatrix::zeros(n),
            l: Subspace::zero(n),
        }
    }

    /// The one-dimensional form `q_[a](w) = a w²`, i.e. matrix `[2a]`.
    pub fn coefficient_1d(a: f64) -> Self {
        GeneralizedQuadraticForm::quadratic(SymMatrix::from_diagonal(&[2.0 * a]))
    }

    pub fn dim(&self) -> usize {
        self.a.order()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.a
    }

    pub fn subspace(&self) -> &Subspace {
        &self.l
    }

    /// `A` compressed to `L`: `C^T A C` for the orthonormal basis `C`.
    pub fn restricted_matrix(&self) -> Matrix {
        let c = self.l.basis();
        c.transpose() * self.a.matrix() * c
    }

    /// Smallest eigenvalue of `A` on `L` (`+inf` when `L = {0}`).
    pub fn min_eigenvalue_on_l(&self) -> f64 {
        if self.l.is_zero() {
            return f64::INFINITY;
        }
        self.restricted_matrix().symmetric_eigen().eigenvalues.min()
    }

    /// The coefficient `a` with `q = q_[a]` for 1-D forms finite everywhere.
    pub fn coefficient(&self) -> Option<f64> {
        (self.dim() == 1 && self.l.is_full()).then(|| self.a.matrix()[(0, 0)] / 2.0)
    }

    pub fn is_indicator_origin(&self) -> bool {
        self.l.is_zero()
    }

    /// Representative with `A = C A_L C^T + σ P_{L⊥}`, `σ` the smallest
    /// eigenvalue of `A_L`; `A = 0` when `L = {0}`.
    pub fn canonical(&self) -> GeneralizedQuadraticForm {
        let n = self.dim();
        if self.l.is_zero() {
            return GeneralizedQuadraticForm::indicator_origin(n);
        }
        let c = self.l.basis();
        let al = self.restricted_matrix();
        let sigma = al.clone().symmetric_eigen().eigenvalues.min();
        let perp = Matrix::identity(n, n) - self.l.projector();
        let a = c * al * c.transpose() + perp * sigma;
        GeneralizedQuadraticForm {
            a: SymMatrix::new(a).expect("finite"),
            l: self.l.clone(),
        }
    }

    pub fn eval(&self, x: &Vector) -> Result<ExtReal> {
        gqf_eval(self, x)
    }

    pub fn graph(&self) -> GraphSubspace {
        gqf_graph(self)
    }

    /// Graph-projector distance; the only identifiable notion of closeness.
    pub fn distance(&self, other: &GeneralizedQuadraticForm) -> f64 {
        self.graph().projector_distance(&other.graph())
    }

    pub fn approx_eq(&self, other: &GeneralizedQuadraticForm, tol: f64) -> bool {
        self.dim() == other.dim() && self.distance(other) <= tol
    }

    /// `self + ½<x, Hx>`; the subspace is unchanged.
    pub fn add_quadratic(&self, h: &SymMatrix) -> Result<GeneralizedQuadraticForm> {
        if h.order() != self.dim() {
            return Err(Error::argument("dimension mismatch in quadratic shift"));
        }
        GeneralizedQuadraticForm::new(self.a.add(h), self.l.clone())
    }

    pub fn scale(&self, c: f64) -> GeneralizedQuadraticForm {
        GeneralizedQuadraticForm {
            a: self.a.scale(c),
            l: self.l.clone(),
        }
    }

    pub fn record(&self) -> FormRecord {
        let b = self.l.basis();
        FormRecord {
            n: self.dim(),
            a: self.a.row_major(),
            l_dim: self.l.dim(),
            l_basis: b.iter().copied().collect(),
            rank_tol: self.l.rank_tol(),
            coefficient: self.coefficient(),
            indicator_origin: self.is_indicator_origin(),
        }
    }
}

impl Serialize for GeneralizedQuadraticForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.record().serialize(s)
    }
}

/// Serialized form: `A` row-major, `L` basis column-major.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FormRecord {
    pub n: usize,
    pub a: Vec<f64>,
    pub l_dim: usize,
    pub l_basis: Vec<f64>,
    pub rank_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coefficient: Option<f64>,
    pub indicator_origin: bool,
}

impl FormRecord {
    pub fn to_form(&self) -> Result<GeneralizedQuadraticForm> {
        let a = SymMatrix::from_row_major(self.n, &self.a)?;
        if self.l_basis.len() != self.n * self.l_dim {
            return Err(Error::argument("basis length does not match n * l_dim"));
        }
        let b = Matrix::from_column_slice(self.n, self.l_dim, &self.l_basis);
        let l = Subspace::from_spanning(&b, self.rank_tol.max(DEFAULT_RANK_TOL));
        GeneralizedQuadraticForm::new(a, l)
    }
}

/// `gph dq` as an `n`-dimensional subspace of `R^{2n}` (x-block on top).
#[derive(Clone, Debug)]
pub struct GraphSubspace {
    n: usize,
    subspace: Subspace,
}

impl GraphSubspace {
    /// Span of the columns of `[X; Y]`; must have dimension `n`.
    pub fn from_blocks(x: &Matrix, y: &Matrix) -> Result<Self> {
        let n = x.nrows();
        if y.nrows() != n || x.ncols() != y.ncols() {
            return Err(Error::argument("graph blocks have mismatched shapes"));
        }
        let mut s = Matrix::zeros(2 * n, x.ncols());
        s.view_mut((0, 0), (n, x.ncols())).copy_from(x);
        s.view_mut((n, 0), (n, x.ncols())).copy_from(y);
        let subspace = Subspace::from_spanning(&s, DEFAULT_RANK_TOL);
        if subspace.dim() != n {
            return Err(Error::numeric(format!(
                "graph subspace has dimension {} instead of {n}",
                subspace.dim()
            )));
        }
        Ok(GraphSubspace { n, subspace })
    }

    /// Rank-`n` subspace nearest to a (possibly averaged) projector.
    pub fn from_projector(p: &Matrix) -> Result<Self> {
        if p.nrows() % 2 != 0 || p.nrows() != p.ncols() {
            return Err(Error::argument("graph projector must be 2n x 2n"));
        }
        let n = p.nrows() / 2;
        Ok(GraphSubspace {
            n,
            subspace: leading_eigenspace(p, n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.subspace.dim()
    }

    pub fn subspace(&self) -> &Subspace {
        &self.subspace
    }

    pub fn projector(&self) -> Matrix {
        self.subspace.projector()
    }

    pub fn projector_distance(&self, other: &GraphSubspace) -> f64 {
        self.subspace.projector_distance(&other.subspace)
    }

    fn blocks(&self) -> (Matrix, Matrix) {
        let b = self.subspace.basis();
        let n = self.n;
        (
            b.view((0, 0), (n, b.ncols())).into_owned(),
            b.view((n, 0), (n, b.ncols())).into_owned(),
        )
    }

    /// `||X^T Y - Y^T X||_F` for the orthonormal basis `[X; Y]`.
    pub fn self_adjoint_defect(&self) -> f64 {
        let (x, y) = self.blocks();
        let g = x.transpose() * &y;
        (&g - g.transpose()).norm()
    }

    /// Recovers the form whose subdifferential graph this is.
    ///
    /// `L` is the span of the x-block, cut at the absolute singular-value
    /// level `rank_tol` (the basis is orthonormal so the scale is fixed).
    pub fn to_form(&self, rank_tol: f64) -> Result<GeneralizedQuadraticForm> {
        let defect = self.self_adjoint_defect();
        if defect > SELF_ADJOINT_TOL.max(rank_tol) {
            return Err(Error::numeric(format!(
                "graph subspace is not self-adjoint (defect {defect:e})"
            )));
        }
        let (x, y) = self.blocks();
        let n = self.n;
        let l = Subspace::from_spanning_abs(&x, rank_tol).with_rank_tol(rank_tol);
        if l.is_zero() {
            return Ok(GeneralizedQuadraticForm::indicator_origin(n).with_rank_tol(rank_tol));
        }
        let c = l.basis();
        let cx = c.transpose() * &x;
        let cy = c.transpose() * &y;
        let pinv = ThinSvd::new(&cx).pseudo_inverse(rank_tol * 1e-3);
        let al = cy * pinv;
        let al = (&al + al.transpose()) * 0.5;
        let sigma = al.clone().symmetric_eigen().eigenvalues.min();
        let perp = Matrix::identity(n, n) - l.projector();
        let a = c * al * c.transpose() + perp * sigma;
        GeneralizedQuadraticForm::new(SymMatrix::new(a)?, l)
    }
}

impl GeneralizedQuadraticForm {
    fn with_rank_tol(mut self, rank_tol: f64) -> Self {
        self.l = self.l.with_rank_tol(rank_tol);
        self
    }
}

/// `½<x, Ax>` on `L`, `+inf` off `L`.
pub fn gqf_eval(q: &GeneralizedQuadraticForm, x: &Vector) -> Result<ExtReal> {
    if x.len() != q.dim() {
        return Err(Error::argument(format!(
            "point has length {}, form has dimension {}",
            x.len(),
            q.dim()
        )));
    }
    if q.l.dist(x) <= q.l.rank_tol() * (1.0 + x.norm()) {
        Ok(ExtReal::Finite(0.5 * q.a.quad(x)))
    } else {
        Ok(ExtReal::PosInf)
    }
}

/// `{(x, Ax + z) : x ∈ L, z ∈ L⊥}`.
pub fn gqf_graph(q: &GeneralizedQuadraticForm) -> GraphSubspace {
    let n = q.dim();
    let c = q.l.basis();
    let c_perp = q.l.complement();
    let cp = c_perp.basis();
    let mut x = Matrix::zeros(n, n);
    let mut y = Matrix::zeros(n, n);
    let m = c.ncols();
    x.view_mut((0, 0), (n, m)).copy_from(c);
    y.view_mut((0, 0), (n, m)).copy_from(&(q.a.matrix() * c));
    y.view_mut((0, m), (n, n - m)).copy_from(cp);
    GraphSubspace::from_blocks(&x, &y).expect("graph of a form has dimension n")
}

/// The unique `x ∈ L` with `Mx - w ⊥ L`, as `B (B^T M B)^{-1} B^T w`.
pub fn solve_constrained(m: &SymMatrix, l: &Subspace, w: &Vector) -> Result<Vector> {
    if l.is_zero() {
        return Err(Error::argument("constrained solve needs a nonzero subspace"));
    }
    if m.order() != l.ambient_dim() || w.len() != m.order() {
        return Err(Error::argument("dimension mismatch in constrained solve"));
    }
    let lmin = m.min_eigenvalue();
    if !(lmin > 0.0) {
        return Err(Error::numeric(format!(
            "matrix is not positive definite (smallest eigenvalue {lmin:e})"
        )));
    }
    solve_with_basis(m, l.basis(), w)
}

/// [`solve_constrained`] with a caller-supplied (not necessarily
/// orthonormal) basis of `L` in the columns of `b`.
pub fn solve_with_basis(m: &SymMatrix, b: &Matrix, w: &Vector) -> Result<Vector> {
    let btmb = b.transpose() * m.matrix() * b;
    let chol = Cholesky::new(btmb)
        .ok_or_else(|| Error::numeric("B^T M B is singular or indefinite"))?;
    let y = chol.solve(&(b.transpose() * w));
    Ok(b * y)
}

/// `P_L A P_L + σ P_{L⊥}`, which agrees with `A` on `L` and has every
/// eigenvalue `>= σ` provided `A|_L >= σ`.
pub fn eigenfloor_extension(a: &SymMatrix, l: &Subspace, sigma: f64) -> Result<SymMatrix> {
    let n = a.order();
    if l.ambient_dim() != n {
        return Err(Error::argument("dimension mismatch in eigenfloor extension"));
    }
    let p = l.projector();
    if !l.is_zero() {
        let c = l.basis();
        let eig = (c.transpose() * a.matrix() * c).symmetric_eigen();
        let (imin, lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, v)| (i, *v))
            .expect("nonempty");
        if lmin < sigma - 1e-10 * (1.0 + a.frobenius()) {
            let dir = c * eig.eigenvectors.column(imin);
            return Err(Error::argument(format!(
                "<w, Aw> = {lmin} < sigma = {sigma} along unit w = {:?} in L",
                dir.as_slice()
            )));
        }
    }
    let perp = Matrix::identity(n, n) - &p;
    SymMatrix::new(&p * a.matrix() * &p + perp * sigma)
}

fn check_lambda(lambda: f64, r: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::argument(format!("lambda must be positive, got {lambda}")));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::argument(format!("floor r must be finite and >= 0, got {r}")));
    }
    if r > 0.0 && lambda * r >= 1.0 {
        return Err(Error::argument(format!(
            "lambda = {lambda} is not below 1/r = {}",
            1.0 / r
        )));
    }
    Ok(())
}

/// Matrix `Q` with `e_λ q(w) = ½<w, Qw>`.
///
/// `r >= 0` is the floor: `A|_L >= -r`, and `λ < 1/r` when `r > 0`.
pub fn moreau_of_gqf(q: &GeneralizedQuadraticForm, lambda: f64, r: f64) -> Result<SymMatrix> {
    check_lambda(lambda, r)?;
    let n = q.dim();
    if q.l.is_zero() {
        return Ok(SymMatrix::scaled_identity(n, 1.0 / lambda));
    }
    let b = eigenfloor_extension(&q.a, &q.l, -r)?;
    let c = q.l.basis();
    let inv_l = 1.0 / lambda;
    let inner = c.transpose() * (b.matrix() + Matrix::identity(n, n) * inv_l) * c;
    let chol = Cholesky::new(inner).ok_or_else(|| {
        Error::numeric("C^T (B + I/λ) C is not positive definite")
    })?;
    let m = c * chol.inverse() * c.transpose() * inv_l;
    let mi = &m - Matrix::identity(n, n);
    let qm = &m * b.matrix() * &m + &mi * &mi * inv_l;
    SymMatrix::new(qm)
}

/// Default rank tolerance for forms recovered from numerical Hessians.
pub const NUMERIC_RANK_TOL: f64 = 1e-4;

/// Inverts [`moreau_of_gqf`]: the form whose envelope Hessian is `h`.
///
/// The graph is `{((I - λH)w, Hw)}` and `L = range(I - λH)`.
pub fn gqf_from_envelope_hessian(h: &SymMatrix, lambda: f64) -> Result<GeneralizedQuadraticForm> {
    gqf_from_envelope_hessian_tol(h, lambda, DEFAULT_RANK_TOL)
}

pub fn gqf_from_envelope_hessian_tol(
    h: &SymMatrix,
    lambda: f64,
    rank_tol: f64,
) -> Result<GeneralizedQuadraticForm> {
    check_lambda(lambda, 0.0)?;
    let n = h.order();
    let scale = 1.0 + h.frobenius();
    if h.asym_defect() > SELF_ADJOINT_TOL.max(rank_tol) * scale {
        return Err(Error::numeric(format!(
            "envelope Hessian is not symmetric (defect {:e}); graph is not self-adjoint",
            h.asym_defect()
        )));
    }
    let top = h.max_abs_eigenvalue().max(h.eigen().eigenvalues.max());
    let lmax = h.eigen().eigenvalues.max();
    if lmax > (1.0 + rank_tol.max(1e-9)) / lambda + rank_tol * top {
        return Err(Error::numeric(format!(
            "envelope Hessian eigenvalue {lmax} exceeds 1/λ = {}",
            1.0 / lambda
        )));
    }
    let x = Matrix::identity(n, n) - h.matrix() * lambda;
    let g = GraphSubspace::from_blocks(&x, h.matrix())?;
    g.to_form(rank_tol)
}

/// Epi-limit of a sequence of forms via Cauchy convergence of graph
/// projectors over the trailing half. `r` is the floor `q_k >= -r|w|²`.
pub fn gqf_epi_limit(
    seq: &[GeneralizedQuadraticForm],
    r: f64,
) -> Result<Option<GeneralizedQuadraticForm>> {
    gqf_epi_limit_tol(seq, r, EPI_LIMIT_TOL, DEFAULT_RANK_TOL)
}

pub fn gqf_epi_limit_tol(
    seq: &[GeneralizedQuadraticForm],
    r: f64,
    tol: f64,
    rank_tol: f64,
) -> Result<Option<GeneralizedQuadraticForm>> {
    if seq.is_empty() {
        return Ok(None);
    }
    let n = seq[0].dim();
    for (k, q) in seq.iter().enumerate() {
        if q.dim() != n {
            return Err(Error::argument("forms in a sequence must share a dimension"));
        }
        let lmin = q.min_eigenvalue_on_l();
        if lmin < -2.0 * r - 1e-9 * (1.0 + q.a.frobenius()) {
            return Err(Error::argument(format!(
                "form {k} violates the floor: smallest eigenvalue on L is {lmin}, floor is {}",
                -2.0 * r
            )));
        }
    }
    let graphs: Vec<GraphSubspace> = seq.iter().map(gqf_graph).collect();
    let last = graphs.last().expect("nonempty");
    let start = seq.len() / 2;
    let spread = graphs[start..]
        .iter()
        .map(|g| g.projector_distance(last))
        .fold(0.0, f64::max);
    if spread > tol / 2.0 {
        return Ok(None);
    }
    last.to_form(rank_tol).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn span(n: usize, cols: &[&[f64]]) -> Subspace {
        let vs: Vec<Vector> = cols.iter().map(|c| v(c)).collect();
        Subspace::span(n, &vs)
    }

    fn random_sym(rng: &mut ChaCha8Rng, n: usize, s: f64) -> SymMatrix {
        SymMatrix::new(Matrix::from_fn(n, n, |_, _| rng.gen_range(-s..s))).unwrap()
    }

    fn random_subspace(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Subspace {
        if m == 0 {
            return Subspace::zero(n);
        }
        Subspace::from_spanning(&Matrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0)), DEFAULT_RANK_TOL)
    }

    #[test]
    fn eval_examples() {
        let q = GeneralizedQuadraticForm::quadratic(SymMatrix::from_diagonal(&[2.0]));
        assert_eq!(q.eval(&v(&[1.0])).unwrap(), ExtReal::Finite(1.0));
        let z = GeneralizedQuadraticForm::new(SymMatrix::from_diagonal(&[7.0]), Subspace::zero(1)).unwrap();
        assert_eq!(z.eval(&v(&[0.3])).unwrap(), ExtReal::PosInf);
        assert_eq!(z.eval(&v(&[0.0])).unwrap(), ExtReal::ZERO);
        let q2 = GeneralizedQuadraticForm::new(
            SymMatrix::from_diagonal(&[2.0, -4.0]),
            span(2, &[&[1.0, 0.0]]),
        )
        .unwrap();
        assert_eq!(q2.eval(&v(&[2.0, 0.0])).unwrap(), ExtReal::Finite(4.0));
        assert_eq!(q2.eval(&v(&[0.0, 1.0])).unwrap(), ExtReal::PosInf);
        assert!(q2.eval(&v(&[1.0])).is_err());
    }

    #[test]
    fn graph_examples() {
        let a = 3.0;
        let g = GeneralizedQuadraticForm::coefficient_1d(a / 2.0).graph();
        let e = Subspace::span(2, &[v(&[1.0, a])]);
        assert!(g.subspace().projector_distance(&e) < 1e-12);

        let g0 = GeneralizedQuadraticForm::indicator_origin(1).graph();
        assert!(g0.subspace().projector_distance(&Subspace::span(2, &[v(&[0.0, 1.0])])) < 1e-12);

        let q = GeneralizedQuadraticForm::new(SymMatrix::from_diagonal(&[1.0, 3.0]), span(2, &[&[1.0, 0.0]])).unwrap();
        let expect = Subspace::span(4, &[v(&[1.0, 0.0, 1.0, 0.0]), v(&[0.0, 0.0, 0.0, 1.0])]);
        assert!(q.graph().subspace().projector_distance(&expect) < 1e-12);
    }

    #[test]
    fn solve_examples() {
        let x = solve_constrained(&SymMatrix::identity(2), &span(2, &[&[1.0, 0.0]]), &v(&[3.0, 4.0])).unwrap();
        assert!((x - v(&[3.0, 0.0])).norm() < 1e-14);
        let x = solve_constrained(
            &SymMatrix::from_diagonal(&[2.0, 1.0]),
            &span(2, &[&[1.0, 1.0]]),
            &v(&[1.0, 0.0]),
        )
        .unwrap();
        assert!((x - v(&[1.0 / 3.0, 1.0 / 3.0])).norm() < 1e-14);
        // Dense least-squares cross-check on a grid over L.
        let best = (0..=20000)
            .map(|i| -1.0 + i as f64 * 1e-4)
            .min_by(|a, b| {
                let r = |t: f64| {
                    let r0 = 2.0 * t - 1.0;
                    let r1 = t;
                    (r0 + r1).powi(2)
                };
                r(*a).total_cmp(&r(*b))
            })
            .unwrap();
        assert!((best - 1.0 / 3.0).abs() < 1e-4);
        assert!(solve_constrained(&SymMatrix::from_diagonal(&[1.0, -1.0]), &Subspace::full(2), &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn eigenfloor_examples() {
        let b = eigenfloor_extension(&SymMatrix::from_diagonal(&[5.0, -9.0]), &span(2, &[&[1.0, 0.0]]), 0.0).unwrap();
        assert!((b.matrix() - Matrix::from_diagonal(&v(&[5.0, 0.0]))).norm() < 1e-14);
        let a = SymMatrix::from_row_major(2, &[1.0, 0.5, 0.5, 2.0]).unwrap();
        let b = eigenfloor_extension(&a, &Subspace::full(2), -3.0).unwrap();
        assert!(b.dist(&a) < 1e-14);
        let e = eigenfloor_extension(&SymMatrix::from_diagonal(&[-1.0, 0.0]), &Subspace::full(2), 0.0).unwrap_err();
        assert_eq!(e.kind(), "argument");
    }

    #[test]
    fn moreau_examples() {
        let q = moreau_of_gqf(&GeneralizedQuadraticForm::indicator_origin(2), 0.5, 0.0).unwrap();
        assert!((q.matrix() - Matrix::identity(2, 2) * 2.0).norm() < 1e-14);
        for (b, lambda) in [(1.0, 0.5), (-0.5, 0.3), (3.0, 0.1)] {
            let q = GeneralizedQuadraticForm::coefficient_1d(b);
            let r = if b < 0.0 { -2.0 * b } else { 0.0 };
            let qm = moreau_of_gqf(&q, lambda, r).unwrap();
            assert!((qm.matrix()[(0, 0)] - 2.0 * b / (1.0 + 2.0 * lambda * b)).abs() < 1e-12);
        }
        let z = moreau_of_gqf(&GeneralizedQuadraticForm::quadratic(SymMatrix::zeros(3)), 0.7, 0.0).unwrap();
        assert!(z.frobenius() < 1e-14);
        assert!(moreau_of_gqf(&GeneralizedQuadraticForm::coefficient_1d(-0.5), 1.0, 1.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        let lambda = 0.25;
        let f = gqf_from_envelope_hessian(&SymMatrix::scaled_identity(2, 1.0 / lambda), lambda).unwrap();
        assert!(f.is_indicator_origin());
        assert_eq!(f.matrix().frobenius(), 0.0);
        let b = 1.5;
        let h = SymMatrix::from_diagonal(&[2.0 * b / (1.0 + 2.0 * lambda * b)]);
        let f = gqf_from_envelope_hessian(&h, lambda).unwrap();
        assert!((f.coefficient().unwrap() - b).abs() < 1e-12);
        let f = gqf_from_envelope_hessian(&SymMatrix::zeros(3), lambda).unwrap();
        assert!(f.subspace().is_full() && f.matrix().frobenius() < 1e-14);
        let bad = SymMatrix::from_row_major(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(gqf_from_envelope_hessian(&bad, lambda).unwrap_err().kind(), "numeric");
    }

    #[test]
    fn epi_limit_examples() {
        let q = GeneralizedQuadraticForm::coefficient_1d(0.7);
        let lim = gqf_epi_limit(&vec![q.clone(); 6], 0.0).unwrap().unwrap();
        assert!(lim.approx_eq(&q, FORM_EQ_TOL));

        let seq: Vec<_> = (1..=40)
            .map(|k| GeneralizedQuadraticForm::quadratic(SymMatrix::from_diagonal(&[2.0 - 0.5f64.powi(k)])))
            .collect();
        let lim = gqf_epi_limit(&seq, 0.0).unwrap().unwrap();
        assert!((lim.coefficient().unwrap() - 1.0).abs() < 1e-6);

        let seq: Vec<_> = (1..=60)
            .map(|k| GeneralizedQuadraticForm::quadratic(SymMatrix::from_diagonal(&[2f64.powi(k)])))
            .collect();
        let lim = gqf_epi_limit(&seq, 0.0).unwrap().unwrap();
        assert!(lim.is_indicator_origin());

        let seq: Vec<_> = (1..=10).map(|_| GeneralizedQuadraticForm::coefficient_1d(-2.0)).collect();
        assert_eq!(gqf_epi_limit(&seq, 1.0).unwrap_err().kind(), "argument");

        let alternating: Vec<_> = (0..20)
            .map(|k| GeneralizedQuadraticForm::coefficient_1d(if k % 2 == 0 { 0.0 } else { 1.0 }))
            .collect();
        assert!(gqf_epi_limit(&alternating, 0.0).unwrap().is_none());
    }

    #[test]
    fn random_graphs_have_dimension_n_and_are_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let n = rng.gen_range(1..=4);
            let m = rng.gen_range(0..=n);
            let q = GeneralizedQuadraticForm::new(random_sym(&mut rng, n, 3.0), random_subspace(&mut rng, n, m)).unwrap();
            let g = q.graph();
            assert_eq!(g.dim(), n);
            let b = g.subspace().basis();
            for i in 0..n {
                for j in 0..n {
                    let (xi, vi) = (b.column(i).rows(0, n).into_owned(), b.column(i).rows(n, n).into_owned());
                    let (xj, vj) = (b.column(j).rows(0, n).into_owned(), b.column(j).rows(n, n).into_owned());
                    assert!((xi.dot(&vj) - xj.dot(&vi)).abs() <= SELF_ADJOINT_TOL);
                }
            }
            assert_eq!(q.eval(&Vector::zeros(n)).unwrap(), ExtReal::ZERO);
        }
    }

    #[test]
    fn solve_is_basis_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..=5);
            let m = rng.gen_range(1..=n);
            let g = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let pd = SymMatrix::new(&g * g.transpose() + Matrix::identity(n, n) * 0.1).unwrap();
            let l = random_subspace(&mut rng, n, m);
            let w = Vector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let x = solve_constrained(&pd, &l, &w).unwrap();
            let mix = Matrix::from_fn(m, m, |i, j| if i == j { 2.0 } else { rng.gen_range(-0.5..0.5) });
            let x2 = solve_with_basis(&pd, &(l.basis() * mix), &w).unwrap();
            assert!((&x - &x2).norm() <= 1e-9 * (1.0 + x.norm()));
            assert!(l.dist(&x) <= 1e-9);
            let res = l.basis().transpose() * (pd.matrix() * &x - &w);
            assert!(res.amax() <= 1e-9);
        }
    }

    proptest! {
        #[test]
        fn envelope_is_an_infimum(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=3);
            let m = rng.gen_range(0..=n);
            let l = random_subspace(&mut rng, n, m);
            let q = GeneralizedQuadraticForm::new(random_sym(&mut rng, n, 2.0), l.clone()).unwrap();
            let r = (-q.min_eigenvalue_on_l()).max(0.0);
            let lambda = if r > 0.0 { 0.9 / r } else { 1.0 }.min(1.0);
            let qm = moreau_of_gqf(&q, lambda, r).unwrap();
            prop_assert!(qm.matrix() == &qm.matrix().transpose());
            let w = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let env = 0.5 * qm.quad(&w);
            for _ in 0..20 {
                let u = l.project(&Vector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0)));
                let val = 0.5 * q.matrix().quad(&u) + (&u - &w).norm_squared() / (2.0 * lambda);
                prop_assert!(env <= val + 1e-9 * (1.0 + val.abs()));
            }
        }
    }
}
