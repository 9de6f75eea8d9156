//! Function oracles and primal-dual pairs.

use std::fmt;
use std::sync::Arc;

use super::{ExtReal, SymMatrix, Vector, MAX_DIM};
use crate::error::{Error, Result};

pub type EvalFn = Arc<dyn Fn(&Vector) -> ExtReal + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&Vector) -> Option<Vector> + Send + Sync>;
pub type HessFn = Arc<dyn Fn(&Vector) -> Option<SymMatrix> + Send + Sync>;
pub type GraphFn = Arc<dyn Fn(&Vector, &Vector) -> bool + Send + Sync>;
pub type ProxFn = Arc<dyn Fn(f64, &Vector) -> Vec<Vector> + Send + Sync>;
/// `(x, u)` with `u` in `[0,1]^n` selects one subgradient at `x`, if any.
pub type SamplerFn = Arc<dyn Fn(&Vector, &Vector) -> Option<Vector> + Send + Sync>;

/// Black-box access to an extended-real-valued function on `R^n`.
///
/// Every capability other than `eval` is optional. Oracles are immutable
/// and cheap to clone.
#[derive(Clone)]
pub struct FunctionOracle {
    dim: usize,
    label: String,
    eval: EvalFn,
    grad: Option<GradFn>,
    hess: Option<HessFn>,
    subgrad_graph: Option<GraphFn>,
    subgrad_sampler: Option<SamplerFn>,
    prox: Option<ProxFn>,
    prox_bound: Option<f64>,
    special_points: Vec<Vector>,
}

impl fmt::Debug for FunctionOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionOracle")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("grad", &self.grad.is_some())
            .field("hess", &self.hess.is_some())
            .field("subgrad_graph", &self.subgrad_graph.is_some())
            .field("prox", &self.prox.is_some())
            .field("prox_bound", &self.prox_bound)
            .finish()
    }
}

impl FunctionOracle {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        eval: impl Fn(&Vector) -> ExtReal + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::argument(format!(
                "dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        Ok(FunctionOracle {
            dim,
            label: label.into(),
            eval: Arc::new(eval),
            grad: None,
            hess: None,
            subgrad_graph: None,
            subgrad_sampler: None,
            prox: None,
            prox_bound: None,
            special_points: Vec::new(),
        })
    }

    /// Scalar function of one variable; NaN results are read as `+inf`.
    pub fn scalar(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        FunctionOracle::new(1, label, move |x: &Vector| ExtReal::from(f(x[0])))
            .expect("dimension 1 is valid")
    }

    pub fn with_grad(mut self, g: impl Fn(&Vector) -> Option<Vector> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn with_hess(mut self, h: impl Fn(&Vector) -> Option<SymMatrix> + Send + Sync + 'static) -> Self {
        self.hess = Some(Arc::new(h));
        self
    }

    pub fn with_subgrad_graph(mut self, g: impl Fn(&Vector, &Vector) -> bool + Send + Sync + 'static) -> Self {
        self.subgrad_graph = Some(Arc::new(g));
        self
    }

    pub fn with_subgrad_sampler(
        mut self,
        s: impl Fn(&Vector, &Vector) -> Option<Vector> + Send + Sync + 'static,
    ) -> Self {
        self.subgrad_sampler = Some(Arc::new(s));
        self
    }

    pub fn with_prox(mut self, p: impl Fn(f64, &Vector) -> Vec<Vector> + Send + Sync + 'static) -> Self {
        self.prox = Some(Arc::new(p));
        self
    }

    pub fn with_prox_bound(mut self, lambda0: f64) -> Self {
        self.prox_bound = Some(lambda0);
        self
    }

    pub fn with_special_points(mut self, pts: Vec<Vector>) -> Self {
        self.special_points = pts;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn without_prox(mut self) -> Self {
        self.prox = None;
        self
    }

    pub fn without_hess(mut self) -> Self {
        self.hess = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn prox_bound(&self) -> Option<f64> {
        self.prox_bound
    }

    pub fn special_points(&self) -> &[Vector] {
        &self.special_points
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn has_hess(&self) -> bool {
        self.hess.is_some()
    }

    pub fn has_subgrad_graph(&self) -> bool {
        self.subgrad_graph.is_some()
    }

    pub fn has_subgrad_sampler(&self) -> bool {
        self.subgrad_sampler.is_some()
    }

    pub fn has_prox(&self) -> bool {
        self.prox.is_some()
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::argument(format!(
                "{}: expected a point in R^{}, got length {}",
                self.label,
                self.dim,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &Vector) -> Result<ExtReal> {
        self.check_dim(x)?;
        Ok((self.eval)(x))
    }

    /// Evaluation without the dimension check, for inner loops.
    pub(crate) fn eval_unchecked(&self, x: &Vector) -> ExtReal {
        (self.eval)(x)
    }

    pub fn grad(&self, x: &Vector) -> Result<Option<Vector>> {
        self.check_dim(x)?;
        Ok(self.grad.as_ref().and_then(|g| g(x)))
    }

    pub fn hess(&self, x: &Vector) -> Result<Option<SymMatrix>> {
        self.check_dim(x)?;
        Ok(self.hess.as_ref().and_then(|h| h(x)))
    }

    pub fn in_subgrad_graph(&self, x: &Vector, v: &Vector) -> Result<bool> {
        self.check_dim(x)?;
        self.check_dim(v)?;
        match &self.subgrad_graph {
            Some(g) => Ok(g(x, v)),
            None => Err(Error::capability(format!(
                "{} has no subdifferential graph",
                self.label
            ))),
        }
    }

    pub fn sample_subgradient(&self, x: &Vector, u: &Vector) -> Result<Option<Vector>> {
        self.check_dim(x)?;
        match &self.subgrad_sampler {
            Some(s) => Ok(s(x, u)),
            None => Err(Error::capability(format!(
                "{} has no subgradient sampler",
                self.label
            ))),
        }
    }

    /// Closed-form proximal points, when the oracle provides them.
    pub fn prox_closed_form(&self, lambda: f64, x: &Vector) -> Option<Vec<Vector>> {
        self.prox.as_ref().map(|p| p(lambda, x))
    }

    /// `f + g` where `self` is smooth (gradient required).
    ///
    /// The subdifferential graph and subgradient sampler are shifted by
    /// `grad f`; the closed-form prox is dropped.
    pub fn smooth_plus(&self, g: &FunctionOracle) -> Result<FunctionOracle> {
        if self.dim != g.dim {
            return Err(Error::argument("dimension mismatch in sum"));
        }
        let f = self.grad.clone().ok_or_else(|| {
            Error::capability(format!("{} has no gradient", self.label))
        })?;
        let (fe, ge) = (self.eval.clone(), g.eval.clone());
        let mut out = FunctionOracle::new(self.dim, format!("{}+{}", self.label, g.label), move |x| {
            fe(x).checked_add(ge(x)).unwrap_or(ExtReal::PosInf)
        })?;
        if let Some(gg) = g.grad.clone() {
            let f = f.clone();
            out = out.with_grad(move |x| Some(f(x)? + gg(x)?));
        }
        if let (Some(fh), Some(gh)) = (self.hess.clone(), g.hess.clone()) {
            out = out.with_hess(move |x| Some(fh(x)?.add(&gh(x)?)));
        }
        if let Some(graph) = g.subgrad_graph.clone() {
            let f = f.clone();
            out = out.with_subgrad_graph(move |x, v| match f(x) {
                Some(df) => graph(x, &(v - df)),
                None => false,
            });
        }
        if let Some(s) = g.subgrad_sampler.clone() {
            let f = f.clone();
            out = out.with_subgrad_sampler(move |x, u| Some(f(x)? + s(x, u)?));
        }
        out.special_points = g.special_points.clone();
        out.prox_bound = match (self.prox_bound, g.prox_bound) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Ok(out)
    }
}

/// A point of `gph df` candidate: `x`, a (sub)gradient `v` and `f(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalDualPair {
    pub x: Vector,
    pub v: Vector,
    pub fx: f64,
}

impl PrimalDualPair {
    pub fn new(oracle: &FunctionOracle, x: Vector, v: Vector) -> Result<Self> {
        if v.len() != x.len() {
            return Err(Error::argument("x and v must have equal length"));
        }
        let fx = oracle.eval(&x)?;
        match fx.finite() {
            Some(fx) => Ok(PrimalDualPair { x, v, fx }),
            None => Err(Error::argument(format!(
                "{}: f(x) = {fx} is not finite; pairs need x in dom f",
                oracle.label()
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> FunctionOracle {
        FunctionOracle::scalar("sq", |x| x * x)
            .with_grad(|x| Some(x * 2.0))
            .with_hess(|_| Some(SymMatrix::from_diagonal(&[2.0])))
    }

    #[test]
    fn eval_is_deterministic_and_checks_dimension() {
        let f = square();
        let x = Vector::from_vec(vec![0.3]);
        assert_eq!(f.eval(&x).unwrap(), f.eval(&x).unwrap());
        assert!(f.eval(&Vector::zeros(2)).is_err());
    }

    #[test]
    fn missing_graph_is_a_capability_error() {
        let f = square();
        let e = f.in_subgrad_graph(&Vector::zeros(1), &Vector::zeros(1)).unwrap_err();
        assert_eq!(e.kind(), "capability");
    }

    #[test]
    fn pair_requires_finite_value() {
        let ind = FunctionOracle::scalar("ind", |x| if x == 0.0 { 0.0 } else { f64::INFINITY });
        assert!(PrimalDualPair::new(&ind, Vector::from_vec(vec![1.0]), Vector::zeros(1)).is_err());
        let p = PrimalDualPair::new(&ind, Vector::zeros(1), Vector::zeros(1)).unwrap();
        assert_eq!(p.fx, 0.0);
    }

    #[test]
    fn smooth_plus_shifts_graph() {
        let g = FunctionOracle::scalar("abs", f64::abs).with_subgrad_graph(|x, v| {
            if x[0] == 0.0 {
                v[0].abs() <= 1.0
            } else {
                (v[0] - x[0].signum()).abs() < 1e-12
            }
        });
        let h = square().smooth_plus(&g).unwrap();
        let x = Vector::from_vec(vec![1.0]);
        assert_eq!(h.eval(&x).unwrap(), ExtReal::Finite(2.0));
        assert!(h.in_subgrad_graph(&x, &Vector::from_vec(vec![3.0])).unwrap());
        assert!(!h.in_subgrad_graph(&x, &Vector::from_vec(vec![1.0])).unwrap());
    }

    #[test]
    fn dimension_cap() {
        assert!(FunctionOracle::new(17, "big", |_| ExtReal::ZERO).is_err());
        assert!(FunctionOracle::new(16, "ok", |_| ExtReal::ZERO).is_ok());
    }
}
