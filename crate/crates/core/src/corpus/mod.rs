//! Worked examples with closed-form oracles and ground truths, plus the
//! piecewise definition language for user functions.

pub mod piecewise;
mod registry;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::base::{AttentiveLocalization, ExtReal, FunctionOracle, PrimalDualPair, SymMatrix, Vector};
use crate::bundle::SequenceSchedule;
use crate::error::{Error, Result};
use crate::quadform::GeneralizedQuadraticForm;
use crate::subderiv::{EpiGrid, TriVerdict};

pub use piecewise::{parse_piecewise, PiecewiseExpr};
pub use registry::{corpus_get, corpus_names, quad_n};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CaseFlags {
    /// Prox-regularity level `r` at the base pair, when prox-regular.
    pub prox_regular: Option<f64>,
    pub subdiff_continuous: bool,
    pub c11: bool,
    pub c2: bool,
    pub norm: bool,
    pub prox_bounded: bool,
}

/// Closed-form `d²f(x̄|v̄)`.
#[derive(Clone)]
pub struct D2Fn(pub Arc<dyn Fn(&Vector) -> ExtReal + Send + Sync>);

impl D2Fn {
    pub fn new(f: impl Fn(&Vector) -> ExtReal + Send + Sync + 'static) -> Self {
        D2Fn(Arc::new(f))
    }

    pub fn eval(&self, w: &Vector) -> ExtReal {
        (self.0)(w)
    }
}

impl fmt::Debug for D2Fn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("D2Fn(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthCase {
    pub kappa: f64,
    pub radius: f64,
    pub holds: bool,
}

/// Ground truths at the base pair. `None` means "not recorded".
#[derive(Clone, Debug)]
pub struct Expected {
    pub d2: D2Fn,
    pub epi_diff: Option<TriVerdict>,
    pub gtd: bool,
    /// `½ d²f(x̄|v̄)` when `f` is gtd there.
    pub gtd_form: Option<GeneralizedQuadraticForm>,
    pub twice_diff: bool,
    pub quad_bundle: Option<Vec<GeneralizedQuadraticForm>>,
    /// Bundle without the `f(x_k) -> f(x̄)` clause.
    pub quad_bundle_old: Option<Vec<GeneralizedQuadraticForm>>,
    /// Coefficient interval of a 1-D continuum bundle.
    pub coefficient_range: Option<[f64; 2]>,
    pub hessian_bundle: Option<Vec<SymMatrix>>,
    pub growth: Vec<GrowthCase>,
}

#[derive(Clone, Debug)]
pub struct ExampleCase {
    pub name: &'static str,
    pub anchor: &'static str,
    /// Canonical piecewise text for 1-D entries.
    pub text: Option<&'static str>,
    pub oracle: FunctionOracle,
    pub base_pair: PrimalDualPair,
    pub flags: CaseFlags,
    pub expected: Expected,
    pub lambda: f64,
    pub r_level: f64,
    pub loc_eps: f64,
    pub schedule: SequenceSchedule,
    pub grid: EpiGrid,
}

impl ExampleCase {
    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    pub fn localization(&self) -> Result<AttentiveLocalization> {
        AttentiveLocalization::new(self.oracle.clone(), self.base_pair.clone(), self.loc_eps)
    }

    /// Pair `(x̄, v)` on the same base point.
    pub fn pair_with_v(&self, v: &[f64]) -> Result<PrimalDualPair> {
        if v.len() != self.dim() {
            return Err(Error::argument(format!("v must have length {}", self.dim())));
        }
        PrimalDualPair::new(&self.oracle, self.base_pair.x.clone(), Vector::from_column_slice(v))
    }

    pub fn export(&self) -> Value {
        let forms = |v: &Option<Vec<GeneralizedQuadraticForm>>| {
            v.as_ref().map(|qs| qs.iter().map(GeneralizedQuadraticForm::record).collect::<Vec<_>>())
        };
        let d2_table: Vec<Value> = self
            .grid
            .direction_vectors()
            .into_iter()
            .chain(std::iter::once(Vector::zeros(self.dim())))
            .map(|w| json!({ "w": w.as_slice(), "d2": self.expected.d2.eval(&w) }))
            .collect();
        let e = &self.expected;
        json!({
            "name": self.name,
            "anchor": self.anchor,
            "text": self.text,
            "dim": self.dim(),
            "base_pair": {
                "x": self.base_pair.x.as_slice(),
                "v": self.base_pair.v.as_slice(),
                "fx": self.base_pair.fx,
            },
            "flags": self.flags,
            "expected": {
                "d2": d2_table,
                "epi_diff": e.epi_diff,
                "gtd": e.gtd,
                "gtd_form": e.gtd_form.as_ref().map(GeneralizedQuadraticForm::record),
                "twice_diff": e.twice_diff,
                "quad_bundle": forms(&e.quad_bundle),
                "quad_bundle_old": forms(&e.quad_bundle_old),
                "coefficient_range": e.coefficient_range,
                "hessian_bundle": e.hessian_bundle,
                "growth": e.growth,
            },
            "lambda": self.lambda,
            "r_level": self.r_level,
            "loc_eps": self.loc_eps,
            "schedule": self.schedule,
            "grid": self.grid,
        })
    }
}
