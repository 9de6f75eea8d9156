//! f-attentive localizations of the subdifferential graph.

use super::{FunctionOracle, PrimalDualPair, Vector};
use crate::error::{Error, Result};

/// Points `(x, v)` of `gph df` with `|x - x̄| < eps`, `|v - v̄| < eps` and
/// `f(x) < f(x̄) + eps`.
#[derive(Clone, Debug)]
pub struct AttentiveLocalization {
    pub oracle: FunctionOracle,
    pub center: PrimalDualPair,
    pub eps: f64,
}

impl AttentiveLocalization {
    pub fn new(oracle: FunctionOracle, center: PrimalDualPair, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::argument(format!("eps must be positive, got {eps}")));
        }
        if center.dim() != oracle.dim() {
            return Err(Error::argument("center dimension differs from oracle"));
        }
        Ok(AttentiveLocalization { oracle, center, eps })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        AttentiveLocalization::new(self.oracle.clone(), self.center.clone(), eps)
    }

    /// The four membership clauses; the graph clause needs `subgrad_graph`.
    pub fn membership(&self, x: &Vector, v: &Vector) -> Result<bool> {
        if !self.oracle.has_subgrad_graph() {
            return Err(Error::capability(format!(
                "{} has no subdifferential graph; localization membership is undefined",
                self.oracle.label()
            )));
        }
        if (x - &self.center.x).norm() >= self.eps || (v - &self.center.v).norm() >= self.eps {
            return Ok(false);
        }
        let fx = self.oracle.eval(x)?;
        match fx.finite() {
            Some(fx) if fx < self.center.fx + self.eps => {}
            _ => return Ok(false),
        }
        self.oracle.in_subgrad_graph(x, v)
    }

    pub fn contains_pair(&self, p: &PrimalDualPair) -> Result<bool> {
        self.membership(&p.x, &p.v)
    }
}

/// Checks `gph T_{eps1-eps2}(x, v) ⊂ gph T_{eps1}(x̄, v̄)` on samples, where
/// `loc1` is centred at `(x̄, v̄)` with radius `eps1` and `loc2` at `(x, v)`
/// with radius `eps2`.
///
/// Samples outside the smaller localization are ignored. The result is
/// `false` as soon as a sample lies in the smaller set but not in `loc1`.
pub fn localization_nesting_check(
    loc1: &AttentiveLocalization,
    loc2: &AttentiveLocalization,
    samples: &[PrimalDualPair],
) -> Result<bool> {
    if loc2.eps >= loc1.eps {
        return Err(Error::argument(format!(
            "nesting needs eps2 < eps1 (got eps1={}, eps2={})",
            loc1.eps, loc2.eps
        )));
    }
    let inner = loc2.with_eps(loc1.eps - loc2.eps)?;
    for s in samples {
        if inner.contains_pair(s)? && !loc1.contains_pair(s)? {
            return Ok(false);
        }
    }
    Ok(true)
}
