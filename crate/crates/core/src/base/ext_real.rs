use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A value in `[-inf, +inf]`. `Finite` never holds NaN or an IEEE infinity.
#[derive(Clone, Copy, Debug)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    /// Converts an `f64`, mapping IEEE infinities to the matching tag.
    pub fn new(x: f64) -> Result<Self> {
        if x.is_nan() {
            Err(Error::Indeterminate("NaN is not an extended real".into()))
        } else if x == f64::INFINITY {
            Ok(ExtReal::PosInf)
        } else if x == f64::NEG_INFINITY {
            Ok(ExtReal::NegInf)
        } else {
            Ok(ExtReal::Finite(x))
        }
    }

    /// Like [`ExtReal::new`] but treats NaN as `+inf`.
    ///
    /// Oracles use this for points outside the natural domain of a formula
    /// (`sqrt` of a negative, `0 * inf`): such points are outside `dom f`.
    pub fn from_f64_or_inf(x: f64) -> Self {
        ExtReal::new(x).unwrap_or(ExtReal::PosInf)
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_pos_inf(&self) -> bool {
        matches!(self, ExtReal::PosInf)
    }

    pub fn is_neg_inf(&self) -> bool {
        matches!(self, ExtReal::NegInf)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    /// IEEE view; infinities become `f64::INFINITY` / `f64::NEG_INFINITY`.
    pub fn to_f64(&self) -> f64 {
        match *self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(x) => x,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    /// Sum; `(+inf) + (-inf)` is an error, never a silent value.
    pub fn checked_add(self, other: ExtReal) -> Result<ExtReal> {
        use ExtReal::*;
        match (self, other) {
            (PosInf, NegInf) | (NegInf, PosInf) => {
                Err(Error::Indeterminate("(+inf) + (-inf)".into()))
            }
            (PosInf, _) | (_, PosInf) => Ok(PosInf),
            (NegInf, _) | (_, NegInf) => Ok(NegInf),
            (Finite(a), Finite(b)) => ExtReal::new(a + b),
        }
    }

    pub fn add_finite(self, c: f64) -> ExtReal {
        match self {
            ExtReal::Finite(a) => ExtReal::from_f64_or_inf(a + c),
            other => other,
        }
    }

    pub fn neg(self) -> ExtReal {
        match self {
            ExtReal::NegInf => ExtReal::PosInf,
            ExtReal::PosInf => ExtReal::NegInf,
            ExtReal::Finite(a) => ExtReal::Finite(-a),
        }
    }

    /// Multiplication by a finite scalar. `0 * (+-inf)` is indeterminate.
    pub fn scale(self, c: f64) -> Result<ExtReal> {
        match self {
            ExtReal::Finite(a) => ExtReal::new(a * c),
            inf if c > 0.0 => Ok(inf),
            inf if c < 0.0 => Ok(inf.neg()),
            _ => Err(Error::Indeterminate("0 * inf".into())),
        }
    }

    /// Values beyond `cap` in magnitude collapse to the matching infinity.
    pub fn clamp_cap(self, cap: f64) -> ExtReal {
        match self {
            ExtReal::Finite(a) if a > cap => ExtReal::PosInf,
            ExtReal::Finite(a) if a < -cap => ExtReal::NegInf,
            other => other,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            ExtReal::NegInf => 0,
            ExtReal::Finite(_) => 1,
            ExtReal::PosInf => 2,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl PartialEq for ExtReal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl From<f64> for ExtReal {
    /// NaN maps to `+inf`; see [`ExtReal::from_f64_or_inf`].
    fn from(x: f64) -> Self {
        ExtReal::from_f64_or_inf(x)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => write!(f, "-inf"),
            ExtReal::PosInf => write!(f, "+inf"),
            ExtReal::Finite(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::NegInf => s.serialize_str("-inf"),
            ExtReal::PosInf => s.serialize_str("+inf"),
            ExtReal::Finite(x) => s.serialize_f64(*x),
        }
    }
}

struct ExtRealVisitor;

impl Visitor<'_> for ExtRealVisitor {
    type Value = ExtReal;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or one of \"+inf\", \"-inf\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<ExtReal, E> {
        ExtReal::new(v).map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<ExtReal, E> {
        Ok(ExtReal::Finite(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<ExtReal, E> {
        Ok(ExtReal::Finite(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<ExtReal, E> {
        match v {
            "+inf" | "inf" => Ok(ExtReal::PosInf),
            "-inf" => Ok(ExtReal::NegInf),
            _ => Err(E::custom(format!("bad extended real {v:?}"))),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        d.deserialize_any(ExtRealVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn opposite_infinities_do_not_add() {
        assert!(matches!(
            ExtReal::PosInf.checked_add(ExtReal::NegInf),
            Err(Error::Indeterminate(_))
        ));
        assert_eq!(
            ExtReal::PosInf.checked_add(ExtReal::Finite(-3.0)).unwrap(),
            ExtReal::PosInf
        );
        assert_eq!(
            ExtReal::Finite(1.0).checked_add(ExtReal::Finite(2.0)).unwrap(),
            ExtReal::Finite(3.0)
        );
    }

    #[test]
    fn nan_rejected() {
        assert!(ExtReal::new(f64::NAN).is_err());
        assert_eq!(ExtReal::from(f64::NAN), ExtReal::PosInf);
        assert_eq!(ExtReal::new(f64::NEG_INFINITY).unwrap(), ExtReal::NegInf);
    }

    #[test]
    fn json_uses_strings_for_infinities() {
        let v = vec![ExtReal::NegInf, ExtReal::Finite(1.5), ExtReal::PosInf];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"["-inf",1.5,"+inf"]"#);
        let back: Vec<ExtReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn cap_clamps() {
        assert_eq!(ExtReal::Finite(2e6).clamp_cap(1e6), ExtReal::PosInf);
        assert_eq!(ExtReal::Finite(-2e6).clamp_cap(1e6), ExtReal::NegInf);
        assert_eq!(ExtReal::Finite(5.0).clamp_cap(1e6), ExtReal::Finite(5.0));
    }

    fn ext() -> impl Strategy<Value = ExtReal> {
        prop_oneof![
            Just(ExtReal::NegInf),
            Just(ExtReal::PosInf),
            (-1e6f64..1e6).prop_map(ExtReal::Finite),
        ]
    }

    proptest! {
        #[test]
        fn order_is_total_and_sorting_idempotent(mut xs in proptest::collection::vec(ext(), 0..40)) {
            xs.sort();
            let once = xs.clone();
            xs.sort();
            prop_assert_eq!(&once, &xs);
            for w in once.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            for x in &once {
                prop_assert!(ExtReal::NegInf <= *x && *x <= ExtReal::PosInf);
            }
        }
    }
}
