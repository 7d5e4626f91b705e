use std::collections::BTreeMap;
use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::level::MediatorLevel;
use crate::scalar::Scalar;

/// Where a reported value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Provenance {
    /// Exact enumeration over a known population.
    #[serde(rename = "oracle")]
    Oracle,
    /// Identified from observed data under sequential ignorability.
    #[serde(rename = "identified-SI2")]
    IdentifiedSi2,
    /// Identified by an experimentally supplemented trial design.
    #[serde(rename = "identified-design")]
    IdentifiedDesign,
    #[serde(rename = "undefined")]
    Undefined,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Oracle => "oracle",
            Provenance::IdentifiedSi2 => "identified-SI2",
            Provenance::IdentifiedDesign => "identified-design",
            Provenance::Undefined => "undefined",
        })
    }
}

/// A reported quantity that is either a number or explicitly undefined.
#[derive(Clone, Debug, PartialEq)]
pub enum Estimate<T> {
    Defined { value: T, provenance: Provenance },
    Undefined { reason: String },
}

impl<T: Scalar> Estimate<T> {
    pub fn defined(value: T, provenance: Provenance) -> Self {
        Estimate::Defined { value, provenance }
    }

    pub fn undefined(reason: impl Into<String>) -> Self {
        Estimate::Undefined { reason: reason.into() }
    }

    pub fn value(&self) -> Option<T> {
        match self {
            Estimate::Defined { value, .. } => Some(*value),
            Estimate::Undefined { .. } => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, Estimate::Defined { .. })
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            Estimate::Defined { provenance, .. } => *provenance,
            Estimate::Undefined { .. } => Provenance::Undefined,
        }
    }

    /// Value, panicking with the undefined reason. Intended for tests and examples.
    pub fn expect_value(&self, what: &str) -> T {
        match self {
            Estimate::Defined { value, .. } => *value,
            Estimate::Undefined { reason } => panic!("{what} undefined: {reason}"),
        }
    }

    fn ratio(num: &Self, den: &Self, provenance: Provenance, what: &str) -> Self {
        match (num.value(), den.value()) {
            (Some(_), Some(d)) if d == T::zero() => Self::undefined(format!("{what}: zero denominator")),
            (Some(n), Some(d)) => Self::defined(n / d, provenance),
            _ => Self::undefined(format!("{what}: input undefined")),
        }
    }

    /// `log(num) / log(den)`; undefined when `den` is 1 or either side is
    /// not a positive number.
    pub fn log_ratio(num: &Self, den: &Self, provenance: Provenance, what: &str) -> Self {
        match (num.value(), den.value()) {
            (Some(n), Some(d)) => {
                if d == T::one() {
                    Self::undefined(format!("{what}: total ratio effect is 1 (log denominator 0)"))
                } else if n <= T::zero() || d <= T::zero() {
                    Self::undefined(format!("{what}: non-positive ratio under logarithm"))
                } else {
                    // + 0 turns the -0 of log(1) / log(d < 1) into 0
                    Self::defined(n.ln() / d.ln() + T::zero(), provenance)
                }
            }
            _ => Self::undefined(format!("{what}: input undefined")),
        }
    }
}

impl<T: Scalar + Serialize> Serialize for Estimate<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Estimate::Defined { value, provenance } => {
                let mut s = serializer.serialize_struct("Estimate", 2)?;
                s.serialize_field("value", value)?;
                s.serialize_field("provenance", provenance)?;
                s.end()
            }
            Estimate::Undefined { reason } => {
                let mut s = serializer.serialize_struct("Estimate", 3)?;
                s.serialize_field("value", &Option::<T>::None)?;
                s.serialize_field("provenance", &Provenance::Undefined)?;
                s.serialize_field("reason", reason)?;
                s.end()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Expectations<T: Scalar> {
    pub ey1m1: Estimate<T>,
    pub ey1m0: Estimate<T>,
    pub ey0m1: Estimate<T>,
    pub ey0m0: Estimate<T>,
}

/// Per-level controlled effects.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint<T: Scalar> {
    pub m: MediatorLevel,
    pub weight: T,
    pub theta_c: Estimate<T>,
    pub theta_ia: Estimate<T>,
    pub lambda_a_m: Estimate<T>,
}

/// Percentile interval for one report field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub defined_replicates: usize,
    pub undefined_replicates: usize,
}

/// All mediation estimands for one population or data set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectReport<T: Scalar> {
    pub ve: Estimate<T>,
    pub theta_t: Estimate<T>,
    pub theta_is: Estimate<T>,
    pub theta_ia: Estimate<T>,
    pub theta_ds: Estimate<T>,
    pub theta_da: Estimate<T>,
    pub xi: Estimate<T>,
    pub lambda_s: Estimate<T>,
    pub lambda_a: Estimate<T>,
    pub expectations: Expectations<T>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurvePoint<T>>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub intervals: BTreeMap<String, Interval>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Names of the scalar fields, in report order.
pub const REPORT_FIELDS: [&str; 13] = [
    "ve", "theta_t", "theta_is", "theta_ia", "theta_ds", "theta_da", "xi", "lambda_s", "lambda_a", "ey1m1",
    "ey1m0", "ey0m1", "ey0m0",
];

impl<T: Scalar> EffectReport<T> {
    /// Builds every estimand from the four (possibly partially known)
    /// expectations `E[Y_{1M1}]`, `E[Y_{1M0}]`, `E[Y_{0M1}]`, `E[Y_{0M0}]`.
    pub fn from_expectations(e11: T, e10: Option<T>, e01: Option<T>, e00: T, provenance: Provenance) -> Self {
        let absent = |what: &str| Estimate::undefined(format!("{what} not identified"));
        let e11 = Estimate::defined(e11, provenance);
        let e00 = Estimate::defined(e00, provenance);
        let e10 = e10.map_or_else(|| absent("E[Y_1M0]"), |v| Estimate::defined(v, provenance));
        let e01 = e01.map_or_else(|| absent("E[Y_0M1]"), |v| Estimate::defined(v, provenance));
        Self::from_estimates(e11, e10, e01, e00, provenance)
    }

    pub fn from_estimates(
        e11: Estimate<T>,
        e10: Estimate<T>,
        e01: Estimate<T>,
        e00: Estimate<T>,
        provenance: Provenance,
    ) -> Self {
        let theta_t = Estimate::ratio(&e11, &e00, provenance, "theta_t");
        let ve = match theta_t.value() {
            Some(t) => Estimate::defined(T::one() - t, provenance),
            None => Estimate::undefined("ve: theta_t undefined"),
        };
        let theta_is = Estimate::ratio(&e11, &e10, provenance, "theta_is");
        let theta_ds = Estimate::ratio(&e10, &e00, provenance, "theta_ds");
        let theta_ia = Estimate::ratio(&e01, &e00, provenance, "theta_ia");
        let theta_da = Estimate::ratio(&e11, &e01, provenance, "theta_da");
        let xi = match (e11.value(), e10.value(), e01.value(), e00.value()) {
            (Some(a), Some(b), Some(c), Some(d)) => {
                if b == T::zero() || c == T::zero() {
                    Estimate::undefined("xi: zero denominator")
                } else {
                    Estimate::defined((a * d) / (b * c), provenance)
                }
            }
            _ => Estimate::undefined("xi: input undefined"),
        };
        let lambda_s = Estimate::log_ratio(&theta_is, &theta_t, provenance, "lambda_s");
        let lambda_a = Estimate::log_ratio(&theta_ia, &theta_t, provenance, "lambda_a");
        Self {
            ve,
            theta_t,
            theta_is,
            theta_ia,
            theta_ds,
            theta_da,
            xi,
            lambda_s,
            lambda_a,
            expectations: Expectations {
                ey1m1: e11,
                ey1m0: e10,
                ey0m1: e01,
                ey0m0: e00,
            },
            curves: Vec::new(),
            intervals: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// Builds the report from ratio effects alone, for sources (such as
    /// per-level curves) that never see the four expectations.
    pub fn from_ratios(
        theta_t: Estimate<T>,
        theta_is: Estimate<T>,
        theta_ia: Estimate<T>,
        provenance: Provenance,
    ) -> Self {
        let absent = || Estimate::undefined("not available from ratio effects");
        let mut r = Self::from_estimates(absent(), absent(), absent(), absent(), provenance);
        r.ve = match theta_t.value() {
            Some(t) => Estimate::defined(T::one() - t, provenance),
            None => Estimate::undefined("ve: theta_t undefined"),
        };
        r.theta_ds = Estimate::ratio(&theta_t, &theta_is, provenance, "theta_ds");
        r.theta_da = Estimate::ratio(&theta_t, &theta_ia, provenance, "theta_da");
        r.xi = Estimate::ratio(&theta_is, &theta_ia, provenance, "xi");
        r.lambda_s = Estimate::log_ratio(&theta_is, &theta_t, provenance, "lambda_s");
        r.lambda_a = Estimate::log_ratio(&theta_ia, &theta_t, provenance, "lambda_a");
        r.theta_t = theta_t;
        r.theta_is = theta_is;
        r.theta_ia = theta_ia;
        r
    }

    pub fn field(&self, name: &str) -> Option<&Estimate<T>> {
        Some(match name {
            "ve" => &self.ve,
            "theta_t" => &self.theta_t,
            "theta_is" => &self.theta_is,
            "theta_ia" => &self.theta_ia,
            "theta_ds" => &self.theta_ds,
            "theta_da" => &self.theta_da,
            "xi" => &self.xi,
            "lambda_s" => &self.lambda_s,
            "lambda_a" => &self.lambda_a,
            "ey1m1" => &self.expectations.ey1m1,
            "ey1m0" => &self.expectations.ey1m0,
            "ey0m1" => &self.expectations.ey0m1,
            "ey0m0" => &self.expectations.ey0m0,
            _ => return None,
        })
    }

    /// Checks the partition identities among defined fields; returns the
    /// ones that fail at tolerance `tol`.
    pub fn identity_failures(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let v = |e: &Estimate<T>| e.value().map(|x| x.as_f64());
        let t = v(&self.theta_t);
        let mut check = |name: &str, lhs: Option<f64>, rhs: Option<f64>| {
            if let (Some(a), Some(b)) = (lhs, rhs) {
                if (a - b).abs() > tol {
                    out.push(format!("{name}: {a} vs {b}"));
                }
            }
        };
        let prod = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a * b);
        check("theta_t = theta_is * theta_ds", t, prod(v(&self.theta_is), v(&self.theta_ds)));
        check("theta_t = theta_ia * theta_da", t, prod(v(&self.theta_ia), v(&self.theta_da)));
        check(
            "theta_t = xi * theta_ia * theta_ds",
            t,
            prod(prod(v(&self.xi), v(&self.theta_ia)), v(&self.theta_ds)),
        );
        if let Some(tt) = t.filter(|&x| x > 0.0 && x != 1.0) {
            check(
                "lambda_s = log theta_is / log theta_t",
                v(&self.lambda_s),
                v(&self.theta_is).map(|x| x.ln() / tt.ln()),
            );
            check(
                "lambda_a = log theta_ia / log theta_t",
                v(&self.lambda_a),
                v(&self.theta_ia).map(|x| x.ln() / tt.ln()),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_effects() {
        let r = EffectReport::<f64>::from_expectations(0.001, Some(0.004), None, 0.01, Provenance::IdentifiedSi2);
        assert!((r.theta_t.expect_value("t") - 0.10).abs() < 1e-12);
        assert!((r.theta_is.expect_value("is") - 0.25).abs() < 1e-12);
        assert!((r.theta_ds.expect_value("ds") - 0.40).abs() < 1e-12);
        let ls = r.lambda_s.expect_value("ls");
        assert_eq!((ls * 1e4).round() / 1e4, 0.6021);
        assert!(!r.theta_ia.is_defined());
        assert!(!r.xi.is_defined());
        assert_eq!(r.lambda_s.provenance(), Provenance::IdentifiedSi2);
    }

    #[test]
    fn null_effects_leave_lambda_undefined() {
        let r = EffectReport::<f64>::from_expectations(0.3, Some(0.3), Some(0.3), 0.3, Provenance::Oracle);
        for f in ["theta_t", "theta_is", "theta_ia", "theta_ds", "theta_da", "xi"] {
            assert_eq!(r.field(f).unwrap().value(), Some(1.0), "{f}");
        }
        assert!(!r.lambda_s.is_defined());
        assert!(!r.lambda_a.is_defined());
    }

    #[test]
    fn no_interaction_gives_equal_lambdas() {
        // e10 * e01 = e11 * e00
        let (e11, e10, e01, e00) = (0.02, 0.05, 0.04, 0.1);
        let r = EffectReport::<f64>::from_expectations(e11, Some(e10), Some(e01), e00, Provenance::Oracle);
        assert!((r.xi.expect_value("xi") - 1.0).abs() < 1e-12);
        assert!((r.lambda_s.expect_value("s") - r.lambda_a.expect_value("a")).abs() < 1e-12);
        assert!(r.identity_failures(1e-10).is_empty());
    }

    #[test]
    fn zero_intermediate_denominator_is_undefined_not_infinite() {
        let r = EffectReport::<f64>::from_expectations(0.0, Some(0.0), Some(0.01), 0.02, Provenance::Oracle);
        assert!(!r.theta_is.is_defined());
        assert!(!r.xi.is_defined());
        assert_eq!(r.theta_t.value(), Some(0.0));
        assert!(!r.lambda_a.is_defined());
    }

    #[test]
    fn undefined_serializes_with_reason() {
        let e: Estimate<f64> = Estimate::undefined("because");
        let j = serde_json::to_value(&e).unwrap();
        assert!(j["value"].is_null());
        assert_eq!(j["provenance"], "undefined");
        assert_eq!(j["reason"], "because");
        let d = Estimate::defined(0.5, Provenance::IdentifiedSi2);
        assert_eq!(serde_json::to_value(&d).unwrap()["provenance"], "identified-SI2");
    }
}
