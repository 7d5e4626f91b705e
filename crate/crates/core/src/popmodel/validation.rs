use std::fmt;

use serde::Serialize;

use crate::scalar::{compensated_sum, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    NegativeProportion,
    NonFiniteProportion,
    MassNotOne,
    UnknownKey,
    InadmissibleType,
    Support,
    OutcomeVectorLength,
    MediatorOutsideSupport,
    Monotonicity,
    Margin,
}

/// One violated population invariant. Violations are data, not errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub key: Option<String>,
    pub magnitude: f64,
    pub message: String,
}

impl Violation {
    pub fn new(kind: ViolationKind, key: Option<String>, magnitude: f64, message: impl Into<String>) -> Self {
        Self {
            kind,
            key,
            magnitude,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "{} [{}]", self.message, k),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            ok: violations.is_empty(),
            violations,
        }
    }
}

/// Checks a labelled list of proportions for sign, finiteness and unit mass.
pub fn mass_violations<T: Scalar>(entries: &[(String, T)]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (key, p) in entries {
        if !p.is_finite() {
            out.push(Violation::new(
                ViolationKind::NonFiniteProportion,
                Some(key.clone()),
                p.as_f64(),
                "non-finite proportion",
            ));
        } else if *p < T::zero() {
            out.push(Violation::new(
                ViolationKind::NegativeProportion,
                Some(key.clone()),
                p.as_f64(),
                format!("negative proportion {}", p),
            ));
        }
    }
    let total = compensated_sum(entries.iter().map(|(_, p)| *p));
    if total.is_finite() && (total - T::one()).abs().as_f64() > T::MASS_TOLERANCE {
        out.push(Violation::new(
            ViolationKind::MassNotOne,
            None,
            total.as_f64(),
            format!("mass {} != 1", total),
        ));
    }
    out
}

/// Divides by the total once so downstream code sees exact normalization.
pub(crate) fn renormalize<T: Scalar>(values: &mut [T]) {
    let total = compensated_sum(values.iter().copied());
    if total > T::zero() && total != T::one() {
        for v in values.iter_mut() {
            *v = *v / total;
        }
    }
}
