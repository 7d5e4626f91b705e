//! Identification formulas: observed-data functionals that equal cross-world
//! expectations under sequential ignorability, and the closed forms available
//! for a binary mediator when potential outcomes are independent of the
//! vaccine-arm mediator within placebo-type strata.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::CellTable;
use crate::popmodel::{
    Arm, EffectReport, Estimate, MediatorLevel, PhiTable, Provenance, Violation, ViolationKind,
};
use crate::scalar::{compensated_sum, Scalar};

/// Components down to this far below zero are treated as rounding noise.
pub const CLAMP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IdentificationError {
    #[error("positivity violated: no outcome mean for stratum {stratum}, arm {arm}, mediator level {level}")]
    MissingMean { stratum: String, arm: Arm, level: MediatorLevel },
    #[error("positivity violated: stratum {stratum} has no vaccinated participants with undetectable response")]
    NoUndetectableVaccinees { stratum: String },
    #[error("placebo-arm mediator is detectable with probability {mass} in stratum {stratum}")]
    DetectablePlaceboMediator { stratum: String, mass: f64 },
    #[error("arm {arm} has no mediator distribution in stratum {stratum}")]
    MissingArm { stratum: String, arm: Arm },
    #[error("no vaccinated non-responders: Pr[M1 = neg] = 0")]
    NoNonResponders,
    #[error("invalid conditional means: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// Outcome means and mediator distribution of one arm within one stratum.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct ArmMeans<T> {
    /// `E[Y | A = a, M = m, X = x]` for levels observed in the arm.
    pub means: BTreeMap<MediatorLevel, T>,
    /// `Pr[M = m | A = a, X = x]`.
    pub mediator: BTreeMap<MediatorLevel, T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct StratumMeans<T> {
    pub label: String,
    pub weight: T,
    pub arms: BTreeMap<Arm, ArmMeans<T>>,
}

/// Stratum weights with per-arm, per-level outcome means and mediator
/// distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct StratifiedConditionalMeans<T> {
    pub strata: Vec<StratumMeans<T>>,
}

impl<T: Scalar> StratifiedConditionalMeans<T> {
    pub fn new(strata: Vec<StratumMeans<T>>) -> Result<Self, IdentificationError> {
        let s = Self { strata };
        let v = s.check();
        if v.is_empty() {
            Ok(s)
        } else {
            Err(IdentificationError::Invalid(v))
        }
    }

    pub fn check(&self) -> Vec<Violation> {
        let tol = T::MASS_TOLERANCE;
        let mut out = Vec::new();
        let in_unit = |p: T| p.is_finite() && p >= T::zero() && p <= T::one();
        let total = compensated_sum(self.strata.iter().map(|s| s.weight));
        if (total - T::one()).abs().as_f64() > tol {
            out.push(Violation::new(
                ViolationKind::MassNotOne,
                Some("weights".into()),
                total.as_f64(),
                format!("stratum weights sum to {total}"),
            ));
        }
        for s in &self.strata {
            if !in_unit(s.weight) {
                out.push(Violation::new(
                    ViolationKind::Margin,
                    Some(s.label.clone()),
                    s.weight.as_f64(),
                    "stratum weight outside [0, 1]",
                ));
            }
            for (arm, am) in &s.arms {
                let key = format!("{}/{}", s.label, arm);
                let m = compensated_sum(am.mediator.values().copied());
                if (m - T::one()).abs().as_f64() > tol || am.mediator.values().any(|&p| !in_unit(p)) {
                    out.push(Violation::new(
                        ViolationKind::MassNotOne,
                        Some(key.clone()),
                        m.as_f64(),
                        format!("mediator distribution sums to {m}"),
                    ));
                }
                for (lvl, &y) in &am.means {
                    if !in_unit(y) {
                        out.push(Violation::new(
                            ViolationKind::Margin,
                            Some(format!("{key}/{lvl}")),
                            y.as_f64(),
                            "outcome mean outside [0, 1]",
                        ));
                    }
                }
            }
        }
        out
    }

    /// Cell-wise empirical means. Stratum weights pool the vaccine and placebo
    /// arms; placebo rows without a mediator count as undetectable.
    pub fn from_cells(cells: &CellTable<T>) -> Self {
        let weights = cells.stratum_weights();
        let strata = weights
            .into_iter()
            .map(|(label, weight)| {
                let mut arms = BTreeMap::new();
                for arm in Arm::ALL {
                    let in_arm = |c: &crate::data::Cell<T>| c.arm == arm && c.stratum == label;
                    let n = cells.total(in_arm);
                    if n <= T::zero() {
                        continue;
                    }
                    let mut am = ArmMeans::default();
                    for lvl in cells.levels(arm) {
                        let at = |c: &crate::data::Cell<T>| in_arm(c) && c.mediator == lvl;
                        let k = cells.total(at);
                        if k > T::zero() {
                            am.mediator.insert(lvl, k / n);
                            am.means.insert(lvl, cells.total(|c| at(c) && c.outcome) / k);
                        }
                    }
                    arms.insert(arm, am);
                }
                StratumMeans { label, weight, arms }
            })
            .collect();
        Self { strata }
    }

    fn supported(&self) -> impl Iterator<Item = &StratumMeans<T>> {
        self.strata.iter().filter(|s| s.weight > T::zero())
    }
}

/// `Σ_x Pr[X=x] Σ_m E[Y | A=a, M=m, X=x] Pr[M=m | A=a', X=x]`.
pub fn mediation_formula<T: Scalar>(
    data: &StratifiedConditionalMeans<T>,
    a: Arm,
    a_prime: Arm,
) -> Result<T, IdentificationError> {
    let mut terms = Vec::new();
    for s in data.supported() {
        let missing = |arm| IdentificationError::MissingArm {
            stratum: s.label.clone(),
            arm,
        };
        let outcome = s.arms.get(&a).ok_or_else(|| missing(a))?;
        let mediator = s.arms.get(&a_prime).ok_or_else(|| missing(a_prime))?;
        for (&lvl, &p) in mediator.mediator.iter().filter(|(_, &p)| p > T::zero()) {
            let y = outcome.means.get(&lvl).ok_or_else(|| IdentificationError::MissingMean {
                stratum: s.label.clone(),
                arm: a,
                level: lvl,
            })?;
            terms.push(s.weight * *y * p);
        }
    }
    Ok(compensated_sum(terms))
}

/// `E[Y_{1M0}]` when the placebo mediator is always undetectable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UndetectableIdentification<T> {
    pub ey1m0: T,
    /// Strata whose vaccinees are all undetectable.
    pub notes: Vec<String>,
}

/// `Σ_x E[Y | A=1, M=neg, X=x] Pr[X=x]`, valid when the placebo-arm mediator
/// is undetectable in every stratum.
pub fn identify_ey1m0_undetectable<T: Scalar>(
    data: &StratifiedConditionalMeans<T>,
) -> Result<UndetectableIdentification<T>, IdentificationError> {
    let neg = MediatorLevel::Undetectable;
    let mut terms = Vec::new();
    let mut notes = Vec::new();
    for s in data.supported() {
        if let Some(p) = s.arms.get(&Arm::Placebo) {
            let detectable = compensated_sum(p.mediator.iter().filter(|(l, _)| l.is_detectable()).map(|(_, &v)| v));
            if detectable.as_f64() > T::MASS_TOLERANCE {
                return Err(IdentificationError::DetectablePlaceboMediator {
                    stratum: s.label.clone(),
                    mass: detectable.as_f64(),
                });
            }
        }
        let v = s.arms.get(&Arm::Vaccine).ok_or_else(|| IdentificationError::MissingArm {
            stratum: s.label.clone(),
            arm: Arm::Vaccine,
        })?;
        let y = v
            .means
            .get(&neg)
            .ok_or_else(|| IdentificationError::NoUndetectableVaccinees { stratum: s.label.clone() })?;
        if !v.mediator.iter().any(|(l, &p)| l.is_detectable() && p > T::zero()) {
            notes.push(format!(
                "stratum {}: no vaccinee has a detectable response; its contribution reflects only the undetectable comparison",
                s.label
            ));
        }
        terms.push(*y * s.weight);
    }
    Ok(UndetectableIdentification {
        ey1m0: compensated_sum(terms),
        notes,
    })
}

/// Type proportions implied by the independence model, keyed as in the type table
/// (`·` marks a summed-over position).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PiComponents<T> {
    #[serde(rename = "00/0000")]
    pub nonresponder_uninfectable: T,
    #[serde(rename = "00/00.1")]
    pub nonresponder_protected_by_vaccine: T,
    #[serde(rename = "00/.1.1")]
    pub nonresponder_failing: T,
    #[serde(rename = "10/0000")]
    pub responder_uninfectable: T,
    #[serde(rename = "10/0..1")]
    pub responder_protected: T,
    #[serde(rename = "10/1111")]
    pub responder_doomed: T,
}

impl<T: Scalar> PiComponents<T> {
    pub fn sum(&self) -> T {
        compensated_sum([
            self.nonresponder_uninfectable,
            self.nonresponder_protected_by_vaccine,
            self.nonresponder_failing,
            self.responder_uninfectable,
            self.responder_protected,
            self.responder_doomed,
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceIdentification<T: Scalar> {
    pub pi_components: PiComponents<T>,
    pub ey1m0: T,
    pub theta_is: Estimate<T>,
    pub lambda_s: Estimate<T>,
    pub report: EffectReport<T>,
    /// A component was negative beyond rounding: the model is contradicted by φ.
    pub model_violated: bool,
    pub warnings: Vec<String>,
}

/// Closed-form identification from φ when potential outcomes are independent
/// of the vaccine-arm mediator.
pub fn identify_under_independence<T: Scalar>(
    phi: &PhiTable<T>,
) -> Result<IndependenceIdentification<T>, IdentificationError> {
    let vn = phi.vn();
    if vn <= T::zero() {
        return Err(IdentificationError::NoNonResponders);
    }
    let va = phi.va();
    let mut warnings = Vec::new();
    let mut model_violated = false;
    let mut clamp = |name: &str, x: T| {
        if x >= T::zero() {
            x
        } else if x.as_f64() >= -CLAMP_TOLERANCE {
            warnings.push(format!("{name} = {x} clamped to 0"));
            T::zero()
        } else {
            model_violated = true;
            warnings.push(format!("{name} = {x} is negative: data contradict the model"));
            x
        }
    };
    let pns = phi.pns();
    let pi_components = PiComponents {
        nonresponder_uninfectable: pns * vn,
        nonresponder_protected_by_vaccine: clamp("pi 00/00.1", phi.vns() - pns * vn),
        nonresponder_failing: phi.vnf(),
        responder_uninfectable: pns * va,
        responder_protected: clamp("pi 10/0..1", phi.vas() - pns * va),
        responder_doomed: phi.vaf(),
    };
    let ey1m0 = phi.vnf() / vn;
    let mut report = EffectReport::from_expectations(phi.vf(), Some(ey1m0), None, phi.pnf(), Provenance::IdentifiedSi2);
    let theta_is = if phi.vnf() > T::zero() {
        Estimate::defined(phi.vf() * vn / phi.vnf(), Provenance::IdentifiedSi2)
    } else {
        Estimate::undefined("theta_is: no failures among vaccinated non-responders")
    };
    let lambda_s = if !theta_is.is_defined() {
        Estimate::undefined("lambda_s: theta_is undefined")
    } else {
        report.lambda_s.clone()
    };
    report.theta_is = theta_is.clone();
    report.lambda_s = lambda_s.clone();
    report.notes.extend(warnings.iter().cloned());
    Ok(IndependenceIdentification {
        pi_components,
        ey1m0,
        theta_is,
        lambda_s,
        report,
        model_violated,
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintStatus {
    Satisfied,
    Violated,
    NotEvaluable,
}

/// One observable implication of the independence model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintCheck<T> {
    pub constraint: &'static str,
    pub lhs: Option<T>,
    pub rhs: T,
    pub status: ConstraintStatus,
}

impl<T> ConstraintCheck<T> {
    pub fn satisfied(&self) -> Option<bool> {
        match self.status {
            ConstraintStatus::Satisfied => Some(true),
            ConstraintStatus::Violated => Some(false),
            ConstraintStatus::NotEvaluable => None,
        }
    }
}

/// Evaluates `φ_vnf/φ_vn ≤ φ_pnf` and `φ_vaf/φ_va ≤ φ_pnf`.
/// Comparison allows a few ulps of slack so exact boundary cases pass.
pub fn check_testable_constraints<T: Scalar>(phi: &PhiTable<T>) -> Vec<ConstraintCheck<T>> {
    let rhs = phi.pnf();
    let slack = T::epsilon() * T::lit(8.0);
    let eval = |constraint, num: T, den: T| {
        if den <= T::zero() {
            return ConstraintCheck {
                constraint,
                lhs: None,
                rhs,
                status: ConstraintStatus::NotEvaluable,
            };
        }
        let lhs = num / den;
        let status = if lhs <= rhs + slack * (rhs + lhs) {
            ConstraintStatus::Satisfied
        } else {
            ConstraintStatus::Violated
        };
        ConstraintCheck {
            constraint,
            lhs: Some(lhs),
            rhs,
            status,
        }
    };
    vec![
        eval("phi_vnf/phi_vn <= phi_pnf", phi.vnf(), phi.vn()),
        eval("phi_vaf/phi_va <= phi_pnf", phi.vaf(), phi.va()),
    ]
}

/// Every estimand from the four expectations; absent ones leave the
/// dependent fields undefined.
pub fn effects_from_expectations<T: Scalar>(
    e11: T,
    e10: Option<T>,
    e01: Option<T>,
    e00: T,
    provenance: Provenance,
) -> EffectReport<T> {
    EffectReport::from_expectations(e11, e10, e01, e00, provenance)
}

/// Binary-mediator margins of a two-arm cell table: detectable levels
/// collapse to "responder".
pub fn phi_from_cells<T: Scalar>(cells: &CellTable<T>) -> Option<PhiTable<T>> {
    let pv = |detectable: bool, fail: bool| {
        cells.proportion(Arm::Vaccine, |c| c.mediator.is_detectable() == detectable && c.outcome == fail)
    };
    let pp = |detectable: bool, fail: bool| {
        cells.proportion(Arm::Placebo, |c| c.mediator.is_detectable() == detectable && c.outcome == fail)
    };
    let mut phi = PhiTable::new(
        pv(true, true)?,
        pv(true, false)?,
        pv(false, true)?,
        pv(false, false)?,
        pp(false, true)?,
        pp(false, false)?,
    )
    .ok()?;
    let (paf, pas) = (pp(true, true)?, pp(true, false)?);
    if paf > T::zero() || pas > T::zero() {
        phi = phi.with_placebo_detectable(paf, pas).ok()?;
    }
    Some(phi)
}
