//! Named estimators mapping a cell table to an [`EffectReport`], so that the
//! bootstrap and the command line can dispatch on a value.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::CellTable;
use crate::designs::{
    closeout_identify, combine_curves, cve_cpe_curves, three_arm_binary_identify, AssignmentDesign, DesignError,
};
use crate::identification::{
    check_testable_constraints, identify_ey1m0_undetectable, identify_under_independence, phi_from_cells,
    IdentificationError, StratifiedConditionalMeans,
};
use crate::popmodel::{Arm, EffectReport, Provenance};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Identification(#[from] IdentificationError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("estimator not applicable: {0}")]
    Schema(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Estimator<T: Scalar> {
    /// Stratified `E[Y_{1M0}]` from vaccinees with undetectable response.
    SubtractingSi2,
    /// Binary-mediator closed form from the margins φ.
    IndependenceBinary,
    ThreeArmBinary { predictor: BTreeMap<String, bool> },
    Closeout { design: AssignmentDesign<T> },
    /// Per-level curves combined; with a design the immunization arm gives `θ_Ia`.
    CveCpe { design: Option<AssignmentDesign<T>> },
}

impl<T: Scalar> Estimator<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::SubtractingSi2 => "subtracting-si2",
            Estimator::IndependenceBinary => "independence-binary",
            Estimator::ThreeArmBinary { .. } => "three-arm-binary",
            Estimator::Closeout { .. } => "closeout",
            Estimator::CveCpe { .. } => "cve-cpe",
        }
    }

    pub fn estimate(&self, cells: &CellTable<T>) -> Result<EffectReport<T>, EstimatorError> {
        match self {
            Estimator::SubtractingSi2 => subtracting_si2(cells),
            Estimator::IndependenceBinary => {
                let phi = phi_from_cells(cells)
                    .ok_or_else(|| EstimatorError::Schema("needs vaccine and placebo arms".into()))?;
                let r = identify_under_independence(&phi)?;
                let mut report = r.report;
                for c in check_testable_constraints(&phi) {
                    if c.satisfied() == Some(false) {
                        report.notes.push(format!("testable constraint violated: {}", c.constraint));
                    }
                }
                Ok(report)
            }
            Estimator::ThreeArmBinary { predictor } => Ok(three_arm_binary_identify(cells, predictor)?.report),
            Estimator::Closeout { design } => Ok(closeout_identify(cells, design)?.report),
            Estimator::CveCpe { design } => {
                let est = cve_cpe_curves(cells, design.as_ref())?;
                Ok(combine_curves(&est.curves))
            }
        }
    }
}

fn subtracting_si2<T: Scalar>(cells: &CellTable<T>) -> Result<EffectReport<T>, EstimatorError> {
    for arm in [Arm::Vaccine, Arm::Placebo] {
        if !cells.has_arm(arm) {
            return Err(EstimatorError::Schema(format!("needs the {arm} arm")));
        }
    }
    let means = StratifiedConditionalMeans::from_cells(cells);
    let ident = identify_ey1m0_undetectable(&means)?;
    let e11 = cells.mean(|c| c.arm == Arm::Vaccine).unwrap_or_else(T::zero);
    let e00 = cells.mean(|c| c.arm == Arm::Placebo).unwrap_or_else(T::zero);
    let mut report = EffectReport::from_expectations(e11, Some(ident.ey1m0), None, e00, Provenance::IdentifiedSi2);
    report.notes.extend(ident.notes);
    Ok(report)
}
