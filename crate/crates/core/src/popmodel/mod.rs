//! Population-level ground truth: principal-type distributions, observable
//! margins, and exact enumeration of every cross-world expectation.

mod binary;
mod general;
mod level;
mod phi;
mod report;
mod validation;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use binary::{BinaryType, BinaryTypeDistribution, OutcomePattern};
pub use general::{Atom, GeneralPopulation, PopulationStratum, StratifiedPopulation, MAX_SUPPORT};
pub use level::{Arm, MediatorArm, MediatorLevel, ParseArmError, ParseLevelError, UNDETECTABLE_TOKEN};
pub use phi::PhiTable;
pub use report::{CurvePoint, EffectReport, Estimate, Expectations, Interval, Provenance, REPORT_FIELDS};
pub use validation::{mass_violations, ValidationReport, Violation, ViolationKind};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PopulationError {
    #[error("invalid population: {}", summarize(.0))]
    Invalid(Vec<Violation>),
}

fn summarize(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Anything whose cross-world expectations can be enumerated exactly.
pub trait CrossWorld<T: Scalar> {
    fn cross_world(&self, outcome_arm: Arm, mediator_arm: MediatorArm) -> T;
}

impl<T: Scalar> CrossWorld<T> for BinaryTypeDistribution<T> {
    fn cross_world(&self, outcome_arm: Arm, mediator_arm: MediatorArm) -> T {
        BinaryTypeDistribution::cross_world(self, outcome_arm, mediator_arm)
    }
}

impl<T: Scalar> CrossWorld<T> for GeneralPopulation<T> {
    fn cross_world(&self, outcome_arm: Arm, mediator_arm: MediatorArm) -> T {
        GeneralPopulation::cross_world(self, outcome_arm, mediator_arm)
    }
}

impl<T: Scalar> CrossWorld<T> for StratifiedPopulation<T> {
    fn cross_world(&self, outcome_arm: Arm, mediator_arm: MediatorArm) -> T {
        StratifiedPopulation::cross_world(self, outcome_arm, mediator_arm)
    }
}

/// Any supported ground-truth population.
#[derive(Clone, Debug, PartialEq)]
pub enum Population<T> {
    Binary(BinaryTypeDistribution<T>),
    General(GeneralPopulation<T>),
    Stratified(StratifiedPopulation<T>),
}

impl<T: Scalar> Population<T> {
    pub fn to_stratified(&self) -> StratifiedPopulation<T> {
        match self {
            Population::Binary(b) => StratifiedPopulation::single(b.to_general()),
            Population::General(g) => StratifiedPopulation::single(g.clone()),
            Population::Stratified(s) => s.clone(),
        }
    }
}

impl<T: Scalar> CrossWorld<T> for Population<T> {
    fn cross_world(&self, outcome_arm: Arm, mediator_arm: MediatorArm) -> T {
        match self {
            Population::Binary(b) => b.cross_world(outcome_arm, mediator_arm),
            Population::General(g) => g.cross_world(outcome_arm, mediator_arm),
            Population::Stratified(s) => s.cross_world(outcome_arm, mediator_arm),
        }
    }
}

/// `E[Y_{a M_{a'}}]` computed by enumeration. The immunization arm reads `Y_{0m}`.
pub fn oracle_cross_world<T: Scalar, P: CrossWorld<T> + ?Sized>(pop: &P, outcome_arm: Arm, mediator_arm: MediatorArm) -> T {
    pop.cross_world(outcome_arm, mediator_arm)
}

/// Every estimand from the four enumerated expectations.
pub fn oracle_effects<T: Scalar, P: CrossWorld<T> + ?Sized>(pop: &P) -> EffectReport<T> {
    let e11 = pop.cross_world(Arm::Vaccine, MediatorArm::Vaccine);
    let e10 = pop.cross_world(Arm::Vaccine, MediatorArm::Placebo);
    let e01 = pop.cross_world(Arm::Placebo, MediatorArm::Vaccine);
    let e00 = pop.cross_world(Arm::Placebo, MediatorArm::Placebo);
    EffectReport::from_expectations(e11, Some(e10), Some(e01), e00, Provenance::Oracle)
}

/// Observable margins of a type distribution.
pub fn phi_from_pi<T: Scalar>(pi: &BinaryTypeDistribution<T>) -> PhiTable<T> {
    pi.phi()
}

/// On-disk population description (JSON).
///
/// * binary: `{"pi": {"00/0000": 0.1, ...}}` with the twelve canonical keys
/// * general: `{"support": ["neg", 1, 2], "atoms": [{"m1": 1, "y1": [..], "y0": [..], "prob": p}], "monotone": true}`
/// * stratified: `{"strata": [{"label": "x", "weight": w, "population": {...}}]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationFile {
    Binary {
        pi: BTreeMap<String, f64>,
    },
    General {
        support: Vec<MediatorLevel>,
        atoms: Vec<AtomRecord>,
        #[serde(default)]
        monotone: bool,
    },
    Stratified {
        strata: Vec<StratumRecord>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub m1: MediatorLevel,
    pub y1: Vec<u8>,
    pub y0: Vec<u8>,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumRecord {
    pub label: String,
    pub weight: f64,
    pub population: PopulationFile,
}

impl PopulationFile {
    /// Parses the record into a validated population, collecting every
    /// violated invariant on failure.
    pub fn build<T: Scalar>(&self) -> Result<Population<T>, PopulationError> {
        match self {
            PopulationFile::Binary { pi } => {
                BinaryTypeDistribution::from_keyed(pi.iter().map(|(k, v)| (k.as_str(), T::lit(*v)))).map(Population::Binary)
            }
            PopulationFile::General {
                support,
                atoms,
                monotone,
            } => build_general(support, atoms, *monotone).map(Population::General),
            PopulationFile::Stratified { strata } => {
                let mut violations = Vec::new();
                let mut built = Vec::new();
                for s in strata {
                    match s.population.build::<T>() {
                        Ok(p) => {
                            let population = match p {
                                Population::Binary(b) => b.to_general(),
                                Population::General(g) => g,
                                Population::Stratified(_) => {
                                    violations.push(Violation::new(
                                        ViolationKind::Support,
                                        Some(s.label.clone()),
                                        0.0,
                                        "strata cannot be nested",
                                    ));
                                    continue;
                                }
                            };
                            built.push(PopulationStratum {
                                label: s.label.clone(),
                                weight: T::lit(s.weight),
                                population,
                            });
                        }
                        Err(PopulationError::Invalid(v)) => violations.extend(v.into_iter().map(|mut v| {
                            v.key = Some(format!("{}:{}", s.label, v.key.unwrap_or_default()));
                            v
                        })),
                    }
                }
                if !violations.is_empty() {
                    return Err(PopulationError::Invalid(violations));
                }
                StratifiedPopulation::new(built).map(Population::Stratified)
            }
        }
    }

    pub fn from_population(pop: &Population<f64>) -> Self {
        match pop {
            Population::Binary(b) => PopulationFile::Binary { pi: b.to_keyed() },
            Population::General(g) => general_record(g),
            Population::Stratified(s) => PopulationFile::Stratified {
                strata: s
                    .strata()
                    .iter()
                    .map(|st| StratumRecord {
                        label: st.label.clone(),
                        weight: st.weight,
                        population: general_record(&st.population),
                    })
                    .collect(),
            },
        }
    }
}

fn general_record(g: &GeneralPopulation<f64>) -> PopulationFile {
    PopulationFile::General {
        support: g.support().to_vec(),
        atoms: g
            .atoms()
            .iter()
            .map(|a| AtomRecord {
                m1: g.support()[a.m1()],
                y1: a.outcomes(Arm::Vaccine).into_iter().map(u8::from).collect(),
                y0: a.outcomes(Arm::Placebo).into_iter().map(u8::from).collect(),
                prob: a.prob(),
            })
            .collect(),
        monotone: g.is_monotone(),
    }
}

fn build_general<T: Scalar>(
    support: &[MediatorLevel],
    atoms: &[AtomRecord],
    monotone: bool,
) -> Result<GeneralPopulation<T>, PopulationError> {
    let mut violations = Vec::new();
    if support.len() > MAX_SUPPORT {
        violations.push(Violation::new(
            ViolationKind::Support,
            None,
            support.len() as f64,
            format!("support has {} levels, maximum is {MAX_SUPPORT}", support.len()),
        ));
        return Err(PopulationError::Invalid(violations));
    }
    let mut built = Vec::with_capacity(atoms.len());
    for (i, a) in atoms.iter().enumerate() {
        let key = Some(format!("atom[{i}]"));
        let Some(m1) = support.iter().position(|l| *l == a.m1) else {
            violations.push(Violation::new(
                ViolationKind::MediatorOutsideSupport,
                key,
                0.0,
                format!("m1 level {} not in support", a.m1),
            ));
            continue;
        };
        if a.y1.iter().chain(&a.y0).any(|&b| b > 1) {
            violations.push(Violation::new(
                ViolationKind::OutcomeVectorLength,
                key,
                0.0,
                "potential outcomes must be 0 or 1",
            ));
            continue;
        }
        if a.y1.len() != a.y0.len() || a.y1.len() > MAX_SUPPORT {
            violations.push(Violation::new(
                ViolationKind::OutcomeVectorLength,
                key,
                a.y1.len() as f64,
                format!("outcome vectors have lengths {} and {}", a.y1.len(), a.y0.len()),
            ));
            continue;
        }
        let y1: Vec<bool> = a.y1.iter().map(|&b| b == 1).collect();
        let y0: Vec<bool> = a.y0.iter().map(|&b| b == 1).collect();
        built.push(Atom::new(m1, y1, y0, T::lit(a.prob)));
    }
    violations.extend(GeneralPopulation::check(support, &built, monotone));
    if !violations.is_empty() {
        return Err(PopulationError::Invalid(violations));
    }
    GeneralPopulation::new(support.to_vec(), built, monotone)
}

/// Every violated invariant of a population file; `ok` iff none.
pub fn validate_population(file: &PopulationFile) -> ValidationReport {
    match file.build::<f64>() {
        Ok(_) => ValidationReport::from_violations(Vec::new()),
        Err(PopulationError::Invalid(v)) => ValidationReport::from_violations(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_file() -> PopulationFile {
        PopulationFile::Binary {
            pi: BinaryType::all().map(|t| (t.key(), 1.0 / 12.0)).collect(),
        }
    }

    #[test]
    fn uniform_binary_file_is_valid() {
        assert!(validate_population(&uniform_file()).ok);
    }

    #[test]
    fn negative_proportion_in_file() {
        let mut f = uniform_file();
        if let PopulationFile::Binary { pi } = &mut f {
            pi.insert("10/0011".into(), -0.1);
        }
        let r = validate_population(&f);
        assert!(!r.ok);
        assert!(r
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::NegativeProportion && v.key.as_deref() == Some("10/0011")));
    }

    #[test]
    fn general_file_round_trip_through_json() {
        let json = r#"{"support":["neg",1,2],"atoms":[
            {"m1":"neg","y1":[1,1,0],"y0":[1,1,1],"prob":0.2},
            {"m1":1,"y1":[0,0,0],"y0":[1,0,0],"prob":0.5},
            {"m1":2,"y1":[0,0,0],"y0":[1,1,0],"prob":0.3}],"monotone":true}"#;
        let f: PopulationFile = serde_json::from_str(json).unwrap();
        assert!(matches!(f, PopulationFile::General { .. }));
        let p = f.build::<f64>().unwrap();
        let back = PopulationFile::from_population(&p);
        assert_eq!(back.build::<f64>().unwrap(), p);
    }

    #[test]
    fn general_file_mass_short() {
        let json = r#"{"support":["neg"],"atoms":[{"m1":"neg","y1":[1],"y0":[1],"prob":0.9}]}"#;
        let f: PopulationFile = serde_json::from_str(json).unwrap();
        let r = validate_population(&f);
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].message.contains("0.9"));
    }

    #[test]
    fn stratified_file_labels_violations() {
        let json = r#"{"strata":[
            {"label":"a","weight":0.5,"population":{"pi":{"00/0000":1.0}}},
            {"label":"b","weight":0.5,"population":{"pi":{"00/0000":0.5}}}]}"#;
        let f: PopulationFile = serde_json::from_str(json).unwrap();
        let r = validate_population(&f);
        assert!(!r.ok);
        assert!(r.violations[0].key.as_deref().unwrap().starts_with("b:"));
    }

    #[test]
    fn f32_population_builds() {
        let p = uniform_file().build::<f32>().unwrap();
        let e = oracle_cross_world(&p, Arm::Placebo, MediatorArm::Placebo);
        assert!((e - 5.0 / 6.0).abs() < 1e-6);
    }
}
