use std::collections::BTreeMap;
use std::fmt;

use super::general::{Atom, GeneralPopulation};
use super::level::{Arm, MediatorArm, MediatorLevel};
use super::phi::PhiTable;
use super::validation::{mass_violations, renormalize, Violation, ViolationKind};
use super::PopulationError;
use crate::scalar::Scalar;

/// Potential-outcome pattern `[Y11, Y10, Y01, Y00]` admissible under the
/// monotonicity restrictions (no harm from vaccine, no harm from antibodies).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutcomePattern {
    P0000,
    P0001,
    P0011,
    P0101,
    P0111,
    P1111,
}

impl OutcomePattern {
    pub const ALL: [OutcomePattern; 6] = [
        OutcomePattern::P0000,
        OutcomePattern::P0001,
        OutcomePattern::P0011,
        OutcomePattern::P0101,
        OutcomePattern::P0111,
        OutcomePattern::P1111,
    ];

    pub fn bits(self) -> &'static str {
        match self {
            OutcomePattern::P0000 => "0000",
            OutcomePattern::P0001 => "0001",
            OutcomePattern::P0011 => "0011",
            OutcomePattern::P0101 => "0101",
            OutcomePattern::P0111 => "0111",
            OutcomePattern::P1111 => "1111",
        }
    }

    /// `[Y11, Y10, Y01, Y00]`.
    pub fn outcomes(self) -> [bool; 4] {
        let b = self.bits().as_bytes();
        [b[0] == b'1', b[1] == b'1', b[2] == b'1', b[3] == b'1']
    }

    /// Potential outcome with the vaccine indicator and binary mediator set.
    pub fn outcome(self, vaccinated: bool, mediator: bool) -> bool {
        let y = self.outcomes();
        match (vaccinated, mediator) {
            (true, true) => y[0],
            (true, false) => y[1],
            (false, true) => y[2],
            (false, false) => y[3],
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn from_bits(s: &str) -> Option<Self> {
        OutcomePattern::ALL.into_iter().find(|p| p.bits() == s)
    }
}

/// One of the twelve principal types: responder status plus outcome pattern.
/// Placebo recipients never have detectable antibodies, so `M0 = 0` always.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinaryType {
    pub responder: bool,
    pub outcomes: OutcomePattern,
}

impl BinaryType {
    pub const COUNT: usize = 12;

    pub fn all() -> impl Iterator<Item = BinaryType> {
        [false, true].into_iter().flat_map(|responder| {
            OutcomePattern::ALL
                .into_iter()
                .map(move |outcomes| BinaryType { responder, outcomes })
        })
    }

    pub fn index(self) -> usize {
        usize::from(self.responder) * 6 + self.outcomes.index()
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < Self::COUNT, "type index {i} out of range");
        BinaryType {
            responder: i >= 6,
            outcomes: OutcomePattern::ALL[i % 6],
        }
    }

    /// Canonical key such as `"10/0101"` (mediators `M1 M0`, then outcomes).
    pub fn key(self) -> String {
        format!(
            "{}/{}",
            if self.responder { "10" } else { "00" },
            self.outcomes.bits()
        )
    }

    pub fn parse_key(key: &str) -> Result<Self, Violation> {
        let (m, y) = key.split_once('/').ok_or_else(|| {
            Violation::new(ViolationKind::UnknownKey, Some(key.to_string()), 0.0, "malformed type key")
        })?;
        let responder = match m {
            "00" => false,
            "10" => true,
            "01" | "11" => {
                return Err(Violation::new(
                    ViolationKind::InadmissibleType,
                    Some(key.to_string()),
                    0.0,
                    "placebo mediator must be undetectable (and vaccination cannot block antibodies)",
                ))
            }
            _ => {
                return Err(Violation::new(
                    ViolationKind::UnknownKey,
                    Some(key.to_string()),
                    0.0,
                    "mediator pattern must be 00 or 10",
                ))
            }
        };
        let outcomes = match OutcomePattern::from_bits(y) {
            Some(p) => p,
            None if y.len() == 4 && y.bytes().all(|b| b == b'0' || b == b'1') => {
                return Err(Violation::new(
                    ViolationKind::InadmissibleType,
                    Some(key.to_string()),
                    0.0,
                    "outcome pattern violates monotonicity (vaccine or antibodies causing disease)",
                ))
            }
            None => {
                return Err(Violation::new(
                    ViolationKind::UnknownKey,
                    Some(key.to_string()),
                    0.0,
                    "outcome pattern must be four binary digits",
                ))
            }
        };
        Ok(BinaryType { responder, outcomes })
    }

    /// `Y_{a m}` for outcome arm `a`; the immunization arm acts as placebo.
    pub fn outcome_at(self, arm: Arm, mediator: bool) -> bool {
        self.outcomes.outcome(arm == Arm::Vaccine, mediator)
    }

    pub fn mediator(self, arm: MediatorArm) -> bool {
        match arm {
            MediatorArm::Placebo => false,
            MediatorArm::Vaccine => self.responder,
        }
    }
}

impl fmt::Display for BinaryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Population proportions over the twelve admissible principal types.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryTypeDistribution<T> {
    pi: [T; 12],
}

impl<T: Scalar> BinaryTypeDistribution<T> {
    /// Validates and renormalizes. Indexing follows [`BinaryType::index`].
    pub fn new(pi: [T; 12]) -> Result<Self, PopulationError> {
        let violations = Self::check(&pi);
        if !violations.is_empty() {
            return Err(PopulationError::Invalid(violations));
        }
        let mut pi = pi;
        renormalize(&mut pi);
        Ok(Self { pi })
    }

    pub fn check(pi: &[T; 12]) -> Vec<Violation> {
        let labelled: Vec<(String, T)> = pi
            .iter()
            .enumerate()
            .map(|(i, p)| (BinaryType::from_index(i).key(), *p))
            .collect();
        mass_violations(&labelled)
    }

    /// Builds from `(key, proportion)` pairs; absent keys are zero.
    pub fn from_keyed<'a, I>(entries: I) -> Result<Self, PopulationError>
    where
        I: IntoIterator<Item = (&'a str, T)>,
    {
        let mut pi = [T::zero(); 12];
        let mut violations = Vec::new();
        for (key, p) in entries {
            match BinaryType::parse_key(key) {
                Ok(t) => pi[t.index()] = pi[t.index()] + p,
                Err(v) => violations.push(v),
            }
        }
        violations.extend(Self::check(&pi));
        if !violations.is_empty() {
            return Err(PopulationError::Invalid(violations));
        }
        Self::new(pi)
    }

    pub fn uniform() -> Self {
        Self::new([T::one() / T::lit(12.0); 12]).expect("uniform distribution is valid")
    }

    pub fn point_mass(t: BinaryType) -> Self {
        let mut pi = [T::zero(); 12];
        pi[t.index()] = T::one();
        Self { pi }
    }

    pub fn get(&self, t: BinaryType) -> T {
        self.pi[t.index()]
    }

    pub fn proportions(&self) -> &[T; 12] {
        &self.pi
    }

    pub fn iter(&self) -> impl Iterator<Item = (BinaryType, T)> + '_ {
        BinaryType::all().map(move |t| (t, self.get(t)))
    }

    pub fn to_keyed(&self) -> BTreeMap<String, T> {
        self.iter().map(|(t, p)| (t.key(), p)).collect()
    }

    /// `E[Y_{a M_{a'}}]` by exact enumeration over types.
    pub fn cross_world(&self, outcome_arm: Arm, mediator_arm: MediatorArm) -> T {
        self.iter()
            .filter(|(t, _)| t.outcome_at(outcome_arm, t.mediator(mediator_arm)))
            .map(|(_, p)| p)
            .sum()
    }

    /// Observable within-arm margins implied by the type proportions.
    pub fn phi(&self) -> PhiTable<T> {
        let sum_where = |f: &dyn Fn(BinaryType) -> bool| -> T {
            self.iter().filter(|(t, _)| f(*t)).map(|(_, p)| p).sum()
        };
        let vaf = sum_where(&|t| t.responder && t.outcome_at(Arm::Vaccine, true));
        let vas = sum_where(&|t| t.responder && !t.outcome_at(Arm::Vaccine, true));
        let vnf = sum_where(&|t| !t.responder && t.outcome_at(Arm::Vaccine, false));
        let vns = sum_where(&|t| !t.responder && !t.outcome_at(Arm::Vaccine, false));
        let pns = sum_where(&|t| !t.outcome_at(Arm::Placebo, false));
        let pnf = T::one() - pns;
        let imm_fail = sum_where(&|t| t.outcome_at(Arm::Immunization, true));
        PhiTable::from_parts_unchecked(vaf, vas, vnf, vns, pnf, pns, Some((imm_fail, T::one() - imm_fail)))
    }

    /// The same population as a sparse atom list over support `{neg, 1}`.
    pub fn to_general(&self) -> GeneralPopulation<T> {
        let support = vec![MediatorLevel::Undetectable, MediatorLevel::Detectable(1)];
        let atoms = self
            .iter()
            .filter(|(_, p)| *p > T::zero())
            .map(|(t, p)| {
                let y = t.outcomes.outcomes();
                Atom::new(
                    usize::from(t.responder),
                    [y[1], y[0]],
                    [y[3], y[2]],
                    p,
                )
            })
            .collect();
        GeneralPopulation::new_unchecked(support, atoms, true)
    }
}
