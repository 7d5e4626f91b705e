use super::level::{Arm, MediatorArm, MediatorLevel};
use super::validation::{mass_violations, renormalize, Violation, ViolationKind};
use super::PopulationError;
use crate::scalar::{compensated_sum, Scalar};

/// Maximum number of mediator levels in a general population.
pub const MAX_SUPPORT: usize = 16;

/// One principal type of a general population: the vaccine-arm mediator
/// `M1` and the potential outcomes `Y_{1m}`, `Y_{0m}` at every support level.
/// `M0` is always the undetectable level.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom<T> {
    m1: usize,
    y1: u16,
    y0: u16,
    len: u8,
    prob: T,
}

fn pack(bits: &[bool]) -> u16 {
    bits.iter()
        .enumerate()
        .fold(0u16, |acc, (i, &b)| if b { acc | (1 << i) } else { acc })
}

impl<T: Scalar> Atom<T> {
    /// `m1` indexes the support; outcome vectors are indexed likewise.
    pub fn new(m1: usize, y1: impl AsRef<[bool]>, y0: impl AsRef<[bool]>, prob: T) -> Self {
        let (y1, y0) = (y1.as_ref(), y0.as_ref());
        assert!(y1.len() <= MAX_SUPPORT && y0.len() <= MAX_SUPPORT);
        assert_eq!(y1.len(), y0.len(), "outcome vectors must have equal length");
        Self {
            m1,
            y1: pack(y1),
            y0: pack(y0),
            len: y1.len() as u8,
            prob,
        }
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn prob(&self) -> T {
        self.prob
    }

    pub fn support_len(&self) -> usize {
        self.len as usize
    }

    /// `Y_{a m}` at support index `m`; the immunization arm uses `Y_{0m}`.
    pub fn outcome(&self, arm: Arm, m: usize) -> bool {
        let bits = match arm {
            Arm::Vaccine => self.y1,
            Arm::Placebo | Arm::Immunization => self.y0,
        };
        bits & (1 << m) != 0
    }

    pub fn mediator(&self, arm: MediatorArm) -> usize {
        match arm {
            MediatorArm::Placebo => 0,
            MediatorArm::Vaccine => self.m1,
        }
    }

    pub fn outcomes(&self, arm: Arm) -> Vec<bool> {
        (0..self.support_len()).map(|m| self.outcome(arm, m)).collect()
    }

    pub(crate) fn with_prob(&self, prob: T) -> Self {
        Self { prob, ..self.clone() }
    }
}

/// Sparse joint distribution of `(M1, Y_{1·}, Y_{0·})` over a discrete mediator
/// support whose first level is the undetectable level.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralPopulation<T> {
    support: Vec<MediatorLevel>,
    atoms: Vec<Atom<T>>,
    monotone: bool,
}

impl<T: Scalar> GeneralPopulation<T> {
    pub fn new(support: Vec<MediatorLevel>, atoms: Vec<Atom<T>>, monotone: bool) -> Result<Self, PopulationError> {
        let violations = Self::check(&support, &atoms, monotone);
        if !violations.is_empty() {
            return Err(PopulationError::Invalid(violations));
        }
        let mut probs: Vec<T> = atoms.iter().map(|a| a.prob).collect();
        renormalize(&mut probs);
        let atoms = atoms
            .iter()
            .zip(probs)
            .map(|(a, p)| a.with_prob(p))
            .collect();
        Ok(Self {
            support,
            atoms,
            monotone,
        })
    }

    pub(crate) fn new_unchecked(support: Vec<MediatorLevel>, atoms: Vec<Atom<T>>, monotone: bool) -> Self {
        Self {
            support,
            atoms,
            monotone,
        }
    }

    pub fn check(support: &[MediatorLevel], atoms: &[Atom<T>], monotone: bool) -> Vec<Violation> {
        let mut out = Vec::new();
        if support.is_empty() || support[0] != MediatorLevel::Undetectable {
            out.push(Violation::new(
                ViolationKind::Support,
                None,
                support.len() as f64,
                "support must start with the undetectable level \"neg\"",
            ));
        }
        if support.len() > MAX_SUPPORT {
            out.push(Violation::new(
                ViolationKind::Support,
                None,
                support.len() as f64,
                format!("support has {} levels, maximum is {MAX_SUPPORT}", support.len()),
            ));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            out.push(Violation::new(
                ViolationKind::Support,
                None,
                0.0,
                "support levels must be strictly increasing",
            ));
        }
        let labelled: Vec<(String, T)> = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (format!("atom[{i}]"), a.prob))
            .collect();
        out.extend(mass_violations(&labelled));
        for (i, a) in atoms.iter().enumerate() {
            let key = Some(format!("atom[{i}]"));
            if a.support_len() != support.len() {
                out.push(Violation::new(
                    ViolationKind::OutcomeVectorLength,
                    key.clone(),
                    a.support_len() as f64,
                    format!("outcome vectors have length {}, support has {}", a.support_len(), support.len()),
                ));
                continue;
            }
            if a.m1 >= support.len() {
                out.push(Violation::new(
                    ViolationKind::MediatorOutsideSupport,
                    key.clone(),
                    a.m1 as f64,
                    "m1 outside support",
                ));
            }
            if monotone {
                for m in 1..support.len() {
                    for arm in [Arm::Vaccine, Arm::Placebo] {
                        if a.outcome(arm, m) && !a.outcome(arm, m - 1) {
                            out.push(Violation::new(
                                ViolationKind::Monotonicity,
                                key.clone(),
                                m as f64,
                                format!("{arm} outcome increases with antibody level at {}", support[m]),
                            ));
                        }
                    }
                }
                for m in 0..support.len() {
                    if a.outcome(Arm::Vaccine, m) && !a.outcome(Arm::Placebo, m) {
                        out.push(Violation::new(
                            ViolationKind::Monotonicity,
                            key.clone(),
                            m as f64,
                            format!("vaccine causes the event at level {}", support[m]),
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn support(&self) -> &[MediatorLevel] {
        &self.support
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn level_index(&self, level: MediatorLevel) -> Option<usize> {
        self.support.binary_search(&level).ok()
    }

    /// `E[Y_{a M_{a'}}]` by exact enumeration, reading each atom's potential
    /// outcome at its own potential mediator value.
    pub fn cross_world(&self, outcome_arm: Arm, mediator_arm: MediatorArm) -> T {
        compensated_sum(
            self.atoms
                .iter()
                .filter(|a| a.outcome(outcome_arm, a.mediator(mediator_arm)))
                .map(|a| a.prob),
        )
    }

    /// `E[Y_{a m}]` with the mediator set to support index `m` for everyone.
    pub fn controlled_mean(&self, arm: Arm, m: usize) -> T {
        compensated_sum(self.atoms.iter().filter(|a| a.outcome(arm, m)).map(|a| a.prob))
    }

    /// `Pr[M1 = support[m]]`.
    pub fn mediator_pmf(&self, m: usize) -> T {
        compensated_sum(self.atoms.iter().filter(|a| a.m1 == m).map(|a| a.prob))
    }
}

/// A population split into baseline-covariate strata.
#[derive(Clone, Debug, PartialEq)]
pub struct StratifiedPopulation<T> {
    strata: Vec<PopulationStratum<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationStratum<T> {
    pub label: String,
    pub weight: T,
    pub population: GeneralPopulation<T>,
}

impl<T: Scalar> StratifiedPopulation<T> {
    pub fn new(strata: Vec<PopulationStratum<T>>) -> Result<Self, PopulationError> {
        let labelled: Vec<(String, T)> = strata.iter().map(|s| (s.label.clone(), s.weight)).collect();
        let mut v = mass_violations(&labelled);
        if strata.is_empty() {
            v.push(Violation::new(ViolationKind::MassNotOne, None, 0.0, "no strata"));
        }
        let mut labels: Vec<&str> = strata.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            v.push(Violation::new(ViolationKind::Support, None, 0.0, "duplicate stratum labels"));
        }
        if !v.is_empty() {
            return Err(PopulationError::Invalid(v));
        }
        let mut weights: Vec<T> = strata.iter().map(|s| s.weight).collect();
        renormalize(&mut weights);
        let strata = strata
            .into_iter()
            .zip(weights)
            .map(|(s, weight)| PopulationStratum { weight, ..s })
            .collect();
        Ok(Self { strata })
    }

    pub fn single(population: GeneralPopulation<T>) -> Self {
        Self {
            strata: vec![PopulationStratum {
                label: "all".to_string(),
                weight: T::one(),
                population,
            }],
        }
    }

    pub fn strata(&self) -> &[PopulationStratum<T>] {
        &self.strata
    }

    pub fn cross_world(&self, outcome_arm: Arm, mediator_arm: MediatorArm) -> T {
        compensated_sum(
            self.strata
                .iter()
                .map(|s| s.weight * s.population.cross_world(outcome_arm, mediator_arm)),
        )
    }

    /// Union of all strata supports, sorted.
    pub fn support(&self) -> Vec<MediatorLevel> {
        let mut s: Vec<MediatorLevel> = self
            .strata
            .iter()
            .flat_map(|s| s.population.support().iter().copied())
            .collect();
        s.sort();
        s.dedup();
        s
    }

    /// `Pr[M1 = level]` over the whole population.
    pub fn mediator_pmf(&self, level: MediatorLevel) -> T {
        compensated_sum(self.strata.iter().map(|s| match s.population.level_index(level) {
            Some(m) => s.weight * s.population.mediator_pmf(m),
            None => T::zero(),
        }))
    }
}

impl<T: Scalar> From<GeneralPopulation<T>> for StratifiedPopulation<T> {
    fn from(p: GeneralPopulation<T>) -> Self {
        Self::single(p)
    }
}
