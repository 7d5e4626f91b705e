//! Finite-sample trials drawn from a known population, exact expected cell
//! probabilities for the same designs, and percentile bootstrap intervals.
//!
//! Randomness is counter-based: every block of participants and every
//! bootstrap replicate owns a ChaCha stream derived from the master seed and
//! a tag `(purpose << 48) | (arm << 40) | index`, so results do not depend on
//! thread scheduling.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cell, CellTable, CountRow, StratifiedTrialCounts};
use crate::designs::AssignmentDesign;
use crate::estimators::{Estimator, EstimatorError};
use crate::popmodel::{Arm, Interval, MediatorLevel, StratifiedPopulation, REPORT_FIELDS};
use crate::scalar::{compensated_sum, Scalar};

/// Participants simulated per RNG stream.
pub const BLOCK_SIZE: u64 = 65_536;

const PURPOSE_SIMULATE: u64 = 1;
const PURPOSE_BOOTSTRAP: u64 = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid trial design: {0}")]
    Spec(String),
}

/// The independent stream for one (purpose, arm, index) triple.
pub fn stream_rng(seed: u64, purpose: u64, arm: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 48) | (arm << 40) | index);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct TrialDesignSpec<T> {
    /// Participants per arm; absent arms are not run.
    pub arms: BTreeMap<Arm, u64>,
    /// `Pr[Z = 1]`, independent of arm and type.
    pub exposure: f64,
    /// Distribution of `M2` in the immunization arm.
    #[serde(default)]
    pub assignment: Option<AssignmentDesign<T>>,
    /// Reveal `M1` of event-free immunized participants.
    #[serde(default)]
    pub closeout: bool,
    pub seed: u64,
}

impl<T: Scalar> TrialDesignSpec<T> {
    pub fn two_arm(n: u64, seed: u64) -> Self {
        Self {
            arms: [(Arm::Vaccine, n), (Arm::Placebo, n)].into_iter().collect(),
            exposure: 1.0,
            assignment: None,
            closeout: false,
            seed,
        }
    }

    pub fn three_arm(n: u64, assignment: AssignmentDesign<T>, closeout: bool, seed: u64) -> Self {
        Self {
            arms: Arm::ALL.into_iter().map(|a| (a, n)).collect(),
            exposure: 1.0,
            assignment: Some(assignment),
            closeout,
            seed,
        }
    }

    pub fn with_exposure(mut self, exposure: f64) -> Self {
        self.exposure = exposure;
        self
    }

    pub fn check(&self) -> Result<(), SimulationError> {
        let err = |m: &str| Err(SimulationError::Spec(m.to_string()));
        if self.arms.is_empty() {
            return err("no arms");
        }
        if self.arms.values().any(|&n| n == 0) {
            return err("arm sizes must be positive");
        }
        if !(self.exposure > 0.0 && self.exposure <= 1.0) {
            return err("exposure probability must lie in (0, 1]");
        }
        let imm = self.arms.contains_key(&Arm::Immunization);
        if imm != self.assignment.is_some() {
            return err("an assignment design is required exactly when the immunization arm is present");
        }
        if self.closeout && !imm {
            return err("closeout vaccination requires the immunization arm");
        }
        Ok(())
    }
}

/// Per-stratum support index of every assignable level.
fn assignment_indices<T: Scalar>(
    pop: &StratifiedPopulation<T>,
    design: &AssignmentDesign<T>,
) -> Result<Vec<Vec<usize>>, SimulationError> {
    pop.strata()
        .iter()
        .map(|s| {
            design
                .levels()
                .map(|l| {
                    s.population.level_index(l).ok_or_else(|| {
                        SimulationError::Spec(format!("assigned level {l} is outside the support of stratum {}", s.label))
                    })
                })
                .collect()
        })
        .collect()
}

type BlockKey = (usize, MediatorLevel, bool, Option<MediatorLevel>);

/// Draws a trial. Each participant gets a type, an exposure indicator and,
/// in the immunization arm, an assigned level; the outcome is
/// `Z · Y*_{a m}` at the realized arm and mediator.
pub fn simulate_trial<T: Scalar>(
    pop: &StratifiedPopulation<T>,
    spec: &TrialDesignSpec<T>,
) -> Result<StratifiedTrialCounts, SimulationError> {
    spec.check()?;
    let flat: Vec<(usize, usize, f64)> = pop
        .strata()
        .iter()
        .enumerate()
        .flat_map(|(si, s)| {
            s.population
                .atoms()
                .iter()
                .enumerate()
                .map(move |(ai, a)| (si, ai, (s.weight * a.prob()).as_f64()))
        })
        .filter(|t| t.2 > 0.0)
        .collect();
    let types = WeightedIndex::new(flat.iter().map(|t| t.2))
        .map_err(|e| SimulationError::Spec(format!("population weights: {e}")))?;
    let exposure = Bernoulli::new(spec.exposure).map_err(|e| SimulationError::Spec(e.to_string()))?;
    let (assign_levels, assign_index, assign_dist) = match &spec.assignment {
        Some(d) => {
            let levels: Vec<MediatorLevel> = d.levels().collect();
            let dist = WeightedIndex::new(levels.iter().map(|&l| d.prob(l).as_f64()))
                .map_err(|e| SimulationError::Spec(format!("assignment design: {e}")))?;
            (levels, assignment_indices(pop, d)?, Some(dist))
        }
        None => (Vec::new(), Vec::new(), None),
    };

    let run_block = |arm: Arm, block: u64, n: u64| -> BTreeMap<BlockKey, u64> {
        let mut rng = stream_rng(spec.seed, PURPOSE_SIMULATE, u64::from(arm.index()), block);
        let mut out = BTreeMap::new();
        for _ in 0..n {
            let (si, ai, _) = flat[types.sample(&mut rng)];
            let stratum = &pop.strata()[si].population;
            let atom = &stratum.atoms()[ai];
            let z = exposure.sample(&mut rng);
            let (level, m_idx) = match arm {
                Arm::Vaccine => (stratum.support()[atom.m1()], atom.m1()),
                Arm::Placebo => (MediatorLevel::Undetectable, 0),
                Arm::Immunization => {
                    let k = assign_dist.as_ref().expect("checked").sample(&mut rng);
                    (assign_levels[k], assign_index[si][k])
                }
            };
            let y = z && atom.outcome(arm, m_idx);
            let closeout = (arm == Arm::Immunization && spec.closeout && !y).then(|| stratum.support()[atom.m1()]);
            *out.entry((si, level, y, closeout)).or_insert(0) += 1;
        }
        out
    };

    let jobs: Vec<(Arm, u64, u64)> = spec
        .arms
        .iter()
        .flat_map(|(&arm, &n)| {
            (0..n.div_ceil(BLOCK_SIZE)).map(move |b| (arm, b, (n - b * BLOCK_SIZE).min(BLOCK_SIZE)))
        })
        .collect();
    let blocks: Vec<(Arm, BTreeMap<BlockKey, u64>)> = jobs
        .par_iter()
        .map(|&(arm, b, n)| (arm, run_block(arm, b, n)))
        .collect();
    let mut merged: BTreeMap<(Arm, BlockKey), u64> = BTreeMap::new();
    for (arm, block) in blocks {
        for (k, v) in block {
            *merged.entry((arm, k)).or_insert(0) += v;
        }
    }
    let rows = merged
        .into_iter()
        .map(|((arm, (si, level, y, closeout)), count)| CountRow {
            arm,
            stratum: pop.strata()[si].label.clone(),
            mediator: Some(level),
            outcome: y,
            closeout,
            count,
        })
        .collect();
    StratifiedTrialCounts::new(rows).map_err(|e| SimulationError::Spec(e.to_string()))
}

/// Exact cell probabilities of the trial `spec` describes; each arm sums to
/// one. Sample sizes and seed are ignored.
pub fn expected_cells<T: Scalar>(
    pop: &StratifiedPopulation<T>,
    spec: &TrialDesignSpec<T>,
) -> Result<CellTable<T>, SimulationError> {
    spec.check()?;
    let eps = T::lit(spec.exposure);
    let assign = match &spec.assignment {
        Some(d) => {
            let idx = assignment_indices(pop, d)?;
            let levels: Vec<(MediatorLevel, T)> = d.levels().map(|l| (l, d.prob(l))).collect();
            Some((levels, idx))
        }
        None => None,
    };
    let mut acc: BTreeMap<(Arm, usize, MediatorLevel, bool, Option<MediatorLevel>), Vec<T>> = BTreeMap::new();
    let mut add = |key, p: T| acc.entry(key).or_insert_with(Vec::new).push(p);
    for (si, s) in pop.strata().iter().enumerate() {
        let support = s.population.support();
        for atom in s.population.atoms() {
            let p = s.weight * atom.prob();
            for &arm in spec.arms.keys() {
                let branches: Vec<(MediatorLevel, usize, T)> = match arm {
                    Arm::Vaccine => vec![(support[atom.m1()], atom.m1(), T::one())],
                    Arm::Placebo => vec![(MediatorLevel::Undetectable, 0, T::one())],
                    Arm::Immunization => {
                        let (levels, idx) = assign.as_ref().expect("checked");
                        levels.iter().zip(&idx[si]).map(|(&(l, q), &i)| (l, i, q)).collect()
                    }
                };
                for (level, m_idx, q) in branches {
                    let fail = if atom.outcome(arm, m_idx) { eps } else { T::zero() };
                    let closeout = (arm == Arm::Immunization && spec.closeout).then(|| support[atom.m1()]);
                    if fail > T::zero() {
                        add((arm, si, level, true, None), p * q * fail);
                    }
                    if fail < T::one() {
                        add((arm, si, level, false, closeout), p * q * (T::one() - fail));
                    }
                }
            }
        }
    }
    let cells = acc
        .into_iter()
        .map(|((arm, si, mediator, outcome, closeout), parts)| Cell {
            arm,
            stratum: pop.strata()[si].label.clone(),
            mediator,
            outcome,
            closeout,
            weight: compensated_sum(parts),
        })
        .collect();
    Ok(CellTable::from_cells(cells))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Two-sided coverage, e.g. 0.95.
    pub level: f64,
    /// Resample within arm × stratum instead of within arm.
    pub by_stratum: bool,
}

impl BootstrapOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            level: 0.95,
            by_stratum: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub intervals: BTreeMap<String, Interval>,
    /// Replicate standard deviation per field, over defined replicates.
    pub std_dev: BTreeMap<String, f64>,
    pub replicates: usize,
    /// Replicates on which the estimator itself failed.
    pub failed_replicates: usize,
}

/// One multinomial redraw of the counts, preserving group totals.
pub fn resample_counts(counts: &StratifiedTrialCounts, by_stratum: bool, rng: &mut ChaCha8Rng) -> StratifiedTrialCounts {
    let canon = counts.canonical();
    let mut groups: BTreeMap<(Arm, Option<&str>), Vec<&CountRow>> = BTreeMap::new();
    for r in canon.rows().iter().filter(|r| r.count > 0) {
        let key = (r.arm, by_stratum.then_some(r.stratum.as_str()));
        groups.entry(key).or_default().push(r);
    }
    let mut rows = Vec::new();
    for group in groups.values() {
        let mut left_n: u64 = group.iter().map(|r| r.count).sum();
        let mut left_mass = left_n;
        let total = left_n;
        for (i, r) in group.iter().enumerate() {
            let k = if i + 1 == group.len() {
                left_n
            } else if left_n == 0 {
                0
            } else {
                let p = (r.count as f64 / left_mass as f64).min(1.0);
                Binomial::new(left_n, p).expect("valid binomial").sample(rng)
            };
            left_n -= k;
            left_mass -= r.count;
            let mut row = (*r).clone();
            row.count = k;
            rows.push(row);
        }
        debug_assert_eq!(rows.iter().rev().take(group.len()).map(|r| r.count).sum::<u64>(), total);
    }
    StratifiedTrialCounts::new(rows).expect("resampled rows keep their shape")
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile intervals for every report field the estimator defines.
pub fn bootstrap_ci<T: Scalar>(
    counts: &StratifiedTrialCounts,
    estimator: &Estimator<T>,
    options: &BootstrapOptions,
) -> Result<BootstrapResult, EstimatorError> {
    if options.replicates == 0 {
        return Err(EstimatorError::Schema("at least one bootstrap replicate is required".into()));
    }
    if !(options.level > 0.0 && options.level < 1.0) {
        return Err(EstimatorError::Schema("interval level must lie in (0, 1)".into()));
    }
    estimator.estimate(&CellTable::from_counts(counts))?;
    let draws: Vec<Option<Vec<Option<f64>>>> = (0..options.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(options.seed, PURPOSE_BOOTSTRAP, 0, b);
            let sample = resample_counts(counts, options.by_stratum, &mut rng);
            estimator.estimate(&CellTable::from_counts(&sample)).ok().map(|r| {
                REPORT_FIELDS
                    .iter()
                    .map(|f| r.field(f).and_then(|e| e.value()).map(|v| v.as_f64()).filter(|v| v.is_finite()))
                    .collect()
            })
        })
        .collect();
    let failed = draws.iter().filter(|d| d.is_none()).count();
    let alpha = (1.0 - options.level) / 2.0;
    let mut intervals = BTreeMap::new();
    let mut std_dev = BTreeMap::new();
    for (i, field) in REPORT_FIELDS.iter().enumerate() {
        let mut vals: Vec<f64> = draws.iter().filter_map(|d| d.as_ref().and_then(|v| v[i])).collect();
        if vals.is_empty() {
            continue;
        }
        vals.sort_by(f64::total_cmp);
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        std_dev.insert(field.to_string(), var.sqrt());
        intervals.insert(
            field.to_string(),
            Interval {
                lower: quantile_sorted(&vals, alpha),
                upper: quantile_sorted(&vals, 1.0 - alpha),
                level: options.level,
                defined_replicates: vals.len(),
                undefined_replicates: options.replicates - vals.len(),
            },
        );
    }
    Ok(BootstrapResult {
        intervals,
        std_dev,
        replicates: options.replicates,
        failed_replicates: failed,
    })
}
