//! Trial designs that add a passive-immunization arm (or a second trial) so
//! that the adding indirect effect is identified without assuming the
//! potential outcomes are independent of the vaccine-arm mediator.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{Cell, CellTable};
use crate::popmodel::{Arm, CurvePoint, EffectReport, Estimate, MediatorLevel, Provenance};
use crate::scalar::{compensated_sum, Scalar};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DesignError {
    #[error("arm {0} has no participants")]
    MissingArm(Arm),
    #[error("positivity violated: {0}")]
    Positivity(String),
    #[error("positivity violated, empty vaccine-arm cells: {}", .0.join(", "))]
    EmptyMediatorCells(Vec<String>),
    #[error("assignment design: {0}")]
    Design(String),
    #[error("incomplete closeout data: {0}")]
    Completeness(String),
    #[error("no predicted mediator for stratum {0}")]
    MissingPredictor(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("invalid curve table: {0}")]
    InvalidCurves(String),
}

/// Known distribution of the mediator level assigned in the
/// passive-immunization arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct AssignmentDesign<T> {
    pmf: BTreeMap<MediatorLevel, T>,
}

impl<T: Scalar> AssignmentDesign<T> {
    pub fn new(pmf: BTreeMap<MediatorLevel, T>) -> Result<Self, DesignError> {
        if pmf.is_empty() {
            return Err(DesignError::Design("empty assignment distribution".into()));
        }
        if let Some((m, p)) = pmf.iter().find(|(_, &p)| !(p > T::zero() && p <= T::one())) {
            return Err(DesignError::Design(format!("Pr[M2 = {m}] = {p} must lie in (0, 1]")));
        }
        let total = compensated_sum(pmf.values().copied());
        if (total - T::one()).abs().as_f64() > T::MASS_TOLERANCE {
            return Err(DesignError::Design(format!("assignment probabilities sum to {total}")));
        }
        Ok(Self { pmf })
    }

    pub fn uniform(levels: &[MediatorLevel]) -> Result<Self, DesignError> {
        let p = T::one() / T::from_count(levels.len().max(1) as u64);
        Self::new(levels.iter().map(|&m| (m, p)).collect())
    }

    pub fn point_mass(level: MediatorLevel) -> Self {
        Self {
            pmf: [(level, T::one())].into_iter().collect(),
        }
    }

    pub fn pmf(&self) -> &BTreeMap<MediatorLevel, T> {
        &self.pmf
    }

    pub fn prob(&self, m: MediatorLevel) -> T {
        self.pmf.get(&m).copied().unwrap_or_else(T::zero)
    }

    pub fn levels(&self) -> impl Iterator<Item = MediatorLevel> + '_ {
        self.pmf.keys().copied()
    }

    /// Errors unless every level of `support` can be assigned.
    pub fn check_covers(&self, support: &[MediatorLevel]) -> Result<(), DesignError> {
        let missing: Vec<String> = support
            .iter()
            .filter(|m| self.prob(**m) <= T::zero())
            .map(|m| m.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(DesignError::Design(format!(
                "levels {} of the vaccine-arm support are never assigned",
                missing.join(", ")
            )))
        }
    }
}

/// Pearson comparison of the realized assignment frequencies with the
/// design. Reported, never enforced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssignmentDiagnostic {
    pub chi_square: f64,
    pub df: usize,
    /// Approximate 95th percentile of the reference distribution.
    pub critical_value_05: f64,
    pub observed: BTreeMap<MediatorLevel, f64>,
    pub expected: BTreeMap<MediatorLevel, f64>,
}

fn chi_square_upper_05(df: usize) -> f64 {
    match df {
        0 => return 0.0,
        1 => return 1.959963984540054f64.powi(2),
        2 => return -2.0 * 0.05f64.ln(),
        _ => {}
    }
    // Wilson-Hilferty
    let k = df as f64;
    let h = 2.0 / (9.0 * k);
    k * (1.0 - h + 1.6448536269514722 * h.sqrt()).powi(3)
}

pub fn assignment_diagnostic<T: Scalar>(cells: &CellTable<T>, design: &AssignmentDesign<T>) -> AssignmentDiagnostic {
    let n = cells.arm_total(Arm::Immunization).as_f64();
    let mut observed = BTreeMap::new();
    let mut expected = BTreeMap::new();
    let mut levels: Vec<MediatorLevel> = design.levels().collect();
    levels.extend(cells.levels(Arm::Immunization));
    levels.sort();
    levels.dedup();
    let mut chi = 0.0;
    for m in &levels {
        let o = cells
            .total(|c| c.arm == Arm::Immunization && c.mediator == *m)
            .as_f64();
        let e = n * design.prob(*m).as_f64();
        if e > 0.0 {
            chi += (o - e).powi(2) / e;
        } else if o > 0.0 {
            chi = f64::INFINITY;
        }
        observed.insert(*m, o);
        expected.insert(*m, e);
    }
    let df = design.pmf.len().saturating_sub(1);
    AssignmentDiagnostic {
        chi_square: chi,
        df,
        critical_value_05: chi_square_upper_05(df),
        observed,
        expected,
    }
}

/// One mediator level of a per-level effect table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow<T> {
    pub m: MediatorLevel,
    pub theta_c: Option<T>,
    pub theta_ia: Option<T>,
    /// `Pr[M1 = m]`.
    pub weight: T,
}

/// Controlled ratio effects per mediator level with the vaccine-arm mediator
/// distribution as weights.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveTable<T> {
    rows: Vec<CurveRow<T>>,
}

pub const CURVE_CSV_HEADER: [&str; 7] = ["m", "cve", "cpe", "theta_c", "theta_ia", "lambda_a_m", "weight"];

impl<T: Scalar> CurveTable<T> {
    pub fn new(mut rows: Vec<CurveRow<T>>) -> Result<Self, DesignError> {
        rows.sort_by_key(|r| r.m);
        if rows.windows(2).any(|w| w[0].m == w[1].m) {
            return Err(DesignError::InvalidCurves("duplicate mediator level".into()));
        }
        for r in &rows {
            if !(r.weight >= T::zero() && r.weight <= T::one()) {
                return Err(DesignError::InvalidCurves(format!("weight {} at m = {}", r.weight, r.m)));
            }
            for (name, v) in [("theta_c", r.theta_c), ("theta_ia", r.theta_ia)] {
                if let Some(v) = v {
                    // zero is allowed: a finite sample can have no failures at a level
                    if !(v >= T::zero() && v.is_finite()) {
                        return Err(DesignError::InvalidCurves(format!("{name} = {v} at m = {} is negative", r.m)));
                    }
                }
            }
        }
        let total = compensated_sum(rows.iter().map(|r| r.weight));
        if (total - T::one()).abs().as_f64() > T::MASS_TOLERANCE {
            return Err(DesignError::InvalidCurves(format!("weights sum to {total}")));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[CurveRow<T>] {
        &self.rows
    }

    /// Reads `m,cve,cpe,theta_c,theta_ia,lambda_a_m,weight`. A ratio column
    /// may be left empty when its efficacy column is given; `lambda_a_m` is
    /// ignored on input.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, DesignError> {
        let schema = |e: csv::Error| DesignError::Schema(e.to_string());
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(schema)?.clone();
        let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let (m_col, w_col) = match (col("m"), col("weight")) {
            (Some(m), Some(w)) => (m, w),
            _ => return Err(DesignError::Schema("curve table needs columns `m` and `weight`".into())),
        };
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(schema)?;
            let line = rec.position().map_or(0, |p| p.line());
            let num = |name: &str| -> Result<Option<T>, DesignError> {
                match col(name).and_then(|i| rec.get(i)).unwrap_or("") {
                    "" => Ok(None),
                    s => s
                        .parse::<f64>()
                        .map(|v| Some(T::lit(v)))
                        .map_err(|_| DesignError::Schema(format!("line {line}: `{name}` is not a number: `{s}`"))),
                }
            };
            let ratio = |theta: &str, eff: &str| -> Result<Option<T>, DesignError> {
                Ok(match num(theta)? {
                    Some(v) => Some(v),
                    None => num(eff)?.map(|e| T::one() - e),
                })
            };
            let m_raw = rec.get(m_col).unwrap_or("");
            let m: MediatorLevel = m_raw
                .parse()
                .map_err(|e| DesignError::Schema(format!("line {line}: {e}")))?;
            let weight = num(&headers[w_col])?
                .ok_or_else(|| DesignError::Schema(format!("line {line}: missing weight")))?;
            rows.push(CurveRow {
                m,
                theta_c: ratio("theta_c", "cve")?,
                theta_ia: ratio("theta_ia", "cpe")?,
                weight,
            });
        }
        Self::new(rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CURVE_CSV_HEADER)?;
        let s = |v: Option<T>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let lam = row_lambda(r).value();
            w.write_record([
                r.m.to_string(),
                s(r.theta_c.map(|t| T::one() - t)),
                s(r.theta_ia.map(|t| T::one() - t)),
                s(r.theta_c),
                s(r.theta_ia),
                s(lam),
                r.weight.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn row_lambda<T: Scalar>(r: &CurveRow<T>) -> Estimate<T> {
    let p = Provenance::IdentifiedDesign;
    let e = |v: Option<T>, what: &str| {
        v.map_or_else(|| Estimate::undefined(format!("{what} absent")), |v| Estimate::defined(v, p))
    };
    Estimate::log_ratio(&e(r.theta_ia, "theta_ia"), &e(r.theta_c, "theta_c"), p, "lambda_a(m)")
}

/// Weighted sums of the per-level ratios, and per-level `λ_a(m)`.
pub fn combine_curves<T: Scalar>(curves: &CurveTable<T>) -> EffectReport<T> {
    let p = Provenance::IdentifiedDesign;
    let weighted = |get: fn(&CurveRow<T>) -> Option<T>, what: &str| -> Estimate<T> {
        let terms: Option<Vec<T>> = curves
            .rows
            .iter()
            .filter(|r| r.weight > T::zero())
            .map(|r| get(r).map(|v| v * r.weight))
            .collect();
        match terms {
            Some(t) => Estimate::defined(compensated_sum(t), p),
            None => Estimate::undefined(format!("{what}: a level with positive weight has no value")),
        }
    };
    let theta_t = weighted(|r| r.theta_c, "theta_t");
    let theta_ia = weighted(|r| r.theta_ia, "theta_ia");
    let mut report = EffectReport::from_ratios(
        theta_t,
        Estimate::undefined("theta_is is not identified by per-level curves"),
        theta_ia,
        p,
    );
    report.curves = curves
        .rows
        .iter()
        .map(|r| CurvePoint {
            m: r.m,
            weight: r.weight,
            theta_c: r.theta_c.map_or_else(|| Estimate::undefined("absent"), |v| Estimate::defined(v, p)),
            theta_ia: r.theta_ia.map_or_else(|| Estimate::undefined("absent"), |v| Estimate::defined(v, p)),
            lambda_a_m: row_lambda(r),
        })
        .collect();
    report
}

fn arm_mean<T: Scalar>(cells: &CellTable<T>, arm: Arm) -> Result<T, DesignError> {
    cells.mean(|c| c.arm == arm).ok_or(DesignError::MissingArm(arm))
}

/// `Σ_x Ê[Y | A=1, M1=m, X=x] P̂r[X=x | A=1, M1=m]` for every vaccine-arm level.
fn controlled_vaccine_means<T: Scalar>(cells: &CellTable<T>) -> Result<BTreeMap<MediatorLevel, (T, T)>, DesignError> {
    let strata = cells.strata();
    let levels = cells.levels(Arm::Vaccine);
    if levels.is_empty() {
        return Err(DesignError::MissingArm(Arm::Vaccine));
    }
    let mut empty = Vec::new();
    for x in &strata {
        if cells.total(|c| c.arm == Arm::Vaccine && &c.stratum == x) <= T::zero() {
            continue;
        }
        for m in &levels {
            if cells.total(|c| c.arm == Arm::Vaccine && &c.stratum == x && c.mediator == *m) <= T::zero() {
                empty.push(format!("(x={x}, m={m})"));
            }
        }
    }
    if !empty.is_empty() {
        return Err(DesignError::EmptyMediatorCells(empty));
    }
    let mut out = BTreeMap::new();
    for m in levels {
        let at_m = |c: &Cell<T>| c.arm == Arm::Vaccine && c.mediator == m;
        let n_m = cells.total(at_m);
        let terms = strata.iter().filter_map(|x| {
            let in_x = |c: &Cell<T>| at_m(c) && &c.stratum == x;
            let n_xm = cells.total(in_x);
            (n_xm > T::zero()).then(|| cells.mean(in_x).unwrap_or_else(T::zero) * (n_xm / n_m))
        });
        let weight = cells.proportion(Arm::Vaccine, at_m).unwrap_or_else(T::zero);
        out.insert(m, (compensated_sum(terms), weight));
    }
    Ok(out)
}

/// Per-level output of [`cve_cpe_curves`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveEstimate<T> {
    pub curves: CurveTable<T>,
    pub assignment: Option<AssignmentDiagnostic>,
}

/// `θ_C(m)` from the vaccine and placebo arms and, with a design, `θ_Ia(m)`
/// from the immunization arm.
pub fn cve_cpe_curves<T: Scalar>(
    cells: &CellTable<T>,
    design: Option<&AssignmentDesign<T>>,
) -> Result<CurveEstimate<T>, DesignError> {
    let e00 = arm_mean(cells, Arm::Placebo)?;
    if e00 <= T::zero() {
        return Err(DesignError::Positivity("no placebo failures: E[Y_00] = 0".into()));
    }
    let vaccine = controlled_vaccine_means(cells)?;
    let support: Vec<MediatorLevel> = vaccine.keys().copied().collect();
    let mut assignment = None;
    let imm = match design {
        None => None,
        Some(d) => {
            d.check_covers(&support)?;
            if !cells.has_arm(Arm::Immunization) {
                return Err(DesignError::MissingArm(Arm::Immunization));
            }
            let mut means = BTreeMap::new();
            for m in &support {
                let y = cells
                    .mean(|c| c.arm == Arm::Immunization && c.mediator == *m)
                    .ok_or_else(|| DesignError::Design(format!("no immunization participant assigned M2 = {m}")))?;
                means.insert(*m, y);
            }
            assignment = Some(assignment_diagnostic(cells, d));
            Some(means)
        }
    };
    let rows = vaccine
        .into_iter()
        .map(|(m, (y, weight))| CurveRow {
            m,
            theta_c: Some(y / e00),
            theta_ia: imm.as_ref().map(|i| i[&m] / e00),
            weight,
        })
        .collect();
    Ok(CurveEstimate {
        curves: CurveTable::new(rows)?,
        assignment,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThreeArmBinary<T: Scalar> {
    pub ey0m1: T,
    pub theta_ia: Estimate<T>,
    pub lambda_a: Estimate<T>,
    pub report: EffectReport<T>,
    /// Share of vaccinees whose observed response disagrees with the predictor.
    pub misclassification_rate: T,
    pub warnings: Vec<String>,
}

/// Three-arm trial with a binary mediator whose vaccine-arm value is predicted
/// from the stratum: immunized participants in predicted-responder strata
/// stand in for `Y_{01}`, placebo participants in the other strata for `Y_{00}`.
pub fn three_arm_binary_identify<T: Scalar>(
    cells: &CellTable<T>,
    predictor: &BTreeMap<String, bool>,
) -> Result<ThreeArmBinary<T>, DesignError> {
    for arm in Arm::ALL {
        if !cells.has_arm(arm) {
            return Err(DesignError::MissingArm(arm));
        }
    }
    let predicted = |x: &str| -> Result<bool, DesignError> {
        predictor
            .get(x)
            .copied()
            .ok_or_else(|| DesignError::MissingPredictor(x.to_string()))
    };
    for x in cells.strata() {
        predicted(&x)?;
    }
    let pred = |c: &Cell<T>| predictor.get(&c.stratum).copied().unwrap_or(false);
    let weights = cells.stratum_weights();
    let p1 = compensated_sum(
        weights
            .iter()
            .filter(|(x, _)| predictor.get(*x).copied().unwrap_or(false))
            .map(|(_, &w)| w),
    );
    let p0 = T::one() - p1;
    let mut ey0m1 = T::zero();
    if p1 > T::zero() {
        let y = cells
            .mean(|c| c.arm == Arm::Immunization && c.mediator.is_detectable() && pred(c))
            .ok_or_else(|| {
                DesignError::Positivity("no immunized participants in strata predicted to respond".into())
            })?;
        ey0m1 = ey0m1 + y * p1;
    }
    if p0 > T::zero() {
        let y = cells
            .mean(|c| c.arm == Arm::Placebo && !pred(c))
            .ok_or_else(|| DesignError::Positivity("no placebo participants in strata predicted not to respond".into()))?;
        ey0m1 = ey0m1 + y * p0;
    }
    let miss = cells
        .proportion(Arm::Vaccine, |c| c.mediator.is_detectable() != pred(c))
        .unwrap_or_else(T::zero);
    let mut warnings = Vec::new();
    if miss > T::zero() {
        warnings.push(format!("predictor disagrees with observed vaccine-arm response for {miss} of vaccinees"));
    }
    let e11 = arm_mean(cells, Arm::Vaccine)?;
    let e00 = arm_mean(cells, Arm::Placebo)?;
    let mut report = EffectReport::from_expectations(e11, None, Some(ey0m1), e00, Provenance::IdentifiedDesign);
    report.notes.extend(warnings.iter().cloned());
    Ok(ThreeArmBinary {
        ey0m1,
        theta_ia: report.theta_ia.clone(),
        lambda_a: report.lambda_a.clone(),
        report,
        misclassification_rate: miss,
        warnings,
    })
}

/// Per-level pieces of the closeout decomposition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CloseoutLevel<T> {
    pub m: MediatorLevel,
    /// `Pr[M1 = m]` from the vaccine arm.
    pub pr_m1: T,
    /// `Pr[Y_{2m} = 0]`.
    pub pr_success: T,
    /// `Pr[M1 = m | Y_{2m} = 0]` from closeout vaccination.
    pub pr_m1_given_success: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Closeout<T: Scalar> {
    pub ey2m1: T,
    pub theta_ia: Estimate<T>,
    pub lambda_a: Estimate<T>,
    pub report: EffectReport<T>,
    pub levels: Vec<CloseoutLevel<T>>,
    pub assignment: AssignmentDiagnostic,
    pub warnings: Vec<String>,
}

/// `E[Y_{2M1}] = Σ_m {Pr[M1=m] − Pr(M1=m | Y_{2m}=0) Pr(Y_{2m}=0)}`, with the
/// conditional read off closeout vaccination of event-free immunized
/// participants.
pub fn closeout_identify<T: Scalar>(
    cells: &CellTable<T>,
    design: &AssignmentDesign<T>,
) -> Result<Closeout<T>, DesignError> {
    for arm in Arm::ALL {
        if !cells.has_arm(arm) {
            return Err(DesignError::MissingArm(arm));
        }
    }
    let support = cells.levels(Arm::Vaccine);
    design.check_covers(&support)?;
    let gaps = cells.total(|c| c.arm == Arm::Immunization && !c.outcome && c.closeout.is_none());
    if gaps > T::zero() {
        return Err(DesignError::Completeness(format!(
            "{gaps} event-free immunized participants lack a closeout measurement"
        )));
    }
    let mut levels = Vec::new();
    let mut terms = Vec::new();
    for &m in &support {
        let assigned = |c: &Cell<T>| c.arm == Arm::Immunization && c.mediator == m;
        let n = cells.total(assigned);
        if n <= T::zero() {
            return Err(DesignError::Positivity(format!("no immunization participant assigned M2 = {m}")));
        }
        let success = |c: &Cell<T>| assigned(c) && !c.outcome;
        let n0 = cells.total(success);
        let pr_success = n0 / n;
        let pr_m1_given_success = if n0 > T::zero() {
            cells.total(|c| success(c) && c.closeout == Some(m)) / n0
        } else {
            T::zero()
        };
        let pr_m1 = cells
            .proportion(Arm::Vaccine, |c| c.mediator == m)
            .unwrap_or_else(T::zero);
        terms.push(pr_m1 - pr_m1_given_success * pr_success);
        levels.push(CloseoutLevel {
            m,
            pr_m1,
            pr_success,
            pr_m1_given_success,
        });
    }
    let mut ey2m1 = compensated_sum(terms);
    let mut warnings = Vec::new();
    if ey2m1 < T::zero() || ey2m1 > T::one() {
        warnings.push(format!("E[Y_2M1] estimate {ey2m1} clamped to [0, 1]"));
        ey2m1 = ey2m1.max(T::zero()).min(T::one());
    }
    let e11 = arm_mean(cells, Arm::Vaccine)?;
    let e00 = arm_mean(cells, Arm::Placebo)?;
    let mut report = EffectReport::from_expectations(e11, None, Some(ey2m1), e00, Provenance::IdentifiedDesign);
    report.notes.extend(warnings.iter().cloned());
    Ok(Closeout {
        ey2m1,
        theta_ia: report.theta_ia.clone(),
        lambda_a: report.lambda_a.clone(),
        report,
        levels,
        assignment: assignment_diagnostic(cells, design),
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoTrialApproach {
    /// Immunization trial recruited to match the vaccine trial's covariate mix.
    Quota,
    /// Immunization-trial means reweighted to the vaccine trial's covariates.
    Standardize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuotaSummary<T: Scalar> {
    pub theta_ia: Estimate<T>,
    /// Total-variation distance between the two trials' stratum distributions.
    pub balance_tv_distance: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "approach", rename_all = "kebab-case")]
pub enum TwoTrialResult<T: Scalar> {
    Quota(QuotaSummary<T>),
    Standardize { curves: CurveTable<T> },
}

/// Combines a vaccine-placebo trial with an immunization-placebo trial that
/// share a stratum coding.
pub fn two_trial_standardize<T: Scalar>(
    vp: &CellTable<T>,
    ip: &CellTable<T>,
    approach: TwoTrialApproach,
) -> Result<TwoTrialResult<T>, DesignError> {
    let vp_w = vp.stratum_weights();
    let ip_w = ip.stratum_weights_for(&[Arm::Immunization, Arm::Placebo]);
    if !vp_w.keys().any(|x| ip_w.contains_key(x)) {
        return Err(DesignError::Schema("the two trials share no stratum".into()));
    }
    match approach {
        TwoTrialApproach::Quota => {
            let p = Provenance::IdentifiedDesign;
            let y2 = arm_mean(ip, Arm::Immunization)?;
            let y0 = arm_mean(ip, Arm::Placebo)?;
            let theta_ia = if y0 > T::zero() {
                Estimate::defined(y2 / y0, p)
            } else {
                Estimate::undefined("theta_ia: no placebo failures in the immunization trial")
            };
            let mut keys: Vec<&String> = vp_w.keys().chain(ip_w.keys()).collect();
            keys.sort();
            keys.dedup();
            let zero = T::zero();
            let tv = compensated_sum(keys.iter().map(|k| {
                (*vp_w.get(*k).unwrap_or(&zero) - *ip_w.get(*k).unwrap_or(&zero)).abs()
            })) * T::lit(0.5);
            Ok(TwoTrialResult::Quota(QuotaSummary {
                theta_ia,
                balance_tv_distance: tv,
            }))
        }
        TwoTrialApproach::Standardize => {
            let e00 = arm_mean(vp, Arm::Placebo)?;
            if e00 <= T::zero() {
                return Err(DesignError::Positivity("no placebo failures in the vaccine trial".into()));
            }
            let vaccine = controlled_vaccine_means(vp)?;
            let standardized = |pred: &dyn Fn(&Cell<T>) -> bool, what: &str| -> Result<T, DesignError> {
                let mut terms = Vec::new();
                for (x, &w) in &vp_w {
                    let y = ip.mean(|c| &c.stratum == x && pred(c)).ok_or_else(|| {
                        DesignError::Positivity(format!("immunization trial has no {what} participants in stratum {x}"))
                    })?;
                    terms.push(y * w);
                }
                Ok(compensated_sum(terms))
            };
            let denom = standardized(&|c| c.arm == Arm::Placebo, "placebo")?;
            if denom <= T::zero() {
                return Err(DesignError::Positivity("no standardized placebo failures in the immunization trial".into()));
            }
            let mut rows = Vec::new();
            for (m, (y, weight)) in vaccine {
                let num = standardized(
                    &|c| c.arm == Arm::Immunization && c.mediator == m,
                    &format!("M2 = {m}"),
                )?;
                rows.push(CurveRow {
                    m,
                    theta_c: Some(y / e00),
                    theta_ia: Some(num / denom),
                    weight,
                });
            }
            Ok(TwoTrialResult::Standardize {
                curves: CurveTable::new(rows)?,
            })
        }
    }
}
