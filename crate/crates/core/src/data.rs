//! Observed trial data: integer count tables as ingested from CSV, and the
//! weighted cell table every estimator reads.
//!
//! A [`CellTable`] is either built from counts or from exact population cell
//! probabilities, so estimators run the same code on finite and infinite data.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::Serialize;

use crate::popmodel::{Arm, MediatorLevel};
use crate::scalar::{compensated_sum, Scalar};

pub const CSV_HEADER: [&str; 6] = ["arm", "stratum", "mediator", "outcome", "closeout_mediator", "count"];

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}, field `{field}`: {message}")]
    Parse { line: u64, field: String, message: String },
    #[error("line {line}: {message}")]
    Invalid { line: u64, message: String },
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DataError {
    /// Parse and CSV syntax errors versus invariant failures.
    pub fn is_parse(&self) -> bool {
        matches!(self, DataError::Parse { .. } | DataError::Csv(_) | DataError::Io(_))
    }
}

/// One line of a count table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CountRow {
    pub arm: Arm,
    pub stratum: String,
    /// Vaccine arm: observed `M1`. Immunization arm: assigned `M2`.
    /// Placebo arm: usually absent, read as undetectable.
    pub mediator: Option<MediatorLevel>,
    pub outcome: bool,
    /// Mediator measured after closeout vaccination (immunization arm, `Y = 0` only).
    pub closeout: Option<MediatorLevel>,
    pub count: u64,
}

impl CountRow {
    pub fn new(arm: Arm, stratum: impl Into<String>, mediator: Option<MediatorLevel>, outcome: bool, count: u64) -> Self {
        Self {
            arm,
            stratum: stratum.into(),
            mediator,
            outcome,
            closeout: None,
            count,
        }
    }

    pub fn with_closeout(mut self, level: MediatorLevel) -> Self {
        self.closeout = Some(level);
        self
    }

    fn check(&self) -> Result<(), String> {
        match self.arm {
            Arm::Vaccine if self.mediator.is_none() => Err("vaccine-arm row without a mediator level".into()),
            Arm::Immunization if self.mediator.is_none() => {
                Err("immunization-arm row without an assigned mediator level".into())
            }
            _ if self.closeout.is_some() && self.arm != Arm::Immunization => {
                Err("closeout mediator recorded outside the immunization arm".into())
            }
            _ if self.closeout.is_some() && self.outcome => {
                Err("closeout mediator recorded for a participant with outcome 1".into())
            }
            _ => Ok(()),
        }
    }
}

/// Finite-sample trial data aggregated to counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StratifiedTrialCounts {
    rows: Vec<CountRow>,
}

impl StratifiedTrialCounts {
    pub fn new(rows: Vec<CountRow>) -> Result<Self, DataError> {
        for (i, r) in rows.iter().enumerate() {
            r.check().map_err(|message| DataError::Invalid {
                line: i as u64 + 1,
                message,
            })?;
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[CountRow] {
        &self.rows
    }

    pub fn arm_size(&self, arm: Arm) -> u64 {
        self.rows.iter().filter(|r| r.arm == arm).map(|r| r.count).sum()
    }

    pub fn has_arm(&self, arm: Arm) -> bool {
        self.arm_size(arm) > 0
    }

    pub fn strata(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.stratum.as_str()).collect()
    }

    /// Reads the `arm,stratum,mediator,outcome,closeout_mediator,count` format.
    /// Line numbers in errors count the header as line 1.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| DataError::Parse {
                    line: 1,
                    field: name.to_string(),
                    message: "missing column".into(),
                })
        };
        let idx = [
            col("arm")?,
            col("stratum")?,
            col("mediator")?,
            col("outcome")?,
            col("closeout_mediator")?,
            col("count")?,
        ];
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |k: usize| rec.get(idx[k]).unwrap_or("");
            let perr = |k: usize, message: String| DataError::Parse {
                line,
                field: CSV_HEADER[k].to_string(),
                message,
            };
            let arm: Arm = field(0).parse().map_err(|e| perr(0, format!("{e}")))?;
            let level = |k: usize| -> Result<Option<MediatorLevel>, DataError> {
                match field(k) {
                    "" => Ok(None),
                    s => s.parse().map(Some).map_err(|e| perr(k, format!("{e}"))),
                }
            };
            let mediator = level(2)?;
            let closeout = level(4)?;
            let outcome = match field(3) {
                "0" => false,
                "1" => true,
                s => return Err(perr(3, format!("outcome must be 0 or 1, got `{s}`"))),
            };
            let raw = field(5);
            let count: i128 = raw.parse().map_err(|_| perr(5, format!("not an integer: `{raw}`")))?;
            if count < 0 {
                return Err(DataError::Invalid {
                    line,
                    message: format!("negative count {count}"),
                });
            }
            let count = u64::try_from(count).map_err(|_| perr(5, "count too large".into()))?;
            let row = CountRow {
                arm,
                stratum: field(1).to_string(),
                mediator,
                outcome,
                closeout,
                count,
            };
            row.check().map_err(|message| DataError::Invalid { line, message })?;
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub fn from_csv_path(path: impl AsRef<std::path::Path>) -> Result<Self, DataError> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        let opt = |l: Option<MediatorLevel>| l.map(|l| l.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.arm.name().to_string(),
                r.stratum.clone(),
                opt(r.mediator),
                if r.outcome { "1" } else { "0" }.to_string(),
                opt(r.closeout),
                r.count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows merged on identical keys, in canonical order.
    pub fn canonical(&self) -> Self {
        let mut merged: BTreeMap<CellKey, u64> = BTreeMap::new();
        for r in &self.rows {
            *merged.entry(CellKey::of_row(r)).or_insert(0) += r.count;
        }
        Self {
            rows: merged
                .into_iter()
                .map(|(k, count)| CountRow {
                    arm: k.arm,
                    stratum: k.stratum,
                    mediator: k.mediator,
                    outcome: k.outcome,
                    closeout: k.closeout,
                    count,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct CellKey {
    pub arm: Arm,
    pub stratum: String,
    pub mediator: Option<MediatorLevel>,
    pub outcome: bool,
    pub closeout: Option<MediatorLevel>,
}

impl CellKey {
    fn of_row(r: &CountRow) -> Self {
        Self {
            arm: r.arm,
            stratum: r.stratum.clone(),
            mediator: r.mediator,
            outcome: r.outcome,
            closeout: r.closeout,
        }
    }
}

/// One weighted cell. Weights are only compared within an arm.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell<T> {
    pub arm: Arm,
    pub stratum: String,
    pub mediator: MediatorLevel,
    pub outcome: bool,
    pub closeout: Option<MediatorLevel>,
    pub weight: T,
}

/// Weighted cells: counts, or exact cell probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct CellTable<T> {
    cells: Vec<Cell<T>>,
}

impl<T: Scalar> CellTable<T> {
    /// Cells must already satisfy the row invariants; placebo cells read
    /// undetectable when their mediator is absent.
    pub fn from_cells(cells: Vec<Cell<T>>) -> Self {
        Self { cells }
    }

    pub fn from_counts(counts: &StratifiedTrialCounts) -> Self {
        let cells = counts
            .canonical()
            .rows
            .into_iter()
            .filter(|r| r.count > 0)
            .map(|r| Cell {
                arm: r.arm,
                stratum: r.stratum,
                mediator: r.mediator.unwrap_or(MediatorLevel::Undetectable),
                outcome: r.outcome,
                closeout: r.closeout,
                weight: T::from_count(r.count),
            })
            .collect();
        Self { cells }
    }

    /// Adds `c` to both outcome cells of every observed (arm, stratum, mediator)
    /// group. Closeout information is not corrected.
    pub fn with_continuity_correction(&self, c: T) -> Self {
        let groups: BTreeSet<(Arm, String, MediatorLevel)> = self
            .cells
            .iter()
            .map(|x| (x.arm, x.stratum.clone(), x.mediator))
            .collect();
        let mut cells = self.cells.clone();
        for (arm, stratum, mediator) in groups {
            for outcome in [false, true] {
                cells.push(Cell {
                    arm,
                    stratum: stratum.clone(),
                    mediator,
                    outcome,
                    closeout: None,
                    weight: c,
                });
            }
        }
        Self { cells }
    }

    pub fn cells(&self) -> &[Cell<T>] {
        &self.cells
    }

    pub fn total(&self, pred: impl Fn(&Cell<T>) -> bool) -> T {
        compensated_sum(self.cells.iter().filter(|c| pred(c)).map(|c| c.weight))
    }

    pub fn arm_total(&self, arm: Arm) -> T {
        self.total(|c| c.arm == arm)
    }

    pub fn has_arm(&self, arm: Arm) -> bool {
        self.arm_total(arm) > T::zero()
    }

    /// Failure proportion among the matching cells; `None` when they carry no weight.
    pub fn mean(&self, pred: impl Fn(&Cell<T>) -> bool) -> Option<T> {
        let n = self.total(&pred);
        if n > T::zero() {
            Some(self.total(|c| pred(c) && c.outcome) / n)
        } else {
            None
        }
    }

    /// `Pr[pred | arm]` within one arm.
    pub fn proportion(&self, arm: Arm, pred: impl Fn(&Cell<T>) -> bool) -> Option<T> {
        let n = self.arm_total(arm);
        if n > T::zero() {
            Some(self.total(|c| c.arm == arm && pred(c)) / n)
        } else {
            None
        }
    }

    pub fn strata(&self) -> Vec<String> {
        let s: BTreeSet<&str> = self.cells.iter().map(|c| c.stratum.as_str()).collect();
        s.into_iter().map(str::to_string).collect()
    }

    /// Mediator levels carrying positive weight in `arm`, sorted.
    pub fn levels(&self, arm: Arm) -> Vec<MediatorLevel> {
        let s: BTreeSet<MediatorLevel> = self
            .cells
            .iter()
            .filter(|c| c.arm == arm && c.weight > T::zero())
            .map(|c| c.mediator)
            .collect();
        s.into_iter().collect()
    }

    /// `Pr[X = x]` pooled over the vaccine and placebo arms, each arm
    /// normalized to one first.
    pub fn stratum_weights(&self) -> BTreeMap<String, T> {
        let arms: Vec<Arm> = [Arm::Vaccine, Arm::Placebo]
            .into_iter()
            .filter(|&a| self.has_arm(a))
            .collect();
        self.stratum_weights_for(&arms)
    }

    /// `Pr[X = x]` averaging the per-arm stratum distributions of `arms`.
    pub fn stratum_weights_for(&self, arms: &[Arm]) -> BTreeMap<String, T> {
        let k = T::from_count(arms.len().max(1) as u64);
        let mut out = BTreeMap::new();
        for x in self.strata() {
            let w = compensated_sum(
                arms.iter()
                    .filter_map(|&a| self.proportion(a, |c| c.stratum == x)),
            ) / k;
            if w > T::zero() {
                out.insert(x, w);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE3: &str = "arm,stratum,mediator,outcome,closeout_mediator,count
vaccine,all,neg,1,,8
vaccine,all,neg,0,,1992
vaccine,all,1,1,,2
vaccine,all,1,0,,7998
placebo,all,,1,,100
placebo,all,,0,,9900
";

    #[test]
    fn reads_table3_layout() {
        let c = StratifiedTrialCounts::from_csv_reader(TABLE3.as_bytes()).unwrap();
        assert_eq!(c.arm_size(Arm::Vaccine), 10_000);
        assert_eq!(c.arm_size(Arm::Placebo), 10_000);
        let t = CellTable::<f64>::from_counts(&c);
        let ey = t.mean(|c| c.arm == Arm::Vaccine && c.mediator == MediatorLevel::Undetectable);
        assert_eq!(ey, Some(0.004));
        assert_eq!(t.mean(|c| c.arm == Arm::Placebo), Some(0.01));
    }

    #[test]
    fn negative_count_is_invalid_with_line() {
        let bad = TABLE3.replace("placebo,all,,1,,100", "placebo,all,,1,,-3");
        match StratifiedTrialCounts::from_csv_reader(bad.as_bytes()) {
            Err(DataError::Invalid { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_field_is_parse_error() {
        let bad = TABLE3.replace("vaccine,all,1,0,,7998", "vaccine,all,1,2,,7998");
        let err = StratifiedTrialCounts::from_csv_reader(bad.as_bytes()).unwrap_err();
        assert!(err.is_parse());
        assert!(err.to_string().contains("outcome"));
    }

    #[test]
    fn vaccine_row_needs_mediator() {
        let bad = TABLE3.replace("vaccine,all,neg,1,,8", "vaccine,all,,1,,8");
        assert!(matches!(
            StratifiedTrialCounts::from_csv_reader(bad.as_bytes()),
            Err(DataError::Invalid { line: 2, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let c = StratifiedTrialCounts::from_csv_reader(TABLE3.as_bytes()).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = StratifiedTrialCounts::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn continuity_correction_adds_half_per_outcome() {
        let rows = vec![
            CountRow::new(Arm::Placebo, "a", None, false, 10),
            CountRow::new(Arm::Vaccine, "a", Some(MediatorLevel::Detectable(1)), false, 10),
        ];
        let t = CellTable::<f64>::from_counts(&StratifiedTrialCounts::new(rows).unwrap());
        let t = t.with_continuity_correction(0.5);
        assert_eq!(t.mean(|c| c.arm == Arm::Placebo), Some(0.5 / 11.0));
    }

    #[test]
    fn stratum_weights_average_arms() {
        let rows = vec![
            CountRow::new(Arm::Placebo, "a", None, false, 30),
            CountRow::new(Arm::Placebo, "b", None, false, 10),
            CountRow::new(Arm::Vaccine, "a", Some(MediatorLevel::Undetectable), false, 10),
            CountRow::new(Arm::Vaccine, "b", Some(MediatorLevel::Undetectable), false, 10),
        ];
        let t = CellTable::<f64>::from_counts(&StratifiedTrialCounts::new(rows).unwrap());
        let w = t.stratum_weights();
        assert!((w["a"] - 0.625).abs() < 1e-15);
        assert!((w["b"] - 0.375).abs() < 1e-15);
    }
}
