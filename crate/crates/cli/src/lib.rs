//! Command-line front end: reads count tables, population files and curve
//! tables, runs estimators and simulations, and writes JSON reports plus
//! plot-ready CSV.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use vaxmed::bounds::{
    default_rho_grid, lambda_s_sensitivity, max_tau, rho_endpoints, tau_sweep, BoundsError, DEFAULT_GRID_POINTS,
};
use vaxmed::data::{CellTable, DataError, StratifiedTrialCounts};
use vaxmed::designs::{
    closeout_identify, combine_curves, cve_cpe_curves, three_arm_binary_identify, two_trial_standardize,
    AssignmentDesign, CurveTable, DesignError, TwoTrialApproach, TwoTrialResult,
};
use vaxmed::estimators::{Estimator, EstimatorError};
use vaxmed::identification::{check_testable_constraints, phi_from_cells, IdentificationError};
use vaxmed::popmodel::{
    oracle_effects, Arm, EffectReport, Estimate, MediatorLevel, PhiTable, Population, PopulationError,
    PopulationFile, Provenance, ValidationReport,
};
use vaxmed::trialsim::{bootstrap_ci, simulate_trial, BootstrapOptions, SimulationError, TrialDesignSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Published JSON schema for every report this tool writes.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Parser, Debug)]
#[command(name = "vaxmed", version, about = "Mediation analysis for vaccine trials with an immune marker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a population file or a count table against its invariants.
    Validate(ValidateArgs),
    /// Estimate the subtracting indirect effect from a two-arm count table.
    Estimate(EstimateArgs),
    /// Draw a trial from a population and write its counts as CSV.
    Simulate(SimulateArgs),
    /// Non-identifiability sweep and correlation sensitivity curve.
    Sensitivity(SensitivityArgs),
    /// Estimators for designs with an immunization arm or a second trial.
    Combine(CombineArgs),
    /// Merge earlier JSON reports into one document.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Show ratio effects and proportions as percentages.
    #[arg(long)]
    pub percent: bool,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long, conflicts_with = "counts", required_unless_present = "counts")]
    pub population: Option<PathBuf>,
    #[arg(long)]
    pub counts: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorName {
    /// Stratified conditional means of undetectable vaccinees.
    SubtractingSi2,
    /// Closed form from the observable margins of a binary marker.
    IndependenceBinary,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub counts: PathBuf,
    #[arg(long, value_enum, default_value = "subtracting-si2")]
    pub estimator: EstimatorName,
    /// Add 0.5 to every outcome cell before computing proportions.
    #[arg(long)]
    pub continuity_correction: bool,
    /// Bootstrap replicates for percentile intervals (0 = none).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Resample within arm × stratum.
    #[arg(long)]
    pub by_stratum: bool,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub population: PathBuf,
    /// Participants per arm.
    #[arg(long)]
    pub n: u64,
    #[arg(long, value_delimiter = ',', default_value = "vaccine,placebo")]
    pub arms: Vec<Arm>,
    /// Probability of exposure to infection.
    #[arg(long, default_value_t = 1.0)]
    pub exposure: f64,
    /// Marker assignment in the immunization arm: `neg,1,2` (uniform) or `neg=0.2,1=0.8`.
    #[arg(long)]
    pub assign: Option<String>,
    /// Reveal the vaccine-induced marker of event-free immunized participants.
    #[arg(long)]
    pub closeout: bool,
    #[arg(long)]
    pub seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SensitivityArgs {
    #[arg(long, conflicts_with = "population", required_unless_present = "population")]
    pub counts: Option<PathBuf>,
    /// Binary population file; its margins are used.
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// Number of correlation values on the sensitivity curve.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub grid: usize,
    /// Number of evenly spaced allocation parameters in the sweep.
    #[arg(long, default_value_t = 11)]
    pub tau_grid: usize,
    /// Write the curve as CSV.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesignName {
    TwoTrial,
    ThreeArmBinary,
    Closeout,
    CveCpe,
    Curves,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApproachName {
    Standardize,
    Quota,
}

#[derive(Args, Debug)]
pub struct CombineArgs {
    #[arg(long, value_enum)]
    pub design: DesignName,
    /// Counts of a single trial (three-arm-binary, closeout, cve-cpe).
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Vaccine-versus-placebo trial (two-trial).
    #[arg(long)]
    pub vp: Option<PathBuf>,
    /// Immunization-versus-placebo trial (two-trial).
    #[arg(long)]
    pub ip: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "standardize")]
    pub approach: ApproachName,
    /// Curve table (curves).
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Assignment design of the immunization arm, as for `simulate --assign`.
    #[arg(long)]
    pub assign: Option<String>,
    /// Predicted vaccine response by stratum, e.g. `young=1,old=0`.
    #[arg(long)]
    pub predictor: Option<String>,
    /// Write the per-level curve table as CSV.
    #[arg(long)]
    pub curves_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCategory {
    Parse,
    Validation,
    Precondition,
    Internal,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize)]
#[error("{category:?}: {message}")]
pub struct CliError {
    pub category: ErrorCategory,
    pub message: String,
}

impl CliError {
    pub fn new(category: ErrorCategory, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category {
            ErrorCategory::Parse => 2,
            ErrorCategory::Validation => 3,
            ErrorCategory::Precondition => 4,
            ErrorCategory::Internal => 5,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "schema_version": SCHEMA_VERSION, "error": self }).to_string()
    }
}

fn parse_err(m: impl Into<String>) -> CliError {
    CliError::new(ErrorCategory::Parse, m)
}
fn validation_err(m: impl Into<String>) -> CliError {
    CliError::new(ErrorCategory::Validation, m)
}
fn precondition_err(m: impl ToString) -> CliError {
    CliError::new(ErrorCategory::Precondition, m.to_string())
}
fn internal_err(m: impl ToString) -> CliError {
    CliError::new(ErrorCategory::Internal, m.to_string())
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => validation_err(e.to_string()),
            _ if e.is_parse() => parse_err(e.to_string()),
            _ => validation_err(e.to_string()),
        }
    }
}

impl From<PopulationError> for CliError {
    fn from(e: PopulationError) -> Self {
        validation_err(e.to_string())
    }
}

macro_rules! precondition_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                precondition_err(e)
            }
        }
    )*};
}
precondition_from!(IdentificationError, DesignError, EstimatorError, BoundsError);

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        validation_err(e.to_string())
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate(a) => validate(a),
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Sensitivity(a) => sensitivity(a),
        Command::Combine(a) => combine(a),
        Command::Report(a) => report(a),
    }
}

fn read_counts(path: &Path) -> Result<StratifiedTrialCounts, CliError> {
    if !path.exists() {
        return Err(validation_err(format!("{}: no such file", path.display())));
    }
    StratifiedTrialCounts::from_csv_path(path).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn read_population(path: &Path) -> Result<(PopulationFile, Result<Population<f64>, PopulationError>), CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| validation_err(format!("{}: {e}", path.display())))?;
    let file: PopulationFile = serde_json::from_str(&text).map_err(|e| {
        parse_err(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })?;
    let built = file.build::<f64>();
    Ok((file, built))
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| parse_err(format!("--{flag} is required for this design")))
}

/// `neg,1,2` (uniform) or `neg=0.2,1=0.8`.
pub fn parse_assignment(spec: &str) -> Result<AssignmentDesign<f64>, CliError> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if parts.is_empty() {
        return Err(parse_err("empty assignment design"));
    }
    if parts.iter().all(|p| !p.contains('=')) {
        let levels = parts
            .iter()
            .map(|p| p.parse::<MediatorLevel>().map_err(|e| parse_err(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        return AssignmentDesign::uniform(&levels).map_err(|e| validation_err(e.to_string()));
    }
    let mut pmf = BTreeMap::new();
    for p in parts {
        let (l, v) = p
            .split_once('=')
            .ok_or_else(|| parse_err(format!("assignment entry {p:?} is not LEVEL=PROB")))?;
        let level: MediatorLevel = l.trim().parse().map_err(|e: vaxmed::popmodel::ParseLevelError| parse_err(e.to_string()))?;
        let prob: f64 = v.trim().parse().map_err(|_| parse_err(format!("probability {v:?} is not a number")))?;
        pmf.insert(level, prob);
    }
    AssignmentDesign::new(pmf).map_err(|e| validation_err(e.to_string()))
}

/// `young=1,old=0`.
pub fn parse_predictor(spec: &str) -> Result<BTreeMap<String, bool>, CliError> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| {
            let (x, v) = p
                .split_once('=')
                .ok_or_else(|| parse_err(format!("predictor entry {p:?} is not STRATUM=0|1")))?;
            let v = match v.trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(parse_err(format!("predictor value {other:?} is not 0 or 1"))),
            };
            Ok((x.trim().to_string(), v))
        })
        .collect()
}

/// Fields shown as percentages under `--percent`.
const PERCENT_FIELDS: [&str; 10] = [
    "ve", "theta_t", "theta_is", "theta_ia", "theta_ds", "theta_da", "lambda_s", "lambda_a", "theta_c", "lambda_a_m",
];

fn to_percent(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for (k, child) in map.iter_mut() {
                if PERCENT_FIELDS.contains(&k.as_str()) {
                    scale_estimate(child);
                } else if k == "intervals" {
                    if let Value::Object(ivs) = child {
                        for (field, iv) in ivs.iter_mut() {
                            if PERCENT_FIELDS.contains(&field.as_str()) {
                                for bound in ["lower", "upper"] {
                                    scale_number(&mut iv[bound]);
                                }
                            }
                        }
                    }
                } else {
                    to_percent(child);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(to_percent),
        _ => {}
    }
}

fn scale_estimate(v: &mut Value) {
    match v {
        Value::Object(o) if o.contains_key("provenance") => scale_number(o.get_mut("value").expect("value key")),
        Value::Number(_) => scale_number(v),
        _ => {}
    }
}

fn scale_number(v: &mut Value) {
    if let Some(x) = v.as_f64() {
        *v = json!(x * 100.0);
    }
}

fn emit(command: &str, mut body: Value, output: &OutputArgs) -> Result<(), CliError> {
    if output.percent {
        to_percent(&mut body);
    }
    let mut doc = serde_json::Map::new();
    doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
    doc.insert("command".into(), json!(command));
    doc.insert("units".into(), json!(if output.percent { "percent" } else { "fraction" }));
    if let Value::Object(m) = body {
        doc.extend(m);
    }
    let text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(internal_err)?;
    write_text(output.out.as_deref(), &text)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n")).map_err(|e| internal_err(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(internal_err(e)),
                _ => Ok(()),
            }
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| internal_err(format!("{}: {e}", path.display())))
}

fn value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(internal_err)
}

fn constraints_json(phi: Option<PhiTable<f64>>) -> Result<Value, CliError> {
    match phi {
        Some(phi) => value(&check_testable_constraints(&phi)),
        None => Ok(json!([])),
    }
}

fn validate(a: &ValidateArgs) -> Result<(), CliError> {
    let (body, ok) = if let Some(path) = &a.population {
        let (_, built) = read_population(path)?;
        match built {
            Ok(pop) => {
                let mut body = json!({ "validation": ValidationReport::from_violations(vec![]) });
                if let Population::Binary(pi) = &pop {
                    let phi = pi.phi();
                    body["phi"] = value(&phi)?;
                    body["constraints"] = constraints_json(Some(phi))?;
                }
                body["oracle"] = value(&oracle_effects(&pop))?;
                (body, true)
            }
            Err(PopulationError::Invalid(v)) => (json!({ "validation": ValidationReport::from_violations(v) }), false),
        }
    } else {
        let counts = read_counts(required(&a.counts, "counts")?)?;
        let cells = CellTable::<f64>::from_counts(&counts);
        let arms: BTreeMap<String, u64> = Arm::ALL
            .into_iter()
            .filter(|&arm| counts.has_arm(arm))
            .map(|arm| (arm.to_string(), counts.arm_size(arm)))
            .collect();
        let phi = phi_from_cells(&cells);
        let constraints = phi.map(|p| check_testable_constraints(&p)).unwrap_or_default();
        let ok = constraints.iter().all(|c| c.satisfied() != Some(false));
        let body = json!({
            "validation": ValidationReport::from_violations(vec![]),
            "arms": arms,
            "strata": counts.strata(),
            "phi": value(&phi)?,
            "constraints": value(&constraints)?,
        });
        (body, ok)
    };
    emit("validate", body, &a.output)?;
    if ok {
        Ok(())
    } else {
        Err(validation_err("validation failed; see report"))
    }
}

fn estimate(a: &EstimateArgs) -> Result<(), CliError> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(validation_err("--level must lie in (0, 1)"));
    }
    if a.bootstrap > 0 && a.seed.is_none() {
        return Err(validation_err("--bootstrap needs --seed"));
    }
    let counts = read_counts(&a.counts)?;
    let mut cells = CellTable::<f64>::from_counts(&counts);
    if a.continuity_correction {
        cells = cells.with_continuity_correction(0.5);
    }
    let estimator = match a.estimator {
        EstimatorName::SubtractingSi2 => Estimator::SubtractingSi2,
        EstimatorName::IndependenceBinary => Estimator::IndependenceBinary,
    };
    let mut report = estimator.estimate(&cells)?;
    let mut body = json!({ "estimator": estimator.name(), "continuity_correction": a.continuity_correction });
    if a.bootstrap > 0 {
        let opts = BootstrapOptions {
            replicates: a.bootstrap,
            seed: a.seed.expect("checked"),
            level: a.level,
            by_stratum: a.by_stratum,
        };
        let boot = bootstrap_ci(&counts, &estimator, &opts)?;
        report.intervals = boot.intervals;
        body["bootstrap"] = json!({
            "replicates": boot.replicates,
            "failed_replicates": boot.failed_replicates,
            "seed": opts.seed,
            "by_stratum": opts.by_stratum,
        });
    }
    body["report"] = value(&report)?;
    body["constraints"] = constraints_json(phi_from_cells(&cells))?;
    emit("estimate", body, &a.output)
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let (_, built) = read_population(&a.population)?;
    let pop = built?.to_stratified();
    let assignment = a.assign.as_deref().map(parse_assignment).transpose()?;
    let spec = TrialDesignSpec {
        arms: a.arms.iter().map(|&arm| (arm, a.n)).collect(),
        exposure: a.exposure,
        assignment,
        closeout: a.closeout,
        seed: a.seed,
    };
    let counts = simulate_trial(&pop, &spec)?;
    match &a.out {
        Some(p) => counts.write_csv(create(p)?)?,
        None => counts.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn sensitivity(a: &SensitivityArgs) -> Result<(), CliError> {
    if a.grid < 2 || a.tau_grid < 2 {
        return Err(validation_err("--grid and --tau-grid need at least two points"));
    }
    let phi = if let Some(path) = &a.population {
        match read_population(path)?.1? {
            Population::Binary(pi) => pi.phi(),
            _ => return Err(precondition_err("sensitivity analysis needs a binary population")),
        }
    } else {
        let counts = read_counts(required(&a.counts, "counts")?)?;
        phi_from_cells(&CellTable::<f64>::from_counts(&counts))
            .ok_or_else(|| precondition_err("counts need vaccine and placebo arms"))?
    };
    let tau_max = max_tau(&phi)?;
    let taus: Vec<f64> = (0..a.tau_grid)
        .map(|i| tau_max * i as f64 / (a.tau_grid - 1) as f64)
        .collect();
    let sweep = tau_sweep(&phi, &taus)?;
    let endpoints = rho_endpoints(&phi)?;
    let curve = lambda_s_sensitivity(&phi, &default_rho_grid(&endpoints, a.grid))?;
    if let Some(p) = &a.curve_out {
        curve.write_csv(create(p)?).map_err(internal_err)?;
    }
    let body = json!({
        "phi": value(&phi)?,
        "constraints": constraints_json(Some(phi))?,
        "tau_max": tau_max,
        "tau_sweep": value(&sweep)?,
        "rho_endpoints": value(&endpoints)?,
        "curve": value(&curve)?,
    });
    emit("sensitivity", body, &a.output)
}

fn write_curves(path: &Option<PathBuf>, curves: &CurveTable<f64>) -> Result<(), CliError> {
    if let Some(p) = path {
        curves.write_csv(create(p)?).map_err(internal_err)?;
    }
    Ok(())
}

fn combine(a: &CombineArgs) -> Result<(), CliError> {
    let design_name = a.design.to_possible_value().expect("named").get_name().to_string();
    let counts_cells = || -> Result<CellTable<f64>, CliError> {
        Ok(CellTable::from_counts(&read_counts(required(&a.counts, "counts")?)?))
    };
    let assignment = a.assign.as_deref().map(parse_assignment).transpose()?;
    let mut body = json!({ "design": design_name });
    let report: EffectReport<f64> = match a.design {
        DesignName::TwoTrial => {
            let vp = CellTable::from_counts(&read_counts(required(&a.vp, "vp")?)?);
            let ip = CellTable::from_counts(&read_counts(required(&a.ip, "ip")?)?);
            let approach = match a.approach {
                ApproachName::Standardize => TwoTrialApproach::Standardize,
                ApproachName::Quota => TwoTrialApproach::Quota,
            };
            body["approach"] = json!(a.approach.to_possible_value().expect("named").get_name());
            match two_trial_standardize(&vp, &ip, approach)? {
                TwoTrialResult::Standardize { curves } => {
                    write_curves(&a.curves_out, &curves)?;
                    combine_curves(&curves)
                }
                TwoTrialResult::Quota(q) => {
                    body["balance_tv_distance"] = json!(q.balance_tv_distance);
                    let p = Provenance::IdentifiedDesign;
                    let mean = |arm| vp.mean(|c| c.arm == arm);
                    let theta_t = match (mean(Arm::Vaccine), mean(Arm::Placebo)) {
                        (Some(v), Some(p0)) if p0 > 0.0 => Estimate::defined(v / p0, p),
                        _ => Estimate::undefined("theta_t: vaccine trial lacks arms or placebo failures"),
                    };
                    EffectReport::from_ratios(theta_t, Estimate::undefined("not identified by this design"), q.theta_ia, p)
                }
            }
        }
        DesignName::ThreeArmBinary => {
            let predictor = parse_predictor(
                a.predictor
                    .as_deref()
                    .ok_or_else(|| parse_err("--predictor is required for this design"))?,
            )?;
            let r = three_arm_binary_identify(&counts_cells()?, &predictor)?;
            body["misclassification_rate"] = value(&r.misclassification_rate)?;
            body["warnings"] = value(&r.warnings)?;
            r.report
        }
        DesignName::Closeout => {
            let design = assignment.ok_or_else(|| parse_err("--assign is required for this design"))?;
            let r = closeout_identify(&counts_cells()?, &design)?;
            body["levels"] = value(&r.levels)?;
            body["assignment"] = value(&r.assignment)?;
            body["warnings"] = value(&r.warnings)?;
            r.report
        }
        DesignName::CveCpe => {
            let est = cve_cpe_curves(&counts_cells()?, assignment.as_ref())?;
            write_curves(&a.curves_out, &est.curves)?;
            body["assignment"] = value(&est.assignment)?;
            combine_curves(&est.curves)
        }
        DesignName::Curves => {
            let path = required(&a.curves, "curves")?;
            let file = File::open(path).map_err(|e| validation_err(format!("{}: {e}", path.display())))?;
            let curves = CurveTable::<f64>::from_csv_reader(file).map_err(|e| match e {
                DesignError::Schema(m) => parse_err(format!("{}: {m}", path.display())),
                other => validation_err(format!("{}: {other}", path.display())),
            })?;
            combine_curves(&curves)
        }
    };
    body["report"] = value(&report)?;
    emit("combine", body, &a.output)
}

fn report(a: &ReportArgs) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for path in &a.inputs {
        let text =
            std::fs::read_to_string(path).map_err(|e| validation_err(format!("{}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| {
            parse_err(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
        })?;
        match v.get("schema_version").and_then(Value::as_u64) {
            Some(n) if n == u64::from(SCHEMA_VERSION) => {}
            other => {
                return Err(validation_err(format!(
                    "{}: unsupported schema_version {other:?}",
                    path.display()
                )))
            }
        }
        if v.get("command") == Some(&json!("report")) {
            return Err(validation_err(format!("{}: merged reports cannot be nested", path.display())));
        }
        reports.push(json!({ "source": path.display().to_string(), "document": v }));
    }
    emit("report", json!({ "reports": reports }), &a.output)
}
