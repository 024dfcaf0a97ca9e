//! End-to-end orchestration: configuration, the JSON analysis report, and
//! CSV outputs (age/missingness table, figure data, diagnostics).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::cohort::{
    ensure_height_percentiles, missingness_table, parse_cohort, Cohort, ColumnMapping, IngestReport,
    MissingnessRow, Participant,
};
use crate::diagnostics::{diagnostic_compare, DiagnosticRow, DEFAULT_POINT_DRAWS};
use crate::error::{Error, Result};
use crate::estimators::{
    bound_mean, estimate, fit_linear_wls, fit_saturated, g_computation_mean, predict_age, prop_nonpositive,
    BoundsResult, FittedOutcomeModel, Method,
};
use crate::reference::{draw_outcome, load_reference_table, ReferenceTable};
use crate::resampling::{bootstrap, summarize, ResamplePlan, DEFAULT_REPLICATES};
use crate::rng::{Domain, RandomStream};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Figure draws per simulated age.
pub const DEFAULT_FIGURE_DRAWS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    CompleteCase,
    GcompLinear,
    GcompSaturated,
    Synthesis,
    Bounds,
    Diagnostic,
}

impl Analysis {
    pub fn method(self) -> Option<Method> {
        match self {
            Analysis::CompleteCase => Some(Method::CompleteCase),
            Analysis::GcompLinear => Some(Method::GcompLinear),
            Analysis::GcompSaturated => Some(Method::GcompSaturated),
            Analysis::Synthesis => Some(Method::Synthesis),
            Analysis::Bounds | Analysis::Diagnostic => None,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.trim().to_string()))
            .map_err(|_| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Everything needed to reproduce a run. Worker count is deliberately not
/// part of the serialized form: it cannot change any reported number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cohort: PathBuf,
    pub mapping: ColumnMapping,
    pub reference: Option<PathBuf>,
    pub cutoff: u32,
    pub age_range: [u32; 2],
    pub methods: Vec<Analysis>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
    pub bounds: [f64; 2],
    pub diagnostic_point_draws: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cohort: PathBuf::new(),
            mapping: ColumnMapping::default(),
            reference: None,
            cutoff: 8,
            age_range: [2, 17],
            methods: vec![
                Analysis::CompleteCase,
                Analysis::GcompLinear,
                Analysis::Synthesis,
                Analysis::Bounds,
                Analysis::Diagnostic,
            ],
            replicates: DEFAULT_REPLICATES,
            seed: 20_250_101,
            workers: 0,
            bounds: [70.0, 120.0],
            diagnostic_point_draws: DEFAULT_POINT_DRAWS,
            output_dir: PathBuf::from("synthmean-out"),
        }
    }
}

impl RunConfig {
    pub fn plan(&self) -> ResamplePlan {
        ResamplePlan {
            replicates: self.replicates,
            seed: self.seed,
            workers: self.workers,
        }
    }

    fn needs_reference(&self) -> bool {
        self.methods
            .iter()
            .any(|m| matches!(m, Analysis::Synthesis | Analysis::Diagnostic))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.cohort.is_file() {
            return Err(Error::Config(format!(
                "cohort file {} does not exist",
                self.cohort.display()
            )));
        }
        if let Some(r) = &self.reference {
            if !r.is_file() {
                return Err(Error::Config(format!("reference file {} does not exist", r.display())));
            }
        } else if self.needs_reference() {
            return Err(Error::Config("synthesis and diagnostic need a reference table".into()));
        }
        if self.age_range[0] > self.age_range[1] {
            return Err(Error::Config("age range is inverted".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("a method is listed more than once".into()));
        }
        if self.bounds[0].partial_cmp(&self.bounds[1]).is_none_or(|o| o.is_gt()) {
            return Err(Error::Config("bounds are inverted".into()));
        }
        self.plan().validate()
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub method: Method,
    /// Median of the bootstrap replicates.
    pub point: f64,
    /// 2.5th and 97.5th replicate percentiles.
    pub ci: Option<[f64; 2]>,
    /// Estimate computed once on the original data.
    pub full_data: f64,
    /// Standard deviation of the replicates.
    pub bootstrap_sd: f64,
    pub replicates: usize,
    pub failed_replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n: usize,
    pub n_observed: usize,
    pub prop_nonpositive: f64,
    pub cutoff: u32,
    pub age_range: [u32; 2],
    pub by_age: Vec<MissingnessRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub software: Software,
    pub config: RunConfig,
    pub ingest: IngestReport,
    pub cohort: CohortSummary,
    pub estimates: Vec<EstimateResult>,
    pub bounds: Option<BoundsResult>,
    pub diagnostic: Option<Vec<DiagnosticRow>>,
    pub replicate_failures: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
    pub seed: u64,
}

impl AnalysisReport {
    pub fn estimate(&self, method: Method) -> Option<&EstimateResult> {
        self.estimates.iter().find(|e| e.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Report plus the raw replicate vectors behind it.
#[derive(Debug, Clone)]
pub struct AnalysisRun {
    pub report: AnalysisReport,
    pub replicates: BTreeMap<Method, Vec<f64>>,
}

pub fn load_cohort(config: &RunConfig) -> Result<(Cohort, IngestReport)> {
    let file = File::open(&config.cohort).map_err(|e| Error::io(&config.cohort, e))?;
    parse_cohort(
        file,
        &config.mapping,
        config.cutoff,
        (config.age_range[0], config.age_range[1]),
    )
}

pub fn load_reference(path: &Path) -> Result<ReferenceTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_reference_table(file)
}

fn strata<'a, I: IntoIterator<Item = &'a &'a Participant>>(rows: I) -> Vec<(u32, crate::cohort::Gender)> {
    let mut v: Vec<_> = rows.into_iter().map(|p| (p.age, p.gender)).collect();
    v.sort();
    v.dedup();
    v
}

/// Runs every requested analysis on an already-loaded cohort.
pub fn run_on_cohort(
    config: &RunConfig,
    cohort: &Cohort,
    ingest: IngestReport,
    table: Option<&ReferenceTable>,
) -> Result<AnalysisRun> {
    config.plan().validate()?;
    let plan = config.plan();

    let cohort = if config.needs_reference() {
        ensure_height_percentiles(cohort)?
    } else {
        cohort.clone()
    };
    let rows: Vec<&Participant> = cohort.participants().iter().collect();

    if let Some(t) = table {
        if config.methods.contains(&Analysis::Synthesis) {
            t.require_coverage(strata(rows.iter().filter(|p| !p.positive)))?;
        }
        if config.methods.contains(&Analysis::Diagnostic) {
            t.require_coverage(strata(rows.iter().filter(|p| p.positive)))?;
        }
    }

    let mut estimates = Vec::new();
    let mut replicates = BTreeMap::new();
    let mut failures = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut bounds = None;
    let mut diagnostic = None;

    for &analysis in &config.methods {
        if let Some(method) = analysis.method() {
            let table = if method.needs_reference() { table } else { None };
            let full_data = estimate(
                method,
                &rows,
                table,
                &mut RandomStream::substream(plan.seed, Domain::FullSample, 0),
            )?;
            let boot = bootstrap(
                &rows,
                |sample, rng| estimate(method, sample, table, rng),
                &plan,
                Domain::Estimation,
            )?;
            let summary = summarize(&boot.values)?;
            if let Some(w) = &boot.warning {
                warnings.push(format!("{method}: {w}"));
            }
            failures.insert(method.to_string(), boot.failures);
            estimates.push(EstimateResult {
                method,
                point: summary.median,
                ci: Some([summary.p2_5, summary.p97_5]),
                full_data,
                bootstrap_sd: summary.sd,
                replicates: plan.replicates,
                failed_replicates: boot.failures,
                seed: plan.seed,
            });
            replicates.insert(method, boot.values);
            continue;
        }
        match analysis {
            Analysis::Bounds => {
                let model = fit_saturated(&rows, true)?;
                let positive: Vec<&Participant> = rows.iter().copied().filter(|p| p.positive).collect();
                let positive_mean = g_computation_mean(&positive, &model)?;
                bounds = Some(bound_mean(
                    positive_mean,
                    prop_nonpositive(&rows)?,
                    config.bounds[0],
                    config.bounds[1],
                )?);
            }
            Analysis::Diagnostic => {
                let table = table.ok_or_else(|| Error::Config("diagnostic needs a reference table".into()))?;
                let out = diagnostic_compare(&rows, table, &plan, config.diagnostic_point_draws)?;
                if let Some(w) = &out.warning {
                    warnings.push(format!("diagnostic: {w}"));
                }
                for r in out.rows.iter().filter(|r| !r.covers_zero()) {
                    warnings.push(format!(
                        "diagnostic: age {} interval [{:.3}, {:.3}] excludes zero (difference {:.3})",
                        r.age, r.ci_lo, r.ci_hi, r.diff
                    ));
                }
                failures.insert("diagnostic".into(), out.failures);
                diagnostic = Some(out.rows);
            }
            _ => unreachable!("estimators handled above"),
        }
    }

    let by_age = missingness_table(&cohort);
    let report = AnalysisReport {
        software: Software {
            name: env!("CARGO_PKG_NAME").into(),
            version: VERSION.into(),
        },
        config: config.clone(),
        ingest,
        cohort: CohortSummary {
            n: cohort.len(),
            n_observed: rows.iter().filter(|p| p.observed()).count(),
            prop_nonpositive: prop_nonpositive(&rows)?,
            cutoff: cohort.cutoff(),
            age_range: config.age_range,
            by_age,
        },
        estimates,
        bounds,
        diagnostic,
        replicate_failures: failures,
        warnings,
        seed: plan.seed,
    };
    Ok(AnalysisRun { report, replicates })
}

/// Loads inputs named by `config` and runs the analysis.
pub fn run_analysis(config: &RunConfig) -> Result<AnalysisRun> {
    config.validate()?;
    let (cohort, ingest) = load_cohort(config)?;
    let table = config.reference.as_deref().map(load_reference).transpose()?;
    run_on_cohort(config, &cohort, ingest, table.as_ref())
}

/// Writes to a sibling temporary file and renames it into place, so a
/// failure never leaves a partial file at `path`.
pub fn write_atomically<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let result = (|| {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
        Ok(())
    })();
    match result {
        Ok(()) => fs::rename(&tmp, path).map_err(|e| Error::io(path, e)),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn write_report(report: &AnalysisReport, path: &Path) -> Result<()> {
    let json = report.to_json()?;
    write_atomically(path, |w| w.write_all(json.as_bytes()).map_err(|e| Error::io(path, e)))
}

fn csv_to(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    write_atomically(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)?;
        for r in rows {
            out.write_record(&r)?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    })
}

/// Age distribution and missingness table as CSV.
pub fn emit_table1(cohort: &Cohort, path: &Path) -> Result<()> {
    let rows = missingness_table(cohort)
        .into_iter()
        .map(|r| {
            vec![
                r.age.to_string(),
                r.n.to_string(),
                r.weighted_pct.to_string(),
                r.n_missing.to_string(),
                r.pct_missing.to_string(),
            ]
        })
        .collect();
    csv_to(path, &["age", "n", "weighted_pct", "n_missing", "pct_missing"], rows)
}

pub fn emit_diagnostic_csv(rows: &[DiagnosticRow], path: &Path) -> Result<()> {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.age.to_string(),
                r.stat_mean.to_string(),
                r.math_mean.to_string(),
                r.diff.to_string(),
                r.ci_lo.to_string(),
                r.ci_hi.to_string(),
            ]
        })
        .collect();
    csv_to(path, &["age", "stat_mean", "math_mean", "diff", "ci_lo", "ci_hi"], body)
}

pub fn emit_replicates(values: &[f64], path: &Path) -> Result<()> {
    csv_to(path, &["value"], values.iter().map(|v| vec![v.to_string()]).collect())
}

/// Paths written by [`emit_figure_data`].
#[derive(Debug, Clone, PartialEq)]
pub struct FigureFiles {
    pub observed: PathBuf,
    pub curves: PathBuf,
    pub simulated: PathBuf,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes the raw data behind the outcome-by-age figures: observed points,
/// fitted linear and saturated curves, and `draws_per_age` mathematical-model
/// draws per cohort age. Each draw picks a participant of that age with
/// probability proportional to sampling weight, then samples from that
/// participant's reference stratum. No jitter is applied.
pub fn emit_figure_data(
    cohort: &Cohort,
    table: Option<&ReferenceTable>,
    linear: Option<&FittedOutcomeModel>,
    saturated: Option<&FittedOutcomeModel>,
    path_prefix: &Path,
    draws_per_age: usize,
    seed: u64,
) -> Result<FigureFiles> {
    let files = FigureFiles {
        observed: with_suffix(path_prefix, "observed.csv"),
        curves: with_suffix(path_prefix, "curves.csv"),
        simulated: with_suffix(path_prefix, "simulated.csv"),
    };

    let mut simulated = Vec::new();
    if let Some(table) = table {
        let cohort = ensure_height_percentiles(cohort)?;
        for age in cohort.ages() {
            let members: Vec<&Participant> = cohort.participants().iter().filter(|p| p.age == age).collect();
            let picker = WeightedIndex::new(members.iter().map(|p| p.weight))
                .map_err(|e| Error::Domain(format!("age {age}: {e}")))?;
            let mut rng = RandomStream::substream(seed, Domain::Figures, u64::from(age));
            for _ in 0..draws_per_age {
                let p = members[picker.sample(&mut rng)];
                let pct = p.height_percentile.expect("percentiles ensured");
                let v = draw_outcome(table, age, p.gender, pct, &mut rng)?;
                simulated.push(vec![age.to_string(), v.to_string()]);
            }
        }
    }

    let observed = cohort
        .participants()
        .iter()
        .filter_map(|p| p.outcome.map(|y| vec![p.age.to_string(), y.to_string(), p.weight.to_string()]))
        .collect();

    let (lo, hi) = cohort.age_range();
    let fmt = |m: Option<&FittedOutcomeModel>, age| {
        m.and_then(|m| predict_age(m, age).ok())
            .map(|v| v.to_string())
            .unwrap_or_default()
    };
    let curves = (lo..=hi)
        .map(|age| vec![age.to_string(), fmt(linear, age), fmt(saturated, age)])
        .collect();

    csv_to(&files.observed, &["age", "sbp", "weight"], observed)?;
    csv_to(&files.curves, &["age", "linear_pred", "saturated_mean"], curves)?;
    csv_to(&files.simulated, &["age", "value"], simulated)?;
    Ok(files)
}

/// Fits both outcome models used in the figures, tolerating failure.
pub fn figure_models(cohort: &Cohort) -> (Option<FittedOutcomeModel>, Option<FittedOutcomeModel>) {
    let rows: Vec<&Participant> = cohort.participants().iter().collect();
    (fit_linear_wls(&rows, false).ok(), fit_saturated(&rows, true).ok())
}
