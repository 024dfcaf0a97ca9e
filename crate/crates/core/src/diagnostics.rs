//! Positive-region check of the mathematical model: at each age where the
//! outcome is observed, compare the statistical model's stratum mean with
//! the mean the mathematical model implies for the same participants.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::Participant;
use crate::error::{Error, Result};
use crate::estimators::{fit_saturated, predict_age};
use crate::reference::draw_outcome;
use crate::reference::ReferenceTable;
use crate::resampling::{bootstrap, percentile, ResamplePlan};
use crate::rng::{Domain, RandomStream};

/// Draws per participant used for the full-data mathematical-model means.
pub const DEFAULT_POINT_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub age: u32,
    pub stat_mean: f64,
    pub math_mean: f64,
    /// `stat_mean - math_mean`.
    pub diff: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl DiagnosticRow {
    pub fn covers_zero(&self) -> bool {
        self.ci_lo <= 0.0 && 0.0 <= self.ci_hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticOutput {
    pub rows: Vec<DiagnosticRow>,
    pub failures: usize,
    pub warning: Option<String>,
}

/// Weighted mean, over participants of `age`, of each participant's
/// average of `draws_per_participant` mathematical-model draws.
pub fn math_model_age_mean<R: Rng + ?Sized>(
    table: &ReferenceTable,
    rows: &[&Participant],
    age: u32,
    rng: &mut R,
    draws_per_participant: usize,
) -> Result<f64> {
    if draws_per_participant == 0 {
        return Err(Error::Domain("draws per participant must be at least 1".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for p in rows.iter().filter(|p| p.age == age) {
        let pct = p
            .height_percentile
            .ok_or_else(|| Error::MissingHeight(vec![p.id.clone()]))?;
        let mut sum = 0.0;
        for _ in 0..draws_per_participant {
            sum += draw_outcome(table, p.age, p.gender, pct, rng)?;
        }
        num += p.weight * sum / draws_per_participant as f64;
        den += p.weight;
    }
    if den <= 0.0 {
        return Err(Error::Domain(format!("no participants aged {age}")));
    }
    Ok(num / den)
}

fn positive_ages(rows: &[&Participant]) -> Vec<u32> {
    let mut ages: Vec<u32> = rows.iter().filter(|p| p.positive).map(|p| p.age).collect();
    ages.sort_unstable();
    ages.dedup();
    ages
}

/// Per-age (statistical, mathematical) means for one resample, one draw
/// per positive-region participant in row order.
fn replicate_means<R: Rng + ?Sized>(
    rows: &[&Participant],
    table: &ReferenceTable,
    ages: &[u32],
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let model = fit_saturated(rows, true)?;
    let mut acc: BTreeMap<u32, (f64, f64)> = ages.iter().map(|&a| (a, (0.0, 0.0))).collect();
    for p in rows.iter().filter(|p| p.positive) {
        let pct = p
            .height_percentile
            .ok_or_else(|| Error::MissingHeight(vec![p.id.clone()]))?;
        let y = draw_outcome(table, p.age, p.gender, pct, rng)?;
        if let Some(e) = acc.get_mut(&p.age) {
            e.0 += p.weight * y;
            e.1 += p.weight;
        }
    }
    let mut stat = Vec::with_capacity(ages.len());
    let mut math = Vec::with_capacity(ages.len());
    for &age in ages {
        stat.push(predict_age(&model, age)?);
        let (num, den) = acc[&age];
        if den <= 0.0 {
            return Err(Error::Domain(format!("resample has no participants aged {age}")));
        }
        math.push(num / den);
    }
    Ok((stat, math))
}

/// Assembles rows with `diff = a - b` and percentile intervals over the
/// replicate differences.
pub fn build_rows(
    ages: &[u32],
    point_a: &[f64],
    point_b: &[f64],
    replicates: &[(Vec<f64>, Vec<f64>)],
) -> Result<Vec<DiagnosticRow>> {
    if replicates.is_empty() {
        return Err(Error::Domain("no successful diagnostic replicates".into()));
    }
    ages.iter()
        .enumerate()
        .map(|(k, &age)| {
            let diffs: Vec<f64> = replicates.iter().map(|(a, b)| a[k] - b[k]).collect();
            Ok(DiagnosticRow {
                age,
                stat_mean: point_a[k],
                math_mean: point_b[k],
                diff: point_a[k] - point_b[k],
                ci_lo: percentile(&diffs, 0.025)?,
                ci_hi: percentile(&diffs, 0.975)?,
            })
        })
        .collect()
}

/// Statistical-minus-mathematical mean at every positive-region age, with
/// bootstrap percentile intervals. Only positive-region strata of the
/// reference table are consulted.
pub fn diagnostic_compare(
    rows: &[&Participant],
    table: &ReferenceTable,
    plan: &ResamplePlan,
    point_draws: usize,
) -> Result<DiagnosticOutput> {
    let ages = positive_ages(rows);
    if ages.is_empty() {
        return Err(Error::Domain("positive region is empty".into()));
    }
    let model = fit_saturated(rows, true)?;
    let stat_point: Vec<f64> = ages
        .iter()
        .map(|&a| predict_age(&model, a))
        .collect::<Result<_>>()?;
    let mut point_rng = RandomStream::substream(plan.seed, Domain::DiagnosticPoint, 0);
    let math_point: Vec<f64> = ages
        .iter()
        .map(|&a| math_model_age_mean(table, rows, a, &mut point_rng, point_draws))
        .collect::<Result<_>>()?;

    let boot = bootstrap(
        rows,
        |sample, rng| replicate_means(sample, table, &ages, rng),
        plan,
        Domain::Diagnostic,
    )?;
    Ok(DiagnosticOutput {
        rows: build_rows(&ages, &stat_point, &math_point, &boot.values)?,
        failures: boot.failures,
        warning: boot.warning,
    })
}
