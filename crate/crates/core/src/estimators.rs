//! Point estimators of the population mean outcome.
//!
//! Every estimator takes a slice of participant references so the same
//! code runs on the full cohort and on bootstrap resamples without copying.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::Participant;
use crate::error::{Error, Result};
use crate::reference::{draw_outcome, ReferenceTable};

/// `Σ wᵢvᵢ / Σ wᵢ`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::Domain(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        if w < 0.0 {
            return Err(Error::Domain(format!("negative weight {w}")));
        }
        num += w * v;
        den += w;
    }
    if den <= 0.0 {
        return Err(Error::Domain("total weight is zero".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedOutcomeModel {
    /// One coefficient per age: the weighted mean of observed outcomes.
    Saturated(BTreeMap<u32, f64>),
    Linear { intercept: f64, slope: f64 },
}

impl FittedOutcomeModel {
    pub fn kind(&self) -> &'static str {
        match self {
            FittedOutcomeModel::Saturated(_) => "saturated",
            FittedOutcomeModel::Linear { .. } => "linear",
        }
    }
}

/// Weighted mean of the observed outcomes.
pub fn complete_case_mean(rows: &[&Participant]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for p in rows {
        if let Some(y) = p.outcome {
            num += p.weight * y;
            den += p.weight;
        }
    }
    if den <= 0.0 {
        return Err(Error::Domain("no observed outcomes".into()));
    }
    Ok(num / den)
}

fn in_region(p: &Participant, positive_only: bool) -> bool {
    !positive_only || p.positive
}

/// Saturated outcome model: `β_age` is the weighted mean of observed
/// outcomes at that age. Every age present in the fitted region must have
/// at least one observed outcome; otherwise the missing ages are reported
/// as a positivity violation.
pub fn fit_saturated(rows: &[&Participant], positive_only: bool) -> Result<FittedOutcomeModel> {
    let mut acc: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for p in rows.iter().filter(|p| in_region(p, positive_only)) {
        let e = acc.entry(p.age).or_insert((0.0, 0.0));
        if let Some(y) = p.outcome {
            e.0 += p.weight * y;
            e.1 += p.weight;
        }
    }
    if acc.is_empty() {
        return Err(Error::Domain("fitted region contains no participants".into()));
    }
    let unestimable: Vec<u32> = acc
        .iter()
        .filter(|(_, &(_, w))| w <= 0.0)
        .map(|(&age, _)| age)
        .collect();
    if !unestimable.is_empty() {
        return Err(Error::Positivity { ages: unestimable });
    }
    Ok(FittedOutcomeModel::Saturated(
        acc.into_iter().map(|(age, (num, den))| (age, num / den)).collect(),
    ))
}

/// Weighted least squares of outcome on age over observed participants,
/// solved from the centred normal equations.
pub fn fit_linear_wls(rows: &[&Participant], positive_only: bool) -> Result<FittedOutcomeModel> {
    let obs = || {
        rows.iter()
            .filter(move |p| in_region(p, positive_only))
            .filter_map(|p| p.outcome.map(|y| (f64::from(p.age), y, p.weight)))
    };
    let (mut sw, mut swx, mut swy) = (0.0, 0.0, 0.0);
    for (x, y, w) in obs() {
        sw += w;
        swx += w * x;
        swy += w * y;
    }
    if sw <= 0.0 {
        return Err(Error::Domain("no observed outcomes for linear fit".into()));
    }
    let (xbar, ybar) = (swx / sw, swy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y, w) in obs() {
        sxx += w * (x - xbar) * (x - xbar);
        sxy += w * (x - xbar) * (y - ybar);
    }
    if sxx <= 0.0 {
        return Err(Error::Domain(
            "singular design: linear fit needs at least two distinct observed ages".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok(FittedOutcomeModel::Linear {
        intercept: ybar - slope * xbar,
        slope,
    })
}

pub fn predict(model: &FittedOutcomeModel, participant: &Participant) -> Result<f64> {
    predict_age(model, participant.age)
}

pub fn predict_age(model: &FittedOutcomeModel, age: u32) -> Result<f64> {
    match model {
        FittedOutcomeModel::Saturated(coef) => coef
            .get(&age)
            .copied()
            .ok_or(Error::Extrapolation { age }),
        FittedOutcomeModel::Linear { intercept, slope } => Ok(intercept + slope * f64::from(age)),
    }
}

/// Weighted mean of model predictions over every participant, observed or not.
pub fn g_computation_mean(rows: &[&Participant], model: &FittedOutcomeModel) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for p in rows {
        num += p.weight * predict(model, p)?;
        den += p.weight;
    }
    if den <= 0.0 {
        return Err(Error::Domain("total weight is zero".into()));
    }
    Ok(num / den)
}

/// Filled outcome for every row: saturated-model prediction in the positive
/// region, one mathematical-model draw per row (in row order) elsewhere.
pub fn synthesis_fill<R: Rng + ?Sized>(
    rows: &[&Participant],
    table: &ReferenceTable,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let has_positive = rows.iter().any(|p| p.positive);
    let model = if has_positive {
        Some(fit_saturated(rows, true)?)
    } else {
        None
    };
    let mut filled = Vec::with_capacity(rows.len());
    for p in rows {
        let y = if p.positive {
            // `model` is Some whenever a positive row exists.
            predict(model.as_ref().expect("fitted"), p)?
        } else {
            let pct = p
                .height_percentile
                .ok_or_else(|| Error::MissingHeight(vec![p.id.clone()]))?;
            draw_outcome(table, p.age, p.gender, pct, rng)?
        };
        filled.push(y);
    }
    Ok(filled)
}

/// Synthesis estimate: weighted mean of [`synthesis_fill`].
pub fn synthesis_point<R: Rng + ?Sized>(
    rows: &[&Participant],
    table: &ReferenceTable,
    rng: &mut R,
) -> Result<f64> {
    let filled = synthesis_fill(rows, table, rng)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, y) in rows.iter().zip(&filled) {
        num += p.weight * y;
        den += p.weight;
    }
    if den <= 0.0 {
        return Err(Error::Domain("total weight is zero".into()));
    }
    Ok(num / den)
}

/// The synthesis estimate written as a mixture of the two regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionDecomposition {
    pub positive_mean: Option<f64>,
    pub nonpositive_mean: Option<f64>,
    pub prop_nonpositive: f64,
}

impl RegionDecomposition {
    /// `E[Y|X*=1]·Pr(X*=1) + E[Y|X*=0]·Pr(X*=0)`, treating an empty region as weightless.
    pub fn combined(&self) -> f64 {
        let p = self.prop_nonpositive;
        self.positive_mean.unwrap_or(0.0) * (1.0 - p) + self.nonpositive_mean.unwrap_or(0.0) * p
    }
}

/// Region means and nonpositive weight share for a vector of per-row values.
pub fn decompose(rows: &[&Participant], values: &[f64]) -> Result<RegionDecomposition> {
    if rows.len() != values.len() {
        return Err(Error::Domain("rows and values differ in length".into()));
    }
    let (mut n1, mut d1, mut n0, mut d0) = (0.0, 0.0, 0.0, 0.0);
    for (p, &y) in rows.iter().zip(values) {
        if p.positive {
            n1 += p.weight * y;
            d1 += p.weight;
        } else {
            n0 += p.weight * y;
            d0 += p.weight;
        }
    }
    if d0 + d1 <= 0.0 {
        return Err(Error::Domain("total weight is zero".into()));
    }
    Ok(RegionDecomposition {
        positive_mean: (d1 > 0.0).then(|| n1 / d1),
        nonpositive_mean: (d0 > 0.0).then(|| n0 / d0),
        prop_nonpositive: d0 / (d0 + d1),
    })
}

/// Weighted share of participants in the nonpositive region.
pub fn prop_nonpositive(rows: &[&Participant]) -> Result<f64> {
    let (mut d0, mut total) = (0.0, 0.0);
    for p in rows {
        total += p.weight;
        if !p.positive {
            d0 += p.weight;
        }
    }
    if total <= 0.0 {
        return Err(Error::Domain("total weight is zero".into()));
    }
    Ok(d0 / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsResult {
    pub lower: f64,
    pub upper: f64,
    pub plug_lo: f64,
    pub plug_hi: f64,
    pub positive_mean: f64,
    pub prop_nonpositive: f64,
}

/// Range of the population mean when the nonpositive-region mean is only
/// known to lie in `[plug_lo, plug_hi]`.
pub fn bound_mean(positive_mean: f64, prop_nonpositive: f64, plug_lo: f64, plug_hi: f64) -> Result<BoundsResult> {
    if !(0.0..=1.0).contains(&prop_nonpositive) {
        return Err(Error::Domain(format!(
            "nonpositive share {prop_nonpositive} outside [0, 1]"
        )));
    }
    // Also rejects NaN plugs.
    if plug_lo.partial_cmp(&plug_hi).is_none_or(|o| o.is_gt()) {
        return Err(Error::Domain(format!(
            "bounds inverted: lower plug {plug_lo} exceeds upper plug {plug_hi}"
        )));
    }
    let p = prop_nonpositive;
    Ok(BoundsResult {
        lower: positive_mean * (1.0 - p) + plug_lo * p,
        upper: positive_mean * (1.0 - p) + plug_hi * p,
        plug_lo,
        plug_hi,
        positive_mean,
        prop_nonpositive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CompleteCase,
    GcompSaturated,
    GcompLinear,
    Synthesis,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::CompleteCase,
        Method::GcompSaturated,
        Method::GcompLinear,
        Method::Synthesis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CompleteCase => "complete_case",
            Method::GcompSaturated => "gcomp_saturated",
            Method::GcompLinear => "gcomp_linear",
            Method::Synthesis => "synthesis",
        }
    }

    pub fn needs_reference(self) -> bool {
        matches!(self, Method::Synthesis)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Runs one estimator on `rows`. `table` is required only for synthesis.
pub fn estimate<R: Rng + ?Sized>(
    method: Method,
    rows: &[&Participant],
    table: Option<&ReferenceTable>,
    rng: &mut R,
) -> Result<f64> {
    match method {
        Method::CompleteCase => complete_case_mean(rows),
        Method::GcompSaturated => g_computation_mean(rows, &fit_saturated(rows, false)?),
        Method::GcompLinear => g_computation_mean(rows, &fit_linear_wls(rows, false)?),
        Method::Synthesis => {
            let table = table.ok_or_else(|| Error::Config("synthesis needs a reference table".into()))?;
            synthesis_point(rows, table, rng)
        }
    }
}
