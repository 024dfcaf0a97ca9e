//! The mathematical model: published outcome distributions by age, gender
//! and height-percentile bracket, each treated as a normal distribution
//! whose mean is the published median and whose standard deviation is
//! implied by the published 90th percentile.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cohort::Gender;
use crate::error::{Error, Result};

/// Standard-normal 0.90 quantile, to 7 decimal places.
pub const Z90: f64 = 1.2815516;

/// Tolerance below which two bracket distances count as tied.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub sd: f64,
}

/// `mean = p50`, `sd = (p90 - p50) / Z90`.
pub fn params_from_percentiles(p50: f64, p90: f64) -> Result<NormalParams> {
    if !(p50.is_finite() && p90.is_finite()) || p90 <= p50 {
        return Err(Error::Domain(format!(
            "90th percentile ({p90}) must exceed median ({p50})"
        )));
    }
    Ok(NormalParams {
        mean: p50,
        sd: (p90 - p50) / Z90,
    })
}

/// The bracket closest to `percentile`; exact ties go to the lower bracket.
///
/// Panics if `brackets` is empty. `brackets` must be sorted ascending.
pub fn nearest_bracket(percentile: f64, brackets: &[f64]) -> f64 {
    brackets[nearest_bracket_index(percentile, brackets)]
}

fn nearest_bracket_index(percentile: f64, brackets: &[f64]) -> usize {
    assert!(!brackets.is_empty(), "no brackets to match against");
    let mut best = 0;
    let mut best_dist = (percentile - brackets[0]).abs();
    for (i, &b) in brackets.iter().enumerate().skip(1) {
        let d = (percentile - b).abs();
        // Ascending order plus strict improvement keeps the lower bracket on ties.
        if d < best_dist - TIE_EPS {
            best = i;
            best_dist = d;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub age: u32,
    pub gender: Gender,
    pub height_percentile: f64,
    pub p50: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub height_percentile: f64,
    pub p50: f64,
    pub p90: f64,
    pub params: NormalParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    strata: BTreeMap<(u32, Gender), Stratum>,
}

#[derive(Debug, Clone, PartialEq)]
struct Stratum {
    percentiles: Vec<f64>,
    brackets: Vec<Bracket>,
}

impl ReferenceTable {
    pub fn from_rows(rows: Vec<ReferenceRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Reference("table is empty".into()));
        }
        let mut grouped: BTreeMap<(u32, Gender), Vec<Bracket>> = BTreeMap::new();
        let mut bad = Vec::new();
        for (i, row) in rows.into_iter().enumerate() {
            if !(row.height_percentile > 0.0 && row.height_percentile < 100.0) {
                bad.push(format!(
                    "row {}: height percentile {} outside (0, 100)",
                    i + 1,
                    row.height_percentile
                ));
                continue;
            }
            match params_from_percentiles(row.p50, row.p90) {
                Ok(params) => grouped.entry((row.age, row.gender)).or_default().push(Bracket {
                    height_percentile: row.height_percentile,
                    p50: row.p50,
                    p90: row.p90,
                    params,
                }),
                Err(_) => bad.push(format!(
                    "row {}: p90 ({}) must exceed p50 ({})",
                    i + 1,
                    row.p90,
                    row.p50
                )),
            }
        }
        if !bad.is_empty() {
            return Err(Error::Reference(bad.join("; ")));
        }

        let mut strata = BTreeMap::new();
        for ((age, gender), mut brackets) in grouped {
            brackets.sort_by(|a, b| a.height_percentile.total_cmp(&b.height_percentile));
            if let Some(w) = brackets
                .windows(2)
                .find(|w| w[0].height_percentile == w[1].height_percentile)
            {
                return Err(Error::Reference(format!(
                    "duplicate key age={age} gender={gender} height_percentile={}",
                    w[0].height_percentile
                )));
            }
            let percentiles = brackets.iter().map(|b| b.height_percentile).collect();
            strata.insert((age, gender), Stratum { percentiles, brackets });
        }
        Ok(ReferenceTable { strata })
    }

    /// All (age, gender) pairs with at least one bracket.
    pub fn coverage(&self) -> BTreeSet<(u32, Gender)> {
        self.strata.keys().copied().collect()
    }

    pub fn covers(&self, age: u32, gender: Gender) -> bool {
        self.strata.contains_key(&(age, gender))
    }

    /// Fails with a coverage error on the first uncovered pair.
    pub fn require_coverage<I>(&self, pairs: I) -> Result<()>
    where
        I: IntoIterator<Item = (u32, Gender)>,
    {
        for (age, gender) in pairs {
            if !self.covers(age, gender) {
                return Err(Error::Coverage {
                    age,
                    gender: gender.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn brackets(&self, age: u32, gender: Gender) -> Result<&[Bracket]> {
        self.strata
            .get(&(age, gender))
            .map(|s| s.brackets.as_slice())
            .ok_or_else(|| Error::Coverage {
                age,
                gender: gender.to_string(),
            })
    }

    /// The bracket row matching a participant's height percentile.
    pub fn lookup(&self, age: u32, gender: Gender, height_percentile: f64) -> Result<&Bracket> {
        let stratum = self.strata.get(&(age, gender)).ok_or_else(|| Error::Coverage {
            age,
            gender: gender.to_string(),
        })?;
        Ok(&stratum.brackets[nearest_bracket_index(height_percentile, &stratum.percentiles)])
    }

    pub fn rows(&self) -> impl Iterator<Item = ReferenceRow> + '_ {
        self.strata.iter().flat_map(|(&(age, gender), s)| {
            s.brackets.iter().map(move |b| ReferenceRow {
                age,
                gender,
                height_percentile: b.height_percentile,
                p50: b.p50,
                p90: b.p90,
            })
        })
    }

    pub fn len(&self) -> usize {
        self.strata.values().map(|s| s.brackets.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }
}

/// Reads a reference table with header `age,gender,height_percentile,p50,p90`.
pub fn load_reference_table<R: Read>(input: R) -> Result<ReferenceTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    for col in ["age", "gender", "height_percentile", "p50", "p90"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Schema(format!("reference table lacks column {col:?}")));
        }
    }
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<ReferenceRow>().enumerate() {
        // Data row i sits on file line i + 2.
        rows.push(row.map_err(|e| Error::Reference(format!("line {}: {e}", i + 2)))?);
    }
    ReferenceTable::from_rows(rows)
}

/// Writes the table in canonical form: sorted by (age, gender, bracket),
/// shortest round-trip number formatting.
pub fn write_reference_table<W: Write>(table: &ReferenceTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["age", "gender", "height_percentile", "p50", "p90"])?;
    for row in table.rows() {
        w.write_record([
            row.age.to_string(),
            row.gender.to_string(),
            row.height_percentile.to_string(),
            row.p50.to_string(),
            row.p90.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<reference output>", e))?;
    Ok(())
}

/// Reference table shipped with the crate (`data/sbp_reference.csv`).
pub const BUNDLED_REFERENCE_CSV: &str = include_str!("../data/sbp_reference.csv");

pub fn bundled_reference() -> ReferenceTable {
    load_reference_table(BUNDLED_REFERENCE_CSV.as_bytes()).expect("bundled reference table is valid")
}

/// One draw from the stratum's normal distribution. Consumes exactly one
/// standard-normal variate from `rng`. Draws are not truncated.
pub fn draw_outcome<R: Rng + ?Sized>(
    table: &ReferenceTable,
    age: u32,
    gender: Gender,
    height_percentile: f64,
    rng: &mut R,
) -> Result<f64> {
    let b = table.lookup(age, gender, height_percentile)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(b.params.mean + b.params.sd * z)
}

pub fn simulate_stratum<R: Rng + ?Sized>(
    table: &ReferenceTable,
    age: u32,
    gender: Gender,
    height_percentile: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let params = table.lookup(age, gender, height_percentile)?.params;
    Ok((0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            params.mean + params.sd * z
        })
        .collect())
}
