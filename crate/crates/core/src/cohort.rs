//! Cohort ingestion: parsing the delimited participant file, deriving the
//! outcome from repeated readings, assigning the positivity region, and
//! computing within-stratum height percentiles.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError};

/// Maximum number of outcome readings per participant.
pub const MAX_READINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the input file before filtering and derivation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub id: String,
    pub age: u32,
    pub gender: Gender,
    pub height_cm: Option<f64>,
    pub height_percentile: Option<f64>,
    pub readings: Vec<f64>,
    pub sampling_weight: f64,
}

/// An analysis-ready cohort member.
///
/// `observed` is not stored: it is defined as `outcome.is_some()`, so the
/// observed flag and outcome presence cannot disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub id: String,
    pub age: u32,
    pub gender: Gender,
    pub height_cm: Option<f64>,
    pub height_percentile: Option<f64>,
    pub outcome: Option<f64>,
    /// Age at or above the positivity cutoff.
    pub positive: bool,
    pub weight: f64,
}

impl Participant {
    #[inline]
    pub fn observed(&self) -> bool {
        self.outcome.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Cohort {
    participants: Vec<Participant>,
    cutoff: u32,
    age_range: (u32, u32),
}

impl Cohort {
    /// Builds a cohort, re-deriving each participant's region flag from `cutoff`.
    pub fn new(mut participants: Vec<Participant>, cutoff: u32, age_range: (u32, u32)) -> Result<Self> {
        if age_range.0 > age_range.1 {
            return Err(Error::Config(format!(
                "age range [{}, {}] is inverted",
                age_range.0, age_range.1
            )));
        }
        if participants.is_empty() {
            return Err(Error::EmptyCohort);
        }
        let mut total = 0.0;
        for p in &mut participants {
            if p.age < age_range.0 || p.age > age_range.1 {
                return Err(Error::Domain(format!(
                    "participant {} has age {} outside [{}, {}]",
                    p.id, p.age, age_range.0, age_range.1
                )));
            }
            if !(p.weight.is_finite() && p.weight > 0.0) {
                return Err(Error::Domain(format!(
                    "participant {} has non-positive weight {}",
                    p.id, p.weight
                )));
            }
            p.positive = p.age >= cutoff;
            total += p.weight;
        }
        if total <= 0.0 {
            return Err(Error::Domain("cohort has zero total weight".into()));
        }
        Ok(Cohort {
            participants,
            cutoff,
            age_range,
        })
    }

    pub fn participants(&self) -> &[Participant] {
        &self.participants
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn age_range(&self) -> (u32, u32) {
        self.age_range
    }

    pub fn len(&self) -> usize {
        self.participants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.participants.iter().map(|p| p.weight).sum()
    }

    /// Returns a copy with every sampling weight multiplied by `factor`.
    pub fn with_scaled_weights(&self, factor: f64) -> Result<Self> {
        let participants = self
            .participants
            .iter()
            .map(|p| Participant {
                weight: p.weight * factor,
                ..p.clone()
            })
            .collect();
        Cohort::new(participants, self.cutoff, self.age_range)
    }

    /// Distinct ages present, ascending.
    pub fn ages(&self) -> Vec<u32> {
        let mut ages: Vec<u32> = self.participants.iter().map(|p| p.age).collect();
        ages.sort_unstable();
        ages.dedup();
        ages
    }

    /// True when every participant carries a height percentile.
    pub fn has_height_percentiles(&self) -> bool {
        self.participants.iter().all(|p| p.height_percentile.is_some())
    }
}

/// Binds logical fields to column names in the input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub id: String,
    pub age: String,
    pub gender: String,
    pub height: String,
    /// Optional column of precomputed height percentiles; when set, these
    /// take precedence over the empirical computation.
    pub height_percentile: Option<String>,
    pub readings: Vec<String>,
    pub weight: String,
    pub male_codes: Vec<String>,
    pub female_codes: Vec<String>,
    pub delimiter: char,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            id: "id".into(),
            age: "age".into(),
            gender: "gender".into(),
            height: "height_cm".into(),
            height_percentile: None,
            readings: vec!["reading1".into(), "reading2".into(), "reading3".into()],
            weight: "weight".into(),
            male_codes: vec!["male".into(), "m".into(), "1".into()],
            female_codes: vec!["female".into(), "f".into(), "2".into()],
            delimiter: ',',
        }
    }
}

impl ColumnMapping {
    pub fn parse_gender_code(&self, raw: &str) -> Option<Gender> {
        let raw = raw.trim();
        if self.male_codes.iter().any(|c| c.eq_ignore_ascii_case(raw)) {
            Some(Gender::Male)
        } else if self.female_codes.iter().any(|c| c.eq_ignore_ascii_case(raw)) {
            Some(Gender::Female)
        } else {
            None
        }
    }
}

/// Counts produced while reading a cohort file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_retained: usize,
    pub dropped_out_of_range: usize,
    pub dropped_zero_weight: usize,
    pub missing_height: usize,
    pub observed: usize,
    pub missing_outcome: usize,
    pub observed_below_cutoff: usize,
}

/// Mean of the available readings when at least two are present.
///
/// Readings are summed in sorted order so the result does not depend on
/// the order they were recorded in.
pub fn derive_outcome(readings: &[f64]) -> Option<f64> {
    if readings.len() < 2 {
        return None;
    }
    let mut sorted = readings.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted.iter().sum::<f64>() / sorted.len() as f64)
}

fn is_blank(s: &str) -> bool {
    let s = s.trim();
    s.is_empty() || s == "." || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan")
}

fn parse_optional(s: &str, field: &str) -> std::result::Result<Option<f64>, String> {
    if is_blank(s) {
        return Ok(None);
    }
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| format!("{field}: non-numeric value {s:?}"))
}

fn parse_required(s: &str, field: &str) -> std::result::Result<f64, String> {
    parse_optional(s, field)?.ok_or_else(|| format!("{field}: missing value"))
}

struct ColumnIndex {
    id: usize,
    age: usize,
    gender: usize,
    height: usize,
    height_percentile: Option<usize>,
    readings: Vec<usize>,
    weight: usize,
}

fn locate_columns(headers: &csv::StringRecord, mapping: &ColumnMapping) -> Result<ColumnIndex> {
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not found in header")))
    };
    if mapping.readings.is_empty() || mapping.readings.len() > MAX_READINGS {
        return Err(Error::Schema(format!(
            "between 1 and {MAX_READINGS} reading columns required, got {}",
            mapping.readings.len()
        )));
    }
    Ok(ColumnIndex {
        id: find(&mapping.id)?,
        age: find(&mapping.age)?,
        gender: find(&mapping.gender)?,
        height: find(&mapping.height)?,
        height_percentile: mapping.height_percentile.as_deref().map(find).transpose()?,
        readings: mapping
            .readings
            .iter()
            .map(|r| find(r))
            .collect::<Result<_>>()?,
        weight: find(&mapping.weight)?,
    })
}

fn parse_record(
    record: &csv::StringRecord,
    cols: &ColumnIndex,
    mapping: &ColumnMapping,
) -> std::result::Result<RawRecord, String> {
    let field = |i: usize| record.get(i).unwrap_or("");

    let id = field(cols.id).trim().to_string();
    if id.is_empty() {
        return Err("id: missing value".into());
    }
    let age = parse_required(field(cols.age), "age")?;
    if age < 0.0 {
        return Err(format!("age: negative value {age}"));
    }
    let gender = mapping
        .parse_gender_code(field(cols.gender))
        .ok_or_else(|| format!("gender: unrecognised code {:?}", field(cols.gender)))?;
    let height_cm = parse_optional(field(cols.height), "height")?;
    let height_percentile = match cols.height_percentile {
        Some(i) => {
            let v = parse_optional(field(i), "height_percentile")?;
            if let Some(v) = v {
                if !(0.0..=100.0).contains(&v) {
                    return Err(format!("height_percentile: {v} outside [0, 100]"));
                }
            }
            v
        }
        None => None,
    };
    let mut readings = Vec::with_capacity(cols.readings.len());
    for &i in &cols.readings {
        if let Some(v) = parse_optional(field(i), "reading")? {
            readings.push(v);
        }
    }
    let sampling_weight = parse_required(field(cols.weight), "weight")?;
    if sampling_weight < 0.0 {
        return Err(format!("weight: negative value {sampling_weight}"));
    }
    Ok(RawRecord {
        id,
        age: age.floor() as u32,
        gender,
        height_cm,
        height_percentile,
        readings,
        sampling_weight,
    })
}

/// Reads a cohort from delimited text.
///
/// Rows outside `age_range` and rows with zero sampling weight are dropped
/// and counted. Any malformed row aborts the read; all malformed rows are
/// reported together with their line numbers.
pub fn parse_cohort<R: Read>(
    input: R,
    mapping: &ColumnMapping,
    cutoff: u32,
    age_range: (u32, u32),
) -> Result<(Cohort, IngestReport)> {
    if !mapping.delimiter.is_ascii() {
        return Err(Error::Config(format!(
            "delimiter {:?} must be a single ASCII character",
            mapping.delimiter
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(mapping.delimiter as u8)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let cols = locate_columns(&headers, mapping)?;

    let mut report = IngestReport::default();
    let mut participants = Vec::new();
    let mut row_errors = Vec::new();
    for record in reader.records() {
        let record = record?;
        report.rows_read += 1;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let raw = match parse_record(&record, &cols, mapping) {
            Ok(raw) => raw,
            Err(message) => {
                row_errors.push(RowError { line, message });
                continue;
            }
        };
        if raw.age < age_range.0 || raw.age > age_range.1 {
            report.dropped_out_of_range += 1;
            continue;
        }
        if raw.sampling_weight == 0.0 {
            report.dropped_zero_weight += 1;
            continue;
        }
        let outcome = derive_outcome(&raw.readings);
        let positive = raw.age >= cutoff;
        if raw.height_cm.is_none() {
            report.missing_height += 1;
        }
        match (outcome.is_some(), positive) {
            (true, true) => report.observed += 1,
            (true, false) => {
                report.observed += 1;
                report.observed_below_cutoff += 1;
            }
            (false, _) => report.missing_outcome += 1,
        }
        participants.push(Participant {
            id: raw.id,
            age: raw.age,
            gender: raw.gender,
            height_cm: raw.height_cm,
            height_percentile: raw.height_percentile,
            outcome,
            positive,
            weight: raw.sampling_weight,
        });
    }
    if !row_errors.is_empty() {
        return Err(Error::Rows(row_errors));
    }
    report.rows_retained = participants.len();
    let cohort = Cohort::new(participants, cutoff, age_range)?;
    Ok((cohort, report))
}

/// Replaces every participant's height percentile with its weighted
/// midpoint rank within the participant's (age, gender) stratum:
/// `100 * (weight strictly shorter + half the weight at the same height) / stratum weight`.
pub fn empirical_height_percentile(cohort: &Cohort) -> Result<Cohort> {
    let missing: Vec<String> = cohort
        .participants
        .iter()
        .filter(|p| p.height_cm.is_none())
        .map(|p| p.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingHeight(missing));
    }

    let mut strata: BTreeMap<(u32, Gender), Vec<usize>> = BTreeMap::new();
    for (i, p) in cohort.participants.iter().enumerate() {
        strata.entry((p.age, p.gender)).or_default().push(i);
    }

    let mut out = cohort.participants.clone();
    for ((age, gender), mut idx) in strata {
        let height = |i: usize| cohort.participants[i].height_cm.unwrap_or_default();
        let total: f64 = idx.iter().map(|&i| cohort.participants[i].weight).sum();
        if total <= 0.0 {
            return Err(Error::ZeroStratumWeight {
                age,
                gender: gender.to_string(),
            });
        }
        idx.sort_by(|&a, &b| height(a).total_cmp(&height(b)));

        let mut below = 0.0;
        let mut start = 0;
        while start < idx.len() {
            let h = height(idx[start]);
            let mut end = start;
            let mut tied = 0.0;
            while end < idx.len() && height(idx[end]) == h {
                tied += cohort.participants[idx[end]].weight;
                end += 1;
            }
            let pct = (100.0 * (below + 0.5 * tied) / total).clamp(0.0, 100.0);
            for &i in &idx[start..end] {
                out[i].height_percentile = Some(pct);
            }
            below += tied;
            start = end;
        }
    }
    Cohort::new(out, cohort.cutoff, cohort.age_range)
}

/// Returns the cohort unchanged if all height percentiles are present
/// (e.g. supplied by a mapped column), otherwise computes them empirically.
pub fn ensure_height_percentiles(cohort: &Cohort) -> Result<Cohort> {
    if cohort.has_height_percentiles() {
        Ok(cohort.clone())
    } else {
        empirical_height_percentile(cohort)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessRow {
    pub age: u32,
    pub n: usize,
    /// Share of total sampling weight at this age, in percent.
    pub weighted_pct: f64,
    pub n_missing: usize,
    /// Unweighted share of this age's participants missing the outcome, in percent.
    pub pct_missing: f64,
}

/// Age distribution and outcome missingness, one row per age present.
pub fn missingness_table(cohort: &Cohort) -> Vec<MissingnessRow> {
    let total = cohort.total_weight();
    let mut by_age: BTreeMap<u32, (usize, f64, usize)> = BTreeMap::new();
    for p in &cohort.participants {
        let e = by_age.entry(p.age).or_insert((0, 0.0, 0));
        e.0 += 1;
        e.1 += p.weight;
        if !p.observed() {
            e.2 += 1;
        }
    }
    by_age
        .into_iter()
        .map(|(age, (n, w, n_missing))| MissingnessRow {
            age,
            n,
            weighted_pct: 100.0 * w / total,
            n_missing,
            pct_missing: 100.0 * n_missing as f64 / n as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn person(id: &str, age: u32, gender: Gender, height: f64, weight: f64) -> Participant {
        Participant {
            id: id.into(),
            age,
            gender,
            height_cm: Some(height),
            height_percentile: None,
            outcome: None,
            positive: false,
            weight,
        }
    }

    fn cohort(ps: Vec<Participant>) -> Cohort {
        Cohort::new(ps, 8, (2, 17)).unwrap()
    }

    #[test]
    fn derive_outcome_cases() {
        assert_eq!(derive_outcome(&[100.0, 102.0, 104.0]), Some(102.0));
        assert_eq!(derive_outcome(&[110.0]), None);
        assert_eq!(derive_outcome(&[]), None);
        assert_eq!(derive_outcome(&[100.0, 101.0]), Some(100.5));
    }

    const CSV: &str = "\
id,age,gender,height_cm,reading1,reading2,reading3,weight
a,5,female,110,,,,1000
b,20,male,170,120,122,,500
c,9,1,135,104,106,108,2000
d,12,2,150,110,,,1500
e,8.7,male,,98,100,,0
";

    #[test]
    fn parse_assigns_regions_and_drops() {
        let (c, rep) = parse_cohort(CSV.as_bytes(), &ColumnMapping::default(), 8, (2, 17)).unwrap();
        assert_eq!(rep.rows_read, 5);
        assert_eq!(rep.dropped_out_of_range, 1);
        assert_eq!(rep.dropped_zero_weight, 1);
        assert_eq!(c.len(), 3);

        let a = &c.participants()[0];
        assert!(!a.positive);
        assert!(!a.observed());

        let cc = &c.participants()[1];
        assert_eq!(cc.gender, Gender::Male);
        assert!(cc.positive);
        assert_eq!(cc.outcome, Some(106.0));

        // One reading is not enough.
        assert_eq!(c.participants()[2].outcome, None);
        assert_eq!(rep.observed, 1);
        assert_eq!(rep.missing_outcome, 2);
    }

    #[test]
    fn age_is_floored() {
        let csv = "id,age,gender,height_cm,reading1,reading2,reading3,weight\nx,8.9,male,130,1,2,3,1\n";
        let (c, _) = parse_cohort(csv.as_bytes(), &ColumnMapping::default(), 8, (2, 17)).unwrap();
        assert_eq!(c.participants()[0].age, 8);
        assert!(c.participants()[0].positive);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let csv = "id,age,gender,height_cm,reading1,reading2,reading3,weight\n\
                   a,5,female,110,,,,1000\n\
                   b,x,male,110,,,,1000\n\
                   c,6,male,110,,,,heavy\n";
        let err = parse_cohort(csv.as_bytes(), &ColumnMapping::default(), 8, (2, 17)).unwrap_err();
        match err {
            Error::Rows(rows) => {
                assert_eq!(rows.len(), 2);
                assert_eq!(rows[0].line, 3);
                assert!(rows[0].message.contains("age"));
                assert_eq!(rows[1].line, 4);
                assert!(rows[1].message.contains("weight"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "id,age,gender,reading1,reading2,reading3,weight\na,5,female,,,,1\n";
        let err = parse_cohort(csv.as_bytes(), &ColumnMapping::default(), 8, (2, 17)).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("height_cm")));
    }

    #[test]
    fn custom_mapping_and_delimiter() {
        let csv = "SEQN;AGE;SEX;HT;S1;S2;W;PCT\n1;10;M;140;100;104;3.5;40\n";
        let mapping = ColumnMapping {
            id: "SEQN".into(),
            age: "AGE".into(),
            gender: "SEX".into(),
            height: "HT".into(),
            height_percentile: Some("PCT".into()),
            readings: vec!["S1".into(), "S2".into()],
            weight: "W".into(),
            delimiter: ';',
            ..ColumnMapping::default()
        };
        let (c, _) = parse_cohort(csv.as_bytes(), &mapping, 8, (2, 17)).unwrap();
        let p = &c.participants()[0];
        assert_eq!(p.outcome, Some(102.0));
        assert_eq!(p.height_percentile, Some(40.0));
        assert!(c.has_height_percentiles());
    }

    #[test]
    fn too_many_reading_columns_rejected() {
        let mapping = ColumnMapping {
            readings: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            ..ColumnMapping::default()
        };
        let csv = "id,age,gender,height_cm,a,b,c,d,weight\n";
        assert!(matches!(
            parse_cohort(csv.as_bytes(), &mapping, 8, (2, 17)),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn empty_after_filter_is_error() {
        let csv = "id,age,gender,height_cm,reading1,reading2,reading3,weight\na,30,female,110,,,,1\n";
        assert!(matches!(
            parse_cohort(csv.as_bytes(), &ColumnMapping::default(), 8, (2, 17)),
            Err(Error::EmptyCohort)
        ));
    }

    #[test]
    fn height_percentile_single() {
        let c = cohort(vec![person("a", 9, Gender::Male, 130.0, 2.0)]);
        let c = empirical_height_percentile(&c).unwrap();
        assert_eq!(c.participants()[0].height_percentile, Some(50.0));
    }

    #[test]
    fn height_percentile_two_equal_weight() {
        let c = cohort(vec![
            person("tall", 9, Gender::Male, 120.0, 1.0),
            person("short", 9, Gender::Male, 100.0, 1.0),
        ]);
        let c = empirical_height_percentile(&c).unwrap();
        assert_eq!(c.participants()[0].height_percentile, Some(75.0));
        assert_eq!(c.participants()[1].height_percentile, Some(25.0));
    }

    #[test]
    fn height_percentile_all_tied() {
        let c = cohort(vec![
            person("a", 9, Gender::Female, 130.0, 1.0),
            person("b", 9, Gender::Female, 130.0, 1.0),
            person("c", 9, Gender::Female, 130.0, 1.0),
        ]);
        let c = empirical_height_percentile(&c).unwrap();
        for p in c.participants() {
            assert_eq!(p.height_percentile, Some(50.0));
        }
    }

    #[test]
    fn height_percentile_is_per_stratum() {
        let c = cohort(vec![
            person("a", 9, Gender::Female, 100.0, 1.0),
            person("b", 9, Gender::Male, 200.0, 3.0),
            person("c", 10, Gender::Female, 50.0, 1.0),
        ]);
        let c = empirical_height_percentile(&c).unwrap();
        assert!(c.participants().iter().all(|p| p.height_percentile == Some(50.0)));
    }

    #[test]
    fn height_percentile_requires_heights() {
        let mut p = person("nohgt", 3, Gender::Male, 0.0, 1.0);
        p.height_cm = None;
        let c = cohort(vec![p, person("ok", 3, Gender::Male, 90.0, 1.0)]);
        match empirical_height_percentile(&c) {
            Err(Error::MissingHeight(ids)) => assert_eq!(ids, vec!["nohgt".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missingness_no_missing() {
        let mut ps = vec![
            person("a", 9, Gender::Male, 1.0, 1.0),
            person("b", 10, Gender::Male, 1.0, 3.0),
        ];
        for p in &mut ps {
            p.outcome = Some(100.0);
        }
        let rows = missingness_table(&cohort(ps));
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.n_missing == 0 && r.pct_missing == 0.0));
        assert_eq!(rows[0].weighted_pct, 25.0);
        assert_eq!(rows[1].weighted_pct, 75.0);
    }

    #[test]
    fn cohort_rejects_out_of_range_age() {
        let err = Cohort::new(vec![person("a", 30, Gender::Male, 1.0, 1.0)], 8, (2, 17));
        assert!(err.is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn derive_outcome_permutation_invariant(
                v in prop::collection::vec(60.0f64..160.0, 0..=3),
                seed in 0usize..6,
            ) {
                let mut w = v.clone();
                if w.len() > 1 {
                    let k = seed % w.len();
                    w.rotate_left(k);
                }
                if seed % 2 == 1 {
                    w.reverse();
                }
                prop_assert_eq!(derive_outcome(&v).map(f64::to_bits), derive_outcome(&w).map(f64::to_bits));
            }

            #[test]
            fn percentile_invariant_to_weight_scaling(
                rows in prop::collection::vec((2u32..5, any::<bool>(), 80.0f64..140.0, 0.1f64..10.0), 1..30),
                scale in 0.01f64..1000.0,
            ) {
                let ps: Vec<Participant> = rows.iter().enumerate().map(|(i, &(age, male, h, w))| {
                    let g = if male { Gender::Male } else { Gender::Female };
                    // Coarse heights so ties occur.
                    person(&i.to_string(), age, g, (h / 5.0).round() * 5.0, w)
                }).collect();
                let base = empirical_height_percentile(&cohort(ps.clone())).unwrap();
                let scaled = empirical_height_percentile(&cohort(ps).with_scaled_weights(scale).unwrap()).unwrap();
                for (a, b) in base.participants().iter().zip(scaled.participants()) {
                    let (a, b) = (a.height_percentile.unwrap(), b.height_percentile.unwrap());
                    prop_assert!((0.0..=100.0).contains(&a));
                    prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
                }
            }

            #[test]
            fn weighted_pct_sums_to_100(
                rows in prop::collection::vec((2u32..=17, 0.1f64..10.0, any::<bool>()), 1..60),
            ) {
                let ps: Vec<Participant> = rows.iter().enumerate().map(|(i, &(age, w, obs))| {
                    let mut p = person(&i.to_string(), age, Gender::Female, 100.0, w);
                    if obs { p.outcome = Some(100.0); }
                    p
                }).collect();
                let total: f64 = missingness_table(&cohort(ps)).iter().map(|r| r.weighted_pct).sum();
                prop_assert!((total - 100.0).abs() <= 0.1);
            }
        }
    }
}
