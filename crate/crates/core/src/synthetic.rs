//! Synthetic cohorts with a known population mean, for validation.
//!
//! Outcomes are drawn from a reference table, so the mathematical model is
//! correctly specified by construction. Missingness depends on age only:
//! it is total below the cutoff and partial above it.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::cohort::{Cohort, Gender, Participant};
use crate::error::{Error, Result};
use crate::reference::{draw_outcome, ReferenceTable};
use crate::rng::RandomStream;

#[derive(Debug, Clone)]
pub struct SyntheticDesign {
    pub n: usize,
    pub age_range: (u32, u32),
    pub cutoff: u32,
    /// Probability the outcome is observed at the cutoff age; declines by
    /// `observed_slope` per year above it.
    pub observed_at_cutoff: f64,
    pub observed_slope: f64,
    /// Sampling weights are uniform on this interval, independent of everything else.
    pub weight_range: (f64, f64),
}

impl Default for SyntheticDesign {
    fn default() -> Self {
        SyntheticDesign {
            n: 2_000,
            age_range: (2, 17),
            cutoff: 8,
            observed_at_cutoff: 0.95,
            observed_slope: -0.02,
            weight_range: (0.5, 1.5),
        }
    }
}

impl SyntheticDesign {
    pub fn observed_probability(&self, age: u32) -> f64 {
        if age < self.cutoff {
            0.0
        } else {
            (self.observed_at_cutoff + self.observed_slope * f64::from(age - self.cutoff)).clamp(0.0, 1.0)
        }
    }
}

/// Mass of a uniform height percentile on [0, 100] assigned to each bracket
/// under nearest-bracket matching.
fn bracket_masses(brackets: &[f64]) -> Vec<f64> {
    let k = brackets.len();
    (0..k)
        .map(|i| {
            let lo = if i == 0 { 0.0 } else { 0.5 * (brackets[i - 1] + brackets[i]) };
            let hi = if i + 1 == k { 100.0 } else { 0.5 * (brackets[i] + brackets[i + 1]) };
            (hi.min(100.0) - lo.max(0.0)).max(0.0) / 100.0
        })
        .collect()
}

/// Population mean of the outcome under `design`: ages uniform over the
/// range, genders equally likely, height percentiles uniform.
pub fn population_mean(table: &ReferenceTable, design: &SyntheticDesign) -> Result<f64> {
    let (lo, hi) = design.age_range;
    let n_ages = f64::from(hi - lo + 1);
    let mut mu = 0.0;
    for age in lo..=hi {
        for gender in [Gender::Male, Gender::Female] {
            let brackets = table.brackets(age, gender)?;
            let pcts: Vec<f64> = brackets.iter().map(|b| b.height_percentile).collect();
            let stratum: f64 = bracket_masses(&pcts)
                .iter()
                .zip(brackets)
                .map(|(m, b)| m * b.params.mean)
                .sum();
            mu += stratum / (2.0 * n_ages);
        }
    }
    Ok(mu)
}

/// Draws a cohort. Height percentiles are set directly; heights are a
/// monotone function of the percentile within each (age, gender) so the
/// empirical percentile ranks agree with the generating ones.
pub fn generate(table: &ReferenceTable, design: &SyntheticDesign, seed: u64) -> Result<Cohort> {
    let mut rng = RandomStream::new(seed);
    let (lo, hi) = design.age_range;
    let mut participants = Vec::with_capacity(design.n);
    for i in 0..design.n {
        let age = rng.random_range(lo..=hi);
        let gender = if rng.random_bool(0.5) { Gender::Male } else { Gender::Female };
        let pct: f64 = rng.random_range(0.0..100.0);
        let y = draw_outcome(table, age, gender, pct, &mut rng)?;
        let observed = rng.random_bool(design.observed_probability(age));
        let weight = rng.random_range(design.weight_range.0..=design.weight_range.1);
        participants.push(Participant {
            id: format!("S{i:06}"),
            age,
            gender,
            height_cm: Some(80.0 + 6.0 * f64::from(age) + 0.3 * (pct - 50.0)),
            height_percentile: Some(pct),
            outcome: observed.then_some(y),
            positive: age >= design.cutoff,
            weight,
        });
    }
    Cohort::new(participants, design.cutoff, design.age_range)
}

/// Writes `cohort` in the default column layout. Observed outcomes become
/// three integer readings around the outcome; missing outcomes get zero or
/// one reading.
pub fn write_cohort_csv<W: Write>(cohort: &Cohort, out: W, seed: u64) -> Result<()> {
    let mut rng = RandomStream::new(seed);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "age", "gender", "height_cm", "reading1", "reading2", "reading3", "weight"])?;
    for p in cohort.participants() {
        let mut readings = [String::new(), String::new(), String::new()];
        match p.outcome {
            Some(y) => {
                for r in &mut readings {
                    let z: f64 = rng.sample(StandardNormal);
                    *r = format!("{}", (y + 2.0 * z).round());
                }
            }
            None if p.positive && rng.random_bool(0.3) => {
                readings[0] = format!("{}", (100.0 + 10.0 * rng.sample::<f64, _>(StandardNormal)).round());
            }
            None => {}
        }
        let height = p
            .height_cm
            .map(|h| format!("{:.1}", h))
            .unwrap_or_default();
        w.write_record([
            p.id.as_str(),
            &p.age.to_string(),
            p.gender.as_str(),
            &height,
            &readings[0],
            &readings[1],
            &readings[2],
            &format!("{:.3}", p.weight * 1000.0),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<cohort output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::bundled_reference;

    #[test]
    fn masses_sum_to_one() {
        let m = bracket_masses(&[5.0, 10.0, 25.0, 50.0, 75.0, 90.0, 95.0]);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((m[0] - 0.075).abs() < 1e-12);
        assert!((m[3] - 0.25).abs() < 1e-12);
        assert_eq!(bracket_masses(&[50.0]), vec![1.0]);
    }

    #[test]
    fn generated_cohort_respects_design() {
        let table = bundled_reference();
        let design = SyntheticDesign { n: 3000, ..SyntheticDesign::default() };
        let c = generate(&table, &design, 1).unwrap();
        assert_eq!(c.len(), 3000);
        assert!(c
            .participants()
            .iter()
            .all(|p| p.positive || !p.observed()));
        let pos = c.participants().iter().filter(|p| p.positive).count();
        let obs = c.participants().iter().filter(|p| p.observed()).count();
        assert!(obs as f64 / pos as f64 > 0.8);
    }

    #[test]
    fn population_mean_matches_large_sample() {
        // Fully observed, unit weights: the sample mean over 200,000 draws
        // has SE ≈ 11/√2e5 ≈ 0.025.
        let table = bundled_reference();
        let design = SyntheticDesign {
            n: 200_000,
            cutoff: 0,
            observed_at_cutoff: 1.0,
            observed_slope: 0.0,
            weight_range: (1.0, 1.0),
            ..SyntheticDesign::default()
        };
        let mu = population_mean(&table, &design).unwrap();
        let c = generate(&table, &design, 9).unwrap();
        let mean = c.participants().iter().map(|p| p.outcome.unwrap()).sum::<f64>() / c.len() as f64;
        assert!((mean - mu).abs() < 0.1, "{mean} vs {mu}");
    }
}
