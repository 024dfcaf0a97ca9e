//! Seeded nonparametric bootstrap with percentile summaries.
//!
//! Replicate `r` always uses substream `(seed, domain, r)`, so results are
//! identical whether replicates run on one thread or many.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Participant;
use crate::error::{Error, Result};
use crate::rng::{Domain, RandomStream};

pub const DEFAULT_REPLICATES: usize = 20_000;

/// Failure share above which a warning is attached.
pub const WARN_FAILURE_SHARE: f64 = 0.01;
/// Failure share above which the bootstrap is rejected.
pub const MAX_FAILURE_SHARE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub replicates: usize,
    pub seed: u64,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
}

impl Default for ResamplePlan {
    fn default() -> Self {
        ResamplePlan {
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            workers: 0,
        }
    }
}

impl ResamplePlan {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws `rows.len()` rows uniformly with replacement. Sampling weights
/// travel with the rows but do not affect selection.
pub fn resample_with_replacement<'a, R: Rng + ?Sized>(
    rows: &[&'a Participant],
    rng: &mut R,
) -> Vec<&'a Participant> {
    let n = rows.len();
    (0..n).map(|_| rows[rng.random_range(0..n)]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutput<T> {
    /// Successful replicate values in replicate order.
    pub values: Vec<T>,
    pub failures: usize,
    pub first_failure: Option<String>,
    pub warning: Option<String>,
}

impl<T> BootstrapOutput<T> {
    pub fn attempted(&self) -> usize {
        self.values.len() + self.failures
    }
}

fn run_replicates<T, F>(plan: &ResamplePlan, work: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if plan.workers == 1 {
        return Ok((0..plan.replicates).map(&work).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..plan.replicates).into_par_iter().map(&work).collect()))
}

/// Resamples `rows` `plan.replicates` times and applies `estimator` to each
/// resample with the replicate's own random stream.
///
/// The estimator must succeed on the full data. Replicates whose estimator
/// fails are dropped and counted; more than 10% failures is an error.
pub fn bootstrap<'a, T, F>(
    rows: &[&'a Participant],
    estimator: F,
    plan: &ResamplePlan,
    domain: Domain,
) -> Result<BootstrapOutput<T>>
where
    T: Send,
    F: Fn(&[&'a Participant], &mut RandomStream) -> Result<T> + Sync,
{
    plan.validate()?;
    if rows.is_empty() {
        return Err(Error::EmptyCohort);
    }
    estimator(rows, &mut RandomStream::substream(plan.seed, Domain::FullSample, 0))?;

    let results = run_replicates(plan, |r| {
        let mut rng = RandomStream::substream(plan.seed, domain, r as u64);
        let sample = resample_with_replacement(rows, &mut rng);
        estimator(&sample, &mut rng)
    })?;

    let mut values = Vec::with_capacity(results.len());
    let mut failures = 0;
    let mut first_failure = None;
    for res in results {
        match res {
            Ok(v) => values.push(v),
            Err(e) => {
                failures += 1;
                first_failure.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let share = failures as f64 / plan.replicates as f64;
    if share > MAX_FAILURE_SHARE {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: plan.replicates,
            first: first_failure.unwrap_or_default(),
        });
    }
    let warning = (share > WARN_FAILURE_SHARE).then(|| {
        format!(
            "{failures} of {} replicates failed and were excluded",
            plan.replicates
        )
    });
    Ok(BootstrapOutput {
        values,
        failures,
        first_failure,
        warning,
    })
}

/// Quantile by linear interpolation between order statistics at 1-based
/// rank `1 + q(n - 1)`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("percentile of empty input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, q)
}

fn percentile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile {q} outside [0, 1]")));
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub median: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    /// Sample standard deviation (n - 1 denominator; 0 for a single value).
    pub sd: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Result<ReplicateSummary> {
    if values.is_empty() {
        return Err(Error::Domain("cannot summarise zero replicates".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(ReplicateSummary {
        median: percentile_sorted(&sorted, 0.5)?,
        p2_5: percentile_sorted(&sorted, 0.025)?,
        p97_5: percentile_sorted(&sorted, 0.975)?,
        sd,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Gender;

    fn p(i: usize, y: f64) -> Participant {
        Participant {
            id: i.to_string(),
            age: 10,
            gender: Gender::Male,
            height_cm: None,
            height_percentile: None,
            outcome: Some(y),
            positive: true,
            weight: 1.0 + i as f64,
        }
    }

    #[test]
    fn percentile_cases() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&v, 0.975).unwrap() - 97.525).abs() < 1e-12);
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 1.0).unwrap(), 100.0);
        assert!(percentile(&[], 0.5).is_err());
        assert!(percentile(&[1.0], 1.5).is_err());
    }

    #[test]
    fn summarize_constant() {
        let s = summarize(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((s.median, s.p2_5, s.p97_5, s.sd, s.n), (5.0, 5.0, 5.0, 0.0, 3));
    }

    #[test]
    fn summarize_symmetric() {
        let s = summarize(&[-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.median, 0.0);
        assert_eq!(s.p2_5, -s.p97_5);
    }

    #[test]
    fn resample_single_row() {
        let ps = [p(0, 100.0)];
        let rows: Vec<&Participant> = ps.iter().collect();
        let s = resample_with_replacement(&rows, &mut RandomStream::new(9));
        assert_eq!(s.len(), 1);
        assert!(std::ptr::eq(s[0], &ps[0]));
    }

    #[test]
    fn resample_reproducible() {
        let ps: Vec<Participant> = (0..20).map(|i| p(i, i as f64)).collect();
        let rows: Vec<&Participant> = ps.iter().collect();
        let ids = |seed| -> Vec<String> {
            resample_with_replacement(&rows, &mut RandomStream::new(seed))
                .iter()
                .map(|p| p.id.clone())
                .collect()
        };
        assert_eq!(ids(4), ids(4));
        assert_ne!(ids(4), ids(5));
    }

    #[test]
    fn resample_inclusion_frequency() {
        // Each of 5 slots picks row k with probability 0.2; over 10,000
        // resamples the per-slot frequency has SE √(0.16/10⁴) = 0.004.
        let ps: Vec<Participant> = (0..5).map(|i| p(i, 0.0)).collect();
        let rows: Vec<&Participant> = ps.iter().collect();
        let mut counts = [[0usize; 5]; 5];
        let mut rng = RandomStream::new(11);
        let reps = 10_000;
        for _ in 0..reps {
            for (slot, q) in resample_with_replacement(&rows, &mut rng).iter().enumerate() {
                counts[slot][q.id.parse::<usize>().unwrap()] += 1;
            }
        }
        for slot in counts {
            for c in slot {
                let f = c as f64 / reps as f64;
                assert!((f - 0.2).abs() < 0.012, "frequency {f}");
            }
        }
    }

    #[test]
    fn bootstrap_constant_outcome() {
        let ps: Vec<Participant> = (0..30).map(|i| p(i, 101.0)).collect();
        let rows: Vec<&Participant> = ps.iter().collect();
        let plan = ResamplePlan { replicates: 50, seed: 1, workers: 1 };
        let out = bootstrap(&rows, |s, _| crate::estimators::complete_case_mean(s), &plan, Domain::Estimation).unwrap();
        assert_eq!(out.values.len(), 50);
        assert!(out.values.iter().all(|&v| (v - 101.0).abs() < 1e-12));
        assert_eq!(out.failures, 0);
    }

    #[test]
    fn bootstrap_same_seed_same_values_any_workers() {
        let ps: Vec<Participant> = (0..40).map(|i| p(i, 90.0 + i as f64)).collect();
        let rows: Vec<&Participant> = ps.iter().collect();
        let run = |workers| {
            let plan = ResamplePlan { replicates: 200, seed: 77, workers };
            bootstrap(&rows, |s, _| crate::estimators::complete_case_mean(s), &plan, Domain::Estimation)
                .unwrap()
                .values
        };
        let a = run(1);
        assert_eq!(a, run(1));
        assert_eq!(a, run(4));
    }

    #[test]
    fn bootstrap_failure_policy() {
        let ps: Vec<Participant> = (0..10).map(|i| p(i, i as f64)).collect();
        let rows: Vec<&Participant> = ps.iter().collect();
        let plan = ResamplePlan { replicates: 1000, seed: 3, workers: 1 };

        // Fails when row 0 is absent: probability 0.9^10 ≈ 0.35 → fatal.
        let needs_row0 = |s: &[&Participant], _: &mut RandomStream| {
            if s.iter().any(|q| q.id == "0") { Ok(1.0) } else { Err(Error::Domain("row 0 missing".into())) }
        };
        assert!(matches!(
            bootstrap(&rows, needs_row0, &plan, Domain::Estimation),
            Err(Error::TooManyFailures { .. })
        ));

        // Fails when rows 0 and 1 are both absent: 0.8^10 ≈ 0.107 → still fatal.
        // Fails when rows 0, 1 and 2 are all absent: 0.7^10 ≈ 0.028 → warning only.
        let needs_any3 = |s: &[&Participant], _: &mut RandomStream| {
            if s.iter().any(|q| ["0", "1", "2"].contains(&q.id.as_str())) {
                Ok(1.0)
            } else {
                Err(Error::Domain("none of 0,1,2".into()))
            }
        };
        let out = bootstrap(&rows, needs_any3, &plan, Domain::Estimation).unwrap();
        assert!(out.failures > 10 && out.failures < 100, "{}", out.failures);
        assert!(out.warning.is_some());
        assert_eq!(out.attempted(), 1000);
    }

    #[test]
    fn bootstrap_requires_full_data_success() {
        let ps: Vec<Participant> = (0..5).map(|i| p(i, 1.0)).collect();
        let rows: Vec<&Participant> = ps.iter().collect();
        let plan = ResamplePlan { replicates: 5, seed: 0, workers: 1 };
        let r: Result<BootstrapOutput<f64>> =
            bootstrap(&rows, |_, _| Err(Error::Domain("nope".into())), &plan, Domain::Estimation);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn summary_order_invariant(mut v in prop::collection::vec(-1e3f64..1e3, 1..200), k in 0usize..200) {
                let a = summarize(&v).unwrap();
                let len = v.len();
                v.rotate_left(k % len);
                v.reverse();
                let b = summarize(&v).unwrap();
                prop_assert_eq!(a, b);
                prop_assert!(a.p2_5 <= a.median && a.median <= a.p97_5);
            }
        }
    }
}
