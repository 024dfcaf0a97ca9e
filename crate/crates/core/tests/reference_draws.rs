use statrs::distribution::{ContinuousCDF, Normal};

use synthmean::cohort::Gender;
use synthmean::reference::{params_from_percentiles, simulate_stratum, ReferenceRow, ReferenceTable};
use synthmean::resampling::percentile;
use synthmean::rng::RandomStream;

fn z90() -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.9)
}

fn one_stratum(p50: f64, p90: f64) -> ReferenceTable {
    ReferenceTable::from_rows(vec![ReferenceRow {
        age: 5,
        gender: Gender::Male,
        height_percentile: 50.0,
        p50,
        p90,
    }])
    .unwrap()
}

#[test]
fn sd_matches_normal_quantile_oracle() {
    for (p50, p90, expected) in [(102.0, 113.0, 8.5834), (90.0, 104.0, 10.9242)] {
        let params = params_from_percentiles(p50, p90).unwrap();
        let oracle = (p90 - p50) / z90();
        assert!((params.sd - oracle).abs() / oracle < 1e-6, "{} vs {oracle}", params.sd);
        // The quoted values carry four decimals.
        assert!((params.sd - expected).abs() <= 1e-4, "{}", params.sd);
        assert_eq!(params.mean, p50);
    }
}

#[test]
fn narrow_stratum_draws_concentrate_at_median() {
    // sd = 1; the Monte Carlo SE of the mean of 20,000 draws is about 0.007.
    let table = one_stratum(100.0, 100.0 + z90());
    let draws = simulate_stratum(&table, 5, Gender::Male, 50.0, 20_000, &mut RandomStream::new(11)).unwrap();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((mean - 100.0).abs() < 0.03, "{mean}");
}

#[test]
fn simulated_ninetieth_percentile_recovers_input() {
    let table = one_stratum(102.0, 113.0);
    let draws = simulate_stratum(&table, 5, Gender::Male, 40.0, 100_000, &mut RandomStream::new(12)).unwrap();
    let p90 = percentile(&draws, 0.9).unwrap();
    assert!((p90 - 113.0).abs() < 0.3, "{p90}");
    let p50 = percentile(&draws, 0.5).unwrap();
    assert!((p50 - 102.0).abs() < 0.2, "{p50}");
}

#[test]
fn draws_pass_a_coarse_goodness_of_fit_check() {
    // Compare decile occupancy against the normal CDF from the oracle.
    let table = one_stratum(90.0, 104.0);
    let n = 50_000;
    let draws = simulate_stratum(&table, 5, Gender::Male, 50.0, n, &mut RandomStream::new(13)).unwrap();
    let dist = Normal::new(90.0, 14.0 / z90()).unwrap();
    let mut counts = [0usize; 10];
    for d in &draws {
        let u = dist.cdf(*d);
        counts[((u * 10.0) as usize).min(9)] += 1;
    }
    let expected = n as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-square with 9 degrees of freedom.
    assert!(chi2 < 27.88, "chi-square {chi2}: {counts:?}");
}
