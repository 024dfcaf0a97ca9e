//! Brute-force reference computations used to check the library. None of
//! these call into the estimator code paths they are compared against.

#![allow(dead_code)]

use std::collections::HashMap;

use synthmean::cohort::{Gender, Participant};

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Weighted mean by explicit accumulation in insertion order of a map.
pub fn oracle_weighted_mean(pairs: &[(f64, f64)]) -> f64 {
    let mut totals: HashMap<u8, (f64, f64)> = HashMap::new();
    for &(v, w) in pairs {
        let e = totals.entry(0).or_insert((0.0, 0.0));
        e.0 += v * w;
        e.1 += w;
    }
    let (n, d) = totals[&0];
    n / d
}

/// Per-age weighted means of observed outcomes, by filtering once per age.
pub fn oracle_group_means(ps: &[Participant], positive_only: bool) -> Vec<(u32, f64)> {
    let mut ages: Vec<u32> = ps
        .iter()
        .filter(|p| !positive_only || p.positive)
        .map(|p| p.age)
        .collect();
    ages.sort_unstable();
    ages.dedup();
    ages.into_iter()
        .map(|a| {
            let pairs: Vec<(f64, f64)> = ps
                .iter()
                .filter(|p| p.age == a && (!positive_only || p.positive))
                .filter_map(|p| p.outcome.map(|y| (y, p.weight)))
                .collect();
            (a, oracle_weighted_mean(&pairs))
        })
        .collect()
}

/// WLS intercept and slope from the uncentred 2×2 normal equations by Cramer's rule.
pub fn oracle_wls(ps: &[Participant]) -> (f64, f64) {
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in ps {
        if let Some(y) = p.outcome {
            let x = f64::from(p.age);
            s0 += p.weight;
            s1 += p.weight * x;
            s2 += p.weight * x * x;
            t0 += p.weight * y;
            t1 += p.weight * x * y;
        }
    }
    let det = s0 * s2 - s1 * s1;
    ((t0 * s2 - s1 * t1) / det, (s0 * t1 - s1 * t0) / det)
}

/// Quantile at 1-based rank `1 + q(n-1)` with linear interpolation.
pub fn oracle_percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = 1.0 + q * (v.len() as f64 - 1.0);
    let below = rank.floor();
    let frac = rank - below;
    let i = below as usize; // 1-based index of the lower order statistic
    if i >= v.len() {
        return v[v.len() - 1];
    }
    (1.0 - frac) * v[i - 1] + frac * v[i]
}

/// Law-of-total-expectation g-computation: Σₐ β̂ₐ · P̂(age = a).
pub fn oracle_gcomp(ps: &[Participant], betas: &[(u32, f64)]) -> f64 {
    let total: f64 = ps.iter().map(|p| p.weight).sum();
    betas
        .iter()
        .map(|&(a, b)| {
            let wa: f64 = ps.iter().filter(|p| p.age == a).map(|p| p.weight).sum();
            b * wa / total
        })
        .sum()
}

pub fn toy_participant(i: usize, age: u32, gender: Gender, y: Option<f64>, w: f64, pct: f64) -> Participant {
    Participant {
        id: format!("t{i}"),
        age,
        gender,
        height_cm: Some(100.0 + pct / 10.0),
        height_percentile: Some(pct),
        outcome: y,
        positive: age >= 8,
        weight: w,
    }
}
