//! Regenerates `data/synthetic_cohort.csv`:
//!
//!     cargo run -p synthmean --example make_fixture -- crates/core/data/synthetic_cohort.csv

use std::fs::File;

use synthmean::reference::bundled_reference;
use synthmean::synthetic::{generate, write_cohort_csv, SyntheticDesign};

fn main() -> synthmean::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synthetic_cohort.csv".into());
    let design = SyntheticDesign {
        n: 800,
        ..SyntheticDesign::default()
    };
    let cohort = generate(&bundled_reference(), &design, 2017)?;
    let file = File::create(&path).map_err(|e| synthmean::Error::Io { path: path.clone(), source: e })?;
    write_cohort_csv(&cohort, file, 2018)?;
    eprintln!("wrote {} rows to {path}", cohort.len());
    Ok(())
}
