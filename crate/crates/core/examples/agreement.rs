//! Krippendorff's alpha for a reliability matrix read from CSV (or a
//! built-in one), rendered as a per-category count table.
//!
//! ```text
//! cargo run --example agreement [matrix.csv]
//! ```

use differentia::agreement::{agreement_report_with, AlphaOptions, ReliabilityMatrix};
use differentia::hierarchy::Hierarchy;

const SAMPLE: &str = "unit,ann1,ann2,ann3\n\
u1,1_2,1_2,1_2\n\
u2,1_3,1_3,1_2\n\
u3,1_1_1,1_1_1,1_1_1\n\
u4,1_2,1_3,\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = match std::env::args().nth(1) {
        Some(path) => ReliabilityMatrix::from_csv(std::fs::File::open(path)?)?,
        None => ReliabilityMatrix::from_csv(SAMPLE.as_bytes())?,
    };
    let h = Hierarchy::musical_instruments();
    let report = agreement_report_with(&m, Some(&h), AlphaOptions::default())?;
    print!("{}", report.render(Some(&h)));
    println!("exact: {}", report.alpha_exact);
    Ok(())
}
