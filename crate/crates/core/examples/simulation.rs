//! Mean alpha of simulated campaigns as annotator noise grows, plus the
//! outcome mix each mistake-source model produces.

use differentia::agreement::{build_reliability, krippendorff_alpha};
use differentia::hierarchy::Hierarchy;
use differentia::outcomes::AnnotatorModel;
use differentia::simulate::{gold_per_node, simulate_campaign, simulate_records};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = Hierarchy::musical_instruments();
    let golds = gold_per_node(&h, 3);

    for eps in [0.0, 0.05, 0.1, 0.2, 0.4] {
        let mut alphas = Vec::new();
        for seed in 0..20 {
            let records =
                simulate_records(&h, &golds, AnnotatorModel::Noisy { epsilon: eps }, 6, seed)?;
            alphas.push(krippendorff_alpha(&build_reliability(&records)?)?);
        }
        println!(
            "noise {eps:<4} mean alpha {:.4}",
            alphas.iter().sum::<f64>() / alphas.len() as f64
        );
    }

    for model in ["knowledge_limited:2", "partial_view:1", "mislabeler"] {
        let (_, report) = simulate_campaign(&h, &golds, model.parse()?, 6, 7)?;
        let mix: Vec<String> = report
            .audit
            .counts
            .iter()
            .filter(|(_, n)| **n > 0)
            .map(|(k, n)| format!("{k}={n}"))
            .collect();
        println!("{model:<20} {}", mix.join(" "));
    }
    Ok(())
}
