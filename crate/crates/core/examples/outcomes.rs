//! Audits annotations against gold labels and prints the outcome counts and
//! confusion listing.

use differentia::hierarchy::Hierarchy;
use differentia::outcomes::{audit_report, GoldAssignment};
use differentia::traversal::TerminalLabel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = Hierarchy::musical_instruments();
    let label = |text: &str| TerminalLabel::resolve(&h, text);
    let golds = vec![
        GoldAssignment {
            task_id: "t1".into(),
            gold: label("Acoustic Guitar")?,
        },
        GoldAssignment {
            task_id: "t2".into(),
            gold: label("Musical Instrument")?,
        },
        GoldAssignment {
            task_id: "t3".into(),
            gold: label("Koto")?,
        },
        GoldAssignment {
            task_id: "t4".into(),
            gold: label("discharged")?,
        },
    ];
    let annotations = vec![
        ("t1".to_owned(), label("Guitar")?),
        ("t2".to_owned(), label("Guitar")?),
        ("t3".to_owned(), label("Dulcimer")?),
        ("t4".to_owned(), label("discharged")?),
    ];
    print!("{}", audit_report(&h, &annotations, &golds)?.render(&h));
    Ok(())
}
