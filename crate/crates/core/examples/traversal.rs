//! A scripted classification session: each question shows one differentia
//! and the answer decides whether the walk descends or moves to a sibling.

use differentia::hierarchy::Hierarchy;
use differentia::traversal::{
    current_question, start_session, submit_answer, AskAnswer, LabelingScheme, Prompt,
    TraversalConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = Hierarchy::musical_instruments();
    let mut session = start_session(&h, "photo-17", TraversalConfig::default())?;
    // An acoustic guitar: sound mechanism, strings, six of them, no jack.
    let mut script = [
        AskAnswer::Yes,
        AskAnswer::Yes,
        AskAnswer::Yes,
        AskAnswer::Yes,
    ]
    .into_iter();

    while let Prompt::Question(q) = current_question(&h, &session)? {
        let answer = script.next().unwrap_or(AskAnswer::No);
        println!("{:<40} -> {answer:?}", q.differentia);
        submit_answer(&h, &mut session, answer)?;
    }
    let result = session.result.as_ref().expect("terminal");
    println!(
        "\nresult: {} / {}",
        result.label(LabelingScheme::Category),
        result.label(LabelingScheme::Differentia)
    );
    Ok(())
}
