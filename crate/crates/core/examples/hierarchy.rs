//! Loads the bundled hierarchy, prints it as an indented tree and lists
//! what validation found.
//!
//! ```text
//! cargo run --example hierarchy [path/to/hierarchy.json]
//! ```

use differentia::hierarchy::Hierarchy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = match std::env::args().nth(1) {
        Some(path) => Hierarchy::load(path)?,
        None => Hierarchy::musical_instruments(),
    };
    println!(
        "version {} ({} nodes, height {})",
        h.version(),
        h.len(),
        h.height()
    );
    for n in h.nodes() {
        let depth = h.depth(&n.node_id)?;
        println!(
            "{}{} {} ({})",
            "  ".repeat(depth - 1),
            n.node_id,
            n.category_label,
            n.differentia
        );
    }

    let leaf = "1_1_1_1";
    println!(
        "\ndefinition of {leaf}: {}",
        h.reconstruct_definition(leaf)?.join(" / ")
    );
    println!("relation(1_1_1, {leaf}) = {:?}", h.relation("1_1_1", leaf)?);

    for d in h.validate() {
        println!("{:?}[{}] {}", d.severity, d.code, d.message);
    }
    Ok(())
}
