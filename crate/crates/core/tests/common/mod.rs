//! Independent oracles and generators shared by the integration tests.
//!
//! Nothing here calls into the code it checks: the relation oracle walks raw
//! parent links from the JSON document, and the alpha oracle enumerates
//! ordered value pairs in plain floating point.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use differentia::hierarchy::{HierarchyDocument, NodeDocument};
use differentia::localization::{ImageRecord, ObjectRegion};
use rand::Rng;

/// Parent links straight from the fixture document.
pub fn parent_links(doc: &HierarchyDocument) -> HashMap<String, Option<String>> {
    doc.nodes
        .iter()
        .map(|n| (n.id.clone(), n.parent.clone()))
        .collect()
}

/// True when `a` is a strict ancestor of `b`, by walking `b`'s parents.
pub fn is_strict_ancestor(links: &HashMap<String, Option<String>>, a: &str, b: &str) -> bool {
    let mut cur = links[b].clone();
    while let Some(p) = cur {
        if p == a {
            return true;
        }
        cur = links[&p].clone();
    }
    false
}

/// Expected outcome name for an (annotated, gold) pair, where `None` is a
/// discharged label.
pub fn expected_outcome(
    links: &HashMap<String, Option<String>>,
    annotated: Option<&str>,
    gold: Option<&str>,
) -> &'static str {
    match (annotated, gold) {
        (None, None) => "correct_discharge",
        (None, Some(_)) | (Some(_), None) => "discharged_vs_gold",
        (Some(a), Some(g)) if a == g => "correct",
        (Some(a), Some(g)) if is_strict_ancestor(links, a, g) => "generic",
        (Some(a), Some(g)) if is_strict_ancestor(links, g, a) => "restricted",
        _ => "misplaced",
    }
}

/// Nominal Krippendorff's alpha by direct enumeration: every ordered pair
/// of values from different coders within a unit contributes `1/(m_u - 1)`
/// to the coincidence of its two categories. Units with fewer than two
/// values are skipped. Returns `None` when no unit is pairable and `1.0`
/// when there is no expected disagreement.
pub fn alpha_oracle(rows: &[Vec<Option<String>>]) -> Option<f64> {
    let mut o: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut pairable = false;
    for row in rows {
        let values: Vec<&String> = row.iter().flatten().collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        pairable = true;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    *o.entry((values[i].clone(), values[j].clone())).or_default() +=
                        1.0 / (m as f64 - 1.0);
                }
            }
        }
    }
    if !pairable {
        return None;
    }
    let mut n_c: BTreeMap<String, f64> = BTreeMap::new();
    for ((c, _), v) in &o {
        *n_c.entry(c.clone()).or_default() += v;
    }
    let n: f64 = n_c.values().sum();
    let observed: f64 = o
        .iter()
        .filter(|((c, k), _)| c != k)
        .map(|(_, v)| v)
        .sum::<f64>()
        / n;
    let mut expected = 0.0;
    for (c, nc) in &n_c {
        for (k, nk) in &n_c {
            if c != k {
                expected += nc * nk;
            }
        }
    }
    expected /= n * (n - 1.0);
    if expected == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - observed / expected)
}

/// Random units x annotators matrix with missing cells.
pub fn random_rows(
    rng: &mut impl Rng,
    max_units: usize,
    max_annotators: usize,
    max_categories: usize,
) -> Vec<Vec<Option<String>>> {
    let units = rng.random_range(1..=max_units);
    let annotators = rng.random_range(2..=max_annotators);
    let categories = rng.random_range(1..=max_categories);
    let missing = rng.random_range(0.0..0.5);
    (0..units)
        .map(|_| {
            (0..annotators)
                .map(|_| {
                    if rng.random_bool(missing) {
                        None
                    } else {
                        Some(format!("c{}", rng.random_range(0..categories)))
                    }
                })
                .collect()
        })
        .collect()
}

/// A usable random tree with `n` nodes: node `i` hangs under a uniformly
/// chosen earlier node, every differentia and sense is distinct.
pub fn random_hierarchy(rng: &mut impl Rng, n: usize) -> HierarchyDocument {
    let nodes = (0..n)
        .map(|i| NodeDocument {
            id: format!("n{i}"),
            parent: (i > 0).then(|| format!("n{}", rng.random_range(0..i))),
            sense_id: format!("{:08}", 1000 + i),
            synset: vec![format!("lemma{i}")],
            category_label: format!("Category {i}"),
            gloss: format!("gloss {i}"),
            differentia: format!("with feature {i}"),
            visually_checkable: true,
            root_genus_term: (i == 0).then(|| "Thing".to_owned()),
        })
        .collect();
    HierarchyDocument {
        root: "n0".into(),
        nodes,
    }
}

/// A random image with 0..=max_regions valid triangular regions.
pub fn random_image(rng: &mut impl Rng, id: usize, max_regions: usize) -> ImageRecord {
    let (w, h) = (rng.random_range(20..400u32), rng.random_range(20..400u32));
    let mut img = ImageRecord::new(format!("img{id}"), w, h);
    for r in 0..rng.random_range(0..=max_regions) {
        let x = rng.random_range(0.0..(w as f64 - 10.0));
        let y = rng.random_range(0.0..(h as f64 - 10.0));
        let s = rng.random_range(2.0..10.0);
        img = img.with_region(ObjectRegion::new(
            format!("r{r}"),
            &[(x, y), (x + s, y), (x + s, y + s)],
        ));
    }
    img
}

pub mod server;
