//! Inter-annotator agreement (Krippendorff's alpha over nominal categories)
//! and annotation cost statistics.
//!
//! Alpha is built from the coincidence matrix of pairable values. A unit
//! with `m ≥ 2` values contributes `1 / (m - 1)` to `o[c][k]` for every
//! ordered pair of its values `(c, k)` taken from distinct annotators.
//! With marginals `n_c` and total `n`:
//!
//! ```text
//! D_o = (1 / n) · Σ_{c≠k} o[c][k]
//! D_e = (1 / (n (n - 1))) · Σ_{c≠k} n_c · n_k
//! α   = 1 - D_o / D_e
//! ```
//!
//! Everything is accumulated in exact rationals; only the final value is
//! rounded to `f64`. When every pairable value falls in one category,
//! `D_e = 0` and alpha is reported as 1.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::Hierarchy;
use crate::record::AnnotationRecord;
use crate::traversal::{TerminalLabel, DISCHARGED, UNRECOGNISED};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgreementError {
    #[error("unit `{unit}` already has a value from annotator `{annotator}`")]
    DuplicateCell { unit: String, annotator: String },
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("duplicate unit id `{0}`")]
    DuplicateUnit(String),
    #[error("duplicate annotator id `{0}`")]
    DuplicateAnnotator(String),
    #[error("alpha is undefined: no unit has two or more values")]
    Undefined,
    #[error("csv: {0}")]
    Csv(String),
}

/// Units × annotators table of nominal category assignments, with gaps.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReliabilityMatrix {
    pub units: Vec<String>,
    pub annotators: Vec<String>,
    /// `(unit index, annotator index) → category id`.
    cells: BTreeMap<(usize, usize), String>,
}

impl ReliabilityMatrix {
    pub fn new(units: Vec<String>, annotators: Vec<String>) -> Result<Self, AgreementError> {
        let mut seen = BTreeSet::new();
        for u in &units {
            if !seen.insert(u) {
                return Err(AgreementError::DuplicateUnit(u.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for a in &annotators {
            if !seen.insert(a) {
                return Err(AgreementError::DuplicateAnnotator(a.clone()));
            }
        }
        Ok(ReliabilityMatrix {
            units,
            annotators,
            cells: BTreeMap::new(),
        })
    }

    /// Builds a complete-or-partial matrix from rows of optional values, one
    /// row per unit and one column per annotator.
    pub fn from_rows<S: AsRef<str>>(rows: &[Vec<Option<S>>]) -> Self {
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut m = ReliabilityMatrix::new(
            (0..rows.len()).map(|i| format!("u{}", i + 1)).collect(),
            (0..width).map(|j| format!("a{}", j + 1)).collect(),
        )
        .expect("generated ids are unique");
        for (u, row) in rows.iter().enumerate() {
            for (a, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    m.cells.insert((u, a), v.as_ref().to_owned());
                }
            }
        }
        m
    }

    fn unit_index(&self, unit: &str) -> Result<usize, AgreementError> {
        self.units
            .iter()
            .position(|u| u == unit)
            .ok_or_else(|| AgreementError::UnknownUnit(unit.to_owned()))
    }

    fn annotator_index(&self, annotator: &str) -> Result<usize, AgreementError> {
        self.annotators
            .iter()
            .position(|a| a == annotator)
            .ok_or_else(|| AgreementError::UnknownAnnotator(annotator.to_owned()))
    }

    pub fn set(
        &mut self,
        unit: &str,
        annotator: &str,
        category: &str,
    ) -> Result<(), AgreementError> {
        let key = (self.unit_index(unit)?, self.annotator_index(annotator)?);
        if self.cells.contains_key(&key) {
            return Err(AgreementError::DuplicateCell {
                unit: unit.to_owned(),
                annotator: annotator.to_owned(),
            });
        }
        self.cells.insert(key, category.to_owned());
        Ok(())
    }

    pub fn get(&self, unit: &str, annotator: &str) -> Option<&str> {
        let key = (
            self.unit_index(unit).ok()?,
            self.annotator_index(annotator).ok()?,
        );
        self.cells.get(&key).map(String::as_str)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Values present for each unit, in annotator order.
    pub fn unit_values(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.units.len()];
        for (&(u, _), v) in &self.cells {
            out[u].push(v.as_str());
        }
        out
    }

    /// Distinct categories in sorted order.
    pub fn categories(&self) -> Vec<&str> {
        self.cells
            .values()
            .map(String::as_str)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Copy with every reserved category (discharged, unrecognised) removed.
    pub fn without_reserved(&self) -> Self {
        let mut m = self.clone();
        m.cells.retain(|_, v| v != DISCHARGED && v != UNRECOGNISED);
        m
    }

    /// Reads the CSV form: the header row lists annotator ids after a
    /// leading label cell; every further row is a unit id followed by one
    /// cell per annotator, empty meaning missing.
    pub fn from_csv(reader: impl Read) -> Result<Self, AgreementError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut rows = rdr.records();
        let header = match rows.next() {
            Some(r) => r.map_err(|e| AgreementError::Csv(e.to_string()))?,
            None => return Err(AgreementError::Csv("empty input".into())),
        };
        let annotators: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_owned()).collect();
        let mut units = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            let row = row.map_err(|e| AgreementError::Csv(e.to_string()))?;
            let unit = row.get(0).unwrap_or("").trim().to_owned();
            if unit.is_empty() && row.iter().all(|c| c.trim().is_empty()) {
                continue;
            }
            if row.len() > annotators.len() + 1 {
                return Err(AgreementError::Csv(format!(
                    "unit `{unit}` has {} values for {} annotators",
                    row.len() - 1,
                    annotators.len()
                )));
            }
            values.push(
                row.iter()
                    .skip(1)
                    .map(|c| c.trim().to_owned())
                    .collect::<Vec<_>>(),
            );
            units.push(unit);
        }
        let mut m = ReliabilityMatrix::new(units, annotators)?;
        for (u, row) in values.into_iter().enumerate() {
            for (a, v) in row.into_iter().enumerate() {
                if !v.is_empty() {
                    m.cells.insert((u, a), v);
                }
            }
        }
        Ok(m)
    }

    pub fn to_csv(&self, writer: impl Write) -> Result<(), AgreementError> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| AgreementError::Csv(e.to_string());
        let mut header = vec!["unit".to_owned()];
        header.extend(self.annotators.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (u, unit) in self.units.iter().enumerate() {
            let mut row = vec![unit.clone()];
            for a in 0..self.annotators.len() {
                row.push(self.cells.get(&(u, a)).cloned().unwrap_or_default());
            }
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| AgreementError::Csv(e.to_string()))
    }
}

/// Coincidences of pairable values, kept exact.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceMatrix {
    pub categories: Vec<String>,
    o: Vec<Vec<BigRational>>,
    pub n_c: Vec<u64>,
    pub n: u64,
    pub units_used: usize,
}

impl CoincidenceMatrix {
    pub fn from_matrix(m: &ReliabilityMatrix) -> Self {
        let categories: Vec<String> = m.categories().into_iter().map(str::to_owned).collect();
        let idx: HashMap<&str, usize> = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let k = categories.len();
        let mut o = vec![vec![BigRational::zero(); k]; k];
        let mut units_used = 0;
        for values in m.unit_values() {
            let mu = values.len();
            if mu < 2 {
                continue;
            }
            units_used += 1;
            let mut counts = vec![0i64; k];
            for v in &values {
                counts[idx[v]] += 1;
            }
            let denom = BigInt::from(mu as i64 - 1);
            for c in 0..k {
                if counts[c] == 0 {
                    continue;
                }
                for d in 0..k {
                    // Ordered pairs of distinct annotators: c·d, or c·(c-1) on the diagonal.
                    let pairs = if c == d {
                        counts[c] * (counts[c] - 1)
                    } else {
                        counts[c] * counts[d]
                    };
                    if pairs > 0 {
                        o[c][d] += BigRational::new(BigInt::from(pairs), denom.clone());
                    }
                }
            }
        }
        let n_c: Vec<u64> = o
            .iter()
            .map(|row| {
                let s: BigRational = row.iter().sum();
                s.to_integer()
                    .to_u64()
                    .expect("marginals are whole numbers")
            })
            .collect();
        let n = n_c.iter().sum();
        CoincidenceMatrix {
            categories,
            o,
            n_c,
            n,
            units_used,
        }
    }

    pub fn coincidence(&self, c: usize, k: usize) -> f64 {
        self.o[c][k].to_f64().unwrap_or(f64::NAN)
    }

    /// Exact alpha, or `None` when no unit is pairable.
    pub fn alpha_exact(&self) -> Option<BigRational> {
        if self.units_used == 0 {
            return None;
        }
        let k = self.categories.len();
        let mut observed = BigRational::zero();
        let mut expected = BigInt::zero();
        for c in 0..k {
            for d in 0..k {
                if c != d {
                    observed += &self.o[c][d];
                    expected += BigInt::from(self.n_c[c]) * BigInt::from(self.n_c[d]);
                }
            }
        }
        if expected.is_zero() {
            return Some(BigRational::from_integer(BigInt::from(1)));
        }
        // 1 - D_o / D_e = 1 - (n - 1) Σo / Σ n_c n_k
        let ratio = observed * BigRational::from_integer(BigInt::from(self.n - 1))
            / BigRational::from_integer(expected);
        Some(BigRational::from_integer(BigInt::from(1)) - ratio)
    }
}

pub fn krippendorff_alpha(m: &ReliabilityMatrix) -> Result<f64, AgreementError> {
    CoincidenceMatrix::from_matrix(m)
        .alpha_exact()
        .and_then(|a| a.to_f64())
        .ok_or(AgreementError::Undefined)
}

/// Cells per (task, annotator) from terminal records. The category is the
/// node id, or [`DISCHARGED`].
pub fn build_reliability(
    records: &[AnnotationRecord],
) -> Result<ReliabilityMatrix, AgreementError> {
    let mut units = Vec::new();
    let mut annotators = Vec::new();
    let mut seen_u = BTreeSet::new();
    let mut seen_a = BTreeSet::new();
    for r in records {
        if seen_u.insert(&r.task_id) {
            units.push(r.task_id.clone());
        }
        if seen_a.insert(&r.annotator_id) {
            annotators.push(r.annotator_id.clone());
        }
    }
    let mut m = ReliabilityMatrix::new(units, annotators)?;
    for r in records {
        m.set(&r.task_id, &r.annotator_id, r.result.category_id())?;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlphaOptions {
    /// Drop discharged and unrecognised values before computing alpha.
    #[serde(default)]
    pub exclude_reserved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub category: String,
    /// One count per annotator, in report annotator order.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub alpha: f64,
    /// Exact value as `numerator/denominator`.
    pub alpha_exact: String,
    pub n_units_used: usize,
    pub n_units_dropped: usize,
    pub annotators: Vec<String>,
    pub per_category_counts: Vec<CategoryCounts>,
    pub excluded_reserved: bool,
}

/// Report ordering: hierarchy document order first, then the reserved
/// categories, then anything else alphabetically.
fn category_rank(h: Option<&Hierarchy>, c: &str) -> (usize, usize, String) {
    if let Some(pos) = h.and_then(|h| h.document_position(c)) {
        return (0, pos, String::new());
    }
    match c {
        DISCHARGED => (1, 0, String::new()),
        UNRECOGNISED => (1, 1, String::new()),
        other => (2, 0, other.to_owned()),
    }
}

pub fn agreement_report(m: &ReliabilityMatrix) -> Result<AgreementReport, AgreementError> {
    agreement_report_with(m, None, AlphaOptions::default())
}

pub fn agreement_report_with(
    m: &ReliabilityMatrix,
    h: Option<&Hierarchy>,
    opts: AlphaOptions,
) -> Result<AgreementReport, AgreementError> {
    let used = if opts.exclude_reserved {
        m.without_reserved()
    } else {
        m.clone()
    };
    let cm = CoincidenceMatrix::from_matrix(&used);
    let exact = cm.alpha_exact().ok_or(AgreementError::Undefined)?;
    let alpha = exact.to_f64().ok_or(AgreementError::Undefined)?;

    let mut cats: Vec<&str> = m.categories();
    if let Some(h) = h {
        for n in h.nodes() {
            if !cats.contains(&n.node_id.as_str()) {
                cats.push(&n.node_id);
            }
        }
    }
    cats.sort_by_key(|c| category_rank(h, c));
    let per_category_counts = cats
        .iter()
        .map(|c| CategoryCounts {
            category: (*c).to_owned(),
            counts: (0..m.annotators.len())
                .map(|a| {
                    (0..m.units.len())
                        .filter(|&u| m.cells.get(&(u, a)).map(String::as_str) == Some(c))
                        .count()
                })
                .collect(),
        })
        .collect();

    Ok(AgreementReport {
        alpha,
        alpha_exact: format!("{}/{}", exact.numer(), exact.denom()),
        n_units_used: cm.units_used,
        n_units_dropped: m.units.len() - cm.units_used,
        annotators: m.annotators.clone(),
        per_category_counts,
        excluded_reserved: opts.exclude_reserved,
    })
}

impl AgreementReport {
    /// Aligned text table: one row per category with its differentia and
    /// category labels side by side, one count column per annotator, and a
    /// closing alpha row at four decimals.
    pub fn render(&self, h: Option<&Hierarchy>) -> String {
        let labels = |c: &str| -> (String, String) {
            match h.map(|h| TerminalLabel::from_category(h, c)) {
                Some(Ok(l)) => (l.differentia_label, l.category_label),
                _ if c == DISCHARGED => ("Discharged".into(), "Discharged".into()),
                _ if c == UNRECOGNISED => ("Unrecognised".into(), "Unrecognised".into()),
                _ => ("-".into(), "-".into()),
            }
        };
        let rows: Vec<(String, String, String, &Vec<usize>)> = self
            .per_category_counts
            .iter()
            .map(|r| {
                let (d, c) = labels(&r.category);
                (r.category.clone(), d, c, &r.counts)
            })
            .collect();
        let alpha_label = "Krippendorff's alpha";
        let w_id = rows
            .iter()
            .map(|r| r.0.chars().count())
            .max()
            .unwrap_or(0)
            .max(3);
        let w_d = rows
            .iter()
            .map(|r| r.1.chars().count())
            .max()
            .unwrap_or(0)
            .max("Differentia".len())
            .max(alpha_label.len());
        let w_c = rows
            .iter()
            .map(|r| r.2.chars().count())
            .max()
            .unwrap_or(0)
            .max("Category".len());
        let w_n: Vec<usize> = self
            .annotators
            .iter()
            .enumerate()
            .map(|(i, a)| {
                rows.iter()
                    .map(|r| r.3[i].to_string().len())
                    .max()
                    .unwrap_or(1)
                    .max(a.chars().count())
            })
            .collect();

        let mut out = String::new();
        let mut line = format!(
            "{:<w_id$}  {:<w_d$}  {:<w_c$}",
            "Id", "Differentia", "Category"
        );
        for (a, w) in self.annotators.iter().zip(&w_n) {
            line.push_str(&format!("  {a:>w$}"));
        }
        out.push_str(line.trim_end());
        out.push('\n');
        for (id, d, c, counts) in &rows {
            let mut line = format!("{id:<w_id$}  {d:<w_d$}  {c:<w_c$}");
            for (n, w) in counts.iter().zip(&w_n) {
                line.push_str(&format!("  {n:>w$}"));
            }
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str(&format!(
            "{:<w_id$}  {:<w_d$}  {:.4}\n",
            "all", alpha_label, self.alpha
        ));
        out.push_str(&format!(
            "units used: {}, dropped: {}{}\n",
            self.n_units_used,
            self.n_units_dropped,
            if self.excluded_reserved {
                " (reserved categories excluded)"
            } else {
                ""
            }
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorTiming {
    pub mean_secs: Option<f64>,
    pub median_secs: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub per_annotator: BTreeMap<String, AnnotatorTiming>,
    /// Mean over every finished session. `None` when there are none.
    pub overall_mean_secs: Option<f64>,
}

fn mean_median(mut xs: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    xs.sort_by(f64::total_cmp);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let mid = xs.len() / 2;
    let median = if xs.len().is_multiple_of(2) {
        (xs[mid - 1] + xs[mid]) / 2.0
    } else {
        xs[mid]
    };
    (Some(mean), Some(median))
}

/// Per-annotator session durations. Records without an end time are left
/// out of every statistic.
pub fn timing_stats(records: &[AnnotationRecord]) -> TimingStats {
    let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for r in records {
        let entry = by.entry(r.annotator_id.clone()).or_default();
        if let Some(d) = r.duration_secs() {
            entry.push(d);
            all.push(d);
        }
    }
    let per_annotator = by
        .into_iter()
        .map(|(a, ds)| {
            let count = ds.len();
            let (mean_secs, median_secs) = mean_median(ds);
            (
                a,
                AnnotatorTiming {
                    mean_secs,
                    median_secs,
                    count,
                },
            )
        })
        .collect();
    TimingStats {
        per_annotator,
        overall_mean_secs: mean_median(all).0,
    }
}
