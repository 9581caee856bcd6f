//! Object isolation: validating object regions and expanding images into
//! per-object annotation tasks.
//!
//! Pixel data is never decoded here. Crop rectangles travel in task
//! records and manifests and are applied by whoever consumes the export.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRegion {
    pub region_id: String,
    pub polygon: Vec<Point>,
}

impl ObjectRegion {
    pub fn new(region_id: impl Into<String>, vertices: &[(f64, f64)]) -> Self {
        ObjectRegion {
            region_id: region_id.into(),
            polygon: vertices.iter().map(|&(x, y)| Point { x, y }).collect(),
        }
    }

    /// Absolute shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.polygon.len();
        if n < 3 {
            return 0.0;
        }
        let twice: f64 = (0..n)
            .map(|i| {
                let (a, b) = (self.polygon[i], self.polygon[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum();
        twice.abs() / 2.0
    }

    fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let first = self.polygon.first()?;
        Some(self.polygon.iter().fold(
            (first.x, first.y, first.x, first.y),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        ))
    }

    /// Tight axis-aligned bounding box, widened to whole pixels and clamped
    /// to the image.
    pub fn crop(&self, width: u32, height: u32) -> Option<CropRect> {
        let (x0, y0, x1, y1) = self.bounds()?;
        let clamp = |v: f64, max: u32| v.max(0.0).min(max as f64);
        Some(CropRect([
            clamp(x0, width).floor() as u32,
            clamp(y0, height).floor() as u32,
            clamp(x1, width).ceil() as u32,
            clamp(y1, height).ceil() as u32,
        ]))
    }
}

/// `[x_min, y_min, x_max, y_max]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropRect(pub [u32; 4]);

impl CropRect {
    pub fn intersects(&self, other: &CropRect) -> bool {
        let [a0, b0, a1, b1] = self.0;
        let [c0, d0, c1, d1] = other.0;
        a0 < c1 && c0 < a1 && b0 < d1 && d0 < b1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub uri: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub regions: Vec<ObjectRegion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_label: Option<String>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, width: u32, height: u32) -> Self {
        let image_id = image_id.into();
        ImageRecord {
            uri: format!("{image_id}.jpg"),
            image_id,
            width,
            height,
            regions: Vec::new(),
            original_label: None,
        }
    }

    pub fn with_region(mut self, region: ObjectRegion) -> Self {
        self.regions.push(region);
        self
    }

    /// Multi-object image: more than one localized region.
    pub fn is_multi_object(&self) -> bool {
        self.regions.len() > 1
    }
}

/// A single broken region or image constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionViolation {
    TooFewVertices { count: usize },
    OutOfBounds { vertex: usize, x: f64, y: f64 },
    SelfIntersecting { edge_a: usize, edge_b: usize },
    ZeroArea,
    NonFiniteCoordinate { vertex: usize },
}

impl fmt::Display for RegionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionViolation::TooFewVertices { count } => {
                write!(f, "polygon has {count} vertices, at least 3 required")
            }
            RegionViolation::OutOfBounds { vertex, x, y } => {
                write!(f, "vertex {vertex} ({x}, {y}) lies outside the image")
            }
            RegionViolation::SelfIntersecting { edge_a, edge_b } => {
                write!(f, "edges {edge_a} and {edge_b} intersect")
            }
            RegionViolation::ZeroArea => f.write_str("polygon has zero area"),
            RegionViolation::NonFiniteCoordinate { vertex } => {
                write!(f, "vertex {vertex} has a non-finite coordinate")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizationError {
    #[error("image `{image}` has invalid dimensions {width}x{height}")]
    InvalidDimensions {
        image: String,
        width: u32,
        height: u32,
    },
    #[error("image `{image}` region `{region}`: {}", join_violations(.violations))]
    InvalidRegion {
        image: String,
        region: String,
        violations: Vec<RegionViolation>,
    },
    #[error("image `{image}` repeats region id `{region}`")]
    DuplicateRegion { image: String, region: String },
    #[error("duplicate image id `{0}`")]
    DuplicateImage(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("manifest io: {0}")]
    Io(String),
}

fn join_violations(v: &[RegionViolation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// What to do with images that contain several objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LocalizationStrategy {
    /// Drop multi-object images.
    DiscardMoi,
    /// One sub-image per object, cropped to the object's bounding box.
    SplitSubimages,
    /// Keep the image and isolate each object by its polygon.
    #[default]
    BoundingPolygons,
}

impl LocalizationStrategy {
    pub const ALL: [LocalizationStrategy; 3] = [
        LocalizationStrategy::DiscardMoi,
        LocalizationStrategy::SplitSubimages,
        LocalizationStrategy::BoundingPolygons,
    ];
}

impl FromStr for LocalizationStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "discard" | "discard_moi" => Ok(LocalizationStrategy::DiscardMoi),
            "split" | "split_subimages" => Ok(LocalizationStrategy::SplitSubimages),
            "polygons" | "bounding_polygons" => Ok(LocalizationStrategy::BoundingPolygons),
            other => Err(format!(
                "unknown strategy `{other}` (expected discard, split or polygons)"
            )),
        }
    }
}

/// One object in one image, the unit a classification session labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropRect>,
}

impl AnnotationTask {
    pub fn whole_image(image_id: impl Into<String>) -> Self {
        let image_id = image_id.into();
        AnnotationTask {
            task_id: image_id.clone(),
            image_id,
            region_id: None,
            crop: None,
        }
    }
}

/// Returns every violated region invariant; an empty list means the region
/// is valid.
pub fn validate_region(region: &ObjectRegion, width: u32, height: u32) -> Vec<RegionViolation> {
    let mut out = Vec::new();
    let poly = &region.polygon;
    if poly.len() < 3 {
        out.push(RegionViolation::TooFewVertices { count: poly.len() });
    }
    let mut finite = true;
    for (i, p) in poly.iter().enumerate() {
        if !p.x.is_finite() || !p.y.is_finite() {
            out.push(RegionViolation::NonFiniteCoordinate { vertex: i });
            finite = false;
        } else if p.x < 0.0 || p.y < 0.0 || p.x > width as f64 || p.y > height as f64 {
            out.push(RegionViolation::OutOfBounds {
                vertex: i,
                x: p.x,
                y: p.y,
            });
        }
    }
    if poly.len() >= 3 && finite {
        if let Some((a, b)) = first_self_intersection(poly) {
            out.push(RegionViolation::SelfIntersecting {
                edge_a: a,
                edge_b: b,
            });
        }
        if region.area() <= 0.0 {
            out.push(RegionViolation::ZeroArea);
        }
    }
    out
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Pairwise check over non-adjacent edges. Adjacent edges share a vertex and
/// only count when they fold back onto each other.
fn first_self_intersection(poly: &[Point]) -> Option<(usize, usize)> {
    let n = poly.len();
    let edge = |i: usize| (poly[i], poly[(i + 1) % n]);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a1, a2) = edge(i);
            let (b1, b2) = edge(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared vertex; overlapping collinear edges still fold.
                let (shared, other_a, other_b) = if j == i + 1 {
                    (a2, a1, b2)
                } else {
                    (a1, a2, b1)
                };
                if orient(shared, other_a, other_b) == 0.0 {
                    let da = (other_a.x - shared.x, other_a.y - shared.y);
                    let db = (other_b.x - shared.x, other_b.y - shared.y);
                    if da.0 * db.0 + da.1 * db.1 > 0.0 {
                        return Some((i, j));
                    }
                }
                continue;
            }
            if segments_intersect(a1, a2, b1, b2) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Checks image dimensions, region uniqueness and every region.
pub fn validate_image(image: &ImageRecord) -> Result<(), LocalizationError> {
    if image.width == 0 || image.height == 0 {
        return Err(LocalizationError::InvalidDimensions {
            image: image.image_id.clone(),
            width: image.width,
            height: image.height,
        });
    }
    let mut seen = HashSet::new();
    for r in &image.regions {
        if !seen.insert(r.region_id.as_str()) {
            return Err(LocalizationError::DuplicateRegion {
                image: image.image_id.clone(),
                region: r.region_id.clone(),
            });
        }
        let violations = validate_region(r, image.width, image.height);
        if !violations.is_empty() {
            return Err(LocalizationError::InvalidRegion {
                image: image.image_id.clone(),
                region: r.region_id.clone(),
                violations,
            });
        }
    }
    Ok(())
}

/// Expands one image into the tasks the strategy asks for. Images with at
/// most one region always give a single whole-image task.
pub fn expand_tasks(
    image: &ImageRecord,
    strategy: LocalizationStrategy,
) -> Result<Vec<AnnotationTask>, LocalizationError> {
    validate_image(image)?;
    if !image.is_multi_object() {
        return Ok(vec![AnnotationTask::whole_image(&image.image_id)]);
    }
    let tasks = match strategy {
        LocalizationStrategy::DiscardMoi => Vec::new(),
        LocalizationStrategy::SplitSubimages | LocalizationStrategy::BoundingPolygons => image
            .regions
            .iter()
            .map(|r| AnnotationTask {
                task_id: format!("{}/{}", image.image_id, r.region_id),
                image_id: image.image_id.clone(),
                region_id: Some(r.region_id.clone()),
                crop: match strategy {
                    LocalizationStrategy::SplitSubimages => r.crop(image.width, image.height),
                    _ => None,
                },
            })
            .collect(),
    };
    Ok(tasks)
}

/// Expands a whole dataset, rejecting duplicate image ids.
pub fn expand_dataset(
    images: &[ImageRecord],
    strategy: LocalizationStrategy,
) -> Result<Vec<AnnotationTask>, LocalizationError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for img in images {
        if !seen.insert(img.image_id.as_str()) {
            return Err(LocalizationError::DuplicateImage(img.image_id.clone()));
        }
        out.extend(expand_tasks(img, strategy)?);
    }
    Ok(out)
}

/// Number of tasks a dataset expands into, computed without materializing
/// them.
pub fn dataset_task_count(images: &[ImageRecord], strategy: LocalizationStrategy) -> usize {
    images
        .iter()
        .map(|img| match (img.regions.len(), strategy) {
            (0 | 1, _) => 1,
            (_, LocalizationStrategy::DiscardMoi) => 0,
            (n, _) => n,
        })
        .sum()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub images: usize,
    pub unlocalized_images: usize,
    pub single_object_images: usize,
    pub multi_object_images: usize,
    pub regions: usize,
    /// Region pairs within one image whose bounding boxes overlap (covers nesting).
    pub overlapping_region_pairs: usize,
}

pub fn dataset_stats(images: &[ImageRecord]) -> DatasetStats {
    let mut s = DatasetStats {
        images: images.len(),
        ..Default::default()
    };
    for img in images {
        match img.regions.len() {
            0 => s.unlocalized_images += 1,
            1 => s.single_object_images += 1,
            _ => s.multi_object_images += 1,
        }
        s.regions += img.regions.len();
        let boxes: Vec<_> = img
            .regions
            .iter()
            .filter_map(|r| r.crop(img.width, img.height))
            .collect();
        for i in 0..boxes.len() {
            for j in (i + 1)..boxes.len() {
                if boxes[i].intersects(&boxes[j]) {
                    s.overlapping_region_pairs += 1;
                }
            }
        }
    }
    s
}

/// Reads a dataset manifest: one JSON image record per line. Blank lines are
/// skipped.
pub fn read_manifest(reader: impl BufRead) -> Result<Vec<ImageRecord>, LocalizationError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| LocalizationError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ImageRecord =
            serde_json::from_str(&line).map_err(|e| LocalizationError::Manifest {
                line: i + 1,
                message: e.to_string(),
            })?;
        validate_image(&rec)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(mut writer: impl Write, images: &[ImageRecord]) -> std::io::Result<()> {
    for img in images {
        serde_json::to_writer(&mut writer, img)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
