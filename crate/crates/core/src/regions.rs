//! 68-point landmarks and the eight facial regions used to group keypoints.

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Keypoint;

pub const N_LANDMARKS: usize = 68;

/// Facial regions in canonical concatenation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionId {
    EntireFace,
    Mouth,
    InnerMouth,
    RightEyebrow,
    LeftEyebrow,
    RightEye,
    LeftEye,
    Nose,
}

impl RegionId {
    pub const ALL: [RegionId; 8] = [
        RegionId::EntireFace,
        RegionId::Mouth,
        RegionId::InnerMouth,
        RegionId::RightEyebrow,
        RegionId::LeftEyebrow,
        RegionId::RightEye,
        RegionId::LeftEye,
        RegionId::Nose,
    ];

    pub const COUNT: usize = 8;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionId::EntireFace => "entire_face",
            RegionId::Mouth => "mouth",
            RegionId::InnerMouth => "inner_mouth",
            RegionId::RightEyebrow => "right_eyebrow",
            RegionId::LeftEyebrow => "left_eyebrow",
            RegionId::RightEye => "right_eye",
            RegionId::LeftEye => "left_eye",
            RegionId::Nose => "nose",
        }
    }

    /// 0-indexed iBUG landmark indices of the region, `None` for the entire face.
    pub fn landmark_range(self) -> Option<Range<usize>> {
        match self {
            RegionId::EntireFace => None,
            RegionId::Mouth => Some(48..68),
            RegionId::InnerMouth => Some(60..68),
            RegionId::RightEyebrow => Some(17..22),
            RegionId::LeftEyebrow => Some(22..27),
            RegionId::RightEye => Some(36..42),
            RegionId::LeftEye => Some(42..48),
            RegionId::Nose => Some(27..36),
        }
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 68 landmark coordinates in iBUG order.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet {
    points: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct LandmarkJson {
    points: Vec<Vec<f64>>,
}

impl LandmarkSet {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() != N_LANDMARKS {
            return Err(Error::LandmarkCount(points.len()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Data("landmark coordinates must be finite".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: LandmarkJson = serde_json::from_str(text)?;
        if raw.points.len() != N_LANDMARKS {
            return Err(Error::LandmarkCount(raw.points.len()));
        }
        let points = raw
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| match p.as_slice() {
                &[x, y] => Ok((x, y)),
                _ => Err(Error::Data(format!(
                    "landmark {i} must be an [x, y] pair, found {} values",
                    p.len()
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn to_json(&self) -> String {
        let raw = LandmarkJson {
            points: self.points.iter().map(|&(x, y)| vec![x, y]).collect(),
        };
        serde_json::to_string(&raw).expect("landmarks serialize")
    }
}

pub fn load_landmarks(path: impl AsRef<Path>) -> Result<LandmarkSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LandmarkSet::from_json(&text)
}

pub fn save_landmarks(lms: &LandmarkSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, lms.to_json()).map_err(|e| Error::io(path, e))
}

type Point = (f64, f64);

#[inline]
fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

#[inline]
fn on_segment(p: Point, a: Point, b: Point) -> bool {
    cross(a, b, p) == 0.0
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

/// Geometry of one facial region.
#[derive(Clone, Debug, PartialEq)]
pub enum RegionShape {
    /// Convex polygon, vertices in positive-cross-product order, no collinear vertices.
    Polygon(Vec<Point>),
    /// All landmarks collinear: the segment between the two extremes.
    Segment(Point, Point),
    /// All landmarks coincide.
    Empty,
}

impl RegionShape {
    /// Convex hull (monotone chain) of a point set.
    pub fn hull(points: &[Point]) -> Self {
        let mut pts: Vec<Point> = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.dedup();
        match pts.len() {
            0 | 1 => return RegionShape::Empty,
            2 => return RegionShape::Segment(pts[0], pts[1]),
            _ => {}
        }
        let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
        for &p in &pts {
            while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        let lower_len = hull.len() + 1;
        for &p in pts.iter().rev().skip(1) {
            while hull.len() >= lower_len
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
        if hull.len() < 3 {
            RegionShape::Segment(pts[0], pts[pts.len() - 1])
        } else {
            RegionShape::Polygon(hull)
        }
    }

    /// Boundary-inclusive membership.
    pub fn contains(&self, p: Point) -> bool {
        match self {
            RegionShape::Polygon(v) => {
                let n = v.len();
                (0..n).all(|i| cross(v[i], v[(i + 1) % n], p) >= 0.0)
            }
            RegionShape::Segment(a, b) => on_segment(p, *a, *b),
            RegionShape::Empty => false,
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            RegionShape::Polygon(v) => {
                let n = v.len();
                (0..n)
                    .map(|i| v[i].0 * v[(i + 1) % n].1 - v[(i + 1) % n].0 * v[i].1)
                    .sum::<f64>()
                    / 2.0
            }
            _ => 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, RegionShape::Empty)
    }
}

/// Set of regions a keypoint belongs to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct RegionSet(u8);

impl RegionSet {
    pub fn insert(&mut self, r: RegionId) {
        self.0 |= 1 << r.index();
    }

    pub fn contains(self, r: RegionId) -> bool {
        self.0 >> r.index() & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = RegionId> {
        RegionId::ALL.into_iter().filter(move |r| self.contains(*r))
    }
}

/// Hulls of the seven landmark-defined regions.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionPartition {
    shapes: Vec<RegionShape>,
}

impl RegionPartition {
    pub fn shape(&self, region: RegionId) -> Option<&RegionShape> {
        match region {
            RegionId::EntireFace => None,
            r => Some(&self.shapes[r.index() - 1]),
        }
    }

    /// Regions whose landmark subset collapsed to a single point.
    pub fn empty_regions(&self) -> Vec<RegionId> {
        RegionId::ALL[1..]
            .iter()
            .copied()
            .filter(|r| self.shape(*r).is_some_and(RegionShape::is_empty))
            .collect()
    }

    /// Data-quality warnings; currently whether the inner mouth escapes the mouth hull.
    pub fn validate(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let outer = self.shape(RegionId::Mouth).expect("mouth shape");
        let inner_vertices: Vec<Point> = match self.shape(RegionId::InnerMouth).expect("inner") {
            RegionShape::Polygon(v) => v.clone(),
            RegionShape::Segment(a, b) => vec![*a, *b],
            RegionShape::Empty => Vec::new(),
        };
        if inner_vertices.iter().any(|p| !outer.contains(*p)) {
            warnings.push("inner_mouth hull is not contained in the mouth hull".to_string());
        }
        for r in self.empty_regions() {
            warnings.push(format!("{r} landmarks are degenerate; region is empty"));
        }
        warnings
    }
}

pub fn build_partition(lms: &LandmarkSet) -> RegionPartition {
    let shapes = RegionId::ALL[1..]
        .iter()
        .map(|r| {
            let range = r.landmark_range().expect("polygonal region");
            RegionShape::hull(&lms.points[range])
        })
        .collect();
    RegionPartition { shapes }
}

pub fn assign_regions(kp: &Keypoint, part: &RegionPartition) -> RegionSet {
    let p = (kp.x as f64, kp.y as f64);
    let mut set = RegionSet::default();
    set.insert(RegionId::EntireFace);
    for (shape, region) in part.shapes.iter().zip(&RegionId::ALL[1..]) {
        if shape.contains(p) {
            set.insert(*region);
        }
    }
    set
}
