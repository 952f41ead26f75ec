use serde::{Deserialize, Serialize};

use super::{convex_hull, rasterize, BitMask, Point};
use crate::error::{Error, Result};

pub const LANDMARK_COUNT: usize = 68;

/// Axis-aligned face rectangle in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct FaceBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl From<[f64; 4]> for FaceBox {
    fn from([x, y, width, height]: [f64; 4]) -> Self {
        FaceBox {
            x,
            y,
            width,
            height,
        }
    }
}

impl From<FaceBox> for [f64; 4] {
    fn from(b: FaceBox) -> Self {
        [b.x, b.y, b.width, b.height]
    }
}

impl FaceBox {
    fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.width, self.height]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x < 0.0 || self.y < 0.0 || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::InvalidValue(format!("invalid face box {self:?}")));
        }
        Ok(())
    }

    /// Bounding box of `points`, at least one pixel wide and tall.
    pub fn around(points: &[Point]) -> FaceBox {
        let min_x = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let min_y = points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_x = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let max_y = points.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        FaceBox {
            x: min_x,
            y: min_y,
            width: (max_x - min_x).max(1.0),
            height: (max_y - min_y).max(1.0),
        }
    }
}

/// The 68 facial landmarks of one detected face, numbered 1..=68.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point>,
    face_box: FaceBox,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>, face_box: FaceBox) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::InvalidValue(format!(
                "landmark count {} ≠ {LANDMARK_COUNT}",
                points.len()
            )));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !p.x.is_finite() || !p.y.is_finite() || p.x < 0.0 || p.y < 0.0)
        {
            return Err(Error::InvalidValue(format!(
                "landmark coordinates must be finite and non-negative, got ({}, {})",
                p.x, p.y
            )));
        }
        face_box.validate()?;
        Ok(LandmarkSet { points, face_box })
    }

    /// Uses the landmarks' bounding box as the face box.
    pub fn with_derived_box(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidValue(format!(
                "landmark count 0 ≠ {LANDMARK_COUNT}"
            )));
        }
        let b = FaceBox::around(&points);
        Self::new(points, b)
    }

    /// The canonical frontal template placed in `face_box`.
    pub fn template(face_box: FaceBox) -> Result<Self> {
        let points = TEMPLATE
            .iter()
            .map(|&(x, y)| {
                Point::new(
                    face_box.x + x * face_box.width,
                    face_box.y + (y - TEMPLATE_TOP) * face_box.height,
                )
            })
            .collect();
        Self::new(points, face_box)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn face_box(&self) -> FaceBox {
        self.face_box
    }

    /// Landmark by its 1-based number.
    pub fn landmark(&self, number: usize) -> Point {
        self.points[number - 1]
    }

    /// Maps image coordinates into a `width` x `height` grid spanning the face box.
    pub fn to_grid(&self, p: Point, width: usize, height: usize) -> Point {
        Point::new(
            (p.x - self.face_box.x) * width as f64 / self.face_box.width,
            (p.y - self.face_box.y) * height as f64 / self.face_box.height,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiRegion {
    Jaw,
    NoseMouth,
}

/// 1-based landmark numbers that delimit each region.
pub fn roi_landmark_indices(region: RoiRegion) -> Vec<usize> {
    match region {
        RoiRegion::Jaw => (5..=13).chain(31..=36).chain(49..=68).collect(),
        RoiRegion::NoseMouth => (32..=36).chain(49..=68).collect(),
    }
}

/// Rasterizes the region's convex hull on a grid covering the face box.
///
/// Segmentation bitmaps are crops of the face box, so `grid_w` x `grid_h`
/// is normally the bitmap's own size.
pub fn build_roi_raster(
    landmarks: &LandmarkSet,
    region: RoiRegion,
    grid_w: usize,
    grid_h: usize,
) -> Result<BitMask> {
    let selected: Vec<Point> = roi_landmark_indices(region)
        .into_iter()
        .map(|n| landmarks.to_grid(landmarks.landmark(n), grid_w, grid_h))
        .collect();
    let hull = convex_hull(&selected)?;
    let raster = rasterize(&hull, grid_w, grid_h)?;
    if raster.is_empty() {
        return Err(Error::EmptyRoi);
    }
    Ok(raster)
}

/// Vertical offset of [`TEMPLATE`] inside its unit face box.
const TEMPLATE_TOP: f64 = 0.1;

/// Mean frontal-face layout of the 68-point scheme in a unit face box
/// (x in [0, 1], y in [0.1, 1.1]).
pub const TEMPLATE: [(f64, f64); LANDMARK_COUNT] = [
    (0.0792396913815, 0.339223741112),
    (0.0829219487236, 0.456955367943),
    (0.0967927109165, 0.575648016728),
    (0.122141515615, 0.691921601066),
    (0.168687863544, 0.800341263616),
    (0.239789390707, 0.895732504778),
    (0.325662452515, 0.977068762493),
    (0.422318282013, 1.04329000149),
    (0.531777802068, 1.06080371126),
    (0.641296298053, 1.03981924107),
    (0.738105872266, 0.972268833998),
    (0.824444363295, 0.889624082279),
    (0.894792677532, 0.792494155836),
    (0.939395486253, 0.681546643421),
    (0.96111933829, 0.562238253072),
    (0.970579841181, 0.441758925744),
    (0.971193274221, 0.322118743967),
    (0.163846223133, 0.249151738053),
    (0.21780354657, 0.204255863861),
    (0.291299351124, 0.192367318323),
    (0.367460241458, 0.203582210627),
    (0.4392945113, 0.233135599851),
    (0.586445962425, 0.228141644834),
    (0.660152671635, 0.195923841854),
    (0.737466449096, 0.182360984545),
    (0.813236546239, 0.192828009114),
    (0.8707571886, 0.235293377042),
    (0.51534533827, 0.31863546193),
    (0.516221448289, 0.396200446263),
    (0.517118861835, 0.473797687758),
    (0.51816430343, 0.553157797772),
    (0.433701156035, 0.604054457668),
    (0.475501237769, 0.62076344024),
    (0.520712933176, 0.634268222208),
    (0.565874114041, 0.618796581487),
    (0.607054002672, 0.60157671656),
    (0.252418718401, 0.331052263829),
    (0.298663015648, 0.302646354002),
    (0.355749724218, 0.303020650651),
    (0.403718978315, 0.33867711083),
    (0.352507175597, 0.349987615384),
    (0.296791759886, 0.350478978225),
    (0.631326076346, 0.334136672344),
    (0.679073381078, 0.29645404267),
    (0.73597236153, 0.294721285802),
    (0.782865376271, 0.321305281656),
    (0.740312274764, 0.341849376713),
    (0.68499850091, 0.343734332172),
    (0.353167761422, 0.746189164237),
    (0.414587777921, 0.719053835073),
    (0.477677654595, 0.706835892494),
    (0.522732900812, 0.717092275768),
    (0.569832064287, 0.705414478982),
    (0.635195811927, 0.71565572516),
    (0.69951672331, 0.739419187253),
    (0.639447159575, 0.805236879972),
    (0.576410514055, 0.835436670169),
    (0.525398405766, 0.841706377792),
    (0.47641545769, 0.837505914975),
    (0.41379548902, 0.810045601727),
    (0.380084785646, 0.749979603086),
    (0.477955996282, 0.74513234612),
    (0.523389793327, 0.748924302636),
    (0.571057789237, 0.74332894691),
    (0.672409137852, 0.744177032192),
    (0.572539621444, 0.776609286626),
    (0.5240106503, 0.783370783245),
    (0.477561227414, 0.778476346951),
];
