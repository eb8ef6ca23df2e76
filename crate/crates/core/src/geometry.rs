//! Bounding-box primitives and the per-frame static spatial relationship score.
//!
//! Coordinates follow the image convention: x grows rightward, y grows
//! downward. A relation is scored as the product of a normalized center
//! distance along the relation's axis and the signed cosine between the
//! object-to-animal center vector and the relation's unit direction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates with `x0 < x1` and `y0 < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl TryFrom<RawBox> for BBox {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        BBox::new(raw.x0, raw.y0, raw.x1, raw.y1)
    }
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        for (name, v) in [("x0", x0), ("y0", y0), ("x1", x1), ("y1", y1)] {
            if !v.is_finite() {
                return Err(Error::InvalidBox(format!("field {name} is not finite ({v})")));
            }
        }
        if x0 >= x1 {
            return Err(Error::InvalidBox(format!(
                "field x0 must be < x1 (x0={x0}, x1={x1})"
            )));
        }
        if y0 >= y1 {
            return Err(Error::InvalidBox(format!(
                "field y0 must be < y1 (y0={y0}, y1={y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Box of the given size centered on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(
            cx - width / 2.0,
            cy - height / 2.0,
            cx + width / 2.0,
            cy + height / 2.0,
        )
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Extent along the given axis: width for x, height for y.
    pub fn extent(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.width(),
            Axis::Y => self.height(),
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        Self::new(self.x0 * s, self.y0 * s, self.x1 * s, self.y1 * s)
    }
}

/// Center point of a box.
pub fn center(b: &BBox) -> (f64, f64) {
    b.center()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

/// Static relation of the animal with respect to the object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SpatialRelation {
    Left,
    Right,
    Top,
}

impl SpatialRelation {
    pub const ALL: [SpatialRelation; 3] = [Self::Left, Self::Right, Self::Top];

    pub fn axis(self) -> Axis {
        match self {
            Self::Left | Self::Right => Axis::X,
            Self::Top => Axis::Y,
        }
    }

    /// Signed unit direction in image coordinates (y down).
    pub fn unit(self) -> (f64, f64) {
        match self {
            Self::Left => (-1.0, 0.0),
            Self::Right => (1.0, 0.0),
            Self::Top => (0.0, -1.0),
        }
    }

    /// Lower-case keyword used inside prompt phrases ("left", "right", "top").
    pub fn keyword(self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Right => "right",
            Self::Top => "top",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "left" => Some(Self::Left),
            "right" => Some(Self::Right),
            "top" => Some(Self::Top),
            _ => None,
        }
    }
}

impl fmt::Display for SpatialRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Left => "LEFT",
            Self::Right => "RIGHT",
            Self::Top => "TOP",
        })
    }
}

impl FromStr for SpatialRelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LEFT" => Ok(Self::Left),
            "RIGHT" => Ok(Self::Right),
            "TOP" => Ok(Self::Top),
            _ => Err(Error::InvalidConfig(format!("unknown spatial relation {s:?}"))),
        }
    }
}

pub fn axis_unit(rel: SpatialRelation) -> (f64, f64) {
    rel.unit()
}

/// Center distance along the relation's axis, normalized by the mean extent
/// of the two boxes on that axis and clipped to `[0, 1]`.
pub fn center_distance_term(animal: &BBox, object: &BBox, rel: SpatialRelation) -> f64 {
    let axis = rel.axis();
    let (ax, ay) = animal.center();
    let (ox, oy) = object.center();
    let delta = match axis {
        Axis::X => ax - ox,
        Axis::Y => ay - oy,
    };
    let mean_extent = (animal.extent(axis) + object.extent(axis)) / 2.0;
    (delta / mean_extent).abs().clamp(0.0, 1.0)
}

/// Signed cosine between the object-to-animal center vector and the
/// relation's unit direction. Coincident centers give 0.
pub fn alignment_cosine_term(animal: &BBox, object: &BBox, rel: SpatialRelation) -> f64 {
    let (ax, ay) = animal.center();
    let (ox, oy) = object.center();
    let (vx, vy) = (ax - ox, ay - oy);
    let norm = vx.hypot(vy);
    if norm == 0.0 {
        return 0.0;
    }
    let (ux, uy) = rel.unit();
    ((vx * ux + vy * uy) / norm).clamp(-1.0, 1.0)
}

/// Per-frame static relation score in `[-1, 1]`.
pub fn ssr_score(animal: &BBox, object: &BBox, rel: SpatialRelation) -> f64 {
    center_distance_term(animal, object, rel) * alignment_cosine_term(animal, object, rel)
}
