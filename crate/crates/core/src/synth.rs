//! Parametric bounding-box motion that realizes, holds or reverses a given
//! transition type. Used to build trajectories with known scores.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, SpatialRelation};
use crate::trajectory::{DsrType, FrameObservation, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Straight line from the initial side to the final side.
    Linear,
    /// Circular sweep around the object that never passes below it.
    Arc,
    /// Stays on the initial side.
    Hold,
    /// Linear path between the point reflections of both endpoints.
    Reversed,
}

impl std::str::FromStr for PathKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "arc" => Ok(Self::Arc),
            "hold" => Ok(Self::Hold),
            "reversed" => Ok(Self::Reversed),
            _ => Err(Error::InvalidConfig(format!("unknown path {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    pub sample_id: String,
    pub prompt_id: String,
    pub dsr_type: DsrType,
    pub frames: usize,
    pub object: BBox,
    /// Animal box width and height.
    pub animal_size: (f64, f64),
    pub path: PathKind,
    /// Standard deviation of Gaussian noise on the animal center, in pixels.
    #[serde(default)]
    pub jitter: f64,
    /// Probability that a frame loses one of its two detections.
    #[serde(default)]
    pub dropout: f64,
    /// Frames whose animal count is set to 2.
    #[serde(default)]
    pub multi_instance_frames: BTreeSet<u32>,
    #[serde(default)]
    pub seed: u64,
}

impl MotionSpec {
    /// Object 20x20 centered at (50, 50) with a 20x20 animal and no noise.
    pub fn canonical(dsr_type: DsrType, frames: usize, path: PathKind) -> Self {
        Self {
            sample_id: "s0".into(),
            prompt_id: "p0".into(),
            dsr_type,
            frames,
            object: BBox::from_center(50.0, 50.0, 20.0, 20.0).expect("positive size"),
            animal_size: (20.0, 20.0),
            path,
            jitter: 0.0,
            dropout: 0.0,
            multi_instance_frames: BTreeSet::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 frames (got {})", self.frames)));
        }
        let (w, h) = self.animal_size;
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(Error::InvalidConfig("animal_size must be positive".into()));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::InvalidConfig(format!("jitter must be >= 0 (got {})", self.jitter)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout must be in [0, 1) (got {})", self.dropout)));
        }
        if let Some(&f) = self.multi_instance_frames.iter().find(|&&f| f as usize >= self.frames) {
            return Err(Error::InvalidConfig(format!(
                "multi-instance frame {f} outside 0..{}",
                self.frames
            )));
        }
        Ok(())
    }

    fn mean_extent(&self, rel: SpatialRelation) -> f64 {
        let animal = BBox::from_center(0.0, 0.0, self.animal_size.0, self.animal_size.1)
            .expect("validated size");
        (animal.extent(rel.axis()) + self.object.extent(rel.axis())) / 2.0
    }

    /// Animal center placed two mean extents from the object center toward `rel`.
    pub fn endpoint(&self, rel: SpatialRelation) -> (f64, f64) {
        let (ox, oy) = self.object.center();
        let (ux, uy) = rel.unit();
        let r = 2.0 * self.mean_extent(rel);
        (ox + r * ux, oy + r * uy)
    }
}

// Angles in image coordinates (y down) chosen so that every sweep between
// them passes over the top of the object.
fn side_angle(rel: SpatialRelation) -> f64 {
    match rel {
        SpatialRelation::Left => PI,
        SpatialRelation::Top => 1.5 * PI,
        SpatialRelation::Right => 2.0 * PI,
    }
}

fn lerp(a: (f64, f64), b: (f64, f64), t: f64) -> (f64, f64) {
    (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
}

/// Noise-free animal center at progress `t` in `[0, 1]`.
pub fn path_point(spec: &MotionSpec, t: f64) -> (f64, f64) {
    let init = spec.dsr_type.initial_relation();
    let fin = spec.dsr_type.final_relation();
    let start = spec.endpoint(init);
    let end = spec.endpoint(fin);
    match spec.path {
        PathKind::Linear => lerp(start, end, t),
        PathKind::Hold => start,
        PathKind::Reversed => {
            let (ox, oy) = spec.object.center();
            let flip = |p: (f64, f64)| (2.0 * ox - p.0, 2.0 * oy - p.1);
            lerp(flip(start), flip(end), t)
        }
        PathKind::Arc => {
            let (ox, oy) = spec.object.center();
            let (a0, a1) = (side_angle(init), side_angle(fin));
            let (r0, r1) = (2.0 * spec.mean_extent(init), 2.0 * spec.mean_extent(fin));
            let a = a0 + t * (a1 - a0);
            let r = r0 + t * (r1 - r0);
            (ox + r * a.cos(), oy + r * a.sin())
        }
    }
}

pub fn simulate_trajectory(spec: &MotionSpec) -> Result<Trajectory> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.jitter).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let (w, h) = spec.animal_size;
    let last = (spec.frames - 1) as f64;
    let mut frames = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let (cx, cy) = path_point(spec, i as f64 / last);
        // draws happen on every frame so streams line up across noise levels
        let (dx, dy) = (noise.sample(&mut rng), noise.sample(&mut rng));
        let drop = rng.random::<f64>() < spec.dropout;
        let drop_animal = rng.random::<bool>();
        let mut animal = Some(BBox::from_center(cx + dx, cy + dy, w, h)?);
        let mut object = Some(spec.object);
        if drop {
            if drop_animal {
                animal = None;
            } else {
                object = None;
            }
        }
        let animal_count = match (&animal, spec.multi_instance_frames.contains(&(i as u32))) {
            (_, true) => 2,
            (Some(_), false) => 1,
            (None, false) => 0,
        };
        let object_count = u32::from(object.is_some());
        frames.push(FrameObservation::new(i as u32, animal, object, animal_count, object_count)?);
    }
    Trajectory::new(spec.sample_id.clone(), spec.prompt_id.clone(), spec.dsr_type, frames)
}
