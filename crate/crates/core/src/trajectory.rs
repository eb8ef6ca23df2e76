//! Per-video relation score sequences, the dynamic relation score, and the
//! validity filter applied before any sample is used for curation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ssr_score, BBox, SpatialRelation};
use crate::io::{fixed6_opt, deserialize_type_name};

/// The six initial-to-final relation transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DsrType {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl DsrType {
    pub const ALL: [DsrType; 6] = [Self::A, Self::B, Self::C, Self::D, Self::E, Self::F];

    pub fn initial_relation(self) -> SpatialRelation {
        use SpatialRelation::*;
        match self {
            Self::A | Self::D => Left,
            Self::B | Self::E => Top,
            Self::C | Self::F => Right,
        }
    }

    pub fn final_relation(self) -> SpatialRelation {
        use SpatialRelation::*;
        match self {
            Self::A | Self::C => Top,
            Self::B | Self::F => Left,
            Self::D | Self::E => Right,
        }
    }

    pub fn from_relations(initial: SpatialRelation, final_: SpatialRelation) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.initial_relation() == initial && t.final_relation() == final_)
    }

    pub fn letter(self) -> char {
        match self {
            Self::A => 'A',
            Self::B => 'B',
            Self::C => 'C',
            Self::D => 'D',
            Self::E => 'E',
            Self::F => 'F',
        }
    }

    /// Informational name such as `left-to-top`.
    pub fn name(self) -> &'static str {
        match self {
            Self::A => "left-to-top",
            Self::B => "top-to-left",
            Self::C => "right-to-top",
            Self::D => "left-to-right",
            Self::E => "top-to-right",
            Self::F => "right-to-left",
        }
    }
}

impl fmt::Display for DsrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for DsrType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = Self::ALL
            .into_iter()
            .find(|t| s.eq_ignore_ascii_case(&t.letter().to_string()) || s == t.name());
        t.ok_or_else(|| Error::InvalidConfig(format!("unknown dsr_type {s:?}")))
    }
}

/// Detections for a single frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrame")]
pub struct FrameObservation {
    pub index: u32,
    pub animal: Option<BBox>,
    pub object: Option<BBox>,
    pub animal_count: u32,
    pub object_count: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    index: u32,
    animal: Option<BBox>,
    object: Option<BBox>,
    animal_count: u32,
    object_count: u32,
}

impl TryFrom<RawFrame> for FrameObservation {
    type Error = Error;

    fn try_from(r: RawFrame) -> Result<Self> {
        FrameObservation::new(r.index, r.animal, r.object, r.animal_count, r.object_count)
    }
}

impl FrameObservation {
    pub fn new(
        index: u32,
        animal: Option<BBox>,
        object: Option<BBox>,
        animal_count: u32,
        object_count: u32,
    ) -> Result<Self> {
        if animal.is_some() && animal_count == 0 {
            return Err(Error::InvalidTrajectory(format!(
                "frame {index}: field animal_count is 0 but an animal box is present"
            )));
        }
        if object.is_some() && object_count == 0 {
            return Err(Error::InvalidTrajectory(format!(
                "frame {index}: field object_count is 0 but an object box is present"
            )));
        }
        Ok(Self {
            index,
            animal,
            object,
            animal_count,
            object_count,
        })
    }

    /// A clean frame with exactly one instance of each entity.
    pub fn clean(index: u32, animal: BBox, object: BBox) -> Self {
        Self {
            index,
            animal: Some(animal),
            object: Some(object),
            animal_count: 1,
            object_count: 1,
        }
    }

    fn usable_boxes(&self) -> Option<(&BBox, &BBox)> {
        if self.animal_count != 1 || self.object_count != 1 {
            return None;
        }
        Some((self.animal.as_ref()?, self.object.as_ref()?))
    }

    pub fn is_effective(&self) -> bool {
        self.usable_boxes().is_some()
    }
}

/// Tracked detections of one animal and one static object across a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TrajectoryRecord", try_from = "TrajectoryRecord")]
pub struct Trajectory {
    sample_id: String,
    prompt_id: String,
    dsr_type: DsrType,
    frames: Vec<FrameObservation>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryRecord {
    sample_id: String,
    prompt_id: String,
    dsr_type: DsrType,
    #[serde(default, deserialize_with = "deserialize_type_name")]
    dsr_type_name: Option<String>,
    frames: Vec<FrameObservation>,
}

impl From<Trajectory> for TrajectoryRecord {
    fn from(t: Trajectory) -> Self {
        Self {
            sample_id: t.sample_id,
            prompt_id: t.prompt_id,
            dsr_type: t.dsr_type,
            dsr_type_name: Some(t.dsr_type.name().to_string()),
            frames: t.frames,
        }
    }
}

impl TryFrom<TrajectoryRecord> for Trajectory {
    type Error = Error;

    fn try_from(r: TrajectoryRecord) -> Result<Self> {
        if let Some(name) = &r.dsr_type_name {
            if name != r.dsr_type.name() {
                return Err(Error::InvalidTrajectory(format!(
                    "field dsr_type_name {name:?} does not match dsr_type {}",
                    r.dsr_type
                )));
            }
        }
        Trajectory::new(r.sample_id, r.prompt_id, r.dsr_type, r.frames)
    }
}

impl Trajectory {
    pub fn new(
        sample_id: impl Into<String>,
        prompt_id: impl Into<String>,
        dsr_type: DsrType,
        frames: Vec<FrameObservation>,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidTrajectory("field frames is empty".into()));
        }
        if let Some(w) = frames.windows(2).find(|w| w[0].index >= w[1].index) {
            return Err(Error::InvalidTrajectory(format!(
                "field frames: index {} does not strictly increase after {}",
                w[1].index, w[0].index
            )));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            prompt_id: prompt_id.into(),
            dsr_type,
            frames,
        })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn prompt_id(&self) -> &str {
        &self.prompt_id
    }

    pub fn dsr_type(&self) -> DsrType {
        self.dsr_type
    }

    pub fn frames(&self) -> &[FrameObservation] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Same trajectory with the frame order reversed and indices renumbered.
    pub fn reversed(&self) -> Self {
        let frames = self
            .frames
            .iter()
            .rev()
            .enumerate()
            .map(|(i, f)| FrameObservation {
                index: i as u32,
                ..f.clone()
            })
            .collect();
        Self {
            frames,
            ..self.clone()
        }
    }

    fn effective_boxes(&self) -> Vec<(&BBox, &BBox)> {
        self.frames.iter().filter_map(|f| f.usable_boxes()).collect()
    }
}

/// Frame indices where exactly one animal and one object are detected with boxes.
pub fn effective_frames(traj: &Trajectory) -> Vec<u32> {
    traj.frames
        .iter()
        .filter(|f| f.is_effective())
        .map(|f| f.index)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    MultipleInstances,
    TooFewFrames,
}

impl InvalidReason {
    pub fn tag(self) -> &'static str {
        match self {
            Self::MultipleInstances => "multiple_instances",
            Self::TooFewFrames => "too_few_frames",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Validity {
    pub valid: bool,
    pub reasons: Vec<InvalidReason>,
}

/// Applies the single-instance and minimum-frame criteria.
///
/// At least two effective frames are always required, since the transition
/// gaps compare the first and last effective frame.
pub fn validity_check(traj: &Trajectory, min_frames: usize) -> Validity {
    let mut reasons = Vec::new();
    if traj
        .frames
        .iter()
        .any(|f| f.animal_count >= 2 || f.object_count >= 2)
    {
        reasons.push(InvalidReason::MultipleInstances);
    }
    let k = traj.frames.iter().filter(|f| f.is_effective()).count();
    if k < min_frames.max(2) {
        reasons.push(InvalidReason::TooFewFrames);
    }
    Validity {
        valid: reasons.is_empty(),
        reasons,
    }
}

/// Per-frame scores for one relation; `None` where the frame is not effective.
#[derive(Debug, Clone, PartialEq)]
pub struct SsrSequence {
    pub relation: SpatialRelation,
    pub entries: Vec<Option<f64>>,
}

impl SsrSequence {
    pub fn present(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().flatten().copied()
    }
}

pub fn ssr_sequence(traj: &Trajectory, rel: SpatialRelation) -> SsrSequence {
    SsrSequence {
        relation: rel,
        entries: traj
            .frames
            .iter()
            .map(|f| f.usable_boxes().map(|(a, o)| ssr_score(a, o, rel)))
            .collect(),
    }
}

/// Endpoint window size and minimum effective frame count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub window: usize,
    pub min_frames: usize,
}

impl ScoringConfig {
    pub const DEFAULT_WINDOW: usize = 8;
    pub const DEFAULT_MIN_FRAMES: usize = 20;

    pub fn new(window: usize, min_frames: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidConfig("window size m must be >= 1".into()));
        }
        Ok(Self { window, min_frames })
    }
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            window: Self::DEFAULT_WINDOW,
            min_frames: Self::DEFAULT_MIN_FRAMES,
        }
    }
}

/// The endpoint and gap components of one score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreTerms {
    pub r_init: f64,
    pub r_f: f64,
    pub g_init: f64,
    pub g_f: f64,
    pub raw_score: f64,
    pub score: f64,
}

/// Result of scoring one trajectory.
///
/// Score terms are filled whenever at least two effective frames exist, even
/// for invalid samples; downstream curation ignores scores of invalid samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ReportRecord", try_from = "ReportRecord")]
pub struct DsrScoreReport {
    pub sample_id: String,
    pub prompt_id: String,
    pub dsr_type: DsrType,
    pub effective_frames: usize,
    pub window: usize,
    pub window_truncated: bool,
    pub valid: bool,
    pub invalid_reasons: Vec<InvalidReason>,
    pub terms: Option<ScoreTerms>,
}

impl DsrScoreReport {
    pub fn score(&self) -> Option<f64> {
        self.terms.map(|t| t.score)
    }

    pub fn raw_score(&self) -> Option<f64> {
        self.terms.map(|t| t.raw_score)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportRecord {
    sample_id: String,
    prompt_id: String,
    dsr_type: DsrType,
    #[serde(default, deserialize_with = "deserialize_type_name")]
    dsr_type_name: Option<String>,
    effective_frames: usize,
    window: usize,
    window_truncated: bool,
    valid: bool,
    invalid_reasons: Vec<InvalidReason>,
    #[serde(default, serialize_with = "fixed6_opt", skip_serializing_if = "Option::is_none")]
    r_init: Option<f64>,
    #[serde(default, serialize_with = "fixed6_opt", skip_serializing_if = "Option::is_none")]
    r_f: Option<f64>,
    #[serde(default, serialize_with = "fixed6_opt", skip_serializing_if = "Option::is_none")]
    g_init: Option<f64>,
    #[serde(default, serialize_with = "fixed6_opt", skip_serializing_if = "Option::is_none")]
    g_f: Option<f64>,
    #[serde(default, serialize_with = "fixed6_opt", skip_serializing_if = "Option::is_none")]
    raw_score: Option<f64>,
    #[serde(default, serialize_with = "fixed6_opt", skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

impl From<DsrScoreReport> for ReportRecord {
    fn from(r: DsrScoreReport) -> Self {
        let t = r.terms;
        Self {
            sample_id: r.sample_id,
            prompt_id: r.prompt_id,
            dsr_type: r.dsr_type,
            dsr_type_name: Some(r.dsr_type.name().to_string()),
            effective_frames: r.effective_frames,
            window: r.window,
            window_truncated: r.window_truncated,
            valid: r.valid,
            invalid_reasons: r.invalid_reasons,
            r_init: t.map(|t| t.r_init),
            r_f: t.map(|t| t.r_f),
            g_init: t.map(|t| t.g_init),
            g_f: t.map(|t| t.g_f),
            raw_score: t.map(|t| t.raw_score),
            score: t.map(|t| t.score),
        }
    }
}

impl TryFrom<ReportRecord> for DsrScoreReport {
    type Error = Error;

    fn try_from(r: ReportRecord) -> Result<Self> {
        let terms = match (r.r_init, r.r_f, r.g_init, r.g_f, r.raw_score, r.score) {
            (Some(r_init), Some(r_f), Some(g_init), Some(g_f), Some(raw_score), Some(score)) => {
                if !(0.0..=1.0).contains(&score) {
                    return Err(Error::OutOfRange(format!("field score {score} outside [0, 1]")));
                }
                Some(ScoreTerms {
                    r_init,
                    r_f,
                    g_init,
                    g_f,
                    raw_score,
                    score,
                })
            }
            (None, None, None, None, None, None) => None,
            _ => {
                return Err(Error::InvalidTrajectory(
                    "score fields must be either all present or all absent".into(),
                ))
            }
        };
        if r.valid && terms.is_none() {
            return Err(Error::InvalidTrajectory(
                "field score missing on a valid report".into(),
            ));
        }
        if r.valid != r.invalid_reasons.is_empty() {
            return Err(Error::InvalidTrajectory(
                "field valid disagrees with invalid_reasons".into(),
            ));
        }
        Ok(Self {
            sample_id: r.sample_id,
            prompt_id: r.prompt_id,
            dsr_type: r.dsr_type,
            effective_frames: r.effective_frames,
            window: r.window,
            window_truncated: r.window_truncated,
            valid: r.valid,
            invalid_reasons: r.invalid_reasons,
            terms,
        })
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Scores one trajectory against its transition type.
///
/// Endpoints are the first and last effective frames. When fewer than `2m`
/// effective frames exist each endpoint window shrinks to half the available
/// frames and `window_truncated` is set.
pub fn dsr_score(traj: &Trajectory, cfg: &ScoringConfig) -> DsrScoreReport {
    let boxes = traj.effective_boxes();
    let k = boxes.len();
    let validity = validity_check(traj, cfg.min_frames);

    let window_truncated = k < 2 * cfg.window;
    let window = if window_truncated { k / 2 } else { cfg.window };

    let terms = (k >= 2).then(|| {
        let init_rel = traj.dsr_type.initial_relation();
        let final_rel = traj.dsr_type.final_relation();
        let s_init: Vec<f64> = boxes.iter().map(|(a, o)| ssr_score(a, o, init_rel)).collect();
        let s_fin: Vec<f64> = boxes.iter().map(|(a, o)| ssr_score(a, o, final_rel)).collect();

        let r_init = mean(&s_init[..window]);
        let r_f = mean(&s_fin[k - window..]);
        let g_init = s_init[0] - s_init[k - 1];
        let g_f = s_fin[k - 1] - s_fin[0];
        let raw_score = 0.125 * (r_init + r_f + g_init + g_f) + 0.5;
        ScoreTerms {
            r_init,
            r_f,
            g_init,
            g_f,
            raw_score,
            score: raw_score.clamp(0.0, 1.0),
        }
    });

    DsrScoreReport {
        sample_id: traj.sample_id.clone(),
        prompt_id: traj.prompt_id.clone(),
        dsr_type: traj.dsr_type,
        effective_frames: k,
        window,
        window_truncated,
        valid: validity.valid,
        invalid_reasons: validity.reasons,
        terms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Object centered at (50, 50), width 20; animal width 20 moving along y = 50.
    fn canonical(xs: &[f64]) -> Trajectory {
        let object = BBox::from_center(50.0, 50.0, 20.0, 20.0).unwrap();
        let frames = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                FrameObservation::clean(i as u32, BBox::from_center(x, 50.0, 20.0, 20.0).unwrap(), object)
            })
            .collect();
        Trajectory::new("s0", "p0", DsrType::D, frames).unwrap()
    }

    #[test]
    fn table_rows() {
        use SpatialRelation::*;
        let rows = [
            (DsrType::A, Left, Top),
            (DsrType::B, Top, Left),
            (DsrType::C, Right, Top),
            (DsrType::D, Left, Right),
            (DsrType::E, Top, Right),
            (DsrType::F, Right, Left),
        ];
        for (t, i, f) in rows {
            assert_eq!(t.initial_relation(), i);
            assert_eq!(t.final_relation(), f);
            assert_ne!(i, f);
            assert_eq!(DsrType::from_relations(i, f), Some(t));
        }
        assert_eq!("d".parse::<DsrType>().unwrap(), DsrType::D);
        assert_eq!("top-to-right".parse::<DsrType>().unwrap(), DsrType::E);
        assert!("G".parse::<DsrType>().is_err());
    }

    #[test]
    fn effective_frame_filter() {
        let mut t = canonical(&[10.0; 30]);
        assert_eq!(effective_frames(&t).len(), 30);
        t.frames[15].animal_count = 2;
        assert!(!effective_frames(&t).contains(&15));
        for f in &mut t.frames[..10] {
            f.object = None;
            f.object_count = 0;
        }
        assert_eq!(effective_frames(&t).len(), 19);
    }

    #[test]
    fn object_missing_in_first_ten() {
        let mut t = canonical(&[10.0; 30]);
        for f in &mut t.frames[..10] {
            f.object = None;
            f.object_count = 0;
        }
        assert_eq!(effective_frames(&t), (10..30).collect::<Vec<u32>>());
    }

    #[test]
    fn validity_reasons() {
        let t = canonical(&[10.0; 81]);
        assert_eq!(validity_check(&t, 20), Validity { valid: true, reasons: vec![] });

        let mut t19 = canonical(&[10.0; 19]);
        assert_eq!(validity_check(&t19, 20).reasons, vec![InvalidReason::TooFewFrames]);

        let mut t = canonical(&[10.0; 81]);
        t.frames[3].animal_count = 2;
        assert_eq!(validity_check(&t, 20).reasons, vec![InvalidReason::MultipleInstances]);

        t19.frames[0].object_count = 3;
        assert_eq!(
            validity_check(&t19, 20).reasons,
            vec![InvalidReason::MultipleInstances, InvalidReason::TooFewFrames]
        );
    }

    #[test]
    fn sequences_on_canonical_fixture() {
        let t = canonical(&[10.0, 30.0, 50.0, 70.0, 90.0]);
        let left: Vec<f64> = ssr_sequence(&t, SpatialRelation::Left).present().collect();
        assert_eq!(left, vec![1.0, 1.0, 0.0, -1.0, -1.0]);
        let right: Vec<f64> = ssr_sequence(&t, SpatialRelation::Right).present().collect();
        assert_eq!(right, vec![-1.0, -1.0, 0.0, 1.0, 1.0]);

        let mut t = t;
        t.frames[2].object = None;
        t.frames[2].object_count = 0;
        let seq = ssr_sequence(&t, SpatialRelation::Left);
        assert_eq!(seq.entries.len(), 5);
        assert_eq!(seq.entries[2], None);
    }

    #[test]
    fn canonical_score() {
        let t = canonical(&[10.0, 30.0, 50.0, 70.0, 90.0]);
        let r = dsr_score(&t, &ScoringConfig::new(2, 5).unwrap());
        let terms = r.terms.unwrap();
        assert_eq!((terms.r_init, terms.r_f, terms.g_init, terms.g_f), (1.0, 1.0, 2.0, 2.0));
        assert_eq!(terms.raw_score, 1.25);
        assert_eq!(terms.score, 1.0);
        assert!(r.valid);
        assert!(!r.window_truncated);
    }

    #[test]
    fn static_animal_scores_midpoint() {
        let t = canonical(&[10.0; 40]);
        let r = dsr_score(&t, &ScoringConfig::default());
        assert_eq!(r.raw_score(), Some(0.5));
    }

    #[test]
    fn too_few_frames_report() {
        let t = canonical(&[10.0; 10]);
        let r = dsr_score(&t, &ScoringConfig::default());
        assert!(!r.valid);
        assert_eq!(r.invalid_reasons, vec![InvalidReason::TooFewFrames]);
        assert!(r.window_truncated);
        assert_eq!(r.window, 5);
    }

    #[test]
    fn empty_effective_list_has_no_score() {
        let mut t = canonical(&[10.0; 3]);
        for f in &mut t.frames {
            f.animal = None;
            f.animal_count = 0;
        }
        let r = dsr_score(&t, &ScoringConfig::new(1, 0).unwrap());
        assert!(!r.valid);
        assert_eq!(r.terms, None);
        assert_eq!(r.effective_frames, 0);
    }

    #[test]
    fn zero_window_rejected() {
        assert!(ScoringConfig::new(0, 20).is_err());
    }

    #[test]
    fn trajectory_invariants() {
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let frames = vec![FrameObservation::clean(1, b, b), FrameObservation::clean(1, b, b)];
        assert!(Trajectory::new("s", "p", DsrType::A, frames).is_err());
        assert!(Trajectory::new("s", "p", DsrType::A, vec![]).is_err());
        assert!(FrameObservation::new(0, Some(b), None, 0, 0).is_err());
    }

    #[test]
    fn report_serde_round_trip() {
        let t = canonical(&[10.0, 30.0, 50.0, 70.0, 90.0]);
        let r = dsr_score(&t, &ScoringConfig::new(2, 5).unwrap());
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains("\"raw_score\":1.250000"), "{line}");
        assert!(line.contains("\"dsr_type_name\":\"left-to-right\""), "{line}");
        let back: DsrScoreReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }
}
