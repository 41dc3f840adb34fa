//! Tracklet confidence scoring and one-frame-ahead prediction per workload
//! pair.
//!
//! A tracklet carries a motion confidence and an appearance confidence, both
//! in `[0, 1]`; its overall confidence is their product. After each frame the
//! tracklet falls in one of three categories:
//!
//! * `Cg1` matched by feature-based association: both scores reset to 1;
//! * `Cg2` matched by IoU-only association: motion resets to 1, appearance
//!   decays by the appearance variation;
//! * `Cg3` unmatched: both decay by their variations.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task_model::{Level, PairChoice};

/// Ratio used for a velocity term whose denominator vanishes while the
/// numerator does not; large enough to saturate the sigmoid.
const DEGENERATE_VELOCITY_RATIO: f64 = 50.0;

/// Tracklets stay below this confidence for [`RETIRE_AFTER_FRAMES`] frames
/// before they are dropped.
pub const RETIRE_THRESHOLD: f64 = 0.01;
pub const RETIRE_AFTER_FRAMES: u32 = 30;

/// Position (center), size and per-frame velocity of a tracked box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub vx: f64,
    pub vy: f64,
    pub vw: f64,
    pub vh: f64,
}

impl MotionState {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        MotionState {
            x,
            y,
            w,
            h,
            vx: 0.0,
            vy: 0.0,
            vw: 0.0,
            vh: 0.0,
        }
    }

    pub fn with_velocity(mut self, vx: f64, vy: f64) -> Self {
        self.vx = vx;
        self.vy = vy;
        self
    }

    fn check_size(&self) -> Result<()> {
        if self.w > 0.0 && self.h > 0.0 {
            Ok(())
        } else {
            Err(Error::NonPositiveSize)
        }
    }

    /// One frame of constant-velocity extrapolation.
    pub fn coast(&self) -> MotionState {
        MotionState {
            x: self.x + self.vx,
            y: self.y + self.vy,
            ..*self
        }
    }
}

/// Appearance feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppearanceState(pub Vec<f64>);

impl AppearanceState {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Size-variation score in `[0, 1]`; 0.5 for an unchanged size, lower when
/// the box shrinks.
pub fn lambda_size(prev: &MotionState, cur: &MotionState) -> Result<f64> {
    prev.check_size()?;
    cur.check_size()?;
    let dh = (prev.h - cur.h) / (prev.h + cur.h);
    let dw = (prev.w - cur.w) / (prev.w + cur.w);
    Ok((-0.25 * (dh + dw) + 0.5).clamp(0.0, 1.0))
}

fn velocity_ratio(prev: f64, cur: f64) -> f64 {
    let sum = prev + cur;
    let diff = prev - cur;
    if sum != 0.0 {
        diff / sum
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * DEGENERATE_VELOCITY_RATIO
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Velocity-variation score in `[0, 1]`; 1 for unchanged velocity.
pub fn lambda_velocity(prev: &MotionState, cur: &MotionState) -> f64 {
    let z = velocity_ratio(prev.vx, cur.vx) + velocity_ratio(prev.vy, cur.vy);
    (1.0 - 2.0 * (sigmoid(z) - 0.5).abs()).clamp(0.0, 1.0)
}

/// Cosine similarity of two feature vectors, negatives clamped to 0.
pub fn lambda_appearance(prev: &AppearanceState, cur: &AppearanceState) -> Result<f64> {
    if prev.0.len() != cur.0.len() {
        return Err(Error::InvalidAppearance);
    }
    let (np, nc) = (prev.norm(), cur.norm());
    if np == 0.0 || nc == 0.0 {
        return Err(Error::InvalidAppearance);
    }
    let dot: f64 = prev.0.iter().zip(&cur.0).map(|(a, b)| a * b).sum();
    Ok((dot / (np * nc)).clamp(0.0, 1.0))
}

/// Per-frame outcome category of a tracklet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchCategory {
    /// Matched through feature-based association.
    Cg1,
    /// Matched through IoU-only association.
    Cg2,
    /// Not matched.
    Cg3,
}

impl MatchCategory {
    pub fn name(self) -> &'static str {
        match self {
            MatchCategory::Cg1 => "CG1",
            MatchCategory::Cg2 => "CG2",
            MatchCategory::Cg3 => "CG3",
        }
    }
}

impl fmt::Display for MatchCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the association stage resolved one tracklet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssociationResult {
    FeatureMatch,
    IouMatch,
    Unmatched,
}

impl AssociationResult {
    /// Result for a detected object under association level `level`.
    pub fn matched(level: Level) -> Self {
        match level {
            Level::High => AssociationResult::FeatureMatch,
            Level::Low => AssociationResult::IouMatch,
        }
    }
}

pub fn classify_outcome(result: AssociationResult) -> MatchCategory {
    match result {
        AssociationResult::FeatureMatch => MatchCategory::Cg1,
        AssociationResult::IouMatch => MatchCategory::Cg2,
        AssociationResult::Unmatched => MatchCategory::Cg3,
    }
}

/// Detector output for one object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub motion: MotionState,
    pub appearance: AppearanceState,
}

/// Track history of one object.
///
/// Besides the latest motion/appearance states the tracklet keeps the states
/// from the update before, which are the references for the variation
/// scores. Motion references advance on `Cg1` and `Cg2`, appearance
/// references only on `Cg1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub id: u64,
    /// Ground-truth object this tracklet follows.
    pub object: u32,
    pub start_frame: u64,
    pub last_seen: u64,
    pub motion_confidence: f64,
    pub appearance_confidence: f64,
    pub motion: MotionState,
    pub motion_ref: MotionState,
    pub motion_frame: u64,
    pub appearance: AppearanceState,
    pub appearance_ref: AppearanceState,
    pub appearance_frame: u64,
    low_streak: u32,
}

impl Tracklet {
    pub fn new(id: u64, object: u32, frame: u64, obs: Observation) -> Result<Self> {
        obs.motion.check_size()?;
        if obs.appearance.norm() == 0.0 {
            return Err(Error::InvalidAppearance);
        }
        Ok(Tracklet {
            id,
            object,
            start_frame: frame,
            last_seen: frame,
            motion_confidence: 1.0,
            appearance_confidence: 1.0,
            motion: obs.motion,
            motion_ref: obs.motion,
            motion_frame: frame,
            appearance: obs.appearance.clone(),
            appearance_ref: obs.appearance,
            appearance_frame: frame,
            low_streak: 0,
        })
    }

    pub fn confidence(&self) -> f64 {
        self.motion_confidence * self.appearance_confidence
    }

    /// Motion variation since the previous motion update.
    pub fn motion_variation(&self) -> f64 {
        // sizes were validated on every update
        let s = lambda_size(&self.motion_ref, &self.motion).unwrap_or(0.0);
        s * lambda_velocity(&self.motion_ref, &self.motion)
    }

    /// Appearance variation since the previous appearance update.
    pub fn appearance_variation(&self) -> f64 {
        lambda_appearance(&self.appearance_ref, &self.appearance).unwrap_or(0.0)
    }

    /// `(motion, appearance)` confidences after a hypothetical update.
    pub fn scores_after(&self, category: MatchCategory) -> (f64, f64) {
        match category {
            MatchCategory::Cg1 => (1.0, 1.0),
            MatchCategory::Cg2 => (
                1.0,
                (self.appearance_confidence * self.appearance_variation()).max(0.0),
            ),
            MatchCategory::Cg3 => (
                (self.motion_confidence * self.motion_variation()).max(0.0),
                (self.appearance_confidence * self.appearance_variation()).max(0.0),
            ),
        }
    }

    /// Confidence after a hypothetical update, without mutating the tracklet.
    pub fn predicted_confidence(&self, category: MatchCategory) -> f64 {
        let (m, a) = self.scores_after(category);
        m * a
    }

    /// Applies the outcome of frame `frame`.
    pub fn update(
        &mut self,
        category: MatchCategory,
        frame: u64,
        obs: Option<&Observation>,
    ) -> Result<()> {
        let (m, a) = self.scores_after(category);
        match category {
            MatchCategory::Cg1 => {
                let obs = obs.ok_or(Error::MissingObservation("CG1"))?;
                obs.motion.check_size()?;
                if obs.appearance.norm() == 0.0 {
                    return Err(Error::InvalidAppearance);
                }
                self.refresh_motion(obs.motion, frame);
                self.appearance_ref =
                    std::mem::replace(&mut self.appearance, obs.appearance.clone());
                self.appearance_frame = frame;
                self.last_seen = frame;
            }
            MatchCategory::Cg2 => {
                let obs = obs.ok_or(Error::MissingObservation("CG2"))?;
                obs.motion.check_size()?;
                self.refresh_motion(obs.motion, frame);
                self.last_seen = frame;
            }
            MatchCategory::Cg3 => {
                self.motion = self.motion.coast();
            }
        }
        self.motion_confidence = m;
        self.appearance_confidence = a;
        if self.confidence() < RETIRE_THRESHOLD {
            self.low_streak += 1;
        } else {
            self.low_streak = 0;
        }
        Ok(())
    }

    fn refresh_motion(&mut self, motion: MotionState, frame: u64) {
        // coasting only moves the position, so size and velocity of the
        // current state are those of the last observation
        self.motion_ref = std::mem::replace(&mut self.motion, motion);
        self.motion_frame = frame;
    }

    pub fn is_retired(&self) -> bool {
        self.low_streak >= RETIRE_AFTER_FRAMES
    }
}

/// All tracklets of one task.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackletSet {
    tracklets: Vec<Tracklet>,
    next_id: u64,
}

impl TrackletSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tracklets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracklets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tracklet> {
        self.tracklets.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Tracklet> {
        self.tracklets.iter_mut()
    }

    pub fn get(&self, id: u64) -> Option<&Tracklet> {
        self.tracklets.iter().find(|t| t.id == id)
    }

    pub fn get_mut(&mut self, id: u64) -> Option<&mut Tracklet> {
        self.tracklets.iter_mut().find(|t| t.id == id)
    }

    pub fn by_object(&self, object: u32) -> Option<&Tracklet> {
        self.tracklets.iter().find(|t| t.object == object)
    }

    /// Starts a tracklet for a newly detected object and returns its id.
    pub fn spawn(&mut self, object: u32, frame: u64, obs: Observation) -> Result<u64> {
        let id = self.next_id;
        self.tracklets.push(Tracklet::new(id, object, frame, obs)?);
        self.next_id += 1;
        Ok(id)
    }

    /// Inserts a prepared tracklet; ids must stay unique.
    pub fn insert(&mut self, tracklet: Tracklet) -> Result<()> {
        if self.get(tracklet.id).is_some() {
            return Err(Error::Contract(format!(
                "duplicate tracklet id {}",
                tracklet.id
            )));
        }
        self.next_id = self.next_id.max(tracklet.id + 1);
        self.tracklets.push(tracklet);
        Ok(())
    }

    /// Drops tracklets that stayed near zero confidence for too long.
    pub fn retire(&mut self) -> usize {
        let before = self.tracklets.len();
        self.tracklets.retain(|t| !t.is_retired());
        before - self.tracklets.len()
    }
}

/// Mean tracklet confidence; 0 for an empty set.
pub fn measured_confidence(set: &TrackletSet) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    set.iter().map(Tracklet::confidence).sum::<f64>() / set.len() as f64
}

/// Hypothetical category of a tracklet under `pair`, given whether it lies
/// in the detection RoI.
pub fn hypothetical_category(pair: PairChoice, in_roi: bool) -> MatchCategory {
    let covered = pair.detection == Level::High || in_roi;
    match (covered, pair.association) {
        (false, _) => MatchCategory::Cg3,
        (true, Level::High) => MatchCategory::Cg1,
        (true, Level::Low) => MatchCategory::Cg2,
    }
}

/// Expected mean confidence after the next frame under `pair`.
///
/// `in_roi` reports RoI membership; it is only consulted for low-confidence
/// detection. Tracklets created by the next frame are not predicted.
pub fn predict_pair<F>(set: &TrackletSet, pair: PairChoice, in_roi: F) -> f64
where
    F: Fn(&Tracklet) -> bool,
{
    if set.is_empty() {
        return 0.0;
    }
    let total: f64 = set
        .iter()
        .map(|t| {
            let inside = pair.detection == Level::High || in_roi(t);
            t.predicted_confidence(hypothetical_category(pair, inside))
        })
        .sum();
    total / set.len() as f64
}

/// Expected change of the task's confidence under `pair`; may be negative.
pub fn delta_expected<F>(set: &TrackletSet, pair: PairChoice, in_roi: F) -> f64
where
    F: Fn(&Tracklet) -> bool,
{
    predict_pair(set, pair, in_roi) - measured_confidence(set)
}
