//! Synthetic stand-in for the camera, detector and tracker.
//!
//! A [`Scenario`] holds ground-truth objects per task (one camera per task).
//! Running a frame under a workload pair decides which objects are detected
//! and how their tracklets are associated:
//!
//! * high-confidence detection covers the whole frame, low-confidence
//!   detection only the RoI window;
//! * a covered, non-occluded object is detected; its tracklet is `Cg1` under
//!   high-confidence association and `Cg2` under low-confidence association;
//! * every other tracklet is `Cg3` and coasts on its last motion estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{
    classify_outcome, delta_expected, measured_confidence, predict_pair, AppearanceState,
    AssociationResult, MatchCategory, MotionState, Observation, TrackletSet,
};
use crate::error::{Error, Result};
use crate::scheduler::ConfidenceSource;
use crate::task_model::{Level, PairChoice};
use crate::time::Instant;

/// Axis-aligned window in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Roi {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub width: f64,
    pub height: f64,
    pub roi_width: f64,
    pub roi_height: f64,
}

impl Default for FrameGeometry {
    fn default() -> Self {
        FrameGeometry {
            width: 1920.0,
            height: 1280.0,
            roi_width: 640.0,
            roi_height: 640.0,
        }
    }
}

impl FrameGeometry {
    fn validate(&self) -> Result<()> {
        let ok = self.width > 0.0
            && self.height > 0.0
            && self.roi_width > 0.0
            && self.roi_height > 0.0
            && self.roi_width <= self.width
            && self.roi_height <= self.height;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScenario(
                "RoI must fit inside the frame".into(),
            ))
        }
    }

    /// Non-overlapping RoI-sized tiles; the last row/column is shifted back
    /// to stay inside the frame. Ordered by `(x, y)`.
    pub fn candidate_windows(&self) -> Vec<Roi> {
        let offsets = |extent: f64, size: f64| {
            let mut v = Vec::new();
            let mut o = 0.0;
            while o < extent {
                v.push(o.min(extent - size));
                o += size;
            }
            v.dedup();
            v
        };
        let xs = offsets(self.width, self.roi_width);
        let ys = offsets(self.height, self.roi_height);
        xs.iter()
            .flat_map(|&x| {
                ys.iter().map(move |&y| Roi {
                    x,
                    y,
                    w: self.roi_width,
                    h: self.roi_height,
                })
            })
            .collect()
    }
}

/// Window whose tracklets have the lowest mean confidence. Windows without
/// tracklets are skipped; with no tracklet anywhere the origin window wins.
pub fn select_roi(set: &TrackletSet, geometry: &FrameGeometry) -> Roi {
    let windows = geometry.candidate_windows();
    let mut best: Option<(f64, Roi)> = None;
    for w in &windows {
        let (sum, count) = set
            .iter()
            .filter(|t| w.contains(t.motion.x, t.motion.y))
            .fold((0.0, 0usize), |(s, c), t| (s + t.confidence(), c + 1));
        if count == 0 {
            continue;
        }
        let mean = sum / count as f64;
        // windows are visited in (x, y) order, strict < keeps the smallest on ties
        if best.is_none_or(|(m, _)| mean < m) {
            best = Some((mean, *w));
        }
    }
    best.map(|(_, w)| w).unwrap_or(windows[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Half-open frame range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRange {
    pub start: u64,
    pub end: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub birth: u64,
    pub death: u64,
    /// Piecewise-linear trajectory; frames strictly increasing.
    pub waypoints: Vec<Waypoint>,
    pub feature_base: Vec<f64>,
    pub feature_ortho: Vec<f64>,
    /// Feature rotation per frame, radians.
    pub feature_drift: f64,
    pub occlusions: Vec<FrameRange>,
}

impl SceneObject {
    pub fn is_alive(&self, frame: u64) -> bool {
        self.birth <= frame && frame < self.death
    }

    pub fn is_occluded(&self, frame: u64) -> bool {
        self.occlusions
            .iter()
            .any(|o| o.start <= frame && frame < o.end)
    }

    /// Ground-truth motion at `frame`; velocity is the slope of the segment
    /// leaving `frame`.
    pub fn motion_at(&self, frame: u64) -> Option<MotionState> {
        if !self.is_alive(frame) {
            return None;
        }
        let wps = &self.waypoints;
        let seg = wps
            .windows(2)
            .find(|w| w[0].frame <= frame && frame < w[1].frame);
        Some(match seg {
            Some(w) => {
                let (a, b) = (w[0], w[1]);
                let span = (b.frame - a.frame) as f64;
                let s = (frame - a.frame) as f64;
                let (vx, vy) = ((b.x - a.x) / span, (b.y - a.y) / span);
                let (vw, vh) = ((b.w - a.w) / span, (b.h - a.h) / span);
                MotionState {
                    x: a.x + vx * s,
                    y: a.y + vy * s,
                    w: a.w + vw * s,
                    h: a.h + vh * s,
                    vx,
                    vy,
                    vw,
                    vh,
                }
            }
            None => {
                let last = wps.last()?;
                MotionState::new(last.x, last.y, last.w, last.h)
            }
        })
    }

    pub fn appearance_at(&self, frame: u64) -> AppearanceState {
        let phi = self.feature_drift * frame.saturating_sub(self.birth) as f64;
        let (c, s) = (phi.cos(), phi.sin());
        AppearanceState(
            self.feature_base
                .iter()
                .zip(&self.feature_ortho)
                .map(|(b, o)| c * b + s * o)
                .collect(),
        )
    }

    pub fn observe(&self, frame: u64) -> Option<Observation> {
        Some(Observation {
            motion: self.motion_at(frame)?,
            appearance: self.appearance_at(frame),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskScene {
    pub objects: Vec<SceneObject>,
}

/// Ground-truth world for every task of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: FrameGeometry,
    pub seed: u64,
    pub horizon_frames: u64,
    /// Probability that a covered object is missed under low-confidence
    /// detection; 0 makes the outcome model match the predictor.
    #[serde(default)]
    pub low_detection_miss_prob: f64,
    pub tasks: Vec<TaskScene>,
}

impl Scenario {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(s)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(0.0..=1.0).contains(&self.low_detection_miss_prob) {
            return Err(Error::InvalidScenario(
                "miss probability outside [0, 1]".into(),
            ));
        }
        for scene in &self.tasks {
            for o in &scene.objects {
                let finite = o
                    .waypoints
                    .iter()
                    .all(|w| w.x.is_finite() && w.y.is_finite() && w.w > 0.0 && w.h > 0.0);
                let ordered = o.waypoints.windows(2).all(|w| w[0].frame < w[1].frame);
                let occl_ok = o
                    .occlusions
                    .iter()
                    .all(|r| r.start <= r.end && r.end <= self.horizon_frames);
                if !finite || !ordered || !occl_ok || o.waypoints.is_empty() {
                    return Err(Error::InvalidScenario(format!(
                        "object {} is malformed",
                        o.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub n_tasks: usize,
    pub n_objects: usize,
    pub horizon_frames: u64,
    /// Per-frame probability that an occlusion starts.
    pub occlusion_rate: f64,
    /// Object speed range, pixels per frame.
    pub speed_min: f64,
    pub speed_max: f64,
    pub geometry: FrameGeometry,
    /// Fraction of objects entering after the first frame.
    pub late_birth_fraction: f64,
    /// Fraction of objects leaving before the horizon.
    pub early_death_fraction: f64,
    pub low_detection_miss_prob: f64,
    pub feature_dim: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            n_tasks: 1,
            n_objects: 12,
            horizon_frames: 300,
            occlusion_rate: 0.02,
            speed_min: 2.0,
            speed_max: 12.0,
            geometry: FrameGeometry::default(),
            late_birth_fraction: 0.2,
            early_death_fraction: 0.2,
            low_detection_miss_prob: 0.0,
            feature_dim: 8,
        }
    }
}

impl ScenarioParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScenario(m.to_string()));
        self.geometry.validate()?;
        if self.horizon_frames == 0 {
            return bad("horizon must be positive");
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate) {
            return bad("occlusion rate outside [0, 1]");
        }
        if !(self.speed_min >= 0.0
            && self.speed_min <= self.speed_max
            && self.speed_max.is_finite())
        {
            return bad("invalid speed range");
        }
        for f in [
            self.late_birth_fraction,
            self.early_death_fraction,
            self.low_detection_miss_prob,
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad("fractions must lie in [0, 1]");
            }
        }
        if self.feature_dim < 2 {
            return bad("feature dimension must be at least 2");
        }
        Ok(())
    }
}

const MIN_SIDE: f64 = 20.0;
const MAX_SIDE: f64 = 320.0;

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn orthonormal_to(rng: &mut ChaCha8Rng, base: &[f64]) -> Vec<f64> {
    loop {
        let v = unit_vector(rng, base.len());
        let dot: f64 = v.iter().zip(base).map(|(a, b)| a * b).sum();
        let w: Vec<f64> = v.iter().zip(base).map(|(a, b)| a - dot * b).collect();
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return w.into_iter().map(|x| x / n).collect();
        }
    }
}

fn random_velocity(rng: &mut ChaCha8Rng, p: &ScenarioParams) -> (f64, f64) {
    let speed = if p.speed_max > p.speed_min {
        rng.gen_range(p.speed_min..p.speed_max)
    } else {
        p.speed_min
    };
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    (speed * angle.cos(), speed * angle.sin())
}

fn generate_object(rng: &mut ChaCha8Rng, id: u32, p: &ScenarioParams) -> SceneObject {
    let horizon = p.horizon_frames;
    let g = p.geometry;
    let birth = if rng.gen_bool(p.late_birth_fraction) && horizon > 2 {
        rng.gen_range(1..horizon / 2 + 1)
    } else {
        0
    };
    let death = if rng.gen_bool(p.early_death_fraction) && horizon - birth > 2 {
        rng.gen_range(birth + 1..horizon)
    } else {
        horizon
    };

    let (mut x, mut y) = (rng.gen_range(0.0..g.width), rng.gen_range(0.0..g.height));
    let (mut w, mut h) = (rng.gen_range(40.0..200.0), rng.gen_range(40.0..200.0));
    let mut waypoints = vec![Waypoint {
        frame: birth,
        x,
        y,
        w,
        h,
    }];
    let mut frame = birth;
    while frame < death {
        let len = rng.gen_range(8..=30).min(death - frame);
        let (mut vx, mut vy) = random_velocity(rng, p);
        let (vw, vh) = (rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
        // bounce off the frame border within the segment
        let (ex, ey) = (x + vx * len as f64, y + vy * len as f64);
        if !(0.0..g.width).contains(&ex) {
            vx = -vx;
        }
        if !(0.0..g.height).contains(&ey) {
            vy = -vy;
        }
        x = (x + vx * len as f64).clamp(0.0, g.width - 1.0);
        y = (y + vy * len as f64).clamp(0.0, g.height - 1.0);
        w = (w + vw * len as f64).clamp(MIN_SIDE, MAX_SIDE);
        h = (h + vh * len as f64).clamp(MIN_SIDE, MAX_SIDE);
        frame += len;
        waypoints.push(Waypoint { frame, x, y, w, h });
    }

    let mut occlusions = Vec::new();
    let mut f = birth;
    while f < death {
        if p.occlusion_rate > 0.0 && rng.gen_bool(p.occlusion_rate) {
            let end = (f + rng.gen_range(2..=5)).min(horizon);
            occlusions.push(FrameRange { start: f, end });
            f = end + 1;
        } else {
            f += 1;
        }
    }

    let feature_base = unit_vector(rng, p.feature_dim);
    let feature_ortho = orthonormal_to(rng, &feature_base);
    SceneObject {
        id,
        birth,
        death,
        waypoints,
        feature_base,
        feature_ortho,
        feature_drift: rng.gen_range(0.005..0.03),
        occlusions,
    }
}

/// Deterministic scenario for `seed`.
pub fn generate_scenario(seed: u64, params: &ScenarioParams) -> Result<Scenario> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks = (0..params.n_tasks)
        .map(|_| TaskScene {
            objects: (0..params.n_objects)
                .map(|i| generate_object(&mut rng, i as u32, params))
                .collect(),
        })
        .collect();
    Ok(Scenario {
        geometry: params.geometry,
        seed,
        horizon_frames: params.horizon_frames,
        low_detection_miss_prob: params.low_detection_miss_prob,
        tasks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackletOutcome {
    pub tracklet: u64,
    pub category: MatchCategory,
    pub observation: Option<Observation>,
}

/// Result of running one frame through the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub frame: u64,
    pub pair: PairChoice,
    /// Detection window; `None` under high-confidence detection.
    pub roi: Option<Roi>,
    pub tracklets: Vec<TrackletOutcome>,
    /// Newly detected objects without a tracklet.
    pub spawned: Vec<(u32, Observation)>,
}

impl FrameOutcome {
    pub fn count(&self, category: MatchCategory) -> usize {
        self.tracklets
            .iter()
            .filter(|t| t.category == category)
            .count()
    }
}

fn frame_rng(seed: u64, task: usize, frame: u64) -> ChaCha8Rng {
    let mut s = seed ^ 0x9e37_79b9_7f4a_7c15;
    s = s.wrapping_mul(0xbf58_476d_1ce4_e5b9) ^ task as u64;
    s = s.wrapping_mul(0x94d0_49bb_1331_11eb) ^ frame;
    ChaCha8Rng::seed_from_u64(s)
}

/// Runs frame `frame` of task `task` under `pair` against the current
/// tracklets. Read-only; apply the result with [`apply_outcome`].
pub fn execute_pipeline(
    scenario: &Scenario,
    task: usize,
    pair: PairChoice,
    frame: u64,
    set: &TrackletSet,
) -> Result<FrameOutcome> {
    if frame >= scenario.horizon_frames {
        return Err(Error::FrameOutOfRange {
            frame,
            horizon: scenario.horizon_frames,
        });
    }
    let scene = scenario
        .tasks
        .get(task)
        .ok_or_else(|| Error::InvalidScenario(format!("no scene for task {task}")))?;
    let roi = match pair.detection {
        Level::High => None,
        Level::Low => Some(select_roi(set, &scenario.geometry)),
    };
    let mut rng = frame_rng(scenario.seed, task, frame);

    let mut detected: Vec<(u32, Observation)> = Vec::new();
    for obj in &scene.objects {
        // one draw per object keeps the noise stream independent of coverage
        let noise: f64 = rng.gen();
        let Some(obs) = obj.observe(frame) else {
            continue;
        };
        if obj.is_occluded(frame) {
            continue;
        }
        let covered = roi.is_none_or(|r| r.contains(obs.motion.x, obs.motion.y));
        let missed = roi.is_some() && noise < scenario.low_detection_miss_prob;
        if covered && !missed {
            detected.push((obj.id, obs));
        }
    }

    let mut tracklets = Vec::with_capacity(set.len());
    for t in set.iter() {
        let hit = detected.iter().find(|(id, _)| *id == t.object);
        let result = match hit {
            Some(_) => AssociationResult::matched(pair.association),
            None => AssociationResult::Unmatched,
        };
        tracklets.push(TrackletOutcome {
            tracklet: t.id,
            category: classify_outcome(result),
            observation: hit.map(|(_, o)| o.clone()),
        });
    }
    let spawned = detected
        .into_iter()
        .filter(|(id, _)| set.by_object(*id).is_none())
        .collect();
    Ok(FrameOutcome {
        frame,
        pair,
        roi,
        tracklets,
        spawned,
    })
}

/// Applies a frame outcome: category updates, new tracklets, retirement.
pub fn apply_outcome(set: &mut TrackletSet, outcome: &FrameOutcome) -> Result<()> {
    for o in &outcome.tracklets {
        let t = set
            .get_mut(o.tracklet)
            .ok_or_else(|| Error::Contract(format!("unknown tracklet {}", o.tracklet)))?;
        t.update(o.category, outcome.frame, o.observation.as_ref())?;
    }
    for (object, obs) in &outcome.spawned {
        set.spawn(*object, outcome.frame, obs.clone())?;
    }
    set.retire();
    Ok(())
}

/// Per-frame confidence record of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSample {
    pub task: usize,
    pub frame: u64,
    pub time: Instant,
    pub tracklets: usize,
    pub measured: f64,
    /// Predicted mean confidence per pair, in [`PairChoice::ALL`] order,
    /// evaluated before the frame ran.
    pub predicted: [f64; 4],
    pub granted: PairChoice,
}

/// Tracking state of every task, driven by job completions.
#[derive(Clone, Debug)]
pub struct TrackingWorld {
    scenario: Scenario,
    sets: Vec<TrackletSet>,
    samples: Vec<ConfidenceSample>,
    error: Option<String>,
}

impl TrackingWorld {
    pub fn new(scenario: Scenario) -> Self {
        let sets = vec![TrackletSet::new(); scenario.tasks.len()];
        TrackingWorld {
            scenario,
            sets,
            samples: Vec::new(),
            error: None,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn tracklets(&self, task: usize) -> &TrackletSet {
        &self.sets[task]
    }

    pub fn samples(&self) -> &[ConfidenceSample] {
        &self.samples
    }

    /// First pipeline error encountered, if any.
    pub fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }

    pub fn predicted(&self, task: usize, pair: PairChoice) -> f64 {
        let set = &self.sets[task];
        let roi = select_roi(set, &self.scenario.geometry);
        predict_pair(set, pair, |t| roi.contains(t.motion.x, t.motion.y))
    }

    /// Runs and applies one frame.
    pub fn step(&mut self, task: usize, frame: u64, pair: PairChoice, time: Instant) -> Result<()> {
        let predicted = PairChoice::ALL.map(|p| self.predicted(task, p));
        let outcome = execute_pipeline(&self.scenario, task, pair, frame, &self.sets[task])?;
        apply_outcome(&mut self.sets[task], &outcome)?;
        let set = &self.sets[task];
        self.samples.push(ConfidenceSample {
            task,
            frame,
            time,
            tracklets: set.len(),
            measured: measured_confidence(set),
            predicted,
            granted: pair,
        });
        Ok(())
    }

    /// Time-averaged measured confidence per task (mean over frames).
    pub fn mean_confidence(&self) -> Vec<f64> {
        let n = self.sets.len();
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for s in &self.samples {
            sum[s.task] += s.measured;
            count[s.task] += 1;
        }
        sum.iter()
            .zip(&count)
            .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect()
    }
}

impl ConfidenceSource for TrackingWorld {
    fn expected_gain(&self, task: usize, pair: PairChoice) -> f64 {
        let set = &self.sets[task];
        let roi = select_roi(set, &self.scenario.geometry);
        delta_expected(set, pair, |t| roi.contains(t.motion.x, t.motion.y))
    }

    fn job_completed(&mut self, task: usize, job_index: u64, pair: PairChoice, finish: Instant) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.step(task, job_index, pair, finish) {
            self.error = Some(e.to_string());
        }
    }
}
