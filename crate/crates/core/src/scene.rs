//! Scene data model: agents, frames, CSV ingestion/export, velocity
//! derivation, observation/prediction windowing and time-based splits.
//!
//! Frames are consecutive time steps sampled at `frame_rate`; frame ids are
//! labels and are only required to increase strictly. Timestamps are derived
//! from the frame's index in the scene (`index / frame_rate`).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec2::Vec2;

pub type AgentId = u64;

/// Header row of the canonical CSV format.
pub const CSV_HEADER: &str = "frame_id,agent_id,agent_type,x_m,y_m";

/// Default sampling rate of the trajectory data (Hz).
pub const DEFAULT_FRAME_RATE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Pedestrian,
    Vehicle,
}

impl AgentKind {
    pub fn csv_label(self) -> &'static str {
        match self {
            AgentKind::Pedestrian => "ped",
            AgentKind::Vehicle => "veh",
        }
    }
}

/// One agent's position and velocity at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub kind: AgentKind,
    pub position: Vec2,
    pub velocity: Vec2,
}

impl AgentState {
    pub fn new(id: AgentId, kind: AgentKind, position: Vec2, velocity: Vec2) -> Self {
        AgentState {
            id,
            kind,
            position,
            velocity,
        }
    }

    pub fn pedestrian(id: AgentId, position: Vec2, velocity: Vec2) -> Self {
        Self::new(id, AgentKind::Pedestrian, position, velocity)
    }

    pub fn vehicle(id: AgentId, position: Vec2, velocity: Vec2) -> Self {
        Self::new(id, AgentKind::Vehicle, position, velocity)
    }

    /// Constant-velocity state `dt` seconds ahead.
    pub fn advanced(&self, dt: f64) -> Self {
        AgentState {
            position: self.position + self.velocity * dt,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: i64,
    pub agents: Vec<AgentState>,
}

impl Frame {
    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub frame_rate: f64,
    pub frames: Vec<Frame>,
}

impl Scene {
    pub fn new(frame_rate: f64, frames: Vec<Frame>) -> Self {
        Scene { frame_rate, frames }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Distinct agent ids with their kind, ordered by id.
    pub fn agents(&self) -> BTreeMap<AgentId, AgentKind> {
        let mut out = BTreeMap::new();
        for frame in &self.frames {
            for a in &frame.agents {
                out.insert(a.id, a.kind);
            }
        }
        out
    }

    pub fn state_count(&self) -> usize {
        self.frames.iter().map(|f| f.agents.len()).sum()
    }

    /// Checks the structural invariants: strictly increasing frame ids, one
    /// state per agent per frame, a fixed kind per agent and contiguous
    /// presence.
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut kinds: HashMap<AgentId, AgentKind> = HashMap::new();
        // agent -> index of the last frame it was seen in
        let mut last_seen: HashMap<AgentId, usize> = HashMap::new();
        let mut finished: HashSet<AgentId> = HashSet::new();
        for (idx, frame) in self.frames.iter().enumerate() {
            if idx > 0 && frame.frame_id <= self.frames[idx - 1].frame_id {
                return Err(SceneError::NonMonotonicFrames {
                    previous: self.frames[idx - 1].frame_id,
                    found: frame.frame_id,
                });
            }
            let mut seen = HashSet::new();
            for a in &frame.agents {
                if !seen.insert(a.id) {
                    return Err(SceneError::DuplicateAgentInFrame {
                        frame_id: frame.frame_id,
                        agent_id: a.id,
                    });
                }
                if let Some(k) = kinds.insert(a.id, a.kind) {
                    if k != a.kind {
                        return Err(SceneError::KindChanged { agent_id: a.id });
                    }
                }
                if finished.contains(&a.id) {
                    return Err(SceneError::GappedAgent { agent_id: a.id });
                }
                if let Some(&prev) = last_seen.get(&a.id) {
                    if prev + 1 != idx {
                        return Err(SceneError::GappedAgent { agent_id: a.id });
                    }
                }
                last_seen.insert(a.id, idx);
            }
            for (&id, &prev) in &last_seen {
                if prev + 1 == idx && !seen.contains(&id) {
                    finished.insert(id);
                }
            }
        }
        Ok(())
    }

    /// Applies `f` to every agent state, e.g. a rigid transform.
    pub fn map_states(&self, mut f: impl FnMut(&AgentState) -> AgentState) -> Scene {
        Scene {
            frame_rate: self.frame_rate,
            frames: self
                .frames
                .iter()
                .map(|fr| Frame {
                    frame_id: fr.frame_id,
                    agents: fr.agents.iter().map(&mut f).collect(),
                })
                .collect(),
        }
    }

    /// Rotates positions and velocities by `angle` radians about `center`,
    /// then translates by `offset`.
    pub fn rigid_transform(&self, angle: f64, center: Vec2, offset: Vec2) -> Scene {
        self.map_states(|a| AgentState {
            position: (a.position - center).rotate(angle) + center + offset,
            velocity: a.velocity.rotate(angle),
            ..*a
        })
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header: expected `{CSV_HEADER}`, found `{found}`")]
    BadHeader { found: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("agent {agent_id} appears twice in frame {frame_id}")]
    DuplicateAgentInFrame { frame_id: i64, agent_id: AgentId },
    #[error("frame {found} follows frame {previous}; frames must increase")]
    NonMonotonicFrames { previous: i64, found: i64 },
    #[error("agent {agent_id} changes kind")]
    KindChanged { agent_id: AgentId },
    #[error("agent {agent_id} has a gap in its trajectory")]
    GappedAgent { agent_id: AgentId },
    #[error("invalid window configuration: {0}")]
    InvalidWindowConfig(String),
    #[error("frame rate must be positive, got {0}")]
    InvalidFrameRate(f64),
}

/// How rows labelled `cyclist` are ingested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclistPolicy {
    #[default]
    Vehicle,
    Pedestrian,
    Drop,
}

impl std::str::FromStr for CyclistPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "vehicle" => Ok(CyclistPolicy::Vehicle),
            "pedestrian" => Ok(CyclistPolicy::Pedestrian),
            "drop" => Ok(CyclistPolicy::Drop),
            other => Err(format!("unknown cyclist policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub frame_rate: f64,
    pub cyclist_as: CyclistPolicy,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            frame_rate: DEFAULT_FRAME_RATE,
            cyclist_as: CyclistPolicy::Vehicle,
        }
    }
}

/// Input formats understood by [`load_scene`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SceneFormat {
    #[default]
    CanonicalCsv,
}

pub fn load_scene(path: &Path, format: SceneFormat, opts: &LoadOptions) -> Result<Scene, SceneError> {
    let file = std::fs::File::open(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        SceneFormat::CanonicalCsv => read_canonical_csv(file, opts),
    }
}

/// Parses the canonical CSV. Velocities are left at zero; run
/// [`derive_velocities`] afterwards.
pub fn read_canonical_csv<R: Read>(reader: R, opts: &LoadOptions) -> Result<Scene, SceneError> {
    if !(opts.frame_rate > 0.0) {
        return Err(SceneError::InvalidFrameRate(opts.frame_rate));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(Ok(rec)) => rec.iter().collect::<Vec<_>>().join(","),
        Some(Err(e)) => {
            return Err(SceneError::MalformedRow {
                line: 1,
                reason: e.to_string(),
            })
        }
        None => String::new(),
    };
    if header.trim_start_matches('\u{feff}') != CSV_HEADER {
        return Err(SceneError::BadHeader { found: header });
    }

    let mut frames: Vec<Frame> = Vec::new();
    let mut kinds: HashMap<AgentId, AgentKind> = HashMap::new();
    for rec in records {
        let rec = rec.map_err(|e| SceneError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| SceneError::MalformedRow { line, reason };
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", rec.len())));
        }
        let frame_id: i64 = rec[0]
            .parse()
            .map_err(|_| bad(format!("frame_id `{}` is not an integer", &rec[0])))?;
        let agent_id: AgentId = rec[1]
            .parse()
            .map_err(|_| bad(format!("agent_id `{}` is not a non-negative integer", &rec[1])))?;
        let kind = match &rec[2] {
            "ped" => AgentKind::Pedestrian,
            "veh" => AgentKind::Vehicle,
            "cyclist" => match opts.cyclist_as {
                CyclistPolicy::Vehicle => AgentKind::Vehicle,
                CyclistPolicy::Pedestrian => AgentKind::Pedestrian,
                CyclistPolicy::Drop => continue,
            },
            other => return Err(bad(format!("unknown agent_type `{other}`"))),
        };
        let x: f64 = rec[3]
            .parse()
            .map_err(|_| bad(format!("x_m `{}` is not a number", &rec[3])))?;
        let y: f64 = rec[4]
            .parse()
            .map_err(|_| bad(format!("y_m `{}` is not a number", &rec[4])))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(bad("non-finite coordinate".into()));
        }
        if let Some(k) = kinds.insert(agent_id, kind) {
            if k != kind {
                return Err(bad(format!("agent {agent_id} changes type")));
            }
        }
        match frames.last_mut() {
            Some(last) if last.frame_id == frame_id => {
                if last.agent(agent_id).is_some() {
                    return Err(SceneError::DuplicateAgentInFrame { frame_id, agent_id });
                }
                last.agents
                    .push(AgentState::new(agent_id, kind, Vec2::new(x, y), Vec2::ZERO));
            }
            Some(last) if last.frame_id > frame_id => {
                return Err(SceneError::NonMonotonicFrames {
                    previous: last.frame_id,
                    found: frame_id,
                });
            }
            _ => frames.push(Frame {
                frame_id,
                agents: vec![AgentState::new(agent_id, kind, Vec2::new(x, y), Vec2::ZERO)],
            }),
        }
    }
    for frame in &mut frames {
        frame.agents.sort_by_key(|a| a.id);
    }
    let scene = Scene::new(opts.frame_rate, frames);
    scene.validate()?;
    Ok(scene)
}

/// Writes the canonical CSV. Coordinates use the shortest round-trip
/// decimal representation, so re-reading reproduces them exactly.
pub fn write_canonical_csv<W: Write>(scene: &Scene, writer: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "{CSV_HEADER}")?;
    for frame in &scene.frames {
        for a in &frame.agents {
            writeln!(
                w,
                "{},{},{},{},{}",
                frame.frame_id,
                a.id,
                a.kind.csv_label(),
                a.position.x,
                a.position.y
            )?;
        }
    }
    w.flush()
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<(), SceneError> {
    let io_err = |source| SceneError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_canonical_csv(scene, file).map_err(io_err)
}

/// Agents that exist in a single frame only; their velocity is set to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VelocityWarning {
    pub agent_id: AgentId,
    pub frame_id: i64,
}

/// Backward-difference velocities `(X_t - X_{t-1}) / dt`. An agent's first
/// frame copies the velocity of its second frame.
pub fn derive_velocities(scene: &Scene) -> Result<(Scene, Vec<VelocityWarning>), SceneError> {
    if !(scene.frame_rate > 0.0) {
        return Err(SceneError::InvalidFrameRate(scene.frame_rate));
    }
    let rate = scene.frame_rate;
    let mut out = scene.clone();
    let mut warnings = Vec::new();
    let mut prev_pos: HashMap<AgentId, Vec2> = HashMap::new();
    for idx in 0..out.frames.len() {
        let mut current = HashMap::with_capacity(out.frames[idx].agents.len());
        let (head, tail) = out.frames.split_at_mut(idx + 1);
        let frame = &mut head[idx];
        let next = tail.first();
        for a in &mut frame.agents {
            a.velocity = match prev_pos.get(&a.id) {
                Some(&p) => (a.position - p) * rate,
                None => match next.and_then(|n| n.agent(a.id)) {
                    Some(n) => (n.position - a.position) * rate,
                    None => {
                        warnings.push(VelocityWarning {
                            agent_id: a.id,
                            frame_id: frame.frame_id,
                        });
                        Vec2::ZERO
                    }
                },
            };
            current.insert(a.id, a.position);
        }
        prev_pos = current;
    }
    Ok((out, warnings))
}

/// Aligned observation + prediction slice of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneWindow {
    pub window_id: usize,
    /// Index of the window's first frame in the source scene.
    pub start_index: usize,
    pub t_obs: usize,
    pub t_pred: usize,
    pub dt: f64,
    pub frame_ids: Vec<i64>,
    /// Every agent present at each of the `t_obs + t_pred` steps.
    pub frames: Vec<Vec<AgentState>>,
    /// Pedestrians present at every step, ascending.
    pub target_ids: Vec<AgentId>,
    /// Per target (same order as `target_ids`): positions over the prediction steps.
    pub ground_truth: Vec<Vec<Vec2>>,
}

impl SceneWindow {
    pub fn len(&self) -> usize {
        self.t_obs + self.t_pred
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state(&self, step: usize, id: AgentId) -> Option<&AgentState> {
        self.frames.get(step)?.iter().find(|a| a.id == id)
    }

    /// Full `t_obs + t_pred` state sequence of a target.
    pub fn target_track(&self, id: AgentId) -> Option<Vec<AgentState>> {
        (0..self.len()).map(|s| self.state(s, id).copied()).collect()
    }

    pub fn observed_positions(&self, id: AgentId) -> Option<Vec<Vec2>> {
        (0..self.t_obs).map(|s| self.state(s, id).map(|a| a.position)).collect()
    }

    /// Copy of the window with every pedestrian state after the observation
    /// period removed. Vehicle futures are kept only when `keep_vehicles`.
    pub fn observation_only(&self, keep_vehicles: bool) -> SceneWindow {
        let mut w = self.clone();
        for frame in w.frames.iter_mut().skip(self.t_obs) {
            frame.retain(|a| keep_vehicles && a.kind == AgentKind::Vehicle);
        }
        w.ground_truth.clear();
        w
    }
}

/// Slices a scene into windows of `t_obs + t_pred` frames, one per
/// `stride`-spaced start offset. Windows without a pedestrian present in
/// every frame are dropped.
pub fn make_windows(scene: &Scene, t_obs: usize, t_pred: usize, stride: usize) -> Result<Vec<SceneWindow>, SceneError> {
    if t_obs < 2 {
        return Err(SceneError::InvalidWindowConfig(format!(
            "t_obs must be >= 2, got {t_obs}"
        )));
    }
    if t_pred < 1 {
        return Err(SceneError::InvalidWindowConfig(format!(
            "t_pred must be >= 1, got {t_pred}"
        )));
    }
    if stride < 1 {
        return Err(SceneError::InvalidWindowConfig("stride must be >= 1".into()));
    }
    let len = t_obs + t_pred;
    let mut windows = Vec::new();
    if scene.frames.len() < len {
        return Ok(windows);
    }
    let mut start = 0;
    while start + len <= scene.frames.len() {
        let slice = &scene.frames[start..start + len];
        let mut counts: BTreeMap<AgentId, usize> = BTreeMap::new();
        for frame in slice {
            for a in frame.agents.iter().filter(|a| a.kind == AgentKind::Pedestrian) {
                *counts.entry(a.id).or_default() += 1;
            }
        }
        let target_ids: Vec<AgentId> = counts
            .into_iter()
            .filter(|&(_, n)| n == len)
            .map(|(id, _)| id)
            .collect();
        if !target_ids.is_empty() {
            let frames: Vec<Vec<AgentState>> = slice.iter().map(|f| f.agents.clone()).collect();
            let ground_truth = target_ids
                .iter()
                .map(|&id| {
                    frames[t_obs..]
                        .iter()
                        .map(|f| f.iter().find(|a| a.id == id).map(|a| a.position).unwrap_or_default())
                        .collect()
                })
                .collect();
            windows.push(SceneWindow {
                window_id: windows.len(),
                start_index: start,
                t_obs,
                t_pred,
                dt: scene.dt(),
                frame_ids: slice.iter().map(|f| f.frame_id).collect(),
                frames,
                target_ids,
                ground_truth,
            });
        }
        start += stride;
    }
    Ok(windows)
}

/// Splits off the first `minutes` of the scene as a test set; the rest is
/// the training set. Agents spanning the boundary appear truncated in both.
pub fn split_first_minutes(scene: &Scene, minutes: f64) -> (Scene, Scene) {
    let limit = minutes.max(0.0) * 60.0;
    let cut = scene
        .frames
        .iter()
        .enumerate()
        .position(|(i, _)| i as f64 / scene.frame_rate >= limit)
        .unwrap_or(scene.frames.len());
    let test = Scene::new(scene.frame_rate, scene.frames[..cut].to_vec());
    let train = Scene::new(scene.frame_rate, scene.frames[cut..].to_vec());
    (test, train)
}
