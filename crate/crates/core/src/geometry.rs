//! Closed-form time-to-collision between constant-velocity agents and
//! TTC-based selection of interacting neighbors.

use serde::{Deserialize, Serialize};

use crate::scene::{AgentId, AgentState};
use crate::vec2::Vec2;

/// Relative speeds below this are treated as no relative motion.
pub const MIN_RELATIVE_SPEED: f64 = 1e-9;

/// TTC threshold and comfort distance for one agent class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionParams {
    /// Seconds; neighbors with a larger TTC are ignored.
    pub ttc_threshold: f64,
    /// Meters; coming closer than this counts as a collision.
    pub d_min: f64,
}

impl InteractionParams {
    pub const fn new(ttc_threshold: f64, d_min: f64) -> Self {
        InteractionParams { ttc_threshold, d_min }
    }

    /// Pedestrian-pedestrian defaults: 9 s, 0.7 m.
    pub const fn pedestrian() -> Self {
        Self::new(9.0, 0.7)
    }

    /// Pedestrian-vehicle defaults: 8 s, 1.0 m.
    pub const fn vehicle() -> Self {
        Self::new(8.0, 1.0)
    }

    pub fn is_valid(&self) -> bool {
        self.ttc_threshold > 0.0 && self.d_min > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub neighbor_id: AgentId,
    pub ttc: f64,
    pub neighbor_position: Vec2,
    pub neighbor_velocity: Vec2,
}

/// Time until two constant-velocity agents first come closer than `d_min`.
///
/// Agents already inside `d_min` get `Some(0.0)`. Otherwise this is the
/// first root of `|D + tV| = d_min` with `D = a.pos - b.pos` and
/// `V = a.vel - b.vel`; `None` when there is no relative motion, the agents
/// never get that close, or the approach lies in the past.
pub fn time_to_collision(a: &AgentState, b: &AgentState, d_min: f64) -> Option<f64> {
    ttc_relative(a.position - b.position, a.velocity - b.velocity, d_min)
}

pub fn ttc_relative(d_rel: Vec2, v_rel: Vec2, d_min: f64) -> Option<f64> {
    let dist_sq = d_rel.norm_sq();
    let d_min_sq = d_min * d_min;
    if dist_sq < d_min_sq {
        return Some(0.0);
    }
    let speed_sq = v_rel.norm_sq();
    if speed_sq.sqrt() < MIN_RELATIVE_SPEED {
        return None;
    }
    let b = d_rel.dot(v_rel);
    if b >= 0.0 {
        // separating (or tangent on the disc boundary): both roots <= 0
        return None;
    }
    let c = dist_sq - d_min_sq;
    let disc = b * b - speed_sq * c;
    if disc < 0.0 {
        return None;
    }
    // first root (-b - sqrt(disc)) / |V|^2, written to avoid cancellation
    Some(c / (-b + disc.sqrt()))
}

/// Neighbors whose TTC with `target` lies in `[0, ttc_threshold]`, sorted by
/// ascending TTC then ascending id. The target itself is skipped.
pub fn select_interacting(
    target: &AgentState,
    neighbors: &[AgentState],
    params: &InteractionParams,
) -> Vec<InteractionRecord> {
    let mut out: Vec<InteractionRecord> = neighbors
        .iter()
        .filter(|n| n.id != target.id)
        .filter_map(|n| {
            let ttc = time_to_collision(target, n, params.d_min)?;
            (ttc <= params.ttc_threshold).then_some(InteractionRecord {
                neighbor_id: n.id,
                ttc,
                neighbor_position: n.position,
                neighbor_velocity: n.velocity,
            })
        })
        .collect();
    out.sort_by(|x, y| x.ttc.total_cmp(&y.ttc).then(x.neighbor_id.cmp(&y.neighbor_id)));
    out
}
