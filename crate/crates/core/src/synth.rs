//! Scripted synthetic scenes with collision-avoidance maneuvers.
//!
//! Every template instance gets its own patch of the plane (far enough from
//! the others that no cross-instance TTC can fire) and its own time slot.
//! Agents walk at constant velocity; when an agent's desired velocity puts it
//! on a collision course with a higher-priority agent (TTC below
//! `trigger_ttc`), its heading is rotated away by `deflection_deg` until the
//! desired velocity is clear again. Vehicles outrank pedestrians, lower ids
//! outrank higher ids, and pedestrians facing a vehicle also slow down.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::time_to_collision;
use crate::scene::{derive_velocities, AgentId, AgentKind, AgentState, Frame, Scene};
use crate::vec2::Vec2;

/// Allowed speed range for configured agents (m/s).
pub const SPEED_LIMITS: (f64, f64) = (0.3, 15.0);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateCounts {
    pub head_on_ped: i64,
    pub crossing_ped: i64,
    pub vehicle_yield: i64,
    pub parallel_walk: i64,
    pub random_mix: i64,
}

impl TemplateCounts {
    pub fn total(&self) -> i64 {
        self.head_on_ped + self.crossing_ped + self.vehicle_yield + self.parallel_walk + self.random_mix
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub frame_rate: f64,
    pub counts: TemplateCounts,
    /// Pedestrian walking speed range (m/s).
    pub ped_speed: [f64; 2],
    /// Vehicle speed range (m/s).
    pub vehicle_speed: [f64; 2],
    /// TTC (s) below which the lower-priority agent starts avoiding.
    pub trigger_ttc: f64,
    /// Comfort distance (m) used by the avoidance check between pedestrians.
    pub ped_d_min: f64,
    /// Comfort distance (m) used by the avoidance check against vehicles.
    pub vehicle_d_min: f64,
    pub deflection_deg: f64,
    /// Speed multiplier of a pedestrian giving way to a vehicle.
    pub yield_speed_factor: f64,
    /// Lifetime of each template instance in frames.
    pub instance_frames: usize,
    /// Frames between the starts of consecutive instances.
    pub instance_stagger: usize,
    /// Distance (m) between instance origins.
    pub spacing: f64,
    /// Simulation sub-steps per frame.
    pub substeps: usize,
    /// Pedestrians per `random_mix` instance (inclusive range).
    pub mix_pedestrians: [usize; 2],
    /// Probability that a `random_mix` instance contains a vehicle.
    pub mix_vehicle_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            frame_rate: 2.0,
            counts: TemplateCounts::default(),
            ped_speed: [1.0, 1.6],
            vehicle_speed: [3.0, 6.0],
            trigger_ttc: 3.0,
            ped_d_min: 1.0,
            vehicle_d_min: 2.0,
            deflection_deg: 35.0,
            yield_speed_factor: 0.5,
            instance_frames: 30,
            instance_stagger: 6,
            spacing: 1000.0,
            substeps: 5,
            mix_pedestrians: [3, 5],
            mix_vehicle_prob: 0.5,
        }
    }
}

impl SynthConfig {
    /// Mixed-template configuration used by the tests and demos.
    pub fn mixed(instances_per_template: i64) -> Self {
        SynthConfig {
            counts: TemplateCounts {
                head_on_ped: instances_per_template,
                crossing_ped: instances_per_template,
                vehicle_yield: instances_per_template,
                parallel_walk: instances_per_template,
                random_mix: instances_per_template,
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        let c = &self.counts;
        for (name, n) in [
            ("head_on_ped", c.head_on_ped),
            ("crossing_ped", c.crossing_ped),
            ("vehicle_yield", c.vehicle_yield),
            ("parallel_walk", c.parallel_walk),
            ("random_mix", c.random_mix),
        ] {
            if n < 0 {
                return bad(format!("count {name} is negative ({n})"));
            }
        }
        for (name, [lo, hi]) in [("ped_speed", self.ped_speed), ("vehicle_speed", self.vehicle_speed)] {
            if !(lo <= hi) || lo < SPEED_LIMITS.0 || hi > SPEED_LIMITS.1 {
                return bad(format!(
                    "{name} [{lo}, {hi}] outside [{}, {}] m/s",
                    SPEED_LIMITS.0, SPEED_LIMITS.1
                ));
            }
        }
        if !(self.frame_rate > 0.0) {
            return bad("frame_rate must be positive".into());
        }
        if !(self.trigger_ttc > 0.0 && self.ped_d_min > 0.0 && self.vehicle_d_min > 0.0) {
            return bad("trigger_ttc and comfort distances must be positive".into());
        }
        if !(0.0..90.0).contains(&self.deflection_deg) {
            return bad("deflection_deg must lie in [0, 90)".into());
        }
        if !(self.yield_speed_factor > 0.0 && self.yield_speed_factor <= 1.0) {
            return bad("yield_speed_factor must lie in (0, 1]".into());
        }
        if self.instance_frames < 2 || self.substeps == 0 || self.instance_stagger == 0 {
            return bad("instance_frames >= 2, instance_stagger >= 1 and substeps >= 1 required".into());
        }
        if self.mix_pedestrians[0] < 1 || self.mix_pedestrians[0] > self.mix_pedestrians[1] {
            return bad("mix_pedestrians must be a non-empty range starting at >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.mix_vehicle_prob) {
            return bad("mix_vehicle_prob must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    HeadOnPed,
    CrossingPed,
    VehicleYield,
    ParallelWalk,
    RandomMix,
}

#[derive(Debug, Clone)]
struct SimAgent {
    id: AgentId,
    kind: AgentKind,
    position: Vec2,
    /// Unit direction of travel when unobstructed.
    heading: Vec2,
    speed: f64,
    /// Side (+1 left, -1 right) chosen for the current avoidance, if any.
    avoid_side: Option<f64>,
}

impl SimAgent {
    fn desired_velocity(&self) -> Vec2 {
        self.heading * self.speed
    }

    fn state(&self, velocity: Vec2) -> AgentState {
        AgentState::new(self.id, self.kind, self.position, velocity)
    }

    /// Higher-priority agents are the ones this agent must avoid.
    fn yields_to(&self, other: &SimAgent) -> bool {
        match (self.kind, other.kind) {
            (AgentKind::Pedestrian, AgentKind::Vehicle) => true,
            (AgentKind::Vehicle, AgentKind::Pedestrian) => false,
            _ => other.id < self.id,
        }
    }
}

/// Generates a scene. The output is a pure function of `(config, seed)`.
pub fn synthesize_scenarios(config: &SynthConfig, seed: u64) -> Result<Scene, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = &config.counts;
    let mut templates = Vec::with_capacity(c.total() as usize);
    for (t, n) in [
        (Template::HeadOnPed, c.head_on_ped),
        (Template::CrossingPed, c.crossing_ped),
        (Template::VehicleYield, c.vehicle_yield),
        (Template::ParallelWalk, c.parallel_walk),
        (Template::RandomMix, c.random_mix),
    ] {
        templates.extend(std::iter::repeat(t).take(n as usize));
    }
    // interleave templates so every stretch of the scene mixes them
    for i in (1..templates.len()).rev() {
        let j = rng.gen_range(0..=i);
        templates.swap(i, j);
    }

    let total_frames = if templates.is_empty() {
        0
    } else {
        (templates.len() - 1) * config.instance_stagger + config.instance_frames
    };
    let mut frames: Vec<Frame> = (0..total_frames)
        .map(|i| Frame {
            frame_id: i as i64,
            agents: Vec::new(),
        })
        .collect();

    let mut next_id: AgentId = 1;
    for (idx, &template) in templates.iter().enumerate() {
        let origin = Vec2::new(idx as f64 * config.spacing, 0.0);
        let mut agents = spawn(template, config, &mut rng, origin, &mut next_id);
        let start = idx * config.instance_stagger;
        let track = simulate(&mut agents, config);
        for (k, states) in track.into_iter().enumerate() {
            frames[start + k].agents.extend(states);
        }
    }
    for f in &mut frames {
        f.agents.sort_by_key(|a| a.id);
    }
    let scene = Scene::new(config.frame_rate, frames);
    let (scene, _) = derive_velocities(&scene).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    Ok(scene)
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn unit(angle: f64) -> Vec2 {
    Vec2::new(angle.cos(), angle.sin())
}

/// Places agents so that, absent avoidance, they meet around the middle of
/// the instance's lifetime.
fn spawn(
    template: Template,
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
    origin: Vec2,
    next_id: &mut AgentId,
) -> Vec<SimAgent> {
    let duration = config.instance_frames as f64 / config.frame_rate;
    let base_angle = rng.gen_range(0.0..TAU);
    let mut make = |kind, meet: Vec2, heading: Vec2, speed: f64, t_meet: f64| {
        let id = *next_id;
        *next_id += 1;
        SimAgent {
            id,
            kind,
            position: meet - heading * (speed * t_meet),
            heading,
            speed,
            avoid_side: None,
        }
    };
    let ped = AgentKind::Pedestrian;
    match template {
        Template::HeadOnPed => {
            let t_meet = duration * rng.gen_range(0.35..0.65);
            let h = unit(base_angle);
            let lateral = h.rotate(PI / 2.0) * rng.gen_range(-0.3..0.3);
            let (s1, s2) = (uniform(rng, config.ped_speed), uniform(rng, config.ped_speed));
            vec![
                make(ped, origin, h, s1, t_meet),
                make(ped, origin + lateral, -h, s2, t_meet),
            ]
        }
        Template::CrossingPed => {
            let t_meet = duration * rng.gen_range(0.35..0.65);
            let h1 = unit(base_angle);
            let h2 = unit(base_angle + rng.gen_range(0.35 * PI..0.65 * PI));
            let offset = unit(rng.gen_range(0.0..TAU)) * rng.gen_range(0.0..0.4);
            let (s1, s2) = (uniform(rng, config.ped_speed), uniform(rng, config.ped_speed));
            vec![
                make(ped, origin, h1, s1, t_meet),
                make(ped, origin + offset, h2, s2, t_meet),
            ]
        }
        Template::VehicleYield => {
            let t_meet = duration * rng.gen_range(0.4..0.6);
            let hv = unit(base_angle);
            let hp = unit(base_angle + rng.gen_range(0.4 * PI..0.6 * PI));
            let vs = uniform(rng, config.vehicle_speed);
            let ps = uniform(rng, config.ped_speed);
            let delay = rng.gen_range(-0.5..0.5);
            vec![
                make(AgentKind::Vehicle, origin, hv, vs, t_meet),
                make(ped, origin, hp, ps, t_meet + delay),
            ]
        }
        Template::ParallelWalk => {
            let h = unit(base_angle);
            let speed = uniform(rng, config.ped_speed);
            let gap = h.rotate(PI / 2.0) * rng.gen_range(1.0..1.6);
            let t_meet = duration * 0.5;
            vec![
                make(ped, origin, h, speed, t_meet),
                make(ped, origin + gap, h, speed, t_meet),
            ]
        }
        Template::RandomMix => {
            let n = rng.gen_range(config.mix_pedestrians[0]..=config.mix_pedestrians[1]);
            let mut agents = Vec::with_capacity(n + 1);
            for _ in 0..n {
                let t_meet = duration * rng.gen_range(0.3..0.7);
                let h = unit(rng.gen_range(0.0..TAU));
                let meet = origin + unit(rng.gen_range(0.0..TAU)) * rng.gen_range(0.0..2.0);
                let s = uniform(rng, config.ped_speed);
                agents.push(make(ped, meet, h, s, t_meet));
            }
            if rng.gen_bool(config.mix_vehicle_prob) {
                let t_meet = duration * rng.gen_range(0.3..0.7);
                let h = unit(rng.gen_range(0.0..TAU));
                let s = uniform(rng, config.vehicle_speed);
                agents.push(make(AgentKind::Vehicle, origin, h, s, t_meet));
            }
            agents
        }
    }
}

/// Runs one instance and returns the recorded states for each frame.
fn simulate(agents: &mut [SimAgent], config: &SynthConfig) -> Vec<Vec<AgentState>> {
    let dt = 1.0 / (config.frame_rate * config.substeps as f64);
    let deflection = config.deflection_deg.to_radians();
    let mut out = Vec::with_capacity(config.instance_frames);
    for frame in 0..config.instance_frames {
        out.push(agents.iter().map(|a| a.state(Vec2::ZERO)).collect());
        if frame + 1 == config.instance_frames {
            break;
        }
        for _ in 0..config.substeps {
            let velocities: Vec<Vec2> = (0..agents.len())
                .map(|i| avoidance_velocity(agents, i, config, deflection))
                .collect();
            for (a, v) in agents.iter_mut().zip(velocities) {
                a.position += v * dt;
            }
        }
    }
    out
}

/// Velocity of agent `i` for the next sub-step; updates its avoidance side.
fn avoidance_velocity(agents: &mut [SimAgent], i: usize, config: &SynthConfig, deflection: f64) -> Vec2 {
    let me = &agents[i];
    let desired = me.desired_velocity();
    let probe = me.state(desired);
    let mut worst: Option<(f64, usize)> = None;
    for (j, other) in agents.iter().enumerate() {
        if i == j || !me.yields_to(other) {
            continue;
        }
        let d_min = if other.kind == AgentKind::Vehicle || me.kind == AgentKind::Vehicle {
            config.vehicle_d_min
        } else {
            config.ped_d_min
        };
        if let Some(ttc) = time_to_collision(&probe, &other.state(other.desired_velocity()), d_min) {
            if ttc <= config.trigger_ttc && worst.is_none_or(|(w, _)| ttc < w) {
                worst = Some((ttc, j));
            }
        }
    }
    let Some((_, j)) = worst else {
        agents[i].avoid_side = None;
        return desired;
    };
    let other = &agents[j];
    let side = match agents[i].avoid_side {
        Some(s) => s,
        None => {
            // turn away from the side the other agent is on; dead ahead -> left
            if desired.cross(other.position - agents[i].position) > 0.0 {
                -1.0
            } else {
                1.0
            }
        }
    };
    let slow = if other.kind == AgentKind::Vehicle && agents[i].kind == AgentKind::Pedestrian {
        config.yield_speed_factor
    } else {
        1.0
    };
    agents[i].avoid_side = Some(side);
    desired.rotate(side * deflection) * slow
}
