//! Browser bindings for the interactive demo page in `www/`.
//!
//! Every exported function takes and returns JSON strings so the page needs
//! no generated glue beyond `wasm-bindgen`'s own.

use serde::{Deserialize, Serialize};
use ttc_grid::baselines::linear_regression_predict;
use ttc_grid::grid::build_grid;
use ttc_grid::synth::{synthesize_scenarios, SynthConfig, TemplateCounts};
use ttc_grid::{select_interacting, time_to_collision, AgentKind, AgentState, InteractionParams, Vec2};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct Agent {
    pub p: [f64; 2],
    pub v: [f64; 2],
}

impl Agent {
    fn state(&self, id: u64, kind: AgentKind) -> AgentState {
        AgentState::new(id, kind, vec2(self.p), vec2(self.v))
    }
}

#[derive(Debug, Deserialize)]
struct PairQuery {
    a: Agent,
    b: Agent,
    d_min: f64,
}

#[derive(Debug, Serialize)]
struct PairAnswer {
    ttc: Option<f64>,
    /// Time and distance of closest approach (t >= 0).
    closest_t: f64,
    closest_d: f64,
}

#[derive(Debug, Deserialize)]
struct GridQuery {
    target: Agent,
    #[serde(default)]
    pedestrians: Vec<Agent>,
    #[serde(default)]
    vehicles: Vec<Agent>,
    #[serde(default = "default_sectors")]
    n_sector: usize,
}

fn default_sectors() -> usize {
    8
}

#[derive(Debug, Serialize)]
struct Interaction {
    kind: &'static str,
    index: usize,
    ttc: f64,
}

#[derive(Debug, Serialize)]
struct GridAnswer {
    ppcg: Vec<f64>,
    vpcg: Vec<f64>,
    interacting: Vec<Interaction>,
}

#[derive(Debug, Serialize)]
struct Track {
    id: u64,
    kind: &'static str,
    first_frame: usize,
    points: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
struct Preview {
    dt: f64,
    frames: usize,
    tracks: Vec<Track>,
    /// Linear extrapolation of each pedestrian from its first `t_obs` points.
    linear: Vec<Track>,
}

fn vec2(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

fn parse<'a, T: Deserialize<'a>>(json: &'a str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("bad input: {e}"))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

pub fn pair_ttc_json(query: &str) -> Result<String, String> {
    let q: PairQuery = parse(query)?;
    if !(q.d_min > 0.0) {
        return Err("d_min must be positive".into());
    }
    let a = q.a.state(1, AgentKind::Pedestrian);
    let b = q.b.state(2, AgentKind::Pedestrian);
    let d = a.position - b.position;
    let v = a.velocity - b.velocity;
    let closest_t = if v.norm_sq() > 0.0 {
        (-d.dot(v) / v.norm_sq()).max(0.0)
    } else {
        0.0
    };
    Ok(to_json(&PairAnswer {
        ttc: time_to_collision(&a, &b, q.d_min),
        closest_t,
        closest_d: (d + v * closest_t).norm(),
    }))
}

pub fn collision_grid_json(query: &str) -> Result<String, String> {
    let q: GridQuery = parse(query)?;
    if q.n_sector == 0 || q.n_sector > 64 {
        return Err("n_sector must be in 1..=64".into());
    }
    let target = q.target.state(0, AgentKind::Pedestrian);
    let mut interacting = Vec::new();
    let mut grid_for = |agents: &[Agent], kind: AgentKind, params: InteractionParams, label: &'static str| {
        let states: Vec<AgentState> = agents
            .iter()
            .enumerate()
            .map(|(i, a)| a.state(i as u64 + 1, kind))
            .collect();
        let records = select_interacting(&target, &states, &params);
        interacting.extend(records.iter().map(|r| Interaction {
            kind: label,
            index: r.neighbor_id as usize - 1,
            ttc: r.ttc,
        }));
        build_grid(&target, &records, &params, q.n_sector, None).values
    };
    let ppcg = grid_for(
        &q.pedestrians,
        AgentKind::Pedestrian,
        InteractionParams::pedestrian(),
        "pedestrian",
    );
    let vpcg = grid_for(&q.vehicles, AgentKind::Vehicle, InteractionParams::vehicle(), "vehicle");
    Ok(to_json(&GridAnswer {
        ppcg,
        vpcg,
        interacting,
    }))
}

pub fn scenario_preview_json(template: &str, seed: u64, t_obs: usize) -> Result<String, String> {
    let mut counts = TemplateCounts::default();
    match template {
        "head_on_ped" => counts.head_on_ped = 1,
        "crossing_ped" => counts.crossing_ped = 1,
        "vehicle_yield" => counts.vehicle_yield = 1,
        "parallel_walk" => counts.parallel_walk = 1,
        "random_mix" => counts.random_mix = 1,
        other => return Err(format!("unknown template `{other}`")),
    }
    let scene = synthesize_scenarios(
        &SynthConfig {
            counts,
            ..Default::default()
        },
        seed,
    )
    .map_err(|e| e.to_string())?;
    let mut tracks: Vec<Track> = Vec::new();
    for (f, frame) in scene.frames.iter().enumerate() {
        for a in &frame.agents {
            let pos = [a.position.x, a.position.y];
            match tracks.iter_mut().find(|t| t.id == a.id) {
                Some(t) => t.points.push(pos),
                None => tracks.push(Track {
                    id: a.id,
                    kind: a.kind.csv_label(),
                    first_frame: f,
                    points: vec![pos],
                }),
            }
        }
    }
    let t_obs = t_obs.max(2);
    let linear = tracks
        .iter()
        .filter(|t| t.kind == AgentKind::Pedestrian.csv_label() && t.points.len() > t_obs)
        .map(|t| {
            let obs: Vec<Vec2> = t.points[..t_obs].iter().map(|&p| vec2(p)).collect();
            Track {
                id: t.id,
                kind: t.kind,
                first_frame: t.first_frame + t_obs,
                points: linear_regression_predict(&obs, t.points.len() - t_obs)
                    .into_iter()
                    .map(|p| [p.x, p.y])
                    .collect(),
            }
        })
        .collect();
    Ok(to_json(&Preview {
        dt: scene.dt(),
        frames: scene.len(),
        tracks,
        linear,
    }))
}

/// `{"a": {"p": [x, y], "v": [vx, vy]}, "b": {...}, "d_min": m}` to
/// `{"ttc": s | null, "closest_t": s, "closest_d": m}`.
#[wasm_bindgen(js_name = pairTtc)]
pub fn pair_ttc(query: &str) -> Result<String, JsError> {
    pair_ttc_json(query).map_err(|e| JsError::new(&e))
}

/// Polar collision grids of a target against pedestrians and vehicles.
#[wasm_bindgen(js_name = collisionGrid)]
pub fn collision_grid(query: &str) -> Result<String, JsError> {
    collision_grid_json(query).map_err(|e| JsError::new(&e))
}

/// One synthetic template instance plus a linear-extrapolation overlay.
#[wasm_bindgen(js_name = scenarioPreview)]
pub fn scenario_preview(template: &str, seed: u32, t_obs: u32) -> Result<String, JsError> {
    scenario_preview_json(template, seed as u64, t_obs as usize).map_err(|e| JsError::new(&e))
}
