//! Per-step model inputs: own displacement, polar collision grids and
//! social-pooling occupancy, assembled for all target pedestrians of a
//! window at once.

use serde::{Deserialize, Serialize};

use crate::baselines::{pool_cell, SocialPoolConfig};
use crate::geometry::{select_interacting, InteractionParams};
use crate::grid::{build_grid, heading_reference, GridDebugRow, DEFAULT_SECTORS, HEADING_EPSILON};
use crate::nn::{StepInput, Variant};
use crate::scene::{AgentKind, AgentState, SceneWindow};
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub ped: InteractionParams,
    pub veh: InteractionParams,
    pub n_sector: usize,
    pub social: SocialPoolConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            ped: InteractionParams::pedestrian(),
            veh: InteractionParams::vehicle(),
            n_sector: DEFAULT_SECTORS,
            social: SocialPoolConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FeatureError {
    #[error("window {window_id}: target {agent_id} has no state at step {step}")]
    MissingState {
        window_id: usize,
        agent_id: u64,
        step: usize,
    },
}

/// Tracks, per row, the most recent velocity fast enough to define a
/// heading.
#[derive(Debug, Clone)]
pub struct HeadingMemory {
    last: Vec<Option<Vec2>>,
}

impl HeadingMemory {
    pub fn new(rows: usize) -> Self {
        HeadingMemory { last: vec![None; rows] }
    }

    pub fn observe(&mut self, row: usize, velocity: Vec2) {
        if velocity.norm() >= HEADING_EPSILON {
            self.last[row] = Some(velocity);
        }
    }

    pub fn fallback(&self, row: usize) -> Option<Vec2> {
        self.last[row]
    }
}

/// Grids and interacting ids for one pedestrian at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PedestrianGrids {
    pub ppcg: Vec<f64>,
    pub vpcg: Vec<f64>,
    pub interacting_ids: Vec<u64>,
}

/// Builds PPCG and VPCG for `target` against every other agent in `scene_agents`.
pub fn pedestrian_grids(
    target: &AgentState,
    scene_agents: &[AgentState],
    fallback: Option<Vec2>,
    cfg: &FeatureConfig,
) -> PedestrianGrids {
    let (peds, vehs): (Vec<AgentState>, Vec<AgentState>) = scene_agents
        .iter()
        .filter(|a| a.id != target.id)
        .partition(|a| a.kind == AgentKind::Pedestrian);
    let fallback = heading_reference(target.velocity, fallback);
    let p_sel = select_interacting(target, &peds, &cfg.ped);
    let v_sel = select_interacting(target, &vehs, &cfg.veh);
    let ppcg = build_grid(target, &p_sel, &cfg.ped, cfg.n_sector, fallback).values;
    let vpcg = build_grid(target, &v_sel, &cfg.veh, cfg.n_sector, fallback).values;
    let mut interacting_ids: Vec<u64> = p_sel.iter().chain(&v_sel).map(|r| r.neighbor_id).collect();
    interacting_ids.sort_unstable();
    PedestrianGrids {
        ppcg,
        vpcg,
        interacting_ids,
    }
}

/// Inputs for one step. `rows` are the target pedestrians' current states;
/// `others` are all remaining agents. Each row's displacement comes from
/// `displacements`.
pub fn step_input(
    rows: &[AgentState],
    others: &[AgentState],
    displacements: &[Vec2],
    headings: &HeadingMemory,
    variant: Variant,
    cfg: &FeatureConfig,
) -> StepInput {
    let n = rows.len();
    let ns = cfg.n_sector;
    let mut input = StepInput {
        displacement: displacements.iter().map(|d| [d.x, d.y]).collect(),
        ..Default::default()
    };
    if variant.uses_ppcg() || variant.uses_vpcg() {
        let all: Vec<AgentState> = rows.iter().chain(others).copied().collect();
        if variant.uses_ppcg() {
            input.ppcg.reserve(n * ns);
        }
        if variant.uses_vpcg() {
            input.vpcg.reserve(n * ns);
        }
        for (i, target) in rows.iter().enumerate() {
            let g = pedestrian_grids(target, &all, headings.fallback(i), cfg);
            if variant.uses_ppcg() {
                input.ppcg.extend(g.ppcg);
            }
            if variant.uses_vpcg() {
                input.vpcg.extend(g.vpcg);
            }
        }
    }
    if variant.uses_social() {
        input.pool = rows
            .iter()
            .enumerate()
            .map(|(i, target)| social_occupancy(i, target, rows, variant == Variant::SocialFiltered, cfg))
            .collect();
    }
    input
}

/// `(cell, row)` pairs of the other rows inside the target's pooling grid,
/// optionally restricted to TTC-selected neighbors.
pub fn social_occupancy(
    row: usize,
    target: &AgentState,
    rows: &[AgentState],
    filtered: bool,
    cfg: &FeatureConfig,
) -> Vec<(usize, usize)> {
    let selected: Option<Vec<u64>> = filtered.then(|| {
        select_interacting(target, rows, &cfg.ped)
            .into_iter()
            .map(|r| r.neighbor_id)
            .collect()
    });
    rows.iter()
        .enumerate()
        .filter(|&(j, n)| j != row && selected.as_ref().is_none_or(|s| s.contains(&n.id)))
        .filter_map(|(j, n)| pool_cell(target.position, n.position, &cfg.social).map(|c| (c, j)))
        .collect()
}

/// Teacher-forced inputs over a whole window.
///
/// Step `s` (for `s = 1 ..= t_obs + t_pred - 2`) feeds the displacement from
/// frame `s-1` to `s` and features built from frame `s`; its output is
/// scored against the displacement from `s` to `s+1` whenever `s+1` lies in
/// the prediction period.
pub fn window_inputs(
    window: &SceneWindow,
    variant: Variant,
    cfg: &FeatureConfig,
) -> Result<Vec<StepInput>, FeatureError> {
    let tracks = target_tracks(window)?;
    let n = tracks.len();
    let total = window.len();
    let mut headings = HeadingMemory::new(n);
    for (i, t) in tracks.iter().enumerate() {
        headings.observe(i, t[0].velocity);
    }
    let mut out = Vec::with_capacity(total.saturating_sub(2));
    for s in 1..total.saturating_sub(1) {
        let rows: Vec<AgentState> = tracks.iter().map(|t| t[s]).collect();
        for (i, r) in rows.iter().enumerate() {
            headings.observe(i, r.velocity);
        }
        let others: Vec<AgentState> = window.frames[s]
            .iter()
            .filter(|a| !window.target_ids.contains(&a.id))
            .copied()
            .collect();
        let disp: Vec<Vec2> = tracks.iter().map(|t| t[s].position - t[s - 1].position).collect();
        let mut input = step_input(&rows, &others, &disp, &headings, variant, cfg);
        if s + 1 >= window.t_obs {
            input.targets = Some(
                tracks
                    .iter()
                    .map(|t| {
                        let d = t[s + 1].position - t[s].position;
                        [d.x, d.y]
                    })
                    .collect(),
            );
        }
        out.push(input);
    }
    Ok(out)
}

/// Full state sequence of every target, in `target_ids` order.
pub fn target_tracks(window: &SceneWindow) -> Result<Vec<Vec<AgentState>>, FeatureError> {
    window
        .target_ids
        .iter()
        .map(|&id| {
            (0..window.len())
                .map(|s| {
                    window.state(s, id).copied().ok_or(FeatureError::MissingState {
                        window_id: window.window_id,
                        agent_id: id,
                        step: s,
                    })
                })
                .collect()
        })
        .collect()
}

/// Ground-truth grids for every target at every step of a window.
pub fn window_grid_rows(window: &SceneWindow, cfg: &FeatureConfig) -> Result<Vec<GridDebugRow>, FeatureError> {
    let tracks = target_tracks(window)?;
    let mut headings = HeadingMemory::new(tracks.len());
    let mut out = Vec::new();
    for s in 0..window.len() {
        for (i, t) in tracks.iter().enumerate() {
            headings.observe(i, t[s].velocity);
            let g = pedestrian_grids(&t[s], &window.frames[s], headings.fallback(i), cfg);
            out.push(GridDebugRow {
                pedestrian_id: t[s].id,
                step: s,
                ppcg: g.ppcg,
                vpcg: g.vpcg,
                interacting_ids: g.interacting_ids,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{derive_velocities, make_windows, Frame, Scene};

    fn head_on_scene() -> Scene {
        let frames = (0..12)
            .map(|i| {
                let t = i as f64 * 0.5;
                Frame {
                    frame_id: i,
                    agents: vec![
                        AgentState::pedestrian(1, Vec2::new(t, 0.0), Vec2::ZERO),
                        AgentState::pedestrian(2, Vec2::new(20.0 - t, 0.0), Vec2::ZERO),
                        AgentState::vehicle(3, Vec2::new(5.0, -30.0 + 4.0 * t), Vec2::ZERO),
                    ],
                }
            })
            .collect();
        derive_velocities(&Scene::new(2.0, frames)).unwrap().0
    }

    #[test]
    fn teacher_forced_layout() {
        let w = &make_windows(&head_on_scene(), 6, 6, 1).unwrap()[0];
        let steps = window_inputs(w, Variant::Pv, &FeatureConfig::default()).unwrap();
        assert_eq!(steps.len(), 10);
        assert_eq!(steps.iter().filter(|s| s.targets.is_some()).count(), 6);
        assert!(steps[3].targets.is_none() && steps[4].targets.is_some());
        assert_eq!(steps[0].displacement, vec![[0.5, 0.0], [-0.5, 0.0]]);
        assert_eq!(steps[0].ppcg.len(), 16);
        // walkers 19 m apart closing at 2 m/s: TTC (19 - 0.7)/2 = 9.15 > 9 at frame 1
        assert!(steps[0].ppcg.iter().all(|&v| v == 0.0));
        // frame 2: 18 m apart, TTC 8.65 s -> risk 0.35 in the head-on sector
        assert!((steps[1].ppcg[4] - 0.35).abs() < 1e-9);
        assert!((steps[1].ppcg[8 + 4] - 0.35).abs() < 1e-9);
        assert!(steps[0].pool.is_empty());
    }

    #[test]
    fn social_occupancy_rules() {
        let cfg = FeatureConfig::default();
        let target = AgentState::pedestrian(1, Vec2::ZERO, Vec2::new(1.0, 0.0));
        let near_receding = AgentState::pedestrian(2, Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0));
        let far = AgentState::pedestrian(3, Vec2::new(10.0, 0.0), Vec2::new(-1.0, 0.0));
        let rows = [target, near_receding, far];
        let all = social_occupancy(0, &target, &rows, false, &cfg);
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].1, 1);
        assert!(social_occupancy(0, &target, &rows, true, &cfg).is_empty());
    }

    #[test]
    fn grid_rows_cover_every_step() {
        let w = &make_windows(&head_on_scene(), 6, 6, 1).unwrap()[0];
        let rows = window_grid_rows(w, &FeatureConfig::default()).unwrap();
        assert_eq!(rows.len(), 24);
        let late = rows.iter().find(|r| r.pedestrian_id == 1 && r.step == 11).unwrap();
        assert_eq!(late.interacting_ids, vec![2]);
    }
}
