//! Polar collision grids: per approach-angle sector, the risk
//! `ttc_threshold - ttc` of the most urgent interacting agent.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{InteractionParams, InteractionRecord};
use crate::scene::{AgentId, AgentState};
use crate::vec2::Vec2;

pub const DEFAULT_SECTORS: usize = 8;

/// Speeds below this (m/s) have no usable heading.
pub const HEADING_EPSILON: f64 = 0.05;

/// Slack (in sector units) within which an angle is snapped onto a
/// sector boundary, so round-off from rigid transforms cannot flip sectors.
const BOUNDARY_SNAP: f64 = 1e-13;

/// Neighbor speeds below this are treated as stationary.
const STATIONARY_SPEED: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarCollisionGrid {
    pub values: Vec<f64>,
}

impl PolarCollisionGrid {
    pub fn zeros(n_sector: usize) -> Self {
        PolarCollisionGrid {
            values: vec![0.0; n_sector],
        }
    }

    pub fn n_sector(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("target heading undefined (speed below {HEADING_EPSILON} m/s and no fallback)")]
    UndefinedHeading,
    #[error("n_sector must be at least 1")]
    NoSectors,
}

/// Returns the velocity that defines the target's heading: its own when fast
/// enough, else `fallback` when that one is.
pub fn heading_reference(v_target: Vec2, fallback: Option<Vec2>) -> Option<Vec2> {
    if v_target.norm() >= HEADING_EPSILON {
        Some(v_target)
    } else {
        fallback.filter(|f| f.norm() >= HEADING_EPSILON)
    }
}

/// Sector of the counter-clockwise angle from `v_target` to `v_neighbor`.
/// Sector `k` spans `[k, k+1) * 360/n_sector` degrees starting at the
/// target's heading.
pub fn approach_sector(
    v_target: Vec2,
    v_neighbor: Vec2,
    n_sector: usize,
    fallback: Option<Vec2>,
) -> Result<usize, GridError> {
    if n_sector == 0 {
        return Err(GridError::NoSectors);
    }
    let heading = heading_reference(v_target, fallback).ok_or(GridError::UndefinedHeading)?;
    Ok(sector_of(heading, v_neighbor, n_sector))
}

fn sector_of(heading: Vec2, direction: Vec2, n_sector: usize) -> usize {
    let mut theta = heading.cross(direction).atan2(heading.dot(direction));
    if theta < 0.0 {
        theta += TAU;
    }
    let r = theta / (TAU / n_sector as f64);
    let nearest = r.round();
    let r = if (r - nearest).abs() <= BOUNDARY_SNAP {
        nearest
    } else {
        r
    };
    // r == n_sector only when snapped onto the full turn
    let k = r.floor() as usize;
    if k >= n_sector {
        if nearest as usize == n_sector {
            0
        } else {
            n_sector - 1
        }
    } else {
        k
    }
}

/// Direction used as the neighbor's "velocity" in the angle computation. A
/// stationary neighbor is given the bearing from it towards the target, so a
/// still obstacle straight ahead lands opposite the heading, like an
/// oncoming walker.
fn approach_direction(target: &AgentState, record: &InteractionRecord) -> Vec2 {
    if record.neighbor_velocity.norm() < STATIONARY_SPEED {
        target.position - record.neighbor_position
    } else {
        record.neighbor_velocity
    }
}

/// Builds the grid from already-selected interactions. Records whose angle
/// cannot be computed are skipped.
pub fn build_grid(
    target: &AgentState,
    interactions: &[InteractionRecord],
    params: &InteractionParams,
    n_sector: usize,
    heading_fallback: Option<Vec2>,
) -> PolarCollisionGrid {
    let mut grid = PolarCollisionGrid::zeros(n_sector);
    let Some(heading) = heading_reference(target.velocity, heading_fallback) else {
        return grid;
    };
    if n_sector == 0 {
        return grid;
    }
    for rec in interactions {
        let dir = approach_direction(target, rec);
        if dir.norm() < STATIONARY_SPEED {
            continue;
        }
        let k = sector_of(heading, dir, n_sector);
        let risk = (params.ttc_threshold - rec.ttc).clamp(0.0, params.ttc_threshold);
        if risk > grid.values[k] {
            grid.values[k] = risk;
        }
    }
    grid
}

/// `positions[t] - positions[t-1]`; zero at `t = 0`.
pub fn spatial_displacement(positions: &[Vec2], t: usize) -> Vec2 {
    if t == 0 || t >= positions.len() {
        return Vec2::ZERO;
    }
    positions[t] - positions[t - 1]
}

/// One row of the per-window debug export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDebugRow {
    pub pedestrian_id: AgentId,
    pub step: usize,
    pub ppcg: Vec<f64>,
    pub vpcg: Vec<f64>,
    pub interacting_ids: Vec<AgentId>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: AgentId, ttc: f64, vel: (f64, f64)) -> InteractionRecord {
        InteractionRecord {
            neighbor_id: id,
            ttc,
            neighbor_position: Vec2::new(5.0, 5.0),
            neighbor_velocity: vel.into(),
        }
    }

    #[test]
    fn sector_examples() {
        let e = Vec2::new(1.0, 0.0);
        assert_eq!(approach_sector(e, Vec2::new(0.0, 1.0), 8, None), Ok(2));
        assert_eq!(approach_sector(e, e, 8, None), Ok(0));
        assert_eq!(approach_sector(e, Vec2::new(1.0, -1e-12), 8, None), Ok(7));
        assert_eq!(approach_sector(e, Vec2::new(-1.0, 0.0), 8, None), Ok(4));
        assert_eq!(approach_sector(e, Vec2::new(1.0, -1e-20), 8, None), Ok(0));
        assert_eq!(approach_sector(e, Vec2::new(0.0, -1.0), 8, None), Ok(6));
    }

    #[test]
    fn undefined_heading_uses_fallback() {
        let slow = Vec2::new(0.01, 0.0);
        assert_eq!(
            approach_sector(slow, Vec2::new(0.0, 1.0), 8, None),
            Err(GridError::UndefinedHeading)
        );
        assert_eq!(
            approach_sector(slow, Vec2::new(0.0, 1.0), 8, Some(Vec2::new(0.0, 1.0))),
            Ok(0)
        );
        assert_eq!(
            approach_sector(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), 0, None),
            Err(GridError::NoSectors)
        );
    }

    #[test]
    fn grid_examples() {
        let target = AgentState::pedestrian(1, Vec2::ZERO, Vec2::new(1.0, 0.0));
        let params = InteractionParams::new(9.0, 0.7);
        let g = build_grid(&target, &[rec(2, 4.0, (0.0, 1.0))], &params, 8, None);
        assert_eq!(g.values, vec![0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let g = build_grid(
            &target,
            &[rec(2, 4.0, (0.0, 1.0)), rec(3, 6.0, (0.0, 1.0))],
            &params,
            8,
            None,
        );
        assert_eq!(g.values[2], 5.0);

        assert!(build_grid(&target, &[], &params, 8, None).is_zero());
    }

    #[test]
    fn stationary_neighbor_ahead_is_opposite() {
        let target = AgentState::pedestrian(1, Vec2::ZERO, Vec2::new(1.0, 0.0));
        let obstacle = InteractionRecord {
            neighbor_id: 2,
            ttc: 3.0,
            neighbor_position: Vec2::new(4.0, 0.0),
            neighbor_velocity: Vec2::ZERO,
        };
        let g = build_grid(&target, &[obstacle], &InteractionParams::pedestrian(), 8, None);
        assert_eq!(g.values[4], 6.0);
    }

    #[test]
    fn slow_target_without_fallback_gives_zero_grid() {
        let target = AgentState::pedestrian(1, Vec2::ZERO, Vec2::new(0.0, 0.01));
        let g = build_grid(
            &target,
            &[rec(2, 1.0, (1.0, 0.0))],
            &InteractionParams::pedestrian(),
            8,
            None,
        );
        assert!(g.is_zero());
        let g = build_grid(
            &target,
            &[rec(2, 1.0, (1.0, 0.0))],
            &InteractionParams::pedestrian(),
            8,
            Some(Vec2::new(1.0, 0.0)),
        );
        assert_eq!(g.values[0], 8.0);
    }

    #[test]
    fn displacement() {
        let p = [Vec2::new(0.0, 0.0), Vec2::new(0.5, 0.2)];
        assert_eq!(spatial_displacement(&p, 1), Vec2::new(0.5, 0.2));
        assert_eq!(spatial_displacement(&p, 0), Vec2::ZERO);
        let still = [Vec2::new(2.0, 2.0); 3];
        assert_eq!(spatial_displacement(&still, 2), Vec2::ZERO);
    }
}
