//! Comparison models: per-axis linear regression, and the social pooling
//! tensors used by the Social LSTM variants. The LSTM baselines themselves
//! are [`Variant`]s of the shared model.

use serde::{Deserialize, Serialize};

use crate::geometry::{select_interacting, InteractionParams};
use crate::nn::{ModelConfig, ModelParams, Variant};
use crate::scene::AgentState;
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocialPoolConfig {
    /// Side of the square neighborhood, meters.
    pub neighborhood_size: f64,
    /// Cells per side.
    pub grid_cells: usize,
}

impl Default for SocialPoolConfig {
    fn default() -> Self {
        SocialPoolConfig {
            neighborhood_size: 4.0,
            grid_cells: 4,
        }
    }
}

impl SocialPoolConfig {
    pub fn is_valid(&self) -> bool {
        self.neighborhood_size > 0.0 && self.grid_cells > 0
    }
}

/// Row-major cell index (`cy * cells + cx`) of `neighbor` in the grid
/// centered on `target`, or `None` outside it. Cells are half-open.
pub fn pool_cell(target: Vec2, neighbor: Vec2, config: &SocialPoolConfig) -> Option<usize> {
    let half = config.neighborhood_size / 2.0;
    let cell = config.neighborhood_size / config.grid_cells as f64;
    let rel = neighbor - target;
    let fx = ((rel.x + half) / cell).floor();
    let fy = ((rel.y + half) / cell).floor();
    let n = config.grid_cells as f64;
    if !(0.0..n).contains(&fx) || !(0.0..n).contains(&fy) {
        return None;
    }
    Some(fy as usize * config.grid_cells + fx as usize)
}

/// Sum-pools neighbors' hidden vectors into a `[grid_cells^2 x hidden]`
/// row-major tensor.
pub fn social_pool(target: &AgentState, neighbors: &[(AgentState, Vec<f64>)], config: &SocialPoolConfig) -> Vec<f64> {
    let hidden = neighbors.first().map_or(0, |(_, h)| h.len());
    let mut out = vec![0.0; config.grid_cells * config.grid_cells * hidden];
    for (state, h) in neighbors {
        if state.id == target.id {
            continue;
        }
        if let Some(c) = pool_cell(target.position, state.position, config) {
            for (o, v) in out[c * hidden..(c + 1) * hidden].iter_mut().zip(h) {
                *o += v;
            }
        }
    }
    out
}

/// [`social_pool`] over only the neighbors with a TTC within `params`.
pub fn filtered_social_pool(
    target: &AgentState,
    neighbors: &[(AgentState, Vec<f64>)],
    config: &SocialPoolConfig,
    params: &InteractionParams,
) -> Vec<f64> {
    let states: Vec<AgentState> = neighbors.iter().map(|(s, _)| *s).collect();
    let keep: Vec<u64> = select_interacting(target, &states, params)
        .iter()
        .map(|r| r.neighbor_id)
        .collect();
    let hidden = neighbors.first().map_or(0, |(_, h)| h.len());
    let subset: Vec<(AgentState, Vec<f64>)> = neighbors
        .iter()
        .filter(|(s, _)| keep.contains(&s.id))
        .cloned()
        .collect();
    if subset.is_empty() {
        return vec![0.0; config.grid_cells * config.grid_cells * hidden];
    }
    social_pool(target, &subset, config)
}

/// Freshly initialized model with no interaction inputs.
pub fn vanilla_variant(config: ModelConfig, seed: u64) -> ModelParams {
    ModelParams::init(Variant::Vanilla, config, seed)
}

/// Fits `x` and `y` separately against the step index by least squares
/// and extends both lines `t_pred` steps past the last observation.
pub fn linear_regression_predict(observed: &[Vec2], t_pred: usize) -> Vec<Vec2> {
    let n = observed.len();
    assert!(n >= 2, "need at least two observed positions");
    let nf = n as f64;
    let t_mean = (nf - 1.0) / 2.0;
    let mean = observed.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / nf);
    let (mut sxx, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (i, p) in observed.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxx += dt * dt;
        sx += dt * (p.x - mean.x);
        sy += dt * (p.y - mean.y);
    }
    let slope = Vec2::new(sx / sxx, sy / sxx);
    (0..t_pred)
        .map(|k| {
            let t = (n + k) as f64 - t_mean;
            mean + slope * t
        })
        .collect()
}
