//! Joint autoregressive roll-out: every target pedestrian advances at once
//! and sees the others' sampled positions; vehicles and non-target
//! pedestrians move at constant velocity from their last observed state.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::linear_regression_predict;
use crate::features::{step_input, target_tracks, FeatureConfig, FeatureError, HeadingMemory};
use crate::metrics::{best_of_k, evaluate, BestOf, MetricAccumulator, MetricError, MetricMeans, MetricSet, MhdMode};
use crate::nn::{sample, GaussianParams, ModelParams, NnError, Runner, StepInput};
use crate::scene::{AgentId, AgentKind, AgentState, SceneWindow};
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("k must be at least 1")]
    NoSamples,
    #[error("feature config does not match the model: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("window {0} not found")]
    WindowNotFound(usize),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("non-finite prediction in window {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutOptions {
    /// Use recorded vehicle futures instead of extrapolating.
    pub oracle_vehicles: bool,
    pub features: FeatureConfig,
}

/// Sampled futures for every target of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub window_id: usize,
    pub target_ids: Vec<AgentId>,
    /// `samples[target][k][step]`, `t_pred` positions each.
    pub samples: Vec<Vec<Vec<Vec2>>>,
}

/// Positions `X + j dt V` for `j = 1..=steps`.
pub fn extrapolate_vehicle(state: &AgentState, steps: usize, dt: f64) -> Vec<Vec2> {
    (1..=steps)
        .map(|j| state.position + state.velocity * (j as f64 * dt))
        .collect()
}

/// Stream-splits a base seed so that item `index` gets its own sequence.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn check_config(model: &ModelParams, cfg: &FeatureConfig) -> Result<(), PredictError> {
    if model.config.n_sector != cfg.n_sector {
        return Err(PredictError::ConfigMismatch(format!(
            "model has {} sectors, features {}",
            model.config.n_sector, cfg.n_sector
        )));
    }
    if model.variant.uses_social() && model.config.pool_cells != cfg.social.grid_cells {
        return Err(PredictError::ConfigMismatch(format!(
            "model pools {} cells per side, features {}",
            model.config.pool_cells, cfg.social.grid_cells
        )));
    }
    Ok(())
}

/// Where non-target agents come from after the observation period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Surroundings {
    /// Recorded states at every step (teacher-forced neighbors).
    Recorded,
    /// Constant-velocity extrapolation from the last observed frame,
    /// optionally with recorded vehicles.
    Extrapolated { oracle_vehicles: bool },
}

/// Builds step inputs for `blocks` independent copies of a window's targets
/// stacked as rows.
pub(crate) struct JointStepper<'w> {
    window: &'w SceneWindow,
    n: usize,
    blocks: usize,
    headings: Vec<HeadingMemory>,
    last_observed: Vec<AgentState>,
    surroundings: Surroundings,
    model: &'w ModelParams,
    cfg: FeatureConfig,
}

impl<'w> JointStepper<'w> {
    pub(crate) fn new(
        window: &'w SceneWindow,
        blocks: usize,
        surroundings: Surroundings,
        model: &'w ModelParams,
        cfg: FeatureConfig,
    ) -> Self {
        let n = window.target_ids.len();
        let last_observed = window.frames[window.t_obs - 1]
            .iter()
            .filter(|a| !window.target_ids.contains(&a.id))
            .copied()
            .collect();
        JointStepper {
            window,
            n,
            blocks,
            headings: vec![HeadingMemory::new(n); blocks],
            last_observed,
            surroundings,
            model,
            cfg,
        }
    }

    fn others_at(&self, s: usize) -> Vec<AgentState> {
        let w = self.window;
        let recorded = || w.frames[s].iter().filter(|a| !w.target_ids.contains(&a.id)).copied();
        match self.surroundings {
            Surroundings::Recorded => recorded().collect(),
            _ if s < w.t_obs => recorded().collect(),
            Surroundings::Extrapolated { oracle_vehicles } => {
                let ahead = (s + 1 - w.t_obs) as f64 * w.dt;
                let mut out: Vec<AgentState> = self
                    .last_observed
                    .iter()
                    .filter(|a| !(oracle_vehicles && a.kind == AgentKind::Vehicle))
                    .map(|a| a.advanced(ahead))
                    .collect();
                if oracle_vehicles {
                    out.extend(recorded().filter(|a| a.kind == AgentKind::Vehicle));
                }
                out
            }
        }
    }

    /// Records `states` (`blocks * n` rows) as seen at step `s` and returns
    /// the model input for that step.
    pub(crate) fn build(&mut self, s: usize, states: &[AgentState], disp: &[Vec2]) -> StepInput {
        let others = self.others_at(s);
        let n = self.n;
        let mut input = StepInput::default();
        for b in 0..self.blocks {
            let rows = &states[b * n..(b + 1) * n];
            for (i, r) in rows.iter().enumerate() {
                self.headings[b].observe(i, r.velocity);
            }
            let part = step_input(
                rows,
                &others,
                &disp[b * n..(b + 1) * n],
                &self.headings[b],
                self.model.variant,
                &self.cfg,
            );
            input.displacement.extend(part.displacement);
            input.ppcg.extend(part.ppcg);
            input.vpcg.extend(part.vpcg);
            input.pool.extend(
                part.pool
                    .into_iter()
                    .map(|cells| cells.into_iter().map(|(c, j)| (c, j + b * n)).collect()),
            );
        }
        input
    }

    /// Like [`Self::build`] for a step where every block holds the same
    /// states: features are computed once and tiled.
    pub(crate) fn build_shared(&mut self, s: usize, states: &[AgentState], disp: &[Vec2]) -> StepInput {
        let n = self.n;
        let others = self.others_at(s);
        for h in &mut self.headings {
            for (i, r) in states.iter().enumerate() {
                h.observe(i, r.velocity);
            }
        }
        let one = step_input(states, &others, disp, &self.headings[0], self.model.variant, &self.cfg);
        let mut input = StepInput::default();
        for b in 0..self.blocks {
            input.displacement.extend_from_slice(&one.displacement);
            input.ppcg.extend_from_slice(&one.ppcg);
            input.vpcg.extend_from_slice(&one.vpcg);
            input.pool.extend(
                one.pool
                    .iter()
                    .map(|cells| cells.iter().map(|&(c, j)| (c, j + b * n)).collect()),
            );
        }
        input
    }
}

/// Draws `k` joint futures for every target of `window`.
///
/// The model is warmed up on the observed steps; each later step samples a
/// displacement per row, advances the pedestrians and rebuilds their
/// features from the sampled positions. Only observed pedestrian states are
/// ever read. Sample `j` uses its own random stream, so the first `k`
/// samples do not depend on how many are drawn in total.
pub fn rollout(
    window: &SceneWindow,
    model: &ModelParams,
    k: usize,
    seed: u64,
    opts: &RolloutOptions,
) -> Result<Rollout, PredictError> {
    if k == 0 {
        return Err(PredictError::NoSamples);
    }
    check_config(model, &opts.features)?;
    let w = window.observation_only(opts.oracle_vehicles);
    let n = w.target_ids.len();
    let (t_obs, t_pred, dt) = (w.t_obs, w.t_pred, w.dt);
    let observed: Vec<Vec<AgentState>> = target_tracks_observed(&w)?;

    let surroundings = Surroundings::Extrapolated {
        oracle_vehicles: opts.oracle_vehicles,
    };
    let mut stepper = JointStepper::new(&w, k, surroundings, model, opts.features);
    let first: Vec<AgentState> = observed.iter().map(|t| t[0]).collect();
    stepper.build_shared(0, &first, &vec![Vec2::ZERO; n]);
    let mut runner = Runner::new(model, k * n, false);
    let mut dist: Vec<GaussianParams> = Vec::new();
    for s in 1..t_obs {
        let states: Vec<AgentState> = observed.iter().map(|t| t[s]).collect();
        let disp: Vec<Vec2> = observed.iter().map(|t| t[s].position - t[s - 1].position).collect();
        let input = stepper.build_shared(s, &states, &disp);
        dist = runner.step(&input)?;
    }

    let mut rngs: Vec<ChaCha8Rng> = (0..k)
        .map(|j| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(j as u64);
            r
        })
        .collect();
    let mut states: Vec<AgentState> = (0..k).flat_map(|_| observed.iter().map(|t| t[t_obs - 1])).collect();
    let mut samples = vec![vec![Vec::with_capacity(t_pred); k]; n];
    for p in 0..t_pred {
        let mut disp = Vec::with_capacity(k * n);
        for (r, state) in states.iter_mut().enumerate() {
            let (b, i) = (r / n, r % n);
            let [dx, dy] = sample(&dist[r], &mut rngs[b]);
            let d = Vec2::new(dx, dy);
            state.position += d;
            state.velocity = d * (1.0 / dt);
            samples[i][b].push(state.position);
            disp.push(d);
        }
        if p + 1 == t_pred {
            break;
        }
        let input = stepper.build(t_obs + p, &states, &disp);
        dist = runner.step(&input)?;
    }
    if samples.iter().flatten().flatten().any(|p| !p.is_finite()) {
        return Err(PredictError::NonFinite(window.window_id));
    }
    Ok(Rollout {
        window_id: window.window_id,
        target_ids: w.target_ids.clone(),
        samples,
    })
}

/// Scoring settings shared by model and baseline evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub mhd_mode: MhdMode,
    pub best_of: BestOf,
}

/// Best-of-`k` metrics averaged over every (target, window) pair. Window
/// `w` is sampled with seed `derive_seed(seed, w.window_id)`; windows run
/// in parallel but are reduced in order.
pub fn evaluate_model(
    windows: &[SceneWindow],
    model: &ModelParams,
    k: usize,
    seed: u64,
    rollout_opts: &RolloutOptions,
    eval: &EvalOptions,
) -> Result<MetricMeans, PredictError> {
    let per_window: Vec<Vec<MetricSet>> = windows
        .par_iter()
        .map(|w| {
            let r = rollout(w, model, k, derive_seed(seed, w.window_id as u64), rollout_opts)?;
            w.ground_truth
                .iter()
                .zip(&r.samples)
                .map(|(gt, samples)| {
                    best_of_k(samples, gt, w.dt, eval.mhd_mode, eval.best_of).map_err(PredictError::from)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let mut acc = MetricAccumulator::default();
    per_window.iter().flatten().for_each(|m| acc.push(m));
    Ok(acc.mean())
}

/// Per-axis least-squares extrapolation of every target's observed track.
pub fn evaluate_linear(windows: &[SceneWindow], eval: &EvalOptions) -> Result<MetricMeans, PredictError> {
    let mut acc = MetricAccumulator::default();
    for w in windows {
        for (id, gt) in w.target_ids.iter().zip(&w.ground_truth) {
            let obs = w.observed_positions(*id).ok_or(FeatureError::MissingState {
                window_id: w.window_id,
                agent_id: *id,
                step: 0,
            })?;
            let pred = linear_regression_predict(&obs, w.t_pred);
            acc.push(&evaluate(&pred, gt, w.dt, eval.mhd_mode)?);
        }
    }
    Ok(acc.mean())
}

fn target_tracks_observed(w: &SceneWindow) -> Result<Vec<Vec<AgentState>>, FeatureError> {
    let mut obs = w.clone();
    obs.frames.truncate(w.t_obs);
    obs.t_pred = 0;
    target_tracks(&obs)
}

/// Writes sampled futures plus ground truth (`sample_id` -1, `gt` 1) as CSV.
/// `step` counts prediction steps from 1.
pub fn write_predictions<W: Write>(writer: W, items: &[(&SceneWindow, &Rollout)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["window_id", "pedestrian_id", "sample_id", "step", "x_m", "y_m", "gt"])?;
    for (window, roll) in items {
        for (i, id) in roll.target_ids.iter().enumerate() {
            if let Some(gt) = window.ground_truth.get(i) {
                for (s, p) in gt.iter().enumerate() {
                    w.write_record(&row(roll.window_id, *id, -1, s + 1, *p, 1))?;
                }
            }
            for (j, traj) in roll.samples[i].iter().enumerate() {
                for (s, p) in traj.iter().enumerate() {
                    w.write_record(&row(roll.window_id, *id, j as i64, s + 1, *p, 0))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn row(window: usize, id: AgentId, sample: i64, step: usize, p: Vec2, gt: u8) -> [String; 7] {
    [
        window.to_string(),
        id.to_string(),
        sample.to_string(),
        step.to_string(),
        p.x.to_string(),
        p.y.to_string(),
        gt.to_string(),
    ]
}
