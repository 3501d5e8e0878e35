//! Mini-batch RMSProp training on summed next-displacement NLL.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{target_tracks, window_inputs, FeatureConfig, FeatureError};
use crate::nn::{ModelConfig, ModelParams, NnError, Runner, StepInput, Variant};
use crate::predict::{check_config, JointStepper, PredictError, Surroundings};
use crate::scene::{AgentState, SceneWindow};
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training windows")]
    EmptyDataset,
    #[error("windows differ in length: expected ({0}, {1}), found ({2}, {3})")]
    NonUniformWindows(usize, usize, usize, usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("parameters became non-finite at epoch {0}")]
    Diverged(usize),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    /// Feed the model's own mean prediction back during the prediction
    /// steps instead of the recorded displacement.
    pub autoregressive_training: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 10,
            learning_rate: 0.001,
            rmsprop_decay: 0.99,
            rmsprop_epsilon: 1e-8,
            grad_clip_norm: 10.0,
            seed: 0,
            autoregressive_training: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.rmsprop_decay > 0.0 && self.rmsprop_decay < 1.0) {
            return bad("rmsprop_decay must lie in (0, 1)");
        }
        if !(self.rmsprop_epsilon > 0.0) || !(self.grad_clip_norm > 0.0) {
            return bad("rmsprop_epsilon and grad_clip_norm must be positive");
        }
        Ok(())
    }
}

/// Running mean of squared gradients, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub mean_sq: ModelParams,
}

impl RmsPropState {
    pub fn new(params: &ModelParams) -> Self {
        RmsPropState {
            mean_sq: params.zeros_like(),
        }
    }
}

pub fn global_norm(grads: &ModelParams) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|(_, _, v)| v.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// One clipped RMSProp update in place.
pub fn rmsprop_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut RmsPropState,
    config: &TrainConfig,
) -> Result<(), NnError> {
    let shapes = |m: &ModelParams| m.tensors().into_iter().map(|(n, s, _)| (n, s)).collect::<Vec<_>>();
    if shapes(params) != shapes(grads) || shapes(params) != shapes(&state.mean_sq) {
        return Err(NnError::ShapeMismatch(
            "parameter, gradient and optimizer state tensors differ".into(),
        ));
    }
    let norm = global_norm(grads);
    let scale = if norm > config.grad_clip_norm {
        config.grad_clip_norm / norm
    } else {
        1.0
    };
    let decay = config.rmsprop_decay;
    let g_all = grads.tensors();
    let mut s_all = state.mean_sq.tensors_mut();
    let mut p_all = params.tensors_mut();
    for ((p, s), g) in p_all.iter_mut().zip(s_all.iter_mut()).zip(&g_all) {
        for ((p, s), g) in p.1.iter_mut().zip(s.1.iter_mut()).zip(g.2) {
            let g = g * scale;
            *s = decay * *s + (1.0 - decay) * g * g;
            *p -= config.learning_rate * g / (s.sqrt() + config.rmsprop_epsilon);
        }
    }
    Ok(())
}

/// Outcome of [`train`].
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: ModelParams,
    /// Mean per-window loss of every epoch, in order.
    pub loss_curve: Vec<f64>,
}

/// Everything that determines a training run besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSetup {
    pub variant: Variant,
    pub model: ModelConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
}

enum Prepared {
    TeacherForced(Vec<StepInput>),
    Autoregressive,
}

/// Trains a fresh model. `on_epoch(epoch, mean_loss, &model)` runs after
/// every epoch (1-based), e.g. for checkpointing.
pub fn train(
    windows: &[SceneWindow],
    setup: &TrainSetup,
    mut on_epoch: impl FnMut(usize, f64, &ModelParams),
) -> Result<TrainResult, TrainError> {
    let model = ModelParams::init(setup.variant, setup.model, setup.train.seed);
    train_from(model, windows, setup, &mut on_epoch)
}

/// Continues training `model` (its variant and shape win over `setup`'s).
pub fn train_from(
    mut model: ModelParams,
    windows: &[SceneWindow],
    setup: &TrainSetup,
    on_epoch: &mut dyn FnMut(usize, f64, &ModelParams),
) -> Result<TrainResult, TrainError> {
    let cfg = &setup.train;
    cfg.validate()?;
    let first = windows.first().ok_or(TrainError::EmptyDataset)?;
    for w in windows {
        if (w.t_obs, w.t_pred) != (first.t_obs, first.t_pred) {
            return Err(TrainError::NonUniformWindows(
                first.t_obs,
                first.t_pred,
                w.t_obs,
                w.t_pred,
            ));
        }
    }
    check_config(&model, &setup.features)?;
    let prepared: Vec<Prepared> = windows
        .par_iter()
        .map(|w| -> Result<Prepared, TrainError> {
            Ok(if cfg.autoregressive_training {
                target_tracks(w)?;
                Prepared::Autoregressive
            } else {
                Prepared::TeacherForced(window_inputs(w, model.variant, &setup.features)?)
            })
        })
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = RmsPropState::new(&model);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(f64, ModelParams)> = batch
                .par_iter()
                .map(|&i| window_gradient(&model, &windows[i], &prepared[i], &setup.features))
                .collect::<Result<_, _>>()?;
            // fixed reduction order keeps runs reproducible
            let mut grads = model.zeros_like();
            for (loss, g) in &results {
                epoch_loss += loss;
                grads.add_scaled(g, 1.0 / batch.len() as f64);
            }
            rmsprop_step(&mut model, &grads, &mut state, cfg)?;
        }
        if !model.is_finite() {
            return Err(TrainError::Diverged(epoch));
        }
        let mean = epoch_loss / windows.len() as f64;
        curve.push(mean);
        on_epoch(epoch, mean, &model);
    }
    Ok(TrainResult {
        model,
        loss_curve: curve,
    })
}

fn window_gradient(
    model: &ModelParams,
    window: &SceneWindow,
    prepared: &Prepared,
    features: &FeatureConfig,
) -> Result<(f64, ModelParams), TrainError> {
    let rows = window.target_ids.len();
    let graph = match prepared {
        Prepared::TeacherForced(steps) => model.forward_loss(rows, steps)?,
        Prepared::Autoregressive => autoregressive_graph(model, window, features)?,
    };
    Ok((graph.loss, model.backward(&graph)?))
}

/// Observation steps as in teacher forcing; during the prediction period
/// the detached mean displacement is fed back and the targets' grids are
/// rebuilt from those predicted positions. Other agents stay recorded.
fn autoregressive_graph(
    model: &ModelParams,
    window: &SceneWindow,
    features: &FeatureConfig,
) -> Result<crate::nn::LossGraph, TrainError> {
    let tracks = target_tracks(window)?;
    let n = tracks.len();
    let total = window.len();
    let mut stepper = JointStepper::new(window, 1, Surroundings::Recorded, model, *features);
    let mut runner = Runner::new(model, n, true);
    let first: Vec<AgentState> = tracks.iter().map(|t| t[0]).collect();
    stepper.build(0, &first, &vec![Vec2::ZERO; n]);
    let mut states = first;
    let mut disp = vec![Vec2::ZERO; n];
    let mut last: Vec<(f64, f64)> = Vec::new();
    for s in 1..total - 1 {
        if s < window.t_obs {
            for (i, t) in tracks.iter().enumerate() {
                disp[i] = t[s].position - t[s - 1].position;
                states[i] = t[s];
            }
        } else {
            for i in 0..n {
                disp[i] = Vec2::new(last[i].0, last[i].1);
                states[i].position += disp[i];
                states[i].velocity = disp[i] * (1.0 / window.dt);
            }
        }
        let mut input = stepper.build(s, &states, &disp);
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
        let out = runner.step(&input)?;
        last = out.iter().map(|g| (g.mu[0], g.mu[1])).collect();
    }
    Ok(runner.finish())
}

/// Writes the loss curve as CSV preceded by `# ` comment lines holding the
/// JSON config echo.
pub fn write_loss_csv<W: Write>(mut w: W, curve: &[f64], echo: &serde_json::Value) -> std::io::Result<()> {
    let text = serde_json::to_string(echo).map_err(std::io::Error::other)?;
    writeln!(w, "# config: {text}")?;
    writeln!(w, "epoch,mean_nll")?;
    for (i, l) in curve.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, l)?;
    }
    Ok(())
}
