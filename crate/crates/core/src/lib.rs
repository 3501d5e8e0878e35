//! Pedestrian trajectory prediction in mixed pedestrian/vehicle scenes.
//!
//! Interactions are encoded by selecting neighbors on a collision course
//! (closed-form time-to-collision) and summarising them in polar collision
//! grids indexed by approach angle. An LSTM consumes the embedded grids
//! together with the pedestrian's own displacement and emits a bivariate
//! Gaussian over the next displacement.

pub mod baselines;
pub mod features;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod nn;
pub mod predict;
pub mod scene;
pub mod synth;
pub mod train;
pub mod vec2;

pub use geometry::{select_interacting, time_to_collision, InteractionParams, InteractionRecord};
pub use grid::PolarCollisionGrid;
pub use nn::{GaussianParams, ModelConfig, ModelParams, Variant};
pub use scene::{AgentId, AgentKind, AgentState, Scene, SceneWindow};
pub use vec2::Vec2;
