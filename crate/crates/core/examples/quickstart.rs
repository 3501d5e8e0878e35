//! Synthesizes a small mixed scene, trains a PV-CollisionGrid model for a
//! few epochs and compares it with the linear baseline.
//!
//!     cargo run --release -p ttc-grid --example quickstart

use ttc_grid::features::FeatureConfig;
use ttc_grid::nn::{ModelConfig, Variant};
use ttc_grid::predict::{evaluate_linear, evaluate_model, EvalOptions, RolloutOptions};
use ttc_grid::scene::make_windows;
use ttc_grid::synth::{synthesize_scenarios, SynthConfig};
use ttc_grid::train::{train, TrainConfig, TrainSetup};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train_scene = synthesize_scenarios(&SynthConfig::mixed(12), 1)?;
    let test_scene = synthesize_scenarios(&SynthConfig::mixed(6), 2)?;
    let train_windows = make_windows(&train_scene, 6, 6, 2)?;
    let test_windows = make_windows(&test_scene, 6, 6, 6)?;
    println!(
        "{} training windows, {} test windows",
        train_windows.len(),
        test_windows.len()
    );

    let setup = TrainSetup {
        variant: Variant::Pv,
        model: ModelConfig {
            embed_dim: 32,
            hidden_dim: 64,
            ..Default::default()
        },
        features: FeatureConfig::default(),
        train: TrainConfig {
            epochs: 15,
            seed: 1,
            ..Default::default()
        },
    };
    let result = train(&train_windows, &setup, |epoch, loss, _| {
        println!("epoch {epoch:>2}  nll {loss:.3}")
    })?;

    let eval = EvalOptions::default();
    let model = evaluate_model(&test_windows, &result.model, 20, 0, &RolloutOptions::default(), &eval)?;
    let linear = evaluate_linear(&test_windows, &eval)?;
    println!(
        "PV-CollisionGrid best-of-20  ADE {:.3}  FDE {:.3}",
        model.ade, model.fde
    );
    println!(
        "linear regression            ADE {:.3}  FDE {:.3}",
        linear.ade, linear.fde
    );
    Ok(())
}
