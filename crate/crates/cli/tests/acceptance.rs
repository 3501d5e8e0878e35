//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails. Criterion 11 only runs when `TTCGRID_HBS_CSV` points at
//! a recorded scene in the canonical CSV schema.
//!
//! At the default width a full sweep of every scalar would take hours, so
//! the gradient check covers every parameter of a narrow model and a seeded
//! sample of every tensor at the default width.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttc_grid::baselines::linear_regression_predict;
use ttc_grid::features::{window_grid_rows, window_inputs, FeatureConfig};
use ttc_grid::metrics::{best_of_k, evaluate, mhd, BestOf, MetricSet, MhdMode};
use ttc_grid::nn::{nll, GaussianParams, ModelConfig, ModelParams, Variant};
use ttc_grid::predict::{derive_seed, evaluate_model, rollout, EvalOptions, RolloutOptions};
use ttc_grid::scene::{make_windows, Frame, Scene, SceneWindow};
use ttc_grid::synth::{synthesize_scenarios, SynthConfig};
use ttc_grid::train::{train, TrainConfig, TrainSetup};
use ttc_grid::{time_to_collision, AgentState, Vec2};

const BIN: &str = env!("CARGO_BIN_EXE_ttcgrid");

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Verdict::{Fail, Pass, Skip};

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("TTC matches brute-force simulation", ttc_oracle),
        ("analytic gradients match central differences", gradient_check),
        ("NLL at the mean equals log 2pi", nll_at_mean),
        (
            "grids are rigid-motion invariant, zero for parallel walkers",
            grid_invariance,
        ),
        ("training halves the epoch-1 NLL", training_sanity),
        ("PV-CollisionGrid beats Vanilla LSTM", directional_pv),
        ("filtered Social LSTM no worse than Social LSTM", directional_social),
        ("metric identities", metric_identities),
        ("linear regression exact on constant velocity", linear_exact),
        ("CLI outputs are bit-identical on rerun", cli_reproducible),
        ("end-to-end eval on recorded data", recorded_data),
    ];
    // e.g. TTCGRID_ACCEPTANCE_ONLY=1,10 while iterating
    let only: Option<Vec<usize>> = std::env::var("TTCGRID_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let v = match &only {
            Some(list) if !list.contains(&(i + 1)) => Skip("not selected".into()),
            _ => check(),
        };
        let secs = t0.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("criterion {:>2}: {tag} {name} ({detail}; {secs:.1} s)", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// 1 -------------------------------------------------------------------------

fn brute_force_ttc(a: &AgentState, b: &AgentState, d_min: f64) -> Option<f64> {
    let d = a.position - b.position;
    let v = a.velocity - b.velocity;
    let dt = 1e-3;
    (0..=60_000)
        .map(|k| k as f64 * dt)
        .find(|&t| (d + v * t).norm() < d_min)
}

fn ttc_oracle() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut mismatches, mut collisions) = (0.0f64, 0, 0);
    for i in 0..1000 {
        let pa = Vec2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let pb = Vec2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let va = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        // every other pair is aimed roughly at the first agent
        let vb = if i % 2 == 0 {
            let aim = (pa - pb) * (1.0 / (pa - pb).norm().max(1e-9));
            aim * rng.gen_range(0.5..3.0) + Vec2::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3))
        } else {
            Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
        };
        let d_min = rng.gen_range(0.3..2.0);
        let a = AgentState::pedestrian(1, pa, va);
        let b = AgentState::pedestrian(2, pb, vb);
        let analytic = time_to_collision(&a, &b, d_min).filter(|&t| t <= 60.0);
        match (analytic, brute_force_ttc(&a, &b, d_min)) {
            (Some(x), Some(y)) => {
                collisions += 1;
                worst = worst.max((x - y).abs());
            }
            (None, None) => {}
            _ => mismatches += 1,
        }
    }
    let elapsed = t0.elapsed();
    verdict(
        worst <= 2e-3 && mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("{collisions} collisions, max |dt| {worst:.2e} s, {mismatches} existence mismatches"),
    )
}

// 2 -------------------------------------------------------------------------

fn straight_scene(agents: &[(u64, bool, (f64, f64), (f64, f64))], frames: usize, rate: f64) -> Scene {
    let dt = 1.0 / rate;
    let frames = (0..frames)
        .map(|f| Frame {
            frame_id: f as i64,
            agents: agents
                .iter()
                .map(|&(id, ped, p, v)| {
                    let v = Vec2::new(v.0, v.1);
                    let p = Vec2::new(p.0, p.1) + v * (f as f64 * dt);
                    if ped {
                        AgentState::pedestrian(id, p, v)
                    } else {
                        AgentState::vehicle(id, p, v)
                    }
                })
                .collect(),
        })
        .collect();
    Scene::new(rate, frames)
}

fn gradient_window() -> SceneWindow {
    let scene = straight_scene(
        &[
            (1, true, (0.0, 0.0), (1.2, 0.05)),
            (2, true, (9.0, 0.4), (-1.1, 0.0)),
            (3, true, (4.0, -5.0), (0.1, 1.3)),
            (100, false, (18.0, -1.0), (-4.0, 0.1)),
        ],
        12,
        2.5,
    );
    make_windows(&scene, 6, 6, 1).unwrap().remove(0)
}

/// Returns (checked entries, worst relative error, worst entry).
fn fd_compare(model: &ModelParams, window: &SceneWindow, per_tensor: Option<usize>, seed: u64) -> (usize, f64, String) {
    let steps = window_inputs(window, model.variant, &FeatureConfig::default()).unwrap();
    let rows = window.target_ids.len();
    let grads = model.backward(&model.forward_loss(rows, &steps).unwrap()).unwrap();
    let analytic: Vec<(&str, Vec<f64>)> = grads.tensors().into_iter().map(|(n, _, v)| (n, v.to_vec())).collect();
    let mut probe = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let (mut checked, mut worst, mut at) = (0, 0.0f64, String::new());
    for (t, (name, values)) in analytic.iter().enumerate() {
        let idx: Vec<usize> = match per_tensor {
            Some(n) if n < values.len() => (0..n).map(|_| rng.gen_range(0..values.len())).collect(),
            _ => (0..values.len()).collect(),
        };
        for i in idx {
            let orig = probe.tensors_mut()[t].1[i];
            probe.tensors_mut()[t].1[i] = orig + h;
            let lp = probe.forward_loss(rows, &steps).unwrap().loss;
            probe.tensors_mut()[t].1[i] = orig - h;
            let lm = probe.forward_loss(rows, &steps).unwrap().loss;
            probe.tensors_mut()[t].1[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let a = values[i];
            // entries below 1e-8 in magnitude are compared absolutely
            let rel = if (fd - a).abs() < 1e-9 {
                0.0
            } else {
                (fd - a).abs() / fd.abs().max(a.abs()).max(1e-8)
            };
            checked += 1;
            if rel > worst {
                worst = rel;
                at = format!("{name}[{i}]");
            }
        }
    }
    (checked, worst, at)
}

fn gradient_check() -> Verdict {
    let t0 = Instant::now();
    let window = gradient_window();
    let small = ModelConfig {
        embed_dim: 8,
        hidden_dim: 12,
        ..Default::default()
    };
    let (n_small, w_small, at_small) = fd_compare(&ModelParams::init(Variant::Pv, small, 3), &window, None, 0);
    let (n_full, w_full, at_full) = fd_compare(
        &ModelParams::init(Variant::Pv, ModelConfig::default(), 3),
        &window,
        Some(400),
        11,
    );
    let elapsed = t0.elapsed();
    verdict(
        w_small <= 1e-4 && w_full <= 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "width 12: all {n_small} params, max rel {w_small:.1e} at {at_small}; \
             width 128: {n_full} sampled params, max rel {w_full:.1e} at {at_full}"
        ),
    )
}

// 3 -------------------------------------------------------------------------

fn nll_at_mean() -> Verdict {
    let p = GaussianParams {
        mu: [0.3, -1.7],
        sigma: [1.0, 1.0],
        rho: 0.0,
    };
    let got = nll(&p, [0.3, -1.7]).unwrap();
    let want = (2.0 * std::f64::consts::PI).ln();
    verdict(
        (got - want).abs() <= 1e-9,
        format!("nll {got:.12}, |diff| {:.1e}", (got - want).abs()),
    )
}

// 4 -------------------------------------------------------------------------

fn grid_values(scene: &Scene) -> Vec<f64> {
    let cfg = FeatureConfig::default();
    make_windows(scene, 6, 6, 6)
        .unwrap()
        .iter()
        .flat_map(|w| window_grid_rows(w, &cfg).unwrap())
        .flat_map(|r| r.ppcg.into_iter().chain(r.vpcg))
        .collect()
}

fn grid_invariance() -> Verdict {
    let scene = synthesize_scenarios(&SynthConfig::mixed(4), 4).unwrap();
    let base = grid_values(&scene);
    let nonzero = base.iter().filter(|&&v| v > 0.0).count();
    let mut worst = 0.0f64;
    for (angle, offset) in [
        (0.7, (13.0, -4.0)),
        (-2.1, (-250.0, 80.0)),
        (std::f64::consts::FRAC_PI_2, (0.0, 0.0)),
    ] {
        let moved = scene.rigid_transform(angle, Vec2::new(3.0, 1.0), Vec2::new(offset.0, offset.1));
        let other = grid_values(&moved);
        if other.len() != base.len() {
            return Fail(format!("grid count changed: {} vs {}", base.len(), other.len()));
        }
        worst = base
            .iter()
            .zip(&other)
            .map(|(a, b)| (a - b).abs())
            .fold(worst, f64::max);
    }
    let mut parallel = SynthConfig::mixed(0);
    parallel.counts.parallel_walk = 12;
    let pw = grid_values(&synthesize_scenarios(&parallel, 4).unwrap());
    let pw_max = pw.iter().cloned().fold(0.0, f64::max);
    verdict(
        worst <= 1e-9 && nonzero > 0 && !pw.is_empty() && pw_max == 0.0,
        format!(
            "{} entries ({nonzero} non-zero), max deviation {worst:.1e}; parallel walkers max {pw_max}",
            base.len()
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn sanity_windows() -> Vec<SceneWindow> {
    let scene = synthesize_scenarios(&SynthConfig::mixed(8), 7).unwrap();
    let all = make_windows(&scene, 6, 6, 1).unwrap();
    assert!(all.len() >= 200, "only {} windows", all.len());
    // spread the 200 windows over every template instance
    (0..200).map(|i| all[i * all.len() / 200].clone()).collect()
}

fn training_sanity() -> Verdict {
    let t0 = Instant::now();
    let windows = sanity_windows();
    let setup = TrainSetup {
        variant: Variant::Pv,
        model: ModelConfig::default(),
        features: FeatureConfig::default(),
        train: TrainConfig {
            epochs: 50,
            seed: 7,
            ..Default::default()
        },
    };
    let r = match train(&windows, &setup, |_, _, _| {}) {
        Ok(r) => r,
        Err(e) => return Fail(e.to_string()),
    };
    let (first, last) = (r.loss_curve[0], *r.loss_curve.last().unwrap());
    let elapsed = t0.elapsed();
    verdict(
        last <= 0.5 * first && elapsed < Duration::from_secs(300),
        format!("epoch 1 {first:.3}, epoch 50 {last:.3}"),
    )
}

// 6, 7 ----------------------------------------------------------------------

fn data_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn synth_config(name: &str) -> SynthConfig {
    serde_json::from_str(&std::fs::read_to_string(data_file(name)).unwrap()).unwrap()
}

struct SeedRun {
    seed: u64,
    test_windows: usize,
    ade: Vec<(Variant, f64)>,
}

impl SeedRun {
    fn ade(&self, v: Variant) -> f64 {
        self.ade.iter().find(|(x, _)| *x == v).unwrap().1
    }
}

/// Trains every compared variant on the avoidance set for seeds 1-3 and
/// records best-of-20 ADE. Computed once and shared by criteria 6 and 7.
fn directional_runs() -> &'static Result<Vec<SeedRun>, String> {
    static RUNS: std::sync::OnceLock<Result<Vec<SeedRun>, String>> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| {
        let (train_cfg, test_cfg) = (
            synth_config("avoidance_train.json"),
            synth_config("avoidance_test.json"),
        );
        (1..=3u64)
            .map(|seed| {
                let train_scene = synthesize_scenarios(&train_cfg, seed).map_err(|e| e.to_string())?;
                let test_scene = synthesize_scenarios(&test_cfg, derive_seed(seed, 1000)).map_err(|e| e.to_string())?;
                let train_w = make_windows(&train_scene, 6, 6, 2).map_err(|e| e.to_string())?;
                let test_w = make_windows(&test_scene, 6, 6, 6).map_err(|e| e.to_string())?;
                let ade = [Variant::Pv, Variant::Vanilla, Variant::Social, Variant::SocialFiltered]
                    .into_iter()
                    .map(|variant| {
                        let setup = TrainSetup {
                            variant,
                            model: ModelConfig {
                                embed_dim: 32,
                                hidden_dim: 64,
                                ..Default::default()
                            },
                            features: FeatureConfig::default(),
                            train: TrainConfig {
                                epochs: 30,
                                seed,
                                ..Default::default()
                            },
                        };
                        let model = train(&train_w, &setup, |_, _, _| {}).map_err(|e| e.to_string())?.model;
                        let m = evaluate_model(
                            &test_w,
                            &model,
                            20,
                            seed,
                            &RolloutOptions::default(),
                            &EvalOptions::default(),
                        )
                        .map_err(|e| e.to_string())?;
                        Ok((variant, m.ade))
                    })
                    .collect::<Result<_, String>>()?;
                Ok(SeedRun {
                    seed,
                    test_windows: test_w.len(),
                    ade,
                })
            })
            .collect()
    })
}

fn directional(better: Variant, worse: Variant, strict: bool) -> Verdict {
    let runs = match directional_runs() {
        Ok(r) => r,
        Err(e) => return Fail(e.clone()),
    };
    let mut wins = 0;
    let mut parts = Vec::new();
    for r in runs {
        let (b, w) = (r.ade(better), r.ade(worse));
        let won = if strict { b < w } else { b <= w };
        wins += won as usize;
        parts.push(format!(
            "seed {} ({} windows): {b:.4} vs {w:.4}",
            r.seed, r.test_windows
        ));
    }
    let enough = runs.iter().all(|r| r.test_windows >= 300);
    verdict(wins >= 2 && enough, format!("{wins}/3 seeds; {}", parts.join(", ")))
}

fn directional_pv() -> Verdict {
    directional(Variant::Pv, Variant::Vanilla, true)
}

fn directional_social() -> Verdict {
    directional(Variant::SocialFiltered, Variant::Social, false)
}

// 8 -------------------------------------------------------------------------

fn metric_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();

    // identical trajectories
    for _ in 0..100 {
        let track: Vec<Vec2> = (0..6)
            .map(|_| Vec2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)))
            .collect();
        let m = evaluate(&track, &track, 0.4, MhdMode::Dubuisson).unwrap();
        if m.ade != 0.0 || m.fde != 0.0 || m.mhd != 0.0 || m.se != 0.0 || m.he.is_some_and(|h| h != 0.0) {
            failures.push(format!("pred = gt gave {m:?}"));
            break;
        }
    }

    // MHD symmetry, both conventions
    for _ in 0..500 {
        let n = rng.gen_range(1..10);
        let m = rng.gen_range(1..10);
        let a: Vec<Vec2> = (0..n)
            .map(|_| Vec2::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)))
            .collect();
        let b: Vec<Vec2> = (0..m)
            .map(|_| Vec2::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)))
            .collect();
        for mode in [MhdMode::Dubuisson, MhdMode::Hausdorff] {
            if mhd(&a, &b, mode).unwrap().to_bits() != mhd(&b, &a, mode).unwrap().to_bits() {
                failures.push(format!("{mode:?} asymmetric"));
            }
        }
    }

    // best-of-20 <= best-of-1 on real rollouts of a briefly trained model
    let scene = synthesize_scenarios(&SynthConfig::mixed(3), 8).unwrap();
    let windows = make_windows(&scene, 6, 6, 6).unwrap();
    let setup = TrainSetup {
        variant: Variant::Pv,
        model: ModelConfig {
            embed_dim: 16,
            hidden_dim: 32,
            ..Default::default()
        },
        features: FeatureConfig::default(),
        train: TrainConfig {
            epochs: 3,
            seed: 8,
            ..Default::default()
        },
    };
    let model = train(&windows, &setup, |_, _, _| {}).unwrap().model;
    let opts = RolloutOptions::default();
    let mut pairs = 0;
    for w in &windows {
        let seed = derive_seed(8, w.window_id as u64);
        let k20 = rollout(w, &model, 20, seed, &opts).unwrap();
        let k1 = rollout(w, &model, 1, seed, &opts).unwrap();
        for (i, gt) in w.ground_truth.iter().enumerate() {
            let b20 = best_of_k(&k20.samples[i], gt, w.dt, MhdMode::Dubuisson, BestOf::PerMetric).unwrap();
            let b1 = best_of_k(&k1.samples[i], gt, w.dt, MhdMode::Dubuisson, BestOf::PerMetric).unwrap();
            pairs += 1;
            if !not_worse(&b20, &b1) {
                failures.push(format!("window {} target {i}: {b20:?} > {b1:?}", w.window_id));
            }
        }
    }
    verdict(
        failures.is_empty(),
        match failures.first() {
            None => format!("{pairs} best-of pairs, 500 symmetry cases"),
            Some(f) => f.clone(),
        },
    )
}

fn not_worse(a: &MetricSet, b: &MetricSet) -> bool {
    let he = match (a.he, b.he) {
        (Some(x), Some(y)) => x <= y,
        (None, None) => true,
        _ => false,
    };
    a.ade <= b.ade && a.fde <= b.fde && a.mhd <= b.mhd && a.se <= b.se && he
}

// 9 -------------------------------------------------------------------------

fn linear_exact() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p0 = Vec2::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let v = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let t_obs = rng.gen_range(2..10);
        let t_pred = rng.gen_range(1..13);
        let track: Vec<Vec2> = (0..t_obs + t_pred).map(|t| p0 + v * (t as f64 * 0.4)).collect();
        let pred = linear_regression_predict(&track[..t_obs], t_pred);
        worst = worst.max(ttc_grid::metrics::ade(&pred, &track[t_obs..]).unwrap());
    }
    verdict(worst <= 1e-9, format!("1000 tracks, max ADE {worst:.1e} m"))
}

// 10 ------------------------------------------------------------------------

fn cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn cli_run(d: &Path) -> Result<(), String> {
    std::fs::write(
        d.join("mix.json"),
        serde_json::to_string(&SynthConfig::mixed(2)).unwrap(),
    )
    .unwrap();
    cli(
        d,
        &["synth", "--config", "mix.json", "--seed", "10", "--out", "scene.csv"],
    )?;
    for (variant, out) in [("pv", "pv.json"), ("social_filtered", "sf.json")] {
        cli(
            d,
            &[
                "train",
                "--data",
                "scene.csv",
                "--variant",
                variant,
                "--epochs",
                "2",
                "--hidden-dim",
                "16",
                "--embed-dim",
                "8",
                "--seed",
                "10",
                "--out",
                out,
                "--threads",
                "2",
            ],
        )?;
    }
    cli(
        d,
        &[
            "eval",
            "--data",
            "scene.csv",
            "--checkpoint",
            "sf.json",
            "--k",
            "5",
            "--seed",
            "10",
            "--out",
            "res.json",
            "--threads",
            "2",
        ],
    )?;
    cli(
        d,
        &[
            "eval",
            "--data",
            "scene.csv",
            "--baseline",
            "linear",
            "--out",
            "lin.json",
        ],
    )?;
    cli(
        d,
        &[
            "predict",
            "--data",
            "scene.csv",
            "--checkpoint",
            "pv.json",
            "--window-id",
            "1",
            "--k",
            "5",
            "--out",
            "pred.csv",
        ],
    )?;
    cli(
        d,
        &[
            "grids",
            "--data",
            "scene.csv",
            "--window-id",
            "1",
            "--out",
            "grids.json",
        ],
    )?;
    Ok(())
}

fn cli_reproducible() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    if let Err(e) = cli_run(a.path()).and_then(|_| cli_run(b.path())) {
        return Fail(e);
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.path().join(n)).ok() != std::fs::read(b.path().join(n)).ok())
        .collect();
    verdict(
        differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", names.len()),
    )
}

// 11 ------------------------------------------------------------------------

fn recorded_data() -> Verdict {
    let Ok(data) = std::env::var("TTCGRID_HBS_CSV") else {
        return Skip("set TTCGRID_HBS_CSV to a recorded scene to run".into());
    };
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let minutes = std::env::var("TTCGRID_HBS_SPLIT_MINUTES").unwrap_or_else(|_| "2".into());
    let checkpoint = match std::env::var("TTCGRID_HBS_CHECKPOINT") {
        Ok(c) => c,
        Err(_) => {
            let epochs = std::env::var("TTCGRID_HBS_EPOCHS").unwrap_or_else(|_| "5".into());
            let out = d.join("hbs_model.json").display().to_string();
            if let Err(e) = cli(
                d,
                &[
                    "train",
                    "--data",
                    &data,
                    "--variant",
                    "pv",
                    "--split-minutes",
                    &minutes,
                    "--epochs",
                    &epochs,
                    "--out",
                    &out,
                ],
            ) {
                return Fail(e);
            }
            out
        }
    };
    let results = d.join("hbs_results.json").display().to_string();
    match cli(
        d,
        &[
            "eval",
            "--data",
            &data,
            "--split-minutes",
            &minutes,
            "--checkpoint",
            &checkpoint,
            "--out",
            &results,
        ],
    ) {
        Ok(stdout) => {
            print!("{stdout}");
            verdict(
                stdout.contains("0.295") && Path::new(&results).exists(),
                "eval completed, reference values printed".into(),
            )
        }
        Err(e) => Fail(e),
    }
}
