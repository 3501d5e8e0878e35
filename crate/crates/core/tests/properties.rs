use proptest::prelude::*;
use ttc_grid::baselines::linear_regression_predict;
use ttc_grid::geometry::ttc_relative;
use ttc_grid::grid::build_grid;
use ttc_grid::metrics::{evaluate, mhd, MhdMode};
use ttc_grid::nn::{nll, GaussianParams};
use ttc_grid::scene::{derive_velocities, make_windows, split_first_minutes, Frame, Scene};
use ttc_grid::synth::{synthesize_scenarios, SynthConfig};
use ttc_grid::{select_interacting, time_to_collision, AgentState, InteractionParams, Vec2};

fn vec2(range: f64) -> impl Strategy<Value = Vec2> {
    (-range..range, -range..range).prop_map(|(x, y)| Vec2::new(x, y))
}

fn track(len: usize) -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec(vec2(30.0), len)
}

/// Closest approach along the relative path, for keeping away from grazing
/// cases where a 1-ulp change flips collision existence.
fn clearance(d: Vec2, v: Vec2, d_min: f64) -> f64 {
    let t = if v.norm_sq() > 0.0 {
        (-d.dot(v) / v.norm_sq()).max(0.0)
    } else {
        0.0
    };
    ((d + v * t).norm() - d_min).abs()
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol * (1.0 + x.abs()),
        (None, None) => true,
        _ => false,
    }
}

proptest! {
    #[test]
    fn ttc_is_symmetric(pa in vec2(20.0), pb in vec2(20.0), va in vec2(2.0), vb in vec2(2.0), d_min in 0.1..2.0f64) {
        let a = AgentState::pedestrian(1, pa, va);
        let b = AgentState::pedestrian(2, pb, vb);
        prop_assert_eq!(time_to_collision(&a, &b, d_min), time_to_collision(&b, &a, d_min));
    }

    #[test]
    fn ttc_is_euclidean_invariant(
        d in vec2(20.0), v in vec2(2.0), d_min in 0.1..2.0f64, angle in -3.2..3.2f64, shift in vec2(500.0),
    ) {
        prop_assume!(clearance(d, v, d_min) > 1e-6 && d.dot(v).abs() > 1e-6);
        let a = AgentState::pedestrian(1, shift, Vec2::new(0.3, -0.2));
        let b = AgentState::pedestrian(2, shift - d, Vec2::new(0.3, -0.2) - v);
        let ra = AgentState { position: a.position.rotate(angle) + shift, velocity: a.velocity.rotate(angle), ..a };
        let rb = AgentState { position: b.position.rotate(angle) + shift, velocity: b.velocity.rotate(angle), ..b };
        prop_assert!(close(time_to_collision(&a, &b, d_min), time_to_collision(&ra, &rb, d_min), 1e-9));
    }

    #[test]
    fn ttc_time_shift(d in vec2(20.0), v in vec2(2.0), d_min in 0.1..2.0f64, frac in 0.0..0.9f64) {
        prop_assume!(clearance(d, v, d_min) > 1e-6);
        if let Some(t) = ttc_relative(d, v, d_min).filter(|&t| t > 0.0) {
            let tau = frac * t;
            let later = ttc_relative(d + v * tau, v, d_min);
            prop_assert!(close(later, Some(t - tau), 1e-9), "{later:?} vs {}", t - tau);
        }
    }

    #[test]
    fn ttc_monotone_in_d_min(d in vec2(20.0), v in vec2(2.0), d_min in 0.1..2.0f64, extra in 0.0..1.0f64) {
        let small = ttc_relative(d, v, d_min);
        let large = ttc_relative(d, v, d_min + extra);
        if let Some(s) = small {
            let l = large.expect("a larger disc is hit whenever a smaller one is");
            prop_assert!(l <= s + 1e-12);
        }
    }

    #[test]
    fn ttc_matches_simulation(d in vec2(10.0), v in vec2(2.0), d_min in 0.3..1.5f64) {
        prop_assume!(clearance(d, v, d_min) > 1e-3);
        let dt = 1e-3;
        let sim = (0..=20_000).map(|k| k as f64 * dt).find(|&t| (d + v * t).norm() < d_min);
        let analytic = ttc_relative(d, v, d_min).filter(|&t| t <= 20.0);
        match (analytic, sim) {
            (Some(a), Some(s)) => prop_assert!((a - s).abs() <= 2e-3),
            (None, None) => {}
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn grid_is_rigid_invariant(
        agents in prop::collection::vec((vec2(12.0), vec2(2.0), any::<bool>()), 1..8),
        v_target in vec2(1.5),
        angle in -3.2..3.2f64,
        shift in vec2(300.0),
    ) {
        prop_assume!(v_target.norm() > 0.1);
        let target = AgentState::pedestrian(0, Vec2::ZERO, v_target);
        let others: Vec<AgentState> = agents
            .iter()
            .enumerate()
            .map(|(i, &(p, v, still))| AgentState::pedestrian(i as u64 + 1, p, if still { Vec2::ZERO } else { v }))
            .collect();
        let params = InteractionParams::pedestrian();
        let grid = |t: &AgentState, o: &[AgentState]| build_grid(t, &select_interacting(t, o, &params), &params, 8, None);
        let moved = |a: &AgentState| AgentState { position: a.position.rotate(angle) + shift, velocity: a.velocity.rotate(angle), ..*a };
        let g0 = grid(&target, &others);
        let g1 = grid(&moved(&target), &others.iter().map(moved).collect::<Vec<_>>());
        for (a, b) in g0.values.iter().zip(&g1.values) {
            prop_assert!((a - b).abs() <= 1e-9, "{:?} vs {:?}", g0.values, g1.values);
        }
        prop_assert!(g0.values.iter().all(|&x| (0.0..=params.ttc_threshold).contains(&x)));
    }

    #[test]
    fn metrics_are_rigid_invariant(pred in track(6), gt in track(6), angle in -3.2..3.2f64, shift in vec2(100.0)) {
        let mv = |t: &[Vec2]| t.iter().map(|p| p.rotate(angle) + shift).collect::<Vec<_>>();
        let a = evaluate(&pred, &gt, 0.4, MhdMode::Dubuisson).unwrap();
        let b = evaluate(&mv(&pred), &mv(&gt), 0.4, MhdMode::Dubuisson).unwrap();
        prop_assert!((a.ade - b.ade).abs() < 1e-9);
        prop_assert!((a.fde - b.fde).abs() < 1e-9);
        prop_assert!((a.mhd - b.mhd).abs() < 1e-9);
        prop_assert!((a.se - b.se).abs() < 1e-9);
        match (a.he, b.he) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-6),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn mhd_is_symmetric(a in prop::collection::vec(vec2(10.0), 1..10), b in prop::collection::vec(vec2(10.0), 1..10)) {
        for mode in [MhdMode::Dubuisson, MhdMode::Hausdorff] {
            prop_assert_eq!(mhd(&a, &b, mode).unwrap().to_bits(), mhd(&b, &a, mode).unwrap().to_bits());
        }
    }

    #[test]
    fn nll_is_translation_invariant(
        mu in vec2(5.0), target in vec2(5.0), shift in vec2(50.0),
        sx in 0.05..3.0f64, sy in 0.05..3.0f64, rho in -0.95..0.95f64,
    ) {
        let p = GaussianParams { mu: [mu.x, mu.y], sigma: [sx, sy], rho };
        let q = GaussianParams { mu: [mu.x + shift.x, mu.y + shift.y], ..p };
        let a = nll(&p, [target.x, target.y]).unwrap();
        let b = nll(&q, [target.x + shift.x, target.y + shift.y]).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn velocities_integrate_back_to_positions(positions in track(8), rate in 1.0..10.0f64) {
        let frames = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| Frame { frame_id: i as i64, agents: vec![AgentState::pedestrian(1, p, Vec2::ZERO)] })
            .collect();
        let (scene, warnings) = derive_velocities(&Scene::new(rate, frames)).unwrap();
        prop_assert!(warnings.is_empty());
        let mut p = positions[0];
        for (i, f) in scene.frames.iter().enumerate().skip(1) {
            p += f.agents[0].velocity * (1.0 / rate);
            prop_assert!((p - positions[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn linear_regression_is_affine_equivariant(obs in track(6), angle in -3.2..3.2f64, scale in 0.2..5.0f64, shift in vec2(100.0)) {
        let map = |p: Vec2| p.rotate(angle) * scale + shift;
        let direct: Vec<Vec2> = linear_regression_predict(&obs, 6).into_iter().map(map).collect();
        let mapped = linear_regression_predict(&obs.iter().map(|&p| map(p)).collect::<Vec<_>>(), 6);
        for (a, b) in direct.iter().zip(&mapped) {
            prop_assert!((*a - *b).norm() < 1e-8);
        }
    }

    #[test]
    fn linear_regression_exact_on_lines(p0 in vec2(100.0), v in vec2(3.0), t_obs in 2usize..10, t_pred in 1usize..12) {
        let line: Vec<Vec2> = (0..t_obs + t_pred).map(|t| p0 + v * t as f64).collect();
        let pred = linear_regression_predict(&line[..t_obs], t_pred);
        prop_assert!(ttc_grid::metrics::ade(&pred, &line[t_obs..]).unwrap() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthesis_is_pure_and_windows_are_complete(seed in any::<u64>(), per in 1i64..3, t_obs in 2usize..8, t_pred in 1usize..8, stride in 1usize..5) {
        let cfg = SynthConfig::mixed(per);
        let scene = synthesize_scenarios(&cfg, seed).unwrap();
        prop_assert_eq!(&scene, &synthesize_scenarios(&cfg, seed).unwrap());
        scene.validate().unwrap();

        for w in make_windows(&scene, t_obs, t_pred, stride).unwrap() {
            prop_assert_eq!(w.frames.len(), t_obs + t_pred);
            prop_assert_eq!(w.start_index % stride, 0);
            prop_assert!(!w.target_ids.is_empty());
            for (id, gt) in w.target_ids.iter().zip(&w.ground_truth) {
                prop_assert_eq!(gt.len(), t_pred);
                for (s, p) in gt.iter().enumerate() {
                    prop_assert_eq!(w.state(t_obs + s, *id).unwrap().position, *p);
                }
                prop_assert!((0..t_obs).all(|s| w.state(s, *id).is_some()));
            }
        }
    }

    #[test]
    fn split_partitions_frames(seed in any::<u64>(), minutes in 0.0..2.0f64) {
        let scene = synthesize_scenarios(&SynthConfig::mixed(1), seed).unwrap();
        let (test, train) = split_first_minutes(&scene, minutes);
        prop_assert_eq!(test.len() + train.len(), scene.len());
        let expected = scene.len().min((minutes * 60.0 * scene.frame_rate).ceil() as usize);
        prop_assert_eq!(test.len(), expected);
    }
}
