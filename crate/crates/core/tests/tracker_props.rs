use das_traffic::classifier::ClassModel;
use das_traffic::picker::Pick;
use das_traffic::simulator::{simulate_picks, EntrySide, ObjectSpec, Scenario};
use das_traffic::strain_io::ObjectClass;
use das_traffic::tracker::*;
use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;

fn pick(position: f64) -> Pick {
    Pick {
        time: 0.0,
        position,
        log_amplitude: -8.0,
        cluster_size: 1,
    }
}

fn state_strategy() -> impl Strategy<Value = GaussianState> {
    (3980.0..4150.0f64, -14.0..14.0f64, 1.0..40.0f64, 0.2..5.0f64, -0.9..0.9f64).prop_map(
        |(p, v, pp, vv, rho)| {
            let c = rho * (pp * vv).sqrt();
            GaussianState::new(p, v, Matrix2::new(pp, c, c, vv))
        },
    )
}

/// Posterior moments of a Gaussian prior times a position likelihood, by
/// trapezoid quadrature on a dense grid.
fn grid_posterior(prior: &GaussianState, z: f64, r: f64) -> (Vector2<f64>, Matrix2<f64>) {
    let n = 601;
    let sp = prior.cov[(0, 0)].sqrt();
    let sv = prior.cov[(1, 1)].sqrt();
    let inv = prior.cov.try_inverse().unwrap();
    let (mut w0, mut m, mut s) = (0.0, Vector2::zeros(), Matrix2::zeros());
    for a in 0..n {
        let p = prior.mean[0] + sp * (-10.0 + 20.0 * a as f64 / (n - 1) as f64);
        for b in 0..n {
            let v = prior.mean[1] + sv * (-10.0 + 20.0 * b as f64 / (n - 1) as f64);
            let x = Vector2::new(p, v);
            let d = x - prior.mean;
            let w = (-0.5 * (d.transpose() * inv * d)[0]).exp() * (-0.5 * (z - p).powi(2) / r).exp();
            w0 += w;
            m += x * w;
            s += x * x.transpose() * w;
        }
    }
    let mean = m / w0;
    (mean, s / w0 - mean * mean.transpose())
}

#[test]
fn update_matches_grid_bayes() {
    let model = MotionModel::default();
    let prior = GaussianState::new(4000.0, 9.0, Matrix2::new(12.0, 1.5, 1.5, 2.0));
    for z in [3992.0, 4000.0, 4011.0] {
        let kf = kf_update(&prior, z, &model).unwrap();
        let (mean, cov) = grid_posterior(&prior, z, model.sigma_r2);
        assert!((kf.mean - mean).norm() / mean.norm() < 1e-6);
        assert!((kf.cov - cov).norm() / cov.norm() < 1e-6, "{} vs {}", kf.cov, cov);
    }
}

#[test]
fn tracker_posterior_matches_grid_bayes_recursion() {
    let model = MotionModel::default();
    let cfg = TrackerConfig {
        p_detect: 1.0,
        ..Default::default()
    };
    let mut tracker = Tracker::new(cfg.clone(), model.clone(), ClassModel::default()).unwrap();
    let zs: Vec<f64> = (0..12).map(|k| 3975.0 + 2.1 * k as f64 + [0.8, -1.1, 0.3][k % 3]).collect();
    let mut records = Vec::new();
    tracker.step(0.0, &[pick(zs[0])], &mut records);
    let mut oracle = GaussianState::new(zs[0], 10.0, Matrix2::new(10.0, 0.0, 0.0, 2.0));
    for (k, &z) in zs.iter().enumerate().skip(1) {
        tracker.step(k as f64 * model.dt, &[pick(z)], &mut records);
        let g = model.transition();
        let predicted = GaussianState {
            mean: g * oracle.mean,
            cov: g * oracle.cov * g.transpose() + model.process_noise(),
        };
        let (mean, cov) = grid_posterior(&predicted, z, model.sigma_r2);
        oracle = GaussianState { mean, cov };
        let t = &tracker.tracks()[0];
        assert!((t.state.mean - oracle.mean).norm() / oracle.mean.norm() < 1e-6);
        assert!((t.state.cov - oracle.cov).norm() / oracle.cov.norm() < 1e-6);
    }
}

proptest! {
    #[test]
    fn beta_rows_are_distributions(
        states in prop::collection::vec(state_strategy(), 1..4),
        positions in prop::collection::vec(3963.0..4167.0f64, 0..6),
        p_detect in prop_oneof![Just(0.9), Just(1.0)],
    ) {
        let model = MotionModel::default();
        let cfg = TrackerConfig { p_detect, ..Default::default() };
        let picks: Vec<Pick> = positions.iter().map(|&p| pick(p)).collect();
        let thr = chi2_1_quantile(cfg.gate_probability);
        let gated: Vec<Vec<usize>> = states.iter().map(|s| gate(s, &picks, thr, &model)).collect();
        let terms: Vec<Vec<f64>> = states.iter().zip(&gated)
            .map(|(s, g)| association_terms(s, &picks, g, cfg.p_detect, cfg.clutter_intensity, &model))
            .collect();
        for mode in [DaMode::Joint, DaMode::PerTarget] {
            let (beta, _) = marginal_probabilities(&terms, &gated, mode, DEFAULT_HYPOTHESIS_CAP);
            for (row, g) in beta.iter().zip(&gated) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                for j in 0..picks.len() {
                    if !g.contains(&j) {
                        prop_assert_eq!(row[j + 1], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn certain_association_is_kalman_update(state in state_strategy(), z in 3963.0..4167.0f64) {
        let model = MotionModel::default();
        let picks = [pick(z)];
        let j = jpda_update(&state, &picks, &[0.0, 1.0], &model);
        let k = kf_update(&state, z, &model).unwrap();
        prop_assert_eq!(j.mean, k.mean);
        let sym = (k.cov + k.cov.transpose()) * 0.5;
        prop_assert!((j.cov - sym).norm() <= 1e-12 * sym.norm());
    }

    #[test]
    fn coasting_trace_never_shrinks(
        zs in prop::collection::vec(-6.0..6.0f64, 0..30),
        steps in 1usize..60,
    ) {
        // States the filter can reach: start from the initial prior, run a few updates.
        let model = MotionModel::default();
        let mut s = GaussianState::new(3970.0, 10.0, Matrix2::new(10.0, 0.0, 0.0, 2.0));
        for (k, dz) in zs.iter().enumerate() {
            s = kf_predict(&s, &model);
            s = kf_update(&s, 3970.0 + 2.0 * (k + 1) as f64 + dz, &model).unwrap();
        }
        for _ in 0..steps {
            let next = kf_predict(&s, &model);
            prop_assert!(next.cov.trace() >= s.cov.trace());
            s = next;
        }
    }

    #[test]
    fn joint_marginals_match_brute_force(
        terms in prop::collection::vec(prop::collection::vec(0.01..5.0f64, 5), 1..5),
        mask in prop::collection::vec(prop::collection::vec(any::<bool>(), 4), 4),
    ) {
        let n_picks = 4;
        let gated: Vec<Vec<usize>> = (0..terms.len())
            .map(|i| (0..n_picks).filter(|&j| mask[i][j]).collect())
            .collect();
        let (beta, fell_back) = marginal_probabilities(&terms, &gated, DaMode::Joint, DEFAULT_HYPOTHESIS_CAP);
        prop_assert!(!fell_back);
        let oracle = brute_force_marginals(&terms, &gated, n_picks);
        for (a, b) in beta.iter().flatten().zip(oracle.iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", beta, oracle);
        }
    }
}

/// Every assignment of tracks to distinct gated picks or to "undetected".
fn brute_force_marginals(terms: &[Vec<f64>], gated: &[Vec<usize>], n_picks: usize) -> Vec<Vec<f64>> {
    let n = terms.len();
    let mut acc = vec![vec![0.0; n_picks + 1]; n];
    let mut total = 0.0;
    let combos = (n_picks + 1).pow(n as u32);
    'outer: for code in 0..combos {
        let mut c = code;
        let mut a = vec![0usize; n];
        let mut used = vec![false; n_picks];
        for slot in a.iter_mut() {
            *slot = c % (n_picks + 1);
            c /= n_picks + 1;
        }
        let mut w = 1.0;
        for (i, &ai) in a.iter().enumerate() {
            if ai > 0 {
                let j = ai - 1;
                if !gated[i].contains(&j) || used[j] {
                    continue 'outer;
                }
                used[j] = true;
            }
            w *= terms[i][ai];
        }
        total += w;
        for (i, &ai) in a.iter().enumerate() {
            acc[i][ai] += w;
        }
    }
    for row in &mut acc {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    acc
}

fn lifecycle_rank(s: TrackStatus) -> u8 {
    match s {
        TrackStatus::Holding => 0,
        TrackStatus::Confirmed => 1,
        TrackStatus::Deleted => 2,
    }
}

#[test]
fn lifecycle_never_goes_back() {
    for seed in 0..5 {
        let scn = Scenario {
            objects: (0..6)
                .map(|i| ObjectSpec {
                    birth_time: 2.0 + 15.0 * i as f64,
                    entry_side: if i % 2 == 0 { EntrySide::Lower } else { EntrySide::Upper },
                    speed: 9.0 + i as f64,
                    class: ObjectClass::Car,
                })
                .collect(),
            duration: 150.0,
            seed,
            ..Default::default()
        };
        let (_, steps) = simulate_picks(&scn).unwrap();
        let picks: Vec<Pick> = steps.into_iter().flatten().collect();
        let records = run_tracker(
            &picks,
            0.0,
            Some(scn.n_steps()),
            &TrackerConfig::default(),
            &MotionModel::default(),
            &ClassModel::default(),
        )
        .unwrap();
        let mut last: std::collections::HashMap<u64, (TrackStatus, f64)> = Default::default();
        for r in &records {
            if let Some(&(prev, t)) = last.get(&r.track_id) {
                assert_ne!(prev, TrackStatus::Deleted, "track {} resurrected", r.track_id);
                assert!(lifecycle_rank(r.status) >= lifecycle_rank(prev));
                assert!(r.t > t);
            }
            last.insert(r.track_id, (r.status, r.t));
        }
    }
}

#[test]
fn joint_and_per_target_agree_when_gates_are_disjoint() {
    let model = MotionModel::default();
    let cfg = TrackerConfig::default();
    let states = [
        GaussianState::new(3990.0, 10.0, Matrix2::new(10.0, 0.0, 0.0, 2.0)),
        GaussianState::new(4120.0, -10.0, Matrix2::new(10.0, 0.0, 0.0, 2.0)),
    ];
    let picks = [pick(3988.0), pick(3994.0), pick(4118.0)];
    let thr = chi2_1_quantile(cfg.gate_probability);
    let gated: Vec<Vec<usize>> = states.iter().map(|s| gate(s, &picks, thr, &model)).collect();
    assert_eq!(gated, vec![vec![0, 1], vec![2]]);
    let terms: Vec<Vec<f64>> = states
        .iter()
        .zip(&gated)
        .map(|(s, g)| association_terms(s, &picks, g, cfg.p_detect, cfg.clutter_intensity, &model))
        .collect();
    let (joint, _) = marginal_probabilities(&terms, &gated, DaMode::Joint, DEFAULT_HYPOTHESIS_CAP);
    let (per, _) = marginal_probabilities(&terms, &gated, DaMode::PerTarget, DEFAULT_HYPOTHESIS_CAP);
    for (a, b) in joint.iter().flatten().zip(per.iter().flatten()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn hypothesis_cap_falls_back_to_per_target() {
    let gated = vec![vec![0, 1, 2, 3, 4, 5]; 6];
    let terms = vec![vec![0.1, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; 6];
    let (beta, fell_back) = marginal_probabilities(&terms, &gated, DaMode::Joint, 100);
    assert!(fell_back);
    let total: f64 = terms[0].iter().sum();
    assert!((beta[0][6] - 6.0 / total).abs() < 1e-12);
}
