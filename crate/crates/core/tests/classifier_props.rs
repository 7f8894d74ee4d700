use das_traffic::classifier::*;
use das_traffic::picker::Pick;
use das_traffic::tracker::{association_terms, gate, chi2_1_quantile, GaussianState, MotionModel, TrackerConfig};
use nalgebra::Matrix2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn row() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..5).prop_flat_map(|n| {
        (
            prop::collection::vec(0.001..10.0f64, n + 1),
            prop::collection::vec(-11.0..-4.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn posterior_stays_normalized(
        (terms, amps) in row(),
        p0 in 0.01..0.99f64,
        updates in 1usize..20,
    ) {
        let model = ClassModel::default();
        let z: f64 = terms.iter().sum();
        let beta: Vec<f64> = terms.iter().map(|t| t / z).collect();
        let mut post = ClassPosterior::from_probabilities([p0, 1.0 - p0]);
        for _ in 0..updates {
            post = update_class_posterior(&post, &amps, &beta, &model);
            let [a, b] = post.probabilities();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    // the update for a single sure detection is pi_l * phi_l(y); scaling both
    // likelihood values by one constant must cancel in the normalization
    #[test]
    fn common_likelihood_scale_cancels(y in -11.0..-4.0f64, p0 in 0.01..0.99f64, s in 1e-3..1e3f64) {
        let model = ClassModel::default();
        let l = [model.log_likelihood(0, y).exp(), model.log_likelihood(1, y).exp()];
        let direct = [p0 * l[0], (1.0 - p0) * l[1]];
        let scaled = [p0 * s * l[0], (1.0 - p0) * s * l[1]];
        let a = ClassPosterior::from_probabilities(direct).probabilities();
        let b = ClassPosterior::from_probabilities(scaled).probabilities();
        prop_assert!((a[0] - b[0]).abs() < 1e-12);
        let via_update = update_class_posterior(
            &ClassPosterior::from_probabilities([p0, 1.0 - p0]), &[y], &[0.0, 1.0], &model,
        ).probabilities();
        prop_assert!((via_update[0] - a[0]).abs() < 1e-12);
    }

    // disjoint gates holding one pick each, near the prediction and at a
    // class-typical amplitude
    #[test]
    fn refinement_keeps_argmax_on_disjoint_gates(
        offsets in prop::collection::vec((-1.0..1.0f64, -1.5..1.5f64, any::<bool>()), 1..5),
    ) {
        let model = MotionModel::default();
        let classes = ClassModel::default();
        let cfg = TrackerConfig::default();
        let thr = chi2_1_quantile(cfg.gate_probability);
        let cov = Matrix2::new(10.0, 1.0, 1.0, 2.0);
        let states: Vec<GaussianState> = (0..offsets.len())
            .map(|i| GaussianState::new(3980.0 + 45.0 * i as f64, 10.0, cov))
            .collect();
        let s = cov[(0, 0)] + model.sigma_r2;
        let mut picks = Vec::new();
        let mut amps = Vec::new();
        for (st, &(dz, dy, train)) in states.iter().zip(&offsets) {
            let l = usize::from(train);
            let y = classes.alpha[l] + dy * classes.tau2[l].sqrt();
            picks.push(Pick { time: 0.0, position: st.mean[0] + dz * s.sqrt(), log_amplitude: y, cluster_size: 1 });
            amps.push(y);
        }
        for (i, st) in states.iter().enumerate() {
            let gated = gate(st, &picks, thr, &model);
            prop_assert_eq!(&gated, &vec![i]);
            let terms = association_terms(st, &picks, &gated, cfg.p_detect, cfg.clutter_intensity, &model);
            let l = usize::from(offsets[i].2);
            let mut p = [0.1, 0.1];
            p[l] = 0.9;
            let refined = amplitude_refined_beta(&terms, &amps, &ClassPosterior::from_probabilities(p), &classes);
            let argmax = |r: &[f64]| r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            prop_assert_eq!(argmax(&terms), argmax(&refined));
        }
    }
}

#[test]
fn posterior_converges_to_true_class() {
    let model = ClassModel::default();
    let separation = (model.alpha[0] - model.alpha[1]).abs();
    assert!(separation >= 3.0 * model.tau2[0].sqrt().max(model.tau2[1].sqrt()));
    for class in 0..2 {
        let dist = Normal::new(model.alpha[class], model.tau2[class].sqrt()).unwrap();
        let mut hits = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut post = ClassPosterior::from_probabilities(model.prior);
            for _ in 0..50 {
                let y = dist.sample(&mut rng);
                post = update_class_posterior(&post, &[y], &[0.1, 0.9], &model);
            }
            if post.probabilities()[class] > 0.99 {
                hits += 1;
            }
        }
        assert!(hits >= 190, "class {class}: {hits}/200");
    }
}
