//! Car/train classification from pick amplitudes.
//!
//! Each class has a Gaussian likelihood over log-amplitude. Track class
//! posteriors are updated with the association probabilities of the step,
//! and may optionally feed back into the association weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::picker::Pick;
use crate::strain_io::{EventLog, ObjectClass};

/// Smallest class variance accepted by [`fit_class_model`].
pub const TAU2_FLOOR: f64 = 1e-4;

/// Default event-to-pick matching window, seconds.
pub const DEFAULT_MATCH_WINDOW: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassModel {
    /// Prior class probabilities, indexed car then train.
    pub prior: [f64; 2],
    /// Mean log-amplitude per class.
    pub alpha: [f64; 2],
    /// Log-amplitude variance per class.
    pub tau2: [f64; 2],
    /// Scale association weights by the class-mixture amplitude likelihood.
    pub use_amplitude_in_da: bool,
}

impl Default for ClassModel {
    fn default() -> Self {
        ClassModel {
            prior: [0.9, 0.1],
            alpha: [-8.0, -5.5],
            tau2: [0.25, 0.25],
            use_amplitude_in_da: false,
        }
    }
}

impl ClassModel {
    pub fn validate(&self) -> Result<()> {
        if self.prior.iter().any(|p| !(0.0..=1.0).contains(p))
            || (self.prior[0] + self.prior[1] - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "class prior {:?} must be probabilities summing to 1",
                self.prior
            )));
        }
        if self.tau2.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config(format!(
                "class variances {:?} must be positive",
                self.tau2
            )));
        }
        Ok(())
    }

    /// `ln phi(y; alpha_l, tau2_l)` for class index `l`.
    pub fn log_likelihood(&self, class: usize, y: f64) -> f64 {
        log_normal_pdf(y, self.alpha[class], self.tau2[class])
    }

    /// Amplitude likelihood mixed over the class probabilities `p`.
    pub fn mixture_likelihood(&self, y: f64, p: [f64; 2]) -> f64 {
        p[0] * self.log_likelihood(0, y).exp() + p[1] * self.log_likelihood(1, y).exp()
    }
}

pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Two-class posterior kept as normalized log-probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassPosterior {
    log_p: [f64; 2],
}

impl ClassPosterior {
    pub fn from_probabilities(p: [f64; 2]) -> Self {
        let mut post = ClassPosterior {
            log_p: [p[0].ln(), p[1].ln()],
        };
        post.normalize();
        post
    }

    fn normalize(&mut self) {
        let z = log_sum_exp(self.log_p);
        self.log_p[0] -= z;
        self.log_p[1] -= z;
    }

    pub fn p_car(&self) -> f64 {
        self.log_p[0].exp()
    }

    pub fn p_train(&self) -> f64 {
        // complement keeps the pair summing to one exactly
        1.0 - self.p_car()
    }

    pub fn probabilities(&self) -> [f64; 2] {
        [self.p_car(), self.p_train()]
    }

    pub fn most_likely(&self) -> ObjectClass {
        if self.log_p[0] >= self.log_p[1] {
            ObjectClass::Car
        } else {
            ObjectClass::Train
        }
    }
}

/// Bayes update of a class posterior:
/// `pi_l <- (beta_0 + sum_j beta_j phi(y_j; alpha_l, tau2_l)) * pi_l`, renormalized.
///
/// `beta` is a full association row: index 0 is "undetected", index `j + 1`
/// pairs with `amplitudes[j]`.
pub fn update_class_posterior(
    posterior: &ClassPosterior,
    amplitudes: &[f64],
    beta: &[f64],
    model: &ClassModel,
) -> ClassPosterior {
    debug_assert_eq!(beta.len(), amplitudes.len() + 1);
    let mut out = *posterior;
    for (l, lp) in out.log_p.iter_mut().enumerate() {
        let terms = std::iter::once(beta[0].ln()).chain(
            amplitudes
                .iter()
                .zip(&beta[1..])
                .map(|(&y, &b)| b.ln() + model.log_likelihood(l, y)),
        );
        *lp += log_sum_exp(terms);
    }
    if out.log_p.iter().all(|v| v.is_finite()) {
        out.normalize();
        out
    } else {
        // every term vanished for some class: fall back to the prior state
        *posterior
    }
}

/// Scales the detection terms of an unnormalized association row by the
/// class-mixture amplitude likelihood and renormalizes. Index 0 is the
/// missed-detection term and is not scaled.
pub fn amplitude_refined_beta(
    base_terms: &[f64],
    amplitudes: &[f64],
    posterior: &ClassPosterior,
    model: &ClassModel,
) -> Vec<f64> {
    debug_assert_eq!(base_terms.len(), amplitudes.len() + 1);
    let p = posterior.probabilities();
    let mut out = Vec::with_capacity(base_terms.len());
    out.push(base_terms[0]);
    for (&t, &y) in base_terms[1..].iter().zip(amplitudes) {
        out.push(t * model.mixture_likelihood(y, p));
    }
    normalize_row(&mut out);
    out
}

pub(crate) fn normalize_row(row: &mut [f64]) {
    let z: f64 = row.iter().sum();
    if z > 0.0 && z.is_finite() {
        for v in row.iter_mut() {
            *v /= z;
        }
    }
}

/// Estimates class priors and amplitude statistics from logged events and
/// the picks at the logging site. A pick counts toward class `l` when it
/// lies within `window / 2` seconds of any event of that class.
pub fn fit_class_model(events: &EventLog, picks: &[Pick], window: f64) -> Result<ClassModel> {
    if events.is_empty() {
        return Err(Error::Fit {
            class: "car".into(),
            reason: "event log is empty".into(),
        });
    }
    let n_car = events
        .entries
        .iter()
        .filter(|e| e.class == ObjectClass::Car)
        .count();
    let prior_car = n_car as f64 / events.len() as f64;

    let mut alpha = [0.0; 2];
    let mut tau2 = [0.0; 2];
    for class in ObjectClass::ALL {
        let amps: Vec<f64> = picks
            .iter()
            .filter(|p| {
                events
                    .entries
                    .iter()
                    .any(|e| e.class == class && (p.time - e.time).abs() <= window / 2.0)
            })
            .map(|p| p.log_amplitude)
            .collect();
        if amps.len() < 2 {
            return Err(Error::Fit {
                class: class.to_string(),
                reason: format!("{} matched pick(s), need at least 2", amps.len()),
            });
        }
        let n = amps.len() as f64;
        let mean = amps.iter().sum::<f64>() / n;
        let var = amps.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if var < TAU2_FLOOR {
            return Err(Error::Fit {
                class: class.to_string(),
                reason: format!("amplitude variance {var:.3e} is below the floor {TAU2_FLOOR:.0e}"),
            });
        }
        alpha[class.index()] = mean;
        tau2[class.index()] = var;
    }
    Ok(ClassModel {
        prior: [prior_car, 1.0 - prior_car],
        alpha,
        tau2,
        use_amplitude_in_da: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strain_io::{Direction, LoggedEvent};

    fn event(time: f64, class: ObjectClass) -> LoggedEvent {
        LoggedEvent {
            time,
            class,
            direction: Direction::North,
            count: 1,
        }
    }

    fn pick(time: f64, amp: f64) -> Pick {
        Pick {
            time,
            position: 4000.0,
            log_amplitude: amp,
            cluster_size: 1,
        }
    }

    #[test]
    fn undetected_leaves_posterior() {
        let post = ClassPosterior::from_probabilities([0.7, 0.3]);
        let out = update_class_posterior(&post, &[-5.5], &[1.0, 0.0], &ClassModel::default());
        assert!((out.p_car() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn identical_classes_leave_posterior() {
        let model = ClassModel {
            alpha: [-7.0, -7.0],
            tau2: [0.3, 0.3],
            ..Default::default()
        };
        let post = ClassPosterior::from_probabilities([0.6, 0.4]);
        for y in [-12.0, -7.0, -3.0] {
            let out = update_class_posterior(&post, &[y, y + 1.0], &[0.2, 0.5, 0.3], &model);
            assert!((out.p_car() - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn single_pick_matches_scalar_bayes() {
        let model = ClassModel::default();
        let post = ClassPosterior::from_probabilities([0.9, 0.1]);
        let y = model.alpha[1];
        let out = update_class_posterior(&post, &[y], &[0.0, 1.0], &model);
        let phi = |m: f64, v: f64| (-(y - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let num_train = 0.1 * phi(model.alpha[1], model.tau2[1]);
        let num_car = 0.9 * phi(model.alpha[0], model.tau2[0]);
        let expect = num_train / (num_train + num_car);
        assert!(out.p_train() > 0.1);
        assert!((out.p_train() - expect).abs() < 1e-12);
        assert!((out.p_car() + out.p_train() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refined_beta_examples() {
        // identical classes: the mixture factor no longer depends on the
        // class posterior, so refinement is the same for any posterior
        let model = ClassModel {
            alpha: [-8.0, -8.0],
            tau2: [0.25, 0.25],
            ..Default::default()
        };
        let base = [0.1, 2.0, 3.0];
        let amps = [-8.0, -6.0];
        let a = amplitude_refined_beta(&base, &amps, &ClassPosterior::from_probabilities([0.5, 0.5]), &model);
        let b = amplitude_refined_beta(&base, &amps, &ClassPosterior::from_probabilities([0.99, 0.01]), &model);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // equal amplitudes scale every detection term by one constant
        let same = amplitude_refined_beta(&[0.0, 2.0, 3.0], &[-7.0, -7.0], &ClassPosterior::from_probabilities([0.5, 0.5]), &model);
        assert!((same[1] - 0.4).abs() < 1e-12 && (same[2] - 0.6).abs() < 1e-12);

        let post = ClassPosterior::from_probabilities([0.5, 0.5]);
        let only_miss = amplitude_refined_beta(&[1.0, 0.0], &[-8.0], &post, &ClassModel::default());
        assert_eq!(only_miss, vec![1.0, 0.0]);
    }

    #[test]
    fn refined_beta_favours_class_typical_amplitude() {
        let model = ClassModel::default();
        let post = ClassPosterior::from_probabilities([0.99, 0.01]);
        let base = [0.1, 1.0, 1.0];
        let mut base_norm = base.to_vec();
        normalize_row(&mut base_norm);
        let refined = amplitude_refined_beta(&base, &[-8.0, -5.5], &post, &model);
        assert!(refined[1] > base_norm[1]);
    }

    #[test]
    fn fit_counts_prior() {
        let mut evs = Vec::new();
        let mut picks = Vec::new();
        for i in 0..27 {
            let t = 20.0 * i as f64;
            evs.push(event(t, ObjectClass::Car));
            picks.push(pick(t + 0.5, -8.0 + 0.01 * (i % 5) as f64));
        }
        for i in 0..3 {
            let t = 1000.0 + 50.0 * i as f64;
            evs.push(event(t, ObjectClass::Train));
            picks.push(pick(t - 0.5, -5.5 + 0.1 * i as f64));
        }
        let m = fit_class_model(&EventLog::new(evs), &picks, DEFAULT_MATCH_WINDOW).unwrap();
        assert!((m.prior[0] - 0.9).abs() < 1e-12);
        assert!((m.alpha[1] - (-5.4)).abs() < 1e-12);
        assert!((m.tau2[1] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn constant_amplitudes_fail_fit() {
        let evs = EventLog::new(vec![
            event(0.0, ObjectClass::Car),
            event(10.0, ObjectClass::Car),
            event(20.0, ObjectClass::Train),
        ]);
        let picks = vec![
            pick(0.0, -8.0),
            pick(10.0, -8.0),
            pick(20.0, -5.0),
            pick(20.5, -5.5),
        ];
        match fit_class_model(&evs, &picks, 4.0) {
            Err(Error::Fit { class, .. }) => assert_eq!(class, "car"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_train_picks() {
        let evs = EventLog::new(vec![
            event(0.0, ObjectClass::Car),
            event(10.0, ObjectClass::Car),
            event(20.0, ObjectClass::Train),
        ]);
        let picks = vec![pick(0.0, -8.0), pick(10.0, -8.2), pick(20.0, -5.0)];
        match fit_class_model(&evs, &picks, 4.0) {
            Err(Error::Fit { class, .. }) => assert_eq!(class, "train"),
            other => panic!("{other:?}"),
        }
    }
}
