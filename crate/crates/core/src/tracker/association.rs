//! Gating, association hypotheses and the JPDA moment-matched update.
//!
//! Association rows are indexed `0` for "undetected" and `j + 1` for pick
//! `j` of the current step.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::kalman::{symmetrize, GaussianState, MotionModel};
use crate::classifier::{normalize_row, ClassModel, ClassPosterior};
use crate::picker::Pick;

/// Default ceiling on hypotheses enumerated for one coupled group of tracks.
pub const DEFAULT_HYPOTHESIS_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DaMode {
    /// Exact marginals over every valid joint assignment.
    Joint,
    /// Independent per-track normalization of the association terms.
    PerTarget,
}

/// One valid joint assignment. `assignment[i]` is `0` when track `i` is
/// undetected and `j + 1` when it takes pick `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationHypothesis {
    pub assignment: Vec<usize>,
    pub weight: f64,
}

/// Returned when enumeration would exceed the hypothesis cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HypothesisOverflow {
    pub cap: usize,
}

/// Upper chi-square quantile with one degree of freedom.
pub fn chi2_1_quantile(probability: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    // chi-square with one degree of freedom is a squared standard normal
    let z = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(0.5 + 0.5 * probability);
    z * z
}

/// Indices of picks whose squared normalized innovation is within `threshold`.
pub fn gate(state: &GaussianState, picks: &[Pick], threshold: f64, model: &MotionModel) -> Vec<usize> {
    let s = state.innovation_variance(model);
    let predicted = state.position();
    picks
        .iter()
        .enumerate()
        .filter(|(_, p)| (p.position - predicted).powi(2) / s <= threshold)
        .map(|(j, _)| j)
        .collect()
}

/// Every joint assignment in which each track is undetected or takes one of
/// its gated picks, and no pick is taken twice. Weights are left at zero.
pub fn enumerate_valid_das(
    gated: &[Vec<usize>],
    cap: usize,
) -> Result<Vec<AssociationHypothesis>, HypothesisOverflow> {
    fn recurse(
        i: usize,
        gated: &[Vec<usize>],
        current: &mut Vec<usize>,
        used: &mut Vec<usize>,
        out: &mut Vec<AssociationHypothesis>,
        cap: usize,
    ) -> Result<(), HypothesisOverflow> {
        if i == gated.len() {
            if out.len() == cap {
                return Err(HypothesisOverflow { cap });
            }
            out.push(AssociationHypothesis {
                assignment: current.clone(),
                weight: 0.0,
            });
            return Ok(());
        }
        current.push(0);
        recurse(i + 1, gated, current, used, out, cap)?;
        current.pop();
        for &j in &gated[i] {
            if used.contains(&j) {
                continue;
            }
            used.push(j);
            current.push(j + 1);
            recurse(i + 1, gated, current, used, out, cap)?;
            current.pop();
            used.pop();
        }
        Ok(())
    }

    let mut out = Vec::new();
    recurse(0, gated, &mut Vec::new(), &mut Vec::new(), &mut out, cap)?;
    Ok(out)
}

/// Unnormalized association terms of one track: `1 - P_D` for a miss and
/// `P_D * phi(z_j; H mu, S) / lambda` for gated picks (zero outside the gate).
pub fn association_terms(
    state: &GaussianState,
    picks: &[Pick],
    gated: &[usize],
    p_detect: f64,
    clutter_intensity: f64,
    model: &MotionModel,
) -> Vec<f64> {
    let s = state.innovation_variance(model);
    let predicted = state.position();
    let mut row = vec![0.0; picks.len() + 1];
    row[0] = 1.0 - p_detect;
    for &j in gated {
        let innov = picks[j].position - predicted;
        let phi = (-0.5 * innov * innov / s).exp() / (2.0 * std::f64::consts::PI * s).sqrt();
        row[j + 1] = p_detect * phi / clutter_intensity;
    }
    row
}

/// Scales detection terms by the class-mixture amplitude likelihood of each pick.
pub fn refine_terms(terms: &mut [f64], picks: &[Pick], posterior: &ClassPosterior, model: &ClassModel) {
    let p = posterior.probabilities();
    for (t, pick) in terms[1..].iter_mut().zip(picks) {
        if *t != 0.0 {
            *t *= model.mixture_likelihood(pick.log_amplitude, p);
        }
    }
}

/// Marginal association probabilities from unnormalized per-track terms.
///
/// In joint mode the tracks are split into groups that share gated picks;
/// within a group each valid hypothesis is weighted by the product of its
/// tracks' terms, normalized, and marginalized. A group whose hypothesis
/// count exceeds `cap` falls back to per-target normalization. Returns the
/// rows and whether any fallback happened.
///
/// When every hypothesis has zero weight (`P_D = 1` with nothing in the
/// gate) the affected tracks coast: the row is all "undetected".
pub fn marginal_probabilities(
    terms: &[Vec<f64>],
    gated: &[Vec<usize>],
    mode: DaMode,
    cap: usize,
) -> (Vec<Vec<f64>>, bool) {
    let coast = |len: usize| {
        let mut row = vec![0.0; len];
        row[0] = 1.0;
        row
    };
    let per_target = |i: usize| {
        let mut row = terms[i].clone();
        if row.iter().sum::<f64>() > 0.0 {
            normalize_row(&mut row);
            row
        } else {
            coast(row.len())
        }
    };
    match mode {
        DaMode::PerTarget => ((0..terms.len()).map(per_target).collect(), false),
        DaMode::Joint => {
            let mut out: Vec<Vec<f64>> = terms.iter().map(|t| vec![0.0; t.len()]).collect();
            let mut fell_back = false;
            for group in coupled_groups(gated) {
                let group_gates: Vec<Vec<usize>> = group.iter().map(|&i| gated[i].clone()).collect();
                match enumerate_valid_das(&group_gates, cap) {
                    Ok(hyps) => {
                        // scale each track's terms by its largest entry so the
                        // products stay in range; every hypothesis carries one
                        // term per track, so the scale cancels on normalization
                        let scales: Vec<f64> = group
                            .iter()
                            .map(|&i| terms[i].iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE))
                            .collect();
                        let mut total = 0.0;
                        let weights: Vec<f64> = hyps
                            .iter()
                            .map(|h| {
                                let w: f64 = h
                                    .assignment
                                    .iter()
                                    .zip(&group)
                                    .zip(&scales)
                                    .map(|((&a, &i), sc)| terms[i][a] / sc)
                                    .product();
                                total += w;
                                w
                            })
                            .collect();
                        if !(total > 0.0) {
                            for &i in &group {
                                out[i] = coast(terms[i].len());
                            }
                            continue;
                        }
                        for (h, w) in hyps.iter().zip(weights) {
                            let w = w / total;
                            for (&a, &i) in h.assignment.iter().zip(&group) {
                                out[i][a] += w;
                            }
                        }
                    }
                    Err(_) => {
                        fell_back = true;
                        for &i in &group {
                            out[i] = per_target(i);
                        }
                    }
                }
            }
            (out, fell_back)
        }
    }
}

/// Partitions track indices into groups linked through shared gated picks.
fn coupled_groups(gated: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = gated.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut owner: std::collections::HashMap<usize, usize> = Default::default();
    for (i, g) in gated.iter().enumerate() {
        for &j in g {
            match owner.get(&j) {
                Some(&k) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, k));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
                None => {
                    owner.insert(j, i);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Collapses the association mixture for one track to a single Gaussian:
/// mean `mu + K sum_j beta_j xi_j`, covariance
/// `beta_0 P + (1 - beta_0) P_upd + K (sum_j beta_j xi_j^2 - xi_bar^2) K^T`.
pub fn jpda_update(
    predicted: &GaussianState,
    picks: &[Pick],
    beta: &[f64],
    model: &MotionModel,
) -> GaussianState {
    debug_assert_eq!(beta.len(), picks.len() + 1);
    let gain = predicted.gain(model);
    let predicted_z = predicted.position();
    let mut xi_bar = 0.0;
    let mut xi_sq = 0.0;
    for (p, &b) in picks.iter().zip(&beta[1..]) {
        if b == 0.0 {
            continue;
        }
        let xi = p.position - predicted_z;
        xi_bar += b * xi;
        xi_sq += b * xi * xi;
    }
    let h_cov = predicted.cov.row(0);
    let updated_cov: Matrix2<f64> = predicted.cov - gain * h_cov;
    let spread = gain * gain.transpose() * (xi_sq - xi_bar * xi_bar);
    let cov = predicted.cov * beta[0] + updated_cov * (1.0 - beta[0]) + spread;
    GaussianState {
        mean: predicted.mean + gain * xi_bar,
        cov: symmetrize(&cov),
    }
}
