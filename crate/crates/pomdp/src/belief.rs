//! Bayes operator, belief update operator, exact and approximate belief
//! computation, and the divergences used by the stability theory.
//!
//! The Bayes operator conditions a state distribution on one observation:
//!
//! ```text
//! B_h(b; y)(x) = O_h(y|x) b(x) / sum_z O_h(y|z) b(z)        (h in 2..H)
//! ```
//!
//! The belief update operator pushes through a transition first:
//!
//! ```text
//! U_h(b; a, y) = B_{h+1}(T_h(a) b; y)                        (h in 1..H-1)
//! ```
//!
//! Exact beliefs fold U over the full history starting from b1. Approximate
//! beliefs fold U over a length-t suffix window starting from the uniform
//! distribution (or from b1 when the window reaches step 1).
//!
//! All sums run in ascending index order so results are bit-identical
//! across runs and thread counts.

use crate::model::{Belief, History, HistoryWindow, Pomdp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bayes denominators at or below this are treated as impossible
/// observations. This is a denormal guard, not a model tolerance.
pub const IMPOSSIBLE_DENOM: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("observation {observation} has probability ~0 at step {step}")]
pub struct ImpossibleObservation {
    pub step: usize,
    pub observation: usize,
}

/// O_h^T b into a caller-provided buffer.
pub fn obs_dist_into(pomdp: &Pomdp, b: &[f64], h: usize, out: &mut Vec<f64>) {
    let emission = pomdp.emission(h);
    out.clear();
    out.resize(pomdp.num_observations, 0.0);
    for (x, row) in emission.iter().enumerate() {
        let bx = b[x];
        if bx == 0.0 {
            continue;
        }
        for (y, &p) in row.iter().enumerate() {
            out[y] += bx * p;
        }
    }
}

/// O_h^T b: distribution of the observation at step h under belief b.
pub fn obs_dist(pomdp: &Pomdp, b: &[f64], h: usize) -> Vec<f64> {
    let mut out = Vec::new();
    obs_dist_into(pomdp, b, h, &mut out);
    out
}

/// T_h(a) applied to b, into a caller-provided buffer.
pub fn push_forward_into(pomdp: &Pomdp, b: &[f64], h: usize, a: usize, out: &mut Vec<f64>) {
    let kernel = pomdp.transition(h, a);
    out.clear();
    out.resize(pomdp.num_states, 0.0);
    for (x, row) in kernel.iter().enumerate() {
        let bx = b[x];
        if bx == 0.0 {
            continue;
        }
        for (x2, &p) in row.iter().enumerate() {
            out[x2] += bx * p;
        }
    }
}

/// T_h(a) applied to b: the next-state distribution before conditioning.
pub fn push_forward(pomdp: &Pomdp, b: &[f64], h: usize, a: usize) -> Vec<f64> {
    let mut out = Vec::new();
    push_forward_into(pomdp, b, h, a, &mut out);
    out
}

/// B_h(b; y) on raw probability vectors.
pub fn bayes_update_probs(
    pomdp: &Pomdp,
    b: &[f64],
    h: usize,
    y: usize,
) -> Result<Vec<f64>, ImpossibleObservation> {
    let emission = pomdp.emission(h);
    let mut numer = vec![0.0; b.len()];
    let mut denom = 0.0;
    for x in 0..b.len() {
        let v = emission[x][y] * b[x];
        numer[x] = v;
        denom += v;
    }
    if denom <= IMPOSSIBLE_DENOM {
        return Err(ImpossibleObservation { step: h, observation: y });
    }
    for v in numer.iter_mut() {
        *v /= denom;
    }
    Ok(numer)
}

/// B_h(b; y): condition belief b at step h = b.step on observation y.
pub fn bayes_update(pomdp: &Pomdp, b: &Belief, y: usize) -> Result<Belief, ImpossibleObservation> {
    let probs = bayes_update_probs(pomdp, &b.probs, b.step, y)?;
    Ok(Belief::new(b.step, probs))
}

/// U_h(b; a, y) on raw probability vectors; h is the step of b, the result
/// lives at step h+1.
pub fn belief_update_probs(
    pomdp: &Pomdp,
    b: &[f64],
    h: usize,
    a: usize,
    y: usize,
) -> Result<Vec<f64>, ImpossibleObservation> {
    let pushed = push_forward(pomdp, b, h, a);
    bayes_update_probs(pomdp, &pushed, h + 1, y)
}

/// U_h(b; a, y): take action a at step h = b.step, observe y at step h+1.
pub fn belief_update(
    pomdp: &Pomdp,
    b: &Belief,
    a: usize,
    y: usize,
) -> Result<Belief, ImpossibleObservation> {
    let probs = belief_update_probs(pomdp, &b.probs, b.step, a, y)?;
    Ok(Belief::new(b.step + 1, probs))
}

/// Exact belief state: fold of the belief update over the full history,
/// starting from b1. Empty history yields b1.
pub fn exact_belief(pomdp: &Pomdp, history: &History) -> Result<Belief, ImpossibleObservation> {
    let mut probs = pomdp.initial_belief.clone();
    for (i, (&a, &y)) in history.actions.iter().zip(&history.observations).enumerate() {
        let h = i + 1;
        probs = belief_update_probs(pomdp, &probs, h, a, y)?;
    }
    Ok(Belief::new(history.stage(), probs))
}

/// Approximate belief state: fold of the belief update over a suffix
/// window, starting from Unif(S) at step stage - t (or from b1 when the
/// window reaches step 1). May fail even on realizable histories, since
/// the prior is wrong.
pub fn approx_belief(
    pomdp: &Pomdp,
    window: &HistoryWindow,
) -> Result<Belief, ImpossibleObservation> {
    let start = window.stage - window.len();
    let mut probs = if start == 1 {
        pomdp.initial_belief.clone()
    } else {
        vec![1.0 / pomdp.num_states as f64; pomdp.num_states]
    };
    for (i, (&a, &y)) in window.actions.iter().zip(&window.observations).enumerate() {
        let h = start + i;
        probs = belief_update_probs(pomdp, &probs, h, a, y)?;
    }
    Ok(Belief::new(window.stage, probs))
}

/// ‖p - q‖_1.
pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - q[i]).abs();
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DivergenceKind {
    Tv,
    Kl,
    Chi2,
    Renyi2,
    Hellinger2,
    LinfRatio,
}

/// A divergence value; infinities are values, not errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub kind: DivergenceKind,
    pub value: f64,
}

/// TV(P, Q) = (1/2) sum |P - Q|.
pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * l1_distance(p, q)
}

/// KL(P || Q) with 0 log(0/.) = 0 and +inf when P(x) > 0, Q(x) = 0.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        if p[i] > 0.0 {
            if q[i] == 0.0 {
                return f64::INFINITY;
            }
            s += p[i] * (p[i] / q[i]).ln();
        }
    }
    s
}

/// chi^2(P || Q) = sum P^2/Q - 1, +inf on support violation.
pub fn chi2(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        if p[i] > 0.0 {
            if q[i] == 0.0 {
                return f64::INFINITY;
            }
            s += p[i] * p[i] / q[i];
        }
    }
    s - 1.0
}

/// D_2(P || Q) = log(1 + chi^2(P || Q)).
pub fn renyi2(p: &[f64], q: &[f64]) -> f64 {
    (1.0 + chi2(p, q)).ln()
}

/// H^2(P, Q) = 1 - sum sqrt(P Q).
pub fn hellinger2(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] * q[i]).sqrt();
    }
    1.0 - s
}

/// max over supp(P) ∪ supp(Q) of P(x)/Q(x); +inf when P(x) > 0, Q(x) = 0.
pub fn linf_ratio(p: &[f64], q: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for i in 0..p.len() {
        if p[i] == 0.0 && q[i] == 0.0 {
            continue;
        }
        if q[i] == 0.0 {
            return f64::INFINITY;
        }
        m = m.max(p[i] / q[i]);
    }
    if m == f64::NEG_INFINITY {
        1.0
    } else {
        m
    }
}

/// f_KL(x) = x - log x - 1, the convex function behind the KL divergence.
pub fn f_kl(x: f64) -> f64 {
    x - x.ln() - 1.0
}

pub fn divergence(kind: DivergenceKind, p: &[f64], q: &[f64]) -> Divergence {
    assert_eq!(p.len(), q.len(), "distributions must have equal length");
    let value = match kind {
        DivergenceKind::Tv => tv(p, q),
        DivergenceKind::Kl => kl(p, q),
        DivergenceKind::Chi2 => chi2(p, q),
        DivergenceKind::Renyi2 => renyi2(p, q),
        DivergenceKind::Hellinger2 => hellinger2(p, q),
        DivergenceKind::LinfRatio => linf_ratio(p, q),
    };
    Divergence { kind, value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use crate::model::Pomdp;
    use crate::rng::trial_rng;
    use rand::Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn simple_model(emission: Vec<Vec<f64>>) -> Pomdp {
        let s = emission.len();
        let o = emission[0].len();
        let identity: Vec<Vec<f64>> = (0..s)
            .map(|x| (0..s).map(|x2| if x == x2 { 1.0 } else { 0.0 }).collect())
            .collect();
        Pomdp {
            horizon: 2,
            num_states: s,
            num_actions: 1,
            num_observations: o,
            initial_belief: vec![1.0 / s as f64; s],
            transitions: vec![vec![identity]],
            emissions: vec![emission],
            rewards: vec![vec![0.0; o]],
        }
    }

    #[test]
    fn uninformative_channel_leaves_prior_unchanged() {
        let m = simple_model(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let b = Belief::new(2, vec![0.3, 0.7]);
        let out = bayes_update(&m, &b, 0).unwrap();
        assert!(close(out.probs[0], 0.3, 1e-12));
        assert!(close(out.probs[1], 0.7, 1e-12));
    }

    #[test]
    fn epsilon_channel_bayes_update() {
        // eps = 0.1 channel, b = (0.99, 0.01), y = 1:
        // numerator (0.099, 0.009), denominator 0.108 -> (11/12, 1/12).
        let m = simple_model(vec![vec![0.9, 0.1], vec![0.1, 0.9]]);
        let b = Belief::new(2, vec![0.99, 0.01]);
        let out = bayes_update(&m, &b, 1).unwrap();
        assert!(close(out.probs[0], 11.0 / 12.0, 1e-12));
        assert!(close(out.probs[1], 1.0 / 12.0, 1e-12));
        let sum: f64 = out.probs.iter().sum();
        assert!(close(sum, 1.0, 1e-12));
    }

    #[test]
    fn noiseless_channel_collapses_to_point_mass() {
        let m = simple_model(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let b = Belief::new(2, vec![0.4, 0.6]);
        let out = bayes_update(&m, &b, 1).unwrap();
        assert_eq!(out.probs, vec![0.0, 1.0]);
    }

    #[test]
    fn impossible_observation_is_signalled() {
        let m = simple_model(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        let b = Belief::new(2, vec![0.5, 0.5]);
        match bayes_update(&m, &b, 1) {
            Err(ImpossibleObservation { step: 2, observation: 1 }) => {}
            other => panic!("expected impossible observation, got {other:?}"),
        }
    }

    #[test]
    fn identity_transition_update_equals_bayes() {
        let m = gen::gen_contraction_lb(0.1, 5).unwrap();
        let b = Belief::new(2, vec![0.35, 0.65]);
        for y in 0..2 {
            let via_update = belief_update(&m, &b, 0, y).unwrap();
            let via_bayes = bayes_update_probs(&m, &b.probs, 3, y).unwrap();
            assert_eq!(via_update.probs, via_bayes);
        }
    }

    #[test]
    fn cyclic_shift_with_uniform_emissions() {
        // x -> x+1 mod 3, uninformative observations.
        let s = 3;
        let cycle: Vec<Vec<f64>> = (0..s)
            .map(|x| (0..s).map(|x2| if x2 == (x + 1) % s { 1.0 } else { 0.0 }).collect())
            .collect();
        let m = Pomdp {
            horizon: 3,
            num_states: s,
            num_actions: 1,
            num_observations: s,
            initial_belief: vec![1.0, 0.0, 0.0],
            transitions: vec![vec![cycle.clone()], vec![cycle]],
            emissions: vec![vec![vec![1.0 / 3.0; 3]; 3]; 2],
            rewards: vec![vec![0.0; 3]; 2],
        };
        for y in 0..s {
            let b = Belief::new(1, vec![1.0, 0.0, 0.0]);
            let out = belief_update(&m, &b, 0, y).unwrap();
            assert_eq!(out.probs, vec![0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn contraction_lb_single_observation() {
        let m = gen::gen_contraction_lb(0.1, 5).unwrap();
        let b = Belief::new(1, vec![0.5, 0.5]);
        let out = belief_update(&m, &b, 0, 0).unwrap();
        assert!(close(out.probs[0], 0.6, 1e-12));
        assert!(close(out.probs[1], 0.4, 1e-12));
    }

    #[test]
    fn empty_history_gives_initial_belief() {
        let m = gen::gen_contraction_lb(0.1, 5).unwrap();
        let b = exact_belief(&m, &History::empty()).unwrap();
        assert_eq!(b.step, 1);
        assert_eq!(b.probs, m.initial_belief);
    }

    #[test]
    fn point_mass_prior_stays_fixed_under_identity_transitions() {
        let m = gen::gen_contraction_lb(0.1, 10).unwrap();
        let mut hist = History::empty();
        hist.push(0, 0);
        hist.push(0, 0);
        let b = exact_belief(&m, &hist).unwrap();
        assert_eq!(b.probs, vec![1.0, 0.0]);
    }

    /// Brute-force conditional distribution of x_h given a history, by
    /// enumerating all latent state sequences.
    fn brute_force_conditional(pomdp: &Pomdp, hist: &History) -> Vec<f64> {
        let s = pomdp.num_states;
        let h = hist.stage();
        let mut joint = vec![0.0; s];
        let mut stack: Vec<(usize, usize, f64)> = (0..s)
            .map(|x| (1usize, x, pomdp.initial_belief[x]))
            .collect();
        while let Some((step, x, w)) = stack.pop() {
            if w == 0.0 {
                continue;
            }
            if step == h {
                joint[x] += w;
                continue;
            }
            let a = hist.actions[step - 1];
            let y = hist.observations[step - 1];
            for x2 in 0..s {
                let wt = w * pomdp.transition(step, a)[x][x2] * pomdp.emission(step + 1)[x2][y];
                stack.push((step + 1, x2, wt));
            }
        }
        let z: f64 = joint.iter().sum();
        joint.iter().map(|v| v / z).collect()
    }

    #[test]
    fn exact_belief_matches_state_sequence_enumeration() {
        for seed in 0..20 {
            let m = gen::gen_random_observable(3, 2, 4, 0.55, seed).unwrap();
            let mut rng = trial_rng(seed, 999);
            let mut hist = History::empty();
            for h in 1..m.horizon {
                let a = rng.gen_range(0..m.num_actions);
                let y = rng.gen_range(0..m.num_observations);
                hist.push(a, y);
                let _ = h;
            }
            let fast = exact_belief(&m, &hist).unwrap();
            let slow = brute_force_conditional(&m, &hist);
            for x in 0..m.num_states {
                assert!(close(fast.probs[x], slow[x], 1e-10), "{fast:?} vs {slow:?}");
            }
        }
    }

    #[test]
    fn identity_emission_history_collapses_to_last_observation() {
        let m = gen::gen_random_observable(3, 2, 4, 1.0, 7).unwrap();
        let mut hist = History::empty();
        hist.push(1, 2);
        // Extend only along positive-probability observations.
        let b2 = exact_belief(&m, &hist).unwrap();
        assert_eq!(b2.probs, vec![0.0, 0.0, 1.0]);
        let slow = brute_force_conditional(&m, &hist);
        assert!(close(slow[2], 1.0, 1e-12));
    }

    #[test]
    fn empty_window_base_cases() {
        let m = gen::gen_contraction_lb(0.1, 5).unwrap();
        let at3 = approx_belief(&m, &HistoryWindow::empty(3)).unwrap();
        assert_eq!(at3.probs, vec![0.5, 0.5]);
        let at1 = approx_belief(&m, &HistoryWindow::empty(1)).unwrap();
        assert_eq!(at1.probs, m.initial_belief);
    }

    #[test]
    fn two_zero_observations_from_uniform_prior() {
        // (0.6^2, 0.4^2) normalized = (9/13, 4/13).
        let m = gen::gen_contraction_lb(0.1, 10).unwrap();
        let w = HistoryWindow {
            stage: 5,
            actions: vec![0, 0],
            observations: vec![0, 0],
        };
        let b = approx_belief(&m, &w).unwrap();
        assert!(close(b.probs[0], 9.0 / 13.0, 1e-12));
        assert!(close(b.probs[1], 4.0 / 13.0, 1e-12));
    }

    #[test]
    fn full_window_equals_exact_belief() {
        for seed in 0..20 {
            let m = gen::gen_random_observable(3, 2, 5, 0.4, seed).unwrap();
            let mut rng = trial_rng(seed, 5);
            let mut hist = History::empty();
            for h in 1..m.horizon {
                let b = exact_belief(&m, &hist).unwrap();
                let dist = obs_dist(&m, &push_forward(&m, &b.probs, h, 0), h + 1);
                let mut y = 0;
                let u: f64 = rng.gen::<f64>() * dist.iter().sum::<f64>();
                let mut acc = 0.0;
                for (i, &p) in dist.iter().enumerate() {
                    acc += p;
                    if u <= acc {
                        y = i;
                        break;
                    }
                }
                hist.push(0, y);
            }
            let exact = exact_belief(&m, &hist).unwrap();
            let window = approx_belief(&m, &hist.window(m.horizon - 1)).unwrap();
            assert!(l1_distance(&exact.probs, &window.probs) < 1e-12);
        }
    }

    #[test]
    fn obs_dist_identity_mix_channel() {
        let m = gen::gen_random_observable(3, 1, 3, 0.5, 0).unwrap();
        let d = obs_dist(&m, &[1.0, 0.0, 0.0], 2);
        assert!(close(d[0], 2.0 / 3.0, 1e-12));
        assert!(close(d[1], 1.0 / 6.0, 1e-12));
        assert!(close(d[2], 1.0 / 6.0, 1e-12));
    }

    #[test]
    fn obs_dist_uniform_belief_doubly_stochastic() {
        let m = gen::gen_contraction_lb(0.07, 4).unwrap();
        let d = obs_dist(&m, &[0.5, 0.5], 2);
        assert!(close(d[0], 0.5, 1e-12));
        assert!(close(d[1], 0.5, 1e-12));
    }

    #[test]
    fn obs_dist_point_mass_gives_emission_row() {
        let m = gen::gen_random_observable(4, 1, 3, 0.3, 3).unwrap();
        let d = obs_dist(&m, &[0.0, 0.0, 1.0, 0.0], 2);
        assert_eq!(d, m.emission(2)[2]);
    }

    #[test]
    fn divergence_base_values() {
        assert!(close(tv(&[1.0, 0.0], &[0.0, 1.0]), 1.0, 1e-15));
        assert!(close(kl(&[0.3, 0.7], &[0.3, 0.7]), 0.0, 1e-15));
        assert!(close(chi2(&[0.5, 0.5], &[0.25, 0.75]), 1.0 / 3.0, 1e-15));
        assert!(close(renyi2(&[0.5, 0.5], &[0.25, 0.75]), (4.0f64 / 3.0).ln(), 1e-15));
        assert!(kl(&[0.5, 0.5], &[1.0, 0.0]).is_infinite());
        assert!(close(linf_ratio(&[0.5, 0.5], &[0.5, 0.5]), 1.0, 1e-15));
        assert!(close(hellinger2(&[1.0, 0.0], &[0.0, 1.0]), 1.0, 1e-15));
    }

    #[test]
    fn observability_equality_case() {
        // S = 3 identity-mix channel with gamma = 0.5: the emission
        // contracts the 1-norm of zero-sum vectors by exactly gamma.
        let m = gen::gen_random_observable(3, 1, 3, 0.5, 0).unwrap();
        let b = [1.0, 0.0, 0.0];
        let b2 = [0.0, 1.0, 0.0];
        let d1 = obs_dist(&m, &b, 2);
        let d2 = obs_dist(&m, &b2, 2);
        let lhs = l1_distance(&d1, &d2);
        assert!(close(lhs, 1.0, 1e-12));
        assert!(close(lhs, 0.5 * l1_distance(&b, &b2), 1e-12));
    }
}
