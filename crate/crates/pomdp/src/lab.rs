//! Filter-stability laboratory: expected belief error versus window
//! length, decay-rate fits, and the contraction inequalities checked as
//! exact finite sums.
//!
//! A contraction curve anchors at step h, takes the true prior to be the
//! marginal state distribution at h under the policy, and the wrong prior
//! to be uniform (or b1 when h = 1, where the error is identically zero).
//! Both posteriors are folded over the same window of t steps drawn from
//! the true process started at the anchor; the curve reports
//! E || b_{h+t} - bhat_{h+t} ||_1 per t. The Monte Carlo and exact-tree
//! methods estimate the same expectation.

use crate::belief::{
    bayes_update_probs, chi2, f_kl, kl, l1_distance, linf_ratio, obs_dist, push_forward, tv,
};
use crate::exactplan::PlanError;
use crate::model::{History, Pomdp};
use crate::observability::{gamma_exact, MAX_EXACT_STATES};
use crate::rng::{dirichlet, sample_index, trial_rng, TrialRng};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Budget(#[from] PlanError),
    #[error("epsilon {0} is degenerate; need 0 < eps < 1")]
    DegenerateEps(f64),
    #[error("bad arguments: {0}")]
    BadArgs(String),
}

/// Step-indexed policies for curve experiments: the anchor marginal must
/// be exactly computable, so the action distribution may depend on the
/// step but not on the history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CurvePolicy {
    Uniform,
    Constant(usize),
    /// Action at step h is `actions[(h - 1) % actions.len()]`.
    OpenLoop(Vec<usize>),
}

impl CurvePolicy {
    fn weights_at(&self, pomdp: &Pomdp, h: usize) -> Vec<(usize, f64)> {
        match self {
            CurvePolicy::Uniform => {
                let w = 1.0 / pomdp.num_actions as f64;
                (0..pomdp.num_actions).map(|a| (a, w)).collect()
            }
            CurvePolicy::Constant(a) => vec![(*a, 1.0)],
            CurvePolicy::OpenLoop(actions) => vec![(actions[(h - 1) % actions.len()], 1.0)],
        }
    }

    pub fn label(&self) -> String {
        match self {
            CurvePolicy::Uniform => "uniform".into(),
            CurvePolicy::Constant(a) => format!("const:{a}"),
            CurvePolicy::OpenLoop(actions) => format!(
                "open-loop:{}",
                actions
                    .iter()
                    .map(|a| a.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveMethod {
    Mc,
    ExactTree,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: usize,
    pub mean_l1: f64,
    pub stderr: f64,
    pub trials: u64,
    /// Windows dropped because the uniform-prior chain hit an impossible
    /// observation; none occur for realizable histories.
    pub skipped: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionCurve {
    /// Exact observability over the steps the curve touches (NaN when S
    /// exceeds the exact-LP limit).
    pub gamma: f64,
    pub policy: String,
    pub method: CurveMethod,
    pub anchor: usize,
    pub points: Vec<CurvePoint>,
}

fn anchor_marginal(pomdp: &Pomdp, policy: &CurvePolicy, h_anchor: usize) -> Vec<f64> {
    let mut mu = pomdp.initial_belief.clone();
    for h in 1..h_anchor {
        let mut next = vec![0.0; pomdp.num_states];
        for (a, w) in policy.weights_at(pomdp, h) {
            let pushed = push_forward(pomdp, &mu, h, a);
            for (n, p) in next.iter_mut().zip(&pushed) {
                *n += w * p;
            }
        }
        mu = next;
    }
    mu
}

fn curve_gamma(pomdp: &Pomdp, h_anchor: usize, t_max: usize) -> f64 {
    if pomdp.num_states > MAX_EXACT_STATES {
        return f64::NAN;
    }
    let mut seen: Vec<(&Vec<Vec<f64>>, f64)> = Vec::new();
    let mut min = f64::INFINITY;
    for h in (h_anchor + 1)..=(h_anchor + t_max) {
        let emission = pomdp.emission(h);
        let g = match seen.iter().find(|(e, _)| *e == emission) {
            Some((_, g)) => *g,
            None => {
                let g = gamma_exact(emission).map(|r| r.gamma).unwrap_or(f64::NAN);
                seen.push((emission, g));
                g
            }
        };
        min = min.min(g);
    }
    min
}

struct ChunkAgg {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    count: Vec<u64>,
    skipped: Vec<u64>,
}

#[allow(clippy::too_many_arguments)]
fn mc_trial(
    pomdp: &Pomdp,
    policy: &CurvePolicy,
    h_anchor: usize,
    t_max: usize,
    mu: &[f64],
    bh_init: &[f64],
    rng: &mut TrialRng,
    agg: &mut ChunkAgg,
) {
    let mut x = sample_index(rng, mu);
    let mut b = mu.to_vec();
    let mut bh = bh_init.to_vec();
    agg.sum[0] += l1_distance(&b, &bh);
    agg.sumsq[0] += l1_distance(&b, &bh).powi(2);
    agg.count[0] += 1;
    for t in 1..=t_max {
        let h = h_anchor + t - 1;
        let weights = policy.weights_at(pomdp, h);
        let a = if weights.len() == 1 {
            weights[0].0
        } else {
            let dense: Vec<f64> = {
                let mut d = vec![0.0; pomdp.num_actions];
                for (a, w) in &weights {
                    d[*a] = *w;
                }
                d
            };
            sample_index(rng, &dense)
        };
        x = sample_index(rng, &pomdp.transition(h, a)[x]);
        let y = sample_index(rng, &pomdp.emission(h + 1)[x]);
        let pushed_b = push_forward(pomdp, &b, h, a);
        let Ok(nb) = bayes_update_probs(pomdp, &pushed_b, h + 1, y) else {
            agg.skipped[t] += 1;
            return;
        };
        b = nb;
        let pushed_bh = push_forward(pomdp, &bh, h, a);
        let Ok(nbh) = bayes_update_probs(pomdp, &pushed_bh, h + 1, y) else {
            agg.skipped[t] += 1;
            return;
        };
        bh = nbh;
        let err = l1_distance(&b, &bh);
        agg.sum[t] += err;
        agg.sumsq[t] += err * err;
        agg.count[t] += 1;
    }
}

struct TreeAcc {
    acc: Vec<f64>,
    mass: Vec<f64>,
    skipped: Vec<u64>,
    nodes: usize,
    budget: usize,
}

#[allow(clippy::too_many_arguments)]
fn tree_rec(
    pomdp: &Pomdp,
    policy: &CurvePolicy,
    h_anchor: usize,
    t_max: usize,
    h: usize,
    prob: f64,
    b: &[f64],
    bh: &[f64],
    out: &mut TreeAcc,
) -> Result<(), PlanError> {
    let t = h - h_anchor;
    out.acc[t] += prob * l1_distance(b, bh);
    out.mass[t] += prob;
    if t == t_max {
        return Ok(());
    }
    out.nodes += 1;
    if out.nodes > out.budget {
        return Err(PlanError::BudgetExceeded {
            nodes: out.nodes,
            budget: out.budget,
        });
    }
    for (a, wa) in policy.weights_at(pomdp, h) {
        let pushed_b = push_forward(pomdp, b, h, a);
        let pushed_bh = push_forward(pomdp, bh, h, a);
        let obs = obs_dist(pomdp, &pushed_b, h + 1);
        for (y, &p) in obs.iter().enumerate() {
            if p <= 1e-300 {
                continue;
            }
            let nb = bayes_update_probs(pomdp, &pushed_b, h + 1, y)
                .expect("positive-probability branch");
            match bayes_update_probs(pomdp, &pushed_bh, h + 1, y) {
                Ok(nbh) => {
                    tree_rec(
                        pomdp,
                        policy,
                        h_anchor,
                        t_max,
                        h + 1,
                        prob * wa * p,
                        &nb,
                        &nbh,
                        out,
                    )?;
                }
                Err(_) => {
                    out.skipped[t + 1] += 1;
                }
            }
        }
    }
    Ok(())
}

/// Expected L1 belief error against the window posterior, per window
/// length t = 0..t_max, anchored at `h_anchor`.
#[allow(clippy::too_many_arguments)]
pub fn contraction_curve(
    pomdp: &Pomdp,
    policy: &CurvePolicy,
    h_anchor: usize,
    t_max: usize,
    trials: usize,
    seed: u64,
    method: CurveMethod,
    budget: usize,
) -> Result<ContractionCurve, LabError> {
    if h_anchor < 1 || h_anchor + t_max > pomdp.horizon {
        return Err(LabError::BadArgs(format!(
            "need 1 <= h_anchor and h_anchor + t_max <= H; got anchor {h_anchor}, t_max {t_max}, H {}",
            pomdp.horizon
        )));
    }
    let mu = anchor_marginal(pomdp, policy, h_anchor);
    let bh_init = if h_anchor == 1 {
        pomdp.initial_belief.clone()
    } else {
        vec![1.0 / pomdp.num_states as f64; pomdp.num_states]
    };
    let points = match method {
        CurveMethod::Mc => {
            if trials == 0 {
                return Err(LabError::BadArgs("mc method needs trials >= 1".into()));
            }
            const CHUNK: usize = 512;
            let n_chunks = trials.div_ceil(CHUNK);
            let chunks: Vec<ChunkAgg> = (0..n_chunks)
                .into_par_iter()
                .map(|ci| {
                    let mut agg = ChunkAgg {
                        sum: vec![0.0; t_max + 1],
                        sumsq: vec![0.0; t_max + 1],
                        count: vec![0; t_max + 1],
                        skipped: vec![0; t_max + 1],
                    };
                    let lo = ci * CHUNK;
                    let hi = ((ci + 1) * CHUNK).min(trials);
                    for trial in lo..hi {
                        let mut rng = trial_rng(seed, trial as u64);
                        mc_trial(
                            pomdp, policy, h_anchor, t_max, &mu, &bh_init, &mut rng, &mut agg,
                        );
                    }
                    agg
                })
                .collect();
            let mut sum = vec![0.0; t_max + 1];
            let mut sumsq = vec![0.0; t_max + 1];
            let mut count = vec![0u64; t_max + 1];
            let mut skipped = vec![0u64; t_max + 1];
            for c in chunks {
                for t in 0..=t_max {
                    sum[t] += c.sum[t];
                    sumsq[t] += c.sumsq[t];
                    count[t] += c.count[t];
                    skipped[t] += c.skipped[t];
                }
            }
            (0..=t_max)
                .map(|t| {
                    let n = count[t] as f64;
                    let mean = if n > 0.0 { sum[t] / n } else { f64::NAN };
                    let stderr = if n > 1.0 {
                        let var = ((sumsq[t] - n * mean * mean) / (n - 1.0)).max(0.0);
                        (var / n).sqrt()
                    } else {
                        f64::NAN
                    };
                    CurvePoint {
                        t,
                        mean_l1: mean,
                        stderr,
                        trials: count[t],
                        skipped: skipped[t],
                    }
                })
                .collect()
        }
        CurveMethod::ExactTree => {
            let mut out = TreeAcc {
                acc: vec![0.0; t_max + 1],
                mass: vec![0.0; t_max + 1],
                skipped: vec![0; t_max + 1],
                nodes: 0,
                budget,
            };
            tree_rec(
                pomdp, policy, h_anchor, t_max, h_anchor, 1.0, &mu, &bh_init, &mut out,
            )?;
            (0..=t_max)
                .map(|t| CurvePoint {
                    t,
                    mean_l1: out.acc[t] / out.mass[t],
                    stderr: 0.0,
                    trials: 0,
                    skipped: out.skipped[t],
                })
                .collect()
        }
    };
    Ok(ContractionCurve {
        gamma: curve_gamma(pomdp, h_anchor, t_max),
        policy: policy.label(),
        method,
        anchor: h_anchor,
        points,
    })
}

/// OLS slope of log(mean_l1) against t over [t_lo, t_hi], using only
/// points with mean_l1 > 5 * stderr (the log of noise-dominated points is
/// meaningless). None when fewer than two points survive.
pub fn log_slope(curve: &ContractionCurve, t_lo: usize, t_hi: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.t >= t_lo && p.t <= t_hi && p.mean_l1 > 0.0 && p.mean_l1 > 5.0 * p.stderr)
        .map(|p| (p.t as f64, p.mean_l1.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &pts {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

// ---------------------------------------------------------------------
// Exact-inequality suite
// ---------------------------------------------------------------------

/// Which Bayes likelihood to use; the shifted variant is a deliberately
/// broken update for checking that the harness catches violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateVariant {
    Correct,
    ShiftedColumn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IneqViolation {
    pub trial: u64,
    pub lhs: f64,
    pub rhs: f64,
    /// Reproducer: rerun the suite with this seed and look at this trial.
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IneqReport {
    pub name: String,
    pub trials_checked: u64,
    pub violations: Vec<IneqViolation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub num_trials: u64,
    pub reports: Vec<IneqReport>,
}

impl SuiteReport {
    pub fn total_violations(&self) -> usize {
        self.reports.iter().map(|r| r.violations.len()).sum()
    }
}

const SLACK: f64 = 1e-9;

/// Bayes update against a raw channel matrix, with the requested variant.
fn raw_bayes(channel: &[Vec<f64>], b: &[f64], y: usize, variant: UpdateVariant) -> Option<Vec<f64>> {
    let o = channel[0].len();
    let col = match variant {
        UpdateVariant::Correct => y,
        UpdateVariant::ShiftedColumn => (y + 1) % o,
    };
    let mut numer: Vec<f64> = (0..b.len()).map(|x| channel[x][col] * b[x]).collect();
    let denom: f64 = numer.iter().sum();
    if denom <= 1e-300 {
        return None;
    }
    for v in numer.iter_mut() {
        *v /= denom;
    }
    Some(numer)
}

fn raw_obs_dist(channel: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let o = channel[0].len();
    let mut out = vec![0.0; o];
    for (x, row) in channel.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            out[y] += b[x] * p;
        }
    }
    out
}

fn raw_push(transition: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let s = b.len();
    let mut out = vec![0.0; s];
    for (x, row) in transition.iter().enumerate() {
        for (x2, &p) in row.iter().enumerate() {
            out[x2] += b[x] * p;
        }
    }
    out
}

fn renyi_potential(d2: f64) -> f64 {
    ((d2 / 4.0).exp() - 1.0).max(0.0).sqrt()
}

struct TrialData {
    channel: Vec<Vec<f64>>,
    transition: Vec<Vec<f64>>,
    b: Vec<f64>,
    b2: Vec<f64>,
    gamma: f64,
}

fn sample_trial(seed: u64, trial: u64) -> TrialData {
    let mut rng = trial_rng(seed, trial);
    let s = rng.gen_range(2..=6usize);
    // Mostly undercomplete-free channels; every fifth trial allows O < S,
    // and every fourth uses the identity-mix channel, whose observability
    // the exact LP recovers in closed form.
    let o = if trial % 4 == 3 {
        s
    } else if trial % 5 == 4 {
        rng.gen_range(2..=8usize)
    } else {
        rng.gen_range(s..=8usize)
    };
    let channel: Vec<Vec<f64>> = if trial % 4 == 3 {
        crate::observability::identity_mix_channel(s, rng.gen_range(0.05..=1.0))
    } else {
        (0..s).map(|_| dirichlet(&mut rng, o)).collect()
    };
    let transition: Vec<Vec<f64>> = (0..s).map(|_| dirichlet(&mut rng, s)).collect();
    let b2 = dirichlet(&mut rng, s); // full support, so b << b2
    let mut b = dirichlet(&mut rng, s);
    if rng.gen::<f64>() < 0.3 {
        // Sparsify b for edge coverage; b << b2 still holds.
        let keep = rng.gen_range(1..=s);
        for x in keep..s {
            b[x] = 0.0;
        }
        let z: f64 = b.iter().sum();
        for v in b.iter_mut() {
            *v /= z;
        }
    }
    let gamma = gamma_exact(&channel).expect("suite uses S <= 6").gamma;
    TrialData {
        channel,
        transition,
        b,
        b2,
        gamma,
    }
}

/// Evaluates every contraction inequality as an exact finite sum on
/// `num_trials` random (channel, transition, b, b') tuples, reporting any
/// violation beyond 1e-9 slack with a reproducer. Every inequality here
/// is a proven property of the update, so a violation is an
/// implementation bug, not an experimental finding.
pub fn contraction_inequality_suite_with(
    seed: u64,
    num_trials: u64,
    variant: UpdateVariant,
) -> SuiteReport {
    let names = [
        "kl-weak-contractivity",
        "kl-sqrt-contraction",
        "renyi-potential-contraction",
        "linf-ratio-supermartingale",
        "d2-to-tv",
        "kl-sqrt-contraction-update",
        "renyi-potential-contraction-update",
        "f-kl-sandwich",
    ];
    type TrialResults = Vec<Option<(f64, f64)>>;
    let per_trial: Vec<TrialResults> = (0..num_trials)
        .into_par_iter()
        .map(|trial| {
            let data = sample_trial(seed, trial);
            check_trial(&data, variant)
        })
        .collect();
    let mut reports: Vec<IneqReport> = names
        .iter()
        .map(|n| IneqReport {
            name: n.to_string(),
            trials_checked: 0,
            violations: Vec::new(),
        })
        .collect();
    for (trial, results) in per_trial.iter().enumerate() {
        for (i, res) in results.iter().enumerate() {
            if let Some((lhs, rhs)) = res {
                reports[i].trials_checked += 1;
                if *lhs > *rhs + SLACK {
                    reports[i].violations.push(IneqViolation {
                        trial: trial as u64,
                        lhs: *lhs,
                        rhs: *rhs,
                        seed,
                    });
                }
            }
        }
    }
    // The sandwich is input-free; check it once over a grid.
    let mut grid_worst: Option<(f64, f64)> = None;
    let n = 1000;
    for k in 0..=n {
        let x = 0.5 + k as f64 / n as f64;
        let f = f_kl(x);
        let lo = (x - 1.0) * (x - 1.0) / 4.0;
        let hi = (x - 1.0) * (x - 1.0);
        if lo > f + SLACK || f > hi + SLACK {
            grid_worst = Some((lo.max(f), f.min(hi)));
        }
    }
    reports[7].trials_checked = 1;
    if let Some((lhs, rhs)) = grid_worst {
        reports[7].violations.push(IneqViolation {
            trial: 0,
            lhs,
            rhs,
            seed,
        });
    }
    SuiteReport {
        seed,
        num_trials,
        reports,
    }
}

/// Per-trial (lhs, rhs) pairs for the seven sampled inequalities; None
/// when a quantity is infinite or undefined for the draw.
fn check_trial(data: &TrialData, variant: UpdateVariant) -> Vec<Option<(f64, f64)>> {
    let TrialData {
        channel,
        transition,
        b,
        b2,
        gamma,
    } = data;
    let mut out = vec![None; 8];
    let obs_b = raw_obs_dist(channel, b);
    let kl_prior = kl(b, b2);

    // Bayes-operator inequalities: expectation over y ~ O^T b.
    let mut e_kl = 0.0;
    let mut e_sqrt_kl = 0.0;
    let mut e_renyi_pot = 0.0;
    let mut ok = true;
    for (y, &p) in obs_b.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let (Some(pb), Some(pb2)) = (
            raw_bayes(channel, b, y, variant),
            raw_bayes(channel, b2, y, variant),
        ) else {
            ok = false;
            break;
        };
        let d = kl(&pb, &pb2);
        if !d.is_finite() {
            ok = false;
            break;
        }
        e_kl += p * d;
        e_sqrt_kl += p * d.sqrt();
        e_renyi_pot += p * renyi_potential((1.0 + chi2(&pb, &pb2)).ln());
    }
    if ok {
        out[0] = Some((e_kl, kl_prior));
        let factor = 1.0 - gamma * gamma / (2f64.powi(14) * kl_prior.max(1.0));
        out[1] = Some((e_sqrt_kl, factor * kl_prior.sqrt()));
        let d2_prior = (1.0 + chi2(b, b2)).ln();
        let factor4 = 1.0 - gamma.powi(4) / 2f64.powi(40);
        out[2] = Some((e_renyi_pot, factor4 * renyi_potential(d2_prior)));
    }

    // Update-operator inequalities: push through the transition first,
    // expectation over y ~ O^T T b.
    let tb = raw_push(transition, b);
    let tb2 = raw_push(transition, b2);
    let obs_tb = raw_obs_dist(channel, &tb);
    let mut e_linf = 0.0;
    let mut e_sqrt_kl_u = 0.0;
    let mut e_renyi_pot_u = 0.0;
    let mut ok_u = true;
    for (y, &p) in obs_tb.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let (Some(ub), Some(ub2)) = (
            raw_bayes(channel, &tb, y, variant),
            raw_bayes(channel, &tb2, y, variant),
        ) else {
            ok_u = false;
            break;
        };
        let ratio = linf_ratio(&ub, &ub2);
        let d = kl(&ub, &ub2);
        if !ratio.is_finite() || !d.is_finite() {
            ok_u = false;
            break;
        }
        e_linf += p * ratio;
        e_sqrt_kl_u += p * d.sqrt();
        e_renyi_pot_u += p * renyi_potential((1.0 + chi2(&ub, &ub2)).ln());
    }
    if ok_u {
        let prior_ratio = linf_ratio(b, b2);
        out[3] = Some((e_linf, prior_ratio));
        let factor = 1.0 - gamma * gamma / (2f64.powi(14) * kl_prior.max(1.0));
        out[5] = Some((e_sqrt_kl_u, factor * kl_prior.sqrt()));
        let d2_prior = (1.0 + chi2(b, b2)).ln();
        let factor4 = 1.0 - gamma.powi(4) / 2f64.powi(40);
        out[6] = Some((e_renyi_pot_u, factor4 * renyi_potential(d2_prior)));
    }

    // TV(P, Q) <= 4 sqrt(exp(D2/4) - 1) on the raw pair.
    let d2 = (1.0 + chi2(b, b2)).ln();
    out[4] = Some((tv(b, b2), 4.0 * renyi_potential(d2)));
    out
}

pub fn contraction_inequality_suite(seed: u64, num_trials: u64) -> SuiteReport {
    contraction_inequality_suite_with(seed, num_trials, UpdateVariant::Correct)
}

/// Negative control: the same suite against an off-by-one-column Bayes
/// update. A healthy harness reports violations here.
pub fn contraction_inequality_suite_corrupted(seed: u64, num_trials: u64) -> SuiteReport {
    contraction_inequality_suite_with(seed, num_trials, UpdateVariant::ShiftedColumn)
}

// ---------------------------------------------------------------------
// Divergence-increase demonstration
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticDecrementRow {
    pub eps: f64,
    pub kl: f64,
    pub decrement: f64,
    /// decrement / kl^2; bounded as eps -> 0 because the decrement is
    /// quadratic in the divergence.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceIncreaseReport {
    pub eps: f64,
    pub kl_before: f64,
    /// KL after conditioning on the unlikely observation (index 1).
    pub kl_after: f64,
    pub increased: bool,
    pub quadratic_decrement: Vec<QuadraticDecrementRow>,
    /// max ratio / min ratio across the epsilon grid.
    pub ratio_spread: f64,
}

/// Demonstrates the two one-step phenomena: a single Bayes update that
/// increases KL (epsilon channel against a misspecified prior), and an
/// expected KL decrement that is quadratic rather than linear in the
/// divergence ((1/2 +- gamma) channel with gamma = 0.1, over an epsilon
/// grid).
pub fn divergence_increase_demo(eps: f64) -> Result<DivergenceIncreaseReport, LabError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LabError::DegenerateEps(eps));
    }
    let channel = vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]];
    let b = vec![1.0 - eps * eps, eps * eps];
    let b2 = vec![0.5, 0.5];
    let kl_before = kl(&b, &b2);
    let pb = raw_bayes(&channel, &b, 1, UpdateVariant::Correct).unwrap();
    let pb2 = raw_bayes(&channel, &b2, 1, UpdateVariant::Correct).unwrap();
    let kl_after = kl(&pb, &pb2);

    let gamma = 0.1;
    let flat_channel = vec![
        vec![0.5 + gamma, 0.5 - gamma],
        vec![0.5 - gamma, 0.5 + gamma],
    ];
    let mut rows = Vec::new();
    for &e in &[0.1, 0.05, 0.01] {
        let p = vec![1.0, 0.0];
        let q = vec![1.0 - e, e];
        let kl_pq = kl(&p, &q);
        let obs = raw_obs_dist(&flat_channel, &p);
        let mut e_kl = 0.0;
        for (y, &w) in obs.iter().enumerate() {
            let bp = raw_bayes(&flat_channel, &p, y, UpdateVariant::Correct).unwrap();
            let bq = raw_bayes(&flat_channel, &q, y, UpdateVariant::Correct).unwrap();
            e_kl += w * kl(&bp, &bq);
        }
        let decrement = kl_pq - e_kl;
        rows.push(QuadraticDecrementRow {
            eps: e,
            kl: kl_pq,
            decrement,
            ratio: decrement / (kl_pq * kl_pq),
        });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(DivergenceIncreaseReport {
        eps,
        kl_before,
        kl_after,
        increased: kl_after > kl_before,
        quadratic_decrement: rows,
        ratio_spread: max_ratio / min_ratio,
    })
}

// ---------------------------------------------------------------------
// Exact windowed belief error under a policy
// ---------------------------------------------------------------------

/// Exact per-step expected belief error E || b_h - bhat_h ||_1 for
/// h = 1..=H, where bhat uses the last min(L, h-1) steps, computed over
/// the policy's positive-probability history tree.
pub fn window_belief_error(
    pomdp: &Pomdp,
    policy: &dyn crate::exactplan::Policy,
    window_length: usize,
    budget: usize,
) -> Result<Vec<f64>, PlanError> {
    let mut errors = vec![0.0; pomdp.horizon];
    let mut nodes = 0usize;
    let mut hist = History::empty();
    wbe_rec(
        pomdp,
        policy,
        window_length,
        &mut hist,
        &pomdp.initial_belief.clone(),
        1.0,
        &mut errors,
        &mut nodes,
        budget,
    )?;
    Ok(errors)
}

#[allow(clippy::too_many_arguments)]
fn wbe_rec(
    pomdp: &Pomdp,
    policy: &dyn crate::exactplan::Policy,
    window_length: usize,
    hist: &mut History,
    probs: &[f64],
    mass: f64,
    errors: &mut [f64],
    nodes: &mut usize,
    budget: usize,
) -> Result<(), PlanError> {
    let h = hist.stage();
    *nodes += 1;
    if *nodes > budget {
        return Err(PlanError::BudgetExceeded {
            nodes: *nodes,
            budget,
        });
    }
    let window = hist.window(window_length);
    let approx = crate::belief::approx_belief(pomdp, &window)
        .expect("realizable windows are defined from the uniform prior");
    errors[h - 1] += mass * l1_distance(probs, &approx.probs);
    if h == pomdp.horizon {
        return Ok(());
    }
    let weights: Vec<(usize, f64)> = match policy.action_dist(pomdp, hist) {
        crate::exactplan::ActionDist::Pure(a) => vec![(a, 1.0)],
        crate::exactplan::ActionDist::Mixed(w) => w
            .into_iter()
            .enumerate()
            .filter(|&(_, p)| p > 0.0)
            .collect(),
    };
    for (a, wa) in weights {
        let pushed = push_forward(pomdp, probs, h, a);
        let obs = obs_dist(pomdp, &pushed, h + 1);
        for (y, &p) in obs.iter().enumerate() {
            if p <= 1e-300 {
                continue;
            }
            let child = bayes_update_probs(pomdp, &pushed, h + 1, y)
                .expect("positive-probability branch");
            hist.push(a, y);
            wbe_rec(
                pomdp,
                policy,
                window_length,
                hist,
                &child,
                mass * wa * p,
                errors,
                nodes,
                budget,
            )?;
            hist.pop();
        }
    }
    Ok(())
}
