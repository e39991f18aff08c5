//! Observability estimation for emission matrices.
//!
//! The observability of an S x O stochastic matrix is
//!
//! ```text
//! gamma = min over zero-sum v != 0 of ||O^T v||_1 / ||v||_1,
//! ```
//!
//! equivalently the minimum over pairs of state distributions b != b' of
//! ||O^T(b - b')||_1 / ||b - b'||_1. The feasible set is nonconvex, but
//! fixing the sign pattern of v makes each piece a linear program, so the
//! exact value is the minimum of 2^(S-1) small LPs (global negation of v
//! is symmetric). Monte Carlo sampling of directions gives upper bounds
//! for larger S; those are tagged as bounds and never reported as gamma.

use crate::model::Pomdp;
use crate::simplex::{lp_solve, LpError, LpProblem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest S for which the sign-pattern enumeration is attempted.
pub const MAX_EXACT_STATES: usize = 14;

#[derive(Debug, Error)]
pub enum ObservabilityError {
    #[error("exact gamma supports at most {MAX_EXACT_STATES} states, got {0}")]
    DimensionTooLarge(usize),
    #[error("internal LP failure: {0}")]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaMethod {
    #[serde(rename = "exact-lp")]
    ExactLp,
    #[serde(rename = "mc-upper")]
    McUpper,
    #[serde(rename = "closed-form")]
    ClosedForm,
}

impl std::fmt::Display for GammaMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GammaMethod::ExactLp => write!(f, "exact-lp"),
            GammaMethod::McUpper => write!(f, "mc-upper"),
            GammaMethod::ClosedForm => write!(f, "closed-form"),
        }
    }
}

/// A gamma value with the direction v achieving it (sum v = 0, ||v||_1 = 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaResult {
    pub gamma: f64,
    pub certificate: Vec<f64>,
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// ||O^T v||_1 / ||v||_1 for a direction v.
pub fn direction_ratio(emission: &[Vec<f64>], v: &[f64]) -> f64 {
    let o = emission[0].len();
    let mut image = vec![0.0; o];
    for (x, row) in emission.iter().enumerate() {
        if v[x] == 0.0 {
            continue;
        }
        for (y, &p) in row.iter().enumerate() {
            image[y] += v[x] * p;
        }
    }
    l1(&image) / l1(v)
}

/// Solves one sign-pattern LP. `signs[i]` is +1 or -1; variables are
/// u_i = signs_i * v_i >= 0 and w_y >= |(O^T v)_y|:
///
///   min sum_y w_y
///   s.t. sum_i u_i = 1, sum_i signs_i u_i = 0,
///        -w <= O^T (signs . u) <= w.
fn sign_pattern_lp(emission: &[Vec<f64>], signs: &[f64]) -> Result<(f64, Vec<f64>), LpError> {
    let s = emission.len();
    let o = emission[0].len();
    let nvars = s + o;
    let mut objective = vec![0.0; nvars];
    for y in 0..o {
        objective[s + y] = 1.0;
    }
    let a_eq = vec![
        vec![1.0; s]
            .into_iter()
            .chain(std::iter::repeat_n(0.0, o))
            .collect::<Vec<f64>>(),
        signs
            .iter()
            .copied()
            .chain(std::iter::repeat_n(0.0, o))
            .collect::<Vec<f64>>(),
    ];
    let b_eq = vec![1.0, 0.0];
    let mut a_ub = Vec::with_capacity(2 * o);
    for y in 0..o {
        let mut upper = vec![0.0; nvars];
        let mut lower = vec![0.0; nvars];
        for x in 0..s {
            upper[x] = emission[x][y] * signs[x];
            lower[x] = -emission[x][y] * signs[x];
        }
        upper[s + y] = -1.0;
        lower[s + y] = -1.0;
        a_ub.push(upper);
        a_ub.push(lower);
    }
    let b_ub = vec![0.0; 2 * o];
    let problem = LpProblem {
        objective,
        a_eq,
        b_eq,
        a_ub,
        b_ub,
    };
    let sol = lp_solve(&problem, s * o * 1000)?;
    let v: Vec<f64> = (0..s).map(|i| signs[i] * sol.x[i]).collect();
    Ok((sol.objective, v))
}

/// Exact observability of an emission matrix via sign-pattern LP
/// enumeration. Requires S <= 14.
pub fn gamma_exact(emission: &[Vec<f64>]) -> Result<GammaResult, ObservabilityError> {
    let s = emission.len();
    if s > MAX_EXACT_STATES {
        return Err(ObservabilityError::DimensionTooLarge(s));
    }
    assert!(s >= 2, "observability needs at least two states");
    // Fix signs[0] = +1; skip the all-positive pattern (no zero-sum v).
    type PatternResult = (u64, Result<(f64, Vec<f64>), LpError>);
    let patterns: Vec<u64> = (1..(1u64 << (s - 1))).collect();
    let results: Vec<PatternResult> = patterns
        .par_iter()
        .map(|&mask| {
            let mut signs = vec![1.0; s];
            for i in 0..(s - 1) {
                if mask >> i & 1 == 1 {
                    signs[i + 1] = -1.0;
                }
            }
            (mask, sign_pattern_lp(emission, &signs))
        })
        .collect();
    let mut best: Option<(f64, u64, Vec<f64>)> = None;
    for (mask, res) in results {
        // Every mixed sign pattern admits a zero-sum direction, so an
        // infeasible sub-LP is an internal bug, not an input condition.
        assert!(
            !matches!(res, Err(LpError::Infeasible)),
            "sign-pattern sub-LP reported infeasible"
        );
        let (obj, v) = res?;
        let replace = match &best {
            None => true,
            Some((bobj, bmask, _)) => obj < *bobj || (obj == *bobj && mask < *bmask),
        };
        if replace {
            best = Some((obj, mask, v));
        }
    }
    let (gamma, _, certificate) = best.expect("at least one sign pattern");
    debug_assert!(
        (direction_ratio(emission, &certificate) - gamma).abs() <= 1e-9,
        "certificate does not recompute gamma"
    );
    Ok(GammaResult { gamma, certificate })
}

/// Monte Carlo upper bound: the minimum ratio over sampled directions
/// (sparse sign vectors, Dirichlet difference pairs) plus all pairwise
/// state-indicator differences. Always >= the true gamma.
pub fn gamma_mc_upper(emission: &[Vec<f64>], num_samples: usize, seed: u64) -> GammaResult {
    use crate::rng::{dirichlet, trial_rng};
    use rand::Rng;

    let s = emission.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |emission: &[Vec<f64>], v: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| {
        let norm = l1(&v);
        if norm < 1e-12 {
            return;
        }
        let ratio = direction_ratio(emission, &v);
        if best.as_ref().is_none_or(|(b, _)| ratio < *b) {
            let scaled = v.iter().map(|x| x / norm).collect();
            *best = Some((ratio, scaled));
        }
    };
    for i in 0..s {
        for j in (i + 1)..s {
            let mut v = vec![0.0; s];
            v[i] = 1.0;
            v[j] = -1.0;
            consider(emission, v, &mut best);
        }
    }
    let mut rng = trial_rng(seed, 0);
    for k in 0..num_samples {
        let v = if k % 2 == 0 {
            // Sparse balanced sign vector.
            let support = rng.gen_range(2..=s);
            let mut idx: Vec<usize> = (0..s).collect();
            for i in 0..support {
                let j = rng.gen_range(i..s);
                idx.swap(i, j);
            }
            let pos = rng.gen_range(1..support);
            let mut v = vec![0.0; s];
            for (c, &i) in idx[..support].iter().enumerate() {
                v[i] = if c < pos {
                    1.0 / pos as f64
                } else {
                    -1.0 / (support - pos) as f64
                };
            }
            v
        } else {
            let b = dirichlet(&mut rng, s);
            let b2 = dirichlet(&mut rng, s);
            b.iter().zip(&b2).map(|(x, y)| x - y).collect()
        };
        consider(emission, v, &mut best);
    }
    let (gamma, certificate) = best.expect("indicator pairs always provide a candidate");
    GammaResult { gamma, certificate }
}

/// Weak observability: the minimum pairwise 1-norm distance between
/// emission rows, with the minimizing state pair.
pub fn gamma_weak(emission: &[Vec<f64>]) -> (f64, (usize, usize)) {
    let s = emission.len();
    assert!(s >= 2);
    let mut best = f64::INFINITY;
    let mut pair = (0, 1);
    for i in 0..s {
        for j in (i + 1)..s {
            let mut d = 0.0;
            for y in 0..emission[0].len() {
                d += (emission[i][y] - emission[j][y]).abs();
            }
            if d < best {
                best = d;
                pair = (i, j);
            }
        }
    }
    (best, pair)
}

/// Per-step gamma with its estimation method and certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepGamma {
    /// Step h in 2..=H (1-based).
    pub h: usize,
    pub gamma: f64,
    pub method: GammaMethod,
    pub certificate: Vec<f64>,
    /// Min pairwise row distance and the minimizing pair. A different
    /// quantity from gamma; no relation between the two is asserted.
    pub weak_gamma: f64,
    pub weak_pair: (usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservabilityReport {
    pub per_step: Vec<StepGamma>,
    /// Min over steps. An upper bound if any step used mc-upper.
    pub pomdp_gamma: f64,
    pub is_upper_bound: bool,
}

pub enum ReportMethod {
    Exact,
    McUpper { samples: usize, seed: u64 },
}

/// Computes gamma (or an upper bound) for every emission step of a model.
pub fn observability_report(
    pomdp: &Pomdp,
    method: ReportMethod,
) -> Result<ObservabilityReport, ObservabilityError> {
    let mut per_step = Vec::with_capacity(pomdp.emissions.len());
    for (i, emission) in pomdp.emissions.iter().enumerate() {
        let h = i + 2;
        let (result, tag) = match &method {
            ReportMethod::Exact => (gamma_exact(emission)?, GammaMethod::ExactLp),
            ReportMethod::McUpper { samples, seed } => (
                gamma_mc_upper(emission, *samples, seed.wrapping_add(i as u64)),
                GammaMethod::McUpper,
            ),
        };
        let (weak, pair) = gamma_weak(emission);
        per_step.push(StepGamma {
            h,
            gamma: result.gamma,
            method: tag,
            certificate: result.certificate,
            weak_gamma: weak,
            weak_pair: pair,
        });
    }
    let pomdp_gamma = per_step
        .iter()
        .map(|s| s.gamma)
        .fold(f64::INFINITY, f64::min);
    let is_upper_bound = per_step.iter().any(|s| s.method == GammaMethod::McUpper);
    Ok(ObservabilityReport {
        per_step,
        pomdp_gamma,
        is_upper_bound,
    })
}

/// The identity-mix channel gamma0 * I + (1 - gamma0)/S * J, whose
/// observability is exactly gamma0.
pub fn identity_mix_channel(s: usize, gamma0: f64) -> Vec<Vec<f64>> {
    (0..s)
        .map(|x| {
            (0..s)
                .map(|y| {
                    let base = (1.0 - gamma0) / s as f64;
                    if x == y {
                        gamma0 + base
                    } else {
                        base
                    }
                })
                .collect()
        })
        .collect()
}

/// The null-observation channel: state revealed with probability gamma0,
/// otherwise a null symbol (last column). Observability is exactly gamma0.
pub fn null_channel(s: usize, gamma0: f64) -> Vec<Vec<f64>> {
    (0..s)
        .map(|x| {
            let mut row = vec![0.0; s + 1];
            row[x] = gamma0;
            row[s] = 1.0 - gamma0;
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{dirichlet, trial_rng};

    #[test]
    fn identity_mix_gamma_is_exact() {
        for &s in &[2usize, 3, 5, 8] {
            let channel = identity_mix_channel(s, 0.5);
            let g = gamma_exact(&channel).unwrap();
            assert!((g.gamma - 0.5).abs() < 1e-9, "S={s}: {}", g.gamma);
        }
    }

    #[test]
    fn null_channel_gamma_is_exact() {
        let channel = null_channel(4, 0.3);
        let g = gamma_exact(&channel).unwrap();
        assert!((g.gamma - 0.3).abs() < 1e-9);
    }

    #[test]
    fn identical_rows_give_zero_with_supported_certificate() {
        let channel = vec![
            vec![0.2, 0.8],
            vec![0.5, 0.5],
            vec![0.2, 0.8],
        ];
        let g = gamma_exact(&channel).unwrap();
        assert!(g.gamma.abs() < 1e-9);
        // Certificate must be supported on the identical rows 0 and 2.
        assert!(g.certificate[0].abs() > 1e-6);
        assert!(g.certificate[2].abs() > 1e-6);
        assert!(g.certificate[1].abs() < 1e-9);
    }

    #[test]
    fn certificate_recomputes_gamma() {
        let mut rng = trial_rng(11, 0);
        for _ in 0..20 {
            let channel: Vec<Vec<f64>> = (0..4).map(|_| dirichlet(&mut rng, 5)).collect();
            let g = gamma_exact(&channel).unwrap();
            let ratio = direction_ratio(&channel, &g.certificate);
            assert!((ratio - g.gamma).abs() < 1e-9);
            assert!((l1(&g.certificate) - 1.0).abs() < 1e-9);
            let sum: f64 = g.certificate.iter().sum();
            assert!(sum.abs() < 1e-9);
        }
    }

    #[test]
    fn mc_upper_finds_identical_rows() {
        let channel = vec![vec![0.3, 0.7], vec![0.3, 0.7]];
        let g = gamma_mc_upper(&channel, 10, 0);
        assert!(g.gamma.abs() < 1e-12);
    }

    #[test]
    fn mc_upper_matches_exact_on_identity_mix() {
        let channel = identity_mix_channel(5, 0.5);
        let g = gamma_mc_upper(&channel, 50, 0);
        assert!((g.gamma - 0.5).abs() < 1e-9);
    }

    #[test]
    fn mc_is_always_an_upper_bound() {
        let mut rng = trial_rng(3, 0);
        for trial in 0..200 {
            let s = 2 + (trial % 7);
            let o = 2 + (trial % 5);
            let channel: Vec<Vec<f64>> = (0..s).map(|_| dirichlet(&mut rng, o)).collect();
            let exact = gamma_exact(&channel).unwrap().gamma;
            let upper = gamma_mc_upper(&channel, 30, trial as u64).gamma;
            assert!(
                upper >= exact - 1e-9,
                "trial {trial}: upper {upper} < exact {exact}"
            );
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = trial_rng(5, 0);
        for _ in 0..10 {
            let channel: Vec<Vec<f64>> = (0..4).map(|_| dirichlet(&mut rng, 4)).collect();
            let base = gamma_exact(&channel).unwrap().gamma;
            // Swap two rows.
            let mut rows = channel.clone();
            rows.swap(1, 3);
            assert!((gamma_exact(&rows).unwrap().gamma - base).abs() < 1e-9);
            // Swap two columns.
            let cols: Vec<Vec<f64>> = channel
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.swap(0, 2);
                    r
                })
                .collect();
            assert!((gamma_exact(&cols).unwrap().gamma - base).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_guard() {
        let channel = identity_mix_channel(15, 0.5);
        match gamma_exact(&channel) {
            Err(ObservabilityError::DimensionTooLarge(15)) => {}
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn weak_gamma_values() {
        let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(gamma_weak(&identity).0, 2.0);
        let identical = vec![vec![0.4, 0.6], vec![0.4, 0.6]];
        assert_eq!(gamma_weak(&identical).0, 0.0);
    }

    /// Grid-search oracle over one sign-pattern face for S = 3: the LP
    /// optimum must match a dense scan of the same face.
    #[test]
    fn sign_pattern_lp_matches_grid_search() {
        let mut rng = trial_rng(17, 0);
        for _ in 0..5 {
            let channel: Vec<Vec<f64>> = (0..3).map(|_| dirichlet(&mut rng, 4)).collect();
            // Pattern (+, -, -): v = (1/2, -p, -(1/2 - p)) for p in [0, 1/2].
            let (lp_obj, _) = sign_pattern_lp(&channel, &[1.0, -1.0, -1.0]).unwrap();
            let mut grid_best = f64::INFINITY;
            let n = 20_000;
            for k in 0..=n {
                let p = 0.5 * k as f64 / n as f64;
                let v = [0.5, -p, -(0.5 - p)];
                let mut img = [0.0; 4];
                for x in 0..3 {
                    for y in 0..4 {
                        img[y] += channel[x][y] * v[x];
                    }
                }
                let obj: f64 = img.iter().map(|z| z.abs()).sum();
                grid_best = grid_best.min(obj);
            }
            assert!(
                (lp_obj - grid_best).abs() < 1e-6,
                "lp {lp_obj} vs grid {grid_best}"
            );
        }
    }
}
