//! Self-contained dense two-phase simplex solver with Bland's rule.
//!
//! Solves: minimize c.x subject to A_eq x = b_eq, A_ub x <= b_ub, x >= 0.
//! Bland's rule guarantees termination; the pivot tolerance is 1e-10. The
//! problems this backs (observability sub-LPs) are tiny and dense, so
//! robustness is preferred over speed.

use thiserror::Error;

/// Pivot/zero tolerance.
const TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("iteration cap reached")]
    MaxIterations,
}

#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    /// Cost vector c.
    pub objective: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row; last entry is minus the current objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// Columns that may never enter the basis (artificials in phase 2).
    banned: Vec<bool>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, &p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
        let factor = self.obj[c];
        if factor != 0.0 {
            for (v, &p) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations with Bland's rule until optimal.
    fn run(&mut self, max_iterations: usize) -> Result<(), LpError> {
        for _ in 0..max_iterations {
            // Entering: lowest-index column with negative reduced cost.
            let mut entering = None;
            for j in 0..self.ncols {
                if !self.banned[j] && self.obj[j] < -TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return Ok(());
            };
            // Leaving: ratio test, ties broken by lowest basic variable index.
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][c];
                if a > TOL {
                    let ratio = self.rows[r][self.ncols] / a;
                    let better = match leaving {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - TOL
                                || (ratio <= lratio + TOL && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leaving else {
                return Err(LpError::Unbounded);
            };
            self.pivot(r, c);
        }
        Err(LpError::MaxIterations)
    }
}

/// Minimizes `p.objective` over the feasible region of `p`.
pub fn lp_solve(p: &LpProblem, max_iterations: usize) -> Result<LpSolution, LpError> {
    let n = p.objective.len();
    let m_eq = p.a_eq.len();
    let m_ub = p.a_ub.len();
    let m = m_eq + m_ub;
    let n_slack = m_ub;
    // One artificial per row; redundant ones stay basic at zero.
    let n_art = m;
    let ncols = n + n_slack + n_art;

    let mut rows = vec![vec![0.0; ncols + 1]; m];
    for (i, (a_row, &b)) in p.a_eq.iter().zip(&p.b_eq).enumerate() {
        let flip = if b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            rows[i][j] = flip * a_row[j];
        }
        rows[i][ncols] = flip * b;
    }
    for (k, (a_row, &b)) in p.a_ub.iter().zip(&p.b_ub).enumerate() {
        let i = m_eq + k;
        let flip = if b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            rows[i][j] = flip * a_row[j];
        }
        rows[i][n + k] = flip; // slack
        rows[i][ncols] = flip * b;
    }
    for i in 0..m {
        rows[i][n + n_slack + i] = 1.0;
    }

    // Phase 1: minimize the sum of artificials.
    let mut obj = vec![0.0; ncols + 1];
    for j in (n + n_slack)..ncols {
        obj[j] = 1.0;
    }
    // Price out the initial (artificial) basis.
    for i in 0..m {
        for j in 0..=ncols {
            obj[j] -= rows[i][j];
        }
    }
    let mut t = Tableau {
        rows,
        obj,
        basis: (0..m).map(|i| n + n_slack + i).collect(),
        banned: vec![false; ncols],
        ncols,
    };
    t.run(max_iterations)?;
    let phase1_value = -t.obj[ncols];
    if phase1_value > 1e-7 {
        return Err(LpError::Infeasible);
    }
    // Drive remaining artificials out of the basis where possible.
    for r in 0..m {
        if t.basis[r] >= n + n_slack {
            let mut col = None;
            for j in 0..(n + n_slack) {
                if t.rows[r][j].abs() > TOL {
                    col = Some(j);
                    break;
                }
            }
            if let Some(c) = col {
                t.pivot(r, c);
            }
        }
    }
    for j in (n + n_slack)..ncols {
        t.banned[j] = true;
    }

    // Phase 2: the real objective, priced out over the current basis.
    let mut obj = vec![0.0; ncols + 1];
    obj[..n].copy_from_slice(&p.objective);
    for r in 0..m {
        let b = t.basis[r];
        let cost = if b < n { p.objective[b] } else { 0.0 };
        if cost != 0.0 {
            for j in 0..=t.ncols {
                obj[j] -= cost * t.rows[r][j];
            }
        }
    }
    t.obj = obj;
    t.run(max_iterations)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rows[r][t.ncols];
        }
    }
    debug_assert!(feasibility_error(p, &x) <= 1e-9, "optimal basis is infeasible");
    debug_assert!(
        (0..t.ncols).all(|j| t.banned[j] || t.obj[j] >= -TOL),
        "negative reduced cost at reported optimum"
    );
    let objective = p
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum::<f64>();
    Ok(LpSolution { x, objective })
}

/// Largest constraint violation of a candidate point (0 when feasible).
pub fn feasibility_error(p: &LpProblem, x: &[f64]) -> f64 {
    let dot = |row: &[f64]| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    let mut worst: f64 = 0.0;
    for (row, &b) in p.a_eq.iter().zip(&p.b_eq) {
        worst = worst.max((dot(row) - b).abs());
    }
    for (row, &b) in p.a_ub.iter().zip(&p.b_ub) {
        worst = worst.max(dot(row) - b);
    }
    for &v in x {
        worst = worst.max(-v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bound_constraint() {
        // min x s.t. x >= 3  (as -x <= -3)
        let p = LpProblem {
            objective: vec![1.0],
            a_ub: vec![vec![-1.0]],
            b_ub: vec![-3.0],
            ..Default::default()
        };
        let sol = lp_solve(&p, 1000).unwrap();
        assert!((sol.objective - 3.0).abs() < 1e-9);
        assert!((sol.x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn box_corner() {
        // min -x - y s.t. x + y <= 1, x, y >= 0  -> objective -1
        let p = LpProblem {
            objective: vec![-1.0, -1.0],
            a_ub: vec![vec![1.0, 1.0]],
            b_ub: vec![1.0],
            ..Default::default()
        };
        let sol = lp_solve(&p, 1000).unwrap();
        assert!((sol.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_constraint() {
        // min x + 2y s.t. x + y = 1 -> x = 1, objective 1
        let p = LpProblem {
            objective: vec![1.0, 2.0],
            a_eq: vec![vec![1.0, 1.0]],
            b_eq: vec![1.0],
            ..Default::default()
        };
        let sol = lp_solve(&p, 1000).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        // x <= -1 with x >= 0 is infeasible.
        let p = LpProblem {
            objective: vec![1.0],
            a_ub: vec![vec![1.0]],
            b_ub: vec![-1.0],
            ..Default::default()
        };
        assert_eq!(lp_solve(&p, 1000).unwrap_err(), LpError::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // min -x, x >= 0 unconstrained above.
        let p = LpProblem {
            objective: vec![-1.0],
            ..Default::default()
        };
        assert_eq!(lp_solve(&p, 1000).unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn degenerate_cycling_guard() {
        // A classic degenerate problem; Bland's rule must terminate.
        let p = LpProblem {
            objective: vec![-0.75, 150.0, -0.02, 6.0],
            a_ub: vec![
                vec![0.25, -60.0, -0.04, 9.0],
                vec![0.5, -90.0, -0.02, 3.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            b_ub: vec![0.0, 0.0, 1.0],
            ..Default::default()
        };
        let sol = lp_solve(&p, 10_000).unwrap();
        assert!((sol.objective + 0.05).abs() < 1e-9);
    }

    #[test]
    fn random_lps_beat_sampled_feasible_points() {
        use crate::rng::trial_rng;
        use rand::Rng;
        for trial in 0..200u64 {
            let mut rng = trial_rng(31, trial);
            let n = rng.gen_range(2..6usize);
            let m = rng.gen_range(1..5usize);
            let objective: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Feasible by construction around a random nonnegative point,
            // bounded by a simplex cap.
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut a_ub: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let mut b_ub: Vec<f64> = a_ub
                .iter()
                .map(|row| {
                    row.iter().zip(&x0).map(|(a, v)| a * v).sum::<f64>()
                        + rng.gen_range(0.0..0.5)
                })
                .collect();
            a_ub.push(vec![1.0; n]);
            b_ub.push(x0.iter().sum::<f64>() + 1.0);
            let p = LpProblem {
                objective,
                a_ub,
                b_ub,
                ..Default::default()
            };
            let sol = lp_solve(&p, 10_000).unwrap();
            assert!(feasibility_error(&p, &sol.x) <= 1e-9);
            // No sampled feasible point may do better.
            for _ in 0..300 {
                let cand: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.5)).collect();
                if feasibility_error(&p, &cand) <= 0.0 {
                    let obj: f64 = p.objective.iter().zip(&cand).map(|(c, v)| c * v).sum();
                    assert!(
                        obj >= sol.objective - 1e-7,
                        "trial {trial}: sampled point beats the solver"
                    );
                }
            }
        }
    }

    #[test]
    fn feasibility_of_solution() {
        let p = LpProblem {
            objective: vec![1.0, 1.0, 1.0],
            a_eq: vec![vec![1.0, 1.0, 1.0], vec![1.0, -1.0, 0.0]],
            b_eq: vec![1.0, 0.25],
            a_ub: vec![vec![0.0, 1.0, -1.0]],
            b_ub: vec![0.1],
        };
        let sol = lp_solve(&p, 1000).unwrap();
        let x = &sol.x;
        assert!((x[0] + x[1] + x[2] - 1.0).abs() < 1e-9);
        assert!((x[0] - x[1] - 0.25).abs() < 1e-9);
        assert!(x[1] - x[2] <= 0.1 + 1e-9);
        assert!(x.iter().all(|&v| v >= -1e-9));
    }
}
