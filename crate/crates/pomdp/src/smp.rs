//! Short-memory planning: backward induction over length-L action/
//! observation windows using approximate beliefs.
//!
//! With window beliefs b' from the uniform prior, the tables satisfy
//!
//! ```text
//! Qhat_h(w, a) = E_{y ~ O_{h+1}^T T_h(a) b'(w)} [ R_{h+1}(y) + Vhat_{h+1}(shift(w, a, y)) ]
//! Vhat_h(w)    = max_a Qhat_h(w, a),    Vhat_H = 0,
//! ```
//!
//! where shift keeps the most recent min(L, h) steps. The policy plays the
//! stored argmax of the truncated window. When L >= H-1 the windows cover
//! full histories and the value estimate equals the exact optimum.
//!
//! Window keys pack the action digits (oldest first, base A) below the
//! observation digits (oldest first, base O):
//! `key = sum_i a_i A^i + A^w * sum_i o_i O^i`.

use crate::belief::approx_belief;
use crate::exactplan::{eval_policy_exact, eval_policy_mc, solve_exact, ActionDist, PlanError, Policy};
use crate::model::{History, HistoryWindow, Pomdp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

/// Default table-entry budget for planning.
pub const DEFAULT_SMP_BUDGET: usize = 100_000_000;

#[derive(Debug, Error)]
pub enum SmpError {
    #[error("budget exceeded: plan needs ~{entries:.3e} table entries (budget {budget})")]
    BudgetExceeded { entries: f64, budget: usize },
    #[error("window keys for L={l} do not fit in 64 bits")]
    WindowTooLong { l: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    /// Enumerate every syntactically valid window at each stage.
    Dense,
    /// Store only windows forward-reachable with positive probability.
    Reachable,
}

/// One table entry: the chosen action is the argmax of `q` (lowest index
/// on ties). Entries for windows that are impossible even from the
/// uniform prior are stored with zero q-values and `defined = false`;
/// they are never referenced with positive weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub action: usize,
    pub q: Vec<f64>,
    pub defined: bool,
}

impl Entry {
    pub fn value(&self) -> f64 {
        self.q.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
enum Table {
    Dense(Vec<Entry>),
    Sparse(HashMap<u64, Entry>),
}

#[derive(Debug, Clone)]
pub struct StageTable {
    /// Stage h in 1..=H-1.
    pub stage: usize,
    /// Window length min(L, h-1) of every key in this table.
    pub window_len: usize,
    table: Table,
}

impl StageTable {
    pub fn get(&self, key: u64) -> Option<&Entry> {
        match &self.table {
            Table::Dense(v) => v.get(key as usize),
            Table::Sparse(m) => m.get(&key),
        }
    }

    pub fn len(&self) -> usize {
        match &self.table {
            Table::Dense(v) => v.len(),
            Table::Sparse(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries in ascending key order.
    pub fn iter_sorted(&self) -> Vec<(u64, &Entry)> {
        match &self.table {
            Table::Dense(v) => v.iter().enumerate().map(|(k, e)| (k as u64, e)).collect(),
            Table::Sparse(m) => {
                let mut items: Vec<(u64, &Entry)> = m.iter().map(|(&k, e)| (k, e)).collect();
                items.sort_by_key(|&(k, _)| k);
                items
            }
        }
    }
}

/// The quasi-succinct policy produced by planning.
#[derive(Debug, Clone)]
pub struct SmpPolicy {
    pub window_length: usize,
    pub mode: PlanMode,
    /// Vhat_1(empty).
    pub value_estimate: f64,
    /// Stage tables for h = 1..=H-1, indexed by h-1.
    pub stages: Vec<StageTable>,
}

/// Packs a window into an integer key (see module docs).
pub fn pack_window(actions: &[usize], observations: &[usize], a_n: usize, o_n: usize) -> u64 {
    let mut a_digits: u64 = 0;
    let mut mult: u64 = 1;
    for &a in actions {
        a_digits += a as u64 * mult;
        mult *= a_n as u64;
    }
    let a_span = mult;
    let mut o_digits: u64 = 0;
    mult = 1;
    for &o in observations {
        o_digits += o as u64 * mult;
        mult *= o_n as u64;
    }
    a_digits + a_span * o_digits
}

/// Inverse of `pack_window` for a known window length.
pub fn unpack_window(key: u64, w: usize, a_n: usize, o_n: usize) -> (Vec<usize>, Vec<usize>) {
    let a_span = (a_n as u64).pow(w as u32);
    let mut a_digits = key % a_span;
    let mut o_digits = key / a_span;
    let mut actions = Vec::with_capacity(w);
    let mut observations = Vec::with_capacity(w);
    for _ in 0..w {
        actions.push((a_digits % a_n as u64) as usize);
        a_digits /= a_n as u64;
        observations.push((o_digits % o_n as u64) as usize);
        o_digits /= o_n as u64;
    }
    (actions, observations)
}

fn window_len_at(l: usize, stage: usize) -> usize {
    l.min(stage - 1)
}

/// The child window key after taking action a and seeing y from a window
/// of length w at stage h; the child lives at stage h+1 with length
/// min(L, h).
#[allow(clippy::too_many_arguments)]
fn child_key(
    key: u64,
    w: usize,
    a: usize,
    y: usize,
    l: usize,
    stage: usize,
    a_n: usize,
    o_n: usize,
) -> u64 {
    let (mut actions, mut observations) = unpack_window(key, w, a_n, o_n);
    actions.push(a);
    observations.push(y);
    let w2 = window_len_at(l, stage + 1);
    let start = actions.len() - w2;
    pack_window(&actions[start..], &observations[start..], a_n, o_n)
}

fn window_from_key(key: u64, w: usize, stage: usize, a_n: usize, o_n: usize) -> HistoryWindow {
    let (actions, observations) = unpack_window(key, w, a_n, o_n);
    HistoryWindow {
        stage,
        actions,
        observations,
    }
}

fn dense_size(a_n: usize, o_n: usize, w: usize) -> f64 {
    ((a_n * o_n) as f64).powi(w as i32)
}

/// Builds the stage-h table given the (already computed) stage-(h+1)
/// table. Each window's entry is independent, so the fill runs in
/// parallel; assembly is keyed by the enumeration order, which keeps the
/// result identical for any thread count.
fn fill_stage(
    pomdp: &Pomdp,
    l: usize,
    stage: usize,
    keys: &[u64],
    next: Option<&StageTable>,
) -> Vec<(u64, Entry)> {
    keys.par_iter()
        .map(|&key| (key, fill_window(pomdp, l, stage, key, next)))
        .collect()
}

fn fill_window(
    pomdp: &Pomdp,
    l: usize,
    stage: usize,
    key: u64,
    next: Option<&StageTable>,
) -> Entry {
    let a_n = pomdp.num_actions;
    let o_n = pomdp.num_observations;
    let w = window_len_at(l, stage);
    {
        let window = window_from_key(key, w, stage, a_n, o_n);
        match approx_belief(pomdp, &window) {
            Err(_) => Entry {
                action: 0,
                q: vec![0.0; a_n],
                defined: false,
            },
            Ok(belief) => {
                let mut q = vec![0.0; a_n];
                for (a, q_a) in q.iter_mut().enumerate() {
                    let pushed = crate::belief::push_forward(pomdp, &belief.probs, stage, a);
                    let obs = crate::belief::obs_dist(pomdp, &pushed, stage + 1);
                    let rewards = pomdp.reward(stage + 1);
                    let mut total = 0.0;
                    for (y, &p) in obs.iter().enumerate() {
                        if p <= 0.0 {
                            continue;
                        }
                        let cont = match next {
                            None => 0.0,
                            Some(table) => {
                                let ck = child_key(key, w, a, y, l, stage, a_n, o_n);
                                table
                                    .get(ck)
                                    .expect("positive-weight child window must be stored")
                                    .value()
                            }
                        };
                        total += p * (rewards[y] + cont);
                    }
                    *q_a = total;
                }
                let mut best = 0;
                for a in 1..a_n {
                    if q[a] > q[best] {
                        best = a;
                    }
                }
                Entry {
                    action: best,
                    q,
                    defined: true,
                }
            }
        }
    }
}

/// Runs the backward induction and returns the policy with its tables.
pub fn smp_plan(
    pomdp: &Pomdp,
    l: usize,
    mode: PlanMode,
    budget: usize,
) -> Result<SmpPolicy, SmpError> {
    let h_n = pomdp.horizon;
    let a_n = pomdp.num_actions;
    let o_n = pomdp.num_observations;
    let max_w = window_len_at(l, h_n - 1);
    if ((a_n * o_n) as f64).powi(max_w as i32) >= u64::MAX as f64 {
        return Err(SmpError::WindowTooLong { l });
    }

    // Which window keys exist per stage.
    let per_stage_keys: Vec<Vec<u64>> = match mode {
        PlanMode::Dense => {
            let mut estimate = 0.0;
            for stage in 1..h_n {
                estimate += dense_size(a_n, o_n, window_len_at(l, stage));
            }
            if estimate > budget as f64 {
                return Err(SmpError::BudgetExceeded {
                    entries: estimate,
                    budget,
                });
            }
            (1..h_n)
                .map(|stage| {
                    let n = dense_size(a_n, o_n, window_len_at(l, stage)) as u64;
                    (0..n).collect()
                })
                .collect()
        }
        PlanMode::Reachable => {
            let mut reach: Vec<HashSet<u64>> = vec![HashSet::new(); h_n];
            reach[1].insert(0);
            let mut count = 1usize;
            for stage in 1..(h_n - 1) {
                let keys: Vec<u64> = reach[stage].iter().copied().collect();
                let w = window_len_at(l, stage);
                for key in keys {
                    let window = window_from_key(key, w, stage, a_n, o_n);
                    let Ok(belief) = approx_belief(pomdp, &window) else {
                        continue;
                    };
                    for a in 0..a_n {
                        let pushed = crate::belief::push_forward(pomdp, &belief.probs, stage, a);
                        let obs = crate::belief::obs_dist(pomdp, &pushed, stage + 1);
                        for (y, &p) in obs.iter().enumerate() {
                            if p <= 0.0 {
                                continue;
                            }
                            let ck = child_key(key, w, a, y, l, stage, a_n, o_n);
                            if reach[stage + 1].insert(ck) {
                                count += 1;
                                if count > budget {
                                    return Err(SmpError::BudgetExceeded {
                                        entries: count as f64,
                                        budget,
                                    });
                                }
                            }
                        }
                    }
                }
            }
            (1..h_n)
                .map(|stage| {
                    let mut keys: Vec<u64> = reach[stage].iter().copied().collect();
                    keys.sort_unstable();
                    keys
                })
                .collect()
        }
    };

    // Backward sweep.
    let mut stages: Vec<Option<StageTable>> = vec![None; h_n - 1];
    for stage in (1..h_n).rev() {
        let next = if stage + 1 < h_n {
            stages[stage].as_ref()
        } else {
            None
        };
        let filled = fill_stage(pomdp, l, stage, &per_stage_keys[stage - 1], next);
        let w = window_len_at(l, stage);
        let table = match mode {
            PlanMode::Dense => Table::Dense(filled.into_iter().map(|(_, e)| e).collect()),
            PlanMode::Reachable => Table::Sparse(filled.into_iter().collect()),
        };
        stages[stage - 1] = Some(StageTable {
            stage,
            window_len: w,
            table,
        });
    }
    let stages: Vec<StageTable> = stages.into_iter().map(Option::unwrap).collect();
    let value_estimate = stages[0]
        .get(0)
        .expect("stage 1 has the empty window")
        .value();
    Ok(SmpPolicy {
        window_length: l,
        mode,
        value_estimate,
        stages,
    })
}

/// Action chosen for a history, with fallback metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActResult {
    pub action: usize,
    /// True when the window was missing from the table and the action
    /// came from the one-step-greedy fallback.
    pub fallback: bool,
}

/// Looks up the action for the truncated window of `history`. A missing
/// window (possible in reachable mode under off-policy play) triggers
/// on-demand computation of the approximate belief and a one-step-greedy
/// choice against the stage-(h+1) values; missing children count as 0.
pub fn smp_act(policy: &SmpPolicy, pomdp: &Pomdp, history: &History) -> ActResult {
    let stage = history.stage();
    assert!(stage < pomdp.horizon, "no action is taken at stage H");
    let a_n = pomdp.num_actions;
    let o_n = pomdp.num_observations;
    let w = window_len_at(policy.window_length, stage);
    let window = history.window(w);
    let key = pack_window(&window.actions, &window.observations, a_n, o_n);
    let table = &policy.stages[stage - 1];
    if let Some(entry) = table.get(key) {
        return ActResult {
            action: entry.action,
            fallback: false,
        };
    }
    let Ok(belief) = approx_belief(pomdp, &window) else {
        return ActResult {
            action: 0,
            fallback: true,
        };
    };
    let mut best = 0;
    let mut best_q = f64::NEG_INFINITY;
    for a in 0..a_n {
        let pushed = crate::belief::push_forward(pomdp, &belief.probs, stage, a);
        let obs = crate::belief::obs_dist(pomdp, &pushed, stage + 1);
        let rewards = pomdp.reward(stage + 1);
        let mut total = 0.0;
        for (y, &p) in obs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let cont = if stage + 1 < pomdp.horizon {
                let ck = child_key(key, w, a, y, policy.window_length, stage, a_n, o_n);
                policy.stages[stage].get(ck).map_or(0.0, Entry::value)
            } else {
                0.0
            };
            total += p * (rewards[y] + cont);
        }
        if total > best_q {
            best_q = total;
            best = a;
        }
    }
    ActResult {
        action: best,
        fallback: true,
    }
}

impl Policy for SmpPolicy {
    fn action_dist(&self, pomdp: &Pomdp, hist: &History) -> ActionDist {
        ActionDist::Pure(smp_act(self, pomdp, hist).action)
    }
}

// ---------------------------------------------------------------------
// Policy file format
// ---------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct StageFile {
    stage: usize,
    window_len: usize,
    /// (packed key, action, q-vector or null for undefined windows).
    entries: Vec<(u64, usize, Option<Vec<f64>>)>,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    window_length: usize,
    mode: PlanMode,
    value_estimate: f64,
    stages: Vec<StageFile>,
}

pub fn policy_to_json(policy: &SmpPolicy) -> String {
    let stages = policy
        .stages
        .iter()
        .map(|table| StageFile {
            stage: table.stage,
            window_len: table.window_len,
            entries: table
                .iter_sorted()
                .into_iter()
                .map(|(k, e)| {
                    (
                        k,
                        e.action,
                        if e.defined { Some(e.q.clone()) } else { None },
                    )
                })
                .collect(),
        })
        .collect();
    let file = PolicyFile {
        window_length: policy.window_length,
        mode: policy.mode,
        value_estimate: policy.value_estimate,
        stages,
    };
    serde_json::to_string(&file).expect("policy serialization cannot fail")
}

pub fn policy_from_json(text: &str, num_actions: usize) -> Result<SmpPolicy, String> {
    let file: PolicyFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let stages = file
        .stages
        .into_iter()
        .map(|s| {
            let map: HashMap<u64, Entry> = s
                .entries
                .into_iter()
                .map(|(k, action, q)| {
                    let entry = match q {
                        Some(q) => Entry {
                            action,
                            q,
                            defined: true,
                        },
                        None => Entry {
                            action,
                            q: vec![0.0; num_actions],
                            defined: false,
                        },
                    };
                    (k, entry)
                })
                .collect();
            StageTable {
                stage: s.stage,
                window_len: s.window_len,
                table: Table::Sparse(map),
            }
        })
        .collect();
    Ok(SmpPolicy {
        window_length: file.window_length,
        mode: file.mode,
        value_estimate: file.value_estimate,
        stages,
    })
}

// ---------------------------------------------------------------------
// Suboptimality report
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SuboptRow {
    pub l: usize,
    pub value_estimate: Option<f64>,
    pub policy_value: Option<f64>,
    pub policy_value_method: String,
    pub v_star: Option<f64>,
    pub gap: Option<f64>,
    pub error: Option<String>,
}

/// Plans at each window length and tabulates Vhat, the executed policy's
/// value (exact when the budget allows, Monte Carlo otherwise), the
/// optimum when available, and the gap. Budget failures fill the row's
/// error column and other rows continue.
pub fn suboptimality_report(
    pomdp: &Pomdp,
    l_values: &[usize],
    plan_budget: usize,
    exact_budget: usize,
    mc_episodes: usize,
    seed: u64,
) -> Vec<SuboptRow> {
    let v_star = solve_exact(pomdp, exact_budget).ok().map(|s| s.value);
    let mut rows = Vec::new();
    for &l in l_values {
        let row = match smp_plan(pomdp, l, PlanMode::Reachable, plan_budget) {
            Err(e) => SuboptRow {
                l,
                value_estimate: None,
                policy_value: None,
                policy_value_method: String::new(),
                v_star,
                gap: None,
                error: Some(e.to_string()),
            },
            Ok(policy) => {
                let (policy_value, method) = match eval_policy_exact(pomdp, &policy, exact_budget)
                {
                    Ok(v) => (Some(v), "exact".to_string()),
                    Err(PlanError::BudgetExceeded { .. }) => (
                        Some(eval_policy_mc(pomdp, &policy, mc_episodes, seed, 0.99).mean),
                        "mc".to_string(),
                    ),
                };
                SuboptRow {
                    l,
                    value_estimate: Some(policy.value_estimate),
                    policy_value,
                    policy_value_method: method,
                    v_star,
                    gap: v_star.and_then(|v| policy_value.map(|pv| v - pv)),
                    error: None,
                }
            }
        };
        rows.push(row);
    }
    rows
}
