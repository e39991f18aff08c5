//! Exact finite-horizon oracle: optimal values and policies by Bellman
//! recursion over the history tree, exact and Monte Carlo policy
//! evaluation, and trajectory simulation.
//!
//! The optimal value satisfies
//!
//! ```text
//! Q*_h(hist, a) = E_{y ~ O_{h+1}^T T_h(a) b(hist)} [ R_{h+1}(y) + V*_{h+1}(hist + (a, y)) ]
//! V*_h(hist)    = max_a Q*_h(hist, a),    V*_H = 0,
//! ```
//!
//! with argmax ties broken toward the lowest action index and
//! zero-probability branches pruned. Since V*_h depends on the history
//! only through the belief state, the recursion memoizes on the belief's
//! bit pattern; histories whose beliefs coincide share one node. The node
//! budget counts distinct explored nodes.

use crate::belief::{bayes_update_probs, obs_dist, push_forward};
use crate::model::{History, Pomdp, Trajectory};
use crate::rng::{sample_index, trial_rng};
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("budget exceeded: explored {nodes} history nodes (budget {budget})")]
    BudgetExceeded { nodes: usize, budget: usize },
}

/// Default history-node budget for the exact oracle.
pub const DEFAULT_EXACT_BUDGET: usize = 10_000_000;

/// Cumulative branch probabilities at or below this are pruned.
pub const BRANCH_PRUNE: f64 = 1e-15;

/// What a policy does at a given history: either a single action or a
/// distribution over actions.
#[derive(Debug, Clone)]
pub enum ActionDist {
    Pure(usize),
    Mixed(Vec<f64>),
}

/// A policy maps histories to (distributions over) actions.
pub trait Policy: Sync {
    fn action_dist(&self, pomdp: &Pomdp, hist: &History) -> ActionDist;
}

/// Deterministic table policy over full histories.
#[derive(Debug, Clone, Default)]
pub struct HistoryPolicy {
    pub actions: HashMap<History, usize>,
    /// Optional per-history optimal values, populated by the solver.
    pub values: HashMap<History, f64>,
    /// Action substituted for histories missing from the table.
    pub default_action: usize,
}

impl Policy for HistoryPolicy {
    fn action_dist(&self, _pomdp: &Pomdp, hist: &History) -> ActionDist {
        ActionDist::Pure(*self.actions.get(hist).unwrap_or(&self.default_action))
    }
}

/// Plays one fixed action everywhere.
pub struct ConstantPolicy(pub usize);

impl Policy for ConstantPolicy {
    fn action_dist(&self, _pomdp: &Pomdp, _hist: &History) -> ActionDist {
        ActionDist::Pure(self.0)
    }
}

/// Uniformly random action at every step.
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn action_dist(&self, pomdp: &Pomdp, _hist: &History) -> ActionDist {
        ActionDist::Mixed(vec![1.0 / pomdp.num_actions as f64; pomdp.num_actions])
    }
}

/// A deterministic pseudorandom history-dependent policy; useful as an
/// arbitrary test opponent.
pub struct HashPolicy {
    pub seed: u64,
}

impl Policy for HashPolicy {
    fn action_dist(&self, pomdp: &Pomdp, hist: &History) -> ActionDist {
        use std::hash::{Hash, Hasher};
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        self.seed.hash(&mut hasher);
        hist.hash(&mut hasher);
        ActionDist::Pure((hasher.finish() % pomdp.num_actions as u64) as usize)
    }
}

/// Monte Carlo value estimate with a Hoeffding confidence half-width.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub samples: usize,
    pub confidence: f64,
}

type BeliefKey = (usize, Vec<u64>);

fn belief_key(h: usize, probs: &[f64]) -> BeliefKey {
    (h, probs.iter().map(|p| p.to_bits()).collect())
}

#[derive(Debug, Clone)]
struct Node {
    value: f64,
    q: Vec<f64>,
    best: usize,
}

/// Result of the exact solve: the optimal value plus the memoized value
/// table, from which per-history actions are recovered on demand.
#[derive(Debug)]
pub struct ExactSolution {
    pub value: f64,
    nodes: HashMap<BeliefKey, Node>,
    pub explored_nodes: usize,
}

struct Solver<'a> {
    pomdp: &'a Pomdp,
    memo: HashMap<BeliefKey, Node>,
    nodes: usize,
    budget: usize,
}

impl<'a> Solver<'a> {
    fn value(&mut self, h: usize, probs: &[f64]) -> Result<f64, PlanError> {
        if h == self.pomdp.horizon {
            return Ok(0.0);
        }
        let key = belief_key(h, probs);
        if let Some(node) = self.memo.get(&key) {
            return Ok(node.value);
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(PlanError::BudgetExceeded {
                nodes: self.nodes,
                budget: self.budget,
            });
        }
        let a_n = self.pomdp.num_actions;
        let mut q = vec![0.0; a_n];
        for (a, q_a) in q.iter_mut().enumerate() {
            let pushed = push_forward(self.pomdp, probs, h, a);
            let obs = obs_dist(self.pomdp, &pushed, h + 1);
            let rewards = self.pomdp.reward(h + 1);
            let mut total = 0.0;
            for (y, &p) in obs.iter().enumerate() {
                if p <= BRANCH_PRUNE {
                    continue;
                }
                let child = bayes_update_probs(self.pomdp, &pushed, h + 1, y)
                    .expect("positive-probability branch cannot be impossible");
                let v = self.value(h + 1, &child)?;
                total += p * (rewards[y] + v);
            }
            *q_a = total;
        }
        let mut best = 0;
        for a in 1..a_n {
            if q[a] > q[best] {
                best = a;
            }
        }
        let value = q[best];
        self.memo.insert(key, Node { value, q, best });
        Ok(value)
    }
}

/// Computes the optimal value V*_1(empty) by memoized Bellman recursion.
pub fn solve_exact(pomdp: &Pomdp, budget: usize) -> Result<ExactSolution, PlanError> {
    let mut solver = Solver {
        pomdp,
        memo: HashMap::new(),
        nodes: 0,
        budget,
    };
    let value = solver.value(1, &pomdp.initial_belief.clone())?;
    Ok(ExactSolution {
        value,
        nodes: solver.memo,
        explored_nodes: solver.nodes,
    })
}

impl ExactSolution {
    /// The stored node for a positive-probability history, if present.
    fn node_for(&self, pomdp: &Pomdp, hist: &History) -> Option<&Node> {
        let mut probs = pomdp.initial_belief.clone();
        for (i, (&a, &y)) in hist.actions.iter().zip(&hist.observations).enumerate() {
            let h = i + 1;
            let pushed = push_forward(pomdp, &probs, h, a);
            probs = bayes_update_probs(pomdp, &pushed, h + 1, y).ok()?;
        }
        self.nodes.get(&belief_key(hist.stage(), &probs))
    }

    /// Optimal action for a history (lowest index on Q ties).
    pub fn best_action(&self, pomdp: &Pomdp, hist: &History) -> Option<usize> {
        self.node_for(pomdp, hist).map(|n| n.best)
    }

    pub fn q_values(&self, pomdp: &Pomdp, hist: &History) -> Option<Vec<f64>> {
        self.node_for(pomdp, hist).map(|n| n.q.clone())
    }

    pub fn value_at(&self, pomdp: &Pomdp, hist: &History) -> Option<f64> {
        self.node_for(pomdp, hist).map(|n| n.value)
    }

    /// Materializes the optimal policy over every positive-probability
    /// history (under all action sequences), within a node budget.
    pub fn history_policy(
        &self,
        pomdp: &Pomdp,
        budget: usize,
    ) -> Result<HistoryPolicy, PlanError> {
        let mut policy = HistoryPolicy::default();
        let mut hist = History::empty();
        let mut probs = pomdp.initial_belief.clone();
        self.walk(pomdp, &mut hist, &mut probs, &mut policy, budget)?;
        Ok(policy)
    }

    fn walk(
        &self,
        pomdp: &Pomdp,
        hist: &mut History,
        probs: &mut Vec<f64>,
        policy: &mut HistoryPolicy,
        budget: usize,
    ) -> Result<(), PlanError> {
        let h = hist.stage();
        let node = self
            .nodes
            .get(&belief_key(h, probs))
            .expect("every reachable history has a stored node");
        policy.actions.insert(hist.clone(), node.best);
        policy.values.insert(hist.clone(), node.value);
        if policy.actions.len() > budget {
            return Err(PlanError::BudgetExceeded {
                nodes: policy.actions.len(),
                budget,
            });
        }
        if h == pomdp.horizon - 1 {
            return Ok(());
        }
        for a in 0..pomdp.num_actions {
            let pushed = push_forward(pomdp, probs, h, a);
            let obs = obs_dist(pomdp, &pushed, h + 1);
            for y in 0..pomdp.num_observations {
                if obs[y] <= BRANCH_PRUNE {
                    continue;
                }
                let mut child = bayes_update_probs(pomdp, &pushed, h + 1, y)
                    .expect("positive-probability branch");
                hist.push(a, y);
                std::mem::swap(probs, &mut child);
                self.walk(pomdp, hist, probs, policy, budget)?;
                std::mem::swap(probs, &mut child);
                hist.pop();
            }
        }
        Ok(())
    }

    /// Bellman consistency over all stored nodes: V = max_a Q(a).
    pub fn bellman_consistency_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for node in self.nodes.values() {
            let max_q = node.q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max((max_q - node.value).abs());
        }
        worst
    }
}

/// Exact value of a policy: V^pi_1(empty) by forward recursion over the
/// policy's positive-probability histories.
pub fn eval_policy_exact(
    pomdp: &Pomdp,
    policy: &dyn Policy,
    budget: usize,
) -> Result<f64, PlanError> {
    let mut nodes = 0usize;
    let mut hist = History::empty();
    eval_rec(
        pomdp,
        policy,
        &mut hist,
        &pomdp.initial_belief.clone(),
        &mut nodes,
        budget,
    )
}

fn eval_rec(
    pomdp: &Pomdp,
    policy: &dyn Policy,
    hist: &mut History,
    probs: &[f64],
    nodes: &mut usize,
    budget: usize,
) -> Result<f64, PlanError> {
    let h = hist.stage();
    if h == pomdp.horizon {
        return Ok(0.0);
    }
    *nodes += 1;
    if *nodes > budget {
        return Err(PlanError::BudgetExceeded {
            nodes: *nodes,
            budget,
        });
    }
    let dist = policy.action_dist(pomdp, hist);
    let weights: Vec<(usize, f64)> = match dist {
        ActionDist::Pure(a) => vec![(a, 1.0)],
        ActionDist::Mixed(w) => w
            .into_iter()
            .enumerate()
            .filter(|&(_, p)| p > 0.0)
            .collect(),
    };
    let mut value = 0.0;
    for (a, wa) in weights {
        let pushed = push_forward(pomdp, probs, h, a);
        let obs = obs_dist(pomdp, &pushed, h + 1);
        let rewards = pomdp.reward(h + 1);
        let mut total = 0.0;
        for y in 0..pomdp.num_observations {
            let p = obs[y];
            if p <= BRANCH_PRUNE {
                continue;
            }
            let child =
                bayes_update_probs(pomdp, &pushed, h + 1, y).expect("positive-probability branch");
            hist.push(a, y);
            let v = eval_rec(pomdp, policy, hist, &child, nodes, budget)?;
            hist.pop();
            total += p * (rewards[y] + v);
        }
        value += wa * total;
    }
    Ok(value)
}

/// Samples one trajectory under `policy`, drawing from the ChaCha stream
/// (seed, stream).
pub fn simulate_stream(pomdp: &Pomdp, policy: &dyn Policy, seed: u64, stream: u64) -> Trajectory {
    let mut rng = trial_rng(seed, stream);
    let mut hist = History::empty();
    let mut states = Vec::with_capacity(pomdp.horizon);
    let mut actions = Vec::with_capacity(pomdp.horizon - 1);
    let mut observations = Vec::with_capacity(pomdp.horizon - 1);
    let mut rewards = Vec::with_capacity(pomdp.horizon - 1);
    let mut x = sample_index(&mut rng, &pomdp.initial_belief);
    states.push(x);
    let mut total = 0.0;
    for h in 1..pomdp.horizon {
        let a = match policy.action_dist(pomdp, &hist) {
            ActionDist::Pure(a) => a,
            ActionDist::Mixed(w) => sample_index(&mut rng, &w),
        };
        x = sample_index(&mut rng, &pomdp.transition(h, a)[x]);
        let y = sample_index(&mut rng, &pomdp.emission(h + 1)[x]);
        let r = pomdp.reward(h + 1)[y];
        states.push(x);
        actions.push(a);
        observations.push(y);
        rewards.push(r);
        total += r;
        hist.push(a, y);
    }
    Trajectory {
        states,
        actions,
        observations,
        rewards,
        total_reward: total,
    }
}

/// Samples one trajectory; stream 0 of the given seed.
pub fn simulate(pomdp: &Pomdp, policy: &dyn Policy, seed: u64) -> Trajectory {
    simulate_stream(pomdp, policy, seed, 0)
}

/// Monte Carlo policy value over independently seeded episodes. The
/// half-width is a Hoeffding bound for totals in [0, H-1] at the requested
/// confidence. Deterministic given the seed, for any thread count.
pub fn eval_policy_mc(
    pomdp: &Pomdp,
    policy: &dyn Policy,
    num_episodes: usize,
    seed: u64,
    confidence: f64,
) -> ValueEstimate {
    assert!(num_episodes >= 1);
    assert!((0.0..1.0).contains(&confidence) && confidence > 0.0);
    let totals: Vec<f64> = (0..num_episodes as u64)
        .into_par_iter()
        .map(|i| simulate_stream(pomdp, policy, seed, i).total_reward)
        .collect();
    let mut sum = 0.0;
    for t in &totals {
        sum += t;
    }
    let mean = sum / num_episodes as f64;
    let delta = 1.0 - confidence;
    let range = pomdp.reward_range();
    let half_width = range * ((2.0 / delta).ln() / (2.0 * num_episodes as f64)).sqrt();
    ValueEstimate {
        mean,
        half_width,
        samples: num_episodes,
        confidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;

    fn zero_reward_model() -> Pomdp {
        gen::gen_contraction_lb(0.1, 4).unwrap()
    }

    #[test]
    fn zero_rewards_mean_zero_value() {
        let m = zero_reward_model();
        let sol = solve_exact(&m, DEFAULT_EXACT_BUDGET).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(eval_policy_exact(&m, &ConstantPolicy(0), 1 << 20).unwrap(), 0.0);
        let est = eval_policy_mc(&m, &ConstantPolicy(0), 50, 1, 0.99);
        assert_eq!(est.mean, 0.0);
    }

    /// Brute force: max over all deterministic history-indexed policies,
    /// each evaluated by full latent-path enumeration. Fully independent
    /// of the Bellman recursion.
    fn brute_force_optimum(pomdp: &Pomdp) -> f64 {
        // Collect every positive-probability history at stages 1..H-1.
        let mut decision_points: Vec<History> = Vec::new();
        let mut frontier = vec![History::empty()];
        for _h in 1..pomdp.horizon {
            decision_points.extend(frontier.iter().cloned());
            let mut next = Vec::new();
            for hist in &frontier {
                for a in 0..pomdp.num_actions {
                    for y in 0..pomdp.num_observations {
                        let mut child = hist.clone();
                        child.push(a, y);
                        next.push(child);
                    }
                }
            }
            frontier = next;
        }
        let n = decision_points.len();
        let a_n = pomdp.num_actions;
        let mut best = f64::NEG_INFINITY;
        let mut assignment = vec![0usize; n];
        loop {
            let mut table = HashMap::new();
            for (hist, &a) in decision_points.iter().zip(&assignment) {
                table.insert(hist.clone(), a);
            }
            let policy = HistoryPolicy {
                actions: table,
                values: HashMap::new(),
                default_action: 0,
            };
            best = best.max(latent_path_value(pomdp, &policy));
            // Increment the mixed-radix counter over action assignments.
            let mut i = 0;
            loop {
                if i == n {
                    return best;
                }
                assignment[i] += 1;
                if assignment[i] < a_n {
                    break;
                }
                assignment[i] = 0;
                i += 1;
            }
        }
    }

    /// Expected total reward of a deterministic policy by enumerating all
    /// (state sequence, observation sequence) pairs.
    fn latent_path_value(pomdp: &Pomdp, policy: &HistoryPolicy) -> f64 {
        fn rec(
            pomdp: &Pomdp,
            policy: &HistoryPolicy,
            hist: &mut History,
            x: usize,
            weight: f64,
            reward_so_far: f64,
        ) -> f64 {
            let h = hist.stage();
            if h == pomdp.horizon {
                return weight * reward_so_far;
            }
            let a = *policy.actions.get(hist).unwrap_or(&0);
            let mut acc = 0.0;
            for x2 in 0..pomdp.num_states {
                let pt = pomdp.transition(h, a)[x][x2];
                if pt == 0.0 {
                    continue;
                }
                for y in 0..pomdp.num_observations {
                    let pe = pomdp.emission(h + 1)[x2][y];
                    if pe == 0.0 {
                        continue;
                    }
                    hist.push(a, y);
                    acc += rec(
                        pomdp,
                        policy,
                        hist,
                        x2,
                        weight * pt * pe,
                        reward_so_far + pomdp.reward(h + 1)[y],
                    );
                    hist.pop();
                }
            }
            acc
        }
        let mut total = 0.0;
        for x in 0..pomdp.num_states {
            if pomdp.initial_belief[x] > 0.0 {
                total += rec(
                    pomdp,
                    policy,
                    &mut History::empty(),
                    x,
                    pomdp.initial_belief[x],
                    0.0,
                );
            }
        }
        total
    }

    #[test]
    fn solve_exact_matches_policy_enumeration() {
        for seed in 0..5 {
            let m = gen::gen_random_observable(2, 2, 3, 0.6, seed).unwrap();
            let sol = solve_exact(&m, DEFAULT_EXACT_BUDGET).unwrap();
            let brute = brute_force_optimum(&m);
            assert!(
                (sol.value - brute).abs() < 1e-9,
                "seed {seed}: dp {} vs brute {brute}",
                sol.value
            );
        }
    }

    #[test]
    fn optimal_policy_self_consistency() {
        let m = gen::gen_random_observable(3, 2, 4, 0.5, 9).unwrap();
        let sol = solve_exact(&m, DEFAULT_EXACT_BUDGET).unwrap();
        let policy = sol.history_policy(&m, 1 << 20).unwrap();
        let v = eval_policy_exact(&m, &policy, 1 << 20).unwrap();
        assert!((v - sol.value).abs() < 1e-12);
    }

    #[test]
    fn optimality_against_random_policies() {
        for seed in [21, 22, 23] {
            let m = gen::gen_random_observable(3, 2, 4, 0.5, seed).unwrap();
            let sol = solve_exact(&m, DEFAULT_EXACT_BUDGET).unwrap();
            for k in 0..100 {
                let policy = HashPolicy { seed: k };
                let v = eval_policy_exact(&m, &policy, 1 << 20).unwrap();
                assert!(
                    v <= sol.value + 1e-9,
                    "instance {seed}: policy {k} beats the optimum"
                );
            }
        }
    }

    #[test]
    fn bellman_consistency_holds_at_every_node() {
        let m = gen::gen_random_observable(3, 2, 4, 0.4, 2).unwrap();
        let sol = solve_exact(&m, DEFAULT_EXACT_BUDGET).unwrap();
        assert!(sol.bellman_consistency_error() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let m = gen::gen_random_observable(3, 2, 5, 0.5, 3).unwrap();
        match solve_exact(&m, 10) {
            Err(PlanError::BudgetExceeded { nodes, budget: 10 }) => assert!(nodes > 10),
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    fn deterministic_chain() -> Pomdp {
        // Point-mass kernels everywhere: a unique trajectory.
        Pomdp {
            horizon: 3,
            num_states: 2,
            num_actions: 1,
            num_observations: 2,
            initial_belief: vec![1.0, 0.0],
            transitions: vec![
                vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]]],
                vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            ],
            emissions: vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ],
            rewards: vec![vec![0.25, 0.5], vec![0.125, 1.0]],
        }
    }

    #[test]
    fn deterministic_model_has_unique_trajectory() {
        let m = deterministic_chain();
        // x1=0 -> x2=1 (obs 1, reward 0.5) -> x3=1 (obs 1, reward 1.0).
        let t = simulate(&m, &ConstantPolicy(0), 4);
        assert_eq!(t.states, vec![0, 1, 1]);
        assert_eq!(t.observations, vec![1, 1]);
        assert_eq!(t.total_reward, 1.5);
        let est = eval_policy_mc(&m, &ConstantPolicy(0), 25, 77, 0.99);
        assert_eq!(est.mean, 1.5);
        let expected_hw = 2.0 * ((2.0f64 / 0.01).ln() / 50.0).sqrt();
        assert!((est.half_width - expected_hw).abs() < 1e-12);
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let m = gen::gen_random_observable(3, 2, 5, 0.5, 5).unwrap();
        let a = simulate(&m, &UniformPolicy, 42);
        let b = simulate(&m, &UniformPolicy, 42);
        assert_eq!(a, b);
        let c = simulate(&m, &UniformPolicy, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn state_visit_frequencies_match_chain_marginals() {
        let m = gen::gen_random_observable(3, 1, 4, 0.5, 13).unwrap();
        // Exact marginals by matrix propagation under the single action.
        let mut marginals = vec![m.initial_belief.clone()];
        for h in 1..m.horizon {
            marginals.push(push_forward(&m, &marginals[h - 1], h, 0));
        }
        let n = 100_000usize;
        let mut counts = vec![vec![0usize; m.num_states]; m.horizon];
        for i in 0..n {
            let t = simulate_stream(&m, &ConstantPolicy(0), 99, i as u64);
            for (h, &x) in t.states.iter().enumerate() {
                counts[h][x] += 1;
            }
        }
        for h in 0..m.horizon {
            for x in 0..m.num_states {
                let p = marginals[h][x];
                let freq = counts[h][x] as f64 / n as f64;
                let sigma = (p * (1.0 - p) / n as f64).sqrt().max(1e-9);
                assert!(
                    (freq - p).abs() <= 3.0 * sigma + 1e-9,
                    "h={h} x={x}: freq {freq} vs p {p}"
                );
            }
        }
    }

    #[test]
    fn smp_policy_mc_matches_exact_value() {
        let m = gen::gen_random_observable(3, 2, 4, 0.5, 17).unwrap();
        let plan =
            crate::smp::smp_plan(&m, 1, crate::smp::PlanMode::Dense, 1 << 20).unwrap();
        let exact = eval_policy_exact(&m, &plan, 1 << 20).unwrap();
        let est = eval_policy_mc(&m, &plan, 4000, 23, 0.99);
        assert!(
            (est.mean - exact).abs() <= est.half_width,
            "mc {} vs exact {exact} (half-width {})",
            est.mean,
            est.half_width
        );
    }

    #[test]
    fn mc_agrees_with_exact_within_hoeffding() {
        let m = gen::gen_random_observable(3, 2, 4, 0.5, 31).unwrap();
        let exact = eval_policy_exact(&m, &HashPolicy { seed: 8 }, 1 << 20).unwrap();
        let mut covered = 0;
        for rep in 0..100 {
            let est = eval_policy_mc(&m, &HashPolicy { seed: 8 }, 400, rep, 0.99);
            if (est.mean - exact).abs() <= est.half_width {
                covered += 1;
            }
        }
        assert!(covered >= 99, "covered only {covered}/100");
    }
}
