//! Instance generators: the 3SAT clause-checking POMDP, the Hadamard
//! weak-observability POMDP, the belief-contraction lower-bound POMDP,
//! random observable instances, and a few small built-in channels.
//!
//! Every generator output passes `model::validate`, and generators with a
//! closed-form observability record it in their metadata (tagged
//! closed-form, cross-checked against the exact LP in tests).

use crate::model::Pomdp;
use crate::observability::{identity_mix_channel, null_channel};
use crate::rng::{dirichlet, trial_rng};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cap on total stored floats (transitions + emissions + rewards).
pub const DEFAULT_SIZE_BUDGET: usize = 20_000_000;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("size budget exceeded: S={s}, A={a}, H={h} needs {floats:.3e} floats (budget {budget})")]
    SizeBudgetExceeded {
        s: usize,
        a: usize,
        h: usize,
        floats: f64,
        budget: usize,
    },
    #[error("unknown example name: {0}")]
    UnknownExample(String),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("DIMACS parse error: {0}")]
    Dimacs(String),
}

// ---------------------------------------------------------------------
// CNF formulas
// ---------------------------------------------------------------------

/// A 3SAT formula: clauses of at most three signed literals
/// (+-(variable index), 1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfFormula {
    pub num_vars: usize,
    pub clauses: Vec<Vec<i32>>,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Vec<i32>>) -> Result<Self, GenError> {
        for (c, clause) in clauses.iter().enumerate() {
            if clause.is_empty() {
                return Err(GenError::BadParams(format!("clause {c} is empty")));
            }
            if clause.len() > 3 {
                return Err(GenError::BadParams(format!(
                    "clause {c} has {} literals, at most 3 allowed",
                    clause.len()
                )));
            }
            for &lit in clause {
                let var = lit.unsigned_abs() as usize;
                if lit == 0 || var > num_vars {
                    return Err(GenError::BadParams(format!(
                        "clause {c} has out-of-range literal {lit}"
                    )));
                }
            }
        }
        Ok(CnfFormula { num_vars, clauses })
    }

    /// True when `assignment[v]` (0-based) satisfies the clause.
    fn clause_satisfied(&self, clause: usize, assignment: impl Fn(usize) -> Option<bool>) -> bool {
        self.clauses[clause].iter().any(|&lit| {
            let var = lit.unsigned_abs() as usize - 1;
            match assignment(var) {
                Some(value) => (lit > 0) == value,
                None => false,
            }
        })
    }
}

/// Parses the simplified DIMACS CNF format: comment lines start with 'c',
/// one "p cnf <vars> <clauses>" line, then 0-terminated clauses.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, GenError> {
    let mut num_vars = None;
    let mut declared_clauses = 0usize;
    let mut clauses: Vec<Vec<i32>> = Vec::new();
    let mut current: Vec<i32> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('p') {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "cnf" {
                return Err(GenError::Dimacs(format!("bad problem line: {line}")));
            }
            num_vars = Some(
                parts[1]
                    .parse::<usize>()
                    .map_err(|e| GenError::Dimacs(e.to_string()))?,
            );
            declared_clauses = parts[2]
                .parse::<usize>()
                .map_err(|e| GenError::Dimacs(e.to_string()))?;
            continue;
        }
        if num_vars.is_none() {
            return Err(GenError::Dimacs(format!(
                "clause data before problem line: {line}"
            )));
        }
        for tok in line.split_whitespace() {
            let lit: i32 = tok
                .parse()
                .map_err(|_| GenError::Dimacs(format!("bad literal: {tok}")))?;
            if lit == 0 {
                clauses.push(std::mem::take(&mut current));
            } else {
                current.push(lit);
            }
        }
    }
    if !current.is_empty() {
        clauses.push(current);
    }
    let num_vars = num_vars.ok_or_else(|| GenError::Dimacs("missing problem line".into()))?;
    if declared_clauses != 0 && clauses.len() != declared_clauses {
        return Err(GenError::Dimacs(format!(
            "expected {declared_clauses} clauses, found {}",
            clauses.len()
        )));
    }
    CnfFormula::new(num_vars, clauses)
}

// ---------------------------------------------------------------------
// Clause-checking hardness instance
// ---------------------------------------------------------------------

/// Parameters for the clause-checking POMDP. Any of the three counts may
/// be overridden for desk-scale instances; the certificates hold for any
/// trial count.
#[derive(Debug, Clone, Default)]
pub struct SatHardParams {
    pub gamma: f64,
    pub trial_count: Option<usize>,
    pub block_size: Option<usize>,
    pub steps_per_trial: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SatHardMeta {
    pub n_original: usize,
    /// Number of variables after padding with dummy always-true variables
    /// so that block_size * steps_per_trial covers all of them exactly.
    pub n_padded: usize,
    pub m: usize,
    pub gamma: f64,
    pub block_size: usize,
    pub steps_per_trial: usize,
    pub trial_count: usize,
    /// ceil(2 n^3 exp(2 sqrt(gamma n))) for the padded n, the trial count
    /// used when no override is supplied; recorded either way.
    pub default_trial_count: f64,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Row-major flattening of (trial, failed, clause, step, satisfied).
    pub state_layout: String,
    /// Closed-form per-step observability of the in-trial channels; the
    /// terminal step is fully revealing, so the model minimum equals it.
    pub gamma_closed_form: f64,
    pub value_if_satisfiable: f64,
    /// (1 - (1/m)(1-gamma)^steps)^T; the optimal value of an
    /// unsatisfiable instance is at most this.
    pub unsat_value_upper_bound: f64,
}

fn default_trial_count(n: usize, gamma: f64) -> f64 {
    (2.0 * (n as f64).powi(3) * (2.0 * (gamma * n as f64).sqrt()).exp()).ceil()
}

/// Iterates n -> block(n) * steps(n) with block = ceil(sqrt(gamma n)) and
/// steps = ceil(sqrt(n / gamma)) until the product equals n.
fn pad_vars(n0: usize, gamma: f64) -> Result<(usize, usize, usize), GenError> {
    let mut n = n0.max(1);
    for _ in 0..10_000 {
        let block = (gamma * n as f64).sqrt().ceil() as usize;
        let steps = ((n as f64) / gamma).sqrt().ceil() as usize;
        let product = block * steps;
        if product == n {
            return Ok((n, block, steps));
        }
        n = product;
    }
    Err(GenError::BadParams(format!(
        "variable padding did not stabilize from n={n0}, gamma={gamma}"
    )))
}

/// Builds the clause-checking POMDP M_(phi, gamma). State components are
/// (trial t in 0..=T, failed bit, clause i in 0..m, in-trial step j,
/// satisfied bit); each action assigns one block of variables. Trial ends
/// redraw the clause uniformly; the terminal step reveals the state so
/// the final reward 1 - failed is a function of the observation.
pub fn gen_sat_hard(
    formula: &CnfFormula,
    params: &SatHardParams,
    size_budget: usize,
) -> Result<(Pomdp, SatHardMeta), GenError> {
    let gamma = params.gamma;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(GenError::BadParams(format!("gamma {gamma} outside (0, 1)")));
    }
    if formula.clauses.is_empty() {
        return Err(GenError::BadParams("formula has no clauses".into()));
    }
    let (n_padded, block_size, steps_per_trial) =
        match (params.block_size, params.steps_per_trial) {
            (Some(b), Some(s)) => {
                if b * s < formula.num_vars {
                    return Err(GenError::BadParams(format!(
                        "block_size {b} * steps_per_trial {s} < n = {}",
                        formula.num_vars
                    )));
                }
                (b * s, b, s)
            }
            (None, None) => pad_vars(formula.num_vars, gamma)?,
            _ => {
                return Err(GenError::BadParams(
                    "block_size and steps_per_trial must be overridden together".into(),
                ))
            }
        };
    let trials = match params.trial_count {
        Some(t) if t >= 1 => t,
        Some(_) => return Err(GenError::BadParams("trial_count must be >= 1".into())),
        None => {
            let t = default_trial_count(n_padded, gamma);
            if t > 1e6 {
                return Err(GenError::BadParams(format!(
                    "default trial count {t:.3e} is not materializable; override --trials"
                )));
            }
            t as usize
        }
    };
    if block_size > 20 {
        return Err(GenError::BadParams(format!(
            "block_size {block_size} gives 2^{block_size} actions"
        )));
    }
    let m = formula.clauses.len();
    let s_n = (trials + 1) * 2 * m * steps_per_trial * 2;
    let a_n = 1usize << block_size;
    let o_n = s_n;
    let horizon = trials * steps_per_trial + 1;
    let floats = (horizon - 1) as f64 * (a_n as f64 * (s_n as f64).powi(2) + (s_n * o_n + o_n) as f64);
    if floats > size_budget as f64 {
        return Err(GenError::SizeBudgetExceeded {
            s: s_n,
            a: a_n,
            h: horizon,
            floats,
            budget: size_budget,
        });
    }

    // Row-major state index of (t, f, i, j, s).
    let index = |t: usize, f: usize, i: usize, j: usize, s: usize| -> usize {
        ((((t * 2) + f) * m + i) * steps_per_trial + j) * 2 + s
    };

    // g = does action `a`, read as an assignment to block `j`, satisfy
    // clause `i`? Bit k of `a` is variable j*block_size + k (0-based).
    // Dummy padded variables belong to no clause.
    let block_satisfies = |i: usize, j: usize, a: usize| -> bool {
        formula.clause_satisfied(i, |var| {
            let lo = j * block_size;
            if var >= lo && var < lo + block_size {
                Some((a >> (var - lo)) & 1 == 1)
            } else {
                None
            }
        })
    };

    let mut transitions = Vec::with_capacity(horizon - 1);
    for h in 1..horizon {
        let trial_at_h = (h - 1) / steps_per_trial;
        let step_at_h = (h - 1) % steps_per_trial;
        let mut per_action = Vec::with_capacity(a_n);
        for a in 0..a_n {
            let mut kernel = vec![vec![0.0; s_n]; s_n];
            for t in 0..=trials {
                for f in 0..2 {
                    for i in 0..m {
                        for j in 0..steps_per_trial {
                            for s in 0..2 {
                                let from = index(t, f, i, j, s);
                                if t == trials || t != trial_at_h || j != step_at_h {
                                    // Terminal or off-schedule: hold.
                                    kernel[from][from] = 1.0;
                                    continue;
                                }
                                let g = block_satisfies(i, j, a);
                                let sat = s == 1 || g;
                                if j + 1 < steps_per_trial {
                                    let to = index(t, f, i, j + 1, usize::from(sat));
                                    kernel[from][to] = 1.0;
                                } else {
                                    let f2 = if f == 1 || !sat { 1 } else { 0 };
                                    for i2 in 0..m {
                                        let to = index(t + 1, f2, i2, 0, 0);
                                        kernel[from][to] += 1.0 / m as f64;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            per_action.push(kernel);
        }
        transitions.push(per_action);
    }

    let mix = identity_mix_channel(s_n, gamma);
    let identity: Vec<Vec<f64>> = (0..s_n)
        .map(|x| {
            let mut row = vec![0.0; s_n];
            row[x] = 1.0;
            row
        })
        .collect();
    let mut emissions = Vec::with_capacity(horizon - 1);
    for h in 2..=horizon {
        emissions.push(if h == horizon { identity.clone() } else { mix.clone() });
    }

    let mut rewards = vec![vec![0.0; o_n]; horizon - 1];
    for y in 0..o_n {
        // Decode the failed bit of the (state-valued) terminal observation.
        let f = (y / (2 * m * steps_per_trial)) % 2;
        rewards[horizon - 2][y] = 1.0 - f as f64;
    }

    let mut initial_belief = vec![0.0; s_n];
    for i in 0..m {
        initial_belief[index(0, 0, i, 0, 0)] = 1.0 / m as f64;
    }

    let pomdp = Pomdp {
        horizon,
        num_states: s_n,
        num_actions: a_n,
        num_observations: o_n,
        initial_belief,
        transitions,
        emissions,
        rewards,
    };
    let unsat_bound =
        (1.0 - (1.0 / m as f64) * (1.0 - gamma).powi(steps_per_trial as i32)).powi(trials as i32);
    let meta = SatHardMeta {
        n_original: formula.num_vars,
        n_padded,
        m,
        gamma,
        block_size,
        steps_per_trial,
        trial_count: trials,
        default_trial_count: default_trial_count(n_padded, gamma),
        num_states: s_n,
        num_actions: a_n,
        horizon,
        state_layout: "index(t,f,i,j,s) = ((((t*2)+f)*m+i)*steps_per_trial+j)*2+s".into(),
        gamma_closed_form: gamma,
        value_if_satisfiable: 1.0,
        unsat_value_upper_bound: unsat_bound,
    };
    Ok((pomdp, meta))
}

// ---------------------------------------------------------------------
// Hadamard weak-observability instance
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HadamardMeta {
    pub n: usize,
    pub m: usize,
    /// Sylvester-Hadamard dimension: the smallest power of two >= m+1.
    /// Padding grows the observation alphabet, not the clause list, so
    /// the uniform clause draw and the 1 - 1/m bound use the original m.
    pub hadamard_dim: usize,
    pub num_states: usize,
    pub num_observations: usize,
    pub horizon: usize,
    pub weak_gamma_l1: f64,
    pub value_if_satisfiable: f64,
    pub unsat_value_upper_bound: f64,
}

/// Entry (r, c) of the Sylvester-Hadamard matrix: +1 iff popcount(r & c)
/// is even.
fn hadamard_sign(r: usize, c: usize) -> bool {
    (r & c).count_ones() % 2 == 0
}

/// Builds the weakly-observable clause POMDP. States are (clause half j2
/// in 0..2m, variable index i in 0..n, satisfied bit); observations carry
/// (Hadamard column, i, bit) with the column uniform over the positive
/// (even j2) or negative (odd j2) entries of the clause's Hadamard row.
/// The final reward reads the satisfied bit off the observation.
pub fn gen_hadamard_sat(
    formula: &CnfFormula,
    size_budget: usize,
) -> Result<(Pomdp, HadamardMeta), GenError> {
    let n = formula.num_vars;
    let m = formula.clauses.len();
    if n < 1 || m < 1 {
        return Err(GenError::BadParams("need at least one variable and clause".into()));
    }
    let mut dim = 1usize;
    while dim < m + 1 {
        dim *= 2;
    }
    let s_n = 2 * m * n * 2;
    let o_n = dim * n * 2;
    let a_n = 2usize;
    let horizon = n + 1;
    let floats = (horizon - 1) as f64 * (a_n as f64 * (s_n as f64).powi(2) + (s_n * o_n + o_n) as f64);
    if floats > size_budget as f64 {
        return Err(GenError::SizeBudgetExceeded {
            s: s_n,
            a: a_n,
            h: horizon,
            floats,
            budget: size_budget,
        });
    }

    let state_index = |j2: usize, i: usize, b: usize| (j2 * n + i) * 2 + b;
    let obs_index = |k: usize, i: usize, b: usize| (k * n + i) * 2 + b;

    // Emission matrix: shared by all steps.
    let mut emission = vec![vec![0.0; o_n]; s_n];
    for j2 in 0..(2 * m) {
        let row = j2 / 2 + 1; // Hadamard rows 1..=m are balanced.
        let want_positive = j2 % 2 == 0;
        let support: Vec<usize> = (0..dim)
            .filter(|&c| hadamard_sign(row, c) == want_positive)
            .collect();
        let p = 1.0 / support.len() as f64;
        for i in 0..n {
            for b in 0..2 {
                let from = state_index(j2, i, b);
                for &k in &support {
                    emission[from][obs_index(k, i, b)] = p;
                }
            }
        }
    }

    let mut transitions = Vec::with_capacity(horizon - 1);
    for _h in 1..horizon {
        let mut per_action = Vec::with_capacity(a_n);
        for a in 0..a_n {
            let mut kernel = vec![vec![0.0; s_n]; s_n];
            for j2 in 0..(2 * m) {
                let clause = j2 / 2;
                for i in 0..n {
                    for b in 0..2 {
                        let from = state_index(j2, i, b);
                        let g = formula.clause_satisfied(clause, |var| {
                            if var == i {
                                Some(a == 1)
                            } else {
                                None
                            }
                        });
                        let b2 = if b == 1 || g { 1 } else { 0 };
                        let i2 = (i + 1).min(n - 1);
                        kernel[from][state_index(j2, i2, b2)] = 1.0;
                    }
                }
            }
            per_action.push(kernel);
        }
        transitions.push(per_action);
    }

    let emissions = vec![emission; horizon - 1];
    let mut rewards = vec![vec![0.0; o_n]; horizon - 1];
    for y in 0..o_n {
        rewards[horizon - 2][y] = (y % 2) as f64;
    }
    let mut initial_belief = vec![0.0; s_n];
    for j2 in 0..(2 * m) {
        initial_belief[state_index(j2, 0, 0)] = 1.0 / (2 * m) as f64;
    }

    let pomdp = Pomdp {
        horizon,
        num_states: s_n,
        num_actions: a_n,
        num_observations: o_n,
        initial_belief,
        transitions,
        emissions,
        rewards,
    };
    let meta = HadamardMeta {
        n,
        m,
        hadamard_dim: dim,
        num_states: s_n,
        num_observations: o_n,
        horizon,
        weak_gamma_l1: 1.0,
        value_if_satisfiable: 1.0,
        unsat_value_upper_bound: 1.0 - 1.0 / m as f64,
    };
    Ok((pomdp, meta))
}

// ---------------------------------------------------------------------
// Belief-contraction lower bound instance
// ---------------------------------------------------------------------

/// Two states, identity transitions, b1 = (1, 0), all emissions
/// [[1/2+g, 1/2-g], [1/2-g, 1/2+g]], zero rewards. Its exact
/// observability is 2g (by the LP); the channel contracts the 1-norm of
/// zero-sum vectors by exactly 2g. The slow-forgetting guarantee applies
/// for g <= 0.1; the model itself is valid for any g < 1/2.
pub fn gen_contraction_lb(gamma: f64, horizon: usize) -> Result<Pomdp, GenError> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(GenError::BadParams(format!(
            "gamma {gamma} outside (0, 0.5)"
        )));
    }
    if horizon < 2 {
        return Err(GenError::BadParams(format!("horizon {horizon} < 2")));
    }
    let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let emission = vec![
        vec![0.5 + gamma, 0.5 - gamma],
        vec![0.5 - gamma, 0.5 + gamma],
    ];
    Ok(Pomdp {
        horizon,
        num_states: 2,
        num_actions: 1,
        num_observations: 2,
        initial_belief: vec![1.0, 0.0],
        transitions: vec![vec![identity]; horizon - 1],
        emissions: vec![emission; horizon - 1],
        rewards: vec![vec![0.0, 0.0]; horizon - 1],
    })
}

// ---------------------------------------------------------------------
// Random observable instances
// ---------------------------------------------------------------------

/// Random instance with the identity-mix emission channel (observability
/// exactly gamma0), Dirichlet(1) transition rows, uniform [0,1] rewards,
/// and a Dirichlet(1) initial belief. Deterministic given the seed; the
/// draw order is initial belief, then transitions by (step, action, row),
/// then rewards by (step, observation).
pub fn gen_random_observable(
    s: usize,
    a: usize,
    horizon: usize,
    gamma0: f64,
    seed: u64,
) -> Result<Pomdp, GenError> {
    if !(gamma0 > 0.0 && gamma0 <= 1.0) {
        return Err(GenError::BadParams(format!("gamma0 {gamma0} outside (0, 1]")));
    }
    if s < 2 || a < 1 || horizon < 2 {
        return Err(GenError::BadParams(format!(
            "need S >= 2, A >= 1, H >= 2; got S={s}, A={a}, H={horizon}"
        )));
    }
    let mut rng = trial_rng(seed, 0);
    let initial_belief = dirichlet(&mut rng, s);
    let mut transitions = Vec::with_capacity(horizon - 1);
    for _h in 1..horizon {
        let mut per_action = Vec::with_capacity(a);
        for _a in 0..a {
            let kernel: Vec<Vec<f64>> = (0..s).map(|_| dirichlet(&mut rng, s)).collect();
            per_action.push(kernel);
        }
        transitions.push(per_action);
    }
    let emission = identity_mix_channel(s, gamma0);
    let emissions = vec![emission; horizon - 1];
    let mut rewards = Vec::with_capacity(horizon - 1);
    for _h in 2..=horizon {
        rewards.push((0..s).map(|_| rng.gen::<f64>()).collect());
    }
    Ok(Pomdp {
        horizon,
        num_states: s,
        num_actions: a,
        num_observations: s,
        initial_belief,
        transitions,
        emissions,
        rewards,
    })
}

// ---------------------------------------------------------------------
// Built-in examples
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleName {
    /// States [m], move-mass actions [m]x[m], null observation channel
    /// with gamma = 1/2, horizon m: reachable beliefs need an
    /// exponential-size net.
    LargeNet,
    /// Two-state epsilon channel where one Bayes update increases KL.
    DivergenceIncrease,
    /// Two-state (1/2 +- gamma) channel where the expected one-step KL
    /// decrement is quadratic, not linear.
    NoLinearRate,
    /// State revealed with probability gamma, otherwise a null symbol.
    NullChannel,
}

impl std::str::FromStr for ExampleName {
    type Err = GenError;
    fn from_str(s: &str) -> Result<Self, GenError> {
        match s {
            "large-net" => Ok(ExampleName::LargeNet),
            "divergence-increase" => Ok(ExampleName::DivergenceIncrease),
            "no-linear-rate" => Ok(ExampleName::NoLinearRate),
            "null-channel" => Ok(ExampleName::NullChannel),
            other => Err(GenError::UnknownExample(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExampleParams {
    /// large-net size.
    pub m: usize,
    /// Channel flip probability for divergence-increase.
    pub eps: f64,
    /// Channel parameter for no-linear-rate and null-channel.
    pub gamma: f64,
    /// State count for null-channel.
    pub states: usize,
}

impl Default for ExampleParams {
    fn default() -> Self {
        ExampleParams {
            m: 4,
            eps: 0.1,
            gamma: 0.3,
            states: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub name: String,
    pub claim: String,
    pub gamma_closed_form: Option<f64>,
    pub params: serde_json::Value,
}

pub fn gen_example(
    name: ExampleName,
    params: &ExampleParams,
) -> Result<(Pomdp, ExampleMeta), GenError> {
    match name {
        ExampleName::LargeNet => {
            let m = params.m;
            if m < 2 {
                return Err(GenError::BadParams(format!("large-net needs m >= 2, got {m}")));
            }
            let a_n = m * m;
            let mut per_action = Vec::with_capacity(a_n);
            for i in 0..m {
                for j in 0..m {
                    let mut kernel = vec![vec![0.0; m]; m];
                    for x in 0..m {
                        let to = if x == i { j } else { x };
                        kernel[x][to] = 1.0;
                    }
                    per_action.push(kernel);
                }
            }
            let emission = null_channel(m, 0.5);
            let pomdp = Pomdp {
                horizon: m,
                num_states: m,
                num_actions: a_n,
                num_observations: m + 1,
                initial_belief: vec![1.0 / m as f64; m],
                transitions: vec![per_action; m - 1],
                emissions: vec![emission; m - 1],
                rewards: vec![vec![0.0; m + 1]; m - 1],
            };
            let meta = ExampleMeta {
                name: "large-net".into(),
                claim: "integer-grid beliefs over [m] are all reachable via null observations, \
                        so TV nets over reachable beliefs need exp(m) points"
                    .into(),
                gamma_closed_form: Some(0.5),
                params: serde_json::json!({ "m": m }),
            };
            Ok((pomdp, meta))
        }
        ExampleName::DivergenceIncrease => {
            let eps = params.eps;
            if !(eps > 0.0 && eps < 1.0) {
                return Err(GenError::BadParams(format!("eps {eps} outside (0, 1)")));
            }
            let pomdp = Pomdp {
                horizon: 2,
                num_states: 2,
                num_actions: 1,
                num_observations: 2,
                initial_belief: vec![1.0 - eps * eps, eps * eps],
                transitions: vec![vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]],
                emissions: vec![vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]]],
                rewards: vec![vec![0.0, 0.0]],
            };
            let meta = ExampleMeta {
                name: "divergence-increase".into(),
                claim: "one Bayes update on the unlikely observation increases KL from below \
                        log 2 to order log(1/eps)"
                    .into(),
                gamma_closed_form: None,
                params: serde_json::json!({ "eps": eps }),
            };
            Ok((pomdp, meta))
        }
        ExampleName::NoLinearRate => {
            let g = params.gamma;
            if !(g > 0.0 && g < 0.5) {
                return Err(GenError::BadParams(format!("gamma {g} outside (0, 0.5)")));
            }
            let pomdp = Pomdp {
                horizon: 2,
                num_states: 2,
                num_actions: 1,
                num_observations: 2,
                initial_belief: vec![1.0, 0.0],
                transitions: vec![vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]],
                emissions: vec![vec![vec![0.5 + g, 0.5 - g], vec![0.5 - g, 0.5 + g]]],
                rewards: vec![vec![0.0, 0.0]],
            };
            let meta = ExampleMeta {
                name: "no-linear-rate".into(),
                claim: "the expected one-step KL decrement against (1-eps, eps) is quadratic \
                        in the KL, so no linear contraction rate holds"
                    .into(),
                gamma_closed_form: None,
                params: serde_json::json!({ "gamma": g }),
            };
            Ok((pomdp, meta))
        }
        ExampleName::NullChannel => {
            let s = params.states;
            let g = params.gamma;
            if s < 2 {
                return Err(GenError::BadParams(format!("null-channel needs S >= 2, got {s}")));
            }
            if !(g > 0.0 && g <= 1.0) {
                return Err(GenError::BadParams(format!("gamma {g} outside (0, 1]")));
            }
            let identity: Vec<Vec<f64>> = (0..s)
                .map(|x| (0..s).map(|x2| f64::from(u8::from(x == x2))).collect())
                .collect();
            let pomdp = Pomdp {
                horizon: 3,
                num_states: s,
                num_actions: 1,
                num_observations: s + 1,
                initial_belief: vec![1.0 / s as f64; s],
                transitions: vec![vec![identity.clone()]; 2],
                emissions: vec![null_channel(s, g); 2],
                rewards: vec![vec![0.0; s + 1]; 2],
            };
            let meta = ExampleMeta {
                name: "null-channel".into(),
                claim: "state revealed with probability gamma, else a null symbol; \
                        observability is exactly gamma"
                    .into(),
                gamma_closed_form: Some(g),
                params: serde_json::json!({ "states": s, "gamma": g }),
            };
            Ok((pomdp, meta))
        }
    }
}
