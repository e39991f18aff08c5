//! Tabular POMDP data model, validation, and on-disk format.
//!
//! A POMDP is the tuple (H, S, A, O, b1, T, O, R). Actions are taken at
//! steps h = 1..H-1; an observation and its reward arrive at steps
//! h = 2..H. Arrays are stored 0-based and dense:
//!
//! - `transitions[i][a]` is the S x S row-stochastic kernel for step
//!   h = i + 1, indexed `[current state][next state]`.
//! - `emissions[i]` is the S x O row-stochastic matrix for step h = i + 2.
//! - `rewards[i]` is the length-O reward vector for step h = i + 2, with
//!   entries in [0, 1]. Rewards are functions of observations only.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Row sums must lie within this distance of 1 for a model to validate.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Rows are renormalized on load only when the drift exceeds this; smaller
/// drifts are kept bit-for-bit so that `load(save(m)) == m` on freshly
/// generated models.
const RENORM_TRIGGER: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("shape mismatch at {field}: expected {expected}, got {got}")]
    Shape {
        field: String,
        expected: String,
        got: String,
    },
    #[error("model failed validation: {0:?}")]
    Validation(Vec<Violation>),
}

/// One invariant violation, with enough location detail to find the row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Which array the violation is in ("transitions", "emissions", ...).
    pub field: String,
    /// Human-readable location, e.g. "h=1, a=0, x=0".
    pub location: String,
    pub detail: String,
}

impl Violation {
    fn new(field: &str, location: String, detail: String) -> Self {
        Violation {
            field: field.to_string(),
            location,
            detail,
        }
    }
}

/// Full tabular POMDP model. Unknown fields are rejected on load:
/// rewards are functions of observations only, and files carrying
/// state- or action-indexed rewards must not parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pomdp {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_observations: usize,
    /// b1, length S.
    pub initial_belief: Vec<f64>,
    /// `[H-1][A][S][S]`; `transitions[h-1][a][x][x']` = T_h(x' | x, a).
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[H-1][S][O]`; `emissions[h-2][x][y]` = O_h(y | x).
    pub emissions: Vec<Vec<Vec<f64>>>,
    /// `[H-1][O]`; `rewards[h-2][y]` = R_h(y).
    pub rewards: Vec<Vec<f64>>,
}

impl Pomdp {
    /// Transition kernel for (1-based) step h in 1..=H-1 and action a.
    pub fn transition(&self, h: usize, a: usize) -> &Vec<Vec<f64>> {
        &self.transitions[h - 1][a]
    }

    /// Emission matrix for step h in 2..=H.
    pub fn emission(&self, h: usize) -> &Vec<Vec<f64>> {
        &self.emissions[h - 2]
    }

    /// Reward vector for step h in 2..=H.
    pub fn reward(&self, h: usize) -> &Vec<f64> {
        &self.rewards[h - 2]
    }

    /// Maximum total reward: one reward in [0,1] per step h = 2..H.
    pub fn reward_range(&self) -> f64 {
        (self.horizon - 1) as f64
    }
}

fn check_row(
    field: &str,
    location: String,
    row: &[f64],
    expected_len: usize,
    out: &mut Vec<Violation>,
) {
    if row.len() != expected_len {
        out.push(Violation::new(
            field,
            location,
            format!("row length {} != {}", row.len(), expected_len),
        ));
        return;
    }
    let mut sum = 0.0;
    for (i, &p) in row.iter().enumerate() {
        if !(p >= 0.0) {
            out.push(Violation::new(
                field,
                location.clone(),
                format!("entry {i} is {p}, must be >= 0"),
            ));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        out.push(Violation::new(
            field,
            location,
            format!("row sums to {sum}, must be 1 within {STOCHASTIC_TOL}"),
        ));
    }
}

/// Reports every invariant violation in `pomdp`. An empty list means the
/// model is valid. Violations are data, not failures.
pub fn validate(pomdp: &Pomdp) -> Vec<Violation> {
    let mut out = Vec::new();
    let (h_len, s, a_n, o_n) = (
        pomdp.horizon,
        pomdp.num_states,
        pomdp.num_actions,
        pomdp.num_observations,
    );
    if h_len < 2 {
        out.push(Violation::new(
            "horizon",
            String::new(),
            format!("horizon {h_len} < 2"),
        ));
        return out;
    }
    if s < 1 || a_n < 1 || o_n < 1 {
        out.push(Violation::new(
            "sizes",
            String::new(),
            format!("S={s}, A={a_n}, O={o_n} must all be >= 1"),
        ));
        return out;
    }

    check_row("initial_belief", String::new(), &pomdp.initial_belief, s, &mut out);

    if pomdp.transitions.len() != h_len - 1 {
        out.push(Violation::new(
            "transitions",
            String::new(),
            format!("outer length {} != H-1 = {}", pomdp.transitions.len(), h_len - 1),
        ));
    }
    for (i, per_action) in pomdp.transitions.iter().enumerate() {
        let h = i + 1;
        if per_action.len() != a_n {
            out.push(Violation::new(
                "transitions",
                format!("h={h}"),
                format!("action count {} != {}", per_action.len(), a_n),
            ));
            continue;
        }
        for (a, kernel) in per_action.iter().enumerate() {
            if kernel.len() != s {
                out.push(Violation::new(
                    "transitions",
                    format!("h={h}, a={a}"),
                    format!("row count {} != {}", kernel.len(), s),
                ));
                continue;
            }
            for (x, row) in kernel.iter().enumerate() {
                check_row("transitions", format!("h={h}, a={a}, x={x}"), row, s, &mut out);
            }
        }
    }

    if pomdp.emissions.len() != h_len - 1 {
        out.push(Violation::new(
            "emissions",
            String::new(),
            format!("outer length {} != H-1 = {}", pomdp.emissions.len(), h_len - 1),
        ));
    }
    for (i, matrix) in pomdp.emissions.iter().enumerate() {
        let h = i + 2;
        if matrix.len() != s {
            out.push(Violation::new(
                "emissions",
                format!("h={h}"),
                format!("row count {} != {}", matrix.len(), s),
            ));
            continue;
        }
        for (x, row) in matrix.iter().enumerate() {
            check_row("emissions", format!("h={h}, x={x}"), row, o_n, &mut out);
        }
    }

    if pomdp.rewards.len() != h_len - 1 {
        out.push(Violation::new(
            "rewards",
            String::new(),
            format!("outer length {} != H-1 = {}", pomdp.rewards.len(), h_len - 1),
        ));
    }
    for (i, row) in pomdp.rewards.iter().enumerate() {
        let h = i + 2;
        if row.len() != o_n {
            out.push(Violation::new(
                "rewards",
                format!("h={h}"),
                format!("length {} != {}", row.len(), o_n),
            ));
            continue;
        }
        for (y, &r) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                out.push(Violation::new(
                    "rewards",
                    format!("h={h}, o={y}"),
                    format!("reward {r} outside [0, 1]"),
                ));
            }
        }
    }

    out
}

fn renormalize_row(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    if sum > 0.0 && (sum - 1.0).abs() > RENORM_TRIGGER && (sum - 1.0).abs() <= STOCHASTIC_TOL {
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
}

fn renormalize(pomdp: &mut Pomdp) {
    renormalize_row(&mut pomdp.initial_belief);
    for per_action in &mut pomdp.transitions {
        for kernel in per_action {
            for row in kernel {
                renormalize_row(row);
            }
        }
    }
    for matrix in &mut pomdp.emissions {
        for row in matrix {
            renormalize_row(row);
        }
    }
}

fn check_shapes(pomdp: &Pomdp) -> Result<(), ModelError> {
    let (h_len, s, a_n, o_n) = (
        pomdp.horizon,
        pomdp.num_states,
        pomdp.num_actions,
        pomdp.num_observations,
    );
    if h_len < 2 {
        return Err(ModelError::Parse(format!("horizon {h_len} < 2")));
    }
    let shape_err = |field: String, expected: String, got: String| {
        Err(ModelError::Shape { field, expected, got })
    };
    if pomdp.initial_belief.len() != s {
        return shape_err(
            "initial_belief".into(),
            format!("[{s}]"),
            format!("[{}]", pomdp.initial_belief.len()),
        );
    }
    if pomdp.transitions.len() != h_len - 1 {
        return shape_err(
            "transitions".into(),
            format!("[{}][..]", h_len - 1),
            format!("[{}][..]", pomdp.transitions.len()),
        );
    }
    for (i, per_action) in pomdp.transitions.iter().enumerate() {
        if per_action.len() != a_n {
            return shape_err(
                format!("transitions[{i}]"),
                format!("[{a_n}][..]"),
                format!("[{}][..]", per_action.len()),
            );
        }
        for (a, kernel) in per_action.iter().enumerate() {
            if kernel.len() != s {
                return shape_err(
                    format!("transitions[{i}][{a}]"),
                    format!("[{s}][{s}]"),
                    format!("[{}][..]", kernel.len()),
                );
            }
            for (x, row) in kernel.iter().enumerate() {
                if row.len() != s {
                    return shape_err(
                        format!("transitions[{i}][{a}][{x}]"),
                        format!("[{s}]"),
                        format!("[{}]", row.len()),
                    );
                }
            }
        }
    }
    if pomdp.emissions.len() != h_len - 1 {
        return shape_err(
            "emissions".into(),
            format!("[{}][..]", h_len - 1),
            format!("[{}][..]", pomdp.emissions.len()),
        );
    }
    for (i, matrix) in pomdp.emissions.iter().enumerate() {
        if matrix.len() != s {
            return shape_err(
                format!("emissions[{i}]"),
                format!("[{s}][{o_n}]"),
                format!("[{}][..]", matrix.len()),
            );
        }
        for (x, row) in matrix.iter().enumerate() {
            if row.len() != o_n {
                return shape_err(
                    format!("emissions[{i}][{x}]"),
                    format!("[{o_n}]"),
                    format!("[{}]", row.len()),
                );
            }
        }
    }
    if pomdp.rewards.len() != h_len - 1 {
        return shape_err(
            "rewards".into(),
            format!("[{}][{o_n}]", h_len - 1),
            format!("[{}][..]", pomdp.rewards.len()),
        );
    }
    for (i, row) in pomdp.rewards.iter().enumerate() {
        if row.len() != o_n {
            return shape_err(
                format!("rewards[{i}]"),
                format!("[{o_n}]"),
                format!("[{}]", row.len()),
            );
        }
    }
    Ok(())
}

/// Parses a model from JSON text, renormalizes rows whose sums drifted by
/// more than 1e-12 (but within tolerance), and validates.
pub fn from_json(text: &str) -> Result<Pomdp, ModelError> {
    let mut pomdp: Pomdp =
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    check_shapes(&pomdp)?;
    renormalize(&mut pomdp);
    let violations = validate(&pomdp);
    if !violations.is_empty() {
        return Err(ModelError::Validation(violations));
    }
    Ok(pomdp)
}

pub fn to_json(pomdp: &Pomdp) -> String {
    serde_json::to_string(pomdp).expect("model serialization cannot fail")
}

pub fn load(path: &Path) -> Result<Pomdp, ModelError> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text)
}

pub fn save(pomdp: &Pomdp, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, to_json(pomdp))?;
    Ok(())
}

/// Probability vector over latent states at a fixed step h in 1..=H.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub step: usize,
    pub probs: Vec<f64>,
}

impl Belief {
    pub fn new(step: usize, probs: Vec<f64>) -> Self {
        Belief { step, probs }
    }

    pub fn uniform(step: usize, num_states: usize) -> Self {
        Belief {
            step,
            probs: vec![1.0 / num_states as f64; num_states],
        }
    }
}

/// A full action/observation history: actions a_{1..h-1} and observations
/// o_{2..h}, placing the agent at stage h = actions.len() + 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct History {
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
}

impl History {
    pub fn empty() -> Self {
        History::default()
    }

    pub fn stage(&self) -> usize {
        self.actions.len() + 1
    }

    pub fn push(&mut self, action: usize, observation: usize) {
        self.actions.push(action);
        self.observations.push(observation);
    }

    pub fn pop(&mut self) {
        self.actions.pop();
        self.observations.pop();
    }

    /// The length-(min(t, stage-1)) suffix window anchored at this stage.
    pub fn window(&self, t: usize) -> HistoryWindow {
        let len = t.min(self.actions.len());
        let start = self.actions.len() - len;
        HistoryWindow {
            stage: self.stage(),
            actions: self.actions[start..].to_vec(),
            observations: self.observations[start..].to_vec(),
        }
    }
}

/// A length-t alternating action/observation suffix anchored at `stage`:
/// actions (a_{h-t}, ..., a_{h-1}) and observations (o_{h-t+1}, ..., o_h),
/// with 0 <= t <= stage - 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HistoryWindow {
    pub stage: usize,
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
}

impl HistoryWindow {
    pub fn empty(stage: usize) -> Self {
        HistoryWindow {
            stage,
            actions: Vec::new(),
            observations: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Checks the window invariants against a model.
    pub fn check(&self, pomdp: &Pomdp) -> Result<(), String> {
        if self.actions.len() != self.observations.len() {
            return Err(format!(
                "window has {} actions but {} observations",
                self.actions.len(),
                self.observations.len()
            ));
        }
        if self.stage < 1 || self.stage > pomdp.horizon {
            return Err(format!("stage {} outside 1..={}", self.stage, pomdp.horizon));
        }
        if self.len() > self.stage - 1 {
            return Err(format!(
                "window length {} exceeds stage-1 = {}",
                self.len(),
                self.stage - 1
            ));
        }
        for &a in &self.actions {
            if a >= pomdp.num_actions {
                return Err(format!("action {a} out of range"));
            }
        }
        for &o in &self.observations {
            if o >= pomdp.num_observations {
                return Err(format!("observation {o} out of range"));
            }
        }
        Ok(())
    }
}

/// One sampled rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// x_1..x_H.
    pub states: Vec<usize>,
    /// a_1..a_{H-1}.
    pub actions: Vec<usize>,
    /// o_2..o_H.
    pub observations: Vec<usize>,
    /// r_2..r_H, with r_h = R_h(o_h).
    pub rewards: Vec<f64>,
    pub total_reward: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;

    fn tiny_valid() -> Pomdp {
        Pomdp {
            horizon: 2,
            num_states: 2,
            num_actions: 1,
            num_observations: 2,
            initial_belief: vec![0.5, 0.5],
            transitions: vec![vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]],
            emissions: vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
            rewards: vec![vec![0.0, 1.0]],
        }
    }

    #[test]
    fn valid_model_has_no_violations() {
        assert!(validate(&tiny_valid()).is_empty());
    }

    #[test]
    fn bad_transition_row_is_located() {
        let mut m = tiny_valid();
        m.transitions[0][0][0] = vec![0.5, 0.4]; // sums to 0.9
        let v = validate(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "transitions");
        assert_eq!(v[0].location, "h=1, a=0, x=0");
    }

    #[test]
    fn out_of_range_reward_is_reported() {
        let mut m = tiny_valid();
        m.rewards[0][1] = 1.5;
        let v = validate(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "rewards");
        assert_eq!(v[0].location, "h=2, o=1");
    }

    #[test]
    fn generator_output_validates() {
        let m = gen::gen_contraction_lb(0.1, 10).unwrap();
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn round_trip_is_identity() {
        let (m, _) = gen::gen_example(gen::ExampleName::DivergenceIncrease, &gen::ExampleParams::default()).unwrap();
        let m2 = from_json(&to_json(&m)).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn state_action_rewards_are_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(&to_json(&tiny_valid())).unwrap();
        doc["state_rewards"] = serde_json::json!([[0.0, 0.0]]);
        match from_json(&doc.to_string()) {
            Err(ModelError::Parse(msg)) => assert!(msg.contains("state_rewards"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let text = to_json(&tiny_valid());
        let truncated = &text[..text.len() / 2];
        match from_json(truncated) {
            Err(ModelError::Parse(_)) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_emission_column_is_shape_error() {
        let mut m = tiny_valid();
        m.emissions[0][1] = vec![1.0]; // O-1 columns
        let text = to_json(&m);
        match from_json(&text) {
            Err(ModelError::Shape { field, .. }) => assert_eq!(field, "emissions[0][1]"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn window_invariants_are_checked() {
        let m = tiny_valid();
        let good = HistoryWindow {
            stage: 2,
            actions: vec![0],
            observations: vec![1],
        };
        assert!(good.check(&m).is_ok());
        let too_long = HistoryWindow {
            stage: 1,
            actions: vec![0],
            observations: vec![1],
        };
        assert!(too_long.check(&m).is_err());
        let ragged = HistoryWindow {
            stage: 2,
            actions: vec![0],
            observations: vec![],
        };
        assert!(ragged.check(&m).is_err());
    }

    #[test]
    fn drifted_rows_are_renormalized() {
        let mut m = tiny_valid();
        m.initial_belief = vec![0.5 + 4e-10, 0.5];
        let loaded = from_json(&to_json(&m)).unwrap();
        let sum: f64 = loaded.initial_belief.iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn drift_beyond_tolerance_fails_validation() {
        let mut m = tiny_valid();
        m.initial_belief = vec![0.5 + 1e-8, 0.5];
        match from_json(&to_json(&m)) {
            Err(ModelError::Validation(v)) => {
                assert_eq!(v[0].field, "initial_belief");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }
}
