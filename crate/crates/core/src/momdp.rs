//! Linear scalarization of the reward/cost vector and exact backwards
//! induction over the time-expanded model.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::Objectives;
use crate::smdp::{time_expand, Action, ObservationModel, TimeExpandedGraph};
use crate::trajectory::ExpectedRateTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomdpError {
    #[error("rate table does not match the model's horizon and action space")]
    RateMismatch,
    #[error("invalid scalarization weights: {0}")]
    InvalidWeights(String),
    #[error("policy does not match the model")]
    PolicyMismatch,
}

/// Non-negative weights; costs enter the scalarized objective negatively.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct ScalarizationWeights {
    pub reward: f64,
    pub collision: f64,
    pub intrusion: f64,
    pub power: f64,
}

impl ScalarizationWeights {
    pub fn new(reward: f64, collision: f64, intrusion: f64, power: f64) -> Result<Self, MomdpError> {
        let w = [reward, collision, intrusion, power];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(MomdpError::InvalidWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(MomdpError::InvalidWeights(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(ScalarizationWeights {
            reward,
            collision,
            intrusion,
            power,
        })
    }

    /// Reward-only weights `[1, 0, 0, 0]`.
    pub fn reward_only() -> Self {
        ScalarizationWeights {
            reward: 1.0,
            collision: 0.0,
            intrusion: 0.0,
            power: 0.0,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.reward, self.collision, self.intrusion, self.power]
    }

    /// Signed weight vector `[w_r, -w_c0, -w_c1, -w_c2]`.
    pub fn signed(self) -> Objectives {
        Objectives::new(self.reward, -self.collision, -self.intrusion, -self.power)
    }

    pub fn scaled(self, k: f64) -> Result<Self, MomdpError> {
        let [a, b, c, d] = self.to_array().map(|w| w * k);
        Self::new(a, b, c, d)
    }
}

impl TryFrom<[f64; 4]> for ScalarizationWeights {
    type Error = MomdpError;
    fn try_from(w: [f64; 4]) -> Result<Self, MomdpError> {
        Self::new(w[0], w[1], w[2], w[3])
    }
}

impl From<ScalarizationWeights> for [f64; 4] {
    fn from(w: ScalarizationWeights) -> Self {
        w.to_array()
    }
}

/// `w_r·r − w_c0·c0 − w_c1·c1 − w_c2·c2`.
pub fn scalarize(rates: &Objectives, weights: &ScalarizationWeights) -> f64 {
    let w = weights.signed();
    (0..4).map(|i| rates[i] * w[i]).sum()
}

/// Deterministic time-indexed policy with its scalarized utilities and
/// expected remaining objective vectors. Epoch `horizon` is terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct DeterministicPolicy {
    horizon: usize,
    states: usize,
    choice: Vec<usize>,
    actions: Vec<Action>,
    utility: Vec<f64>,
    values: Vec<Objectives>,
}

impl DeterministicPolicy {
    /// Policy from explicit per-`(epoch, state)` action indices, with
    /// utilities and values left at zero.
    pub fn from_choices(model: &ObservationModel, choice: Vec<usize>) -> Result<Self, MomdpError> {
        let states = model.space().len();
        let horizon = model.horizon();
        if choice.len() != horizon * states {
            return Err(MomdpError::PolicyMismatch);
        }
        let mut actions = Vec::with_capacity(choice.len());
        for (i, &a) in choice.iter().enumerate() {
            let acts = model.space().actions(i % states);
            actions.push(*acts.get(a).ok_or(MomdpError::PolicyMismatch)?);
        }
        Ok(DeterministicPolicy {
            horizon,
            states,
            choice,
            actions,
            utility: vec![0.0; (horizon + 1) * states],
            values: vec![Objectives::ZERO; (horizon + 1) * states],
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    /// Index into the state's action list chosen at `(epoch, state)`.
    pub fn choice(&self, epoch: usize, state: usize) -> usize {
        self.choice[epoch * self.states + state]
    }

    pub fn action(&self, epoch: usize, state: usize) -> Action {
        self.actions[epoch * self.states + state]
    }

    pub fn utility(&self, epoch: usize, state: usize) -> f64 {
        self.utility[epoch * self.states + state]
    }

    pub fn value(&self, epoch: usize, state: usize) -> Objectives {
        self.values[epoch * self.states + state]
    }

    /// One record per `(epoch, state)`:
    /// `epoch,waypoint,perched,action,utility,r,c0,c1,c2`.
    pub fn write_csv<W: Write>(&self, model: &ObservationModel, mut out: W) -> io::Result<()> {
        writeln!(out, "epoch,waypoint,perched,action,utility,r,c0,c1,c2")?;
        for t in 0..self.horizon {
            for s in 0..self.states {
                let state = model.space().state(s);
                let v = self.value(t, s);
                writeln!(
                    out,
                    "{t},{},{},{},{},{},{},{},{}",
                    state.waypoint,
                    state.perched,
                    self.action(t, s),
                    self.utility(t, s),
                    v[0],
                    v[1],
                    v[2],
                    v[3]
                )?;
            }
        }
        Ok(())
    }
}

/// Solves by backwards induction from the horizon. Each action's scalarized
/// rate accrues for its expected duration truncated at the horizon; ties go
/// to the earliest action in `available_actions` order.
pub fn solve_momdp(
    model: &ObservationModel,
    rates: &ExpectedRateTable,
    weights: &ScalarizationWeights,
) -> Result<DeterministicPolicy, MomdpError> {
    solve_momdp_on(model, &time_expand(model), rates, weights)
}

/// [`solve_momdp`] on a precomputed time expansion.
pub fn solve_momdp_on(
    model: &ObservationModel,
    graph: &TimeExpandedGraph,
    rates: &ExpectedRateTable,
    weights: &ScalarizationWeights,
) -> Result<DeterministicPolicy, MomdpError> {
    if !rates.covers(model) || graph.horizon() != model.horizon() {
        return Err(MomdpError::RateMismatch);
    }
    let space = model.space();
    let n = space.len();
    let horizon = model.horizon();
    let signed = weights.signed();

    let mut choice = vec![0; horizon * n];
    let mut actions = vec![Action::HoldPos; horizon * n];
    let mut utility = vec![0.0; (horizon + 1) * n];
    let mut values = vec![Objectives::ZERO; (horizon + 1) * n];

    let mut q = Vec::new();
    let mut qv = Vec::new();
    for t in (0..horizon).rev() {
        for s in 0..n {
            let count = space.actions(s).len();
            q.clear();
            qv.clear();
            for a in 0..count {
                let slot = space.slot(s, a);
                let accrued = rates.get(t, slot) * graph.expected_accrual(t, slot);
                q.push(dot(&accrued, &signed));
                qv.push(accrued);
            }
            for e in graph.edges(t, s) {
                let idx = e.landing * n + e.next;
                q[e.action] += e.probability * utility[idx];
                qv[e.action] += values[idx] * e.probability;
            }
            let mut best = 0;
            for a in 1..count {
                if q[a] > q[best] + 1e-12 * q[best].abs().max(1.0) {
                    best = a;
                }
            }
            let idx = t * n + s;
            choice[idx] = best;
            actions[idx] = space.actions(s)[best];
            utility[idx] = q[best];
            values[idx] = qv[best];
        }
    }
    Ok(DeterministicPolicy {
        horizon,
        states: n,
        choice,
        actions,
        utility,
        values,
    })
}

fn dot(a: &Objectives, b: &Objectives) -> f64 {
    (0..4).map(|i| a[i] * b[i]).sum()
}

/// Expected accumulated `[r, c0, c1, c2]` of following `policy` from the
/// initial state at epoch 0, by a forward pass over occupancy.
pub fn policy_value(
    model: &ObservationModel,
    rates: &ExpectedRateTable,
    policy: &DeterministicPolicy,
) -> Result<Objectives, MomdpError> {
    policy_value_on(model, &time_expand(model), rates, policy)
}

pub fn policy_value_on(
    model: &ObservationModel,
    graph: &TimeExpandedGraph,
    rates: &ExpectedRateTable,
    policy: &DeterministicPolicy,
) -> Result<Objectives, MomdpError> {
    if !rates.covers(model) {
        return Err(MomdpError::RateMismatch);
    }
    let n = model.space().len();
    if policy.horizon != model.horizon() || policy.states != n {
        return Err(MomdpError::PolicyMismatch);
    }
    let horizon = model.horizon();
    let mut mass = vec![0.0; horizon * n];
    mass[model.initial_index()] = 1.0;
    let mut total = Objectives::ZERO;
    for t in 0..horizon {
        for s in 0..n {
            let m = mass[t * n + s];
            if m == 0.0 {
                continue;
            }
            let a = policy.choice(t, s);
            let slot = model.space().slot(s, a);
            total += rates.get(t, slot) * (graph.expected_accrual(t, slot) * m);
            for e in graph.edges(t, s).iter().filter(|e| e.action == a) {
                if e.landing < horizon {
                    mass[e.landing * n + e.next] += m * e.probability;
                }
            }
        }
    }
    Ok(total)
}
