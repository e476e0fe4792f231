//! Semi-MDP model of a camera robot moving among waypoints: states, actions,
//! duration distributions and the finite-horizon time expansion used by both
//! solvers.

use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default nominal travel speed used to derive move durations, m/s.
pub const DEFAULT_TRAVEL_SPEED: f64 = 0.25;
/// Default duration of perch and unperch actions, epochs.
pub const DEFAULT_PERCH_DURATION: usize = 3;

const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("waypoint ids must be contiguous from 0: found id {found} at position {expected}")]
    NonContiguousIds { expected: usize, found: usize },
    #[error("model needs at least one waypoint")]
    NoWaypoints,
    #[error("horizon must be at least 1 epoch")]
    ZeroHorizon,
    #[error("unknown waypoint {0}")]
    UnknownWaypoint(usize),
    #[error("state is perched at waypoint {0}, which has no handrail")]
    PerchedWithoutHandrail(usize),
    #[error("epoch {epoch} is outside [0, {horizon}]")]
    EpochOutOfRange { epoch: usize, horizon: usize },
    #[error("action {action} is not available in state {state}")]
    IllegalAction { state: RobotState, action: Action },
    #[error("invalid duration distribution: {0}")]
    InvalidDurations(String),
    #[error("no move duration distribution from waypoint {from} to {to}")]
    MissingMoveDuration { from: usize, to: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waypoint {
    pub id: usize,
    pub position: Vector3<f64>,
    pub has_handrail: bool,
}

impl Waypoint {
    pub fn new(id: usize, position: [f64; 3], has_handrail: bool) -> Self {
        Waypoint {
            id,
            position: Vector3::from(position),
            has_handrail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RobotState {
    pub waypoint: usize,
    pub perched: bool,
}

impl RobotState {
    pub fn new(waypoint: usize, perched: bool) -> Self {
        RobotState { waypoint, perched }
    }
}

impl fmt::Display for RobotState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.perched {
            write!(f, "w{}:perched", self.waypoint)
        } else {
            write!(f, "w{}", self.waypoint)
        }
    }
}

/// A robot state at a decision epoch. The human pose is not part of the
/// state: it is a function of the epoch and the sampled trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WorldState {
    pub robot: RobotState,
    pub epoch: usize,
}

impl WorldState {
    pub fn new(robot: RobotState, epoch: usize) -> Self {
        WorldState { robot, epoch }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    HoldPos,
    Perch,
    Unperch,
    Move(usize),
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::HoldPos => ActionKind::HoldPos,
            Action::Perch => ActionKind::Perch,
            Action::Unperch => ActionKind::Unperch,
            Action::Move(_) => ActionKind::Move,
        }
    }

    /// Parses the textual form produced by `Display`.
    pub fn parse(text: &str) -> Option<Action> {
        match text {
            "hold_pos" => Some(Action::HoldPos),
            "perch" => Some(Action::Perch),
            "unperch" => Some(Action::Unperch),
            other => other
                .strip_prefix("move(w")
                .and_then(|rest| rest.strip_suffix(')'))
                .and_then(|id| id.parse().ok())
                .map(Action::Move),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::HoldPos => write!(f, "hold_pos"),
            Action::Perch => write!(f, "perch"),
            Action::Unperch => write!(f, "unperch"),
            Action::Move(w) => write!(f, "move(w{w})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    HoldPos,
    Perch,
    Unperch,
    Move,
}

/// Distribution over whole-epoch action durations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, f64)>", into = "Vec<(usize, f64)>")]
pub struct DurationDistribution {
    support: Vec<(usize, f64)>,
}

impl DurationDistribution {
    pub fn new(mut support: Vec<(usize, f64)>) -> Result<Self, ModelError> {
        if support.is_empty() {
            return Err(ModelError::InvalidDurations("empty support".into()));
        }
        for &(tau, p) in &support {
            if tau == 0 {
                return Err(ModelError::InvalidDurations(
                    "durations must be at least 1 epoch".into(),
                ));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(ModelError::InvalidDurations(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
        }
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(ModelError::InvalidDurations(format!(
                "probabilities sum to {total}"
            )));
        }
        support.sort_by_key(|&(tau, _)| tau);
        Ok(DurationDistribution { support })
    }

    pub fn fixed(duration: usize) -> Result<Self, ModelError> {
        Self::new(vec![(duration, 1.0)])
    }

    /// Two-point travel-time distribution `{n: 0.6, n + 1: 0.4}` with
    /// `n = ceil(distance / speed)`, at least 1.
    pub fn travel(distance: f64, speed: f64) -> Self {
        let base = ((distance / speed).ceil() as usize).max(1);
        DurationDistribution {
            support: vec![(base, 0.6), (base + 1, 0.4)],
        }
    }

    pub fn support(&self) -> &[(usize, f64)] {
        &self.support
    }

    pub fn max_duration(&self) -> usize {
        self.support.last().map(|&(tau, _)| tau).unwrap_or(1)
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().map(|&(tau, p)| tau as f64 * p).sum()
    }

    /// Expected number of epochs accrued when at most `remaining` are left.
    pub fn expected_truncated(&self, remaining: usize) -> f64 {
        self.support
            .iter()
            .map(|&(tau, p)| tau.min(remaining) as f64 * p)
            .sum()
    }

    /// Draws a duration from a uniform variate in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for &(tau, p) in &self.support {
            acc += p;
            if u < acc {
                return tau;
            }
        }
        self.max_duration()
    }
}

impl TryFrom<Vec<(usize, f64)>> for DurationDistribution {
    type Error = ModelError;
    fn try_from(v: Vec<(usize, f64)>) -> Result<Self, ModelError> {
        DurationDistribution::new(v)
    }
}

impl From<DurationDistribution> for Vec<(usize, f64)> {
    fn from(d: DurationDistribution) -> Self {
        d.support
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub next: RobotState,
    pub probability: f64,
    pub durations: DurationDistribution,
}

/// Action outcomes. Moves always reach their target; all stochasticity is
/// in the duration.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionModel {
    move_durations: Vec<Vec<Option<DurationDistribution>>>,
    perch_duration: DurationDistribution,
    unperch_duration: DurationDistribution,
}

impl TransitionModel {
    /// Travel-time move durations between every waypoint pair and fixed
    /// perch/unperch durations.
    pub fn from_travel_speed(waypoints: &[Waypoint], speed: f64, perch_duration: usize) -> Self {
        let n = waypoints.len();
        let move_durations = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (i != j).then(|| {
                            let d = (waypoints[i].position - waypoints[j].position).norm();
                            DurationDistribution::travel(d, speed)
                        })
                    })
                    .collect()
            })
            .collect();
        let fixed = DurationDistribution {
            support: vec![(perch_duration.max(1), 1.0)],
        };
        TransitionModel {
            move_durations,
            perch_duration: fixed.clone(),
            unperch_duration: fixed,
        }
    }

    pub fn set_move_durations(
        &mut self,
        from: usize,
        to: usize,
        durations: DurationDistribution,
    ) -> Result<(), ModelError> {
        let n = self.move_durations.len();
        if from >= n {
            return Err(ModelError::UnknownWaypoint(from));
        }
        if to >= n {
            return Err(ModelError::UnknownWaypoint(to));
        }
        self.move_durations[from][to] = Some(durations);
        Ok(())
    }

    pub fn set_perch_durations(&mut self, perch: DurationDistribution, unperch: DurationDistribution) {
        self.perch_duration = perch;
        self.unperch_duration = unperch;
    }

    pub fn move_durations(&self, from: usize, to: usize) -> Option<&DurationDistribution> {
        self.move_durations.get(from)?.get(to)?.as_ref()
    }

    pub fn waypoint_count(&self) -> usize {
        self.move_durations.len()
    }

    /// Outcomes of `action` from `state`; legality is checked by the model.
    pub fn outcomes(&self, state: RobotState, action: Action) -> Result<Vec<Outcome>, ModelError> {
        let (next, durations) = match action {
            Action::HoldPos => (state, DurationDistribution::fixed(1)?),
            Action::Perch => (
                RobotState::new(state.waypoint, true),
                self.perch_duration.clone(),
            ),
            Action::Unperch => (
                RobotState::new(state.waypoint, false),
                self.unperch_duration.clone(),
            ),
            Action::Move(to) => (
                RobotState::new(to, false),
                self.move_durations(state.waypoint, to)
                    .cloned()
                    .ok_or(ModelError::MissingMoveDuration {
                        from: state.waypoint,
                        to,
                    })?,
            ),
        };
        Ok(vec![Outcome {
            next,
            probability: 1.0,
            durations,
        }])
    }
}

/// Indexed view of the robot states and their action lists.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    states: Vec<RobotState>,
    index: Vec<[Option<usize>; 2]>,
    actions: Vec<Vec<Action>>,
    offsets: Vec<usize>,
    slots: usize,
}

impl StateSpace {
    fn build(waypoints: &[Waypoint]) -> Self {
        let states = enumerate_robot_states(waypoints);
        let mut index = vec![[None, None]; waypoints.len()];
        for (i, s) in states.iter().enumerate() {
            index[s.waypoint][s.perched as usize] = Some(i);
        }
        let actions: Vec<Vec<Action>> = states
            .iter()
            .map(|&s| legal_actions(waypoints, s))
            .collect();
        let mut offsets = Vec::with_capacity(states.len());
        let mut slots = 0;
        for a in &actions {
            offsets.push(slots);
            slots += a.len();
        }
        StateSpace {
            states,
            index,
            actions,
            offsets,
            slots,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[RobotState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> RobotState {
        self.states[index]
    }

    pub fn index_of(&self, state: RobotState) -> Option<usize> {
        self.index.get(state.waypoint)?[state.perched as usize]
    }

    pub fn actions(&self, state: usize) -> &[Action] {
        &self.actions[state]
    }

    pub fn action_index(&self, state: usize, action: Action) -> Option<usize> {
        self.actions[state].iter().position(|&a| a == action)
    }

    /// Flat index of `(state, action)` among all state-action pairs.
    pub fn slot(&self, state: usize, action: usize) -> usize {
        self.offsets[state] + action
    }

    /// Number of state-action pairs per epoch.
    pub fn slot_count(&self) -> usize {
        self.slots
    }
}

/// The full observation SMDP over a finite horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationModel {
    waypoints: Vec<Waypoint>,
    transition: TransitionModel,
    horizon: usize,
    initial: RobotState,
    space: StateSpace,
}

impl ObservationModel {
    pub fn new(
        waypoints: Vec<Waypoint>,
        transition: TransitionModel,
        horizon: usize,
        initial: RobotState,
    ) -> Result<Self, ModelError> {
        if waypoints.is_empty() {
            return Err(ModelError::NoWaypoints);
        }
        for (i, w) in waypoints.iter().enumerate() {
            if w.id != i {
                return Err(ModelError::NonContiguousIds {
                    expected: i,
                    found: w.id,
                });
            }
        }
        if horizon == 0 {
            return Err(ModelError::ZeroHorizon);
        }
        let n = waypoints.len();
        for from in 0..n {
            for to in (0..n).filter(|&to| to != from) {
                if transition.move_durations(from, to).is_none() {
                    return Err(ModelError::MissingMoveDuration { from, to });
                }
            }
        }
        check_state(&waypoints, initial)?;
        let space = StateSpace::build(&waypoints);
        Ok(ObservationModel {
            waypoints,
            transition,
            horizon,
            initial,
            space,
        })
    }

    /// Waypoints with default travel-time moves and perch durations.
    pub fn with_defaults(
        waypoints: Vec<Waypoint>,
        horizon: usize,
        initial: RobotState,
    ) -> Result<Self, ModelError> {
        let transition = TransitionModel::from_travel_speed(
            &waypoints,
            DEFAULT_TRAVEL_SPEED,
            DEFAULT_PERCH_DURATION,
        );
        Self::new(waypoints, transition, horizon, initial)
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn waypoint(&self, id: usize) -> &Waypoint {
        &self.waypoints[id]
    }

    pub fn transition(&self) -> &TransitionModel {
        &self.transition
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial(&self) -> RobotState {
        self.initial
    }

    pub fn initial_index(&self) -> usize {
        self.space
            .index_of(self.initial)
            .expect("initial state validated at construction")
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    /// Same model with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self, ModelError> {
        if horizon == 0 {
            return Err(ModelError::ZeroHorizon);
        }
        Ok(ObservationModel {
            horizon,
            ..self.clone()
        })
    }

    pub fn validate_state(&self, state: RobotState) -> Result<(), ModelError> {
        check_state(&self.waypoints, state)
    }

    /// Outcomes of a legal action, as `(next state index, probability, durations)`.
    pub fn outcomes(&self, state: usize, action: usize) -> Vec<(usize, f64, DurationDistribution)> {
        let s = self.space.state(state);
        let a = self.space.actions(state)[action];
        self.transition
            .outcomes(s, a)
            .expect("legal actions have outcomes in a validated model")
            .into_iter()
            .map(|o| {
                let next = self
                    .space
                    .index_of(o.next)
                    .expect("outcomes of legal actions are valid states");
                (next, o.probability, o.durations)
            })
            .collect()
    }
}

fn check_state(waypoints: &[Waypoint], state: RobotState) -> Result<(), ModelError> {
    let w = waypoints
        .get(state.waypoint)
        .ok_or(ModelError::UnknownWaypoint(state.waypoint))?;
    if state.perched && !w.has_handrail {
        return Err(ModelError::PerchedWithoutHandrail(state.waypoint));
    }
    Ok(())
}

fn enumerate_robot_states(waypoints: &[Waypoint]) -> Vec<RobotState> {
    let mut states = Vec::with_capacity(waypoints.len() * 2);
    for w in waypoints {
        states.push(RobotState::new(w.id, false));
        if w.has_handrail {
            states.push(RobotState::new(w.id, true));
        }
    }
    states
}

fn legal_actions(waypoints: &[Waypoint], state: RobotState) -> Vec<Action> {
    let mut actions = vec![Action::HoldPos];
    if state.perched {
        actions.push(Action::Unperch);
        return actions;
    }
    if waypoints[state.waypoint].has_handrail {
        actions.push(Action::Perch);
    }
    actions.extend(
        waypoints
            .iter()
            .filter(|w| w.id != state.waypoint)
            .map(|w| Action::Move(w.id)),
    );
    actions
}

/// Actions available in `state`: hold_pos, then perch/unperch where legal,
/// then moves by ascending target id. Perched robots can only hold or unperch.
pub fn available_actions(model: &ObservationModel, state: &WorldState) -> Result<Vec<Action>, ModelError> {
    model.validate_state(state.robot)?;
    if state.epoch > model.horizon() {
        return Err(ModelError::EpochOutOfRange {
            epoch: state.epoch,
            horizon: model.horizon(),
        });
    }
    Ok(legal_actions(model.waypoints(), state.robot))
}

/// All valid robot states, by waypoint id with unperched before perched.
pub fn enumerate_states(model: &ObservationModel) -> Vec<RobotState> {
    model.space().states().to_vec()
}

/// One `(action, next state, duration)` branch of the time-expanded graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpandedEdge {
    /// Index into the source state's action list.
    pub action: usize,
    pub next: usize,
    /// Joint probability of the outcome and the duration.
    pub probability: f64,
    pub duration: usize,
    /// Epoch at which the action completes, clamped to the horizon.
    pub landing: usize,
    pub truncated: bool,
}

/// The model unrolled over decision epochs `0..horizon`. Every edge strictly
/// increases the epoch; edges landing at the horizon terminate.
#[derive(Clone, Debug)]
pub struct TimeExpandedGraph {
    horizon: usize,
    states: usize,
    slots: usize,
    edges: Vec<Vec<ExpandedEdge>>,
    accrual: Vec<f64>,
}

impl TimeExpandedGraph {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    /// All branches leaving `state` at `epoch`, grouped by action.
    pub fn edges(&self, epoch: usize, state: usize) -> &[ExpandedEdge] {
        &self.edges[epoch * self.states + state]
    }

    /// Expected epochs accrued by taking the action in `slot` at `epoch`,
    /// with durations truncated at the horizon.
    pub fn expected_accrual(&self, epoch: usize, slot: usize) -> f64 {
        self.accrual[epoch * self.slots + slot]
    }

    /// Which `(epoch, state)` pairs have positive probability of being
    /// visited from `(0, start)` under some policy.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.horizon * self.states];
        seen[start] = true;
        for t in 0..self.horizon {
            for s in 0..self.states {
                if !seen[t * self.states + s] {
                    continue;
                }
                for e in self.edges(t, s) {
                    if e.landing < self.horizon && e.probability > 0.0 {
                        seen[e.landing * self.states + e.next] = true;
                    }
                }
            }
        }
        seen
    }
}

/// Unrolls the model over its horizon. A branch whose completion would pass
/// the horizon lands at the horizon and accrues only the remaining epochs.
pub fn time_expand(model: &ObservationModel) -> TimeExpandedGraph {
    let horizon = model.horizon();
    let space = model.space();
    let n = space.len();
    let slots = space.slot_count();

    let outcomes: Vec<Vec<Vec<(usize, f64, DurationDistribution)>>> = (0..n)
        .map(|s| {
            (0..space.actions(s).len())
                .map(|a| model.outcomes(s, a))
                .collect()
        })
        .collect();

    let mut edges = Vec::with_capacity(horizon * n);
    let mut accrual = vec![0.0; horizon * slots];
    for t in 0..horizon {
        let remaining = horizon - t;
        for (s, per_action) in outcomes.iter().enumerate() {
            let mut list = Vec::new();
            for (a, outs) in per_action.iter().enumerate() {
                let mut expected = 0.0;
                for (next, p, durations) in outs {
                    for &(tau, pt) in durations.support() {
                        let probability = p * pt;
                        let truncated = tau > remaining;
                        list.push(ExpandedEdge {
                            action: a,
                            next: *next,
                            probability,
                            duration: tau,
                            landing: (t + tau).min(horizon),
                            truncated,
                        });
                        expected += probability * tau.min(remaining) as f64;
                    }
                }
                accrual[t * slots + space.slot(s, a)] = expected;
            }
            edges.push(list);
        }
    }
    TimeExpandedGraph {
        horizon,
        states: n,
        slots,
        edges,
        accrual,
    }
}
