//! Constrained planning: maximize expected accumulated reward subject to
//! budgets on the three expected accumulated costs, solved as a linear
//! program over time-expanded occupancy measures.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LinearProgram, LpError, LpStatus, Relation, SolverOptions};
use crate::objectives::{Objectives, OBJECTIVE_NAMES};
use crate::smdp::{time_expand, ObservationModel, TimeExpandedGraph};
use crate::trajectory::ExpectedRateTable;

/// Occupancy below this is treated as zero when recovering the policy.
const OCCUPANCY_FLOOR: f64 = 1e-12;
const BUDGET_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmdpError {
    #[error("rate table does not match the model's horizon and action space")]
    RateMismatch,
    #[error("invalid constraint thresholds: {0}")]
    InvalidThresholds(String),
    #[error("constraints unsatisfiable: {0}")]
    Unsatisfiable(Infeasibility),
    #[error("occupancy program is unbounded")]
    Unbounded,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Which budgets cannot be met, with the least expected cost achievable for
/// each one taken on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasibility {
    pub thresholds: ConstraintThresholds,
    pub minimum_costs: [f64; 3],
    /// Indices (0 = collision, 1 = intrusion, 2 = power) of budgets that are
    /// infeasible even alone. Empty when only the combination is infeasible.
    pub violated: Vec<usize>,
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.thresholds.to_array();
        if self.violated.is_empty() {
            return write!(
                f,
                "each budget is attainable alone but not jointly (d = [{}, {}, {}])",
                d[0], d[1], d[2]
            );
        }
        let parts: Vec<String> = self
            .violated
            .iter()
            .map(|&k| {
                format!(
                    "d_{} = {} is below the least achievable expected {} cost {:.6}",
                    OBJECTIVE_NAMES[k + 1],
                    d[k],
                    COST_LABELS[k],
                    self.minimum_costs[k]
                )
            })
            .collect();
        f.write_str(&parts.join("; "))
    }
}

const COST_LABELS: [&str; 3] = ["collision", "intrusion", "power"];

/// Budgets on expected accumulated collision, intrusion and power cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct ConstraintThresholds {
    pub collision: f64,
    pub intrusion: f64,
    pub power: f64,
}

impl ConstraintThresholds {
    pub fn new(collision: f64, intrusion: f64, power: f64) -> Result<Self, CmdpError> {
        if [collision, intrusion, power]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(CmdpError::InvalidThresholds(
                "thresholds must be finite and non-negative".into(),
            ));
        }
        Ok(ConstraintThresholds {
            collision,
            intrusion,
            power,
        })
    }

    /// All three budgets equal to `d`.
    pub fn uniform(d: f64) -> Result<Self, CmdpError> {
        Self::new(d, d, d)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.collision, self.intrusion, self.power]
    }

    pub fn satisfied_by(&self, value: &Objectives, tol: f64) -> bool {
        value
            .costs()
            .iter()
            .zip(self.to_array())
            .all(|(c, d)| *c <= d + tol)
    }
}

impl TryFrom<[f64; 3]> for ConstraintThresholds {
    type Error = CmdpError;
    fn try_from(d: [f64; 3]) -> Result<Self, CmdpError> {
        Self::new(d[0], d[1], d[2])
    }
}

impl From<ConstraintThresholds> for [f64; 3] {
    fn from(d: ConstraintThresholds) -> Self {
        d.to_array()
    }
}

/// One LP column: occupancy of `action` (index into the state's action list)
/// in `state` at `epoch`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OccupancyVar {
    pub epoch: usize,
    pub state: usize,
    pub action: usize,
}

/// The occupancy LP with its column layout. Rows are one flow-balance
/// equality per reachable `(epoch, state)` in epoch-major order, followed by
/// the collision, intrusion and power budget rows.
#[derive(Clone, Debug)]
pub struct CmdpProgram {
    pub lp: LinearProgram,
    pub variables: Vec<OccupancyVar>,
    pub flow_rows: usize,
    /// Per-variable accrued `[r, c0, c1, c2]` (rate × expected truncated duration).
    pub accrued: Vec<Objectives>,
}

impl CmdpProgram {
    /// Row index of the budget on cost `k` (0 = collision).
    pub fn budget_row(&self, k: usize) -> usize {
        self.flow_rows + k
    }

    /// Expected accumulated objectives of an occupancy vector.
    pub fn value_of(&self, occupancy: &[f64]) -> Objectives {
        let mut total = Objectives::ZERO;
        for (acc, &y) in self.accrued.iter().zip(occupancy) {
            if y != 0.0 {
                total += *acc * y;
            }
        }
        total
    }
}

pub fn build_cmdp_lp(
    model: &ObservationModel,
    rates: &ExpectedRateTable,
    thresholds: &ConstraintThresholds,
) -> Result<CmdpProgram, CmdpError> {
    build_cmdp_lp_on(model, &time_expand(model), rates, thresholds)
}

pub fn build_cmdp_lp_on(
    model: &ObservationModel,
    graph: &TimeExpandedGraph,
    rates: &ExpectedRateTable,
    thresholds: &ConstraintThresholds,
) -> Result<CmdpProgram, CmdpError> {
    if !rates.covers(model) || graph.horizon() != model.horizon() {
        return Err(CmdpError::RateMismatch);
    }
    let space = model.space();
    let n = space.len();
    let horizon = model.horizon();
    let reachable = graph.reachable_from(model.initial_index());

    let mut row_of = vec![usize::MAX; horizon * n];
    let mut flow_rows = 0;
    for (i, &r) in reachable.iter().enumerate() {
        if r {
            row_of[i] = flow_rows;
            flow_rows += 1;
        }
    }

    let mut variables = Vec::new();
    let mut accrued = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); flow_rows];
    for t in 0..horizon {
        for s in 0..n {
            let row = row_of[t * n + s];
            if row == usize::MAX {
                continue;
            }
            let first = variables.len();
            for a in 0..space.actions(s).len() {
                let j = variables.len();
                variables.push(OccupancyVar {
                    epoch: t,
                    state: s,
                    action: a,
                });
                let slot = space.slot(s, a);
                accrued.push(rates.get(t, slot) * graph.expected_accrual(t, slot));
                rows[row].push((j, 1.0));
            }
            for e in graph.edges(t, s) {
                if e.landing < horizon {
                    rows[row_of[e.landing * n + e.next]].push((first + e.action, -e.probability));
                }
            }
        }
    }

    let mut lp = LinearProgram::new(accrued.iter().map(|v| v.reward()).collect());
    let initial = row_of[model.initial_index()];
    for (i, coeffs) in rows.into_iter().enumerate() {
        let rhs = if i == initial { 1.0 } else { 0.0 };
        lp.add_constraint(coeffs, Relation::Eq, rhs)?;
    }
    for (k, d) in thresholds.to_array().into_iter().enumerate() {
        let coeffs = accrued
            .iter()
            .enumerate()
            .map(|(j, v)| (j, v[k + 1]))
            .collect();
        lp.add_constraint(coeffs, Relation::Le, d)?;
    }
    Ok(CmdpProgram {
        lp,
        variables,
        flow_rows,
        accrued,
    })
}

/// Time-indexed randomized policy recovered from an optimal occupancy measure.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticPolicy {
    horizon: usize,
    states: usize,
    /// Per `(epoch, state)`: `(action index, probability)` with positive probability.
    distributions: Vec<Vec<(usize, f64)>>,
    occupancy: Vec<f64>,
    expected_value: Objectives,
}

impl StochasticPolicy {
    /// Normalizes occupancies per `(epoch, state)`. Where the total is zero
    /// the policy holds position (action index 0).
    pub fn from_occupancy(
        model: &ObservationModel,
        program: &CmdpProgram,
        occupancy: &[f64],
    ) -> StochasticPolicy {
        let n = model.space().len();
        let horizon = model.horizon();
        let mut totals = vec![0.0; horizon * n];
        for (v, &y) in program.variables.iter().zip(occupancy) {
            totals[v.epoch * n + v.state] += y;
        }
        let mut distributions = vec![Vec::new(); horizon * n];
        for (v, &y) in program.variables.iter().zip(occupancy) {
            let idx = v.epoch * n + v.state;
            if totals[idx] > OCCUPANCY_FLOOR && y > 0.0 {
                distributions[idx].push((v.action, y / totals[idx]));
            }
        }
        for d in &mut distributions {
            if d.is_empty() {
                d.push((0, 1.0));
            }
        }
        StochasticPolicy {
            horizon,
            states: n,
            distributions,
            occupancy: totals,
            expected_value: program.value_of(occupancy),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    pub fn distribution(&self, epoch: usize, state: usize) -> &[(usize, f64)] {
        &self.distributions[epoch * self.states + state]
    }

    /// Total occupancy of `(epoch, state)` under the optimal measure.
    pub fn occupancy(&self, epoch: usize, state: usize) -> f64 {
        self.occupancy[epoch * self.states + state]
    }

    /// Expected accumulated `[r, c0, c1, c2]` from the initial state.
    pub fn expected_value(&self) -> Objectives {
        self.expected_value
    }

    /// Action index for a uniform draw `u ∈ [0, 1)`.
    pub fn sample(&self, epoch: usize, state: usize, u: f64) -> usize {
        let dist = self.distribution(epoch, state);
        let mut acc = 0.0;
        for &(a, p) in dist {
            acc += p;
            if u < acc {
                return a;
            }
        }
        dist.last().map(|&(a, _)| a).unwrap_or(0)
    }

    /// True when every `(epoch, state)` has a single action.
    pub fn is_deterministic(&self) -> bool {
        self.distributions.iter().all(|d| d.len() == 1)
    }

    /// A comment line with the expected value, then one record per
    /// `(epoch, state, action)` with positive probability:
    /// `epoch,waypoint,perched,action,probability`.
    pub fn write_csv<W: Write>(&self, model: &ObservationModel, mut out: W) -> io::Result<()> {
        let v = self.expected_value;
        writeln!(
            out,
            "# expected_value r={} c0={} c1={} c2={}",
            v[0], v[1], v[2], v[3]
        )?;
        writeln!(out, "epoch,waypoint,perched,action,probability")?;
        for t in 0..self.horizon {
            for s in 0..self.states {
                let state = model.space().state(s);
                for &(a, p) in self.distribution(t, s) {
                    writeln!(
                        out,
                        "{t},{},{},{},{p}",
                        state.waypoint,
                        state.perched,
                        model.space().actions(s)[a]
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Expected accumulated objectives under `rates` by a forward pass over
    /// the policy's own action distributions.
    pub fn evaluate(
        &self,
        model: &ObservationModel,
        rates: &ExpectedRateTable,
    ) -> Result<Objectives, CmdpError> {
        if !rates.covers(model) || self.horizon != model.horizon() {
            return Err(CmdpError::RateMismatch);
        }
        let graph = time_expand(model);
        let n = self.states;
        let mut mass = vec![0.0; self.horizon * n];
        mass[model.initial_index()] = 1.0;
        let mut total = Objectives::ZERO;
        for t in 0..self.horizon {
            for s in 0..n {
                let m = mass[t * n + s];
                if m == 0.0 {
                    continue;
                }
                for &(a, p) in self.distribution(t, s) {
                    let slot = model.space().slot(s, a);
                    total += rates.get(t, slot) * (graph.expected_accrual(t, slot) * m * p);
                }
                for e in graph.edges(t, s) {
                    if e.landing >= self.horizon {
                        continue;
                    }
                    let p = self
                        .distribution(t, s)
                        .iter()
                        .find(|&&(a, _)| a == e.action)
                        .map_or(0.0, |&(_, p)| p);
                    mass[e.landing * n + e.next] += m * p * e.probability;
                }
            }
        }
        Ok(total)
    }
}

/// Solution of a constrained planning problem.
#[derive(Clone, Debug)]
pub struct CmdpSolution {
    pub policy: StochasticPolicy,
    /// Optimal occupancy per LP column.
    pub occupancy: Vec<f64>,
    pub program: CmdpProgram,
    pub iterations: usize,
}

/// Solves with [`SolverOptions::hybrid`] pricing.
pub fn solve_cmdp(
    model: &ObservationModel,
    rates: &ExpectedRateTable,
    thresholds: &ConstraintThresholds,
) -> Result<CmdpSolution, CmdpError> {
    solve_cmdp_with(model, rates, thresholds, &SolverOptions::hybrid())
}

pub fn solve_cmdp_with(
    model: &ObservationModel,
    rates: &ExpectedRateTable,
    thresholds: &ConstraintThresholds,
    options: &SolverOptions,
) -> Result<CmdpSolution, CmdpError> {
    let program = build_cmdp_lp(model, rates, thresholds)?;
    let solution = lp::solve_lp_with(&program.lp, options)?;
    match solution.status {
        LpStatus::Optimal => {}
        LpStatus::Unbounded => return Err(CmdpError::Unbounded),
        LpStatus::Infeasible => {
            return Err(CmdpError::Unsatisfiable(diagnose(&program, thresholds, options)?))
        }
    }
    let occupancy = solution.values.expect("optimal solution carries values");
    let policy = StochasticPolicy::from_occupancy(model, &program, &occupancy);
    Ok(CmdpSolution {
        policy,
        occupancy,
        program,
        iterations: solution.iterations,
    })
}

/// Minimizes each cost separately under the flow constraints alone.
fn diagnose(
    program: &CmdpProgram,
    thresholds: &ConstraintThresholds,
    options: &SolverOptions,
) -> Result<Infeasibility, CmdpError> {
    let d = thresholds.to_array();
    let mut minimum_costs = [0.0; 3];
    let mut violated = Vec::new();
    for k in 0..3 {
        let objective = program.accrued.iter().map(|v| -v[k + 1]).collect();
        let mut probe = LinearProgram::new(objective);
        for c in &program.lp.constraints()[..program.flow_rows] {
            probe.add_constraint(c.coeffs.clone(), c.relation, c.rhs)?;
        }
        let sol = lp::solve_lp_with(&probe, options)?;
        minimum_costs[k] = match sol.status {
            LpStatus::Optimal => -sol.objective_value,
            _ => f64::NAN,
        };
        if !(minimum_costs[k] <= d[k] + BUDGET_TOL) {
            violated.push(k);
        }
    }
    Ok(Infeasibility {
        thresholds: *thresholds,
        minimum_costs,
        violated,
    })
}
