//! Policy rollouts against realized human trajectories and their
//! aggregation into per-cell statistics.
//!
//! A rollout starts at epoch 0 in the model's initial state, draws actions
//! from the policy, and samples each action's outcome and duration from the
//! model. While an action runs, the rates realized at its start epoch accrue
//! for every epoch until it completes or the horizon is reached, which is the
//! same accrual rule the planners optimize.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmdp::StochasticPolicy;
use crate::geometry::{CameraModel, CostParams};
use crate::momdp::DeterministicPolicy;
use crate::objectives::Objectives;
use crate::smdp::{Action, ObservationModel, RobotState};
use crate::trajectory::{exact_rates, ExpectedRateTable, SampledTrajectory};

/// Header of the per-run CSV.
pub const RUNS_HEADER: &str = "task,scenario,method,traj_index,run_index,r,c0,c1,c2,wall_time_ms";

/// Header of the per-aggregate CSV. Standard deviations are sample
/// deviations pooled over every run of every evaluation trajectory; the
/// baseline is the mean known-trajectory optimum over `baseline_n`
/// trajectories (empty when none is available).
pub const AGGREGATE_HEADER: &str = "task,scenario,method,n_runs,\
mean_r,mean_c0,mean_c1,mean_c2,std_r,std_c0,std_c1,std_c2,\
baseline_n,baseline_r,baseline_c0,baseline_c1,baseline_c2";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Momdp,
    Cmdp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Momdp => "momdp",
            Method::Cmdp => "cmdp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "momdp" => Ok(Method::Momdp),
            "cmdp" => Ok(Method::Cmdp),
            _ => Err(format!("unknown method `{s}`")),
        }
    }
}

/// Anything that picks an action index at `(epoch, state)`.
pub trait Policy: Sync {
    fn horizon(&self) -> usize;
    fn state_count(&self) -> usize;
    fn choose(&self, epoch: usize, state: usize, rng: &mut ChaCha8Rng) -> usize;
}

impl Policy for DeterministicPolicy {
    fn horizon(&self) -> usize {
        DeterministicPolicy::horizon(self)
    }

    fn state_count(&self) -> usize {
        DeterministicPolicy::state_count(self)
    }

    fn choose(&self, epoch: usize, state: usize, _rng: &mut ChaCha8Rng) -> usize {
        self.choice(epoch, state)
    }
}

impl Policy for StochasticPolicy {
    fn horizon(&self) -> usize {
        StochasticPolicy::horizon(self)
    }

    fn state_count(&self) -> usize {
        StochasticPolicy::state_count(self)
    }

    fn choose(&self, epoch: usize, state: usize, rng: &mut ChaCha8Rng) -> usize {
        match self.distribution(epoch, state) {
            [(a, _)] => *a,
            _ => self.sample(epoch, state, rng.random::<f64>()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceStep {
    pub epoch: usize,
    pub state: RobotState,
    pub action: Action,
    pub duration: usize,
}

/// One simulated execution.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub totals: Objectives,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("policy covers horizon {policy} with {policy_states} states but the model has horizon {model} with {model_states} states")]
    PolicyMismatch {
        policy: usize,
        policy_states: usize,
        model: usize,
        model_states: usize,
    },
    #[error("rate table does not match the model")]
    RateMismatch,
    #[error("rate evaluation failed: {0}")]
    Rates(String),
    #[error("no evaluation trajectories")]
    NoTrajectories,
    #[error("n_runs must be at least 1")]
    NoRuns,
}

fn check(model: &ObservationModel, policy: &dyn Policy) -> Result<(), HarnessError> {
    if policy.horizon() != model.horizon() || policy.state_count() != model.space().len() {
        return Err(HarnessError::PolicyMismatch {
            policy: policy.horizon(),
            policy_states: policy.state_count(),
            model: model.horizon(),
            model_states: model.space().len(),
        });
    }
    Ok(())
}

/// RNG for rollout `stream` under `seed`.
pub fn rollout_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates `policy` against the per-epoch rates `realized` of one known
/// trajectory (see [`crate::trajectory::exact_rates`]).
pub fn rollout(
    model: &ObservationModel,
    policy: &dyn Policy,
    realized: &ExpectedRateTable,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout, HarnessError> {
    check(model, policy)?;
    if !realized.covers(model) {
        return Err(HarnessError::RateMismatch);
    }
    let space = model.space();
    let horizon = model.horizon();
    let mut totals = Objectives::ZERO;
    let mut trace = Vec::new();
    let mut state = model.initial_index();
    let mut t = 0;
    while t < horizon {
        let a = policy.choose(t, state, rng);
        let outcomes = model.outcomes(state, a);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = outcomes.len() - 1;
        for (i, (_, p, _)) in outcomes.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        let (next, _, durations) = &outcomes[pick];
        let tau = durations.sample_with(rng.random());
        let end = (t + tau).min(horizon);
        totals += realized.get(t, space.slot(state, a)) * (end - t) as f64;
        trace.push(TraceStep {
            epoch: t,
            state: space.state(state),
            action: space.actions(state)[a],
            duration: tau,
        });
        state = *next;
        t = end;
    }
    Ok(Rollout { totals, trace })
}

/// [`rollout`] against a trajectory, evaluating its exact rates first.
/// Trajectories shorter than the horizon hold their final pose.
pub fn rollout_on_trajectory(
    model: &ObservationModel,
    policy: &dyn Policy,
    trajectory: &SampledTrajectory,
    camera: &CameraModel,
    params: &CostParams,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout, HarnessError> {
    let realized = exact_rates(model, &trajectory.extended_to(model.horizon()), camera, params)
        .map_err(|e| HarnessError::Rates(e.to_string()))?;
    rollout(model, policy, &realized, rng)
}

/// One row of the per-run CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub task: String,
    pub scenario: String,
    pub method: Method,
    pub traj_index: usize,
    pub run_index: usize,
    pub totals: Objectives,
    pub trace: Vec<TraceStep>,
    pub wall_time_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateResult {
    pub task: String,
    pub scenario: String,
    pub method: Method,
    pub n_runs: usize,
    pub mean: Objectives,
    pub stddev: Objectives,
    pub baseline: Option<Objectives>,
    pub baseline_n: usize,
}

/// Mean and sample standard deviation (zero for a single run), summed in
/// input order.
pub fn mean_and_stddev(totals: &[Objectives]) -> (Objectives, Objectives) {
    let n = totals.len();
    if n == 0 {
        return (Objectives::ZERO, Objectives::ZERO);
    }
    let mut sum = Objectives::ZERO;
    for t in totals {
        sum += *t;
    }
    let mean = sum * (1.0 / n as f64);
    if n == 1 {
        return (mean, Objectives::ZERO);
    }
    let mut sq = Objectives::ZERO;
    for t in totals {
        let d = *t - mean;
        sq += Objectives(d.0.map(|x| x * x));
    }
    let var = sq * (1.0 / (n - 1) as f64);
    (mean, Objectives(var.0.map(f64::sqrt)))
}

/// A (task, scenario, method) combination to evaluate.
pub struct Cell<'a> {
    pub task: &'a str,
    pub scenario: &'a str,
    pub method: Method,
    pub model: &'a ObservationModel,
    pub policy: &'a dyn Policy,
    /// Exact rates of each evaluation trajectory.
    pub realized: &'a [ExpectedRateTable],
    pub baseline: Option<(Objectives, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixOptions {
    pub n_runs: usize,
    pub seed: u64,
    /// Record per-run wall time; off by default so CSVs stay reproducible.
    pub timing: bool,
}

/// Runs `n_runs` rollouts per evaluation trajectory for every cell. Run `r`
/// on trajectory `i` uses RNG stream `i · n_runs + r`, so every cell sees the
/// same random numbers. Cells run in parallel; results keep input order.
pub fn run_matrix(
    cells: &[Cell<'_>],
    options: &MatrixOptions,
) -> Result<(Vec<RunResult>, Vec<AggregateResult>), HarnessError> {
    if options.n_runs == 0 {
        return Err(HarnessError::NoRuns);
    }
    let per_cell = cells
        .par_iter()
        .map(|cell| run_cell(cell, options))
        .collect::<Result<Vec<_>, _>>()?;
    let mut runs = Vec::new();
    let mut aggregates = Vec::with_capacity(per_cell.len());
    for (cell_runs, agg) in per_cell {
        runs.extend(cell_runs);
        aggregates.push(agg);
    }
    Ok((runs, aggregates))
}

fn run_cell(cell: &Cell<'_>, options: &MatrixOptions) -> Result<(Vec<RunResult>, AggregateResult), HarnessError> {
    if cell.realized.is_empty() {
        return Err(HarnessError::NoTrajectories);
    }
    let mut runs = Vec::with_capacity(cell.realized.len() * options.n_runs);
    for (i, realized) in cell.realized.iter().enumerate() {
        for r in 0..options.n_runs {
            let started = std::time::Instant::now();
            let mut rng = rollout_rng(options.seed, (i * options.n_runs + r) as u64);
            let out = rollout(cell.model, cell.policy, realized, &mut rng)?;
            let wall_time_ms = options
                .timing
                .then(|| started.elapsed().as_secs_f64() * 1e3);
            runs.push(RunResult {
                task: cell.task.to_string(),
                scenario: cell.scenario.to_string(),
                method: cell.method,
                traj_index: i,
                run_index: r,
                totals: out.totals,
                trace: out.trace,
                wall_time_ms,
            });
        }
    }
    let totals: Vec<Objectives> = runs.iter().map(|r| r.totals).collect();
    let (mean, stddev) = mean_and_stddev(&totals);
    let aggregate = AggregateResult {
        task: cell.task.to_string(),
        scenario: cell.scenario.to_string(),
        method: cell.method,
        n_runs: runs.len(),
        mean,
        stddev,
        baseline: cell.baseline.map(|(b, _)| b),
        baseline_n: cell.baseline.map_or(0, |(_, n)| n),
    };
    Ok((runs, aggregate))
}

pub fn write_runs_csv<W: Write>(runs: &[RunResult], mut out: W) -> io::Result<()> {
    writeln!(out, "{RUNS_HEADER}")?;
    for r in runs {
        let t = r.totals;
        let wall = r.wall_time_ms.map(|w| format!("{w:.3}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.task, r.scenario, r.method, r.traj_index, r.run_index, t[0], t[1], t[2], t[3], wall
        )?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateResult], mut out: W) -> io::Result<()> {
    writeln!(out, "{AGGREGATE_HEADER}")?;
    for a in rows {
        let (m, s) = (a.mean, a.stddev);
        let baseline = match a.baseline {
            Some(b) => format!("{},{},{},{}", b[0], b[1], b[2], b[3]),
            None => ",,,".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            a.task, a.scenario, a.method, a.n_runs, m[0], m[1], m[2], m[3], s[0], s[1], s[2], s[3],
            a.baseline_n, baseline
        )?;
    }
    Ok(())
}

/// Per-run action traces: `task,scenario,method,traj_index,run_index,epoch,waypoint,perched,action,duration`.
pub fn write_traces_csv<W: Write>(runs: &[RunResult], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "task,scenario,method,traj_index,run_index,epoch,waypoint,perched,action,duration"
    )?;
    for r in runs {
        for s in &r.trace {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.task,
                r.scenario,
                r.method,
                r.traj_index,
                r.run_index,
                s.epoch,
                s.state.waypoint,
                s.state.perched,
                s.action,
                s.duration
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::momdp::{solve_momdp, ScalarizationWeights};
    use crate::smdp::{available_actions, Waypoint, WorldState};
    use approx::assert_abs_diff_eq;

    fn model(horizon: usize) -> ObservationModel {
        ObservationModel::with_defaults(
            vec![
                Waypoint::new(0, [0.0, 0.0, 0.0], true),
                Waypoint::new(1, [0.6, 0.0, 0.0], false),
                Waypoint::new(2, [0.0, 0.7, 0.0], true),
            ],
            horizon,
            RobotState::new(0, false),
        )
        .unwrap()
    }

    fn varied_rates(model: &ObservationModel) -> ExpectedRateTable {
        ExpectedRateTable::from_fn(model, |t, s, a| {
            let r = if a == 0 { ((t + 2 * s) % 4) as f64 / 4.0 } else { 0.0 };
            Objectives::new(r, 0.05 * s as f64, 0.1, 0.25)
        })
    }

    #[test]
    fn deterministic_rollouts_repeat() {
        let m = model(20);
        let rates = varied_rates(&m);
        let policy = solve_momdp(&m, &rates, &ScalarizationWeights::reward_only()).unwrap();
        let a = rollout(&m, &policy, &rates, &mut rollout_rng(3, 9)).unwrap();
        let b = rollout(&m, &policy, &rates, &mut rollout_rng(3, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn holding_forever_sums_rates() {
        let m = model(12);
        let rates = varied_rates(&m);
        let hold = DeterministicPolicy::from_choices(&m, vec![0; 12 * m.space().len()]).unwrap();
        let out = rollout(&m, &hold, &rates, &mut rollout_rng(0, 0)).unwrap();
        let s0 = m.initial_index();
        let mut expected = Objectives::ZERO;
        for t in 0..12 {
            expected += rates.get(t, m.space().slot(s0, 0));
        }
        assert!(out.totals.max_abs_diff(&expected) < 1e-12);
        assert_eq!(out.trace.len(), 12);
    }

    #[test]
    fn traces_are_legal_and_totals_bounded() {
        let m = model(30);
        let rates = varied_rates(&m);
        let policy = solve_momdp(&m, &rates, &ScalarizationWeights::new(0.5, 0.0, 0.0, 1.0).unwrap()).unwrap();
        for stream in 0..50 {
            let out = rollout(&m, &policy, &rates, &mut rollout_rng(1, stream)).unwrap();
            for step in &out.trace {
                let legal = available_actions(&m, &WorldState::new(step.state, step.epoch)).unwrap();
                assert!(legal.contains(&step.action));
            }
            for k in 0..4 {
                assert!((0.0..=30.0).contains(&out.totals[k]));
            }
        }
    }

    #[test]
    fn stats_single_run_has_zero_spread() {
        let (m, s) = mean_and_stddev(&[Objectives::new(1.0, 2.0, 3.0, 4.0)]);
        assert_eq!(m, Objectives::new(1.0, 2.0, 3.0, 4.0));
        assert_eq!(s, Objectives::ZERO);
        let (m, s) = mean_and_stddev(&[Objectives::new(1.0, 0.0, 0.0, 0.0), Objectives::new(3.0, 0.0, 0.0, 0.0)]);
        assert_abs_diff_eq!(m[0], 2.0);
        assert_abs_diff_eq!(s[0], 2f64.sqrt());
    }

    #[test]
    fn matrix_shape_and_csv() {
        let m = model(10);
        let rates = varied_rates(&m);
        let policy = solve_momdp(&m, &rates, &ScalarizationWeights::reward_only()).unwrap();
        let realized = vec![rates.clone(), rates.clone()];
        let cells = [Cell {
            task: "toy",
            scenario: "s",
            method: Method::Momdp,
            model: &m,
            policy: &policy,
            realized: &realized,
            baseline: None,
        }];
        let opts = MatrixOptions {
            n_runs: 3,
            seed: 5,
            timing: false,
        };
        let (runs, aggs) = run_matrix(&cells, &opts).unwrap();
        assert_eq!(runs.len(), 6);
        assert_eq!(aggs[0].n_runs, 6);
        let mut buf = Vec::new();
        write_runs_csv(&runs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(RUNS_HEADER));
        assert!(text.lines().nth(1).unwrap().starts_with("toy,s,momdp,0,0,"));
        assert!(text.lines().nth(1).unwrap().ends_with(','));
        let mut buf = Vec::new();
        write_aggregate_csv(&aggs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().ends_with(",0,,,,"));
    }
}
