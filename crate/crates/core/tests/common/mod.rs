//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls the solvers under test. Policies are evaluated by
//! pushing probability mass forward through `ObservationModel::outcomes`,
//! LPs are solved by enumerating vertices, and coverage is measured on a
//! dense grid.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};
use obsplan::geometry::{CameraModel, RegionOfInterest};
use obsplan::lp::{LinearProgram, Relation};
use obsplan::momdp::ScalarizationWeights;
use obsplan::smdp::{ObservationModel, RobotState, Waypoint};
use obsplan::trajectory::ExpectedRateTable;
use obsplan::Objectives;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random model whose state count (waypoints plus handrails) is at most
/// `max_states`. Waypoints are 0.2 to 1.2 m apart so moves take 1 to 6 epochs.
pub fn random_model(rng: &mut ChaCha8Rng, max_states: usize, horizon: usize) -> ObservationModel {
    assert!(max_states >= 1);
    let n_waypoints = rng.random_range(1..=max_states.min(6));
    let spare = max_states - n_waypoints;
    let n_rails = rng.random_range(0..=spare.min(n_waypoints));
    let mut waypoints = Vec::with_capacity(n_waypoints);
    let mut position = [0.0f64; 3];
    for id in 0..n_waypoints {
        waypoints.push(Waypoint::new(id, position, id < n_rails));
        position[rng.random_range(0..3)] += rng.random_range(0.2..1.2);
    }
    let initial = RobotState::new(rng.random_range(0..n_waypoints), false);
    ObservationModel::with_defaults(waypoints, horizon, initial).unwrap()
}

/// Independent uniform rates in `[0, 1)` per (epoch, state, action).
pub fn random_rates(model: &ObservationModel, rng: &mut ChaCha8Rng) -> ExpectedRateTable {
    ExpectedRateTable::from_fn(model, |_, _, _| {
        Objectives::new(rng.random(), rng.random(), rng.random(), rng.random())
    })
}

pub fn random_weights(rng: &mut ChaCha8Rng) -> ScalarizationWeights {
    loop {
        let w: [f64; 4] = std::array::from_fn(|_| {
            let v: f64 = rng.random();
            if v < 0.2 {
                0.0
            } else {
                rng.random()
            }
        });
        if let Ok(w) = ScalarizationWeights::try_from(w) {
            return w;
        }
    }
}

pub fn scalar(v: &Objectives, w: &ScalarizationWeights) -> f64 {
    let w = w.to_array();
    w[0] * v[0] - w[1] * v[1] - w[2] * v[2] - w[3] * v[3]
}

/// Exact expected totals of a time-indexed randomized policy, given as the
/// action distribution at `(epoch, state)`.
pub fn evaluate_policy(
    model: &ObservationModel,
    rates: &ExpectedRateTable,
    policy: impl Fn(usize, usize) -> Vec<(usize, f64)>,
) -> Objectives {
    let h = model.horizon();
    let n = model.space().len();
    let mut mass = vec![vec![0.0; n]; h];
    mass[0][model.initial_index()] = 1.0;
    let mut total = Objectives::ZERO;
    for t in 0..h {
        for s in 0..n {
            let m = mass[t][s];
            if m == 0.0 {
                continue;
            }
            for (a, pa) in policy(t, s) {
                let rate = rates.get(t, model.space().slot(s, a));
                for (next, p, durations) in model.outcomes(s, a) {
                    for &(tau, q) in durations.support() {
                        let w = m * pa * p * q;
                        total += rate * (w * tau.min(h - t) as f64);
                        if t + tau < h {
                            mass[t + tau][next] += w;
                        }
                    }
                }
            }
        }
    }
    total
}

/// Best scalarized value over every deterministic time-indexed policy,
/// found by enumerating action choices epoch by epoch at the states that
/// carry probability mass. Returns the value and the best policy's choice
/// at each visited `(epoch, state)`.
pub fn brute_force_momdp(
    model: &ObservationModel,
    rates: &ExpectedRateTable,
    weights: &ScalarizationWeights,
) -> (f64, Vec<Option<usize>>) {
    let h = model.horizon();
    let n = model.space().len();
    let mut mass = vec![0.0; (h + 1) * n];
    mass[model.initial_index()] = 1.0;
    let mut choice = vec![None; h * n];
    let mut best_choice = choice.clone();
    let mut best = f64::NEG_INFINITY;
    search(model, rates, weights, 0, &mut mass, 0.0, &mut choice, &mut best, &mut best_choice);
    (best, best_choice)
}

#[allow(clippy::too_many_arguments)]
fn search(
    model: &ObservationModel,
    rates: &ExpectedRateTable,
    weights: &ScalarizationWeights,
    t: usize,
    mass: &mut Vec<f64>,
    value: f64,
    choice: &mut Vec<Option<usize>>,
    best: &mut f64,
    best_choice: &mut Vec<Option<usize>>,
) {
    let h = model.horizon();
    let n = model.space().len();
    if t == h {
        if value > *best {
            *best = value;
            best_choice.clone_from(choice);
        }
        return;
    }
    let live: Vec<usize> = (0..n).filter(|&s| mass[t * n + s] > 0.0).collect();
    let counts: Vec<usize> = live.iter().map(|&s| model.space().actions(s).len()).collect();
    let mut digits = vec![0usize; live.len()];
    loop {
        let mut next_mass = mass.clone();
        let mut v = value;
        for (i, &s) in live.iter().enumerate() {
            let a = digits[i];
            let m = mass[t * n + s];
            let rate = scalar(&rates.get(t, model.space().slot(s, a)), weights);
            for (next, p, durations) in model.outcomes(s, a) {
                for &(tau, q) in durations.support() {
                    let w = m * p * q;
                    v += rate * w * tau.min(h - t) as f64;
                    if t + tau < h {
                        next_mass[(t + tau) * n + next] += w;
                    }
                }
            }
            choice[t * n + s] = Some(a);
        }
        search(model, rates, weights, t + 1, &mut next_mass, v, choice, best, best_choice);
        for &s in &live {
            choice[t * n + s] = None;
        }
        // odometer over the live states' action indices
        let mut i = 0;
        loop {
            if i == digits.len() {
                return;
            }
            digits[i] += 1;
            if digits[i] < counts[i] {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Positive-mass `(epoch, state)` pairs under a deterministic policy.
pub fn reached(model: &ObservationModel, choice: impl Fn(usize, usize) -> usize) -> Vec<(usize, usize)> {
    let h = model.horizon();
    let n = model.space().len();
    let mut live = vec![false; h * n];
    live[model.initial_index()] = true;
    for t in 0..h {
        for s in 0..n {
            if !live[t * n + s] {
                continue;
            }
            for (next, _, durations) in model.outcomes(s, choice(t, s)) {
                for &(tau, _) in durations.support() {
                    if t + tau < h {
                        live[(t + tau) * n + next] = true;
                    }
                }
            }
        }
    }
    (0..h * n).filter(|&i| live[i]).map(|i| (i / n, i % n)).collect()
}

/// Maximum of `lp` over its vertices, or `None` when no vertex is feasible.
/// Every choice of `n` tight constraints (rows or variable bounds) is solved
/// and checked for feasibility.
pub fn vertex_enumeration(lp: &LinearProgram, tol: f64) -> Option<f64> {
    let n = lp.num_vars();
    let rows: Vec<(Vec<f64>, f64)> = lp
        .constraints()
        .iter()
        .map(|c| {
            let mut dense = vec![0.0; n];
            for &(j, v) in &c.coeffs {
                dense[j] += v;
            }
            (dense, c.rhs)
        })
        .collect();
    // Every vertex is the unique solution of n linearly independent tight
    // constraints; equalities are enforced by the feasibility check below,
    // which also copes with redundant equality rows.
    let mut hyperplanes = rows.clone();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        hyperplanes.push((e, 0.0));
    }
    let mut best: Option<f64> = None;
    for active in combinations(hyperplanes.len(), n) {
        let a = DMatrix::from_fn(n, n, |r, c| hyperplanes[active[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| hyperplanes[active[r]].1);
        let lu = a.lu();
        if lu.determinant().abs() < 1e-10 {
            continue;
        }
        let Some(x) = lu.solve(&b) else { continue };
        if x.iter().any(|v| *v < -tol) {
            continue;
        }
        let feasible = lp.constraints().iter().zip(&rows).all(|(c, (dense, rhs))| {
            let lhs: f64 = dense.iter().zip(x.iter()).map(|(a, x)| a * x).sum();
            match c.relation {
                Relation::Le => lhs <= rhs + tol,
                Relation::Ge => lhs >= rhs - tol,
                Relation::Eq => (lhs - rhs).abs() <= tol,
            }
        });
        if feasible {
            let obj: f64 = lp.objective().iter().zip(x.iter()).map(|(c, x)| c * x).sum();
            best = Some(best.map_or(obj, |b: f64| b.max(obj)));
        }
    }
    best
}

pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn relation(rng: &mut ChaCha8Rng) -> Relation {
    match rng.random_range(0..6) {
        0 => Relation::Eq,
        1 | 2 => Relation::Ge,
        _ => Relation::Le,
    }
}

/// Feasible and bounded: built around a known interior-ish point, with a
/// cap on the sum of all variables.
pub fn random_feasible_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearProgram {
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let objective = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
    let mut lp = LinearProgram::new(objective);
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.7) {
                coeffs.push((j, rng.random_range(-2.0..3.0)));
            }
        }
        let at: f64 = coeffs.iter().map(|&(j, v)| v * x0[j]).sum();
        let rel = relation(rng);
        let rhs = match rel {
            Relation::Le => at + rng.random_range(0.0..1.0),
            Relation::Ge => at - rng.random_range(0.0..1.0),
            Relation::Eq => at,
        };
        lp.add_constraint(coeffs, rel, rhs).unwrap();
    }
    let cap: f64 = x0.iter().sum::<f64>() + rng.random_range(0.5..3.0);
    lp.add_constraint((0..n).map(|j| (j, 1.0)).collect(), Relation::Le, cap)
        .unwrap();
    lp
}

/// Infeasible by construction, in one of several flavors: contradictory
/// bounds on a combination, a non-negative row forced below zero, or an
/// equality system with no non-negative solution.
pub fn random_infeasible_lp(rng: &mut ChaCha8Rng, n: usize, m: usize, flavor: usize) -> LinearProgram {
    let mut lp = random_feasible_lp(rng, n, m);
    let support: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
    let support = if support.is_empty() { vec![0] } else { support };
    let pos: Vec<(usize, f64)> = support.iter().map(|&j| (j, rng.random_range(0.5..2.0))).collect();
    match flavor % 3 {
        0 => {
            let lo = rng.random_range(2.0..5.0);
            lp.add_constraint(pos.clone(), Relation::Le, lo).unwrap();
            lp.add_constraint(pos, Relation::Ge, lo + rng.random_range(0.1..2.0))
                .unwrap();
        }
        1 => {
            lp.add_constraint(pos, Relation::Le, -rng.random_range(0.1..2.0))
                .unwrap();
        }
        _ => {
            let neg: Vec<(usize, f64)> = pos.iter().map(|&(j, v)| (j, -v)).collect();
            lp.add_constraint(neg, Relation::Eq, rng.random_range(0.1..2.0))
                .unwrap();
        }
    }
    lp
}

/// Unbounded by construction: feasible at a known point and a non-negative
/// recession direction `d` keeps every row satisfied while raising the
/// objective.
pub fn random_unbounded_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearProgram {
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let d: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.5) { rng.random_range(0.1..1.0) } else { 0.0 })
        .collect();
    let d = if d.iter().all(|v| *v == 0.0) {
        let mut d = d;
        d[0] = 1.0;
        d
    } else {
        d
    };
    let mut objective: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cd: f64 = objective.iter().zip(&d).map(|(c, d)| c * d).sum();
    let k = d.iter().position(|v| *v > 0.0).unwrap();
    objective[k] += (0.5 - cd) / d[k];
    let mut lp = LinearProgram::new(objective);
    for _ in 0..m {
        let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rel = relation(rng);
        // make the row non-increasing (Le), non-decreasing (Ge) or constant (Eq) along d
        let ad: f64 = a.iter().zip(&d).map(|(a, d)| a * d).sum();
        let target = match rel {
            Relation::Le => -rng.random_range(0.0..1.0),
            Relation::Ge => rng.random_range(0.0..1.0),
            Relation::Eq => 0.0,
        };
        a[k] += (target - ad) / d[k];
        let at: f64 = a.iter().zip(&x0).map(|(a, x)| a * x).sum();
        let rhs = match rel {
            Relation::Le => at + rng.random_range(0.0..1.0),
            Relation::Ge => at - rng.random_range(0.0..1.0),
            Relation::Eq => at,
        };
        lp.add_constraint(a.into_iter().enumerate().collect(), rel, rhs)
            .unwrap();
    }
    lp
}

/// Camera frame aimed at the ROI center with roll fixed by the ROI's body
/// up axis (body y when looking straight along body z).
fn camera_frame(eye: &Vector3<f64>, roi: &RegionOfInterest) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let forward = (roi.center - eye).normalize();
    let mut up = roi.orientation * Vector3::z();
    if forward.cross(&up).norm() < 1e-6 {
        up = roi.orientation * Vector3::y();
    }
    let right = forward.cross(&up).normalize();
    (forward, right, right.cross(&forward))
}

/// Fraction of a `res³` cell-centered grid over the ROI lying in the
/// viewing frustum, testing angles against half-fields of view.
pub fn dense_coverage(camera: &CameraModel, eye: &Vector3<f64>, roi: &RegionOfInterest, res: usize) -> f64 {
    let (forward, right, up) = camera_frame(eye, roi);
    let half_h = camera.horizontal_fov / 2.0;
    let half_v = camera.vertical_fov / 2.0;
    let coord = |i: usize| -1.0 + (2 * i + 1) as f64 / res as f64;
    let mut inside = 0usize;
    for i in 0..res {
        let x = coord(i);
        for j in 0..res {
            let y = coord(j);
            for k in 0..res {
                let local = Vector3::new(x, y, coord(k)).component_mul(&roi.half_extents);
                let v = roi.center + roi.orientation * local - eye;
                let depth = v.dot(&forward);
                if depth < camera.min_range || depth > camera.max_range {
                    continue;
                }
                if v.dot(&right).atan2(depth).abs() <= half_h && v.dot(&up).atan2(depth).abs() <= half_v {
                    inside += 1;
                }
            }
        }
    }
    inside as f64 / (res * res * res) as f64
}

/// Random camera aimed at a random ROI, with sizes and ranges like the
/// planning problem's: ROI half-extents 0.2 to 0.5 m, camera 1.5 to 6 m
/// away, default near and far limits.
pub fn random_view(rng: &mut ChaCha8Rng) -> (CameraModel, Vector3<f64>, RegionOfInterest) {
    let unit = |rng: &mut ChaCha8Rng| loop {
        let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if d.norm() > 0.1 && d.norm() <= 1.0 {
            break d.normalize();
        }
    };
    let axis = unit(rng);
    let orientation = UnitQuaternion::from_scaled_axis(axis * rng.random_range(0.0..std::f64::consts::PI));
    let roi = RegionOfInterest {
        center: Vector3::new(rng.random_range(0.0..10.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
        half_extents: Vector3::new(rng.random_range(0.2..0.5), rng.random_range(0.2..0.5), rng.random_range(0.2..0.5)),
        orientation,
    };
    let eye = roi.center + unit(rng) * rng.random_range(1.5..6.0);
    let camera = CameraModel {
        horizontal_fov: rng.random_range(40.0f64..90.0).to_radians(),
        vertical_fov: rng.random_range(30.0f64..70.0).to_radians(),
        ..CameraModel::default()
    };
    (camera, eye, roi)
}
