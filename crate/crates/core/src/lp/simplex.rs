//! Two-phase revised simplex.
//!
//! Rows are normalized to a non-negative right-hand side, then every `≤` row
//! gets a `+1` slack and every `≥` row a `−1` surplus. Rows whose slack cannot
//! start basic (`=` and `≥`) get an artificial column. Phase 1 maximizes the
//! negated sum of artificials; phase 2 maximizes the real objective with
//! artificials barred from entering. An artificial left basic at zero after
//! phase 1 marks a redundant row and blocks any pivot that would move it.

use super::lu::{BasisInverse, LuFactors};
use super::{LinearProgram, LpError, LpSolution, LpStatus, Relation};

const FEASIBILITY_TOL: f64 = 1e-6;
const OPTIMALITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
/// Pivots must also exceed this fraction of the entering column's largest
/// entry; tinier ones leave a numerically singular basis behind.
const PIVOT_REL_TOL: f64 = 1e-9;
const DRIVE_OUT_TOL: f64 = 1e-7;
const RATIO_TIE_TOL: f64 = 1e-12;
const NOT_BASIC: usize = usize::MAX;

/// Entering-variable selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PricingRule {
    /// Lowest-index improving column; lowest-index leaving column on ratio ties.
    Bland,
    /// Largest reduced cost, switching to Bland's rule after `streak`
    /// consecutive degenerate pivots and back after the first non-degenerate one.
    DantzigWithBlandFallback { streak: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub pricing: PricingRule,
    /// Refactorize the basis after this many column replacements.
    pub refactor_interval: usize,
    /// Defaults to a bound proportional to the problem size.
    pub max_iterations: Option<usize>,
}

/// Degenerate-pivot streak after which the hybrid rule falls back to Bland.
pub const DEFAULT_DEGENERATE_STREAK: usize = 50;

impl SolverOptions {
    /// Default options with a different pricing rule.
    pub fn with_pricing(pricing: PricingRule) -> Self {
        SolverOptions {
            pricing,
            ..SolverOptions::default()
        }
    }

    /// Largest-reduced-cost pricing with the Bland fallback.
    pub fn hybrid() -> Self {
        Self::with_pricing(PricingRule::DantzigWithBlandFallback {
            streak: DEFAULT_DEGENERATE_STREAK,
        })
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            pricing: PricingRule::Bland,
            refactor_interval: 64,
            max_iterations: None,
        }
    }
}

/// Solves with default options (pure Bland pricing). Large programs solve
/// several times faster with [`SolverOptions::hybrid`].
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, &SolverOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, options: &SolverOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let problem = StandardForm::build(lp);
    let mut solver = Solver::new(&problem, options)?;

    if problem.first_artificial < problem.cols() {
        solver.run(Phase::One)?;
        let infeasibility: f64 = (0..problem.m)
            .filter(|&r| solver.basis[r] >= problem.first_artificial)
            .map(|r| solver.x_b[r])
            .sum();
        if infeasibility > FEASIBILITY_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                values: None,
                objective_value: f64::NAN,
                iterations: solver.iterations,
            });
        }
        solver.drive_out_artificials()?;
    }

    if solver.run(Phase::Two)? == Outcome::Unbounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: None,
            objective_value: f64::INFINITY,
            iterations: solver.iterations,
        });
    }

    let mut values = vec![0.0; problem.n];
    for (pos, &col) in solver.basis.iter().enumerate() {
        if col < problem.n {
            values[col] = solver.x_b[pos].max(0.0);
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: lp.evaluate(&values),
        values: Some(values),
        iterations: solver.iterations,
    })
}

/// Column-compressed `[A | slacks | artificials]` with normalized rows.
struct StandardForm {
    m: usize,
    n: usize,
    first_artificial: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    /// Column that starts basic in each row.
    initial_basis: Vec<usize>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.num_constraints();
        let n = lp.num_vars();
        let mut rhs = Vec::with_capacity(m);
        let mut relations = Vec::with_capacity(m);
        let mut sign = Vec::with_capacity(m);
        for c in lp.constraints() {
            if c.rhs < 0.0 {
                rhs.push(-c.rhs);
                relations.push(c.relation.flipped());
                sign.push(-1.0);
            } else {
                rhs.push(c.rhs);
                relations.push(c.relation);
                sign.push(1.0);
            }
        }

        let mut counts = vec![0usize; n];
        for c in lp.constraints() {
            for &(j, _) in &c.coeffs {
                counts[j] += 1;
            }
        }
        let slack_count = relations.iter().filter(|&&r| r != Relation::Eq).count();
        let art_count = relations.iter().filter(|&&r| r != Relation::Le).count();
        let total = n + slack_count + art_count;
        let mut col_start = Vec::with_capacity(total + 1);
        col_start.push(0);
        for &k in &counts {
            col_start.push(col_start.last().unwrap() + k);
        }
        let nnz_structural = *col_start.last().unwrap();
        let mut row_idx = vec![0usize; nnz_structural];
        let mut vals = vec![0.0; nnz_structural];
        let mut fill: Vec<usize> = col_start[..n].to_vec();
        for (i, c) in lp.constraints().iter().enumerate() {
            for &(j, v) in &c.coeffs {
                row_idx[fill[j]] = i;
                vals[fill[j]] = sign[i] * v;
                fill[j] += 1;
            }
        }

        let mut initial_basis = vec![0usize; m];
        let mut next = n;
        for (i, rel) in relations.iter().enumerate() {
            let v = match rel {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => continue,
            };
            row_idx.push(i);
            vals.push(v);
            col_start.push(row_idx.len());
            if *rel == Relation::Le {
                initial_basis[i] = next;
            }
            next += 1;
        }
        let first_artificial = next;
        for (i, rel) in relations.iter().enumerate() {
            if *rel == Relation::Le {
                continue;
            }
            row_idx.push(i);
            vals.push(1.0);
            col_start.push(row_idx.len());
            initial_basis[i] = next;
            next += 1;
        }

        let mut cost = vec![0.0; total];
        cost[..n].copy_from_slice(lp.objective());
        StandardForm {
            m,
            n,
            first_artificial,
            col_start,
            row_idx,
            vals,
            rhs,
            cost,
            initial_basis,
        }
    }

    fn cols(&self) -> usize {
        self.col_start.len() - 1
    }

    fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let range = self.col_start[j]..self.col_start[j + 1];
        (&self.row_idx[range.clone()], &self.vals[range])
    }

    fn dot(&self, j: usize, y: &[f64]) -> f64 {
        let (rows, vals) = self.column(j);
        rows.iter().zip(vals).map(|(&i, &v)| v * y[i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Optimal,
    Unbounded,
}

struct Solver<'p> {
    p: &'p StandardForm,
    options: SolverOptions,
    max_iterations: usize,
    basis: Vec<usize>,
    position: Vec<usize>,
    inv: BasisInverse,
    x_b: Vec<f64>,
    iterations: usize,
    degenerate_streak: usize,
    scratch: Vec<f64>,
}

impl<'p> Solver<'p> {
    fn new(p: &'p StandardForm, options: &SolverOptions) -> Result<Self, LpError> {
        let basis = p.initial_basis.clone();
        let mut position = vec![NOT_BASIC; p.cols()];
        for (r, &c) in basis.iter().enumerate() {
            position[c] = r;
        }
        let max_iterations = options
            .max_iterations
            .unwrap_or(20 * (p.m + p.cols()) + 10_000);
        let inv = Self::factor(p, &basis, 0)?;
        let mut solver = Solver {
            p,
            options: *options,
            max_iterations,
            basis,
            position,
            inv,
            x_b: Vec::new(),
            iterations: 0,
            degenerate_streak: 0,
            scratch: Vec::new(),
        };
        solver.recompute_primal();
        Ok(solver)
    }

    fn factor(p: &StandardForm, basis: &[usize], iteration: usize) -> Result<BasisInverse, LpError> {
        LuFactors::factorize(p.m, |pos| p.column(basis[pos]))
            .map(BasisInverse::new)
            .map_err(|e| LpError::SingularBasis {
                iteration,
                position: e.position,
                column: basis[e.position],
            })
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        self.inv = Self::factor(self.p, &self.basis, self.iterations)?;
        self.recompute_primal();
        Ok(())
    }

    fn recompute_primal(&mut self) {
        let mut x = self.p.rhs.clone();
        self.inv.ftran(&mut x, &mut self.scratch);
        for v in &mut x {
            if *v < 0.0 && *v > -FEASIBILITY_TOL {
                *v = 0.0;
            }
        }
        self.x_b = x;
    }

    fn cost(&self, phase: Phase, j: usize) -> f64 {
        match phase {
            Phase::One if j >= self.p.first_artificial => -1.0,
            Phase::One => 0.0,
            Phase::Two => self.p.cost[j],
        }
    }

    fn duals(&mut self, phase: Phase) -> Vec<f64> {
        let mut y: Vec<f64> = self.basis.iter().map(|&c| self.cost(phase, c)).collect();
        self.inv.btran(&mut y, &mut self.scratch);
        y
    }

    fn use_bland(&self) -> bool {
        match self.options.pricing {
            PricingRule::Bland => true,
            PricingRule::DantzigWithBlandFallback { streak } => self.degenerate_streak >= streak,
        }
    }

    fn price(&self, phase: Phase, y: &[f64]) -> Option<usize> {
        let candidates = (0..self.p.first_artificial).filter(|&j| self.position[j] == NOT_BASIC);
        if self.use_bland() {
            for j in candidates {
                if self.cost(phase, j) - self.p.dot(j, y) > OPTIMALITY_TOL {
                    return Some(j);
                }
            }
            None
        } else {
            let mut best: Option<(usize, f64)> = None;
            for j in candidates {
                let d = self.cost(phase, j) - self.p.dot(j, y);
                if d > OPTIMALITY_TOL && best.is_none_or(|(_, b)| d > b) {
                    best = Some((j, d));
                }
            }
            best.map(|(j, _)| j)
        }
    }

    fn entering_column(&mut self, j: usize) -> Vec<f64> {
        let mut alpha = vec![0.0; self.p.m];
        let (rows, vals) = self.p.column(j);
        for (&i, &v) in rows.iter().zip(vals) {
            alpha[i] = v;
        }
        self.inv.ftran(&mut alpha, &mut self.scratch);
        alpha
    }

    /// Minimum-ratio row; ties go to the lowest basic column index.
    fn ratio_test(&self, phase: Phase, alpha: &[f64]) -> Option<(usize, f64)> {
        let largest = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let tol = PIVOT_TOL.max(PIVOT_REL_TOL * largest);
        let mut best = f64::INFINITY;
        let mut ratios = Vec::new();
        for (r, &a) in alpha.iter().enumerate() {
            let blocking_artificial = phase == Phase::Two
                && self.basis[r] >= self.p.first_artificial
                && a.abs() > tol;
            let ratio = if blocking_artificial {
                0.0
            } else if a > tol {
                self.x_b[r].max(0.0) / a
            } else {
                continue;
            };
            best = best.min(ratio);
            ratios.push((r, ratio));
        }
        let cutoff = best + RATIO_TIE_TOL * best.max(1.0);
        ratios
            .into_iter()
            .filter(|&(_, ratio)| ratio <= cutoff)
            .min_by_key(|&(r, _)| self.basis[r])
            .map(|(r, _)| (r, best))
    }

    fn pivot(&mut self, leaving: usize, entering: usize, alpha: &[f64]) {
        let theta = self.x_b[leaving].max(0.0) / alpha[leaving];
        if theta != 0.0 {
            for (x, &a) in self.x_b.iter_mut().zip(alpha) {
                *x -= theta * a;
            }
        }
        for x in &mut self.x_b {
            if *x < 0.0 && *x > -FEASIBILITY_TOL {
                *x = 0.0;
            }
        }
        self.x_b[leaving] = theta;
        self.position[self.basis[leaving]] = NOT_BASIC;
        self.basis[leaving] = entering;
        self.position[entering] = leaving;
        self.inv.push_update(leaving, alpha);
        self.iterations += 1;
        if theta.abs() <= RATIO_TIE_TOL {
            self.degenerate_streak += 1;
        } else {
            self.degenerate_streak = 0;
        }
    }

    fn run(&mut self, phase: Phase) -> Result<Outcome, LpError> {
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit {
                    limit: self.max_iterations,
                });
            }
            if self.inv.update_count() >= self.options.refactor_interval || self.inv.eta_heavy() {
                self.refactor()?;
            }
            let y = self.duals(phase);
            let Some(entering) = self.price(phase, &y) else {
                if self.inv.update_count() > 0 {
                    // Confirm optimality on a fresh factorization.
                    self.refactor()?;
                    let y = self.duals(phase);
                    if self.price(phase, &y).is_some() {
                        continue;
                    }
                }
                return Ok(Outcome::Optimal);
            };
            let alpha = self.entering_column(entering);
            let Some((leaving, _)) = self.ratio_test(phase, &alpha) else {
                return Ok(Outcome::Unbounded);
            };
            self.pivot(leaving, entering, &alpha);
        }
    }

    /// Pivots zero-valued artificials out of the basis where some real
    /// column can replace them; the rest mark redundant rows.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        for r in 0..self.p.m {
            if self.basis[r] < self.p.first_artificial {
                continue;
            }
            let mut rho = vec![0.0; self.p.m];
            rho[r] = 1.0;
            self.inv.btran(&mut rho, &mut self.scratch);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.p.first_artificial {
                if self.position[j] != NOT_BASIC {
                    continue;
                }
                let a = self.p.dot(j, &rho).abs();
                if a > DRIVE_OUT_TOL && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.entering_column(j);
                let theta = self.x_b[r] / alpha[r];
                for (x, &a) in self.x_b.iter_mut().zip(&alpha) {
                    *x -= theta * a;
                }
                self.x_b[r] = theta;
                for x in &mut self.x_b {
                    *x = x.max(0.0);
                }
                self.position[self.basis[r]] = NOT_BASIC;
                self.basis[r] = j;
                self.position[j] = r;
                self.inv.push_update(r, &alpha);
                self.iterations += 1;
                if self.inv.update_count() >= self.options.refactor_interval {
                    self.refactor()?;
                }
            }
        }
        Ok(())
    }
}
