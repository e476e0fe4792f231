//! Linear programs in "maximize subject to rows, x ≥ 0" form, solved by a
//! two-phase revised simplex method with Bland's anti-cycling rule.
//!
//! ```
//! use obsplan::lp::{solve_lp, LinearProgram, LpStatus, Relation};
//!
//! let mut lp = LinearProgram::new(vec![1.0, 1.0]);
//! lp.add_constraint(vec![(0, 1.0)], Relation::Le, 1.0).unwrap();
//! lp.add_constraint(vec![(1, 1.0)], Relation::Le, 1.0).unwrap();
//! let sol = solve_lp(&lp).unwrap();
//! assert_eq!(sol.status, LpStatus::Optimal);
//! assert!((sol.objective_value - 2.0).abs() < 1e-9);
//! ```

mod lu;
mod mps;
mod simplex;

pub use mps::write_mps;
pub use simplex::{solve_lp, solve_lp_with, PricingRule, SolverOptions, DEFAULT_DEGENERATE_STREAK};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("constraint {row} references variable {index} but the program has {num_vars} variables")]
    IndexOutOfRange {
        row: usize,
        index: usize,
        num_vars: usize,
    },
    #[error("constraint {row} has a non-finite coefficient or right-hand side")]
    NonFinite { row: usize },
    #[error("objective has a non-finite coefficient at variable {index}")]
    NonFiniteObjective { index: usize },
    #[error("solution has {got} values but the program has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("basis matrix is singular at refactorization (iteration {iteration}, basis position {position}, column {column})")]
    SingularBasis {
        iteration: usize,
        position: usize,
        column: usize,
    },
    #[error("iteration limit of {limit} reached")]
    IterationLimit { limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn flipped(self) -> Self {
        match self {
            Relation::Le => Relation::Ge,
            Relation::Eq => Relation::Eq,
            Relation::Ge => Relation::Le,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse row as (variable index, coefficient); indices need not be sorted.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    /// Program maximizing `objective · x`; the variable count is its length.
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Appends a row and returns its index. Duplicate indices are summed.
    pub fn add_constraint(
        &mut self,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<usize, LpError> {
        let row = self.constraints.len();
        if !rhs.is_finite() || coeffs.iter().any(|&(_, v)| !v.is_finite()) {
            return Err(LpError::NonFinite { row });
        }
        if let Some(&(index, _)) = coeffs.iter().find(|&&(j, _)| j >= self.num_vars()) {
            return Err(LpError::IndexOutOfRange {
                row,
                index,
                num_vars: self.num_vars(),
            });
        }
        let mut coeffs = coeffs;
        coeffs.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for (j, v) in coeffs {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        self.constraints.push(Constraint {
            coeffs: merged,
            relation,
            rhs,
        });
        Ok(row)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        if let Some(index) = self.objective.iter().position(|v| !v.is_finite()) {
            return Err(LpError::NonFiniteObjective { index });
        }
        Ok(())
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    /// Largest violation over all rows and non-negativity bounds.
    pub fn max_violation(&self, values: &[f64]) -> Result<f64, LpError> {
        if values.len() != self.num_vars() {
            return Err(LpError::DimensionMismatch {
                expected: self.num_vars(),
                got: values.len(),
            });
        }
        let mut worst = values.iter().fold(0.0f64, |w, &x| w.max(-x));
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, v)| v * values[j]).sum();
            let gap = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Present iff the status is optimal.
    pub values: Option<Vec<f64>>,
    /// Optimal objective; `+∞` when unbounded and NaN when infeasible.
    pub objective_value: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}
