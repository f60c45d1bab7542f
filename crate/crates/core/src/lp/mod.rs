//! Linear programming: problem representation, a deterministic
//! bounded-variable simplex solver, and the l1-objective embedding used
//! by the placement optimizer.
//!
//! Everything is a minimization over `≤` rows plus per-variable bounds:
//!
//! ```text
//! min cᵀx   s.t.   Ax ≤ b,   l ≤ x ≤ u   (entries of l, u may be ±∞)
//! ```
//!
//! Bounds live on the variables, not as rows — the placement LPs put
//! thousands of variables in a box but only dozens of rows, and the
//! simplex works directly on that shape.

mod simplex;

use crate::error::{Error, Result};

/// One `coeffs · x ≤ rhs` row, coefficients stored sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// `(variable index, coefficient)` pairs; indices need not be sorted
    /// but must not repeat.
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// A linear program in minimization form.
#[derive(Debug, Clone)]
pub struct LpProblem {
    num_vars: usize,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    /// A problem with `num_vars` free variables and zero objective.
    pub fn new(num_vars: usize) -> Self {
        LpProblem {
            num_vars,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn set_objective(&mut self, objective: Vec<f64>) {
        assert_eq!(objective.len(), self.num_vars, "objective length mismatch");
        self.objective = objective;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        assert!(var < self.num_vars, "variable {var} out of range");
        self.bounds[var] = (lower, upper);
    }

    /// Append `coeffs · x ≤ rhs`.
    pub fn add_le(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.constraints.push(Constraint { coeffs, rhs });
    }

    /// Replace the right-hand side of an existing row.
    pub fn set_rhs(&mut self, row: usize, rhs: f64) {
        assert!(row < self.constraints.len(), "row {row} out of range");
        self.constraints[row].rhs = rhs;
    }

    /// Check the structural invariants: indices in range, no repeated
    /// index within a row, finite coefficients and right-hand sides,
    /// lower ≤ upper everywhere.
    pub fn validate(&self) -> Result<()> {
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Invalid(format!("variable {i} has bad bounds [{lo}, {hi}]")));
            }
        }
        for (r, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::Invalid(format!("constraint {r} has non-finite rhs {}", row.rhs)));
            }
            let mut seen = std::collections::HashSet::new();
            for &(j, a) in &row.coeffs {
                if j >= self.num_vars {
                    return Err(Error::Invalid(format!(
                        "constraint {r} references variable {j}, problem has {}",
                        self.num_vars
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::Invalid(format!("constraint {r} has non-finite coefficient on x{j}")));
                }
                if !seen.insert(j) {
                    return Err(Error::Invalid(format!("constraint {r} repeats variable {j}")));
                }
            }
        }
        Ok(())
    }

    /// Render in the classic text LP interchange format, for debugging
    /// with external tools.
    pub fn to_lp_format(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        out.push_str("Minimize\n obj:");
        let mut first = true;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(out, " {} {} x{j}", if c < 0.0 { "-" } else if first { "" } else { "+" }, c.abs());
                first = false;
            }
        }
        if first {
            out.push_str(" 0 x0");
        }
        out.push_str("\nSubject To\n");
        for (r, row) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{r}:");
            let mut first = true;
            for &(j, a) in &row.coeffs {
                let _ = write!(out, " {} {} x{j}", if a < 0.0 { "-" } else if first { "" } else { "+" }, a.abs());
                first = false;
            }
            if first {
                out.push_str(" 0 x0");
            }
            let _ = writeln!(out, " <= {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            match (lo.is_infinite(), hi.is_infinite()) {
                (true, true) => {
                    let _ = writeln!(out, " x{j} free");
                }
                (true, false) => {
                    let _ = writeln!(out, " -inf <= x{j} <= {hi}");
                }
                (false, true) => {
                    let _ = writeln!(out, " x{j} >= {lo}");
                }
                (false, false) => {
                    let _ = writeln!(out, " {lo} <= x{j} <= {hi}");
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solver result. `x` is populated only when `status == Optimal`;
/// `objective_value` is `+∞` for infeasible and `−∞` for unbounded
/// problems, following minimization conventions.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
}

/// Solve a linear program with the deterministic bounded-variable
/// simplex. Identical problems always produce identical solutions —
/// pricing and ratio ties break by index, never by timing or hashing.
///
/// Errors indicate numerical breakdown (pivot degeneration, iteration
/// explosion, post-solve feasibility check failure) and are distinct
/// from the `Infeasible` status, which is a proof that no feasible
/// point exists.
pub fn solve(problem: &LpProblem) -> Result<LpSolution> {
    problem.validate()?;
    simplex::solve(problem)
}

/// The l1-objective variable split: β = center + u − v with u, v ≥ 0 and
/// objective Σ(u + v).
///
/// Variables are laid out `[u_0 .. u_{M−1}, v_0 .. v_{M−1}]`; the
/// inverse map is `β_m = center_m + x[u_index(m)] − x[v_index(m)]`. At
/// any optimum of a problem built on this embedding, at most one of
/// `u_m`, `v_m` is nonzero — both positive would cancel in β while
/// adding to the objective.
#[derive(Debug, Clone)]
pub struct L1Embedding {
    center: Vec<f64>,
}

/// Build the embedding around `center` (the pre-modification β^(0)).
pub fn l1_embed(center: &[f64]) -> L1Embedding {
    L1Embedding {
        center: center.to_vec(),
    }
}

impl L1Embedding {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_vars(&self) -> usize {
        2 * self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Index of the positive-part variable for component `m`.
    pub fn u_index(&self, m: usize) -> usize {
        m
    }

    /// Index of the negative-part variable for component `m`.
    pub fn v_index(&self, m: usize) -> usize {
        self.center.len() + m
    }

    /// A fresh problem over the split variables: objective Σ(u + v),
    /// bounds u, v ∈ [0, ∞). Constraint rows come from the caller.
    pub fn problem(&self) -> LpProblem {
        let mut p = LpProblem::new(self.num_vars());
        p.set_objective(vec![1.0; self.num_vars()]);
        for j in 0..self.num_vars() {
            p.set_bounds(j, 0.0, f64::INFINITY);
        }
        p
    }

    /// Recover β from a solution vector of the split problem.
    pub fn beta(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.num_vars(), "solution length mismatch");
        let m = self.center.len();
        (0..m).map(|i| self.center[i] + x[i] - x[m + i]).collect()
    }

    /// The change vector β − center.
    pub fn delta(&self, x: &[f64]) -> Vec<f64> {
        let m = self.center.len();
        (0..m).map(|i| x[i] - x[m + i]).collect()
    }

    /// The l1 objective value Σ(u + v).
    pub fn cost(&self, x: &[f64]) -> f64 {
        x.iter().sum()
    }
}
