//! Bounded-variable two-phase primal simplex on a dense tableau.
//!
//! The implementation keeps variable bounds out of the constraint matrix:
//! a nonbasic variable rests at its lower bound, its upper bound, or (if
//! free) at zero, and the ratio test allows bound-to-bound flips without
//! a basis change. Phase 1 adds artificial variables only on rows whose
//! slack would start out of range, minimizes their sum, then fixes them
//! at zero for phase 2.
//!
//! Determinism: entering variables are priced by largest reduced cost
//! with index tie-break (Dantzig), switching permanently to Bland's rule
//! after a run of degenerate pivots so cycling terminates; leaving rows
//! break ratio ties by larger pivot magnitude, then smaller variable
//! index. No randomness, no hashing — the same problem always takes the
//! same path.

use super::{LpProblem, LpSolution, LpStatus};
use crate::error::{Error, Result};

/// Where a variable currently lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Free and nonbasic, resting at zero.
    FreeAtZero,
}

/// Reduced-cost tolerance scale and degenerate-step threshold.
const DUAL_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-10;
/// Pivot entries smaller than this are treated as zero in the ratio test.
const PIVOT_TOL: f64 = 1e-9;
/// Degenerate pivots tolerated before switching to Bland's rule.
const STALL_LIMIT: usize = 50;

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major dense B⁻¹A over all columns (structural, slack, artificial).
    a: Vec<f64>,
    /// Current values of the basic variables, one per row.
    xb: Vec<f64>,
    /// Variable occupying each row's basis slot.
    basis: Vec<usize>,
    state: Vec<VarState>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Reduced costs for the current phase, maintained incrementally.
    z: Vec<f64>,
    bland: bool,
    stall: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    /// Resting value of a nonbasic variable.
    fn rest_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            VarState::FreeAtZero => 0.0,
            VarState::Basic => unreachable!("basic variable has no resting value"),
        }
    }

    /// Reset reduced costs for a new phase: z_j = c_j − c_Bᵀ(B⁻¹a_j).
    fn refresh_reduced_costs(&mut self, cost: &[f64]) {
        self.z.copy_from_slice(cost);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.cols {
                    self.z[j] -= cb * self.at(i, j);
                }
            }
        }
        for i in 0..self.rows {
            self.z[self.basis[i]] = 0.0;
        }
    }

    /// Pick the entering variable; `None` means the phase is optimal.
    /// Returns `(column, direction)` where direction +1 increases the
    /// variable off its lower bound and −1 decreases it off its upper.
    fn price(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.cols {
            if self.state[j] == VarState::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let zj = self.z[j];
            let (eligible, dir) = match self.state[j] {
                VarState::AtLower => (zj < -DUAL_TOL, 1.0),
                VarState::AtUpper => (zj > DUAL_TOL, -1.0),
                VarState::FreeAtZero => {
                    if zj < -DUAL_TOL {
                        (true, 1.0)
                    } else if zj > DUAL_TOL {
                        (true, -1.0)
                    } else {
                        (false, 1.0)
                    }
                }
                VarState::Basic => unreachable!(),
            };
            if !eligible {
                continue;
            }
            if self.bland {
                // Bland: first eligible index.
                return Some((j, dir));
            }
            let score = zj.abs();
            match best {
                Some((_, _, s)) if s >= score => {}
                _ => best = Some((j, dir, score)),
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// One simplex step with entering column `q` moving in `dir`.
    /// Returns the step length actually taken.
    fn step(&mut self, q: usize, dir: f64) -> Result<Option<f64>> {
        // Range of the entering variable itself (bound-to-bound flip).
        let range = self.upper[q] - self.lower[q];
        let mut t_best = if range.is_finite() { range } else { f64::INFINITY };
        let mut leave: Option<(usize, f64)> = None; // (row, pivot entry)

        for i in 0..self.rows {
            let alpha = self.at(i, q);
            let da = dir * alpha;
            if da.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            // Basic value moves as xb_i − t·dir·alpha; find the first
            // bound it hits.
            let t = if da > 0.0 {
                if self.lower[b] == f64::NEG_INFINITY {
                    continue;
                }
                (self.xb[i] - self.lower[b]) / da
            } else {
                if self.upper[b] == f64::INFINITY {
                    continue;
                }
                (self.xb[i] - self.upper[b]) / da
            };
            // Slight bound violations from drift would give tiny negative
            // ratios; clamp so the pivot is taken degenerately instead.
            let t = t.max(0.0);
            let replace = match leave {
                None => t < t_best - 1e-12,
                Some((r_prev, a_prev)) => {
                    if t < t_best - 1e-12 {
                        true
                    } else if t <= t_best + 1e-12 {
                        // Near-tie: prefer the numerically safer (larger)
                        // pivot, then the smaller variable index.
                        da.abs() > a_prev.abs() + 1e-12
                            || (da.abs() >= a_prev.abs() - 1e-12 && b < self.basis[r_prev])
                    } else {
                        false
                    }
                }
            };
            if replace {
                t_best = t.min(t_best);
                leave = Some((i, da));
            }
        }

        if t_best == f64::INFINITY {
            return Ok(None); // unbounded direction
        }

        match leave {
            // The entering variable hits its own opposite bound first:
            // flip it, update basics, no basis change.
            Some(_) if t_best < range - 1e-12 => {}
            None => {
                debug_assert!(range.is_finite());
                for i in 0..self.rows {
                    let alpha = self.at(i, q);
                    if alpha != 0.0 {
                        self.xb[i] -= dir * t_best * alpha;
                    }
                }
                self.state[q] = match self.state[q] {
                    VarState::AtLower => VarState::AtUpper,
                    VarState::AtUpper => VarState::AtLower,
                    other => other,
                };
                return Ok(Some(t_best));
            }
            Some(_) => {
                // Ratio tied with the flip; keep the basis change branch
                // only if the row limit is strictly smaller, otherwise
                // flipping is cheaper. Tie → pivot (handled below) keeps
                // the basis moving, which is what Bland's argument needs.
            }
        }

        let (r, _) = leave.expect("pivot row exists here");
        let piv = self.at(r, q);
        if piv.abs() <= PIVOT_TOL {
            return Err(Error::Numerical(format!(
                "simplex pivot {piv:.3e} below tolerance"
            )));
        }

        // New value of the entering variable and updated basics.
        let enter_value = self.rest_value(q) + dir * t_best;
        for i in 0..self.rows {
            if i != r {
                let alpha = self.at(i, q);
                if alpha != 0.0 {
                    self.xb[i] -= dir * t_best * alpha;
                }
            }
        }
        let leaving = self.basis[r];
        let da = dir * piv;
        self.state[leaving] = if da > 0.0 { VarState::AtLower } else { VarState::AtUpper };
        self.basis[r] = q;
        self.state[q] = VarState::Basic;
        self.xb[r] = enter_value;

        // Gaussian update of the tableau and reduced costs.
        let inv = 1.0 / piv;
        for j in 0..self.cols {
            self.a[r * self.cols + j] *= inv;
        }
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.at(i, q);
            if f != 0.0 {
                for j in 0..self.cols {
                    let v = self.at(r, j);
                    if v != 0.0 {
                        self.a[i * self.cols + j] -= f * v;
                    }
                }
            }
        }
        let zq = self.z[q];
        if zq != 0.0 {
            for j in 0..self.cols {
                let v = self.at(r, j);
                if v != 0.0 {
                    self.z[j] -= zq * v;
                }
            }
        }
        self.z[q] = 0.0;

        Ok(Some(t_best))
    }

    /// Run simplex iterations until the current phase is optimal or an
    /// unbounded direction appears.
    fn run(&mut self, max_iters: usize) -> Result<PhaseEnd> {
        for _ in 0..max_iters {
            let Some((q, dir)) = self.price() else {
                return Ok(PhaseEnd::Optimal);
            };
            match self.step(q, dir)? {
                None => return Ok(PhaseEnd::Unbounded),
                Some(t) => {
                    if t <= STEP_TOL {
                        self.stall += 1;
                        if self.stall > STALL_LIMIT {
                            self.bland = true;
                        }
                    } else {
                        self.stall = 0;
                    }
                }
            }
        }
        Err(Error::Numerical(format!(
            "simplex exceeded {max_iters} iterations"
        )))
    }
}

pub(super) fn solve(p: &LpProblem) -> Result<LpSolution> {
    let n = p.num_vars();
    let m = p.constraints().len();

    // Nonbasic resting states for the structural variables.
    let mut state: Vec<VarState> = p
        .bounds()
        .iter()
        .map(|&(lo, hi)| {
            if lo.is_finite() {
                VarState::AtLower
            } else if hi.is_finite() {
                VarState::AtUpper
            } else {
                VarState::FreeAtZero
            }
        })
        .collect();
    let mut lower: Vec<f64> = p.bounds().iter().map(|b| b.0).collect();
    let mut upper: Vec<f64> = p.bounds().iter().map(|b| b.1).collect();

    // Row activities at the resting point decide which slacks can start
    // basic and which rows need an artificial.
    let rest = |state: &VarState, lo: f64, hi: f64| match state {
        VarState::AtLower => lo,
        VarState::AtUpper => hi,
        _ => 0.0,
    };
    let mut activity = vec![0.0; m];
    for (i, row) in p.constraints().iter().enumerate() {
        for &(j, a) in &row.coeffs {
            activity[i] += a * rest(&state[j], lower[j], upper[j]);
        }
    }

    let needs_artificial: Vec<bool> = p
        .constraints()
        .iter()
        .enumerate()
        .map(|(i, row)| row.rhs - activity[i] < 0.0)
        .collect();
    let n_art = needs_artificial.iter().filter(|&&x| x).count();
    let cols = n + m + n_art;

    // Dense tableau: structural coefficients, slack identity, artificial
    // −1 entries. Rows that start with an artificial basic are negated so
    // the basis matrix over basic columns is the identity.
    let mut a = vec![0.0; m * cols];
    let mut basis = vec![0usize; m];
    let mut xb = vec![0.0; m];
    state.extend(std::iter::repeat(VarState::AtLower).take(m + n_art));
    lower.extend(std::iter::repeat(0.0).take(m + n_art));
    upper.extend(std::iter::repeat(f64::INFINITY).take(m + n_art));

    let mut art = n + m;
    for (i, row) in p.constraints().iter().enumerate() {
        let sign = if needs_artificial[i] { -1.0 } else { 1.0 };
        for &(j, v) in &row.coeffs {
            a[i * cols + j] = sign * v;
        }
        a[i * cols + n + i] = sign; // slack
        if needs_artificial[i] {
            a[i * cols + art] = 1.0; // −1 entry negated with the row
            basis[i] = art;
            xb[i] = activity[i] - row.rhs; // > 0 by construction
            state[art] = VarState::Basic;
            art += 1;
        } else {
            basis[i] = n + i;
            xb[i] = row.rhs - activity[i];
            state[n + i] = VarState::Basic;
        }
    }

    let mut tab = Tableau {
        rows: m,
        cols,
        a,
        xb,
        basis,
        state,
        lower,
        upper,
        z: vec![0.0; cols],
        bland: false,
        stall: 0,
    };
    let max_iters = 200 * (m + cols) + 1000;

    let max_rhs = p
        .constraints()
        .iter()
        .map(|r| r.rhs.abs())
        .fold(0.0_f64, f64::max);

    // Phase 1: drive the artificial sum to zero.
    if n_art > 0 {
        let mut c1 = vec![0.0; cols];
        for j in n + m..cols {
            c1[j] = 1.0;
        }
        tab.refresh_reduced_costs(&c1);
        match tab.run(max_iters)? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => {
                return Err(Error::Numerical(
                    "phase-1 objective unbounded below zero".into(),
                ));
            }
        }
        let infeas: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= n + m)
            .map(|i| tab.xb[i])
            .sum();
        if infeas > 1e-9 * (1.0 + max_rhs) {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective_value: f64::INFINITY,
            });
        }
        // Pin the artificials at zero; fixed variables are never priced,
        // and any still basic sit harmlessly at value zero.
        for j in n + m..cols {
            tab.lower[j] = 0.0;
            tab.upper[j] = 0.0;
        }
        tab.bland = false;
        tab.stall = 0;
    }

    // Phase 2: the real objective over structural variables.
    let mut c2 = vec![0.0; cols];
    c2[..n].copy_from_slice(p.objective());
    tab.refresh_reduced_costs(&c2);
    let end = tab.run(max_iters)?;

    if let PhaseEnd::Unbounded = end {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective_value: f64::NEG_INFINITY,
        });
    }

    // Assemble the structural solution from basis rows and resting values.
    let mut x = vec![0.0; n];
    for j in 0..n {
        if tab.state[j] != VarState::Basic {
            x[j] = tab.rest_value(j);
        }
    }
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.xb[i];
        }
    }

    // Post-solve checks: returned points must satisfy every row and bound
    // within tolerance, otherwise the solve counts as a numerical failure
    // rather than a silently wrong answer.
    for (j, &(lo, hi)) in p.bounds().iter().enumerate() {
        let tol = 1e-8 * (1.0 + lo.abs().min(hi.abs()));
        if x[j] < lo - tol || x[j] > hi + tol {
            return Err(Error::Numerical(format!(
                "solution violates bounds on x{j}: {} not in [{lo}, {hi}]",
                x[j]
            )));
        }
        // Snap residual drift onto the box so downstream exact re-solves
        // see legal values.
        x[j] = x[j].clamp(lo, hi);
    }
    for (r, row) in p.constraints().iter().enumerate() {
        let lhs: f64 = row.coeffs.iter().map(|&(j, v)| v * x[j]).sum();
        if lhs > row.rhs + 1e-8 * (1.0 + row.rhs.abs()) {
            return Err(Error::Numerical(format!(
                "solution violates constraint {r}: {lhs} > {}",
                row.rhs
            )));
        }
    }

    let objective_value: f64 = p.objective().iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective_value,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{solve, LpProblem, LpStatus};

    /// A degenerate problem known to cycle under naive Dantzig pricing
    /// (Beale's example, in ≤ form). Bland fallback must terminate it.
    #[test]
    fn beale_cycling_example_terminates() {
        // min −0.75x0 + 150x1 − 0.02x2 + 6x3
        // s.t. 0.25x0 − 60x1 − 0.04x2 + 9x3 ≤ 0
        //      0.5x0 − 90x1 − 0.02x2 + 3x3 ≤ 0
        //      x2 ≤ 1, x ≥ 0. Optimum −0.05 at x = (0.04, 0, 1, 0)·k …
        // classic optimum has objective −1/20.
        let mut p = LpProblem::new(4);
        p.set_objective(vec![-0.75, 150.0, -0.02, 6.0]);
        for j in 0..4 {
            p.set_bounds(j, 0.0, f64::INFINITY);
        }
        p.add_le(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], 0.0);
        p.add_le(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], 0.0);
        p.add_le(vec![(2, 1.0)], 1.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value + 0.05).abs() < 1e-9);
    }

    #[test]
    fn redundant_rows_do_not_confuse_the_basis() {
        let mut p = LpProblem::new(2);
        p.set_objective(vec![-1.0, -1.0]);
        p.set_bounds(0, 0.0, f64::INFINITY);
        p.set_bounds(1, 0.0, f64::INFINITY);
        for _ in 0..4 {
            p.add_le(vec![(0, 1.0), (1, 1.0)], 2.0);
        }
        p.add_le(vec![(0, 1.0)], 1.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value + 2.0).abs() < 1e-9);
    }

    #[test]
    fn phase_one_needed_then_unbounded_phase_two() {
        // x ≥ 5 forces phase 1; objective −x then runs off to +∞.
        let mut p = LpProblem::new(1);
        p.set_objective(vec![-1.0]);
        p.set_bounds(0, 0.0, f64::INFINITY);
        p.add_le(vec![(0, -1.0)], -5.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn upper_bounded_entering_flips_without_pivot() {
        // Optimum requires x0 to travel bound-to-bound: min −x0 with
        // x0 ∈ [0, 3] and a slack row that never binds.
        let mut p = LpProblem::new(1);
        p.set_objective(vec![-1.0]);
        p.set_bounds(0, 0.0, 3.0);
        p.add_le(vec![(0, 1.0)], 10.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_rows_start_infeasible_and_recover() {
        // Σx ≥ 6 with per-variable caps: phase 1 must find a start.
        let mut p = LpProblem::new(3);
        p.set_objective(vec![1.0, 2.0, 3.0]);
        for j in 0..3 {
            p.set_bounds(j, 0.0, 4.0);
        }
        p.add_le(vec![(0, -1.0), (1, -1.0), (2, -1.0)], -6.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        // Cheapest fill: x0 = 4, x1 = 2, x2 = 0 → objective 8.
        assert!((sol.objective_value - 8.0).abs() < 1e-9);
        assert!((sol.x[0] - 4.0).abs() < 1e-9);
        assert!((sol.x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn free_variable_enters_and_leaves_cleanly() {
        // min y s.t. y ≥ |x − 2| pattern via two rows, x free.
        let mut p = LpProblem::new(2);
        p.set_objective(vec![0.0, 1.0]);
        p.set_bounds(1, 0.0, f64::INFINITY);
        p.add_le(vec![(0, 1.0), (1, -1.0)], 2.0); // x − y ≤ 2
        p.add_le(vec![(0, -1.0), (1, -1.0)], -2.0); // −x − y ≤ −2
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.objective_value.abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_rows_zero_vars_degenerate_cases() {
        // No constraints, fixed variable.
        let mut p = LpProblem::new(1);
        p.set_objective(vec![5.0]);
        p.set_bounds(0, 1.5, 1.5);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.x, vec![1.5]);
        assert!((sol.objective_value - 7.5).abs() < 1e-12);

        // Zero-variable problem is trivially optimal at the empty point.
        let p = LpProblem::new(0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.x.is_empty());
        assert_eq!(sol.objective_value, 0.0);
    }

    #[test]
    fn objective_scaling_preserves_the_argmin() {
        // Scaling the objective by a positive constant must not change
        // the optimal vertex, only the value.
        let mut p = LpProblem::new(3);
        p.set_objective(vec![1.0, 4.0, 9.0]);
        for j in 0..3 {
            p.set_bounds(j, 0.0, f64::INFINITY);
        }
        p.add_le(vec![(0, -1.0), (1, -2.0), (2, -1.0)], -7.0);
        p.add_le(vec![(0, 1.0)], 2.5);
        let base = solve(&p).unwrap();
        assert_eq!(base.status, LpStatus::Optimal);

        let mut scaled = p.clone();
        scaled.set_objective(vec![3.0, 12.0, 27.0]);
        let s = solve(&scaled).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        for j in 0..3 {
            assert!(
                (base.x[j] - s.x[j]).abs() < 1e-9,
                "vertex moved under objective scaling: {:?} vs {:?}",
                base.x,
                s.x
            );
        }
        assert!((s.objective_value - 3.0 * base.objective_value).abs() < 1e-8);
    }

    #[test]
    fn infeasibility_detected_with_many_artificials() {
        // Three mutually contradictory sum constraints.
        let mut p = LpProblem::new(2);
        for j in 0..2 {
            p.set_bounds(j, 0.0, 10.0);
        }
        p.add_le(vec![(0, 1.0), (1, 1.0)], 3.0); // x+y ≤ 3
        p.add_le(vec![(0, -1.0)], -2.0); // x ≥ 2
        p.add_le(vec![(1, -1.0)], -2.0); // y ≥ 2
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn tight_equality_band_resolves() {
        // Near-equality band around x + y = 1 with width 0 (exact paired
        // rows) and an objective pushing along the band.
        let mut p = LpProblem::new(2);
        p.set_objective(vec![-1.0, 1.0]);
        p.set_bounds(0, 0.0, 0.7);
        p.set_bounds(1, 0.0, 1.0);
        p.add_le(vec![(0, 1.0), (1, 1.0)], 1.0);
        p.add_le(vec![(0, -1.0), (1, -1.0)], -1.0);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 0.7).abs() < 1e-9);
        assert!((sol.x[1] - 0.3).abs() < 1e-9);
    }
}
