//! Susceptance placement: base-case dispatch, stress generation, the
//! direct and cutting-plane placement algorithms, multi-scenario robust
//! runs, critical-scaling searches, and cost sweeps.
//!
//! The central problem: given a network at a stressed operating point,
//! find the cheapest susceptance correction `β` — cost measured as
//! `Σ_m |β_m − β⁰_m|` — such that every scenario's exact DC flows stay
//! within the line limits. Flow is a nonlinear (rational) function of β,
//! so the solver iterates linear programs built from first-order
//! expansions ([`crate::linearize`]), either over all constraints at
//! once (`Direct`) or over a growing active set seeded by the violated
//! ones (`Improved`).
//!
//! Determinism: every scan runs in index order and LP construction is
//! fully ordered, so identical inputs give identical iterates regardless
//! of thread count.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{check_balance, GridModel, Scenario};
use crate::linearize::flow_jacobian_rows;
use crate::lp::{l1_embed, solve as lp_solve, L1Embedding, LpProblem, LpStatus};
use crate::powerflow::assemble_physical;

/// Iteration scheme for [`place`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Linearize every constraint of every scenario each iteration.
    Direct,
    /// Cutting-plane: linearize only the included rows, growing the set
    /// from exact-flow violations between iterations.
    Improved,
}

/// How the cutting-plane loop moves violated constraints into the
/// included set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationMove {
    /// Add only the single worst violation per iteration.
    MostViolated,
    /// Add every currently violated constraint (default).
    AllViolated,
}

/// Knobs for a placement run.
#[derive(Debug, Clone)]
pub struct PlacementOptions {
    pub strategy: Strategy,
    /// Convergence threshold on ‖β^(k+1) − β^(k)‖_∞. `None` resolves to
    /// 1e-8·‖β⁰‖_∞ at run time.
    pub beta_tolerance: Option<f64>,
    /// Outer-iteration cap; the run reports `IterLimit` beyond it.
    pub max_outer_iters: usize,
    pub violation_move: ViolationMove,
    /// Floor applied to every susceptance (devices can null a line but
    /// not invert it).
    pub beta_lower: f64,
    /// Optional per-line ceilings, length M; entries may be `+∞`.
    pub beta_upper: Option<Vec<f64>>,
    /// Relative feasibility slack: a line is violated when
    /// |flow| > limit·(1 + feasibility_tolerance).
    pub feasibility_tolerance: f64,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        PlacementOptions {
            strategy: Strategy::Improved,
            beta_tolerance: None,
            max_outer_iters: 25,
            violation_move: ViolationMove::AllViolated,
            beta_lower: 0.0,
            beta_upper: None,
            feasibility_tolerance: 1e-6,
        }
    }
}

impl PlacementOptions {
    fn validate(&self, model: &GridModel) -> Result<()> {
        if let Some(t) = self.beta_tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Invalid(format!("beta_tolerance must be positive, got {t}")));
            }
        }
        if self.max_outer_iters == 0 {
            return Err(Error::Invalid("max_outer_iters must be at least 1".into()));
        }
        if !(self.beta_lower >= 0.0 && self.beta_lower.is_finite()) {
            return Err(Error::Invalid(format!(
                "beta_lower must be finite and nonnegative, got {}",
                self.beta_lower
            )));
        }
        if !(self.feasibility_tolerance > 0.0 && self.feasibility_tolerance.is_finite()) {
            return Err(Error::Invalid(format!(
                "feasibility_tolerance must be positive, got {}",
                self.feasibility_tolerance
            )));
        }
        let beta0 = model.susceptances();
        if let Some(low) = beta0.iter().find(|&&b| b < self.beta_lower) {
            return Err(Error::Invalid(format!(
                "beta_lower {} exceeds an existing susceptance {low}",
                self.beta_lower
            )));
        }
        if let Some(caps) = &self.beta_upper {
            if caps.len() != model.num_lines() {
                return Err(Error::Invalid(format!(
                    "beta_upper has {} entries, model has {} lines",
                    caps.len(),
                    model.num_lines()
                )));
            }
            for (m, (&cap, &b0)) in caps.iter().zip(beta0.iter()).enumerate() {
                if cap.is_nan() || cap < b0 {
                    return Err(Error::Invalid(format!(
                        "beta_upper[{m}] = {cap} is below the existing susceptance {b0}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One one-sided flow constraint: scenario `s`, line `ℓ`, direction
/// `σ ∈ {+1, −1}`, meaning `σ·F_ℓ ≤ f_ℓ` in scenario `s`.
pub type ConstraintKey = (usize, usize, i8);

/// The cutting-plane bookkeeping: which one-sided constraints are
/// currently included in the LP. The set only ever grows within a run.
#[derive(Debug, Clone, Default)]
pub struct ActiveSet {
    included: BTreeSet<ConstraintKey>,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.included.len()
    }

    pub fn is_empty(&self) -> bool {
        self.included.is_empty()
    }

    pub fn contains(&self, key: &ConstraintKey) -> bool {
        self.included.contains(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConstraintKey> {
        self.included.iter()
    }

    fn insert(&mut self, key: ConstraintKey) -> bool {
        self.included.insert(key)
    }
}

/// Progress record for one outer iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    /// l1 cost of the iterate produced by this iteration.
    pub cost: f64,
    /// Included-set size used for this iteration's LP.
    pub included: usize,
    /// Worst relative excess max(0, |F|/f − 1) over all constraints at
    /// the new iterate; 0 means exact-flow feasible.
    pub max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementStatus {
    /// Converged and the exact re-verification over every scenario and
    /// line passed.
    Solved,
    /// The LP at some iterate admitted no feasible correction — the
    /// stress lies beyond what susceptance placement can relieve.
    InfeasibleLP,
    /// The outer loop hit `max_outer_iters`.
    IterLimit,
}

#[derive(Debug, Clone)]
pub struct PlacementResult {
    /// Final susceptance vector, length M.
    pub beta_opt: Vec<f64>,
    /// `beta_opt − β⁰`.
    pub delta: Vec<f64>,
    /// l1 cost `Σ|delta|`.
    pub cost: f64,
    pub status: PlacementStatus,
    pub iterations: Vec<IterationRecord>,
    /// Lines with `|delta| > 1e-6·‖β⁰‖_∞`, ascending.
    pub modified_lines: Vec<usize>,
    /// Final included constraint set (all constraints under `Direct`).
    pub active: ActiveSet,
}

/// Exact flows for one scenario at a given susceptance vector.
fn exact_flows(model: &GridModel, beta: &[f64], scenario: &Scenario) -> Result<Vec<f64>> {
    let system = assemble_physical(model, beta, &scenario.outaged_lines)?;
    Ok(system.solve_flows(&scenario.injections)?.flows)
}

/// Per-constraint relative excess at the given flows. Only finite-limit,
/// in-service lines generate entries; `sigma` is the loaded direction.
struct RowExcess {
    key: ConstraintKey,
    /// (|F| − f)/f; positive means the limit is exceeded.
    excess: f64,
}

fn row_excesses(model: &GridModel, scenarios: &[Scenario], flows: &[Vec<f64>]) -> Vec<RowExcess> {
    let limits = model.limits();
    let mut out = Vec::new();
    for (s, scenario) in scenarios.iter().enumerate() {
        for (l, &f) in limits.iter().enumerate() {
            if !f.is_finite() || scenario.outaged_lines.contains(&l) {
                continue;
            }
            let flow = flows[s][l];
            let sigma: i8 = if flow >= 0.0 { 1 } else { -1 };
            out.push(RowExcess {
                key: (s, l, sigma),
                excess: (flow.abs() - f) / f,
            });
        }
    }
    out
}

fn max_excess(excesses: &[RowExcess]) -> f64 {
    excesses.iter().map(|r| r.excess).fold(0.0, f64::max)
}

/// Every one-sided constraint of every scenario (finite limits,
/// in-service lines only — unlimited lines never constrain).
fn full_constraint_set(model: &GridModel, scenarios: &[Scenario]) -> BTreeSet<ConstraintKey> {
    let limits = model.limits();
    let mut set = BTreeSet::new();
    for (s, scenario) in scenarios.iter().enumerate() {
        for (l, &f) in limits.iter().enumerate() {
            if !f.is_finite() || scenario.outaged_lines.contains(&l) {
                continue;
            }
            set.insert((s, l, 1i8));
            set.insert((s, l, -1i8));
        }
    }
    set
}

/// Solve the placement problem over one or more scenarios.
///
/// Both strategies iterate: linearize flows about the current iterate,
/// solve the l1-cost LP for a new iterate, and re-evaluate exact flows.
/// `Direct` carries every constraint in every LP; `Improved` starts from
/// the constraints violated at β⁰ and adds exact-flow violations between
/// iterations (per `violation_move`), terminating only when the iterate
/// has converged *and* no constraint outside the included set is
/// violated. A result is `Solved` only after an exact re-verification
/// pass over all scenarios and lines.
///
/// Multi-scenario calls share the single β vector across all scenarios
/// (robust placement); a line outaged in one scenario simply contributes
/// no rows and no sensitivity there.
///
/// An infeasible LP under `Improved` triggers one retry with the full
/// constraint set before the run is declared `InfeasibleLP`, guarding
/// against active-set-induced false negatives.
pub fn place(model: &GridModel, scenarios: &[Scenario], options: &PlacementOptions) -> Result<PlacementResult> {
    options.validate(model)?;
    if scenarios.is_empty() {
        return Err(Error::Invalid("placement needs at least one scenario".into()));
    }
    for scenario in scenarios {
        scenario.validate(model)?;
        check_balance(&scenario.injections)?;
    }

    let m = model.num_lines();
    let beta0 = model.susceptances();
    let beta_scale = beta0.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let tol_beta = options.beta_tolerance.unwrap_or(1e-8 * beta_scale);
    let feas_tol = options.feasibility_tolerance;
    let caps: Vec<f64> = options
        .beta_upper
        .clone()
        .unwrap_or_else(|| vec![f64::INFINITY; m]);
    let limits = model.limits();

    let full_set = full_constraint_set(model, scenarios);

    // Exact flows at the starting point decide the seed.
    let flows0: Vec<Vec<f64>> = scenarios
        .iter()
        .map(|s| exact_flows(model, &beta0, s))
        .collect::<Result<_>>()?;
    let excesses0 = row_excesses(model, scenarios, &flows0);
    let seed: Vec<ConstraintKey> = excesses0
        .iter()
        .filter(|r| r.excess > feas_tol)
        .map(|r| r.key)
        .collect();

    let mut active = ActiveSet::default();
    match options.strategy {
        Strategy::Direct => {
            for &key in &full_set {
                active.insert(key);
            }
        }
        Strategy::Improved => {
            for &key in &seed {
                active.insert(key);
            }
        }
    }

    if seed.is_empty() {
        // Nothing violated: the zero correction is optimal.
        let record = IterationRecord {
            cost: 0.0,
            included: active.len(),
            max_violation: max_excess(&excesses0),
        };
        return Ok(finish(
            beta0.clone(),
            &beta0,
            beta_scale,
            PlacementStatus::Solved,
            vec![record],
            active,
        ));
    }

    let embedding = l1_embed(&beta0);
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut beta_prev = beta0.clone();
    let mut flows_prev = flows0;
    let mut used_full_retry = false;
    let mut status = PlacementStatus::IterLimit;

    // Merit function for the step acceptance: l1 cost plus an exact
    // penalty on constraint excess. The weight needs to dominate the
    // constraint multipliers, which scale like cost-to-relieve per unit
    // of relative excess — O(β-scale) — so a 10× margin suffices;
    // oversizing it instead would veto boundary-sliding steps whose
    // curvature error is harmless. Excess far below the feasibility
    // tolerance is free: the verification pass accepts it by contract.
    let mu = 10.0 * (1.0 + beta_scale);
    let band = 0.1 * feas_tol;
    let merit = |beta: &[f64], flows: &[Vec<f64>]| -> f64 {
        let total_violation: f64 = row_excesses(model, scenarios, flows)
            .iter()
            .map(|r| (r.excess - band).max(0.0))
            .sum();
        l1_cost(beta, &beta0) + mu * total_violation
    };

    // Adaptive trust region (absolute β units), carried across outer
    // iterations: rejected steps shrink it and re-solve, so the next
    // direction comes from a region where the linearization is trusted,
    // not from scaling a direction computed far outside it. It starts
    // inactive — early iterations explore with full-range steps, and the
    // radius only bites once a step has actually failed.
    let delta_max = 1e6 * (1.0 + beta_scale);
    let mut delta_tr = delta_max;

    let mut outer = 0;
    while outer < options.max_outer_iters {
        outer += 1;

        // A fresh linearization deserves a workable radius: carrying a
        // collapsed one out of a previous endgame would force the next
        // descent phase to re-grow it one acceptance at a time.
        delta_tr = delta_tr.max(1e-2 * (1.0 + beta_scale));

        let (mut lp, mut row_keys) =
            linearized_lp(model, scenarios, &active, &embedding, &beta0, &beta_prev)?;

        // Inner loop over one linearization point, interleaving trust-
        // region control with cut generation: the rows stay linearized at
        // β_prev, only the bounds move with the radius, and a candidate
        // rejected because it violates rows the LP has never seen adds
        // those rows instead of blaming the radius. The slab
        // |β − β_prev| ≤ Δ is exactly the split-variable box below: with
        // s = β⁰ − β_prev, every (u, v) in it has
        //   s + u − v ∈ [s + u_lo − v_hi, s + u_hi − v_lo] ⊆ [−Δ, Δ],
        // and every point of the slab within the β box is still reachable
        // with a complementary pair, so no extra rows are needed.
        let merit_prev = merit(&beta_prev, &flows_prev);
        let mut accepted: Option<(Vec<f64>, Vec<Vec<f64>>)> = None;
        let mut infeasible_at_full_radius = false;
        // Radii at or below this cannot restore linear feasibility of the
        // included rows (the feasible set only grows with Δ), bracketing
        // the shrink from below.
        let mut infeasible_radius = 0.0_f64;
        for _ in 0..48 {
            for line in 0..m {
                let s = beta0[line] - beta_prev[line];
                let u_cap = if caps[line].is_finite() {
                    caps[line] - beta0[line]
                } else {
                    f64::INFINITY
                };
                let v_cap = beta0[line] - options.beta_lower;
                let u_hi = u_cap.min((delta_tr - s).max(0.0));
                let u_lo = (-delta_tr - s).max(0.0).min(u_hi);
                let v_hi = v_cap.min((delta_tr + s).max(0.0));
                let v_lo = (s - delta_tr).max(0.0).min(v_hi);
                lp.set_bounds(embedding.u_index(line), u_lo, u_hi);
                lp.set_bounds(embedding.v_index(line), v_lo, v_hi);
            }

            let sol = lp_solve(&lp)?;
            match sol.status {
                LpStatus::Infeasible => {
                    if delta_tr >= delta_max {
                        infeasible_at_full_radius = true;
                        break;
                    }
                    infeasible_radius = delta_tr;
                    delta_tr = (4.0 * delta_tr).min(delta_max);
                    continue;
                }
                LpStatus::Unbounded => {
                    return Err(Error::Numerical(
                        "placement LP reported unbounded despite a nonnegative objective".into(),
                    ));
                }
                LpStatus::Optimal => {}
            }

            let mut beta_next = embedding.beta(&sol.x);
            for (line, b) in beta_next.iter_mut().enumerate() {
                *b = b.clamp(options.beta_lower, caps[line]);
            }
            let step = beta_next
                .iter()
                .zip(beta_prev.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);

            // A candidate can drive the grid singular (β → 0 on a cut);
            // treat that like a merit failure and shrink.
            let flows_try: Result<Vec<Vec<f64>>> = scenarios
                .iter()
                .map(|s| exact_flows(model, &beta_next, s))
                .collect();

            if step <= tol_beta {
                // The LP reproduces the current iterate (up to tolerance):
                // a fixed point. Accept it unconditionally so convergence
                // is judged by the exact verification pass, and fall back
                // to the iterate itself if the candidate cannot factor.
                accepted = Some(match flows_try {
                    Ok(flows) => (beta_next, flows),
                    Err(_) => (beta_prev.clone(), flows_prev.clone()),
                });
                break;
            }

            let improving = match &flows_try {
                Ok(flows) => merit(&beta_next, flows) < merit_prev - 1e-12 * (1.0 + merit_prev),
                Err(_) => false,
            };
            if improving {
                if step >= 0.9 * delta_tr {
                    // The full radius paid off; trust a larger one.
                    delta_tr = (4.0 * delta_tr).min(delta_max);
                }
                accepted = Some((beta_next, flows_try.expect("checked above")));
                break;
            }

            // Before shrinking, learn the rows this candidate violates:
            // the LP cannot steer around constraints it has never seen,
            // and re-solving with them included often repairs the step at
            // the same radius.
            if let Ok(flows) = &flows_try {
                let candidate_fresh: Vec<RowExcess> = row_excesses(model, scenarios, flows)
                    .into_iter()
                    .filter(|r| r.excess > feas_tol && !active.contains(&r.key))
                    .collect();
                if !candidate_fresh.is_empty() {
                    match options.violation_move {
                        ViolationMove::AllViolated => {
                            for r in &candidate_fresh {
                                active.insert(r.key);
                            }
                        }
                        ViolationMove::MostViolated => {
                            let worst = candidate_fresh
                                .iter()
                                .fold(None::<&RowExcess>, |best, r| match best {
                                    Some(b) if b.excess >= r.excess => best,
                                    _ => Some(r),
                                })
                                .expect("candidate_fresh is nonempty");
                            active.insert(worst.key);
                        }
                    }
                    (lp, row_keys) =
                        linearized_lp(model, scenarios, &active, &embedding, &beta0, &beta_prev)?;
                    continue;
                }

                // The candidate's only failure is curvature on rows the
                // LP already knows about. Apply second-order corrections:
                // a row's linearization error at a candidate is its
                // actual excess minus the linear one (by the identity
                // σF(β(x)) − f = coeffs·x − rhs), so re-solve at the same
                // radius with every optimistic rhs tightened by that
                // error. Errors are re-measured at each new candidate and
                // the per-row tightenings only ever grow, so the passes
                // cannot oscillate; a few passes settle the step when one
                // is too optimistic.
                let mut lp_soc = lp.clone();
                let mut tightening = vec![0.0_f64; row_keys.len()];
                let mut cand_x = sol.x.clone();
                let mut cand_flows = flows.clone();
                let mut rescued = false;
                for _ in 0..2 {
                    let mut tightened = false;
                    for (i, &(s, l, sigma)) in row_keys.iter().enumerate() {
                        let row = &lp.constraints()[i];
                        let lhs: f64 = row.coeffs.iter().map(|&(j, c)| c * cand_x[j]).sum();
                        let err =
                            (f64::from(sigma) * cand_flows[s][l] - limits[l]) - (lhs - row.rhs);
                        if err > tightening[i] {
                            tightening[i] = err;
                            lp_soc.set_rhs(i, row.rhs - err);
                            tightened = true;
                        }
                    }
                    if !tightened {
                        break;
                    }
                    let sol_soc = lp_solve(&lp_soc)?;
                    if sol_soc.status != LpStatus::Optimal {
                        break;
                    }
                    let mut beta_soc = embedding.beta(&sol_soc.x);
                    for (line, b) in beta_soc.iter_mut().enumerate() {
                        *b = b.clamp(options.beta_lower, caps[line]);
                    }
                    let step_soc = beta_soc
                        .iter()
                        .zip(beta_prev.iter())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0_f64, f64::max);
                    let flows_soc: Result<Vec<Vec<f64>>> = scenarios
                        .iter()
                        .map(|sc| exact_flows(model, &beta_soc, sc))
                        .collect();
                    let Ok(flows_soc) = flows_soc else {
                        break;
                    };
                    if merit(&beta_soc, &flows_soc) < merit_prev - 1e-12 * (1.0 + merit_prev) {
                        if step_soc >= 0.9 * delta_tr {
                            delta_tr = (4.0 * delta_tr).min(delta_max);
                        }
                        accepted = Some((beta_soc, flows_soc));
                        rescued = true;
                        break;
                    }
                    cand_x = sol_soc.x;
                    cand_flows = flows_soc;
                }
                if rescued {
                    break;
                }
            }

            let next = (0.5 * step).max(2.0 * infeasible_radius).max(tol_beta);
            if next >= delta_tr {
                // Pinched between infeasibility below and rejection here:
                // no untested radius remains.
                break;
            }
            delta_tr = next;
        }

        if infeasible_at_full_radius {
            if options.strategy == Strategy::Improved
                && !used_full_retry
                && active.len() < full_set.len()
            {
                // The included subset may be over-constrained by a
                // stale linearization; retry once with everything.
                used_full_retry = true;
                for &key in &full_set {
                    active.insert(key);
                }
                continue;
            }
            iterations.push(IterationRecord {
                cost: l1_cost(&beta_prev, &beta0),
                included: active.len(),
                max_violation: max_excess(&row_excesses(model, scenarios, &flows_prev)),
            });
            status = PlacementStatus::InfeasibleLP;
            break;
        }

        let (beta_next, flows_next) =
            accepted.unwrap_or_else(|| (beta_prev.clone(), flows_prev.clone()));
        let excesses = row_excesses(model, scenarios, &flows_next);
        let violated: Vec<&RowExcess> = excesses.iter().filter(|r| r.excess > feas_tol).collect();
        let fresh: Vec<&RowExcess> = violated
            .iter()
            .copied()
            .filter(|r| !active.contains(&r.key))
            .collect();

        iterations.push(IterationRecord {
            cost: l1_cost(&beta_next, &beta0),
            included: active.len(),
            max_violation: max_excess(&excesses),
        });

        let step = beta_next
            .iter()
            .zip(beta_prev.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);

        let update_empty = fresh.is_empty();
        if !update_empty {
            match options.violation_move {
                ViolationMove::AllViolated => {
                    for r in &fresh {
                        active.insert(r.key);
                    }
                }
                ViolationMove::MostViolated => {
                    // Index-ordered scan with strict comparison: the
                    // first-worst row wins ties deterministically.
                    let worst = fresh
                        .iter()
                        .fold(None::<&&RowExcess>, |best, r| match best {
                            Some(b) if b.excess >= r.excess => best,
                            _ => Some(r),
                        })
                        .expect("fresh is nonempty");
                    active.insert(worst.key);
                }
            }
        }

        beta_prev = beta_next;
        flows_prev = flows_next;
        if step <= tol_beta && update_empty {
            if violated.is_empty() {
                // Converged, nothing left to add, and the exact
                // verification pass over every constraint is clean.
                status = PlacementStatus::Solved;
            }
            // Otherwise converged-but-violated: the next LP would be
            // built from the same linearization point and the same rows,
            // so repeating it cannot move the iterate.
            break;
        }
    }

    Ok(finish(beta_prev, &beta0, beta_scale, status, iterations, active))
}

/// Build the l1-objective LP whose rows are the included constraints
/// linearized about `beta_prev`, returning the constraint key of each
/// row in order. Bounds are left at the embedding's defaults; the
/// caller owns them (box and trust region).
fn linearized_lp(
    model: &GridModel,
    scenarios: &[Scenario],
    active: &ActiveSet,
    embedding: &L1Embedding,
    beta0: &[f64],
    beta_prev: &[f64],
) -> Result<(LpProblem, Vec<ConstraintKey>)> {
    // Group the included rows by scenario and materialize Jacobian rows
    // for exactly those lines.
    let mut lines_by_scenario: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(s, l, _) in active.iter() {
        lines_by_scenario.entry(s).or_default().insert(l);
    }

    let mut lp = embedding.problem();
    let mut row_keys = Vec::new();
    let limits = model.limits();
    for (&s, lines) in &lines_by_scenario {
        let rows: Vec<usize> = lines.iter().copied().collect();
        let lin = flow_jacobian_rows(model, beta_prev, &scenarios[s], &rows)?;
        for &(cs, l, sigma) in active.iter() {
            if cs != s {
                continue;
            }
            let sg = f64::from(sigma);
            let brow = lin.row(l).expect("row materialized for every active line");
            // σ·(F̂ + B·(β − β_prev)) ≤ f with β − β_prev written in
            // the split variables: (u − v) + (β⁰ − β_prev).
            let shift: f64 = brow
                .iter()
                .zip(beta0.iter().zip(beta_prev.iter()))
                .map(|(b, (b0, bp))| b * (b0 - bp))
                .sum();
            let rhs = limits[l] - sg * lin.flows[l] - sg * shift;
            let mut coeffs = Vec::new();
            for (col, &b) in brow.iter().enumerate() {
                if b != 0.0 {
                    coeffs.push((embedding.u_index(col), sg * b));
                    coeffs.push((embedding.v_index(col), -sg * b));
                }
            }
            lp.add_le(coeffs, rhs);
            row_keys.push((cs, l, sigma));
        }
    }
    Ok((lp, row_keys))
}

fn l1_cost(beta: &[f64], beta0: &[f64]) -> f64 {
    beta.iter().zip(beta0.iter()).map(|(a, b)| (a - b).abs()).sum()
}

fn finish(
    beta_opt: Vec<f64>,
    beta0: &[f64],
    beta_scale: f64,
    status: PlacementStatus,
    iterations: Vec<IterationRecord>,
    active: ActiveSet,
) -> PlacementResult {
    let delta: Vec<f64> = beta_opt.iter().zip(beta0.iter()).map(|(a, b)| a - b).collect();
    let cost: f64 = delta.iter().map(|d| d.abs()).sum();
    let threshold = 1e-6 * beta_scale;
    let modified_lines: Vec<usize> = delta
        .iter()
        .enumerate()
        .filter(|(_, d)| d.abs() > threshold)
        .map(|(i, _)| i)
        .collect();
    PlacementResult {
        beta_opt,
        delta,
        cost,
        status,
        iterations,
        modified_lines,
        active,
    }
}

/// Minimum-cost base dispatch: choose controllable injections within
/// their generation bounds so that total injection balances, every line
/// flow respects its limit, and the linear cost is minimal.
///
/// Flows are exactly linear in the injections at fixed β, so the limit
/// constraints are generated lazily: solve with balance and bounds only,
/// add sensitivity rows for whichever lines the exact solution
/// overloads, and repeat until clean. Each round adds at least one new
/// row, so termination is guaranteed.
pub fn base_opf(model: &GridModel) -> Result<Vec<f64>> {
    let controllable = model.controllable_buses();
    if controllable.is_empty() {
        return Err(Error::InfeasibleDispatch(
            "no feasible base dispatch: model has no controllable buses".into(),
        ));
    }
    let buses = model.buses();
    let fixed: Vec<usize> = (0..model.num_buses()).filter(|b| !controllable.contains(b)).collect();
    let fixed_total: f64 = fixed.iter().map(|&b| buses[b].injection_base).sum();

    let mut lp = LpProblem::new(controllable.len());
    lp.set_objective(controllable.iter().map(|&b| buses[b].cost_linear).collect());
    for (j, &b) in controllable.iter().enumerate() {
        lp.set_bounds(j, buses[b].gen_min, buses[b].gen_max);
    }
    // Balance as a paired inequality: Σ p_c = −Σ p_fixed.
    let ones: Vec<(usize, f64)> = (0..controllable.len()).map(|j| (j, 1.0)).collect();
    let neg_ones: Vec<(usize, f64)> = (0..controllable.len()).map(|j| (j, -1.0)).collect();
    lp.add_le(ones, -fixed_total);
    lp.add_le(neg_ones, fixed_total);

    let system = assemble_physical(model, &model.susceptances(), &BTreeSet::new())?;
    let limits = model.limits();
    let mut added: BTreeSet<(usize, i8)> = BTreeSet::new();

    for _round in 0..50 {
        let sol = lp_solve(&lp)?;
        match sol.status {
            LpStatus::Infeasible => {
                return Err(Error::InfeasibleDispatch("no feasible base dispatch".into()));
            }
            LpStatus::Unbounded => {
                return Err(Error::Numerical(
                    "dispatch LP reported unbounded despite boxed variables".into(),
                ));
            }
            LpStatus::Optimal => {}
        }
        let mut injections: Vec<f64> = buses.iter().map(|b| b.injection_base).collect();
        for (j, &b) in controllable.iter().enumerate() {
            injections[b] = sol.x[j];
        }
        let flows = system.solve_flows(&injections)?.flows;

        let mut clean = true;
        for (l, &f) in limits.iter().enumerate() {
            if !f.is_finite() || flows[l].abs() <= f * (1.0 + 1e-10) {
                continue;
            }
            clean = false;
            let sigma: i8 = if flows[l] >= 0.0 { 1 } else { -1 };
            if !added.insert((l, sigma)) {
                continue; // row already present; the re-solve will tighten
            }
            // Exact flow row: F_ℓ = w_ℓ · (L̂⁻¹ d_ℓ) · p, split into the
            // controllable variables and the fixed-injection constant.
            let y = system.incidence_solve(l);
            let w = system.weights()[l];
            let sg = f64::from(sigma);
            let fixed_part: f64 = fixed.iter().map(|&b| w * y[b] * buses[b].injection_base).sum();
            let coeffs: Vec<(usize, f64)> = controllable
                .iter()
                .enumerate()
                .map(|(j, &b)| (j, sg * w * y[b]))
                .filter(|&(_, c)| c != 0.0)
                .collect();
            lp.add_le(coeffs, f - sg * fixed_part);
        }
        if clean {
            return Ok(injections);
        }
    }
    Err(Error::Numerical(
        "dispatch constraint generation did not settle within 50 rounds".into(),
    ))
}

/// Uniformly scale a dispatch into a stressed no-outage scenario.
/// Balance is preserved exactly up to the scaling's rounding.
pub fn scale_scenario(p_star: &[f64], alpha: f64) -> Scenario {
    assert!(alpha > 0.0 && alpha.is_finite(), "scaling factor must be positive");
    Scenario::base(
        p_star.iter().map(|p| alpha * p).collect(),
        format!("alpha={alpha}"),
    )
}

/// Single-line-outage scenario generation.
#[derive(Debug, Clone)]
pub struct N1Set {
    /// One scenario per in-service, non-bridge line, in line order.
    pub scenarios: Vec<Scenario>,
    /// Lines skipped because their removal disconnects the graph.
    pub skipped_bridges: Vec<usize>,
}

/// Build the N−1 scenario family for `base`: one scenario per line whose
/// outage (on top of any outages already in `base`) leaves the network
/// connected. Bridges are skipped and reported, not errored.
pub fn n1_scenarios(model: &GridModel, base: &Scenario) -> Result<N1Set> {
    base.validate(model)?;
    check_balance(&base.injections)?;
    let mut scenarios = Vec::new();
    let mut skipped_bridges = Vec::new();
    for l in 0..model.num_lines() {
        if base.outaged_lines.contains(&l) {
            continue;
        }
        let mut outaged = base.outaged_lines.clone();
        outaged.insert(l);
        if model.is_connected_without(&outaged) {
            scenarios.push(Scenario {
                injections: base.injections.clone(),
                outaged_lines: outaged,
                label: format!("n-1:{l}"),
            });
        } else {
            skipped_bridges.push(l);
        }
    }
    Ok(N1Set {
        scenarios,
        skipped_bridges,
    })
}

/// Bisection for the largest scaling at which placement still succeeds.
///
/// `search` is `(lo, hi, tol)`: placement must succeed at `lo` and fail
/// at `hi`; the returned value is the largest α known to succeed, within
/// an absolute bracket width of `tol`. Run errors during probing count
/// as failures (conservative).
pub fn alpha_c_prime(
    model: &GridModel,
    p_star: &[f64],
    options: &PlacementOptions,
    search: (f64, f64, f64),
) -> Result<f64> {
    let (mut lo, mut hi, tol) = search;
    if !(lo > 0.0 && hi > lo && tol > 0.0) {
        return Err(Error::Invalid(format!(
            "bisection bracket must satisfy 0 < lo < hi and tol > 0, got ({lo}, {hi}, {tol})"
        )));
    }
    let solved_at = |alpha: f64| -> bool {
        matches!(
            place(model, &[scale_scenario(p_star, alpha)], options),
            Ok(r) if r.status == PlacementStatus::Solved
        )
    };
    if !solved_at(lo) {
        return Err(Error::Invalid(format!(
            "placement already fails at the lower bracket alpha = {lo}"
        )));
    }
    if solved_at(hi) {
        return Err(Error::Invalid(format!(
            "placement still succeeds at the upper bracket alpha = {hi}; widen the bracket"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if solved_at(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Outcome of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepPointStatus {
    Solved,
    InfeasibleLP,
    IterLimit,
    /// The run aborted with an error (recorded in `SweepPoint::note`).
    Failed,
}

/// One α of a cost sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub alpha: f64,
    /// l1 correction cost; `+∞` when the point is infeasible or failed.
    pub cost: f64,
    pub status: SweepPointStatus,
    /// Lines overloaded at β^(in) before any correction, ascending.
    pub overloaded_lines: Vec<usize>,
    /// Lines the correction changed, ascending.
    pub modified_lines: Vec<usize>,
    /// Final susceptance per line (empty when the point failed).
    pub per_line_final_beta: BTreeMap<usize, f64>,
    /// Failure detail for `Failed` points.
    pub note: Option<String>,
}

/// Cost sweep over ascending scaling factors. Every point restarts from
/// β^(in) — warm-starting across α would hide the local-minimum jumps
/// the sweep exists to expose. Points run in parallel; output order and
/// content are deterministic. Per-point failures are recorded in the
/// point and do not abort the sweep.
pub fn sweep(
    model: &GridModel,
    p_star: &[f64],
    alphas: &[f64],
    options: &PlacementOptions,
) -> Result<Vec<SweepPoint>> {
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("sweep alphas must be strictly ascending".into()));
    }
    alphas
        .par_iter()
        .map(|&alpha| sweep_point(model, p_star, alpha, options, None))
        .collect()
}

fn sweep_point(
    model: &GridModel,
    p_star: &[f64],
    alpha: f64,
    options: &PlacementOptions,
    forced_outage: Option<usize>,
) -> Result<SweepPoint> {
    let mut scenario = scale_scenario(p_star, alpha);
    if let Some(l) = forced_outage {
        scenario.outaged_lines.insert(l);
        scenario.label = format!("alpha={alpha},out={l}");
    }

    // Pre-correction overloads at β^(in).
    let beta0 = model.susceptances();
    let overloaded_lines: Vec<usize> = match exact_flows(model, &beta0, &scenario) {
        Ok(flows) => {
            let limits = model.limits();
            (0..model.num_lines())
                .filter(|&l| {
                    limits[l].is_finite()
                        && !scenario.outaged_lines.contains(&l)
                        && flows[l].abs() > limits[l] * (1.0 + options.feasibility_tolerance)
                })
                .collect()
        }
        Err(e) => {
            return Ok(SweepPoint {
                alpha,
                cost: f64::INFINITY,
                status: SweepPointStatus::Failed,
                overloaded_lines: Vec::new(),
                modified_lines: Vec::new(),
                per_line_final_beta: BTreeMap::new(),
                note: Some(e.to_string()),
            })
        }
    };

    match place(model, &[scenario], options) {
        Ok(result) => {
            let status = match result.status {
                PlacementStatus::Solved => SweepPointStatus::Solved,
                PlacementStatus::InfeasibleLP => SweepPointStatus::InfeasibleLP,
                PlacementStatus::IterLimit => SweepPointStatus::IterLimit,
            };
            let failed = result.status == PlacementStatus::InfeasibleLP;
            Ok(SweepPoint {
                alpha,
                cost: if failed { f64::INFINITY } else { result.cost },
                status,
                overloaded_lines,
                modified_lines: result.modified_lines.clone(),
                per_line_final_beta: if failed {
                    BTreeMap::new()
                } else {
                    result.beta_opt.iter().copied().enumerate().collect()
                },
                note: None,
            })
        }
        Err(e) => Ok(SweepPoint {
            alpha,
            cost: f64::INFINITY,
            status: SweepPointStatus::Failed,
            overloaded_lines,
            modified_lines: Vec::new(),
            per_line_final_beta: BTreeMap::new(),
            note: Some(e.to_string()),
        }),
    }
}

/// A flagged discontinuity between two consecutive solved sweep points.
#[derive(Debug, Clone, Copy)]
pub struct CostJump {
    pub alpha_before: f64,
    pub alpha_after: f64,
    pub cost_before: f64,
    pub cost_after: f64,
    /// max(costs)/min(costs) across the pair.
    pub ratio: f64,
}

/// Scan consecutive solved points for cost jumps of at least `factor`.
/// Pairs whose smaller cost sits below 2% of the sweep's maximum solved
/// cost are ignored — near the critical scaling the cost rises from
/// zero, where ratios are meaninglessly large.
pub fn detect_jumps(points: &[SweepPoint], factor: f64) -> Vec<CostJump> {
    let max_cost = points
        .iter()
        .filter(|p| p.status == SweepPointStatus::Solved)
        .map(|p| p.cost)
        .fold(0.0_f64, f64::max);
    let floor = 0.02 * max_cost;
    let mut jumps = Vec::new();
    for pair in points.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.status != SweepPointStatus::Solved || b.status != SweepPointStatus::Solved {
            continue;
        }
        let lo = a.cost.min(b.cost);
        let hi = a.cost.max(b.cost);
        if lo > floor && hi > factor * lo {
            jumps.push(CostJump {
                alpha_before: a.alpha,
                alpha_after: b.alpha,
                cost_before: a.cost,
                cost_after: b.cost,
                ratio: hi / lo,
            });
        }
    }
    jumps
}

/// How [`warm_start_variant`] accounts for the removed line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalCosting {
    /// Report the LP cost alone; the removal is treated as free.
    Free,
    /// Add the removed line's β^(0) to every finite point cost, charging
    /// the removal under the original objective.
    ChargeRemoval,
}

/// Sweep with one line forced out of service in every scenario topology,
/// exploring the alternative local-minimum branch reached by starting
/// from a configuration with that line removed.
///
/// The forced line must not be a bridge. Its susceptance variable simply
/// does not appear in any constraint, so the LP never charges it; with
/// [`RemovalCosting::ChargeRemoval`] the report instead re-costs the
/// removal as the line's full β^(0).
pub fn warm_start_variant(
    model: &GridModel,
    p_star: &[f64],
    alphas: &[f64],
    options: &PlacementOptions,
    forced_zero: usize,
    costing: RemovalCosting,
) -> Result<Vec<SweepPoint>> {
    if forced_zero >= model.num_lines() {
        return Err(Error::Invalid(format!(
            "forced_zero line {forced_zero} out of range for {} lines",
            model.num_lines()
        )));
    }
    let single: BTreeSet<usize> = [forced_zero].into_iter().collect();
    if !model.is_connected_without(&single) {
        return Err(Error::Invalid(format!(
            "line {forced_zero} is a bridge; removing it disconnects the network"
        )));
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("sweep alphas must be strictly ascending".into()));
    }
    let removal_charge = match costing {
        RemovalCosting::Free => 0.0,
        RemovalCosting::ChargeRemoval => model.susceptances()[forced_zero],
    };
    let mut points: Vec<SweepPoint> = alphas
        .par_iter()
        .map(|&alpha| sweep_point(model, p_star, alpha, options, Some(forced_zero)))
        .collect::<Result<_>>()?;
    if removal_charge > 0.0 {
        for p in &mut points {
            if p.cost.is_finite() {
                p.cost += removal_charge;
            }
        }
    }
    Ok(points)
}

/// Per-line loading of every scenario at a given susceptance vector —
/// the verification view: utilization is |flow|/limit (zero for
/// unlimited lines).
#[derive(Debug, Clone)]
pub struct LineLoad {
    pub scenario: usize,
    pub line: usize,
    pub flow: f64,
    pub limit: f64,
    pub utilization: f64,
}

pub fn line_loadings(model: &GridModel, beta: &[f64], scenarios: &[Scenario]) -> Result<Vec<LineLoad>> {
    let limits = model.limits();
    let mut out = Vec::new();
    for (s, scenario) in scenarios.iter().enumerate() {
        scenario.validate(model)?;
        let flows = exact_flows(model, beta, scenario)?;
        for l in 0..model.num_lines() {
            if scenario.outaged_lines.contains(&l) {
                continue;
            }
            let utilization = if limits[l].is_finite() {
                flows[l].abs() / limits[l]
            } else {
                0.0
            };
            out.push(LineLoad {
                scenario: s,
                line: l,
                flow: flows[l],
                limit: limits[l],
                utilization,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Bus;
    use crate::powerflow::alpha_c;

    /// Unit triangle with one tight line: injections (1, −1, 0) load
    /// line 0 at 2/3 against a limit of 0.6; the cheapest exact fix is
    /// β_0 → 0.75 (cost 0.25), where the flow sits exactly at the limit.
    fn tight_triangle() -> (GridModel, Scenario) {
        let model = GridModel::from_lines(
            3,
            &[(0, 1, 1.0, 0.6), (0, 2, 1.0, 10.0), (1, 2, 1.0, 10.0)],
            0,
        )
        .unwrap();
        let scenario = Scenario::base(vec![1.0, -1.0, 0.0], "tight");
        (model, scenario)
    }

    #[test]
    fn options_validation_catches_bad_fields() {
        let (model, _) = tight_triangle();
        let mut o = PlacementOptions::default();
        o.max_outer_iters = 0;
        assert!(o.validate(&model).is_err());

        let mut o = PlacementOptions::default();
        o.beta_lower = -0.5;
        assert!(o.validate(&model).is_err());

        let mut o = PlacementOptions::default();
        o.beta_lower = 2.0; // above every β⁰ = 1
        assert!(o.validate(&model).is_err());

        let mut o = PlacementOptions::default();
        o.beta_upper = Some(vec![0.5, 10.0, 10.0]); // cap below β⁰
        assert!(o.validate(&model).is_err());

        let mut o = PlacementOptions::default();
        o.beta_upper = Some(vec![10.0, 10.0]); // wrong length
        assert!(o.validate(&model).is_err());
    }

    #[test]
    fn feasible_start_solves_in_one_iteration_with_zero_cost() {
        let (model, _) = tight_triangle();
        let easy = Scenario::base(vec![0.3, -0.3, 0.0], "easy");
        for strategy in [Strategy::Direct, Strategy::Improved] {
            let options = PlacementOptions {
                strategy,
                ..PlacementOptions::default()
            };
            let r = place(&model, &[easy.clone()], &options).unwrap();
            assert_eq!(r.status, PlacementStatus::Solved);
            assert_eq!(r.iterations.len(), 1);
            assert_eq!(r.cost, 0.0);
            assert!(r.delta.iter().all(|&d| d == 0.0));
            assert!(r.modified_lines.is_empty());
        }
    }

    #[test]
    fn triangle_overload_is_relieved_at_known_cost() {
        let (model, scenario) = tight_triangle();
        for strategy in [Strategy::Direct, Strategy::Improved] {
            let options = PlacementOptions {
                strategy,
                ..PlacementOptions::default()
            };
            let r = place(&model, &[scenario.clone()], &options).unwrap();
            assert_eq!(r.status, PlacementStatus::Solved, "{strategy:?}");
            assert!((r.beta_opt[0] - 0.75).abs() < 1e-6, "{strategy:?}: {:?}", r.beta_opt);
            assert!((r.cost - 0.25).abs() < 1e-6);
            assert_eq!(r.modified_lines, vec![0]);
            assert!(r.iterations.len() <= 12);
            // Exact re-verification by hand.
            let flows = exact_flows(&model, &r.beta_opt, &scenario).unwrap();
            assert!(flows[0].abs() <= 0.6 * (1.0 + 1e-6));
        }
    }

    #[test]
    fn direct_and_improved_agree_on_the_triangle() {
        let (model, scenario) = tight_triangle();
        let direct = place(
            &model,
            &[scenario.clone()],
            &PlacementOptions {
                strategy: Strategy::Direct,
                ..PlacementOptions::default()
            },
        )
        .unwrap();
        let improved = place(
            &model,
            &[scenario],
            &PlacementOptions {
                strategy: Strategy::Improved,
                ..PlacementOptions::default()
            },
        )
        .unwrap();
        assert!((direct.cost - improved.cost).abs() < 1e-8);
    }

    #[test]
    fn improved_fixed_point_is_a_direct_fixed_point() {
        let (model, scenario) = tight_triangle();
        let improved = place(&model, &[scenario.clone()], &PlacementOptions::default()).unwrap();
        assert_eq!(improved.status, PlacementStatus::Solved);

        // Re-run Direct from the converged β: one iteration, same point.
        let restarted = GridModel::from_lines(
            3,
            &[
                (0, 1, improved.beta_opt[0], 0.6),
                (0, 2, improved.beta_opt[1], 10.0),
                (1, 2, improved.beta_opt[2], 10.0),
            ],
            0,
        )
        .unwrap();
        let direct = place(
            &restarted,
            &[scenario],
            &PlacementOptions {
                strategy: Strategy::Direct,
                ..PlacementOptions::default()
            },
        )
        .unwrap();
        assert_eq!(direct.status, PlacementStatus::Solved);
        assert_eq!(direct.iterations.len(), 1);
        for (a, b) in direct.beta_opt.iter().zip(improved.beta_opt.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn included_set_grows_monotonically() {
        let (model, scenario) = tight_triangle();
        let r = place(&model, &[scenario], &PlacementOptions::default()).unwrap();
        for pair in r.iterations.windows(2) {
            assert!(pair[1].included >= pair[0].included);
        }
        assert_eq!(r.iterations.last().unwrap().max_violation, 0.0);
    }

    #[test]
    fn tree_overload_is_infeasible_lp() {
        // On a path graph, flows are fixed by conservation alone; no
        // susceptance change helps, so placement must fail cleanly.
        let model =
            GridModel::from_lines(3, &[(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0)], 0).unwrap();
        let scenario = Scenario::base(vec![1.5, 0.0, -1.5], "over");
        for strategy in [Strategy::Direct, Strategy::Improved] {
            let options = PlacementOptions {
                strategy,
                ..PlacementOptions::default()
            };
            let r = place(&model, &[scenario.clone()], &options).unwrap();
            assert_eq!(r.status, PlacementStatus::InfeasibleLP, "{strategy:?}");
        }
    }

    #[test]
    fn beta_floor_reroutes_through_the_alternate_path() {
        // Raise the floor so the pure β_0 = 0.75 fix is out of reach.
        // Lowering β_0 alone gets the flow only to 0.8/1.3 ≈ 0.615, so
        // the optimum combines the floor with raising the alternate
        // path: along the boundary t = (4/3)β_0, cost = (5/3)β_0 − 1 is
        // minimized at the floor, giving β = (0.8, 16/15, 16/15) and
        // cost 1/3 with line 0 exactly at its limit.
        let (model, scenario) = tight_triangle();
        let options = PlacementOptions {
            beta_lower: 0.8,
            ..PlacementOptions::default()
        };
        let r = place(&model, &[scenario], &options).unwrap();
        assert_eq!(r.status, PlacementStatus::Solved);
        assert!((r.cost - 1.0 / 3.0).abs() < 1e-4, "cost {}", r.cost);
        assert!((r.beta_opt[0] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn floor_and_caps_leave_no_feasible_relief() {
        // Cap β_1 and β_2 at their base values so rerouting is blocked;
        // the only control left is β_0 ∈ [0.8, 1], where the flow never
        // drops below 0.8/1.3 ≈ 0.615 > 0.6. The run must not solve.
        let (model, scenario) = tight_triangle();
        let options = PlacementOptions {
            beta_lower: 0.8,
            beta_upper: Some(vec![f64::INFINITY, 1.0, 1.0]),
            ..PlacementOptions::default()
        };
        let r = place(&model, &[scenario], &options).unwrap();
        assert_ne!(r.status, PlacementStatus::Solved);
    }

    /// Asymmetric triangle where raising β_2 is the strictly dominant
    /// relief for the tight line 0 at every iterate — symmetric
    /// instances make the LP's vertex solutions alternate between
    /// exchange-equivalent raises and stall, so tests use data with a
    /// unique optimum.
    fn lopsided_triangle() -> (GridModel, Scenario) {
        let model = GridModel::from_lines(
            3,
            &[(0, 1, 1.0, 0.52), (0, 2, 3.0, 10.0), (1, 2, 1.0, 10.0)],
            0,
        )
        .unwrap();
        let scenario = Scenario::base(vec![1.0, -1.0, 0.0], "lopsided");
        (model, scenario)
    }

    #[test]
    fn beta_floor_forces_relief_by_raising_other_lines() {
        // With the floor at 1.0 no susceptance may shrink, so the only
        // relief is raising β_2; the exact optimum is β_2 = 4/3.
        let (model, scenario) = lopsided_triangle();
        let options = PlacementOptions {
            beta_lower: 1.0, // no line may go below its starting value
            ..PlacementOptions::default()
        };
        let r = place(&model, &[scenario.clone()], &options).unwrap();
        assert_eq!(r.status, PlacementStatus::Solved);
        assert!((r.beta_opt[0] - 1.0).abs() < 1e-9, "β_0 may not shrink");
        assert!((r.beta_opt[2] - 4.0 / 3.0).abs() < 1e-6, "{:?}", r.beta_opt);
        assert!((r.cost - 1.0 / 3.0).abs() < 1e-6);
        let flows = exact_flows(&model, &r.beta_opt, &scenario).unwrap();
        assert!(flows[0].abs() <= 0.52 * (1.0 + 1e-6));
    }

    #[test]
    fn beta_caps_redirect_the_correction() {
        // Cap β_2 below what the cheap fix needs (4/3); the remainder
        // must come from the weaker lever β_1, which then needs to reach
        // 4.0 for exact feasibility.
        let (model, scenario) = lopsided_triangle();
        let options = PlacementOptions {
            beta_lower: 1.0,
            beta_upper: Some(vec![f64::INFINITY, f64::INFINITY, 1.2]),
            ..PlacementOptions::default()
        };
        let r = place(&model, &[scenario.clone()], &options).unwrap();
        assert_eq!(r.status, PlacementStatus::Solved);
        assert!((r.beta_opt[2] - 1.2).abs() < 1e-9, "cap must bind: {:?}", r.beta_opt);
        assert!((r.beta_opt[1] - 4.0).abs() < 1e-5, "{:?}", r.beta_opt);
        let flows = exact_flows(&model, &r.beta_opt, &scenario).unwrap();
        assert!(flows[0].abs() <= 0.52 * (1.0 + 1e-6));
    }

    #[test]
    fn robust_two_scenarios_cost_at_least_each_single() {
        let (model, s1) = tight_triangle();
        // Second scenario stresses the same line from the other side.
        let s2 = Scenario::base(vec![-1.0, 1.0, 0.0], "reverse");
        let options = PlacementOptions::default();
        let single1 = place(&model, &[s1.clone()], &options).unwrap();
        let single2 = place(&model, &[s2.clone()], &options).unwrap();
        let robust = place(&model, &[s1, s2], &options).unwrap();
        assert_eq!(robust.status, PlacementStatus::Solved);
        assert!(robust.cost >= single1.cost.max(single2.cost) - 1e-8);
    }

    #[test]
    fn base_opf_two_bus_trivial_dispatch() {
        let buses = vec![Bus::generator(0, 0.0, 10.0, 1.0), Bus::load(1, 5.0)];
        let lines = vec![crate::grid::Line {
            from: 0,
            to: 1,
            susceptance: 1.0,
            limit: 10.0,
            index: 0,
        }];
        let model = GridModel::new(buses, lines, 0, 1.0).unwrap();
        let p = base_opf(&model).unwrap();
        assert!((p[0] - 5.0).abs() < 1e-9);
        assert!((p[1] + 5.0).abs() < 1e-9);
    }

    #[test]
    fn base_opf_dispatches_cheap_generator_first() {
        let buses = vec![
            Bus::generator(0, 0.0, 10.0, 1.0),
            Bus::generator(1, 0.0, 10.0, 2.0),
            Bus::load(2, 12.0),
        ];
        let lines = vec![
            crate::grid::Line {
                from: 0,
                to: 2,
                susceptance: 1.0,
                limit: f64::INFINITY,
                index: 0,
            },
            crate::grid::Line {
                from: 1,
                to: 2,
                susceptance: 1.0,
                limit: f64::INFINITY,
                index: 1,
            },
        ];
        let model = GridModel::new(buses, lines, 0, 1.0).unwrap();
        let p = base_opf(&model).unwrap();
        assert!((p[0] - 10.0).abs() < 1e-9, "cheap unit at its maximum");
        assert!((p[1] - 2.0).abs() < 1e-9, "expensive unit covers the rest");
    }

    #[test]
    fn base_opf_respects_line_limits_via_row_generation() {
        // Cheap generation at bus 0 is throttled by its 5 MW corridor;
        // the expensive unit at bus 1 must make up the difference.
        let buses = vec![
            Bus::generator(0, 0.0, 10.0, 1.0),
            Bus::generator(1, 0.0, 10.0, 2.0),
            Bus::load(2, 8.0),
        ];
        let lines = vec![
            crate::grid::Line {
                from: 0,
                to: 2,
                susceptance: 1.0,
                limit: 5.0,
                index: 0,
            },
            crate::grid::Line {
                from: 1,
                to: 2,
                susceptance: 1.0,
                limit: 10.0,
                index: 1,
            },
        ];
        let model = GridModel::new(buses, lines, 0, 1.0).unwrap();
        let p = base_opf(&model).unwrap();
        assert!((p[0] - 5.0).abs() < 1e-8);
        assert!((p[1] - 3.0).abs() < 1e-8);
        let system = assemble_physical(&model, &model.susceptances(), &BTreeSet::new()).unwrap();
        let flows = system.solve_flows(&p).unwrap().flows;
        for (l, f) in model.limits().iter().enumerate() {
            assert!(flows[l].abs() <= f * (1.0 + 1e-8));
        }
    }

    #[test]
    fn base_opf_reports_uncoverable_load() {
        let buses = vec![Bus::generator(0, 0.0, 3.0, 1.0), Bus::load(1, 5.0)];
        let lines = vec![crate::grid::Line {
            from: 0,
            to: 1,
            susceptance: 1.0,
            limit: 10.0,
            index: 0,
        }];
        let model = GridModel::new(buses, lines, 0, 1.0).unwrap();
        assert!(matches!(base_opf(&model), Err(Error::InfeasibleDispatch(_))));
    }

    #[test]
    fn scale_scenario_preserves_balance_and_records_alpha() {
        let p = vec![2.0, -0.5, -1.5];
        let s = scale_scenario(&p, 1.0);
        assert_eq!(s.injections, p);
        assert!(s.outaged_lines.is_empty());
        let s = scale_scenario(&p, 2.5);
        assert_eq!(s.injections, vec![5.0, -1.25, -3.75]);
        assert!(s.injections.iter().sum::<f64>().abs() < 1e-12);
        assert_eq!(s.label, "alpha=2.5");
    }

    #[test]
    fn n1_on_triangle_gives_three_scenarios() {
        let (model, scenario) = tight_triangle();
        let set = n1_scenarios(&model, &scenario).unwrap();
        assert_eq!(set.scenarios.len(), 3);
        assert!(set.skipped_bridges.is_empty());
        for (l, sc) in set.scenarios.iter().enumerate() {
            assert!(sc.outaged_lines.contains(&l));
            assert_eq!(sc.label, format!("n-1:{l}"));
        }
    }

    #[test]
    fn n1_on_a_path_skips_every_bridge() {
        let model =
            GridModel::from_lines(3, &[(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0)], 0).unwrap();
        let set = n1_scenarios(&model, &Scenario::base(vec![0.5, 0.0, -0.5], "base")).unwrap();
        assert!(set.scenarios.is_empty());
        assert_eq!(set.skipped_bridges, vec![0, 1]);
    }

    #[test]
    fn alpha_c_prime_on_a_tree_collapses_to_alpha_c() {
        let model =
            GridModel::from_lines(3, &[(0, 1, 1.0, 2.0), (1, 2, 1.0, 2.0)], 0).unwrap();
        let p = vec![1.0, 0.0, -1.0];
        let critical = alpha_c(&model, &p).unwrap();
        assert!((critical.alpha - 2.0).abs() < 1e-12);
        let found = alpha_c_prime(&model, &p, &PlacementOptions::default(), (1.0, 4.0, 1e-4)).unwrap();
        assert!(
            (found - critical.alpha).abs() < 2e-4,
            "tree rerouting is impossible, so the boundaries coincide: {found}"
        );
    }

    #[test]
    fn alpha_c_prime_rejects_bad_brackets() {
        let (model, _) = tight_triangle();
        let p = vec![1.0, -1.0, 0.0];
        // Fails at lo (heavily supercritical on the tight line).
        assert!(alpha_c_prime(&model, &p, &PlacementOptions::default(), (50.0, 100.0, 1e-3)).is_err());
        // Still solved at hi (both subcritical).
        assert!(alpha_c_prime(&model, &p, &PlacementOptions::default(), (0.1, 0.2, 1e-3)).is_err());
    }

    #[test]
    fn sweep_subcritical_costs_are_zero_and_supercritical_positive() {
        let (model, _) = tight_triangle();
        let p = vec![1.0, -1.0, 0.0];
        // α_c for limit 0.6 on a flow of 2/3 is 0.9.
        let critical = alpha_c(&model, &p).unwrap();
        assert!((critical.alpha - 0.9).abs() < 1e-12);
        let alphas = vec![0.5, 0.8, 0.9, 1.0, 1.2];
        let points = sweep(&model, &p, &alphas, &PlacementOptions::default()).unwrap();
        assert_eq!(points.len(), alphas.len());
        for pt in &points[..3] {
            assert_eq!(pt.status, SweepPointStatus::Solved);
            assert_eq!(pt.cost, 0.0, "alpha {} is subcritical", pt.alpha);
            assert!(pt.modified_lines.is_empty());
        }
        for pt in &points[3..] {
            assert_eq!(pt.status, SweepPointStatus::Solved);
            assert!(pt.cost > 0.0, "alpha {} needs correction", pt.alpha);
            assert!(pt.overloaded_lines.contains(&0));
            assert_eq!(pt.per_line_final_beta.len(), 3);
        }
    }

    #[test]
    fn sweep_rejects_unsorted_alphas() {
        let (model, _) = tight_triangle();
        let p = vec![1.0, -1.0, 0.0];
        assert!(sweep(&model, &p, &[1.0, 0.5], &PlacementOptions::default()).is_err());
    }

    #[test]
    fn jump_detector_flags_only_genuine_jumps() {
        let mk = |alpha: f64, cost: f64| SweepPoint {
            alpha,
            cost,
            status: SweepPointStatus::Solved,
            overloaded_lines: vec![],
            modified_lines: vec![],
            per_line_final_beta: BTreeMap::new(),
            note: None,
        };
        let points = vec![
            mk(1.0, 0.0),
            mk(1.1, 0.001), // tiny: below the 2% floor, never flagged
            mk(1.2, 0.10),
            mk(1.3, 0.12),
            mk(1.4, 0.14),
            mk(1.5, 0.50), // genuine jump
            mk(1.6, 0.52),
        ];
        let jumps = detect_jumps(&points, 2.0);
        assert_eq!(jumps.len(), 1);
        assert_eq!(jumps[0].alpha_after, 1.5);
        assert!(jumps[0].ratio > 3.0);
        // A stricter factor hides it.
        assert!(detect_jumps(&points, 4.0).is_empty());
    }

    /// Two triangles sharing only bus 0: stress lives entirely in the
    /// first; the second carries no flow, so removing one of its lines
    /// changes nothing about the optimum.
    fn two_block_model() -> GridModel {
        GridModel::from_lines(
            5,
            &[
                (0, 1, 1.0, 0.6),  // 0: tight line of block A
                (0, 2, 1.0, 10.0), // 1
                (1, 2, 1.0, 10.0), // 2
                (0, 3, 1.0, 10.0), // 3: block B
                (0, 4, 1.0, 10.0), // 4
                (3, 4, 1.0, 10.0), // 5: removable, carries zero flow
            ],
            0,
        )
        .unwrap()
    }

    #[test]
    fn removing_an_idle_line_leaves_sweep_costs_unchanged() {
        let model = two_block_model();
        let p = vec![1.0, -1.0, 0.0, 0.0, 0.0];
        let alphas = vec![0.5, 1.0, 1.2];
        let options = PlacementOptions::default();
        let base = sweep(&model, &p, &alphas, &options).unwrap();
        let variant =
            warm_start_variant(&model, &p, &alphas, &options, 5, RemovalCosting::Free).unwrap();
        for (a, b) in base.iter().zip(variant.iter()) {
            assert_eq!(b.status, SweepPointStatus::Solved);
            assert!(
                (a.cost - b.cost).abs() < 1e-6,
                "idle-line removal changed cost at alpha {}: {} vs {}",
                a.alpha,
                a.cost,
                b.cost
            );
        }
        // Charging the removal adds exactly β^(0) of the removed line.
        let charged =
            warm_start_variant(&model, &p, &alphas, &options, 5, RemovalCosting::ChargeRemoval)
                .unwrap();
        for (free, paid) in variant.iter().zip(charged.iter()) {
            assert!((paid.cost - free.cost - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn warm_start_variant_rejects_bridges() {
        let model = GridModel::from_lines(
            4,
            &[(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0), (2, 0, 1.0, 1.0), (0, 3, 1.0, 1.0)],
            0,
        )
        .unwrap();
        let p = vec![1.0, -1.0, 0.0, 0.0];
        let err = warm_start_variant(
            &model,
            &p,
            &[1.0],
            &PlacementOptions::default(),
            3,
            RemovalCosting::Free,
        );
        assert!(err.is_err());
    }

    #[test]
    fn line_loadings_report_utilization_per_scenario() {
        let (model, scenario) = tight_triangle();
        let loads = line_loadings(&model, &model.susceptances(), &[scenario]).unwrap();
        assert_eq!(loads.len(), 3);
        let l0 = &loads[0];
        assert_eq!((l0.scenario, l0.line), (0, 0));
        assert!((l0.flow - 2.0 / 3.0).abs() < 1e-12);
        assert!((l0.utilization - (2.0 / 3.0) / 0.6).abs() < 1e-12);
    }
}
