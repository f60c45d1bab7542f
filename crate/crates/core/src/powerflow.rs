//! DC power flow: Laplacian assembly, phase and flow solves, critical
//! scaling, and closed-form oracles for the three-node triangle.
//!
//! The solver is unit-agnostic: it uses the line weights it is handed
//! verbatim, so flows come out in `weight * radian` units. Callers that
//! want MW flows from per-unit susceptances pass effective weights from
//! [`GridModel::line_weights`]. The phase vector is gauge-fixed by
//! grounding the slack bus — for a connected graph this produces the
//! same flows as the Laplacian pseudo-inverse at a fraction of the cost.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::grid::{check_balance, GridModel};
use crate::sparse::{rcm_order, LdlFactor, SparseSym};

/// Phases and line flows for one injection vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Bus phase angles; `phases[slack] == 0` by construction.
    pub phases: Vec<f64>,
    /// Signed line flows in from→to orientation, `weight * (θ_from −
    /// θ_to)`; zero on outaged lines.
    pub flows: Vec<f64>,
}

/// Assembled and factorized DC power-flow system for one (topology,
/// susceptance) pair. Immutable once built; one assembly serves any
/// number of injection solves, which is what makes scaling sweeps cheap.
#[derive(Debug, Clone)]
pub struct LaplacianSystem {
    slack: usize,
    weights: Vec<f64>,
    ends: Vec<(usize, usize)>,
    outaged: Vec<bool>,
    /// Slack-grounded (N−1)×(N−1) matrix, kept for residual checks.
    reduced: SparseSym,
    factor: LdlFactor,
    /// bus index → row in the reduced system (slack maps to None).
    reduced_of: Vec<Option<usize>>,
}

impl LaplacianSystem {
    /// Build the weighted Laplacian for `model` with the given line
    /// weights, drop the slack row/column, and factorize. Outaged lines
    /// contribute nothing. Weights must be nonnegative; zero weights are
    /// legal (a fully removed line) as long as the positively-weighted
    /// subgraph still connects every bus, which the factorization
    /// verifies through its pivots.
    pub fn assemble(model: &GridModel, weights: &[f64], outaged: &BTreeSet<usize>) -> Result<Self> {
        let n = model.num_buses();
        let m = model.num_lines();
        if weights.len() != m {
            return Err(Error::Invalid(format!(
                "weight vector has length {}, model has {m} lines",
                weights.len()
            )));
        }
        if let Some((l, &w)) = weights.iter().enumerate().find(|&(_, &w)| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Invalid(format!("line {l} has negative or non-finite weight {w}")));
        }
        if let Some(&bad) = outaged.iter().find(|&&l| l >= m) {
            return Err(Error::Invalid(format!("outaged line {bad} out of range for {m} lines")));
        }
        if !model.is_connected_without(outaged) {
            return Err(Error::Disconnected(" after removing outaged lines".into()));
        }
        let slack = model.slack();
        let mut reduced_of = vec![None; n];
        let mut next = 0;
        for b in 0..n {
            if b != slack {
                reduced_of[b] = Some(next);
                next += 1;
            }
        }
        let ends: Vec<(usize, usize)> = model.lines().iter().map(|l| (l.from, l.to)).collect();
        let mut effective = weights.to_vec();
        for l in outaged {
            effective[*l] = 0.0;
        }
        let mut triplets = Vec::with_capacity(4 * m);
        for (l, &(a, b)) in ends.iter().enumerate() {
            let w = effective[l];
            if w == 0.0 {
                continue;
            }
            match (reduced_of[a], reduced_of[b]) {
                (Some(ra), Some(rb)) => {
                    triplets.push((ra, ra, w));
                    triplets.push((rb, rb, w));
                    triplets.push((ra, rb, -w));
                    triplets.push((rb, ra, -w));
                }
                (Some(ra), None) => triplets.push((ra, ra, w)),
                (None, Some(rb)) => triplets.push((rb, rb, w)),
                (None, None) => unreachable!("self-loops are rejected at model construction"),
            }
        }
        let reduced = SparseSym::from_triplets(n - 1, &triplets);
        let perm = rcm_order(&reduced.adjacency());
        let factor = LdlFactor::factor(&reduced, &perm)?;
        Ok(LaplacianSystem {
            slack,
            weights: effective,
            ends,
            outaged: (0..m).map(|l| outaged.contains(&l)).collect(),
            reduced,
            factor,
            reduced_of,
        })
    }

    pub fn num_buses(&self) -> usize {
        self.reduced_of.len()
    }

    pub fn num_lines(&self) -> usize {
        self.weights.len()
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    /// Effective line weights after outage zeroing.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_outaged(&self, line: usize) -> bool {
        self.outaged[line]
    }

    /// Pivots of the factorized reduced matrix, all positive.
    pub fn pivots(&self) -> &[f64] {
        self.factor.pivots()
    }

    /// Solve the grounded system L̂ x̂ = p̂ for a full-length right-hand
    /// side (the slack entry is ignored) and return the full-length
    /// solution with 0 at the slack.
    pub fn grounded_solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.num_buses(), "right-hand side has wrong length");
        let mut reduced_rhs = vec![0.0; self.num_buses() - 1];
        for (b, &v) in rhs.iter().enumerate() {
            if let Some(r) = self.reduced_of[b] {
                reduced_rhs[r] = v;
            }
        }
        let reduced_x = self.factor.solve(&reduced_rhs);
        let mut x = vec![0.0; self.num_buses()];
        for (b, slot) in self.reduced_of.iter().enumerate() {
            if let Some(r) = *slot {
                x[b] = reduced_x[r];
            }
        }
        x
    }

    /// Solve against the incidence vector of one line: L̂ y = d̂_ℓ where
    /// d_ℓ = e_from − e_to. The workhorse of sensitivity computation.
    pub fn incidence_solve(&self, line: usize) -> Vec<f64> {
        let (a, b) = self.ends[line];
        let mut rhs = vec![0.0; self.num_buses()];
        rhs[a] = 1.0;
        rhs[b] = -1.0;
        self.grounded_solve(&rhs)
    }

    /// Solve for phases and flows at one injection vector. Checks the
    /// balance precondition and the post-solve residual.
    pub fn solve_flows(&self, injections: &[f64]) -> Result<FlowSolution> {
        if injections.len() != self.num_buses() {
            return Err(Error::Invalid(format!(
                "injection vector has length {}, model has {} buses",
                injections.len(),
                self.num_buses()
            )));
        }
        if let Some(bad) = injections.iter().find(|p| !p.is_finite()) {
            return Err(Error::Invalid(format!("non-finite injection {bad}")));
        }
        check_balance(injections)?;
        let phases = self.grounded_solve(injections);
        // Residual on the grounded system: ‖L̂θ̂ − p̂‖_∞ must be tiny
        // relative to the forcing, or the factorization has gone bad.
        let mut reduced_theta = vec![0.0; self.num_buses() - 1];
        let mut reduced_p = vec![0.0; self.num_buses() - 1];
        for (bus, slot) in self.reduced_of.iter().enumerate() {
            if let Some(r) = *slot {
                reduced_theta[r] = phases[bus];
                reduced_p[r] = injections[bus];
            }
        }
        let lt = self.reduced.multiply(&reduced_theta);
        let p_max = injections.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
        let budget = 1e-8 * p_max.max(1.0);
        for (r, (&got, &want)) in lt.iter().zip(reduced_p.iter()).enumerate() {
            if (got - want).abs() > budget {
                return Err(Error::Numerical(format!(
                    "power-flow residual {:.3e} at reduced row {r} exceeds {budget:.3e}",
                    (got - want).abs()
                )));
            }
        }
        let flows = self.flows_from_phases(&phases);
        Ok(FlowSolution { phases, flows })
    }

    /// Line flows implied by a phase vector: `weight * (θ_from − θ_to)`.
    pub fn flows_from_phases(&self, phases: &[f64]) -> Vec<f64> {
        self.ends
            .iter()
            .zip(self.weights.iter())
            .map(|(&(a, b), &w)| w * (phases[a] - phases[b]))
            .collect()
    }

    /// Triplets of the full N×N Laplacian (slack row/column included),
    /// for tests and diagnostics.
    pub fn laplacian_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut triplets = Vec::new();
        for (l, &(a, b)) in self.ends.iter().enumerate() {
            let w = self.weights[l];
            if w == 0.0 {
                continue;
            }
            triplets.push((a, a, w));
            triplets.push((b, b, w));
            triplets.push((a, b, -w));
            triplets.push((b, a, -w));
        }
        triplets
    }
}

/// Convenience wrapper: assemble the physical system for `model` at the
/// per-unit susceptances `beta` (MW flows, radian phases) under the
/// given outages.
pub fn assemble_physical(model: &GridModel, beta: &[f64], outaged: &BTreeSet<usize>) -> Result<LaplacianSystem> {
    let weights = model.line_weights(beta)?;
    LaplacianSystem::assemble(model, &weights, outaged)
}

/// The smallest uniform injection scaling that drives some line to its
/// limit, and the line that binds there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalScaling {
    pub alpha: f64,
    /// Arg-min line index (lowest index on ties).
    pub line: usize,
}

/// Critical scaling α_c = min over limited lines of `limit / |flow|`,
/// evaluated at the model's own susceptances for the given base
/// injections. Lines with zero flow or an infinite limit never bind and
/// are skipped.
pub fn alpha_c(model: &GridModel, base_injections: &[f64]) -> Result<CriticalScaling> {
    let system = assemble_physical(model, &model.susceptances(), &BTreeSet::new())?;
    let solution = system.solve_flows(base_injections)?;
    if solution.flows.iter().all(|f| *f == 0.0) {
        return Err(Error::Unstressable);
    }
    let mut best: Option<CriticalScaling> = None;
    for line in model.lines() {
        let flow = solution.flows[line.index].abs();
        if flow == 0.0 || line.limit.is_infinite() {
            continue;
        }
        let ratio = line.limit / flow;
        if best.map_or(true, |b| ratio < b.alpha) {
            best = Some(CriticalScaling {
                alpha: ratio,
                line: line.index,
            });
        }
    }
    best.ok_or_else(|| {
        Error::Invalid("every flowing line is unlimited; critical scaling is unbounded".into())
    })
}

/// Flow on edge (1,2) of a three-node triangle with injections p1, p2
/// (and p3 = −p1−p2) and edge susceptances β12, β13, β23:
///
/// ```text
/// p12 = β12 (p1 β23 − p2 β13) / D,   D = β12β13 + β12β23 + β13β23
/// ```
pub fn triangle_flow(p1: f64, p2: f64, b12: f64, b13: f64, b23: f64) -> f64 {
    let d = b12 * b13 + b12 * b23 + b13 * b23;
    b12 * (p1 * b23 - p2 * b13) / d
}

/// Closed-form sensitivities of the triangle flow p12: returns
/// `(∂p12/∂β12, ∂p12/∂β23)`.
///
/// ```text
/// ∂p12/∂β12 = β13 β23 p12 / (β12 D)
/// ∂p12/∂β23 = β12 β13 p23 / (β23 D)
/// ```
///
/// where p23 is the triangle flow on edge (2,3) in 2→3 orientation.
pub fn triangle_sensitivities(p1: f64, p2: f64, b12: f64, b13: f64, b23: f64) -> (f64, f64) {
    let d = b12 * b13 + b12 * b23 + b13 * b23;
    let p12 = triangle_flow(p1, p2, b12, b13, b23);
    let p23 = b23 * (b12 * p1 + (b12 + b13) * p2) / d;
    let d_own = b13 * b23 * p12 / (b12 * d);
    let d_cross = b12 * b13 * p23 / (b23 * d);
    (d_own, d_cross)
}
