//! First-order model of line flows as a function of line susceptances.
//!
//! At a base point β* the exact flows F(β) admit the expansion
//! F(β* + Δβ) ≈ A + B·Δβ with A = F(β*) and
//!
//! ```text
//! B[ℓ][m] = ∂F_ℓ/∂β_m = base_mva · (δ_{ℓm}·Δθ_ℓ − w_ℓ·Δθ_m·R_{ℓm})
//! ```
//!
//! where Δθ_m is the phase difference across line m, w_ℓ the effective
//! weight β_ℓ·base_mva, and R_{ℓm} = d_ℓᵀ L̂⁻¹ d_m the grounded-inverse
//! quadratic form of the two incidence vectors. The formula follows
//! from differentiating θ = L̂⁻¹p̂ with ∂L̂/∂β_m = base_mva·d_m d_mᵀ;
//! one grounded solve against d_ℓ yields the whole row ℓ, so building
//! the Jacobian for an active set of k rows costs k solves. Rows are
//! independent and computed in parallel.
//!
//! Susceptances here are per-unit (the optimizer's decision variable),
//! flows are MW — B carries the `base_mva` factor so that both the
//! finite-difference tests and the LP constraints can treat β directly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridModel, Scenario};
use crate::powerflow::{assemble_physical, LaplacianSystem};

/// Flows and their susceptance sensitivities at one operating point of
/// one scenario.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// The per-unit susceptance vector β* this expansion is anchored at.
    pub base_point: Vec<f64>,
    /// Exact MW flows at β* (all M lines, zero on outaged ones).
    pub flows: Vec<f64>,
    /// Line indices with a materialized Jacobian row, in request order.
    pub rows: Vec<usize>,
    /// One dense length-M row per entry of `rows`: ∂F_row/∂β_m in MW per
    /// per-unit susceptance. Columns of outaged lines are zero.
    pub jacobian: Vec<Vec<f64>>,
    /// Label of the scenario this was computed for.
    pub scenario_label: String,
    row_of: Vec<Option<usize>>,
}

impl Linearization {
    /// Jacobian row for a line, if materialized.
    pub fn row(&self, line: usize) -> Option<&[f64]> {
        self.row_of
            .get(line)
            .copied()
            .flatten()
            .map(|r| self.jacobian[r].as_slice())
    }

    /// First-order flow prediction for a materialized row under the
    /// given susceptance change: `A_row + B_row · Δβ`.
    pub fn predict(&self, line: usize, delta_beta: &[f64]) -> Option<f64> {
        self.row(line).map(|row| {
            self.flows[line]
                + row
                    .iter()
                    .zip(delta_beta.iter())
                    .map(|(b, d)| b * d)
                    .sum::<f64>()
        })
    }
}

/// Linearize every line's flow: all M Jacobian rows.
pub fn flow_jacobian(model: &GridModel, beta: &[f64], scenario: &Scenario) -> Result<Linearization> {
    let rows: Vec<usize> = (0..model.num_lines()).collect();
    flow_jacobian_rows(model, beta, scenario, &rows)
}

/// Linearize a subset of line flows (the active-set path): only the
/// requested rows are materialized, at one grounded solve each.
pub fn flow_jacobian_rows(
    model: &GridModel,
    beta: &[f64],
    scenario: &Scenario,
    rows: &[usize],
) -> Result<Linearization> {
    scenario.validate(model)?;
    let m = model.num_lines();
    if let Some(&bad) = rows.iter().find(|&&l| l >= m) {
        return Err(Error::Invalid(format!("jacobian row {bad} out of range for {m} lines")));
    }
    let system = assemble_physical(model, beta, &scenario.outaged_lines)?;
    let solution = system.solve_flows(&scenario.injections)?;
    let ends: Vec<(usize, usize)> = model.lines().iter().map(|l| (l.from, l.to)).collect();
    let delta_theta: Vec<f64> = ends
        .iter()
        .map(|&(a, b)| solution.phases[a] - solution.phases[b])
        .collect();
    let base_mva = model.base_mva();
    let jacobian: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|&l| jacobian_row(&system, &ends, &delta_theta, base_mva, l))
        .collect();
    let mut row_of = vec![None; m];
    for (r, &l) in rows.iter().enumerate() {
        row_of[l] = Some(r);
    }
    Ok(Linearization {
        base_point: beta.to_vec(),
        flows: solution.flows,
        rows: rows.to_vec(),
        jacobian,
        scenario_label: scenario.label.clone(),
        row_of,
    })
}

fn jacobian_row(
    system: &LaplacianSystem,
    ends: &[(usize, usize)],
    delta_theta: &[f64],
    base_mva: f64,
    l: usize,
) -> Vec<f64> {
    let m = ends.len();
    if system.is_outaged(l) {
        return vec![0.0; m];
    }
    let y = system.incidence_solve(l);
    let w_l = system.weights()[l];
    let mut row = vec![0.0; m];
    for (col, &(c, d)) in ends.iter().enumerate() {
        if system.is_outaged(col) {
            continue; // that susceptance does not act in this topology
        }
        let r_lm = y[c] - y[d];
        let mut entry = -w_l * delta_theta[col] * r_lm;
        if col == l {
            entry += delta_theta[l];
        }
        row[col] = base_mva * entry;
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_matpower;
    use crate::powerflow::triangle_sensitivities;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn triangle(beta: [f64; 3]) -> GridModel {
        GridModel::from_lines(
            3,
            &[
                (0, 1, beta[0], 10.0),
                (0, 2, beta[1], 10.0),
                (1, 2, beta[2], 10.0),
            ],
            0,
        )
        .unwrap()
    }

    fn five_bus() -> GridModel {
        GridModel::from_lines(
            5,
            &[
                (0, 1, 1.5, 9.0),
                (1, 2, 2.0, 9.0),
                (2, 3, 0.7, 9.0),
                (3, 4, 1.1, 9.0),
                (4, 0, 3.0, 9.0),
                (1, 3, 0.4, 9.0),
            ],
            2,
        )
        .unwrap()
    }

    /// Central finite difference of one Jacobian column computed through
    /// full re-assembly and re-solve.
    fn fd_column(model: &GridModel, beta: &[f64], scenario: &Scenario, col: usize) -> Vec<f64> {
        let h = 1e-6 * beta[col].max(1e-3);
        let mut up = beta.to_vec();
        up[col] += h;
        let mut down = beta.to_vec();
        down[col] -= h;
        let f_up = flow_jacobian_rows(model, &up, scenario, &[]).unwrap().flows;
        let f_down = flow_jacobian_rows(model, &down, scenario, &[]).unwrap().flows;
        f_up.iter().zip(f_down.iter()).map(|(u, d)| (u - d) / (2.0 * h)).collect()
    }

    fn assert_fd_agreement(model: &GridModel, scenario: &Scenario) {
        let beta = model.susceptances();
        let lin = flow_jacobian(model, &beta, scenario).unwrap();
        let scale = lin
            .jacobian
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        for col in 0..model.num_lines() {
            let fd = fd_column(model, &beta, scenario, col);
            for row in 0..model.num_lines() {
                let analytic = lin.jacobian[row][col];
                let tol = 1e-5 * analytic.abs().max(1e-6 * scale.max(1.0));
                assert!(
                    (analytic - fd[row]).abs() <= tol,
                    "B[{row}][{col}]: analytic {analytic} vs fd {}",
                    fd[row]
                );
            }
        }
    }

    #[test]
    fn triangle_row_matches_closed_forms() {
        let (p1, p2) = (2.0, 0.5);
        let beta = [3.0, 0.4, 1.7];
        let model = triangle(beta);
        let scenario = Scenario::base(vec![p1, p2, -p1 - p2], "base");
        let lin = flow_jacobian(&model, &beta.to_vec(), &scenario).unwrap();
        let (d_own, d_cross) = triangle_sensitivities(p1, p2, beta[0], beta[1], beta[2]);
        // Row for line (0,1): column 0 is ∂p12/∂β12, column 2 is
        // ∂p12/∂β23.
        assert!((lin.jacobian[0][0] - d_own).abs() <= 1e-10 * d_own.abs().max(1.0));
        assert!((lin.jacobian[0][2] - d_cross).abs() <= 1e-10 * d_cross.abs().max(1.0));
    }

    #[test]
    fn finite_difference_agreement_on_small_models() {
        let model = triangle([1.0, 2.0, 0.5]);
        let scenario = Scenario::base(vec![2.0, -0.5, -1.5], "base");
        assert_fd_agreement(&model, &scenario);

        let model = five_bus();
        let scenario = Scenario::base(vec![3.0, -1.0, 2.0, -2.5, -1.5], "base");
        assert_fd_agreement(&model, &scenario);
    }

    #[test]
    fn finite_difference_agreement_with_outage() {
        let model = five_bus();
        let scenario = Scenario {
            injections: vec![3.0, -1.0, 2.0, -2.5, -1.5],
            outaged_lines: BTreeSet::from([5]),
            label: "n-1:5".into(),
        };
        assert_fd_agreement(&model, &scenario);
    }

    #[test]
    fn finite_difference_agreement_with_physical_units() {
        // base_mva = 100 exercises the per-unit scaling of B.
        let g = parse_matpower(include_str!("../data/case30.m")).unwrap();
        let mut injections = vec![0.0; g.num_buses()];
        let mut total = 0.0;
        for bus in g.buses() {
            if bus.injection_base < 0.0 {
                injections[bus.id] = bus.injection_base;
                total -= bus.injection_base;
            }
        }
        injections[g.slack()] = total;
        let scenario = Scenario::base(injections, "slack-serves-all");
        let beta = g.susceptances();
        let lin = flow_jacobian(&g, &beta, &scenario).unwrap();
        // Spot-check a handful of columns against finite differences;
        // the full sweep lives in the acceptance suite. The absolute
        // floor is scaled to the matrix: entries that are exactly zero
        // (lines separated by an articulation bus) meet finite
        // differences only up to FD noise.
        let bmax = lin
            .jacobian
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        for col in [0, 9, 14, 40] {
            let fd = fd_column(&g, &beta, &scenario, col);
            for row in 0..g.num_lines() {
                let analytic = lin.jacobian[row][col];
                let tol = 1e-4 * analytic.abs().max(1e-5 * bmax);
                assert!(
                    (analytic - fd[row]).abs() <= tol,
                    "B[{row}][{col}]: analytic {analytic} vs fd {}",
                    fd[row]
                );
            }
        }
    }

    #[test]
    fn base_flows_equal_exact_solve() {
        let model = five_bus();
        let scenario = Scenario::base(vec![3.0, -1.0, 2.0, -2.5, -1.5], "base");
        let beta = model.susceptances();
        let lin = flow_jacobian(&model, &beta, &scenario).unwrap();
        let sys = assemble_physical(&model, &beta, &scenario.outaged_lines).unwrap();
        let exact = sys.solve_flows(&scenario.injections).unwrap();
        assert_eq!(lin.flows, exact.flows);
    }

    #[test]
    fn doubling_injections_doubles_a_and_b_exactly() {
        // Scaling by a power of two commutes with every float operation
        // in the solve, so the equality is bitwise.
        let model = five_bus();
        let beta = model.susceptances();
        let p: Vec<f64> = vec![3.0, -1.0, 2.0, -2.5, -1.5];
        let s1 = Scenario::base(p.clone(), "x1");
        let s2 = Scenario::base(p.iter().map(|v| 2.0 * v).collect(), "x2");
        let lin1 = flow_jacobian(&model, &beta, &s1).unwrap();
        let lin2 = flow_jacobian(&model, &beta, &s2).unwrap();
        for l in 0..model.num_lines() {
            assert_eq!(lin2.flows[l], 2.0 * lin1.flows[l]);
            for m in 0..model.num_lines() {
                assert_eq!(lin2.jacobian[l][m], 2.0 * lin1.jacobian[l][m]);
            }
        }
    }

    #[test]
    fn delta_term_is_the_solved_phase_difference() {
        let model = triangle([1.0, 2.0, 0.5]);
        let beta = model.susceptances();
        let scenario = Scenario::base(vec![2.0, -0.5, -1.5], "base");
        let lin = flow_jacobian(&model, &beta, &scenario).unwrap();
        let sys = assemble_physical(&model, &beta, &scenario.outaged_lines).unwrap();
        let sol = sys.solve_flows(&scenario.injections).unwrap();
        for (l, line) in model.lines().iter().enumerate() {
            let dtheta = sol.phases[line.from] - sol.phases[line.to];
            let y = sys.incidence_solve(l);
            let r_ll = y[line.from] - y[line.to];
            let non_delta = -beta[l] * dtheta * r_ll;
            assert!(
                (lin.jacobian[l][l] - non_delta - dtheta).abs() <= 1e-14 * dtheta.abs().max(1.0),
                "row {l}"
            );
        }
    }

    #[test]
    fn row_subset_matches_full_jacobian() {
        let model = five_bus();
        let beta = model.susceptances();
        let scenario = Scenario::base(vec![3.0, -1.0, 2.0, -2.5, -1.5], "base");
        let full = flow_jacobian(&model, &beta, &scenario).unwrap();
        let subset = flow_jacobian_rows(&model, &beta, &scenario, &[4, 1]).unwrap();
        assert_eq!(subset.rows, vec![4, 1]);
        assert_eq!(subset.jacobian[0], full.jacobian[4]);
        assert_eq!(subset.jacobian[1], full.jacobian[1]);
        assert_eq!(subset.row(1).unwrap(), full.jacobian[1].as_slice());
        assert!(subset.row(0).is_none());
        assert!(subset.row(99).is_none());
    }

    #[test]
    fn outaged_rows_and_columns_are_zero() {
        let model = triangle([1.0; 3]);
        let beta = model.susceptances();
        let scenario = Scenario {
            injections: vec![1.0, -1.0, 0.0],
            outaged_lines: BTreeSet::from([2]),
            label: "n-1:2".into(),
        };
        let lin = flow_jacobian(&model, &beta, &scenario).unwrap();
        assert_eq!(lin.jacobian[2], vec![0.0; 3]);
        for l in 0..3 {
            assert_eq!(lin.jacobian[l][2], 0.0);
        }
        assert_eq!(lin.flows[2], 0.0);
    }

    #[test]
    fn predictive_accuracy_improves_quadratically() {
        let model = five_bus();
        let beta = model.susceptances();
        let scenario = Scenario::base(vec![3.0, -1.0, 2.0, -2.5, -1.5], "base");
        let lin = flow_jacobian(&model, &beta, &scenario).unwrap();
        let norm = beta.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let direction: Vec<f64> = (0..beta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dir_norm = direction.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let error_at = |scale: f64| -> f64 {
            let delta: Vec<f64> = direction.iter().map(|d| d * scale / dir_norm).collect();
            let new_beta: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + d).collect();
            let sys = assemble_physical(&model, &new_beta, &scenario.outaged_lines).unwrap();
            let exact = sys.solve_flows(&scenario.injections).unwrap().flows;
            (0..beta.len())
                .map(|l| (lin.predict(l, &delta).unwrap() - exact[l]).abs())
                .fold(0.0, f64::max)
        };
        let e1 = error_at(1e-3 * norm);
        let e2 = error_at(0.5e-3 * norm);
        assert!(
            e1 >= 3.5 * e2,
            "halving the step should cut the error ~4x: {e1} vs {e2}"
        );
    }

    #[test]
    fn rejects_bad_rows_and_disconnected_scenarios() {
        let model = triangle([1.0; 3]);
        let beta = model.susceptances();
        let ok = Scenario::base(vec![1.0, -1.0, 0.0], "base");
        assert!(flow_jacobian_rows(&model, &beta, &ok, &[7]).is_err());
        let disconnecting = Scenario {
            injections: vec![1.0, -1.0, 0.0],
            outaged_lines: BTreeSet::from([0, 1]),
            label: "bad".into(),
        };
        assert!(matches!(
            flow_jacobian(&model, &beta, &disconnecting),
            Err(Error::Disconnected(_))
        ));
    }
}
