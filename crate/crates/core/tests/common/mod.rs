//! Shared helpers for integration tests: deterministic random networks
//! and an exhaustive vertex-enumeration reference LP solver.
//!
//! Everything here is driven by a caller-supplied RNG so test runs are
//! reproducible; nothing depends on the crate's own linear algebra.
#![allow(dead_code)]

use std::collections::BTreeSet;

use factsopt::grid::GridModel;
use factsopt::lp::{solve as lp_solve, LpProblem, LpStatus};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Does a conservative arc flow within line capacities exist for these
/// injections? Every DC solution is such a flow, so a `false` here
/// certifies that no susceptance assignment on this topology can carry
/// the injections within the limits — independent of any placement.
pub fn capacitated_flow_exists(model: &GridModel, injections: &[f64]) -> bool {
    let m = model.num_lines();
    let limits = model.limits();
    let mut lp = LpProblem::new(m);
    for (l, &lim) in limits.iter().enumerate() {
        if lim.is_finite() {
            lp.set_bounds(l, -lim, lim);
        }
    }
    // Conservation at every bus but the last; the last is redundant
    // because the injections balance.
    for bus in 0..model.num_buses() - 1 {
        let mut coeffs = Vec::new();
        for (l, line) in model.lines().iter().enumerate() {
            if line.from == bus {
                coeffs.push((l, 1.0));
            } else if line.to == bus {
                coeffs.push((l, -1.0));
            }
        }
        let rhs = injections[bus];
        let neg: Vec<(usize, f64)> = coeffs.iter().map(|&(i, c)| (i, -c)).collect();
        lp.add_le(coeffs, rhs);
        lp.add_le(neg, -rhs);
    }
    lp_solve(&lp).expect("flow LP is well formed").status == LpStatus::Optimal
}

/// A random connected grid: spanning tree over `num_buses` plus up to
/// `extra_edges` distinct chords. Susceptances in [0.5, 5), roughly half
/// the lines limited in [1, 10), the rest unlimited. All buses carry
/// zero base injection (use [`random_balanced_injections`]); slack is
/// bus 0 and base power is 1, so per-unit and MW coincide.
pub fn random_connected_grid<R: Rng>(rng: &mut R, num_buses: usize, extra_edges: usize) -> GridModel {
    assert!(num_buses >= 2, "need at least two buses");
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for v in 1..num_buses {
        let u = rng.gen_range(0..v);
        pairs.insert((u, v));
    }
    let mut added = 0;
    let mut attempts = 0;
    while added < extra_edges && attempts < 20 * extra_edges + 100 {
        attempts += 1;
        let a = rng.gen_range(0..num_buses);
        let b = rng.gen_range(0..num_buses);
        if a == b {
            continue;
        }
        if pairs.insert((a.min(b), a.max(b))) {
            added += 1;
        }
    }
    let lines: Vec<(usize, usize, f64, f64)> = pairs
        .iter()
        .map(|&(a, b)| {
            let beta = rng.gen_range(0.5..5.0);
            let limit = if rng.gen_bool(0.5) {
                rng.gen_range(1.0..10.0)
            } else {
                f64::INFINITY
            };
            (a, b, beta, limit)
        })
        .collect();
    GridModel::from_lines(num_buses, &lines, 0).expect("tree construction keeps the graph connected")
}

/// Random injections in [−2, 2) shifted to sum to zero.
pub fn random_balanced_injections<R: Rng>(rng: &mut R, num_buses: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..num_buses).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mean = p.iter().sum::<f64>() / num_buses as f64;
    for v in &mut p {
        *v -= mean;
    }
    p
}

/// Status classification reported by the reference solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleResult {
    pub status: OracleStatus,
    /// Optimal objective value when `Optimal`, ±∞ otherwise.
    pub value: f64,
}

/// Exhaustive reference solve by vertex enumeration.
///
/// Bounds become rows, missing bounds become walls of a large box, and
/// every n-subset of rows is solved as a candidate vertex; the best
/// feasible one is the optimum. Unboundedness is detected by re-running
/// with a doubled box: a genuinely unbounded problem improves its
/// objective when the walls move out, a bounded one does not (the data
/// fed to this oracle keeps true vertices far inside the first box).
///
/// Exponential in `num_vars` — intended for problems with a handful of
/// variables.
pub fn lp_oracle(p: &LpProblem) -> OracleResult {
    const BOX: f64 = 1.0e3;
    match best_vertex_value(p, BOX) {
        None => OracleResult {
            status: OracleStatus::Infeasible,
            value: f64::INFINITY,
        },
        Some(f1) => {
            let f2 = best_vertex_value(p, 2.0 * BOX).expect("a larger box preserves feasibility");
            if f2 < f1 - 1e-7 * (1.0 + f1.abs()) {
                OracleResult {
                    status: OracleStatus::Unbounded,
                    value: f64::NEG_INFINITY,
                }
            } else {
                OracleResult {
                    status: OracleStatus::Optimal,
                    value: f1,
                }
            }
        }
    }
}

fn best_vertex_value(p: &LpProblem, box_size: f64) -> Option<f64> {
    let n = p.num_vars();
    // Everything as dense `row · x ≤ rhs`.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in p.constraints() {
        let mut r = vec![0.0; n];
        for &(j, a) in &c.coeffs {
            r[j] += a;
        }
        rows.push((r, c.rhs));
    }
    for (j, &(lo, hi)) in p.bounds().iter().enumerate() {
        let mut low_row = vec![0.0; n];
        low_row[j] = -1.0;
        rows.push((low_row, if lo.is_finite() { -lo } else { box_size }));
        let mut high_row = vec![0.0; n];
        high_row[j] = 1.0;
        rows.push((high_row, if hi.is_finite() { hi } else { box_size }));
    }
    if n == 0 {
        return rows.iter().all(|&(_, rhs)| rhs >= -1e-9).then_some(0.0);
    }

    let m = rows.len();
    let mut best: Option<f64> = None;
    for_each_combination(m, n, &mut |sel| {
        let a = DMatrix::from_fn(n, n, |i, j| rows[sel[i]].0[j]);
        let b = DVector::from_fn(n, |i, _| rows[sel[i]].1);
        let Some(x) = a.clone().lu().solve(&b) else {
            return;
        };
        let residual = (&a * &x - &b).amax();
        if !residual.is_finite() || residual > 1e-7 * (1.0 + b.amax()) {
            return;
        }
        for (r, rhs) in &rows {
            let lhs: f64 = r.iter().zip(x.iter()).map(|(c, v)| c * v).sum();
            if lhs > rhs + 1e-7 * (1.0 + rhs.abs()) {
                return;
            }
        }
        let value: f64 = p.objective().iter().zip(x.iter()).map(|(c, v)| c * v).sum();
        best = Some(match best {
            Some(prev) if prev <= value => prev,
            _ => value,
        });
    });
    best
}

/// Visit every k-subset of `0..m` in lexicographic order.
fn for_each_combination(m: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < m - k + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Random small LP on a half-integer grid. Grid data keeps vertex
/// coordinates rational with bounded denominators, so the oracle's box
/// walls never interfere with genuine vertices and the unboundedness
/// test is exact. With `allow_unbounded` some variables lose bounds on
/// one or both sides; otherwise every variable lives in a finite box and
/// the instance is Optimal or Infeasible.
pub fn random_lp<R: Rng>(rng: &mut R, allow_unbounded: bool) -> LpProblem {
    random_lp_sized(rng, allow_unbounded, 4, 6)
}

/// [`random_lp`] with explicit size caps on variables and rows.
pub fn random_lp_sized<R: Rng>(
    rng: &mut R,
    allow_unbounded: bool,
    max_vars: usize,
    max_rows: usize,
) -> LpProblem {
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(0..=max_rows);
    fn half<R: Rng>(rng: &mut R) -> f64 {
        f64::from(rng.gen_range(-2i32..=2)) * 0.5
    }
    let mut p = LpProblem::new(n);
    p.set_objective((0..n).map(|_| half(rng)).collect());
    for j in 0..n {
        let lo = -f64::from(rng.gen_range(0i32..=4)) * 0.5;
        let hi = f64::from(rng.gen_range(0i32..=4)) * 0.5;
        if allow_unbounded {
            match rng.gen_range(0..10) {
                0..=3 => p.set_bounds(j, lo, hi),
                4 | 5 => p.set_bounds(j, lo, f64::INFINITY),
                6 | 7 => p.set_bounds(j, f64::NEG_INFINITY, hi),
                _ => {} // free
            }
        } else {
            p.set_bounds(j, lo, hi);
        }
    }
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                let a = half(rng);
                if a != 0.0 {
                    coeffs.push((j, a));
                }
            }
        }
        let rhs = f64::from(rng.gen_range(-4i32..=4)) * 0.5;
        p.add_le(coeffs, rhs);
    }
    p
}
