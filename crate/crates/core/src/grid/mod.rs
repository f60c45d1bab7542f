//! Grid model: buses, lines, scenarios, import and validation.
//!
//! The model is deliberately minimal: a DC power-flow study needs bus
//! injections, line susceptances, and thermal limits — nothing else.
//! All electrical quantities follow one convention:
//!
//! * powers (injections, generation bounds, limits) are in MW,
//! * susceptances are per-unit on the system base `base_mva`,
//! * phase angles are radians.
//!
//! A line's MW flow is therefore `base_mva * susceptance * (theta_from -
//! theta_to)`; [`GridModel::line_weights`] produces the effective
//! MW-per-radian weights used by the solver.

mod matpower;
mod native;

pub use matpower::{parse_matpower, parse_matpower_with, ImportOptions};
pub use native::{
    beta_from_native, beta_to_native, from_native, scenario_from_native, scenario_to_native,
    to_native, NATIVE_FORMAT_VERSION,
};

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};

/// Whether a bus can redispatch its injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    /// At least one generator: net injection is a decision variable of
    /// the dispatch problem, bounded by `gen_min..=gen_max`.
    Controllable,
    /// Pure load (or fixed generation): injection is pinned to
    /// `injection_base`.
    Uncontrollable,
}

/// One bus of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    /// Dense index, equal to the bus's position in [`GridModel::buses`].
    pub id: usize,
    /// Controllable (dispatchable) or uncontrollable (fixed injection).
    pub kind: BusKind,
    /// Net injection in MW at the base operating point (generation minus
    /// load; negative for net consumers).
    pub injection_base: f64,
    /// Lower bound on net injection in MW. For uncontrollable buses this
    /// equals `injection_base`.
    pub gen_min: f64,
    /// Upper bound on net injection in MW. For uncontrollable buses this
    /// equals `injection_base`.
    pub gen_max: f64,
    /// Linear dispatch cost in $/MWh applied to generation above zero.
    pub cost_linear: f64,
}

impl Bus {
    /// A pure-load bus consuming `load` MW (injection `-load`).
    pub fn load(id: usize, load: f64) -> Self {
        Bus {
            id,
            kind: BusKind::Uncontrollable,
            injection_base: -load,
            gen_min: -load,
            gen_max: -load,
            cost_linear: 0.0,
        }
    }

    /// A generator bus with the given injection range and cost.
    pub fn generator(id: usize, gen_min: f64, gen_max: f64, cost_linear: f64) -> Self {
        Bus {
            id,
            kind: BusKind::Controllable,
            injection_base: 0.0,
            gen_min,
            gen_max,
            cost_linear,
        }
    }
}

/// One transmission line (or merged corridor of parallel branches).
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    /// Tail bus index; flow is positive from `from` to `to`.
    pub from: usize,
    /// Head bus index.
    pub to: usize,
    /// Per-unit series susceptance, strictly positive.
    pub susceptance: f64,
    /// Thermal limit in MW, strictly positive; `f64::INFINITY` marks an
    /// unlimited line, which never enters flow constraints.
    pub limit: f64,
    /// Dense index, equal to the line's position in [`GridModel::lines`].
    pub index: usize,
}

/// Validated network model.
///
/// Construction enforces every structural invariant (dense indices,
/// positive susceptances, connectivity, one line per bus pair), so any
/// `GridModel` in hand is safe to hand to the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    slack: usize,
    base_mva: f64,
}

impl GridModel {
    /// Validate and build a model. Returns an error when any invariant
    /// fails: bus/line indices out of range or out of order, duplicate
    /// bus pairs, nonpositive susceptance or limit, inverted generation
    /// bounds, or a disconnected graph.
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>, slack: usize, base_mva: f64) -> Result<Self> {
        let n = buses.len();
        if n == 0 {
            return Err(Error::Data("model has no buses".into()));
        }
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(Error::Data(format!("base_mva must be positive, got {base_mva}")));
        }
        if slack >= n {
            return Err(Error::Data(format!(
                "slack bus {slack} out of range for {n} buses"
            )));
        }
        for (i, bus) in buses.iter().enumerate() {
            if bus.id != i {
                return Err(Error::Data(format!(
                    "bus at position {i} carries id {}; ids must be dense and ordered",
                    bus.id
                )));
            }
            if !(bus.injection_base.is_finite()
                && bus.gen_min.is_finite()
                && bus.gen_max.is_finite()
                && bus.cost_linear.is_finite())
            {
                return Err(Error::Data(format!("bus {i} has a non-finite field")));
            }
            if bus.gen_min > bus.gen_max {
                return Err(Error::Data(format!(
                    "bus {i} has gen_min {} > gen_max {}",
                    bus.gen_min, bus.gen_max
                )));
            }
        }
        let mut seen_pairs: HashMap<(usize, usize), usize> = HashMap::new();
        for (l, line) in lines.iter().enumerate() {
            if line.index != l {
                return Err(Error::Data(format!(
                    "line at position {l} carries index {}; indices must be dense and ordered",
                    line.index
                )));
            }
            if line.from >= n || line.to >= n {
                return Err(Error::Data(format!(
                    "line {l} references bus {} or {} outside 0..{n}",
                    line.from, line.to
                )));
            }
            if line.from == line.to {
                return Err(Error::Data(format!("line {l} is a self-loop at bus {}", line.from)));
            }
            if !(line.susceptance.is_finite() && line.susceptance > 0.0) {
                return Err(Error::Data(format!(
                    "line {l} has nonpositive susceptance {}",
                    line.susceptance
                )));
            }
            if !(line.limit > 0.0) {
                return Err(Error::Data(format!("line {l} has nonpositive limit {}", line.limit)));
            }
            let key = ordered_pair(line.from, line.to);
            if let Some(prev) = seen_pairs.insert(key, l) {
                return Err(Error::Data(format!(
                    "lines {prev} and {l} connect the same bus pair ({}, {}); merge parallel branches first",
                    key.0, key.1
                )));
            }
        }
        let model = GridModel {
            buses,
            lines,
            slack,
            base_mva,
        };
        if !model.is_connected_without(&BTreeSet::new()) {
            return Err(Error::Disconnected(String::new()));
        }
        Ok(model)
    }

    /// Build a model from line data alone; every bus is uncontrollable
    /// with zero base injection. Handy for analytical fixtures where the
    /// injections come in through a [`Scenario`]. `lines` entries are
    /// `(from, to, susceptance, limit)`; `base_mva` is 1, so per-unit and
    /// MW quantities coincide.
    pub fn from_lines(num_buses: usize, lines: &[(usize, usize, f64, f64)], slack: usize) -> Result<Self> {
        let buses = (0..num_buses).map(|i| Bus::load(i, 0.0)).collect();
        let lines = lines
            .iter()
            .enumerate()
            .map(|(index, &(from, to, susceptance, limit))| Line {
                from,
                to,
                susceptance,
                limit,
                index,
            })
            .collect();
        GridModel::new(buses, lines, slack, 1.0)
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// Index of the slack (angle-reference) bus.
    pub fn slack(&self) -> usize {
        self.slack
    }

    /// System MVA base for per-unit conversion.
    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Per-unit susceptance of every line, in line order. This is the
    /// pre-placement vector the optimizer treats as the cost origin.
    pub fn susceptances(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.susceptance).collect()
    }

    /// Thermal limits in MW, in line order.
    pub fn limits(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.limit).collect()
    }

    /// Effective Laplacian weights (MW per radian) for a per-unit
    /// susceptance vector: `weight = base_mva * beta`.
    pub fn line_weights(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.lines.len() {
            return Err(Error::Invalid(format!(
                "susceptance vector has length {}, expected {}",
                beta.len(),
                self.lines.len()
            )));
        }
        Ok(beta.iter().map(|b| b * self.base_mva).collect())
    }

    /// Base injection vector in MW, in bus order.
    pub fn base_injections(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.injection_base).collect()
    }

    /// Indices of controllable buses, ascending.
    pub fn controllable_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .filter(|b| b.kind == BusKind::Controllable)
            .map(|b| b.id)
            .collect()
    }

    /// True when the graph stays connected after removing `outaged`
    /// lines. Breadth-first search from bus 0 over the surviving lines.
    pub fn is_connected_without(&self, outaged: &BTreeSet<usize>) -> bool {
        let n = self.buses.len();
        if n == 0 {
            return false;
        }
        let mut adjacency = vec![Vec::new(); n];
        for line in &self.lines {
            if outaged.contains(&line.index) {
                continue;
            }
            adjacency[line.from].push(line.to);
            adjacency[line.to].push(line.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    /// Indices of bridge lines: lines whose single removal disconnects
    /// the graph. Checked by rerunning the connectivity search once per
    /// line, which is plenty fast for the network sizes studied here.
    pub fn bridges(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for line in &self.lines {
            let single = BTreeSet::from([line.index]);
            if !self.is_connected_without(&single) {
                out.push(line.index);
            }
        }
        out
    }
}

fn ordered_pair(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// One operating condition: a balanced injection vector plus a set of
/// outaged lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Net injections in MW, one entry per bus.
    pub injections: Vec<f64>,
    /// Line indices removed from service in this scenario.
    pub outaged_lines: BTreeSet<usize>,
    /// Human-readable label carried into reports ("base", "n-1:7", ...).
    pub label: String,
}

impl Scenario {
    /// A no-outage scenario owning the given injections.
    pub fn base(injections: Vec<f64>, label: impl Into<String>) -> Self {
        Scenario {
            injections,
            outaged_lines: BTreeSet::new(),
            label: label.into(),
        }
    }

    /// Check this scenario against a model: vector length, injection
    /// balance (|sum| <= 1e-6 * max|p|), outage indices in range, and
    /// connectivity of the surviving graph.
    pub fn validate(&self, model: &GridModel) -> Result<()> {
        if self.injections.len() != model.num_buses() {
            return Err(Error::Invalid(format!(
                "scenario '{}' has {} injections, model has {} buses",
                self.label,
                self.injections.len(),
                model.num_buses()
            )));
        }
        if let Some(bad) = self.injections.iter().find(|p| !p.is_finite()) {
            return Err(Error::Invalid(format!(
                "scenario '{}' contains non-finite injection {bad}",
                self.label
            )));
        }
        check_balance(&self.injections)?;
        for &l in &self.outaged_lines {
            if l >= model.num_lines() {
                return Err(Error::Invalid(format!(
                    "scenario '{}' outages line {l}, model has {} lines",
                    self.label,
                    model.num_lines()
                )));
            }
        }
        if !model.is_connected_without(&self.outaged_lines) {
            return Err(Error::Disconnected(format!(
                " after removing outaged lines in scenario '{}'",
                self.label
            )));
        }
        Ok(())
    }
}

/// Verify that injections sum to zero within `1e-6 * max|p|`.
pub fn check_balance(injections: &[f64]) -> Result<()> {
    let sum: f64 = injections.iter().sum();
    let max_abs = injections.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
    let tolerance = 1e-6 * max_abs;
    if sum.abs() > tolerance {
        return Err(Error::Unbalanced {
            imbalance: sum.abs(),
            tolerance,
        });
    }
    Ok(())
}
