//! Native JSON document formats.
//!
//! Three self-describing document kinds live on disk: grids, scenarios,
//! and susceptance vectors. Every document carries a `format` tag and a
//! `version` number so readers can fail loudly on the wrong input
//! instead of misinterpreting it. Unlimited line ratings are encoded as
//! `null` (JSON has no infinity literal).

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::grid::{Bus, BusKind, GridModel, Line, Scenario};

/// Current version of all native document schemas.
pub const NATIVE_FORMAT_VERSION: u32 = 1;

const GRID_FORMAT: &str = "factsopt-grid";
const SCENARIO_FORMAT: &str = "factsopt-scenario";
const BETA_FORMAT: &str = "factsopt-beta";

#[derive(Serialize, Deserialize)]
struct GridDoc {
    format: String,
    version: u32,
    base_mva: f64,
    slack: usize,
    buses: Vec<BusDoc>,
    lines: Vec<LineDoc>,
}

#[derive(Serialize, Deserialize)]
struct BusDoc {
    kind: KindDoc,
    injection_base: f64,
    gen_min: f64,
    gen_max: f64,
    cost_linear: f64,
}

#[derive(Serialize, Deserialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "snake_case")]
enum KindDoc {
    Controllable,
    Uncontrollable,
}

#[derive(Serialize, Deserialize)]
struct LineDoc {
    from: usize,
    to: usize,
    susceptance: f64,
    /// Thermal limit in MW; `null` means unlimited.
    limit: Option<f64>,
}

/// Serialize a grid to the native JSON format (pretty-printed,
/// deterministic field order).
pub fn to_native(model: &GridModel) -> String {
    let doc = GridDoc {
        format: GRID_FORMAT.to_string(),
        version: NATIVE_FORMAT_VERSION,
        base_mva: model.base_mva(),
        slack: model.slack(),
        buses: model
            .buses()
            .iter()
            .map(|b| BusDoc {
                kind: match b.kind {
                    BusKind::Controllable => KindDoc::Controllable,
                    BusKind::Uncontrollable => KindDoc::Uncontrollable,
                },
                injection_base: b.injection_base,
                gen_min: b.gen_min,
                gen_max: b.gen_max,
                cost_linear: b.cost_linear,
            })
            .collect(),
        lines: model
            .lines()
            .iter()
            .map(|l| LineDoc {
                from: l.from,
                to: l.to,
                susceptance: l.susceptance,
                limit: if l.limit.is_infinite() { None } else { Some(l.limit) },
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("grid document serializes") + "\n"
}

/// Parse a native grid document, revalidating every model invariant.
pub fn from_native(text: &str) -> Result<GridModel> {
    let doc: GridDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, GRID_FORMAT)?;
    for (i, line) in doc.lines.iter().enumerate() {
        if !(line.susceptance.is_finite() && line.susceptance > 0.0) {
            return Err(Error::schema(
                format!("lines[{i}].susceptance"),
                format!("must be positive and finite, got {}", line.susceptance),
            ));
        }
        if let Some(limit) = line.limit {
            if !(limit.is_finite() && limit > 0.0) {
                return Err(Error::schema(
                    format!("lines[{i}].limit"),
                    format!("must be positive and finite or null, got {limit}"),
                ));
            }
        }
    }
    let buses = doc
        .buses
        .into_iter()
        .enumerate()
        .map(|(id, b)| Bus {
            id,
            kind: match b.kind {
                KindDoc::Controllable => BusKind::Controllable,
                KindDoc::Uncontrollable => BusKind::Uncontrollable,
            },
            injection_base: b.injection_base,
            gen_min: b.gen_min,
            gen_max: b.gen_max,
            cost_linear: b.cost_linear,
        })
        .collect();
    let lines = doc
        .lines
        .into_iter()
        .enumerate()
        .map(|(index, l)| Line {
            from: l.from,
            to: l.to,
            susceptance: l.susceptance,
            limit: l.limit.unwrap_or(f64::INFINITY),
            index,
        })
        .collect();
    GridModel::new(buses, lines, doc.slack, doc.base_mva)
}

#[derive(Serialize, Deserialize)]
struct ScenarioDoc {
    format: String,
    version: u32,
    label: String,
    injections: Vec<f64>,
    outaged_lines: Vec<usize>,
}

/// Serialize a scenario to the native JSON format.
pub fn scenario_to_native(scenario: &Scenario) -> String {
    let doc = ScenarioDoc {
        format: SCENARIO_FORMAT.to_string(),
        version: NATIVE_FORMAT_VERSION,
        label: scenario.label.clone(),
        injections: scenario.injections.clone(),
        outaged_lines: scenario.outaged_lines.iter().copied().collect(),
    };
    serde_json::to_string_pretty(&doc).expect("scenario document serializes") + "\n"
}

/// Parse a native scenario document. Balance and range checks happen in
/// [`Scenario::validate`] once a model is in hand.
pub fn scenario_from_native(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, SCENARIO_FORMAT)?;
    Ok(Scenario {
        injections: doc.injections,
        outaged_lines: BTreeSet::from_iter(doc.outaged_lines),
        label: doc.label,
    })
}

#[derive(Serialize, Deserialize)]
struct BetaDoc {
    format: String,
    version: u32,
    beta: Vec<f64>,
}

/// Serialize a per-unit susceptance vector.
pub fn beta_to_native(beta: &[f64]) -> String {
    let doc = BetaDoc {
        format: BETA_FORMAT.to_string(),
        version: NATIVE_FORMAT_VERSION,
        beta: beta.to_vec(),
    };
    serde_json::to_string_pretty(&doc).expect("beta document serializes") + "\n"
}

/// Parse a susceptance-vector document.
pub fn beta_from_native(text: &str) -> Result<Vec<f64>> {
    let doc: BetaDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, BETA_FORMAT)?;
    Ok(doc.beta)
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::schema(
            "format",
            format!("expected '{expected}', got '{format}'"),
        ));
    }
    if version != NATIVE_FORMAT_VERSION {
        return Err(Error::schema(
            "version",
            format!("unsupported version {version}, this build reads {NATIVE_FORMAT_VERSION}"),
        ));
    }
    Ok(())
}
