//! MATPOWER case-file import.
//!
//! Reads the `bus`, `gen`, `branch`, and `gencost` matrices plus the
//! `baseMVA` scalar out of a MATPOWER `.m` case file and produces a
//! [`GridModel`]. Everything else in the file — comments, version
//! strings, name cells, plotting helpers — is ignored.
//!
//! Import applies the usual DC preprocessing:
//!
//! * out-of-service branches (status 0) are dropped;
//! * phase-shift angles and tap ratios are ignored (a DC study treats
//!   every branch as a pure series susceptance `1/x`);
//! * parallel branches on one bus pair merge into a single line with
//!   summed susceptance and summed limit;
//! * a zero `RATE_A` means "unlimited" and becomes an infinite limit;
//! * generators on one bus merge into a single controllable injection
//!   with summed bounds and the cheapest linear cost.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::{Bus, BusKind, GridModel, Line};

/// Knobs for [`parse_matpower_with`].
#[derive(Debug, Clone, Default)]
pub struct ImportOptions {
    /// Drop branches that model transformers (tap ratio not in {0, 1} or
    /// a nonzero phase-shift angle) instead of treating them as lines.
    pub drop_transformers: bool,
}

/// Parse a MATPOWER case with default options.
pub fn parse_matpower(text: &str) -> Result<GridModel> {
    parse_matpower_with(text, &ImportOptions::default())
}

/// Parse a MATPOWER case file into a validated [`GridModel`].
pub fn parse_matpower_with(text: &str, options: &ImportOptions) -> Result<GridModel> {
    let doc = scan(text)?;
    let base_mva = match doc.scalars.get("baseMVA") {
        Some(&(_, v)) if v > 0.0 => v,
        Some(&(line, v)) => return Err(Error::parse(line, format!("baseMVA must be positive, got {v}"))),
        None => return Err(Error::Data("no baseMVA assignment found".into())),
    };
    let bus_rows = doc
        .matrices
        .get("bus")
        .ok_or_else(|| Error::Data("no bus matrix found".into()))?;
    let branch_rows = doc
        .matrices
        .get("branch")
        .ok_or_else(|| Error::Data("no branch matrix found".into()))?;
    let empty = Vec::new();
    let gen_rows = doc.matrices.get("gen").unwrap_or(&empty);
    let gencost_rows = doc.matrices.get("gencost").unwrap_or(&empty);

    // Bus table: external id, type, and load. Ids map to dense indices
    // in order of appearance.
    let mut id_map: HashMap<i64, usize> = HashMap::new();
    let mut loads = Vec::new();
    let mut slack_ext: Option<i64> = None;
    for (line_no, row) in bus_rows {
        let row = require_cols(*line_no, row, 3, "bus")?;
        let ext_id = int_field(*line_no, row[0], "bus id")?;
        let bus_type = int_field(*line_no, row[1], "bus type")?;
        if bus_type == 4 {
            return Err(Error::Data(format!("bus {ext_id} is marked isolated (type 4)")));
        }
        if id_map.insert(ext_id, loads.len()).is_some() {
            return Err(Error::parse(*line_no, format!("duplicate bus id {ext_id}")));
        }
        if bus_type == 3 && slack_ext.is_none() {
            slack_ext = Some(ext_id);
        }
        loads.push(row[2]);
    }
    let slack_ext = slack_ext.ok_or_else(|| Error::Data("no reference (type 3) bus found".into()))?;
    let n = loads.len();

    // Generator table, paired positionally with gencost rows. A gencost
    // table may carry 2x the generator rows (reactive halves); only the
    // first half applies.
    if !gencost_rows.is_empty() && gencost_rows.len() < gen_rows.len() {
        return Err(Error::Data(format!(
            "gencost has {} rows for {} generators",
            gencost_rows.len(),
            gen_rows.len()
        )));
    }
    struct BusGen {
        pg: f64,
        pmin: f64,
        pmax: f64,
        cost: f64,
        count: usize,
    }
    let mut per_bus: HashMap<usize, BusGen> = HashMap::new();
    for (g, (line_no, row)) in gen_rows.iter().enumerate() {
        let row = require_cols(*line_no, row, 10, "gen")?;
        let ext_id = int_field(*line_no, row[0], "generator bus")?;
        let bus = *id_map
            .get(&ext_id)
            .ok_or_else(|| Error::parse(*line_no, format!("generator references unknown bus {ext_id}")))?;
        if row[7] <= 0.0 {
            continue; // out of service
        }
        let cost = match gencost_rows.get(g) {
            Some((cost_line, cost_row)) => linear_cost(*cost_line, cost_row)?,
            None => 0.0,
        };
        let entry = per_bus.entry(bus).or_insert(BusGen {
            pg: 0.0,
            pmin: 0.0,
            pmax: 0.0,
            cost: f64::INFINITY,
            count: 0,
        });
        entry.pg += row[1];
        entry.pmax += row[8];
        entry.pmin += row[9];
        entry.cost = entry.cost.min(cost);
        entry.count += 1;
    }

    let mut buses = Vec::with_capacity(n);
    for (i, &load) in loads.iter().enumerate() {
        let bus = match per_bus.get(&i) {
            Some(g) => Bus {
                id: i,
                kind: BusKind::Controllable,
                injection_base: g.pg - load,
                gen_min: g.pmin - load,
                gen_max: g.pmax - load,
                cost_linear: g.cost,
            },
            None => Bus::load(i, load),
        };
        buses.push(bus);
    }

    // Branch table: keep in-service branches, then merge parallels on
    // one unordered bus pair (susceptances add; limits add, with any
    // unlimited member making the merge unlimited).
    let mut merged: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut pair_pos: HashMap<(usize, usize), usize> = HashMap::new();
    for (line_no, row) in branch_rows {
        let row = require_cols(*line_no, row, 11, "branch")?;
        if row[10] == 0.0 {
            continue; // out of service
        }
        let tap = row[8];
        let shift = row[9];
        if options.drop_transformers && (shift != 0.0 || (tap != 0.0 && tap != 1.0)) {
            continue;
        }
        let from_ext = int_field(*line_no, row[0], "branch from-bus")?;
        let to_ext = int_field(*line_no, row[1], "branch to-bus")?;
        let from = *id_map
            .get(&from_ext)
            .ok_or_else(|| Error::parse(*line_no, format!("branch references unknown bus {from_ext}")))?;
        let to = *id_map
            .get(&to_ext)
            .ok_or_else(|| Error::parse(*line_no, format!("branch references unknown bus {to_ext}")))?;
        let x = row[3];
        if x <= 0.0 {
            return Err(Error::Data(format!(
                "branch {from_ext}-{to_ext} has nonpositive reactance {x}"
            )));
        }
        let rate = row[5];
        if rate < 0.0 {
            return Err(Error::Data(format!(
                "branch {from_ext}-{to_ext} has negative rating {rate}"
            )));
        }
        let limit = if rate == 0.0 { f64::INFINITY } else { rate };
        let susceptance = 1.0 / x;
        let key = if from <= to { (from, to) } else { (to, from) };
        match pair_pos.get(&key) {
            Some(&pos) => {
                merged[pos].2 += susceptance;
                merged[pos].3 += limit;
            }
            None => {
                pair_pos.insert(key, merged.len());
                merged.push((from, to, susceptance, limit));
            }
        }
    }
    let lines = merged
        .into_iter()
        .enumerate()
        .map(|(index, (from, to, susceptance, limit))| Line {
            from,
            to,
            susceptance,
            limit,
            index,
        })
        .collect();

    GridModel::new(buses, lines, id_map[&slack_ext], base_mva)
}

/// Linear ($/MWh) coefficient of one gencost row: the `x^1` coefficient
/// for polynomial costs (model 2), or the first-segment slope for
/// piecewise-linear costs (model 1).
fn linear_cost(line_no: usize, row: &[f64]) -> Result<f64> {
    let row = require_cols(line_no, row, 4, "gencost")?;
    let model = int_field(line_no, row[0], "gencost model")?;
    let ncost = int_field(line_no, row[3], "gencost ncost")? as usize;
    match model {
        2 => {
            // Coefficients in descending powers of x.
            let coeffs = require_cols(line_no, row, 4 + ncost, "gencost")?;
            if ncost >= 2 {
                Ok(coeffs[4 + ncost - 2])
            } else {
                Ok(0.0)
            }
        }
        1 => {
            // Breakpoints (x1, y1, x2, y2, ...).
            let pts = require_cols(line_no, row, 4 + 2 * ncost, "gencost")?;
            if ncost >= 2 && pts[6] != pts[4] {
                Ok((pts[7] - pts[5]) / (pts[6] - pts[4]))
            } else {
                Ok(0.0)
            }
        }
        other => Err(Error::parse(line_no, format!("unsupported gencost model {other}"))),
    }
}

fn require_cols<'a>(line_no: usize, row: &'a [f64], want: usize, table: &str) -> Result<&'a [f64]> {
    if row.len() < want {
        return Err(Error::parse(
            line_no,
            format!("{table} row has {} columns, expected at least {want}", row.len()),
        ));
    }
    Ok(row)
}

fn int_field(line_no: usize, value: f64, what: &str) -> Result<i64> {
    let rounded = value.round();
    if (value - rounded).abs() > 1e-9 || !value.is_finite() {
        return Err(Error::parse(line_no, format!("{what} must be an integer, got {value}")));
    }
    Ok(rounded as i64)
}

/// Raw scan result: matrices and scalars by field name, with 1-based
/// source lines for error reporting.
struct Document {
    matrices: HashMap<String, Vec<(usize, Vec<f64>)>>,
    scalars: HashMap<String, (usize, f64)>,
}

/// Scan MATLAB-ish assignments of the form `name.field = [...];` and
/// `name.field = scalar;`. Rows inside a matrix end at `;` or at end of
/// line; `%` starts a comment; cell arrays (`{ ... }`) are skipped.
fn scan(text: &str) -> Result<Document> {
    enum State {
        Top,
        Matrix(String),
        Cell,
    }
    let mut state = State::Top;
    let mut doc = Document {
        matrices: HashMap::new(),
        scalars: HashMap::new(),
    };
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('%') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let mut rest = line.trim();
        loop {
            match &state {
                State::Cell => {
                    match rest.find('}') {
                        Some(pos) => {
                            rest = rest[pos + 1..].trim_start_matches(';').trim();
                            state = State::Top;
                            if rest.is_empty() {
                                break;
                            }
                        }
                        None => break,
                    }
                }
                State::Matrix(field) => {
                    let (body, closed) = match rest.find(']') {
                        Some(pos) => (&rest[..pos], true),
                        None => (rest, false),
                    };
                    let field = field.clone();
                    for chunk in body.split(';') {
                        let row = parse_row(line_no, chunk)?;
                        if !row.is_empty() {
                            doc.matrices.get_mut(&field).expect("matrix entry exists").push((line_no, row));
                        }
                    }
                    if closed {
                        state = State::Top;
                    }
                    break;
                }
                State::Top => {
                    let Some(eq) = rest.find('=') else { break };
                    let lhs = rest[..eq].trim();
                    let rhs = rest[eq + 1..].trim();
                    let Some(field) = lhs.rsplit('.').next().filter(|_| lhs.contains('.')) else {
                        break;
                    };
                    if !lhs.chars().all(|c| c.is_alphanumeric() || c == '.' || c == '_') {
                        break;
                    }
                    if let Some(body) = rhs.strip_prefix('[') {
                        if doc.matrices.insert(field.to_string(), Vec::new()).is_some() {
                            return Err(Error::parse(line_no, format!("matrix '{field}' assigned twice")));
                        }
                        state = State::Matrix(field.to_string());
                        rest = body.trim();
                        continue;
                    }
                    if rhs.starts_with('{') {
                        state = State::Cell;
                        rest = &rhs[1..];
                        continue;
                    }
                    let value = rhs.trim_end_matches(';').trim();
                    if let Ok(v) = value.parse::<f64>() {
                        doc.scalars.insert(field.to_string(), (line_no, v));
                    }
                    break;
                }
            }
        }
    }
    Ok(doc)
}

fn parse_row(line_no: usize, chunk: &str) -> Result<Vec<f64>> {
    let mut row = Vec::new();
    for token in chunk.split(|c: char| c.is_whitespace() || c == ',') {
        if token.is_empty() {
            continue;
        }
        let value = token
            .parse::<f64>()
            .map_err(|_| Error::parse(line_no, format!("expected a number, found '{token}'")))?;
        row.push(value);
    }
    Ok(row)
}
