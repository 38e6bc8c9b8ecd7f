//! MATPOWER `.m` subset importer.
//!
//! Reads `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, and `mpc.branch` tables from the
//! plain-text case format. Only pi-model lines are representable: branches
//! with an off-nominal tap ratio or a phase-shift angle are rejected rather
//! than silently approximated. Inert bookkeeping columns (areas, zones, MVA
//! ratings, cost data) are ignored. Out-of-service rows are skipped.

use super::{BranchRecord, BusKind, BusRecord, CaseError, CaseMetadata, NetworkCase};
use std::collections::HashMap;

struct Table {
    rows: Vec<(usize, Vec<f64>)>, // (1-based source line, numeric row)
}

pub fn parse(text: &str) -> Result<NetworkCase, CaseError> {
    let mut base_mva: Option<f64> = None;
    let mut name: Option<String> = None;
    let mut tables: HashMap<String, Table> = HashMap::new();

    let mut current: Option<String> = None;
    for (lineno0, raw) in text.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                name = Some(rest[eq + 1..].trim().trim_end_matches(';').to_string());
            }
            continue;
        }
        if let Some(table) = &current {
            // Inside a matrix: rows of numbers until the closing bracket.
            let (body, closed) = match line.find(']') {
                Some(k) => (&line[..k], true),
                None => (line, false),
            };
            push_row(tables.get_mut(table).expect("open table exists"), body, lineno)?;
            if closed {
                current = None;
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("mpc.baseMVA") {
            let value = rest
                .trim_start()
                .strip_prefix('=')
                .map(|v| v.trim().trim_end_matches(';').trim())
                .ok_or_else(|| parse_err(lineno, "expected '=' after mpc.baseMVA"))?;
            base_mva = Some(
                value
                    .parse()
                    .map_err(|_| parse_err(lineno, &format!("bad baseMVA value '{value}'")))?,
            );
            continue;
        }
        if let Some(rest) = line.strip_prefix("mpc.") {
            // `mpc.<name> = [ ...` opens a matrix; data may start on this line.
            let Some(eq) = rest.find('=') else { continue };
            let field = rest[..eq].trim().to_string();
            let after = rest[eq + 1..].trim();
            let Some(bracket) = after.find('[') else { continue };
            let mut body = &after[bracket + 1..];
            let closed = body.contains(']');
            if closed {
                body = &body[..body.find(']').unwrap()];
            }
            // Later assignment to the same field wins, as it would in MATLAB.
            tables.insert(field.clone(), Table { rows: Vec::new() });
            push_row(tables.get_mut(&field).unwrap(), body, lineno)?;
            if !closed {
                current = Some(field);
            }
        }
    }
    if current.is_some() {
        return Err(parse_err(text.lines().count(), "unterminated matrix (missing '];')"));
    }

    let base_mva = base_mva.ok_or_else(|| parse_err(0, "missing mpc.baseMVA"))?;
    if !(base_mva.is_finite() && base_mva > 0.0) {
        return Err(CaseError::Validation(format!("baseMVA must be positive, got {base_mva}")));
    }
    let bus = tables.remove("bus").ok_or_else(|| parse_err(0, "missing mpc.bus table"))?;
    let branch = tables.remove("branch").ok_or_else(|| parse_err(0, "missing mpc.branch table"))?;
    let gen = tables.remove("gen");

    convert(base_mva, name, &bus, gen.as_ref(), &branch)
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn parse_err(line: usize, message: &str) -> CaseError {
    CaseError::Parse { location: format!("line {line}"), message: message.to_string() }
}

fn push_row(table: &mut Table, body: &str, lineno: usize) -> Result<(), CaseError> {
    // A physical line may carry several ';'-separated rows.
    for chunk in body.split(';') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in chunk.split([' ', '\t', ',']).filter(|t| !t.is_empty()) {
            row.push(
                tok.parse::<f64>()
                    .map_err(|_| parse_err(lineno, &format!("bad numeric token '{tok}'")))?,
            );
        }
        if !row.is_empty() {
            table.rows.push((lineno, row));
        }
    }
    Ok(())
}

// Standard MATPOWER column positions (0-based).
mod bus_col {
    pub const ID: usize = 0;
    pub const KIND: usize = 1;
    pub const PD: usize = 2;
    pub const QD: usize = 3;
    pub const GS: usize = 4;
    pub const BS: usize = 5;
    pub const VM: usize = 7;
    pub const VMAX: usize = 11;
    pub const VMIN: usize = 12;
}
mod gen_col {
    pub const BUS: usize = 0;
    pub const PG: usize = 1;
    pub const QG: usize = 2;
    pub const VG: usize = 5;
    pub const STATUS: usize = 7;
}
mod branch_col {
    pub const FROM: usize = 0;
    pub const TO: usize = 1;
    pub const R: usize = 2;
    pub const X: usize = 3;
    pub const B: usize = 4;
    pub const RATIO: usize = 8;
    pub const ANGLE: usize = 9;
    pub const STATUS: usize = 10;
}

fn col(row: &[f64], line: usize, idx: usize, what: &str) -> Result<f64, CaseError> {
    row.get(idx)
        .copied()
        .ok_or_else(|| parse_err(line, &format!("{what} row has {} columns, need at least {}", row.len(), idx + 1)))
}

fn convert(
    base_mva: f64,
    name: Option<String>,
    bus: &Table,
    gen: Option<&Table>,
    branch: &Table,
) -> Result<NetworkCase, CaseError> {
    // Aggregate in-service generator injections and setpoints per bus.
    #[derive(Default, Clone, Copy)]
    struct GenAgg {
        pg: f64,
        qg: f64,
        vg: Option<f64>,
    }
    let mut gens: HashMap<usize, GenAgg> = HashMap::new();
    if let Some(gen) = gen {
        for (line, row) in &gen.rows {
            if col(row, *line, gen_col::STATUS, "gen")? <= 0.0 {
                continue;
            }
            let bus_id = col(row, *line, gen_col::BUS, "gen")? as usize;
            let agg = gens.entry(bus_id).or_default();
            agg.pg += col(row, *line, gen_col::PG, "gen")? / base_mva;
            agg.qg += col(row, *line, gen_col::QG, "gen")? / base_mva;
            let vg = col(row, *line, gen_col::VG, "gen")?;
            if agg.vg.is_none() && vg > 0.0 {
                agg.vg = Some(vg);
            }
        }
    }

    let mut buses = Vec::with_capacity(bus.rows.len());
    for (line, row) in &bus.rows {
        let id = col(row, *line, bus_col::ID, "bus")? as usize;
        let kind = match col(row, *line, bus_col::KIND, "bus")? as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            k => {
                return Err(CaseError::UnsupportedFeature(format!(
                    "bus {id}: bus type {k} (only PQ/PV/slack supported)"
                )))
            }
        };
        let agg = gens.get(&id).copied().unwrap_or_default();
        let vm = col(row, *line, bus_col::VM, "bus")?;
        let v_ref = agg.vg.unwrap_or(if vm > 0.0 { vm } else { 1.0 });
        let vmax = col(row, *line, bus_col::VMAX, "bus")?;
        let vmin = col(row, *line, bus_col::VMIN, "bus")?;
        buses.push(BusRecord {
            id,
            kind,
            p_gen: agg.pg,
            q_gen: agg.qg,
            p_load: col(row, *line, bus_col::PD, "bus")? / base_mva,
            q_load: col(row, *line, bus_col::QD, "bus")? / base_mva,
            v_ref,
            v_min: (kind == BusKind::Pq && vmin > 0.0).then_some(vmin),
            v_max: (kind == BusKind::Pq && vmax > 0.0).then_some(vmax),
            g_sh: col(row, *line, bus_col::GS, "bus")? / base_mva,
            b_sh: col(row, *line, bus_col::BS, "bus")? / base_mva,
        });
    }

    let mut branches = Vec::with_capacity(branch.rows.len());
    for (line, row) in &branch.rows {
        let from = col(row, *line, branch_col::FROM, "branch")? as usize;
        let to = col(row, *line, branch_col::TO, "branch")? as usize;
        if col(row, *line, branch_col::STATUS, "branch")? <= 0.0 {
            continue;
        }
        let ratio = col(row, *line, branch_col::RATIO, "branch")?;
        if ratio != 0.0 && ratio != 1.0 {
            return Err(CaseError::UnsupportedFeature(format!(
                "branch {from}-{to}: off-nominal tap ratio {ratio} (only plain lines supported)"
            )));
        }
        let angle = col(row, *line, branch_col::ANGLE, "branch")?;
        if angle != 0.0 {
            return Err(CaseError::UnsupportedFeature(format!(
                "branch {from}-{to}: phase shift angle {angle} (only plain lines supported)"
            )));
        }
        branches.push(BranchRecord {
            from,
            to,
            r: col(row, *line, branch_col::R, "branch")?,
            x: col(row, *line, branch_col::X, "branch")?,
            b_sh: col(row, *line, branch_col::B, "branch")?,
        });
    }

    Ok(NetworkCase {
        base_mva,
        buses,
        branches,
        metadata: CaseMetadata { name, ..Default::default() },
    })
}
