//! Nodal admittance matrix assembly.

use super::{CaseError, NetworkCase};
use std::collections::BTreeMap;

/// One structural entry of the admittance matrix, split into conductance `g`
/// and susceptance `b` parts of Y = G + jB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YEntry {
    pub col: usize,
    pub g: f64,
    pub b: f64,
}

/// Sparse complex nodal admittance matrix in bus-position indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    rows: Vec<Vec<YEntry>>,
}

impl AdmittanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Entries of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> &[YEntry] {
        &self.rows[i]
    }

    /// (g, b) of entry (i, k); zeros when structurally absent.
    pub fn get(&self, i: usize, k: usize) -> (f64, f64) {
        self.rows[i]
            .iter()
            .find(|e| e.col == k)
            .map_or((0.0, 0.0), |e| (e.g, e.b))
    }
}

/// Assemble the bus admittance matrix. Branch series admittance is
/// y = 1/(r + jx); each off-diagonal gets -y, each end's diagonal gets
/// y + j b_sh/2 plus any bus shunt. Parallel branches accumulate.
pub fn build_ybus(case: &NetworkCase) -> Result<AdmittanceMatrix, CaseError> {
    let n = case.buses.len();
    let mut rows: Vec<BTreeMap<usize, (f64, f64)>> = vec![BTreeMap::new(); n];
    let add = |rows: &mut Vec<BTreeMap<usize, (f64, f64)>>, i: usize, k: usize, g: f64, b: f64| {
        let e = rows[i].entry(k).or_insert((0.0, 0.0));
        e.0 += g;
        e.1 += b;
    };
    for br in &case.branches {
        let i = case
            .position_of(br.from)
            .ok_or_else(|| CaseError::Validation(format!("branch references unknown bus {}", br.from)))?;
        let k = case
            .position_of(br.to)
            .ok_or_else(|| CaseError::Validation(format!("branch references unknown bus {}", br.to)))?;
        let z2 = br.r * br.r + br.x * br.x;
        if z2 == 0.0 {
            return Err(CaseError::DegenerateBranch { from: br.from, to: br.to });
        }
        let (g, b) = (br.r / z2, -br.x / z2);
        let half_chg = br.b_sh / 2.0;
        add(&mut rows, i, k, -g, -b);
        add(&mut rows, k, i, -g, -b);
        add(&mut rows, i, i, g, b + half_chg);
        add(&mut rows, k, k, g, b + half_chg);
    }
    for (i, bus) in case.buses.iter().enumerate() {
        if bus.g_sh != 0.0 || bus.b_sh != 0.0 {
            add(&mut rows, i, i, bus.g_sh, bus.b_sh);
        }
        // Every diagonal exists structurally even for an unconnected bus.
        rows[i].entry(i).or_insert((0.0, 0.0));
    }
    let rows = rows
        .into_iter()
        .map(|m| m.into_iter().map(|(col, (g, b))| YEntry { col, g, b }).collect())
        .collect();
    Ok(AdmittanceMatrix { n, rows })
}
