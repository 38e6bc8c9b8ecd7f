//! Brute-force ground truth for small networks: classify every point of a
//! parameter-plane grid by multistart power-flow solves, extract the
//! class-change boundary, and measure it against traced curves.
//!
//! The oracle never looks at singular values or slack variables: it solves
//! the plain power-flow equations (no voltage-band rows) from several
//! starting points and checks the converged voltages against the operator
//! bands directly. That makes it an independent check on the boundary
//! formulation, at the cost of one caveat it cannot escape: Newton basin
//! failure can misread a solvable point as unsolvable, so oracle boundaries
//! carry an uncertainty of about one grid step.

use crate::boundary_solvers::{pf_solve_counted, BoundaryError, PfSolveSettings};
use crate::netcase::NetworkCase;
use crate::pfsystem::{LimitRows, ParameterVector, PfSystem};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;

#[cfg(test)]
mod tests;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("invalid scan grid: {0}")]
    BadGrid(String),
    #[error("point sets for distance measures must be nonempty")]
    EmptyInput,
    #[error(transparent)]
    System(#[from] BoundaryError),
}

/// A rectangular grid over two freed parameters, everything else held at
/// the template's values.
#[derive(Debug, Clone)]
pub struct ScanGrid {
    /// The two parameter indices spanning the plane.
    pub plane: [usize; 2],
    pub range1: (f64, f64),
    pub step1: f64,
    pub range2: (f64, f64),
    pub step2: f64,
    /// Values of every parameter; the two plane entries are overwritten
    /// cell by cell.
    pub fixed: ParameterVector,
}

impl ScanGrid {
    pub fn new(
        plane: [usize; 2],
        range1: (f64, f64),
        step1: f64,
        range2: (f64, f64),
        step2: f64,
        fixed: ParameterVector,
    ) -> Result<Self, OracleError> {
        for (lo, hi) in [range1, range2] {
            if !lo.is_finite() || !hi.is_finite() || hi < lo {
                return Err(OracleError::BadGrid(format!(
                    "range [{lo}, {hi}] must be finite and ordered"
                )));
            }
        }
        for step in [step1, step2] {
            if !(step > 0.0) || !step.is_finite() {
                return Err(OracleError::BadGrid(format!("step {step} must be positive")));
            }
        }
        if plane[0] == plane[1] || plane.iter().any(|&k| k >= fixed.len()) {
            return Err(OracleError::BadGrid(format!(
                "plane indices {plane:?} must be distinct and within the {} parameters",
                fixed.len()
            )));
        }
        Ok(Self { plane, range1, step1, range2, step2, fixed })
    }

    /// Number of grid points along an axis (0 or 1).
    pub fn axis_points(&self, axis: usize) -> usize {
        let (range, step) = match axis {
            0 => (self.range1, self.step1),
            1 => (self.range2, self.step2),
            _ => panic!("axis must be 0 or 1"),
        };
        ((range.1 - range.0) / step + 1e-9).floor() as usize + 1
    }

    /// Coordinates of grid point (i, j), row-major in the first axis.
    pub fn lambda_at(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.range1.0 + i as f64 * self.step1,
            self.range2.0 + j as f64 * self.step2,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionClass {
    /// A power-flow solution exists and satisfies the voltage bands.
    Feasible,
    /// Solutions exist, but every one found violates a band.
    SolvableOnly,
    /// No starting point converged to a solution.
    Unsolvable,
}

impl RegionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionClass::Feasible => "Feasible",
            RegionClass::SolvableOnly => "SolvableOnly",
            RegionClass::Unsolvable => "Unsolvable",
        }
    }
}

/// One classified grid point.
#[derive(Debug, Clone)]
pub struct ScanCell {
    pub lambda: [f64; 2],
    pub class: RegionClass,
    /// Newton iterations of the first converged solve (0 when none did).
    pub pf_iters: usize,
}

/// Number of perturbed starts tried after the flat start.
const PERTURBED_STARTS: usize = 8;
/// Perturbation half-width applied to the flat start.
const START_SPREAD: f64 = 0.4;
/// Seed for the deterministic perturbed starting points.
const START_SEED: u64 = 23;

/// The multistart list used by every classification: the flat start plus
/// eight deterministic perturbations of it.
fn starting_points(sys: &PfSystem) -> Vec<DVector<f64>> {
    let flat = sys.flat_start();
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut starts = vec![flat.clone()];
    for _ in 0..PERTURBED_STARTS {
        let mut x = flat.clone();
        for v in x.iter_mut() {
            *v += rng.gen_range(-START_SPREAD..START_SPREAD);
        }
        starts.push(x);
    }
    starts
}

/// Voltage-band check against the raw case data: every bus that declares a
/// band must have its solved magnitude inside it.
fn within_bands(case: &NetworkCase, sys: &PfSystem, x: &DVector<f64>) -> bool {
    for (pos, bus) in case.buses.iter().enumerate() {
        let Some((lo, hi)) = bus.band() else { continue };
        let Some(k) = sys.layout().var_of_bus(pos) else { continue };
        let m = x[k] * x[k] + x[k + 1] * x[k + 1];
        if m < lo * lo || m > hi * hi {
            return false;
        }
    }
    true
}

/// Newton budget for oracle solves: generous for any convergent case of
/// oracle size, small enough that hopeless cells fail fast.
fn oracle_pf_settings() -> PfSolveSettings {
    PfSolveSettings { eps: 1e-10, max_iterations: 25 }
}

/// Classify one parameter point by plain power-flow solves from the
/// multistart list. Non-convergence is a classification, never an error.
pub fn classify_point(
    case: &NetworkCase,
    sys: &PfSystem,
    lambda: [f64; 2],
    grid: &ScanGrid,
) -> ScanCell {
    let mut params = grid.fixed.clone();
    params.set_value(grid.plane[0], lambda[0]);
    params.set_value(grid.plane[1], lambda[1]);
    let settings = oracle_pf_settings();

    let mut class = RegionClass::Unsolvable;
    let mut pf_iters = 0usize;
    for x0 in starting_points(sys) {
        let Ok((x, iters)) = pf_solve_counted(sys, &x0, &params, &settings) else {
            continue;
        };
        if class == RegionClass::Unsolvable {
            class = RegionClass::SolvableOnly;
            pf_iters = iters;
        }
        if within_bands(case, sys, &x) {
            class = RegionClass::Feasible;
            break;
        }
    }
    ScanCell { lambda, class, pf_iters }
}

/// Classify every grid point. Cells are independent and solved in
/// parallel; the result is ordered by grid index (first axis major),
/// deterministically.
pub fn scan(case: &NetworkCase, grid: &ScanGrid) -> Result<Vec<ScanCell>, OracleError> {
    let sys = PfSystem::new(case, LimitRows::Exclude).map_err(BoundaryError::from)?;
    let n1 = grid.axis_points(0);
    let n2 = grid.axis_points(1);
    Ok((0..n1 * n2)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n2, idx % n2);
            classify_point(case, &sys, grid.lambda_at(i, j), grid)
        })
        .collect())
}

/// Which class change to extract from a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Feasible vs everything else.
    Feasibility,
    /// Unsolvable vs everything else.
    Solvability,
}

fn boundary_side(kind: BoundaryKind, class: RegionClass) -> bool {
    match kind {
        BoundaryKind::Feasibility => class == RegionClass::Feasible,
        BoundaryKind::Solvability => class == RegionClass::Unsolvable,
    }
}

/// Midpoints of every grid edge whose endpoints classify to different
/// sides: the marching-squares approximation of the class boundary, good
/// to half a grid step.
pub fn extract_boundary(
    grid: &ScanGrid,
    cells: &[ScanCell],
    kind: BoundaryKind,
) -> Vec<[f64; 2]> {
    let n1 = grid.axis_points(0);
    let n2 = grid.axis_points(1);
    assert_eq!(cells.len(), n1 * n2, "scan does not match its grid");
    let side = |i: usize, j: usize| boundary_side(kind, cells[i * n2 + j].class);
    let mut points = Vec::new();
    for i in 0..n1 {
        for j in 0..n2 {
            let a = grid.lambda_at(i, j);
            if i + 1 < n1 && side(i, j) != side(i + 1, j) {
                let b = grid.lambda_at(i + 1, j);
                points.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            }
            if j + 1 < n2 && side(i, j) != side(i, j + 1) {
                let b = grid.lambda_at(i, j + 1);
                points.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            }
        }
    }
    points
}

/// Symmetric Hausdorff distance between two point sets in the plane.
pub fn hausdorff(set_a: &[[f64; 2]], set_b: &[[f64; 2]]) -> Result<f64, OracleError> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(OracleError::EmptyInput);
    }
    Ok(directed_hausdorff(set_a, set_b)?.max(directed_hausdorff(set_b, set_a)?))
}

/// Directed Hausdorff distance: the farthest any point of `from` is from
/// the set `to`.
pub fn directed_hausdorff(from: &[[f64; 2]], to: &[[f64; 2]]) -> Result<f64, OracleError> {
    if from.is_empty() || to.is_empty() {
        return Err(OracleError::EmptyInput);
    }
    let worst = from
        .par_iter()
        .map(|p| {
            to.iter()
                .map(|q| {
                    let dx = p[0] - q[0];
                    let dy = p[1] - q[1];
                    dx * dx + dy * dy
                })
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst.sqrt())
}

/// Directed Hausdorff distance from a point set to a polyline: the farthest
/// any point of `from` is from the nearest segment of the curve through
/// `vertices` (with the closing segment when `closed`). Unlike the
/// point-set form, this does not penalize coarse vertex spacing on the
/// curve side.
pub fn directed_hausdorff_to_polyline(
    from: &[[f64; 2]],
    vertices: &[[f64; 2]],
    closed: bool,
) -> Result<f64, OracleError> {
    if from.is_empty() || vertices.is_empty() {
        return Err(OracleError::EmptyInput);
    }
    let segments = if vertices.len() < 2 {
        0
    } else if closed {
        vertices.len()
    } else {
        vertices.len() - 1
    };
    let worst = from
        .par_iter()
        .map(|p| {
            let mut best = {
                let dx = p[0] - vertices[0][0];
                let dy = p[1] - vertices[0][1];
                dx * dx + dy * dy
            };
            for s in 0..segments {
                let a = vertices[s];
                let b = vertices[(s + 1) % vertices.len()];
                let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
                let len2 = ex * ex + ey * ey;
                let t = if len2 == 0.0 {
                    0.0
                } else {
                    (((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / len2).clamp(0.0, 1.0)
                };
                let dx = p[0] - (a[0] + t * ex);
                let dy = p[1] - (a[1] + t * ey);
                best = best.min(dx * dx + dy * dy);
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst.sqrt())
}

/// Write a scan as CSV: `lambda1,lambda2,class`, cells in grid order.
pub fn write_scan_csv<W: Write>(mut w: W, cells: &[ScanCell]) -> std::io::Result<()> {
    writeln!(w, "lambda1,lambda2,class")?;
    for cell in cells {
        writeln!(
            w,
            "{:.16e},{:.16e},{}",
            cell.lambda[0],
            cell.lambda[1],
            cell.class.as_str()
        )?;
    }
    Ok(())
}
