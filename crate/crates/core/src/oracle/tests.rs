use super::*;
use crate::boundary_solvers::{find_seeds, BoundarySystem, SeedSettings, TransversalityKind};
use crate::netcase::load_case;
use crate::pfsystem::{Binding, InjectionQty};
use crate::sc_tracer::{trace_curve, RadiusPolicy, TraceSettings};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn fixture(name: &str) -> String {
    format!("{}/../../cases/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn threebus() -> NetworkCase {
    load_case(fixture("threebus.json"), None).unwrap()
}

fn threebus_loaded() -> NetworkCase {
    let mut case = threebus();
    for b in case.buses.iter_mut() {
        if b.id == 3 {
            b.p_load = 0.5;
            b.q_load = 0.2;
        }
    }
    case.validate().unwrap();
    case
}

fn plane_params(p2: f64, p3: f64, q3: f64) -> ParameterVector {
    ParameterVector::with_bindings(
        vec![
            Binding::Bus { id: 2, qty: InjectionQty::ActivePower },
            Binding::Bus { id: 3, qty: InjectionQty::ActivePower },
            Binding::Bus { id: 3, qty: InjectionQty::ReactivePower },
        ],
        vec![p2, p3, q3],
    )
    .unwrap()
}

/// P2-P3 plane of the loaded 3-bus case at a fixed Q3.
fn plane_grid(q3: f64, half1: f64, half2: f64, step: f64) -> ScanGrid {
    ScanGrid::new(
        [0, 1],
        (-half1, half1),
        step,
        (-half2, half2),
        step,
        plane_params(0.0, 0.0, q3),
    )
    .unwrap()
}

fn classify_at(case: &NetworkCase, grid: &ScanGrid, lambda: [f64; 2]) -> ScanCell {
    let sys = PfSystem::new(case, LimitRows::Exclude).unwrap();
    classify_point(case, &sys, lambda, grid)
}

// ---------------------------------------------------------------------------
// Point classification
// ---------------------------------------------------------------------------

#[test]
fn zero_injection_point_is_feasible() {
    let case = threebus();
    let grid = plane_grid(0.0, 1.0, 1.0, 0.5);
    let cell = classify_at(&case, &grid, [0.0, 0.0]);
    assert_eq!(cell.class, RegionClass::Feasible);
    assert!(cell.pf_iters <= 5, "flat point took {} iterations", cell.pf_iters);
}

#[test]
fn extreme_injection_is_unsolvable() {
    // A three-line network with x = 1 p.u. branches tops out at O(1) p.u.
    // of deliverable power; 100 p.u. is far beyond any solution.
    let case = threebus();
    let grid = plane_grid(0.0, 200.0, 200.0, 1.0);
    let cell = classify_at(&case, &grid, [0.0, 100.0]);
    assert_eq!(cell.class, RegionClass::Unsolvable);
    assert_eq!(cell.pf_iters, 0);
}

#[test]
fn converged_point_below_the_band_is_solvable_only() {
    // Past the feasibility wall (P3 = 0.824 at Q3 = 0.02) but short of the
    // solvability edge near P3 = 0.95, power flow converges with |V3|
    // under 0.9.
    let case = threebus_loaded();
    let grid = plane_grid(0.02, 2.0, 2.0, 0.5);
    let cell = classify_at(&case, &grid, [0.02, 0.85]);
    assert_eq!(cell.class, RegionClass::SolvableOnly);

    // The classification is the band check: the solved magnitude really is
    // below the floor.
    let sys = PfSystem::new(&case, LimitRows::Exclude).unwrap();
    let params = plane_params(0.02, 0.85, 0.02);
    let x = crate::boundary_solvers::pf_solve(
        &sys,
        &sys.flat_start(),
        &params,
        &crate::boundary_solvers::PfSolveSettings::default(),
    )
    .expect("point is solvable");
    let k = sys.layout().var_of_bus(2).unwrap();
    let v3 = (x[k] * x[k] + x[k + 1] * x[k + 1]).sqrt();
    assert!(v3 < 0.9, "|V3| = {v3}");
}

// ---------------------------------------------------------------------------
// Boundary extraction
// ---------------------------------------------------------------------------

fn synthetic_cells(grid: &ScanGrid, mut class_of: impl FnMut([f64; 2]) -> RegionClass) -> Vec<ScanCell> {
    let mut cells = Vec::new();
    for i in 0..grid.axis_points(0) {
        for j in 0..grid.axis_points(1) {
            let lambda = grid.lambda_at(i, j);
            cells.push(ScanCell { lambda, class: class_of(lambda), pf_iters: 1 });
        }
    }
    cells
}

#[test]
fn uniform_grid_has_no_boundary() {
    let grid = ScanGrid::new(
        [0, 1],
        (0.0, 1.0),
        0.1,
        (0.0, 1.0),
        0.1,
        plane_params(0.0, 0.0, 0.0),
    )
    .unwrap();
    let cells = synthetic_cells(&grid, |_| RegionClass::Feasible);
    assert!(extract_boundary(&grid, &cells, BoundaryKind::Feasibility).is_empty());
    assert!(extract_boundary(&grid, &cells, BoundaryKind::Solvability).is_empty());
}

#[test]
fn half_plane_split_yields_points_on_the_split_line() {
    let grid = ScanGrid::new(
        [0, 1],
        (0.0, 1.0),
        0.1,
        (0.0, 1.0),
        0.1,
        plane_params(0.0, 0.0, 0.0),
    )
    .unwrap();
    let cells = synthetic_cells(&grid, |l| {
        if l[0] < 0.45 {
            RegionClass::Feasible
        } else {
            RegionClass::SolvableOnly
        }
    });
    let pts = extract_boundary(&grid, &cells, BoundaryKind::Feasibility);
    // One crossing edge per row of the grid, at the midpoint 0.45.
    assert_eq!(pts.len(), grid.axis_points(1));
    for p in &pts {
        assert_abs_diff_eq!(p[0], 0.45, epsilon = 1e-12);
    }
    // The same grid has no solvability boundary: nothing is Unsolvable.
    assert!(extract_boundary(&grid, &cells, BoundaryKind::Solvability).is_empty());
}

#[test]
fn solvability_boundary_separates_unsolvable_cells() {
    let grid = ScanGrid::new(
        [0, 1],
        (0.0, 1.0),
        0.5,
        (0.0, 1.0),
        0.5,
        plane_params(0.0, 0.0, 0.0),
    )
    .unwrap();
    let cells = synthetic_cells(&grid, |l| {
        if l[1] > 0.6 {
            RegionClass::Unsolvable
        } else if l[0] > 0.6 {
            RegionClass::SolvableOnly
        } else {
            RegionClass::Feasible
        }
    });
    let pts = extract_boundary(&grid, &cells, BoundaryKind::Solvability);
    assert!(!pts.is_empty());
    for p in &pts {
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Hausdorff distance
// ---------------------------------------------------------------------------

#[test]
fn hausdorff_basics() {
    let a = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    assert_abs_diff_eq!(hausdorff(&a, &a).unwrap(), 0.0, epsilon = 0.0);

    let p = vec![[0.0, 0.0]];
    let q = vec![[3.0, 4.0]];
    assert_abs_diff_eq!(hausdorff(&p, &q).unwrap(), 5.0, epsilon = 1e-15);

    let eps = 1e-3;
    let shifted: Vec<[f64; 2]> = a.iter().map(|p| [p[0] + eps, p[1]]).collect();
    assert_abs_diff_eq!(hausdorff(&a, &shifted).unwrap(), eps, epsilon = 1e-12);

    assert!(matches!(hausdorff(&[], &a), Err(OracleError::EmptyInput)));
    assert!(matches!(hausdorff(&a, &[]), Err(OracleError::EmptyInput)));
    assert!(matches!(directed_hausdorff(&[], &a), Err(OracleError::EmptyInput)));
}

#[test]
fn directed_hausdorff_is_asymmetric_for_subsets() {
    // A subset is at distance 0 from its superset, but not vice versa.
    let sup = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
    let sub = vec![[0.0, 0.0], [1.0, 0.0]];
    assert_abs_diff_eq!(directed_hausdorff(&sub, &sup).unwrap(), 0.0, epsilon = 0.0);
    assert_abs_diff_eq!(directed_hausdorff(&sup, &sub).unwrap(), 1.0, epsilon = 1e-15);
}

// ---------------------------------------------------------------------------
// Grid validation and CSV export
// ---------------------------------------------------------------------------

#[test]
fn bad_grids_are_rejected() {
    let t = plane_params(0.0, 0.0, 0.0);
    assert!(ScanGrid::new([0, 0], (0.0, 1.0), 0.1, (0.0, 1.0), 0.1, t.clone()).is_err());
    assert!(ScanGrid::new([0, 5], (0.0, 1.0), 0.1, (0.0, 1.0), 0.1, t.clone()).is_err());
    assert!(ScanGrid::new([0, 1], (1.0, 0.0), 0.1, (0.0, 1.0), 0.1, t.clone()).is_err());
    assert!(ScanGrid::new([0, 1], (0.0, 1.0), 0.0, (0.0, 1.0), 0.1, t.clone()).is_err());
    assert!(ScanGrid::new([0, 1], (0.0, 1.0), -0.1, (0.0, 1.0), 0.1, t.clone()).is_err());
    assert!(ScanGrid::new([0, 1], (0.0, f64::INFINITY), 0.1, (0.0, 1.0), 0.1, t).is_err());
}

#[test]
fn grid_points_cover_the_ranges() {
    let grid = ScanGrid::new(
        [0, 1],
        (-1.0, 1.0),
        0.5,
        (0.0, 0.9),
        0.4,
        plane_params(0.0, 0.0, 0.0),
    )
    .unwrap();
    assert_eq!(grid.axis_points(0), 5);
    // 0.9 is not a multiple of 0.4: the last point inside is 0.8.
    assert_eq!(grid.axis_points(1), 3);
    assert_eq!(grid.lambda_at(0, 0), [-1.0, 0.0]);
    assert_eq!(grid.lambda_at(4, 2), [1.0, 0.8]);
}

#[test]
fn scan_csv_bytes_are_stable() {
    let cells = vec![
        ScanCell { lambda: [0.0, 0.5], class: RegionClass::Feasible, pf_iters: 3 },
        ScanCell { lambda: [-1.25, 2.0], class: RegionClass::Unsolvable, pf_iters: 0 },
    ];
    let mut buf = Vec::new();
    write_scan_csv(&mut buf, &cells).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text,
        "lambda1,lambda2,class\n\
         0.0000000000000000e0,5.0000000000000000e-1,Feasible\n\
         -1.2500000000000000e0,2.0000000000000000e0,Unsolvable\n"
    );
}

// ---------------------------------------------------------------------------
// Scan invariants
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    /// Widening the voltage band never demotes a Feasible point: the solve
    /// is band-independent, and a solution inside a band stays inside any
    /// superset band.
    #[test]
    fn widening_bands_never_demotes_feasible(
        widen_lo in 0.0..0.08f64,
        widen_hi in 0.0..0.08f64,
        p3 in 0.6..0.9f64,
    ) {
        let case = threebus_loaded();
        let mut widened = case.clone();
        for b in widened.buses.iter_mut() {
            if b.id == 3 {
                b.v_min = b.v_min.map(|v| v - widen_lo);
                b.v_max = b.v_max.map(|v| v + widen_hi);
            }
        }
        widened.validate().unwrap();

        let grid = plane_grid(0.02, 2.0, 2.0, 0.5);
        let lambda = [0.02, p3];
        let before = classify_at(&case, &grid, lambda);
        let after = classify_at(&widened, &grid, lambda);
        // Solvability never changes; feasibility never shrinks.
        prop_assert_eq!(
            before.class == RegionClass::Unsolvable,
            after.class == RegionClass::Unsolvable
        );
        if before.class == RegionClass::Feasible {
            prop_assert_eq!(after.class, RegionClass::Feasible);
        }
    }
}

#[test]
fn traced_boundary_points_sit_on_the_scanned_class_change() {
    // Trace the feasibility loop of the P2-P3 plane, scan the same plane
    // coarsely, and check every traced point lies within one grid step of
    // a Feasible-to-other class change.
    let case = threebus_loaded();
    let template = plane_params(0.02, 0.0, 0.02);
    let seed_sys = BoundarySystem::new(
        &case,
        LimitRows::Include,
        template.clone(),
        vec![1],
        TransversalityKind::Svd,
    )
    .unwrap();
    let trace_sys = BoundarySystem::new(
        &case,
        LimitRows::Include,
        template.clone(),
        vec![0, 1],
        TransversalityKind::Svd,
    )
    .unwrap();
    let seeds = find_seeds(&seed_sys, &SeedSettings::default()).unwrap();
    let lifted = trace_sys.lift_seed(&seeds[0], 1).unwrap();
    let settings = TraceSettings {
        parameter_box: Some(vec![(-4.0, 4.0), (-4.0, 4.0)]),
        ..TraceSettings::default()
    };
    let curve = trace_curve(&trace_sys, &lifted, &RadiusPolicy::default(), &settings).unwrap();

    let step = 0.05;
    let grid = ScanGrid::new(
        [0, 1],
        (-1.6, 1.6),
        step,
        (-1.1, 1.1),
        step,
        template,
    )
    .unwrap();
    let cells = scan(&case, &grid).unwrap();
    let boundary = extract_boundary(&grid, &cells, BoundaryKind::Feasibility);
    assert!(!boundary.is_empty());

    let off = trace_sys.lambda_offset();
    let traced: Vec<[f64; 2]> = curve
        .steps
        .iter()
        .map(|s| [s.z[off], s.z[off + 1]])
        .collect();
    let worst = directed_hausdorff(&traced, &boundary).unwrap();
    assert!(
        worst <= step * 1.5,
        "worst traced-to-scan distance {worst:.4} exceeds 1.5 grid steps"
    );
}

#[test]
fn polyline_distance_ignores_vertex_spacing() {
    // A coarse octagon inscribed in the unit circle: circle points are
    // within the sagitta (~7.6e-2) of the polygon's segments, while the
    // nearest-vertex distance can reach ~0.39 near chord midpoints.
    let octagon: Vec<[f64; 2]> = (0..8)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / 8.0;
            [t.cos(), t.sin()]
        })
        .collect();
    let probes: Vec<[f64; 2]> = (0..64)
        .map(|k| {
            let t = std::f64::consts::TAU * (k as f64 + 0.5) / 64.0;
            [t.cos(), t.sin()]
        })
        .collect();
    let sagitta = 1.0 - (std::f64::consts::PI / 8.0).cos();
    let to_segments = directed_hausdorff_to_polyline(&probes, &octagon, true).unwrap();
    assert!(to_segments <= sagitta + 1e-12, "{to_segments} vs sagitta {sagitta}");
    let to_vertices = directed_hausdorff(&probes, &octagon).unwrap();
    assert!(to_vertices > 4.0 * to_segments);
}

#[test]
fn open_polyline_has_no_closing_segment() {
    // Square corners as an open polyline: a probe next to the (closing)
    // fourth side is far from the three real segments but near the loop.
    let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let probe = [[0.0, 0.5]];
    let open = directed_hausdorff_to_polyline(&probe, &square, false).unwrap();
    let closed = directed_hausdorff_to_polyline(&probe, &square, true).unwrap();
    assert_abs_diff_eq!(closed, 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(open, 0.5, epsilon = 1e-15);
}

#[test]
fn polyline_distance_rejects_empty_input() {
    assert!(matches!(
        directed_hausdorff_to_polyline(&[], &[[0.0, 0.0]], false),
        Err(OracleError::EmptyInput)
    ));
    assert!(matches!(
        directed_hausdorff_to_polyline(&[[0.0, 0.0]], &[], true),
        Err(OracleError::EmptyInput)
    ));
}
