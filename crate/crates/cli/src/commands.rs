//! The five subcommands. Each returns a `Failure` carrying its exit code on
//! error and writes artifacts plus a stdout summary on success.

use crate::cli::{BoundaryOpt, CompareArgs, PointArgs, ScanArgs, SweepArgs, TraceArgs};
use crate::config::EffectiveConfig;
use crate::fail::Failure;
use crate::output::{
    curve_csv, seed_report_entry, write_artifact, write_json, CurveSidecar, SCHEMA_VERSION,
};
use crate::svg::{render, SvgCurve};
use feasbound::{
    distinct_curves, find_seeds, scan, sweep_contours, trace_curve, write_scan_csv,
    BoundaryCurve, BoundaryKind, BoundarySystem, ContourFamily, NetworkCase, RegionClass,
    ScanGrid, Termination,
};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

/// Curves traced in one plane, duplicates removed, with seed bookkeeping.
struct TracedPlane {
    sys: BoundarySystem,
    /// (seed index, curve), only the pairwise-distinct representatives.
    curves: Vec<(usize, BoundaryCurve)>,
    seeds_found: usize,
}

fn trace_plane(
    cfg: &EffectiveConfig,
    case: &NetworkCase,
    max_steps: Option<usize>,
    distinct_tol: f64,
    policy_override: Option<feasbound::RadiusPolicy>,
) -> Result<TracedPlane, Failure> {
    let seed_sys = cfg.seed_system(case)?;
    let trace_sys = cfg.trace_system(case)?;
    let seeds = find_seeds(&seed_sys, &cfg.seed_settings()).map_err(Failure::seeds)?;
    log::info!(
        "found {} seed(s) with {} freed at {}={}",
        seeds.len(),
        cfg.plane()[cfg.seed_free0()].label(),
        cfg.plane()[1 - cfg.seed_free0()].label(),
        cfg.seed_at
    );

    let policy = policy_override.unwrap_or_else(|| cfg.radius_policy());
    let settings = cfg.trace_settings(max_steps);
    let mut all: Vec<(usize, BoundaryCurve)> = Vec::new();
    for (i, seed) in seeds.iter().enumerate() {
        let lifted = trace_sys.lift_seed(seed, cfg.seed_free0()).map_err(Failure::internal)?;
        match trace_curve(&trace_sys, &lifted, &policy, &settings) {
            Ok(curve) => {
                log::info!(
                    "seed {i}: {:?} after {} step(s), {} cycle(s)",
                    curve.termination,
                    curve.steps.len(),
                    curve.total_cycles
                );
                all.push((i, curve));
            }
            Err(e) => log::warn!("seed {i}: trace failed: {e}"),
        }
    }
    if all.is_empty() {
        return Err(Failure::internal("no seed produced a curve"));
    }
    let bare: Vec<BoundaryCurve> = all.iter().map(|(_, c)| c.clone()).collect();
    let kept = distinct_curves(&trace_sys, &bare, distinct_tol);
    let curves = kept.into_iter().map(|k| all[k].clone()).collect();
    Ok(TracedPlane { sys: trace_sys, curves, seeds_found: seeds.len() })
}

fn curve_points(sys: &BoundarySystem, curve: &BoundaryCurve) -> Vec<[f64; 2]> {
    let off = sys.lambda_offset();
    curve.steps.iter().map(|s| [s.z[off], s.z[off + 1]]).collect()
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).unwrap());
}

// ---------------------------------------------------------------- point ----

#[derive(Serialize)]
struct PointReport<'a> {
    schema_version: u32,
    command: &'a str,
    count: usize,
    seeds: Vec<crate::output::SeedReportEntry>,
    config: &'a EffectiveConfig,
}

pub fn cmd_point(args: &PointArgs) -> Result<(), Failure> {
    let cfg = EffectiveConfig::merge_with(&args.common, false)?;
    cfg.init_jobs();
    let case = cfg.load_case()?;
    let seed_sys = cfg.seed_system(&case)?;
    let seeds = find_seeds(&seed_sys, &cfg.seed_settings()).map_err(Failure::seeds)?;
    let report = PointReport {
        schema_version: SCHEMA_VERSION,
        command: "point",
        count: seeds.len(),
        seeds: seeds.iter().map(|s| seed_report_entry(&seed_sys, &cfg, s)).collect(),
        config: &cfg,
    };
    write_json(&cfg.out, "point_report.json", &report)?;
    print_json(&report);
    Ok(())
}

// ---------------------------------------------------------------- trace ----

#[derive(Serialize)]
struct CurveSummary {
    csv: String,
    sidecar: String,
    termination: String,
    steps: usize,
}

#[derive(Serialize)]
struct TraceSummary<'a> {
    schema_version: u32,
    command: &'a str,
    seeds_found: usize,
    curves: Vec<CurveSummary>,
    svg: String,
    config: &'a EffectiveConfig,
}

pub fn cmd_trace(args: &TraceArgs) -> Result<(), Failure> {
    let cfg = EffectiveConfig::merge(&args.common)?;
    cfg.init_jobs();
    if let Some(r) = args.radius_fixed {
        if r <= 0.0 {
            return Err(Failure::config(format!("--radius-fixed must be positive, got {r}")));
        }
    }
    let case = cfg.load_case()?;
    let tol = args.distinct_tol.unwrap_or(0.02);
    let policy = args.radius_fixed.map(feasbound::RadiusPolicy::fixed);
    let traced = trace_plane(&cfg, &case, args.max_steps, tol, policy)?;

    let mut summaries = Vec::new();
    let mut svg_curves = Vec::new();
    for (ci, (seed_index, curve)) in traced.curves.iter().enumerate() {
        let csv_name = format!("curve_{ci:02}.csv");
        let sidecar_name = format!("curve_{ci:02}.json");
        write_artifact(&cfg.out, &csv_name, &curve_csv(&traced.sys, &cfg, curve))?;
        let sidecar =
            CurveSidecar::new("trace", ci, *seed_index, curve, &csv_name, None, &cfg);
        write_json(&cfg.out, &sidecar_name, &sidecar)?;
        summaries.push(CurveSummary {
            csv: csv_name,
            sidecar: sidecar_name,
            termination: format!("{:?}", curve.termination),
            steps: curve.steps.len(),
        });
        svg_curves.push(SvgCurve {
            label: format!("curve {ci} ({:?})", curve.termination),
            points: curve_points(&traced.sys, curve),
            closed: curve.termination == Termination::ClosedLoop,
        });
    }
    let plane = cfg.plane();
    let title = format!("{} vs {} boundary curves", plane[0].label(), plane[1].label());
    let svg = render(&title, [&plane[0].label(), &plane[1].label()], &svg_curves);
    write_artifact(&cfg.out, "trace.svg", &svg)?;

    print_json(&TraceSummary {
        schema_version: SCHEMA_VERSION,
        command: "trace",
        seeds_found: traced.seeds_found,
        curves: summaries,
        svg: "trace.svg".to_string(),
        config: &cfg,
    });
    Ok(())
}

// ---------------------------------------------------------------- sweep ----

#[derive(Serialize)]
struct FamilySummary {
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed_failure: Option<String>,
    curves: Vec<CurveSummary>,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    schema_version: u32,
    command: &'a str,
    sweep_parameter: String,
    families: Vec<FamilySummary>,
    svg: String,
    config: &'a EffectiveConfig,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut cfg = EffectiveConfig::merge(&args.common)?;
    cfg.init_jobs();
    let sweep_text = args
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::config("no sweep parameter given (--sweep BUS:Q=V1,V2,...)"))?;
    let (sweep_spec, values) = crate::cli::parse_sweep(sweep_text).map_err(Failure::config)?;
    if cfg.plane().contains(&sweep_spec) {
        return Err(Failure::config(format!(
            "{} is a plane parameter and cannot be swept",
            sweep_spec.label()
        )));
    }
    // The swept parameter must exist in the template; add it when absent.
    let third = match cfg.fixed.iter().position(|(s, _)| *s == sweep_spec) {
        Some(pos) => 2 + pos,
        None => {
            cfg.fixed.push((sweep_spec, values[0]));
            2 + cfg.fixed.len() - 1
        }
    };

    let case = cfg.load_case()?;
    let template = cfg.template()?;
    let limits = cfg.limit_rows();
    let kind = cfg.kind();
    let seed_settings = cfg.seed_settings();
    let policy = cfg.radius_policy();
    let trace_settings = cfg.trace_settings(args.max_steps);
    let tol = args.distinct_tol.unwrap_or(0.02);

    // One sweep_contours call per value, dispatched to the worker pool;
    // order-preserving collect keeps the output deterministic.
    let families: Result<Vec<Vec<ContourFamily>>, _> = values
        .par_iter()
        .map(|&v| {
            sweep_contours(
                &case,
                limits,
                kind,
                &template,
                [0, 1],
                third,
                &[v],
                &seed_settings,
                &policy,
                &trace_settings,
            )
        })
        .collect();
    let families: Vec<ContourFamily> =
        families.map_err(Failure::internal)?.into_iter().flatten().collect();

    // Build a dedicated system for projections / dedup.
    let trace_sys = cfg.trace_system(&case)?;
    let mut family_summaries = Vec::new();
    let mut svg_curves = Vec::new();
    for (vi, family) in families.iter().enumerate() {
        if let Some(msg) = &family.seed_failure {
            log::warn!("{}={}: {msg}", sweep_spec.label(), family.value);
        }
        let kept = distinct_curves(&trace_sys, &family.curves, tol);
        let mut curve_summaries = Vec::new();
        for (ki, &ci) in kept.iter().enumerate() {
            let curve = &family.curves[ci];
            let csv_name = format!("sweep_{vi:03}_{ki:02}.csv");
            let sidecar_name = format!("sweep_{vi:03}_{ki:02}.json");
            let mut cfg_for_value = cfg.clone();
            cfg_for_value.fixed[third - 2].1 = family.value;
            write_artifact(&cfg.out, &csv_name, &curve_csv(&trace_sys, &cfg_for_value, curve))?;
            let sidecar = CurveSidecar::new(
                "sweep",
                ki,
                ci,
                curve,
                &csv_name,
                Some(family.value),
                &cfg,
            );
            write_json(&cfg.out, &sidecar_name, &sidecar)?;
            curve_summaries.push(CurveSummary {
                csv: csv_name,
                sidecar: sidecar_name,
                termination: format!("{:?}", curve.termination),
                steps: curve.steps.len(),
            });
            svg_curves.push(SvgCurve {
                label: format!("{}={} #{ki}", sweep_spec.label(), family.value),
                points: curve_points(&trace_sys, curve),
                closed: curve.termination == Termination::ClosedLoop,
            });
        }
        family_summaries.push(FamilySummary {
            value: family.value,
            seed_failure: family.seed_failure.clone(),
            curves: curve_summaries,
        });
    }

    let plane = cfg.plane();
    let title =
        format!("{} vs {} contours of {}", plane[0].label(), plane[1].label(), sweep_spec.label());
    let svg = render(&title, [&plane[0].label(), &plane[1].label()], &svg_curves);
    write_artifact(&cfg.out, "sweep.svg", &svg)?;

    print_json(&SweepSummary {
        schema_version: SCHEMA_VERSION,
        command: "sweep",
        sweep_parameter: sweep_spec.label(),
        families: family_summaries,
        svg: "sweep.svg".to_string(),
        config: &cfg,
    });
    Ok(())
}

// ----------------------------------------------------------------- scan ----

#[derive(Serialize)]
struct ScanSummary<'a> {
    schema_version: u32,
    command: &'a str,
    grid_step: f64,
    cells: usize,
    feasible: usize,
    solvable_only: usize,
    unsolvable: usize,
    csv: String,
    config: &'a EffectiveConfig,
}

fn build_grid(cfg: &EffectiveConfig, grid_step: f64) -> Result<ScanGrid, Failure> {
    let bounds = cfg
        .param_box
        .as_ref()
        .ok_or_else(|| Failure::config("scanning needs --box to bound the grid"))?;
    if grid_step <= 0.0 {
        return Err(Failure::config(format!("--grid-step must be positive, got {grid_step}")));
    }
    ScanGrid::new([0, 1], bounds[0], grid_step, bounds[1], grid_step, cfg.template()?)
        .map_err(Failure::internal)
}

pub fn cmd_scan(args: &ScanArgs) -> Result<(), Failure> {
    let cfg = EffectiveConfig::merge(&args.common)?;
    cfg.init_jobs();
    let case = cfg.load_case()?;
    let grid = build_grid(&cfg, args.grid_step.unwrap_or(0.05))?;
    log::info!(
        "scanning {}x{} cells",
        grid.axis_points(0),
        grid.axis_points(1)
    );
    let cells = scan(&case, &grid).map_err(Failure::internal)?;

    let mut csv = Vec::new();
    write_scan_csv(&mut csv, &cells)?;
    let csv = String::from_utf8(csv).expect("scan CSV is ASCII");
    write_artifact(&cfg.out, "scan.csv", &csv)?;

    let count = |class: RegionClass| cells.iter().filter(|c| c.class == class).count();
    let summary = ScanSummary {
        schema_version: SCHEMA_VERSION,
        command: "scan",
        grid_step: args.grid_step.unwrap_or(0.05),
        cells: cells.len(),
        feasible: count(RegionClass::Feasible),
        solvable_only: count(RegionClass::SolvableOnly),
        unsolvable: count(RegionClass::Unsolvable),
        csv: "scan.csv".to_string(),
        config: &cfg,
    };
    write_json(&cfg.out, "scan_summary.json", &summary)?;
    print_json(&summary);
    Ok(())
}

// -------------------------------------------------------------- compare ----

#[derive(Serialize)]
struct PerCurveComparison {
    csv: String,
    distances_csv: String,
    termination: String,
    steps: usize,
    /// Farthest distance from a traced point to the scanned boundary.
    directed_to_oracle: f64,
}

#[derive(Serialize)]
struct CompareReport<'a> {
    schema_version: u32,
    command: &'a str,
    boundary: &'a str,
    grid_step: f64,
    hausdorff: f64,
    /// Farthest distance from a scanned boundary point to the traced curves.
    oracle_to_curves: f64,
    boundary_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    curves: Vec<PerCurveComparison>,
    config: &'a EffectiveConfig,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), Failure> {
    let cfg = EffectiveConfig::merge(&args.common)?;
    cfg.init_jobs();
    let case = cfg.load_case()?;
    let grid_step = args.grid_step.unwrap_or(0.01);
    let grid = build_grid(&cfg, grid_step)?;

    // Coarseness warning: a grid step above a quarter of either box span
    // cannot resolve the boundary it is checked against.
    let bounds = cfg.param_box.as_ref().expect("build_grid enforced the box");
    let min_span = (bounds[0].1 - bounds[0].0).min(bounds[1].1 - bounds[1].0);
    let warning = (grid_step > min_span / 4.0).then(|| {
        let msg = format!(
            "grid step {grid_step} is coarser than a quarter of the box span {min_span}; \
             the comparison is unreliable"
        );
        log::warn!("{msg}");
        msg
    });

    let traced =
        trace_plane(&cfg, &case, args.max_steps, args.distinct_tol.unwrap_or(0.02), None)?;
    let cells = scan(&case, &grid).map_err(Failure::internal)?;
    let kind = match cfg.boundary {
        BoundaryOpt::Feasibility => BoundaryKind::Feasibility,
        BoundaryOpt::Solvability => BoundaryKind::Solvability,
    };
    let boundary = feasbound::extract_boundary(&grid, &cells, kind);
    if boundary.is_empty() {
        return Err(Failure::internal("the scan found no class boundary inside the box"));
    }

    let nearest = |p: &[f64; 2]| -> f64 {
        boundary
            .iter()
            .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };

    let mut curve_polylines: Vec<(Vec<[f64; 2]>, bool)> = Vec::new();
    let mut all_points: Vec<[f64; 2]> = Vec::new();
    let mut reports = Vec::new();
    for (ci, (seed_index, curve)) in traced.curves.iter().enumerate() {
        let pts = curve_points(&traced.sys, curve);
        let csv_name = format!("curve_{ci:02}.csv");
        write_artifact(&cfg.out, &csv_name, &curve_csv(&traced.sys, &cfg, curve))?;
        let sidecar =
            CurveSidecar::new("compare", ci, *seed_index, curve, &csv_name, None, &cfg);
        write_json(&cfg.out, &format!("curve_{ci:02}.json"), &sidecar)?;

        let mut dist_csv = String::from("step,lambda1,lambda2,nearest_dist\n");
        let mut worst: f64 = 0.0;
        for (si, p) in pts.iter().enumerate() {
            let d = nearest(p);
            worst = worst.max(d);
            let _ = writeln!(
                dist_csv,
                "{si},{},{},{}",
                crate::output::fmt_f(p[0]),
                crate::output::fmt_f(p[1]),
                crate::output::fmt_f(d)
            );
        }
        let distances_name = format!("compare_points_{ci:02}.csv");
        write_artifact(&cfg.out, &distances_name, &dist_csv)?;
        reports.push(PerCurveComparison {
            csv: csv_name,
            distances_csv: distances_name,
            termination: format!("{:?}", curve.termination),
            steps: curve.steps.len(),
            directed_to_oracle: worst,
        });
        curve_polylines.push((pts.clone(), curve.termination == Termination::ClosedLoop));
        all_points.extend(pts);
    }

    // Oracle side measured against the curves as polylines, so the sphere
    // radius (vertex spacing) does not inflate the distance.
    let curves_to_oracle =
        feasbound::directed_hausdorff(&all_points, &boundary).map_err(Failure::internal)?;
    let oracle_to_curves = boundary
        .iter()
        .map(|q| {
            curve_polylines
                .iter()
                .map(|(pts, closed)| {
                    feasbound::directed_hausdorff_to_polyline(&[*q], pts, *closed)
                        .expect("nonempty by construction")
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max);
    let symmetric = curves_to_oracle.max(oracle_to_curves);

    let mut scan_csv_bytes = Vec::new();
    write_scan_csv(&mut scan_csv_bytes, &cells)?;
    write_artifact(
        &cfg.out,
        "scan.csv",
        &String::from_utf8(scan_csv_bytes).expect("scan CSV is ASCII"),
    )?;

    let report = CompareReport {
        schema_version: SCHEMA_VERSION,
        command: "compare",
        boundary: match kind {
            BoundaryKind::Feasibility => "feasibility",
            BoundaryKind::Solvability => "solvability",
        },
        grid_step,
        hausdorff: symmetric,
        oracle_to_curves,
        boundary_points: boundary.len(),
        warning,
        curves: reports,
        config: &cfg,
    };
    write_json(&cfg.out, "compare_report.json", &report)?;
    print_json(&report);
    Ok(())
}
