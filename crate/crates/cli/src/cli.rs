//! Flag definitions and the small grammar for plane / fix / sweep specs.

use clap::{Args, Parser, Subcommand, ValueEnum};
use feasbound::{Binding, InjectionQty};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "feasbound",
    version,
    about = "Trace solvability and voltage-feasibility boundary curves of AC power flow",
    after_help = "Set FEASBOUND_LOG=info (or debug, trace) for progress logging."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Find certified boundary points on a seed line and report them as JSON.
    Point(PointArgs),
    /// Trace boundary curves in a two-parameter plane from discovered seeds.
    Trace(TraceArgs),
    /// Trace a contour family: one set of curves per value of a third parameter.
    Sweep(SweepArgs),
    /// Brute-force classify a parameter-plane grid (feasible / solvable-only / unsolvable).
    Scan(ScanArgs),
    /// Trace curves, scan the same plane, and report their Hausdorff agreement.
    Compare(CompareArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatOpt {
    /// Infer from the file extension.
    Auto,
    /// Native JSON case files.
    Json,
    /// MATPOWER-style .m case files.
    Matpower,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryOpt {
    /// Voltage-band rows included: the feasibility boundary.
    Feasibility,
    /// Band rows dropped: the pure solvability boundary.
    Solvability,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulationOpt {
    /// Smallest-singular-value transversality condition (default).
    Svd,
    /// Eigenvector null-pair formulation (larger augmented system).
    Eig,
}

/// Flags shared by every subcommand that loads a case and defines a plane.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Path to the network case file.
    #[arg(long)]
    pub case: Option<PathBuf>,

    /// Case file format.
    #[arg(long, value_enum)]
    pub format: Option<FormatOpt>,

    /// The two plane parameters, e.g. "2:P,3:P" (bus id : P or Q).
    #[arg(long)]
    pub plane: Option<String>,

    /// Fix another bus injection, e.g. "3:Q=0.02". Repeatable.
    #[arg(long = "fix")]
    pub fix: Vec<String>,

    /// Parameter box "l1min,l1max,l2min,l2max" bounding the two plane parameters.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub param_box: Option<String>,

    /// Largest sphere radius the adaptive policy may choose.
    #[arg(long, allow_negative_numbers = true)]
    pub radius_max: Option<f64>,

    /// Radius floor of the adaptive policy (also its flat-curvature value).
    #[arg(long, allow_negative_numbers = true)]
    pub radius_min: Option<f64>,

    /// Corrector tolerance and accepted-point residual bound.
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,

    /// Multistart attempts during seed discovery.
    #[arg(long)]
    pub restarts: Option<usize>,

    /// Worker threads (0 = one per core).
    #[arg(long)]
    pub jobs: Option<usize>,

    /// RNG seed for the multistart perturbations.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory for CSV / JSON / SVG artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Which boundary to trace.
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryOpt>,

    /// Transversality formulation of the augmented system.
    #[arg(long, value_enum)]
    pub formulation: Option<FormulationOpt>,

    /// Which plane parameter (1 or 2) is freed during seed discovery.
    #[arg(long)]
    pub seed_free: Option<usize>,

    /// Seed-line value of the plane parameter that stays fixed during seeding.
    #[arg(long, allow_negative_numbers = true)]
    pub seed_at: Option<f64>,

    /// Optional JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct PointArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TraceArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Trace with a fixed sphere radius instead of the adaptive policy.
    #[arg(long)]
    pub radius_fixed: Option<f64>,

    /// Step budget per curve.
    #[arg(long)]
    pub max_steps: Option<usize>,

    /// Separation below which two traced curves count as the same curve.
    #[arg(long)]
    pub distinct_tol: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Third parameter and its values, e.g. "3:Q=0.1,0.2,0.4".
    #[arg(long, allow_hyphen_values = true)]
    pub sweep: Option<String>,

    /// Step budget per curve.
    #[arg(long)]
    pub max_steps: Option<usize>,

    /// Separation below which two traced curves count as the same curve.
    #[arg(long)]
    pub distinct_tol: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Grid step applied to both plane axes.
    #[arg(long)]
    pub grid_step: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Grid step of the oracle scan.
    #[arg(long)]
    pub grid_step: Option<f64>,

    /// Step budget per curve.
    #[arg(long)]
    pub max_steps: Option<usize>,

    /// Separation below which two traced curves count as the same curve.
    #[arg(long)]
    pub distinct_tol: Option<f64>,
}

/// One bus-injection coordinate, as written on the command line ("3:Q").
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub bus: usize,
    pub qty: QtySpec,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QtySpec {
    P,
    Q,
}

impl ParamSpec {
    pub fn binding(&self) -> Binding {
        Binding::Bus {
            id: self.bus,
            qty: match self.qty {
                QtySpec::P => InjectionQty::ActivePower,
                QtySpec::Q => InjectionQty::ReactivePower,
            },
        }
    }

    pub fn label(&self) -> String {
        format!(
            "bus{}:{}",
            self.bus,
            match self.qty {
                QtySpec::P => "P",
                QtySpec::Q => "Q",
            }
        )
    }
}

pub fn parse_param_spec(text: &str) -> Result<ParamSpec, String> {
    let (bus, qty) = text
        .split_once(':')
        .ok_or_else(|| format!("expected BUS:P or BUS:Q, got {text:?}"))?;
    let bus: usize = bus
        .trim()
        .parse()
        .map_err(|_| format!("bad bus id in {text:?}"))?;
    let qty = match qty.trim() {
        "P" | "p" => QtySpec::P,
        "Q" | "q" => QtySpec::Q,
        other => return Err(format!("quantity must be P or Q, got {other:?}")),
    };
    Ok(ParamSpec { bus, qty })
}

/// "2:P,3:P" → the two plane coordinates.
pub fn parse_plane(text: &str) -> Result<[ParamSpec; 2], String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("plane needs exactly two entries, got {text:?}"));
    }
    let a = parse_param_spec(parts[0])?;
    let b = parse_param_spec(parts[1])?;
    if a == b {
        return Err(format!("plane entries must differ, got {text:?}"));
    }
    Ok([a, b])
}

/// "3:Q=0.02" → fixed coordinate and its value.
pub fn parse_fix(text: &str) -> Result<(ParamSpec, f64), String> {
    let (spec, value) = text
        .split_once('=')
        .ok_or_else(|| format!("expected BUS:Q=VALUE, got {text:?}"))?;
    let spec = parse_param_spec(spec)?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("bad value in {text:?}"))?;
    Ok((spec, value))
}

/// "3:Q=0.1,0.2,0.4" → sweep coordinate and its value list.
pub fn parse_sweep(text: &str) -> Result<(ParamSpec, Vec<f64>), String> {
    let (spec, values) = text
        .split_once('=')
        .ok_or_else(|| format!("expected BUS:Q=V1,V2,..., got {text:?}"))?;
    let spec = parse_param_spec(spec)?;
    let values: Result<Vec<f64>, _> = values.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = values.map_err(|_| format!("bad value list in {text:?}"))?;
    if values.is_empty() {
        return Err(format!("sweep needs at least one value, got {text:?}"));
    }
    Ok((spec, values))
}

/// "a,b,c,d" → [(a,b), (c,d)] with a ≤ b, c ≤ d.
pub fn parse_box(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let nums: Result<Vec<f64>, _> = text.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let nums = nums.map_err(|_| format!("bad box {text:?}"))?;
    if nums.len() != 4 {
        return Err(format!("box needs four numbers, got {text:?}"));
    }
    if nums[0] >= nums[1] || nums[2] >= nums[3] {
        return Err(format!("box intervals must be nonempty, got {text:?}"));
    }
    Ok(vec![(nums[0], nums[1]), (nums[2], nums[3])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_and_fix_specs_parse() {
        let plane = parse_plane("2:P,3:P").unwrap();
        assert_eq!(plane[0], ParamSpec { bus: 2, qty: QtySpec::P });
        assert_eq!(plane[1], ParamSpec { bus: 3, qty: QtySpec::P });
        let (spec, v) = parse_fix("3:Q=0.02").unwrap();
        assert_eq!(spec, ParamSpec { bus: 3, qty: QtySpec::Q });
        assert_eq!(v, 0.02);
        let (spec, vals) = parse_sweep("3:q=0.1,0.2").unwrap();
        assert_eq!(spec.qty, QtySpec::Q);
        assert_eq!(vals, vec![0.1, 0.2]);
        assert_eq!(parse_box("-1,1,-2,2").unwrap(), vec![(-1.0, 1.0), (-2.0, 2.0)]);
    }

    #[test]
    fn malformed_specs_are_rejected() {
        assert!(parse_plane("2:P").is_err());
        assert!(parse_plane("2:P,2:P").is_err());
        assert!(parse_param_spec("2:X").is_err());
        assert!(parse_fix("3:Q").is_err());
        assert!(parse_box("1,2,3").is_err());
        assert!(parse_box("2,1,0,1").is_err());
    }
}
