//! CSV and JSON artifact writers. All numeric output uses 17 significant
//! digits so reruns are byte-comparable.

use crate::config::EffectiveConfig;
use crate::fail::Failure;
use feasbound::{BoundaryCurve, BoundarySystem, LimitFlag, SeedPoint, Termination};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;
pub const CURVE_CSV_HEADER: &str =
    "step,lambda1,lambda2,fixed_params,sigma_min,residual_inf,radius,tau,active_limits,corrector_iters";

/// 17 significant digits; `nan` for missing values.
pub fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// The constant `fixed_params` CSV field: `bus3:Q=2e-2;...` in binding order.
pub fn fixed_params_field(cfg: &EffectiveConfig) -> String {
    let mut out = String::new();
    for (i, (spec, value)) in cfg.fixed.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        let _ = write!(out, "{}={}", spec.label(), fmt_f(*value));
    }
    out
}

fn limits_field(flags: &[(usize, LimitFlag)]) -> String {
    let mut out = String::new();
    for (bus, flag) in flags {
        let tag = match flag {
            LimitFlag::Interior => continue,
            LimitFlag::AtUpper => "Upper",
            LimitFlag::AtLower => "Lower",
        };
        if !out.is_empty() {
            out.push(';');
        }
        let _ = write!(out, "bus{bus}:{tag}");
    }
    out
}

/// Render one traced curve as CSV text.
pub fn curve_csv(sys: &BoundarySystem, cfg: &EffectiveConfig, curve: &BoundaryCurve) -> String {
    let off = sys.lambda_offset();
    let fixed = fixed_params_field(cfg);
    let mut out = String::with_capacity(curve.steps.len() * 160);
    out.push_str(CURVE_CSV_HEADER);
    out.push('\n');
    for (i, step) in curve.steps.iter().enumerate() {
        let sigma = step.sigma_min.map_or_else(|| "nan".to_string(), fmt_f);
        let _ = writeln!(
            out,
            "{i},{},{},{fixed},{sigma},{},{},{},{},{}",
            fmt_f(step.z[off]),
            fmt_f(step.z[off + 1]),
            fmt_f(step.residual_inf),
            fmt_f(step.radius_used),
            fmt_f(step.curvature_tau),
            limits_field(&step.flags),
            step.corrector_iters,
        );
    }
    out
}

/// JSON sidecar for one traced curve.
#[derive(Serialize)]
pub struct CurveSidecar<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub curve_index: usize,
    pub seed_index: usize,
    pub seed_origin: String,
    pub termination: String,
    /// True when the tracer gave up before any terminal condition.
    pub stalled: bool,
    pub steps: usize,
    pub total_cycles: usize,
    pub retries: usize,
    pub csv: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
    pub config: &'a EffectiveConfig,
}

impl<'a> CurveSidecar<'a> {
    pub fn new(
        command: &'a str,
        curve_index: usize,
        seed_index: usize,
        curve: &BoundaryCurve,
        csv_name: &str,
        sweep_value: Option<f64>,
        config: &'a EffectiveConfig,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            curve_index,
            seed_index,
            seed_origin: format!("{:?}", curve.seed_origin),
            termination: format!("{:?}", curve.termination),
            stalled: curve.termination == Termination::Stalled,
            steps: curve.steps.len(),
            total_cycles: curve.total_cycles,
            retries: curve.total_cycles - (curve.steps.len() - 1),
            csv: csv_name.to_string(),
            sweep_value,
            config,
        }
    }
}

/// One discovered seed in a `point` report.
#[derive(Serialize)]
pub struct SeedReportEntry {
    pub lambda: Vec<LambdaEntry>,
    pub free_parameter: String,
    pub sigma_min: f64,
    pub residual_norm: f64,
    pub origin: String,
    pub iterations: usize,
    pub z: Vec<f64>,
}

#[derive(Serialize)]
pub struct LambdaEntry {
    pub param: String,
    pub value: f64,
}

pub fn seed_report_entry(
    sys: &BoundarySystem,
    cfg: &EffectiveConfig,
    seed: &SeedPoint,
) -> SeedReportEntry {
    let lam = sys.lambda_of(&seed.z);
    let mut lambda = Vec::new();
    let free_parameter = match &cfg.plane {
        Some(plane) => {
            for (i, spec) in plane.iter().enumerate() {
                lambda.push(LambdaEntry { param: spec.label(), value: lam.value(i) });
            }
            for (i, (spec, _)) in cfg.fixed.iter().enumerate() {
                lambda.push(LambdaEntry { param: spec.label(), value: lam.value(2 + i) });
            }
            plane[cfg.seed_free0()].label()
        }
        None => {
            lambda.push(LambdaEntry { param: "uniform".to_string(), value: lam.value(0) });
            "uniform".to_string()
        }
    };
    SeedReportEntry {
        lambda,
        free_parameter,
        sigma_min: seed.sigma_min,
        residual_norm: seed.residual_norm,
        origin: format!("{:?}", seed.origin),
        iterations: seed.iterations,
        z: seed.z.iter().copied().collect(),
    }
}

/// Create the output directory and write `name` into it.
pub fn write_artifact(out_dir: &Path, name: &str, content: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}

pub fn write_json<T: Serialize>(out_dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Failure::internal)?;
    write_artifact(out_dir, name, &(text + "\n"))
}
