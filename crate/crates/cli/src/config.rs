//! Effective run configuration: flags override config-file values override
//! defaults, and the merged result is echoed into every JSON sidecar.

use crate::cli::{
    parse_box, parse_fix, parse_plane, BoundaryOpt, CommonArgs, FormatOpt, FormulationOpt,
    ParamSpec,
};
use crate::fail::Failure;
use feasbound::{
    load_case, BoundarySystem, CaseFormat, LimitRows, NetworkCase, ParameterVector, RadiusPolicy,
    SeedSettings, TraceSettings, TransversalityKind,
};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Config-file mirror of the common flags. All fields optional; flag values
/// win over these.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub case: Option<PathBuf>,
    pub format: Option<FormatOpt>,
    pub plane: Option<String>,
    #[serde(default)]
    pub fix: Vec<String>,
    #[serde(rename = "box")]
    pub param_box: Option<String>,
    pub radius_max: Option<f64>,
    pub radius_min: Option<f64>,
    pub eps: Option<f64>,
    pub restarts: Option<usize>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub boundary: Option<BoundaryOpt>,
    pub formulation: Option<FormulationOpt>,
    pub seed_free: Option<usize>,
    pub seed_at: Option<f64>,
}

/// The fully merged configuration a run actually uses.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveConfig {
    pub case: PathBuf,
    pub format: FormatOpt,
    /// The two plane coordinates; None means the single uniform load-scaling
    /// parameter (point mode only).
    pub plane: Option<[ParamSpec; 2]>,
    pub fixed: Vec<(ParamSpec, f64)>,
    pub param_box: Option<Vec<(f64, f64)>>,
    pub radius_max: f64,
    pub radius_min: f64,
    pub eps: f64,
    pub restarts: usize,
    pub jobs: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub boundary: BoundaryOpt,
    pub formulation: FormulationOpt,
    /// 1-based index of the plane parameter freed during seeding.
    pub seed_free: usize,
    /// Seed-line value of the other plane parameter.
    pub seed_at: f64,
}

fn read_file_config(path: &PathBuf) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("bad config {}: {e}", path.display())))
}

impl EffectiveConfig {
    /// Merge flags over an optional config file over defaults. Commands that
    /// need a two-parameter plane pass `plane_required`; without it a missing
    /// --plane selects the single uniform load-scaling parameter.
    pub fn merge_with(args: &CommonArgs, plane_required: bool) -> Result<Self, Failure> {
        let file = match &args.config {
            Some(path) => read_file_config(path)?,
            None => FileConfig::default(),
        };

        let case = args
            .case
            .clone()
            .or(file.case)
            .ok_or_else(|| Failure::config("no case file given (--case)".to_string()))?;
        let plane = match args.plane.clone().or(file.plane) {
            Some(text) => Some(parse_plane(&text).map_err(Failure::config)?),
            None if plane_required => {
                return Err(Failure::config("no parameter plane given (--plane)".to_string()))
            }
            None => None,
        };

        let fix_texts: &[String] = if args.fix.is_empty() { &file.fix } else { &args.fix };
        let mut fixed = Vec::with_capacity(fix_texts.len());
        for text in fix_texts {
            let (spec, value) = parse_fix(text).map_err(Failure::config)?;
            let Some(plane) = &plane else {
                return Err(Failure::config("--fix needs a --plane".to_string()));
            };
            if plane.contains(&spec) {
                return Err(Failure::config(format!(
                    "{} is a plane parameter and cannot also be fixed",
                    spec.label()
                )));
            }
            if fixed.iter().any(|(s, _)| *s == spec) {
                return Err(Failure::config(format!("{} fixed twice", spec.label())));
            }
            fixed.push((spec, value));
        }

        let param_box = match args.param_box.clone().or(file.param_box) {
            Some(text) => Some(parse_box(&text).map_err(Failure::config)?),
            None => None,
        };

        let seed_free = args.seed_free.or(file.seed_free).unwrap_or(1);
        if !(seed_free == 1 || seed_free == 2) {
            return Err(Failure::config(format!(
                "--seed-free must be 1 or 2, got {seed_free}"
            )));
        }

        let radius_max = args.radius_max.or(file.radius_max).unwrap_or(0.2);
        let radius_min = args.radius_min.or(file.radius_min).unwrap_or(1e-4);
        if !(radius_max > 0.0 && radius_min > 0.0 && radius_min <= radius_max) {
            return Err(Failure::config(format!(
                "need 0 < radius-min <= radius-max, got {radius_min} and {radius_max}"
            )));
        }

        Ok(Self {
            case,
            format: args.format.or(file.format).unwrap_or(FormatOpt::Auto),
            plane,
            fixed,
            param_box,
            radius_max,
            radius_min,
            eps: args.eps.or(file.eps).unwrap_or(1e-8),
            restarts: args.restarts.or(file.restarts).unwrap_or(32),
            jobs: args.jobs.or(file.jobs).unwrap_or(0),
            seed: args.seed.or(file.seed).unwrap_or(0),
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            boundary: args.boundary.or(file.boundary).unwrap_or(BoundaryOpt::Feasibility),
            formulation: args
                .formulation
                .or(file.formulation)
                .unwrap_or(FormulationOpt::Svd),
            seed_free,
            seed_at: args.seed_at.or(file.seed_at).unwrap_or(0.0),
        })
    }

    pub fn load_case(&self) -> Result<NetworkCase, Failure> {
        let format = match self.format {
            FormatOpt::Auto => None,
            FormatOpt::Json => Some(CaseFormat::Json),
            FormatOpt::Matpower => Some(CaseFormat::MatpowerSubset),
        };
        load_case(&self.case, format).map_err(Failure::case)
    }

    pub fn limit_rows(&self) -> LimitRows {
        match self.boundary {
            BoundaryOpt::Feasibility => LimitRows::Include,
            BoundaryOpt::Solvability => LimitRows::Exclude,
        }
    }

    pub fn kind(&self) -> TransversalityKind {
        match self.formulation {
            FormulationOpt::Svd => TransversalityKind::Svd,
            FormulationOpt::Eig => TransversalityKind::Eig,
        }
    }

    /// Merge for commands that require a parameter plane.
    pub fn merge(args: &CommonArgs) -> Result<Self, Failure> {
        Self::merge_with(args, true)
    }

    /// The plane coordinates; only called by plane commands, which merged
    /// with `plane_required`.
    pub fn plane(&self) -> &[ParamSpec; 2] {
        self.plane.as_ref().expect("this command merged with plane_required")
    }

    /// 0-based index of the plane parameter freed during seeding.
    pub fn seed_free0(&self) -> usize {
        self.seed_free - 1
    }

    /// Template parameter vector: plane entries first (seed-line value on the
    /// non-freed one), then the fixed entries. Without a plane: the single
    /// uniform load-scaling parameter at 1.
    pub fn template(&self) -> Result<ParameterVector, Failure> {
        let Some(plane) = &self.plane else {
            return Ok(ParameterVector::uniform(1.0));
        };
        let mut bindings = Vec::with_capacity(2 + self.fixed.len());
        let mut values = Vec::with_capacity(2 + self.fixed.len());
        for (i, spec) in plane.iter().enumerate() {
            bindings.push(spec.binding());
            values.push(if i == self.seed_free0() { 0.0 } else { self.seed_at });
        }
        for (spec, value) in &self.fixed {
            bindings.push(spec.binding());
            values.push(*value);
        }
        ParameterVector::with_bindings(bindings, values).map_err(Failure::case)
    }

    /// Square system for seed discovery: the seeded plane parameter freed
    /// (the uniform parameter when there is no plane).
    pub fn seed_system(&self, case: &NetworkCase) -> Result<BoundarySystem, Failure> {
        let free = if self.plane.is_some() { self.seed_free0() } else { 0 };
        BoundarySystem::new(
            case,
            self.limit_rows(),
            self.template()?,
            vec![free],
            self.kind(),
        )
        .map_err(Failure::case)
    }

    /// Underdetermined system for tracing: both plane parameters freed.
    pub fn trace_system(&self, case: &NetworkCase) -> Result<BoundarySystem, Failure> {
        BoundarySystem::new(
            case,
            self.limit_rows(),
            self.template()?,
            vec![0, 1],
            self.kind(),
        )
        .map_err(Failure::case)
    }

    pub fn seed_settings(&self) -> SeedSettings {
        SeedSettings {
            n_restarts: self.restarts,
            rng_seed: self.seed,
            ..SeedSettings::default()
        }
    }

    pub fn radius_policy(&self) -> RadiusPolicy {
        RadiusPolicy {
            a_max: self.radius_max,
            b_coeff: self.radius_max - 2.0 * self.radius_min,
            r_min_floor: self.radius_min,
            r_max_cap: self.radius_max,
            ..RadiusPolicy::default()
        }
    }

    pub fn trace_settings(&self, max_steps: Option<usize>) -> TraceSettings {
        TraceSettings {
            eps: self.eps,
            max_steps: max_steps.unwrap_or(TraceSettings::default().max_steps),
            parameter_box: self.param_box.clone(),
            ..TraceSettings::default()
        }
    }

    /// Bound the global worker pool. Call once, before any parallel work.
    pub fn init_jobs(&self) {
        if self.jobs > 0 {
            // Ignore the error: the pool can already be set in tests that
            // call several commands in one process.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(self.jobs)
                .build_global();
        }
    }
}
