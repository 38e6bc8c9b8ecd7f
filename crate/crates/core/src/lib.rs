//! Boundary curves of power-flow solvability and voltage feasibility.
//!
//! The library computes points on, and traces one-dimensional slices of, the
//! boundary of the region in power-injection space where the network equations
//! admit a solution (solvability) or a solution inside operator voltage bands
//! (feasibility). Voltage bands are folded into the equation set through slack
//! variables, so both boundaries are characterized the same way: the system
//! Jacobian turns singular. That condition enters as a scalar equation built
//! from the smallest singular triplet, and curves in two injection parameters
//! are followed with an adaptive spherical predictor-corrector.
//!
//! Module map:
//! - [`netcase`]: network data model, case loading, admittance assembly
//! - [`pfsystem`]: rectangular power-flow residuals with voltage-band slack
//!   variables, and their fixed-pattern sparse Jacobians
//! - [`transversality`]: smallest singular triplet, its state gradient, and
//!   the eigenpair-based comparison formulation
//! - [`boundary_solvers`]: damped-Newton boundary location and multistart
//!   seed discovery
//! - [`sc_tracer`]: spherical predictor-corrector continuation with adaptive
//!   radius control
//! - [`oracle`]: brute-force grid classification of the same regions, used to
//!   validate traced curves
//! - [`sparse`]: minimal fixed-pattern CSR matrices used throughout

pub mod boundary_solvers;
pub mod netcase;
pub mod oracle;
pub mod pfsystem;
pub mod sc_tracer;
pub mod sparse;
pub mod transversality;

pub use boundary_solvers::{
    find_seeds, pf_solve, pf_solve_counted, tenr_solve, BoundaryError, BoundarySystem, EvalH, PfSolveSettings,
    SeedOrigin, SeedPoint, SeedSettings, TenrSettings, TransversalityKind,
};
pub use netcase::{
    build_ybus, load_case, parse_case, AdmittanceMatrix, BranchRecord, BusKind, BusRecord,
    CaseError, CaseFormat, CaseMetadata, NetworkCase,
};
pub use pfsystem::{
    Binding, InjectionQty, LimitFlag, LimitRows, ParameterVector, PfError, PfSystem,
    ResidualReport, SystemLayout,
};
pub use oracle::{
    classify_point, directed_hausdorff, directed_hausdorff_to_polyline, extract_boundary,
    hausdorff, scan, write_scan_csv, BoundaryKind, OracleError, RegionClass, ScanCell, ScanGrid,
};
pub use sc_tracer::{
    adapt_radius, correct, curvature_tau, detect_reversion, distinct_curves, predict,
    sweep_contours, tangent, tangent_continuing, trace_curve, BoundaryCurve, ContourFamily,
    HomotopySystem, RadiusPolicy, SphereConstraint, StepAudit, TangentInfo, Termination,
    TraceError, TraceSettings, TraceStep, UnitCircle,
};
pub use sparse::{SparseMatrix, SparsePattern};
pub use transversality::{
    geig_system, gsvd, gsvd_gradient, gsvd_with_opts, GsvdGradient, GsvdOptions, SingularTriplet,
    TransversalityError,
};
