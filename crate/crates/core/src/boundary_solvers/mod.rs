//! Stage one of boundary tracing: locate isolated boundary points.
//!
//! With a single freed parameter the augmented system
//!   H(x, λ₁) = [F(x, λ); σ_min(∂F/∂x)] = 0
//! is square, and a damped Newton iteration (here "transversality-enforced
//! Newton-Raphson") drives an ordinary operating state onto the boundary.
//! Multistart with perturbed voltage profiles discovers seeds on distinct
//! boundary branches; survivors are certified by independent re-evaluation
//! and deduplicated.
//!
//! The module also carries a plain damped-Newton power-flow solve (fixed λ,
//! no transversality row), which the brute-force oracle and several tests
//! use as their base solver.

use crate::netcase::{CaseError, NetworkCase};
use crate::pfsystem::{LimitFlag, LimitRows, ParameterVector, PfError, PfSystem};
use crate::transversality::{
    geig_system, gsvd_gradient_with_tol, gsvd_with_opts, sigma_resolution, GsvdOptions,
    TransversalityError, GAP_TOL,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;


#[derive(Debug, thiserror::Error)]
pub enum BoundaryError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Pf(#[from] PfError),
    #[error(transparent)]
    Transversality(#[from] TransversalityError),
    #[error("Newton did not converge after {iterations} iterations (residual {last_norm:.3e})")]
    NoConvergence { iterations: usize, last_norm: f64 },
    #[error("linear step solve failed: Newton matrix is singular")]
    SingularNewtonMatrix,
    #[error(
        "converged point failed certification: sigma_min {sigma_min:.3e} >= {eps_singular:.1e}"
    )]
    CertificateFailed { sigma_min: f64, eps_singular: f64 },
    #[error("no seed converged out of {attempts} starts")]
    EmptySeedSet { attempts: usize },
    #[error("invalid free parameter set: {0}")]
    BadFreeParams(String),
}

/// Which scalar closes the augmented system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransversalityKind {
    /// Smallest singular value of the state Jacobian (n + 1 equations).
    Svd,
    /// Explicit null-vector equations [J·y; yᵀy − 1] (2n + 1 equations).
    Eig,
}

/// The augmented boundary system H(z) = 0 with its freed parameters.
///
/// z stacks the power-flow state, then (Eig only) the null-vector candidate,
/// then the freed λ entries in `free` order. Fixed λ entries keep the values
/// of the template parameter vector.
#[derive(Debug, Clone)]
pub struct BoundarySystem {
    sys: PfSystem,
    params: ParameterVector,
    free: Vec<usize>,
    kind: TransversalityKind,
    gsvd_opts: GsvdOptions,
}

/// One evaluation of H: the stacked residual plus diagnostics.
#[derive(Debug, Clone)]
pub struct EvalH {
    pub h: DVector<f64>,
    /// ‖F‖∞ over the power-flow block only.
    pub residual_inf: f64,
    /// Transversality diagnostics (Svd kind only).
    pub sigma_min: Option<f64>,
    pub sigma_next: Option<f64>,
    pub flags: Vec<(usize, LimitFlag)>,
}

impl BoundarySystem {
    pub fn new(
        case: &NetworkCase,
        limits: LimitRows,
        params: ParameterVector,
        free: Vec<usize>,
        kind: TransversalityKind,
    ) -> Result<Self, BoundaryError> {
        let sys = PfSystem::new(case, limits)?;
        if free.is_empty() || free.len() > 2 {
            return Err(BoundaryError::BadFreeParams(format!(
                "expected 1 or 2 free parameters, got {}",
                free.len()
            )));
        }
        for (i, &j) in free.iter().enumerate() {
            if j >= params.len() {
                return Err(BoundaryError::BadFreeParams(format!(
                    "index {j} out of range for {} parameters",
                    params.len()
                )));
            }
            if free[..i].contains(&j) {
                return Err(BoundaryError::BadFreeParams(format!("index {j} repeated")));
            }
        }
        // Surface binding problems at construction, not first evaluation.
        let probe = sys.flat_start();
        sys.residual(&probe, &params)?;
        Ok(Self { sys, params, free, kind, gsvd_opts: GsvdOptions::default() })
    }

    pub fn with_gsvd_opts(mut self, opts: GsvdOptions) -> Self {
        self.gsvd_opts = opts;
        self
    }

    pub fn gsvd_opts(&self) -> &GsvdOptions {
        &self.gsvd_opts
    }

    pub fn pf(&self) -> &PfSystem {
        &self.sys
    }

    pub fn params_template(&self) -> &ParameterVector {
        &self.params
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn kind(&self) -> TransversalityKind {
        self.kind
    }

    /// Power-flow state dimension n.
    pub fn n(&self) -> usize {
        self.sys.n()
    }

    /// Number of equations in H.
    pub fn neq(&self) -> usize {
        match self.kind {
            TransversalityKind::Svd => self.sys.n() + 1,
            TransversalityKind::Eig => 2 * self.sys.n() + 1,
        }
    }

    /// Number of unknowns in z.
    pub fn nvar(&self) -> usize {
        match self.kind {
            TransversalityKind::Svd => self.sys.n() + self.free.len(),
            TransversalityKind::Eig => 2 * self.sys.n() + self.free.len(),
        }
    }

    /// Index of the first freed λ entry inside z.
    pub fn lambda_offset(&self) -> usize {
        self.nvar() - self.free.len()
    }

    fn x_of<'a>(&self, z: &'a DVector<f64>) -> DVector<f64> {
        z.rows(0, self.sys.n()).into_owned()
    }

    /// Template parameters with the freed entries taken from z.
    pub fn lambda_of(&self, z: &DVector<f64>) -> ParameterVector {
        let mut lam = self.params.clone();
        let off = self.lambda_offset();
        for (i, &j) in self.free.iter().enumerate() {
            lam.set_value(j, z[off + i]);
        }
        lam
    }

    /// Assemble z from a power-flow state, the template λ values, and (for
    /// the Eig kind) the current smallest right singular vector.
    pub fn initial_point(&self, x0: &DVector<f64>) -> Result<DVector<f64>, BoundaryError> {
        let mut z = DVector::zeros(self.nvar());
        z.rows_mut(0, self.sys.n()).copy_from(x0);
        if self.kind == TransversalityKind::Eig {
            let rep = self.sys.residual(x0, &self.params)?;
            let trip = gsvd_with_opts(&rep.jac, &self.gsvd_opts)?;
            z.rows_mut(self.sys.n(), self.sys.n()).copy_from(&trip.v);
        }
        let off = self.lambda_offset();
        for (i, &j) in self.free.iter().enumerate() {
            z[off + i] = self.params.value(j);
        }
        Ok(z)
    }

    /// Re-express a seed found while freeing only `seeded_free` as a point
    /// of this system (which typically frees more parameters): the state
    /// and the seeded λ value carry over, every other freed λ takes its
    /// template value, and the diagnostics are refreshed at the lifted z.
    pub fn lift_seed(
        &self,
        seed: &SeedPoint,
        seeded_free: usize,
    ) -> Result<SeedPoint, BoundaryError> {
        let pos = self
            .free
            .iter()
            .position(|&j| j == seeded_free)
            .ok_or_else(|| {
                BoundaryError::BadFreeParams(format!(
                    "seeded parameter {seeded_free} is not freed by this system"
                ))
            })?;
        let x = seed.z.rows(0, self.sys.n()).into_owned();
        let mut z = self.initial_point(&x)?;
        let seed_lambda = seed.z[seed.z.len() - 1];
        z[self.lambda_offset() + pos] = seed_lambda;
        let eval = self.eval(&z)?;
        let sigma = match eval.sigma_min {
            Some(s) => s,
            None => {
                let rep = self.sys.residual(&x, &self.lambda_of(&z))?;
                gsvd_with_opts(&rep.jac, &self.gsvd_opts)?.sigma_min
            }
        };
        Ok(SeedPoint {
            z,
            residual_norm: eval.h.amax(),
            sigma_min: sigma,
            origin: seed.origin,
            iterations: seed.iterations,
        })
    }

    fn check_z(&self, z: &DVector<f64>) -> Result<(), BoundaryError> {
        if z.len() != self.nvar() {
            return Err(BoundaryError::Pf(PfError::DimensionMismatch {
                expected: self.nvar(),
                got: z.len(),
            }));
        }
        Ok(())
    }

    /// Evaluate H(z).
    pub fn eval(&self, z: &DVector<f64>) -> Result<EvalH, BoundaryError> {
        self.check_z(z)?;
        let x = self.x_of(z);
        let lam = self.lambda_of(z);
        let rep = self.sys.residual(&x, &lam)?;
        let flags = self.sys.feasibility_flags(&x)?;
        let n = self.sys.n();
        match self.kind {
            TransversalityKind::Svd => {
                let trip = gsvd_with_opts(&rep.jac, &self.gsvd_opts)?;
                let mut h = DVector::zeros(n + 1);
                h.rows_mut(0, n).copy_from(&rep.f);
                h[n] = trip.sigma_min;
                Ok(EvalH {
                    h,
                    residual_inf: rep.norm_inf,
                    sigma_min: Some(trip.sigma_min),
                    sigma_next: Some(trip.sigma_next),
                    flags,
                })
            }
            TransversalityKind::Eig => {
                let y = z.rows(n, n).into_owned();
                let eig = geig_system(&rep.jac, &y);
                let mut h = DVector::zeros(2 * n + 1);
                h.rows_mut(0, n).copy_from(&rep.f);
                h.rows_mut(n, n + 1).copy_from(&eig);
                Ok(EvalH {
                    h,
                    residual_inf: rep.norm_inf,
                    sigma_min: None,
                    sigma_next: None,
                    flags,
                })
            }
        }
    }

    /// Evaluate H(z) and ∇_z H in one pass (one transversality solve).
    pub fn eval_with_jacobian(
        &self,
        z: &DVector<f64>,
    ) -> Result<(EvalH, DMatrix<f64>), BoundaryError> {
        self.check_z(z)?;
        let x = self.x_of(z);
        let lam = self.lambda_of(z);
        let rep = self.sys.residual(&x, &lam)?;
        let flags = self.sys.feasibility_flags(&x)?;
        let lam_jac = self.sys.lambda_jacobian(&lam)?;
        let n = self.sys.n();
        let off = self.lambda_offset();
        let mut jh = DMatrix::zeros(self.neq(), self.nvar());
        for r in 0..n {
            for (c, v) in rep.jac.row_entries(r) {
                jh[(r, c)] = v;
            }
            for (i, &j) in self.free.iter().enumerate() {
                jh[(r, off + i)] = lam_jac[(r, j)];
            }
        }
        match self.kind {
            TransversalityKind::Svd => {
                let trip = gsvd_with_opts(&rep.jac, &self.gsvd_opts)?;
                let grad = gsvd_gradient_with_tol(&self.sys, &lam, &trip, GAP_TOL)?;
                let mut h = DVector::zeros(n + 1);
                h.rows_mut(0, n).copy_from(&rep.f);
                h[n] = trip.sigma_min;
                for c in 0..n {
                    jh[(n, c)] = grad.x[c];
                }
                // ∂σ/∂λ is structurally zero; the freed columns stay 0.
                let eval = EvalH {
                    h,
                    residual_inf: rep.norm_inf,
                    sigma_min: Some(trip.sigma_min),
                    sigma_next: Some(trip.sigma_next),
                    flags,
                };
                Ok((eval, jh))
            }
            TransversalityKind::Eig => {
                let y = z.rows(n, n).into_owned();
                let eig = geig_system(&rep.jac, &y);
                let mut h = DVector::zeros(2 * n + 1);
                h.rows_mut(0, n).copy_from(&rep.f);
                h.rows_mut(n, n + 1).copy_from(&eig);
                // ∂(J y)/∂x via the affine identity; ∂(J y)/∂y = J.
                let dy = affine_singular_gradient_matrix(&self.sys, &lam, &y);
                for r in 0..n {
                    for c in 0..n {
                        jh[(n + r, c)] = dy[(r, c)];
                    }
                    for (c, v) in rep.jac.row_entries(r) {
                        jh[(n + r, n + c)] = v;
                    }
                }
                for c in 0..n {
                    jh[(2 * n, n + c)] = 2.0 * y[c];
                }
                let eval = EvalH {
                    h,
                    residual_inf: rep.norm_inf,
                    sigma_min: None,
                    sigma_next: None,
                    flags,
                };
                Ok((eval, jh))
            }
        }
    }

    /// Absolute accuracy floor of the σ entry of H for this system.
    pub fn sigma_floor(&self, z: &DVector<f64>) -> Result<f64, BoundaryError> {
        let x = self.x_of(z);
        let lam = self.lambda_of(z);
        let rep = self.sys.residual(&x, &lam)?;
        Ok(sigma_resolution(&rep.jac, &self.gsvd_opts))
    }
}

/// ∂(J(x)·y)/∂x as a dense matrix: column k is (∂J/∂x_k)·y, assembled from
/// the affine structure as J(y-as-state) − J(0) applied row-wise.
fn affine_singular_gradient_matrix(
    sys: &PfSystem,
    lam: &ParameterVector,
    y: &DVector<f64>,
) -> DMatrix<f64> {
    let at_y = sys.residual(y, lam).expect("assembly at vector state").jac;
    let at_zero = sys.residual(&DVector::zeros(y.len()), lam).expect("assembly at zero").jac;
    let n = y.len();
    let mut m = DMatrix::zeros(n, n);
    for r in 0..n {
        for (c, v) in at_y.row_entries(r) {
            m[(r, c)] = v;
        }
        for (c, v) in at_zero.row_entries(r) {
            m[(r, c)] -= v;
        }
    }
    m
}

/// Settings for the square boundary-point Newton solve.
#[derive(Debug, Clone)]
pub struct TenrSettings {
    pub eps_newton: f64,
    pub eps_singular: f64,
    pub max_iterations: usize,
    /// Clamp for the freed λ₁ during iteration.
    pub bracket: Option<(f64, f64)>,
    /// Accept mildly uphill steps during the first iterations (multistart
    /// branch discovery); strict Armijo descent afterwards.
    pub relaxed: bool,
}

impl Default for TenrSettings {
    fn default() -> Self {
        Self {
            eps_newton: 1e-8,
            eps_singular: 1e-6,
            max_iterations: 60,
            bracket: None,
            relaxed: false,
        }
    }
}

/// Where a seed came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedOrigin {
    TenrFromFlat,
    TenrRelaxedRestart(usize),
}

/// A certified boundary point with one freed parameter.
#[derive(Debug, Clone)]
pub struct SeedPoint {
    pub z: DVector<f64>,
    /// ‖F‖∞ at the seed, from independent re-evaluation.
    pub residual_norm: f64,
    /// σ_min(∂F/∂x) at the seed, from independent re-evaluation.
    pub sigma_min: f64,
    pub origin: SeedOrigin,
    pub iterations: usize,
}

const RELAXED_ITERS: usize = 5;
const RELAXED_SLACK: f64 = 1e-3;
const MIN_STEP_FRACTION: f64 = 1.0 / 16.0;
/// Relaxed starts keep halving far past the strict cutoff: on stiff systems
/// the useful damping can sit two orders of magnitude below full step.
const MIN_STEP_FRACTION_RELAXED: f64 = 1.0 / 4096.0;
const ARMIJO_C: f64 = 1e-4;

/// Damped Newton on the square augmented system (one freed parameter).
pub fn tenr_solve(
    bsys: &BoundarySystem,
    z0: &DVector<f64>,
    settings: &TenrSettings,
) -> Result<SeedPoint, BoundaryError> {
    if bsys.free().len() != 1 {
        return Err(BoundaryError::BadFreeParams(format!(
            "single-point solve needs exactly 1 free parameter, got {}",
            bsys.free().len()
        )));
    }
    let mut z = z0.clone();
    clamp_lambda(bsys, &mut z, settings.bracket);
    let mut eval = bsys.eval(&z)?;
    let mut iterations = 0usize;
    loop {
        if converged(bsys, &z, &eval, settings)? {
            return certify(bsys, z, iterations, settings);
        }
        if iterations >= settings.max_iterations {
            return Err(BoundaryError::NoConvergence {
                iterations,
                last_norm: eval.h.amax(),
            });
        }
        let (_, jh) = bsys.eval_with_jacobian(&z)?;
        let delta = jh
            .lu()
            .solve(&(-&eval.h))
            .ok_or(BoundaryError::SingularNewtonMatrix)?;
        let phi0 = eval.h.norm_squared();
        let h_inf0 = eval.h.amax();
        let mut t = 1.0;
        let accepted = loop {
            let mut cand = &z + &delta * t;
            clamp_lambda(bsys, &mut cand, settings.bracket);
            // A candidate in a degenerate region (repeated smallest singular
            // value, overflowed state) is a rejection, not a fatal error:
            // shorter steps stay evaluable.
            if let Ok(cand_eval) = bsys.eval(&cand) {
                let armijo = cand_eval.h.norm_squared() <= (1.0 - ARMIJO_C * t) * phi0;
                let relaxed_ok = settings.relaxed
                    && iterations < RELAXED_ITERS
                    && cand_eval.h.amax() <= h_inf0 + RELAXED_SLACK;
                if armijo || relaxed_ok {
                    break Some((cand, cand_eval));
                }
            }
            t *= 0.5;
            let floor =
                if settings.relaxed { MIN_STEP_FRACTION_RELAXED } else { MIN_STEP_FRACTION };
            if t < floor {
                break None;
            }
        };
        let Some((next, next_eval)) = accepted else {
            return Err(BoundaryError::NoConvergence {
                iterations,
                last_norm: eval.h.amax(),
            });
        };
        z = next;
        eval = next_eval;
        iterations += 1;
    }
}

fn clamp_lambda(bsys: &BoundarySystem, z: &mut DVector<f64>, bracket: Option<(f64, f64)>) {
    if let Some((lo, hi)) = bracket {
        let k = bsys.lambda_offset();
        z[k] = z[k].clamp(lo, hi);
    }
}

/// Convergence: the whole of H below eps. When the σ entry is computed
/// through the normal equations its resolution floor can sit above
/// eps_newton; the power-flow block must still fully converge and σ must be
/// at that floor, which is the most the formulation can certify.
fn converged(
    bsys: &BoundarySystem,
    z: &DVector<f64>,
    eval: &EvalH,
    settings: &TenrSettings,
) -> Result<bool, BoundaryError> {
    if eval.h.amax() < settings.eps_newton {
        return Ok(true);
    }
    if let Some(sigma) = eval.sigma_min {
        if eval.residual_inf < settings.eps_newton {
            let floor = bsys.sigma_floor(z)?;
            if floor > settings.eps_newton && sigma <= floor {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Independent certification: fresh residual and σ evaluation at the final
/// state, not the solver's bookkeeping.
fn certify(
    bsys: &BoundarySystem,
    z: DVector<f64>,
    iterations: usize,
    settings: &TenrSettings,
) -> Result<SeedPoint, BoundaryError> {
    let x = z.rows(0, bsys.n()).into_owned();
    let lam = bsys.lambda_of(&z);
    let rep = bsys.pf().residual(&x, &lam)?;
    // Both kinds certify through the same independent σ evaluation.
    let sigma = gsvd_with_opts(&rep.jac, &bsys.gsvd_opts)?.sigma_min;
    if sigma >= settings.eps_singular {
        return Err(BoundaryError::CertificateFailed {
            sigma_min: sigma,
            eps_singular: settings.eps_singular,
        });
    }
    Ok(SeedPoint {
        z,
        residual_norm: rep.norm_inf,
        sigma_min: sigma,
        origin: SeedOrigin::TenrFromFlat,
        iterations,
    })
}

/// Settings for multistart seed discovery.
#[derive(Debug, Clone)]
pub struct SeedSettings {
    pub n_restarts: usize,
    pub rng_seed: u64,
    /// Half-width of the uniform voltage perturbation, per-unit.
    pub perturbation: f64,
    /// Max-norm dedup distance in z.
    pub dedup_tol: f64,
    pub tenr: TenrSettings,
}

impl Default for SeedSettings {
    fn default() -> Self {
        Self {
            n_restarts: 32,
            rng_seed: 7,
            perturbation: 0.3,
            dedup_tol: 1e-4,
            tenr: TenrSettings::default(),
        }
    }
}

/// Multistart boundary-point discovery: the flat start plus perturbed
/// restarts, certified, sorted by (λ₁, z), and deduplicated.
pub fn find_seeds(
    bsys: &BoundarySystem,
    settings: &SeedSettings,
) -> Result<Vec<SeedPoint>, BoundaryError> {
    assert!(settings.n_restarts >= 1, "at least one start required");
    let flat = bsys.pf().flat_start();
    let attempts: Vec<Option<SeedPoint>> = (0..settings.n_restarts)
        .into_par_iter()
        .map(|k| {
            let x0 = if k == 0 { flat.clone() } else { perturbed_start(bsys, k, settings) };
            let z0 = bsys.initial_point(&x0).ok()?;
            let mut tenr = settings.tenr.clone();
            tenr.relaxed = k > 0;
            let mut seed = tenr_solve(bsys, &z0, &tenr).ok()?;
            seed.origin = if k == 0 {
                SeedOrigin::TenrFromFlat
            } else {
                SeedOrigin::TenrRelaxedRestart(k)
            };
            Some(seed)
        })
        .collect();

    let mut seeds: Vec<SeedPoint> = attempts.into_iter().flatten().collect();
    if seeds.is_empty() {
        return Err(BoundaryError::EmptySeedSet { attempts: settings.n_restarts });
    }
    let off = bsys.lambda_offset();
    seeds.sort_by(|a, b| {
        a.z[off]
            .total_cmp(&b.z[off])
            .then_with(|| lex_cmp(&a.z, &b.z))
    });
    let mut kept: Vec<SeedPoint> = Vec::new();
    for s in seeds {
        if kept.iter().all(|k| max_norm_diff(&k.z, &s.z) > settings.dedup_tol) {
            kept.push(s);
        }
    }
    Ok(kept)
}

fn perturbed_start(bsys: &BoundarySystem, k: usize, settings: &SeedSettings) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.rng_seed.wrapping_add(k as u64));
    let p = settings.perturbation;
    let sys = bsys.pf();
    let mut x = sys.flat_start();
    for slot in sys.layout().slots() {
        x[slot.start] += rng.gen_range(-p..p);
        x[slot.start + 1] += rng.gen_range(-p..p);
        if slot.has_limits {
            let bus = &sys.case().buses[slot.bus_pos];
            let (lo, hi) = bus.band().expect("limit slot has a band");
            // Keep the sampled magnitude strictly inside the band. A start
            // on or past a limit zeroes that slack column, and with two such
            // buses the zero singular value is no longer simple, so the
            // transversality gradient is undefined and the start is wasted.
            let margin = 0.05 * (hi - lo);
            let (e, f) = (x[slot.start], x[slot.start + 1]);
            let v = (e * e + f * f).sqrt().max(1e-12);
            let vc = v.clamp(lo + margin, hi - margin);
            if vc != v {
                x[slot.start] = e * (vc / v);
                x[slot.start + 1] = f * (vc / v);
            }
            let m = x[slot.start] * x[slot.start] + x[slot.start + 1] * x[slot.start + 1];
            x[slot.start + 2] = (hi * hi - m).max(0.0).sqrt();
            x[slot.start + 3] = (m - lo * lo).max(0.0).sqrt();
        }
    }
    x
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for i in 0..a.len() {
        let o = a[i].total_cmp(&b[i]);
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

fn max_norm_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

/// Settings for the plain power-flow Newton solve.
#[derive(Debug, Clone)]
pub struct PfSolveSettings {
    pub eps: f64,
    pub max_iterations: usize,
}

impl Default for PfSolveSettings {
    fn default() -> Self {
        Self { eps: 1e-10, max_iterations: 60 }
    }
}

/// Damped Newton for F(x, λ) = 0 at fixed λ. Returns the solved state.
pub fn pf_solve(
    sys: &PfSystem,
    x0: &DVector<f64>,
    lam: &ParameterVector,
    settings: &PfSolveSettings,
) -> Result<DVector<f64>, BoundaryError> {
    pf_solve_counted(sys, x0, lam, settings).map(|(x, _)| x)
}

/// [`pf_solve`] variant that also reports the iterations spent.
pub fn pf_solve_counted(
    sys: &PfSystem,
    x0: &DVector<f64>,
    lam: &ParameterVector,
    settings: &PfSolveSettings,
) -> Result<(DVector<f64>, usize), BoundaryError> {
    let mut x = x0.clone();
    let mut rep = sys.residual(&x, lam)?;
    for iteration in 0..settings.max_iterations {
        if rep.norm_inf < settings.eps {
            return Ok((x, iteration));
        }
        let delta = rep
            .jac
            .to_dense()
            .lu()
            .solve(&(-&rep.f))
            .ok_or(BoundaryError::SingularNewtonMatrix)?;
        let phi0 = rep.f.norm_squared();
        let mut t = 1.0;
        let accepted = loop {
            let cand = &x + &delta * t;
            let cand_rep = sys.residual(&cand, lam)?;
            if cand_rep.f.norm_squared() <= (1.0 - ARMIJO_C * t) * phi0 {
                break Some((cand, cand_rep));
            }
            t *= 0.5;
            if t < 1.0 / 64.0 {
                break None;
            }
        };
        let Some((next, next_rep)) = accepted else {
            return Err(BoundaryError::NoConvergence {
                iterations: iteration,
                last_norm: rep.norm_inf,
            });
        };
        x = next;
        rep = next_rep;
    }
    if rep.norm_inf < settings.eps {
        Ok((x, settings.max_iterations))
    } else {
        Err(BoundaryError::NoConvergence {
            iterations: settings.max_iterations,
            last_norm: rep.norm_inf,
        })
    }
}
