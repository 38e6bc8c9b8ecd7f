//! Stage two of boundary tracing: follow a 1-D boundary curve from a seed.
//!
//! The tracer walks the solution set of a square-minus-one system H(z) = 0
//! (n+1 equations, n+2 unknowns) with a spherical predictor-corrector:
//! from the last accepted point it steps along the unit kernel vector of
//! ∇H (predictor), then corrects back onto the curve while constrained to
//! the sphere of radius r around the last point, so every step has exactly
//! the chosen arc advance. Backward sphere intersections are detected and
//! retried with a slightly larger radius; corrector failures halve the
//! radius. The radius itself adapts to the locally estimated radius of
//! curvature through a bounded sigmoid, so flat stretches take long strides
//! and folds are resolved finely.

use crate::boundary_solvers::{
    find_seeds, BoundaryError, BoundarySystem, SeedOrigin, SeedPoint, SeedSettings,
    TransversalityKind,
};
use crate::netcase::NetworkCase;
use crate::pfsystem::{LimitFlag, LimitRows, ParameterVector};
use crate::transversality::gsvd_with_opts;
use nalgebra::{DMatrix, DVector};

#[cfg(test)]
mod tests;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error(
        "curve Jacobian is rank-deficient at this point \
         (second-smallest singular value {sigma_penultimate:.3e} vs scale {scale:.3e})"
    )]
    RankDeficient { sigma_penultimate: f64, scale: f64 },
    #[error("corrector did not converge after {iterations} iterations")]
    CorrectorDiverged { iterations: usize },
    #[error(transparent)]
    System(#[from] BoundaryError),
}

/// One evaluation target for the tracer: a system whose solution set is a
/// 1-D curve (one more unknown than equations).
pub trait HomotopySystem {
    /// Length of the unknown vector z.
    fn nvar(&self) -> usize;
    /// Number of equations; must be `nvar() - 1`.
    fn neq(&self) -> usize;
    /// Indices of z treated as plane parameters: box termination checks and
    /// plane projections read these components.
    fn parameter_components(&self) -> Vec<usize>;
    fn residual(&self, z: &DVector<f64>) -> Result<DVector<f64>, TraceError>;
    fn residual_with_jacobian(
        &self,
        z: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>), TraceError>;
    /// Independent post-acceptance diagnostics, recomputed from scratch.
    fn audit(&self, z: &DVector<f64>) -> Result<StepAudit, TraceError>;
}

/// Independently recomputed diagnostics of an accepted point.
#[derive(Debug, Clone)]
pub struct StepAudit {
    /// ‖H(z)‖_∞ from a fresh evaluation.
    pub residual_inf: f64,
    /// Smallest singular value of the state Jacobian, when the system has
    /// one (analytic fixtures return None).
    pub sigma_min: Option<f64>,
    /// Voltage-band activity flags, when the system has them.
    pub flags: Vec<(usize, LimitFlag)>,
}

impl HomotopySystem for BoundarySystem {
    fn nvar(&self) -> usize {
        BoundarySystem::nvar(self)
    }

    fn neq(&self) -> usize {
        BoundarySystem::neq(self)
    }

    fn parameter_components(&self) -> Vec<usize> {
        (self.lambda_offset()..BoundarySystem::nvar(self)).collect()
    }

    fn residual(&self, z: &DVector<f64>) -> Result<DVector<f64>, TraceError> {
        Ok(self.eval(z)?.h)
    }

    fn residual_with_jacobian(
        &self,
        z: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>), TraceError> {
        let (eval, jh) = self.eval_with_jacobian(z)?;
        Ok((eval.h, jh))
    }

    fn audit(&self, z: &DVector<f64>) -> Result<StepAudit, TraceError> {
        let eval = self.eval(z)?;
        let x = z.rows(0, self.n()).into_owned();
        let lam = self.lambda_of(z);
        let rep = self.pf().residual(&x, &lam).map_err(BoundaryError::from)?;
        let sigma = gsvd_with_opts(&rep.jac, self.gsvd_opts())
            .map_err(BoundaryError::from)?
            .sigma_min;
        Ok(StepAudit {
            residual_inf: eval.h.amax(),
            sigma_min: Some(sigma),
            flags: eval.flags,
        })
    }
}

/// The unit circle z₁² + z₂² = 1: the analytic validation fixture. Every
/// quantity the tracer produces on it has a closed form.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitCircle;

impl HomotopySystem for UnitCircle {
    fn nvar(&self) -> usize {
        2
    }

    fn neq(&self) -> usize {
        1
    }

    fn parameter_components(&self) -> Vec<usize> {
        vec![0, 1]
    }

    fn residual(&self, z: &DVector<f64>) -> Result<DVector<f64>, TraceError> {
        Ok(DVector::from_element(1, z[0] * z[0] + z[1] * z[1] - 1.0))
    }

    fn residual_with_jacobian(
        &self,
        z: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>), TraceError> {
        let h = self.residual(z)?;
        let jh = DMatrix::from_row_slice(1, 2, &[2.0 * z[0], 2.0 * z[1]]);
        Ok((h, jh))
    }

    fn audit(&self, z: &DVector<f64>) -> Result<StepAudit, TraceError> {
        Ok(StepAudit {
            residual_inf: self.residual(z)?.amax(),
            sigma_min: None,
            flags: Vec::new(),
        })
    }
}

// ---------------------------------------------------------------------------
// Sphere constraint and tangent computation
// ---------------------------------------------------------------------------

/// The sphere ‖z − center‖² = r² that pins each corrector step's advance.
#[derive(Debug, Clone)]
pub struct SphereConstraint {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl SphereConstraint {
    pub fn new(center: DVector<f64>, radius: f64) -> Self {
        assert!(radius > 0.0, "sphere radius must be positive");
        Self { center, radius }
    }

    /// S(z) = ‖z − center‖² − r².
    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        (z - &self.center).norm_squared() - self.radius * self.radius
    }

    /// ∇S(z) = 2 (z − center).
    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        (z - &self.center) * 2.0
    }
}

/// Unit tangent of the curve at a point, with its orientation certificate.
#[derive(Debug, Clone)]
pub struct TangentInfo {
    /// Unit kernel vector of ∇H.
    pub delta_z: DVector<f64>,
    /// Sign of the stacked determinant det [∇H; δzᵀ] for the returned
    /// vector: +1 when the vector is the positively oriented kernel basis.
    pub orient_sign: f64,
}

/// Relative threshold below which the second-smallest singular value of the
/// curve Jacobian counts as rank deficiency.
const RANK_TOL: f64 = 1e-10;
/// Kernel-quality requirement: ‖∇H·δz‖ must be below this times the scale.
const KERNEL_TOL: f64 = 1e-8;
/// Above this z-dimension the kernel is found by a bordered LU solve
/// instead of a dense SVD.
const DENSE_TANGENT_THRESHOLD: usize = 50;

/// Tangent with the determinant orientation rule only.
pub fn tangent<S: HomotopySystem>(sys: &S, z: &DVector<f64>) -> Result<TangentInfo, TraceError> {
    tangent_continuing(sys, z, None)
}

/// Tangent oriented by the determinant rule, then flipped if needed to
/// continue a previous tangent direction.
pub fn tangent_continuing<S: HomotopySystem>(
    sys: &S,
    z: &DVector<f64>,
    previous: Option<&DVector<f64>>,
) -> Result<TangentInfo, TraceError> {
    let (_, jh) = sys.residual_with_jacobian(z)?;
    let n2 = sys.nvar();
    debug_assert_eq!(jh.nrows() + 1, n2);

    let mut t = if n2 <= DENSE_TANGENT_THRESHOLD {
        kernel_by_svd(&jh)?
    } else {
        kernel_by_bordered_lu(sys, &jh, previous)?
    };

    // Certify kernel quality regardless of the path taken.
    let scale = 1.0 + jh.amax();
    let defect = (&jh * &t).amax();
    if defect > KERNEL_TOL * scale {
        return Err(TraceError::RankDeficient {
            sigma_penultimate: defect,
            scale,
        });
    }

    // Orientation: the stacked determinant det [∇H; tᵀ] factors through the
    // SVD of ∇Hᵀ as det(M)·Πσ·det(N), so its sign is exactly the
    // factor-determinant product the orientation rule prescribes.
    let mut sign = stacked_det_sign(&jh, &t);
    if sign < 0.0 {
        t.neg_mut();
        sign = -sign;
    }
    if let Some(prev) = previous {
        if prev.dot(&t) < 0.0 {
            t.neg_mut();
            sign = -sign;
        }
    }
    Ok(TangentInfo {
        delta_z: t,
        orient_sign: sign,
    })
}

/// Kernel of the (n+1)×(n+2) curve Jacobian via the SVD of the square
/// matrix obtained by appending a zero row: its only structurally zero
/// singular value has the kernel as right singular vector.
fn kernel_by_svd(jh: &DMatrix<f64>) -> Result<DVector<f64>, TraceError> {
    let n2 = jh.ncols();
    let mut square = DMatrix::zeros(n2, n2);
    square.rows_mut(0, jh.nrows()).copy_from(jh);
    let svd = square.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    // Locate the two smallest singular values: the smallest is the
    // structural zero, the runner-up measures the rank of ∇H itself.
    let (mut i_min, mut s_min) = (0usize, f64::INFINITY);
    let (mut _i_next, mut s_next) = (0usize, f64::INFINITY);
    let mut s_max = 0.0f64;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        s_max = s_max.max(s);
        if s < s_min {
            _i_next = i_min;
            s_next = s_min;
            i_min = i;
            s_min = s;
        } else if s < s_next {
            _i_next = i;
            s_next = s;
        }
    }
    if s_next <= RANK_TOL * s_max.max(1.0) {
        return Err(TraceError::RankDeficient {
            sigma_penultimate: s_next,
            scale: s_max,
        });
    }
    let t = v_t.row(i_min).transpose();
    Ok(t.normalize())
}

/// Kernel via one bordered LU solve: append a row that is certain to have a
/// component along the kernel, and solve for the unit right-hand side. Rows
/// tried in order: the previous tangent, then each parameter unit vector,
/// falling back to the dense SVD if all borders are degenerate.
fn kernel_by_bordered_lu<S: HomotopySystem>(
    sys: &S,
    jh: &DMatrix<f64>,
    previous: Option<&DVector<f64>>,
) -> Result<DVector<f64>, TraceError> {
    let n2 = jh.ncols();
    let mut borders: Vec<DVector<f64>> = Vec::new();
    if let Some(prev) = previous {
        borders.push(prev.clone());
    }
    for k in sys.parameter_components() {
        let mut e = DVector::zeros(n2);
        e[k] = 1.0;
        borders.push(e);
    }
    let mut rhs = DVector::zeros(n2);
    rhs[n2 - 1] = 1.0;
    let scale = 1.0 + jh.amax();
    for border in borders {
        let mut square = DMatrix::zeros(n2, n2);
        square.rows_mut(0, jh.nrows()).copy_from(jh);
        square.row_mut(n2 - 1).copy_from(&border.transpose());
        if let Some(sol) = square.lu().solve(&rhs) {
            let norm = sol.norm();
            if norm > 0.0 && norm.is_finite() {
                let t = sol / norm;
                if (jh * &t).amax() <= KERNEL_TOL * scale {
                    return Ok(t);
                }
            }
        }
    }
    kernel_by_svd(jh)
}

/// Sign of det [∇H; tᵀ].
fn stacked_det_sign(jh: &DMatrix<f64>, t: &DVector<f64>) -> f64 {
    let n2 = jh.ncols();
    let mut square = DMatrix::zeros(n2, n2);
    square.rows_mut(0, jh.nrows()).copy_from(jh);
    square.row_mut(n2 - 1).copy_from(&t.transpose());
    if square.lu().determinant() >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

// ---------------------------------------------------------------------------
// Predictor, corrector, reversion
// ---------------------------------------------------------------------------

/// Predictor: the affine step from the sphere center along the tangent.
pub fn predict(z1: &DVector<f64>, tangent: &TangentInfo, r: f64) -> DVector<f64> {
    assert!(r > 0.0, "predictor radius must be positive");
    z1 + &tangent.delta_z * r
}

const CORRECTOR_ARMIJO_C: f64 = 1e-4;
const CORRECTOR_MIN_STEP: f64 = 1.0 / 16.0;

/// Corrector: Newton on the bordered system [H(z); S(z)] = 0, keeping the
/// iterate on the sphere while driving it back onto the curve. Returns the
/// corrected point and the number of Newton solves spent.
pub fn correct<S: HomotopySystem>(
    sys: &S,
    sphere: &SphereConstraint,
    z_pred: &DVector<f64>,
    eps: f64,
    max_iterations: usize,
) -> Result<(DVector<f64>, usize), TraceError> {
    let n2 = sys.nvar();
    let mut z = z_pred.clone();
    let mut iterations = 0usize;
    while iterations < max_iterations {
        let (h, jh) = sys.residual_with_jacobian(&z)?;
        let s = sphere.eval(&z);
        let mut stacked = DVector::zeros(n2);
        stacked.rows_mut(0, n2 - 1).copy_from(&h);
        stacked[n2 - 1] = s;

        let mut bordered = DMatrix::zeros(n2, n2);
        bordered.rows_mut(0, n2 - 1).copy_from(&jh);
        bordered
            .row_mut(n2 - 1)
            .copy_from(&sphere.gradient(&z).transpose());

        let delta = bordered
            .lu()
            .solve(&(-&stacked))
            .ok_or(TraceError::CorrectorDiverged { iterations })?;
        iterations += 1;

        let phi0 = stacked.norm_squared();
        let mut eta = 1.0f64;
        let accepted = loop {
            let cand = &z + &delta * eta;
            let hc = sys.residual(&cand)?;
            let sc = sphere.eval(&cand);
            let phi = hc.norm_squared() + sc * sc;
            if phi <= (1.0 - CORRECTOR_ARMIJO_C * eta) * phi0 || phi0 == 0.0 {
                break Some((cand, hc.amax().max(sc.abs())));
            }
            eta *= 0.5;
            if eta < CORRECTOR_MIN_STEP {
                break None;
            }
        };
        let Some((next, resid_inf)) = accepted else {
            return Err(TraceError::CorrectorDiverged { iterations });
        };
        let step_norm = (&next - &z).norm();
        z = next;
        // Successive-iterate stop rule, then the residual postcondition.
        if step_norm <= eps {
            if resid_inf < eps {
                return Ok((z, iterations));
            }
            return Err(TraceError::CorrectorDiverged { iterations });
        }
    }
    Err(TraceError::CorrectorDiverged {
        iterations: max_iterations,
    })
}

/// True when the candidate is the backward sphere intersection: its
/// outward sphere-gradient direction matches the previous point's rather
/// than opposing it.
pub fn detect_reversion(
    z_prev: &DVector<f64>,
    z_new: &DVector<f64>,
    sphere: &SphereConstraint,
) -> bool {
    let g_prev = z_prev - &sphere.center;
    let g_new = z_new - &sphere.center;
    g_prev.dot(&g_new) > 0.0
}

// ---------------------------------------------------------------------------
// Curvature estimate and radius adaptation
// ---------------------------------------------------------------------------

/// Discrete radius-of-curvature estimate: arc length over tangent rotation
/// angle. Equal tangents (a straight stretch) return `tau_cap`.
pub fn curvature_tau(
    tangent_prev: &DVector<f64>,
    tangent_new: &DVector<f64>,
    arc_step: f64,
    tau_cap: f64,
) -> f64 {
    assert!(arc_step > 0.0, "arc step must be positive");
    let cos = tangent_prev.dot(tangent_new).clamp(-1.0, 1.0);
    let angle = cos.acos();
    if angle <= arc_step / tau_cap {
        tau_cap
    } else {
        (arc_step / angle).min(tau_cap)
    }
}

/// Radius schedule: a bounded sigmoid in the curvature radius τ, rising
/// from (a_max − b_coeff)/2 at τ = 0 toward a_max on flat stretches.
#[derive(Debug, Clone)]
pub struct RadiusPolicy {
    pub a_max: f64,
    pub b_coeff: f64,
    pub r_min_floor: f64,
    pub r_max_cap: f64,
    pub tau_cap: f64,
}

impl Default for RadiusPolicy {
    fn default() -> Self {
        let r_max_cap = 0.2;
        let r_min_floor = 1e-4;
        Self {
            a_max: r_max_cap,
            b_coeff: r_max_cap - 2.0 * r_min_floor,
            r_min_floor,
            r_max_cap,
            tau_cap: 1e3,
        }
    }
}

impl RadiusPolicy {
    /// A policy that always returns radius r, for fixed-step tracing.
    pub fn fixed(r: f64) -> Self {
        assert!(r > 0.0, "fixed radius must be positive");
        Self {
            a_max: r,
            b_coeff: -r,
            r_min_floor: r,
            r_max_cap: r,
            tau_cap: 1e3,
        }
    }

    fn validate(&self) {
        assert!(self.a_max > 0.0, "a_max must be positive");
        assert!(
            self.a_max - self.b_coeff > 0.0,
            "radius at zero curvature must be positive"
        );
        assert!(
            self.r_min_floor > 0.0 && self.r_min_floor <= self.r_max_cap,
            "radius clamp interval must be ordered and positive"
        );
    }
}

/// r(τ) = (𝒜·e^τ − ℬ·e^{−τ}) / (e^τ + e^{−τ}), clamped to the policy's
/// radius interval. Evaluated in the overflow-free equivalent form.
pub fn adapt_radius(policy: &RadiusPolicy, tau: f64) -> f64 {
    assert!(tau >= 0.0, "curvature radius must be nonnegative");
    policy.validate();
    let w = (-2.0 * tau).exp();
    let r = (policy.a_max - policy.b_coeff * w) / (1.0 + w);
    r.clamp(policy.r_min_floor, policy.r_max_cap)
}

// ---------------------------------------------------------------------------
// The trace loop
// ---------------------------------------------------------------------------

/// One accepted point of a traced curve.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub z: DVector<f64>,
    pub tangent: TangentInfo,
    /// Sphere radius that produced this point (0 for the seed step).
    pub radius_used: f64,
    /// Curvature-radius estimate at this point (tau_cap for the seed step).
    pub curvature_tau: f64,
    pub flags: Vec<(usize, LimitFlag)>,
    /// Independently recomputed σ_min of the state Jacobian, if any.
    pub sigma_min: Option<f64>,
    /// Independently recomputed ‖H‖_∞.
    pub residual_inf: f64,
    pub corrector_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Returned to the seed with aligned tangent after enough steps.
    ClosedLoop,
    /// A parameter component left the user box.
    ParameterBox,
    /// Step budget exhausted.
    MaxSteps,
    /// Retry budget exhausted without an acceptable step.
    Stalled,
}

/// A traced boundary curve.
#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    pub steps: Vec<TraceStep>,
    pub termination: Termination,
    pub seed_origin: SeedOrigin,
    /// Total predictor-corrector cycles spent, including retried ones.
    pub total_cycles: usize,
}

impl BoundaryCurve {
    /// Projection of the accepted points onto the parameter components.
    pub fn parameter_path<S: HomotopySystem>(&self, sys: &S) -> Vec<Vec<f64>> {
        let comps = sys.parameter_components();
        self.steps
            .iter()
            .map(|s| comps.iter().map(|&k| s.z[k]).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TraceSettings {
    /// Corrector tolerance and accepted-step residual bound.
    pub eps: f64,
    pub max_steps: usize,
    /// Per-step retry budget (radius halvings and reversion bumps).
    pub max_retries: usize,
    /// Minimum accepted steps before closed-loop detection may fire.
    pub min_closed_steps: usize,
    pub corrector_max_iterations: usize,
    /// Closed intervals for each parameter component, in
    /// `parameter_components()` order; None disables box termination.
    pub parameter_box: Option<Vec<(f64, f64)>>,
}

impl Default for TraceSettings {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            max_steps: 10_000,
            max_retries: 8,
            min_closed_steps: 10,
            corrector_max_iterations: 30,
            parameter_box: None,
        }
    }
}

/// Fraction by which the radius grows when a reversion is detected.
const REVERSION_BUMP: f64 = 0.1;

fn outside_box<S: HomotopySystem>(
    sys: &S,
    z: &DVector<f64>,
    settings: &TraceSettings,
) -> bool {
    let Some(bounds) = &settings.parameter_box else {
        return false;
    };
    let comps = sys.parameter_components();
    assert_eq!(
        bounds.len(),
        comps.len(),
        "parameter box must bound every parameter component"
    );
    comps
        .iter()
        .zip(bounds)
        .any(|(&k, &(lo, hi))| z[k] < lo || z[k] > hi)
}

/// Trace the boundary curve through a seed until it closes, leaves the box,
/// or exhausts its budgets. The seed is re-validated, not trusted.
pub fn trace_curve<S: HomotopySystem>(
    sys: &S,
    seed: &SeedPoint,
    policy: &RadiusPolicy,
    settings: &TraceSettings,
) -> Result<BoundaryCurve, TraceError> {
    assert_eq!(
        sys.neq() + 1,
        sys.nvar(),
        "tracing needs exactly one more unknown than equations"
    );
    assert_eq!(seed.z.len(), sys.nvar(), "seed dimension mismatch");
    policy.validate();

    let seed_audit = sys.audit(&seed.z)?;
    let seed_tangent = tangent(sys, &seed.z)?;
    let mut steps = vec![TraceStep {
        z: seed.z.clone(),
        tangent: seed_tangent.clone(),
        radius_used: 0.0,
        curvature_tau: policy.tau_cap,
        flags: seed_audit.flags,
        sigma_min: seed_audit.sigma_min,
        residual_inf: seed_audit.residual_inf,
        corrector_iters: 0,
    }];
    let mut total_cycles = 0usize;

    if outside_box(sys, &seed.z, settings) {
        return Ok(BoundaryCurve {
            steps,
            termination: Termination::ParameterBox,
            seed_origin: seed.origin,
            total_cycles,
        });
    }

    let mut r = adapt_radius(policy, 0.0);
    while steps.len() < settings.max_steps {
        let prev = steps.last().expect("at least the seed step");
        let center = prev.z.clone();
        let prev_tangent = prev.tangent.clone();

        // One attempt = predict, correct, reject reversions, and validate
        // the candidate before it may become a step. Any failure burns a
        // retry: reversions grow the radius slightly, everything else
        // (corrector divergence, transient degeneracy of the diagnostics)
        // shrinks it.
        enum Failure {
            Grow,
            Shrink,
        }
        let mut attempt_r = r;
        let mut accepted = None;
        for _retry in 0..=settings.max_retries {
            let sphere = SphereConstraint::new(center.clone(), attempt_r);
            let back_marker = &center - &prev_tangent.delta_z * attempt_r;
            let z_pred = predict(&center, &prev_tangent, attempt_r);
            total_cycles += 1;
            let outcome = correct(
                sys,
                &sphere,
                &z_pred,
                settings.eps,
                settings.corrector_max_iterations,
            )
            .map_err(|_| Failure::Shrink)
            .and_then(|(z_new, iters)| {
                if detect_reversion(&back_marker, &z_new, &sphere) {
                    return Err(Failure::Grow);
                }
                // Post-acceptance validation, recomputed independently.
                let audit = sys.audit(&z_new).map_err(|_| Failure::Shrink)?;
                let tng = tangent_continuing(sys, &z_new, Some(&prev_tangent.delta_z))
                    .map_err(|_| Failure::Shrink)?;
                Ok((z_new, iters, audit, tng))
            });
            match outcome {
                Ok(found) => {
                    accepted = Some((found, attempt_r));
                    break;
                }
                Err(Failure::Grow) => {
                    attempt_r = (attempt_r * (1.0 + REVERSION_BUMP)).min(policy.r_max_cap);
                }
                Err(Failure::Shrink) => attempt_r *= 0.5,
            }
        }
        let Some(((z_new, corrector_iters, audit, new_tangent), r_used)) = accepted else {
            return Ok(BoundaryCurve {
                steps,
                termination: Termination::Stalled,
                seed_origin: seed.origin,
                total_cycles,
            });
        };

        let tau = curvature_tau(
            &prev_tangent.delta_z,
            &new_tangent.delta_z,
            r_used,
            policy.tau_cap,
        );
        steps.push(TraceStep {
            z: z_new.clone(),
            tangent: new_tangent.clone(),
            radius_used: r_used,
            curvature_tau: tau,
            flags: audit.flags,
            sigma_min: audit.sigma_min,
            residual_inf: audit.residual_inf,
            corrector_iters,
        });

        if outside_box(sys, &z_new, settings) {
            return Ok(BoundaryCurve {
                steps,
                termination: Termination::ParameterBox,
                seed_origin: seed.origin,
                total_cycles,
            });
        }
        if steps.len() > settings.min_closed_steps
            && (&z_new - &seed.z).norm() <= r_used
            && new_tangent.delta_z.dot(&seed_tangent.delta_z) > 0.0
        {
            return Ok(BoundaryCurve {
                steps,
                termination: Termination::ClosedLoop,
                seed_origin: seed.origin,
                total_cycles,
            });
        }
        r = adapt_radius(policy, tau);
    }
    Ok(BoundaryCurve {
        steps,
        termination: Termination::MaxSteps,
        seed_origin: seed.origin,
        total_cycles,
    })
}

// ---------------------------------------------------------------------------
// Contour sweeps and curve bookkeeping
// ---------------------------------------------------------------------------

/// All curves traced at one fixed value of the swept parameter.
#[derive(Debug)]
pub struct ContourFamily {
    pub value: f64,
    pub curves: Vec<BoundaryCurve>,
    /// Seed-discovery failure for this value, if any (the sweep continues).
    pub seed_failure: Option<String>,
}

/// Trace the boundary in the plane of `free_pair` once per value of the
/// `third` parameter: each value is fixed into the template, seeds are
/// discovered by freeing the first plane parameter, and every seed is
/// traced in the full plane.
#[allow(clippy::too_many_arguments)]
pub fn sweep_contours(
    case: &NetworkCase,
    limits: LimitRows,
    kind: TransversalityKind,
    template: &ParameterVector,
    free_pair: [usize; 2],
    third: usize,
    values: &[f64],
    seed_settings: &SeedSettings,
    policy: &RadiusPolicy,
    trace_settings: &TraceSettings,
) -> Result<Vec<ContourFamily>, TraceError> {
    let mut out = Vec::with_capacity(values.len());
    for &value in values {
        let mut params = template.clone();
        params.set_value(third, value);
        let seed_sys = BoundarySystem::new(case, limits, params.clone(), vec![free_pair[0]], kind)
            .map_err(TraceError::System)?;
        let trace_sys =
            BoundarySystem::new(case, limits, params, free_pair.to_vec(), kind)
                .map_err(TraceError::System)?;
        match find_seeds(&seed_sys, seed_settings) {
            Ok(seeds) => {
                let mut curves = Vec::new();
                for seed in &seeds {
                    let lifted = trace_sys
                        .lift_seed(seed, free_pair[0])
                        .map_err(TraceError::System)?;
                    curves.push(trace_curve(&trace_sys, &lifted, policy, trace_settings)?);
                }
                out.push(ContourFamily {
                    value,
                    curves,
                    seed_failure: None,
                });
            }
            Err(e) => out.push(ContourFamily {
                value,
                curves: Vec::new(),
                seed_failure: Some(e.to_string()),
            }),
        }
    }
    Ok(out)
}

/// Greatest of the two directed max-min distances between the parameter
/// projections of two curves, measured point-to-polyline so that two
/// samplings of the same curve with different step phases collapse to the
/// chord sagitta rather than the step spacing. Closed loops include their
/// closing segment.
pub fn curve_separation<S: HomotopySystem>(sys: &S, a: &BoundaryCurve, b: &BoundaryCurve) -> f64 {
    let pa = a.parameter_path(sys);
    let pb = b.parameter_path(sys);
    let ca = a.termination == Termination::ClosedLoop;
    let cb = b.termination == Termination::ClosedLoop;
    directed_sep(&pa, &pb, cb).max(directed_sep(&pb, &pa, ca))
}

fn directed_sep(from: &[Vec<f64>], to: &[Vec<f64>], to_closed: bool) -> f64 {
    let mut worst = 0.0f64;
    let segments = if to.len() < 2 {
        0
    } else if to_closed {
        to.len()
    } else {
        to.len() - 1
    };
    for p in from {
        let mut best = f64::INFINITY;
        if segments == 0 {
            for q in to {
                best = best.min(dist2(p, q));
            }
        }
        for s in 0..segments {
            let a = &to[s];
            let b = &to[(s + 1) % to.len()];
            best = best.min(point_segment_dist2(p, a, b));
        }
        worst = worst.max(best.sqrt());
    }
    worst
}

fn dist2(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn point_segment_dist2(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab2: f64 = a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum();
    if ab2 == 0.0 {
        return dist2(p, a);
    }
    let t: f64 = p
        .iter()
        .zip(a.iter().zip(b))
        .map(|(pi, (ai, bi))| (pi - ai) * (bi - ai))
        .sum::<f64>()
        / ab2;
    let t = t.clamp(0.0, 1.0);
    p.iter()
        .zip(a.iter().zip(b))
        .map(|(pi, (ai, bi))| {
            let c = ai + t * (bi - ai);
            (pi - c) * (pi - c)
        })
        .sum()
}

/// Indices of a maximal subset of pairwise-distinct curves (separation
/// above `tol`), preferring earlier entries.
pub fn distinct_curves<S: HomotopySystem>(
    sys: &S,
    curves: &[BoundaryCurve],
    tol: f64,
) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        if kept
            .iter()
            .all(|&k| curve_separation(sys, &curves[k], c) > tol)
        {
            kept.push(i);
        }
    }
    kept
}
