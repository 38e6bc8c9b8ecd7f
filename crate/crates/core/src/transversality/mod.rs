//! Scalar transversality condition: smallest singular value of the system
//! Jacobian, its singular pair, and the gradient of that value.
//!
//! Boundary points are states where the Jacobian loses rank, i.e. where
//! g(x) = σ_min(J(x)) reaches zero. g is evaluated either by a dense SVD
//! (small systems) or by shifted inverse iteration on the normal equations,
//! which only ever resolves the bottom of the spectrum.
//!
//! The gradient uses the first-order perturbation identity
//! ∂σ_min/∂x_k = uᵀ (∂J/∂x_k) v. Because every residual row is quadratic in
//! the state, J is affine in x and the whole gradient collapses to two extra
//! Jacobian assemblies: ∇g = (J(v) − J(0))ᵀ u, where "J(y)" abuses the
//! assembler by feeding it the right singular vector as if it were a state.
//! The gradient is undefined when σ_min is (near-)multiple; callers get a
//! `DegenerateSigma` error and are expected to retreat and retry rather than
//! differentiate through a crossing.

use crate::pfsystem::{ParameterVector, PfSystem};
use crate::sparse::SparseMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;


/// Below this dimension `gsvd` uses a dense SVD outright.
pub const DEFAULT_DENSE_SVD_THRESHOLD: usize = 50;

/// Singular values closer than this count as a multiple singular value.
pub const GAP_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum TransversalityError {
    #[error(
        "inverse iteration did not converge after {restarts} restarts of {max_iterations} iterations"
    )]
    Convergence { restarts: usize, max_iterations: usize },
    #[error(
        "smallest singular value {sigma_min:.3e} is within {gap_tol:.1e} of the next ({sigma_next:.3e}); gradient undefined"
    )]
    DegenerateSigma { sigma_min: f64, sigma_next: f64, gap_tol: f64 },
}

/// Smallest singular value with its singular pair, plus the runner-up value
/// for multiplicity checks.
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    pub sigma_min: f64,
    pub sigma_next: f64,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl SingularTriplet {
    /// Distance to the next singular value.
    pub fn gap(&self) -> f64 {
        self.sigma_next - self.sigma_min
    }

    pub fn is_simple(&self, gap_tol: f64) -> bool {
        self.gap() > gap_tol
    }
}

#[derive(Debug, Clone)]
pub struct GsvdOptions {
    pub dense_threshold: usize,
    pub max_iterations: usize,
    pub restarts: usize,
    /// Relative stagnation tolerance on the Rayleigh quotient.
    pub tol: f64,
}

impl Default for GsvdOptions {
    fn default() -> Self {
        Self { dense_threshold: DEFAULT_DENSE_SVD_THRESHOLD, max_iterations: 300, restarts: 3, tol: 1e-13 }
    }
}

/// Smallest singular triplet of a square sparse matrix.
pub fn gsvd(jac: &SparseMatrix) -> Result<SingularTriplet, TransversalityError> {
    gsvd_with_opts(jac, &GsvdOptions::default())
}

pub fn gsvd_with_opts(
    jac: &SparseMatrix,
    opts: &GsvdOptions,
) -> Result<SingularTriplet, TransversalityError> {
    assert_eq!(jac.nrows(), jac.ncols(), "gsvd expects a square matrix");
    if jac.nrows() < opts.dense_threshold {
        Ok(gsvd_dense(jac))
    } else {
        gsvd_iterative(jac, opts)
    }
}

fn gsvd_dense(jac: &SparseMatrix) -> SingularTriplet {
    let dense = jac.to_dense();
    let svd = dense.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (mut k_min, mut k_next) = (0usize, usize::MAX);
    for k in 1..sv.len() {
        if sv[k] < sv[k_min] {
            k_next = k_min;
            k_min = k;
        } else if k_next == usize::MAX || sv[k] < sv[k_next] {
            k_next = k;
        }
    }
    let sigma_next = if k_next == usize::MAX { sv[k_min] } else { sv[k_next] };
    let u_mat = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut u: DVector<f64> = u_mat.column(k_min).into_owned();
    let mut v: DVector<f64> = v_t.row(k_min).transpose();
    fix_pair_signs(&mut u, &mut v);
    SingularTriplet { sigma_min: sv[k_min], sigma_next, u, v }
}

/// Flip (u, v) together so the largest-magnitude entry of v is positive.
/// This keeps uᵀJv = σ while making the pair deterministic along a trace.
fn fix_pair_signs(u: &mut DVector<f64>, v: &mut DVector<f64>) {
    if v[v.iamax()] < 0.0 {
        u.neg_mut();
        v.neg_mut();
    }
}

fn gsvd_iterative(
    jac: &SparseMatrix,
    opts: &GsvdOptions,
) -> Result<SingularTriplet, TransversalityError> {
    let n = jac.nrows();
    let gram = jac.gram();
    let scale = gram.amax();
    let chol = factor_shifted(&gram, scale)
        .ok_or(TransversalityError::Convergence { restarts: 0, max_iterations: 0 })?;
    let apply = |y: &DVector<f64>| jac.tr_mul_vec(&jac.mul_vec(y));

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut start = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut converged: Option<(DVector<f64>, f64)> = None;
    for _ in 0..opts.restarts {
        if let Some(vr) = smallest_eig(&chol, &apply, start.clone(), None, opts, scale) {
            converged = Some(vr);
            break;
        }
        start = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let norm = start.norm();
        start /= norm;
    }
    let Some((v0, rho0)) = converged else {
        return Err(TransversalityError::Convergence {
            restarts: opts.restarts,
            max_iterations: opts.max_iterations,
        });
    };
    let mut v = v0;
    if v[v.iamax()] < 0.0 {
        v.neg_mut();
    }
    let sigma_min = rho0.max(0.0).sqrt();

    // Runner-up value from the same factorization, deflated against v.
    let mut start2 = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    deflate(&mut start2, &v);
    let norm2 = start2.norm();
    if norm2 > 0.0 {
        start2 /= norm2;
    }
    let mut rho2 = None;
    for _ in 0..opts.restarts {
        if let Some((_, r)) = smallest_eig(&chol, &apply, start2.clone(), Some(&v), opts, scale) {
            rho2 = Some(r);
            break;
        }
        start2 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        deflate(&mut start2, &v);
        let norm = start2.norm();
        start2 /= norm;
    }
    let Some(rho2) = rho2 else {
        return Err(TransversalityError::Convergence {
            restarts: opts.restarts,
            max_iterations: opts.max_iterations,
        });
    };
    let sigma_next = rho2.max(0.0).sqrt().max(sigma_min);

    // Left vector: direct when sigma is resolvable, left inverse iteration
    // on J Jᵀ when the direct quotient would amplify rounding.
    let jv = jac.mul_vec(&v);
    let mut u = if sigma_min > 1e-8 * (scale.sqrt() + 1.0) {
        jv / sigma_min
    } else {
        let gram_t = jac.gram_transpose();
        let chol_t = factor_shifted(&gram_t, scale)
            .ok_or(TransversalityError::Convergence { restarts: 0, max_iterations: 0 })?;
        let apply_t = |y: &DVector<f64>| jac.mul_vec(&jac.tr_mul_vec(y));
        let seed = if jv.norm() > 1e-12 { jv.clone() / jv.norm() } else { start };
        let mut got = None;
        let mut s = seed;
        for _ in 0..opts.restarts {
            if let Some((w, _)) = smallest_eig(&chol_t, &apply_t, s.clone(), None, opts, scale) {
                got = Some(w);
                break;
            }
            s = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let norm = s.norm();
            s /= norm;
        }
        got.ok_or(TransversalityError::Convergence {
            restarts: opts.restarts,
            max_iterations: opts.max_iterations,
        })?
    };
    let pairing = u.dot(&jac.mul_vec(&v));
    if pairing < 0.0 || (pairing == 0.0 && u[u.iamax()] < 0.0) {
        u.neg_mut();
    }
    let norm_u = u.norm();
    if norm_u > 0.0 {
        u /= norm_u;
    }
    Ok(SingularTriplet { sigma_min, sigma_next, u, v })
}

/// Cholesky of A + μI, growing μ from a tiny Tikhonov shift until the
/// factorization succeeds.
fn factor_shifted(a: &DMatrix<f64>, scale: f64) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let mut mu = 1e-12 * (scale + 1.0);
    for _ in 0..6 {
        let mut shifted = a.clone();
        for i in 0..a.nrows() {
            shifted[(i, i)] += mu;
        }
        if let Some(c) = nalgebra::Cholesky::new(shifted) {
            return Some(c);
        }
        mu *= 100.0;
    }
    None
}

fn deflate(w: &mut DVector<f64>, against: &DVector<f64>) {
    let c = against.dot(w);
    w.axpy(-c, against, 1.0);
}

/// Inverse iteration for the smallest eigenpair of the SPD operator behind
/// `chol`, optionally deflated against a known eigenvector. Convergence is
/// declared on eigen-residual or Rayleigh stagnation (clustered spectra spin
/// inside their eigenspace without ever settling on one vector; the quotient
/// still converges quadratically).
fn smallest_eig(
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    apply: &impl Fn(&DVector<f64>) -> DVector<f64>,
    start: DVector<f64>,
    deflate_against: Option<&DVector<f64>>,
    opts: &GsvdOptions,
    scale: f64,
) -> Option<(DVector<f64>, f64)> {
    let mut v = start;
    let mut rho_prev = f64::INFINITY;
    let mut stagnant = 0;
    for _ in 0..opts.max_iterations {
        let mut w = chol.solve(&v);
        if let Some(d) = deflate_against {
            deflate(&mut w, d);
        }
        let norm = w.norm();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        v = w / norm;
        let av = apply(&v);
        let rho = v.dot(&av);
        let resid = (&av - &v * rho).norm();
        if resid <= 1e-11 * (scale + 1.0) {
            return Some((v, rho));
        }
        if (rho - rho_prev).abs() <= opts.tol * (rho.abs() + 1e-30) {
            stagnant += 1;
            if stagnant >= 2 {
                return Some((v, rho));
            }
        } else {
            stagnant = 0;
        }
        rho_prev = rho;
    }
    None
}

/// Realistic absolute accuracy of `gsvd_with_opts` near σ = 0. The dense
/// path resolves tiny singular values to machine precision; the normal
/// equations square the spectrum, so their floor is sqrt(machine epsilon)
/// times the matrix scale. Callers driving σ to zero should not demand more.
pub fn sigma_resolution(jac: &SparseMatrix, opts: &GsvdOptions) -> f64 {
    let scale = 1.0 + jac.amax();
    if jac.nrows() < opts.dense_threshold {
        f64::EPSILON * scale * jac.nrows().max(1) as f64
    } else {
        f64::EPSILON.sqrt() * scale * 8.0
    }
}

/// Gradient of σ_min for any assembler that is affine in its argument:
/// ∇g = (M(v) − M(0))ᵀ u. Exact, no differencing involved.
pub fn affine_singular_gradient(
    assemble: impl Fn(&DVector<f64>) -> SparseMatrix,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> DVector<f64> {
    let at_v = assemble(v);
    let at_zero = assemble(&DVector::zeros(v.len()));
    at_v.tr_mul_vec(u) - at_zero.tr_mul_vec(u)
}

/// Gradient of g(x) = σ_min(J(x)) with respect to the state and parameters.
#[derive(Debug, Clone)]
pub struct GsvdGradient {
    pub x: DVector<f64>,
    /// ∂g/∂λ is identically zero: λ only shifts the residual, never the
    /// Jacobian. Kept explicit so bordered systems can splice it in.
    pub lambda: DVector<f64>,
}

pub fn gsvd_gradient(
    sys: &PfSystem,
    lam: &ParameterVector,
    triplet: &SingularTriplet,
) -> Result<GsvdGradient, TransversalityError> {
    gsvd_gradient_with_tol(sys, lam, triplet, GAP_TOL)
}

pub fn gsvd_gradient_with_tol(
    sys: &PfSystem,
    lam: &ParameterVector,
    triplet: &SingularTriplet,
    gap_tol: f64,
) -> Result<GsvdGradient, TransversalityError> {
    if !triplet.is_simple(gap_tol) {
        return Err(TransversalityError::DegenerateSigma {
            sigma_min: triplet.sigma_min,
            sigma_next: triplet.sigma_next,
            gap_tol,
        });
    }
    let x = affine_singular_gradient(
        |y| sys.residual(y, lam).expect("assembly at vector state").jac,
        &triplet.u,
        &triplet.v,
    );
    Ok(GsvdGradient { x, lambda: DVector::zeros(lam.len()) })
}

/// Residual of the enlarged eigenpair formulation: [J·y; yᵀy − 1].
pub fn geig_system(jac: &SparseMatrix, y: &DVector<f64>) -> DVector<f64> {
    assert!(y.norm() > 0.0, "eigenvector candidate must be nonzero");
    let top = jac.mul_vec(y);
    let mut out = DVector::zeros(top.len() + 1);
    out.rows_mut(0, top.len()).copy_from(&top);
    out[top.len()] = y.dot(y) - 1.0;
    out
}
