use super::*;
use crate::netcase::load_case;
use crate::pfsystem::{Binding, InjectionQty};
use approx::assert_abs_diff_eq;

fn fixture(name: &str) -> String {
    format!("{}/../../cases/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn threebus_loaded() -> NetworkCase {
    let mut case = load_case(fixture("threebus.json"), None).expect("case loads");
    for bus in case.buses.iter_mut() {
        if bus.id == 3 {
            bus.p_load = 0.5;
            bus.q_load = 0.2;
        }
    }
    case.validate().expect("loaded variant is consistent");
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

fn circle_seed(x: f64, y: f64) -> SeedPoint {
    SeedPoint {
        z: DVector::from_vec(vec![x, y]),
        residual_norm: 0.0,
        sigma_min: 0.0,
        origin: SeedOrigin::TenrFromFlat,
        iterations: 0,
    }
}

fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_vec(v.to_vec())
}

// A curve with a self-crossing at the origin, where the curve Jacobian
// loses rank: H = z1^2 - z2^2.
struct SaddleCross;

impl HomotopySystem for SaddleCross {
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
        Ok(DVector::from_element(1, z[0] * z[0] - z[1] * z[1]))
    }
    fn residual_with_jacobian(
        &self,
        z: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>), TraceError> {
        let h = self.residual(z)?;
        let jh = DMatrix::from_row_slice(1, 2, &[2.0 * z[0], -2.0 * z[1]]);
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
// Tangent
// ---------------------------------------------------------------------------

#[test]
fn circle_tangent_is_unit_and_counterclockwise() {
    let sys = UnitCircle;
    // At (1, 0) the gradient is (2, 0); the positively oriented kernel
    // vector is (0, 1): det [[2, 0], [0, 1]] = 2 > 0.
    let t = tangent(&sys, &dvec(&[1.0, 0.0])).expect("regular point");
    assert_abs_diff_eq!(t.delta_z[0], 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(t.delta_z[1], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(t.delta_z.norm(), 1.0, epsilon = 1e-12);
    assert_eq!(t.orient_sign, 1.0);

    // At (0, 1) counterclockwise continues as (-1, 0).
    let t = tangent(&sys, &dvec(&[0.0, 1.0])).expect("regular point");
    assert_abs_diff_eq!(t.delta_z[0], -1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(t.delta_z[1], 0.0, epsilon = 1e-12);

    // The kernel certificate: gradient dot tangent vanishes.
    let (_, jh) = sys.residual_with_jacobian(&dvec(&[0.6, 0.8])).unwrap();
    let t = tangent(&sys, &dvec(&[0.6, 0.8])).unwrap();
    assert!((jh * &t.delta_z).amax() < 1e-12);
}

#[test]
fn continuity_flip_overrides_determinant_orientation() {
    let sys = UnitCircle;
    let z = dvec(&[1.0, 0.0]);
    let down = dvec(&[0.0, -1.0]);
    let t = tangent_continuing(&sys, &z, Some(&down)).expect("regular point");
    // Continuing a clockwise motion keeps pointing down even though the
    // determinant rule alone would pick (0, 1).
    assert_abs_diff_eq!(t.delta_z[1], -1.0, epsilon = 1e-12);
    assert_eq!(t.orient_sign, -1.0);
}

#[test]
fn rank_deficient_point_is_reported() {
    let err = tangent(&SaddleCross, &dvec(&[0.0, 0.0])).unwrap_err();
    match err {
        TraceError::RankDeficient { .. } => {}
        other => panic!("expected rank deficiency, got {other:?}"),
    }
}

// ---------------------------------------------------------------------------
// Predictor and corrector
// ---------------------------------------------------------------------------

#[test]
fn predictor_is_an_affine_step() {
    let t = TangentInfo {
        delta_z: dvec(&[0.0, 1.0]),
        orient_sign: 1.0,
    };
    let p = predict(&dvec(&[1.0, 0.0]), &t, 0.1);
    assert_abs_diff_eq!(p[0], 1.0, epsilon = 0.0);
    assert_abs_diff_eq!(p[1], 0.1, epsilon = 0.0);
}

#[test]
fn corrector_lands_on_the_chord_intersection() {
    // The sphere of radius 0.1 around (1, 0) meets the unit circle where
    // the chord length is 0.1: at angle theta = 2 asin(0.05).
    let sys = UnitCircle;
    let sphere = SphereConstraint::new(dvec(&[1.0, 0.0]), 0.1);
    let (z, iters) = correct(&sys, &sphere, &dvec(&[1.0, 0.1]), 1e-8, 30).expect("converges");
    let theta = 2.0 * (0.05f64).asin();
    assert_abs_diff_eq!(theta, 0.100_041_7, epsilon = 1e-7);
    assert_abs_diff_eq!(z[0], theta.cos(), epsilon = 1e-9);
    assert_abs_diff_eq!(z[1], theta.sin(), epsilon = 1e-9);
    // Closed form: cos(2 asin(r/2)) = 1 - r^2/2 exactly.
    assert_abs_diff_eq!(z[0], 0.995, epsilon = 1e-9);
    assert_abs_diff_eq!(z[1], 0.099875, epsilon = 1e-6);
    assert!(iters >= 1 && iters <= 10, "took {iters} iterations");
}

#[test]
fn corrector_accepts_an_on_curve_point_immediately() {
    let sys = UnitCircle;
    let theta = 2.0 * (0.05f64).asin();
    let exact = dvec(&[theta.cos(), theta.sin()]);
    let sphere = SphereConstraint::new(dvec(&[1.0, 0.0]), 0.1);
    let (z, iters) = correct(&sys, &sphere, &exact, 1e-8, 30).expect("fixed point");
    assert!(iters <= 1, "took {iters} iterations");
    assert!((z - exact).norm() < 1e-10);
}

#[test]
fn corrector_diverges_when_the_sphere_misses_the_curve() {
    // Every point of the unit circle is within distance 2 of (1, 0), so a
    // radius-3 sphere has no intersection to converge to.
    let sys = UnitCircle;
    let sphere = SphereConstraint::new(dvec(&[1.0, 0.0]), 3.0);
    let err = correct(&sys, &sphere, &dvec(&[1.0, 3.0]), 1e-8, 30).unwrap_err();
    match err {
        TraceError::CorrectorDiverged { .. } => {}
        other => panic!("expected corrector divergence, got {other:?}"),
    }
}

#[test]
fn reversion_detector_separates_the_two_sphere_intersections() {
    let sphere = SphereConstraint::new(dvec(&[1.0, 0.0]), 0.1);
    let theta = 2.0 * (0.05f64).asin();
    let forward = dvec(&[theta.cos(), theta.sin()]);
    let backward = dvec(&[theta.cos(), -theta.sin()]);
    // Walking counterclockwise, the previous point sits below the center.
    let z_prev = backward.clone();
    assert!(!detect_reversion(&z_prev, &forward, &sphere));
    assert!(detect_reversion(&z_prev, &backward, &sphere));

    // The half-space form dot(z_new - center, tangent) < 0 agrees.
    let tangent_here = dvec(&[0.0, 1.0]);
    for cand in [&forward, &backward] {
        let halfspace = (cand - &sphere.center).dot(&tangent_here) < 0.0;
        assert_eq!(halfspace, detect_reversion(&z_prev, cand, &sphere));
    }
}

// ---------------------------------------------------------------------------
// Curvature estimate and radius schedule
// ---------------------------------------------------------------------------

#[test]
fn straight_stretches_report_the_curvature_cap() {
    let t = dvec(&[0.0, 1.0]);
    assert_eq!(curvature_tau(&t, &t, 0.1, 1e3), 1e3);
}

#[test]
fn circle_tangents_recover_the_unit_curvature_radius() {
    // Tangents at two unit-circle points separated by a chord of 0.1.
    let theta = 2.0 * (0.05f64).asin();
    let t0 = dvec(&[0.0, 1.0]);
    let t1 = dvec(&[-theta.sin(), theta.cos()]);
    let tau = curvature_tau(&t0, &t1, 0.1, 1e3);
    assert!((tau - 1.0).abs() < 0.02, "tau = {tau}");
}

#[test]
fn right_angle_rotation_over_short_arc_reports_tight_curvature() {
    let t0 = dvec(&[0.0, 1.0]);
    let t1 = dvec(&[-1.0, 0.0]);
    let tau = curvature_tau(&t0, &t1, 0.1, 1e3);
    assert_abs_diff_eq!(tau, 0.1 / std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    assert_abs_diff_eq!(tau, 0.0637, epsilon = 1e-4);
}

#[test]
fn radius_schedule_matches_its_closed_form() {
    // Flat limit: r -> a_max.
    let policy = RadiusPolicy {
        a_max: 0.2,
        b_coeff: 0.1,
        r_min_floor: 1e-6,
        r_max_cap: 1.0,
        tau_cap: 1e3,
    };
    assert_abs_diff_eq!(adapt_radius(&policy, 1e3), 0.2, epsilon = 1e-12);
    // Zero-curvature-radius limit: r -> (a_max - b_coeff) / 2.
    assert_abs_diff_eq!(adapt_radius(&policy, 0.0), 0.05, epsilon = 1e-12);

    // Mid-range value against the direct formula.
    let policy = RadiusPolicy {
        a_max: 0.1,
        b_coeff: 0.05,
        r_min_floor: 1e-6,
        r_max_cap: 1.0,
        tau_cap: 1e3,
    };
    let e = std::f64::consts::E;
    let direct = (0.1 * e - 0.05 / e) / (e + 1.0 / e);
    let r = adapt_radius(&policy, 1.0);
    assert_abs_diff_eq!(r, direct, epsilon = 1e-12);
    assert_abs_diff_eq!(r, 0.08215, epsilon = 5e-5);
}

#[test]
fn radius_schedule_is_monotone_and_clamped() {
    let policy = RadiusPolicy::default();
    let mut last = 0.0;
    for i in 0..=1000 {
        let tau = i as f64 * 0.01;
        let r = adapt_radius(&policy, tau);
        assert!(r >= last, "schedule decreased at tau = {tau}");
        assert!(r >= policy.r_min_floor && r <= policy.r_max_cap);
        last = r;
    }
    assert_abs_diff_eq!(adapt_radius(&policy, 0.0), policy.r_min_floor, epsilon = 1e-15);
    assert_abs_diff_eq!(adapt_radius(&policy, 1e3), policy.r_max_cap, epsilon = 1e-12);
}

#[test]
fn fixed_policy_always_returns_its_radius() {
    let policy = RadiusPolicy::fixed(0.05);
    for tau in [0.0, 0.3, 1.0, 50.0, 1e3] {
        assert_abs_diff_eq!(adapt_radius(&policy, tau), 0.05, epsilon = 1e-15);
    }
}

// ---------------------------------------------------------------------------
// Tracing the circle fixture
// ---------------------------------------------------------------------------

fn assert_circle_invariants(curve: &BoundaryCurve, radial_tol: f64, spacing_tol: f64) {
    for (k, step) in curve.steps.iter().enumerate() {
        let radial = (step.z.norm() - 1.0).abs();
        assert!(radial < radial_tol, "step {k}: radial error {radial:.3e}");
        assert!(step.residual_inf < 1e-8);
        if k == 0 {
            continue;
        }
        let prevstep = &curve.steps[k - 1];
        let spacing = ((&step.z - &prevstep.z).norm() - step.radius_used).abs();
        assert!(spacing < spacing_tol, "step {k}: spacing error {spacing:.3e}");
        // No backtracking: each advance has a positive component along the
        // tangent it was predicted from, and tangents never reverse.
        assert!((&step.z - &prevstep.z).dot(&prevstep.tangent.delta_z) > 0.0);
        assert!(step.tangent.delta_z.dot(&prevstep.tangent.delta_z) > 0.0);
    }
}

#[test]
fn circle_trace_closes_into_a_loop() {
    let sys = UnitCircle;
    let policy = RadiusPolicy::default();
    let settings = TraceSettings {
        parameter_box: Some(vec![(-2.0, 2.0), (-2.0, 2.0)]),
        ..TraceSettings::default()
    };
    let curve = trace_curve(&sys, &circle_seed(1.0, 0.0), &policy, &settings).expect("traces");
    assert_eq!(curve.termination, Termination::ClosedLoop);
    assert_circle_invariants(&curve, 1e-8, 1e-7);

    // Arc coverage: the unwrapped angle sweep reaches all the way around,
    // short of at most the closing radius.
    let mut total = 0.0;
    for pair in curve.steps.windows(2) {
        let a = pair[0].z[1].atan2(pair[0].z[0]);
        let b = pair[1].z[1].atan2(pair[1].z[0]);
        let mut d = b - a;
        while d < -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        while d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        }
        total += d;
    }
    let last_r = curve.steps.last().unwrap().radius_used;
    assert!(
        total.abs() >= 2.0 * std::f64::consts::PI - last_r,
        "arc coverage {total:.4} with closing radius {last_r:.4}"
    );
    assert!(curve.steps.len() > 10);
}

#[test]
fn circle_trace_with_fixed_radius_spends_one_cycle_per_step() {
    let sys = UnitCircle;
    let policy = RadiusPolicy::fixed(0.1);
    let curve =
        trace_curve(&sys, &circle_seed(1.0, 0.0), &policy, &TraceSettings::default()).unwrap();
    assert_eq!(curve.termination, Termination::ClosedLoop);
    assert_circle_invariants(&curve, 1e-8, 1e-7);
    for step in &curve.steps[1..] {
        assert_abs_diff_eq!(step.radius_used, 0.1, epsilon = 0.0);
    }
    // A clean trace needs no retries: cycles == accepted predictor steps.
    assert_eq!(curve.total_cycles, curve.steps.len() - 1);
    // Chord 0.1 spans an angle of 2 asin(0.05); a full turn is about 63 steps.
    let expected = (2.0 * std::f64::consts::PI / (2.0 * (0.05f64).asin())).ceil() as usize;
    assert!(
        curve.steps.len() >= expected - 2 && curve.steps.len() <= expected + 2,
        "took {} steps, expected about {expected}",
        curve.steps.len()
    );
}

#[test]
fn parameter_box_stops_the_trace_at_the_wall() {
    let sys = UnitCircle;
    let policy = RadiusPolicy::fixed(0.1);
    let settings = TraceSettings {
        parameter_box: Some(vec![(-2.0, 2.0), (-2.0, 0.5)]),
        ..TraceSettings::default()
    };
    let curve = trace_curve(&sys, &circle_seed(1.0, 0.0), &policy, &settings).unwrap();
    assert_eq!(curve.termination, Termination::ParameterBox);
    // Counterclockwise from (1, 0), the wall z2 = 0.5 is hit at 30 degrees.
    let last = curve.steps.last().unwrap();
    assert!(last.z[1] > 0.5 && last.z[1] < 0.6);
    assert!(curve.steps.len() > 2);
    // Every step before the crossing one stayed inside.
    for step in &curve.steps[..curve.steps.len() - 1] {
        assert!(step.z[1] <= 0.5);
    }
}

#[test]
fn seed_outside_the_box_terminates_after_the_seed_step() {
    let sys = UnitCircle;
    let settings = TraceSettings {
        parameter_box: Some(vec![(2.0, 3.0), (2.0, 3.0)]),
        ..TraceSettings::default()
    };
    let curve = trace_curve(
        &sys,
        &circle_seed(1.0, 0.0),
        &RadiusPolicy::default(),
        &settings,
    )
    .unwrap();
    assert_eq!(curve.termination, Termination::ParameterBox);
    assert_eq!(curve.steps.len(), 1);
}

#[test]
fn trace_stalls_when_retries_cannot_rescue_the_corrector() {
    // A fixed radius of 3 never intersects the circle again, and with no
    // retry budget the halving rescue is unavailable.
    let sys = UnitCircle;
    let policy = RadiusPolicy::fixed(3.0);
    let settings = TraceSettings {
        max_retries: 0,
        ..TraceSettings::default()
    };
    let curve = trace_curve(&sys, &circle_seed(1.0, 0.0), &policy, &settings).unwrap();
    assert_eq!(curve.termination, Termination::Stalled);
    assert_eq!(curve.steps.len(), 1);
}

#[test]
fn max_steps_caps_the_trace() {
    let sys = UnitCircle;
    let settings = TraceSettings {
        max_steps: 5,
        ..TraceSettings::default()
    };
    let curve = trace_curve(
        &sys,
        &circle_seed(1.0, 0.0),
        &RadiusPolicy::fixed(0.1),
        &settings,
    )
    .unwrap();
    assert_eq!(curve.termination, Termination::MaxSteps);
    assert_eq!(curve.steps.len(), 5);
}

#[test]
fn distinct_curves_collapses_coincident_traces() {
    let sys = UnitCircle;
    let mk = |shift: f64| {
        let steps: Vec<TraceStep> = (0..8)
            .map(|i| {
                let a = i as f64 * std::f64::consts::FRAC_PI_4;
                TraceStep {
                    z: dvec(&[a.cos() + shift, a.sin()]),
                    tangent: TangentInfo {
                        delta_z: dvec(&[-a.sin(), a.cos()]),
                        orient_sign: 1.0,
                    },
                    radius_used: 0.1,
                    curvature_tau: 1.0,
                    flags: Vec::new(),
                    sigma_min: None,
                    residual_inf: 0.0,
                    corrector_iters: 1,
                }
            })
            .collect();
        BoundaryCurve {
            steps,
            termination: Termination::ClosedLoop,
            seed_origin: SeedOrigin::TenrFromFlat,
            total_cycles: 8,
        }
    };
    let curves = vec![mk(0.0), mk(0.0), mk(5.0)];
    assert!(curve_separation(&sys, &curves[0], &curves[1]) < 1e-12);
    assert!(curve_separation(&sys, &curves[0], &curves[2]) > 4.0);
    assert_eq!(distinct_curves(&sys, &curves, 1e-3), vec![0, 2]);
}

// ---------------------------------------------------------------------------
// Tracing the voltage-feasibility boundary of the loaded 3-bus network
// ---------------------------------------------------------------------------

fn feasibility_systems(
    template: ParameterVector,
    seed_free: usize,
    free_pair: [usize; 2],
) -> (BoundarySystem, BoundarySystem) {
    let case = threebus_loaded();
    let seed_sys = BoundarySystem::new(
        &case,
        LimitRows::Include,
        template.clone(),
        vec![seed_free],
        TransversalityKind::Svd,
    )
    .unwrap();
    let trace_sys = BoundarySystem::new(
        &case,
        LimitRows::Include,
        template,
        free_pair.to_vec(),
        TransversalityKind::Svd,
    )
    .unwrap();
    (seed_sys, trace_sys)
}

fn assert_trace_invariants(sys: &BoundarySystem, curve: &BoundaryCurve) {
    for (k, step) in curve.steps.iter().enumerate() {
        assert!(
            step.residual_inf < 1e-8,
            "step {k}: residual {:.3e}",
            step.residual_inf
        );
        let sigma = step.sigma_min.expect("power-flow traces audit sigma");
        assert!(sigma < 1e-6, "step {k}: sigma {sigma:.3e}");
        // The audited values must reproduce from scratch.
        let x = step.z.rows(0, sys.n()).into_owned();
        let lam = sys.lambda_of(&step.z);
        let rep = sys.pf().residual(&x, &lam).unwrap();
        let trip = crate::transversality::gsvd(&rep.jac).unwrap();
        assert!(rep.norm_inf < 1e-8);
        assert!(trip.sigma_min < 1e-6);
        if k == 0 {
            continue;
        }
        let prev = &curve.steps[k - 1];
        let spacing = ((&step.z - &prev.z).norm() - step.radius_used).abs();
        assert!(spacing < 1e-7, "step {k}: spacing error {spacing:.3e}");
        assert!((&step.z - &prev.z).dot(&prev.tangent.delta_z) > 0.0);
        assert!(step.tangent.delta_z.dot(&prev.tangent.delta_z) > 0.0);
    }
}

fn lambda_range(sys: &BoundarySystem, curve: &BoundaryCurve, which: usize) -> (f64, f64) {
    let off = sys.lambda_offset();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for step in &curve.steps {
        lo = lo.min(step.z[off + which]);
        hi = hi.max(step.z[off + which]);
    }
    (lo, hi)
}

#[test]
fn threebus_tangent_matches_a_corrected_secant() {
    let (seed_sys, trace_sys) =
        feasibility_systems(plane_params(0.02, 0.0, 0.02), 1, [1, 2]);
    let seeds = find_seeds(&seed_sys, &SeedSettings::default()).unwrap();
    let lifted = trace_sys.lift_seed(&seeds[0], 1).unwrap();
    let t = tangent(&trace_sys, &lifted.z).unwrap();

    // Correct one small step forward and one backward; their secant is a
    // second-order-accurate direction through the seed.
    let r = 1e-3;
    let sphere = SphereConstraint::new(lifted.z.clone(), r);
    let fwd = predict(&lifted.z, &t, r);
    let mut back_t = t.clone();
    back_t.delta_z.neg_mut();
    let bwd = predict(&lifted.z, &back_t, r);
    let (zf, _) = correct(&trace_sys, &sphere, &fwd, 1e-10, 30).unwrap();
    let (zb, _) = correct(&trace_sys, &sphere, &bwd, 1e-10, 30).unwrap();
    let secant = (&zf - &zb).normalize();
    assert!(
        (&t.delta_z - &secant).norm() < 1e-3,
        "tangent-secant gap {:.3e}",
        (&t.delta_z - &secant).norm()
    );
}

#[test]
fn feasibility_boundary_closes_into_one_loop() {
    let (seed_sys, trace_sys) =
        feasibility_systems(plane_params(0.02, 0.0, 0.02), 1, [0, 1]);
    let seeds = find_seeds(&seed_sys, &SeedSettings::default()).unwrap();
    assert_eq!(seeds.len(), 2);
    assert_abs_diff_eq!(seeds[0].z[seeds[0].z.len() - 1], -0.7885, epsilon = 2e-3);
    assert_abs_diff_eq!(seeds[1].z[seeds[1].z.len() - 1], 0.7809, epsilon = 2e-3);

    let settings = TraceSettings {
        parameter_box: Some(vec![(-4.0, 4.0), (-4.0, 4.0)]),
        ..TraceSettings::default()
    };
    let mut curves = Vec::new();
    for seed in &seeds {
        let lifted = trace_sys.lift_seed(seed, 1).unwrap();
        let curve =
            trace_curve(&trace_sys, &lifted, &RadiusPolicy::default(), &settings).unwrap();
        assert_eq!(curve.termination, Termination::ClosedLoop);
        assert_trace_invariants(&trace_sys, &curve);
        assert!(curve.steps.len() >= 40 && curve.steps.len() <= 80);
        // A clean loop needs no retries.
        assert_eq!(curve.total_cycles, curve.steps.len() - 1);
        curves.push(curve);
    }
    // Both seeds land on the same loop of the active-power plane, with the
    // frozen extents in each freed parameter.
    assert_eq!(distinct_curves(&trace_sys, &curves, 0.02), vec![0]);
    let (p2_lo, p2_hi) = lambda_range(&trace_sys, &curves[0], 0);
    let (p3_lo, p3_hi) = lambda_range(&trace_sys, &curves[0], 1);
    assert_abs_diff_eq!(p2_lo, -1.300, epsilon = 5e-3);
    assert_abs_diff_eq!(p2_hi, 1.300, epsilon = 5e-3);
    assert_abs_diff_eq!(p3_lo, -0.824, epsilon = 5e-3);
    assert_abs_diff_eq!(p3_hi, 0.824, epsilon = 5e-3);
}

#[test]
fn reactive_plane_holds_two_distinct_loops() {
    let (seed_sys, trace_sys) =
        feasibility_systems(plane_params(0.02, 0.0, 0.40), 1, [1, 2]);
    let seeds = find_seeds(&seed_sys, &SeedSettings::default()).unwrap();
    assert_eq!(seeds.len(), 4);

    let settings = TraceSettings {
        parameter_box: Some(vec![(-4.0, 4.0), (-4.0, 4.0)]),
        ..TraceSettings::default()
    };
    let mut curves = Vec::new();
    for seed in &seeds {
        let lifted = trace_sys.lift_seed(seed, 1).unwrap();
        let curve =
            trace_curve(&trace_sys, &lifted, &RadiusPolicy::default(), &settings).unwrap();
        assert_eq!(curve.termination, Termination::ClosedLoop);
        assert_trace_invariants(&trace_sys, &curve);
        curves.push(curve);
    }
    let distinct = distinct_curves(&trace_sys, &curves, 0.02);
    assert_eq!(distinct.len(), 2, "kept {distinct:?}");

    // The outer loop dips below zero reactive injection; the second sheet
    // stays above it and reaches further in active power.
    let (a_p_lo, a_p_hi) = lambda_range(&trace_sys, &curves[distinct[0]], 0);
    let (a_q_lo, a_q_hi) = lambda_range(&trace_sys, &curves[distinct[0]], 1);
    let (b_p_lo, b_p_hi) = lambda_range(&trace_sys, &curves[distinct[1]], 0);
    let (b_q_lo, b_q_hi) = lambda_range(&trace_sys, &curves[distinct[1]], 1);
    assert_abs_diff_eq!(a_p_lo, -1.63, epsilon = 2e-2);
    assert_abs_diff_eq!(a_p_hi, 1.61, epsilon = 2e-2);
    assert_abs_diff_eq!(a_q_lo, -0.18, epsilon = 2e-2);
    assert_abs_diff_eq!(a_q_hi, 3.42, epsilon = 2e-2);
    assert_abs_diff_eq!(b_p_lo, -1.90, epsilon = 2e-2);
    assert_abs_diff_eq!(b_p_hi, 1.88, epsilon = 2e-2);
    assert_abs_diff_eq!(b_q_lo, 0.22, epsilon = 2e-2);
    assert_abs_diff_eq!(b_q_hi, 3.05, epsilon = 2e-2);
}

#[test]
fn eig_kind_traces_with_the_same_invariants() {
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
        template,
        vec![1, 2],
        TransversalityKind::Eig,
    )
    .unwrap();
    let seeds = find_seeds(&seed_sys, &SeedSettings::default()).unwrap();
    let lifted = trace_sys.lift_seed(&seeds[0], 1).unwrap();
    assert!(lifted.residual_norm < 1e-6, "lifted residual {:.3e}", lifted.residual_norm);

    let settings = TraceSettings {
        max_steps: 15,
        ..TraceSettings::default()
    };
    let curve =
        trace_curve(&trace_sys, &lifted, &RadiusPolicy::default(), &settings).unwrap();
    assert_eq!(curve.termination, Termination::MaxSteps);
    assert_eq!(curve.steps.len(), 15);
    for (k, step) in curve.steps.iter().enumerate() {
        assert!(step.residual_inf < 1e-8, "step {k}: {:.3e}", step.residual_inf);
        assert!(step.sigma_min.unwrap() < 1e-6);
    }
}

#[test]
fn sweep_traces_each_value_and_records_empty_lines() {
    let case = threebus_loaded();
    let settings = TraceSettings {
        parameter_box: Some(vec![(-4.0, 4.0), (-4.0, 4.0)]),
        ..TraceSettings::default()
    };
    let families = sweep_contours(
        &case,
        LimitRows::Include,
        TransversalityKind::Svd,
        &plane_params(0.02, 0.0, 0.0),
        [1, 0],
        2,
        &[0.4, -0.4],
        &SeedSettings::default(),
        &RadiusPolicy::default(),
        &settings,
    )
    .unwrap();
    assert_eq!(families.len(), 2);

    assert_eq!(families[0].value, 0.4);
    assert!(families[0].seed_failure.is_none());
    assert_eq!(families[0].curves.len(), 4);
    for curve in &families[0].curves {
        assert_eq!(curve.termination, Termination::ClosedLoop);
    }

    assert_eq!(families[1].value, -0.4);
    assert!(families[1].curves.is_empty());
    let msg = families[1].seed_failure.as_ref().expect("line has no boundary");
    assert!(msg.contains("no seed converged"), "message: {msg}");
}

#[test]
fn lifting_a_seed_preserves_the_state_and_refreshes_diagnostics() {
    let (seed_sys, trace_sys) =
        feasibility_systems(plane_params(0.02, 0.0, 0.02), 1, [1, 2]);
    let seeds = find_seeds(&seed_sys, &SeedSettings::default()).unwrap();
    let seed = &seeds[0];
    let lifted = trace_sys.lift_seed(seed, 1).unwrap();

    assert_eq!(lifted.z.len(), trace_sys.nvar());
    // State part carries over bit for bit.
    for i in 0..trace_sys.n() {
        assert_eq!(lifted.z[i], seed.z[i]);
    }
    // Freed entries: the seeded one keeps its value, the other takes the
    // template's.
    let off = trace_sys.lambda_offset();
    assert_eq!(lifted.z[off], seed.z[seed.z.len() - 1]);
    assert_eq!(lifted.z[off + 1], 0.02);
    // Holding the extra parameter at its template value, the lifted point
    // is the same boundary point.
    assert!(lifted.residual_norm < 1e-8);
    assert!(lifted.sigma_min < 1e-6);

    // Lifting into a system that does not free the seeded parameter is an
    // error.
    let err = trace_sys.lift_seed(seed, 0).unwrap_err();
    assert!(matches!(err, BoundaryError::BadFreeParams(_)));
}
