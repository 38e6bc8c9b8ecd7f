//! Scratch probe: ASCII maps of the 3-bus feasibility/solvability regions.

use feasbound::{
    find_seeds, pf_solve, tenr_solve, Binding, BoundarySystem, InjectionQty, LimitRows,
    ParameterVector, PfSolveSettings, PfSystem, SeedSettings, TenrSettings, TransversalityKind,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(p2: f64, p3: f64, q3: f64) -> ParameterVector {
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

/// Multistart PF solve; returns all distinct solutions' |V3|.
fn solutions(sys: &PfSystem, lam: &ParameterVector) -> Vec<f64> {
    let settings = PfSolveSettings::default();
    let flat = sys.flat_start();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut found: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut starts: Vec<DVector<f64>> = vec![flat.clone(), &flat * 0.7, &flat * 0.4];
    for _ in 0..9 {
        let mut x = flat.clone();
        for v in x.iter_mut() {
            *v += rng.gen_range(-0.4..0.4);
        }
        starts.push(x);
    }
    for x0 in &starts {
        if let Ok(x) = pf_solve(sys, x0, lam, &settings) {
            if found.iter().all(|(y, _)| (&x - y).amax() > 1e-6) {
                // |V3|: bus 3 slot
                let k = sys.layout().var_of_bus(2).unwrap();
                let v3 = (x[k] * x[k] + x[k + 1] * x[k + 1]).sqrt();
                found.push((x, v3));
            }
        }
    }
    found.into_iter().map(|(_, v)| v).collect()
}

fn classify(sys: &PfSystem, lam: &ParameterVector) -> char {
    let sols = solutions(sys, lam);
    if sols.is_empty() {
        return '.'; // unsolvable
    }
    if sols.iter().any(|&v| (0.9..=1.1).contains(&v)) {
        '#' // feasible
    } else {
        'o' // solvable, all out of band
    }
}

fn map_plane(sys: &PfSystem, fixed_name: &str, fixed: f64, axes: (usize, usize)) {
    println!("\n=== plane {} = {fixed}; x-axis=param{}, y-axis=param{} ===", fixed_name, axes.0, axes.1);
    let lo = -1.2f64;
    let hi = 1.2f64;
    let step = 0.05f64;
    let n = ((hi - lo) / step).round() as usize + 1;
    for iy in (0..n).rev() {
        let y = lo + iy as f64 * step;
        let mut row = String::new();
        for ix in 0..n {
            let x = lo + ix as f64 * step;
            let mut vals = [0.0; 3];
            vals[axes.0] = x;
            vals[axes.1] = y;
            let fix_idx = 3 - axes.0 - axes.1;
            vals[fix_idx] = fixed;
            let lam = params(vals[0], vals[1], vals[2]);
            row.push(classify(sys, &lam));
        }
        println!("{y:6.2} {row}");
    }
    let mut ticks = String::new();
    for ix in 0..n {
        let x = lo + ix as f64 * step;
        ticks.push(if (x.abs() < 1e-9) || ((x - 1.0).abs() < 1e-9) || ((x + 1.0).abs() < 1e-9) { '|' } else { ' ' });
    }
    println!("       {ticks}   (| at -1, 0, 1)");
}

/// Poor-man's curve sketch: seeds (free P3) per template Q3 line.
fn sweep_seed_lines(case: &feasbound::NetworkCase) {
    println!("\n=== seed sweep: free P3, fixed P2=0.02, templates over Q3 ===");
    for iq in -12..=30 {
        let q3 = iq as f64 * 0.05;
        let bsys = BoundarySystem::new(
            case,
            LimitRows::Include,
            params(0.02, 0.0, q3),
            vec![1],
            TransversalityKind::Svd,
        )
        .unwrap();
        let mut settings = SeedSettings::default();
        settings.n_restarts = 48;
        match find_seeds(&bsys, &settings) {
            Ok(seeds) => {
                let off = bsys.lambda_offset();
                let mut pts: Vec<f64> = seeds.iter().map(|s| s.z[off]).collect();
                pts.sort_by(f64::total_cmp);
                println!(
                    "Q3={q3:5.2}: P3 = {:?}",
                    pts.iter().map(|p| (p * 1e3).round() / 1e3).collect::<Vec<_>>()
                );
            }
            Err(e) => println!("Q3={q3:5.2}: ERROR {e}"),
        }
    }
}

fn fd_check_jh(bsys: &BoundarySystem, z: &DVector<f64>, tag: &str) {
    let (_, jh) = bsys.eval_with_jacobian(z).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut worst_rc = (0, 0);
    for c in 0..z.len() {
        let mut zp = z.clone();
        zp[c] += h;
        let mut zm = z.clone();
        zm[c] -= h;
        let hp = bsys.eval(&zp).unwrap().h;
        let hm = bsys.eval(&zm).unwrap().h;
        for r in 0..hp.len() {
            let fd = (hp[r] - hm[r]) / (2.0 * h);
            let an = jh[(r, c)];
            let scale = an.abs().max(fd.abs()).max(1.0);
            let rel = (an - fd).abs() / scale;
            if rel > worst {
                worst = rel;
                worst_rc = (r, c);
            }
        }
    }
    println!("FD check jh [{tag}]: worst rel err {:.3e} at {:?}", worst, worst_rc);
}

fn trace_newton(bsys: &BoundarySystem, z0: &DVector<f64>) {
    let mut z = z0.clone();
    let off = bsys.lambda_offset();
    for it in 0..12 {
        let (eval, jh) = bsys.eval_with_jacobian(&z).unwrap();
        let delta = match jh.clone().lu().solve(&(-&eval.h)) {
            Some(d) => d,
            None => {
                println!("  it{it}: LU singular");
                return;
            }
        };
        println!(
            "  it{it}: |H|={:.4e} sigma={:.4e} |F|={:.4e} lam={:.5} |dz|={:.3e} dlam={:+.4}",
            eval.h.amax(),
            eval.sigma_min.unwrap_or(-1.0),
            eval.residual_inf,
            z[off],
            delta.amax(),
            delta[off]
        );
        let phi0 = eval.h.norm_squared();
        let mut picked = None;
        let mut t = 1.0f64;
        while t >= 1.0 / 64.0 {
            let cand = &z + &delta * t;
            let ce = bsys.eval(&cand).unwrap();
            let ok = ce.h.norm_squared() <= (1.0 - 1e-4 * t) * phi0;
            println!(
                "      t={t:7.4}: |H|2={:.5e} (phi0={:.5e}) sigma={:.4e} |F|={:.4e} {}",
                ce.h.norm_squared(),
                phi0,
                ce.sigma_min.unwrap_or(-1.0),
                ce.residual_inf,
                if ok { "ACCEPT" } else { "reject" }
            );
            if ok {
                picked = Some(cand);
                break;
            }
            t *= 0.5;
        }
        match picked {
            Some(c) => z = c,
            None => {
                println!("  it{it}: line search failed");
                return;
            }
        }
    }
}

/// Bisection oracles for the loaded variant under uniform scaling.
fn loadability(case: &feasbound::NetworkCase) {
    let mut loaded = case.clone();
    for b in loaded.buses.iter_mut() {
        if b.id == 3 {
            b.p_load = 0.5;
            b.q_load = 0.2;
        }
    }
    loaded.validate().unwrap();
    let sys = PfSystem::new(&loaded, LimitRows::Exclude).unwrap();
    let settings = PfSolveSettings::default();

    // In-band solution from flat exists at lam?
    let in_band = |lam_v: f64| -> Option<f64> {
        let lam = ParameterVector::uniform(lam_v);
        let x = pf_solve(&sys, &sys.flat_start(), &lam, &settings).ok()?;
        let k = sys.layout().var_of_bus(2).unwrap();
        Some((x[k] * x[k] + x[k + 1] * x[k + 1]).sqrt())
    };
    // Bisect the lower voltage-band crossing |V3| = 0.9.
    let (mut lo, mut hi) = (0.0f64, 4.0f64);
    assert!(in_band(lo).unwrap() > 0.9);
    while in_band(hi).map_or(false, |v| v > 0.9) {
        hi += 1.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        match in_band(mid) {
            Some(v) if v > 0.9 => lo = mid,
            _ => hi = mid,
        }
    }
    println!("uniform-scaling |V3|=0.9 crossing: lambda = {:.12}", 0.5 * (lo + hi));

    // Bisect the solvability nose (continuation: warm-start from previous).
    let (mut lo, mut hi) = (0.0f64, 8.0f64);
    let mut x_warm = sys.flat_start();
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let lam = ParameterVector::uniform(mid);
        match pf_solve(&sys, &x_warm, &lam, &settings) {
            Ok(x) => {
                lo = mid;
                x_warm = x;
            }
            Err(_) => hi = mid,
        }
    }
    println!("uniform-scaling nose (warm-started): lambda = {:.12}", 0.5 * (lo + hi));

    // TENR from flat on the loaded case, uniform lam free, both limit modes.
    for (tag, lim) in [("include", LimitRows::Include), ("exclude", LimitRows::Exclude)] {
        let bsys = BoundarySystem::new(
            &loaded,
            lim,
            ParameterVector::uniform(1.0),
            vec![0],
            TransversalityKind::Svd,
        )
        .unwrap();
        let z0 = bsys.initial_point(&bsys.pf().flat_start()).unwrap();
        match tenr_solve(&bsys, &z0, &TenrSettings::default()) {
            Ok(seed) => println!(
                "tenr loaded [{tag}]: lambda={:.12} iters={} sigma={:.2e} res={:.2e}",
                seed.z[bsys.lambda_offset()],
                seed.iterations,
                seed.sigma_min,
                seed.residual_norm
            ),
            Err(e) => println!("tenr loaded [{tag}]: ERROR {e}"),
        }
    }

    // Diagnose the exclude path from flat.
    let bsys = BoundarySystem::new(
        &loaded,
        LimitRows::Exclude,
        ParameterVector::uniform(1.0),
        vec![0],
        TransversalityKind::Svd,
    )
    .unwrap();
    let z0 = bsys.initial_point(&bsys.pf().flat_start()).unwrap();
    println!("--- newton trace, loaded exclude from flat ---");
    trace_newton(&bsys, &z0);

    // And from a pre-solved PF state at lam=1.
    let lam1 = ParameterVector::uniform(1.0);
    let x1 = pf_solve(bsys.pf(), &bsys.pf().flat_start(), &lam1, &settings).unwrap();
    let z1 = bsys.initial_point(&x1).unwrap();
    println!("--- newton trace, loaded exclude from solved lam=1 ---");
    trace_newton(&bsys, &z1);
}

fn loaded_variant(case: &feasbound::NetworkCase) -> feasbound::NetworkCase {
    let mut loaded = case.clone();
    for b in loaded.buses.iter_mut() {
        if b.id == 3 {
            b.p_load = 0.5;
            b.q_load = 0.2;
        }
    }
    loaded.validate().unwrap();
    loaded
}

fn misc_probes(case: &feasbound::NetworkCase) {
    let loaded = loaded_variant(case);

    // Where does |V3| exit the band on the negative-lambda side?
    let sys = PfSystem::new(&loaded, LimitRows::Exclude).unwrap();
    let settings = PfSolveSettings::default();
    for lam_v in [-0.1, -0.5, -1.0, -2.0, -3.0, -5.0] {
        let lam = ParameterVector::uniform(lam_v);
        match pf_solve(&sys, &sys.flat_start(), &lam, &settings) {
            Ok(x) => {
                let k = sys.layout().var_of_bus(2).unwrap();
                let v3 = (x[k] * x[k] + x[k + 1] * x[k + 1]).sqrt();
                println!("lam={lam_v:5.1}: |V3| = {v3:.4}");
            }
            Err(e) => println!("lam={lam_v:5.1}: PF failed: {e}"),
        }
    }

    // Bracket strictly inside the feasible region -> expected NoConvergence.
    let bsys = BoundarySystem::new(
        &loaded,
        LimitRows::Include,
        ParameterVector::uniform(0.1),
        vec![0],
        TransversalityKind::Svd,
    )
    .unwrap();
    let z0 = bsys.initial_point(&bsys.pf().flat_start()).unwrap();
    let mut ts = TenrSettings::default();
    ts.bracket = Some((0.0, 0.2));
    match tenr_solve(&bsys, &z0, &ts) {
        Ok(s) => println!("bracketed-interior: UNEXPECTED seed lam={}", s.z[bsys.lambda_offset()]),
        Err(e) => println!("bracketed-interior: {e:?}"),
    }

    // Bracket containing the crossing: converges and stays inside.
    let mut ts2 = TenrSettings::default();
    ts2.bracket = Some((0.5, 0.8));
    match tenr_solve(&bsys, &z0, &ts2) {
        Ok(s) => println!(
            "bracketed-crossing: lam={:.10} iters={}",
            s.z[bsys.lambda_offset()],
            s.iterations
        ),
        Err(e) => println!("bracketed-crossing: ERROR {e:?}"),
    }

    // Eig-kind seeded from an Svd seed.
    let svd_sys = BoundarySystem::new(
        &loaded,
        LimitRows::Include,
        ParameterVector::uniform(1.0),
        vec![0],
        TransversalityKind::Svd,
    )
    .unwrap();
    let z0 = svd_sys.initial_point(&svd_sys.pf().flat_start()).unwrap();
    let seed = tenr_solve(&svd_sys, &z0, &TenrSettings::default()).unwrap();
    let eig_sys = BoundarySystem::new(
        &loaded,
        LimitRows::Include,
        ParameterVector::uniform(seed.z[svd_sys.lambda_offset()]),
        vec![0],
        TransversalityKind::Eig,
    )
    .unwrap();
    let x_seed = seed.z.rows(0, svd_sys.n()).into_owned();
    let ze = eig_sys.initial_point(&x_seed).unwrap();
    let he = eig_sys.eval(&ze).unwrap();
    println!("eig at svd seed: |H|inf = {:.3e}", he.h.amax());
    match tenr_solve(&eig_sys, &ze, &TenrSettings::default()) {
        Ok(s) => println!(
            "eig tenr: lam={:.12} iters={} (svd lam={:.12})",
            s.z[eig_sys.lambda_offset()],
            s.iterations,
            seed.z[svd_sys.lambda_offset()]
        ),
        Err(e) => println!("eig tenr: ERROR {e:?}"),
    }
}

/// Trace every seed of a plane and report curve shapes.
fn trace_plane(case: &feasbound::NetworkCase, label: &str, template: ParameterVector,
               seed_free: usize, free_pair: [usize; 2], limits: LimitRows) {
    use feasbound::{distinct_curves, trace_curve, RadiusPolicy, TraceSettings};
    let t0 = std::time::Instant::now();
    let seed_sys = BoundarySystem::new(case, limits, template.clone(), vec![seed_free],
                                       TransversalityKind::Svd).unwrap();
    let trace_sys = BoundarySystem::new(case, limits, template, free_pair.to_vec(),
                                        TransversalityKind::Svd).unwrap();
    let seeds = match find_seeds(&seed_sys, &SeedSettings::default()) {
        Ok(s) => s,
        Err(e) => { println!("[{label}] seeding failed: {e}"); return; }
    };
    println!("[{label}] {} seeds", seeds.len());
    let policy = RadiusPolicy::default();
    let settings = TraceSettings {
        parameter_box: Some(vec![(-4.0, 4.0), (-4.0, 4.0)]),
        ..TraceSettings::default()
    };
    let mut curves = Vec::new();
    for (i, seed) in seeds.iter().enumerate() {
        let lifted = trace_sys.lift_seed(seed, seed_free).unwrap();
        match trace_curve(&trace_sys, &lifted, &policy, &settings) {
            Ok(c) => {
                let off = trace_sys.lambda_offset();
                let l1: Vec<f64> = c.steps.iter().map(|s| s.z[off]).collect();
                let l2: Vec<f64> = c.steps.iter().map(|s| s.z[off + 1]).collect();
                let min1 = l1.iter().cloned().fold(f64::INFINITY, f64::min);
                let max1 = l1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min2 = l2.iter().cloned().fold(f64::INFINITY, f64::min);
                let max2 = l2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let worst_res = c.steps.iter().map(|s| s.residual_inf).fold(0.0, f64::max);
                let worst_sig = c.steps.iter().filter_map(|s| s.sigma_min).fold(0.0, f64::max);
                let retries = c.total_cycles - (c.steps.len() - 1);
                println!(
                    "  seed {i}: seedλ={:+.4} → {:?} steps={} cycles={} retries={retries} \
                     λ1∈[{min1:+.3},{max1:+.3}] λ2∈[{min2:+.3},{max2:+.3}] res≤{worst_res:.1e} σ≤{worst_sig:.1e}",
                    seed.z[seed.z.len() - 1], c.termination, c.steps.len(), c.total_cycles,
                );
                curves.push(c);
            }
            Err(e) => println!("  seed {i}: trace error {e}"),
        }
    }
    let distinct = distinct_curves(&trace_sys, &curves, 0.05);
    println!("  distinct curves (tol 0.05): {distinct:?}  [{:.2?}]", t0.elapsed());
}

fn main() {
    let case = feasbound::load_case("cases/threebus.json", None).unwrap();
    let sys = PfSystem::new(&case, LimitRows::Exclude).unwrap();
    let mode = std::env::args().nth(1).unwrap_or_else(|| "all".into());

    if mode == "classify" {
        use feasbound::{classify_point, scan, ScanGrid};
        let mut loaded = case.clone();
        for b in loaded.buses.iter_mut() {
            if b.id == 3 { b.p_load = 0.5; b.q_load = 0.2; }
        }
        loaded.validate().unwrap();
        let grid = ScanGrid::new([0, 1], (-2.0, 2.0), 0.5, (-2.0, 2.0), 0.5,
                                 params(0.0, 0.0, 0.02)).unwrap();
        let psys = PfSystem::new(&loaded, LimitRows::Exclude).unwrap();
        for p3 in [0.7, 0.8, 0.824, 0.85, 0.9, 1.0, 1.1, 1.3, 1.5, 1.7, 2.0, -0.9, -1.0, -1.2] {
            let cell = classify_point(&loaded, &psys, [0.02, p3], &grid);
            println!("P3={p3:+.3} -> {:?} ({} iters)", cell.class, cell.pf_iters);
        }
        // Coarse map of the loaded plane for orientation.
        let grid2 = ScanGrid::new([0, 1], (-2.0, 2.0), 0.1, (-1.6, 1.6), 0.1,
                                  params(0.0, 0.0, 0.02)).unwrap();
        let cells = scan(&loaded, &grid2).unwrap();
        let n2 = grid2.axis_points(1);
        for j in (0..n2).rev() {
            let mut row = String::new();
            for i in 0..grid2.axis_points(0) {
                row.push(match cells[i * n2 + j].class {
                    feasbound::RegionClass::Feasible => '#',
                    feasbound::RegionClass::SolvableOnly => 'o',
                    feasbound::RegionClass::Unsolvable => '.',
                });
            }
            println!("P3={:+.1} {row}", grid2.lambda_at(0, j)[1]);
        }
        return;
    }

    if mode == "sweep2" {
        use feasbound::{sweep_contours, RadiusPolicy, TraceSettings};
        let settings = TraceSettings {
            parameter_box: Some(vec![(-4.0, 4.0), (-4.0, 4.0)]),
            ..TraceSettings::default()
        };
        let fams = sweep_contours(
            &case, LimitRows::Include, TransversalityKind::Svd,
            &params(0.02, 0.0, 0.0), [1, 0], 2, &[0.4, -0.4],
            &SeedSettings::default(), &RadiusPolicy::default(), &settings,
        ).unwrap();
        for fam in &fams {
            println!("value {:+.2}: {} curves, failure {:?}", fam.value, fam.curves.len(), fam.seed_failure);
            for (i, c) in fam.curves.iter().enumerate() {
                println!("  curve {i}: {:?} steps={} cycles={}", c.termination, c.steps.len(), c.total_cycles);
            }
        }
        return;
    }

    if mode == "trace" {
        // Criterion 2 plane: P3-Q3 at P2 = 0.02, seeds free P3 along Q3 = 0.02.
        trace_plane(&case, "beta34 P3,Q3 @P2=0.02 seedline Q3=0.02",
                    params(0.02, 0.0, 0.02), 1, [1, 2], LimitRows::Include);
        // Same plane, seed line at Q3 = 0.4 where four crossings are frozen.
        trace_plane(&case, "beta34 P3,Q3 @P2=0.02 seedline Q3=0.40",
                    params(0.02, 0.0, 0.40), 1, [1, 2], LimitRows::Include);
        // Criterion 1 plane: P2-P3 at Q3 = 0.02, seeds free P3 at P2 = 0.02.
        trace_plane(&case, "beta1 P2,P3 @Q3=0.02 seedline P2=0.02",
                    params(0.02, 0.0, 0.02), 1, [0, 1], LimitRows::Include);
        // Criterion 1 plane seeded along the other axis.
        trace_plane(&case, "beta1 P2,P3 @Q3=0.02 seedline P3=0.0",
                    params(0.02, 0.0, 0.02), 0, [0, 1], LimitRows::Include);
        return;
    }

    if mode == "load" || mode == "all" {
        loadability(&case);
    }

    if mode == "misc" || mode == "all" {
        misc_probes(&case);
    }

    if mode == "maps" || mode == "all" {
        // Criterion 1 plane: P2-P3 at Q3 = 0.02  (axes 0=P2, 1=P3)
        map_plane(&sys, "Q3", 0.02, (0, 1));
        // Criterion 2 plane: P3-Q3 at P2 = 0.02  (axes 1=P3, 2=Q3)
        map_plane(&sys, "P2", 0.02, (1, 2));
    }

    if mode == "sweep" || mode == "all" {
        sweep_seed_lines(&case);
    }

    if mode == "newton" || mode == "all" {
        let bsys = BoundarySystem::new(
            &case,
            LimitRows::Include,
            params(0.02, 0.0, 0.02),
            vec![1],
            TransversalityKind::Svd,
        )
        .unwrap();
        let z0 = bsys.initial_point(&bsys.pf().flat_start()).unwrap();
        fd_check_jh(&bsys, &z0, "flat");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut zr = z0.clone();
        for v in zr.iter_mut() {
            *v += rng.gen_range(-0.2..0.2);
        }
        fd_check_jh(&bsys, &zr, "perturbed");
        println!("--- newton trace from flat (free P3, Q3=0.02) ---");
        trace_newton(&bsys, &z0);
    }
}
