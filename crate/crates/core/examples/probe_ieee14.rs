//! Scratch probe for the 14-bus limit-corner setup. Not part of the build.

use feasbound::{
    find_seeds, load_case, trace_curve, Binding, BoundarySystem, BusKind, InjectionQty,
    LimitFlag, LimitRows, ParameterVector, RadiusPolicy, SeedSettings, TraceSettings,
    TransversalityKind,
};

fn main() {
    let mut case = load_case("cases/ieee14_subset.m", None).expect("load");
    for bus in &mut case.buses {
        if bus.kind == BusKind::Pq {
            bus.v_min = Some(0.9);
            bus.v_max = Some(1.1);
        }
    }
    let bind = |id| Binding::Bus { id, qty: InjectionQty::ActivePower };
    let combos: &[(usize, f64, f64, usize)] = &[
        (1, -0.942, 0.183, 64), // free P3 from base load, P2 at base
        (0, 0.183, -0.942, 64), // free P2 from base, P3 at base
    ];
    for (rows, name) in [(LimitRows::Include, "feasibility"), (LimitRows::Exclude, "solvability")] {
        for &(free, start, other, restarts) in combos {
            let mut vals = [0.0, 0.0];
            vals[free] = start;
            vals[1 - free] = other;
            let template =
                ParameterVector::with_bindings(vec![bind(2), bind(3)], vals.to_vec()).unwrap();
            let seed_sys = BoundarySystem::new(
                &case,
                rows,
                template.clone(),
                vec![free],
                TransversalityKind::Svd,
            )
            .unwrap();
            let settings = SeedSettings { n_restarts: restarts, ..SeedSettings::default() };
            let t0 = std::time::Instant::now();
            let seeds = match find_seeds(&seed_sys, &settings) {
                Ok(s) => s,
                Err(e) => {
                    println!(
                        "{name} free {free} other {other} x{restarts}: NO SEEDS ({e}) {:.1}s",
                        t0.elapsed().as_secs_f64()
                    );
                    continue;
                }
            };
            print!(
                "{name} free {free} other {other} x{restarts}: {} seeds {:.1}s, free at [",
                seeds.len(),
                t0.elapsed().as_secs_f64()
            );
            for s in &seeds {
                print!("{:.4} ", s.z[s.z.len() - 1]);
            }
            println!("]");

            let trace_sys =
                BoundarySystem::new(&case, rows, template, vec![0, 1], TransversalityKind::Svd)
                    .unwrap();
            let policy = RadiusPolicy::default();
            let tset = TraceSettings {
                parameter_box: Some(vec![(-12.0, 12.0), (-12.0, 12.0)]),
                ..TraceSettings::default()
            };
            for (i, seed) in seeds.iter().enumerate().take(4) {
                let lifted = match trace_sys.lift_seed(seed, free) {
                    Ok(l) => l,
                    Err(e) => {
                        println!("  seed {i}: lift failed {e}");
                        continue;
                    }
                };
                let t0 = std::time::Instant::now();
                match trace_curve(&trace_sys, &lifted, &policy, &tset) {
                    Ok(curve) => {
                        let off = trace_sys.lambda_offset();
                        let (mut lo1, mut hi1, mut lo2, mut hi2) =
                            (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
                        for s in &curve.steps {
                            lo1 = lo1.min(s.z[off]);
                            hi1 = hi1.max(s.z[off]);
                            lo2 = lo2.min(s.z[off + 1]);
                            hi2 = hi2.max(s.z[off + 1]);
                        }
                        let active: Vec<bool> = curve
                            .steps
                            .iter()
                            .map(|s| {
                                s.flags.iter().any(|(_, f)| !matches!(f, LimitFlag::Interior))
                            })
                            .collect();
                        let transitions = active.windows(2).filter(|w| w[0] != w[1]).count();
                        let n_active = active.iter().filter(|&&a| a).count();
                        println!(
                            "  seed {i}: {:?} {} steps {} cycles {:.2}s  P2 [{lo1:.3},{hi1:.3}] P3 [{lo2:.3},{hi2:.3}]  active {n_active}/{} transitions {transitions}",
                            curve.termination,
                            curve.steps.len(),
                            curve.total_cycles,
                            t0.elapsed().as_secs_f64(),
                            curve.steps.len(),
                        );
                    }
                    Err(e) => println!("  seed {i}: trace failed {e}"),
                }
            }
        }
    }
}
