use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> String {
    format!("{}/../../cases/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn three_bus() -> NetworkCase {
    load_case(fixture("threebus.json"), None).expect("fixture loads")
}

#[test]
fn three_bus_fixture_loads() {
    let case = three_bus();
    assert_eq!(case.buses.len(), 3);
    assert_eq!(case.kind_count(BusKind::Slack), 1);
    assert_eq!(case.kind_count(BusKind::Pv), 1);
    assert_eq!(case.kind_count(BusKind::Pq), 1);
    assert_eq!(case.buses[2].band(), Some((0.9, 1.1)));
    assert!(case.metadata.defaulted_voltage_limits.is_empty());
}

#[test]
fn three_bus_ybus_values() {
    // Lossless x = 1 everywhere: G = 0, B diagonal -2, off-diagonal +1.
    let case = three_bus();
    let y = build_ybus(&case).unwrap();
    for i in 0..3 {
        for k in 0..3 {
            let (g, b) = y.get(i, k);
            assert_eq!(g, 0.0, "G[{i}][{k}]");
            let expect = if i == k { -2.0 } else { 1.0 };
            assert!((b - expect).abs() < 1e-15, "B[{i}][{k}] = {b}, expected {expect}");
        }
    }
}

#[test]
fn single_branch_ybus() {
    let text = r#"{
        "buses": [
            {"id": 10, "kind": "slack", "v_ref": 1.0},
            {"id": 20, "kind": "pq"}
        ],
        "branches": [{"from": 10, "to": 20, "x": 0.5}]
    }"#;
    let case = parse_case(text, CaseFormat::Json).unwrap();
    let y = build_ybus(&case).unwrap();
    assert_eq!(y.get(0, 0), (0.0, -2.0));
    assert_eq!(y.get(1, 1), (0.0, -2.0));
    assert_eq!(y.get(0, 1), (0.0, 2.0));
    assert_eq!(y.get(1, 0), (0.0, 2.0));
    // Default band was applied and recorded.
    assert_eq!(case.buses[1].band(), Some((DEFAULT_V_MIN, DEFAULT_V_MAX)));
    assert_eq!(case.metadata.defaulted_voltage_limits, vec![20]);
}

#[test]
fn shunt_free_row_sums_vanish() {
    let case = three_bus();
    let y = build_ybus(&case).unwrap();
    for i in 0..y.n() {
        let (sg, sb): (f64, f64) = y
            .row(i)
            .iter()
            .fold((0.0, 0.0), |(sg, sb), e| (sg + e.g, sb + e.b));
        assert!(sg.abs() < 1e-14 && sb.abs() < 1e-14, "row {i} sums ({sg}, {sb})");
    }
}

#[test]
fn charging_shifts_diagonal_row_sum() {
    let text = r#"{
        "buses": [
            {"id": 1, "kind": "slack"},
            {"id": 2, "kind": "pq"}
        ],
        "branches": [{"from": 1, "to": 2, "r": 0.01, "x": 0.1, "b_sh": 0.04}]
    }"#;
    let case = parse_case(text, CaseFormat::Json).unwrap();
    let y = build_ybus(&case).unwrap();
    for i in 0..2 {
        let sb: f64 = y.row(i).iter().map(|e| e.b).sum();
        assert!((sb - 0.02).abs() < 1e-15, "row {i}: charging half is {sb}");
    }
}

#[test]
fn ybus_pattern_symmetric() {
    let case = load_case(fixture("ieee14_subset.m"), None).unwrap();
    let y = build_ybus(&case).unwrap();
    for i in 0..y.n() {
        for e in y.row(i) {
            assert!(
                y.row(e.col).iter().any(|r| r.col == i),
                "entry ({i}, {}) lacks a transpose partner",
                e.col
            );
        }
    }
}

#[test]
fn ieee14_subset_loads() {
    let case = load_case(fixture("ieee14_subset.m"), None).unwrap();
    assert_eq!(case.buses.len(), 14);
    assert_eq!(case.branches.len(), 20);
    assert_eq!(case.kind_count(BusKind::Slack), 1);
    assert_eq!(case.kind_count(BusKind::Pv), 4);
    assert_eq!(case.kind_count(BusKind::Pq), 9);
    assert_eq!(case.metadata.name.as_deref(), Some("ieee14_subset"));
    // Loads scale to per-unit on the 100 MVA base.
    let bus3 = &case.buses[case.position_of(3).unwrap()];
    assert!((bus3.p_load - 0.942).abs() < 1e-12);
    assert!((bus3.v_ref - 1.01).abs() < 1e-12);
    // Bus 9 carries its 19 MVAr shunt.
    let bus9 = &case.buses[case.position_of(9).unwrap()];
    assert!((bus9.b_sh - 0.19).abs() < 1e-12);
    // Explicit limits, so no defaults were applied.
    assert!(case.metadata.defaulted_voltage_limits.is_empty());
    assert_eq!(case.buses[case.position_of(4).unwrap()].band(), Some((0.94, 1.06)));
}

#[test]
fn synthetic_300_bus_loads() {
    let case = load_case(fixture("case300_synthetic.m"), None).unwrap();
    assert_eq!(case.buses.len(), 300);
    assert_eq!(case.kind_count(BusKind::Slack), 1);
    assert_eq!(case.kind_count(BusKind::Pv), 68);
    assert_eq!(case.kind_count(BusKind::Pq), 231);
    // Buses 8 and 14 stay PQ so they can carry swept injections.
    assert_eq!(case.buses[case.position_of(8).unwrap()].kind, BusKind::Pq);
    assert_eq!(case.buses[case.position_of(14).unwrap()].kind, BusKind::Pq);
    assert_eq!(case.branches.len(), 343);
    build_ybus(&case).unwrap();
}

#[test]
fn duplicate_slack_rejected() {
    let text = r#"{
        "buses": [
            {"id": 1, "kind": "slack"},
            {"id": 2, "kind": "slack"}
        ],
        "branches": [{"from": 1, "to": 2, "x": 1.0}]
    }"#;
    match parse_case(text, CaseFormat::Json) {
        Err(CaseError::Validation(msg)) => assert!(msg.contains("slack"), "{msg}"),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn zero_impedance_branch_rejected() {
    let text = r#"{
        "buses": [
            {"id": 1, "kind": "slack"},
            {"id": 2, "kind": "pq"}
        ],
        "branches": [{"from": 1, "to": 2, "r": 0.0, "x": 0.0}]
    }"#;
    match parse_case(text, CaseFormat::Json) {
        Err(CaseError::DegenerateBranch { from: 1, to: 2 }) => {}
        other => panic!("expected degenerate branch error, got {other:?}"),
    }
}

#[test]
fn json_round_trip_is_bit_exact() {
    let case = three_bus();
    let round = parse_case(&case.to_json(), CaseFormat::Json).unwrap();
    assert_eq!(case, round);

    let case14 = load_case(fixture("ieee14_subset.m"), None).unwrap();
    let round14 = parse_case(&case14.to_json(), CaseFormat::Json).unwrap();
    // Metadata carries the original provenance through the JSON round trip.
    assert_eq!(round14.metadata.source_format, Some(CaseFormat::MatpowerSubset));
    assert_eq!(case14, round14);
}

#[test]
fn malformed_json_reports_location() {
    match parse_case("{ \"buses\": [", CaseFormat::Json) {
        Err(CaseError::Parse { location, .. }) => assert!(location.contains("line"), "{location}"),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn missing_file_is_io_error() {
    match load_case("/nonexistent/case.json", None) {
        Err(CaseError::Io { .. }) => {}
        other => panic!("expected io error, got {other:?}"),
    }
}

#[test]
fn matpower_tap_ratio_rejected() {
    let text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1.0 0 0 1 1.1 0.9;\n2 1 10 5 0 0 1 1.0 0 0 1 1.1 0.9;\n];\nmpc.branch = [\n1 2 0.01 0.1 0 0 0 0 0.978 0 1;\n];\n";
    match parse_case(text, CaseFormat::MatpowerSubset) {
        Err(CaseError::UnsupportedFeature(msg)) => assert!(msg.contains("tap"), "{msg}"),
        other => panic!("expected unsupported feature, got {other:?}"),
    }
}

#[test]
fn matpower_phase_shift_rejected() {
    let text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1.0 0 0 1 1.1 0.9;\n2 1 10 5 0 0 1 1.0 0 0 1 1.1 0.9;\n];\nmpc.branch = [\n1 2 0.01 0.1 0 0 0 0 0 30 1;\n];\n";
    match parse_case(text, CaseFormat::MatpowerSubset) {
        Err(CaseError::UnsupportedFeature(msg)) => assert!(msg.contains("phase"), "{msg}"),
        other => panic!("expected unsupported feature, got {other:?}"),
    }
}

#[test]
fn matpower_out_of_service_branch_skipped() {
    let text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1.0 0 0 1 1.1 0.9;\n2 1 10 5 0 0 1 1.0 0 0 1 1.1 0.9;\n];\nmpc.branch = [\n1 2 0.01 0.1 0 0 0 0 0 0 1;\n1 2 0.02 0.2 0 0 0 0 0 0 0;\n];\n";
    let case = parse_case(text, CaseFormat::MatpowerSubset).unwrap();
    assert_eq!(case.branches.len(), 1);
    assert_eq!(case.branches[0].x, 0.1);
}

#[test]
fn matpower_isolated_bus_type_rejected() {
    let text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1.0 0 0 1 1.1 0.9;\n2 4 0 0 0 0 1 1.0 0 0 1 1.1 0.9;\n];\nmpc.branch = [\n];\n";
    match parse_case(text, CaseFormat::MatpowerSubset) {
        Err(CaseError::UnsupportedFeature(msg)) => assert!(msg.contains("type"), "{msg}"),
        other => panic!("expected unsupported feature, got {other:?}"),
    }
}

#[test]
fn ybus_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let case = load_case(fixture("ieee14_subset.m"), None).unwrap();
    let y0 = build_ybus(&case).unwrap();

    // Shuffle bus order; external ids and branch endpoints are untouched.
    let mut shuffled = case.clone();
    for i in (1..shuffled.buses.len()).rev() {
        let j = rng.gen_range(0..=i);
        shuffled.buses.swap(i, j);
    }
    shuffled.validate().unwrap();
    let y1 = build_ybus(&shuffled).unwrap();

    for bus_a in &case.buses {
        for bus_b in &case.buses {
            let (i0, k0) = (case.position_of(bus_a.id).unwrap(), case.position_of(bus_b.id).unwrap());
            let (i1, k1) = (
                shuffled.position_of(bus_a.id).unwrap(),
                shuffled.position_of(bus_b.id).unwrap(),
            );
            let (g0, b0) = y0.get(i0, k0);
            let (g1, b1) = y1.get(i1, k1);
            assert!((g0 - g1).abs() < 1e-14 && (b0 - b1).abs() < 1e-14);
        }
    }
}
