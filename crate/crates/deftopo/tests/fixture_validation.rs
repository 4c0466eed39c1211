//! Every bundled fixture except the deliberate negative control must pass
//! validation; the negative control must fail exactly its mutated check.

use deftopo::dsl;

fn load(name: &str) -> dsl::TopologySpec {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap();
    dsl::parse(&text).unwrap()
}

#[test]
fn all_well_formed_fixtures_validate() {
    for name in [
        "affine.top",
        "infty.top",
        "halfopen.top",
        "lex.top",
        "chain.top",
        "threecopy.top",
        "nonhaus.top",
        "two_cells.top",
    ] {
        let mut spec = load(name);
        let report = spec.validate();
        assert!(report.ok, "{name} failed validation: {:?}", report.failures);
    }
}

#[test]
fn broken_membership_fixture_fails_membership_only() {
    let mut spec = load("broken_membership.top");
    let report = spec.validate();
    assert!(!report.ok);
    assert!(report
        .failures
        .iter()
        .any(|f| f.check.starts_with("membership")));
}

#[test]
fn fixtures_round_trip_through_emit() {
    for name in [
        "affine.top",
        "infty.top",
        "halfopen.top",
        "lex.top",
        "chain.top",
        "threecopy.top",
        "nonhaus.top",
        "two_cells.top",
    ] {
        let spec = load(name);
        let again = dsl::parse(&dsl::emit(&spec)).unwrap();
        assert_eq!(spec, again, "{name} did not round-trip");
    }
}
