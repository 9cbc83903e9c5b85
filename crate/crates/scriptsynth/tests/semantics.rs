mod common;

#[test]
fn loop_and_return_fixtures() {
    for (name, ok, detail) in common::semantics_checks() {
        assert!(ok, "{name}: {detail}");
    }
}
