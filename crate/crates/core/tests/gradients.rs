mod support {
    pub mod gradsuite;
}

use support::gradsuite::run_all;

#[test]
fn every_layer_and_network_matches_finite_differences() {
    let cases = run_all();
    for c in &cases {
        println!("{:<28} max rel err {:.3e} (tol {:.0e})", c.name, c.error, c.tolerance);
    }
    let failed: Vec<_> = cases.iter().filter(|c| !c.passed()).collect();
    assert!(failed.is_empty(), "{failed:?}");
}
