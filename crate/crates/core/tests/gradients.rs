use dwa::checks::{gradient_suite, model_gradient_check};
use dwa::models::ModelKind;

#[test]
fn op_and_layer_gradients_match_finite_differences() {
    let results = gradient_suite(0);
    for r in &results {
        println!("{:<32} {} {}", r.name, if r.pass { "ok  " } else { "FAIL" }, r.detail);
    }
    assert!(results.iter().all(|r| r.pass));
}

#[test]
fn every_model_kind_passes_end_to_end() {
    for kind in ModelKind::ALL {
        let r = model_gradient_check(kind, 1);
        println!("{:<40} {}", r.name, r.detail);
        assert!(r.pass, "{}: {}", r.name, r.detail);
    }
}
