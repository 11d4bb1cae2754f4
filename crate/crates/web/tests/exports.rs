use haarlab_web::{bellman_remainder_grid, counterexample_row, random_tree_probe};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn counterexample_row_at_one_hundredth() {
    let v = parse(counterexample_row("0.01").unwrap());
    assert_eq!(v["all_hold"], true);
    assert_eq!(v["row"]["paper_lower_bound"], 5.0);
    let norm = v["row"]["norm_weighted"].as_f64().unwrap();
    // (1 - e + e^2)(1/e + e/(1 - e)) at e = 1/100, squared norm
    let closed = (0.9901f64 * (100.0 + 1.0 / 99.0)).sqrt();
    assert!((norm - closed).abs() < 1e-9 * closed);
}

#[test]
fn counterexample_row_rejects_bad_eps() {
    assert!(counterexample_row("0.7").is_err());
    assert!(counterexample_row("abc").is_err());
}

#[test]
fn b1_field_is_bounded_below() {
    let v = parse(bellman_remainder_grid("B1", 4.0, 1.0, 1.0, 0.05, 20.0, 41).unwrap());
    let ratio = v["ratio"].as_array().unwrap();
    assert_eq!(ratio.len(), 41 * 41);
    assert!(ratio.iter().any(Value::is_null));
    assert!(v["min_ratio"].as_f64().unwrap() >= 1.0 - 1e-9);
}

#[test]
fn b2_field_is_positive() {
    let v = parse(bellman_remainder_grid("b2", 100.0, 2.0, 3.0, 0.1, 50.0, 30).unwrap());
    assert!(v["min_ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn grid_rejects_point_outside_domain() {
    assert!(bellman_remainder_grid("B1", 1.0, 2.0, 2.0, 0.1, 10.0, 10).is_err());
    assert!(bellman_remainder_grid("B3", 1.0, 1.0, 1.0, 0.1, 10.0, 10).is_err());
}

#[test]
fn probe_is_deterministic_and_bracketed() {
    let a = random_tree_probe(5, 4, 3, 200).unwrap();
    assert_eq!(a, random_tree_probe(5, 4, 3, 200).unwrap());
    let v = parse(a);
    if let Some(p) = v["partial_sums"].as_object() {
        assert_eq!(p["holds"], true);
    }
    assert!(v["scan"]["ratio"].as_f64().unwrap() <= 100.0);
    assert!(random_tree_probe(5, 9, 3, 200).is_err());
}
