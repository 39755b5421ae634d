use bias_probe_web::{catalog_json, simulate_json, trial_json, wilson_interval};
use serde_json::Value;

#[test]
fn catalog_lists_everything() {
    let v: Value = serde_json::from_str(&catalog_json()).unwrap();
    assert_eq!(v["categories"].as_array().unwrap().len(), 6);
    assert_eq!(v["templates"].as_array().unwrap().len(), 10);
}

#[test]
fn renders_both_phases() {
    let imp: Value = serde_json::from_str(&trial_json("race", "implicit", "t2-swapped", 3, 42).unwrap()).unwrap();
    assert_eq!(imp["phase"], "implicit");
    assert_eq!(imp["candidates"].as_array().unwrap().len(), 10);
    let exp: Value = serde_json::from_str(&trial_json("age", "explicit", "t1-normal", 0, 42).unwrap()).unwrap();
    assert!(exp["prompt"].as_str().unwrap().contains("strongly agree"));
    assert!(trial_json("nope", "implicit", "t1-normal", 0, 1).is_err());
    assert!(trial_json("race", "sideways", "t1-normal", 0, 1).is_err());
}

#[test]
fn simulation_is_deterministic() {
    let a = simulate_json(0.8, 0.1, 0.02, 42, 2).unwrap();
    assert_eq!(a, simulate_json(0.8, 0.1, 0.02, 42, 2).unwrap());
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["trials"], 240);
    assert_eq!(v["scores"].as_array().unwrap().len(), 12);
    assert!(v["svg"].as_str().unwrap().starts_with("<svg"));
    assert!(simulate_json(0.9, 0.1, 0.2, 1, 1).is_err());
}

#[test]
fn wilson_matches_reference() {
    let [lo, hi] = wilson_interval(54, 200, 0.95).unwrap();
    assert!((lo - 0.21323449814685844).abs() < 1e-12 && (hi - 0.33543435198668425).abs() < 1e-12);
    assert!(wilson_interval(1, 0, 0.95).is_err());
}
