use haarlab::battery::{run_battery, run_criterion, BatteryConfig};

#[test]
fn quick_battery_passes_and_is_reproducible() {
    let cfg = BatteryConfig::quick(7);
    let a = run_battery(&cfg).unwrap();
    let b = run_battery(&cfg).unwrap();
    assert!(a.iter().all(|r| r.pass), "{a:#?}");
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(!serde_json::to_string(&a).unwrap().contains("seconds"));
}

#[test]
fn unknown_criterion_is_an_error() {
    assert!(run_criterion(11, &BatteryConfig::quick(1)).is_err());
}
