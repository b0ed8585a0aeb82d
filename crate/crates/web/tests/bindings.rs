use do_icbf_web::{acc_compare, bicycle_run, check_scenario};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.expect("binding succeeds")).expect("valid JSON")
}

fn series<'a>(run: &'a Value, name: &str) -> Vec<f64> {
    run["series"][name].as_array().unwrap_or_else(|| panic!("no series {name}")).iter().map(|v| v.as_f64().unwrap()).collect()
}

#[test]
fn acc_compare_separates_the_two_filters() {
    let v = parse(acc_compare(0.0, 1.0, 1.0, 20.0));
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs[0]["mode"], "do_icbf");
    assert_eq!(runs[1]["mode"], "icbf");
    let t = runs[0]["t"].as_array().unwrap();
    assert!(t.len() > 500 && t.len() <= 1001, "{} rows", t.len());
    assert_eq!(series(&runs[0], "x1").len(), t.len());
    assert!(runs[0]["min_barrier"]["h_x"].as_f64().unwrap() >= -1e-3);
    // the estimate stays inside the envelope
    let (err, c2) = (series(&runs[0], "err"), series(&runs[0], "c2"));
    assert!(err.iter().zip(&c2).all(|(e, c)| e <= &(c + 1e-6)));
}

#[test]
fn bicycle_runs_with_a_tracking_gain() {
    let v = parse(bicycle_run(0.2, 60.0));
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs[0]["mode"], "high_order");
    assert_eq!(runs[0]["halt"], "completed");
    let (x, y) = (series(&runs[0], "x0"), series(&runs[0], "x1"));
    let r2 = x.iter().zip(&y).map(|(a, b)| a * a + b * b).fold(f64::INFINITY, f64::min);
    assert!(r2 >= 1.0 - 1e-3, "{r2}");
    assert!(runs[1]["min_barrier"]["b0"].as_f64().unwrap() < 0.0);
}

#[test]
fn check_reports_the_scalar_counterexample() {
    let v = parse(check_scenario("example1", None));
    assert_eq!(v["valid"], false);
    assert!(v["counterexamples"].as_array().unwrap().iter().any(|c| c["x"][0] == 4.0 && c["u"][0] == 0.0));
}

#[test]
fn bad_inputs_come_back_as_messages() {
    assert!(acc_compare(0.0, 1.0, 1.0, -1.0).unwrap_err().contains("t_end"));
    assert!(check_scenario("nope", None).is_err());
}
