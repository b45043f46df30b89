use occtool_web::{ppd_curve, review_frame, simulate_day};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

#[test]
fn review_frame_follows_the_margin() {
    let v = parse(review_frame(2, 0.5, 2, 2, 3, 0.65, 0.15));
    assert_eq!(v["reason"], "low_conf");
    assert_eq!(v["count"], 3);
    assert_eq!(v["accepted"], true);

    let v = parse(review_frame(2, 0.5, 2, 2, 3, 0.64, 0.15));
    assert_eq!(v["count"], 2);
    assert_eq!(v["accepted"], false);

    let v = parse(review_frame(3, 0.9, 3, 3, 0, 1.0, 0.15));
    assert!(v["reason"].is_null());
    assert_eq!(v["count"], 3);

    assert!(review_frame(1, 0.5, 1, 1, 1, 0.9, 0.0).is_err());
}

#[test]
fn simulated_day_has_both_controllers() {
    let v = parse(simulate_day(1, 4.0, 5.0, 8.0, 18.0, 3));
    for name in ["baseline", "mpc"] {
        assert_eq!(v[name]["t_z"].as_array().unwrap().len(), 288);
        assert!(v[name]["totals"]["total_kwh"].as_f64().unwrap() > 0.0);
    }
    let n = v["n"].as_array().unwrap();
    assert_eq!(n.iter().filter(|x| x.as_u64() == Some(3)).count(), 10 * 12);
    assert!(simulate_day(13, 4.0, 5.0, 8.0, 18.0, 3).is_err());
}

#[test]
fn ppd_curve_bottoms_out_near_neutral() {
    let v = parse(ppd_curve(1, 1.1, 50.0));
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 69);
    let min = rows.iter().map(|r| r["ppd"].as_f64().unwrap()).fold(f64::INFINITY, f64::min);
    assert!((5.0..6.0).contains(&min));
    assert!(ppd_curve(1, -1.0, 50.0).is_err());
}
