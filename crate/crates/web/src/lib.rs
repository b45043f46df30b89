//! WebAssembly bindings for the browser demo. Every export returns a JSON
//! string for the page script to parse.

use chrono::NaiveDate;
use occtool_core::control_sim::comfort::{pmv_ppd, ComfortParams};
use occtool_core::control_sim::{simulate, Controller, EnergyTotals, SimConfig, SimInputs};
use occtool_core::ingest::WeatherSeries;
use occtool_core::occupancy_signal::IntervalSample;
use occtool_core::refinement::{fuse, review_reason, RefinementConfig, RefinementResponse};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Reviews one frame given its neighbours and fuses a hypothetical LLM
/// answer with the detector estimate.
#[wasm_bindgen]
pub fn review_frame(count: u32, confidence: f64, prev: u32, next: u32, llm_count: u32, llm_confidence: f64, margin: f64) -> Result<String, String> {
    let cfg = RefinementConfig { margin, ..RefinementConfig::default() };
    cfg.validate().map_err(|e| e.to_string())?;
    let reason = review_reason(count, confidence, prev, next, &cfg);
    let (fused_count, fused_confidence) = match reason {
        Some(_) => fuse(count, confidence, Some(&RefinementResponse { frame_idx: 0, count: llm_count, confidence: llm_confidence }), margin),
        None => (count, confidence),
    };
    let accepted = reason.is_some() && (fused_count, fused_confidence) != (count, confidence);
    Ok(json!({
        "reason": reason.map(|r| r.as_str()),
        "count": fused_count,
        "confidence": fused_confidence,
        "accepted": accepted,
        "threshold": confidence + margin,
    })
    .to_string())
}

/// One 5-minute-step day in the given month: `people` present from
/// `arrive` to `leave` (hours), outdoor temperature `mean ± swing` with
/// the low at 05:00. Runs the fixed schedule and the MPC side by side.
#[wasm_bindgen]
pub fn simulate_day(month: u32, t_out_mean: f64, swing: f64, arrive: f64, leave: f64, people: u32) -> Result<String, String> {
    let day = NaiveDate::from_ymd_opt(2023, month, 15).ok_or_else(|| format!("bad month {month}"))?;
    let t0 = day.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp();
    let points = (0..=26)
        .map(|h| {
            let phase = 2.0 * std::f64::consts::PI * (f64::from(h % 24) - 5.0) / 24.0;
            ((t0 + i64::from(h) * 3600) as f64, t_out_mean - swing * phase.cos())
        })
        .collect();
    let weather = WeatherSeries::new(points).map_err(|e| e.to_string())?;
    let occupancy: Vec<IntervalSample> = (0..288u64)
        .map(|k| {
            let hour = k as f64 / 12.0;
            let n = if (arrive..leave).contains(&hour) { people } else { 0 };
            IntervalSample::new(k, t0 + k as i64 * 300, n)
        })
        .collect();
    let cfg = SimConfig::default();
    let inputs = SimInputs { occupancy: &occupancy, controller_occupancy: None, weather: &weather };
    let mut out = serde_json::Map::new();
    for (name, controller) in [("baseline", Controller::Baseline), ("mpc", Controller::Mpc)] {
        let steps = simulate(&inputs, &cfg, controller, false).map_err(|e| e.to_string())?.steps;
        out.insert(
            name.into(),
            json!({
                "t_z": steps.iter().map(|s| s.t_z).collect::<Vec<_>>(),
                "t_htg": steps.iter().map(|s| s.t_htg).collect::<Vec<_>>(),
                "t_clg": steps.iter().map(|s| s.t_clg).collect::<Vec<_>>(),
                "ppd": steps.iter().map(|s| s.ppd).collect::<Vec<_>>(),
                "totals": EnergyTotals::from_steps(&steps),
            }),
        );
    }
    out.insert("t_out".into(), json!(occupancy.iter().map(|iv| weather.lookup(iv.start as f64)).collect::<Vec<_>>()));
    out.insert("n".into(), json!(occupancy.iter().map(|iv| iv.n).collect::<Vec<_>>()));
    Ok(serde_json::Value::Object(out).to_string())
}

/// PMV and PPD over zone temperatures from 15 to 32 °C.
#[wasm_bindgen]
pub fn ppd_curve(month: u32, met: f64, rh: f64) -> Result<String, String> {
    let params = ComfortParams { met, rh, ..ComfortParams::default() };
    params.validate().map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for i in 0..=68 {
        let t = 15.0 + f64::from(i) * 0.25;
        let (pmv, ppd) = pmv_ppd(t, &params, month).map_err(|e| e.to_string())?;
        rows.push(json!({ "t": t, "pmv": pmv, "ppd": ppd }));
    }
    Ok(json!(rows).to_string())
}
