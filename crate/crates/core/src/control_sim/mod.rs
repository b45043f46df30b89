//! Zone thermal model, schedule baseline, receding-horizon MPC, energy
//! accounting and comfort scoring.
//!
//! The plant is the first-order recurrence
//! `T_z[k+1] = a*T_z[k] + b*T_out[k] + c*u[k] + d*n[k]` where `u` is the
//! midpoint of the applied heating/cooling setpoint pair. Conditioning
//! effort per step is `Q = c*(u - T_z)`; positive effort is heating energy
//! and negative effort is cooling energy, both scaled by `kappa`.

pub mod comfort;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::Datelike;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use comfort::{pmv, pmv_ppd, ppd, ComfortInputs, ComfortParams, PMV_REPORT_LIMIT};

use crate::error::{Error, Result};
use crate::ingest::WeatherSeries;
use crate::metrics::round_half_up;
use crate::occupancy_signal::IntervalSample;
use crate::series::{datetime, format_float, format_timestamp, parse_timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for ZoneModel {
    fn default() -> Self {
        ZoneModel { a: 0.9, b: 0.05, c: 0.04, d: 0.1 }
    }
}

impl ZoneModel {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let m = ZoneModel { a, b, c, d };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.a, self.b, self.c, self.d].iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("zone coefficients must be finite".into()));
        }
        if self.a.abs() >= 1.0 {
            return Err(Error::Config(format!("unstable zone model: |a| = {} must be below 1", self.a.abs())));
        }
        Ok(())
    }

    pub fn predict(&self, t_z: f64, t_out: f64, u: f64, n: f64) -> f64 {
        self.a * t_z + self.b * t_out + self.c * u + self.d * n
    }

    /// Fixed point of the recurrence under constant inputs.
    pub fn steady_state(&self, t_out: f64, u: f64, n: f64) -> f64 {
        (self.b * t_out + self.c * u + self.d * n) / (1.0 - self.a)
    }
}

pub fn predict_zone(model: &ZoneModel, t_z: f64, t_out: f64, u: f64, n: f64) -> f64 {
    model.predict(t_z, t_out, u, n)
}

pub fn midpoint(t_htg: f64, t_clg: f64) -> f64 {
    (t_htg + t_clg) / 2.0
}

/// One sample of an identification trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t_z: f64,
    pub t_out: f64,
    pub u: f64,
    pub n: f64,
}

pub const MIN_IDENTIFICATION_STEPS: usize = 50;

/// Least-squares fit of the zone coefficients to one-step-ahead
/// predictions over a trajectory.
pub fn identify_model(trajectory: &[TrajectoryPoint]) -> Result<ZoneModel> {
    if trajectory.len() < MIN_IDENTIFICATION_STEPS {
        return Err(Error::Invalid(format!(
            "identification needs at least {MIN_IDENTIFICATION_STEPS} steps, got {}",
            trajectory.len()
        )));
    }
    let rows = trajectory.len() - 1;
    let x = DMatrix::from_fn(rows, 4, |i, j| {
        let p = &trajectory[i];
        [p.t_z, p.t_out, p.u, p.n][j]
    });
    let y = DVector::from_fn(rows, |i, _| trajectory[i + 1].t_z);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= smax * 1e-9 {
        return Err(Error::Numerical("regressors are rank-deficient; inputs need persistent excitation".into()));
    }
    let theta = svd.solve(&y, 0.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let model = ZoneModel { a: theta[0], b: theta[1], c: theta[2], d: theta[3] };
    if model.a.abs() >= 1.0 {
        return Err(Error::Numerical(format!("identified model is unstable (a = {})", model.a)));
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Forecast {
    /// Controller sees the future occupancy of its input series.
    #[default]
    Perfect,
    /// Current occupancy held over the horizon.
    Persistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Baseline,
    Mpc,
}

impl FromStr for Controller {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Controller::Baseline),
            "mpc" => Ok(Controller::Mpc),
            other => Err(Error::Config(format!("unknown controller {other:?} (expected baseline or mpc)"))),
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Controller::Baseline => "baseline",
            Controller::Mpc => "mpc",
        })
    }
}

/// Control settings. Temperatures are °C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub dt_secs: u32,
    pub horizon: usize,
    pub heating_min: f64,
    pub heating_max: f64,
    pub cooling_min: f64,
    pub cooling_max: f64,
    /// Comfort target T*.
    pub t_star: f64,
    pub w_comfort: f64,
    pub w_energy: f64,
    /// Setpoint grid spacing (1 °F by default).
    pub grid_step: f64,
    /// kWh per °C of conditioning effort per step.
    pub kappa: f64,
    pub baseline_heating: f64,
    pub baseline_cooling: f64,
    pub forecast: Forecast,
    /// Zone temperature at the first step.
    pub initial_t_z: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            dt_secs: 300,
            horizon: 12,
            heating_min: 15.56,
            heating_max: 21.11,
            cooling_min: 23.89,
            cooling_max: 26.67,
            t_star: 22.5,
            w_comfort: 1.0,
            w_energy: 0.5,
            grid_step: 5.0 / 9.0,
            kappa: 1.0,
            baseline_heating: 21.11,
            baseline_cooling: 23.89,
            forecast: Forecast::Perfect,
            initial_t_z: 21.0,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.heating_min,
            self.heating_max,
            self.cooling_min,
            self.cooling_max,
            self.t_star,
            self.w_comfort,
            self.w_energy,
            self.grid_step,
            self.kappa,
            self.baseline_heating,
            self.baseline_cooling,
            self.initial_t_z,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("control settings must be finite".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("control.horizon must be at least 1".into()));
        }
        if self.dt_secs == 0 {
            return Err(Error::Config("control.dt_secs must be positive".into()));
        }
        if self.heating_min > self.heating_max || self.cooling_min > self.cooling_max {
            return Err(Error::Config("setpoint bounds are inverted".into()));
        }
        if self.heating_max >= self.cooling_min {
            return Err(Error::Config("heating upper bound must be below cooling lower bound".into()));
        }
        if self.grid_step <= 0.0 || self.w_comfort < 0.0 || self.w_energy < 0.0 || self.kappa < 0.0 {
            return Err(Error::Config("grid_step must be positive; weights and kappa non-negative".into()));
        }
        if self.baseline_heating > self.baseline_cooling {
            return Err(Error::Config("baseline heating setpoint above cooling setpoint".into()));
        }
        Ok(())
    }

    /// Candidate setpoints in `[lo, hi]`, spaced by `grid_step` from `lo`.
    /// A grid value within 0.01 °C of `hi` snaps to `hi`, absorbing the
    /// rounding of bounds converted from °F.
    fn grid(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut v = Vec::new();
        let mut i = 0u32;
        loop {
            let x = lo + f64::from(i) * self.grid_step;
            if x > hi + 0.01 {
                break;
            }
            v.push(if (x - hi).abs() <= 0.01 { hi } else { x });
            i += 1;
        }
        v
    }

    /// Candidate pairs ordered by ascending heating setpoint, then
    /// descending cooling setpoint.
    pub fn candidates(&self) -> Vec<(f64, f64)> {
        let heat = self.grid(self.heating_min, self.heating_max);
        let mut cool = self.grid(self.cooling_min, self.cooling_max);
        cool.reverse();
        heat.iter().flat_map(|&h| cool.iter().map(move |&c| (h, c))).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub zone: ZoneModel,
    pub control: ControlConfig,
    pub comfort: ComfortParams,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.zone.validate()?;
        self.control.validate()?;
        self.comfort.validate()
    }
}

/// Outcome of one MPC optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// Setpoint pair for every step of the horizon; the pair is constant.
    pub pairs: Vec<(f64, f64)>,
    pub cost: f64,
    /// Predicted zone temperatures `T_z[k..k+len]`.
    pub predicted: Vec<f64>,
}

impl Plan {
    pub fn first(&self) -> (f64, f64) {
        self.pairs[0]
    }
}

fn horizon_cost(model: &ZoneModel, t_z: f64, t_out: &[f64], n: &[u32], u: f64, cfg: &ControlConfig, trace: Option<&mut Vec<f64>>) -> f64 {
    let mut tz = t_z;
    let mut cost = 0.0;
    let mut trace = trace;
    for (&to, &nk) in t_out.iter().zip(n) {
        if let Some(t) = trace.as_deref_mut() {
            t.push(tz);
        }
        let occupied = if nk >= 1 { 1.0 } else { 0.0 };
        cost += cfg.w_comfort * occupied * (tz - cfg.t_star).powi(2) + cfg.w_energy * (model.c * (u - tz)).abs();
        tz = model.predict(tz, to, u, f64::from(nk));
    }
    cost
}

/// Chooses the constant setpoint pair minimising the horizon cost
/// `sum w_comfort*occ*(T_z - T*)^2 + w_energy*|c*(T_mid - T_z)|`.
/// Forecast slices give the horizon length. Near-equal costs go to the
/// lowest heating setpoint, then the highest cooling setpoint.
pub fn mpc_step(model: &ZoneModel, t_z: f64, t_out: &[f64], occupancy: &[u32], cfg: &ControlConfig) -> Plan {
    assert_eq!(t_out.len(), occupancy.len(), "forecast lengths differ");
    assert!(!t_out.is_empty(), "empty forecast horizon");
    let mut best: Option<((f64, f64), f64)> = None;
    // many pairs share a midpoint, and the cost only depends on it
    let mut seen: Vec<(u64, f64)> = Vec::new();
    for (h, c) in cfg.candidates() {
        let mid = midpoint(h, c);
        let cost = match seen.iter().find(|(bits, _)| *bits == mid.to_bits()) {
            Some(&(_, cost)) => cost,
            None => {
                let cost = horizon_cost(model, t_z, t_out, occupancy, mid, cfg, None);
                seen.push((mid.to_bits(), cost));
                cost
            }
        };
        let better = match best {
            None => true,
            Some((_, b)) => cost < b - 1e-9 * (1.0 + b.abs()),
        };
        if better {
            best = Some(((h, c), cost));
        }
    }
    let (pair, cost) = best.expect("at least one candidate");
    let mut predicted = Vec::with_capacity(t_out.len());
    horizon_cost(model, t_z, t_out, occupancy, midpoint(pair.0, pair.1), cfg, Some(&mut predicted));
    Plan { pairs: vec![pair; t_out.len()], cost, predicted }
}

pub fn baseline_step(cfg: &ControlConfig) -> (f64, f64) {
    (cfg.baseline_heating, cfg.baseline_cooling)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlStep {
    pub k: u64,
    pub ts: i64,
    pub t_htg: f64,
    pub t_clg: f64,
    pub t_mid: f64,
    /// Zone temperature at the start of the step.
    pub t_z: f64,
    pub t_out: f64,
    pub n: u32,
    pub q: f64,
    pub e_heat: f64,
    pub e_cool: f64,
    pub pmv: f64,
    pub ppd: f64,
}

impl ControlStep {
    pub fn occupied(&self) -> bool {
        self.n >= 1
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimInputs<'a> {
    /// Occupancy driving the plant.
    pub occupancy: &'a [IntervalSample],
    /// Occupancy the controller plans with; the plant series when `None`.
    pub controller_occupancy: Option<&'a [IntervalSample]>,
    pub weather: &'a WeatherSeries,
}

#[derive(Debug, Clone, Default)]
pub struct SimResult {
    pub steps: Vec<ControlStep>,
    /// MPC plans, one per step, when requested.
    pub plans: Vec<Plan>,
}

impl SimResult {
    pub fn totals(&self) -> EnergyTotals {
        EnergyTotals::from_steps(&self.steps)
    }
}

fn check_coverage(occ: &[IntervalSample], ctrl: &[IntervalSample], weather: &WeatherSeries, dt: u32) -> Result<()> {
    for w in occ.windows(2) {
        if w[1].start - w[0].start != i64::from(dt) {
            return Err(Error::Invalid(format!(
                "occupancy has a gap or step change between {} and {}",
                format_timestamp(w[0].start as f64),
                format_timestamp(w[1].start as f64)
            )));
        }
    }
    if ctrl.len() != occ.len() || ctrl.iter().zip(occ).any(|(a, b)| a.start != b.start) {
        return Err(Error::Invalid("controller occupancy is not aligned with plant occupancy".into()));
    }
    if let (Some(first), Some(last)) = (occ.first(), occ.last()) {
        if (first.start as f64) < weather.start() || (last.start as f64) > weather.end() {
            return Err(Error::Invalid(format!(
                "weather covers {} to {} but occupancy spans {} to {}",
                format_timestamp(weather.start()),
                format_timestamp(weather.end()),
                format_timestamp(first.start as f64),
                format_timestamp(last.start as f64)
            )));
        }
    }
    Ok(())
}

/// Closed-loop simulation. Each step the controller picks a setpoint
/// pair (the MPC re-plans from the current state), the midpoint is applied
/// and the plant advances with the true occupancy.
pub fn simulate(inputs: &SimInputs, cfg: &SimConfig, controller: Controller, record_plans: bool) -> Result<SimResult> {
    cfg.validate()?;
    let occ = inputs.occupancy;
    let ctrl = inputs.controller_occupancy.unwrap_or(occ);
    check_coverage(occ, ctrl, inputs.weather, cfg.control.dt_secs)?;
    let model = &cfg.zone;
    let cc = &cfg.control;
    let t_out: Vec<f64> = occ.iter().map(|iv| inputs.weather.lookup(iv.start as f64)).collect();
    let ctrl_n: Vec<u32> = ctrl.iter().map(|iv| iv.n).collect();

    let mut result = SimResult::default();
    let mut t_z = cc.initial_t_z;
    let mut forecast = Vec::with_capacity(cc.horizon);
    for (k, iv) in occ.iter().enumerate() {
        let (t_htg, t_clg) = match controller {
            Controller::Baseline => baseline_step(cc),
            Controller::Mpc => {
                let end = (k + cc.horizon).min(occ.len());
                forecast.clear();
                match cc.forecast {
                    Forecast::Perfect => forecast.extend_from_slice(&ctrl_n[k..end]),
                    Forecast::Persistence => forecast.resize(end - k, ctrl_n[k]),
                }
                let plan = mpc_step(model, t_z, &t_out[k..end], &forecast, cc);
                let first = plan.first();
                if record_plans {
                    result.plans.push(plan);
                }
                first
            }
        };
        let t_mid = midpoint(t_htg, t_clg);
        let q = model.c * (t_mid - t_z);
        let month = datetime(iv.start as f64).month();
        let (pmv, ppd) = pmv_ppd(t_z, &cfg.comfort, month)?;
        result.steps.push(ControlStep {
            k: k as u64,
            ts: iv.start,
            t_htg,
            t_clg,
            t_mid,
            t_z,
            t_out: t_out[k],
            n: iv.n,
            q,
            e_heat: cc.kappa * q.max(0.0),
            e_cool: cc.kappa * (-q).max(0.0),
            pmv,
            ppd,
        });
        t_z = model.predict(t_z, t_out[k], t_mid, f64::from(iv.n));
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTotals {
    pub cooling_kwh: f64,
    pub heating_kwh: f64,
    pub total_kwh: f64,
    pub mean_ppd: f64,
    /// Mean PPD over occupied steps; absent when none are occupied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ppd_occupied: Option<f64>,
    pub steps: usize,
}

impl EnergyTotals {
    pub fn from_steps(steps: &[ControlStep]) -> Self {
        let cooling_kwh: f64 = steps.iter().map(|s| s.e_cool).sum();
        let heating_kwh: f64 = steps.iter().map(|s| s.e_heat).sum();
        let mean = |it: Vec<f64>| (!it.is_empty()).then(|| it.iter().sum::<f64>() / it.len() as f64);
        EnergyTotals {
            cooling_kwh,
            heating_kwh,
            total_kwh: cooling_kwh + heating_kwh,
            mean_ppd: mean(steps.iter().map(|s| s.ppd).collect()).unwrap_or(0.0),
            mean_ppd_occupied: mean(steps.iter().filter(|s| s.occupied()).map(|s| s.ppd).collect()),
            steps: steps.len(),
        }
    }
}

/// Percentage saving of `case_kwh` against `baseline_kwh`, rounded half-up
/// to two decimals.
pub fn savings(baseline_kwh: f64, case_kwh: f64) -> Result<f64> {
    if !(baseline_kwh > 0.0) {
        return Err(Error::Invalid(format!("baseline energy must be positive, got {baseline_kwh}")));
    }
    Ok(round_half_up(100.0 * (baseline_kwh - case_kwh) / baseline_kwh, 2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Savings {
    pub cooling_pct: Option<f64>,
    pub heating_pct: Option<f64>,
    pub total_pct: Option<f64>,
}

impl Savings {
    pub fn between(baseline: &EnergyTotals, case: &EnergyTotals) -> Self {
        Savings {
            cooling_pct: savings(baseline.cooling_kwh, case.cooling_kwh).ok(),
            heating_pct: savings(baseline.heating_kwh, case.heating_kwh).ok(),
            total_pct: savings(baseline.total_kwh, case.total_kwh).ok(),
        }
    }
}

/// Simulation summary written next to the step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub controller: Controller,
    pub totals: EnergyTotals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<EnergyTotals>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub savings: Option<Savings>,
}

impl SimSummary {
    pub fn new(controller: Controller, steps: &[ControlStep], baseline: Option<EnergyTotals>) -> Self {
        let totals = EnergyTotals::from_steps(steps);
        SimSummary {
            controller,
            totals,
            savings: baseline.as_ref().map(|b| Savings::between(b, &totals)),
            baseline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthlyRow {
    pub year: i32,
    pub month: u32,
    pub e_heat: f64,
    pub e_cool: f64,
    pub mean_ppd: f64,
    pub steps: usize,
}

/// Calendar-month (UTC) energy sums and mean PPD. Months without steps
/// are omitted.
pub fn monthly_rollup(steps: &[ControlStep]) -> Vec<MonthlyRow> {
    let mut months: BTreeMap<(i32, u32), (f64, f64, f64, usize)> = BTreeMap::new();
    for s in steps {
        let t = datetime(s.ts as f64);
        let e = months.entry((t.year(), t.month())).or_default();
        e.0 += s.e_heat;
        e.1 += s.e_cool;
        e.2 += s.ppd;
        e.3 += 1;
    }
    months
        .into_iter()
        .map(|((year, month), (h, c, p, n))| MonthlyRow { year, month, e_heat: h, e_cool: c, mean_ppd: p / n as f64, steps: n })
        .collect()
}

const STEP_HEADER: [&str; 13] = ["k", "ts", "t_htg", "t_clg", "t_mid", "t_z", "t_out", "n", "q", "e_heat", "e_cool", "pmv", "ppd"];

pub fn write_steps<W: Write>(writer: W, steps: &[ControlStep]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(STEP_HEADER)?;
    for s in steps {
        w.write_record([
            s.k.to_string(),
            format_timestamp(s.ts as f64),
            format_float(s.t_htg),
            format_float(s.t_clg),
            format_float(s.t_mid),
            format_float(s.t_z),
            format_float(s.t_out),
            s.n.to_string(),
            format_float(s.q),
            format_float(s.e_heat),
            format_float(s.e_cool),
            format_float(s.pmv),
            format_float(s.ppd),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<steps>", e))?;
    Ok(())
}

pub fn read_steps<R: Read>(reader: R) -> Result<Vec<ControlStep>> {
    let src = "steps";
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(STEP_HEADER) {
        return Err(Error::parse(src, 1, format!("expected header {}", STEP_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let f = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| Error::parse(src, line, format!("invalid {}", STEP_HEADER[j])))
        };
        out.push(ControlStep {
            k: rec[0].parse().map_err(|_| Error::parse(src, line, "invalid k"))?,
            ts: parse_timestamp(&rec[1]).map_err(|e| Error::parse(src, line, e))? as i64,
            t_htg: f(2)?,
            t_clg: f(3)?,
            t_mid: f(4)?,
            t_z: f(5)?,
            t_out: f(6)?,
            n: rec[7].parse().map_err(|_| Error::parse(src, line, "invalid n"))?,
            q: f(8)?,
            e_heat: f(9)?,
            e_cool: f(10)?,
            pmv: f(11)?,
            ppd: f(12)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weather(start: f64, end: f64, t: f64) -> WeatherSeries {
        WeatherSeries::new(vec![(start, t), (end, t)]).unwrap()
    }

    fn intervals(n: &[u32]) -> Vec<IntervalSample> {
        n.iter().enumerate().map(|(k, &c)| IntervalSample::new(k as u64, 1_704_067_200 + 300 * k as i64, c)).collect()
    }

    #[test]
    fn predict_example() {
        let m = ZoneModel::default();
        assert!((predict_zone(&m, 20.0, 0.0, 22.0, 2.0) - 19.08).abs() < 1e-12);
    }

    #[test]
    fn converges_to_fixed_point() {
        let m = ZoneModel::default();
        let mut t = 0.0;
        for _ in 0..500 {
            t = m.predict(t, 5.0, 22.0, 2.0);
        }
        assert!((t - m.steady_state(5.0, 22.0, 2.0)).abs() < 1e-9);
    }

    #[test]
    fn unstable_model_rejected() {
        assert!(ZoneModel::new(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(SimConfig::from_toml_str("[zone]\na = 1.2\nb = 0.0\nc = 0.0\nd = 0.0\n").is_err());
    }

    #[test]
    fn midpoints() {
        assert!((midpoint(15.56, 26.67) - 21.115).abs() < 1e-12);
        assert_eq!(midpoint(20.0, 20.0), 20.0);
    }

    #[test]
    fn candidate_grid_stays_in_bounds() {
        let cfg = ControlConfig::default();
        let c = cfg.candidates();
        assert_eq!(c.len(), 11 * 6);
        assert_eq!(c[0], (15.56, 26.67));
        assert!(c.iter().all(|&(h, k)| (15.56..=21.11).contains(&h) && (23.89..=26.67).contains(&k)));
        assert!(c.iter().any(|&(h, _)| h == 21.11));
    }

    #[test]
    fn vacant_horizon_at_floating_midpoint_sets_back_fully() {
        let cfg = ControlConfig::default();
        let m = ZoneModel::default();
        let u = midpoint(15.56, 26.67);
        // outdoor temperature at which the zone floats at the widest-band midpoint
        let t_out = (u * (1.0 - m.a) - m.c * u) / m.b;
        let plan = mpc_step(&m, u, &[t_out; 12], &[0; 12], &cfg);
        assert_eq!(plan.first(), (15.56, 26.67));
    }

    #[test]
    fn constant_inputs_are_rank_deficient() {
        let traj: Vec<_> = (0..60).map(|_| TrajectoryPoint { t_z: 20.0, t_out: 5.0, u: 22.0, n: 1.0 }).collect();
        assert!(identify_model(&traj).is_err());
        assert!(identify_model(&traj[..10]).is_err());
    }

    #[test]
    fn savings_examples() {
        assert_eq!(savings(15602.9, 12803.2).unwrap(), 17.94);
        assert_eq!(savings(14127.8, 11519.2).unwrap(), 18.46);
        assert_eq!(savings(10.0, 10.0).unwrap(), 0.0);
        assert!(savings(0.0, 1.0).is_err());
    }

    #[test]
    fn baseline_ignores_occupancy_and_weather() {
        let cfg = SimConfig::default();
        let occ = intervals(&[0, 3, 0, 5]);
        let w = weather(1_704_067_200.0, 1_704_070_000.0, -5.0);
        let r = simulate(&SimInputs { occupancy: &occ, controller_occupancy: None, weather: &w }, &cfg, Controller::Baseline, false).unwrap();
        assert!(r.steps.iter().all(|s| (s.t_htg, s.t_clg) == (21.11, 23.89)));
        assert!(r.steps.iter().all(|s| s.e_heat * s.e_cool == 0.0));
    }

    #[test]
    fn empty_horizon() {
        let w = weather(0.0, 1.0, 0.0);
        let r = simulate(&SimInputs { occupancy: &[], controller_occupancy: None, weather: &w }, &SimConfig::default(), Controller::Mpc, false).unwrap();
        assert!(r.steps.is_empty());
        assert_eq!(r.totals().total_kwh, 0.0);
    }

    #[test]
    fn coverage_gaps_are_errors() {
        let mut occ = intervals(&[1, 1, 1]);
        occ[2].start += 300;
        let w = weather(1_704_067_200.0, 1_704_080_000.0, 0.0);
        let inp = SimInputs { occupancy: &occ, controller_occupancy: None, weather: &w };
        assert!(simulate(&inp, &SimConfig::default(), Controller::Mpc, false).is_err());
        let occ = intervals(&[1, 1, 1]);
        let short = weather(1_704_067_200.0, 1_704_067_300.0, 0.0);
        let inp = SimInputs { occupancy: &occ, controller_occupancy: None, weather: &short };
        assert!(simulate(&inp, &SimConfig::default(), Controller::Baseline, false).is_err());
    }

    #[test]
    fn steps_csv_round_trip() {
        let occ = intervals(&[0, 2, 2, 0]);
        let w = weather(1_704_067_200.0, 1_704_080_000.0, 3.0);
        let r = simulate(&SimInputs { occupancy: &occ, controller_occupancy: None, weather: &w }, &SimConfig::default(), Controller::Mpc, false).unwrap();
        let mut buf = Vec::new();
        write_steps(&mut buf, &r.steps).unwrap();
        assert_eq!(read_steps(buf.as_slice()).unwrap(), r.steps);
    }

    #[test]
    fn monthly_rollup_partitions() {
        let mut steps = Vec::new();
        for (i, ts) in [1_704_067_200i64, 1_706_745_600, 1_706_745_900].iter().enumerate() {
            steps.push(ControlStep { k: i as u64, ts: *ts, t_htg: 20.0, t_clg: 24.0, t_mid: 22.0, t_z: 20.0, t_out: 0.0, n: 0, q: 0.08, e_heat: 0.08, e_cool: 0.0, pmv: -1.0, ppd: 26.0 });
        }
        let rows = monthly_rollup(&steps);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].month, rows[1].month, rows[1].steps), (1, 2, 2));
        assert!((rows.iter().map(|r| r.e_heat).sum::<f64>() - 0.24).abs() < 1e-12);
    }

    #[test]
    fn toml_config_round_trip() {
        let cfg = SimConfig::default();
        assert_eq!(SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let partial = SimConfig::from_toml_str("[control]\nhorizon = 6\nforecast = \"persistence\"\n").unwrap();
        assert_eq!(partial.control.horizon, 6);
        assert_eq!(partial.control.forecast, Forecast::Persistence);
        assert!(SimConfig::from_toml_str("[control]\nhorizn = 6\n").is_err());
    }
}
