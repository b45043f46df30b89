//! Fanger PMV/PPD thermal comfort.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PMV_REPORT_LIMIT: f64 = 3.5;
const TOLERANCE: f64 = 1e-5;
const MAX_ITERATIONS: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComfortParams {
    /// Metabolic rate, met.
    pub met: f64,
    /// Clothing insulation outside the summer months, clo.
    pub clo_winter: f64,
    pub clo_summer: f64,
    /// Calendar months (1 to 12) that use `clo_summer`.
    pub summer_months: Vec<u32>,
    /// Relative humidity, percent.
    pub rh: f64,
    /// Relative air speed, m/s.
    pub air_speed: f64,
}

impl Default for ComfortParams {
    fn default() -> Self {
        ComfortParams {
            met: 1.1,
            clo_winter: 1.0,
            clo_summer: 0.5,
            summer_months: vec![6, 7, 8],
            rh: 50.0,
            air_speed: 0.1,
        }
    }
}

impl ComfortParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("met", self.met), ("clo_winter", self.clo_winter), ("clo_summer", self.clo_summer), ("air_speed", self.air_speed)];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("comfort.{name} must be positive, got {v}")));
        }
        if !(self.rh > 0.0 && self.rh < 100.0) {
            return Err(Error::Config(format!("comfort.rh must lie in (0,100), got {}", self.rh)));
        }
        if let Some(m) = self.summer_months.iter().find(|m| !(1..=12).contains(*m)) {
            return Err(Error::Config(format!("comfort.summer_months contains invalid month {m}")));
        }
        Ok(())
    }

    pub fn clo_for_month(&self, month: u32) -> f64 {
        if self.summer_months.contains(&month) {
            self.clo_summer
        } else {
            self.clo_winter
        }
    }
}

/// Conditions for one comfort evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComfortInputs {
    /// Air temperature, °C.
    pub ta: f64,
    /// Mean radiant temperature, °C.
    pub tr: f64,
    pub air_speed: f64,
    pub rh: f64,
    pub met: f64,
    pub clo: f64,
}

/// Predicted mean vote from the Fanger heat balance. The clothing surface
/// temperature is found by damped fixed-point iteration.
pub fn pmv(inp: &ComfortInputs) -> Result<f64> {
    let ComfortInputs { ta, tr, air_speed, rh, met, clo } = *inp;
    let pa = rh * 10.0 * (16.6536 - 4030.183 / (ta + 235.0)).exp();
    let icl = 0.155 * clo;
    let m = met * 58.15;
    let mw = m;
    let fcl = if icl <= 0.078 { 1.0 + 1.29 * icl } else { 1.05 + 0.645 * icl };
    let hcf = 12.1 * air_speed.sqrt();
    let taa = ta + 273.0;
    let tra = tr + 273.0;
    let tcla = taa + (35.5 - ta) / (3.5 * icl + 0.1);

    let p1 = icl * fcl;
    let p2 = p1 * 3.96;
    let p3 = p1 * 100.0;
    let p4 = p1 * taa;
    let p5 = 308.7 - 0.028 * mw + p2 * (tra / 100.0).powi(4);

    let mut xn = tcla / 100.0;
    let mut xf = tcla / 50.0;
    let mut hc = hcf;
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        xf = (xf + xn) / 2.0;
        let hcn = 2.38 * (100.0 * xf - taa).abs().powf(0.25);
        hc = hcf.max(hcn);
        xn = (p5 + p4 * hc - p2 * xf.powi(4)) / (100.0 + p3 * hc);
        if (xn - xf).abs() <= TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged || !xn.is_finite() {
        return Err(Error::Numerical(format!(
            "clothing temperature iteration did not converge for ta={ta} tr={tr} vel={air_speed} rh={rh} met={met} clo={clo}"
        )));
    }
    let tcl = 100.0 * xn - 273.0;

    let hl1 = 3.05e-3 * (5733.0 - 6.99 * mw - pa);
    let hl2 = if mw > 58.15 { 0.42 * (mw - 58.15) } else { 0.0 };
    let hl3 = 1.7e-5 * m * (5867.0 - pa);
    let hl4 = 0.0014 * m * (34.0 - ta);
    let hl5 = 3.96 * fcl * (xn.powi(4) - (tra / 100.0).powi(4));
    let hl6 = fcl * hc * (tcl - ta);
    let ts = 0.303 * (-0.036 * m).exp() + 0.028;
    Ok(ts * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6))
}

/// Predicted percentage dissatisfied for a given PMV.
pub fn ppd(pmv: f64) -> f64 {
    100.0 - 95.0 * (-0.03353 * pmv.powi(4) - 0.2179 * pmv.powi(2)).exp()
}

/// PMV clamped to the reporting range and the PPD of that clamped value.
pub fn pmv_ppd(t_z: f64, params: &ComfortParams, month: u32) -> Result<(f64, f64)> {
    let raw = pmv(&ComfortInputs {
        ta: t_z,
        tr: t_z,
        air_speed: params.air_speed,
        rh: params.rh,
        met: params.met,
        clo: params.clo_for_month(month),
    })?;
    let v = raw.clamp(-PMV_REPORT_LIMIT, PMV_REPORT_LIMIT);
    Ok((v, ppd(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppd_closed_form() {
        assert_eq!(ppd(0.0), 5.0);
        assert!((ppd(3.0) - 99.116).abs() < 1e-3);
        assert_eq!(ppd(1.3), ppd(-1.3));
    }

    #[test]
    fn iso_reference_case() {
        let v = pmv(&ComfortInputs { ta: 22.0, tr: 22.0, air_speed: 0.1, rh: 60.0, met: 1.2, clo: 0.5 }).unwrap();
        assert!((v + 0.75).abs() < 0.01, "{v}");
        assert!((ppd(v) - 17.0).abs() < 0.5);
    }

    #[test]
    fn warmer_is_warmer() {
        let p = ComfortParams::default();
        let cold = pmv_ppd(18.0, &p, 1).unwrap().0;
        let warm = pmv_ppd(26.0, &p, 1).unwrap().0;
        assert!(cold < 0.0 && warm > 0.0);
        assert!(pmv_ppd(40.0, &p, 7).unwrap().0 <= PMV_REPORT_LIMIT);
    }

    #[test]
    fn summer_clothing() {
        let p = ComfortParams::default();
        assert_eq!(p.clo_for_month(7), 0.5);
        assert_eq!(p.clo_for_month(12), 1.0);
        assert!(pmv_ppd(24.0, &p, 7).unwrap().0 < pmv_ppd(24.0, &p, 1).unwrap().0);
    }
}
