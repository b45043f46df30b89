//! Constant-velocity Kalman filter over `(cx, cy, aspect, height)` and their
//! velocities. Noise standard deviations scale with the box height.

use nalgebra::{SMatrix, SVector};

use crate::ingest::BBox;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type Measurement = SVector<f64, 4>;

const STD_WEIGHT_POSITION: f64 = 1.0 / 20.0;
const STD_WEIGHT_VELOCITY: f64 = 1.0 / 160.0;

#[derive(Debug, Clone)]
pub struct KalmanFilter {
    motion: StateCovariance,
    observation: SMatrix<f64, 4, 8>,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        Self::new()
    }
}

impl KalmanFilter {
    pub fn new() -> Self {
        let mut motion = StateCovariance::identity();
        for i in 0..4 {
            motion[(i, i + 4)] = 1.0;
        }
        KalmanFilter {
            motion,
            observation: SMatrix::<f64, 4, 8>::identity(),
        }
    }

    pub fn transition(&self) -> &StateCovariance {
        &self.motion
    }

    pub fn initiate(&self, bbox: &BBox) -> (StateVector, StateCovariance) {
        let m = to_measurement(bbox);
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&m);
        let h = m[3];
        let std = [
            2.0 * STD_WEIGHT_POSITION * h,
            2.0 * STD_WEIGHT_POSITION * h,
            1e-2,
            2.0 * STD_WEIGHT_POSITION * h,
            10.0 * STD_WEIGHT_VELOCITY * h,
            10.0 * STD_WEIGHT_VELOCITY * h,
            1e-5,
            10.0 * STD_WEIGHT_VELOCITY * h,
        ];
        (mean, diag_squared(&std))
    }

    pub fn predict(&self, mean: &StateVector, cov: &StateCovariance) -> (StateVector, StateCovariance) {
        let h = mean[3].abs();
        let std = [
            STD_WEIGHT_POSITION * h,
            STD_WEIGHT_POSITION * h,
            1e-2,
            STD_WEIGHT_POSITION * h,
            STD_WEIGHT_VELOCITY * h,
            STD_WEIGHT_VELOCITY * h,
            1e-5,
            STD_WEIGHT_VELOCITY * h,
        ];
        let mean = self.motion * mean;
        let cov = self.motion * cov * self.motion.transpose() + diag_squared(&std);
        (mean, symmetrize(cov))
    }

    /// Measurement update in Joseph form, which keeps the covariance
    /// symmetric positive semi-definite under rounding.
    pub fn update(&self, mean: &StateVector, cov: &StateCovariance, bbox: &BBox) -> (StateVector, StateCovariance) {
        let z = to_measurement(bbox);
        let h = mean[3].abs();
        let r_std = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h];
        let r = SMatrix::<f64, 4, 4>::from_diagonal(&SVector::<f64, 4>::from_iterator(r_std.iter().map(|s| s * s)));
        let hm = &self.observation;
        let s = hm * cov * hm.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            return (*mean, *cov);
        };
        let gain = cov * hm.transpose() * s_inv;
        let innovation = z - hm * mean;
        let new_mean = mean + gain * innovation;
        let i_kh = StateCovariance::identity() - gain * hm;
        let new_cov = i_kh * cov * i_kh.transpose() + gain * r * gain.transpose();
        (new_mean, symmetrize(new_cov))
    }
}

fn to_measurement(b: &BBox) -> Measurement {
    let (cx, cy) = b.center();
    Measurement::new(cx, cy, b.w / b.h, b.h)
}

/// Box corresponding to the position part of a state vector.
pub fn state_to_bbox(mean: &StateVector) -> BBox {
    let h = mean[3];
    let w = mean[2] * h;
    BBox::new(mean[0] - w / 2.0, mean[1] - h / 2.0, w, h)
}

fn diag_squared(std: &[f64; 8]) -> StateCovariance {
    StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)))
}

fn symmetrize(m: StateCovariance) -> StateCovariance {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(vx: f64) -> (StateVector, StateCovariance) {
        let kf = KalmanFilter::new();
        let (mut mean, cov) = kf.initiate(&BBox::new(0.0, 0.0, 10.0, 20.0));
        mean[4] = vx;
        (mean, cov)
    }

    #[test]
    fn stationary_predict_grows_covariance() {
        let kf = KalmanFilter::new();
        let (mean, cov) = state(0.0);
        let (m2, c2) = kf.predict(&mean, &cov);
        assert_eq!(m2.fixed_rows::<4>(0), mean.fixed_rows::<4>(0));
        assert!(c2.trace() > cov.trace());
    }

    #[test]
    fn constant_velocity_advance() {
        let kf = KalmanFilter::new();
        let (mean, cov) = state(1.0);
        let (m2, _) = kf.predict(&mean, &cov);
        assert!((m2[0] - mean[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_predicts_equal_squared_transition() {
        let kf = KalmanFilter::new();
        let (mut mean, cov) = state(1.5);
        mean[5] = -0.5;
        mean[7] = 0.25;
        let (m1, c1) = kf.predict(&mean, &cov);
        let (m2, _) = kf.predict(&m1, &c1);
        let f2 = kf.transition() * kf.transition();
        let direct = f2 * mean;
        assert!((m2 - direct).abs().max() < 1e-12);
    }

    #[test]
    fn update_pulls_towards_measurement() {
        let kf = KalmanFilter::new();
        let (mean, cov) = state(0.0);
        let (p, pc) = kf.predict(&mean, &cov);
        let (u, uc) = kf.update(&p, &pc, &BBox::new(4.0, 0.0, 10.0, 20.0));
        assert!(u[0] > p[0] && u[0] < 9.0 + 1e-9);
        assert!(uc.trace() < pc.trace());
        assert!((uc - uc.transpose()).abs().max() <= 1e-12);
    }

    #[test]
    fn bbox_round_trip() {
        let b = BBox::new(3.0, 4.0, 10.0, 20.0);
        let (mean, _) = KalmanFilter::new().initiate(&b);
        let back = state_to_bbox(&mean);
        assert!((back.x - 3.0).abs() < 1e-12 && (back.w - 10.0).abs() < 1e-12);
    }
}
