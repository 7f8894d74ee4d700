//! Constant-velocity Kalman filter along the fiber.
//!
//! State is `(position m, velocity m/s)`; measurements are positions.

use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionModel {
    /// Step length, seconds.
    pub dt: f64,
    /// Process-noise intensity of the white-acceleration model.
    pub sigma_q2: f64,
    /// Measurement variance, m^2.
    pub sigma_r2: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        MotionModel {
            dt: 0.2,
            sigma_q2: 1.0,
            sigma_r2: 15.0,
        }
    }
}

impl MotionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.sigma_q2 >= 0.0) {
            return Err(Error::Config(format!(
                "sigma_q2 must be non-negative, got {}",
                self.sigma_q2
            )));
        }
        if !(self.sigma_r2 > 0.0) {
            return Err(Error::Config(format!(
                "sigma_r2 must be positive, got {}",
                self.sigma_r2
            )));
        }
        Ok(())
    }

    pub fn transition(&self) -> Matrix2<f64> {
        Matrix2::new(1.0, self.dt, 0.0, 1.0)
    }

    pub fn process_noise(&self) -> Matrix2<f64> {
        let dt = self.dt;
        Matrix2::new(
            dt.powi(3) / 3.0,
            dt.powi(2) / 2.0,
            dt.powi(2) / 2.0,
            dt,
        ) * self.sigma_q2
    }

    pub fn observation(&self) -> RowVector2<f64> {
        RowVector2::new(1.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl GaussianState {
    pub fn new(position: f64, velocity: f64, cov: Matrix2<f64>) -> Self {
        GaussianState {
            mean: Vector2::new(position, velocity),
            cov,
        }
    }

    pub fn position(&self) -> f64 {
        self.mean[0]
    }

    pub fn velocity(&self) -> f64 {
        self.mean[1]
    }

    /// Innovation variance `H cov H^T + sigma_r2` of a position measurement.
    pub fn innovation_variance(&self, model: &MotionModel) -> f64 {
        self.cov[(0, 0)] + model.sigma_r2
    }

    /// Kalman gain for a position measurement.
    pub fn gain(&self, model: &MotionModel) -> Vector2<f64> {
        self.cov.column(0) / self.innovation_variance(model)
    }
}

pub(crate) fn symmetrize(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

pub fn kf_predict(state: &GaussianState, model: &MotionModel) -> GaussianState {
    let g = model.transition();
    GaussianState {
        mean: g * state.mean,
        cov: g * state.cov * g.transpose() + model.process_noise(),
    }
}

pub fn kf_update(state: &GaussianState, z: f64, model: &MotionModel) -> Result<GaussianState> {
    let h = model.observation();
    let s = (h * state.cov * h.transpose())[0] + model.sigma_r2;
    if !(s > 0.0) {
        return Err(Error::Numeric(format!("innovation variance {s} is not positive")));
    }
    let innovation = z - (h * state.mean)[0];
    let gain = state.cov * h.transpose() / s;
    Ok(GaussianState {
        mean: state.mean + gain * innovation,
        cov: symmetrize(&(state.cov - gain * h * state.cov)),
    })
}
