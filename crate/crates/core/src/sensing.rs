//! Probabilistic sensing model.

use thiserror::Error;

use crate::geometry::Position;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Error, PartialEq)]
pub enum SensingError {
    #[error("sensing location lies outside the target's sensing cone")]
    InfeasibleSensing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingParams {
    /// Sensing factor, per second-meter.
    pub lambda_s: f64,
    pub t_f: f64,
    /// Maximum sensing angle, radians.
    pub phi: f64,
    pub d_v: f64,
}

impl SensingParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            lambda_s: cfg.lambda_s,
            t_f: cfg.t_f_s,
            phi: cfg.phi_rad(),
            d_v: cfg.d_v,
        }
    }
}

/// Successful sensing probability of a one-frame sensing pass.
///
/// The cone test `d sin(phi) <= h tan(phi)` is evaluated in the equivalent
/// form `rho <= h tan(phi)` on the horizontal offset, with a relative slack of
/// `1e-9` so points projected exactly onto the cone boundary stay feasible.
pub fn ssp(uav: &Position, target: &Position, p: &SensingParams) -> f64 {
    if uav.z <= 0.0 {
        return 0.0;
    }
    let range = uav.z * p.phi.tan();
    let rho = uav.horizontal_distance(target);
    if rho <= range * (1.0 + 1e-9) {
        (-p.lambda_s * p.t_f * uav.distance(target)).exp()
    } else {
        0.0
    }
}

/// Expected data a UAV must collect so that `d_v` of it is valid.
pub fn required_data(d_v: f64, ssp: f64) -> Result<f64, SensingError> {
    if ssp > 0.0 {
        Ok(d_v / ssp)
    } else {
        Err(SensingError::InfeasibleSensing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> SensingParams {
        SensingParams {
            lambda_s: 0.005,
            t_f: 1.0,
            phi: 30f64.to_radians(),
            d_v: 10.0,
        }
    }

    #[test]
    fn ssp_examples() {
        let t = Position::ground(0.0, 0.0);
        let p = params();
        assert_relative_eq!(ssp(&Position::new(0.0, 0.0, 50.0), &t, &p), (-0.25f64).exp());
        assert_relative_eq!(ssp(&Position::new(0.0, 0.0, 50.0), &t, &p), 0.7788, epsilon = 1e-4);
        assert_eq!(ssp(&Position::new(100.0, 0.0, 50.0), &t, &p), 0.0);
        let edge = 50.0 * p.phi.tan();
        let at_edge = ssp(&Position::new(edge, 0.0, 50.0), &t, &p);
        assert!(at_edge > 0.0);
        assert_relative_eq!(at_edge, (-0.005 * 50.0 / p.phi.cos()).exp(), max_relative = 1e-12);
        assert_relative_eq!(at_edge, 0.749, epsilon = 1e-3);
    }

    #[test]
    fn ssp_non_increasing_inside_cone() {
        let t = Position::ground(10.0, -5.0);
        let p = params();
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let h = 50.0 + i as f64;
            let v = ssp(&Position::new(10.0, -5.0, h), &t, &p);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn required_data_examples() {
        assert_eq!(required_data(10.0, 1.0).unwrap(), 10.0);
        assert_relative_eq!(required_data(10.0, 0.7788).unwrap(), 12.84, epsilon = 0.005);
        assert_eq!(required_data(10.0, 0.0), Err(SensingError::InfeasibleSensing));
        for s in [0.01, 0.3, 0.99, 1.0] {
            assert!(required_data(10.0, s).unwrap() >= 10.0);
        }
    }
}
