//! Intelligent driver model for the cut-in scenario.
//!
//! The automated vehicle follows a background vehicle that moves at constant
//! speed `u_bv` after cutting in at range `r0` with range rate `rdot0`.
//! The ODE for the follower's speed is integrated with forward Euler and the
//! output is the minimum range over the horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmParams {
    /// Maximum acceleration.
    pub alpha: f64,
    /// Desired speed.
    pub beta: f64,
    pub exponent: f64,
    /// Jam distance.
    pub s0: f64,
    pub vehicle_length: f64,
    /// Comfortable deceleration.
    pub b: f64,
    /// Time headway.
    pub headway: f64,
    /// Euler step.
    pub dt: f64,
    /// Speed of the background vehicle.
    pub u_bv: f64,
    pub horizon: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 18.0,
            exponent: 4.0,
            s0: 2.0,
            vehicle_length: 4.0,
            b: 3.0,
            headway: 1.0,
            dt: 0.2,
            u_bv: 20.0,
            horizon: 10.0,
            u_min: 2.0,
            u_max: 40.0,
            a_min: -4.0,
            a_max: 2.0,
        }
    }
}

impl IdmParams {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    /// Number of Euler steps, `round(horizon / dt)`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha,
            self.beta,
            self.exponent,
            self.s0,
            self.vehicle_length,
            self.b,
            self.headway,
            self.dt,
            self.u_bv,
            self.horizon,
            self.u_min,
            self.u_max,
            self.a_min,
            self.a_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("IDM parameters must be finite".into()));
        }
        if !(self.dt > 0.0) || self.horizon / self.dt < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "need dt > 0 and horizon/dt >= 1, got dt = {}, horizon = {}",
                self.dt, self.horizon
            )));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.b > 0.0) {
            return Err(Error::InvalidArgument("alpha, beta and b must be positive".into()));
        }
        if !(self.u_min < self.u_max && self.a_min < self.a_max) {
            return Err(Error::InvalidArgument("speed and acceleration limits must satisfy min < max".into()));
        }
        Ok(())
    }

    /// Relative cost of one simulation, 1 at `dt = 0.2`.
    pub fn cost(&self) -> f64 {
        simulation_cost(self.dt)
    }
}

/// Cost proportional to the number of time steps, normalized to 1 at `dt = 0.2`.
pub fn simulation_cost(dt: f64) -> f64 {
    0.2 / dt
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInput {
    pub r0: f64,
    pub rdot0: f64,
}

impl ScenarioInput {
    pub fn new(r0: f64, rdot0: f64) -> Self {
        Self { r0, rdot0 }
    }
}

/// State at one time node together with the acceleration applied from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdmState {
    pub t: f64,
    pub range: f64,
    pub range_rate: f64,
    pub speed: f64,
    /// Clamped acceleration used on the following step; `None` at the last node.
    pub accel: Option<f64>,
}

/// Unclamped IDM acceleration. A closed gap gives the minimum acceleration.
pub fn idm_acceleration(p: &IdmParams, speed: f64, range_rate: f64, range: f64) -> f64 {
    let gap = range - p.vehicle_length;
    if gap <= 0.0 {
        return p.a_min;
    }
    let desired = p.s0 + speed * p.headway + speed * range_rate / (2.0 * (p.alpha * p.b).sqrt());
    p.alpha * (1.0 - (speed / p.beta).powf(p.exponent) - (desired / gap).powi(2))
}

/// Full Euler trajectory, `steps + 1` nodes from `t = 0`.
pub fn idm_trajectory(p: &IdmParams, input: ScenarioInput) -> Result<Vec<IdmState>> {
    p.validate()?;
    if !(input.r0.is_finite() && input.rdot0.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite scenario {input:?}")));
    }
    if input.r0 <= p.vehicle_length {
        return Err(Error::InvalidArgument(format!(
            "initial range {} must exceed the vehicle length {}",
            input.r0, p.vehicle_length
        )));
    }
    let n = p.steps();
    let raw_speed = p.u_bv - input.rdot0;
    let mut speed = raw_speed.clamp(p.u_min, p.u_max);
    if speed != raw_speed {
        log::debug!("initial speed {raw_speed} clamped to {speed}");
    }
    let mut range = input.r0;
    let mut range_rate = p.u_bv - speed;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..n {
        let accel = idm_acceleration(p, speed, range_rate, range).clamp(p.a_min, p.a_max);
        out.push(IdmState {
            t: k as f64 * p.dt,
            range,
            range_rate,
            speed,
            accel: Some(accel),
        });
        speed = (speed + accel * p.dt).clamp(p.u_min, p.u_max);
        range_rate = p.u_bv - speed;
        range += range_rate * p.dt;
    }
    out.push(IdmState {
        t: n as f64 * p.dt,
        range,
        range_rate,
        speed,
        accel: None,
    });
    Ok(out)
}

/// Minimum range over the horizon, `t = 0` included. Negative values are
/// penetration depth after a collision.
pub fn idm_min_range(p: &IdmParams, input: ScenarioInput) -> Result<f64> {
    Ok(idm_trajectory(p, input)?
        .iter()
        .map(|s| s.range)
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_costs() {
        let p = IdmParams::default();
        assert_eq!(p.steps(), 50);
        assert_eq!(p.cost(), 1.0);
        assert_eq!(IdmParams::with_dt(1.0).cost(), 0.2);
        assert_eq!(IdmParams::with_dt(5.0).steps(), 2);
    }

    #[test]
    fn zero_range_rate_never_exceeds_start() {
        for r0 in [5.0, 12.0, 40.0, 90.0] {
            let m = idm_min_range(&IdmParams::default(), ScenarioInput::new(r0, 0.0)).unwrap();
            assert!(m <= r0);
        }
    }

    #[test]
    fn first_step_by_hand() {
        // u = 25, rdot = -5, R = 20: s* = 2 + 25 - 125/(2 sqrt 6)
        let p = IdmParams::default();
        let traj = idm_trajectory(&p, ScenarioInput::new(20.0, -5.0)).unwrap();
        let s = 2.0 + 25.0 - 125.0 / (2.0 * 6f64.sqrt());
        let a = (2.0 * (1.0 - (25.0f64 / 18.0).powi(4) - (s / 16.0).powi(2))).clamp(-4.0, 2.0);
        assert!((traj[0].accel.unwrap() - a).abs() < 1e-14);
        let u1 = 25.0 + a * 0.2;
        assert!((traj[1].speed - u1).abs() < 1e-14);
        assert!((traj[1].range - (20.0 + (20.0 - u1) * 0.2)).abs() < 1e-12);
    }

    #[test]
    fn clamps_respected() {
        let p = IdmParams::default();
        for &(r0, rd) in &[(5.0, -20.0), (6.0, 10.0), (90.0, -20.0), (30.0, 25.0)] {
            for s in idm_trajectory(&p, ScenarioInput::new(r0, rd)).unwrap() {
                assert!(s.speed >= 2.0 && s.speed <= 40.0);
                if let Some(a) = s.accel {
                    assert!((-4.0..=2.0).contains(&a));
                }
            }
        }
    }

    #[test]
    fn resolution_changes_output() {
        let x = ScenarioInput::new(20.0, -5.0);
        let fine = idm_min_range(&IdmParams::with_dt(0.2), x).unwrap();
        let coarse = idm_min_range(&IdmParams::with_dt(5.0), x).unwrap();
        assert_ne!(fine, coarse);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(idm_min_range(&IdmParams::default(), ScenarioInput::new(3.0, 0.0)).is_err());
        assert!(idm_min_range(&IdmParams::with_dt(20.0), ScenarioInput::new(30.0, 0.0)).is_err());
        let bad = IdmParams {
            u_min: 50.0,
            ..IdmParams::default()
        };
        assert!(idm_min_range(&bad, ScenarioInput::new(30.0, 0.0)).is_err());
    }
}
