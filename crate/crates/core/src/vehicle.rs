//! Kinematic single-track (bicycle) model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, ConvexPolygon, RigidTransform, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, yaw: f64, speed: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
            speed,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.yaw)
    }

    /// Same state expressed after the rigid motion `t`.
    pub fn transformed(&self, t: &RigidTransform) -> VehicleState {
        let p = t.apply(self.position());
        VehicleState::new(p.x, p.y, self.yaw + t.rotation, self.speed)
    }
}

/// Planar position and heading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub const ORIGIN: Pose = Pose {
        x: 0.0,
        y: 0.0,
        yaw: 0.0,
    };

    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform::new(self.position(), self.yaw)
    }

    /// Pose reached by moving by `local` expressed in this pose's frame.
    pub fn then(&self, local: &Pose) -> Pose {
        let p = self.transform().apply(local.position());
        Pose::new(p.x, p.y, self.yaw + local.yaw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleInput {
    pub steering_angle: f64,
    pub target_speed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub body_length: f64,
    pub body_width: f64,
    pub max_speed: f64,
    pub max_steering: f64,
}

impl Default for VehicleParams {
    /// Small-scale lab vehicle.
    fn default() -> Self {
        Self {
            wheelbase: 0.15,
            body_length: 0.22,
            body_width: 0.107,
            max_speed: 1.5,
            max_steering: 0.6,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [
            self.wheelbase,
            self.body_length,
            self.body_width,
            self.max_speed,
            self.max_steering,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(Error::InvalidInput(format!(
                "vehicle parameters must be positive: {self:?}"
            )));
        }
        if self.body_length <= self.wheelbase {
            return Err(Error::InvalidInput(format!(
                "body length {} must exceed wheelbase {}",
                self.body_length, self.wheelbase
            )));
        }
        Ok(())
    }

    pub fn check_input(&self, u: &VehicleInput) -> Result<()> {
        // tiny slack for level tables computed in floating point
        let slack = 1e-12;
        if !(u.steering_angle.abs() <= self.max_steering + slack) {
            return Err(Error::InvalidInput(format!(
                "steering {} exceeds {}",
                u.steering_angle, self.max_steering
            )));
        }
        if !(u.target_speed >= 0.0 && u.target_speed <= self.max_speed + slack) {
            return Err(Error::InvalidInput(format!(
                "target speed {} outside [0, {}]",
                u.target_speed, self.max_speed
            )));
        }
        Ok(())
    }
}

/// Forward-Euler integration over `dt` split into `substeps`, with the speed
/// ramping linearly from the current speed to the target over the interval.
pub fn integrate(
    s: &VehicleState,
    u: &VehicleInput,
    params: &VehicleParams,
    dt: f64,
    substeps: usize,
) -> Result<VehicleState> {
    let traj = integrate_trajectory(s, u, params, dt, substeps, substeps)?;
    Ok(*traj.last().expect("trajectory has at least one state"))
}

/// Like [`integrate`] but returns `samples + 1` states evenly spaced in time
/// (start included). `substeps` must be a multiple of `samples`.
pub fn integrate_trajectory(
    s: &VehicleState,
    u: &VehicleInput,
    params: &VehicleParams,
    dt: f64,
    substeps: usize,
    samples: usize,
) -> Result<Vec<VehicleState>> {
    params.check_input(u)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("time step {dt} must be positive")));
    }
    if substeps == 0 || samples == 0 || !substeps.is_multiple_of(samples) {
        return Err(Error::InvalidInput(format!(
            "{substeps} substeps cannot be split into {samples} samples"
        )));
    }
    if s.speed < 0.0 {
        return Err(Error::InvalidInput(format!("negative speed {}", s.speed)));
    }
    let h = dt / substeps as f64;
    let accel = (u.target_speed - s.speed) / dt;
    let yaw_gain = u.steering_angle.tan() / params.wheelbase;
    let every = substeps / samples;

    let (mut x, mut y, mut yaw, mut v) = (s.x, s.y, s.yaw, s.speed);
    let mut out = Vec::with_capacity(samples + 1);
    out.push(*s);
    for k in 0..substeps {
        let (sin, cos) = yaw.sin_cos();
        x += h * v * cos;
        y += h * v * sin;
        yaw += h * v * yaw_gain;
        v = s.speed + accel * h * (k + 1) as f64;
        if (k + 1) % every == 0 {
            out.push(VehicleState::new(x, y, yaw, v));
        }
    }
    // the ramp lands on the target exactly
    if let Some(last) = out.last_mut() {
        last.speed = u.target_speed;
    }
    Ok(out)
}

/// Body rectangle centered on the reference point and aligned with the heading.
pub fn footprint(s: &VehicleState, p: &VehicleParams) -> ConvexPolygon {
    ConvexPolygon::rectangle(s.position(), s.yaw, p.body_length, p.body_width).expect("validated vehicle dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn straight_line() {
        let s = VehicleState::new(0.0, 0.0, 0.0, 1.0);
        let u = VehicleInput {
            steering_angle: 0.0,
            target_speed: 1.0,
        };
        let e = integrate(&s, &u, &params(), 0.2, 20).unwrap();
        assert!((e.x - 0.2).abs() < 1e-12);
        assert_eq!(e.y, 0.0);
        assert_eq!(e.yaw, 0.0);
        assert_eq!(e.speed, 1.0);
    }

    #[test]
    fn standstill_is_fixed_point() {
        let s = VehicleState::new(0.4, -1.0, 0.7, 0.0);
        let u = VehicleInput {
            steering_angle: 0.3,
            target_speed: 0.0,
        };
        assert_eq!(integrate(&s, &u, &params(), 0.2, 10).unwrap(), s);
    }

    #[test]
    fn converges_to_fine_step_reference() {
        let s = VehicleState::new(0.0, 0.0, 0.0, 1.0);
        let u = VehicleInput {
            steering_angle: 0.2,
            target_speed: 1.0,
        };
        let reference = integrate(&s, &u, &params(), 0.2, 10_000).unwrap();
        let coarse = integrate(&s, &u, &params(), 0.2, 500).unwrap();
        assert!(coarse.position().dist(reference.position()) < 1e-4);
        // halving the step roughly halves the error (first-order method)
        let e1 = integrate(&s, &u, &params(), 0.2, 50)
            .unwrap()
            .position()
            .dist(reference.position());
        let e2 = integrate(&s, &u, &params(), 0.2, 100)
            .unwrap()
            .position()
            .dist(reference.position());
        assert!(e2 < e1 && e2 > 0.3 * e1, "e1 {e1}, e2 {e2}");
    }

    #[test]
    fn rejects_invalid_inputs() {
        let s = VehicleState::new(0.0, 0.0, 0.0, 1.0);
        let too_much_steer = VehicleInput {
            steering_angle: 0.7,
            target_speed: 1.0,
        };
        assert!(integrate(&s, &too_much_steer, &params(), 0.2, 10).is_err());
        let reverse = VehicleInput {
            steering_angle: 0.0,
            target_speed: -0.1,
        };
        assert!(integrate(&s, &reverse, &params(), 0.2, 10).is_err());
        let fine = VehicleInput {
            steering_angle: 0.0,
            target_speed: 1.0,
        };
        assert!(integrate(&s, &fine, &params(), 0.0, 10).is_err());
        assert!(integrate(&s, &fine, &params(), 0.2, 0).is_err());
    }

    #[test]
    fn footprint_corners() {
        let p = params();
        let f = footprint(&VehicleState::new(0.0, 0.0, 0.0, 0.0), &p);
        assert!(f
            .vertices()
            .iter()
            .any(|v| (v.x - 0.11).abs() < 1e-12 && (v.y - 0.0535).abs() < 1e-12));
        let flipped = footprint(&VehicleState::new(0.0, 0.0, PI, 0.0), &p);
        for v in f.vertices() {
            assert!(flipped.vertices().iter().any(|w| w.dist(*v) < 1e-12));
        }
    }

    #[test]
    fn footprint_rotated_pose() {
        let p = params();
        let f = footprint(&VehicleState::new(1.0, 2.0, PI / 4.0, 0.0), &p);
        let c = (PI / 4.0).cos();
        // front-left corner (0.11, 0.0535) rotated by 45 degrees
        let expected = Vec2::new(1.0 + c * (0.11 - 0.0535), 2.0 + c * (0.11 + 0.0535));
        assert!(f.vertices().iter().any(|v| v.dist(expected) < 1e-12));
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        let mut bad = params();
        bad.body_length = 0.1;
        assert!(bad.validate().is_err());
        bad = params();
        bad.max_speed = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pose_then_matches_transform() {
        let a = Pose::new(1.0, 2.0, 0.5);
        let b = Pose::new(0.3, -0.1, 0.2);
        let c = a.then(&b);
        let expect = a.transform().compose(&b.transform());
        assert!((c.x - expect.translation.x).abs() < 1e-12);
        assert!((c.yaw - expect.rotation).abs() < 1e-12);
    }
}
