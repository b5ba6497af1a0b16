use serde::{Deserialize, Serialize};

use super::Track;
use crate::action::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub x: f64,
    pub y: f64,
    /// Radians, counter-clockwise from +x.
    pub heading: f64,
    pub speed: f64,
    /// Front-wheel angle in radians.
    pub steering: f64,
    pub time: f64,
    /// Centerline progress in `[0, L)`.
    pub progress: f64,
}

impl CarState {
    /// Standing start at the track's start waypoint.
    pub fn at_start(track: &Track) -> Self {
        let ([x, y], heading) = track.start_pose();
        Self {
            x,
            y,
            heading,
            speed: 0.0,
            steering: 0.0,
            time: 0.0,
            progress: track.project([x, y]).progress,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    /// First-order speed time constant in seconds.
    pub speed_tau: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.16,
            speed_tau: 0.15,
        }
    }
}

/// Advance the kinematic bicycle by `dt` under a constant command.
///
/// Speed relaxes exponentially toward the command and the path over the step
/// is integrated exactly: with the steering held, curvature is constant so
/// the car moves along a circular arc whose length is the integral of speed.
/// Progress is left untouched; see [`step_on_track`].
pub fn step_dynamics(state: &CarState, action: Action, dt: f64, vehicle: &VehicleParams) -> CarState {
    let target = action.speed.max(0.0);
    let (speed, distance) = if vehicle.speed_tau > 0.0 {
        let decay = (-dt / vehicle.speed_tau).exp();
        let gap = state.speed - target;
        (target + gap * decay, target * dt + gap * vehicle.speed_tau * (1.0 - decay))
    } else {
        (target, target * dt)
    };
    let steering = action.angle_deg.to_radians();
    let curvature = steering.tan() / vehicle.wheelbase;
    let turn = curvature * distance;
    let (mut x, mut y) = (state.x, state.y);
    if turn.abs() < 1e-12 {
        x += distance * state.heading.cos();
        y += distance * state.heading.sin();
    } else {
        let h1 = state.heading + turn;
        x += (h1.sin() - state.heading.sin()) / curvature;
        y += (state.heading.cos() - h1.cos()) / curvature;
    }
    CarState {
        x,
        y,
        heading: state.heading + turn,
        speed: speed.max(0.0),
        steering,
        time: state.time + dt,
        progress: state.progress,
    }
}

/// [`step_dynamics`] followed by re-projection onto the centerline.
pub fn step_on_track(track: &Track, state: &CarState, action: Action, dt: f64, vehicle: &VehicleParams) -> CarState {
    let mut next = step_dynamics(state, action, dt, vehicle);
    next.progress = track.project([next.x, next.y]).progress;
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(speed: f64) -> CarState {
        CarState {
            x: 1.0,
            y: 2.0,
            heading: 0.0,
            speed,
            steering: 0.0,
            time: 0.0,
            progress: 0.0,
        }
    }

    #[test]
    fn straight_line_motion() {
        let v = 1.25;
        let dt = 1.0 / 15.0;
        let s0 = CarState { x: 0.0, ..state(v) };
        let s = step_dynamics(&s0, Action { angle_deg: 0.0, speed: v }, dt, &VehicleParams::default());
        assert_eq!(s.x, v * dt);
        assert_eq!(s.y, 2.0);
        assert_eq!(s.speed, v);
    }

    #[test]
    fn standing_still() {
        let s0 = state(0.0);
        let s = step_dynamics(&s0, Action { angle_deg: 0.0, speed: 0.0 }, 0.1, &VehicleParams::default());
        assert_eq!((s.x, s.y, s.heading, s.speed), (s0.x, s0.y, s0.heading, s0.speed));
        assert_eq!(s.time, 0.1);
    }

    #[test]
    fn full_circle_returns_to_start() {
        let vehicle = VehicleParams::default();
        let (v, delta) = (1.5, 20.0f64);
        let radius = vehicle.wheelbase / delta.to_radians().tan();
        let dt = 1.0 / 15.0;
        let per_step = v * dt / radius;
        let steps = (2.0 * std::f64::consts::PI / per_step).floor() as usize;
        let mut s = state(v);
        for _ in 0..steps {
            s = step_dynamics(&s, Action { angle_deg: delta, speed: v }, dt, &vehicle);
        }
        let rest = (2.0 * std::f64::consts::PI - s.heading) * radius / v;
        s = step_dynamics(&s, Action { angle_deg: delta, speed: v }, rest, &vehicle);
        assert!((s.heading - 2.0 * std::f64::consts::PI).abs() < 1e-9);
        assert!((s.x - 1.0).hypot(s.y - 2.0) < 1e-6 * radius);
    }

    #[test]
    fn splitting_dt_is_consistent() {
        let vehicle = VehicleParams::default();
        let a = Action { angle_deg: 10.0, speed: 2.0 };
        let whole = step_dynamics(&state(0.5), a, 0.08, &vehicle);
        let mut quarter = state(0.5);
        for _ in 0..4 {
            quarter = step_dynamics(&quarter, a, 0.02, &vehicle);
        }
        assert!((whole.x - quarter.x).abs() < 0.08 * 0.08);
        assert!((whole.y - quarter.y).abs() < 0.08 * 0.08);
        assert!((whole.speed - quarter.speed).abs() < 1e-12);
    }

    #[test]
    fn speed_never_negative() {
        let mut s = state(3.0);
        for _ in 0..50 {
            s = step_dynamics(&s, Action { angle_deg: -30.0, speed: 0.0 }, 0.07, &VehicleParams::default());
            assert!(s.speed >= 0.0);
        }
    }
}
