//! Discrete steering/speed action sets built from four parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub angle_deg: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionParams {
    pub max_speed: f64,
    pub max_angle: f64,
    pub speed_granularity: usize,
    pub angle_granularity: usize,
}

/// Ordered action list: angle-major ascending, then speed ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActionSpaceRepr", into = "ActionSpaceRepr")]
pub struct DiscreteActionSpace {
    params: ActionParams,
    angles: Vec<f64>,
    speeds: Vec<f64>,
    actions: Vec<Action>,
}

/// Serialized form: the generating parameters plus an optional explicit
/// speed list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionSpaceRepr {
    #[serde(flatten)]
    pub params: ActionParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speeds: Option<Vec<f64>>,
}

impl TryFrom<ActionSpaceRepr> for DiscreteActionSpace {
    type Error = Error;

    fn try_from(r: ActionSpaceRepr) -> Result<Self> {
        let p = r.params;
        let space = Self::build(p.max_speed, p.max_angle, p.speed_granularity, p.angle_granularity)?;
        match r.speeds {
            Some(s) => space.override_speeds(&s),
            None => Ok(space),
        }
    }
}

impl From<DiscreteActionSpace> for ActionSpaceRepr {
    fn from(s: DiscreteActionSpace) -> Self {
        let even = DiscreteActionSpace::even_speeds(s.params.max_speed, s.params.speed_granularity);
        let speeds = (even != s.speeds).then(|| s.speeds.clone());
        ActionSpaceRepr {
            params: s.params,
            speeds,
        }
    }
}

impl DiscreteActionSpace {
    pub fn build(max_speed: f64, max_angle: f64, speed_granularity: usize, angle_granularity: usize) -> Result<Self> {
        if !(max_speed > 0.0) || !max_speed.is_finite() {
            return Err(Error::Parameter(format!("max_speed must be positive, got {max_speed}")));
        }
        if !(max_angle >= 0.0) || !max_angle.is_finite() {
            return Err(Error::Parameter(format!("max_angle must be non-negative, got {max_angle}")));
        }
        if speed_granularity == 0 || angle_granularity == 0 {
            return Err(Error::Parameter("granularities must be at least 1".into()));
        }
        if angle_granularity.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "angle granularity {angle_granularity} is even; no straight-ahead action"
            )));
        }
        if max_angle == 0.0 && angle_granularity > 1 {
            return Err(Error::Parameter("max_angle 0 allows only one steering angle".into()));
        }
        let angles = if angle_granularity == 1 {
            vec![0.0]
        } else {
            let half = (angle_granularity - 1) / 2;
            (0..angle_granularity)
                .map(|k| {
                    // Exact zero at the center, exact negation either side.
                    let offset = k as f64 - half as f64;
                    max_angle * offset / half as f64
                })
                .collect()
        };
        let params = ActionParams {
            max_speed,
            max_angle,
            speed_granularity,
            angle_granularity,
        };
        let speeds = Self::even_speeds(max_speed, speed_granularity);
        Ok(Self::assemble(params, angles, speeds))
    }

    fn even_speeds(max_speed: f64, granularity: usize) -> Vec<f64> {
        (1..=granularity)
            .map(|i| if i == granularity { max_speed } else { max_speed * i as f64 / granularity as f64 })
            .collect()
    }

    fn assemble(params: ActionParams, angles: Vec<f64>, speeds: Vec<f64>) -> Self {
        let actions = angles
            .iter()
            .flat_map(|&a| speeds.iter().map(move |&s| Action { angle_deg: a, speed: s }))
            .collect();
        Self {
            params,
            angles,
            speeds,
            actions,
        }
    }

    /// Replace the speed set with an explicit list, e.g. `{3, 5, 8}`.
    pub fn override_speeds(&self, speeds: &[f64]) -> Result<Self> {
        if speeds.is_empty() {
            return Err(Error::Parameter("speed list is empty".into()));
        }
        if let Some(bad) = speeds
            .iter()
            .find(|&&s| !(s > 0.0) || s > self.params.max_speed)
        {
            return Err(Error::Parameter(format!(
                "speed {bad} outside (0, {}]",
                self.params.max_speed
            )));
        }
        let mut sorted = speeds.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let mut params = self.params;
        params.speed_granularity = sorted.len();
        Ok(Self::assemble(params, self.angles.clone(), sorted))
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<Action> {
        self.actions.get(index).copied()
    }

    pub fn index_of(&self, action: Action) -> Option<usize> {
        let a = self.angles.iter().position(|&x| x == action.angle_deg)?;
        let s = self.speeds.iter().position(|&x| x == action.speed)?;
        Some(a * self.speeds.len() + s)
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn params(&self) -> ActionParams {
        self.params
    }

    pub fn check_outputs(&self, outputs: usize) -> Result<()> {
        if outputs != self.len() {
            return Err(Error::Config(format!(
                "policy has {outputs} outputs but the action space has {} actions",
                self.len()
            )));
        }
        Ok(())
    }
}
