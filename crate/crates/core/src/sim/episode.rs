use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{is_off_track, step_on_track, CarState, Track, VehicleParams};
use crate::action::DiscreteActionSpace;
use crate::error::{Error, Result, ResultExt};
use crate::render::{Observation, Renderer, VisualDomain};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLimits {
    pub fps: f64,
    /// Relative timing jitter `j`: each interval is `(1/fps)(1 + U[-j, j])`.
    pub jitter: f64,
    pub timeout_s: f64,
    /// Share of the lap that must be covered before a start-line crossing counts.
    pub min_lap_coverage: f64,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self {
            fps: 15.0,
            jitter: 0.05,
            timeout_s: 30.0,
            min_lap_coverage: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub step_cost: f64,
    pub crash_penalty: f64,
    pub lap_bonus: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            step_cost: 0.01,
            crash_penalty: 10.0,
            lap_bonus: 10.0,
        }
    }
}

/// Per-step reward without the lap bonus.
pub fn reward(track: &Track, prev: &CarState, curr: &CarState, off_track: bool, cfg: &RewardConfig) -> f64 {
    if off_track {
        -cfg.crash_penalty
    } else {
        track.progress_delta(prev.progress, curr.progress) - cfg.step_cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    LapComplete,
    OffTrack,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Id of the frame the decision was made on (the step index).
    pub frame_id: u64,
    /// State after the step.
    pub state: CarState,
    pub action: usize,
    pub reward: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: CarState,
    pub steps: Vec<Step>,
    pub terminal: Terminal,
    pub lap_time: Option<f64>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// What a driver sees before choosing an action.
pub struct StepContext<'a> {
    pub track: &'a Track,
    pub state: &'a CarState,
    /// Present when the driver asked for frames.
    pub observation: Option<&'a Observation>,
    pub step: usize,
}

pub trait Driver {
    fn needs_frames(&self) -> bool {
        true
    }

    fn decide(&mut self, ctx: &StepContext<'_>, rng: &mut SimRng) -> usize;
}

/// Everything about an episode except the visual domain and the driver.
#[derive(Debug, Clone)]
pub struct Environment {
    pub track: Track,
    pub renderer: Renderer,
    pub actions: DiscreteActionSpace,
    pub vehicle: VehicleParams,
    pub limits: EpisodeLimits,
    pub reward: RewardConfig,
}

impl Environment {
    /// Render→decide→step until the lap completes, the car leaves the
    /// track, or time runs out.
    pub fn run_episode<D: Driver + ?Sized>(&self, driver: &mut D, domain: &VisualDomain, rng: &mut SimRng) -> Trajectory {
        let track = &self.track;
        let length = track.length();
        let start = CarState::at_start(track);
        let base_dt = 1.0 / self.limits.fps;
        let mut state = start;
        let mut covered = 0.0;
        let mut steps = Vec::new();
        loop {
            let idx = steps.len();
            let obs = driver.needs_frames().then(|| {
                let mut o = self.renderer.render(track, &state, domain);
                o.frame_id = idx as u64;
                o
            });
            let ctx = StepContext {
                track,
                state: &state,
                observation: obs.as_ref(),
                step: idx,
            };
            let action = driver.decide(&ctx, rng);
            let command = self
                .actions
                .get(action)
                .unwrap_or_else(|| panic!("driver chose action {action} of {}", self.actions.len()));
            let eps = if self.limits.jitter > 0.0 {
                rng.random_range(-self.limits.jitter..=self.limits.jitter)
            } else {
                0.0
            };
            let dt = base_dt * (1.0 + eps);
            let next = step_on_track(track, &state, command, dt, &self.vehicle);
            let delta = track.progress_delta(state.progress, next.progress);
            let off = is_off_track(track, next.x, next.y);
            let before = (state.progress - start.progress).rem_euclid(length);
            let after = (next.progress - start.progress).rem_euclid(length);
            let crossed = delta > 0.0 && after < before;
            let lap = !off && crossed && covered + delta >= self.limits.min_lap_coverage * length;
            covered += delta;
            let mut r = reward(track, &state, &next, off, &self.reward);
            if lap {
                r += self.reward.lap_bonus;
            }
            steps.push(Step {
                frame_id: idx as u64,
                state: next,
                action,
                reward: r,
                dt,
            });
            state = next;
            let terminal = if off {
                Some(Terminal::OffTrack)
            } else if lap {
                Some(Terminal::LapComplete)
            } else if state.time >= self.limits.timeout_s {
                Some(Terminal::Timeout)
            } else {
                None
            };
            if let Some(terminal) = terminal {
                return Trajectory {
                    start,
                    steps,
                    terminal,
                    lap_time: lap.then_some(state.time),
                };
            }
        }
    }
}

/// Pure-pursuit controller on the known centerline, snapped to the nearest
/// discrete steering angle at a fixed speed index.
#[derive(Debug, Clone)]
pub struct PurePursuit {
    pub actions: DiscreteActionSpace,
    pub speed: f64,
    pub lookahead: f64,
    pub wheelbase: f64,
}

impl PurePursuit {
    pub fn command_for(&self, track: &Track, state: &CarState) -> usize {
        let (target, _) = track.point_at(state.progress + self.lookahead);
        let alpha = (target[1] - state.y).atan2(target[0] - state.x) - state.heading;
        let alpha = alpha.sin().atan2(alpha.cos());
        let dist = (target[0] - state.x).hypot(target[1] - state.y).max(1e-6);
        let steer = (2.0 * self.wheelbase * alpha.sin() / dist).atan().to_degrees();
        let speed = self
            .actions
            .speeds()
            .iter()
            .copied()
            .min_by(|a, b| (a - self.speed).abs().total_cmp(&(b - self.speed).abs()))
            .expect("non-empty");
        let angle = self
            .actions
            .angles()
            .iter()
            .copied()
            .min_by(|a, b| (a - steer).abs().total_cmp(&(b - steer).abs()))
            .expect("non-empty");
        self.actions
            .index_of(crate::action::Action { angle_deg: angle, speed })
            .expect("angle and speed come from the space")
    }
}

impl Driver for PurePursuit {
    fn needs_frames(&self) -> bool {
        false
    }

    fn decide(&mut self, ctx: &StepContext<'_>, _rng: &mut SimRng) -> usize {
        self.command_for(ctx.track, ctx.state)
    }
}

/// Always the same action.
#[derive(Debug, Clone, Copy)]
pub struct FixedAction(pub usize);

impl Driver for FixedAction {
    fn needs_frames(&self) -> bool {
        false
    }

    fn decide(&mut self, _ctx: &StepContext<'_>, _rng: &mut SimRng) -> usize {
        self.0
    }
}

const TRAJ_MAGIC: &[u8; 4] = b"RTRJ";
/// frame id, seven state fields, action, reward, dt.
const RECORD_LEN: usize = 8 + 7 * 8 + 4 + 8 + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrajectoryIndex {
    count: usize,
    record_bytes: usize,
    fields: Vec<String>,
    start: CarState,
    terminal: Terminal,
    lap_time: Option<f64>,
}

/// Writes little-endian fixed-size step records to `path` and a JSON index next to it.
pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(4 + RECORD_LEN * traj.steps.len());
    out.extend_from_slice(TRAJ_MAGIC);
    for s in &traj.steps {
        out.extend_from_slice(&s.frame_id.to_le_bytes());
        let st = &s.state;
        for v in [st.x, st.y, st.heading, st.speed, st.steering, st.time, st.progress] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(s.action as u32).to_le_bytes());
        out.extend_from_slice(&s.reward.to_le_bytes());
        out.extend_from_slice(&s.dt.to_le_bytes());
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    let index = TrajectoryIndex {
        count: traj.steps.len(),
        record_bytes: RECORD_LEN,
        fields: ["frame_id", "x", "y", "heading", "speed", "steering", "time", "progress", "action", "reward", "dt"]
            .map(String::from)
            .to_vec(),
        start: traj.start,
        terminal: traj.terminal,
        lap_time: traj.lap_time,
    };
    let index_path = path.with_extension("json");
    fs::write(&index_path, serde_json::to_vec_pretty(&index)?)
        .with_context(|| format!("writing {}", index_path.display()))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let index_path = path.with_extension("json");
    let index: TrajectoryIndex = serde_json::from_slice(
        &fs::read(&index_path).with_context(|| format!("reading {}", index_path.display()))?,
    )
    .map_err(|e| Error::format(&index_path, e.to_string()))?;
    if bytes.len() < 4 || &bytes[..4] != TRAJ_MAGIC || bytes.len() != 4 + index.count * RECORD_LEN {
        return Err(Error::format(path, "not a trajectory dump matching its index"));
    }
    let f64_at = |b: &[u8], o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
    let steps = bytes[4..]
        .chunks_exact(RECORD_LEN)
        .map(|r| {
            let v: Vec<f64> = (0..7).map(|k| f64_at(r, 8 + 8 * k)).collect();
            Step {
                frame_id: u64::from_le_bytes(r[..8].try_into().unwrap()),
                state: CarState {
                    x: v[0],
                    y: v[1],
                    heading: v[2],
                    speed: v[3],
                    steering: v[4],
                    time: v[5],
                    progress: v[6],
                },
                action: u32::from_le_bytes(r[64..68].try_into().unwrap()) as usize,
                reward: f64_at(r, 68),
                dt: f64_at(r, 76),
            }
        })
        .collect();
    Ok(Trajectory {
        start: index.start,
        steps,
        terminal: index.terminal,
        lap_time: index.lap_time,
    })
}
