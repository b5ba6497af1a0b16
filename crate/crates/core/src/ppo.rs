//! PPO teacher training and observation collection.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{PolicyDriver, Selection};
use crate::error::{Error, Result, ResultExt};
use crate::nn::{
    checkpoint, clip_grad_norm, glorot_init, log_softmax, Gradients, LrSchedule, NetSpec, Optimizer, OptimizerKind,
    Parameters, PolicyNet, Tensor,
};
use crate::parallel;
use crate::render::{DomainId, Observation, ObservationStore, VisualDomain};
use crate::rng::{stream, SimRng};
use crate::sim::{Environment, Terminal, Trajectory};

/// Linear decay from `start` to `end` over `decay_steps`, flat afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EntropySchedule {
    pub fn coef(&self, step: u64) -> f64 {
        let remaining = if self.decay_steps == 0 {
            0.0
        } else {
            (1.0 - step as f64 / self.decay_steps as f64).max(0.0)
        };
        self.end + (self.start - self.end) * remaining
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub entropy: EntropySchedule,
    /// Clocked in environment steps.
    pub lr: LrSchedule,
    pub grad_clip: f64,
    pub value_coef: f64,
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    /// Samples per gradient chunk; chunks may run in parallel.
    pub grad_chunk: usize,
}

impl TeacherConfig {
    pub fn desk() -> Self {
        Self {
            gamma: 0.98,
            gae_lambda: 0.95,
            clip: 0.15,
            minibatch: 256,
            epochs: 5,
            entropy: EntropySchedule {
                start: 0.01,
                end: 0.0,
                decay_steps: 200_000,
            },
            lr: LrSchedule {
                start: 5e-4,
                decay_every: 100_000,
                factor: 0.5,
                cutoff: Some(300_000),
            },
            grad_clip: 5.0,
            value_coef: 0.5,
            iterations: 120,
            episodes_per_iteration: 8,
            grad_chunk: 32,
        }
    }

    pub fn full() -> Self {
        Self {
            minibatch: 2048,
            entropy: EntropySchedule {
                start: 0.01,
                end: 0.0,
                decay_steps: 8_000_000,
            },
            lr: LrSchedule {
                start: 5e-4,
                decay_every: 4_000_000,
                factor: 0.5,
                cutoff: Some(12_000_000),
            },
            iterations: 600,
            episodes_per_iteration: 20,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("teacher: {m}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("GAE lambda must lie in [0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.minibatch == 0 || self.epochs == 0 || self.iterations == 0 || self.episodes_per_iteration == 0 {
            return bad("sizes and counts must be positive");
        }
        if !(self.entropy.start >= 0.0 && self.entropy.end >= 0.0 && self.lr.start >= 0.0 && self.grad_clip > 0.0) {
            return bad("schedules must be non-negative and the clip norm positive");
        }
        Ok(())
    }
}

/// Linear state-value estimate on the policy's last hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueHead {
    pub weight: Tensor<f32>,
    pub bias: Tensor<f32>,
}

impl ValueHead {
    pub fn zeros(hidden: usize) -> Result<Self> {
        Ok(Self {
            weight: Tensor::zeros(&[1, hidden])?,
            bias: Tensor::zeros(&[1])?,
        })
    }

    pub fn value(&self, hidden: &[f32]) -> f64 {
        let dot: f64 = self
            .weight
            .data()
            .iter()
            .zip(hidden)
            .map(|(&w, &h)| w as f64 * h as f64)
            .sum();
        dot + self.bias.data()[0] as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub policy: PolicyNet<f32>,
    pub value: ValueHead,
}

impl ActorCritic {
    pub fn new(spec: &NetSpec, seed: u64) -> Result<Self> {
        let policy = glorot_init(spec, seed)?;
        let value = ValueHead::zeros(spec.hidden_size()?)?;
        Ok(Self { policy, value })
    }
}

impl Parameters<f32> for ActorCritic {
    fn parameters(&self) -> Vec<&Tensor<f32>> {
        let mut p = self.policy.parameters();
        p.push(&self.value.weight);
        p.push(&self.value.bias);
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<f32>> {
        let mut p = self.policy.parameters_mut();
        p.push(&mut self.value.weight);
        p.push(&mut self.value.bias);
        p
    }
}

/// GAE over one trajectory. `bootstrap` is the value after the last step
/// (0 for a terminal state). Returns `(advantages, returns)`.
pub fn gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Zero mean, unit variance (population). A constant input maps to zeros.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    values.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}

/// Rewards and value estimates of one trajectory.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub rewards: &'a [f64],
    pub values: &'a [f64],
    pub bootstrap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub returns: Vec<f64>,
}

pub fn compute_advantages(segments: &[Segment<'_>], gamma: f64, lambda: f64) -> Result<Advantages> {
    let mut raw = Vec::new();
    let mut returns = Vec::new();
    for s in segments {
        if s.rewards.len() != s.values.len() {
            return Err(Error::Dimension("rewards and values differ in length".into()));
        }
        let (a, r) = gae(s.rewards, s.values, s.bootstrap, gamma, lambda);
        raw.extend(a);
        returns.extend(r);
    }
    if raw.is_empty() {
        return Err(Error::Parameter("advantage batch is empty".into()));
    }
    if raw.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numeric("non-finite advantage".into()));
    }
    Ok(Advantages {
        normalized: normalize(&raw),
        raw,
        returns,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub input_len: usize,
    pub inputs: Vec<f32>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Parameter("rollout batch is empty".into()));
        }
        if self.inputs.len() != n * self.input_len
            || self.log_probs.len() != n
            || self.advantages.len() != n
            || self.returns.len() != n
        {
            return Err(Error::Dimension("rollout batch fields are misaligned".into()));
        }
        if self.advantages.iter().any(|a| !a.is_finite()) {
            return Err(Error::Numeric("non-finite advantage in batch".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    /// Mean value loss measured during each epoch.
    pub value_loss_by_epoch: Vec<f64>,
    pub updates: usize,
    pub lr: f64,
}

#[derive(Default)]
struct ChunkSums {
    value_w: Vec<f64>,
    value_b: f64,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    clipped: usize,
}

/// Gradient of the PPO loss on one minibatch (given by batch indices).
/// Returns the gradient aligned with [`ActorCritic`] parameters.
pub fn ppo_gradient(
    model: &ActorCritic,
    batch: &RolloutBatch,
    indices: &[usize],
    clip: f64,
    entropy_coef: f64,
    value_coef: f64,
    chunk: usize,
) -> Result<(Gradients<f32>, UpdateStats)> {
    let m = indices.len();
    let in_len = batch.input_len;
    let mut input = Vec::with_capacity(m * in_len);
    for &i in indices {
        input.extend_from_slice(&batch.inputs[i * in_len..(i + 1) * in_len]);
    }
    let n = model.policy.outputs();
    let hidden = model.value.weight.len();
    let w = model.value.weight.data();
    let inv_m = 1.0 / m as f64;
    let (mut grads, parts) = model.policy.accumulate(&input, m, chunk, |acts, range| {
        let logits = acts.logits();
        let hid = acts.hidden();
        let mut gl = vec![0f32; range.len() * n];
        let mut gh = vec![0f32; range.len() * hidden];
        let mut sums = ChunkSums {
            value_w: vec![0.0; hidden],
            ..Default::default()
        };
        for j in 0..range.len() {
            let idx = indices[range.start + j];
            let logp = log_softmax(&logits[j * n..(j + 1) * n])?;
            let a = batch.actions[idx];
            let adv = batch.advantages[idx];
            let ratio = (logp[a] - batch.log_probs[idx]).exp();
            let clipped_ratio = ratio.clamp(1.0 - clip, 1.0 + clip);
            let surrogate = (ratio * adv).min(clipped_ratio * adv);
            // The unclipped branch is the active one unless the ratio left the trust region in the advantage's favor.
            let active = !((adv > 0.0 && ratio > 1.0 + clip) || (adv < 0.0 && ratio < 1.0 - clip));
            if !active {
                sums.clipped += 1;
            }
            let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
            let entropy: f64 = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
            for k in 0..n {
                let onehot = if k == a { 1.0 } else { 0.0 };
                let mut g = 0.0;
                if active {
                    g -= adv * ratio * (onehot - probs[k]);
                }
                g += entropy_coef * probs[k] * (logp[k] + entropy);
                gl[j * n + k] = (g * inv_m) as f32;
            }
            let h = &hid[j * hidden..(j + 1) * hidden];
            let v = model.value.value(h);
            let err = v - batch.returns[idx];
            let dv = value_coef * err * inv_m;
            for k in 0..hidden {
                gh[j * hidden + k] = (dv * w[k] as f64) as f32;
                sums.value_w[k] += dv * h[k] as f64;
            }
            sums.value_b += dv;
            sums.policy_loss -= surrogate;
            sums.value_loss += 0.5 * err * err;
            sums.entropy += entropy;
        }
        Ok((gl, Some(gh), sums))
    })?;
    let mut stats = UpdateStats::default();
    let mut gw = vec![0.0f64; hidden];
    let mut gb = 0.0;
    let mut clipped = 0;
    for p in parts {
        gw.iter_mut().zip(&p.value_w).for_each(|(a, b)| *a += b);
        gb += p.value_b;
        stats.policy_loss += p.policy_loss * inv_m;
        stats.value_loss += p.value_loss * inv_m;
        stats.entropy += p.entropy * inv_m;
        clipped += p.clipped;
    }
    stats.clip_fraction = clipped as f64 * inv_m;
    grads.extend(Gradients::new(vec![
        Tensor::from_vec(&[1, hidden], gw.into_iter().map(|v| v as f32).collect())?,
        Tensor::from_vec(&[1], vec![gb as f32])?,
    ]));
    Ok((grads, stats))
}

/// Several epochs of clipped-surrogate updates over shuffled minibatches.
pub fn ppo_update(
    model: &mut ActorCritic,
    batch: &RolloutBatch,
    cfg: &TeacherConfig,
    entropy_coef: f64,
    optimizer: &mut Optimizer<f32>,
    clock: u64,
    rng: &mut SimRng,
) -> Result<UpdateStats> {
    batch.check()?;
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut total = UpdateStats::default();
    let mut weight = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut epoch_value = 0.0;
        let mut epoch_weight = 0.0;
        for mb in order.chunks(cfg.minibatch) {
            let (mut grads, stats) =
                ppo_gradient(model, batch, mb, cfg.clip, entropy_coef, cfg.value_coef, cfg.grad_chunk)?;
            let loss = stats.policy_loss + cfg.value_coef * stats.value_loss - entropy_coef * stats.entropy;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Numeric(format!(
                    "PPO loss became non-finite (policy {}, value {}, entropy {})",
                    stats.policy_loss, stats.value_loss, stats.entropy
                )));
            }
            let norm = clip_grad_norm(&mut grads, cfg.grad_clip);
            total.lr = optimizer.step(model, &grads, clock)?;
            let w = mb.len() as f64;
            total.policy_loss += stats.policy_loss * w;
            total.value_loss += stats.value_loss * w;
            total.entropy += stats.entropy * w;
            total.clip_fraction += stats.clip_fraction * w;
            total.grad_norm += norm * w;
            total.updates += 1;
            weight += w;
            epoch_value += stats.value_loss * w;
            epoch_weight += w;
        }
        total.value_loss_by_epoch.push(epoch_value / epoch_weight);
    }
    total.policy_loss /= weight;
    total.value_loss /= weight;
    total.entropy /= weight;
    total.clip_fraction /= weight;
    total.grad_norm /= weight;
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub steps: u64,
    pub episodes: usize,
    pub completion_rate: f64,
    pub avg_lap_time: Option<f64>,
    pub mean_entropy: f64,
    pub mean_return: f64,
    pub value_loss: f64,
    pub lr: f64,
    pub entropy_coef: f64,
}

pub const TRAINING_LOG_HEADER: &str =
    "iteration,completion_rate,avg_lap_time,mean_entropy,mean_return,steps,episodes,value_loss,lr,entropy_coef";

pub fn training_log_csv(log: &[IterationLog]) -> String {
    let mut out = String::from(TRAINING_LOG_HEADER);
    out.push('\n');
    for r in log {
        let lap = r.avg_lap_time.map(|t| format!("{t:.4}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{:.4},{},{:.5},{:.4},{},{},{:.5},{:.3e},{:.5}\n",
            r.iteration,
            r.completion_rate,
            lap,
            r.mean_entropy,
            r.mean_return,
            r.steps,
            r.episodes,
            r.value_loss,
            r.lr,
            r.entropy_coef
        ));
    }
    out
}

pub fn checkpoint_name(iteration: usize) -> String {
    format!("iteration_{iteration:04}.rdnn")
}

/// Where and what to keep while training.
#[derive(Debug, Clone, Default)]
pub struct TeacherOutput {
    /// Write a checkpoint per iteration and the CSV log here.
    pub dir: Option<PathBuf>,
    /// Iterations whose policies are also kept in memory.
    pub snapshots: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TeacherRun {
    pub model: ActorCritic,
    pub log: Vec<IterationLog>,
    pub checkpoints: Vec<PathBuf>,
    pub snapshots: Vec<(usize, PolicyNet<f32>)>,
}

fn episode_values(traj: &Trajectory) -> f64 {
    match traj.terminal {
        Terminal::LapComplete | Terminal::OffTrack | Terminal::Timeout => 0.0,
    }
}

/// Collect episodes on `domain`, fit with PPO, repeat.
pub fn train_teacher(
    env: &Environment,
    domain: &VisualDomain,
    spec: &NetSpec,
    cfg: &TeacherConfig,
    seed: u64,
    output: &TeacherOutput,
) -> Result<TeacherRun> {
    cfg.validate()?;
    env.actions.check_outputs(spec.outputs)?;
    let mut model = ActorCritic::new(spec, crate::rng::derive_seed(seed, &[0]))?;
    let mut optimizer = Optimizer::new(OptimizerKind::adam(), cfg.lr, &model);
    let mut update_rng = stream(seed, &[2]);
    let mut steps: u64 = 0;
    let mut log = Vec::with_capacity(cfg.iterations);
    let mut checkpoints = Vec::new();
    let mut snapshots = Vec::new();
    if let Some(dir) = &output.dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    for iteration in 1..=cfg.iterations {
        let context = || format!("teacher iteration {iteration}");
        let episodes = parallel::map_indexed(cfg.episodes_per_iteration, |e| {
            let mut rng = stream(seed, &[1, iteration as u64, e as u64]);
            let mut driver = PolicyDriver::new(&model.policy, Selection::Sample)
                .with_value(&model.value)
                .keep_inputs();
            let traj = env.run_episode(&mut driver, domain, &mut rng);
            (traj, driver.record)
        });
        let mut batch = RolloutBatch {
            input_len: spec.input_len(),
            ..Default::default()
        };
        let mut rewards = Vec::with_capacity(episodes.len());
        for (traj, rec) in &episodes {
            rewards.push(traj.steps.iter().map(|s| s.reward).collect::<Vec<_>>());
            batch.inputs.extend_from_slice(&rec.inputs);
            batch.actions.extend_from_slice(&rec.actions);
            batch.log_probs.extend_from_slice(&rec.log_probs);
        }
        let segments: Vec<Segment<'_>> = episodes
            .iter()
            .zip(&rewards)
            .map(|((traj, rec), r)| Segment {
                rewards: r,
                values: &rec.values,
                bootstrap: episode_values(traj),
            })
            .collect();
        let adv = compute_advantages(&segments, cfg.gamma, cfg.gae_lambda).with_context(context)?;
        batch.advantages = adv.normalized;
        batch.returns = adv.returns;

        let entropy_coef = cfg.entropy.coef(steps);
        let stats = ppo_update(&mut model, &batch, cfg, entropy_coef, &mut optimizer, steps, &mut update_rng)
            .with_context(context)?;

        let n_eps = episodes.len();
        let laps: Vec<f64> = episodes.iter().filter_map(|(t, _)| t.lap_time).collect();
        let mean_entropy = episodes.iter().flat_map(|(_, r)| r.entropies.iter()).sum::<f64>() / batch.len() as f64;
        let record = IterationLog {
            iteration,
            steps: steps + batch.len() as u64,
            episodes: n_eps,
            completion_rate: laps.len() as f64 / n_eps as f64,
            avg_lap_time: (!laps.is_empty()).then(|| laps.iter().sum::<f64>() / laps.len() as f64),
            mean_entropy,
            mean_return: episodes.iter().map(|(t, _)| t.total_reward()).sum::<f64>() / n_eps as f64,
            value_loss: stats.value_loss,
            lr: stats.lr,
            entropy_coef,
        };
        log::info!(
            "iteration {iteration}: completion {:.2}, return {:.2}, entropy {:.3}, steps {}",
            record.completion_rate,
            record.mean_return,
            record.mean_entropy,
            record.steps
        );
        steps += batch.len() as u64;
        log.push(record);

        if let Some(dir) = &output.dir {
            let path = dir.join(checkpoint_name(iteration));
            let meta = checkpoint::CheckpointMeta {
                architecture: spec.clone(),
                seed,
                iteration: Some(iteration),
                note: Some("teacher".into()),
            };
            checkpoint::save(&model.policy, &path, &meta).with_context(context)?;
            checkpoints.push(path);
            let csv = dir.join("training_log.csv");
            fs::File::create(&csv)
                .and_then(|mut f| f.write_all(training_log_csv(&log).as_bytes()))
                .with_context(|| format!("writing {}", csv.display()))?;
        }
        if output.snapshots.contains(&iteration) {
            snapshots.push((iteration, model.policy.clone()));
        }
    }
    Ok(TeacherRun {
        model,
        log,
        checkpoints,
        snapshots,
    })
}

/// Drive sampled-action episodes with the given policies (cycled) until
/// `target_count` frames were seen, keeping a uniform random subset of
/// `sample_count` of them. Frame ids are positions in the collection stream.
pub fn collect_observations(
    policies: &[&PolicyNet<f32>],
    env: &Environment,
    domain: &VisualDomain,
    target_count: usize,
    sample_count: usize,
    seed: u64,
) -> Result<ObservationStore> {
    if policies.is_empty() {
        return Err(Error::Parameter("no policies to collect with".into()));
    }
    if sample_count > target_count {
        return Err(Error::Parameter(format!(
            "sample count {sample_count} exceeds target count {target_count}"
        )));
    }
    let mut reservoir: Vec<Observation> = Vec::with_capacity(sample_count);
    let mut select = stream(seed, &[0]);
    let mut seen = 0usize;
    let mut round = 0u64;
    let per_round = parallel_width();
    while seen < target_count {
        let batch = parallel::map_indexed(per_round, |e| {
            let episode = round * per_round as u64 + e as u64;
            let policy = policies[episode as usize % policies.len()];
            let mut rng = stream(seed, &[1, episode]);
            let mut driver = PolicyDriver::new(policy, Selection::Sample).keep_frames();
            env.run_episode(&mut driver, domain, &mut rng);
            driver.record.frames
        });
        if batch.iter().all(Vec::is_empty) {
            return Err(Error::Numeric("episodes produced no frames".into()));
        }
        for (frame, progress) in batch.into_iter().flatten() {
            if seen >= target_count {
                break;
            }
            let obs = Observation {
                frame,
                frame_id: seen as u64,
                domain: domain.id.clone(),
                progress,
            };
            if reservoir.len() < sample_count {
                reservoir.push(obs);
            } else {
                let j = select.random_range(0..=seen);
                if j < sample_count {
                    reservoir[j] = obs;
                }
            }
            seen += 1;
        }
        round += 1;
    }
    if reservoir.len() < sample_count {
        return Err(Error::Parameter(format!(
            "collected {} frames, fewer than the {sample_count} requested",
            reservoir.len()
        )));
    }
    reservoir.sort_by_key(|o| o.frame_id);
    let mut store = ObservationStore::from_observations(DomainId::clone(&domain.id), reservoir)?;
    store.set_collection_info(serde_json::json!({
        "target_count": target_count,
        "sample_count": sample_count,
        "frames_seen": seen,
        "policies": policies.len(),
        "seed": seed,
    }));
    Ok(store)
}

/// Episodes per collection round; fixed so results do not depend on thread count.
fn parallel_width() -> usize {
    8
}

/// Load teacher checkpoints written by [`train_teacher`].
pub fn load_checkpoints(paths: &[impl AsRef<Path>]) -> Result<Vec<PolicyNet<f32>>> {
    paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            checkpoint::load(p)
                .map(|(net, _)| net)
                .with_context(|| format!("loading {}", p.display()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ConvSpec, LrSchedule};

    #[test]
    fn gae_examples() {
        let (a, r) = gae(&[2.5], &[0.0], 0.0, 0.98, 0.95);
        assert_eq!((a[0], r[0]), (2.5, 2.5));
        let (_, r) = gae(&[0.0, 3.0], &[0.0, 0.0], 0.0, 0.98, 1.0);
        assert!((r[0] - 0.98 * 3.0).abs() < 1e-12);
        // Constant reward with exact values: V = c (1 - g^(n-t)) / (1 - g).
        let (g, c, n) = (0.9f64, 1.0f64, 30usize);
        let values: Vec<f64> = (0..n).map(|t| c * (1.0 - g.powi((n - t) as i32)) / (1.0 - g)).collect();
        let (a, _) = gae(&vec![c; n], &values, 0.0, g, 0.95);
        assert!(a.iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn normalization_is_shift_invariant() {
        let a = [1.0, 4.0, -2.0, 7.5];
        let b: Vec<f64> = a.iter().map(|v| v + 123.0).collect();
        let na = normalize(&a);
        let nb = normalize(&b);
        assert!(na.iter().sum::<f64>().abs() < 1e-9);
        assert!(na.iter().zip(&nb).all(|(x, y)| (x - y).abs() < 1e-9));
        assert!(compute_advantages(&[], 0.9, 0.9).is_err());
    }

    #[test]
    fn entropy_schedule_is_linear() {
        let s = TeacherConfig::desk().entropy;
        assert_eq!(s.coef(0), 0.01);
        assert_eq!(s.coef(50_000), 0.01 * (1.0 - 50_000.0 / 200_000.0));
        assert_eq!(s.coef(200_000), 0.0);
        assert_eq!(s.coef(900_000), 0.0);
    }

    fn bandit_spec() -> NetSpec {
        NetSpec {
            input_height: 3,
            input_width: 3,
            convs: vec![ConvSpec { channels: 2, kernel: 2, stride: 1 }],
            hidden: vec![4],
            outputs: 2,
        }
    }

    fn bandit_batch(model: &ActorCritic, rng: &mut SimRng, n: usize) -> RolloutBatch {
        let input: Vec<f32> = (0..9).map(|i| i as f32 / 9.0).collect();
        let acts = model.policy.forward_batch(&input, 1).unwrap();
        let logp = log_softmax(acts.logits()).unwrap();
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let mut batch = RolloutBatch { input_len: 9, ..Default::default() };
        let mut rewards = Vec::new();
        for _ in 0..n {
            let a = crate::agent::sample_index(&probs, rng);
            batch.inputs.extend_from_slice(&input);
            batch.actions.push(a);
            batch.log_probs.push(logp[a]);
            rewards.push(if a == 0 { 1.0 } else { 0.0 });
        }
        batch.advantages = normalize(&rewards);
        batch.returns = rewards;
        batch
    }

    fn bandit_cfg() -> TeacherConfig {
        TeacherConfig {
            minibatch: 16,
            epochs: 2,
            lr: LrSchedule::constant(0.01),
            grad_chunk: 8,
            ..TeacherConfig::desk()
        }
    }

    #[test]
    fn bandit_probability_rises() {
        let mut model = ActorCritic::new(&bandit_spec(), 4).unwrap();
        let cfg = bandit_cfg();
        let mut opt = Optimizer::new(OptimizerKind::adam(), cfg.lr, &model);
        let mut rng = stream(5, &[]);
        let input: Vec<f32> = (0..9).map(|i| i as f32 / 9.0).collect();
        let p0 = |m: &ActorCritic| crate::nn::softmax(m.policy.forward_batch(&input, 1).unwrap().logits()).unwrap()[0];
        let mut prev = p0(&model);
        for _ in 0..20 {
            let batch = bandit_batch(&model, &mut rng, 64);
            ppo_update(&mut model, &batch, &cfg, 0.0, &mut opt, 0, &mut rng).unwrap();
            let p = p0(&model);
            assert!(p > prev, "{p} <= {prev}");
            prev = p;
        }
    }

    #[test]
    fn zero_advantage_leaves_policy_unchanged() {
        let mut model = ActorCritic::new(&bandit_spec(), 4).unwrap();
        let cfg = bandit_cfg();
        let mut rng = stream(6, &[]);
        let mut batch = bandit_batch(&model, &mut rng, 32);
        batch.advantages = vec![0.0; 32];
        batch.returns = vec![0.0; 32];
        let before = model.clone();
        let mut opt = Optimizer::new(OptimizerKind::adam(), cfg.lr, &model);
        ppo_update(&mut model, &batch, &cfg, 0.0, &mut opt, 0, &mut rng).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn unclipped_gradient_is_vanilla_policy_gradient() {
        let model = ActorCritic::new(&bandit_spec(), 8).unwrap();
        let mut rng = stream(7, &[]);
        let mut batch = bandit_batch(&model, &mut rng, 10);
        batch.returns = vec![0.0; 10];
        let idx: Vec<usize> = (0..10).collect();
        let (g, _) = ppo_gradient(&model, &batch, &idx, 0.15, 0.0, 0.0, 4).unwrap();
        // -mean(A * grad log pi(a)) computed one sample at a time.
        let mut expected = Gradients::zeros_for(&model.policy);
        for i in 0..10 {
            let t = Tensor::from_vec(&[1, 3, 3], batch.inputs[i * 9..(i + 1) * 9].to_vec()).unwrap();
            let logits = model.policy.forward(&t).unwrap();
            let p = crate::nn::softmax(&logits).unwrap();
            let up: Vec<f32> = (0..2)
                .map(|k| (-(batch.advantages[i]) * ((k == batch.actions[i]) as u8 as f64 - p[k]) / 10.0) as f32)
                .collect();
            expected.add_assign(&model.policy.backward(&t, &up).unwrap()).unwrap();
        }
        for (a, b) in g.tensors().iter().zip(expected.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-5 + 1e-4 * y.abs(), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn value_loss_falls_across_epochs() {
        let mut model = ActorCritic::new(&bandit_spec(), 9).unwrap();
        let cfg = TeacherConfig { epochs: 5, ..bandit_cfg() };
        let mut rng = stream(10, &[]);
        let batch = bandit_batch(&model, &mut rng, 64);
        let mut opt = Optimizer::new(OptimizerKind::adam(), cfg.lr, &model);
        let stats = ppo_update(&mut model, &batch, &cfg, 0.0, &mut opt, 0, &mut rng).unwrap();
        let v = &stats.value_loss_by_epoch;
        let falling = v.windows(2).filter(|w| w[1] <= w[0] * 1.001).count();
        assert!(falling as f64 >= 0.8 * (v.len() - 1) as f64, "{v:?}");
    }
}
