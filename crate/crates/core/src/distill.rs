//! Teacher-to-student distillation on randomized observations.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, glorot_init, LrSchedule, Optimizer, OptimizerKind, PolicyNet, Real};
use crate::parallel;
use crate::randomize::{self, PatchSource, RandConfig, RandFn};
use crate::render::{write_model_input, ObservationStore};
use crate::rng::{derive_seed, stream};

/// `d^2 + d` with `d = |t - s|`, and its gradient with respect to `s`.
/// At `d = 0` the gradient of the `d` term is taken as 0.
pub fn distill_loss<T: Real>(teacher: &[T], student: &[T]) -> Result<(f64, Vec<f64>)> {
    if teacher.len() != student.len() {
        return Err(Error::Dimension(format!(
            "teacher has {} logits, student {}",
            teacher.len(),
            student.len()
        )));
    }
    let diff: Vec<f64> = teacher.iter().zip(student).map(|(t, s)| t.to_f64() - s.to_f64()).collect();
    let d = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    let kink = if d < 1e-12 { 0.0 } else { 1.0 / d };
    let grad = diff.iter().map(|x| -2.0 * x - x * kink).collect();
    Ok((d * d + d, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentConfig {
    /// Clocked in iterations (passes over the training data).
    pub lr: LrSchedule,
    pub minibatch: usize,
    pub iterations: usize,
    /// Number of stored observations used; the whole store when larger.
    pub train_size: usize,
    pub grad_clip: f64,
    pub grad_chunk: usize,
    pub randomization: RandConfig,
}

impl StudentConfig {
    pub fn desk() -> Self {
        Self {
            lr: LrSchedule {
                start: 1e-3,
                decay_every: 10,
                factor: 0.7,
                cutoff: None,
            },
            minibatch: 100,
            iterations: 50,
            train_size: 6_000,
            grad_clip: 5.0,
            grad_chunk: 25,
            randomization: RandConfig::all(),
        }
    }

    pub fn full() -> Self {
        Self {
            minibatch: 500,
            iterations: 50,
            train_size: 100_000,
            grad_chunk: 50,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.minibatch == 0 || self.iterations == 0 || self.train_size == 0 || self.grad_chunk == 0 {
            return Err(Error::Config("student: sizes and iterations must be positive".into()));
        }
        if !(self.grad_clip > 0.0 && self.lr.start >= 0.0) {
            return Err(Error::Config("student: clip norm must be positive, lr non-negative".into()));
        }
        self.randomization.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentLog {
    pub iteration: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

pub fn student_log_csv(log: &[StudentLog]) -> String {
    let mut out = String::from("iteration,mean_loss,lr\n");
    for r in log {
        out.push_str(&format!("{},{:.6},{:.3e}\n", r.iteration, r.mean_loss, r.lr));
    }
    out
}

#[derive(Debug, Clone)]
pub struct StudentRun {
    pub student: PolicyNet<f32>,
    pub log: Vec<StudentLog>,
    /// Randomization calls observed while computing teacher targets; always 0.
    pub teacher_path_apply_calls: u64,
}

/// Teacher logits on the clean, preprocessed frames, in store order.
pub fn teacher_targets(teacher: &PolicyNet<f32>, store: &ObservationStore, count: usize, chunk: usize) -> Result<(Vec<f32>, u64)> {
    let spec = teacher.spec();
    let in_len = spec.input_len();
    let parts = parallel::map_chunks(count, chunk, |range| {
        let before = randomize::apply_calls_on_thread();
        let mut input = vec![0f32; range.len() * in_len];
        for (j, i) in range.clone().enumerate() {
            write_model_input(store.frame(i), spec.input_height, spec.input_width, &mut input[j * in_len..(j + 1) * in_len]);
        }
        let logits = teacher.forward_batch(&input, range.len())?.logits().to_vec();
        Ok::<_, Error>((logits, randomize::apply_calls_on_thread() - before))
    });
    let mut out = Vec::with_capacity(count * teacher.outputs());
    let mut calls = 0;
    for p in parts {
        let (l, c) = p?;
        out.extend(l);
        calls += c;
    }
    Ok((out, calls))
}

/// Fresh glorot student trained with [`train_student_from`].
pub fn train_student(teacher: &PolicyNet<f32>, store: &ObservationStore, cfg: &StudentConfig, seed: u64) -> Result<StudentRun> {
    let init = glorot_init(teacher.spec(), derive_seed(seed, &[0]))?;
    train_student_from(init, teacher, store, cfg, seed)
}

/// Behavior cloning: the teacher sees the clean frame, the student the
/// randomized one, and the student's logits chase the teacher's.
pub fn train_student_from(
    mut student: PolicyNet<f32>,
    teacher: &PolicyNet<f32>,
    store: &ObservationStore,
    cfg: &StudentConfig,
    seed: u64,
) -> Result<StudentRun> {
    cfg.validate()?;
    if teacher.outputs() != student.outputs() || teacher.spec() != student.spec() {
        return Err(Error::Config(format!(
            "teacher has {} outputs, student {}; architectures must match",
            teacher.outputs(),
            student.outputs()
        )));
    }
    if store.is_empty() {
        return Err(Error::Config("observation store is empty".into()));
    }
    let count = cfg.train_size.min(store.len());
    let n = teacher.outputs();
    let (targets, teacher_path_apply_calls) = teacher_targets(teacher, store, count, cfg.grad_chunk)?;
    let patches = PatchSource::new(&store.frames()[..count])?;
    let spec = student.spec().clone();
    let in_len = spec.input_len();
    let mut optimizer = Optimizer::new(OptimizerKind::momentum(), cfg.lr, &student);
    let mut order: Vec<usize> = (0..count).collect();
    let mut log = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        order.shuffle(&mut stream(seed, &[1, iteration as u64]));
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for (step, mb) in order.chunks(cfg.minibatch).enumerate() {
            let m = mb.len();
            let prepared = parallel::map_chunks(m, cfg.grad_chunk, |range| {
                let mut buf = vec![0f32; range.len() * in_len];
                for (j, k) in range.clone().enumerate() {
                    let idx = mb[k];
                    let mut frame = store.frame(idx).clone();
                    let mut rng = stream(seed, &[2, cfg.randomization.seed, iteration as u64, step as u64, k as u64]);
                    randomize::apply(&mut frame, &cfg.randomization, Some(&patches), &mut rng)?;
                    write_model_input(&frame, spec.input_height, spec.input_width, &mut buf[j * in_len..(j + 1) * in_len]);
                }
                Ok::<_, Error>(buf)
            });
            let mut input = Vec::with_capacity(m * in_len);
            for p in prepared {
                input.extend(p?);
            }
            let inv_m = 1.0 / m as f64;
            let (mut grads, losses) = student.accumulate(&input, m, cfg.grad_chunk, |acts, range| {
                let logits = acts.logits();
                let mut gl = vec![0f32; range.len() * n];
                let mut loss = 0.0;
                for j in 0..range.len() {
                    let idx = mb[range.start + j];
                    let (l, g) = distill_loss(&targets[idx * n..(idx + 1) * n], &logits[j * n..(j + 1) * n])?;
                    loss += l;
                    for (o, v) in gl[j * n..(j + 1) * n].iter_mut().zip(g) {
                        *o = (v * inv_m) as f32;
                    }
                }
                Ok((gl, None, loss))
            })?;
            let batch_loss: f64 = losses.iter().sum();
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Numeric(format!("distillation loss became non-finite at iteration {iteration}")));
            }
            loss_sum += batch_loss;
            clip_grad_norm(&mut grads, cfg.grad_clip);
            lr = optimizer.step(&mut student, &grads, (iteration - 1) as u64)?;
        }
        let mean_loss = loss_sum / count as f64;
        log::info!("student iteration {iteration}: loss {mean_loss:.4}, lr {lr:.2e}");
        log.push(StudentLog {
            iteration,
            mean_loss,
            lr,
        });
    }
    Ok(StudentRun {
        student,
        log,
        teacher_path_apply_calls,
    })
}

pub const ALL_RAND: &str = "AllRand";

/// `AllRand` followed by the six leave-one-out configurations.
pub fn make_ablation_configs(base: &RandConfig) -> Result<Vec<(String, RandConfig)>> {
    if !base.is_full() {
        return Err(Error::Config("ablation needs a base with all six functions enabled".into()));
    }
    let mut out = vec![(ALL_RAND.to_string(), base.clone())];
    for f in RandFn::ALL {
        out.push((format!("w/o {}", f.label()), base.without(f)));
    }
    Ok(out)
}
