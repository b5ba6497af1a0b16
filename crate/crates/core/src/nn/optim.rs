use serde::{Deserialize, Serialize};

use super::{Gradients, Parameters, Real};
use crate::error::{Error, Result};

/// Step-decayed learning rate: `start * factor^(floor(min(t, cutoff) / every))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub start: f64,
    pub decay_every: u64,
    pub factor: f64,
    /// Clock value after which no further decay happens.
    #[serde(default)]
    pub cutoff: Option<u64>,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            start: lr,
            decay_every: u64::MAX,
            factor: 1.0,
            cutoff: None,
        }
    }

    pub fn lr_at(&self, clock: u64) -> f64 {
        let t = self.cutoff.map_or(clock, |c| clock.min(c));
        let events = t / self.decay_every.max(1);
        self.start * self.factor.powi(events.min(i32::MAX as u64) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Momentum { momentum: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn momentum() -> Self {
        OptimizerKind::Momentum { momentum: 0.9 }
    }
}

/// Optimizer moments plus the learning-rate schedule.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    schedule: LrSchedule,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Real> Optimizer<T> {
    pub fn new<P: Parameters<T> + ?Sized>(kind: OptimizerKind, schedule: LrSchedule, model: &P) -> Self {
        let bufs = || -> Vec<Vec<T>> {
            model
                .parameters()
                .iter()
                .map(|t| vec![T::ZERO; t.len()])
                .collect()
        };
        let second = match kind {
            OptimizerKind::Adam { .. } => bufs(),
            OptimizerKind::Momentum { .. } => Vec::new(),
        };
        Self {
            kind,
            schedule,
            first: bufs(),
            second,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn schedule(&self) -> &LrSchedule {
        &self.schedule
    }

    /// Apply one update at the schedule's learning rate for `clock`.
    pub fn step<P: Parameters<T> + ?Sized>(&mut self, model: &mut P, grads: &Gradients<T>, clock: u64) -> Result<f64> {
        let lr = self.schedule.lr_at(clock);
        let mut params = model.parameters_mut();
        if params.len() != grads.tensors().len() || params.len() != self.first.len() {
            return Err(Error::Dimension("optimizer state does not match the model".into()));
        }
        self.steps += 1;
        let t = self.steps as i32;
        for (i, (p, g)) in params.iter_mut().zip(grads.tensors()).enumerate() {
            if p.len() != g.len() || self.first[i].len() != p.len() {
                return Err(Error::Dimension(format!("parameter {i} shape changed")));
            }
            match self.kind {
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let m = &mut self.first[i];
                    let v = &mut self.second[i];
                    for (k, w) in p.data_mut().iter_mut().enumerate() {
                        let gk = g.data()[k].to_f64();
                        let mk = beta1 * m[k].to_f64() + (1.0 - beta1) * gk;
                        let vk = beta2 * v[k].to_f64() + (1.0 - beta2) * gk * gk;
                        m[k] = T::from_f64(mk);
                        v[k] = T::from_f64(vk);
                        let update = lr * (mk / c1) / ((vk / c2).sqrt() + eps);
                        *w = T::from_f64(w.to_f64() - update);
                    }
                }
                OptimizerKind::Momentum { momentum } => {
                    let vel = &mut self.first[i];
                    for (k, w) in p.data_mut().iter_mut().enumerate() {
                        let vk = momentum * vel[k].to_f64() + g.data()[k].to_f64();
                        vel[k] = T::from_f64(vk);
                        *w = T::from_f64(w.to_f64() - lr * vk);
                    }
                }
            }
        }
        Ok(lr)
    }
}
