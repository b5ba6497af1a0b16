//! Network-backed drivers.

use rand::Rng;

use crate::nn::{argmax, log_softmax, PolicyNet};
use crate::ppo::ValueHead;
use crate::render::{write_model_input, Frame};
use crate::rng::SimRng;
use crate::sim::{Driver, StepContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Greedy,
    Sample,
}

/// Per-step data kept while driving.
#[derive(Debug, Clone, Default)]
pub struct Record {
    /// Model inputs, one `input_len` block per step.
    pub inputs: Vec<f32>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub entropies: Vec<f64>,
    /// Raw frames with their step index and progress.
    pub frames: Vec<(Frame, f64)>,
}

/// Drives from camera frames with a policy network.
pub struct PolicyDriver<'a> {
    net: &'a PolicyNet<f32>,
    value: Option<&'a ValueHead>,
    selection: Selection,
    keep_inputs: bool,
    keep_frames: bool,
    buf: Vec<f32>,
    pub record: Record,
}

impl<'a> PolicyDriver<'a> {
    pub fn new(net: &'a PolicyNet<f32>, selection: Selection) -> Self {
        Self {
            net,
            value: None,
            selection,
            keep_inputs: false,
            keep_frames: false,
            buf: vec![0.0; net.spec().input_len()],
            record: Record::default(),
        }
    }

    /// Also evaluate a value head on the shared hidden layer.
    pub fn with_value(mut self, head: &'a ValueHead) -> Self {
        self.value = Some(head);
        self
    }

    pub fn keep_inputs(mut self) -> Self {
        self.keep_inputs = true;
        self
    }

    pub fn keep_frames(mut self) -> Self {
        self.keep_frames = true;
        self
    }
}

/// Draw an index from a probability vector.
pub fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

impl Driver for PolicyDriver<'_> {
    fn decide(&mut self, ctx: &StepContext<'_>, rng: &mut SimRng) -> usize {
        let obs = ctx.observation.expect("policy drivers need frames");
        let spec = self.net.spec();
        write_model_input(&obs.frame, spec.input_height, spec.input_width, &mut self.buf);
        let acts = self.net.forward_batch(&self.buf, 1).expect("input sized for the network");
        let logp = log_softmax(acts.logits()).expect("finite logits");
        let action = match self.selection {
            Selection::Greedy => argmax(acts.logits()),
            Selection::Sample => {
                let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
                sample_index(&probs, rng)
            }
        };
        if self.keep_inputs {
            self.record.inputs.extend_from_slice(&self.buf);
            self.record.actions.push(action);
            self.record.log_probs.push(logp[action]);
            self.record.entropies.push(-logp.iter().map(|l| l.exp() * l).sum::<f64>());
            if let Some(head) = self.value {
                self.record.values.push(head.value(acts.hidden()));
            }
        }
        if self.keep_frames {
            self.record.frames.push((obs.frame.clone(), obs.progress));
        }
        action
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn sampling_follows_probabilities() {
        let probs = [0.1, 0.0, 0.6, 0.3];
        let mut rng = stream(9, &[]);
        let mut counts = [0usize; 4];
        for _ in 0..20_000 {
            counts[sample_index(&probs, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        for (c, p) in counts.iter().zip(probs) {
            assert!((*c as f64 / 20_000.0 - p).abs() < 0.015);
        }
    }
}
