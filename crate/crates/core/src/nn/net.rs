use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, Parameters, Real, Tensor};
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng;

/// One valid-padding convolution: `channels` filters of `kernel x kernel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Architecture of a policy network: convolutions, hidden dense layers, and
/// an output layer of `outputs` logits. All hidden layers use ReLU; the
/// input has a single (grayscale) channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_height: usize,
    pub input_width: usize,
    pub convs: Vec<ConvSpec>,
    pub hidden: Vec<usize>,
    pub outputs: usize,
}

impl NetSpec {
    /// Three convolutions and two dense layers sized for small camera frames.
    pub fn standard(input_height: usize, input_width: usize, outputs: usize) -> Self {
        Self {
            input_height,
            input_width,
            convs: vec![
                ConvSpec { channels: 16, kernel: 8, stride: 4 },
                ConvSpec { channels: 32, kernel: 4, stride: 2 },
                ConvSpec { channels: 32, kernel: 3, stride: 1 },
            ],
            hidden: vec![256],
            outputs,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_height * self.input_width
    }

    pub fn hidden_size(&self) -> Result<usize> {
        let geom = self.geometry()?;
        Ok(geom.dense.last().map(|d| d.0).unwrap_or(0))
    }

    pub fn parameter_count(&self) -> Result<usize> {
        let geom = self.geometry()?;
        let conv: usize = geom.convs.iter().map(|c| c.out_c * c.k_len() + c.out_c).sum();
        let dense: usize = geom.dense.iter().map(|&(i, o)| i * o + o).sum();
        Ok(conv + dense)
    }

    pub(crate) fn geometry(&self) -> Result<Geometry> {
        if self.input_height == 0 || self.input_width == 0 {
            return Err(Error::Spec("input dimensions must be positive".into()));
        }
        if self.outputs == 0 {
            return Err(Error::Spec("output size must be positive".into()));
        }
        let (mut c, mut h, mut w) = (1usize, self.input_height, self.input_width);
        let mut convs = Vec::with_capacity(self.convs.len());
        for (i, spec) in self.convs.iter().enumerate() {
            if spec.channels == 0 || spec.kernel == 0 || spec.stride == 0 {
                return Err(Error::Spec(format!("conv {i}: zero-sized parameter")));
            }
            if spec.kernel > h || spec.kernel > w {
                return Err(Error::Spec(format!(
                    "conv {i}: kernel {} does not fit {h}x{w} input",
                    spec.kernel
                )));
            }
            let g = ConvGeom {
                in_c: c,
                in_h: h,
                in_w: w,
                out_c: spec.channels,
                out_h: (h - spec.kernel) / spec.stride + 1,
                out_w: (w - spec.kernel) / spec.stride + 1,
                k: spec.kernel,
                s: spec.stride,
            };
            (c, h, w) = (g.out_c, g.out_h, g.out_w);
            convs.push(g);
        }
        let mut fan_in = c * h * w;
        let mut dense = Vec::with_capacity(self.hidden.len() + 1);
        for (i, &width) in self.hidden.iter().chain(std::iter::once(&self.outputs)).enumerate() {
            if width == 0 {
                return Err(Error::Spec(format!("dense {i}: zero width")));
            }
            dense.push((fan_in, width));
            fan_in = width;
        }
        Ok(Geometry { convs, dense })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    out_h: usize,
    out_w: usize,
    k: usize,
    s: usize,
}

impl ConvGeom {
    fn k_len(&self) -> usize {
        self.in_c * self.k * self.k
    }
    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
    fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }
    fn out_len(&self) -> usize {
        self.out_c * self.positions()
    }

    fn im2col<T: Real>(&self, input: &[T], cols: &mut [T]) {
        let p = self.positions();
        for c in 0..self.in_c {
            let plane = &input[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let src = &plane[(oy * self.s + ky) * self.in_w + kx..];
                        let out = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        for (ox, o) in out.iter_mut().enumerate() {
                            *o = src[ox * self.s];
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], grad_in: &mut [T]) {
        let p = self.positions();
        for c in 0..self.in_c {
            let plane = &mut grad_in[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let base = (oy * self.s + ky) * self.in_w + kx;
                        for ox in 0..self.out_w {
                            plane[base + ox * self.s] += src[oy * self.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Geometry {
    convs: Vec<ConvGeom>,
    /// (fan_in, fan_out) per dense layer, output layer last.
    dense: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Convolutional policy network producing pre-softmax logits.
#[derive(Debug, Clone)]
pub struct PolicyNet<T: Real = f32> {
    spec: NetSpec,
    geom: Geometry,
    convs: Vec<Layer<T>>,
    dense: Vec<Layer<T>>,
}

impl<T: Real> PartialEq for PolicyNet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.convs == other.convs && self.dense == other.dense
    }
}

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
pub fn glorot_init<T: Real>(spec: &NetSpec, seed: u64) -> Result<PolicyNet<T>> {
    let mut net = PolicyNet::zeros(spec)?;
    let mut rng = rng::stream(seed, &[0x6c6f_7261]);
    let fans: Vec<(usize, usize)> = net
        .geom
        .convs
        .iter()
        .map(|g| (g.k_len(), g.out_c * g.k * g.k))
        .chain(net.geom.dense.iter().copied())
        .collect();
    let layers = net.convs.iter_mut().chain(net.dense.iter_mut());
    for (layer, (fan_in, fan_out)) in layers.zip(fans) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in layer.weight.data_mut() {
            *w = T::from_f64(rng.random_range(-limit..=limit));
        }
    }
    Ok(net)
}

/// Cached activations of one forward pass over a batch.
#[derive(Debug, Clone)]
pub struct Activations<T> {
    batch: usize,
    input: Vec<T>,
    conv_out: Vec<Vec<T>>,
    dense_out: Vec<Vec<T>>,
}

impl<T: Real> Activations<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// `[batch, outputs]` logits.
    pub fn logits(&self) -> &[T] {
        self.dense_out.last().expect("at least one dense layer")
    }

    /// Post-ReLU input of the output layer, `[batch, hidden_size]`.
    pub fn hidden(&self) -> &[T] {
        let n = self.dense_out.len();
        if n >= 2 {
            &self.dense_out[n - 2]
        } else {
            self.conv_out.last().unwrap_or(&self.input)
        }
    }
}

impl<T: Real> PolicyNet<T> {
    pub fn zeros(spec: &NetSpec) -> Result<Self> {
        let geom = spec.geometry()?;
        let convs = geom
            .convs
            .iter()
            .map(|g| {
                Ok(Layer {
                    weight: Tensor::zeros(&[g.out_c, g.in_c, g.k, g.k])?,
                    bias: Tensor::zeros(&[g.out_c])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let dense = geom
            .dense
            .iter()
            .map(|&(i, o)| {
                Ok(Layer {
                    weight: Tensor::zeros(&[o, i])?,
                    bias: Tensor::zeros(&[o])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            geom,
            convs,
            dense,
        })
    }

    /// Build a network from parameter tensors in [`Parameters`] order.
    pub fn from_tensors(spec: &NetSpec, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let expected = net.parameters().len();
        if tensors.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} parameter tensors, got {}",
                tensors.len()
            )));
        }
        for (slot, t) in net.parameters_mut().into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::Dimension(format!(
                    "parameter shape {:?} does not match architecture {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn outputs(&self) -> usize {
        self.spec.outputs
    }

    pub fn conv_layers(&self) -> &[Layer<T>] {
        &self.convs
    }

    pub fn dense_layers(&self) -> &[Layer<T>] {
        &self.dense
    }

    pub fn cast<U: Real>(&self) -> PolicyNet<U> {
        let map = |l: &Layer<T>| Layer {
            weight: l.weight.cast(),
            bias: l.bias.cast(),
        };
        PolicyNet {
            spec: self.spec.clone(),
            geom: self.geom.clone(),
            convs: self.convs.iter().map(map).collect(),
            dense: self.dense.iter().map(map).collect(),
        }
    }

    /// Logits for a single observation of `input_height * input_width` values.
    pub fn forward(&self, obs: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.forward_batch(obs.data(), 1)?.logits().to_vec())
    }

    /// Forward pass over `batch` observations stored contiguously.
    pub fn forward_batch(&self, input: &[T], batch: usize) -> Result<Activations<T>> {
        let in_len = self.spec.input_len();
        if batch == 0 || input.len() != batch * in_len {
            return Err(Error::Dimension(format!(
                "expected {batch} x {in_len} input values, got {}",
                input.len()
            )));
        }
        let mut conv_out = Vec::with_capacity(self.convs.len());
        let mut cols = Vec::new();
        for (layer, g) in self.convs.iter().zip(&self.geom.convs) {
            let prev: &[T] = conv_out.last().map(Vec::as_slice).unwrap_or(input);
            let p = g.positions();
            cols.resize(g.k_len() * p, T::ZERO);
            let mut out = vec![T::ZERO; batch * g.out_len()];
            for b in 0..batch {
                let x = &prev[b * g.in_len()..(b + 1) * g.in_len()];
                g.im2col(x, &mut cols);
                let y = &mut out[b * g.out_len()..(b + 1) * g.out_len()];
                for (c, row) in y.chunks_exact_mut(p).enumerate() {
                    row.fill(layer.bias.data()[c]);
                }
                T::gemm(
                    g.out_c,
                    g.k_len(),
                    p,
                    T::ONE,
                    layer.weight.data(),
                    false,
                    &cols,
                    false,
                    T::ONE,
                    y,
                );
            }
            out.iter_mut().for_each(|v| *v = v.relu());
            conv_out.push(out);
        }

        let mut dense_out: Vec<Vec<T>> = Vec::with_capacity(self.dense.len());
        let last = self.dense.len() - 1;
        for (i, (layer, &(fan_in, fan_out))) in self.dense.iter().zip(&self.geom.dense).enumerate() {
            let x: &[T] = match dense_out.last() {
                Some(v) => v,
                None => conv_out.last().map(Vec::as_slice).unwrap_or(input),
            };
            let mut y = vec![T::ZERO; batch * fan_out];
            for row in y.chunks_exact_mut(fan_out) {
                row.copy_from_slice(layer.bias.data());
            }
            T::gemm(batch, fan_in, fan_out, T::ONE, x, false, layer.weight.data(), true, T::ONE, &mut y);
            if i != last {
                y.iter_mut().for_each(|v| *v = v.relu());
            }
            dense_out.push(y);
        }

        Ok(Activations {
            batch,
            input: input.to_vec(),
            conv_out,
            dense_out,
        })
    }

    /// Parameter gradients for a single observation given the upstream
    /// gradient on its logits.
    pub fn backward(&self, obs: &Tensor<T>, grad_logits: &[T]) -> Result<Gradients<T>> {
        let acts = self.forward_batch(obs.data(), 1)?;
        self.backward_from(&acts, grad_logits, None)
    }

    /// Backpropagate through cached activations. `grad_hidden`, when given,
    /// is an extra upstream gradient on [`Activations::hidden`] (used by a
    /// value head sharing the trunk).
    pub fn backward_from(
        &self,
        acts: &Activations<T>,
        grad_logits: &[T],
        grad_hidden: Option<&[T]>,
    ) -> Result<Gradients<T>> {
        let batch = acts.batch;
        if grad_logits.len() != batch * self.spec.outputs {
            return Err(Error::Dimension(format!(
                "logit gradient has {} values, expected {}",
                grad_logits.len(),
                batch * self.spec.outputs
            )));
        }
        let hidden_len = self.geom.dense.last().map(|d| d.0).unwrap_or(0);
        if let Some(h) = grad_hidden {
            if h.len() != batch * hidden_len {
                return Err(Error::Dimension(format!(
                    "hidden gradient has {} values, expected {}",
                    h.len(),
                    batch * hidden_len
                )));
            }
        }

        let mut conv_grads: Vec<Layer<T>> =
            self.convs.iter().map(|l| Layer { weight: l.weight.zeros_like(), bias: l.bias.zeros_like() }).collect();
        let mut dense_grads: Vec<Layer<T>> =
            self.dense.iter().map(|l| Layer { weight: l.weight.zeros_like(), bias: l.bias.zeros_like() }).collect();

        let mut grad = grad_logits.to_vec();
        let n_dense = self.dense.len();
        for i in (0..n_dense).rev() {
            let (fan_in, fan_out) = self.geom.dense[i];
            let x: &[T] = if i > 0 {
                &acts.dense_out[i - 1]
            } else {
                acts.conv_out.last().map(Vec::as_slice).unwrap_or(&acts.input)
            };
            let gl = &mut dense_grads[i];
            T::gemm(fan_out, batch, fan_in, T::ONE, &grad, true, x, false, T::ZERO, gl.weight.data_mut());
            column_sums(&grad, fan_out, gl.bias.data_mut());

            let needs_input_grad = i > 0 || !self.convs.is_empty();
            if !needs_input_grad {
                break;
            }
            let mut dx = vec![T::ZERO; batch * fan_in];
            T::gemm(batch, fan_out, fan_in, T::ONE, &grad, false, self.dense[i].weight.data(), false, T::ZERO, &mut dx);
            if i == n_dense - 1 {
                if let Some(h) = grad_hidden {
                    dx.iter_mut().zip(h).for_each(|(d, &e)| *d += e);
                }
            }
            relu_mask(&mut dx, x);
            grad = dx;
        }

        // `grad` now holds the masked gradient on the last conv output.
        let mut cols = Vec::new();
        let mut dcols = Vec::new();
        for j in (0..self.convs.len()).rev() {
            let g = self.geom.convs[j];
            let p = g.positions();
            let x: &[T] = if j > 0 { &acts.conv_out[j - 1] } else { &acts.input };
            cols.resize(g.k_len() * p, T::ZERO);
            dcols.resize(g.k_len() * p, T::ZERO);
            let mut dx = if j > 0 { vec![T::ZERO; batch * g.in_len()] } else { Vec::new() };
            let mut bias_acc = vec![0.0f64; g.out_c];
            for b in 0..batch {
                let gy = &grad[b * g.out_len()..(b + 1) * g.out_len()];
                g.im2col(&x[b * g.in_len()..(b + 1) * g.in_len()], &mut cols);
                T::gemm(g.out_c, p, g.k_len(), T::ONE, gy, false, &cols, true, T::ONE, conv_grads[j].weight.data_mut());
                for (c, row) in gy.chunks_exact(p).enumerate() {
                    bias_acc[c] += row.iter().map(|v| v.to_f64()).sum::<f64>();
                }
                if j > 0 {
                    T::gemm(g.k_len(), g.out_c, p, T::ONE, self.convs[j].weight.data(), true, gy, false, T::ZERO, &mut dcols);
                    g.col2im(&dcols, &mut dx[b * g.in_len()..(b + 1) * g.in_len()]);
                }
            }
            for (d, s) in conv_grads[j].bias.data_mut().iter_mut().zip(bias_acc) {
                *d = T::from_f64(s);
            }
            if j > 0 {
                relu_mask(&mut dx, x);
                grad = dx;
            }
        }

        let tensors = conv_grads
            .into_iter()
            .chain(dense_grads)
            .flat_map(|l| [l.weight, l.bias])
            .collect();
        Ok(Gradients::new(tensors))
    }

    /// Forward and backward over a batch split into fixed-size chunks.
    ///
    /// `f` receives each chunk's activations and the chunk's sample range and
    /// returns the logit gradient, optional hidden gradient and a per-chunk
    /// payload. Chunk gradients are summed in order, so the result does not
    /// depend on the execution mode.
    pub fn accumulate<S, F>(
        &self,
        input: &[T],
        batch: usize,
        chunk: usize,
        f: F,
    ) -> Result<(Gradients<T>, Vec<S>)>
    where
        S: Send,
        F: Fn(&Activations<T>, Range<usize>) -> Result<(Vec<T>, Option<Vec<T>>, S)> + Sync + Send,
    {
        let in_len = self.spec.input_len();
        if batch == 0 || input.len() != batch * in_len {
            return Err(Error::Dimension(format!(
                "expected {batch} x {in_len} input values, got {}",
                input.len()
            )));
        }
        let parts = parallel::map_chunks(batch, chunk, |range| {
            let acts = self.forward_batch(&input[range.start * in_len..range.end * in_len], range.len())?;
            let (gl, gh, payload) = f(&acts, range)?;
            let grads = self.backward_from(&acts, &gl, gh.as_deref())?;
            Ok::<_, Error>((grads, payload))
        });
        let mut total: Option<Gradients<T>> = None;
        let mut payloads = Vec::with_capacity(parts.len());
        for part in parts {
            let (g, s) = part?;
            match total.as_mut() {
                Some(t) => t.add_assign(&g)?,
                None => total = Some(g),
            }
            payloads.push(s);
        }
        Ok((total.expect("batch is non-empty"), payloads))
    }
}

fn column_sums<T: Real>(grad: &[T], width: usize, out: &mut [T]) {
    let mut acc = vec![0.0f64; width];
    for row in grad.chunks_exact(width) {
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v.to_f64());
    }
    out.iter_mut().zip(acc).for_each(|(o, a)| *o = T::from_f64(a));
}

fn relu_mask<T: Real>(grad: &mut [T], post_activation: &[T]) {
    grad.iter_mut()
        .zip(post_activation)
        .for_each(|(g, &a)| {
            if !(a > T::ZERO) {
                *g = T::ZERO;
            }
        });
}

impl<T: Real> Parameters<T> for PolicyNet<T> {
    fn parameters(&self) -> Vec<&Tensor<T>> {
        self.convs
            .iter()
            .chain(&self.dense)
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.convs
            .iter_mut()
            .chain(self.dense.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro_spec() -> NetSpec {
        NetSpec {
            input_height: 3,
            input_width: 3,
            convs: vec![ConvSpec { channels: 1, kernel: 2, stride: 1 }],
            hidden: vec![],
            outputs: 2,
        }
    }

    #[test]
    fn standard_geometry_chains() {
        let spec = NetSpec::standard(64, 84, 21);
        let g = spec.geometry().unwrap();
        let dims: Vec<_> = g.convs.iter().map(|c| (c.out_c, c.out_h, c.out_w)).collect();
        assert_eq!(dims, vec![(16, 15, 20), (32, 6, 9), (32, 4, 7)]);
        assert_eq!(g.dense, vec![(896, 256), (256, 21)]);
        assert_eq!(spec.hidden_size().unwrap(), 256);
    }

    #[test]
    fn inconsistent_chaining_is_a_spec_error() {
        let mut spec = NetSpec::standard(20, 20, 3);
        spec.convs[0].kernel = 30;
        assert!(matches!(glorot_init::<f32>(&spec, 1), Err(Error::Spec(_))));
        let mut spec = micro_spec();
        spec.outputs = 0;
        assert!(matches!(PolicyNet::<f32>::zeros(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn glorot_biases_zero_and_bounded() {
        let spec = NetSpec {
            input_height: 2,
            input_width: 2,
            convs: vec![],
            hidden: vec![],
            outputs: 2,
        };
        // fan_in = 4, fan_out = 2 -> limit sqrt(6/6) = 1
        let net: PolicyNet<f64> = glorot_init(&spec, 3).unwrap();
        let w = &net.dense_layers()[0].weight;
        assert!(w.data().iter().all(|x| x.abs() <= 1.0));
        assert!(w.max_abs() > 0.0);

        let big: PolicyNet<f32> = glorot_init(&NetSpec::standard(64, 84, 21), 9).unwrap();
        for l in big.conv_layers().iter().chain(big.dense_layers()) {
            assert_eq!(l.bias.max_abs(), 0.0);
        }
        let again: PolicyNet<f32> = glorot_init(&NetSpec::standard(64, 84, 21), 9).unwrap();
        assert_eq!(big, again);
        let other: PolicyNet<f32> = glorot_init(&NetSpec::standard(64, 84, 21), 10).unwrap();
        assert_ne!(big, other);
    }

    #[test]
    fn zero_net_gives_zero_logits() {
        let spec = NetSpec::standard(64, 84, 21);
        let net = PolicyNet::<f32>::zeros(&spec).unwrap();
        let obs = Tensor::from_vec(&[1, 64, 84], (0..64 * 84).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
        assert!(net.forward(&obs).unwrap().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let net: PolicyNet<f32> = glorot_init(&micro_spec(), 1).unwrap();
        let obs = Tensor::from_vec(&[1, 2, 2], vec![0.0; 4]).unwrap();
        assert!(matches!(net.forward(&obs), Err(Error::Dimension(_))));
        let ok = Tensor::from_vec(&[1, 3, 3], vec![0.0; 9]).unwrap();
        assert!(matches!(net.backward(&ok, &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn micro_net_matches_hand_convolution() {
        // conv: 2x2 kernel [[1,2],[3,4]], bias 0.5 over
        // input [[1,0,2],[0,1,0],[3,0,1]]
        // out(0,0) = 1*1+2*0+3*0+4*1+0.5 = 5.5
        // out(0,1) = 1*0+2*2+3*1+4*0+0.5 = 7.5
        // out(1,0) = 1*0+2*1+3*3+4*0+0.5 = 11.5
        // out(1,1) = 1*1+2*0+3*0+4*1+0.5 = 5.5
        // dense 2x4: row0 = [1,0,0,-1] -> 0, row1 = [0.5,0.5,0.5,0.5] -> 15; biases [1,-2]
        let spec = micro_spec();
        let tensors = vec![
            Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            Tensor::from_vec(&[1], vec![0.5]).unwrap(),
            Tensor::from_vec(&[2, 4], vec![1.0, 0.0, 0.0, -1.0, 0.5, 0.5, 0.5, 0.5]).unwrap(),
            Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap(),
        ];
        let net = PolicyNet::<f64>::from_tensors(&spec, tensors).unwrap();
        let obs = Tensor::from_vec(&[1, 3, 3], vec![1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 3.0, 0.0, 1.0]).unwrap();
        let z = net.forward(&obs).unwrap();
        assert_eq!(z, vec![1.0, 13.0]);
    }

    #[test]
    fn forward_is_pure() {
        let spec = NetSpec::standard(48, 64, 5);
        let net: PolicyNet<f32> = glorot_init(&spec, 4).unwrap();
        let obs = Tensor::from_vec(&[1, 48, 64], (0..48 * 64).map(|i| ((i * 37) % 101) as f32 / 101.0).collect()).unwrap();
        let a = net.forward(&obs).unwrap();
        let b = net.forward(&obs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let spec = NetSpec::standard(48, 64, 5);
        let net: PolicyNet<f32> = glorot_init(&spec, 4).unwrap();
        let obs = Tensor::from_vec(&[1, 48, 64], vec![0.3; 48 * 64]).unwrap();
        let g = net.backward(&obs, &[0.0; 5]).unwrap();
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn batch_gradient_is_sum_of_sample_gradients() {
        let spec = NetSpec {
            input_height: 8,
            input_width: 8,
            convs: vec![
                ConvSpec { channels: 3, kernel: 3, stride: 2 },
                ConvSpec { channels: 2, kernel: 2, stride: 1 },
            ],
            hidden: vec![6],
            outputs: 3,
        };
        let net: PolicyNet<f64> = glorot_init(&spec, 11).unwrap();
        let xa: Vec<f64> = (0..64).map(|i| ((i * 13) % 17) as f64 / 17.0).collect();
        let xb: Vec<f64> = (0..64).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
        let ga = [0.3, -1.0, 0.2];
        let gb = [-0.5, 0.1, 0.9];
        let a = net.backward(&Tensor::from_vec(&[1, 8, 8], xa.clone()).unwrap(), &ga).unwrap();
        let b = net.backward(&Tensor::from_vec(&[1, 8, 8], xb.clone()).unwrap(), &gb).unwrap();
        let both: Vec<f64> = xa.into_iter().chain(xb).collect();
        let acts = net.forward_batch(&both, 2).unwrap();
        let g2 = net.backward_from(&acts, &[ga, gb].concat(), None).unwrap();
        let mut sum = a.clone();
        sum.add_assign(&b).unwrap();
        for (x, y) in sum.tensors().iter().zip(g2.tensors()) {
            for (u, v) in x.data().iter().zip(y.data()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
