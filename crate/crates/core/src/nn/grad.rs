use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Access to a model's trainable tensors in a fixed order.
pub trait Parameters<T: Real> {
    fn parameters(&self) -> Vec<&Tensor<T>>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>>;
}

/// Gradients aligned with a model's [`Parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn new(tensors: Vec<Tensor<T>>) -> Self {
        Self { tensors }
    }

    pub fn zeros_for<P: Parameters<T> + ?Sized>(model: &P) -> Self {
        Self::new(model.parameters().iter().map(|t| t.zeros_like()).collect())
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<Tensor<T>> {
        self.tensors
    }

    /// Append another gradient set (e.g. a head's) after this one.
    pub fn extend(&mut self, other: Gradients<T>) {
        self.tensors.extend(other.tensors);
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Dimension("gradient sets differ in length".into()));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(Error::Dimension(format!(
                    "gradient shapes {:?} and {:?} differ",
                    a.shape(),
                    b.shape()
                )));
            }
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, &y)| *x += y);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        let f = T::from_f64(factor);
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|x| *x *= f);
        }
    }

    /// Global L2 norm over every tensor.
    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sum_squares).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data().iter().all(|x| x.to_f64().is_finite()))
    }
}

/// Rescale `grads` so that their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(grads: &mut Gradients<T>, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
        // Rounding can leave the result a hair above the limit; shrink until
        // it is not, so a second call is a no-op.
        while grads.global_norm() > max_norm {
            grads.scale(1.0 - T::EPSILON.to_f64());
        }
    }
    norm
}

/// Numerically stable softmax in f64.
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<f64>> {
    let z: Vec<f64> = logits.iter().map(|x| x.to_f64()).collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("softmax input contains NaN or infinity".into()));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// log-softmax in f64 with the same stabilisation as [`softmax`].
pub fn log_softmax<T: Real>(logits: &[T]) -> Result<Vec<f64>> {
    let z: Vec<f64> = logits.iter().map(|x| x.to_f64()).collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("log_softmax input contains NaN or infinity".into()));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(z.into_iter().map(|v| v - lse).collect())
}

pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads(values: &[f64]) -> Gradients<f64> {
        Gradients::new(vec![Tensor::from_vec(&[values.len()], values.to_vec()).unwrap()])
    }

    #[test]
    fn clip_examples() {
        let mut g = grads(&[30.0, 40.0]);
        assert_eq!(clip_grad_norm(&mut g, 5.0), 50.0);
        assert!((g.tensors()[0].data()[0] - 3.0).abs() < 1e-12);
        assert!((g.tensors()[0].data()[1] - 4.0).abs() < 1e-12);

        let mut small = grads(&[0.0, 3.0]);
        clip_grad_norm(&mut small, 5.0);
        assert_eq!(small, grads(&[0.0, 3.0]));

        let mut zero = grads(&[0.0, 0.0]);
        clip_grad_norm(&mut zero, 5.0);
        assert_eq!(zero, grads(&[0.0, 0.0]));
    }

    #[test]
    fn clip_is_idempotent_after_rounding() {
        // The rescaled norm may round above the limit; a second call must not move anything.
        for v in [[0.1, 0.2, 0.3], [1e-3, 7.0, 22.5], [13.0, 0.0, 0.7]] {
            let mut g = grads(&v);
            clip_grad_norm(&mut g, 0.3);
            assert!(g.global_norm() <= 0.3);
            let once = g.clone();
            clip_grad_norm(&mut g, 0.3);
            assert_eq!(g, once);
        }
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0f64, 0.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let c = 1.7;
        let p = softmax(&[c, c + 2f64.ln()]).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12 && (p[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!(softmax(&[f64::NAN, 1.0]).is_err());
        assert!(softmax(&[f64::INFINITY, 1.0]).is_err());
    }

    #[test]
    fn log_softmax_agrees_with_softmax() {
        let z = [0.5f64, -1.0, 3.0];
        let p = softmax(&z).unwrap();
        let lp = log_softmax(&z).unwrap();
        for (a, b) in p.iter().zip(lp) {
            assert!((a.ln() - b).abs() < 1e-12);
        }
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0, -1.0]), 1);
    }
}
