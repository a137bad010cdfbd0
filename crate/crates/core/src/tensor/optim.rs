use super::{Element, ParamStore};
use crate::error::{Error, Result};

/// Adaptive-moment optimizer state.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Apply one update from the accumulated gradients in `store`.
    ///
    /// Non-finite gradients abort the update and leave the parameters untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        for p in store.params() {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged(format!(
                    "non-finite gradient in {}",
                    p.name
                )));
            }
        }
        if self.m.is_empty() {
            self.m = store.params().iter().map(|p| vec![T::zero(); p.grad.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != store.len() {
            return Err(Error::Shape(format!(
                "optimizer state holds {} tensors, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let (lr, eps) = (T::of(self.lr), T::of(self.eps));
        for ((p, m), v) in store.params_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(&p.grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *w = *w - lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn bowl(w0: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(&[1], vec![w0]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = bowl(0.7);
        let mut opt = Adam::new(0.1);
        for _ in 0..5 {
            opt.step(&mut s).unwrap();
        }
        assert_eq!(s.params()[0].value.data(), &[0.7]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut s = bowl(1.0);
        let mut opt = Adam::new(0.1);
        for _ in 0..200 {
            s.zero_grad();
            let w = s.params()[0].value.data()[0];
            s.params_mut()[0].grad[0] = 2.0 * w;
            opt.step(&mut s).unwrap();
        }
        assert!(s.params()[0].value.data()[0].abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut s = bowl(1.0);
        s.params_mut()[0].grad[0] = f64::NAN;
        let err = Adam::new(0.1).step(&mut s).unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged(_)));
        assert_eq!(s.params()[0].value.data(), &[1.0]);
    }

    #[test]
    fn trajectories_are_bitwise_reproducible() {
        let run = || {
            let mut s = bowl(0.3);
            let mut opt = Adam::new(0.05);
            let mut traj = Vec::new();
            for i in 0..50 {
                s.zero_grad();
                let w = s.params()[0].value.data()[0];
                s.params_mut()[0].grad[0] = 2.0 * w + (i as f64).sin();
                opt.step(&mut s).unwrap();
                traj.push(s.params()[0].value.data()[0].to_bits());
            }
            traj
        };
        assert_eq!(run(), run());
    }
}
