use super::tape::{Bindings, Gradients, Tape};
use super::{Element, Tensor};
use crate::container::Container;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Accumulated gradient, same length as `value`.
    pub grad: Vec<T>,
}

/// Named trainable tensors plus their gradient accumulators.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self { params: Vec::new() }
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let grad = vec![T::zero(); value.len()];
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.params[id.0].grad
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Record every parameter as a gradient-requiring leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bindings {
        self.bind_with(tape, true)
    }

    /// Record parameters as constants (inference).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Bindings {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &mut Tape<T>, requires_grad: bool) -> Bindings {
        Bindings(
            self.params
                .iter()
                .map(|p| tape.leaf(p.value.clone(), requires_grad))
                .collect(),
        )
    }

    /// Add the gradients of one backward pass into the accumulators.
    /// Parameters that did not take part receive nothing and stay as they were.
    pub fn accumulate(&mut self, grads: &Gradients<T>, bindings: &Bindings) {
        for (p, &v) in self.params.iter_mut().zip(&bindings.0) {
            if let Some(g) = grads.get(v) {
                for (a, &b) in p.grad.iter_mut().zip(g) {
                    *a = *a + b;
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: vec![U::zero(); p.value.len()],
                })
                .collect(),
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        for p in &self.params {
            c.push(
                p.name.clone(),
                p.value.shape(),
                p.value.data().iter().map(|v| v.as_f64() as f32).collect(),
            );
        }
        c
    }

    /// Overwrite values from a container; names and shapes must match exactly.
    pub fn load_container(&mut self, c: &Container) -> Result<()> {
        for p in &mut self.params {
            let r = c.get(&p.name)?;
            if r.shape != p.value.shape() {
                return Err(Error::format(
                    p.name.clone(),
                    format!("shape {:?} does not match model {:?}", r.shape, p.value.shape()),
                ));
            }
            p.value = Tensor::new(&r.shape, r.data.iter().map(|&v| T::of(v as f64)).collect())?;
        }
        Ok(())
    }
}
