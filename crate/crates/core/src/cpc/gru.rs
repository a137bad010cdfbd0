//! Gated recurrent unit built from tape primitives.
//!
//! Each gate has an input-side and a hidden-side bias:
//! `r = σ(x W_ir + b_ir + h W_hr + b_hr)`, `z` likewise,
//! `n = tanh(x W_in + b_in + r ⊙ (h W_hn + b_hn))`, `h' = (1 − z) ⊙ n + z ⊙ h`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Bindings, Element, ParamId, ParamStore, Tape, Tensor, Var};

const GATES: [&str; 3] = ["r", "z", "n"];

/// Parameter slots of one GRU layer, gates ordered reset, update, candidate.
#[derive(Clone, Debug)]
pub struct GruLayer {
    pub input: usize,
    pub hidden: usize,
    w_i: [ParamId; 3],
    b_i: [ParamId; 3],
    w_h: [ParamId; 3],
    b_h: [ParamId; 3],
}

impl GruLayer {
    pub fn new<T: Element, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let mut slot = |name: String, shape: &[usize], bound: f64| {
            if bound == 0.0 {
                store.add(name, Tensor::zeros(shape))
            } else {
                store.add(name, Tensor::uniform(shape, bound, rng))
            }
        };
        let bi = 1.0 / (input as f64).sqrt();
        let bh = 1.0 / (hidden as f64).sqrt();
        let w_i = GATES.map(|g| slot(format!("{prefix}.w_i{g}"), &[input, hidden], bi));
        let b_i = GATES.map(|g| slot(format!("{prefix}.b_i{g}"), &[hidden], 0.0));
        let w_h = GATES.map(|g| slot(format!("{prefix}.w_h{g}"), &[hidden, hidden], bh));
        let b_h = GATES.map(|g| slot(format!("{prefix}.b_h{g}"), &[hidden], 0.0));
        Self {
            input,
            hidden,
            w_i,
            b_i,
            w_h,
            b_h,
        }
    }

    /// One step: `x: [batch×input]`, `h: [batch×hidden]`.
    pub fn cell<T: Element>(&self, tape: &mut Tape<T>, p: &Bindings, x: Var, h: Var) -> Result<Var> {
        let mut xp = [x; 3];
        for g in 0..3 {
            xp[g] = tape.affine(x, p.var(self.w_i[g]), Some(p.var(self.b_i[g])))?;
        }
        self.step(tape, p, xp, h)
    }

    /// `xp` holds the input-side projections (bias included) for the three gates.
    fn step<T: Element>(&self, tape: &mut Tape<T>, p: &Bindings, xp: [Var; 3], h: Var) -> Result<Var> {
        let mut hp = [h; 3];
        for g in 0..3 {
            hp[g] = tape.affine(h, p.var(self.w_h[g]), Some(p.var(self.b_h[g])))?;
        }
        let r = tape.add(xp[0], hp[0])?;
        let r = tape.sigmoid(r);
        let z = tape.add(xp[1], hp[1])?;
        let z = tape.sigmoid(z);
        let gated = tape.mul(r, hp[2])?;
        let n = tape.add(xp[2], gated)?;
        let n = tape.tanh(n);
        let carry = tape.sub(h, n)?;
        let carry = tape.mul(z, carry)?;
        tape.add(n, carry)
    }

    /// Run over `x: [batch×time×input]` from a zero state; returns every
    /// hidden state as `[batch×time×hidden]`.
    pub fn sequence<T: Element>(&self, tape: &mut Tape<T>, p: &Bindings, x: Var) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        if s.len() != 3 || s[2] != self.input {
            return Err(Error::Shape(format!(
                "GRU expects [batch×time×{}], got {s:?}",
                self.input
            )));
        }
        let (b, t) = (s[0], s[1]);
        let flat = tape.reshape(x, &[b * t, self.input])?;
        let mut proj = [x; 3];
        for g in 0..3 {
            let y = tape.affine(flat, p.var(self.w_i[g]), Some(p.var(self.b_i[g])))?;
            proj[g] = tape.reshape(y, &[b, t, self.hidden])?;
        }
        let mut h = tape.constant(Tensor::zeros(&[b, self.hidden]));
        let mut states = Vec::with_capacity(t);
        for step in 0..t {
            let mut xp = proj;
            for g in 0..3 {
                xp[g] = tape.select_time(proj[g], step)?;
            }
            h = self.step(tape, p, xp, h)?;
            states.push(h);
        }
        tape.stack_time(&states)
    }
}
