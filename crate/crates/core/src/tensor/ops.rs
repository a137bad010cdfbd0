use super::tape::{Op, Tape, Var};
use super::{conv_out_len, Element, Tensor};
use crate::error::{Error, Result};
use crate::par;

// Conv batches are reduced in this many fixed chunks so the summation order of
// kernel gradients never depends on the worker count.
const CONV_CHUNKS: usize = 8;

fn shape_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{what}: {a:?} vs {b:?}"))
}

impl<T: Element> Tape<T> {
    /// `x·w (+ bias)` for `x: [n×a]`, `w: [a×b]`, `bias: [b]`.
    pub fn affine(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(shape_err("affine", &xs, &ws));
        }
        let (n, a, b) = (xs[0], xs[1], ws[1]);
        let mut out = vec![T::zero(); n * b];
        if let Some(bv) = bias {
            let bs = self.shape(bv);
            if bs != [b] {
                return Err(shape_err("affine bias", bs, &[b]));
            }
            let bd = self.value(bv).data();
            for row in out.chunks_mut(b) {
                row.copy_from_slice(bd);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        T::gemm(
            n,
            a,
            b,
            self.value(x).data(),
            false,
            self.value(w).data(),
            false,
            &mut out,
            beta,
        );
        let inputs: Vec<Var> = [Some(x), Some(w), bias].into_iter().flatten().collect();
        Ok(self.push(Tensor::new(&[n, b], out)?, Op::Affine { x, w, bias }, &inputs))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::Shape(format!("transpose needs rank 2, got {s:?}")));
        }
        let out = transpose2(self.value(x).data(), s[0], s[1]);
        Ok(self.push(Tensor::new(&[s[1], s[0]], out)?, Op::Transpose(x), &[x]))
    }

    /// Batched 1-D convolution with zero padding.
    ///
    /// `x: [batch×cin×len]`, `kernel: [cout×cin×k]`, optional `bias: [cout]`.
    pub fn conv1d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(kernel).to_vec());
        if xs.len() != 3 || ks.len() != 3 || xs[1] != ks[1] {
            return Err(shape_err("conv1d", &xs, &ks));
        }
        if stride == 0 {
            return Err(Error::Contract("conv1d stride must be >= 1".into()));
        }
        let (batch, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, kw) = (ks[0], ks[2]);
        let lout = conv_out_len(len, kw, stride, padding).ok_or_else(|| {
            Error::InputTooShort(format!(
                "conv1d input length {len} with padding {padding} is shorter than kernel {kw}"
            ))
        })?;
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(shape_err("conv1d bias", self.shape(b), &[cout]));
            }
        }
        let geom = ConvGeom {
            cin,
            len,
            kw,
            stride,
            padding,
            lout,
        };
        let xd = self.value(x).data();
        let kd = self.value(kernel).data();
        let bd = bias.map(|b| self.value(b).data());
        let mut out = vec![T::zero(); batch * cout * lout];
        par::for_each_chunk_mut(&mut out, cout * lout, |b, ob| {
            let mut cols = vec![T::zero(); cin * kw * lout];
            geom.im2col(&xd[b * cin * len..(b + 1) * cin * len], &mut cols);
            let beta = match bd {
                Some(bias) => {
                    for (c, row) in ob.chunks_mut(lout).enumerate() {
                        row.iter_mut().for_each(|v| *v = bias[c]);
                    }
                    T::one()
                }
                None => T::zero(),
            };
            T::gemm(cout, cin * kw, lout, kd, false, &cols, false, ob, beta);
        });
        let inputs: Vec<Var> = [Some(x), Some(kernel), bias].into_iter().flatten().collect();
        Ok(self.push(
            Tensor::new(&[batch, cout, lout], out)?,
            Op::Conv1d {
                x,
                kernel,
                bias,
                stride,
                padding,
            },
            &inputs,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.map_value(x, |v| if v > T::zero() { v } else { T::zero() });
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.map_value(x, |v| T::one() / (T::one() + (-v).exp()));
        self.push(out, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.map_value(x, |v| v.tanh());
        self.push(out, Op::Tanh(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_values(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_values(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_values(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let f = T::of(c);
        let out = self.map_value(x, |v| v * f);
        self.push(out, Op::Scale(x, c), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// `[b×p×q] -> [b×q×p]`; turns conv output `[batch×channels×time]` into
    /// `[batch×time×channels]`.
    pub fn swap_last2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(Error::Shape(format!("swap_last2 needs rank 3, got {s:?}")));
        }
        let (b, p, q) = (s[0], s[1], s[2]);
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(xd.len());
        for bi in 0..b {
            out.extend(transpose2(&xd[bi * p * q..(bi + 1) * p * q], p, q));
        }
        Ok(self.push(Tensor::new(&[b, q, p], out)?, Op::SwapLast2(x), &[x]))
    }

    /// Frames `start..start+len` of a `[batch×time×dim]` sequence.
    pub fn narrow_time(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || start + len > s[1] || len == 0 {
            return Err(Error::Shape(format!(
                "narrow_time {start}+{len} out of range for {s:?}"
            )));
        }
        let (b, t, d) = (s[0], s[1], s[2]);
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(b * len * d);
        for bi in 0..b {
            let base = bi * t * d + start * d;
            out.extend_from_slice(&xd[base..base + len * d]);
        }
        Ok(self.push(
            Tensor::new(&[b, len, d], out)?,
            Op::NarrowTime { x, start },
            &[x],
        ))
    }

    /// Frame `t` of a `[batch×time×dim]` sequence as `[batch×dim]`.
    pub fn select_time(&mut self, x: Var, t: usize) -> Result<Var> {
        let n = self.narrow_time(x, t, 1)?;
        let s = self.shape(n).to_vec();
        self.reshape(n, &[s[0], s[2]])
    }

    pub fn reverse_time(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(Error::Shape(format!("reverse_time needs rank 3, got {s:?}")));
        }
        let out = reverse_frames(self.value(x).data(), s[0], s[1], s[2]);
        Ok(self.push(Tensor::new(&s, out)?, Op::ReverseTime(x), &[x]))
    }

    /// Stack `[batch×dim]` frames into `[batch×n×dim]`.
    pub fn stack_time(&mut self, frames: &[Var]) -> Result<Var> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Contract("stack_time of zero frames".into()))?;
        let s = self.shape(*first).to_vec();
        if s.len() != 2 {
            return Err(Error::Shape(format!("stack_time frames must be rank 2, got {s:?}")));
        }
        for f in frames {
            if self.shape(*f) != s.as_slice() {
                return Err(shape_err("stack_time", self.shape(*f), &s));
            }
        }
        let (b, d, n) = (s[0], s[1], frames.len());
        let mut out = vec![T::zero(); b * n * d];
        for (t, f) in frames.iter().enumerate() {
            let fd = self.value(*f).data();
            for bi in 0..b {
                out[bi * n * d + t * d..bi * n * d + (t + 1) * d]
                    .copy_from_slice(&fd[bi * d..(bi + 1) * d]);
            }
        }
        Ok(self.push(
            Tensor::new(&[b, n, d], out)?,
            Op::StackTime(frames.to_vec()),
            frames,
        ))
    }

    /// Concatenate along the last axis; leading dimensions must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa.is_empty() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(shape_err("concat_last", &sa, &sb));
        }
        let (da, db) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let rows = self.value(a).len() / da.max(1);
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(ad.len() + bd.len());
        for r in 0..rows {
            out.extend_from_slice(&ad[r * da..(r + 1) * da]);
            out.extend_from_slice(&bd[r * db..(r + 1) * db]);
        }
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = da + db;
        Ok(self.push(Tensor::new(&shape, out)?, Op::ConcatLast(a, b), &[a, b]))
    }

    /// Row-wise log-softmax with max subtraction.
    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::Shape(format!("log_softmax_rows needs rank 2, got {s:?}")));
        }
        let xd = self.value(x).data();
        if xd.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("NaN entering log_softmax_rows".into()));
        }
        let mut out = Vec::with_capacity(xd.len());
        for row in xd.chunks(s[1]) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            out.extend(row.iter().map(|&v| v - lse));
        }
        Ok(self.push(Tensor::new(&s, out)?, Op::LogSoftmaxRows(x), &[x]))
    }

    pub fn diagonal(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || s[0] != s[1] {
            return Err(Error::Shape(format!("diagonal needs a square matrix, got {s:?}")));
        }
        let xd = self.value(x).data();
        let out = (0..s[0]).map(|i| xd[i * s[0] + i]).collect();
        Ok(self.push(Tensor::new(&[s[0]], out)?, Op::Diagonal(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(v), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let d = self.value(x).data();
        let v = d.iter().copied().sum::<T>() / T::of(d.len() as f64);
        self.push(Tensor::scalar(v), Op::Mean(x), &[x])
    }

    fn map_value(&self, x: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let t = self.value(x);
        Tensor::new(t.shape(), t.data().iter().map(|&v| f(v)).collect()).expect("same shape")
    }

    fn zip_values(&self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(what, ta.shape(), tb.shape()));
        }
        Tensor::new(
            ta.shape(),
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub(crate) fn backprop(
        &self,
        idx: usize,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) -> Result<()> {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, bias } => {
                let (xs, ws) = (self.shape(*x), self.shape(*w));
                let (n, a, b) = (xs[0], xs[1], ws[1]);
                if self.nodes[x.0].needs_grad {
                    let mut dx = vec![T::zero(); n * a];
                    T::gemm(n, b, a, g, false, self.value(*w).data(), true, &mut dx, T::zero());
                    self.accumulate(grads, *x, dx);
                }
                if self.nodes[w.0].needs_grad {
                    let mut dw = vec![T::zero(); a * b];
                    T::gemm(a, n, b, self.value(*x).data(), true, g, false, &mut dw, T::zero());
                    self.accumulate(grads, *w, dw);
                }
                if let Some(bv) = bias {
                    if self.nodes[bv.0].needs_grad {
                        let mut db = vec![T::zero(); b];
                        for row in g.chunks(b) {
                            for (d, &v) in db.iter_mut().zip(row) {
                                *d = *d + v;
                            }
                        }
                        self.accumulate(grads, *bv, db);
                    }
                }
            }
            Op::Transpose(x) => {
                let s = self.shape(*x);
                self.accumulate(grads, *x, transpose2(g, s[1], s[0]));
            }
            Op::Conv1d {
                x,
                kernel,
                bias,
                stride,
                padding,
            } => self.conv1d_backward(*x, *kernel, *bias, *stride, *padding, g, grads),
            Op::Relu(x) => {
                let d = out
                    .iter()
                    .zip(g)
                    .map(|(&o, &gv)| if o > T::zero() { gv } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, d);
            }
            Op::Sigmoid(x) => {
                let d = out
                    .iter()
                    .zip(g)
                    .map(|(&o, &gv)| gv * o * (T::one() - o))
                    .collect();
                self.accumulate(grads, *x, d);
            }
            Op::Tanh(x) => {
                let d = out
                    .iter()
                    .zip(g)
                    .map(|(&o, &gv)| gv * (T::one() - o * o))
                    .collect();
                self.accumulate(grads, *x, d);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if self.nodes[a.0].needs_grad {
                    self.accumulate(grads, *a, g.iter().zip(bd).map(|(&gv, &y)| gv * y).collect());
                }
                if self.nodes[b.0].needs_grad {
                    self.accumulate(grads, *b, g.iter().zip(ad).map(|(&gv, &x)| gv * x).collect());
                }
            }
            Op::Scale(x, c) => {
                let f = T::of(*c);
                self.accumulate(grads, *x, g.iter().map(|&v| v * f).collect());
            }
            Op::Reshape(x) => self.accumulate(grads, *x, g.to_vec()),
            Op::SwapLast2(x) => {
                let s = self.shape(*x);
                let (b, p, q) = (s[0], s[1], s[2]);
                let mut d = Vec::with_capacity(g.len());
                for bi in 0..b {
                    d.extend(transpose2(&g[bi * p * q..(bi + 1) * p * q], q, p));
                }
                self.accumulate(grads, *x, d);
            }
            Op::NarrowTime { x, start } => {
                let s = self.shape(*x);
                let (b, t, dim) = (s[0], s[1], s[2]);
                let len = node.value.shape()[1];
                self.accumulate_with(grads, *x, |d| {
                    for bi in 0..b {
                        let base = bi * t * dim + start * dim;
                        let src = &g[bi * len * dim..(bi + 1) * len * dim];
                        for (a, &v) in d[base..base + len * dim].iter_mut().zip(src) {
                            *a = *a + v;
                        }
                    }
                });
            }
            Op::ReverseTime(x) => {
                let s = self.shape(*x);
                self.accumulate(grads, *x, reverse_frames(g, s[0], s[1], s[2]));
            }
            Op::StackTime(frames) => {
                let s = node.value.shape();
                let (b, n, dim) = (s[0], s[1], s[2]);
                for (t, f) in frames.iter().enumerate() {
                    if !self.nodes[f.0].needs_grad {
                        continue;
                    }
                    let mut d = Vec::with_capacity(b * dim);
                    for bi in 0..b {
                        d.extend_from_slice(&g[bi * n * dim + t * dim..bi * n * dim + (t + 1) * dim]);
                    }
                    self.accumulate(grads, *f, d);
                }
            }
            Op::ConcatLast(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (da, db) = (sa[sa.len() - 1], sb[sb.len() - 1]);
                let rows = g.len() / (da + db);
                let mut ga = Vec::with_capacity(rows * da);
                let mut gb = Vec::with_capacity(rows * db);
                for row in g.chunks(da + db) {
                    ga.extend_from_slice(&row[..da]);
                    gb.extend_from_slice(&row[da..]);
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::LogSoftmaxRows(x) => {
                let cols = node.value.shape()[1];
                let mut d = Vec::with_capacity(g.len());
                for (orow, grow) in out.chunks(cols).zip(g.chunks(cols)) {
                    let gs: T = grow.iter().copied().sum();
                    d.extend(orow.iter().zip(grow).map(|(&o, &gv)| gv - o.exp() * gs));
                }
                self.accumulate(grads, *x, d);
            }
            Op::Diagonal(x) => {
                let n = node.value.len();
                let mut d = vec![T::zero(); n * n];
                for i in 0..n {
                    d[i * n + i] = g[i];
                }
                self.accumulate(grads, *x, d);
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![g[0] / T::of(n as f64); n]);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn conv1d_backward(
        &self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let xs = self.shape(x);
        let ks = self.shape(kernel);
        let (batch, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, kw) = (ks[0], ks[2]);
        let lout = g.len() / (batch * cout);
        let geom = ConvGeom {
            cin,
            len,
            kw,
            stride,
            padding,
            lout,
        };
        let xd = self.value(x).data();
        let kd = self.value(kernel).data();
        let need_x = self.nodes[x.0].needs_grad;
        let need_k = self.nodes[kernel.0].needs_grad;

        if let Some(b) = bias {
            if self.nodes[b.0].needs_grad {
                let mut db = vec![T::zero(); cout];
                for gb in g.chunks(cout * lout) {
                    for (c, row) in gb.chunks(lout).enumerate() {
                        db[c] = db[c] + row.iter().copied().sum::<T>();
                    }
                }
                self.accumulate(grads, b, db);
            }
        }
        if !need_x && !need_k {
            return;
        }

        let chunk = batch.div_ceil(CONV_CHUNKS.min(batch));
        let n_chunks = batch.div_ceil(chunk);
        let mut dx = if need_x {
            vec![T::zero(); batch * cin * len]
        } else {
            Vec::new()
        };
        // Each chunk produces its partial kernel gradient; partials are summed in chunk order.
        let partials: Vec<Vec<T>> = if need_x {
            par::map_chunks_mut(&mut dx, chunk * cin * len, |ci, dxc| {
                conv_chunk(&geom, ci, chunk, batch, cout, xd, kd, g, need_k, Some(dxc))
            })
        } else {
            par::map_range(n_chunks, |ci| {
                conv_chunk(&geom, ci, chunk, batch, cout, xd, kd, g, need_k, None)
            })
        };
        if need_k {
            let mut dk = vec![T::zero(); cout * cin * kw];
            for p in &partials {
                for (a, &b) in dk.iter_mut().zip(p) {
                    *a = *a + b;
                }
            }
            self.accumulate(grads, kernel, dk);
        }
        if need_x {
            self.accumulate(grads, x, dx);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_chunk<T: Element>(
    geom: &ConvGeom,
    ci: usize,
    chunk: usize,
    batch: usize,
    cout: usize,
    xd: &[T],
    kd: &[T],
    g: &[T],
    need_k: bool,
    mut dx: Option<&mut [T]>,
) -> Vec<T> {
    let ConvGeom { cin, len, kw, lout, .. } = *geom;
    let rows = cin * kw;
    let mut dk = if need_k {
        vec![T::zero(); cout * rows]
    } else {
        Vec::new()
    };
    let mut cols = vec![T::zero(); rows * lout];
    let mut dcols = vec![T::zero(); rows * lout];
    for b in ci * chunk..((ci + 1) * chunk).min(batch) {
        let gb = &g[b * cout * lout..(b + 1) * cout * lout];
        if need_k {
            geom.im2col(&xd[b * cin * len..(b + 1) * cin * len], &mut cols);
            T::gemm(cout, lout, rows, gb, false, &cols, true, &mut dk, T::one());
        }
        if let Some(dxc) = dx.as_deref_mut() {
            T::gemm(rows, cout, lout, kd, true, gb, false, &mut dcols, T::zero());
            let local = b - ci * chunk;
            geom.col2im(&dcols, &mut dxc[local * cin * len..(local + 1) * cin * len]);
        }
    }
    dk
}

#[derive(Clone, Copy)]
struct ConvGeom {
    cin: usize,
    len: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    lout: usize,
}

impl ConvGeom {
    /// Source index of output `o`, tap `j`, or `None` inside the zero padding.
    #[inline]
    fn src(&self, o: usize, j: usize) -> Option<usize> {
        let p = (o * self.stride + j) as isize - self.padding as isize;
        (p >= 0 && (p as usize) < self.len).then_some(p as usize)
    }

    fn im2col<T: Element>(&self, x: &[T], cols: &mut [T]) {
        for c in 0..self.cin {
            let xc = &x[c * self.len..(c + 1) * self.len];
            for j in 0..self.kw {
                let row = &mut cols[(c * self.kw + j) * self.lout..(c * self.kw + j + 1) * self.lout];
                for (o, v) in row.iter_mut().enumerate() {
                    *v = self.src(o, j).map_or(T::zero(), |p| xc[p]);
                }
            }
        }
    }

    fn col2im<T: Element>(&self, cols: &[T], dx: &mut [T]) {
        for c in 0..self.cin {
            let dxc = &mut dx[c * self.len..(c + 1) * self.len];
            for j in 0..self.kw {
                let row = &cols[(c * self.kw + j) * self.lout..(c * self.kw + j + 1) * self.lout];
                for (o, &v) in row.iter().enumerate() {
                    if let Some(p) = self.src(o, j) {
                        dxc[p] = dxc[p] + v;
                    }
                }
            }
        }
    }
}

fn transpose2<T: Copy>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(x[r * cols + c]);
        }
    }
    out
}

fn reverse_frames<T: Copy>(x: &[T], b: usize, t: usize, d: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for bi in 0..b {
        for ti in (0..t).rev() {
            let base = bi * t * d + ti * d;
            out.extend_from_slice(&x[base..base + d]);
        }
    }
    out
}
