use super::{ParameterStore, Tensor, TensorError, TensorResult};
use std::collections::HashMap;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value<'a> {
    Owned(Tensor),
    Borrowed(&'a Tensor),
}

impl Value<'_> {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op {
    Constant,
    Variable,
    Param { store: u64, index: usize },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Stack(Vec<Var>),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
    Softmax(Var),
}

/// Operation graph for one forward pass. Node indices are a topological
/// order, so the backward sweep is a single reverse scan.
pub struct Tape<'a> {
    values: Vec<Value<'a>>,
    ops: Vec<Op>,
    tracked: Vec<bool>,
    grad_enabled: bool,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    params: Vec<(u64, usize, Vec<f64>)>,
    variables: HashMap<Var, Vec<f64>>,
}

impl Gradients {
    /// Gradient with respect to a leaf created by [`Tape::variable`].
    pub fn wrt(&self, var: Var) -> Option<&[f64]> {
        self.variables.get(&var).map(Vec::as_slice)
    }

    pub(crate) fn for_store(&self, uid: u64) -> impl Iterator<Item = (usize, &[f64])> {
        self.params
            .iter()
            .filter(move |(s, _, _)| *s == uid)
            .map(|(_, i, g)| (*i, g.as_slice()))
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> TensorResult<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() }
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    /// A tape that records everything needed for [`Tape::backward`].
    pub fn new() -> Self {
        Self { values: Vec::new(), ops: Vec::new(), tracked: Vec::new(), grad_enabled: true }
    }

    /// Forward-only tape: nothing is tracked and backward is refused.
    pub fn no_grad() -> Self {
        Self { grad_enabled: false, ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, value: Value<'a>, op: Op, tracked: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.tracked.push(tracked && self.grad_enabled);
        Var(self.ops.len() - 1)
    }

    fn record(&mut self, name: &'static str, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> TensorResult<Var> {
        check_finite(name, &data)?;
        let tracked = inputs.iter().any(|v| self.tracked[v.0]);
        Ok(self.push(Value::Owned(Tensor::from_parts(shape, data)), op, tracked))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        self.values[var.0].get()
    }

    pub fn data(&self, var: Var) -> &[f64] {
        self.value(var).data()
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.push(Value::Owned(tensor), Op::Constant, false)
    }

    pub fn constant_ref(&mut self, tensor: &'a Tensor) -> Var {
        self.push(Value::Borrowed(tensor), Op::Constant, false)
    }

    /// Leaf whose gradient is reported through [`Gradients::wrt`].
    pub fn variable(&mut self, tensor: Tensor) -> Var {
        self.push(Value::Owned(tensor), Op::Variable, true)
    }

    pub fn param(&mut self, store: &'a ParameterStore, name: &str) -> TensorResult<Var> {
        let index = store.index_of(name).ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        Ok(self.push(
            Value::Borrowed(store.value_at(index)),
            Op::Param { store: store.uid(), index },
            true,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let (k2, n, out_shape) = match tb.shape() {
            [k2] => (*k2, 1, vec![m]),
            [k2, n] => (*k2, *n, vec![m, *n]),
            _ => return Err(mismatch("matmul", ta, tb)),
        };
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        if n == 1 {
            for (o, row) in out.iter_mut().zip(ad.chunks_exact(k)) {
                *o = dot(row, bd);
            }
        } else {
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    axpy(ad[i * k + p], &bd[p * n..(p + 1) * n], orow);
                }
            }
        }
        self.record("matmul", out_shape, out, Op::MatMul(a, b), &[a, b])
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> TensorResult<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let out = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        self.record(name, shape, out, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> TensorResult<Var> {
        let t = self.value(a);
        let out = t.data().iter().map(|x| x * factor).collect();
        let shape = t.shape().to_vec();
        self.record("scale", shape, out, Op::Scale(a, factor), &[a])
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> TensorResult<Var> {
        let t = self.value(a);
        let out = t.data().iter().map(|&x| f(x)).collect();
        let shape = t.shape().to_vec();
        self.record(name, shape, out, op, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> TensorResult<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> TensorResult<Var> {
        self.map("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> TensorResult<Var> {
        self.map("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> TensorResult<Var> {
        self.map("log", a, f64::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> TensorResult<Var> {
        self.map("square", a, |x| x * x, Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> TensorResult<Var> {
        let s = self.data(a).iter().sum();
        self.record("sum", vec![1], vec![s], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> TensorResult<Var> {
        let d = self.data(a);
        if d.is_empty() {
            return Err(TensorError::Invalid { op: "mean", detail: "empty tensor".into() });
        }
        let s = d.iter().sum::<f64>() / d.len() as f64;
        self.record("mean", vec![1], vec![s], Op::Mean(a), &[a])
    }

    /// Flattens and joins the inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> TensorResult<Var> {
        if parts.is_empty() {
            return Err(TensorError::Invalid { op: "concat", detail: "no inputs".into() });
        }
        let mut out = Vec::with_capacity(parts.iter().map(|&p| self.value(p).len()).sum());
        for &p in parts {
            out.extend_from_slice(self.data(p));
        }
        let n = out.len();
        self.record("concat", vec![n], out, Op::Concat(parts.to_vec()), parts)
    }

    /// Contiguous range of the flattened input.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> TensorResult<Var> {
        let d = self.data(a);
        if start + len > d.len() || len == 0 {
            return Err(TensorError::Invalid {
                op: "slice",
                detail: format!("range {start}..{} out of bounds for {} values", start + len, d.len()),
            });
        }
        let out = d[start..start + len].to_vec();
        self.record("slice", vec![len], out, Op::Slice(a, start), &[a])
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> TensorResult<Var> {
        let Some(&first) = rows.first() else {
            return Err(TensorError::Invalid { op: "stack", detail: "no inputs".into() });
        };
        let width = self.value(first).len();
        let mut out = Vec::with_capacity(width * rows.len());
        for &r in rows {
            let t = self.value(r);
            if t.len() != width {
                return Err(mismatch("stack", self.value(first), t));
            }
            out.extend_from_slice(t.data());
        }
        self.record("stack", vec![rows.len(), width], out, Op::Stack(rows.to_vec()), rows)
    }

    pub fn transpose(&mut self, a: Var) -> TensorResult<Var> {
        let t = self.value(a);
        let [m, n] = *t.shape() else {
            return Err(TensorError::Invalid { op: "transpose", detail: format!("expected a matrix, got {:?}", t.shape()) });
        };
        let d = t.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        self.record("transpose", vec![n, m], out, Op::Transpose(a), &[a])
    }

    pub fn softmax(&mut self, a: Var) -> TensorResult<Var> {
        let n = self.value(a).len();
        self.masked_softmax(a, &vec![1.0; n])
    }

    /// `exp(logits) ⊗ mask` normalized to unit L1 norm. Entries outside
    /// the mask are exactly zero.
    pub fn masked_softmax(&mut self, logits: Var, mask: &[f64]) -> TensorResult<Var> {
        let t = self.value(logits);
        if t.shape().len() != 1 || t.len() != mask.len() {
            return Err(TensorError::ShapeMismatch {
                op: "masked_softmax",
                lhs: t.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(TensorError::Invalid { op: "masked_softmax", detail: "mask must be binary".into() });
        }
        let d = t.data();
        let max = d
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m == 1.0)
            .map(|(&x, _)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(TensorError::EmptyMask);
        }
        let mut out: Vec<f64> = d
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m == 1.0 { (x - max).exp() } else { 0.0 })
            .collect();
        let z: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= z);
        let n = out.len();
        self.record("masked_softmax", vec![n], out, Op::Softmax(logits), &[logits])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> TensorResult<Gradients> {
        if !self.grad_enabled {
            return Err(TensorError::NoGrad);
        }
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(TensorError::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.tracked[i] {
                continue;
            }
            match &self.ops[i] {
                Op::Constant => {}
                Op::Variable => {
                    out.variables.insert(Var(i), g);
                }
                Op::Param { store, index } => out.params.push((*store, *index, g)),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k) = (ta.shape()[0], ta.shape()[1]);
                    let n = tb.len() / k;
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        // dA += G · Bᵀ
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            let garow = &mut ga[r * k..(r + 1) * k];
                            if n == 1 {
                                axpy(grow[0], tb.data(), garow);
                            } else {
                                for (p, gap) in garow.iter_mut().enumerate() {
                                    *gap += dot(grow, &tb.data()[p * n..(p + 1) * n]);
                                }
                            }
                        }
                    }
                    if let Some(gb) = slot(&self.tracked, &self.values, &mut grads, *b) {
                        // dB += Aᵀ · G
                        let ad = ta.data();
                        for r in 0..m {
                            let arow = &ad[r * k..(r + 1) * k];
                            if n == 1 {
                                axpy(g[r], arow, gb);
                            } else {
                                let grow = &g[r * n..(r + 1) * n];
                                for (p, &av) in arow.iter().enumerate() {
                                    axpy(av, grow, &mut gb[p * n..(p + 1) * n]);
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        axpy(1.0, &g, ga);
                    }
                    if let Some(gb) = slot(&self.tracked, &self.values, &mut grads, *b) {
                        axpy(1.0, &g, gb);
                    }
                }
                Op::Sub(a, b) => {
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        axpy(1.0, &g, ga);
                    }
                    if let Some(gb) = slot(&self.tracked, &self.values, &mut grads, *b) {
                        axpy(-1.0, &g, gb);
                    }
                }
                Op::Mul(a, b) => {
                    let (da, db) = (self.data(*a), self.data(*b));
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        ga.iter_mut().zip(&g).zip(db).for_each(|((o, gi), y)| *o += gi * y);
                    }
                    if let Some(gb) = slot(&self.tracked, &self.values, &mut grads, *b) {
                        gb.iter_mut().zip(&g).zip(da).for_each(|((o, gi), x)| *o += gi * x);
                    }
                }
                Op::Scale(a, s) => {
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        axpy(*s, &g, ga);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        if let Some(gp) = slot(&self.tracked, &self.values, &mut grads, *p) {
                            axpy(1.0, &g[offset..offset + n], gp);
                        }
                        offset += n;
                    }
                }
                Op::Slice(a, start) => {
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        axpy(1.0, &g, &mut ga[*start..*start + g.len()]);
                    }
                }
                Op::Stack(rows) => {
                    let width = g.len() / rows.len();
                    for (r, row) in rows.iter().enumerate() {
                        if let Some(gr) = slot(&self.tracked, &self.values, &mut grads, *row) {
                            axpy(1.0, &g[r * width..(r + 1) * width], gr);
                        }
                    }
                }
                Op::Transpose(a) => {
                    let shape = self.value(*a).shape();
                    let (m, n) = (shape[0], shape[1]);
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        for r in 0..m {
                            for c in 0..n {
                                ga[r * n + c] += g[c * m + r];
                            }
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let y = self.data(Var(i));
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        ga.iter_mut().zip(&g).zip(y).for_each(|((o, gi), y)| *o += gi * y * (1.0 - y));
                    }
                }
                Op::Tanh(a) => {
                    let y = self.data(Var(i));
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        ga.iter_mut().zip(&g).zip(y).for_each(|((o, gi), y)| *o += gi * (1.0 - y * y));
                    }
                }
                Op::Exp(a) => {
                    let y = self.data(Var(i));
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        ga.iter_mut().zip(&g).zip(y).for_each(|((o, gi), y)| *o += gi * y);
                    }
                }
                Op::Log(a) => {
                    let x = self.data(*a);
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        ga.iter_mut().zip(&g).zip(x).for_each(|((o, gi), x)| *o += gi / x);
                    }
                }
                Op::Square(a) => {
                    let x = self.data(*a);
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        ga.iter_mut().zip(&g).zip(x).for_each(|((o, gi), x)| *o += 2.0 * gi * x);
                    }
                }
                Op::Sum(a) => {
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        ga.iter_mut().for_each(|o| *o += g[0]);
                    }
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len() as f64;
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        ga.iter_mut().for_each(|o| *o += g[0] / n);
                    }
                }
                Op::Softmax(a) => {
                    let y = self.data(Var(i));
                    let inner = dot(y, &g);
                    if let Some(ga) = slot(&self.tracked, &self.values, &mut grads, *a) {
                        ga.iter_mut().zip(&g).zip(y).for_each(|((o, gi), y)| *o += y * (gi - inner));
                    }
                }
            }
        }
        for (_, _, g) in &out.params {
            check_finite("backward", g)?;
        }
        Ok(out)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_t(v: &[f64]) -> Tensor {
        Tensor::vector(v.to_vec()).unwrap()
    }

    #[test]
    fn masked_softmax_examples() {
        let mut tape = Tape::no_grad();
        let x = tape.constant(vec_t(&[0.3, 0.3]));
        let p = tape.masked_softmax(x, &[1.0, 1.0]).unwrap();
        assert_eq!(tape.data(p), &[0.5, 0.5]);

        let x = tape.constant(vec_t(&[5.0, -2.0, 0.1]));
        let p = tape.masked_softmax(x, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(tape.data(p), &[0.0, 1.0, 0.0]);

        let x = tape.constant(vec_t(&[1.0; 9]));
        let p = tape.masked_softmax(x, &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(tape.data(p), &[0.25, 0.25, 0.25, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn masked_softmax_errors() {
        let mut tape = Tape::no_grad();
        let x = tape.constant(vec_t(&[1.0, 2.0]));
        assert_eq!(tape.masked_softmax(x, &[0.0, 0.0]), Err(TensorError::EmptyMask));
        assert!(matches!(tape.masked_softmax(x, &[1.0]), Err(TensorError::ShapeMismatch { .. })));
        assert!(tape.masked_softmax(x, &[0.5, 1.0]).is_err());
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::new();
        let a = tape.constant(vec_t(&[1.0, 2.0]));
        let b = tape.constant(vec_t(&[1.0, 2.0, 3.0]));
        assert!(matches!(tape.add(a, b), Err(TensorError::ShapeMismatch { .. })));
        let m = tape.constant(Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap());
        assert!(tape.matmul(m, b).is_err());
        assert!(tape.slice(a, 1, 2).is_err());
        assert!(matches!(tape.backward(a), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut tape = Tape::new();
        let a = tape.constant(vec_t(&[0.0]));
        assert_eq!(tape.log(a), Err(TensorError::NonFinite { op: "log" }));
        let big = tape.constant(vec_t(&[1000.0]));
        assert!(tape.exp(big).is_err());
    }

    #[test]
    fn no_grad_tape_refuses_backward() {
        let mut tape = Tape::no_grad();
        let a = tape.variable(vec_t(&[1.0]));
        let s = tape.sum(a).unwrap();
        assert_eq!(tape.backward(s).unwrap_err(), TensorError::NoGrad);
    }

    #[test]
    fn simple_gradients() {
        let mut tape = Tape::new();
        let p = tape.variable(vec_t(&[1.0, -2.0, 3.0]));
        let s = tape.sum(p).unwrap();
        assert_eq!(tape.backward(s).unwrap().wrt(p).unwrap(), &[1.0, 1.0, 1.0]);

        let sq = tape.square(p).unwrap();
        let s = tape.sum(sq).unwrap();
        assert_eq!(tape.backward(s).unwrap().wrt(p).unwrap(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn shared_node_gradient_accumulates() {
        let mut tape = Tape::new();
        let p = tape.variable(vec_t(&[3.0]));
        let q = tape.mul(p, p).unwrap();
        let r = tape.add(q, p).unwrap();
        let s = tape.sum(r).unwrap();
        assert_eq!(tape.backward(s).unwrap().wrt(p).unwrap(), &[7.0]);
    }

    #[test]
    fn matmul_values() {
        let mut tape = Tape::no_grad();
        let a = tape.constant(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let x = tape.constant(vec_t(&[1.0, 0.0, -1.0]));
        let y = tape.matmul(a, x).unwrap();
        assert_eq!(tape.data(y), &[-2.0, -2.0]);
        let b = tape.constant(Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 2]);
        assert_eq!(tape.data(c), &[4.0, 5.0, 10.0, 11.0]);
        let t = tape.transpose(a).unwrap();
        assert_eq!(tape.data(t), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }
}

fn slot<'g>(tracked: &[bool], values: &[Value<'_>], grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
    if !tracked[v.0] {
        return None;
    }
    let n = values[v.0].get().len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}
