//! Recurrent and dense building blocks over the tape.

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::grid::VertexId;
use crate::rng::Rng;
use crate::tensor::{ParameterStore, Tape, Tensor, TensorResult, Var};
use rand::Rng as _;

/// Uniform(−k, k) with k = 1/√fan_in.
pub fn init_uniform(rng: &mut Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let k = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-k..k)).collect();
    Tensor::new(shape, data).expect("finite init")
}

/// Registers `{prefix}.w` of shape `[outputs, inputs]` and `{prefix}.b`.
pub fn register_linear(store: &mut ParameterStore, rng: &mut Rng, prefix: &str, inputs: usize, outputs: usize) -> TensorResult<()> {
    store.insert(&format!("{prefix}.w"), init_uniform(rng, vec![outputs, inputs], inputs))?;
    store.insert(&format!("{prefix}.b"), init_uniform(rng, vec![outputs], inputs))?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: Var,
    pub b: Var,
}

impl Linear {
    pub fn bind<'a>(tape: &mut Tape<'a>, store: &'a ParameterStore, prefix: &str) -> TensorResult<Self> {
        Ok(Self { w: tape.param(store, &format!("{prefix}.w"))?, b: tape.param(store, &format!("{prefix}.b"))? })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> TensorResult<Var> {
        let wx = tape.matmul(self.w, x)?;
        tape.add(wx, self.b)
    }
}

/// Registers an LSTM cell: `{prefix}.w` is `[4H, inputs + H]`, gate order
/// input, forget, candidate, output.
pub fn register_lstm(store: &mut ParameterStore, rng: &mut Rng, prefix: &str, inputs: usize, hidden: usize) -> TensorResult<()> {
    register_linear(store, rng, prefix, inputs + hidden, 4 * hidden)
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    gates: Linear,
    hidden: usize,
}

impl Lstm {
    pub fn bind<'a>(tape: &mut Tape<'a>, store: &'a ParameterStore, prefix: &str) -> TensorResult<Self> {
        let gates = Linear::bind(tape, store, prefix)?;
        let hidden = tape.value(gates.b).len() / 4;
        Ok(Self { gates, hidden })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn zero_state(&self, tape: &mut Tape<'_>) -> LstmState {
        LstmState {
            h: tape.constant(Tensor::zeros(vec![self.hidden])),
            c: tape.constant(Tensor::zeros(vec![self.hidden])),
        }
    }

    pub fn step(&self, tape: &mut Tape<'_>, x: Var, state: LstmState) -> TensorResult<LstmState> {
        let h = self.hidden;
        let xh = tape.concat(&[x, state.h])?;
        let z = self.gates.forward(tape, xh)?;
        let i = tape.slice(z, 0, h)?;
        let i = tape.sigmoid(i)?;
        let f = tape.slice(z, h, h)?;
        let f = tape.sigmoid(f)?;
        let g = tape.slice(z, 2 * h, h)?;
        let g = tape.tanh(g)?;
        let o = tape.slice(z, 3 * h, h)?;
        let o = tape.sigmoid(o)?;
        let keep = tape.mul(f, state.c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let squashed = tape.tanh(c)?;
        let h = tape.mul(o, squashed)?;
        Ok(LstmState { h, c })
    }
}

/// Cell-embedding lookup on a tape: the frozen table, or a trainable copy.
#[derive(Debug, Clone, Copy)]
pub enum Embedder<'a> {
    Frozen(&'a EmbeddingTable),
    Tuned { table: Var, dim: usize },
}

impl<'a> Embedder<'a> {
    pub fn lookup(&self, tape: &mut Tape<'a>, cell: VertexId) -> Result<Var> {
        match *self {
            Embedder::Frozen(table) => Ok(tape.constant_ref(table.row(cell)?)),
            Embedder::Tuned { table, dim } => {
                let rows = tape.value(table).len() / dim;
                if cell >= rows {
                    return Err(Error::Lookup(format!("no embedding for vertex {cell}")));
                }
                Ok(tape.slice(table, cell * dim, dim)?)
            }
        }
    }
}
