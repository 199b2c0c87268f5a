//! Finite-difference cases for every differentiable building block.

use super::{finite_difference_error, small_env};
use rand::Rng as _;
use trep_core::actor::{Actor, ActorConfig, Forcing, OutputHead};
use trep_core::critic::{Critic, CriticConfig, QTarget};
use trep_core::nn::{register_lstm, Lstm};
use trep_core::rng::seeded;
use trep_core::tensor::{ParameterStore, Tape, Tensor, TensorResult, Var};
use trep_core::{Action, Env, Trajectory};

/// Worst relative error of one gradient check and where it occurred.
#[derive(Debug, Clone)]
pub struct Case {
    pub label: String,
    pub error: f64,
    pub at: String,
}

impl Case {
    fn new(label: impl Into<String>, (error, at): (f64, String)) -> Self {
        Self { label: label.into(), error, at }
    }
}

type Build = dyn for<'a> Fn(&mut Tape<'a>, &[Var]) -> TensorResult<Var>;

fn weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * 0.73 + 0.2).sin() + 0.3).collect()
}

/// `Σ w ⊙ build(params)`, so every output entry receives a distinct upstream gradient.
fn projected<'a>(tape: &mut Tape<'a>, store: &'a ParameterStore, build: &Build) -> Var {
    let vars: Vec<Var> = store.names().iter().map(|n| tape.param(store, n).unwrap()).collect();
    let out = build(tape, &vars).unwrap();
    let shape = tape.value(out).shape().to_vec();
    let w = tape.constant(Tensor::new(shape.clone(), weights(shape.iter().product())).unwrap());
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod).unwrap()
}

fn op(label: &str, shapes: &[(&str, &[usize])], positive: bool, build: &Build) -> Case {
    let mut rng = seeded(label.bytes().map(u64::from).sum());
    let mut store = ParameterStore::new();
    for (name, shape) in shapes {
        let n = shape.iter().product();
        let data = (0..n).map(|_| if positive { rng.gen_range(0.5..2.0) } else { rng.gen_range(-1.0..1.0) }).collect();
        store.insert(name, Tensor::new(shape.to_vec(), data).unwrap()).unwrap();
    }
    let mut tape = Tape::new();
    let loss = projected(&mut tape, &store, build);
    let grads = tape.backward(loss).unwrap();
    store.accumulate(&grads);
    let worst = finite_difference_error(&store, 64, |s| {
        let mut tape = Tape::no_grad();
        let loss = projected(&mut tape, s, build);
        tape.value(loss).item()
    });
    Case::new(label, worst)
}

pub fn elementwise() -> Vec<Case> {
    let pair: &[(&str, &[usize])] = &[("a", &[2, 3]), ("b", &[2, 3])];
    let one: &[(&str, &[usize])] = &[("a", &[5])];
    vec![
        op("add", pair, false, &|t, v| t.add(v[0], v[1])),
        op("sub", pair, false, &|t, v| t.sub(v[0], v[1])),
        op("mul", pair, false, &|t, v| t.mul(v[0], v[1])),
        op("scale", one, false, &|t, v| t.scale(v[0], -1.7)),
        op("sigmoid", one, false, &|t, v| t.sigmoid(v[0])),
        op("tanh", one, false, &|t, v| t.tanh(v[0])),
        op("exp", one, false, &|t, v| t.exp(v[0])),
        op("log", one, true, &|t, v| t.log(v[0])),
        op("square", one, false, &|t, v| t.square(v[0])),
    ]
}

pub fn layout() -> Vec<Case> {
    vec![
        op("sum", &[("a", &[3, 2])], false, &|t, v| t.sum(v[0])),
        op("mean", &[("a", &[7])], false, &|t, v| t.mean(v[0])),
        op("concat", &[("a", &[3]), ("b", &[2]), ("c", &[4])], false, &|t, v| t.concat(v)),
        op("slice", &[("a", &[8])], false, &|t, v| t.slice(v[0], 2, 5)),
        op("stack", &[("a", &[4]), ("b", &[4]), ("c", &[4])], false, &|t, v| t.stack(v)),
        op("transpose", &[("a", &[3, 4])], false, &|t, v| t.transpose(v[0])),
        // A parameter used twice accumulates both paths.
        op("reuse", &[("a", &[4])], false, &|t, v| {
            let s = t.tanh(v[0])?;
            t.mul(s, v[0])
        }),
        op("matvec", &[("m", &[3, 4]), ("x", &[4])], false, &|t, v| t.matmul(v[0], v[1])),
        op("matmat", &[("a", &[2, 3]), ("b", &[3, 4])], false, &|t, v| t.matmul(v[0], v[1])),
    ]
}

pub fn softmax() -> Vec<Case> {
    let mask = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    vec![
        op("softmax", &[("a", &[9])], false, &|t, v| t.softmax(v[0])),
        op("masked_softmax", &[("a", &[9])], false, &move |t, v| t.masked_softmax(v[0], &mask)),
        // Log-likelihood of one action through the mask, as the decoder uses it.
        op("log_policy", &[("a", &[9])], false, &move |t, v| {
            let p = t.masked_softmax(v[0], &mask)?;
            let pick = t.slice(p, 3, 1)?;
            t.log(pick)
        }),
    ]
}

fn lstm_store(layers: &[(usize, usize)], steps: usize, inputs: usize, seed: u64) -> ParameterStore {
    let mut rng = seeded(seed);
    let mut store = ParameterStore::new();
    for (l, &(i, h)) in layers.iter().enumerate() {
        register_lstm(&mut store, &mut rng, &format!("l{l}"), i, h).unwrap();
    }
    for s in 0..steps {
        let x = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        store.insert(&format!("x{s}"), Tensor::vector(x).unwrap()).unwrap();
    }
    store
}

/// Runs `layers` stacked LSTMs over the `x*` inputs and sums every
/// top-layer hidden state projected on fixed weights.
fn lstm_loss<'a>(tape: &mut Tape<'a>, store: &'a ParameterStore, layers: usize, steps: usize) -> Var {
    let cells: Vec<Lstm> = (0..layers).map(|l| Lstm::bind(tape, store, &format!("l{l}")).unwrap()).collect();
    let mut states: Vec<_> = cells.iter().map(|c| c.zero_state(tape)).collect();
    let mut terms = Vec::new();
    for s in 0..steps {
        let mut x = tape.param(store, &format!("x{s}")).unwrap();
        for (cell, state) in cells.iter().zip(states.iter_mut()) {
            *state = cell.step(tape, x, *state).unwrap();
            x = state.h;
        }
        let w = tape.constant(Tensor::vector(weights(tape.value(x).len())).unwrap());
        let prod = tape.mul(x, w).unwrap();
        terms.push(tape.sum(prod).unwrap());
    }
    let all = tape.concat(&terms).unwrap();
    tape.sum(all).unwrap()
}

fn lstm(label: &str, layers: &[(usize, usize)], steps: usize, inputs: usize) -> Case {
    let mut store = lstm_store(layers, steps, inputs, 11);
    let mut tape = Tape::new();
    let loss = lstm_loss(&mut tape, &store, layers.len(), steps);
    let grads = tape.backward(loss).unwrap();
    store.accumulate(&grads);
    let worst = finite_difference_error(&store, 24, |s| {
        let mut tape = Tape::no_grad();
        let loss = lstm_loss(&mut tape, s, layers.len(), steps);
        tape.value(loss).item()
    });
    Case::new(label, worst)
}

pub fn recurrent() -> Vec<Case> {
    vec![
        lstm("lstm step", &[(3, 4)], 1, 3),
        lstm("lstm unrolled", &[(3, 4)], 5, 3),
        lstm("three-layer recurrent cell", &[(3, 5), (5, 4), (4, 3)], 4, 3),
    ]
}

fn walk(env: &Env, start: usize, len: usize, seed: u64) -> Trajectory {
    env.net.random_walk(start, len, seed).unwrap()
}

fn with_params<T: Clone>(model: &T, store: &ParameterStore, set: impl Fn(&mut T) -> &mut ParameterStore) -> T {
    let mut probe = model.clone();
    *set(&mut probe) = store.clone();
    probe
}

fn actor(env: &Env, head: OutputHead, finetune: bool) -> Actor {
    let config = ActorConfig { repr_dim: 6, decoder_hidden: Some(5), finetune_embeddings: finetune, head };
    Actor::new(env, config, 5).unwrap()
}

/// The unrolled actor over five decoding steps.
pub fn actor_cases() -> Vec<Case> {
    let env = small_env();
    let truth = walk(&env, 3, 6, 1);
    let mut out = Vec::new();
    for (head, finetune, forcing) in [
        (OutputHead::Actions, false, Forcing::Teacher),
        (OutputHead::Actions, true, Forcing::Teacher),
        (OutputHead::Actions, false, Forcing::FreeRunning),
        (OutputHead::Cells, false, Forcing::Teacher),
    ] {
        let mut a = actor(&env, head, finetune);
        let (_, grads) = a.mll_gradients(&env, &truth, forcing).unwrap();
        a.params_mut().accumulate(&grads);
        let worst = finite_difference_error(a.params(), 12, |s| {
            with_params(&a, s, Actor::params_mut).mll_loss(&env, &truth, forcing).unwrap()
        });
        out.push(Case::new(format!("actor likelihood {head:?} finetune={finetune} {forcing:?}"), worst));
    }

    let prefix = walk(&env, truth.first(), 5, 3);
    let mut rng = seeded(4);
    let q: Vec<[f64; Action::COUNT]> = (0..5).map(|_| std::array::from_fn(|_| rng.gen_range(-4.0..0.0))).collect();
    let mut a = actor(&env, OutputHead::Actions, false);
    let (value, grads) = a.expected_value_gradients(&env, &truth, prefix.vertices(), &q).unwrap();
    assert_eq!(value, a.expected_value(&env, &truth, prefix.vertices(), &q).unwrap());
    a.params_mut().accumulate(&grads);
    let worst = finite_difference_error(a.params(), 12, |s| {
        with_params(&a, s, Actor::params_mut).expected_value(&env, &truth, prefix.vertices(), &q).unwrap()
    });
    out.push(Case::new("actor expected value", worst));
    out
}

fn critic(env: &Env, action_penalty: f64) -> Critic {
    Critic::new(env, CriticConfig { hidden: 6, state_dim: 4, action_penalty }, 9).unwrap()
}

/// The critic's Bellman loss and its all-action regression with the spread penalty.
pub fn critic_cases() -> Vec<Case> {
    let env = small_env();
    let truth = walk(&env, 2, 6, 5);
    let recon = walk(&env, truth.first(), 6, 6);
    let actions = recon.actions(&env.net).unwrap();
    let targets = [-1.0, -0.5, 0.0, -2.0, -1.5];
    let mut c = critic(&env, 0.0);
    let (loss, grads) = c.loss_gradients(&env, &truth, recon.vertices(), &actions, &targets).unwrap();
    assert_eq!(loss, c.loss(&env, &truth, recon.vertices(), &actions, &targets).unwrap());
    c.params_mut().accumulate(&grads);
    let worst = finite_difference_error(c.params(), 12, |s| {
        with_params(&c, s, Critic::params_mut).loss(&env, &truth, recon.vertices(), &actions, &targets).unwrap()
    });
    let mut out = vec![Case::new("critic loss", worst)];

    let prefix = walk(&env, truth.first(), 5, 8);
    let targets: Vec<QTarget> = (0..5)
        .flat_map(|step| {
            env.net
                .legal_actions(prefix.vertices()[step])
                .into_iter()
                .map(move |action| QTarget { step, action, value: -(step as f64) - 0.25 * action.index() as f64 })
        })
        .collect();
    let mut c = critic(&env, 0.5);
    let (_, grads) = c.regression_gradients(&env, &truth, prefix.vertices(), &targets).unwrap();
    c.params_mut().accumulate(&grads);
    let worst = finite_difference_error(c.params(), 12, |s| {
        with_params(&c, s, Critic::params_mut).regression_gradients(&env, &truth, prefix.vertices(), &targets).unwrap().0
    });
    out.push(Case::new("critic regression", worst));
    out
}

pub fn all() -> Vec<Case> {
    [elementwise(), layout(), softmax(), recurrent(), actor_cases(), critic_cases()].concat()
}
