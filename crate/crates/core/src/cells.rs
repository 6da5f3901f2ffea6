//! Recurrent cells shared by the hierarchical model and the baselines.
//!
//! Normative equations (version [`CELL_EQUATIONS`]):
//!
//! Standard LSTM over input `x` and previous state `(c, h)`, weights
//! `W: 4d x (n + d)`, rows ordered as gates `[i; f; o; g]`:
//!
//! ```text
//! [i, f, o, g] = split(W [x; h] + b)
//! c' = sigmoid(f) * c + sigmoid(i) * tanh(g)
//! h' = sigmoid(o) * tanh(c')
//! ```
//!
//! Two-dimensional LSTM over input `x` and two predecessor states `(c_a, h_a)`
//! and `(c_b, h_b)`, weights `W: 5d x (n + 2d)`, gates `[i; j; f_a; f_b; o]`:
//!
//! ```text
//! [i, j, f_a, f_b, o] = split(W [x; h_a; h_b] + b)
//! c' = tanh(i) * sigmoid(j) + c_a * sigmoid(f_a) + c_b * sigmoid(f_b)
//! h' = tanh(c') * sigmoid(o)
//! ```
//!
//! Elman RNN (baseline only): `h' = tanh(W [x; h] + b)`.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::autodiff::{ParamId, ParamStore, ShapeError, Tape, Tensor, Var};

/// Version tag of the cell and combiner equations, stored in checkpoints.
pub const CELL_EQUATIONS: &str = "lstm-ifog/2dlstm-ij2fo/combiner-6eq/v1";

/// A `(cell, h)` pair. On a tape the components are [`Var`]s; detached
/// values use `Vec<f64>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatePair<T = Var> {
    pub cell: T,
    pub h: T,
}

impl StatePair<Var> {
    pub fn values(&self, tape: &Tape<'_>) -> StatePair<Vec<f64>> {
        StatePair { cell: tape.value(self.cell).to_vec(), h: tape.value(self.h).to_vec() }
    }

    pub fn zeros_on(tape: &mut Tape<'_>, d: usize) -> Self {
        StatePair { cell: tape.zeros(d, 1), h: tape.zeros(d, 1) }
    }
}

impl StatePair<Vec<f64>> {
    pub fn zeros(d: usize) -> Self {
        StatePair { cell: vec![0.0; d], h: vec![0.0; d] }
    }

    pub fn is_finite(&self) -> bool {
        self.cell.iter().chain(&self.h).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmWeights {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoDLstmWeights {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RnnWeights {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// `W x + b`.
pub(crate) fn affine(tape: &mut Tape<'_>, w: ParamId, b: ParamId, x: Var) -> Result<Var, ShapeError> {
    let w = tape.param(w);
    let b = tape.param(b);
    let wx = tape.matmul(w, x)?;
    tape.add(wx, b)
}

pub fn lstm_step(tape: &mut Tape<'_>, weights: &LstmWeights, input: Var, prev: StatePair) -> Result<StatePair, ShapeError> {
    let x = tape.concat_rows(&[input, prev.h])?;
    let z = affine(tape, weights.w, weights.b, x)?;
    let gates = tape.split_rows(z, 4)?;
    let i = tape.sigmoid(gates[0]);
    let f = tape.sigmoid(gates[1]);
    let o = tape.sigmoid(gates[2]);
    let g = tape.tanh(gates[3]);
    let keep = tape.mul(f, prev.cell)?;
    let write = tape.mul(i, g)?;
    let cell = tape.add(keep, write)?;
    let squashed = tape.tanh(cell);
    let h = tape.mul(o, squashed)?;
    Ok(StatePair { cell, h })
}

pub fn twod_lstm_step(
    tape: &mut Tape<'_>,
    weights: &TwoDLstmWeights,
    input: Var,
    a: StatePair,
    b: StatePair,
) -> Result<StatePair, ShapeError> {
    let x = tape.concat_rows(&[input, a.h, b.h])?;
    let z = affine(tape, weights.w, weights.b, x)?;
    let g = tape.split_rows(z, 5)?;
    let ti = tape.tanh(g[0]);
    let sj = tape.sigmoid(g[1]);
    let sfa = tape.sigmoid(g[2]);
    let sfb = tape.sigmoid(g[3]);
    let so = tape.sigmoid(g[4]);
    let fresh = tape.mul(ti, sj)?;
    let from_a = tape.mul(a.cell, sfa)?;
    let from_b = tape.mul(b.cell, sfb)?;
    let partial = tape.add(fresh, from_a)?;
    let cell = tape.add(partial, from_b)?;
    let squashed = tape.tanh(cell);
    let h = tape.mul(squashed, so)?;
    Ok(StatePair { cell, h })
}

/// Returns the new hidden vector.
pub fn rnn_step(tape: &mut Tape<'_>, weights: &RnnWeights, input: Var, h: Var) -> Result<Var, ShapeError> {
    let x = tape.concat_rows(&[input, h])?;
    let z = affine(tape, weights.w, weights.b, x)?;
    Ok(tape.tanh(z))
}

/// Registers parameters in order, drawing weights from a seeded generator.
///
/// Weight matrices are Xavier-uniform on `[-s, s]` with
/// `s = sqrt(6 / (rows + cols))`; biases start at zero except the standard
/// LSTM forget gate, which starts at one.
pub struct ParamInit<'a> {
    store: &'a mut ParamStore,
    rng: Xoshiro256PlusPlus,
}

impl<'a> ParamInit<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        ParamInit { store, rng: Xoshiro256PlusPlus::seed_from_u64(seed) }
    }

    pub fn xavier(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.random_range(-bound..=bound)).collect();
        self.store.add(name, Tensor { rows, cols, data })
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.store.add(name, Tensor::zeros(rows, cols))
    }

    pub fn lstm(&mut self, name: &str, input: usize, hidden: usize) -> LstmWeights {
        let w = self.xavier(&format!("{name}.w"), 4 * hidden, input + hidden);
        let mut bias = Tensor::zeros(4 * hidden, 1);
        bias.data[hidden..2 * hidden].fill(1.0);
        let b = self.store.add(format!("{name}.b"), bias);
        LstmWeights { w, b, input, hidden }
    }

    pub fn twod_lstm(&mut self, name: &str, input: usize, hidden: usize) -> TwoDLstmWeights {
        let w = self.xavier(&format!("{name}.w"), 5 * hidden, input + 2 * hidden);
        let b = self.zeros(&format!("{name}.b"), 5 * hidden, 1);
        TwoDLstmWeights { w, b, input, hidden }
    }

    pub fn rnn(&mut self, name: &str, input: usize, hidden: usize) -> RnnWeights {
        let w = self.xavier(&format!("{name}.w"), hidden, input + hidden);
        let b = self.zeros(&format!("{name}.b"), hidden, 1);
        RnnWeights { w, b, input, hidden }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_store(init: impl FnOnce(&mut ParamInit<'_>) -> ParamId) -> ParamStore {
        let mut store = ParamStore::new();
        init(&mut ParamInit::new(&mut store, 0));
        for (_, p) in store.iter_mut() {
            p.tensor.data.fill(0.0);
        }
        store
    }

    fn col(tape: &mut Tape<'_>, v: Vec<f64>) -> Var {
        tape.constant(Tensor::column(v))
    }

    #[test]
    fn lstm_zero_weights_fixpoint() {
        let d = 3;
        let mut weights = None;
        let store = zero_store(|i| {
            let w = i.lstm("l", d, d);
            weights = Some(w);
            w.w
        });
        let weights = weights.unwrap();
        let mut tape = Tape::new(&store);
        let x = col(&mut tape, vec![0.4, -0.2, 0.9]);
        let prev = StatePair::zeros_on(&mut tape, d);
        let out = lstm_step(&mut tape, &weights, x, prev).unwrap().values(&tape);
        assert_eq!(out, StatePair::<Vec<f64>>::zeros(d));

        let c = vec![1.0, -2.0, 0.5];
        let prev = StatePair { cell: col(&mut tape, c.clone()), h: col(&mut tape, vec![0.3; d]) };
        let out = lstm_step(&mut tape, &weights, x, prev).unwrap().values(&tape);
        for k in 0..d {
            assert_eq!(out.cell[k], 0.5 * c[k]);
            assert_eq!(out.h[k], 0.5 * (0.5 * c[k]).tanh());
        }
    }

    #[test]
    fn twod_lstm_zero_weights() {
        let d = 2;
        let mut weights = None;
        let store = zero_store(|i| {
            let w = i.twod_lstm("t", d, d);
            weights = Some(w);
            w.w
        });
        let weights = weights.unwrap();
        let mut tape = Tape::new(&store);
        let x = col(&mut tape, vec![1.0, 1.0]);
        let zero = StatePair::zeros_on(&mut tape, d);
        let out = twod_lstm_step(&mut tape, &weights, x, zero, zero).unwrap().values(&tape);
        assert_eq!(out, StatePair::<Vec<f64>>::zeros(d));

        // tanh(i) = 0, sigmoid(j) = sigmoid(f_a) = sigmoid(f_b) = sigmoid(o) = 0.5.
        let c = vec![0.8, -1.6];
        let a = StatePair { cell: col(&mut tape, c.clone()), h: col(&mut tape, vec![0.1, 0.2]) };
        let out = twod_lstm_step(&mut tape, &weights, x, a, zero).unwrap().values(&tape);
        for k in 0..d {
            assert_eq!(out.cell[k], 0.5 * c[k]);
            assert_eq!(out.h[k], (0.5 * c[k]).tanh() * 0.5);
        }
    }

    #[test]
    fn init_is_seeded_and_finite() {
        let build = |seed| {
            let mut s = ParamStore::new();
            let mut init = ParamInit::new(&mut s, seed);
            let l = init.lstm("l", 4, 4);
            init.twod_lstm("t", 4, 4);
            (s, l)
        };
        let (a, l) = build(9);
        let (b, _) = build(9);
        let (c, _) = build(10);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|(_, p)| p.tensor.data.iter().all(|x| x.is_finite())));
        let bias = &a.get(l.b).data;
        assert!(bias[4..8].iter().all(|&x| x == 1.0));
        assert!(bias[..4].iter().chain(&bias[8..]).all(|&x| x == 0.0));
        let bound = (6.0f64 / (16.0 + 8.0)).sqrt();
        assert!(a.get(l.w).data.iter().all(|x| x.abs() <= bound));
    }
}
