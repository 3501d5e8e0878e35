use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Gate-stacked LSTM weights. `weight` is `[4H x (input_dim + H)]` with row
/// blocks in gate order input, forget, cell candidate, output; columns are
/// the input followed by the previous hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub const FORGET_BIAS_INIT: f64 = 1.0;

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            input_dim,
            hidden_dim,
            weight: vec![0.0; 4 * hidden_dim * (input_dim + hidden_dim)],
            bias: vec![0.0; 4 * hidden_dim],
        }
    }

    pub fn cols(&self) -> usize {
        self.input_dim + self.hidden_dim
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, forget bias `+1`.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        let bound = 1.0 / (p.cols() as f64).sqrt();
        for w in &mut p.weight {
            *w = rng.gen_range(-bound..=bound);
        }
        for b in &mut p.bias {
            *b = rng.gen_range(-bound..=bound);
        }
        for b in &mut p.bias[hidden_dim..2 * hidden_dim] {
            *b = FORGET_BIAS_INIT;
        }
        p
    }
}

/// One LSTM cell update:
/// `c' = f * c + i * g`, `h' = o * tanh(c')` with sigmoid gates `i, f, o`
/// and `tanh` candidate `g`.
pub fn lstm_step(state: &LstmState, input: &[f64], params: &LstmParams) -> Result<LstmState, NnError> {
    let hd = params.hidden_dim;
    if input.len() != params.input_dim || state.h.len() != hd || state.c.len() != hd {
        return Err(NnError::ShapeMismatch(format!(
            "lstm expects input {} / hidden {}, got input {} / h {} / c {}",
            params.input_dim,
            hd,
            input.len(),
            state.h.len(),
            state.c.len()
        )));
    }
    let cols = params.cols();
    let pre = |row: usize| -> f64 {
        let w = &params.weight[row * cols..(row + 1) * cols];
        let x: f64 = w[..params.input_dim].iter().zip(input).map(|(a, b)| a * b).sum();
        let h: f64 = w[params.input_dim..].iter().zip(&state.h).map(|(a, b)| a * b).sum();
        params.bias[row] + x + h
    };
    let mut next = LstmState::zeros(hd);
    for u in 0..hd {
        let i = sigmoid(pre(u));
        let f = sigmoid(pre(hd + u));
        let g = pre(2 * hd + u).tanh();
        let o = sigmoid(pre(3 * hd + u));
        let c = f * state.c[u] + i * g;
        next.c[u] = c;
        next.h[u] = o * c.tanh();
    }
    Ok(next)
}
