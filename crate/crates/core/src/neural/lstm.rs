//! Single-layer LSTM cell with truncated backpropagation through time.

use super::glorot;
use crate::error::{Error, Result};
use crate::num::Scalar;
use rand::Rng;

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Gated recurrent cell. Each gate owns a `hidden x (input + hidden)` weight
/// matrix over the concatenated `[x_t, h_{t-1}]` plus a bias.
#[derive(Debug, Clone)]
pub struct LstmCell<T: Scalar> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_input: Vec<T>,
    pub w_forget: Vec<T>,
    pub w_output: Vec<T>,
    pub w_cell: Vec<T>,
    pub b_input: Vec<T>,
    pub b_forget: Vec<T>,
    pub b_output: Vec<T>,
    pub b_cell: Vec<T>,
}

/// Per-timestep activations cached by the forward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace<T: Scalar> {
    pub inputs: Vec<Vec<T>>,
    pub gate_input: Vec<Vec<T>>,
    pub gate_forget: Vec<Vec<T>>,
    pub gate_output: Vec<Vec<T>>,
    pub gate_cell: Vec<Vec<T>>,
    pub cells: Vec<Vec<T>>,
    pub hiddens: Vec<Vec<T>>,
}

/// Parameter gradients in the same layout as [`LstmCell`].
#[derive(Debug, Clone)]
pub struct LstmGrads<T: Scalar> {
    pub w_input: Vec<T>,
    pub w_forget: Vec<T>,
    pub w_output: Vec<T>,
    pub w_cell: Vec<T>,
    pub b_input: Vec<T>,
    pub b_forget: Vec<T>,
    pub b_output: Vec<T>,
    pub b_cell: Vec<T>,
}

impl<T: Scalar> LstmCell<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let n = hidden_dim * (input_dim + hidden_dim);
        Self {
            input_dim,
            hidden_dim,
            w_input: vec![T::zero(); n],
            w_forget: vec![T::zero(); n],
            w_output: vec![T::zero(); n],
            w_cell: vec![T::zero(); n],
            b_input: vec![T::zero(); hidden_dim],
            b_forget: vec![T::zero(); hidden_dim],
            b_output: vec![T::zero(); hidden_dim],
            b_cell: vec![T::zero(); hidden_dim],
        }
    }

    /// Glorot-uniform gate weights; forget bias starts at 1.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let concat = input_dim + hidden_dim;
        let mut cell = Self::zeros(input_dim, hidden_dim);
        for w in [
            &mut cell.w_input,
            &mut cell.w_forget,
            &mut cell.w_output,
            &mut cell.w_cell,
        ] {
            for v in w.iter_mut() {
                *v = glorot(concat, hidden_dim, rng);
            }
        }
        for b in cell.b_forget.iter_mut() {
            *b = T::one();
        }
        cell
    }

    fn gate_preact(&self, w: &[T], b: &[T], concat: &[T]) -> Vec<T> {
        let c = self.input_dim + self.hidden_dim;
        let mut out = b.to_vec();
        for (h, out_v) in out.iter_mut().enumerate() {
            let row = &w[h * c..(h + 1) * c];
            let mut acc = T::zero();
            for (wv, xv) in row.iter().zip(concat) {
                acc += *wv * *xv;
            }
            *out_v += acc;
        }
        out
    }

    /// Run the cell over a sequence from zero initial state.
    pub fn forward_seq(&self, inputs: &[Vec<T>]) -> Result<LstmTrace<T>> {
        if inputs.is_empty() {
            return Err(Error::Domain("empty input sequence".into()));
        }
        let steps = inputs.len();
        let h_dim = self.hidden_dim;
        let mut trace = LstmTrace {
            inputs: inputs.to_vec(),
            gate_input: Vec::with_capacity(steps),
            gate_forget: Vec::with_capacity(steps),
            gate_output: Vec::with_capacity(steps),
            gate_cell: Vec::with_capacity(steps),
            cells: Vec::with_capacity(steps),
            hiddens: Vec::with_capacity(steps),
        };
        let mut h_prev = vec![T::zero(); h_dim];
        let mut c_prev = vec![T::zero(); h_dim];
        for x in inputs {
            if x.len() != self.input_dim {
                return Err(Error::Shape("lstm input width mismatch".into()));
            }
            let mut concat = x.clone();
            concat.extend_from_slice(&h_prev);

            let i: Vec<T> = self.gate_preact(&self.w_input, &self.b_input, &concat)
                .into_iter().map(sigmoid).collect();
            let f: Vec<T> = self.gate_preact(&self.w_forget, &self.b_forget, &concat)
                .into_iter().map(sigmoid).collect();
            let o: Vec<T> = self.gate_preact(&self.w_output, &self.b_output, &concat)
                .into_iter().map(sigmoid).collect();
            let g: Vec<T> = self.gate_preact(&self.w_cell, &self.b_cell, &concat)
                .into_iter().map(|v| v.tanh()).collect();

            let c: Vec<T> = (0..h_dim).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
            let h: Vec<T> = (0..h_dim).map(|j| o[j] * c[j].tanh()).collect();

            trace.gate_input.push(i);
            trace.gate_forget.push(f);
            trace.gate_output.push(o);
            trace.gate_cell.push(g);
            trace.cells.push(c.clone());
            trace.hiddens.push(h.clone());
            h_prev = h;
            c_prev = c;
        }
        Ok(trace)
    }

    /// Final hidden state for a sequence.
    pub fn final_hidden(&self, inputs: &[Vec<T>]) -> Result<Vec<T>> {
        Ok(self.forward_seq(inputs)?.hiddens.last().unwrap().clone())
    }

    /// BPTT over the traced window. `d_hiddens[t]` is the upstream gradient
    /// on h_t (zero vectors where no loss attaches).
    pub fn backward(&self, trace: &LstmTrace<T>, d_hiddens: &[Vec<T>]) -> Result<LstmGrads<T>> {
        let steps = trace.inputs.len();
        if d_hiddens.len() != steps {
            return Err(Error::Shape("one upstream hidden gradient per step required".into()));
        }
        let h_dim = self.hidden_dim;
        let c_dim = self.input_dim + h_dim;
        let mut grads = LstmGrads::zeros(self.input_dim, h_dim);
        let mut dh_next = vec![T::zero(); h_dim];
        let mut dc_next = vec![T::zero(); h_dim];

        for t in (0..steps).rev() {
            let i = &trace.gate_input[t];
            let f = &trace.gate_forget[t];
            let o = &trace.gate_output[t];
            let g = &trace.gate_cell[t];
            let c = &trace.cells[t];
            let c_prev: Vec<T> = if t == 0 {
                vec![T::zero(); h_dim]
            } else {
                trace.cells[t - 1].clone()
            };
            let h_prev: Vec<T> = if t == 0 {
                vec![T::zero(); h_dim]
            } else {
                trace.hiddens[t - 1].clone()
            };
            let mut concat = trace.inputs[t].clone();
            concat.extend_from_slice(&h_prev);

            let mut dz_i = vec![T::zero(); h_dim];
            let mut dz_f = vec![T::zero(); h_dim];
            let mut dz_o = vec![T::zero(); h_dim];
            let mut dz_g = vec![T::zero(); h_dim];
            let mut dc = dc_next.clone();
            for j in 0..h_dim {
                let dh = d_hiddens[t][j] + dh_next[j];
                let tc = c[j].tanh();
                let d_o = dh * tc;
                dc[j] += dh * o[j] * (T::one() - tc * tc);
                let d_i = dc[j] * g[j];
                let d_g = dc[j] * i[j];
                let d_f = dc[j] * c_prev[j];
                dz_i[j] = d_i * i[j] * (T::one() - i[j]);
                dz_f[j] = d_f * f[j] * (T::one() - f[j]);
                dz_o[j] = d_o * o[j] * (T::one() - o[j]);
                dz_g[j] = d_g * (T::one() - g[j] * g[j]);
            }

            let mut d_concat = vec![T::zero(); c_dim];
            for (w, gw, dz) in [
                (&self.w_input, &mut grads.w_input, &dz_i),
                (&self.w_forget, &mut grads.w_forget, &dz_f),
                (&self.w_output, &mut grads.w_output, &dz_o),
                (&self.w_cell, &mut grads.w_cell, &dz_g),
            ] {
                for j in 0..h_dim {
                    let row = &w[j * c_dim..(j + 1) * c_dim];
                    let grow = &mut gw[j * c_dim..(j + 1) * c_dim];
                    let d = dz[j];
                    for m in 0..c_dim {
                        grow[m] += d * concat[m];
                        d_concat[m] += d * row[m];
                    }
                }
            }
            for j in 0..h_dim {
                grads.b_input[j] += dz_i[j];
                grads.b_forget[j] += dz_f[j];
                grads.b_output[j] += dz_o[j];
                grads.b_cell[j] += dz_g[j];
            }

            dh_next = d_concat[self.input_dim..].to_vec();
            for j in 0..h_dim {
                dc_next[j] = dc[j] * f[j];
            }
        }
        Ok(grads)
    }

    pub fn param_count(&self) -> usize {
        4 * (self.w_input.len() + self.b_input.len())
    }

    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for w in [&self.w_input, &self.w_forget, &self.w_output, &self.w_cell] {
            out.extend_from_slice(w);
        }
        for b in [&self.b_input, &self.b_forget, &self.b_output, &self.b_cell] {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params_flat(&mut self, src: &[T]) {
        let mut off = 0;
        for w in [
            &mut self.w_input,
            &mut self.w_forget,
            &mut self.w_output,
            &mut self.w_cell,
        ] {
            let n = w.len();
            w.copy_from_slice(&src[off..off + n]);
            off += n;
        }
        for b in [
            &mut self.b_input,
            &mut self.b_forget,
            &mut self.b_output,
            &mut self.b_cell,
        ] {
            let n = b.len();
            b.copy_from_slice(&src[off..off + n]);
            off += n;
        }
        debug_assert_eq!(off, src.len());
    }
}

impl<T: Scalar> LstmGrads<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let n = hidden_dim * (input_dim + hidden_dim);
        Self {
            w_input: vec![T::zero(); n],
            w_forget: vec![T::zero(); n],
            w_output: vec![T::zero(); n],
            w_cell: vec![T::zero(); n],
            b_input: vec![T::zero(); hidden_dim],
            b_forget: vec![T::zero(); hidden_dim],
            b_output: vec![T::zero(); hidden_dim],
            b_cell: vec![T::zero(); hidden_dim],
        }
    }

    pub fn accumulate(&mut self, other: &LstmGrads<T>) {
        for (a, b) in [
            (&mut self.w_input, &other.w_input),
            (&mut self.w_forget, &other.w_forget),
            (&mut self.w_output, &other.w_output),
            (&mut self.w_cell, &other.w_cell),
            (&mut self.b_input, &other.b_input),
            (&mut self.b_forget, &other.b_forget),
            (&mut self.b_output, &other.b_output),
            (&mut self.b_cell, &other.b_cell),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for w in [&self.w_input, &self.w_forget, &self.w_output, &self.w_cell] {
            out.extend_from_slice(w);
        }
        for b in [&self.b_input, &self.b_forget, &self.b_output, &self.b_cell] {
            out.extend_from_slice(b);
        }
        out
    }
}
