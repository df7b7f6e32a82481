//! Recurrent cells run over a whole sequence in one direction.
//!
//! Pre-activations are `x·W + h·U + b` with gate blocks laid out side by side
//! in the columns of `W` (`[in, G·u]`) and `U` (`[u, G·u]`).
//!
//! * RNN: `h = tanh(a)`.
//! * LSTM, blocks `[i | f | g | o]`: `c = σ(f)·c' + σ(i)·tanh(g)`,
//!   `h = σ(o)·tanh(c)`.
//! * GRU, blocks `[z | r | n]`: `n = tanh(x·Wn + (σ(r)·h')·Un + bn)`,
//!   `h = (1 - σ(z))·n + σ(z)·h'`.

use serde::{Deserialize, Serialize};

use super::tensor::{mat_vec_t, outer_add, sigmoid, vec_mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

/// Borrowed weights of one direction.
#[derive(Debug, Clone, Copy)]
pub struct CellWeights<'a> {
    pub kind: CellKind,
    pub n_in: usize,
    pub units: usize,
    pub w: &'a [f64],
    pub u: &'a [f64],
    pub b: &'a [f64],
}

/// Gradient buffers of one direction, same layout as `CellWeights`.
pub struct CellGrads<'a> {
    pub w: &'a mut [f64],
    pub u: &'a mut [f64],
    pub b: &'a mut [f64],
}

/// Activations of one direction, stored in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct DirCache {
    /// `T × u` hidden states.
    pub h: Vec<f64>,
    /// `T × G·u` post-activation gate values.
    pub gates: Vec<f64>,
    /// `T × u` LSTM cell states; empty for other cells.
    pub c: Vec<f64>,
}

fn order(steps: usize, reverse: bool) -> Vec<usize> {
    if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    }
}

/// Runs the cell over `xs` (`T × n_in`), right to left when `reverse`.
pub fn run(cw: &CellWeights, xs: &[f64], steps: usize, reverse: bool) -> DirCache {
    let (u, n_in) = (cw.units, cw.n_in);
    let gu = cw.kind.gates() * u;
    let mut h = vec![0.0; steps * u];
    let mut gates = vec![0.0; steps * gu];
    let mut c = if cw.kind == CellKind::Lstm { vec![0.0; steps * u] } else { Vec::new() };
    let mut hp = vec![0.0; u];
    let mut cp = vec![0.0; u];
    let mut a = vec![0.0; gu];
    for t in order(steps, reverse) {
        let x = &xs[t * n_in..(t + 1) * n_in];
        a.copy_from_slice(cw.b);
        vec_mat(&mut a, x, cw.w, gu, 0);
        let g = &mut gates[t * gu..(t + 1) * gu];
        let ht = &mut h[t * u..(t + 1) * u];
        match cw.kind {
            CellKind::Rnn => {
                vec_mat(&mut a, &hp, cw.u, gu, 0);
                for j in 0..u {
                    ht[j] = a[j].tanh();
                    g[j] = ht[j];
                }
            }
            CellKind::Lstm => {
                vec_mat(&mut a, &hp, cw.u, gu, 0);
                let ct = &mut c[t * u..(t + 1) * u];
                for j in 0..u {
                    let i = sigmoid(a[j]);
                    let f = sigmoid(a[u + j]);
                    let gg = a[2 * u + j].tanh();
                    let o = sigmoid(a[3 * u + j]);
                    ct[j] = f * cp[j] + i * gg;
                    ht[j] = o * ct[j].tanh();
                    g[j] = i;
                    g[u + j] = f;
                    g[2 * u + j] = gg;
                    g[3 * u + j] = o;
                }
                cp.copy_from_slice(ct);
            }
            CellKind::Gru => {
                vec_mat(&mut a[..2 * u], &hp, cw.u, gu, 0);
                for j in 0..2 * u {
                    g[j] = sigmoid(a[j]);
                }
                let hr: Vec<f64> = (0..u).map(|j| g[u + j] * hp[j]).collect();
                vec_mat(&mut a[2 * u..], &hr, cw.u, gu, 2 * u);
                for j in 0..u {
                    let n = a[2 * u + j].tanh();
                    g[2 * u + j] = n;
                    let z = g[j];
                    ht[j] = (1.0 - z) * n + z * hp[j];
                }
            }
        }
        hp.copy_from_slice(ht);
    }
    DirCache { h, gates, c }
}

/// Backpropagates `dh` (`T × u`, gradient of the loss with respect to each
/// emitted hidden state) through one direction. Adds into `grads` and `dx`.
pub fn backward(
    cw: &CellWeights,
    xs: &[f64],
    steps: usize,
    reverse: bool,
    cache: &DirCache,
    dh: &[f64],
    grads: &mut CellGrads,
    dx: &mut [f64],
) {
    let (u, n_in) = (cw.units, cw.n_in);
    let gu = cw.kind.gates() * u;
    let ord = order(steps, reverse);
    let zeros = vec![0.0; u];
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut da = vec![0.0; gu];
    for k in (0..steps).rev() {
        let t = ord[k];
        let prev = (k > 0).then(|| ord[k - 1]);
        let hp = prev.map_or(&zeros[..], |p| &cache.h[p * u..(p + 1) * u]);
        let x = &xs[t * n_in..(t + 1) * n_in];
        let g = &cache.gates[t * gu..(t + 1) * gu];
        let dht: Vec<f64> = (0..u).map(|j| dh[t * u + j] + dh_next[j]).collect();
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        match cw.kind {
            CellKind::Rnn => {
                for j in 0..u {
                    da[j] = dht[j] * (1.0 - g[j] * g[j]);
                }
                outer_add(grads.u, hp, &da, gu, 0);
                mat_vec_t(&mut dh_next, &da, cw.u, gu, 0);
            }
            CellKind::Lstm => {
                let cp = prev.map_or(&zeros[..], |p| &cache.c[p * u..(p + 1) * u]);
                let ct = &cache.c[t * u..(t + 1) * u];
                for j in 0..u {
                    let (i, f, gg, o) = (g[j], g[u + j], g[2 * u + j], g[3 * u + j]);
                    let tc = ct[j].tanh();
                    let dc = dc_next[j] + dht[j] * o * (1.0 - tc * tc);
                    da[j] = dc * gg * i * (1.0 - i);
                    da[u + j] = dc * cp[j] * f * (1.0 - f);
                    da[2 * u + j] = dc * i * (1.0 - gg * gg);
                    da[3 * u + j] = dht[j] * tc * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                outer_add(grads.u, hp, &da, gu, 0);
                mat_vec_t(&mut dh_next, &da, cw.u, gu, 0);
            }
            CellKind::Gru => {
                let mut dhr = vec![0.0; u];
                for j in 0..u {
                    let (z, n) = (g[j], g[2 * u + j]);
                    da[2 * u + j] = dht[j] * (1.0 - z) * (1.0 - n * n);
                    da[j] = dht[j] * (hp[j] - n) * z * (1.0 - z);
                    dh_next[j] = dht[j] * z;
                }
                let hr: Vec<f64> = (0..u).map(|j| g[u + j] * hp[j]).collect();
                outer_add(grads.u, &hr, &da[2 * u..], gu, 2 * u);
                mat_vec_t(&mut dhr, &da[2 * u..], cw.u, gu, 2 * u);
                for j in 0..u {
                    let r = g[u + j];
                    da[u + j] = dhr[j] * hp[j] * r * (1.0 - r);
                    dh_next[j] += dhr[j] * r;
                }
                outer_add(grads.u, hp, &da[..2 * u], gu, 0);
                mat_vec_t(&mut dh_next, &da[..2 * u], cw.u, gu, 0);
            }
        }
        outer_add(grads.w, x, &da, gu, 0);
        for (b, d) in grads.b.iter_mut().zip(&da) {
            *b += d;
        }
        mat_vec_t(&mut dx[t * n_in..(t + 1) * n_in], &da, cw.w, gu, 0);
    }
}
