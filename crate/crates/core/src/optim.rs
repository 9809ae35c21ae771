//! Row-sparse Adam.

use std::collections::HashMap;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Gradient rows accumulated over a batch, in first-touch order.
#[derive(Debug, Clone, Default)]
pub struct SparseGrad {
    dim: usize,
    slot: HashMap<u32, usize>,
    rows: Vec<u32>,
    data: Vec<f64>,
}

impl SparseGrad {
    pub fn new(dim: usize) -> Self {
        SparseGrad { dim, ..Default::default() }
    }

    pub fn clear(&mut self) {
        self.slot.clear();
        self.rows.clear();
        self.data.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    /// Mutable accumulator for `row`, zero-initialized on first touch.
    pub fn row_mut(&mut self, row: u32) -> &mut [f64] {
        let d = self.dim;
        let k = *self.slot.entry(row).or_insert_with(|| {
            self.rows.push(row);
            self.data.resize(self.data.len() + d, 0.0);
            self.rows.len() - 1
        });
        &mut self.data[k * d..(k + 1) * d]
    }

    pub fn add(&mut self, row: u32, grad: &[f64], scale: f64) {
        for (acc, g) in self.row_mut(row).iter_mut().zip(grad) {
            *acc += scale * g;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.rows.iter().copied().zip(self.data.chunks_exact(self.dim.max(1)))
    }
}

/// Adam moments for one row-major parameter matrix.
#[derive(Debug, Clone)]
pub struct SparseAdam {
    dim: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl SparseAdam {
    pub fn new(rows: usize, dim: usize) -> Self {
        SparseAdam {
            dim,
            m: vec![0.0; rows * dim],
            v: vec![0.0; rows * dim],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam step over the touched rows only; untouched moments stay put.
    pub fn update(&mut self, params: &mut [f64], grads: &SparseGrad, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let d = self.dim;
        for (row, g) in grads.iter() {
            let s = row as usize * d;
            let (p, m, v) = (&mut params[s..s + d], &mut self.m[s..s + d], &mut self.v[s..s + d]);
            for k in 0..d {
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }
}
