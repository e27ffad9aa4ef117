//! SGNS arithmetic shared by training and by the gradient checks.
//!
//! For a centre vector `u`, a positive context vector `v⁺` and negatives `v⁻ₖ`
//! the per-pair loss is
//!
//! ```text
//! L = -log σ(u·v⁺) - Σₖ log σ(-u·v⁻ₖ)
//! ```
//!
//! and every partial derivative is a multiple of `coefficient(label, u·v)`
//! (`label - σ(u·v)`), which is also what the SGD update uses.

use std::sync::atomic::{AtomicU64, Ordering};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)` without overflow for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Negative gradient of the pair loss with respect to the score `u·v`.
pub fn coefficient(label: f64, score: f64) -> f64 {
    label - sigmoid(score)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn pair_loss(u: &[f64], pos: &[f64], negs: &[&[f64]]) -> f64 {
    -log_sigmoid(dot(u, pos)) - negs.iter().map(|v| log_sigmoid(-dot(u, v))).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub center: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Analytic gradient of [`pair_loss`].
pub fn pair_gradient(u: &[f64], pos: &[f64], negs: &[&[f64]]) -> PairGradient {
    let d = u.len();
    let mut center = vec![0.0; d];
    let c = coefficient(1.0, dot(u, pos));
    for i in 0..d {
        center[i] -= c * pos[i];
    }
    let positive = u.iter().map(|x| -c * x).collect();
    let mut negatives = Vec::with_capacity(negs.len());
    for v in negs {
        let c = coefficient(0.0, dot(u, v));
        for i in 0..d {
            center[i] -= c * v[i];
        }
        negatives.push(u.iter().map(|x| -c * x).collect());
    }
    PairGradient {
        center,
        positive,
        negatives,
    }
}

/// Row-major matrix of f64 stored as atomic bit patterns.
///
/// Single-threaded use is fully deterministic. Concurrent use gives the usual
/// lock-free SGD behavior: relaxed loads and stores, lost updates tolerated.
pub struct AtomicMatrix {
    dim: usize,
    data: Vec<AtomicU64>,
}

impl AtomicMatrix {
    pub fn from_vec(dim: usize, values: &[f64]) -> Self {
        AtomicMatrix {
            dim,
            data: values.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
            .into_iter()
            .map(|a| f64::from_bits(a.into_inner()))
            .collect()
    }

    pub fn read_row(&self, row: usize, out: &mut [f64]) {
        let base = row * self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            *o = f64::from_bits(self.data[base + i].load(Ordering::Relaxed));
        }
    }

    /// `row += scale * delta`
    pub fn add_scaled(&self, row: usize, scale: f64, delta: &[f64]) {
        let base = row * self.dim;
        for (i, d) in delta.iter().enumerate() {
            let cell = &self.data[base + i];
            let v = f64::from_bits(cell.load(Ordering::Relaxed)) + scale * d;
            cell.store(v.to_bits(), Ordering::Relaxed);
        }
    }
}

/// Scratch buffers for one training thread.
pub struct Scratch {
    u: Vec<f64>,
    v: Vec<f64>,
    grad_u: Vec<f64>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Scratch {
            u: vec![0.0; dim],
            v: vec![0.0; dim],
            grad_u: vec![0.0; dim],
        }
    }
}

/// One SGD step on a (center, context, negatives) triple.
///
/// Output rows for which `may_update(row)` is false are read but never written.
pub fn sgd_step<F>(
    input: &AtomicMatrix,
    output: &AtomicMatrix,
    center: usize,
    context: usize,
    negatives: &[usize],
    lr: f64,
    may_update: F,
    s: &mut Scratch,
) where
    F: Fn(usize) -> bool,
{
    input.read_row(center, &mut s.u);
    s.grad_u.iter_mut().for_each(|g| *g = 0.0);
    let targets = std::iter::once((context, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (target, label) in targets {
        output.read_row(target, &mut s.v);
        let g = coefficient(label, dot(&s.u, &s.v)) * lr;
        for (acc, v) in s.grad_u.iter_mut().zip(&s.v) {
            *acc += g * v;
        }
        if may_update(target) {
            output.add_scaled(target, g, &s.u);
        }
    }
    input.add_scaled(center, 1.0, &s.grad_u);
}
