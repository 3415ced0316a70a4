//! Small dense-vector helpers shared by the learned models. Embedding
//! matrices store one row per vocabulary token.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1, Zip};
use rand::Rng;

use crate::features::BagOfWords;

pub fn uniform_init<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..=scale))
}

/// Sum of the rows selected by a bag, weighted by counts.
pub fn embed(m: &Array2<f64>, bag: &BagOfWords) -> Array1<f64> {
    let mut out = Array1::zeros(m.ncols());
    add_bag(&mut out.view_mut(), m, bag, 1.0);
    out
}

pub fn add_bag(out: &mut ArrayViewMut1<f64>, m: &Array2<f64>, bag: &BagOfWords, scale: f64) {
    for (id, c) in bag.iter() {
        out.scaled_add(scale * c as f64, &m.row(id as usize));
    }
}

pub fn dot(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y)
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Rows of `m` embedded for every bag, as a `bags.len() × d` matrix.
pub fn embed_all(m: &Array2<f64>, bags: &[BagOfWords]) -> Array2<f64> {
    let mut out = Array2::zeros((bags.len(), m.ncols()));
    for (j, bag) in bags.iter().enumerate() {
        add_bag(&mut out.row_mut(j), m, bag, 1.0);
    }
    out
}

pub fn all_finite(m: &Array2<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Gradient over rows of several embedding matrices, keyed by
/// (matrix, row). Rows touched more than once are merged.
#[derive(Debug, Clone, Default)]
pub struct SparseGrad {
    rows: BTreeMap<(usize, u32), Array1<f64>>,
}

impl SparseGrad {
    /// `rows(bag) += scale * count * v` in matrix `mat`.
    pub fn add_bag(&mut self, mat: usize, bag: &BagOfWords, v: &ArrayView1<f64>, scale: f64) {
        for (id, c) in bag.iter() {
            self.rows
                .entry((mat, id))
                .or_insert_with(|| Array1::zeros(v.len()))
                .scaled_add(scale * c as f64, v);
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.rows.values().map(|r| r.dot(r)).sum()
    }

    /// `mats[mat].row(id) += scale * g` for every stored row.
    pub fn apply(&self, mats: &mut [&mut Array2<f64>], scale: f64) {
        for (&(mat, id), g) in &self.rows {
            mats[mat].row_mut(id as usize).scaled_add(scale, g);
        }
    }
}

/// Step multiplier that caps the gradient norm at `max_norm`.
pub fn clip_factor(norm_sq: f64, max_norm: Option<f64>) -> f64 {
    match max_norm {
        Some(c) if norm_sq > c * c => c / norm_sq.sqrt(),
        _ => 1.0,
    }
}
