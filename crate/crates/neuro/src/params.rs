//! Named parameter tensors and matching gradient buffers.

use serde::{Deserialize, Serialize};

use crate::real::{add_into, Real};

/// Index of a tensor in a [`ParamStore`].
pub type Pid = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major 2-D tensors; vectors are `rows x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    pub shapes: Vec<Shape>,
    pub data: Vec<Vec<F>>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        ParamStore { shapes: Vec::new(), data: Vec::new() }
    }
}

impl<F: Real> ParamStore<F> {
    pub fn add(&mut self, name: &str, rows: usize, cols: usize) -> Pid {
        self.shapes.push(Shape { name: name.to_string(), rows, cols });
        self.data.push(vec![F::zero(); rows * cols]);
        self.shapes.len() - 1
    }

    pub fn row(&self, p: Pid, r: usize) -> &[F] {
        let c = self.shapes[p].cols;
        &self.data[p][r * c..(r + 1) * c]
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(Vec::len).sum()
    }

    pub fn find(&self, name: &str) -> Option<Pid> {
        self.shapes.iter().position(|s| s.name == name)
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            shapes: self.shapes.clone(),
            data: self.data.iter().map(|t| t.iter().map(|x| G::of(x.to_f64().unwrap())).collect()).collect(),
        }
    }

    pub fn zero_grads(&self) -> Grads<F> {
        Grads { data: self.data.iter().map(|t| vec![F::zero(); t.len()]).collect() }
    }
}

/// Gradient buffers shaped like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub data: Vec<Vec<F>>,
}

impl<F: Real> Grads<F> {
    pub fn add_assign(&mut self, other: &Grads<F>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            add_into(b, a);
        }
    }

    pub fn scale(&mut self, k: F) {
        for t in &mut self.data {
            for x in t {
                *x *= k;
            }
        }
    }

    pub fn norm(&self) -> F {
        self.data.iter().flatten().map(|x| *x * *x).sum::<F>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|x| x.is_finite())
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the
    /// norm before clipping.
    pub fn clip_norm(&mut self, max_norm: F) -> F {
        let n = self.norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
        n
    }
}
