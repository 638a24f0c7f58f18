//! Fixed-size value buffer matching [`crate::expr::VarLayout::model`].

/// Largest supported input dimension.
pub const MAX_DIM: usize = 8;

const CAP: usize = 2 * MAX_DIM + 1;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Slots {
    values: [f64; CAP],
    dim: usize,
}

impl Slots {
    pub fn new(dim: usize) -> Self {
        debug_assert!(dim <= MAX_DIM);
        Self {
            values: [0.0; CAP],
            dim,
        }
    }

    pub fn from_x(x: &[f64], k: f64) -> Self {
        let mut s = Self::new(x.len());
        s.set_x(x);
        s.set_k(k);
        s
    }

    pub fn from_y(y: &[f64], k: f64) -> Self {
        let mut s = Self::new(y.len());
        s.set_y(y);
        s.set_k(k);
        s
    }

    pub fn set_x(&mut self, x: &[f64]) {
        self.values[..self.dim].copy_from_slice(x);
    }

    pub fn set_y(&mut self, y: &[f64]) {
        self.values[self.dim..2 * self.dim].copy_from_slice(y);
    }

    pub fn set_k(&mut self, k: f64) {
        self.values[2 * self.dim] = k;
    }

    pub fn x_mut(&mut self) -> &mut [f64] {
        &mut self.values[..self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..2 * self.dim + 1]
    }
}
