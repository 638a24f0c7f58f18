//! Predicate-defined regions with axis-aligned bounding boxes.

use crate::error::{Error, Result};
use crate::expr::{parse, CompiledExpr, Expr, VarLayout};
use crate::numerics::CounterRng;
use crate::slots::Slots;

/// Axis-aligned box. Bounds may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::model(format!(
                "box bounds have mismatched or empty dimensions ({} vs {})",
                lo.len(),
                hi.len()
            )));
        }
        for (d, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() || l >= h {
                return Err(Error::model(format!(
                    "box axis {} needs lo < hi, got [{l}, {h}]",
                    d + 1
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The whole space.
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// Box grown by `frac` of its side length on every face.
    pub fn expanded(&self, frac: f64) -> Self {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| {
                let pad = (h - l) * frac;
                (l - pad, h + pad)
            })
            .unzip();
        Self { lo, hi }
    }

    /// Box grown by a small, different fraction per axis. Midpoint grids on
    /// it do not line up with diagonals or edges through the original box.
    pub fn offset_for_grid(&self) -> Self {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .enumerate()
            .map(|(d, (l, h))| {
                let frac = 0.013_7 * (1.0 + 0.618_034 * d as f64);
                let w = h - l;
                (l - w * frac, h + w * frac * 0.7)
            })
            .unzip();
        Self { lo, hi }
    }

    /// Uniform point from the generator's next `dim` draws.
    pub fn draw(&self, rng: &mut CounterRng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l + rng.uniform() * (h - l))
            .collect()
    }

    /// `n` i.i.d. uniform points; point `j` uses counter stream `j` of `seed`.
    pub fn sample_uniform(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if !self.is_bounded() {
            return Err(Error::UnboundedSupport);
        }
        Ok((0..n as u64)
            .map(|j| self.draw(&mut CounterRng::new(seed, j)))
            .collect())
    }
}

/// Set `{x : predicate(x) != 0}` enclosed by `bbox`.
#[derive(Clone, Debug)]
pub struct Region {
    predicate: CompiledExpr,
    bbox: BoundingBox,
}

impl Region {
    /// Compiles `predicate` over the model layout (`x1..xN`, `y1..yN`, `k`).
    pub fn new(predicate: &Expr, bbox: BoundingBox) -> Result<Self> {
        let layout = VarLayout::model(bbox.dim());
        Ok(Self {
            predicate: CompiledExpr::new(predicate, &layout)?,
            bbox,
        })
    }

    pub fn parse(predicate: &str, bbox: BoundingBox) -> Result<Self> {
        Self::new(&parse(predicate)?, bbox)
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn predicate(&self) -> &Expr {
        self.predicate.source()
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.contains_k(x, 0.0)
    }

    /// Membership with the family index `k` bound.
    pub fn contains_k(&self, x: &[f64], k: f64) -> Result<bool> {
        let slots = Slots::from_x(x, k);
        Ok(self.predicate.holds(slots.as_slice())?)
    }
}
