use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

const BLOCK: usize = 4096;

/// Tensor-product midpoint rule over a 1-D or 2-D box.
///
/// Cells are visited in row-major blocks whose partial sums are combined in
/// block order, so the value is independent of thread scheduling. The
/// integrand is never evaluated on the box boundary.
pub fn tensor_quadrature<F>(bbox: &BoundingBox, f: F, nodes_per_dim: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    tensor_quadrature_grid(bbox, f, &vec![nodes_per_dim; bbox.dim()])
}

/// Midpoint rule with its own node count on each axis.
pub fn tensor_quadrature_grid<F>(bbox: &BoundingBox, f: F, nodes: &[usize]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let dim = bbox.dim();
    if dim > 2 {
        return Err(Error::DimensionTooHigh(dim));
    }
    if !bbox.is_bounded() {
        return Err(Error::UnboundedSupport);
    }
    if nodes.len() != dim || nodes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "need one positive node count per axis, got {nodes:?}"
        )));
    }
    let steps: Vec<f64> = (0..dim)
        .map(|d| (bbox.hi[d] - bbox.lo[d]) / nodes[d] as f64)
        .collect();
    let cell: f64 = steps.iter().product();
    let total: usize = nodes.iter().product();
    let blocks = total.div_ceil(BLOCK);
    let partial: Vec<Result<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut x = vec![0.0; dim];
            let mut sum = 0.0;
            let mut comp = 0.0;
            for idx in b * BLOCK..((b + 1) * BLOCK).min(total) {
                let mut rem = idx;
                for d in (0..dim).rev() {
                    let i = rem % nodes[d];
                    rem /= nodes[d];
                    x[d] = bbox.lo[d] + (i as f64 + 0.5) * steps[d];
                }
                // Kahan summation
                let v = f(&x)? - comp;
                let t = sum + v;
                comp = (t - sum) - v;
                sum = t;
            }
            Ok(sum)
        })
        .collect();
    let mut sum = 0.0;
    for p in partial {
        sum += p?;
    }
    Ok(sum * cell)
}
