//! Preimages, the output density `f_Y`, and the posterior over branches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::model::{BranchKind, InputDensity, KRange, Part, PartId, PiecewiseMap};
use crate::numerics::tensor_quadrature_grid;

/// One preimage element of an output point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preimage {
    pub part: PartId,
    pub x: Vec<f64>,
    pub jac: f64,
    pub pdf: f64,
}

impl Preimage {
    /// Contribution `f_X(x) / |det J|` to `f_Y(y)`.
    pub fn weight(&self) -> f64 {
        self.pdf / self.jac
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreimageSet {
    pub elements: Vec<Preimage>,
    /// A family had members left unvisited when enumeration stopped.
    pub truncated: bool,
}

impl PreimageSet {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `f_Y(y)`.
    pub fn total_weight(&self) -> f64 {
        self.elements.iter().map(Preimage::weight).sum()
    }

    fn push_unique(&mut self, p: Preimage, tol: f64) -> bool {
        let scale = tol * inf_norm(&p.x).max(1.0);
        let dup = self
            .elements
            .iter()
            .any(|e| e.x.iter().zip(&p.x).all(|(a, b)| (a - b).abs() <= scale));
        if !dup {
            self.elements.push(p);
        }
        !dup
    }
}

/// How far to walk unbounded or long families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Enumeration {
    /// Up to `k_max` members per family; used for counting preimages.
    Complete,
    /// Stops early once the remaining family weight is negligible; used for `f_Y`.
    Density,
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// The candidate from member `id`, if it is a genuine preimage of `y`.
fn candidate(m: &PiecewiseMap, d: &InputDensity, id: PartId, y: &[f64], tol: f64) -> Result<Option<Preimage>> {
    let (b, k) = m.member(id);
    let x = match b.inverse(y, k) {
        Ok(Some(x)) => x,
        Ok(None) | Err(Error::Eval(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    if !x.iter().all(|v| v.is_finite()) || !b.contains(&x, k)? || !d.in_support(&x)? {
        return Ok(None);
    }
    let back = match b.forward(&x, k) {
        Ok(v) => v,
        Err(Error::Eval(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let err = back.iter().zip(y).fold(0.0f64, |acc, (a, c)| acc.max((a - c).abs()));
    if !(err <= tol * inf_norm(y).max(1.0)) {
        return Ok(None);
    }
    let jac = b.jac_abs_det(&x, k, None)?;
    let pdf = d.pdf_in_support(&x)?;
    Ok(Some(Preimage { part: id, x, jac, pdf }))
}

fn enumerate_into(
    m: &PiecewiseMap,
    d: &InputDensity,
    y: &[f64],
    mode: Enumeration,
    set: &mut PreimageSet,
) -> Result<()> {
    let limits = m.limits();
    for (i, part) in m.parts().iter().enumerate() {
        if part.kind() != BranchKind::Bijective {
            continue;
        }
        match part {
            Part::Branch(_) => {
                if let Some(p) = candidate(m, d, PartId::branch(i), y, limits.tol)? {
                    set.push_unique(p, limits.tol);
                }
            }
            Part::Family(f) => {
                let range = f.k_range();
                let lo = range.lo();
                let total = range.len();
                let budget = match total {
                    Some(n) => n.min(limits.k_max as u64),
                    None => limits.k_max as u64,
                };
                let mut sum = set.total_weight();
                let mut prev = 0.0f64;
                let mut visited = 0u64;
                let mut last_hit = false;
                for step in 0..budget {
                    let k = lo + step as i64;
                    visited += 1;
                    last_hit = false;
                    let Some(p) = candidate(m, d, PartId::member(i, k), y, limits.tol)? else {
                        prev = 0.0;
                        continue;
                    };
                    let w = p.weight();
                    last_hit = true;
                    if set.push_unique(p, limits.tol) {
                        sum += w;
                    }
                    if mode == Enumeration::Density && w > 0.0 && prev > 0.0 && w < limits.tail_tol * sum {
                        let r = w / prev;
                        if r < 1.0 && w * r / (1.0 - r) < limits.tail_tol * sum {
                            break;
                        }
                    }
                    prev = w;
                }
                let exhausted = matches!(range, KRange::Finite { .. }) && Some(visited) == total;
                if !exhausted {
                    // for counting, a miss on the last visited member means
                    // the family has most likely run out of preimages
                    set.truncated |= mode == Enumeration::Density || last_hit;
                }
            }
        }
    }
    Ok(())
}

/// All preimages of `y`, keeping candidates that lie in their member's region
/// and the support and map back to `y` within `tol`.
pub fn preimage(m: &PiecewiseMap, d: &InputDensity, y: &[f64], tol: f64) -> Result<PreimageSet> {
    let mut limits = m.limits();
    limits.tol = tol;
    let m = m.clone().with_limits(limits);
    let mut set = PreimageSet::default();
    enumerate_into(&m, d, y, Enumeration::Complete, &mut set)?;
    Ok(set)
}

/// Preimage set of `y` under the chosen enumeration mode.
pub fn preimages(m: &PiecewiseMap, d: &InputDensity, y: &[f64], mode: Enumeration) -> Result<PreimageSet> {
    let mut set = PreimageSet::default();
    enumerate_into(m, d, y, mode, &mut set)?;
    Ok(set)
}

/// Preimages of `g(x)` for a sampled `x` in member `own`, with `x` itself
/// always first in the set.
pub(crate) fn local_preimages(
    m: &PiecewiseMap,
    d: &InputDensity,
    x: &[f64],
    own: PartId,
    mode: Enumeration,
) -> Result<(Vec<f64>, PreimageSet)> {
    let (b, k) = m.member(own);
    let y = b.forward(x, k)?;
    let pdf = d.pdf_in_support(x)?;
    if !(pdf > 0.0) {
        return Err(Error::ZeroInputDensity { x: x.to_vec() });
    }
    let jac = b.jac_abs_det(x, k, None)?;
    let mut set = PreimageSet {
        elements: vec![Preimage {
            part: own,
            x: x.to_vec(),
            jac,
            pdf,
        }],
        truncated: false,
    };
    enumerate_into(m, d, &y, mode, &mut set)?;
    Ok((y, set))
}

/// `f_Y(y)` by the change-of-variables sum over preimages.
pub fn output_density(m: &PiecewiseMap, d: &InputDensity, y: &[f64]) -> Result<f64> {
    Ok(preimages(m, d, y, Enumeration::Density)?.total_weight())
}

/// Integral of `f_Y` over `bbox` with `nodes[d]` midpoint nodes on axis `d`.
///
/// Each axis is first stretched by `y = lo + (hi - lo) (3t^2 - 2t^3)`, whose
/// derivative vanishes at both ends. That cancels inverse-square-root
/// blow-ups at the box faces and makes jumps there harmless. Unequal node
/// counts keep diagonal edges of `f_Y` off the midpoints.
pub fn output_mass(m: &PiecewiseMap, d: &InputDensity, bbox: &BoundingBox, nodes: &[usize]) -> Result<f64> {
    if !bbox.is_bounded() {
        return Err(Error::UnboundedSupport);
    }
    let dim = bbox.dim();
    let unit = BoundingBox::new(vec![0.0; dim], vec![1.0; dim])?;
    tensor_quadrature_grid(
        &unit,
        |t| {
            let mut y = [0.0; crate::MAX_DIM];
            let mut dy = 1.0;
            for (i, &ti) in t.iter().enumerate() {
                let w = bbox.hi[i] - bbox.lo[i];
                y[i] = bbox.lo[i] + w * ti * ti * (3.0 - 2.0 * ti);
                dy *= 6.0 * w * ti * (1.0 - ti);
            }
            Ok(output_density(m, d, &y[..dim])? * dy)
        },
        nodes,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPosterior {
    pub probs: Vec<(PartId, f64)>,
}

impl BranchPosterior {
    pub fn from_set(set: &PreimageSet, y: &[f64]) -> Result<Self> {
        let total = set.total_weight();
        if !(total > 0.0) {
            return Err(Error::ZeroDensity { y: y.to_vec() });
        }
        Ok(Self {
            probs: set.elements.iter().map(|e| (e.part, e.weight() / total)).collect(),
        })
    }

    /// Shannon entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        entropy_bits(self.probs.iter().map(|(_, p)| *p))
    }
}

/// `-sum p log2 p`, skipping zeros.
pub fn entropy_bits(ps: impl IntoIterator<Item = f64>) -> f64 {
    ps.into_iter()
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

/// `P(W = part | Y = y)` for every preimage element.
pub fn branch_posterior(m: &PiecewiseMap, d: &InputDensity, y: &[f64]) -> Result<BranchPosterior> {
    BranchPosterior::from_set(&preimages(m, d, y, Enumeration::Density)?, y)
}
