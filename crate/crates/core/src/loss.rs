//! Estimators of the information loss `H(X|Y)` in bits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classify::{classify, Classification, Verdict};
use crate::error::{Error, Result};
use crate::model::{BranchKind, InputDensity, PartId, PiecewiseMap};
use crate::numerics::{run_chunked, sample_point, tensor_quadrature, Accumulator, MCResult, McPlan, Moments};
use crate::transform::{entropy_bits, local_preimages, Enumeration};

/// Deepest supported dyadic refinement in the partition sweep.
pub const MAX_SWEEP_DEPTH: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMethod {
    /// Monte-Carlo mean of `log2(f_Y(g(x)) |det J(x)| / f_X(x))`.
    DirectMc,
    /// Midpoint rule on the same integrand.
    DirectQuadrature,
    /// `h(X) - h(Y) + E[log2 |det J|]`.
    EntropyDifference,
    /// Mean entropy of the posterior over preimages, `H(W|Y)`.
    BranchPosterior,
}

impl LossMethod {
    pub const ALL: [LossMethod; 4] = [
        LossMethod::DirectMc,
        LossMethod::DirectQuadrature,
        LossMethod::EntropyDifference,
        LossMethod::BranchPosterior,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossMethod::DirectMc => "direct_mc",
            LossMethod::DirectQuadrature => "direct_quadrature",
            LossMethod::EntropyDifference => "entropy_difference",
            LossMethod::BranchPosterior => "branch_posterior",
        }
    }
}

impl fmt::Display for LossMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|m| m.as_str()).collect();
                Error::InvalidArgument(format!("unknown method `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyComponents {
    pub h_x_bits: f64,
    /// `h_x_bits` is the closed form rather than an estimate.
    pub h_x_exact: bool,
    pub h_y_bits: f64,
    pub h_y_stderr_bits: f64,
    pub e_logjac_bits: f64,
    pub e_logjac_stderr_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss_bits: f64,
    pub stderr_bits: f64,
    pub method: LossMethod,
    pub n_samples: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<EntropyComponents>,
    /// Quadrature only: difference from the rule at half the node count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_bound_bits: Option<f64>,
    /// Samples whose output density came from a truncated family sum.
    pub truncated_samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSweep {
    pub depths: Vec<u32>,
    pub losses_bits: Vec<f64>,
    pub stderr_bits: Vec<f64>,
    pub n_samples: u64,
    pub seed: u64,
}

/// Either a loss estimate or the classification that ruled one out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum LossOutcome {
    Finite(LossReport),
    Infinite(Box<Classification>),
}

const DIRECT: usize = 0;
const POSTERIOR: usize = 1;
const NEG_LOG_FX: usize = 2;
const NEG_LOG_FY: usize = 3;
const LOG_JAC: usize = 4;
const LOG_JAC_PLUS_LOG_FY: usize = 5;

#[derive(Default)]
struct Terms {
    m: [Moments; 6],
    truncated: u64,
}

impl Accumulator for Terms {
    fn merge(&mut self, later: Self) {
        self.m.merge(later.m);
        self.truncated += later.truncated;
    }
}

fn bijective_member(m: &PiecewiseMap, x: &[f64]) -> Result<PartId> {
    let id = m.branch_index(x)?;
    if m.parts()[id.part].kind() != BranchKind::Bijective {
        return Err(Error::NonBijectiveSample {
            x: x.to_vec(),
            part: id.to_string(),
        });
    }
    Ok(id)
}

fn sample_terms(m: &PiecewiseMap, d: &InputDensity, plan: &McPlan) -> Result<Terms> {
    run_chunked(plan, Terms::default, |t, rng| {
        let (x, _) = sample_point(d, rng)?;
        let id = bijective_member(m, &x)?;
        let (_, set) = local_preimages(m, d, &x, id, Enumeration::Density)?;
        let own = &set.elements[0];
        let w_own = own.weight();
        let total = set.total_weight();
        t.m[DIRECT].push((total / w_own).log2());
        t.m[POSTERIOR].push(entropy_bits(set.elements.iter().map(|e| e.weight() / total)));
        t.m[NEG_LOG_FX].push(-own.pdf.log2());
        t.m[NEG_LOG_FY].push(-total.log2());
        t.m[LOG_JAC].push(own.jac.log2());
        t.m[LOG_JAC_PLUS_LOG_FY].push(own.jac.log2() + total.log2());
        t.truncated += u64::from(set.truncated);
        Ok(())
    })
}

fn report(method: LossMethod, r: MCResult, plan: &McPlan, truncated: u64) -> LossReport {
    LossReport {
        loss_bits: r.mean,
        stderr_bits: r.stderr,
        method,
        n_samples: r.n,
        seed: plan.seed,
        components: None,
        error_bound_bits: None,
        truncated_samples: truncated,
    }
}

fn entropy_difference_from(t: &Terms, d: &InputDensity, plan: &McPlan) -> LossReport {
    let h_y = t.m[NEG_LOG_FY].result();
    let e_jac = t.m[LOG_JAC].result();
    let (h_x, h_x_exact, stderr) = match d.exact_diffent_bits() {
        Some(h) => (h, true, t.m[LOG_JAC_PLUS_LOG_FY].stderr()),
        None => (t.m[NEG_LOG_FX].mean(), false, t.m[DIRECT].stderr()),
    };
    LossReport {
        loss_bits: h_x - h_y.mean + e_jac.mean,
        stderr_bits: stderr,
        components: Some(EntropyComponents {
            h_x_bits: h_x,
            h_x_exact,
            h_y_bits: h_y.mean,
            h_y_stderr_bits: h_y.stderr,
            e_logjac_bits: e_jac.mean,
            e_logjac_stderr_bits: e_jac.stderr,
        }),
        ..report(LossMethod::EntropyDifference, h_y, plan, t.truncated)
    }
}

/// Direct, entropy-difference and branch-posterior estimates from one
/// shared set of samples.
pub fn mc_routes(m: &PiecewiseMap, d: &InputDensity, plan: &McPlan) -> Result<[LossReport; 3]> {
    let t = sample_terms(m, d, plan)?;
    Ok([
        report(LossMethod::DirectMc, t.m[DIRECT].result(), plan, t.truncated),
        entropy_difference_from(&t, d, plan),
        report(LossMethod::BranchPosterior, t.m[POSTERIOR].result(), plan, t.truncated),
    ])
}

pub fn loss_direct_mc(m: &PiecewiseMap, d: &InputDensity, plan: &McPlan) -> Result<LossReport> {
    let t = sample_terms(m, d, plan)?;
    Ok(report(LossMethod::DirectMc, t.m[DIRECT].result(), plan, t.truncated))
}

pub fn loss_entropy_difference(m: &PiecewiseMap, d: &InputDensity, plan: &McPlan) -> Result<LossReport> {
    let t = sample_terms(m, d, plan)?;
    Ok(entropy_difference_from(&t, d, plan))
}

pub fn loss_branch_posterior(m: &PiecewiseMap, d: &InputDensity, plan: &McPlan) -> Result<LossReport> {
    let t = sample_terms(m, d, plan)?;
    Ok(report(LossMethod::BranchPosterior, t.m[POSTERIOR].result(), plan, t.truncated))
}

/// Midpoint-rule value of the loss integral over the support's box.
/// Cells whose midpoint has zero density or lies in a non-bijective part
/// contribute nothing.
pub fn loss_direct_quadrature(m: &PiecewiseMap, d: &InputDensity, nodes_per_dim: usize) -> Result<LossReport> {
    if m.dim() > 2 {
        return Err(Error::DimensionTooHigh(m.dim()));
    }
    let bbox = d.support().bbox();
    if !bbox.is_bounded() {
        return Err(Error::UnboundedSupport);
    }
    let grid = bbox.offset_for_grid();
    let integrand = |x: &[f64]| -> Result<f64> {
        let pdf = d.pdf(x)?;
        if pdf == 0.0 {
            return Ok(0.0);
        }
        let id = m.branch_index(x)?;
        if m.parts()[id.part].kind() != BranchKind::Bijective {
            return Ok(0.0);
        }
        let (_, set) = local_preimages(m, d, x, id, Enumeration::Density)?;
        Ok(pdf * (set.total_weight() / set.elements[0].weight()).log2())
    };
    let fine = tensor_quadrature(&grid, integrand, nodes_per_dim)?;
    let coarse = tensor_quadrature(&grid, integrand, (nodes_per_dim / 2).max(1))?;
    Ok(LossReport {
        loss_bits: fine,
        stderr_bits: 0.0,
        method: LossMethod::DirectQuadrature,
        n_samples: (nodes_per_dim as u64).pow(m.dim() as u32),
        seed: 0,
        components: None,
        error_bound_bits: Some((fine - coarse).abs()),
        truncated_samples: 0,
    })
}

/// `h(X) = -E[log2 f_X(X)]` by sampling.
pub fn differential_entropy_mc(d: &InputDensity, plan: &McPlan) -> Result<MCResult> {
    let m = run_chunked(plan, Moments::default, |acc, rng| {
        let (x, _) = sample_point(d, rng)?;
        let p = d.pdf(&x)?;
        if !(p > 0.0) {
            return Err(Error::ZeroInputDensity { x });
        }
        acc.push(-p.log2());
        Ok(())
    })?;
    Ok(m.result())
}

/// `E[log2 |det J_g(X)|]`.
pub fn expected_log_jacdet(m: &PiecewiseMap, d: &InputDensity, plan: &McPlan) -> Result<MCResult> {
    let acc = run_chunked(plan, Moments::default, |acc, rng| {
        let (x, _) = sample_point(d, rng)?;
        let id = bijective_member(m, &x)?;
        let (b, k) = m.member(id);
        acc.push(b.jac_abs_det(&x, k, None)?.log2());
        Ok::<_, Error>(())
    })?;
    Ok(acc.result())
}

fn cell_key(x: &[f64], lo: &[f64], width: &[f64], depth: u32) -> u128 {
    let cells = 1u64 << depth;
    x.iter().enumerate().fold(0u128, |key, (a, v)| {
        let t = ((v - lo[a]) / width[a] * cells as f64).floor();
        let i = t.clamp(0.0, (cells - 1) as f64) as u128;
        (key << depth) | i
    })
}

/// `H(Xq|Y)` where `Xq` is the index of the dyadic cell (2^depth per axis
/// of the support box) containing `X`. All depths share one sample.
pub fn partition_sweep(m: &PiecewiseMap, d: &InputDensity, depths: &[u32], plan: &McPlan) -> Result<PartitionSweep> {
    let bbox = d.support().bbox();
    if !bbox.is_bounded() {
        return Err(Error::UnboundedSupport);
    }
    if let Some(bad) = depths.iter().find(|&&dp| dp > MAX_SWEEP_DEPTH || dp as usize * m.dim() > 128) {
        return Err(Error::InvalidArgument(format!(
            "sweep depth {bad} too large (at most {MAX_SWEEP_DEPTH}, and depth * dim <= 128)"
        )));
    }
    let lo = bbox.lo.clone();
    let width: Vec<f64> = bbox.lo.iter().zip(&bbox.hi).map(|(l, h)| h - l).collect();
    let acc = run_chunked(
        plan,
        || vec![Moments::default(); depths.len()],
        |acc, rng| {
            let (x, _) = sample_point(d, rng)?;
            let id = bijective_member(m, &x)?;
            let (_, set) = local_preimages(m, d, &x, id, Enumeration::Density)?;
            let total = set.total_weight();
            let mut cells: Vec<(u128, f64)> = Vec::with_capacity(set.len());
            for (slot, &depth) in depths.iter().enumerate() {
                cells.clear();
                cells.extend(set.elements.iter().map(|e| (cell_key(&e.x, &lo, &width, depth), e.weight())));
                cells.sort_by_key(|c| c.0);
                let mut probs = Vec::with_capacity(cells.len());
                let mut i = 0;
                while i < cells.len() {
                    let mut w = 0.0;
                    let key = cells[i].0;
                    while i < cells.len() && cells[i].0 == key {
                        w += cells[i].1;
                        i += 1;
                    }
                    probs.push(w / total);
                }
                acc[slot].push(entropy_bits(probs));
            }
            Ok::<_, Error>(())
        },
    )?;
    Ok(PartitionSweep {
        depths: depths.to_vec(),
        losses_bits: acc.iter().map(Moments::mean).collect(),
        stderr_bits: acc.iter().map(Moments::stderr).collect(),
        n_samples: plan.n,
        seed: plan.seed,
    })
}

/// Classifies the model, then runs `method` only when the loss is finite.
pub fn estimate_loss(
    m: &PiecewiseMap,
    d: &InputDensity,
    method: LossMethod,
    plan: &McPlan,
    nodes_per_dim: usize,
) -> Result<LossOutcome> {
    let class = classify(m, d, plan)?;
    if class.verdict != Verdict::Finite {
        return Ok(LossOutcome::Infinite(Box::new(class)));
    }
    let r = match method {
        LossMethod::DirectMc => loss_direct_mc(m, d, plan)?,
        LossMethod::DirectQuadrature => loss_direct_quadrature(m, d, nodes_per_dim)?,
        LossMethod::EntropyDifference => loss_entropy_difference(m, d, plan)?,
        LossMethod::BranchPosterior => loss_branch_posterior(m, d, plan)?,
    };
    Ok(LossOutcome::Finite(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Model;
    use crate::presets::bundled;

    fn model(name: &str) -> Model {
        bundled(name).unwrap().build().unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in LossMethod::ALL {
            assert_eq!(m.as_str().parse::<LossMethod>().unwrap(), m);
        }
        assert!("eq5".parse::<LossMethod>().is_err());
    }

    #[test]
    fn fold_is_half_a_bit() {
        let m = model("ex1");
        let plan = McPlan::new(100_000, 1);
        for r in mc_routes(&m.map, &m.density, &plan).unwrap() {
            assert!((r.loss_bits - 0.5).abs() < 4.0 * r.stderr_bits + 1e-3, "{r:?}");
        }
        let q = loss_direct_quadrature(&m.map, &m.density, 512).unwrap();
        assert!((q.loss_bits - 0.5).abs() < 0.003, "{q:?}");
        assert!(q.error_bound_bits.unwrap() < 0.01);
    }

    #[test]
    fn identity_loses_nothing() {
        let m = model("identity");
        let plan = McPlan::new(20_000, 1);
        for r in mc_routes(&m.map, &m.density, &plan).unwrap() {
            assert_eq!(r.loss_bits, 0.0, "{}", r.method);
        }
    }

    #[test]
    fn entropy_difference_components() {
        let m = model("ex2");
        let r = loss_entropy_difference(&m.map, &m.density, &McPlan::new(100_000, 2)).unwrap();
        let c = r.components.unwrap();
        assert!(c.h_x_exact);
        // 0.5 log2(2 pi e)
        assert!((c.h_x_bits - 2.047_095_585).abs() < 1e-8);
        assert!((c.e_logjac_bits - 0.0836).abs() < 0.01);
        let y = c.h_x_bits + c.e_logjac_bits - 1.0;
        assert!((c.h_y_bits - y).abs() < 4.0 * c.h_y_stderr_bits + 1e-3);
    }

    #[test]
    fn uniform_square_entropy() {
        let m = model("ex1");
        let h = differential_entropy_mc(&m.density, &McPlan::new(1000, 1)).unwrap();
        assert!((h.mean - 4.0).abs() < 1e-12);
        let j = expected_log_jacdet(&m.map, &m.density, &McPlan::new(1000, 1)).unwrap();
        assert_eq!(j.mean, 0.0);
    }

    #[test]
    fn sweep_grows_toward_the_loss() {
        let m = model("ex1");
        let s = partition_sweep(&m.map, &m.density, &[0, 2, 4, 6, 8], &McPlan::new(50_000, 3)).unwrap();
        assert_eq!(s.losses_bits[0], 0.0);
        for w in s.losses_bits.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{:?}", s.losses_bits);
        }
        assert!((s.losses_bits[4] - 0.5).abs() < 0.01);
    }

    #[test]
    fn sweep_rejects_deep_or_unbounded_requests() {
        let m = model("ex1");
        assert!(partition_sweep(&m.map, &m.density, &[MAX_SWEEP_DEPTH + 1], &McPlan::new(10, 1)).is_err());
        let g = model("ex2");
        assert!(partition_sweep(&g.map, &g.density, &[1], &McPlan::new(10, 1)).is_err());
    }

    #[test]
    fn infinite_models_are_refused() {
        let m = model("quantizer_uniform");
        let out = estimate_loss(&m.map, &m.density, LossMethod::DirectMc, &McPlan::new(5_000, 1), 64).unwrap();
        match out {
            LossOutcome::Infinite(c) => assert_eq!(c.verdict, Verdict::Infinite),
            LossOutcome::Finite(r) => panic!("{r:?}"),
        }
    }
}
