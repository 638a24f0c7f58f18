//! Probabilistic checks of a model's structural preconditions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Branch, BranchKind, InputDensity, Part, PartId, PiecewiseMap};
use crate::error::{Error, Result};
use crate::model::DensityForm;
use crate::numerics::{sample_density, tensor_quadrature, CounterRng, McPlan, Moments};

/// Inverse round trips must agree within this, scaled by `1 + |x|_inf`.
pub const INVERSE_TOL: f64 = 1e-9;
/// Relative agreement required between a Jacobian expression and finite differences.
pub const JAC_REL_TOL: f64 = 1e-4;
/// Maximum forward variance for a constant-point part.
pub const CONSTANT_VARIANCE_TOL: f64 = 1e-18;
/// Largest smallest-singular-value for a rank-deficient sample.
pub const RANK_DEFICIENT_SV_TOL: f64 = 1e-9;
/// Fraction of samples that must be rank deficient.
pub const RANK_DEFICIENT_FRACTION: f64 = 0.99;
/// Allowed deviation of the pdf integral from one.
pub const NORMALIZATION_TOL: f64 = 1e-3;

const KIND_CHECK_SAMPLES: usize = 512;
const BBOX_PROBES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartValidation {
    /// One-based part number.
    pub part: usize,
    pub kind: BranchKind,
    pub samples: u64,
    pub mass: f64,
    pub mass_stderr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse_max_error: Option<f64>,
    pub inverse_failures: u64,
    pub jacobian_violations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jac_expr_max_rel_error: Option<f64>,
    pub jac_expr_mismatches: u64,
    pub family_overlaps: u64,
    pub bbox_violations: u64,
    pub kind_check_passed: bool,
    pub kind_check: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub n_probe: u64,
    pub seed: u64,
    pub parts: Vec<PartValidation>,
    pub coverage_gaps: u64,
    pub overlaps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_example: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_example: Option<Vec<f64>>,
    pub mass_sum: f64,
    pub normalization: f64,
    pub normalization_method: String,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[derive(Default)]
struct PartTally {
    samples: u64,
    inverse_max: f64,
    inverse_failures: u64,
    jac_violations: u64,
    jac_rel_max: f64,
    jac_mismatches: u64,
    family_overlaps: u64,
    kept: Vec<(PartId, Vec<f64>)>,
}

fn jac_agreement(b: &Branch, x: &[f64], k: f64) -> Result<(f64, bool)> {
    let expr = b.jac_abs_det(x, k, None)?;
    let rel = |h: f64| -> Result<f64> {
        let fd = b.numeric_jac_abs_det(x, k, h)?;
        Ok((expr - fd).abs() / expr.max(fd).max(f64::MIN_POSITIVE))
    };
    let h = Branch::default_step(x);
    let coarse = rel(h)?;
    if coarse <= JAC_REL_TOL {
        return Ok((coarse, true));
    }
    // a stencil straddling a kink of the forward map disagrees at one step
    // size only; a wrong expression disagrees at every step
    let fine = rel(h * 1e-2)?;
    Ok((coarse.min(fine), fine <= JAC_REL_TOL))
}

fn check_bijective(b: &Branch, x: &[f64], k: f64, tally: &mut PartTally) {
    let round_trip = b
        .forward(x, k)
        .and_then(|y| b.inverse(&y, k))
        .map(|inv| inv.map(|xi| inf_norm(&xi.iter().zip(x).map(|(a, c)| a - c).collect::<Vec<_>>())));
    match round_trip {
        Ok(Some(err)) if err.is_finite() => {
            let scaled = err / (1.0 + inf_norm(x));
            tally.inverse_max = tally.inverse_max.max(scaled);
            if scaled >= INVERSE_TOL {
                tally.inverse_failures += 1;
            }
        }
        _ => tally.inverse_failures += 1,
    }
    match b.jac_abs_det(x, k, None) {
        Ok(_) => {}
        Err(_) => tally.jac_violations += 1,
    }
    if b.has_jac_expr() {
        match jac_agreement(b, x, k) {
            Ok((rel, ok)) => {
                tally.jac_rel_max = tally.jac_rel_max.max(rel);
                if !ok {
                    tally.jac_mismatches += 1;
                }
            }
            Err(_) => tally.jac_mismatches += 1,
        }
    }
}

pub(crate) fn kind_check(b: &Branch, kind: BranchKind, kept: &[(PartId, Vec<f64>)]) -> (bool, String) {
    if kept.is_empty() {
        return (true, "no samples in part; check vacuous".into());
    }
    match kind {
        BranchKind::Bijective => (true, "covered by inverse and Jacobian checks".into()),
        BranchKind::ConstantPoint => {
            let mut groups: BTreeMap<PartId, Vec<Moments>> = BTreeMap::new();
            for (id, x) in kept {
                let y = match b.forward(x, id.k_value()) {
                    Ok(y) => y,
                    Err(e) => return (false, format!("forward failed: {e}")),
                };
                let g = groups
                    .entry(*id)
                    .or_insert_with(|| vec![Moments::default(); y.len()]);
                for (m, v) in g.iter_mut().zip(&y) {
                    m.push(*v);
                }
            }
            let max_var = groups
                .values()
                .flat_map(|g| g.iter().map(|m| m.std().powi(2)))
                .fold(0.0f64, f64::max);
            (
                max_var < CONSTANT_VARIANCE_TOL,
                format!("max forward variance {max_var:e} over {} members", groups.len()),
            )
        }
        BranchKind::RankDeficient => {
            let mut deficient = 0usize;
            for (id, x) in kept {
                let h = Branch::default_step(x);
                match b.numeric_jacobian(x, id.k_value(), h) {
                    Ok(j) => {
                        let smallest = j
                            .singular_values()
                            .iter()
                            .fold(f64::INFINITY, |m, v| m.min(*v));
                        if smallest < RANK_DEFICIENT_SV_TOL {
                            deficient += 1;
                        }
                    }
                    Err(e) => return (false, format!("Jacobian failed: {e}")),
                }
            }
            let frac = deficient as f64 / kept.len() as f64;
            (
                frac >= RANK_DEFICIENT_FRACTION,
                format!("{:.4} of samples have a rank-deficient Jacobian", frac),
            )
        }
    }
}

/// Extra probes for parts the density sample never reached.
fn probe_zero_mass(part: &Part, idx: usize, d: &InputDensity, seed: u64) -> Vec<(PartId, Vec<f64>)> {
    let sup = d.support().bbox();
    let reg = part.branch().region().bbox();
    let lo: Vec<f64> = sup.lo.iter().zip(&reg.lo).map(|(a, b)| a.max(*b)).collect();
    let hi: Vec<f64> = sup.hi.iter().zip(&reg.hi).map(|(a, b)| a.min(*b)).collect();
    let Ok(bbox) = crate::geometry::BoundingBox::new(lo, hi) else {
        return Vec::new();
    };
    if !bbox.is_bounded() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for j in 0..10_000u64 {
        let x = bbox.draw(&mut CounterRng::new(seed ^ 0x5EED, j));
        let id = match part {
            Part::Branch(b) => b.contains(&x, 0.0).ok().filter(|c| *c).map(|_| PartId::branch(idx)),
            Part::Family(f) => f.member_of(&x).ok().flatten().map(|k| PartId::member(idx, k)),
        };
        if let (Some(id), Ok(true)) = (id, d.in_support(&x)) {
            out.push((id, x));
            if out.len() >= KIND_CHECK_SAMPLES {
                break;
            }
        }
    }
    out
}

fn normalization(d: &InputDensity) -> Result<(f64, String)> {
    match d.form() {
        DensityForm::GaussianIid { .. } | DensityForm::Exponential { .. } | DensityForm::UniformBox => {
            Ok((1.0, "closed_form".into()))
        }
        DensityForm::UniformRegion { .. } | DensityForm::Expression { .. } => {
            let bbox = d.support().bbox().offset_for_grid();
            if d.dim() <= 2 {
                let nodes = if d.dim() == 1 { 1 << 16 } else { 1024 };
                let v = tensor_quadrature(&bbox, |x| d.pdf(x), nodes)?;
                Ok((v, format!("midpoint_{nodes}")))
            } else {
                let plan = McPlan::new(1 << 20, 0x0DDB_1A5E);
                let vol = bbox.volume();
                let m = crate::numerics::mc_expectation(
                    |rng| Ok::<_, Error>(bbox.draw(rng)),
                    |x| d.pdf(x),
                    &plan,
                )?;
                Ok((vol * m.mean, "monte_carlo".into()))
            }
        }
    }
}

/// Checks disjointness, coverage, inverse consistency, Jacobian positivity,
/// declared kinds and pdf normalization on `n_probe` density samples.
pub fn validate(m: &PiecewiseMap, d: &InputDensity, n_probe: u64, seed: u64) -> ValidationReport {
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    let mut tallies: Vec<PartTally> = m.parts().iter().map(|_| PartTally::default()).collect();
    let mut gaps = 0u64;
    let mut overlaps = 0u64;
    let mut gap_example = None;
    let mut overlap_example = None;

    if m.dim() != d.dim() {
        failures.push(format!("map dimension {} differs from density dimension {}", m.dim(), d.dim()));
    }

    let batch = if failures.is_empty() {
        match sample_density(d, n_probe.max(1), seed) {
            Ok(b) => Some(b),
            Err(e) => {
                failures.push(format!("sampling failed: {e}"));
                None
            }
        }
    } else {
        None
    };

    let points = batch.as_ref().map(|b| b.points.as_slice()).unwrap_or(&[]);
    for x in points {
        let ids = match m.containing_parts(x) {
            Ok(ids) => ids,
            Err(e) => {
                failures.push(format!("membership evaluation failed at {x:?}: {e}"));
                break;
            }
        };
        for (i, part) in m.parts().iter().enumerate() {
            if let Part::Family(f) = part {
                if let Some(id) = ids.iter().find(|id| id.part == i) {
                    let k = id.k.unwrap_or(0);
                    for nb in [k - 1, k + 1] {
                        if f.k_range().contains(nb) && f.template().contains(x, nb as f64).unwrap_or(false) {
                            tallies[i].family_overlaps += 1;
                        }
                    }
                }
            }
        }
        match ids.len() {
            0 => {
                gaps += 1;
                gap_example.get_or_insert_with(|| x.clone());
            }
            1 => {
                let id = ids[0];
                let part = &m.parts()[id.part];
                let tally = &mut tallies[id.part];
                tally.samples += 1;
                if part.kind() == BranchKind::Bijective {
                    check_bijective(part.branch(), x, id.k_value(), tally);
                }
                if tally.kept.len() < KIND_CHECK_SAMPLES {
                    tally.kept.push((id, x.clone()));
                }
            }
            _ => {
                overlaps += 1;
                overlap_example.get_or_insert_with(|| x.clone());
            }
        }
    }

    let n = points.len().max(1) as f64;
    let mut part_reports = Vec::new();
    let mut mass_sum = 0.0;
    for (i, (part, tally)) in m.parts().iter().zip(tallies.iter_mut()).enumerate() {
        let mass = tally.samples as f64 / n;
        mass_sum += mass;
        let mass_stderr = (mass * (1.0 - mass) / n).sqrt();
        if tally.kept.is_empty() {
            tally.kept = probe_zero_mass(part, i, d, seed);
        }
        let (kind_ok, kind_msg) = kind_check(part.branch(), part.kind(), &tally.kept);
        let bijective = part.kind() == BranchKind::Bijective;
        let rep = PartValidation {
            part: i + 1,
            kind: part.kind(),
            samples: tally.samples,
            mass,
            mass_stderr,
            inverse_max_error: (bijective && tally.samples > 0).then_some(tally.inverse_max),
            inverse_failures: tally.inverse_failures,
            jacobian_violations: tally.jac_violations,
            jac_expr_max_rel_error: (bijective && tally.samples > 0 && part.branch().has_jac_expr())
                .then_some(tally.jac_rel_max),
            jac_expr_mismatches: tally.jac_mismatches,
            family_overlaps: tally.family_overlaps,
            bbox_violations: 0,
            kind_check_passed: kind_ok,
            kind_check: kind_msg.clone(),
        };
        let label = format!("part {}", i + 1);
        if rep.inverse_failures > 0 {
            failures.push(format!("{label}: {} inverse round trips off by more than {INVERSE_TOL:e}", rep.inverse_failures));
        }
        if rep.jacobian_violations > 0 {
            failures.push(format!("{label}: Jacobian determinant vanished at {} samples", rep.jacobian_violations));
        }
        if rep.jac_expr_mismatches > 0 {
            failures.push(format!(
                "{label}: jac_abs_det disagrees with finite differences at {} samples",
                rep.jac_expr_mismatches
            ));
        }
        if rep.family_overlaps > 0 {
            failures.push(format!("{label}: neighbouring family members overlap at {} samples", rep.family_overlaps));
        }
        if !kind_ok {
            failures.push(format!("{label}: declared kind {} not confirmed ({kind_msg})", part.kind().as_str()));
        }
        if tally.samples == 0 && bijective && !points.is_empty() {
            warnings.push(format!("{label}: no probe landed in this part (zero estimated mass)"));
        }
        part_reports.push(rep);
    }

    // bounding-box soundness on points from a box 50% larger than the support's
    let sup_bbox = d.support().bbox();
    if sup_bbox.is_bounded() {
        let probe_box = sup_bbox.expanded(0.25);
        if let Ok(probes) = probe_box.sample_uniform(BBOX_PROBES, seed.wrapping_add(0xB0B)) {
            let mut support_bad = 0u64;
            for x in &probes {
                let in_support = d.support().contains(x).unwrap_or(false);
                if in_support && !sup_bbox.contains_point(x) {
                    support_bad += 1;
                }
                // only the part of a region that meets the support matters
                if !in_support {
                    continue;
                }
                for (i, part) in m.parts().iter().enumerate() {
                    let b = part.branch();
                    let inside = match part {
                        Part::Branch(b) => b.contains(x, 0.0).unwrap_or(false),
                        Part::Family(f) => f.member_of(x).ok().flatten().is_some(),
                    };
                    if inside && !b.region().bbox().contains_point(x) {
                        part_reports[i].bbox_violations += 1;
                    }
                }
            }
            if support_bad > 0 {
                failures.push(format!("support predicate holds at {support_bad} points outside its bounding box"));
            }
            for r in &part_reports {
                if r.bbox_violations > 0 {
                    failures.push(format!("part {}: region predicate holds outside its bounding box", r.part));
                }
            }
        }
    }

    if gaps > 0 {
        failures.push(format!("{gaps} support samples are not covered by any part"));
    }
    if overlaps > 0 {
        failures.push(format!("{overlaps} support samples lie in more than one part"));
    }

    let (norm, norm_method) = match normalization(d) {
        Ok(v) => v,
        Err(e) => {
            failures.push(format!("normalization check failed: {e}"));
            (f64::NAN, "failed".into())
        }
    };
    if !((norm - 1.0).abs() <= NORMALIZATION_TOL) {
        failures.push(format!("pdf integrates to {norm}, not 1"));
    }

    ValidationReport {
        passed: failures.is_empty(),
        n_probe,
        seed,
        parts: part_reports,
        coverage_gaps: gaps,
        overlaps,
        gap_example,
        overlap_example,
        mass_sum,
        normalization: norm,
        normalization_method: norm_method,
        failures,
        warnings,
    }
}
