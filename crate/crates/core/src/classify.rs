//! Structural finite/infinite classification of the loss.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{kind_check, BranchKind, InputDensity, PartId, PiecewiseMap};
use crate::numerics::{run_chunked, sample_point, Accumulator, McPlan};

const KEPT_PER_PART: usize = 512;
/// Constant-point outputs closer than this are one atom.
pub const ATOM_MERGE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Finite,
    Infinite,
    Unknown,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Finite => "finite",
            Verdict::Infinite => "infinite",
            Verdict::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    None,
    DiscreteAtom,
    RankDeficientMass,
    MixedLimiter,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::None => "none",
            Reason::DiscreteAtom => "discrete_atom",
            Reason::RankDeficientMass => "rank_deficient_mass",
            Reason::MixedLimiter => "mixed_limiter",
        }
    }
}

/// Estimated input mass of one part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartMass {
    /// One-based part number.
    pub part: usize,
    pub kind: BranchKind,
    pub mass: f64,
    pub stderr: f64,
    /// `mass > 3 * stderr`.
    pub positive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub reason: Reason,
    /// Masses of the non-bijective parts.
    pub evidence: Vec<PartMass>,
    pub n_samples: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// A sampled output point carrying positive probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub y: Vec<f64>,
    pub mass: f64,
    pub stderr: f64,
}

/// Per-member hit counts, a few retained points per part, and the first
/// output of each constant-point member.
#[derive(Default)]
struct Tally {
    n: u64,
    counts: BTreeMap<PartId, u64>,
    kept: BTreeMap<usize, Vec<(PartId, Vec<f64>)>>,
    outputs: BTreeMap<PartId, Vec<f64>>,
}

impl Accumulator for Tally {
    fn merge(&mut self, later: Self) {
        self.n += later.n;
        for (id, c) in later.counts {
            *self.counts.entry(id).or_default() += c;
        }
        for (part, pts) in later.kept {
            let mine = self.kept.entry(part).or_default();
            let room = KEPT_PER_PART.saturating_sub(mine.len());
            mine.extend(pts.into_iter().take(room));
        }
        for (id, y) in later.outputs {
            self.outputs.entry(id).or_insert(y);
        }
    }
}

fn tally(m: &PiecewiseMap, d: &InputDensity, plan: &McPlan) -> Result<Tally> {
    run_chunked(plan, Tally::default, |t, rng| {
        let (x, _) = sample_point(d, rng)?;
        let id = m.branch_index(&x)?;
        t.n += 1;
        *t.counts.entry(id).or_default() += 1;
        let kind = m.parts()[id.part].kind();
        if kind == BranchKind::ConstantPoint && !t.outputs.contains_key(&id) {
            let (b, k) = m.member(id);
            t.outputs.insert(id, b.forward(&x, k)?);
        }
        if kind != BranchKind::Bijective {
            let kept = t.kept.entry(id.part).or_default();
            if kept.len() < KEPT_PER_PART {
                kept.push((id, x));
            }
        }
        Ok(())
    })
}

fn masses(m: &PiecewiseMap, t: &Tally) -> Vec<PartMass> {
    let n = t.n.max(1) as f64;
    let mut per_part = vec![0u64; m.parts().len()];
    for (id, c) in &t.counts {
        per_part[id.part] += c;
    }
    m.parts()
        .iter()
        .zip(per_part)
        .enumerate()
        .map(|(i, (p, c))| {
            let mass = c as f64 / n;
            let stderr = (mass * (1.0 - mass) / n).sqrt();
            PartMass {
                part: i + 1,
                kind: p.kind(),
                mass,
                stderr,
                positive: mass > 3.0 * stderr,
            }
        })
        .collect()
}

/// Decides whether `H(X|Y)` is finite from the declared part kinds and
/// their estimated input masses.
pub fn classify(m: &PiecewiseMap, d: &InputDensity, plan: &McPlan) -> Result<Classification> {
    let t = tally(m, d, plan)?;
    let all = masses(m, &t);
    let mut notes = Vec::new();
    let positive_bijective = all.iter().any(|p| p.kind == BranchKind::Bijective && p.positive);
    let collapsing: Vec<&PartMass> = all
        .iter()
        .filter(|p| p.kind != BranchKind::Bijective && p.positive)
        .collect();

    let mut verified = true;
    for p in &collapsing {
        let kept = t.kept.get(&(p.part - 1)).map(Vec::as_slice).unwrap_or(&[]);
        let (ok, msg) = kind_check(m.parts()[p.part - 1].branch(), p.kind, kept);
        if !ok {
            verified = false;
            notes.push(format!("part {}: declared {} not confirmed ({msg})", p.part, p.kind.as_str()));
        }
    }

    let (verdict, reason) = if collapsing.is_empty() {
        (Verdict::Finite, Reason::None)
    } else if !verified {
        (Verdict::Unknown, Reason::None)
    } else if positive_bijective {
        (Verdict::Infinite, Reason::MixedLimiter)
    } else if collapsing.iter().any(|p| p.kind == BranchKind::ConstantPoint) {
        (Verdict::Infinite, Reason::DiscreteAtom)
    } else {
        (Verdict::Infinite, Reason::RankDeficientMass)
    };

    Ok(Classification {
        verdict,
        reason,
        evidence: all.into_iter().filter(|p| p.kind != BranchKind::Bijective).collect(),
        n_samples: t.n,
        seed: plan.seed,
        notes,
    })
}

/// Output points of constant-point parts with their estimated masses,
/// sorted lexicographically by `y`.
pub fn atom_scan(m: &PiecewiseMap, d: &InputDensity, plan: &McPlan) -> Result<Vec<Atom>> {
    let t = tally(m, d, plan)?;
    let n = t.n.max(1) as f64;
    let mut atoms: Vec<(Vec<f64>, u64)> = Vec::new();
    for (id, y) in &t.outputs {
        let c = t.counts[id];
        match atoms
            .iter_mut()
            .find(|(a, _)| a.iter().zip(y).all(|(u, v)| (u - v).abs() <= ATOM_MERGE_TOL * u.abs().max(1.0)))
        {
            Some((_, total)) => *total += c,
            None => atoms.push((y.clone(), c)),
        }
    }
    atoms.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(atoms
        .into_iter()
        .map(|(y, c)| {
            let mass = c as f64 / n;
            Atom {
                y,
                mass,
                stderr: (mass * (1.0 - mass) / n).sqrt(),
            }
        })
        .collect())
}
