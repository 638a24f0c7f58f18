//! Upper bounds on the loss from preimage cardinality and branch entropy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BranchKind, InputDensity, PartId, PiecewiseMap};
use crate::numerics::{run_chunked, sample_point, Accumulator, McPlan, Moments};
use crate::transform::{entropy_bits, local_preimages, Enumeration};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberMass {
    /// One-based part number.
    pub part: usize,
    /// Family member index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<i64>,
    pub mass: f64,
    pub stderr: f64,
}

/// Plug-in entropy of the branch index `W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyW {
    pub bits: f64,
    pub stderr_bits: f64,
    pub masses: Vec<MemberMass>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// `E[log2 |g^-1(Y)|]`.
    pub e_log_card_bits: f64,
    pub e_log_card_stderr_bits: f64,
    pub e_log_card_infinite: bool,
    /// `log2 E[|g^-1(Y)|]`.
    pub log_e_card_bits: f64,
    pub log_e_card_stderr_bits: f64,
    pub log_e_card_infinite: bool,
    /// `log2` of the largest sampled preimage count.
    pub max_log_card_bits: f64,
    pub max_log_card_infinite: bool,
    pub max_card: u64,
    pub h_w_bits: f64,
    pub h_w_stderr_bits: f64,
    pub masses: Vec<MemberMass>,
    pub n_samples: u64,
    pub seed: u64,
}

#[derive(Default)]
struct CardTally {
    log_card: Moments,
    card: Moments,
    max_card: u64,
    truncated: u64,
    counts: BTreeMap<PartId, u64>,
}

impl Accumulator for CardTally {
    fn merge(&mut self, later: Self) {
        self.log_card.merge(&later.log_card);
        self.card.merge(&later.card);
        self.max_card = self.max_card.max(later.max_card);
        self.truncated += later.truncated;
        for (id, c) in later.counts {
            *self.counts.entry(id).or_default() += c;
        }
    }
}

fn plug_in(counts: &BTreeMap<PartId, u64>, n: u64) -> EntropyW {
    let nf = n.max(1) as f64;
    let probs: Vec<f64> = counts.values().map(|c| *c as f64 / nf).collect();
    let h = entropy_bits(probs.iter().copied());
    // delta method: Var = (sum p log2^2 p - H^2) / n
    let second: f64 = probs.iter().filter(|p| **p > 0.0).map(|p| p * p.log2().powi(2)).sum();
    let stderr = ((second - h * h).max(0.0) / nf).sqrt();
    EntropyW {
        bits: h,
        stderr_bits: stderr,
        masses: counts
            .iter()
            .map(|(id, c)| {
                let p = *c as f64 / nf;
                MemberMass {
                    part: id.part + 1,
                    k: id.k,
                    mass: p,
                    stderr: (p * (1.0 - p) / nf).sqrt(),
                }
            })
            .collect(),
    }
}

/// `H(W)` from branch-index frequencies.
pub fn entropy_w(m: &PiecewiseMap, d: &InputDensity, plan: &McPlan) -> Result<EntropyW> {
    let counts = run_chunked(plan, BTreeMap::new, |counts: &mut BTreeMap<PartId, u64>, rng| {
        let (x, _) = sample_point(d, rng)?;
        *counts.entry(m.branch_index(&x)?).or_default() += 1;
        Ok::<_, Error>(())
    })?;
    Ok(plug_in(&counts, plan.n))
}

impl Accumulator for BTreeMap<PartId, u64> {
    fn merge(&mut self, later: Self) {
        for (id, c) in later {
            *self.entry(id).or_default() += c;
        }
    }
}

/// Cardinality bounds and `H(W)`. A term is flagged infinite when any
/// sample's family enumeration still found preimages at the `k_max` cap; its
/// value is then only a lower estimate.
pub fn bounds_report(m: &PiecewiseMap, d: &InputDensity, plan: &McPlan) -> Result<BoundsReport> {
    let t = run_chunked(plan, CardTally::default, |t, rng| {
        let (x, _) = sample_point(d, rng)?;
        let id = m.branch_index(&x)?;
        if m.parts()[id.part].kind() != BranchKind::Bijective {
            return Err(Error::NonBijectiveSample {
                x,
                part: id.to_string(),
            });
        }
        let (_, set) = local_preimages(m, d, &x, id, Enumeration::Complete)?;
        let card = set.len() as u64;
        t.log_card.push((card as f64).log2());
        t.card.push(card as f64);
        t.max_card = t.max_card.max(card);
        t.truncated += u64::from(set.truncated);
        *t.counts.entry(id).or_default() += 1;
        Ok(())
    })?;
    let hw = plug_in(&t.counts, plan.n);
    let mean_card = t.card.mean();
    let infinite = t.truncated > 0;
    Ok(BoundsReport {
        e_log_card_bits: t.log_card.mean(),
        e_log_card_stderr_bits: t.log_card.stderr(),
        e_log_card_infinite: infinite,
        log_e_card_bits: mean_card.log2(),
        // delta method on log2 of the mean
        log_e_card_stderr_bits: t.card.stderr() / (mean_card * std::f64::consts::LN_2),
        log_e_card_infinite: infinite,
        max_log_card_bits: (t.max_card.max(1) as f64).log2(),
        max_log_card_infinite: infinite,
        max_card: t.max_card,
        h_w_bits: hw.bits,
        h_w_stderr_bits: hw.stderr_bits,
        masses: hw.masses,
        n_samples: plan.n,
        seed: plan.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Model;
    use crate::presets::{bundled, triangle_abs};

    fn model(name: &str) -> Model {
        bundled(name).unwrap().build().unwrap()
    }

    #[test]
    fn triangle_chain_at_half_width() {
        let m = model("ex6_m1");
        let b = bounds_report(&m.map, &m.density, &McPlan::new(100_000, 2)).unwrap();
        assert!((b.e_log_card_bits - 0.75).abs() < 4.0 * b.e_log_card_stderr_bits + 1e-9);
        assert!((b.log_e_card_bits - 1.75f64.log2()).abs() < 0.01);
        assert_eq!((b.max_card, b.max_log_card_bits), (2, 1.0));
        assert!(b.e_log_card_bits <= b.log_e_card_bits && b.log_e_card_bits <= b.max_log_card_bits);
        // quadrant masses 1/16, 3/8, 9/16
        let hw: f64 = [1.0f64 / 16.0, 3.0 / 8.0, 9.0 / 16.0].iter().map(|p| -p * p.log2()).sum();
        assert!((b.h_w_bits - hw).abs() < 4.0 * b.h_w_stderr_bits, "{} vs {hw}", b.h_w_bits);
        assert!(!b.e_log_card_infinite);
    }

    #[test]
    fn fold_cardinality() {
        let m = model("ex1");
        let b = bounds_report(&m.map, &m.density, &McPlan::new(50_000, 1)).unwrap();
        // |preimage| = 2 with probability 1/2
        assert!((b.e_log_card_bits - 0.5).abs() < 0.02);
        assert!((b.log_e_card_bits - 1.5f64.log2()).abs() < 0.02);
        assert!((b.h_w_bits - 1.0).abs() < 1e-3);
    }

    #[test]
    fn identity_has_no_spread() {
        let m = model("identity");
        let b = bounds_report(&m.map, &m.density, &McPlan::new(10_000, 1)).unwrap();
        assert_eq!((b.e_log_card_bits, b.log_e_card_bits, b.max_log_card_bits, b.h_w_bits), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn unbounded_family_is_flagged() {
        let m = model("ex3");
        let b = bounds_report(&m.map, &m.density, &McPlan::new(2_000, 1)).unwrap();
        assert!(b.e_log_card_infinite && b.log_e_card_infinite && b.max_log_card_infinite);
        assert!(b.h_w_bits.is_finite());
    }

    #[test]
    fn collapsing_parts_are_refused() {
        let m = model("ex5");
        assert!(matches!(
            bounds_report(&m.map, &m.density, &McPlan::new(100, 1)),
            Err(Error::NonBijectiveSample { .. })
        ));
    }

    #[test]
    fn entropy_w_matches_bounds() {
        let m = triangle_abs(0.0, 2.0, "m0").build().unwrap();
        let plan = McPlan::new(30_000, 8);
        let e = entropy_w(&m.map, &m.density, &plan).unwrap();
        let b = bounds_report(&m.map, &m.density, &plan).unwrap();
        assert_eq!(e.bits, b.h_w_bits);
        assert!((e.bits - 1.5).abs() < 0.02);
    }
}
