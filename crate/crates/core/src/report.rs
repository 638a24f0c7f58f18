//! Full analysis of one model.

use serde::{Deserialize, Serialize};

use crate::bounds::{bounds_report, BoundsReport};
use crate::classify::{atom_scan, classify, Atom, Classification, Verdict};
use crate::config::{AnalysisConfig, Model};
use crate::error::Result;
use crate::loss::{loss_direct_quadrature, mc_routes, partition_sweep, LossReport, PartitionSweep};
use crate::model::{validate, BranchKind, ValidationReport};
use crate::numerics::McPlan;
use crate::transform::output_mass;

/// Probe count used by the validation stage of a report.
pub const REPORT_PROBES: u64 = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub n: u64,
    pub seed: u64,
    pub nodes_per_dim: usize,
    pub depths: Vec<u32>,
    pub k_max: usize,
    pub tol: f64,
    pub tail_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub integral: f64,
    pub nodes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub model: String,
    pub digest: String,
    pub settings: Settings,
    pub validation: ValidationReport,
    pub classification: Classification,
    pub atoms: Vec<Atom>,
    pub losses: Vec<LossReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<PartitionSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_normalization: Option<Normalization>,
    pub warnings: Vec<String>,
    /// Stages that failed numerically, with their diagnostics.
    pub errors: Vec<String>,
}

impl RunReport {
    pub fn loss(&self, method: crate::loss::LossMethod) -> Option<&LossReport> {
        self.losses.iter().find(|l| l.method == method)
    }
}

/// Nodes per axis for the output-density normalization check.
pub fn normalization_nodes(dim: usize) -> Vec<usize> {
    if dim == 1 {
        vec![1 << 16]
    } else {
        vec![1024, 1031]
    }
}

fn settings(a: &AnalysisConfig, plan: &McPlan) -> Settings {
    Settings {
        n: plan.n,
        seed: plan.seed,
        nodes_per_dim: a.nodes_per_dim,
        depths: a.depths.clone(),
        k_max: a.k_max,
        tol: a.tol,
        tail_tol: a.tail_tol,
    }
}

fn stage<T>(name: &str, errors: &mut Vec<String>, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("{name}: {e}"));
            None
        }
    }
}

/// Validation, classification, every applicable loss route, bounds, the
/// partition sweep and the `f_Y` normalization check.
pub fn run_report(model: &Model, plan: &McPlan) -> Result<RunReport> {
    let (m, d) = (&model.map, &model.density);
    let a = &model.analysis;
    let mut warnings = Vec::new();
    let mut errors = Vec::new();

    let validation = validate(m, d, REPORT_PROBES.min(plan.n.max(1)), plan.seed);
    warnings.extend(validation.warnings.iter().cloned());
    let classification = classify(m, d, plan)?;
    let atoms = if m.parts().iter().any(|p| p.kind() == BranchKind::ConstantPoint) {
        atom_scan(m, d, plan)?
    } else {
        Vec::new()
    };

    let mut losses = Vec::new();
    let mut bounds = None;
    let mut sweep = None;
    let mut output_normalization = None;
    if classification.verdict == Verdict::Finite && validation.passed {
        if let Some(routes) = stage("monte carlo routes", &mut errors, mc_routes(m, d, plan)) {
            losses.extend(routes);
        }
        let bounded = d.support().bbox().is_bounded();
        if m.dim() <= 2 && bounded {
            if let Some(q) = stage("quadrature", &mut errors, loss_direct_quadrature(m, d, a.nodes_per_dim)) {
                losses.push(q);
            }
        }
        bounds = stage("bounds", &mut errors, bounds_report(m, d, plan));
        if bounded {
            sweep = stage("partition sweep", &mut errors, partition_sweep(m, d, &a.depths, plan));
        }
        if let (Some(bbox), true) = (&model.output_box, m.dim() <= 2) {
            let nodes = normalization_nodes(m.dim());
            output_normalization = stage("normalization", &mut errors, output_mass(m, d, bbox, &nodes))
                .map(|integral| Normalization { integral, nodes });
        }
        if let Some(t) = losses.iter().map(|l| l.truncated_samples).max().filter(|t| *t > 0) {
            warnings.push(format!(
                "family enumeration stopped early for {t} samples; the neglected tail is below tail_tol of f_Y"
            ));
        }
        if bounds.as_ref().is_some_and(|b| b.e_log_card_infinite) {
            warnings.push(format!(
                "preimage counts reached k_max = {}; cardinality bounds are flagged infinite",
                a.k_max
            ));
        }
    } else if !validation.passed {
        warnings.push("validation failed; estimates skipped".into());
    } else {
        warnings.push(format!(
            "classification is {} ({}); finite estimates skipped",
            classification.verdict.as_str(),
            classification.reason.as_str()
        ));
    }

    Ok(RunReport {
        tool: format!("infoloss {}", env!("CARGO_PKG_VERSION")),
        model: model.name.clone(),
        digest: model.digest.clone(),
        settings: settings(a, plan),
        validation,
        classification,
        atoms,
        losses,
        bounds,
        sweep,
        output_normalization,
        warnings,
        errors,
    })
}

/// Builds the plan from the model's analysis block.
pub fn plan_for(model: &Model) -> McPlan {
    McPlan::new(model.analysis.n, model.analysis.seed)
}
