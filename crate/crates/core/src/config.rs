//! JSON model configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::Error;
use crate::expr::parse;
use crate::geometry::{BoundingBox, Region};
use crate::model::{
    Branch, BranchFamily, BranchKind, EnumerationLimits, InputDensity, KRange, Part, PiecewiseMap, DEFAULT_K_MAX,
    DEFAULT_TAIL_TOL, DEFAULT_TOL,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: String, message: String },
    #[error("{path}: {source}")]
    Invalid {
        path: String,
        #[source]
        source: Error,
    },
}

fn invalid(path: impl Into<String>, source: Error) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        source,
    }
}

/// A box bound: a number, or the strings `"inf"` / `"-inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Num(f64),
    Text(InfText),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfText {
    #[serde(rename = "inf")]
    Inf,
    #[serde(rename = "-inf")]
    NegInf,
}

impl Bound {
    pub fn value(self) -> f64 {
        match self {
            Bound::Num(v) => v,
            Bound::Text(InfText::Inf) => f64::INFINITY,
            Bound::Text(InfText::NegInf) => f64::NEG_INFINITY,
        }
    }

    pub fn from_value(v: f64) -> Self {
        if v == f64::INFINITY {
            Bound::Text(InfText::Inf)
        } else if v == f64::NEG_INFINITY {
            Bound::Text(InfText::NegInf)
        } else {
            Bound::Num(v)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<Bound>,
    pub hi: Vec<Bound>,
}

impl BoxConfig {
    pub fn from_box(b: &BoundingBox) -> Self {
        Self {
            lo: b.lo.iter().map(|v| Bound::from_value(*v)).collect(),
            hi: b.hi.iter().map(|v| Bound::from_value(*v)).collect(),
        }
    }

    pub fn to_box(&self) -> crate::error::Result<BoundingBox> {
        BoundingBox::new(
            self.lo.iter().map(|b| b.value()).collect(),
            self.hi.iter().map(|b| b.value()).collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub predicate: String,
    /// Omitted means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoxConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    /// `uniform_box`, `uniform_region`, `gaussian_iid`, `exponential` or `expression`.
    pub form: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<RegionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdf: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdf_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_diffent_bits: Option<f64>,
}

fn bijective() -> BranchKind {
    BranchKind::Bijective
}

fn is_bijective(k: &BranchKind) -> bool {
    *k == BranchKind::Bijective
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchConfig {
    pub region: RegionConfig,
    pub forward: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jac_abs_det: Option<String>,
    #[serde(default = "bijective", skip_serializing_if = "is_bijective")]
    pub kind: BranchKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KRangeConfig {
    pub lo: i64,
    /// Omitted for `k >= lo`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub region_of_k: RegionConfig,
    pub forward: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jac_abs_det: Option<String>,
    #[serde(default = "bijective", skip_serializing_if = "is_bijective")]
    pub kind: BranchKind,
    pub index_of: String,
    pub k_range: KRangeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PartConfig {
    Branch(BranchConfig),
    Family(FamilyConfig),
}

fn default_n() -> u64 {
    1_000_000
}
fn default_seed() -> u64 {
    1
}
fn default_nodes() -> usize {
    512
}
fn default_depths() -> Vec<u32> {
    (0..=8).collect()
}
fn default_k_max() -> usize {
    DEFAULT_K_MAX
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_tail_tol() -> f64 {
    DEFAULT_TAIL_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_nodes")]
    pub nodes_per_dim: usize,
    #[serde(default = "default_depths")]
    pub depths: Vec<u32>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    /// Box over which `f_Y` is integrated in the normalization check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_box: Option<BoxConfig>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            seed: default_seed(),
            nodes_per_dim: default_nodes(),
            depths: default_depths(),
            k_max: default_k_max(),
            tol: default_tol(),
            tail_tol: default_tail_tol(),
            output_box: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    pub dim: usize,
    pub density: DensityConfig,
    pub parts: Vec<PartConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

/// A loaded model ready for analysis.
#[derive(Clone, Debug)]
pub struct Model {
    pub name: String,
    pub map: PiecewiseMap,
    pub density: InputDensity,
    pub analysis: AnalysisConfig,
    pub output_box: Option<BoundingBox>,
    /// Hex SHA-256 of the canonical config JSON.
    pub digest: String,
}

fn region(r: &RegionConfig, dim: usize, path: &str) -> Result<Region, ConfigError> {
    let bbox = match &r.bbox {
        Some(b) => b.to_box().map_err(|e| invalid(format!("{path}.bbox"), e))?,
        None => BoundingBox::unbounded(dim),
    };
    if bbox.dim() != dim {
        return Err(invalid(
            format!("{path}.bbox"),
            Error::Model(format!("box has {} axes, expected {dim}", bbox.dim())),
        ));
    }
    let pred = parse(&r.predicate).map_err(|e| invalid(format!("{path}.predicate"), e.into()))?;
    Region::new(&pred, bbox).map_err(|e| invalid(format!("{path}.predicate"), e))
}

fn exprs(src: &[String], path: &str) -> Result<Vec<crate::expr::Expr>, ConfigError> {
    src.iter()
        .enumerate()
        .map(|(i, s)| parse(s).map_err(|e| invalid(format!("{path}[{i}]"), e.into())))
        .collect()
}

fn branch(
    reg: Region,
    forward: &[String],
    inverse: Option<&Vec<String>>,
    jac: Option<&String>,
    kind: BranchKind,
    path: &str,
) -> Result<Branch, ConfigError> {
    let fwd = exprs(forward, &format!("{path}.forward"))?;
    let inv = inverse.map(|v| exprs(v, &format!("{path}.inverse"))).transpose()?;
    let jac = jac
        .map(|s| parse(s).map_err(|e| invalid(format!("{path}.jac_abs_det"), e.into())))
        .transpose()?;
    Branch::new(reg, fwd, inv, jac, kind).map_err(|e| invalid(path, e))
}

fn param(d: &DensityConfig, key: &str, default: Option<f64>) -> Result<f64, ConfigError> {
    d.params
        .get(key)
        .copied()
        .or(default)
        .ok_or_else(|| invalid(format!("density.params.{key}"), Error::Model("required parameter missing".into())))
}

fn density(c: &DensityConfig, dim: usize) -> Result<InputDensity, ConfigError> {
    let support = |required: bool| -> Result<Option<Region>, ConfigError> {
        match &c.support {
            Some(s) => Ok(Some(region(s, dim, "density.support")?)),
            None if required => Err(invalid("density.support", Error::Model("support is required for this form".into()))),
            None => Ok(None),
        }
    };
    let built = match c.form.as_str() {
        "uniform_box" => {
            let bbox = c
                .support
                .as_ref()
                .and_then(|s| s.bbox.as_ref())
                .ok_or_else(|| invalid("density.support.bbox", Error::Model("uniform_box needs a bbox".into())))?
                .to_box()
                .map_err(|e| invalid("density.support.bbox", e))?;
            InputDensity::uniform_box(bbox)
        }
        "uniform_region" => {
            let s = support(true)?.expect("required");
            InputDensity::uniform_region(s, param(c, "volume", None)?)
        }
        "gaussian_iid" => InputDensity::gaussian_iid(dim, param(c, "mean", Some(0.0))?, param(c, "std", Some(1.0))?),
        "exponential" => InputDensity::exponential(dim, param(c, "rate", None)?),
        "expression" => {
            let pdf_src = c
                .pdf
                .as_ref()
                .ok_or_else(|| invalid("density.pdf", Error::Model("expression densities need a pdf".into())))?;
            let pdf = parse(pdf_src).map_err(|e| invalid("density.pdf", e.into()))?;
            let bound = c
                .pdf_bound
                .ok_or_else(|| invalid("density.pdf_bound", Error::Model("expression densities need pdf_bound".into())))?;
            InputDensity::expression(&pdf, bound, support(true)?.expect("required"))
        }
        other => {
            return Err(invalid(
                "density.form",
                Error::Model(format!(
                    "unknown form `{other}`; expected uniform_box, uniform_region, gaussian_iid, exponential or expression"
                )),
            ))
        }
    };
    let d = built.map_err(|e| invalid("density", e))?;
    if d.dim() != dim {
        return Err(invalid("density", Error::Model(format!("density has dimension {}, expected {dim}", d.dim()))));
    }
    Ok(d.with_exact_diffent(c.exact_diffent_bits))
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Json {
            path: match e.path().to_string().as_str() {
                "." => "config".to_string(),
                p => p.to_string(),
            },
            message: e.into_inner().to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn build(&self) -> Result<Model, ConfigError> {
        let dim = self.dim;
        if dim == 0 || dim > crate::slots::MAX_DIM {
            return Err(invalid(
                "dim",
                Error::Model(format!("dimension must be in 1..={}", crate::slots::MAX_DIM)),
            ));
        }
        let density = density(&self.density, dim)?;
        let mut parts = Vec::with_capacity(self.parts.len());
        for (i, p) in self.parts.iter().enumerate() {
            let path = format!("parts[{i}]");
            parts.push(match p {
                PartConfig::Branch(b) => {
                    let reg = region(&b.region, dim, &format!("{path}.region"))?;
                    Part::Branch(branch(reg, &b.forward, b.inverse.as_ref(), b.jac_abs_det.as_ref(), b.kind, &path)?)
                }
                PartConfig::Family(f) => {
                    let reg = region(&f.region_of_k, dim, &format!("{path}.region_of_k"))?;
                    let template = branch(reg, &f.forward, f.inverse.as_ref(), f.jac_abs_det.as_ref(), f.kind, &path)?;
                    let index = parse(&f.index_of).map_err(|e| invalid(format!("{path}.index_of"), e.into()))?;
                    let range = match f.k_range.hi {
                        Some(hi) => KRange::Finite { lo: f.k_range.lo, hi },
                        None => KRange::LowerBounded { lo: f.k_range.lo },
                    };
                    Part::Family(BranchFamily::new(template, index, range).map_err(|e| invalid(path.clone(), e))?)
                }
            });
        }
        let a = &self.analysis;
        if a.k_max == 0 || !(a.tol > 0.0) || !(a.tail_tol > 0.0) {
            return Err(invalid("analysis", Error::Model("k_max, tol and tail_tol must be positive".into())));
        }
        let map = PiecewiseMap::new(dim, parts)
            .map_err(|e| invalid("parts", e))?
            .with_limits(EnumerationLimits {
                k_max: a.k_max,
                tail_tol: a.tail_tol,
                tol: a.tol,
            });
        let output_box = a
            .output_box
            .as_ref()
            .map(|b| b.to_box().map_err(|e| invalid("analysis.output_box", e)))
            .transpose()?;
        Ok(Model {
            name: self.name.clone().unwrap_or_else(|| "unnamed".into()),
            map,
            density,
            analysis: a.clone(),
            output_box,
            digest: self.digest(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOLD: &str = r#"{
        "name": "fold",
        "dim": 2,
        "density": {"form": "uniform_box", "support": {"predicate": "1", "bbox": {"lo": [-2, -2], "hi": [2, 2]}}},
        "parts": [
            {"type": "branch", "region": {"predicate": "x1 > x2"}, "forward": ["x1", "x1 - x2"],
             "inverse": ["y1", "y1 - y2"], "jac_abs_det": "1"},
            {"type": "branch", "region": {"predicate": "x1 <= x2"}, "forward": ["x1", "x2 - x1"],
             "inverse": ["y1", "y1 + y2"], "jac_abs_det": "1"}
        ]
    }"#;

    #[test]
    fn builds_fold() {
        let c = ModelConfig::from_json(FOLD).unwrap();
        let m = c.build().unwrap();
        assert_eq!(m.map.forward_eval(&[1.0, -1.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(m.density.pdf(&[0.0, 0.0]).unwrap(), 1.0 / 16.0);
        assert_eq!(m.analysis.n, 1_000_000);
        assert_eq!(m.digest.len(), 64);
    }

    #[test]
    fn round_trip_preserves_digest() {
        let c = ModelConfig::from_json(FOLD).unwrap();
        let again = ModelConfig::from_json(&c.to_json_pretty()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.digest(), again.digest());
    }

    #[test]
    fn infinite_bounds_as_strings() {
        let b: BoxConfig = serde_json::from_str(r#"{"lo": [0, "-inf"], "hi": ["inf", 1.5]}"#).unwrap();
        let bb = b.to_box().unwrap();
        assert_eq!(bb.lo, vec![0.0, f64::NEG_INFINITY]);
        assert_eq!(bb.hi, vec![f64::INFINITY, 1.5]);
        assert_eq!(BoxConfig::from_box(&bb), b);
    }

    #[test]
    fn syntax_error_has_path_and_offset() {
        let bad = FOLD.replace("x1 - x2\"]", "x1 - * x2\"]");
        let err = ModelConfig::from_json(&bad).unwrap().build().unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("parts[0].forward[1]"), "{msg}");
        assert!(msg.contains("at byte 5"), "{msg}");
    }

    #[test]
    fn unknown_field_has_path() {
        let bad = FOLD.replace("\"form\"", "\"shape\": 1, \"form\"");
        match ModelConfig::from_json(&bad).unwrap_err() {
            ConfigError::Json { path, .. } => assert_eq!(path, "density.shape"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn arity_mismatch_rejected() {
        let bad = FOLD.replace("[\"x1\", \"x1 - x2\"]", "[\"x1\"]");
        assert!(ModelConfig::from_json(&bad).unwrap().build().is_err());
    }
}
