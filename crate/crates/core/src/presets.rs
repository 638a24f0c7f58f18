//! Bundled example models.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::{
    BoxConfig, Bound, BranchConfig, ConfigError, DensityConfig, ModelConfig, PartConfig, RegionConfig,
};

/// Environment variable naming a directory of preset JSON files that
/// replaces the bundled set.
pub const PRESET_DIR_ENV: &str = "INFOLOSS_PRESET_DIR";

const BUNDLED: &[(&str, &str)] = &[
    ("identity", include_str!("../presets/identity.json")),
    ("ex1_fold_square", include_str!("../presets/ex1_fold_square.json")),
    ("ex2_square_gaussian", include_str!("../presets/ex2_square_gaussian.json")),
    ("ex3_exp_sawtooth", include_str!("../presets/ex3_exp_sawtooth.json")),
    ("ex4_polar_unitdisc", include_str!("../presets/ex4_polar_unitdisc.json")),
    ("ex5_radius_only", include_str!("../presets/ex5_radius_only.json")),
    ("ex6_triangle_abs_m0", include_str!("../presets/ex6_triangle_abs_m0.json")),
    ("ex6_triangle_abs_m1", include_str!("../presets/ex6_triangle_abs_m1.json")),
    ("ex6_triangle_abs_m2", include_str!("../presets/ex6_triangle_abs_m2.json")),
    ("quantizer_uniform", include_str!("../presets/quantizer_uniform.json")),
    ("quantizer_gaussian", include_str!("../presets/quantizer_gaussian.json")),
    ("limiter_gaussian", include_str!("../presets/limiter_gaussian.json")),
];

/// Names of the bundled presets.
pub fn names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

/// A bundled preset by file stem, `name` or alias.
pub fn bundled(key: &str) -> Option<ModelConfig> {
    BUNDLED.iter().find_map(|(stem, text)| {
        let c = ModelConfig::from_json(text).expect("bundled preset parses");
        matches(stem, &c, key).then_some(c)
    })
}

/// All bundled presets, in listing order.
pub fn all() -> Vec<ModelConfig> {
    BUNDLED
        .iter()
        .map(|(_, t)| ModelConfig::from_json(t).expect("bundled preset parses"))
        .collect()
}

fn matches(stem: &str, c: &ModelConfig, key: &str) -> bool {
    stem == key || c.name.as_deref() == Some(key) || c.aliases.iter().any(|a| a == key)
}

fn search_dir(dir: &Path, key: &str) -> Result<Option<ModelConfig>, ConfigError> {
    let entries = std::fs::read_dir(dir).map_err(|source| ConfigError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    for f in files {
        let c = ModelConfig::from_path(&f)?;
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if matches(stem, &c, key) {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

/// Loads `arg` as a file path if it exists, otherwise as a preset looked up
/// by the file stem of `arg` (so `presets/ex1.json` finds the `ex1` alias).
pub fn resolve(arg: &str) -> Result<ModelConfig, ConfigError> {
    let path = Path::new(arg);
    if path.is_file() {
        return ModelConfig::from_path(path);
    }
    let key = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(arg)
        .to_string();
    let found = match std::env::var_os(PRESET_DIR_ENV) {
        Some(dir) => search_dir(Path::new(&dir), &key)?,
        None => bundled(&key),
    };
    found.ok_or_else(|| ConfigError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, format!("no such file or preset `{key}`")),
    })
}

/// Uniform triangle `{x1 in [m-a, m+a], x2 in [-m-a, -x1]}` mapped to
/// `(|x1|, |x2|)`, split into the three sign quadrants it meets.
pub fn triangle_abs(m: f64, a: f64, tag: &str) -> ModelConfig {
    let (lo1, hi1, lo2, hi2) = (m - a, m + a, -m - a, a - m);
    let bbox = BoxConfig {
        lo: vec![Bound::Num(lo1), Bound::Num(lo2)],
        hi: vec![Bound::Num(hi1), Bound::Num(hi2)],
    };
    let branch = |pred: &str, f: [&str; 2], inv: [&str; 2]| {
        PartConfig::Branch(BranchConfig {
            region: RegionConfig {
                predicate: pred.into(),
                bbox: Some(bbox.clone()),
            },
            forward: f.iter().map(|s| s.to_string()).collect(),
            inverse: Some(inv.iter().map(|s| s.to_string()).collect()),
            jac_abs_det: Some("1".into()),
            kind: crate::model::BranchKind::Bijective,
        })
    };
    let mut aliases = vec![format!("ex6_{tag}")];
    if tag == "m1" {
        aliases.push("ex6".into());
    }
    ModelConfig {
        name: Some(format!("ex6_triangle_abs_{tag}")),
        description: Some(format!(
            "Uniform triangle with m = {m:?}, a = {a:?} mapped to (|x1|, |x2|); loss is 1 - m^2/a^2."
        )),
        aliases,
        dim: 2,
        density: DensityConfig {
            form: "uniform_region".into(),
            params: BTreeMap::from([("volume".to_string(), 2.0 * a * a)]),
            support: Some(RegionConfig {
                predicate: format!("x1 >= {lo1:?} and x1 <= {hi1:?} and x2 >= {lo2:?} and x2 <= -x1"),
                bbox: Some(bbox.clone()),
            }),
            pdf: None,
            pdf_bound: None,
            exact_diffent_bits: None,
        },
        parts: vec![
            branch("x1 <= 0 and x2 >= 0", ["-x1", "x2"], ["-y1", "y2"]),
            branch("x1 <= 0 and x2 < 0", ["-x1", "-x2"], ["-y1", "-y2"]),
            branch("x1 > 0 and x2 < 0", ["x1", "-x2"], ["y1", "-y2"]),
        ],
        analysis: crate::config::AnalysisConfig {
            output_box: Some(BoxConfig {
                lo: vec![Bound::Num(0.0), Bound::Num(0.0)],
                hi: vec![Bound::Num(m + a), Bound::Num(m + a)],
            }),
            ..Default::default()
        },
    }
}
