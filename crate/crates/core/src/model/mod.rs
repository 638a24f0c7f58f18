//! Piecewise maps `g`, their parts, and the input density.

mod density;
mod validate;

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use density::{DensityForm, InputDensity};
pub use validate::{validate, PartValidation, ValidationReport};
pub(crate) use validate::kind_check;

use crate::error::{Error, Result};
use crate::expr::{parse, BinaryOp, CompiledExpr, Expr, VarLayout};
use crate::geometry::Region;
use crate::slots::{Slots, MAX_DIM};

/// Jacobian determinants below this are treated as singular.
pub const SINGULAR_JACOBIAN: f64 = 1e-12;
/// Default cap on enumerated family members.
pub const DEFAULT_K_MAX: usize = 64;
/// Family enumeration for `f_Y` stops once the estimated tail is below this
/// fraction of the running sum.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
/// Default preimage matching tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Bijective,
    ConstantPoint,
    RankDeficient,
}

impl BranchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchKind::Bijective => "bijective",
            BranchKind::ConstantPoint => "constant_point",
            BranchKind::RankDeficient => "rank_deficient",
        }
    }
}

/// One piece `g_i : X_i -> Y_i`.
///
/// Expressions may use `k`, which is bound to the member index when the
/// branch is the template of a [`BranchFamily`] and to 0 otherwise.
#[derive(Clone, Debug)]
pub struct Branch {
    region: Region,
    forward: Vec<CompiledExpr>,
    inverse: Option<Vec<CompiledExpr>>,
    jac_abs_det: Option<CompiledExpr>,
    kind: BranchKind,
}

fn check_vars(e: &Expr, allowed: char, what: &str, dim: usize) -> Result<()> {
    for v in e.free_vars() {
        let ok = v == "k"
            || (v.starts_with(allowed)
                && v[1..].parse::<usize>().is_ok_and(|i| (1..=dim).contains(&i)));
        if !ok {
            return Err(Error::model(format!(
                "{what} `{e}` uses `{v}`; allowed are {allowed}1..{allowed}{dim} and k"
            )));
        }
    }
    Ok(())
}

impl Branch {
    pub fn new(
        region: Region,
        forward: Vec<Expr>,
        inverse: Option<Vec<Expr>>,
        jac_abs_det: Option<Expr>,
        kind: BranchKind,
    ) -> Result<Self> {
        let dim = region.dim();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::model(format!("dimension must be in 1..={MAX_DIM}")));
        }
        if forward.len() != dim {
            return Err(Error::model(format!(
                "forward has {} components, expected {dim}",
                forward.len()
            )));
        }
        let layout = VarLayout::model(dim);
        check_vars(region.predicate(), 'x', "region", dim)?;
        for f in &forward {
            check_vars(f, 'x', "forward", dim)?;
        }
        if let Some(j) = &jac_abs_det {
            check_vars(j, 'x', "jac_abs_det", dim)?;
        }
        let inverse = match inverse {
            Some(inv) => {
                if inv.len() != dim {
                    return Err(Error::model(format!(
                        "inverse has {} components, expected {dim}",
                        inv.len()
                    )));
                }
                for e in &inv {
                    check_vars(e, 'y', "inverse", dim)?;
                }
                Some(
                    inv.iter()
                        .map(|e| CompiledExpr::new(e, &layout))
                        .collect::<std::result::Result<Vec<_>, _>>()?,
                )
            }
            None => None,
        };
        if kind == BranchKind::Bijective && inverse.is_none() {
            return Err(Error::model("bijective branches need an inverse"));
        }
        Ok(Self {
            region,
            forward: forward
                .iter()
                .map(|e| CompiledExpr::new(e, &layout))
                .collect::<std::result::Result<Vec<_>, _>>()?,
            inverse,
            jac_abs_det: jac_abs_det
                .map(|e| CompiledExpr::new(&e, &layout))
                .transpose()?,
            kind,
        })
    }

    /// Convenience constructor from expression strings.
    pub fn parse(
        region: Region,
        forward: &[&str],
        inverse: Option<&[&str]>,
        jac_abs_det: Option<&str>,
        kind: BranchKind,
    ) -> Result<Self> {
        let fwd = forward.iter().map(|s| parse(s)).collect::<std::result::Result<Vec<_>, _>>()?;
        let inv = inverse
            .map(|v| v.iter().map(|s| parse(s)).collect::<std::result::Result<Vec<_>, _>>())
            .transpose()?;
        let jac = jac_abs_det.map(parse).transpose()?;
        Self::new(region, fwd, inv, jac, kind)
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn kind(&self) -> BranchKind {
        self.kind
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    pub fn has_jac_expr(&self) -> bool {
        self.jac_abs_det.is_some()
    }

    pub fn forward_exprs(&self) -> Vec<&Expr> {
        self.forward.iter().map(|c| c.source()).collect()
    }

    pub fn inverse_exprs(&self) -> Option<Vec<&Expr>> {
        self.inverse
            .as_ref()
            .map(|v| v.iter().map(|c| c.source()).collect())
    }

    pub fn jac_expr(&self) -> Option<&Expr> {
        self.jac_abs_det.as_ref().map(|c| c.source())
    }

    pub fn contains(&self, x: &[f64], k: f64) -> Result<bool> {
        self.region.contains_k(x, k)
    }

    pub fn forward(&self, x: &[f64], k: f64) -> Result<Vec<f64>> {
        let slots = Slots::from_x(x, k);
        self.forward
            .iter()
            .map(|f| Ok(f.eval(slots.as_slice())?))
            .collect()
    }

    /// Branch inverse at `y`; `None` for branches declared without one.
    pub fn inverse(&self, y: &[f64], k: f64) -> Result<Option<Vec<f64>>> {
        let Some(inv) = &self.inverse else {
            return Ok(None);
        };
        let slots = Slots::from_y(y, k);
        inv.iter()
            .map(|f| Ok(f.eval(slots.as_slice())?))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Default central-difference step at `x`.
    pub fn default_step(x: &[f64]) -> f64 {
        let norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        1e-5 * norm.max(1.0)
    }

    /// Central-difference Jacobian of the forward expressions.
    pub fn numeric_jacobian(&self, x: &[f64], k: f64, h: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut jac = DMatrix::zeros(n, n);
        let mut slots = Slots::from_x(x, k);
        for j in 0..n {
            slots.x_mut()[j] = x[j] + h;
            let plus: Vec<f64> = self
                .forward
                .iter()
                .map(|f| f.eval(slots.as_slice()))
                .collect::<std::result::Result<_, _>>()?;
            slots.x_mut()[j] = x[j] - h;
            let minus: Vec<f64> = self
                .forward
                .iter()
                .map(|f| f.eval(slots.as_slice()))
                .collect::<std::result::Result<_, _>>()?;
            slots.x_mut()[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    pub fn numeric_jac_abs_det(&self, x: &[f64], k: f64, h: f64) -> Result<f64> {
        Ok(self.numeric_jacobian(x, k, h)?.determinant().abs())
    }

    /// `|det J_g(x)|` from the user expression if present, else numerically.
    pub fn jac_abs_det(&self, x: &[f64], k: f64, h: Option<f64>) -> Result<f64> {
        let value = match &self.jac_abs_det {
            Some(j) => j.eval(Slots::from_x(x, k).as_slice())?.abs(),
            None => self.numeric_jac_abs_det(x, k, h.unwrap_or_else(|| Self::default_step(x)))?,
        };
        if !(value >= SINGULAR_JACOBIAN) || !value.is_finite() {
            return Err(Error::SingularJacobian {
                x: x.to_vec(),
                value,
            });
        }
        Ok(value)
    }

    fn mapped(&self, forward_map: impl Fn(&Expr, usize) -> Expr, inverse_sub: &HashMap<String, Expr>, jac_scale: f64) -> Result<Self> {
        let forward = self
            .forward
            .iter()
            .enumerate()
            .map(|(i, f)| forward_map(f.source(), i))
            .collect();
        let inverse = self
            .inverse
            .as_ref()
            .map(|inv| inv.iter().map(|e| e.source().substitute(inverse_sub)).collect());
        let jac = self.jac_abs_det.as_ref().map(|j| {
            Expr::binary(BinaryOp::Mul, j.source().clone(), Expr::Num(jac_scale))
        });
        Self::new(self.region.clone(), forward, inverse, jac, self.kind)
    }
}

/// Index range of a branch family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KRange {
    Finite { lo: i64, hi: i64 },
    LowerBounded { lo: i64 },
}

impl KRange {
    pub fn lo(&self) -> i64 {
        match *self {
            KRange::Finite { lo, .. } | KRange::LowerBounded { lo } => lo,
        }
    }

    pub fn contains(&self, k: i64) -> bool {
        match *self {
            KRange::Finite { lo, hi } => (lo..=hi).contains(&k),
            KRange::LowerBounded { lo } => k >= lo,
        }
    }

    /// Number of members, `None` when unbounded.
    pub fn len(&self) -> Option<u64> {
        match *self {
            KRange::Finite { lo, hi } => Some((hi - lo + 1).max(0) as u64),
            KRange::LowerBounded { .. } => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }
}

/// Countable family of branches indexed by an integer `k`.
#[derive(Clone, Debug)]
pub struct BranchFamily {
    template: Branch,
    index_of: CompiledExpr,
    k_range: KRange,
}

impl BranchFamily {
    /// `template`'s region, maps and Jacobian are read with `k` bound to the
    /// member index; `index_of(x)` must return the member containing `x`.
    pub fn new(template: Branch, index_of: Expr, k_range: KRange) -> Result<Self> {
        if k_range.is_empty() {
            return Err(Error::model("k_range is empty"));
        }
        let dim = template.dim();
        check_vars(&index_of, 'x', "index_of", dim)?;
        if index_of.free_vars().contains("k") {
            return Err(Error::model("index_of cannot depend on k"));
        }
        Ok(Self {
            index_of: CompiledExpr::new(&index_of, &VarLayout::model(dim))?,
            template,
            k_range,
        })
    }

    pub fn template(&self) -> &Branch {
        &self.template
    }

    pub fn k_range(&self) -> KRange {
        self.k_range
    }

    pub fn index_expr(&self) -> &Expr {
        self.index_of.source()
    }

    /// Integer value of `index_of(x)`.
    pub fn index_at(&self, x: &[f64]) -> Result<i64> {
        let v = self.index_of.eval(Slots::from_x(x, 0.0).as_slice())?;
        let r = v.round();
        if (v - r).abs() > 1e-6 || !r.is_finite() {
            return Err(Error::model(format!(
                "index_of `{}` returned non-integer {v}",
                self.index_of.source()
            )));
        }
        Ok(r as i64)
    }

    /// Member containing `x`, if any.
    pub fn member_of(&self, x: &[f64]) -> Result<Option<i64>> {
        let k = self.index_at(x)?;
        if self.k_range.contains(k) && self.template.contains(x, k as f64)? {
            Ok(Some(k))
        } else {
            Ok(None)
        }
    }
}

#[derive(Clone, Debug)]
pub enum Part {
    Branch(Branch),
    Family(BranchFamily),
}

impl Part {
    /// The branch (or family template) carrying region, maps and kind.
    pub fn branch(&self) -> &Branch {
        match self {
            Part::Branch(b) => b,
            Part::Family(f) => &f.template,
        }
    }

    pub fn kind(&self) -> BranchKind {
        self.branch().kind
    }
}

/// Identifies a branch, or one member of a family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartId {
    /// Zero-based position in the part list.
    pub part: usize,
    /// Family member index.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<i64>,
}

impl PartId {
    pub fn branch(part: usize) -> Self {
        Self { part, k: None }
    }

    pub fn member(part: usize, k: i64) -> Self {
        Self { part, k: Some(k) }
    }

    pub fn k_value(&self) -> f64 {
        self.k.map_or(0.0, |k| k as f64)
    }
}

impl fmt::Display for PartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.k {
            None => write!(f, "part {}", self.part + 1),
            Some(k) => write!(f, "part {} (k={k})", self.part + 1),
        }
    }
}

/// Preimage enumeration limits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnumerationLimits {
    pub k_max: usize,
    pub tail_tol: f64,
    pub tol: f64,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            tail_tol: DEFAULT_TAIL_TOL,
            tol: DEFAULT_TOL,
        }
    }
}

/// Piecewise map `g` on `R^N`.
#[derive(Clone, Debug)]
pub struct PiecewiseMap {
    dim: usize,
    parts: Vec<Part>,
    limits: EnumerationLimits,
}

impl PiecewiseMap {
    pub fn new(dim: usize, parts: Vec<Part>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::model("a map needs at least one part"));
        }
        if let Some((i, _)) = parts.iter().enumerate().find(|(_, p)| p.branch().dim() != dim) {
            return Err(Error::model(format!("part {} has the wrong dimension", i + 1)));
        }
        Ok(Self {
            dim,
            parts,
            limits: EnumerationLimits::default(),
        })
    }

    pub fn with_limits(mut self, limits: EnumerationLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn limits(&self) -> EnumerationLimits {
        self.limits
    }

    pub fn is_all_bijective(&self) -> bool {
        self.parts.iter().all(|p| p.kind() == BranchKind::Bijective)
    }

    /// The branch for `id` and the value to bind to `k`.
    pub fn member(&self, id: PartId) -> (&Branch, f64) {
        (self.parts[id.part].branch(), id.k_value())
    }

    /// Every part (or family member) whose region contains `x`.
    pub fn containing_parts(&self, x: &[f64]) -> Result<Vec<PartId>> {
        let mut out = Vec::new();
        for (i, part) in self.parts.iter().enumerate() {
            match part {
                Part::Branch(b) => {
                    if b.contains(x, 0.0)? {
                        out.push(PartId::branch(i));
                    }
                }
                Part::Family(f) => {
                    if let Some(k) = f.member_of(x)? {
                        out.push(PartId::member(i, k));
                    }
                }
            }
        }
        Ok(out)
    }

    /// The unique part containing `x`.
    pub fn branch_index(&self, x: &[f64]) -> Result<PartId> {
        let found = self.containing_parts(x)?;
        match found.len() {
            0 => Err(Error::NoBranch { x: x.to_vec() }),
            1 => Ok(found[0]),
            _ => Err(Error::AmbiguousBranch {
                x: x.to_vec(),
                parts: found.iter().map(|p| p.to_string()).collect(),
            }),
        }
    }

    /// `g(x)`.
    pub fn forward_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let id = self.branch_index(x)?;
        let (b, k) = self.member(id);
        b.forward(x, k)
    }

    /// `|det J_g(x)|` on the branch containing `x`.
    pub fn jac_abs_det_at(&self, x: &[f64], h: Option<f64>) -> Result<f64> {
        let id = self.branch_index(x)?;
        let (b, k) = self.member(id);
        b.jac_abs_det(x, k, h)
    }

    /// The map `scale * g(x) + shift` applied componentwise.
    pub fn with_output_affine(&self, scale: f64, shift: f64) -> Result<Self> {
        if scale == 0.0 || !scale.is_finite() || !shift.is_finite() {
            return Err(Error::InvalidArgument("affine scale must be finite and nonzero".into()));
        }
        let wrap = |e: &Expr, _i: usize| {
            Expr::binary(
                BinaryOp::Add,
                Expr::binary(BinaryOp::Mul, Expr::Num(scale), e.clone()),
                Expr::Num(shift),
            )
        };
        let sub: HashMap<String, Expr> = (1..=self.dim)
            .map(|i| {
                let y = format!("y{i}");
                let e = Expr::binary(
                    BinaryOp::Div,
                    Expr::binary(BinaryOp::Sub, Expr::var(y.clone()), Expr::Num(shift)),
                    Expr::Num(scale),
                );
                (y, e)
            })
            .collect();
        let jac_scale = scale.abs().powi(self.dim as i32);
        let parts = self
            .parts
            .iter()
            .map(|p| {
                Ok(match p {
                    Part::Branch(b) => Part::Branch(b.mapped(wrap, &sub, jac_scale)?),
                    Part::Family(f) => Part::Family(BranchFamily {
                        template: f.template.mapped(wrap, &sub, jac_scale)?,
                        index_of: f.index_of.clone(),
                        k_range: f.k_range,
                    }),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim: self.dim,
            parts,
            limits: self.limits,
        })
    }
}
