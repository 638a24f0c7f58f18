use std::f64::consts::{E, PI};

use crate::error::{Error, Result};
use crate::expr::{CompiledExpr, Expr, VarLayout};
use crate::geometry::{BoundingBox, Region};
use crate::slots::Slots;

/// How the input density is defined.
#[derive(Clone, Debug)]
pub enum DensityForm {
    /// Uniform on the support bounding box.
    UniformBox,
    /// Uniform on the support region of the given volume.
    UniformRegion { volume: f64 },
    /// Independent normal coordinates.
    GaussianIid { mean: f64, std: f64 },
    /// Independent exponential coordinates on `[0, inf)`.
    Exponential { rate: f64 },
    /// User pdf with an upper bound for rejection sampling.
    Expression { pdf: CompiledExpr, bound: f64 },
}

impl DensityForm {
    pub fn name(&self) -> &'static str {
        match self {
            DensityForm::UniformBox => "uniform_box",
            DensityForm::UniformRegion { .. } => "uniform_region",
            DensityForm::GaussianIid { .. } => "gaussian_iid",
            DensityForm::Exponential { .. } => "exponential",
            DensityForm::Expression { .. } => "expression",
        }
    }
}

/// Input density `f_X`: zero outside `support`.
#[derive(Clone, Debug)]
pub struct InputDensity {
    dim: usize,
    form: DensityForm,
    support: Region,
    exact_diffent_bits: Option<f64>,
}

fn axis_predicate(dim: usize, lo: &[f64], hi: &[f64]) -> String {
    let mut terms = Vec::new();
    for d in 0..dim {
        if lo[d].is_finite() {
            terms.push(format!("x{} >= {:?}", d + 1, lo[d]));
        }
        if hi[d].is_finite() {
            terms.push(format!("x{} <= {:?}", d + 1, hi[d]));
        }
    }
    if terms.is_empty() {
        "1".to_string()
    } else {
        terms.join(" and ")
    }
}

impl InputDensity {
    pub fn uniform_box(bbox: BoundingBox) -> Result<Self> {
        if !bbox.is_bounded() {
            return Err(Error::model("uniform_box needs a bounded box"));
        }
        let pred = axis_predicate(bbox.dim(), &bbox.lo, &bbox.hi);
        let h = bbox.volume().log2();
        Ok(Self {
            dim: bbox.dim(),
            form: DensityForm::UniformBox,
            support: Region::parse(&pred, bbox)?,
            exact_diffent_bits: Some(h),
        })
    }

    pub fn uniform_region(support: Region, volume: f64) -> Result<Self> {
        if !(volume > 0.0 && volume.is_finite()) {
            return Err(Error::model("uniform_region volume must be positive and finite"));
        }
        if !support.bbox().is_bounded() {
            return Err(Error::model("uniform_region needs a bounded support box"));
        }
        Ok(Self {
            dim: support.dim(),
            form: DensityForm::UniformRegion { volume },
            support,
            exact_diffent_bits: Some(volume.log2()),
        })
    }

    pub fn gaussian_iid(dim: usize, mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::model("gaussian_iid needs finite mean and positive std"));
        }
        let h = 0.5 * (2.0 * PI * E * std * std).log2() * dim as f64;
        Ok(Self {
            dim,
            form: DensityForm::GaussianIid { mean, std },
            support: Region::parse("1", BoundingBox::unbounded(dim))?,
            exact_diffent_bits: Some(h),
        })
    }

    pub fn exponential(dim: usize, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::model("exponential rate must be positive"));
        }
        let lo = vec![0.0; dim];
        let hi = vec![f64::INFINITY; dim];
        let pred = axis_predicate(dim, &lo, &hi);
        let h = (E / rate).log2() * dim as f64;
        Ok(Self {
            dim,
            form: DensityForm::Exponential { rate },
            support: Region::parse(&pred, BoundingBox::new(lo, hi)?)?,
            exact_diffent_bits: Some(h),
        })
    }

    pub fn expression(pdf: &Expr, bound: f64, support: Region) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::model("pdf_bound must be positive and finite"));
        }
        if !support.bbox().is_bounded() {
            return Err(Error::model(
                "expression densities are rejection-sampled and need a bounded support box",
            ));
        }
        let layout = VarLayout::model(support.dim());
        if let Some(v) = pdf.free_vars().iter().find(|v| !v.starts_with('x')) {
            return Err(Error::model(format!("pdf may only use x variables, found `{v}`")));
        }
        Ok(Self {
            dim: support.dim(),
            form: DensityForm::Expression {
                pdf: CompiledExpr::new(pdf, &layout)?,
                bound,
            },
            support,
            exact_diffent_bits: None,
        })
    }

    /// Replaces the closed-form differential entropy (bits).
    pub fn with_exact_diffent(mut self, bits: Option<f64>) -> Self {
        if bits.is_some() {
            self.exact_diffent_bits = bits;
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn form(&self) -> &DensityForm {
        &self.form
    }

    pub fn support(&self) -> &Region {
        &self.support
    }

    pub fn exact_diffent_bits(&self) -> Option<f64> {
        self.exact_diffent_bits
    }

    pub fn in_support(&self, x: &[f64]) -> Result<bool> {
        self.support.contains(x)
    }

    /// `f_X(x)`; zero outside the support.
    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        if !self.support.contains(x)? {
            return Ok(0.0);
        }
        self.pdf_in_support(x)
    }

    /// Density formula without the support test.
    pub(crate) fn pdf_in_support(&self, x: &[f64]) -> Result<f64> {
        Ok(match &self.form {
            DensityForm::UniformBox => 1.0 / self.support.bbox().volume(),
            DensityForm::UniformRegion { volume } => 1.0 / volume,
            DensityForm::GaussianIid { mean, std } => x
                .iter()
                .map(|v| {
                    let z = (v - mean) / std;
                    (-0.5 * z * z).exp() / (std * (2.0 * PI).sqrt())
                })
                .product(),
            DensityForm::Exponential { rate } => x
                .iter()
                .map(|v| if *v < 0.0 { 0.0 } else { rate * (-rate * v).exp() })
                .product(),
            DensityForm::Expression { pdf, .. } => {
                let v = pdf.eval(Slots::from_x(x, 0.0).as_slice())?;
                if v < 0.0 || v.is_nan() {
                    return Err(Error::model(format!("pdf is negative ({v}) at x = {x:?}")));
                }
                v
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn uniform_box_pdf() {
        let d = InputDensity::uniform_box(BoundingBox::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap())
            .unwrap();
        assert_eq!(d.pdf(&[0.5, -1.0]).unwrap(), 1.0 / 16.0);
        assert_eq!(d.pdf(&[2.5, 0.0]).unwrap(), 0.0);
        assert_eq!(d.exact_diffent_bits(), Some(4.0));
    }

    #[test]
    fn gaussian_pdf_and_entropy() {
        let d = InputDensity::gaussian_iid(1, 0.0, 1.0).unwrap();
        assert!((d.pdf(&[0.0]).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        let h = d.exact_diffent_bits().unwrap();
        assert!((h - 0.5 * (2.0 * PI * E).log2()).abs() < 1e-15);
        assert!((h - 2.047).abs() < 1e-3);
    }

    #[test]
    fn exponential_support() {
        let d = InputDensity::exponential(1, 1.5).unwrap();
        assert_eq!(d.pdf(&[-0.1]).unwrap(), 0.0);
        assert_eq!(d.pdf(&[0.0]).unwrap(), 1.5);
    }

    #[test]
    fn expression_pdf_rejects_negative_values() {
        let support = Region::parse("x1 >= -1 and x1 <= 1", BoundingBox::new(vec![-1.0], vec![1.0]).unwrap())
            .unwrap();
        let d = InputDensity::expression(&parse("x1").unwrap(), 1.0, support).unwrap();
        assert!(d.pdf(&[-0.5]).is_err());
        assert_eq!(d.pdf(&[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn expression_pdf_needs_bounded_support() {
        let support = Region::parse("1", BoundingBox::unbounded(1)).unwrap();
        assert!(InputDensity::expression(&parse("0.5*exp(-abs(x1))").unwrap(), 0.5, support).is_err());
    }
}
