use statrs::distribution::{ContinuousCDF, Normal};

use super::mc::{run_chunked, Accumulator, McPlan};
use super::rng::CounterRng;
use crate::error::{Error, Result};
use crate::model::{DensityForm, InputDensity};

/// Rejection samplers give up after this many consecutive misses.
pub const MAX_REJECTIONS: u64 = 10_000_000;

/// One draw from `d` and the number of proposals it took.
pub fn sample_point(d: &InputDensity, rng: &mut CounterRng) -> Result<(Vec<f64>, u64)> {
    let bbox = d.support().bbox();
    match d.form() {
        DensityForm::UniformBox => Ok((bbox.draw(rng), 1)),
        DensityForm::GaussianIid { mean, std } => {
            let normal = Normal::standard();
            let x = (0..d.dim())
                .map(|_| mean + std * normal.inverse_cdf(rng.open_uniform()))
                .collect();
            Ok((x, 1))
        }
        DensityForm::Exponential { rate } => {
            let x = (0..d.dim())
                .map(|_| -(1.0 - rng.uniform()).ln() / rate)
                .collect();
            Ok((x, 1))
        }
        DensityForm::UniformRegion { .. } => {
            for attempt in 1..=MAX_REJECTIONS {
                let x = bbox.draw(rng);
                if d.support().contains(&x)? {
                    return Ok((x, attempt));
                }
            }
            Err(Error::SamplingStalled {
                attempts: MAX_REJECTIONS,
            })
        }
        DensityForm::Expression { bound, .. } => {
            for attempt in 1..=MAX_REJECTIONS {
                let x = bbox.draw(rng);
                let u = rng.uniform() * bound;
                let p = d.pdf(&x)?;
                if p > *bound {
                    return Err(Error::BoundViolation {
                        x,
                        value: p,
                        bound: *bound,
                    });
                }
                if u < p {
                    return Ok((x, attempt));
                }
            }
            Err(Error::SamplingStalled {
                attempts: MAX_REJECTIONS,
            })
        }
    }
}

/// Points drawn by [`sample_density`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleBatch {
    pub points: Vec<Vec<f64>>,
    pub proposals: u64,
}

impl SampleBatch {
    /// Accepted points per proposal (1 for inverse-CDF samplers).
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            return 1.0;
        }
        self.points.len() as f64 / self.proposals as f64
    }
}

impl Accumulator for SampleBatch {
    fn merge(&mut self, mut later: Self) {
        self.points.append(&mut later.points);
        self.proposals += later.proposals;
    }
}

/// `n` i.i.d. draws from `d`, laid out exactly as the estimators see them.
pub fn sample_density(d: &InputDensity, n: u64, seed: u64) -> Result<SampleBatch> {
    let plan = McPlan::new(n, seed);
    run_chunked(&plan, SampleBatch::default, |acc, rng| {
        let (x, tries) = sample_point(d, rng)?;
        acc.points.push(x);
        acc.proposals += tries;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::geometry::{BoundingBox, Region};

    fn mean_var(xs: impl Iterator<Item = f64>) -> (f64, f64, usize) {
        let v: Vec<f64> = xs.collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, var, v.len())
    }

    #[test]
    fn exponential_mean() {
        let d = InputDensity::exponential(1, 1.5).unwrap();
        let b = sample_density(&d, 1_000_000, 4).unwrap();
        let (m, _, n) = mean_var(b.points.iter().map(|p| p[0]));
        let sigma = (1.0 / 1.5) / (n as f64).sqrt();
        assert!((m - 1.0 / 1.5).abs() < 3.0 * sigma, "{m}");
        assert_eq!(b.acceptance_rate(), 1.0);
    }

    #[test]
    fn disc_rejection_acceptance() {
        let bb = BoundingBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let support = Region::parse("x1^2 + x2^2 <= 1", bb).unwrap();
        let d = InputDensity::uniform_region(support, std::f64::consts::PI).unwrap();
        let b = sample_density(&d, 200_000, 5).unwrap();
        let p = std::f64::consts::FRAC_PI_4;
        let sigma = (p * (1.0 - p) / b.proposals as f64).sqrt();
        assert!((b.acceptance_rate() - p).abs() < 4.0 * sigma, "{}", b.acceptance_rate());
        assert!(b.points.iter().all(|x| x[0] * x[0] + x[1] * x[1] <= 1.0));
    }

    #[test]
    fn gaussian_variance() {
        let d = InputDensity::gaussian_iid(1, 0.0, 1.0).unwrap();
        let b = sample_density(&d, 1_000_000, 6).unwrap();
        let (m, var, n) = mean_var(b.points.iter().map(|p| p[0]));
        // var of the sample variance is 2 sigma^4 / (n - 1)
        let sigma_var = (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((var - 1.0).abs() < 3.0 * sigma_var, "{var}");
        assert!(m.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn expression_bound_violation() {
        let bb = BoundingBox::new(vec![0.0], vec![1.0]).unwrap();
        let support = Region::parse("x1 >= 0 and x1 <= 1", bb).unwrap();
        let d = InputDensity::expression(&parse("2*x1").unwrap(), 1.0, support).unwrap();
        assert!(matches!(
            sample_density(&d, 1000, 1),
            Err(Error::BoundViolation { .. })
        ));
    }

    #[test]
    fn expression_rejection_matches_pdf() {
        let bb = BoundingBox::new(vec![0.0], vec![1.0]).unwrap();
        let support = Region::parse("x1 >= 0 and x1 <= 1", bb).unwrap();
        let d = InputDensity::expression(&parse("2*x1").unwrap(), 2.0, support).unwrap();
        let b = sample_density(&d, 100_000, 2).unwrap();
        let (m, _, n) = mean_var(b.points.iter().map(|p| p[0]));
        // E[X] = 2/3, Var = 1/18
        assert!((m - 2.0 / 3.0).abs() < 3.0 * (1.0f64 / 18.0 / n as f64).sqrt());
        assert!((b.acceptance_rate() - 0.5).abs() < 0.01);
    }

    #[test]
    fn batch_layout_is_reproducible() {
        let d = InputDensity::gaussian_iid(2, 0.0, 1.0).unwrap();
        let a = sample_density(&d, 70_000, 9).unwrap();
        let b = sample_density(&d, 70_000, 9).unwrap();
        assert_eq!(a, b);
        // the first point is drawn from chunk 0, stream 0
        let (x0, _) = sample_point(&d, &mut CounterRng::new(9, 0)).unwrap();
        assert_eq!(a.points[0], x0);
        let (x1, _) = sample_point(&d, &mut CounterRng::new(10, 0)).unwrap();
        assert_eq!(a.points[1 << 16], x1);
    }
}
