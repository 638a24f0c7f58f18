//! Deterministic sampling, Monte-Carlo aggregation and tensor quadrature.

mod mc;
mod quadrature;
mod rng;
mod sampling;

pub use mc::{mc_expectation, run_chunked, Accumulator, MCResult, McPlan, Moments, CHUNK_SIZE};
pub use quadrature::{tensor_quadrature, tensor_quadrature_grid};
pub use rng::{mix64, CounterRng};
pub use sampling::{sample_density, sample_point, SampleBatch, MAX_REJECTIONS};
