//! Seeded random-hyperplane encoder.
//!
//! Plane coefficients are drawn from a ChaCha8 stream seeded with
//! `ChaCha8Rng::seed_from_u64(seed)`, sampled as standard normals with the
//! ziggurat sampler of `rand_distr`: first the 64 planes of the short code,
//! row by row, then the 256 planes of the long code. Bit `b` is 1 iff the dot
//! product of plane `b` with the input (summed in index order) is `>= 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{IngestError, Result};
use crate::model::{Code256, Code64};

pub const DEFAULT_DIMENSION: usize = 128;

/// A finite feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(IngestError::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct HyperplaneEncoder {
    seed: u64,
    dimension: usize,
    planes64: Vec<f64>,
    planes256: Vec<f64>,
}

impl HyperplaneEncoder {
    pub fn new(seed: u64, dimension: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let planes64 = draw(64 * dimension);
        let planes256 = draw(256 * dimension);
        Self {
            seed,
            dimension,
            planes64,
            planes256,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Row `b` of the 64-plane matrix.
    pub fn plane64(&self, b: usize) -> &[f64] {
        &self.planes64[b * self.dimension..(b + 1) * self.dimension]
    }

    pub fn plane256(&self, b: usize) -> &[f64] {
        &self.planes256[b * self.dimension..(b + 1) * self.dimension]
    }

    pub fn encode(&self, v: &FeatureVector) -> Result<(Code64, Code256)> {
        if v.dimension() != self.dimension {
            return Err(IngestError::DimensionMismatch {
                expected: self.dimension,
                found: v.dimension(),
            });
        }
        let values = v.values();
        let mut code64 = 0u64;
        for b in 0..64 {
            if dot(self.plane64(b), values) >= 0.0 {
                code64 |= 1 << b;
            }
        }
        let mut code256 = [0u64; 4];
        for b in 0..256 {
            if dot(self.plane256(b), values) >= 0.0 {
                code256[b / 64] |= 1 << (b % 64);
            }
        }
        Ok((Code64(code64), Code256(code256)))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
