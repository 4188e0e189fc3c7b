use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::encoding::EncodedMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Additive Gaussian noise applied to duplicated rows.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub alpha: f64,
}

impl NoiseConfig {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn gaussian(alpha: f64) -> Self {
        Self {
            enabled: true,
            alpha,
        }
    }

    pub fn is_active(&self) -> bool {
        self.enabled && self.alpha > 0.0
    }
}

/// Repeats the encoded rows into shuffled training and test matrices.
pub fn duplicate_and_split<T: Scalar>(
    m: &EncodedMatrix<T>,
    train_dup: usize,
    test_dup: usize,
    noise: NoiseConfig,
    seed: u64,
) -> Result<(Matrix<T>, Matrix<T>)> {
    duplicate_rows(&m.rows, train_dup, test_dup, noise, seed)
}

pub(crate) fn duplicate_rows<T: Scalar>(
    rows: &Matrix<T>,
    train_dup: usize,
    test_dup: usize,
    noise: NoiseConfig,
    seed: u64,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if train_dup == 0 || test_dup == 0 {
        return Err(Error::invalid("duplication counts must be at least 1"));
    }
    if !(noise.alpha >= 0.0) {
        return Err(Error::invalid("noise alpha must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut build = |dup: usize| -> Matrix<T> {
        let mut idx: Vec<usize> = (0..rows.rows() * dup).map(|i| i % rows.rows()).collect();
        idx.shuffle(&mut rng);
        let mut out = rows.select_rows(&idx);
        if noise.is_active() {
            let normal = Normal::new(0.0, noise.alpha).expect("alpha validated");
            for v in out.as_mut_slice() {
                let x = v.as_f64() + normal.sample(&mut rng);
                *v = T::lit(x.clamp(0.0, 1.0));
            }
        }
        out
    };
    let train = build(train_dup);
    let test = build(test_dup);
    Ok((train, test))
}
