//! Reference factor spaces and a synthetic response for end-to-end studies.
//!
//! The nine-factor space tunes two convolution blocks: filters `n1`/`n2`
//! (log scale), kernel sizes `k1`/`k2`, activations `a1`/`a2`, pool sizes
//! `p1`/`p2` and a dropout rate `d`. Filters and kernel sizes are continuous
//! so decoded designs may fall between the declared levels.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constraint::{parse_constraint, ConstraintExpr};
use crate::design::{build_full_factorial, ColumnMap, Design, FactorKind, FactorSpec, Level, Transform};
use crate::error::{Error, Result};

pub const FILTER_LEVELS: [f64; 5] = [8.0, 32.0, 128.0, 512.0, 2048.0];
pub const KERNEL_LEVELS: [f64; 3] = [3.0, 5.0, 7.0];
pub const POOL_LEVELS: [f64; 2] = [2.0, 4.0];
pub const DROPOUT_LEVELS: [f64; 2] = [0.25, 0.50];
pub const ACTIVATIONS: [&str; 2] = ["relu", "tanh"];

/// `n1, k1, a1, p1, n2, k2, a2, p2, d`.
pub fn cnn_factors() -> Vec<FactorSpec> {
    let filters = |name: &str| {
        FactorSpec::numeric(name, FactorKind::NumericContinuous, &FILTER_LEVELS)
            .and_then(|f| f.with_transform(Transform::Log10))
            .expect("static levels")
    };
    let kernel = |name: &str| FactorSpec::continuous(name, &KERNEL_LEVELS).expect("static levels");
    let act = |name: &str| FactorSpec::categorical(name, &ACTIVATIONS).expect("static levels");
    let pool = |name: &str| FactorSpec::discrete(name, &POOL_LEVELS).expect("static levels");
    vec![
        filters("n1"),
        kernel("k1"),
        act("a1"),
        pool("p1"),
        filters("n2"),
        kernel("k2"),
        act("a2"),
        pool("p2"),
        FactorSpec::discrete("d", &DROPOUT_LEVELS).expect("static levels"),
    ]
}

/// The funnel constraints `n1 > n2` and `k1 >= k2`.
pub fn cnn_constraints(factors: &[FactorSpec]) -> Result<Vec<ConstraintExpr>> {
    ["n1 > n2", "k1 >= k2"]
        .iter()
        .map(|c| parse_constraint(c, factors))
        .collect()
}

/// Two-level full factorial on `F1..Fk`, levels −1 and 1.
pub fn two_level_factorial(k: usize) -> Result<Design> {
    if k == 0 {
        return Err(Error::invalid("need at least one factor"));
    }
    let factors = (1..=k)
        .map(|i| FactorSpec::discrete(&format!("F{i}"), &[-1.0, 1.0]))
        .collect::<Result<Vec<_>>>()?;
    build_full_factorial(&factors)
}

/// One Gaussian bump over normalized factor levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Response at the center.
    pub height: f64,
    /// Center per factor, in normalized units.
    pub center: Vec<f64>,
    /// Width per factor, in normalized units.
    pub scale: Vec<f64>,
}

impl Peak {
    fn shape(&self, x: &[f64]) -> f64 {
        let q: f64 = x
            .iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((v, c), s)| ((v - c) / s).powi(2))
            .sum();
        (-0.5 * q).exp()
    }
}

/// Response `floor + max_k (height_k − floor)·exp(−½ Σ ((x − c_k)/s_k)²)`
/// over normalized levels `x` (numeric factors scaled to [0,1] on their
/// transformed range, categorical ones as level index), with Gaussian
/// replicate noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticResponse {
    pub factors: Vec<FactorSpec>,
    pub floor: f64,
    pub peaks: Vec<Peak>,
    pub noise_sd: f64,
}

impl SyntheticResponse {
    /// Accuracy-like response over [`cnn_factors`] with two maxima.
    ///
    /// The global maximum (98.8) sits at n1 = 512, k1 = 7, relu, p1 = 4,
    /// n2 = 32, k2 = 5, tanh, p2 = 4, d = 0.25; the local one (97.6) at
    /// n1 = 128, k1 = 5, tanh, p1 = 2, n2 = 8, k2 = 3, relu, p2 = 2, d = 0.5.
    pub fn cnn() -> Self {
        let scale = vec![0.9, 1.2, 2.4, 2.4, 0.9, 1.2, 2.4, 2.4, 2.4];
        Self {
            factors: cnn_factors(),
            floor: 90.0,
            peaks: vec![
                Peak {
                    height: 98.8,
                    center: vec![0.75, 1.0, 0.0, 1.0, 0.25, 0.5, 1.0, 1.0, 0.0],
                    scale: scale.clone(),
                },
                Peak {
                    height: 97.6,
                    center: vec![0.5, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
                    scale,
                },
            ],
            noise_sd: 0.1,
        }
    }

    /// Noise-free response of one trial.
    pub fn value(&self, trial: &[Level]) -> Result<f64> {
        let map = ColumnMap::new(&self.factors)?;
        let x: Vec<f64> = map.normalized_levels(trial)?;
        Ok(self.value_normalized(&x))
    }

    pub fn value_normalized(&self, x: &[f64]) -> f64 {
        let lift = self
            .peaks
            .iter()
            .map(|p| (p.height - self.floor) * p.shape(x))
            .fold(0.0, f64::max);
        self.floor + lift
    }

    /// `n` noisy measurements of one trial.
    pub fn replicates(&self, trial: &[Level], n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let v = self.value(trial)?;
        if self.noise_sd == 0.0 {
            return Ok(vec![v; n]);
        }
        let noise = Normal::new(0.0, self.noise_sd)
            .map_err(|e| Error::invalid(format!("noise: {e}")))?;
        Ok((0..n).map(|_| v + noise.sample(rng)).collect())
    }

    /// Best noise-free value over a design's trials.
    pub fn best_in(&self, design: &Design) -> Result<(usize, f64)> {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, t) in design.trials().iter().enumerate() {
            let v = self.value(t)?;
            if v > best.1 {
                best = (i, v);
            }
        }
        Ok(best)
    }
}
