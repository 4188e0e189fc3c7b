use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{duplicate_rows, encode_design, Design, NoiseConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{mse, Activation, AdamState, DenseNet, Init, LayerSpec, ParamSlot, Regularization};
use crate::scalar::Scalar;

/// Designs up to this size get the heavier duplication.
pub const SMALL_DESIGN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceConfig {
    pub replications: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Overrides the size-based duplication counts.
    pub train_dup: Option<usize>,
    pub test_dup: Option<usize>,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            replications: 10,
            seed: 0,
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            train_dup: None,
            test_dup: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorImportance {
    pub factor: String,
    /// Mean of (permuted loss − base loss) / base loss.
    pub score: f64,
    /// Sample std of the per-permutation ratios.
    pub std: f64,
    /// 1 for the most important factor.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// In factor declaration order.
    pub factors: Vec<FactorImportance>,
    /// Factor names, most important first.
    pub ranking: Vec<String>,
    pub base_loss: f64,
    pub train_loss: f64,
}

/// The importance regressor: 16 relu → 4 relu → 1 linear.
pub fn importance_network<T: Scalar>(inputs: usize, rng: &mut ChaCha8Rng) -> Result<DenseNet<T>> {
    let reg = Regularization {
        kernel_l1: 1e-5,
        kernel_l2: 1e-4,
        bias_l2: 1e-4,
        activity_l2: 1e-5,
        ..Default::default()
    };
    let specs = [
        LayerSpec::new(16, Activation::Relu).regularized(reg),
        LayerSpec::new(4, Activation::Relu).regularized(reg),
        LayerSpec::new(1, Activation::Linear),
    ];
    DenseNet::build(inputs, &specs, Init::Normal(0.05), rng)
}

/// Permutation importance of each factor for `responses` (aligned with the
/// design's trials).
///
/// Responses are standardized before fitting. Each factor's whole encoded
/// block is permuted across the rows of the evaluation split.
pub fn importance(design: &Design, responses: &[f64], cfg: &ImportanceConfig) -> Result<ImportanceReport> {
    importance_generic::<f64>(design, responses, cfg)
}

pub fn importance_generic<T: Scalar>(
    design: &Design,
    responses: &[f64],
    cfg: &ImportanceConfig,
) -> Result<ImportanceReport> {
    if cfg.replications == 0 {
        return Err(Error::invalid("replications must be at least 1"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid("epochs and batch size must be at least 1"));
    }
    if responses.len() != design.len() {
        return Err(Error::shape("responses", design.len(), responses.len()));
    }
    if responses.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            parameter: "responses".into(),
        });
    }
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    let var = responses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Degenerate("importance is undefined for a constant response".into()));
    }
    let sd = var.sqrt();

    let enc = encode_design::<T>(design)?;
    let width = enc.width();
    let y: Vec<T> = responses.iter().map(|v| T::lit((v - mean) / sd)).collect();
    let joined = enc.rows.hconcat(&Matrix::from_vec(y.len(), 1, y)?)?;
    let small = design.len() <= SMALL_DESIGN;
    let train_dup = cfg.train_dup.unwrap_or(if small { 50 } else { 5 });
    let test_dup = cfg.test_dup.unwrap_or(if small { 30 } else { 3 });
    let (train, test) = duplicate_rows(&joined, train_dup, test_dup, NoiseConfig::disabled(), cfg.seed ^ 0x5DEE_CE66)?;
    let (train_x, train_y) = (train.slice_cols(0, width), train.slice_cols(width, width + 1));
    let (test_x, test_y) = (test.slice_cols(0, width), test.slice_cols(width, width + 1));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = importance_network::<T>(width, &mut rng)?;
    let mut adam = AdamState::new(cfg.learning_rate);
    let rows = train_x.rows();
    let mut train_loss = 0.0;
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let mut start = 0;
        while start < rows {
            let end = (start + cfg.batch_size).min(rows);
            let xb = train_x.slice_rows(start, end);
            let yb = train_y.slice_rows(start, end);
            let (out, cache) = net.forward(&xb)?;
            let (loss, g) = mse(&out, &yb)?;
            let full = loss + net.regularization_loss(Some(&cache));
            if !full.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: full.as_f64(),
                });
            }
            let grads = net.backward(&cache, &g)?;
            let mut slots: Vec<ParamSlot<'_, T>> = net.param_slots(&grads, "importance");
            adam.step(&mut slots)?;
            total += loss.as_f64() * (end - start) as f64;
            start = end;
        }
        train_loss = total / rows as f64;
    }

    // model loss as training reports it: MSE plus the regularization penalties
    let eval = |x: &Matrix<T>| -> Result<f64> {
        let (out, cache) = net.forward(x)?;
        Ok((mse(&out, &test_y)?.0 + net.regularization_loss(Some(&cache))).as_f64())
    };
    let base = eval(&test_x)?;
    let floor = f64::EPSILON;
    let mut perm_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x1234_5678_9ABC));
    let mut factors = Vec::new();
    for block in enc.column_map.blocks() {
        let mut ratios = Vec::with_capacity(cfg.replications);
        for _ in 0..cfg.replications {
            let mut idx: Vec<usize> = (0..test_x.rows()).collect();
            idx.shuffle(&mut perm_rng);
            let mut xp = test_x.clone();
            for (r, &src) in idx.iter().enumerate() {
                for c in block.start..block.start + block.width {
                    xp[(r, c)] = test_x[(src, c)];
                }
            }
            ratios.push((eval(&xp)? - base) / base.max(floor));
        }
        let m = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let s = if ratios.len() > 1 {
            (ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (ratios.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        factors.push(FactorImportance {
            factor: block.factor.name.clone(),
            score: m,
            std: s,
            rank: 0,
        });
    }
    let mut order: Vec<usize> = (0..factors.len()).collect();
    order.sort_by(|&a, &b| {
        factors[b]
            .score
            .partial_cmp(&factors[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for (r, &f) in order.iter().enumerate() {
        factors[f].rank = r + 1;
    }
    Ok(ImportanceReport {
        ranking: order.iter().map(|&f| factors[f].factor.clone()).collect(),
        factors,
        base_loss: base,
        train_loss,
    })
}
