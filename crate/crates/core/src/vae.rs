//! β-VAE with a two-dimensional Gaussian latent: training, embedding and
//! decoding of latent points back into trials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{duplicate_and_split, ColumnMap, Design, EncodedMatrix, Level, NoiseConfig, Provenance};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{
    binary_crossentropy, Activation, AdamState, DenseNet, Gradients, Init, LayerSpec, ParamSlot,
};
use crate::scalar::Scalar;
use crate::stats::{normal_cdf, normal_quantile, UNIFORM_CLAMP};

pub const LATENT_DIM: usize = 2;

/// Coordinate system of latent points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentSpace {
    /// Per-axis normal CDF of the latent mean, in (0,1)².
    #[default]
    Uniformed,
    /// The Gaussian latent plane itself.
    Original,
}

/// How the reconstruction term is aggregated before adding β·KL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reconstruction {
    /// Cross-entropy summed over features, averaged over rows.
    #[default]
    SumOverFeatures,
    /// Cross-entropy averaged over every element.
    MeanOverElements,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub beta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub train_dup: usize,
    pub test_dup: usize,
    pub noise: NoiseConfig,
    pub learning_rate: f64,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub reconstruction: Reconstruction,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            beta: 0.3,
            batch_size: 256,
            epochs: 500,
            seed: 0,
            train_dup: 50,
            test_dup: 30,
            noise: NoiseConfig::disabled(),
            learning_rate: 1e-3,
            hidden: vec![512, 32],
            reconstruction: Reconstruction::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(Error::invalid("beta must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.train_dup == 0 || self.test_dup == 0 {
            return Err(Error::invalid("duplication counts must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be >= 1"));
        }
        if !(self.noise.alpha >= 0.0) {
            return Err(Error::invalid("noise alpha must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_bce: f64,
    pub test_loss: f64,
    pub test_bce: f64,
    pub test_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Latent coordinates of a design's trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LatentEmbedding<T: Scalar> {
    pub trial_ids: Vec<u64>,
    pub mu: Vec<[T; 2]>,
    pub uniformed: Vec<[T; 2]>,
}

impl<T: Scalar> LatentEmbedding<T> {
    pub fn len(&self) -> usize {
        self.trial_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trial_ids.is_empty()
    }

    pub fn points(&self, space: LatentSpace) -> &[[T; 2]] {
        match space {
            LatentSpace::Uniformed => &self.uniformed,
            LatentSpace::Original => &self.mu,
        }
    }
}

/// Closed-form KL(N(μ, diag σ²) ‖ N(0, I)).
pub fn kl_divergence<T: Scalar>(mu: &[T], logvar: &[T]) -> Result<T> {
    if mu.len() != logvar.len() {
        return Err(Error::shape("kl operands", mu.len(), logvar.len()));
    }
    if mu.iter().chain(logvar).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            parameter: "kl input".into(),
        });
    }
    let half = T::lit(0.5);
    Ok(mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| half * (m * m + lv.exp() - T::one() - lv))
        .sum())
}

/// Maps latent means to uniformed coordinates.
pub fn uniformize<T: Scalar>(p: [T; 2]) -> [T; 2] {
    p.map(|v| T::lit(normal_cdf(v.as_f64())))
}

/// Maps uniformed coordinates back to the latent plane, clamping to
/// `[1e-9, 1 - 1e-9]` first.
pub fn deuniformize<T: Scalar>(p: [T; 2]) -> [T; 2] {
    p.map(|v| T::lit(normal_quantile(v.as_f64().clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP))))
}

/// Encoder/decoder pair over a fixed column layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VaeModel<T: Scalar> {
    pub encoder: DenseNet<T>,
    pub mean_head: DenseNet<T>,
    pub logvar_head: DenseNet<T>,
    pub decoder: DenseNet<T>,
    pub column_map: ColumnMap,
    pub config: TrainingConfig,
}

struct Step<T> {
    loss: T,
    bce: T,
}

impl<T: Scalar> VaeModel<T> {
    /// Fresh, untrained model.
    pub fn new(column_map: ColumnMap, config: TrainingConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let d = column_map.width();
        if d < 2 {
            return Err(Error::invalid("encoded width must be at least 2"));
        }
        let enc_specs: Vec<LayerSpec> = config
            .hidden
            .iter()
            .map(|&w| LayerSpec::new(w, Activation::Relu))
            .collect();
        let encoder = DenseNet::build(d, &enc_specs, Init::FanIn, rng)?;
        let last = encoder.outputs();
        let head = [LayerSpec::new(LATENT_DIM, Activation::Linear)];
        let mean_head = DenseNet::build(last, &head, Init::FanIn, rng)?;
        let logvar_head = DenseNet::build(last, &head, Init::FanIn, rng)?;
        let mut dec_specs: Vec<LayerSpec> = config
            .hidden
            .iter()
            .rev()
            .map(|&w| LayerSpec::new(w, Activation::Relu))
            .collect();
        dec_specs.push(LayerSpec::new(d, Activation::Sigmoid));
        let decoder = DenseNet::build(LATENT_DIM, &dec_specs, Init::FanIn, rng)?;
        Ok(Self {
            encoder,
            mean_head,
            logvar_head,
            decoder,
            column_map,
            config,
        })
    }

    pub fn input_width(&self) -> usize {
        self.column_map.width()
    }

    fn recon_weight(&self) -> T {
        match self.config.reconstruction {
            Reconstruction::SumOverFeatures => T::from_usize_lossy(self.input_width()),
            Reconstruction::MeanOverElements => T::one(),
        }
    }

    /// Posterior means and log-variances for a batch.
    pub fn encode(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        if x.cols() != self.input_width() {
            return Err(Error::shape("encoder input", self.input_width(), x.cols()));
        }
        let h = self.encoder.predict(x)?;
        Ok((self.mean_head.predict(&h)?, self.logvar_head.predict(&h)?))
    }

    /// Decoder outputs (unit-interval columns) for latent points.
    pub fn decode_outputs(&self, points: &[[T; 2]], space: LatentSpace) -> Result<Matrix<T>> {
        let z = to_original(points, space)?;
        let mut m = Matrix::zeros(z.len(), LATENT_DIM);
        for (i, p) in z.iter().enumerate() {
            m.row_mut(i).copy_from_slice(p);
        }
        self.decoder.predict(&m)
    }

    /// Loss of a batch evaluated with z = μ.
    pub fn evaluate(&self, x: &Matrix<T>) -> Result<(T, T, T)> {
        let (mu, lv) = self.encode(x)?;
        let xhat = self.decoder.predict(&mu)?;
        let (bce, _) = binary_crossentropy(&xhat, x)?;
        let kl = mean_kl(&mu, &lv);
        let beta = T::lit(self.config.beta);
        Ok((self.recon_weight() * bce + beta * kl, bce, kl))
    }

    /// One gradient step on a batch with fixed noise `eps` (rows × 2).
    fn train_step(&mut self, x: &Matrix<T>, eps: &Matrix<T>, adam: &mut AdamState<T>) -> Result<Step<T>> {
        let (step, [enc_grads, mu_grads, lv_grads, dec_grads]) = self.loss_and_gradients(x, eps)?;
        let mut slots: Vec<ParamSlot<'_, T>> = Vec::new();
        slots.extend(self.encoder.param_slots(&enc_grads, "encoder"));
        slots.extend(self.mean_head.param_slots(&mu_grads, "mean head"));
        slots.extend(self.logvar_head.param_slots(&lv_grads, "log-variance head"));
        slots.extend(self.decoder.param_slots(&dec_grads, "decoder"));
        adam.step(&mut slots)?;
        Ok(step)
    }

    /// Loss of a batch with fixed noise and its gradients for the encoder,
    /// mean head, log-variance head and decoder.
    fn loss_and_gradients(&self, x: &Matrix<T>, eps: &Matrix<T>) -> Result<(Step<T>, [Gradients<T>; 4])> {
        let b = T::from_usize_lossy(x.rows());
        let beta = T::lit(self.config.beta);
        let half = T::lit(0.5);
        let (h, enc_cache) = self.encoder.forward(x)?;
        let (mu, mu_cache) = self.mean_head.forward(&h)?;
        let (lv, lv_cache) = self.logvar_head.forward(&h)?;
        let mut z = mu.clone();
        for ((zv, &l), &e) in z.as_mut_slice().iter_mut().zip(lv.as_slice()).zip(eps.as_slice()) {
            *zv += (half * l).exp() * e;
        }
        let (xhat, dec_cache) = self.decoder.forward(&z)?;
        let (bce, mut g) = binary_crossentropy(&xhat, x)?;
        let w = self.recon_weight();
        for v in g.as_mut_slice() {
            *v *= w;
        }
        let kl = mean_kl(&mu, &lv);
        let loss = w * bce + beta * kl;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                parameter: "loss".into(),
            });
        }
        let dec_grads = self.decoder.backward(&dec_cache, &g)?;
        let dz = &dec_grads.input;
        let mut dmu = dz.clone();
        let mut dlv = dz.clone();
        for i in 0..dmu.as_slice().len() {
            let m = mu.as_slice()[i];
            let l = lv.as_slice()[i];
            let e = eps.as_slice()[i];
            let s = (half * l).exp();
            dmu.as_mut_slice()[i] += beta * m / b;
            dlv.as_mut_slice()[i] = dz.as_slice()[i] * e * half * s + beta * half * (l.exp() - T::one()) / b;
        }
        let mu_grads = self.mean_head.backward(&mu_cache, &dmu)?;
        let lv_grads = self.logvar_head.backward(&lv_cache, &dlv)?;
        let mut dh = mu_grads.input.clone();
        for (a, &c) in dh.as_mut_slice().iter_mut().zip(lv_grads.input.as_slice()) {
            *a += c;
        }
        let enc_grads = self.encoder.backward(&enc_cache, &dh)?;
        Ok((Step { loss, bce }, [enc_grads, mu_grads, lv_grads, dec_grads]))
    }

    /// Embeds every row with the posterior mean.
    pub fn embed(&self, m: &EncodedMatrix<T>) -> Result<LatentEmbedding<T>> {
        if m.width() != self.input_width() {
            return Err(Error::shape("embedding input", self.input_width(), m.width()));
        }
        let (mu, _) = self.encode(&m.rows)?;
        let mu: Vec<[T; 2]> = mu.iter_rows().map(|r| [r[0], r[1]]).collect();
        let uniformed = mu.iter().map(|&p| uniformize(p)).collect();
        Ok(LatentEmbedding {
            trial_ids: m.trial_ids.clone(),
            mu,
            uniformed,
        })
    }

    /// Decodes latent points into a generated design with ids `0..n`.
    pub fn decode_latent(&self, points: &[[T; 2]], space: LatentSpace, snap: bool) -> Result<Design> {
        let trials = self.decode_trials(points, space, snap)?;
        Design::with_sequential_ids(self.column_map.factors(), trials, Provenance::GeneratedGrid)
    }

    /// Decodes latent points into raw-level rows.
    pub fn decode_trials(&self, points: &[[T; 2]], space: LatentSpace, snap: bool) -> Result<Vec<Vec<Level>>> {
        let out = self.decode_outputs(points, space)?;
        out.iter_rows().map(|r| self.column_map.decode(r, snap)).collect()
    }

    /// Per-factor normalized decoded levels (rows = points, cols = factors).
    pub fn normalized_levels(&self, points: &[[T; 2]], space: LatentSpace, snap: bool) -> Result<Matrix<T>> {
        let trials = self.decode_trials(points, space, snap)?;
        let rows = trials
            .iter()
            .map(|t| self.column_map.normalized_levels::<T>(t))
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.column_map.blocks().len()));
        }
        Matrix::from_rows(&rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn mean_kl<T: Scalar>(mu: &Matrix<T>, lv: &Matrix<T>) -> T {
    let half = T::lit(0.5);
    let total: T = mu
        .as_slice()
        .iter()
        .zip(lv.as_slice())
        .map(|(&m, &l)| half * (m * m + l.exp() - T::one() - l))
        .sum();
    total / T::from_usize_lossy(mu.rows().max(1))
}

/// Converts points to the Gaussian latent plane, validating uniformed input.
pub fn to_original<T: Scalar>(points: &[[T; 2]], space: LatentSpace) -> Result<Vec<[T; 2]>> {
    points
        .iter()
        .map(|&p| match space {
            LatentSpace::Original => {
                if p.iter().all(|v| v.is_finite()) {
                    Ok(p)
                } else {
                    Err(Error::Domain(format!("({}, {})", p[0], p[1])))
                }
            }
            LatentSpace::Uniformed => {
                if p.iter().all(|&v| v > T::zero() && v < T::one()) {
                    Ok(deuniformize(p))
                } else {
                    Err(Error::Domain(format!(
                        "uniformed ({}, {}) not inside (0,1)²",
                        p[0], p[1]
                    )))
                }
            }
        })
        .collect()
}

/// Rows with at least two distinct values are required to train.
fn distinct_rows<T: Scalar>(m: &Matrix<T>) -> usize {
    let mut seen: Vec<&[T]> = Vec::new();
    for r in m.iter_rows() {
        if !seen.iter().any(|s| *s == r) {
            seen.push(r);
            if seen.len() > 1 {
                break;
            }
        }
    }
    seen.len()
}

/// Trains a model; see [`train_with`].
pub fn train<T: Scalar>(m: &EncodedMatrix<T>, cfg: &TrainingConfig) -> Result<(VaeModel<T>, TrainingHistory)> {
    train_with(m, cfg, |_| {})
}

/// Trains a model, reporting every finished epoch to `on_epoch`.
///
/// Rows are duplicated and shuffled once; batches then walk the training
/// matrix in order. Test loss uses z = μ.
pub fn train_with<T: Scalar>(
    m: &EncodedMatrix<T>,
    cfg: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(VaeModel<T>, TrainingHistory)> {
    cfg.validate()?;
    if m.width() < 2 {
        return Err(Error::invalid("encoded width must be at least 2"));
    }
    if distinct_rows(&m.rows) < 2 {
        return Err(Error::invalid("training needs at least 2 distinct rows"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = VaeModel::new(m.column_map.clone(), cfg.clone(), &mut rng)?;
    let (train_x, test_x) = duplicate_and_split(m, cfg.train_dup, cfg.test_dup, cfg.noise, split_seed(cfg.seed))?;
    // Without noise the test split is exact copies, whose mean loss equals
    // that of the unique rows.
    let test_x = if cfg.noise.is_active() { test_x } else { m.rows.clone() };
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut history = TrainingHistory::default();
    let n = train_x.rows();
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut bce_sum = 0.0;
        let mut start = 0;
        while start < n {
            let end = (start + cfg.batch_size).min(n);
            let batch = train_x.slice_rows(start, end);
            let eps_data = (0..(end - start) * LATENT_DIM)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    T::lit(e)
                })
                .collect();
            let eps = Matrix::from_vec(end - start, LATENT_DIM, eps_data)?;
            let step = match model.train_step(&batch, &eps, &mut adam) {
                Ok(s) => s,
                Err(Error::NonFinite { .. }) => {
                    return Err(Error::Diverged {
                        epoch,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            let w = (end - start) as f64;
            loss_sum += step.loss.as_f64() * w;
            bce_sum += step.bce.as_f64() * w;
            start = end;
        }
        let (tl, tb, tk) = model.evaluate(&test_x)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            train_bce: bce_sum / n as f64,
            test_loss: tl.as_f64(),
            test_bce: tb.as_f64(),
            test_kl: tk.as_f64(),
        };
        if !rec.test_loss.is_finite() || !rec.train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: rec.train_loss,
            });
        }
        on_epoch(&rec);
        history.epochs.push(rec);
    }
    Ok((model, history))
}

/// Seed of the duplication/shuffle stream, decorrelated from initialization.
fn split_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}
