//! Stacked autoencoders for masked peak-hour reconstruction.
//!
//! Training runs in two phases. Greedy pretraining fits one shallow
//! autoencoder per encoder level on clean p.u. curves (each level on the
//! previous level's codes), keeps the encoders, and mirrors them into the
//! decoder half with transposed weights. Fine-tuning then trains the whole
//! stack end to end, mapping corrupted curves back to clean ones.
//!
//! Reconstruction corrupts the observed curve with the trained mask, runs the
//! network, and splices network output into the masked slots only.

mod model;
mod sweep;

pub use model::{SaeModel, MODEL_FORMAT};
pub use sweep::{
    compare_architectures, converged_value, sweep_alpha_beta, sweep_mask_value, write_sweep, ArchitectureResult,
    standard_architectures, SweepPoint, SweepResult,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{CorruptionMask, DailyCurve, Dataset, NormalizationContext, SLOTS};
use crate::error::{Error, Result};
use crate::nn::{self, loss_mape, Activation, InputNoise, Loss, LossHistory, Network, Samples, TrainConfig, WeightedMseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Mape,
    WeightedMse,
}

/// How the weighted loss picks `alpha / beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaBeta {
    /// From the training set's per-slot standard deviations.
    Eq7,
    Ratio(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub loss: LossKind,
    pub alpha_beta: AlphaBeta,
}

impl SaeSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, loss: LossKind) -> Result<Self> {
        let spec = Self { layer_sizes, activation, loss, alpha_beta: AlphaBeta::Eq7 };
        spec.validate()?;
        Ok(spec)
    }

    /// 48-24-12-24-48, sigmoid, MSE.
    pub fn five_layer() -> Self {
        Self {
            layer_sizes: vec![48, 24, 12, 24, 48],
            activation: Activation::Sigmoid,
            loss: LossKind::Mse,
            alpha_beta: AlphaBeta::Eq7,
        }
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_alpha_beta(mut self, alpha_beta: AlphaBeta) -> Self {
        self.alpha_beta = alpha_beta;
        self
    }

    /// Palindromic, odd length, 48 at both ends, strictly narrowing to the
    /// bottleneck.
    pub fn validate(&self) -> Result<()> {
        let s = &self.layer_sizes;
        let bad = |why: &str| Err(Error::InvalidConfig(format!("layer sizes {s:?}: {why}")));
        if s.len() < 3 || s.len().is_multiple_of(2) {
            return bad("need an odd number of at least 3 sizes");
        }
        if s[0] != SLOTS || s[s.len() - 1] != SLOTS {
            return bad("first and last size must be 48");
        }
        if s.iter().zip(s.iter().rev()).any(|(a, b)| a != b) {
            return bad("not palindromic");
        }
        let mid = s.len() / 2;
        if s[..=mid].windows(2).any(|w| w[1] >= w[0] || w[1] == 0) {
            return bad("encoder must strictly narrow to the bottleneck");
        }
        if let (LossKind::WeightedMse, AlphaBeta::Ratio(r)) = (self.loss, self.alpha_beta) {
            if !(r.is_finite() && r > 0.0) {
                return bad("alpha/beta ratio must be positive");
            }
        }
        Ok(())
    }

    /// Number of shallow pretraining stages (encoder layers).
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() / 2
    }

    pub fn bottleneck(&self) -> usize {
        self.layer_sizes[self.depth()]
    }

    pub fn label(&self) -> String {
        self.layer_sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("-")
    }

    /// Concrete loss for a training set (p.u.) and mask.
    pub fn resolve_loss(&self, train_pu: &Dataset, mask: &CorruptionMask) -> Result<Loss> {
        Ok(match self.loss {
            LossKind::Mse => Loss::Mse,
            LossKind::Mape => Loss::mape(),
            LossKind::WeightedMse => Loss::WeightedMse(weighted_config(self.alpha_beta, train_pu, mask)?),
        })
    }
}

pub(crate) fn weighted_config(ab: AlphaBeta, train_pu: &Dataset, mask: &CorruptionMask) -> Result<WeightedMseConfig> {
    let corrupted = mask.masked_indices();
    match ab {
        AlphaBeta::Eq7 => WeightedMseConfig::from_std(&corrupted, &train_pu.slot_std()?, train_pu.len()),
        AlphaBeta::Ratio(r) => WeightedMseConfig::from_ratio(r, &corrupted, SLOTS),
    }
}

/// Per-phase optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaeTraining {
    pub pretrain: TrainConfig,
    pub fine_tune: TrainConfig,
}

impl Default for SaeTraining {
    fn default() -> Self {
        Self {
            pretrain: TrainConfig { learning_rate: 1.0, max_iterations: 60, batch_size: 16, ..Default::default() },
            fine_tune: TrainConfig { learning_rate: 1.0, max_iterations: 300, batch_size: 16, ..Default::default() },
        }
    }
}

impl SaeTraining {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.pretrain.seed = seed;
        self.fine_tune.seed = seed;
        self
    }
}

/// How fine-tuning corrupts its inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    /// The evaluation mask, applied identically to every sample.
    #[default]
    Fixed,
    /// No corruption during training: a plain autoencoder on clean curves
    /// that only meets masked inputs at reconstruction time.
    Clean,
    /// Every slot independently masked with probability `rate`, redrawn per
    /// presentation (denoising-autoencoder training).
    Random { rate: f64 },
}

/// Independent per-slot masking noise.
#[derive(Debug, Clone, Copy)]
pub struct RandomSlotMasking {
    pub rate: f64,
    pub mask_value: f64,
}

impl InputNoise for RandomSlotMasking {
    fn corrupt(&self, input: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(input) {
            *o = if self.rate > 0.0 && rng.random_bool(self.rate) { self.mask_value } else { x };
        }
    }
}

/// Greedy layer-wise pretraining on clean p.u. curves. Returns the assembled
/// symmetric network: trained encoders followed by their transposes, each
/// decoder keeping the bias its shallow stage learned. Output layer linear.
pub fn pretrain_greedy(spec: &SaeSpec, train_pu: &Dataset, cfg: &TrainConfig) -> Result<Network> {
    spec.validate()?;
    if train_pu.is_empty() {
        return Err(Error::InsufficientData("pretraining set is empty".into()));
    }
    let sizes = &spec.layer_sizes;
    let mut codes = train_pu.vectors();
    let mut encoders = Vec::with_capacity(spec.depth());
    let mut decoders = Vec::with_capacity(spec.depth());
    for stage in 0..spec.depth() {
        let (n_in, n_hidden) = (sizes[stage], sizes[stage + 1]);
        let out_act = decoder_activation(spec, stage);
        let stage_seed = cfg.seed.wrapping_add(stage as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed);
        let shallow = Network::random(&[n_in, n_hidden, n_in], spec.activation, out_act, cfg.init_scale, &mut rng)
            .map_err(|e| e.at_stage(stage + 1))?;
        let stage_cfg = TrainConfig { seed: stage_seed, ..cfg.clone() };
        let (trained, _) = nn::train(&shallow, Samples::reconstruction(&codes), None, &stage_cfg, &Loss::Mse, None)
            .map_err(|e| e.at_stage(stage + 1))?;
        let encoder = trained.layers()[0].clone();
        let decoder_bias = trained.layers()[1].bias().to_vec();
        let encoder_net = Network::new(vec![encoder.clone()])?;
        codes = codes.iter().map(|c| encoder_net.predict(c)).collect::<Result<_>>()?;
        decoders.push(encoder.transposed(decoder_bias, out_act)?);
        encoders.push(encoder);
    }
    encoders.extend(decoders.into_iter().rev());
    Network::new(encoders)
}

fn decoder_activation(spec: &SaeSpec, stage: usize) -> Activation {
    if stage == 0 {
        Activation::Linear
    } else {
        spec.activation
    }
}

/// Clean p.u. vectors and their corrupted inputs under a fixed mask.
fn corrupted_pairs(data_pu: &Dataset, mask: &CorruptionMask) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let clean = data_pu.vectors();
    let inputs = clean.iter().map(|x| mask.apply(x)).collect();
    (inputs, clean)
}

/// End-to-end training from corrupted inputs to clean targets. With
/// `validation`, the history carries validation loss under the fixed mask.
pub fn fine_tune(
    net: &Network,
    train_pu: &Dataset,
    validation_pu: Option<&Dataset>,
    cfg: &TrainConfig,
    loss: &Loss,
    mask: &CorruptionMask,
    corruption: Corruption,
) -> Result<(Network, LossHistory)> {
    check_mask(net, mask)?;
    let (inputs, targets) = corrupted_pairs(train_pu, mask);
    let val = validation_pu.map(|v| corrupted_pairs(v, mask));
    let val_samples = match &val {
        Some((i, t)) => Some(Samples::new(i, t)?),
        None => None,
    };
    match corruption {
        Corruption::Fixed => nn::train(net, Samples::new(&inputs, &targets)?, val_samples, cfg, loss, None),
        Corruption::Clean => nn::train(net, Samples::reconstruction(&targets), val_samples, cfg, loss, None),
        Corruption::Random { rate } => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidConfig(format!("masking rate {rate} outside [0, 1]")));
            }
            let noise = RandomSlotMasking { rate, mask_value: mask.mask_value() };
            nn::train(net, Samples::reconstruction(&targets), val_samples, cfg, loss, Some(&noise))
        }
    }
}

fn check_mask(net: &Network, mask: &CorruptionMask) -> Result<()> {
    if net.input_size() != mask.keep().len() || net.output_size() != mask.keep().len() {
        return Err(Error::MaskMismatch(format!(
            "mask covers {} slots, network maps {} -> {}",
            mask.keep().len(),
            net.input_size(),
            net.output_size()
        )));
    }
    Ok(())
}

/// Fills the masked slots of an observed kW curve from the network.
/// Kept slots are copied from `observed` unchanged; reconstructed slots are
/// clamped at 0 kW.
pub fn reconstruct_peak(
    net: &Network,
    observed: &DailyCurve,
    mask: &CorruptionMask,
    ctx: &NormalizationContext,
) -> Result<DailyCurve> {
    check_mask(net, mask)?;
    let pu = ctx.normalize(observed);
    let input = mask.apply(pu.values());
    let output = net.predict(&input)?;
    let mut values = *observed.values();
    for i in mask.masked_indices() {
        values[i] = (output[i] * ctx.base_kw()).max(0.0);
    }
    DailyCurve::new(observed.date_tag(), values)
}

/// Peak-window accuracy over the masked slots, in kW and percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakMetrics {
    pub rmse_kw: f64,
    pub mape_pct: f64,
}

/// RMSE and MAPE over the masked slots of every (truth, forecast) pair.
/// Every model in the toolkit is scored through this function.
pub fn peak_metrics(truth: &[DailyCurve], forecast: &[DailyCurve], mask: &CorruptionMask) -> Result<PeakMetrics> {
    if truth.is_empty() {
        return Err(Error::InsufficientData("no curves to evaluate".into()));
    }
    if truth.len() != forecast.len() {
        return Err(Error::Shape { expected: truth.len(), got: forecast.len() });
    }
    let masked = mask.masked_indices();
    if masked.is_empty() {
        return Ok(PeakMetrics { rmse_kw: 0.0, mape_pct: 0.0 });
    }
    let mut t = Vec::with_capacity(truth.len() * masked.len());
    let mut f = Vec::with_capacity(t.capacity());
    for (a, b) in truth.iter().zip(forecast) {
        for &i in &masked {
            t.push(a.values()[i]);
            f.push(b.values()[i]);
        }
    }
    Ok(PeakMetrics {
        rmse_kw: nn::loss_mse(&t, &f)?.sqrt(),
        mape_pct: loss_mape(&t, &f, nn::DEFAULT_MAPE_EPSILON)?,
    })
}

/// Reconstructs every test curve (kW) and scores the masked slots.
pub fn evaluate_peak_rmse(
    net: &Network,
    test: &Dataset,
    mask: &CorruptionMask,
    ctx: &NormalizationContext,
) -> Result<PeakMetrics> {
    if test.is_empty() {
        return Err(Error::InsufficientData("test set is empty".into()));
    }
    let forecast = test.curves.iter().map(|c| reconstruct_peak(net, c, mask, ctx)).collect::<Result<Vec<_>>>()?;
    peak_metrics(&test.curves, &forecast, mask)
}

/// Output of [`train_sae`].
#[derive(Debug, Clone)]
pub struct TrainedSae {
    pub model: SaeModel,
    pub pretrained: Network,
    pub history: LossHistory,
}

/// Pretrain and fine-tune on kW curves with the fixed evaluation mask,
/// normalizing with `ctx`.
pub fn train_sae(
    spec: &SaeSpec,
    train_kw: &Dataset,
    validation_kw: Option<&Dataset>,
    ctx: &NormalizationContext,
    mask: &CorruptionMask,
    training: &SaeTraining,
) -> Result<TrainedSae> {
    train_sae_with(spec, train_kw, validation_kw, ctx, mask, training, Corruption::Fixed)
}

/// [`train_sae`] with an explicit fine-tuning input protocol.
pub fn train_sae_with(
    spec: &SaeSpec,
    train_kw: &Dataset,
    validation_kw: Option<&Dataset>,
    ctx: &NormalizationContext,
    mask: &CorruptionMask,
    training: &SaeTraining,
    corruption: Corruption,
) -> Result<TrainedSae> {
    spec.validate()?;
    let train_pu = ctx.normalize_dataset(train_kw);
    let val_pu = validation_kw.map(|v| ctx.normalize_dataset(v));
    let pretrained = pretrain_greedy(spec, &train_pu, &training.pretrain)?;
    let loss = spec.resolve_loss(&train_pu, mask)?;
    let (network, history) =
        fine_tune(&pretrained, &train_pu, val_pu.as_ref(), &training.fine_tune, &loss, mask, corruption)?;
    Ok(TrainedSae {
        model: SaeModel::new(spec.clone(), network, mask.clone(), *ctx, loss, training.clone()).with_corruption(corruption),
        pretrained,
        history,
    })
}
