//! Comparison models: a denoising autoencoder with the SAE geometry, a
//! feedforward regressor from kept slots to masked slots, and an extreme
//! learning machine over the same features.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{kfold_indices, CorruptionMask, DailyCurve, Dataset, NormalizationContext, SLOTS};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Loss, Network, Samples, TrainConfig};
use crate::sae::{self, fine_tune, peak_metrics, pretrain_greedy, Corruption, PeakMetrics, SaeSpec, SaeTraining};

/// Ridge term used when the hidden-feature matrix is rank deficient.
pub const ELM_RIDGE: f64 = 1e-8;

/// Masking rate matching the fixed mask's share of corrupted slots.
pub fn dae_noise_rate(mask: &CorruptionMask) -> f64 {
    mask.masked_count() as f64 / SLOTS as f64
}

/// Denoising autoencoder: SAE pretraining, then MSE fine-tuning on inputs
/// with freshly drawn random slot masking at `noise_rate`. Returns a
/// full-curve network scored exactly like the SAE.
pub fn train_dae(
    spec: &SaeSpec,
    train_pu: &Dataset,
    mask: &CorruptionMask,
    training: &SaeTraining,
    noise_rate: f64,
) -> Result<Network> {
    let pretrained = pretrain_greedy(spec, train_pu, &training.pretrain)?;
    let (net, _) =
        fine_tune(&pretrained, train_pu, None, &training.fine_tune, &Loss::Mse, mask, Corruption::Random { rate: noise_rate })?;
    Ok(net)
}

fn split_features(data_pu: &Dataset, mask: &CorruptionMask) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let kept = mask.kept_indices();
    let masked = mask.masked_indices();
    data_pu
        .curves
        .iter()
        .map(|c| {
            let v = c.values();
            (kept.iter().map(|&i| v[i]).collect(), masked.iter().map(|&i| v[i]).collect())
        })
        .unzip()
}

fn splice(observed: &DailyCurve, mask: &CorruptionMask, ctx: &NormalizationContext, peak_pu: &[f64]) -> Result<DailyCurve> {
    let mut values = *observed.values();
    for (&i, &p) in mask.masked_indices().iter().zip(peak_pu) {
        values[i] = (p * ctx.base_kw()).max(0.0);
    }
    DailyCurve::new(observed.date_tag(), values)
}

fn check_regression_mask(mask: &CorruptionMask) -> Result<()> {
    if mask.masked_count() == 0 || mask.kept_count() == 0 {
        return Err(Error::MaskMismatch("regressors need both kept and masked slots".into()));
    }
    Ok(())
}

/// Feedforward regressor from kept slots (p.u.) to masked slots (p.u.).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnModel {
    pub network: Network,
    pub mask: CorruptionMask,
    pub normalization: NormalizationContext,
}

impl AnnModel {
    pub fn forecast(&self, observed: &DailyCurve) -> Result<DailyCurve> {
        let pu = self.normalization.normalize(observed);
        let x: Vec<f64> = self.mask.kept_indices().iter().map(|&i| pu.values()[i]).collect();
        splice(observed, &self.mask, &self.normalization, &self.network.predict(&x)?)
    }
}

/// Trains an MSE regressor with sizes `[kept, hidden.., masked]`: hidden
/// layers use `activation`, the output is linear. With no hidden layers it
/// is a single linear map.
pub fn train_ann(
    hidden: &[usize],
    activation: Activation,
    train_kw: &Dataset,
    ctx: &NormalizationContext,
    mask: &CorruptionMask,
    cfg: &TrainConfig,
) -> Result<AnnModel> {
    check_regression_mask(mask)?;
    let mut sizes = vec![mask.kept_count()];
    sizes.extend_from_slice(hidden);
    sizes.push(mask.masked_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Network::random(&sizes, activation, Activation::Linear, cfg.init_scale, &mut rng)?;
    let (x, y) = split_features(&ctx.normalize_dataset(train_kw), mask);
    let (network, _) = nn::train(&init, Samples::new(&x, &y)?, None, cfg, &Loss::Mse, None)?;
    Ok(AnnModel { network, mask: mask.clone(), normalization: *ctx })
}

/// Single hidden layer with fixed random weights and least-squares output
/// weights. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmModel {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    /// hidden × inputs
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub hidden_activation: Activation,
    /// outputs × hidden
    pub output_weights: Vec<f64>,
}

impl ElmModel {
    fn features(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let row = &self.hidden_weights[h * self.inputs..(h + 1) * self.inputs];
                let z = self.hidden_bias[h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                self.hidden_activation.apply(z)
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(Error::Shape { expected: self.inputs, got: x.len() });
        }
        let h = self.features(x);
        Ok((0..self.outputs)
            .map(|o| self.output_weights[o * self.hidden..(o + 1) * self.hidden].iter().zip(&h).map(|(w, v)| w * v).sum())
            .collect())
    }

    /// Sum of squared residuals over a sample set.
    pub fn residual(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            total += self.predict(x)?.iter().zip(t).map(|(p, t)| (p - t).powi(2)).sum::<f64>();
        }
        Ok(total)
    }
}

/// Fits an ELM on raw sample vectors. Hidden weights and biases are drawn
/// uniformly from [-1, 1].
pub fn train_elm(
    hidden: usize,
    activation: Activation,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    seed: u64,
) -> Result<ElmModel> {
    if hidden == 0 {
        return Err(Error::InvalidConfig("ELM hidden size must be at least 1".into()));
    }
    let samples = Samples::new(inputs, targets)?;
    if samples.is_empty() {
        return Err(Error::InsufficientData("ELM training set is empty".into()));
    }
    let (n_in, n_out) = (inputs[0].len(), targets[0].len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden_weights: Vec<f64> = (0..hidden * n_in).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let hidden_bias: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut model = ElmModel {
        inputs: n_in,
        hidden,
        outputs: n_out,
        hidden_weights,
        hidden_bias,
        hidden_activation: activation,
        output_weights: vec![0.0; n_out * hidden],
    };
    let rows: Vec<Vec<f64>> = inputs.iter().map(|x| model.features(x)).collect();
    let h = DMatrix::from_fn(rows.len(), hidden, |r, c| rows[r][c]);
    let t = DMatrix::from_fn(targets.len(), n_out, |r, c| targets[r][c]);
    let beta = least_squares(&h, &t)?;
    // beta is hidden × outputs; store transposed
    model.output_weights = (0..n_out).flat_map(|o| (0..hidden).map(move |k| (o, k))).map(|(o, k)| beta[(k, o)]).collect();
    Ok(model)
}

/// Minimizes ‖H·B − T‖ via Householder QR; falls back to a ridge-regularized
/// normal-equation solve (Cholesky) when H is short or rank deficient.
fn least_squares(h: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = h.shape();
    if n >= k {
        let qr = h.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = diag_max * (n.max(k) as f64) * f64::EPSILON;
        if diag_max > 0.0 && r.diagonal().iter().all(|v| v.abs() > tol) {
            let qtb = qr.q().transpose() * t;
            if let Some(b) = r.solve_upper_triangular(&qtb) {
                if b.iter().all(|v| v.is_finite()) {
                    return Ok(b);
                }
            }
        }
    }
    let mut gram = h.transpose() * h;
    for i in 0..k {
        gram[(i, i)] += ELM_RIDGE;
    }
    let rhs = h.transpose() * t;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("ELM normal equations not positive definite after ridge".into()))?;
    let b = chol.solve(&rhs);
    if b.iter().all(|v| v.is_finite()) {
        Ok(b)
    } else {
        Err(Error::Numerical("ELM solve produced non-finite weights".into()))
    }
}

/// ELM wrapped for masked-peak forecasting on kW curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmForecaster {
    pub elm: ElmModel,
    pub mask: CorruptionMask,
    pub normalization: NormalizationContext,
}

impl ElmForecaster {
    pub fn train(
        hidden: usize,
        train_kw: &Dataset,
        ctx: &NormalizationContext,
        mask: &CorruptionMask,
        seed: u64,
    ) -> Result<Self> {
        check_regression_mask(mask)?;
        let (x, y) = split_features(&ctx.normalize_dataset(train_kw), mask);
        let elm = train_elm(hidden, Activation::Sigmoid, &x, &y, seed)?;
        Ok(Self { elm, mask: mask.clone(), normalization: *ctx })
    }

    pub fn forecast(&self, observed: &DailyCurve) -> Result<DailyCurve> {
        let pu = self.normalization.normalize(observed);
        let x: Vec<f64> = self.mask.kept_indices().iter().map(|&i| pu.values()[i]).collect();
        splice(observed, &self.mask, &self.normalization, &self.elm.predict(&x)?)
    }
}

/// Scores any curve forecaster over a test set with the shared metric.
pub fn score<F>(test_kw: &Dataset, mask: &CorruptionMask, forecast: F) -> Result<PeakMetrics>
where
    F: Fn(&DailyCurve) -> Result<DailyCurve>,
{
    let predicted = test_kw.curves.iter().map(&forecast).collect::<Result<Vec<_>>>()?;
    peak_metrics(&test_kw.curves, &predicted, mask)
}

/// Settings for the three-model fold comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub sae: SaeSpec,
    pub sae_training: SaeTraining,
    pub ann_hidden: Vec<usize>,
    pub ann_activation: Activation,
    pub ann_training: TrainConfig,
    pub elm_hidden: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            sae: SaeSpec::five_layer().with_loss(sae::LossKind::WeightedMse),
            sae_training: SaeTraining::default(),
            ann_hidden: vec![24],
            ann_activation: Activation::Sigmoid,
            ann_training: TrainConfig { learning_rate: 0.5, max_iterations: 200, ..Default::default() },
            elm_hidden: 200,
            folds: 5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub fold: usize,
    pub ann_rmse: f64,
    pub elm_rmse: f64,
    pub sae_rmse: f64,
}

/// k-fold RMSE of ANN, ELM and SAE under one mask, folds in order.
pub fn compare_models(
    data_kw: &Dataset,
    ctx: &NormalizationContext,
    mask: &CorruptionMask,
    cfg: &CompareConfig,
) -> Result<Vec<FoldScores>> {
    cfg.sae.validate()?;
    let folds = kfold_indices(data_kw.len(), cfg.folds, cfg.seed)?;
    folds
        .par_iter()
        .enumerate()
        .map(|(f, idx)| {
            let train = data_kw.subset(&idx.train);
            let test = data_kw.subset(&idx.validation);
            let ann = train_ann(&cfg.ann_hidden, cfg.ann_activation, &train, ctx, mask, &cfg.ann_training)?;
            let elm = ElmForecaster::train(cfg.elm_hidden, &train, ctx, mask, cfg.seed)?;
            let sae = sae::train_sae(&cfg.sae, &train, None, ctx, mask, &cfg.sae_training)?;
            Ok(FoldScores {
                fold: f + 1,
                ann_rmse: score(&test, mask, |c| ann.forecast(c))?.rmse_kw,
                elm_rmse: score(&test, mask, |c| elm.forecast(c))?.rmse_kw,
                sae_rmse: score(&test, mask, |c| sae.model.forecast(c, None))?.rmse_kw,
            })
        })
        .collect()
}

/// CSV `fold,ann_rmse,elm_rmse,sae_rmse` with a trailing `mean` row.
pub fn write_fold_scores(out: impl Write, rows: &[FoldScores]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fold", "ann_rmse", "elm_rmse", "sae_rmse"])?;
    for r in rows {
        w.write_record([r.fold.to_string(), r.ann_rmse.to_string(), r.elm_rmse.to_string(), r.sae_rmse.to_string()])?;
    }
    if !rows.is_empty() {
        let k = rows.len() as f64;
        let mean = |f: fn(&FoldScores) -> f64| (rows.iter().map(f).sum::<f64>() / k).to_string();
        w.write_record(["mean".to_string(), mean(|r| r.ann_rmse), mean(|r| r.elm_rmse), mean(|r| r.sae_rmse)])?;
    }
    w.flush()?;
    Ok(())
}
