use std::path::{Path, PathBuf};

use peakshave::bess::{BessConfig, PeakWindow, StrategyParams};
use peakshave::curves::{CorruptionMask, SynthProfile};
use peakshave::nn::{Activation, TrainConfig};
use peakshave::sae::{AlphaBeta, Corruption, LossKind, SaeSpec, SaeTraining};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Declarative run configuration, read from TOML. Every section is optional
/// and falls back to the defaults below; unknown keys are rejected.
///
/// The top-level `seed` drives every random choice: splits, folds, network
/// initialization, shuffling and synthetic data. Per-phase `seed` keys inside
/// `[training.*]` are overwritten by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub mask: MaskConfig,
    pub training: SaeTraining,
    pub sweep: SweepConfig,
    pub bess: BessSection,
    pub compare: CompareSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            paths: Paths::default(),
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            mask: MaskConfig::default(),
            training: SaeTraining::default(),
            sweep: SweepConfig::default(),
            bess: BessSection::default(),
            compare: CompareSection::default(),
        }
    }
}

/// Default file locations; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub curves: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub forecast: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Meters expected per (day, slot) when ingesting readings.
    pub meters: usize,
    /// Append pairwise-average curves before splitting.
    pub augment: bool,
    /// Share of curves held out for validation/testing.
    pub validation_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { meters: 1, augment: false, validation_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub days: usize,
    pub profile: SynthProfile,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { days: 1000, profile: SynthProfile::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaBetaMode {
    Eq7,
    Fixed,
}

/// How fine-tuning presents inputs: the fixed evaluation mask, clean curves,
/// or random slot masking (denoising).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Fixed,
    Clean,
    Dae,
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "clean" => Ok(Self::Clean),
            "dae" => Ok(Self::Dae),
            _ => Err(format!("unknown protocol {s:?} (expected fixed, clean or dae)")),
        }
    }
}

impl Protocol {
    pub fn corruption(self, mask: &CorruptionMask) -> Corruption {
        match self {
            Self::Fixed => Corruption::Fixed,
            Self::Clean => Corruption::Clean,
            Self::Dae => Corruption::Random { rate: peakshave::baselines::dae_noise_rate(mask) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: Vec<usize>,
    pub activation: Activation,
    pub loss: LossKind,
    pub alpha_beta: AlphaBetaMode,
    /// α/β when `alpha_beta = "fixed"`.
    pub ratio: Option<f64>,
    pub protocol: Protocol,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: vec![48, 24, 12, 24, 48],
            activation: Activation::Sigmoid,
            loss: LossKind::WeightedMse,
            alpha_beta: AlphaBetaMode::Eq7,
            ratio: None,
            protocol: Protocol::Fixed,
        }
    }
}

/// Masked slots (1-based, inclusive) and the mask value in p.u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub first_slot: usize,
    pub last_slot: usize,
    pub value: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { first_slot: 36, last_slot: 48, value: 0.66 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Training protocol for mask-value sweeps.
    pub protocol: Protocol,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            ratios: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0],
            protocol: Protocol::Clean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BessSection {
    pub capacity_kwh: f64,
    pub power_limit_kw: Option<f64>,
    pub initial_soc: f64,
    pub threshold_kw: f64,
    /// Peak window, 1-based inclusive slots.
    pub window: (usize, usize),
}

impl Default for BessSection {
    fn default() -> Self {
        let b = BessConfig::default();
        Self {
            capacity_kwh: b.capacity_kwh,
            power_limit_kw: b.power_limit_kw,
            initial_soc: b.initial_soc,
            threshold_kw: StrategyParams::default().threshold_kw,
            window: (29, 40),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub folds: usize,
    pub ann_hidden: Vec<usize>,
    pub ann_training: TrainConfig,
    pub elm_hidden: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        let d = peakshave::baselines::CompareConfig::default();
        Self { folds: d.folds, ann_hidden: d.ann_hidden, ann_training: d.ann_training, elm_hidden: d.elm_hidden }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks every section so that no command starts work on a bad config.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(0.0..1.0).contains(&self.data.validation_fraction) {
            return bad(format!("data.validation_fraction {} must be in [0, 1)", self.data.validation_fraction));
        }
        if self.data.meters == 0 {
            return bad("data.meters must be at least 1".into());
        }
        self.spec()?;
        self.mask()?;
        self.training.pretrain.validate()?;
        self.training.fine_tune.validate()?;
        self.compare.ann_training.validate()?;
        if self.sweep.grid.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return bad("sweep.grid values must lie in [0, 1]".into());
        }
        if self.sweep.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("sweep.ratios must be positive".into());
        }
        self.bess_config().validate()?;
        self.window()?;
        if !(self.bess.threshold_kw.is_finite() && self.bess.threshold_kw >= 0.0) {
            return bad("bess.threshold_kw must be non-negative".into());
        }
        if self.compare.folds < 2 {
            return bad("compare.folds must be at least 2".into());
        }
        if self.compare.elm_hidden == 0 {
            return bad("compare.elm_hidden must be at least 1".into());
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<SaeSpec, CliError> {
        let alpha_beta = match (self.model.alpha_beta, self.model.ratio) {
            (AlphaBetaMode::Eq7, _) => AlphaBeta::Eq7,
            (AlphaBetaMode::Fixed, Some(r)) => AlphaBeta::Ratio(r),
            (AlphaBetaMode::Fixed, None) => {
                return Err(CliError::Config("model.alpha_beta = \"fixed\" needs model.ratio".into()))
            }
        };
        let spec = SaeSpec::new(self.model.layers.clone(), self.model.activation, self.model.loss)?.with_alpha_beta(alpha_beta);
        spec.validate()?;
        Ok(spec)
    }

    pub fn mask(&self) -> Result<CorruptionMask, CliError> {
        let m = self.mask;
        if !(0.0..=1.0).contains(&m.value) {
            return Err(CliError::Config(format!("mask.value {} must lie in [0, 1] p.u.", m.value)));
        }
        Ok(CorruptionMask::masking_slots(m.first_slot, m.last_slot, m.value)?)
    }

    pub fn training(&self) -> SaeTraining {
        self.training.clone().with_seed(self.seed)
    }

    pub fn bess_config(&self) -> BessConfig {
        BessConfig {
            capacity_kwh: self.bess.capacity_kwh,
            power_limit_kw: self.bess.power_limit_kw,
            initial_soc: self.bess.initial_soc,
            ..BessConfig::default()
        }
    }

    pub fn window(&self) -> Result<PeakWindow, CliError> {
        Ok(PeakWindow::new(self.bess.window.0, self.bess.window.1)?)
    }

    pub fn strategy(&self) -> StrategyParams {
        StrategyParams { threshold_kw: self.bess.threshold_kw }
    }

    pub fn compare_config(&self) -> Result<peakshave::baselines::CompareConfig, CliError> {
        Ok(peakshave::baselines::CompareConfig {
            sae: self.spec()?,
            sae_training: self.training(),
            ann_hidden: self.compare.ann_hidden.clone(),
            ann_activation: Activation::Sigmoid,
            ann_training: TrainConfig { seed: self.seed, ..self.compare.ann_training.clone() },
            elm_hidden: self.compare.elm_hidden,
            folds: self.compare.folds,
            seed: self.seed,
        })
    }
}
