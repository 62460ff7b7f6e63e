use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BackpropScratch, Gradients, Loss, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Passes over the training set.
    pub max_iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Uniform init bound; `None` uses the Glorot bound per layer.
    pub init_scale: Option<f64>,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_iterations: 300,
            batch_size: 16,
            seed: 42,
            init_scale: None,
            early_stop_patience: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!("learning_rate {} must be >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if let Some(s) = self.init_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidConfig(format!("init_scale {s} must be positive")));
            }
        }
        Ok(())
    }
}

/// Paired inputs and targets.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    pub inputs: &'a [Vec<f64>],
    pub targets: &'a [Vec<f64>],
}

impl<'a> Samples<'a> {
    pub fn new(inputs: &'a [Vec<f64>], targets: &'a [Vec<f64>]) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape { expected: inputs.len(), got: targets.len() });
        }
        Ok(Self { inputs, targets })
    }

    /// Autoencoder samples: every input is its own target.
    pub fn reconstruction(data: &'a [Vec<f64>]) -> Self {
        Self { inputs: data, targets: data }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn check(&self, net: &Network) -> Result<()> {
        for (x, t) in self.inputs.iter().zip(self.targets) {
            if x.len() != net.input_size() {
                return Err(Error::Shape { expected: net.input_size(), got: x.len() });
            }
            if t.len() != net.output_size() {
                return Err(Error::Shape { expected: net.output_size(), got: t.len() });
            }
        }
        Ok(())
    }
}

/// Fresh input corruption drawn for every presentation of a sample.
pub trait InputNoise: Sync {
    fn corrupt(&self, input: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub entries: Vec<HistoryEntry>,
}

impl LossHistory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_train(&self) -> Option<f64> {
        self.entries.last().map(|e| e.train_loss)
    }

    /// CSV `iteration,train_loss,val_loss`; missing validation is empty.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "train_loss", "val_loss"])?;
        for e in &self.entries {
            w.write_record([
                e.iteration.to_string(),
                e.train_loss.to_string(),
                e.val_loss.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_loss(net: &Network, samples: Samples<'_>, loss: &Loss, scratch: &mut BackpropScratch) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in samples.inputs.iter().zip(samples.targets) {
        total += loss.value(t, scratch.forward(net, x))?;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch SGD with a fixed learning rate. Samples are reshuffled every
/// pass from a generator seeded by `cfg.seed`; the same inputs, config and
/// noise give bit-identical results.
///
/// With early stopping enabled and validation data present, the returned
/// network is the one with the lowest validation loss.
pub fn train(
    net: &Network,
    train: Samples<'_>,
    validation: Option<Samples<'_>>,
    cfg: &TrainConfig,
    loss: &Loss,
    noise: Option<&dyn InputNoise>,
) -> Result<(Network, LossHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    train.check(net)?;
    loss.check(net.output_size())?;
    if let Some(v) = validation {
        if v.is_empty() {
            return Err(Error::InsufficientData("validation set is empty".into()));
        }
        v.check(net)?;
    }

    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = Gradients::zeros_like(&net);
    let mut scratch = BackpropScratch::new(&net);
    let mut noisy = vec![0.0; net.input_size()];
    let mut history = LossHistory::default();
    let mut best: Option<(f64, Network)> = None;
    let mut since_best = 0;

    for iteration in 1..=cfg.max_iterations {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &i in batch {
                let input: &[f64] = match noise {
                    Some(n) => {
                        n.corrupt(&train.inputs[i], &mut rng, &mut noisy);
                        &noisy
                    }
                    None => &train.inputs[i],
                };
                let out = scratch.forward(&net, input);
                epoch_loss += loss.value(&train.targets[i], out)?;
                scratch.backward(&net, &train.targets[i], loss, &mut grads);
            }
            net.apply_update(&grads, cfg.learning_rate / batch.len() as f64);
        }
        let train_loss = epoch_loss / train.len() as f64;
        if !train_loss.is_finite() || !net.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        let val_loss = match validation {
            Some(v) => {
                let l = mean_loss(&net, v, loss, &mut scratch)?;
                if !l.is_finite() {
                    return Err(Error::Divergence { iteration });
                }
                Some(l)
            }
            None => None,
        };
        history.entries.push(HistoryEntry { iteration, train_loss, val_loss });

        if let (Some(v), true) = (val_loss, cfg.early_stop_patience > 0) {
            match &best {
                Some((b, _)) if v >= *b => {
                    since_best += 1;
                    if since_best >= cfg.early_stop_patience {
                        break;
                    }
                }
                _ => {
                    best = Some((v, net.clone()));
                    since_best = 0;
                }
            }
        }
    }
    if let Some((_, b)) = best {
        net = b;
    }
    Ok((net, history))
}
