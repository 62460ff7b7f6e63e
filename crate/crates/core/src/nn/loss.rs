use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard for zero targets in MAPE (p.u.).
pub const DEFAULT_MAPE_EPSILON: f64 = 1e-6;

fn same_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape { expected: x.len(), got: y.len() });
    }
    if x.is_empty() {
        return Err(Error::Shape { expected: 1, got: 0 });
    }
    Ok(())
}

/// Mean squared error between a target `x` and a reconstruction `x_hat`.
pub fn loss_mse(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    same_len(x, x_hat)?;
    let s: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / x.len() as f64)
}

/// Mean absolute percentage error, in percent. Denominators are
/// `max(|x_i|, epsilon)`.
pub fn loss_mape(x: &[f64], x_hat: &[f64], epsilon: f64) -> Result<f64> {
    same_len(x, x_hat)?;
    let s: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b).abs() / a.abs().max(epsilon)).sum();
    Ok(100.0 * s / x.len() as f64)
}

/// Group-normalized weighted MSE: `alpha` times the mean squared error over
/// the corrupted dimensions plus `beta` times the mean over the rest.
pub fn loss_weighted_mse(x: &[f64], x_hat: &[f64], cfg: &WeightedMseConfig) -> Result<f64> {
    same_len(x, x_hat)?;
    cfg.check_dim(x.len())?;
    let (mut sc, mut sr) = (0.0, 0.0);
    for ((a, b), &c) in x.iter().zip(x_hat).zip(&cfg.corrupted_mask) {
        let d = (a - b) * (a - b);
        if c {
            sc += d;
        } else {
            sr += d;
        }
    }
    let (nc, nr) = cfg.group_sizes();
    Ok(cfg.alpha * sc / nc as f64 + cfg.beta * sr / nr as f64)
}

/// Weight ratio `alpha / beta` from per-dimension standard deviations: the
/// corrupted group's summed std over the remaining group's, each group
/// normalized by its own size. Returns `(alpha, beta)` with `alpha + beta = 1`.
pub fn ratio_from_std(corrupted: &[usize], dim_std: &[f64]) -> Result<(f64, f64)> {
    let ratio = std_ratio(corrupted, dim_std)?;
    let alpha = ratio / (1.0 + ratio);
    Ok((alpha, 1.0 - alpha))
}

pub(crate) fn std_ratio(corrupted: &[usize], dim_std: &[f64]) -> Result<f64> {
    let n = dim_std.len();
    let mask = corrupted_mask(corrupted, n)?;
    if dim_std.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::DegenerateWeighting("standard deviations must be finite and >= 0".into()));
    }
    let nc = corrupted.len();
    let nr = n - nc;
    let (mut sc, mut sr) = (0.0, 0.0);
    for (&s, &c) in dim_std.iter().zip(&mask) {
        if c {
            sc += s;
        } else {
            sr += s;
        }
    }
    if sc == 0.0 || sr == 0.0 {
        return Err(Error::DegenerateWeighting(format!(
            "zero spread in a group (corrupted {sc}, remaining {sr})"
        )));
    }
    Ok((nr as f64 * sc) / (nc as f64 * sr))
}

fn corrupted_mask(corrupted: &[usize], n: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &i in corrupted {
        if i >= n {
            return Err(Error::DegenerateWeighting(format!("corrupted index {i} out of range 0..{n}")));
        }
        if mask[i] {
            return Err(Error::DegenerateWeighting(format!("corrupted index {i} repeated")));
        }
        mask[i] = true;
    }
    let nc = corrupted.len();
    if nc == 0 || nc == n {
        return Err(Error::DegenerateWeighting(format!(
            "corrupted set must be a nonempty proper subset ({nc} of {n})"
        )));
    }
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMseConfig {
    alpha: f64,
    beta: f64,
    corrupted_mask: Vec<bool>,
    /// Per-dimension training-set std, when the weights were derived from it.
    dim_std: Option<Vec<f64>>,
    sample_count: Option<usize>,
}

impl WeightedMseConfig {
    /// Fixed weights; `corrupted` holds 0-based indices into a `dim`-vector.
    pub fn fixed(alpha: f64, beta: f64, corrupted: &[usize], dim: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) || ((alpha + beta) - 1.0).abs() > 1e-12 {
            return Err(Error::DegenerateWeighting(format!(
                "alpha {alpha} and beta {beta} must lie in [0, 1] and sum to 1"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            corrupted_mask: corrupted_mask(corrupted, dim)?,
            dim_std: None,
            sample_count: None,
        })
    }

    /// Fixed `alpha / beta` ratio (must be positive and finite).
    pub fn from_ratio(ratio: f64, corrupted: &[usize], dim: usize) -> Result<Self> {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::DegenerateWeighting(format!("ratio {ratio} must be positive")));
        }
        let alpha = ratio / (1.0 + ratio);
        Self::fixed(alpha, 1.0 - alpha, corrupted, dim)
    }

    /// Weights from the training set's per-dimension spread.
    pub fn from_std(corrupted: &[usize], dim_std: &[f64], sample_count: usize) -> Result<Self> {
        let (alpha, beta) = ratio_from_std(corrupted, dim_std)?;
        Ok(Self {
            alpha,
            beta,
            corrupted_mask: corrupted_mask(corrupted, dim_std.len())?,
            dim_std: Some(dim_std.to_vec()),
            sample_count: Some(sample_count),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `alpha / beta`; infinite when `beta == 0`.
    pub fn ratio(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn corrupted(&self) -> Vec<usize> {
        (0..self.corrupted_mask.len()).filter(|&i| self.corrupted_mask[i]).collect()
    }

    pub fn dim(&self) -> usize {
        self.corrupted_mask.len()
    }

    pub fn dim_std(&self) -> Option<&[f64]> {
        self.dim_std.as_deref()
    }

    pub fn sample_count(&self) -> Option<usize> {
        self.sample_count
    }

    fn group_sizes(&self) -> (usize, usize) {
        let nc = self.corrupted_mask.iter().filter(|c| **c).count();
        (nc, self.corrupted_mask.len() - nc)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::Shape { expected: self.dim(), got: n });
        }
        Ok(())
    }
}

/// Training objective, evaluated as `loss(target, output)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    Mse,
    Mape { epsilon: f64 },
    WeightedMse(WeightedMseConfig),
}

impl Loss {
    pub fn mape() -> Self {
        Loss::Mape { epsilon: DEFAULT_MAPE_EPSILON }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loss::Mse => "mse",
            Loss::Mape { .. } => "mape",
            Loss::WeightedMse(_) => "weighted_mse",
        }
    }

    pub fn value(&self, target: &[f64], output: &[f64]) -> Result<f64> {
        match self {
            Loss::Mse => loss_mse(target, output),
            Loss::Mape { epsilon } => loss_mape(target, output, *epsilon),
            Loss::WeightedMse(cfg) => loss_weighted_mse(target, output, cfg),
        }
    }

    pub(crate) fn check(&self, dim: usize) -> Result<()> {
        match self {
            Loss::WeightedMse(cfg) => cfg.check_dim(dim),
            Loss::Mape { epsilon } if !(epsilon.is_finite() && *epsilon > 0.0) => {
                Err(Error::InvalidConfig(format!("MAPE epsilon {epsilon} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// d loss / d output, written into `grad`. MAPE uses the sign convention
    /// `sign(0) = 0`.
    pub(crate) fn output_gradient_into(&self, target: &[f64], output: &[f64], grad: &mut [f64]) {
        let n = target.len() as f64;
        match self {
            Loss::Mse => {
                for ((g, t), o) in grad.iter_mut().zip(target).zip(output) {
                    *g = 2.0 * (o - t) / n;
                }
            }
            Loss::Mape { epsilon } => {
                for ((g, t), o) in grad.iter_mut().zip(target).zip(output) {
                    let d = o - t;
                    let sign = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    *g = 100.0 * sign / (n * t.abs().max(*epsilon));
                }
            }
            Loss::WeightedMse(cfg) => {
                let (nc, nr) = cfg.group_sizes();
                let wc = 2.0 * cfg.alpha / nc as f64;
                let wr = 2.0 * cfg.beta / nr as f64;
                for (((g, t), o), &c) in grad.iter_mut().zip(target).zip(output).zip(&cfg.corrupted_mask) {
                    *g = if c { wc } else { wr } * (o - t);
                }
            }
        }
    }
}
