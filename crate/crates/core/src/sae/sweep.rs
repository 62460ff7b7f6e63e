use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    evaluate_peak_rmse, fine_tune, pretrain_greedy, train_sae, weighted_config, AlphaBeta, Corruption, LossKind,
    SaeSpec, SaeTraining,
};
use crate::curves::{kfold_indices, CorruptionMask, Dataset, NormalizationContext};
use crate::error::{Error, Result};
use crate::nn::{HistoryEntry, Loss, WeightedMseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: f64,
    pub rmse_kw: f64,
    pub mape_pct: f64,
    pub is_eq7_ratio: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Sorted by parameter value.
    pub points: Vec<SweepPoint>,
    /// Parameter with the lowest RMSE; ties go to the smaller value.
    pub argmin: f64,
}

impl SweepResult {
    fn from_points(mut points: Vec<SweepPoint>) -> Self {
        points.sort_by(|a, b| a.param.total_cmp(&b.param));
        let best = points
            .iter()
            .fold(None::<&SweepPoint>, |best, p| match best {
                Some(b) if b.rmse_kw <= p.rmse_kw => Some(b),
                _ => Some(p),
            })
            .expect("sweeps have at least one point");
        let argmin = best.param;
        Self { points, argmin }
    }

    pub fn rmse_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rmse_kw).collect()
    }
}

/// CSV `param,rmse_kw,mape_pct,is_argmin,is_eq7_ratio`.
pub fn write_sweep(out: impl Write, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "rmse_kw", "mape_pct", "is_argmin", "is_eq7_ratio"])?;
    for p in &result.points {
        w.write_record([
            p.param.to_string(),
            p.rmse_kw.to_string(),
            p.mape_pct.to_string(),
            (p.param == result.argmin).to_string(),
            p.is_eq7_ratio.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains and scores one model per mask value. All points fine-tune from
/// the same pretrained network with the same seed, so they differ only in
/// the mask value used for training and evaluation.
#[allow(clippy::too_many_arguments)]
pub fn sweep_mask_value(
    spec: &SaeSpec,
    train_kw: &Dataset,
    test_kw: &Dataset,
    ctx: &NormalizationContext,
    mask: &CorruptionMask,
    training: &SaeTraining,
    grid: &[f64],
    corruption: Corruption,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("mask-value grid is empty".into()));
    }
    if let Some(v) = grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidConfig(format!("mask value {v} outside [0, 1] p.u.")));
    }
    let train_pu = ctx.normalize_dataset(train_kw);
    let pretrained = pretrain_greedy(spec, &train_pu, &training.pretrain)?;
    let loss = match corruption {
        Corruption::Fixed | Corruption::Clean => spec.resolve_loss(&train_pu, mask)?,
        Corruption::Random { .. } => Loss::Mse,
    };
    let points = grid
        .par_iter()
        .map(|&c| {
            let m = mask.with_mask_value(c);
            let run = || -> Result<SweepPoint> {
                let (net, _) = fine_tune(&pretrained, &train_pu, None, &training.fine_tune, &loss, &m, corruption)?;
                let metrics = evaluate_peak_rmse(&net, test_kw, &m, ctx)?;
                Ok(SweepPoint { param: c, rmse_kw: metrics.rmse_kw, mape_pct: metrics.mape_pct, is_eq7_ratio: false })
            };
            run().map_err(|e| e.at_grid_point(c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult::from_points(points))
}

/// Weighted-MSE models over a list of `alpha / beta` ratios, plus the ratio
/// derived from the training set's spread (flagged in the result).
#[allow(clippy::too_many_arguments)]
pub fn sweep_alpha_beta(
    spec: &SaeSpec,
    train_kw: &Dataset,
    test_kw: &Dataset,
    ctx: &NormalizationContext,
    mask: &CorruptionMask,
    training: &SaeTraining,
    ratios: &[f64],
    corruption: Corruption,
) -> Result<SweepResult> {
    if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::InvalidConfig(format!("alpha/beta ratio {r} must be positive")));
    }
    let train_pu = ctx.normalize_dataset(train_kw);
    let eq7 = weighted_config(AlphaBeta::Eq7, &train_pu, mask)?;
    let eq7_ratio = eq7.ratio();
    let mut jobs: Vec<(f64, WeightedMseConfig, bool)> = ratios
        .iter()
        .map(|&r| Ok((r, WeightedMseConfig::from_ratio(r, &mask.masked_indices(), mask.keep().len())?, false)))
        .collect::<Result<_>>()?;
    match jobs.iter_mut().find(|(r, _, _)| *r == eq7_ratio) {
        Some(j) => j.2 = true,
        None => jobs.push((eq7_ratio, eq7, true)),
    }
    let pretrained = pretrain_greedy(spec, &train_pu, &training.pretrain)?;
    let points = jobs
        .into_par_iter()
        .map(|(r, cfg, is_eq7)| {
            let run = || -> Result<SweepPoint> {
                let loss = Loss::WeightedMse(cfg);
                let (net, _) =
                    fine_tune(&pretrained, &train_pu, None, &training.fine_tune, &loss, mask, corruption)?;
                let metrics = evaluate_peak_rmse(&net, test_kw, mask, ctx)?;
                Ok(SweepPoint { param: r, rmse_kw: metrics.rmse_kw, mape_pct: metrics.mape_pct, is_eq7_ratio: is_eq7 })
            };
            run().map_err(|e| e.at_grid_point(r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult::from_points(points))
}

/// Fold-averaged training curves and scores for one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureResult {
    pub spec: SaeSpec,
    /// Per-iteration mean over folds, truncated to the shortest fold.
    pub history: Vec<HistoryEntry>,
    /// Mean validation loss over the last 5% of iterations.
    pub converged_val_loss: f64,
    pub rmse_kw: f64,
    pub mape_pct: f64,
}

/// Mean of the final 5% (at least one) of `values`.
pub fn converged_value(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = ((values.len() as f64 * 0.05).ceil() as usize).clamp(1, values.len());
    Some(values[values.len() - n..].iter().sum::<f64>() / n as f64)
}

/// k-fold comparison of several architectures on kW curves.
#[allow(clippy::too_many_arguments)]
pub fn compare_architectures(
    specs: &[SaeSpec],
    data_kw: &Dataset,
    ctx: &NormalizationContext,
    mask: &CorruptionMask,
    training: &SaeTraining,
    folds: usize,
    seed: u64,
) -> Result<Vec<ArchitectureResult>> {
    if specs.is_empty() {
        return Err(Error::InvalidConfig("no architectures to compare".into()));
    }
    for s in specs {
        s.validate()?;
    }
    let fold_idx = kfold_indices(data_kw.len(), folds, seed)?;
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|s| (0..folds).map(move |f| (s, f))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(s, f)| {
            let train = data_kw.subset(&fold_idx[f].train);
            let val = data_kw.subset(&fold_idx[f].validation);
            let t = train_sae(&specs[s], &train, Some(&val), ctx, mask, training)?;
            let metrics = evaluate_peak_rmse(&t.model.network, &val, mask, ctx)?;
            Ok((t.history, metrics))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(specs.len());
    for (s, spec) in specs.iter().enumerate() {
        let fold_runs = &runs[s * folds..(s + 1) * folds];
        let len = fold_runs.iter().map(|(h, _)| h.len()).min().unwrap_or(0);
        let k = folds as f64;
        let history: Vec<HistoryEntry> = (0..len)
            .map(|i| {
                let train_loss = fold_runs.iter().map(|(h, _)| h.entries[i].train_loss).sum::<f64>() / k;
                let val = fold_runs.iter().map(|(h, _)| h.entries[i].val_loss.unwrap_or(f64::NAN)).sum::<f64>() / k;
                HistoryEntry { iteration: i + 1, train_loss, val_loss: Some(val) }
            })
            .collect();
        let val_losses: Vec<f64> = history.iter().filter_map(|e| e.val_loss).collect();
        out.push(ArchitectureResult {
            spec: spec.clone(),
            converged_val_loss: converged_value(&val_losses).unwrap_or(f64::NAN),
            history,
            rmse_kw: fold_runs.iter().map(|(_, m)| m.rmse_kw).sum::<f64>() / k,
            mape_pct: fold_runs.iter().map(|(_, m)| m.mape_pct).sum::<f64>() / k,
        });
    }
    Ok(out)
}

/// Architectures from the layer-count comparison: 3, 5, 7 and 9 layers.
pub fn standard_architectures(loss: LossKind) -> Vec<SaeSpec> {
    [
        vec![48, 24, 48],
        vec![48, 24, 12, 24, 48],
        vec![48, 24, 12, 6, 12, 24, 48],
        vec![48, 24, 12, 6, 3, 6, 12, 24, 48],
    ]
    .into_iter()
    .map(|sizes| SaeSpec { layer_sizes: sizes, ..SaeSpec::five_layer() }.with_loss(loss))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{split, synth_generate, SynthProfile};
    use crate::nn::TrainConfig;

    fn tiny() -> SaeTraining {
        SaeTraining {
            pretrain: TrainConfig { learning_rate: 0.5, max_iterations: 4, batch_size: 16, ..Default::default() },
            fine_tune: TrainConfig { learning_rate: 0.5, max_iterations: 6, batch_size: 16, ..Default::default() },
        }
    }

    fn setup() -> (Dataset, Dataset, NormalizationContext, CorruptionMask) {
        let d = synth_generate(80, 4, &SynthProfile::default()).unwrap();
        let ctx = NormalizationContext::from_dataset(&d).unwrap();
        let (a, b) = split(&d, 60, 2).unwrap();
        (a, b, ctx, CorruptionMask::masking_slots(36, 48, 0.66).unwrap())
    }

    #[test]
    fn argmin_ties_go_to_smaller_param() {
        let p = |param, rmse| SweepPoint { param, rmse_kw: rmse, mape_pct: 0.0, is_eq7_ratio: false };
        let r = SweepResult::from_points(vec![p(0.7, 1.0), p(0.2, 1.0), p(0.5, 2.0)]);
        assert_eq!(r.argmin, 0.2);
        assert_eq!(r.points.iter().map(|p| p.param).collect::<Vec<_>>(), vec![0.2, 0.5, 0.7]);
    }

    #[test]
    fn single_point_grid() {
        let (train, test, ctx, mask) = setup();
        let r = sweep_mask_value(&SaeSpec::five_layer(), &train, &test, &ctx, &mask, &tiny(), &[0.4], Corruption::Fixed)
            .unwrap();
        assert_eq!(r.points.len(), 1);
        assert_eq!(r.argmin, 0.4);
    }

    #[test]
    fn grid_order_is_irrelevant() {
        let (train, test, ctx, mask) = setup();
        let spec = SaeSpec::five_layer();
        let a = sweep_mask_value(&spec, &train, &test, &ctx, &mask, &tiny(), &[0.0, 0.5, 1.0], Corruption::Fixed).unwrap();
        let b = sweep_mask_value(&spec, &train, &test, &ctx, &mask, &tiny(), &[1.0, 0.0, 0.5], Corruption::Fixed).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_grids() {
        let (train, test, ctx, mask) = setup();
        let spec = SaeSpec::five_layer();
        assert!(sweep_mask_value(&spec, &train, &test, &ctx, &mask, &tiny(), &[], Corruption::Fixed).is_err());
        assert!(sweep_mask_value(&spec, &train, &test, &ctx, &mask, &tiny(), &[1.5], Corruption::Fixed).is_err());
        assert!(sweep_alpha_beta(&spec, &train, &test, &ctx, &mask, &tiny(), &[0.0], Corruption::Fixed).is_err());
    }

    #[test]
    fn alpha_beta_sweep_flags_eq7_point() {
        let (train, test, ctx, mask) = setup();
        let spec = SaeSpec::five_layer().with_loss(LossKind::WeightedMse);
        let r = sweep_alpha_beta(&spec, &train, &test, &ctx, &mask, &tiny(), &[1.0, 4.0], Corruption::Fixed).unwrap();
        assert_eq!(r.points.len(), 3);
        assert_eq!(r.points.iter().filter(|p| p.is_eq7_ratio).count(), 1);
        let mut buf = Vec::new();
        write_sweep(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("param,rmse_kw,mape_pct,is_argmin,is_eq7_ratio\n"));
        assert_eq!(text.lines().filter(|l| l.ends_with(",true")).count(), 1);
    }

    #[test]
    fn architecture_comparison_shapes() {
        let (train, _, ctx, mask) = setup();
        let specs = standard_architectures(LossKind::Mse);
        let out = compare_architectures(&specs[..2], &train, &ctx, &mask, &tiny(), 3, 1).unwrap();
        assert_eq!(out.len(), 2);
        for r in &out {
            assert!(r.history.len() <= 6);
            assert!(r.history.iter().all(|e| e.train_loss.is_finite() && e.val_loss.unwrap().is_finite()));
            assert!(r.rmse_kw.is_finite() && r.converged_val_loss.is_finite());
        }
        let single = compare_architectures(&specs[..1], &train, &ctx, &mask, &tiny(), 3, 1).unwrap();
        assert_eq!(single[0], out[0]);
        assert!(compare_architectures(&[], &train, &ctx, &mask, &tiny(), 3, 1).is_err());
    }

    #[test]
    fn converged_tail_mean() {
        assert_eq!(converged_value(&[]), None);
        assert_eq!(converged_value(&[3.0]), Some(3.0));
        let v: Vec<f64> = (1..=40).map(f64::from).collect();
        // last 5% of 40 = 2 values: 39, 40
        assert_eq!(converged_value(&v), Some(39.5));
    }
}
