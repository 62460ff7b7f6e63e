//! Daily load curves and the dataset operations built on them.
//!
//! A [`DailyCurve`] is one community-day of mean power per 30-minute slot.
//! Slot numbers are 1-based wherever they cross a public boundary (CSV files,
//! mask ranges, peak windows) and 0-based inside the vectors.

mod io;
mod synth;

pub use io::{ingest_readings, read_curves, read_readings, write_curves, Reading};
pub use synth::{synth_generate, SynthProfile};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slots per day at 30-minute resolution.
pub const SLOTS: usize = 48;

/// Length of one slot in hours.
pub const SLOT_HOURS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DailyCurve {
    values: [f64; SLOTS],
    date_tag: String,
}

impl DailyCurve {
    pub fn new(date_tag: impl Into<String>, values: [f64; SLOTS]) -> Result<Self> {
        let date_tag = date_tag.into();
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidReading(format!(
                "curve {date_tag}: slot {} has value {v}",
                i + 1
            )));
        }
        Ok(Self { values, date_tag })
    }

    pub fn from_slice(date_tag: impl Into<String>, values: &[f64]) -> Result<Self> {
        let arr: [f64; SLOTS] = values
            .try_into()
            .map_err(|_| Error::Shape { expected: SLOTS, got: values.len() })?;
        Self::new(date_tag, arr)
    }

    pub fn values(&self) -> &[f64; SLOTS] {
        &self.values
    }

    pub fn date_tag(&self) -> &str {
        &self.date_tag
    }

    /// Value at a 1-based slot.
    pub fn slot(&self, slot: usize) -> f64 {
        self.values[slot - 1]
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut values = self.values;
        values.iter_mut().for_each(|v| *v = f(*v));
        Self { values, date_tag: self.date_tag.clone() }
    }
}

/// Masking-noise corruption: kept slots pass through, masked slots are
/// replaced by a constant `mask_value` (in p.u.).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionMask {
    keep: Vec<bool>,
    mask_value: f64,
}

impl CorruptionMask {
    pub fn new(keep: Vec<bool>, mask_value: f64) -> Result<Self> {
        if keep.len() != SLOTS {
            return Err(Error::Shape { expected: SLOTS, got: keep.len() });
        }
        if !mask_value.is_finite() {
            return Err(Error::InvalidConfig(format!("mask value {mask_value} is not finite")));
        }
        Ok(Self { keep, mask_value })
    }

    pub fn keep_all(mask_value: f64) -> Self {
        Self { keep: vec![true; SLOTS], mask_value }
    }

    /// Masks the inclusive 1-based slot range `first..=last`.
    pub fn masking_slots(first: usize, last: usize, mask_value: f64) -> Result<Self> {
        if first == 0 || first > last || last > SLOTS {
            return Err(Error::InvalidConfig(format!(
                "mask slots {first}..={last} outside 1..={SLOTS}"
            )));
        }
        let keep = (1..=SLOTS).map(|s| s < first || s > last).collect();
        Self::new(keep, mask_value)
    }

    pub fn with_mask_value(&self, mask_value: f64) -> Self {
        Self { keep: self.keep.clone(), mask_value }
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn mask_value(&self) -> f64 {
        self.mask_value
    }

    /// 0-based indices of the masked (corrupted) slots.
    pub fn masked_indices(&self) -> Vec<usize> {
        (0..SLOTS).filter(|&i| !self.keep[i]).collect()
    }

    /// 0-based indices of the kept slots.
    pub fn kept_indices(&self) -> Vec<usize> {
        (0..SLOTS).filter(|&i| self.keep[i]).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }

    pub fn kept_count(&self) -> usize {
        SLOTS - self.masked_count()
    }

    /// Applies the mask to a raw vector, writing into `out`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &xi), &k) in out.iter_mut().zip(x).zip(&self.keep) {
            *o = if k { xi } else { self.mask_value };
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }
}

/// Replaces masked slots of `x` with the mask value.
pub fn corrupt(x: &DailyCurve, mask: &CorruptionMask) -> DailyCurve {
    let mut values = x.values;
    mask.apply_into(&x.values, &mut values);
    DailyCurve { values, date_tag: x.date_tag.clone() }
}

/// Per-unit convention: 1 p.u. is the highest load in the reference dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationContext {
    base_kw: f64,
}

impl NormalizationContext {
    pub fn new(base_kw: f64) -> Result<Self> {
        if !(base_kw.is_finite() && base_kw > 0.0) {
            return Err(Error::InvalidNormalization(base_kw));
        }
        Ok(Self { base_kw })
    }

    /// Uses the largest value in `data` as the base.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let max = data.curves.iter().map(DailyCurve::peak).fold(0.0, f64::max);
        Self::new(max)
    }

    pub fn base_kw(&self) -> f64 {
        self.base_kw
    }

    pub fn normalize(&self, x: &DailyCurve) -> DailyCurve {
        x.map(|v| v / self.base_kw)
    }

    pub fn denormalize(&self, x: &DailyCurve) -> DailyCurve {
        x.map(|v| v * self.base_kw)
    }

    pub fn normalize_dataset(&self, data: &Dataset) -> Dataset {
        Dataset {
            curves: data.curves.iter().map(|c| self.normalize(c)).collect(),
            provenance: data.provenance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Augmented,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub curves: Vec<DailyCurve>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(curves: Vec<DailyCurve>, provenance: Provenance) -> Self {
        Self { curves, provenance }
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            curves: indices.iter().map(|&i| self.curves[i].clone()).collect(),
            provenance: self.provenance,
        }
    }

    /// Curves as plain vectors, the form the networks consume.
    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.curves.iter().map(|c| c.values.to_vec()).collect()
    }

    /// Per-slot sample standard deviation (J − 1 denominator).
    pub fn slot_std(&self) -> Result<[f64; SLOTS]> {
        let n = self.curves.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "standard deviation needs at least 2 curves, got {n}"
            )));
        }
        let mut mean = [0.0; SLOTS];
        for c in &self.curves {
            for (m, v) in mean.iter_mut().zip(&c.values) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = [0.0; SLOTS];
        for c in &self.curves {
            for ((s, v), m) in var.iter_mut().zip(&c.values).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        Ok(var.map(|s| (s / (n - 1) as f64).sqrt()))
    }
}

/// Appends the element-wise mean of every unordered pair of distinct days,
/// pairs ordered lexicographically by day index.
pub fn augment_pairwise(base: &Dataset) -> Result<Dataset> {
    let n = base.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "pairwise augmentation needs at least 2 curves, got {n}"
        )));
    }
    let mut curves = Vec::with_capacity(n + n * (n - 1) / 2);
    curves.extend(base.curves.iter().cloned());
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&base.curves[i], &base.curves[j]);
            let mut values = [0.0; SLOTS];
            for (k, v) in values.iter_mut().enumerate() {
                *v = (a.values[k] + b.values[k]) / 2.0;
            }
            curves.push(DailyCurve { values, date_tag: format!("{}+{}", a.date_tag, b.date_tag) });
        }
    }
    Ok(Dataset { curves, provenance: Provenance::Augmented })
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Seeded shuffle, then the first `train_count` curves go to training.
pub fn split(data: &Dataset, train_count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if train_count == 0 || train_count >= data.len() {
        return Err(Error::InvalidSplit { train_count, total: data.len() });
    }
    let idx = shuffled_indices(data.len(), seed);
    let (train, test) = idx.split_at(train_count);
    Ok((data.subset(train), data.subset(test)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Index form of [`kfold`]: contiguous chunks of a seeded permutation, the
/// first `n % k` chunks one element larger.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<FoldIndices>> {
    if k < 2 || n < k {
        return Err(Error::InvalidFoldCount { k, total: n });
    }
    let idx = shuffled_indices(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let end = start + len;
        let validation = idx[start..end].to_vec();
        let train = idx[..start].iter().chain(&idx[end..]).copied().collect();
        folds.push(FoldIndices { train, validation });
        start = end;
    }
    Ok(folds)
}

pub fn kfold(data: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    Ok(kfold_indices(data.len(), k, seed)?
        .into_iter()
        .map(|f| (data.subset(&f.train), data.subset(&f.validation)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(tag: &str, f: impl Fn(usize) -> f64) -> DailyCurve {
        DailyCurve::new(tag, std::array::from_fn(f)).unwrap()
    }

    fn dataset(n: usize) -> Dataset {
        let curves = (0..n).map(|d| curve(&format!("d{d}"), |i| (d * SLOTS + i) as f64)).collect();
        Dataset::new(curves, Provenance::Original)
    }

    #[test]
    fn rejects_negative_and_nan_values() {
        let mut v = [1.0; SLOTS];
        v[3] = -0.1;
        assert!(DailyCurve::new("x", v).is_err());
        v[3] = f64::NAN;
        assert!(DailyCurve::new("x", v).is_err());
        assert!(matches!(
            DailyCurve::from_slice("x", &[1.0; 47]),
            Err(Error::Shape { expected: 48, got: 47 })
        ));
    }

    #[test]
    fn augment_two_curves() {
        let u = curve("u", |i| i as f64);
        let v = curve("v", |i| 2.0 * i as f64 + 1.0);
        let out = augment_pairwise(&Dataset::new(vec![u.clone(), v.clone()], Provenance::Original))
            .unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.curves[0], u);
        assert_eq!(out.curves[1], v);
        for i in 0..SLOTS {
            assert_eq!(out.curves[2].values[i], (u.values[i] + v.values[i]) / 2.0);
        }
    }

    #[test]
    fn augment_four_matches_brute_force_pairs() {
        let base = dataset(4);
        let out = augment_pairwise(&base).unwrap();
        assert_eq!(out.len(), 10);
        let mut pairs = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                if a < b {
                    pairs.push((a, b));
                }
            }
        }
        for (slot, (a, b)) in pairs.into_iter().enumerate() {
            let got = &out.curves[4 + slot];
            for i in 0..SLOTS {
                let want = (base.curves[a].values[i] + base.curves[b].values[i]) / 2.0;
                assert_eq!(got.values[i], want);
            }
        }
    }

    #[test]
    fn augment_needs_two() {
        assert!(matches!(augment_pairwise(&dataset(1)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn corrupt_examples() {
        let x = curve("x", |i| i as f64 / 48.0);
        assert_eq!(corrupt(&x, &CorruptionMask::keep_all(0.3)), x);

        let all = CorruptionMask::new(vec![false; SLOTS], 0.66).unwrap();
        assert!(corrupt(&x, &all).values.iter().all(|&v| v == 0.66));

        let m = CorruptionMask::masking_slots(36, 48, 0.0).unwrap();
        assert_eq!(m.masked_count(), 13);
        let c = corrupt(&x, &m);
        for s in 1..=SLOTS {
            if s >= 36 {
                assert_eq!(c.slot(s), 0.0);
            } else {
                assert_eq!(c.slot(s), x.slot(s));
            }
        }
    }

    #[test]
    fn mask_slot_range_validation() {
        assert!(CorruptionMask::masking_slots(0, 3, 0.0).is_err());
        assert!(CorruptionMask::masking_slots(5, 4, 0.0).is_err());
        assert!(CorruptionMask::masking_slots(40, 49, 0.0).is_err());
        assert!(CorruptionMask::new(vec![true; 12], 0.0).is_err());
    }

    #[test]
    fn normalization() {
        let ctx = NormalizationContext::new(332.32).unwrap();
        let mut v = [0.0; SLOTS];
        v[0] = 332.32;
        let x = DailyCurve::new("d", v).unwrap();
        let n = ctx.normalize(&x);
        assert_eq!(n.values[0], 1.0);
        assert!(n.values[1..].iter().all(|&v| v == 0.0));
        assert!(matches!(NormalizationContext::new(0.0), Err(Error::InvalidNormalization(_))));
        assert!(NormalizationContext::new(-1.0).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = dataset(20);
        let (a, b) = split(&d, 15, 7).unwrap();
        assert_eq!((a.len(), b.len()), (15, 5));
        assert_eq!(split(&d, 15, 7).unwrap(), (a, b));
        assert!(matches!(split(&d, 0, 1), Err(Error::InvalidSplit { .. })));
        assert!(matches!(split(&d, 20, 1), Err(Error::InvalidSplit { .. })));
    }

    #[test]
    fn split_arithmetic_for_full_augmented_size() {
        let idx = shuffled_indices(52_975, 1);
        assert_eq!(idx.len() - 45_000, 7_975);
    }

    #[test]
    fn kfold_sizes() {
        let folds = kfold_indices(52_975, 5, 3).unwrap();
        assert!(folds.iter().all(|f| f.validation.len() == 10_595));
        assert!(folds.iter().all(|f| f.train.len() == 52_975 - 10_595));

        let two = kfold_indices(2, 2, 0).unwrap();
        let mut seen: Vec<usize> = two.iter().flat_map(|f| f.validation.clone()).collect();
        seen.sort();
        assert_eq!(seen, vec![0, 1]);

        let uneven = kfold_indices(11, 3, 0).unwrap();
        let sizes: Vec<usize> = uneven.iter().map(|f| f.validation.len()).collect();
        assert_eq!(sizes, vec![4, 4, 3]);

        assert!(matches!(kfold_indices(5, 1, 0), Err(Error::InvalidFoldCount { .. })));
        assert!(matches!(kfold_indices(3, 4, 0), Err(Error::InvalidFoldCount { .. })));
    }

    #[test]
    fn slot_std_matches_hand_value() {
        let a = curve("a", |_| 1.0);
        let b = curve("b", |_| 3.0);
        let std = Dataset::new(vec![a, b], Provenance::Original).slot_std().unwrap();
        // mean 2, squared deviations 1 + 1, over J - 1 = 1
        assert!(std.iter().all(|&s| (s - 2f64.sqrt()).abs() < 1e-15));
    }
}
