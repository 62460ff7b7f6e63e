use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DailyCurve, Dataset, Provenance, SLOTS};
use crate::error::{Error, Result};

/// Shape parameters for synthetic duck-shaped community curves. Amplitudes
/// are relative to the evening peak before scaling to `peak_range_kw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthProfile {
    pub peak_range_kw: (f64, f64),
    /// 1-based inclusive slots holding the evening peak.
    pub peak_window: (usize, usize),
    pub base_range: (f64, f64),
    pub morning_range: (f64, f64),
    pub pv_dip_range: (f64, f64),
    /// Height of the sustained load across the peak window.
    pub plateau_range: (f64, f64),
    /// Height of the evening bump on top of the plateau.
    pub evening_amp_range: (f64, f64),
    /// Width (in slots) of the evening bump.
    pub evening_width: (f64, f64),
    /// How strongly the shape parameters follow one shared day-type factor
    /// (0 = independent draws, 1 = fully determined by it). Coupling makes
    /// the evening peak predictable from the rest of the day.
    pub coupling: f64,
    /// Relative per-slot noise.
    pub noise: f64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            peak_range_kw: (250.0, 335.0),
            peak_window: (29, 40),
            base_range: (0.30, 0.40),
            morning_range: (0.25, 0.45),
            pv_dip_range: (0.05, 0.20),
            plateau_range: (0.60, 0.90),
            evening_amp_range: (0.30, 0.60),
            evening_width: (1.5, 3.0),
            coupling: 0.85,
            noise: 0.02,
        }
    }
}

impl SynthProfile {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.peak_range_kw;
        let (ws, we) = self.peak_window;
        let ranges = [self.peak_range_kw, self.base_range, self.morning_range, self.pv_dip_range, self.plateau_range,
            self.evening_amp_range, self.evening_width];
        if ranges.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b && *a >= 0.0)) {
            return Err(Error::InvalidConfig("synthetic profile ranges must be finite, ordered and non-negative".into()));
        }
        if lo <= 0.0 || hi <= 0.0 {
            return Err(Error::InvalidConfig("peak range must be positive".into()));
        }
        if ws == 0 || we > SLOTS || we < ws + 5 {
            return Err(Error::InvalidConfig(format!(
                "peak window {ws}..={we} must lie in 1..={SLOTS} and span at least 6 slots"
            )));
        }
        if self.evening_width.0 <= 0.0 {
            return Err(Error::InvalidConfig("evening width must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::InvalidConfig("coupling must be in [0, 1]".into()));
        }
        if !(0.0..0.2).contains(&self.noise) {
            return Err(Error::InvalidConfig("noise must be in [0, 0.2)".into()));
        }
        Ok(())
    }
}

fn bump(slot: f64, center: f64, width: f64) -> f64 {
    let z = (slot - center) / width;
    (-0.5 * z * z).exp()
}

/// Smooth box over `[start, end]` with logistic edges.
fn plateau(slot: f64, start: f64, end: f64) -> f64 {
    let edge = |z: f64| 1.0 / (1.0 + (-z / 0.6).exp());
    edge(slot - start) * edge(end - slot)
}

fn lerp((lo, hi): (f64, f64), t: f64) -> f64 {
    lo + (hi - lo) * t
}

/// Generates `days` reproducible duck curves: overnight base, morning
/// shoulder, midday PV depression, and a sustained evening shelf across the
/// peak window with a peak bump inside it.
/// Each curve is scaled so its maximum equals a peak drawn from the range.
pub fn synth_generate(days: usize, seed: u64, profile: &SynthProfile) -> Result<Dataset> {
    if days == 0 {
        return Err(Error::InvalidConfig("days must be at least 1".into()));
    }
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, profile.noise.max(0.0)).expect("valid sigma");
    // 0-based slot centres
    let (ws, we) = (profile.peak_window.0 as f64 - 1.0, profile.peak_window.1 as f64 - 1.0);
    let mut curves = Vec::with_capacity(days);
    for d in 0..days {
        let peak = lerp(profile.peak_range_kw, rng.random());
        let day_type: f64 = rng.random();
        let k = profile.coupling;
        let mut draw = |t: f64| k * t + (1.0 - k) * rng.random::<f64>();
        let base = draw(day_type);
        let morning = draw(day_type);
        let dip = draw(1.0 - day_type);
        let shelf = draw(day_type);
        let amp = draw(1.0 - day_type);
        let width = draw(day_type);
        let center = draw(day_type);
        let (base, morning, dip) =
            (lerp(profile.base_range, base), lerp(profile.morning_range, morning), lerp(profile.pv_dip_range, dip));
        let (shelf, amp, width) = (
            lerp(profile.plateau_range, shelf),
            lerp(profile.evening_amp_range, amp),
            lerp(profile.evening_width, width),
        );
        let center = lerp((ws + 2.5, we - 2.5), center);

        let mut shape = [0.0; SLOTS];
        for (i, v) in shape.iter_mut().enumerate() {
            let s = i as f64;
            let clean = base + morning * bump(s, 15.5, 3.0) - dip * bump(s, 25.5, 3.5)
                + shelf * plateau(s, ws - 0.5, we + 0.5)
                + amp * bump(s, center, width);
            *v = (clean * (1.0 + noise.sample(&mut rng))).max(0.0);
        }
        let max = shape.iter().copied().fold(0.0, f64::max);
        let values = shape.map(|v| v / max * peak);
        curves.push(DailyCurve::new(format!("syn-{:05}", d + 1), values)?);
    }
    Ok(Dataset::new(curves, Provenance::Synthetic))
}
