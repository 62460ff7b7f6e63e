//! Battery peak-shaving dispatch.
//!
//! Four discharge-only strategies over a fixed peak window, all sharing one
//! slot-by-slot battery model: a slot's request is clipped to the load (the
//! residual never goes negative), to the optional power limit, and to the
//! energy left. The slot that empties the battery discharges exactly what
//! remains.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::curves::{DailyCurve, SLOTS, SLOT_HOURS};
use crate::error::{Error, Result};

/// Battery parameters. The battery starts the window at `initial_soc` and is
/// not recharged inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BessConfig {
    pub capacity_kwh: f64,
    pub power_limit_kw: Option<f64>,
    pub initial_soc: f64,
    pub slot_hours: f64,
}

impl Default for BessConfig {
    fn default() -> Self {
        Self { capacity_kwh: 500.0, power_limit_kw: None, initial_soc: 1.0, slot_hours: SLOT_HOURS }
    }
}

impl BessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_kwh.is_finite() && self.capacity_kwh >= 0.0) {
            return Err(Error::InvalidConfig(format!("capacity {} kWh must be >= 0", self.capacity_kwh)));
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(Error::InvalidConfig(format!("initial_soc {} outside [0, 1]", self.initial_soc)));
        }
        if !(self.slot_hours.is_finite() && self.slot_hours > 0.0) {
            return Err(Error::InvalidConfig("slot_hours must be positive".into()));
        }
        if let Some(p) = self.power_limit_kw {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidConfig(format!("power limit {p} kW must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn usable_kwh(&self) -> f64 {
        self.capacity_kwh * self.initial_soc
    }

    fn power_cap(&self) -> f64 {
        self.power_limit_kw.unwrap_or(f64::INFINITY)
    }
}

/// 1-based inclusive slot range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakWindow {
    start_slot: usize,
    end_slot: usize,
}

impl PeakWindow {
    pub fn new(start_slot: usize, end_slot: usize) -> Result<Self> {
        if start_slot == 0 || start_slot > end_slot || end_slot > SLOTS {
            return Err(Error::InvalidConfig(format!(
                "peak window {start_slot}..={end_slot} outside 1..={SLOTS}"
            )));
        }
        Ok(Self { start_slot, end_slot })
    }

    /// 14:00–20:00.
    pub fn evening() -> Self {
        Self { start_slot: 29, end_slot: 40 }
    }

    pub fn start_slot(&self) -> usize {
        self.start_slot
    }

    pub fn end_slot(&self) -> usize {
        self.end_slot
    }

    pub fn len(&self) -> usize {
        self.end_slot - self.start_slot + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 0-based indices covered by the window.
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start_slot - 1..self.end_slot
    }

    pub fn contains_index(&self, i: usize) -> bool {
        self.indices().contains(&i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub discharge_kw: [f64; SLOTS],
    pub residual_kw: [f64; SLOTS],
    pub energy_used_kwh: f64,
    pub residual_peak_kw: f64,
    /// Zero when the load itself is all zero.
    pub shaving_level_pct: f64,
}

/// Runs the battery against `load`, asking for `request(i)` kW in each
/// window slot `i` (0-based).
fn simulate(load: &DailyCurve, bess: &BessConfig, window: PeakWindow, request: impl Fn(usize) -> f64) -> DispatchResult {
    let h = bess.slot_hours;
    let cap = bess.power_cap();
    let mut remaining = bess.usable_kwh();
    let mut discharge = [0.0; SLOTS];
    for i in window.indices() {
        if remaining <= 0.0 {
            break;
        }
        let want = request(i).min(load.values()[i]).min(cap).max(0.0);
        if want * h <= remaining {
            discharge[i] = want;
            remaining -= want * h;
        } else {
            discharge[i] = remaining / h;
            remaining = 0.0;
        }
    }
    finish(load, discharge, h)
}

fn finish(load: &DailyCurve, discharge: [f64; SLOTS], slot_hours: f64) -> DispatchResult {
    let mut residual = [0.0; SLOTS];
    for (i, r) in residual.iter_mut().enumerate() {
        *r = (load.values()[i] - discharge[i]).max(0.0);
    }
    let energy = discharge.iter().sum::<f64>() * slot_hours;
    let residual_peak = residual.iter().copied().fold(0.0, f64::max);
    let peak = load.peak();
    let level = if peak > 0.0 { 100.0 * (peak - residual_peak) / peak } else { 0.0 };
    DispatchResult {
        discharge_kw: discharge,
        residual_kw: residual,
        energy_used_kwh: energy,
        residual_peak_kw: residual_peak,
        shaving_level_pct: level,
    }
}

/// Strategy A: cover the whole load until the battery runs out.
pub fn dispatch_full_output(load: &DailyCurve, bess: &BessConfig, window: PeakWindow) -> DispatchResult {
    simulate(load, bess, window, |i| load.values()[i])
}

/// Strategy B: shave everything above `threshold_kw` while energy lasts.
pub fn dispatch_threshold(load: &DailyCurve, bess: &BessConfig, window: PeakWindow, threshold_kw: f64) -> DispatchResult {
    simulate(load, bess, window, |i| (load.values()[i] - threshold_kw).max(0.0))
}

/// Strategy C: spread the usable energy evenly over the window.
pub fn dispatch_constant(load: &DailyCurve, bess: &BessConfig, window: PeakWindow) -> DispatchResult {
    let rate = constant_rate_kw(bess, window);
    simulate(load, bess, window, |_| rate)
}

/// Output of strategy C: usable energy over window duration.
pub fn constant_rate_kw(bess: &BessConfig, window: PeakWindow) -> f64 {
    bess.usable_kwh() / (window.len() as f64 * bess.slot_hours)
}

const BISECTION_MAX_ITER: usize = 200;
const ENERGY_TOLERANCE_KWH: f64 = 1e-6;

/// Flat residual level `F` for the forecast: the level at which shaving
/// everything above `F` inside the window uses exactly the usable energy.
/// Zero when the battery can cover the whole forecast window.
pub fn flat_level(forecast: &DailyCurve, bess: &BessConfig, window: PeakWindow) -> Result<f64> {
    let h = bess.slot_hours;
    let cap = bess.power_cap();
    let budget = bess.usable_kwh();
    let f = &forecast.values()[window.indices()];
    let energy_above = |level: f64| -> f64 { f.iter().map(|&v| (v - level).max(0.0).min(cap)).sum::<f64>() * h };

    let top = f.iter().copied().fold(0.0, f64::max);
    if budget <= 0.0 {
        return Ok(top);
    }
    if energy_above(0.0) <= budget {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g = energy_above(mid) - budget;
        if g == 0.0 {
            return Ok(mid);
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let level = 0.5 * (lo + hi);
    let residual = (energy_above(level) - budget).abs();
    if residual > ENERGY_TOLERANCE_KWH {
        return Err(Error::Numerical(format!(
            "flat-level bisection stopped {residual} kWh from the energy budget"
        )));
    }
    Ok(level)
}

/// Strategy D: discharge so the forecast would be left flat at the level
/// from [`flat_level`], then apply that open-loop schedule to the true load.
pub fn dispatch_ideal(
    load_true: &DailyCurve,
    forecast: &DailyCurve,
    bess: &BessConfig,
    window: PeakWindow,
) -> Result<DispatchResult> {
    let level = flat_level(forecast, bess, window)?;
    Ok(simulate(load_true, bess, window, |i| (forecast.values()[i] - level).max(0.0)))
}

/// `100 · (peak − residual peak) / peak`, in percent.
pub fn shaving_level(load: &DailyCurve, result: &DispatchResult) -> Result<f64> {
    let peak = load.peak();
    if peak <= 0.0 {
        return Err(Error::DegenerateLoad);
    }
    let residual_peak = result.residual_kw.iter().copied().fold(0.0, f64::max);
    Ok(100.0 * (peak - residual_peak) / peak)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    pub threshold_kw: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self { threshold_kw: 150.0 }
    }
}

/// One row of the per-day comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayComparison {
    pub day: String,
    pub peak_kw: f64,
    pub level_a: f64,
    pub level_b: f64,
    pub level_c: f64,
    pub level_d: f64,
}

/// All four strategies on one day.
pub fn compare_strategies(
    load: &DailyCurve,
    forecast: &DailyCurve,
    bess: &BessConfig,
    window: PeakWindow,
    params: StrategyParams,
) -> Result<(DayComparison, [DispatchResult; 4])> {
    bess.validate()?;
    let a = dispatch_full_output(load, bess, window);
    let b = dispatch_threshold(load, bess, window, params.threshold_kw);
    let c = dispatch_constant(load, bess, window);
    let d = dispatch_ideal(load, forecast, bess, window)?;
    let row = DayComparison {
        day: load.date_tag().to_string(),
        peak_kw: load.peak(),
        level_a: shaving_level(load, &a)?,
        level_b: shaving_level(load, &b)?,
        level_c: shaving_level(load, &c)?,
        level_d: shaving_level(load, &d)?,
    };
    Ok((row, [a, b, c, d]))
}

/// CSV `day,peak_kw,level_A,level_B,level_C,level_D`.
pub fn write_comparison(out: impl Write, rows: &[DayComparison]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "peak_kw", "level_A", "level_B", "level_C", "level_D"])?;
    for r in rows {
        w.write_record([
            r.day.clone(),
            r.peak_kw.to_string(),
            r.level_a.to_string(),
            r.level_b.to_string(),
            r.level_c.to_string(),
            r.level_d.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV `slot,load_kw,forecast_kw,discharge_kw,residual_kw`, 1-based slots.
pub fn write_schedule(out: impl Write, load: &DailyCurve, forecast: &DailyCurve, result: &DispatchResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "load_kw", "forecast_kw", "discharge_kw", "residual_kw"])?;
    for i in 0..SLOTS {
        w.write_record([
            (i + 1).to_string(),
            load.values()[i].to_string(),
            forecast.values()[i].to_string(),
            result.discharge_kw[i].to_string(),
            result.residual_kw[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(values: [f64; SLOTS]) -> DailyCurve {
        DailyCurve::new("d", values).unwrap()
    }

    fn flat(v: f64) -> DailyCurve {
        curve([v; SLOTS])
    }

    /// Off-window 100 kW, window values supplied slot by slot.
    fn with_window(window_vals: &[f64]) -> DailyCurve {
        let mut v = [100.0; SLOTS];
        for (k, &x) in window_vals.iter().enumerate() {
            v[28 + k] = x;
        }
        curve(v)
    }

    #[test]
    fn full_output_exhausts_early() {
        // 250..330 kW ramp, peak in the last slot
        let vals: Vec<f64> = (0..12).map(|k| 250.0 + 80.0 * k as f64 / 11.0).collect();
        let load = with_window(&vals);
        let r = dispatch_full_output(&load, &BessConfig::default(), PeakWindow::evening());
        let used: Vec<usize> = (0..SLOTS).filter(|&i| r.discharge_kw[i] > 0.0).collect();
        assert!(used.len() <= 4, "{used:?}");
        assert!((r.energy_used_kwh - 500.0).abs() < 1e-9);
        assert_eq!(r.shaving_level_pct, 0.0);
    }

    #[test]
    fn full_output_with_ample_capacity() {
        let vals = [200.0; 12];
        let load = with_window(&vals);
        let bess = BessConfig { capacity_kwh: 10_000.0, ..Default::default() };
        let r = dispatch_full_output(&load, &bess, PeakWindow::evening());
        assert!(PeakWindow::evening().indices().all(|i| r.residual_kw[i] == 0.0));
        // residual peak is now the off-window 100 kW
        assert!((r.shaving_level_pct - 50.0).abs() < 1e-12);
    }

    #[test]
    fn zero_capacity_changes_nothing() {
        let load = with_window(&[300.0; 12]);
        let bess = BessConfig { capacity_kwh: 0.0, ..Default::default() };
        for r in [
            dispatch_full_output(&load, &bess, PeakWindow::evening()),
            dispatch_threshold(&load, &bess, PeakWindow::evening(), 150.0),
            dispatch_constant(&load, &bess, PeakWindow::evening()),
            dispatch_ideal(&load, &load, &bess, PeakWindow::evening()).unwrap(),
        ] {
            assert_eq!(r.residual_kw, *load.values());
            assert_eq!(r.shaving_level_pct, 0.0);
        }
    }

    #[test]
    fn threshold_below_load_is_idle() {
        let load = flat(120.0);
        let r = dispatch_threshold(&load, &BessConfig::default(), PeakWindow::evening(), 150.0);
        assert!(r.discharge_kw.iter().all(|&d| d == 0.0));
        assert_eq!(r.shaving_level_pct, 0.0);
    }

    #[test]
    fn threshold_triangle_matches_hand_simulation() {
        // window: 150,200,250,300,350,300,250,200,150,150,150,150
        let vals = [150.0, 200.0, 250.0, 300.0, 350.0, 300.0, 250.0, 200.0, 150.0, 150.0, 150.0, 150.0];
        let load = with_window(&vals);
        let bess = BessConfig { capacity_kwh: 200.0, ..Default::default() };
        let r = dispatch_threshold(&load, &bess, PeakWindow::evening(), 150.0);
        // excess 0,50,100,150,200 → energy 0,25,50,75 (total 150), then 50 kWh left → 100 kW
        let expected = [0.0, 50.0, 100.0, 150.0, 100.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        for (k, e) in expected.iter().enumerate() {
            assert_eq!(r.discharge_kw[28 + k], *e, "window slot {k}");
            assert_eq!(r.residual_kw[28 + k], vals[k] - e);
        }
        assert_eq!(r.residual_peak_kw, 300.0);
    }

    #[test]
    fn constant_output_rate_and_cap() {
        let bess = BessConfig::default();
        let rate = constant_rate_kw(&bess, PeakWindow::evening());
        assert!((rate - 500.0 / 6.0).abs() < 1e-12);
        let load = flat(50.0);
        let r = dispatch_constant(&load, &bess, PeakWindow::evening());
        for i in PeakWindow::evening().indices() {
            assert_eq!(r.discharge_kw[i], 50.0);
            assert_eq!(r.residual_kw[i], 0.0);
        }
    }

    #[test]
    fn constant_output_table_values() {
        for (peak, want) in [(260.77, 31.96), (332.32, 25.08), (325.14, 25.63)] {
            let mut vals = [200.0; 12];
            vals[6] = peak;
            let load = with_window(&vals);
            let r = dispatch_constant(&load, &BessConfig::default(), PeakWindow::evening());
            let level = shaving_level(&load, &r).unwrap();
            assert!((level - want).abs() < 0.005, "{peak}: {level}");
        }
    }

    #[test]
    fn shaving_level_errors_on_zero_load() {
        let load = flat(0.0);
        let r = dispatch_constant(&load, &BessConfig::default(), PeakWindow::evening());
        assert!(matches!(shaving_level(&load, &r), Err(Error::DegenerateLoad)));
        let idle = dispatch_threshold(&flat(10.0), &BessConfig::default(), PeakWindow::evening(), 50.0);
        assert_eq!(shaving_level(&flat(10.0), &idle).unwrap(), 0.0);
    }

    #[test]
    fn ideal_flattens_perfect_forecast() {
        let vals = [150.0, 200.0, 250.0, 300.0, 350.0, 300.0, 250.0, 200.0, 150.0, 150.0, 150.0, 150.0];
        let load = with_window(&vals);
        let r = dispatch_ideal(&load, &load, &BessConfig::default(), PeakWindow::evening()).unwrap();
        let level = flat_level(&load, &BessConfig::default(), PeakWindow::evening()).unwrap();
        for k in 0..12 {
            if vals[k] > level {
                assert!((r.residual_kw[28 + k] - level).abs() < 1e-6);
            } else {
                assert_eq!(r.residual_kw[28 + k], vals[k]);
            }
        }
        assert!((r.energy_used_kwh - 500.0).abs() < 1e-6);
    }

    #[test]
    fn ideal_level_zero_with_ample_capacity() {
        let load = with_window(&[100.0; 12]);
        let bess = BessConfig { capacity_kwh: 1000.0, ..Default::default() };
        assert_eq!(flat_level(&load, &bess, PeakWindow::evening()).unwrap(), 0.0);
    }

    #[test]
    fn power_limit_caps_every_strategy() {
        let load = with_window(&[300.0; 12]);
        let bess = BessConfig { power_limit_kw: Some(40.0), ..Default::default() };
        for r in [
            dispatch_full_output(&load, &bess, PeakWindow::evening()),
            dispatch_threshold(&load, &bess, PeakWindow::evening(), 150.0),
            dispatch_constant(&load, &bess, PeakWindow::evening()),
            dispatch_ideal(&load, &load, &bess, PeakWindow::evening()).unwrap(),
        ] {
            assert!(r.discharge_kw.iter().all(|&d| d <= 40.0));
        }
    }

    #[test]
    fn window_and_config_validation() {
        assert!(PeakWindow::new(0, 3).is_err());
        assert!(PeakWindow::new(10, 9).is_err());
        assert!(PeakWindow::new(40, 49).is_err());
        assert_eq!(PeakWindow::new(29, 40).unwrap(), PeakWindow::evening());
        assert!(BessConfig { initial_soc: 1.5, ..Default::default() }.validate().is_err());
        assert!(BessConfig { capacity_kwh: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn csv_headers() {
        let load = flat(100.0);
        let r = dispatch_constant(&load, &BessConfig::default(), PeakWindow::evening());
        let mut buf = Vec::new();
        write_schedule(&mut buf, &load, &load, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("slot,load_kw,forecast_kw,discharge_kw,residual_kw\n1,100,100,0,100\n"));
        assert_eq!(text.lines().count(), 49);
        let mut buf = Vec::new();
        write_comparison(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "day,peak_kw,level_A,level_B,level_C,level_D\n");
    }

    fn check_invariants(load: &DailyCurve, r: &DispatchResult, bess: &BessConfig, window: PeakWindow) {
        assert!(r.energy_used_kwh <= bess.usable_kwh() + 1e-9);
        for i in 0..SLOTS {
            assert!(r.discharge_kw[i] >= 0.0);
            assert!(r.residual_kw[i] >= 0.0);
            assert!((r.residual_kw[i] - (load.values()[i] - r.discharge_kw[i])).abs() < 1e-9);
            if !window.contains_index(i) {
                assert_eq!(r.discharge_kw[i], 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn strategy_invariants(
            values in proptest::collection::vec(0.0f64..400.0, SLOTS),
            forecast in proptest::collection::vec(0.0f64..400.0, SLOTS),
            capacity in 0.0f64..1500.0,
            soc in 0.0f64..=1.0,
            start in 1usize..=48,
            len in 1usize..=12,
            threshold in 0.0f64..300.0,
        ) {
            let load = DailyCurve::from_slice("p", &values).unwrap();
            let fc = DailyCurve::from_slice("f", &forecast).unwrap();
            let bess = BessConfig { capacity_kwh: capacity, initial_soc: soc, ..Default::default() };
            let window = PeakWindow::new(start, (start + len - 1).min(SLOTS)).unwrap();
            for r in [
                dispatch_full_output(&load, &bess, window),
                dispatch_threshold(&load, &bess, window, threshold),
                dispatch_constant(&load, &bess, window),
                dispatch_ideal(&load, &fc, &bess, window).unwrap(),
                dispatch_ideal(&load, &load, &bess, window).unwrap(),
            ] {
                check_invariants(&load, &r, &bess, window);
            }
        }

        #[test]
        fn ideal_with_perfect_forecast_dominates_constant(
            values in proptest::collection::vec(50.0f64..400.0, SLOTS),
            capacity in 10.0f64..1500.0,
        ) {
            let load = DailyCurve::from_slice("p", &values).unwrap();
            let bess = BessConfig { capacity_kwh: capacity, ..Default::default() };
            let w = PeakWindow::evening();
            let d = dispatch_ideal(&load, &load, &bess, w).unwrap();
            let c = dispatch_constant(&load, &bess, w);
            prop_assert!(d.residual_peak_kw <= c.residual_peak_kw + 1e-6);
        }

        #[test]
        fn ideal_residual_takes_two_values(
            window_vals in proptest::collection::vec(50.0f64..400.0, 12),
            capacity in 10.0f64..800.0,
        ) {
            let load = with_window(&window_vals);
            let bess = BessConfig { capacity_kwh: capacity, ..Default::default() };
            let w = PeakWindow::evening();
            let level = flat_level(&load, &bess, w).unwrap();
            let d = dispatch_ideal(&load, &load, &bess, w).unwrap();
            for i in w.indices() {
                let v = load.values()[i];
                let expect = if v > level { level } else { v };
                prop_assert!((d.residual_kw[i] - expect).abs() <= 1e-6);
            }
        }
    }
}
