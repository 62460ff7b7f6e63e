use peakshave::baselines::{score, ElmForecaster};
use peakshave::bess::{
    compare_strategies, dispatch_constant, dispatch_full_output, dispatch_ideal, dispatch_threshold, BessConfig,
    PeakWindow, StrategyParams,
};
use peakshave::curves::{
    read_curves, split, synth_generate, write_curves, CorruptionMask, DailyCurve, NormalizationContext, Provenance,
    SynthProfile, SLOTS,
};
use peakshave::nn::TrainConfig;
use peakshave::sae::{peak_metrics, train_sae, LossKind, SaeModel, SaeSpec, SaeTraining};
use peakshave::ErrorClass;
use proptest::prelude::*;

fn quick_training() -> SaeTraining {
    let cfg = |n| TrainConfig { learning_rate: 1.0, max_iterations: n, batch_size: 16, ..Default::default() };
    SaeTraining { pretrain: cfg(10), fine_tune: cfg(40) }
}

#[test]
fn train_save_load_forecast_round_trip() {
    let data = synth_generate(200, 1, &SynthProfile::default()).unwrap();
    let ctx = NormalizationContext::from_dataset(&data).unwrap();
    let mask = CorruptionMask::masking_slots(36, 48, 0.66).unwrap();
    let (train, test) = split(&data, 160, 2).unwrap();
    let spec = SaeSpec::five_layer().with_loss(LossKind::WeightedMse);
    let trained = train_sae(&spec, &train, None, &ctx, &mask, &quick_training()).unwrap();

    let mut buf = Vec::new();
    trained.model.save(&mut buf).unwrap();
    let loaded = SaeModel::load(buf.as_slice()).unwrap();

    let forecasts: Vec<DailyCurve> = test.curves.iter().map(|c| loaded.forecast(c, None).unwrap()).collect();
    let direct: Vec<DailyCurve> = test.curves.iter().map(|c| trained.model.forecast(c, None).unwrap()).collect();
    assert_eq!(forecasts, direct);
    for (f, t) in forecasts.iter().zip(&test.curves) {
        for i in mask.kept_indices() {
            assert_eq!(f.values()[i], t.values()[i]);
        }
        assert!(f.values().iter().all(|v| *v >= 0.0));
    }
    let m = peak_metrics(&test.curves, &forecasts, &mask).unwrap();
    assert!(m.rmse_kw.is_finite() && m.rmse_kw < 100.0, "{}", m.rmse_kw);
}

#[test]
fn elm_learns_the_synthetic_peak() {
    let data = synth_generate(400, 5, &SynthProfile::default()).unwrap();
    let ctx = NormalizationContext::from_dataset(&data).unwrap();
    let mask = CorruptionMask::masking_slots(36, 48, 0.66).unwrap();
    let (train, test) = split(&data, 320, 1).unwrap();
    let elm = ElmForecaster::train(100, &train, &ctx, &mask, 3).unwrap();
    let m = score(&test, &mask, |c| elm.forecast(c)).unwrap();
    let mean_peak = data.curves.iter().map(DailyCurve::peak).sum::<f64>() / data.len() as f64;
    assert!(m.rmse_kw < 0.1 * mean_peak, "ELM RMSE {}", m.rmse_kw);
}

#[test]
fn curves_survive_csv_round_trip() {
    let data = synth_generate(20, 9, &SynthProfile::default()).unwrap();
    let mut buf = Vec::new();
    write_curves(&mut buf, &data).unwrap();
    let back = read_curves(buf.as_slice(), Provenance::Synthetic).unwrap();
    assert_eq!(back.curves, data.curves);
}

#[test]
fn invalid_profile_is_a_config_error() {
    for profile in [
        SynthProfile { coupling: 1.5, ..SynthProfile::default() },
        SynthProfile { evening_width: (0.0, 2.0), ..SynthProfile::default() },
        SynthProfile { peak_range_kw: (300.0, 200.0), ..SynthProfile::default() },
    ] {
        let err = synth_generate(5, 1, &profile).unwrap_err();
        assert_eq!(err.class(), ErrorClass::Config, "{err}");
    }
}

fn arb_curve() -> impl Strategy<Value = DailyCurve> {
    proptest::collection::vec(0.0..400.0f64, SLOTS).prop_map(|v| DailyCurve::from_slice("2010-01-01", &v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dispatch_respects_the_energy_budget(load in arb_curve(), capacity in 0.0..1500.0f64, threshold in 0.0..400.0f64) {
        let bess = BessConfig { capacity_kwh: capacity, ..BessConfig::default() };
        let window = PeakWindow::evening();
        let results = [
            dispatch_full_output(&load, &bess, window),
            dispatch_threshold(&load, &bess, window, threshold),
            dispatch_constant(&load, &bess, window),
            dispatch_ideal(&load, &load, &bess, window).unwrap(),
        ];
        for r in &results {
            let used: f64 = r.discharge_kw.iter().sum::<f64>() * bess.slot_hours;
            prop_assert!(used <= capacity + 1e-6);
            prop_assert!((used - r.energy_used_kwh).abs() < 1e-6);
            for i in 0..SLOTS {
                prop_assert!(r.discharge_kw[i] >= 0.0);
                prop_assert!(r.discharge_kw[i] <= load.values()[i] + 1e-9);
                if !window.contains_index(i) {
                    prop_assert_eq!(r.discharge_kw[i], 0.0);
                }
                prop_assert!((r.residual_kw[i] - (load.values()[i] - r.discharge_kw[i])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn perfect_forecast_dispatch_is_never_beaten(load in arb_curve(), capacity in 1.0..1500.0f64) {
        let bess = BessConfig { capacity_kwh: capacity, ..BessConfig::default() };
        let (row, _) = compare_strategies(&load, &load, &bess, PeakWindow::evening(), StrategyParams::default()).unwrap();
        prop_assert!(row.level_d >= row.level_a - 1e-6);
        prop_assert!(row.level_d >= row.level_b - 1e-6);
        prop_assert!(row.level_d >= row.level_c - 1e-6);
    }
}
