use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use peakshave::baselines::{compare_models, write_fold_scores};
use peakshave::bess::{compare_strategies, write_comparison, write_schedule};
use peakshave::curves::{
    augment_pairwise, ingest_readings, read_curves, read_readings, split, synth_generate, write_curves, CorruptionMask,
    Dataset, NormalizationContext, Provenance, SLOTS,
};
use peakshave::sae::{
    compare_architectures, standard_architectures, sweep_alpha_beta, sweep_mask_value, train_sae_with, write_sweep,
    SaeModel,
};
use peakshave::Error;

use crate::config::RunConfig;
use crate::{CliError, Command, SweepParam};

pub(crate) fn execute(command: Command, mut cfg: RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Ingest { input, output, meters } => {
            if let Some(m) = meters {
                cfg.data.meters = m;
            }
            cfg.validate()?;
            ingest(&cfg, &input, &output)
        }
        Command::Synth { output, days } => {
            if let Some(d) = days {
                cfg.synth.days = d;
            }
            cfg.validate()?;
            let data = synth_generate(cfg.synth.days, cfg.seed, &cfg.synth.profile)?;
            write_to(&output, |w| write_curves(w, &data))
        }
        Command::Train { data, model, history } => {
            cfg.validate()?;
            let data = pick(data, &cfg.paths.curves, "--data")?;
            let model = pick(model, &cfg.paths.model, "--model")?;
            let history = pick(history, &cfg.paths.history, "--history")?;
            ensure_distinct(&[&data], &[&model, &history])?;
            train(&cfg, &data, &model, &history)
        }
        Command::Forecast { model, input, output, mask_slots, series } => {
            cfg.validate()?;
            let model = pick(model, &cfg.paths.model, "--model")?;
            let input = pick(input, &cfg.paths.curves, "--input")?;
            let output = pick(output, &cfg.paths.forecast, "--output")?;
            let mask_file = companion_mask_path(&output);
            let mut outputs = vec![output.as_path(), mask_file.as_path()];
            if let Some(s) = &series {
                outputs.push(s);
            }
            ensure_distinct(&[&model, &input], &outputs)?;
            forecast(&model, &input, &output, &mask_file, mask_slots, series.as_deref())
        }
        Command::Sweep { param, grid, protocol, data, output } => {
            if let Some(g) = grid {
                match param {
                    SweepParam::MaskValue => cfg.sweep.grid = g,
                    SweepParam::AlphaBeta => cfg.sweep.ratios = g,
                }
            }
            if let Some(p) = protocol {
                cfg.sweep.protocol = p;
            }
            cfg.validate()?;
            let data = pick(data, &cfg.paths.curves, "--data")?;
            let output = pick(output, &cfg.paths.output, "--output")?;
            ensure_distinct(&[&data], &[&output])?;
            sweep(&cfg, param, &data, &output)
        }
        Command::Simulate { curves, forecast, output, schedules, capacity_kwh, threshold_kw } => {
            if let Some(c) = capacity_kwh {
                cfg.bess.capacity_kwh = c;
            }
            if let Some(t) = threshold_kw {
                cfg.bess.threshold_kw = t;
            }
            cfg.validate()?;
            let curves = pick(curves, &cfg.paths.curves, "--curves")?;
            let forecast = forecast.or_else(|| cfg.paths.forecast.clone());
            let output = pick(output, &cfg.paths.output, "--output")?;
            let mut inputs = vec![curves.as_path()];
            if let Some(f) = &forecast {
                inputs.push(f);
            }
            ensure_distinct(&inputs, &[&output])?;
            simulate(&cfg, &curves, forecast.as_deref(), &output, schedules.as_deref())
        }
        Command::Compare { data, output, architectures, history } => {
            cfg.validate()?;
            let data = pick(data, &cfg.paths.curves, "--data")?;
            let output = pick(output, &cfg.paths.output, "--output")?;
            let mut outputs = vec![output.as_path()];
            if let Some(h) = &history {
                outputs.push(h);
            }
            ensure_distinct(&[&data], &outputs)?;
            if architectures {
                compare_depths(&cfg, &data, &output, history.as_deref())
            } else {
                if history.is_some() {
                    return Err(CliError::Usage("--history requires --architectures".into()));
                }
                compare_baselines(&cfg, &data, &output)
            }
        }
        Command::Report { input } => report(&input, out),
    }
}

fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::Usage(format!("missing {name} (or the matching [paths] entry in the config)")))
}

/// Refuses to write over any input or to write two outputs to one path.
fn ensure_distinct(inputs: &[&Path], outputs: &[&Path]) -> Result<(), CliError> {
    let key = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
    for (i, o) in outputs.iter().enumerate() {
        if inputs.iter().any(|inp| key(inp) == key(o)) {
            return Err(CliError::Usage(format!("output {} would overwrite an input", o.display())));
        }
        if outputs[..i].iter().any(|p| key(p) == key(o)) {
            return Err(CliError::Usage(format!("output {} is given twice", o.display())));
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_to(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> peakshave::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn load_curves(path: &Path) -> Result<Dataset, CliError> {
    let data = read_curves(open(path)?, Provenance::Original)?;
    if data.is_empty() {
        return Err(Error::InsufficientData(format!("{} holds no curves", path.display())).into());
    }
    Ok(data)
}

/// Train/validation split by `data.validation_fraction`; `None` when it is 0.
fn split_validation(cfg: &RunConfig, data: &Dataset) -> Result<(Dataset, Option<Dataset>), CliError> {
    let f = cfg.data.validation_fraction;
    if f == 0.0 {
        return Ok((data.clone(), None));
    }
    let n = data.len();
    let held = ((n as f64 * f).round() as usize).max(1);
    if held >= n {
        return Err(Error::InsufficientData(format!("{n} curves cannot be split with validation fraction {f}")).into());
    }
    let (train, val) = split(data, n - held, cfg.seed)?;
    Ok((train, Some(val)))
}

fn prepared_data(cfg: &RunConfig, path: &Path) -> Result<(Dataset, NormalizationContext), CliError> {
    let mut data = load_curves(path)?;
    if cfg.data.augment {
        data = augment_pairwise(&data)?;
    }
    let ctx = NormalizationContext::from_dataset(&data)?;
    Ok((data, ctx))
}

fn ingest(cfg: &RunConfig, input: &Path, output: &Path) -> Result<(), CliError> {
    ensure_distinct(&[input], &[output])?;
    let readings = read_readings(open(input)?)?;
    let data = ingest_readings(&readings, cfg.data.meters)?;
    write_to(output, |w| write_curves(w, &data))
}

fn train(cfg: &RunConfig, data: &Path, model_path: &Path, history_path: &Path) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let mask = cfg.mask()?;
    let (data, ctx) = prepared_data(cfg, data)?;
    let (train, val) = split_validation(cfg, &data)?;
    let corruption = cfg.model.protocol.corruption(&mask);
    let trained = train_sae_with(&spec, &train, val.as_ref(), &ctx, &mask, &cfg.training(), corruption)?;
    write_to(model_path, |w| trained.model.save(w))?;
    write_to(history_path, |w| trained.history.write_csv(w))
}

/// `forecast.csv` → `forecast.mask.csv`.
fn companion_mask_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "forecast".into());
    output.with_file_name(format!("{stem}.mask.csv"))
}

fn forecast(
    model_path: &Path,
    input: &Path,
    output: &Path,
    mask_file: &Path,
    mask_slots: Option<(usize, usize)>,
    series: Option<&Path>,
) -> Result<(), CliError> {
    let model = SaeModel::load(open(model_path)?)?;
    let mask = match mask_slots {
        Some((a, b)) => CorruptionMask::masking_slots(a, b, model.mask.mask_value())?,
        None => model.mask.clone(),
    };
    let truth = load_curves(input)?;
    let curves = truth.curves.iter().map(|c| model.forecast(c, Some(&mask))).collect::<peakshave::Result<Vec<_>>>()?;
    let predicted = Dataset::new(curves, Provenance::Original);
    write_to(output, |w| write_curves(w, &predicted))?;
    write_to(mask_file, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["slot", "masked"])?;
        for i in 0..SLOTS {
            c.write_record([(i + 1).to_string(), (!mask.keep()[i]).to_string()])?;
        }
        c.flush()?;
        Ok(())
    })?;
    if let Some(path) = series {
        write_to(path, |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["day", "slot", "truth_kw", "forecast_kw", "masked"])?;
            for (t, f) in truth.curves.iter().zip(&predicted.curves) {
                for i in 0..SLOTS {
                    c.write_record([
                        t.date_tag().to_string(),
                        (i + 1).to_string(),
                        t.values()[i].to_string(),
                        f.values()[i].to_string(),
                        (!mask.keep()[i]).to_string(),
                    ])?;
                }
            }
            c.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

fn sweep(cfg: &RunConfig, param: SweepParam, data: &Path, output: &Path) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let mask = cfg.mask()?;
    let (data, ctx) = prepared_data(cfg, data)?;
    let (train, test) = split_validation(cfg, &data)?;
    let test = test.ok_or_else(|| CliError::Config("sweeps need data.validation_fraction > 0".into()))?;
    let training = cfg.training();
    let corruption = cfg.sweep.protocol.corruption(&mask);
    let result = match param {
        SweepParam::MaskValue => {
            sweep_mask_value(&spec, &train, &test, &ctx, &mask, &training, &cfg.sweep.grid, corruption)?
        }
        SweepParam::AlphaBeta => {
            sweep_alpha_beta(&spec, &train, &test, &ctx, &mask, &training, &cfg.sweep.ratios, corruption)?
        }
    };
    write_to(output, |w| write_sweep(w, &result))
}

fn simulate(
    cfg: &RunConfig,
    curves: &Path,
    forecast: Option<&Path>,
    output: &Path,
    schedules: Option<&Path>,
) -> Result<(), CliError> {
    let truth = load_curves(curves)?;
    let predicted = match forecast {
        Some(p) => load_curves(p)?,
        None => truth.clone(),
    };
    if predicted.len() != truth.len() {
        return Err(Error::Shape { expected: truth.len(), got: predicted.len() }.into());
    }
    let (bess, window, params) = (cfg.bess_config(), cfg.window()?, cfg.strategy());
    if let Some(dir) = schedules {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    }
    let mut rows = Vec::with_capacity(truth.len());
    for (t, f) in truth.curves.iter().zip(&predicted.curves) {
        if t.date_tag() != f.date_tag() {
            return Err(Error::Parse(format!("forecast day {} does not match curve day {}", f.date_tag(), t.date_tag())).into());
        }
        let (row, results) = compare_strategies(t, f, &bess, window, params)?;
        if let Some(dir) = schedules {
            for (name, r) in ["A", "B", "C", "D"].iter().zip(&results) {
                write_to(&dir.join(format!("{}_{name}.csv", t.date_tag())), |w| write_schedule(w, t, f, r))?;
            }
        }
        rows.push(row);
    }
    write_to(output, |w| write_comparison(w, &rows))
}

fn compare_baselines(cfg: &RunConfig, data: &Path, output: &Path) -> Result<(), CliError> {
    let mask = cfg.mask()?;
    let compare = cfg.compare_config()?;
    let (data, ctx) = prepared_data(cfg, data)?;
    let rows = compare_models(&data, &ctx, &mask, &compare)?;
    write_to(output, |w| write_fold_scores(w, &rows))
}

fn compare_depths(cfg: &RunConfig, data: &Path, output: &Path, history: Option<&Path>) -> Result<(), CliError> {
    let mask = cfg.mask()?;
    let base = cfg.spec()?;
    let specs: Vec<_> = standard_architectures(base.loss)
        .into_iter()
        .map(|s| peakshave::sae::SaeSpec { activation: base.activation, alpha_beta: base.alpha_beta, ..s })
        .collect();
    let (data, ctx) = prepared_data(cfg, data)?;
    let results = compare_architectures(&specs, &data, &ctx, &mask, &cfg.training(), cfg.compare.folds, cfg.seed)?;
    write_to(output, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["layers", "rmse_kw", "mape_pct", "converged_val_loss"])?;
        for r in &results {
            c.write_record([
                r.spec.label(),
                r.rmse_kw.to_string(),
                r.mape_pct.to_string(),
                r.converged_val_loss.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    if let Some(path) = history {
        write_to(path, |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["layers", "iteration", "train_loss", "val_loss"])?;
            for r in &results {
                for e in &r.history {
                    c.write_record([
                        r.spec.label(),
                        e.iteration.to_string(),
                        e.train_loss.to_string(),
                        e.val_loss.map(|v| v.to_string()).unwrap_or_default(),
                    ])?;
                }
            }
            c.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

/// Aligned text table; numbers are shown with two decimals.
fn report(input: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let mut reader = csv::Reader::from_reader(open(input)?);
    let header: Vec<String> = reader.headers().map_err(Error::from)?.iter().map(str::to_string).collect();
    let mut rows = vec![header];
    for rec in reader.records() {
        let rec = rec.map_err(Error::from)?;
        rows.push(
            rec.iter()
                .map(|f| match f.parse::<f64>() {
                    Ok(v) if f.contains('.') || f.contains('e') => format!("{v:.2}"),
                    _ => f.to_string(),
                })
                .collect(),
        );
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let io = |source| CliError::Io { path: "<stdout>".into(), source };
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).map_err(io)?;
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
            writeln!(out, "{}", "-".repeat(total)).map_err(io)?;
        }
    }
    Ok(())
}
