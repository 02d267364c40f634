use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mvlstm::baseline::{fit_linear_arx, persistence_forecast};
use mvlstm::grad::gradient_suite;
use mvlstm::train::{evaluate, make_windows_with_stats, mae, rmse, Window};
use mvlstm::{
    fit, generate, granger_rank, make_windows, ArxSpec, Error, InterpretReport, ModelFile, SeriesFrame,
};
use serde::Serialize;

use crate::config::{ReportFormat, RunConfig};
use crate::error::CliError;

type CliResult<T> = Result<T, CliError>;

/// Files written by one command. Unless [`Outputs::commit`] is called, every
/// file written so far is removed on drop.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types serialize");
    out.push(b'\n');
    out
}

fn load_frame(cfg: &RunConfig, target: &str) -> CliResult<SeriesFrame> {
    Ok(SeriesFrame::from_csv_path(cfg.input()?, target)?)
}

fn check_schema(model: &ModelFile, frame: &SeriesFrame) -> CliResult<()> {
    if model.names != frame.names() {
        return Err(Error::SchemaMismatch {
            expected: model.names.join(", "),
            actual: frame.names().join(", "),
        }
        .into());
    }
    Ok(())
}

/// Loads a model and the data it is applied to, using the model's target
/// column unless the configuration names one.
fn model_and_frame(cfg: &RunConfig, model_path: &Path) -> CliResult<(ModelFile, SeriesFrame)> {
    let model = ModelFile::load(model_path)?;
    let target = match &cfg.target {
        Some(t) => t.clone(),
        None => model.names.last().cloned().unwrap_or_default(),
    };
    let frame = load_frame(cfg, &target)?;
    check_schema(&model, &frame)?;
    Ok((model, frame))
}

#[derive(Serialize)]
struct SplitSizes {
    train: usize,
    val: usize,
    test: usize,
}

#[derive(Serialize)]
struct TrainMetrics<'a> {
    units: &'static str,
    target: &'a str,
    test_rmse: f64,
    test_mae: f64,
    best_epoch: usize,
    epochs_run: usize,
    windows: SplitSizes,
    dropped_rows: usize,
    seed: u64,
}

pub fn train(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let target = cfg.target()?;
    let frame = load_frame(cfg, target)?;
    let ds = make_windows(&frame, cfg.train.window, cfg.train.splits)?;
    let result = fit(&ds, &cfg.train)?;
    let model = ModelFile::new(ds.names.clone(), ds.stats.clone(), result.params.clone())?;

    let metrics = TrainMetrics {
        units: "normalized",
        target,
        test_rmse: result.test_rmse,
        test_mae: result.test_mae,
        best_epoch: result.best_epoch,
        epochs_run: result.loss_curve.len(),
        windows: SplitSizes {
            train: ds.train.len(),
            val: ds.val.len(),
            test: ds.test.len(),
        },
        dropped_rows: ds.dropped_rows,
        seed: cfg.train.seed,
    };
    let mut curve = String::from("epoch,train_loss,val_loss\n");
    for e in &result.loss_curve {
        curve.push_str(&format!("{},{},{}\n", e.epoch, e.train, e.val));
    }
    let (clean, _) = frame.drop_missing();
    let tcol = ds.n_vars() - 1;
    let mut preds = format!("index,{target},prediction\n");
    for (w, p) in ds.test.iter().zip(&result.test_predictions) {
        preds.push_str(&format!(
            "{},{},{}\n",
            clean.index()[w.start_row + ds.window],
            ds.stats.denormalize(tcol, w.target),
            ds.stats.denormalize(tcol, *p)
        ));
    }

    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write("model.bin", &model.to_bytes())?;
    out.write("metrics.json", &to_json(&metrics))?;
    out.write("loss_curve.csv", curve.as_bytes())?;
    out.write("predictions.csv", preds.as_bytes())?;
    Ok(out.commit())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Baseline {
    Persistence,
    Linear,
}

#[derive(Serialize)]
struct ScoreLine {
    model: &'static str,
    rmse: f64,
    mae: f64,
}

#[derive(Serialize)]
struct EvalReport {
    units: &'static str,
    test_windows: usize,
    scores: Vec<ScoreLine>,
}

fn targets(windows: &[Window]) -> Vec<f64> {
    windows.iter().map(|w| w.target).collect()
}

pub fn eval(cfg: &RunConfig, model_path: &Path, baseline: Option<Baseline>) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let (model, frame) = model_and_frame(cfg, model_path)?;
    let shape = model.shape();
    let ds = make_windows_with_stats(&frame, shape.window, cfg.train.splits, &model.stats)?;
    let ev = evaluate(&model.params, &ds.test)?;
    let mut scores = vec![ScoreLine {
        model: "mv-lstm",
        rmse: ev.rmse()?,
        mae: ev.mae()?,
    }];
    let truth = targets(&ds.test);
    match baseline {
        Some(Baseline::Persistence) => {
            let pred: Vec<f64> = ds.test.iter().map(|w| persistence_forecast(&w.inputs)).collect();
            scores.push(ScoreLine {
                model: "persistence",
                rmse: rmse(&pred, &truth)?,
                mae: mae(&pred, &truth)?,
            });
        }
        Some(Baseline::Linear) => {
            let lin = fit_linear_arx(&ds.train, shape.window)?;
            let pred = ds.test.iter().map(|w| lin.predict(&w.inputs)).collect::<Result<Vec<_>, _>>()?;
            scores.push(ScoreLine {
                model: "linear-arx",
                rmse: rmse(&pred, &truth)?,
                mae: mae(&pred, &truth)?,
            });
        }
        None => {}
    }
    for s in &scores {
        println!("{:<12} rmse {:.6}  mae {:.6}", s.model, s.rmse, s.mae);
    }
    let report = EvalReport {
        units: "normalized",
        test_windows: ds.test.len(),
        scores,
    };
    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write("eval.json", &to_json(&report))?;
    Ok(out.commit())
}

pub fn interpret(cfg: &RunConfig, model_path: &Path, top_k: Option<usize>) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let (model, frame) = model_and_frame(cfg, model_path)?;
    let ds = make_windows_with_stats(&frame, model.shape().window, cfg.train.splits, &model.stats)?;
    let ev = evaluate(&model.params, &ds.test)?;
    let granger = granger_rank(&frame, cfg.granger_lag, cfg.granger_level)?;
    let report = InterpretReport::build(&ds.names, &ev.alphas, &granger, cfg.bins, top_k)?;

    let order: Vec<&str> = report.variables.iter().map(|v| v.name.as_str()).collect();
    println!("attention rank: {}", order.join(" > "));
    println!("granger causal: {}", report.agreement.causal.join(", "));

    let mut out = Outputs::new(&cfg.output_dir)?;
    match cfg.format {
        ReportFormat::Json => {
            out.write("interpret.json", &to_json(&report))?;
        }
        ReportFormat::Csv => {
            let mut summary = Vec::new();
            report.write_summary_csv(&mut summary)?;
            out.write("attention_summary.csv", &summary)?;
            let mut hist = Vec::new();
            report.write_histogram_csv(&mut hist)?;
            out.write("attention_histograms.csv", &hist)?;
        }
    }
    Ok(out.commit())
}

pub fn granger(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let frame = load_frame(cfg, cfg.target()?)?;
    let ranking = granger_rank(&frame, cfg.granger_lag, cfg.granger_level)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::from(Error::io("granger.csv", e.into()));
    w.write_record(["variable", "F", "p_value", "verdict", "error"]).map_err(csv_err)?;
    for e in &ranking.entries {
        let verdict = if e.test.causal { "causal" } else { "non-causal" };
        w.write_record([
            e.name.as_str(),
            &e.test.f_stat.to_string(),
            &e.test.p_value.to_string(),
            verdict,
            "",
        ])
        .map_err(csv_err)?;
    }
    for f in &ranking.failures {
        w.write_record([f.name.as_str(), "", "", "error", f.message.as_str()])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::from(Error::io("granger.csv", e.into_error())))?;
    if ranking.entries.is_empty() {
        let msgs: Vec<String> = ranking.failures.iter().map(|f| f.message.clone()).collect();
        return Err(CliError::GrangerAllFailed(msgs.join("; ")));
    }
    for e in &ranking.entries {
        println!("{:<16} F {:>14.4}  p {:.3e}  {}", e.name, e.test.f_stat, e.test.p_value, if e.test.causal { "causal" } else { "non-causal" });
    }
    for f in &ranking.failures {
        eprintln!("warning: {}: {}", f.name, f.message);
    }
    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write("granger.csv", &bytes)?;
    Ok(out.commit())
}

pub fn load_spec(path: &Path) -> CliResult<ArxSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::ConfigParse {
        path: path.to_path_buf(),
        message: e.message().to_string(),
    })
}

pub fn synth(spec_path: &Path, out_path: &Path) -> CliResult<Vec<PathBuf>> {
    let spec = load_spec(spec_path)?;
    let frame = generate(&spec)?;
    let mut bytes = Vec::new();
    frame.write_csv(&mut bytes, "t").map_err(|e| Error::io(out_path, e))?;
    let dir = out_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = out_path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("{} is not a file path", out_path.display())))?;
    let mut out = Outputs::new(dir)?;
    out.write(&name.to_string_lossy(), &bytes)?;
    Ok(out.commit())
}

pub fn gradcheck(seed: u64, out: &mut impl Write) -> CliResult<f64> {
    let cases = gradient_suite(seed)?;
    let mut worst = 0.0f64;
    for c in &cases {
        writeln!(
            out,
            "N={} d={} T={:<2} max_rel_err {:.3e}",
            c.n_vars, c.per_var_dim, c.window, c.max_rel_err
        )
        .ok();
        worst = worst.max(c.max_rel_err);
    }
    writeln!(out, "max relative error {worst:.3e}").ok();
    if worst > 1e-4 {
        return Err(CliError::GradCheck(worst));
    }
    Ok(worst)
}
