use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use regbayes::data::{
    load_libsvm, load_multilabel_csv, synth_classification, synth_multitask, write_libsvm, write_multilabel_csv, Dataset,
    Features, Split, SynthParams, TaskSet,
};
use regbayes::ilsvm::{self, Mode};
use regbayes::inference::{write_trace_csv, FitConfig};
use regbayes::model::{self, CvReport, Grid, Model};
use regbayes::mt_ilsvm;

use crate::args::{Command, EvalArgs, FitArgs, ModeArg, ModelKind, PredictArgs, SynthArgs};

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<regbayes::Error> for CliError {
    fn from(e: regbayes::Error) -> Self {
        if e.is_user_error() {
            CliError::User(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn user(msg: impl Into<String>) -> CliError {
    CliError::User(msg.into())
}

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Fit(a) => fit(a),
        Command::Cv(a) => cv(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
    }
}

enum Data {
    Single(Dataset),
    Multi(TaskSet),
}

impl Data {
    fn load(kind: ModelKind, path: &Path) -> CliResult<Data> {
        Ok(match kind {
            ModelKind::Ilsvm => Data::Single(load_libsvm(path)?),
            ModelKind::MtIlsvm => Data::Multi(load_multilabel_csv(path)?),
        })
    }

    fn len(&self) -> usize {
        match self {
            Data::Single(d) => d.len(),
            Data::Multi(t) => t.len(),
        }
    }

    fn with_split(self, split: Option<Split>) -> CliResult<Data> {
        let Some(split) = split else { return Ok(self) };
        Ok(match self {
            Data::Single(d) => Data::Single(d.with_split(&split)?),
            Data::Multi(t) => Data::Multi(t.with_split(&split)?),
        })
    }

    fn standardized(self, yes: bool) -> Data {
        match (self, yes) {
            (d, false) => d,
            (Data::Single(d), true) => Data::Single(d.standardized()),
            (Data::Multi(t), true) => Data::Multi(t.standardized()),
        }
    }
}

/// `--split` takes a training fraction or the path of a split JSON file.
fn resolve_split(spec: Option<&str>, n: usize, seed: u64) -> CliResult<Option<Split>> {
    let Some(spec) = spec else { return Ok(None) };
    if let Ok(frac) = spec.parse::<f64>() {
        return Ok(Some(Split::random(n, frac, seed)?));
    }
    let split = Split::load(spec).map_err(|e| user(format!("split file `{spec}`: {e}")))?;
    Ok(Some(split))
}

fn load_data(kind: ModelKind, path: &Path, split: Option<&str>, seed: u64, standardize: bool) -> CliResult<Data> {
    let data = Data::load(kind, path)?;
    let split = resolve_split(split, data.len(), seed)?;
    Ok(data.with_split(split)?.standardized(standardize))
}

fn read_config(args: FitArgs) -> CliResult<FitArgs> {
    let Some(path) = args.config.clone() else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| user(format!("config `{}`: {e}", path.display())))?;
    let file: FitArgs = serde_json::from_str(&text).map_err(|e| user(format!("config `{}`: {e}", path.display())))?;
    Ok(args.merged_with(file))
}

fn fit_config(a: &FitArgs) -> CliResult<FitConfig> {
    let d = FitConfig::default();
    let cfg = FitConfig {
        alpha: a.alpha.unwrap_or(d.alpha),
        c: a.c.unwrap_or(d.c),
        truncation: a.truncation.unwrap_or(d.truncation),
        inner_tol: a.inner_tol.unwrap_or(d.inner_tol),
        inner_iters: a.inner_iters.unwrap_or(d.inner_iters),
        outer_tol: a.outer_tol.unwrap_or(d.outer_tol),
        outer_iters: a.outer_iters.unwrap_or(d.outer_iters),
        estimate_hypers: a.estimate_hypers,
        seed: a.seed.unwrap_or(d.seed),
        svd_init: a.svd_init,
        parallel: a.parallel,
        solver: d.solver,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn mode_of(a: &FitArgs) -> Mode {
    match a.mode.unwrap_or(ModeArg::Full) {
        ModeArg::Full => Mode::Full,
        ModeArg::Decoupled => Mode::Decoupled,
    }
}

struct Prepared {
    data: Data,
    config: FitConfig,
    mode: Mode,
}

fn prepare(args: &FitArgs) -> CliResult<Prepared> {
    let config = fit_config(args)?;
    let path = args.data.as_deref().ok_or_else(|| user("--data is required"))?;
    let kind = args.model.unwrap_or(ModelKind::Ilsvm);
    let data = load_data(kind, path, args.split.as_deref(), config.seed, args.standardize)?;
    Ok(Prepared {
        data,
        config,
        mode: mode_of(args),
    })
}

fn cross_validate(p: &Prepared, folds: usize) -> CliResult<CvReport> {
    if folds < 2 {
        return Err(user(format!("--cv needs at least 2 folds, got {folds}")));
    }
    let grid = Grid::default();
    Ok(match &p.data {
        Data::Single(d) => model::cross_validate_ilsvm(d, &p.config, p.mode, &grid, folds)?,
        Data::Multi(t) => model::cross_validate_mt(t, &p.config, p.mode, &grid, folds)?,
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = OsString::from(path.file_stem().unwrap_or_default());
    name.push(suffix);
    path.with_file_name(name)
}

fn fit(args: FitArgs) -> CliResult<()> {
    let args = read_config(args)?;
    let mut p = prepare(&args)?;
    if let Some(folds) = args.cv {
        let report = cross_validate(&p, folds)?;
        log::info!("cross-validation chose alpha={} C={}", report.best.alpha, report.best.c);
        p.config = report.best;
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("model.json"));
    let model = match (&p.data, p.mode) {
        (Data::Single(d), Mode::Full) => Model::Ilsvm(ilsvm::fit(d, &p.config)?),
        (Data::Single(d), Mode::Decoupled) => Model::Ilsvm(ilsvm::decoupled_baseline(d, &p.config)?),
        (Data::Multi(t), Mode::Full) => Model::MtIlsvm(mt_ilsvm::fit_mt(t, &p.config)?),
        (Data::Multi(t), Mode::Decoupled) => Model::MtIlsvm(mt_ilsvm::decoupled_baseline(t, &p.config)?),
    };
    model.save(&out)?;
    let trace_path = args.trace.clone().unwrap_or_else(|| sibling(&out, ".trace.csv"));
    write_trace_csv(model.trace(), &trace_path)?;
    let outer = model.trace().iter().filter(|e| e.inner.is_none()).count();
    if model.converged() {
        eprintln!("converged after {outer} outer iterations; model written to {}", out.display());
    } else {
        eprintln!(
            "iteration cap reached ({outer} outer iterations); model written to {}",
            out.display()
        );
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn cv(args: FitArgs) -> CliResult<()> {
    let args = read_config(args)?;
    let p = prepare(&args)?;
    let report = cross_validate(&p, args.cv.unwrap_or(5))?;
    write_json(&report, args.out.as_deref())
}

fn model_kind(m: &Model) -> ModelKind {
    match m {
        Model::Ilsvm(_) => ModelKind::Ilsvm,
        Model::MtIlsvm(_) => ModelKind::MtIlsvm,
    }
}

/// Widens a sparse matrix whose highest index fell short of the model's
/// dimension. Wider data is left alone and rejected later.
fn pad_to(features: Features, dim: usize) -> Features {
    match features {
        Features::Sparse { rows, dim: d } if d < dim => Features::Sparse { rows, dim },
        f => f,
    }
}

/// Re-expresses the labels of `ds` as indices into the model's classes.
fn align_classes(mut ds: Dataset, classes: &[f64]) -> CliResult<Dataset> {
    if let Some(labels) = ds.labels.as_mut() {
        for y in labels.iter_mut() {
            let value = ds.classes[*y];
            *y = classes
                .iter()
                .position(|&c| c == value)
                .ok_or_else(|| user(format!("label {value} is not one of the model's classes {classes:?}")))?;
        }
    }
    ds.classes = classes.to_vec();
    ds.validate()?;
    Ok(ds)
}

fn load_for_model(model: &Model, path: &Path, split: Option<&str>, seed: Option<u64>, standardize: bool) -> CliResult<Data> {
    let seed = seed.unwrap_or(match model {
        Model::Ilsvm(m) => m.config.seed,
        Model::MtIlsvm(m) => m.config.seed,
    });
    let mut data = Data::load(model_kind(model), path)?;
    if let (Data::Single(ds), Model::Ilsvm(m)) = (&mut data, model) {
        ds.features = pad_to(std::mem::replace(&mut ds.features, Features::Dense(Default::default())), m.dim);
        *ds = align_classes(ds.clone(), &m.classes)?;
    }
    if data.len() == 0 {
        return Err(user(format!("{}: no rows", path.display())));
    }
    let split = resolve_split(split, data.len(), seed)?;
    Ok(data.with_split(split)?.standardized(standardize))
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let model = Model::load(&args.model_file)?;
    let data = load_for_model(&model, &args.data, args.split.as_deref(), args.seed, args.standardize)?;
    let report = match (&model, &data) {
        (Model::Ilsvm(m), Data::Single(ds)) => model::evaluate_ilsvm(m, ds)?,
        (Model::MtIlsvm(m), Data::Multi(ts)) => model::evaluate_mt(m, ts)?,
        _ => unreachable!("data loaded for the model kind"),
    };
    write_json(&report, args.out.as_deref())
}

fn predict(args: PredictArgs) -> CliResult<()> {
    let model = Model::load(&args.model_file)?;
    let data = load_for_model(&model, &args.data, args.split.as_deref(), args.seed, args.standardize)?;
    let mut w: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    match (&model, &data) {
        (Model::Ilsvm(m), Data::Single(ds)) => {
            let pred = m.predict(&ds.features.to_dense())?;
            writeln!(w, "row,label")?;
            for (n, y) in pred.iter().enumerate() {
                writeln!(w, "{n},{}", m.classes[*y])?;
            }
        }
        (Model::MtIlsvm(m), Data::Multi(ts)) => {
            if ts.num_tasks() != m.task_names.len() {
                return Err(user(format!(
                    "model has {} tasks, data has {}",
                    m.task_names.len(),
                    ts.num_tasks()
                )));
            }
            let pred = m.predict(&ts.features.to_dense())?;
            writeln!(w, "row,{}", m.task_names.join(","))?;
            for n in 0..ts.len() {
                let cells: Vec<String> = pred.iter().map(|task| task[n].to_string()).collect();
                writeln!(w, "{n},{}", cells.join(","))?;
            }
        }
        _ => unreachable!("data loaded for the model kind"),
    }
    w.flush()?;
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Serialize)]
struct TruthFile<'a> {
    params: &'a SynthParams,
    truth: &'a regbayes::data::SynthTruth,
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let params = SynthParams {
        n: a.n,
        d: a.d,
        k_true: a.k_true,
        alpha: a.alpha,
        noise_sd: a.noise_sd,
        labels: a.labels,
        tasks: a.tasks,
        shared_inputs: a.shared_inputs,
        train_fraction: a.split,
        seed: a.seed,
    };
    let (split, truth, data_path) = match a.model {
        ModelKind::Ilsvm => {
            let (ds, truth) = synth_classification(&params)?;
            let path = with_suffix(&a.out, ".svm");
            write_libsvm(&ds, &path)?;
            (Split { train: ds.train, test: ds.test }, truth, path)
        }
        ModelKind::MtIlsvm => {
            let (ts, truth) = synth_multitask(&params)?;
            let path = with_suffix(&a.out, ".csv");
            write_multilabel_csv(&ts, &path)?;
            let mut test = ts.test.first().cloned().unwrap_or_default();
            test.sort_unstable();
            let train = (0..ts.len()).filter(|n| test.binary_search(n).is_err()).collect();
            (Split { train, test }, truth, path)
        }
    };
    if a.split.is_some() {
        split.save(with_suffix(&a.out, ".split.json"))?;
    }
    write_json(&TruthFile { params: &params, truth: &truth }, Some(&with_suffix(&a.out, ".truth.json")))?;
    eprintln!("wrote {}", data_path.display());
    Ok(())
}
