//! Subcommand implementations.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use tablegraph::eval::{
    self, evaluate, evaluate_oracle, perfect_match, predict_triple, CategoryReport, EvalConfig,
    EvalReport, PredictedTriple, Symmetrize,
};
use tablegraph::graph::{connected_components, maximal_cliques, CliqueKind};
use tablegraph::model::{init_params, InteractionKind, ModelConfig};
use tablegraph::nn::checkpoint::{self, peek_dtype};
use tablegraph::nn::{DType, Element};
use tablegraph::synth::io::{generate_dataset, load_dataset, read_sample, CategorySpec};
use tablegraph::synth::{GenConfig, Sample};
use tablegraph::train::{train, StepLog, TrainConfig};

use crate::error::AppError;
use crate::render::{overlay, write_ppm};
use crate::{
    EvaluateArgs, GenerateArgs, PredictArgs, TrainArgs, VisualizeArgs,
};

/// Combined architecture and optimizer settings, as stored in a train
/// run's `config.json`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainFile {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
}

fn write_pretty_json<T: Serialize>(value: &T, path: &Path) -> Result<(), AppError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn parse_model(s: &str) -> Result<InteractionKind, AppError> {
    match s {
        "fcnn" => Ok(InteractionKind::Fcnn),
        "dgcnn" | "dgcnn_star" => Ok(InteractionKind::DgcnnStar),
        "gravnet" | "gravnet_star" => Ok(InteractionKind::GravnetStar),
        _ => Err(AppError::Config(format!(
            "model must be fcnn, dgcnn, or gravnet, got {s:?}"
        ))),
    }
}

fn parse_dtype(s: &str) -> Result<DType, AppError> {
    match s {
        "f32" => Ok(DType::F32),
        "f64" => Ok(DType::F64),
        _ => Err(AppError::Config(format!("dtype must be f32 or f64, got {s:?}"))),
    }
}

fn parse_symmetrize(s: &str) -> Result<Symmetrize, AppError> {
    match s {
        "or" => Ok(Symmetrize::Or),
        "and" => Ok(Symmetrize::And),
        _ => Err(AppError::Config(format!(
            "symmetrize must be or / and, got {s:?}"
        ))),
    }
}

fn parse_averaging(s: &str) -> Result<eval::Averaging, AppError> {
    match s {
        "macro" => Ok(eval::Averaging::Macro),
        "micro" => Ok(eval::Averaging::Micro),
        _ => Err(AppError::Config(format!(
            "averaging must be macro / micro, got {s:?}"
        ))),
    }
}

// -- generate --------------------------------------------------------------

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), AppError> {
    let spec: CategorySpec = args.category.parse().map_err(AppError::Config)?;
    let cfg = match (&args.config, args.desk) {
        (Some(path), _) => load_json::<GenConfig>(path)?,
        (None, true) => GenConfig::desk(),
        (None, false) => GenConfig::default(),
    };
    let entries = generate_dataset(&cfg, spec, args.count, args.seed, &args.out)?;
    let mut counts = [0usize; 4];
    for entry in &entries {
        counts[(entry.category - 1) as usize] += 1;
    }
    println!(
        "wrote {} samples to {} (category counts: 1={} 2={} 3={} 4={})",
        entries.len(),
        args.out.display(),
        counts[0],
        counts[1],
        counts[2],
        counts[3]
    );
    Ok(())
}

// -- train -----------------------------------------------------------------

/// Mirrors runlog lines onto stdout every `every` completed steps.
struct Echo<W: Write> {
    inner: W,
    line: Vec<u8>,
    every: u64,
}

impl<W: Write> Echo<W> {
    fn new(inner: W, every: u64) -> Self {
        Self {
            inner,
            line: Vec::new(),
            every,
        }
    }
}

impl<W: Write> Write for Echo<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.inner.write_all(buf)?;
        for &b in buf {
            if b == b'\n' {
                if self.every > 0 {
                    if let Ok(entry) = serde_json::from_slice::<StepLog>(&self.line) {
                        if entry.step % self.every == 0 {
                            println!(
                                "step {:>6}  loss {:.4}  acc cells/rows/cols {:.3}/{:.3}/{:.3}",
                                entry.step,
                                entry.loss,
                                entry.acc_cells,
                                entry.acc_rows,
                                entry.acc_cols
                            );
                        }
                    }
                }
                self.line.clear();
            } else {
                self.line.push(b);
            }
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), AppError> {
    let mut file: TrainFile = match &args.config {
        Some(path) => load_json(path)?,
        None => TrainFile::default(),
    };
    if let Some(model) = &args.model {
        file.model.interaction = parse_model(model)?;
    }
    if let Some(dtype) = &args.dtype {
        file.model.dtype = parse_dtype(dtype)?;
    }
    if let Some(steps) = args.steps {
        file.train.steps = steps;
    }
    if let Some(lr) = args.lr {
        file.train.lr = lr;
    }
    if let Some(seed) = args.seed {
        file.train.seed = seed;
    }
    if let Some(ppv) = args.pairs_per_vertex {
        file.train.pairs_per_vertex = ppv;
    }
    if let Some(every) = args.checkpoint_every {
        file.train.checkpoint_every = every;
    }
    if let Some(every) = args.log_every {
        file.train.log_every = every;
    }
    file.model.validate()?;
    file.train.validate()?;

    match file.model.dtype {
        DType::F32 => run_train::<f32>(&file, args),
        DType::F64 => run_train::<f64>(&file, args),
    }
}

fn run_train<E: Element>(file: &TrainFile, args: &TrainArgs) -> Result<(), AppError> {
    let samples = load_dataset(&args.data)?;
    let mut store = match &args.resume {
        Some(path) => checkpoint::load::<E>(path)?,
        None => init_params::<E>(&file.model, file.train.seed)?,
    };
    std::fs::create_dir_all(&args.out)?;
    write_pretty_json(file, &args.out.join("config.json"))?;

    let runlog_path = args.out.join("runlog.jsonl");
    let runlog = if args.resume.is_some() {
        File::options().create(true).append(true).open(&runlog_path)?
    } else {
        File::create(&runlog_path)?
    };
    let mut echo = Echo::new(BufWriter::new(runlog), args.print_every);

    let checkpoint_path = args.out.join("model.ckpt");
    let summary = train(
        &file.model,
        &file.train,
        &samples,
        &mut store,
        Some(&checkpoint_path),
        Some(&mut echo),
    )?;
    echo.flush()?;
    println!(
        "trained {} steps ({} total), final loss {:.4}; checkpoint {}",
        summary.steps_run,
        summary.final_step,
        summary.final_loss,
        checkpoint_path.display()
    );
    Ok(())
}

// -- evaluate --------------------------------------------------------------

/// Finds the model architecture for a checkpoint: an explicit --config
/// wins, otherwise the config.json its train run wrote alongside.
fn resolve_model_config(
    checkpoint: &Path,
    flag: Option<&PathBuf>,
) -> Result<ModelConfig, AppError> {
    let path = match flag {
        Some(p) => p.clone(),
        None => {
            let sibling = checkpoint.with_file_name("config.json");
            if !sibling.exists() {
                return Err(AppError::Config(format!(
                    "no config.json beside {}; pass --config",
                    checkpoint.display()
                )));
            }
            sibling
        }
    };
    let file: TrainFile = load_json(&path)?;
    file.model.validate()?;
    Ok(file.model)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), AppError> {
    let samples = load_dataset(&args.data)?;
    let eval_cfg = EvalConfig {
        symmetrize: parse_symmetrize(&args.symmetrize)?,
        averaging: parse_averaging(&args.averaging)?,
    };
    let report = if args.oracle {
        evaluate_oracle(&samples, &eval_cfg)?
    } else {
        let ckpt = args.checkpoint.as_ref().ok_or_else(|| {
            AppError::Config("pass --checkpoint FILE or --oracle".into())
        })?;
        let model_cfg = resolve_model_config(ckpt, args.config.as_ref())?;
        match peek_dtype(ckpt)? {
            DType::F32 => {
                let store = checkpoint::load::<f32>(ckpt)?;
                evaluate(&model_cfg, &store, &samples, &eval_cfg)?
            }
            DType::F64 => {
                let store = checkpoint::load::<f64>(ckpt)?;
                evaluate(&model_cfg, &store, &samples, &eval_cfg)?
            }
        }
    };

    print_report(&report);
    if let Some(out) = &args.out {
        write_pretty_json(&report, out)?;
    }
    if let Some(csv_path) = &args.csv {
        let mut out = BufWriter::new(File::create(csv_path)?);
        eval::write_csv(&report, &mut out)?;
        out.flush()?;
    }
    Ok(())
}

fn print_report(report: &EvalReport) {
    println!(
        "category  samples  expl   cells tpr/fpr    rows tpr/fpr     cols tpr/fpr    perfect"
    );
    let line = |label: &str, r: &CategoryReport| {
        println!(
            "{label:>8}  {:>7}  {:>4}  {:>6.2}/{:<6.2}  {:>6.2}/{:<6.2}  {:>6.2}/{:<6.2}  {:>7.2}",
            r.samples,
            r.explosions,
            r.cells.tpr,
            r.cells.fpr,
            r.rows.tpr,
            r.rows.fpr,
            r.cols.tpr,
            r.cols.fpr,
            r.perfect_matching
        );
    };
    for (id, r) in &report.categories {
        line(&id.to_string(), r);
    }
    line("all", &report.overall);
}

// -- predict / visualize ---------------------------------------------------

fn split_sample_path(path: &Path) -> Result<(PathBuf, String), AppError> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| AppError::Config(format!("bad sample path {}", path.display())))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    Ok((dir.to_path_buf(), stem.to_string()))
}

/// Model inference when a checkpoint is given, ground-truth decode with
/// --oracle (or when no checkpoint is given at all).
fn predicted_or_oracle(
    sample: &Sample,
    checkpoint: Option<&PathBuf>,
    config: Option<&PathBuf>,
    symmetrize: Symmetrize,
) -> Result<(PredictedTriple, &'static str), AppError> {
    match checkpoint {
        Some(ckpt) => {
            let model_cfg = resolve_model_config(ckpt, config)?;
            let pred = match peek_dtype(ckpt)? {
                DType::F32 => {
                    let store = checkpoint::load::<f32>(ckpt)?;
                    predict_triple(&model_cfg, &store, sample, symmetrize)?
                }
                DType::F64 => {
                    let store = checkpoint::load::<f64>(ckpt)?;
                    predict_triple(&model_cfg, &store, sample, symmetrize)?
                }
            };
            Ok((pred, "model"))
        }
        None => {
            let gt = sample.adjacency();
            Ok((
                PredictedTriple {
                    cells: gt.cells,
                    rows: gt.rows,
                    cols: gt.cols,
                },
                "oracle",
            ))
        }
    }
}

#[derive(Serialize)]
struct PredictOutput {
    stem: String,
    category: u8,
    vertices: usize,
    source: &'static str,
    symmetrize: Symmetrize,
    /// Vertex-id lists per reconstructed structure element; null when
    /// clique enumeration exploded on a degenerate prediction.
    cliques: PredictCliques,
    explosions: Vec<&'static str>,
    perfect_match: bool,
}

#[derive(Serialize)]
struct PredictCliques {
    cells: Vec<Vec<usize>>,
    rows: Option<Vec<Vec<usize>>>,
    cols: Option<Vec<Vec<usize>>>,
}

pub fn cmd_predict(args: &PredictArgs) -> Result<(), AppError> {
    let (dir, stem) = split_sample_path(&args.sample)?;
    let sample = read_sample(&dir, &stem)?;
    let symmetrize = parse_symmetrize(&args.symmetrize)?;
    let checkpoint = if args.oracle { None } else { args.checkpoint.as_ref() };
    if checkpoint.is_none() && !args.oracle {
        return Err(AppError::Config(
            "pass --checkpoint FILE or --oracle".into(),
        ));
    }
    let (pred, source) = predicted_or_oracle(&sample, checkpoint, args.config.as_ref(), symmetrize)?;

    let gt = sample.adjacency();
    let rows = maximal_cliques(&pred.rows).ok();
    let cols = maximal_cliques(&pred.cols).ok();
    let mut explosions = Vec::new();
    if rows.is_none() {
        explosions.push("rows");
    }
    if cols.is_none() {
        explosions.push("cols");
    }
    let output = PredictOutput {
        stem,
        category: sample.category.id(),
        vertices: sample.vertex_count(),
        source,
        symmetrize,
        cliques: PredictCliques {
            cells: connected_components(&pred.cells).cliques,
            rows: rows.map(|s| s.cliques),
            cols: cols.map(|s| s.cliques),
        },
        explosions,
        perfect_match: perfect_match(&gt, &pred),
    };
    match &args.out {
        Some(path) => write_pretty_json(&output, path)?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, &output)
                .map_err(|e| AppError::Io(e.to_string()))?;
            writeln!(lock)?;
        }
    }
    Ok(())
}

pub fn cmd_visualize(args: &VisualizeArgs) -> Result<(), AppError> {
    let (dir, stem) = split_sample_path(&args.sample)?;
    let sample = read_sample(&dir, &stem)?;
    let symmetrize = parse_symmetrize(&args.symmetrize)?;
    let (pred, _) =
        predicted_or_oracle(&sample, args.checkpoint.as_ref(), args.config.as_ref(), symmetrize)?;

    let sets = [
        connected_components(&pred.cells).with_kind(CliqueKind::Cell),
        maximal_cliques(&pred.rows)?.with_kind(CliqueKind::Row),
        maximal_cliques(&pred.cols)?.with_kind(CliqueKind::Column),
    ];
    let prefix_name = args
        .out
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| AppError::Config(format!("bad output prefix {}", args.out.display())))?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    for (kind, set) in ["cells", "rows", "cols"].iter().zip(&sets) {
        let rgb = overlay(&sample.image, &sample.vertices, set);
        let path = args.out.with_file_name(format!("{prefix_name}-{kind}.ppm"));
        write_ppm(&path, sample.image.width(), sample.image.height(), &rgb)?;
    }
    println!(
        "wrote {}-{{cells,rows,cols}}.ppm",
        args.out.display()
    );
    Ok(())
}
