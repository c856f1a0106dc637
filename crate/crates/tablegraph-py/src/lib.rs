//! Python bindings for the tablegraph pipeline.
//!
//! The module mirrors the command-line surface at library granularity:
//! synthesize samples, inspect their ground-truth graphs, run the clique
//! algorithms, and drive training/evaluation from Python. Structured
//! results (training summaries, evaluation reports) come back as JSON
//! strings so Python can `json.loads` them without a conversion layer.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::{Deserialize, Serialize};
use tablegraph::eval::{self, Averaging, EvalConfig, Symmetrize};
use tablegraph::graph::{self, AdjacencyMatrix, CliqueKind, CliqueSet};
use tablegraph::model::{init_params, ModelConfig};
use tablegraph::nn::{checkpoint, DType, Element};
use tablegraph::synth::io::{self as synth_io, CategorySpec};
use tablegraph::synth::{generate_sample, Category, GenConfig};
use tablegraph::train::TrainConfig;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn matrix_to_rows(m: &AdjacencyMatrix) -> Vec<Vec<bool>> {
    (0..m.vertex_count()).map(|i| m.row(i).to_vec()).collect()
}

fn matrix_from_rows(rows: &[Vec<bool>]) -> PyResult<AdjacencyMatrix> {
    let v = rows.len();
    if rows.iter().any(|r| r.len() != v) {
        return Err(PyValueError::new_err("adjacency matrix must be square"));
    }
    let mut m = AdjacencyMatrix::identity(v);
    for (i, row) in rows.iter().enumerate() {
        for (j, &bit) in row.iter().enumerate() {
            m.set_raw(i, j, bit);
        }
    }
    if !m.is_symmetric() {
        return Err(PyValueError::new_err("adjacency matrix must be symmetric"));
    }
    if !m.is_reflexive() {
        return Err(PyValueError::new_err(
            "adjacency matrix must have a true diagonal",
        ));
    }
    Ok(m)
}

/// One rendered word with its ground-truth assignments.
#[pyclass(frozen)]
struct Vertex {
    /// `(x0, y0, x1, y1)`, half-open pixel box.
    #[pyo3(get)]
    bbox: (u32, u32, u32, u32),
    #[pyo3(get)]
    text_len: u32,
    #[pyo3(get)]
    cell_id: u32,
    #[pyo3(get)]
    row_ids: Vec<u32>,
    #[pyo3(get)]
    col_ids: Vec<u32>,
}

#[pymethods]
impl Vertex {
    fn __repr__(&self) -> String {
        format!(
            "Vertex(bbox={:?}, cell_id={}, row_ids={:?}, col_ids={:?})",
            self.bbox, self.cell_id, self.row_ids, self.col_ids
        )
    }
}

/// A synthesized table image plus its word-level ground truth.
#[pyclass]
struct Sample {
    inner: tablegraph::synth::Sample,
}

#[pymethods]
impl Sample {
    #[getter]
    fn category(&self) -> u8 {
        self.inner.category.id()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.image.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.image.width()
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertex_count()
    }

    /// Row-major 8-bit grayscale pixels, `height * width` bytes.
    fn image_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.image.pixels())
    }

    fn vertices(&self) -> Vec<Vertex> {
        self.inner
            .vertices
            .iter()
            .map(|v| Vertex {
                bbox: (v.bbox[0], v.bbox[1], v.bbox[2], v.bbox[3]),
                text_len: v.text_len,
                cell_id: v.cell_id,
                row_ids: v.row_ids.clone(),
                col_ids: v.col_ids.clone(),
            })
            .collect()
    }

    /// The three ground-truth adjacency matrices `(cells, rows, cols)` as
    /// nested boolean lists.
    fn adjacency(&self) -> (Vec<Vec<bool>>, Vec<Vec<bool>>, Vec<Vec<bool>>) {
        let triple = self.inner.adjacency();
        (
            matrix_to_rows(&triple.cells),
            matrix_to_rows(&triple.rows),
            matrix_to_rows(&triple.cols),
        )
    }

    /// Raises ValueError when any structural invariant is broken.
    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_err)
    }

    fn has_merges(&self) -> bool {
        self.inner.has_merges()
    }

    /// Writes `<stem>.pgm` and `<stem>.json` into `dir`.
    fn save(&self, dir: PathBuf, stem: &str) -> PyResult<()> {
        std::fs::create_dir_all(&dir).map_err(io_err)?;
        synth_io::write_sample(&dir, stem, &self.inner).map_err(io_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Sample(category={}, seed={}, {}x{}, {} words)",
            self.inner.category.id(),
            self.inner.seed,
            self.inner.image.height(),
            self.inner.image.width(),
            self.inner.vertex_count()
        )
    }
}

fn gen_config(desk: bool) -> GenConfig {
    if desk {
        GenConfig::desk()
    } else {
        GenConfig::default()
    }
}

/// Synthesizes one table. `category` is 1-4; `desk=True` selects the small
/// 128x128 preset, otherwise the 256x256 default.
#[pyfunction]
#[pyo3(signature = (category, seed, desk = true))]
fn generate(category: u8, seed: u64, desk: bool) -> PyResult<Sample> {
    let cat = Category::from_id(category)
        .ok_or_else(|| PyValueError::new_err(format!("category must be 1-4, got {category}")))?;
    let inner = generate_sample(&gen_config(desk), cat, seed).map_err(value_err)?;
    Ok(Sample { inner })
}

/// Reads `<stem>.pgm` + `<stem>.json` from a dataset directory.
#[pyfunction]
fn load(dir: PathBuf, stem: &str) -> PyResult<Sample> {
    let inner = synth_io::read_sample(&dir, stem).map_err(io_err)?;
    Ok(Sample { inner })
}

/// Writes a dataset with a manifest, like the CLI `generate` subcommand.
/// `category` is `"1"`-`"4"` or `"mixed"`. Returns the number of samples.
#[pyfunction]
#[pyo3(signature = (dir, count, category = "mixed", seed = 0, desk = true))]
fn generate_dataset(
    dir: PathBuf,
    count: usize,
    category: &str,
    seed: u64,
    desk: bool,
) -> PyResult<usize> {
    let spec: CategorySpec = category.parse().map_err(value_err)?;
    let entries =
        synth_io::generate_dataset(&gen_config(desk), spec, count, seed, &dir).map_err(io_err)?;
    Ok(entries.len())
}

/// Connected components of a symmetric reflexive adjacency matrix, each
/// sorted, ordered by smallest member.
#[pyfunction]
fn connected_components(matrix: Vec<Vec<bool>>) -> PyResult<Vec<Vec<usize>>> {
    let m = matrix_from_rows(&matrix)?;
    Ok(graph::connected_components(&m).cliques)
}

/// All maximal cliques of a symmetric reflexive adjacency matrix. Raises
/// ValueError when the clique guard trips.
#[pyfunction]
fn maximal_cliques(matrix: Vec<Vec<bool>>) -> PyResult<Vec<Vec<usize>>> {
    let m = matrix_from_rows(&matrix)?;
    Ok(graph::maximal_cliques(&m).map_err(value_err)?.cliques)
}

/// Rebuilds the adjacency matrix covered by a clique list over `v` vertices.
#[pyfunction]
fn adjacency_from_cliques(cliques: Vec<Vec<usize>>, v: usize) -> PyResult<Vec<Vec<bool>>> {
    if cliques.iter().flatten().any(|&i| i >= v) {
        return Err(PyValueError::new_err("clique member out of range"));
    }
    let set = CliqueSet {
        kind: CliqueKind::Cell,
        cliques,
    };
    Ok(matrix_to_rows(&graph::adjacency_from_cliques(&set, v)))
}

/// On-disk train-run configuration: the same `{"model": .., "train": ..}`
/// document the CLI reads and writes.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainFile {
    model: ModelConfig,
    train: TrainConfig,
}

fn train_typed<E: Element>(
    file: &TrainFile,
    samples: &[tablegraph::synth::Sample],
    out_dir: &Path,
    resume: bool,
) -> PyResult<String> {
    let ckpt = out_dir.join("model.ckpt");
    let mut store = if resume {
        checkpoint::load::<E>(&ckpt).map_err(io_err)?
    } else {
        init_params::<E>(&file.model, file.train.seed).map_err(value_err)?
    };
    let mut runlog = std::fs::File::options()
        .create(true)
        .append(resume)
        .truncate(!resume)
        .write(true)
        .open(out_dir.join("runlog.jsonl"))
        .map_err(io_err)?;
    let summary = tablegraph::train::train(
        &file.model,
        &file.train,
        samples,
        &mut store,
        Some(&ckpt),
        Some(&mut runlog as &mut dyn std::io::Write),
    )
    .map_err(value_err)?;
    runlog.flush().map_err(io_err)?;
    serde_json::to_string(&summary).map_err(value_err)
}

/// Trains on a dataset directory and writes `model.ckpt`, `config.json` and
/// `runlog.jsonl` into `out_dir`, exactly like the CLI `train` subcommand.
/// `config_json` is the `{"model": .., "train": ..}` document. Returns the
/// training summary as a JSON string. With `resume=True` the optimizer
/// state is loaded from the existing checkpoint in `out_dir`.
#[pyfunction]
#[pyo3(signature = (data_dir, out_dir, config_json, resume = false))]
fn train(data_dir: PathBuf, out_dir: PathBuf, config_json: &str, resume: bool) -> PyResult<String> {
    let file: TrainFile = serde_json::from_str(config_json).map_err(value_err)?;
    file.model.validate().map_err(value_err)?;
    file.train.validate().map_err(value_err)?;
    let samples = synth_io::load_dataset(&data_dir).map_err(io_err)?;
    std::fs::create_dir_all(&out_dir).map_err(io_err)?;
    std::fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(&file).map_err(value_err)? + "\n",
    )
    .map_err(io_err)?;
    match file.model.dtype {
        DType::F32 => train_typed::<f32>(&file, &samples, &out_dir, resume),
        DType::F64 => train_typed::<f64>(&file, &samples, &out_dir, resume),
    }
}

fn eval_config(symmetrize: &str, averaging: &str) -> PyResult<EvalConfig> {
    let symmetrize = match symmetrize {
        "or" => Symmetrize::Or,
        "and" => Symmetrize::And,
        other => {
            return Err(PyValueError::new_err(format!(
                "symmetrize must be 'or' or 'and', got {other:?}"
            )))
        }
    };
    let averaging = match averaging {
        "macro" => Averaging::Macro,
        "micro" => Averaging::Micro,
        other => {
            return Err(PyValueError::new_err(format!(
                "averaging must be 'macro' or 'micro', got {other:?}"
            )))
        }
    };
    Ok(EvalConfig {
        symmetrize,
        averaging,
    })
}

/// Evaluates a dataset and returns the report as a JSON string. With a
/// checkpoint path the model architecture is read from the `config.json`
/// beside it (the file the `train` run wrote); without one the ground
/// truth is scored against itself, like the CLI `--oracle` flag.
#[pyfunction]
#[pyo3(signature = (data_dir, checkpoint = None, symmetrize = "or", averaging = "macro"))]
fn evaluate(
    data_dir: PathBuf,
    checkpoint: Option<PathBuf>,
    symmetrize: &str,
    averaging: &str,
) -> PyResult<String> {
    let cfg = eval_config(symmetrize, averaging)?;
    let samples = synth_io::load_dataset(&data_dir).map_err(io_err)?;
    let report = match checkpoint {
        None => eval::evaluate_oracle(&samples, &cfg).map_err(value_err)?,
        Some(ckpt) => {
            let sibling = ckpt.with_file_name("config.json");
            let text = std::fs::read_to_string(&sibling).map_err(|e| {
                io_err(format!("no config.json beside {}: {e}", ckpt.display()))
            })?;
            let file: TrainFile = serde_json::from_str(&text).map_err(value_err)?;
            match checkpoint::peek_dtype(&ckpt).map_err(io_err)? {
                DType::F32 => {
                    let store = checkpoint::load::<f32>(&ckpt).map_err(io_err)?;
                    eval::evaluate(&file.model, &store, &samples, &cfg).map_err(value_err)?
                }
                DType::F64 => {
                    let store = checkpoint::load::<f64>(&ckpt).map_err(io_err)?;
                    eval::evaluate(&file.model, &store, &samples, &cfg).map_err(value_err)?
                }
            }
        }
    };
    serde_json::to_string(&report).map_err(value_err)
}

#[pymodule]
fn tablegraph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Sample>()?;
    m.add_class::<Vertex>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(connected_components, m)?)?;
    m.add_function(wrap_pyfunction!(maximal_cliques, m)?)?;
    m.add_function(wrap_pyfunction!(adjacency_from_cliques, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
