//! On-disk layout for samples and datasets.
//!
//! A sample is a pair of files sharing a stem: `NNNNN.pgm` (binary P5) and
//! `NNNNN.json` (metadata with the vertices). A dataset directory holds the
//! sample pairs plus `manifest.jsonl`, one entry per line in sample order.
//! Adjacency matrices are never written; they are re-derived from vertex
//! identifiers after loading.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    generate_sample, mixed_category, sample_seed, Category, GenConfig, GrayImage, Sample,
    SynthError, Vertex,
};

pub const SAMPLE_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.jsonl";

// -- pgm ------------------------------------------------------------------

pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<(), SynthError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", img.width(), img.height())?;
    w.write_all(img.pixels())?;
    w.flush()?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, SynthError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 2];
    r.read_exact(&mut header)
        .map_err(|_| SynthError::Format("pgm: truncated header".into()))?;
    if &header != b"P5" {
        return Err(SynthError::Format("pgm: not a binary P5 file".into()));
    }
    let width = read_ascii_int(&mut r)?;
    let height = read_ascii_int(&mut r)?;
    let maxval = read_ascii_int(&mut r)?;
    if maxval != 255 {
        return Err(SynthError::Format(format!("pgm: maxval {maxval}, expected 255")));
    }
    let mut data = vec![0u8; width * height];
    r.read_exact(&mut data)
        .map_err(|_| SynthError::Format("pgm: truncated pixel data".into()))?;
    GrayImage::from_raw(height, width, data)
}

/// Reads one whitespace-delimited decimal integer, skipping `#` comments.
/// Consumes exactly one trailing whitespace byte, as the format requires.
fn read_ascii_int(r: &mut impl Read) -> Result<usize, SynthError> {
    let mut byte = [0u8; 1];
    let mut value: Option<usize> = None;
    loop {
        if r.read(&mut byte)? == 0 {
            return value.ok_or_else(|| SynthError::Format("pgm: unexpected end of header".into()));
        }
        match byte[0] {
            b'0'..=b'9' => {
                let d = (byte[0] - b'0') as usize;
                value = Some(
                    value
                        .unwrap_or(0)
                        .checked_mul(10)
                        .and_then(|v| v.checked_add(d))
                        .ok_or_else(|| SynthError::Format("pgm: dimension overflow".into()))?,
                );
            }
            b' ' | b'\t' | b'\r' | b'\n' => {
                if let Some(v) = value {
                    return Ok(v);
                }
            }
            b'#' => {
                if value.is_some() {
                    return Err(SynthError::Format("pgm: comment inside number".into()));
                }
                loop {
                    if r.read(&mut byte)? == 0 || byte[0] == b'\n' {
                        break;
                    }
                }
            }
            other => {
                return Err(SynthError::Format(format!(
                    "pgm: unexpected byte {other:#04x} in header"
                )));
            }
        }
    }
}

// -- sample metadata ------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ImageDims {
    h: usize,
    w: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleMeta {
    version: u32,
    category: u8,
    seed: u64,
    image: ImageDims,
    vertices: Vec<Vertex>,
}

/// Writes `stem.pgm` and `stem.json` into `dir`.
pub fn write_sample(dir: &Path, stem: &str, sample: &Sample) -> Result<(), SynthError> {
    write_pgm(&sample.image, &dir.join(format!("{stem}.pgm")))?;
    let meta = SampleMeta {
        version: SAMPLE_VERSION,
        category: sample.category.id(),
        seed: sample.seed,
        image: ImageDims {
            h: sample.image.height(),
            w: sample.image.width(),
        },
        vertices: sample.vertices.clone(),
    };
    let mut w = BufWriter::new(File::create(dir.join(format!("{stem}.json")))?);
    serde_json::to_writer_pretty(&mut w, &meta)
        .map_err(|e| SynthError::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_sample(dir: &Path, stem: &str) -> Result<Sample, SynthError> {
    let meta_path = dir.join(format!("{stem}.json"));
    let meta: SampleMeta = serde_json::from_reader(BufReader::new(File::open(&meta_path)?))
        .map_err(|e| SynthError::Format(format!("{}: {e}", meta_path.display())))?;
    if meta.version != SAMPLE_VERSION {
        return Err(SynthError::Format(format!(
            "unsupported sample version {} (expected {SAMPLE_VERSION})",
            meta.version
        )));
    }
    let category = Category::from_id(meta.category)
        .ok_or_else(|| SynthError::Format(format!("unknown category {}", meta.category)))?;
    let image = read_pgm(&dir.join(format!("{stem}.pgm")))?;
    if image.height() != meta.image.h || image.width() != meta.image.w {
        return Err(SynthError::Format(format!(
            "image is {}x{} but metadata says {}x{}",
            image.height(),
            image.width(),
            meta.image.h,
            meta.image.w
        )));
    }
    Ok(Sample {
        category,
        seed: meta.seed,
        image,
        vertices: meta.vertices,
    })
}

// -- manifest and datasets ------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestEntry {
    pub stem: String,
    pub category: u8,
    pub vertices: usize,
}

/// Which categories a dataset draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CategorySpec {
    Fixed(Category),
    /// Cycle through categories 1 to 4 by sample index.
    Mixed,
}

impl CategorySpec {
    pub fn category_for(self, index: usize) -> Category {
        match self {
            CategorySpec::Fixed(c) => c,
            CategorySpec::Mixed => mixed_category(index),
        }
    }
}

impl FromStr for CategorySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mixed" => Ok(CategorySpec::Mixed),
            _ => s
                .parse::<u8>()
                .ok()
                .and_then(Category::from_id)
                .map(CategorySpec::Fixed)
                .ok_or_else(|| format!("category must be 1-4 or \"mixed\", got {s:?}")),
        }
    }
}

impl std::fmt::Display for CategorySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CategorySpec::Fixed(c) => write!(f, "{c}"),
            CategorySpec::Mixed => write!(f, "mixed"),
        }
    }
}

pub fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<(), SynthError> {
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST_NAME))?);
    for entry in entries {
        serde_json::to_writer(&mut w, entry).map_err(|e| SynthError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>, SynthError> {
    let path = dir.join(MANIFEST_NAME);
    let r = BufReader::new(File::open(&path)?);
    let mut entries = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| {
            SynthError::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Generates `count` samples into `dir` and writes the manifest. Sample
/// `i` uses its own seed derived from `master_seed`, so any sample can be
/// regenerated in isolation.
pub fn generate_dataset(
    cfg: &GenConfig,
    spec: CategorySpec,
    count: usize,
    master_seed: u64,
    dir: &Path,
) -> Result<Vec<ManifestEntry>, SynthError> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let sample = generate_sample(cfg, spec.category_for(i), sample_seed(master_seed, i))?;
        let stem = format!("{i:05}");
        write_sample(dir, &stem, &sample)?;
        entries.push(ManifestEntry {
            stem,
            category: sample.category.id(),
            vertices: sample.vertex_count(),
        });
    }
    write_manifest(dir, &entries)?;
    Ok(entries)
}

/// Loads every sample listed in a dataset's manifest, in manifest order.
pub fn load_dataset(dir: &Path) -> Result<Vec<Sample>, SynthError> {
    let entries = read_manifest(dir)?;
    let mut samples = Vec::with_capacity(entries.len());
    for entry in &entries {
        let sample = read_sample(dir, &entry.stem)?;
        if sample.vertex_count() != entry.vertices || sample.category.id() != entry.category {
            return Err(SynthError::Format(format!(
                "sample {} disagrees with its manifest entry",
                entry.stem
            )));
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn dataset_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{stem}.pgm")),
        dir.join(format!("{stem}.json")),
    )
}
