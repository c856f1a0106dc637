//! Synthetic table generator with exact ground truth.
//!
//! Each sample is a grayscale page containing one table plus, per rendered
//! word, its bounding box and the identifiers of the cell, rows, and columns
//! it belongs to. Ground-truth adjacency matrices are always derived from
//! those identifiers on demand, never stored, so they cannot drift from the
//! logical structure.
//!
//! Four categories of increasing difficulty:
//!
//! 1. full ruling lines, no merged cells
//! 2. randomly chosen border style, no merged cells
//! 3. merged cells (row or column spans)
//! 4. any of the above warped by a random perspective transform
//!
//! Category 4 warps pixels and bounding boxes only; cell, row, and column
//! identifiers describe the logical grid and are invariant under the warp.

pub mod font;
pub mod homography;
pub mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AdjacencyMatrix, AdjacencyTriple};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),

    #[error("layout overflow: {0}")]
    Overflow(String),

    #[error("degenerate perspective quad")]
    DegenerateQuad,

    #[error("invalid sample: {0}")]
    Invalid(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

// -- image ----------------------------------------------------------------

/// Row-major 8-bit grayscale image; 255 is paper, 0 is ink.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![255; h * w],
        }
    }

    pub fn from_raw(h: usize, w: usize, data: Vec<u8>) -> Result<Self, SynthError> {
        if data.len() != h * w {
            return Err(SynthError::Format(format!(
                "image data is {} bytes, expected {}x{}",
                data.len(),
                h,
                w
            )));
        }
        Ok(Self { h, w, data })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        assert!(x < self.w && y < self.h, "pixel ({x}, {y}) out of bounds");
        self.data[y * self.w + x]
    }

    /// Out-of-bounds writes are clipped, which keeps drawing code simple.
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        if x < self.w && y < self.h {
            self.data[y * self.w + x] = value;
        }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    fn hline(&mut self, y: usize, x0: usize, x1: usize) {
        for x in x0..=x1 {
            self.set(x, y, 0);
        }
    }

    fn vline(&mut self, x: usize, y0: usize, y1: usize) {
        for y in y0..=y1 {
            self.set(x, y, 0);
        }
    }
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({}x{})", self.h, self.w)
    }
}

// -- category -------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    FullGrid,
    PartialBorders,
    MergedCells,
    Distorted,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::FullGrid,
        Category::PartialBorders,
        Category::MergedCells,
        Category::Distorted,
    ];

    pub fn id(self) -> u8 {
        match self {
            Category::FullGrid => 1,
            Category::PartialBorders => 2,
            Category::MergedCells => 3,
            Category::Distorted => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Category::FullGrid),
            2 => Some(Category::PartialBorders),
            3 => Some(Category::MergedCells),
            4 => Some(Category::Distorted),
            _ => None,
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.id())
    }
}

// -- config ---------------------------------------------------------------

/// Weight-range bounds for row/column size jitter; the ratio between the
/// largest and smallest track is capped so worst-case fit is checkable.
const WEIGHT_LO: f64 = 1.0;
const WEIGHT_HI: f64 = 1.6;

/// Border styles sampled for categories 2 and 3, in the order matched by
/// [`GenConfig::border_weights`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BorderStyle {
    All,
    Outer,
    HorizontalOnly,
    VerticalOnly,
    None,
}

const BORDER_STYLES: [BorderStyle; 5] = [
    BorderStyle::All,
    BorderStyle::Outer,
    BorderStyle::HorizontalOnly,
    BorderStyle::VerticalOnly,
    BorderStyle::None,
];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub image_h: usize,
    pub image_w: usize,
    /// Blank frame around the table, in pixels.
    pub margin: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    pub min_cols: usize,
    pub max_cols: usize,
    pub min_words_per_cell: usize,
    pub max_words_per_cell: usize,
    pub min_word_len: usize,
    pub max_word_len: usize,
    /// Integer glyph magnification; 1 renders 5x7 characters.
    pub font_scale: usize,
    /// Per-anchor probability of starting a merged cell (category 3).
    pub merge_prob: f64,
    /// Fraction of words rendered as digit strings instead of letters.
    pub digit_ratio: f64,
    /// Weights for border styles all/outer/horizontal/vertical/none.
    pub border_weights: [f64; 5],
    /// Maximum corner displacement for category 4, as a fraction of the
    /// smaller image dimension. Capped at 0.2.
    pub perspective_jitter: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            image_h: 256,
            image_w: 256,
            margin: 6,
            min_rows: 2,
            max_rows: 6,
            min_cols: 2,
            max_cols: 6,
            min_words_per_cell: 1,
            max_words_per_cell: 3,
            min_word_len: 2,
            max_word_len: 7,
            font_scale: 2,
            merge_prob: 0.2,
            digit_ratio: 0.3,
            border_weights: [0.35, 0.2, 0.2, 0.2, 0.05],
            perspective_jitter: 0.12,
        }
    }
}

impl GenConfig {
    /// Smaller tables on 128x128 pages; same structure, much cheaper to
    /// train against on a single core.
    pub fn desk() -> Self {
        Self {
            image_h: 128,
            image_w: 128,
            margin: 4,
            min_rows: 3,
            max_rows: 4,
            min_cols: 3,
            max_cols: 4,
            min_words_per_cell: 1,
            max_words_per_cell: 2,
            min_word_len: 2,
            max_word_len: 5,
            font_scale: 1,
            merge_prob: 0.25,
            digit_ratio: 0.3,
            border_weights: [0.35, 0.2, 0.2, 0.2, 0.05],
            perspective_jitter: 0.08,
        }
    }

    fn min_cell_h(&self) -> usize {
        // Glyph height plus vertical padding plus border rows.
        font::GLYPH_H * self.font_scale + 4 * self.font_scale + 2
    }

    fn min_cell_w(&self) -> usize {
        // One character plus horizontal padding plus border columns.
        font::GLYPH_W * self.font_scale + 4 * self.font_scale + 2
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::Config(msg));
        if self.image_h < 32 || self.image_w < 32 {
            return fail(format!("image {}x{} too small", self.image_h, self.image_w));
        }
        if self.margin == 0 || 2 * self.margin >= self.image_h.min(self.image_w) {
            return fail(format!("margin {} does not fit the image", self.margin));
        }
        if self.min_rows < 2 || self.min_cols < 2 {
            return fail("need at least two rows and two columns".into());
        }
        if self.max_rows < self.min_rows || self.max_cols < self.min_cols {
            return fail("row/col ranges are inverted".into());
        }
        if self.min_words_per_cell < 1 || self.max_words_per_cell < self.min_words_per_cell {
            return fail("bad words-per-cell range".into());
        }
        if self.min_word_len < 1 || self.max_word_len < self.min_word_len {
            return fail("bad word-length range".into());
        }
        if self.max_word_len > 20 {
            return fail("word length above 20 is not supported".into());
        }
        if self.font_scale == 0 || self.font_scale > 4 {
            return fail(format!("font scale {} out of range", self.font_scale));
        }
        for (name, p) in [("merge_prob", self.merge_prob), ("digit_ratio", self.digit_ratio)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} {p} outside [0, 1]"));
            }
        }
        if self.border_weights.iter().any(|&w| w < 0.0 || !w.is_finite())
            || self.border_weights.iter().sum::<f64>() <= 0.0
        {
            return fail("border weights must be non-negative with positive sum".into());
        }
        if !(0.0..=0.2).contains(&self.perspective_jitter) {
            return fail(format!(
                "perspective jitter {} outside [0, 0.2]",
                self.perspective_jitter
            ));
        }
        // Worst-case track size: one minimum-weight track against maximum
        // weights everywhere else, minus one pixel of rounding slack.
        let fit = |span: usize, n: usize, need: usize, what: &str| {
            let worst =
                span as f64 * WEIGHT_LO / (WEIGHT_LO + (n - 1) as f64 * WEIGHT_HI) - 1.0;
            if worst < need as f64 {
                return fail(format!(
                    "{what}: {n} tracks in {span}px leave {worst:.1}px, need {need}px"
                ));
            }
            Ok(())
        };
        fit(
            self.image_h - 2 * self.margin,
            self.max_rows,
            self.min_cell_h(),
            "rows",
        )?;
        fit(
            self.image_w - 2 * self.margin,
            self.max_cols,
            self.min_cell_w(),
            "cols",
        )?;
        Ok(())
    }
}

// -- sample ---------------------------------------------------------------

/// One rendered word. `row_ids` and `col_ids` are the grid tracks spanned
/// by the word's parent cell; merged cells span several.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    /// `[x0, y0, x1, y1]`, half-open, in pixels.
    pub bbox: [u32; 4],
    pub text_len: u32,
    pub cell_id: u32,
    pub row_ids: Vec<u32>,
    pub col_ids: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub category: Category,
    pub seed: u64,
    pub image: GrayImage,
    pub vertices: Vec<Vertex>,
}

impl Sample {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Derives the three ground-truth adjacency matrices. Two words are
    /// linked when they share a cell id, any row id, or any column id; the
    /// diagonal is always set.
    pub fn adjacency(&self) -> AdjacencyTriple {
        let v = self.vertices.len();
        let mut cells = AdjacencyMatrix::identity(v);
        let mut rows = AdjacencyMatrix::identity(v);
        let mut cols = AdjacencyMatrix::identity(v);
        for i in 0..v {
            for j in i + 1..v {
                let (a, b) = (&self.vertices[i], &self.vertices[j]);
                if a.cell_id == b.cell_id {
                    cells.set_edge(i, j, true);
                }
                if sorted_intersects(&a.row_ids, &b.row_ids) {
                    rows.set_edge(i, j, true);
                }
                if sorted_intersects(&a.col_ids, &b.col_ids) {
                    cols.set_edge(i, j, true);
                }
            }
        }
        AdjacencyTriple { cells, rows, cols }
    }

    /// Structural checks every well-formed sample must satisfy. Categories
    /// 1 and 2 additionally forbid merged cells.
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::Invalid(msg));
        let (h, w) = (self.image.height() as u32, self.image.width() as u32);
        if self.image.height() == 0 || self.image.width() == 0 {
            return fail("empty image".into());
        }
        if self.vertices.is_empty() {
            return fail("sample has no words".into());
        }
        let mut seen_cells = std::collections::BTreeSet::new();
        for (i, vx) in self.vertices.iter().enumerate() {
            let [x0, y0, x1, y1] = vx.bbox;
            if x0 >= x1 || y0 >= y1 || x1 > w || y1 > h {
                return fail(format!("vertex {i}: bbox {:?} out of bounds", vx.bbox));
            }
            if vx.text_len == 0 {
                return fail(format!("vertex {i}: empty text"));
            }
            for (name, ids) in [("row_ids", &vx.row_ids), ("col_ids", &vx.col_ids)] {
                if ids.is_empty() {
                    return fail(format!("vertex {i}: {name} empty"));
                }
                if !ids.windows(2).all(|p| p[0] < p[1]) {
                    return fail(format!("vertex {i}: {name} not strictly ascending"));
                }
            }
            let mut ink = false;
            'scan: for y in y0..y1 {
                for x in x0..x1 {
                    if self.image.get(x as usize, y as usize) < 250 {
                        ink = true;
                        break 'scan;
                    }
                }
            }
            if !ink {
                return fail(format!("vertex {i}: bbox contains no ink"));
            }
            seen_cells.insert(vx.cell_id);
        }
        // Cell ids must be contiguous from zero.
        let max_cell = *seen_cells.iter().next_back().expect("non-empty");
        if seen_cells.len() != (max_cell + 1) as usize {
            return fail("cell ids are not contiguous from zero".into());
        }
        // Words of one cell must agree on the cell's tracks.
        for i in 0..self.vertices.len() {
            for j in i + 1..self.vertices.len() {
                let (a, b) = (&self.vertices[i], &self.vertices[j]);
                if a.cell_id == b.cell_id && (a.row_ids != b.row_ids || a.col_ids != b.col_ids) {
                    return fail(format!("vertices {i} and {j} share a cell but not its tracks"));
                }
            }
        }
        if matches!(self.category, Category::FullGrid | Category::PartialBorders) {
            for (i, vx) in self.vertices.iter().enumerate() {
                if vx.row_ids.len() != 1 || vx.col_ids.len() != 1 {
                    return fail(format!(
                        "vertex {i}: merged cell in category {}",
                        self.category
                    ));
                }
            }
        }
        let triple = self.adjacency();
        let violations = triple.validate();
        if !violations.is_empty() {
            return fail(format!("derived adjacency invalid: {}", violations[0]));
        }
        Ok(())
    }

    /// True when any cell spans more than one row or column.
    pub fn has_merges(&self) -> bool {
        self.vertices
            .iter()
            .any(|v| v.row_ids.len() > 1 || v.col_ids.len() > 1)
    }
}

fn sorted_intersects(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

// -- generation -----------------------------------------------------------

struct Layout {
    rows: usize,
    cols: usize,
    row_edges: Vec<usize>,
    col_edges: Vec<usize>,
    /// Grid cell (row-major) to cell id.
    cell_of: Vec<usize>,
    /// Per cell id: spanned tracks `[r0, r1) x [c0, c1)`.
    regions: Vec<Region>,
}

#[derive(Clone, Copy, Debug)]
struct Region {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
}

pub fn generate_sample(
    cfg: &GenConfig,
    category: Category,
    sample_seed: u64,
) -> Result<Sample, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut sample = match category {
        Category::Distorted => {
            let base = match rng.random_range(0..3u8) {
                0 => Category::FullGrid,
                1 => Category::PartialBorders,
                _ => Category::MergedCells,
            };
            let flat = generate_flat(cfg, base, &mut rng)?;
            distort(cfg, flat, &mut rng)?
        }
        flat => generate_flat(cfg, flat, &mut rng)?,
    };
    sample.category = category;
    sample.seed = sample_seed;
    Ok(sample)
}

fn generate_flat(
    cfg: &GenConfig,
    category: Category,
    rng: &mut ChaCha8Rng,
) -> Result<Sample, SynthError> {
    let rows = rng.random_range(cfg.min_rows..=cfg.max_rows);
    let cols = rng.random_range(cfg.min_cols..=cfg.max_cols);
    let row_edges = partition(
        cfg.margin,
        cfg.image_h - cfg.margin,
        rows,
        cfg.min_cell_h(),
        rng,
    )?;
    let col_edges = partition(
        cfg.margin,
        cfg.image_w - cfg.margin,
        cols,
        cfg.min_cell_w(),
        rng,
    )?;
    let (cell_of, regions) = if category == Category::MergedCells {
        assign_cells_with_merges(rows, cols, cfg.merge_prob, rng)
    } else {
        assign_single_cells(rows, cols)
    };
    let layout = Layout {
        rows,
        cols,
        row_edges,
        col_edges,
        cell_of,
        regions,
    };

    let style = match category {
        Category::FullGrid => BorderStyle::All,
        _ => sample_border_style(&cfg.border_weights, rng),
    };
    let mut image = GrayImage::new(cfg.image_h, cfg.image_w);
    draw_borders(&mut image, &layout, style);

    let vertices = fill_words(cfg, &layout, &mut image, rng)?;
    Ok(Sample {
        category,
        seed: 0,
        image,
        vertices,
    })
}

/// Splits `[lo, hi)` into `n` tracks with mildly uneven random sizes.
fn partition(
    lo: usize,
    hi: usize,
    n: usize,
    min_px: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, SynthError> {
    let total = (hi - lo) as f64;
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(WEIGHT_LO..WEIGHT_HI)).collect();
    let sum: f64 = weights.iter().sum();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(lo);
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        let e = if i + 1 == n {
            hi
        } else {
            lo + (total * acc / sum).round() as usize
        };
        let prev = *edges.last().expect("non-empty");
        if e < prev + min_px {
            return Err(SynthError::Overflow(format!(
                "track {} is {}px, below the {}px minimum",
                i,
                e.saturating_sub(prev),
                min_px
            )));
        }
        edges.push(e);
    }
    Ok(edges)
}

fn assign_single_cells(rows: usize, cols: usize) -> (Vec<usize>, Vec<Region>) {
    let mut cell_of = vec![0usize; rows * cols];
    let mut regions = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            cell_of[r * cols + c] = regions.len();
            regions.push(Region {
                r0: r,
                r1: r + 1,
                c0: c,
                c1: c + 1,
            });
        }
    }
    (cell_of, regions)
}

/// Row-major scan assigning row or column spans at unoccupied anchors.
/// Guaranteed to yield at least one merged cell: if the random pass fails
/// (possible at low `merge_prob`), it redraws with fresh randomness.
fn assign_cells_with_merges(
    rows: usize,
    cols: usize,
    merge_prob: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<Region>) {
    for _ in 0..64 {
        let (cell_of, regions) = merge_pass(rows, cols, merge_prob, rng);
        if regions.iter().any(|r| r.r1 - r.r0 > 1 || r.c1 - r.c0 > 1) {
            return (cell_of, regions);
        }
    }
    // Statistically unreachable fallback: force one horizontal merge.
    let (mut cell_of, mut regions) = assign_single_cells(rows, cols);
    let b = cell_of[1];
    cell_of[1] = cell_of[0];
    regions[0].c1 = 2;
    regions.remove(b);
    for slot in &mut cell_of {
        if *slot > b {
            *slot -= 1;
        }
    }
    (cell_of, regions)
}

fn merge_pass(
    rows: usize,
    cols: usize,
    merge_prob: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<Region>) {
    const FREE: usize = usize::MAX;
    let mut cell_of = vec![FREE; rows * cols];
    let mut regions: Vec<Region> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if cell_of[r * cols + c] != FREE {
                continue;
            }
            let mut region = Region {
                r0: r,
                r1: r + 1,
                c0: c,
                c1: c + 1,
            };
            if rng.random_bool(merge_prob) {
                if rng.random_bool(0.5) {
                    // Column span, limited by already-claimed cells to the
                    // right; rows below are always still free.
                    let mut free = 1;
                    while c + free < cols && cell_of[r * cols + c + free] == FREE && free < 3 {
                        free += 1;
                    }
                    region.c1 = c + rng.random_range(2..=3).min(free).max(1);
                } else {
                    let span = rng.random_range(2..=3).min(rows - r);
                    region.r1 = r + span.max(1);
                }
            }
            let id = regions.len();
            for rr in region.r0..region.r1 {
                for cc in region.c0..region.c1 {
                    cell_of[rr * cols + cc] = id;
                }
            }
            regions.push(region);
        }
    }
    (cell_of, regions)
}

fn sample_border_style(weights: &[f64; 5], rng: &mut ChaCha8Rng) -> BorderStyle {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (style, &w) in BORDER_STYLES.iter().zip(weights) {
        if u < w {
            return *style;
        }
        u -= w;
    }
    BorderStyle::None
}

fn draw_borders(img: &mut GrayImage, layout: &Layout, style: BorderStyle) {
    let (re, ce) = (&layout.row_edges, &layout.col_edges);
    let (top, bottom) = (re[0], re[layout.rows]);
    let (left, right) = (ce[0], ce[layout.cols]);
    let outer = |img: &mut GrayImage| {
        img.hline(top, left, right);
        img.hline(bottom, left, right);
        img.vline(left, top, bottom);
        img.vline(right, top, bottom);
    };
    match style {
        BorderStyle::None => {}
        BorderStyle::Outer => outer(img),
        BorderStyle::All => {
            outer(img);
            for r in 0..layout.rows {
                for c in 1..layout.cols {
                    if layout.cell_of[r * layout.cols + c - 1]
                        != layout.cell_of[r * layout.cols + c]
                    {
                        img.vline(ce[c], re[r], re[r + 1]);
                    }
                }
            }
            for c in 0..layout.cols {
                for r in 1..layout.rows {
                    if layout.cell_of[(r - 1) * layout.cols + c]
                        != layout.cell_of[r * layout.cols + c]
                    {
                        img.hline(re[r], ce[c], ce[c + 1]);
                    }
                }
            }
        }
        BorderStyle::HorizontalOnly => {
            img.hline(top, left, right);
            img.hline(bottom, left, right);
            for c in 0..layout.cols {
                for r in 1..layout.rows {
                    if layout.cell_of[(r - 1) * layout.cols + c]
                        != layout.cell_of[r * layout.cols + c]
                    {
                        img.hline(re[r], ce[c], ce[c + 1]);
                    }
                }
            }
        }
        BorderStyle::VerticalOnly => {
            img.vline(left, top, bottom);
            img.vline(right, top, bottom);
            for r in 0..layout.rows {
                for c in 1..layout.cols {
                    if layout.cell_of[r * layout.cols + c - 1]
                        != layout.cell_of[r * layout.cols + c]
                    {
                        img.vline(ce[c], re[r], re[r + 1]);
                    }
                }
            }
        }
    }
}

fn fill_words(
    cfg: &GenConfig,
    layout: &Layout,
    img: &mut GrayImage,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vertex>, SynthError> {
    let scale = cfg.font_scale;
    let pad = 2 * scale;
    let glyph_h = font::word_height(scale);
    let mut vertices = Vec::new();
    for (cell_id, region) in layout.regions.iter().enumerate() {
        let x_lo = layout.col_edges[region.c0] + 1 + pad;
        let x_hi = layout.col_edges[region.c1].saturating_sub(1 + pad);
        let y_lo = layout.row_edges[region.r0] + 1 + pad;
        let y_hi = layout.row_edges[region.r1].saturating_sub(1 + pad);
        if x_hi <= x_lo || y_hi < y_lo + glyph_h {
            return Err(SynthError::Overflow(format!(
                "cell {cell_id} has no room for text"
            )));
        }
        let y = y_lo + (y_hi - y_lo - glyph_h) / 2;
        let n_words = rng.random_range(cfg.min_words_per_cell..=cfg.max_words_per_cell);
        let mut x = x_lo + rng.random_range(0..=(2 * scale));
        for k in 0..n_words {
            let fit = (x_hi.saturating_sub(x) / scale + 1) / font::ADVANCE;
            if fit == 0 {
                if k == 0 {
                    return Err(SynthError::Overflow(format!(
                        "cell {cell_id} cannot fit a single character"
                    )));
                }
                break;
            }
            let len = rng.random_range(cfg.min_word_len..=cfg.max_word_len).min(fit);
            let charset: &[u8] = if rng.random_bool(cfg.digit_ratio) {
                font::DIGITS
            } else {
                font::LETTERS
            };
            let word: Vec<u8> = (0..len)
                .map(|_| charset[rng.random_range(0..charset.len())])
                .collect();
            font::draw_word(img, x, y, scale, &word);
            let w_px = font::word_width(len, scale);
            vertices.push(Vertex {
                bbox: [x as u32, y as u32, (x + w_px) as u32, (y + glyph_h) as u32],
                text_len: len as u32,
                cell_id: cell_id as u32,
                row_ids: (region.r0 as u32..region.r1 as u32).collect(),
                col_ids: (region.c0 as u32..region.c1 as u32).collect(),
            });
            x += w_px + font::ADVANCE * scale + rng.random_range(0..=2) * scale;
        }
    }
    Ok(vertices)
}

/// Warps the rendered page by a random perspective transform. Bounding
/// boxes become the axis-aligned hulls of their warped corners; the logical
/// structure is untouched.
fn distort(cfg: &GenConfig, flat: Sample, rng: &mut ChaCha8Rng) -> Result<Sample, SynthError> {
    let (h, w) = (cfg.image_h as f64, cfg.image_w as f64);
    let j = cfg.perspective_jitter * h.min(w);
    let mut inward = |sx: f64, sy: f64, x: f64, y: f64| {
        [
            x + sx * rng.random_range(0.0..=j),
            y + sy * rng.random_range(0.0..=j),
        ]
    };
    let src = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
    let dst = [
        inward(1.0, 1.0, 0.0, 0.0),
        inward(-1.0, 1.0, w, 0.0),
        inward(-1.0, -1.0, w, h),
        inward(1.0, -1.0, 0.0, h),
    ];
    let map = homography::Homography::from_correspondences(&src, &dst)?;
    let image = homography::warp_image(&flat.image, &map)?;
    let mut vertices = flat.vertices;
    for vx in &mut vertices {
        let [x0, y0, x1, y1] = vx.bbox.map(f64::from);
        let corners = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]].map(|p| map.apply(p));
        let (mut lo_x, mut lo_y) = (f64::INFINITY, f64::INFINITY);
        let (mut hi_x, mut hi_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for [cx, cy] in corners {
            lo_x = lo_x.min(cx);
            lo_y = lo_y.min(cy);
            hi_x = hi_x.max(cx);
            hi_y = hi_y.max(cy);
        }
        // Snap before floor/ceil so exact boundaries do not flicker with
        // floating-point noise.
        let snap = |v: f64| (v * 1e6).round() / 1e6;
        let nx0 = snap(lo_x).floor().max(0.0) as u32;
        let ny0 = snap(lo_y).floor().max(0.0) as u32;
        let nx1 = (snap(hi_x).ceil() as u32).min(cfg.image_w as u32);
        let ny1 = (snap(hi_y).ceil() as u32).min(cfg.image_h as u32);
        if nx0 >= nx1 || ny0 >= ny1 {
            return Err(SynthError::Overflow(format!(
                "warp collapsed bbox {:?}",
                vx.bbox
            )));
        }
        vx.bbox = [nx0, ny0, nx1, ny1];
    }
    Ok(Sample {
        category: Category::Distorted,
        seed: flat.seed,
        image,
        vertices,
    })
}

/// Category for sample `index` when generating a mixed dataset.
pub fn mixed_category(index: usize) -> Category {
    Category::ALL[index % 4]
}

/// The seed for sample `index` of a dataset generated from `master`.
pub fn sample_seed(master: u64, index: usize) -> u64 {
    seed::derive(master, index as u64)
}
