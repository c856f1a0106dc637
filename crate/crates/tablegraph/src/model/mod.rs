//! The pair-classification model.
//!
//! Forward pass over one table:
//!
//! 1. a small CNN turns the page into a feature map,
//! 2. each word reads the map at its scaled bbox center and concatenates
//!    that with its word-length and position features,
//! 3. an interaction network (plain MLP, edge convolutions, or learned
//!    gravity weighting) mixes information between words,
//! 4. three independent heads score word pairs for shared cell, shared
//!    row, and shared column.
//!
//! The same forward code serves training (sampled pairs) and inference
//! (all pairs); only the pair set differs.

pub mod interact;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{DType, Element, NnError, NodeId, ParamStore, Tape, Tensor};
use crate::sampler::HeadPairs;
use crate::synth::Sample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Fcnn,
    DgcnnStar,
    GravnetStar,
}

impl std::str::FromStr for InteractionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fcnn" => Ok(InteractionKind::Fcnn),
            "dgcnn_star" => Ok(InteractionKind::DgcnnStar),
            "gravnet_star" => Ok(InteractionKind::GravnetStar),
            _ => Err(format!(
                "interaction must be fcnn, dgcnn_star, or gravnet_star, got {s:?}"
            )),
        }
    }
}

impl std::fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            InteractionKind::Fcnn => "fcnn",
            InteractionKind::DgcnnStar => "dgcnn_star",
            InteractionKind::GravnetStar => "gravnet_star",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub dtype: DType,
    /// Output channels per conv layer; the last entry is the per-pixel
    /// feature width words gather from.
    pub conv_widths: Vec<usize>,
    /// Stride per conv layer (1 or 2), same length as `conv_widths`.
    pub conv_strides: Vec<usize>,
    pub kernel: usize,
    pub interaction: InteractionKind,
    /// Number of interaction blocks.
    pub blocks: usize,
    /// Feature width inside and out of each interaction block.
    pub width: usize,
    /// Dimensions of the learned coordinate space (gravnet_star only).
    pub spatial: usize,
    /// Neighbors per vertex (dgcnn_star and gravnet_star).
    pub k: usize,
    /// Hidden widths of each classification head.
    pub head_hidden: Vec<usize>,
    /// Word lengths are divided by this before entering the network.
    pub max_word_len: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dtype: DType::F32,
            conv_widths: vec![16, 16, 32, 16],
            conv_strides: vec![1, 2, 1, 2],
            kernel: 3,
            interaction: InteractionKind::DgcnnStar,
            blocks: 2,
            width: 32,
            spatial: 3,
            k: 8,
            head_hidden: vec![64, 32],
            max_word_len: 20,
        }
    }
}

impl ModelConfig {
    /// A configuration small enough for exhaustive finite-difference
    /// checking of the complete model.
    pub fn tiny(interaction: InteractionKind) -> Self {
        Self {
            dtype: DType::F64,
            conv_widths: vec![3, 4],
            conv_strides: vec![1, 2],
            kernel: 3,
            interaction,
            blocks: 2,
            width: 6,
            spatial: 2,
            k: 2,
            head_hidden: vec![6, 4],
            max_word_len: 20,
        }
    }

    /// Sized for the small-image generator preset: light enough to train
    /// on one CPU core in minutes, big enough to solve desk-scale tables.
    pub fn desk(interaction: InteractionKind) -> Self {
        Self {
            dtype: DType::F32,
            conv_widths: vec![12, 24],
            conv_strides: vec![2, 2],
            kernel: 3,
            interaction,
            blocks: 2,
            width: 32,
            spatial: 3,
            k: 8,
            head_hidden: vec![48, 24],
            max_word_len: 20,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let fail = |detail: String| {
            Err(NnError::ShapeMismatch {
                op: "model_config",
                detail,
            })
        };
        if self.conv_widths.is_empty() || self.conv_widths.len() != self.conv_strides.len() {
            return fail("conv_widths and conv_strides must be non-empty and equal length".into());
        }
        if self.conv_widths.iter().any(|&w| w == 0) {
            return fail("conv widths must be positive".into());
        }
        if self.conv_strides.iter().any(|&s| !(1..=2).contains(&s)) {
            return fail("conv strides must be 1 or 2".into());
        }
        if self.kernel % 2 == 0 || self.kernel == 0 {
            return fail(format!("kernel {} must be odd", self.kernel));
        }
        if self.blocks == 0 || self.width == 0 || self.k == 0 {
            return fail("blocks, width, and k must be positive".into());
        }
        if self.interaction == InteractionKind::GravnetStar && self.spatial == 0 {
            return fail("spatial must be positive for gravnet_star".into());
        }
        if self.head_hidden.is_empty() || self.head_hidden.iter().any(|&w| w == 0) {
            return fail("head_hidden must be non-empty and positive".into());
        }
        if self.max_word_len == 0 {
            return fail("max_word_len must be positive".into());
        }
        Ok(())
    }

    /// Width of the per-word feature entering the interaction network:
    /// gathered image features plus word length plus four box coordinates.
    pub fn vertex_feature_width(&self) -> usize {
        self.conv_widths.last().copied().unwrap_or(0) + 5
    }
}

pub const HEAD_NAMES: [&str; 3] = ["cells", "rows", "cols"];

// -- initialization -------------------------------------------------------

/// He-uniform init, `U(-a, a)` with `a = sqrt(6 / fan_in)`.
fn init_dense<E: Element>(
    store: &mut ParamStore<E>,
    rng: &mut ChaCha8Rng,
    name: &str,
    fan_in: usize,
    fan_out: usize,
) {
    let a = (6.0 / fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| E::from_f64(rng.random_range(-a..a)))
        .collect();
    store.insert(
        format!("{name}.w"),
        Tensor::from_vec(&[fan_in, fan_out], data).expect("sized above"),
    );
    store.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
}

fn init_conv<E: Element>(
    store: &mut ParamStore<E>,
    rng: &mut ChaCha8Rng,
    name: &str,
    kernel: usize,
    cin: usize,
    cout: usize,
) {
    let fan_in = kernel * kernel * cin;
    let a = (6.0 / fan_in as f64).sqrt();
    let data = (0..fan_in * cout)
        .map(|_| E::from_f64(rng.random_range(-a..a)))
        .collect();
    store.insert(
        format!("{name}.w"),
        Tensor::from_vec(&[kernel, kernel, cin, cout], data).expect("sized above"),
    );
    store.insert(format!("{name}.b"), Tensor::zeros(&[cout]));
}

/// Creates a freshly initialized parameter store. Parameter creation order
/// is fixed, so a given seed always produces the same weights.
pub fn init_params<E: Element>(cfg: &ModelConfig, seed: u64) -> Result<ParamStore<E>, NnError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let mut cin = 1;
    for (i, &cout) in cfg.conv_widths.iter().enumerate() {
        init_conv(&mut store, &mut rng, &format!("cnn.{i}"), cfg.kernel, cin, cout);
        cin = cout;
    }
    let f0 = cfg.vertex_feature_width();
    match cfg.interaction {
        InteractionKind::Fcnn => {
            let mut fin = f0;
            for b in 0..cfg.blocks {
                init_dense(&mut store, &mut rng, &format!("interact.b{b}"), fin, cfg.width);
                fin = cfg.width;
            }
        }
        InteractionKind::DgcnnStar => {
            let mut fin = f0;
            for b in 0..cfg.blocks {
                init_dense(
                    &mut store,
                    &mut rng,
                    &format!("interact.b{b}.mlp0"),
                    2 * fin,
                    cfg.width,
                );
                init_dense(
                    &mut store,
                    &mut rng,
                    &format!("interact.b{b}.mlp1"),
                    cfg.width,
                    cfg.width,
                );
                fin = cfg.width;
            }
        }
        InteractionKind::GravnetStar => {
            let mut fin = f0;
            for b in 0..cfg.blocks {
                init_dense(&mut store, &mut rng, &format!("interact.b{b}.s"), fin, cfg.spatial);
                init_dense(&mut store, &mut rng, &format!("interact.b{b}.flr"), fin, cfg.width);
                init_dense(
                    &mut store,
                    &mut rng,
                    &format!("interact.b{b}.out"),
                    fin + 2 * cfg.width,
                    cfg.width,
                );
                fin = cfg.width;
            }
        }
    }
    for head in HEAD_NAMES {
        let mut fin = 2 * cfg.width;
        for (i, &hidden) in cfg.head_hidden.iter().enumerate() {
            init_dense(&mut store, &mut rng, &format!("head.{head}.{i}"), fin, hidden);
            fin = hidden;
        }
        init_dense(&mut store, &mut rng, &format!("head.{head}.out"), fin, 2);
    }
    Ok(store)
}

// -- featurization --------------------------------------------------------

/// Network-ready view of one sample: normalized image plus per-word
/// features. Ink is 1, paper is 0.
pub struct Features<E: Element> {
    pub image: Tensor<E>,
    /// `[v, 1]` word length over `max_word_len`.
    pub word_len: Tensor<E>,
    /// `[v, 4]` bbox corners normalized by image size.
    pub pos: Tensor<E>,
    /// Doubled pixel center `(2cx, 2cy)` per word; kept integral so the
    /// feature-map index below is exact.
    centers2: Vec<(usize, usize)>,
    pub v: usize,
    image_h: usize,
    image_w: usize,
}

pub fn featurize<E: Element>(sample: &Sample, max_word_len: u32) -> Features<E> {
    let (h, w) = (sample.image.height(), sample.image.width());
    let image = Tensor::from_vec(
        &[h, w, 1],
        sample
            .image
            .pixels()
            .iter()
            .map(|&p| E::from_f64((255.0 - p as f64) / 255.0))
            .collect(),
    )
    .expect("pixel count matches");
    let v = sample.vertex_count();
    let mut word_len = Vec::with_capacity(v);
    let mut pos = Vec::with_capacity(4 * v);
    let mut centers2 = Vec::with_capacity(v);
    for vx in &sample.vertices {
        let [x0, y0, x1, y1] = vx.bbox;
        word_len.push(E::from_f64(
            f64::from(vx.text_len.min(max_word_len)) / f64::from(max_word_len),
        ));
        pos.push(E::from_f64(f64::from(x0) / w as f64));
        pos.push(E::from_f64(f64::from(y0) / h as f64));
        pos.push(E::from_f64(f64::from(x1) / w as f64));
        pos.push(E::from_f64(f64::from(y1) / h as f64));
        centers2.push(((x0 + x1) as usize, (y0 + y1) as usize));
    }
    Features {
        image,
        word_len: Tensor::from_vec(&[v, 1], word_len).expect("sized above"),
        pos: Tensor::from_vec(&[v, 4], pos).expect("sized above"),
        centers2,
        v,
        image_h: h,
        image_w: w,
    }
}

impl<E: Element> Features<E> {
    /// Row indices into the flattened feature map for each word center.
    /// `fh x fw` is the map size after all conv strides.
    fn map_indices(&self, fh: usize, fw: usize) -> Vec<usize> {
        self.centers2
            .iter()
            .map(|&(cx2, cy2)| {
                let ix = ((cx2 * fw) / (2 * self.image_w)).min(fw - 1);
                let iy = ((cy2 * fh) / (2 * self.image_h)).min(fh - 1);
                iy * fw + ix
            })
            .collect()
    }
}

// -- forward --------------------------------------------------------------

/// Pair logits for the three heads, each `[pairs, 2]`.
pub struct HeadLogits {
    pub cells: NodeId,
    pub rows: NodeId,
    pub cols: NodeId,
}

impl HeadLogits {
    pub fn by_name(&self, name: &str) -> NodeId {
        match name {
            "cells" => self.cells,
            "rows" => self.rows,
            "cols" => self.cols,
            _ => panic!("unknown head {name:?}"),
        }
    }
}

pub fn forward<E: Element>(
    cfg: &ModelConfig,
    store: &ParamStore<E>,
    tape: &mut Tape<E>,
    features: &Features<E>,
    pairs: &HeadPairs,
) -> Result<HeadLogits, NnError> {
    assert_eq!(pairs.v(), features.v, "pair sets and sample disagree on v");
    let mut x = tape.input(features.image.clone())?;
    let (mut fh, mut fw) = (features.image_h, features.image_w);
    for (i, (&cout, &stride)) in cfg.conv_widths.iter().zip(&cfg.conv_strides).enumerate() {
        let _ = cout;
        let w = store.tape_param(tape, &format!("cnn.{i}.w"))?;
        let b = store.tape_param(tape, &format!("cnn.{i}.b"))?;
        x = tape.conv2d(x, w, b, stride)?;
        x = tape.relu(x)?;
        fh = (fh - 1) / stride + 1;
        fw = (fw - 1) / stride + 1;
    }
    let q = *cfg.conv_widths.last().expect("validated non-empty");
    let flat = tape.reshape(x, &[fh * fw, q])?;
    let f_im = tape.gather_rows(flat, &features.map_indices(fh, fw))?;
    let f_o = tape.input(features.word_len.clone())?;
    let f_p = tape.input(features.pos.clone())?;
    let f_in = tape.concat_cols(&[f_im, f_o, f_p])?;

    let f_int = interact::apply(cfg, store, tape, f_in, features.v)?;

    let mut logits = Vec::with_capacity(3);
    for head in HEAD_NAMES {
        let p = pairs.by_name(head);
        assert_eq!(p.v(), features.v, "pair set for {head} disagrees on v");
        let left = tape.gather_rows(f_int, &p.left_index_list())?;
        let right = tape.gather_rows(f_int, p.right_index_list())?;
        let mut h = tape.concat_cols(&[left, right])?;
        for i in 0..cfg.head_hidden.len() {
            let w = store.tape_param(tape, &format!("head.{head}.{i}.w"))?;
            let b = store.tape_param(tape, &format!("head.{head}.{i}.b"))?;
            h = tape.dense(h, w, b)?;
            h = tape.relu(h)?;
        }
        let w = store.tape_param(tape, &format!("head.{head}.out.w"))?;
        let b = store.tape_param(tape, &format!("head.{head}.out.b"))?;
        logits.push(tape.dense(h, w, b)?);
    }
    let cols = logits.pop().expect("three heads");
    let rows = logits.pop().expect("three heads");
    let cells = logits.pop().expect("three heads");
    Ok(HeadLogits { cells, rows, cols })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_sample, Category, GenConfig};

    fn desk_sample() -> Sample {
        generate_sample(&GenConfig::desk(), Category::FullGrid, 3).unwrap()
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let mut cfg = ModelConfig::default();
        cfg.conv_strides = vec![1, 3, 1, 2];
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::default();
        cfg.kernel = 4;
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::default();
        cfg.conv_widths.pop();
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::default();
        cfg.head_hidden = vec![];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = ModelConfig::default();
        let a = init_params::<f64>(&cfg, 1).unwrap();
        let b = init_params::<f64>(&cfg, 1).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        for name in a.names() {
            assert_eq!(a.value(name).unwrap().data(), b.value(name).unwrap().data());
        }
        let c = init_params::<f64>(&cfg, 2).unwrap();
        assert_ne!(
            a.value("cnn.0.w").unwrap().data(),
            c.value("cnn.0.w").unwrap().data()
        );
    }

    #[test]
    fn presets_validate_and_initialize() {
        for kind in [
            InteractionKind::Fcnn,
            InteractionKind::DgcnnStar,
            InteractionKind::GravnetStar,
        ] {
            for cfg in [ModelConfig::tiny(kind), ModelConfig::desk(kind)] {
                cfg.validate().unwrap();
                let store = init_params::<f32>(&cfg, 0).unwrap();
                assert!(store.param_count() > 0);
            }
        }
    }

    #[test]
    fn default_param_count_is_desk_sized() {
        let n = init_params::<f64>(&ModelConfig::default(), 0)
            .unwrap()
            .param_count();
        assert!(n < 150_000, "default model has {n} parameters");
        assert!(n > 10_000, "default model suspiciously small: {n}");
    }

    #[test]
    fn forward_shapes_for_every_interaction() {
        let sample = desk_sample();
        let v = sample.vertex_count();
        for kind in [
            InteractionKind::Fcnn,
            InteractionKind::DgcnnStar,
            InteractionKind::GravnetStar,
        ] {
            let mut cfg = ModelConfig::tiny(kind);
            cfg.max_word_len = 20;
            let store = init_params::<f64>(&cfg, 7).unwrap();
            let features = featurize::<f64>(&sample, cfg.max_word_len);
            let pairs = HeadPairs::full(v);
            let mut tape = Tape::new();
            let logits = forward(&cfg, &store, &mut tape, &features, &pairs).unwrap();
            for id in [logits.cells, logits.rows, logits.cols] {
                assert_eq!(tape.value(id).shape(), &[v * v, 2], "kind {kind}");
            }
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let sample = desk_sample();
        let cfg = ModelConfig::tiny(InteractionKind::GravnetStar);
        let store = init_params::<f64>(&cfg, 11).unwrap();
        let features = featurize::<f64>(&sample, cfg.max_word_len);
        let pairs = HeadPairs::full(sample.vertex_count());
        let run = || {
            let mut tape = Tape::new();
            let l = forward(&cfg, &store, &mut tape, &features, &pairs).unwrap();
            tape.value(l.rows).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn featurize_maps_ink_to_one() {
        let sample = desk_sample();
        let f = featurize::<f64>(&sample, 20);
        let data = f.image.data();
        assert!(data.iter().any(|&x| x == 1.0), "no full ink pixel");
        assert!(data.iter().any(|&x| x == 0.0), "no blank pixel");
        assert!(data.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert_eq!(f.pos.shape(), &[sample.vertex_count(), 4]);
    }

    #[test]
    fn map_indices_land_in_bounds_and_near_centers() {
        let sample = desk_sample();
        let f = featurize::<f64>(&sample, 20);
        let idx = f.map_indices(32, 32);
        assert_eq!(idx.len(), sample.vertex_count());
        for (&i, vx) in idx.iter().zip(&sample.vertices) {
            assert!(i < 32 * 32);
            let (ix, iy) = (i % 32, i / 32);
            // A 128 -> 32 map scales by 4.
            let cx = (vx.bbox[0] + vx.bbox[2]) / 2;
            let cy = (vx.bbox[1] + vx.bbox[3]) / 2;
            assert_eq!(ix as u32, cx / 4, "x index for bbox {:?}", vx.bbox);
            assert_eq!(iy as u32, cy / 4);
        }
    }
}
