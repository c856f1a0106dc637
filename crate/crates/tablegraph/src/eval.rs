//! Inference, reconstruction, and scoring.
//!
//! The pipeline per sample: score all pairs, decode three adjacency
//! matrices, reconstruct structure (connected components for cells,
//! maximal cliques for rows and columns), then compare reconstructed
//! cliques against the ground truth by exact vertex-set equality.
//!
//! A predicted adjacency can be degenerate enough that clique enumeration
//! would blow up; such samples are flagged and scored as a total miss
//! (tpr 0, fpr 100) instead of aborting the run.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{
    connected_components, maximal_cliques, AdjacencyMatrix, AdjacencyTriple, CliqueKind,
    CliqueSet, GraphError,
};
use crate::model::{featurize, forward, ModelConfig};
use crate::nn::{Element, NnError, ParamStore, Tape, Tensor};
use crate::sampler::HeadPairs;
use crate::synth::{Category, Sample};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("evaluation needs at least one sample")]
    EmptyDataset,
}

/// Post-processed model output for one table. Unlike a ground-truth
/// triple, the three matrices need not be mutually consistent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictedTriple {
    pub cells: AdjacencyMatrix,
    pub rows: AdjacencyMatrix,
    pub cols: AdjacencyMatrix,
}

impl PredictedTriple {
    pub fn by_name(&self, name: &str) -> &AdjacencyMatrix {
        match name {
            "cells" => &self.cells,
            "rows" => &self.rows,
            "cols" => &self.cols,
            _ => panic!("unknown matrix {name:?}"),
        }
    }
}

/// How to resolve the two directed scores for an unordered pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetrize {
    /// Edge if either direction says edge. Favors recall.
    #[default]
    Or,
    /// Edge only if both directions agree.
    And,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of per-sample rates. Every table counts equally.
    #[default]
    Macro,
    /// Pooled clique counts across samples. Large tables count more.
    Micro,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub symmetrize: Symmetrize,
    pub averaging: Averaging,
}

/// Argmax over the two logits of every directed pair, symmetrized, with
/// the diagonal forced on.
pub fn decode_adjacency<E: Element>(
    logits: &Tensor<E>,
    v: usize,
    symmetrize: Symmetrize,
) -> AdjacencyMatrix {
    assert_eq!(logits.shape(), &[v * v, 2], "need full-pair logits");
    let data = logits.data();
    let vote = |i: usize, j: usize| data[2 * (i * v + j) + 1] > data[2 * (i * v + j)];
    let mut m = AdjacencyMatrix::identity(v);
    for i in 0..v {
        for j in i + 1..v {
            let edge = match symmetrize {
                Symmetrize::Or => vote(i, j) || vote(j, i),
                Symmetrize::And => vote(i, j) && vote(j, i),
            };
            m.set_edge(i, j, edge);
        }
    }
    m
}

/// Full-pair inference on one sample.
pub fn predict_triple<E: Element>(
    cfg: &ModelConfig,
    store: &ParamStore<E>,
    sample: &Sample,
    symmetrize: Symmetrize,
) -> Result<PredictedTriple, NnError> {
    let features = featurize::<E>(sample, cfg.max_word_len);
    let pairs = HeadPairs::full(features.v);
    let mut tape = Tape::new();
    let logits = forward(cfg, store, &mut tape, &features, &pairs)?;
    let decode = |id| decode_adjacency(tape.value(id), features.v, symmetrize);
    Ok(PredictedTriple {
        cells: decode(logits.cells),
        rows: decode(logits.rows),
        cols: decode(logits.cols),
    })
}

/// Structure elements of a predicted triple: components for cells,
/// maximal cliques for rows and columns.
pub fn reconstruct(pred: &PredictedTriple) -> Result<[CliqueSet; 3], GraphError> {
    Ok([
        connected_components(&pred.cells).with_kind(CliqueKind::Cell),
        maximal_cliques(&pred.rows)?.with_kind(CliqueKind::Row),
        maximal_cliques(&pred.cols)?.with_kind(CliqueKind::Column),
    ])
}

fn clique_keys(set: &CliqueSet) -> BTreeSet<Vec<usize>> {
    set.cliques
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.sort_unstable();
            c
        })
        .collect()
}

/// Percentage of ground-truth cliques with an exactly equal vertex set in
/// the prediction.
pub fn clique_tpr(gt: &CliqueSet, pred: &CliqueSet) -> f64 {
    let (gt, pred) = (clique_keys(gt), clique_keys(pred));
    if gt.is_empty() {
        return 0.0;
    }
    let matched = gt.intersection(&pred).count();
    100.0 * matched as f64 / gt.len() as f64
}

/// Percentage of predicted cliques with no exactly equal vertex set in
/// the ground truth.
pub fn clique_fpr(gt: &CliqueSet, pred: &CliqueSet) -> f64 {
    let (gt, pred) = (clique_keys(gt), clique_keys(pred));
    if pred.is_empty() {
        return 0.0;
    }
    let matched = pred.intersection(&gt).count();
    100.0 * (pred.len() - matched) as f64 / pred.len() as f64
}

/// True iff all three matrices match the ground truth elementwise.
pub fn perfect_match(gt: &AdjacencyTriple, pred: &PredictedTriple) -> bool {
    gt.cells == pred.cells && gt.rows == pred.rows && gt.cols == pred.cols
}

/// Clique-match counts for one kind: `matched` of `gt_total` ground-truth
/// cliques found, `unmatched` of `pred_total` predictions spurious.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KindCounts {
    pub matched: usize,
    pub gt_total: usize,
    pub unmatched: usize,
    pub pred_total: usize,
}

/// Per-sample scoring result, kind order `cells, rows, cols`.
#[derive(Clone, Debug)]
pub struct SampleScore {
    pub exploded: bool,
    pub kinds: [KindCounts; 3],
    pub perfect: bool,
}

/// Scores one prediction against its ground truth. A clique explosion in
/// the prediction marks the sample instead of failing; the phantom counts
/// make the sample score as all-miss under either averaging mode.
pub fn score_sample(gt: &AdjacencyTriple, pred: &PredictedTriple) -> SampleScore {
    let gt_sets = [
        connected_components(&gt.cells).with_kind(CliqueKind::Cell),
        maximal_cliques(&gt.rows)
            .expect("ground truth has at most one clique per row")
            .with_kind(CliqueKind::Row),
        maximal_cliques(&gt.cols)
            .expect("ground truth has at most one clique per column")
            .with_kind(CliqueKind::Column),
    ];
    match reconstruct(pred) {
        Ok(pred_sets) => {
            let mut kinds = [KindCounts::default(); 3];
            for (i, (g, p)) in gt_sets.iter().zip(&pred_sets).enumerate() {
                let (gk, pk) = (clique_keys(g), clique_keys(p));
                let matched = gk.intersection(&pk).count();
                kinds[i] = KindCounts {
                    matched,
                    gt_total: gk.len(),
                    unmatched: pk.len() - matched,
                    pred_total: pk.len(),
                };
            }
            SampleScore {
                exploded: false,
                kinds,
                perfect: perfect_match(gt, pred),
            }
        }
        Err(_) => {
            // No usable prediction: zero matches against the real
            // ground-truth totals, and one phantom spurious clique per
            // ground-truth clique so pooled fpr also reads 100.
            let kinds = core::array::from_fn(|i| {
                let total = gt_sets[i].len();
                KindCounts {
                    matched: 0,
                    gt_total: total,
                    unmatched: total,
                    pred_total: total,
                }
            });
            SampleScore {
                exploded: true,
                kinds,
                perfect: false,
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KindScore {
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub samples: usize,
    pub explosions: usize,
    pub cells: KindScore,
    pub rows: KindScore,
    pub cols: KindScore,
    pub perfect_matching: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub symmetrize: Symmetrize,
    pub averaging: Averaging,
    /// Keyed by category id, only ids present in the dataset appear.
    pub categories: BTreeMap<u8, CategoryReport>,
    pub overall: CategoryReport,
}

fn aggregate(scores: &[(Category, SampleScore)], cfg: &EvalConfig) -> EvalReport {
    let mut buckets: BTreeMap<u8, Vec<&SampleScore>> = BTreeMap::new();
    for (cat, score) in scores {
        buckets.entry(cat.id()).or_default().push(score);
    }
    let categories = buckets
        .iter()
        .map(|(&id, group)| (id, aggregate_group(group, cfg)))
        .collect();
    let all: Vec<&SampleScore> = scores.iter().map(|(_, s)| s).collect();
    EvalReport {
        symmetrize: cfg.symmetrize,
        averaging: cfg.averaging,
        categories,
        overall: aggregate_group(&all, cfg),
    }
}

fn aggregate_group(group: &[&SampleScore], cfg: &EvalConfig) -> CategoryReport {
    let n = group.len();
    let mut kind_scores = [KindScore::default(); 3];
    for (i, ks) in kind_scores.iter_mut().enumerate() {
        match cfg.averaging {
            Averaging::Macro => {
                let mut tpr = 0.0;
                let mut fpr = 0.0;
                for s in group {
                    let k = s.kinds[i];
                    tpr += rate(k.matched, k.gt_total);
                    fpr += rate(k.unmatched, k.pred_total);
                }
                ks.tpr = tpr / n as f64;
                ks.fpr = fpr / n as f64;
            }
            Averaging::Micro => {
                let sum = group.iter().fold(KindCounts::default(), |acc, s| {
                    let k = s.kinds[i];
                    KindCounts {
                        matched: acc.matched + k.matched,
                        gt_total: acc.gt_total + k.gt_total,
                        unmatched: acc.unmatched + k.unmatched,
                        pred_total: acc.pred_total + k.pred_total,
                    }
                });
                ks.tpr = rate(sum.matched, sum.gt_total);
                ks.fpr = rate(sum.unmatched, sum.pred_total);
            }
        }
    }
    let perfect = group.iter().filter(|s| s.perfect).count();
    CategoryReport {
        samples: n,
        explosions: group.iter().filter(|s| s.exploded).count(),
        cells: kind_scores[0],
        rows: kind_scores[1],
        cols: kind_scores[2],
        perfect_matching: 100.0 * perfect as f64 / n as f64,
    }
}

fn rate(part: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * part as f64 / total as f64
    }
}

/// Evaluates a model over a dataset. Samples are scored in parallel and
/// aggregated in dataset order, so the report is deterministic.
pub fn evaluate<E: Element>(
    model_cfg: &ModelConfig,
    store: &ParamStore<E>,
    samples: &[Sample],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    evaluate_with(samples, cfg, |sample| {
        predict_triple(model_cfg, store, sample, cfg.symmetrize).map_err(EvalError::from)
    })
}

/// Evaluates the identity pipeline: decode the ground truth itself. Any
/// score below 100/0/100 here means the reconstruction path is broken.
pub fn evaluate_oracle(samples: &[Sample], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    evaluate_with(samples, cfg, |sample| {
        let gt = sample.adjacency();
        Ok(PredictedTriple {
            cells: gt.cells,
            rows: gt.rows,
            cols: gt.cols,
        })
    })
}

fn evaluate_with<F>(samples: &[Sample], cfg: &EvalConfig, predict: F) -> Result<EvalReport, EvalError>
where
    F: Fn(&Sample) -> Result<PredictedTriple, EvalError> + Sync,
{
    if samples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let scores: Vec<(Category, SampleScore)> = samples
        .par_iter()
        .map(|sample| {
            let pred = predict(sample)?;
            Ok((sample.category, score_sample(&sample.adjacency(), &pred)))
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(aggregate(&scores, cfg))
}

/// One row per category plus an overall row.
pub fn write_csv<W: Write>(report: &EvalReport, out: &mut W) -> std::io::Result<()> {
    writeln!(
        out,
        "category,samples,explosions,cells_tpr,cells_fpr,rows_tpr,rows_fpr,cols_tpr,cols_fpr,perfect_matching"
    )?;
    let mut row = |label: &str, r: &CategoryReport| {
        writeln!(
            out,
            "{label},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            r.samples,
            r.explosions,
            r.cells.tpr,
            r.cells.fpr,
            r.rows.tpr,
            r.rows.fpr,
            r.cols.tpr,
            r.cols.fpr,
            r.perfect_matching
        )
    };
    for (id, r) in &report.categories {
        row(&id.to_string(), r)?;
    }
    row("all", &report.overall)
}

/// Builds full-pair logits that decode exactly to `adj`: margin `m` on
/// the correct class for every directed pair.
pub fn logits_from_adjacency(adj: &AdjacencyMatrix, margin: f64) -> Tensor<f64> {
    let v = adj.vertex_count();
    let mut data = Vec::with_capacity(v * v * 2);
    for i in 0..v {
        for j in 0..v {
            if adj.get(i, j) {
                data.extend([0.0, margin]);
            } else {
                data.extend([margin, 0.0]);
            }
        }
    }
    Tensor::from_vec(&[v * v, 2], data).expect("sized to shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{adjacency_from_cliques, CLIQUE_GUARD_FACTOR};
    use crate::model::{init_params, InteractionKind};
    use crate::synth::{generate_sample, GenConfig};

    fn set(kind: CliqueKind, cliques: &[&[usize]]) -> CliqueSet {
        CliqueSet {
            kind,
            cliques: cliques.iter().map(|c| c.to_vec()).collect(),
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn decode_applies_or_and_forces_diagonal() {
        // Directed votes: 0->1 edge, 1->0 no edge. OR keeps it, AND drops it.
        let mut adj = AdjacencyMatrix::identity(3);
        adj.set_raw(0, 1, true);
        let logits = logits_from_adjacency(&adj, 4.0);
        let or = decode_adjacency(&logits, 3, Symmetrize::Or);
        assert!(or.get(0, 1) && or.get(1, 0));
        let and = decode_adjacency(&logits, 3, Symmetrize::And);
        assert!(!and.get(0, 1) && !and.get(1, 0));
        for m in [&or, &and] {
            assert!(m.is_symmetric() && m.is_reflexive());
        }
    }

    #[test]
    fn decode_all_class_zero_gives_identity() {
        let v = 4;
        let logits = Tensor::from_vec(
            &[v * v, 2],
            (0..v * v).flat_map(|_| [3.0, -3.0]).collect(),
        )
        .unwrap();
        let m = decode_adjacency(&logits, v, Symmetrize::Or);
        assert_eq!(m, AdjacencyMatrix::identity(v));
    }

    #[test]
    fn tpr_and_fpr_match_hand_counts() {
        let gt = set(CliqueKind::Row, &[&[0], &[1], &[2]]);
        let pred = set(CliqueKind::Row, &[&[0], &[1, 2]]);
        assert!(close(clique_tpr(&gt, &pred), 100.0 / 3.0));
        assert!(close(clique_fpr(&gt, &pred), 50.0));

        let sup = set(CliqueKind::Row, &[&[0], &[1], &[2], &[0, 1, 2]]);
        assert!(close(clique_tpr(&gt, &sup), 100.0));
        assert!(close(clique_fpr(&gt, &sup), 25.0));

        assert!(close(clique_tpr(&gt, &gt), 100.0));
        assert!(close(clique_fpr(&gt, &gt), 0.0));
        let empty = set(CliqueKind::Row, &[]);
        assert!(close(clique_tpr(&gt, &empty), 0.0));
        assert!(close(clique_fpr(&gt, &empty), 0.0));
    }

    #[test]
    fn clique_order_and_internal_order_do_not_matter() {
        let a = set(CliqueKind::Row, &[&[0, 1], &[2, 3]]);
        let b = set(CliqueKind::Row, &[&[3, 2], &[1, 0]]);
        assert!(close(clique_tpr(&a, &b), 100.0));
        assert!(close(clique_fpr(&a, &b), 0.0));
    }

    #[test]
    fn relabeling_both_sides_preserves_scores() {
        let gt = set(CliqueKind::Row, &[&[0, 1], &[2], &[3, 4]]);
        let pred = set(CliqueKind::Row, &[&[0, 1], &[2, 3], &[4]]);
        let perm = [4usize, 2, 0, 1, 3];
        let relabel = |s: &CliqueSet| CliqueSet {
            kind: s.kind,
            cliques: s
                .cliques
                .iter()
                .map(|c| c.iter().map(|&x| perm[x]).collect())
                .collect(),
        };
        assert!(close(
            clique_tpr(&gt, &pred),
            clique_tpr(&relabel(&gt), &relabel(&pred))
        ));
        assert!(close(
            clique_fpr(&gt, &pred),
            clique_fpr(&relabel(&gt), &relabel(&pred))
        ));
    }

    #[test]
    fn perfect_match_is_strict() {
        let sample = generate_sample(&GenConfig::desk(), Category::MergedCells, 8).unwrap();
        let gt = sample.adjacency();
        let pred = PredictedTriple {
            cells: gt.cells.clone(),
            rows: gt.rows.clone(),
            cols: gt.cols.clone(),
        };
        assert!(perfect_match(&gt, &pred));

        let mut broken = pred.clone();
        let v = gt.vertex_count();
        let flip = broken.cols.get(0, v - 1);
        broken.cols.set_edge(0, v - 1, !flip);
        assert!(!perfect_match(&gt, &broken));

        let score = score_sample(&gt, &pred);
        assert!(score.perfect && !score.exploded);
        for k in score.kinds {
            assert_eq!(k.matched, k.gt_total);
            assert_eq!(k.unmatched, 0);
        }
    }

    #[test]
    fn one_wrong_pair_beats_accuracy_but_not_perfect_match() {
        // 50 vertices, one flipped unordered pair: directed accuracy is
        // 2498/2500 > 99.9% on that head, yet the match fails.
        let v = 50;
        let gt = AdjacencyTriple {
            cells: AdjacencyMatrix::identity(v),
            rows: AdjacencyMatrix::identity(v),
            cols: AdjacencyMatrix::identity(v),
        };
        let mut cols = AdjacencyMatrix::identity(v);
        cols.set_edge(3, 7, true);
        let pred = PredictedTriple {
            cells: AdjacencyMatrix::identity(v),
            rows: AdjacencyMatrix::identity(v),
            cols,
        };
        let mut agree = 0;
        for i in 0..v {
            for j in 0..v {
                if gt.cols.get(i, j) == pred.cols.get(i, j) {
                    agree += 1;
                }
            }
        }
        let acc = agree as f64 / (v * v) as f64;
        assert!(acc > 0.999, "accuracy {acc}");
        assert!(!perfect_match(&gt, &pred));
    }

    #[test]
    fn pipeline_identity_reproduces_ground_truth() {
        for (cat, seed) in [
            (Category::FullGrid, 41),
            (Category::PartialBorders, 42),
            (Category::MergedCells, 43),
            (Category::Distorted, 44),
        ] {
            let sample = generate_sample(&GenConfig::desk(), cat, seed).unwrap();
            let gt = sample.adjacency();
            let decode = |m: &AdjacencyMatrix| {
                decode_adjacency(&logits_from_adjacency(m, 2.0), sample.vertex_count(), Symmetrize::Or)
            };
            let pred = PredictedTriple {
                cells: decode(&gt.cells),
                rows: decode(&gt.rows),
                cols: decode(&gt.cols),
            };
            let sets = reconstruct(&pred).unwrap();
            let v = sample.vertex_count();
            assert_eq!(adjacency_from_cliques(&sets[0], v), gt.cells, "{cat}");
            assert_eq!(adjacency_from_cliques(&sets[1], v), gt.rows, "{cat}");
            assert_eq!(adjacency_from_cliques(&sets[2], v), gt.cols, "{cat}");
        }
    }

    #[test]
    fn explosion_scores_as_total_miss() {
        // Complete graph minus a perfect matching on 16 vertices has
        // 2^8 = 256 maximal cliques, past the guard of 160.
        let v = 16;
        let mut rows = AdjacencyMatrix::identity(v);
        for i in 0..v {
            for j in i + 1..v {
                if !(i % 2 == 0 && j == i + 1) {
                    rows.set_edge(i, j, true);
                }
            }
        }
        assert!(matches!(
            maximal_cliques(&rows),
            Err(GraphError::CliqueExplosion { limit, .. }) if limit == CLIQUE_GUARD_FACTOR * v
        ));
        let gt = AdjacencyTriple {
            cells: AdjacencyMatrix::identity(v),
            rows: AdjacencyMatrix::identity(v),
            cols: AdjacencyMatrix::identity(v),
        };
        let pred = PredictedTriple {
            cells: AdjacencyMatrix::identity(v),
            rows,
            cols: AdjacencyMatrix::identity(v),
        };
        let score = score_sample(&gt, &pred);
        assert!(score.exploded && !score.perfect);
        for k in score.kinds {
            assert_eq!(k.matched, 0);
            assert_eq!(k.unmatched, k.pred_total);
        }
    }

    #[test]
    fn oracle_evaluation_is_exact_per_category() {
        let samples: Vec<Sample> = Category::ALL
            .iter()
            .flat_map(|&cat| {
                (0..3).map(move |i| {
                    generate_sample(&GenConfig::desk(), cat, 60 + 10 * cat.id() as u64 + i).unwrap()
                })
            })
            .collect();
        let report = evaluate_oracle(&samples, &EvalConfig::default()).unwrap();
        assert_eq!(report.categories.len(), 4);
        for (id, cat) in &report.categories {
            assert_eq!(cat.samples, 3, "category {id}");
            assert_eq!(cat.explosions, 0);
            for k in [&cat.cells, &cat.rows, &cat.cols] {
                assert_eq!(k.tpr, 100.0, "category {id}");
                assert_eq!(k.fpr, 0.0, "category {id}");
            }
            assert_eq!(cat.perfect_matching, 100.0);
        }
        assert_eq!(report.overall.samples, 12);
        assert_eq!(report.overall.perfect_matching, 100.0);
    }

    #[test]
    fn model_evaluation_is_deterministic_and_serializable() {
        let model_cfg = ModelConfig::tiny(InteractionKind::DgcnnStar);
        let store = init_params::<f64>(&model_cfg, 33).unwrap();
        let samples: Vec<Sample> = (0..4)
            .map(|i| generate_sample(&GenConfig::desk(), Category::FullGrid, 70 + i).unwrap())
            .collect();
        let cfg = EvalConfig::default();
        let a = evaluate(&model_cfg, &store, &samples, &cfg).unwrap();
        let b = evaluate(&model_cfg, &store, &samples, &cfg).unwrap();
        let ja = serde_json::to_string_pretty(&a).unwrap();
        let jb = serde_json::to_string_pretty(&b).unwrap();
        assert_eq!(ja, jb);

        let back: EvalReport = serde_json::from_str(&ja).unwrap();
        assert_eq!(back, a);
        let mut csv = Vec::new();
        write_csv(&a, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 1 + 1, "header, cat 1, all");
        assert!(text.starts_with("category,samples"));
    }

    #[test]
    fn micro_averaging_pools_counts() {
        // Sample A: 1 of 2 gt cliques found, 1 of 2 preds wrong.
        // Sample B: 4 of 4 found, 0 of 4 wrong.
        // Macro tpr = (50 + 100) / 2 = 75; micro = 5/6.
        let mk = |matched, gt_total, unmatched, pred_total| SampleScore {
            exploded: false,
            kinds: [KindCounts { matched, gt_total, unmatched, pred_total }; 3],
            perfect: false,
        };
        let scores = vec![
            (Category::FullGrid, mk(1, 2, 1, 2)),
            (Category::FullGrid, mk(4, 4, 0, 4)),
        ];
        let macro_rep = aggregate(&scores, &EvalConfig::default());
        assert!(close(macro_rep.overall.rows.tpr, 75.0));
        assert!(close(macro_rep.overall.rows.fpr, 25.0));
        let micro_rep = aggregate(
            &scores,
            &EvalConfig {
                averaging: Averaging::Micro,
                ..EvalConfig::default()
            },
        );
        assert!(close(micro_rep.overall.rows.tpr, 500.0 / 6.0));
        assert!(close(micro_rep.overall.rows.fpr, 100.0 / 6.0));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(
            evaluate_oracle(&[], &EvalConfig::default()),
            Err(EvalError::EmptyDataset)
        ));
    }
}
