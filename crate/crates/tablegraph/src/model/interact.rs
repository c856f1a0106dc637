//! Interaction networks: how words exchange information.
//!
//! All three variants map `[v, f]` vertex features to `[v, width]` and are
//! equivariant under vertex permutation:
//!
//! * `fcnn`: per-vertex MLP, no exchange at all (the baseline),
//! * `dgcnn_star`: edge convolutions over k nearest neighbors in the
//!   current feature space, recomputed per block; edge features are the
//!   center concatenated with the neighbor difference, aggregated by max,
//! * `gravnet_star`: each block learns a low-dimensional coordinate space,
//!   finds neighbors there, and averages their features weighted by
//!   `exp(-10 d^2)`; the weight stays differentiable through the learned
//!   coordinates even though the neighbor choice itself is discrete.
//!
//! Neighbor lists are sorted by (distance, index), so the aggregation sees
//! values in a canonical order and identical inputs produce bitwise
//! identical outputs regardless of vertex numbering (as long as distances
//! are distinct).

use super::{InteractionKind, ModelConfig};
use crate::nn::{Element, NnError, NodeId, ParamStore, Tape, Tensor};

pub fn apply<E: Element>(
    cfg: &ModelConfig,
    store: &ParamStore<E>,
    tape: &mut Tape<E>,
    x: NodeId,
    v: usize,
) -> Result<NodeId, NnError> {
    match cfg.interaction {
        InteractionKind::Fcnn => fcnn(cfg, store, tape, x),
        InteractionKind::DgcnnStar => dgcnn_star(cfg, store, tape, x, v),
        InteractionKind::GravnetStar => gravnet_star(cfg, store, tape, x, v),
    }
}

fn dense_layer<E: Element>(
    store: &ParamStore<E>,
    tape: &mut Tape<E>,
    name: &str,
    x: NodeId,
) -> Result<NodeId, NnError> {
    let w = store.tape_param(tape, &format!("{name}.w"))?;
    let b = store.tape_param(tape, &format!("{name}.b"))?;
    tape.dense(x, w, b)
}

fn fcnn<E: Element>(
    cfg: &ModelConfig,
    store: &ParamStore<E>,
    tape: &mut Tape<E>,
    x: NodeId,
) -> Result<NodeId, NnError> {
    let mut h = x;
    for b in 0..cfg.blocks {
        h = dense_layer(store, tape, &format!("interact.b{b}"), h)?;
        h = tape.relu(h)?;
    }
    Ok(h)
}

fn dgcnn_star<E: Element>(
    cfg: &ModelConfig,
    store: &ParamStore<E>,
    tape: &mut Tape<E>,
    x: NodeId,
    v: usize,
) -> Result<NodeId, NnError> {
    let mut h = x;
    for b in 0..cfg.blocks {
        let (k_eff, neighbors) = knn(tape.value(h), v, cfg.k);
        let centers: Vec<usize> = (0..v).flat_map(|i| std::iter::repeat_n(i, k_eff)).collect();
        let hc = tape.gather_rows(h, &centers)?;
        let hn = tape.gather_rows(h, &neighbors)?;
        let diff = tape.sub(hn, hc)?;
        let edge = tape.concat_cols(&[hc, diff])?;
        let e = dense_layer(store, tape, &format!("interact.b{b}.mlp0"), edge)?;
        let e = tape.relu(e)?;
        let e = dense_layer(store, tape, &format!("interact.b{b}.mlp1"), e)?;
        let e = tape.relu(e)?;
        let shaped = tape.reshape(e, &[v, k_eff, cfg.width])?;
        h = tape.reduce_max_axis(shaped, 1)?;
    }
    Ok(h)
}

fn gravnet_star<E: Element>(
    cfg: &ModelConfig,
    store: &ParamStore<E>,
    tape: &mut Tape<E>,
    x: NodeId,
    v: usize,
) -> Result<NodeId, NnError> {
    let mut h = x;
    for b in 0..cfg.blocks {
        let s = dense_layer(store, tape, &format!("interact.b{b}.s"), h)?;
        let flr = dense_layer(store, tape, &format!("interact.b{b}.flr"), h)?;
        let flr = tape.relu(flr)?;
        let (k_eff, neighbors) = knn(tape.value(s), v, cfg.k);
        let centers: Vec<usize> = (0..v).flat_map(|i| std::iter::repeat_n(i, k_eff)).collect();
        let sc = tape.gather_rows(s, &centers)?;
        let sn = tape.gather_rows(s, &neighbors)?;
        let ds = tape.sub(sn, sc)?;
        let dsq = tape.mul(ds, ds)?;
        let d2 = tape.reduce_sum_axis(dsq, 1)?;
        let wgt = tape.scale(d2, -10.0)?;
        let wgt = tape.exp(wgt)?;
        let fneigh = tape.gather_rows(flr, &neighbors)?;
        let weighted = tape.scale_rows(fneigh, wgt)?;
        let shaped = tape.reshape(weighted, &[v, k_eff, cfg.width])?;
        let mean = tape.reduce_mean_axis(shaped, 1)?;
        let mx = tape.reduce_max_axis(shaped, 1)?;
        let cat = tape.concat_cols(&[h, mean, mx])?;
        let o = dense_layer(store, tape, &format!("interact.b{b}.out"), cat)?;
        h = tape.relu(o)?;
    }
    Ok(h)
}

/// k nearest neighbors per vertex by squared distance in `values` (shape
/// `[v, f]`), self excluded, ties broken by index. Returns the effective k
/// (clamped to `v - 1`; a lone vertex neighbors itself) and the flat
/// neighbor list `[v * k_eff]`, each row ascending by distance.
fn knn<E: Element>(values: &Tensor<E>, v: usize, k: usize) -> (usize, Vec<usize>) {
    debug_assert_eq!(values.shape()[0], v);
    if v == 1 {
        return (1, vec![0]);
    }
    let f = values.shape()[1];
    let data = values.data();
    let k_eff = k.min(v - 1);
    let mut flat = Vec::with_capacity(v * k_eff);
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(v - 1);
    for i in 0..v {
        dists.clear();
        let a = &data[i * f..(i + 1) * f];
        for j in 0..v {
            if j == i {
                continue;
            }
            let b = &data[j * f..(j + 1) * f];
            let mut d2 = 0.0;
            for (x, y) in a.iter().zip(b) {
                let d = x.to_f64() - y.to_f64();
                d2 += d * d;
            }
            dists.push((d2, j));
        }
        dists.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        flat.extend(dists[..k_eff].iter().map(|&(_, j)| j));
    }
    (k_eff, flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(v: usize, f: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(&[v, f], (0..v * f).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn knn_matches_hand_computed_example() {
        // Points on a line: 0.0, 1.0, 3.0, 7.0
        let t = Tensor::from_vec(&[4, 1], vec![0.0, 1.0, 3.0, 7.0]).unwrap();
        let (k_eff, n) = knn(&t, 4, 2);
        assert_eq!(k_eff, 2);
        assert_eq!(n, vec![1, 2, 0, 2, 1, 0, 2, 1]);
    }

    #[test]
    fn knn_clamps_k_and_handles_singletons() {
        let t = rand_matrix(3, 2, 1);
        let (k_eff, n) = knn(&t, 3, 10);
        assert_eq!(k_eff, 2);
        assert_eq!(n.len(), 6);
        let single = rand_matrix(1, 2, 1);
        assert_eq!(knn(&single, 1, 4), (1, vec![0]));
    }

    #[test]
    fn knn_breaks_ties_by_index() {
        // Vertices 1 and 2 are equidistant from 0.
        let t = Tensor::from_vec(&[3, 1], vec![0.0, 2.0, -2.0]).unwrap();
        let (_, n) = knn(&t, 3, 1);
        assert_eq!(n[0], 1);
    }

    #[test]
    fn interactions_are_permutation_equivariant() {
        for kind in [
            InteractionKind::Fcnn,
            InteractionKind::DgcnnStar,
            InteractionKind::GravnetStar,
        ] {
            let cfg = ModelConfig::tiny(kind);
            let store = init_params::<f64>(&cfg, 5).unwrap();
            let v = 6;
            let f = cfg.vertex_feature_width();
            let x = rand_matrix(v, f, 42);
            let perm = [3usize, 0, 5, 1, 4, 2];

            let mut tape = Tape::new();
            let xin = tape.input(x.clone()).unwrap();
            let out = apply(&cfg, &store, &mut tape, xin, v).unwrap();
            let base = tape.value(out).data().to_vec();

            let mut permuted = vec![0.0; v * f];
            for (new_row, &old_row) in perm.iter().enumerate() {
                permuted[new_row * f..(new_row + 1) * f]
                    .copy_from_slice(&x.data()[old_row * f..(old_row + 1) * f]);
            }
            let mut tape2 = Tape::new();
            let xin2 = tape2
                .input(Tensor::from_vec(&[v, f], permuted).unwrap())
                .unwrap();
            let out2 = apply(&cfg, &store, &mut tape2, xin2, v).unwrap();
            let shuffled = tape2.value(out2).data();

            let width = cfg.width;
            for (new_row, &old_row) in perm.iter().enumerate() {
                assert_eq!(
                    &shuffled[new_row * width..(new_row + 1) * width],
                    &base[old_row * width..(old_row + 1) * width],
                    "kind {kind}: row {old_row} not carried to {new_row}"
                );
            }
        }
    }

    #[test]
    fn interaction_gradients_match_finite_differences() {
        use crate::nn::gradcheck::{check, GradCheckConfig};
        for kind in [
            InteractionKind::Fcnn,
            InteractionKind::DgcnnStar,
            InteractionKind::GravnetStar,
        ] {
            let cfg = ModelConfig::tiny(kind);
            let full = init_params::<f64>(&cfg, 9).unwrap();
            // Only interaction parameters participate here; copying them
            // into a fresh store keeps the finite-difference sweep small.
            let mut store = crate::nn::ParamStore::<f64>::new();
            for name in full.names() {
                if name.starts_with("interact.") {
                    store.insert(name, full.value(name).unwrap().clone());
                }
            }
            let x = rand_matrix(5, cfg.vertex_feature_width(), 77);
            let cfg2 = cfg.clone();
            let report = check(
                &mut store,
                move |s, t| {
                    let xin = t.input(x.clone())?;
                    let out = apply(&cfg2, s, t, xin, 5)?;
                    t.reduce_mean_all(out)
                },
                &GradCheckConfig::default(),
            )
            .unwrap();
            assert!(
                report.passed(),
                "kind {kind}: max rel err {:.3e}, {:?}",
                report.max_rel_err,
                report.mismatches.first()
            );
        }
    }
}
