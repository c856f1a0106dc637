//! Balanced Monte Carlo sampling of vertex pairs.
//!
//! Pair classification is wildly imbalanced: most word pairs share nothing.
//! For each source vertex `i` the sampler therefore splits probability mass
//! evenly between the two classes of its adjacency row, uniform within each
//! class:
//!
//! ```text
//! P[i][j] = 0.5 * A[i][j] / |ones(i)| + 0.5 * (1 - A[i][j]) / |zeros(i)|
//! ```
//!
//! When a row has only one class, all mass falls on that class. Draws are
//! with replacement, so duplicate pairs are legal; self-pairs are legal too
//! (the diagonal is reflexive, giving cheap class-1 examples).
//!
//! At inference there is no ground truth to balance against; every vertex is
//! paired with all `v` vertices instead.

use rand::Rng;

use crate::graph::{AdjacencyMatrix, AdjacencyTriple};

/// Per-row sampling distribution. `row` is one adjacency row including the
/// diagonal entry.
pub fn balanced_distribution(row: &[bool]) -> Vec<f64> {
    let v = row.len();
    let pos = row.iter().filter(|&&b| b).count();
    let neg = v - pos;
    let (w1, w0) = match (pos, neg) {
        (0, _) => (0.0, 1.0 / neg as f64),
        (_, 0) => (1.0 / pos as f64, 0.0),
        _ => (0.5 / pos as f64, 0.5 / neg as f64),
    };
    row.iter().map(|&b| if b { w1 } else { w0 }).collect()
}

/// A set of `t` partner indices per vertex, stored row-major `[v, t]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSet {
    v: usize,
    t: usize,
    indices: Vec<usize>,
}

impl PairSet {
    pub fn v(&self) -> usize {
        self.v
    }

    /// Partners per vertex.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn partner(&self, i: usize, k: usize) -> usize {
        self.indices[i * self.t + k]
    }

    pub fn partners(&self, i: usize) -> &[usize] {
        &self.indices[i * self.t..(i + 1) * self.t]
    }

    /// Source index of each pair, flattened to match [`right_index_list`].
    ///
    /// [`right_index_list`]: PairSet::right_index_list
    pub fn left_index_list(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.v * self.t);
        for i in 0..self.v {
            out.extend(std::iter::repeat_n(i, self.t));
        }
        out
    }

    pub fn right_index_list(&self) -> &[usize] {
        &self.indices
    }

    /// Class labels (0 or 1) for every pair against a ground-truth matrix.
    pub fn labels(&self, adj: &AdjacencyMatrix) -> Vec<usize> {
        assert_eq!(adj.vertex_count(), self.v, "pair set and matrix disagree on v");
        let mut out = Vec::with_capacity(self.v * self.t);
        for i in 0..self.v {
            for k in 0..self.t {
                out.push(usize::from(adj.get(i, self.partner(i, k))));
            }
        }
        out
    }
}

/// Draws `s` partners per vertex from the balanced distribution of `adj`.
pub fn sample_pairs<R: Rng>(adj: &AdjacencyMatrix, s: usize, rng: &mut R) -> PairSet {
    let v = adj.vertex_count();
    assert!(s > 0, "need at least one sample per vertex");
    let mut indices = Vec::with_capacity(v * s);
    let mut cdf = Vec::with_capacity(v);
    for i in 0..v {
        let probs = balanced_distribution(adj.row(i));
        cdf.clear();
        let mut acc = 0.0;
        for p in probs {
            acc += p;
            cdf.push(acc);
        }
        // Guard the last bucket against rounding so every u < 1 lands.
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        for _ in 0..s {
            let u: f64 = rng.random();
            let j = cdf.partition_point(|&c| c <= u);
            indices.push(j.min(v - 1));
        }
    }
    PairSet { v, t: s, indices }
}

/// The inference pairing: every vertex against all `v` vertices, in order.
pub fn full_pairing(v: usize) -> PairSet {
    let mut indices = Vec::with_capacity(v * v);
    for _ in 0..v {
        indices.extend(0..v);
    }
    PairSet { v, t: v, indices }
}

/// One pair set per classification head. Each head balances against its
/// own adjacency matrix, so the same pair can be class 1 for rows and
/// class 0 for cells.
#[derive(Clone, Debug)]
pub struct HeadPairs {
    pub cells: PairSet,
    pub rows: PairSet,
    pub cols: PairSet,
}

impl HeadPairs {
    /// Training-time pairs: balanced draws per matrix, in the fixed order
    /// cells, rows, cols off one rng.
    pub fn sampled<R: Rng>(triple: &AdjacencyTriple, s: usize, rng: &mut R) -> Self {
        Self {
            cells: sample_pairs(&triple.cells, s, rng),
            rows: sample_pairs(&triple.rows, s, rng),
            cols: sample_pairs(&triple.cols, s, rng),
        }
    }

    /// Inference-time pairs: every head scores all pairs.
    pub fn full(v: usize) -> Self {
        Self {
            cells: full_pairing(v),
            rows: full_pairing(v),
            cols: full_pairing(v),
        }
    }

    pub fn by_name(&self, name: &str) -> &PairSet {
        match name {
            "cells" => &self.cells,
            "rows" => &self.rows,
            "cols" => &self.cols,
            _ => panic!("unknown head {name:?}"),
        }
    }

    pub fn v(&self) -> usize {
        self.cells.v()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn two_of_four_ones_gives_uniform_quarters() {
        let p = balanced_distribution(&[true, true, false, false]);
        assert!(p.iter().all(|&x| close(x, 0.25)), "{p:?}");
    }

    #[test]
    fn single_one_gets_half_the_mass() {
        let p = balanced_distribution(&[true, false, false, false]);
        assert!(close(p[0], 0.5));
        for &x in &p[1..] {
            assert!(close(x, 1.0 / 6.0));
        }
    }

    #[test]
    fn all_ones_row_falls_back_to_uniform() {
        let p = balanced_distribution(&[true; 5]);
        assert!(p.iter().all(|&x| close(x, 0.2)));
    }

    #[test]
    fn distribution_sums_to_one_and_balances_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let v = rng.random_range(2..30);
            let i = rng.random_range(0..v);
            let mut row: Vec<bool> = (0..v).map(|_| rng.random_bool(0.3)).collect();
            row[i] = true; // reflexive diagonal
            let p = balanced_distribution(&row);
            let total: f64 = p.iter().sum();
            assert!(close(total, 1.0), "sum {total}");
            let ones_mass: f64 = p
                .iter()
                .zip(&row)
                .filter(|(_, &b)| b)
                .map(|(&x, _)| x)
                .sum();
            if row.iter().any(|&b| !b) {
                assert!(close(ones_mass, 0.5), "class-1 mass {ones_mass}");
            } else {
                assert!(close(ones_mass, 1.0));
            }
        }
    }

    #[test]
    fn full_pairing_enumerates_all_partners() {
        let p = full_pairing(4);
        assert_eq!(p.t(), 4);
        for i in 0..4 {
            assert_eq!(p.partners(i), &[0, 1, 2, 3]);
        }
        assert_eq!(p.left_index_list(), vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3]);
    }

    #[test]
    fn labels_follow_the_matrix() {
        let adj = AdjacencyMatrix::from_edges(3, &[(0, 1)]);
        let p = full_pairing(3);
        assert_eq!(p.labels(&adj), vec![1, 1, 0, 1, 1, 0, 0, 0, 1]);
    }

    #[test]
    fn sampling_is_deterministic_given_the_seed() {
        let adj = AdjacencyMatrix::from_edges(6, &[(0, 1), (2, 3), (4, 5)]);
        let a = sample_pairs(&adj, 8, &mut ChaCha8Rng::seed_from_u64(99));
        let b = sample_pairs(&adj, 8, &mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a, b);
        let c = sample_pairs(&adj, 8, &mut ChaCha8Rng::seed_from_u64(100));
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_draws_match_the_distribution() {
        // One vertex, 10k draws: class balance within a point and a half,
        // and a chi-squared test against the exact distribution.
        let adj = AdjacencyMatrix::from_edges(8, &[(0, 1), (0, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let n = 10_000usize;
        let pairs = sample_pairs(&adj, n, &mut rng);
        let mut counts = vec![0usize; 8];
        for k in 0..n {
            counts[pairs.partner(0, k)] += 1;
        }
        let probs = balanced_distribution(adj.row(0));
        let ones: usize = (0..8).filter(|&j| adj.get(0, j)).map(|j| counts[j]).sum();
        let frac = ones as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.015, "class-1 fraction {frac}");

        let mut stat = 0.0;
        for j in 0..8 {
            let expected = probs[j] * n as f64;
            let d = counts[j] as f64 - expected;
            stat += d * d / expected;
        }
        let chi = ChiSquared::new(7.0).unwrap();
        let p_value = 1.0 - chi.cdf(stat);
        assert!(p_value > 0.001, "chi-squared p = {p_value}, stat = {stat}");
    }

    #[test]
    fn isolated_vertex_samples_only_itself_for_class_one() {
        // Vertex 3 is isolated: its only 1-entry is the diagonal, which must
        // carry half the mass.
        let adj = AdjacencyMatrix::from_edges(4, &[(0, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs = sample_pairs(&adj, 4000, &mut rng);
        let selfs = pairs.partners(3).iter().filter(|&&j| j == 3).count();
        let frac = selfs as f64 / 4000.0;
        assert!((frac - 0.5).abs() < 0.03, "self fraction {frac}");
    }

    #[test]
    fn head_pairs_sample_each_matrix_independently() {
        // Rows and cols share no edges with cells here, so the balanced
        // draws must differ per head while staying deterministic.
        let triple = AdjacencyTriple {
            cells: AdjacencyMatrix::identity(5),
            rows: AdjacencyMatrix::from_edges(5, &[(0, 1), (0, 2), (1, 2)]),
            cols: AdjacencyMatrix::from_edges(5, &[(3, 4)]),
        };
        let a = HeadPairs::sampled(&triple, 16, &mut ChaCha8Rng::seed_from_u64(11));
        let b = HeadPairs::sampled(&triple, 16, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.cols, b.cols);
        assert_eq!(a.v(), 5);

        // Identity cells matrix: vertex 0 can only draw itself as class 1,
        // so half its partners are 0. The rows matrix gives it two more
        // class-1 partners, so the head draws must actually differ.
        assert_ne!(a.cells, a.rows);
        let cell_selfs = a.cells.partners(0).iter().filter(|&&j| j == 0).count();
        assert!(cell_selfs >= 4, "got {cell_selfs} self draws of 16");
        for (name, expect) in [("cells", 0usize), ("rows", 1), ("cols", 3)] {
            let p = a.by_name(name);
            assert_eq!(p.t(), 16);
            assert_eq!(p.partners(expect).len(), 16);
        }
    }

    #[test]
    fn head_pairs_full_covers_every_head() {
        let hp = HeadPairs::full(3);
        for name in ["cells", "rows", "cols"] {
            let p = hp.by_name(name);
            assert_eq!(p.t(), 3);
            assert_eq!(p.left_index_list().len(), 9);
        }
    }
}
