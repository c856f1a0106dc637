//! Adjacency graphs over word vertices and reconstruction of table structure.
//!
//! A table is described by three symmetric, reflexive binary matrices over its
//! words: two words are adjacent iff they share a cell, at least one row, or at
//! least one column. Cells are recovered as connected components of the
//! cell-sharing graph; rows and columns are recovered as maximal cliques of
//! their sharing graphs (a word spanning merged rows/columns belongs to several
//! cliques at once).

use std::fmt;

use thiserror::Error;

/// Hard cap on vertex count for clique enumeration.
pub const MAX_CLIQUE_VERTICES: usize = 4096;

/// Default clique-count guard multiplier: enumeration aborts after `10 * v`
/// maximal cliques. A wildly wrong predicted matrix can have exponentially
/// many cliques; well-formed tables stay far below this.
pub const CLIQUE_GUARD_FACTOR: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    /// Enumeration exceeded the configured clique-count guard. Signals a
    /// degenerate predicted adjacency, not a bug in the caller.
    #[error("clique enumeration exceeded guard of {limit} cliques on a {vertices}-vertex graph")]
    CliqueExplosion { limit: usize, vertices: usize },
    #[error("graph has {vertices} vertices; clique enumeration supports at most {max}")]
    TooManyVertices { vertices: usize, max: usize },
}

// ---------------------------------------------------------------------------
// AdjacencyMatrix
// ---------------------------------------------------------------------------

/// Symmetric reflexive binary matrix over `v` vertices, row-major.
///
/// The constructors keep the diagonal set and edges mirrored; `set_raw` can
/// produce arbitrary (possibly invalid) matrices for diagnostics and tests.
#[derive(Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    v: usize,
    bits: Vec<bool>,
}

impl AdjacencyMatrix {
    /// Identity matrix: every vertex adjacent only to itself.
    pub fn identity(v: usize) -> Self {
        let mut bits = vec![false; v * v];
        for i in 0..v {
            bits[i * v + i] = true;
        }
        Self { v, bits }
    }

    /// Identity plus the given undirected edges.
    pub fn from_edges(v: usize, edges: &[(usize, usize)]) -> Self {
        let mut m = Self::identity(v);
        for &(i, j) in edges {
            m.set_edge(i, j, true);
        }
        m
    }

    pub fn vertex_count(&self) -> usize {
        self.v
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.v + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set_edge(&mut self, i: usize, j: usize, value: bool) {
        self.bits[i * self.v + j] = value;
        self.bits[j * self.v + i] = value;
    }

    /// Sets a single entry without mirroring. Breaks the symmetry invariant on
    /// purpose; exists so `validate` has something to diagnose.
    pub fn set_raw(&mut self, i: usize, j: usize, value: bool) {
        self.bits[i * self.v + j] = value;
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.v).all(|i| (i + 1..self.v).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn is_reflexive(&self) -> bool {
        (0..self.v).all(|i| self.get(i, i))
    }

    /// Number of adjacent pairs `i < j`, diagonal excluded.
    pub fn edge_count(&self) -> usize {
        let mut n = 0;
        for i in 0..self.v {
            for j in i + 1..self.v {
                if self.get(i, j) {
                    n += 1;
                }
            }
        }
        n
    }

    /// Row `i` as 0/1 values; used by the pair sampler.
    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.v..(i + 1) * self.v]
    }
}

impl fmt::Debug for AdjacencyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "AdjacencyMatrix(v={})", self.v)?;
        for i in 0..self.v {
            for j in 0..self.v {
                write!(f, "{}", u8::from(self.get(i, j)))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// AdjacencyTriple and validation
// ---------------------------------------------------------------------------

/// The cell-, row- and column-sharing matrices of one table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyTriple {
    pub cells: AdjacencyMatrix,
    pub rows: AdjacencyMatrix,
    pub cols: AdjacencyMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    Cells,
    Rows,
    Cols,
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixKind::Cells => write!(f, "cells"),
            MatrixKind::Rows => write!(f, "rows"),
            MatrixKind::Cols => write!(f, "cols"),
        }
    }
}

/// One broken structural rule, locatable down to the offending entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// `bits[i][j] != bits[j][i]`.
    Asymmetric { matrix: MatrixKind, i: usize, j: usize },
    /// `bits[i][i] == 0`.
    NotReflexive { matrix: MatrixKind, i: usize },
    /// Two words in one cell must share a row and a column:
    /// `cells[i][j] == 1` but the named matrix has a 0 at `(i, j)`.
    CellNotContained { matrix: MatrixKind, i: usize, j: usize },
    /// The three matrices disagree on vertex count.
    VertexCountMismatch { cells: usize, rows: usize, cols: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Asymmetric { matrix, i, j } => {
                write!(f, "{matrix}: entry ({i},{j}) differs from ({j},{i})")
            }
            Violation::NotReflexive { matrix, i } => {
                write!(f, "{matrix}: diagonal entry ({i},{i}) is 0")
            }
            Violation::CellNotContained { matrix, i, j } => write!(
                f,
                "cells ({i},{j}) set but {matrix} ({i},{j}) clear; cell sharing implies {matrix} sharing"
            ),
            Violation::VertexCountMismatch { cells, rows, cols } => write!(
                f,
                "vertex counts differ: cells={cells}, rows={rows}, cols={cols}"
            ),
        }
    }
}

impl AdjacencyTriple {
    pub fn vertex_count(&self) -> usize {
        self.cells.vertex_count()
    }

    pub fn by_name(&self, name: &str) -> &AdjacencyMatrix {
        match name {
            "cells" => &self.cells,
            "rows" => &self.rows,
            "cols" => &self.cols,
            _ => panic!("unknown matrix {name:?}"),
        }
    }

    /// Checks all structural invariants and returns every violation found.
    /// Empty result means the triple is a well-formed ground truth.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (vc, vr, vl) = (
            self.cells.vertex_count(),
            self.rows.vertex_count(),
            self.cols.vertex_count(),
        );
        if vc != vr || vc != vl {
            out.push(Violation::VertexCountMismatch {
                cells: vc,
                rows: vr,
                cols: vl,
            });
            return out;
        }
        for (kind, m) in [
            (MatrixKind::Cells, &self.cells),
            (MatrixKind::Rows, &self.rows),
            (MatrixKind::Cols, &self.cols),
        ] {
            for i in 0..vc {
                if !m.get(i, i) {
                    out.push(Violation::NotReflexive { matrix: kind, i });
                }
                for j in i + 1..vc {
                    if m.get(i, j) != m.get(j, i) {
                        out.push(Violation::Asymmetric { matrix: kind, i, j });
                    }
                }
            }
        }
        for i in 0..vc {
            for j in 0..vc {
                if i != j && self.cells.get(i, j) {
                    if !self.rows.get(i, j) {
                        out.push(Violation::CellNotContained {
                            matrix: MatrixKind::Rows,
                            i,
                            j,
                        });
                    }
                    if !self.cols.get(i, j) {
                        out.push(Violation::CellNotContained {
                            matrix: MatrixKind::Cols,
                            i,
                            j,
                        });
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// CliqueSet
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CliqueKind {
    Cell,
    Row,
    Column,
}

/// Reconstructed structure elements: vertex-id sets, each sorted, the list
/// ordered lexicographically. For `Cell` the sets partition the vertices; for
/// `Row`/`Column` a vertex spanning merged rows or columns appears in several.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliqueSet {
    pub kind: CliqueKind,
    pub cliques: Vec<Vec<usize>>,
}

impl CliqueSet {
    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    /// Relabels the set; `maximal_cliques` cannot know whether it is
    /// reconstructing rows or columns.
    pub fn with_kind(mut self, kind: CliqueKind) -> Self {
        self.kind = kind;
        self
    }
}

// ---------------------------------------------------------------------------
// Connected components (cells)
// ---------------------------------------------------------------------------

/// Partition of the vertices into maximal connected sets.
///
/// Components are sorted internally and ordered by smallest member, so the
/// output is deterministic for a given matrix.
pub fn connected_components(adj: &AdjacencyMatrix) -> CliqueSet {
    let v = adj.vertex_count();
    let mut seen = vec![false; v];
    let mut cliques = Vec::new();
    let mut stack = Vec::new();
    for start in 0..v {
        if seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            comp.push(i);
            for j in 0..v {
                if !seen[j] && adj.get(i, j) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        cliques.push(comp);
    }
    // Components are discovered in order of their smallest member already,
    // but sort anyway so the contract does not depend on traversal order.
    cliques.sort();
    CliqueSet {
        kind: CliqueKind::Cell,
        cliques,
    }
}

// ---------------------------------------------------------------------------
// Maximal cliques (rows / columns)
// ---------------------------------------------------------------------------

/// Word-block bitset over vertex ids; just enough for Bron–Kerbosch.
#[derive(Clone)]
struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    fn empty(v: usize) -> Self {
        Self {
            words: vec![0; v.div_ceil(64)],
        }
    }

    fn full(v: usize) -> Self {
        let mut s = Self::empty(v);
        for i in 0..v {
            s.insert(i);
        }
        s
    }

    fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn intersect(&self, other: &BitSet) -> BitSet {
        BitSet {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    fn count_intersection(&self, other: &BitSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}

/// Enumerates all maximal cliques with the default guard of
/// [`CLIQUE_GUARD_FACTOR`]` * v` cliques.
pub fn maximal_cliques(adj: &AdjacencyMatrix) -> Result<CliqueSet, GraphError> {
    maximal_cliques_guarded(adj, CLIQUE_GUARD_FACTOR * adj.vertex_count().max(1))
}

/// Bron–Kerbosch with pivoting. The diagonal is ignored (self-loops carry no
/// information); every vertex, including isolated ones, lands in at least one
/// clique. Cliques come out sorted internally and ordered lexicographically.
pub fn maximal_cliques_guarded(
    adj: &AdjacencyMatrix,
    max_cliques: usize,
) -> Result<CliqueSet, GraphError> {
    let v = adj.vertex_count();
    if v > MAX_CLIQUE_VERTICES {
        return Err(GraphError::TooManyVertices {
            vertices: v,
            max: MAX_CLIQUE_VERTICES,
        });
    }

    let mut neighbors = Vec::with_capacity(v);
    for i in 0..v {
        let mut row = BitSet::empty(v);
        for j in 0..v {
            if i != j && adj.get(i, j) {
                row.insert(j);
            }
        }
        neighbors.push(row);
    }

    let mut cliques = Vec::new();
    let mut current = Vec::new();
    expand(
        &neighbors,
        &mut current,
        BitSet::full(v),
        BitSet::empty(v),
        max_cliques,
        v,
        &mut cliques,
    )?;

    for c in &mut cliques {
        c.sort_unstable();
    }
    cliques.sort();
    Ok(CliqueSet {
        kind: CliqueKind::Row,
        cliques,
    })
}

fn expand(
    neighbors: &[BitSet],
    current: &mut Vec<usize>,
    mut candidates: BitSet,
    mut excluded: BitSet,
    max_cliques: usize,
    v: usize,
    out: &mut Vec<Vec<usize>>,
) -> Result<(), GraphError> {
    if candidates.is_empty() && excluded.is_empty() {
        if out.len() >= max_cliques {
            return Err(GraphError::CliqueExplosion {
                limit: max_cliques,
                vertices: v,
            });
        }
        out.push(current.clone());
        return Ok(());
    }

    // Pivot: candidate or excluded vertex covering the most candidates.
    let pivot = candidates
        .iter_ones()
        .chain(excluded.iter_ones())
        .max_by_key(|&u| neighbors[u].count_intersection(&candidates))
        .expect("candidate or excluded set is nonempty");

    let to_visit: Vec<usize> = candidates
        .iter_ones()
        .filter(|&u| !neighbors[pivot].contains(u))
        .collect();

    for u in to_visit {
        current.push(u);
        expand(
            neighbors,
            current,
            candidates.intersect(&neighbors[u]),
            excluded.intersect(&neighbors[u]),
            max_cliques,
            v,
            out,
        )?;
        current.pop();
        candidates.remove(u);
        excluded.insert(u);
    }
    Ok(())
}

/// Inverse of reconstruction: `bits[i][j] = 1` iff `i == j` or `i, j` co-occur
/// in some clique. Member ids must be `< v`.
pub fn adjacency_from_cliques(cliques: &CliqueSet, v: usize) -> AdjacencyMatrix {
    let mut m = AdjacencyMatrix::identity(v);
    for clique in &cliques.cliques {
        for (a, &i) in clique.iter().enumerate() {
            assert!(i < v, "clique member {i} out of range for v={v}");
            for &j in &clique[a + 1..] {
                m.set_edge(i, j, true);
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Independent oracle: checks every vertex subset for clique-ness and
    /// maximality. Exponential, fine for v <= 12.
    pub(crate) fn brute_force_maximal_cliques(adj: &AdjacencyMatrix) -> Vec<Vec<usize>> {
        let v = adj.vertex_count();
        assert!(v <= 20, "brute force only meant for tiny graphs");
        let is_clique = |mask: u32| -> bool {
            for i in 0..v {
                if mask >> i & 1 == 0 {
                    continue;
                }
                for j in i + 1..v {
                    if mask >> j & 1 == 1 && !adj.get(i, j) {
                        return false;
                    }
                }
            }
            true
        };
        let mut found = Vec::new();
        for mask in 1u32..1 << v {
            if !is_clique(mask) {
                continue;
            }
            // Maximal iff no outside vertex is adjacent to all members.
            let extendable = (0..v).any(|u| {
                mask >> u & 1 == 0
                    && (0..v).all(|i| mask >> i & 1 == 0 || adj.get(u, i))
            });
            if !extendable {
                let members: Vec<usize> = (0..v).filter(|&i| mask >> i & 1 == 1).collect();
                found.push(members);
            }
        }
        found.sort();
        found
    }

    pub(crate) fn random_symmetric_reflexive(v: usize, p: f64, rng: &mut impl Rng) -> AdjacencyMatrix {
        let mut m = AdjacencyMatrix::identity(v);
        for i in 0..v {
            for j in i + 1..v {
                if rng.random_bool(p) {
                    m.set_edge(i, j, true);
                }
            }
        }
        m
    }

    #[test]
    fn validate_accepts_identity_triple() {
        let t = AdjacencyTriple {
            cells: AdjacencyMatrix::identity(3),
            rows: AdjacencyMatrix::identity(3),
            cols: AdjacencyMatrix::identity(3),
        };
        assert!(t.validate().is_empty());
    }

    #[test]
    fn validate_reports_containment_violation() {
        let mut t = AdjacencyTriple {
            cells: AdjacencyMatrix::identity(3),
            rows: AdjacencyMatrix::identity(3),
            cols: AdjacencyMatrix::identity(3),
        };
        t.cells.set_edge(0, 1, true);
        t.cols.set_edge(0, 1, true);
        let violations = t.validate();
        assert_eq!(violations.len(), 2); // (0,1) and (1,0) both missing in rows
        assert!(violations.iter().all(|v| matches!(
            v,
            Violation::CellNotContained {
                matrix: MatrixKind::Rows,
                ..
            }
        )));
    }

    #[test]
    fn validate_reports_asymmetry() {
        let mut t = AdjacencyTriple {
            cells: AdjacencyMatrix::identity(3),
            rows: AdjacencyMatrix::identity(3),
            cols: AdjacencyMatrix::identity(3),
        };
        t.rows.set_raw(1, 2, true); // (2,1) left clear
        let violations = t.validate();
        assert_eq!(violations.len(), 1);
        assert_eq!(
            violations[0],
            Violation::Asymmetric {
                matrix: MatrixKind::Rows,
                i: 1,
                j: 2
            }
        );
    }

    #[test]
    fn validate_reports_missing_diagonal() {
        let mut t = AdjacencyTriple {
            cells: AdjacencyMatrix::identity(2),
            rows: AdjacencyMatrix::identity(2),
            cols: AdjacencyMatrix::identity(2),
        };
        t.cells.set_raw(1, 1, false);
        let violations = t.validate();
        assert_eq!(
            violations,
            vec![Violation::NotReflexive {
                matrix: MatrixKind::Cells,
                i: 1
            }]
        );
    }

    #[test]
    fn components_no_edges() {
        let set = connected_components(&AdjacencyMatrix::identity(3));
        assert_eq!(set.cliques, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(set.kind, CliqueKind::Cell);
    }

    #[test]
    fn components_single_edge() {
        let adj = AdjacencyMatrix::from_edges(3, &[(0, 1)]);
        assert_eq!(connected_components(&adj).cliques, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn components_chain_and_pair() {
        // Union-find by hand: {0,1,2} via (0,1),(1,2); {3,4} via (3,4).
        let adj = AdjacencyMatrix::from_edges(5, &[(0, 1), (1, 2), (3, 4)]);
        assert_eq!(
            connected_components(&adj).cliques,
            vec![vec![0, 1, 2], vec![3, 4]]
        );
    }

    #[test]
    fn components_form_partition() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let v = rng.random_range(1..=20);
            let adj = random_symmetric_reflexive(v, 0.2, &mut rng);
            let set = connected_components(&adj);
            let mut all: Vec<usize> = set.cliques.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..v).collect::<Vec<_>>(), "not a partition");
        }
    }

    #[test]
    fn cliques_merged_cell_pattern() {
        // Vertex 2 shares a row with both 0 and 1, which do not share one:
        // it must land in two cliques.
        let adj = AdjacencyMatrix::from_edges(3, &[(0, 2), (1, 2)]);
        let set = maximal_cliques(&adj).unwrap();
        assert_eq!(set.cliques, vec![vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn cliques_complete_graph() {
        let adj = AdjacencyMatrix::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(maximal_cliques(&adj).unwrap().cliques, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn cliques_two_disjoint_edges() {
        let adj = AdjacencyMatrix::from_edges(4, &[(0, 1), (2, 3)]);
        assert_eq!(
            maximal_cliques(&adj).unwrap().cliques,
            vec![vec![0, 1], vec![2, 3]]
        );
    }

    #[test]
    fn cliques_isolated_vertices_are_singletons() {
        let set = maximal_cliques(&AdjacencyMatrix::identity(3)).unwrap();
        assert_eq!(set.cliques, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn cliques_match_brute_force_on_random_graphs() {
        let mut rng = StdRng::seed_from_u64(7);
        for round in 0..60 {
            let v = rng.random_range(1..=10);
            let p = rng.random_range(0.1..0.9);
            let adj = random_symmetric_reflexive(v, p, &mut rng);
            let fast = maximal_cliques(&adj).unwrap();
            let slow = brute_force_maximal_cliques(&adj);
            assert_eq!(fast.cliques, slow, "mismatch in round {round} (v={v})");
        }
    }

    #[test]
    fn clique_guard_trips_on_dense_pathological_graph() {
        // Cocktail-party-style graph: complete minus a perfect matching has
        // 2^(v/2) maximal cliques.
        let v = 24;
        let mut adj = AdjacencyMatrix::identity(v);
        for i in 0..v {
            for j in i + 1..v {
                if j != i + v / 2 {
                    adj.set_edge(i, j, true);
                }
            }
        }
        match maximal_cliques(&adj) {
            Err(GraphError::CliqueExplosion { limit, vertices }) => {
                assert_eq!(limit, CLIQUE_GUARD_FACTOR * v);
                assert_eq!(vertices, v);
            }
            other => panic!("expected CliqueExplosion, got {other:?}"),
        }
    }

    #[test]
    fn adjacency_from_cliques_definition() {
        let set = CliqueSet {
            kind: CliqueKind::Row,
            cliques: vec![vec![0, 2], vec![1, 2]],
        };
        let m = adjacency_from_cliques(&set, 3);
        assert_eq!(m, AdjacencyMatrix::from_edges(3, &[(0, 2), (1, 2)]));

        let singletons = CliqueSet {
            kind: CliqueKind::Row,
            cliques: vec![vec![0], vec![1]],
        };
        assert_eq!(adjacency_from_cliques(&singletons, 2), AdjacencyMatrix::identity(2));
    }

    #[test]
    fn clique_round_trip_restores_adjacency() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..60 {
            let v = rng.random_range(1..=12);
            let adj = random_symmetric_reflexive(v, 0.4, &mut rng);
            let cliques = maximal_cliques(&adj).unwrap();
            assert_eq!(adjacency_from_cliques(&cliques, v), adj);
        }
    }
}
