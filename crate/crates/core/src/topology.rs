//! Clustered network topology and combination weights.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Undirected network whose nodes are partitioned into clusters.
///
/// Self-loops are implicit: every node is its own neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredTopology {
    cluster_of: Vec<usize>,
    n_clusters: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl ClusteredTopology {
    /// `cluster_of[k]` is an arbitrary label; labels are renumbered densely
    /// in increasing label order. Self-loop and duplicate edges are dropped.
    pub fn new<E>(cluster_of: &[usize], edges: E) -> Result<Self>
    where
        E: IntoIterator<Item = (usize, usize)>,
    {
        let n = cluster_of.len();
        if n == 0 {
            return Err(Error::InvalidInput("topology has no nodes".into()));
        }
        let labels: BTreeSet<usize> = cluster_of.iter().copied().collect();
        let dense: Vec<usize> = cluster_of
            .iter()
            .map(|l| labels.range(..l).count())
            .collect();

        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(Self {
            cluster_of: dense,
            n_clusters: labels.len(),
            edges: set,
            adjacency,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn cluster_of(&self, k: usize) -> usize {
        self.cluster_of[k]
    }

    pub fn clusters(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a == b || self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn cluster_members(&self, q: usize) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&k| self.cluster_of[k] == q)
            .collect()
    }

    /// 𝓝ₖ, including `k`, ascending.
    pub fn neighbors(&self, k: usize) -> Vec<usize> {
        let mut out = self.adjacency[k].clone();
        let pos = out.partition_point(|&x| x < k);
        out.insert(pos, k);
        out
    }

    /// 𝓝ₖ⁻, excluding `k`.
    pub fn strict_neighbors(&self, k: usize) -> &[usize] {
        &self.adjacency[k]
    }

    /// 𝓝ₖ ∩ 𝓒(k), including `k`.
    pub fn intra_neighbors(&self, k: usize) -> Vec<usize> {
        let q = self.cluster_of[k];
        self.neighbors(k)
            .into_iter()
            .filter(|&l| self.cluster_of[l] == q)
            .collect()
    }

    /// 𝓝ₖ \ 𝓒(k).
    pub fn extra_neighbors(&self, k: usize) -> Vec<usize> {
        let q = self.cluster_of[k];
        self.adjacency[k]
            .iter()
            .copied()
            .filter(|&l| self.cluster_of[l] != q)
            .collect()
    }

    /// Whether the subgraph induced by cluster `q` is connected.
    pub fn is_cluster_connected(&self, q: usize) -> bool {
        let members = self.cluster_members(q);
        if members.is_empty() {
            return false;
        }
        let mut parent: Vec<usize> = (0..self.n_nodes()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(a, b) in &self.edges {
            if self.cluster_of[a] == q && self.cluster_of[b] == q {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
        let root = find(&mut parent, members[0]);
        members.iter().all(|&k| find(&mut parent, k) == root)
    }
}

/// Intra-cluster combination matrices and inter-cluster regularization weights.
///
/// Entries are indexed `[(ℓ, k)]` for `c` and `a` (so `c` has unit row sums,
/// `a` unit column sums) and `[(k, ℓ)]` for `rho` and `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationWeights {
    pub c: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub rho: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

impl CombinationWeights {
    /// Assembles weights, deriving the symmetric `p = (ρ + ρᵀ)/2`.
    pub fn new(c: DMatrix<f64>, a: DMatrix<f64>, rho: DMatrix<f64>) -> Self {
        let p = symmetrize(&rho);
        Self { c, a, rho, p }
    }

    pub fn n_nodes(&self) -> usize {
        self.a.ncols()
    }

    /// Same regularization weights with `A = C = I` (no intra-cluster cooperation).
    pub fn without_combination(&self) -> Self {
        let n = self.n_nodes();
        Self {
            c: DMatrix::identity(n, n),
            a: DMatrix::identity(n, n),
            rho: self.rho.clone(),
            p: self.p.clone(),
        }
    }

    /// `sₖ = Σ_ℓ p_kℓ`.
    pub fn regularization_mass(&self, k: usize) -> f64 {
        self.p.row(k).sum()
    }
}

pub fn symmetrize(rho: &DMatrix<f64>) -> DMatrix<f64> {
    (rho + rho.transpose()) * 0.5
}

/// Averaging rules: `c_ℓk = 1/|𝓝_ℓ∩𝓒(ℓ)|`, `a_ℓk = 1/|𝓝ₖ∩𝓒(k)|`, `ρ_kℓ = 1/|𝓝ₖ\𝓒(k)|`.
pub fn uniform_weights(topo: &ClusteredTopology) -> CombinationWeights {
    let n = topo.n_nodes();
    let mut c = DMatrix::zeros(n, n);
    let mut a = DMatrix::zeros(n, n);
    let mut rho = DMatrix::zeros(n, n);
    for k in 0..n {
        let intra = topo.intra_neighbors(k);
        let w = 1.0 / intra.len() as f64;
        for &l in &intra {
            // row k of C and column k of A
            c[(k, l)] = w;
            a[(l, k)] = w;
        }
        let extra = topo.extra_neighbors(k);
        if !extra.is_empty() {
            let w = 1.0 / extra.len() as f64;
            for &l in &extra {
                rho[(k, l)] = w;
            }
        }
    }
    CombinationWeights::new(c, a, rho)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimensionMismatch {
        matrix: &'static str,
        rows: usize,
        cols: usize,
    },
    NegativeEntry {
        matrix: &'static str,
        row: usize,
        col: usize,
    },
    /// Row `ℓ` of C does not sum to one.
    RowStochasticityViolation(usize),
    /// Column `k` of A does not sum to one.
    ColumnStochasticityViolation(usize),
    /// Nonzero combination weight outside 𝓝∩𝓒.
    CombinationSupportViolation {
        matrix: &'static str,
        row: usize,
        col: usize,
    },
    /// Nonzero ρ_kℓ with ℓ ∉ 𝓝ₖ\𝓒(k).
    RegularizerSupportViolation(usize, usize),
    AsymmetricP(usize, usize),
    ClusterDisconnected(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { matrix, rows, cols } => {
                write!(
                    f,
                    "{matrix} is {rows}x{cols}, expected square of network size"
                )
            }
            Violation::NegativeEntry { matrix, row, col } => {
                write!(f, "{matrix}[{row},{col}] is negative")
            }
            Violation::RowStochasticityViolation(l) => write!(f, "row {l} of C does not sum to 1"),
            Violation::ColumnStochasticityViolation(k) => {
                write!(f, "column {k} of A does not sum to 1")
            }
            Violation::CombinationSupportViolation { matrix, row, col } => write!(
                f,
                "{matrix}[{row},{col}] is nonzero but the nodes are not intra-cluster neighbors"
            ),
            Violation::RegularizerSupportViolation(k, l) => write!(
                f,
                "rho[{k},{l}] is nonzero but node {l} is not an extra-cluster neighbor of {k}"
            ),
            Violation::AsymmetricP(k, l) => write!(f, "p[{k},{l}] != p[{l},{k}]"),
            Violation::ClusterDisconnected(q) => write!(f, "cluster {q} is not connected"),
        }
    }
}

const SUM_TOL: f64 = 1e-9;

/// All broken invariants of `topo` and `weights`; empty when everything holds.
pub fn validate(topo: &ClusteredTopology, weights: &CombinationWeights) -> Vec<Violation> {
    let n = topo.n_nodes();
    let mut out = Vec::new();

    for q in 0..topo.n_clusters() {
        if !topo.is_cluster_connected(q) {
            out.push(Violation::ClusterDisconnected(q));
        }
    }

    let named = [
        ("C", &weights.c),
        ("A", &weights.a),
        ("rho", &weights.rho),
        ("p", &weights.p),
    ];
    let mut square = true;
    for (name, m) in named {
        if m.nrows() != n || m.ncols() != n {
            out.push(Violation::DimensionMismatch {
                matrix: name,
                rows: m.nrows(),
                cols: m.ncols(),
            });
            square = false;
        }
    }
    if !square {
        return out;
    }

    for (name, m) in named {
        for row in 0..n {
            for col in 0..n {
                if m[(row, col)] < 0.0 || m[(row, col)].is_nan() {
                    out.push(Violation::NegativeEntry {
                        matrix: name,
                        row,
                        col,
                    });
                }
            }
        }
    }

    let intra =
        |x: usize, y: usize| topo.has_edge(x, y) && topo.cluster_of(x) == topo.cluster_of(y);
    for l in 0..n {
        if (weights.c.row(l).sum() - 1.0).abs() > SUM_TOL {
            out.push(Violation::RowStochasticityViolation(l));
        }
        for k in 0..n {
            if weights.c[(l, k)] != 0.0 && !intra(l, k) {
                out.push(Violation::CombinationSupportViolation {
                    matrix: "C",
                    row: l,
                    col: k,
                });
            }
        }
    }
    for k in 0..n {
        if (weights.a.column(k).sum() - 1.0).abs() > SUM_TOL {
            out.push(Violation::ColumnStochasticityViolation(k));
        }
        for l in 0..n {
            if weights.a[(l, k)] != 0.0 && !intra(l, k) {
                out.push(Violation::CombinationSupportViolation {
                    matrix: "A",
                    row: l,
                    col: k,
                });
            }
        }
    }
    for k in 0..n {
        for l in 0..n {
            let extra = k != l && topo.has_edge(k, l) && topo.cluster_of(k) != topo.cluster_of(l);
            if weights.rho[(k, l)] != 0.0 && !extra {
                out.push(Violation::RegularizerSupportViolation(k, l));
            }
            if l > k && weights.p[(k, l)] != weights.p[(l, k)] {
                out.push(Violation::AsymmetricP(k, l));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn path_two_clusters() -> ClusteredTopology {
        // 0-1-2 | 3-4, bridge 2-3
        ClusteredTopology::new(&[0, 0, 0, 1, 1], [(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap()
    }

    #[test]
    fn neighborhoods() {
        let t = path_two_clusters();
        assert_eq!(t.neighbors(2), vec![1, 2, 3]);
        assert_eq!(t.strict_neighbors(2), &[1, 3]);
        assert_eq!(t.intra_neighbors(2), vec![1, 2]);
        assert_eq!(t.extra_neighbors(2), vec![3]);
        assert!(t.extra_neighbors(0).is_empty());
    }

    #[test]
    fn labels_normalized() {
        let t = ClusteredTopology::new(&[7, 7, 3], [(0, 1), (1, 2)]).unwrap();
        assert_eq!(t.clusters(), &[1, 1, 0]);
        assert_eq!(t.n_clusters(), 2);
    }

    #[test]
    fn edge_out_of_range_rejected() {
        assert!(ClusteredTopology::new(&[0, 0], [(0, 2)]).is_err());
    }

    #[test]
    fn uniform_isolated_node() {
        let t = ClusteredTopology::new(&[0], []).unwrap();
        let w = uniform_weights(&t);
        assert_eq!(w.c, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(w.a, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(w.rho, DMatrix::zeros(1, 1));
        assert_eq!(w.p, DMatrix::zeros(1, 1));
    }

    #[test]
    fn uniform_two_node_clique() {
        let t = ClusteredTopology::new(&[0, 0], [(0, 1)]).unwrap();
        let w = uniform_weights(&t);
        let half = DMatrix::from_element(2, 2, 0.5);
        assert_eq!(w.a, half);
        assert_eq!(w.c, half);
    }

    #[test]
    fn uniform_two_clusters_one_edge() {
        let t = ClusteredTopology::new(&[0, 1], [(0, 1)]).unwrap();
        let w = uniform_weights(&t);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(w.rho, swap);
        assert_eq!(w.p, swap);
        assert_eq!(w.a, DMatrix::identity(2, 2));
        assert_eq!(w.c, DMatrix::identity(2, 2));
    }

    #[test]
    fn validate_reports_violations() {
        let t = path_two_clusters();
        let w = uniform_weights(&t);
        assert!(validate(&t, &w).is_empty());

        let mut bad = w.clone();
        bad.a[(1, 2)] -= 0.1;
        assert_eq!(
            validate(&t, &bad),
            vec![Violation::ColumnStochasticityViolation(2)]
        );

        let mut bad = w.clone();
        bad.rho[(0, 1)] = 0.3;
        bad.p = symmetrize(&bad.rho);
        assert_eq!(
            validate(&t, &bad),
            vec![Violation::RegularizerSupportViolation(0, 1)]
        );

        let mut bad = w.clone();
        bad.p[(2, 3)] = 0.7;
        assert_eq!(validate(&t, &bad), vec![Violation::AsymmetricP(2, 3)]);
    }

    #[test]
    fn disconnected_cluster_flagged() {
        let t = ClusteredTopology::new(&[0, 1, 0], [(0, 1), (1, 2)]).unwrap();
        let v = validate(&t, &uniform_weights(&t));
        assert!(v.contains(&Violation::ClusterDisconnected(0)));
    }

    fn bfs_connected(n: usize, labels: &[usize], edges: &[(usize, usize)], q: usize) -> bool {
        let members: Vec<usize> = (0..n).filter(|&k| labels[k] == q).collect();
        if members.is_empty() {
            return false;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([members[0]]);
        seen[members[0]] = true;
        while let Some(x) = queue.pop_front() {
            for &(a, b) in edges {
                for (u, v) in [(a, b), (b, a)] {
                    if u == x && labels[v] == q && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        members.iter().all(|&k| seen[k])
    }

    fn random_graph() -> impl Strategy<Value = (Vec<usize>, Vec<(usize, usize)>)> {
        (2usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(0usize..3, n),
                prop::collection::vec((0..n, 0..n), 0..2 * n),
            )
        })
    }

    proptest! {
        #[test]
        fn connectivity_matches_bfs((labels, edges) in random_graph()) {
            let t = ClusteredTopology::new(&labels, edges.iter().copied()).unwrap();
            let mut sorted: Vec<usize> = labels.clone();
            sorted.sort_unstable();
            sorted.dedup();
            for (q, label) in sorted.iter().enumerate() {
                prop_assert_eq!(
                    t.is_cluster_connected(q),
                    bfs_connected(labels.len(), &labels, &edges, *label)
                );
            }
        }

        #[test]
        fn uniform_weights_always_valid((labels, edges) in random_graph()) {
            let t = ClusteredTopology::new(&labels, edges.iter().copied()).unwrap();
            let v: Vec<_> = validate(&t, &uniform_weights(&t))
                .into_iter()
                .filter(|v| !matches!(v, Violation::ClusterDisconnected(_)))
                .collect();
            prop_assert!(v.is_empty(), "{v:?}");
        }

        #[test]
        fn p_symmetric_for_any_rho(entries in prop::collection::vec(0.0f64..3.0, 16)) {
            let rho = DMatrix::from_vec(4, 4, entries);
            let p = symmetrize(&rho);
            prop_assert_eq!(p.clone(), p.transpose());
        }
    }
}
