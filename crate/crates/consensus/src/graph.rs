//! Undirected communication graphs and their Laplacian spectra.
//!
//! A [`Graph`] describes how agents sense each other: `n` follower nodes,
//! weighted undirected edges among them, and optionally a set of
//! `leader_links` marking which followers also sense a distinguished external
//! leader node. The consensus protocols consume only two spectral quantities:
//! the algebraic connectivity λ₂ (leaderless runs) and the smallest eigenvalue
//! of the pinned follower block ℒ₁ (leader-follower runs).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Weighted undirected graph over `n` follower nodes, with optional links
/// from followers to an external leader.
///
/// Serialized form: `{ "n": 6, "edges": [[0,1], [1,2], ...],
/// "leader_links": [0, 3] }`. Edge weights default to 1; a parallel
/// `"weights"` array overrides them entry by entry.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_links: Option<Vec<usize>>,
}

impl Graph {
    /// Unweighted graph without a leader.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Self {
        Self { n, edges, weights: None, leader_links: None }
    }

    /// Unweighted graph with links from the listed followers to a leader.
    pub fn with_leader(n: usize, edges: Vec<(usize, usize)>, leader_links: Vec<usize>) -> Self {
        Self { n, edges, weights: None, leader_links: Some(leader_links) }
    }

    /// Ring over n nodes: i connected to (i+1) mod n.
    pub fn ring(n: usize) -> Self {
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)).collect())
    }

    /// Check index ranges, self loops, and weight vector length.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("graph has no nodes".into()));
        }
        for &(i, j) in &self.edges {
            if i >= self.n || j >= self.n {
                return Err(Error::InvalidInput(format!(
                    "edge ({i},{j}) out of range for n = {}",
                    self.n
                )));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self loop at node {i}")));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.edges.len() {
                return Err(Error::InvalidInput(
                    "weights length differs from edge count".into(),
                ));
            }
            if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::InvalidInput("edge weights must be nonnegative".into()));
            }
        }
        if let Some(links) = &self.leader_links {
            if links.iter().any(|&i| i >= self.n) {
                return Err(Error::InvalidInput("leader link out of range".into()));
            }
        }
        Ok(())
    }

    fn edge_weight(&self, idx: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[idx])
    }

    /// True when every node can reach every other through follower edges.
    /// Checked by traversal, not spectrally, so there is no tolerance to tune.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); self.n];
        for (idx, &(i, j)) in self.edges.iter().enumerate() {
            if self.edge_weight(idx) > 0.0 {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        reachable_count(&adj, 0) == self.n
    }

    /// True when every follower is reachable from the leader through leader
    /// links plus follower edges (the pinned block ℒ₁ is positive definite
    /// exactly in this case).
    pub fn leader_rooted(&self) -> bool {
        let links = match &self.leader_links {
            Some(l) if !l.is_empty() => l,
            _ => return false,
        };
        let mut adj = vec![Vec::new(); self.n + 1];
        let leader = self.n;
        for &i in links {
            adj[leader].push(i);
            adj[i].push(leader);
        }
        for (idx, &(i, j)) in self.edges.iter().enumerate() {
            if self.edge_weight(idx) > 0.0 {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        reachable_count(&adj, leader) == self.n + 1
    }
}

fn reachable_count(adj: &[Vec<usize>], start: usize) -> usize {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count
}

/// Graph Laplacian L = D - W over the follower nodes (leader links excluded).
///
/// Row sums are zero and L is symmetric positive semidefinite.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let mut l = DMatrix::<f64>::zeros(g.n, g.n);
    for (idx, &(i, j)) in g.edges.iter().enumerate() {
        let w = g.edge_weight(idx);
        l[(i, i)] += w;
        l[(j, j)] += w;
        l[(i, j)] -= w;
        l[(j, i)] -= w;
    }
    l
}

/// Sorted spectrum of a symmetric Laplacian-like matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianSpectrum {
    /// Eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    /// Smallest eigenvalue (0 for a true Laplacian, positive for ℒ₁).
    pub lambda_min: f64,
    /// Second-smallest eigenvalue; the algebraic connectivity of a Laplacian.
    pub lambda2: f64,
    /// Largest eigenvalue.
    pub lambda_max: f64,
}

/// Eigen-decompose a symmetric matrix into a [`LaplacianSpectrum`].
///
/// Rejects asymmetric input instead of silently symmetrizing, since an
/// asymmetric "Laplacian" means the graph construction itself went wrong.
pub fn spectrum(l: &DMatrix<f64>) -> Result<LaplacianSpectrum> {
    linalg::check_symmetric(l)?;
    let vals = linalg::sym_eigenvalues(l);
    let eigenvalues: Vec<f64> = vals.iter().copied().collect();
    let lambda_min = eigenvalues[0];
    let lambda2 = if eigenvalues.len() > 1 { eigenvalues[1] } else { eigenvalues[0] };
    let lambda_max = *eigenvalues.last().unwrap();
    Ok(LaplacianSpectrum { eigenvalues, lambda_min, lambda2, lambda_max })
}

/// Split a leader-follower graph into the pinned follower block ℒ₁ and the
/// leader coupling column ℒ₂.
///
/// With G = diag(leader link weights), ℒ₁ = L + G and ℒ₂ = -G·1, so each row
/// of [ℒ₁ | ℒ₂] sums to zero like a Laplacian row of the extended graph.
pub fn leader_follower_partition(g: &Graph) -> Result<(DMatrix<f64>, DVector<f64>)> {
    g.validate()?;
    let links = g
        .leader_links
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("graph has no leader links".into()))?;
    let mut l1 = laplacian(g);
    let mut l2 = DVector::<f64>::zeros(g.n);
    for &i in links {
        l1[(i, i)] += 1.0;
        l2[i] -= 1.0;
    }
    Ok((l1, l2))
}

/// Projector M = I - (1/N)·11ᵀ that removes the network average.
///
/// M is symmetric, M·1 = 0, M² = M, and its spectrum is {0, 1^(N-1)}.
pub fn centering_projector(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::from_element(n, n, -1.0 / n as f64);
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn complete(n: usize) -> Graph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Graph::new(n, edges)
    }

    #[test]
    fn single_edge_laplacian() {
        let l = laplacian(&Graph::new(2, vec![(0, 1)]));
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn complete_graph_connectivity() {
        let s = spectrum(&laplacian(&complete(2))).unwrap();
        assert_abs_diff_eq!(s.lambda2, 2.0, epsilon = 1e-12);
        let s = spectrum(&laplacian(&complete(3))).unwrap();
        assert_abs_diff_eq!(s.lambda2, 3.0, epsilon = 1e-12);
        let s = spectrum(&laplacian(&complete(6))).unwrap();
        assert_abs_diff_eq!(s.lambda2, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn path3_spectrum() {
        // Characteristic polynomial factors as lambda(lambda-1)(lambda-3).
        let g = Graph::new(3, vec![(0, 1), (1, 2)]);
        let s = spectrum(&laplacian(&g)).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.lambda2, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.lambda_max, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ring6_spectrum() {
        let s = spectrum(&laplacian(&Graph::ring(6))).unwrap();
        let want = [0.0, 1.0, 1.0, 3.0, 3.0, 4.0];
        for (got, w) in s.eigenvalues.iter().zip(want.iter()) {
            assert_abs_diff_eq!(*got, *w, epsilon = 1e-10);
        }
    }

    #[test]
    fn laplacian_row_sums_vanish() {
        let g = Graph::ring(6);
        let l = laplacian(&g);
        for i in 0..6 {
            assert_abs_diff_eq!(l.row(i).sum(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn weighted_edges_scale_entries() {
        let g = Graph {
            n: 2,
            edges: vec![(0, 1)],
            weights: Some(vec![2.5]),
            leader_links: None,
        };
        let l = laplacian(&g);
        assert_abs_diff_eq!(l[(0, 0)], 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(0, 1)], -2.5, epsilon = 1e-15);
    }

    #[test]
    fn connectivity_by_traversal() {
        assert!(Graph::ring(6).is_connected());
        // Two disjoint edges.
        let g = Graph::new(4, vec![(0, 1), (2, 3)]);
        assert!(!g.is_connected());
        let s = spectrum(&laplacian(&g)).unwrap();
        assert!(s.lambda2.abs() < 1e-10);
    }

    #[test]
    fn two_follower_partition() {
        // Followers joined by an edge; only follower 0 senses the leader.
        let g = Graph::with_leader(2, vec![(0, 1)], vec![0]);
        let (l1, l2) = leader_follower_partition(&g).unwrap();
        assert_eq!(l1, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
        assert_eq!(l2, DVector::from_column_slice(&[-1.0, 0.0]));
        let s = spectrum(&l1).unwrap();
        // Eigenvalues are (3 +- sqrt(5))/2.
        assert_abs_diff_eq!(s.lambda_min, (3.0 - 5.0f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert!(g.leader_rooted());
    }

    #[test]
    fn ring6_pinned_block() {
        let g = Graph::with_leader(6, Graph::ring(6).edges, vec![0, 3]);
        let (l1, _) = leader_follower_partition(&g).unwrap();
        let s = spectrum(&l1).unwrap();
        assert_abs_diff_eq!(s.lambda_min, 0.26794919243112236, epsilon = 1e-12);
        assert!(g.leader_rooted());
    }

    #[test]
    fn unreached_follower_breaks_rooting() {
        // Follower 2 is isolated from both the leader and the others.
        let g = Graph::with_leader(3, vec![(0, 1)], vec![0]);
        assert!(!g.leader_rooted());
        let (l1, _) = leader_follower_partition(&g).unwrap();
        let s = spectrum(&l1).unwrap();
        assert!(s.lambda_min.abs() < 1e-10);
    }

    #[test]
    fn centering_projector_properties() {
        let m = centering_projector(2);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
        let m1 = centering_projector(1);
        assert_abs_diff_eq!(m1[(0, 0)], 0.0, epsilon = 1e-15);

        let m = centering_projector(5);
        let ones = DVector::from_element(5, 1.0);
        assert!((&m * ones).norm() < 1e-14);
        assert!(linalg::frobenius(&(&m * &m - &m)) < 1e-14);
        let vals = linalg::sym_eigenvalues(&m);
        assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-12);
        for k in 1..5 {
            assert_abs_diff_eq!(vals[k], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn validation_rejects_bad_input() {
        assert!(Graph::new(2, vec![(0, 2)]).validate().is_err());
        assert!(Graph::new(2, vec![(1, 1)]).validate().is_err());
        assert!(Graph::with_leader(2, vec![(0, 1)], vec![5]).validate().is_err());
        let g = Graph {
            n: 2,
            edges: vec![(0, 1)],
            weights: Some(vec![1.0, 2.0]),
            leader_links: None,
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn graph_json_round_trip() {
        let g = Graph::with_leader(6, Graph::ring(6).edges, vec![0, 3]);
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"leader_links\":[0,3]"));
        let back: Graph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        // Leaderless JSON omits the optional keys entirely.
        let s = serde_json::to_string(&Graph::ring(3)).unwrap();
        assert!(!s.contains("leader_links"));
        let parsed: Graph = serde_json::from_str(r#"{"n":2,"edges":[[0,1]]}"#).unwrap();
        assert_eq!(parsed, Graph::new(2, vec![(0, 1)]));
    }
}
