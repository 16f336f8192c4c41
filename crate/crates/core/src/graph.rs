//! Per-learner similarity graphs and their spectral quantities.
//!
//! A learner's graph is built in three steps: a symmetric k-nearest-neighbor
//! edge pattern, a weighting kernel on that pattern, and [`LearnerGraph::assemble`]
//! which derives degree, Laplacian `L = D - W`, iteration matrix `P = D^-1 W`
//! and the eigendecomposition of `L` used for commute times and the teacher
//! covariance.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative cutoff under which a Laplacian eigenvalue counts as zero.
pub const ZERO_EIGENVALUE_CUTOFF: f64 = 1e-9;

/// Symmetric edge set without self-edges, stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePattern {
    neighbors: Vec<Vec<usize>>,
}

impl EdgePattern {
    /// Pattern from undirected edges; duplicates and self-edges are dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (i, j) in edges {
            if i != j {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Self { neighbors }
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Undirected edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }
}

fn squared_distance(features: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    features
        .row(i)
        .iter()
        .zip(features.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Euclidean k-nearest-neighbor pattern, symmetrized by union. Distance ties
/// go to the lower index.
pub fn knn_pattern(features: &DMatrix<f64>, k: usize) -> Result<EdgePattern> {
    let n = features.nrows();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if k >= n {
        return Err(Error::NeighborCount { k, n });
    }
    let mut edges = Vec::with_capacity(n * k);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        candidates.clear();
        candidates.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(features, i, j), j)),
        );
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        edges.extend(candidates.iter().take(k).map(|&(_, j)| (i, j)));
    }
    Ok(EdgePattern::from_edges(n, edges))
}

/// Heat-kernel weights `exp(-|xi - xj|^2 / (2 sigma^2))` on pattern edges,
/// zero elsewhere, zero diagonal.
pub fn gaussian_weights(
    pattern: &EdgePattern,
    features: &DMatrix<f64>,
    sigma: f64,
) -> DMatrix<f64> {
    assert!(sigma > 0.0, "kernel width must be positive");
    let n = pattern.node_count();
    let denom = 2.0 * sigma * sigma;
    let mut w = DMatrix::zeros(n, n);
    for (i, j) in pattern.edges() {
        let v = (-squared_distance(features, i, j) / denom).exp();
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    w
}

/// Gaussian weights plus a self-loop on every node proportional to its
/// strongest edge: `W_ii = self_loop * max_j W_ij`. Isolated nodes get a
/// self-loop of `self_loop` so they keep a positive degree.
pub fn flap_style_weights(
    pattern: &EdgePattern,
    features: &DMatrix<f64>,
    sigma: f64,
    self_loop: f64,
) -> DMatrix<f64> {
    assert!(self_loop >= 0.0, "self-loop weight must be nonnegative");
    let mut w = gaussian_weights(pattern, features, sigma);
    for i in 0..w.nrows() {
        let strongest = w.row(i).iter().copied().fold(0.0_f64, f64::max);
        let base = if pattern.neighbors(i).is_empty() {
            1.0
        } else {
            strongest
        };
        w[(i, i)] = self_loop * base;
    }
    w
}

/// How a learner weights its kNN pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// Harmonic-function style: plain heat kernel, no self-loops.
    Gaussian,
    /// Heat kernel with proportional self-loops.
    FlapStyle { self_loop: f64 },
}

impl Kernel {
    pub fn weights(
        &self,
        pattern: &EdgePattern,
        features: &DMatrix<f64>,
        sigma: f64,
    ) -> DMatrix<f64> {
        match *self {
            Kernel::Gaussian => gaussian_weights(pattern, features, sigma),
            Kernel::FlapStyle { self_loop } => {
                flap_style_weights(pattern, features, sigma, self_loop)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Gaussian => "hf",
            Kernel::FlapStyle { .. } => "flap",
        }
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending, eigenvectors
/// stored as matching columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn of_symmetric(m: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(m.clone());
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Self { values, vectors }
    }

    pub fn largest(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `1 / lambda` for nonzero eigenvalues, `0` for those under the
    /// relative cutoff.
    pub fn pseudo_reciprocals(&self) -> DVector<f64> {
        let cutoff = ZERO_EIGENVALUE_CUTOFF * self.largest().max(0.0);
        self.values.map(|lambda| {
            if lambda <= 0.0 || lambda < cutoff {
                0.0
            } else {
                1.0 / lambda
            }
        })
    }
}

/// One learner's graph and everything derived from it.
#[derive(Debug, Clone)]
pub struct LearnerGraph {
    pub adjacency: DMatrix<f64>,
    pub degree: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    pub iteration: DMatrix<f64>,
    pub spectrum: Spectrum,
    reciprocals: DVector<f64>,
}

impl LearnerGraph {
    /// Derives degree, Laplacian, iteration matrix and spectrum from a
    /// symmetric nonnegative adjacency with positive row sums.
    pub fn assemble(adjacency: DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 || adjacency.ncols() != n {
            return Err(Error::Shape(format!(
                "adjacency must be square and nonempty, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = adjacency[(i, j)];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "adjacency entry ({i}, {j}) = {v} is not a finite nonnegative weight"
                    )));
                }
                if j > i && (v - adjacency[(j, i)]).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let degree = DVector::from_iterator(n, adjacency.row_iter().map(|r| r.sum()));
        if let Some(node) = degree.iter().position(|&d| d <= 0.0) {
            return Err(Error::IsolatedNode { node });
        }
        let laplacian = DMatrix::from_diagonal(&degree) - &adjacency;
        let mut iteration = adjacency.clone();
        for (i, mut row) in iteration.row_iter_mut().enumerate() {
            row /= degree[i];
        }
        let spectrum = Spectrum::of_symmetric(&laplacian);
        let reciprocals = spectrum.pseudo_reciprocals();
        Ok(Self {
            adjacency,
            degree,
            laplacian,
            iteration,
            spectrum,
            reciprocals,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.adjacency[(i, j)] > 0.0
    }

    /// Spectral commute time `sum_k h(lambda_k) (u_ki - u_kj)^2`.
    pub fn commute_time(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let u = &self.spectrum.vectors;
        self.reciprocals
            .iter()
            .enumerate()
            .map(|(k, &h)| {
                let diff = u[(i, k)] - u[(j, k)];
                h * diff * diff
            })
            .sum()
    }

    /// All pairwise commute times, via the spectral pseudoinverse
    /// `K = U h(Lambda) U^T` and `T_ij = K_ii + K_jj - 2 K_ij`.
    pub fn commute_table(&self) -> DMatrix<f64> {
        let u = &self.spectrum.vectors;
        let mut scaled = u.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.reciprocals[k];
        }
        let pinv = &scaled * u.transpose();
        let n = self.node_count();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                (pinv[(i, i)] + pinv[(j, j)] - 2.0 * pinv[(i, j)]).max(0.0)
            }
        })
    }
}

/// Writes the upper triangle (diagonal included) of a weight matrix as
/// `i j w` lines, skipping zero weights.
pub fn write_edge_list<W: Write>(adjacency: &DMatrix<f64>, mut out: W) -> std::io::Result<()> {
    let n = adjacency.nrows();
    for i in 0..n {
        for j in i..n {
            let w = adjacency[(i, j)];
            if w != 0.0 {
                writeln!(out, "{i} {j} {w}")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn line(points: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(points.len(), 1, points)
    }

    #[test]
    fn knn_collinear() {
        let p = knn_pattern(&line(&[0.0, 1.0, 10.0]), 1).unwrap();
        assert_eq!(p.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn knn_full_is_complete() {
        let p = knn_pattern(&line(&[0.0, 3.0, 4.0, 9.0]), 3).unwrap();
        assert_eq!(p.edge_count(), 6);
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        // Nodes 0, 1 and 2 coincide and node 3 is equidistant from all of
        // them, so every node picks the lowest other index.
        let p = knn_pattern(&line(&[0.0, 0.0, 0.0, 5.0]), 1).unwrap();
        assert_eq!(p.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn knn_rejects_large_k() {
        assert!(matches!(
            knn_pattern(&line(&[0.0, 1.0]), 2),
            Err(Error::NeighborCount { k: 2, n: 2 })
        ));
    }

    #[test]
    fn gaussian_kernel_values() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let p = EdgePattern::from_edges(3, [(0, 1), (0, 2)]);
        let w = gaussian_weights(&p, &x, 1.0);
        assert!(close(w[(0, 1)], (-1.0_f64).exp(), 1e-15));
        assert!(close(w[(0, 1)], 0.36787944117144233, 1e-15));
        assert_eq!(w[(0, 2)], 1.0);
        assert_eq!(w[(1, 2)], 0.0);
        assert_eq!(w[(0, 0)], 0.0);
        assert_eq!(w, w.transpose());
    }

    #[test]
    fn flap_reduces_to_gaussian_without_self_loops() {
        let x = line(&[0.0, 0.5, 2.0, 2.2]);
        let p = knn_pattern(&x, 1).unwrap();
        assert_eq!(
            flap_style_weights(&p, &x, 1.0, 0.0),
            gaussian_weights(&p, &x, 1.0)
        );
    }

    #[test]
    fn flap_two_nodes() {
        let x = line(&[0.0, 1.0]);
        let p = EdgePattern::from_edges(2, [(0, 1)]);
        let w = flap_style_weights(&p, &x, 1.0, 1.0);
        let e = (-0.5_f64).exp();
        for v in w.iter() {
            assert!(close(*v, e, 1e-15));
        }
    }

    #[test]
    fn flap_isolated_nodes_get_diagonal() {
        let x = line(&[0.0, 1.0, 2.0]);
        let p = EdgePattern::from_edges(3, []);
        let w = flap_style_weights(&p, &x, 1.0, 0.7);
        assert_eq!(w, DMatrix::from_diagonal_element(3, 3, 0.7));
    }

    #[test]
    fn assemble_two_nodes() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let g = LearnerGraph::assemble(w.clone()).unwrap();
        assert_eq!(
            g.laplacian,
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        assert_eq!(g.iteration, w);
        assert!(g.spectrum.values[0].abs() < 1e-12);
        assert!((g.spectrum.values[1] - 2.0).abs() < 1e-12);
        assert!((g.commute_time(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(g.commute_time(1, 1), 0.0);
    }

    #[test]
    fn assemble_rejects_isolated() {
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            LearnerGraph::assemble(w),
            Err(Error::IsolatedNode { node: 2 })
        ));
    }

    #[test]
    fn assemble_rejects_asymmetric() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(LearnerGraph::assemble(w).is_err());
    }

    #[test]
    fn edge_list_format() {
        let w = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, 0.0]);
        let mut buf = Vec::new();
        write_edge_list(&w, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 0 0.5\n0 1 1\n");
    }
}
