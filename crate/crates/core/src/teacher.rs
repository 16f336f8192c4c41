//! Gaussian-process teachers.
//!
//! A teacher scores the difficulty of frontier candidates for its learner
//! from two ingredients: the conditional covariance of candidate labels
//! given the labeled set under `y ~ N(0, (L + I/kappa2)^-1)` (reliability),
//! and the gap between the candidate's two smallest class-average commute
//! times (discriminability). Both are folded into the teaching matrix `R`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::graph::LearnerGraph;

pub const DEFAULT_KAPPA2: f64 = 100.0;

/// Smallest admissible discriminability gap; keeps `1/g` finite on ties.
pub const GAP_FLOOR: f64 = 1e-8;

/// Condition-number estimate above which the labeled covariance block is
/// regularized before inversion.
const MAX_CONDITION: f64 = 1e12;

/// Graph covariance `(L + I/kappa2)^-1`, evaluated through the Laplacian
/// eigendecomposition.
pub fn covariance(graph: &LearnerGraph, kappa2: f64) -> Result<DMatrix<f64>> {
    if !(kappa2 > 0.0 && kappa2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "kappa2 must be positive, got {kappa2}"
        )));
    }
    let ridge = 1.0 / kappa2;
    let u = &graph.spectrum.vectors;
    let mut scaled = u.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let shifted = graph.spectrum.values[k].max(0.0) + ridge;
        if shifted <= 0.0 || !shifted.is_finite() {
            return Err(Error::Singular);
        }
        col /= shifted;
    }
    let sigma = &scaled * u.transpose();
    Ok(symmetrize(sigma))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Unlabeled nodes adjacent to the labeled set on any learner's graph,
/// ascending. Falls back to every unlabeled node when no unlabeled node
/// touches the labeled set.
pub fn candidate_set(
    graphs: &[&LearnerGraph],
    labeled: &[usize],
    unlabeled: &[usize],
) -> Vec<usize> {
    let frontier: Vec<usize> = unlabeled
        .iter()
        .copied()
        .filter(|&i| {
            graphs
                .iter()
                .any(|g| labeled.iter().any(|&j| g.is_edge(i, j)))
        })
        .collect();
    let mut out = if frontier.is_empty() {
        unlabeled.to_vec()
    } else {
        frontier
    };
    out.sort_unstable();
    out.dedup();
    out
}

fn regularized_cholesky(block: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let l = block.nrows();
    let needs_ridge = |c: &Cholesky<f64, Dyn>| {
        let diag = c.l_dirty().diagonal();
        let max = diag.max();
        let min = diag.min();
        min <= 0.0 || (max / min).powi(2) > MAX_CONDITION
    };
    if let Some(chol) = Cholesky::new(block.clone()) {
        if !needs_ridge(&chol) {
            return Ok(chol);
        }
    }
    let ridge = 1e-10 * block.trace() / l as f64;
    let mut shifted = block;
    for i in 0..l {
        shifted[(i, i)] += ridge;
    }
    Cholesky::new(shifted).ok_or(Error::Singular)
}

/// Conditional covariance `S_BB - S_BL S_LL^-1 S_LB` of candidate labels
/// given labeled ones. With an empty labeled set this is `S_BB`.
pub fn reliability_term(
    sigma: &DMatrix<f64>,
    candidates: &[usize],
    labeled: &[usize],
) -> Result<DMatrix<f64>> {
    let bb = submatrix(sigma, candidates, candidates);
    if labeled.is_empty() || candidates.is_empty() {
        return Ok(symmetrize(bb));
    }
    let ll = submatrix(sigma, labeled, labeled);
    let lb = submatrix(sigma, labeled, candidates);
    let chol = regularized_cholesky(ll)?;
    let solved = chol.solve(&lb);
    Ok(symmetrize(bb - lb.transpose() * solved))
}

/// A teacher's fixed per-run state: graph covariance and commute times.
#[derive(Debug, Clone)]
pub struct TeacherState {
    pub covariance: DMatrix<f64>,
    pub kappa2: f64,
    pub commute: DMatrix<f64>,
}

impl TeacherState {
    pub fn new(graph: &LearnerGraph, kappa2: f64) -> Result<Self> {
        Ok(Self {
            covariance: covariance(graph, kappa2)?,
            kappa2,
            commute: graph.commute_table(),
        })
    }

    /// Average commute time from `i` to each class's labeled members;
    /// `None` for classes without labeled members.
    pub fn class_averages(&self, i: usize, labeled_by_class: &[Vec<usize>]) -> Vec<Option<f64>> {
        labeled_by_class
            .iter()
            .map(|members| {
                (!members.is_empty()).then(|| {
                    members.iter().map(|&j| self.commute[(i, j)]).sum::<f64>()
                        / members.len() as f64
                })
            })
            .collect()
    }

    /// Gap between the second-smallest and smallest class-average commute
    /// time, floored at [`GAP_FLOOR`]. `None` when fewer than two classes
    /// have labeled members.
    pub fn class_gap(&self, i: usize, labeled_by_class: &[Vec<usize>]) -> Option<f64> {
        gap_of(
            self.class_averages(i, labeled_by_class)
                .into_iter()
                .flatten(),
        )
    }

    /// Diagonal `1/g` per candidate, or all zeros when discriminability is
    /// undefined this round.
    pub fn gap_penalties(&self, candidates: &[usize], labeled_by_class: &[Vec<usize>]) -> Vec<f64> {
        let gaps: Option<Vec<f64>> = candidates
            .iter()
            .map(|&i| self.class_gap(i, labeled_by_class))
            .collect();
        match gaps {
            Some(gaps) => gaps.into_iter().map(|g| 1.0 / g).collect(),
            None => vec![0.0; candidates.len()],
        }
    }

    /// `R = reliability_term + G` over the candidate list.
    pub fn teaching_matrix(
        &self,
        candidates: &[usize],
        labeled: &[usize],
        labeled_by_class: &[Vec<usize>],
    ) -> Result<DMatrix<f64>> {
        let mut r = reliability_term(&self.covariance, candidates, labeled)?;
        for (k, penalty) in self
            .gap_penalties(candidates, labeled_by_class)
            .into_iter()
            .enumerate()
        {
            r[(k, k)] += penalty;
        }
        Ok(r)
    }
}

/// Second-smallest minus smallest of the given averages, floored.
pub fn gap_of(averages: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut first = f64::INFINITY;
    let mut second = f64::INFINITY;
    let mut count = 0usize;
    for a in averages {
        count += 1;
        if a < first {
            second = first;
            first = a;
        } else if a < second {
            second = a;
        }
    }
    (count >= 2).then(|| (second - first).max(GAP_FLOOR))
}
