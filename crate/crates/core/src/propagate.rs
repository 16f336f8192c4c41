//! Label matrices and hybrid propagation across learners.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Per-row sum drift tolerated before a row is renormalized.
const RENORMALIZE_DRIFT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    /// In the initial labeled set; row fixed as one-hot.
    Seed,
    /// Classified in some earlier or the current round.
    Learned,
    /// Not yet classified; row fixed at the uniform start.
    Remaining,
}

/// Row-stochastic label matrix with round bookkeeping.
#[derive(Debug, Clone)]
pub struct LabelState {
    f: DMatrix<f64>,
    initial: DMatrix<f64>,
    status: Vec<NodeStatus>,
    seeds: Vec<(usize, usize)>,
    learned: Vec<usize>,
    round: usize,
}

impl LabelState {
    /// One-hot rows for `seeds` (`(node, class)` pairs), uniform `1/c` rows
    /// elsewhere.
    pub fn init_labels(seeds: &[(usize, usize)], n: usize, c: usize) -> Result<Self> {
        if c < 2 {
            return Err(Error::TooFewClasses { found: c });
        }
        if seeds.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one labeled example is required".into(),
            ));
        }
        let mut f = DMatrix::from_element(n, c, 1.0 / c as f64);
        let mut status = vec![NodeStatus::Remaining; n];
        for &(node, class) in seeds {
            if node >= n {
                return Err(Error::InvalidArgument(format!(
                    "labeled node {node} out of range"
                )));
            }
            if class >= c {
                return Err(Error::InvalidArgument(format!(
                    "class {class} out of range for {c} classes"
                )));
            }
            if status[node] == NodeStatus::Seed {
                return Err(Error::InvalidArgument(format!("node {node} labeled twice")));
            }
            status[node] = NodeStatus::Seed;
            f.row_mut(node).fill(0.0);
            f[(node, class)] = 1.0;
        }
        let mut seeds = seeds.to_vec();
        seeds.sort_unstable();
        Ok(Self {
            initial: f.clone(),
            f,
            status,
            seeds,
            learned: Vec::new(),
            round: 0,
        })
    }

    pub fn labels(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn node_count(&self) -> usize {
        self.f.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.f.ncols()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn status(&self, node: usize) -> NodeStatus {
        self.status[node]
    }

    /// Initial `(node, class)` pairs, sorted by node.
    pub fn seeds(&self) -> &[(usize, usize)] {
        &self.seeds
    }

    /// Learned nodes in the order they were classified.
    pub fn learned(&self) -> &[usize] {
        &self.learned
    }

    /// Seed and learned nodes, ascending.
    pub fn known(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| self.status[i] != NodeStatus::Remaining)
            .collect()
    }

    /// Unclassified nodes, ascending.
    pub fn remaining(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| self.status[i] == NodeStatus::Remaining)
            .collect()
    }

    /// Current argmax class of a row, ties to the lowest class.
    pub fn predicted_class(&self, node: usize) -> usize {
        argmax(self.f.row(node).iter().copied())
    }

    /// Known nodes grouped by class: seeds by their given class, learned
    /// nodes by their current argmax.
    pub fn known_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.class_count()];
        for &(node, class) in &self.seeds {
            groups[class].push(node);
        }
        for &node in &self.learned {
            groups[self.predicted_class(node)].push(node);
        }
        for g in &mut groups {
            g.sort_unstable();
        }
        groups
    }

    /// Rows of the given nodes, in order.
    pub fn rows(&self, nodes: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(nodes.len(), self.class_count(), |k, j| {
            self.f[(nodes[k], j)]
        })
    }

    /// One propagation round.
    ///
    /// Every learned row and every curriculum row becomes `P_m[i] F` for
    /// each learner `m`, all computed from the previous matrix; seed and
    /// remaining rows stay at their initial values. Curriculum rows are
    /// mixed with `weights` (`curriculum.len() x M`); previously learned rows
    /// mix uniformly. Returns each learner's matrix.
    pub fn propagate_round(
        &mut self,
        iterations: &[&DMatrix<f64>],
        curriculum: &[usize],
        weights: &DMatrix<f64>,
    ) -> Result<Vec<DMatrix<f64>>> {
        let n = self.node_count();
        let learners = iterations.len();
        if learners == 0 {
            return Err(Error::InvalidArgument(
                "at least one learner is required".into(),
            ));
        }
        if let Some(p) = iterations.iter().find(|p| p.shape() != (n, n)) {
            return Err(Error::Shape(format!(
                "iteration matrix {:?} for {n} nodes",
                p.shape()
            )));
        }
        if weights.shape() != (curriculum.len(), learners) {
            return Err(Error::Shape(format!(
                "weights are {:?}, expected {}x{learners}",
                weights.shape(),
                curriculum.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in curriculum {
            if i >= n || self.status[i] != NodeStatus::Remaining || seen[i] {
                return Err(Error::CurriculumOverlap { index: i });
            }
            seen[i] = true;
        }

        let previous = &self.f;
        let updated: Vec<usize> = self.learned.iter().chain(curriculum).copied().collect();
        let per_learner: Vec<DMatrix<f64>> = iterations
            .iter()
            .map(|p| {
                let mut fm = self.initial.clone();
                for &i in &updated {
                    let row = p.row(i) * previous;
                    fm.row_mut(i).copy_from(&row);
                }
                fm
            })
            .collect();

        let mut next = self.initial.clone();
        let uniform = 1.0 / learners as f64;
        for &i in &self.learned {
            let mut row = next.row_mut(i);
            row.fill(0.0);
            for fm in &per_learner {
                row += fm.row(i) * uniform;
            }
        }
        for (k, &i) in curriculum.iter().enumerate() {
            let mut row = next.row_mut(i);
            row.fill(0.0);
            for (m, fm) in per_learner.iter().enumerate() {
                row += fm.row(i) * weights[(k, m)];
            }
        }
        for &i in &updated {
            let mut row = next.row_mut(i);
            row.apply(|v| *v = v.max(0.0));
            let total = row.sum();
            if (total - 1.0).abs() > RENORMALIZE_DRIFT && total > 0.0 {
                row /= total;
            }
        }

        self.f = next;
        for &i in curriculum {
            self.status[i] = NodeStatus::Learned;
        }
        self.learned.extend_from_slice(curriculum);
        self.round += 1;
        Ok(per_learner)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (j, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = j;
            best_value = v;
        }
    }
    best
}

/// Diffusion to the steady state `(1 - theta) (I - theta P)^-1 F`, solved as
/// a linear system.
pub fn steady_state(
    f: &DMatrix<f64>,
    iteration: &DMatrix<f64>,
    theta: f64,
) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "theta must lie in [0, 1), got {theta}"
        )));
    }
    let n = f.nrows();
    if iteration.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "iteration matrix {:?} for {n} label rows",
            iteration.shape()
        )));
    }
    if theta == 0.0 {
        return Ok(f.clone());
    }
    let system = DMatrix::identity(n, n) - iteration * theta;
    let rhs = f * (1.0 - theta);
    system.lu().solve(&rhs).ok_or(Error::Singular)
}

/// Averages the learners' steady states and takes the row argmax; seed
/// nodes keep their given classes.
pub fn final_labels(steady: &[DMatrix<f64>], seeds: &[(usize, usize)]) -> Result<Vec<usize>> {
    let Some(first) = steady.first() else {
        return Err(Error::InvalidArgument(
            "no label matrices to combine".into(),
        ));
    };
    if let Some(bad) = steady.iter().find(|f| f.shape() != first.shape()) {
        return Err(Error::Shape(format!(
            "{:?} vs {:?}",
            bad.shape(),
            first.shape()
        )));
    }
    let mut mean = DMatrix::zeros(first.nrows(), first.ncols());
    for f in steady {
        mean += f;
    }
    mean /= steady.len() as f64;
    let mut out: Vec<usize> = mean.row_iter().map(|r| argmax(r.iter().copied())).collect();
    for &(node, class) in seeds {
        out[node] = class;
    }
    Ok(out)
}
