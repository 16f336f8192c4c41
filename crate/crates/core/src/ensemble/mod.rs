//! Joint curriculum selection by an ensemble of teachers.
//!
//! Each teacher `m` owns a relaxed selection matrix `S_m` (candidates x
//! curriculum slots). The blocks are stacked side by side into `S_bar` and
//! minimize
//!
//! ```text
//! Q = sum_m tr(S_m' R_m S_m) + beta0 ||S_bar||_{2,1}
//!   + beta1 sum_m (||S_m o S_m - S_m||_F^2 + ||S_m' S_m - I||_F^2)
//! ```
//!
//! The l2,1 term zeroes whole candidate rows that every teacher rejects.
//! It is majorized once per sweep by `tr(S_bar' H S_bar)` with
//! `H_ii = 1 / (2 ||S_bar_i|| + zeta)`, after which the blocks decouple and
//! each takes one Wolfe gradient step.

pub mod line_search;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_stream;
use line_search::{wolfe_step, Step, WolfeParams};

/// Entries of the optimized selection below this are treated as zero.
pub const DEFAULT_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_ZETA: f64 = 1e-8;
pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_ITER_MAX: usize = 300;

/// Entries outside this band are reported as drift.
const DRIFT_BAND: (f64, f64) = (-0.5, 1.5);

/// The `M` per-teacher selection blocks, all `b x s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSelection {
    blocks: Vec<DMatrix<f64>>,
}

impl StackedSelection {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::Shape(
                "at least one selection block is required".into(),
            ));
        };
        let shape = first.shape();
        if let Some(bad) = blocks.iter().find(|b| b.shape() != shape) {
            return Err(Error::Shape(format!(
                "selection blocks disagree: {shape:?} vs {:?}",
                bad.shape()
            )));
        }
        if let Some(bad) = blocks
            .iter()
            .flat_map(|b| b.iter())
            .find(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "non-finite selection entry {bad}"
            )));
        }
        Ok(Self { blocks })
    }

    /// Blocks with entries drawn uniformly from `[0, 1)`; block `m` uses
    /// stream `m` of `seed`, so each block's start does not depend on `M`.
    pub fn random(teachers: usize, candidates: usize, slots: usize, seed: u64) -> Result<Self> {
        let blocks = (0..teachers)
            .map(|m| {
                let mut rng = seeded_stream(seed, m as u64);
                DMatrix::from_fn(candidates, slots, |_, _| rng.random::<f64>())
            })
            .collect();
        Self::new(blocks)
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn teachers(&self) -> usize {
        self.blocks.len()
    }

    pub fn candidates(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn slots(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// The `b x (s M)` matrix `(S_1, ..., S_M)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (b, s) = (self.candidates(), self.slots());
        let mut out = DMatrix::zeros(b, s * self.teachers());
        for (m, block) in self.blocks.iter().enumerate() {
            out.view_mut((0, m * s), (b, s)).copy_from(block);
        }
        out
    }

    /// Euclidean norm of each row of the stacked matrix.
    pub fn row_norms(&self) -> DVector<f64> {
        DVector::from_fn(self.candidates(), |i, _| {
            self.blocks
                .iter()
                .map(|block| block.row(i).norm_squared())
                .sum::<f64>()
                .sqrt()
        })
    }

    pub fn l21_norm(&self) -> f64 {
        self.row_norms().sum()
    }

    fn distance_squared(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).norm_squared())
            .sum()
    }

    fn drifted(&self) -> bool {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .any(|&v| v < DRIFT_BAND.0 || v > DRIFT_BAND.1)
    }
}

fn check_teaching_matrices(r_list: &[DMatrix<f64>], candidates: usize) -> Result<()> {
    for (m, r) in r_list.iter().enumerate() {
        if r.shape() != (candidates, candidates) {
            return Err(Error::Shape(format!(
                "teaching matrix {m} is {:?}, expected {candidates}x{candidates}",
                r.shape()
            )));
        }
    }
    Ok(())
}

/// `||S o S - S||_F^2 + ||S' S - I||_F^2` for one block.
fn penalties(s: &DMatrix<f64>, gram: &DMatrix<f64>) -> f64 {
    let binary: f64 = s.iter().map(|&v| (v * v - v).powi(2)).sum();
    let orth: f64 = gram
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let (i, j) = (k % gram.nrows(), k / gram.nrows());
            let target = if i == j { 1.0 } else { 0.0 };
            (v - target).powi(2)
        })
        .sum();
    binary + orth
}

/// The joint objective `Q`, with the exact l2,1 norm.
pub fn objective(
    selection: &StackedSelection,
    r_list: &[DMatrix<f64>],
    beta0: f64,
    beta1: f64,
) -> Result<f64> {
    if r_list.len() != selection.teachers() {
        return Err(Error::Shape(format!(
            "{} teaching matrices for {} blocks",
            r_list.len(),
            selection.teachers()
        )));
    }
    check_teaching_matrices(r_list, selection.candidates())?;
    let per_block: f64 = selection
        .blocks
        .iter()
        .zip(r_list)
        .map(|(s, r)| {
            let gram = s.transpose() * s;
            s.dot(&(r * s)) + beta1 * penalties(s, &gram)
        })
        .sum();
    Ok(per_block + beta0 * selection.l21_norm())
}

/// Diagonal of the l2,1 majorizer, `1 / (2 ||S_bar_i|| + zeta)`.
pub fn l21_weight_matrix(selection: &StackedSelection, zeta: f64) -> DVector<f64> {
    assert!(zeta > 0.0, "zeta must be positive");
    selection.row_norms().map(|norm| 1.0 / (2.0 * norm + zeta))
}

/// One teacher's block objective with the majorizer `H` held fixed.
#[derive(Debug, Clone, Copy)]
pub struct BlockSurrogate<'a> {
    pub teaching: &'a DMatrix<f64>,
    pub weights: &'a DVector<f64>,
    pub beta0: f64,
    pub beta1: f64,
}

impl BlockSurrogate<'_> {
    fn curvature_times(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.teaching * s;
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row += s.row(i) * (self.beta0 * self.weights[i]);
        }
        out
    }

    /// `tr(S'RS) + beta0 tr(S'HS) + beta1 (binary + orthogonality)`.
    pub fn value(&self, s: &DMatrix<f64>) -> f64 {
        let gram = s.transpose() * s;
        s.dot(&self.curvature_times(s)) + self.beta1 * penalties(s, &gram)
    }

    /// Value and gradient sharing the matrix products.
    pub fn value_and_gradient(&self, s: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let gram = s.transpose() * s;
        let a_s = self.curvature_times(s);
        let value = s.dot(&a_s) + self.beta1 * penalties(s, &gram);
        (value, self.assemble_gradient(s, &gram, a_s))
    }

    pub fn gradient(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let gram = s.transpose() * s;
        let a_s = self.curvature_times(s);
        self.assemble_gradient(s, &gram, a_s)
    }

    // 2 { [R + beta0 H + beta1 (2 S S' - I)] S + beta1 [2 S^3 - 3 S^2] },
    // with S S' S evaluated as S (S'S).
    fn assemble_gradient(
        &self,
        s: &DMatrix<f64>,
        gram: &DMatrix<f64>,
        a_s: DMatrix<f64>,
    ) -> DMatrix<f64> {
        let beta1 = self.beta1;
        let mut g = a_s;
        g += (s * gram) * (2.0 * beta1);
        g.zip_apply(s, |gij, v| {
            *gij += beta1 * (-v + 2.0 * v * v * v - 3.0 * v * v);
        });
        g * 2.0
    }
}

/// Gradient of a block's H-fixed objective:
/// `2 { [R + beta0 H + beta1 (2 S S' - I)] S + beta1 [2 S o S o S - 3 S o S] }`.
pub fn gradient(
    s: &DMatrix<f64>,
    teaching: &DMatrix<f64>,
    weights: &DVector<f64>,
    beta0: f64,
    beta1: f64,
) -> DMatrix<f64> {
    BlockSurrogate {
        teaching,
        weights,
        beta0,
        beta1,
    }
    .gradient(s)
}

/// Line search on a block surrogate from `s` along `direction`.
pub fn block_wolfe_step(
    surrogate: &BlockSurrogate<'_>,
    s: &DMatrix<f64>,
    value: f64,
    slope: f64,
    direction: &DMatrix<f64>,
    initial: f64,
    params: &WolfeParams,
) -> Step {
    let phi = |tau: f64| {
        let trial = s + direction * tau;
        let (f, g) = surrogate.value_and_gradient(&trial);
        (f, g.dot(direction))
    };
    wolfe_step(phi, value, slope, initial, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcdConfig {
    pub beta0: f64,
    pub beta1: f64,
    pub zeta: f64,
    pub epsilon: f64,
    pub iter_max: usize,
    #[serde(skip)]
    pub line_search: WolfeParams,
}

impl Default for BcdConfig {
    fn default() -> Self {
        Self {
            beta0: 100.0,
            beta1: 100.0,
            zeta: DEFAULT_ZETA,
            epsilon: DEFAULT_EPSILON,
            iter_max: DEFAULT_ITER_MAX,
            line_search: WolfeParams::default(),
        }
    }
}

impl BcdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.beta0 >= 0.0 && self.beta1 >= 0.0) {
            return Err(Error::InvalidArgument(
                "beta0 and beta1 must be nonnegative".into(),
            ));
        }
        if self.zeta.is_nan() || self.zeta <= 0.0 {
            return Err(Error::InvalidArgument("zeta must be positive".into()));
        }
        if self.iter_max == 0 {
            return Err(Error::InvalidArgument("iter_max must be positive".into()));
        }
        Ok(())
    }
}

/// Output of the block coordinate descent solver.
#[derive(Debug, Clone)]
pub struct BcdSolution {
    pub selection: StackedSelection,
    /// `Q` at the start point followed by `Q` after every sweep.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    /// The Frobenius change between consecutive sweeps fell below epsilon.
    pub converged: bool,
    /// Some entry left [-0.5, 1.5] at the end.
    pub drifted: bool,
}

impl BcdSolution {
    pub fn hit_iter_max(&self) -> bool {
        !self.converged
    }
}

/// Solves for `s` curriculum slots from uniform random starts seeded by
/// `init_seed`. `s` is clamped to the candidate count.
pub fn bcd_solve(
    r_list: &[DMatrix<f64>],
    s: usize,
    init_seed: u64,
    config: &BcdConfig,
) -> Result<BcdSolution> {
    let Some(first) = r_list.first() else {
        return Err(Error::Shape(
            "at least one teaching matrix is required".into(),
        ));
    };
    let b = first.nrows();
    if b == 0 || s == 0 {
        return Err(Error::InvalidArgument(
            "need at least one candidate and one slot".into(),
        ));
    }
    let init = StackedSelection::random(r_list.len(), b, s.min(b), init_seed)?;
    bcd_solve_from(r_list, init, config)
}

/// Block coordinate descent from a given start.
///
/// Every sweep refreshes `H` from the current stack and then moves each
/// block once along its negative gradient with a Wolfe step; blocks are
/// independent given `H` and update in parallel.
pub fn bcd_solve_from(
    r_list: &[DMatrix<f64>],
    init: StackedSelection,
    config: &BcdConfig,
) -> Result<BcdSolution> {
    config.validate()?;
    if r_list.len() != init.teachers() {
        return Err(Error::Shape(format!(
            "{} teaching matrices for {} blocks",
            r_list.len(),
            init.teachers()
        )));
    }
    check_teaching_matrices(r_list, init.candidates())?;

    let mut current = init;
    let mut trace = vec![objective(&current, r_list, config.beta0, config.beta1)?];
    let mut steps = vec![0.0_f64; current.teachers()];
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < config.iter_max {
        let weights = l21_weight_matrix(&current, config.zeta);
        let updated: Vec<(DMatrix<f64>, f64)> = current
            .blocks
            .par_iter()
            .zip(r_list.par_iter())
            .zip(steps.par_iter())
            .map(|((s, r), &last_tau)| {
                let surrogate = BlockSurrogate {
                    teaching: r,
                    weights: &weights,
                    beta0: config.beta0,
                    beta1: config.beta1,
                };
                let (value, grad) = surrogate.value_and_gradient(s);
                let direction = -grad;
                let slope = -direction.norm_squared();
                let initial = if last_tau > 0.0 {
                    2.0 * last_tau
                } else {
                    1.0 / direction.norm().max(f64::MIN_POSITIVE)
                };
                let step = block_wolfe_step(
                    &surrogate,
                    s,
                    value,
                    slope,
                    &direction,
                    initial,
                    &config.line_search,
                );
                if step.moved() {
                    (s + direction * step.tau, step.tau)
                } else {
                    (s.clone(), last_tau)
                }
            })
            .collect();

        let (blocks, taus): (Vec<_>, Vec<_>) = updated.into_iter().unzip();
        let next = StackedSelection { blocks };
        steps = taus;
        sweeps += 1;
        let change = next.distance_squared(&current).sqrt();
        current = next;
        trace.push(objective(&current, r_list, config.beta0, config.beta1)?);
        if change < config.epsilon {
            converged = true;
            break;
        }
    }

    Ok(BcdSolution {
        drifted: current.drifted(),
        selection: current,
        objective_trace: trace,
        sweeps,
        converged,
    })
}

/// The selected curriculum: candidate rows (positions in the candidate
/// list) and per-row teacher weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Curriculum {
    pub rows: Vec<usize>,
    /// `rows.len() x M`, each row sums to 1.
    pub weights: DMatrix<f64>,
    /// Every row was thresholded away; rows were picked by raw norm.
    pub fallback: bool,
}

/// Picks up to `s` rows of the optimized stack.
///
/// Entries below `threshold` are zeroed. Rows rank by surviving-entry count,
/// then by row norm, then by index; only rows with a surviving entry are
/// eligible. Teacher weights are each block's share of the row's surviving
/// mass. When nothing survives, the `s` rows of largest raw norm are taken
/// with uniform weights.
pub fn extract_curriculum(selection: &StackedSelection, s: usize, threshold: f64) -> Curriculum {
    let b = selection.candidates();
    let teachers = selection.teachers();
    let s = s.min(b);
    let kept = |v: f64| if v >= threshold && v > 0.0 { v } else { 0.0 };

    // (row, surviving count, surviving norm)
    let mut ranked: Vec<(usize, usize, f64)> = (0..b)
        .map(|i| {
            let mut count = 0;
            let mut sq = 0.0;
            for block in &selection.blocks {
                for &v in block.row(i).iter() {
                    let v = kept(v);
                    if v > 0.0 {
                        count += 1;
                        sq += v * v;
                    }
                }
            }
            (i, count, sq.sqrt())
        })
        .filter(|&(_, count, _)| count > 0)
        .collect();

    if ranked.is_empty() {
        let norms = selection.row_norms();
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
        order.truncate(s);
        let weights = DMatrix::from_element(order.len(), teachers, 1.0 / teachers as f64);
        return Curriculum {
            rows: order,
            weights,
            fallback: true,
        };
    }

    ranked.sort_by(|x, y| y.1.cmp(&x.1).then(y.2.total_cmp(&x.2)).then(x.0.cmp(&y.0)));
    ranked.truncate(s);
    let rows: Vec<usize> = ranked.iter().map(|r| r.0).collect();
    let mut weights = DMatrix::zeros(rows.len(), teachers);
    for (k, &i) in rows.iter().enumerate() {
        let shares: Vec<f64> = selection
            .blocks
            .iter()
            .map(|block| block.row(i).iter().map(|&v| kept(v)).sum())
            .collect();
        let total: f64 = shares.iter().sum();
        for (m, share) in shares.into_iter().enumerate() {
            weights[(k, m)] = if total > 0.0 {
                share / total
            } else {
                1.0 / teachers as f64
            };
        }
    }
    Curriculum {
        rows,
        weights,
        fallback: false,
    }
}
