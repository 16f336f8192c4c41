//! End-to-end runs: ensemble-taught propagation, its ablations, and
//! evaluation.

pub mod significance;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ensemble::{self, BcdConfig, Curriculum};
use crate::error::{Error, Result};
use crate::feedback::{feedback_value, next_size};
use crate::graph::{knn_pattern, Kernel, LearnerGraph};
use crate::propagate::{final_labels, steady_state, LabelState};
use crate::teacher::{candidate_set, TeacherState};

pub use significance::{paired_t_test, PairedTTest};

/// Every tunable of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub learners: Vec<Kernel>,
    pub k: usize,
    pub sigma: f64,
    pub kappa2: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub gamma: f64,
    pub theta: f64,
    pub threshold: f64,
    pub zeta: f64,
    pub epsilon_bcd: f64,
    pub iter_max: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            learners: vec![Kernel::Gaussian, Kernel::FlapStyle { self_loop: 1.0 }],
            k: 5,
            sigma: 1.0,
            kappa2: 100.0,
            beta0: 100.0,
            beta1: 100.0,
            gamma: 0.5,
            theta: 0.05,
            threshold: ensemble::DEFAULT_THRESHOLD,
            zeta: ensemble::DEFAULT_ZETA,
            epsilon_bcd: ensemble::DEFAULT_EPSILON,
            iter_max: ensemble::DEFAULT_ITER_MAX,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma", self.sigma),
            ("kappa2", self.kappa2),
            ("gamma", self.gamma),
            ("zeta", self.zeta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let nonnegative = [
            ("beta0", self.beta0),
            ("beta1", self.beta1),
            ("threshold", self.threshold),
            ("epsilon_bcd", self.epsilon_bcd),
        ];
        for (name, v) in nonnegative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::InvalidArgument(format!(
                "theta must lie in [0, 1), got {}",
                self.theta
            )));
        }
        if self.learners.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one learner is required".into(),
            ));
        }
        if self.k == 0 || self.iter_max == 0 {
            return Err(Error::InvalidArgument(
                "k and iter_max must be positive".into(),
            ));
        }
        Ok(())
    }

    fn bcd(&self) -> BcdConfig {
        BcdConfig {
            beta0: self.beta0,
            beta1: self.beta1,
            zeta: self.zeta,
            epsilon: self.epsilon_bcd,
            iter_max: self.iter_max,
            ..BcdConfig::default()
        }
    }

    /// Same settings restricted to learner `m`.
    fn only_learner(&self, m: usize) -> Result<Self> {
        let kernel = *self.learners.get(m).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "learner {} requested but only {} configured",
                m + 1,
                self.learners.len()
            ))
        })?;
        Ok(Self {
            learners: vec![kernel],
            ..self.clone()
        })
    }
}

/// Which pipeline to run. Learner numbers are 1-based in text form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Learner `m` alone, whole frontier every round.
    SingleLearner(usize),
    /// All learners averaged, whole frontier every round.
    HybridNoTeaching,
    /// Teacher `m` alone (no l2,1 coupling) guiding learner `m`.
    SingleTeacher(usize),
    Hydent,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::SingleLearner(m) => write!(f, "single-learner-{}", m + 1),
            Variant::HybridNoTeaching => write!(f, "hybrid-no-teaching"),
            Variant::SingleTeacher(m) => write!(f, "single-teacher-{}", m + 1),
            Variant::Hydent => write!(f, "hydent"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let learner = |rest: &str| -> Result<usize> {
            match rest.parse::<usize>() {
                Ok(m) if m >= 1 => Ok(m - 1),
                _ => Err(Error::UnknownVariant(s.to_string())),
            }
        };
        match s {
            "hydent" => Ok(Variant::Hydent),
            "hybrid-no-teaching" => Ok(Variant::HybridNoTeaching),
            _ => {
                if let Some(rest) = s.strip_prefix("single-learner-") {
                    learner(rest).map(Variant::SingleLearner)
                } else if let Some(rest) = s.strip_prefix("single-teacher-") {
                    learner(rest).map(Variant::SingleTeacher)
                } else {
                    Err(Error::UnknownVariant(s.to_string()))
                }
            }
        }
    }
}

/// Bookkeeping for one propagation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    /// Frontier size.
    pub b: usize,
    /// Curriculum size actually learned.
    pub s: usize,
    /// Size asked for by the feedback rule.
    pub requested: usize,
    /// Feedback after this round.
    pub g: f64,
    pub seconds: f64,
    /// Joint objective per solver sweep; empty without teaching.
    pub objective_trace: Vec<f64>,
    pub bcd_converged: bool,
    pub curriculum_fallback: bool,
    /// Largest `|row sum - 1|` of the label matrix after the round.
    pub row_sum_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub predictions: Vec<usize>,
    /// Accuracy over originally unlabeled examples with a known truth.
    pub accuracy: Option<f64>,
    pub rounds: Vec<RoundTrace>,
    /// Largest `|row sum - 1|` over the learners' steady states.
    pub steady_row_sum_drift: f64,
    pub seconds: f64,
}

impl RunResult {
    pub fn curriculum_total(&self) -> usize {
        self.rounds.iter().map(|r| r.s).sum()
    }
}

fn max_row_drift(f: &DMatrix<f64>) -> f64 {
    f.row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Fraction of `unlabeled` whose prediction matches the known truth;
/// `None` when none of them has a known label.
pub fn evaluate(
    predictions: &[usize],
    truth: &[Option<usize>],
    unlabeled: &[usize],
) -> Option<f64> {
    let scored: Vec<bool> = unlabeled
        .iter()
        .filter_map(|&i| truth[i].map(|t| predictions[i] == t))
        .collect();
    (!scored.is_empty())
        .then(|| scored.iter().filter(|&&hit| hit).count() as f64 / scored.len() as f64)
}

struct Learners {
    graphs: Vec<LearnerGraph>,
    teachers: Option<Vec<TeacherState>>,
}

fn build_learners(dataset: &Dataset, config: &RunConfig, with_teachers: bool) -> Result<Learners> {
    let pattern = knn_pattern(&dataset.features, config.k)?;
    let built: Vec<(LearnerGraph, Option<TeacherState>)> = config
        .learners
        .par_iter()
        .map(|kernel| {
            let w = kernel.weights(&pattern, &dataset.features, config.sigma);
            let graph = LearnerGraph::assemble(w)?;
            let teacher = if with_teachers {
                Some(TeacherState::new(&graph, config.kappa2)?)
            } else {
                None
            };
            Ok((graph, teacher))
        })
        .collect::<Result<_>>()?;
    let (graphs, teachers): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    Ok(Learners {
        graphs,
        teachers: teachers.into_iter().collect(),
    })
}

fn seeds_of(dataset: &Dataset, labeled: &[usize]) -> Result<Vec<(usize, usize)>> {
    labeled
        .iter()
        .map(|&i| {
            if i >= dataset.len() {
                return Err(Error::InvalidArgument(format!(
                    "labeled index {i} out of range"
                )));
            }
            dataset.labels[i]
                .map(|c| (i, c))
                .ok_or(Error::MissingLabel { index: i })
        })
        .collect()
}

fn round_seed(seed: u64, round: usize) -> u64 {
    // splitmix64 finalizer over (seed, round)
    let mut z = seed ^ (round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The full ensemble-taught pipeline with every configured learner.
pub fn run_hydent(dataset: &Dataset, labeled: &[usize], config: &RunConfig) -> Result<RunResult> {
    run_pipeline(dataset, labeled, config, Variant::Hydent, true)
}

/// Runs one of the ablations, or the full pipeline for [`Variant::Hydent`].
pub fn run_baseline(
    dataset: &Dataset,
    labeled: &[usize],
    config: &RunConfig,
    variant: Variant,
) -> Result<RunResult> {
    match variant {
        Variant::Hydent => run_hydent(dataset, labeled, config),
        Variant::HybridNoTeaching => run_pipeline(dataset, labeled, config, variant, false),
        Variant::SingleLearner(m) => {
            run_pipeline(dataset, labeled, &config.only_learner(m)?, variant, false)
        }
        Variant::SingleTeacher(m) => {
            let single = RunConfig {
                beta0: 0.0,
                ..config.only_learner(m)?
            };
            run_pipeline(dataset, labeled, &single, variant, true)
        }
    }
}

fn run_pipeline(
    dataset: &Dataset,
    labeled: &[usize],
    config: &RunConfig,
    variant: Variant,
    teaching: bool,
) -> Result<RunResult> {
    config.validate()?;
    let start = Instant::now();
    let seeds = seeds_of(dataset, labeled)?;
    let learners = build_learners(dataset, config, teaching)?;
    let graph_refs: Vec<&LearnerGraph> = learners.graphs.iter().collect();
    let iterations: Vec<&DMatrix<f64>> = learners.graphs.iter().map(|g| &g.iteration).collect();
    let teachers_m = learners.graphs.len();
    let bcd = config.bcd();

    let mut state = LabelState::init_labels(&seeds, dataset.len(), dataset.class_count)?;
    // Feedback of the uniform starting rows.
    let mut feedback = (-config.gamma).exp();
    let mut rounds = Vec::new();

    loop {
        let remaining = state.remaining();
        if remaining.is_empty() {
            break;
        }
        let round_start = Instant::now();
        let known = state.known();
        let candidates = candidate_set(&graph_refs, &known, &remaining);
        let b = candidates.len();

        let (curriculum, objective_trace, converged, requested) =
            if let Some(teachers) = &learners.teachers {
                let requested = next_size(b, feedback).max(1);
                let by_class = state.known_by_class();
                let r_list: Vec<DMatrix<f64>> = teachers
                    .par_iter()
                    .map(|t| t.teaching_matrix(&candidates, &known, &by_class))
                    .collect::<Result<_>>()?;
                let solution = ensemble::bcd_solve(
                    &r_list,
                    requested,
                    round_seed(config.seed, state.round()),
                    &bcd,
                )?;
                let curriculum =
                    ensemble::extract_curriculum(&solution.selection, requested, config.threshold);
                (
                    curriculum,
                    solution.objective_trace,
                    solution.converged,
                    requested,
                )
            } else {
                let curriculum = Curriculum {
                    rows: (0..b).collect(),
                    weights: DMatrix::from_element(b, teachers_m, 1.0 / teachers_m as f64),
                    fallback: false,
                };
                (curriculum, Vec::new(), true, b)
            };

        let nodes: Vec<usize> = curriculum.rows.iter().map(|&r| candidates[r]).collect();
        state.propagate_round(&iterations, &nodes, &curriculum.weights)?;
        feedback = feedback_value(&state.rows(&nodes), config.gamma)?;
        rounds.push(RoundTrace {
            round: state.round(),
            b,
            s: nodes.len(),
            requested,
            g: feedback,
            seconds: round_start.elapsed().as_secs_f64(),
            objective_trace,
            bcd_converged: converged,
            curriculum_fallback: curriculum.fallback,
            row_sum_drift: max_row_drift(state.labels()),
        });
    }

    let steady: Vec<DMatrix<f64>> = iterations
        .par_iter()
        .map(|p| steady_state(state.labels(), p, config.theta))
        .collect::<Result<_>>()?;
    let steady_row_sum_drift = steady.iter().map(max_row_drift).fold(0.0, f64::max);
    let predictions = final_labels(&steady, state.seeds())?;
    let unlabeled: Vec<usize> = {
        let mut is_seed = vec![false; dataset.len()];
        for &(i, _) in state.seeds() {
            is_seed[i] = true;
        }
        (0..dataset.len()).filter(|&i| !is_seed[i]).collect()
    };
    let accuracy = evaluate(&predictions, &dataset.labels, &unlabeled);

    Ok(RunResult {
        variant,
        predictions,
        accuracy,
        rounds,
        steady_row_sum_drift,
        seconds: start.elapsed().as_secs_f64(),
    })
}
