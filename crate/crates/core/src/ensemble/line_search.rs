//! Weak-Wolfe step selection along a descent direction.
//!
//! The search works on the one-dimensional restriction `phi(t) = f(x + t d)`
//! and needs both `phi(t)` and `phi'(t)`. It brackets by bisection and
//! doubling (Lewis-Overton style), and falls back to plain Armijo
//! backtracking when the curvature condition cannot be met.

/// Sufficient-decrease and curvature constants plus the iteration budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    /// Bisection/doubling budget before giving up on the curvature condition.
    pub max_iter: usize,
    /// Extra halvings spent on Armijo alone after the bracket phase fails.
    pub max_backtracks: usize,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_iter: 30,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// Armijo and curvature both hold.
    Wolfe,
    /// Only sufficient decrease holds.
    Armijo,
    /// Directional derivative was not negative; no move.
    Stationary,
    /// No decreasing step was found; no move.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub tau: f64,
    pub kind: StepKind,
    /// `phi(tau)`; equals `phi(0)` when no move is made.
    pub value: f64,
}

impl Step {
    pub fn moved(&self) -> bool {
        matches!(self.kind, StepKind::Wolfe | StepKind::Armijo)
    }
}

pub fn armijo_holds(params: &WolfeParams, f0: f64, g0: f64, tau: f64, f: f64) -> bool {
    f <= f0 + params.c1 * tau * g0
}

pub fn curvature_holds(params: &WolfeParams, g0: f64, g: f64) -> bool {
    g >= params.c2 * g0
}

/// Finds a step along a direction with `phi(0) = f0`, `phi'(0) = g0`.
///
/// `phi` returns `(phi(t), phi'(t))`. A nonnegative or non-finite `g0`
/// yields a zero [`StepKind::Stationary`] step.
pub fn wolfe_step<F>(mut phi: F, f0: f64, g0: f64, initial: f64, params: &WolfeParams) -> Step
where
    F: FnMut(f64) -> (f64, f64),
{
    let stay = |kind| Step {
        tau: 0.0,
        kind,
        value: f0,
    };
    if g0.is_nan() || g0 >= 0.0 || !f0.is_finite() {
        return stay(StepKind::Stationary);
    }
    let mut lo = 0.0_f64;
    let mut lo_value = f0;
    let mut hi = f64::INFINITY;
    let mut tau = if initial > 0.0 && initial.is_finite() {
        initial
    } else {
        1.0
    };

    for _ in 0..params.max_iter {
        let (f, g) = phi(tau);
        if !f.is_finite() || !armijo_holds(params, f0, g0, tau, f) {
            hi = tau;
        } else if !g.is_finite() || !curvature_holds(params, g0, g) {
            lo = tau;
            lo_value = f;
        } else {
            return Step {
                tau,
                kind: StepKind::Wolfe,
                value: f,
            };
        }
        tau = if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * lo
        };
    }

    if lo > 0.0 {
        return Step {
            tau: lo,
            kind: StepKind::Armijo,
            value: lo_value,
        };
    }
    for _ in 0..params.max_backtracks {
        let (f, _) = phi(tau);
        if f.is_finite() && armijo_holds(params, f0, g0, tau, f) {
            return Step {
                tau,
                kind: StepKind::Armijo,
                value: f,
            };
        }
        tau *= 0.5;
    }
    stay(StepKind::Failed)
}
