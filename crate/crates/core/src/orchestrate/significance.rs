//! One-sided paired t-test over matched runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// One-sided upper critical values of Student's t, degrees of freedom 1..=30.
const T_090: [f64; 30] = [
    3.078, 1.886, 1.638, 1.533, 1.476, 1.440, 1.415, 1.397, 1.383, 1.372, 1.363, 1.356, 1.350,
    1.345, 1.341, 1.337, 1.333, 1.330, 1.328, 1.325, 1.323, 1.321, 1.319, 1.318, 1.316, 1.315,
    1.314, 1.313, 1.311, 1.310,
];
const T_095: [f64; 30] = [
    6.314, 2.920, 2.353, 2.132, 2.015, 1.943, 1.895, 1.860, 1.833, 1.812, 1.796, 1.782, 1.771,
    1.761, 1.753, 1.746, 1.740, 1.734, 1.729, 1.725, 1.721, 1.717, 1.714, 1.711, 1.708, 1.706,
    1.703, 1.701, 1.699, 1.697,
];
#[allow(clippy::approx_constant)]
const T_099: [f64; 30] = [
    31.821, 6.965, 4.541, 3.747, 3.365, 3.143, 2.998, 2.896, 2.821, 2.764, 2.718, 2.681, 2.650,
    2.624, 2.602, 2.583, 2.567, 2.552, 2.539, 2.528, 2.518, 2.508, 2.500, 2.492, 2.485, 2.479,
    2.473, 2.467, 2.462, 2.457,
];

/// Critical value for `confidence` in {0.90, 0.95, 0.99}. Beyond 30 degrees
/// of freedom the 30-df value is used, which is slightly conservative.
pub fn critical_value(confidence: f64, degrees_of_freedom: usize) -> Result<f64> {
    let table = if (confidence - 0.90).abs() < 1e-9 {
        &T_090
    } else if (confidence - 0.95).abs() < 1e-9 {
        &T_095
    } else if (confidence - 0.99).abs() < 1e-9 {
        &T_099
    } else {
        return Err(Error::InvalidArgument(format!(
            "unsupported confidence {confidence}; use 0.90, 0.95 or 0.99"
        )));
    };
    if degrees_of_freedom == 0 {
        return Err(Error::InvalidArgument(
            "need at least one degree of freedom".into(),
        ));
    }
    Ok(table[degrees_of_freedom.min(30) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub mean_difference: f64,
    pub t: f64,
    pub degrees_of_freedom: usize,
    pub critical: f64,
    /// `mean(a - b) > 0` at the requested confidence.
    pub significant: bool,
}

/// Tests whether `a` exceeds `b` on average over paired observations.
///
/// With zero spread in the differences the verdict is certain: significant
/// exactly when the mean difference is positive.
pub fn paired_t_test(a: &[f64], b: &[f64], confidence: f64) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{} vs {} paired observations",
            a.len(),
            b.len()
        )));
    }
    let r = a.len();
    if r < 2 {
        return Err(Error::InvalidArgument(
            "need at least two paired observations".into(),
        ));
    }
    let critical = critical_value(confidence, r - 1)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / r as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    let sd = var.sqrt();
    let t = if sd > 0.0 {
        mean / (sd / (r as f64).sqrt())
    } else if mean > 0.0 {
        f64::INFINITY
    } else if mean < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    Ok(PairedTTest {
        mean_difference: mean,
        t,
        degrees_of_freedom: r - 1,
        critical,
        significant: t > critical,
    })
}
