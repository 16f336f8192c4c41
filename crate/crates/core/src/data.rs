//! Datasets: CSV ingestion, seeded labeled/unlabeled splits and the
//! two-Gaussian synthetic benchmark.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, BoxMuller};

/// Token marking an unlabeled row in the label column.
pub const UNLABELED_TOKEN: &str = "?";

/// Feature matrix plus per-example label status.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One example per row.
    pub features: DMatrix<f64>,
    /// `None` marks an unlabeled example.
    pub labels: Vec<Option<usize>>,
    pub class_count: usize,
    /// Original class tokens, indexed by class.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<Option<usize>>,
        class_count: usize,
    ) -> Result<Self> {
        let class_names = (0..class_count).map(|c| c.to_string()).collect();
        Self::with_class_names(features, labels, class_count, class_names)
    }

    pub fn with_class_names(
        features: DMatrix<f64>,
        labels: Vec<Option<usize>>,
        class_count: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != features.nrows() {
            return Err(Error::Shape(format!(
                "{} labels for {} examples",
                labels.len(),
                features.nrows()
            )));
        }
        if class_count < 2 {
            return Err(Error::TooFewClasses { found: class_count });
        }
        if class_names.len() != class_count {
            return Err(Error::Shape(format!(
                "{} class names for {} classes",
                class_names.len(),
                class_count
            )));
        }
        if let Some(bad) = labels.iter().flatten().find(|&&c| c >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "class index {bad} out of range for {class_count} classes"
            )));
        }
        if let Some((row, column)) = first_non_finite(&features) {
            return Err(Error::NonFinite { row, column });
        }
        Ok(Self {
            features,
            labels,
            class_count,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Indices of labeled examples, ascending.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i].is_some())
            .collect()
    }

    /// Indices of unlabeled examples, ascending.
    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i].is_none())
            .collect()
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

/// How many examples per class to reveal, and the seed choosing them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub labeled_per_class: usize,
    pub seed: u64,
}

/// Loads a headerless CSV file. See [`load_csv_with`].
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    load_csv_with(path, false)
}

/// Loads a comma-separated file whose last column is the class token
/// (`?` for unlabeled) and whose other columns are real features.
///
/// Classes are indexed by first appearance of their token. Row numbers in
/// errors are 1-based file lines.
pub fn load_csv_with(path: impl AsRef<Path>, header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(csv_error)?;

    let mut values: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut width: Option<usize> = None;
    let first_line = if header { 2 } else { 1 };

    for (offset, record) in reader.records().enumerate() {
        let row = first_line + offset;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() < 2 {
            return Err(Error::Parse {
                row,
                message: format!("expected at least 2 columns, found {}", record.len()),
            });
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {w} columns, found {}", record.len()),
                })
            }
            Some(_) => {}
        }
        let d = record.len() - 1;
        for (column, field) in record.iter().take(d).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column {}: `{field}` is not a number", column + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column });
            }
            values.push(v);
        }
        let token = &record[d];
        if token == UNLABELED_TOKEN {
            labels.push(None);
        } else {
            let next = class_index.len();
            let idx = *class_index.entry(token.to_string()).or_insert_with(|| {
                class_names.push(token.to_string());
                next
            });
            labels.push(Some(idx));
        }
    }

    let Some(width) = width else {
        return Err(Error::EmptyDataset);
    };
    if class_names.len() < 2 {
        return Err(Error::TooFewClasses {
            found: class_names.len(),
        });
    }
    let n = labels.len();
    let features = DMatrix::from_row_slice(n, width - 1, &values);
    let c = class_names.len();
    Dataset::with_class_names(features, labels, c, class_names)
}

/// Writes `dataset` in the format read by [`load_csv`]: features, then the
/// class token or `?`. Floats use the shortest round-tripping form.
pub fn write_csv<W: std::io::Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let mut record = Vec::with_capacity(dataset.dim() + 1);
    for (i, label) in dataset.labels.iter().enumerate() {
        record.clear();
        record.extend(dataset.features.row(i).iter().map(|v| v.to_string()));
        record.push(match label {
            Some(c) => dataset.class_names[*c].clone(),
            None => UNLABELED_TOKEN.to_string(),
        });
        writer.write_record(&record).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            row: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Reveals `labeled_per_class` examples of every class, chosen by a seeded
/// shuffle. Returns `(labeled, unlabeled)`, both ascending.
pub fn split(dataset: &Dataset, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if spec.labeled_per_class == 0 {
        return Err(Error::InvalidArgument(
            "labeled_per_class must be positive".into(),
        ));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count];
    for (i, label) in dataset.labels.iter().enumerate() {
        match label {
            Some(c) => by_class[*c].push(i),
            None => return Err(Error::MissingLabel { index: i }),
        }
    }

    let mut rng = seeded(spec.seed);
    let mut labeled = Vec::new();
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < spec.labeled_per_class {
            return Err(Error::ClassTooSmall {
                class,
                available: members.len(),
                requested: spec.labeled_per_class,
            });
        }
        members.shuffle(&mut rng);
        labeled.extend_from_slice(&members[..spec.labeled_per_class]);
    }
    labeled.sort_unstable();

    let mut is_labeled = vec![false; dataset.len()];
    for &i in &labeled {
        is_labeled[i] = true;
    }
    let unlabeled = (0..dataset.len()).filter(|&i| !is_labeled[i]).collect();
    Ok((labeled, unlabeled))
}

/// Centers of the two synthetic classes.
pub const NOISY_GAUSSIAN_CENTERS: [[f64; 2]; 2] = [[0.0, 0.0], [2.5, 2.5]];

/// Two isotropic 2-D Gaussian classes centered at (0, 0) and (2.5, 2.5) with
/// covariance `covariance_scale * I`. Class 0 occupies the first
/// `n_per_class` rows. Every example carries its true label.
pub fn synth_noisy_gaussian(
    n_per_class: usize,
    covariance_scale: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(covariance_scale > 0.0 && covariance_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "covariance scale must be positive, got {covariance_scale}"
        )));
    }
    let sd = covariance_scale.sqrt();
    let mut rng = seeded(seed);
    let mut normal = BoxMuller::new();
    let n = 2 * n_per_class;
    let mut features = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for (class, center) in NOISY_GAUSSIAN_CENTERS.iter().enumerate() {
        for k in 0..n_per_class {
            let row = class * n_per_class + k;
            features[(row, 0)] = center[0] + sd * normal.sample(&mut rng);
            features[(row, 1)] = center[1] + sd * normal.sample(&mut rng);
            labels.push(Some(class));
        }
    }
    Dataset::new(features, labels, 2)
}
