//! Tabular dataset loading, cleaning, splitting and synthesis, plus the
//! attacker's zero-knowledge random query pools.
//!
//! All features live in standardized space: column statistics are fit on the
//! defender's training portion and reused everywhere (test set, generated
//! counterfactuals, the autoencoder), so the `[-3, 3]` random-query range is
//! meaningful in units of training-set standard deviations.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column affine transform `(x - mean) / std`, fit on the defender's
/// training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Fit on the given rows of `x` (every row when `rows` is `None`).
    pub fn fit(x: &Array2<f64>, rows: Option<&[usize]>) -> Self {
        let d = x.ncols();
        let idx: Vec<usize> = match rows {
            Some(r) => r.to_vec(),
            None => (0..x.nrows()).collect(),
        };
        let n = idx.len().max(1) as f64;
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        for j in 0..d {
            let mut sum = 0.0;
            for &i in &idx {
                sum += x[[i, j]];
            }
            let mean = sum / n;
            let mut var = 0.0;
            for &i in &idx {
                let dv = x[[i, j]] - mean;
                var += dv * dv;
            }
            means[j] = mean;
            // Constant columns standardize to zero instead of dividing by zero.
            let sd = (var / n).sqrt();
            stds[j] = if sd < 1e-12 { 1.0 } else { sd };
        }
        Standardizer { means, stds }
    }

    /// Identity transform for data that is already standardized.
    pub fn identity(d: usize) -> Self {
        Standardizer {
            means: vec![0.0; d],
            stds: vec![1.0; d],
        }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for j in 0..row.len() {
                row[j] = (row[j] - self.means[j]) / self.stds[j];
            }
        }
        out
    }

    pub fn inverse_transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for j in 0..row.len() {
                row[j] = row[j] * self.stds[j] + self.means[j];
            }
        }
        out
    }
}

/// A standardized tabular binary-classification dataset.
///
/// Invariants enforced by [`Dataset::new`]: all feature entries finite,
/// labels in `{0, 1}` with both classes present.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    pub name: String,
    /// The transform that produced `features` from raw values.
    pub standardizer: Standardizer,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
        name: impl Into<String>,
        standardizer: Standardizer,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() != feature_names.len() {
            return Err(Error::Shape(format!(
                "{} feature columns vs {} names",
                features.ncols(),
                feature_names.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        let classes: BTreeSet<u8> = labels.iter().copied().collect();
        if classes.len() < 2 {
            return Err(Error::Data(
                "both classes must be present after cleaning".into(),
            ));
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
            name: name.into(),
            standardizer,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Dataset restricted to the given row indices (standardizer shared).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(
            features,
            labels,
            self.feature_names.clone(),
            self.name.clone(),
            self.standardizer.clone(),
        )
    }

    /// Persist as a directory: `schema.json` (names, standardization
    /// statistics, label column) plus `data.csv` (features + label column).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let schema = DatasetSchema {
            format: DATASET_FORMAT.to_string(),
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            label_column: "label".to_string(),
            n_rows: self.n_rows(),
            n_features: self.n_features(),
            standardization: self.standardizer.clone(),
        };
        let f = fs::File::create(dir.join("schema.json"))?;
        serde_json::to_writer_pretty(f, &schema)?;

        let mut w = csv::Writer::from_path(dir.join("data.csv"))?;
        let mut header = self.feature_names.clone();
        header.push("label".to_string());
        w.write_record(&header)?;
        for (row, &label) in self.features.rows().into_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load a dataset previously written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let schema_path = dir.join("schema.json");
        let f = fs::File::open(&schema_path)
            .map_err(|e| Error::Input(format!("{}: {e}", schema_path.display())))?;
        let schema: DatasetSchema = serde_json::from_reader(f)?;
        if schema.format != DATASET_FORMAT {
            return Err(Error::Input(format!(
                "unsupported dataset format {:?}",
                schema.format
            )));
        }
        let table = read_numeric_csv(&dir.join("data.csv"))?;
        let label_idx = table
            .header
            .iter()
            .position(|h| h == &schema.label_column)
            .ok_or_else(|| Error::Input("label column missing from data.csv".into()))?;
        let (features, labels, names) = split_label_column(&table, label_idx)?;
        if names != schema.feature_names {
            return Err(Error::Input("schema/data column mismatch".into()));
        }
        Dataset::new(features, labels, names, schema.name, schema.standardization)
    }
}

pub(crate) const DATASET_FORMAT: &str = "mealab-dataset-v1";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetSchema {
    format: String,
    name: String,
    feature_names: Vec<String>,
    label_column: String,
    n_rows: usize,
    n_features: usize,
    standardization: Standardizer,
}

/// Deterministic train/test partition request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Stratified train/test split. The test portion is the attack's evaluation
/// set; both portions keep both classes, and identical `(fraction, seed)`
/// always yields identical index sets.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train_idx, test_idx) = split_indices(&ds.labels, spec)?;
    Ok((ds.subset(&train_idx)?, ds.subset(&test_idx)?))
}

/// Index-level split used both by [`split`] and by loaders that need to fit
/// standardization statistics before materializing the partition.
pub(crate) fn split_indices(labels: &[u8], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0,1), got {}",
            spec.train_fraction
        )));
    }
    let n = labels.len();
    let train_total = ((n as f64) * spec.train_fraction).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    for idx in by_class.iter_mut() {
        idx.shuffle(&mut rng);
    }
    if by_class.iter().any(|c| c.len() < 2) {
        return Err(Error::Data(
            "each class needs at least two rows to stratify".into(),
        ));
    }

    // Proportional allocation, clamped so both sides keep both classes.
    let n0 = by_class[0].len();
    let take0 = (((n0 as f64) * spec.train_fraction).round() as usize).clamp(1, n0 - 1);
    let take1 = (train_total.saturating_sub(take0)).clamp(1, by_class[1].len() - 1);

    let mut train: Vec<usize> = Vec::with_capacity(take0 + take1);
    let mut test: Vec<usize> = Vec::new();
    train.extend_from_slice(&by_class[0][..take0]);
    test.extend_from_slice(&by_class[0][take0..]);
    train.extend_from_slice(&by_class[1][..take1]);
    test.extend_from_slice(&by_class[1][take1..]);
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Matrix of independent uniform draws in `[low, high]`, the attacker's
/// zero-knowledge query pool.
pub fn generate_random_queries(
    n: usize,
    d: usize,
    low: f64,
    high: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    if low >= high {
        return Err(Error::Config(format!(
            "query range requires low < high, got [{low}, {high}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(low, high);
    Ok(Array2::from_shape_fn((n, d), |_| dist.sample(&mut rng)))
}

/// Two balanced Gaussian clusters with means `±(class_separation / 2)` on
/// every axis and unit covariance, standardized like the real datasets.
pub fn make_synthetic(n: usize, d: usize, class_separation: f64, seed: u64) -> Result<Dataset> {
    if n < 4 {
        return Err(Error::Config("synthetic dataset needs n >= 4".into()));
    }
    if d < 2 {
        return Err(Error::Config("synthetic dataset needs d >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = class_separation / 2.0;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");

    let n0 = n / 2;
    let mut raw = Array2::zeros((n, d));
    let mut labels = vec![0u8; n];
    for i in 0..n {
        let (label, center) = if i < n0 { (0u8, -half) } else { (1u8, half) };
        labels[i] = label;
        for j in 0..d {
            raw[[i, j]] = center + noise.sample(&mut rng);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let raw = raw.select(Axis(0), &order);
    let labels: Vec<u8> = order.iter().map(|&i| labels[i]).collect();

    let (train_idx, _) = split_indices(&labels, &SplitSpec::default())?;
    let standardizer = Standardizer::fit(&raw, Some(&train_idx));
    let features = standardizer.transform(&raw);
    let names = (0..d).map(|j| format!("f{j}")).collect();
    Dataset::new(features, labels, names, "synthetic", standardizer)
}

/// Which cleaning pipeline to apply to a delimited-text file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Gmsc,
    CreditFraud,
    CaliforniaHousing,
    /// Generic file with a `label` column already in `{0,1}`.
    SyntheticFile,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmsc" => Ok(DatasetKind::Gmsc),
            "credit_fraud" => Ok(DatasetKind::CreditFraud),
            "california_housing" => Ok(DatasetKind::CaliforniaHousing),
            "synthetic-file" => Ok(DatasetKind::SyntheticFile),
            other => Err(Error::Config(format!("unknown dataset name {other:?}"))),
        }
    }
}

/// Knobs for [`load_dataset_with`]. The defaults match the documented
/// pipeline: standardization statistics come from the default split's
/// training portion, GMSC columns are clipped at the 0.1/99.9 percentiles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Split whose training portion provides standardization statistics.
    pub standardization_split: SplitSpec,
    /// Percentile clipping applied to GMSC columns (fraction from each tail).
    pub clip_tail_fraction: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            standardization_split: SplitSpec::default(),
            clip_tail_fraction: 0.001,
        }
    }
}

/// Load and clean one of the supported datasets: rows with missing values are
/// dropped, the housing target is binarized at its median, and every feature
/// column is standardized with statistics from the training portion of
/// `LoadOptions::standardization_split`.
pub fn load_dataset(name: &str, path: &Path) -> Result<Dataset> {
    load_dataset_with(name.parse()?, path, &LoadOptions::default())
}

pub fn load_dataset_with(kind: DatasetKind, path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let table = read_numeric_csv(path)?;
    let (mut raw, labels, names) = match kind {
        DatasetKind::Gmsc => {
            let label_idx = find_column(&table, &["SeriousDlqin2yrs", "label"])?;
            split_label_column(&table, label_idx)?
        }
        DatasetKind::CreditFraud => {
            let label_idx = find_column(&table, &["Class", "label"])?;
            split_label_column(&table, label_idx)?
        }
        DatasetKind::CaliforniaHousing => {
            let target_idx = find_column(&table, &["median_house_value", "MedHouseVal", "target"])?;
            binarize_at_median(&table, target_idx)?
        }
        DatasetKind::SyntheticFile => {
            let label_idx = find_column(&table, &["label"])?;
            split_label_column(&table, label_idx)?
        }
    };
    if kind == DatasetKind::Gmsc {
        clip_percentiles(&mut raw, opts.clip_tail_fraction);
    }
    let classes: BTreeSet<u8> = labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::Data(
            "single-class labels after cleaning".to_string(),
        ));
    }
    // Tiny tables that cannot stratify fall back to all-rows statistics.
    let train_idx = split_indices(&labels, &opts.standardization_split)
        .map(|(train, _)| train)
        .unwrap_or_else(|_| (0..labels.len()).collect());
    let standardizer = Standardizer::fit(&raw, Some(&train_idx));
    let features = standardizer.transform(&raw);
    let name = match kind {
        DatasetKind::Gmsc => "gmsc",
        DatasetKind::CreditFraud => "credit_fraud",
        DatasetKind::CaliforniaHousing => "california_housing",
        DatasetKind::SyntheticFile => "synthetic-file",
    };
    Dataset::new(features, labels, names, name, standardizer)
}

/// Undersample the majority class down to `ratio : 1` against the minority.
/// Applied to the defender's training portion only (kept out of the loaders
/// so row-count contracts on the raw files stay intact).
pub fn undersample_majority(ds: &Dataset, ratio: f64, seed: u64) -> Result<Dataset> {
    if ratio < 1.0 {
        return Err(Error::Config("undersample ratio must be >= 1".into()));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let (maj, min) = if by_class[0].len() >= by_class[1].len() {
        (0, 1)
    } else {
        (1, 0)
    };
    let keep_maj = (((by_class[min].len() as f64) * ratio).round() as usize)
        .clamp(1, by_class[maj].len());
    if keep_maj == by_class[maj].len() {
        return Ok(ds.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut maj_idx = by_class[maj].clone();
    maj_idx.shuffle(&mut rng);
    maj_idx.truncate(keep_maj);
    let mut keep: Vec<usize> = by_class[min].iter().chain(maj_idx.iter()).copied().collect();
    keep.sort_unstable();
    ds.subset(&keep)
}

// ---------------------------------------------------------------------------
// CSV plumbing
// ---------------------------------------------------------------------------

struct NumericTable {
    header: Vec<String>,
    /// Row-major values; rows with any missing/unparseable cell are dropped.
    rows: Vec<Vec<f64>>,
}

fn read_numeric_csv(path: &Path) -> Result<NumericTable> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let mut header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    // Kaggle exports often carry an unnamed leading index column.
    let drop_first = header.first().map(|h| h.is_empty()).unwrap_or(false);
    if drop_first {
        header.remove(0);
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let cells = record.iter().skip(usize::from(drop_first));
        let mut row = Vec::with_capacity(header.len());
        let mut ok = true;
        for cell in cells {
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && row.len() == header.len() {
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "{}: no complete numeric rows",
            path.display()
        )));
    }
    Ok(NumericTable { header, rows })
}

fn find_column(table: &NumericTable, candidates: &[&str]) -> Result<usize> {
    for cand in candidates {
        if let Some(i) = table.header.iter().position(|h| h == cand) {
            return Ok(i);
        }
    }
    Err(Error::Input(format!(
        "none of the expected columns {candidates:?} found in {:?}",
        table.header
    )))
}

fn split_label_column(
    table: &NumericTable,
    label_idx: usize,
) -> Result<(Array2<f64>, Vec<u8>, Vec<String>)> {
    let d = table.header.len() - 1;
    let mut features = Array2::zeros((table.rows.len(), d));
    let mut labels = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let l = row[label_idx];
        if l != 0.0 && l != 1.0 {
            return Err(Error::Data(format!(
                "label column must contain only 0/1, found {l}"
            )));
        }
        labels.push(l as u8);
        let mut j_out = 0;
        for (j, &v) in row.iter().enumerate() {
            if j != label_idx {
                features[[i, j_out]] = v;
                j_out += 1;
            }
        }
    }
    let names = table
        .header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Ok((features, labels, names))
}

fn binarize_at_median(
    table: &NumericTable,
    target_idx: usize,
) -> Result<(Array2<f64>, Vec<u8>, Vec<String>)> {
    let mut targets: Vec<f64> = table.rows.iter().map(|r| r[target_idx]).collect();
    targets.sort_by(|a, b| a.partial_cmp(b).expect("finite targets"));
    let median = if targets.len() % 2 == 1 {
        targets[targets.len() / 2]
    } else {
        0.5 * (targets[targets.len() / 2 - 1] + targets[targets.len() / 2])
    };

    let d = table.header.len() - 1;
    let mut features = Array2::zeros((table.rows.len(), d));
    let mut labels = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        labels.push(u8::from(row[target_idx] > median));
        let mut j_out = 0;
        for (j, &v) in row.iter().enumerate() {
            if j != target_idx {
                features[[i, j_out]] = v;
                j_out += 1;
            }
        }
    }
    let names = table
        .header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Ok((features, labels, names))
}

fn clip_percentiles(x: &mut Array2<f64>, tail: f64) {
    if tail <= 0.0 {
        return;
    }
    let n = x.nrows();
    for j in 0..x.ncols() {
        let mut col: Vec<f64> = x.column(j).to_vec();
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
        let lo_i = ((n as f64) * tail).floor() as usize;
        let hi_i = (((n as f64) * (1.0 - tail)).ceil() as usize).min(n - 1);
        let (lo, hi) = (col[lo_i], col[hi_i]);
        for i in 0..n {
            x[[i, j]] = x[[i, j]].clamp(lo, hi);
        }
    }
}

/// Mean of each column (used by tests and the synthetic-data oracles).
pub fn column_means(x: &Array2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn synthetic_is_deterministic_and_standardized() {
        let a = make_synthetic(200, 5, 3.0, 7).unwrap();
        let b = make_synthetic(200, 5, 3.0, 7).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);

        let (train, _) = split(&a, &SplitSpec::default()).unwrap();
        for j in 0..train.n_features() {
            let col = train.features.column(j);
            let mean = col.mean().unwrap();
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / col.len() as f64;
            assert!(mean.abs() < 1e-6, "column {j} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-3, "column {j} std {}", var.sqrt());
        }
    }

    #[test]
    fn standardize_round_trip() {
        let ds = make_synthetic(100, 4, 2.0, 3).unwrap();
        let raw = ds.standardizer.inverse_transform(&ds.features);
        let back = ds.standardizer.transform(&raw);
        for (a, b) in ds.features.iter().zip(back.iter()) {
            let rel = (a - b).abs() / a.abs().max(1.0);
            assert!(rel < 1e-9);
        }
    }

    #[test]
    fn split_counts_and_determinism() {
        let ds = make_synthetic(100, 3, 2.0, 1).unwrap();
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 9,
        };
        let (train, test) = split(&ds, &spec).unwrap();
        assert_eq!(train.n_rows(), 80);
        assert_eq!(test.n_rows(), 20);
        assert!(train.labels.iter().any(|&l| l == 0) && train.labels.iter().any(|&l| l == 1));
        assert!(test.labels.iter().any(|&l| l == 0) && test.labels.iter().any(|&l| l == 1));

        let (i1, j1) = split_indices(&ds.labels, &spec).unwrap();
        let (i2, j2) = split_indices(&ds.labels, &spec).unwrap();
        assert_eq!(i1, i2);
        assert_eq!(j1, j2);
        // Partition: disjoint cover.
        let mut all: Vec<usize> = i1.iter().chain(j1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_degenerate_fraction() {
        let ds = make_synthetic(50, 3, 2.0, 1).unwrap();
        for f in [0.0, 1.0, -0.5, 1.5] {
            let err = split(&ds, &SplitSpec { train_fraction: f, seed: 0 });
            assert!(matches!(err, Err(Error::Config(_))), "fraction {f}");
        }
    }

    #[test]
    fn random_queries_respect_bounds() {
        let q = generate_random_queries(10_000, 5, -3.0, 3.0, 11).unwrap();
        for col in q.columns() {
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo >= -3.0 && hi <= 3.0);
        }
        let empty = generate_random_queries(0, 5, -3.0, 3.0, 11).unwrap();
        assert_eq!(empty.nrows(), 0);
        assert!(matches!(
            generate_random_queries(5, 2, 1.0, 1.0, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn random_query_mean_near_center() {
        let q = generate_random_queries(120_000, 1, -3.0, 3.0, 5).unwrap();
        // Uniform on [-3,3]: sd = 6/sqrt(12); the sample mean over n draws
        // should sit within 3 standard errors of 0.
        let n = q.nrows() as f64;
        let se = (6.0 / 12f64.sqrt()) / n.sqrt();
        let mean = q.column(0).mean().unwrap();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, 3se {}", 3.0 * se);
    }

    #[test]
    fn single_class_table_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.csv");
        std::fs::write(&path, "a,b,label\n1.0,2.0,0\n2.0,1.0,0\n3.0,0.5,0\n").unwrap();
        let err = load_dataset("synthetic-file", &path);
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn missing_file_is_input_error() {
        let err = load_dataset("gmsc", Path::new("/nonexistent/file.csv"));
        assert!(matches!(err, Err(Error::Input(_))));
        let err = load_dataset("not-a-name", Path::new("/tmp/x.csv"));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn rows_with_missing_values_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("holes.csv");
        std::fs::write(
            &path,
            "a,b,label\n1.0,2.0,0\n,1.0,1\n3.0,0.5,1\n2.0,NaN,0\n0.5,1.5,0\n",
        )
        .unwrap();
        let ds = load_dataset("synthetic-file", &path).unwrap();
        assert_eq!(ds.n_rows(), 3);
    }

    #[test]
    fn housing_binarizes_at_median() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("housing.csv");
        let mut body = String::from("x1,x2,median_house_value\n");
        for i in 0..100 {
            body.push_str(&format!("{}.0,{}.5,{}\n", i, 100 - i, i * 1000));
        }
        std::fs::write(&path, body).unwrap();
        let ds = load_dataset("california_housing", &path).unwrap();
        let positives: usize = ds.labels.iter().map(|&l| l as usize).sum();
        assert!((40..=60).contains(&positives), "positives {positives}");
        assert_eq!(ds.n_features(), 2);
    }

    #[test]
    fn undersampling_hits_requested_ratio() {
        let ds = {
            // 90/10 imbalance.
            let mut features = Array2::zeros((100, 2));
            let mut labels = vec![0u8; 100];
            for i in 0..100 {
                features[[i, 0]] = i as f64;
                features[[i, 1]] = -(i as f64);
                if i < 10 {
                    labels[i] = 1;
                }
            }
            Dataset::new(
                features,
                labels,
                vec!["a".into(), "b".into()],
                "imbalanced",
                Standardizer::identity(2),
            )
            .unwrap()
        };
        let balanced = undersample_majority(&ds, 5.0, 3).unwrap();
        let pos: usize = balanced.labels.iter().map(|&l| l as usize).sum();
        let neg = balanced.n_rows() - pos;
        assert_eq!(pos, 10);
        assert_eq!(neg, 50);
    }

    #[test]
    fn dataset_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_synthetic(60, 4, 2.5, 13).unwrap();
        ds.save(dir.path()).unwrap();
        let loaded = Dataset::load(dir.path()).unwrap();
        assert_eq!(loaded.labels, ds.labels);
        assert_eq!(loaded.feature_names, ds.feature_names);
        for (a, b) in ds.features.iter().zip(loaded.features.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 0.0);
        }
    }

    #[test]
    fn zero_separation_is_near_chance() {
        let ds = make_synthetic(2000, 4, 0.0, 21).unwrap();
        let means0 = {
            let rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.labels[i] == 0).collect();
            column_means(&ds.features.select(Axis(0), &rows))
        };
        let means1 = {
            let rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.labels[i] == 1).collect();
            column_means(&ds.features.select(Axis(0), &rows))
        };
        for (a, b) in means0.iter().zip(means1.iter()) {
            assert!((a - b).abs() < 0.2, "class means should coincide: {a} vs {b}");
        }
    }
}
