//! Dataset synthesis, CSV ingestion, normalization, and vertical
//! feature splitting.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A labeled tabular dataset. Labels are contiguous class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub n_classes: usize,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<usize>, n_classes: usize, feature_names: Vec<String>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape(format!(
                "dataset: {} feature rows vs {} labels",
                x.rows(),
                y.len()
            )));
        }
        if x.rows() == 0 {
            return Err(Error::EmptyDataset("dataset has no rows".to_string()));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::shape(format!(
                "dataset: {} feature names vs {} columns",
                feature_names.len(),
                x.cols()
            )));
        }
        if let Some(bad) = y.iter().find(|&&c| c >= n_classes) {
            return Err(Error::validation(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if !x.is_finite() {
            return Err(Error::validation("dataset contains non-finite features".to_string()));
        }
        Ok(Dataset {
            x,
            y,
            n_classes,
            feature_names,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Row subset in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Parameters for Gaussian blob synthesis.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub n_classes: usize,
    pub cluster_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

/// How feature columns are assigned to parties.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitAssignment {
    ContiguousEven,
    Explicit(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerticalSplitSpec {
    pub parties: usize,
    pub assignment: SplitAssignment,
}

/// Synthesizes class clusters centered on scaled simplex vertices
/// (center `c` sits at `s * e_c`, so all pairwise center distances equal
/// `cluster_separation`), with isotropic Gaussian noise.
pub fn gen_gaussian_blobs(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n == 0 || spec.d == 0 || spec.n_classes == 0 {
        return Err(Error::config("blob spec needs n, d, classes >= 1".to_string()));
    }
    if spec.n_classes > spec.n {
        return Err(Error::config(format!(
            "cannot spread {} classes over {} samples",
            spec.n_classes, spec.n
        )));
    }
    if spec.n_classes > spec.d {
        return Err(Error::config(format!(
            "simplex placement needs d >= classes, got d={} classes={}",
            spec.d, spec.n_classes
        )));
    }
    if !(spec.cluster_separation > 0.0) || spec.noise_std < 0.0 {
        return Err(Error::config(
            "cluster_separation must be > 0 and noise_std >= 0".to_string(),
        ));
    }
    let scale = spec.cluster_separation / std::f64::consts::SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| Error::config(format!("noise_std: {e}")))?;
    let mut x = Matrix::zeros(spec.n, spec.d);
    let mut y = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let class = i % spec.n_classes;
        let row = x.row_mut(i);
        row[class] = scale;
        if spec.noise_std > 0.0 {
            for v in row.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
        y.push(class);
    }
    let names = (0..spec.d).map(|j| format!("f{j}")).collect();
    Dataset::new(x, y, spec.n_classes, names)
}

/// Loads a CSV dataset. All non-label columns must parse as finite
/// floats; labels may be arbitrary strings and are encoded to
/// `0..C-1` by first appearance.
///
/// With `has_header` the label column is found by name; without one,
/// `label_column` must be a 0-based column index.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .from_path(path.as_ref())?;

    let (label_idx, feature_names): (usize, Vec<String>) = if has_header {
        let headers = reader
            .headers()
            .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
            .clone();
        let idx = headers
            .iter()
            .position(|h| h == label_column)
            .ok_or_else(|| {
                Error::Schema(format!(
                    "label column '{label_column}' not found in header [{}]",
                    headers.iter().collect::<Vec<_>>().join(", ")
                ))
            })?;
        let names = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, h)| h.to_string())
            .collect();
        (idx, names)
    } else {
        let idx: usize = label_column.parse().map_err(|_| {
            Error::Schema(format!(
                "without a header, label_column must be a column index, got '{label_column}'"
            ))
        })?;
        (idx, Vec::new())
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels_raw: Vec<String> = Vec::new();
    // Physical 1-based line number of the current record.
    let mut line = if has_header { 1 } else { 0 };
    for record in reader.records() {
        let record = record.map_err(|e| Error::Schema(format!("malformed csv: {e}")))?;
        line += 1;
        if label_idx >= record.len() {
            return Err(Error::Schema(format!(
                "row {line} has {} fields, label column index is {label_idx}",
                record.len()
            )));
        }
        let mut features = Vec::with_capacity(record.len() - 1);
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                labels_raw.push(field.to_string());
                continue;
            }
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: line,
                col: col + 1,
                message: format!("'{field}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    col: col + 1,
                    message: format!("'{field}' is not finite"),
                });
            }
            features.push(value);
        }
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(
            "csv file contains no data rows".to_string(),
        ));
    }

    // Encode labels by first appearance.
    let mut classes: Vec<String> = Vec::new();
    let y: Vec<usize> = labels_raw
        .iter()
        .map(|raw| {
            if let Some(i) = classes.iter().position(|c| c == raw) {
                i
            } else {
                classes.push(raw.clone());
                classes.len() - 1
            }
        })
        .collect();

    let x = Matrix::from_rows(&rows)?;
    let names = if has_header {
        feature_names
    } else {
        let mut names = Vec::with_capacity(x.cols());
        let mut j = 0;
        for _ in 0..x.cols() {
            if j == label_idx {
                j += 1;
            }
            names.push(format!("c{j}"));
            j += 1;
        }
        names
    };
    Dataset::new(x, y, classes.len(), names)
}

/// Writes a dataset as CSV with a header; the label column is written
/// last as the class index. Floats use the shortest round-trip form.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = dataset.feature_names.clone();
    header.push("label".to_string());
    writer
        .write_record(&header)
        .map_err(|e| Error::Schema(format!("csv write: {e}")))?;
    for r in 0..dataset.len() {
        let mut record: Vec<String> = dataset.x.row(r).iter().map(|v| v.to_string()).collect();
        record.push(dataset.y[r].to_string());
        writer
            .write_record(&record)
            .map_err(|e| Error::Schema(format!("csv write: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}

/// Assigns feature columns to parties.
pub fn vertical_split(dataset: &Dataset, spec: &VerticalSplitSpec) -> Result<Vec<Vec<usize>>> {
    let d = dataset.dim();
    if spec.parties == 0 {
        return Err(Error::config("need at least one party".to_string()));
    }
    if spec.parties > d {
        return Err(Error::config(format!(
            "cannot split {d} features across {} parties",
            spec.parties
        )));
    }
    match &spec.assignment {
        SplitAssignment::ContiguousEven => {
            let base = d / spec.parties;
            let extra = d % spec.parties;
            let mut slices = Vec::with_capacity(spec.parties);
            let mut start = 0;
            for k in 0..spec.parties {
                let width = base + usize::from(k < extra);
                slices.push((start..start + width).collect());
                start += width;
            }
            Ok(slices)
        }
        SplitAssignment::Explicit(slices) => {
            if slices.len() != spec.parties {
                return Err(Error::validation(format!(
                    "explicit assignment has {} slices for {} parties",
                    slices.len(),
                    spec.parties
                )));
            }
            let mut seen = vec![false; d];
            for (k, slice) in slices.iter().enumerate() {
                for &c in slice {
                    if c >= d {
                        return Err(Error::validation(format!(
                            "party {k}: column {c} out of range for {d} features"
                        )));
                    }
                    if seen[c] {
                        return Err(Error::validation(format!(
                            "column {c} assigned to more than one party"
                        )));
                    }
                    seen[c] = true;
                }
            }
            if let Some(missing) = seen.iter().position(|v| !v) {
                return Err(Error::validation(format!(
                    "column {missing} not assigned to any party"
                )));
            }
            Ok(slices.clone())
        }
    }
}

/// Per-column mean/std fitted on one dataset and applicable to another
/// (test splits are normalized with training statistics).
#[derive(Clone, Debug)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    pub fn fit(dataset: &Dataset) -> Result<ColumnStats> {
        if dataset.len() < 2 {
            return Err(Error::validation(
                "normalization needs at least 2 rows".to_string(),
            ));
        }
        let n = dataset.len() as f64;
        let d = dataset.dim();
        let mut mean = vec![0.0; d];
        for r in 0..dataset.len() {
            for (m, v) in mean.iter_mut().zip(dataset.x.row(r)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for r in 0..dataset.len() {
            for ((s, m), v) in var.iter_mut().zip(&mean).zip(dataset.x.row(r)) {
                let diff = v - m;
                *s += diff * diff;
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(ColumnStats { mean, std })
    }

    /// Z-scores every column; zero-variance columns map to 0.
    pub fn apply(&self, dataset: &Dataset) -> Dataset {
        let mut out = dataset.clone();
        for r in 0..out.len() {
            let row = out.x.row_mut(r);
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if *s > 1e-12 { (*v - m) / s } else { 0.0 };
            }
        }
        out
    }
}

/// Z-score normalization using the dataset's own statistics.
pub fn normalize(dataset: &Dataset) -> Result<Dataset> {
    Ok(ColumnStats::fit(dataset)?.apply(dataset))
}

/// Stratified train/test split. Test counts per class follow the
/// largest-remainder rule so the overall fraction is honored as closely
/// as integers allow; ties go to the lowest class index. Row order is
/// preserved inside each side.
pub fn train_test_split(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes];
    for (i, &c) in dataset.y.iter().enumerate() {
        per_class[c].push(i);
    }
    for (c, rows) in per_class.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::validation(format!(
                "class {c} has {} sample(s); stratified splitting needs at least 2",
                rows.len()
            )));
        }
    }

    let total_test = ((test_fraction * dataset.len() as f64).round() as usize)
        .clamp(1, dataset.len() - 1);
    // Largest-remainder allocation of test counts per class.
    let quotas: Vec<f64> = per_class
        .iter()
        .map(|rows| test_fraction * rows.len() as f64)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut cursor = 0;
    while assigned < total_test {
        let c = order[cursor % order.len()];
        if counts[c] < per_class[c].len() {
            counts[c] += 1;
            assigned += 1;
        }
        cursor += 1;
    }
    while assigned > total_test {
        let c = order[cursor % order.len()];
        if counts[c] > 0 {
            counts[c] -= 1;
            assigned -= 1;
        }
        cursor += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_rows = Vec::with_capacity(total_test);
    let mut train_rows = Vec::with_capacity(dataset.len() - total_test);
    for (rows, &tc) in per_class.iter().zip(&counts) {
        let mut shuffled = rows.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng);
        test_rows.extend_from_slice(&shuffled[..tc]);
        train_rows.extend_from_slice(&shuffled[tc..]);
    }
    test_rows.sort_unstable();
    train_rows.sort_unstable();
    Ok((dataset.subset(&train_rows), dataset.subset(&test_rows)))
}
