//! On-disk dataset format: a JSON manifest plus raw payload files.
//!
//! Features are little-endian 64-bit floats (one file per view); labels,
//! indicators, and split tags are single bytes per entry. A comma-separated
//! text alternative is accepted for feature payloads up to 10^6 values. The
//! loader checks every declared shape against the actual payload size and
//! rejects the manifest on any disagreement.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::bank::MissingPattern;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Value-count ceiling for the comma-separated feature alternative.
pub const CSV_VALUE_LIMIT: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureFormat {
    /// Raw little-endian f64, row-major, samples x dim per view.
    RawLeF64,
    /// One line per sample, comma-separated decimal values.
    Csv,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub views: usize,
    pub dims: Vec<usize>,
    pub samples: usize,
    pub classes: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub feature_format: FeatureFormat,
    /// One payload path per view, relative to the manifest's directory.
    pub feature_files: Vec<String>,
    pub labels_file: String,
    pub indicators_file: String,
    /// Explicit per-sample split tags. When absent, splits are derived as
    /// contiguous blocks in sample order from the fractions above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits_file: Option<String>,
}

fn read_bytes(path: &Path, expected: usize, what: &str) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected {
        return Err(Error::Dataset(format!(
            "{what} payload {} holds {} bytes, manifest declares {expected}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes)
}

fn read_f64s(path: &Path, expected: usize, what: &str) -> Result<Vec<f64>> {
    let bytes = read_bytes(path, expected * 8, what)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_csv_matrix(path: &Path, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != rows {
        return Err(Error::Dataset(format!(
            "{what} payload {} holds {} rows, manifest declares {rows}",
            path.display(),
            lines.len()
        )));
    }
    let mut out = Matrix::zeros(rows, cols);
    for (r, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Dataset(format!(
                "{what} row {r} holds {} values, manifest declares {cols}",
                fields.len()
            )));
        }
        for (c, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!("{what} row {r} column {c}: bad float {field:?}"))
            })?;
            out.set(r, c, v);
        }
    }
    Ok(out)
}

fn write_csv_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut text = String::new();
    for r in 0..m.rows() {
        let row = m.row(r);
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                text.push(',');
            }
            text.push_str(&format!("{v}"));
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn csv_guard(samples: usize, dim: usize, view: usize) -> Result<()> {
    let values = samples.checked_mul(dim).unwrap_or(usize::MAX);
    if values > CSV_VALUE_LIMIT {
        return Err(Error::Config(format!(
            "view {view}: csv feature payloads are limited to {CSV_VALUE_LIMIT} values, got {values}"
        )));
    }
    Ok(())
}

/// Writes `dataset` under `dir` (created if needed) and returns the manifest
/// path `dir/manifest.json`. Output is byte-identical across calls with the
/// same dataset and format.
pub fn save_dataset(dataset: &Dataset, dir: &Path, format: FeatureFormat) -> Result<PathBuf> {
    dataset.validate()?;
    fs::create_dir_all(dir)?;
    let n = dataset.num_samples();
    let n_views = dataset.n_views();

    let mut feature_files = Vec::with_capacity(n_views);
    for (v, f) in dataset.features.iter().enumerate() {
        let name = match format {
            FeatureFormat::RawLeF64 => format!("features_v{v}.bin"),
            FeatureFormat::Csv => format!("features_v{v}.csv"),
        };
        let path = dir.join(&name);
        match format {
            FeatureFormat::RawLeF64 => {
                let mut bytes = Vec::with_capacity(f.data().len() * 8);
                for &x in f.data() {
                    bytes.extend_from_slice(&x.to_le_bytes());
                }
                fs::write(&path, bytes)?;
            }
            FeatureFormat::Csv => {
                csv_guard(n, dataset.view_dims[v], v)?;
                write_csv_matrix(&path, f)?;
            }
        }
        feature_files.push(name);
    }

    let labels: Vec<u8> = dataset.labels.data().iter().map(|&y| y as u8).collect();
    fs::write(dir.join("labels.bin"), &labels)?;

    let mut indicators = Vec::with_capacity(n * n_views);
    for ind in &dataset.indicators {
        indicators.extend(ind.bits().iter().map(|&b| b as u8));
    }
    fs::write(dir.join("indicators.bin"), &indicators)?;

    let split_bytes: Vec<u8> = dataset.splits.iter().map(|s| s.as_byte()).collect();
    fs::write(dir.join("splits.bin"), &split_bytes)?;

    let train = dataset.indices_of(Split::Train).len();
    let val = dataset.indices_of(Split::Val).len();
    let manifest = DatasetManifest {
        views: n_views,
        dims: dataset.view_dims.clone(),
        samples: n,
        classes: dataset.num_classes(),
        train_frac: train as f64 / n as f64,
        val_frac: val as f64 / n as f64,
        feature_format: format,
        feature_files,
        labels_file: "labels.bin".into(),
        indicators_file: "indicators.bin".into(),
        splits_file: Some("splits.bin".into()),
    };
    let manifest_path = dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Parse(format!("manifest serialization: {e}")))?;
    json.push('\n');
    fs::write(&manifest_path, json)?;
    Ok(manifest_path)
}

/// Loads a dataset from its manifest. Feature rows of missing views are
/// zeroed on load so the in-memory form is canonical regardless of payload
/// contents in shielded positions.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    if manifest.dims.len() != manifest.views {
        return Err(Error::Dataset(format!(
            "manifest declares {} dims for {} views",
            manifest.dims.len(),
            manifest.views
        )));
    }
    if manifest.feature_files.len() != manifest.views {
        return Err(Error::Dataset(format!(
            "manifest lists {} feature files for {} views",
            manifest.feature_files.len(),
            manifest.views
        )));
    }
    let n = manifest.samples;

    let mut features = Vec::with_capacity(manifest.views);
    for (v, name) in manifest.feature_files.iter().enumerate() {
        let dim = manifest.dims[v];
        let path = dir.join(name);
        let what = format!("view {v} features");
        let m = match manifest.feature_format {
            FeatureFormat::RawLeF64 => {
                let values = read_f64s(&path, n * dim, &what)?;
                Matrix::from_vec(n, dim, values)?
            }
            FeatureFormat::Csv => {
                csv_guard(n, dim, v)?;
                read_csv_matrix(&path, n, dim, &what)?
            }
        };
        features.push(m);
    }

    let label_bytes = read_bytes(&dir.join(&manifest.labels_file), n * manifest.classes, "labels")?;
    if let Some(bad) = label_bytes.iter().find(|&&b| b > 1) {
        return Err(Error::Dataset(format!("label byte {bad} is not 0 or 1")));
    }
    let labels = Matrix::from_vec(
        n,
        manifest.classes,
        label_bytes.iter().map(|&b| b as f64).collect(),
    )?;

    let ind_bytes = read_bytes(
        &dir.join(&manifest.indicators_file),
        n * manifest.views,
        "indicators",
    )?;
    if let Some(bad) = ind_bytes.iter().find(|&&b| b > 1) {
        return Err(Error::Dataset(format!("indicator byte {bad} is not 0 or 1")));
    }
    let indicators: Vec<MissingPattern> = ind_bytes
        .chunks_exact(manifest.views)
        .map(|chunk| MissingPattern::new(chunk.iter().map(|&b| b == 1).collect()))
        .collect();

    let splits = match &manifest.splits_file {
        Some(name) => read_bytes(&dir.join(name), n, "splits")?
            .into_iter()
            .map(Split::from_byte)
            .collect::<Result<Vec<_>>>()?,
        None => {
            let n_train = (manifest.train_frac * n as f64).round() as usize;
            let n_val = (manifest.val_frac * n as f64).round() as usize;
            if n_train + n_val > n {
                return Err(Error::Dataset(format!(
                    "split fractions assign {} of {n} samples to train+val",
                    n_train + n_val
                )));
            }
            let mut tags = Vec::with_capacity(n);
            tags.resize(n_train, Split::Train);
            tags.resize(n_train + n_val, Split::Val);
            tags.resize(n, Split::Test);
            tags
        }
    };

    let mut dataset = Dataset {
        view_dims: manifest.dims.clone(),
        features,
        labels,
        indicators,
        splits,
    };
    dataset.validate()?;
    dataset.zero_missing_rows();
    Ok(dataset)
}
