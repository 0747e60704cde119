//! Synthetic multi-attribute data from a shared latent factor model.
//!
//! Each sample draws a latent z ~ N(0, I_k). Attribute i is positive when
//! w_i·z + b_i > 0 for a unit-norm direction w_i and offset
//! b_i = Φ⁻¹(prevalence_i), so P(positive) equals the configured prevalence
//! before label noise. Features are A·z + σ·η for a fixed d×k mixing matrix.
//! Attributes are correlated through the shared z.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labels;

/// Inverse of the standard normal CDF.
///
/// Rational approximation with a relative error below 1.15e-9 over (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    pub feature_dim: usize,
    pub num_attributes: usize,
    pub prevalences: Vec<f64>,
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default)]
    pub feature_noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_names: Option<Vec<String>>,
}

impl Default for GeneratorConfig {
    /// k = 8, d = 16, M = 10 with prevalences 0.05, 0.15, …, 0.95,
    /// label noise 0.05 and unit feature noise.
    fn default() -> Self {
        Self {
            latent_dim: 8,
            feature_dim: 16,
            num_attributes: 10,
            prevalences: (0..10).map(|i| (5 + 10 * i) as f64 / 100.0).collect(),
            label_noise: 0.05,
            feature_noise_sigma: 1.0,
            seed: 0,
            attribute_names: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.latent_dim == 0 || self.feature_dim == 0 || self.num_attributes == 0 {
            return fail(format!(
                "latent_dim, feature_dim and num_attributes must be positive (got {}, {}, {})",
                self.latent_dim, self.feature_dim, self.num_attributes
            ));
        }
        if self.prevalences.len() != self.num_attributes {
            return fail(format!(
                "{} prevalences given for {} attributes",
                self.prevalences.len(),
                self.num_attributes
            ));
        }
        if let Some(p) = self.prevalences.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return fail(format!("prevalence {p} is not strictly inside (0, 1)"));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return fail(format!(
                "label_noise {} is outside [0, 0.5)",
                self.label_noise
            ));
        }
        if !(self.feature_noise_sigma >= 0.0 && self.feature_noise_sigma.is_finite()) {
            return fail(format!(
                "feature_noise_sigma {} must be a nonnegative number",
                self.feature_noise_sigma
            ));
        }
        if let Some(names) = &self.attribute_names {
            if names.len() != self.num_attributes {
                return fail(format!(
                    "{} attribute names for {} attributes",
                    names.len(),
                    self.num_attributes
                ));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.attribute_names.clone().unwrap_or_else(|| {
            (0..self.num_attributes)
                .map(|i| format!("attr_{i:02}"))
                .collect()
        })
    }
}

/// Fixed parameters of the generative model, drawn once per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    /// M×k, unit-norm rows.
    pub directions: Array2<f64>,
    /// Φ⁻¹(prevalence) per attribute.
    pub offsets: Array1<f64>,
    /// d×k feature mixing matrix.
    pub mixing: Array2<f64>,
}

impl LatentModel {
    pub fn from_config(config: &GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let (k, d, m) = (config.latent_dim, config.feature_dim, config.num_attributes);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut directions = Array2::<f64>::zeros((m, k));
        for mut row in directions.rows_mut() {
            loop {
                row.iter_mut()
                    .for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
                let norm = row.dot(&row).sqrt();
                if norm > 1e-12 {
                    row /= norm;
                    break;
                }
            }
        }
        let scale = 1.0 / (k as f64).sqrt();
        let mixing =
            Array2::from_shape_simple_fn((d, k), || scale * rng.sample::<f64, _>(StandardNormal));
        let offsets = config
            .prevalences
            .iter()
            .map(|&p| normal_quantile(p))
            .collect();
        Ok(Self {
            directions,
            offsets,
            mixing,
        })
    }
}

/// N feature rows with an N×M matrix of ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDataset {
    features: Array2<f64>,
    labels: Array2<i8>,
    attribute_names: Vec<String>,
}

impl AttributeDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Array2<i8>,
        attribute_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.nrows() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} label rows",
                features.nrows(),
                labels.nrows()
            )));
        }
        if attribute_names.len() != labels.ncols() {
            return Err(Error::Shape(format!(
                "{} attribute names for {} label columns",
                attribute_names.len(),
                labels.ncols()
            )));
        }
        labels::validate(labels.view())?;
        Ok(Self {
            features,
            labels,
            attribute_names,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_attributes(&self) -> usize {
        self.labels.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> ArrayView2<'_, i8> {
        self.labels.view()
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            labels: self.labels.select(Axis(0), rows),
            attribute_names: self.attribute_names.clone(),
        }
    }

    /// Same features, only label column `attribute`.
    pub fn select_attribute(&self, attribute: usize) -> Self {
        Self {
            features: self.features.clone(),
            labels: self.labels.select(Axis(1), &[attribute]),
            attribute_names: vec![self.attribute_names[attribute].clone()],
        }
    }

    /// SHA-256 over names, shape, features and labels, as lowercase hex.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for name in &self.attribute_names {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.feature_dim() as u64).to_le_bytes());
        for v in &self.features {
            h.update(v.to_le_bytes());
        }
        for &y in &self.labels {
            h.update([y as u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn generate(config: &GeneratorConfig, n: usize) -> Result<AttributeDataset> {
    let model = LatentModel::from_config(config)?;
    generate_with_model(config, &model, n)
}

/// Draws `n` samples from an explicit latent model. Sampling uses its own
/// random stream, independent of the one that drew the model.
pub fn generate_with_model(
    config: &GeneratorConfig,
    model: &LatentModel,
    n: usize,
) -> Result<AttributeDataset> {
    config.validate()?;
    if n == 0 {
        return Err(Error::Config("cannot generate an empty dataset".into()));
    }
    let (k, d, m) = (config.latent_dim, config.feature_dim, config.num_attributes);
    if model.directions.dim() != (m, k) || model.offsets.len() != m || model.mixing.dim() != (d, k)
    {
        return Err(Error::Shape(
            "latent model does not match the generator config".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut features = Array2::zeros((n, d));
    let mut labels = Array2::zeros((n, m));
    let mut z = Array1::<f64>::zeros(k);
    for j in 0..n {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        for i in 0..m {
            let score = model.directions.row(i).dot(&z) + model.offsets[i];
            let mut y: i8 = if score > 0.0 { 1 } else { -1 };
            if rng.random::<f64>() < config.label_noise {
                y = -y;
            }
            labels[[j, i]] = y;
        }
        let x = model.mixing.dot(&z);
        for (f, xv) in features.row_mut(j).iter_mut().zip(x.iter()) {
            let noise: f64 = rng.sample(StandardNormal);
            *f = xv + config.feature_noise_sigma * noise;
        }
    }
    AttributeDataset::new(features, labels, config.names())
}

/// Shuffled train/validation/test partition. Sizes are the rounded
/// fractions for train and validation; test takes the remainder.
pub fn split(
    dataset: &AttributeDataset,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(AttributeDataset, AttributeDataset, AttributeDataset)> {
    if fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must each lie in (0, 1)"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} sum to {total}, not 1"
        )));
    }
    let n = dataset.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = (fractions[1] * n as f64).round() as usize;
    split_counts(dataset, n_train, n_val, seed)
}

/// Shuffled partition into `n_train`, `n_val`, and the remaining rows.
pub fn split_counts(
    dataset: &AttributeDataset,
    n_train: usize,
    n_val: usize,
    seed: u64,
) -> Result<(AttributeDataset, AttributeDataset, AttributeDataset)> {
    let n = dataset.len();
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Config(format!(
            "splitting {n} rows into {n_train} train and {n_val} validation leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((
        dataset.select_rows(&order[..n_train]),
        dataset.select_rows(&order[n_train..n_train + n_val]),
        dataset.select_rows(&order[n_train + n_val..]),
    ))
}

const FEATURE_MAGIC: &[u8; 8] = b"MOONFEAT";
const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Path of the label sidecar for a feature file: `x.bin` → `x.labels.csv`.
pub fn labels_path(features_path: &Path) -> PathBuf {
    features_path.with_extension("labels.csv")
}

/// Feature file: 8-byte magic, u32 version, 4 reserved bytes, then N and d
/// as u64 and N·d row-major f64, all little-endian.
pub fn encode_features(features: ArrayView2<'_, f64>) -> Vec<u8> {
    let (n, d) = features.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 + 8 * n * d);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for v in features.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<Array2<f64>> {
    let need = HEADER_LEN + 16;
    if bytes.len() < need {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("header truncated: {} of {need} bytes", bytes.len()),
        ));
    }
    if &bytes[..8] != FEATURE_MAGIC {
        return Err(Error::format(path, 0, "bad magic, not a feature file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(Error::format(
            path,
            8,
            format!("unsupported version {version}"),
        ));
    }
    let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let d = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    if n == 0 || d == 0 {
        return Err(Error::format(path, 16, format!("empty dataset ({n}x{d})")));
    }
    let count = n
        .checked_mul(d)
        .filter(|c| c.checked_mul(8).is_some())
        .ok_or_else(|| Error::format(path, 16, format!("implausible shape {n}x{d}")))?;
    let payload = &bytes[need..];
    let expected = count * 8;
    if (payload.len() as u64) < expected {
        let have = payload.len() as u64 / 8;
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!(
                "feature payload truncated: expected {count} values, found {have} ({} short)",
                count - have
            ),
        ));
    }
    if payload.len() as u64 > expected {
        return Err(Error::format(
            path,
            need as u64 + expected,
            format!(
                "{} trailing bytes after features",
                payload.len() as u64 - expected
            ),
        ));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((n as usize, d as usize), values).expect("shape checked"))
}

pub fn encode_labels(labels: ArrayView2<'_, i8>, names: &[String]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(names).expect("in-memory write");
    for row in labels.rows() {
        w.write_record(row.iter().map(|&y| if y > 0 { "+1" } else { "-1" }))
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn decode_labels(bytes: &[u8], path: &Path) -> Result<(Array2<i8>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let csv_err = |e: csv::Error| {
        let offset = e.position().map(|p| p.byte()).unwrap_or(0);
        Error::format(path, offset, format!("malformed label CSV: {e}"))
    };
    let names: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(Error::format(
            path,
            0,
            "label header must name every attribute",
        ));
    }
    let m = names.len();
    let mut values = Vec::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(csv_err)? {
        let offset = record.position().map(|p| p.byte()).unwrap_or(0);
        if record.len() != m {
            return Err(Error::format(
                path,
                offset,
                format!("expected {m} labels, found {}", record.len()),
            ));
        }
        for field in record.iter() {
            values.push(match field.trim() {
                "+1" | "1" => 1i8,
                "-1" => -1,
                other => {
                    return Err(Error::format(
                        path,
                        offset,
                        format!("label {other:?} is not +1 or -1"),
                    ))
                }
            });
        }
    }
    if values.is_empty() {
        return Err(Error::format(path, bytes.len() as u64, "no label rows"));
    }
    let n = values.len() / m;
    Ok((
        Array2::from_shape_vec((n, m), values).expect("row lengths checked"),
        names,
    ))
}

/// Writes the feature file at `path` and the label sidecar next to it.
pub fn write_dataset(dataset: &AttributeDataset, path: &Path) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput(
            "refusing to write an empty dataset".into(),
        ));
    }
    write_file(path, &encode_features(dataset.features()))?;
    let lp = labels_path(path);
    write_file(
        &lp,
        &encode_labels(dataset.labels(), dataset.attribute_names()),
    )
}

pub fn read_dataset(path: &Path) -> Result<AttributeDataset> {
    let features = decode_features(&fs::read(path).map_err(|e| Error::io(path, e))?, path)?;
    let lp = labels_path(path);
    let (labels, names) = decode_labels(&fs::read(&lp).map_err(|e| Error::io(&lp, e))?, &lp)?;
    if labels.nrows() != features.nrows() {
        return Err(Error::format(
            &lp,
            0,
            format!(
                "{} label rows for {} feature rows",
                labels.nrows(),
                features.nrows()
            ),
        ));
    }
    AttributeDataset::new(features, labels, names)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}
