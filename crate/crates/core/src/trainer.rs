//! Mini-batch training of the joint multi-output network and of the
//! one-network-per-attribute baselines, with per-epoch validation and
//! selection of the best epoch.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{AdaptationWeights, ClassDistribution, TargetEntry};
use crate::error::{Error, Result};
use crate::loss::{self, LossBatch};
use crate::metrics::{self, DegeneratePolicy, MetricsReport};
use crate::net::{Activation, MlpModel, OptimizerConfig, OptimizerState};
use crate::synthdata::AttributeDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Squared error with Bernoulli gradient masking.
    #[default]
    MoonSampled,
    /// Squared error with deterministic per-entry weights.
    MoonWeighted,
    /// Unweighted hinge loss, one network per attribute.
    HingeSeparate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    AverageError,
    BalancedError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedTarget {
    /// Target equals the training distribution; all weights are one.
    Source,
    /// T⁺ = T⁻ = 1/2 for every attribute.
    Balanced,
}

/// Target distribution as written in a config: `"source"`, `"balanced"`, or
/// a list of `{"name", "positive"}` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Named(NamedTarget),
    Entries(Vec<TargetEntry>),
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::Named(NamedTarget::Source)
    }
}

impl TargetSpec {
    pub fn source() -> Self {
        TargetSpec::Named(NamedTarget::Source)
    }

    pub fn balanced() -> Self {
        TargetSpec::Named(NamedTarget::Balanced)
    }

    pub fn resolve(
        &self,
        source: &ClassDistribution,
        names: &[String],
    ) -> Result<ClassDistribution> {
        match self {
            TargetSpec::Named(NamedTarget::Source) => Ok(source.clone()),
            TargetSpec::Named(NamedTarget::Balanced) => ClassDistribution::uniform(source.len()),
            TargetSpec::Entries(entries) => ClassDistribution::from_entries(entries, names, source),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub objective: Objective,
    pub target: TargetSpec,
    pub optimizer: OptimizerConfig,
    pub selection_metric: SelectionMetric,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_epochs: 30,
            seed: 0,
            objective: Objective::default(),
            target: TargetSpec::default(),
            optimizer: OptimizerConfig::default(),
            selection_metric: SelectionMetric::default(),
            hidden_dims: vec![64, 32],
            activation: Activation::Tanh,
        }
    }
}

impl TrainConfig {
    pub fn layer_dims(&self, inputs: usize, outputs: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(inputs);
        dims.extend(&self.hidden_dims);
        dims.push(outputs);
        dims
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Loss summed over the epoch divided by the number of training rows.
    pub train_loss: f64,
    pub val_average_error: f64,
    pub val_balanced_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
    pub optimizer_steps: u64,
}

impl TrainHistory {
    pub fn selected(&self) -> &EpochRecord {
        &self.epochs[self.selected_epoch - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_avg_error,val_balanced_error\n");
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{}",
                e.epoch, e.train_loss, e.val_average_error, e.val_balanced_error
            )
            .unwrap();
        }
        out
    }
}

/// Source distribution, resolved target, and adaptation weights for a
/// training set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Adaptation {
    pub source: ClassDistribution,
    pub target: ClassDistribution,
    pub weights: AdaptationWeights,
}

impl Adaptation {
    pub fn resolve(spec: &TargetSpec, train: &AttributeDataset) -> Result<Self> {
        let source = ClassDistribution::estimate_source(train.labels())?;
        let target = spec.resolve(&source, train.attribute_names())?;
        let weights = AdaptationWeights::compute(&source, &target)?;
        Ok(Self {
            source,
            target,
            weights,
        })
    }

    fn select(&self, attribute: usize) -> Self {
        Self {
            source: self.source.select(attribute),
            target: self.target.select(attribute),
            weights: self.weights.select(attribute),
        }
    }
}

fn check_sets(
    config: &TrainConfig,
    train: &AttributeDataset,
    val: &AttributeDataset,
) -> Result<()> {
    if train.feature_dim() != val.feature_dim() || train.num_attributes() != val.num_attributes() {
        return Err(Error::Shape(format!(
            "training set is {}->{} but validation set is {}->{}",
            train.feature_dim(),
            train.num_attributes(),
            val.feature_dim(),
            val.num_attributes()
        )));
    }
    if config.batch_size == 0 || config.batch_size > train.len() {
        return Err(Error::Config(format!(
            "batch_size {} must be between 1 and the training-set size {}",
            config.batch_size,
            train.len()
        )));
    }
    if config.max_epochs == 0 {
        return Err(Error::Config("max_epochs must be positive".into()));
    }
    config.optimizer.validate()
}

/// Trains one network with M outputs on all attributes at once.
pub fn train_moon(
    config: &TrainConfig,
    train: &AttributeDataset,
    val: &AttributeDataset,
) -> Result<(MlpModel, TrainHistory)> {
    if config.objective == Objective::HingeSeparate {
        return Err(Error::Config(
            "the hinge objective is only available for separate networks".into(),
        ));
    }
    check_sets(config, train, val)?;
    let adaptation = Adaptation::resolve(&config.target, train)?;
    fit(config, config.seed, train, val, &adaptation)
}

/// Trains one single-output network per attribute, each with a seed derived
/// from `(config.seed, attribute)`.
pub fn train_separate(
    config: &TrainConfig,
    train: &AttributeDataset,
    val: &AttributeDataset,
) -> Result<(Vec<MlpModel>, Vec<TrainHistory>)> {
    check_sets(config, train, val)?;
    let adaptation = Adaptation::resolve(&config.target, train)?;
    let mut models = Vec::with_capacity(train.num_attributes());
    let mut histories = Vec::with_capacity(train.num_attributes());
    for i in 0..train.num_attributes() {
        let (model, history) = fit(
            config,
            derive_seed(config.seed, i as u64),
            &train.select_attribute(i),
            &val.select_attribute(i),
            &adaptation.select(i),
        )?;
        models.push(model);
        histories.push(history);
    }
    Ok((models, histories))
}

/// SplitMix64 mix of a base seed and a stream index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fit(
    config: &TrainConfig,
    seed: u64,
    train: &AttributeDataset,
    val: &AttributeDataset,
    adaptation: &Adaptation,
) -> Result<(MlpModel, TrainHistory)> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(1);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
    mask_rng.set_stream(2);

    let dims = config.layer_dims(train.feature_dim(), train.num_attributes());
    let mut model = MlpModel::init_with_rng(&dims, config.activation, &mut init_rng)?;
    let mut optimizer = OptimizerState::new(config.optimizer.clone(), &model)?;

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, usize, MlpModel)> = None;
    let mut epochs = Vec::with_capacity(config.max_epochs);

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let x = train.features().select(Axis(0), rows);
            let y = train.labels().select(Axis(0), rows);
            let trace = model.forward_trace(x.view())?;
            let (batch_loss, grad) = objective_step(
                config.objective,
                trace.output().view(),
                y.view(),
                &adaptation.weights,
                &mut mask_rng,
            )?;
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}, batch {b}"
                )));
            }
            epoch_loss += batch_loss;
            let grads = model.backward_from_trace(&trace, grad.view())?;
            optimizer
                .rmsprop_step(&mut model, &grads)
                .map_err(|e| match e {
                    Error::Numeric(msg) => {
                        Error::Numeric(format!("epoch {epoch}, batch {b}: {msg}"))
                    }
                    other => other,
                })?;
        }

        let scores = model.forward(val.features())?;
        let val_average_error = metrics::classification_error(scores.view(), val.labels())?.average;
        let val_balanced_error = metrics::balanced_error(
            scores.view(),
            val.labels(),
            &adaptation.target,
            DegeneratePolicy::Skip,
        )?
        .average;
        epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / n as f64,
            val_average_error,
            val_balanced_error,
        });

        let score = match config.selection_metric {
            SelectionMetric::AverageError => val_average_error,
            SelectionMetric::BalancedError => val_balanced_error,
        };
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch, model.clone()));
        }
    }

    let (_, selected_epoch, best_model) = best.expect("at least one epoch");
    Ok((
        best_model,
        TrainHistory {
            epochs,
            selected_epoch,
            optimizer_steps: optimizer.step_count(),
        },
    ))
}

fn objective_step(
    objective: Objective,
    predictions: ArrayView2<'_, f64>,
    labels: ArrayView2<'_, i8>,
    weights: &AdaptationWeights,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Array2<f64>)> {
    match objective {
        Objective::MoonSampled | Objective::MoonWeighted => {
            let batch = LossBatch::new(predictions, labels, weights)?;
            let grad = if objective == Objective::MoonSampled {
                loss::moon_gradient_sampled(&batch, rng)
            } else {
                loss::moon_gradient_weighted(&batch)
            };
            Ok((loss::moon_loss(&batch), grad))
        }
        Objective::HingeSeparate => Ok((
            loss::hinge_loss_sum(predictions, labels)?,
            loss::hinge_gradient(predictions, labels)?,
        )),
    }
}

/// A trained joint network or a set of single-output networks.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Joint(MlpModel),
    Separate(Vec<MlpModel>),
}

impl Predictor {
    pub fn num_outputs(&self) -> usize {
        match self {
            Predictor::Joint(m) => m.output_dim(),
            Predictor::Separate(ms) => ms.len(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Predictor::Joint(m) => m.num_params(),
            Predictor::Separate(ms) => ms.iter().map(MlpModel::num_params).sum(),
        }
    }

    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Predictor::Joint(m) => m.forward(features),
            Predictor::Separate(models) => {
                let mut out = Array2::zeros((features.nrows(), models.len()));
                for (i, m) in models.iter().enumerate() {
                    if m.output_dim() != 1 {
                        return Err(Error::Shape(format!(
                            "separate model {i} has {} outputs, expected 1",
                            m.output_dim()
                        )));
                    }
                    out.column_mut(i).assign(&m.forward(features)?.column(0));
                }
                Ok(out)
            }
        }
    }
}

/// Scores `test` with `predictor` and computes every error measure.
pub fn evaluate(
    predictor: &Predictor,
    test: &AttributeDataset,
    target: &ClassDistribution,
    policy: DegeneratePolicy,
) -> Result<MetricsReport> {
    if predictor.num_outputs() != test.num_attributes() {
        return Err(Error::Shape(format!(
            "predictor has {} outputs but the data has {} attributes",
            predictor.num_outputs(),
            test.num_attributes()
        )));
    }
    let scores = predictor.predict(test.features())?;
    MetricsReport::compute(
        scores.view(),
        test.labels(),
        test.attribute_names(),
        target,
        policy,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate, split, GeneratorConfig};

    fn toy(seed: u64, n: usize) -> (AttributeDataset, AttributeDataset, AttributeDataset) {
        let config = GeneratorConfig {
            latent_dim: 3,
            feature_dim: 6,
            num_attributes: 3,
            prevalences: vec![0.2, 0.5, 0.7],
            label_noise: 0.0,
            feature_noise_sigma: 0.0,
            seed,
            attribute_names: None,
        };
        split(&generate(&config, n).unwrap(), [0.6, 0.2, 0.2], seed).unwrap()
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            max_epochs: 3,
            batch_size: 16,
            hidden_dims: vec![8],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn one_epoch_full_batch_is_one_step() {
        let (train, val, _) = toy(1, 100);
        let config = TrainConfig {
            max_epochs: 1,
            batch_size: train.len(),
            ..quick_config()
        };
        let (_, history) = train_moon(&config, &train, &val).unwrap();
        assert_eq!(history.optimizer_steps, 1);
        assert_eq!(history.epochs.len(), 1);
    }

    #[test]
    fn epoch_includes_partial_batch() {
        let (train, val, _) = toy(2, 100);
        assert_eq!(train.len(), 60);
        let config = TrainConfig {
            batch_size: 16,
            max_epochs: 2,
            ..quick_config()
        };
        let (_, history) = train_moon(&config, &train, &val).unwrap();
        assert_eq!(history.optimizer_steps, 2 * 4);
    }

    #[test]
    fn deterministic_history() {
        let (train, val, _) = toy(3, 150);
        let a = train_moon(&quick_config(), &train, &val).unwrap();
        let b = train_moon(&quick_config(), &train, &val).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.to_csv(), b.1.to_csv());
    }

    #[test]
    fn source_target_gives_unit_weights() {
        let (train, _, _) = toy(4, 100);
        let a = Adaptation::resolve(&TargetSpec::source(), &train).unwrap();
        assert!(a.weights.is_identity());
        let b = Adaptation::resolve(&TargetSpec::balanced(), &train).unwrap();
        assert!(!b.weights.is_identity());
    }

    #[test]
    fn source_target_makes_sampled_equal_weighted() {
        // With unit weights masking never fires and the mask draws use their own
        // stream, so both realizations train identical networks.
        let (train, val, _) = toy(5, 120);
        let sampled = train_moon(&quick_config(), &train, &val).unwrap();
        let weighted = train_moon(
            &TrainConfig {
                objective: Objective::MoonWeighted,
                ..quick_config()
            },
            &train,
            &val,
        )
        .unwrap();
        assert_eq!(sampled, weighted);
    }

    #[test]
    fn selected_epoch_is_the_minimum() {
        let (train, val, _) = toy(6, 200);
        let config = TrainConfig {
            max_epochs: 6,
            ..quick_config()
        };
        let (model, history) = train_moon(&config, &train, &val).unwrap();
        let min = history
            .epochs
            .iter()
            .map(|e| e.val_average_error)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(history.selected().val_average_error, min);
        let scores = model.forward(val.features()).unwrap();
        let again = metrics::classification_error(scores.view(), val.labels()).unwrap();
        assert_eq!(again.average, min);
    }

    #[test]
    fn bad_configs() {
        let (train, val, _) = toy(7, 100);
        let big = TrainConfig {
            batch_size: train.len() + 1,
            ..quick_config()
        };
        assert!(matches!(
            train_moon(&big, &train, &val),
            Err(Error::Config(_))
        ));
        let hinge = TrainConfig {
            objective: Objective::HingeSeparate,
            ..quick_config()
        };
        assert!(matches!(
            train_moon(&hinge, &train, &val),
            Err(Error::Config(_))
        ));
        assert!(train_separate(&hinge, &train, &val).is_ok());
    }

    #[test]
    fn degenerate_attribute_surfaces() {
        let (train, val, _) = toy(8, 100);
        let mut labels = train.labels().to_owned();
        labels.column_mut(0).fill(1);
        let constant = AttributeDataset::new(
            train.features().to_owned(),
            labels,
            train.attribute_names().to_vec(),
        )
        .unwrap();
        let config = TrainConfig {
            target: TargetSpec::balanced(),
            ..quick_config()
        };
        assert!(matches!(
            train_moon(&config, &constant, &val),
            Err(Error::DegenerateAttribute { attribute: 0, .. })
        ));
    }

    #[test]
    fn separate_models_have_more_parameters() {
        let (train, val, test) = toy(9, 150);
        let config = quick_config();
        let (joint, _) = train_moon(&config, &train, &val).unwrap();
        let (separate, histories) = train_separate(&config, &train, &val).unwrap();
        assert_eq!(separate.len(), 3);
        assert_eq!(histories.len(), 3);
        let joint = Predictor::Joint(joint);
        let separate = Predictor::Separate(separate);
        assert!(separate.num_params() > joint.num_params());
        let target = ClassDistribution::uniform(3).unwrap();
        let report = evaluate(&separate, &test, &target, DegeneratePolicy::Skip).unwrap();
        assert_eq!(report.attributes.len(), 3);
    }

    #[test]
    fn evaluate_width_mismatch() {
        let (_, _, test) = toy(10, 100);
        let m = MlpModel::init(&[6, 4, 2], Activation::Tanh, 0).unwrap();
        let target = ClassDistribution::uniform(3).unwrap();
        assert!(matches!(
            evaluate(&Predictor::Joint(m), &test, &target, DegeneratePolicy::Skip),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..100).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }

    #[test]
    fn target_spec_json_forms() {
        let s: TargetSpec = serde_json::from_str("\"balanced\"").unwrap();
        assert_eq!(s, TargetSpec::balanced());
        let s: TargetSpec = serde_json::from_str("[{\"name\":\"a\",\"positive\":0.3}]").unwrap();
        assert!(matches!(s, TargetSpec::Entries(ref e) if e.len() == 1));
        assert!(serde_json::from_str::<TargetSpec>("\"other\"").is_err());
        let c: Result<TrainConfig, _> = serde_json::from_str("{\"batch_size\": 8, \"bogus\": 1}");
        assert!(c.is_err());
    }
}
