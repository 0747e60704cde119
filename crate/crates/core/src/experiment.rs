//! Seeded comparisons of training arms on shared synthetic data.
//!
//! For every seed one dataset is generated and split; every arm trains on the
//! same split and is scored on the same test rows. Per-run artifacts go to
//! `seed_<seed>/<arm>/` and the aggregated tables to the output root.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distribution::ClassDistribution;
use crate::error::{Error, Result};
use crate::metrics::{DegeneratePolicy, MetricsReport};
use crate::synthdata::{self, write_file, AttributeDataset, GeneratorConfig};
use crate::trainer::{
    self, Objective, Predictor, SelectionMetric, TargetSpec, TrainConfig, TrainHistory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Joint network adapted to the experiment's target distribution.
    MoonBalanced,
    /// Joint network trained on the source distribution (unit weights).
    MoonUnbalanced,
    /// One squared-error network per attribute, source distribution.
    Separate,
    /// One hinge-loss network per attribute.
    HingeSeparate,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::MoonBalanced => "moon-balanced",
            Arm::MoonUnbalanced => "moon-unbalanced",
            Arm::Separate => "separate",
            Arm::HingeSeparate => "hinge-separate",
        }
    }

    /// Training config for this arm, derived from the shared base config.
    pub fn train_config(self, base: &TrainConfig, target: &TargetSpec, seed: u64) -> TrainConfig {
        let mut config = base.clone();
        config.seed = seed;
        let squared = if base.objective == Objective::HingeSeparate {
            Objective::MoonSampled
        } else {
            base.objective
        };
        match self {
            Arm::MoonBalanced => {
                config.objective = squared;
                config.target = target.clone();
                config.selection_metric = SelectionMetric::BalancedError;
            }
            Arm::MoonUnbalanced | Arm::Separate => {
                config.objective = squared;
                config.target = TargetSpec::source();
            }
            Arm::HingeSeparate => {
                config.objective = Objective::HingeSeparate;
                config.target = TargetSpec::source();
            }
        }
        config
    }
}

fn default_n_train() -> usize {
    8000
}

fn default_n_holdout() -> usize {
    1000
}

fn default_arms() -> Vec<Arm> {
    vec![Arm::MoonBalanced, Arm::MoonUnbalanced, Arm::Separate]
}

fn default_target() -> TargetSpec {
    TargetSpec::balanced()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_holdout")]
    pub n_val: usize,
    #[serde(default = "default_n_holdout")]
    pub n_test: usize,
    #[serde(default)]
    pub train: TrainConfig,
    /// Target the adapted arm trains toward; also the target of every
    /// reported balanced error.
    #[serde(default = "default_target")]
    pub target: TargetSpec,
    #[serde(default = "default_arms")]
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(seeds: Vec<u64>) -> Self {
        Self {
            generator: GeneratorConfig::default(),
            n_train: default_n_train(),
            n_val: default_n_holdout(),
            n_test: default_n_holdout(),
            train: TrainConfig::default(),
            target: default_target(),
            arms: default_arms(),
            seeds,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.arms.is_empty() {
            return Err(Error::Config("at least one arm is required".into()));
        }
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::Config(
                "n_train, n_val and n_test must be positive".into(),
            ));
        }
        let mut arms = self.arms.clone();
        arms.sort_by_key(|a| a.name());
        arms.dedup();
        if arms.len() != self.arms.len() {
            return Err(Error::Config("arms are listed more than once".into()));
        }
        self.generator.validate()
    }

    /// Generates and splits the dataset shared by every arm of one seed.
    pub fn dataset(&self, seed: u64) -> Result<SeedData> {
        let generator = GeneratorConfig {
            seed,
            ..self.generator.clone()
        };
        let all = synthdata::generate(&generator, self.n_train + self.n_val + self.n_test)?;
        let hash = all.content_hash();
        let (train, val, test) = synthdata::split_counts(&all, self.n_train, self.n_val, seed)?;
        Ok(SeedData {
            seed,
            hash,
            train,
            val,
            test,
        })
    }
}

pub struct SeedData {
    pub seed: u64,
    /// Content hash of the generated dataset before splitting.
    pub hash: String,
    pub train: AttributeDataset,
    pub val: AttributeDataset,
    pub test: AttributeDataset,
}

/// Outcome of training and scoring one arm on one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmRun {
    pub seed: u64,
    pub arm: Arm,
    pub data_hash: String,
    pub predictor: Predictor,
    pub histories: Vec<TrainHistory>,
    pub report: MetricsReport,
}

pub fn run_arm(config: &ExperimentConfig, data: &SeedData, arm: Arm) -> Result<ArmRun> {
    let train_config = arm.train_config(&config.train, &config.target, data.seed);
    let (predictor, histories) = match arm {
        Arm::MoonBalanced | Arm::MoonUnbalanced => {
            let (model, history) = trainer::train_moon(&train_config, &data.train, &data.val)?;
            (Predictor::Joint(model), vec![history])
        }
        Arm::Separate | Arm::HingeSeparate => {
            let (models, histories) =
                trainer::train_separate(&train_config, &data.train, &data.val)?;
            (Predictor::Separate(models), histories)
        }
    };
    let report = trainer::evaluate(
        &predictor,
        &data.test,
        &eval_target(config, &data.train)?,
        DegeneratePolicy::Fail,
    )?;
    Ok(ArmRun {
        seed: data.seed,
        arm,
        data_hash: data.hash.clone(),
        predictor,
        histories,
        report,
    })
}

fn eval_target(config: &ExperimentConfig, train: &AttributeDataset) -> Result<ClassDistribution> {
    let source = ClassDistribution::estimate_source(train.labels())?;
    config.target.resolve(&source, train.attribute_names())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub seeds: usize,
    pub mean_average_error: f64,
    pub std_average_error: f64,
    pub mean_balanced_error: f64,
    pub std_balanced_error: f64,
    pub num_params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutcome {
    /// Ordered by seed, then by arm in config order.
    pub runs: Vec<ArmRun>,
    /// One row per arm in config order.
    pub summary: Vec<ArmSummary>,
}

impl CompareOutcome {
    pub fn summary_for(&self, arm: Arm) -> Option<&ArmSummary> {
        self.summary.iter().find(|s| s.arm == arm)
    }

    pub fn runs_for(&self, arm: Arm) -> impl Iterator<Item = &ArmRun> {
        self.runs.iter().filter(move |r| r.arm == arm)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "arm,seeds,mean_avg_error,std_avg_error,mean_balanced_error,std_balanced_error,num_params\n",
        );
        for s in &self.summary {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.arm.name(),
                s.seeds,
                s.mean_average_error,
                s.std_average_error,
                s.mean_balanced_error,
                s.std_balanced_error,
                s.num_params
            )
            .unwrap();
        }
        out
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from(
            "seed,arm,data_hash,avg_error,balanced_error,num_params,selected_epochs\n",
        );
        for r in &self.runs {
            let epochs: Vec<String> = r
                .histories
                .iter()
                .map(|h| h.selected_epoch.to_string())
                .collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.seed,
                r.arm.name(),
                r.data_hash,
                r.report.average_error,
                r.report.average_balanced_error,
                r.predictor.num_params(),
                epochs.join(";")
            )
            .unwrap();
        }
        out
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (seed, arm) pair, using up to `threads` worker threads.
/// Results do not depend on the thread count.
pub fn compare(config: &ExperimentConfig, threads: usize) -> Result<CompareOutcome> {
    config.validate()?;
    let data: Vec<SeedData> = config
        .seeds
        .iter()
        .map(|&s| config.dataset(s))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Arm)> = (0..data.len())
        .flat_map(|d| config.arms.iter().map(move |&a| (d, a)))
        .collect();

    let runs: Vec<ArmRun> = if threads <= 1 {
        jobs.iter()
            .map(|&(d, arm)| run_arm(config, &data[d], arm))
            .collect::<Result<_>>()?
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
        pool.install(|| {
            jobs.par_iter()
                .map(|&(d, arm)| run_arm(config, &data[d], arm))
                .collect::<Result<_>>()
        })?
    };

    let summary = config
        .arms
        .iter()
        .map(|&arm| {
            let arm_runs: Vec<&ArmRun> = runs.iter().filter(|r| r.arm == arm).collect();
            let avg: Vec<f64> = arm_runs.iter().map(|r| r.report.average_error).collect();
            let bal: Vec<f64> = arm_runs
                .iter()
                .map(|r| r.report.average_balanced_error)
                .collect();
            let (mean_average_error, std_average_error) = mean_std(&avg);
            let (mean_balanced_error, std_balanced_error) = mean_std(&bal);
            ArmSummary {
                arm,
                seeds: arm_runs.len(),
                mean_average_error,
                std_average_error,
                mean_balanced_error,
                std_balanced_error,
                num_params: arm_runs[0].predictor.num_params(),
            }
        })
        .collect();
    Ok(CompareOutcome { runs, summary })
}

/// Writes `summary.csv`, `runs.csv`, the resolved config, and per-run
/// reports, histories, and checkpoints under `out`.
pub fn write_outcome(
    config: &ExperimentConfig,
    outcome: &CompareOutcome,
    out: &Path,
) -> Result<()> {
    create_dir(out)?;
    let resolved = serde_json::to_string_pretty(config).expect("config serializes");
    write_file(&out.join("config.json"), resolved.as_bytes())?;
    write_file(&out.join("summary.csv"), outcome.summary_csv().as_bytes())?;
    write_file(&out.join("runs.csv"), outcome.runs_csv().as_bytes())?;
    for run in &outcome.runs {
        let dir = out.join(format!("seed_{}", run.seed)).join(run.arm.name());
        create_dir(&dir)?;
        write_file(&dir.join("report.csv"), run.report.to_csv().as_bytes())?;
        write_file(&dir.join("report.json"), run.report.to_json().as_bytes())?;
        write_predictor(&run.predictor, &dir)?;
        write_histories(
            &run.histories,
            run.report.attributes.iter().map(|a| a.name.as_str()),
            &dir,
        )?;
    }
    Ok(())
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Joint models go to `model.ckpt`; separate models to
/// `models/attr_<index>.ckpt`.
pub fn write_predictor(predictor: &Predictor, dir: &Path) -> Result<()> {
    match predictor {
        Predictor::Joint(m) => m.write_checkpoint(&dir.join("model.ckpt")),
        Predictor::Separate(models) => {
            let sub = dir.join("models");
            create_dir(&sub)?;
            for (i, m) in models.iter().enumerate() {
                m.write_checkpoint(&sub.join(format!("attr_{i:03}.ckpt")))?;
            }
            Ok(())
        }
    }
}

/// Loads what [`write_predictor`] wrote: a checkpoint file, or a directory
/// holding `model.ckpt` or a `models/` directory of per-attribute files.
pub fn read_predictor(path: &Path) -> Result<Predictor> {
    if path.is_file() {
        return Ok(Predictor::Joint(crate::MlpModel::read_checkpoint(path)?));
    }
    let joint = path.join("model.ckpt");
    if joint.is_file() {
        return Ok(Predictor::Joint(crate::MlpModel::read_checkpoint(&joint)?));
    }
    let sub = if path.join("models").is_dir() {
        path.join("models")
    } else {
        path.to_path_buf()
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&sub)
        .map_err(|e| Error::io(&sub, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("attr_") && n.ends_with(".ckpt"))
        })
        .collect();
    if files.is_empty() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no checkpoint found"),
        ));
    }
    files.sort();
    let models = files
        .iter()
        .map(|f| crate::MlpModel::read_checkpoint(f))
        .collect::<Result<_>>()?;
    Ok(Predictor::Separate(models))
}

/// A single history goes to `history.csv`; per-attribute histories get an
/// extra leading `attribute` column.
pub fn write_histories<'a>(
    histories: &[TrainHistory],
    names: impl Iterator<Item = &'a str>,
    dir: &Path,
) -> Result<()> {
    let csv = if histories.len() == 1 {
        histories[0].to_csv()
    } else {
        let mut out = String::from("attribute,epoch,train_loss,val_avg_error,val_balanced_error\n");
        for (h, name) in histories.iter().zip(names) {
            for line in h.to_csv().lines().skip(1) {
                writeln!(out, "{name},{line}").unwrap();
            }
        }
        out
    };
    write_file(&dir.join("history.csv"), csv.as_bytes())
}
