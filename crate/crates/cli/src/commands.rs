use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use moonlite::distribution::{ClassDistribution, TargetEntry};
use moonlite::experiment::{self, ExperimentConfig};
use moonlite::synthdata::{self, AttributeDataset, GeneratorConfig};
use moonlite::trainer::{self, Adaptation, Predictor, TargetSpec, TrainConfig};
use moonlite::{DegeneratePolicy, Error};
use serde_json::json;

use crate::{CompareArgs, EvalArgs, GenDataArgs, TrainArgs, WeightsArgs};

const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug)]
pub struct CliError {
    kind: Kind,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Config,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Numeric => 4,
        }
    }

    /// Prefixes the message, e.g. with the flag that supplied the value.
    fn context(mut self, prefix: &str) -> Self {
        self.message = format!("{prefix}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::Config(_) | Error::InvalidInput(_) => Kind::Config,
            Error::Numeric(_) => Kind::Numeric,
            Error::InvalidLabel { .. }
            | Error::Shape(_)
            | Error::DegenerateAttribute { .. }
            | Error::DegenerateEvaluation { .. }
            | Error::Format { .. }
            | Error::Io { .. } => Kind::Data,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn to_json(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, flag: &str) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{flag} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{flag} {}: {e}", path.display())))
}

fn load_split(data: &Path, split: &str) -> Result<AttributeDataset> {
    Ok(synthdata::read_dataset(&data.join(format!("{split}.bin")))?)
}

/// `source`, `balanced`, or a path to a JSON array of target entries.
fn parse_target(value: &str, flag: &str) -> Result<TargetSpec> {
    match value {
        "source" => Ok(TargetSpec::source()),
        "balanced" => Ok(TargetSpec::balanced()),
        path => Ok(TargetSpec::Entries(read_json::<Vec<TargetEntry>>(
            Path::new(path),
            flag,
        )?)),
    }
}

fn adaptation_table(adaptation: &Adaptation, names: &[String]) -> Vec<serde_json::Value> {
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            json!({
                "name": name,
                "source_positive": adaptation.source.positive(i),
                "target_positive": adaptation.target.positive(i),
                "p_pos": adaptation.weights.p_pos(i),
                "p_neg": adaptation.weights.p_neg(i),
            })
        })
        .collect()
}

pub fn gen_data(args: GenDataArgs) -> Result<()> {
    let prevalences = match (&args.prevalence, &args.prevalence_file) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(path)) => Some(read_json::<Vec<f64>>(path, "--prevalence-file")?),
        (None, None) => None,
    };
    let prevalences = match (prevalences, args.attributes) {
        (Some(p), Some(m)) if p.len() != m => {
            return Err(CliError::config(format!(
                "--attributes is {m} but {} prevalences were given",
                p.len()
            )))
        }
        (Some(p), _) => p,
        // Evenly spread over (0, 1): 0.05, 0.15, ..., 0.95 for ten attributes.
        (None, m) => {
            let m = m.unwrap_or(10);
            (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect()
        }
    };
    let config = GeneratorConfig {
        latent_dim: args.latent_dim,
        feature_dim: args.features,
        num_attributes: prevalences.len(),
        prevalences,
        label_noise: args.label_noise,
        feature_noise_sigma: args.feature_noise,
        seed: args.seed,
        attribute_names: None,
    };
    config
        .validate()
        .map_err(|e| CliError::from(e).context("invalid generator flags"))?;
    if args.n == 0 {
        return Err(CliError::config("--n must be positive"));
    }
    let fractions = [args.split[0], args.split[1], args.split[2]];
    let all = synthdata::generate(&config, args.n)?;
    let parts = synthdata::split(&all, fractions, args.seed)
        .map_err(|e| CliError::from(e).context("--split"))?;

    create_dir(&args.out)?;
    let mut splits = serde_json::Map::new();
    for (name, part) in SPLITS.iter().zip([&parts.0, &parts.1, &parts.2]) {
        synthdata::write_dataset(part, &args.out.join(format!("{name}.bin")))?;
        splits.insert(
            name.to_string(),
            json!({ "rows": part.len(), "sha256": part.content_hash() }),
        );
    }
    let empirical = ClassDistribution::estimate_source(all.labels())?;
    let manifest = json!({
        "generator": config,
        "n": args.n,
        "split": fractions,
        "attributes": config.names(),
        "empirical_prevalence": empirical.positives(),
        "splits": splits,
    });
    let text = to_json(&manifest);
    write(&args.out.join("manifest.json"), text.as_bytes())?;
    print!("{text}");
    eprintln!("wrote {} rows to {}", args.n, args.out.display());
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => read_json::<TrainConfig>(path, "--config")?,
        None => TrainConfig::default(),
    };
    if let Some(t) = &args.target {
        config.target = parse_target(t, "--target")?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let train = load_split(&args.data, "train")?;
    let val = load_split(&args.data, "val")?;
    let adaptation = Adaptation::resolve(&config.target, &train)?;

    let (predictor, histories) = if args.separate {
        let (models, histories) = trainer::train_separate(&config, &train, &val)?;
        (Predictor::Separate(models), histories)
    } else {
        let (model, history) = trainer::train_moon(&config, &train, &val)?;
        (Predictor::Joint(model), vec![history])
    };

    create_dir(&args.out)?;
    experiment::write_predictor(&predictor, &args.out)?;
    experiment::write_histories(
        &histories,
        train.attribute_names().iter().map(String::as_str),
        &args.out,
    )?;
    let manifest = json!({
        "config": config,
        "separate": args.separate,
        "data": {
            "train": train.content_hash(),
            "val": val.content_hash(),
        },
        "layer_dims": config.layer_dims(train.feature_dim(), if args.separate { 1 } else { train.num_attributes() }),
        "num_params": predictor.num_params(),
        "selected_epochs": histories.iter().map(|h| h.selected_epoch).collect::<Vec<_>>(),
        "adaptation": adaptation_table(&adaptation, train.attribute_names()),
    });
    let text = to_json(&manifest);
    write(&args.out.join("manifest.json"), text.as_bytes())?;
    print!("{text}");
    eprintln!("wrote model to {}", args.out.display());
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let predictor = experiment::read_predictor(&args.model)?;
    let data = load_split(&args.data, &args.split)?;
    // The evaluated split's own class masses stand in for "source".
    let own = ClassDistribution::estimate_source(data.labels())?;
    let target = parse_target(&args.target, "--target")?
        .resolve(&own, data.attribute_names())
        .map_err(|e| CliError::from(e).context("--target"))?;
    let policy = if args.skip_degenerate {
        DegeneratePolicy::Skip
    } else {
        DegeneratePolicy::Fail
    };
    let report = trainer::evaluate(&predictor, &data, &target, policy)?;
    let csv = report.to_csv();
    if let Some(out) = &args.out {
        create_dir(out)?;
        write(&out.join("report.csv"), csv.as_bytes())?;
        write(&out.join("report.json"), report.to_json().as_bytes())?;
    }
    print!("{csv}");
    Ok(())
}

pub fn weights(args: WeightsArgs) -> Result<()> {
    let train = load_split(&args.data, "train")?;
    let spec = parse_target(&args.target, "--target")?;
    let adaptation = Adaptation::resolve(&spec, &train)?;
    let mut out = String::from("attribute,source_positive,target_positive,p_pos,p_neg\n");
    for (i, name) in train.attribute_names().iter().enumerate() {
        writeln!(
            out,
            "{name},{},{},{},{}",
            adaptation.source.positive(i),
            adaptation.target.positive(i),
            adaptation.weights.p_pos(i),
            adaptation.weights.p_neg(i)
        )
        .unwrap();
    }
    print!("{out}");
    Ok(())
}

fn threads_from_env() -> Result<usize> {
    match std::env::var("MOONLITE_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(t),
            _ => Err(CliError::config(format!(
                "MOONLITE_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let config: ExperimentConfig = read_json(&args.config, "--config")?;
    let out: PathBuf = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| CliError::config("--out is required when the config has no output_dir"))?;
    let threads = threads_from_env()?;
    config
        .validate()
        .map_err(|e| CliError::from(e).context("--config"))?;
    eprintln!(
        "running {} arms x {} seeds on {threads} thread(s)",
        config.arms.len(),
        config.seeds.len()
    );
    let outcome = experiment::compare(&config, threads)?;
    experiment::write_outcome(&config, &outcome, &out)?;
    print!("{}", outcome.summary_csv());
    eprintln!("wrote results to {}", out.display());
    Ok(())
}
