//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use moonlite::distribution::{AdaptationWeights, ClassDistribution};
use moonlite::experiment::{self, Arm, ExperimentConfig};
use moonlite::loss::{self, LossBatch};
use moonlite::metrics::{self, DegeneratePolicy};
use moonlite::net::{Activation, MlpModel};
use moonlite::synthdata::{self, AttributeDataset, GeneratorConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Name, check, and runtime budget.
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// 1. weight laws

fn weight_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs = 12_000;
    let mut checked = 0usize;
    for pair in 0..pairs {
        let m = rng.random_range(1..=4);
        let s: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..0.99)).collect();
        let t: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..0.99)).collect();
        let source = ClassDistribution::from_positive(s.clone()).unwrap();
        let target = ClassDistribution::from_positive(t.clone()).unwrap();
        let w = AdaptationWeights::compute(&source, &target).map_err(|e| e.to_string())?;
        for i in 0..m {
            let (pp, pn) = (w.p_pos(i), w.p_neg(i));
            ensure(pp > 0.0 && pp <= 1.0 && pn > 0.0 && pn <= 1.0, || {
                format!("pair {pair} attribute {i}: weights ({pp}, {pn}) outside (0, 1]")
            })?;
            ensure(pp == 1.0 || pn == 1.0, || {
                format!("pair {pair} attribute {i}: neither weight is 1 ({pp}, {pn})")
            })?;
            // Independent form: the weight of the class whose mass shrinks is
            // (T_c / S_c) / (T_other / S_other).
            let (sp, tp) = (s[i], t[i]);
            let (sn, tn) = (1.0 - sp, 1.0 - tp);
            let (expect_pos, expect_neg) = if tp > sp {
                (1.0, (tn / sn) / (tp / sp))
            } else {
                ((tp / sp) / (tn / sn), 1.0)
            };
            ensure(
                within_ulps(pp, expect_pos, 4) && within_ulps(pn, expect_neg, 4),
                || {
                    format!(
                        "pair {pair} attribute {i}: ({pp}, {pn}) vs ({expect_pos}, {expect_neg})"
                    )
                },
            )?;
            checked += 1;
        }
        let same = AdaptationWeights::compute(&source, &source).unwrap();
        ensure(same.is_identity(), || {
            format!("pair {pair}: T = S is not all ones")
        })?;
    }
    Ok(format!("{pairs} pairs, {checked} attributes"))
}

fn within_ulps(a: f64, b: f64, ulps: u64) -> bool {
    a == b || (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs() <= ulps
}

// ---------------------------------------------------------------------------
// 2. gradient check

fn random_labels(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<i8> {
    Array2::from_shape_fn((n, m), |_| if rng.random_bool(0.5) { 1 } else { -1 })
}

fn random_weights(rng: &mut ChaCha8Rng, m: usize) -> AdaptationWeights {
    let s: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..0.95)).collect();
    let t: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..0.95)).collect();
    AdaptationWeights::compute(
        &ClassDistribution::from_positive(s).unwrap(),
        &ClassDistribution::from_positive(t).unwrap(),
    )
    .unwrap()
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let models = 24;
    for case in 0..models {
        let depth = 1 + case % 3;
        let activation = if case % 2 == 0 {
            Activation::Tanh
        } else {
            Activation::Relu
        };
        let mut dims = vec![rng.random_range(2..6)];
        for _ in 1..depth {
            dims.push(rng.random_range(2..6));
        }
        let m = rng.random_range(1..4);
        dims.push(m);
        let n = rng.random_range(2..6);
        let mut model = MlpModel::init(&dims, activation, 100 + case as u64).unwrap();
        // Nonzero biases keep ReLU pre-activations off the kink at zero.
        for layer in model.layers_mut() {
            layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let x = Array2::from_shape_fn((n, dims[0]), |_| rng.random_range(-2.0..2.0));
        let y = random_labels(&mut rng, n, m);
        let w = random_weights(&mut rng, m);

        let loss_at = |model: &MlpModel| {
            let f = model.forward(x.view()).unwrap();
            loss::moon_loss(&LossBatch::new(f.view(), y.view(), &w).unwrap())
        };

        // Loss with respect to the network outputs.
        let f = model.forward(x.view()).unwrap();
        let batch = LossBatch::new(f.view(), y.view(), &w).unwrap();
        let g_out = loss::moon_gradient_weighted(&batch);
        for idx in ndarray::indices(f.dim()) {
            let mut up = f.clone();
            up[idx] += h;
            let mut down = f.clone();
            down[idx] -= h;
            let fd = (loss::moon_loss(&LossBatch::new(up.view(), y.view(), &w).unwrap())
                - loss::moon_loss(&LossBatch::new(down.view(), y.view(), &w).unwrap()))
                / (2.0 * h);
            let r = relative_error(g_out[idx], fd);
            worst = worst.max(r);
            ensure(r < 1e-6, || {
                format!("model {case}: output gradient {} vs {fd}", g_out[idx])
            })?;
        }

        // Loss with respect to every parameter.
        let grads = model.backward(x.view(), g_out.view()).unwrap();
        for l in 0..model.layers().len() {
            for (idx, &analytic) in grads.layers[l].weights.indexed_iter() {
                let mut up = model.clone();
                up.layers_mut()[l].weights[idx] += h;
                let mut down = model.clone();
                down.layers_mut()[l].weights[idx] -= h;
                let fd = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
                let r = relative_error(analytic, fd);
                worst = worst.max(r);
                ensure(r < 1e-4, || {
                    format!("model {case} layer {l} weight {idx:?}: {analytic} vs {fd}")
                })?;
            }
            for (j, &analytic) in grads.layers[l].bias.iter().enumerate() {
                let mut up = model.clone();
                up.layers_mut()[l].bias[j] += h;
                let mut down = model.clone();
                down.layers_mut()[l].bias[j] -= h;
                let fd = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
                let r = relative_error(analytic, fd);
                worst = worst.max(r);
                ensure(r < 1e-4, || {
                    format!("model {case} layer {l} bias {j}: {analytic} vs {fd}")
                })?;
            }
        }
    }
    Ok(format!("{models} models, worst relative error {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 3. sampling law

fn sampling_law() -> Outcome {
    let preds = ndarray::array![
        [0.4, -1.3, 2.0],
        [-0.7, 0.9, -0.2],
        [1.5, 0.1, -2.2],
        [0.0, -0.5, 0.8]
    ];
    let labels = ndarray::array![[1i8, -1, 1], [-1, 1, -1], [-1, 1, 1], [1, -1, -1]];
    let w = AdaptationWeights::from_parts(vec![0.3, 1.0, 0.05], vec![1.0, 0.6, 0.9]).unwrap();
    let batch = LossBatch::new(preds.view(), labels.view(), &w).unwrap();
    let expected = loss::moon_gradient_weighted(&batch);

    let draws = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sum = Array2::<f64>::zeros(preds.dim());
    for _ in 0..draws {
        sum += &loss::moon_gradient_sampled(&batch, &mut rng);
    }
    let mean = sum / draws as f64;
    let mut worst_z: f64 = 0.0;
    for ((j, i), &m) in mean.indexed_iter() {
        let p = w.for_label(i, labels[[j, i]]);
        let full = 2.0 * (preds[[j, i]] - f64::from(labels[[j, i]]));
        let se = full.abs() * (p * (1.0 - p) / draws as f64).sqrt();
        let err = (m - expected[[j, i]]).abs();
        if se == 0.0 {
            // Only summation rounding separates the mean from the full gradient.
            ensure(err <= 1e-12 * full.abs().max(1.0), || {
                format!("entry ({j}, {i}) with p = 1 differs by {err}")
            })?;
            continue;
        }
        let z = err / se;
        worst_z = worst_z.max(z);
        ensure(z <= 3.0, || {
            format!(
                "entry ({j}, {i}): {m} vs {} is {z:.2} SE away",
                expected[[j, i]]
            )
        })?;
    }
    Ok(format!("{draws} draws, worst deviation {worst_z:.2} SE"))
}

// ---------------------------------------------------------------------------
// 4. metric oracles

const MAX_CELLS: usize = 12;

/// Per-attribute counts taken straight from the bit patterns.
#[derive(Default)]
struct OracleCounts {
    pos: [usize; MAX_CELLS],
    neg: [usize; MAX_CELLS],
    fneg: [usize; MAX_CELLS],
    fpos: [usize; MAX_CELLS],
}

impl OracleCounts {
    /// Class counts of a label pattern with every prediction negative.
    fn all_negative(label_code: u32, n: usize, m: usize) -> Self {
        let mut c = Self::default();
        for k in 0..n * m {
            if label_code >> k & 1 == 1 {
                c.pos[k % m] += 1;
                c.fneg[k % m] += 1;
            } else {
                c.neg[k % m] += 1;
            }
        }
        c
    }

    /// Accounts for cell `k` switching its prediction.
    fn flip(&mut self, k: usize, m: usize, label_code: u32, now_positive: bool) {
        let positive_label = label_code >> k & 1 == 1;
        let counter = if positive_label {
            &mut self.fneg
        } else {
            &mut self.fpos
        };
        // A positive label is a false negative while predicted negative;
        // a negative label is a false positive while predicted positive.
        if now_positive != positive_label {
            counter[k % m] += 1;
        } else {
            counter[k % m] -= 1;
        }
    }
}

/// Every (score sign, label) assignment of every N x M matrix with
/// N·M ≤ 12. Non-positive scores alternate between 0 and a negative value
/// so that zero scores are covered.
fn metric_oracles() -> Outcome {
    let target_masses: Vec<f64> = (0..MAX_CELLS).map(|i| 0.1 + 0.07 * i as f64).collect();
    let mut configurations = 0u64;
    for n in 1..=MAX_CELLS {
        for m in 1..=MAX_CELLS / n {
            let cells = n * m;
            let target = ClassDistribution::from_positive(target_masses[..m].to_vec()).unwrap();
            let mut scores = Array2::<f64>::zeros((n, m));
            let mut labels = Array2::<i8>::zeros((n, m));
            for label_code in 0u32..(1 << cells) {
                for k in 0..cells {
                    labels[[k / m, k % m]] = if label_code >> k & 1 == 1 { 1 } else { -1 };
                }
                // Gray-code order: one cell changes per step.
                let mut pred_code = 0u32;
                for k in 0..cells {
                    scores.as_slice_mut().unwrap()[k] = non_positive_score(k);
                }
                let mut c = OracleCounts::all_negative(label_code, n, m);
                for step in 0u32..(1 << cells) {
                    if step > 0 {
                        let k = step.trailing_zeros() as usize;
                        pred_code ^= 1 << k;
                        let now_positive = pred_code >> k & 1 == 1;
                        scores.as_slice_mut().unwrap()[k] = if now_positive {
                            0.25
                        } else {
                            non_positive_score(k)
                        };
                        c.flip(k, m, label_code, now_positive);
                    }
                    check_configuration(&scores, &labels, &c, &target, step == 0)
                        .map_err(|e| format!("{e}; scores {scores:?} labels {labels:?}"))?;
                    configurations += 1;
                }
            }
        }
    }
    let tuples = empirical_identity()?;
    Ok(format!(
        "{configurations} configurations; empirical-target identity on {tuples} count tuples"
    ))
}

/// E^B under the evaluated set's own class masses against E_i, for every
/// (positives, false negatives, false positives) count tuple of one
/// attribute with up to 64 samples. Both measures depend only on those
/// counts.
fn empirical_identity() -> Result<u64, String> {
    let mut tuples = 0u64;
    for n in 2..=64usize {
        for pos in 1..n {
            let neg = n - pos;
            let labels = Array2::from_shape_fn((n, 1), |(j, _)| if j < pos { 1i8 } else { -1 });
            let empirical = ClassDistribution::estimate_source(labels.view()).unwrap();
            for fneg in 0..=pos {
                for fpos in 0..=neg {
                    let scores = Array2::from_shape_fn((n, 1), |(j, _)| {
                        let wrong = if j < pos { j < fneg } else { j - pos < fpos };
                        let positive = (j < pos) != wrong;
                        if positive {
                            1.0
                        } else {
                            -1.0
                        }
                    });
                    let e = metrics::classification_error(scores.view(), labels.view())
                        .map_err(|e| e.to_string())?
                        .per_attribute[0];
                    let eb = metrics::balanced_error(
                        scores.view(),
                        labels.view(),
                        &empirical,
                        DegeneratePolicy::Fail,
                    )
                    .map_err(|e| e.to_string())?
                    .per_attribute[0]
                        .unwrap();
                    ensure((eb - e).abs() <= 1e-15, || {
                        format!("n {n}, {pos} positives, {fneg} FN, {fpos} FP: E^B {eb} vs E {e}")
                    })?;
                    tuples += 1;
                }
            }
        }
    }
    Ok(tuples)
}

fn non_positive_score(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        0.0
    } else {
        -0.75
    }
}

fn check_configuration(
    scores: &Array2<f64>,
    labels: &Array2<i8>,
    c: &OracleCounts,
    target: &ClassDistribution,
    first_of_labels: bool,
) -> Result<(), String> {
    let (n, m) = scores.dim();
    let plain =
        metrics::classification_error(scores.view(), labels.view()).map_err(|e| e.to_string())?;
    let mut expect_sum = 0.0;
    for i in 0..m {
        let expect = (c.fneg[i] + c.fpos[i]) as f64 / n as f64;
        ensure(plain.per_attribute[i] == expect, || {
            format!("E_{i} = {} not {expect}", plain.per_attribute[i])
        })?;
        expect_sum += expect;
    }
    ensure(plain.average == expect_sum / m as f64, || {
        "average E mismatch".into()
    })?;

    let kept = (0..m).filter(|&i| c.pos[i] > 0 && c.neg[i] > 0).count();
    let policy = if kept == m {
        DegeneratePolicy::Fail
    } else {
        DegeneratePolicy::Skip
    };
    // Whether Fail rejects depends on the labels alone.
    if kept < m && first_of_labels {
        let strict =
            metrics::balanced_error(scores.view(), labels.view(), target, DegeneratePolicy::Fail);
        ensure(strict.is_err(), || {
            "Fail policy accepted a degenerate attribute".into()
        })?;
    }
    let balanced = metrics::balanced_error(scores.view(), labels.view(), target, policy);
    if kept == 0 {
        return ensure(balanced.is_err(), || "all-degenerate input accepted".into());
    }
    let balanced = balanced.map_err(|e| e.to_string())?;
    let mut sum = 0.0;
    for i in 0..m {
        let oracle = (c.pos[i] > 0 && c.neg[i] > 0).then(|| {
            c.fneg[i] as f64 * target.positive(i) / c.pos[i] as f64
                + c.fpos[i] as f64 * target.negative(i) / c.neg[i] as f64
        });
        ensure(balanced.per_attribute[i] == oracle, || {
            format!("E^B_{i} = {:?} not {oracle:?}", balanced.per_attribute[i])
        })?;
        sum += oracle.unwrap_or(0.0);
    }
    ensure(balanced.average == sum / kept as f64, || {
        "average E^B mismatch".into()
    })?;

    Ok(())
}

// ---------------------------------------------------------------------------
// 5. and 6. scaled experiments

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn adaptation_direction() -> Outcome {
    let mut config = ExperimentConfig::new(SEEDS.to_vec());
    config.arms = vec![Arm::MoonBalanced, Arm::MoonUnbalanced];
    let outcome = experiment::compare(&config, 1).map_err(|e| e.to_string())?;
    let balanced = outcome.summary_for(Arm::MoonBalanced).unwrap();
    let unbalanced = outcome.summary_for(Arm::MoonUnbalanced).unwrap();
    let detail = format!(
        "E^B balanced {:.2}% vs source {:.2}%; E balanced {:.2}% vs source {:.2}%",
        100.0 * balanced.mean_balanced_error,
        100.0 * unbalanced.mean_balanced_error,
        100.0 * balanced.mean_average_error,
        100.0 * unbalanced.mean_average_error,
    );
    ensure(
        unbalanced.mean_balanced_error - balanced.mean_balanced_error >= 0.02,
        || detail.clone(),
    )?;
    ensure(
        unbalanced.mean_average_error < balanced.mean_average_error,
        || detail.clone(),
    )?;
    Ok(detail)
}

fn multitask_direction() -> Outcome {
    let mut config = ExperimentConfig::new(SEEDS.to_vec());
    config.n_train = 2_000;
    config.arms = vec![Arm::MoonUnbalanced, Arm::Separate];
    let outcome = experiment::compare(&config, 1).map_err(|e| e.to_string())?;
    let joint: Vec<f64> = outcome
        .runs_for(Arm::MoonUnbalanced)
        .map(|r| r.report.average_error)
        .collect();
    let separate: Vec<f64> = outcome
        .runs_for(Arm::Separate)
        .map(|r| r.report.average_error)
        .collect();
    let worst_gap = joint
        .iter()
        .zip(&separate)
        .map(|(j, s)| j - s)
        .fold(f64::NEG_INFINITY, f64::max);
    let detail = format!(
        "joint {:.2}% vs separate {:.2}%, worst per-seed gap {:+.2} points",
        100.0 * mean(&joint),
        100.0 * mean(&separate),
        100.0 * worst_gap
    );
    ensure(mean(&joint) <= mean(&separate), || detail.clone())?;
    ensure(worst_gap <= 0.005, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 7. determinism

fn small_experiment() -> ExperimentConfig {
    let mut config = ExperimentConfig::new(vec![11, 12]);
    config.n_train = 400;
    config.n_val = 100;
    config.n_test = 100;
    config.train.max_epochs = 3;
    config.arms = vec![
        Arm::MoonBalanced,
        Arm::MoonUnbalanced,
        Arm::Separate,
        Arm::HingeSeparate,
    ];
    config
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            let name = path.strip_prefix(root).unwrap().display().to_string();
            out.push((name, std::fs::read(&path).unwrap()));
        }
    }
}

fn determinism() -> Outcome {
    let config = small_experiment();
    let mut trees = Vec::new();
    for threads in [1, 1, 2] {
        let dir = tempfile::tempdir().unwrap();
        let outcome = experiment::compare(&config, threads).map_err(|e| e.to_string())?;
        experiment::write_outcome(&config, &outcome, dir.path()).map_err(|e| e.to_string())?;
        let mut files = Vec::new();
        collect_files(dir.path(), dir.path(), &mut files);
        trees.push(files);
    }
    let csvs = trees[0]
        .iter()
        .filter(|(name, _)| name.ends_with(".csv"))
        .count();
    ensure(csvs > 0, || "no CSV outputs written".into())?;
    ensure(trees[0] == trees[1], || {
        "two single-thread runs differ".into()
    })?;
    ensure(trees[0] == trees[2], || {
        "single- and multi-thread runs differ".into()
    })?;
    Ok(format!(
        "{} files ({csvs} CSV) identical across 3 runs",
        trees[0].len()
    ))
}

// ---------------------------------------------------------------------------
// 8. round trips

fn round_trips() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = GeneratorConfig {
        seed: 8,
        ..GeneratorConfig::default()
    };
    let ds = synthdata::generate(&config, 257).map_err(|e| e.to_string())?;
    let path = dir.path().join("fixture.bin");
    synthdata::write_dataset(&ds, &path).map_err(|e| e.to_string())?;
    let back: AttributeDataset = synthdata::read_dataset(&path).map_err(|e| e.to_string())?;
    let bits = |a: &AttributeDataset| a.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(bits(&ds) == bits(&back), || "feature bits differ".into())?;
    ensure(ds.labels() == back.labels(), || "labels differ".into())?;
    ensure(ds.attribute_names() == back.attribute_names(), || {
        "names differ".into()
    })?;
    ensure(ds.content_hash() == back.content_hash(), || {
        "content hash differs".into()
    })?;

    let mut models = 0;
    for (dims, act) in [
        (vec![16, 10], Activation::Tanh),
        (vec![16, 64, 32, 10], Activation::Tanh),
        (vec![5, 7, 1], Activation::Relu),
    ] {
        let model = MlpModel::init(&dims, act, 9).unwrap();
        let path = dir.path().join(format!("m{models}.ckpt"));
        model.write_checkpoint(&path).map_err(|e| e.to_string())?;
        let back = MlpModel::read_checkpoint(&path).map_err(|e| e.to_string())?;
        let param_bits = |m: &MlpModel| {
            m.flat_params()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        ensure(param_bits(&model) == param_bits(&back), || {
            format!("checkpoint {dims:?} differs")
        })?;
        ensure(
            back.layer_dims() == model.layer_dims() && back.activation() == act,
            || format!("checkpoint {dims:?} metadata differs"),
        )?;
        ensure(
            back.to_checkpoint_bytes() == std::fs::read(&path).unwrap(),
            || format!("checkpoint {dims:?} does not re-encode identically"),
        )?;
        models += 1;
    }
    Ok(format!(
        "dataset 257x16x10 and {models} checkpoints bit-exact"
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "adaptation weight laws",
            weight_laws,
            Duration::from_secs(1),
        ),
        ("gradient check", gradient_check, Duration::from_secs(10)),
        ("sampling law", sampling_law, Duration::from_secs(10)),
        ("metric oracles", metric_oracles, Duration::from_secs(30)),
        (
            "domain-adaptation direction",
            adaptation_direction,
            Duration::from_secs(600),
        ),
        (
            "multi-task direction",
            multitask_direction,
            Duration::from_secs(600),
        ),
        ("determinism", determinism, Duration::from_secs(600)),
        ("round trips", round_trips, Duration::from_secs(60)),
    ];
    let only: Option<usize> = std::env::var("MOONLITE_CRITERION")
        .ok()
        .and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let number = k + 1;
        if only.is_some_and(|o| o != number) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > *budget => {
                Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {number} PASS {name}: {detail} ({elapsed:.1?})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {number} FAIL {name}: {detail} ({elapsed:.1?})");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
