use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CalibrationConfig, DatasetConfig, DefenseConfig, ExperimentConfig, ModelConfig, OrTuning};
use super::dataset::{synth_dataset, Dataset};
use super::error::HarnessError;
use crate::attacks::{
    cw_l2_attack, pgd_attack_at_precision, ql_attack, zoo_attack, AttackConfig, AttackFamily, AttackResult, Goal,
};
use crate::defense::{
    calibrate_variance, calibrate_variance_corrected, calibrate_variance_mc, defended_query, simulate_flip_rate,
    DefendedModel, NoiseSpec, Phase, QueryLedger,
};
use crate::nn::{load_checkpoint, train, LabeledExample, Model, TrainConfig, TrainLog};
use crate::rng::{self, tags};

/// JSON has no NaN; serde_json writes it as `null`, read it back as NaN.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub widths: Vec<usize>,
    pub params: usize,
    pub or_sigma: f64,
    pub adv_train: bool,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrTuningRow {
    pub sigma: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub val_accuracy: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub val_robust_accuracy: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub sigma2: f64,
    pub accuracy: f64,
}

/// One attack against one defense setting, aggregated over images and
/// repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub attack: String,
    pub family: AttackFamily,
    /// Defense variance for black-box attacks; `None` for white-box ones.
    pub sigma2: Option<f64>,
    pub averaging: usize,
    pub runs: usize,
    pub successes: usize,
    /// Successes confirmed on the undefended model, over `runs`.
    pub success_rate: f64,
    /// Successes as seen by the attacker through the defense.
    pub observed_success_rate: f64,
    /// Mean distortions over confirmed successes (NaN without any).
    #[serde(deserialize_with = "nan_from_null")]
    pub mean_l2: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub mean_linf: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub mean_queries: f64,
    pub max_queries: u64,
    pub query_limit: u64,
    pub per_repeat_success: Vec<f64>,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub attack: String,
    pub sigma2: Option<f64>,
    pub iteration: usize,
    #[serde(deserialize_with = "nan_from_null")]
    pub mean_loss: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub delta: f64,
    pub k: f64,
    pub literal: f64,
    pub corrected: f64,
    pub mc: f64,
    /// Flip rate at `mc` on fresh draws.
    pub check_flip_rate: f64,
    pub check_std_error: f64,
    pub check_trials: usize,
    /// `(literal - mc) / mc`.
    #[serde(deserialize_with = "nan_from_null")]
    pub literal_rel_dev: f64,
    pub mc_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub substitute_or_sigma: f64,
    pub n_images: usize,
    /// Attack on the substitute succeeded on the substitute.
    pub substitute_success_rate: f64,
    /// Examples crafted on the substitute that also fool the target.
    pub transfer_success_rate: f64,
    /// The same attack run directly against the target.
    pub direct_success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub dataset: String,
    pub n_train: usize,
    pub n_test: usize,
    pub num_classes: usize,
    pub model: ModelSummary,
    pub or_tuning: Vec<OrTuningRow>,
    #[serde(deserialize_with = "nan_from_null")]
    pub clean_accuracy: f64,
    pub defended_accuracy: Vec<AccuracyRow>,
    /// Test-set indices of the attacked images.
    pub eval_images: Vec<usize>,
    pub attacks: Vec<AttackRow>,
    pub traces: Vec<TraceRow>,
    pub calibration: Vec<CalibrationRow>,
    pub transfer: Option<TransferReport>,
    pub errors: Vec<String>,
}

/// Wall-clock measurements, kept apart from the reproducible report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_secs: f64,
    pub model_secs: f64,
    pub attacks: Vec<(String, f64)>,
}

pub fn load_dataset(cfg: &DatasetConfig) -> Result<Dataset, HarnessError> {
    match cfg {
        DatasetConfig::Mnist { dir, max_train, max_test } => {
            let mut d = Dataset::mnist(dir)?;
            if let Some(n) = max_train {
                d.train.truncate(*n);
            }
            if let Some(n) = max_test {
                d.test.truncate(*n);
            }
            Ok(d)
        }
        DatasetConfig::Synthetic { seed, .. } => synth_dataset(&cfg.synth_spec().expect("synthetic"), *seed),
    }
}

pub fn accuracy(model: &Model, data: &[LabeledExample]) -> Result<f64, HarnessError> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let hits: Result<Vec<bool>, _> = data.par_iter().map(|e| model.predict(&e.x).map(|p| p == e.y)).collect();
    Ok(hits?.iter().filter(|&&h| h).count() as f64 / data.len() as f64)
}

/// Accuracy of the argmax of one defended answer per example.
pub fn defended_accuracy(
    model: &Model,
    data: &[LabeledExample],
    spec: &NoiseSpec,
    seed: u64,
) -> Result<f64, HarnessError> {
    let ledger = QueryLedger::unlimited();
    let hits: Result<Vec<bool>, HarnessError> = data
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let mut r = rng::stream(seed, &[i as u64]);
            let out = defended_query(model, &e.x, spec, &mut r, &ledger)?;
            Ok(out.argmax() == e.y)
        })
        .collect();
    Ok(hits?.iter().filter(|&&h| h).count() as f64 / data.len().max(1) as f64)
}

/// The first `n` correctly classified test indices in a seeded order.
pub fn select_eval_images(
    model: &Model,
    test: &[LabeledExample],
    n: usize,
    seed: u64,
) -> Result<Vec<usize>, HarnessError> {
    let mut order: Vec<usize> = (0..test.len()).collect();
    order.shuffle(&mut rng::stream(seed, &[tags::EVAL_PICK]));
    let mut picked = Vec::with_capacity(n);
    for i in order {
        if picked.len() == n {
            break;
        }
        if model.predict(&test[i].x)? == test[i].y {
            picked.push(i);
        }
    }
    Ok(picked)
}

fn widths(dataset: &Dataset, hidden: &[usize]) -> Vec<usize> {
    let mut w = vec![dataset.dims];
    w.extend_from_slice(hidden);
    w.push(dataset.num_classes);
    w
}

pub fn train_model(
    dataset: &Dataset,
    hidden: &[usize],
    data: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(Model, TrainLog), HarnessError> {
    let model = Model::mlp(&widths(dataset, hidden), cfg.seed)?;
    Ok(train(model, data, cfg)?)
}

fn robust_accuracy(
    model: &Model,
    data: &[LabeledExample],
    attack: &AttackConfig,
    seed: u64,
) -> Result<f64, HarnessError> {
    let survived: Result<Vec<bool>, HarnessError> = data
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            if model.predict(&e.x)? != e.y {
                return Ok(false);
            }
            let r = pgd_attack_at_precision(model, &e.x, e.y, attack, &mut rng::stream(seed, &[i as u64]))?;
            Ok(!r.success)
        })
        .collect();
    Ok(survived?.iter().filter(|&&s| s).count() as f64 / data.len().max(1) as f64)
}

/// Trains one model per candidate training-noise level on the training set
/// minus a validation tail, and keeps the one with the best PGD robust
/// validation accuracy whose clean validation accuracy is within
/// `max_accuracy_drop` of a noise-free model.
pub fn tune_or_sigma(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    tuning: &OrTuning,
) -> Result<(Model, TrainLog, f64, Vec<OrTuningRow>), HarnessError> {
    let n = dataset.train.len();
    if tuning.validation == 0 || tuning.validation >= n {
        return Err(HarnessError::Config(format!(
            "validation split {} does not fit {n} training examples",
            tuning.validation
        )));
    }
    let (fit, val) = dataset.train.split_at(n - tuning.validation);
    let attack_set = &val[..tuning.n_attack.min(val.len())];
    let attack = AttackConfig { family: AttackFamily::Pgd, pgd: tuning.pgd.clone(), ..Default::default() };
    let base_cfg = TrainConfig { or_sigma: 0.0, ..model_cfg.train.clone() };
    let (reference, _) = train_model(dataset, &model_cfg.hidden, fit, &base_cfg)?;
    let reference_acc = accuracy(&reference, val)?;

    let mut rows = Vec::new();
    let mut best: Option<(usize, f64, Model, TrainLog)> = None;
    for (k, &sigma) in tuning.candidates.iter().enumerate() {
        let cfg = TrainConfig { or_sigma: sigma, ..model_cfg.train.clone() };
        let (model, log) = train_model(dataset, &model_cfg.hidden, fit, &cfg)?;
        let acc = accuracy(&model, val)?;
        let robust =
            robust_accuracy(&model, attack_set, &attack, rng::derive_seed(cfg.seed, &[tags::EVAL_PICK, k as u64]))?;
        rows.push(OrTuningRow { sigma, val_accuracy: acc, val_robust_accuracy: robust, selected: false });
        let eligible = acc >= reference_acc - tuning.max_accuracy_drop;
        if eligible && best.as_ref().is_none_or(|(_, r, _, _)| robust > *r) {
            best = Some((k, robust, model, log));
        }
    }
    let (k, _, model, log) =
        best.ok_or_else(|| HarnessError::Config("no training-noise candidate kept its accuracy".into()))?;
    rows[k].selected = true;
    Ok((model, log, tuning.candidates[k], rows))
}

/// Loads or trains the model described by `cfg`.
pub fn prepare_model(
    dataset: &Dataset,
    cfg: &ModelConfig,
) -> Result<(Model, Option<TrainLog>, ModelSummary, Vec<OrTuningRow>), HarnessError> {
    let w = widths(dataset, &cfg.hidden);
    let (model, log, or_sigma, rows) = if let Some(path) = &cfg.checkpoint {
        let m: Model = load_checkpoint(path)?;
        (m, None, cfg.train.or_sigma, Vec::new())
    } else if let Some(t) = &cfg.tune_or_sigma {
        let (m, log, s, rows) = tune_or_sigma(dataset, cfg, t)?;
        (m, Some(log), s, rows)
    } else {
        let (m, log) = train_model(dataset, &cfg.hidden, &dataset.train, &cfg.train)?;
        (m, Some(log), cfg.train.or_sigma, Vec::new())
    };
    if model.input_len() != dataset.dims || model.num_classes() != dataset.num_classes {
        return Err(HarnessError::Config(format!(
            "model maps {} inputs to {} classes; dataset has {} and {}",
            model.input_len(),
            model.num_classes(),
            dataset.dims,
            dataset.num_classes
        )));
    }
    let summary = ModelSummary {
        widths: if cfg.checkpoint.is_some() { model_widths(&model) } else { w },
        params: model.params().len(),
        or_sigma,
        adv_train: cfg.checkpoint.is_none() && cfg.train.adv_train.is_some(),
        checkpoint: cfg.checkpoint.as_ref().map(|p| p.display().to_string()),
    };
    Ok((model, log, summary, rows))
}

fn model_widths(model: &Model) -> Vec<usize> {
    let mut w = vec![model.input_len()];
    w.extend(model.layers().iter().map(|l| l.output_len()));
    w
}

fn noise_spec(defense: &DefenseConfig, num_classes: usize, sigma2: f64) -> Result<NoiseSpec, HarnessError> {
    Ok(NoiseSpec::new(vec![defense.mu; num_classes], vec![sigma2; num_classes], defense.site, Phase::Inference)?)
}

/// Result of one attack run on one image.
#[derive(Debug, Clone)]
struct Outcome {
    observed: bool,
    confirmed: bool,
    l2: f64,
    linf: f64,
    queries: u64,
    trace: Vec<f64>,
}

fn goal_for(cfg: &AttackConfig, y: usize, num_classes: usize) -> Goal {
    if cfg.targeted {
        Goal::Targeted { target: cfg.target.unwrap_or((y + 1) % num_classes) }
    } else {
        Goal::Untargeted { label: y }
    }
}

/// Runs one attack on one image. Black-box attacks see only the defended
/// oracle; success is then checked on the undefended model.
fn run_one(
    model: &Model,
    example: &LabeledExample,
    attack: &AttackConfig,
    spec: Option<&NoiseSpec>,
    attack_seed: u64,
    defense_seed: u64,
) -> Result<Outcome, HarnessError> {
    let mut arng = rng::stream(attack_seed, &[]);
    let c = model.num_classes();
    let mut goal = goal_for(attack, example.y, c);
    let result: AttackResult = match attack.family {
        AttackFamily::Zoo | AttackFamily::QlNes => {
            let spec = spec.expect("black-box attacks run against a defense").clone();
            let mut oracle =
                DefendedModel::new(model, spec, rng::stream(defense_seed, &[]), attack.effective_max_queries())?;
            if attack.family == AttackFamily::Zoo {
                zoo_attack(&mut oracle, &example.x, goal, attack, &mut arng)?
            } else {
                ql_attack(&mut oracle, &example.x, goal, attack, &mut arng)?
            }
        }
        AttackFamily::Pgd => pgd_attack_at_precision(model, &example.x, example.y, attack, &mut arng)?,
        AttackFamily::CwL2 => {
            // CW-L2 is targeted; an untargeted run aims at the runner-up class.
            if !attack.targeted {
                let logits = model.forward(&example.x)?;
                let runner_up = (0..c)
                    .filter(|&k| k != example.y)
                    .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
                    .expect("at least two classes");
                goal = Goal::Targeted { target: runner_up };
            }
            cw_l2_attack(model, &example.x, goal.class(), attack, &mut arng)?
        }
    };
    let confirmed = match &result.adversarial_example {
        Some(adv) if result.success => goal.reached(model.predict(adv)?),
        _ => false,
    };
    Ok(Outcome {
        observed: result.success,
        confirmed,
        l2: result.l2,
        linf: result.linf,
        queries: result.queries_used,
        trace: result.loss_trace.iter().map(|t| t.loss).collect(),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn trace_rows(attack: &str, sigma2: Option<f64>, traces: &[&[f64]]) -> Vec<TraceRow> {
    let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    let stride = len.div_ceil(200).max(1);
    (0..len)
        .step_by(stride)
        .map(|it| {
            let vals: Vec<f64> = traces.iter().filter_map(|t| t.get(it).copied()).collect();
            TraceRow {
                attack: attack.to_string(),
                sigma2,
                iteration: it,
                mean_loss: mean(vals.iter().copied()),
                runs: vals.len(),
            }
        })
        .collect()
}

/// Evaluates `attack` on the given test images for every repeat, in
/// parallel over runs with a deterministic result order.
#[allow(clippy::too_many_arguments)]
fn evaluate_attack(
    model: &Model,
    test: &[LabeledExample],
    images: &[usize],
    attack: &AttackConfig,
    attack_index: usize,
    sigma_index: usize,
    spec: Option<&NoiseSpec>,
    repeats: usize,
    seed: u64,
) -> (AttackRow, Vec<TraceRow>, Vec<String>) {
    let jobs: Vec<(usize, usize)> = (0..repeats).flat_map(|r| images.iter().map(move |&i| (r, i))).collect();
    let path = |tag: u64, r: usize, i: usize| {
        rng::derive_seed(seed, &[tag, attack_index as u64, attack.seed, sigma_index as u64, r as u64, i as u64])
    };
    let outcomes: Vec<Result<Outcome, HarnessError>> = jobs
        .par_iter()
        .map(|&(r, i)| run_one(model, &test[i], attack, spec, path(tags::ATTACK, r, i), path(tags::DEFENSE, r, i)))
        .collect();

    let label = attack.label();
    let mut errors = Vec::new();
    let mut ok = Vec::new();
    let mut per_repeat = vec![(0usize, 0usize); repeats];
    for (&(r, i), o) in jobs.iter().zip(&outcomes) {
        match o {
            Ok(o) => {
                per_repeat[r].1 += 1;
                per_repeat[r].0 += o.confirmed as usize;
                ok.push(o);
            }
            Err(e) => {
                per_repeat[r].1 += 1;
                errors.push(format!("{label} image {i} repeat {r}: {e}"));
            }
        }
    }
    let runs = jobs.len();
    let successes = ok.iter().filter(|o| o.confirmed).count();
    let row = AttackRow {
        attack: label.clone(),
        family: attack.family,
        sigma2: spec.map(|s| s.sigma2[0]),
        averaging: attack.averaging,
        runs,
        successes,
        success_rate: successes as f64 / runs.max(1) as f64,
        observed_success_rate: ok.iter().filter(|o| o.observed).count() as f64 / runs.max(1) as f64,
        mean_l2: mean(ok.iter().filter(|o| o.confirmed).map(|o| o.l2)),
        mean_linf: mean(ok.iter().filter(|o| o.confirmed).map(|o| o.linf)),
        mean_queries: mean(ok.iter().map(|o| o.queries as f64)),
        max_queries: ok.iter().map(|o| o.queries).max().unwrap_or(0),
        query_limit: if attack.family.is_black_box() { attack.effective_max_queries() } else { 0 },
        per_repeat_success: per_repeat.iter().map(|&(s, n)| s as f64 / n.max(1) as f64).collect(),
        errors: errors.len(),
    };
    let traces: Vec<&[f64]> = ok.iter().map(|o| o.trace.as_slice()).collect();
    let trace = trace_rows(&label, row.sigma2, &traces);
    (row, trace, errors)
}

/// Deterministic σ² table for every (δ, K) pair of `cfg`.
pub fn calibration_table(cfg: &CalibrationConfig, seed: u64) -> Result<Vec<CalibrationRow>, HarnessError> {
    let grid: Vec<(usize, f64, f64)> = cfg
        .delta
        .iter()
        .flat_map(|&d| cfg.k.iter().map(move |&k| (d, k)))
        .enumerate()
        .map(|(i, (d, k))| (i, d, k))
        .collect();
    grid.par_iter()
        .map(|&(i, delta, k)| {
            let literal = calibrate_variance(delta, k)?;
            let corrected = calibrate_variance_corrected(delta, k)?;
            let mc = calibrate_variance_mc(delta, k, cfg.trials, &mut rng::stream(seed, &[tags::VERIFY, i as u64, 0]))?;
            let (rate, se) =
                simulate_flip_rate(delta, mc.sigma2, cfg.trials, &mut rng::stream(seed, &[tags::VERIFY, i as u64, 1]))?;
            Ok(CalibrationRow {
                delta,
                k,
                literal,
                corrected,
                mc: mc.sigma2,
                check_flip_rate: rate,
                check_std_error: se,
                check_trials: cfg.trials,
                literal_rel_dev: (literal - mc.sigma2) / mc.sigma2,
                mc_steps: mc.steps,
            })
        })
        .collect()
}

/// Crafts `attack` (white-box) on `substitute` for `n_images` test images
/// the target classifies correctly, and counts how often the result also
/// fools `target`. The same attack is run directly on `target` for
/// comparison.
pub fn transfer_attack_eval(
    target: &Model,
    substitute: &Model,
    substitute_or_sigma: f64,
    test: &[LabeledExample],
    n_images: usize,
    attack: &AttackConfig,
    seed: u64,
) -> Result<TransferReport, HarnessError> {
    if attack.family.is_black_box() {
        return Err(HarnessError::Config(
            "transfer attacks are crafted with white-box access to the substitute".into(),
        ));
    }
    let images = select_eval_images(target, test, n_images, seed)?;
    let results: Result<Vec<(bool, bool, bool)>, HarnessError> = images
        .par_iter()
        .map(|&i| {
            let e = &test[i];
            let s = rng::derive_seed(seed, &[tags::ATTACK, i as u64]);
            let goal = goal_for(attack, e.y, target.num_classes());
            let crafted = match attack.family {
                AttackFamily::Pgd => pgd_attack_at_precision(substitute, &e.x, e.y, attack, &mut rng::stream(s, &[]))?,
                _ => cw_l2_attack(substitute, &e.x, goal.class(), attack, &mut rng::stream(s, &[]))?,
            };
            let (fools_sub, transfers) = match &crafted.adversarial_example {
                Some(adv) if crafted.success => (true, goal.reached(target.predict(adv)?)),
                _ => (false, false),
            };
            let direct = run_one(target, e, attack, None, s, 0)?;
            Ok((fools_sub, transfers, direct.confirmed))
        })
        .collect();
    let results = results?;
    let n = results.len().max(1) as f64;
    let rate = |f: fn(&(bool, bool, bool)) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n;
    Ok(TransferReport {
        substitute_or_sigma,
        n_images: results.len(),
        substitute_success_rate: rate(|r| r.0),
        transfer_success_rate: rate(|r| r.1),
        direct_success_rate: rate(|r| r.2),
    })
}

/// Runs the full experiment described by `cfg`: prepares the model,
/// measures clean and defended accuracy, evaluates every attack (black-box
/// ones at every defense variance), and adds the optional calibration table
/// and transfer evaluation. Per-attack failures are recorded in the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Timing), HarnessError> {
    cfg.validate()?;
    if cfg.attacks.is_empty() && cfg.calibration.is_none() && cfg.transfer.is_none() {
        return Err(HarnessError::Config("nothing to run: no attacks, calibration or transfer section".into()));
    }
    let start = Instant::now();
    let dataset = load_dataset(&cfg.dataset)?;
    let (model, _, summary, or_tuning) = prepare_model(&dataset, &cfg.model)?;
    let mut timing = Timing { model_secs: start.elapsed().as_secs_f64(), ..Default::default() };

    let clean_accuracy = accuracy(&model, &dataset.test)?;
    let mut defended = Vec::new();
    for (s, &sigma2) in cfg.defense.sigma2.iter().enumerate() {
        let spec = noise_spec(&cfg.defense, dataset.num_classes, sigma2)?;
        let acc =
            defended_accuracy(&model, &dataset.test, &spec, rng::derive_seed(cfg.seed, &[tags::ACCURACY, s as u64]))?;
        defended.push(AccuracyRow { sigma2, accuracy: acc });
    }
    let images = select_eval_images(&model, &dataset.test, cfg.n_eval_images, cfg.seed)?;

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut errors = Vec::new();
    for (a, attack) in cfg.attacks.iter().enumerate() {
        let t = Instant::now();
        let settings: Vec<Option<f64>> = if attack.family.is_black_box() {
            cfg.defense.sigma2.iter().map(|&s| Some(s)).collect()
        } else {
            vec![None]
        };
        for (s, sigma2) in settings.into_iter().enumerate() {
            let spec = sigma2.map(|v| noise_spec(&cfg.defense, dataset.num_classes, v)).transpose()?;
            let (row, tr, errs) =
                evaluate_attack(&model, &dataset.test, &images, attack, a, s, spec.as_ref(), cfg.repeats, cfg.seed);
            rows.push(row);
            traces.extend(tr);
            errors.extend(errs);
        }
        timing.attacks.push((attack.label(), t.elapsed().as_secs_f64()));
    }

    let calibration = match &cfg.calibration {
        Some(c) => calibration_table(c, cfg.seed)?,
        None => Vec::new(),
    };
    let transfer = match &cfg.transfer {
        Some(t) => {
            let sub_cfg = TrainConfig { or_sigma: t.substitute_or_sigma, ..cfg.model.train.clone() };
            let (substitute, _) = train_model(&dataset, &cfg.model.hidden, &dataset.train, &sub_cfg)?;
            Some(transfer_attack_eval(
                &model,
                &substitute,
                t.substitute_or_sigma,
                &dataset.test,
                cfg.n_eval_images,
                &t.attack,
                rng::derive_seed(cfg.seed, &[tags::ATTACK, u64::MAX]),
            )?)
        }
        None => None,
    };
    timing.total_secs = start.elapsed().as_secs_f64();

    let report = ExperimentReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        dataset: dataset.name.clone(),
        n_train: dataset.train.len(),
        n_test: dataset.test.len(),
        num_classes: dataset.num_classes,
        model: summary,
        or_tuning,
        clean_accuracy,
        defended_accuracy: defended,
        eval_images: images,
        attacks: rows,
        traces,
        calibration,
        transfer,
        errors,
    };
    Ok((report, timing))
}
