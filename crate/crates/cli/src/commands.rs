//! Subcommand implementations. Each returns the process exit code:
//! 0 for success (and deployable, for `evaluate`), 1 when a deployment
//! gate fails, 2 on any execution or validation error.

use std::path::{Path, PathBuf};

use anyhow::Context;
use surety::adversarial::{self, default_budget};
use surety::calibration::{self, BinningScheme};
use surety::log::{load_log, save_log};
use surety::losses::Metric;
use surety::monitor::{
    self, append_event_log, ConsecutiveRuleMonitor, MetricStream, MonitorEvent, PageHinkley,
    ThresholdMonitor, ZScoreMonitor,
};
use surety::record::{PayloadKind, PredictionRecord};
use surety::rng::Seed;
use surety::shift::{self, ConfusionMatrix};
use surety::synth::{self, GeneratorSpec, ShiftSpec, TrainConfig};
use surety::testcase::run_suite_threads;
use surety::uncertainty::UncertaintyMetric;

use crate::config::{
    CalibrationTask, DetectorSpec, MonitorDef, ShiftTask, SuiteConfig,
};
use crate::report::{
    AdversarialSummary, CalibrationSection, ConformalSummary, MonitorSummary, Provenance,
    RunReport, ShiftSummary,
};
use crate::{adapters, OutputFormat};

pub const EXIT_OK: u8 = 0;
pub const EXIT_GATE_FAILED: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

fn write_or_print(output: Option<&Path>, content: &str, quiet: bool) -> anyhow::Result<()> {
    match output {
        Some(path) => {
            std::fs::write(path, content)
                .with_context(|| format!("failed to write {}", path.display()))?;
            if !quiet {
                eprintln!("wrote {}", path.display());
            }
        }
        None => print!("{content}"),
    }
    Ok(())
}

/// `surety evaluate`: run everything a config names and emit the report.
pub fn evaluate(
    config_path: &Path,
    output: Option<&Path>,
    seed_override: Option<u64>,
    threads: usize,
    quiet: bool,
) -> anyhow::Result<u8> {
    let (config, config_hash) = SuiteConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let problems = config.validate(&base);
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("config error: {p}");
        }
        anyhow::bail!("{} config error(s), nothing was run", problems.len());
    }

    let seed = Seed(seed_override.unwrap_or(config.seed));
    let dataset = load_log(base.join(&config.dataset.path), config.dataset.schema)?;

    let cases = config
        .cases
        .iter()
        .map(|c| config.build_case(c))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let suite = run_suite_threads(&cases, &dataset, threads)?;

    let mut detection_gates = Vec::new();
    for def in &config.detection_gates {
        let gate = config.build_gate(def)?;
        detection_gates.push(surety::detect::detection_satisficing_gate(&dataset, &gate)?);
    }

    let mut calibration = CalibrationSection::default();
    for task in &config.calibration {
        run_calibration_task(task, &dataset, &mut calibration)?;
    }

    let mut monitor_summaries = Vec::new();
    for def in &config.monitors {
        let (events, _) = run_monitor(def, &dataset)?;
        monitor_summaries.push(MonitorSummary {
            name: def.name.clone(),
            metric: def.metric.clone(),
            events: events.len(),
            first_event_index: events.first().map(|e| e.index),
        });
    }

    let mut shift_summaries = Vec::new();
    for def in &config.shift_tasks {
        shift_summaries.push(run_shift_task(&def.name, &def.task, &dataset, &base, seed)?);
    }

    let mut adversarial_summaries = Vec::new();
    for def in &config.adversarial {
        let model = adapters::resolve_model(&def.model, &base)?;
        let mut instances = adversarial::instances_from_records(&dataset)?;
        if let Some(cap) = def.max_instances {
            instances.truncate(cap);
        }
        let metric = Metric::from_name(&def.loss)?;
        let dim = instances.first().map_or(0, |i| i.features.len());
        let estimate = adversarial::adversarial_risk_estimate(
            model.as_ref(),
            &instances,
            metric,
            &def.perturbation,
            def.budget.unwrap_or_else(|| default_budget(dim)),
            seed,
        )?;
        adversarial_summaries.push(AdversarialSummary {
            name: def.name.clone(),
            clean_risk: estimate.clean_risk,
            adversarial_risk_lower_bound: estimate.adversarial_risk_lower_bound,
            instances: estimate.instances,
            queries_used: estimate.queries_used,
        });
    }

    let mut report = RunReport {
        provenance: Provenance {
            config_hash,
            seed: seed.0,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        suite,
        detection_gates,
        calibration,
        monitors: monitor_summaries,
        shift: shift_summaries,
        adversarial: adversarial_summaries,
        deployable: false,
    };
    report.compute_deployable();

    let json = serde_json::to_string_pretty(&report)?;
    match output {
        Some(path) => {
            std::fs::write(path, format!("{json}\n"))
                .with_context(|| format!("failed to write {}", path.display()))?;
            let md_path = path.with_extension("md");
            std::fs::write(&md_path, report.to_markdown())
                .with_context(|| format!("failed to write {}", md_path.display()))?;
            if !quiet {
                eprintln!("wrote {} and {}", path.display(), md_path.display());
            }
        }
        None => println!("{json}"),
    }
    if !quiet {
        eprintln!(
            "deployable: {}",
            if report.deployable { "yes" } else { "no" }
        );
    }
    Ok(if report.deployable {
        EXIT_OK
    } else {
        EXIT_GATE_FAILED
    })
}

fn run_calibration_task(
    task: &CalibrationTask,
    dataset: &[PredictionRecord],
    section: &mut CalibrationSection,
) -> anyhow::Result<()> {
    match task {
        CalibrationTask::Ece { bins, scheme } => {
            section.ece = Some(calibration::ece(dataset, *bins, *scheme)?);
        }
        CalibrationTask::Temperature => {
            let t = calibration::fit_temperature(dataset)?;
            let nll = |records: &[PredictionRecord]| -> anyhow::Result<f64> {
                let mut total = 0.0;
                for r in records {
                    total += Metric::Nll.per_instance(r)?.value();
                }
                Ok(total / records.len() as f64)
            };
            section.nll_before = Some(nll(dataset)?);
            let rescaled: Vec<PredictionRecord> = dataset
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    if let surety::record::Payload::Classification { probs, .. } = &mut r.payload {
                        *probs = calibration::apply_temperature(probs, t);
                    }
                    r
                })
                .collect();
            section.nll_after = Some(nll(&rescaled)?);
            section.temperature = Some(t.value());
        }
        CalibrationTask::IntervalCoverage { levels } => {
            for &p in levels {
                let c = calibration::interval_coverage(dataset, p)?;
                section.interval_coverage.push((p, c));
            }
            section.regression_calibration_error =
                Some(calibration::regression_calibration_error(dataset, levels)?);
        }
        CalibrationTask::Sharpness => {
            section.sharpness = Some(calibration::sharpness(dataset)?);
        }
        CalibrationTask::Conformal {
            alpha,
            calibration_fraction,
        } => {
            let split = ((dataset.len() as f64) * calibration_fraction).round() as usize;
            let split = split.clamp(1, dataset.len().saturating_sub(1).max(1));
            let (cal_records, eval_records) = dataset.split_at(split);
            let cal = calibration::conformal_calibrate(cal_records, *alpha)?;
            let mut covered = 0usize;
            let mut set_sizes = 0usize;
            for r in eval_records {
                let probs = r
                    .predictive_probs()
                    .ok_or_else(|| anyhow::anyhow!("record {} is not classification", r.id))?;
                let truth = r
                    .truth_class()
                    .ok_or_else(|| anyhow::anyhow!("record {} has no ground truth", r.id))?;
                let set = cal.prediction_set(&probs);
                covered += usize::from(set.contains(&truth));
                set_sizes += set.len();
            }
            let n_eval = eval_records.len().max(1);
            section.conformal = Some(ConformalSummary {
                alpha: *alpha,
                threshold: cal.threshold(),
                calibration_size: cal.calibration_size(),
                evaluated: eval_records.len(),
                empirical_coverage: covered as f64 / n_eval as f64,
                mean_set_size: set_sizes as f64 / n_eval as f64,
            });
        }
    }
    Ok(())
}

fn run_monitor(
    def: &MonitorDef,
    dataset: &[PredictionRecord],
) -> anyhow::Result<(Vec<MonitorEvent>, MetricStream)> {
    let metric = UncertaintyMetric::from_name(&def.metric)
        .ok_or_else(|| anyhow::anyhow!("unknown metric {}", def.metric))?;
    let stream = MetricStream::from_records(dataset, metric)?;
    let events = run_detector(&def.detector, &stream)?;
    Ok((events, stream))
}

pub fn run_detector(
    spec: &DetectorSpec,
    stream: &MetricStream,
) -> anyhow::Result<Vec<MonitorEvent>> {
    let events = match spec {
        DetectorSpec::Threshold { theta, direction } => {
            let mut m = ThresholdMonitor::new(*theta, *direction);
            stream
                .points()
                .iter()
                .filter_map(|p| m.feed(p.index, p.value))
                .collect()
        }
        DetectorSpec::ConsecutiveRule { theta, m } => {
            let mut monitor = ConsecutiveRuleMonitor::new(*theta, *m)?;
            stream
                .points()
                .iter()
                .filter_map(|p| monitor.feed(p.index, p.value))
                .collect()
        }
        DetectorSpec::Zscore { z, nominal_count } => {
            let points = stream.points();
            let n = (*nominal_count).min(points.len());
            let nominal = MetricStream::new(points[..n].to_vec())?;
            let profile = monitor::build_profile(&nominal)?;
            let mut m = ZScoreMonitor::new(profile, *z);
            points[n..]
                .iter()
                .filter_map(|p| m.feed(p.index, p.value))
                .collect()
        }
        DetectorSpec::PageHinkley { delta, lambda } => {
            let mut detector = PageHinkley::new(*delta, *lambda)?;
            stream
                .points()
                .iter()
                .filter_map(|p| detector.feed(p.index, p.value))
                .collect()
        }
    };
    Ok(events)
}

/// `surety calibrate`: fit a temperature on a log and report the effect.
pub fn calibrate(
    log_path: &Path,
    output: Option<&Path>,
    format: OutputFormat,
    quiet: bool,
) -> anyhow::Result<u8> {
    let dataset = load_log(log_path, PayloadKind::Classification)?;
    let t = calibration::fit_temperature(&dataset)?;
    let ece_before = calibration::ece(&dataset, 15, BinningScheme::EqualWidth)?;
    let rescaled: Vec<PredictionRecord> = dataset
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if let surety::record::Payload::Classification { probs, .. } = &mut r.payload {
                *probs = calibration::apply_temperature(probs, t);
            }
            r
        })
        .collect();
    let ece_after = calibration::ece(&rescaled, 15, BinningScheme::EqualWidth)?;

    #[derive(serde::Serialize)]
    struct CalibrateOutput {
        temperature: f64,
        ece_before: f64,
        ece_after: f64,
        n: usize,
    }
    let result = CalibrateOutput {
        temperature: t.value(),
        ece_before: ece_before.ece,
        ece_after: ece_after.ece,
        n: dataset.len(),
    };
    let content = match format {
        OutputFormat::JsonLines => format!("{}\n", serde_json::to_string(&result)?),
        OutputFormat::Csv => format!(
            "temperature,ece_before,ece_after,n\n{},{},{},{}\n",
            result.temperature, result.ece_before, result.ece_after, result.n
        ),
        OutputFormat::Markdown => format!(
            "| temperature | ece before | ece after | n |\n|---|---|---|---|\n| {:.4} | {:.6} | {:.6} | {} |\n",
            result.temperature, result.ece_before, result.ece_after, result.n
        ),
    };
    write_or_print(output, &content, quiet)?;
    Ok(EXIT_OK)
}

/// `surety monitor`: replay a log (or raw stream) through a monitor and
/// append events to the event log.
#[allow(clippy::too_many_arguments)]
pub fn monitor_cmd(
    log_path: Option<&Path>,
    schema: PayloadKind,
    stream_path: Option<&Path>,
    spec_path: &Path,
    event_log: &Path,
    quiet: bool,
) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("failed to read monitor spec {}", spec_path.display()))?;
    let defs: Vec<MonitorDef> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text)?
    } else {
        vec![serde_json::from_str(&text)?]
    };

    let mut total = 0usize;
    for def in &defs {
        let (events, _) = match (log_path, stream_path) {
            (Some(path), _) => {
                let dataset = load_log(path, schema)?;
                run_monitor(def, &dataset)?
            }
            (None, Some(path)) => {
                let stream = monitor::load_stream(path)?;
                let events = run_detector(&def.detector, &stream)?;
                (events, stream)
            }
            (None, None) => anyhow::bail!("monitor needs --log or --stream"),
        };
        let written = append_event_log(event_log, &def.name, &events)?;
        total += written;
        if !quiet {
            eprintln!("monitor {}: {} event(s)", def.name, written);
        }
    }
    if !quiet {
        eprintln!("appended {total} event(s) to {}", event_log.display());
    }
    Ok(EXIT_OK)
}

fn features_of(records: &[PredictionRecord]) -> anyhow::Result<Vec<Vec<f64>>> {
    records
        .iter()
        .map(|r| {
            r.require_features()
                .map(<[f64]>::to_vec)
                .map_err(|e| anyhow::anyhow!("{e}"))
        })
        .collect()
}

fn run_shift_task(
    name: &str,
    task: &ShiftTask,
    dataset: &[PredictionRecord],
    base: &Path,
    seed: Seed,
) -> anyhow::Result<ShiftSummary> {
    let mut summary = ShiftSummary {
        name: name.to_string(),
        label_shift_weights: None,
        condition_flag: None,
        test_statistic: None,
        p_value: None,
        mean_importance_weight: None,
        mean_ood_score: None,
    };
    match task {
        ShiftTask::LabelShift { source } => {
            let source_records = load_log(base.join(&source.path), source.schema)?;
            let k = source_records
                .iter()
                .chain(dataset)
                .filter_map(|r| r.predictive_probs().map(|p| p.len()))
                .max()
                .ok_or_else(|| anyhow::anyhow!("no classification records"))?;
            let confusion = ConfusionMatrix::from_records(&source_records, k)?;
            let target_dist = shift::predicted_label_distribution(dataset, k)?;
            let estimate = shift::estimate_label_shift(&confusion, &target_dist)?;
            let test = shift::label_shift_test(
                &shift::predicted_label_histogram(&source_records, k)?,
                &shift::predicted_label_histogram(dataset, k)?,
            )?;
            summary.label_shift_weights = Some(estimate.weights);
            summary.condition_flag = Some(estimate.condition_flag);
            summary.test_statistic = Some(test.statistic);
            summary.p_value = Some(test.p_value);
        }
        ShiftTask::ImportanceWeights { source } => {
            let source_records = load_log(base.join(&source.path), source.schema)?;
            let weights = shift::importance_weights(
                &features_of(&source_records)?,
                &features_of(dataset)?,
                seed,
            )?;
            summary.mean_importance_weight =
                Some(weights.iter().sum::<f64>() / weights.len() as f64);
        }
        ShiftTask::OodKnn { source, k } => {
            let source_records = load_log(base.join(&source.path), source.schema)?;
            let reference = features_of(&source_records)?;
            let mut total = 0.0;
            for r in dataset {
                let score = shift::ood_knn(&reference, r.require_features()?, *k)?;
                total += score.value;
            }
            summary.mean_ood_score = Some(total / dataset.len().max(1) as f64);
        }
    }
    Ok(summary)
}

/// `surety shift`: standalone source-vs-target shift analysis.
#[allow(clippy::too_many_arguments)]
pub fn shift_cmd(
    source_path: &Path,
    target_path: &Path,
    schema: PayloadKind,
    task: &str,
    k: usize,
    output: Option<&Path>,
    seed: u64,
    format: OutputFormat,
    quiet: bool,
) -> anyhow::Result<u8> {
    let source = load_log(source_path, schema)?;
    let target = load_log(target_path, schema)?;
    match task {
        "label-shift" => {
            let classes = source
                .iter()
                .chain(&target)
                .filter_map(|r| r.predictive_probs().map(|p| p.len()))
                .max()
                .ok_or_else(|| anyhow::anyhow!("no classification records"))?;
            let confusion = ConfusionMatrix::from_records(&source, classes)?;
            let target_dist = shift::predicted_label_distribution(&target, classes)?;
            let estimate = shift::estimate_label_shift(&confusion, &target_dist)?;
            let test = shift::label_shift_test(
                &shift::predicted_label_histogram(&source, classes)?,
                &shift::predicted_label_histogram(&target, classes)?,
            )?;
            #[derive(serde::Serialize)]
            struct LabelShiftOutput<'a> {
                weights: &'a [f64],
                condition_flag: bool,
                statistic: f64,
                p_value: f64,
                dof: usize,
                low_count_warning: bool,
            }
            let out = LabelShiftOutput {
                weights: &estimate.weights,
                condition_flag: estimate.condition_flag,
                statistic: test.statistic,
                p_value: test.p_value,
                dof: test.dof,
                low_count_warning: test.low_count_warning,
            };
            let content = match format {
                OutputFormat::Csv => {
                    let mut s = String::from("class,weight\n");
                    for (i, w) in estimate.weights.iter().enumerate() {
                        s.push_str(&format!("{i},{w}\n"));
                    }
                    s
                }
                OutputFormat::Markdown => {
                    let mut s = String::from("| class | weight |\n|---|---|\n");
                    for (i, w) in estimate.weights.iter().enumerate() {
                        s.push_str(&format!("| {i} | {w:.6} |\n"));
                    }
                    s.push_str(&format!(
                        "\nchi-square {:.4}, p = {:.6}\n",
                        test.statistic, test.p_value
                    ));
                    s
                }
                OutputFormat::JsonLines => format!("{}\n", serde_json::to_string(&out)?),
            };
            write_or_print(output, &content, quiet)?;
        }
        "importance-weights" => {
            let weights =
                shift::importance_weights(&features_of(&source)?, &features_of(&target)?, Seed(seed))?;
            let mut content = String::new();
            match format {
                OutputFormat::Csv => {
                    content.push_str("id,weight\n");
                    for (r, w) in source.iter().zip(&weights) {
                        content.push_str(&format!("{},{w}\n", r.id));
                    }
                }
                _ => {
                    for (r, w) in source.iter().zip(&weights) {
                        content.push_str(&format!(
                            "{}\n",
                            serde_json::json!({"id": r.id, "weight": w})
                        ));
                    }
                }
            }
            write_or_print(output, &content, quiet)?;
        }
        "ood-knn" => {
            let reference = features_of(&source)?;
            let mut points = Vec::with_capacity(target.len());
            for r in &target {
                let score = shift::ood_knn(&reference, r.require_features()?, k)?;
                points.push(surety::monitor::StreamPoint {
                    index: r.index,
                    value: score.value,
                });
            }
            let stream = MetricStream::new(points)?;
            match output {
                Some(path) => {
                    monitor::save_stream(path, &stream)?;
                    if !quiet {
                        eprintln!("wrote {} scores to {}", stream.len(), path.display());
                    }
                }
                None => {
                    for p in stream.points() {
                        println!("{}", serde_json::to_string(p)?);
                    }
                }
            }
        }
        other => anyhow::bail!("unknown shift task \"{other}\" (label-shift, importance-weights, ood-knn)"),
    }
    Ok(EXIT_OK)
}

/// Simulation input: the generating distribution, an optional shift for
/// the evaluation split, and trainer settings.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SimulateSpec {
    pub generator: GeneratorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftSpec>,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

fn default_n_train() -> usize {
    2000
}

fn default_n_eval() -> usize {
    1000
}

/// `surety simulate`: draw training data from the generator, fit the toy
/// linear model, draw evaluation data from the (optionally shifted)
/// generator, and write the model's prediction log.
pub fn simulate(
    spec_path: &Path,
    n_eval_override: Option<usize>,
    seed: u64,
    output: &Path,
    model_out: Option<&Path>,
    quiet: bool,
) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("failed to read spec {}", spec_path.display()))?;
    let spec: SimulateSpec = serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("spec {}: {e}", spec_path.display()))?;
    let seed = Seed(seed);

    let train_data = synth::generate(&spec.generator, spec.n_train, seed.substream(0))?;
    let trained = synth::train_linear_classifier(
        &train_data,
        spec.generator.class_count(),
        spec.train.unwrap_or_default(),
        seed.substream(1),
        None,
    )?;

    let eval_spec = match &spec.shift {
        Some(shift) => synth::apply_shift(&spec.generator, shift)?,
        None => spec.generator.clone(),
    };
    let n_eval = n_eval_override.unwrap_or(spec.n_eval);
    let eval_data = synth::generate(&eval_spec, n_eval, seed.substream(2))?;
    let records = synth::prediction_records(&trained.model, &eval_data);
    save_log(output, PayloadKind::Classification, &records)?;

    if let Some(path) = model_out {
        std::fs::write(path, format!("{}\n", serde_json::to_string(&trained.model)?))
            .with_context(|| format!("failed to write {}", path.display()))?;
    }
    if !quiet {
        eprintln!(
            "trained on {} examples, wrote {} prediction records to {}",
            spec.n_train,
            records.len(),
            output.display()
        );
    }
    Ok(EXIT_OK)
}

/// `surety advtest`: black-box adversarial risk estimate over a log.
#[allow(clippy::too_many_arguments)]
pub fn advtest(
    log_path: &Path,
    schema: PayloadKind,
    spec_path: &Path,
    model: &str,
    budget: Option<usize>,
    max_instances: Option<usize>,
    seed: u64,
    output: Option<&Path>,
    quiet: bool,
) -> anyhow::Result<u8> {
    #[derive(serde::Deserialize)]
    struct AdvSpec {
        perturbation: surety::adversarial::PerturbationClass,
        loss: String,
        #[serde(default)]
        budget: Option<usize>,
        #[serde(default)]
        max_instances: Option<usize>,
    }
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("failed to read spec {}", spec_path.display()))?;
    let spec: AdvSpec = serde_json::from_str(&text)?;

    let model_ref = parse_model_flag(model)?;
    let model = adapters::resolve_model(&model_ref, Path::new("."))?;
    let dataset = load_log(log_path, schema)?;
    let mut instances = adversarial::instances_from_records(&dataset)?;
    if let Some(cap) = max_instances.or(spec.max_instances) {
        instances.truncate(cap);
    }
    let dim = instances.first().map_or(0, |i| i.features.len());
    let estimate = adversarial::adversarial_risk_estimate(
        model.as_ref(),
        &instances,
        Metric::from_name(&spec.loss)?,
        &spec.perturbation,
        budget.or(spec.budget).unwrap_or_else(|| default_budget(dim)),
        Seed(seed),
    )?;
    let content = format!("{}\n", serde_json::to_string_pretty(&estimate)?);
    write_or_print(output, &content, quiet)?;
    Ok(EXIT_OK)
}

fn parse_model_flag(model: &str) -> anyhow::Result<crate::config::ModelRef> {
    if let Some(path) = model.strip_prefix("linear:") {
        Ok(crate::config::ModelRef::Linear {
            path: PathBuf::from(path),
        })
    } else if let Some(command) = model.strip_prefix("exec:") {
        let mut parts = command.split_whitespace();
        let command = parts
            .next()
            .ok_or_else(|| anyhow::anyhow!("empty exec adapter command"))?;
        Ok(crate::config::ModelRef::Exec {
            command: command.to_string(),
            args: parts.map(str::to_string).collect(),
        })
    } else {
        anyhow::bail!("model must be linear:<path> or exec:<command>, got \"{model}\"")
    }
}

/// `surety report`: render a stored run report as markdown.
pub fn render_report(
    report_path: &Path,
    output: Option<&Path>,
    quiet: bool,
) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(report_path)
        .with_context(|| format!("failed to read {}", report_path.display()))?;
    let report: RunReport = serde_json::from_str(&text)?;
    write_or_print(output, &report.to_markdown(), quiet)?;
    Ok(EXIT_OK)
}
