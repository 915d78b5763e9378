use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{
    Cli, CliError, Command, DataArgs, EvaluateArgs, ImportArgs, PredictArgs, RunConfig, SplitArgs, TrainArgs,
};
use crate::checkpoint::{self, import_pretrained, infer_resnet_config, Checkpoint, ImportMode, NameMap};
use crate::data::{
    load_image, normalize, parse_labels, resolve_images, stratified_split, FileDataset, SampleRecord, SplitManifest,
    CLASS_NAMES,
};
use crate::error::Error;
use crate::fsutil::write_atomic;
use crate::metrics::{self, MetricsReport};
use crate::nn::{Mode, Module, ResNet};
use crate::train::{evaluate, fine_tune, fit, EpochRecord};
use crate::Tensor;

type CmdResult = std::result::Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> std::result::Result<&'a Path, CliError> {
    value.as_deref().ok_or_else(|| usage(format!("missing required {flag}")))
}

fn class_names() -> Vec<String> {
    CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}

pub(super) fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Split(a) => split(&mut cfg, a, out, err),
        Command::Train(a) => train(&mut cfg, a, out, err),
        Command::Evaluate(a) => evaluate_cmd(&mut cfg, a, out, err),
        Command::Predict(a) => predict(&mut cfg, a, out, err),
        Command::ImportWeights(a) => import_weights(&mut cfg, a, out, err),
    }
}

/// Validates the merged config and logs it verbatim.
fn finalize(cfg: &RunConfig, err: &mut dyn Write) -> CmdResult {
    cfg.validate().map_err(usage)?;
    let _ = writeln!(err, "config {}", cfg.to_json());
    Ok(())
}

fn apply_data(cfg: &mut RunConfig, a: DataArgs) {
    cfg.labels = a.labels.or(cfg.labels.take());
    cfg.images = a.images.or(cfg.images.take());
    cfg.split = a.split.or(cfg.split.take());
    cfg.resolution = a.resolution.unwrap_or(cfg.resolution);
    cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
    if a.no_normalize {
        cfg.normalize = false;
    }
}

fn samples(cfg: &RunConfig) -> std::result::Result<Vec<SampleRecord>, CliError> {
    let labels = parse_labels(required(&cfg.labels, "--labels")?)?;
    Ok(resolve_images(&labels, required(&cfg.images, "--images")?)?)
}

fn split(cfg: &mut RunConfig, a: SplitArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    cfg.labels = a.labels.or(cfg.labels.take());
    cfg.split = a.out.or(cfg.split.take());
    cfg.test_fraction = a.fraction.unwrap_or(cfg.test_fraction);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    finalize(cfg, err)?;
    let labels = parse_labels(required(&cfg.labels, "--labels")?)?;
    let manifest = stratified_split(&labels, &CLASS_NAMES, cfg.test_fraction, cfg.seed)?;
    let path = required(&cfg.split, "--out")?;
    write_atomic(path, manifest.to_text().as_bytes())?;
    for c in &manifest.counts {
        let _ = writeln!(out, "{}: train {} test {}", c.class_name, c.train, c.test);
    }
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(())
}

fn default_report(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".report.csv");
    PathBuf::from(s)
}

fn train(cfg: &mut RunConfig, a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    apply_data(cfg, a.data);
    cfg.checkpoint = a.out.or(cfg.checkpoint.take());
    cfg.report = a.report.or(cfg.report.take());
    cfg.pretrained = a.pretrained.or(cfg.pretrained.take());
    cfg.arch = a.arch.unwrap_or(cfg.arch);
    cfg.phase1_epochs = a.phase1_epochs.unwrap_or(cfg.phase1_epochs);
    cfg.phase2_epochs = a.phase2_epochs.unwrap_or(cfg.phase2_epochs);
    cfg.max_lr = a.max_lr.unwrap_or(cfg.max_lr);
    cfg.policy = a.policy.map_or(cfg.policy, Into::into);
    cfg.momentum = a.momentum.unwrap_or(cfg.momentum);
    cfg.weight_decay = a.weight_decay.unwrap_or(cfg.weight_decay);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    if a.no_augment {
        cfg.augment = false;
    }
    if cfg.report.is_none() {
        cfg.report = cfg.checkpoint.as_deref().map(default_report);
    }
    finalize(cfg, err)?;
    let ckpt_path = required(&cfg.checkpoint, "--out")?.to_path_buf();
    let manifest = SplitManifest::read(required(&cfg.split, "--split")?)?;
    let records = samples(cfg)?;
    let train_set = FileDataset::from_ids(&records, &manifest.train)?;
    let test_set = FileDataset::from_ids(&records, &manifest.test)?;
    let fit_cfg = cfg.fit_config();

    let mut progress = |r: &EpochRecord| {
        let train_loss = r.train_loss.map_or("-".to_string(), |l| format!("{l:.4}"));
        let _ = writeln!(
            err,
            "epoch {} phase {} train_loss {train_loss} test_loss {:.4} test_acc {:.3} ({:.1}s)",
            r.epoch, r.phase, r.test_loss, r.test_accuracy, r.seconds
        );
    };
    let num_classes = CLASS_NAMES.len();
    let (model, report) = match &cfg.pretrained {
        Some(path) => {
            let ckpt = Checkpoint::read(path)?;
            let mut model = ResNet::<f32>::new(infer_resnet_config(&ckpt)?, cfg.seed)?;
            checkpoint::load_state(&mut model, &ckpt)?;
            if model.num_classes() != num_classes {
                model.replace_head(num_classes)?;
            }
            let report = fine_tune(
                &mut model,
                &train_set,
                &test_set,
                cfg.phase1_epochs,
                cfg.phase2_epochs,
                &fit_cfg,
                &mut progress,
            )?;
            (model, report)
        }
        None => {
            let mut model = ResNet::<f32>::new(cfg.arch.config(num_classes), cfg.seed)?;
            let epochs = cfg.phase1_epochs + cfg.phase2_epochs;
            let report = fit(&mut model, &train_set, &test_set, epochs, &fit_cfg, &mut progress)?;
            (model, report)
        }
    };
    checkpoint::save(&model, &ckpt_path)?;
    let report_path = cfg.report.clone().unwrap_or_else(|| default_report(&ckpt_path));
    write_atomic(&report_path, report.to_csv().as_bytes())?;
    let _ = writeln!(out, "final test accuracy: {:.3}", report.final_accuracy());
    let _ = writeln!(out, "wrote {}", ckpt_path.display());
    let _ = writeln!(out, "wrote {}", report_path.display());
    Ok(())
}

/// Builds the network a checkpoint describes and loads its values.
pub(crate) fn load_model(path: &Path) -> crate::Result<ResNet<f32>> {
    let ckpt = Checkpoint::read(path)?;
    let mut model = ResNet::<f32>::new(infer_resnet_config(&ckpt)?, 0)?;
    checkpoint::load_state(&mut model, &ckpt)?;
    model.set_mode(Mode::Eval);
    Ok(model)
}

/// Scores CSV: `image_id,true_class,<class>...`, one probability column per class.
pub fn scores_to_csv(ids: &[String], labels: &[usize], scores: &[Vec<f64>], class_names: &[String]) -> String {
    let mut s = format!("image_id,true_class,{}\n", class_names.join(","));
    for ((id, &y), row) in ids.iter().zip(labels).zip(scores) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{id},{},{}", class_names[y], cells.join(","));
    }
    s
}

/// Parsed scores CSV: class names, ids, true labels and probability rows.
pub type ScoreTable = (Vec<String>, Vec<String>, Vec<usize>, Vec<Vec<f64>>);

pub fn parse_scores(path: &Path) -> crate::Result<ScoreTable> {
    let bad = |detail: String| Error::Format(format!("{}: {detail}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => bad(format!("{other:?}")),
    })?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() < 4 || &header[0] != "image_id" || &header[1] != "true_class" {
        return Err(bad("header must be image_id,true_class,<at least two class columns>".into()));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let (mut ids, mut labels, mut scores) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        if row.len() != header.len() {
            return Err(bad(format!("line {line}: expected {} fields, got {}", header.len(), row.len())));
        }
        let y = names
            .iter()
            .position(|n| n == &row[1])
            .ok_or_else(|| bad(format!("line {line}: unknown class `{}`", &row[1])))?;
        let vals = row
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("line {line}: {e}")))?;
        ids.push(row[0].to_string());
        labels.push(y);
        scores.push(vals);
    }
    if ids.is_empty() {
        return Err(bad("no score rows".into()));
    }
    Ok((names, ids, labels, scores))
}

fn write_metrics(dir: &Path, report: &MetricsReport, scores_csv: &str) -> crate::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("metrics.txt"), report.to_text().as_bytes())?;
    write_atomic(&dir.join("metrics.csv"), report.to_csv().as_bytes())?;
    write_atomic(&dir.join("scores.csv"), scores_csv.as_bytes())?;
    for (name, curve) in report.class_names.iter().zip(&report.curves) {
        if let Some(curve) = curve {
            write_atomic(&dir.join(format!("roc_{name}.csv")), curve.to_csv().as_bytes())?;
        }
    }
    Ok(())
}

fn evaluate_cmd(cfg: &mut RunConfig, a: EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    apply_data(cfg, a.data);
    cfg.checkpoint = a.checkpoint.or(cfg.checkpoint.take());
    cfg.out_dir = a.out_dir.or(cfg.out_dir.take());
    if a.scores.is_some() {
        cfg.checkpoint = None;
    }
    finalize(cfg, err)?;

    let (report, scores_csv) = match &a.scores {
        Some(path) => {
            let (names, ids, labels, scores) = parse_scores(path)?;
            let report = metrics::report(&scores, &labels, &names)?;
            (report, scores_to_csv(&ids, &labels, &scores, &names))
        }
        None => {
            let mut model = load_model(required(&cfg.checkpoint, "--checkpoint or --scores")?)?;
            let names = class_names();
            if model.num_classes() != names.len() {
                return Err(Error::Schema {
                    detail: format!("checkpoint has {} classes, expected {}", model.num_classes(), names.len()),
                    names: vec!["head.weight".into()],
                }
                .into());
            }
            let records = samples(cfg)?;
            // without a manifest, every labelled image is scored
            let data = match &cfg.split {
                Some(p) => FileDataset::from_ids(&records, &SplitManifest::read(p)?.test)?,
                None => FileDataset::new(records),
            };
            let result = evaluate(&mut model, &data, &cfg.batch_spec())?;
            let ids: Vec<String> = data.records().iter().map(|r| r.image_id.clone()).collect();
            let report = result.metrics(&names)?;
            let _ = writeln!(out, "loss: {:.4}", result.loss);
            (report, scores_to_csv(&ids, &result.labels, &result.scores, &names))
        }
    };
    let _ = write!(out, "{}", report.to_text());
    if let Some(dir) = &cfg.out_dir {
        write_metrics(dir, &report, &scores_csv)?;
        let _ = writeln!(out, "wrote metrics to {}", dir.display());
    }
    Ok(())
}

fn predict(cfg: &mut RunConfig, a: PredictArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    cfg.checkpoint = a.checkpoint.or(cfg.checkpoint.take());
    cfg.resolution = a.resolution.unwrap_or(cfg.resolution);
    if a.no_normalize {
        cfg.normalize = false;
    }
    finalize(cfg, err)?;
    let model = load_model(required(&cfg.checkpoint, "--checkpoint")?)?;
    let norm = cfg.normalization();
    let r = cfg.resolution;
    let names: Vec<String> = if model.num_classes() == CLASS_NAMES.len() {
        class_names()
    } else {
        (0..model.num_classes()).map(|k| format!("class{k}")).collect()
    };
    for path in &a.images {
        let img = normalize(&load_image(path, r)?, norm.mean, norm.std)?;
        let x = Tensor::from_vec(img.data().to_vec(), &[1, 3, r, r])?;
        let probs = model.predict_proba(&x)?;
        let row: Vec<f64> = probs.data().iter().map(|&v| v as f64).collect();
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{},{},{}", path.display(), names[metrics::argmax(&row)], cells.join(","));
    }
    Ok(())
}

fn import_weights(cfg: &mut RunConfig, a: ImportArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    cfg.arch = a.arch.unwrap_or(cfg.arch);
    cfg.head = a.head.map_or(cfg.head, Into::into);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.checkpoint = Some(a.out.clone());
    if a.relaxed {
        cfg.relaxed_import = true;
    }
    finalize(cfg, err)?;
    if a.num_classes < 2 {
        return Err(usage("--num-classes must be at least 2"));
    }
    let dump = Checkpoint::read(&a.dump)?;
    let mut model = ResNet::<f32>::new(cfg.arch.config(a.num_classes), cfg.seed)?;
    let map = match &a.map {
        Some(p) => NameMap::read(p)?,
        None => NameMap::identity(&model),
    }
    .with_head(cfg.head);
    let mode = if cfg.relaxed_import {
        ImportMode::Relaxed
    } else {
        ImportMode::Strict
    };
    let summary = import_pretrained(&dump, &mut model, &map, mode)?;
    checkpoint::save(&model, &a.out)?;
    let _ = write!(out, "{}", summary.to_text());
    let _ = writeln!(out, "wrote {}", a.out.display());
    Ok(())
}
