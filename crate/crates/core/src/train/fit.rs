use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{Sgd, DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY};
use super::schedule::{schedule_lr, Policy, ScheduleSpec};
use crate::data::{for_each_batch, BatchSpec, Dataset, EpochPlan};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::nn::functional as F;
use crate::nn::{Mode, Module, ResNet};
use crate::tensor::no_grad;

/// Hyperparameters shared by [`fit`] and [`fine_tune`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub batch: BatchSpec,
    pub max_lr: f64,
    pub policy: Policy,
    pub warmup_fraction: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Backbone learning rate as a fraction of the head's, after unfreezing.
    pub backbone_lr_ratio: f64,
    /// Drives shuffling and augmentation.
    pub seed: u64,
    /// Batches prepared ahead of the optimizer on a worker thread; 0 disables it.
    pub lookahead: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            batch: BatchSpec::default(),
            max_lr: 1e-2,
            policy: Policy::OneCycle,
            warmup_fraction: 0.25,
            momentum: DEFAULT_MOMENTUM,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            backbone_lr_ratio: 0.1,
            seed: 0,
            lookahead: 2,
        }
    }
}

impl FitConfig {
    fn schedule(&self, total_steps: usize) -> ScheduleSpec {
        match self.policy {
            Policy::Constant => ScheduleSpec::constant(self.max_lr, total_steps),
            Policy::OneCycle => ScheduleSpec {
                warmup_fraction: self.warmup_fraction,
                ..ScheduleSpec::one_cycle(self.max_lr, total_steps)
            },
        }
    }
}

/// Outcome of running a model over a labelled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean cross-entropy per sample.
    pub loss: f64,
    pub accuracy: f64,
    /// Softmax probabilities, one row per sample in dataset order.
    pub scores: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl EvalResult {
    pub fn predictions(&self) -> Vec<usize> {
        self.scores.iter().map(|r| metrics::argmax(r)).collect()
    }

    pub fn metrics(&self, class_names: &[String]) -> Result<MetricsReport> {
        metrics::report(&self.scores, &self.labels, class_names)
    }
}

/// Scores `data` in eval mode without recording gradients.
///
/// The model is left in eval mode; parameters and running statistics are
/// not modified.
pub fn evaluate<M: Module<f32> + ?Sized>(model: &mut M, data: &dyn Dataset, spec: &BatchSpec) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty dataset"));
    }
    model.set_mode(Mode::Eval);
    let spec = spec.for_eval();
    let plan = EpochPlan::new(data.len(), &spec, false, &mut ChaCha8Rng::seed_from_u64(0))?;
    let model = &*model;
    let (mut loss_sum, mut correct) = (0.0f64, 0usize);
    let mut scores = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for_each_batch(&plan, data, &spec, 0, |_, batch| {
        no_grad(|| -> Result<()> {
            let logits = model.forward(&batch.images)?;
            let n = batch.labels.len();
            let c = logits.shape()[1];
            loss_sum += F::cross_entropy(&logits, &batch.labels)?.item()? as f64 * n as f64;
            let probs = F::softmax(&logits)?;
            for (row, &y) in probs.data().chunks_exact(c).zip(&batch.labels) {
                let row: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                if metrics::argmax(&row) == y {
                    correct += 1;
                }
                scores.push(row);
                labels.push(y);
            }
            Ok(())
        })
    })?;
    let n = labels.len() as f64;
    Ok(EvalResult {
        loss: loss_sum / n,
        accuracy: correct as f64 / n,
        scores,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the evaluation before any training.
    pub epoch: usize,
    /// 0 before training, then 1 (head only) or 2 (whole network).
    pub phase: u8,
    pub train_loss: Option<f64>,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epochs: Vec<EpochRecord>,
    /// Mini-batch training loss at every optimizer step.
    pub step_losses: Vec<f64>,
    pub final_eval: EvalResult,
}

impl FitReport {
    /// `epoch,train_loss,test_loss,test_accuracy`; timings are left out so the
    /// file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,test_loss,test_accuracy\n");
        for e in &self.epochs {
            let train = e.train_loss.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(s, "{},{train},{},{}", e.epoch, e.test_loss, e.test_accuracy);
        }
        s
    }

    pub fn final_accuracy(&self) -> f64 {
        self.final_eval.accuracy
    }
}

struct Run<'a> {
    train: &'a dyn Dataset,
    test: &'a dyn Dataset,
    cfg: &'a FitConfig,
    rng: ChaCha8Rng,
    epochs: Vec<EpochRecord>,
    step_losses: Vec<f64>,
    last_eval: Option<EvalResult>,
}

impl<'a> Run<'a> {
    fn new(train: &'a dyn Dataset, test: &'a dyn Dataset, cfg: &'a FitConfig) -> Result<Self> {
        cfg.batch.validate()?;
        if train.is_empty() {
            return Err(Error::contract("training set is empty"));
        }
        Ok(Run {
            train,
            test,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            epochs: Vec::new(),
            step_losses: Vec::new(),
            last_eval: None,
        })
    }

    fn steps_per_epoch(&self) -> usize {
        self.train.len().div_ceil(self.cfg.batch.batch_size)
    }

    fn record<M: Module<f32> + ?Sized>(
        &mut self,
        model: &mut M,
        phase: u8,
        train_loss: Option<f64>,
        started: Instant,
        progress: &mut dyn FnMut(&EpochRecord),
    ) -> Result<()> {
        let eval = evaluate(model, self.test, &self.cfg.batch)?;
        let rec = EpochRecord {
            epoch: self.epochs.len(),
            phase,
            train_loss,
            test_loss: eval.loss,
            test_accuracy: eval.accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        progress(&rec);
        self.epochs.push(rec);
        self.last_eval = Some(eval);
        Ok(())
    }

    /// Runs `epochs` epochs with one optimizer and one schedule.
    fn phase<M: Module<f32> + ?Sized>(
        &mut self,
        model: &mut M,
        phase: u8,
        epochs: usize,
        lr_scale: &dyn Fn(&str) -> f64,
        progress: &mut dyn FnMut(&EpochRecord),
    ) -> Result<()> {
        if epochs == 0 {
            return Ok(());
        }
        let spe = self.steps_per_epoch();
        let schedule = self.cfg.schedule(epochs * spe);
        let mut opt = Sgd::<f32>::new(self.cfg.momentum, self.cfg.weight_decay);
        let mut step = 0usize;
        for _ in 0..epochs {
            let started = Instant::now();
            let epoch = self.epochs.len();
            model.set_mode(Mode::Train);
            let plan = EpochPlan::new(self.train.len(), &self.cfg.batch, true, &mut self.rng)?;
            let (mut loss_sum, mut seen) = (0.0f64, 0usize);
            let step_losses = &mut self.step_losses;
            for_each_batch(&plan, self.train, &self.cfg.batch, self.cfg.lookahead, |_, batch| {
                let diverged = |detail: String| Error::Divergence {
                    epoch,
                    step: step + 1,
                    detail,
                };
                let logits = model.forward(&batch.images).map_err(|e| nonfinite_to(e, &diverged))?;
                let loss = F::cross_entropy(&logits, &batch.labels).map_err(|e| nonfinite_to(e, &diverged))?;
                let value = loss.item()? as f64;
                if !value.is_finite() {
                    return Err(diverged(format!("loss is {value}")));
                }
                loss.backward().map_err(|e| nonfinite_to(e, &diverged))?;
                let lr = schedule_lr(&schedule, step)?;
                opt.step(model, |name| lr * lr_scale(name))?;
                model.zero_grad();
                step += 1;
                step_losses.push(value);
                loss_sum += value * batch.labels.len() as f64;
                seen += batch.labels.len();
                Ok(())
            })?;
            self.record(model, phase, Some(loss_sum / seen as f64), started, progress)?;
        }
        Ok(())
    }

    fn finish(self) -> FitReport {
        FitReport {
            epochs: self.epochs,
            step_losses: self.step_losses,
            final_eval: self.last_eval.expect("initial evaluation always runs"),
        }
    }
}

fn nonfinite_to(e: Error, diverged: &dyn Fn(String) -> Error) -> Error {
    match e {
        Error::NonFinite { op } => diverged(format!("non-finite value in {op}")),
        other => other,
    }
}

/// Trains every trainable parameter at a single learning rate for `epochs`.
///
/// The test set is evaluated before training and after every epoch.
pub fn fit<M: Module<f32> + ?Sized>(
    model: &mut M,
    train: &dyn Dataset,
    test: &dyn Dataset,
    epochs: usize,
    cfg: &FitConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<FitReport> {
    let mut run = Run::new(train, test, cfg)?;
    run.record(model, 0, None, Instant::now(), progress)?;
    run.phase(model, 1, epochs, &|_| 1.0, progress)?;
    Ok(run.finish())
}

/// Two-phase transfer learning.
///
/// Phase 1 trains only the head with the backbone frozen. Phase 2 unfreezes
/// everything and trains the backbone at `backbone_lr_ratio` times the head
/// rate. Each phase runs its own schedule. The model ends unfrozen.
pub fn fine_tune(
    model: &mut ResNet<f32>,
    train: &dyn Dataset,
    test: &dyn Dataset,
    phase1_epochs: usize,
    phase2_epochs: usize,
    cfg: &FitConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<FitReport> {
    let mut run = Run::new(train, test, cfg)?;
    run.record(model, 0, None, Instant::now(), progress)?;
    if phase1_epochs > 0 {
        model.freeze_backbone();
        let r = run.phase(model, 1, phase1_epochs, &|_| 1.0, progress);
        model.unfreeze();
        r?;
    }
    let ratio = cfg.backbone_lr_ratio;
    let scale = move |name: &str| if ResNet::<f32>::is_head_name(name) { 1.0 } else { ratio };
    run.phase(model, 2, phase2_epochs, &scale, progress)?;
    Ok(run.finish())
}
