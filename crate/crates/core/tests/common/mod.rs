#![allow(dead_code)]

use std::time::Instant;

use leafnet::data::{stratified_split, AugmentSpec, BatchSpec, InMemoryDataset, Normalization, ShapesTask};
use leafnet::gradcheck::{self, relative_error, DEFAULT_STEP};
use leafnet::nn::functional as F;
use leafnet::nn::{
    AdaptiveAvgPool2d, BasicBlock, BatchNorm2d, Conv2d, Linear, MaxPool2d, Mode, Module, Relu, ResNet, ResNetConfig,
};
use leafnet::train::{fine_tune, fit, FitConfig, Policy};
use leafnet::{no_grad, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const GRAD_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d,
    BatchNormTrain,
    BatchNormEval,
    Relu,
    MaxPool,
    AdaptiveAvgPool,
    Linear,
    BasicBlock,
    CrossEntropy,
}

pub const LAYER_KINDS: [LayerKind; 9] = [
    LayerKind::Conv2d,
    LayerKind::BatchNormTrain,
    LayerKind::BatchNormEval,
    LayerKind::Relu,
    LayerKind::MaxPool,
    LayerKind::AdaptiveAvgPool,
    LayerKind::Linear,
    LayerKind::BasicBlock,
    LayerKind::CrossEntropy,
];

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| rng.gen_range(lo..hi)).collect(), shape).unwrap()
}

/// Values bounded away from zero, so ReLU kinks sit far outside the difference step.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let v = (0..n)
        .map(|_| rng.gen_range(0.1..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    Tensor::from_vec(v, shape).unwrap()
}

/// Distinct values on a 0.01 grid, so every pooling window has a unique maximum.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - n as f64 * 0.005).collect();
    v.shuffle(rng);
    Tensor::from_vec(v, shape).unwrap()
}

fn randomize_params(m: &mut dyn Module<f64>, rng: &mut ChaCha8Rng) {
    for (_, p) in m.named_parameters_mut() {
        let n = p.data().len();
        p.set_data((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    }
}

/// Worst relative error over the input and every parameter of `m`.
pub fn module_check(m: &mut dyn Module<f64>, x: &Tensor<f64>, seed: u64) -> f64 {
    let leaf = x.detach().requires_grad(true);
    m.zero_grad();
    let out = m.forward(&leaf).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = (0..out.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    out.mul(&Tensor::from_vec(dir.clone(), out.shape()).unwrap())
        .unwrap()
        .sum(None, false)
        .unwrap()
        .backward()
        .unwrap();
    let project = |m: &dyn Module<f64>, x: &Tensor<f64>| -> f64 {
        let y = no_grad(|| m.forward(x)).unwrap();
        y.data().iter().zip(&dir).map(|(a, b)| a * b).sum()
    };
    let h = DEFAULT_STEP;
    let mut worst = 0.0f64;

    let gx = leaf.grad_vec().unwrap_or_else(|| vec![0.0; leaf.numel()]);
    for j in 0..leaf.numel() {
        let mut v = leaf.to_vec();
        v[j] += h;
        let fp = project(m, &Tensor::from_vec(v.clone(), leaf.shape()).unwrap());
        v[j] -= 2.0 * h;
        let fm = project(m, &Tensor::from_vec(v, leaf.shape()).unwrap());
        worst = worst.max(relative_error(gx[j], (fp - fm) / (2.0 * h)));
    }

    let grads: Vec<Vec<f64>> = m
        .named_parameters()
        .iter()
        .map(|(_, p)| p.grad().unwrap_or_else(|| vec![0.0; p.data().len()]))
        .collect();
    for (pi, g) in grads.iter().enumerate() {
        let base = m.named_parameters()[pi].1.data().to_vec();
        for j in 0..base.len() {
            let mut v = base.clone();
            v[j] += h;
            m.named_parameters_mut()[pi].1.set_data(v.clone()).unwrap();
            let fp = project(m, &leaf.detach());
            v[j] -= 2.0 * h;
            m.named_parameters_mut()[pi].1.set_data(v).unwrap();
            let fm = project(m, &leaf.detach());
            worst = worst.max(relative_error(g[j], (fp - fm) / (2.0 * h)));
        }
        m.named_parameters_mut()[pi].1.set_data(base).unwrap();
    }
    worst
}

/// One randomized gradient check; returns the worst relative error.
pub fn grad_trial(kind: LayerKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let n = rng.gen_range(1..=2);
    let c = rng.gen_range(1..=3);
    match kind {
        LayerKind::Conv2d => {
            let k = rng.gen_range(1..=3);
            let (stride, pad) = (rng.gen_range(1..=2), rng.gen_range(0..=1));
            let (h, w) = (rng.gen_range(k..k + 4), rng.gen_range(k..k + 4));
            let mut m = Conv2d::<f64>::new(c, rng.gen_range(1..=3), k, stride, pad, rng.gen_bool(0.5), &mut rng);
            let x = uniform(&mut rng, &[n, c, h, w], -1.0, 1.0);
            module_check(&mut m, &x, seed)
        }
        LayerKind::BatchNormTrain | LayerKind::BatchNormEval => {
            let n = rng.gen_range(2..=3);
            let (h, w) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
            let mut m = BatchNorm2d::<f64>::new(c);
            randomize_params(&mut m, &mut rng);
            if kind == LayerKind::BatchNormEval {
                m.running_mean.set((0..c).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
                m.running_var.set((0..c).map(|_| rng.gen_range(0.5..1.5)).collect()).unwrap();
                m.set_mode(Mode::Eval);
            }
            let x = uniform(&mut rng, &[n, c, h, w], -1.0, 1.0);
            module_check(&mut m, &x, seed)
        }
        LayerKind::Relu => {
            let (h, w) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
            let x = away_from_zero(&mut rng, &[n, c, h, w]);
            module_check(&mut Relu, &x, seed)
        }
        LayerKind::MaxPool => {
            let kernel = rng.gen_range(2..=3);
            let stride = rng.gen_range(1..=2);
            let padding = rng.gen_range(0..=kernel / 2);
            let (h, w) = (rng.gen_range(kernel..kernel + 4), rng.gen_range(kernel..kernel + 4));
            let mut m = MaxPool2d { kernel, stride, padding };
            let x = distinct(&mut rng, &[n, c, h, w]);
            module_check(&mut m, &x, seed)
        }
        LayerKind::AdaptiveAvgPool => {
            let (h, w) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
            let x = uniform(&mut rng, &[n, c, h, w], -1.0, 1.0);
            module_check(&mut AdaptiveAvgPool2d, &x, seed)
        }
        LayerKind::Linear => {
            let (fin, fout) = (rng.gen_range(1..=6), rng.gen_range(1..=5));
            let mut m = Linear::<f64>::new(fin, fout, &mut rng);
            let rows = rng.gen_range(1..=4);
            let x = uniform(&mut rng, &[rows, fin], -1.0, 1.0);
            module_check(&mut m, &x, seed)
        }
        LayerKind::BasicBlock => {
            let n = 2;
            let out_ch = rng.gen_range(1..=3);
            let stride = rng.gen_range(1..=2);
            let (h, w) = (rng.gen_range(2..=4), rng.gen_range(2..=4));
            let mut m = BasicBlock::<f64>::new(c, out_ch, stride, &mut rng);
            // half the trials run with batch statistics, half with fixed running statistics
            if rng.gen_bool(0.5) {
                for (name, b) in m.named_buffers() {
                    let len = b.to_vec().len();
                    let (lo, hi) = if name.ends_with("running_var") { (0.5, 1.5) } else { (-0.5, 0.5) };
                    b.set((0..len).map(|_| rng.gen_range(lo..hi)).collect()).unwrap();
                }
                m.set_mode(Mode::Eval);
                randomize_params(&mut m, &mut rng);
            }
            let x = uniform(&mut rng, &[n, c, h, w], -1.0, 1.0);
            module_check(&mut m, &x, seed)
        }
        LayerKind::CrossEntropy => {
            let (rows, classes) = (rng.gen_range(1..=4), rng.gen_range(2..=5));
            let labels: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..classes)).collect();
            let x = uniform(&mut rng, &[rows, classes], -3.0, 3.0);
            gradcheck::check(|v| F::cross_entropy(&v[0], &labels), &[x], DEFAULT_STEP, seed)
                .unwrap()
                .worst()
        }
    }
}

/// Runs `trials` checks of `kind`; returns the worst error and the failing seeds.
pub fn grad_suite(kind: LayerKind, trials: usize) -> (f64, Vec<u64>) {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for seed in 0..trials as u64 {
        let e = grad_trial(kind, seed);
        if !(e < GRAD_TOLERANCE) {
            failures.push(seed);
        }
        worst = worst.max(e);
    }
    (worst, failures)
}

pub fn color_batch_spec(batch_size: usize, augment: AugmentSpec) -> BatchSpec {
    BatchSpec {
        batch_size,
        shuffle: true,
        augment,
        normalization: Normalization::IDENTITY,
        resolution: 32,
    }
}

pub struct ToyOutcome {
    pub accuracy: f64,
    pub epochs: usize,
    pub images: usize,
    pub seconds: f64,
}

pub struct ToySetup {
    pub train: InMemoryDataset,
    pub test: InMemoryDataset,
    pub model: ResNet<f32>,
    pub cfg: FitConfig,
    pub images: usize,
}

/// 300 primary-color images at 32x32, 80/20 stratified split, compact model,
/// batch 16, flips only, one-cycle to 0.05.
pub fn toy_setup(seed: u64) -> ToySetup {
    let task = ShapesTask::primaries();
    let all = task.generate(100, 32, seed);
    let split = stratified_split(&ShapesTask::records(&all), &task.class_name_refs(), 0.2, seed).unwrap();
    let (train, test) = (all.select(&split.train).unwrap(), all.select(&split.test).unwrap());
    let model = ResNet::<f32>::new(ResNetConfig::compact(task.num_classes()), seed).unwrap();
    let cfg = FitConfig {
        batch: color_batch_spec(
            16,
            AugmentSpec {
                rotation_deg: 0.0,
                brightness_delta: 0.0,
                ..AugmentSpec::default()
            },
        ),
        max_lr: 0.05,
        policy: Policy::OneCycle,
        seed,
        ..FitConfig::default()
    };
    ToySetup { train, test, model, cfg, images: all.ids().len() }
}

pub const TOY_EPOCHS: usize = 20;

pub fn toy_training(seed: u64) -> ToyOutcome {
    let start = Instant::now();
    let mut s = toy_setup(seed);
    let report = fit(&mut s.model, &s.train, &s.test, TOY_EPOCHS, &s.cfg, &mut |_| {}).unwrap();
    ToyOutcome {
        accuracy: report.final_accuracy(),
        epochs: TOY_EPOCHS,
        images: s.images,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn transfer_config(seed: u64, batch_size: usize) -> FitConfig {
    FitConfig {
        batch: color_batch_spec(batch_size, AugmentSpec::NONE),
        max_lr: 0.05,
        seed,
        ..FitConfig::default()
    }
}

pub struct TransferOutcome {
    pub pretrain_accuracy: f64,
    pub tuned_accuracy: f64,
    pub scratch_accuracy: f64,
    /// Every backbone parameter was bit-identical before and after phase 1.
    pub backbone_frozen: bool,
    /// The head did move during phase 1.
    pub head_moved: bool,
}

/// Bit patterns of every backbone parameter (running statistics are buffers
/// and keep updating in train-mode forwards).
pub fn backbone_bits(m: &ResNet<f32>) -> Vec<(String, Vec<u32>)> {
    m.named_parameters()
        .into_iter()
        .filter(|(n, _)| !ResNet::<f32>::is_head_name(n))
        .map(|(n, p)| (n, p.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

/// Pretrain on primaries, then fine-tune on pastels (1 + 4 epochs) against a
/// 5-epoch from-scratch baseline with the same seed.
pub fn transfer_replicate(seed: u64) -> TransferOutcome {
    let a = ShapesTask::primaries();
    let (a_train, a_test) = (a.generate(80, 32, seed), a.generate(20, 32, 500 + seed));
    let mut model = ResNet::<f32>::new(ResNetConfig::compact(3), seed).unwrap();
    let pre = fit(&mut model, &a_train, &a_test, 6, &transfer_config(seed, 16), &mut |_| {}).unwrap();

    let b = ShapesTask::pastels();
    let (b_train, b_test) = (b.generate(12, 32, 1000 + seed), b.generate(40, 32, 2000 + seed));
    model.replace_head(3).unwrap();
    let cfg = transfer_config(seed, 4);

    // phase 1 alone, to inspect the frozen backbone
    let backbone_before = backbone_bits(&model);
    let head_before = model.head.weight.data().to_vec();
    let mut probe = ResNet::<f32>::new(ResNetConfig::compact(3), seed).unwrap();
    leafnet::checkpoint::load_state(&mut probe, &leafnet::checkpoint::state_dict(&model)).unwrap();
    fine_tune(&mut probe, &b_train, &b_test, 1, 0, &cfg, &mut |_| {}).unwrap();
    let backbone_frozen = backbone_bits(&probe) == backbone_before;
    let head_moved = probe.head.weight.data() != head_before.as_slice();

    let tuned = fine_tune(&mut model, &b_train, &b_test, 1, 4, &cfg, &mut |_| {}).unwrap();
    let mut scratch = ResNet::<f32>::new(ResNetConfig::compact(3), seed).unwrap();
    let base = fit(&mut scratch, &b_train, &b_test, 5, &cfg, &mut |_| {}).unwrap();
    TransferOutcome {
        pretrain_accuracy: pre.final_accuracy(),
        tuned_accuracy: tuned.final_accuracy(),
        scratch_accuracy: base.final_accuracy(),
        backbone_frozen,
        head_moved,
    }
}

/// Tie-aware pairwise AUC: P(s+ > s-) + 0.5 P(s+ = s-), as an exact ratio.
pub fn mann_whitney(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins2, mut pairs) = (0u64, 0u64);
    for (i, &p) in positive.iter().enumerate() {
        if !p {
            continue;
        }
        for (j, &q) in positive.iter().enumerate() {
            if q {
                continue;
            }
            pairs += 1;
            wins2 += if scores[i] > scores[j] {
                2
            } else if scores[i] == scores[j] {
                1
            } else {
                0
            };
        }
    }
    wins2 as f64 / (2 * pairs) as f64
}

/// Parameter count for `num_classes` from the shape-walk golden file.
pub fn golden_param_count(num_classes: usize) -> usize {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/resnet34_param_count.txt")).unwrap();
    let key = format!("num_classes={num_classes} ");
    let line = text.lines().find(|l| l.contains(&key)).expect("class count missing from golden file");
    line.rsplit("parameters=").next().unwrap().trim().parse().unwrap()
}

pub struct ArchOutcome {
    pub stage_blocks: Vec<usize>,
    pub parameters: usize,
    pub logits_shape: Vec<usize>,
    /// `(height, width)` after each stage.
    pub stage_extents: Vec<(usize, usize)>,
}

/// Builds the 34-layer network and runs an eval-mode forward pass on `n` images.
pub fn resnet34_probe(num_classes: usize, n: usize) -> ArchOutcome {
    let mut model = leafnet::nn::build_resnet34::<f32>(num_classes, 0).unwrap();
    model.set_mode(Mode::Eval);
    let len = n * 3 * 224 * 224;
    let x = Tensor::from_vec((0..len).map(|i| ((i % 251) as f32 / 251.0) - 0.5).collect(), &[n, 3, 224, 224]).unwrap();
    let (logits, stages) = no_grad(|| model.forward_stages(&x)).unwrap();
    ArchOutcome {
        stage_blocks: model.stages.iter().map(Vec::len).collect(),
        parameters: model.parameter_count(),
        logits_shape: logits.shape().to_vec(),
        stage_extents: stages.iter().map(|t| (t.shape()[2], t.shape()[3])).collect(),
    }
}

/// Label records with `sizes[c]` members of class `c`, ids `c{c}_{i}`.
pub fn class_records(sizes: &[usize]) -> Vec<leafnet::data::LabelRecord> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| {
            (0..n).map(move |i| leafnet::data::LabelRecord {
                image_id: format!("c{c}_{i:04}"),
                class_id: leafnet::data::ClassId(c),
            })
        })
        .collect()
}

pub const SPLIT_CLASS_NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

pub struct SplitOutcome {
    /// max over classes of | |test_c| - fraction * |c| |.
    pub worst_deviation: f64,
    pub byte_identical: bool,
    pub disjoint_and_complete: bool,
}

pub fn split_fixture(sizes: &[usize], seed: u64) -> SplitOutcome {
    let records = class_records(sizes);
    let names = &SPLIT_CLASS_NAMES[..sizes.len()];
    let a = stratified_split(&records, names, 0.2, seed).unwrap();
    let b = stratified_split(&records, names, 0.2, seed).unwrap();
    let worst_deviation = a
        .counts
        .iter()
        .zip(sizes)
        .map(|(c, &n)| (c.test as f64 - 0.2 * n as f64).abs())
        .fold(0.0, f64::max);
    let mut seen: Vec<&String> = a.train.iter().chain(&a.test).collect();
    seen.sort();
    let total = seen.len();
    seen.dedup();
    SplitOutcome {
        worst_deviation,
        byte_identical: a.to_text() == b.to_text(),
        disjoint_and_complete: seen.len() == total && total == records.len(),
    }
}

/// Random score/label instance with at least one positive and one negative.
/// Half the instances draw scores from a coarse grid so ties are common.
pub fn auc_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.gen_range(2..=200);
    let grid = rng.gen_bool(0.5).then(|| rng.gen_range(1..20) as f64);
    let scores = (0..n)
        .map(|_| match grid {
            Some(g) => (rng.gen_range(0.0..=g)).round() / g,
            None => rng.gen::<f64>(),
        })
        .collect();
    let prevalence = rng.gen_range(0.05..0.95);
    let mut positive: Vec<bool> = (0..n).map(|_| rng.gen_bool(prevalence)).collect();
    positive[0] = true;
    positive[1] = false;
    positive.shuffle(rng);
    (scores, positive)
}

/// Largest |trapezoid - pairwise| over `instances` random instances.
pub fn auc_oracle_suite(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (s, y) = auc_instance(&mut rng);
        let got = leafnet::metrics::auc(&leafnet::metrics::roc_curve(&s, &y, 0).unwrap());
        worst = worst.max((got - mann_whitney(&s, &y)).abs());
    }
    worst
}

pub fn manifest_path(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

/// Field-by-field comparison of the report on the 12-sample fixture against
/// the committed golden values; returns the mismatches.
pub fn metrics_golden_mismatches() -> Vec<String> {
    let (names, _, labels, scores) = leafnet::cli::parse_scores(&manifest_path("tests/fixtures/metrics_12.csv")).unwrap();
    let r = leafnet::metrics::report(&scores, &labels, &names).unwrap();
    let golden = std::fs::read_to_string(manifest_path("tests/golden/metrics_12.csv")).unwrap();
    let mut bad = Vec::new();
    let mut seen = 0;
    for line in golden.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let (metric, class, value) = (cells[0], cells[1], cells[2]);
        let got = match metric {
            "accuracy" => r.accuracy,
            "macro_auc" => r.macro_auc.unwrap_or(f64::NAN),
            "auc" => {
                let k = names.iter().position(|n| n == class).unwrap();
                r.per_class_auc[k].unwrap_or(f64::NAN)
            }
            "confusion" => {
                let (t, p) = class.split_once("->").unwrap();
                let ti = names.iter().position(|n| n == t).unwrap();
                let pi = names.iter().position(|n| n == p).unwrap();
                r.confusion.counts[ti][pi] as f64
            }
            other => panic!("unknown golden metric {other}"),
        };
        let want: f64 = value.parse().unwrap();
        if got != want {
            bad.push(format!("{metric} {class}: got {got}, golden {want}"));
        }
        seen += 1;
    }
    let expected = 2 + names.len() + names.len() * names.len();
    if seen != expected {
        bad.push(format!("golden has {seen} fields, expected {expected}"));
    }
    bad
}

/// Compact model after a few optimizer steps, so weights and running
/// statistics are no longer at their initial values.
pub fn trained_compact(seed: u64) -> ResNet<f32> {
    let mut model = ResNet::<f32>::new(ResNetConfig::compact(4), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = leafnet::train::Sgd::<f32>::new(0.9, 1e-2);
    for _ in 0..3 {
        let x: Vec<f32> = (0..4 * 3 * 16 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::from_vec(x, &[4, 3, 16, 16]).unwrap();
        model.zero_grad();
        F::cross_entropy(&model.forward(&x).unwrap(), &[0, 1, 2, 3]).unwrap().backward().unwrap();
        opt.step(&mut model, |_| 0.05).unwrap();
    }
    model
}

pub fn output_bits(m: &mut ResNet<f32>, x: &Tensor<f32>, mode: Mode) -> Vec<u32> {
    m.set_mode(mode);
    no_grad(|| m.forward(x)).unwrap().data().iter().map(|v| v.to_bits()).collect()
}

pub struct CheckpointOutcome {
    /// Eval- and train-mode outputs of the reloaded model equal the source's bit for bit.
    pub outputs_identical: bool,
    /// Every truncated or bit-flipped copy was refused with a corruption error.
    pub corruptions_rejected: bool,
    pub corruptions_tried: usize,
    /// The target model's state was unchanged after each refused load.
    pub untouched: bool,
    /// `leafnet evaluate` on a corrupted checkpoint exited 2 and reported the corruption.
    pub cli_reports_corruption: bool,
}

pub fn checkpoint_roundtrip(seed: u64) -> CheckpointOutcome {
    use leafnet::checkpoint::{load, save, state_dict};
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.leafckpt");
    let mut source = trained_compact(seed);
    save(&source, &path).unwrap();

    let mut target = ResNet::<f32>::new(ResNetConfig::compact(4), seed + 1).unwrap();
    let fresh_state = state_dict(&target).to_bytes();
    let bytes = std::fs::read(&path).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut rejected, mut untouched, mut tried) = (true, true, 0);
    let bad = dir.path().join("bad.leafckpt");
    for i in 0..40 {
        let mut copy = bytes.clone();
        if i % 2 == 0 {
            copy.truncate(rng.gen_range(0..bytes.len()));
        } else {
            let at = rng.gen_range(0..bytes.len());
            copy[at] ^= 1 << rng.gen_range(0..8);
        }
        std::fs::write(&bad, &copy).unwrap();
        tried += 1;
        rejected &= matches!(load(&mut target, &bad), Err(leafnet::Error::Corruption(_)));
        untouched &= state_dict(&target).to_bytes() == fresh_state;
    }

    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = leafnet::cli::run(
        ["leafnet", "predict", "--checkpoint", bad.to_str().unwrap(), "--resolution", "16",
         manifest_path("tests/fixtures/solid_red.png").to_str().unwrap()],
        &mut out,
        &mut err,
    );
    let cli_reports_corruption = code == 2 && String::from_utf8_lossy(&err).contains("checkpoint corrupted");

    load(&mut target, &path).unwrap();
    let x: Vec<f32> = (0..3 * 3 * 16 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = Tensor::from_vec(x, &[3, 3, 16, 16]).unwrap();
    let outputs_identical = output_bits(&mut source, &x, Mode::Eval) == output_bits(&mut target, &x, Mode::Eval)
        && output_bits(&mut source, &x, Mode::Train) == output_bits(&mut target, &x, Mode::Train);
    CheckpointOutcome {
        outputs_identical,
        corruptions_rejected: rejected,
        corruptions_tried: tried,
        untouched,
        cli_reports_corruption,
    }
}
