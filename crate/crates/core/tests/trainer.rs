mod common;

use common::{backbone_bits, toy_setup};
use leafnet::checkpoint::state_dict;
use leafnet::data::ShapesTask;
use leafnet::nn::functional as F;
use leafnet::nn::{Mode, Module, ResNet, ResNetConfig};
use leafnet::train::{evaluate, fit, schedule_lr, Policy, ScheduleSpec, Sgd};
use leafnet::Tensor;
use proptest::prelude::*;

fn state_bytes(m: &ResNet<f32>) -> Vec<u8> {
    state_dict(m).to_bytes()
}

#[test]
fn zero_learning_rate_step_changes_nothing() {
    let mut model = ResNet::<f32>::new(ResNetConfig::compact(4), 11).unwrap();
    let x = Tensor::from_vec((0..4 * 3 * 16 * 16).map(|i| (i as f32 * 0.071).cos()).collect(), &[4, 3, 16, 16]).unwrap();
    let mut opt = Sgd::<f32>::new(0.9, 1e-2);
    let before = state_bytes(&model);
    let params = |m: &ResNet<f32>| -> Vec<Vec<u32>> {
        m.named_parameters().into_iter().map(|(_, p)| p.data().iter().map(|v| v.to_bits()).collect()).collect()
    };
    let p0 = params(&model);
    // two steps, so the second one sees a nonzero velocity
    for _ in 0..2 {
        model.zero_grad();
        let loss = F::cross_entropy(&model.forward(&x).unwrap(), &[0, 1, 2, 3]).unwrap();
        loss.backward().unwrap();
        opt.step(&mut model, |_| 0.0).unwrap();
    }
    assert_eq!(params(&model), p0);
    assert!(opt.velocity("head.weight").unwrap().iter().any(|v| *v != 0.0));
    // train-mode forwards do move the running statistics
    assert_ne!(state_bytes(&model), before);
}

#[test]
fn frozen_parameters_stay_bit_identical_across_epochs() {
    let mut s = toy_setup(3);
    s.model.freeze_backbone();
    let backbone = backbone_bits(&s.model);
    let head = s.model.head.weight.data().to_vec();
    let report = fit(&mut s.model, &s.train, &s.test, 3, &s.cfg, &mut |_| {}).unwrap();
    assert_eq!(report.epochs.len(), 4);
    assert_eq!(backbone_bits(&s.model), backbone);
    assert_ne!(s.model.head.weight.data(), head.as_slice());
}

#[test]
fn smoothed_loss_falls_over_the_first_fifty_steps() {
    let mut s = toy_setup(7);
    // 240 training images at batch 16: 15 steps per epoch
    let report = fit(&mut s.model, &s.train, &s.test, 4, &s.cfg, &mut |_| {}).unwrap();
    assert!(report.step_losses.len() >= 50);
    let means: Vec<f64> = report.step_losses[..50].chunks(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    for (i, pair) in means.windows(2).enumerate() {
        assert!(pair[1] < pair[0], "block {} mean {} not below {}: {means:?}", i + 1, pair[1], pair[0]);
    }
}

#[test]
fn evaluate_is_deterministic_and_leaves_the_model_alone() {
    let task = ShapesTask::primaries();
    let data = task.generate(6, 24, 5);
    let mut model = ResNet::<f32>::new(ResNetConfig::compact(3), 5).unwrap();
    let spec = common::color_batch_spec(4, leafnet::data::AugmentSpec::NONE);
    model.set_mode(Mode::Train);
    let before = state_bytes(&model);
    let a = evaluate(&mut model, &data, &spec).unwrap();
    let b = evaluate(&mut model, &data, &spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(state_bytes(&model), before);
    assert_eq!(model.mode(), Mode::Eval);
    assert_eq!(a.scores.len(), 18);
    assert!(model.named_parameters().iter().all(|(_, p)| p.grad().is_none()));
}

proptest! {
    #[test]
    fn one_cycle_is_positive_with_a_single_peak(total in 1usize..3000, max_lr in 1e-5f64..10.0,
                                                warmup in 0.0f64..=1.0) {
        let spec = ScheduleSpec { warmup_fraction: warmup, ..ScheduleSpec::one_cycle(max_lr, total) };
        let lrs: Vec<f64> = (0..=total).map(|s| schedule_lr(&spec, s).unwrap()).collect();
        prop_assert!(lrs.iter().all(|&lr| lr > 0.0 && lr <= max_lr * (1.0 + 1e-12)));
        let peak = lrs.iter().enumerate().fold(0, |best, (i, &v)| if v > lrs[best] { i } else { best });
        for w in lrs[..=peak].windows(2) {
            prop_assert!(w[1] > w[0], "not rising before the peak at {peak}: {lrs:?}");
        }
        for w in lrs[peak..].windows(2) {
            prop_assert!(w[1] < w[0], "not falling after the peak at {peak}: {lrs:?}");
        }
    }

    #[test]
    fn constant_policy_never_moves(total in 1usize..500, lr in 1e-5f64..10.0) {
        let spec = ScheduleSpec::constant(lr, total);
        prop_assert_eq!(spec.policy, Policy::Constant);
        for s in 0..=total {
            prop_assert_eq!(schedule_lr(&spec, s).unwrap(), lr);
        }
    }
}
