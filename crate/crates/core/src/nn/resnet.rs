//! Residual networks built from two-convolution basic blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::functional as F;
use super::layers::{
    join, AdaptiveAvgPool2d, BatchNorm2d, Buffer, Conv2d, Linear, MaxPool2d, Mode, Module, Param,
    Sequential,
};
use crate::error::{Error, Result};
use crate::tensor::{no_grad, Element, Tensor};

/// Prefix shared by every classification-head parameter.
pub const HEAD_PREFIX: &str = "head";

/// `ReLU(F(x) + shortcut(x))` where `F` is conv-bn-relu-conv-bn.
///
/// The shortcut is the identity unless the block changes stride or width, in
/// which case it is a 1x1 convolution followed by batch norm.
pub struct BasicBlock<T: Element> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    pub downsample: Option<Sequential<T>>,
}

impl<T: Element> BasicBlock<T> {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let conv1 = Conv2d::new(in_ch, out_ch, 3, stride, 1, false, rng);
        let bn1 = BatchNorm2d::new(out_ch);
        let conv2 = Conv2d::new(out_ch, out_ch, 3, 1, 1, false, rng);
        let bn2 = BatchNorm2d::new(out_ch);
        let downsample = (stride != 1 || in_ch != out_ch).then(|| {
            Sequential::new()
                .push("conv", Conv2d::new(in_ch, out_ch, 1, stride, 0, false, rng))
                .push("bn", BatchNorm2d::new(out_ch))
        });
        BasicBlock {
            conv1,
            bn1,
            conv2,
            bn2,
            downsample,
        }
    }

    pub fn has_identity_shortcut(&self) -> bool {
        self.downsample.is_none()
    }
}

impl<T: Element> Module<T> for BasicBlock<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.bn1.forward(&self.conv1.forward(x)?)?.relu()?;
        let h = self.bn2.forward(&self.conv2.forward(&h)?)?;
        let shortcut = match &self.downsample {
            Some(ds) => ds.forward(x)?,
            None => x.clone(),
        };
        h.add(&shortcut)?.relu()
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        self.conv1.collect_params(&join(prefix, "conv1"), out);
        self.bn1.collect_params(&join(prefix, "bn1"), out);
        self.conv2.collect_params(&join(prefix, "conv2"), out);
        self.bn2.collect_params(&join(prefix, "bn2"), out);
        if let Some(ds) = &self.downsample {
            ds.collect_params(&join(prefix, "downsample"), out);
        }
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        self.conv1.collect_params_mut(&join(prefix, "conv1"), out);
        self.bn1.collect_params_mut(&join(prefix, "bn1"), out);
        self.conv2.collect_params_mut(&join(prefix, "conv2"), out);
        self.bn2.collect_params_mut(&join(prefix, "bn2"), out);
        if let Some(ds) = &mut self.downsample {
            ds.collect_params_mut(&join(prefix, "downsample"), out);
        }
    }

    fn collect_buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Buffer<T>)>) {
        self.bn1.collect_buffers(&join(prefix, "bn1"), out);
        self.bn2.collect_buffers(&join(prefix, "bn2"), out);
        if let Some(ds) = &self.downsample {
            ds.collect_buffers(&join(prefix, "downsample"), out);
        }
    }

    fn set_mode(&mut self, mode: Mode) {
        self.bn1.set_mode(mode);
        self.bn2.set_mode(mode);
        if let Some(ds) = &mut self.downsample {
            ds.set_mode(mode);
        }
    }
}

/// Input stem variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stem {
    /// 7x7 stride-2 convolution, batch norm, ReLU, 3x3 stride-2 max pool.
    /// Reduces 224x224 inputs to 56x56.
    ImageNet,
    /// 3x3 stride-1 convolution, batch norm, ReLU; no pooling. For small toy inputs.
    Compact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResNetConfig {
    pub in_channels: usize,
    pub stem: Stem,
    /// Blocks per stage.
    pub blocks: Vec<usize>,
    /// Channel width per stage; stages after the first start with a stride-2 block.
    pub widths: Vec<usize>,
    pub num_classes: usize,
}

impl ResNetConfig {
    /// The standard 34-layer network: `[3,4,6,3]` blocks at widths `[64,128,256,512]`.
    pub fn resnet34(num_classes: usize) -> Self {
        ResNetConfig {
            in_channels: 3,
            stem: Stem::ImageNet,
            blocks: vec![3, 4, 6, 3],
            widths: vec![64, 128, 256, 512],
            num_classes,
        }
    }

    /// A reduced-depth variant for 32x32 toy images: one block per stage.
    pub fn compact(num_classes: usize) -> Self {
        ResNetConfig {
            in_channels: 3,
            stem: Stem::Compact,
            blocks: vec![1, 1, 1],
            widths: vec![8, 16, 32],
            num_classes,
        }
    }

    pub fn feature_width(&self) -> usize {
        *self.widths.last().unwrap_or(&self.stem_width())
    }

    fn stem_width(&self) -> usize {
        self.widths.first().copied().unwrap_or(64)
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::contract(format!(
                "a classifier needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.blocks.is_empty() || self.blocks.len() != self.widths.len() {
            return Err(Error::contract("blocks and widths must be non-empty and equally long"));
        }
        if self.blocks.contains(&0) || self.widths.contains(&0) || self.in_channels == 0 {
            return Err(Error::contract("block counts and widths must be positive"));
        }
        Ok(())
    }
}

/// Residual classifier: stem, stages of [`BasicBlock`]s, global average pool
/// and a linear head. Produces logits; [`ResNet::predict_proba`] applies softmax.
pub struct ResNet<T: Element = f32> {
    config: ResNetConfig,
    seed: u64,
    mode: Mode,
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    pub maxpool: Option<MaxPool2d>,
    pub stages: Vec<Vec<BasicBlock<T>>>,
    pub avgpool: AdaptiveAvgPool2d,
    pub head: Linear<T>,
}

// The head draws from its own stream so that a rebuilt or replaced head is
// reproducible from the model seed alone.
fn head_rng(seed: u64, num_classes: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + num_classes as u64);
    rng
}

impl<T: Element> ResNet<T> {
    pub fn new(config: ResNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem_width = config.stem_width();
        let (conv1, maxpool) = match config.stem {
            Stem::ImageNet => (
                Conv2d::new(config.in_channels, stem_width, 7, 2, 3, false, &mut rng),
                Some(MaxPool2d {
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                }),
            ),
            Stem::Compact => (
                Conv2d::new(config.in_channels, stem_width, 3, 1, 1, false, &mut rng),
                None,
            ),
        };
        let bn1 = BatchNorm2d::new(stem_width);
        let mut stages = Vec::with_capacity(config.blocks.len());
        let mut in_ch = stem_width;
        for (s, (&count, &width)) in config.blocks.iter().zip(&config.widths).enumerate() {
            let mut stage = Vec::with_capacity(count);
            for b in 0..count {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                stage.push(BasicBlock::new(in_ch, width, stride, &mut rng));
                in_ch = width;
            }
            stages.push(stage);
        }
        let head = Linear::new(in_ch, config.num_classes, &mut head_rng(seed, config.num_classes));
        Ok(ResNet {
            config,
            seed,
            mode: Mode::Train,
            conv1,
            bn1,
            maxpool,
            stages,
            avgpool: AdaptiveAvgPool2d,
            head,
        })
    }

    pub fn config(&self) -> &ResNetConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn block_count(&self) -> usize {
        self.stages.iter().map(Vec::len).sum()
    }

    /// Logits plus the output of every stage (for shape inspection).
    pub fn forward_stages(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let mut h = self.bn1.forward(&self.conv1.forward(x)?)?.relu()?;
        if let Some(pool) = &self.maxpool {
            h = pool.forward(&h)?;
        }
        let mut outs = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            for block in stage {
                h = block.forward(&h)?;
            }
            outs.push(h.clone());
        }
        let pooled = self.avgpool.forward(&h)?;
        Ok((self.head.forward(&pooled)?, outs))
    }

    /// Class probabilities without recording a tape.
    pub fn predict_proba(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        no_grad(|| F::softmax(&self.forward(x)?))
    }

    /// Whether a parameter/buffer name belongs to the classification head.
    pub fn is_head_name(name: &str) -> bool {
        name == HEAD_PREFIX || name.starts_with("head.")
    }

    /// Marks every non-head parameter as non-trainable.
    pub fn freeze_backbone(&mut self) {
        for (name, p) in self.named_parameters_mut() {
            if !Self::is_head_name(&name) {
                p.set_trainable(false);
            }
        }
    }

    pub fn unfreeze(&mut self) {
        for (_, p) in self.named_parameters_mut() {
            p.set_trainable(true);
        }
    }

    /// Swaps in a freshly initialized head with `num_classes` outputs.
    pub fn replace_head(&mut self, num_classes: usize) -> Result<()> {
        if num_classes < 2 {
            return Err(Error::contract(format!(
                "a classifier head needs at least 2 classes, got {num_classes}"
            )));
        }
        let in_features = self.head.in_features();
        self.head = Linear::new(in_features, num_classes, &mut head_rng(self.seed, num_classes));
        self.config.num_classes = num_classes;
        Ok(())
    }
}

impl<T: Element> Module<T> for ResNet<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_stages(x)?.0)
    }

    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        self.conv1.collect_params(&join(prefix, "conv1"), out);
        self.bn1.collect_params(&join(prefix, "bn1"), out);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.collect_params(&join(prefix, &format!("stage{}.block{b}", s + 1)), out);
            }
        }
        self.head.collect_params(&join(prefix, HEAD_PREFIX), out);
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        self.conv1.collect_params_mut(&join(prefix, "conv1"), out);
        self.bn1.collect_params_mut(&join(prefix, "bn1"), out);
        for (s, stage) in self.stages.iter_mut().enumerate() {
            for (b, block) in stage.iter_mut().enumerate() {
                block.collect_params_mut(&join(prefix, &format!("stage{}.block{b}", s + 1)), out);
            }
        }
        self.head.collect_params_mut(&join(prefix, HEAD_PREFIX), out);
    }

    fn collect_buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Buffer<T>)>) {
        self.bn1.collect_buffers(&join(prefix, "bn1"), out);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.collect_buffers(&join(prefix, &format!("stage{}.block{b}", s + 1)), out);
            }
        }
    }

    fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        self.bn1.set_mode(mode);
        for block in self.stages.iter_mut().flatten() {
            block.set_mode(mode);
        }
    }
}

/// Convenience constructor for the standard 34-layer network.
pub fn build_resnet34<T: Element>(num_classes: usize, seed: u64) -> Result<ResNet<T>> {
    ResNet::new(ResNetConfig::resnet34(num_classes), seed)
}
