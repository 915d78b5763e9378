//! Layers, losses and the residual network.

pub mod functional;
pub mod layers;
pub mod resnet;

pub use layers::{
    kaiming_uniform, AdaptiveAvgPool2d, BatchNorm2d, Buffer, Conv2d, Linear, MaxPool2d, Mode,
    Module, Param, Relu, Sequential, Softmax,
};
pub use resnet::{build_resnet34, BasicBlock, ResNet, ResNetConfig, Stem, HEAD_PREFIX};
