//! Saving, loading and importing model state.
//!
//! Model state is every parameter plus every buffer (batch-norm running
//! statistics), keyed by the names the model reports.

pub mod format;
pub mod import;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

pub use format::{checksum, Checkpoint, Entry, MAGIC, VERSION};
pub use import::{import_pretrained, HeadPolicy, ImportMode, ImportSummary, NameMap};

use crate::error::{Error, Result};
use crate::nn::{Module, ResNetConfig, Stem};

/// Snapshot of all parameters and buffers, parameters first.
pub fn state_dict<M: Module<f32> + ?Sized>(model: &M) -> Checkpoint {
    let mut ckpt = Checkpoint::new();
    for (name, p) in model.named_parameters() {
        ckpt.entries.push(Entry {
            name,
            shape: p.shape().to_vec(),
            values: p.data().to_vec(),
        });
    }
    for (name, b) in model.named_buffers() {
        ckpt.entries.push(Entry {
            name,
            shape: b.shape().to_vec(),
            values: b.to_vec(),
        });
    }
    ckpt
}

/// Shapes of every named tensor in the model.
pub fn model_shapes<M: Module<f32> + ?Sized>(model: &M) -> BTreeMap<String, Vec<usize>> {
    let mut out: BTreeMap<String, Vec<usize>> = model
        .named_parameters()
        .into_iter()
        .map(|(n, p)| (n, p.shape().to_vec()))
        .collect();
    out.extend(model.named_buffers().into_iter().map(|(n, b)| (n, b.shape().to_vec())));
    out
}

/// Writes values into the named tensors. Callers must have validated names
/// and shapes; nothing here can fail halfway for a validated input.
pub(crate) fn apply_values<M: Module<f32> + ?Sized>(model: &mut M, values: &BTreeMap<&str, &Entry>) -> Result<()> {
    for (name, b) in model.named_buffers() {
        if let Some(e) = values.get(name.as_str()) {
            b.set(e.values.clone())?;
        }
    }
    for (name, p) in model.named_parameters_mut() {
        if let Some(e) = values.get(name.as_str()) {
            p.set_data(e.values.clone())?;
        }
    }
    Ok(())
}

/// Replaces the full model state with `ckpt`.
///
/// The checkpoint must name exactly the model's tensors with matching shapes.
/// Validation happens before any write, so on error the model is unchanged.
pub fn load_state<M: Module<f32> + ?Sized>(model: &mut M, ckpt: &Checkpoint) -> Result<()> {
    let shapes = model_shapes(model);
    let ckpt_names: HashSet<&str> = ckpt.entries.iter().map(|e| e.name.as_str()).collect();
    let unknown: Vec<String> = ckpt
        .entries
        .iter()
        .filter(|e| !shapes.contains_key(&e.name))
        .map(|e| e.name.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Schema {
            detail: "checkpoint holds tensors the model does not have".into(),
            names: unknown,
        });
    }
    let missing: Vec<String> = shapes.keys().filter(|n| !ckpt_names.contains(n.as_str())).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::Schema {
            detail: "checkpoint lacks tensors the model needs".into(),
            names: missing,
        });
    }
    for e in &ckpt.entries {
        let want = &shapes[&e.name];
        if &e.shape != want {
            return Err(Error::shape(
                "load_state",
                format!("`{}` is {:?} in the checkpoint but {:?} in the model", e.name, e.shape, want),
            ));
        }
    }
    let values: BTreeMap<&str, &Entry> = ckpt.entries.iter().map(|e| (e.name.as_str(), e)).collect();
    apply_values(model, &values)
}

pub fn save<M: Module<f32> + ?Sized>(model: &M, path: &Path) -> Result<()> {
    state_dict(model).write(path)
}

/// Reads and verifies `path`, then applies it with [`load_state`].
pub fn load<M: Module<f32> + ?Sized>(model: &mut M, path: &Path) -> Result<()> {
    let ckpt = Checkpoint::read(path)?;
    load_state(model, &ckpt)
}

/// Reconstructs the residual-network layout that produced `ckpt`.
pub fn infer_resnet_config(ckpt: &Checkpoint) -> Result<ResNetConfig> {
    let shape = |name: &str| {
        ckpt.get(name).map(|e| e.shape.clone()).ok_or_else(|| Error::Schema {
            detail: "cannot infer the network layout".into(),
            names: vec![name.to_string()],
        })
    };
    let stem = shape("conv1.weight")?;
    if stem.len() != 4 {
        return Err(Error::shape("infer_resnet_config", format!("conv1.weight has shape {stem:?}")));
    }
    let stem_kind = match stem[2] {
        7 => Stem::ImageNet,
        3 => Stem::Compact,
        k => return Err(Error::Format(format!("unrecognised stem kernel size {k}"))),
    };
    let mut blocks = Vec::new();
    let mut widths = Vec::new();
    for s in 1.. {
        let count = (0..)
            .take_while(|b| ckpt.get(&format!("stage{s}.block{b}.conv1.weight")).is_some())
            .count();
        if count == 0 {
            break;
        }
        blocks.push(count);
        widths.push(shape(&format!("stage{s}.block0.conv2.weight"))?[0]);
    }
    let head = shape("head.weight")?;
    Ok(ResNetConfig {
        in_channels: stem[1],
        stem: stem_kind,
        blocks,
        widths,
        num_classes: head[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ResNet;
    use crate::tensor::Tensor;

    fn tiny(classes: usize, seed: u64) -> ResNet<f32> {
        ResNet::new(ResNetConfig::compact(classes), seed).unwrap()
    }

    #[test]
    fn roundtrip_restores_outputs() {
        let src = tiny(3, 1);
        // move the running stats off their defaults
        src.forward(&Tensor::from_vec((0..2 * 3 * 8 * 8).map(|i| (i % 7) as f32).collect(), &[2, 3, 8, 8]).unwrap())
            .unwrap();
        let mut dst = tiny(3, 2);
        load_state(&mut dst, &state_dict(&src)).unwrap();
        assert_eq!(state_dict(&dst), state_dict(&src));
    }

    #[test]
    fn head_width_mismatch_names_head() {
        let src = tiny(4, 1);
        let mut dst = tiny(10, 1);
        let before = state_dict(&dst);
        let err = load_state(&mut dst, &state_dict(&src)).unwrap_err();
        assert!(matches!(err, Error::Shape { ref detail, .. } if detail.contains("head.weight")), "{err}");
        assert_eq!(state_dict(&dst), before);
    }

    #[test]
    fn missing_and_unknown_names_listed() {
        let src = tiny(3, 1);
        let mut ck = state_dict(&src);
        let removed = ck.entries.remove(3).name;
        let mut dst = tiny(3, 1);
        match load_state(&mut dst, &ck) {
            Err(Error::Schema { names, .. }) => assert_eq!(names, vec![removed]),
            other => panic!("{other:?}"),
        }
        let mut ck = state_dict(&src);
        ck.entries.push(Entry::new("extra", &[1], vec![0.0]).unwrap());
        assert!(matches!(load_state(&mut dst, &ck), Err(Error::Schema { ref names, .. }) if names == &["extra"]));
    }

    #[test]
    fn config_inferred_from_names() {
        let m = tiny(5, 0);
        assert_eq!(infer_resnet_config(&state_dict(&m)).unwrap(), ResNetConfig::compact(5));
        let cfg = ResNetConfig {
            in_channels: 3,
            stem: Stem::ImageNet,
            blocks: vec![2, 1],
            widths: vec![4, 6],
            num_classes: 2,
        };
        let m = ResNet::<f32>::new(cfg.clone(), 0).unwrap();
        assert_eq!(infer_resnet_config(&state_dict(&m)).unwrap(), cfg);
    }
}
