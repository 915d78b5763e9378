//! Importing externally trained weights through a name translation table.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::{Checkpoint, Entry};
use super::{apply_values, model_shapes};
use crate::error::{Error, Result};
use crate::nn::{Module, ResNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadPolicy {
    /// Leave the classification head at its fresh initialization.
    #[default]
    Skip,
    Import,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportMode {
    /// Every backbone tensor of the model must be imported.
    #[default]
    Strict,
    /// Uncovered tensors keep their current values and are reported.
    Relaxed,
}

/// Ordered `external -> internal` name pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NameMap {
    pub pairs: Vec<(String, String)>,
    pub head: HeadPolicy,
}

impl NameMap {
    /// Parses `external internal` lines. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut ext_seen = HashSet::new();
        let mut int_seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            let [ext, int] = words.as_slice() else {
                return Err(Error::Format(format!(
                    "name map line {}: expected `external internal`, got {line:?}",
                    i + 1
                )));
            };
            if !ext_seen.insert(ext.to_string()) || !int_seen.insert(int.to_string()) {
                return Err(Error::Format(format!("name map line {}: name mapped twice", i + 1)));
            }
            pairs.push((ext.to_string(), int.to_string()));
        }
        Ok(NameMap {
            pairs,
            head: HeadPolicy::Skip,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (e, i) in &self.pairs {
            let _ = writeln!(s, "{e} {i}");
        }
        s
    }

    pub fn with_head(mut self, head: HeadPolicy) -> Self {
        self.head = head;
        self
    }

    /// Maps every tensor of `model` to itself, for dumps written by this library.
    pub fn identity<M: Module<f32> + ?Sized>(model: &M) -> Self {
        NameMap {
            pairs: model_shapes(model).into_keys().map(|n| (n.clone(), n)).collect(),
            head: HeadPolicy::Skip,
        }
    }

    /// Translation from torchvision's ResNet naming (`layer1.0.conv1.weight`,
    /// `layer2.0.downsample.1.running_var`, `fc.weight`) for a network with
    /// `blocks[s]` basic blocks in stage `s`.
    pub fn torchvision_resnet(blocks: &[usize]) -> Self {
        let mut pairs = Vec::new();
        let bn = |pairs: &mut Vec<(String, String)>, ext: &str, int: &str| {
            for leaf in ["weight", "bias", "running_mean", "running_var"] {
                pairs.push((format!("{ext}.{leaf}"), format!("{int}.{leaf}")));
            }
        };
        pairs.push(("conv1.weight".into(), "conv1.weight".into()));
        bn(&mut pairs, "bn1", "bn1");
        for (s, &count) in blocks.iter().enumerate() {
            for b in 0..count {
                let ext = format!("layer{}.{b}", s + 1);
                let int = format!("stage{}.block{b}", s + 1);
                for k in 1..=2 {
                    pairs.push((format!("{ext}.conv{k}.weight"), format!("{int}.conv{k}.weight")));
                    bn(&mut pairs, &format!("{ext}.bn{k}"), &format!("{int}.bn{k}"));
                }
                if s > 0 && b == 0 {
                    pairs.push((format!("{ext}.downsample.0.weight"), format!("{int}.downsample.conv.weight")));
                    bn(&mut pairs, &format!("{ext}.downsample.1"), &format!("{int}.downsample.bn"));
                }
            }
        }
        pairs.push(("fc.weight".into(), "head.weight".into()));
        pairs.push(("fc.bias".into(), "head.bias".into()));
        NameMap {
            pairs,
            head: HeadPolicy::Skip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImportSummary {
    /// Internal names whose values were overwritten.
    pub imported: Vec<String>,
    /// Internal head names left alone under [`HeadPolicy::Skip`].
    pub skipped: Vec<String>,
    /// Dump entries that no map pair consumed.
    pub unmatched_external: Vec<String>,
    /// Model backbone tensors that received no value.
    pub missing_internal: Vec<String>,
}

impl ImportSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (label, names) in [
            ("imported", &self.imported),
            ("skipped", &self.skipped),
            ("unmatched external", &self.unmatched_external),
            ("missing internal", &self.missing_internal),
        ] {
            let _ = writeln!(s, "{label}: {}", names.len());
            if label != "imported" {
                for n in names {
                    let _ = writeln!(s, "  {n}");
                }
            }
        }
        s
    }
}

/// Copies tensors from `dump` into `model` as directed by `map`.
///
/// All checks run before the first write: on error the model is unchanged.
/// Importing the same dump twice leaves the same state as importing it once.
pub fn import_pretrained<M: Module<f32> + ?Sized>(
    dump: &Checkpoint,
    model: &mut M,
    map: &NameMap,
    mode: ImportMode,
) -> Result<ImportSummary> {
    let shapes = model_shapes(model);
    let by_name: HashMap<&str, &Entry> = dump.entries.iter().map(|e| (e.name.as_str(), e)).collect();
    let mut summary = ImportSummary::default();
    let mut values: BTreeMap<&str, &Entry> = BTreeMap::new();
    let mut consumed: HashSet<&str> = HashSet::new();
    let mut unknown_internal = Vec::new();

    for (ext, int) in &map.pairs {
        let Some(entry) = by_name.get(ext.as_str()) else {
            continue;
        };
        consumed.insert(ext);
        if map.head == HeadPolicy::Skip && ResNet::<f32>::is_head_name(int) {
            summary.skipped.push(int.clone());
            continue;
        }
        let Some(want) = shapes.get(int) else {
            unknown_internal.push(int.clone());
            continue;
        };
        if &entry.shape != want {
            return Err(Error::shape(
                "import_pretrained",
                format!("`{ext}` -> `{int}`: dump has {:?}, model has {:?}", entry.shape, want),
            ));
        }
        values.insert(int, entry);
    }
    if !unknown_internal.is_empty() {
        return Err(Error::Import {
            detail: "name map targets tensors the model does not have".into(),
            names: unknown_internal,
        });
    }

    summary.unmatched_external = dump
        .entries
        .iter()
        .filter(|e| !consumed.contains(e.name.as_str()))
        .map(|e| e.name.clone())
        .collect();
    summary.missing_internal = shapes
        .keys()
        .filter(|n| !values.contains_key(n.as_str()))
        .filter(|n| !(map.head == HeadPolicy::Skip && ResNet::<f32>::is_head_name(n)))
        .cloned()
        .collect();
    if mode == ImportMode::Strict && !summary.missing_internal.is_empty() {
        return Err(Error::Import {
            detail: "strict import left backbone tensors without a value".into(),
            names: summary.missing_internal,
        });
    }

    apply_values(model, &values)?;
    summary.imported = values.keys().map(|s| s.to_string()).collect();
    Ok(summary)
}
