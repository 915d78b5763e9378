use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four leaf categories, in label-file column order.
pub const CLASS_NAMES: [&str; 4] = ["healthy", "multiple_diseases", "rust", "scab"];

/// Index into [`CLASS_NAMES`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub usize);

impl ClassId {
    pub const HEALTHY: ClassId = ClassId(0);
    pub const MULTIPLE_DISEASES: ClassId = ClassId(1);
    pub const RUST: ClassId = ClassId(2);
    pub const SCAB: ClassId = ClassId(3);

    pub fn name(self) -> &'static str {
        CLASS_NAMES.get(self.0).copied().unwrap_or("unknown")
    }

    pub fn from_name(name: &str) -> Option<ClassId> {
        CLASS_NAMES.iter().position(|&n| n == name).map(ClassId)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of the label file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRecord {
    pub image_id: String,
    pub class_id: ClassId,
}

/// A labelled record whose image file has been located on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub image_id: String,
    pub image_path: PathBuf,
    pub class_id: ClassId,
}

impl SampleRecord {
    pub fn class_name(&self) -> &'static str {
        self.class_id.name()
    }
}

/// Reads a one-hot label CSV with header `image_id,healthy,multiple_diseases,rust,scab`.
///
/// Columns may appear in any order; extra columns are ignored.
pub fn parse_labels(csv_path: &Path) -> Result<Vec<LabelRecord>> {
    let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    parse_labels_from(file)
}

pub fn parse_labels_from(reader: impl std::io::Read) -> Result<Vec<LabelRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("unreadable label header: {e}")))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("label header lacks column `{name}`")))
    };
    let id_col = column("image_id")?;
    let class_cols = CLASS_NAMES.iter().map(|n| column(n)).collect::<Result<Vec<_>>>()?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        // data rows are numbered from 1; the header is row 0
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Format(format!("row {row_no}: {e}")))?;
        let image_id = row
            .get(id_col)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Format(format!("row {row_no}: empty image_id")))?
            .to_string();
        let mut hot = Vec::new();
        for (k, &col) in class_cols.iter().enumerate() {
            match row.get(col) {
                Some("1") => hot.push(k),
                Some("0") => {}
                other => {
                    return Err(Error::LabelIntegrity {
                        row: row_no,
                        detail: format!("column `{}` holds {:?}, expected 0 or 1", CLASS_NAMES[k], other),
                    })
                }
            }
        }
        if hot.len() != 1 {
            return Err(Error::LabelIntegrity {
                row: row_no,
                detail: format!("`{image_id}` has {} classes set, expected exactly one", hot.len()),
            });
        }
        if !seen.insert(image_id.clone()) {
            return Err(Error::Format(format!("row {row_no}: duplicate image_id `{image_id}`")));
        }
        out.push(LabelRecord {
            image_id,
            class_id: ClassId(hot[0]),
        });
    }
    Ok(out)
}

/// Extensions tried, in order, when locating `<image_id>.<ext>`.
pub const IMAGE_EXTENSIONS: [&str; 5] = ["jpg", "jpeg", "png", "ppm", "JPG"];

/// Locates each record's image file under `images_dir`.
pub fn resolve_images(labels: &[LabelRecord], images_dir: &Path) -> Result<Vec<SampleRecord>> {
    labels
        .iter()
        .map(|l| {
            IMAGE_EXTENSIONS
                .iter()
                .map(|ext| images_dir.join(format!("{}.{ext}", l.image_id)))
                .find(|p| p.is_file())
                .map(|image_path| SampleRecord {
                    image_id: l.image_id.clone(),
                    image_path,
                    class_id: l.class_id,
                })
                .ok_or_else(|| {
                    Error::io(
                        images_dir.join(&l.image_id),
                        std::io::Error::new(std::io::ErrorKind::NotFound, "no image file for this id"),
                    )
                })
        })
        .collect()
}

/// Decodes every image once, failing on the first that does not.
pub fn validate_images(records: &[SampleRecord]) -> Result<()> {
    for r in records {
        super::image::decode_rgb(&r.image_path)?;
    }
    Ok(())
}
