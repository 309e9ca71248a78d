//! Ground-truth extraction maps, dataset records and the JSONL manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::{Category, Instruction};
use crate::raster_io::{BinaryMask, ClassLabelMap};

/// Which source classes make up a category's foreground in one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeTable {
    pub dataset: String,
    pub category: Category,
    pub include: BTreeSet<String>,
    /// False for shipped defaults whose class list still needs checking
    /// against the dataset's own legend.
    #[serde(default = "yes")]
    pub confirmed: bool,
}

fn yes() -> bool {
    true
}

impl MergeTable {
    pub fn new(dataset: &str, category: Category, include: &[&str]) -> Self {
        Self {
            dataset: dataset.into(),
            category,
            include: include.iter().map(|s| s.to_string()).collect(),
            confirmed: true,
        }
    }
}

/// Merge tables for the five source datasets.
pub fn default_merge_tables() -> Vec<MergeTable> {
    let unconfirmed = |mut t: MergeTable| {
        t.confirmed = false;
        t
    };
    vec![
        MergeTable::new("Globe230K", Category::Vegetation, &["forest", "grassland", "shrubland"]),
        MergeTable::new("GID", Category::Water, &["river", "lake", "pond"]),
        unconfirmed(MergeTable::new("Chesapeake", Category::Vegetation, &["vegetation"])),
        unconfirmed(MergeTable::new("SegMunich", Category::Vegetation, &["vegetation"])),
        unconfirmed(MergeTable::new("SpaceNet-V2", Category::Building, &["building"])),
    ]
}

/// Looks up a default table; dataset names compare case-insensitively.
pub fn default_merge_table(dataset: &str, category: Category) -> Option<MergeTable> {
    default_merge_tables()
        .into_iter()
        .find(|t| t.dataset.eq_ignore_ascii_case(dataset) && t.category == category)
}

/// Foreground wherever the pixel's class name is in the table's inclusion set.
pub fn merge_classes(labels: &ClassLabelMap, table: &MergeTable) -> Result<BinaryMask> {
    if table.include.is_empty() {
        return Err(Error::Config(format!(
            "merge table for {} / {} includes no classes",
            table.dataset, table.category
        )));
    }
    let mut selected = [false; 256];
    for name in &table.include {
        let id = labels.id_of(name).ok_or_else(|| {
            Error::Config(format!(
                "class `{name}` of the {} / {} merge table is not in the legend",
                table.dataset, table.category
            ))
        })?;
        selected[id as usize] = true;
    }
    let values = labels.ids().iter().map(|&id| u8::from(selected[id as usize])).collect();
    BinaryMask::new(labels.width(), labels.height(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    /// Id of the source image the patch was cut from.
    pub source: String,
    /// `[row, col]` of the patch in the source image.
    pub origin: [usize; 2],
}

/// One (image, extraction map, instruction, response) sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpieRecord {
    pub image: String,
    pub mask: String,
    pub instruction: String,
    pub response: String,
    pub category: Category,
    pub split: Split,
    pub provenance: Provenance,
}

pub fn build_record(
    image: &str,
    mask: &str,
    instruction: &Instruction,
    response: &str,
    category: Category,
    split: Split,
    provenance: Provenance,
) -> Result<SpieRecord> {
    if instruction.category != category {
        return Err(Error::Consistency(format!(
            "{} instruction attached to a {category} record for {image}",
            instruction.category
        )));
    }
    Ok(SpieRecord {
        image: image.into(),
        mask: mask.into(),
        instruction: instruction.text.clone(),
        response: response.into(),
        category,
        split,
        provenance,
    })
}

/// Writes one JSON object per line. Record paths are resolved against the
/// manifest's directory and must exist.
pub fn write_manifest(records: &[SpieRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for r in records {
        for rel in [&r.image, &r.mask] {
            if !base.join(rel).is_file() {
                return Err(Error::Consistency(format!(
                    "manifest entry references missing file {rel}"
                )));
            }
        }
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    file.write_all(&out).map_err(|e| Error::file(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<SpieRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Record counts per split and category.
pub fn manifest_summary(records: &[SpieRecord]) -> BTreeMap<Split, BTreeMap<Category, usize>> {
    let mut counts: BTreeMap<Split, BTreeMap<Category, usize>> = BTreeMap::new();
    for r in records {
        *counts.entry(r.split).or_default().entry(r.category).or_default() += 1;
    }
    counts
}
