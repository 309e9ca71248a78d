//! Spectral prompts, instructions, and response generation through external
//! caption and judge services.

mod quality;
mod service;

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::regions::{Location, RegionAttributes, SizeClass};
use crate::spectral::IndexKind;

pub use quality::{
    inspection_sample, quality_loop, AcceptedResponse, QualityConfig, QualityReport, QualitySample,
    DEFAULT_ACCEPT_THRESHOLD, DEFAULT_INSPECTION_SAMPLE,
};
pub use service::{
    default_schedule, request_caption, request_judgement, CaptionRequest, CaptionResponse, CaptionService,
    ChildProcessTransport, JudgeRequest, JudgeService, LineClient, LineTransport, QualityVerdict, RetryPolicy,
    SamplingParams, ServiceError, StubCaptionDir, StubJudgeDir, DEFAULT_AUXILIARY_INSTRUCTION, DEFAULT_JUDGE_PROMPT,
    DEFAULT_SYSTEM_PROMPT,
};

/// At most this many region records go into one spectral prompt.
pub const MAX_PROMPT_RECORDS: usize = 10;

/// Land-cover category targeted by an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Vegetation,
    Building,
    Water,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Vegetation, Category::Building, Category::Water];

    pub fn name(self) -> &'static str {
        match self {
            Category::Vegetation => "vegetation",
            Category::Building => "building",
            Category::Water => "water",
        }
    }

    /// The spectral index used to coarse-mask this category.
    pub fn index_kind(self) -> IndexKind {
        match self {
            Category::Vegetation => IndexKind::Ndvi,
            Category::Building => IndexKind::Ndbi,
            Category::Water => IndexKind::Ndwi,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown land-cover category `{s}`")))
    }
}

/// One region's entry in a spectral prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptRecord {
    pub size: SizeClass,
    pub centroid: [f64; 2],
    pub location: Location,
    pub bbox: [[f64; 2]; 4],
}

impl From<&RegionAttributes> for PromptRecord {
    fn from(a: &RegionAttributes) -> Self {
        Self {
            size: a.size_class,
            centroid: a.centroid,
            location: a.location,
            bbox: a.bbox.corners(),
        }
    }
}

impl PromptRecord {
    fn write_to(&self, out: &mut String) {
        let [cx, cy] = self.centroid;
        let _ = write!(
            out,
            r#"{{"Size of area": "{}", "Centroid": [{cx:.1}, {cy:.1}], "Location": "{}", "Bounding box": ["#,
            self.size, self.location
        );
        for (k, [x, y]) in self.bbox.iter().enumerate() {
            if k > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "[{x:.3}, {y:.3}]");
        }
        out.push_str("]}");
    }

    fn from_json(value: &Value) -> Result<Self> {
        let bad = |what: &str| Error::Format(format!("prompt record: {what}"));
        let obj = value.as_object().ok_or_else(|| bad("not an object"))?;
        if obj.len() != 4 {
            return Err(bad("expected exactly four keys"));
        }
        let text = |key: &str| obj.get(key).and_then(Value::as_str).ok_or_else(|| bad(key));
        let pair = |v: &Value| -> Result<[f64; 2]> {
            match v.as_array().map(Vec::as_slice) {
                Some([x, y]) => Ok([
                    x.as_f64().ok_or_else(|| bad("non-numeric coordinate"))?,
                    y.as_f64().ok_or_else(|| bad("non-numeric coordinate"))?,
                ]),
                _ => Err(bad("coordinate pair")),
            }
        };
        let corners = obj
            .get("Bounding box")
            .and_then(Value::as_array)
            .filter(|c| c.len() == 4)
            .ok_or_else(|| bad("Bounding box"))?;
        let mut bbox = [[0.0; 2]; 4];
        for (slot, c) in bbox.iter_mut().zip(corners) {
            *slot = pair(c)?;
        }
        Ok(Self {
            size: text("Size of area")?.parse()?,
            centroid: pair(obj.get("Centroid").ok_or_else(|| bad("Centroid"))?)?,
            location: text("Location")?.parse()?,
            bbox,
        })
    }
}

/// Canonical prompt text for a list of regions, in the given order.
///
/// Centroids carry one decimal and box coordinates three; the output is
/// byte-identical for identical input.
pub fn serialize_prompt(regions: &[RegionAttributes]) -> String {
    let records: Vec<PromptRecord> = regions.iter().map(PromptRecord::from).collect();
    write_records(&records)
}

fn write_records(records: &[PromptRecord]) -> String {
    let mut out = String::from("[");
    for (k, r) in records.iter().enumerate() {
        if k > 0 {
            out.push_str(", ");
        }
        r.write_to(&mut out);
    }
    out.push(']');
    out
}

/// An ordered list of at most [`MAX_PROMPT_RECORDS`] region records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectralPrompt {
    records: Vec<PromptRecord>,
}

impl SpectralPrompt {
    pub fn new(records: Vec<PromptRecord>) -> Result<Self> {
        if records.len() > MAX_PROMPT_RECORDS {
            return Err(Error::Argument(format!(
                "spectral prompt holds {} records, at most {MAX_PROMPT_RECORDS} allowed",
                records.len()
            )));
        }
        Ok(Self { records })
    }

    pub fn from_regions(regions: &[RegionAttributes]) -> Result<Self> {
        Self::new(regions.iter().map(PromptRecord::from).collect())
    }

    pub fn records(&self) -> &[PromptRecord] {
        &self.records
    }

    /// Parses canonical prompt text back into records.
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("prompt text is not a record list: {e}")))?;
        let items = value
            .as_array()
            .ok_or_else(|| Error::Format("prompt text is not a list".into()))?;
        Self::new(items.iter().map(PromptRecord::from_json).collect::<Result<_>>()?)
    }
}

impl fmt::Display for SpectralPrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&write_records(&self.records))
    }
}

/// A training instruction for one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub category: Category,
    pub text: String,
    /// Set when the spectral prompt was left out.
    pub ablation: bool,
}

impl Instruction {
    pub fn new(category: Category, prompt: &str, ablation: bool) -> Self {
        let text = if ablation {
            format!(
                "You are an expert specializing in remote sensing. Based on the provided image and the {category} regions, please provide a detailed description of them."
            )
        } else {
            format!(
                "Based on the provided image and the attributes of the {category} regions, please provide a detailed description of them: {prompt}"
            )
        };
        Self {
            category,
            text,
            ablation,
        }
    }
}

/// Builds the instruction for a category given by name.
pub fn build_instruction(category: &str, prompt: &str, ablation: bool) -> Result<Instruction> {
    Ok(Instruction::new(category.parse()?, prompt, ablation))
}
