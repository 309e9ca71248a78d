//! The attribute prompt generator: index, threshold, regions, attributes
//! and prompt text for one raster, in memory.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::prompts::serialize_prompt;
use crate::raster_io::{BinaryMask, MultibandRaster};
use crate::regions::{
    all_region_attributes, label_components, select_top_regions, Connectivity, RegionAttributes, DEFAULT_TOP_K,
};
use crate::spectral::{
    binarize, compute_index_scaled, otsu_threshold, IndexKind, IndexMap, Threshold, DEFAULT_BINS,
    DEFAULT_REFLECTANCE_DIVISOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApgOptions {
    pub bins: usize,
    pub connectivity: Connectivity,
    pub top_k: usize,
    pub min_area_ratio: f64,
    pub reflectance_divisor: f64,
}

impl Default for ApgOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            connectivity: Connectivity::Eight,
            top_k: DEFAULT_TOP_K,
            min_area_ratio: 0.0,
            reflectance_divisor: DEFAULT_REFLECTANCE_DIVISOR,
        }
    }
}

/// Every intermediate of one generator run.
#[derive(Debug, Clone)]
pub struct ApgOutput {
    pub index: IndexMap,
    pub threshold: Threshold,
    pub mask: BinaryMask,
    /// All regions of the coarse mask, by id.
    pub regions: Vec<RegionAttributes>,
    /// The regions that made it into the prompt, in prompt order.
    pub selected: Vec<RegionAttributes>,
    pub prompt: String,
}

/// Attributes and prompt text from an existing coarse mask.
pub fn prompt_from_mask(
    mask: &BinaryMask,
    opts: &ApgOptions,
) -> Result<(Vec<RegionAttributes>, Vec<RegionAttributes>, String)> {
    let labeled = label_components(mask, opts.connectivity);
    let regions = all_region_attributes(&labeled);
    let selected = select_top_regions(&regions, opts.top_k, opts.min_area_ratio)?;
    let prompt = serialize_prompt(&selected);
    Ok((regions, selected, prompt))
}

pub fn generate_prompt(raster: &MultibandRaster, kind: IndexKind, opts: &ApgOptions) -> Result<ApgOutput> {
    let index = compute_index_scaled(raster, kind, opts.reflectance_divisor)?;
    let threshold = otsu_threshold(&index, opts.bins)?;
    let mask = binarize(&index, &threshold);
    let (regions, selected, prompt) = prompt_from_mask(&mask, opts)?;
    Ok(ApgOutput {
        index,
        threshold,
        mask,
        regions,
        selected,
        prompt,
    })
}
