//! Turn multispectral land-cover imagery into spectral-prompt instruction
//! datasets.
//!
//! The crate covers the raster containers ([`raster_io`]), spectral indices
//! and Otsu thresholding ([`spectral`]), connected-region attributes
//! ([`regions`]), prompt and instruction text plus the caption/judge quality
//! loop ([`prompts`]), dataset records ([`dataset`]), extraction metrics
//! ([`metrics`]) and reference numerics for the extraction model
//! ([`model_math`]). [`pipeline`] ties them together behind the `spie`
//! command-line tool.
//!
//! ```
//! use spie::raster_io::{Band, MultibandRaster};
//! use spie::spectral::IndexKind;
//! use spie::apg::{generate_prompt, ApgOptions};
//!
//! let (w, h) = (8, 8);
//! let nir: Vec<u16> = (0..w * h).map(|p| if p % w < 3 { 6000 } else { 800 }).collect();
//! let raster = MultibandRaster::new(w, h, vec![(Band::R, vec![1000; w * h]), (Band::Nir, nir)])?;
//! let out = generate_prompt(&raster, IndexKind::Ndvi, &ApgOptions::default())?;
//! assert_eq!(out.selected.len(), 1);
//! assert!(out.prompt.contains("\"Location\": \"middle-left\""));
//! # Ok::<(), spie::Error>(())
//! ```

pub mod apg;
pub mod cli;
pub mod dataset;
mod error;
pub mod metrics;
pub mod model_math;
pub mod pipeline;
pub mod prompts;
pub mod raster_io;
pub mod regions;
pub mod spectral;

pub use error::{Error, Result};
