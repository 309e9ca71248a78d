//! Doc-tests for the guide in `book/`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/raster-format.md")]
pub mod raster_format {}
#[doc = include_str!("../../../book/src/spectral.md")]
pub mod spectral {}
#[doc = include_str!("../../../book/src/regions.md")]
pub mod regions {}
#[doc = include_str!("../../../book/src/prompts.md")]
pub mod prompts {}
#[doc = include_str!("../../../book/src/dataset.md")]
pub mod dataset {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/model-math.md")]
pub mod model_math {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
