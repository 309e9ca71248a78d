//! Normalized-difference indices and Otsu coarse masking.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster_io::{Band, BinaryMask, MultibandRaster};

pub const DEFAULT_BINS: usize = 256;

/// Divisor taking stored digital numbers to surface reflectance.
pub const DEFAULT_REFLECTANCE_DIVISOR: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndexKind {
    #[serde(rename = "NDVI")]
    Ndvi,
    #[serde(rename = "NDWI")]
    Ndwi,
    #[serde(rename = "NDBI")]
    Ndbi,
}

impl IndexKind {
    /// The `(A, B)` bands of `(A - B) / (A + B)`.
    pub fn bands(self) -> (Band, Band) {
        match self {
            IndexKind::Ndvi => (Band::Nir, Band::R),
            IndexKind::Ndwi => (Band::G, Band::Nir),
            IndexKind::Ndbi => (Band::Swir, Band::Nir),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Ndvi => "NDVI",
            IndexKind::Ndwi => "NDWI",
            IndexKind::Ndbi => "NDBI",
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NDVI" => Ok(IndexKind::Ndvi),
            "NDWI" => Ok(IndexKind::Ndwi),
            "NDBI" => Ok(IndexKind::Ndbi),
            _ => Err(Error::Argument(format!("unknown spectral index `{s}`"))),
        }
    }
}

/// A real-valued index field with every value in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap {
    width: usize,
    height: usize,
    kind: IndexKind,
    values: Vec<f32>,
}

impl IndexMap {
    pub fn new(width: usize, height: usize, kind: IndexKind, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "index map holds {} values, expected {width}x{height}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("index value {v} outside [-1, 1]")));
        }
        Ok(Self {
            width,
            height,
            kind,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Debug dump: u32-LE width, u32-LE height, then row-major f32-LE values.
    pub fn to_grid_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.values.len());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_grid_bytes(bytes: &[u8], kind: IndexKind) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Format("float grid shorter than its header".into()));
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let payload = &bytes[8..];
        if payload.len() != 4 * width * height {
            return Err(Error::Format(format!(
                "float grid payload holds {} bytes, expected {}",
                payload.len(),
                4 * width * height
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(width, height, kind, values).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn write_index_map(index: &IndexMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, index.to_grid_bytes()).map_err(|e| Error::file(path, e))
}

pub fn read_index_map(path: impl AsRef<Path>, kind: IndexKind) -> Result<IndexMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    IndexMap::from_grid_bytes(&bytes, kind)
}

/// `(A - B) / (A + B)` on reflectance-scaled bands with the default divisor.
pub fn compute_index(raster: &MultibandRaster, kind: IndexKind) -> Result<IndexMap> {
    compute_index_scaled(raster, kind, DEFAULT_REFLECTANCE_DIVISOR)
}

/// Like [`compute_index`] with an explicit DN divisor. Reflectances are
/// clamped to [0, 1]; a zero denominator yields 0.
pub fn compute_index_scaled(raster: &MultibandRaster, kind: IndexKind, divisor: f64) -> Result<IndexMap> {
    if !(divisor.is_finite() && divisor > 0.0) {
        return Err(Error::Argument(format!(
            "reflectance divisor {divisor} must be positive"
        )));
    }
    let (a_band, b_band) = kind.bands();
    let band = |b: Band| {
        raster.band(b).ok_or(Error::MissingBand {
            index: kind.name(),
            band: b,
        })
    };
    let (a, b) = (band(a_band)?, band(b_band)?);
    let values = a
        .iter()
        .zip(b)
        .map(|(&a, &b)| {
            let a = (f64::from(a) / divisor).min(1.0);
            let b = (f64::from(b) / divisor).min(1.0);
            let sum = a + b;
            if sum == 0.0 {
                0.0
            } else {
                ((a - b) / sum).clamp(-1.0, 1.0) as f32
            }
        })
        .collect();
    Ok(IndexMap {
        width: raster.width(),
        height: raster.height(),
        kind,
        values,
    })
}

/// An Otsu threshold over a fixed-range histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    /// `T_o`: the upper edge of the last background bin.
    pub value: f64,
    /// Index of the last background bin.
    pub bin: usize,
    pub bins: usize,
}

/// `bins + 1` uniformly spaced edges over [-1, 1].
pub fn bin_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| -1.0 + 2.0 * k as f64 / bins as f64).collect()
}

/// Bin `k` holds values in `[edges[k], edges[k + 1])`; 1.0 falls in the last bin.
fn bin_of(v: f64, edges: &[f64]) -> usize {
    let bins = edges.len() - 1;
    let mut k = (((v + 1.0) * 0.5 * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    while k + 1 < bins && v >= edges[k + 1] {
        k += 1;
    }
    while k > 0 && v < edges[k] {
        k -= 1;
    }
    k
}

pub fn histogram(index: &IndexMap, bins: usize) -> Result<Vec<u64>> {
    if bins < 2 {
        return Err(Error::Argument(format!("OTSU needs at least 2 bins, got {bins}")));
    }
    let edges = bin_edges(bins);
    let mut hist = vec![0u64; bins];
    for &v in &index.values {
        hist[bin_of(f64::from(v), &edges)] += 1;
    }
    Ok(hist)
}

/// Selects the histogram split maximizing between-class variance.
///
/// Candidate `t` puts bins `0..=t` in the background. Scores are compared in
/// exact integer arithmetic, and the smallest maximizing `t` wins.
pub fn otsu_threshold(index: &IndexMap, bins: usize) -> Result<Threshold> {
    if index.values.is_empty() {
        return Err(Error::Argument("empty index map".into()));
    }
    let hist = histogram(index, bins)?;
    let t = otsu_bin(&hist)?;
    Ok(Threshold {
        value: bin_edges(bins)[t + 1],
        bin: t,
        bins,
    })
}

/// Otsu split on a raw histogram. With bin indices as class values the
/// between-class variance is proportional to `D^2 / (n_b * n_f)` where
/// `D = n * S_b - S * n_b`.
pub fn otsu_bin(hist: &[u64]) -> Result<usize> {
    if hist.iter().filter(|&&h| h > 0).count() < 2 {
        return Err(Error::Degenerate(
            "index map occupies a single histogram bin; no threshold separates it".into(),
        ));
    }
    let n: u128 = hist.iter().map(|&h| u128::from(h)).sum();
    let s: u128 = hist.iter().enumerate().map(|(k, &h)| k as u128 * u128::from(h)).sum();

    let mut best: Option<(usize, BigUint, BigUint)> = None;
    let (mut n_b, mut s_b) = (0u128, 0u128);
    for (t, &h) in hist[..hist.len() - 1].iter().enumerate() {
        n_b += u128::from(h);
        s_b += t as u128 * u128::from(h);
        if n_b == 0 || n_b == n {
            continue;
        }
        let d = (n * s_b).abs_diff(s * n_b);
        let num = BigUint::from(d) * BigUint::from(d);
        let den = BigUint::from(n_b) * BigUint::from(n - n_b);
        let better = match &best {
            None => true,
            Some((_, bn, bd)) => (&num * bd).cmp(&(bn * &den)) == Ordering::Greater,
        };
        if better {
            best = Some((t, num, den));
        }
    }
    Ok(best.expect("two occupied bins give a valid split").0)
}

/// 1 where the index is strictly above the threshold.
pub fn binarize(index: &IndexMap, threshold: &Threshold) -> BinaryMask {
    let values = index
        .values
        .iter()
        .map(|&v| u8::from(f64::from(v) > threshold.value))
        .collect();
    BinaryMask::new(index.width, index.height, values).expect("dimensions carried from index map")
}
