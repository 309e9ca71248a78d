//! Multiband rasters, binary masks and class-label maps on disk and in memory.
//!
//! Rasters use the MSR container:
//!
//! ```text
//! "MSR1" | u32-LE width | u32-LE height | u16-LE band count
//!        | band count x u8 label code (0=R, 1=G, 2=B, 3=NIR, 4=SWIR)
//!        | payload: band-sequential, row-major u16-LE
//! ```
//!
//! Masks and label maps are binary PGM (`P5`, maxval 255). A label map carries
//! a JSON legend sidecar mapping class id to class name.
//!
//! Pixel coordinates are `(i, j)` = (row from top, column from left), 0-based.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MSR_MAGIC: &[u8; 4] = b"MSR1";
const MSR_HEADER_LEN: usize = 4 + 4 + 4 + 2;

/// Semantic label of a spectral band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    R,
    G,
    B,
    #[serde(rename = "NIR")]
    Nir,
    #[serde(rename = "SWIR")]
    Swir,
}

impl Band {
    pub const ALL: [Band; 5] = [Band::R, Band::G, Band::B, Band::Nir, Band::Swir];

    /// One-byte code used by the MSR container.
    pub fn code(self) -> u8 {
        match self {
            Band::R => 0,
            Band::G => 1,
            Band::B => 2,
            Band::Nir => 3,
            Band::Swir => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Band> {
        Band::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::R => "R",
            Band::G => "G",
            Band::B => "B",
            Band::Nir => "NIR",
            Band::Swir => "SWIR",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Band::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Semantic(format!("unknown band label `{s}`")))
    }
}

/// An H x W grid of 16-bit digital numbers per band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultibandRaster {
    width: usize,
    height: usize,
    bands: Vec<(Band, Vec<u16>)>,
}

impl MultibandRaster {
    pub fn new(width: usize, height: usize, bands: Vec<(Band, Vec<u16>)>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if bands.is_empty() {
            return Err(Error::Argument("raster needs at least one band".into()));
        }
        for (k, (label, grid)) in bands.iter().enumerate() {
            if grid.len() != width * height {
                return Err(Error::Shape(format!(
                    "band {label} holds {} values, expected {}",
                    grid.len(),
                    width * height
                )));
            }
            if bands[..k].iter().any(|(other, _)| other == label) {
                return Err(Error::Semantic(format!("duplicate band label {label}")));
            }
        }
        Ok(Self { width, height, bands })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn band_labels(&self) -> impl Iterator<Item = Band> + '_ {
        self.bands.iter().map(|(b, _)| *b)
    }

    pub fn bands(&self) -> &[(Band, Vec<u16>)] {
        &self.bands
    }

    pub fn band(&self, band: Band) -> Option<&[u16]> {
        self.bands
            .iter()
            .find(|(b, _)| *b == band)
            .map(|(_, grid)| grid.as_slice())
    }

    pub fn get(&self, band: Band, i: usize, j: usize) -> Option<u16> {
        if i >= self.height || j >= self.width {
            return None;
        }
        self.band(band).map(|grid| grid[i * self.width + j])
    }

    /// Sub-grid of every band with its top-left corner at `(row, col)`.
    pub fn window(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        check_window(self.height, self.width, row, col, height, width)?;
        let bands = self
            .bands
            .iter()
            .map(|(b, grid)| (*b, crop_grid(grid, self.width, row, col, height, width)))
            .collect();
        Self::new(width, height, bands)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MSR_HEADER_LEN + self.bands.len() * (1 + 2 * self.width * self.height));
        out.extend_from_slice(MSR_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.bands.len() as u16).to_le_bytes());
        out.extend(self.bands.iter().map(|(b, _)| b.code()));
        for (_, grid) in &self.bands {
            for v in grid {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MSR_HEADER_LEN || &bytes[..4] != MSR_MAGIC {
            return Err(Error::Format("missing MSR1 magic".into()));
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u16::from_le_bytes(bytes[12..14].try_into().unwrap()) as usize;
        if width == 0 || height == 0 || count == 0 {
            return Err(Error::Format(format!(
                "header declares {width}x{height} with {count} band(s)"
            )));
        }
        let codes = bytes
            .get(MSR_HEADER_LEN..MSR_HEADER_LEN + count)
            .ok_or_else(|| Error::Format("truncated band table".into()))?;
        let plane = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(2))
            .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
        let payload = &bytes[MSR_HEADER_LEN + count..];
        if payload.len() != plane * count {
            return Err(Error::Format(format!(
                "payload holds {} bytes, header declares {} band(s) of {plane} bytes",
                payload.len(),
                count
            )));
        }
        let mut bands = Vec::with_capacity(count);
        for (&code, chunk) in codes.iter().zip(payload.chunks_exact(plane)) {
            let label =
                Band::from_code(code).ok_or_else(|| Error::Semantic(format!("unknown band label code {code}")))?;
            let grid = chunk
                .chunks_exact(2)
                .map(|p| u16::from_le_bytes([p[0], p[1]]))
                .collect();
            bands.push((label, grid));
        }
        Self::new(width, height, bands)
    }
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<MultibandRaster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    MultibandRaster::from_bytes(&bytes)
}

pub fn write_raster(raster: &MultibandRaster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, raster.to_bytes()).map_err(|e| Error::file(path, e))
}

/// An H x W grid over {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "mask holds {} values, expected {width}x{height}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(Error::Argument(format!("mask value {v} is not binary")));
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                values.push(u8::from(f(i, j)));
            }
        }
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.values[i * self.width + j] == 1
    }

    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// PGM P5 encoding with 0 -> 0 and 1 -> 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(
            self.width,
            self.height,
            self.values.iter().map(|&v| if v == 1 { 255 } else { 0 }),
        )
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let (width, height, pixels) = decode_pgm(bytes)?;
        let values = pixels
            .iter()
            .map(|&p| match p {
                0 => Ok(0),
                255 => Ok(1),
                other => Err(Error::Format(format!("mask pixel value {other} not in {{0, 255}}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { width, height, values })
    }
}

pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, mask.to_pgm()).map_err(|e| Error::file(path, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    BinaryMask::from_pgm(&bytes)
}

/// Per-pixel class ids plus the legend naming them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassLabelMap {
    width: usize,
    height: usize,
    ids: Vec<u8>,
    legend: BTreeMap<u8, String>,
}

impl ClassLabelMap {
    pub fn new(width: usize, height: usize, ids: Vec<u8>, legend: BTreeMap<u8, String>) -> Result<Self> {
        if ids.len() != width * height {
            return Err(Error::Shape(format!(
                "label map holds {} ids, expected {width}x{height}",
                ids.len()
            )));
        }
        if let Some(id) = ids.iter().find(|id| !legend.contains_key(id)) {
            return Err(Error::Semantic(format!("class id {id} missing from legend")));
        }
        Ok(Self {
            width,
            height,
            ids,
            legend,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ids(&self) -> &[u8] {
        &self.ids
    }

    pub fn legend(&self) -> &BTreeMap<u8, String> {
        &self.legend
    }

    pub fn id_of(&self, name: &str) -> Option<u8> {
        self.legend.iter().find(|(_, n)| n.as_str() == name).map(|(id, _)| *id)
    }

    pub fn window(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        check_window(self.height, self.width, row, col, height, width)?;
        Ok(Self {
            width,
            height,
            ids: crop_grid(&self.ids, self.width, row, col, height, width),
            legend: self.legend.clone(),
        })
    }

    /// Legend as the JSON sidecar object `{"<id>": "<name>", ...}`.
    pub fn legend_json(&self) -> String {
        let map: BTreeMap<String, &str> = self
            .legend
            .iter()
            .map(|(id, name)| (id.to_string(), name.as_str()))
            .collect();
        serde_json::to_string_pretty(&map).expect("string map serializes")
    }
}

pub fn parse_legend(json: &str) -> Result<BTreeMap<u8, String>> {
    let raw: BTreeMap<String, String> = serde_json::from_str(json)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<u8>()
                .map(|id| (id, v))
                .map_err(|_| Error::Format(format!("legend key `{k}` is not a class id in 0..=255")))
        })
        .collect()
}

/// Reads a label map from its PGM id grid and JSON legend sidecar.
pub fn read_label_map(pgm: impl AsRef<Path>, legend: impl AsRef<Path>) -> Result<ClassLabelMap> {
    let (pgm, legend) = (pgm.as_ref(), legend.as_ref());
    let bytes = fs::read(pgm).map_err(|e| Error::file(pgm, e))?;
    let (width, height, ids) = decode_pgm(&bytes)?;
    let text = fs::read_to_string(legend).map_err(|e| Error::file(legend, e))?;
    ClassLabelMap::new(width, height, ids, parse_legend(&text)?)
}

pub fn write_label_map(labels: &ClassLabelMap, pgm: impl AsRef<Path>, legend: impl AsRef<Path>) -> Result<()> {
    let (pgm, legend) = (pgm.as_ref(), legend.as_ref());
    let bytes = encode_pgm(labels.width, labels.height, labels.ids.iter().copied());
    fs::write(pgm, bytes).map_err(|e| Error::file(pgm, e))?;
    fs::write(legend, labels.legend_json()).map_err(|e| Error::file(legend, e))
}

fn encode_pgm(width: usize, height: usize, pixels: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels);
    out
}

/// Decodes a binary PGM with maxval 255 into `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 0;
    let mut fields = [0usize; 3];
    if bytes.get(..2) != Some(b"P5") {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    pos += 2;
    for field in &mut fields {
        // whitespace and `#` comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PGM header".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("malformed PGM header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("PGM maxval {maxval}, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("PGM dimensions {width}x{height}")));
    }
    let pixels = &bytes[pos..];
    if pixels.len() != width * height {
        return Err(Error::Format(format!(
            "PGM payload holds {} bytes, expected {}",
            pixels.len(),
            width * height
        )));
    }
    Ok((width, height, pixels.to_vec()))
}

/// A tile cut from a raster and its label map.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub raster: MultibandRaster,
    pub labels: ClassLabelMap,
    /// `(row, col)` of the tile's top-left pixel in the source image.
    pub origin: (usize, usize),
}

/// Cuts non-overlapping `size` x `size` tiles in row-major order, dropping
/// partial tiles at the right and bottom edges.
pub fn crop_patches(raster: &MultibandRaster, labels: &ClassLabelMap, size: usize) -> Result<Vec<Patch>> {
    if (raster.width, raster.height) != (labels.width, labels.height) {
        return Err(Error::Shape(format!(
            "raster is {}x{} but label map is {}x{}",
            raster.width, raster.height, labels.width, labels.height
        )));
    }
    if size == 0 || size > raster.height || size > raster.width {
        return Err(Error::Argument(format!(
            "patch size {size} does not fit a {}x{} image",
            raster.width, raster.height
        )));
    }
    let mut patches = Vec::with_capacity((raster.height / size) * (raster.width / size));
    for row in (0..=raster.height - size).step_by(size) {
        for col in (0..=raster.width - size).step_by(size) {
            patches.push(Patch {
                raster: raster.window(row, col, size, size)?,
                labels: labels.window(row, col, size, size)?,
                origin: (row, col),
            });
        }
    }
    Ok(patches)
}

/// Pads the bottom and right with DN 0 up to `target` x `target`.
pub fn pad_to_square(raster: &MultibandRaster, target: usize) -> Result<MultibandRaster> {
    check_pad(raster.height, raster.width, target)?;
    let bands = raster
        .bands
        .iter()
        .map(|(b, grid)| (*b, pad_grid(grid, raster.width, raster.height, target, 0)))
        .collect();
    MultibandRaster::new(target, target, bands)
}

/// Pads a label map like [`pad_to_square`]. Padded pixels get a fresh class
/// id named `padding`, so they never merge into a land-cover category.
pub fn pad_labels_to_square(labels: &ClassLabelMap, target: usize) -> Result<ClassLabelMap> {
    check_pad(labels.height, labels.width, target)?;
    if (labels.width, labels.height) == (target, target) {
        return Ok(labels.clone());
    }
    let fill = (0..=u8::MAX)
        .find(|id| !labels.legend.contains_key(id))
        .ok_or_else(|| Error::Argument("legend uses all 256 class ids; no id left for padding".into()))?;
    let mut legend = labels.legend.clone();
    legend.insert(fill, "padding".into());
    ClassLabelMap::new(
        target,
        target,
        pad_grid(&labels.ids, labels.width, labels.height, target, fill),
        legend,
    )
}

/// Nearest-neighbour rescale so the longer side equals `target`, keeping the
/// aspect ratio. Used together with the pad functions to bring oversized
/// images to a square training size.
pub fn fit_longer_side(
    raster: &MultibandRaster,
    labels: &ClassLabelMap,
    target: usize,
) -> Result<(MultibandRaster, ClassLabelMap)> {
    if target == 0 {
        return Err(Error::Argument("target size must be positive".into()));
    }
    let (h, w) = (raster.height, raster.width);
    let longer = h.max(w);
    let out_h = ((h * target + longer / 2) / longer).max(1);
    let out_w = ((w * target + longer / 2) / longer).max(1);
    let bands = raster
        .bands
        .iter()
        .map(|(b, grid)| (*b, resize_nearest(grid, w, h, out_w, out_h)))
        .collect();
    let raster = MultibandRaster::new(out_w, out_h, bands)?;
    let labels = ClassLabelMap::new(
        out_w,
        out_h,
        resize_nearest(&labels.ids, w, h, out_w, out_h),
        labels.legend.clone(),
    )?;
    Ok((raster, labels))
}

fn resize_nearest<T: Copy>(grid: &[T], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<T> {
    // sample at pixel centres: src = floor((dst + 0.5) * src_len / dst_len)
    let src_index =
        |dst: usize, src_len: usize, dst_len: usize| ((2 * dst + 1) * src_len / (2 * dst_len)).min(src_len - 1);
    let cols: Vec<usize> = (0..out_w).map(|j| src_index(j, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for i in 0..out_h {
        let row = src_index(i, h, out_h) * w;
        out.extend(cols.iter().map(|&c| grid[row + c]));
    }
    out
}

fn check_pad(height: usize, width: usize, target: usize) -> Result<()> {
    if height.max(width) > target {
        return Err(Error::Argument(format!(
            "cannot pad a {width}x{height} image to {target}x{target}"
        )));
    }
    Ok(())
}

fn check_window(h: usize, w: usize, row: usize, col: usize, height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || row + height > h || col + width > w {
        return Err(Error::Argument(format!(
            "window {width}x{height} at ({row}, {col}) exceeds {w}x{h}"
        )));
    }
    Ok(())
}

fn crop_grid<T: Copy>(grid: &[T], stride: usize, row: usize, col: usize, height: usize, width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(height * width);
    for i in row..row + height {
        out.extend_from_slice(&grid[i * stride + col..i * stride + col + width]);
    }
    out
}

fn pad_grid<T: Copy>(grid: &[T], width: usize, height: usize, target: usize, fill: T) -> Vec<T> {
    let mut out = vec![fill; target * target];
    for i in 0..height {
        out[i * target..i * target + width].copy_from_slice(&grid[i * width..(i + 1) * width]);
    }
    out
}
