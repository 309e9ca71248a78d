//! Connected regions of a coarse mask and their descriptive attributes.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster_io::BinaryMask;

/// Number of regions kept for a spectral prompt.
pub const DEFAULT_TOP_K: usize = 10;

/// Pixel adjacency: edge neighbours only, or edges and corners.
/// Serialized as the number 4 or 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::Argument(format!("connectivity must be 4 or 8, got {n}"))),
        }
    }
}

/// One connected region: its id and pixel set `(i, j)` in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub id: u32,
    pub pixels: Vec<(usize, usize)>,
}

/// Label grid (0 = background) plus the pixel set of each region.
///
/// Ids run `1..=count` ordered by each region's first pixel in row-major
/// order, i.e. its topmost-then-leftmost pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledRegions {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub regions: Vec<Region>,
}

impl LabeledRegions {
    pub fn count(&self) -> usize {
        self.regions.len()
    }
}

pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> LabeledRegions {
    let (width, height) = (mask.width(), mask.height());
    let values = mask.values();
    let mut labels = vec![0u32; width * height];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..values.len() {
        if values[start] == 0 || labels[start] != 0 {
            continue;
        }
        let id = regions.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            let (i, j) = (p / width, p % width);
            pixels.push((i, j));
            for &(di, dj) in connectivity.offsets() {
                let (Some(ni), Some(nj)) = (i.checked_add_signed(di), j.checked_add_signed(dj)) else {
                    continue;
                };
                if ni >= height || nj >= width {
                    continue;
                }
                let q = ni * width + nj;
                if values[q] == 1 && labels[q] == 0 {
                    labels[q] = id;
                    queue.push_back(q);
                }
            }
        }
        pixels.sort_unstable();
        regions.push(Region { id, pixels });
    }

    LabeledRegions {
        width,
        height,
        labels,
        regions,
    }
}

/// Area-ratio classes, ordered from smallest to largest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeClass {
    #[serde(rename = "very tiny")]
    VeryTiny,
    #[serde(rename = "small")]
    Small,
    #[serde(rename = "somewhat large")]
    SomewhatLarge,
    #[serde(rename = "medium")]
    Medium,
    #[serde(rename = "large")]
    Large,
    #[serde(rename = "very large")]
    VeryLarge,
    #[serde(rename = "huge")]
    Huge,
}

/// Inclusive upper bounds of every class but `Huge`.
pub const SIZE_CLASS_UPPER_BOUNDS: [(SizeClass, f64); 6] = [
    (SizeClass::VeryTiny, 0.0305),
    (SizeClass::Small, 0.0610),
    (SizeClass::SomewhatLarge, 0.1221),
    (SizeClass::Medium, 0.2441),
    (SizeClass::Large, 0.3662),
    (SizeClass::VeryLarge, 0.6104),
];

impl SizeClass {
    pub const ALL: [SizeClass; 7] = [
        SizeClass::VeryTiny,
        SizeClass::Small,
        SizeClass::SomewhatLarge,
        SizeClass::Medium,
        SizeClass::Large,
        SizeClass::VeryLarge,
        SizeClass::Huge,
    ];

    /// Class of an area ratio `S_r`; expects `S_r > 0`.
    pub fn from_area_ratio(ratio: f64) -> SizeClass {
        SIZE_CLASS_UPPER_BOUNDS
            .iter()
            .find(|(_, upper)| ratio <= *upper)
            .map_or(SizeClass::Huge, |(class, _)| *class)
    }

    pub fn label(self) -> &'static str {
        match self {
            SizeClass::VeryTiny => "very tiny",
            SizeClass::Small => "small",
            SizeClass::SomewhatLarge => "somewhat large",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
            SizeClass::VeryLarge => "very large",
            SizeClass::Huge => "huge",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SizeClass::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::Format(format!("unknown size class `{s}`")))
    }
}

/// Cell of the 3 x 3 grid holding a region's centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Location {
    TopLeft,
    TopCenter,
    TopRight,
    MiddleLeft,
    Center,
    MiddleRight,
    BottomLeft,
    BottomCenter,
    BottomRight,
}

impl Location {
    pub const ALL: [Location; 9] = [
        Location::TopLeft,
        Location::TopCenter,
        Location::TopRight,
        Location::MiddleLeft,
        Location::Center,
        Location::MiddleRight,
        Location::BottomLeft,
        Location::BottomCenter,
        Location::BottomRight,
    ];

    /// Thirds are half-open: `[0, W/3)`, `[W/3, 2W/3)`, `[2W/3, W)`.
    pub fn from_centroid(cx: f64, cy: f64, height: usize, width: usize) -> Location {
        let third = |c: f64, extent: usize| {
            let extent = extent as f64;
            if c < extent / 3.0 {
                0
            } else if c < 2.0 * extent / 3.0 {
                1
            } else {
                2
            }
        };
        Location::ALL[third(cy, height) * 3 + third(cx, width)]
    }

    pub fn label(self) -> &'static str {
        match self {
            Location::TopLeft => "top-left",
            Location::TopCenter => "top-center",
            Location::TopRight => "top-right",
            Location::MiddleLeft => "middle-left",
            Location::Center => "center",
            Location::MiddleRight => "middle-right",
            Location::BottomLeft => "bottom-left",
            Location::BottomCenter => "bottom-center",
            Location::BottomRight => "bottom-right",
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Location {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Location::ALL
            .into_iter()
            .find(|l| l.label() == s)
            .ok_or_else(|| Error::Format(format!("unknown location `{s}`")))
    }
}

/// Minimum enclosing rectangle in image-normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    /// Corners as `[x, y]` pairs: top-left, top-right, bottom-right, bottom-left.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        [
            [self.x_min, self.y_min],
            [self.x_max, self.y_min],
            [self.x_max, self.y_max],
            [self.x_min, self.y_max],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAttributes {
    pub id: u32,
    /// `N_r`
    pub pixel_count: usize,
    /// `S_r = N_r / (H * W)`
    pub area_ratio: f64,
    pub size_class: SizeClass,
    /// `(C_x, C_y)`: mean column and mean row.
    pub centroid: [f64; 2],
    pub location: Location,
    pub bbox: BoundingBox,
}

/// Attributes of one region of an `height` x `width` image.
pub fn region_attributes(id: u32, pixels: &[(usize, usize)], height: usize, width: usize) -> Result<RegionAttributes> {
    let Some(&(i0, j0)) = pixels.first() else {
        return Err(Error::Argument(format!("region {id} has no pixels")));
    };
    let (mut sum_i, mut sum_j) = (0u64, 0u64);
    let (mut i_min, mut i_max, mut j_min, mut j_max) = (i0, i0, j0, j0);
    for &(i, j) in pixels {
        if i >= height || j >= width {
            return Err(Error::Argument(format!(
                "pixel ({i}, {j}) of region {id} outside {width}x{height}"
            )));
        }
        sum_i += i as u64;
        sum_j += j as u64;
        i_min = i_min.min(i);
        i_max = i_max.max(i);
        j_min = j_min.min(j);
        j_max = j_max.max(j);
    }
    let n = pixels.len();
    let area_ratio = n as f64 / (height * width) as f64;
    let cx = sum_j as f64 / n as f64;
    let cy = sum_i as f64 / n as f64;
    Ok(RegionAttributes {
        id,
        pixel_count: n,
        area_ratio,
        size_class: SizeClass::from_area_ratio(area_ratio),
        centroid: [cx, cy],
        location: Location::from_centroid(cx, cy, height, width),
        bbox: BoundingBox {
            x_min: j_min as f64 / width as f64,
            y_min: i_min as f64 / height as f64,
            x_max: j_max as f64 / width as f64,
            y_max: i_max as f64 / height as f64,
        },
    })
}

/// Attributes of every region, in id order.
pub fn all_region_attributes(labeled: &LabeledRegions) -> Vec<RegionAttributes> {
    labeled
        .regions
        .iter()
        .map(|r| {
            region_attributes(r.id, &r.pixels, labeled.height, labeled.width)
                .expect("labeled regions are non-empty and in bounds")
        })
        .collect()
}

/// Keeps regions with `S_r >= min_area_ratio`, largest first, at most `k`.
/// Equal areas keep ascending id order.
pub fn select_top_regions(attrs: &[RegionAttributes], k: usize, min_area_ratio: f64) -> Result<Vec<RegionAttributes>> {
    if k == 0 {
        return Err(Error::Argument("top-k must be at least 1".into()));
    }
    let mut kept: Vec<RegionAttributes> = attrs
        .iter()
        .filter(|a| a.area_ratio >= min_area_ratio)
        .cloned()
        .collect();
    kept.sort_by(|a, b| b.area_ratio.total_cmp(&a.area_ratio).then(a.id.cmp(&b.id)));
    kept.truncate(k);
    Ok(kept)
}
