//! Brute-force reference implementations shared by the integration tests.
//! Each one is written from the definitions, without reusing library code
//! paths.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spie::raster_io::{write_label_map, write_raster, Band, BinaryMask, ClassLabelMap, MultibandRaster};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    let values = (0..w * h).map(|_| u8::from(rng.gen_bool(density))).collect();
    BinaryMask::new(w, h, values).unwrap()
}

// ---------------------------------------------------------------- regions

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected foreground sets by union-find over all adjacent pairs, listed
/// in an arbitrary visiting order and then sorted by their row-major
/// smallest pixel.
pub fn union_find_regions(mask: &BinaryMask, eight: bool, reverse_scan: bool) -> Vec<BTreeSet<(usize, usize)>> {
    let (w, h) = (mask.width(), mask.height());
    let fg = |i: usize, j: usize| mask.values()[i * w + j] == 1;
    let mut parent: Vec<usize> = (0..w * h).collect();
    let mut order: Vec<usize> = (0..w * h).collect();
    if reverse_scan {
        order.reverse();
    }
    for &p in &order {
        let (i, j) = (p / w, p % w);
        if !fg(i, j) {
            continue;
        }
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                if (di, dj) == (0, 0) || (!eight && di != 0 && dj != 0) {
                    continue;
                }
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= h as i64 || nj >= w as i64 {
                    continue;
                }
                let (ni, nj) = (ni as usize, nj as usize);
                if fg(ni, nj) {
                    let a = find(&mut parent, p);
                    let b = find(&mut parent, ni * w + nj);
                    parent[a] = b;
                }
            }
        }
    }
    let mut sets: BTreeMap<usize, BTreeSet<(usize, usize)>> = BTreeMap::new();
    for p in order {
        let (i, j) = (p / w, p % w);
        if fg(i, j) {
            let root = find(&mut parent, p);
            sets.entry(root).or_default().insert((i, j));
        }
    }
    let mut out: Vec<_> = sets.into_values().collect();
    out.sort_by_key(|s| *s.iter().next().unwrap());
    out
}

/// Attribute values straight from the definitions, with exact integer
/// comparisons for the size and location bands.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveAttributes {
    pub n: usize,
    pub size: &'static str,
    pub cx: f64,
    pub cy: f64,
    pub location: String,
    /// (x_min, y_min, x_max, y_max)
    pub bbox: (f64, f64, f64, f64),
}

/// Upper bounds of the size bands in units of 1e-4.
const SIZE_BOUNDS_E4: [(u64, &str); 6] = [
    (305, "very tiny"),
    (610, "small"),
    (1221, "somewhat large"),
    (2441, "medium"),
    (3662, "large"),
    (6104, "very large"),
];

pub fn naive_size_class(n: u64, area: u64) -> &'static str {
    for (bound, name) in SIZE_BOUNDS_E4 {
        if n * 10_000 <= bound * area {
            return name;
        }
    }
    "huge"
}

pub fn naive_attributes(pixels: &BTreeSet<(usize, usize)>, h: usize, w: usize) -> NaiveAttributes {
    let n = pixels.len();
    let mut si = 0u64;
    let mut sj = 0u64;
    let (mut imin, mut imax, mut jmin, mut jmax) = (usize::MAX, 0, usize::MAX, 0);
    for &(i, j) in pixels {
        si += i as u64;
        sj += j as u64;
        imin = imin.min(i);
        imax = imax.max(i);
        jmin = jmin.min(j);
        jmax = jmax.max(j);
    }
    // C < W/3  <=>  3 * sum < W * n
    let third = |sum: u64, extent: usize| {
        let (lhs, e) = (3 * sum, extent as u64 * n as u64);
        if lhs < e {
            0
        } else if lhs < 2 * e {
            1
        } else {
            2
        }
    };
    let rows = ["top", "middle", "bottom"];
    let cols = ["left", "center", "right"];
    let (r, c) = (third(si, h), third(sj, w));
    let location = match (r, c) {
        (1, 1) => "center".to_string(),
        _ => format!("{}-{}", rows[r], cols[c]),
    };
    NaiveAttributes {
        n,
        size: naive_size_class(n as u64, (h * w) as u64),
        cx: sj as f64 / n as f64,
        cy: si as f64 / n as f64,
        location,
        bbox: (
            jmin as f64 / w as f64,
            imin as f64 / h as f64,
            jmax as f64 / w as f64,
            imax as f64 / h as f64,
        ),
    }
}

// ---------------------------------------------------------------- otsu

/// Exact bin of an f32 value: `k` with `-1 + 2k/bins <= v < -1 + 2(k+1)/bins`,
/// the value 1 going to the last bin.
pub fn exact_bin(v: f32, bins: usize) -> usize {
    let v = BigRational::from_f64(f64::from(v)).unwrap();
    let one = BigRational::from_integer(BigInt::from(1));
    let scaled =
        (v + &one) * BigRational::from_integer(BigInt::from(bins)) / BigRational::from_integer(BigInt::from(2));
    let k = scaled.floor().to_integer().to_i64().unwrap();
    k.clamp(0, bins as i64 - 1) as usize
}

/// Exhaustive Otsu over every split of a histogram: class values are bin
/// centres, each split's class sums are recomputed from scratch, the
/// between-class variance `w_b w_f (mu_b - mu_f)^2` is compared as an exact
/// rational, and the smallest maximizing split wins. `None` when fewer than
/// two bins are occupied.
pub fn brute_force_otsu(values: &[f32], bins: usize) -> Option<usize> {
    let mut hist = vec![0i128; bins];
    for &v in values {
        hist[exact_bin(v, bins)] += 1;
    }
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    // centre of bin k is (2k + 1 - bins) / bins; sums are kept in units of 1/bins
    let centre = |k: usize| 2 * k as i128 + 1 - bins as i128;
    let n = values.len() as i128;
    let mut best: Option<(usize, BigRational)> = None;
    for t in 0..bins - 1 {
        let (mut nb, mut nf, mut sb, mut sf) = (0i128, 0i128, 0i128, 0i128);
        for (k, &c) in hist.iter().enumerate() {
            if k <= t {
                nb += c;
                sb += centre(k) * c;
            } else {
                nf += c;
                sf += centre(k) * c;
            }
        }
        if nb == 0 || nf == 0 {
            continue;
        }
        let r = |num: i128, den: i128| BigRational::new(BigInt::from(num), BigInt::from(den));
        let diff = r(sb, nb * bins as i128) - r(sf, nf * bins as i128);
        let var = r(nb, n) * r(nf, n) * &diff * &diff;
        if best.as_ref().is_none_or(|(_, b)| var > *b) {
            best = Some((t, var));
        }
    }
    best.map(|(t, _)| t)
}

// ---------------------------------------------------------------- model math

/// Bilinear resize as a sum over all input pixels weighted by the tent
/// function at the corner-aligned sample position.
pub fn tent_resize(x: &[f64], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let pos = |k: usize, inp: usize, out: usize| {
        if out == 1 {
            0.0
        } else {
            k as f64 * (inp as f64 - 1.0) / (out as f64 - 1.0)
        }
    };
    let tent = |d: f64| (1.0 - d.abs()).max(0.0);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for xo in 0..ow {
                let (sy, sx) = (pos(y, h, oh), pos(xo, w, ow));
                let mut acc = 0.0;
                for i in 0..h {
                    for j in 0..w {
                        acc += x[(ch * h + i) * w + j] * tent(sy - i as f64) * tent(sx - j as f64);
                    }
                }
                out[(ch * oh + y) * ow + xo] = acc;
            }
        }
    }
    out
}

/// Direct nested-loop convolution with zero padding.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    out_c: usize,
    k: usize,
    pad: usize,
) -> Vec<f64> {
    let (oh, ow) = (h + 2 * pad - k + 1, w + 2 * pad - k + 1);
    let mut out = vec![0.0; out_c * oh * ow];
    for o in 0..out_c {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias[o];
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let si = i as i64 + ky as i64 - pad as i64;
                            let sj = j as i64 + kx as i64 - pad as i64;
                            if si < 0 || sj < 0 || si >= h as i64 || sj >= w as i64 {
                                continue;
                            }
                            acc +=
                                weight[((o * c + ci) * k + ky) * k + kx] * x[(ci * h + si as usize) * w + sj as usize];
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    out
}

/// Segment sizes by dealing tokens out one at a time.
pub fn dealt_segments(n: usize, target: usize) -> Vec<usize> {
    let mut sizes = vec![0; target];
    for t in 0..n {
        sizes[t % target] += 1;
    }
    sizes
}

// ---------------------------------------------------------------- corpora

pub const LEGEND: [&str; 4] = ["cropland", "forest", "grassland", "water"];

/// A synthetic 4-band scene with a few vegetated rectangles on bare soil
/// and a matching label map. Deterministic in `seed`.
pub fn synthetic_scene(seed: u64, w: usize, h: usize) -> (MultibandRaster, ClassLabelMap) {
    let mut rng = rng(seed);
    let mut class = vec![0u8; w * h];
    for _ in 0..rng.gen_range(2..6) {
        let (rh, rw) = (rng.gen_range(2..h / 2), rng.gen_range(2..w / 2));
        let (r0, c0) = (rng.gen_range(0..h - rh), rng.gen_range(0..w - rw));
        let id = rng.gen_range(1..=3);
        for i in r0..r0 + rh {
            for j in c0..c0 + rw {
                class[i * w + j] = id;
            }
        }
    }
    let mut band = |f: &dyn Fn(u8) -> (u16, u16)| -> Vec<u16> {
        class
            .iter()
            .map(|&c| {
                let (lo, hi) = f(c);
                rng.gen_range(lo..hi)
            })
            .collect()
    };
    let red = band(&|c| if c == 1 || c == 2 { (300, 700) } else { (1800, 2600) });
    let green = band(&|c| if c == 3 { (2500, 3200) } else { (900, 1500) });
    let blue = band(&|_| (600, 1200));
    let nir = band(&|c| match c {
        1 | 2 => (4200, 5600),
        3 => (200, 600),
        _ => (2000, 2800),
    });
    let raster = MultibandRaster::new(
        w,
        h,
        vec![(Band::R, red), (Band::G, green), (Band::B, blue), (Band::Nir, nir)],
    )
    .unwrap();
    let legend = LEGEND
        .iter()
        .enumerate()
        .map(|(k, n)| (k as u8, n.to_string()))
        .collect();
    (raster, ClassLabelMap::new(w, h, class, legend).unwrap())
}

/// Writes `n` scenes as `rasters/scene_XX.msr` and `labels/scene_XX.{pgm,json}`.
pub fn write_corpus(root: &Path, n: usize, w: usize, h: usize) {
    fs::create_dir_all(root.join("rasters")).unwrap();
    fs::create_dir_all(root.join("labels")).unwrap();
    for k in 0..n {
        let (r, l) = synthetic_scene(1000 + k as u64, w, h);
        let id = format!("scene_{k:02}");
        write_raster(&r, root.join("rasters").join(format!("{id}.msr"))).unwrap();
        write_label_map(
            &l,
            root.join("labels").join(format!("{id}.pgm")),
            root.join("labels").join(format!("{id}.json")),
        )
        .unwrap();
    }
}

/// Canned caption and score files for the stub services.
pub fn write_stubs(dir: &Path, default_caption: &str, default_scores: &str) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("default.txt"), default_caption).unwrap();
    fs::write(dir.join("default.scores"), default_scores).unwrap();
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
