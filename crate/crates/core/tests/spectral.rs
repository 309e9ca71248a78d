mod common;

use common::{brute_force_otsu, exact_bin, rng};
use proptest::prelude::*;
use rand::Rng;
use spie::raster_io::{Band, MultibandRaster};
use spie::spectral::{
    bin_edges, binarize, compute_index, histogram, otsu_threshold, read_index_map, write_index_map, IndexKind,
    IndexMap, DEFAULT_BINS,
};
use spie::Error;

fn map(w: usize, h: usize, values: Vec<f32>) -> IndexMap {
    IndexMap::new(w, h, IndexKind::Ndvi, values).unwrap()
}

/// Values drawn from a mixture of a few clusters, half of them snapped to
/// bin edges.
fn random_index(r: &mut impl Rng, n: usize) -> Vec<f32> {
    let centres: Vec<f64> = (0..r.gen_range(1..4)).map(|_| r.gen_range(-0.9..0.9)).collect();
    (0..n)
        .map(|_| {
            let c = centres[r.gen_range(0..centres.len())];
            let v = (c + r.gen_range(-0.3..0.3)).clamp(-1.0, 1.0);
            if r.gen_bool(0.5) {
                ((v * 128.0).round() / 128.0) as f32
            } else {
                v as f32
            }
        })
        .collect()
}

#[test]
fn ndvi_from_reflectance() {
    let r = MultibandRaster::new(2, 1, vec![(Band::R, vec![2000, 3000]), (Band::Nir, vec![8000, 3000])]).unwrap();
    let ndvi = compute_index(&r, IndexKind::Ndvi).unwrap();
    assert!((ndvi.values()[0] - 0.6).abs() < 1e-6);
    assert_eq!(ndvi.values()[1], 0.0);
}

#[test]
fn band_pairs() {
    assert_eq!(IndexKind::Ndvi.bands(), (Band::Nir, Band::R));
    assert_eq!(IndexKind::Ndwi.bands(), (Band::G, Band::Nir));
    assert_eq!(IndexKind::Ndbi.bands(), (Band::Swir, Band::Nir));
}

#[test]
fn ndbi_needs_swir() {
    let r = MultibandRaster::new(
        1,
        1,
        vec![
            (Band::R, vec![1]),
            (Band::G, vec![1]),
            (Band::B, vec![1]),
            (Band::Nir, vec![1]),
        ],
    )
    .unwrap();
    match compute_index(&r, IndexKind::Ndbi) {
        Err(Error::MissingBand { band, .. }) => assert_eq!(band, Band::Swir),
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_reflectance_gives_zero_index() {
    let r = MultibandRaster::new(1, 1, vec![(Band::G, vec![0]), (Band::Nir, vec![0])]).unwrap();
    assert_eq!(compute_index(&r, IndexKind::Ndwi).unwrap().values(), &[0.0]);
}

#[test]
fn two_groups_split_between_them() {
    let values: Vec<f32> = (0..64).map(|k| if k % 2 == 0 { -0.5 } else { 0.5 }).collect();
    let m = map(8, 8, values.clone());
    let t = otsu_threshold(&m, DEFAULT_BINS).unwrap();
    assert!(-0.5 < t.value && t.value < 0.5, "{t:?}");
    assert_eq!(Some(t.bin), brute_force_otsu(&values, DEFAULT_BINS));
    let mask = binarize(&m, &t);
    for (v, &b) in values.iter().zip(mask.values()) {
        assert_eq!(b == 1, *v > 0.0);
    }
}

#[test]
fn constant_map_is_degenerate() {
    assert!(matches!(
        otsu_threshold(&map(3, 3, vec![0.25; 9]), 256),
        Err(Error::Degenerate(_))
    ));
    assert!(otsu_threshold(&map(2, 1, vec![0.0, 0.5]), 1).is_err());
}

#[test]
fn edges_and_binning() {
    let e = bin_edges(4);
    assert_eq!(e, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    let h = histogram(&map(5, 1, vec![-1.0, -0.5, 0.0, 0.49, 1.0]), 4).unwrap();
    assert_eq!(h, vec![1, 1, 2, 1]);
}

#[test]
fn value_equal_to_threshold_is_background() {
    let m = map(3, 1, vec![-0.75, 0.0, 0.75]);
    let t = otsu_threshold(&m, 4).unwrap();
    let at = map(1, 1, vec![t.value as f32]);
    assert_eq!(binarize(&at, &t).values(), &[0]);
}

#[test]
fn random_maps_match_exhaustive_search() {
    let mut r = rng(5);
    for _ in 0..100 {
        let (w, h) = (r.gen_range(1..=32), r.gen_range(2..=32));
        let values = random_index(&mut r, w * h);
        let got = otsu_threshold(&map(w, h, values.clone()), DEFAULT_BINS);
        match brute_force_otsu(&values, DEFAULT_BINS) {
            None => assert!(matches!(got, Err(Error::Degenerate(_)))),
            Some(t) => {
                let got = got.unwrap();
                assert_eq!(got.bin, t);
                assert_eq!(got.value, -1.0 + 2.0 * (t + 1) as f64 / DEFAULT_BINS as f64);
            }
        }
    }
}

#[test]
fn index_grid_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = map(3, 2, vec![-1.0, -0.25, 0.0, 0.125, 0.5, 1.0]);
    let path = dir.path().join("a.f32");
    write_index_map(&m, &path).unwrap();
    assert_eq!(read_index_map(&path, IndexKind::Ndvi).unwrap(), m);
    assert_eq!(std::fs::read(&path).unwrap().len(), 8 + 6 * 4);
}

proptest! {
    #[test]
    fn histogram_matches_exact_binning(values in prop::collection::vec(-1.0f32..=1.0, 1..200), bins in 2usize..300) {
        let m = map(values.len(), 1, values.clone());
        let mut expect = vec![0u64; bins];
        for &v in &values {
            expect[exact_bin(v, bins)] += 1;
        }
        prop_assert_eq!(histogram(&m, bins).unwrap(), expect);
    }

    #[test]
    fn otsu_matches_oracle_at_any_bin_count(seed in any::<u64>(), bins in 2usize..64) {
        let mut r = rng(seed);
        let values = random_index(&mut r, 60);
        let got = otsu_threshold(&map(60, 1, values.clone()), bins).ok().map(|t| t.bin);
        prop_assert_eq!(got, brute_force_otsu(&values, bins));
    }

    #[test]
    fn foreground_is_strictly_above(seed in any::<u64>()) {
        let mut r = rng(seed);
        let values = random_index(&mut r, 100);
        let m = map(10, 10, values.clone());
        if let Ok(t) = otsu_threshold(&m, DEFAULT_BINS) {
            let mask = binarize(&m, &t);
            let expect = values.iter().filter(|&&v| f64::from(v) > t.value).count();
            prop_assert_eq!(mask.foreground_count(), expect);
        }
    }

    #[test]
    fn indices_bounded(r in prop::collection::vec(any::<u16>(), 16), nir in prop::collection::vec(any::<u16>(), 16)) {
        let raster = MultibandRaster::new(4, 4, vec![(Band::R, r), (Band::Nir, nir)]).unwrap();
        for v in compute_index(&raster, IndexKind::Ndvi).unwrap().values() {
            prop_assert!((-1.0..=1.0).contains(v));
        }
    }
}
