mod common;

use std::collections::BTreeSet;

use common::{naive_attributes, random_mask, rng, union_find_regions};
use proptest::prelude::*;
use rand::Rng;
use spie::raster_io::BinaryMask;
use spie::regions::{
    all_region_attributes, label_components, region_attributes, select_top_regions, Connectivity, Location, SizeClass,
    DEFAULT_TOP_K,
};

fn as_sets(mask: &BinaryMask, c: Connectivity) -> Vec<BTreeSet<(usize, usize)>> {
    label_components(mask, c)
        .regions
        .into_iter()
        .map(|r| r.pixels.into_iter().collect())
        .collect()
}

fn arb_mask() -> impl Strategy<Value = BinaryMask> {
    (1usize..=24, 1usize..=24, 0.05f64..0.9, any::<u64>())
        .prop_map(|(w, h, d, seed)| random_mask(&mut rng(seed), w, h, d))
}

#[test]
fn size_band_boundaries() {
    let cases = [
        (0.0001, "very tiny"),
        (0.0305, "very tiny"),
        (0.0306, "small"),
        (0.05, "small"),
        (0.0610, "small"),
        (0.0611, "somewhat large"),
        (0.1221, "somewhat large"),
        (0.1222, "medium"),
        (0.2441, "medium"),
        (0.2442, "large"),
        (0.3662, "large"),
        (0.3663, "very large"),
        (0.6104, "very large"),
        (0.6105, "huge"),
        (0.7, "huge"),
        (1.0, "huge"),
    ];
    for (ratio, expect) in cases {
        assert_eq!(SizeClass::from_area_ratio(ratio).label(), expect, "S_r = {ratio}");
    }
}

#[test]
fn location_examples() {
    assert_eq!(Location::from_centroid(100.0, 100.0, 512, 512), Location::TopLeft);
    assert_eq!(Location::from_centroid(256.0, 256.0, 512, 512), Location::Center);
    // boundaries belong to the next zone
    assert_eq!(Location::from_centroid(3.0, 0.0, 9, 9), Location::TopCenter);
    assert_eq!(Location::from_centroid(6.0, 6.0, 9, 9), Location::BottomRight);
    assert_eq!(Location::from_centroid(2.999, 5.999, 9, 9), Location::MiddleLeft);
}

#[test]
fn single_pixel_region() {
    let a = region_attributes(1, &[(3, 7)], 10, 10).unwrap();
    assert_eq!(a.pixel_count, 1);
    assert_eq!(a.centroid, [7.0, 3.0]);
    assert_eq!(a.bbox.corners(), [[0.7, 0.3]; 4]);
}

#[test]
fn rectangle_region() {
    let pixels: Vec<_> = (2..=5).flat_map(|i| (3..=9).map(move |j| (i, j))).collect();
    let a = region_attributes(1, &pixels, 10, 10).unwrap();
    assert_eq!(a.centroid, [6.0, 3.5]);
    assert_eq!(a.bbox.corners(), [[0.3, 0.2], [0.9, 0.2], [0.9, 0.5], [0.3, 0.5]]);
    assert_eq!(a.location, Location::Center);
}

#[test]
fn empty_region_rejected() {
    assert!(region_attributes(1, &[], 4, 4).is_err());
    assert!(region_attributes(1, &[(4, 0)], 4, 4).is_err());
}

#[test]
fn twelve_regions_keep_ten_largest() {
    // region k (k = 0..12) is a horizontal run of k + 1 pixels on its own row
    let mask = BinaryMask::from_fn(12, 24, |i, j| i % 2 == 0 && j <= i / 2);
    let attrs = all_region_attributes(&label_components(&mask, Connectivity::Eight));
    assert_eq!(attrs.len(), 12);
    let top = select_top_regions(&attrs, DEFAULT_TOP_K, 0.0).unwrap();
    assert_eq!(top.len(), 10);
    let sizes: Vec<_> = top.iter().map(|a| a.pixel_count).collect();
    assert_eq!(sizes, (3..=12).rev().collect::<Vec<_>>());
}

#[test]
fn equal_areas_keep_id_order() {
    let mask = BinaryMask::from_fn(7, 1, |_, j| j % 2 == 0);
    let attrs = all_region_attributes(&label_components(&mask, Connectivity::Eight));
    let top = select_top_regions(&attrs, 10, 0.0).unwrap();
    assert_eq!(top.iter().map(|a| a.id).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    assert!(select_top_regions(&attrs, 0, 0.0).is_err());
    assert!(select_top_regions(&attrs, 10, 0.5).unwrap().is_empty());
}

#[test]
fn random_masks_match_union_find() {
    let mut r = rng(11);
    for _ in 0..100 {
        let (w, h) = (r.gen_range(1..=32), r.gen_range(1..=32));
        let density = r.gen_range(0.1..0.8);
        let mask = random_mask(&mut r, w, h, density);
        assert_eq!(
            as_sets(&mask, Connectivity::Eight),
            union_find_regions(&mask, true, false)
        );
        assert_eq!(
            as_sets(&mask, Connectivity::Four),
            union_find_regions(&mask, false, false)
        );
    }
}

proptest! {
    #[test]
    fn labeling_matches_reverse_scan_oracle(mask in arb_mask(), eight in any::<bool>()) {
        let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
        prop_assert_eq!(as_sets(&mask, conn), union_find_regions(&mask, eight, true));
    }

    #[test]
    fn labels_are_contiguous_and_cover_foreground(mask in arb_mask()) {
        let l = label_components(&mask, Connectivity::Eight);
        let total: usize = l.regions.iter().map(|r| r.pixels.len()).sum();
        prop_assert_eq!(total, mask.foreground_count());
        for (k, r) in l.regions.iter().enumerate() {
            prop_assert_eq!(r.id as usize, k + 1);
            for &(i, j) in &r.pixels {
                prop_assert_eq!(l.labels[i * l.width + j], r.id);
            }
        }
        let ids: BTreeSet<u32> = l.labels.iter().copied().filter(|&v| v > 0).collect();
        prop_assert_eq!(ids.len(), l.count());
    }

    #[test]
    fn attributes_match_naive_oracle(mask in arb_mask()) {
        let l = label_components(&mask, Connectivity::Eight);
        for a in all_region_attributes(&l) {
            let set: BTreeSet<_> = l.regions[a.id as usize - 1].pixels.iter().copied().collect();
            let o = naive_attributes(&set, l.height, l.width);
            prop_assert_eq!(a.pixel_count, o.n);
            prop_assert_eq!(a.size_class.label(), o.size);
            prop_assert_eq!(a.location.label(), o.location.as_str());
            prop_assert!((a.centroid[0] - o.cx).abs() <= 1e-9 && (a.centroid[1] - o.cy).abs() <= 1e-9);
            prop_assert_eq!((a.bbox.x_min, a.bbox.y_min, a.bbox.x_max, a.bbox.y_max), o.bbox);
            // centroid lies inside the box, all values below 1
            prop_assert!(a.bbox.x_min <= a.centroid[0] / l.width as f64 && a.centroid[0] / l.width as f64 <= a.bbox.x_max);
            prop_assert!(a.bbox.y_min <= a.centroid[1] / l.height as f64 && a.centroid[1] / l.height as f64 <= a.bbox.y_max);
            prop_assert!(a.bbox.x_max < 1.0 && a.bbox.y_max < 1.0);
        }
    }

    #[test]
    fn size_class_is_monotone(a in 1e-6f64..1.0, b in 1e-6f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(SizeClass::from_area_ratio(lo) <= SizeClass::from_area_ratio(hi));
    }

    #[test]
    fn top_k_is_sorted_prefix(mask in arb_mask(), k in 1usize..12) {
        let attrs = all_region_attributes(&label_components(&mask, Connectivity::Eight));
        let top = select_top_regions(&attrs, k, 0.0).unwrap();
        prop_assert_eq!(top.len(), attrs.len().min(k));
        for w in top.windows(2) {
            prop_assert!(w[0].pixel_count > w[1].pixel_count || (w[0].pixel_count == w[1].pixel_count && w[0].id < w[1].id));
        }
        if let Some(last) = top.last() {
            let dropped = attrs.iter().filter(|a| !top.iter().any(|t| t.id == a.id));
            for d in dropped {
                prop_assert!(d.pixel_count <= last.pixel_count);
            }
        }
    }
}
