mod support;

use aerotraffic_core::maskops::regions_to_detections;
use aerotraffic_core::rng::XorShift64Star;
use aerotraffic_core::*;
use proptest::prelude::*;
use std::collections::BTreeMap;
use support::{brute_labels, brute_morph};

fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
    (1usize..24, 1usize..24, any::<u64>(), 0.05f64..0.95).prop_map(|(w, h, seed, d)| {
        let mut rng = XorShift64Star::new(seed);
        support::random_mask(&mut rng, w, h, d)
    })
}

fn se_strategy() -> impl Strategy<Value = StructuringElement> {
    (0usize..3, 0usize..3).prop_map(|(a, b)| StructuringElement::rect(2 * a + 1, 2 * b + 1).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn erode_dilate_match_definition(m in mask_strategy(), se in se_strategy()) {
        prop_assert_eq!(erode(&m, &se), brute_morph(&m, se.radius_x(), se.radius_y(), true));
        prop_assert_eq!(dilate(&m, &se), brute_morph(&m, se.radius_x(), se.radius_y(), false));
    }

    // With outside-is-background, duality holds wherever the window stays inside.
    #[test]
    fn duality_on_interior(m in mask_strategy(), se in se_strategy()) {
        let (rx, ry) = (se.radius_x(), se.radius_y());
        let lhs = erode(&m, &se).complement();
        let rhs = dilate(&m.complement(), &se);
        for y in ry..m.height().saturating_sub(ry) {
            for x in rx..m.width().saturating_sub(rx) {
                prop_assert_eq!(lhs.get(x, y), rhs.get(x, y));
            }
        }
    }

    #[test]
    fn open_close_ordering(m in mask_strategy(), se in se_strategy(), n in 1usize..3) {
        let o = open(&m, &se, n);
        prop_assert!(o.is_subset_of(&m));
        prop_assert_eq!(open(&o, &se, n), o.clone());
        let c = close(&m, &se, n);
        prop_assert_eq!(close(&c, &se, n), c);
    }

    #[test]
    fn components_match_brute_force(m in mask_strategy()) {
        let regions = connected_components(&m);
        let labels = brute_labels(&m);
        let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
        for &l in labels.iter().filter(|&&l| l != 0) {
            *sizes.entry(l).or_default() += 1;
        }
        prop_assert_eq!(regions.len(), sizes.len());
        prop_assert_eq!(regions.iter().map(|r| r.area).sum::<usize>(), m.count_ones());
        for r in &regions {
            let (x, y) = r.pixels[0];
            let l = labels[y as usize * m.width() + x as usize];
            prop_assert!(r.pixels.iter().all(|&(x, y)| labels[y as usize * m.width() + x as usize] == l));
            prop_assert_eq!(r.area, sizes[&l]);
            let xs = r.pixels.iter().map(|p| p.0);
            let ys = r.pixels.iter().map(|p| p.1);
            prop_assert_eq!(r.bbox, BBox::new(xs.clone().min().unwrap(), ys.clone().min().unwrap(), xs.max().unwrap() + 1, ys.max().unwrap() + 1));
        }
    }

    #[test]
    fn raising_min_area_only_drops(m in mask_strategy(), a in 0.0f64..30.0, b in 0.0f64..30.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let roi = BinaryMask::filled(m.width(), m.height());
        let regions = connected_components(&m);
        let small = regions_to_detections(&regions, lo, &roi);
        let large = regions_to_detections(&regions, hi, &roi);
        prop_assert!(large.len() <= small.len());
        prop_assert!(large.iter().all(|b| small.contains(b)));
    }
}

#[test]
fn isolated_noise_removed_by_opening() {
    let mut m = BinaryMask::new(20, 20);
    for y in 5..12 {
        for x in 5..15 {
            m.set(x, y, true);
        }
    }
    m.set(1, 1, true);
    m.set(18, 17, true);
    let o = open(&m, &StructuringElement::default(), 1);
    assert!(!o.get(1, 1) && !o.get(18, 17));
    assert_eq!(o.count_ones(), 70);
}
