mod common;

use nhmc_core::labeling::{LabelArray, LabelKind};
use nhmc_core::semantics::{absorption_bands, default_lcp_scales, label_mean_vector, rivard_lcp, summarize, SlopeTag};
use nhmc_core::wavelet::{uwt, Wavelet};
use nhmc_core::Error;
use proptest::prelude::*;

fn signed(levels: usize, bands: usize, labels: Vec<i32>) -> LabelArray {
    LabelArray::new(levels, bands, labels, true, LabelKind::Mog, vec![0.0; bands]).unwrap()
}

#[test]
fn mean_vector_rounding() {
    // Column 0: four +1 and five 0; column 1: five +1 and four 0.
    let mut labels = vec![0; 18];
    for r in 0..4 {
        labels[r * 2] = 1;
    }
    for r in 0..5 {
        labels[r * 2 + 1] = 1;
    }
    assert_eq!(label_mean_vector(&signed(9, 2, labels)).unwrap(), vec![0, 1]);
    let unsigned = LabelArray::new(1, 2, vec![0, 1], false, LabelKind::Mog, vec![0.0; 2]).unwrap();
    assert!(matches!(label_mean_vector(&unsigned), Err(Error::Validation(_))));
}

#[test]
fn band_midpoints() {
    let got = absorption_bands(&[1, 1, -1, -1], &[1.0, 1.1, 1.2, 1.3]).unwrap();
    assert!((got[0] - 1.15).abs() < 1e-12);
    let grid: Vec<f64> = (0..5).map(|i| 1.0 + 0.005 * i as f64).collect();
    // Last +1 at index 1, first -1 at index 4.
    let got = absorption_bands(&[1, 1, 0, 0, -1], &grid).unwrap();
    assert!((got[0] - 1.0125).abs() < 1e-12);
    assert!(absorption_bands(&[0, 0, 0], &[1.0, 2.0, 3.0]).unwrap().is_empty());
    assert!(absorption_bands(&[-1, -1, 1], &[1.0, 2.0, 3.0]).unwrap().is_empty());
    assert!(absorption_bands(&[1, 0], &[1.0]).is_err());
}

#[test]
fn summary_tags_match_mean_vector() {
    let s = summarize(&signed(1, 4, vec![1, 0, -1, 1]), &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(s.coloring, vec![SlopeTag::Decreasing, SlopeTag::Flat, SlopeTag::Increasing, SlopeTag::Decreasing]);
    assert_eq!(s.band_locations, vec![2.0]);
    let mut csv = Vec::new();
    s.write_colored_csv(&[1.0, 2.0, 3.0, 4.0], &[0.5; 4], &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
}

#[test]
fn lcp_sums_selected_rows() {
    let x: Vec<f64> = (0..32).map(|i| ((i * 7) % 5) as f64).collect();
    let w = uwt(&x, 5, Wavelet::Haar).unwrap();
    let all = rivard_lcp(&w, &[1, 2, 3, 4, 5]).unwrap();
    for n in 0..32 {
        let direct: f64 = (0..5).map(|r| w.get(r, n)).sum();
        assert!((all[n] - direct).abs() < 1e-12);
    }
    assert_eq!(default_lcp_scales(9), vec![6, 7, 8, 9]);
    assert!(rivard_lcp(&w, &[]).is_err());
    assert!(rivard_lcp(&w, &[6]).is_err());
    let flat = rivard_lcp(&uwt(&[0.4f64; 32], 5, Wavelet::Haar).unwrap(), &[4, 5]).unwrap();
    assert!(flat.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn lcp_peaks_inside_a_notch() {
    let x: Vec<f64> = (0..128).map(|i| if (60..66).contains(&i) { 0.3 } else { 0.9 }).collect();
    let w = uwt(&x, 7, Wavelet::Haar).unwrap();
    let lcp = rivard_lcp(&w, &default_lcp_scales(7)).unwrap();
    let argmax = (0..128).max_by(|&a, &b| lcp[a].abs().partial_cmp(&lcp[b].abs()).unwrap()).unwrap();
    assert!((56..=70).contains(&argmax), "{argmax}");
}

#[test]
fn pipeline_recovers_synthetic_dips() {
    let (hits, total) = common::dip_recovery(4, 2, 0.015);
    assert!(hits as f64 >= 0.9 * total as f64, "{hits}/{total}");
}

proptest! {
    #[test]
    fn mean_vector_is_sign_equivariant(labels in prop::collection::vec(-1i32..=1, 9 * 6)) {
        let a = signed(9, 6, labels);
        let m = label_mean_vector(&a).unwrap();
        let n = label_mean_vector(&a.negated()).unwrap();
        prop_assert_eq!(m.iter().map(|v| -v).collect::<Vec<_>>(), n);
    }

    #[test]
    fn bands_are_increasing_and_inside_the_grid(v in prop::collection::vec(-1i8..=1, 2..60)) {
        let grid: Vec<f64> = (0..v.len()).map(|i| 0.4 + 0.005 * i as f64).collect();
        let bands = absorption_bands(&v, &grid).unwrap();
        prop_assert!(bands.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(bands.iter().all(|b| *b >= grid[0] && *b <= *grid.last().unwrap()));
    }
}
