use std::f64::consts::FRAC_PI_2;

use nhmc_core::similarity::{spectral_distance, SpectralMeasure};
use nhmc_core::Error;
use proptest::prelude::*;

use SpectralMeasure::*;

fn d(a: &[f64], b: &[f64], m: SpectralMeasure) -> f64 {
    spectral_distance(a, b, m).unwrap()
}

#[test]
fn worked_values() {
    assert_eq!(d(&[0.0, 3.0, 4.0], &[0.0, 0.0, 0.0], Ed), 5.0);
    assert!((d(&[1.0, 0.0], &[0.0, 1.0], Sam) - FRAC_PI_2).abs() < 1e-15);
    assert!(d(&[0.3, 0.5, 0.9], &[0.3, 0.5, 0.9], Sam).abs() < 1e-7);
    assert!((d(&[1.0, 2.0, 4.0], &[5.0, 7.0, 11.0], Scm) - 1.0).abs() < 1e-12);
    assert!((d(&[1.0, 2.0, 4.0], &[3.0, 2.0, 0.0], Scm) + 1.0).abs() < 1e-12);
    assert!(d(&[0.2, 0.4], &[0.2, 0.4], Sid).abs() < 1e-15);
}

#[test]
fn two_band_divergence_by_hand() {
    // p = (1/4, 3/4), q = (1/2, 1/2), both directions summed.
    let forward = 0.25 * (0.25f64 / 0.5).ln() + 0.75 * (0.75f64 / 0.5).ln();
    let backward = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
    let got = d(&[1.0, 3.0], &[2.0, 2.0], Sid);
    assert!((got - (forward + backward)).abs() < 1e-6);
    assert!((got - 0.2747).abs() < 1e-4);
}

#[test]
fn domain_errors() {
    assert!(matches!(spectral_distance(&[0.0, 0.0], &[1.0, 1.0], Sam), Err(Error::Domain(_))));
    assert!(matches!(spectral_distance(&[2.0, 2.0], &[1.0, 3.0], Scm), Err(Error::Domain(_))));
    assert!(matches!(spectral_distance(&[-1.0, 2.0], &[1.0, 3.0], Sid), Err(Error::Domain(_))));
    assert!(matches!(spectral_distance(&[1.0], &[1.0], Ed), Err(Error::Dimension(_))));
    assert!(matches!(spectral_distance(&[1.0, 2.0], &[1.0], Ed), Err(Error::Dimension(_))));
}

#[test]
fn zero_bands_are_handled_by_epsilon() {
    let v = d(&[0.0, 1.0], &[1.0, 0.0], Sid);
    assert!(v.is_finite() && v > 0.0);
}

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 12)
}

proptest! {
    #[test]
    fn measures_are_symmetric(a in spectrum(), b in spectrum()) {
        for m in [Sam, Ed, Scm, Sid] {
            prop_assert_eq!(d(&a, &b, m), d(&b, &a, m));
        }
    }

    #[test]
    fn ranges_hold(a in spectrum(), b in spectrum()) {
        let sam = d(&a, &b, Sam);
        prop_assert!((0.0..=std::f64::consts::PI).contains(&sam));
        prop_assert!(d(&a, &b, Ed) >= 0.0);
        prop_assert!((-1.0..=1.0).contains(&d(&a, &b, Scm)));
        prop_assert!(d(&a, &b, Sid) >= -1e-12);
    }

    #[test]
    fn angle_and_divergence_ignore_scale(a in spectrum(), b in spectrum(), s in 0.1f64..10.0, t in 0.1f64..10.0) {
        let sa: Vec<f64> = a.iter().map(|v| v * s).collect();
        let tb: Vec<f64> = b.iter().map(|v| v * t).collect();
        prop_assert!((d(&a, &b, Sam) - d(&sa, &tb, Sam)).abs() < 1e-12);
        prop_assert!((d(&a, &b, Sid) - d(&sa, &b, Sid)).abs() < 1e-12);
        prop_assert!((d(&a, &b, Sid) - d(&a, &tb, Sid)).abs() < 1e-12);
    }

    #[test]
    fn divergence_vanishes_only_for_proportional_spectra(a in spectrum(), s in 0.5f64..2.0) {
        let sa: Vec<f64> = a.iter().map(|v| v * s).collect();
        prop_assert!(d(&a, &sa, Sid).abs() < 1e-12);
        let mut b = a.clone();
        b[0] += 0.5;
        prop_assert!(d(&a, &b, Sid) > 1e-6);
    }
}
