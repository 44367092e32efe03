mod common;

use nhmc_core::classify::{
    evaluate_accuracy, extract_features, nn_classify, nn_classify_all, nn_index, svm_predict, svm_train,
    FeatureContext, FeatureKind, FeatureSet, NnMetric, SvmConfig,
};
use nhmc_core::dataset::synthetic::{synthetic_library, SyntheticConfig};
use nhmc_core::mog::collapse_model;
use nhmc_core::nhmc::{train_model, EmConfig};
use nhmc_core::wavelet::{uwt_with, WaveletConfig};
use nhmc_core::Error;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn set(vectors: Vec<Vec<f64>>, class_ids: Vec<usize>) -> FeatureSet {
    FeatureSet::new(vectors, class_ids, FeatureKind::Coeffs).unwrap()
}

#[test]
fn nearest_neighbour_matches_brute_force() {
    let mut rng = common::rng(41);
    for _ in 0..50 {
        let train: Vec<Vec<f64>> = (0..30).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let labels: Vec<usize> = (0..30).map(|i| i % 4).collect();
        let fs = set(train.clone(), labels.clone());
        let q: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();

        let l2 = |v: &Vec<f64>| v.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let cos = |v: &Vec<f64>| {
            let dot: f64 = v.iter().zip(&q).map(|(a, b)| a * b).sum();
            -dot / (l2_norm(v) * l2_norm(&q))
        };
        let l1 = |v: &Vec<f64>| v.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
        for (metric, f) in [
            (NnMetric::L2, &l2 as &dyn Fn(&Vec<f64>) -> f64),
            (NnMetric::Cosine, &cos),
            (NnMetric::L1, &l1),
        ] {
            let best = (0..30).min_by(|&a, &b| f(&train[a]).partial_cmp(&f(&train[b])).unwrap()).unwrap();
            assert_eq!(nn_index(&fs, &q, metric).unwrap(), best);
            assert_eq!(nn_classify(&fs, &q, metric).unwrap(), labels[best]);
        }
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn ties_go_to_the_first_training_vector() {
    let fs = set(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]], vec![3, 1, 0]);
    assert_eq!(nn_classify(&fs, &[1.0, 0.0], NnMetric::L2).unwrap(), 3);
    assert_eq!(nn_classify(&fs, &[2.0, 0.0], NnMetric::Cosine).unwrap(), 3);
    // Equidistant from the first two.
    assert_eq!(nn_index(&fs, &[0.5, 0.5], NnMetric::L2).unwrap(), 0);
}

#[test]
fn nearest_neighbour_input_errors() {
    let fs = set(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1]);
    assert!(matches!(nn_classify(&fs, &[0.0, 0.0], NnMetric::Cosine), Err(Error::Domain(_))));
    assert!(matches!(nn_classify(&fs, &[1.0], NnMetric::L2), Err(Error::Dimension(_))));
    assert!(FeatureSet::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0, 1], FeatureKind::Coeffs).is_err());
    assert!(FeatureSet::new(vec![vec![f64::NAN]], vec![0], FeatureKind::Coeffs).is_err());
    assert!("hamming".parse::<NnMetric>().is_err());
    assert_eq!("ed".parse::<NnMetric>().unwrap(), NnMetric::L2);
}

#[test]
fn accuracy_and_confusion() {
    let r = evaluate_accuracy(&[0, 1, 1, 2, 0], &[0, 1, 2, 2, 1]).unwrap();
    assert_eq!((r.correct, r.total), (3, 5));
    assert!((r.overall - 0.6).abs() < 1e-15);
    assert_eq!(r.classes, vec![0, 1, 2]);
    assert_eq!(r.confusion, vec![vec![1, 0, 0], vec![1, 1, 0], vec![0, 1, 1]]);
    assert_eq!(r.per_class[&1], 0.5);
    assert!(evaluate_accuracy(&[0], &[0, 1]).is_err());
}

fn blobs(rng: &mut impl Rng, per_class: usize, spread: f64) -> FeatureSet {
    let centres = [[0.0, 0.0, 0.0], [4.0, 0.0, 1.0], [0.0, 4.0, -1.0]];
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per_class {
            vectors.push(
                centre
                    .iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + spread * z
                    })
                    .collect(),
            );
            labels.push(c);
        }
    }
    set(vectors, labels)
}

#[test]
fn svm_separates_separable_classes() {
    let mut rng = common::rng(42);
    let train = blobs(&mut rng, 20, 0.3);
    let test = blobs(&mut rng, 20, 0.3);
    let config = SvmConfig {
        c_grid: vec![1.0, 10.0],
        gamma_grid: vec![0.5, 2.0],
        ..Default::default()
    };
    let model = svm_train(&train, &config).unwrap();
    assert_eq!(model.classes, vec![0, 1, 2]);
    assert_eq!(model.machines.len(), 3);
    assert!(model.cv_accuracy > 0.99);
    for m in &model.machines {
        assert!(m.converged);
        assert!(m.max_kkt_violation < 1e-2, "{}", m.max_kkt_violation);
    }
    let predictions = model.predict_all(&test).unwrap();
    assert_eq!(evaluate_accuracy(&predictions, test.class_ids()).unwrap().overall, 1.0);
    assert_eq!(model, svm_train(&train, &config).unwrap());
    assert!(svm_predict(&model, &[0.0]).is_err());
}

#[test]
fn svm_configuration_errors() {
    let mut rng = common::rng(43);
    let train = blobs(&mut rng, 6, 0.3);
    let bad = |c: SvmConfig| svm_train(&train, &c).unwrap_err();
    assert!(matches!(bad(SvmConfig { c_grid: vec![], ..Default::default() }), Error::Config(_)));
    assert!(matches!(bad(SvmConfig { gamma_grid: vec![-1.0], ..Default::default() }), Error::Config(_)));
    assert!(matches!(bad(SvmConfig { folds: 1, ..Default::default() }), Error::Config(_)));
    assert!(matches!(bad(SvmConfig { folds: 7, ..Default::default() }), Error::Validation(_)));
    let one = set(vec![vec![0.0]; 6], vec![0; 6]);
    assert!(svm_train(&one, &SvmConfig::default()).is_err());
}

#[test]
fn feature_vectors_have_the_expected_shape() {
    let syn = synthetic_library(&SyntheticConfig {
        classes: 3,
        per_class: 4,
        ..Default::default()
    })
    .unwrap();
    let lib = &syn.library;
    let bands = lib.grid().len();
    let wavelet = WaveletConfig::default();
    let levels = wavelet.levels;
    let coeffs: Vec<_> = lib.spectra().iter().map(|s| uwt_with(&s.reflectance, &wavelet).unwrap()).collect();
    let gmm = train_model(&coeffs, lib.grid(), 2, &EmConfig::default()).unwrap();
    let mog = collapse_model(&gmm).unwrap();
    let mut ctx = FeatureContext::new(wavelet);

    let spectrum = extract_features(lib, FeatureKind::Spectrum, &ctx).unwrap();
    assert_eq!(spectrum.dim(), bands);
    assert_eq!(spectrum.vectors()[0], lib.spectra()[0].reflectance);
    let c = extract_features(lib, FeatureKind::Coeffs, &ctx).unwrap();
    assert_eq!(c.dim(), levels * bands);
    assert_eq!(c.vectors()[1], coeffs[1].as_slice());
    assert_eq!(extract_features(lib, FeatureKind::Rivard, &ctx).unwrap().dim(), bands);
    assert!(matches!(extract_features(lib, FeatureKind::GmmSign, &ctx), Err(Error::Config(_))));

    ctx.nhmc = Some(&gmm);
    ctx.mog = Some(&mog);
    for kind in [FeatureKind::GmmLabels, FeatureKind::GmmSign, FeatureKind::MogLabels, FeatureKind::MogSign] {
        let fs = extract_features(lib, kind, &ctx).unwrap();
        assert_eq!(fs.dim(), levels * bands);
        assert_eq!(fs.class_ids(), lib.spectra().iter().map(|s| s.class_id).collect::<Vec<_>>());
        let signed = matches!(kind, FeatureKind::GmmSign | FeatureKind::MogSign);
        for v in fs.vectors().iter().flatten() {
            assert!(matches!(*v as i32, -1..=1) && v.fract() == 0.0);
            assert!(signed || *v >= 0.0);
        }
    }

    let predictions = nn_classify_all(&spectrum, &spectrum, NnMetric::L2).unwrap();
    assert_eq!(predictions, spectrum.class_ids());
}
