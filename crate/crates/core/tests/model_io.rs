mod common;

use common::RawChain;
use nhmc_core::model_io::{
    load_any_model, load_model, read_any_model, read_model, read_mog_model, save_model, save_mog_model, write_model,
    write_mog_model, AnyModel, MODEL_VERSION,
};
use nhmc_core::mog::collapse_model;
use nhmc_core::nhmc::{NhmcModel, TrainingMeta};
use nhmc_core::wavelet::WaveletConfig;
use nhmc_core::Error;
use serde_json::Value;

fn model(bands: usize, k: usize, levels: usize) -> NhmcModel<f64> {
    let mut rng = common::rng(51);
    NhmcModel {
        k,
        levels,
        wavelet: WaveletConfig { levels, ..Default::default() },
        grid: (0..bands).map(|i| 0.4 + 0.005 * i as f64).collect(),
        chains: (0..bands).map(|_| RawChain::random(&mut rng, k, levels).params()).collect(),
        meta: TrainingMeta {
            iterations: vec![17; bands],
            final_log_likelihood: (0..bands).map(|i| -123.456 - i as f64 / 3.0).collect(),
            converged: vec![true; bands],
            warnings: vec!["note".into()],
        },
    }
}

fn json(m: &NhmcModel<f64>) -> Value {
    let mut buf = Vec::new();
    write_model(m, &mut buf).unwrap();
    serde_json::from_slice(&buf).unwrap()
}

fn read(v: &Value) -> nhmc_core::Result<AnyModel> {
    read_any_model(serde_json::to_vec(v).unwrap().as_slice())
}

#[test]
fn gmm_round_trip_is_exact() {
    let m = model(5, 3, 4);
    let mut buf = Vec::new();
    write_model(&m, &mut buf).unwrap();
    assert_eq!(read_model::<f64, _>(buf.as_slice()).unwrap(), m);
    let v: Value = serde_json::from_slice(&buf).unwrap();
    assert_eq!(v["model_kind"], "gmm");
    assert_eq!(v["version"], MODEL_VERSION);
    assert_eq!(v["bands"], 5);
    assert_eq!(v["chains"][0]["transitions"].as_array().unwrap().len(), 3);

    let single = read_model::<f32, _>(buf.as_slice()).unwrap();
    assert_eq!(single.chains.len(), 5);
    assert!((single.chains[2].variance(1, 2) as f64 - m.chains[2].variance(1, 2)).abs() < 1e-6);
}

#[test]
fn mog_round_trip_is_exact() {
    let m = collapse_model(&model(4, 3, 5)).unwrap();
    let mut buf = Vec::new();
    write_mog_model(&m, &mut buf).unwrap();
    assert_eq!(read_mog_model::<f64, _>(buf.as_slice()).unwrap(), m);
    assert!(matches!(read_model::<f64, _>(buf.as_slice()), Err(Error::Validation(_))));
    assert!(matches!(read_any_model(buf.as_slice()).unwrap(), AnyModel::Mog(_)));
    let single = read_mog_model::<f32, _>(buf.as_slice()).unwrap();
    assert!((single.chains[1].small_variance(2) as f64 - m.chains[1].small_variance(2)).abs() < 1e-6);
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let m = model(3, 2, 3);
    let path = dir.path().join("gmm.json");
    save_model(&m, &path).unwrap();
    assert_eq!(load_model::<f64>(&path).unwrap(), m);
    let mog = collapse_model(&m).unwrap();
    let mpath = dir.path().join("mog.json");
    save_mog_model(&mog, &mpath).unwrap();
    assert_eq!(load_any_model(&mpath).unwrap(), AnyModel::Mog(mog));
    assert!(matches!(load_any_model(dir.path().join("missing.json")), Err(Error::Io { .. })));
}

#[test]
fn corrupt_files_are_rejected() {
    let m = model(3, 2, 3);
    let good = json(&m);
    assert!(read(&good).is_ok());

    let mut v = good.clone();
    v["version"] = Value::from(MODEL_VERSION + 1);
    assert!(read(&v).is_err());

    let mut v = good.clone();
    v["format"] = Value::from("something-else");
    assert!(read(&v).is_err());

    let mut v = good.clone();
    v["bands"] = Value::from(4);
    assert!(read(&v).is_err());

    // A column that no longer sums to one.
    let mut v = good.clone();
    v["chains"][1]["transitions"][0][0][0] = Value::from(0.9);
    v["chains"][1]["transitions"][0][1][0] = Value::from(0.9);
    assert!(read(&v).is_err());

    let mut v = good.clone();
    v["chains"][0]["variances"][0][1] = Value::from(-1.0);
    assert!(read(&v).is_err());

    let mut v = good.clone();
    v["model_kind"] = Value::from("hmm");
    assert!(read(&v).is_err());

    let mut buf = Vec::new();
    write_model(&m, &mut buf).unwrap();
    assert!(read_any_model(&buf[..buf.len() / 2]).is_err());
}
