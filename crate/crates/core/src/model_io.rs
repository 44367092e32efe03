//! JSON model files for trained chain models, their binary collapses and SVMs.
//!
//! Every chain file carries `format`, `version`, `model_kind` (`gmm` or
//! `mog`), the shape `k`, `levels`, `bands`, the wavelength grid and one
//! parameter record per wavelength. Transition matrices are stored as
//! `transitions[s][j][i] = P(S_s = j | S_{s-1} = i)` for `s = 1..levels`
//! (row 0 is the coarsest scale), so each column `i` sums to one. The same
//! sentence is written into the file's `indexing` field.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mog::{MogChainParams, MogModel};
use crate::nhmc::{ChainParams, NhmcModel, TrainingMeta};
use crate::scalar::Scalar;
use crate::wavelet::WaveletConfig;

pub const MODEL_FORMAT: &str = "nhmc-model";
pub const MODEL_VERSION: u32 = 1;
pub const INDEXING_NOTE: &str = "transitions[s][j][i] = P(S_s = j | S_(s-1) = i) for s = 1..levels, \
row 0 = coarsest scale; every column i sums to 1; variances[s][i] is the variance of state i at scale s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GmmChainRecord {
    initial_probs: Vec<f64>,
    transitions: Vec<Vec<Vec<f64>>>,
    variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MogChainRecord {
    initial_probs: [f64; 2],
    transitions: Vec<[[f64; 2]; 2]>,
    small_variance: Vec<f64>,
    large_weights: Vec<Vec<f64>>,
    large_variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "lowercase")]
enum Body {
    Gmm {
        chains: Vec<GmmChainRecord>,
        training: TrainingMeta,
    },
    Mog {
        chains: Vec<MogChainRecord>,
        warnings: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    indexing: String,
    k: usize,
    levels: usize,
    bands: usize,
    wavelet: WaveletConfig,
    wavelengths: Vec<f64>,
    #[serde(flatten)]
    body: Body,
}

/// A model file of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Gmm(NhmcModel<f64>),
    Mog(MogModel<f64>),
}

fn f64s<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn ts<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

fn gmm_file<T: Scalar>(model: &NhmcModel<T>) -> ModelFile {
    let chains = model
        .chains
        .iter()
        .map(|c| GmmChainRecord {
            initial_probs: f64s(c.initial()),
            transitions: (1..c.levels())
                .map(|s| c.transition_matrix(s).iter().map(|row| f64s(row)).collect())
                .collect(),
            variances: (0..c.levels()).map(|s| f64s(c.variances_at(s))).collect(),
        })
        .collect();
    ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        indexing: INDEXING_NOTE.into(),
        k: model.k,
        levels: model.levels,
        bands: model.bands(),
        wavelet: model.wavelet,
        wavelengths: model.grid.clone(),
        body: Body::Gmm {
            chains,
            training: model.meta.clone(),
        },
    }
}

fn mog_file<T: Scalar>(model: &MogModel<T>) -> ModelFile {
    let chains = model
        .chains
        .iter()
        .map(|c| {
            let init = c.initial();
            MogChainRecord {
                initial_probs: [init[0].as_f64(), init[1].as_f64()],
                transitions: (1..c.levels())
                    .map(|s| {
                        let m = c.transition_matrix(s);
                        [
                            [m[0][0].as_f64(), m[0][1].as_f64()],
                            [m[1][0].as_f64(), m[1][1].as_f64()],
                        ]
                    })
                    .collect(),
                small_variance: (0..c.levels()).map(|s| c.small_variance(s).as_f64()).collect(),
                large_weights: (0..c.levels()).map(|s| f64s(c.large_weights(s))).collect(),
                large_variances: (0..c.levels()).map(|s| f64s(c.large_variances(s))).collect(),
            }
        })
        .collect();
    ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        indexing: INDEXING_NOTE.into(),
        k: model.k,
        levels: model.levels,
        bands: model.bands(),
        wavelet: model.wavelet,
        wavelengths: model.grid.clone(),
        body: Body::Mog {
            chains,
            warnings: model.warnings.clone(),
        },
    }
}

fn at(index: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::AtWavelength {
        index,
        source: Box::new(e),
    }
}

fn check_header(file: &ModelFile, chains: usize) -> Result<()> {
    if file.format != MODEL_FORMAT {
        return Err(Error::Validation(format!("not a model file (format `{}`)", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::Validation(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            file.version
        )));
    }
    if chains != file.bands || file.wavelengths.len() != file.bands {
        return Err(Error::Dimension(format!(
            "model declares {} bands but holds {chains} chains and {} wavelengths",
            file.bands,
            file.wavelengths.len()
        )));
    }
    if file.wavelet.levels != file.levels {
        return Err(Error::Dimension("wavelet levels differ from chain levels".into()));
    }
    Ok(())
}

fn into_model(file: ModelFile) -> Result<AnyModel> {
    match file.body {
        Body::Gmm { ref chains, .. } => check_header(&file, chains.len())?,
        Body::Mog { ref chains, .. } => check_header(&file, chains.len())?,
    }
    let ModelFile {
        k,
        levels,
        wavelet,
        wavelengths,
        body,
        ..
    } = file;
    match body {
        Body::Gmm { chains, training } => {
            let chains = chains
                .into_iter()
                .enumerate()
                .map(|(n, c)| ChainParams::new(c.initial_probs, c.transitions, c.variances).map_err(at(n)))
                .collect::<Result<Vec<_>>>()?;
            let model = NhmcModel {
                k,
                levels,
                wavelet,
                grid: wavelengths,
                chains,
                meta: training,
            };
            model.validate()?;
            Ok(AnyModel::Gmm(model))
        }
        Body::Mog { chains, warnings } => {
            let chains = chains
                .into_iter()
                .enumerate()
                .map(|(n, c)| {
                    if c.small_variance.len() != levels {
                        return Err(at(n)(Error::Dimension(format!(
                            "{} scales in a {levels}-level model",
                            c.small_variance.len()
                        ))));
                    }
                    MogChainParams::new(
                        c.initial_probs,
                        c.transitions,
                        c.small_variance,
                        c.large_weights,
                        c.large_variances,
                    )
                    .map_err(at(n))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AnyModel::Mog(MogModel {
                k,
                levels,
                wavelet,
                grid: wavelengths,
                chains,
                warnings,
            }))
        }
    }
}

fn write_file<W: Write>(file: &ModelFile, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    serde_json::to_writer_pretty(&mut out, file)?;
    out.write_all(b"\n").map_err(|e| Error::io("<model writer>", e))?;
    out.flush().map_err(|e| Error::io("<model writer>", e))
}

pub fn write_model<T: Scalar, W: Write>(model: &NhmcModel<T>, out: W) -> Result<()> {
    write_file(&gmm_file(model), out)
}

pub fn write_mog_model<T: Scalar, W: Write>(model: &MogModel<T>, out: W) -> Result<()> {
    write_file(&mog_file(model), out)
}

pub fn read_any_model<R: Read>(input: R) -> Result<AnyModel> {
    let file: ModelFile = serde_json::from_reader(BufReader::new(input))?;
    into_model(file)
}

fn cast_gmm<T: Scalar>(m: NhmcModel<f64>) -> Result<NhmcModel<T>> {
    let chains = m
        .chains
        .iter()
        .map(|c| {
            ChainParams::new(
                ts(c.initial()),
                (1..c.levels())
                    .map(|s| c.transition_matrix(s).iter().map(|r| ts(r)).collect())
                    .collect(),
                (0..c.levels()).map(|s| ts(c.variances_at(s))).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NhmcModel {
        k: m.k,
        levels: m.levels,
        wavelet: m.wavelet,
        grid: m.grid,
        chains,
        meta: m.meta,
    })
}

fn cast_mog<T: Scalar>(m: MogModel<f64>) -> Result<MogModel<T>> {
    let chains = m
        .chains
        .iter()
        .map(|c| {
            let init = c.initial();
            MogChainParams::new(
                [T::of(init[0]), T::of(init[1])],
                (1..c.levels())
                    .map(|s| {
                        let a = c.transition_matrix(s);
                        [[T::of(a[0][0]), T::of(a[0][1])], [T::of(a[1][0]), T::of(a[1][1])]]
                    })
                    .collect(),
                (0..c.levels()).map(|s| T::of(c.small_variance(s))).collect(),
                (0..c.levels()).map(|s| ts(c.large_weights(s))).collect(),
                (0..c.levels()).map(|s| ts(c.large_variances(s))).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MogModel {
        k: m.k,
        levels: m.levels,
        wavelet: m.wavelet,
        grid: m.grid,
        chains,
        warnings: m.warnings,
    })
}

pub fn read_model<T: Scalar, R: Read>(input: R) -> Result<NhmcModel<T>> {
    match read_any_model(input)? {
        AnyModel::Gmm(m) => cast_gmm(m),
        AnyModel::Mog(_) => Err(Error::Validation("expected a gmm model, found model_kind mog".into())),
    }
}

pub fn read_mog_model<T: Scalar, R: Read>(input: R) -> Result<MogModel<T>> {
    match read_any_model(input)? {
        AnyModel::Mog(m) => cast_mog(m),
        AnyModel::Gmm(_) => Err(Error::Validation("expected a mog model, found model_kind gmm".into())),
    }
}

pub fn save_model<T: Scalar>(model: &NhmcModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_model(model, File::create(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_mog_model<T: Scalar>(model: &MogModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_mog_model(model, File::create(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_any_model(path: impl AsRef<Path>) -> Result<AnyModel> {
    let path = path.as_ref();
    read_any_model(File::open(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<NhmcModel<T>> {
    let path = path.as_ref();
    read_model(File::open(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_mog_model<T: Scalar>(path: impl AsRef<Path>) -> Result<MogModel<T>> {
    let path = path.as_ref();
    read_mog_model(File::open(path).map_err(|e| Error::io(path, e))?)
}

/// Pretty JSON for any serializable artifact (SVM models, summaries).
pub fn save_json<V: Serialize>(value: &V, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_json<V: DeserializeOwned>(path: impl AsRef<Path>) -> Result<V> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}
