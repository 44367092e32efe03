//! Hidden-state label arrays from Viterbi decoding, with optional Haar-sign
//! augmentation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Spectrum;
use crate::error::{Error, Result};
use crate::nhmc::{ChainParams, NhmcModel};
use crate::scalar::{ln_prob, log_normal_zero_mean, Scalar};
use crate::wavelet::{uwt_with, CoeffMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Gmm,
    Mog,
}

/// `levels x bands` state labels, coarse scale first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelArray {
    levels: usize,
    bands: usize,
    labels: Vec<i32>,
    signed: bool,
    kind: LabelKind,
    /// Best-path `ln p(S, w)` of each wavelength's chain.
    log_likelihoods: Vec<f64>,
}

impl LabelArray {
    pub fn new(
        levels: usize,
        bands: usize,
        labels: Vec<i32>,
        signed: bool,
        kind: LabelKind,
        log_likelihoods: Vec<f64>,
    ) -> Result<Self> {
        if labels.len() != levels * bands {
            return Err(Error::Dimension(format!(
                "{} labels for a {levels}x{bands} array",
                labels.len()
            )));
        }
        if log_likelihoods.len() != bands {
            return Err(Error::Dimension("one likelihood per wavelength is required".into()));
        }
        if !signed && labels.iter().any(|&l| l < 0) {
            return Err(Error::Validation("unsigned labels must be non-negative".into()));
        }
        Ok(Self {
            levels,
            bands,
            labels,
            signed,
            kind,
            log_likelihoods,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn log_likelihoods(&self) -> &[f64] {
        &self.log_likelihoods
    }

    #[inline]
    pub fn get(&self, row: usize, band: usize) -> i32 {
        self.labels[row * self.bands + band]
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.labels
    }

    /// Row-major (scale-major) feature vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }

    pub fn negated(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|l| -l).collect(),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in 0..self.levels {
            let row = &self.labels[r * self.bands..(r + 1) * self.bands];
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Max-product recursion in the log domain. `log_emit` is `levels x k`.
/// Ties go to the lower state index, both in the recursion and at the end.
pub(crate) fn viterbi_log<T: Scalar>(
    k: usize,
    levels: usize,
    log_initial: &[T],
    log_transition: impl Fn(usize, usize, usize) -> T,
    log_emit: &[T],
) -> (Vec<usize>, T) {
    let mut delta: Vec<T> = (0..k).map(|i| log_initial[i] + log_emit[i]).collect();
    let mut back = vec![0usize; levels * k];
    for s in 1..levels {
        let mut next = vec![T::neg_infinity(); k];
        for c in 0..k {
            let mut best = T::neg_infinity();
            let mut arg = 0;
            for p in 0..k {
                let v = delta[p] + log_transition(s, p, c);
                if v > best {
                    best = v;
                    arg = p;
                }
            }
            back[s * k + c] = arg;
            next[c] = best + log_emit[s * k + c];
        }
        delta = next;
    }
    let mut last = 0;
    let mut best = T::neg_infinity();
    for (i, &v) in delta.iter().enumerate() {
        if v > best {
            best = v;
            last = i;
        }
    }
    let mut path = vec![0usize; levels];
    path[levels - 1] = last;
    for s in (1..levels).rev() {
        path[s - 1] = back[s * k + path[s]];
    }
    (path, best)
}

/// Most probable state path of a coefficient chain and its joint
/// log-probability `ln p(S*, w)`.
pub fn viterbi_gmm<T: Scalar>(chain: &[T], params: &ChainParams<T>) -> Result<(Vec<usize>, T)> {
    let (k, levels) = (params.k(), params.levels());
    if chain.len() != levels {
        return Err(Error::Dimension(format!(
            "chain of length {} for a {levels}-scale model",
            chain.len()
        )));
    }
    if chain.iter().any(|w| !w.is_finite()) {
        return Err(Error::Validation("chain contains non-finite coefficients".into()));
    }
    let log_initial: Vec<T> = params.initial().iter().map(|&p| ln_prob(p)).collect();
    let log_emit: Vec<T> = (0..levels)
        .flat_map(|s| (0..k).map(move |i| log_normal_zero_mean(chain[s], params.variance(s, i))))
        .collect();
    Ok(viterbi_log(
        k,
        levels,
        &log_initial,
        |s, p, c| ln_prob(params.transition(s, p, c)),
        &log_emit,
    ))
}

fn check_grid(spectrum: &Spectrum, grid: &[f64]) -> Result<()> {
    if spectrum.wavelengths != grid {
        return Err(Error::Validation(format!(
            "spectrum {} is not on the model grid",
            spectrum.sample_id
        )));
    }
    Ok(())
}

/// Transforms a spectrum with the model's wavelet settings.
pub fn spectrum_coeffs<T: Scalar>(spectrum: &Spectrum, model: &NhmcModel<T>) -> Result<CoeffMatrix<T>> {
    check_grid(spectrum, &model.grid)?;
    let signal: Vec<T> = spectrum.reflectance.iter().map(|&r| T::of(r)).collect();
    uwt_with(&signal, &model.wavelet)
}

/// Viterbi labels of every wavelength chain of `coeffs`.
pub fn label_coeffs<T: Scalar>(coeffs: &CoeffMatrix<T>, model: &NhmcModel<T>) -> Result<LabelArray> {
    if coeffs.levels() != model.levels || coeffs.bands() != model.bands() {
        return Err(Error::Dimension(format!(
            "{}x{} coefficients for a {}x{} model",
            coeffs.levels(),
            coeffs.bands(),
            model.levels,
            model.bands()
        )));
    }
    let decoded: Vec<Result<(Vec<usize>, T)>> = (0..model.bands())
        .into_par_iter()
        .map(|n| viterbi_gmm(&coeffs.column(n), &model.chains[n]))
        .collect();
    assemble(decoded, model.levels, LabelKind::Gmm)
}

pub(crate) fn assemble<T: Scalar>(
    decoded: Vec<Result<(Vec<usize>, T)>>,
    levels: usize,
    kind: LabelKind,
) -> Result<LabelArray> {
    let bands = decoded.len();
    let mut labels = vec![0i32; levels * bands];
    let mut lls = Vec::with_capacity(bands);
    for (n, d) in decoded.into_iter().enumerate() {
        let (path, ll) = d.map_err(|e| Error::AtWavelength {
            index: n,
            source: Box::new(e),
        })?;
        for (s, &state) in path.iter().enumerate() {
            labels[s * bands + n] = state as i32;
        }
        lls.push(ll.as_f64());
    }
    LabelArray::new(levels, bands, labels, false, kind, lls)
}

pub fn label_spectrum<T: Scalar>(spectrum: &Spectrum, model: &NhmcModel<T>) -> Result<LabelArray> {
    let coeffs = spectrum_coeffs(spectrum, model)?;
    label_coeffs(&coeffs, model)
}

/// Multiplies each label by the sign of its coefficient (`sign(0) = +1`).
pub fn add_signs<T: Scalar>(labels: &LabelArray, coeffs: &CoeffMatrix<T>) -> Result<LabelArray> {
    if labels.signed {
        return Err(Error::Validation("labels already carry signs".into()));
    }
    if labels.levels != coeffs.levels() || labels.bands != coeffs.bands() {
        return Err(Error::Dimension(format!(
            "{}x{} labels with {}x{} coefficients",
            labels.levels,
            labels.bands,
            coeffs.levels(),
            coeffs.bands()
        )));
    }
    let signed = labels
        .labels
        .iter()
        .zip(coeffs.as_slice())
        .map(|(&l, &w)| if w < T::zero() { -l } else { l })
        .collect();
    Ok(LabelArray {
        labels: signed,
        signed: true,
        ..labels.clone()
    })
}

/// Drops the signs again.
pub fn strip_signs(labels: &LabelArray) -> LabelArray {
    LabelArray {
        labels: labels.labels.iter().map(|l| l.abs()).collect(),
        signed: false,
        ..labels.clone()
    }
}
