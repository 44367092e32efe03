use rayon::prelude::*;

use super::{FeatureKind, FeatureSet};
use crate::dataset::{SpectralLibrary, Spectrum};
use crate::error::{Error, Result};
use crate::labeling::{add_signs, label_coeffs};
use crate::mog::{label_coeffs_mog, MogModel};
use crate::nhmc::NhmcModel;
use crate::semantics::rivard_lcp;
use crate::wavelet::{uwt_with, WaveletConfig};

/// Everything feature extraction may need. Label features require the
/// matching model; the others only use the wavelet settings.
#[derive(Debug, Clone)]
pub struct FeatureContext<'a> {
    pub wavelet: WaveletConfig,
    pub nhmc: Option<&'a NhmcModel<f64>>,
    pub mog: Option<&'a MogModel<f64>>,
    /// 1-based scale rows summed by the Rivard feature.
    pub lcp_scales: Vec<usize>,
}

impl<'a> FeatureContext<'a> {
    pub fn new(wavelet: WaveletConfig) -> Self {
        Self {
            lcp_scales: crate::semantics::default_lcp_scales(wavelet.levels),
            wavelet,
            nhmc: None,
            mog: None,
        }
    }
}

fn spectrum_features(s: &Spectrum, kind: FeatureKind, ctx: &FeatureContext<'_>) -> Result<Vec<f64>> {
    if kind == FeatureKind::Spectrum {
        return Ok(s.reflectance.clone());
    }
    let coeffs = uwt_with(&s.reflectance, &ctx.wavelet)?;
    match kind {
        FeatureKind::Spectrum => unreachable!(),
        FeatureKind::Coeffs => Ok(coeffs.as_slice().to_vec()),
        FeatureKind::Rivard => rivard_lcp(&coeffs, &ctx.lcp_scales),
        FeatureKind::GmmLabels | FeatureKind::GmmSign => {
            let model = ctx
                .nhmc
                .ok_or_else(|| Error::Config(format!("{kind} features need a trained model")))?;
            check_grid(s, &model.grid)?;
            let labels = label_coeffs(&coeffs, model)?;
            if kind == FeatureKind::GmmSign {
                Ok(add_signs(&labels, &coeffs)?.flatten())
            } else {
                Ok(labels.flatten())
            }
        }
        FeatureKind::MogLabels | FeatureKind::MogSign => {
            let model = ctx
                .mog
                .ok_or_else(|| Error::Config(format!("{kind} features need a collapsed model")))?;
            check_grid(s, &model.grid)?;
            let labels = label_coeffs_mog(&coeffs, model)?;
            if kind == FeatureKind::MogSign {
                Ok(add_signs(&labels, &coeffs)?.flatten())
            } else {
                Ok(labels.flatten())
            }
        }
    }
}

fn check_grid(s: &Spectrum, grid: &[f64]) -> Result<()> {
    if s.wavelengths != grid {
        return Err(Error::Validation(format!(
            "spectrum {} is not on the model grid",
            s.sample_id
        )));
    }
    Ok(())
}

/// Feature vectors for every spectrum of `lib`, in library order.
pub fn extract_features(lib: &SpectralLibrary, kind: FeatureKind, ctx: &FeatureContext<'_>) -> Result<FeatureSet> {
    let vectors = lib
        .spectra()
        .par_iter()
        .map(|s| spectrum_features(s, kind, ctx))
        .collect::<Result<Vec<_>>>()?;
    let class_ids = lib.spectra().iter().map(|s| s.class_id).collect();
    FeatureSet::new(vectors, class_ids, kind)
}
