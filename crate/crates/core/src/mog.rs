//! Binary "small / large" chains obtained by collapsing a trained k-state
//! model.
//!
//! State 0 stays a single zero-mean Gaussian; states `1..k` merge into one
//! "large" state whose emission is their mixture, weighted by the state
//! marginals at that scale. The marginals `P_s` used for the mixture weights
//! and for the transition collapse come from propagating the initial
//! probabilities through the trained transition matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Spectrum;
use crate::error::{Error, Result};
use crate::labeling::{assemble, viterbi_log, LabelArray, LabelKind};
use crate::nhmc::{ChainParams, NhmcModel};
use crate::scalar::{ln_prob, log_normal_zero_mean, log_sum_exp, normal_zero_mean, sum_tol, Scalar};
use crate::wavelet::{uwt_with, CoeffMatrix, WaveletConfig};

const DISTRIBUTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MogChainParams<T> {
    levels: usize,
    initial: [T; 2],
    /// `levels - 1` matrices, `[child * 2 + parent]`.
    transitions: Vec<[T; 4]>,
    small_variance: Vec<T>,
    /// Per scale, `k - 1` normalized weights of the large-state mixture.
    large_weights: Vec<Vec<T>>,
    large_variances: Vec<Vec<T>>,
}

impl<T: Scalar> MogChainParams<T> {
    pub fn new(
        initial: [T; 2],
        transitions: Vec<[[T; 2]; 2]>,
        small_variance: Vec<T>,
        large_weights: Vec<Vec<T>>,
        large_variances: Vec<Vec<T>>,
    ) -> Result<Self> {
        let levels = small_variance.len();
        if levels == 0 || transitions.len() + 1 != levels {
            return Err(Error::Dimension(format!(
                "{} transition matrices for {levels} scales",
                transitions.len()
            )));
        }
        if large_weights.len() != levels || large_variances.len() != levels {
            return Err(Error::Dimension("large-state mixture needs one entry per scale".into()));
        }
        let width = large_weights.iter().map(Vec::len).max().unwrap_or(1);
        let tol = sum_tol::<T>(1e-12, width);
        if (initial[0] + initial[1] - T::one()).abs() > tol || initial.iter().any(|&q| q < T::zero()) {
            return Err(Error::Validation("binary initial probabilities must sum to 1".into()));
        }
        let transitions: Vec<[T; 4]> = transitions
            .into_iter()
            .map(|m| [m[0][0], m[0][1], m[1][0], m[1][1]])
            .collect();
        for (s, m) in transitions.iter().enumerate() {
            for p in 0..2 {
                if (m[p] + m[2 + p] - T::one()).abs() > tol {
                    return Err(Error::Validation(format!(
                        "binary transition column {p} at scale {} does not sum to 1",
                        s + 1
                    )));
                }
            }
        }
        for (w, v) in large_weights.iter().zip(&large_variances) {
            if w.is_empty() || w.len() != v.len() {
                return Err(Error::Dimension("mixture weights and variances differ in length".into()));
            }
            let total: T = w.iter().copied().sum();
            if (total - T::one()).abs() > tol {
                return Err(Error::Validation("mixture weights must sum to 1".into()));
            }
        }
        if small_variance
            .iter()
            .chain(large_variances.iter().flatten())
            .any(|&v| !(v > T::zero()))
        {
            return Err(Error::Validation("variances must be positive".into()));
        }
        Ok(Self {
            levels,
            initial,
            transitions,
            small_variance,
            large_weights,
            large_variances,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn initial(&self) -> [T; 2] {
        self.initial
    }

    /// `P(Z_scale = child | Z_{scale-1} = parent)`, `scale >= 1`.
    #[inline]
    pub fn transition(&self, scale: usize, parent: usize, child: usize) -> T {
        self.transitions[scale - 1][child * 2 + parent]
    }

    /// `[child][parent]` matrix entering `scale`.
    pub fn transition_matrix(&self, scale: usize) -> [[T; 2]; 2] {
        let m = self.transitions[scale - 1];
        [[m[0], m[1]], [m[2], m[3]]]
    }

    pub fn small_variance(&self, scale: usize) -> T {
        self.small_variance[scale]
    }

    pub fn large_weights(&self, scale: usize) -> &[T] {
        &self.large_weights[scale]
    }

    pub fn large_variances(&self, scale: usize) -> &[T] {
        &self.large_variances[scale]
    }

    /// State marginals `Q_s`, propagated through the binary transitions.
    pub fn marginals(&self) -> Vec<[T; 2]> {
        let mut out = vec![self.initial];
        for s in 1..self.levels {
            let prev = out[s - 1];
            let next = [
                self.transition(s, 0, 0) * prev[0] + self.transition(s, 1, 0) * prev[1],
                self.transition(s, 0, 1) * prev[0] + self.transition(s, 1, 1) * prev[1],
            ];
            out.push(next);
        }
        out
    }

    fn log_emission(&self, scale: usize, which: usize, w: T) -> T {
        if which == 0 {
            log_normal_zero_mean(w, self.small_variance[scale])
        } else {
            let terms: Vec<T> = self.large_weights[scale]
                .iter()
                .zip(&self.large_variances[scale])
                .map(|(&p, &v)| ln_prob(p) + log_normal_zero_mean(w, v))
                .collect();
            log_sum_exp(&terms)
        }
    }
}

fn check_distribution<T: Scalar>(p: &[T], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|&x| x < T::zero() || !x.is_finite()) {
        return Err(Error::Validation(format!("{what} is not a probability vector")));
    }
    let total: T = p.iter().copied().sum();
    if (total - T::one()).abs() > sum_tol::<T>(DISTRIBUTION_TOL, p.len()) {
        return Err(Error::Validation(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Binary state probabilities `(p_0, 1 - p_0)` from k-state probabilities.
pub fn collapse_state_probs<T: Scalar>(probs: &[T]) -> Result<[T; 2]> {
    check_distribution(probs, "state probability vector")?;
    if probs.len() == 2 {
        return Ok([probs[0], probs[1]]);
    }
    Ok([probs[0], T::one() - probs[0]])
}

/// Binary transition matrix `[child][parent]` from a k-state column-stochastic
/// matrix `a[child][parent]` and the parent-scale marginals `prev`.
///
/// Each output column is divided by its sum, which is 1 up to rounding for
/// valid inputs.
pub fn collapse_transitions<T: Scalar>(a: &[Vec<T>], prev: &[T]) -> Result<[[T; 2]; 2]> {
    let k = prev.len();
    if a.len() != k || a.iter().any(|r| r.len() != k) {
        return Err(Error::Dimension(format!("transition matrix must be {k}x{k}")));
    }
    check_distribution(prev, "parent-scale marginals")?;
    for p in 0..k {
        let column: Vec<T> = (0..k).map(|c| a[c][p]).collect();
        check_distribution(&column, &format!("transition column {p}"))?;
    }
    if k == 2 {
        return Ok([[a[0][0], a[0][1]], [a[1][0], a[1][1]]]);
    }
    let mass: T = prev[1..].iter().copied().sum();
    if !(mass > T::zero()) {
        return Err(Error::DegenerateMass(
            "parent scale puts no probability on the large states".into(),
        ));
    }
    let q00 = a[0][0];
    let q01: T = (1..k).map(|c| a[c][0]).sum();
    let q10: T = (1..k).map(|i| a[0][i] * prev[i]).sum::<T>() / mass;
    let q11: T = (1..k)
        .map(|i| prev[i] * (1..k).map(|j| a[j][i]).sum::<T>())
        .sum::<T>()
        / mass;
    let (z0, z1) = (q00 + q01, q10 + q11);
    Ok([[q00 / z0, q10 / z1], [q01 / z0, q11 / z1]])
}

/// Large-state density `sum_i p_i N(w; 0, v_i) / sum_i p_i` over states `i >= 1`
/// of a k-state scale with probabilities `probs` and variances `variances`.
pub fn large_state_density<T: Scalar>(w: T, probs: &[T], variances: &[T]) -> Result<T> {
    if probs.len() != variances.len() || probs.len() < 2 {
        return Err(Error::Dimension("need matching probabilities and variances, k >= 2".into()));
    }
    let mass: T = probs[1..].iter().copied().sum();
    if !(mass > T::zero()) {
        return Err(Error::DegenerateMass("no probability on the large states".into()));
    }
    let weighted: T = probs[1..]
        .iter()
        .zip(&variances[1..])
        .map(|(&p, &v)| p * normal_zero_mean(w, v))
        .sum();
    Ok(weighted / mass)
}

/// `p(w | Z_scale = which)` under a collapsed chain.
pub fn mog_conditional_pdf<T: Scalar>(w: T, scale: usize, which: usize, params: &MogChainParams<T>) -> Result<T> {
    if scale >= params.levels || which > 1 {
        return Err(Error::Validation(format!(
            "no state {which} at scale {scale} in a {}-scale chain",
            params.levels
        )));
    }
    Ok(params.log_emission(scale, which, w).exp())
}

/// Collapses one k-state chain. The second value lists the scales where the
/// large-state mass vanished and a uniform column was substituted.
pub fn collapse_chain<T: Scalar>(params: &ChainParams<T>) -> Result<(MogChainParams<T>, Vec<String>)> {
    let k = params.k();
    let levels = params.levels();
    if k < 2 {
        return Err(Error::Validation("collapse needs at least two states".into()));
    }
    let marginals = params.marginals();
    let mut warnings = Vec::new();
    let initial = collapse_state_probs(&marginals[0])?;
    let half = T::of(0.5);
    let mut transitions = Vec::with_capacity(levels - 1);
    for s in 1..levels {
        let b = match collapse_transitions(&params.transition_matrix(s), &marginals[s - 1]) {
            Ok(b) => b,
            Err(Error::DegenerateMass(_)) => {
                warnings.push(format!("scale {}: no large-state mass, uniform column used", s + 1));
                let a = params.transition_matrix(s);
                let q00 = a[0][0];
                let q01: T = (1..k).map(|c| a[c][0]).sum();
                let z = q00 + q01;
                [[q00 / z, half], [q01 / z, half]]
            }
            Err(e) => return Err(e),
        };
        transitions.push(b);
    }
    let mut large_weights = Vec::with_capacity(levels);
    for (s, p) in marginals.iter().enumerate() {
        let mass: T = p[1..].iter().copied().sum();
        if mass > T::zero() {
            large_weights.push(p[1..].iter().map(|&v| v / mass).collect());
        } else {
            warnings.push(format!("scale {}: no large-state mass, equal mixture weights used", s + 1));
            large_weights.push(vec![T::one() / T::of((k - 1) as f64); k - 1]);
        }
    }
    let small_variance = (0..levels).map(|s| params.variance(s, 0)).collect();
    let large_variances = (0..levels)
        .map(|s| params.variances_at(s)[1..].to_vec())
        .collect();
    let mog = MogChainParams::new(initial, transitions, small_variance, large_weights, large_variances)?;
    Ok((mog, warnings))
}

/// Collapsed counterpart of [`NhmcModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MogModel<T> {
    /// State count of the source model.
    pub k: usize,
    pub levels: usize,
    pub wavelet: WaveletConfig,
    pub grid: Vec<f64>,
    pub chains: Vec<MogChainParams<T>>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> MogModel<T> {
    pub fn bands(&self) -> usize {
        self.chains.len()
    }
}

pub fn collapse_model<T: Scalar>(model: &NhmcModel<T>) -> Result<MogModel<T>> {
    let collapsed: Vec<Result<(MogChainParams<T>, Vec<String>)>> =
        model.chains.par_iter().map(collapse_chain).collect();
    let mut chains = Vec::with_capacity(collapsed.len());
    let mut warnings = Vec::new();
    for (n, c) in collapsed.into_iter().enumerate() {
        let (chain, w) = c.map_err(|e| Error::AtWavelength {
            index: n,
            source: Box::new(e),
        })?;
        warnings.extend(w.into_iter().map(|w| format!("wavelength {n}: {w}")));
        chains.push(chain);
    }
    Ok(MogModel {
        k: model.k,
        levels: model.levels,
        wavelet: model.wavelet,
        grid: model.grid.clone(),
        chains,
        warnings,
    })
}

/// Binary Viterbi path under a collapsed chain and its joint log-probability.
pub fn viterbi_mog<T: Scalar>(chain: &[T], params: &MogChainParams<T>) -> Result<(Vec<usize>, T)> {
    let levels = params.levels;
    if chain.len() != levels {
        return Err(Error::Dimension(format!(
            "chain of length {} for a {levels}-scale model",
            chain.len()
        )));
    }
    if chain.iter().any(|w| !w.is_finite()) {
        return Err(Error::Validation("chain contains non-finite coefficients".into()));
    }
    let log_initial = [ln_prob(params.initial[0]), ln_prob(params.initial[1])];
    let log_emit: Vec<T> = (0..levels)
        .flat_map(|s| (0..2).map(move |z| params.log_emission(s, z, chain[s])))
        .collect();
    Ok(viterbi_log(
        2,
        levels,
        &log_initial,
        |s, p, c| ln_prob(params.transition(s, p, c)),
        &log_emit,
    ))
}

pub fn label_coeffs_mog<T: Scalar>(coeffs: &CoeffMatrix<T>, model: &MogModel<T>) -> Result<LabelArray> {
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
        .map(|n| viterbi_mog(&coeffs.column(n), &model.chains[n]))
        .collect();
    assemble(decoded, model.levels, LabelKind::Mog)
}

pub fn spectrum_coeffs_mog<T: Scalar>(spectrum: &Spectrum, model: &MogModel<T>) -> Result<CoeffMatrix<T>> {
    if spectrum.wavelengths != model.grid {
        return Err(Error::Validation(format!(
            "spectrum {} is not on the model grid",
            spectrum.sample_id
        )));
    }
    let signal: Vec<T> = spectrum.reflectance.iter().map(|&r| T::of(r)).collect();
    uwt_with(&signal, &model.wavelet)
}

pub fn label_spectrum_mog<T: Scalar>(spectrum: &Spectrum, model: &MogModel<T>) -> Result<LabelArray> {
    let coeffs = spectrum_coeffs_mog(spectrum, model)?;
    label_coeffs_mog(&coeffs, model)
}
