//! Spectral similarity measures between reflectance vectors.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Offset, as a fraction of the largest band, added to every band before SID
/// normalization so zero reflectance does not produce `ln 0`.
pub const SID_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralMeasure {
    /// Spectral angle, radians in `[0, pi]`.
    Sam,
    /// Euclidean distance.
    Ed,
    /// Pearson correlation across bands, in `[-1, 1]`; larger is more similar.
    Scm,
    /// Symmetric relative entropy of the band-normalized spectra.
    Sid,
}

impl SpectralMeasure {
    /// True when larger values mean more similar spectra.
    pub fn is_similarity(self) -> bool {
        matches!(self, SpectralMeasure::Scm)
    }
}

impl FromStr for SpectralMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sam" => Ok(Self::Sam),
            "ed" => Ok(Self::Ed),
            "scm" => Ok(Self::Scm),
            "sid" => Ok(Self::Sid),
            other => Err(Error::Validation(format!("unknown spectral measure `{other}`"))),
        }
    }
}

fn check_pair<T: Scalar>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "spectra of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Dimension("spectra need at least two bands".into()));
    }
    Ok(())
}

pub fn spectral_distance<T: Scalar>(a: &[T], b: &[T], measure: SpectralMeasure) -> Result<T> {
    check_pair(a, b)?;
    match measure {
        SpectralMeasure::Sam => sam(a, b),
        SpectralMeasure::Ed => Ok(ed(a, b)),
        SpectralMeasure::Scm => scm(a, b),
        SpectralMeasure::Sid => sid(a, b),
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sam<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    let na = dot(a, a);
    let nb = dot(b, b);
    if na == T::zero() || nb == T::zero() {
        return Err(Error::Domain("spectral angle of a zero vector".into()));
    }
    let cos = dot(a, b) / (na * nb).sqrt();
    Ok(cos.max(-T::one()).min(T::one()).acos())
}

fn ed<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

fn scm<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    let n = T::of(a.len() as f64);
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return Err(Error::Domain("spectral correlation of a constant vector".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).max(-T::one()).min(T::one()))
}

fn band_distribution<T: Scalar>(r: &[T]) -> Result<Vec<T>> {
    // Relative to the largest band so that scaling the input scales the
    // shift too and the distribution is unchanged.
    let max = r.iter().copied().fold(T::zero(), T::max);
    let eps = T::of(SID_EPSILON) * max;
    let shifted: Vec<T> = r.iter().map(|&v| v + eps).collect();
    if !(max > T::zero()) || shifted.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::Domain(
            "spectral information divergence needs positive reflectance".into(),
        ));
    }
    let total: T = shifted.iter().copied().sum();
    Ok(shifted.into_iter().map(|v| v / total).collect())
}

fn sid<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    let p = band_distribution(a)?;
    let q = band_distribution(b)?;
    // D(p||q) + D(q||p) = sum (p - q)(ln p - ln q); the combined form is
    // exactly symmetric and never negative term by term.
    let d = p
        .iter()
        .zip(&q)
        .map(|(&pi, &qi)| (pi - qi) * (pi.ln() - qi.ln()))
        .sum::<T>();
    Ok(d.max(T::zero()))
}
