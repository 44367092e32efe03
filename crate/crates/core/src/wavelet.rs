//! Undecimated wavelet transform of a spectrum.
//!
//! Coefficients are stored in an `L x N` matrix with row 0 holding the
//! coarsest scale and row `L - 1` the finest. The dilation of row `r` is
//! `2^(L - r)`, so the default nine levels span supports `512, 256, ..., 2`.
//!
//! The Haar analysis is evaluated as literal inner products with the sampled
//! dilated wavelet: `+1/sqrt(l)` over the `l/2` samples before the offset,
//! `-1/sqrt(l)` over the `l/2` samples starting at it. A locally decreasing
//! signal therefore gives positive coefficients. Samples outside `0..N` come
//! from half-point symmetric extension (`x[-1] = x[0]`, `x[N] = x[N-1]`).

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default number of scales.
pub const DEFAULT_LEVELS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wavelet {
    Haar,
    /// Eight-tap Daubechies filter pair, only for visual comparison.
    Db4,
}

impl FromStr for Wavelet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" => Ok(Wavelet::Haar),
            "db4" => Ok(Wavelet::Db4),
            other => Err(Error::Validation(format!("unknown wavelet `{other}`"))),
        }
    }
}

/// Row ordering of a [`CoeffMatrix`]. Only one convention exists; the tag is
/// kept so exported matrices are self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleOrder {
    #[default]
    CoarseFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveletConfig {
    pub wavelet: Wavelet,
    pub levels: usize,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            wavelet: Wavelet::Haar,
            levels: DEFAULT_LEVELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffMatrix<T> {
    values: Vec<T>,
    levels: usize,
    bands: usize,
    wavelet: Wavelet,
    scale_order: ScaleOrder,
}

impl<T: Scalar> CoeffMatrix<T> {
    /// Wraps a row-major `levels x bands` buffer.
    pub fn from_rows(values: Vec<T>, levels: usize, bands: usize, wavelet: Wavelet) -> Result<Self> {
        if values.len() != levels * bands {
            return Err(Error::Dimension(format!(
                "{} values for a {levels}x{bands} coefficient matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite wavelet coefficient".into()));
        }
        Ok(Self {
            values,
            levels,
            bands,
            wavelet,
            scale_order: ScaleOrder::CoarseFirst,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn wavelet(&self) -> Wavelet {
        self.wavelet
    }

    pub fn scale_order(&self) -> ScaleOrder {
        self.scale_order
    }

    /// Coefficient at row `row` (0 = coarsest) and band `band`.
    #[inline]
    pub fn get(&self, row: usize, band: usize) -> T {
        self.values[row * self.bands + band]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.bands..(row + 1) * self.bands]
    }

    /// The coarse-to-fine chain of coefficients sharing offset `band`.
    pub fn column(&self, band: usize) -> Vec<T> {
        (0..self.levels).map(|r| self.get(r, band)).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    /// Writes `levels` lines of `bands` comma-separated values, coarsest first.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in 0..self.levels {
            let line: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Dilation (support length) of coefficient row `row` for `levels` scales.
pub fn dilation(levels: usize, row: usize) -> usize {
    1usize << (levels - row)
}

/// Half-point symmetric reflection of `i` into `0..n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Undecimated wavelet transform of `signal` with `levels` scales.
pub fn uwt<T: Scalar>(signal: &[T], levels: usize, wavelet: Wavelet) -> Result<CoeffMatrix<T>> {
    let n = signal.len();
    if levels == 0 {
        return Err(Error::Dimension("at least one scale is required".into()));
    }
    if levels > n || levels >= usize::BITS as usize || (1usize << (levels - 1)) > n {
        return Err(Error::Dimension(format!(
            "{n} bands cannot hold the half-support 2^{} of {levels} scales",
            levels - 1
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("signal contains non-finite values".into()));
    }
    let values = match wavelet {
        Wavelet::Haar => haar_direct(signal, levels),
        Wavelet::Db4 => a_trous(signal, levels, &DB4_LO, &DB4_HI),
    };
    CoeffMatrix::from_rows(values, levels, n, wavelet)
}

pub fn uwt_with<T: Scalar>(signal: &[T], config: &WaveletConfig) -> Result<CoeffMatrix<T>> {
    uwt(signal, config.levels, config.wavelet)
}

fn haar_direct<T: Scalar>(signal: &[T], levels: usize) -> Vec<T> {
    let n = signal.len();
    let mut out = Vec::with_capacity(levels * n);
    for row in 0..levels {
        let l = dilation(levels, row);
        let half = (l / 2) as isize;
        let norm = T::of(l as f64).sqrt().recip();
        for offset in 0..n as isize {
            let mut lead = T::zero();
            for t in offset - half..offset {
                lead = lead + signal[reflect(t, n)];
            }
            let mut trail = T::zero();
            for t in offset..offset + half {
                trail = trail + signal[reflect(t, n)];
            }
            out.push((lead - trail) * norm);
        }
    }
    out
}

const DB4_LO: [f64; 8] = [
    -0.010597401784997278,
    0.032883011666982945,
    0.030841381835986965,
    -0.18703481171888114,
    -0.02798376941698385,
    0.6308807679295904,
    0.7148465705525415,
    0.23037781330885523,
];

const DB4_HI: [f64; 8] = [
    -0.23037781330885523,
    0.7148465705525415,
    -0.6308807679295904,
    -0.02798376941698385,
    0.18703481171888114,
    0.030841381835986965,
    -0.032883011666982945,
    -0.010597401784997278,
];

/// Stationary (a trous) filter-bank cascade with centred taps. Returns rows
/// coarsest first to match the Haar layout.
pub(crate) fn a_trous<T: Scalar>(signal: &[T], levels: usize, lo: &[f64], hi: &[f64]) -> Vec<T> {
    let n = signal.len();
    let lo: Vec<T> = lo.iter().map(|&v| T::of(v)).collect();
    let hi: Vec<T> = hi.iter().map(|&v| T::of(v)).collect();
    let centre = (lo.len() / 2) as isize;
    let mut approx = signal.to_vec();
    let mut details: Vec<Vec<T>> = Vec::with_capacity(levels);
    for level in 0..levels {
        let step = 1isize << level;
        let mut next = vec![T::zero(); n];
        let mut detail = vec![T::zero(); n];
        for i in 0..n as isize {
            let mut a = T::zero();
            let mut d = T::zero();
            for (t, (&h, &g)) in lo.iter().zip(hi.iter()).enumerate() {
                let x = approx[reflect(i + (t as isize - centre) * step, n)];
                a = a + h * x;
                d = d + g * x;
            }
            next[i as usize] = a;
            detail[i as usize] = d;
        }
        approx = next;
        details.push(detail);
    }
    details.into_iter().rev().flatten().collect()
}
