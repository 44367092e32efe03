//! Readable summaries of signed binary label arrays, and the fine-scale
//! coefficient sum used as a baseline feature.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::LabelArray;
use crate::scalar::Scalar;
use crate::wavelet::CoeffMatrix;

/// Slope orientation of a wavelength, from its mean label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopeTag {
    Flat,
    /// Mean label +1 (positive Haar coefficients).
    Decreasing,
    /// Mean label -1.
    Increasing,
}

impl SlopeTag {
    pub fn from_mean(v: i8) -> Self {
        match v.signum() {
            1 => SlopeTag::Decreasing,
            -1 => SlopeTag::Increasing,
            _ => SlopeTag::Flat,
        }
    }

    /// Plot colour: green flat, red decreasing, blue increasing.
    pub fn color(self) -> &'static str {
        match self {
            SlopeTag::Flat => "green",
            SlopeTag::Decreasing => "red",
            SlopeTag::Increasing => "blue",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SlopeTag::Flat => "flat",
            SlopeTag::Decreasing => "decreasing",
            SlopeTag::Increasing => "increasing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticSummary {
    pub mean_vector: Vec<i8>,
    pub band_locations: Vec<f64>,
    pub coloring: Vec<SlopeTag>,
    /// Pairing rule used for band detection; zeros between a `+1` run and a
    /// `-1` run are bridged.
    pub band_rule: String,
}

/// Column means over scales, rounded half away from zero.
pub fn label_mean_vector(labels: &LabelArray) -> Result<Vec<i8>> {
    if !labels.is_signed() {
        return Err(Error::Validation("mean vector needs sign-augmented labels".into()));
    }
    if labels.as_slice().iter().any(|l| !(-1..=1).contains(l)) {
        return Err(Error::Validation("mean vector needs binary labels in {-1, 0, 1}".into()));
    }
    let levels = labels.levels() as f64;
    Ok((0..labels.bands())
        .map(|n| {
            let total: i32 = (0..labels.levels()).map(|r| labels.get(r, n)).sum();
            (total as f64 / levels).round() as i8
        })
        .collect())
}

/// Midpoints between the last `+1` of a run and the first `-1` that follows
/// it, with only zeros in between.
pub fn absorption_bands(mean_vector: &[i8], grid: &[f64]) -> Result<Vec<f64>> {
    if mean_vector.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "mean vector of length {} on a {}-point grid",
            mean_vector.len(),
            grid.len()
        )));
    }
    let mut bands = Vec::new();
    let mut last_plus: Option<usize> = None;
    for (i, &v) in mean_vector.iter().enumerate() {
        match v {
            1 => last_plus = Some(i),
            -1 => {
                if let Some(p) = last_plus.take() {
                    bands.push(0.5 * (grid[p] + grid[i]));
                }
            }
            0 => {}
            other => {
                return Err(Error::Validation(format!("mean vector value {other} outside {{-1, 0, 1}}")))
            }
        }
    }
    Ok(bands)
}

pub fn summarize(labels: &LabelArray, grid: &[f64]) -> Result<SemanticSummary> {
    let mean_vector = label_mean_vector(labels)?;
    let band_locations = absorption_bands(&mean_vector, grid)?;
    let coloring = mean_vector.iter().map(|&v| SlopeTag::from_mean(v)).collect();
    Ok(SemanticSummary {
        mean_vector,
        band_locations,
        coloring,
        band_rule: "bridged-zeros".into(),
    })
}

impl SemanticSummary {
    /// `wavelength,reflectance,tag,color` rows for plotting.
    pub fn write_colored_csv<W: Write>(&self, grid: &[f64], reflectance: &[f64], mut out: W) -> Result<()> {
        if grid.len() != self.coloring.len() || reflectance.len() != grid.len() {
            return Err(Error::Dimension("grid, reflectance and coloring differ in length".into()));
        }
        let io = |e| Error::io("<colored csv>", e);
        writeln!(out, "wavelength_um,reflectance,tag,color").map_err(io)?;
        for ((w, r), tag) in grid.iter().zip(reflectance).zip(&self.coloring) {
            writeln!(out, "{w:.6},{r},{},{}", tag.as_str(), tag.color()).map_err(io)?;
        }
        Ok(())
    }
}

/// The finest four scales (1-based rows `L-3..=L`), or all of them when
/// fewer exist.
pub fn default_lcp_scales(levels: usize) -> Vec<usize> {
    (levels.saturating_sub(3).max(1)..=levels).collect()
}

/// Per-wavelength sum of the coefficients on the given 1-based scale rows.
pub fn rivard_lcp<T: Scalar>(coeffs: &CoeffMatrix<T>, scales: &[usize]) -> Result<Vec<T>> {
    if scales.is_empty() {
        return Err(Error::Validation("no scales selected for the LCP sum".into()));
    }
    if let Some(&bad) = scales.iter().find(|&&s| s == 0 || s > coeffs.levels()) {
        return Err(Error::Validation(format!(
            "scale {bad} outside 1..={}",
            coeffs.levels()
        )));
    }
    Ok((0..coeffs.bands())
        .map(|n| scales.iter().map(|&s| coeffs.get(s - 1, n)).sum())
        .collect())
}
