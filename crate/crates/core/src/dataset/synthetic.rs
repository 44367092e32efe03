//! Synthetic reflectance libraries: a sloped continuum with Gaussian
//! absorption dips at class-specific centres.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{uniform_grid, SpectralLibrary, Spectrum};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub per_class: usize,
    pub range: (f64, f64),
    pub step: f64,
    /// All dip centres are spread evenly over this interval, interleaved
    /// across classes.
    pub center_span: (f64, f64),
    pub dips_per_class: usize,
    /// Gaussian dip standard deviation range in micrometres.
    pub width: (f64, f64),
    pub depth: (f64, f64),
    /// Continuum level range.
    pub level: (f64, f64),
    /// Continuum slopes are drawn from `[-slope, slope]` per micrometre.
    pub slope: f64,
    /// Per-spectrum uniform jitter of the dip centre, micrometres.
    pub center_jitter: f64,
    /// Additive white noise standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            per_class: 20,
            range: (0.35, 2.6),
            step: 0.005,
            center_span: (0.6, 2.35),
            dips_per_class: 3,
            width: (0.025, 0.035),
            depth: (0.35, 0.5),
            level: (0.55, 0.85),
            slope: 0.02,
            center_jitter: 0.005,
            noise: 0.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLibrary {
    pub library: SpectralLibrary,
    /// Nominal dip centres per class id, ascending.
    pub dip_centers: BTreeMap<usize, Vec<f64>>,
    /// Actual dip centres per sample id.
    pub sample_dips: BTreeMap<String, Vec<f64>>,
}

impl SyntheticConfig {
    pub fn class_centers(&self, class_id: usize) -> Vec<f64> {
        let (lo, hi) = self.center_span;
        let total = self.classes * self.dips_per_class;
        (0..self.dips_per_class)
            .map(|j| {
                if total == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * (j * self.classes + class_id) as f64 / (total - 1) as f64
                }
            })
            .collect()
    }
}

pub fn synthetic_library(config: &SyntheticConfig) -> Result<SyntheticLibrary> {
    if config.classes == 0 || config.per_class == 0 || config.dips_per_class == 0 {
        return Err(Error::Config(
            "synthetic library needs at least one class, spectrum and dip".into(),
        ));
    }
    if config.width.0 <= 0.0 || config.width.1 < config.width.0 || config.depth.1 < config.depth.0 {
        return Err(Error::Config("synthetic dip width/depth ranges are inverted or non-positive".into()));
    }
    if config.level.0 <= 0.0 || config.level.1 < config.level.0 || config.slope < 0.0 {
        return Err(Error::Config("synthetic continuum level/slope ranges are invalid".into()));
    }
    if !(config.depth.1 < 1.0) || config.depth.0 < 0.0 || config.noise < 0.0 {
        return Err(Error::Config("synthetic dip depth must lie in [0, 1) and noise must be >= 0".into()));
    }
    let grid = uniform_grid(config.range.0, config.range.1, config.step)?;
    let mid = 0.5 * (config.range.0 + config.range.1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut spectra = Vec::with_capacity(config.classes * config.per_class);
    let mut dip_centers = BTreeMap::new();
    let mut sample_dips = BTreeMap::new();
    for class_id in 0..config.classes {
        let nominal = config.class_centers(class_id);
        dip_centers.insert(class_id, nominal.clone());
        for j in 0..config.per_class {
            let level = if config.level.1 > config.level.0 {
                rng.random_range(config.level.0..config.level.1)
            } else {
                config.level.0
            };
            let slope = if config.slope > 0.0 {
                rng.random_range(-config.slope..config.slope)
            } else {
                0.0
            };
            let dips: Vec<(f64, f64, f64)> = nominal
                .iter()
                .map(|&c| {
                    let center = c + rng.random_range(-1.0..=1.0) * config.center_jitter;
                    let sigma = rng.random_range(config.width.0..=config.width.1);
                    let depth = rng.random_range(config.depth.0..=config.depth.1);
                    (center, sigma, depth)
                })
                .collect();
            let reflectance = grid
                .iter()
                .map(|&w| {
                    let continuum = level + slope * (w - mid);
                    let absorbed = dips.iter().fold(1.0, |acc, &(c, sigma, depth)| {
                        acc * (1.0 - depth * (-(w - c).powi(2) / (2.0 * sigma * sigma)).exp())
                    });
                    let n = if config.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    (continuum * absorbed + n).max(0.0)
                })
                .collect();
            let sample_id = format!("syn{class_id:02}-{j:03}");
            sample_dips.insert(sample_id.clone(), dips.iter().map(|d| d.0).collect());
            spectra.push(Spectrum::new(sample_id, class_id, grid.clone(), reflectance)?);
        }
    }
    let names = (0..config.classes).map(|c| (c, format!("synthetic_{c:02}"))).collect();
    Ok(SyntheticLibrary {
        library: SpectralLibrary::new(grid, spectra, names)?,
        dip_centers,
        sample_dips,
    })
}
