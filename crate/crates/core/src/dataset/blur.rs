//! Spatial Gaussian blur of a library laid out as a randomly ordered datacube.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SpectralLibrary, Spectrum};
use crate::error::{Error, Result};

const CENTER_TOL: f64 = 1e-12;
const VARIANCE_LO: f64 = 1e-6;
const VARIANCE_HI: f64 = 1e3;

/// 3x3 kernel; `weights[1][1]` is the centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlurKernel {
    pub weights: [[f64; 3]; 3],
    pub dmp: f64,
}

impl BlurKernel {
    pub fn center(&self) -> f64 {
        self.weights[1][1]
    }

    fn delta() -> Self {
        let mut weights = [[0.0; 3]; 3];
        weights[1][1] = 1.0;
        Self { weights, dmp: 1.0 }
    }
}

fn gaussian_kernel(variance: f64) -> [[f64; 3]; 3] {
    let mut w = [[0.0; 3]; 3];
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = ((i as f64 - 1.0).powi(2) + (j as f64 - 1.0).powi(2)) / (2.0 * variance);
            *v = (-d2).exp();
        }
    }
    let total: f64 = w.iter().flatten().sum();
    for v in w.iter_mut().flatten() {
        *v /= total;
    }
    w
}

/// Solves for the Gaussian variance whose normalized centre weight is `dmp`.
pub fn dmp_to_kernel(dmp: f64) -> Result<BlurKernel> {
    if !(dmp > 1.0 / 9.0 && dmp <= 1.0) {
        return Err(Error::Domain(format!("dmp {dmp} outside (1/9, 1]")));
    }
    if dmp == 1.0 {
        return Ok(BlurKernel::delta());
    }
    let center = |v: f64| gaussian_kernel(v)[1][1];
    let mut lo = VARIANCE_LO;
    let mut hi = VARIANCE_HI;
    // Centres close to 1/9 need wider Gaussians than the default bracket.
    while center(hi) > dmp {
        hi *= 10.0;
        if !hi.is_finite() {
            return Err(Error::Domain(format!("dmp {dmp} too close to 1/9")));
        }
    }
    if center(lo) < dmp {
        lo = 0.0;
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..500 {
        mid = 0.5 * (lo + hi);
        let c = center(mid.max(f64::MIN_POSITIVE));
        if (c - dmp).abs() <= CENTER_TOL {
            break;
        }
        // Centre weight falls as the variance grows.
        if c > dmp {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(BlurKernel {
        weights: gaussian_kernel(mid.max(f64::MIN_POSITIVE)),
        dmp,
    })
}

/// Near-square datacube shape `(rows, cols)` holding at least `m` cells.
pub(crate) fn cube_shape(m: usize) -> (usize, usize) {
    let cols = (m as f64).sqrt().ceil() as usize;
    let cols = cols.max(1);
    let rows = m.div_ceil(cols);
    (rows, cols)
}

/// Layout of a library on the datacube: cell -> spectrum index.
pub(crate) fn cube_layout(m: usize, seed: u64) -> (usize, usize, Vec<usize>) {
    let (rows, cols) = cube_shape(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<usize> = (0..m).collect();
    cells.shuffle(&mut rng);
    cells.extend((m..rows * cols).map(|_| rng.random_range(0..m)));
    (rows, cols, cells)
}

/// Blurs every wavelength plane of a seeded random datacube with the DMP
/// kernel (toroidal edges). Output spectra keep their ids, labels and order.
pub fn blur_library(lib: &SpectralLibrary, dmp: f64, seed: u64) -> Result<SpectralLibrary> {
    let kernel = dmp_to_kernel(dmp)?;
    if dmp == 1.0 {
        return Ok(lib.clone());
    }
    let m = lib.len();
    let bands = lib.grid.len();
    let (rows, cols, cells) = cube_layout(m, seed);
    let src = &lib.spectra;

    // Each of the first m cells holds spectrum `cells[c]`; blur those cells.
    let blurred: Vec<(usize, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|c| {
            let (r, q) = (c / cols, c % cols);
            let mut out = vec![0.0; bands];
            for (di, krow) in kernel.weights.iter().enumerate() {
                for (dj, &w) in krow.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let rr = (r + rows + di - 1) % rows;
                    let qq = (q + cols + dj - 1) % cols;
                    let neighbour = &src[cells[rr * cols + qq]].reflectance;
                    for (o, v) in out.iter_mut().zip(neighbour) {
                        *o += w * v;
                    }
                }
            }
            (cells[c], out)
        })
        .collect();

    let mut spectra: Vec<Spectrum> = src.clone();
    for (idx, reflectance) in blurred {
        spectra[idx].reflectance = reflectance;
    }
    SpectralLibrary::new(lib.grid.clone(), spectra, lib.class_names.clone())
}
