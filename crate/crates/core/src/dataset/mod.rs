//! Spectral libraries: loading, resampling, class balancing and splitting.
//!
//! CSV layout: a header `sample_id,class,<w1>,...,<wN>` with wavelengths in
//! micrometres printed to six decimals, then one row per spectrum. The class
//! column holds a non-negative integer class id. Rows are written sorted by
//! class id, then sample id.

mod blur;
pub mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use blur::{blur_library, dmp_to_kernel, BlurKernel};

/// Tolerance used when comparing grid endpoints.
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub sample_id: String,
    pub class_id: usize,
    /// Band centres in micrometres, strictly increasing.
    pub wavelengths: Vec<f64>,
    pub reflectance: Vec<f64>,
}

impl Spectrum {
    pub fn new(sample_id: impl Into<String>, class_id: usize, wavelengths: Vec<f64>, reflectance: Vec<f64>) -> Result<Self> {
        let s = Self {
            sample_id: sample_id.into(),
            class_id,
            wavelengths,
            reflectance,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.sample_id;
        if self.wavelengths.len() != self.reflectance.len() {
            return Err(Error::Validation(format!(
                "{id}: {} wavelengths but {} reflectance values",
                self.wavelengths.len(),
                self.reflectance.len()
            )));
        }
        check_increasing(&self.wavelengths).map_err(|m| Error::Validation(format!("{id}: {m}")))?;
        if let Some(v) = self.reflectance.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Validation(format!(
                "{id}: reflectance {v} is not a finite non-negative value"
            )));
        }
        Ok(())
    }

    pub fn max_reflectance(&self) -> f64 {
        self.reflectance.iter().copied().fold(0.0, f64::max)
    }
}

fn check_increasing(w: &[f64]) -> std::result::Result<(), String> {
    if w.is_empty() {
        return Err("empty wavelength grid".into());
    }
    if let Some(i) = w.windows(2).position(|p| !(p[1] > p[0])) {
        return Err(format!(
            "wavelengths not strictly increasing at position {} ({} then {})",
            i + 1,
            w[i],
            w[i + 1]
        ));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err("non-finite wavelength".into());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralLibrary {
    grid: Vec<f64>,
    spectra: Vec<Spectrum>,
    class_names: BTreeMap<usize, String>,
}

pub fn default_class_name(id: usize) -> String {
    format!("class_{id}")
}

impl SpectralLibrary {
    pub fn new(grid: Vec<f64>, spectra: Vec<Spectrum>, class_names: BTreeMap<usize, String>) -> Result<Self> {
        check_increasing(&grid).map_err(Error::Validation)?;
        let mut seen = HashSet::new();
        for s in &spectra {
            s.validate()?;
            if s.wavelengths != grid {
                return Err(Error::Validation(format!(
                    "{} is not sampled on the library grid",
                    s.sample_id
                )));
            }
            if !class_names.contains_key(&s.class_id) {
                return Err(Error::Validation(format!(
                    "{}: unknown class {}",
                    s.sample_id, s.class_id
                )));
            }
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::Validation(format!("duplicate sample id {}", s.sample_id)));
            }
        }
        for (id, name) in &class_names {
            if !spectra.iter().any(|s| s.class_id == *id) {
                return Err(Error::Validation(format!("class {id} ({name}) has no spectra")));
            }
        }
        Ok(Self {
            grid,
            spectra,
            class_names,
        })
    }

    /// Builds a library whose class names are derived from the spectra.
    pub fn from_spectra(grid: Vec<f64>, spectra: Vec<Spectrum>) -> Result<Self> {
        let names = spectra
            .iter()
            .map(|s| (s.class_id, default_class_name(s.class_id)))
            .collect();
        Self::new(grid, spectra, names)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn spectra(&self) -> &[Spectrum] {
        &self.spectra
    }

    pub fn class_names(&self) -> &BTreeMap<usize, String> {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.class_names.keys().copied().collect()
    }

    /// Number of spectra per class id.
    pub fn class_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h: BTreeMap<usize, usize> = self.class_names.keys().map(|&c| (c, 0)).collect();
        for s in &self.spectra {
            *h.entry(s.class_id).or_default() += 1;
        }
        h
    }

    pub fn by_class(&self, class_id: usize) -> impl Iterator<Item = &Spectrum> {
        self.spectra.iter().filter(move |s| s.class_id == class_id)
    }

    /// Spectra sorted by class id, then sample id.
    pub fn sorted(&self) -> Self {
        let mut spectra = self.spectra.clone();
        spectra.sort_by(|a, b| (a.class_id, &a.sample_id).cmp(&(b.class_id, &b.sample_id)));
        Self {
            spectra,
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sample_id".to_string(), "class".to_string()];
        header.extend(self.grid.iter().map(|v| format!("{v:.6}")));
        w.write_record(&header)?;
        for s in self.sorted().spectra {
            let mut row = vec![s.sample_id.clone(), s.class_id.to_string()];
            row.extend(s.reflectance.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut records = reader.records();
        let header = match records.next() {
            None => return Err(Error::Validation("no spectra".into())),
            Some(h) => h?,
        };
        if header.len() < 3
            || header.get(0).map(str::trim) != Some("sample_id")
            || header.get(1).map(str::trim) != Some("class")
        {
            return Err(Error::Parse {
                row: 0,
                sample_id: "<header>".into(),
                message: "expected header `sample_id,class,<wavelengths...>`".into(),
            });
        }
        let grid = header
            .iter()
            .skip(2)
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                row: 0,
                sample_id: "<header>".into(),
                message: format!("bad wavelength: {e}"),
            })?;
        check_increasing(&grid).map_err(Error::Validation)?;

        let mut spectra = Vec::new();
        for (i, rec) in records.enumerate() {
            let row = i + 1;
            let rec = rec?;
            let sample_id = rec.get(0).unwrap_or("").trim().to_string();
            if rec.len() != grid.len() + 2 {
                return Err(Error::Parse {
                    row,
                    sample_id,
                    message: format!("{} values under a {}-band header", rec.len().saturating_sub(2), grid.len()),
                });
            }
            let class_field = rec.get(1).unwrap_or("").trim();
            let class_id: usize = class_field
                .parse()
                .map_err(|_| Error::Validation(format!("{sample_id}: unknown class `{class_field}`")))?;
            let reflectance = rec
                .iter()
                .skip(2)
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse {
                    row,
                    sample_id: sample_id.clone(),
                    message: format!("bad reflectance value: {e}"),
                })?;
            spectra.push(Spectrum::new(sample_id, class_id, grid.clone(), reflectance)?);
        }
        if spectra.is_empty() {
            return Err(Error::Validation("no spectra".into()));
        }
        Self::from_spectra(grid, spectra)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    /// Copy with the supplied class names; ids must cover every spectrum.
    pub fn with_class_names(&self, names: BTreeMap<usize, String>) -> Result<Self> {
        let used: BTreeMap<usize, String> = names
            .into_iter()
            .filter(|(id, _)| self.spectra.iter().any(|s| s.class_id == *id))
            .collect();
        Self::new(self.grid.clone(), self.spectra.clone(), used)
    }
}

pub fn load_library(path: impl AsRef<Path>) -> Result<SpectralLibrary> {
    SpectralLibrary::load(path)
}

/// Uniform grid `lo, lo + step, ..., hi`, rounded to 1e-6 um.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi > lo) {
        return Err(Error::Validation(format!("bad grid [{lo}, {hi}] step {step}")));
    }
    let count = ((hi - lo) / step + GRID_TOL).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((lo + i as f64 * step) * 1e6).round() / 1e6)
        .collect())
}

/// Linear interpolation of `(x, y)` at `t`; exact at the nodes.
fn interpolate(x: &[f64], y: &[f64], t: f64) -> f64 {
    match x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
        Ok(i) => y[i],
        Err(0) => y[0],
        Err(i) if i >= x.len() => y[x.len() - 1],
        Err(i) => {
            let (x0, x1) = (x[i - 1], x[i]);
            y[i - 1] + (y[i] - y[i - 1]) * (t - x0) / (x1 - x0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub sample_id: String,
    pub reason: String,
}

/// Resamples every spectrum onto `lo..=hi` at `step` and divides it by its
/// maximum. Spectra that do not cover the range are rejected and reported.
pub fn preprocess(lib: &SpectralLibrary, range: (f64, f64), step: f64) -> Result<(SpectralLibrary, Vec<Rejection>)> {
    let grid = uniform_grid(range.0, range.1, step)?;
    let (lo, hi) = (grid[0], *grid.last().unwrap());
    let mut spectra = Vec::with_capacity(lib.len());
    let mut rejected = Vec::new();
    for s in &lib.spectra {
        let first = s.wavelengths[0];
        let last = *s.wavelengths.last().unwrap();
        if first > lo + GRID_TOL || last < hi - GRID_TOL {
            rejected.push(Rejection {
                sample_id: s.sample_id.clone(),
                reason: format!("covers [{first}, {last}] um, needs [{lo}, {hi}]"),
            });
            continue;
        }
        let resampled: Vec<f64> = grid
            .iter()
            .map(|&t| interpolate(&s.wavelengths, &s.reflectance, t))
            .collect();
        let max = resampled.iter().copied().fold(0.0, f64::max);
        if !(max > 0.0) {
            return Err(Error::Validation(format!(
                "{}: all-zero spectrum cannot be normalized",
                s.sample_id
            )));
        }
        let reflectance = resampled.into_iter().map(|v| v / max).collect();
        spectra.push(Spectrum {
            sample_id: s.sample_id.clone(),
            class_id: s.class_id,
            wavelengths: grid.clone(),
            reflectance,
        });
    }
    if spectra.is_empty() {
        return Err(Error::Validation("every spectrum was rejected by the range filter".into()));
    }
    let names = lib
        .class_names
        .iter()
        .filter(|(id, _)| spectra.iter().any(|s| s.class_id == **id))
        .map(|(id, n)| (*id, n.clone()))
        .collect();
    Ok((SpectralLibrary::new(grid, spectra, names)?, rejected))
}

/// Pads every class to `target_per_class` with convex mixtures of 2-3
/// randomly chosen same-class spectra (flat Dirichlet weights). Synthesized
/// spectra get ids `<class name>-mix<n>`.
pub fn balance_classes(lib: &SpectralLibrary, target_per_class: usize, seed: u64) -> Result<SpectralLibrary> {
    let hist = lib.class_histogram();
    if let Some((id, _)) = hist.iter().find(|(_, &n)| n < 2) {
        return Err(Error::Validation(format!(
            "class {id} ({}) has fewer than 2 spectra to mix",
            lib.class_names[id]
        )));
    }
    let largest = hist.values().copied().max().unwrap_or(0);
    if target_per_class < largest {
        return Err(Error::Validation(format!(
            "target {target_per_class} is below the largest class size {largest}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: HashSet<String> = lib.spectra.iter().map(|s| s.sample_id.clone()).collect();
    let mut spectra = lib.sorted().spectra;
    for (&class_id, &count) in &hist {
        let members: Vec<Spectrum> = lib.sorted().by_class(class_id).cloned().collect();
        let name = &lib.class_names[&class_id];
        let mut serial = 0usize;
        for _ in count..target_per_class {
            let parents = if members.len() >= 3 && rng.random_bool(0.5) { 3 } else { 2 };
            let chosen: Vec<&Spectrum> = members.choose_multiple(&mut rng, parents).collect();
            let draws: Vec<f64> = (0..parents).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            let mut reflectance = vec![0.0; lib.grid.len()];
            for (parent, d) in chosen.iter().zip(&draws) {
                let weight = d / total;
                for (r, v) in reflectance.iter_mut().zip(&parent.reflectance) {
                    *r += weight * v;
                }
            }
            let sample_id = loop {
                serial += 1;
                let candidate = format!("{name}-mix{serial:03}");
                if taken.insert(candidate.clone()) {
                    break candidate;
                }
            };
            spectra.push(Spectrum {
                sample_id,
                class_id,
                wavelengths: lib.grid.clone(),
                reflectance,
            });
        }
    }
    SpectralLibrary::new(lib.grid.clone(), spectra, lib.class_names.clone()).map(|l| l.sorted())
}

/// Seeded per-class split with exact counts; the two parts share no sample.
pub fn split_train_test(
    lib: &SpectralLibrary,
    train_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> Result<(SpectralLibrary, SpectralLibrary)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for &class_id in lib.class_names.keys() {
        let mut members: Vec<&Spectrum> = lib.by_class(class_id).collect();
        members.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        if members.len() < train_per_class + test_per_class {
            return Err(Error::Validation(format!(
                "class {class_id} has {} spectra, split needs {}",
                members.len(),
                train_per_class + test_per_class
            )));
        }
        members.shuffle(&mut rng);
        train.extend(members[..train_per_class].iter().map(|s| (*s).clone()));
        test.extend(
            members[train_per_class..train_per_class + test_per_class]
                .iter()
                .map(|s| (*s).clone()),
        );
    }
    let part = |spectra: Vec<Spectrum>| -> Result<SpectralLibrary> {
        let names = lib
            .class_names
            .iter()
            .filter(|(id, _)| spectra.iter().any(|s| s.class_id == **id))
            .map(|(id, n)| (*id, n.clone()))
            .collect();
        SpectralLibrary::new(lib.grid.clone(), spectra, names).map(|l| l.sorted())
    };
    Ok((part(train)?, part(test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lib_with_sizes(sizes: &[usize], bands: usize) -> SpectralLibrary {
        let grid: Vec<f64> = (0..bands).map(|i| (400 + 10 * i) as f64 / 1000.0).collect();
        let mut spectra = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            for j in 0..n {
                let r = (0..bands)
                    .map(|b| 0.2 + 0.1 * c as f64 + 0.01 * j as f64 + 0.002 * b as f64)
                    .collect();
                spectra.push(Spectrum::new(format!("c{c}-s{j:02}"), c, grid.clone(), r).unwrap());
            }
        }
        SpectralLibrary::from_spectra(grid, spectra).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let lib = lib_with_sizes(&[3, 2], 6);
        let mut buf = Vec::new();
        lib.write_csv(&mut buf).unwrap();
        let back = SpectralLibrary::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, lib.sorted());
    }

    #[test]
    fn ragged_row_names_sample() {
        let text = "sample_id,class,0.1,0.2,0.3,0.4,0.5,0.6\nok,0,1,1,1,1,1,1\nshort,0,1,1,1,1,1\n";
        match SpectralLibrary::read_csv(text.as_bytes()) {
            Err(Error::Parse { sample_id, row, .. }) => {
                assert_eq!(sample_id, "short");
                assert_eq!(row, 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_and_invalid_files() {
        let err = SpectralLibrary::read_csv("".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("no spectra"));
        let err = SpectralLibrary::read_csv("sample_id,class,0.1,0.2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("no spectra"));
        let text = "sample_id,class,0.2,0.1\na,0,1,1\n";
        assert!(matches!(SpectralLibrary::read_csv(text.as_bytes()), Err(Error::Validation(_))));
        let text = "sample_id,class,0.1,0.2\na,quartz,1,1\n";
        let err = SpectralLibrary::read_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unknown class"));
    }

    #[test]
    fn library_invariants() {
        let grid = vec![0.1, 0.2];
        let s = Spectrum::new("a", 0, grid.clone(), vec![0.1, 0.2]).unwrap();
        let mut names = BTreeMap::new();
        names.insert(0, "a".to_string());
        names.insert(1, "b".to_string());
        assert!(SpectralLibrary::new(grid.clone(), vec![s.clone()], names).is_err());
        assert!(SpectralLibrary::from_spectra(grid.clone(), vec![s.clone(), s.clone()]).is_err());
        assert!(Spectrum::new("neg", 0, grid.clone(), vec![-0.1, 0.2]).is_err());
        assert!(Spectrum::new("len", 0, grid, vec![0.1]).is_err());
    }

    #[test]
    fn preprocess_normalizes_and_resamples() {
        let fine: Vec<f64> = (0..=20).map(|i| ((0.5 + 0.0025 * i as f64) * 1e6).round() / 1e6).collect();
        let r: Vec<f64> = fine.iter().map(|w| 0.8 * (1.0 - (w - 0.52f64).abs())).collect();
        let flat = vec![0.3; fine.len()];
        let lib = SpectralLibrary::from_spectra(
            fine.clone(),
            vec![
                Spectrum::new("shape", 0, fine.clone(), r.clone()).unwrap(),
                Spectrum::new("flat", 1, fine.clone(), flat).unwrap(),
            ],
        )
        .unwrap();
        let (out, rejected) = preprocess(&lib, (0.5, 0.55), 0.005).unwrap();
        assert!(rejected.is_empty());
        assert_eq!(out.grid().len(), 11);
        let max = r.iter().copied().fold(0.0, f64::max);
        let shape = out.spectra().iter().find(|s| s.sample_id == "shape").unwrap();
        for (j, v) in shape.reflectance.iter().enumerate() {
            assert!((v - r[2 * j] / max).abs() < 1e-12);
        }
        let flat = out.spectra().iter().find(|s| s.sample_id == "flat").unwrap();
        assert!(flat.reflectance.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn preprocess_rejects_short_spectra_and_zero_spectra() {
        let grid = vec![0.5, 0.52, 0.54];
        let wide = vec![0.4, 0.5, 0.6, 0.7];
        let short = Spectrum::new("short", 0, grid.clone(), vec![0.1, 0.2, 0.3]).unwrap();
        let lib = SpectralLibrary::from_spectra(grid.clone(), vec![short]).unwrap();
        assert!(preprocess(&lib, (0.45, 0.6), 0.01).is_err());
        let zero = Spectrum::new("zero", 0, wide.clone(), vec![0.0; 4]).unwrap();
        let lib = SpectralLibrary::from_spectra(wide.clone(), vec![zero]).unwrap();
        assert!(preprocess(&lib, (0.45, 0.6), 0.01).unwrap_err().to_string().contains("all-zero"));

        let keep = Spectrum::new("keep", 1, wide.clone(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let lib = SpectralLibrary::from_spectra(wide.clone(), vec![keep]).unwrap();
        let (_, rejected) = preprocess(&lib, (0.45, 0.6), 0.01).unwrap();
        assert!(rejected.is_empty());
    }

    #[test]
    fn balance_counts_and_convexity() {
        let lib = lib_with_sizes(&[4, 7], 5);
        let out = balance_classes(&lib, 7, 11).unwrap();
        assert_eq!(out.class_histogram().values().copied().collect::<Vec<_>>(), vec![7, 7]);
        let parents: Vec<&Spectrum> = lib.by_class(0).collect();
        let synthesized: Vec<&Spectrum> = out.by_class(0).filter(|s| s.sample_id.contains("mix")).collect();
        assert_eq!(synthesized.len(), 3);
        for s in synthesized {
            for b in 0..5 {
                let lo = parents.iter().map(|p| p.reflectance[b]).fold(f64::INFINITY, f64::min);
                let hi = parents.iter().map(|p| p.reflectance[b]).fold(0.0, f64::max);
                assert!(s.reflectance[b] >= lo - 1e-12 && s.reflectance[b] <= hi + 1e-12);
            }
        }
        assert_eq!(balance_classes(&lib, 7, 11).unwrap(), out);
        assert!(balance_classes(&lib, 6, 11).is_err());
        let tiny = lib_with_sizes(&[1, 3], 5);
        assert!(balance_classes(&tiny, 3, 0).unwrap_err().to_string().contains("class 0"));
    }

    #[test]
    fn split_counts_disjoint_and_deterministic() {
        let lib = lib_with_sizes(&[10, 10, 12], 4);
        let (train, test) = split_train_test(&lib, 7, 3, 5).unwrap();
        assert_eq!(train.len(), 21);
        assert_eq!(test.len(), 9);
        let ids: HashSet<&str> = train.spectra().iter().map(|s| s.sample_id.as_str()).collect();
        assert!(test.spectra().iter().all(|s| !ids.contains(s.sample_id.as_str())));
        assert_eq!(split_train_test(&lib, 7, 3, 5).unwrap(), (train, test));
        assert!(split_train_test(&lib, 8, 3, 5).is_err());
    }

    #[test]
    fn uniform_grid_endpoints() {
        let g = uniform_grid(0.35, 2.6, 0.005).unwrap();
        assert_eq!(g.len(), 451);
        assert_eq!(g[0], 0.35);
        assert_eq!(*g.last().unwrap(), 2.6);
        assert!(uniform_grid(1.0, 0.5, 0.1).is_err());
        assert!(uniform_grid(0.0, 1.0, 0.0).is_err());
    }
}
