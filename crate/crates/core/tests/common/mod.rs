//! Brute-force references shared by the integration tests. Everything here is
//! written from the model definitions directly and never calls the crate's
//! own recursions.

#![allow(dead_code)]

use nhmc_core::mog::MogChainParams;
use nhmc_core::nhmc::ChainParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_pdf(w: f64, var: f64) -> f64 {
    (-w * w / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Strictly positive probability vector.
pub fn random_distribution(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Plain-matrix description of a k-state chain.
#[derive(Debug, Clone)]
pub struct RawChain {
    pub initial: Vec<f64>,
    /// `[scale - 1][child][parent]`
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `[scale][state]`, ascending per scale.
    pub variances: Vec<Vec<f64>>,
}

impl RawChain {
    pub fn random(rng: &mut impl Rng, k: usize, levels: usize) -> Self {
        let initial = random_distribution(rng, k);
        let transitions = (1..levels)
            .map(|_| {
                let columns: Vec<Vec<f64>> = (0..k).map(|_| random_distribution(rng, k)).collect();
                (0..k).map(|c| (0..k).map(|p| columns[p][c]).collect()).collect()
            })
            .collect();
        let variances = (0..levels)
            .map(|_| {
                let mut v: Vec<f64> = (0..k).map(|_| 10f64.powf(rng.random_range(-2.0..1.0))).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v
            })
            .collect();
        Self {
            initial,
            transitions,
            variances,
        }
    }

    pub fn k(&self) -> usize {
        self.initial.len()
    }

    pub fn levels(&self) -> usize {
        self.variances.len()
    }

    pub fn params(&self) -> ChainParams<f64> {
        ChainParams::new(self.initial.clone(), self.transitions.clone(), self.variances.clone()).unwrap()
    }

    /// Prior probability of a state path (no emissions).
    pub fn path_prior(&self, path: &[usize]) -> f64 {
        let mut p = self.initial[path[0]];
        for s in 1..path.len() {
            p *= self.transitions[s - 1][path[s]][path[s - 1]];
        }
        p
    }

    pub fn log_joint(&self, path: &[usize], chain: &[f64]) -> f64 {
        let mut lp = self.path_prior(path).ln();
        for (s, &i) in path.iter().enumerate() {
            lp += normal_pdf(chain[s], self.variances[s][i]).ln();
        }
        lp
    }

    /// `P(S_s = i)` by summing over all paths through scale `s`.
    pub fn marginal(&self, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        for path in all_paths(self.k(), s + 1) {
            out[path[s]] += self.path_prior(&path);
        }
        out
    }

    /// `P(S_{s-1} = a, S_s = b)` as `[a][b]`.
    pub fn pair_joint(&self, s: usize) -> Vec<Vec<f64>> {
        let k = self.k();
        let mut out = vec![vec![0.0; k]; k];
        for path in all_paths(k, s + 1) {
            out[path[s - 1]][path[s]] += self.path_prior(&path);
        }
        out
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.sample_with_states(rng).1
    }

    pub fn sample_with_states(&self, rng: &mut impl Rng) -> (Vec<usize>, Vec<f64>) {
        let draw = |rng: &mut dyn rand::RngCore, p: &[f64]| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &q) in p.iter().enumerate() {
                acc += q;
                if u < acc {
                    return i;
                }
            }
            p.len() - 1
        };
        let mut state = draw(rng, &self.initial);
        let mut states = Vec::with_capacity(self.levels());
        let mut out = Vec::with_capacity(self.levels());
        for s in 0..self.levels() {
            if s > 0 {
                let column: Vec<f64> = (0..self.k()).map(|c| self.transitions[s - 1][c][state]).collect();
                state = draw(rng, &column);
            }
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            states.push(state);
            out.push(z * self.variances[s][state].sqrt());
        }
        (states, out)
    }

    /// Maximum-likelihood estimates had the states been observed:
    /// `(transitions [s-1][child][parent], variances [s][i])`.
    pub fn complete_data_estimates(
        k: usize,
        draws: &[(Vec<usize>, Vec<f64>)],
    ) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
        let levels = draws[0].0.len();
        let mut counts = vec![vec![vec![0.0; k]; k]; levels - 1];
        let mut energy = vec![vec![0.0; k]; levels];
        let mut visits = vec![vec![0.0; k]; levels];
        for (states, chain) in draws {
            for s in 0..levels {
                energy[s][states[s]] += chain[s] * chain[s];
                visits[s][states[s]] += 1.0;
                if s > 0 {
                    counts[s - 1][states[s]][states[s - 1]] += 1.0;
                }
            }
        }
        for m in &mut counts {
            for p in 0..k {
                let total: f64 = (0..k).map(|c| m[c][p]).sum();
                for c in 0..k {
                    m[c][p] /= total;
                }
            }
        }
        let variances = energy
            .iter()
            .zip(&visits)
            .map(|(e, n)| e.iter().zip(n).map(|(e, n)| e / n).collect())
            .collect();
        (counts, variances)
    }
}

/// Every sequence in `{0..k}^len`, lexicographic.
pub fn all_paths(k: usize, len: usize) -> Vec<Vec<usize>> {
    let total = k.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let mut path = vec![0; len];
            for slot in path.iter_mut().rev() {
                *slot = code % k;
                code /= k;
            }
            path
        })
        .collect()
}

pub struct Enumerated {
    pub log_likelihood: f64,
    /// `[scale][state]`
    pub gamma: Vec<Vec<f64>>,
    /// `[scale - 1][parent][child]`
    pub xi: Vec<Vec<Vec<f64>>>,
    pub best_log_joint: f64,
}

pub fn enumerate(raw: &RawChain, chain: &[f64]) -> Enumerated {
    let (k, levels) = (raw.k(), raw.levels());
    let paths = all_paths(k, levels);
    let logs: Vec<f64> = paths.iter().map(|p| raw.log_joint(p, chain)).collect();
    let best = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - best).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut gamma = vec![vec![0.0; k]; levels];
    let mut xi = vec![vec![vec![0.0; k]; k]; levels.saturating_sub(1)];
    for (path, w) in paths.iter().zip(&weights) {
        for s in 0..levels {
            gamma[s][path[s]] += w / total;
            if s > 0 {
                xi[s - 1][path[s - 1]][path[s]] += w / total;
            }
        }
    }
    Enumerated {
        log_likelihood: best + total.ln(),
        gamma,
        xi,
        best_log_joint: best,
    }
}

/// Plain description of a collapsed two-state chain.
#[derive(Debug, Clone)]
pub struct RawMog {
    pub initial: [f64; 2],
    /// `[scale - 1][child][parent]`
    pub transitions: Vec<[[f64; 2]; 2]>,
    pub small: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub large: Vec<Vec<f64>>,
}

impl RawMog {
    pub fn random(rng: &mut impl Rng, levels: usize, components: usize) -> Self {
        let q = random_distribution(rng, 2);
        let transitions = (1..levels)
            .map(|_| {
                let a = random_distribution(rng, 2);
                let b = random_distribution(rng, 2);
                [[a[0], b[0]], [a[1], b[1]]]
            })
            .collect();
        let small = (0..levels).map(|_| 10f64.powf(rng.random_range(-3.0..-1.0))).collect();
        let weights = (0..levels).map(|_| random_distribution(rng, components)).collect();
        let large = (0..levels)
            .map(|_| (0..components).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect())
            .collect();
        Self {
            initial: [q[0], q[1]],
            transitions,
            small,
            weights,
            large,
        }
    }

    pub fn params(&self) -> MogChainParams<f64> {
        MogChainParams::new(
            self.initial,
            self.transitions.clone(),
            self.small.clone(),
            self.weights.clone(),
            self.large.clone(),
        )
        .unwrap()
    }

    pub fn density(&self, s: usize, z: usize, w: f64) -> f64 {
        if z == 0 {
            normal_pdf(w, self.small[s])
        } else {
            self.weights[s].iter().zip(&self.large[s]).map(|(p, v)| p * normal_pdf(w, *v)).sum()
        }
    }

    pub fn log_joint(&self, path: &[usize], chain: &[f64]) -> f64 {
        let mut lp = self.initial[path[0]].ln() + self.density(0, path[0], chain[0]).ln();
        for s in 1..path.len() {
            lp += self.transitions[s - 1][path[s]][path[s - 1]].ln() + self.density(s, path[s], chain[s]).ln();
        }
        lp
    }

    pub fn best_log_joint(&self, chain: &[f64]) -> f64 {
        all_paths(2, chain.len())
            .iter()
            .map(|p| self.log_joint(p, chain))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Haar coefficients by explicit inner products with the sampled atom
/// `+1/sqrt(l)` on `[n - l/2, n)` and `-1/sqrt(l)` on `[n, n + l/2)`, over a
/// signal mirrored (half-point) on both sides by concatenation.
pub fn haar_inner_products(signal: &[f64], levels: usize) -> Vec<Vec<f64>> {
    let n = signal.len();
    let reversed: Vec<f64> = signal.iter().rev().copied().collect();
    // reversed | signal | reversed, then signal index i sits at i + n.
    let extended: Vec<f64> = reversed.iter().chain(signal).chain(&reversed).copied().collect();
    (0..levels)
        .map(|row| {
            let l = 1usize << (levels - row);
            let half = l / 2;
            assert!(half <= n, "oracle only mirrors once");
            (0..n)
                .map(|offset| {
                    let mut atom = vec![0.0; extended.len()];
                    let centre = offset + n;
                    for t in centre - half..centre {
                        atom[t] = 1.0 / (l as f64).sqrt();
                    }
                    for t in centre..centre + half {
                        atom[t] = -1.0 / (l as f64).sqrt();
                    }
                    atom.iter().zip(&extended).map(|(a, x)| a * x).sum()
                })
                .collect()
        })
        .collect()
}

/// Trains on a noise-free synthetic library, collapses, labels with signs and
/// counts true dips that have a detected band within `tol` micrometres.
pub fn dip_recovery(per_class: usize, k: usize, tol: f64) -> (usize, usize) {
    use nhmc_core::dataset::synthetic::{synthetic_library, SyntheticConfig};
    use nhmc_core::labeling::add_signs;
    use nhmc_core::mog::{collapse_model, label_spectrum_mog, spectrum_coeffs_mog};
    use nhmc_core::nhmc::{train_model, EmConfig};
    use nhmc_core::semantics::summarize;
    use nhmc_core::wavelet::{uwt_with, WaveletConfig};

    let syn = synthetic_library(&SyntheticConfig {
        per_class,
        ..Default::default()
    })
    .unwrap();
    let lib = &syn.library;
    let coeffs: Vec<_> = lib
        .spectra()
        .iter()
        .map(|s| uwt_with(&s.reflectance, &WaveletConfig::default()).unwrap())
        .collect();
    let model = train_model(&coeffs, lib.grid(), k, &EmConfig::default()).unwrap();
    let mog = collapse_model(&model).unwrap();
    let (mut hits, mut total) = (0, 0);
    for s in lib.spectra() {
        let labels = label_spectrum_mog(s, &mog).unwrap();
        let signed = add_signs(&labels, &spectrum_coeffs_mog(s, &mog).unwrap()).unwrap();
        let bands = summarize(&signed, lib.grid()).unwrap().band_locations;
        for dip in &syn.sample_dips[&s.sample_id] {
            total += 1;
            if bands.iter().any(|b| (b - dip).abs() <= tol) {
                hits += 1;
            }
        }
    }
    (hits, total)
}
