//! Non-homogeneous hidden Markov chains over wavelet scales.
//!
//! One chain runs down each column of a coefficient matrix, coarse to fine.
//! Every node has a hidden state in `0..k` that selects a zero-mean Gaussian
//! for its coefficient; the states are linked by a per-scale transition
//! matrix. Training is Baum-Welch with scaled forward-backward recursions.
//!
//! Transition matrices are column-stochastic: `transition(s, parent, child)`
//! is `P(S_s = child | S_{s-1} = parent)` and every parent column sums to one.
//! Scale indices in this module are zero-based rows (0 = coarsest).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{ln_prob, log_normal_zero_mean, sum_tol, Scalar};
use crate::wavelet::{CoeffMatrix, WaveletConfig};

/// Tolerance used when validating probability vectors.
pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Per-scale variance floor relative to the mean squared coefficient.
pub const RELATIVE_VARIANCE_FLOOR: f64 = 1e-8;
/// Floor used when a scale has no energy at all.
pub const ABSOLUTE_VARIANCE_FLOOR: f64 = 1e-20;
/// Posterior mass (per training chain) below which a state counts as empty.
pub const STARVED_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams<T> {
    k: usize,
    levels: usize,
    initial: Vec<T>,
    /// `levels - 1` matrices, entry `[child * k + parent]`.
    transitions: Vec<Vec<T>>,
    /// `levels x k`, entry `[scale * k + state]`.
    variances: Vec<T>,
}

impl<T: Scalar> ChainParams<T> {
    /// `transitions[s - 1][child][parent]` for scales `s = 1..levels`.
    pub fn new(
        initial: Vec<T>,
        transitions: Vec<Vec<Vec<T>>>,
        variances: Vec<Vec<T>>,
    ) -> Result<Self> {
        let k = initial.len();
        let levels = variances.len();
        if k == 0 || levels == 0 {
            return Err(Error::Dimension("chain needs at least one state and one scale".into()));
        }
        if transitions.len() + 1 != levels {
            return Err(Error::Dimension(format!(
                "{} transition matrices for {levels} scales",
                transitions.len()
            )));
        }
        let mut flat = Vec::with_capacity(levels - 1);
        for (s, m) in transitions.iter().enumerate() {
            if m.len() != k || m.iter().any(|row| row.len() != k) {
                return Err(Error::Dimension(format!("transition matrix {} is not {k}x{k}", s + 1)));
            }
            flat.push(m.iter().flatten().copied().collect());
        }
        if variances.iter().any(|v| v.len() != k) {
            return Err(Error::Dimension(format!("variance rows must have {k} entries")));
        }
        let params = Self {
            k,
            levels,
            initial,
            transitions: flat,
            variances: variances.into_iter().flatten().collect(),
        };
        params.validate()?;
        Ok(params)
    }

    pub(crate) fn from_flat(
        k: usize,
        levels: usize,
        initial: Vec<T>,
        transitions: Vec<Vec<T>>,
        variances: Vec<T>,
    ) -> Self {
        Self {
            k,
            levels,
            initial,
            transitions,
            variances,
        }
    }

    /// Checks stochasticity within [`STOCHASTIC_TOL`] and positive variances.
    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        let tol = sum_tol::<T>(STOCHASTIC_TOL, k);
        check_distribution(&self.initial, tol, "initial state probabilities")?;
        for (s, a) in self.transitions.iter().enumerate() {
            for parent in 0..k {
                let column: Vec<T> = (0..k).map(|c| a[c * k + parent]).collect();
                check_distribution(&column, tol, &format!("transition column {parent} at scale {}", s + 1))?;
            }
        }
        if self.variances.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::Validation("state variances must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn initial(&self) -> &[T] {
        &self.initial
    }

    /// `P(S_scale = child | S_{scale-1} = parent)`, `scale >= 1`.
    #[inline]
    pub fn transition(&self, scale: usize, parent: usize, child: usize) -> T {
        self.transitions[scale - 1][child * self.k + parent]
    }

    /// Row-major `[child][parent]` matrix entering `scale` (`scale >= 1`).
    pub fn transition_matrix(&self, scale: usize) -> Vec<Vec<T>> {
        self.transitions[scale - 1]
            .chunks(self.k)
            .map(|r| r.to_vec())
            .collect()
    }

    #[inline]
    pub fn variance(&self, scale: usize, state: usize) -> T {
        self.variances[scale * self.k + state]
    }

    pub fn variances_at(&self, scale: usize) -> &[T] {
        &self.variances[scale * self.k..(scale + 1) * self.k]
    }

    /// State marginals `P_s` for every scale, propagated from the initial
    /// probabilities through the transition matrices.
    pub fn marginals(&self) -> Vec<Vec<T>> {
        let mut out = Vec::with_capacity(self.levels);
        out.push(self.initial.clone());
        for s in 1..self.levels {
            let prev = &out[s - 1];
            let next: Vec<T> = (0..self.k)
                .map(|c| (0..self.k).map(|p| self.transition(s, p, c) * prev[p]).sum())
                .collect();
            out.push(next);
        }
        out
    }

    /// Mean of the transition diagonals; a persistence diagnostic.
    pub fn mean_self_transition(&self) -> f64 {
        if self.levels < 2 {
            return f64::NAN;
        }
        let mut acc = 0.0;
        for s in 1..self.levels {
            for i in 0..self.k {
                acc += self.transition(s, i, i).as_f64();
            }
        }
        acc / ((self.levels - 1) * self.k) as f64
    }

    /// Re-indexes states at every scale so variances ascend.
    pub fn sorted_by_variance(&self) -> Self {
        let k = self.k;
        let perms: Vec<Vec<usize>> = (0..self.levels)
            .map(|s| {
                let v = self.variances_at(s);
                let mut idx: Vec<usize> = (0..k).collect();
                idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal));
                idx
            })
            .collect();
        let initial = perms[0].iter().map(|&old| self.initial[old]).collect();
        let transitions = (1..self.levels)
            .map(|s| {
                let mut m = vec![T::zero(); k * k];
                for c in 0..k {
                    for p in 0..k {
                        m[c * k + p] = self.transition(s, perms[s - 1][p], perms[s][c]);
                    }
                }
                m
            })
            .collect();
        let variances = (0..self.levels)
            .flat_map(|s| perms[s].iter().map(move |&old| self.variance(s, old)))
            .collect();
        Self::from_flat(k, self.levels, initial, transitions, variances)
    }
}

fn check_distribution<T: Scalar>(p: &[T], tol: T, what: &str) -> Result<()> {
    if p.iter().any(|&x| x < T::zero() || !x.is_finite()) {
        return Err(Error::Validation(format!("{what} contain negative or non-finite entries")));
    }
    let total: T = p.iter().copied().sum();
    if (total - T::one()).abs() > tol {
        return Err(Error::Validation(format!("{what} sum to {total}, not 1")));
    }
    Ok(())
}

/// Exact state posteriors for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors<T> {
    k: usize,
    /// `levels x k`.
    pub gamma: Vec<T>,
    /// `(levels - 1) x k x k`, entry `[(s - 1) * k * k + parent * k + child]`.
    pub xi: Vec<T>,
    pub log_likelihood: T,
}

impl<T: Scalar> Posteriors<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn gamma(&self, scale: usize, state: usize) -> T {
        self.gamma[scale * self.k + state]
    }

    /// Joint posterior of `(S_{scale-1} = parent, S_scale = child)`.
    #[inline]
    pub fn xi(&self, scale: usize, parent: usize, child: usize) -> T {
        self.xi[(scale - 1) * self.k * self.k + parent * self.k + child]
    }
}

fn check_chain<T: Scalar>(chain: &[T], levels: usize) -> Result<()> {
    if chain.len() != levels {
        return Err(Error::Dimension(format!(
            "chain of length {} for a {levels}-scale model",
            chain.len()
        )));
    }
    if chain.iter().any(|w| !w.is_finite()) {
        return Err(Error::Validation("chain contains non-finite coefficients".into()));
    }
    Ok(())
}

/// Per-node Gaussian constants: `ln N(w; 0, v) = norm - w^2 * inv_two_var`.
struct Emission<T> {
    norm: Vec<T>,
    inv_two_var: Vec<T>,
}

impl<T: Scalar> Emission<T> {
    fn new(params: &ChainParams<T>) -> Self {
        let two = T::of(2.0);
        Self {
            norm: params
                .variances
                .iter()
                .map(|&v| -T::of(0.5) * (two * T::PI() * v).ln())
                .collect(),
            inv_two_var: params.variances.iter().map(|&v| T::one() / (two * v)).collect(),
        }
    }
}

/// Buffers reused across the chains of one E-step.
struct Scratch<T> {
    b: Vec<T>,
    alpha: Vec<T>,
    beta: Vec<T>,
    norm: Vec<T>,
    gamma: Vec<T>,
    xi: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    fn new(k: usize, levels: usize) -> Self {
        Self {
            b: vec![T::zero(); levels * k],
            alpha: vec![T::zero(); levels * k],
            beta: vec![T::zero(); levels * k],
            norm: vec![T::zero(); levels],
            gamma: vec![T::zero(); levels * k],
            xi: vec![T::zero(); levels.saturating_sub(1) * k * k],
        }
    }
}

/// Scaled forward-backward pass.
pub fn forward_backward<T: Scalar>(chain: &[T], params: &ChainParams<T>) -> Result<Posteriors<T>> {
    check_chain(chain, params.levels)?;
    let mut scratch = Scratch::new(params.k, params.levels);
    let log_likelihood = forward_backward_into(chain, params, &Emission::new(params), &mut scratch)?;
    Ok(Posteriors {
        k: params.k,
        gamma: scratch.gamma,
        xi: scratch.xi,
        log_likelihood,
    })
}

/// Fills `scratch.gamma` and `scratch.xi`; returns the log-likelihood.
fn forward_backward_into<T: Scalar>(
    chain: &[T],
    params: &ChainParams<T>,
    emission: &Emission<T>,
    scratch: &mut Scratch<T>,
) -> Result<T> {
    let (k, levels) = (params.k, params.levels);
    let Scratch {
        b,
        alpha,
        beta,
        norm,
        gamma,
        xi,
    } = scratch;

    // Emissions rescaled by their per-scale maximum; the offsets go back
    // into the log-likelihood.
    let mut log_likelihood = T::zero();
    for s in 0..levels {
        let w2 = chain[s] * chain[s];
        let row = &mut b[s * k..(s + 1) * k];
        let mut m = T::neg_infinity();
        for (i, v) in row.iter_mut().enumerate() {
            *v = emission.norm[s * k + i] - w2 * emission.inv_two_var[s * k + i];
            m = m.max(*v);
        }
        for v in row.iter_mut() {
            *v = (*v - m).exp();
        }
        log_likelihood = log_likelihood + m;
    }

    for s in 0..levels {
        let mut total = T::zero();
        for c in 0..k {
            let prior = if s == 0 {
                params.initial[c]
            } else {
                let a = &params.transitions[s - 1][c * k..(c + 1) * k];
                let prev = &alpha[(s - 1) * k..s * k];
                a.iter().zip(prev).fold(T::zero(), |acc, (&t, &p)| acc + t * p)
            };
            let v = prior * b[s * k + c];
            alpha[s * k + c] = v;
            total = total + v;
        }
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::Numeric {
                scale: s + 1,
                message: "total likelihood underflowed to zero".into(),
            });
        }
        norm[s] = total;
        let inv = T::one() / total;
        for v in &mut alpha[s * k..(s + 1) * k] {
            *v = *v * inv;
        }
        log_likelihood = log_likelihood + total.ln();
    }

    for v in &mut beta[(levels - 1) * k..] {
        *v = T::one();
    }
    for s in (1..levels).rev() {
        for p in 0..k {
            let mut v = T::zero();
            for c in 0..k {
                v = v + params.transition(s, p, c) * b[s * k + c] * beta[s * k + c];
            }
            beta[(s - 1) * k + p] = v / norm[s];
        }
    }

    for s in 0..levels {
        let mut total = T::zero();
        for i in 0..k {
            let v = alpha[s * k + i] * beta[s * k + i];
            gamma[s * k + i] = v;
            total = total + v;
        }
        for v in &mut gamma[s * k..(s + 1) * k] {
            *v = *v / total;
        }
    }

    for s in 1..levels {
        let base = (s - 1) * k * k;
        let mut total = T::zero();
        for p in 0..k {
            let ap = alpha[(s - 1) * k + p] / norm[s];
            for c in 0..k {
                let v = ap * params.transition(s, p, c) * b[s * k + c] * beta[s * k + c];
                xi[base + p * k + c] = v;
                total = total + v;
            }
        }
        for v in &mut xi[base..base + k * k] {
            *v = *v / total;
        }
    }
    Ok(log_likelihood)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Variances from `|w|` quantile groups, uniform initial probabilities,
    /// 0.8 on the transition diagonal.
    #[default]
    Quantile,
    /// Seeded random probabilities, quantile variances jittered by a factor
    /// in `[0.5, 2)`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative change of the total log-likelihood that ends training.
    pub tol: f64,
    pub seed: u64,
    pub init: InitStrategy,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            seed: 0,
            init: InitStrategy::Quantile,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOutcome<T> {
    /// Trained parameters, states ordered by ascending variance per scale.
    pub params: ChainParams<T>,
    /// Total log-likelihood evaluated at every E step, in order.
    pub log_likelihoods: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Per-scale variance floor for a set of chains.
pub fn variance_floors<T: Scalar>(chains: &[Vec<T>], levels: usize) -> Vec<T> {
    let m = T::of(chains.len() as f64);
    (0..levels)
        .map(|s| {
            let energy: T = chains.iter().map(|c| c[s] * c[s]).sum::<T>() / m;
            (energy * T::of(RELATIVE_VARIANCE_FLOOR)).max(T::of(ABSOLUTE_VARIANCE_FLOOR))
        })
        .collect()
}

/// Starting point of [`em_train`] for the given strategy.
pub fn initial_params<T: Scalar>(
    chains: &[Vec<T>],
    k: usize,
    strategy: &InitStrategy,
    seed: u64,
) -> ChainParams<T> {
    let levels = chains[0].len();
    let floors = variance_floors(chains, levels);
    let mut variances = Vec::with_capacity(levels * k);
    for s in 0..levels {
        let mut sq: Vec<T> = chains.iter().map(|c| c[s] * c[s]).collect();
        sq.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let n = sq.len();
        for g in 0..k {
            // k-quantile group g; never empty, even when n < k.
            let lo = (g * n / k).min(n - 1);
            let hi = ((g + 1) * n / k).clamp(lo + 1, n);
            let group = &sq[lo..hi];
            let v = group.iter().copied().sum::<T>() / T::of(group.len() as f64);
            variances.push(v.max(floors[s]));
        }
    }
    let kk = T::of(k as f64);
    match strategy {
        InitStrategy::Quantile => {
            let off = if k > 1 { T::of(0.2) / T::of((k - 1) as f64) } else { T::zero() };
            let diag = if k > 1 { T::of(0.8) } else { T::one() };
            let matrix: Vec<T> = (0..k * k)
                .map(|idx| if idx / k == idx % k { diag } else { off })
                .collect();
            ChainParams::from_flat(
                k,
                levels,
                vec![T::one() / kk; k],
                vec![matrix; levels - 1],
                variances,
            )
        }
        InitStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dirichlet = |rng: &mut ChaCha8Rng| -> Vec<T> {
                let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = draws.iter().sum();
                draws.into_iter().map(|d| T::of(d / total)).collect()
            };
            let initial = dirichlet(&mut rng);
            let transitions = (1..levels)
                .map(|_| {
                    let mut m = vec![T::zero(); k * k];
                    for p in 0..k {
                        for (c, v) in dirichlet(&mut rng).into_iter().enumerate() {
                            m[c * k + p] = v;
                        }
                    }
                    m
                })
                .collect();
            for (idx, v) in variances.iter_mut().enumerate() {
                let factor: f64 = rng.random_range(0.5..2.0);
                *v = (*v * T::of(factor)).max(floors[idx / k]);
            }
            ChainParams::from_flat(k, levels, initial, transitions, variances)
        }
    }
}

/// Baum-Welch training of one chain model from `chains` (one coefficient
/// chain per training spectrum, all sharing an offset).
pub fn em_train<T: Scalar>(chains: &[Vec<T>], k: usize, config: &EmConfig) -> Result<EmOutcome<T>> {
    let start = validate_training_set(chains, k)?;
    let params = initial_params(chains, k, &config.init, config.seed);
    em_train_from(chains, params, config, start)
}

/// Baum-Welch starting from explicit parameters.
pub fn em_train_from_params<T: Scalar>(
    chains: &[Vec<T>],
    params: ChainParams<T>,
    config: &EmConfig,
) -> Result<EmOutcome<T>> {
    let levels = validate_training_set(chains, params.k)?;
    if levels != params.levels {
        return Err(Error::Dimension(format!(
            "chains have {levels} scales, parameters {}",
            params.levels
        )));
    }
    params.validate()?;
    em_train_from(chains, params, config, levels)
}

fn validate_training_set<T: Scalar>(chains: &[Vec<T>], k: usize) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::Validation(format!(
            "training needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    if k < 2 {
        return Err(Error::Validation(format!("need at least 2 states, got {k}")));
    }
    let levels = chains[0].len();
    if levels == 0 {
        return Err(Error::Dimension("empty chains".into()));
    }
    for (m, c) in chains.iter().enumerate() {
        if c.len() != levels {
            return Err(Error::Dimension(format!(
                "chain {m} has length {}, expected {levels}",
                c.len()
            )));
        }
        if c.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation(format!("chain {m} contains non-finite coefficients")));
        }
    }
    Ok(levels)
}

struct Sufficient<T> {
    initial: Vec<T>,
    /// `levels x k` posterior mass.
    mass: Vec<T>,
    /// `levels x k` posterior-weighted squared coefficients.
    energy: Vec<T>,
    /// `(levels - 1) x k x k`, `[parent * k + child]`.
    pairs: Vec<T>,
    log_likelihood: T,
}

fn expectation<T: Scalar>(chains: &[Vec<T>], params: &ChainParams<T>) -> Result<Sufficient<T>> {
    let (k, levels) = (params.k, params.levels);
    let mut acc = Sufficient {
        initial: vec![T::zero(); k],
        mass: vec![T::zero(); levels * k],
        energy: vec![T::zero(); levels * k],
        pairs: vec![T::zero(); (levels - 1) * k * k],
        log_likelihood: T::zero(),
    };
    let emission = Emission::new(params);
    let mut scratch = Scratch::new(k, levels);
    for chain in chains {
        let ll = forward_backward_into(chain, params, &emission, &mut scratch)?;
        for i in 0..k {
            acc.initial[i] = acc.initial[i] + scratch.gamma[i];
        }
        for s in 0..levels {
            let w2 = chain[s] * chain[s];
            for i in 0..k {
                let g = scratch.gamma[s * k + i];
                acc.mass[s * k + i] = acc.mass[s * k + i] + g;
                acc.energy[s * k + i] = acc.energy[s * k + i] + g * w2;
            }
        }
        for (a, &x) in acc.pairs.iter_mut().zip(&scratch.xi) {
            *a = *a + x;
        }
        acc.log_likelihood = acc.log_likelihood + ll;
    }
    Ok(acc)
}

fn maximization<T: Scalar>(
    stats: &Sufficient<T>,
    k: usize,
    levels: usize,
    floors: &[T],
    chain_count: usize,
    warnings: &mut Vec<String>,
) -> ChainParams<T> {
    let starved = T::of(STARVED_MASS * chain_count as f64);
    let total_initial: T = stats.initial.iter().copied().sum();
    let initial: Vec<T> = stats.initial.iter().map(|&v| v / total_initial).collect();

    let mut variances = vec![T::zero(); levels * k];
    for s in 0..levels {
        for i in 0..k {
            let mass = stats.mass[s * k + i];
            variances[s * k + i] = if mass <= starved {
                warnings.push(format!("state {i} empty at scale {}; variance held at floor", s + 1));
                floors[s]
            } else {
                (stats.energy[s * k + i] / mass).max(floors[s])
            };
        }
    }

    let uniform = T::one() / T::of(k as f64);
    let mut transitions = Vec::with_capacity(levels - 1);
    for s in 1..levels {
        let pairs = &stats.pairs[(s - 1) * k * k..s * k * k];
        let mut m = vec![T::zero(); k * k];
        for p in 0..k {
            let out: T = pairs[p * k..(p + 1) * k].iter().copied().sum();
            if out <= starved {
                warnings.push(format!(
                    "state {p} empty at scale {}; transition column reset to uniform",
                    s
                ));
                for c in 0..k {
                    m[c * k + p] = uniform;
                }
            } else {
                for c in 0..k {
                    m[c * k + p] = pairs[p * k + c] / out;
                }
            }
        }
        transitions.push(m);
    }
    ChainParams::from_flat(k, levels, initial, transitions, variances)
}

fn em_train_from<T: Scalar>(
    chains: &[Vec<T>],
    mut params: ChainParams<T>,
    config: &EmConfig,
    levels: usize,
) -> Result<EmOutcome<T>> {
    let k = params.k;
    let floors = variance_floors(chains, levels);
    let tol = T::of(config.tol);
    let mut history: Vec<T> = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let stats = expectation(chains, &params)?;
        let ll = stats.log_likelihood;
        if let Some(&prev) = history.last() {
            let prev: T = prev;
            if (ll - prev).abs() <= tol * prev.abs().max(T::min_positive_value()) {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        if iterations == config.max_iter {
            break;
        }
        let mut step_warnings = Vec::new();
        params = maximization(&stats, k, levels, &floors, chains.len(), &mut step_warnings);
        for w in step_warnings {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        iterations += 1;
    }

    Ok(EmOutcome {
        params: params.sorted_by_variance(),
        log_likelihoods: history,
        iterations,
        converged,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMeta {
    pub iterations: Vec<usize>,
    pub final_log_likelihood: Vec<f64>,
    pub converged: Vec<bool>,
    pub warnings: Vec<String>,
}

/// One trained chain per wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NhmcModel<T> {
    pub k: usize,
    pub levels: usize,
    pub wavelet: WaveletConfig,
    pub grid: Vec<f64>,
    pub chains: Vec<ChainParams<T>>,
    pub meta: TrainingMeta,
}

impl<T: Scalar> NhmcModel<T> {
    pub fn bands(&self) -> usize {
        self.chains.len()
    }

    /// Checks shared `k`/`levels` and that there is one chain per grid point.
    pub fn validate(&self) -> Result<()> {
        if self.chains.len() != self.grid.len() {
            return Err(Error::Dimension(format!(
                "{} chains for {} wavelengths",
                self.chains.len(),
                self.grid.len()
            )));
        }
        if self.wavelet.levels != self.levels {
            return Err(Error::Dimension("wavelet levels differ from chain levels".into()));
        }
        for (n, c) in self.chains.iter().enumerate() {
            if c.k != self.k || c.levels != self.levels {
                return Err(Error::Dimension(format!("chain {n} has a different shape")));
            }
            c.validate().map_err(|e| Error::AtWavelength {
                index: n,
                source: Box::new(e),
            })?;
        }
        Ok(())
    }
}

/// Trains one chain per wavelength column of the coefficient matrices.
/// Columns are independent and run in parallel; output order follows the grid.
pub fn train_model<T: Scalar>(
    coeffs: &[CoeffMatrix<T>],
    grid: &[f64],
    k: usize,
    config: &EmConfig,
) -> Result<NhmcModel<T>> {
    let first = coeffs
        .first()
        .ok_or_else(|| Error::Validation("no training coefficients".into()))?;
    let (levels, bands, wavelet) = (first.levels(), first.bands(), first.wavelet());
    if bands == 0 {
        return Err(Error::Dimension("no wavelengths".into()));
    }
    if grid.len() != bands {
        return Err(Error::Dimension(format!("{} grid points for {bands} bands", grid.len())));
    }
    if coeffs
        .iter()
        .any(|c| c.levels() != levels || c.bands() != bands || c.wavelet() != wavelet)
    {
        return Err(Error::Dimension("coefficient matrices differ in shape".into()));
    }
    let outcomes: Vec<Result<EmOutcome<T>>> = (0..bands)
        .into_par_iter()
        .map(|n| {
            let chains: Vec<Vec<T>> = coeffs.iter().map(|c| c.column(n)).collect();
            em_train(&chains, k, config).map_err(|e| Error::AtWavelength {
                index: n,
                source: Box::new(e),
            })
        })
        .collect();

    let mut chains = Vec::with_capacity(bands);
    let mut meta = TrainingMeta::default();
    for (n, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome?;
        meta.iterations.push(outcome.iterations);
        meta.final_log_likelihood
            .push(outcome.log_likelihoods.last().map_or(f64::NAN, |v| v.as_f64()));
        meta.converged.push(outcome.converged);
        meta.warnings
            .extend(outcome.warnings.into_iter().map(|w| format!("wavelength {n}: {w}")));
        chains.push(outcome.params);
    }
    Ok(NhmcModel {
        k,
        levels,
        wavelet: WaveletConfig { wavelet, levels },
        grid: grid.to_vec(),
        chains,
        meta,
    })
}

/// Draws a state path and coefficients from the chain model.
pub fn sample_chain<T: Scalar>(params: &ChainParams<T>, seed: u64) -> (Vec<usize>, Vec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_chain_with(params, &mut rng)
}

pub fn sample_chain_with<T: Scalar, R: Rng + ?Sized>(params: &ChainParams<T>, rng: &mut R) -> (Vec<usize>, Vec<T>) {
    let k = params.k;
    let mut states = Vec::with_capacity(params.levels);
    let mut coeffs = Vec::with_capacity(params.levels);
    for s in 0..params.levels {
        let probs: Vec<f64> = if s == 0 {
            params.initial.iter().map(|p| p.as_f64()).collect()
        } else {
            let parent = states[s - 1];
            (0..k).map(|c| params.transition(s, parent, c).as_f64()).collect()
        };
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut state = k - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                state = i;
                break;
            }
        }
        // never land on a zero-probability tail state through rounding
        while probs[state] == 0.0 && state > 0 {
            state -= 1;
        }
        let z: f64 = StandardNormal.sample(rng);
        coeffs.push(T::of(z * params.variance(s, state).as_f64().sqrt()));
        states.push(state);
    }
    (states, coeffs)
}

/// `ln p(path, chain)`; used by tests and diagnostics.
pub fn path_log_joint<T: Scalar>(path: &[usize], chain: &[T], params: &ChainParams<T>) -> T {
    let mut acc = ln_prob(params.initial[path[0]]) + log_normal_zero_mean(chain[0], params.variance(0, path[0]));
    for s in 1..path.len() {
        acc = acc
            + ln_prob(params.transition(s, path[s - 1], path[s]))
            + log_normal_zero_mean(chain[s], params.variance(s, path[s]));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(levels: usize) -> ChainParams<f64> {
        let a = vec![vec![0.9, 0.3], vec![0.1, 0.7]];
        ChainParams::new(
            vec![0.6, 0.4],
            vec![a; levels - 1],
            (0..levels).map(|s| vec![0.01 * (s + 1) as f64, 1.0]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constructor_rejects_non_stochastic_columns() {
        let bad = vec![vec![0.9, 0.3], vec![0.2, 0.7]];
        let err = ChainParams::new(vec![0.5, 0.5], vec![bad], vec![vec![1.0, 2.0]; 2]);
        assert!(matches!(err, Err(Error::Validation(_))));
        let err = ChainParams::new(vec![0.5, 0.6], vec![], vec![vec![1.0, 2.0]]);
        assert!(matches!(err, Err(Error::Validation(_))));
        let err = ChainParams::new(vec![0.5, 0.5], vec![], vec![vec![0.0, 2.0]]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn single_node_posterior() {
        let p = ChainParams::<f64>::new(vec![0.3, 0.7], vec![], vec![vec![0.5, 2.0]]).unwrap();
        let w = 0.8f64;
        let post = forward_backward(&[w], &p).unwrap();
        let a = 0.3 * crate::scalar::normal_zero_mean(w, 0.5);
        let b = 0.7 * crate::scalar::normal_zero_mean(w, 2.0);
        assert!((post.gamma(0, 0) - a / (a + b)).abs() < 1e-14);
        assert!((post.log_likelihood - (a + b).ln()).abs() < 1e-12);
        assert!(post.xi.is_empty());
    }

    #[test]
    fn posteriors_are_normalized_and_consistent() {
        let p = two_state(6);
        let chain = [0.1, -2.0, 0.05, 1.5, -0.01, 0.3];
        let post = forward_backward(&chain, &p).unwrap();
        for s in 0..6 {
            let row: f64 = (0..2).map(|i| post.gamma(s, i)).sum();
            assert!((row - 1.0).abs() < 1e-12);
        }
        for s in 1..6 {
            for parent in 0..2 {
                let m: f64 = (0..2).map(|c| post.xi(s, parent, c)).sum();
                assert!((m - post.gamma(s - 1, parent)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn huge_coefficients_do_not_underflow() {
        let p = two_state(4);
        let post = forward_backward(&[40.0, -35.0, 50.0, 1e3], &p).unwrap();
        assert!(post.log_likelihood.is_finite());
        assert!(post.gamma(3, 1) > 0.999);
    }

    #[test]
    fn chain_length_must_match() {
        let p = two_state(3);
        assert!(matches!(forward_backward(&[0.1, 0.2], &p), Err(Error::Dimension(_))));
        assert!(matches!(
            forward_backward(&[0.1, f64::INFINITY, 0.0], &p),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn absorbing_chain_samples_constant_states() {
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let p = ChainParams::new(vec![0.0, 1.0], vec![id; 5], vec![vec![1.0, 2.0]; 6]).unwrap();
        for seed in 0..20 {
            let (states, _) = sample_chain(&p, seed);
            assert_eq!(states, vec![1; 6]);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = two_state(9);
        assert_eq!(sample_chain(&p, 7), sample_chain(&p, 7));
    }

    #[test]
    fn floor_state_samples_near_zero() {
        let p = ChainParams::<f64>::new(vec![1.0, 0.0], vec![], vec![vec![1e-20, 1.0]]).unwrap();
        for seed in 0..50 {
            let (s, w) = sample_chain(&p, seed);
            assert_eq!(s[0], 0);
            assert!(w[0].abs() < 1e-8);
        }
    }

    #[test]
    fn relabeling_sorts_variances_and_preserves_likelihood() {
        let a = vec![vec![0.2, 0.6], vec![0.8, 0.4]];
        let p = ChainParams::new(
            vec![0.7, 0.3],
            vec![a.clone(), a],
            vec![vec![3.0, 0.1], vec![0.2, 0.5], vec![4.0, 1.0]],
        )
        .unwrap();
        let q = p.sorted_by_variance();
        q.validate().unwrap();
        for s in 0..3 {
            assert!(q.variance(s, 0) <= q.variance(s, 1));
        }
        let chain = [0.3f64, -0.2, 1.1];
        let l1 = forward_backward(&chain, &p).unwrap().log_likelihood;
        let l2 = forward_backward(&chain, &q).unwrap().log_likelihood;
        assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn em_rejects_degenerate_inputs() {
        let chains = vec![vec![0.1, 0.2]];
        assert!(em_train(&chains, 2, &EmConfig::default()).is_err());
        let chains = vec![vec![0.1, 0.2], vec![0.3, 0.1]];
        assert!(em_train(&chains, 1, &EmConfig::default()).is_err());
        let chains = vec![vec![0.1, 0.2], vec![0.3]];
        assert!(matches!(em_train(&chains, 2, &EmConfig::default()), Err(Error::Dimension(_))));
    }

    #[test]
    fn em_output_is_stochastic_and_ordered() {
        let truth = two_state(5);
        let chains: Vec<Vec<f64>> = (0..200).map(|m| sample_chain(&truth, m).1).collect();
        let out = em_train(&chains, 3, &EmConfig::default()).unwrap();
        out.params.validate().unwrap();
        for s in 0..5 {
            let v = out.params.variances_at(s);
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
        }
        for w in out.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn marginals_propagate() {
        let p = two_state(3);
        let m = p.marginals();
        assert!((m[1][0] - (0.9 * 0.6 + 0.3 * 0.4)).abs() < 1e-15);
        for row in &m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }
}
