//! One-vs-one RBF support vector machines trained by SMO, with a
//! cross-validated grid search over `(C, gamma)`.
//!
//! The solver is the second-order working-set SMO of Fan, Chen and Lin
//! (the LIBSVM scheme). Inputs are scaled to `[-1, 1]` per dimension using
//! the training range.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FeatureSet;
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    /// Stopping tolerance on the maximal KKT violating pair.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c_grid: (-5..=15).step_by(2).map(|e| 2f64.powi(e)).collect(),
            gamma_grid: (-15..=3).step_by(2).map(|e| 2f64.powi(e)).collect(),
            folds: 5,
            seed: 0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// Per-dimension affine map onto `[-1, 1]`; constant dimensions map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaling {
    pub fn fit(vectors: &[Vec<f64>]) -> Self {
        let dim = vectors[0].len();
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for v in vectors {
            for (d, &x) in v.iter().enumerate() {
                min[d] = min[d].min(x);
                max[d] = max[d].max(x);
            }
        }
        Self { min, max }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| {
                if hi > lo {
                    2.0 * (x - lo) / (hi - lo) - 1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Binary machine separating `positive` (label +1) from `negative`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub positive: usize,
    pub negative: usize,
    /// Scaled support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest KKT violation over the training points.
    pub max_kkt_violation: f64,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, &c)| c * rbf(sv, x, gamma))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<usize>,
    pub c: f64,
    pub gamma: f64,
    pub scaling: Scaling,
    pub machines: Vec<BinarySvm>,
    /// Cross-validated accuracy of the chosen grid point.
    pub cv_accuracy: f64,
    pub warnings: Vec<String>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
    converged: bool,
}

/// SMO on the dual `min 1/2 a'Qa - e'a`, `0 <= a <= C`, `y'a = 0`, with
/// `Q_ij = y_i y_j K_ij`. `kernel` is `n x n` row-major.
fn smo(kernel: &[f64], y: &[f64], c: f64, tol: f64, max_iter: usize) -> Solution {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yi: f64| if yi > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, yi: f64| if yi > 0.0 { a > 0.0 } else { a < c };
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i_sel != usize::MAX {
            let i = i_sel;
            for t in 0..n {
                if !low(alpha[t], y[t]) {
                    continue;
                }
                gmax2 = gmax2.max(y[t] * grad[t]);
                let b = gmax + y[t] * grad[t];
                if b > 0.0 {
                    let a = kernel[i * n + i] + kernel[t * n + t] - 2.0 * kernel[i * n + t];
                    let a = if a > 0.0 { a } else { TAU };
                    let obj = -(b * b) / a;
                    if obj < obj_min {
                        obj_min = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax + gmax2 < tol {
            converged = true;
            break;
        }
        iterations += 1;
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { 0.5 * (ub + lb) };
    Solution {
        alpha,
        rho,
        iterations,
        converged,
    }
}

/// Largest KKT violation of a dual solution: `y f(x) >= 1` at `alpha = 0`,
/// `= 1` for free vectors, `<= 1` at `alpha = C`. `f = sum a_j y_j K_ij - rho`.
pub fn kkt_violation(kernel: &[f64], y: &[f64], alpha: &[f64], rho: f64, c: f64) -> f64 {
    let n = y.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let f: f64 = (0..n).map(|j| alpha[j] * y[j] * kernel[i * n + j]).sum::<f64>() - rho;
        let margin = y[i] * f - 1.0;
        let v = if alpha[i] <= 0.0 {
            (-margin).max(0.0)
        } else if alpha[i] >= c {
            margin.max(0.0)
        } else {
            margin.abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Squared distances between all scaled training vectors.
fn distance_matrix(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| sq_dist(&x[i], &x[j])).collect())
        .collect();
    rows.concat()
}

struct PairFit {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
    converged: bool,
    violation: f64,
}

/// Trains the machine for `members` (indices into the full set) with `y`.
fn fit_pair(dist: &[f64], n_all: usize, members: &[usize], y: &[f64], c: f64, gamma: f64, cfg: &SvmConfig) -> PairFit {
    let m = members.len();
    let mut kernel = vec![0.0; m * m];
    for (a, &i) in members.iter().enumerate() {
        for (b, &j) in members.iter().enumerate() {
            kernel[a * m + b] = (-gamma * dist[i * n_all + j]).exp();
        }
    }
    let sol = smo(&kernel, y, c, cfg.tol, cfg.max_iter);
    let violation = kkt_violation(&kernel, y, &sol.alpha, sol.rho, c);
    PairFit {
        alpha: sol.alpha,
        rho: sol.rho,
        iterations: sol.iterations,
        converged: sol.converged,
        violation,
    }
}

fn pairs(classes: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            out.push((classes[a], classes[b]));
        }
    }
    out
}

/// One-vs-one vote; ties go to the lowest class id.
fn vote(classes: &[usize], decisions: impl Iterator<Item = (usize, usize, f64)>) -> usize {
    let mut votes = vec![0usize; classes.len()];
    for (pos, neg, f) in decisions {
        let winner = if f >= 0.0 { pos } else { neg };
        votes[classes.binary_search(&winner).expect("known class")] += 1;
    }
    let mut best = 0;
    for (i, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = i;
        }
    }
    classes[best]
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
fn fold_of(labels: &[usize], classes: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    for &c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        for (r, i) in idx.into_iter().enumerate() {
            fold[i] = r % folds;
        }
    }
    fold
}

/// Cross-validated accuracy at one grid point and the skipped-fold notes.
fn cross_validate(
    dist: &[f64],
    labels: &[usize],
    fold: &[usize],
    c: f64,
    gamma: f64,
    cfg: &SvmConfig,
) -> (f64, Vec<String>) {
    let n = labels.len();
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut notes = Vec::new();
    for f in 0..cfg.folds {
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let mut present: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        present.sort_unstable();
        present.dedup();
        if test.is_empty() || present.len() < 2 {
            notes.push(format!("fold {f} skipped: training part holds a single class"));
            continue;
        }
        let machines: Vec<(usize, usize, Vec<usize>, PairFit)> = pairs(&present)
            .into_iter()
            .map(|(p, q)| {
                let members: Vec<usize> = train
                    .iter()
                    .copied()
                    .filter(|&i| labels[i] == p || labels[i] == q)
                    .collect();
                let y: Vec<f64> = members.iter().map(|&i| if labels[i] == p { 1.0 } else { -1.0 }).collect();
                let fit = fit_pair(dist, n, &members, &y, c, gamma, cfg);
                (p, q, members, fit)
            })
            .collect();
        for &t in &test {
            let decisions = machines.iter().map(|(p, q, members, fit)| {
                let f: f64 = members
                    .iter()
                    .zip(&fit.alpha)
                    .filter(|(_, &a)| a > 0.0)
                    .map(|(&i, &a)| {
                        let yi = if labels[i] == *p { 1.0 } else { -1.0 };
                        a * yi * (-gamma * dist[t * n + i]).exp()
                    })
                    .sum::<f64>()
                    - fit.rho;
                (*p, *q, f)
            });
            if vote(&present, decisions) == labels[t] {
                correct += 1;
            }
            total += 1;
        }
    }
    let acc = if total > 0 { correct as f64 / total as f64 } else { 0.0 };
    (acc, notes)
}

/// Grid search by stratified k-fold CV, then a final fit on all of `train`.
/// Grid ties go to the smaller `C`, then the smaller `gamma`.
pub fn svm_train(train: &FeatureSet, config: &SvmConfig) -> Result<SvmModel> {
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(Error::Validation("SVM training needs at least two classes".into()));
    }
    if config.c_grid.is_empty() || config.gamma_grid.is_empty() {
        return Err(Error::Config("empty SVM parameter grid".into()));
    }
    if config.c_grid.iter().chain(&config.gamma_grid).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Config("SVM grid values must be positive".into()));
    }
    if config.folds < 2 {
        return Err(Error::Config("SVM cross-validation needs at least 2 folds".into()));
    }
    let labels = train.class_ids();
    for &c in &classes {
        let count = labels.iter().filter(|&&l| l == c).count();
        if count < config.folds {
            return Err(Error::Validation(format!(
                "class {c} has {count} samples, fewer than {} folds",
                config.folds
            )));
        }
    }
    let scaling = Scaling::fit(train.vectors());
    let x: Vec<Vec<f64>> = train.vectors().iter().map(|v| scaling.apply(v)).collect();
    let dist = distance_matrix(&x);
    let fold = fold_of(labels, &classes, config.folds, config.seed);

    let mut c_sorted = config.c_grid.clone();
    c_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut g_sorted = config.gamma_grid.clone();
    g_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let grid: Vec<(f64, f64)> = c_sorted
        .iter()
        .flat_map(|&c| g_sorted.iter().map(move |&g| (c, g)))
        .collect();
    let scores: Vec<(f64, Vec<String>)> = grid
        .par_iter()
        .map(|&(c, g)| cross_validate(&dist, labels, &fold, c, g, config))
        .collect();
    let mut best = 0;
    for (i, (acc, _)) in scores.iter().enumerate() {
        if *acc > scores[best].0 {
            best = i;
        }
    }
    let (c, gamma) = grid[best];
    let mut warnings: Vec<String> = scores[best].1.clone();

    let n = x.len();
    let machines: Vec<BinarySvm> = pairs(&classes)
        .into_par_iter()
        .map(|(p, q)| {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == p || labels[i] == q).collect();
            let y: Vec<f64> = members.iter().map(|&i| if labels[i] == p { 1.0 } else { -1.0 }).collect();
            let fit = fit_pair(&dist, n, &members, &y, c, gamma, config);
            let (support_vectors, coefficients) = members
                .iter()
                .zip(&fit.alpha)
                .zip(&y)
                .filter(|((_, &a), _)| a > 0.0)
                .map(|((&i, &a), &yi)| (x[i].clone(), a * yi))
                .unzip();
            BinarySvm {
                positive: p,
                negative: q,
                support_vectors,
                coefficients,
                bias: -fit.rho,
                iterations: fit.iterations,
                converged: fit.converged,
                max_kkt_violation: fit.violation,
            }
        })
        .collect();
    for m in &machines {
        if !m.converged {
            warnings.push(format!(
                "SMO for classes {} vs {} stopped at the iteration limit",
                m.positive, m.negative
            ));
        }
    }
    Ok(SvmModel {
        classes,
        c,
        gamma,
        scaling,
        machines,
        cv_accuracy: scores[best].0,
        warnings,
    })
}

pub fn svm_predict(model: &SvmModel, query: &[f64]) -> Result<usize> {
    if query.len() != model.scaling.min.len() {
        return Err(Error::Dimension(format!(
            "query of dimension {} for a {}-dimensional model",
            query.len(),
            model.scaling.min.len()
        )));
    }
    let x = model.scaling.apply(query);
    Ok(vote(
        &model.classes,
        model
            .machines
            .iter()
            .map(|m| (m.positive, m.negative, m.decision(&x, model.gamma))),
    ))
}

impl SvmModel {
    pub fn predict_all(&self, queries: &FeatureSet) -> Result<Vec<usize>> {
        queries.vectors().par_iter().map(|q| svm_predict(self, q)).collect()
    }
}
