//! Feature sets, nearest-neighbour and RBF-SVM classification, and accuracy
//! evaluation.

mod features;
mod svm;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{spectral_distance, SpectralMeasure};

pub use features::{extract_features, FeatureContext};
pub use svm::{kkt_violation, svm_predict, svm_train, BinarySvm, Scaling, SvmConfig, SvmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Spectrum,
    Coeffs,
    GmmLabels,
    GmmSign,
    MogLabels,
    MogSign,
    Rivard,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 7] = [
        FeatureKind::Spectrum,
        FeatureKind::Coeffs,
        FeatureKind::GmmLabels,
        FeatureKind::GmmSign,
        FeatureKind::MogLabels,
        FeatureKind::MogSign,
        FeatureKind::Rivard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Spectrum => "spectrum",
            FeatureKind::Coeffs => "coeffs",
            FeatureKind::GmmLabels => "gmm_labels",
            FeatureKind::GmmSign => "gmm_sign",
            FeatureKind::MogLabels => "mog_labels",
            FeatureKind::MogSign => "mog_sign",
            FeatureKind::Rivard => "rivard",
        }
    }

    /// Whether the features depend on a trained chain model (and so on `k`).
    pub fn needs_model(self) -> bool {
        matches!(
            self,
            FeatureKind::GmmLabels | FeatureKind::GmmSign | FeatureKind::MogLabels | FeatureKind::MogSign
        )
    }

    pub fn is_mog(self) -> bool {
        matches!(self, FeatureKind::MogLabels | FeatureKind::MogSign)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    vectors: Vec<Vec<f64>>,
    class_ids: Vec<usize>,
    kind: FeatureKind,
}

impl FeatureSet {
    pub fn new(vectors: Vec<Vec<f64>>, class_ids: Vec<usize>, kind: FeatureKind) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Validation("feature set is empty".into()));
        }
        if vectors.len() != class_ids.len() {
            return Err(Error::Dimension(format!(
                "{} vectors but {} class ids",
                vectors.len(),
                class_ids.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(Error::Dimension("feature vectors are empty".into()));
        }
        if let Some(i) = vectors.iter().position(|v| v.len() != dim) {
            return Err(Error::Dimension(format!(
                "vector {i} has dimension {}, expected {dim}",
                vectors[i].len()
            )));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature vectors contain non-finite values".into()));
        }
        Ok(Self {
            vectors,
            class_ids,
            kind,
        })
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    /// Sorted distinct class ids.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.class_ids.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Nearest-neighbour metrics. The spectral measures are only meaningful on
/// non-negative features such as reflectance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NnMetric {
    L1,
    L2,
    Cosine,
    Sam,
    Scm,
    Sid,
}

impl NnMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            NnMetric::L1 => "l1",
            NnMetric::L2 => "l2",
            NnMetric::Cosine => "cosine",
            NnMetric::Sam => "sam",
            NnMetric::Scm => "scm",
            NnMetric::Sid => "sid",
        }
    }
}

impl fmt::Display for NnMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NnMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "l1" => NnMetric::L1,
            "l2" | "ed" => NnMetric::L2,
            "cosine" => NnMetric::Cosine,
            "sam" => NnMetric::Sam,
            "scm" => NnMetric::Scm,
            "sid" => NnMetric::Sid,
            other => return Err(Error::Config(format!("unknown metric `{other}`"))),
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Dissimilarity used for ranking: smaller is closer. Cosine and SCM are
/// negated similarities.
fn dissimilarity(metric: NnMetric, a: &[f64], b: &[f64], query_norm: f64) -> Result<f64> {
    Ok(match metric {
        NnMetric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        NnMetric::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        NnMetric::Cosine => {
            let nb = norm(b);
            // A zero training vector is orthogonal to everything.
            if nb == 0.0 {
                0.0
            } else {
                -a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (query_norm * nb)
            }
        }
        NnMetric::Sam => spectral_distance(a, b, SpectralMeasure::Sam)?,
        NnMetric::Scm => -spectral_distance(a, b, SpectralMeasure::Scm)?,
        NnMetric::Sid => spectral_distance(a, b, SpectralMeasure::Sid)?,
    })
}

/// Class of the closest training vector; ties go to the lowest index.
pub fn nn_classify(train: &FeatureSet, query: &[f64], metric: NnMetric) -> Result<usize> {
    nn_index(train, query, metric).map(|i| train.class_ids[i])
}

/// Index of the closest training vector.
pub fn nn_index(train: &FeatureSet, query: &[f64], metric: NnMetric) -> Result<usize> {
    if query.len() != train.dim() {
        return Err(Error::Dimension(format!(
            "query of dimension {} against {}-dimensional training vectors",
            query.len(),
            train.dim()
        )));
    }
    let qn = norm(query);
    if metric == NnMetric::Cosine && qn == 0.0 {
        return Err(Error::Domain("cosine similarity of a zero query vector".into()));
    }
    let mut best = (0usize, f64::INFINITY);
    for (i, v) in train.vectors.iter().enumerate() {
        let d = dissimilarity(metric, query, v, qn)?;
        if d < best.1 || i == 0 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// Classifies every query vector.
pub fn nn_classify_all(train: &FeatureSet, queries: &FeatureSet, metric: NnMetric) -> Result<Vec<usize>> {
    use rayon::prelude::*;
    queries
        .vectors
        .par_iter()
        .map(|q| nn_classify(train, q, metric))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall: f64,
    pub correct: usize,
    pub total: usize,
    /// Recall per true class.
    pub per_class: BTreeMap<usize, f64>,
    /// Row and column order of `confusion`.
    pub classes: Vec<usize>,
    /// `confusion[t][p]` counts queries of class `classes[t]` predicted as
    /// `classes[p]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate_accuracy(predictions: &[usize], truth: &[usize]) -> Result<AccuracyReport> {
    if predictions.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Validation("no predictions to evaluate".into()));
    }
    let mut classes: Vec<usize> = truth.iter().chain(predictions).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let pos = |c: usize| classes.binary_search(&c).expect("class listed");
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    for (&p, &t) in predictions.iter().zip(truth) {
        confusion[pos(t)][pos(p)] += 1;
    }
    let correct = (0..classes.len()).map(|i| confusion[i][i]).sum();
    let per_class = classes
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| {
            let n: usize = confusion[i].iter().sum();
            (n > 0).then(|| (c, confusion[i][i] as f64 / n as f64))
        })
        .collect();
    Ok(AccuracyReport {
        overall: correct as f64 / truth.len() as f64,
        correct,
        total: truth.len(),
        per_class,
        classes,
        confusion,
    })
}
