//! End-to-end classification benchmark: preprocess, balance, split, blur
//! sweep, chain training, feature extraction, classification and reports.
//!
//! Every configuration `(feature, classifier, metric, dmp, k)` yields exactly
//! one report row. A failing stage marks the affected rows as errors and the
//! sweep carries on. Output files are byte-identical across reruns with the
//! same configuration; wall-clock timings go to a separate file.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{
    evaluate_accuracy, extract_features, nn_classify_all, svm_train, FeatureContext, FeatureKind, FeatureSet,
    NnMetric, SvmConfig,
};
use crate::dataset::synthetic::{synthetic_library, SyntheticConfig};
use crate::dataset::{
    balance_classes, blur_library, load_library, preprocess, split_train_test, Rejection, SpectralLibrary,
};
use crate::error::{Error, Result};
use crate::mog::{collapse_model, MogModel};
use crate::model_io::{save_json, save_model, save_mog_model};
use crate::nhmc::{train_model, EmConfig, NhmcModel};
use crate::wavelet::{uwt_with, WaveletConfig};

/// Sentence recorded in every run's metadata.
pub const MIXING_NOTE: &str = "class balancing uses convex linear mixtures of 2-3 same-class spectra \
with flat Dirichlet weights in place of Hapke radiative-transfer mixing";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Library CSV relative to the workspace; a synthetic library is
    /// generated when absent.
    pub library: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub preprocess: bool,
    pub range: (f64, f64),
    pub step: f64,
    /// Pad every class to this size with mixtures; skipped when absent.
    pub balance_per_class: Option<usize>,
    pub balance_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            library: None,
            synthetic: SyntheticConfig::default(),
            preprocess: true,
            range: (0.35, 2.6),
            step: 0.005,
            balance_per_class: Some(65),
            balance_seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
    /// Draw the test set from the training set (self-classification check).
    pub test_from_train: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_per_class: 52,
            test_per_class: 13,
            seed: 3,
            test_from_train: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlurConfig {
    pub dmps: Vec<f64>,
    pub seed: u64,
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self {
            dmps: (0..7).map(|i| (70 + 5 * i) as f64 / 100.0).collect(),
            seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub gmm_k: Vec<usize>,
    pub mog_k: Vec<usize>,
    pub em: EmConfig,
    pub save_models: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            gmm_k: (2..=10).collect(),
            mog_k: (3..=10).collect(),
            em: EmConfig::default(),
            save_models: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub nn_metrics: Vec<NnMetric>,
    pub svm: bool,
    #[serde(rename = "svm_grid")]
    pub svm_config: SvmConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            nn_metrics: vec![NnMetric::L1, NnMetric::L2, NnMetric::Cosine],
            svm: true,
            svm_config: SvmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    pub blur: BlurConfig,
    pub wavelet: WaveletConfig,
    pub model: ModelConfig,
    pub features: Vec<FeatureKind>,
    pub classifiers: ClassifierConfig,
    /// Output directory relative to the workspace.
    pub output: PathBuf,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            split: SplitConfig::default(),
            blur: BlurConfig::default(),
            wavelet: WaveletConfig::default(),
            model: ModelConfig::default(),
            features: FeatureKind::ALL.to_vec(),
            classifiers: ClassifierConfig::default(),
            output: PathBuf::from("results"),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Config("no feature kinds requested".into()));
        }
        if self.classifiers.nn_metrics.is_empty() && !self.classifiers.svm {
            return Err(Error::Config("no classifier requested".into()));
        }
        if self.blur.dmps.is_empty() {
            return Err(Error::Config("blur.dmps is empty".into()));
        }
        if let Some(d) = self.blur.dmps.iter().find(|&&d| !(d > 1.0 / 9.0 && d <= 1.0)) {
            return Err(Error::Config(format!("blur.dmps value {d} outside (1/9, 1]")));
        }
        let gmm = self.features.iter().any(|f| matches!(f, FeatureKind::GmmLabels | FeatureKind::GmmSign));
        let mog = self.features.iter().any(|f| f.is_mog());
        if gmm && self.model.gmm_k.is_empty() {
            return Err(Error::Config("model.gmm_k is empty but gmm features are requested".into()));
        }
        if mog && self.model.mog_k.is_empty() {
            return Err(Error::Config("model.mog_k is empty but mog features are requested".into()));
        }
        if let Some(k) = self.model.gmm_k.iter().chain(&self.model.mog_k).find(|&&k| k < 2) {
            return Err(Error::Config(format!("state count {k} must be at least 2")));
        }
        if self.split.train_per_class == 0 || self.split.test_per_class == 0 {
            return Err(Error::Config("split counts must be positive".into()));
        }
        if self.split.test_from_train && self.split.test_per_class > self.split.train_per_class {
            return Err(Error::Config("test_from_train needs test_per_class <= train_per_class".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Nn,
    Svm,
}

impl Classifier {
    pub fn as_str(self) -> &'static str {
        match self {
            Classifier::Nn => "nn",
            Classifier::Svm => "svm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub feature: FeatureKind,
    pub classifier: Classifier,
    /// NN metric name, or `rbf` for the SVM.
    pub metric: String,
    pub dmp: f64,
    /// State count for model-based features.
    pub k: Option<usize>,
    pub accuracy: Option<f64>,
    /// Empty on success.
    pub error: String,
    #[serde(skip)]
    pub runtime_ms: u128,
}

impl ReportRow {
    fn key(&self) -> (FeatureKind, Classifier, String, i64, usize) {
        (
            self.feature,
            self.classifier,
            self.metric.clone(),
            (self.dmp * 1e6).round() as i64,
            self.k.unwrap_or(0),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub model_files: Vec<String>,
    pub rejected: Vec<Rejection>,
    pub library_size: usize,
    pub classes: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
}

/// Best accuracy over `k` for one feature/classifier/metric/dmp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestK {
    pub feature: FeatureKind,
    pub classifier: Classifier,
    pub metric: String,
    pub dmp: f64,
    pub k: Option<usize>,
    pub accuracy: f64,
}

fn fmt_k(k: Option<usize>) -> String {
    k.map_or(String::new(), |k| k.to_string())
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or(String::new(), |a| format!("{a:.6}"))
}

impl BenchmarkReport {
    pub fn row(&self, feature: FeatureKind, classifier: Classifier, metric: &str, dmp: f64, k: Option<usize>) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.feature == feature && r.classifier == classifier && r.metric == metric && (r.dmp - dmp).abs() < 1e-9 && r.k == k
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature_kind", "classifier", "metric", "dmp", "k", "accuracy", "error"])?;
        for r in &self.rows {
            w.write_record([
                r.feature.as_str(),
                r.classifier.as_str(),
                &r.metric,
                &format!("{:.2}", r.dmp),
                &fmt_k(r.k),
                &fmt_acc(r.accuracy),
                &r.error,
            ])?;
        }
        w.flush().map_err(|e| Error::io("<report writer>", e))?;
        Ok(())
    }

    /// Best `k` per feature, classifier, metric and dmp; ties go to the
    /// smaller `k`.
    pub fn best_k(&self) -> Vec<BestK> {
        let mut best: BTreeMap<(FeatureKind, Classifier, String, i64), BestK> = BTreeMap::new();
        for r in &self.rows {
            let Some(acc) = r.accuracy else { continue };
            let key = (r.feature, r.classifier, r.metric.clone(), (r.dmp * 1e6).round() as i64);
            let entry = best.entry(key).or_insert_with(|| BestK {
                feature: r.feature,
                classifier: r.classifier,
                metric: r.metric.clone(),
                dmp: r.dmp,
                k: r.k,
                accuracy: acc,
            });
            if acc > entry.accuracy {
                entry.k = r.k;
                entry.accuracy = acc;
            }
        }
        best.into_values().collect()
    }

    pub fn write_best_k_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature_kind", "classifier", "metric", "dmp", "best_k", "accuracy"])?;
        for b in self.best_k() {
            w.write_record([
                b.feature.as_str(),
                b.classifier.as_str(),
                &b.metric,
                &format!("{:.2}", b.dmp),
                &fmt_k(b.k),
                &format!("{:.6}", b.accuracy),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<best-k writer>", e))?;
        Ok(())
    }

    /// `(dmp, accuracy)` series per feature and classifier, best over `k`.
    pub fn write_plot_series<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["series", "feature_kind", "classifier", "metric", "dmp", "accuracy"])?;
        for b in self.best_k() {
            let series = format!("{}/{}-{}", b.feature, b.classifier.as_str(), b.metric);
            w.write_record([
                series.as_str(),
                b.feature.as_str(),
                b.classifier.as_str(),
                &b.metric,
                &format!("{:.2}", b.dmp),
                &format!("{:.6}", b.accuracy),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<plot writer>", e))?;
        Ok(())
    }

    /// Aligned text table: one line per feature/classifier/metric, one
    /// column per dmp, best accuracy over `k` in percent with the best `k`.
    pub fn summary_text(&self) -> String {
        let best = self.best_k();
        let mut dmps: Vec<i64> = best.iter().map(|b| (b.dmp * 1e6).round() as i64).collect();
        dmps.sort_unstable();
        dmps.dedup();
        let mut lines: BTreeMap<(FeatureKind, Classifier, String), BTreeMap<i64, String>> = BTreeMap::new();
        for b in &best {
            let cell = match b.k {
                Some(k) => format!("{:.1} (k={k})", 100.0 * b.accuracy),
                None => format!("{:.1}", 100.0 * b.accuracy),
            };
            lines
                .entry((b.feature, b.classifier, b.metric.clone()))
                .or_default()
                .insert((b.dmp * 1e6).round() as i64, cell);
        }
        let mut out = String::new();
        let _ = write!(out, "{:<28}", "feature / classifier");
        for d in &dmps {
            let _ = write!(out, "{:>14}", format!("DMP {:.0}%", *d as f64 / 1e4));
        }
        out.push('\n');
        for ((f, c, m), cells) in &lines {
            let _ = write!(out, "{:<28}", format!("{f} / {}-{m}", c.as_str()));
            for d in &dmps {
                let _ = write!(out, "{:>14}", cells.get(d).map_or("-", String::as_str));
            }
            out.push('\n');
        }
        let failed = self.rows.iter().filter(|r| r.accuracy.is_none()).count();
        if failed > 0 {
            let _ = writeln!(out, "{failed} configuration(s) failed; see the error column of report.csv");
        }
        out
    }
}

fn load_source(cfg: &BenchmarkConfig, workspace: &Path) -> Result<(SpectralLibrary, Vec<Rejection>)> {
    let raw = match &cfg.data.library {
        Some(p) => load_library(workspace.join(p))?,
        None => synthetic_library(&cfg.data.synthetic)?.library,
    };
    let (lib, rejected) = if cfg.data.preprocess {
        preprocess(&raw, cfg.data.range, cfg.data.step)?
    } else {
        (raw, Vec::new())
    };
    let lib = match cfg.data.balance_per_class {
        Some(n) => balance_classes(&lib, n, cfg.data.balance_seed)?,
        None => lib,
    };
    Ok((lib, rejected))
}

fn select(lib: &SpectralLibrary, ids: &[String]) -> Result<SpectralLibrary> {
    let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
    let spectra = lib
        .spectra()
        .iter()
        .filter(|s| wanted.contains(s.sample_id.as_str()))
        .cloned()
        .collect();
    SpectralLibrary::from_spectra(lib.grid().to_vec(), spectra)
        .and_then(|l| l.with_class_names(lib.class_names().clone()))
        .map(|l| l.sorted())
}

/// Sample ids of the train and test parts.
fn split_ids(lib: &SpectralLibrary, cfg: &SplitConfig) -> Result<(Vec<String>, Vec<String>)> {
    let ids = |l: &SpectralLibrary| l.spectra().iter().map(|s| s.sample_id.clone()).collect::<Vec<_>>();
    if cfg.test_from_train {
        let (train, _) = split_train_test(lib, cfg.train_per_class, 0, cfg.seed)?;
        let (test, _) = split_train_test(&train, cfg.test_per_class, 0, cfg.seed)?;
        Ok((ids(&train), ids(&test)))
    } else {
        let (train, test) = split_train_test(lib, cfg.train_per_class, cfg.test_per_class, cfg.seed)?;
        Ok((ids(&train), ids(&test)))
    }
}

struct Models {
    gmm: Option<NhmcModel<f64>>,
    mog: Option<MogModel<f64>>,
}

/// One feature representation to classify.
#[derive(Clone, Copy)]
struct Job {
    feature: FeatureKind,
    k: Option<usize>,
}

fn dmp_tag(dmp: f64) -> String {
    format!("{:03}", (dmp * 100.0).round() as i64)
}

fn classify_job(
    job: Job,
    dmp: f64,
    train: &SpectralLibrary,
    test: &SpectralLibrary,
    ctx: &FeatureContext<'_>,
    cfg: &ClassifierConfig,
) -> Vec<ReportRow> {
    let start = Instant::now();
    let mut specs: Vec<(Classifier, String)> = cfg
        .nn_metrics
        .iter()
        .map(|m| (Classifier::Nn, m.as_str().to_string()))
        .collect();
    if cfg.svm {
        specs.push((Classifier::Svm, "rbf".to_string()));
    }
    let row = |c: Classifier, m: &str, acc: Option<f64>, err: String, t: u128| ReportRow {
        feature: job.feature,
        classifier: c,
        metric: m.to_string(),
        dmp,
        k: job.k,
        accuracy: acc,
        error: err,
        runtime_ms: t,
    };
    let features = extract_features(train, job.feature, ctx)
        .and_then(|tr| extract_features(test, job.feature, ctx).map(|te| (tr, te)));
    let (tr, te): (FeatureSet, FeatureSet) = match features {
        Ok(f) => f,
        Err(e) => {
            let msg = format!("feature extraction: {e}");
            return specs
                .iter()
                .map(|(c, m)| row(*c, m, None, msg.clone(), start.elapsed().as_millis()))
                .collect();
        }
    };
    let extract_ms = start.elapsed().as_millis();
    specs
        .par_iter()
        .map(|(c, m)| {
            let t0 = Instant::now();
            let predicted = match c {
                Classifier::Nn => m.parse::<NnMetric>().and_then(|metric| nn_classify_all(&tr, &te, metric)),
                Classifier::Svm => svm_train(&tr, &cfg.svm_config).and_then(|model| model.predict_all(&te)),
            };
            let elapsed = extract_ms + t0.elapsed().as_millis();
            match predicted.and_then(|p| evaluate_accuracy(&p, te.class_ids())) {
                Ok(r) => row(*c, m, Some(r.overall), String::new(), elapsed),
                Err(e) => row(*c, m, None, e.to_string(), elapsed),
            }
        })
        .collect()
}

/// Runs the whole sweep. Relative paths in `cfg` resolve against
/// `workspace`; artifacts are written under `workspace/cfg.output`.
pub fn run_benchmark(cfg: &BenchmarkConfig, workspace: &Path) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let out_dir = workspace.join(&cfg.output);
    let model_dir = out_dir.join("models");
    fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;

    let (lib, rejected) = load_source(cfg, workspace)?;
    let (train_ids, test_ids) = split_ids(&lib, &cfg.split)?;

    let gmm_features = cfg.features.iter().any(|f| matches!(f, FeatureKind::GmmLabels | FeatureKind::GmmSign));
    let mog_features = cfg.features.iter().any(|f| f.is_mog());
    let gmm_k: BTreeSet<usize> = if gmm_features { cfg.model.gmm_k.iter().copied().collect() } else { BTreeSet::new() };
    let mog_k: BTreeSet<usize> = if mog_features { cfg.model.mog_k.iter().copied().collect() } else { BTreeSet::new() };
    let all_k: BTreeSet<usize> = gmm_k.union(&mog_k).copied().collect();

    let mut jobs: Vec<Job> = Vec::new();
    for &feature in &cfg.features {
        match feature {
            FeatureKind::GmmLabels | FeatureKind::GmmSign => {
                jobs.extend(gmm_k.iter().map(|&k| Job { feature, k: Some(k) }))
            }
            FeatureKind::MogLabels | FeatureKind::MogSign => {
                jobs.extend(mog_k.iter().map(|&k| Job { feature, k: Some(k) }))
            }
            _ => jobs.push(Job { feature, k: None }),
        }
    }

    let mut rows = Vec::new();
    let mut model_files = Vec::new();
    let mut dmps = cfg.blur.dmps.clone();
    dmps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dmps.dedup();
    for &dmp in &dmps {
        let blurred = blur_library(&lib, dmp, cfg.blur.seed).and_then(|b| Ok((select(&b, &train_ids)?, select(&b, &test_ids)?)));
        let (train, test) = match blurred {
            Ok(parts) => parts,
            Err(e) => {
                let msg = format!("blur: {e}");
                for job in &jobs {
                    rows.extend(failed_rows(*job, dmp, &cfg.classifiers, &msg));
                }
                continue;
            }
        };

        // Chain models for every requested k at this dmp.
        let mut models: HashMap<usize, std::result::Result<Models, String>> = HashMap::new();
        if !all_k.is_empty() {
            let coeffs = train
                .spectra()
                .par_iter()
                .map(|s| uwt_with(&s.reflectance, &cfg.wavelet))
                .collect::<Result<Vec<_>>>();
            for &k in &all_k {
                let built = coeffs
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|c| train_model(c, train.grid(), k, &cfg.model.em).map_err(|e| format!("training k={k}: {e}")))
                    .and_then(|gmm| {
                        let mog = if mog_k.contains(&k) {
                            Some(collapse_model(&gmm).map_err(|e| format!("collapse k={k}: {e}"))?)
                        } else {
                            None
                        };
                        Ok(Models { gmm: Some(gmm), mog })
                    });
                if let (Ok(m), true) = (&built, cfg.model.save_models) {
                    let stem = format!("dmp{}_k{k}", dmp_tag(dmp));
                    if let Some(g) = &m.gmm {
                        let name = format!("models/{stem}_gmm.json");
                        save_model(g, out_dir.join(&name))?;
                        model_files.push(name);
                    }
                    if let Some(q) = &m.mog {
                        let name = format!("models/{stem}_mog.json");
                        save_mog_model(q, out_dir.join(&name))?;
                        model_files.push(name);
                    }
                }
                models.insert(k, built);
            }
        }

        let dmp_rows: Vec<ReportRow> = jobs
            .par_iter()
            .flat_map_iter(|job| {
                let mut ctx = FeatureContext::new(cfg.wavelet);
                if let Some(k) = job.k {
                    match &models[&k] {
                        Ok(m) => {
                            ctx.nhmc = m.gmm.as_ref();
                            ctx.mog = m.mog.as_ref();
                        }
                        Err(msg) => return failed_rows(*job, dmp, &cfg.classifiers, msg),
                    }
                }
                classify_job(*job, dmp, &train, &test, &ctx, &cfg.classifiers)
            })
            .collect();
        rows.extend(dmp_rows);
    }
    rows.sort_by_key(|r| r.key());

    let mut seeds = BTreeMap::new();
    seeds.insert("synthetic".to_string(), cfg.data.synthetic.seed);
    seeds.insert("balance".to_string(), cfg.data.balance_seed);
    seeds.insert("split".to_string(), cfg.split.seed);
    seeds.insert("blur".to_string(), cfg.blur.seed);
    seeds.insert("em".to_string(), cfg.model.em.seed);
    seeds.insert("svm_folds".to_string(), cfg.classifiers.svm_config.seed);
    let mut notes = vec![MIXING_NOTE.to_string()];
    if cfg.data.library.is_none() {
        notes.push("library generated synthetically from data.synthetic".to_string());
    }
    let report = BenchmarkReport {
        rows,
        metadata: ReportMetadata {
            config_hash: cfg.hash(),
            seeds,
            model_files,
            rejected,
            library_size: lib.len(),
            classes: lib.class_names().len(),
            notes,
        },
    };
    write_artifacts(&report, &out_dir)?;
    Ok(report)
}

fn failed_rows(job: Job, dmp: f64, cfg: &ClassifierConfig, msg: &str) -> Vec<ReportRow> {
    let mut specs: Vec<(Classifier, String)> =
        cfg.nn_metrics.iter().map(|m| (Classifier::Nn, m.as_str().to_string())).collect();
    if cfg.svm {
        specs.push((Classifier::Svm, "rbf".to_string()));
    }
    specs
        .into_iter()
        .map(|(classifier, metric)| ReportRow {
            feature: job.feature,
            classifier,
            metric,
            dmp,
            k: job.k,
            accuracy: None,
            error: msg.to_string(),
            runtime_ms: 0,
        })
        .collect()
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Writes report.csv, best_k.csv, plot_series.csv, summary.txt,
/// metadata.json and timings.csv into `dir`.
pub fn write_artifacts(report: &BenchmarkReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report.write_csv(create(&dir.join("report.csv"))?)?;
    report.write_best_k_csv(create(&dir.join("best_k.csv"))?)?;
    report.write_plot_series(create(&dir.join("plot_series.csv"))?)?;
    let summary = dir.join("summary.txt");
    fs::write(&summary, report.summary_text()).map_err(|e| Error::io(&summary, e))?;
    save_json(&report.metadata, dir.join("metadata.json"))?;
    let mut w = csv::Writer::from_writer(create(&dir.join("timings.csv"))?);
    w.write_record(["feature_kind", "classifier", "metric", "dmp", "k", "runtime_ms"])?;
    for r in &report.rows {
        w.write_record([
            r.feature.as_str(),
            r.classifier.as_str(),
            &r.metric,
            &format!("{:.2}", r.dmp),
            &fmt_k(r.k),
            &r.runtime_ms.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;
    Ok(())
}

/// Reads a report CSV back (used by plot export).
pub fn read_report_csv(path: &Path) -> Result<BenchmarkReport> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| Error::Parse {
            row: i + 1,
            sample_id: "<report>".into(),
            message: m,
        };
        let field = |j: usize| rec.get(j).unwrap_or("");
        let feature: FeatureKind = field(0).parse().map_err(|e: Error| bad(e.to_string()))?;
        let classifier = match field(1) {
            "nn" => Classifier::Nn,
            "svm" => Classifier::Svm,
            other => return Err(bad(format!("unknown classifier `{other}`"))),
        };
        let dmp: f64 = field(3).parse().map_err(|e| bad(format!("dmp: {e}")))?;
        let k = match field(4) {
            "" => None,
            s => Some(s.parse().map_err(|e| bad(format!("k: {e}")))?),
        };
        let accuracy = match field(5) {
            "" => None,
            s => Some(s.parse().map_err(|e| bad(format!("accuracy: {e}")))?),
        };
        rows.push(ReportRow {
            feature,
            classifier,
            metric: field(2).to_string(),
            dmp,
            k,
            accuracy,
            error: field(6).to_string(),
            runtime_ms: 0,
        });
    }
    Ok(BenchmarkReport {
        rows,
        metadata: ReportMetadata {
            config_hash: String::new(),
            seeds: BTreeMap::new(),
            model_files: Vec::new(),
            rejected: Vec::new(),
            library_size: 0,
            classes: 0,
            notes: Vec::new(),
        },
    })
}
