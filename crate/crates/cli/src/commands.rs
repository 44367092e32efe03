use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nhmc_core::benchmark::{read_report_csv, run_benchmark, write_artifacts, BenchmarkConfig, MIXING_NOTE};
use nhmc_core::classify::{
    evaluate_accuracy, extract_features, nn_classify_all, svm_train, FeatureContext, FeatureKind, NnMetric,
    SvmConfig,
};
use nhmc_core::dataset::synthetic::{synthetic_library, SyntheticConfig};
use nhmc_core::dataset::{balance_classes, blur_library, preprocess, split_train_test, SpectralLibrary, Spectrum};
use nhmc_core::labeling::{add_signs, label_spectrum, spectrum_coeffs, LabelArray};
use nhmc_core::model_io::{load_any_model, save_json, save_model, save_mog_model, AnyModel};
use nhmc_core::mog::{collapse_model, label_spectrum_mog, spectrum_coeffs_mog, MogModel};
use nhmc_core::nhmc::{train_model, EmConfig, NhmcModel};
use nhmc_core::semantics::summarize;
use nhmc_core::wavelet::{uwt_with, Wavelet, WaveletConfig};
use serde::de::DeserializeOwned;

use crate::Command;

/// Environment variable that caps the worker pool.
pub const WORKERS_ENV: &str = "NHMC_WORKERS";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Core(nhmc_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(nhmc_core::Error::Config(_)) => 2,
            CliError::Runtime(_) | CliError::Core(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<nhmc_core::Error> for CliError {
    fn from(e: nhmc_core::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Unknown keys surface as config errors that name the key.
fn parse_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.to_string().trim_end())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn load(path: &Path) -> Result<SpectralLibrary> {
    Ok(SpectralLibrary::load(path)?)
}

fn summary(lib: &SpectralLibrary) -> String {
    let hist: Vec<String> = lib.class_histogram().iter().map(|(c, n)| format!("{c}:{n}")).collect();
    format!("{} spectra, {} bands, classes [{}]", lib.len(), lib.grid().len(), hist.join(" "))
}

pub fn dispatch(workspace: &Path, command: Command) -> Result<()> {
    let at = |p: &PathBuf| workspace.join(p);
    match command {
        Command::Ingest { input, output } => {
            let lib = load(&at(&input))?.sorted();
            lib.save(at(&output))?;
            println!("ingested {}", summary(&lib));
        }
        Command::Synth {
            output,
            config,
            seed,
            per_class,
            dips,
        } => {
            let mut cfg: SyntheticConfig = match &config {
                Some(p) => parse_toml(&at(p))?,
                None => SyntheticConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = per_class {
                cfg.per_class = n;
            }
            let syn = synthetic_library(&cfg)?;
            syn.library.save(at(&output))?;
            if let Some(p) = dips {
                save_json(&syn.sample_dips, at(&p))?;
            }
            println!("generated {}", summary(&syn.library));
        }
        Command::Preprocess {
            input,
            output,
            lo,
            hi,
            step,
            rejected,
        } => {
            let (lib, rejections) = preprocess(&load(&at(&input))?, (lo, hi), step)?;
            lib.save(at(&output))?;
            if let Some(p) = rejected {
                let path = at(&p);
                let mut out = create(&path)?;
                let io = write_err(&path);
                writeln!(out, "sample_id,reason").map_err(&io)?;
                for r in &rejections {
                    writeln!(out, "{},{}", r.sample_id, r.reason.replace(',', ";")).map_err(&io)?;
                }
                out.flush().map_err(&io)?;
            }
            println!("kept {}; rejected {}", summary(&lib), rejections.len());
        }
        Command::Balance {
            input,
            output,
            per_class,
            seed,
        } => {
            let lib = balance_classes(&load(&at(&input))?, per_class, seed)?;
            lib.save(at(&output))?;
            println!("note: {MIXING_NOTE}");
            println!("balanced {}", summary(&lib));
        }
        Command::Split {
            input,
            train,
            test,
            train_per_class,
            test_per_class,
            seed,
        } => {
            let (tr, te) = split_train_test(&load(&at(&input))?, train_per_class, test_per_class, seed)?;
            tr.save(at(&train))?;
            te.save(at(&test))?;
            println!("train {}; test {}", summary(&tr), summary(&te));
        }
        Command::Blur {
            input,
            output,
            dmp,
            seed,
        } => {
            let lib = blur_library(&load(&at(&input))?, dmp, seed)?;
            lib.save(at(&output))?;
            println!("blurred {} at dmp {dmp:.2}", summary(&lib));
        }
        Command::Train {
            input,
            output,
            k,
            levels,
            wavelet,
            em,
        } => {
            let wavelet = WaveletConfig {
                wavelet: wavelet.parse::<Wavelet>().map_err(|e| CliError::Config(e.to_string()))?,
                levels,
            };
            let em: EmConfig = match &em {
                Some(p) => parse_toml(&at(p))?,
                None => EmConfig::default(),
            };
            let model = train(&load(&at(&input))?, k, &wavelet, &em)?;
            save_model(&model, at(&output))?;
            let converged = model.meta.converged.iter().filter(|&&c| c).count();
            println!(
                "trained k={k} on {} wavelengths, {converged} converged, {} warnings",
                model.bands(),
                model.meta.warnings.len()
            );
        }
        Command::Collapse { model, output } => {
            let gmm = match load_any_model(at(&model))? {
                AnyModel::Gmm(m) => m,
                AnyModel::Mog(_) => return Err(CliError::Runtime("model is already collapsed".into())),
            };
            let mog = collapse_model(&gmm)?;
            save_mog_model(&mog, at(&output))?;
            for w in &mog.warnings {
                eprintln!("warning: {w}");
            }
            println!("collapsed k={} model over {} wavelengths", mog.k, mog.bands());
        }
        Command::Label {
            model,
            input,
            output,
            signs,
        } => {
            let model = load_any_model(at(&model))?;
            let lib = load(&at(&input))?;
            let labels = lib
                .spectra()
                .iter()
                .map(|s| label_one(s, &model, signs))
                .collect::<Result<Vec<_>>>()?;
            let path = at(&output);
            let mut out = create(&path)?;
            write_label_table(&lib, &labels, &mut out).map_err(write_err(&path))?;
            out.flush().map_err(write_err(&path))?;
            println!("labeled {} spectra", lib.len());
        }
        Command::Classify {
            train,
            test,
            feature,
            model,
            classifier,
            metric,
            levels,
            svm_config,
            predictions,
        } => {
            let kind: FeatureKind = feature.parse()?;
            let train_lib = load(&at(&train))?;
            let test_lib = load(&at(&test))?;
            let loaded = model.as_ref().map(|p| load_any_model(at(p))).transpose()?;
            let (gmm, mog) = models_for(kind, loaded)?;
            let wavelet = gmm
                .as_ref()
                .map(|m| m.wavelet)
                .or(mog.as_ref().map(|m| m.wavelet))
                .unwrap_or(WaveletConfig {
                    wavelet: Wavelet::Haar,
                    levels,
                });
            let mut ctx = FeatureContext::new(wavelet);
            ctx.nhmc = gmm.as_ref();
            ctx.mog = mog.as_ref();
            let train_set = extract_features(&train_lib, kind, &ctx)?;
            let test_set = extract_features(&test_lib, kind, &ctx)?;
            let predicted = match classifier.as_str() {
                "nn" => nn_classify_all(&train_set, &test_set, metric.parse::<NnMetric>()?)?,
                "svm" => {
                    let cfg: SvmConfig = match &svm_config {
                        Some(p) => parse_toml(&at(p))?,
                        None => SvmConfig::default(),
                    };
                    let svm = svm_train(&train_set, &cfg)?;
                    println!("svm: C={} gamma={} cv accuracy {:.4}", svm.c, svm.gamma, svm.cv_accuracy);
                    for w in &svm.warnings {
                        eprintln!("warning: {w}");
                    }
                    svm.predict_all(&test_set)?
                }
                other => return Err(CliError::Config(format!("unknown classifier `{other}` (expected nn or svm)"))),
            };
            let report = evaluate_accuracy(&predicted, test_set.class_ids())?;
            if let Some(p) = predictions {
                let path = at(&p);
                let mut out = create(&path)?;
                let io = write_err(&path);
                writeln!(out, "sample_id,class,predicted").map_err(&io)?;
                for (s, p) in test_lib.spectra().iter().zip(&predicted) {
                    writeln!(out, "{},{},{}", s.sample_id, s.class_id, p).map_err(&io)?;
                }
                out.flush().map_err(&io)?;
            }
            println!("accuracy {:.4} ({}/{})", report.overall, report.correct, report.total);
            for (c, r) in &report.per_class {
                println!("  class {c}: {r:.4}");
            }
        }
        Command::Semantics {
            model,
            input,
            output,
            colored_dir,
        } => {
            // Band detection reads binary labels, so GMM models are collapsed first.
            let model = match load_any_model(at(&model))? {
                AnyModel::Gmm(m) => AnyModel::Mog(collapse_model(&m)?),
                mog => mog,
            };
            let lib = load(&at(&input))?;
            let path = at(&output);
            let mut out = create(&path)?;
            let io = write_err(&path);
            writeln!(out, "sample_id,class,band_count,bands_um").map_err(&io)?;
            for s in lib.spectra() {
                let labels = label_one(s, &model, true)?;
                let sem = summarize(&labels, lib.grid())?;
                let bands: Vec<String> = sem.band_locations.iter().map(|b| format!("{b:.4}")).collect();
                writeln!(out, "{},{},{},{}", s.sample_id, s.class_id, bands.len(), bands.join(";")).map_err(&io)?;
                if let Some(dir) = &colored_dir {
                    let p = at(dir).join(format!("{}.csv", s.sample_id));
                    let mut f = create(&p)?;
                    sem.write_colored_csv(lib.grid(), &s.reflectance, &mut f)?;
                    f.flush().map_err(write_err(&p))?;
                }
            }
            out.flush().map_err(&io)?;
            println!("band locations for {} spectra written to {}", lib.len(), path.display());
        }
        Command::ExportPlotData { report, output } => {
            let report = read_report_csv(&at(&report))?;
            let path = at(&output);
            let mut out = create(&path)?;
            report.write_plot_series(&mut out)?;
            out.flush().map_err(write_err(&path))?;
            println!("plot series written to {}", path.display());
        }
        Command::Run { config } => {
            let cfg: BenchmarkConfig = match &config {
                Some(p) => parse_toml(&at(p))?,
                None => BenchmarkConfig::default(),
            };
            println!("note: {MIXING_NOTE}");
            let report = run_benchmark(&cfg, workspace)?;
            let dir = workspace.join(&cfg.output);
            write_artifacts(&report, &dir)?;
            println!("{}", report.summary_text());
            let failed = report.rows.iter().filter(|r| !r.error.is_empty()).count();
            if failed > 0 {
                eprintln!("warning: {failed} configurations failed; see report.csv");
            }
            println!("artifacts written to {}", dir.display());
        }
        Command::DefaultConfig => {
            let text = toml::to_string_pretty(&BenchmarkConfig::default())
                .map_err(|e| CliError::Runtime(format!("cannot render config: {e}")))?;
            print!("{text}");
        }
    }
    Ok(())
}

/// Same pipeline as the benchmark: UWT of every spectrum, then one chain per wavelength.
pub fn train(lib: &SpectralLibrary, k: usize, wavelet: &WaveletConfig, em: &EmConfig) -> Result<NhmcModel<f64>> {
    let coeffs = lib
        .spectra()
        .iter()
        .map(|s| uwt_with(&s.reflectance, wavelet))
        .collect::<nhmc_core::Result<Vec<_>>>()?;
    Ok(train_model(&coeffs, lib.grid(), k, em)?)
}

fn label_one(s: &Spectrum, model: &AnyModel, signs: bool) -> Result<LabelArray> {
    Ok(match model {
        AnyModel::Gmm(m) => {
            let labels = label_spectrum(s, m)?;
            if signs {
                add_signs(&labels, &spectrum_coeffs(s, m)?)?
            } else {
                labels
            }
        }
        AnyModel::Mog(m) => {
            let labels = label_spectrum_mog(s, m)?;
            if signs {
                add_signs(&labels, &spectrum_coeffs_mog(s, m)?)?
            } else {
                labels
            }
        }
    })
}

fn models_for(
    kind: FeatureKind,
    loaded: Option<AnyModel>,
) -> Result<(Option<NhmcModel<f64>>, Option<MogModel<f64>>)> {
    if !kind.needs_model() {
        return Ok((None, None));
    }
    let Some(model) = loaded else {
        return Err(CliError::Config(format!("feature {kind} needs --model")));
    };
    match (kind.is_mog(), model) {
        (false, AnyModel::Gmm(m)) => Ok((Some(m), None)),
        (false, AnyModel::Mog(_)) => Err(CliError::Config(format!("feature {kind} needs an uncollapsed model"))),
        (true, AnyModel::Mog(m)) => Ok((None, Some(m))),
        (true, AnyModel::Gmm(m)) => Ok((None, Some(collapse_model(&m)?))),
    }
}

/// Long format: one row per spectrum and scale, coarsest scale first.
pub fn write_label_table<W: Write>(lib: &SpectralLibrary, labels: &[LabelArray], out: &mut W) -> std::io::Result<()> {
    write!(out, "sample_id,class,scale")?;
    for w in lib.grid() {
        write!(out, ",{w:.6}")?;
    }
    writeln!(out)?;
    for (s, l) in lib.spectra().iter().zip(labels) {
        for r in 0..l.levels() {
            write!(out, "{},{},{}", s.sample_id, s.class_id, r)?;
            for n in 0..l.bands() {
                write!(out, ",{}", l.get(r, n))?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
