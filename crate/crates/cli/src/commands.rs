//! Subcommand implementations. Every artifact lives under the configured
//! work directory and is rewritten in full on each run.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use spd_bci_core::data::{read_record, read_segment, write_record, write_segment, CsvManifest, FileKind, MatrixRecord};
use spd_bci_core::data::ingest_csv;
use spd_bci_core::features::StftPlan;
use spd_bci_core::spd::TangentConfig;
use spd_bci_core::{EegSegment, Label};
use spd_bci_nn::model::{load_checkpoint, to_checkpoint, ArchitectureConfig, Dataset, Metrics, SpatioTemporalNet};
use spd_bci_nn::Checkpoint;

use crate::config::{PipelineConfig, RankMode, Task, VariantName};
use crate::error::{io_at, missing, CliError, CliResult};
use crate::pipeline::{self, Extractor, TrialFeatures};

const RANK_TENSOR: &str = "meta.rank";

fn list_files(dir: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(missing(dir.to_path_buf(), "directory"));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_at(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Removes and recreates a generated directory.
fn fresh_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io_at(dir))?;
    }
    fs::create_dir_all(dir).map_err(io_at(dir))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    fs::write(path, text).map_err(io_at(path))
}

pub fn synth(cfg: &PipelineConfig) -> CliResult<()> {
    let segments = pipeline::synthesize(&cfg.profile, &cfg.synthetic, cfg.seed)?;
    fresh_dir(&cfg.raw_dir)?;
    for (i, s) in segments.iter().enumerate() {
        let path = cfg.raw_dir.join(format!("trial-{i:05}.eegs"));
        write_segment(&path, s).map_err(|e| CliError::from(e).at(&path))?;
    }
    println!("wrote {} trials to {}", segments.len(), cfg.raw_dir.display());
    Ok(())
}

pub fn preprocess(cfg: &PipelineConfig) -> CliResult<()> {
    let mut inputs: Vec<(String, CliResult<EegSegment>)> = list_files(&cfg.raw_dir, "eegs")?
        .into_iter()
        .map(|p| (stem(&p), read_segment(&p).map_err(|e| CliError::from(e).at(&p))))
        .collect();
    if let Some((csv, manifest)) = &cfg.csv {
        let m = CsvManifest::load(manifest).map_err(|e| CliError::from(e).at(manifest))?;
        let segments = ingest_csv(csv, &m).map_err(|e| CliError::from(e).at(csv))?;
        let name = stem(csv);
        inputs.extend(segments.into_iter().enumerate().map(|(i, s)| (format!("{name}-{i:05}"), Ok(s))));
    }
    if inputs.is_empty() {
        return Err(CliError::Data(format!("{}: empty dataset, no segment files", cfg.raw_dir.display())));
    }
    let out_dir = cfg.preprocessed_dir();
    fresh_dir(&out_dir)?;
    let results: Vec<CliResult<()>> = inputs
        .into_par_iter()
        .map(|(name, seg)| {
            let path = out_dir.join(format!("{name}.eegs"));
            let clean = pipeline::preprocess_segment(&seg?, &cfg.profile, cfg.normalize).map_err(|e| e.at(&path))?;
            write_segment(&path, &clean).map_err(|e| CliError::from(e).at(&path))
        })
        .collect();
    let mut written = 0;
    for r in results {
        match r {
            Ok(()) => written += 1,
            Err(e) if cfg.continue_on_error => log::error!("skipped: {e}"),
            Err(e) => return Err(e),
        }
    }
    if written == 0 {
        return Err(CliError::Data("every segment failed preprocessing".into()));
    }
    println!("preprocessed {written} segments into {}", out_dir.display());
    Ok(())
}

fn temporal_dir(cfg: &PipelineConfig, split: &str) -> PathBuf {
    cfg.features_dir().join("temporal").join(split)
}

fn spatial_dir(cfg: &PipelineConfig, rank: usize, split: &str) -> PathBuf {
    cfg.features_dir().join(format!("rank-{rank}")).join(split)
}

fn tangent_config(cfg: &PipelineConfig) -> TangentConfig {
    TangentConfig { scope: cfg.filter_scope, ridge: cfg.ridge, ..TangentConfig::new(cfg.rank) }
}

pub fn features(cfg: &PipelineConfig) -> CliResult<()> {
    let in_dir = cfg.preprocessed_dir();
    let files = list_files(&in_dir, "eegs")?;
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: empty dataset, run preprocess first", in_dir.display())));
    }
    let extractor = Extractor::new(&cfg.profile, cfg.estimator)?;
    let trials: Vec<TrialFeatures> = files
        .par_iter()
        .map(|p| {
            let seg = read_segment(p).map_err(|e| CliError::from(e).at(p))?;
            let seg = pipeline::conform(&seg, &cfg.profile, &extractor.plan).map_err(|e| e.at(p))?;
            extractor.extract(&seg).map_err(|e| e.at(p))
        })
        .collect::<CliResult<_>>()?;
    let width = cfg.profile.feature_width();
    for (t, p) in trials.iter().zip(&files) {
        if t.temporal.shape() != (extractor.plan.windows, width) {
            return Err(CliError::Data(format!(
                "{}: feature sequence {:?}, expected {:?}",
                p.display(),
                t.temporal.shape(),
                (extractor.plan.windows, width)
            )));
        }
    }
    let labels: Vec<Label> = trials.iter().map(|t| t.label).collect();
    pipeline::targets(&labels, &cfg.profile)?;
    let (train_idx, test_idx) = pipeline::split_indices(&labels, cfg.test_fraction, cfg.seed);
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(CliError::Data(format!("{} trials cannot be split into train and test", trials.len())));
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| trials[i].clone()).collect::<Vec<_>>();
    let (train, test) = (pick(&train_idx), pick(&test_idx));

    fresh_dir(&cfg.features_dir())?;
    let fs = cfg.profile.fs;
    for (split, idx) in [("train", &train_idx), ("test", &test_idx)] {
        let dir = temporal_dir(cfg, split);
        fresh_dir(&dir)?;
        for &i in idx.iter() {
            let path = dir.join(format!("{}.eegt", stem(&files[i])));
            let rec = MatrixRecord { values: trials[i].temporal.clone(), fs, label: trials[i].label };
            write_record(&path, FileKind::Temporal, &rec).map_err(|e| CliError::from(e).at(&path))?;
        }
    }

    let tcfg = tangent_config(cfg);
    cfg.ranks()
        .into_par_iter()
        .map(|rank| -> CliResult<()> {
            let (fitted, rest) = pipeline::tangent_features(&train, &[&test], rank, &tcfg, cfg.reference)?;
            let expected = cfg.profile.spatial_width(rank);
            for (split, idx, vecs) in [("train", &train_idx, &fitted), ("test", &test_idx, &rest[0])] {
                let dir = spatial_dir(cfg, rank, split);
                fresh_dir(&dir)?;
                for (&i, v) in idx.iter().zip(vecs) {
                    if v.len() != expected {
                        return Err(CliError::Data(format!(
                            "{}: tangent vector of length {}, expected {expected}",
                            files[i].display(),
                            v.len()
                        )));
                    }
                    let path = dir.join(format!("{}.eegp", stem(&files[i])));
                    let rec = MatrixRecord { values: DMatrix::from_row_slice(1, v.len(), v.as_slice()), fs, label: trials[i].label };
                    write_record(&path, FileKind::Spatial, &rec).map_err(|e| CliError::from(e).at(&path))?;
                }
            }
            Ok(())
        })
        .collect::<CliResult<Vec<()>>>()?;
    println!(
        "features: {} train / {} test trials, F = {width}, L = {}, spatial = {}",
        train_idx.len(),
        test_idx.len(),
        extractor.plan.windows,
        cfg.ranks().iter().map(|&r| cfg.profile.spatial_width(r).to_string()).collect::<Vec<_>>().join(",")
    );
    Ok(())
}

/// Loads one split at one rank, checking every file against the profile.
fn load_split(cfg: &PipelineConfig, rank: usize, split: &str) -> CliResult<(Dataset, Vec<Label>)> {
    let dir = temporal_dir(cfg, split);
    let files = list_files(&dir, "eegt")?;
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: empty dataset, run features first", dir.display())));
    }
    let windows = StftPlan::new(cfg.profile.segment_seconds, cfg.profile.fs)?.windows;
    let width = cfg.profile.feature_width();
    let s_width = cfg.profile.spatial_width(rank);
    let sdir = spatial_dir(cfg, rank, split);
    let mut temporal = Vec::with_capacity(files.len());
    let mut spatial = Vec::with_capacity(files.len());
    let mut labels = Vec::with_capacity(files.len());
    for p in &files {
        let t = read_record(p, FileKind::Temporal).map_err(|e| CliError::from(e).at(p))?;
        if t.values.shape() != (windows, width) {
            return Err(CliError::Data(format!(
                "{}: temporal features {:?}, profile expects {:?}",
                p.display(),
                t.values.shape(),
                (windows, width)
            )));
        }
        let sp = sdir.join(format!("{}.eegp", stem(p)));
        if !sp.exists() {
            return Err(missing(sp, "spatial feature file"));
        }
        let s = read_record(&sp, FileKind::Spatial).map_err(|e| CliError::from(e).at(&sp))?;
        if s.values.len() != s_width {
            return Err(CliError::Data(format!(
                "{}: tangent vector of length {}, rank {rank} expects {s_width}",
                sp.display(),
                s.values.len()
            )));
        }
        if s.label != t.label {
            return Err(CliError::Data(format!("{}: label disagrees with {}", sp.display(), p.display())));
        }
        temporal.push(t.values);
        spatial.push(DVector::from_iterator(s_width, s.values.iter().copied()));
        labels.push(t.label);
    }
    let data = pipeline::dataset(temporal, spatial, &labels, &cfg.profile)?;
    Ok((data, labels))
}

fn metric_names(task: Task) -> [&'static str; 2] {
    match task {
        Task::Classification { .. } => ["accuracy", "kappa"],
        Task::Regression => ["rmse", "pcc"],
    }
}

fn metric_values(m: &Metrics) -> [f64; 2] {
    match m {
        Metrics::Classification(c) => [c.accuracy, c.kappa],
        Metrics::Regression(r) => [r.rmse, r.pcc],
    }
}

fn variant_arch(cfg: &PipelineConfig, v: VariantName) -> ArchitectureConfig {
    let (fusion, streams) = v.modes();
    ArchitectureConfig { fusion, streams, ..cfg.arch.clone() }
}

fn save_model(path: &Path, fitted: &mut pipeline::Fitted, rank: usize) -> CliResult<()> {
    let mut ck = to_checkpoint(&mut fitted.net, Some(&fitted.adam));
    ck.insert(RANK_TENSOR, DMatrix::from_element(1, 1, rank as f64));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    ck.save(path).map_err(|e| CliError::from(e).at(path))
}

fn stored_rank(ck: &Checkpoint, path: &Path) -> CliResult<usize> {
    let r = ck
        .get(RANK_TENSOR)
        .map_err(|_| CliError::Config(format!("{}: checkpoint lacks {RANK_TENSOR}", path.display())))?;
    Ok(r[(0, 0)] as usize)
}

pub fn train(cfg: &PipelineConfig) -> CliResult<()> {
    let rank = match cfg.rank_mode {
        RankMode::Fixed => cfg.rank,
        RankMode::Grid => grid_search(cfg)?,
    };
    let (data, _) = load_split(cfg, rank, "train")?;
    let mut fitted = pipeline::fit(&cfg.arch, &cfg.train, &data)?;
    save_model(&cfg.model_path(), &mut fitted, rank)?;
    let metric = match cfg.profile.task {
        Task::Classification { .. } => "accuracy",
        Task::Regression => "rmse",
    };
    write_text(&cfg.log_path(), &fitted.log.to_jsonl(metric))?;
    println!(
        "trained {} at rank {rank}: final loss {:.6}, checkpoint {}",
        cfg.variant.label(),
        fitted.log.final_loss().unwrap_or(f64::NAN),
        cfg.model_path().display()
    );
    Ok(())
}

/// Fits every rank on a train/validation split of the training set, writes
/// one row per rank and metric, and returns the best rank (lowest on ties).
fn grid_search(cfg: &PipelineConfig) -> CliResult<usize> {
    let ranks = cfg.ranks();
    let rows: Vec<(usize, Metrics)> = ranks
        .par_iter()
        .map(|&rank| -> CliResult<(usize, Metrics)> {
            let (data, labels) = load_split(cfg, rank, "train")?;
            let (fit_idx, val_idx) =
                pipeline::split_indices(&labels, cfg.validation_fraction, cfg.seed.wrapping_add(1));
            if val_idx.is_empty() {
                return Err(CliError::Data("training set too small for a validation split".into()));
            }
            let (_, m) = pipeline::fit_and_score(&cfg.arch, &cfg.train, &data.subset(&fit_idx), &data.subset(&val_idx))?;
            log::info!("rank {rank}: score {:.4}", pipeline::score(&m));
            Ok((rank, m))
        })
        .collect::<CliResult<_>>()?;
    let names = metric_names(cfg.profile.task);
    let mut csv = String::from("rank,metric,value\n");
    for (rank, m) in &rows {
        for (name, v) in names.iter().zip(metric_values(m)) {
            csv.push_str(&format!("{rank},{name},{v}\n"));
        }
    }
    write_text(&cfg.grid_path(), &csv)?;
    let best = rows
        .iter()
        .fold(None::<(usize, f64)>, |acc, (r, m)| {
            let s = pipeline::score(m);
            match acc {
                Some((_, best)) if best >= s => acc,
                _ => Some((*r, s)),
            }
        })
        .map(|(r, _)| r)
        .ok_or_else(|| CliError::Config("empty rank grid".into()))?;
    println!("grid search over R = 1..{}: selected R = {best}", ranks.len());
    Ok(best)
}

/// Metrics file contents.
#[derive(Debug, Serialize)]
pub struct MetricsReport {
    pub profile: &'static str,
    pub variant: &'static str,
    pub rank: usize,
    pub task: &'static str,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pcc: Option<f64>,
}

impl MetricsReport {
    fn new(cfg: &PipelineConfig, variant: VariantName, rank: usize, n: usize, m: &Metrics) -> Self {
        let mut r = MetricsReport {
            profile: cfg.profile.name.label(),
            variant: variant.label(),
            rank,
            task: "classification",
            n,
            accuracy: None,
            kappa: None,
            confusion: None,
            rmse: None,
            pcc: None,
        };
        match m {
            Metrics::Classification(c) => {
                r.accuracy = Some(c.accuracy);
                r.kappa = Some(c.kappa);
                r.confusion = Some(c.confusion.clone());
            }
            Metrics::Regression(g) => {
                r.task = "regression";
                r.rmse = Some(g.rmse);
                r.pcc = Some(g.pcc);
            }
        }
        r
    }

    fn table(&self) -> String {
        let mut out = format!("{:<10} {}\n{:<10} {}\n{:<10} {}\n", "profile", self.profile, "variant", self.variant, "n", self.n);
        for (k, v) in [("accuracy", self.accuracy), ("kappa", self.kappa), ("rmse", self.rmse), ("pcc", self.pcc)] {
            if let Some(v) = v {
                out.push_str(&format!("{k:<10} {v:.4}\n"));
            }
        }
        if let Some(c) = &self.confusion {
            out.push_str("confusion (rows = truth)\n");
            for row in c {
                out.push_str(&row.iter().map(|v| format!("{v:>6}")).collect::<String>());
                out.push('\n');
            }
        }
        out
    }
}

fn load_model(cfg: &PipelineConfig, arch: &ArchitectureConfig, path: &Path, data: &Dataset) -> CliResult<SpatioTemporalNet> {
    let ck = Checkpoint::load(path).map_err(|e| CliError::from(e).at(path))?;
    let mut net = SpatioTemporalNet::new(arch.clone(), pipeline::input_dims(data)?, cfg.seed)?;
    load_checkpoint(&mut net, &ck)
        .map_err(|e| CliError::Config(format!("{}: checkpoint does not match the configuration: {e}", path.display())))?;
    Ok(net)
}

/// Rank the saved model was trained at; fixed mode insists it matches.
fn model_rank(cfg: &PipelineConfig) -> CliResult<usize> {
    let path = cfg.model_path();
    if !path.exists() {
        return Err(missing(path, "checkpoint"));
    }
    let ck = Checkpoint::load(&path).map_err(|e| CliError::from(e).at(&path))?;
    let rank = stored_rank(&ck, &path)?;
    if cfg.rank_mode == RankMode::Fixed && rank != cfg.rank {
        return Err(CliError::Config(format!(
            "{}: checkpoint trained at rank {rank}, configuration says {}",
            path.display(),
            cfg.rank
        )));
    }
    Ok(rank)
}

pub fn evaluate(cfg: &PipelineConfig) -> CliResult<()> {
    let rank = model_rank(cfg)?;
    let (test, _) = load_split(cfg, rank, "test")?;
    let mut net = load_model(cfg, &cfg.arch, &cfg.model_path(), &test)?;
    let metrics = spd_bci_nn::model::evaluate(&mut net, &test)?;
    let report = MetricsReport::new(cfg, cfg.variant, rank, test.len(), &metrics);
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
    write_text(&cfg.metrics_path, &(json + "\n"))?;
    print!("{}", report.table());
    Ok(())
}

pub fn ablate(cfg: &PipelineConfig) -> CliResult<()> {
    if cfg.ablate.is_empty() {
        return Err(CliError::Usage("ablate.variants is empty".into()));
    }
    let rank = match cfg.rank_mode {
        RankMode::Fixed => cfg.rank,
        RankMode::Grid => model_rank(cfg)?,
    };
    let (train, _) = load_split(cfg, rank, "train")?;
    let (test, _) = load_split(cfg, rank, "test")?;
    let dir = cfg.work_dir.join("ablation");
    let results: Vec<Metrics> = cfg
        .ablate
        .par_iter()
        .map(|&v| -> CliResult<Metrics> {
            let arch = variant_arch(cfg, v);
            let path = dir.join(format!("{}.ckpt", v.label()));
            let mut net = if path.exists() {
                load_model(cfg, &arch, &path, &train)?
            } else if cfg.ablate_train_missing {
                let mut fitted = pipeline::fit(&arch, &cfg.train, &train)?;
                save_model(&path, &mut fitted, rank)?;
                fitted.net
            } else {
                return Err(missing(path, "variant checkpoint"));
            };
            Ok(spd_bci_nn::model::evaluate(&mut net, &test)?)
        })
        .collect::<CliResult<_>>()?;
    let names = metric_names(cfg.profile.task);
    let mut csv = String::from("variant,metric,value\n");
    println!("{:<22}{:>10}{:>10}", "variant", names[0], names[1]);
    for (v, m) in cfg.ablate.iter().zip(&results) {
        let vals = metric_values(m);
        for (name, x) in names.iter().zip(vals) {
            csv.push_str(&format!("{},{name},{x}\n", v.label()));
        }
        println!("{:<22}{:>10.4}{:>10.4}", v.label(), vals[0], vals[1]);
    }
    write_text(&cfg.ablation_path(), &csv)
}
