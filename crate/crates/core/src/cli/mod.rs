//! The `dynkt` command line.
//!
//! Every command resolves a [`RunConfig`] from defaults, an optional
//! `--config` file, `--set key=value` overrides and command flags, in that
//! order, and writes the resolved configuration next to its outputs.

pub mod config;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{classical_mds, pairwise_distances, skill_cluster_score};
use crate::data::{generate_synthetic, load_assistments, load_cognitive_tutor, split_students, Dataset, DedupPolicy};
use crate::dynamics::{train_end_to_end, train_student_dyn, train_dkt, E2eInit, EncoderMode, HeldOut, TrainingRecord};
use crate::embedding::{train_mf, FactorModel};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_most_recent, evaluate_new_user, learning_curves, write_curves_csv, EvalReport};
use crate::mathcore::SeededRng;

pub use config::{Provenance, RunConfig, KEYS};

#[derive(Debug, Parser)]
#[command(name = "dynkt", version, about = "Knowledge tracing with static question embeddings and LSTM student dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// key=value file applied over the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceFormat {
    Assistments,
    CognitiveTutor,
    Canonical,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Discard,
    Merge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainModel {
    Bmf,
    Dynemb,
    DynembConcat,
    Dkt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    NewUser,
    MostRecent,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a raw export into the canonical interaction format.
    Ingest {
        #[arg(long, value_enum)]
        format: SourceFormat,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "discard")]
        policy: PolicyArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic interactions plus their ground truth.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth JSON.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Train a model and save it.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        model: Option<TrainModel>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Train question embeddings jointly, starting from random.
        #[arg(long, conflicts_with = "e2e_pretrained")]
        e2e: bool,
        /// Train question embeddings jointly, starting from a factorization.
        #[arg(long)]
        e2e_pretrained: bool,
    },
    /// Run an online evaluation protocol and write a JSON report.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        /// bmf | bmf_online | dynemb | dynemb_concat | dkt
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the pipeline across embedding dimensions.
    SweepDim {
        #[command(flatten)]
        common: Common,
        /// Comma-separated dimensions.
        #[arg(long)]
        dims: Option<String>,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project question embeddings of a factor model to 2-D.
    Mds {
        #[command(flatten)]
        common: Common,
        /// Factor model file.
        #[arg(long)]
        model: PathBuf,
        /// Dataset supplying question and skill ids.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        sample_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

fn resolve(common: &Common, flags: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for pair in &common.set {
        cfg.apply_pair(pair)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", seed.to_string())?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v.clone())?;
        }
    }
    Ok(cfg)
}

fn path_flag(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.get("data");
    if path.is_empty() {
        return Err(Error::config("data", "no data file given"));
    }
    Dataset::load_canonical(path)
}

fn write_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    fs::write(path, cfg.to_text())?;
    Ok(())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            format,
            input,
            policy,
            out,
        } => cmd_ingest(format, &input, policy, &out),
        Command::Synth { common, out, truth } => {
            let cfg = resolve(&common, &[])?;
            cmd_synth(&cfg, &out, &truth)
        }
        Command::Train {
            common,
            model,
            data,
            out_dir,
            e2e,
            e2e_pretrained,
        } => {
            let name = model.map(|m| {
                match m {
                    TrainModel::Bmf => "bmf",
                    TrainModel::Dynemb => "dynemb",
                    TrainModel::DynembConcat => "dynemb_concat",
                    TrainModel::Dkt => "dkt",
                }
                .to_owned()
            });
            let cfg = resolve(&common, &[("model", name), ("data", path_flag(&data))])?;
            let mode = match (e2e, e2e_pretrained) {
                (true, _) => TrainMode::EndToEndRandom,
                (_, true) => TrainMode::EndToEndPretrained,
                _ => TrainMode::TwoPhase,
            };
            cmd_train(&cfg, mode, &out_dir)
        }
        Command::Eval {
            common,
            protocol,
            model,
            data,
            batch_size,
            out,
        } => {
            let protocol = protocol.map(|p| match p {
                ProtocolArg::NewUser => "new-user".to_owned(),
                ProtocolArg::MostRecent => "most-recent".to_owned(),
            });
            let cfg = resolve(
                &common,
                &[
                    ("eval.protocol", protocol),
                    ("model", model),
                    ("data", path_flag(&data)),
                    ("eval.batch_size", batch_size.map(|b| b.to_string())),
                ],
            )?;
            let report = cmd_eval(&cfg)?;
            fs::write(&out, report.to_json()?)?;
            Ok(())
        }
        Command::SweepDim {
            common,
            dims,
            seeds,
            data,
            out,
        } => {
            let cfg = resolve(
                &common,
                &[("sweep.dims", dims), ("sweep.seeds", seeds), ("data", path_flag(&data))],
            )?;
            let rows = cmd_sweep_dim(&cfg)?;
            write_sweep_csv(&rows, fs::File::create(&out)?)
        }
        Command::Mds {
            common,
            model,
            data,
            sample_size,
            out,
        } => {
            let cfg = resolve(
                &common,
                &[
                    ("data", path_flag(&data)),
                    ("mds.sample_size", sample_size.map(|s| s.to_string())),
                ],
            )?;
            cmd_mds(&cfg, &model, &out).map(|_| ())
        }
    }
}

pub fn cmd_ingest(format: SourceFormat, input: &Path, policy: PolicyArg, out: &Path) -> Result<()> {
    let policy = match policy {
        PolicyArg::Discard => DedupPolicy::Discard,
        PolicyArg::Merge => DedupPolicy::Merge,
    };
    let (ds, stats) = match format {
        SourceFormat::Assistments => load_assistments(input, policy)?,
        SourceFormat::CognitiveTutor => load_cognitive_tutor(input)?,
        SourceFormat::Canonical => {
            let ds = Dataset::load_canonical(input)?;
            let n = ds.len();
            (
                ds,
                crate::data::IngestStats {
                    rows_read: n,
                    not_original_removed: 0,
                    duplicate_rows_removed: 0,
                    interactions: n,
                },
            )
        }
    };
    let after_original = stats.rows_read - stats.not_original_removed;
    println!("rows read: {}", stats.rows_read);
    println!("after dropping non-original rows: {after_original}");
    println!(
        "after duplicate handling: {}",
        after_original - stats.duplicate_rows_removed
    );
    println!(
        "interactions: {} ({} students, {} questions)",
        stats.interactions,
        ds.num_students(),
        ds.num_questions()
    );
    ds.save_canonical(out)
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path, truth: &Path) -> Result<()> {
    let synth = cfg.synthetic_config()?;
    let mut rng = SeededRng::new(cfg.u64("seed")?);
    let (ds, gt) = generate_synthetic(&synth, &mut rng)?;
    ds.save_canonical(out)?;
    gt.save_json(truth)?;
    println!(
        "{} interactions, {} students, {} questions, correct rate {:.4}",
        ds.len(),
        ds.num_students(),
        ds.num_questions(),
        ds.correct_rate()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    TwoPhase,
    EndToEndRandom,
    EndToEndPretrained,
}

/// Files written by [`cmd_train`].
pub const QUESTION_MODEL_FILE: &str = "question.model";
pub const DYNAMIC_MODEL_FILE: &str = "dynamic.model";
pub const CURVE_FILE: &str = "curve.csv";
pub const CONFIG_FILE: &str = "config.txt";

/// Trains the configured model. Recurrent models hold out
/// `eval.test_fraction` of the students to record held-out curves.
pub fn cmd_train(cfg: &RunConfig, mode: TrainMode, out_dir: &Path) -> Result<()> {
    let ds = load_data(cfg)?;
    let seed = SeededRng::new(cfg.u64("seed")?);
    let model = cfg.get("model").to_owned();
    fs::create_dir_all(out_dir)?;
    if mode != TrainMode::TwoPhase && !matches!(model.as_str(), "dynemb" | "dynemb_concat") {
        return Err(Error::config("model", "end-to-end training applies to dynemb models only"));
    }
    let frac = cfg.f64("eval.test_fraction")?;
    let (train, test) = if frac > 0.0 && model != "bmf" {
        let (a, b) = split_students(&ds, frac, &mut seed.child(0))?;
        (a, Some(b))
    } else {
        (ds.clone(), None)
    };
    let heldout = test.as_ref().map(|t| HeldOut {
        data: t,
        score_from: None,
    });
    let mut rng = seed.child(1);
    let record: TrainingRecord = match model.as_str() {
        "bmf" | "bmf_online" => {
            let (fm, losses) = train_mf(&train, &cfg.mf_config()?, &mut rng)?;
            fm.save(out_dir.join(QUESTION_MODEL_FILE))?;
            println!("final epoch loss {:.5}", losses.last().copied().unwrap_or(f64::NAN));
            write_config(cfg, &out_dir.join(CONFIG_FILE))?;
            return Ok(());
        }
        "dkt" => {
            let (dm, rec) = train_dkt(&train, &cfg.dyn_config(EncoderMode::SkillOnehotDkt)?, &mut rng, heldout)?;
            dm.save(out_dir.join(DYNAMIC_MODEL_FILE))?;
            rec
        }
        "dynemb" | "dynemb_concat" => {
            let encoder = if model == "dynemb" {
                EncoderMode::QuestionOnly
            } else {
                EncoderMode::ConcatTags
            };
            let dcfg = cfg.dyn_config(encoder)?;
            let pretrained = |rng: &mut SeededRng| -> Result<FactorModel> {
                let (fm, _) = train_mf(&train, &cfg.mf_config()?, rng)?;
                fm.save(out_dir.join(QUESTION_MODEL_FILE))?;
                Ok(fm)
            };
            let (dm, rec) = match mode {
                TrainMode::TwoPhase => {
                    let fm = pretrained(&mut rng)?;
                    train_student_dyn(&train, &fm, &dcfg, &mut rng, heldout)?
                }
                TrainMode::EndToEndPretrained => {
                    let fm = pretrained(&mut rng)?;
                    train_end_to_end(&train, &dcfg, E2eInit::FromPretrained(&fm), &mut rng, heldout)?
                }
                TrainMode::EndToEndRandom => train_end_to_end(&train, &dcfg, E2eInit::Random, &mut rng, heldout)?,
            };
            dm.save(out_dir.join(DYNAMIC_MODEL_FILE))?;
            rec
        }
        other => return Err(Error::config("model", format!("unknown model {other:?}"))),
    };
    let rows = learning_curves(&record);
    write_curves_csv(&rows, fs::File::create(out_dir.join(CURVE_FILE))?)?;
    if let Some(last) = rows.last() {
        match last.test_log_loss {
            Some(t) => println!("epoch {}: train log loss {:.5}, held-out {:.5}", last.epoch, last.train_log_loss, t),
            None => println!("epoch {}: train log loss {:.5}", last.epoch, last.train_log_loss),
        }
    }
    write_config(cfg, &out_dir.join(CONFIG_FILE))
}

/// Runs the configured protocol; the report echoes `cfg`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let ds = load_data(cfg)?;
    let report = evaluate(cfg, &ds)?;
    match report.auc {
        Some(a) => println!("{} {}: AUC {:.4}, log loss {:.4}, {} scored", cfg.get("eval.protocol"), report.model_name, a, report.mean_log_loss, report.num_scored),
        None => println!("{} {}: AUC undefined, log loss {:.4}, {} scored", cfg.get("eval.protocol"), report.model_name, report.mean_log_loss, report.num_scored),
    }
    Ok(report)
}

/// The evaluation behind [`cmd_eval`] on an in-memory dataset.
pub fn evaluate(cfg: &RunConfig, ds: &Dataset) -> Result<EvalReport> {
    let spec = cfg.model_spec()?;
    if matches!(spec.name(), "dkt" | "dynemb_concat") {
        if ds.num_skills().is_none() {
            return Err(Error::config("model", format!("{} needs a dataset with skill tags", spec.name())));
        }
    }
    let seed = SeededRng::new(cfg.u64("seed")?);
    let batch = cfg.usize("eval.batch_size")?;
    if batch == 0 {
        return Err(Error::config("eval.batch_size", "must be at least 1"));
    }
    let mut report = match cfg.get("eval.protocol") {
        "new-user" => {
            let (train, test) = split_students(ds, cfg.f64("eval.test_fraction")?, &mut seed.child(0))?;
            evaluate_new_user(&train, &test, &spec, batch, &mut seed.child(1))?
        }
        "most-recent" => evaluate_most_recent(ds, cfg.f64("eval.holdout_fraction")?, &spec, batch, &mut seed.child(1))?,
        other => return Err(Error::config("eval.protocol", format!("unknown protocol {other:?}"))),
    };
    report.config_echo = cfg.to_map();
    report.artifact_chosen = cfg.artifact_defaults();
    Ok(report)
}

/// One `dim,auc,seed` row of a dimension sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dim: usize,
    pub auc: Option<f64>,
    pub seed: u64,
}

pub fn cmd_sweep_dim(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let ds = load_data(cfg)?;
    sweep_dims(cfg, &ds)
}

/// Runs [`evaluate`] once per (dimension, seed). Repeated dimensions are
/// dropped with a warning.
pub fn sweep_dims(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<SweepRow>> {
    let raw = cfg.usize_list("sweep.dims")?;
    let mut seen = BTreeSet::new();
    let mut dims = Vec::new();
    for d in raw {
        if d == 0 {
            return Err(Error::config("sweep.dims", "dimensions must be positive"));
        }
        if seen.insert(d) {
            dims.push(d);
        } else {
            eprintln!("warning: dimension {d} listed more than once; running it once");
        }
    }
    let seeds = cfg.usize_list("sweep.seeds")?;
    if dims.is_empty() || seeds.is_empty() {
        return Err(Error::config("sweep.dims", "need at least one dimension and one seed"));
    }
    let mut rows = Vec::new();
    for &seed in &seeds {
        for &dim in &dims {
            let mut run = cfg.clone();
            run.set("mf.dim", dim.to_string())?;
            run.set("seed", seed.to_string())?;
            let report = evaluate(&run, ds)?;
            println!("dim {dim} seed {seed}: AUC {}", report.auc.map_or("undefined".into(), |a| format!("{a:.4}")));
            rows.push(SweepRow {
                dim,
                auc: report.auc,
                seed: seed as u64,
            });
        }
    }
    rows.sort_by_key(|r| (r.seed, r.dim));
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dim", "auc", "seed"])?;
    for r in rows {
        w.write_record([
            r.dim.to_string(),
            r.auc.map(|a| a.to_string()).unwrap_or_default(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Samples questions uniformly without replacement, projects them and
/// writes the projection CSV. Returns the clustering score when skill
/// labels are available.
pub fn cmd_mds(cfg: &RunConfig, model_path: &Path, out: &Path) -> Result<Option<f64>> {
    let fm = FactorModel::load(model_path)?;
    let ds = match cfg.get("data") {
        "" => None,
        p => Some(Dataset::load_canonical(p)?),
    };
    let m = fm.num_questions();
    let mut k = cfg.usize("mds.sample_size")?;
    if k > m {
        eprintln!("warning: sample size {k} exceeds {m} questions; using {m}");
        k = m;
    }
    let mut ids: Vec<usize> = (0..m).collect();
    SeededRng::new(cfg.u64("seed")?).shuffle(&mut ids);
    ids.truncate(k);
    ids.sort_unstable();
    let proj = classical_mds(&pairwise_distances(&fm.w, &ids)?, 2)?;
    let (qids, skills): (Vec<String>, Vec<Option<String>>) = ids
        .iter()
        .map(|&q| match &ds {
            Some(ds) => (
                ds.questions().raw(q).unwrap_or_default().to_owned(),
                ds.skill_of(q)
                    .and_then(|s| ds.skills().and_then(|m| m.raw(s)))
                    .map(str::to_owned),
            ),
            None => (q.to_string(), None),
        })
        .unzip();
    let proj = proj.with_labels(qids, skills)?;
    proj.write_csv(fs::File::create(out)?)?;
    println!("projected {k} questions, stress {:.3e}", proj.stress);
    let score = if proj.skill_ids.iter().all(Option::is_some) {
        match skill_cluster_score(&proj) {
            Ok(s) => {
                println!("skill cluster score {s:.4}");
                Some(s)
            }
            Err(e) => {
                eprintln!("warning: no cluster score: {e}");
                None
            }
        }
    } else {
        None
    };
    Ok(score)
}
