//! AUC and the two online evaluation protocols.
//!
//! Under *New User*, population parameters are fit on training students and
//! every held-out student is then predicted online from an empty history.
//! Under *Most Recent*, every student's chronological suffix is held out and
//! predicted online after the prefixes were used for training. In both,
//! predictions are issued in batches: the scores for a batch use only the
//! student's interactions before the batch (plus, for recurrent models,
//! the earlier interactions of the same batch, which just roll the state),
//! and student-level parameters absorb the batch afterwards. The first
//! interaction of every student is never scored.

mod auc;
mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{holdout_cutoffs, Dataset, Interaction};
use crate::dynamics::{train_dkt, train_student_dyn, DynModel, DynTrainConfig, EncoderMode, StudentState};
use crate::embedding::{online_update, train_mf, FactorModel, MfTrainConfig, OnlineScope};
use crate::error::{Error, Result};
use crate::mathcore::{log_loss_unchecked, Probability, SeededRng};

pub use auc::{auc, auc_fraction};
pub use report::{learning_curves, write_curves_csv, BatchStat, EvalReport, Protocol, ScoredPrediction};

/// What to train and how; each variant is one model class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    OfflineBmf {
        mf: MfTrainConfig,
    },
    OnlineBmf {
        mf: MfTrainConfig,
        /// Learning rate and epochs of the per-batch student refit.
        online: MfTrainConfig,
        scope: OnlineScope,
    },
    /// Two-phase model; `dynamics.encoder` selects question-only or
    /// tag-concatenating inputs.
    DynEmb {
        mf: MfTrainConfig,
        dynamics: DynTrainConfig,
    },
    Dkt {
        dynamics: DynTrainConfig,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::OfflineBmf { .. } => "bmf",
            ModelSpec::OnlineBmf { .. } => "bmf_online",
            ModelSpec::DynEmb { dynamics, .. } if dynamics.encoder == EncoderMode::ConcatTags => "dynemb_concat",
            ModelSpec::DynEmb { .. } => "dynemb",
            ModelSpec::Dkt { .. } => "dkt",
        }
    }

    /// Fits the population-level parameters on `train`.
    pub fn train(&self, train: &Dataset, rng: &mut SeededRng) -> Result<TrainedModel> {
        match self {
            ModelSpec::OfflineBmf { mf } => Ok(TrainedModel::OfflineBmf(train_mf(train, mf, rng)?.0)),
            ModelSpec::OnlineBmf { mf, online, scope } => Ok(TrainedModel::OnlineBmf {
                model: train_mf(train, mf, rng)?.0,
                refit: online.clone(),
                scope: *scope,
            }),
            ModelSpec::DynEmb { mf, dynamics } => {
                let (fm, _) = train_mf(train, mf, rng)?;
                let (dm, _) = train_student_dyn(train, &fm, dynamics, rng, None)?;
                Ok(TrainedModel::Dynamic(dm))
            }
            ModelSpec::Dkt { dynamics } => Ok(TrainedModel::Dynamic(train_dkt(train, dynamics, rng, None)?.0)),
        }
    }
}

/// A fitted model ready for online scoring.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    OfflineBmf(FactorModel),
    OnlineBmf {
        model: FactorModel,
        refit: MfTrainConfig,
        scope: OnlineScope,
    },
    Dynamic(DynModel),
}

/// Per-student scoring state.
#[derive(Debug, Clone)]
pub enum OnlineState {
    Static { z: Vec<f64>, c: f64 },
    Recurrent(StudentState),
}

impl TrainedModel {
    /// State before the first scored batch. `known` is the student's index
    /// in the training data, if it was there; `prefix` is history the model
    /// may read.
    pub fn start(&self, known: Option<usize>, prefix: &[Interaction]) -> OnlineState {
        match self {
            TrainedModel::OfflineBmf(m) | TrainedModel::OnlineBmf { model: m, .. } => {
                let (z, c) = match known.map(|s| m.student_params(s)) {
                    Some((Some(z), c)) => (z.to_vec(), c),
                    _ => (vec![0.0; m.dim()], m.mean_student_bias()),
                };
                OnlineState::Static { z, c }
            }
            TrainedModel::Dynamic(dm) => OnlineState::Recurrent(dm.roll(prefix)),
        }
    }

    pub fn predict(&self, st: &OnlineState, q: usize) -> Probability {
        match (self, st) {
            (TrainedModel::OfflineBmf(m) | TrainedModel::OnlineBmf { model: m, .. }, OnlineState::Static { z, c }) => {
                m.predict_with_student(z, *c, q)
            }
            (TrainedModel::Dynamic(dm), OnlineState::Recurrent(s)) => dm.predict_next(s, q),
            _ => unreachable!("state built by a different model class"),
        }
    }

    /// Absorbs one interaction inside a batch (recurrent state rolling).
    pub fn observe(&self, st: &mut OnlineState, it: &Interaction) {
        if let (TrainedModel::Dynamic(dm), OnlineState::Recurrent(s)) = (self, st) {
            *s = dm.advance(s, it.question, it.response);
        }
    }

    /// Student-level refit after a batch; `history` is everything the
    /// student has answered so far.
    pub fn end_batch(&self, st: &mut OnlineState, history: &[Interaction]) {
        if let (TrainedModel::OnlineBmf { model, refit, scope }, OnlineState::Static { z, c }) = (self, st) {
            match scope {
                OnlineScope::StudentsOnly => model.fit_student(z, c, history, refit),
                OnlineScope::StudentsAndQuestions => {
                    // Refit on a private copy holding this student as row 0.
                    let mut local = model.clone();
                    local.z = crate::mathcore::Matrix::from_vec(1, z.len(), z.clone()).expect("row");
                    local.c = vec![*c];
                    let rows: Vec<Interaction> = history.iter().map(|it| Interaction { student: 0, ..*it }).collect();
                    if let Ok(up) = online_update(&local, &rows, refit, *scope) {
                        z.copy_from_slice(up.z.row(0));
                        *c = up.c[0];
                    }
                }
            }
        }
    }
}

/// Scores every student of `ds` online from position `cut[s]` on.
pub fn run_online(
    model: &TrainedModel,
    ds: &Dataset,
    known: impl Fn(usize) -> Option<usize>,
    cut: &[usize],
    batch_size: usize,
) -> Result<Vec<ScoredPrediction>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    let mut out = Vec::new();
    for (s, seq) in ds.sequences().enumerate() {
        let start = cut[s].min(seq.len());
        let mut st = model.start(known(s), &seq[..start]);
        let mut batch_start = start;
        let mut batch = 0;
        while batch_start < seq.len() {
            let batch_end = (batch_start + batch_size).min(seq.len());
            for it in &seq[batch_start..batch_end] {
                if it.position >= 1 {
                    out.push(ScoredPrediction {
                        student: s,
                        position: it.position,
                        batch,
                        label: it.response,
                        prob: model.predict(&st, it.question).value(),
                    });
                }
                model.observe(&mut st, it);
            }
            model.end_batch(&mut st, &seq[..batch_end]);
            batch_start = batch_end;
            batch += 1;
        }
    }
    Ok(out)
}

fn summarize(
    protocol: Protocol,
    model_name: &str,
    predictions: Vec<ScoredPrediction>,
    config_echo: BTreeMap<String, String>,
) -> EvalReport {
    let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    let scores: Vec<f64> = predictions.iter().map(|p| p.prob).collect();
    let pooled = auc(&labels, &scores).ok();
    let mean_log_loss = if predictions.is_empty() {
        0.0
    } else {
        predictions
            .iter()
            .map(|p| log_loss_unchecked(p.label, p.prob))
            .sum::<f64>()
            / predictions.len() as f64
    };
    let mut by_batch: BTreeMap<usize, (Vec<u8>, Vec<f64>)> = BTreeMap::new();
    for p in &predictions {
        let e = by_batch.entry(p.batch).or_default();
        e.0.push(p.label);
        e.1.push(p.prob);
    }
    let per_batch = by_batch
        .into_iter()
        .map(|(batch, (l, s))| BatchStat {
            batch,
            auc: auc(&l, &s).ok(),
            count: l.len(),
        })
        .collect();
    EvalReport {
        protocol,
        model_name: model_name.to_owned(),
        auc: pooled,
        mean_log_loss,
        num_scored: predictions.len(),
        per_batch,
        config_echo,
        artifact_chosen: vec!["eval.batch_size".into()],
        predictions,
    }
}

/// New User protocol: fit on `train`, then predict each `test` student's
/// whole sequence online.
pub fn evaluate_new_user(
    train: &Dataset,
    test: &Dataset,
    spec: &ModelSpec,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<EvalReport> {
    if test.is_empty() || test.num_students() == 0 {
        return Err(Error::invalid("empty test population"));
    }
    let model = spec.train(train, rng)?;
    let cut = vec![0; test.num_students()];
    let preds = run_online(&model, test, |_| None, &cut, batch_size)?;
    let echo = BTreeMap::from([
        ("eval.protocol".to_owned(), "new-user".to_owned()),
        ("eval.batch_size".to_owned(), batch_size.to_string()),
    ]);
    Ok(summarize(Protocol::NewUser, spec.name(), preds, echo))
}

/// Most Recent protocol: hold out the last `ceil(holdout_fraction · len)`
/// interactions of every student, fit on all prefixes, then predict each
/// suffix online.
pub fn evaluate_most_recent(
    ds: &Dataset,
    holdout_fraction: f64,
    spec: &ModelSpec,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<EvalReport> {
    let cut = holdout_cutoffs(ds, holdout_fraction)?;
    let train = ds.prefixes(&cut)?;
    let model = spec.train(&train, rng)?;
    let preds = run_online(&model, ds, Some, &cut, batch_size)?;
    let echo = BTreeMap::from([
        ("eval.protocol".to_owned(), "most-recent".to_owned()),
        ("eval.batch_size".to_owned(), batch_size.to_string()),
        ("eval.holdout_fraction".to_owned(), holdout_fraction.to_string()),
    ]);
    let mut report = summarize(Protocol::MostRecent, spec.name(), preds, echo);
    report.artifact_chosen.push("eval.holdout_fraction".into());
    Ok(report)
}

/// Copy of `ds` with every response at position `>= from[s]` flipped.
pub fn poison_from(ds: &Dataset, from: &[usize]) -> Dataset {
    ds.map_responses(|it| {
        if it.position >= from[it.student] {
            1 - it.response
        } else {
            it.response
        }
    })
}

/// Outcome of [`leak_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeakReport {
    /// Predictions that must not see any poisoned response.
    pub checked: usize,
    /// Of those, how many differ from the clean run.
    pub changed: usize,
}

/// Runs `run` on `ds` and on [`poison_from`]`(ds, from)`, then compares the
/// predictions at positions `<= from[s]`. Those may only depend on
/// responses before their own position, so any difference is a leak.
pub fn leak_check(
    ds: &Dataset,
    from: &[usize],
    run: impl Fn(&Dataset) -> Result<Vec<ScoredPrediction>>,
) -> Result<LeakReport> {
    if from.len() != ds.num_students() {
        return Err(Error::dim("one poison position per student is required"));
    }
    let clean = run(ds)?;
    let dirty = run(&poison_from(ds, from))?;
    let key = |p: &ScoredPrediction| (p.student, p.position);
    let mut report = LeakReport { checked: 0, changed: 0 };
    let mut j = 0;
    for p in clean.iter().filter(|p| p.position <= from[p.student]) {
        while j < dirty.len() && key(&dirty[j]) < key(p) {
            j += 1;
        }
        report.checked += 1;
        if j >= dirty.len() || key(&dirty[j]) != key(p) || dirty[j].prob.to_bits() != p.prob.to_bits() {
            report.changed += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_students, SyntheticConfig};

    fn mf(dim: usize) -> MfTrainConfig {
        MfTrainConfig {
            dim,
            epochs: 3,
            ..Default::default()
        }
    }

    fn data() -> Dataset {
        let cfg = SyntheticConfig::new(12, 8, 2, 9).dynamics(0.1, 0.3);
        generate_synthetic(&cfg, &mut SeededRng::new(4)).unwrap().0
    }

    #[test]
    fn num_scored_excludes_first_interactions() {
        let ds = data();
        let (tr, te) = split_students(&ds, 0.25, &mut SeededRng::new(0)).unwrap();
        let spec = ModelSpec::OfflineBmf { mf: mf(2) };
        let r = evaluate_new_user(&tr, &te, &spec, 4, &mut SeededRng::new(1)).unwrap();
        assert_eq!(r.num_scored, te.len() - te.num_students());
        assert_eq!(r.num_scored, r.per_batch.iter().map(|b| b.count).sum::<usize>());
    }

    #[test]
    fn offline_bmf_ignores_batch_size() {
        let ds = data();
        let (tr, te) = split_students(&ds, 0.25, &mut SeededRng::new(0)).unwrap();
        let spec = ModelSpec::OfflineBmf { mf: mf(2) };
        let a = evaluate_new_user(&tr, &te, &spec, 1, &mut SeededRng::new(1)).unwrap();
        let b = evaluate_new_user(&tr, &te, &spec, 100, &mut SeededRng::new(1)).unwrap();
        assert_eq!(a.auc, b.auc);
        assert_eq!(a.mean_log_loss, b.mean_log_loss);
    }

    #[test]
    fn one_element_suffixes() {
        let ds = data();
        let spec = ModelSpec::OfflineBmf { mf: mf(2) };
        let r = evaluate_most_recent(&ds, 0.05, &spec, 50, &mut SeededRng::new(1)).unwrap();
        assert_eq!(r.num_scored, ds.num_students());
        let mut students: Vec<usize> = r.predictions.iter().map(|p| p.student).collect();
        students.dedup();
        assert_eq!(students.len(), ds.num_students());
    }

    #[test]
    fn empty_test_population_rejected() {
        let ds = data();
        let empty = ds.subset_students(&[]);
        let spec = ModelSpec::OfflineBmf { mf: mf(2) };
        assert!(evaluate_new_user(&ds, &empty, &spec, 5, &mut SeededRng::new(0)).is_err());
    }
}
