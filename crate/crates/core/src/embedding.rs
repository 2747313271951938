//! Static question embeddings from ℓ2-regularized biased matrix
//! factorization under log loss, with optional ℓ1 sparsity on the question
//! side.
//!
//! The objective over a dataset is
//!
//! ```text
//! Σ_t L(r_t, σ(<W_q, Z_s> + b_q + c_s)) + λ(‖W‖²_F + ‖Z‖²_F) + μ‖W‖₁
//! ```
//!
//! with `W` holding one row per question and `Z` one row per student.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{self, ModelKind};
use crate::data::{Dataset, Interaction};
use crate::error::{Error, Result};
use crate::mathcore::{axpy, dot_unchecked, log_loss_unchecked, logistic, Matrix, Probability, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    /// Question embeddings, `M × d`.
    pub w: Matrix,
    /// Student embeddings, `N × d`.
    pub z: Matrix,
    /// Question biases.
    pub b: Vec<f64>,
    /// Student biases.
    pub c: Vec<f64>,
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Random,
    /// `W_q` starts as the one-hot vector of question `q`'s skill.
    SkillOnehot,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitMode::Random),
            "skill_onehot" => Ok(InitMode::SkillOnehot),
            other => Err(Error::config("init_mode", format!("unknown init mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfTrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub init_scale: f64,
    pub lambda: f64,
    pub mu: f64,
    pub init_mode: InitMode,
}

impl Default for MfTrainConfig {
    fn default() -> Self {
        MfTrainConfig {
            dim: 50,
            learning_rate: 0.01,
            epochs: 20,
            minibatch_size: 32,
            init_scale: 0.1,
            lambda: 0.1,
            mu: 0.0,
            init_mode: InitMode::Random,
        }
    }
}

impl MfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::config("minibatch_size", "must be at least 1"));
        }
        for (key, v) in [
            ("learning_rate", self.learning_rate),
            ("init_scale", self.init_scale),
            ("lambda", self.lambda),
            ("mu", self.mu),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Gradient of the factorization objective, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGradient {
    pub w: Matrix,
    pub z: Matrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

/// Whether online refits may also move question parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnlineScope {
    #[default]
    StudentsOnly,
    StudentsAndQuestions,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl FactorModel {
    pub fn zeros(num_questions: usize, num_students: usize, dim: usize) -> Self {
        FactorModel {
            w: Matrix::zeros(num_questions, dim),
            z: Matrix::zeros(num_students, dim),
            b: vec![0.0; num_questions],
            c: vec![0.0; num_students],
            lambda: 0.0,
            mu: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    pub fn num_questions(&self) -> usize {
        self.w.rows()
    }

    pub fn num_students(&self) -> usize {
        self.z.rows()
    }

    /// Cold-start question bias: the mean of `b`.
    pub fn mean_question_bias(&self) -> f64 {
        mean(&self.b)
    }

    pub fn mean_student_bias(&self) -> f64 {
        mean(&self.c)
    }

    /// Embedding and bias of question `q`; out-of-range indices are cold
    /// starts (zero embedding, mean bias).
    pub fn question_params(&self, q: usize) -> (Option<&[f64]>, f64) {
        if q < self.num_questions() {
            (Some(self.w.row(q)), self.b[q])
        } else {
            (None, self.mean_question_bias())
        }
    }

    pub fn student_params(&self, s: usize) -> (Option<&[f64]>, f64) {
        if s < self.num_students() {
            (Some(self.z.row(s)), self.c[s])
        } else {
            (None, self.mean_student_bias())
        }
    }

    pub fn logit(&self, s: usize, q: usize) -> f64 {
        let (wq, bq) = self.question_params(q);
        let (zs, cs) = self.student_params(s);
        let inner = match (wq, zs) {
            (Some(w), Some(z)) => dot_unchecked(w, z),
            _ => 0.0,
        };
        inner + bq + cs
    }

    /// σ(<W_q, Z_s> + b_q + c_s), with cold-start handling for indices
    /// outside the model (see [`crate::data::UNKNOWN`]).
    pub fn predict(&self, s: usize, q: usize) -> Probability {
        Probability::from_logit(self.logit(s, q))
    }

    /// Prediction for an explicit student state `(z, c)`.
    pub fn predict_with_student(&self, z: &[f64], c: f64, q: usize) -> Probability {
        let (wq, bq) = self.question_params(q);
        let inner = wq.map_or(0.0, |w| dot_unchecked(w, z));
        Probability::from_logit(inner + bq + c)
    }

    fn check_indices<'a>(&self, its: impl IntoIterator<Item = &'a Interaction>) -> Result<()> {
        for it in its {
            if it.student >= self.num_students() || it.question >= self.num_questions() {
                return Err(Error::dim(format!(
                    "interaction (student {}, question {}) outside a {}x{} model",
                    it.student,
                    it.question,
                    self.num_students(),
                    self.num_questions()
                )));
            }
        }
        Ok(())
    }

    fn regularizer(&self) -> f64 {
        self.lambda * (self.w.frobenius_sq() + self.z.frobenius_sq()) + self.mu * self.w.l1()
    }

    /// Summed log loss over `ds` plus the ℓ2 and ℓ1 penalties.
    pub fn objective(&self, ds: &Dataset) -> Result<f64> {
        self.check_indices(ds.interactions())?;
        let loss: f64 = ds
            .interactions()
            .iter()
            .map(|it| log_loss_unchecked(it.response, self.predict(it.student, it.question).value()))
            .sum();
        Ok(loss + self.regularizer())
    }

    /// Gradient of the batch's loss terms plus the full regularizer scaled
    /// by `batch.len() / dataset_len`. The ℓ1 term uses `sign(W)` with
    /// `sign(0) = 0`.
    pub fn gradient(&self, batch: &[Interaction], dataset_len: usize) -> Result<FactorGradient> {
        if batch.is_empty() {
            return Err(Error::invalid("gradient of an empty batch"));
        }
        if dataset_len < batch.len() {
            return Err(Error::invalid("dataset smaller than batch"));
        }
        self.check_indices(batch)?;
        let d = self.dim();
        let mut g = FactorGradient {
            w: Matrix::zeros(self.num_questions(), d),
            z: Matrix::zeros(self.num_students(), d),
            b: vec![0.0; self.num_questions()],
            c: vec![0.0; self.num_students()],
        };
        for it in batch {
            let (s, q) = (it.student, it.question);
            // d/dlogit of the log loss is p - r (the clamp is inactive for
            // finite logits well inside the representable range).
            let err = logistic(self.logit(s, q)) - f64::from(it.response);
            axpy(err, self.z.row(s), g.w.row_mut(q));
            axpy(err, self.w.row(q), g.z.row_mut(s));
            g.b[q] += err;
            g.c[s] += err;
        }
        let scale = batch.len() as f64 / dataset_len as f64;
        let two_lambda = 2.0 * self.lambda * scale;
        let mu = self.mu * scale;
        for (gv, &wv) in g.w.as_mut_slice().iter_mut().zip(self.w.as_slice()) {
            *gv += two_lambda * wv + mu * sign(wv);
        }
        for (gv, &zv) in g.z.as_mut_slice().iter_mut().zip(self.z.as_slice()) {
            *gv += two_lambda * zv;
        }
        Ok(g)
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite()
            && self.z.is_finite()
            && self.b.iter().chain(&self.c).all(|v| v.is_finite())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(f)
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = container::Writer::new(out, ModelKind::Factor)?;
        w.u64("dim", self.dim() as u64)?;
        w.f64("lambda", self.lambda)?;
        w.f64("mu", self.mu)?;
        w.u64("num_questions", self.num_questions() as u64)?;
        w.u64("num_students", self.num_students() as u64)?;
        w.f64s("W", self.w.as_slice())?;
        w.f64s("Z", self.z.as_slice())?;
        w.f64s("b", &self.b)?;
        w.f64s("c", &self.c)?;
        w.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = container::Reader::new(input, ModelKind::Factor)?;
        let d = r.usize("dim")?;
        let lambda = r.f64("lambda")?;
        let mu = r.f64("mu")?;
        let m = r.usize("num_questions")?;
        let n = r.usize("num_students")?;
        let w = Matrix::from_vec(m, d, r.f64s("W")?)?;
        let z = Matrix::from_vec(n, d, r.f64s("Z")?)?;
        let b = r.f64s("b")?;
        let c = r.f64s("c")?;
        r.finish()?;
        if b.len() != m || c.len() != n || d == 0 {
            return Err(Error::Format("bias lengths disagree with dimensions".into()));
        }
        Ok(FactorModel { w, z, b, c, lambda, mu })
    }

    /// Refits a single student's `(z, c)` on `history` by `epochs` passes of
    /// full-batch gradient descent on its summed log loss plus `λ‖z‖²`.
    /// Question parameters are read only.
    pub fn fit_student(
        &self,
        z: &mut [f64],
        c: &mut f64,
        history: &[Interaction],
        cfg: &MfTrainConfig,
    ) {
        let d = self.dim();
        let mut gz = vec![0.0; d];
        for _ in 0..cfg.epochs {
            gz.iter_mut().for_each(|g| *g = 0.0);
            let mut gc = 0.0;
            for it in history {
                let (wq, bq) = self.question_params(it.question);
                let inner = wq.map_or(0.0, |w| dot_unchecked(w, z));
                let err = logistic(inner + bq + *c) - f64::from(it.response);
                if let Some(w) = wq {
                    axpy(err, w, &mut gz);
                }
                gc += err;
            }
            axpy(2.0 * self.lambda, z, &mut gz);
            axpy(-cfg.learning_rate, &gz, z);
            *c -= cfg.learning_rate * gc;
        }
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn init_model(ds: &Dataset, cfg: &MfTrainConfig, rng: &mut SeededRng) -> Result<FactorModel> {
    let (m, n, d) = (ds.num_questions(), ds.num_students(), cfg.dim);
    let w = match cfg.init_mode {
        InitMode::Random => Matrix::random_normal(m, d, cfg.init_scale, rng),
        InitMode::SkillOnehot => {
            let k = ds
                .num_skills()
                .ok_or_else(|| Error::config("init_mode", "skill_onehot needs skill tags"))?;
            if k != d {
                return Err(Error::config(
                    "dim",
                    format!("skill_onehot needs dim = number of skills ({k}), got {d}"),
                ));
            }
            let mut w = Matrix::zeros(m, d);
            for q in 0..m {
                let skill = ds.skill_of(q).ok_or_else(|| {
                    Error::config("init_mode", format!("question {q} has no skill tag"))
                })?;
                w.set(q, skill, 1.0);
            }
            w
        }
    };
    let z = Matrix::random_normal(n, d, cfg.init_scale, rng);
    Ok(FactorModel {
        w,
        z,
        b: vec![0.0; m],
        c: vec![0.0; n],
        lambda: cfg.lambda,
        mu: cfg.mu,
    })
}

/// Minibatch SGD on the factorization objective. Returns the model and the
/// mean training log loss of every epoch.
pub fn train_mf(ds: &Dataset, cfg: &MfTrainConfig, rng: &mut SeededRng) -> Result<(FactorModel, Vec<f64>)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = init_model(ds, cfg, rng)?;
    let n_total = ds.len();
    let mut order: Vec<usize> = (0..n_total).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut touched_w: Vec<usize> = Vec::new();
    let mut gw = Matrix::zeros(model.num_questions(), model.dim());
    let mut gz = Matrix::zeros(model.num_students(), model.dim());
    let mut gb = vec![0.0; model.num_questions()];
    let mut gc = vec![0.0; model.num_students()];
    let mut touched_z: Vec<usize> = Vec::new();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.minibatch_size) {
            touched_w.clear();
            touched_z.clear();
            for &i in chunk {
                let it = &ds.interactions()[i];
                let (s, q) = (it.student, it.question);
                let p = logistic(model.logit(s, q));
                epoch_loss += log_loss_unchecked(it.response, Probability::clamped(p).value());
                let err = p - f64::from(it.response);
                axpy(err, model.z.row(s), gw.row_mut(q));
                axpy(err, model.w.row(q), gz.row_mut(s));
                gb[q] += err;
                gc[s] += err;
                touched_w.push(q);
                touched_z.push(s);
            }
            let lr = cfg.learning_rate;
            let scale = chunk.len() as f64 / n_total as f64;
            // ℓ2 part of the step applies to every row; the loss part only
            // to rows the batch touched.
            let decay = 1.0 - lr * 2.0 * cfg.lambda * scale;
            if decay != 1.0 {
                model.w.as_mut_slice().iter_mut().for_each(|v| *v *= decay);
                model.z.as_mut_slice().iter_mut().for_each(|v| *v *= decay);
            }
            touched_w.sort_unstable();
            touched_w.dedup();
            touched_z.sort_unstable();
            touched_z.dedup();
            for &q in &touched_w {
                axpy(-lr, gw.row(q), model.w.row_mut(q));
                gw.row_mut(q).fill(0.0);
                model.b[q] -= lr * gb[q];
                gb[q] = 0.0;
            }
            for &s in &touched_z {
                axpy(-lr, gz.row(s), model.z.row_mut(s));
                gz.row_mut(s).fill(0.0);
                model.c[s] -= lr * gc[s];
                gc[s] = 0.0;
            }
            if cfg.mu > 0.0 {
                let t = lr * cfg.mu * scale;
                model
                    .w
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = soft_threshold(*v, t));
            }
        }
        history.push(epoch_loss / n_total as f64);
    }
    if !model.is_finite() {
        return Err(Error::invalid("training diverged; lower the learning rate"));
    }
    Ok((model, history))
}

/// Refits student parameters on `new_interactions`, allocating zero rows
/// for students beyond the model. With [`OnlineScope::StudentsOnly`] the
/// question side `(W, b)` is untouched.
pub fn online_update(
    model: &FactorModel,
    new_interactions: &[Interaction],
    cfg: &MfTrainConfig,
    scope: OnlineScope,
) -> Result<FactorModel> {
    let mut out = model.clone();
    if new_interactions.is_empty() {
        return Ok(out);
    }
    if let Some(it) = new_interactions.iter().find(|it| it.question >= model.num_questions()) {
        return Err(Error::dim(format!("question {} outside the model", it.question)));
    }
    let n_needed = new_interactions.iter().map(|it| it.student + 1).max().unwrap_or(0);
    if n_needed > out.num_students() {
        let d = out.dim();
        let mut z = Matrix::zeros(n_needed, d);
        for s in 0..out.num_students() {
            z.row_mut(s).copy_from_slice(out.z.row(s));
        }
        out.z = z;
        out.c.resize(n_needed, 0.0);
    }

    let mut by_student: std::collections::BTreeMap<usize, Vec<Interaction>> = Default::default();
    for it in new_interactions {
        by_student.entry(it.student).or_default().push(*it);
    }
    match scope {
        OnlineScope::StudentsOnly => {
            for (s, hist) in &by_student {
                let mut z = out.z.row(*s).to_vec();
                let mut c = out.c[*s];
                out.fit_student(&mut z, &mut c, hist, cfg);
                out.z.row_mut(*s).copy_from_slice(&z);
                out.c[*s] = c;
            }
        }
        OnlineScope::StudentsAndQuestions => {
            let total = new_interactions.len();
            for _ in 0..cfg.epochs {
                let g = out.gradient(new_interactions, total)?;
                let lr = cfg.learning_rate;
                for (p, gv) in out.w.as_mut_slice().iter_mut().zip(g.w.as_slice()) {
                    *p -= lr * gv;
                }
                for (p, gv) in out.z.as_mut_slice().iter_mut().zip(g.z.as_slice()) {
                    *p -= lr * gv;
                }
                axpy(-lr, &g.b, &mut out.b);
                axpy(-lr, &g.c, &mut out.c);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, DatasetBuilder, SyntheticConfig};

    fn it(s: usize, q: usize, r: u8) -> Interaction {
        Interaction {
            student: s,
            question: q,
            response: r,
            skill: None,
            timestamp: None,
            position: 0,
        }
    }

    fn two_by_two() -> FactorModel {
        let mut m = FactorModel::zeros(2, 2, 2);
        m.w.row_mut(0).copy_from_slice(&[1.0, 0.0]);
        m.z.row_mut(1).copy_from_slice(&[0.5, 2.0]);
        m.b[0] = 0.3;
        m.c[1] = -0.3;
        m
    }

    #[test]
    fn predict_examples() {
        let zero = FactorModel::zeros(3, 4, 2);
        assert_eq!(zero.predict(1, 2).value(), 0.5);
        let m = two_by_two();
        assert!((m.predict(1, 0).value() - logistic(0.5)).abs() < 1e-15);
        // b has mean 0.15 here; unknown student with c mean -0.15 cancels.
        assert!((m.predict(crate::data::UNKNOWN, crate::data::UNKNOWN).value() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn objective_examples() {
        let mut b = DatasetBuilder::new();
        b.push("s", "q", 1, None, None);
        let ds = b.build().unwrap();
        let zero = FactorModel::zeros(1, 1, 3);
        assert!((zero.objective(&ds).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        let mut reg = FactorModel::zeros(1, 1, 2);
        reg.lambda = 1.0;
        reg.w.row_mut(0).copy_from_slice(&[2.0, 0.0]);
        assert!((reg.regularizer() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn objective_rejects_out_of_range() {
        let mut b = DatasetBuilder::new();
        b.push("s", "q1", 1, None, None);
        b.push("s", "q2", 1, None, None);
        let ds = b.build().unwrap();
        let small = FactorModel::zeros(1, 1, 2);
        assert!(matches!(small.objective(&ds), Err(Error::Dimension(_))));
    }

    #[test]
    fn gradient_at_zero() {
        let m = FactorModel::zeros(3, 2, 2);
        let g = m.gradient(&[it(1, 2, 1)], 1).unwrap();
        assert_eq!(g.b[2], -0.5);
        assert_eq!(g.w.row(2), &[0.0, 0.0]);
        assert_eq!(g.c[1], -0.5);
        // untouched and unregularized entries stay exactly zero
        assert_eq!(g.b[0], 0.0);
        assert!(g.z.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scale_symmetry_without_regularization() {
        let mut rng = SeededRng::new(4);
        let mut m = FactorModel::zeros(4, 3, 3);
        m.w = Matrix::random_normal(4, 3, 1.0, &mut rng);
        m.z = Matrix::random_normal(3, 3, 1.0, &mut rng);
        let mut scaled = m.clone();
        scaled.w.as_mut_slice().iter_mut().for_each(|v| *v *= 2.0);
        scaled.z.as_mut_slice().iter_mut().for_each(|v| *v /= 2.0);
        for s in 0..3 {
            for q in 0..4 {
                assert_eq!(m.logit(s, q), scaled.logit(s, q));
            }
        }
    }

    #[test]
    fn epochs_zero_rejected_and_zero_lr_is_noop() {
        let (ds, _) = generate_synthetic(&SyntheticConfig::new(4, 5, 2, 6), &mut SeededRng::new(1)).unwrap();
        let cfg = MfTrainConfig {
            dim: 2,
            epochs: 0,
            ..Default::default()
        };
        assert!(matches!(train_mf(&ds, &cfg, &mut SeededRng::new(0)), Err(Error::Config { .. })));
        let cfg = MfTrainConfig {
            dim: 2,
            epochs: 1,
            learning_rate: 0.0,
            ..Default::default()
        };
        let (trained, _) = train_mf(&ds, &cfg, &mut SeededRng::new(3)).unwrap();
        let init = init_model(&ds, &cfg, &mut SeededRng::new(3)).unwrap();
        assert_eq!(trained, init);
    }

    #[test]
    fn sgd_step_matches_gradient() {
        // One epoch with a single full batch equals one explicit gradient step.
        let (ds, _) = generate_synthetic(&SyntheticConfig::new(3, 4, 2, 5), &mut SeededRng::new(2)).unwrap();
        let cfg = MfTrainConfig {
            dim: 2,
            epochs: 1,
            minibatch_size: ds.len(),
            learning_rate: 0.05,
            lambda: 0.3,
            ..Default::default()
        };
        let (trained, _) = train_mf(&ds, &cfg, &mut SeededRng::new(8)).unwrap();
        let init = init_model(&ds, &cfg, &mut SeededRng::new(8)).unwrap();
        let g = init.gradient(ds.interactions(), ds.len()).unwrap();
        for (i, (&a, &b)) in trained.w.as_slice().iter().zip(init.w.as_slice()).enumerate() {
            let expect = b - 0.05 * g.w.as_slice()[i];
            assert!((a - expect).abs() < 1e-12);
        }
        for q in 0..4 {
            assert!((trained.b[q] - (init.b[q] - 0.05 * g.b[q])).abs() < 1e-12);
        }
    }

    #[test]
    fn skill_onehot_requires_matching_dim() {
        let cfg = SyntheticConfig::new(4, 6, 3, 5).skills(3);
        let (ds, _) = generate_synthetic(&cfg, &mut SeededRng::new(0)).unwrap();
        let mut mf = MfTrainConfig {
            dim: 2,
            init_mode: InitMode::SkillOnehot,
            ..Default::default()
        };
        assert!(matches!(train_mf(&ds, &mf, &mut SeededRng::new(0)), Err(Error::Config { .. })));
        mf.dim = 3;
        mf.learning_rate = 0.0;
        mf.epochs = 1;
        let (m, _) = train_mf(&ds, &mf, &mut SeededRng::new(0)).unwrap();
        for q in 0..6 {
            let k = ds.skill_of(q).unwrap();
            let row = m.w.row(q);
            assert!(row.iter().enumerate().all(|(j, &v)| v == if j == k { 1.0 } else { 0.0 }));
        }
        let (plain, _) = generate_synthetic(&SyntheticConfig::new(4, 6, 3, 5), &mut SeededRng::new(0)).unwrap();
        assert!(train_mf(&plain, &mf, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn online_update_freezes_question_side() {
        let m = two_by_two();
        let cfg = MfTrainConfig {
            dim: 2,
            epochs: 5,
            learning_rate: 0.1,
            ..Default::default()
        };
        assert_eq!(online_update(&m, &[], &cfg, OnlineScope::StudentsOnly).unwrap(), m);
        let new = [it(3, 0, 1), it(3, 1, 0), it(0, 0, 0)];
        let up = online_update(&m, &new, &cfg, OnlineScope::StudentsOnly).unwrap();
        assert_eq!(up.num_students(), 4);
        assert_eq!(up.w, m.w);
        assert_eq!(up.b, m.b);
        assert_eq!(up.z.row(1), m.z.row(1));
        assert_ne!(up.c[3], 0.0);
        let both = online_update(&m, &new, &cfg, OnlineScope::StudentsAndQuestions).unwrap();
        assert_ne!(both.b, m.b);
    }

    #[test]
    fn save_load_bit_exact() {
        let mut rng = SeededRng::new(6);
        let mut m = FactorModel::zeros(3, 2, 4);
        m.w = Matrix::random_normal(3, 4, 1.0, &mut rng);
        m.c[1] = 1.0 / 3.0;
        m.lambda = 0.1;
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = FactorModel::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }
}
