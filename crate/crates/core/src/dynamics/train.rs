//! Truncated backpropagation through time for [`DynModel`].
//!
//! Every student sequence starts from the zero state. At step `t ≥ 1` the
//! LSTM reads interaction `t-1` and the resulting hidden state scores
//! interaction `t`; the first response of a sequence is never scored.
//! Gradients of a minibatch of sequences are averaged over its scored
//! terms, clipped per parameter tensor, and applied with Adam.

use serde::{Deserialize, Serialize};

use super::{encode_input_into, DynModel, EncoderMode, LstmParams};
use crate::data::{Dataset, Interaction};
use crate::embedding::FactorModel;
use crate::error::{Error, Result};
use crate::mathcore::{axpy, l2_norm, log_loss_unchecked, logistic, Matrix, Probability, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynTrainConfig {
    /// Adam step size.
    pub learning_rate: f64,
    pub epochs: usize,
    /// Student sequences per update.
    pub minibatch: usize,
    /// Steps per BPTT window.
    pub truncation: usize,
    /// Per-tensor gradient norm cap.
    pub clip: f64,
    pub hidden_dim: usize,
    pub encoder: EncoderMode,
    /// Output width of the tag-fusion layer.
    pub fusion_dim: usize,
    /// Std of question embeddings when end-to-end training starts from
    /// scratch.
    pub e2e_init_scale: f64,
}

impl Default for DynTrainConfig {
    fn default() -> Self {
        DynTrainConfig {
            learning_rate: 0.005,
            epochs: 10,
            minibatch: 16,
            truncation: 100,
            clip: 5.0,
            hidden_dim: 50,
            encoder: EncoderMode::QuestionOnly,
            fusion_dim: 50,
            e2e_init_scale: 0.1,
        }
    }
}

impl DynTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.minibatch == 0 {
            return Err(Error::config("minibatch", "must be at least 1"));
        }
        if self.truncation == 0 {
            return Err(Error::config("truncation", "must be at least 1"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("hidden_dim", "must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be finite and non-negative"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::config("clip", "must be positive"));
        }
        Ok(())
    }
}

/// Sequences used to measure held-out log loss after every epoch. When
/// `score_from` is set, student `s` is scored only from position
/// `score_from[s]` on; earlier interactions just advance the state.
#[derive(Debug, Clone, Copy)]
pub struct HeldOut<'a> {
    pub data: &'a Dataset,
    pub score_from: Option<&'a [usize]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_log_loss: f64,
    pub test_log_loss: Option<f64>,
}

/// Per-epoch losses of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    /// Held-out loss of the untrained model.
    pub initial_test_log_loss: Option<f64>,
    pub curve: Vec<CurveRow>,
}

/// How end-to-end training initializes the question side.
#[derive(Debug, Clone)]
pub enum E2eInit<'a> {
    Random,
    FromPretrained(&'a FactorModel),
}

/// Two-phase training: question embeddings and biases are taken from `fm`
/// and held fixed while the LSTM (and fusion layer, if any) is fit.
pub fn train_student_dyn(
    ds: &Dataset,
    fm: &FactorModel,
    cfg: &DynTrainConfig,
    rng: &mut SeededRng,
    heldout: Option<HeldOut<'_>>,
) -> Result<(DynModel, TrainingRecord)> {
    cfg.validate()?;
    if cfg.encoder != EncoderMode::SkillOnehotDkt && cfg.hidden_dim != fm.dim() {
        return Err(Error::config(
            "hidden_dim",
            format!("hidden_dim {} must equal the embedding dim {}", cfg.hidden_dim, fm.dim()),
        ));
    }
    let mut model = DynModel::new(
        fm,
        cfg.encoder,
        ds.skill_of_question(),
        ds.num_skills(),
        cfg.fusion_dim,
        cfg.hidden_dim,
        rng,
    )?;
    let record = fit(&mut model, ds, cfg, false, rng, heldout)?;
    Ok((model, record))
}

/// Like [`train_student_dyn`] but the question embeddings and biases are
/// trained jointly with the LSTM.
pub fn train_end_to_end(
    ds: &Dataset,
    cfg: &DynTrainConfig,
    init: E2eInit<'_>,
    rng: &mut SeededRng,
    heldout: Option<HeldOut<'_>>,
) -> Result<(DynModel, TrainingRecord)> {
    cfg.validate()?;
    if cfg.encoder == EncoderMode::SkillOnehotDkt {
        return Err(Error::config("encoder", "end-to-end training needs question embeddings"));
    }
    let fm = match init {
        E2eInit::FromPretrained(fm) => {
            if fm.dim() != cfg.hidden_dim {
                return Err(Error::config(
                    "hidden_dim",
                    format!("hidden_dim {} must equal the embedding dim {}", cfg.hidden_dim, fm.dim()),
                ));
            }
            fm.clone()
        }
        E2eInit::Random => {
            let mut fm = FactorModel::zeros(ds.num_questions(), 0, cfg.hidden_dim);
            fm.w = Matrix::random_normal(ds.num_questions(), cfg.hidden_dim, cfg.e2e_init_scale, rng);
            fm
        }
    };
    let mut model = DynModel::new(
        &fm,
        cfg.encoder,
        ds.skill_of_question(),
        ds.num_skills(),
        cfg.fusion_dim,
        cfg.hidden_dim,
        rng,
    )?;
    let record = fit(&mut model, ds, cfg, true, rng, heldout)?;
    Ok((model, record))
}

/// DKT-style baseline: one-hot skill inputs and a per-skill output layer.
pub fn train_dkt(
    ds: &Dataset,
    cfg: &DynTrainConfig,
    rng: &mut SeededRng,
    heldout: Option<HeldOut<'_>>,
) -> Result<(DynModel, TrainingRecord)> {
    if ds.num_skills().is_none() {
        return Err(Error::config("model", "dkt needs a dataset with skill tags"));
    }
    let cfg = DynTrainConfig {
        encoder: EncoderMode::SkillOnehotDkt,
        ..cfg.clone()
    };
    let fm = FactorModel::zeros(ds.num_questions(), 0, 0);
    train_student_dyn(ds, &fm, &cfg, rng, heldout)
}

/// Mean log loss over the scored positions of `heldout`.
pub fn heldout_log_loss(model: &DynModel, heldout: HeldOut<'_>) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (s, seq) in heldout.data.sequences().enumerate() {
        let from = heldout.score_from.map_or(1, |f| f[s]).max(1);
        let mut st = model.initial_state();
        for t in 1..seq.len() {
            st = model.advance(&st, seq[t - 1].question, seq[t - 1].response);
            if t >= from {
                let p = model.predict_next(&st, seq[t].question).value();
                total += log_loss_unchecked(seq[t].response, p);
                count += 1;
            }
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Summed log loss of `model` over every scored position of `ds`.
pub fn total_log_loss(model: &DynModel, ds: &Dataset) -> f64 {
    let mut total = 0.0;
    for seq in ds.sequences() {
        let mut st = model.initial_state();
        for t in 1..seq.len() {
            st = model.advance(&st, seq[t - 1].question, seq[t - 1].response);
            total += log_loss_unchecked(seq[t].response, model.predict_next(&st, seq[t].question).value());
        }
    }
    total
}

/// Gradient buffers mirroring the trainable tensors of a [`DynModel`].
#[derive(Debug, Clone)]
pub(crate) struct Grads {
    pub lstm: LstmParams,
    pub fusion_w: Matrix,
    pub fusion_b: Vec<f64>,
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
    pub qw: Matrix,
    pub qb: Vec<f64>,
}

impl Grads {
    pub(crate) fn for_model(m: &DynModel) -> Self {
        let (fw, fb) = match &m.fusion {
            Some(f) => (Matrix::zeros(f.weights.rows(), f.weights.cols()), vec![0.0; f.bias.len()]),
            None => (Matrix::zeros(0, 0), Vec::new()),
        };
        let (ow, ob) = match &m.skill_output {
            Some(o) => (Matrix::zeros(o.weights.rows(), o.weights.cols()), vec![0.0; o.bias.len()]),
            None => (Matrix::zeros(0, 0), Vec::new()),
        };
        Grads {
            lstm: LstmParams::zeros(m.lstm.input_dim(), m.lstm.hidden_dim()),
            fusion_w: fw,
            fusion_b: fb,
            out_w: ow,
            out_b: ob,
            qw: Matrix::zeros(m.question_w.rows(), m.question_w.cols()),
            qb: vec![0.0; m.question_b.len()],
        }
    }

    fn tensors_mut(&mut self, train_questions: bool) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![
            self.lstm.weights.as_mut_slice(),
            &mut self.lstm.bias,
            self.fusion_w.as_mut_slice(),
            &mut self.fusion_b,
            self.out_w.as_mut_slice(),
            &mut self.out_b,
        ];
        if train_questions {
            v.push(self.qw.as_mut_slice());
            v.push(&mut self.qb);
        }
        v
    }

    fn zero(&mut self) {
        for t in self.tensors_mut(true) {
            t.fill(0.0);
        }
    }
}

pub(crate) fn model_tensors_mut(m: &mut DynModel, train_questions: bool) -> Vec<&mut [f64]> {
    let mut v: Vec<&mut [f64]> = vec![m.lstm.weights.as_mut_slice(), &mut m.lstm.bias];
    match &mut m.fusion {
        Some(f) => {
            v.push(f.weights.as_mut_slice());
            v.push(&mut f.bias);
        }
        None => {
            v.push(&mut []);
            v.push(&mut []);
        }
    }
    match &mut m.skill_output {
        Some(o) => {
            v.push(o.weights.as_mut_slice());
            v.push(&mut o.bias);
        }
        None => {
            v.push(&mut []);
            v.push(&mut []);
        }
    }
    if train_questions {
        v.push(m.question_w.as_mut_slice());
        v.push(&mut m.question_b);
    }
    v
}

/// Reusable per-window buffers.
struct Workspace {
    xh: Vec<f64>,
    gates: Vec<f64>,
    cells: Vec<f64>,
    hiddens: Vec<f64>,
    tanh_c: Vec<f64>,
    probs: Vec<f64>,
    pre: Vec<f64>,
    cat: Vec<f64>,
    enc: Vec<f64>,
    x: Vec<f64>,
    dh: Vec<f64>,
    dc: Vec<f64>,
    da: Vec<f64>,
    dx: Vec<f64>,
    de: Vec<f64>,
    dpre: Vec<f64>,
    dcat: Vec<f64>,
    tmp_pre: Vec<f64>,
    tmp_cat: Vec<f64>,
}

impl Workspace {
    fn new(m: &DynModel, window: usize) -> Self {
        let (i, h) = (m.lstm.input_dim(), m.lstm.hidden_dim());
        let e = m.encoded_dim();
        let f_out = m.fusion.as_ref().map_or(0, |f| f.out_dim());
        let f_in = m.embedding_dim() + m.num_skills;
        Workspace {
            xh: vec![0.0; window * (i + h)],
            gates: vec![0.0; window * 4 * h],
            cells: vec![0.0; (window + 1) * h],
            hiddens: vec![0.0; (window + 1) * h],
            tanh_c: vec![0.0; window * h],
            probs: vec![0.0; window],
            pre: vec![0.0; window * f_out],
            cat: vec![0.0; window * f_in],
            enc: vec![0.0; e],
            x: vec![0.0; i],
            dh: vec![0.0; h],
            dc: vec![0.0; h],
            da: vec![0.0; 4 * h],
            dx: vec![0.0; i],
            de: vec![0.0; e],
            dpre: vec![0.0; f_out],
            dcat: vec![0.0; f_in],
            tmp_pre: Vec::new(),
            tmp_cat: Vec::new(),
        }
    }
}

/// Accumulates the gradient of the summed log loss of `seq` into `g`.
/// Returns (loss sum, scored count).
fn sequence_grad(
    m: &DynModel,
    seq: &[Interaction],
    window: usize,
    train_questions: bool,
    g: &mut Grads,
    ws: &mut Workspace,
) -> (f64, usize) {
    let (i_dim, h) = (m.lstm.input_dim(), m.lstm.hidden_dim());
    let xh_dim = i_dim + h;
    let e_dim = m.encoded_dim();
    let f_out = m.fusion.as_ref().map_or(0, |f| f.out_dim());
    let f_in = m.embedding_dim() + m.num_skills;
    let need_dx = match m.encoder {
        EncoderMode::QuestionOnly => train_questions,
        EncoderMode::ConcatTags => true,
        EncoderMode::SkillOnehotDkt => false,
    };
    let mut loss = 0.0;
    let mut count = 0;
    ws.hiddens[..h].fill(0.0);
    ws.cells[..h].fill(0.0);
    let t_len = seq.len();
    let mut start = 1;
    while start < t_len {
        let end = (start + window).min(t_len);
        let steps = end - start;
        // forward
        for j in 0..steps {
            let t = start + j;
            let prev = &seq[t - 1];
            m.encode_question_into(prev.question, &mut ws.enc, &mut ws.tmp_pre, &mut ws.tmp_cat);
            if m.encoder == EncoderMode::ConcatTags {
                ws.pre[j * f_out..(j + 1) * f_out].copy_from_slice(&ws.tmp_pre);
                ws.cat[j * f_in..(j + 1) * f_in].copy_from_slice(&ws.tmp_cat);
            }
            encode_input_into(&ws.enc, prev.response, &mut ws.x);
            let (h_before, h_after) = ws.hiddens.split_at_mut((j + 1) * h);
            let (c_before, c_after) = ws.cells.split_at_mut((j + 1) * h);
            m.lstm.forward_into(
                &ws.x,
                &h_before[j * h..],
                &c_before[j * h..],
                &mut ws.xh[j * xh_dim..(j + 1) * xh_dim],
                &mut ws.gates[j * 4 * h..(j + 1) * 4 * h],
                &mut c_after[..h],
                &mut ws.tanh_c[j * h..(j + 1) * h],
                &mut h_after[..h],
            );
            let p = logistic(m.logit(&h_after[..h], seq[t].question));
            ws.probs[j] = p;
            loss += log_loss_unchecked(seq[t].response, Probability::clamped(p).value());
            count += 1;
        }
        // backward
        ws.dh.fill(0.0);
        ws.dc.fill(0.0);
        for j in (0..steps).rev() {
            let t = start + j;
            let cur = &seq[t];
            let prev = &seq[t - 1];
            let dlogit = ws.probs[j] - f64::from(cur.response);
            let h_t = &ws.hiddens[(j + 1) * h..(j + 2) * h];
            match &m.skill_output {
                Some(out) => match m.skill(cur.question) {
                    Some(k) => {
                        axpy(dlogit, h_t, g.out_w.row_mut(k));
                        g.out_b[k] += dlogit;
                        axpy(dlogit, out.weights.row(k), &mut ws.dh);
                    }
                    None => {
                        let share = dlogit / out.bias.len() as f64;
                        g.out_b.iter_mut().for_each(|b| *b += share);
                    }
                },
                None => {
                    let q = cur.question;
                    axpy(dlogit, m.question_w.row(q), &mut ws.dh);
                    if train_questions {
                        axpy(dlogit, h_t, g.qw.row_mut(q));
                        g.qb[q] += dlogit;
                    }
                }
            }
            m.lstm.backward(
                &ws.xh[j * xh_dim..(j + 1) * xh_dim],
                &ws.gates[j * 4 * h..(j + 1) * 4 * h],
                &ws.cells[j * h..(j + 1) * h],
                &ws.tanh_c[j * h..(j + 1) * h],
                &mut ws.dh,
                &mut ws.dc,
                &mut ws.da,
                &mut g.lstm,
                need_dx.then_some(ws.dx.as_mut_slice()),
            );
            if !need_dx {
                continue;
            }
            let (first, second) = ws.dx.split_at(e_dim);
            let src = if prev.response == 1 { first } else { second };
            ws.de.copy_from_slice(src);
            match m.encoder {
                EncoderMode::QuestionOnly => {
                    if prev.question < m.num_questions() {
                        axpy(1.0, &ws.de, g.qw.row_mut(prev.question));
                    }
                }
                EncoderMode::ConcatTags => {
                    let fusion = m.fusion.as_ref().expect("fusion");
                    let pre = &ws.pre[j * f_out..(j + 1) * f_out];
                    let cat = &ws.cat[j * f_in..(j + 1) * f_in];
                    for ((dp, &de), &p) in ws.dpre.iter_mut().zip(&ws.de).zip(pre) {
                        *dp = if p > 0.0 { de } else { 0.0 };
                    }
                    g.fusion_w.rank1_acc(1.0, &ws.dpre, cat);
                    axpy(1.0, &ws.dpre, &mut g.fusion_b);
                    if train_questions && prev.question < m.num_questions() {
                        ws.dcat.fill(0.0);
                        fusion.weights.matvec_t_acc(&ws.dpre, &mut ws.dcat);
                        let d = m.embedding_dim();
                        axpy(1.0, &ws.dcat[..d], g.qw.row_mut(prev.question));
                    }
                }
                EncoderMode::SkillOnehotDkt => {}
            }
        }
        // carry state into the next window without gradient
        ws.hiddens.copy_within(steps * h..(steps + 1) * h, 0);
        ws.cells.copy_within(steps * h..(steps + 1) * h, 0);
        start = end;
    }
    (loss, count)
}

/// Gradient of [`total_log_loss`] by truncated BPTT, one vector per tensor
/// in the order of [`DynModel::trainable_tensors_mut`].
pub fn bptt_gradient(m: &DynModel, ds: &Dataset, truncation: usize, train_questions: bool) -> Vec<Vec<f64>> {
    let window = truncation.max(1);
    let mut g = Grads::for_model(m);
    let mut ws = Workspace::new(m, window);
    for seq in ds.sequences() {
        sequence_grad(m, seq, window, train_questions, &mut g, &mut ws);
    }
    g.tensors_mut(train_questions).into_iter().map(|t| t.to_vec()).collect()
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(shapes: &[usize]) -> Self {
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, lr: f64, params: Vec<&mut [f64]>, grads: Vec<&mut [f64]>) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn fit(
    model: &mut DynModel,
    ds: &Dataset,
    cfg: &DynTrainConfig,
    train_questions: bool,
    rng: &mut SeededRng,
    heldout: Option<HeldOut<'_>>,
) -> Result<TrainingRecord> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut record = TrainingRecord {
        initial_test_log_loss: heldout.and_then(|h| heldout_log_loss(model, h)),
        curve: Vec::with_capacity(cfg.epochs),
    };
    let mut students: Vec<usize> = (0..ds.num_students()).filter(|&s| ds.sequence(s).len() >= 2).collect();
    let mut grads = Grads::for_model(model);
    let shapes: Vec<usize> = model.trainable_tensors_mut(train_questions).iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(&shapes);
    let window = cfg.truncation.min(ds.max_sequence_len().max(1));
    let mut ws = Workspace::new(model, window);

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut students);
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for batch in students.chunks(cfg.minibatch) {
            grads.zero();
            let mut count = 0;
            for &s in batch {
                let (l, c) = sequence_grad(model, ds.sequence(s), window, train_questions, &mut grads, &mut ws);
                epoch_loss += l;
                count += c;
            }
            epoch_count += count;
            if count == 0 {
                continue;
            }
            let scale = 1.0 / count as f64;
            let mut gts = grads.tensors_mut(train_questions);
            for g in gts.iter_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
                let norm = l2_norm(g);
                if norm > cfg.clip {
                    let shrink = cfg.clip / norm;
                    g.iter_mut().for_each(|v| *v *= shrink);
                }
            }
            if cfg.learning_rate > 0.0 {
                adam.step(cfg.learning_rate, model.trainable_tensors_mut(train_questions), gts);
            }
        }
        if !model.is_finite() {
            return Err(Error::invalid("training diverged; lower the learning rate"));
        }
        record.curve.push(CurveRow {
            epoch,
            train_log_loss: if epoch_count > 0 { epoch_loss / epoch_count as f64 } else { 0.0 },
            test_log_loss: heldout.and_then(|h| heldout_log_loss(model, h)),
        });
    }
    Ok(record)
}
