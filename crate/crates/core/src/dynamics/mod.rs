//! Student dynamics: an LSTM whose hidden state is the student's current
//! embedding, fed Kronecker-encoded (question, previous response) inputs.
//!
//! Three encoders are supported:
//! * `question_only` feeds the factorization's question embedding `W_q`;
//! * `concat_tags` feeds `ReLU(F [W_q; onehot(skill(q))] + f)`;
//! * `skill_onehot_dkt` feeds `onehot(skill(q))` and scores with a learned
//!   per-skill output layer (a DKT-style baseline).

mod lstm;
mod train;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{self, ModelKind};
use crate::data::Interaction;
use crate::embedding::FactorModel;
use crate::error::{Error, Result};
use crate::mathcore::{dot_unchecked, Matrix, Probability, SeededRng};

pub use lstm::{lstm_step, LstmParams, StudentState};
pub use train::{
    bptt_gradient, heldout_log_loss, total_log_loss, train_dkt, train_end_to_end, train_student_dyn, CurveRow, DynTrainConfig, E2eInit, HeldOut,
    TrainingRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    QuestionOnly,
    ConcatTags,
    SkillOnehotDkt,
}

impl EncoderMode {
    fn code(self) -> u64 {
        match self {
            EncoderMode::QuestionOnly => 0,
            EncoderMode::ConcatTags => 1,
            EncoderMode::SkillOnehotDkt => 2,
        }
    }

    fn from_code(c: u64) -> Result<Self> {
        match c {
            0 => Ok(EncoderMode::QuestionOnly),
            1 => Ok(EncoderMode::ConcatTags),
            2 => Ok(EncoderMode::SkillOnehotDkt),
            _ => Err(Error::Format(format!("unknown encoder mode {c}"))),
        }
    }
}

impl std::str::FromStr for EncoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "question_only" => Ok(EncoderMode::QuestionOnly),
            "concat_tags" => Ok(EncoderMode::ConcatTags),
            "skill_onehot_dkt" => Ok(EncoderMode::SkillOnehotDkt),
            other => Err(Error::config("encoder", format!("unknown encoder {other:?}"))),
        }
    }
}

/// Fully connected ReLU layer fusing `[W_q; onehot(skill)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    /// `out_dim × (d + num_skills)`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl FusionParams {
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn init(out_dim: usize, in_dim: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        FusionParams {
            weights: Matrix::from_fn(out_dim, in_dim, |_, _| bound * (2.0 * rng.uniform() - 1.0)),
            bias: vec![0.0; out_dim],
        }
    }
}

/// Per-skill output layer of the DKT baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillOutput {
    /// `num_skills × hidden_dim`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynModel {
    pub lstm: LstmParams,
    /// Question embeddings `M × d` (frozen during two-phase training).
    pub question_w: Matrix,
    /// Question biases (frozen during two-phase training).
    pub question_b: Vec<f64>,
    pub fusion: Option<FusionParams>,
    pub skill_output: Option<SkillOutput>,
    pub encoder: EncoderMode,
    pub num_skills: usize,
    /// Skill tag per question; `None` entries encode as all-zero one-hots.
    pub skill_of_question: Vec<Option<usize>>,
}

/// Kronecker product `[r, 1-r] ⊗ e`: the first block is `r·e`, the second
/// `(1-r)·e`.
pub fn encode_input(e: &[f64], response: u8) -> Vec<f64> {
    let mut out = vec![0.0; 2 * e.len()];
    encode_input_into(e, response, &mut out);
    out
}

pub(crate) fn encode_input_into(e: &[f64], response: u8, out: &mut [f64]) {
    let k = e.len();
    let (first, second) = out.split_at_mut(k);
    if response == 1 {
        first.copy_from_slice(e);
        second.fill(0.0);
    } else {
        first.fill(0.0);
        second.copy_from_slice(e);
    }
}

impl DynModel {
    /// Builds an untrained model around a factorization's question side.
    pub fn new(
        fm: &FactorModel,
        encoder: EncoderMode,
        skill_of_question: Option<&[Option<usize>]>,
        num_skills: Option<usize>,
        fusion_dim: usize,
        dkt_hidden: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let d = fm.dim();
        let m = fm.num_questions();
        let need_tags = || -> Result<(Vec<Option<usize>>, usize)> {
            match (skill_of_question, num_skills) {
                (Some(t), Some(k)) if k > 0 => Ok((t.to_vec(), k)),
                _ => Err(Error::config("encoder", "this encoder needs skill tags")),
            }
        };
        let (tags, k) = match encoder {
            EncoderMode::QuestionOnly => (vec![None; m], 0),
            _ => need_tags()?,
        };
        if tags.len() != m {
            return Err(Error::dim("skill table length differs from question count"));
        }
        let (lstm, fusion, skill_output) = match encoder {
            EncoderMode::QuestionOnly => (LstmParams::init(2 * d, d, rng), None, None),
            EncoderMode::ConcatTags => {
                if fusion_dim == 0 {
                    return Err(Error::config("fusion_dim", "must be at least 1"));
                }
                let fusion = FusionParams::init(fusion_dim, d + k, rng);
                (LstmParams::init(2 * fusion_dim, d, rng), Some(fusion), None)
            }
            EncoderMode::SkillOnehotDkt => {
                if dkt_hidden == 0 {
                    return Err(Error::config("hidden_dim", "must be at least 1"));
                }
                let lstm = LstmParams::init(2 * k, dkt_hidden, rng);
                let bound = 1.0 / (dkt_hidden as f64).sqrt();
                let out = SkillOutput {
                    weights: Matrix::from_fn(k, dkt_hidden, |_, _| bound * (2.0 * rng.uniform() - 1.0)),
                    bias: vec![0.0; k],
                };
                (lstm, None, Some(out))
            }
        };
        Ok(DynModel {
            lstm,
            question_w: fm.w.clone(),
            question_b: fm.b.clone(),
            fusion,
            skill_output,
            encoder,
            num_skills: k,
            skill_of_question: tags,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm.hidden_dim()
    }

    pub fn num_questions(&self) -> usize {
        self.question_w.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.question_w.cols()
    }

    /// Length of [`Self::encode_question`]'s output.
    pub fn encoded_dim(&self) -> usize {
        match self.encoder {
            EncoderMode::QuestionOnly => self.embedding_dim(),
            EncoderMode::ConcatTags => self.fusion.as_ref().map_or(0, FusionParams::out_dim),
            EncoderMode::SkillOnehotDkt => self.num_skills,
        }
    }

    fn skill(&self, q: usize) -> Option<usize> {
        self.skill_of_question.get(q).copied().flatten()
    }

    fn mean_bias(&self) -> f64 {
        if self.question_b.is_empty() {
            0.0
        } else {
            self.question_b.iter().sum::<f64>() / self.question_b.len() as f64
        }
    }

    /// Writes `[W_q; onehot(skill(q))]` (zeros for unknown parts).
    pub(crate) fn fusion_input_into(&self, q: usize, out: &mut [f64]) {
        let d = self.embedding_dim();
        out.fill(0.0);
        if q < self.num_questions() {
            out[..d].copy_from_slice(self.question_w.row(q));
        }
        if let Some(k) = self.skill(q) {
            out[d + k] = 1.0;
        }
    }

    /// The vector this model feeds to the LSTM for question `q`.
    pub fn encode_question(&self, q: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.encoded_dim()];
        let mut pre = Vec::new();
        let mut cat = Vec::new();
        self.encode_question_into(q, &mut out, &mut pre, &mut cat);
        out
    }

    /// `pre` receives fusion pre-activations and `cat` the fusion input;
    /// both are left empty for the other encoders.
    pub(crate) fn encode_question_into(&self, q: usize, out: &mut [f64], pre: &mut Vec<f64>, cat: &mut Vec<f64>) {
        match self.encoder {
            EncoderMode::QuestionOnly => {
                if q < self.num_questions() {
                    out.copy_from_slice(self.question_w.row(q));
                } else {
                    out.fill(0.0);
                }
            }
            EncoderMode::SkillOnehotDkt => {
                out.fill(0.0);
                if let Some(k) = self.skill(q) {
                    out[k] = 1.0;
                }
            }
            EncoderMode::ConcatTags => {
                let fusion = self.fusion.as_ref().expect("concat encoder has fusion params");
                cat.resize(self.embedding_dim() + self.num_skills, 0.0);
                self.fusion_input_into(q, cat);
                pre.resize(fusion.out_dim(), 0.0);
                fusion.weights.matvec_into(cat, pre);
                for ((o, p), b) in out.iter_mut().zip(pre.iter_mut()).zip(&fusion.bias) {
                    *p += b;
                    *o = p.max(0.0);
                }
            }
        }
    }

    /// Logit of a correct answer to `q` given hidden state `h`.
    pub fn logit(&self, h: &[f64], q: usize) -> f64 {
        match &self.skill_output {
            Some(out) => match self.skill(q) {
                Some(k) => dot_unchecked(out.weights.row(k), h) + out.bias[k],
                None => out.bias.iter().sum::<f64>() / out.bias.len().max(1) as f64,
            },
            None => {
                if q < self.num_questions() {
                    dot_unchecked(self.question_w.row(q), h) + self.question_b[q]
                } else {
                    self.mean_bias()
                }
            }
        }
    }

    /// σ(<W_q, h> + b_q); the DKT encoder uses its per-skill output layer.
    pub fn predict_next(&self, st: &StudentState, q: usize) -> Probability {
        Probability::from_logit(self.logit(&st.h, q))
    }

    pub fn initial_state(&self) -> StudentState {
        StudentState::zeros(self.hidden_dim())
    }

    /// Absorbs one answered interaction into the state.
    pub fn advance(&self, st: &StudentState, q: usize, response: u8) -> StudentState {
        let x = encode_input(&self.encode_question(q), response);
        self.lstm.step(st, &x).expect("encoder output matches LSTM input")
    }

    /// State after reading `history` from a fresh student.
    pub fn roll(&self, history: &[Interaction]) -> StudentState {
        history
            .iter()
            .fold(self.initial_state(), |st, it| self.advance(&st, it.question, it.response))
    }

    /// Trainable tensors in a fixed order: LSTM weights and bias, fusion
    /// weights and bias, skill-output weights and bias (empty when absent),
    /// then question embeddings and biases when `include_questions`.
    pub fn trainable_tensors_mut(&mut self, include_questions: bool) -> Vec<&mut [f64]> {
        train::model_tensors_mut(self, include_questions)
    }

    pub fn is_finite(&self) -> bool {
        self.lstm.is_finite()
            && self.question_w.is_finite()
            && self.question_b.iter().all(|v| v.is_finite())
            && self.fusion.as_ref().is_none_or(|f| f.weights.is_finite() && f.bias.iter().all(|v| v.is_finite()))
            && self
                .skill_output
                .as_ref()
                .is_none_or(|o| o.weights.is_finite() && o.bias.iter().all(|v| v.is_finite()))
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
        let mut w = container::Writer::new(out, ModelKind::Dynamic)?;
        w.u64("encoder", self.encoder.code())?;
        w.u64("input_dim", self.lstm.input_dim() as u64)?;
        w.u64("hidden_dim", self.lstm.hidden_dim() as u64)?;
        w.u64("num_questions", self.num_questions() as u64)?;
        w.u64("embedding_dim", self.embedding_dim() as u64)?;
        w.u64("num_skills", self.num_skills as u64)?;
        w.f64s("lstm_weights", self.lstm.weights.as_slice())?;
        w.f64s("lstm_bias", &self.lstm.bias)?;
        w.f64s("W", self.question_w.as_slice())?;
        w.f64s("b", &self.question_b)?;
        let tags: Vec<i64> = self
            .skill_of_question
            .iter()
            .map(|t| t.map_or(-1, |k| k as i64))
            .collect();
        w.i64s("skill_of_question", &tags)?;
        match &self.fusion {
            Some(f) => {
                w.u64("fusion_out", f.out_dim() as u64)?;
                w.f64s("fusion_weights", f.weights.as_slice())?;
                w.f64s("fusion_bias", &f.bias)?;
            }
            None => w.u64("fusion_out", 0)?,
        }
        match &self.skill_output {
            Some(o) => {
                w.u64("skill_output", 1)?;
                w.f64s("skill_output_weights", o.weights.as_slice())?;
                w.f64s("skill_output_bias", &o.bias)?;
            }
            None => w.u64("skill_output", 0)?,
        }
        w.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = container::Reader::new(input, ModelKind::Dynamic)?;
        let encoder = EncoderMode::from_code(r.u64("encoder")?)?;
        let input_dim = r.usize("input_dim")?;
        let hidden = r.usize("hidden_dim")?;
        let m = r.usize("num_questions")?;
        let d = r.usize("embedding_dim")?;
        let k = r.usize("num_skills")?;
        let lw = Matrix::from_vec(4 * hidden, input_dim + hidden, r.f64s("lstm_weights")?)?;
        let lstm = LstmParams::from_parts(input_dim, hidden, lw, r.f64s("lstm_bias")?)?;
        let question_w = Matrix::from_vec(m, d, r.f64s("W")?)?;
        let question_b = r.f64s("b")?;
        let skill_of_question: Vec<Option<usize>> = r
            .i64s("skill_of_question")?
            .into_iter()
            .map(|v| (v >= 0).then_some(v as usize))
            .collect();
        let fusion_out = r.usize("fusion_out")?;
        let fusion = if fusion_out > 0 {
            let weights = Matrix::from_vec(fusion_out, d + k, r.f64s("fusion_weights")?)?;
            Some(FusionParams {
                weights,
                bias: r.f64s("fusion_bias")?,
            })
        } else {
            None
        };
        let skill_output = if r.u64("skill_output")? == 1 {
            Some(SkillOutput {
                weights: Matrix::from_vec(k, hidden, r.f64s("skill_output_weights")?)?,
                bias: r.f64s("skill_output_bias")?,
            })
        } else {
            None
        };
        r.finish()?;
        if question_b.len() != m || skill_of_question.len() != m {
            return Err(Error::Format("question tables disagree with num_questions".into()));
        }
        Ok(DynModel {
            lstm,
            question_w,
            question_b,
            fusion,
            skill_output,
            encoder,
            num_skills: k,
            skill_of_question,
        })
    }
}
