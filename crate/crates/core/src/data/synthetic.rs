//! Synthetic interaction logs with known generating parameters.
//!
//! Each student carries a latent ability vector that drifts as a random
//! walk and, after an incorrect answer, moves toward the answered
//! question's embedding direction. Responses are Bernoulli draws from the
//! logistic link of `<w_q, z_s(t)> + b_q`.

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetBuilder, Interaction};
use crate::error::{Error, Result};
use crate::mathcore::{dot_unchecked, l2_norm, logistic, Matrix, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_students: usize,
    pub num_questions: usize,
    pub dim: usize,
    pub seq_len: usize,
    /// Scale of the per-step random-walk increment.
    pub drift_rate: f64,
    /// Step length toward the question direction after an incorrect answer.
    pub learn_gain: f64,
    /// When set, question `q` gets skill `q % num_skills` and all questions
    /// of a skill share one embedding direction.
    pub num_skills: Option<usize>,
}

impl SyntheticConfig {
    pub fn new(num_students: usize, num_questions: usize, dim: usize, seq_len: usize) -> Self {
        SyntheticConfig {
            num_students,
            num_questions,
            dim,
            seq_len,
            drift_rate: 0.0,
            learn_gain: 0.0,
            num_skills: None,
        }
    }

    pub fn dynamics(mut self, drift_rate: f64, learn_gain: f64) -> Self {
        self.drift_rate = drift_rate;
        self.learn_gain = learn_gain;
        self
    }

    pub fn skills(mut self, num_skills: usize) -> Self {
        self.num_skills = Some(num_skills);
        self
    }
}

/// Generating parameters behind a synthetic [`Dataset`].
///
/// Question rows are in the dataset's dense question order; trajectories
/// are indexed like the dataset's students and hold the ability in effect
/// when each interaction was answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub question_embeddings: Matrix,
    pub question_biases: Vec<f64>,
    pub ability_trajectories: Vec<Matrix>,
    pub skill_of_question: Option<Vec<usize>>,
    pub config: SyntheticConfig,
}

impl GroundTruth {
    /// The probability the response to `it` was drawn from.
    pub fn true_probability(&self, it: &Interaction) -> f64 {
        let z = self.ability_trajectories[it.student].row(it.position);
        logistic(dot_unchecked(self.question_embeddings.row(it.question), z) + self.question_biases[it.question])
    }

    pub fn save_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig, rng: &mut SeededRng) -> Result<(Dataset, GroundTruth)> {
    let SyntheticConfig {
        num_students: n,
        num_questions: m,
        dim: d,
        seq_len,
        drift_rate,
        learn_gain,
        num_skills,
    } = *cfg;
    if n == 0 || m == 0 || d == 0 || seq_len == 0 {
        return Err(Error::invalid("synthetic counts must all be positive"));
    }
    if !(drift_rate >= 0.0 && learn_gain >= 0.0) {
        return Err(Error::invalid("drift_rate and learn_gain must be non-negative"));
    }
    if num_skills == Some(0) {
        return Err(Error::invalid("num_skills must be positive"));
    }
    // normal(0, 1/sqrt(d)) read as variance, so std = d^(-1/4).
    let scale = (d as f64).powf(-0.25);

    let w = match num_skills {
        None => Matrix::random_normal(m, d, scale, rng),
        Some(k) => {
            let dirs: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
                    let norm = l2_norm(&v).max(1e-12);
                    v.into_iter().map(|x| x / norm).collect()
                })
                .collect();
            let mut w = Matrix::zeros(m, d);
            for q in 0..m {
                let len = 0.5 + rng.uniform();
                for (x, u) in w.row_mut(q).iter_mut().zip(&dirs[q % k]) {
                    *x = len * u;
                }
            }
            w
        }
    };
    let b: Vec<f64> = (0..m).map(|_| scale * rng.normal()).collect();
    let unit: Vec<Vec<f64>> = (0..m)
        .map(|q| {
            let row = w.row(q);
            let norm = l2_norm(row).max(1e-12);
            row.iter().map(|x| x / norm).collect()
        })
        .collect();

    let qid = |q: usize| format!("q{q:05}");
    let kid = |k: usize| format!("k{k:03}");
    let mut builder = DatasetBuilder::new().extra_questions((0..m).map(qid));
    if let Some(k) = num_skills {
        builder = builder.extra_skills((0..k).map(kid));
    }
    let mut trajectories = Vec::with_capacity(n);
    for s in 0..n {
        let sid = format!("s{s:05}");
        let mut z: Vec<f64> = (0..d).map(|_| scale * rng.normal()).collect();
        let mut traj = Matrix::zeros(seq_len, d);
        for t in 0..seq_len {
            let q = rng.below(m);
            traj.row_mut(t).copy_from_slice(&z);
            let p = logistic(dot_unchecked(w.row(q), &z) + b[q]);
            let r = u8::from(rng.uniform() < p);
            let skill = num_skills.map(|k| kid(q % k));
            builder.push(&sid, &qid(q), r, skill.as_deref(), Some(t as i64));
            if drift_rate > 0.0 {
                for x in z.iter_mut() {
                    *x += drift_rate * rng.normal();
                }
            }
            if r == 0 && learn_gain > 0.0 {
                for (x, u) in z.iter_mut().zip(&unit[q]) {
                    *x += learn_gain * u;
                }
            }
        }
        trajectories.push(traj);
    }
    let ds = builder.build()?;
    let truth = GroundTruth {
        question_embeddings: w,
        question_biases: b,
        ability_trajectories: trajectories,
        skill_of_question: num_skills.map(|k| (0..m).map(|q| q % k).collect()),
        config: cfg.clone(),
    };
    Ok((ds, truth))
}
