//! Python bindings: datasets, the two model types, training, evaluation and
//! MDS projection. Randomness is passed as integer seeds.

use std::collections::BTreeMap;

use dynkt::analysis::{classical_mds, pairwise_distances};
use dynkt::cli::RunConfig;
use dynkt::data::{self, DedupPolicy, SyntheticConfig};
use dynkt::dynamics::{self, DynTrainConfig, EncoderMode};
use dynkt::embedding::{self, InitMode, MfTrainConfig};
use dynkt::evaluation;
use dynkt::mathcore::SeededRng;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn err(e: dynkt::Error) -> PyErr {
    match e {
        dynkt::Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows(m: &dynkt::mathcore::Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Interaction log grouped by student.
#[pyclass(name = "Dataset", module = "dynkt_py", frozen)]
struct PyDataset(data::Dataset);

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load_canonical(path: &str) -> PyResult<Self> {
        data::Dataset::load_canonical(path).map(PyDataset).map_err(err)
    }

    /// `policy` is "discard" or "merge".
    #[staticmethod]
    #[pyo3(signature = (path, policy = "discard"))]
    fn load_assistments(path: &str, policy: &str) -> PyResult<Self> {
        let policy: DedupPolicy = policy.parse().map_err(err)?;
        data::load_assistments(path, policy).map(|(d, _)| PyDataset(d)).map_err(err)
    }

    #[staticmethod]
    fn load_cognitive_tutor(path: &str) -> PyResult<Self> {
        data::load_cognitive_tutor(path).map(|(d, _)| PyDataset(d)).map_err(err)
    }

    /// Returns the dataset and the true question embeddings and biases.
    #[staticmethod]
    #[pyo3(signature = (students, questions, dim, seq_len, drift_rate = 0.0, learn_gain = 0.0, skills = None, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn synthetic(
        students: usize,
        questions: usize,
        dim: usize,
        seq_len: usize,
        drift_rate: f64,
        learn_gain: f64,
        skills: Option<usize>,
        seed: u64,
    ) -> PyResult<(Self, Vec<Vec<f64>>, Vec<f64>)> {
        let mut cfg = SyntheticConfig::new(students, questions, dim, seq_len).dynamics(drift_rate, learn_gain);
        if let Some(k) = skills {
            cfg = cfg.skills(k);
        }
        let (ds, gt) = data::generate_synthetic(&cfg, &mut SeededRng::new(seed)).map_err(err)?;
        Ok((PyDataset(ds), rows(&gt.question_embeddings), gt.question_biases))
    }

    fn save_canonical(&self, path: &str) -> PyResult<()> {
        self.0.save_canonical(path).map_err(err)
    }

    /// (train, test) split of whole students.
    fn split(&self, test_fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (a, b) = data::split_students(&self.0, test_fraction, &mut SeededRng::new(seed)).map_err(err)?;
        Ok((PyDataset(a), PyDataset(b)))
    }

    /// (student, question, response, skill) tuples with dense indices.
    fn interactions(&self) -> Vec<(usize, usize, u8, Option<usize>)> {
        self.0
            .interactions()
            .iter()
            .map(|it| (it.student, it.question, it.response, it.skill))
            .collect()
    }

    #[getter]
    fn num_students(&self) -> usize {
        self.0.num_students()
    }

    #[getter]
    fn num_questions(&self) -> usize {
        self.0.num_questions()
    }

    #[getter]
    fn num_skills(&self) -> Option<usize> {
        self.0.num_skills()
    }

    #[getter]
    fn correct_rate(&self) -> f64 {
        self.0.correct_rate()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} interactions, {} students, {} questions)",
            self.0.len(),
            self.0.num_students(),
            self.0.num_questions()
        )
    }
}

/// Biased matrix factorization.
#[pyclass(name = "FactorModel", module = "dynkt_py", frozen)]
struct PyFactorModel(embedding::FactorModel);

#[pymethods]
impl PyFactorModel {
    /// `init` is "random" or "skill_onehot".
    #[staticmethod]
    #[pyo3(signature = (ds, dim = 50, learning_rate = 0.01, epochs = 20, minibatch = 32, lam = 0.1, mu = 0.0, init = "random", seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        ds: &PyDataset,
        dim: usize,
        learning_rate: f64,
        epochs: usize,
        minibatch: usize,
        lam: f64,
        mu: f64,
        init: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let init_mode: InitMode = init.parse().map_err(err)?;
        let cfg = MfTrainConfig {
            dim,
            learning_rate,
            epochs,
            minibatch_size: minibatch,
            lambda: lam,
            mu,
            init_mode,
            ..MfTrainConfig::default()
        };
        embedding::train_mf(&ds.0, &cfg, &mut SeededRng::new(seed))
            .map(|(m, _)| PyFactorModel(m))
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        embedding::FactorModel::load(path).map(PyFactorModel).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    /// Probability that student `s` answers question `q` correctly.
    fn predict(&self, s: usize, q: usize) -> f64 {
        self.0.predict(s, q).value()
    }

    fn question_embeddings(&self) -> Vec<Vec<f64>> {
        rows(&self.0.w)
    }

    fn question_biases(&self) -> Vec<f64> {
        self.0.b.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// Recurrent student model (two-phase or DKT-style).
#[pyclass(name = "DynModel", module = "dynkt_py", frozen)]
struct PyDynModel(dynamics::DynModel);

#[pymethods]
impl PyDynModel {
    /// Fits the LSTM over frozen question embeddings from `fm`. `encoder`
    /// is "question_only" or "concat_tags".
    #[staticmethod]
    #[pyo3(signature = (ds, fm, encoder = "question_only", learning_rate = 0.005, epochs = 10, minibatch = 16, truncation = 100, clip = 5.0, fusion_dim = 50, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        ds: &PyDataset,
        fm: &PyFactorModel,
        encoder: &str,
        learning_rate: f64,
        epochs: usize,
        minibatch: usize,
        truncation: usize,
        clip: f64,
        fusion_dim: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = DynTrainConfig {
            learning_rate,
            epochs,
            minibatch,
            truncation,
            clip,
            hidden_dim: fm.0.dim(),
            encoder: encoder.parse::<EncoderMode>().map_err(err)?,
            fusion_dim,
            ..DynTrainConfig::default()
        };
        dynamics::train_student_dyn(&ds.0, &fm.0, &cfg, &mut SeededRng::new(seed), None)
            .map(|(m, _)| PyDynModel(m))
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (ds, hidden_dim = 50, learning_rate = 0.005, epochs = 10, seed = 0))]
    fn train_dkt(ds: &PyDataset, hidden_dim: usize, learning_rate: f64, epochs: usize, seed: u64) -> PyResult<Self> {
        let cfg = DynTrainConfig {
            learning_rate,
            epochs,
            hidden_dim,
            ..DynTrainConfig::default()
        };
        dynamics::train_dkt(&ds.0, &cfg, &mut SeededRng::new(seed), None)
            .map(|(m, _)| PyDynModel(m))
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        dynamics::DynModel::load(path).map(PyDynModel).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    /// Probability for each `(question, response)` pair given only the
    /// pairs before it.
    fn predict_sequence(&self, history: Vec<(usize, u8)>) -> PyResult<Vec<f64>> {
        if history.iter().any(|&(_, r)| r > 1) {
            return Err(PyValueError::new_err("responses must be 0 or 1"));
        }
        let mut st = self.0.initial_state();
        let mut out = Vec::with_capacity(history.len());
        for (q, r) in history {
            out.push(self.0.predict_next(&st, q).value());
            st = self.0.advance(&st, q, r);
        }
        Ok(out)
    }

    #[getter]
    fn hidden_dim(&self) -> usize {
        self.0.hidden_dim()
    }
}

/// Exact area under the ROC curve, ties counted as one half.
#[pyfunction]
fn auc(labels: Vec<u8>, scores: Vec<f64>) -> PyResult<f64> {
    evaluation::auc(&labels, &scores).map_err(err)
}

/// Runs one evaluation configured by CLI-style settings, e.g.
/// `{"model": "dynemb", "eval.protocol": "most-recent"}`. Returns the
/// report as JSON.
#[pyfunction]
#[pyo3(signature = (ds, settings = None))]
fn evaluate(ds: &PyDataset, settings: Option<BTreeMap<String, String>>) -> PyResult<String> {
    let mut cfg = RunConfig::default();
    for (k, v) in settings.unwrap_or_default() {
        cfg.set(&k, v).map_err(err)?;
    }
    let report = dynkt::cli::evaluate(&cfg, &ds.0).map_err(err)?;
    report.to_json().map_err(err)
}

/// Classical MDS of the given question rows. Returns (coordinates, stress).
#[pyfunction]
#[pyo3(signature = (fm, questions, out_dim = 2))]
fn mds(fm: &PyFactorModel, questions: Vec<usize>, out_dim: usize) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let d = pairwise_distances(&fm.0.w, &questions).map_err(err)?;
    let proj = classical_mds(&d, out_dim).map_err(err)?;
    Ok((rows(&proj.coordinates), proj.stress))
}

#[pymodule]
fn dynkt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFactorModel>()?;
    m.add_class::<PyDynModel>()?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mds, m)?)?;
    Ok(())
}
