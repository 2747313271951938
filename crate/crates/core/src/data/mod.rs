//! Interaction logs: the in-memory [`Dataset`], its vocabularies, the
//! canonical interaction file, loaders for public exports, population
//! splits and the synthetic ground-truth generator.

mod ingest;
mod split;
mod synthetic;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{load_assistments, load_cognitive_tutor, DedupPolicy, IngestStats};
pub use split::{holdout_cutoffs, split_students};
pub use synthetic::{generate_synthetic, GroundTruth, SyntheticConfig};

/// Dense index used for raw IDs that were never seen by a vocabulary.
pub const UNKNOWN: usize = usize::MAX;

/// Joins problem and step names into a Cognitive Tutor question ID.
pub const UNIT_SEPARATOR: char = '\u{241F}';

/// One graded student-question event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub student: usize,
    pub question: usize,
    pub response: u8,
    pub skill: Option<usize>,
    pub timestamp: Option<i64>,
    /// Ordinal within the student's own sequence, starting at 0.
    pub position: usize,
}

/// Bidirectional raw-ID ↔ dense-index table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn from_raw(raw: Vec<String>) -> Self {
        let index = raw
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        IdMap { raw, index }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Dense index of `raw`, or [`UNKNOWN`].
    pub fn lookup(&self, raw: &str) -> usize {
        self.index.get(raw).copied().unwrap_or(UNKNOWN)
    }

    pub fn raw(&self, idx: usize) -> Option<&str> {
        self.raw.get(idx).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.raw.iter().map(String::as_str)
    }
}

/// Ordering for raw IDs: integers numerically first, then strings.
pub(crate) fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

fn sorted_vocab<'a>(ids: impl Iterator<Item = &'a str>) -> IdMap {
    let mut raw: Vec<String> = ids.map(str::to_owned).collect();
    raw.sort_by(|a, b| natural_cmp(a, b));
    raw.dedup();
    IdMap::from_raw(raw)
}

/// An ordered interaction log grouped by student.
///
/// Students are indexed by first appearance; questions and skills by the
/// natural order of their raw IDs. Both rules are reproduced by the
/// canonical file loader, so save/load preserves every dense index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    interactions: Vec<Interaction>,
    offsets: Vec<usize>,
    students: IdMap,
    questions: IdMap,
    skills: Option<IdMap>,
    skill_of_question: Option<Vec<Option<usize>>>,
}

impl Dataset {
    pub fn num_students(&self) -> usize {
        self.students.len()
    }

    pub fn num_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn num_skills(&self) -> Option<usize> {
        self.skills.as_ref().map(IdMap::len)
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// The full sequence of student `s`.
    pub fn sequence(&self, s: usize) -> &[Interaction] {
        &self.interactions[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn sequences(&self) -> impl Iterator<Item = &[Interaction]> {
        (0..self.num_students()).map(move |s| self.sequence(s))
    }

    pub fn max_sequence_len(&self) -> usize {
        self.sequences().map(<[_]>::len).max().unwrap_or(0)
    }

    pub fn students(&self) -> &IdMap {
        &self.students
    }

    pub fn questions(&self) -> &IdMap {
        &self.questions
    }

    pub fn skills(&self) -> Option<&IdMap> {
        self.skills.as_ref()
    }

    /// Skill tag of question `q`, when tags exist and `q` has one.
    pub fn skill_of(&self, q: usize) -> Option<usize> {
        self.skill_of_question.as_ref()?.get(q).copied().flatten()
    }

    pub fn skill_of_question(&self) -> Option<&[Option<usize>]> {
        self.skill_of_question.as_deref()
    }

    /// Fraction of correct responses.
    pub fn correct_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let ones = self.interactions.iter().filter(|i| i.response == 1).count();
        ones as f64 / self.len() as f64
    }

    /// Keeps the listed students (re-indexed in the given order); the
    /// question and skill vocabularies are shared with `self`.
    pub fn subset_students(&self, keep: &[usize]) -> Dataset {
        let mut interactions = Vec::new();
        let mut offsets = vec![0];
        let mut raw = Vec::with_capacity(keep.len());
        for (new_s, &s) in keep.iter().enumerate() {
            raw.push(self.students.raw[s].clone());
            interactions.extend(self.sequence(s).iter().map(|i| Interaction {
                student: new_s,
                ..*i
            }));
            offsets.push(interactions.len());
        }
        Dataset {
            interactions,
            offsets,
            students: IdMap::from_raw(raw),
            ..self.vocab_only()
        }
    }

    /// Keeps the first `cutoffs[s]` interactions of every student.
    pub fn prefixes(&self, cutoffs: &[usize]) -> Result<Dataset> {
        if cutoffs.len() != self.num_students() {
            return Err(Error::dim(format!(
                "{} cutoffs for {} students",
                cutoffs.len(),
                self.num_students()
            )));
        }
        let mut interactions = Vec::new();
        let mut offsets = vec![0];
        for (s, &cut) in cutoffs.iter().enumerate() {
            let seq = self.sequence(s);
            interactions.extend_from_slice(&seq[..cut.min(seq.len())]);
            offsets.push(interactions.len());
        }
        Ok(Dataset {
            interactions,
            offsets,
            students: self.students.clone(),
            ..self.vocab_only()
        })
    }

    /// Copy of `self` with every response replaced by `f(interaction)`.
    pub fn map_responses(&self, mut f: impl FnMut(&Interaction) -> u8) -> Dataset {
        let mut out = self.clone();
        for it in &mut out.interactions {
            it.response = f(it) & 1;
        }
        out
    }

    fn vocab_only(&self) -> Dataset {
        Dataset {
            interactions: Vec::new(),
            offsets: vec![0],
            students: IdMap::default(),
            questions: self.questions.clone(),
            skills: self.skills.clone(),
            skill_of_question: self.skill_of_question.clone(),
        }
    }

    /// Writes the canonical `student,question,response,skill,timestamp` file.
    pub fn save_canonical(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_canonical(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_canonical<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["student", "question", "response", "skill", "timestamp"])?;
        let skills = self.skills.as_ref();
        for it in &self.interactions {
            let skill = match (it.skill, skills) {
                (Some(k), Some(map)) => map.raw[k].clone(),
                _ => String::new(),
            };
            let ts = it.timestamp.map(|t| t.to_string()).unwrap_or_default();
            w.write_record([
                self.students.raw[it.student].as_str(),
                self.questions.raw[it.question].as_str(),
                if it.response == 1 { "1" } else { "0" },
                skill.as_str(),
                ts.as_str(),
            ])?;
        }
        Ok(())
    }

    /// Reads a canonical interaction file.
    pub fn load_canonical(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let expected = ["student", "question", "response", "skill", "timestamp"];
        if headers.iter().map(str::trim).ne(expected.iter().copied()) {
            return Err(Error::Schema {
                path: path.to_owned(),
                msg: format!("expected header {}", expected.join(",")),
            });
        }
        let mut b = DatasetBuilder::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let parse_err = |msg: String| Error::Parse {
                path: path.to_owned(),
                line,
                msg,
            };
            let response = parse_binary(&rec[2]).map_err(parse_err)?;
            let skill = Some(rec[3].trim()).filter(|s| !s.is_empty());
            let ts = match rec[4].trim() {
                "" => None,
                t => Some(
                    t.parse::<i64>()
                        .map_err(|e| parse_err(format!("timestamp {t:?}: {e}")))?,
                ),
            };
            b.push(rec[0].trim(), rec[1].trim(), response, skill, ts);
        }
        b.build()
    }
}

pub(crate) fn parse_binary(s: &str) -> std::result::Result<u8, String> {
    match s.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => match other.parse::<f64>() {
            Ok(v) if v == 0.0 => Ok(0),
            Ok(v) if v == 1.0 => Ok(1),
            _ => Err(format!("response {other:?} is not 0 or 1")),
        },
    }
}

#[derive(Debug, Clone)]
struct RawRecord {
    student: String,
    question: String,
    response: u8,
    skill: Option<String>,
    timestamp: Option<i64>,
}

/// Collects raw records and assigns dense indices.
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    records: Vec<RawRecord>,
    extra_questions: Vec<String>,
    extra_skills: Vec<String>,
}

impl DatasetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        student: &str,
        question: &str,
        response: u8,
        skill: Option<&str>,
        timestamp: Option<i64>,
    ) {
        self.records.push(RawRecord {
            student: student.to_owned(),
            question: question.to_owned(),
            response,
            skill: skill.map(str::to_owned),
            timestamp,
        });
    }

    /// Registers question IDs that belong in the vocabulary even if no
    /// record references them.
    pub fn extra_questions(mut self, ids: impl IntoIterator<Item = String>) -> Self {
        self.extra_questions.extend(ids);
        self
    }

    pub fn extra_skills(mut self, ids: impl IntoIterator<Item = String>) -> Self {
        self.extra_skills.extend(ids);
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn build(self) -> Result<Dataset> {
        if self.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let questions = sorted_vocab(
            self.records
                .iter()
                .map(|r| r.question.as_str())
                .chain(self.extra_questions.iter().map(String::as_str)),
        );
        let has_skills = self.records.iter().any(|r| r.skill.is_some());
        let skills = has_skills.then(|| {
            sorted_vocab(
                self.records
                    .iter()
                    .filter_map(|r| r.skill.as_deref())
                    .chain(self.extra_skills.iter().map(String::as_str)),
            )
        });

        // Stable grouping by student first appearance.
        let mut student_of: HashMap<&str, usize> = HashMap::new();
        let mut student_raw: Vec<String> = Vec::new();
        let mut groups: Vec<Vec<&RawRecord>> = Vec::new();
        for r in &self.records {
            let s = *student_of.entry(r.student.as_str()).or_insert_with(|| {
                student_raw.push(r.student.clone());
                groups.push(Vec::new());
                student_raw.len() - 1
            });
            groups[s].push(r);
        }

        let mut skill_of_question = skills.as_ref().map(|_| vec![None; questions.len()]);
        let mut interactions = Vec::with_capacity(self.records.len());
        let mut offsets = vec![0];
        for (s, group) in groups.iter().enumerate() {
            for (pos, r) in group.iter().enumerate() {
                let q = questions.lookup(&r.question);
                let skill = match (&skills, &r.skill) {
                    (Some(map), Some(k)) => Some(map.lookup(k)),
                    _ => None,
                };
                if let (Some(table), Some(k)) = (skill_of_question.as_mut(), skill) {
                    table[q].get_or_insert(k);
                }
                interactions.push(Interaction {
                    student: s,
                    question: q,
                    response: r.response,
                    skill,
                    timestamp: r.timestamp,
                    position: pos,
                });
            }
            offsets.push(interactions.len());
        }
        Ok(Dataset {
            interactions,
            offsets,
            students: IdMap::from_raw(student_raw),
            questions,
            skills,
            skill_of_question,
        })
    }
}
