//! Loaders for the ASSISTments skill-builder export and the KDD Cup 2010
//! Cognitive Tutor development files.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{natural_cmp, parse_binary, Dataset, DatasetBuilder, UNIT_SEPARATOR};
use crate::error::{Error, Result};

/// How rows sharing one `order_id` are cleaned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DedupPolicy {
    /// Drop every row of a duplicated interaction.
    Discard,
    /// Keep one row tagged with the composite of all its skills.
    Merge,
}

impl std::str::FromStr for DedupPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discard" => Ok(DedupPolicy::Discard),
            "merge" => Ok(DedupPolicy::Merge),
            other => Err(Error::config("policy", format!("unknown policy {other:?}"))),
        }
    }
}

/// Row counts before and after each cleaning rule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows_read: usize,
    pub not_original_removed: usize,
    pub duplicate_rows_removed: usize,
    pub interactions: usize,
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema {
            path: path.to_owned(),
            msg: format!("missing required column {name:?}"),
        })
}

struct AssistRow {
    order_id: i64,
    user: String,
    problem: String,
    correct: u8,
    skill: Option<String>,
    timestamp: Option<i64>,
}

/// Loads an ASSISTments skill-builder CSV export.
///
/// Rows with `original = 0` are removed first; rows sharing an `order_id`
/// are then collapsed according to `policy`. Output is ordered by
/// `(user_id, order_id)`.
pub fn load_assistments(path: impl AsRef<Path>, policy: DedupPolicy) -> Result<(Dataset, IngestStats)> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let c_order = column(&headers, "order_id", path)?;
    let c_user = column(&headers, "user_id", path)?;
    let c_problem = column(&headers, "problem_id", path)?;
    let c_correct = column(&headers, "correct", path)?;
    let c_skill = column(&headers, "skill_id", path)?;
    let c_original = column(&headers, "original", path)?;
    let c_ts = headers.iter().position(|h| h.trim() == "ms_first_response");

    let mut stats = IngestStats::default();
    let mut rows = Vec::new();
    for (i, rec) in rdr.byte_records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |c: usize| -> String {
            rec.get(c)
                .map(|b| String::from_utf8_lossy(b).trim().to_owned())
                .unwrap_or_default()
        };
        let perr = |msg: String| Error::Parse {
            path: path.to_owned(),
            line,
            msg,
        };
        stats.rows_read += 1;
        if parse_binary(&field(c_original)).map_err(perr)? == 0 {
            stats.not_original_removed += 1;
            continue;
        }
        let order = field(c_order);
        let order_id = order
            .parse::<i64>()
            .map_err(|e| perr(format!("order_id {order:?}: {e}")))?;
        let skill = Some(field(c_skill)).filter(|s| !s.is_empty());
        rows.push(AssistRow {
            order_id,
            user: field(c_user),
            problem: field(c_problem),
            correct: parse_binary(&field(c_correct)).map_err(perr)?,
            skill,
            timestamp: c_ts.and_then(|c| field(c).parse::<i64>().ok()),
        });
    }

    let mut groups: HashMap<i64, Vec<usize>> = HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(r.order_id).or_default().push(i);
    }
    let mut keep = vec![true; rows.len()];
    let mut composite: HashMap<usize, String> = HashMap::new();
    for members in groups.values().filter(|m| m.len() > 1) {
        match policy {
            DedupPolicy::Discard => {
                for &i in members {
                    keep[i] = false;
                }
                stats.duplicate_rows_removed += members.len();
            }
            DedupPolicy::Merge => {
                let tags: BTreeSet<&str> = members
                    .iter()
                    .filter_map(|&i| rows[i].skill.as_deref())
                    .collect();
                let mut tags: Vec<&str> = tags.into_iter().collect();
                tags.sort_by(|a, b| natural_cmp(a, b));
                let first = members[0];
                if !tags.is_empty() {
                    composite.insert(first, tags.join("+"));
                }
                for &i in &members[1..] {
                    keep[i] = false;
                }
                stats.duplicate_rows_removed += members.len() - 1;
            }
        }
    }
    for (i, tag) in composite {
        rows[i].skill = Some(tag);
    }

    let mut kept: Vec<AssistRow> = rows
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect();
    kept.sort_by(|a, b| natural_cmp(&a.user, &b.user).then(a.order_id.cmp(&b.order_id)));

    let mut b = DatasetBuilder::new();
    for r in &kept {
        b.push(&r.user, &r.problem, r.correct, r.skill.as_deref(), r.timestamp);
    }
    let ds = b.build()?;
    stats.interactions = ds.len();
    Ok((ds, stats))
}

/// Loads a KDD Cup 2010 Cognitive Tutor development file (tab-separated).
///
/// Question IDs are `Problem Name ␟ Step Name`; the response is
/// `Correct First Attempt`; the first `KC(...)` column supplies the skill.
pub fn load_cognitive_tutor(path: impl AsRef<Path>) -> Result<(Dataset, IngestStats)> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let c_student = column(&headers, "Anon Student Id", path)?;
    let c_problem = column(&headers, "Problem Name", path)?;
    let c_step = column(&headers, "Step Name", path)?;
    let c_correct = column(&headers, "Correct First Attempt", path)?;
    let c_kc = headers
        .iter()
        .position(|h| h.trim().starts_with("KC"))
        .ok_or_else(|| Error::Schema {
            path: path.to_owned(),
            msg: "missing KC column".into(),
        })?;

    let mut stats = IngestStats::default();
    let mut b = DatasetBuilder::new();
    for (i, rec) in rdr.byte_records().enumerate() {
        let rec = rec?;
        let field = |c: usize| -> String {
            rec.get(c)
                .map(|b| String::from_utf8_lossy(b).trim().to_owned())
                .unwrap_or_default()
        };
        stats.rows_read += 1;
        let correct = parse_binary(&field(c_correct)).map_err(|msg| Error::Parse {
            path: path.to_owned(),
            line: i + 2,
            msg,
        })?;
        let question = format!("{}{}{}", field(c_problem), UNIT_SEPARATOR, field(c_step));
        let kc = field(c_kc);
        b.push(
            &field(c_student),
            &question,
            correct,
            Some(kc.as_str()).filter(|k| !k.is_empty()),
            None,
        );
    }
    let ds = b.build()?;
    stats.interactions = ds.len();
    Ok((ds, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    const DUP: &str = "order_id,user_id,problem_id,correct,skill_id,original\n\
                       7,u1,p1,1,B,1\n\
                       7,u1,p1,1,A,1\n\
                       3,u1,p0,0,A,1\n";

    #[test]
    fn merge_builds_composite_tag() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", DUP);
        let (ds, stats) = load_assistments(&p, DedupPolicy::Merge).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(stats.duplicate_rows_removed, 1);
        // ordered by order_id: the order-3 row comes first
        let merged = ds.sequence(0)[1];
        let tag = ds.skills().unwrap().raw(merged.skill.unwrap()).unwrap();
        assert_eq!(tag, "A+B");
    }

    #[test]
    fn discard_drops_every_copy() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", DUP);
        let (ds, stats) = load_assistments(&p, DedupPolicy::Discard).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(stats.duplicate_rows_removed, 2);
    }

    #[test]
    fn clean_file_is_unchanged_except_not_original() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "order_id,user_id,problem_id,correct,skill_id,original\n\
             1,u1,p1,1,A,1\n2,u1,p2,0,A,0\n3,u2,p1,1,,1\n",
        );
        for policy in [DedupPolicy::Discard, DedupPolicy::Merge] {
            let (ds, stats) = load_assistments(&p, policy).unwrap();
            assert_eq!(ds.len(), 3 - 1);
            assert_eq!(stats.not_original_removed, 1);
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "order_id,user_id,problem_id,correct,skill_id\n1,u,p,1,A\n");
        let err = load_assistments(&p, DedupPolicy::Merge).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err}");
    }

    #[test]
    fn all_rows_removed_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "order_id,user_id,problem_id,correct,skill_id,original\n1,u,p,1,A,0\n",
        );
        assert!(matches!(
            load_assistments(&p, DedupPolicy::Merge),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn cognitive_tutor_question_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "ct.tsv",
            "Row\tAnon Student Id\tProblem Name\tStep Name\tCorrect First Attempt\tKC(Default)\n\
             1\ts1\tEG4\t3x=6\t1\tsolve\n\
             2\ts1\tEG4\tx=2\t0\tsolve\n",
        );
        let (ds, _) = load_cognitive_tutor(&p).unwrap();
        assert_eq!(ds.num_questions(), 2);
        assert_eq!(ds.questions().lookup("EG4\u{241F}3x=6"), 0);
        assert_eq!(ds.questions().lookup("EG4\u{241F}x=2"), 1);
    }
}
