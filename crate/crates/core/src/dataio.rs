//! Loading, validation, filtering and splitting of learner interaction logs
//! and the expert Q-matrix.
//!
//! Input logs are delimited text with a header row. Column names and the
//! delimiter are configurable via [`LogFormat`]; the defaults match the
//! reference schema `learner_id, question_id, correct, timestamp,
//! elapsed_time`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One graded attempt. The learner id is the key of
/// [`InteractionDataset::sequences`]; `question` indexes the dataset's
/// question label list (after [`filter_dataset`], the Q-matrix's).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub question: u32,
    pub correct: bool,
    /// Seconds since epoch.
    pub timestamp: i64,
    /// Raw elapsed answering time in seconds, uncapped, >= 0.
    pub elapsed: f64,
}

/// Per-learner, time-ordered response logs.
#[derive(Debug, Clone, Default)]
pub struct InteractionDataset {
    /// learner id -> interactions sorted non-decreasing by timestamp
    /// (ties keep file order). BTreeMap so iteration order is deterministic.
    pub sequences: BTreeMap<String, Vec<Interaction>>,
    /// question index -> label
    pub question_labels: Vec<String>,
    /// |S| of the aligned Q-matrix; 0 until [`filter_dataset`] aligned it.
    pub skill_count: usize,
    /// False when the source log had no usable elapsed_time column; all
    /// elapsed values are then 0.
    pub has_elapsed: bool,
}

impl InteractionDataset {
    pub fn learner_count(&self) -> usize {
        self.sequences.len()
    }

    pub fn question_count(&self) -> usize {
        self.question_labels.len()
    }

    pub fn interaction_count(&self) -> usize {
        self.sequences.values().map(Vec::len).sum()
    }

    /// Learner ids in the dataset's canonical (sorted) order.
    pub fn learner_ids(&self) -> Vec<&str> {
        self.sequences.keys().map(String::as_str).collect()
    }
}

/// Binary question -> skill mapping.
#[derive(Debug, Clone)]
pub struct QMatrix {
    entries: Vec<u8>,
    question_ids: Vec<String>,
    skill_ids: Vec<String>,
    /// question index -> sorted skill indices with a 1 entry
    skills_per_question: Vec<Vec<u32>>,
}

impl QMatrix {
    /// Build from explicit (question, skill) label pairs. Duplicate pairs
    /// collapse to a single 1. When `known_skills` is given, skills are laid
    /// out in that order and any pair naming a skill outside the list gets a
    /// fresh appended column (with a warning).
    pub fn from_pairs(pairs: &[(String, String)], known_skills: Option<&[String]>) -> Self {
        let mut question_ids: Vec<String> = Vec::new();
        let mut qindex: HashMap<String, usize> = HashMap::new();
        let mut skill_ids: Vec<String> = Vec::new();
        let mut sindex: HashMap<String, usize> = HashMap::new();

        if let Some(known) = known_skills {
            for s in known {
                if !sindex.contains_key(s) {
                    sindex.insert(s.clone(), skill_ids.len());
                    skill_ids.push(s.clone());
                }
            }
        }

        let mut set: HashSet<(usize, usize)> = HashSet::new();
        for (q, s) in pairs {
            let qi = *qindex.entry(q.clone()).or_insert_with(|| {
                question_ids.push(q.clone());
                question_ids.len() - 1
            });
            let si = match sindex.get(s) {
                Some(&i) => i,
                None => {
                    if known_skills.is_some() {
                        log::warn!("q-matrix pair ({q}, {s}): unknown skill label, appending new column");
                    }
                    sindex.insert(s.clone(), skill_ids.len());
                    skill_ids.push(s.clone());
                    skill_ids.len() - 1
                }
            };
            set.insert((qi, si));
        }

        let nq = question_ids.len();
        let ns = skill_ids.len();
        let mut entries = vec![0u8; nq * ns];
        for (qi, si) in set {
            entries[qi * ns + si] = 1;
        }
        let mut m = QMatrix {
            entries,
            question_ids,
            skill_ids,
            skills_per_question: Vec::new(),
        };
        m.rebuild_skill_lists();
        m
    }

    /// Build from a dense 0/1 entry matrix.
    pub fn from_dense(
        entries: Vec<u8>,
        question_ids: Vec<String>,
        skill_ids: Vec<String>,
    ) -> Result<Self> {
        if entries.len() != question_ids.len() * skill_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "q-matrix entries length {} != {} questions x {} skills",
                entries.len(),
                question_ids.len(),
                skill_ids.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|&&e| e > 1) {
            return Err(Error::InvalidArgument(format!(
                "q-matrix entry {bad} outside {{0,1}}"
            )));
        }
        let mut m = QMatrix {
            entries,
            question_ids,
            skill_ids,
            skills_per_question: Vec::new(),
        };
        m.rebuild_skill_lists();
        Ok(m)
    }

    fn rebuild_skill_lists(&mut self) {
        let ns = self.skill_ids.len();
        self.skills_per_question = self
            .question_ids
            .iter()
            .enumerate()
            .map(|(qi, _)| {
                (0..ns)
                    .filter(|&si| self.entries[qi * ns + si] == 1)
                    .map(|si| si as u32)
                    .collect()
            })
            .collect();
    }

    pub fn n_questions(&self) -> usize {
        self.question_ids.len()
    }

    pub fn n_skills(&self) -> usize {
        self.skill_ids.len()
    }

    pub fn question_ids(&self) -> &[String] {
        &self.question_ids
    }

    pub fn skill_ids(&self) -> &[String] {
        &self.skill_ids
    }

    pub fn get(&self, q: usize, s: usize) -> bool {
        self.entries[q * self.skill_ids.len() + s] == 1
    }

    /// Sorted skill indices of question `q`.
    pub fn skills_of(&self, q: usize) -> &[u32] {
        &self.skills_per_question[q]
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().filter(|&&e| e == 1).count()
    }

    pub fn question_index(&self, label: &str) -> Option<usize> {
        self.question_ids.iter().position(|q| q == label)
    }
}

/// Column names, delimiter and unit conventions of an interaction log.
#[derive(Debug, Clone)]
pub struct LogFormat {
    pub delimiter: u8,
    pub learner_col: String,
    pub question_col: String,
    pub correct_col: String,
    pub timestamp_col: String,
    pub elapsed_col: String,
    /// Timestamps in the file are milliseconds; convert to whole seconds
    /// (divide by 1000, floor) at load.
    pub timestamp_in_millis: bool,
}

impl Default for LogFormat {
    fn default() -> Self {
        LogFormat {
            delimiter: b',',
            learner_col: "learner_id".into(),
            question_col: "question_id".into(),
            correct_col: "correct".into(),
            timestamp_col: "timestamp".into(),
            elapsed_col: "elapsed_time".into(),
            timestamp_in_millis: false,
        }
    }
}

fn skill_label_is_nan(label: &str) -> bool {
    label.is_empty() || label.eq_ignore_ascii_case("nan") || label.eq_ignore_ascii_case("na")
}

/// Load an interaction log. Sequences come back grouped by learner and
/// sorted by timestamp, ties broken by file order. A zero-byte file loads
/// as an empty dataset with a warning.
pub fn load_interactions(path: &Path, format: &LogFormat) -> Result<InteractionDataset> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.len() == 0 {
        log::warn!("{}: empty interaction log, loading 0 learners", path.display());
        return Ok(InteractionDataset {
            has_elapsed: false,
            ..Default::default()
        });
    }

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    let col = |name: &str| -> Option<usize> { headers.iter().position(|h| h == name) };
    let required = |name: &str| -> Result<usize> {
        col(name).ok_or_else(|| Error::format(path, format!("missing column `{name}`")))
    };

    let learner_c = required(&format.learner_col)?;
    let question_c = required(&format.question_col)?;
    let correct_c = required(&format.correct_col)?;
    let timestamp_c = required(&format.timestamp_col)?;
    let elapsed_c = col(&format.elapsed_col);
    if elapsed_c.is_none() {
        log::warn!(
            "{}: no `{}` column, elapsed times default to 0",
            path.display(),
            format.elapsed_col
        );
    }

    let mut question_labels: Vec<String> = Vec::new();
    let mut qindex: HashMap<String, u32> = HashMap::new();
    let mut sequences: BTreeMap<String, Vec<Interaction>> = BTreeMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");

        let learner = field(learner_c).to_string();
        let qlabel = field(question_c);
        let question = match qindex.get(qlabel) {
            Some(&i) => i,
            None => {
                let i = question_labels.len() as u32;
                question_labels.push(qlabel.to_string());
                qindex.insert(qlabel.to_string(), i);
                i
            }
        };

        let correct = match field(correct_c) {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::row(
                    path,
                    line,
                    format!("correct must be 0 or 1, got `{other}`"),
                ))
            }
        };

        let raw_ts: i64 = field(timestamp_c).parse().map_err(|_| {
            Error::row(
                path,
                line,
                format!("non-numeric timestamp `{}`", field(timestamp_c)),
            )
        })?;
        let timestamp = if format.timestamp_in_millis {
            raw_ts.div_euclid(1000)
        } else {
            raw_ts
        };

        let elapsed = match elapsed_c {
            None => 0.0,
            Some(c) => {
                let raw = field(c);
                if raw.is_empty() || raw.eq_ignore_ascii_case("nan") {
                    0.0
                } else {
                    let v: f64 = raw.parse().map_err(|_| {
                        Error::row(path, line, format!("non-numeric elapsed_time `{raw}`"))
                    })?;
                    if v < 0.0 {
                        return Err(Error::row(
                            path,
                            line,
                            format!("negative elapsed_time {v}"),
                        ));
                    }
                    v
                }
            }
        };

        sequences.entry(learner).or_default().push(Interaction {
            question,
            correct,
            timestamp,
            elapsed,
        });
    }

    for seq in sequences.values_mut() {
        seq.sort_by_key(|i| i.timestamp); // stable: equal timestamps keep file order
    }

    Ok(InteractionDataset {
        sequences,
        question_labels,
        skill_count: 0,
        has_elapsed: elapsed_c.is_some(),
    })
}

/// Drop interactions on questions that are absent from `q` (or whose skill
/// row is empty), re-index the survivors into `q`'s question space, then drop
/// learners left with fewer than `min_interactions` interactions.
pub fn filter_dataset(
    ds: &InteractionDataset,
    q: &QMatrix,
    min_interactions: usize,
) -> InteractionDataset {
    // Dataset-local question index -> q-matrix index (None = dropped).
    let remap: Vec<Option<u32>> = ds
        .question_labels
        .iter()
        .map(|label| {
            q.question_index(label)
                .filter(|&qi| !q.skills_of(qi).is_empty())
                .map(|qi| qi as u32)
        })
        .collect();

    let mut sequences = BTreeMap::new();
    for (learner, seq) in &ds.sequences {
        let kept: Vec<Interaction> = seq
            .iter()
            .filter_map(|it| {
                remap[it.question as usize].map(|qi| Interaction {
                    question: qi,
                    ..*it
                })
            })
            .collect();
        if kept.len() >= min_interactions {
            sequences.insert(learner.clone(), kept);
        }
    }

    InteractionDataset {
        sequences,
        question_labels: q.question_ids().to_vec(),
        skill_count: q.n_skills(),
        has_elapsed: ds.has_elapsed,
    }
}

/// Split at learner granularity. `round(test_fraction * n)` learners go to
/// the test set (half-away-from-zero rounding, clamped so that neither side
/// is empty); the partition is a seeded shuffle of the sorted learner list,
/// so a fixed seed always yields the same split.
pub fn split_sequences(
    ds: &InteractionDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(InteractionDataset, InteractionDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = ds.sequences.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 learners to split, have {n}"
        )));
    }

    let mut learners: Vec<&String> = ds.sequences.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    learners.shuffle(&mut rng);

    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let test_ids: HashSet<&String> = learners[..n_test].iter().copied().collect();

    let mut train = InteractionDataset {
        sequences: BTreeMap::new(),
        question_labels: ds.question_labels.clone(),
        skill_count: ds.skill_count,
        has_elapsed: ds.has_elapsed,
    };
    let mut test = train.clone();
    for (learner, seq) in &ds.sequences {
        let target = if test_ids.contains(learner) {
            &mut test
        } else {
            &mut train
        };
        target.sequences.insert(learner.clone(), seq.clone());
    }
    Ok((train, test))
}

/// Q-matrix loader. Accepts either a pair list (`question_id, skill_id`
/// header) or a dense 0/1 matrix whose header is `question_id` followed by
/// one column per skill label. Pairs with a NaN/empty skill label are
/// dropped; questions left with no valid skill are dropped with a warning.
pub fn load_qmatrix(path: &Path) -> Result<QMatrix> {
    load_qmatrix_with_skills(path, None)
}

/// Like [`load_qmatrix`] but lays skills out in `known_skills` order,
/// appending (and warning about) any label not in the list.
pub fn load_qmatrix_with_skills(
    path: &Path,
    known_skills: Option<&[String]>,
) -> Result<QMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();

    // Pair lists carry the documented two-column header; anything else is
    // read as a dense matrix (question id column + one column per skill).
    let is_pair_list = headers.len() == 2 && headers.get(1) == Some("skill_id");
    if is_pair_list {
        let mut pairs = Vec::new();
        let mut dropped: HashSet<String> = HashSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::format(path, e.to_string()))?;
            let q = record.get(0).unwrap_or("").to_string();
            let s = record.get(1).unwrap_or("").to_string();
            if skill_label_is_nan(&s) {
                dropped.insert(q);
                continue;
            }
            pairs.push((q, s));
        }
        let with_valid: HashSet<&String> = pairs.iter().map(|(q, _)| q).collect();
        for q in &dropped {
            if !with_valid.contains(q) {
                log::warn!("{}: question `{q}` has only NaN skills, dropped", path.display());
            }
        }
        if pairs.is_empty() {
            return Err(Error::format(path, "q-matrix pair list has no valid rows"));
        }
        Ok(QMatrix::from_pairs(&pairs, known_skills))
    } else {
        // Dense: first column is the question id, the rest are skill labels.
        let skill_ids: Vec<String> = headers.iter().skip(1).map(String::from).collect();
        if skill_ids.is_empty() {
            return Err(Error::format(path, "dense q-matrix needs at least one skill column"));
        }
        let mut question_ids = Vec::new();
        let mut entries: Vec<u8> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::format(path, e.to_string()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let mut row = vec![0u8; skill_ids.len()];
            for (i, cell) in record.iter().skip(1).enumerate() {
                row[i] = match cell {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(Error::row(
                            path,
                            line,
                            format!("q-matrix entry must be 0 or 1, got `{other}`"),
                        ))
                    }
                };
            }
            if row.iter().all(|&e| e == 0) {
                log::warn!(
                    "{}: question `{}` has an all-zero skill row, dropped",
                    path.display(),
                    record.get(0).unwrap_or("")
                );
                continue;
            }
            question_ids.push(record.get(0).unwrap_or("").to_string());
            entries.extend_from_slice(&row);
        }
        QMatrix::from_dense(entries, question_ids, skill_ids)
    }
}

/// Write a dataset back out in the reference log schema.
pub fn save_interactions(ds: &InteractionDataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    let write = |out: &mut dyn Write, s: String| -> Result<()> {
        out.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
    };
    write(&mut out, "learner_id,question_id,correct,timestamp,elapsed_time\n".into())?;
    for (learner, seq) in &ds.sequences {
        for it in seq {
            write(
                &mut out,
                format!(
                    "{},{},{},{},{}\n",
                    learner,
                    ds.question_labels[it.question as usize],
                    it.correct as u8,
                    it.timestamp,
                    it.elapsed
                ),
            )?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Write a Q-matrix as a `question_id, skill_id` pair list.
pub fn save_qmatrix(q: &QMatrix, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    out.write_all(b"question_id,skill_id\n")
        .map_err(|e| Error::io(path, e))?;
    for (qi, qlabel) in q.question_ids().iter().enumerate() {
        for &si in q.skills_of(qi) {
            out.write_all(
                format!("{},{}\n", qlabel, q.skill_ids()[si as usize]).as_bytes(),
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn toy_qmatrix() -> QMatrix {
        QMatrix::from_pairs(
            &[
                ("q1".into(), "s1".into()),
                ("q2".into(), "s1".into()),
                ("q2".into(), "s2".into()),
            ],
            None,
        )
    }

    #[test]
    fn load_groups_and_sorts_by_timestamp() {
        let f = write_tmp(
            "learner_id,question_id,correct,timestamp,elapsed_time\n\
             a,q1,1,30,5.0\n\
             b,q2,0,10,2.0\n\
             a,q2,0,10,1.0\n",
        );
        let ds = load_interactions(f.path(), &LogFormat::default()).unwrap();
        assert_eq!(ds.learner_count(), 2);
        assert_eq!(ds.question_count(), 2);
        let a = &ds.sequences["a"];
        assert_eq!(a[0].timestamp, 10);
        assert_eq!(a[1].timestamp, 30);
    }

    #[test]
    fn equal_timestamps_keep_file_order() {
        let f = write_tmp(
            "learner_id,question_id,correct,timestamp,elapsed_time\n\
             a,q1,1,10,5.0\n\
             a,q2,0,10,2.0\n",
        );
        let ds = load_interactions(f.path(), &LogFormat::default()).unwrap();
        let a = &ds.sequences["a"];
        assert_eq!(ds.question_labels[a[0].question as usize], "q1");
        assert_eq!(ds.question_labels[a[1].question as usize], "q2");
    }

    #[test]
    fn empty_file_loads_zero_learners() {
        let f = write_tmp("");
        let ds = load_interactions(f.path(), &LogFormat::default()).unwrap();
        assert_eq!(ds.learner_count(), 0);
    }

    #[test]
    fn missing_column_is_format_error() {
        let f = write_tmp("learner_id,question_id,correct,timestamp\na,q1,1,5\n");
        // elapsed_time missing is tolerated (flagged)...
        let ds = load_interactions(f.path(), &LogFormat::default()).unwrap();
        assert!(!ds.has_elapsed);
        // ...but a required column is not.
        let f = write_tmp("learner_id,question_id,correct\na,q1,1\n");
        match load_interactions(f.path(), &LogFormat::default()) {
            Err(Error::Format { message, .. }) => assert!(message.contains("timestamp")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_timestamp_reports_line() {
        let f = write_tmp(
            "learner_id,question_id,correct,timestamp,elapsed_time\n\
             a,q1,1,10,1.0\n\
             a,q2,1,oops,1.0\n",
        );
        match load_interactions(f.path(), &LogFormat::default()) {
            Err(Error::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn millisecond_timestamps_floor_to_seconds() {
        let f = write_tmp(
            "learner_id,question_id,correct,timestamp,elapsed_time\n\
             a,q1,1,1999,1.0\n",
        );
        let fmt = LogFormat {
            timestamp_in_millis: true,
            ..Default::default()
        };
        let ds = load_interactions(f.path(), &fmt).unwrap();
        assert_eq!(ds.sequences["a"][0].timestamp, 1);
    }

    fn mk_ds(rows: &[(&str, &str, bool, i64)]) -> InteractionDataset {
        let mut labels: Vec<String> = Vec::new();
        let mut sequences: BTreeMap<String, Vec<Interaction>> = BTreeMap::new();
        for &(learner, q, correct, ts) in rows {
            let qi = match labels.iter().position(|l| l == q) {
                Some(i) => i,
                None => {
                    labels.push(q.to_string());
                    labels.len() - 1
                }
            };
            sequences.entry(learner.to_string()).or_default().push(Interaction {
                question: qi as u32,
                correct,
                timestamp: ts,
                elapsed: 1.0,
            });
        }
        for seq in sequences.values_mut() {
            seq.sort_by_key(|i| i.timestamp);
        }
        InteractionDataset {
            sequences,
            question_labels: labels,
            skill_count: 0,
            has_elapsed: true,
        }
    }

    #[test]
    fn filter_threshold_is_inclusive_at_min() {
        let q = toy_qmatrix();
        let mut rows = Vec::new();
        for t in 0..9 {
            rows.push(("nine", "q1", true, t));
        }
        for t in 0..10 {
            rows.push(("ten", "q1", true, t));
        }
        let ds = mk_ds(&rows);
        let filtered = filter_dataset(&ds, &q, 10);
        assert!(!filtered.sequences.contains_key("nine"));
        assert!(filtered.sequences.contains_key("ten"));
    }

    #[test]
    fn filter_drops_unknown_questions_then_rechecks_learner() {
        let q = toy_qmatrix();
        // 3-row toy log: learner has min_interactions=2 only while the
        // unknown-question row still counts.
        let ds = mk_ds(&[("a", "q1", true, 0), ("a", "qX", true, 1), ("a", "q2", false, 2)]);
        let filtered = filter_dataset(&ds, &q, 3);
        assert!(!filtered.sequences.contains_key("a"));
        let filtered = filter_dataset(&ds, &q, 2);
        assert_eq!(filtered.sequences["a"].len(), 2);
        // indices are re-mapped into the q-matrix space
        assert_eq!(filtered.question_labels, q.question_ids());
        assert_eq!(filtered.skill_count, 2);
    }

    #[test]
    fn filter_is_idempotent() {
        let q = toy_qmatrix();
        let ds = mk_ds(&[
            ("a", "q1", true, 0),
            ("a", "q2", true, 1),
            ("a", "qX", false, 2),
            ("b", "q1", false, 0),
        ]);
        let once = filter_dataset(&ds, &q, 2);
        let twice = filter_dataset(&once, &q, 2);
        assert_eq!(once.sequences, twice.sequences);
        assert_eq!(once.question_labels, twice.question_labels);
    }

    #[test]
    fn qmatrix_from_pairs_matches_example() {
        let q = toy_qmatrix();
        assert_eq!(q.n_questions(), 2);
        assert_eq!(q.n_skills(), 2);
        assert!(q.get(0, 0) && !q.get(0, 1));
        assert!(q.get(1, 0) && q.get(1, 1));
    }

    #[test]
    fn qmatrix_duplicate_pairs_collapse() {
        let a = QMatrix::from_pairs(
            &[("q1".into(), "s1".into()), ("q1".into(), "s1".into())],
            None,
        );
        let b = QMatrix::from_pairs(&[("q1".into(), "s1".into())], None);
        assert_eq!(a.entries, b.entries);
    }

    #[test]
    fn qmatrix_unknown_skill_appends_one_column() {
        let known = vec!["s1".to_string(), "s2".to_string()];
        let q = QMatrix::from_pairs(
            &[("q1".into(), "s1".into()), ("q2".into(), "s9".into())],
            Some(&known),
        );
        assert_eq!(q.n_skills(), 3);
        assert_eq!(q.skill_ids()[2], "s9");
    }

    #[test]
    fn load_qmatrix_pair_list_and_dense_agree() {
        let pairs = write_tmp("question_id,skill_id\nq1,s1\nq2,s1\nq2,s2\n");
        let dense = write_tmp("question_id,s1,s2\nq1,1,0\nq2,1,1\n");
        let a = load_qmatrix(pairs.path()).unwrap();
        let b = load_qmatrix(dense.path()).unwrap();
        assert_eq!(a.entries, b.entries);
        assert_eq!(a.question_ids(), b.question_ids());
    }

    #[test]
    fn load_qmatrix_rejects_non_binary_dense_entry() {
        let dense = write_tmp("question_id,s1\nq1,2\n");
        assert!(matches!(load_qmatrix(dense.path()), Err(Error::Row { .. })));
    }

    #[test]
    fn load_qmatrix_drops_nan_skills() {
        let pairs = write_tmp("question_id,skill_id\nq1,s1\nq2,NaN\nq3,s2\n");
        let q = load_qmatrix(pairs.path()).unwrap();
        assert_eq!(q.n_questions(), 2);
        assert!(q.question_index("q2").is_none());
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let mut rows = Vec::new();
        let names = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        for n in names {
            rows.push((n, "q1", true, 0));
        }
        let q = toy_qmatrix();
        let ds = filter_dataset(&mk_ds(&rows), &q, 1);
        let (tr1, te1) = split_sequences(&ds, 0.2, 42).unwrap();
        let (tr2, te2) = split_sequences(&ds, 0.2, 42).unwrap();
        assert_eq!(tr1.learner_ids(), tr2.learner_ids());
        assert_eq!(te1.learner_ids(), te2.learner_ids());
        assert_eq!(te1.learner_count(), 2);
        assert_eq!(tr1.learner_count(), 8);
        // disjoint union
        let mut all: Vec<&str> = tr1.learner_ids();
        all.extend(te1.learner_ids());
        all.sort_unstable();
        assert_eq!(all, ds.learner_ids());
    }

    #[test]
    fn split_five_learners_documented_rounding() {
        let rows: Vec<(&str, &str, bool, i64)> = ["a", "b", "c", "d", "e"]
            .iter()
            .map(|n| (*n, "q1", true, 0))
            .collect();
        let q = toy_qmatrix();
        let ds = filter_dataset(&mk_ds(&rows), &q, 1);
        // round(0.5 * 5) = 3 test learners (half away from zero)
        let (tr, te) = split_sequences(&ds, 0.5, 1).unwrap();
        assert_eq!((tr.learner_count(), te.learner_count()), (2, 3));
        let (_, te2) = split_sequences(&ds, 0.5, 2).unwrap();
        // different seeds generally pick different partitions
        assert_eq!(te2.learner_count(), 3);
    }

    #[test]
    fn split_rejects_tiny_inputs() {
        let ds = mk_ds(&[("a", "q1", true, 0)]);
        assert!(split_sequences(&ds, 0.2, 0).is_err());
    }

    #[test]
    fn roundtrip_save_load() {
        let q = toy_qmatrix();
        let ds = filter_dataset(
            &mk_ds(&[("a", "q1", true, 0), ("a", "q2", false, 5), ("b", "q2", true, 3)]),
            &q,
            1,
        );
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.csv");
        let qm = dir.path().join("qm.csv");
        save_interactions(&ds, &log).unwrap();
        save_qmatrix(&q, &qm).unwrap();
        let ds2 = load_interactions(&log, &LogFormat::default()).unwrap();
        let q2 = load_qmatrix(&qm).unwrap();
        let ds2 = filter_dataset(&ds2, &q2, 1);
        assert_eq!(ds.sequences, ds2.sequences);
        assert_eq!(q.entries, q2.entries);
    }
}
