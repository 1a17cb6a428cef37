//! Skill prerequisite graph (KG) inference from response data.
//!
//! Eight methods are available: the skill-transition ratio plus seven
//! association indices computed from per-pair contingency tables. The raw
//! relation scores are directionalized (per unordered pair only the stronger
//! direction survives) and thresholded into the binary skill relation matrix
//! with a unit diagonal.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::dataio::{InteractionDataset, QMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default minimum contingency-table mass for a pair to be scored at all.
pub const DEFAULT_MIN_SUPPORT: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KgMethod {
    SkillTransition,
    Kappa,
    /// Adjusted Kappa, per the printed formula 2(ad-bc)/((a+c)(c+d)).
    /// Unlike the others it is not bounded in [-1, 1]; a perfect-agreement
    /// table evaluates to 2. Applied literally, not "fixed".
    KappaAdj,
    Phi,
    Yule,
    Ochiai,
    Sokal,
    Jaccard,
}

impl KgMethod {
    pub const ALL: [KgMethod; 8] = [
        KgMethod::SkillTransition,
        KgMethod::Kappa,
        KgMethod::KappaAdj,
        KgMethod::Phi,
        KgMethod::Yule,
        KgMethod::Ochiai,
        KgMethod::Sokal,
        KgMethod::Jaccard,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            KgMethod::SkillTransition => "sk",
            KgMethod::Kappa => "kappa",
            KgMethod::KappaAdj => "kappa_adj",
            KgMethod::Phi => "phi",
            KgMethod::Yule => "yule",
            KgMethod::Ochiai => "ochiai",
            KgMethod::Sokal => "sokal",
            KgMethod::Jaccard => "jaccard",
        }
    }

    pub fn parse(s: &str) -> Result<KgMethod> {
        KgMethod::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown KG method `{s}` (expected one of sk, kappa, kappa_adj, phi, yule, ochiai, sokal, jaccard)"
                ))
            })
    }
}

impl fmt::Display for KgMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 2x2 joint mastery counts for an ordered skill pair (s_i before s_j):
/// `a` = both mastered, `b` = s_i only, `c` = s_j only, `d` = neither.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    fn add(&mut self, i_mastered: bool, j_mastered: bool) {
        match (i_mastered, j_mastered) {
            (true, true) => self.a += 1,
            (true, false) => self.b += 1,
            (false, true) => self.c += 1,
            (false, false) => self.d += 1,
        }
    }
}

/// Evaluate one association index on a contingency table. Zero denominators
/// yield 0 (no relation evidence); an all-zero table is a domain error.
pub fn coefficient(t: &ContingencyTable, method: KgMethod) -> Result<f64> {
    if t.total() == 0 {
        return Err(Error::EmptyTable);
    }
    let (a, b, c, d) = (t.a as f64, t.b as f64, t.c as f64, t.d as f64);
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    let value = match method {
        KgMethod::SkillTransition => {
            return Err(Error::InvalidArgument(
                "skill transition is not a contingency-table index".into(),
            ))
        }
        KgMethod::Kappa => ratio(
            2.0 * (a * d - b * c),
            (a + b) * (b + d) + (a + c) * (c + d),
        ),
        KgMethod::KappaAdj => ratio(2.0 * (a * d - b * c), (a + c) * (c + d)),
        KgMethod::Phi => ratio(
            a * d - b * c,
            ((a + b) * (b + d) * (a + c) * (c + d)).sqrt(),
        ),
        KgMethod::Yule => ratio(a * d - b * c, a * d + b * c),
        KgMethod::Ochiai => ratio(a, ((a + b) * (a + c)).sqrt()),
        KgMethod::Sokal => (a + d) / (a + b + c + d),
        KgMethod::Jaccard => ratio(a, a + b + c),
    };
    Ok(value)
}

/// Contingency tables for every ordered skill pair (i, j), i != j, stored
/// densely. Pairs no learner contributed to stay all-zero.
#[derive(Debug, Clone)]
pub struct ContingencyTables {
    n: usize,
    tables: Vec<ContingencyTable>,
}

impl ContingencyTables {
    pub fn new(n_skills: usize) -> Self {
        ContingencyTables {
            n: n_skills,
            tables: vec![ContingencyTable::default(); n_skills * n_skills],
        }
    }

    pub fn n_skills(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &ContingencyTable {
        &self.tables[i * self.n + j]
    }

    fn get_mut(&mut self, i: usize, j: usize) -> &mut ContingencyTable {
        &mut self.tables[i * self.n + j]
    }
}

/// Skill relation matrix: real-valued scores before binarization, a 0/1
/// prerequisite matrix with unit diagonal after.
#[derive(Debug, Clone)]
pub struct SkillRelationMatrix {
    pub values: Matrix,
    /// None for planted ground truth or matrices loaded from a pair list.
    pub method: Option<KgMethod>,
    pub threshold: Option<f64>,
    binary: bool,
}

impl SkillRelationMatrix {
    pub fn new_scores(values: Matrix, method: KgMethod) -> Self {
        assert!(values.is_square());
        SkillRelationMatrix {
            values,
            method: Some(method),
            threshold: None,
            binary: false,
        }
    }

    /// Wrap an existing 0/1 matrix (diagonal forced to 1).
    pub fn new_binary(mut values: Matrix, method: Option<KgMethod>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::DimensionMismatch("relation matrix must be square".into()));
        }
        for i in 0..values.rows() {
            for j in 0..values.cols() {
                let v = values.get(i, j);
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "binary relation matrix entry ({i},{j}) = {v}"
                    )));
                }
            }
            values.set(i, i, 1.0);
        }
        Ok(SkillRelationMatrix {
            values,
            method,
            threshold: None,
            binary: true,
        })
    }

    pub fn n_skills(&self) -> usize {
        self.values.rows()
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    /// Directed off-diagonal edges (i -> j) of a binarized matrix.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_skills();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.values.get(i, j) == 1.0 {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges().len()
    }
}

/// Row-normalized counts of skill j being trained immediately after skill i.
/// Adjacent interaction pairs within each learner sequence contribute one
/// count per (skill of earlier, skill of later) cross-product pair.
pub fn skill_transition_matrix(ds: &InteractionDataset, q: &QMatrix) -> SkillRelationMatrix {
    let n = q.n_skills();
    let mut counts = vec![0u64; n * n];
    for seq in ds.sequences.values() {
        for w in seq.windows(2) {
            for &si in q.skills_of(w[0].question as usize) {
                for &sj in q.skills_of(w[1].question as usize) {
                    counts[si as usize * n + sj as usize] += 1;
                }
            }
        }
    }
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        let row_sum: u64 = counts[i * n..(i + 1) * n].iter().sum();
        if row_sum > 0 {
            for j in 0..n {
                values.set(i, j, counts[i * n + j] as f64 / row_sum as f64);
            }
        }
    }
    SkillRelationMatrix::new_scores(values, KgMethod::SkillTransition)
}

/// Accumulate one contingency vote per learner per ordered skill pair.
///
/// For a pair (i, j) the learner's vote comes from the latest occurrence:
/// among all interaction index pairs (p, q) with p < q, question(p)
/// requiring s_i and question(q) requiring s_j, the pair maximizing p and
/// then q is selected; correctness at p stands in for mastery of s_i and
/// correctness at q for mastery of s_j. Since the selected q is necessarily
/// the last occurrence of s_j, p is the last occurrence of s_i before it.
pub fn build_contingency_tables(ds: &InteractionDataset, q: &QMatrix) -> ContingencyTables {
    let n = q.n_skills();
    let mut tables = ContingencyTables::new(n);
    let mut occurrences: Vec<Vec<u32>> = vec![Vec::new(); n];

    for seq in ds.sequences.values() {
        for occ in occurrences.iter_mut() {
            occ.clear();
        }
        for (pos, it) in seq.iter().enumerate() {
            for &s in q.skills_of(it.question as usize) {
                occurrences[s as usize].push(pos as u32);
            }
        }
        let seen: Vec<usize> = (0..n).filter(|&s| !occurrences[s].is_empty()).collect();
        for &i in &seen {
            for &j in &seen {
                if i == j {
                    continue;
                }
                let last_j = *occurrences[j].last().unwrap();
                // last occurrence of s_i strictly before last_j
                let p = match occurrences[i].partition_point(|&x| x < last_j) {
                    0 => continue,
                    k => occurrences[i][k - 1],
                };
                tables.get_mut(i, j).add(
                    seq[p as usize].correct,
                    seq[last_j as usize].correct,
                );
            }
        }
    }
    tables
}

/// Score every ordered pair with `method`, zeroing pairs whose table mass is
/// below `min_support`.
pub fn score_contingency(
    tables: &ContingencyTables,
    method: KgMethod,
    min_support: u64,
) -> Result<SkillRelationMatrix> {
    let n = tables.n_skills();
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let t = tables.get(i, j);
            if t.total() == 0 || t.total() < min_support {
                continue;
            }
            values.set(i, j, coefficient(t, method)?);
        }
    }
    Ok(SkillRelationMatrix::new_scores(values, method))
}

/// Keep, for each unordered pair {i, j}, only the larger of the two directed
/// scores (in its original position); exact ties keep the (i, j) direction
/// with i < j. Idempotent.
pub fn directionalize(r: &SkillRelationMatrix) -> SkillRelationMatrix {
    let n = r.n_skills();
    let mut values = r.values.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let fwd = values.get(i, j);
            let bwd = values.get(j, i);
            if fwd >= bwd {
                values.set(j, i, 0.0);
            } else {
                values.set(i, j, 0.0);
            }
        }
    }
    SkillRelationMatrix {
        values,
        method: r.method,
        threshold: r.threshold,
        binary: false,
    }
}

/// Entries >= threshold become 1, the rest 0, then the diagonal is forced
/// to 1.
pub fn binarize_threshold(r: &SkillRelationMatrix, threshold: f64) -> SkillRelationMatrix {
    let n = r.n_skills();
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if r.values.get(i, j) >= threshold {
                values.set(i, j, 1.0);
            }
        }
        values.set(i, i, 1.0);
    }
    SkillRelationMatrix {
        values,
        method: r.method,
        threshold: Some(threshold),
        binary: true,
    }
}

/// Raw (pre-directionalization) relation scores for `method`.
pub fn relation_scores(
    ds: &InteractionDataset,
    q: &QMatrix,
    method: KgMethod,
    min_support: u64,
) -> Result<SkillRelationMatrix> {
    match method {
        KgMethod::SkillTransition => Ok(skill_transition_matrix(ds, q)),
        _ => score_contingency(&build_contingency_tables(ds, q), method, min_support),
    }
}

/// Full inference pipeline: score, directionalize, binarize.
pub fn infer_kg(
    ds: &InteractionDataset,
    q: &QMatrix,
    method: KgMethod,
    threshold: f64,
    min_support: u64,
) -> Result<SkillRelationMatrix> {
    let scores = relation_scores(ds, q, method, min_support)?;
    Ok(binarize_threshold(&directionalize(&scores), threshold))
}

/// Write a binarized KG as a DOT digraph; diagonal self-loops are omitted.
pub fn export_dot(r: &SkillRelationMatrix, skill_ids: &[String], path: &Path) -> Result<()> {
    if !r.is_binary() {
        return Err(Error::InvalidState("export_dot needs a binarized matrix".into()));
    }
    if skill_ids.len() != r.n_skills() {
        return Err(Error::DimensionMismatch(format!(
            "{} skill labels for a {}-skill matrix",
            skill_ids.len(),
            r.n_skills()
        )));
    }
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut w = |s: String| -> Result<()> {
        out.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
    };
    w("digraph kg {\n".into())?;
    for id in skill_ids {
        w(format!("  \"{id}\";\n"))?;
    }
    for (i, j) in r.edges() {
        w(format!("  \"{}\" -> \"{}\";\n", skill_ids[i], skill_ids[j]))?;
    }
    w("}\n".into())?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Write a binarized KG as a `src_skill, dst_skill` pair list (self-loops
/// omitted).
pub fn save_kg_pairs(r: &SkillRelationMatrix, skill_ids: &[String], path: &Path) -> Result<()> {
    if !r.is_binary() {
        return Err(Error::InvalidState("save_kg_pairs needs a binarized matrix".into()));
    }
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    out.write_all(b"src_skill,dst_skill\n")
        .map_err(|e| Error::io(path, e))?;
    for (i, j) in r.edges() {
        out.write_all(format!("{},{}\n", skill_ids[i], skill_ids[j]).as_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read a `src_skill, dst_skill` pair list back into a binary matrix over
/// the given skill ordering.
pub fn load_kg_pairs(path: &Path, skill_ids: &[String]) -> Result<SkillRelationMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let index = |label: &str| -> Result<usize> {
        skill_ids
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| Error::format(path, format!("unknown skill label `{label}`")))
    };
    let n = skill_ids.len();
    let mut values = Matrix::zeros(n, n);
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let i = index(record.get(0).unwrap_or(""))?;
        let j = index(record.get(1).unwrap_or(""))?;
        values.set(i, j, 1.0);
    }
    SkillRelationMatrix::new_binary(values, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{filter_dataset, Interaction, InteractionDataset};
    use std::collections::BTreeMap;

    fn table(a: u64, b: u64, c: u64, d: u64) -> ContingencyTable {
        ContingencyTable { a, b, c, d }
    }

    /// Single-learner dataset over single-skill questions: question k
    /// requires skill k.
    fn ds_from_skill_seq(n_skills: usize, seq: &[(usize, bool)]) -> (InteractionDataset, QMatrix) {
        let pairs: Vec<(String, String)> = (0..n_skills)
            .map(|k| (format!("q{k}"), format!("s{k}")))
            .collect();
        let q = QMatrix::from_pairs(&pairs, None);
        let mut sequences = BTreeMap::new();
        sequences.insert(
            "l".to_string(),
            seq.iter()
                .enumerate()
                .map(|(t, &(skill, correct))| Interaction {
                    question: skill as u32,
                    correct,
                    timestamp: t as i64,
                    elapsed: 1.0,
                })
                .collect(),
        );
        let ds = InteractionDataset {
            sequences,
            question_labels: q.question_ids().to_vec(),
            skill_count: n_skills,
            has_elapsed: true,
        };
        (ds, q)
    }

    #[test]
    fn transition_counts_adjacent_pairs() {
        let (ds, q) = ds_from_skill_seq(2, &[(0, true), (1, true), (0, true), (1, true)]);
        let m = skill_transition_matrix(&ds, &q);
        assert_eq!(m.values.get(0, 1), 1.0);
        assert_eq!(m.values.get(1, 0), 1.0);
        assert_eq!(m.values.get(0, 0), 0.0);
    }

    #[test]
    fn transition_single_interaction_is_all_zero() {
        let (ds, q) = ds_from_skill_seq(2, &[(0, true)]);
        let m = skill_transition_matrix(&ds, &q);
        assert!(m.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transition_ratio_invariant_under_learner_duplication() {
        let (mut ds, q) = ds_from_skill_seq(3, &[(0, true), (1, true), (2, true), (1, true)]);
        let single = skill_transition_matrix(&ds, &q);
        let seq = ds.sequences["l"].clone();
        ds.sequences.insert("l2".to_string(), seq);
        let doubled = skill_transition_matrix(&ds, &q);
        assert_eq!(single.values, doubled.values);
    }

    #[test]
    fn contingency_basic_cell_a() {
        let (ds, q) = ds_from_skill_seq(2, &[(0, true), (1, true)]);
        let t = build_contingency_tables(&ds, &q);
        assert_eq!(*t.get(0, 1), table(1, 0, 0, 0));
        // s2 never precedes s1
        assert_eq!(t.get(1, 0).total(), 0);
    }

    #[test]
    fn contingency_latest_occurrence_wins() {
        // s1 wrong, s1 right, s2 wrong: latest s1 occurrence before the last
        // s2 is the correct one -> cell b.
        let (ds, q) = ds_from_skill_seq(2, &[(0, false), (0, true), (1, false)]);
        let t = build_contingency_tables(&ds, &q);
        assert_eq!(*t.get(0, 1), table(0, 1, 0, 0));
    }

    #[test]
    fn contingency_vacuous_without_second_skill() {
        let (ds, q) = ds_from_skill_seq(2, &[(0, true), (0, false)]);
        let t = build_contingency_tables(&ds, &q);
        assert_eq!(t.get(0, 1).total(), 0);
        assert_eq!(t.get(1, 0).total(), 0);
    }

    #[test]
    fn coefficient_hand_values() {
        assert_eq!(coefficient(&table(5, 0, 0, 5), KgMethod::Phi).unwrap(), 1.0);
        assert!(
            (coefficient(&table(40, 10, 10, 40), KgMethod::Kappa).unwrap() - 0.6).abs() < 1e-12
        );
        assert_eq!(coefficient(&table(3, 0, 0, 0), KgMethod::Jaccard).unwrap(), 1.0);
        assert_eq!(coefficient(&table(3, 0, 0, 0), KgMethod::Yule).unwrap(), 0.0);
        assert!(
            (coefficient(&table(2, 1, 1, 2), KgMethod::Sokal).unwrap() - 4.0 / 6.0).abs() < 1e-12
        );
    }

    #[test]
    fn coefficient_all_zero_table_is_domain_error() {
        assert!(matches!(
            coefficient(&table(0, 0, 0, 0), KgMethod::Phi),
            Err(Error::EmptyTable)
        ));
    }

    #[test]
    fn kappa_adj_perfect_agreement_is_two() {
        for a in [1u64, 4, 100] {
            let v = coefficient(&table(a, 0, 0, a), KgMethod::KappaAdj).unwrap();
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn directionalize_keeps_larger_and_breaks_ties_low_index() {
        let mut values = Matrix::zeros(2, 2);
        values.set(0, 1, 0.8);
        values.set(1, 0, 0.3);
        let r = SkillRelationMatrix::new_scores(values, KgMethod::Phi);
        let d = directionalize(&r);
        assert_eq!(d.values.get(0, 1), 0.8);
        assert_eq!(d.values.get(1, 0), 0.0);

        let mut values = Matrix::zeros(2, 2);
        values.set(0, 1, 0.5);
        values.set(1, 0, 0.5);
        let r = SkillRelationMatrix::new_scores(values, KgMethod::Phi);
        let d = directionalize(&r);
        assert_eq!(d.values.get(0, 1), 0.5);
        assert_eq!(d.values.get(1, 0), 0.0);
    }

    #[test]
    fn directionalize_is_idempotent() {
        let mut values = Matrix::zeros(3, 3);
        values.set(0, 1, 0.7);
        values.set(2, 1, 0.2);
        values.set(1, 2, 0.1);
        let r = SkillRelationMatrix::new_scores(values, KgMethod::Kappa);
        let once = directionalize(&r);
        let twice = directionalize(&once);
        assert_eq!(once.values, twice.values);
    }

    #[test]
    fn binarize_inclusive_threshold_and_diagonal() {
        let mut values = Matrix::zeros(2, 2);
        values.set(0, 1, 0.3);
        let r = SkillRelationMatrix::new_scores(values, KgMethod::Phi);
        let b = binarize_threshold(&r, 0.3);
        assert_eq!(b.values.get(0, 1), 1.0);
        assert_eq!(b.values.get(0, 0), 1.0);
        assert_eq!(b.values.get(1, 1), 1.0);
        // threshold above every off-diagonal entry -> identity
        let b = binarize_threshold(&r, 0.9);
        assert_eq!(b.n_edges(), 0);
        // binarize twice = binarize once (1 >= any threshold <= 1)
        let bb = binarize_threshold(&b, 0.3);
        assert_eq!(b.values, bb.values);
    }

    #[test]
    fn infer_kg_single_skill_is_identity() {
        let (ds, q) = ds_from_skill_seq(1, &[(0, true), (0, false)]);
        let ds = filter_dataset(&ds, &q, 1);
        let kg = infer_kg(&ds, &q, KgMethod::Kappa, 0.3, 1).unwrap();
        assert_eq!(kg.n_skills(), 1);
        assert_eq!(kg.values.get(0, 0), 1.0);
        assert_eq!(kg.n_edges(), 0);
    }

    #[test]
    fn infer_kg_deterministic() {
        let (ds, q) = ds_from_skill_seq(
            3,
            &[(0, true), (1, false), (2, true), (0, true), (1, true)],
        );
        let a = infer_kg(&ds, &q, KgMethod::Ochiai, 0.2, 1).unwrap();
        let b = infer_kg(&ds, &q, KgMethod::Ochiai, 0.2, 1).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn no_two_cycles_after_binarization() {
        let (ds, q) = ds_from_skill_seq(
            3,
            &[(0, true), (1, true), (0, true), (2, true), (1, true), (2, false)],
        );
        let kg = infer_kg(&ds, &q, KgMethod::Jaccard, 0.1, 1).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert!(
                    kg.values.get(i, j) == 0.0 || kg.values.get(j, i) == 0.0,
                    "2-cycle between {i} and {j}"
                );
            }
        }
    }

    #[test]
    fn dot_export_roundtrip() {
        let mut values = Matrix::zeros(3, 3);
        values.set(0, 1, 1.0);
        let kg = SkillRelationMatrix::new_binary(values, None).unwrap();
        let ids: Vec<String> = (0..3).map(|i| format!("s{i}")).collect();
        let dir = tempfile::tempdir().unwrap();

        let dot = dir.path().join("kg.dot");
        export_dot(&kg, &ids, &dot).unwrap();
        let text = std::fs::read_to_string(&dot).unwrap();
        assert_eq!(text.matches("->").count(), 1);
        assert!(text.contains("\"s0\" -> \"s1\""));

        let pairs = dir.path().join("kg.csv");
        save_kg_pairs(&kg, &ids, &pairs).unwrap();
        let back = load_kg_pairs(&pairs, &ids).unwrap();
        assert_eq!(back.edges(), kg.edges());
    }

    #[test]
    fn identity_kg_exports_zero_edges() {
        let kg = SkillRelationMatrix::new_binary(Matrix::zeros(4, 4), None).unwrap();
        let ids: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
        let dir = tempfile::tempdir().unwrap();
        let dot = dir.path().join("kg.dot");
        export_dot(&kg, &ids, &dot).unwrap();
        let text = std::fs::read_to_string(&dot).unwrap();
        assert_eq!(text.matches("->").count(), 0);
        // all nodes still listed
        assert_eq!(text.matches(';').count(), 4);
    }
}
