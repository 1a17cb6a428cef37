//! Q-matrix refinement with the inferred prerequisite matrix, and the
//! bipartite question–skill graph built from the refined matrix.

use crate::dataio::QMatrix;
use crate::error::{Error, Result};
use crate::prereq::SkillRelationMatrix;

/// Bipartite view of a refined Q-matrix: one edge per nonzero entry.
/// Skill–skill prerequisite edges are deliberately not part of this graph;
/// walks only ever traverse question–skill edges, and the prerequisite
/// information is already folded into the refined matrix.
#[derive(Debug, Clone)]
pub struct HeteroGraph {
    pub n_questions: usize,
    pub n_skills: usize,
    /// question index -> sorted skill neighbors
    pub skills_of: Vec<Vec<u32>>,
    /// skill index -> sorted question neighbors
    pub questions_of: Vec<Vec<u32>>,
}

impl HeteroGraph {
    pub fn edge_count(&self) -> usize {
        self.skills_of.iter().map(Vec::len).sum()
    }
}

/// One refinement pass: entries of O (R^w)^T that are >= 1 become 1, so a
/// question additionally requires every skill that is prerequisite to one of
/// its skills. With R's unit diagonal the result always contains O.
pub fn refine_qmatrix(o: &QMatrix, r: &SkillRelationMatrix) -> Result<QMatrix> {
    if !r.is_binary() {
        return Err(Error::InvalidState(
            "refinement needs a binarized relation matrix".into(),
        ));
    }
    let ns = o.n_skills();
    if r.n_skills() != ns {
        return Err(Error::DimensionMismatch(format!(
            "q-matrix has {ns} skills but relation matrix has {}",
            r.n_skills()
        )));
    }
    for i in 0..ns {
        if r.values.get(i, i) != 1.0 {
            return Err(Error::InvalidState(format!(
                "relation matrix diagonal entry {i} is not 1"
            )));
        }
    }

    // prereq_sources[k] = every skill s with an edge s -> k (incl. k itself)
    let prereq_sources: Vec<Vec<usize>> = (0..ns)
        .map(|k| (0..ns).filter(|&s| r.values.get(s, k) == 1.0).collect())
        .collect();

    let nq = o.n_questions();
    let mut entries = vec![0u8; nq * ns];
    for qi in 0..nq {
        for &k in o.skills_of(qi) {
            for &s in &prereq_sources[k as usize] {
                entries[qi * ns + s] = 1;
            }
        }
    }
    QMatrix::from_dense(entries, o.question_ids().to_vec(), o.skill_ids().to_vec())
}

/// Apply [`refine_qmatrix`] `iterations` times (the standard procedure is a
/// single pass; more passes pull in grand-prerequisites).
pub fn refine_qmatrix_iterated(
    o: &QMatrix,
    r: &SkillRelationMatrix,
    iterations: usize,
) -> Result<QMatrix> {
    let mut out = o.clone();
    for _ in 0..iterations {
        out = refine_qmatrix(&out, r)?;
    }
    Ok(out)
}

/// Materialize the bipartite graph of a (refined) Q-matrix. Every question
/// must have at least one skill.
pub fn build_relation_graph(o_hat: &QMatrix) -> Result<HeteroGraph> {
    let nq = o_hat.n_questions();
    let ns = o_hat.n_skills();
    let mut skills_of = Vec::with_capacity(nq);
    let mut questions_of: Vec<Vec<u32>> = vec![Vec::new(); ns];
    for qi in 0..nq {
        let skills = o_hat.skills_of(qi).to_vec();
        if skills.is_empty() {
            return Err(Error::InvalidState(format!(
                "question `{}` has no skills",
                o_hat.question_ids()[qi]
            )));
        }
        for &s in &skills {
            questions_of[s as usize].push(qi as u32);
        }
        skills_of.push(skills);
    }
    Ok(HeteroGraph {
        n_questions: nq,
        n_skills: ns,
        skills_of,
        questions_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::QMatrix;
    use crate::matrix::Matrix;
    use crate::prereq::SkillRelationMatrix;

    fn qmatrix(rows: &[&[u8]]) -> QMatrix {
        let ns = rows[0].len();
        let entries: Vec<u8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        QMatrix::from_dense(
            entries,
            (0..rows.len()).map(|i| format!("q{i}")).collect(),
            (0..ns).map(|i| format!("s{i}")).collect(),
        )
        .unwrap()
    }

    fn relation(n: usize, edges: &[(usize, usize)]) -> SkillRelationMatrix {
        let mut values = Matrix::zeros(n, n);
        for &(i, j) in edges {
            values.set(i, j, 1.0);
        }
        SkillRelationMatrix::new_binary(values, None).unwrap()
    }

    #[test]
    fn refine_adds_prerequisite_skill() {
        // s0 -> s1: the question requiring s1 gains s0.
        let o = qmatrix(&[&[1, 0], &[0, 1]]);
        let r = relation(2, &[(0, 1)]);
        let o_hat = refine_qmatrix(&o, &r).unwrap();
        assert!(o_hat.get(0, 0) && !o_hat.get(0, 1));
        assert!(o_hat.get(1, 0) && o_hat.get(1, 1));
    }

    #[test]
    fn identity_relation_is_noop() {
        let o = qmatrix(&[&[1, 0, 1], &[0, 1, 0]]);
        let r = relation(3, &[]);
        let o_hat = refine_qmatrix(&o, &r).unwrap();
        for qi in 0..2 {
            for si in 0..3 {
                assert_eq!(o_hat.get(qi, si), o.get(qi, si));
            }
        }
    }

    #[test]
    fn chain_closure_pulls_in_all_ancestors() {
        // Full chain closure s0 -> s1, s0 -> s2, s1 -> s2 (upper triangular
        // all ones): every question gains all ancestors of its skills.
        let o = qmatrix(&[&[0, 0, 1], &[0, 1, 0], &[1, 0, 0]]);
        let r = relation(3, &[(0, 1), (0, 2), (1, 2)]);
        let o_hat = refine_qmatrix(&o, &r).unwrap();
        assert_eq!(o_hat.skills_of(0), &[0, 1, 2]);
        assert_eq!(o_hat.skills_of(1), &[0, 1]);
        assert_eq!(o_hat.skills_of(2), &[0]);
    }

    #[test]
    fn refinement_is_monotone_but_not_idempotent() {
        // one-step chain s0 -> s1 -> s2: a single pass on a {s2} question
        // adds s1; the second pass adds the grand-prerequisite s0.
        let o = qmatrix(&[&[0, 0, 1]]);
        let r = relation(3, &[(0, 1), (1, 2)]);
        let once = refine_qmatrix(&o, &r).unwrap();
        assert_eq!(once.skills_of(0), &[1, 2]);
        let twice = refine_qmatrix(&once, &r).unwrap();
        assert_eq!(twice.skills_of(0), &[0, 1, 2]);
        // refine(refine(O)) contains refine(O)
        for si in 0..3 {
            assert!(twice.get(0, si) >= once.get(0, si));
        }
        assert_eq!(
            refine_qmatrix_iterated(&o, &r, 2).unwrap().skills_of(0),
            twice.skills_of(0)
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let o = qmatrix(&[&[1, 0]]);
        let r = relation(3, &[]);
        assert!(refine_qmatrix(&o, &r).is_err());
    }

    #[test]
    fn graph_transcribes_nonzeros() {
        let o = qmatrix(&[&[1, 1]]);
        let g = build_relation_graph(&o).unwrap();
        assert_eq!(g.n_questions, 1);
        assert_eq!(g.n_skills, 2);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.skills_of[0], &[0, 1]);
        assert_eq!(g.questions_of[0], &[0]);
        assert_eq!(g.questions_of[1], &[0]);
    }

    #[test]
    fn graph_edge_count_equals_nnz() {
        let o = qmatrix(&[&[1, 0, 1], &[0, 1, 1]]);
        let g = build_relation_graph(&o).unwrap();
        assert_eq!(g.edge_count(), o.nnz());
    }
}
