//! Synthetic learner logs generated from a planted prerequisite DAG and a
//! true Q-matrix, so that prerequisite inference, refinement and end-to-end
//! training all have exact oracles.
//!
//! Responses follow the conjunctive (DINA-style) rule: a learner answers
//! correctly with probability 1 - slip when every skill the question
//! requires is mastered, and with probability guess otherwise. Mastery is
//! monotone and gated by the DAG: a skill can only become mastered once all
//! of its prerequisites are.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{Interaction, InteractionDataset, QMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::prereq::SkillRelationMatrix;
use crate::seeding::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DagKind {
    Chain,
    Tree,
    RandomDag,
}

impl DagKind {
    pub fn parse(s: &str) -> Result<DagKind> {
        match s {
            "chain" => Ok(DagKind::Chain),
            "tree" => Ok(DagKind::Tree),
            "random-dag" => Ok(DagKind::RandomDag),
            other => Err(Error::InvalidArgument(format!(
                "unknown dag kind `{other}` (expected chain, tree or random-dag)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_skills: usize,
    pub n_questions: usize,
    pub n_learners: usize,
    /// Inclusive (min, max) interactions per learner; min must stay >= 10 so
    /// generated learners survive the dataio filter.
    pub seq_len_range: (usize, usize),
    pub dag_kind: DagKind,
    pub slip: f64,
    pub guess: f64,
    /// Probability that practicing an unlocked skill masters it.
    pub learning_rate_per_practice: f64,
    /// Probability that an unlocked skill starts out mastered.
    pub init_mastery: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_skills: 8,
            n_questions: 100,
            n_learners: 500,
            seq_len_range: (50, 50),
            dag_kind: DagKind::Chain,
            slip: 0.1,
            guess: 0.2,
            learning_rate_per_practice: 0.2,
            init_mastery: 0.5,
            seed: 1,
        }
    }
}

/// Probability that a question requires a second skill.
const MULTI_SKILL_PROB: f64 = 0.1;
/// Probability that a step ignores the curriculum and samples any question.
const EXPLORE_PROB: f64 = 1.0;

fn planted_dag(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let n = cfg.n_skills;
    let mut edges = Vec::new();
    match cfg.dag_kind {
        DagKind::Chain => {
            for i in 1..n {
                edges.push((i - 1, i));
            }
        }
        DagKind::Tree => {
            for i in 1..n {
                edges.push((rng.random_range(0..i), i));
            }
        }
        DagKind::RandomDag => {
            let p = (2.0 / (n.max(2) - 1) as f64).min(1.0);
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random_bool(p) {
                        edges.push((i, j));
                    }
                }
            }
        }
    }
    edges
}

/// Generate a synthetic dataset plus its true Q-matrix and planted KG.
/// Fixed seeds give byte-identical output.
pub fn generate_synthetic(
    cfg: &SynthConfig,
) -> Result<(InteractionDataset, QMatrix, SkillRelationMatrix)> {
    if !(0.0..0.5).contains(&cfg.slip) || !(0.0..0.5).contains(&cfg.guess) {
        return Err(Error::InvalidArgument(format!(
            "slip and guess must be in [0, 0.5), got {} / {}",
            cfg.slip, cfg.guess
        )));
    }
    if !(0.0..=1.0).contains(&cfg.learning_rate_per_practice) || !(0.0..=1.0).contains(&cfg.init_mastery) {
        return Err(Error::InvalidArgument(
            "learning_rate_per_practice and init_mastery must be probabilities".into(),
        ));
    }
    if cfg.n_skills == 0 || cfg.n_questions == 0 || cfg.n_learners == 0 {
        return Err(Error::InvalidArgument("empty synthetic configuration".into()));
    }
    if cfg.seq_len_range.0 > cfg.seq_len_range.1 {
        return Err(Error::InvalidArgument("seq_len_range min > max".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0));
    let edges = planted_dag(cfg, &mut rng);
    let mut prereqs: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_skills];
    for &(i, j) in &edges {
        prereqs[j].push(i);
    }

    // True Q-matrix: round-robin primary skill (so every skill is covered),
    // plus occasionally one extra random skill.
    let mut pairs: Vec<(String, String)> = Vec::new();
    let width = (cfg.n_questions as f64).log10().ceil().max(1.0) as usize;
    let swidth = (cfg.n_skills as f64).log10().ceil().max(1.0) as usize;
    let qlabel = |q: usize| format!("q{q:0width$}");
    let slabel = |s: usize| format!("s{s:0swidth$}");
    for qi in 0..cfg.n_questions {
        let primary = qi % cfg.n_skills;
        pairs.push((qlabel(qi), slabel(primary)));
        if cfg.n_skills > 1 && rng.random_bool(MULTI_SKILL_PROB) {
            let mut extra = rng.random_range(0..cfg.n_skills - 1);
            if extra >= primary {
                extra += 1;
            }
            pairs.push((qlabel(qi), slabel(extra)));
        }
    }
    let qmatrix = QMatrix::from_pairs(&pairs, None);

    let mut truth = Matrix::zeros(cfg.n_skills, cfg.n_skills);
    for &(i, j) in &edges {
        truth.set(i, j, 1.0);
    }
    let truth = SkillRelationMatrix::new_binary(truth, None)?;

    // Questions indexed by the skill assigned round-robin above; the
    // curriculum sampler walks through these buckets as a sequence advances.
    let mut by_primary: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_skills];
    for qi in 0..cfg.n_questions {
        by_primary[qi % cfg.n_skills].push(qi);
    }

    let lwidth = (cfg.n_learners as f64).log10().ceil().max(1.0) as usize;
    let mut sequences = BTreeMap::new();
    for li in 0..cfg.n_learners {
        let mut lrng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1 + li as u64));

        // Initial mastery in topological order (edges always go low -> high).
        let mut mastered = vec![false; cfg.n_skills];
        for s in 0..cfg.n_skills {
            if prereqs[s].iter().all(|&p| mastered[p]) && lrng.random_bool(cfg.init_mastery) {
                mastered[s] = true;
            }
        }

        let seq_len = lrng.random_range(cfg.seq_len_range.0..=cfg.seq_len_range.1);
        let mut timestamp: i64 = 1_600_000_000 + lrng.random_range(0..86_400) as i64;
        let mut seq = Vec::with_capacity(seq_len);
        for step in 0..seq_len {
            // Curriculum: the question mostly comes from the skill bucket a
            // learner "should" be on at this point of the sequence, with a
            // bit of jitter and occasional free exploration.
            let q = if lrng.random_bool(EXPLORE_PROB) {
                lrng.random_range(0..cfg.n_questions)
            } else {
                let focus = (step * cfg.n_skills) / seq_len.max(1);
                let jitter: i64 = match lrng.random_range(0..4u32) {
                    0 => -1,
                    3 => 1,
                    _ => 0,
                };
                let k = (focus as i64 + jitter).clamp(0, cfg.n_skills as i64 - 1) as usize;
                let bucket = &by_primary[k];
                if bucket.is_empty() {
                    lrng.random_range(0..cfg.n_questions)
                } else {
                    bucket[lrng.random_range(0..bucket.len())]
                }
            };
            let skills = qmatrix.skills_of(q);
            let knows_all = skills.iter().all(|&s| mastered[s as usize]);
            let correct = if knows_all {
                !lrng.random_bool(cfg.slip)
            } else {
                lrng.random_bool(cfg.guess)
            };
            seq.push(Interaction {
                question: q as u32,
                correct,
                timestamp,
                elapsed: 5.0 + lrng.random_range(0..1200) as f64 / 10.0,
            });
            // Practice: answered skills may unlock, respecting the DAG.
            for &s in skills {
                let s = s as usize;
                if !mastered[s]
                    && prereqs[s].iter().all(|&p| mastered[p])
                    && lrng.random_bool(cfg.learning_rate_per_practice)
                {
                    mastered[s] = true;
                }
            }
            timestamp += 30 + lrng.random_range(0..570) as i64;
        }
        sequences.insert(format!("l{li:0lwidth$}"), seq);
    }

    let ds = InteractionDataset {
        sequences,
        question_labels: qmatrix.question_ids().to_vec(),
        skill_count: qmatrix.n_skills(),
        has_elapsed: true,
    };
    Ok((ds, qmatrix, truth))
}

/// Directed-edge precision/recall/F1 of an inferred KG against the planted
/// one. Diagonals are excluded; an empty prediction scores 0 precision by
/// convention.
pub fn kg_recovery_metrics(
    inferred: &SkillRelationMatrix,
    truth: &SkillRelationMatrix,
) -> Result<(f64, f64, f64)> {
    if inferred.n_skills() != truth.n_skills() {
        return Err(Error::DimensionMismatch(format!(
            "inferred KG has {} skills, truth has {}",
            inferred.n_skills(),
            truth.n_skills()
        )));
    }
    let inferred_edges = inferred.edges();
    let truth_edges: std::collections::HashSet<(usize, usize)> =
        truth.edges().into_iter().collect();
    let tp = inferred_edges
        .iter()
        .filter(|e| truth_edges.contains(e))
        .count() as f64;
    let precision = if inferred_edges.is_empty() {
        0.0
    } else {
        tp / inferred_edges.len() as f64
    };
    let recall = if truth_edges.is_empty() {
        0.0
    } else {
        tp / truth_edges.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}
