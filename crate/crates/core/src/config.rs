//! Pipeline configuration: every hyperparameter with its default, grouped
//! into sections. The CLI deserializes this from a TOML file (`key = value`
//! under `[section]` headers) and lets flags override individual fields.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Single-threaded, bit-reproducible mode.
    pub deterministic: bool,
    pub data: DataSection,
    pub kg: KgSection,
    pub refine: RefineSection,
    pub embed: EmbedSection,
    pub repr: ReprSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub synth: SynthSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            deterministic: true,
            data: DataSection::default(),
            kg: KgSection::default(),
            refine: RefineSection::default(),
            embed: EmbedSection::default(),
            repr: ReprSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            synth: SynthSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    /// Interaction log path (for `ingest`).
    pub log: Option<String>,
    /// Q-matrix path (for `ingest`).
    pub qmatrix: Option<String>,
    pub min_interactions: usize,
    pub test_fraction: f64,
    pub delimiter: String,
    pub learner_col: String,
    pub question_col: String,
    pub correct_col: String,
    pub timestamp_col: String,
    pub elapsed_col: String,
    pub timestamp_in_millis: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            log: None,
            qmatrix: None,
            min_interactions: 10,
            test_fraction: 0.2,
            delimiter: ",".into(),
            learner_col: "learner_id".into(),
            question_col: "question_id".into(),
            correct_col: "correct".into(),
            timestamp_col: "timestamp".into(),
            elapsed_col: "elapsed_time".into(),
            timestamp_in_millis: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KgSection {
    pub method: String,
    pub threshold: f64,
    /// Per-method threshold overrides, e.g. `thresholds = { kappa_adj = 0.8 }`.
    pub thresholds: BTreeMap<String, f64>,
    /// Pairs with less contingency mass than this are zeroed before
    /// thresholding.
    pub min_support: u64,
}

impl KgSection {
    pub fn threshold_for(&self, method: &str) -> f64 {
        self.thresholds.get(method).copied().unwrap_or(self.threshold)
    }
}

impl Default for KgSection {
    fn default() -> Self {
        KgSection {
            method: "kappa_adj".into(),
            threshold: 0.3,
            thresholds: BTreeMap::new(),
            min_support: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineSection {
    pub iterations: usize,
}

impl Default for RefineSection {
    fn default() -> Self {
        RefineSection { iterations: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedSection {
    /// Walk length in nodes.
    pub walk_length: usize,
    /// Walks started per question node.
    pub walks_per_node: usize,
    /// Embedding dimension d.
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub parallel: bool,
    pub threads: usize,
}

impl Default for EmbedSection {
    fn default() -> Self {
        EmbedSection {
            walk_length: 7,
            walks_per_node: 100,
            dim: 128,
            window: 1,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            parallel: false,
            threads: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReprSection {
    /// Fused representation dimension d'.
    pub d_prime: usize,
    /// Difficulty level count c (level c itself is the fallback bucket).
    pub levels: usize,
    pub min_attempts: u64,
    pub fine_tune_embeddings: bool,
}

impl Default for ReprSection {
    fn default() -> Self {
        ReprSection {
            d_prime: 256,
            levels: 100,
            min_attempts: 5,
            fine_tune_embeddings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub hidden: usize,
    /// Mix between shared-skill and cosine correlation in the attention.
    pub lambda: f64,
    /// Elapsed-time cap in seconds.
    pub et_cap: f64,
    /// Unit of the attention decay's time interval: "hours" or "seconds".
    pub time_unit: String,
    /// Move the prediction head's first bias inside the tanh (ablation of
    /// the literal bias-outside form).
    pub bias_inside_tanh: bool,
}

impl ModelSection {
    pub fn time_unit_secs(&self) -> f64 {
        match self.time_unit.as_str() {
            "seconds" => 1.0,
            _ => 3600.0,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: 256,
            lambda: 0.5,
            et_cap: 500.0,
            time_unit: "hours".into(),
            bias_inside_tanh: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    /// Maximum chunk length fed to the recurrence.
    pub seq_len: usize,
    pub early_stop: bool,
    pub holdout_fraction: f64,
    pub patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 20,
            lr: 1e-3,
            batch_size: 64,
            clip_norm: 10.0,
            seq_len: 200,
            early_stop: false,
            holdout_fraction: 0.1,
            patience: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub n_skills: usize,
    pub n_questions: usize,
    pub n_learners: usize,
    pub seq_len_min: usize,
    pub seq_len_max: usize,
    /// chain | tree | random-dag
    pub dag: String,
    pub slip: f64,
    pub guess: f64,
    pub learning_rate_per_practice: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n_skills: 8,
            n_questions: 100,
            n_learners: 500,
            seq_len_min: 50,
            seq_len_max: 50,
            dag: "chain".into(),
            slip: 0.1,
            guess: 0.2,
            learning_rate_per_practice: 0.2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reported_hyperparameters() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.embed.walk_length, 7);
        assert_eq!(cfg.embed.walks_per_node, 100);
        assert_eq!(cfg.embed.dim, 128);
        assert_eq!(cfg.repr.d_prime, 256);
        assert_eq!(cfg.model.hidden, 256);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.clip_norm, 10.0);
        assert_eq!(cfg.train.seq_len, 200);
        assert_eq!(cfg.model.lambda, 0.5);
        assert_eq!(cfg.model.et_cap, 500.0);
        assert_eq!(cfg.data.test_fraction, 0.2);
        assert_eq!(cfg.data.min_interactions, 10);
        assert_eq!(cfg.repr.levels, 100);
    }

    #[test]
    fn per_method_threshold_override() {
        let mut cfg = KgSection::default();
        cfg.thresholds.insert("phi".into(), 0.55);
        assert_eq!(cfg.threshold_for("phi"), 0.55);
        assert_eq!(cfg.threshold_for("kappa"), 0.3);
    }
}
