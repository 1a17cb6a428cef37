//! The attentive recurrent knowledge-assessment model: interaction
//! embedding, gated recurrent state update, time-decayed attention over the
//! interaction history, prediction head, loss, training and AUC evaluation.
//!
//! Everything is f64 with hand-written backward passes; the analytic
//! gradients of every stage are checked against central finite differences
//! in the test suites.

pub mod adam;
pub mod checkpoint;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use crate::dataio::{Interaction, InteractionDataset, QMatrix};
use crate::error::{Error, Result};
use crate::graphembed::EmbeddingTable;
use crate::matrix::{axpy, dot, norm};
use crate::qrepr::{
    build_feature_matrices, conv_fuse, conv_fuse_backward, feature_matrices_backward, ConvGrads,
    ConvParams, ConvTrace, DifficultyIndex, FeatureMatrices,
};
use crate::seeding::derive_seed;

use adam::{clip_global_norm, Adam};

pub const LOSS_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct KtConfig {
    /// Node embedding dimension d.
    pub d: usize,
    /// Fused question representation dimension d'.
    pub d_prime: usize,
    /// Recurrent state dimension.
    pub hidden: usize,
    /// Difficulty level count c.
    pub levels: usize,
    /// Maximum chunk length fed to the recurrence.
    pub seq_len: usize,
    /// Mix between shared-skill and cosine correlation.
    pub lambda: f64,
    /// Elapsed-time cap in seconds.
    pub et_cap: f64,
    /// Seconds per unit of the attention decay's time interval.
    pub time_unit_secs: f64,
    /// Place the head's first bias inside the tanh instead of outside.
    pub bias_inside_tanh: bool,
    pub fine_tune_embeddings: bool,
}

impl Default for KtConfig {
    fn default() -> Self {
        KtConfig {
            d: 128,
            d_prime: 256,
            hidden: 256,
            levels: 100,
            seq_len: 200,
            lambda: 0.5,
            et_cap: 500.0,
            time_unit_secs: 3600.0,
            bias_inside_tanh: false,
            fine_tune_embeddings: false,
        }
    }
}

impl KtConfig {
    pub fn x_dim(&self) -> usize {
        3 * self.d_prime
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
            grad: vec![0.0; len],
        }
    }

    pub fn uniform(shape: Vec<usize>, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut t = Tensor::zeros(shape);
        for x in &mut t.data {
            *x = rng.random_range(-bound..bound);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub struct TensorViewMut<'a> {
    pub name: &'static str,
    pub data: &'a mut [f64],
    pub grad: &'a mut [f64],
    pub trainable: bool,
}

/// All trainable state (and the frozen embedding tables) of the model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub cfg: KtConfig,
    /// gate matrix, (4*hidden) x (x_dim + hidden); gate order i, f, g, o
    pub w_lstm: Tensor,
    pub b_lstm: Tensor,
    /// response embedding, 2 x d' (row 0 incorrect, row 1 correct)
    pub e_r: Tensor,
    /// scalar elapsed time -> d' projection
    pub w_et: Tensor,
    pub b_et: Tensor,
    /// attention decay rate stored as its logarithm (positive by
    /// construction)
    pub log_decay: Tensor,
    pub w_s: Tensor,
    pub b_s: Tensor,
    pub w_p: Tensor,
    pub b_p: Tensor,
    pub conv: ConvParams,
    pub conv_grads: ConvGrads,
    /// difficulty embedding, (levels+1) x d
    pub d_matrix: Tensor,
    /// question embeddings, frozen unless fine_tune_embeddings
    pub emb_q: Tensor,
    pub emb_s: Tensor,
}

impl ModelParams {
    pub fn init(
        cfg: KtConfig,
        table: &EmbeddingTable,
        rng: &mut ChaCha8Rng,
    ) -> Result<ModelParams> {
        if table.dim != cfg.d {
            return Err(Error::DimensionMismatch(format!(
                "embedding table has d={} but the model expects d={}",
                table.dim, cfg.d
            )));
        }
        let (d, dp, h) = (cfg.d, cfg.d_prime, cfg.hidden);
        let x_dim = cfg.x_dim();
        let lstm_bound = 1.0 / ((x_dim + h) as f64).sqrt();
        let mut b_lstm = Tensor::zeros(vec![4 * h]);
        // forget-gate bias starts at 1
        b_lstm.data[h..2 * h].fill(1.0);

        let conv = ConvParams::init(d, dp, rng);
        let conv_grads = ConvGrads::zeros(&conv);

        let mut d_matrix = Tensor::zeros(vec![cfg.levels + 1, d]);
        for x in &mut d_matrix.data {
            *x = (rng.random::<f64>() - 0.5) / d as f64;
        }

        let mut emb_q = Tensor::zeros(vec![table.n_questions, d]);
        let mut emb_s = Tensor::zeros(vec![table.n_skills, d]);
        for qi in 0..table.n_questions {
            emb_q.data[qi * d..(qi + 1) * d].copy_from_slice(table.question(qi));
        }
        for si in 0..table.n_skills {
            emb_s.data[si * d..(si + 1) * d].copy_from_slice(table.skill(si));
        }

        Ok(ModelParams {
            w_lstm: Tensor::uniform(vec![4 * h, x_dim + h], lstm_bound, rng),
            b_lstm,
            e_r: Tensor::uniform(vec![2, dp], 1.0 / (dp as f64).sqrt(), rng),
            w_et: Tensor::uniform(vec![dp], 1.0 / (dp as f64).sqrt(), rng),
            b_et: Tensor::zeros(vec![dp]),
            log_decay: Tensor::zeros(vec![1]),
            w_s: Tensor::uniform(vec![h, dp + h], 1.0 / ((dp + h) as f64).sqrt(), rng),
            b_s: Tensor::zeros(vec![h]),
            w_p: Tensor::uniform(vec![h], 1.0 / (h as f64).sqrt(), rng),
            b_p: Tensor::zeros(vec![1]),
            conv,
            conv_grads,
            d_matrix,
            emb_q,
            emb_s,
            cfg,
        })
    }

    pub fn decay_rate(&self) -> f64 {
        self.log_decay.data[0].exp()
    }

    pub fn n_questions(&self) -> usize {
        self.emb_q.shape[0]
    }

    pub fn n_skills(&self) -> usize {
        self.emb_s.shape[0]
    }

    pub fn question_embedding(&self, q: usize) -> &[f64] {
        let d = self.cfg.d;
        &self.emb_q.data[q * d..(q + 1) * d]
    }

    pub fn views_mut(&mut self) -> Vec<TensorViewMut<'_>> {
        let fine_tune = self.cfg.fine_tune_embeddings;
        vec![
            TensorViewMut {
                name: "lstm.w",
                data: &mut self.w_lstm.data,
                grad: &mut self.w_lstm.grad,
                trainable: true,
            },
            TensorViewMut {
                name: "lstm.b",
                data: &mut self.b_lstm.data,
                grad: &mut self.b_lstm.grad,
                trainable: true,
            },
            TensorViewMut {
                name: "e_r",
                data: &mut self.e_r.data,
                grad: &mut self.e_r.grad,
                trainable: true,
            },
            TensorViewMut {
                name: "w_et",
                data: &mut self.w_et.data,
                grad: &mut self.w_et.grad,
                trainable: true,
            },
            TensorViewMut {
                name: "b_et",
                data: &mut self.b_et.data,
                grad: &mut self.b_et.grad,
                trainable: true,
            },
            TensorViewMut {
                name: "log_decay",
                data: &mut self.log_decay.data,
                grad: &mut self.log_decay.grad,
                trainable: true,
            },
            TensorViewMut {
                name: "head.w_s",
                data: &mut self.w_s.data,
                grad: &mut self.w_s.grad,
                trainable: true,
            },
            TensorViewMut {
                name: "head.b_s",
                data: &mut self.b_s.data,
                grad: &mut self.b_s.grad,
                trainable: true,
            },
            TensorViewMut {
                name: "head.w_p",
                data: &mut self.w_p.data,
                grad: &mut self.w_p.grad,
                trainable: true,
            },
            TensorViewMut {
                name: "head.b_p",
                data: &mut self.b_p.data,
                grad: &mut self.b_p.grad,
                trainable: true,
            },
            TensorViewMut {
                name: "conv.kernels_m",
                data: &mut self.conv.kernels_m,
                grad: &mut self.conv_grads.kernels_m,
                trainable: true,
            },
            TensorViewMut {
                name: "conv.bias_m",
                data: &mut self.conv.bias_m,
                grad: &mut self.conv_grads.bias_m,
                trainable: true,
            },
            TensorViewMut {
                name: "conv.kernels_n",
                data: &mut self.conv.kernels_n,
                grad: &mut self.conv_grads.kernels_n,
                trainable: true,
            },
            TensorViewMut {
                name: "conv.bias_n",
                data: &mut self.conv.bias_n,
                grad: &mut self.conv_grads.bias_n,
                trainable: true,
            },
            TensorViewMut {
                name: "conv.w_o",
                data: &mut self.conv.w_o,
                grad: &mut self.conv_grads.w_o,
                trainable: true,
            },
            TensorViewMut {
                name: "difficulty.embedding",
                data: &mut self.d_matrix.data,
                grad: &mut self.d_matrix.grad,
                trainable: true,
            },
            TensorViewMut {
                name: "emb.question",
                data: &mut self.emb_q.data,
                grad: &mut self.emb_q.grad,
                trainable: fine_tune,
            },
            TensorViewMut {
                name: "emb.skill",
                data: &mut self.emb_s.data,
                grad: &mut self.emb_s.grad,
                trainable: fine_tune,
            },
        ]
    }

    pub fn zero_grads(&mut self) {
        for v in self.views_mut() {
            v.grad.fill(0.0);
        }
    }

    /// Visit every tensor (name, shape, data) in checkpoint order.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&'static str, Vec<usize>, &[f64])) {
        let (d, dp) = (self.cfg.d, self.cfg.d_prime);
        f("lstm.w", self.w_lstm.shape.clone(), &self.w_lstm.data);
        f("lstm.b", self.b_lstm.shape.clone(), &self.b_lstm.data);
        f("e_r", self.e_r.shape.clone(), &self.e_r.data);
        f("w_et", self.w_et.shape.clone(), &self.w_et.data);
        f("b_et", self.b_et.shape.clone(), &self.b_et.data);
        f("log_decay", self.log_decay.shape.clone(), &self.log_decay.data);
        f("head.w_s", self.w_s.shape.clone(), &self.w_s.data);
        f("head.b_s", self.b_s.shape.clone(), &self.b_s.data);
        f("head.w_p", self.w_p.shape.clone(), &self.w_p.data);
        f("head.b_p", self.b_p.shape.clone(), &self.b_p.data);
        f("conv.kernels_m", vec![8, 2, 2], &self.conv.kernels_m);
        f("conv.bias_m", vec![8], &self.conv.bias_m);
        f("conv.kernels_n", vec![8, 2, 2], &self.conv.kernels_n);
        f("conv.bias_n", vec![8], &self.conv.bias_n);
        f("conv.w_o", vec![8 * (d + 2), dp], &self.conv.w_o);
        f(
            "difficulty.embedding",
            self.d_matrix.shape.clone(),
            &self.d_matrix.data,
        );
        f("emb.question", self.emb_q.shape.clone(), &self.emb_q.data);
        f("emb.skill", self.emb_s.shape.clone(), &self.emb_s.data);
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ---------------------------------------------------------------------------
// op surface
// ---------------------------------------------------------------------------

/// x = concat(q_tilde, t, r): elapsed time capped and projected to d', and
/// the response row of E_r appended.
pub fn interaction_embedding(
    q_tilde: &[f64],
    elapsed: f64,
    correct: bool,
    p: &ModelParams,
) -> Vec<f64> {
    let dp = p.cfg.d_prime;
    let et = elapsed.min(p.cfg.et_cap);
    let mut x = Vec::with_capacity(3 * dp);
    x.extend_from_slice(q_tilde);
    for k in 0..dp {
        x.push(et * p.w_et.data[k] + p.b_et.data[k]);
    }
    let row = usize::from(correct);
    x.extend_from_slice(&p.e_r.data[row * dp..(row + 1) * dp]);
    x
}

#[derive(Debug, Clone)]
pub struct HistoryEntry {
    pub h: Vec<f64>,
    pub q_tilde: Vec<f64>,
    pub timestamp: i64,
    pub skills: Vec<u32>,
}

/// Recurrent state plus the per-sequence attention history. Cleared between
/// sequences (and between chunks of a long sequence).
#[derive(Debug, Clone)]
pub struct KnowledgeState {
    pub h: Vec<f64>,
    pub cell: Vec<f64>,
    pub history: Vec<HistoryEntry>,
}

impl KnowledgeState {
    pub fn new(hidden: usize) -> Self {
        KnowledgeState {
            h: vec![0.0; hidden],
            cell: vec![0.0; hidden],
            history: Vec::new(),
        }
    }
}

struct LstmStep {
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

fn lstm_forward(p: &ModelParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
    let h_dim = p.cfg.hidden;
    let x_dim = p.cfg.x_dim();
    let cols = x_dim + h_dim;
    let mut z = p.b_lstm.data.clone();
    for (r, zr) in z.iter_mut().enumerate() {
        let row = &p.w_lstm.data[r * cols..(r + 1) * cols];
        *zr += dot(&row[..x_dim], x) + dot(&row[x_dim..], h_prev);
    }
    let i: Vec<f64> = z[..h_dim].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[h_dim..2 * h_dim].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[2 * h_dim..3 * h_dim].iter().map(|&v| v.tanh()).collect();
    let o: Vec<f64> = z[3 * h_dim..].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..h_dim).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
    let h: Vec<f64> = (0..h_dim).map(|k| o[k] * tanh_c[k]).collect();
    LstmStep {
        i,
        f,
        g,
        o,
        c,
        tanh_c,
        h,
    }
}

/// One gated recurrent update. The first d' components of `x` are the fused
/// question representation; together with the interaction's timestamp and
/// skill set they extend the attention history.
pub fn recurrent_step(
    x: &[f64],
    state: &KnowledgeState,
    timestamp: i64,
    skills: &[u32],
    p: &ModelParams,
) -> KnowledgeState {
    let step = lstm_forward(p, x, &state.h, &state.cell);
    let mut history = state.history.clone();
    history.push(HistoryEntry {
        h: step.h.clone(),
        q_tilde: x[..p.cfg.d_prime].to_vec(),
        timestamp,
        skills: skills.to_vec(),
    });
    KnowledgeState {
        h: step.h,
        cell: step.c,
        history,
    }
}

fn shared_skill_fraction(skills_i: &[u32], skills_next: &[u32]) -> f64 {
    if skills_next.is_empty() {
        return 0.0;
    }
    // both sorted
    let mut n = 0usize;
    let (mut a, mut b) = (0usize, 0usize);
    while a < skills_i.len() && b < skills_next.len() {
        match skills_i[a].cmp(&skills_next[b]) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                a += 1;
                b += 1;
            }
        }
    }
    n as f64 / skills_next.len() as f64
}

/// g = lambda * shared-skill fraction + (1 - lambda) * cosine similarity.
/// The cosine of a zero vector is 0; an empty next skill set contributes 0
/// to the shared term (it cannot occur on filtered data).
pub fn correlation(
    q_i: &[f64],
    q_next: &[f64],
    skills_i: &[u32],
    skills_next: &[u32],
    lambda: f64,
) -> f64 {
    let share = shared_skill_fraction(skills_i, skills_next);
    let cos = crate::matrix::cosine(q_i, q_next);
    lambda * share + (1.0 - lambda) * cos
}

struct AttnItem<'a> {
    h: &'a [f64],
    q_tilde: &'a [f64],
    q_norm: f64,
    timestamp: i64,
    skills: &'a [u32],
}

struct AttnTrace {
    dt: Vec<f64>,
    g: Vec<f64>,
    cos: Vec<f64>,
    e: Vec<f64>,
    alpha: Vec<f64>,
    h_tilde: Vec<f64>,
}

fn attention_forward(
    p: &ModelParams,
    items: &[AttnItem<'_>],
    q_next: &[f64],
    q_next_norm: f64,
    ts_next: i64,
    skills_next: &[u32],
) -> AttnTrace {
    let h_dim = p.cfg.hidden;
    let n = items.len();
    let theta = p.decay_rate();
    let mut dt = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut cos = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let mut corre = Vec::with_capacity(n);
    for item in items {
        let interval = (ts_next - item.timestamp).abs() as f64 / p.cfg.time_unit_secs;
        let cos_i = if item.q_norm == 0.0 || q_next_norm == 0.0 {
            0.0
        } else {
            dot(item.q_tilde, q_next) / (item.q_norm * q_next_norm)
        };
        let share = shared_skill_fraction(item.skills, skills_next);
        let g_i = p.cfg.lambda * share + (1.0 - p.cfg.lambda) * cos_i;
        let e_i = (-theta * interval).exp();
        dt.push(interval);
        cos.push(cos_i);
        g.push(g_i);
        e.push(e_i);
        corre.push(e_i * g_i);
    }
    // softmax (shift-invariant)
    let max = corre.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut alpha: Vec<f64> = corre.iter().map(|&c| (c - max).exp()).collect();
    let sum: f64 = alpha.iter().sum();
    for a in &mut alpha {
        *a /= sum;
    }
    let mut h_tilde = vec![0.0; h_dim];
    for (a, item) in alpha.iter().zip(items) {
        axpy(*a, item.h, &mut h_tilde);
    }
    AttnTrace {
        dt,
        g,
        cos,
        e,
        alpha,
        h_tilde,
    }
}

/// Attention-weighted aggregate of the history states. An empty history
/// yields the zero vector (the first prediction of a sequence has no past).
pub fn attention_aggregate(
    state: &KnowledgeState,
    q_next: &[f64],
    ts_next: i64,
    skills_next: &[u32],
    p: &ModelParams,
) -> Vec<f64> {
    if state.history.is_empty() {
        return vec![0.0; p.cfg.hidden];
    }
    let items: Vec<AttnItem<'_>> = state
        .history
        .iter()
        .map(|entry| AttnItem {
            h: &entry.h,
            q_tilde: &entry.q_tilde,
            q_norm: norm(&entry.q_tilde),
            timestamp: entry.timestamp,
            skills: &entry.skills,
        })
        .collect();
    attention_forward(p, &items, q_next, norm(q_next), ts_next, skills_next).h_tilde
}

struct HeadTrace {
    zcat: Vec<f64>,
    a: Vec<f64>,
    s: Vec<f64>,
    p: f64,
}

fn head_forward(p: &ModelParams, q_next: &[f64], h_tilde: &[f64]) -> HeadTrace {
    let h_dim = p.cfg.hidden;
    let dp = p.cfg.d_prime;
    let cols = dp + h_dim;
    let mut zcat = Vec::with_capacity(cols);
    zcat.extend_from_slice(q_next);
    zcat.extend_from_slice(h_tilde);
    let mut a = Vec::with_capacity(h_dim);
    let mut s = Vec::with_capacity(h_dim);
    for r in 0..h_dim {
        let u = dot(&p.w_s.data[r * cols..(r + 1) * cols], &zcat);
        if p.cfg.bias_inside_tanh {
            let ar = (u + p.b_s.data[r]).tanh();
            a.push(ar);
            s.push(ar);
        } else {
            let ar = u.tanh();
            a.push(ar);
            s.push(ar + p.b_s.data[r]);
        }
    }
    let zp = dot(&p.w_p.data, &s) + p.b_p.data[0];
    HeadTrace {
        zcat,
        a,
        s,
        p: sigmoid(zp),
    }
}

/// p = sigma(W_p s + b_p) with s = tanh(W_s [q_next, h_tilde]) + b_s
/// (bias outside the tanh, following the printed form; configurable).
pub fn predict(q_next: &[f64], h_tilde: &[f64], p: &ModelParams) -> f64 {
    head_forward(p, q_next, h_tilde).p
}

/// Summed binary cross-entropy over the predicted steps, with predictions
/// clamped to [eps, 1-eps].
pub fn loss(predictions: &[f64], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (&p, &r) in predictions.iter().zip(labels) {
        let p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
        total -= if r { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total)
}

/// Mann-Whitney rank AUC with ties counted as one half.
pub fn auc_rank(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidState(
            "AUC is undefined on a single-class label set".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut idx = 0;
    while idx < order.len() {
        let mut end = idx + 1;
        while end < order.len() && scores[order[end]] == scores[order[idx]] {
            end += 1;
        }
        // 1-based average rank of the tie group [idx, end)
        let avg_rank = (idx + 1 + end) as f64 / 2.0;
        for &item in &order[idx..end] {
            if labels[item] {
                rank_sum_pos += avg_rank;
            }
        }
        idx = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

// ---------------------------------------------------------------------------
// chunked forward/backward
// ---------------------------------------------------------------------------

/// The model plus the pipeline artifacts needed to evaluate it.
#[derive(Debug, Clone)]
pub struct KtModel {
    pub params: ModelParams,
    /// Refined Q-matrix; provides skill sets for the attention correlation
    /// and the mean skill embedding.
    pub o_hat: QMatrix,
    pub difficulty: DifficultyIndex,
}

struct QRep {
    question: usize,
    feat: FeatureMatrices,
    trace: ConvTrace,
    q_tilde: Vec<f64>,
    q_norm: f64,
}

struct ChunkTrace {
    reps: Vec<QRep>,
    /// per step: index into reps
    locals: Vec<usize>,
    ets: Vec<f64>,
    xs: Vec<Vec<f64>>,
    steps: Vec<LstmStep>,
    /// predictions for steps 1..len
    attns: Vec<AttnTrace>,
    heads: Vec<HeadTrace>,
}

impl KtModel {
    fn question_rep(&self, question: usize) -> Result<QRep> {
        let p = &self.params;
        let d = p.cfg.d;
        let q_emb = p.question_embedding(question);
        let skills = self.o_hat.skills_of(question);
        let mut s_bar = vec![0.0; d];
        for &s in skills {
            axpy(
                1.0,
                &p.emb_s.data[s as usize * d..(s as usize + 1) * d],
                &mut s_bar,
            );
        }
        if !skills.is_empty() {
            let inv = 1.0 / skills.len() as f64;
            s_bar.iter_mut().for_each(|x| *x *= inv);
        }
        let ql = self.difficulty.question_level[question];
        let sl = self.difficulty.skill_level[question];
        let d_q = &p.d_matrix.data[ql * d..(ql + 1) * d];
        let d_s = &p.d_matrix.data[sl * d..(sl + 1) * d];
        let feat = build_feature_matrices(q_emb, &s_bar, d_q, d_s)?;
        let (q_tilde, trace) = conv_fuse(&feat, &p.conv)?;
        let q_norm = norm(&q_tilde);
        Ok(QRep {
            question,
            feat,
            trace,
            q_tilde,
            q_norm,
        })
    }

    fn forward_chunk(&self, chunk: &[Interaction]) -> Result<ChunkTrace> {
        let p = &self.params;
        let dp = p.cfg.d_prime;

        let mut reps: Vec<QRep> = Vec::new();
        let mut rep_index: HashMap<u32, usize> = HashMap::new();
        let mut locals = Vec::with_capacity(chunk.len());
        for it in chunk {
            let local = match rep_index.get(&it.question) {
                Some(&l) => l,
                None => {
                    if it.question as usize >= self.o_hat.n_questions() {
                        return Err(Error::UnknownNode(format!(
                            "question index {} outside the Q-matrix",
                            it.question
                        )));
                    }
                    let rep = self.question_rep(it.question as usize)?;
                    reps.push(rep);
                    rep_index.insert(it.question, reps.len() - 1);
                    reps.len() - 1
                }
            };
            locals.push(local);
        }

        let mut ets = Vec::with_capacity(chunk.len());
        let mut xs = Vec::with_capacity(chunk.len());
        let mut steps: Vec<LstmStep> = Vec::with_capacity(chunk.len());
        let mut attns = Vec::with_capacity(chunk.len().saturating_sub(1));
        let mut heads = Vec::with_capacity(chunk.len().saturating_sub(1));
        let zero_h = vec![0.0; p.cfg.hidden];

        for (t, it) in chunk.iter().enumerate() {
            let rep = &reps[locals[t]];
            if t >= 1 {
                // predict this interaction from the history so far
                let items: Vec<AttnItem<'_>> = (0..t)
                    .map(|j| AttnItem {
                        h: &steps[j].h,
                        q_tilde: &reps[locals[j]].q_tilde,
                        q_norm: reps[locals[j]].q_norm,
                        timestamp: chunk[j].timestamp,
                        skills: self.o_hat.skills_of(reps[locals[j]].question),
                    })
                    .collect();
                let attn = attention_forward(
                    p,
                    &items,
                    &rep.q_tilde,
                    rep.q_norm,
                    it.timestamp,
                    self.o_hat.skills_of(rep.question),
                );
                let head = head_forward(p, &rep.q_tilde, &attn.h_tilde);
                attns.push(attn);
                heads.push(head);
            }
            let et = it.elapsed.min(p.cfg.et_cap);
            let mut x = Vec::with_capacity(3 * dp);
            x.extend_from_slice(&rep.q_tilde);
            for k in 0..dp {
                x.push(et * p.w_et.data[k] + p.b_et.data[k]);
            }
            let row = usize::from(it.correct);
            x.extend_from_slice(&p.e_r.data[row * dp..(row + 1) * dp]);
            let (h_prev, c_prev) = if t == 0 {
                (zero_h.as_slice(), zero_h.as_slice())
            } else {
                (steps[t - 1].h.as_slice(), steps[t - 1].c.as_slice())
            };
            steps.push(lstm_forward(p, &x, h_prev, c_prev));
            ets.push(et);
            xs.push(x);
        }

        Ok(ChunkTrace {
            reps,
            locals,
            ets,
            xs,
            steps,
            attns,
            heads,
        })
    }

    /// Accumulate gradients of `scale * summed-BCE(chunk)` into the params.
    fn backward_chunk(&mut self, chunk: &[Interaction], trace: &ChunkTrace, scale: f64) {
        let cfg = self.params.cfg.clone();
        let (dp, h_dim) = (cfg.d_prime, cfg.hidden);
        let x_dim = cfg.x_dim();
        let t_count = chunk.len();
        let lambda = cfg.lambda;
        let theta = self.params.decay_rate();

        let mut d_q_tilde: Vec<Vec<f64>> = trace.reps.iter().map(|_| vec![0.0; dp]).collect();
        let mut d_h_ext: Vec<Vec<f64>> = (0..t_count).map(|_| vec![0.0; h_dim]).collect();
        let mut d_log_decay = 0.0;

        // prediction heads and attention, newest first
        for t in (1..t_count).rev() {
            let head = &trace.heads[t - 1];
            let attn = &trace.attns[t - 1];
            let label = chunk[t].correct;
            let dzp = scale * (head.p - if label { 1.0 } else { 0.0 });

            // head
            self.params.b_p.grad[0] += dzp;
            let mut ds = vec![0.0; h_dim];
            for k in 0..h_dim {
                self.params.w_p.grad[k] += dzp * head.s[k];
                ds[k] = dzp * self.params.w_p.data[k];
            }
            let mut du = vec![0.0; h_dim];
            for k in 0..h_dim {
                if cfg.bias_inside_tanh {
                    let inner = ds[k] * (1.0 - head.a[k] * head.a[k]);
                    self.params.b_s.grad[k] += inner;
                    du[k] = inner;
                } else {
                    self.params.b_s.grad[k] += ds[k];
                    du[k] = ds[k] * (1.0 - head.a[k] * head.a[k]);
                }
            }
            let cols = dp + h_dim;
            let mut d_zcat = vec![0.0; cols];
            for r in 0..h_dim {
                let w_row = &self.params.w_s.data[r * cols..(r + 1) * cols];
                let g_row = &mut self.params.w_s.grad[r * cols..(r + 1) * cols];
                let dur = du[r];
                for k in 0..cols {
                    g_row[k] += dur * head.zcat[k];
                    d_zcat[k] += dur * w_row[k];
                }
            }
            axpy(1.0, &d_zcat[..dp], &mut d_q_tilde[trace.locals[t]]);
            let d_h_tilde = &d_zcat[dp..];

            // attention
            let hist = t;
            let mut d_alpha = vec![0.0; hist];
            for j in 0..hist {
                d_alpha[j] = dot(d_h_tilde, &trace.steps[j].h);
                axpy(attn.alpha[j], d_h_tilde, &mut d_h_ext[j]);
            }
            let s_dot: f64 = (0..hist).map(|j| attn.alpha[j] * d_alpha[j]).sum();
            let next_local = trace.locals[t];
            let nb = trace.reps[next_local].q_norm;
            for j in 0..hist {
                let d_corre = attn.alpha[j] * (d_alpha[j] - s_dot);
                if d_corre == 0.0 {
                    continue;
                }
                let dg = d_corre * attn.e[j];
                d_log_decay += d_corre * attn.g[j] * attn.e[j] * (-attn.dt[j]) * theta;
                let dcos = (1.0 - lambda) * dg;
                if dcos == 0.0 {
                    continue;
                }
                let hist_local = trace.locals[j];
                let na = trace.reps[hist_local].q_norm;
                if na == 0.0 || nb == 0.0 {
                    continue;
                }
                let cos_j = attn.cos[j];
                let inv = 1.0 / (na * nb);
                if hist_local == next_local {
                    // same question on both sides of the cosine
                    let a_vec = trace.reps[hist_local].q_tilde.clone();
                    let da = &mut d_q_tilde[hist_local];
                    for k in 0..dp {
                        da[k] += dcos
                            * ((a_vec[k] * inv - cos_j * a_vec[k] / (na * na))
                                + (a_vec[k] * inv - cos_j * a_vec[k] / (nb * nb)));
                    }
                } else {
                    let (lo, hi) = (hist_local.min(next_local), hist_local.max(next_local));
                    let (head_slice, tail_slice) = d_q_tilde.split_at_mut(hi);
                    let (da, db) = if hist_local < next_local {
                        (&mut head_slice[lo], &mut tail_slice[0])
                    } else {
                        (&mut tail_slice[0], &mut head_slice[lo])
                    };
                    let a_vec = &trace.reps[hist_local].q_tilde;
                    let b_vec = &trace.reps[next_local].q_tilde;
                    for k in 0..dp {
                        da[k] += dcos * (b_vec[k] * inv - cos_j * a_vec[k] / (na * na));
                        db[k] += dcos * (a_vec[k] * inv - cos_j * b_vec[k] / (nb * nb));
                    }
                }
            }
        }
        self.params.log_decay.grad[0] += d_log_decay;

        // backpropagation through time
        let zero = vec![0.0; h_dim];
        let mut dh_next = vec![0.0; h_dim];
        let mut dc_next = vec![0.0; h_dim];
        for t in (0..t_count).rev() {
            let step = &trace.steps[t];
            let (h_prev, c_prev) = if t == 0 {
                (zero.as_slice(), zero.as_slice())
            } else {
                (trace.steps[t - 1].h.as_slice(), trace.steps[t - 1].c.as_slice())
            };
            let mut dh = d_h_ext[t].clone();
            axpy(1.0, &dh_next, &mut dh);

            let mut dz = vec![0.0; 4 * h_dim];
            let mut dc_prev = vec![0.0; h_dim];
            for k in 0..h_dim {
                let d_o = dh[k] * step.tanh_c[k];
                let mut dc = dh[k] * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
                dc += dc_next[k];
                let d_f = dc * c_prev[k];
                let d_i = dc * step.g[k];
                let d_g = dc * step.i[k];
                dc_prev[k] = dc * step.f[k];
                dz[k] = d_i * step.i[k] * (1.0 - step.i[k]);
                dz[h_dim + k] = d_f * step.f[k] * (1.0 - step.f[k]);
                dz[2 * h_dim + k] = d_g * (1.0 - step.g[k] * step.g[k]);
                dz[3 * h_dim + k] = d_o * step.o[k] * (1.0 - step.o[k]);
            }

            let cols = x_dim + h_dim;
            let x = &trace.xs[t];
            let mut dx = vec![0.0; x_dim];
            dh_next = vec![0.0; h_dim];
            for (r, &dzr) in dz.iter().enumerate() {
                self.params.b_lstm.grad[r] += dzr;
                if dzr == 0.0 {
                    continue;
                }
                let w_row = &self.params.w_lstm.data[r * cols..(r + 1) * cols];
                let g_row = &mut self.params.w_lstm.grad[r * cols..(r + 1) * cols];
                for k in 0..x_dim {
                    g_row[k] += dzr * x[k];
                    dx[k] += dzr * w_row[k];
                }
                for k in 0..h_dim {
                    g_row[x_dim + k] += dzr * h_prev[k];
                    dh_next[k] += dzr * w_row[x_dim + k];
                }
            }
            dc_next = dc_prev;

            axpy(1.0, &dx[..dp], &mut d_q_tilde[trace.locals[t]]);
            let et = trace.ets[t];
            for k in 0..dp {
                let dt_k = dx[dp + k];
                self.params.w_et.grad[k] += et * dt_k;
                self.params.b_et.grad[k] += dt_k;
            }
            let row = usize::from(chunk[t].correct);
            for k in 0..dp {
                self.params.e_r.grad[row * dp + k] += dx[2 * dp + k];
            }
        }

        // fused-representation backward, once per distinct question
        let d = cfg.d;
        for (ri, rep) in trace.reps.iter().enumerate() {
            let dq = &d_q_tilde[ri];
            if dq.iter().all(|&v| v == 0.0) {
                continue;
            }
            let (d_m, d_n) = conv_fuse_backward(
                &rep.feat,
                &self.params.conv,
                &rep.trace,
                dq,
                &mut self.params.conv_grads,
            );
            let rows = feature_matrices_backward(&rep.feat, &d_m, &d_n);
            let ql = self.difficulty.question_level[rep.question];
            let sl = self.difficulty.skill_level[rep.question];
            axpy(1.0, &rows[2], &mut self.params.d_matrix.grad[ql * d..(ql + 1) * d]);
            axpy(1.0, &rows[3], &mut self.params.d_matrix.grad[sl * d..(sl + 1) * d]);
            if cfg.fine_tune_embeddings {
                let q = rep.question;
                axpy(1.0, &rows[0], &mut self.params.emb_q.grad[q * d..(q + 1) * d]);
                let skills = self.o_hat.skills_of(q);
                let inv = 1.0 / skills.len().max(1) as f64;
                for &s in skills {
                    let s = s as usize;
                    axpy(inv, &rows[1], &mut self.params.emb_s.grad[s * d..(s + 1) * d]);
                }
            }
        }
    }

    /// Pool the predicted steps of every chunk and compute the rank AUC.
    pub fn evaluate_auc(&self, test: &InteractionDataset) -> Result<f64> {
        let (scores, labels) = self.predict_dataset(test)?;
        auc_rank(&scores, &labels)
    }

    /// Run forward and backward over every chunk of `ds`, adding the
    /// gradients of `scale * summed-BCE` to the parameter gradients.
    /// Returns the summed BCE over all predicted steps. Callers own
    /// `zero_grads` and the optimizer step.
    pub fn accumulate_gradients(&mut self, ds: &InteractionDataset, scale: f64) -> Result<f64> {
        let seq_len = self.params.cfg.seq_len;
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        let sequences: Vec<Vec<Interaction>> = ds.sequences.values().cloned().collect();
        for seq in &sequences {
            for chunk in seq.chunks(seq_len) {
                if chunk.len() < 2 {
                    continue;
                }
                let trace = self.forward_chunk(chunk)?;
                for t in 1..chunk.len() {
                    scores.push(trace.heads[t - 1].p);
                    labels.push(chunk[t].correct);
                }
                self.backward_chunk(chunk, &trace, scale);
            }
        }
        loss(&scores, &labels)
    }

    /// Forward-only pass over a dataset, pooling (prediction, label) pairs
    /// for every predicted step.
    pub fn predict_dataset(&self, ds: &InteractionDataset) -> Result<(Vec<f64>, Vec<bool>)> {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for seq in ds.sequences.values() {
            for chunk in seq.chunks(self.params.cfg.seq_len) {
                if chunk.len() < 2 {
                    continue;
                }
                let trace = self.forward_chunk(chunk)?;
                for t in 1..chunk.len() {
                    scores.push(trace.heads[t - 1].p);
                    labels.push(chunk[t].correct);
                }
            }
        }
        Ok((scores, labels))
    }
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EarlyStop {
    pub holdout_fraction: f64,
    pub patience: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 20,
            lr: 1e-3,
            batch_size: 64,
            clip_norm: 10.0,
            seed: 1,
            early_stop: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub auc: f64,
}

fn chunks_of<'a>(
    ds: &'a InteractionDataset,
    seq_len: usize,
    skip: &[&str],
) -> Vec<&'a [Interaction]> {
    let mut out = Vec::new();
    for (learner, seq) in &ds.sequences {
        if skip.contains(&learner.as_str()) {
            continue;
        }
        for chunk in seq.chunks(seq_len) {
            if chunk.len() >= 2 {
                out.push(chunk);
            }
        }
    }
    out
}

/// Train the model. Sequences are cut into consecutive chunks of at most
/// `cfg.seq_len`; chunks are shuffled each epoch and processed in batches of
/// `batch_size` (gradients averaged per predicted step), the global gradient
/// norm is clipped and an adaptive-moment step is applied. Single-threaded
/// and deterministic under a fixed seed.
pub fn train(
    train_ds: &InteractionDataset,
    o_hat: &QMatrix,
    table: &EmbeddingTable,
    difficulty: &DifficultyIndex,
    cfg: KtConfig,
    opts: &TrainOptions,
) -> Result<(KtModel, Vec<MetricsRecord>)> {
    if difficulty.levels != cfg.levels {
        return Err(Error::DimensionMismatch(format!(
            "difficulty has {} levels, model expects {}",
            difficulty.levels, cfg.levels
        )));
    }
    if table.n_questions != o_hat.n_questions() || table.n_skills != o_hat.n_skills() {
        return Err(Error::DimensionMismatch(
            "embedding table does not match the Q-matrix".into(),
        ));
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 0x10d));
    let params = ModelParams::init(cfg.clone(), table, &mut init_rng)?;
    let mut model = KtModel {
        params,
        o_hat: o_hat.clone(),
        difficulty: difficulty.clone(),
    };

    // optional held-out learners for early stopping
    let holdout_ids: Vec<String> = match &opts.early_stop {
        None => Vec::new(),
        Some(es) => {
            let mut learners: Vec<&String> = train_ds.sequences.keys().collect();
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 0xe5));
            learners.shuffle(&mut rng);
            let n = ((learners.len() as f64 * es.holdout_fraction).round() as usize)
                .clamp(1, learners.len().saturating_sub(1));
            learners[..n].iter().map(|s| s.to_string()).collect()
        }
    };
    let skip: Vec<&str> = holdout_ids.iter().map(String::as_str).collect();
    let chunks = chunks_of(train_ds, cfg.seq_len, &skip);
    if chunks.is_empty() {
        return Err(Error::InvalidArgument(
            "empty training set: no sequence chunk has at least 2 interactions".into(),
        ));
    }
    let holdout = if holdout_ids.is_empty() {
        None
    } else {
        let mut ho = InteractionDataset {
            sequences: Default::default(),
            question_labels: train_ds.question_labels.clone(),
            skill_count: train_ds.skill_count,
            has_elapsed: train_ds.has_elapsed,
        };
        for id in &holdout_ids {
            ho.sequences.insert(id.clone(), train_ds.sequences[id].clone());
        }
        Some(ho)
    };

    let mut optimizer = Adam::new(opts.lr);
    let mut metrics = Vec::new();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0usize;

    for epoch in 0..opts.epochs {
        let mut order: Vec<usize> = (0..chunks.len()).collect();
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 0x2000 + epoch as u64));
        order.shuffle(&mut rng);

        let mut epoch_scores = Vec::new();
        let mut epoch_labels = Vec::new();
        for batch in order.chunks(opts.batch_size) {
            model.params.zero_grads();
            let n_steps: usize = batch.iter().map(|&ci| chunks[ci].len() - 1).sum();
            let scale = 1.0 / n_steps.max(1) as f64;
            for &ci in batch {
                let chunk = chunks[ci];
                let trace = model.forward_chunk(chunk)?;
                for t in 1..chunk.len() {
                    epoch_scores.push(trace.heads[t - 1].p);
                    epoch_labels.push(chunk[t].correct);
                }
                model.backward_chunk(chunk, &trace, scale);
            }
            let mut views = model.params.views_mut();
            clip_global_norm(&mut views, opts.clip_norm);
            optimizer.step(&mut views);
        }

        let train_loss = loss(&epoch_scores, &epoch_labels)? / epoch_scores.len().max(1) as f64;
        let train_auc = auc_rank(&epoch_scores, &epoch_labels).unwrap_or(0.5);
        metrics.push(MetricsRecord {
            epoch,
            split: "train".into(),
            loss: train_loss,
            auc: train_auc,
        });

        if let (Some(ho), Some(es)) = (&holdout, &opts.early_stop) {
            let (scores, labels) = model.predict_dataset(ho)?;
            let ho_loss = loss(&scores, &labels)? / scores.len().max(1) as f64;
            let ho_auc = auc_rank(&scores, &labels).unwrap_or(0.5);
            metrics.push(MetricsRecord {
                epoch,
                split: "holdout".into(),
                loss: ho_loss,
                auc: ho_auc,
            });
            let improved = best.as_ref().map(|(b, _)| ho_auc > *b).unwrap_or(true);
            if improved {
                best = Some((ho_auc, model.params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale > es.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, metrics))
}
