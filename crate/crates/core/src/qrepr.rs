//! Question representations: empirical difficulty levels, the linear /
//! quadratic feature matrices, and the convolutional fusion that turns a
//! question's embedding, mean skill embedding and two difficulty embeddings
//! into the final representation vector.
//!
//! The fusion uses eight 2x2 kernels on both the 4xd linear matrix M and the
//! 4x4 Gram matrix N, max-pools each feature map over its row axis, then
//! concatenates per kernel and projects. Forward and backward passes are
//! hand-written in f64 and verified against central finite differences.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{InteractionDataset, QMatrix};
use crate::error::{Error, Result};
use crate::graphembed::EmbeddingTable;

pub const N_KERNELS: usize = 8;
const KERNEL: usize = 2; // kernels are 2x2
const M_ROWS: usize = 4;

/// Empirical difficulty levels in {0..c}; level c is reserved for questions
/// (or skill sets) with fewer than `min_attempts` training attempts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifficultyIndex {
    /// level count c; usable levels are 0..c-1, c means "insufficient data"
    pub levels: usize,
    pub question_level: Vec<usize>,
    pub skill_level: Vec<usize>,
}

/// Bucket error rates from the training split only.
///
/// Question level: floor(c * error_rate) clamped to c-1, or c when the
/// question has fewer than `min_attempts` attempts. Skill level of a
/// question: floor(c * mean error rate of its skills), where each skill
/// pools every training attempt of questions containing it; skills with
/// fewer than `min_attempts` pooled attempts are skipped, and if none
/// remain the question falls back to level c.
pub fn compute_difficulty(
    train: &InteractionDataset,
    o_hat: &QMatrix,
    c: usize,
    min_attempts: u64,
) -> Result<DifficultyIndex> {
    if c == 0 {
        return Err(Error::InvalidArgument("difficulty level count must be positive".into()));
    }
    let nq = o_hat.n_questions();
    let ns = o_hat.n_skills();
    let mut q_attempts = vec![0u64; nq];
    let mut q_wrong = vec![0u64; nq];
    for seq in train.sequences.values() {
        for it in seq {
            let qi = it.question as usize;
            q_attempts[qi] += 1;
            if !it.correct {
                q_wrong[qi] += 1;
            }
        }
    }

    let mut s_attempts = vec![0u64; ns];
    let mut s_wrong = vec![0u64; ns];
    for qi in 0..nq {
        for &s in o_hat.skills_of(qi) {
            s_attempts[s as usize] += q_attempts[qi];
            s_wrong[s as usize] += q_wrong[qi];
        }
    }

    let bucket = |rate: f64| ((c as f64 * rate).floor() as usize).min(c - 1);
    let question_level: Vec<usize> = (0..nq)
        .map(|qi| {
            if q_attempts[qi] < min_attempts {
                c
            } else {
                bucket(q_wrong[qi] as f64 / q_attempts[qi] as f64)
            }
        })
        .collect();
    let skill_level: Vec<usize> = (0..nq)
        .map(|qi| {
            let rates: Vec<f64> = o_hat
                .skills_of(qi)
                .iter()
                .filter(|&&s| s_attempts[s as usize] >= min_attempts)
                .map(|&s| s_wrong[s as usize] as f64 / s_attempts[s as usize] as f64)
                .collect();
            if rates.is_empty() {
                c
            } else {
                bucket(rates.iter().sum::<f64>() / rates.len() as f64)
            }
        })
        .collect();

    Ok(DifficultyIndex {
        levels: c,
        question_level,
        skill_level,
    })
}

pub fn save_difficulty(diff: &DifficultyIndex, question_ids: &[String], path: &Path) -> Result<()> {
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    out.write_all(format!("question_id,question_level,skill_level,levels={}\n", diff.levels).as_bytes())
        .map_err(|e| Error::io(path, e))?;
    for (qi, label) in question_ids.iter().enumerate() {
        out.write_all(
            format!("{label},{},{}\n", diff.question_level[qi], diff.skill_level[qi]).as_bytes(),
        )
        .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_difficulty(path: &Path, question_ids: &[String]) -> Result<DifficultyIndex> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty difficulty file"))?
        .map_err(|e| Error::io(path, e))?;
    let levels: usize = header
        .rsplit("levels=")
        .next()
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::format(path, "difficulty header missing levels="))?;
    let mut question_level = vec![usize::MAX; question_ids.len()];
    let mut skill_level = vec![usize::MAX; question_ids.len()];
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split(',');
        let label = parts.next().unwrap_or("");
        let qi = question_ids
            .iter()
            .position(|q| q == label)
            .ok_or_else(|| Error::format(path, format!("unknown question `{label}`")))?;
        let ql: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(path, "bad question level"))?;
        let sl: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(path, "bad skill level"))?;
        question_level[qi] = ql;
        skill_level[qi] = sl;
    }
    if question_level.iter().any(|&l| l == usize::MAX) {
        return Err(Error::format(path, "difficulty file does not cover every question"));
    }
    Ok(DifficultyIndex {
        levels,
        question_level,
        skill_level,
    })
}

/// The fusion parameters: eight 2x2 kernels (with biases) for M and for N,
/// and the output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub d: usize,
    pub d_prime: usize,
    /// 8 kernels * 2 * 2, kernel-major
    pub kernels_m: Vec<f64>,
    pub bias_m: Vec<f64>,
    pub kernels_n: Vec<f64>,
    pub bias_n: Vec<f64>,
    /// (8 * (d + 2)) x d_prime, row-major
    pub w_o: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(d: usize, d_prime: usize) -> Self {
        ConvParams {
            d,
            d_prime,
            kernels_m: vec![0.0; N_KERNELS * KERNEL * KERNEL],
            bias_m: vec![0.0; N_KERNELS],
            kernels_n: vec![0.0; N_KERNELS * KERNEL * KERNEL],
            bias_n: vec![0.0; N_KERNELS],
            w_o: vec![0.0; N_KERNELS * (d + 2) * d_prime],
        }
    }

    /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
    pub fn init(d: usize, d_prime: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = ConvParams::zeros(d, d_prime);
        let kernel_bound = 1.0 / ((KERNEL * KERNEL) as f64).sqrt();
        let wo_bound = 1.0 / ((N_KERNELS * (d + 2)) as f64).sqrt();
        let fill = |v: &mut [f64], bound: f64, rng: &mut ChaCha8Rng| {
            for x in v {
                *x = rng.random_range(-bound..bound);
            }
        };
        fill(&mut p.kernels_m, kernel_bound, rng);
        fill(&mut p.bias_m, kernel_bound, rng);
        fill(&mut p.kernels_n, kernel_bound, rng);
        fill(&mut p.bias_n, kernel_bound, rng);
        fill(&mut p.w_o, wo_bound, rng);
        p
    }

    pub fn flat_len(&self) -> usize {
        N_KERNELS * (self.d + 2)
    }
}

/// Gradient accumulators mirroring [`ConvParams`].
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub kernels_m: Vec<f64>,
    pub bias_m: Vec<f64>,
    pub kernels_n: Vec<f64>,
    pub bias_n: Vec<f64>,
    pub w_o: Vec<f64>,
}

impl ConvGrads {
    pub fn zeros(p: &ConvParams) -> Self {
        ConvGrads {
            kernels_m: vec![0.0; p.kernels_m.len()],
            bias_m: vec![0.0; p.bias_m.len()],
            kernels_n: vec![0.0; p.kernels_n.len()],
            bias_n: vec![0.0; p.bias_n.len()],
            w_o: vec![0.0; p.w_o.len()],
        }
    }
}

/// Linear features M (rows q, s_bar, d_q, d_s) and their Gram matrix N.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrices {
    pub d: usize,
    /// 4 x d row-major
    pub m: Vec<f64>,
    /// 4 x 4 row-major
    pub n: Vec<f64>,
}

pub fn build_feature_matrices(
    q: &[f64],
    s_bar: &[f64],
    d_q: &[f64],
    d_s: &[f64],
) -> Result<FeatureMatrices> {
    let d = q.len();
    if s_bar.len() != d || d_q.len() != d || d_s.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "feature rows must share dimension {d}, got {}/{}/{}",
            s_bar.len(),
            d_q.len(),
            d_s.len()
        )));
    }
    let mut m = Vec::with_capacity(M_ROWS * d);
    m.extend_from_slice(q);
    m.extend_from_slice(s_bar);
    m.extend_from_slice(d_q);
    m.extend_from_slice(d_s);
    let mut n = vec![0.0; M_ROWS * M_ROWS];
    for i in 0..M_ROWS {
        for j in 0..M_ROWS {
            n[i * M_ROWS + j] = crate::matrix::dot(&m[i * d..(i + 1) * d], &m[j * d..(j + 1) * d]);
        }
    }
    Ok(FeatureMatrices { d, m, n })
}

/// Propagate dM/dN of the fused output back onto the four input rows,
/// folding the Gram-matrix path into the row gradients.
pub fn feature_matrices_backward(
    feat: &FeatureMatrices,
    d_m: &[f64],
    d_n: &[f64],
) -> [Vec<f64>; 4] {
    let d = feat.d;
    let mut rows: [Vec<f64>; 4] = std::array::from_fn(|i| d_m[i * d..(i + 1) * d].to_vec());
    for a in 0..M_ROWS {
        for b in 0..M_ROWS {
            let g = d_n[a * M_ROWS + b] + d_n[b * M_ROWS + a];
            if g != 0.0 {
                let mb = &feat.m[b * d..(b + 1) * d];
                for k in 0..d {
                    rows[a][k] += g * mb[k];
                }
            }
        }
    }
    rows
}

/// Cached forward intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub struct ConvTrace {
    /// flattened per-kernel concat(l_m, l_n), length 8*(d+2)
    pub z: Vec<f64>,
    /// argmax row of each pooled column of the M maps, 8*(d-1)
    argmax_m: Vec<u8>,
    /// argmax row of each pooled column of the N maps, 8*3
    argmax_n: Vec<u8>,
}

/// Valid 2D convolution of one 2x2 kernel over a `rows x cols` input,
/// followed by a max-pool over the (rows-1)-row axis. Returns pooled values
/// and argmax rows per output column. Ties keep the lowest row.
fn conv_pool_column(
    input: &[f64],
    rows: usize,
    cols: usize,
    kernel: &[f64],
    bias: f64,
    pooled: &mut [f64],
    argmax: &mut [u8],
) {
    let out_rows = rows - KERNEL + 1;
    let out_cols = cols - KERNEL + 1;
    for j in 0..out_cols {
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0u8;
        for i in 0..out_rows {
            let mut acc = bias;
            for u in 0..KERNEL {
                for v in 0..KERNEL {
                    acc += kernel[u * KERNEL + v] * input[(i + u) * cols + (j + v)];
                }
            }
            if acc > best {
                best = acc;
                best_i = i as u8;
            }
        }
        pooled[j] = best;
        argmax[j] = best_i;
    }
}

/// Convolve M and N with the eight kernels, max-pool each feature map over
/// its row axis, concatenate per kernel and project with W_O.
pub fn conv_fuse(feat: &FeatureMatrices, p: &ConvParams) -> Result<(Vec<f64>, ConvTrace)> {
    let d = feat.d;
    if d != p.d {
        return Err(Error::DimensionMismatch(format!(
            "features have d={d} but params expect d={}",
            p.d
        )));
    }
    if d < KERNEL {
        return Err(Error::DimensionMismatch(format!("d={d} is too small to convolve")));
    }
    let lm_cols = d - 1;
    let ln_cols = M_ROWS - 1;
    let seg = d + 2;

    let mut z = vec![0.0; N_KERNELS * seg];
    let mut argmax_m = vec![0u8; N_KERNELS * lm_cols];
    let mut argmax_n = vec![0u8; N_KERNELS * ln_cols];
    for k in 0..N_KERNELS {
        let (zm, zn) = z[k * seg..(k + 1) * seg].split_at_mut(lm_cols);
        conv_pool_column(
            &feat.m,
            M_ROWS,
            d,
            &p.kernels_m[k * 4..(k + 1) * 4],
            p.bias_m[k],
            zm,
            &mut argmax_m[k * lm_cols..(k + 1) * lm_cols],
        );
        conv_pool_column(
            &feat.n,
            M_ROWS,
            M_ROWS,
            &p.kernels_n[k * 4..(k + 1) * 4],
            p.bias_n[k],
            zn,
            &mut argmax_n[k * ln_cols..(k + 1) * ln_cols],
        );
    }

    let mut q_tilde = vec![0.0; p.d_prime];
    for (r, &zr) in z.iter().enumerate() {
        if zr != 0.0 {
            let row = &p.w_o[r * p.d_prime..(r + 1) * p.d_prime];
            for (o, &w) in row.iter().enumerate() {
                q_tilde[o] += zr * w;
            }
        }
    }
    Ok((
        q_tilde,
        ConvTrace {
            z,
            argmax_m,
            argmax_n,
        },
    ))
}

fn conv_backward_column(
    input: &[f64],
    cols: usize,
    kernel: &[f64],
    d_pooled: &[f64],
    argmax: &[u8],
    d_kernel: &mut [f64],
    d_bias: &mut f64,
    d_input: &mut [f64],
) {
    for (j, &g) in d_pooled.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let i = argmax[j] as usize;
        *d_bias += g;
        for u in 0..KERNEL {
            for v in 0..KERNEL {
                d_kernel[u * KERNEL + v] += g * input[(i + u) * cols + (j + v)];
                d_input[(i + u) * cols + (j + v)] += g * kernel[u * KERNEL + v];
            }
        }
    }
}

/// Backward pass of [`conv_fuse`]: accumulates parameter gradients into
/// `grads` and returns (dM, dN).
pub fn conv_fuse_backward(
    feat: &FeatureMatrices,
    p: &ConvParams,
    trace: &ConvTrace,
    d_q_tilde: &[f64],
    grads: &mut ConvGrads,
) -> (Vec<f64>, Vec<f64>) {
    let d = feat.d;
    let lm_cols = d - 1;
    let ln_cols = M_ROWS - 1;
    let seg = d + 2;

    let mut d_z = vec![0.0; trace.z.len()];
    for (r, dz) in d_z.iter_mut().enumerate() {
        let row = &p.w_o[r * p.d_prime..(r + 1) * p.d_prime];
        *dz = crate::matrix::dot(row, d_q_tilde);
        let grow = &mut grads.w_o[r * p.d_prime..(r + 1) * p.d_prime];
        for (o, &g) in d_q_tilde.iter().enumerate() {
            grow[o] += trace.z[r] * g;
        }
    }

    let mut d_m = vec![0.0; M_ROWS * d];
    let mut d_n = vec![0.0; M_ROWS * M_ROWS];
    for k in 0..N_KERNELS {
        let (dzm, dzn) = d_z[k * seg..(k + 1) * seg].split_at(lm_cols);
        conv_backward_column(
            &feat.m,
            d,
            &p.kernels_m[k * 4..(k + 1) * 4],
            dzm,
            &trace.argmax_m[k * lm_cols..(k + 1) * lm_cols],
            &mut grads.kernels_m[k * 4..(k + 1) * 4],
            &mut grads.bias_m[k],
            &mut d_m,
        );
        conv_backward_column(
            &feat.n,
            M_ROWS,
            &p.kernels_n[k * 4..(k + 1) * 4],
            dzn,
            &trace.argmax_n[k * ln_cols..(k + 1) * ln_cols],
            &mut grads.kernels_n[k * 4..(k + 1) * 4],
            &mut grads.bias_n[k],
            &mut d_n,
        );
    }
    (d_m, d_n)
}

/// Arithmetic mean of the skill embeddings a question requires.
pub fn mean_skill_embedding(table: &EmbeddingTable, skills: &[u32]) -> Vec<f64> {
    let mut out = vec![0.0; table.dim];
    if skills.is_empty() {
        return out;
    }
    for &s in skills {
        crate::matrix::axpy(1.0, table.skill(s as usize), &mut out);
    }
    let inv = 1.0 / skills.len() as f64;
    for x in &mut out {
        *x *= inv;
    }
    out
}

/// Composite question representation: look up the question embedding,
/// average its skill embeddings under the refined Q-matrix, pick the two
/// difficulty embedding rows, build M and N, and fuse.
///
/// `d_matrix` is the (c+1) x d difficulty embedding, row-major.
pub fn question_representation(
    question: usize,
    table: &EmbeddingTable,
    o_hat: &QMatrix,
    difficulty: &DifficultyIndex,
    d_matrix: &[f64],
    p: &ConvParams,
) -> Result<Vec<f64>> {
    let feat = question_features(question, table, o_hat, difficulty, d_matrix)?;
    Ok(conv_fuse(&feat, p)?.0)
}

/// The M/N features of one question (shared by forward and backward paths).
pub fn question_features(
    question: usize,
    table: &EmbeddingTable,
    o_hat: &QMatrix,
    difficulty: &DifficultyIndex,
    d_matrix: &[f64],
) -> Result<FeatureMatrices> {
    let d = table.dim;
    if question >= o_hat.n_questions() {
        return Err(Error::UnknownNode(format!("question {question}")));
    }
    let q = table.question(question);
    let s_bar = mean_skill_embedding(table, o_hat.skills_of(question));
    let ql = difficulty.question_level[question];
    let sl = difficulty.skill_level[question];
    let d_q = &d_matrix[ql * d..(ql + 1) * d];
    let d_s = &d_matrix[sl * d..(sl + 1) * d];
    build_feature_matrices(q, &s_bar, d_q, d_s)
}
