//! Model checkpoints: a single binary file with magic bytes `PQRL`, a u32
//! format version, then named tensors (name length, name, shape rank, dims,
//! 64-bit little-endian floats). The checkpoint carries every model tensor
//! plus the difficulty levels, the refined Q-matrix entries and the scalar
//! hyperparameters, so a saved model can be evaluated without re-running the
//! upstream pipeline stages.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::dataio::QMatrix;
use crate::error::{Error, Result};
use crate::qrepr::{ConvGrads, ConvParams, DifficultyIndex};

use super::{KtConfig, KtModel, ModelParams, Tensor};

pub const MAGIC: &[u8; 4] = b"PQRL";
pub const VERSION: u32 = 1;

fn write_tensor(
    out: &mut impl Write,
    path: &Path,
    name: &str,
    shape: &[usize],
    data: &[f64],
) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    out.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
    out.write_all(name.as_bytes()).map_err(io_err)?;
    out.write_all(&(shape.len() as u32).to_le_bytes()).map_err(io_err)?;
    for &dim in shape {
        out.write_all(&(dim as u64).to_le_bytes()).map_err(io_err)?;
    }
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    for &v in data {
        out.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

pub fn save_checkpoint(model: &KtModel, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    out.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
    out.write_all(&VERSION.to_le_bytes())
        .map_err(|e| Error::io(path, e))?;

    let mut result = Ok(());
    model.params.for_each_tensor(|name, shape, data| {
        if result.is_ok() {
            result = write_tensor(&mut out, path, name, &shape, data);
        }
    });
    result?;

    let nq = model.o_hat.n_questions();
    let ns = model.o_hat.n_skills();
    let q_levels: Vec<f64> = model.difficulty.question_level.iter().map(|&l| l as f64).collect();
    let s_levels: Vec<f64> = model.difficulty.skill_level.iter().map(|&l| l as f64).collect();
    write_tensor(&mut out, path, "difficulty.question_level", &[nq], &q_levels)?;
    write_tensor(&mut out, path, "difficulty.skill_level", &[nq], &s_levels)?;
    let entries: Vec<f64> = (0..nq)
        .flat_map(|q| (0..ns).map(move |s| (q, s)))
        .map(|(q, s)| if model.o_hat.get(q, s) { 1.0 } else { 0.0 })
        .collect();
    write_tensor(&mut out, path, "qmatrix.entries", &[nq, ns], &entries)?;

    let cfg = &model.params.cfg;
    let hparams = vec![
        cfg.d as f64,
        cfg.d_prime as f64,
        cfg.hidden as f64,
        cfg.levels as f64,
        cfg.seq_len as f64,
        cfg.lambda,
        cfg.et_cap,
        cfg.time_unit_secs,
        cfg.bias_inside_tanh as u8 as f64,
        cfg.fine_tune_embeddings as u8 as f64,
        nq as f64,
        ns as f64,
    ];
    write_tensor(&mut out, path, "hparams", &[hparams.len()], &hparams)?;
    out.flush().map_err(|e| Error::io(path, e))
}

type RawTensors = HashMap<String, (Vec<usize>, Vec<f64>)>;

fn read_tensors(path: &Path) -> Result<RawTensors> {
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::format(path, "not a model checkpoint (bad magic)"));
    }
    let mut u32buf = [0u8; 4];
    file.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }

    let mut tensors = RawTensors::new();
    loop {
        match file.read_exact(&mut u32buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::io(path, e)),
        }
        let name_len = u32::from_le_bytes(u32buf) as usize;
        let mut name = vec![0u8; name_len];
        file.read_exact(&mut name).map_err(|e| Error::io(path, e))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::format(path, "tensor name is not UTF-8"))?;
        file.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        let rank = u32::from_le_bytes(u32buf) as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut u64buf = [0u8; 8];
        for _ in 0..rank {
            file.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
            shape.push(u64::from_le_bytes(u64buf) as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            file.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
            data.push(f64::from_le_bytes(u64buf));
        }
        tensors.insert(name, (shape, data));
    }
    Ok(tensors)
}

fn take(tensors: &mut RawTensors, path: &Path, name: &str) -> Result<Tensor> {
    let (shape, data) = tensors
        .remove(name)
        .ok_or_else(|| Error::format(path, format!("checkpoint is missing tensor `{name}`")))?;
    let grad = vec![0.0; data.len()];
    Ok(Tensor { shape, data, grad })
}

/// Load a checkpoint and rebuild the model. The caller supplies the refined
/// Q-matrix (for question/skill labels); its entries must match the ones
/// stored in the checkpoint.
pub fn load_checkpoint(path: &Path, o_hat: &QMatrix) -> Result<KtModel> {
    let mut tensors = read_tensors(path)?;

    let (_, hp) = tensors
        .remove("hparams")
        .ok_or_else(|| Error::format(path, "checkpoint is missing tensor `hparams`"))?;
    if hp.len() != 12 {
        return Err(Error::format(path, "bad hparams tensor"));
    }
    let cfg = KtConfig {
        d: hp[0] as usize,
        d_prime: hp[1] as usize,
        hidden: hp[2] as usize,
        levels: hp[3] as usize,
        seq_len: hp[4] as usize,
        lambda: hp[5],
        et_cap: hp[6],
        time_unit_secs: hp[7],
        bias_inside_tanh: hp[8] != 0.0,
        fine_tune_embeddings: hp[9] != 0.0,
    };
    let (nq, ns) = (hp[10] as usize, hp[11] as usize);
    if nq != o_hat.n_questions() || ns != o_hat.n_skills() {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint was trained on {nq} questions x {ns} skills, Q-matrix has {} x {}",
            o_hat.n_questions(),
            o_hat.n_skills()
        )));
    }

    let (_, entries) = tensors
        .remove("qmatrix.entries")
        .ok_or_else(|| Error::format(path, "checkpoint is missing tensor `qmatrix.entries`"))?;
    for q in 0..nq {
        for s in 0..ns {
            let stored = entries[q * ns + s] != 0.0;
            if stored != o_hat.get(q, s) {
                return Err(Error::InvalidState(format!(
                    "checkpoint Q-matrix disagrees with the provided one at ({q}, {s})"
                )));
            }
        }
    }

    let (_, ql) = tensors
        .remove("difficulty.question_level")
        .ok_or_else(|| Error::format(path, "missing tensor `difficulty.question_level`"))?;
    let (_, sl) = tensors
        .remove("difficulty.skill_level")
        .ok_or_else(|| Error::format(path, "missing tensor `difficulty.skill_level`"))?;
    let difficulty = DifficultyIndex {
        levels: cfg.levels,
        question_level: ql.iter().map(|&v| v as usize).collect(),
        skill_level: sl.iter().map(|&v| v as usize).collect(),
    };

    let conv = ConvParams {
        d: cfg.d,
        d_prime: cfg.d_prime,
        kernels_m: take(&mut tensors, path, "conv.kernels_m")?.data,
        bias_m: take(&mut tensors, path, "conv.bias_m")?.data,
        kernels_n: take(&mut tensors, path, "conv.kernels_n")?.data,
        bias_n: take(&mut tensors, path, "conv.bias_n")?.data,
        w_o: take(&mut tensors, path, "conv.w_o")?.data,
    };
    let conv_grads = ConvGrads::zeros(&conv);

    let params = ModelParams {
        w_lstm: take(&mut tensors, path, "lstm.w")?,
        b_lstm: take(&mut tensors, path, "lstm.b")?,
        e_r: take(&mut tensors, path, "e_r")?,
        w_et: take(&mut tensors, path, "w_et")?,
        b_et: take(&mut tensors, path, "b_et")?,
        log_decay: take(&mut tensors, path, "log_decay")?,
        w_s: take(&mut tensors, path, "head.w_s")?,
        b_s: take(&mut tensors, path, "head.b_s")?,
        w_p: take(&mut tensors, path, "head.w_p")?,
        b_p: take(&mut tensors, path, "head.b_p")?,
        conv,
        conv_grads,
        d_matrix: take(&mut tensors, path, "difficulty.embedding")?,
        emb_q: take(&mut tensors, path, "emb.question")?,
        emb_s: take(&mut tensors, path, "emb.skill")?,
        cfg,
    };

    Ok(KtModel {
        params,
        o_hat: o_hat.clone(),
        difficulty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphembed::{generate_metapaths, train_skipgram, SkipGramConfig};
    use crate::ktmodel::KtConfig;
    use crate::qrefine::build_relation_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model_for_roundtrip() -> KtModel {
        let q = QMatrix::from_pairs(
            &[
                ("q0".into(), "s0".into()),
                ("q1".into(), "s1".into()),
                ("q1".into(), "s0".into()),
            ],
            None,
        );
        let g = build_relation_graph(&q).unwrap();
        let walks = generate_metapaths(&g, 5, 4, 1).unwrap();
        let (table, _) = train_skipgram(
            &g,
            &walks,
            &SkipGramConfig {
                dim: 4,
                epochs: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = KtConfig {
            d: 4,
            d_prime: 6,
            hidden: 5,
            levels: 3,
            seq_len: 50,
            ..Default::default()
        };
        let difficulty = DifficultyIndex {
            levels: 3,
            question_level: vec![0, 3],
            skill_level: vec![1, 2],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = ModelParams::init(cfg, &table, &mut rng).unwrap();
        KtModel {
            params,
            o_hat: q,
            difficulty,
        }
    }

    #[test]
    fn roundtrip_preserves_every_tensor() {
        let model = model_for_roundtrip();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_checkpoint(&model, &path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"PQRL");

        let back = load_checkpoint(&path, &model.o_hat).unwrap();
        assert_eq!(model.params.cfg, back.params.cfg);
        assert_eq!(model.params.w_lstm.data, back.params.w_lstm.data);
        assert_eq!(model.params.conv.w_o, back.params.conv.w_o);
        assert_eq!(model.params.d_matrix.data, back.params.d_matrix.data);
        assert_eq!(model.params.emb_q.data, back.params.emb_q.data);
        assert_eq!(model.difficulty, back.difficulty);
    }

    #[test]
    fn mismatched_qmatrix_is_rejected() {
        let model = model_for_roundtrip();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_checkpoint(&model, &path).unwrap();

        let other = QMatrix::from_pairs(
            &[("q0".into(), "s0".into()), ("q1".into(), "s1".into())],
            None,
        );
        assert!(load_checkpoint(&path, &other).is_err());
    }

    #[test]
    fn garbage_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        let model = model_for_roundtrip();
        assert!(load_checkpoint(&path, &model.o_hat).is_err());
    }
}
