//! Scratch end-to-end gradient check (will be folded into the acceptance
//! suite).

use pqrlka::dataio::{Interaction, InteractionDataset, QMatrix};
use pqrlka::graphembed::{generate_metapaths, train_skipgram, SkipGramConfig};
use pqrlka::ktmodel::{KtConfig, KtModel, ModelParams};
use pqrlka::qrefine::build_relation_graph;
use pqrlka::qrepr::DifficultyIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn toy() -> (KtModel, InteractionDataset) {
    let q = QMatrix::from_pairs(
        &[
            ("q0".into(), "s0".into()),
            ("q1".into(), "s0".into()),
            ("q1".into(), "s1".into()),
            ("q2".into(), "s1".into()),
        ],
        None,
    );
    let g = build_relation_graph(&q).unwrap();
    let walks = generate_metapaths(&g, 5, 6, 11).unwrap();
    let (table, _) = train_skipgram(
        &g,
        &walks,
        &SkipGramConfig {
            dim: 4,
            epochs: 2,
            seed: 11,
            ..Default::default()
        },
    )
    .unwrap();
    let cfg = KtConfig {
        d: 4,
        d_prime: 5,
        hidden: 4,
        levels: 3,
        seq_len: 50,
        fine_tune_embeddings: true,
        ..Default::default()
    };
    let difficulty = DifficultyIndex {
        levels: 3,
        question_level: vec![0, 2, 3],
        skill_level: vec![1, 0, 2],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let params = ModelParams::init(cfg, &table, &mut rng).unwrap();
    let model = KtModel {
        params,
        o_hat: q,
        difficulty,
    };

    let seq = vec![
        Interaction {
            question: 0,
            correct: true,
            timestamp: 0,
            elapsed: 30.0,
        },
        Interaction {
            question: 1,
            correct: false,
            timestamp: 7_200,
            elapsed: 700.0,
        },
        Interaction {
            question: 2,
            correct: true,
            timestamp: 10_800,
            elapsed: 45.0,
        },
    ];
    let mut sequences = BTreeMap::new();
    sequences.insert("l0".to_string(), seq);
    let ds = InteractionDataset {
        sequences,
        question_labels: model.o_hat.question_ids().to_vec(),
        skill_count: 2,
        has_elapsed: true,
    };
    (model, ds)
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let (mut model, ds) = toy();
    model.params.zero_grads();
    model.accumulate_gradients(&ds, 1.0).unwrap();

    // copy out analytic grads
    let analytic: Vec<(String, Vec<f64>)> = {
        let views = model.params.views_mut();
        views
            .iter()
            .map(|v| (v.name.to_string(), v.grad.to_vec()))
            .collect()
    };

    let h = 1e-5;
    let n_tensors = analytic.len();
    let mut worst_overall: f64 = 0.0;
    for ti in 0..n_tensors {
        let len = analytic[ti].1.len();
        let mut numeric = vec![0.0; len];
        for k in 0..len {
            let orig = {
                let mut views = model.params.views_mut();
                let orig = views[ti].data[k];
                views[ti].data[k] = orig + h;
                orig
            };
            let mut probe = model.clone();
            probe.params.zero_grads();
            let plus = probe.accumulate_gradients(&ds, 0.0).unwrap();
            {
                let mut views = model.params.views_mut();
                views[ti].data[k] = orig - h;
            }
            let mut probe = model.clone();
            probe.params.zero_grads();
            let minus = probe.accumulate_gradients(&ds, 0.0).unwrap();
            {
                let mut views = model.params.views_mut();
                views[ti].data[k] = orig;
            }
            numeric[k] = (plus - minus) / (2.0 * h);
        }
        let err = pqrlka::gradcheck::max_rel_err(&analytic[ti].1, &numeric);
        println!("tensor {:>24}: rel err {err:.3e}", analytic[ti].0);
        if err > 1e-4 {
            // dump the worst coordinates
            let mut worst: Vec<(f64, usize)> = (0..len)
                .map(|k| {
                    let a = analytic[ti].1[k];
                    let n = numeric[k];
                    let scale = a.abs().max(n.abs());
                    if scale < 1e-10 {
                        (0.0, k)
                    } else {
                        ((a - n).abs() / scale, k)
                    }
                })
                .collect();
            worst.sort_by(|a, b| b.0.total_cmp(&a.0));
            for &(e, k) in worst.iter().take(5) {
                println!(
                    "  [{k}] analytic {:+.6e} numeric {:+.6e} rel {e:.3e}",
                    analytic[ti].1[k], numeric[k]
                );
            }
        }
        worst_overall = worst_overall.max(err);
    }
    println!("worst overall: {worst_overall:.3e}");
    assert!(worst_overall < 1e-4, "worst rel err {worst_overall}");
}
