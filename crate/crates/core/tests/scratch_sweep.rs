//! Scratch: generator parameter grid + threshold calibration for KG
//! recovery (to be frozen as a fixture).

use pqrlka::dataio::filter_dataset;
use pqrlka::prereq::{binarize_threshold, directionalize, relation_scores, KgMethod};
use pqrlka::synth::{generate_synthetic, kg_recovery_metrics, SynthConfig};

fn best_f1_for(cfg: &SynthConfig) -> (f64, f64, usize) {
    let (ds, q, truth) = generate_synthetic(cfg).unwrap();
    let ds = filter_dataset(&ds, &q, 10);
    let scores = relation_scores(&ds, &q, KgMethod::KappaAdj, 5).unwrap();
    let directed = directionalize(&scores);
    let mut best = (0.0f64, 0.0f64, 0usize);
    for i in 0..80 {
        let threshold = 0.02 * i as f64;
        let kg = binarize_threshold(&directed, threshold);
        let (_, _, f1) = kg_recovery_metrics(&kg, &truth).unwrap();
        if f1 > best.0 {
            best = (f1, threshold, kg.n_edges());
        }
    }
    best
}

#[test]
fn grid_generator_params() {
    for init in [0.4, 0.45, 0.5, 0.55, 0.6] {
        for lr in [0.2, 0.25, 0.3, 0.35, 0.4] {
            let mut line = format!("init {init:.2} lr {lr:.2}:");
            for seed in [1u64, 2, 3] {
                let cfg = SynthConfig {
                    learning_rate_per_practice: lr,
                    init_mastery: init,
                    seed,
                    ..Default::default()
                };
                let (f1, th, edges) = best_f1_for(&cfg);
                line += &format!("  s{seed} f1 {f1:.3}@{th:.2}({edges}e)");
            }
            println!("{line}");
        }
    }
}
