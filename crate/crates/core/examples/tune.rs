// scratch: tuning run for the acceptance-critical numerics (deleted before ship)
use std::sync::Arc;
use std::time::Instant;

use plansearch_core::chunking::ChunkingConfig;
use plansearch_core::embedding::{HashEmbedder, ProjectedEmbedder, ProjectionHead};
use plansearch_core::eval::synthetic::{keyword_suite, sts_benchmark};
use plansearch_core::eval::{run_ablation, sts_spearman, Variant};
use plansearch_core::index::build_index;
use plansearch_core::keywords::KeywordsConfig;
use plansearch_core::search::SearchConfig;
use plansearch_core::training::{frozen_distribution, train, OptimizerKind, TrainConfig};
use plansearch_core::TextEmbedder;

fn main() {
    let t0 = Instant::now();

    // ---- acceptance 3: STS margin ----
    for dims in [48usize, 64] {
        for tau in [0.1, 0.3] {
            let t = Instant::now();
            let base = Arc::new(HashEmbedder::new(dims).unwrap());
            let bench = sts_benchmark(500, 200, 42);
            let baseline = sts_spearman(&bench.heldout, &*base).unwrap();
            let cfg = TrainConfig {
                tau,
                lambda: 0.1,
                learning_rate: 1e-2,
                epochs: 20,
                batch_size: 32,
                seed: 42,
                optimizer: OptimizerKind::Sgd,
            };
            let frozen = ProjectionHead::identity(dims);
            let report = train(&bench.train_pairs, &*base, &frozen, &cfg).unwrap();
            let tuned = ProjectedEmbedder::new(base.clone(), report.head).unwrap();
            let after = sts_spearman(&bench.heldout, &tuned).unwrap();
            println!(
                "STS dims={dims} tau={tau}: baseline={baseline:.4} trained={after:.4} margin={:+.4} loss {:.4}->{:.4} ({:.1?})",
                after - baseline,
                report.epoch_mean_losses.first().unwrap(),
                report.epoch_mean_losses.last().unwrap(),
                t.elapsed()
            );
        }
    }

    // ---- acceptance 4: KL anchoring ----
    {
        let dims = 48;
        let base = Arc::new(HashEmbedder::new(dims).unwrap());
        let bench = sts_benchmark(500, 200, 42);
        let frozen = ProjectionHead::identity(dims);
        // probe: 50 candidate texts + 10 probe queries
        let probe_bench = sts_benchmark(60, 0, 43);
        let cand_texts: Vec<&str> = probe_bench.train_pairs[..50]
            .iter()
            .map(|p| p.query_text.as_str())
            .collect();
        let probe_queries: Vec<&str> = probe_bench.train_pairs[50..60]
            .iter()
            .map(|p| p.query_text.as_str())
            .collect();

        for (lambda, lr, tau) in [(1e3, 1e-2, 0.1), (0.0, 1e-2, 0.1), (1e3, 1e-3, 0.1), (0.0, 1e-3, 0.1)] {
            let cfg = TrainConfig {
                tau,
                lambda,
                learning_rate: lr,
                epochs: 20,
                batch_size: 32,
                seed: 42,
                optimizer: OptimizerKind::Sgd,
            };
            match train(&bench.train_pairs, &*base, &frozen, &cfg) {
                Ok(report) => {
                    let tuned = ProjectedEmbedder::new(base.clone(), report.head).unwrap();
                    let mut max_tv: f64 = 0.0;
                    for q in &probe_queries {
                        let qf = base.embed(q).unwrap();
                        let cf: Vec<_> =
                            cand_texts.iter().map(|t| base.embed(t).unwrap()).collect();
                        let p = frozen_distribution(&qf, &cf, tau).unwrap();
                        let qt = tuned.embed(q).unwrap();
                        let ct: Vec<_> =
                            cand_texts.iter().map(|t| tuned.embed(t).unwrap()).collect();
                        let q_dist = frozen_distribution(&qt, &ct, tau).unwrap();
                        max_tv = max_tv.max(p.total_variation(&q_dist).unwrap());
                    }
                    println!("KL lambda={lambda} lr={lr} tau={tau}: max TV = {max_tv:.5}");
                }
                Err(e) => println!("KL lambda={lambda} lr={lr} tau={tau}: DIVERGED: {e}"),
            }
        }
    }

    // ---- acceptance 6: ablation ordering ----
    for dims in [32usize, 48, 64, 128] {
        let t = Instant::now();
        let chunking = ChunkingConfig::new([120, 240], 24).unwrap();
        let suite = keyword_suite(100, 50, 42, &chunking).unwrap();
        let kw = KeywordsConfig {
            k: 8,
            ..KeywordsConfig::default()
        };
        let base: Arc<dyn TextEmbedder> = Arc::new(HashEmbedder::new(dims).unwrap());
        let index = build_index(&suite.docs, &chunking, &kw, &*base).unwrap();
        let report = run_ablation(
            &index,
            base,
            None,
            &suite.queries,
            &suite.judgments,
            &SearchConfig::default(),
            &Variant::ALL,
        )
        .unwrap();
        println!("--- dims={dims}, {} chunks ---", index.len());
        print!("{}", report.render_table());
        println!("ablation took {:.1?}", t.elapsed());
    }

    println!("total {:.1?}", t0.elapsed());
}
