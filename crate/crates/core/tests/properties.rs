//! Property-based invariants across modules.

mod common;

use std::collections::HashSet;

use bankaug::augment::{class_quotas, filter_synthetic};
use bankaug::bank::{build_bank, normalize, read_vectors, remove_overlap, write_vectors, EmbeddingMatrix};
use bankaug::classifier::{softmax, SoftLabel, SyntheticExample};
use bankaug::embed::{hard_negative, triplet_loss, TrainingTriple};
use bankaug::index::{quantize, quantize_row, FlatIndex};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn unit(v: &[f32]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn rows(dim: usize) -> impl Strategy<Value = Vec<Option<Vec<f32>>>> {
    prop::collection::vec(prop::option::weighted(0.85, nonzero_vec(dim).prop_map(|v| unit(&v))), 1..40)
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["The", "the", "cat", "Cat", "sat", "on", "mat", "É", "é"]), 1..5)
        .prop_map(|w| w.join(if w.len() % 2 == 0 { " " } else { "  " }))
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 256,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn vector_file_round_trip(rows in rows(5), int8 in any::<bool>()) {
        let m = EmbeddingMatrix::from_rows(5, &rows).unwrap();
        let m = if int8 { quantize(&m).unwrap() } else { m };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vec");
        write_vectors(&m, &path).unwrap();
        let back = read_vectors(&path).unwrap();
        prop_assert_eq!(back.count(), m.count());
        prop_assert_eq!(back.dtype(), m.dtype());
        for i in 0..m.count() {
            prop_assert_eq!(back.get(i), m.get(i));
            prop_assert_eq!(back.is_null(i), rows[i].is_none());
        }
    }

    #[test]
    fn dedup_is_idempotent(sents in prop::collection::vec(sentence(), 0..30)) {
        let (bank, stats) = build_bank(&sents, "p");
        prop_assert_eq!(stats.seen, sents.len());
        prop_assert_eq!(stats.kept + stats.duplicates, stats.seen);
        let texts: Vec<String> = bank.texts().map(str::to_string).collect();
        let distinct: HashSet<String> = sents.iter().map(|s| normalize(s)).collect();
        prop_assert_eq!(texts.len(), distinct.len());
        let (again, stats2) = build_bank(&texts, "p");
        prop_assert_eq!(stats2.duplicates, 0);
        prop_assert_eq!(again.texts().collect::<Vec<_>>(), texts.iter().map(String::as_str).collect::<Vec<_>>());
    }

    #[test]
    fn overlap_removal_is_sound(
        sents in prop::collection::vec(sentence(), 1..30),
        test in prop::collection::vec(sentence(), 0..6),
    ) {
        let (bank, _) = build_bank(&sents, "p");
        let before: Vec<String> = bank.texts().map(str::to_string).collect();
        let (bank, mapping) = remove_overlap(bank, &test);
        let test_norm: HashSet<String> = test.iter().map(|s| normalize(s)).collect();
        prop_assert_eq!(mapping.len(), before.len());
        for (old, new) in mapping.iter().enumerate() {
            let leaked = test_norm.contains(&normalize(&before[old]));
            prop_assert_eq!(new.is_none(), leaked);
            if let Some(n) = new {
                prop_assert_eq!(bank.text(*n as usize), before[old].as_str());
            }
        }
        for t in bank.texts() {
            prop_assert!(!test_norm.contains(&normalize(t)));
        }
    }

    #[test]
    fn triplet_loss_is_non_negative(a in nonzero_vec(4), p in nonzero_vec(4), n in nonzero_vec(4), margin in 0.01f64..1.0) {
        let (a, p, n) = (unit(&a), unit(&p), unit(&n));
        let l = triplet_loss(&TrainingTriple { anchor: &a, positive: &p, negative: &n }, margin);
        prop_assert!(l >= 0.0);
        prop_assert!(l <= margin + 2.0 + 1e-6);
    }

    #[test]
    fn hard_negative_is_permutation_equivariant(
        anchor in nonzero_vec(3),
        batch in prop::collection::vec(nonzero_vec(3), 2..8),
        own_seed in any::<prop::sample::Index>(),
        perm_seed in any::<u64>(),
        scale in 0.1f32..10.0,
    ) {
        let own = own_seed.index(batch.len());
        let j = hard_negative(&anchor, &batch, own).unwrap();
        prop_assert_ne!(j, own);

        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut s = perm_seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<Vec<f32>> = order.iter().map(|&i| batch[i].clone()).collect();
        let new_own = order.iter().position(|&i| i == own).unwrap();
        let k = hard_negative(&anchor, &permuted, new_own).unwrap();
        // equal under the permutation unless there is an exact cosine tie
        let cos = |v: &[f32]| {
            let u = unit(v);
            unit(&anchor).iter().zip(&u).map(|(x, y)| (*x as f64) * (*y as f64)).sum::<f64>()
        };
        prop_assert!((cos(&batch[order[k]]) - cos(&batch[j])).abs() < 1e-6);

        let scaled: Vec<f32> = anchor.iter().map(|x| x * scale).collect();
        let js = hard_negative(&scaled, &batch, own).unwrap();
        prop_assert!((cos(&batch[js]) - cos(&batch[j])).abs() < 1e-6);
    }

    #[test]
    fn quotas_apportion_exactly(counts in prop::collection::vec(0usize..50, 1..6), extra in 0usize..500) {
        let present = counts.iter().filter(|&&c| c > 0).count();
        prop_assume!(present > 0);
        let target = present + extra;
        let q = class_quotas(&counts, target).unwrap();
        prop_assert_eq!(q.iter().sum::<usize>(), target);
        let total: usize = counts.iter().sum();
        for (c, (&n, &qc)) in counts.iter().zip(&q).enumerate() {
            if n == 0 {
                prop_assert_eq!(qc, 0, "class {}", c);
            } else {
                prop_assert!(qc >= 1);
                let exact = target as f64 * n as f64 / total as f64;
                prop_assert!((qc as f64 - exact).abs() < present as f64 + 1.0, "class {} quota {} share {}", c, qc, exact);
            }
        }
        prop_assert!(class_quotas(&counts, present.saturating_sub(1)).is_err() || present == 0);
    }

    #[test]
    fn filter_respects_quotas_and_confidence(
        pool in prop::collection::vec((0usize..3, 0.34f64..1.0), 0..60),
        quotas in prop::collection::vec(0usize..15, 3),
        banned in prop::collection::vec(0usize..60, 0..5),
    ) {
        let examples: Vec<SyntheticExample> = pool
            .iter()
            .enumerate()
            .map(|(i, &(c, conf))| {
                let mut p = vec![(1.0 - conf) / 2.0; 3];
                p[c] = conf;
                SyntheticExample::new(Some(i as u32), format!("Sentence {i}"), SoftLabel::new(p).unwrap())
            })
            .collect();
        let train: Vec<String> = banned.iter().map(|i| format!("sentence  {i}")).collect();
        let (kept, report) = filter_synthetic(&examples, &quotas, &train, true).unwrap();
        let (again, _) = filter_synthetic(&examples, &quotas, &train, true).unwrap();
        prop_assert_eq!(&kept, &again);

        let train_norm: HashSet<String> = train.iter().map(|t| normalize(t)).collect();
        let kept_ids: HashSet<u32> = kept.iter().map(|e| e.id.unwrap()).collect();
        for c in 0..3 {
            let eligible: Vec<&SyntheticExample> = examples
                .iter()
                .filter(|e| e.assigned_class == c && !train_norm.contains(&normalize(&e.text)))
                .collect();
            let chosen: Vec<&&SyntheticExample> = eligible.iter().filter(|e| kept_ids.contains(&e.id.unwrap())).collect();
            prop_assert_eq!(chosen.len(), quotas[c].min(eligible.len()));
            let min_kept = chosen.iter().map(|e| e.confidence).fold(f64::INFINITY, f64::min);
            for e in eligible.iter().filter(|e| !kept_ids.contains(&e.id.unwrap())) {
                prop_assert!(e.confidence <= min_kept);
            }
            prop_assert_eq!(report.shortfalls.iter().any(|s| s.class == c), eligible.len() < quotas[c]);
        }
        for e in &kept {
            prop_assert!(!train_norm.contains(&normalize(&e.text)));
        }
        if report.shortfalls.is_empty() {
            prop_assert_eq!(kept.len(), quotas.iter().sum::<usize>());
        } else {
            prop_assert!(filter_synthetic(&examples, &quotas, &train, false).is_err());
        }
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..8), shift in -100.0f64..100.0) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert!(SoftLabel::new(p).is_ok());
    }

    #[test]
    fn quantization_error_within_half_step(v in nonzero_vec(16)) {
        let v = unit(&v);
        let (codes, scale) = quantize_row(&v);
        for (q, x) in codes.iter().zip(&v) {
            let err = (*q as f32 * scale - x).abs();
            prop_assert!(err <= scale / 2.0 + 1e-7, "error {} scale {}", err, scale);
        }
        prop_assert!(scale <= 1.0 / 127.0 + 1e-9);
    }

    #[test]
    fn search_is_shard_independent_and_sorted(
        rows in rows(6),
        queries in prop::collection::vec(nonzero_vec(6), 1..4),
        k in 1usize..12,
        shard in 1usize..9,
    ) {
        prop_assume!(rows.iter().any(Option::is_some));
        let queries: Vec<Vec<f32>> = queries.iter().map(|q| unit(q)).collect();
        let base = FlatIndex::new(EmbeddingMatrix::from_rows(6, &rows).unwrap()).unwrap();
        let sharded = FlatIndex::new(EmbeddingMatrix::from_rows(6, &rows).unwrap()).unwrap().with_shard_size(shard);
        let multi = base.top_k_multi(&queries, k).unwrap();
        prop_assert_eq!(&multi, &sharded.top_k_multi(&queries, k).unwrap());
        for (q, hits) in queries.iter().zip(&multi) {
            prop_assert_eq!(hits, &base.top_k(q, k).unwrap());
            prop_assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
            let oracle = common::naive_top_k(&rows, q, k);
            prop_assert_eq!(hits.iter().map(|h| h.id).collect::<Vec<_>>(), oracle.iter().map(|h| h.id).collect::<Vec<_>>());
        }
    }
}
