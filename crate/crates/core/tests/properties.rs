use std::collections::HashSet;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use joint_align::align::{
    apply_alignment, build_training_matrices, filter_framework_pairs, frobenius_loss, procrustes, solve_linear,
};
use joint_align::bli::{evaluate_bli, BliParams, OovPolicy, PairFilter};
use joint_align::corpus::{build_joint_vocab, CorpusStats};
use joint_align::ctx::{learn_ctx_alignment, parse_word_alignments, CtxSolver, LayerPairs};
use joint_align::dictionary::SeedDictionary;
use joint_align::embed_io::{EmbeddingSet, Vocabulary};
use joint_align::realloc::{reallocate, split_embeddings, Allocation};
use joint_align::retrieval::{Metric, Retriever};

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    // Procrustes of a random pair is a random orthogonal matrix.
    let w = procrustes(&gaussian(rng, d, 3 * d), &gaussian(rng, d, 3 * d)).unwrap();
    w.matrix().clone()
}

fn named(prefix: &str, m: Array2<f64>) -> EmbeddingSet {
    let vocab = Vocabulary::from_tokens((0..m.nrows()).map(|i| format!("{prefix}{i}"))).unwrap();
    EmbeddingSet::new(vocab, m).unwrap()
}

fn ranking(r: &joint_align::retrieval::RetrievalResult) -> Vec<Vec<usize>> {
    r.hits.iter().map(|h| h.iter().map(|x| x.index).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn retrieval_is_invariant_to_a_common_rotation(seed in any::<u64>(), n in 12usize..60, d in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, t) = (gaussian(&mut rng, n, d), gaussian(&mut rng, n + 3, d));
        let q = orthogonal(&mut rng, d);
        for metric in [Metric::Cosine, Metric::Csls { k: 10 }] {
            let plain = Retriever::new(&named("s", s.clone()), &named("t", t.clone()), metric).unwrap();
            let rotated = Retriever::new(&named("s", s.dot(&q)), &named("t", t.dot(&q)), metric).unwrap();
            let (a, b) = (plain.retrieve_all(5), rotated.retrieve_all(5));
            for (ha, hb) in a.hits.iter().zip(&b.hits) {
                for (x, y) in ha.iter().zip(hb) {
                    prop_assert!((x.score - y.score).abs() < 1e-9);
                    // Order may only differ between numerically tied scores.
                    prop_assert!(x.index == y.index || (x.score - y.score).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn csls_reduces_to_cosine_with_constant_hubness(seed in any::<u64>(), half in 3usize..20, d in 2usize..8) {
        // Sources closed under negation: every target's mean similarity to
        // all sources is zero.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = gaussian(&mut rng, half, d);
        let src = ndarray::concatenate(ndarray::Axis(0), &[base.view(), (-&base).view()]).unwrap();
        let n = src.nrows();
        let tgt = gaussian(&mut rng, n, d);
        let (s, t) = (named("s", src), named("t", tgt));
        let cos = Retriever::new(&s, &t, Metric::Cosine).unwrap().retrieve_all(n);
        let csls = Retriever::new(&s, &t, Metric::Csls { k: n }).unwrap().retrieve_all(n);
        prop_assert_eq!(ranking(&cos), ranking(&csls));
    }

    #[test]
    fn procrustes_properties(seed in any::<u64>(), d in 1usize..10, extra in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = d + extra + 1;
        let (x, y) = (gaussian(&mut rng, d, k), gaussian(&mut rng, d, k));
        let w = procrustes(&x, &y).unwrap();
        prop_assert!(w.orthogonality_error() <= 1e-6);

        let loss = frobenius_loss(&w, &x, &y);
        let lin = solve_linear(&x, &y).unwrap();
        prop_assert!(frobenius_loss(&lin, &x, &y) <= loss + 1e-9);

        let mut perm: Vec<usize> = (0..k).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % k);
        let xp = x.select(ndarray::Axis(1), &perm);
        let yp = y.select(ndarray::Axis(1), &perm);
        let wp = procrustes(&xp, &yp).unwrap();
        prop_assert!((frobenius_loss(&wp, &xp, &yp) - loss).abs() <= 1e-9 * (1.0 + loss));

        let e1 = named("a", gaussian(&mut rng, 7, d));
        let merged = apply_alignment(&w, &e1, &named("b", gaussian(&mut rng, 2, d)), &named("c", gaussian(&mut rng, 2, d))).unwrap();
        for i in 0..e1.len() {
            let before = e1.row(i).dot(&e1.row(i)).sqrt();
            let after = merged.row(i).dot(&merged.row(i)).sqrt();
            prop_assert!((before - after).abs() <= 1e-6);
        }
    }

    #[test]
    fn ctx_procrustes_is_orthogonal(seed in any::<u64>(), d in 2usize..12, n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = |rng: &mut ChaCha8Rng| (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect::<Vec<Vec<f64>>>();
        let mut pairs = std::collections::BTreeMap::new();
        pairs.insert(0, LayerPairs { src: rows(&mut rng), tgt: rows(&mut rng) });
        pairs.insert(-1, LayerPairs { src: rows(&mut rng), tgt: rows(&mut rng) });
        let ws = learn_ctx_alignment(&pairs, 20, CtxSolver::Procrustes, seed).unwrap();
        for w in ws.values() {
            prop_assert!(w.orthogonality_error() <= 1e-6);
        }
    }

    #[test]
    fn parsed_alignments_stay_in_bounds(
        lens in proptest::collection::vec((0usize..8, 0usize..8), 1..10),
        links in proptest::collection::vec(proptest::collection::vec((0usize..12, 0usize..12), 0..10), 10),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let sentence = |n: usize| vec!["w"; n].join(" ") + "\n";
        let src: String = lens.iter().map(|&(a, _)| sentence(a)).collect();
        let tgt: String = lens.iter().map(|&(_, b)| sentence(b)).collect();
        let al: String = links[..lens.len()]
            .iter()
            .map(|l| l.iter().map(|(i, j)| format!("{i}-{j}")).collect::<Vec<_>>().join(" ") + "\n")
            .collect();
        let p = |n: &str| dir.path().join(n);
        std::fs::write(p("s"), src).unwrap();
        std::fs::write(p("t"), tgt).unwrap();
        std::fs::write(p("a"), al).unwrap();
        let set = parse_word_alignments(p("a"), p("s"), p("t")).unwrap();
        let total: usize = links[..lens.len()].iter().map(Vec::len).sum();
        prop_assert_eq!(set.num_links() + set.dropped, total);
        for (n, l) in set.links.iter().enumerate() {
            for &(i, j) in l {
                prop_assert!(i < lens[n].0 && j < lens[n].1);
            }
        }
    }

    #[test]
    fn bli_counts_reconcile(seed in any::<u64>(), n_pairs in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = named("s", gaussian(&mut rng, 15, 4));
        let tgt = named("t", gaussian(&mut rng, 15, 4));
        let pairs: Vec<(String, String)> = (0..n_pairs)
            .map(|_| {
                let s = if rng.random_bool(0.2) { format!("x{}", rng.random_range(0..5)) } else { format!("s{}", rng.random_range(0..20)) };
                let t = if rng.random_bool(0.1) { s.clone() } else { format!("t{}", rng.random_range(0..20)) };
                (s, t)
            })
            .collect();
        let dict = SeedDictionary::new(pairs);
        for filter in [PairFilter::None, PairFilter::RemoveSameSurface] {
            let params = |oov_policy| BliParams { metric: Metric::Cosine, oov_policy, filter, lowercase: true };
            let paper = evaluate_bli(&src, &tgt, &dict, &params(OovPolicy::Paper)).unwrap();
            let drop = evaluate_bli(&src, &tgt, &dict, &params(OovPolicy::Drop)).unwrap();
            prop_assert_eq!(paper.pairs_read, dict.len());
            prop_assert!(paper.pairs_after_filter <= paper.pairs_read);
            prop_assert_eq!(paper.total, paper.in_vocab + paper.source_oov_self_retrieved + paper.target_oov_incorrect);
            prop_assert_eq!(drop.total + drop.excluded, paper.total);
            prop_assert!(paper.correct >= drop.correct);
            // Self-retrieval is never correct when no OOV source has an
            // identical gold target; then dropping can only raise P@1.
            let self_hits = dict.iter().any(|(s, t)| s == t && !src.vocab().contains(s));
            if !self_hits && drop.total > 0 {
                prop_assert!(paper.p_at_1 <= drop.p_at_1 + 1e-12);
            }
        }
    }
}

fn stats(label: &str, counts: &[(&str, u64)]) -> CorpusStats {
    CorpusStats::from_counts(label, counts.iter().map(|&(t, c)| (t.to_string(), c))).unwrap()
}

#[test]
fn reallocation_changes_labels_not_vectors() {
    let s1 = stats("1", &[("a", 50), ("b", 5), ("s", 10), ("hi", 90), ("lo", 1)]);
    let s2 = stats("2", &[("c", 50), ("s", 10), ("hi", 1), ("lo", 90)]);
    let joint = build_joint_vocab(&s1, &s2, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = gaussian(&mut rng, joint.len(), 6);
    let set = EmbeddingSet::new(joint.vocabulary(), m).unwrap();
    let re = reallocate(&joint, &s1, &s2, 0.9).unwrap();
    assert_eq!(re, reallocate(&joint, &s1, &s2, 0.9).unwrap());
    let split = split_embeddings(&set, &re).unwrap();
    assert_eq!(split.l1.len() + split.l2.len() + split.shared.len(), set.len());
    for part in [&split.l1, &split.l2, &split.shared] {
        for (i, tok) in part.vocab().iter().enumerate() {
            let original = set.vector(tok).unwrap();
            assert!(part.row(i).iter().zip(original.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
    assert_eq!(re.allocation("hi"), Some(Allocation::L1));
    assert_eq!(re.allocation("lo"), Some(Allocation::L2));
    assert_eq!(re.allocation("s"), Some(Allocation::Shared));
}

#[test]
fn framework_training_pairs_exclude_shared_sources() {
    let s1 = stats("1", &[("a", 5), ("b", 5), ("s", 5)]);
    let s2 = stats("2", &[("x", 5), ("y", 5), ("s", 5)]);
    let joint = build_joint_vocab(&s1, &s2, None).unwrap();
    let re = reallocate(&joint, &s1, &s2, 0.9).unwrap();
    let dict = SeedDictionary::from_pairs([("a", "x"), ("s", "y"), ("b", "s"), ("s", "s"), ("x", "a")]);
    let (kept, dropped) = filter_framework_pairs(&dict, &re);
    assert_eq!(kept, SeedDictionary::from_pairs([("a", "x"), ("b", "s")]));
    assert_eq!(dropped.len(), 3);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let set = EmbeddingSet::new(joint.vocabulary(), gaussian(&mut rng, joint.len(), 3)).unwrap();
    let split = split_embeddings(&set, &re).unwrap();
    let tgt_tokens: Vec<&str> = re.target_side().collect();
    let tgt = set.select(tgt_tokens.iter().copied()).unwrap();
    let m = build_training_matrices(&kept, &split.l1, &tgt).unwrap();
    let sources: HashSet<&str> = m.kept.iter().map(|(s, _)| s.as_str()).collect();
    assert!(!sources.contains("s"));
    assert_eq!(m.src.ncols(), 2);
}
