use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unicap_core::align::{mean_loss, robust_loss, AssignmentGraph};
use unicap_core::eval::{bleu, intra_inter_ratio, lcs_len, mixing_score, oracle_baseline, rouge_l};
use unicap_core::nn::{Adam, ParameterStore};
use unicap_core::{Concept, ConceptSet};

fn sentence() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..5, 1..9)
}

fn corpus() -> impl Strategy<Value = Vec<(Vec<u8>, Vec<Vec<u8>>)>> {
    prop::collection::vec((sentence(), prop::collection::vec(sentence(), 1..4)), 1..6)
}

/// Textbook corpus BLEU written from scratch: clipped n-gram counts, closest
/// reference length with ties to the shorter, geometric mean of precisions.
fn naive_bleu(pairs: &[(Vec<u8>, Vec<Vec<u8>>)], n: usize) -> f64 {
    fn grams(s: &[u8], n: usize) -> Vec<Vec<u8>> {
        if s.len() < n {
            return Vec::new();
        }
        (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
    }
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, refs) in pairs {
        c += cand.len();
        let mut lens: Vec<usize> = refs.iter().map(Vec::len).collect();
        lens.sort_by_key(|&l| (l.abs_diff(cand.len()), l));
        r += lens[0];
        for k in 1..=n {
            let cg = grams(cand, k);
            total[k - 1] += cg.len();
            let mut seen: Vec<Vec<u8>> = Vec::new();
            for g in &cg {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g.clone());
                let in_cand = cg.iter().filter(|x| *x == g).count();
                let in_ref = refs
                    .iter()
                    .map(|rf| grams(rf, k).iter().filter(|x| *x == g).count())
                    .max()
                    .unwrap();
                matched[k - 1] += in_cand.min(in_ref);
            }
        }
    }
    if (0..n).any(|k| total[k] == 0 || matched[k] == 0) {
        return 0.0;
    }
    let log_mean = (0..n).map(|k| (matched[k] as f64 / total[k] as f64).ln()).sum::<f64>() / n as f64;
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * log_mean.exp()
}

fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    // longest subsequence of `a` (by subset enumeration) that is one of `b`
    let is_sub = |s: &[u8], t: &[u8]| {
        let mut it = t.iter();
        s.iter().all(|x| it.any(|y| y == x))
    };
    (0u32..1 << a.len())
        .map(|mask| (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect::<Vec<_>>())
        .filter(|s| is_sub(s, b))
        .map(|s| s.len())
        .max()
        .unwrap_or(0)
}

fn split(pairs: &[(Vec<u8>, Vec<Vec<u8>>)]) -> (Vec<Vec<u8>>, Vec<Vec<Vec<u8>>>) {
    pairs.iter().cloned().unzip()
}

proptest! {
    #[test]
    fn bleu_matches_textbook_definition(pairs in corpus(), n in 1usize..5) {
        let (c, r) = split(&pairs);
        let got = bleu(&c, &r, n);
        prop_assert!((got - naive_bleu(&pairs, n)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn bleu_ignores_corpus_order(pairs in corpus(), n in 1usize..5) {
        let (c, r) = split(&pairs);
        let mut rev = pairs.clone();
        rev.reverse();
        let (c2, r2) = split(&rev);
        prop_assert!((bleu(&c, &r, n) - bleu(&c2, &r2, n)).abs() < 1e-12);
    }

    #[test]
    fn lcs_matches_subsequence_enumeration(a in prop::collection::vec(0u8..4, 0..9), b in prop::collection::vec(0u8..4, 0..9)) {
        prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
        prop_assert_eq!(lcs_len(&a, &b), lcs_len(&b, &a));
    }

    #[test]
    fn rouge_l_is_bounded_and_one_on_exact_match(c in sentence(), refs in prop::collection::vec(sentence(), 1..4)) {
        let v = rouge_l(&c, &refs);
        prop_assert!((0.0..=1.0).contains(&v));
        let mut with_self = refs.clone();
        with_self.push(c.clone());
        prop_assert!((rouge_l(&c, &with_self) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_of_k_never_exceeds_the_mean(t in prop::collection::vec(-3.0f64..3.0, 4), cands in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..8)) {
        let (min, idx) = robust_loss(&t, &cands);
        let mean = mean_loss(&t, &cands);
        prop_assert!(min <= mean + 1e-12);
        prop_assert!(idx < cands.len());
        let d: f64 = t.iter().zip(&cands[idx]).map(|(a, b)| (a - b) * (a - b)).sum();
        prop_assert!((d - min).abs() < 1e-12);
    }

    #[test]
    fn first_adam_step_has_learning_rate_magnitude(g in prop::collection::vec(prop_oneof![-5.0f64..-1e-3, 1e-3f64..5.0], 1..6)) {
        let mut store = ParameterStore::<f64>::new();
        let id = store.add("w", &[g.len()], vec![0.0; g.len()]).unwrap();
        store.grad_mut(id).copy_from_slice(&g);
        let mut adam = Adam::new(&store, 0.01);
        adam.step(&mut store);
        for (w, gi) in store.value(id).iter().zip(&g) {
            // bias-corrected m/sqrt(v) is sign(g) up to epsilon
            prop_assert!((w + 0.01 * gi.signum()).abs() < 1e-6, "{} {}", w, gi);
        }
    }
}

fn set(ids: &[u32]) -> ConceptSet {
    ConceptSet::from_unsorted(ids.iter().map(|&i| Concept(i)).collect())
}

#[test]
fn more_oracle_runs_never_score_lower() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let word = |rng: &mut ChaCha8Rng| ["a", "b", "c", "d", "e"][rng.random_range(0..5)].to_string();
    let sentences: Vec<Vec<String>> = (0..30).map(|_| (0..5).map(|_| word(&mut rng)).collect()).collect();
    let sentence_sets: Vec<ConceptSet> = (0..30).map(|j| set(&[j % 4, (j / 4) % 3 + 4])).collect();
    let image_sets: Vec<ConceptSet> = (0..8).map(|i| set(&[i % 4, 5])).collect();
    let graph = AssignmentGraph::build(&image_sets, &sentence_sets);
    // references drawn from the corpus so that runs score differently
    let references: Vec<Vec<Vec<String>>> = (0..8)
        .map(|i| vec![sentences[(i * 3) % 30].clone(), sentences[(i * 7 + 1) % 30].clone()])
        .collect();
    let mut last = 0.0;
    for runs in [1, 2, 5, 10, 40] {
        let r = oracle_baseline(&graph, &sentences, &references, runs, &mut ChaCha8Rng::seed_from_u64(9));
        assert!(r.best.bleu[3] >= last);
        assert_eq!(r.run_bleu4.len(), runs);
        assert_eq!(r.best.bleu[3], r.run_bleu4.iter().cloned().fold(f64::MIN, f64::max));
        last = r.best.bleu[3];
    }
    assert!(last > 0.0);
}

/// Mixing by explicit ranking: for each image, every same-cluster point
/// other than itself ranked by distance.
#[test]
fn mixing_score_matches_brute_force_on_forty_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut point = |shift: f64| -> Vec<f64> { (0..3).map(|_| shift + rng.random_range(-1.0..1.0)).collect() };
    let text: Vec<Vec<f64>> = (0..24).map(|j| point((j % 3) as f64 * 0.7)).collect();
    let text_labels: Vec<Option<u32>> = (0..24).map(|j| if j == 23 { None } else { Some(j % 3) }).collect();
    let images: Vec<Vec<f64>> = (0..16).map(|i| point((i % 3) as f64 * 0.7 + 0.3)).collect();
    let image_labels: Vec<Option<u32>> = (0..16).map(|i| Some(i % 3)).collect();
    let k = 5;

    let mut expected = Vec::new();
    for (i, v) in images.iter().enumerate() {
        let lab = image_labels[i];
        let mut ranked: BTreeMap<u64, bool> = BTreeMap::new();
        for (t, l) in text.iter().zip(&text_labels) {
            if *l == lab {
                ranked.insert(dist(v, t).to_bits(), true);
            }
        }
        for (j, (w, l)) in images.iter().zip(&image_labels).enumerate() {
            if j != i && *l == lab {
                ranked.insert(dist(v, w).to_bits(), false);
            }
        }
        let texts = ranked.values().take(k).filter(|&&is_text| is_text).count();
        expected.push(texts as f64 / k as f64);
    }
    let want = expected.iter().sum::<f64>() / expected.len() as f64;
    let got = mixing_score(&text, &text_labels, &images, &image_labels, k).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn intra_inter_ratio_on_a_line() {
    // clusters {0, 1} and {10, 12}: intra mean (1 + 2) / 2, inter mean (10 + 12 + 9 + 11) / 4
    let e: Vec<Vec<f64>> = [0.0, 1.0, 10.0, 12.0].iter().map(|&x| vec![x]).collect();
    let labels = [Some(0), Some(0), Some(1), Some(1)];
    let r = intra_inter_ratio(&e, &labels).unwrap();
    assert!((r - 1.5 / 10.5).abs() < 1e-12);
    assert_eq!(intra_inter_ratio(&e, &[Some(0), None, None, None]), None);
}

/// Matches form one contiguous span, so every higher-order match sits
/// inside a lower-order one.
#[test]
fn bleu_n_non_increasing_on_nested_matches() {
    let w = |s: &str| s.split(' ').map(str::to_string).collect::<Vec<_>>();
    let fixtures = [
        (w("a b c d x y"), vec![w("a b c d e f")]),
        (w("the cat sat on the mat today"), vec![w("the cat sat on a mat")]),
        (w("one two three four five"), vec![w("zero one two three four nine")]),
    ];
    for (c, r) in fixtures {
        let scores: Vec<f64> = (1..=4).map(|n| bleu(std::slice::from_ref(&c), std::slice::from_ref(&r), n)).collect();
        assert!(scores.windows(2).all(|p| p[0] >= p[1]), "{scores:?}");
        assert!(scores[3] > 0.0);
    }
}
