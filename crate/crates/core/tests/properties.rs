mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::poincare_distance_closed_form;
use proptest::prelude::*;
use schemaprobe::datamodel::{GoldLinks, ItemKind, LinkGraph, ProbeExample, RelationMatrix, Schema};
use schemaprobe::eval::score_links;
use schemaprobe::geometry::{
    euclidean_distance, exp_map_origin, mobius_add, poincare_distance, BallPoint, Metric, TangentVector,
};
use schemaprobe::parse_spider_schemas;
use schemaprobe::probe::{
    build_input_layout, collect_embeddings, decode_dump, encode_record, normalize_minmax, probe_example,
    threshold_adjacency, EmbeddingSet, InputLayout, ReferenceEncoder, ReferenceEncoderSpec, SchemaEncoder,
};
use schemaprobe::rulelink::{lexical_link, MatchConfig};
use schemaprobe::selftest::min_planted_score;
use schemaprobe::synth::synthetic_corpus;
use schemaprobe::Result;

fn name() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-z]{1,6}", 1..4)
}

fn schema_strategy() -> impl Strategy<Value = Schema> {
    prop::collection::vec(name(), 1..5)
        .prop_flat_map(|tables| {
            let nt = tables.len();
            (Just(tables), prop::collection::vec((0..nt, name()), 1..10))
        })
        .prop_map(|(tables, columns)| Schema::new("db", tables, columns).unwrap())
}

fn vector(dim: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, dim)
}

fn ball_point(dim: usize) -> impl Strategy<Value = BallPoint> {
    vector(dim, 3.0).prop_map(|v| exp_map_origin(&TangentVector::new(v).unwrap()))
}

proptest! {
    #[test]
    fn schema_round_trips_through_spider_json(schema in schema_strategy()) {
        let text = serde_json::to_string(&vec![schema.to_spider_value()]).unwrap();
        let back = parse_spider_schemas(&text).unwrap();
        prop_assert_eq!(&back[0], &schema);
    }

    #[test]
    fn seq_index_is_tables_first_permutation(schema in schema_strategy()) {
        let items = schema.items();
        for (pos, item) in items.iter().enumerate() {
            prop_assert_eq!(item.seq_index(), pos);
            prop_assert_eq!(item.kind() == ItemKind::Table, pos < schema.num_tables());
            if let Some(t) = item.parent_table() {
                prop_assert_eq!(items[t].kind(), ItemKind::Table);
            }
        }
    }

    #[test]
    fn euclidean_matches_naive_sum(u in vector(7, 10.0), v in vector(7, 10.0)) {
        let mut acc = 0.0;
        for k in 0..7 {
            acc += (u[k] - v[k]) * (u[k] - v[k]);
        }
        prop_assert!((euclidean_distance(&u, &v).unwrap() - acc.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn poincare_agrees_with_closed_form(a in ball_point(5), b in ball_point(5)) {
        let d = poincare_distance(&a, &b).unwrap();
        let oracle = poincare_distance_closed_form(a.coords(), b.coords());
        prop_assert!((d - oracle).abs() <= 1e-6 * (1.0 + oracle), "{} vs {}", d, oracle);
    }

    #[test]
    fn poincare_symmetric(a in ball_point(4), b in ball_point(4)) {
        let ab = poincare_distance(&a, &b).unwrap();
        let ba = poincare_distance(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn poincare_triangle(a in ball_point(3), b in ball_point(3), c in ball_point(3)) {
        let ac = poincare_distance(&a, &c).unwrap();
        let via = poincare_distance(&a, &b).unwrap() + poincare_distance(&b, &c).unwrap();
        prop_assert!(ac <= via + 1e-7);
    }

    #[test]
    fn distance_from_origin_is_twice_tangent_norm(h in vector(6, 2.0)) {
        let t = TangentVector::new(h).unwrap();
        let d = poincare_distance(&BallPoint::origin(6), &exp_map_origin(&t)).unwrap();
        prop_assert!((d - 2.0 * t.norm()).abs() < 1e-7);
    }

    #[test]
    fn mobius_addition_closed(a in ball_point(4), b in ball_point(4)) {
        prop_assert!(mobius_add(&a, &b).unwrap().norm() < 1.0);
    }

    #[test]
    fn normalize_bounds_and_order(
        (rows, cols, values) in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            (Just(r), Just(c), prop::collection::vec(0.0f64..100.0, r * c))
        })
    ) {
        let x = RelationMatrix::new(rows, cols, values.clone(), false).unwrap();
        let xn = normalize_minmax(&x);
        prop_assert!(xn.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > min {
            prop_assert!(xn.values().contains(&0.0) && xn.values().contains(&1.0));
            for a in 0..values.len() {
                for b in 0..values.len() {
                    if values[a] < values[b] {
                        prop_assert!(xn.values()[a] <= xn.values()[b]);
                    }
                }
            }
            let again = normalize_minmax(&xn);
            for (p, q) in again.values().iter().zip(xn.values()) {
                prop_assert!((p - q).abs() < 1e-15);
            }
        } else {
            prop_assert!(xn.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn threshold_links_exactly_entries_at_or_above(
        values in prop::collection::vec(0.0f64..=1.0, 12),
        tau in 0.0f64..=1.0,
    ) {
        let xn = RelationMatrix::new(3, 4, values.clone(), true).unwrap();
        let g = threshold_adjacency(&xn, tau).unwrap();
        for (k, v) in values.iter().enumerate() {
            prop_assert_eq!(g.pairs().contains(&(k / 4, k % 4)), *v >= tau);
        }
    }

    #[test]
    fn dump_round_trip_is_bitwise(
        (nq, ns, dim) in (1usize..5, 1usize..5, 1usize..6),
        seed in any::<u64>(),
    ) {
        let mut rng = schemaprobe::rng::SplitMix64::new(seed);
        let mut draw = |n: usize| (0..n).map(|_| f64::from((rng.next_signed() * 50.0) as f32)).collect::<Vec<_>>();
        let baseline = draw(ns * dim);
        let masked = draw(nq * ns * dim);
        let set = EmbeddingSet::new("ex", dim, nq, ns, baseline, masked).unwrap();
        let back = decode_dump(&encode_record(&set)).unwrap();
        prop_assert_eq!(back, vec![set]);
    }

    #[test]
    fn exact_recovery_for_any_corpus_seed(seed in any::<u64>()) {
        let corpus = synthetic_corpus(6, 16, seed).unwrap();
        for metric in [Metric::Euclidean, Metric::Poincare] {
            let normalized: Vec<_> = corpus
                .iter()
                .map(|c| normalize_minmax(&probe_example(&c.example, &c.encoder, metric).unwrap()))
                .collect();
            for (case, xn) in corpus.iter().zip(&normalized) {
                let tau = min_planted_score(std::slice::from_ref(case), std::slice::from_ref(xn));
                let gold = case.example.gold_links().unwrap();
                for t in [tau, tau / 3.0, f64::MIN_POSITIVE] {
                    let g = threshold_adjacency(xn, t).unwrap();
                    prop_assert_eq!(&g.pairs(), gold.pairs());
                }
            }
        }
    }

    #[test]
    fn probe_scores_nonnegative_and_zeros_agree(seed in any::<u64>()) {
        for case in synthetic_corpus(3, 8, seed).unwrap() {
            let e = probe_example(&case.example, &case.encoder, Metric::Euclidean).unwrap();
            let p = probe_example(&case.example, &case.encoder, Metric::Poincare).unwrap();
            for (a, b) in e.values().iter().zip(p.values()) {
                prop_assert!(*a >= 0.0 && *b >= 0.0);
                prop_assert_eq!(*a == 0.0, *b == 0.0);
            }
        }
    }

    #[test]
    fn lexical_edges_use_shared_words(seed in any::<u64>()) {
        for case in synthetic_corpus(4, 4, seed).unwrap() {
            let ex = &case.example;
            let g = lexical_link(ex, &MatchConfig::default());
            for e in g.edges() {
                let word = ex.question_tokens()[e.question].to_lowercase();
                prop_assert!(ex.schema().items()[e.schema].name_tokens().contains(&word));
            }
            let shouted: Vec<String> = ex.question_tokens().iter().map(|t| t.to_uppercase()).collect();
            let upper = ProbeExample::new("u", shouted, ex.schema().clone(), None).unwrap();
            let g_upper = lexical_link(&upper, &MatchConfig::default());
            prop_assert_eq!(g_upper.edges(), g.edges());
        }
    }

    #[test]
    fn f1_zero_iff_no_true_positives(
        pred in prop::collection::btree_set((0usize..4, 0usize..5), 0..8),
        gold in prop::collection::btree_set((0usize..4, 0usize..5), 0..8),
    ) {
        let mut g = LinkGraph::new(4, 5);
        for &(question, schema) in &pred {
            g.insert(schemaprobe::Edge { question, schema, tag: schemaprobe::EdgeTag::ProbeLink }).unwrap();
        }
        let gold_links = GoldLinks::new(4, 5, gold.iter().copied()).unwrap();
        let m = score_links(&g, &gold_links).unwrap();
        prop_assert_eq!(m.f1 == 0.0, m.true_positives == 0);
        prop_assert!((0.0..=1.0).contains(&m.precision) && (0.0..=1.0).contains(&m.recall));
        if !gold.is_empty() && pred == gold {
            prop_assert_eq!(m.f1, 1.0);
        }
    }
}

/// Counts every call to the wrapped encoder.
struct Counting<E> {
    inner: E,
    calls: AtomicUsize,
}

impl<E: SchemaEncoder> SchemaEncoder for Counting<E> {
    fn encode(&self, layout: &InputLayout, masked: Option<usize>) -> Result<Vec<Vec<f64>>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.encode(layout, masked)
    }
}

#[test]
fn probe_runs_one_pass_per_word_plus_baseline() {
    for case in synthetic_corpus(10, 8, 4).unwrap() {
        let counting = Counting { inner: case.encoder.clone(), calls: AtomicUsize::new(0) };
        probe_example(&case.example, &counting, Metric::Euclidean).unwrap();
        assert_eq!(counting.calls.load(Ordering::SeqCst), case.example.n_question() + 1);
    }
}

#[test]
fn masking_a_word_only_moves_items_it_is_planted_on() {
    for case in synthetic_corpus(10, 8, 5).unwrap() {
        let ex = &case.example;
        let set = collect_embeddings(ex, &case.encoder).unwrap();
        let planted = case.spec().planted();
        for i in 0..ex.n_question() {
            for j in 0..ex.n_schema() {
                let moved = set.masked(i, j) != set.baseline(j);
                assert_eq!(moved, planted.contains_key(&(i, j)), "({i}, {j})");
            }
        }
        // so row i of the matrix depends on masking word i alone
        let x = probe_example(ex, &case.encoder, Metric::Euclidean).unwrap();
        for i in 0..ex.n_question() {
            for j in 0..ex.n_schema() {
                assert_eq!(x.get(i, j) > 0.0, planted.contains_key(&(i, j)));
            }
        }
    }
}

#[test]
fn encoder_rejects_foreign_layouts() {
    let corpus = synthetic_corpus(2, 4, 1).unwrap();
    let layout = build_input_layout(&corpus[1].example);
    assert!(corpus[0].encoder.encode(&layout, None).is_err());
}

#[test]
fn from_gold_plants_exactly_gold_pairs() {
    let schema = Arc::new(Schema::new("d", vec![vec!["t".into()]], vec![(0, vec!["c".into()])]).unwrap());
    let q = ["a", "b", "c"].map(String::from).to_vec();
    let ex = ProbeExample::new("x", q, schema, Some(vec![(0, 1), (2, 0)])).unwrap();
    let spec = ReferenceEncoderSpec::from_gold(&ex, 8, 3).unwrap();
    let keys: Vec<_> = spec.planted().keys().copied().collect();
    assert_eq!(keys, vec![(0, 1), (2, 0)]);
    assert!(spec.planted().values().all(|s| (0.25..=1.0).contains(s)));
    let x = probe_example(&ex, &ReferenceEncoder::new(spec), Metric::Poincare).unwrap();
    assert_eq!(threshold_adjacency(&normalize_minmax(&x), 1e-9).unwrap().pairs(), ex.gold_links().unwrap().pairs().clone());
}
