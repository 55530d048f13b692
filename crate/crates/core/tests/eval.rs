use medctx::eval::oracle::{oracle_context, oracle_event, oracle_ner};
use medctx::eval::{
    combined_accuracy, context_metrics, context_predictions, event_metrics, event_predictions, ner_metrics,
    pooled_accuracy, span_predictions, MatchMode,
};
use medctx::synth::fixtures::scoring_instance;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn strict_scores_equal_the_oracle(seed in any::<u64>(), n_docs in 1usize..5, agree in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gold, pred) = scoring_instance(&mut rng, n_docs, 12, agree);
        let spans = span_predictions(&pred);
        let events = event_predictions(&pred);
        let ctx = context_predictions(&pred);
        oracle_ner(&gold, &spans, MatchMode::Strict).unwrap()
            .compare(&ner_metrics(&gold, &spans, MatchMode::Strict).unwrap(), 1e-12)
            .map_err(TestCaseError::fail)?;
        oracle_event(&gold, &events, MatchMode::Strict).unwrap()
            .compare(&event_metrics(&gold, &events, MatchMode::Strict).unwrap(), 1e-12)
            .map_err(TestCaseError::fail)?;
        oracle_context(&gold, &ctx).unwrap()
            .compare(&context_metrics(&gold, &ctx).unwrap(), 1e-12)
            .map_err(TestCaseError::fail)?;
    }

    #[test]
    fn lenient_never_below_strict(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gold, pred) = scoring_instance(&mut rng, 3, 12, 0.5);
        let spans = span_predictions(&pred);
        let strict = ner_metrics(&gold, &spans, MatchMode::Strict).unwrap().micro.unwrap();
        let lenient = ner_metrics(&gold, &spans, MatchMode::Lenient).unwrap().micro.unwrap();
        prop_assert!(lenient.counts.tp >= strict.counts.tp);
        let oracle = oracle_ner(&gold, &spans, MatchMode::Lenient).unwrap();
        // greedy matching can only lose pairs relative to the optimum
        prop_assert!(oracle.micro.unwrap().tp >= lenient.counts.tp);
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gold, pred) = scoring_instance(&mut rng, 3, 12, 0.5);
        let fwd = ner_metrics(&gold, &span_predictions(&pred), MatchMode::Strict).unwrap().micro.unwrap();
        let back = ner_metrics(&pred, &span_predictions(&gold), MatchMode::Strict).unwrap().micro.unwrap();
        prop_assert_eq!(fwd.counts.tp, back.counts.tp);
        prop_assert_eq!(fwd.scores.precision, back.scores.recall);
        prop_assert_eq!(fwd.scores.recall, back.scores.precision);
        prop_assert_eq!(fwd.scores.f1, back.scores.f1);
    }

    #[test]
    fn scores_are_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gold, pred) = scoring_instance(&mut rng, 4, 12, 0.3);
        for mode in [MatchMode::Strict, MatchMode::Lenient] {
            let ner = ner_metrics(&gold, &span_predictions(&pred), mode).unwrap();
            let ev = event_metrics(&gold, &event_predictions(&pred), mode).unwrap();
            for r in [&ner, &ev] {
                for cs in r.per_class.iter().chain(&r.micro) {
                    for v in [cs.scores.precision, cs.scores.recall, cs.scores.f1] {
                        prop_assert!((0.0..=1.0).contains(&v));
                    }
                }
            }
        }
        let c = combined_accuracy(&gold, &pred).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn perfect_predictions_score_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gold, _) = scoring_instance(&mut rng, 3, 12, 1.0);
        let has_mentions = gold.iter().any(|d| !d.mentions.is_empty());
        let ner = ner_metrics(&gold, &span_predictions(&gold), MatchMode::Strict).unwrap();
        let ev = event_metrics(&gold, &event_predictions(&gold), MatchMode::Strict).unwrap();
        if has_mentions {
            prop_assert_eq!(ner.micro.unwrap().scores.f1, 1.0);
            prop_assert_eq!(ev.micro.unwrap().scores.f1, 1.0);
            prop_assert_eq!(combined_accuracy(&gold, &gold).unwrap(), 1.0);
        }
        let ctx = context_metrics(&gold, &context_predictions(&gold)).unwrap();
        for d in &ctx.dimensions {
            prop_assert_eq!(d.correct, d.total);
        }
    }
}

#[test]
fn pooled_accuracy_of_five_dimensions() {
    let accs = [0.8862, 0.9790, 0.8503, 0.9102, 0.9371];
    let overall = pooled_accuracy(&accs, 10_000);
    assert_eq!(format!("{overall:.4}"), "0.9126");
    // equal denominators make pooling the plain mean
    let mean = accs.iter().sum::<f64>() / 5.0;
    assert!((overall - mean).abs() < 1e-12);
}
