mod common;

use common::{fixed_model, ids, straight_line, synth_events};
use procattn::eventlog::{extract_prefixes, split, Activity, Prefix};
use procattn::prestudy::{
    compare_models, experiment1, experiment2, histogram, write_exp2_csv, Exp1Options, JsdScope, Pairing,
};
use procattn::transformer::{train, AttentionMode, ModelConfig, Predictor, TransformerModel};
use proptest::prelude::*;

const A: Activity = Activity(0);
const B: Activity = Activity(1);
const C: Activity = Activity(2);
const PAD: Activity = Activity(3);

fn prefix(activities: Vec<Activity>) -> Prefix {
    Prefix {
        activities,
        target: Activity(4),
        source_case: "c".into(),
    }
}

fn frozen(seed: u64) -> TransformerModel {
    let model = fixed_model();
    let config = ModelConfig {
        attention_mode: AttentionMode::FrozenUniform,
        seed,
        ..model.config().clone()
    };
    TransformerModel::new(config, model.vocabulary().clone()).unwrap()
}

#[test]
fn self_comparison_is_exactly_zero() {
    let model = fixed_model();
    let prefixes = vec![vec![A, B, C], vec![C], vec![B, PAD, A]];
    for scope in [JsdScope::AllHeads, JsdScope::PerHead] {
        assert_eq!(compare_models(&model, &model, &prefixes, scope).unwrap(), (0.0, 0.0));
    }
    let (jsd, _) = compare_models(&frozen(1), &frozen(1), &prefixes, JsdScope::AllHeads).unwrap();
    assert_eq!(jsd, 0.0);
    let (jsd, _) = compare_models(&frozen(1), &frozen(2), &prefixes, JsdScope::PerHead).unwrap();
    assert_eq!(jsd, 0.0);
}

#[test]
fn exp2_matches_the_straight_line_oracle() {
    let model = fixed_model();
    let prefixes = vec![prefix(vec![A, B, C]), prefix(vec![B]), prefix(vec![C, A, A, B])];
    let result = experiment2(&model, &prefixes).unwrap();
    assert_eq!(result.rows.len(), 3 + 1 + 4);
    assert_eq!(result.histogram.iter().sum::<usize>(), 8);
    for row in &result.rows {
        let tokens = &prefixes[row.prefix].activities;
        let mut input_masked = tokens.clone();
        input_masked[row.position] = PAD;
        let (p_input, _) = straight_line(model.params(), &ids(&input_masked), &[]);
        let (p_attention, _) = straight_line(model.params(), &ids(tokens), &[row.position]);
        let tvd: f64 = 0.5
            * p_input
                .iter()
                .zip(&p_attention)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>();
        assert!((row.tvd - tvd).abs() < 1e-6, "{row:?} vs {tvd}");
    }
    let mut csv = Vec::new();
    write_exp2_csv(&result, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 9);
}

#[test]
fn exp2_with_zero_output_layer_is_flat() {
    let model = fixed_model();
    let mut params = model.params().clone();
    params.head_w.fill(0.0);
    params.head_b.fill(0.0);
    let flat = TransformerModel::from_params(model.config().clone(), model.vocabulary().clone(), params).unwrap();
    let result = experiment2(&flat, &[prefix(vec![A, B, C]), prefix(vec![B])]).unwrap();
    assert!(result.rows.iter().all(|r| r.tvd == 0.0));
    let single = experiment2(&model, &[prefix(vec![C])]).unwrap();
    assert_eq!(single.rows.len(), 1);
    assert!(experiment2(&model, &[]).is_err());
}

#[test]
fn histogram_bins() {
    assert_eq!(histogram([0.0, 0.049, 0.05, 1.0, 0.999]), {
        let mut h = vec![0; 20];
        h[0] = 2;
        h[1] = 1;
        h[19] = 2;
        h
    });
}

#[test]
fn exp1_on_a_sequence_log() {
    // a deterministic sequence needs no attention: the frozen model predicts
    // every transition and the two models barely disagree
    let log = synth_events("seq(A, B, C)", 1000, 5);
    let config = ModelConfig::default();
    let result = experiment1(&log, 1, &config, &Exp1Options::default()).unwrap();
    assert_eq!(result.rows.len(), 1);
    assert_eq!(result.models.len(), 2);
    let row = &result.rows[0];
    assert!(row.mean_tvd < 0.05, "{row:?}");
    assert!(row.mean_jsd > 0.0 && row.mean_jsd <= std::f64::consts::LN_2);

    let (train_log, test) = split(&log, 0.7, config.seed).unwrap();
    let frozen_model = train(
        &train_log,
        &ModelConfig {
            attention_mode: AttentionMode::FrozenUniform,
            seed: row.modified.seed,
            ..config.clone()
        },
    )
    .unwrap();
    for p in extract_prefixes(&test, 1) {
        let (pv, att) = frozen_model.predict(&p.activities).unwrap();
        assert_eq!(pv.argmax(), p.target);
        let u = 1.0 / p.len() as f64;
        assert!(att.heads.iter().all(|m| m.iter().all(|&v| v == u)));
    }
}

#[test]
fn exp1_pairings() {
    let log = synth_events("seq(A, xor(B, C))", 40, 1);
    let config = ModelConfig {
        epochs: 1,
        ..ModelConfig::default()
    };
    let cross = Exp1Options {
        pairing: Pairing::CrossProduct,
        ..Exp1Options::default()
    };
    let r = experiment1(&log, 2, &config, &cross).unwrap();
    assert_eq!(r.rows.len(), 4);
    let again = experiment1(&log, 2, &config, &cross).unwrap();
    assert_eq!(r, again);
    assert!(experiment1(&log, 0, &config, &Exp1Options::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn frozen_attention_is_exactly_uniform(tokens in prop::collection::vec(0u32..4, 1..=5), seed in 0u64..100) {
        let tokens: Vec<Activity> = tokens.into_iter().map(Activity).collect();
        let (_, att) = frozen(seed).forward(&tokens).unwrap();
        let u = 1.0 / tokens.len() as f64;
        for m in &att.heads {
            prop_assert!(m.iter().all(|&v| v == u));
        }
    }
}
