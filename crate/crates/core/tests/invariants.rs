//! Cross-module properties: no test-day leakage, bounded statistics, valid synthetic panels.

use proptest::prelude::*;

use rangecast_core::analysis::intraday_acf;
use rangecast_core::baselines::tune_ar_order;
use rangecast_core::evaluation::blocked_splits;
use rangecast_core::features::fit_normalizer;
use rangecast_core::model_zoo::{fit, Family, MarketData, ModelSpec};
use rangecast_core::synth::{gen_multi_pair, gen_seasonal_ar_panel, MultiPairSpec, SeasonalArSpec};
use rangecast_core::{RangePanel, MINUTES_PER_DAY};

fn panel(days: usize, seed: u64) -> RangePanel {
    gen_seasonal_ar_panel(&SeasonalArSpec { days, seed, ..Default::default() }).unwrap().panel
}

/// Scales every observed cell of `days` by `k`.
fn perturb(p: &RangePanel, days: std::ops::Range<usize>, k: f64) -> RangePanel {
    let mut out = p.clone();
    for d in days {
        for t in 0..MINUTES_PER_DAY {
            if let Some(v) = p.get(t, d) {
                out = out.with_cell(t, d, Some(v * k + 1e-5));
            }
        }
    }
    out
}

fn tiny(family: Family) -> ModelSpec {
    let mut s = ModelSpec::new(family);
    s.hyper.dnn_layers = 2;
    s.hyper.dnn_width = 3;
    s.hyper.hidden = 2;
    s.hyper.p_t = 3;
    s.hyper.p_d = 2;
    s.hyper.head_width = 3;
    s.hyper.ar_orders = vec![1, 2, 3];
    s.train.max_epochs = 2;
    s.train.patience = 1;
    s.train.batch_size = 32;
    s.train.max_train_samples = Some(200);
    s.train.max_validation_samples = Some(100);
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ar_tuning_ignores_test_days(seed in 0u64..500, k in 0.5f64..2.0) {
        let p = panel(12, seed);
        let q = perturb(&p, 10..12, k);
        let a = tune_ar_order(&p, &[1, 2, 3, 4], 0..7, 7..10).unwrap();
        let b = tune_ar_order(&q, &[1, 2, 3, 4], 0..7, 7..10).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn normalizer_ignores_other_days(seed in 0u64..500, k in 0.5f64..2.0) {
        let p = panel(10, seed);
        let q = perturb(&p, 6..10, k);
        prop_assert_eq!(fit_normalizer(&p, 0..6).unwrap(), fit_normalizer(&q, 0..6).unwrap());
    }

    #[test]
    fn acf_is_bounded(seed in 0u64..500, phi in 0.0f64..0.65) {
        let p = gen_seasonal_ar_panel(&SeasonalArSpec { days: 3, phi, seed, ..Default::default() }).unwrap().panel;
        let acf = intraday_acf(&p, 30).unwrap();
        prop_assert!((acf.values[0].unwrap() - 1.0).abs() < 1e-12);
        for v in acf.values.iter().flatten() {
            prop_assert!(v.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn synthetic_panels_are_valid(seed in 0u64..500, days in 1usize..6) {
        let g = gen_multi_pair(&MultiPairSpec { factor: SeasonalArSpec { days, seed, ..Default::default() }, ..Default::default() }).unwrap();
        for p in &g.panels {
            prop_assert_eq!(p.num_days(), days);
            for d in 0..days {
                for t in 0..MINUTES_PER_DAY {
                    let v = p.get(t, d).unwrap();
                    prop_assert!(v.is_finite() && v >= 0.0);
                }
            }
        }
    }
}

#[test]
fn fitted_models_ignore_test_days() {
    let g = gen_multi_pair(&MultiPairSpec { factor: SeasonalArSpec { days: 12, seed: 5, ..Default::default() }, ..Default::default() }).unwrap();
    let split = blocked_splits(12, 1).unwrap().remove(0);
    let perturbed: Vec<RangePanel> = g.panels.iter().map(|p| perturb(p, split.test.clone(), 1.7)).collect();
    for family in [Family::Ar, Family::PlainDnn, Family::TwoLstm, Family::PPairs] {
        let mut spec = tiny(family);
        spec.hyper.pairs = g.panels.len();
        let a = fit(&spec, &MarketData::new(&g.panels), 0, &split).unwrap();
        let b = fit(&spec, &MarketData::new(&perturbed), 0, &split).unwrap();
        assert_eq!(a, b, "{}", family.tag());
    }
}
