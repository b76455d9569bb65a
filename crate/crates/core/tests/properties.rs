use proptest::prelude::*;

use uq_perceiver::metrics::{apply_temperature, brier, ece, nll, EvalBatch};
use uq_perceiver::params::ParamStore;
use uq_perceiver::schedule::LrSchedule;
use uq_perceiver::strategies::swa_update;
use uq_perceiver::tensor::Tensor;

fn logits_and_labels() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (2usize..6, 1usize..30).prop_flat_map(|(k, n)| {
        (
            prop::collection::vec(prop::collection::vec(-30.0f64..30.0, k), n),
            prop::collection::vec(0..k, n),
        )
    })
}

proptest! {
    #[test]
    fn scores_stay_in_range((logits, labels) in logits_and_labels(), t in 0.05f64..20.0) {
        let probs = apply_temperature(&logits, t);
        for row in &probs {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let b = EvalBatch::new(probs, labels).unwrap();
        let e = ece(&b, 15).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert!((0.0..=2.0).contains(&brier(&b)));
        let n = nll(&b);
        prop_assert!(n >= 0.0 && n <= -(1e-12f64).ln() + 1e-9);
    }

    #[test]
    fn schedules_stay_between_their_bounds(
        total in 1usize..200,
        cycles in 1usize..10,
        hi in 1e-5f64..1.0,
        frac in 0.0f64..1.0,
    ) {
        let lo = hi * frac;
        let cycles = cycles.min(total);
        for s in [
            LrSchedule::snapshot_cosine(hi, total, cycles).unwrap(),
            LrSchedule::swa_linear(hi, lo, total, cycles).unwrap(),
            LrSchedule::fast_cyclic(hi, lo, total, cycles).unwrap(),
        ] {
            for t in 1..=total {
                let lr = s.lr_at(t).unwrap();
                prop_assert!(lr >= 0.0 && lr <= hi * (1.0 + 1e-12), "{} at {t}: {lr}", s.kind);
            }
            prop_assert!(s.lr_at(0).is_err());
            prop_assert!(s.lr_at(total + 1).is_err());
        }
    }

    #[test]
    fn running_average_equals_mean(values in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let store = |v: f64| {
            let mut s = ParamStore::new();
            s.insert("w", Tensor::scalar(v)).unwrap();
            s
        };
        let mut avg = store(values[0]);
        for (n, &v) in values.iter().enumerate().skip(1) {
            avg = swa_update(&avg, n, &store(v)).unwrap();
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let got = avg.require("w").unwrap().data()[0];
        prop_assert!((got - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
    }
}
