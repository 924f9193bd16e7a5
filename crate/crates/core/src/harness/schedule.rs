/// Learning rate for update `step` (1-based): linear warmup to `peak` at
/// `warmup`, then linear decay reaching zero at `max_steps` (or constant when
/// `linear_decay` is false).
pub fn learning_rate(step: u64, peak: f64, warmup: u64, max_steps: u64, linear_decay: bool) -> f64 {
    if step < warmup {
        return peak * step as f64 / warmup as f64;
    }
    if !linear_decay {
        return peak;
    }
    if max_steps <= warmup || step >= max_steps {
        return if step < max_steps { peak } else { 0.0 };
    }
    peak * (max_steps - step) as f64 / (max_steps - warmup) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn probe_steps() {
        let lr = |t| learning_rate(t, 1e-3, 100, 1000, true);
        assert_eq!(lr(0), 0.0);
        assert_eq!(lr(50), 5e-4);
        assert_eq!(lr(100), 1e-3);
        assert_eq!(lr(550), 5e-4);
        assert_eq!(lr(1000), 0.0);
    }

    #[test]
    fn constant_after_warmup_without_decay() {
        assert_eq!(learning_rate(500, 2.0, 10, 1000, false), 2.0);
    }

    proptest! {
        #[test]
        fn piecewise_linear(peak in 1e-6f64..1.0, warmup in 1u64..200, extra in 1u64..500) {
            let max = warmup + extra;
            let lr = |t| learning_rate(t, peak, warmup, max, true);
            prop_assert!((lr(warmup) - peak).abs() <= 1e-15 * peak);
            prop_assert!(lr(max) == 0.0);
            for t in 1..max {
                // second differences vanish away from the peak
                if t + 1 < warmup || t > warmup {
                    let curvature = lr(t - 1) - 2.0 * lr(t) + lr(t + 1);
                    prop_assert!(curvature.abs() <= 1e-12 * peak);
                }
                prop_assert!(lr(t) <= peak * (1.0 + 1e-15));
            }
        }
    }
}
